use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dircause::gaussian_oracle::{check_identities, oracle_measure};
use dircause::inference::{infer_graph, test_many, DECISION_RATE};
use dircause::synth::{self, ChainParams, FourDParams, GroundTruth, RNG_DESCRIPTION};
use dircause::{GaussianVarModel, MeasureKind, MeasureSpec, SampleMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{load_data, DataSource, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::report::{graph_dot, histogram_csv, Metadata, Report, Run, TestRow};

pub const SOFTWARE: &str = "dircause";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const CHAIN_BINDING_NOTE: &str =
    "chain: self couplings a = 0.2, b = 0.5, c = 0.8 bind a to z (field `d`), b to x, c to y";

#[derive(Debug, Parser)]
#[command(name = "dircause", version, about = "Directed-information causality measures and graph inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic record with its ground truth.
    Simulate(SimulateArgs),
    /// Run the surrogate tests of an experiment config.
    Infer(InferArgs),
    /// Exact measure values for a Gaussian VAR(1) model.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Model {
    Chain,
    FourD,
    Var1,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Number of samples after burn-in.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with generator parameters (chain and four_d).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Noise correlations of the four-channel system, `rho1,rho2,rho3`.
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    /// Model JSON (`{"A": [[..]], "Q": [[..]], "names": [..]}`) for var1.
    #[arg(long)]
    pub var1_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    pub config: PathBuf,
    /// Rerun the battery for each neighbor order.
    #[arg(long, value_delimiter = ',')]
    pub k_sweep: Option<Vec<usize>>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "DIRCAUSE_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Overwrite results of a different config.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Model JSON file.
    #[arg(long, conflicts_with = "random")]
    pub model: Option<PathBuf>,
    /// Use a random stable model instead of a file.
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Measure kind; all kinds when omitted.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long, requires = "source")]
    pub target: Option<String>,
    #[arg(long, requires = "target")]
    pub source: Option<String>,
    /// Side channels; defaults to every other channel.
    #[arg(long, value_delimiter = ',')]
    pub side: Option<Vec<String>>,
    #[arg(long, default_value_t = 2)]
    pub lag: usize,
    #[arg(long, default_value_t = 10)]
    pub ar_order: usize,
    /// Check the directed-information identities.
    #[arg(long)]
    pub identities: bool,
    /// Longest horizon of the sum identity.
    #[arg(long, default_value_t = 5)]
    pub horizon: usize,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Infer(a) => cmd_infer(&a, out),
        Command::Oracle(a) => cmd_oracle(&a, out),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn echo(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> CliResult<()> {
    writeln!(out, "{line}").map_err(|e| CliError::io("<stdout>", e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json { path: path.to_path_buf(), source: e })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Contents of `config.json` written by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationEcho {
    pub software: String,
    pub version: String,
    pub config_hash: String,
    pub rng: String,
    pub burn_in: usize,
    pub data: DataSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub config_hash: String,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

fn simulation_source(a: &SimulateArgs) -> CliResult<DataSource> {
    if a.rho.is_some() && a.model != Model::FourD {
        return Err(CliError::Usage("--rho applies to --model four_d only".into()));
    }
    if a.var1_model.is_some() != (a.model == Model::Var1) {
        return Err(CliError::Usage("--var1-model is required for, and only for, --model var1".into()));
    }
    Ok(match a.model {
        Model::Chain => {
            let mut params: ChainParams = match &a.params {
                Some(p) => read_json(p)?,
                None => ChainParams::default(),
            };
            params.n = a.n.unwrap_or(params.n);
            params.seed = a.seed.unwrap_or(params.seed);
            DataSource::Chain { params }
        }
        Model::FourD => {
            let mut params: FourDParams = match &a.params {
                Some(p) => read_json(p)?,
                None => FourDParams::default(),
            };
            params.n = a.n.unwrap_or(params.n);
            params.seed = a.seed.unwrap_or(params.seed);
            if let Some(r) = &a.rho {
                if r.len() != 3 {
                    return Err(CliError::Usage(format!("--rho takes 3 comma-separated values, got {}", r.len())));
                }
                (params.rho1, params.rho2, params.rho3) = (r[0], r[1], r[2]);
            }
            DataSource::FourD { params }
        }
        Model::Var1 => {
            if a.params.is_some() {
                return Err(CliError::Usage("--params does not apply to --model var1".into()));
            }
            let model = a.var1_model.clone().expect("checked above");
            let model = std::path::absolute(&model).map_err(|e| CliError::io(&model, e))?;
            DataSource::Var1 { model, n: a.n.unwrap_or(100_000), seed: a.seed.unwrap_or(0) }
        }
    })
}

fn simulation_truth(source: &DataSource) -> CliResult<GroundTruth> {
    Ok(match source {
        DataSource::Chain { params } => {
            params.validate()?;
            params.ground_truth()
        }
        DataSource::FourD { params } => params.ground_truth()?,
        DataSource::Var1 { model, .. } => {
            let m = GaussianVarModel::read_path(model).map_err(|e| e.context(model.display().to_string()))?;
            synth::var1_ground_truth(&m)?
        }
        DataSource::Csv { .. } => unreachable!("simulate never reads CSV"),
    })
}

/// Writes `data.csv`, `truth.json` and `config.json` to `--out`.
pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let source = simulation_source(a)?;
    // Checks parameters (noise covariance, stability) before generating.
    let truth = simulation_truth(&source)?;
    let canonical = serde_json::to_string(&source).expect("source serializes");
    let hash = sha256_hex(canonical.as_bytes());
    let notes = match &source {
        DataSource::Chain { .. } => vec![CHAIN_BINDING_NOTE.to_string()],
        _ => Vec::new(),
    };

    let data = load_data(&source)?;
    create_dir(&a.out)?;
    let mut csv = format!("# config_hash: {hash}\n").into_bytes();
    data.write_csv(&mut csv)?;
    let csv_path = a.out.join("data.csv");
    std::fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path, e))?;

    let truth_file = TruthFile { config_hash: hash.clone(), truth };
    write_file(&a.out.join("truth.json"), &(serde_json::to_string_pretty(&truth_file).expect("serializes") + "\n"))?;

    let echo_file = SimulationEcho {
        software: SOFTWARE.into(),
        version: VERSION.into(),
        config_hash: hash.clone(),
        rng: RNG_DESCRIPTION.into(),
        burn_in: synth::BURN_IN,
        data: source,
        notes,
    };
    write_file(&a.out.join("config.json"), &(serde_json::to_string_pretty(&echo_file).expect("serializes") + "\n"))?;

    echo(out, format_args!("wrote {} rows x {} channels to {}", data.len(), data.n_channels(), a.out.display()))?;
    echo(out, format_args!("config_hash {hash}"))?;
    Ok(())
}

fn thread_pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build a pool of {threads} threads: {e}")))
}

fn check_output_dir(dir: &Path, hash: &str, force: bool) -> CliResult<()> {
    let report = dir.join("report.json");
    if force || !report.exists() {
        return Ok(());
    }
    let value: serde_json::Value = read_json(&report)?;
    let found = value.pointer("/metadata/config_hash").and_then(|v| v.as_str()).unwrap_or("<none>");
    if found != hash {
        return Err(CliError::OutputConflict {
            dir: dir.to_path_buf(),
            found: found.to_string(),
            expected: hash.into(),
        });
    }
    Ok(())
}

fn prepare_blocks(cfg: &ExperimentConfig, data: &SampleMatrix) -> CliResult<Vec<SampleMatrix>> {
    let blocks = data.split_blocks(cfg.blocks.n_blocks, cfg.blocks.block_len)?;
    Ok(if cfg.standardize { blocks.iter().map(SampleMatrix::zscored).collect() } else { blocks })
}

/// Runs the measure list and the graph battery once per k.
pub fn execute(cfg: &ExperimentConfig, k_sweep: &[usize], hash: &str) -> CliResult<Report> {
    let data = load_data(&cfg.data)?;
    cfg.check_channels(&data)?;
    let blocks = prepare_blocks(cfg, &data)?;
    let ks: Vec<Option<usize>> =
        if k_sweep.is_empty() { vec![None] } else { k_sweep.iter().copied().map(Some).collect() };

    let mut runs = Vec::new();
    for k in &ks {
        let measures: Vec<MeasureSpec> = cfg
            .measures
            .iter()
            .map(|m| match k {
                Some(k) => m.clone().with_k(*k),
                None => m.clone(),
            })
            .collect();
        let mut tests: Vec<TestRow> = Vec::new();
        if !measures.is_empty() {
            log::info!("testing {} measures over {} blocks", measures.len(), blocks.len());
            let results = test_many(&blocks, &measures, &cfg.policy)?;
            tests.extend(results.iter().map(TestRow::from_result));
        }
        let graph = match &cfg.graph {
            Some(g) => {
                let mut est = g.est;
                if let Some(k) = k {
                    est.k = *k;
                }
                let channels: Vec<&str> = g.channels.iter().map(String::as_str).collect();
                log::info!("inferring graph over {} channels with k = {}", channels.len(), est.k);
                let (graph, table) = infer_graph(&blocks, &channels, &cfg.policy, g.lag, &est, cfg.instant_mode)?;
                tests.extend(table.iter().map(TestRow::from_result));
                Some(graph)
            }
            None => None,
        };
        let run_k = match k {
            Some(k) => *k,
            None => cfg.graph.as_ref().map(|g| g.est.k).or_else(|| cfg.measures.first().map(|m| m.est.k)).unwrap_or(5),
        };
        runs.push(Run { k: run_k, graph, tests });
    }

    let mut notes = Vec::new();
    if cfg.standardize {
        notes.push("blocks z-scored before embedding".to_string());
    }
    if let DataSource::Chain { .. } = cfg.data {
        notes.push(CHAIN_BINDING_NOTE.to_string());
    }
    let metadata = Metadata {
        software: SOFTWARE.into(),
        version: VERSION.into(),
        config_hash: hash.into(),
        k_values: runs.iter().map(|r| r.k).collect(),
        lag: cfg.graph.as_ref().map(|g| g.lag),
        alpha: cfg.policy.alpha,
        n_tests: cfg.policy.n_tests,
        n_surrogates_per_block: cfg.policy.n_surrogates_per_block,
        surrogate_seed: cfg.policy.seed,
        data_seed: cfg.data_seed(),
        rng: RNG_DESCRIPTION.into(),
        n_blocks: cfg.blocks.n_blocks,
        block_len: cfg.blocks.block_len,
        decision_rate: DECISION_RATE,
        notes,
    };
    Ok(Report { metadata, runs })
}

/// Writes `report.json`, the graph DOT file(s) and `histograms/*.csv`.
pub fn write_report(report: &Report, dir: &Path) -> CliResult<()> {
    let hash = &report.metadata.config_hash;
    create_dir(dir)?;
    let hist = dir.join("histograms");
    create_dir(&hist)?;
    let sweep = report.runs.len() > 1;
    let mut stems = HashSet::new();
    for run in &report.runs {
        if let Some(g) = &run.graph {
            let name = if sweep { format!("graph_k{}.dot", run.k) } else { "graph.dot".to_string() };
            write_file(&dir.join(name), &graph_dot(g, hash))?;
        }
        for row in &run.tests {
            let base = row.file_stem();
            let mut stem = base.clone();
            let mut n = 1;
            while !stems.insert(stem.clone()) {
                n += 1;
                stem = format!("{base}_{n}");
            }
            write_file(&hist.join(format!("{stem}.csv")), &histogram_csv(row, hash))?;
        }
    }
    // Written last so an interrupted run leaves no report claiming completion.
    write_file(&dir.join("report.json"), &report.to_json())
}

pub fn cmd_infer(a: &InferArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = ExperimentConfig::read_path(&a.config)?;
    cfg.validate()?;
    let k_sweep = a.k_sweep.clone().unwrap_or_default();
    if k_sweep.contains(&0) {
        return Err(CliError::Usage("--k-sweep values must be positive".into()));
    }
    let hash = cfg.hash(&k_sweep);
    check_output_dir(&cfg.output, &hash, a.force)?;

    let pool = thread_pool(a.threads)?;
    let report = pool.install(|| execute(&cfg, &k_sweep, &hash))?;
    write_report(&report, &cfg.output)?;

    for run in &report.runs {
        echo(out, format_args!("k = {}", run.k))?;
        for t in &run.tests {
            echo(
                out,
                format_args!(
                    "  {:<28} rate {:.2} threshold {:.4} {}",
                    t.label,
                    t.detect_rate,
                    t.threshold,
                    if t.decision { "DETECTED" } else { "-" }
                ),
            )?;
        }
    }
    echo(out, format_args!("wrote {}", cfg.output.join("report.json").display()))?;
    Ok(())
}

fn oracle_model(a: &OracleArgs) -> CliResult<GaussianVarModel> {
    match (&a.model, a.random) {
        (Some(p), false) => Ok(GaussianVarModel::read_path(p).map_err(|e| e.context(p.display().to_string()))?),
        (None, true) => {
            if a.dim < 2 {
                return Err(CliError::Usage("--dim must be at least 2".into()));
            }
            Ok(GaussianVarModel::random_stable(a.dim, a.seed))
        }
        _ => Err(CliError::Usage("pass either --model PATH or --random".into())),
    }
}

fn oracle_specs(a: &OracleArgs, m: &GaussianVarModel) -> CliResult<Vec<MeasureSpec>> {
    let kinds: Vec<MeasureKind> = match &a.kind {
        Some(k) => vec![MeasureKind::from_name(k)?],
        None => MeasureKind::ALL.to_vec(),
    };
    let names = m.names();
    let pairs: Vec<(String, String)> = match (&a.target, &a.source) {
        (Some(t), Some(s)) => vec![(t.clone(), s.clone())],
        _ => names
            .iter()
            .flat_map(|t| names.iter().filter(move |s| *s != t).map(move |s| (t.clone(), s.clone())))
            .collect(),
    };
    let mut specs = Vec::new();
    for (t, s) in &pairs {
        let side: Vec<&str> = match &a.side {
            Some(side) => side.iter().map(String::as_str).collect(),
            None => names.iter().map(String::as_str).filter(|c| c != t && c != s).collect(),
        };
        for &kind in &kinds {
            let spec_side: &[&str] = if kind.is_conditional() { &side } else { &[] };
            if kind.is_conditional() && side.is_empty() {
                if a.kind.is_some() {
                    return Err(CliError::Usage(format!("{kind} needs at least one side channel")));
                }
                continue;
            }
            let lag = if kind.is_geweke() { a.ar_order } else { a.lag };
            let mut spec = MeasureSpec::new(kind, t, s, spec_side)?.with_lag(lag);
            spec.ar_order = a.ar_order;
            specs.push(spec);
        }
    }
    Ok(specs)
}

pub fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> CliResult<()> {
    let m = oracle_model(a)?;
    echo(out, format_args!("model: {} channels, spectral radius {:.6}", m.dim(), m.spectral_radius()))?;
    if !a.identities || a.kind.is_some() || a.target.is_some() {
        for spec in oracle_specs(a, &m)? {
            let v = oracle_measure(&m, &spec).map_err(|e| e.context(spec.label()))?;
            echo(out, format_args!("{:<32} {:.12e}", spec.label(), v))?;
        }
    }
    if a.identities {
        let r = check_identities(&m, a.lag, a.horizon)?;
        echo(out, format_args!("identity residuals (window {}, horizon {}):", a.lag, a.horizon))?;
        echo(out, format_args!("  decomposition      {:.3e}", r.decomposition))?;
        echo(out, format_args!("  past_conditioning  {:.3e}", r.past_conditioning))?;
        echo(out, format_args!("  sum_identity       {:.3e}", r.sum_identity))?;
        echo(out, format_args!("  max                {:.3e}", r.max()))?;
    }
    Ok(())
}
