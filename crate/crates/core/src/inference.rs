//! Surrogate tests and the mixed causality graph.
//!
//! For every block the measure is evaluated once on the data and once per
//! surrogate, where a surrogate permutes only the target-present rows. The
//! threshold is the empirical `1 - alpha/n_tests` quantile of all surrogate
//! values; an edge is decided when more than half the blocks exceed it.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::measures::{embed, evaluate_embedding, MeasureKind, MeasureSpec, MeasureValue};
use crate::numeric::{derive_seed, fnv1a};
use crate::series::{BlockLabel, Embedding, PointCloud, SampleMatrix};

/// Edges are decided when the detect rate is strictly above this.
pub const DECISION_RATE: f64 = 0.5;

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePolicy {
    #[serde(default = "one")]
    pub n_surrogates_per_block: usize,
    pub seed: u64,
    pub alpha: f64,
    #[serde(default = "one")]
    pub n_tests: usize,
}

impl SurrogatePolicy {
    pub fn new(seed: u64, alpha: f64, n_tests: usize) -> Result<Self> {
        let p = Self { n_surrogates_per_block: 1, seed, alpha, n_tests };
        p.validate()?;
        Ok(p)
    }

    pub fn with_surrogates(mut self, n: usize) -> Self {
        self.n_surrogates_per_block = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if self.n_tests == 0 || self.n_surrogates_per_block == 0 {
            return Err(Error::InvalidArgument("n_tests and n_surrogates_per_block must be positive".into()));
        }
        Ok(())
    }

    /// Quantile level of the threshold, `1 - alpha / n_tests`.
    pub fn level(&self) -> f64 {
        1.0 - self.alpha / self.n_tests as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTestResult {
    pub spec: MeasureSpec,
    /// One value per block.
    pub observed: Vec<MeasureValue>,
    /// `n_surrogates_per_block` values per block, block-major.
    pub surrogate: Vec<MeasureValue>,
    pub threshold: f64,
    pub detect_rate: f64,
    pub decision: bool,
}

impl PairTestResult {
    pub fn observed_values(&self) -> Vec<f64> {
        self.observed.iter().map(|v| v.value).collect()
    }

    pub fn surrogate_values(&self) -> Vec<f64> {
        self.surrogate.iter().map(|v| v.value).collect()
    }
}

/// Type-1 empirical quantile: the smallest sample `v` with `F_n(v) >= p`.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData { required: 1, available: 0 });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("quantile level {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if n <= 3 || perm.iter().enumerate().any(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Copy of `cloud` with the B block rows shuffled.
pub fn make_surrogate(cloud: &PointCloud, seed: u64) -> PointCloud {
    let perm = random_permutation(cloud.n_points(), seed);
    cloud.with_permuted_block(BlockLabel::B, &perm).expect("permutation matches the cloud")
}

/// Surrogate of a whole embedding. Both clouds of a paired embedding share the
/// target-present column, so they receive the same permutation.
pub fn surrogate_embedding(emb: &Embedding, seed: u64) -> Embedding {
    let perm = random_permutation(emb.n_points(), seed);
    let permute = |c: &PointCloud| c.with_permuted_block(BlockLabel::B, &perm).expect("permutation matches the cloud");
    match emb {
        Embedding::Single(c) => Embedding::Single(permute(c)),
        Embedding::Pair { with_source, without_source } => {
            Embedding::Pair { with_source: permute(with_source), without_source: permute(without_source) }
        }
    }
}

fn surrogate_seed(policy: &SurrogatePolicy, spec: &MeasureSpec, block: usize, index: usize) -> u64 {
    derive_seed(policy.seed, &[fnv1a(spec.label().as_bytes()), block as u64, index as u64])
}

type BlockOutcome = (MeasureValue, Vec<MeasureValue>);

fn run_block(data: &SampleMatrix, block: usize, spec: &MeasureSpec, policy: &SurrogatePolicy) -> Result<BlockOutcome> {
    let ctx = |e: Error| e.context(format!("{} on block {block}", spec.label()));
    let emb = embed(data, spec).map_err(ctx)?;
    let observed = evaluate_embedding(&emb, spec).map_err(ctx)?;
    let surrogates = (0..policy.n_surrogates_per_block)
        .map(|s| {
            let sur = surrogate_embedding(&emb, surrogate_seed(policy, spec, block, s));
            evaluate_embedding(&sur, spec).map_err(ctx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((observed, surrogates))
}

fn summarize(spec: &MeasureSpec, policy: &SurrogatePolicy, outcomes: Vec<BlockOutcome>) -> Result<PairTestResult> {
    let mut observed = Vec::with_capacity(outcomes.len());
    let mut surrogate = Vec::with_capacity(outcomes.len() * policy.n_surrogates_per_block);
    for (o, s) in outcomes {
        observed.push(o);
        surrogate.extend(s);
    }
    let null: Vec<f64> = surrogate.iter().map(|v| v.value).collect();
    let threshold = empirical_quantile(&null, policy.level())?;
    let hits = observed.iter().filter(|v| v.value > threshold).count();
    let detect_rate = hits as f64 / observed.len() as f64;
    Ok(PairTestResult {
        spec: spec.clone(),
        observed,
        surrogate,
        threshold,
        detect_rate,
        decision: detect_rate > DECISION_RATE,
    })
}

fn check_blocks(blocks: &[SampleMatrix]) -> Result<()> {
    if blocks.len() < 2 {
        return Err(Error::InsufficientData { required: 2, available: blocks.len() });
    }
    Ok(())
}

/// Surrogate test of one measure over a set of blocks. Blocks run on the
/// current rayon pool; the result does not depend on the pool size.
pub fn test_pair(blocks: &[SampleMatrix], spec: &MeasureSpec, policy: &SurrogatePolicy) -> Result<PairTestResult> {
    policy.validate()?;
    spec.validate()?;
    check_blocks(blocks)?;
    let outcomes =
        blocks.par_iter().enumerate().map(|(b, data)| run_block(data, b, spec, policy)).collect::<Result<Vec<_>>>()?;
    summarize(spec, policy, outcomes)
}

/// Runs several tests at once, parallel over every (spec, block) task.
pub fn test_many(
    blocks: &[SampleMatrix],
    specs: &[MeasureSpec],
    policy: &SurrogatePolicy,
) -> Result<Vec<PairTestResult>> {
    policy.validate()?;
    check_blocks(blocks)?;
    for s in specs {
        s.validate()?;
    }
    let nb = blocks.len();
    let mut flat = (0..specs.len() * nb)
        .into_par_iter()
        .map(|task| run_block(&blocks[task % nb], task % nb, &specs[task / nb], policy))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs.iter().rev() {
        let tail = flat.split_off(flat.len() - nb);
        out.push(summarize(spec, policy, tail)?);
    }
    out.reverse();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstantMode {
    #[default]
    Conditional,
    Unconditional,
}

impl InstantMode {
    pub fn measure(self) -> MeasureKind {
        match self {
            InstantMode::Conditional => MeasureKind::CondInstantExchange,
            InstantMode::Unconditional => MeasureKind::UncondInstantExchange,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalityGraph {
    pub vertices: Vec<String>,
    /// `(from, to)`
    pub directed_edges: BTreeSet<(String, String)>,
    /// Ordered by vertex position.
    pub undirected_edges: BTreeSet<(String, String)>,
    pub instant_mode: InstantMode,
}

impl CausalityGraph {
    pub fn new(vertices: Vec<String>, instant_mode: InstantMode) -> Self {
        Self { vertices, directed_edges: BTreeSet::new(), undirected_edges: BTreeSet::new(), instant_mode }
    }

    fn position(&self, v: &str) -> Result<usize> {
        self.vertices.iter().position(|x| x == v).ok_or_else(|| Error::UnknownChannel(v.to_string()))
    }

    pub fn add_directed(&mut self, from: &str, to: &str) -> Result<()> {
        self.position(from)?;
        self.position(to)?;
        if from == to {
            return Err(Error::ChannelCollision(from.to_string()));
        }
        self.directed_edges.insert((from.to_string(), to.to_string()));
        Ok(())
    }

    pub fn add_undirected(&mut self, a: &str, b: &str) -> Result<()> {
        let (i, j) = (self.position(a)?, self.position(b)?);
        if i == j {
            return Err(Error::ChannelCollision(a.to_string()));
        }
        let (a, b) = if i < j { (a, b) } else { (b, a) };
        self.undirected_edges.insert((a.to_string(), b.to_string()));
        Ok(())
    }

    pub fn has_directed(&self, from: &str, to: &str) -> bool {
        self.directed_edges.contains(&(from.to_string(), to.to_string()))
    }

    pub fn has_undirected(&self, a: &str, b: &str) -> bool {
        let key = |x: &str, y: &str| (x.to_string(), y.to_string());
        self.undirected_edges.contains(&key(a, b)) || self.undirected_edges.contains(&key(b, a))
    }

    /// Graphviz text: `->` for dynamical edges, dashed `--` for instantaneous ones.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph causality {\n");
        for v in &self.vertices {
            let _ = writeln!(s, "  \"{v}\";");
        }
        for (a, b) in &self.directed_edges {
            let _ = writeln!(s, "  \"{a}\" -> \"{b}\";");
        }
        for (a, b) in &self.undirected_edges {
            let _ = writeln!(s, "  \"{a}\" -- \"{b}\" [style=dashed];");
        }
        s.push_str("}\n");
        s
    }
}

/// Specs used by [`infer_graph`]: conditional TE for each ordered pair, then
/// the instantaneous measure for each unordered pair.
pub fn graph_specs(
    channels: &[&str],
    lag: usize,
    est: &EstimatorConfig,
    instant_mode: InstantMode,
) -> Result<Vec<MeasureSpec>> {
    if channels.len() < 2 {
        return Err(Error::InsufficientData { required: 2, available: channels.len() });
    }
    let rest = |skip: &[&str]| channels.iter().copied().filter(|c| !skip.contains(c)).collect::<Vec<_>>();
    let kind_for = |base: MeasureKind, side_empty: bool| match (base, side_empty) {
        (MeasureKind::CondTransferEntropy, true) => MeasureKind::TransferEntropy,
        (MeasureKind::CondInstantExchange | MeasureKind::UncondInstantExchange, true) => MeasureKind::InstantExchange,
        (k, _) => k,
    };
    let mut specs = Vec::new();
    for &s in channels {
        for &t in channels {
            if s != t {
                let side = rest(&[s, t]);
                let kind = kind_for(MeasureKind::CondTransferEntropy, side.is_empty());
                specs.push(MeasureSpec::new(kind, t, s, &side)?.with_lag(lag).with_estimator(*est));
            }
        }
    }
    for (i, &a) in channels.iter().enumerate() {
        for &b in &channels[i + 1..] {
            let side = rest(&[a, b]);
            let kind = kind_for(instant_mode.measure(), side.is_empty());
            specs.push(MeasureSpec::new(kind, b, a, &side)?.with_lag(lag).with_estimator(*est));
        }
    }
    Ok(specs)
}

/// Tests every pair and assembles the decided graph with the full table.
pub fn infer_graph(
    blocks: &[SampleMatrix],
    channels: &[&str],
    policy: &SurrogatePolicy,
    lag: usize,
    est: &EstimatorConfig,
    instant_mode: InstantMode,
) -> Result<(CausalityGraph, Vec<PairTestResult>)> {
    let specs = graph_specs(channels, lag, est, instant_mode)?;
    let table = test_many(blocks, &specs, policy)?;
    let mut graph = CausalityGraph::new(channels.iter().map(|c| c.to_string()).collect(), instant_mode);
    for r in table.iter().filter(|r| r.decision) {
        if r.spec.kind.is_instantaneous() {
            graph.add_undirected(&r.spec.source, &r.spec.target)?;
        } else {
            graph.add_directed(&r.spec.source, &r.spec.target)?;
        }
    }
    Ok((graph, table))
}
