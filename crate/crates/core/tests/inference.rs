use dircause::gaussian_oracle::GaussianVarModel;
use dircause::inference::{infer_graph, test_many, test_pair, InstantMode, SurrogatePolicy};
use dircause::measures::{MeasureKind, MeasureSpec};
use dircause::series::SampleMatrix;
use dircause::synth::gen_var1;
use dircause::EstimatorConfig;

fn white(d: usize, n: usize, seed: u64) -> SampleMatrix {
    let m = GaussianVarModel::new(nalgebra::DMatrix::zeros(d, d), nalgebra::DMatrix::identity(d, d), vec![]).unwrap();
    gen_var1(&m, n, seed).unwrap()
}

fn coupled(c: f64) -> GaussianVarModel {
    GaussianVarModel::from_rows(
        &[vec![0.5, 0.0], vec![c, 0.5]],
        &[vec![1.0, 0.0], vec![0.0, 1.0]],
        vec!["x".into(), "y".into()],
    )
    .unwrap()
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let blocks = white(3, 4000, 1).split_blocks(8, 500).unwrap();
    let policy = SurrogatePolicy::new(9, 0.1, 6).unwrap().with_surrogates(2);
    let est = EstimatorConfig::default();
    let run = |threads| {
        pool(threads).install(|| infer_graph(&blocks, &["x0", "x1", "x2"], &policy, 2, &est, InstantMode::Conditional))
    };
    let (g1, t1) = run(1).unwrap();
    let (g3, t3) = run(3).unwrap();
    assert_eq!(g1, g3);
    assert_eq!(t1, t3);
    assert_eq!(t1.len(), 9);
}

#[test]
fn batch_and_single_tests_agree() {
    let blocks = white(2, 2000, 2).split_blocks(4, 500).unwrap();
    let policy = SurrogatePolicy::new(3, 0.1, 2).unwrap();
    let specs = vec![
        MeasureSpec::new(MeasureKind::TransferEntropy, "x1", "x0", &[]).unwrap(),
        MeasureSpec::new(MeasureKind::InstantExchange, "x1", "x0", &[]).unwrap(),
        MeasureSpec::new(MeasureKind::GewekeDynamic, "x1", "x0", &[]).unwrap(),
    ];
    let batch = test_many(&blocks, &specs, &policy).unwrap();
    for (spec, b) in specs.iter().zip(&batch) {
        assert_eq!(&test_pair(&blocks, spec, &policy).unwrap(), b);
    }
}

#[test]
fn threshold_and_rate_follow_their_definitions() {
    let blocks = white(2, 6000, 3).split_blocks(12, 500).unwrap();
    let policy = SurrogatePolicy::new(4, 0.2, 1).unwrap().with_surrogates(3);
    let spec = MeasureSpec::new(MeasureKind::TransferEntropy, "x1", "x0", &[]).unwrap();
    let r = test_pair(&blocks, &spec, &policy).unwrap();
    assert_eq!(r.observed.len(), 12);
    assert_eq!(r.surrogate.len(), 36);
    let mut null = r.surrogate_values();
    null.sort_by(f64::total_cmp);
    // ceil(0.8 * 36) = 29th smallest
    assert_eq!(r.threshold, null[28]);
    let above = r.observed_values().iter().filter(|&&v| v > r.threshold).count();
    assert_eq!(r.detect_rate, above as f64 / 12.0);
    assert_eq!(r.decision, r.detect_rate > 0.5);
}

#[test]
fn null_exceedance_is_near_the_nominal_level() {
    let blocks = white(2, 80 * 400, 4).split_blocks(80, 400).unwrap();
    let policy = SurrogatePolicy::new(5, 0.2, 1).unwrap().with_surrogates(4);
    let spec = MeasureSpec::new(MeasureKind::TransferEntropy, "x1", "x0", &[]).unwrap();
    let r = test_pair(&blocks, &spec, &policy).unwrap();
    // binomial sd at p = 0.2, n = 80 is 0.045
    assert!((r.detect_rate - 0.2).abs() < 0.15, "{}", r.detect_rate);
    assert!(!r.decision);
}

#[test]
fn too_few_blocks_are_rejected() {
    let blocks = white(2, 500, 6).split_blocks(1, 500).unwrap();
    let policy = SurrogatePolicy::new(1, 0.1, 1).unwrap();
    let spec = MeasureSpec::new(MeasureKind::TransferEntropy, "x1", "x0", &[]).unwrap();
    assert!(test_pair(&blocks, &spec, &policy).is_err());
}

#[test]
fn detect_rate_grows_with_coupling() {
    // common random numbers: one seed for every coupling strength
    let policy = SurrogatePolicy::new(7, 0.1, 1).unwrap().with_surrogates(2);
    let spec = MeasureSpec::new(MeasureKind::TransferEntropy, "y", "x", &[]).unwrap();
    let mut last = -1.0;
    for c in [0.0, 0.15, 0.3, 0.6] {
        let blocks = gen_var1(&coupled(c), 10 * 500, 8).unwrap().split_blocks(10, 500).unwrap();
        let rate = test_pair(&blocks, &spec, &policy).unwrap().detect_rate;
        assert!(rate >= last, "coupling {c}: {rate} < {last}");
        last = rate;
    }
    assert_eq!(last, 1.0);
}

#[test]
fn coupled_pair_gives_one_arrow() {
    let blocks = gen_var1(&coupled(0.6), 10 * 800, 9).unwrap().split_blocks(10, 800).unwrap();
    let policy = SurrogatePolicy::new(1, 0.1, 2).unwrap();
    let (g, table) =
        infer_graph(&blocks, &["x", "y"], &policy, 2, &EstimatorConfig::default(), InstantMode::Unconditional).unwrap();
    assert!(g.has_directed("x", "y"));
    assert!(!g.has_directed("y", "x"));
    assert!(g.undirected_edges.is_empty());
    assert_eq!(table.len(), 3);
}
