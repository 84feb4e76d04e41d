//! k-nearest-neighbor information estimators.
//!
//! * [`entropy_knn`]: Leonenko's estimator
//!   `H = (1/M) Σ ln((M-1) C_k V_n d_i^n)` with `C_k = exp(-ψ(k))`.
//! * [`mutual_information_knn`]: the KSG estimator
//!   `I = ψ(k) + ψ(M) - <ψ(n_a+1) + ψ(n_b+1)>`.
//! * [`cmi_knn`]: the Frenzel-Pompe estimator
//!   `I = ψ(k) - <ψ(n_ac+1) + ψ(n_bc+1) - ψ(n_c+1)>`, or the plug-in sum of
//!   four entropies.
//!
//! In the counting estimators `ε_i` is the k-th neighbor distance in the joint
//! max-metric space and the `n_*` are strict counts within `ε_i` in the
//! marginal subspaces. All values are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::{CountMode, Metric, NeighborIndex, PointSet};
use crate::numeric::compensated_mean;
use crate::series::{BlockLabel, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CmiMode {
    #[default]
    DigammaCounts,
    FourEntropies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub k: usize,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub cmi_mode: CmiMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { k: 5, metric: Metric::Chebyshev, cmi_mode: CmiMode::DigammaCounts }
    }
}

impl EstimatorConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub k: usize,
    pub n_points: usize,
}

/// Digamma function for positive arguments.
///
/// Shifts the argument above 10 with `ψ(x) = ψ(x+1) - 1/x`, then applies the
/// asymptotic series through the `x^-14` term.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("digamma needs a positive finite argument, got {x}")));
    }
    Ok(digamma_pos(x))
}

#[inline]
pub(crate) fn digamma_pos(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let t = inv * inv;
    let series = t
        * (1.0 / 12.0
            - t * (1.0 / 120.0
                - t * (1.0 / 252.0 - t * (1.0 / 240.0 - t * (1.0 / 132.0 - t * (691.0 / 32760.0 - t / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

fn check_sizes(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidK { k, n_points: n });
    }
    if n < k + 1 {
        return Err(Error::TooFewPoints { required: k + 1, got: n });
    }
    Ok(())
}

fn check_finite(sets: &[&PointSet]) -> Result<()> {
    if sets.iter().all(|s| s.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("point cloud contains non-finite coordinates".into()))
    }
}

fn check_equal_len(sets: &[&PointSet]) -> Result<usize> {
    let n = sets[0].len();
    if sets.iter().any(|s| s.len() != n) {
        return Err(Error::Shape("point sets have different point counts".into()));
    }
    Ok(n)
}

/// Leonenko k-NN entropy estimate.
pub fn entropy_knn(points: &PointSet, cfg: &EstimatorConfig) -> Result<Estimate> {
    let m = points.len();
    check_sizes(cfg.k, m)?;
    check_finite(&[points])?;
    let n = points.dim();
    if n == 0 {
        return Ok(Estimate { value: 0.0, k: cfg.k, n_points: m });
    }
    let index = NeighborIndex::build(points, cfg.metric)?;
    let mut log_d = Vec::with_capacity(m);
    for i in 0..m {
        let d = index.kth_distance_unchecked(i, cfg.k);
        if d <= 0.0 {
            return Err(Error::DegenerateDistance { index: i });
        }
        log_d.push(d.ln());
    }
    let constant = ((m - 1) as f64).ln() - digamma_pos(cfg.k as f64) + cfg.metric.log_unit_ball_volume(n);
    let value = constant + n as f64 * compensated_mean(&log_d);
    Ok(Estimate { value, k: cfg.k, n_points: m })
}

/// KSG mutual information between the paired point sets `a` and `b`.
///
/// Always uses the max metric across and within the two spaces.
pub fn mutual_information_knn(a: &PointSet, b: &PointSet, cfg: &EstimatorConfig) -> Result<Estimate> {
    let m = check_equal_len(&[a, b])?;
    check_sizes(cfg.k, m)?;
    check_finite(&[a, b])?;
    let joint = PointSet::concat(&[a, b])?;
    let full = NeighborIndex::build(&joint, Metric::Chebyshev)?;
    let ia = NeighborIndex::build(a, Metric::Chebyshev)?;
    let ib = NeighborIndex::build(b, Metric::Chebyshev)?;
    let mut terms = Vec::with_capacity(m);
    for i in 0..m {
        let eps = full.kth_distance_unchecked(i, cfg.k);
        if eps <= 0.0 {
            return Err(Error::DegenerateDistance { index: i });
        }
        let na = ia.count_within_unchecked(i, eps, CountMode::Strict);
        let nb = ib.count_within_unchecked(i, eps, CountMode::Strict);
        terms.push(digamma_pos((na + 1) as f64) + digamma_pos((nb + 1) as f64));
    }
    let value = digamma_pos(cfg.k as f64) + digamma_pos(m as f64) - compensated_mean(&terms);
    Ok(Estimate { value, k: cfg.k, n_points: m })
}

/// Conditional mutual information `I(a; b | c)`. An empty `c` (zero columns)
/// gives the unconditional mutual information.
pub fn cmi_knn(a: &PointSet, b: &PointSet, c: &PointSet, cfg: &EstimatorConfig) -> Result<Estimate> {
    let m = check_equal_len(&[a, b, c])?;
    check_sizes(cfg.k, m)?;
    check_finite(&[a, b, c])?;
    match cfg.cmi_mode {
        CmiMode::DigammaCounts => {
            if c.dim() == 0 {
                return mutual_information_knn(a, b, cfg);
            }
            frenzel_pompe(a, b, c, cfg.k)
        }
        CmiMode::FourEntropies => {
            log::warn!("four-entropy CMI: the k-NN entropy biases of the marginal spaces do not cancel");
            let ecfg = EstimatorConfig { cmi_mode: CmiMode::DigammaCounts, ..*cfg };
            let h = |parts: &[&PointSet]| -> Result<f64> { Ok(entropy_knn(&PointSet::concat(parts)?, &ecfg)?.value) };
            let value = h(&[b, c])? + h(&[a, c])? - h(&[a, b, c])? - h(&[c])?;
            Ok(Estimate { value, k: cfg.k, n_points: m })
        }
    }
}

/// Joint dimension from which a fused linear scan beats the kd-trees.
const SCAN_MIN_DIM: usize = 6;

/// Column-major copy of a point set.
fn columns_of(p: &PointSet) -> Vec<Vec<f64>> {
    (0..p.dim()).map(|c| (0..p.len()).map(|i| p.point(i)[c]).collect()).collect()
}

/// `out[j] = max_c |cols[c][j] - q[c]|`, written so the loop vectorizes.
fn block_distances(cols: &[Vec<f64>], q: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (col, &qc) in cols.iter().zip(q) {
        for (o, &v) in out.iter_mut().zip(col) {
            let d = (v - qc).abs();
            *o = if d > *o { d } else { *o };
        }
    }
}

/// Same counts as the tree path from one pass over all pairs; the joint and
/// subspace max-norms are exact maxima of the per-block norms.
fn frenzel_pompe_scan(a: &PointSet, b: &PointSet, c: &PointSet, k: usize) -> Result<Estimate> {
    let m = a.len();
    let (ca, cb, cc) = (columns_of(a), columns_of(b), columns_of(c));
    let mut da = vec![0.0; m];
    let mut db = vec![0.0; m];
    let mut dc = vec![0.0; m];
    let mut best = vec![f64::INFINITY; k];
    let mut terms = Vec::with_capacity(m);
    for i in 0..m {
        block_distances(&ca, a.point(i), &mut da);
        block_distances(&cb, b.point(i), &mut db);
        block_distances(&cc, c.point(i), &mut dc);
        best.fill(f64::INFINITY);
        for j in 0..m {
            let d = da[j].max(db[j]).max(dc[j]);
            if d < best[k - 1] && j != i {
                let mut pos = k - 1;
                while pos > 0 && best[pos - 1] > d {
                    best[pos] = best[pos - 1];
                    pos -= 1;
                }
                best[pos] = d;
            }
        }
        let eps = best[k - 1];
        if eps <= 0.0 {
            return Err(Error::DegenerateDistance { index: i });
        }
        let (mut nac, mut nbc, mut nc) = (0usize, 0usize, 0usize);
        for j in 0..m {
            let inc = (dc[j] < eps) as usize;
            nc += inc;
            nac += inc & (da[j] < eps) as usize;
            nbc += inc & (db[j] < eps) as usize;
        }
        // the query itself was counted in every subspace
        terms.push(digamma_pos(nac as f64) + digamma_pos(nbc as f64) - digamma_pos(nc as f64));
    }
    let value = digamma_pos(k as f64) - compensated_mean(&terms);
    Ok(Estimate { value, k, n_points: m })
}

fn frenzel_pompe(a: &PointSet, b: &PointSet, c: &PointSet, k: usize) -> Result<Estimate> {
    if a.dim() + b.dim() + c.dim() >= SCAN_MIN_DIM {
        frenzel_pompe_scan(a, b, c, k)
    } else {
        frenzel_pompe_tree(a, b, c, k)
    }
}

fn frenzel_pompe_tree(a: &PointSet, b: &PointSet, c: &PointSet, k: usize) -> Result<Estimate> {
    let m = a.len();
    let full = NeighborIndex::build(&PointSet::concat(&[a, b, c])?, Metric::Chebyshev)?;
    let iac = NeighborIndex::build(&PointSet::concat(&[a, c])?, Metric::Chebyshev)?;
    let ibc = NeighborIndex::build(&PointSet::concat(&[b, c])?, Metric::Chebyshev)?;
    let ic = NeighborIndex::build(c, Metric::Chebyshev)?;
    let mut terms = Vec::with_capacity(m);
    for i in 0..m {
        let eps = full.kth_distance_unchecked(i, k);
        if eps <= 0.0 {
            return Err(Error::DegenerateDistance { index: i });
        }
        let nac = iac.count_within_unchecked(i, eps, CountMode::Strict);
        let nbc = ibc.count_within_unchecked(i, eps, CountMode::Strict);
        let nc = ic.count_within_unchecked(i, eps, CountMode::Strict);
        terms.push(digamma_pos((nac + 1) as f64) + digamma_pos((nbc + 1) as f64) - digamma_pos((nc + 1) as f64));
    }
    let value = digamma_pos(k as f64) - compensated_mean(&terms);
    Ok(Estimate { value, k, n_points: m })
}

/// `I(A; B | C)` over the labeled blocks of an embedded cloud.
pub fn cmi_cloud(cloud: &PointCloud, cfg: &EstimatorConfig) -> Result<Estimate> {
    cmi_knn(&cloud.project(&[BlockLabel::A]), &cloud.project(&[BlockLabel::B]), &cloud.project(&[BlockLabel::C]), cfg)
}
