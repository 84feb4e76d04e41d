//! Synthetic systems with known causal structure.
//!
//! Normal deviates come from `ChaCha20Rng` seeded with `seed_from_u64`,
//! transformed by `rand_distr::StandardNormal` (ziggurat). Correlated noise is
//! `L n` with `L` the lower Cholesky factor of the noise covariance and `n`
//! drawn in channel order. All trajectories start at zero and discard
//! [`BURN_IN`] samples.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_oracle::GaussianVarModel;
use crate::numeric::cholesky_lower;
use crate::series::SampleMatrix;

pub const BURN_IN: usize = 1000;

/// Deviate source recorded in run metadata.
pub const RNG_DESCRIPTION: &str = "ChaCha20Rng::seed_from_u64 + rand_distr::StandardNormal; lower Cholesky noise";

/// Absolute value above which a trajectory counts as diverged.
const DIVERGENCE_BOUND: f64 = 1e8;

/// Three-channel chain `x -> y -> z`, with a quadratic first link:
///
/// ```text
/// x_t = b x_{t-1} + e_x
/// y_t = c y_{t-1} + d_xy x_{t-1}^2 + e_y
/// z_t = d z_{t-1} + c_yz y_{t-1} + e_z
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainParams {
    pub b: f64,
    pub c: f64,
    /// Self coupling of `z`. The usual parameter list `a = 0.2, b = 0.5,
    /// c = 0.8` calls this coefficient `a`.
    pub d: f64,
    pub d_xy: f64,
    pub c_yz: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self { b: 0.5, c: 0.8, d: 0.2, d_xy: 0.8, c_yz: 0.7, n: 300_000, seed: 7 }
    }
}

impl ChainParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("b", self.b), ("c", self.c), ("d", self.d)] {
            if !(v.abs() < 1.0) {
                return Err(Error::InvalidArgument(format!("|{name}| = {} must be < 1", v.abs())));
            }
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let mut directed = Vec::new();
        if self.d_xy != 0.0 {
            directed.push(edge("x", "y"));
        }
        if self.c_yz != 0.0 {
            directed.push(edge("y", "z"));
        }
        GroundTruth {
            vertices: names(&["x", "y", "z"]),
            directed,
            undirected_unconditional: Vec::new(),
            undirected_conditional: Vec::new(),
        }
    }
}

/// Four-channel system with correlated noise:
///
/// ```text
/// w_t = a w_{t-1} + alpha z_{t-1} + e x_{t-1}^2 + e_w
/// x_t = b x_{t-1} + f z_{t-1}^2 + e_x
/// y_t = c y_{t-1} + beta x_{t-1} + g x_{t-1}^2 + e_y
/// z_t = d z_{t-1} + gamma w_{t-1} + e_z
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FourDParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for FourDParams {
    /// Couplings from a stability and detectability screen; noise
    /// correlations 0.66 / 0.55 / 0.48.
    fn default() -> Self {
        Self {
            a: 0.2,
            b: 0.2,
            c: 0.2,
            d: 0.2,
            alpha: 0.3,
            beta: 0.3,
            gamma: 0.3,
            e: 0.2,
            f: 0.15,
            g: 0.1,
            rho1: 0.66,
            rho2: 0.55,
            rho3: 0.48,
            n: 300_000,
            seed: 11,
        }
    }
}

impl FourDParams {
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        let cov = noise_covariance(self.rho1, self.rho2, self.rho3)?;
        let v = ["w", "x", "y", "z"];
        let mut directed = Vec::new();
        let mut add = |on: bool, from: &str, to: &str| {
            if on {
                directed.push(edge(from, to));
            }
        };
        add(self.e != 0.0, "x", "w");
        add(self.alpha != 0.0, "z", "w");
        add(self.f != 0.0, "z", "x");
        add(self.beta != 0.0 || self.g != 0.0, "x", "y");
        add(self.gamma != 0.0, "w", "z");
        Ok(GroundTruth {
            vertices: names(&v),
            directed,
            undirected_unconditional: named_pairs(&v, &covariance_support(&cov)),
            undirected_conditional: named_pairs(&v, &precision_support(&cov)?),
        })
    }
}

/// Edges implied by the structural equations and the noise covariance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub vertices: Vec<String>,
    /// `(from, to)`
    pub directed: Vec<(String, String)>,
    pub undirected_unconditional: Vec<(String, String)>,
    pub undirected_conditional: Vec<(String, String)>,
}

fn edge(a: &str, b: &str) -> (String, String) {
    (a.to_string(), b.to_string())
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn named_pairs(v: &[&str], pairs: &[(usize, usize)]) -> Vec<(String, String)> {
    pairs.iter().map(|&(i, j)| edge(v[i], v[j])).collect()
}

/// Noise covariance of the four-channel system, rows `w, x, y, z`:
///
/// ```text
/// 1       ρ1  0   ρ1ρ2
/// ρ1      1   0   ρ2
/// 0       0   1   ρ3
/// ρ1ρ2    ρ2  ρ3  1
/// ```
pub fn noise_covariance(rho1: f64, rho2: f64, rho3: f64) -> Result<DMatrix<f64>> {
    let r12 = rho1 * rho2;
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        1.0,  rho1, 0.0,  r12,
        rho1, 1.0,  0.0,  rho2,
        0.0,  0.0,  1.0,  rho3,
        r12,  rho2, rho3, 1.0,
    ]);
    cholesky_lower(&m)?;
    Ok(m)
}

/// Closed-form inverse of [`noise_covariance`], with
/// `d1 = 1/(1-ρ1²)` and `d2 = 1/(1-ρ2²-ρ3²)`.
pub fn noise_precision(rho1: f64, rho2: f64, rho3: f64) -> DMatrix<f64> {
    let d1 = 1.0 / (1.0 - rho1 * rho1);
    let d2 = 1.0 / (1.0 - rho2 * rho2 - rho3 * rho3);
    let xx = d1 * d2 * (1.0 - rho1 * rho1 * rho2 * rho2 - rho3 * rho3);
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        d1,         -d1 * rho1,        0.0,                       0.0,
        -d1 * rho1, xx,                d2 * rho2 * rho3,          -d2 * rho2,
        0.0,        d2 * rho2 * rho3,  d2 * (1.0 - rho2 * rho2),  -d2 * rho3,
        0.0,        -d2 * rho2,        -d2 * rho3,                d2,
    ]);
    m
}

const SUPPORT_TOL: f64 = 1e-12;

fn off_diagonal_support(m: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let scale = m.amax().max(1.0);
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if m[(i, j)].abs() > SUPPORT_TOL * scale {
                out.push((i, j));
            }
        }
    }
    out
}

/// Nonzero off-diagonal pattern, `i < j`.
pub fn covariance_support(cov: &DMatrix<f64>) -> Vec<(usize, usize)> {
    off_diagonal_support(cov)
}

/// Nonzero off-diagonal pattern of the numerically inverted covariance.
pub fn precision_support(cov: &DMatrix<f64>) -> Result<Vec<(usize, usize)>> {
    let l = cholesky_lower(cov)?;
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(cov.nrows(), cov.nrows()))
        .ok_or_else(|| Error::InvalidArgument("singular covariance".into()))?;
    let precision = linv.transpose() * linv;
    Ok(off_diagonal_support(&precision))
}

fn check_bounded(values: &[f64], index: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite() && v.abs() < DIVERGENCE_BOUND) {
        Ok(())
    } else {
        Err(Error::Diverged { index })
    }
}

fn normals<const N: usize>(rng: &mut ChaCha20Rng) -> [f64; N] {
    std::array::from_fn(|_| rng.sample(StandardNormal))
}

pub fn gen_chain(p: &ChainParams) -> Result<SampleMatrix> {
    p.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(p.seed);
    let (mut x, mut y, mut z) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut data = Vec::with_capacity(3 * p.n);
    for step in 0..BURN_IN + p.n {
        let [ex, ey, ez] = normals::<3>(&mut rng);
        let nx = p.b * x + ex;
        let ny = p.c * y + p.d_xy * x * x + ey;
        let nz = p.d * z + p.c_yz * y + ez;
        (x, y, z) = (nx, ny, nz);
        check_bounded(&[x, y, z], step)?;
        if step >= BURN_IN {
            data.extend_from_slice(&[x, y, z]);
        }
    }
    SampleMatrix::new(names(&["x", "y", "z"]), data)
}

pub fn gen_4d(p: &FourDParams) -> Result<SampleMatrix> {
    if p.n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let cov = noise_covariance(p.rho1, p.rho2, p.rho3)?;
    let l = cholesky_lower(&cov)?;
    let mut rng = ChaCha20Rng::seed_from_u64(p.seed);
    let mut s = [0.0_f64; 4];
    let mut data = Vec::with_capacity(4 * p.n);
    for step in 0..BURN_IN + p.n {
        let n = normals::<4>(&mut rng);
        let mut eps = [0.0; 4];
        for i in 0..4 {
            eps[i] = (0..=i).map(|j| l[(i, j)] * n[j]).sum();
        }
        let [w, x, y, z] = s;
        s = [
            p.a * w + p.alpha * z + p.e * x * x + eps[0],
            p.b * x + p.f * z * z + eps[1],
            p.c * y + p.beta * x + p.g * x * x + eps[2],
            p.d * z + p.gamma * w + eps[3],
        ];
        check_bounded(&s, step)?;
        if step >= BURN_IN {
            data.extend_from_slice(&s);
        }
    }
    SampleMatrix::new(names(&["w", "x", "y", "z"]), data)
}

pub fn gen_var1(m: &GaussianVarModel, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let d = m.dim();
    let l = cholesky_lower(m.noise_covariance())?;
    let a = m.transition();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut state = vec![0.0_f64; d];
    let mut next = vec![0.0_f64; d];
    let mut draw = vec![0.0_f64; d];
    let mut data = Vec::with_capacity(d * n);
    for step in 0..BURN_IN + n {
        for v in draw.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += a[(i, j)] * state[j];
            }
            for j in 0..=i {
                acc += l[(i, j)] * draw[j];
            }
            next[i] = acc;
        }
        std::mem::swap(&mut state, &mut next);
        check_bounded(&state, step)?;
        if step >= BURN_IN {
            data.extend_from_slice(&state);
        }
    }
    SampleMatrix::new(m.names().to_vec(), data)
}

/// Ground truth of a VAR(1) model read off `A` and `Q`.
pub fn var1_ground_truth(m: &GaussianVarModel) -> Result<GroundTruth> {
    let names = m.names();
    let a = m.transition();
    let mut directed = Vec::new();
    for to in 0..m.dim() {
        for from in 0..m.dim() {
            if from != to && a[(to, from)] != 0.0 {
                directed.push(edge(&names[from], &names[to]));
            }
        }
    }
    let pairs = |p: Vec<(usize, usize)>| p.into_iter().map(|(i, j)| edge(&names[i], &names[j])).collect();
    Ok(GroundTruth {
        vertices: names.to_vec(),
        directed,
        undirected_unconditional: pairs(covariance_support(m.noise_covariance())),
        undirected_conditional: pairs(precision_support(m.noise_covariance())?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_correlations_give_identity() {
        let m = noise_covariance(0.0, 0.0, 0.0).unwrap();
        assert_eq!(m, DMatrix::identity(4, 4));
        assert!(covariance_support(&m).is_empty());
        assert!(precision_support(&m).unwrap().is_empty());
    }

    #[test]
    fn reference_correlations() {
        let m = noise_covariance(0.66, 0.55, 0.48).unwrap();
        assert!((m[(0, 3)] - 0.363).abs() < 1e-15);
        assert_eq!(covariance_support(&m), vec![(0, 1), (0, 3), (1, 3), (2, 3)]);
        assert_eq!(precision_support(&m).unwrap(), vec![(0, 1), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn printed_inverse_is_the_inverse() {
        let (r1, r2, r3) = (0.66, 0.55, 0.48);
        let prod = noise_covariance(r1, r2, r3).unwrap() * noise_precision(r1, r2, r3);
        assert!((prod - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn numeric_inverse_matches_printed_pattern() {
        let (r1, r2, r3) = (0.66, 0.55, 0.48);
        let cov = noise_covariance(r1, r2, r3).unwrap();
        let inv = cov.clone().try_inverse().unwrap();
        assert!((inv.clone() - noise_precision(r1, r2, r3)).amax() < 1e-12);
        assert!(inv[(0, 2)].abs() < 1e-12 && inv[(0, 3)].abs() < 1e-12);
    }

    #[test]
    fn non_pd_correlations_report_the_minor() {
        // 1 - ρ2² - ρ3² < 0 breaks positive definiteness at the last minor
        match noise_covariance(0.3, 0.8, 0.8) {
            Err(Error::NotPositiveDefinite { order, value }) => {
                assert_eq!(order, 4);
                assert!(value <= 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn chain_is_seed_deterministic() {
        let p = ChainParams { n: 500, ..ChainParams::default() };
        assert_eq!(gen_chain(&p).unwrap(), gen_chain(&p).unwrap());
        let q = ChainParams { seed: 8, ..p.clone() };
        assert_ne!(gen_chain(&p).unwrap(), gen_chain(&q).unwrap());
    }

    #[test]
    fn chain_truth() {
        let t = ChainParams::default().ground_truth();
        assert_eq!(t.directed, vec![edge("x", "y"), edge("y", "z")]);
        assert!(t.undirected_conditional.is_empty() && t.undirected_unconditional.is_empty());
    }

    #[test]
    fn four_d_truth() {
        let t = FourDParams::default().ground_truth().unwrap();
        assert_eq!(t.directed.len(), 5);
        assert!(t.directed.contains(&edge("w", "z")));
        let ablated = FourDParams { gamma: 0.0, ..FourDParams::default() }.ground_truth().unwrap();
        assert!(!ablated.directed.contains(&edge("w", "z")));
    }

    #[test]
    fn unstable_chain_is_rejected() {
        let p = ChainParams { b: 1.2, n: 10, ..ChainParams::default() };
        assert!(gen_chain(&p).is_err());
    }

    #[test]
    fn explosive_quadratics_diverge() {
        let p = FourDParams { e: 2.0, f: 2.0, n: 5000, ..FourDParams::default() };
        assert!(matches!(gen_4d(&p), Err(Error::Diverged { .. })));
    }

    #[test]
    fn white_var_is_noise() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let m = GaussianVarModel::new(DMatrix::zeros(2, 2), q, vec![]).unwrap();
        let s = gen_var1(&m, 50_000, 1).unwrap();
        let (x, y) = (s.column(0), s.column(1));
        let n = x.len() as f64;
        let cxy = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / n;
        let vy = y.iter().map(|v| v * v).sum::<f64>() / n;
        assert!((cxy - 0.5).abs() < 0.03);
        assert!((vy - 2.0).abs() < 0.06);
        assert_eq!(gen_var1(&m, 100, 4).unwrap(), gen_var1(&m, 100, 4).unwrap());
    }
}
