//! Exact values for linear Gaussian VAR(1) models.
//!
//! For `x_t = A x_{t-1} + e_t` with `e_t ~ N(0, Q)` the stacked vector
//! `(x_{t-L}, ..., x_t)` is Gaussian with blocks `Γ(h) = A^h Σ`, where `Σ`
//! solves `Σ = A Σ Aᵀ + Q`. Every measure of [`crate::measures`] is then a
//! log-determinant expression on sub-blocks of that covariance, computed here
//! on exactly the coordinates the data embedding uses.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{MeasureKind, MeasureSpec};
use crate::numeric::{cholesky_lower, log_det_spd, submatrix};
use crate::series::{layouts, Coord, Layout, SideHorizon};

/// `ln(2πe)`
const LN_2PI_E: f64 = 2.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVarModel {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    #[serde(rename = "A", alias = "a")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "Q", alias = "q")]
    q: Vec<Vec<f64>>,
    #[serde(default)]
    names: Vec<String>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(format!("{what} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

impl GaussianVarModel {
    /// Validates stationarity (spectral radius < 1) and `Q` symmetric positive definite.
    pub fn new(a: DMatrix<f64>, q: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || a.ncols() != d || q.nrows() != d || q.ncols() != d {
            return Err(Error::Shape("A and Q must be square matrices of the same size".into()));
        }
        if a.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("model matrices contain non-finite entries".into()));
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * q.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!("Q is not symmetric (max asymmetry {asym:.3e})")));
        }
        cholesky_lower(&q)?;
        let rho = spectral_radius(&a);
        if !(rho < 1.0) {
            return Err(Error::Unstable(rho));
        }
        let names = if names.is_empty() { (0..d).map(|i| format!("x{i}")).collect() } else { names };
        if names.len() != d {
            return Err(Error::Shape(format!("{} names for {d} channels", names.len())));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::DuplicateChannel(n.clone()));
            }
        }
        Ok(Self { a, q, names })
    }

    pub fn from_rows(a: &[Vec<f64>], q: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        Self::new(matrix_from_rows(a, "A")?, matrix_from_rows(q, "Q")?, names)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        Self::from_rows(&f.a, &f.q, f.names)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let f = ModelFile { a: matrix_to_rows(&self.a), q: matrix_to_rows(&self.q), names: self.names.clone() };
        serde_json::to_string_pretty(&f).expect("model serializes")
    }

    /// Random stable model: Gaussian `A` rescaled to a spectral radius drawn
    /// from `[0.3, 0.9]`, and `Q = B Bᵀ / d + 0.5 I`.
    pub fn random_stable(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        loop {
            let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let rho = spectral_radius(&g);
            if rho < 1e-6 {
                continue;
            }
            let target = rng.random_range(0.3..0.9);
            let a = g * (target / rho);
            let b = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut q = &b * b.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.5;
            q = (&q + q.transpose()) * 0.5;
            if let Ok(m) = Self::new(a, q, Vec::new()) {
                return m;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn noise_covariance(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves `Σ = A Σ Aᵀ + Q`.
///
/// Up to 8 channels this is a direct solve of `(I - A⊗A) vec Σ = vec Q`;
/// larger models use the doubling recursion.
pub fn stationary_covariance(m: &GaussianVarModel) -> Result<DMatrix<f64>> {
    let rho = m.spectral_radius();
    if !(rho < 1.0) {
        return Err(Error::Unstable(rho));
    }
    let d = m.dim();
    let sigma = if d <= 8 {
        let lhs = DMatrix::identity(d * d, d * d) - m.a.kronecker(&m.a);
        let rhs = nalgebra::DVector::from_column_slice(m.q.as_slice());
        let sol = lhs.lu().solve(&rhs).ok_or_else(|| Error::InvalidArgument("Lyapunov system is singular".into()))?;
        DMatrix::from_column_slice(d, d, sol.as_slice())
    } else {
        // Σ = Σ_k A^k Q A^kᵀ, summed by squaring.
        let mut s = m.q.clone();
        let mut p = m.a.clone();
        for _ in 0..64 {
            let next = &s + &p * &s * p.transpose();
            p = &p * &p;
            let done = (&next - &s).amax() <= 1e-16 * next.amax();
            s = next;
            if done {
                break;
            }
        }
        s
    };
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Covariance of the stacked vector `(x_{t-span}, ..., x_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCovariance {
    cov: DMatrix<f64>,
    dim: usize,
    span: usize,
}

impl JointCovariance {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn n_channels(&self) -> usize {
        self.dim
    }

    /// Row of `channel` at `lag` samples before the newest time.
    pub fn index(&self, channel: usize, lag: usize) -> Result<usize> {
        if channel >= self.dim || lag > self.span {
            return Err(Error::InvalidArgument(format!(
                "coordinate (channel {channel}, lag {lag}) outside a {}-channel span {}",
                self.dim, self.span
            )));
        }
        Ok((self.span - lag) * self.dim + channel)
    }

    pub fn indices(&self, coords: &[Coord]) -> Result<Vec<usize>> {
        coords.iter().map(|c| self.index(c.channel, c.lag)).collect()
    }

    /// Exact Gaussian `I(a; b | c)` over stacked coordinates.
    pub fn cmi(&self, a: &[Coord], b: &[Coord], c: &[Coord]) -> Result<f64> {
        gaussian_cmi(&self.cov, &self.indices(a)?, &self.indices(b)?, &self.indices(c)?)
    }

    /// Variance of `target` given `given`.
    pub fn conditional_variance(&self, target: Coord, given: &[Coord]) -> Result<f64> {
        conditional_variance(&self.cov, self.index(target.channel, target.lag)?, &self.indices(given)?)
    }
}

pub fn joint_covariance(m: &GaussianVarModel, span: usize) -> Result<JointCovariance> {
    let sigma = stationary_covariance(m)?;
    let d = m.dim();
    // powers[h] = A^h Σ = E[x_{s+h} x_sᵀ]
    let mut powers = Vec::with_capacity(span + 1);
    powers.push(sigma.clone());
    for h in 1..=span {
        let next = &m.a * &powers[h - 1];
        powers.push(next);
    }
    let n = d * (span + 1);
    let mut cov = DMatrix::zeros(n, n);
    for p1 in 0..=span {
        for p2 in 0..=span {
            // position p is time t - span + p
            let block = if p1 >= p2 { powers[p1 - p2].clone() } else { powers[p2 - p1].transpose() };
            cov.view_mut((p1 * d, p2 * d), (d, d)).copy_from(&block);
        }
    }
    Ok(JointCovariance { cov, dim: d, span })
}

/// `½ ln((2πe)^n det Σ)`
pub fn gaussian_entropy(cov: &DMatrix<f64>) -> Result<f64> {
    let n = cov.nrows();
    Ok(0.5 * (n as f64 * LN_2PI_E + log_det_spd(cov)?))
}

/// Exact `I(a; b | c)` of a Gaussian vector with covariance `cov`.
pub fn gaussian_cmi(cov: &DMatrix<f64>, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    let all: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
    for (i, x) in all.iter().enumerate() {
        if all[..i].contains(x) {
            return Err(Error::InvalidArgument(format!("coordinate {x} appears in two sets")));
        }
        if *x >= cov.nrows() {
            return Err(Error::InvalidArgument(format!("coordinate {x} out of range")));
        }
    }
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    let ld = |sets: &[&[usize]]| -> Result<f64> {
        let idx: Vec<usize> = sets.iter().flat_map(|s| s.iter().copied()).collect();
        log_det_spd(&submatrix(cov, &idx, &idx))
    };
    Ok(0.5 * (ld(&[a, c])? + ld(&[b, c])? - ld(&[a, b, c])? - ld(&[c])?))
}

/// `Σ_tt - Σ_tg Σ_gg⁻¹ Σ_gt`
pub fn conditional_variance(cov: &DMatrix<f64>, target: usize, given: &[usize]) -> Result<f64> {
    let var = cov[(target, target)];
    if given.is_empty() {
        return Ok(var);
    }
    let sgg = submatrix(cov, given, given);
    let sgt = submatrix(cov, given, &[target]);
    let l = cholesky_lower(&sgg)?;
    let w =
        l.solve_lower_triangular(&sgt).ok_or_else(|| Error::InvalidArgument("singular conditioning block".into()))?;
    Ok(var - w.norm_squared())
}

fn layout_value(joint: &JointCovariance, layout: &Layout, geweke: bool) -> Result<f64> {
    if geweke {
        let [target] = layout.b[..] else {
            return Err(Error::Shape("linear prediction needs a scalar target".into()));
        };
        let full: Vec<Coord> = layout.a.iter().chain(&layout.c).copied().collect();
        let restricted = joint.conditional_variance(target, &layout.c)?;
        let unrestricted = joint.conditional_variance(target, &full)?;
        Ok((restricted / unrestricted).ln())
    } else {
        joint.cmi(&layout.a, &layout.b, &layout.c)
    }
}

fn resolve(m: &GaussianVarModel, spec: &MeasureSpec) -> Result<(usize, usize, Vec<usize>)> {
    spec.validate()?;
    let s = m.channel_index(&spec.source)?;
    let t = m.channel_index(&spec.target)?;
    let side = spec.side.iter().map(|c| m.channel_index(c)).collect::<Result<Vec<_>>>()?;
    Ok((s, t, side))
}

/// Exact value of `spec` under the model, using the spec's lag window (the AR
/// order for Geweke kinds). Geweke kinds are log variance ratios, so for
/// matching layouts they equal twice the corresponding information rate.
pub fn oracle_measure(m: &GaussianVarModel, spec: &MeasureSpec) -> Result<f64> {
    let (s, t, side) = resolve(m, spec)?;
    let window = spec.window();
    let joint = joint_covariance(m, window)?;
    let ls = layouts(spec.kind, s, t, &side, window, spec.kind.side_horizon());
    match spec.kind {
        MeasureKind::DeltaI => Ok(layout_value(&joint, &ls[0], false)? - layout_value(&joint, &ls[1], false)?),
        kind => layout_value(&joint, &ls[0], kind.is_geweke()),
    }
}

/// Windowed rate of the causally conditioned directed information
/// `I(source_{t-d..t}; target_t | target_{t-d..t-1}, side_{t-d..t-1} [, side_t])`.
///
/// `horizon = PastOnly` conditions on the delayed side information.
pub fn directed_information_rate(
    m: &GaussianVarModel,
    source: usize,
    target: usize,
    side: &[usize],
    window: usize,
    horizon: SideHorizon,
) -> Result<f64> {
    let joint = joint_covariance(m, window)?;
    let lagged = |ch: usize, from: usize| (from..=window).rev().map(move |lag| Coord { channel: ch, lag });
    let a: Vec<Coord> = lagged(source, 0).collect();
    let mut c: Vec<Coord> = lagged(target, 1).collect();
    let side_from = if horizon == SideHorizon::UpToPresent { 0 } else { 1 };
    for &s in side {
        c.extend(lagged(s, side_from));
    }
    joint.cmi(&a, &[Coord { channel: target, lag: 0 }], &c)
}

/// Which finite-horizon directed information to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// `I(from^k -> to^k) = Σ_i I(from^i; to(i) | to^{i-1})`
    None,
    /// `I(from^k -> to^k || D from^k) = Σ_i I(from(i); to(i) | to^{i-1}, from^{i-1})`
    DelayedSelf,
}

/// Finite-horizon directed information between channel sets observed over
/// times `1..=horizon` of the stationary process.
pub fn directed_information(
    m: &GaussianVarModel,
    from: &[usize],
    to: &[usize],
    horizon: usize,
    conditioning: Conditioning,
) -> Result<f64> {
    if horizon == 0 {
        return Ok(0.0);
    }
    let joint = joint_covariance(m, horizon - 1)?;
    // time i in 1..=horizon sits at lag horizon - i
    let at = |set: &[usize], times: std::ops::RangeInclusive<usize>| -> Vec<Coord> {
        times.flat_map(|i| set.iter().map(move |&ch| Coord { channel: ch, lag: horizon - i })).collect()
    };
    let mut total = 0.0;
    for i in 1..=horizon {
        let b = at(to, i..=i);
        let mut c = if i > 1 { at(to, 1..=i - 1) } else { Vec::new() };
        let a = match conditioning {
            Conditioning::None => at(from, 1..=i),
            Conditioning::DelayedSelf => {
                if i > 1 {
                    c.extend(at(from, 1..=i - 1));
                }
                at(from, i..=i)
            }
        };
        total += joint.cmi(&a, &b, &c)?;
    }
    Ok(total)
}

/// `I(a^k; b^k)` over times `1..=horizon`.
pub fn mutual_information_horizon(m: &GaussianVarModel, a: &[usize], b: &[usize], horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Ok(0.0);
    }
    let joint = joint_covariance(m, horizon - 1)?;
    let all = |set: &[usize]| -> Vec<Coord> {
        (0..horizon).flat_map(|lag| set.iter().map(move |&ch| Coord { channel: ch, lag })).collect()
    };
    joint.cmi(&all(a), &all(b), &[])
}

/// Largest absolute residuals of the three directed-information identities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// `I(A->B||C) = cTE + cIIE + ΔI`
    pub decomposition: f64,
    /// `I(A->B||DC) = cTE + uIIE`
    pub past_conditioning: f64,
    /// `I(A->B) + I(B->A) = I(A;B) + I(A->B||DA)`
    pub sum_identity: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.decomposition.max(self.past_conditioning).max(self.sum_identity)
    }
}

/// Checks all three identities over every ordered channel pair (side = the
/// remaining channels) at lag window `window`, and the sum identity for
/// horizons `1..=max_horizon`.
pub fn check_identities(m: &GaussianVarModel, window: usize, max_horizon: usize) -> Result<IdentityResiduals> {
    let d = m.dim();
    let names = m.names();
    let mut out = IdentityResiduals::default();
    for s in 0..d {
        for t in 0..d {
            if s == t {
                continue;
            }
            let side: Vec<usize> = (0..d).filter(|&c| c != s && c != t).collect();
            let side_names: Vec<&str> = side.iter().map(|&c| names[c].as_str()).collect();
            let spec = |kind| -> Result<MeasureSpec> {
                let sn: &[&str] = if kind == MeasureKind::InstantExchange || kind == MeasureKind::TransferEntropy {
                    &[]
                } else {
                    &side_names
                };
                Ok(MeasureSpec::new(kind, &names[t], &names[s], sn)?.with_lag(window))
            };
            if side.is_empty() {
                let te = oracle_measure(m, &spec(MeasureKind::TransferEntropy)?)?;
                let iie = oracle_measure(m, &spec(MeasureKind::InstantExchange)?)?;
                let di = directed_information_rate(m, s, t, &[], window, SideHorizon::PastOnly)?;
                out.past_conditioning = out.past_conditioning.max((di - te - iie).abs());
                out.decomposition = out.decomposition.max((di - te - iie).abs());
            } else {
                let cte = oracle_measure(m, &spec(MeasureKind::CondTransferEntropy)?)?;
                let ciie = oracle_measure(m, &spec(MeasureKind::CondInstantExchange)?)?;
                let uiie = oracle_measure(m, &spec(MeasureKind::UncondInstantExchange)?)?;
                let delta = oracle_measure(m, &spec(MeasureKind::DeltaI)?)?;
                let full = directed_information_rate(m, s, t, &side, window, SideHorizon::UpToPresent)?;
                let delayed = directed_information_rate(m, s, t, &side, window, SideHorizon::PastOnly)?;
                out.decomposition = out.decomposition.max((full - cte - ciie - delta).abs());
                out.past_conditioning = out.past_conditioning.max((delayed - cte - uiie).abs());
            }
            if s < t {
                for k in 1..=max_horizon {
                    let ab = directed_information(m, &[s], &[t], k, Conditioning::None)?;
                    let ba = directed_information(m, &[t], &[s], k, Conditioning::None)?;
                    let mi = mutual_information_horizon(m, &[s], &[t], k)?;
                    let inst = directed_information(m, &[s], &[t], k, Conditioning::DelayedSelf)?;
                    out.sum_identity = out.sum_identity.max((ab + ba - mi - inst).abs());
                }
            }
        }
    }
    Ok(out)
}
