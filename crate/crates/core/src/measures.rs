//! The measure battery evaluated on data.
//!
//! Information measures are k-NN conditional mutual informations on a lag
//! embedding. The Geweke kinds are their linear-prediction counterparts:
//! `ln(ε(B | C) / ε(B | A, C))` with least-squares residual variances on the
//! same block layout, with the AR order as lag window.
//!
//! Roles are explicit: `source` is the candidate cause and `target` the
//! predicted channel, so a Geweke dynamic measure reads
//! `ln ε(target_t | target past) / ε(target_t | target past, source past)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{cmi_cloud, EstimatorConfig};
use crate::neighbors::PointSet;
use crate::series::{embed_measure, BlockLabel, Embedding, LagSpec, PointCloud, SampleMatrix, SideHorizon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    /// `I(source past; target_t | target past)`
    #[serde(alias = "te")]
    TransferEntropy,
    /// `I(source past; target_t | target past, side past)`
    #[serde(alias = "cte")]
    CondTransferEntropy,
    /// `I(source_t; target_t | source past, target past)`
    #[serde(alias = "iie")]
    InstantExchange,
    /// `I(source_t; target_t | source past, target past, side past)`
    #[serde(alias = "uiie")]
    UncondInstantExchange,
    /// `I(source_t; target_t | source past, target past, side past, side_t)`
    #[serde(alias = "ciie")]
    CondInstantExchange,
    /// `I(side_t; target_t | source past, target past, side past) - I(side_t; target_t | target past, side past)`
    DeltaI,
    #[serde(alias = "geweke_dyn")]
    GewekeDynamic,
    #[serde(alias = "geweke_cdyn")]
    GewekeCondDynamic,
    #[serde(alias = "geweke_inst")]
    GewekeInstant,
    #[serde(alias = "geweke_cinst")]
    GewekeCondInstant,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 10] = [
        MeasureKind::TransferEntropy,
        MeasureKind::CondTransferEntropy,
        MeasureKind::InstantExchange,
        MeasureKind::UncondInstantExchange,
        MeasureKind::CondInstantExchange,
        MeasureKind::DeltaI,
        MeasureKind::GewekeDynamic,
        MeasureKind::GewekeCondDynamic,
        MeasureKind::GewekeInstant,
        MeasureKind::GewekeCondInstant,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            MeasureKind::TransferEntropy => "te",
            MeasureKind::CondTransferEntropy => "cte",
            MeasureKind::InstantExchange => "iie",
            MeasureKind::UncondInstantExchange => "uiie",
            MeasureKind::CondInstantExchange => "ciie",
            MeasureKind::DeltaI => "delta_i",
            MeasureKind::GewekeDynamic => "geweke_dyn",
            MeasureKind::GewekeCondDynamic => "geweke_cdyn",
            MeasureKind::GewekeInstant => "geweke_inst",
            MeasureKind::GewekeCondInstant => "geweke_cinst",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            MeasureKind::TransferEntropy => "transfer_entropy",
            MeasureKind::CondTransferEntropy => "cond_transfer_entropy",
            MeasureKind::InstantExchange => "instant_exchange",
            MeasureKind::UncondInstantExchange => "uncond_instant_exchange",
            MeasureKind::CondInstantExchange => "cond_instant_exchange",
            MeasureKind::DeltaI => "delta_i",
            MeasureKind::GewekeDynamic => "geweke_dynamic",
            MeasureKind::GewekeCondDynamic => "geweke_cond_dynamic",
            MeasureKind::GewekeInstant => "geweke_instant",
            MeasureKind::GewekeCondInstant => "geweke_cond_instant",
        }
    }

    /// Accepts either the short or the long (snake case) name.
    pub fn from_name(name: &str) -> Result<Self> {
        let lower = name.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.short_name() == lower || k.long_name() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown measure `{name}`")))
    }

    pub fn is_geweke(self) -> bool {
        matches!(
            self,
            MeasureKind::GewekeDynamic
                | MeasureKind::GewekeCondDynamic
                | MeasureKind::GewekeInstant
                | MeasureKind::GewekeCondInstant
        )
    }

    /// Whether the kind conditions on side channels (and therefore requires them).
    pub fn is_conditional(self) -> bool {
        !matches!(
            self,
            MeasureKind::TransferEntropy
                | MeasureKind::InstantExchange
                | MeasureKind::GewekeDynamic
                | MeasureKind::GewekeInstant
        )
    }

    pub fn is_instantaneous(self) -> bool {
        matches!(
            self,
            MeasureKind::InstantExchange
                | MeasureKind::UncondInstantExchange
                | MeasureKind::CondInstantExchange
                | MeasureKind::GewekeInstant
                | MeasureKind::GewekeCondInstant
        )
    }

    /// Horizon at which side channels enter the conditioning set.
    pub fn side_horizon(self) -> SideHorizon {
        match self {
            MeasureKind::CondInstantExchange | MeasureKind::GewekeCondInstant => SideHorizon::UpToPresent,
            _ => SideHorizon::PastOnly,
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

fn default_ar_order() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    pub target: String,
    pub source: String,
    #[serde(default)]
    pub side: Vec<String>,
    #[serde(default)]
    pub lag: LagSpec,
    #[serde(default)]
    pub est: EstimatorConfig,
    #[serde(default = "default_ar_order")]
    pub ar_order: usize,
}

impl MeasureSpec {
    /// Spec with the default lag window (2), k (5) and AR order (10).
    pub fn new(kind: MeasureKind, target: &str, source: &str, side: &[&str]) -> Result<Self> {
        let spec = Self {
            kind,
            target: target.to_string(),
            source: source.to_string(),
            side: side.iter().map(|s| s.to_string()).collect(),
            lag: LagSpec::default().with_horizon(kind.side_horizon()),
            est: EstimatorConfig::default(),
            ar_order: default_ar_order(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_lag(mut self, d_lag: usize) -> Self {
        self.lag.d_lag = d_lag;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.est.k = k;
        self
    }

    pub fn with_estimator(mut self, est: EstimatorConfig) -> Self {
        self.est = est;
        self
    }

    pub fn with_ar_order(mut self, ar_order: usize) -> Self {
        self.ar_order = ar_order;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.target == self.source {
            return Err(Error::ChannelCollision(self.target.clone()));
        }
        for (i, s) in self.side.iter().enumerate() {
            if *s == self.target || *s == self.source || self.side[..i].contains(s) {
                return Err(Error::ChannelCollision(s.clone()));
            }
        }
        if self.kind.is_conditional() && self.side.is_empty() {
            return Err(Error::InvalidArgument(format!("measure `{}` needs side channels", self.kind)));
        }
        if !self.kind.is_conditional() && !self.side.is_empty() {
            return Err(Error::InvalidArgument(format!("measure `{}` takes no side channels", self.kind)));
        }
        if self.lag.d_lag == 0 || self.ar_order == 0 || self.est.k == 0 {
            return Err(Error::InvalidArgument("lag window, AR order and k must be positive".into()));
        }
        Ok(())
    }

    /// Lag window actually used by the embedding.
    pub fn window(&self) -> usize {
        if self.kind.is_geweke() {
            self.ar_order
        } else {
            self.lag.d_lag
        }
    }

    pub fn embedding_lag(&self) -> LagSpec {
        LagSpec { d_lag: self.window(), side_horizon: self.kind.side_horizon() }
    }

    /// Same measure with source and target exchanged.
    pub fn swapped(&self) -> Self {
        Self { target: self.source.clone(), source: self.target.clone(), ..self.clone() }
    }

    pub fn label(&self) -> String {
        if self.side.is_empty() {
            format!("{}({}->{})", self.kind, self.source, self.target)
        } else {
            format!("{}({}->{}|{})", self.kind, self.source, self.target, self.side.join(","))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureValue {
    /// Nats for information kinds, log variance ratio for Geweke kinds.
    pub value: f64,
    /// Raw variance ratio (Geweke kinds only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_ratio: Option<f64>,
    pub spec: MeasureSpec,
    pub n_points: usize,
}

pub fn embed(data: &SampleMatrix, spec: &MeasureSpec) -> Result<Embedding> {
    spec.validate()?;
    embed_measure(data, &spec.source, &spec.target, &spec.side, &spec.embedding_lag(), spec.kind)
}

/// Evaluates any measure kind on one record.
pub fn evaluate(data: &SampleMatrix, spec: &MeasureSpec) -> Result<MeasureValue> {
    let emb = embed(data, spec)?;
    evaluate_embedding(&emb, spec)
}

/// Evaluates a measure on an already embedded (possibly permuted) record.
pub fn evaluate_embedding(emb: &Embedding, spec: &MeasureSpec) -> Result<MeasureValue> {
    let (value, raw_ratio) = match (spec.kind, emb) {
        (kind, Embedding::Single(cloud)) if kind.is_geweke() => {
            let (log_ratio, ratio) = geweke_cloud(cloud)?;
            (log_ratio, Some(ratio))
        }
        (MeasureKind::DeltaI, Embedding::Pair { with_source, without_source }) => {
            let with = cmi_cloud(with_source, &spec.est)?.value;
            let without = cmi_cloud(without_source, &spec.est)?.value;
            (with - without, None)
        }
        (MeasureKind::DeltaI, _) | (_, Embedding::Pair { .. }) => {
            return Err(Error::InvalidArgument(format!("embedding does not fit measure `{}`", spec.kind)));
        }
        (_, Embedding::Single(cloud)) => (cmi_cloud(cloud, &spec.est)?.value, None),
    };
    if !value.is_finite() {
        return Err(Error::InvalidArgument(format!("{} evaluated to {value}", spec.label())));
    }
    Ok(MeasureValue { value, raw_ratio, spec: spec.clone(), n_points: emb.n_points() })
}

fn require(spec: &MeasureSpec, allowed: &[MeasureKind]) -> Result<()> {
    if allowed.contains(&spec.kind) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("measure `{}` is not handled here", spec.kind)))
    }
}

/// Transfer entropy, unconditional or conditioned on the side channels' past.
pub fn transfer_entropy(data: &SampleMatrix, spec: &MeasureSpec) -> Result<MeasureValue> {
    require(spec, &[MeasureKind::TransferEntropy, MeasureKind::CondTransferEntropy])?;
    evaluate(data, spec)
}

/// Instantaneous information exchange (bivariate, unconditional or conditional).
pub fn instantaneous_exchange(data: &SampleMatrix, spec: &MeasureSpec) -> Result<MeasureValue> {
    require(
        spec,
        &[MeasureKind::InstantExchange, MeasureKind::UncondInstantExchange, MeasureKind::CondInstantExchange],
    )?;
    evaluate(data, spec)
}

pub fn delta_i(data: &SampleMatrix, spec: &MeasureSpec) -> Result<MeasureValue> {
    require(spec, &[MeasureKind::DeltaI])?;
    evaluate(data, spec)
}

/// Geweke linear-prediction measures, reported as `ln` of the variance ratio.
pub fn geweke(data: &SampleMatrix, spec: &MeasureSpec) -> Result<MeasureValue> {
    require(
        spec,
        &[
            MeasureKind::GewekeDynamic,
            MeasureKind::GewekeCondDynamic,
            MeasureKind::GewekeInstant,
            MeasureKind::GewekeCondInstant,
        ],
    )?;
    evaluate(data, spec)
}

/// `(ln ratio, ratio)` of residual variances of `B` regressed on `C` versus on `(A, C)`.
pub fn geweke_cloud(cloud: &PointCloud) -> Result<(f64, f64)> {
    let y = cloud.project(&[BlockLabel::B]);
    if y.dim() != 1 {
        return Err(Error::Shape(format!("linear prediction needs a scalar target, got dim {}", y.dim())));
    }
    let restricted = residual_variance(y.data(), &cloud.project(&[BlockLabel::C]))?;
    let full = residual_variance(y.data(), &cloud.project(&[BlockLabel::A, BlockLabel::C]))?;
    if !(full > 0.0) {
        return Err(Error::RankDeficient { columns: cloud.dim(), rank: cloud.dim() - 1, condition: f64::INFINITY });
    }
    let ratio = restricted / full;
    Ok((ratio.ln(), ratio))
}

/// Least-squares residual variance (1/M normalization) of `y` on an intercept
/// plus the columns of `x`.
pub fn residual_variance(y: &[f64], x: &PointSet) -> Result<f64> {
    let m = y.len();
    if x.len() != m {
        return Err(Error::Shape(format!("{} responses for {} regressor rows", m, x.len())));
    }
    let p = x.dim() + 1;
    if m <= p {
        return Err(Error::InsufficientData { required: p + 1, available: m });
    }
    let design = DMatrix::from_fn(m, p, |i, j| if j == 0 { 1.0 } else { x.point(i)[j - 1] });
    let qr = design.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let rank = diag.iter().filter(|&&d| d > 1e-10 * max).count();
    if rank < p {
        return Err(Error::RankDeficient { columns: p, rank, condition: max / min });
    }
    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let rss: f64 = qty.iter().skip(p).map(|v| v * v).sum();
    Ok(rss / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in MeasureKind::ALL {
            assert_eq!(MeasureKind::from_name(k.short_name()).unwrap(), k);
        }
        assert_eq!(MeasureKind::from_name("cond_transfer_entropy").unwrap(), MeasureKind::CondTransferEntropy);
        assert!(MeasureKind::from_name("nope").is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(MeasureSpec::new(MeasureKind::TransferEntropy, "y", "x", &[]).is_ok());
        assert!(MeasureSpec::new(MeasureKind::TransferEntropy, "y", "x", &["z"]).is_err());
        assert!(MeasureSpec::new(MeasureKind::CondTransferEntropy, "y", "x", &[]).is_err());
        assert!(MeasureSpec::new(MeasureKind::CondTransferEntropy, "y", "y", &["z"]).is_err());
        assert!(MeasureSpec::new(MeasureKind::CondTransferEntropy, "y", "x", &["x"]).is_err());
        let s = MeasureSpec::new(MeasureKind::CondInstantExchange, "y", "x", &["z"]).unwrap();
        assert_eq!(s.lag.side_horizon, SideHorizon::UpToPresent);
        assert_eq!(s.window(), 2);
        let g = MeasureSpec::new(MeasureKind::GewekeDynamic, "y", "x", &[]).unwrap();
        assert_eq!(g.window(), 10);
    }

    #[test]
    fn residual_variance_of_exact_fit_is_zero() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let v = residual_variance(&y, &PointSet::from_values(&x)).unwrap();
        assert!(v < 1e-20);
    }

    #[test]
    fn residual_variance_intercept_only_is_population_variance() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let v = residual_variance(&y, &PointSet::empty(4)).unwrap();
        assert!((v - 1.25).abs() < 1e-14);
    }

    #[test]
    fn collinear_design_is_rejected() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let err = residual_variance(&y, &PointSet::from_rows(&rows).unwrap()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { columns: 3, rank: 2, .. }));
    }
}
