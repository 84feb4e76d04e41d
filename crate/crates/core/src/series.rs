//! Multichannel records and their lag embeddings.
//!
//! A [`SampleMatrix`] holds `N` time-ordered samples of `d` named channels.
//! [`embed_measure`] turns three channel roles (source, target, side) into a
//! [`PointCloud`] whose coordinates are grouped into the `A`, `B`, `C` blocks
//! of a conditional mutual information `I(A; B | C)`.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::MeasureKind;
use crate::neighbors::PointSet;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    names: Vec<String>,
    /// Row-major, `len * names.len()` values.
    data: Vec<f64>,
    len: usize,
}

impl SampleMatrix {
    /// Builds a matrix from row-major data.
    pub fn new(names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let d = names.len();
        if d == 0 || data.is_empty() {
            return Err(Error::EmptyRecord);
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::Shape(format!("{} values do not fill rows of {} channels", data.len(), d)));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateChannel(n.clone()));
            }
        }
        let len = data.len() / d;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / d, channel: names[pos % d].clone() });
        }
        Ok(Self { names, data, len })
    }

    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != names.len() {
            return Err(Error::Shape(format!("{} names for {} columns", names.len(), columns.len())));
        }
        let len = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("columns have unequal lengths".into()));
        }
        let d = columns.len();
        let mut data = Vec::with_capacity(len * d);
        for t in 0..len {
            data.extend(columns.iter().map(|c| c[t]));
        }
        Self::new(names, data)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_channels(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    #[inline]
    pub fn value(&self, t: usize, channel: usize) -> f64 {
        self.data[t * self.names.len() + channel]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.names.len();
        &self.data[t * d..(t + 1) * d]
    }

    pub fn column(&self, channel: usize) -> Vec<f64> {
        (0..self.len).map(|t| self.value(t, channel)).collect()
    }

    /// Rows `range` as a new record with the same channel names.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.len || range.start >= range.end {
            return Err(Error::InsufficientData { required: range.end, available: self.len });
        }
        let d = self.names.len();
        Ok(Self {
            names: self.names.clone(),
            data: self.data[range.start * d..range.end * d].to_vec(),
            len: range.end - range.start,
        })
    }

    /// Keeps only the named channels, in the given order.
    pub fn select(&self, channels: &[&str]) -> Result<Self> {
        let idx = channels.iter().map(|c| self.channel_index(c)).collect::<Result<Vec<_>>>()?;
        let cols: Vec<Vec<f64>> = idx.iter().map(|&i| self.column(i)).collect();
        Self::from_columns(channels.iter().map(|s| s.to_string()).collect(), &cols)
    }

    /// Per-channel z-scoring. Constant channels are only centered.
    pub fn zscored(&self) -> Self {
        let d = self.names.len();
        let mut out = self.data.clone();
        for c in 0..d {
            let (mean, sd) = channel_moments(self, c);
            let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
            for t in 0..self.len {
                let v = &mut out[t * d + c];
                *v = (*v - mean) * scale;
            }
        }
        Self { names: self.names.clone(), data: out, len: self.len }
    }

    /// Adds uniform noise of amplitude `1e-10 x channel scale` to break exact ties.
    pub fn jittered(&self, seed: u64) -> Self {
        const REL_AMPLITUDE: f64 = 1e-10;
        let d = self.names.len();
        let amps: Vec<f64> = (0..d)
            .map(|c| {
                let (_, sd) = channel_moments(self, c);
                REL_AMPLITUDE * if sd > 0.0 { sd } else { 1.0 }
            })
            .collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = self.data.iter().enumerate().map(|(i, &v)| v + amps[i % d] * rng.random_range(-1.0..1.0)).collect();
        Self { names: self.names.clone(), data, len: self.len }
    }

    /// Reads the CSV format: header row of channel names, one time step per row.
    /// Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut data = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(Error::Shape(format!(
                    "row {} has {} fields, expected {}",
                    row + 1,
                    rec.len(),
                    names.len()
                )));
            }
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::InvalidArgument(format!(
                        "row {}, channel `{}`: `{}` is not a number",
                        row + 1,
                        names[c],
                        field
                    ))
                })?;
                data.push(v);
            }
        }
        Self::new(names, data)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file =
            std::fs::File::open(path).map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        let mut buf = Vec::with_capacity(self.names.len());
        for t in 0..self.len {
            buf.clear();
            buf.extend(self.row(t).iter().map(|v| v.to_string()));
            w.write_record(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Splits into `n_blocks` consecutive non-overlapping segments of `block_len` samples.
    pub fn split_blocks(&self, n_blocks: usize, block_len: usize) -> Result<Vec<SampleMatrix>> {
        split_blocks(self, n_blocks, block_len)
    }
}

fn channel_moments(s: &SampleMatrix, c: usize) -> (f64, f64) {
    let n = s.len as f64;
    let mean = (0..s.len).map(|t| s.value(t, c)).sum::<f64>() / n;
    let var = (0..s.len).map(|t| (s.value(t, c) - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn split_blocks(s: &SampleMatrix, n_blocks: usize, block_len: usize) -> Result<Vec<SampleMatrix>> {
    if n_blocks == 0 || block_len == 0 {
        return Err(Error::InvalidArgument("n_blocks and block_len must be positive".into()));
    }
    let required = n_blocks * block_len;
    if required > s.len() {
        return Err(Error::InsufficientData { required, available: s.len() });
    }
    (0..n_blocks).map(|b| s.slice(b * block_len..(b + 1) * block_len)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SideHorizon {
    /// Side channels enter through their past only.
    #[default]
    PastOnly,
    /// Side channels enter through their past and present.
    UpToPresent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LagSpec {
    pub d_lag: usize,
    #[serde(default)]
    pub side_horizon: SideHorizon,
}

impl LagSpec {
    pub fn new(d_lag: usize, side_horizon: SideHorizon) -> Result<Self> {
        if d_lag == 0 {
            return Err(Error::InvalidArgument("lag window must be at least 1".into()));
        }
        Ok(Self { d_lag, side_horizon })
    }

    pub fn past_only(d_lag: usize) -> Self {
        Self { d_lag: d_lag.max(1), side_horizon: SideHorizon::PastOnly }
    }

    pub fn with_horizon(self, side_horizon: SideHorizon) -> Self {
        Self { side_horizon, ..self }
    }
}

impl Default for LagSpec {
    fn default() -> Self {
        Self { d_lag: 2, side_horizon: SideHorizon::PastOnly }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockLabel {
    A,
    B,
    C,
}

/// One embedded coordinate: channel value `lag` samples before the reference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub channel: usize,
    pub lag: usize,
}

/// Coordinate content of the `A`, `B`, `C` blocks of one embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub a: Vec<Coord>,
    pub b: Vec<Coord>,
    pub c: Vec<Coord>,
    /// Largest lag referenced; embedded clouds have `N - window` points.
    pub window: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.a.len() + self.b.len() + self.c.len()
    }

    pub fn columns(&self) -> impl Iterator<Item = &Coord> {
        self.a.iter().chain(&self.b).chain(&self.c)
    }
}

fn past(channel: usize, d: usize) -> impl Iterator<Item = Coord> {
    (1..=d).rev().map(move |lag| Coord { channel, lag })
}

fn present(channel: usize) -> Coord {
    Coord { channel, lag: 0 }
}

/// The one or two embeddings a measure needs.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Single(PointCloud),
    /// The two CMIs whose difference is the ΔI term.
    Pair {
        with_source: PointCloud,
        without_source: PointCloud,
    },
}

impl Embedding {
    pub fn clouds(&self) -> Vec<&PointCloud> {
        match self {
            Embedding::Single(c) => vec![c],
            Embedding::Pair { with_source, without_source } => vec![with_source, without_source],
        }
    }

    pub fn n_points(&self) -> usize {
        self.clouds()[0].n_points()
    }
}

/// Coordinate layouts for `kind` with channel indices already resolved.
///
/// `window` is the lag window used for every channel (the AR order for the
/// linear-prediction kinds). For the instantaneous family the side horizon of
/// `lag` decides whether side presents join the conditioning block.
pub fn layouts(
    kind: MeasureKind,
    source: usize,
    target: usize,
    side: &[usize],
    window: usize,
    horizon: SideHorizon,
) -> Vec<Layout> {
    use MeasureKind::*;
    let d = window;
    let side_past = || side.iter().flat_map(move |&s| past(s, d)).collect::<Vec<_>>();
    match kind {
        TransferEntropy | CondTransferEntropy | GewekeDynamic | GewekeCondDynamic => {
            let mut c: Vec<Coord> = past(target, d).collect();
            c.extend(side_past());
            vec![Layout { a: past(source, d).collect(), b: vec![present(target)], c, window: d }]
        }
        InstantExchange | UncondInstantExchange | CondInstantExchange | GewekeInstant | GewekeCondInstant => {
            let mut c: Vec<Coord> = past(source, d).chain(past(target, d)).collect();
            c.extend(side_past());
            if horizon == SideHorizon::UpToPresent {
                c.extend(side.iter().map(|&s| present(s)));
            }
            vec![Layout { a: vec![present(source)], b: vec![present(target)], c, window: d }]
        }
        DeltaI => {
            let a: Vec<Coord> = side.iter().map(|&s| present(s)).collect();
            let mut with: Vec<Coord> = past(source, d).chain(past(target, d)).collect();
            with.extend(side_past());
            let mut without: Vec<Coord> = past(target, d).collect();
            without.extend(side_past());
            vec![
                Layout { a: a.clone(), b: vec![present(target)], c: with, window: d },
                Layout { a, b: vec![present(target)], c: without, window: d },
            ]
        }
    }
}

/// Builds the point cloud(s) for `kind` from one record.
///
/// Point `p` is anchored at time `t = p + window`, so every lag stays inside
/// the record and `M = N - window`.
pub fn embed_measure(
    data: &SampleMatrix,
    source: &str,
    target: &str,
    side: &[String],
    lag: &LagSpec,
    kind: MeasureKind,
) -> Result<Embedding> {
    if data.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if lag.d_lag == 0 {
        return Err(Error::InvalidArgument("lag window must be at least 1".into()));
    }
    let s = data.channel_index(source)?;
    let t = data.channel_index(target)?;
    if s == t {
        return Err(Error::ChannelCollision(source.to_string()));
    }
    let mut side_idx = Vec::with_capacity(side.len());
    for name in side {
        let i = data.channel_index(name)?;
        if i == s || i == t || side_idx.contains(&i) {
            return Err(Error::ChannelCollision(name.clone()));
        }
        side_idx.push(i);
    }
    if kind == MeasureKind::DeltaI && side_idx.is_empty() {
        return Err(Error::InvalidArgument("ΔI needs at least one side channel".into()));
    }
    if lag.d_lag >= data.len() {
        return Err(Error::LagTooLong { lag: lag.d_lag, len: data.len() });
    }
    let clouds = layouts(kind, s, t, &side_idx, lag.d_lag, lag.side_horizon)
        .iter()
        .map(|l| PointCloud::from_layout(data, l))
        .collect::<Result<Vec<_>>>()?;
    let mut it = clouds.into_iter();
    let first = it.next().expect("at least one layout");
    Ok(match it.next() {
        None => Embedding::Single(first),
        Some(second) => Embedding::Pair { with_source: first, without_source: second },
    })
}

/// Embedded points with labeled coordinate blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<f64>,
    n_points: usize,
    dim: usize,
    blocks: Vec<(BlockLabel, Range<usize>)>,
    columns: Vec<Coord>,
}

impl PointCloud {
    pub fn from_layout(data: &SampleMatrix, layout: &Layout) -> Result<Self> {
        let window = layout.window;
        if window >= data.len() {
            return Err(Error::LagTooLong { lag: window, len: data.len() });
        }
        let columns: Vec<Coord> = layout.columns().copied().collect();
        let dim = columns.len();
        let n_points = data.len() - window;
        let mut points = Vec::with_capacity(n_points * dim);
        for p in 0..n_points {
            let t = p + window;
            points.extend(columns.iter().map(|c| data.value(t - c.lag, c.channel)));
        }
        let (na, nb) = (layout.a.len(), layout.b.len());
        let blocks = vec![(BlockLabel::A, 0..na), (BlockLabel::B, na..na + nb), (BlockLabel::C, na + nb..dim)];
        Ok(Self { points, n_points, dim, blocks, columns })
    }

    /// Direct construction from block matrices (each `n` rows).
    pub fn from_blocks(a: &PointSet, b: &PointSet, c: &PointSet) -> Result<Self> {
        let n = a.len();
        if b.len() != n || c.len() != n {
            return Err(Error::Shape("blocks have different point counts".into()));
        }
        let joint = PointSet::concat(&[a, b, c])?;
        let (na, nb, nc) = (a.dim(), b.dim(), c.dim());
        let blocks = vec![(BlockLabel::A, 0..na), (BlockLabel::B, na..na + nb), (BlockLabel::C, na + nb..na + nb + nc)];
        let columns = (0..joint.dim()).map(|i| Coord { channel: i, lag: 0 }).collect();
        Ok(Self { n_points: n, dim: joint.dim(), points: joint.into_data(), blocks, columns })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn blocks(&self) -> &[(BlockLabel, Range<usize>)] {
        &self.blocks
    }

    pub fn columns(&self) -> &[Coord] {
        &self.columns
    }

    pub fn block_range(&self, label: BlockLabel) -> Range<usize> {
        self.blocks.iter().find(|(l, _)| *l == label).map(|(_, r)| r.clone()).unwrap_or(0..0)
    }

    /// The coordinates of the given blocks, concatenated in the given order.
    pub fn project(&self, labels: &[BlockLabel]) -> PointSet {
        let ranges: Vec<Range<usize>> = labels.iter().map(|&l| self.block_range(l)).collect();
        let dim: usize = ranges.iter().map(|r| r.len()).sum();
        let mut data = Vec::with_capacity(self.n_points * dim);
        for i in 0..self.n_points {
            let p = self.point(i);
            for r in &ranges {
                data.extend_from_slice(&p[r.clone()]);
            }
        }
        PointSet::from_vec(data, self.n_points, dim).expect("projection keeps the shape")
    }

    /// Copy with the rows of block `label` reordered: row `i` takes row `perm[i]`.
    pub fn with_permuted_block(&self, label: BlockLabel, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_points {
            return Err(Error::Shape(format!("permutation of length {} for {} points", perm.len(), self.n_points)));
        }
        let r = self.block_range(label);
        let mut out = self.clone();
        for (i, &src) in perm.iter().enumerate() {
            let from = src * self.dim;
            let to = i * self.dim;
            out.points[to + r.start..to + r.end].copy_from_slice(&self.points[from + r.start..from + r.end]);
        }
        Ok(out)
    }
}
