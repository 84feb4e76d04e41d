//! Metrics and exact neighbor queries.
//!
//! [`NeighborIndex`] is a kd-tree with per-node bounding boxes. Subtrees are
//! pruned with the box-to-query distance and, for radius counts, counted
//! wholesale when the box lies entirely inside the ball. All answers are
//! exact and use the same floating-point distance as a brute-force scan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major set of `len` points in dimension `dim`. `dim == 0` is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    len: usize,
    dim: usize,
}

impl PointSet {
    pub fn from_vec(data: Vec<f64>, len: usize, dim: usize) -> Result<Self> {
        if data.len() != len * dim {
            return Err(Error::Shape(format!("{} values for {len} points of dim {dim}", data.len())));
        }
        Ok(Self { data, len, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("rows have unequal lengths".into()));
        }
        Ok(Self { data: rows.concat(), len: rows.len(), dim })
    }

    /// One-dimensional set.
    pub fn from_values(values: &[f64]) -> Self {
        Self { data: values.to_vec(), len: values.len(), dim: 1 }
    }

    /// Points with no coordinates.
    pub fn empty(len: usize) -> Self {
        Self { data: Vec::new(), len, dim: 0 }
    }

    /// Column-wise concatenation of sets with equal point counts.
    pub fn concat(parts: &[&PointSet]) -> Result<Self> {
        let len = parts.first().map_or(0, |p| p.len);
        if parts.iter().any(|p| p.len != len) {
            return Err(Error::Shape("point sets have different point counts".into()));
        }
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut data = Vec::with_capacity(len * dim);
        for i in 0..len {
            for p in parts {
                data.extend_from_slice(p.point(i));
            }
        }
        Ok(Self { data, len, dim })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Multiplies every coordinate by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self { data: self.data.iter().map(|v| v * s).collect(), ..*self }
    }

    /// Reorders points: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.point(p));
        }
        Self { data, len: perm.len(), dim: self.dim }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Max of per-coordinate absolute differences.
    #[default]
    Chebyshev,
    Euclidean,
}

impl Metric {
    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Chebyshev => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }

    /// Natural log of the unit-ball volume in dimension `n`.
    pub fn log_unit_ball_volume(self, n: usize) -> f64 {
        match self {
            Metric::Chebyshev => n as f64 * std::f64::consts::LN_2,
            Metric::Euclidean => {
                // V_n = V_{n-2} * 2π / n, V_0 = 1, V_1 = 2
                let mut log_v = if n.is_multiple_of(2) { 0.0 } else { std::f64::consts::LN_2 };
                let mut m = if n.is_multiple_of(2) { 2 } else { 3 };
                while m <= n {
                    log_v += (2.0 * std::f64::consts::PI / m as f64).ln();
                    m += 2;
                }
                log_v
            }
        }
    }

    /// Distance from `q` to the closest point of the box.
    #[inline]
    fn min_to_box(self, q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            Metric::Chebyshev => {
                let mut m = 0.0_f64;
                for ((&x, &l), &h) in q.iter().zip(lo).zip(hi) {
                    let d = if x < l {
                        l - x
                    } else if x > h {
                        x - h
                    } else {
                        0.0
                    };
                    m = m.max(d);
                }
                m
            }
            Metric::Euclidean => {
                let mut s = 0.0;
                for ((&x, &l), &h) in q.iter().zip(lo).zip(hi) {
                    let d = if x < l {
                        l - x
                    } else if x > h {
                        x - h
                    } else {
                        0.0
                    };
                    s += d * d;
                }
                s.sqrt()
            }
        }
    }

    /// Distance from `q` to the farthest point of the box.
    #[inline]
    fn max_to_box(self, q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            Metric::Chebyshev => {
                let mut m = 0.0_f64;
                for ((&x, &l), &h) in q.iter().zip(lo).zip(hi) {
                    m = m.max((x - l).abs()).max((h - x).abs());
                }
                m
            }
            Metric::Euclidean => {
                let mut s = 0.0;
                for ((&x, &l), &h) in q.iter().zip(lo).zip(hi) {
                    let d = (x - l).abs().max((h - x).abs());
                    s += d * d;
                }
                s.sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// `d < r`
    #[default]
    Strict,
    /// `d <= r`
    Inclusive,
}

impl CountMode {
    #[inline]
    fn inside(self, d: f64, r: f64) -> bool {
        match self {
            CountMode::Strict => d < r,
            CountMode::Inclusive => d <= r,
        }
    }
}

const LEAF_SIZE: usize = 16;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    start: u32,
    end: u32,
    left: u32,
    right: u32,
}

/// Exact kd-tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dim: usize,
    metric: Metric,
    /// Points in tree order.
    coords: Vec<f64>,
    /// Tree slot -> original index.
    order: Vec<u32>,
    /// Original index -> tree slot.
    slot_of: Vec<u32>,
    nodes: Vec<Node>,
    /// Per node: `dim` lower bounds followed by `dim` upper bounds.
    bounds: Vec<f64>,
}

impl NeighborIndex {
    pub fn build(points: &PointSet, metric: Metric) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::TooFewPoints { required: 2, got: n });
        }
        if n >= u32::MAX as usize {
            return Err(Error::InvalidArgument("too many points for the index".into()));
        }
        let dim = points.dim();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut index = Self {
            dim,
            metric,
            coords: Vec::new(),
            order: Vec::new(),
            slot_of: Vec::new(),
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            bounds: Vec::new(),
        };
        index.build_node(points, &mut order, 0);
        let mut coords = Vec::with_capacity(n * dim);
        let mut slot_of = vec![0u32; n];
        for (slot, &orig) in order.iter().enumerate() {
            coords.extend_from_slice(points.point(orig as usize));
            slot_of[orig as usize] = slot as u32;
        }
        index.coords = coords;
        index.order = order;
        index.slot_of = slot_of;
        Ok(index)
    }

    fn build_node(&mut self, points: &PointSet, order: &mut [u32], offset: usize) -> u32 {
        let dim = self.dim;
        let id = self.nodes.len();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &o in order.iter() {
            for (k, &v) in points.point(o as usize).iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        self.nodes.push(Node {
            start: offset as u32,
            end: (offset + order.len()) as u32,
            left: NO_CHILD,
            right: NO_CHILD,
        });
        self.bounds.extend_from_slice(&lo);
        self.bounds.extend_from_slice(&hi);

        if order.len() <= LEAF_SIZE || dim == 0 {
            return id as u32;
        }
        let (split_dim, spread) =
            (0..dim).map(|k| (k, hi[k] - lo[k])).fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if spread <= 0.0 {
            return id as u32;
        }
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            let va = points.point(a as usize)[split_dim];
            let vb = points.point(b as usize)[split_dim];
            va.total_cmp(&vb).then(a.cmp(&b))
        });
        let (left_part, right_part) = order.split_at_mut(mid);
        let left = self.build_node(points, left_part, offset);
        let right = self.build_node(points, right_part, offset + mid);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id as u32
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    fn slot_point(&self, slot: usize) -> &[f64] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    #[inline]
    fn node_box(&self, node: usize) -> (&[f64], &[f64]) {
        let base = node * 2 * self.dim;
        (&self.bounds[base..base + self.dim], &self.bounds[base + self.dim..base + 2 * self.dim])
    }

    fn check_id(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::InvalidArgument(format!("point id {i} out of range 0..{}", self.len())));
        }
        Ok(())
    }

    /// Distance from point `i` to its `k`-th nearest other point.
    pub fn kth_distance(&self, i: usize, k: usize) -> Result<f64> {
        self.check_id(i)?;
        if k == 0 || k >= self.len() {
            return Err(Error::InvalidK { k, n_points: self.len() });
        }
        Ok(self.kth_distance_unchecked(i, k))
    }

    pub(crate) fn kth_distance_unchecked(&self, i: usize, k: usize) -> f64 {
        let slot = self.slot_of[i] as usize;
        let q = self.slot_point(slot).to_vec();
        let mut best = KBest::new(k);
        self.knn_rec(0, &q, slot, &mut best);
        best.worst()
    }

    fn knn_rec(&self, node: usize, q: &[f64], exclude: usize, best: &mut KBest) {
        let n = &self.nodes[node];
        if n.left == NO_CHILD {
            for slot in n.start as usize..n.end as usize {
                if slot == exclude {
                    continue;
                }
                let d = self.metric.distance(q, self.slot_point(slot));
                best.offer(d);
            }
            return;
        }
        let (l, r) = (n.left as usize, n.right as usize);
        let (llo, lhi) = self.node_box(l);
        let (rlo, rhi) = self.node_box(r);
        let dl = self.metric.min_to_box(q, llo, lhi);
        let dr = self.metric.min_to_box(q, rlo, rhi);
        let ((first, df), (second, ds)) = if dl <= dr { ((l, dl), (r, dr)) } else { ((r, dr), (l, dl)) };
        if !best.full() || df < best.worst() {
            self.knn_rec(first, q, exclude, best);
        }
        if !best.full() || ds < best.worst() {
            self.knn_rec(second, q, exclude, best);
        }
    }

    /// Number of points `j != i` within distance `r` of point `i`.
    pub fn count_within(&self, i: usize, r: f64, mode: CountMode) -> Result<usize> {
        self.check_id(i)?;
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
        }
        Ok(self.count_within_unchecked(i, r, mode))
    }

    pub(crate) fn count_within_unchecked(&self, i: usize, r: f64, mode: CountMode) -> usize {
        let slot = self.slot_of[i] as usize;
        let q = self.slot_point(slot).to_vec();
        // The query itself is always inside the ball.
        self.count_rec(0, &q, r, mode) - 1
    }

    fn count_rec(&self, node: usize, q: &[f64], r: f64, mode: CountMode) -> usize {
        let n = &self.nodes[node];
        let (lo, hi) = self.node_box(node);
        if !mode.inside(self.metric.min_to_box(q, lo, hi), r) {
            return 0;
        }
        if mode.inside(self.metric.max_to_box(q, lo, hi), r) {
            return (n.end - n.start) as usize;
        }
        if n.left == NO_CHILD {
            return (n.start as usize..n.end as usize)
                .filter(|&s| mode.inside(self.metric.distance(q, self.slot_point(s)), r))
                .count();
        }
        self.count_rec(n.left as usize, q, r, mode) + self.count_rec(n.right as usize, q, r, mode)
    }
}

/// The `k` smallest distances seen so far, ascending.
struct KBest {
    k: usize,
    values: Vec<f64>,
}

impl KBest {
    fn new(k: usize) -> Self {
        Self { k, values: Vec::with_capacity(k + 1) }
    }

    #[inline]
    fn full(&self) -> bool {
        self.values.len() == self.k
    }

    #[inline]
    fn worst(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::INFINITY)
    }

    #[inline]
    fn offer(&mut self, d: f64) {
        if self.full() && d >= self.worst() {
            return;
        }
        let pos = self.values.partition_point(|&v| v <= d);
        self.values.insert(pos, d);
        if self.values.len() > self.k {
            self.values.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> NeighborIndex {
        NeighborIndex::build(&PointSet::from_values(&[0.0, 1.0, 3.0]), Metric::Chebyshev).unwrap()
    }

    #[test]
    fn kth_distance_on_a_line() {
        let idx = line();
        assert_eq!(idx.kth_distance(0, 1).unwrap(), 1.0);
        assert_eq!(idx.kth_distance(0, 2).unwrap(), 3.0);
        assert!(matches!(idx.kth_distance(0, 3), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn counts_on_a_line() {
        let idx = line();
        assert_eq!(idx.count_within(0, 1.0, CountMode::Strict).unwrap(), 0);
        assert_eq!(idx.count_within(0, 1.0, CountMode::Inclusive).unwrap(), 1);
        assert_eq!(idx.count_within(0, 3.5, CountMode::Strict).unwrap(), 2);
        assert!(idx.count_within(0, 0.0, CountMode::Strict).is_err());
        assert!(idx.count_within(7, 1.0, CountMode::Strict).is_err());
    }

    #[test]
    fn chebyshev_grid_distance() {
        assert_eq!(Metric::Chebyshev.distance(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        assert_eq!(Metric::Euclidean.distance(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
    }

    #[test]
    fn duplicates_and_minimum_size() {
        let dup = PointSet::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let idx = NeighborIndex::build(&dup, Metric::Chebyshev).unwrap();
        assert_eq!(idx.kth_distance(0, 1).unwrap(), 0.0);
        let one = PointSet::from_values(&[1.0]);
        assert!(matches!(
            NeighborIndex::build(&one, Metric::Chebyshev),
            Err(Error::TooFewPoints { required: 2, got: 1 })
        ));
    }

    #[test]
    fn unit_ball_volumes() {
        let e = Metric::Euclidean;
        assert!((e.log_unit_ball_volume(1) - 2f64.ln()).abs() < 1e-15);
        assert!((e.log_unit_ball_volume(2) - std::f64::consts::PI.ln()).abs() < 1e-15);
        assert!((e.log_unit_ball_volume(3) - (4.0 / 3.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        assert!((Metric::Chebyshev.log_unit_ball_volume(3) - 8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn constant_coordinates_build_a_leaf() {
        let pts = PointSet::from_values(&vec![2.0; 100]);
        let idx = NeighborIndex::build(&pts, Metric::Chebyshev).unwrap();
        assert_eq!(idx.kth_distance(10, 5).unwrap(), 0.0);
        assert_eq!(idx.count_within(10, 1.0, CountMode::Strict).unwrap(), 99);
    }
}
