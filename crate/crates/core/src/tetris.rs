//! Streaming construction of a projection with a non-summable diagonal.
//!
//! The input `d₁ ∈ [0,1)`, `dᵢ ∈ [0,1/2]` for `i ≥ 2`, `Σdᵢ = ∞` is cut into
//! blocks `(m_{n−1}, m_n]` at the first partial sums reaching each integer
//! `n`. Each block is sorted nonincreasing, giving the reordering `π`, and
//! `k_n` is the first index at which the reordered partial sums reach `n`.
//! Row `v_n` then has finite support `[k_{n−1}−1, k_n]`, unit norm, and is
//! orthogonal to `v_{n−1}` because of how `a_n` is chosen; column `i`
//! collects squared norm `d_{π(i)}` once no later row touches it.
//!
//! Positions below are 0-based; `m_n` and `k_n` are kept as 1-based counts.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::diagonal::DiagonalSpec;
use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

/// Terms are pulled from the source in chunks of this size.
pub const CHUNK: usize = 1024;

/// Slack allowed on the σ bounds and on radicands before they are clamped.
const ROUNDING_SLACK: f64 = 1e-12;

/// A lazily evaluated input sequence.
pub trait TermSource: Send {
    /// Entry `i` of the sequence with its index in the caller's numbering,
    /// or `None` when the source is exhausted.
    fn fetch(&mut self, i: usize) -> Option<(usize, f64)>;
}

/// A [`DiagonalSpec`] read in order, optionally complemented.
#[derive(Clone, Debug)]
pub struct SpecSource {
    spec: DiagonalSpec,
    complement: bool,
}

impl SpecSource {
    pub fn new(spec: DiagonalSpec) -> Self {
        Self { spec, complement: false }
    }

    pub fn complemented(spec: DiagonalSpec) -> Self {
        Self { spec, complement: true }
    }
}

impl TermSource for SpecSource {
    fn fetch(&mut self, i: usize) -> Option<(usize, f64)> {
        let d = self.spec.term(i)?;
        Some((i, if self.complement { 1.0 - d } else { d }))
    }
}

impl TermSource for Vec<f64> {
    fn fetch(&mut self, i: usize) -> Option<(usize, f64)> {
        self.get(i).map(|&d| (i, d))
    }
}

/// One row `v_n`, supported on consecutive positions starting at `start`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(from = "RowWire")]
pub struct SparseRow {
    /// 1-based row number.
    pub n: usize,
    pub start: usize,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
struct RowWire {
    n: usize,
    support: [usize; 2],
    values: Vec<f64>,
}

impl From<RowWire> for SparseRow {
    fn from(w: RowWire) -> Self {
        SparseRow { n: w.n, start: w.support[0], values: w.values }
    }
}

impl Serialize for SparseRow {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("SparseRow", 3)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("support", &[self.start, self.end()])?;
        st.serialize_field("values", &self.values)?;
        st.end()
    }
}

impl SparseRow {
    /// Last position in the support (inclusive).
    pub fn end(&self) -> usize {
        self.start + self.values.len() - 1
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &SparseRow) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end().min(other.end());
        if lo > hi {
            return 0.0;
        }
        (lo..=hi)
            .map(|p| self.values[p - self.start] * other.values[p - other.start])
            .sum()
    }
}

/// The 2×2 transfer table `[[a, σ−a], [d₁−a, d₂−σ+a]]` for the `a` with
/// `a(d₁ − a) = (σ − a)(d₂ − σ + a)`, written as
/// `[[σ·w, σ·(1−w)], [z·(1−w), z·w]]` where `w = x/(x+y)`, `x = σ−d₂`,
/// `y = σ−d₁`, `z = d₁+d₂−σ`. Every entry is a product of nonnegative
/// factors, so square roots of the entries stay accurate near the edges
/// of the feasible range. Degenerate `d₁ = d₂ = σ` takes `w = 1`, i.e. `a = σ`.
pub fn transfer_table(sigma: f64, d1: f64, d2: f64) -> Result<[[f64; 2]; 2]> {
    if d1.max(d2) > sigma + ROUNDING_SLACK {
        return Err(Error::Precondition(format!(
            "max(d1, d2) = {} exceeds sigma = {sigma}",
            d1.max(d2)
        )));
    }
    if sigma > d1 + d2 + ROUNDING_SLACK {
        return Err(Error::Precondition(format!(
            "sigma = {sigma} exceeds d1 + d2 = {}",
            d1 + d2
        )));
    }
    if !(0.0..=1.0 + ROUNDING_SLACK).contains(&sigma) {
        return Err(Error::Precondition(format!("sigma = {sigma} outside [0, 1]")));
    }
    let x = (sigma - d2).max(0.0);
    let y = (sigma - d1).max(0.0);
    let z = (d1 + d2 - sigma).max(0.0);
    let (w, wc) = if x + y > 0.0 { (x / (x + y), y / (x + y)) } else { (1.0, 0.0) };
    Ok([[sigma * w, sigma * wc], [z * wc, z * w]])
}

/// `a` from [`transfer_table`].
pub fn solve_a(sigma: f64, d1: f64, d2: f64) -> Result<f64> {
    Ok(transfer_table(sigma, d1, d2)?[0][0])
}

/// Squared column norms of the columns no future row will touch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletedColumns {
    pub count: usize,
    /// Accumulated `Σ_n v_n[i]²` for positions `0..count`.
    pub norms_sq: Vec<f64>,
    /// `d_{π(i)}` for the same positions.
    pub targets: Vec<f64>,
    /// Caller's index of each position.
    pub origins: Vec<usize>,
}

impl CompletedColumns {
    pub fn max_error(&self) -> f64 {
        self.norms_sq
            .iter()
            .zip(&self.targets)
            .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
    }
}

/// `P = Σ v_n v_nᵀ` on the touched positions, in the caller's order.
#[derive(Clone, Debug)]
pub struct ProjectionPrefix {
    pub matrix: SymmetricMatrix,
    /// Caller's index of each matrix coordinate, ascending.
    pub indices: Vec<usize>,
    /// Whether each coordinate's diagonal entry is final.
    pub completed: Vec<bool>,
}

/// Output of [`reorder`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reordering {
    /// `perm[p]` is the input index placed at position `p`.
    pub perm: Vec<usize>,
    /// `m_1, m_2, …` (1-based counts).
    pub m: Vec<usize>,
    /// `k_1, k_2, …` (1-based counts).
    pub k: Vec<usize>,
}

/// Neumaier running sum that can be snapshotted.
#[derive(Clone, Copy, Debug, Default)]
struct RunningSum {
    sum: f64,
    comp: f64,
}

impl RunningSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Incremental state of the row construction. Single owner; advancing is
/// sequential.
pub struct TetrisStream {
    source: Box<dyn TermSource>,
    exhausted: bool,
    /// Materialized input, in input order.
    values: Vec<f64>,
    origins: Vec<usize>,
    /// Input-order running sum after each materialized term.
    running: RunningSum,
    partial: Vec<f64>,
    /// Reordered sequence `d_{π(p)}` and partial sums, one block at a time.
    perm: Vec<usize>,
    pvalues: Vec<f64>,
    ppartial: Vec<f64>,
    m: Vec<usize>,
    k: Vec<usize>,
    sigma: Vec<f64>,
    table: Vec<[[f64; 2]; 2]>,
    rows: Vec<SparseRow>,
    col_norm_sq: Vec<f64>,
}

impl std::fmt::Debug for TetrisStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TetrisStream")
            .field("materialized", &self.values.len())
            .field("blocks", &self.m.len())
            .field("rows_emitted", &self.rows.len())
            .finish()
    }
}

impl TetrisStream {
    pub fn new(source: Box<dyn TermSource>) -> Self {
        Self {
            source,
            exhausted: false,
            values: Vec::new(),
            origins: Vec::new(),
            running: RunningSum::default(),
            partial: Vec::new(),
            perm: Vec::new(),
            pvalues: Vec::new(),
            ppartial: Vec::new(),
            m: Vec::new(),
            k: Vec::new(),
            sigma: Vec::new(),
            table: Vec::new(),
            rows: Vec::new(),
            col_norm_sq: Vec::new(),
        }
    }

    pub fn from_spec(spec: DiagonalSpec) -> Self {
        Self::new(Box::new(SpecSource::new(spec)))
    }

    pub fn rows_emitted(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn materialized(&self) -> usize {
        self.values.len()
    }

    /// Pulls the next chunk from the source.
    fn materialize_chunk(&mut self) -> Result<bool> {
        if self.exhausted {
            return Ok(false);
        }
        let base = self.values.len();
        for i in base..base + CHUNK {
            let Some((origin, d)) = self.source.fetch(i) else {
                self.exhausted = true;
                break;
            };
            let ok = if i == 0 { (0.0..1.0).contains(&d) } else { (0.0..=0.5).contains(&d) };
            if !ok {
                return Err(Error::Precondition(format!(
                    "entry {i} = {d}: the first entry must lie in [0, 1), later ones in [0, 1/2]"
                )));
            }
            self.values.push(d);
            self.origins.push(origin);
            self.running.add(d);
            self.partial.push(self.running.value());
        }
        Ok(self.values.len() > base)
    }

    /// Makes sure `m_n`, the sorted block and `k_n`, `σ_n`, `a_n` are known.
    fn ensure_block(&mut self, n: usize) -> Result<()> {
        while self.m.len() < n {
            let b = self.m.len() + 1;
            let target = b as f64;
            let prev_m = self.m.last().copied().unwrap_or(0);
            let mut search_from = prev_m;
            let m_b = loop {
                if let Some(off) = self.partial[search_from..].iter().position(|&s| s >= target) {
                    break search_from + off + 1;
                }
                search_from = self.partial.len();
                if !self.materialize_chunk()? {
                    return Err(Error::NeedsMoreTerms {
                        requested: b,
                        available: self.values.len(),
                    });
                }
            };

            // Sort the block (prev_m, m_b] nonincreasing, stably.
            let mut block: Vec<usize> = (prev_m..m_b).collect();
            block.sort_by(|&x, &y| self.values[y].total_cmp(&self.values[x]));
            let mut run = RunningSum::default();
            if prev_m > 0 {
                run.sum = self.partial[prev_m - 1];
            }
            for &idx in &block {
                run.add(self.values[idx]);
                self.perm.push(idx);
                self.pvalues.push(self.values[idx]);
                self.ppartial.push(run.value());
            }

            let k_b = ((prev_m + 1)..=m_b)
                .find(|&kk| self.ppartial[kk - 1] >= target)
                .unwrap_or(m_b);
            if k_b < prev_m + 2 {
                return Err(Error::InfeasibleStep(format!(
                    "k_{b} = {k_b} violates k_n >= m_(n-1) + 2 with m_(n-1) = {prev_m}"
                )));
            }
            let d1 = self.pvalues[k_b - 2];
            let d2 = self.pvalues[k_b - 1];
            if d1 < d2 {
                return Err(Error::InfeasibleStep(format!(
                    "reordering left d_pi(k-1) = {d1} < d_pi(k) = {d2} in block {b}"
                )));
            }
            let before = if k_b >= 3 { self.ppartial[k_b - 3] } else { 0.0 };
            let raw_sigma = target - before;
            let lo = d1.max(d2);
            let hi = d1 + d2;
            if raw_sigma < lo - ROUNDING_SLACK || raw_sigma > hi + ROUNDING_SLACK {
                return Err(Error::InfeasibleStep(format!(
                    "sigma_{b} = {raw_sigma} outside [{lo}, {hi}]"
                )));
            }
            let sigma = raw_sigma.clamp(lo, hi);
            let table = transfer_table(sigma, d1, d2)?;

            self.m.push(m_b);
            self.k.push(k_b);
            self.sigma.push(sigma);
            self.table.push(table);
        }
        Ok(())
    }

    /// `σ_n` (1-based `n`).
    pub fn sigma_n(&mut self, n: usize) -> Result<f64> {
        assert!(n >= 1, "rows are numbered from 1");
        self.ensure_block(n)?;
        Ok(self.sigma[n - 1])
    }

    /// `a_n` (1-based `n`).
    pub fn a_n(&mut self, n: usize) -> Result<f64> {
        assert!(n >= 1, "rows are numbered from 1");
        self.ensure_block(n)?;
        Ok(self.table[n - 1][0][0])
    }

    /// `(m_n, k_n)` as 1-based counts.
    pub fn thresholds(&mut self, n: usize) -> Result<(usize, usize)> {
        assert!(n >= 1, "rows are numbered from 1");
        self.ensure_block(n)?;
        Ok((self.m[n - 1], self.k[n - 1]))
    }

    /// Emits `v_n` for the next `n`.
    pub fn next_row(&mut self) -> Result<SparseRow> {
        let n = self.rows.len() + 1;
        self.ensure_block(n)?;
        let k_n = self.k[n - 1];
        let [[a, rest], _] = self.table[n - 1];

        let mut values = Vec::new();
        let (start, first_free) = if n == 1 {
            (0, 0)
        } else {
            let k_prev = self.k[n - 2];
            let [_, [low1, low2]] = self.table[n - 2];
            values.push(low1.sqrt());
            values.push(low2.sqrt());
            (k_prev - 2, k_prev)
        };
        values.extend(self.pvalues[first_free..(k_n - 2)].iter().map(|d| d.sqrt()));
        values.push(a.sqrt());
        values.push(-rest.sqrt());

        let row = SparseRow { n, start, values };
        if self.col_norm_sq.len() < k_n {
            self.col_norm_sq.resize(k_n, 0.0);
        }
        for (off, v) in row.values.iter().enumerate() {
            self.col_norm_sq[start + off] += v * v;
        }
        self.rows.push(row.clone());
        Ok(row)
    }

    /// Emits rows until `count` have been produced.
    pub fn advance_to(&mut self, count: usize) -> Result<()> {
        while self.rows.len() < count {
            self.next_row()?;
        }
        Ok(())
    }

    /// Caller's index for every position touched by the emitted rows.
    pub fn position_origins(&self) -> Vec<usize> {
        let touched = self.rows.len().checked_sub(1).map_or(0, |r| self.k[r]);
        self.perm[..touched].iter().map(|&i| self.origins[i]).collect()
    }

    /// Positions `0..k_R−2` are final after `R` rows.
    pub fn completed_columns(&self) -> CompletedColumns {
        let count = match self.rows.len() {
            0 => 0,
            r => self.k[r - 1] - 2,
        };
        CompletedColumns {
            count,
            norms_sq: self.col_norm_sq[..count].to_vec(),
            targets: self.pvalues[..count].to_vec(),
            origins: self.perm[..count].iter().map(|&i| self.origins[i]).collect(),
        }
    }

    /// `Σ_{n ≤ rows} v_n v_nᵀ` on the first `k_rows` positions, reindexed by
    /// the caller's indices in ascending order.
    pub fn projection_prefix(&self, rows: usize) -> Result<ProjectionPrefix> {
        if rows > self.rows.len() {
            return Err(Error::Precondition(format!(
                "{rows} rows requested but only {} emitted",
                self.rows.len()
            )));
        }
        if rows == 0 {
            return Ok(ProjectionPrefix {
                matrix: SymmetricMatrix::zeros(0),
                indices: Vec::new(),
                completed: Vec::new(),
            });
        }
        let dim = self.k[rows - 1];
        let mut p = SymmetricMatrix::zeros(dim);
        for row in &self.rows[..rows] {
            for (x, &vx) in row.values.iter().enumerate() {
                for (y, &vy) in row.values.iter().enumerate().skip(x) {
                    let (i, j) = (row.start + x, row.start + y);
                    p.set(i, j, p.get(i, j) + vx * vy);
                }
            }
        }
        let mut positions: Vec<usize> = (0..dim).collect();
        positions.sort_by_key(|&pos| self.origins[self.perm[pos]]);
        let indices = positions.iter().map(|&pos| self.origins[self.perm[pos]]).collect();
        let completed = positions.iter().map(|&pos| pos + 2 < dim).collect();
        Ok(ProjectionPrefix { matrix: p.permuted(&positions), indices, completed })
    }
}

/// Runs the reordering on `spec` through block `upto`.
pub fn reorder(spec: &DiagonalSpec, upto: usize) -> Result<Reordering> {
    let mut stream = TetrisStream::from_spec(spec.clone());
    if upto > 0 {
        stream.ensure_block(upto)?;
    }
    let covered = stream.m.last().copied().unwrap_or(0);
    Ok(Reordering {
        perm: stream.perm[..covered].to_vec(),
        m: stream.m.clone(),
        k: stream.k.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagonal::Tail;

    fn constant(c: f64) -> DiagonalSpec {
        DiagonalSpec::new(vec![], Some(Tail::Constant { c })).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn reorder_examples() {
        let r = reorder(&constant(0.4), 2).unwrap();
        assert_eq!(r.m, vec![3, 5]);
        assert_eq!(r.k, vec![3, 5]);
        assert_eq!(r.perm, vec![0, 1, 2, 3, 4]);

        let r = reorder(&constant(0.5), 1).unwrap();
        assert_eq!((r.m[0], r.k[0]), (2, 2));
        assert_eq!(r.perm, vec![0, 1]);

        let spec = DiagonalSpec::new(vec![0.2, 0.5, 0.4], Some(Tail::Constant { c: 0.4 })).unwrap();
        let r = reorder(&spec, 1).unwrap();
        assert_eq!(r.m[0], 3);
        assert_eq!(r.perm, vec![1, 2, 0]);
        assert_eq!(r.k[0], 3);
    }

    #[test]
    fn sigma_examples() {
        let mut s = TetrisStream::from_spec(constant(0.4));
        assert!((s.sigma_n(1).unwrap() - 0.6).abs() < 1e-15);
        assert!((s.sigma_n(2).unwrap() - 0.8).abs() < 1e-15);
        let mut s = TetrisStream::from_spec(constant(0.5));
        assert_eq!(s.sigma_n(1).unwrap(), 1.0);
    }

    #[test]
    fn solve_a_examples() {
        assert!((solve_a(0.6, 0.4, 0.4).unwrap() - 0.3).abs() < 1e-15);
        assert!((solve_a(0.8, 0.4, 0.4).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(transfer_table(0.5, 0.5, 0.5).unwrap(), [[0.5, 0.0], [0.0, 0.5]]);
        assert!(solve_a(0.3, 0.4, 0.1).is_err());
        assert!(solve_a(0.9, 0.4, 0.4).is_err());
    }

    #[test]
    fn solve_a_satisfies_product_identity() {
        for &(s, d1, d2) in &[(0.6, 0.4, 0.4), (0.7, 0.5, 0.3), (0.45, 0.45, 0.1), (1.0, 0.9, 0.5)] {
            let a = solve_a(s, d1, d2).unwrap();
            let t = transfer_table(s, d1, d2).unwrap();
            assert!((t[0][1] - (s - a)).abs() < 1e-15 && (t[1][0] - (d1 - a)).abs() < 1e-15);
            assert!(t.iter().flatten().all(|&x| (0.0..=1.0).contains(&x)), "{t:?}");
            assert!((a * (d1 - a) - (s - a) * (d2 - s + a)).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_for_constant_point_four() {
        let mut s = TetrisStream::from_spec(constant(0.4));
        let r1 = s.next_row().unwrap();
        assert_eq!(r1.start, 0);
        let expect = [0.4_f64.sqrt(), 0.3_f64.sqrt(), -(0.3_f64.sqrt())];
        assert!(close(&r1.values, &expect, 1e-15));
        let r2 = s.next_row().unwrap();
        assert_eq!((r2.start, r2.end()), (1, 4));
        let expect = [0.1_f64.sqrt(), 0.1_f64.sqrt(), 0.4_f64.sqrt(), -(0.4_f64.sqrt())];
        assert!(close(&r2.values, &expect, 1e-15));
        assert!(r1.dot(&r2).abs() < 1e-15);
        assert!((r1.norm_sq() - 1.0).abs() < 1e-15);
        assert!((r2.norm_sq() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_row_for_constant_half() {
        let mut s = TetrisStream::from_spec(constant(0.5));
        let r1 = s.next_row().unwrap();
        assert!(close(&r1.values, &[0.5_f64.sqrt(), -(0.5_f64.sqrt())], 1e-15));
        assert_eq!(s.a_n(1).unwrap(), 0.5);
        assert_eq!(s.completed_columns().count, 0);
    }

    #[test]
    fn completed_columns_for_point_four() {
        let mut s = TetrisStream::from_spec(constant(0.4));
        s.advance_to(1).unwrap();
        assert_eq!(s.completed_columns().count, 1);
        s.advance_to(2).unwrap();
        let cc = s.completed_columns();
        assert_eq!(cc.count, 3);
        assert!(close(&cc.norms_sq, &[0.4; 3], 1e-15));
    }

    #[test]
    fn projection_prefix_examples() {
        let mut s = TetrisStream::from_spec(constant(0.4));
        s.advance_to(2).unwrap();
        assert_eq!(s.projection_prefix(0).unwrap().matrix.dim(), 0);
        let pp = s.projection_prefix(2).unwrap();
        assert_eq!(pp.matrix.dim(), 5);
        assert!(close(&pp.matrix.diagonal()[..3], &[0.4; 3], 1e-15));
        assert!(pp.matrix.idempotence_defect() < 1e-15);
        let one = s.projection_prefix(1).unwrap();
        assert!((one.matrix.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn head_entry_above_half() {
        let spec = DiagonalSpec::new(vec![0.9], Some(Tail::Constant { c: 0.4 })).unwrap();
        let mut s = TetrisStream::from_spec(spec);
        s.advance_to(50).unwrap();
        let cc = s.completed_columns();
        assert_eq!(cc.targets[0], 0.9);
        assert!(cc.max_error() < 1e-12);
    }

    #[test]
    fn rejects_bad_sources() {
        let spec = DiagonalSpec::new(vec![0.3, 0.6], Some(Tail::Constant { c: 0.4 })).unwrap();
        let mut s = TetrisStream::from_spec(spec);
        assert!(matches!(s.next_row(), Err(Error::Precondition(_))));

        let mut s = TetrisStream::new(Box::new(vec![0.4, 0.4, 0.4, 0.4]));
        s.next_row().unwrap();
        assert!(matches!(s.next_row(), Err(Error::NeedsMoreTerms { .. })));
    }

    #[test]
    fn row_json_shape() {
        let row = SparseRow { n: 2, start: 1, values: vec![0.5, -0.5] };
        let text = serde_json::to_string(&row).unwrap();
        assert_eq!(text, r#"{"n":2,"support":[1,2],"values":[0.5,-0.5]}"#);
        let back: SparseRow = serde_json::from_str(&text).unwrap();
        assert_eq!(back, row);
    }
}
