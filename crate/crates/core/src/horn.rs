//! Constructive finite-rank Schur-Horn: a positive semidefinite matrix with
//! prescribed nonzero eigenvalues and prescribed diagonal.
//!
//! The smallest eigenvalue `λ_N` is peeled off as a rank-one block on the
//! shortest tail of the (sorted) diagonal carrying at least `λ_N` of mass.
//! The tail's first entry is lowered by the excess `δ`, the excess is added
//! back to the head, and the head is solved with one eigenvalue fewer.
//! Rotations between the head and the tail's first coordinate then restore
//! the original diagonal.
//!
//! The excess is water-filled onto the smallest head entries. When the last
//! head entry can absorb all of `δ` without overtaking its neighbour this is a
//! single convex move on `(m₀−1, m₀)`; otherwise several entries are raised
//! to a common level, which keeps the head sorted and majorized, and each is
//! restored in turn.

use serde::{Deserialize, Serialize};

use crate::diagonal::compensated_sum;
use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;
use crate::moves::{rotate_to_diagonal_in_place, Move, MovePlan};

/// Tolerance for the majorization inequalities and the trace equality.
pub const MAJORIZATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorizationInput {
    pub lambdas: Vec<f64>,
    pub diag: Vec<f64>,
}

impl MajorizationInput {
    pub fn new(lambdas: Vec<f64>, diag: Vec<f64>) -> Self {
        Self { lambdas, diag }
    }

    /// Checks positivity, `M ≥ N`, partial sums and the trace equality;
    /// reports the first violated index (1-based `n`).
    pub fn check(&self) -> Result<()> {
        self.check_with_tol(MAJORIZATION_TOL)
    }

    pub fn check_with_tol(&self, tol: f64) -> Result<()> {
        if let Some(&l) = self.lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Precondition(format!("eigenvalue {l} is not positive")));
        }
        if let Some((index, &value)) =
            self.diag.iter().enumerate().find(|(_, &d)| !(d >= 0.0 && d.is_finite()))
        {
            return Err(Error::Precondition(format!("diagonal entry {index} = {value} is negative")));
        }
        if self.diag.len() < self.lambdas.len() {
            return Err(Error::Precondition(format!(
                "diagonal length {} is shorter than rank {}",
                self.diag.len(),
                self.lambdas.len()
            )));
        }
        let lam = sorted_desc(&self.lambdas);
        let d = sorted_desc(&self.diag);
        let mut sl = 0.0;
        let mut sd = 0.0;
        for n in 0..lam.len() {
            sl += lam[n];
            sd += d[n];
            if sd > sl + tol {
                return Err(Error::Majorization { index: n + 1, lhs: sd, rhs: sl });
            }
        }
        let total_d = compensated_sum(d.iter().copied());
        let total_l = compensated_sum(lam.iter().copied());
        if (total_d - total_l).abs() > tol {
            return Err(Error::SumMismatch { diag: total_d, lambda: total_l });
        }
        Ok(())
    }
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `true` iff the partial-sum inequalities and trace equality hold.
pub fn check_majorization(input: &MajorizationInput) -> bool {
    input.check().is_ok()
}

fn outer_sqrt(diag: &[f64]) -> SymmetricMatrix {
    let n = diag.len();
    let mut s = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            s.set(i, j, (diag[i] * diag[j]).sqrt());
        }
    }
    s
}

/// Rank-one `S = v vᵀ` with `v = (√dᵢ)`, so `S[i][j] = √(dᵢdⱼ)`.
pub fn rank_one(diag: &[f64], lambda: f64) -> Result<SymmetricMatrix> {
    if let Some((index, &value)) = diag.iter().enumerate().find(|(_, &d)| d.is_nan() || d < 0.0) {
        return Err(Error::Precondition(format!("diagonal entry {index} = {value} is negative")));
    }
    if diag.iter().all(|&d| d == 0.0) {
        return Err(Error::Precondition("diagonal is identically zero".into()));
    }
    let total = compensated_sum(diag.iter().copied());
    if (total - lambda).abs() > MAJORIZATION_TOL {
        return Err(Error::SumMismatch { diag: total, lambda });
    }
    Ok(outer_sqrt(diag))
}

/// `UᵀEU` for the rotation with `U e_i = √α e_i − √(1−α) e_j`,
/// `U e_j = √(1−α) e_i + √α e_j`. Requires `E[i][j] = 0`.
pub fn convex_mix_unitary(
    e: &SymmetricMatrix,
    i: usize,
    j: usize,
    alpha: f64,
) -> Result<SymmetricMatrix> {
    let mut out = e.clone();
    convex_mix_in_place(&mut out, i, j, alpha)?;
    Ok(out)
}

fn convex_mix_in_place(e: &mut SymmetricMatrix, i: usize, j: usize, alpha: f64) -> Result<Move> {
    if e.get(i, j).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "coordinates ({i}, {j}) are coupled ({}); use rotate_to_diagonal",
            e.get(i, j)
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Precondition(format!("alpha = {alpha} outside [0, 1]")));
    }
    let mv = Move::convex(i, j, alpha);
    mv.apply(e);
    Ok(mv)
}

/// Mixing weight for moving the diagonal pair `(raised, lowered)` back to
/// `target` on the first coordinate. `0/0` is resolved as `α = 1`.
pub fn mixing_alpha(raised: f64, lowered: f64, target: f64) -> f64 {
    let den = raised - lowered;
    if den <= 0.0 {
        return 1.0;
    }
    ((target - lowered) / den).clamp(0.0, 1.0)
}

/// One peeling step, in sorted coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PeelStep {
    /// Eigenvalue peeled at this step.
    pub lambda: f64,
    /// First index of the rank-one tail block (0-based `m₀ − 1`).
    pub m0: usize,
    /// Excess of the tail over `lambda`.
    pub delta: f64,
    /// Head entries that received part of `delta`: `(index, original, raised)`,
    /// bottom entry first.
    pub raises: Vec<(usize, f64, f64)>,
}

/// Full audit of a construction.
#[derive(Clone, Debug)]
pub struct HornBuild {
    /// Result in the caller's coordinates.
    pub matrix: SymmetricMatrix,
    /// Block-diagonal start in sorted coordinates.
    pub start: SymmetricMatrix,
    /// Rotations taking `start` to the sorted-coordinate result.
    pub plan: MovePlan,
    /// `order[k]` is the caller's index at sorted position `k`.
    pub order: Vec<usize>,
    /// Peeling steps, outermost (`λ_N`) first.
    pub steps: Vec<PeelStep>,
}

/// Raises the smallest entries of a nonincreasing `head` to a common level so
/// that the total added is `delta`. Returns `(index, raised value)` pairs,
/// bottom first.
fn water_fill(head: &[f64], delta: f64) -> Vec<(usize, f64)> {
    if delta <= 0.0 || head.is_empty() {
        return Vec::new();
    }
    let len = head.len();
    let mut pool = delta;
    let mut r = 0;
    let level = loop {
        pool += head[len - 1 - r];
        r += 1;
        let level = pool / r as f64;
        if r == len || level <= head[len - 1 - r] {
            break level;
        }
    };
    (len - r..len).rev().map(|k| (k, level)).collect()
}

/// Builds `S ⪰ 0` of rank `N` with eigenvalues `input.lambdas` and diagonal
/// `input.diag` (any order).
pub fn horn_build(input: &MajorizationInput) -> Result<SymmetricMatrix> {
    Ok(horn_build_traced(input, MAJORIZATION_TOL)?.matrix)
}

pub fn horn_build_traced(input: &MajorizationInput, tol: f64) -> Result<HornBuild> {
    input.check_with_tol(tol)?;
    let m = input.diag.len();
    let lam = sorted_desc(&input.lambdas);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| input.diag[b].total_cmp(&input.diag[a]));
    let d: Vec<f64> = order.iter().map(|&k| input.diag[k]).collect();

    let mut start = SymmetricMatrix::zeros(m);
    let mut steps = Vec::new();

    if !lam.is_empty() {
        let mut cur = d.clone();
        for k in (1..lam.len()).rev() {
            let lambda = lam[k];
            // suffix[t] = Σ_{i ≥ t} cur[i]
            let mut suffix = vec![0.0; cur.len() + 1];
            for t in (0..cur.len()).rev() {
                suffix[t] = suffix[t + 1] + cur[t];
            }
            let m0 = (0..cur.len())
                .rev()
                .find(|&t| suffix[t] >= lambda - tol)
                .ok_or_else(|| Error::InfeasibleStep(format!("no tail carries eigenvalue {lambda}")))?;
            if m0 < k {
                return Err(Error::InfeasibleStep(format!(
                    "tail for eigenvalue {lambda} starts at {m0}, before rank {k}"
                )));
            }
            let delta = (suffix[m0] - lambda).max(0.0);
            let mut tail = cur[m0..].to_vec();
            tail[0] = (tail[0] - delta).max(0.0);
            let coords: Vec<usize> = (m0..cur.len()).collect();
            start.embed(&outer_sqrt(&tail), &coords);

            let head = &cur[..m0];
            let raises: Vec<(usize, f64, f64)> = water_fill(head, delta)
                .into_iter()
                .map(|(idx, level)| (idx, head[idx], level))
                .collect();
            let mut next = head.to_vec();
            for &(idx, _, level) in &raises {
                next[idx] = level;
            }
            steps.push(PeelStep { lambda, m0, delta, raises });
            cur = next;
        }
        let coords: Vec<usize> = (0..cur.len()).collect();
        if cur.iter().all(|&x| x == 0.0) {
            return Err(Error::InfeasibleStep("base block has zero diagonal".into()));
        }
        start.embed(&outer_sqrt(&cur), &coords);
    }

    let mut sorted_result = start.clone();
    let mut plan = MovePlan::new();
    for step in steps.iter().rev() {
        for (n, &(idx, original, _)) in step.raises.iter().enumerate() {
            if n == 0 {
                let alpha = mixing_alpha(
                    sorted_result.get(idx, idx),
                    sorted_result.get(step.m0, step.m0),
                    original,
                );
                plan.push(convex_mix_in_place(&mut sorted_result, idx, step.m0, alpha)?);
            } else {
                let theta = rotate_to_diagonal_in_place(&mut sorted_result, idx, step.m0, original)
                    .map_err(|e| Error::InfeasibleStep(format!("restoring entry {idx}: {e}")))?;
                plan.push(Move::rotation(idx, step.m0, theta));
            }
        }
    }

    let mut inverse = vec![0; m];
    for (pos, &orig) in order.iter().enumerate() {
        inverse[orig] = pos;
    }
    let matrix = sorted_result.permuted(&inverse);
    Ok(HornBuild { matrix, start, plan, order, steps })
}
