//! Diagonal surgery by plane rotations.
//!
//! [`ops_shift`] moves mass `η₀` from a low index block `I₀` onto a high
//! block `I₁`; [`ops_restore`] undoes that change on an operator with a
//! finite sequence of 2-coordinate rotations, recorded in a [`MovePlan`].

use std::f64::consts::FRAC_PI_2;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::diagonal::compensated_sum;
use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

/// Tolerance on request invariants.
pub const INPUT_TOL: f64 = 1e-10;
/// Residual deficits below this are treated as restored.
const RESTORE_EPS: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    /// Rotation with `c = √α`, `s = −√(1−α)`; parameter is `α`.
    ConvexMix,
    /// Rotation by angle `θ`; parameter is `θ`.
    GeneralRotation,
}

/// One conjugation `E ↦ GᵀEG` on coordinates `i`, `j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub i: usize,
    pub j: usize,
    pub kind: MoveKind,
    pub parameter: f64,
}

impl Move {
    pub fn convex(i: usize, j: usize, alpha: f64) -> Self {
        Self { i, j, kind: MoveKind::ConvexMix, parameter: alpha }
    }

    pub fn rotation(i: usize, j: usize, theta: f64) -> Self {
        Self { i, j, kind: MoveKind::GeneralRotation, parameter: theta }
    }

    fn cos_sin(&self) -> (f64, f64) {
        match self.kind {
            MoveKind::ConvexMix => (self.parameter.sqrt(), -(1.0 - self.parameter).sqrt()),
            MoveKind::GeneralRotation => (self.parameter.cos(), self.parameter.sin()),
        }
    }

    pub fn apply(&self, m: &mut SymmetricMatrix) {
        let (c, s) = self.cos_sin();
        m.rotate(self.i, self.j, c, s);
    }
}

/// Ordered audit trail of rotations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MovePlan {
    pub moves: Vec<Move>,
}

impl MovePlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn push(&mut self, mv: Move) {
        self.moves.push(mv);
    }

    pub fn extend(&mut self, other: MovePlan) {
        self.moves.extend(other.moves);
    }

    /// Plan with every coordinate mapped through `map`.
    pub fn relabeled(&self, map: &[usize]) -> MovePlan {
        MovePlan {
            moves: self
                .moves
                .iter()
                .map(|m| Move { i: map[m.i], j: map[m.j], ..*m })
                .collect(),
        }
    }

    pub fn replay(&self, start: &SymmetricMatrix) -> SymmetricMatrix {
        let mut m = start.clone();
        for mv in &self.moves {
            mv.apply(&mut m);
        }
        m
    }

    /// One JSON object per line.
    pub fn write_json_lines<W: Write>(&self, mut w: W) -> Result<()> {
        for mv in &self.moves {
            serde_json::to_writer(&mut w, mv)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_json_lines<R: BufRead>(r: R) -> Result<MovePlan> {
        let mut plan = MovePlan::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mv = serde_json::from_str(&line)
                .map_err(|e| Error::Input(format!("move plan line {}: {e}", lineno + 1)))?;
            plan.push(mv);
        }
        Ok(plan)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpsRequest {
    pub d: Vec<f64>,
    pub i0: Vec<usize>,
    pub i1: Vec<usize>,
    pub eta0: f64,
}

impl OpsRequest {
    pub fn validate(&self) -> Result<()> {
        let n = self.d.len();
        for (index, &value) in self.d.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRange { index, value });
            }
        }
        for &i in self.i0.iter().chain(&self.i1) {
            if i >= n {
                return Err(Error::Precondition(format!("index {i} out of bounds for length {n}")));
            }
        }
        if let Some(i) = self.i0.iter().find(|i| self.i1.contains(i)) {
            return Err(Error::Precondition(format!("I0 and I1 share index {i}")));
        }
        let max0 = self.i0.iter().map(|&i| self.d[i]).fold(f64::NEG_INFINITY, f64::max);
        let min1 = self.i1.iter().map(|&i| self.d[i]).fold(f64::INFINITY, f64::min);
        if max0 > min1 + INPUT_TOL {
            return Err(Error::Precondition(format!(
                "max d over I0 ({max0}) exceeds min d over I1 ({min1})"
            )));
        }
        if self.eta0.is_nan() || self.eta0 < 0.0 {
            return Err(Error::Precondition(format!("eta0 = {} is negative", self.eta0)));
        }
        let mass0 = compensated_sum(self.i0.iter().map(|&i| self.d[i]));
        let room1 = compensated_sum(self.i1.iter().map(|&i| 1.0 - self.d[i]));
        if self.eta0 > mass0 + INPUT_TOL {
            return Err(Error::Precondition(format!(
                "eta0 = {} exceeds sum of d over I0 ({mass0})",
                self.eta0
            )));
        }
        if self.eta0 > room1 + INPUT_TOL {
            return Err(Error::Precondition(format!(
                "eta0 = {} exceeds sum of 1 - d over I1 ({room1})",
                self.eta0
            )));
        }
        Ok(())
    }
}

fn sorted(ix: &[usize]) -> Vec<usize> {
    let mut v = ix.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Greedy transfer of `η₀` out of `I₀` (toward 0) and into `I₁` (toward 1),
/// both walked in ascending index order.
pub fn ops_shift(req: &OpsRequest) -> Result<Vec<f64>> {
    req.validate()?;
    let mut out = req.d.clone();

    let mut left = req.eta0;
    for i in sorted(&req.i0) {
        if left <= 0.0 {
            break;
        }
        let t = out[i].min(left);
        out[i] -= t;
        left -= t;
    }

    let mut left = req.eta0;
    for i in sorted(&req.i1) {
        if left <= 0.0 {
            break;
        }
        let t = (1.0 - out[i]).min(left);
        out[i] += t;
        left -= t;
    }
    Ok(out)
}

fn normalize_angle(mut theta: f64) -> f64 {
    while theta > FRAC_PI_2 {
        theta -= std::f64::consts::PI;
    }
    while theta <= -FRAC_PI_2 {
        theta += std::f64::consts::PI;
    }
    theta
}

/// Angle `θ ∈ (−π/2, π/2]` of smallest magnitude with
/// `c²u + 2cs·w + s²v = target`, where `u, v, w` are the `(i, i)`, `(j, j)`,
/// `(i, j)` entries.
pub fn rotation_angle(e: &SymmetricMatrix, i: usize, j: usize, target: f64) -> Result<f64> {
    let u = e.get(i, i);
    let v = e.get(j, j);
    let w = e.get(i, j);
    if target == u {
        return Ok(0.0);
    }
    let mid = 0.5 * (u + v);
    let half = 0.5 * (u - v);
    let r = half.hypot(w);
    let tol = 1e-12 * (1.0 + mid.abs() + r);
    let (lo, hi) = (mid - r, mid + r);
    if target < lo - tol || target > hi + tol {
        return Err(Error::Unattainable { target, lo, hi });
    }
    if r <= f64::MIN_POSITIVE {
        return Ok(0.0);
    }
    let q = ((target - mid) / r).clamp(-1.0, 1.0);
    let phi = w.atan2(half);
    let spread = q.acos();
    let candidates = [normalize_angle(0.5 * (phi + spread)), normalize_angle(0.5 * (phi - spread))];
    let best = candidates
        .into_iter()
        .reduce(|a, b| {
            let (ma, mb) = (a.abs(), b.abs());
            if (ma - mb).abs() <= 1e-15 {
                if a >= b { a } else { b }
            } else if ma < mb {
                a
            } else {
                b
            }
        })
        .unwrap();
    Ok(best)
}

/// Rotates coordinates `i`, `j` so that the `(i, i)` entry becomes `target`.
pub fn rotate_to_diagonal(
    e: &SymmetricMatrix,
    i: usize,
    j: usize,
    target_ii: f64,
) -> Result<(SymmetricMatrix, f64)> {
    let mut out = e.clone();
    let theta = rotate_to_diagonal_in_place(&mut out, i, j, target_ii)?;
    Ok((out, theta))
}

pub(crate) fn rotate_to_diagonal_in_place(
    e: &mut SymmetricMatrix,
    i: usize,
    j: usize,
    target_ii: f64,
) -> Result<f64> {
    let theta = rotation_angle(e, i, j, target_ii)?;
    if theta != 0.0 {
        Move::rotation(i, j, theta).apply(e);
    }
    Ok(theta)
}

/// Returns an operator orthogonally equivalent to `e_tilde` whose diagonal is
/// `d`, by pairing deficits on `I₀` with surpluses on `I₁` (lowest indices
/// first) and closing each with one rotation.
pub fn ops_restore(
    e_tilde: &SymmetricMatrix,
    d_tilde: &[f64],
    d: &[f64],
    i0: &[usize],
    i1: &[usize],
) -> Result<(SymmetricMatrix, MovePlan)> {
    let n = e_tilde.dim();
    if d_tilde.len() != n || d.len() != n {
        return Err(Error::Dimension(format!(
            "matrix is {n}x{n} but diagonals have lengths {} and {}",
            d_tilde.len(),
            d.len()
        )));
    }
    for (k, &want) in d_tilde.iter().enumerate() {
        if (e_tilde.get(k, k) - want).abs() > INPUT_TOL {
            return Err(Error::Precondition(format!(
                "diagonal entry {k} is {} but d_tilde is {want}",
                e_tilde.get(k, k)
            )));
        }
    }
    let i0 = sorted(i0);
    let i1 = sorted(i1);
    for k in 0..n {
        let in0 = i0.contains(&k);
        let in1 = i1.contains(&k);
        let diff = d_tilde[k] - d[k];
        let ok = if in0 {
            diff <= INPUT_TOL
        } else if in1 {
            diff >= -INPUT_TOL
        } else {
            diff.abs() <= INPUT_TOL
        };
        if !ok {
            return Err(Error::Precondition(format!(
                "index {k}: d_tilde = {} and d = {} are inconsistent with the shift",
                d_tilde[k], d[k]
            )));
        }
    }
    let deficit = compensated_sum(i0.iter().map(|&k| d[k] - d_tilde[k]));
    let surplus = compensated_sum(i1.iter().map(|&k| d_tilde[k] - d[k]));
    if (deficit - surplus).abs() > INPUT_TOL {
        return Err(Error::Precondition(format!(
            "mass removed from I0 ({deficit}) differs from mass added to I1 ({surplus})"
        )));
    }

    let mut e = e_tilde.clone();
    let mut plan = MovePlan::new();
    let (mut p, mut q) = (0, 0);
    let max_steps = i0.len() + i1.len();
    while p < i0.len() && q < i1.len() {
        let (i, j) = (i0[p], i1[q]);
        let need = d[i] - e.get(i, i);
        if need <= RESTORE_EPS {
            p += 1;
            continue;
        }
        let spare = e.get(j, j) - d[j];
        if spare <= RESTORE_EPS {
            q += 1;
            continue;
        }
        if plan.len() >= max_steps {
            return Err(Error::InfeasibleStep(format!(
                "exceeded {max_steps} rotations; diagonal {:?}, target {:?}",
                e.diagonal(),
                d
            )));
        }
        let t = need.min(spare);
        let target = e.get(i, i) + t;
        let theta = rotate_to_diagonal_in_place(&mut e, i, j, target).map_err(|err| {
            Error::InfeasibleStep(format!(
                "pair ({i}, {j}) target {target}: {err}; diagonal {:?}",
                e.diagonal()
            ))
        })?;
        plan.push(Move::rotation(i, j, theta));
    }
    Ok((e, plan))
}
