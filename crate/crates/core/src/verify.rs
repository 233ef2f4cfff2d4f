//! Independent checks on built projections and streamed rows, and an
//! empirical oracle for the necessity half of the integrality criterion.
//!
//! Random orthogonal matrices for the oracle come from the QR factorization
//! of a standard Gaussian matrix drawn from `ChaCha8Rng::seed_from_u64(seed)`,
//! with trial `t` on stream `t`. Columns of `Q` are flipped so that `R` has a
//! nonnegative diagonal, which makes the sample a function of the seed alone.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagonal::integrality_gap;
use crate::matrix::SymmetricMatrix;
use crate::tetris::SparseRow;

/// Integrality tolerance used by the oracle.
pub const ORACLE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub dimension: usize,
    pub symmetry_defect: f64,
    pub idempotence_defect: f64,
    pub diagonal_max_error: f64,
    pub trace: f64,
    pub estimated_rank: usize,
    pub tolerance: f64,
    pub symmetric: bool,
    pub idempotent: bool,
    pub diagonal_matches: bool,
    pub pass: bool,
}

/// Compares `p` against the requirements of a projection with diagonal `d`.
/// A length mismatch reports an infinite diagonal error.
pub fn check_projection(p: &SymmetricMatrix, d: &[f64], tol: f64) -> VerificationReport {
    let symmetry_defect = p.symmetry_defect();
    let idempotence_defect = p.idempotence_defect();
    let diagonal_max_error = if d.len() == p.dim() {
        p.diagonal()
            .iter()
            .zip(d)
            .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
    } else {
        f64::INFINITY
    };
    let estimated_rank = p.eigenvalues().iter().filter(|&&ev| ev > 0.5).count();
    let symmetric = symmetry_defect <= tol;
    let idempotent = idempotence_defect <= tol;
    let diagonal_matches = diagonal_max_error <= tol;
    VerificationReport {
        dimension: p.dim(),
        symmetry_defect,
        idempotence_defect,
        diagonal_max_error,
        trace: p.trace(),
        estimated_rank,
        tolerance: tol,
        symmetric,
        idempotent,
        diagonal_matches,
        pass: symmetric && idempotent && diagonal_matches,
    }
}

/// `max |⟨v_i, v_j⟩ − δ_ij|` over all pairs.
pub fn check_rows(rows: &[SparseRow]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, ri) in rows.iter().enumerate() {
        worst = worst.max((ri.norm_sq() - 1.0).abs());
        for rj in &rows[i + 1..] {
            worst = worst.max(ri.dot(rj).abs());
        }
    }
    worst
}

/// Haar-distributed orthogonal `n × n` matrix for the given seed and trial.
pub fn random_orthogonal(n: usize, seed: u64, trial: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Rank-`rank` projection onto the span of the first columns of
/// [`random_orthogonal`].
pub fn random_projection(n: usize, rank: usize, seed: u64, trial: u64) -> SymmetricMatrix {
    assert!(rank <= n, "rank {rank} exceeds dimension {n}");
    let q = random_orthogonal(n, seed, trial);
    let qr = q.columns(0, rank);
    let mut p = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            p.set(i, j, qr.row(i).dot(&qr.row(j)));
        }
    }
    p
}

/// `(a, b)` for a finite diagonal.
pub fn kadison_sums(d: &[f64]) -> (f64, f64) {
    let a = d.iter().filter(|&&x| x < 0.5).sum();
    let b = d.iter().filter(|&&x| x >= 0.5).map(|x| 1.0 - x).sum();
    (a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n: usize,
    pub rank: usize,
    pub trials: usize,
    pub seed: u64,
    pub max_gap: f64,
    pub failures: usize,
    pub pass: bool,
}

pub fn necessity_oracle_report(n: usize, rank: usize, trials: usize, seed: u64) -> OracleReport {
    let mut max_gap = 0.0_f64;
    let mut failures = 0;
    for t in 0..trials {
        let p = random_projection(n, rank, seed, t as u64);
        let (a, b) = kadison_sums(&p.diagonal());
        let gap = integrality_gap(a - b);
        max_gap = max_gap.max(gap);
        if gap > ORACLE_TOL {
            failures += 1;
        }
    }
    OracleReport { n, rank, trials, seed, max_gap, failures, pass: failures == 0 }
}

/// True iff every sampled projection has `a − b` within [`ORACLE_TOL`] of
/// an integer.
pub fn necessity_oracle(n: usize, rank: usize, trials: usize, seed: u64) -> bool {
    necessity_oracle_report(n, rank, trials, seed).pass
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::horn::rank_one;

    #[test]
    fn check_projection_examples() {
        let p = SymmetricMatrix::from_diagonal(&[1.0, 0.0]);
        let r = check_projection(&p, &[1.0, 0.0], 1e-9);
        assert_eq!(r.symmetry_defect, 0.0);
        assert_eq!(r.idempotence_defect, 0.0);
        assert_eq!(r.diagonal_max_error, 0.0);
        assert_eq!(r.estimated_rank, 1);
        assert!(r.pass);

        let half = SymmetricMatrix::from_diagonal(&[0.5]);
        let r = check_projection(&half, &[0.5], 1e-9);
        assert_eq!(r.idempotence_defect, 0.25);
        assert!(!r.idempotent && !r.pass);

        let r = check_projection(&p, &[1.0], 1e-9);
        assert!(r.diagonal_max_error.is_infinite());
    }

    #[test]
    fn complement_has_same_defects() {
        let p = rank_one(&[0.25, 0.25, 0.5], 1.0).unwrap();
        let r1 = check_projection(&p, &p.diagonal(), 1e-12);
        let q = p.complement();
        let r2 = check_projection(&q, &q.diagonal(), 1e-12);
        assert_eq!(r1.symmetry_defect, r2.symmetry_defect);
        assert!((r1.idempotence_defect - r2.idempotence_defect).abs() < 1e-15);
        assert_eq!(r2.estimated_rank, 2);
    }

    #[test]
    fn check_rows_examples() {
        let unit = SparseRow { n: 1, start: 0, values: vec![0.6, 0.8] };
        assert!(check_rows(std::slice::from_ref(&unit)) < 1e-15);
        let dup = vec![unit.clone(), SparseRow { n: 2, ..unit }];
        assert!((check_rows(&dup) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_examples() {
        assert!(necessity_oracle(1, 1, 5, 7));
        let r = necessity_oracle_report(4, 0, 5, 7);
        assert!(r.pass && r.max_gap == 0.0);
        assert!(necessity_oracle(6, 3, 100, 42));
    }

    #[test]
    fn oracle_is_deterministic() {
        let a = random_projection(5, 2, 11, 3);
        let b = random_projection(5, 2, 11, 3);
        assert_eq!(a, b);
        assert_ne!(a, random_projection(5, 2, 11, 4));
        assert!(a.idempotence_defect() < 1e-12);
        assert!((a.trace() - 2.0).abs() < 1e-12);
    }
}
