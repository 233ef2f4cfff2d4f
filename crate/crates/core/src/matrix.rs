//! Dense real symmetric matrices.
//!
//! Every write goes through [`SymmetricMatrix::set`], which mirrors the
//! value across the diagonal, so `get(i, j) == get(j, i)` holds bit for bit.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds a matrix from dense rows, rejecting anything not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::Input(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        data[i * n + j],
                        data[j * n + i]
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// Rank-one matrix `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, v[i] * v[j]);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1)).take(self.n)
    }

    /// Largest `|A[i][j] - A[j][i]|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn square(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let ri = &self.data[i * n..(i + 1) * n];
            for j in i..n {
                let rj = &self.data[j * n..(j + 1) * n];
                let s: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                out.set(i, j, s);
            }
        }
        out
    }

    /// `max |A - B|` entrywise.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// `‖A² − A‖_max`.
    pub fn idempotence_defect(&self) -> f64 {
        self.square().max_abs_diff(self)
    }

    /// `I − A`.
    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = -*v;
        }
        for i in 0..self.n {
            out.data[i * self.n + i] = 1.0 - self.get(i, i);
        }
        out
    }

    /// Returns `B` with `B[r][c] = A[perm[r]][perm[c]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n, "permutation length mismatch");
        let mut out = Self::zeros(self.n);
        for (r, &pr) in perm.iter().enumerate() {
            for (c, &pc) in perm.iter().enumerate() {
                out.data[r * self.n + c] = self.get(pr, pc);
            }
        }
        out
    }

    /// Copies `block` into the principal submatrix indexed by `coords`.
    pub fn embed(&mut self, block: &Self, coords: &[usize]) {
        assert_eq!(block.n, coords.len(), "block size mismatch");
        for (r, &gr) in coords.iter().enumerate() {
            for (c, &gc) in coords.iter().enumerate() {
                self.data[gr * self.n + gc] = block.get(r, c);
            }
        }
    }

    /// Block-diagonal sum `A ⊕ B`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let n = self.n + other.n;
        let mut out = Self::zeros(n);
        out.embed(self, &(0..self.n).collect::<Vec<_>>());
        out.embed(other, &(self.n..n).collect::<Vec<_>>());
        out
    }

    /// Conjugates by the plane rotation `G` acting on coordinates `i`, `j`
    /// with columns `g_i = c·e_i + s·e_j` and `g_j = −s·e_i + c·e_j`,
    /// returning `Gᵀ A G` in place.
    pub fn rotate(&mut self, i: usize, j: usize, c: f64, s: f64) {
        assert!(i != j && i < self.n && j < self.n, "bad rotation coordinates");
        let n = self.n;
        let u = self.get(i, i);
        let v = self.get(j, j);
        let w = self.get(i, j);
        for k in 0..n {
            if k == i || k == j {
                continue;
            }
            let aik = self.data[i * n + k];
            let ajk = self.data[j * n + k];
            self.set(i, k, c * aik + s * ajk);
            self.set(j, k, -s * aik + c * ajk);
        }
        let cs = c * s;
        self.set(i, i, c * c * u + 2.0 * cs * w + s * s * v);
        self.set(j, j, s * s * u - 2.0 * cs * w + c * c * v);
        self.set(i, j, cs * (v - u) + (c * c - s * s) * w);
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    /// Eigenvalues in ascending order, from nalgebra's symmetric solver.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.n == 0 {
            return Vec::new();
        }
        let eig = nalgebra::SymmetricEigen::new(self.to_nalgebra());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

impl fmt::Debug for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymmetricMatrix({}x{})", self.n, self.n)?;
        for row in self.rows() {
            writeln!(f, "  {row:?}")?;
        }
        Ok(())
    }
}
