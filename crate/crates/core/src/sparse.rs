//! Sparse symmetric positive-definite solves with Dirichlet-pinned unknowns.
//!
//! Factorization is a permuted LDL^T (reverse Cuthill-McKee ordering) from
//! `sprs-ldl`, followed by iterative refinement until the relative residual
//! reaches [`RESIDUAL_TOLERANCE`]. On systems too ill-conditioned for that in
//! double precision, a solution whose normwise backward error is at rounding
//! level ([`BACKWARD_ERROR_FLOOR`]) is accepted instead.

use sprs::{CsMat, TriMat};
use sprs_ldl::Ldl;
use thiserror::Error;

pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// `|r| / (|A| |x| + |b|)` in infinity norms.
pub const BACKWARD_ERROR_FLOOR: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("system is singular or not positive definite (pivot {index})")]
    Singular { index: usize },
    #[error("relative residual {0:e} above tolerance after refinement")]
    Residual(f64),
}

/// Symmetric matrix assembled from (possibly repeated) triplets.
pub struct SymmetricSystem {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymmetricSystem {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Adds `value` at `(i, j)` and `(j, i)` (once on the diagonal).
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        self.entries.push((i, j, value));
        if i != j {
            self.entries.push((j, i, value));
        }
    }

    /// Solves `A x = b` with `x[i] = v` imposed for each `(i, v)` in `pinned`.
    pub fn solve_pinned(&self, rhs: &[f64], pinned: &[(usize, f64)]) -> Result<Vec<f64>, SolveError> {
        assert_eq!(rhs.len(), self.n);
        let mut fixed = vec![None; self.n];
        for &(i, v) in pinned {
            fixed[i] = Some(v);
        }
        let mut free_index = vec![usize::MAX; self.n];
        let mut free = Vec::new();
        for i in 0..self.n {
            if fixed[i].is_none() {
                free_index[i] = free.len();
                free.push(i);
            }
        }
        let mut x: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        if free.is_empty() {
            return Ok(x);
        }

        let m = free.len();
        let mut b: Vec<f64> = free.iter().map(|&i| rhs[i]).collect();
        let mut tri = TriMat::new((m, m));
        for &(i, j, v) in &self.entries {
            match (fixed[i], fixed[j]) {
                (None, None) => tri.add_triplet(free_index[i], free_index[j], v),
                (None, Some(xj)) => b[free_index[i]] -= v * xj,
                _ => {}
            }
        }
        let a: CsMat<f64> = tri.to_csc();

        let ldl = Ldl::new()
            .numeric(a.view())
            .map_err(|_| SolveError::Singular { index: 0 })?;
        let dmax = ldl.d().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if let Some(index) = ldl.d().iter().position(|&d| d <= 1e-13 * dmax) {
            return Err(SolveError::Singular { index });
        }

        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let anorm = row_sums(&a).into_iter().fold(0.0f64, f64::max);
        let (bnorm, bmax) = (b.iter().map(|v| v * v).sum::<f64>().sqrt(), inf(&b));
        let mut sol: Vec<f64> = ldl.solve(&b);
        if bnorm > 0.0 {
            let (mut rel, mut backward) = (f64::INFINITY, f64::INFINITY);
            for _ in 0..4 {
                let ax = matvec(&a, &sol);
                let r: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
                rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
                backward = inf(&r) / (anorm * inf(&sol) + bmax);
                if rel <= RESIDUAL_TOLERANCE {
                    break;
                }
                let dx: Vec<f64> = ldl.solve(&r);
                for (s, d) in sol.iter_mut().zip(dx) {
                    *s += d;
                }
            }
            if rel > RESIDUAL_TOLERANCE && backward > BACKWARD_ERROR_FLOOR {
                return Err(SolveError::Residual(rel));
            }
        }
        for (k, &i) in free.iter().enumerate() {
            x[i] = sol[k];
        }
        Ok(x)
    }
}

/// Absolute row sums.
fn row_sums(a: &CsMat<f64>) -> Vec<f64> {
    let mut sums = vec![0.0; a.rows()];
    for (outer, lane) in a.outer_iterator().enumerate() {
        for (inner, &v) in lane.iter() {
            sums[if a.is_csc() { inner } else { outer }] += v.abs();
        }
    }
    sums
}

fn matvec(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    for (outer, lane) in a.outer_iterator().enumerate() {
        for (inner, &v) in lane.iter() {
            if a.is_csc() {
                y[inner] += v * x[outer];
            } else {
                y[outer] += v * x[inner];
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_laplacian_with_pins() {
        // 1D Laplacian on 5 nodes, ends pinned: linear interpolation
        let mut s = SymmetricSystem::new(5);
        for i in 0..4 {
            s.add(i, i, 1.0);
            s.add(i + 1, i + 1, 1.0);
            s.add(i, i + 1, -1.0);
        }
        let x = s.solve_pinned(&[0.0; 5], &[(0, 0.0), (4, 2.0)]).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 0.5 * i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn unpinned_laplacian_is_singular() {
        let mut s = SymmetricSystem::new(3);
        for i in 0..2 {
            s.add(i, i, 1.0);
            s.add(i + 1, i + 1, 1.0);
            s.add(i, i + 1, -1.0);
        }
        assert!(s.solve_pinned(&[1.0, 0.0, -1.0], &[]).is_err());
    }
}
