//! Hermitian generalized eigendecomposition, low-rank target reconstruction,
//! regularized solves, and the diagonal-loading rule.
//!
//! The GEVD of `(A, B)` is realized by Cholesky whitening of `B` followed by
//! a Hermitian eigendecomposition of the whitened `A`; this keeps the
//! B-orthonormality of the generalized eigenvectors explicit.

use nalgebra::{DMatrix, DVector};

use crate::cyclic::{hermitianize, CovRole, SpectralSpatialCov};
use crate::error::{Error, Result};
use crate::C64;

/// Clamp bounds for diagonal loading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadingBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for LoadingBounds {
    fn default() -> Self {
        Self {
            lambda_min: 1e-9,
            lambda_max: 1e-4,
        }
    }
}

/// Result of a generalized eigendecomposition of a Hermitian pair `(A, B)`.
#[derive(Debug, Clone)]
pub struct GevdResult {
    /// Real eigenvalues, descending.
    pub eigenvalues: DVector<f64>,
    /// Generalized eigenvectors as columns; `q_i^H B q_j = delta_ij`.
    pub eigenvectors: DMatrix<C64>,
    /// Lower Cholesky factor of `B` (after flooring, if applied).
    pub whitening: DMatrix<C64>,
    /// Whitened-domain orthonormal eigenvectors `U = L^H Q`.
    pub whitened_vectors: DMatrix<C64>,
    /// Whether `B` had to be floored to become positive definite.
    pub b_floored: bool,
}

/// Generalized eigendecomposition of Hermitian `A` and Hermitian PD `B`.
///
/// A numerically singular `B` is floored by adding `1e-10 * trace(B)/dim` to
/// its diagonal, recorded in [`GevdResult::b_floored`].
pub fn gevd(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<GevdResult> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "gevd operands must be square with equal dimension",
            expected: n,
            got: b.nrows(),
        });
    }
    let mut b_floored = false;
    let chol = match b.clone().cholesky() {
        Some(c) => c,
        None => {
            b_floored = true;
            let trace: f64 = (0..n).map(|i| b[(i, i)].re).sum();
            let floor = 1e-10 * trace / n as f64;
            let mut bf = b.clone();
            for i in 0..n {
                bf[(i, i)] += C64::new(floor, 0.0);
            }
            bf.cholesky()
                .ok_or_else(|| Error::SingularMatrix("B singular even after flooring".into()))?
        }
    };
    let l = chol.l();
    // whitened A: W = L^{-1} A L^{-H}
    let t = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?;
    let mut w = l
        .solve_lower_triangular(&t.adjoint())
        .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?
        .adjoint();
    hermitianize(&mut w);
    let eig = w.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let whitened = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    // generalized eigenvectors: Q = L^{-H} U
    let eigenvectors = l
        .adjoint()
        .solve_upper_triangular(&whitened)
        .ok_or_else(|| Error::SingularMatrix("back-substitution failed".into()))?;
    Ok(GevdResult {
        eigenvalues,
        eigenvectors,
        whitening: l,
        whitened_vectors: whitened,
        b_floored,
    })
}

/// GEVD-based low-rank target covariance estimate for a single bin:
/// whiten `s_x` by `s_v`, keep the top `rank_cap` eigenpairs, subtract the
/// unit noise floor from each retained eigenvalue (clamped at zero), and
/// de-whiten. The result is Hermitian PSD with rank at most `rank_cap`.
pub fn lowrank_target_mat(
    s_x: &DMatrix<C64>,
    s_v: &DMatrix<C64>,
    rank_cap: usize,
) -> Result<DMatrix<C64>> {
    let n = s_x.nrows();
    let rank = rank_cap.clamp(1, n);
    let g = gevd(s_x, s_v)?;
    let l = &g.whitening;
    let mut out = DMatrix::<C64>::zeros(n, n);
    for i in 0..rank {
        let gain = (g.eigenvalues[i] - 1.0).max(0.0);
        if gain == 0.0 {
            continue;
        }
        // de-whitened basis vector: L * u_i
        let v = l * g.whitened_vectors.column(i);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += v[r] * v[c].conj() * gain;
            }
        }
    }
    hermitianize(&mut out);
    Ok(out)
}

/// Per-bin [`lowrank_target_mat`] over a whole covariance tensor.
pub fn lowrank_target(
    s_x: &SpectralSpatialCov,
    s_v: &SpectralSpatialCov,
    rank_cap: usize,
) -> Result<SpectralSpatialCov> {
    let mats = s_x
        .mats()
        .iter()
        .zip(s_v.mats())
        .map(|(x, v)| lowrank_target_mat(x, v, rank_cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralSpatialCov::from_mats(
        mats,
        CovRole::Target,
        s_x.mics(),
    ))
}

/// Solve `(S + lambda I) w = rhs` via Hermitian factorization.
pub fn loaded_solve(
    s: &DMatrix<C64>,
    lambda: f64,
    rhs: &DVector<C64>,
) -> Result<DVector<C64>> {
    let n = s.nrows();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            context: "loaded_solve rhs length",
            expected: n,
            got: rhs.len(),
        });
    }
    let mut loaded = s.clone();
    for i in 0..n {
        loaded[(i, i)] += C64::new(lambda, 0.0);
    }
    let chol = loaded
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("loaded matrix not positive definite".into()))?;
    let w = chol.solve(rhs);
    let residual = (&loaded * &w - rhs).norm();
    if residual > 1e-8 * rhs.norm().max(1e-300) {
        return Err(Error::SingularMatrix(format!(
            "solve residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(w)
}

/// Diagonal loading rule: `lambda = min(max, max(min, trace(S_d)))`.
/// Higher loading when the estimated target power is higher.
pub fn diag_loading_lambda(s_d_est: &DMatrix<C64>, bounds: LoadingBounds) -> f64 {
    let trace: f64 = (0..s_d_est.nrows()).map(|i| s_d_est[(i, i)].re).sum();
    trace.clamp(bounds.lambda_min, bounds.lambda_max)
}
