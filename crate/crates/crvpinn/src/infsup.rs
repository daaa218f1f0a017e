//! Numerical verification of the discrete Stokes inf-sup constant.
//!
//! With `B` the matrix of the extended first-order operator, `M` the trial
//! Gram (block mass) and `G` the test graph-norm Gram, the inf-sup constant
//! is `α = sqrt(λ₁)` of the generalized eigenvalue problem
//! `(B M⁻¹ Bᵀ) v = λ G v`. The smallest eigenvalue `λ₀` vanishes and its
//! eigenvector is the constant-pressure kernel of the extended operator, so
//! the report carries a constancy measure for that vector as a structural
//! check.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gram::{gram_stokes, stokes_operator_matrix, StokesDofLayout, StokesField};
use crate::grid::GridSpec;
use crate::sparse::{generalized_eig_smallest_pairs, CsrMatrix};

/// Outcome of one inf-sup verification at grid size `n`.
#[derive(Debug, Clone)]
pub struct InfSupReport {
    pub n: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    /// `sqrt(λ₁)`
    pub alpha: f64,
    /// Largest deviation from 1 of the kernel eigenvector's pressure block
    /// after normalizing its mean to 1.
    pub kernel_pressure_deviation: f64,
    /// Largest magnitude in the kernel eigenvector's σ and velocity blocks
    /// under the same normalization.
    pub kernel_sigma_u_max: f64,
    /// `|v₁ᵀRv₁/(v₁ᵀGv₁) - λ₁| / λ₁` for the computed eigenvector.
    pub rayleigh_consistency: f64,
    /// Smallest eigenvalue of the symmetrized `R`; `R` must be positive
    /// semidefinite up to round-off.
    pub r_min_eigenvalue: f64,
}

/// Assemble `R = B M⁻¹ Bᵀ` densely, applying `M⁻¹` through its
/// factorization.
fn assemble_r(b: &CsrMatrix, m: &CsrMatrix) -> Result<DMatrix<f64>> {
    let fact = m.factorize()?;
    let dim = b.nrows();
    // columns of X = M⁻¹ Bᵀ
    let mut x = DMatrix::zeros(dim, dim);
    let mut col = vec![0.0; dim];
    for i in 0..dim {
        for v in col.iter_mut() {
            *v = 0.0;
        }
        for (j, val) in b.row(i) {
            col[j] = val;
        }
        fact.solve_in_place(&mut col);
        for (r, &v) in col.iter().enumerate() {
            x[(r, i)] = v;
        }
    }
    let b_dense = b.to_dense();
    let r = &b_dense * x;
    Ok((&r + r.transpose()) * 0.5)
}

/// Verify the inf-sup constant at grid size `n` (dense eigensolve; intended
/// for `n <= 16`).
pub fn infsup_constant(n: usize) -> Result<InfSupReport> {
    let spec = GridSpec::new(n);
    let layout = StokesDofLayout::extended(spec);
    let b = stokes_operator_matrix(spec, &layout)?;
    let h2 = spec.h() * spec.h();
    let m = CsrMatrix::scaled_identity(layout.total(), h2);
    let r = assemble_r(&b, &m)?;
    let g = gram_stokes(spec, &layout)?;
    let g_dense = g.matrix().to_dense();

    let r_min_eigenvalue = {
        let eig = r.clone().symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    };

    let pairs = generalized_eig_smallest_pairs(&r, &g_dense, 2)?;
    if pairs.len() < 2 {
        return Err(Error::EigenFailure("needed two eigenpairs".into()));
    }
    let (lambda0, v0) = (pairs[0].0, &pairs[0].1);
    let (lambda1, v1) = (pairs[1].0, &pairs[1].1);

    // kernel structure: pressure block constant, all other blocks zero
    let p_off = layout.offset(StokesField::P);
    let p_len = layout.total() - p_off;
    let p_mean = v0.as_slice()[p_off..].iter().sum::<f64>() / p_len as f64;
    let (kernel_pressure_deviation, kernel_sigma_u_max) = if p_mean != 0.0 {
        let dev = v0.as_slice()[p_off..]
            .iter()
            .map(|v| (v / p_mean - 1.0).abs())
            .fold(0.0f64, f64::max);
        let su = v0.as_slice()[..p_off]
            .iter()
            .map(|v| (v / p_mean).abs())
            .fold(0.0f64, f64::max);
        (dev, su)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };

    let rayleigh = {
        let rv = &r * v1;
        let gv = &g_dense * v1;
        let num = v1.dot(&rv);
        let den = v1.dot(&gv);
        num / den
    };
    let rayleigh_consistency = if lambda1 != 0.0 {
        ((rayleigh - lambda1) / lambda1).abs()
    } else {
        f64::INFINITY
    };

    Ok(InfSupReport {
        n,
        lambda0,
        lambda1,
        alpha: lambda1.max(0.0).sqrt(),
        kernel_pressure_deviation,
        kernel_sigma_u_max,
        rayleigh_consistency,
        r_min_eigenvalue,
    })
}
