//! The robust loss `RES ᵀ G⁻¹ RES`, its gradient contract, the residual
//! representative, the error bounds derived from the robustness constants,
//! and the plain mean-square baseline loss.
//!
//! The Gram inverse is never formed: each evaluation is one pair of
//! triangular solves against the factorization computed when the Gram was
//! assembled.

use crate::error::{Error, Result};
use crate::gram::GramMatrix;
use crate::grid::{DofSet, GridFunction};

/// Result of one robust-loss evaluation with the solve vector cached for the
/// gradient pass.
#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub loss: f64,
    /// `q = G⁻¹ res`
    pub q: Vec<f64>,
    pub res: Vec<f64>,
}

/// `loss = resᵀ G⁻¹ res` via one solve; tiny negative round-off is clipped
/// to zero, anything worse reports a non-SPD Gram.
pub fn robust_loss(res: &[f64], gram: &GramMatrix) -> Result<LossEvaluation> {
    if res.len() != gram.dim() {
        return Err(Error::DimensionMismatch {
            expected: gram.dim(),
            got: res.len(),
        });
    }
    let q = gram.factorization().solve(res)?;
    let raw: f64 = res.iter().zip(&q).map(|(a, b)| a * b).sum();
    let scale: f64 = res.iter().map(|v| v * v).sum::<f64>().max(1.0);
    if raw < -1e-12 * scale {
        return Err(Error::NegativeLoss(raw));
    }
    Ok(LossEvaluation {
        loss: raw.max(0.0),
        q,
        res: res.to_vec(),
    })
}

/// `∂loss/∂res = 2q`, to be chained through the residual stencils and the
/// network backward pass (`G` is constant and symmetric).
pub fn loss_gradient_cotangent(eval: &LossEvaluation) -> Vec<f64> {
    eval.q.iter().map(|v| 2.0 * v).collect()
}

/// Coefficients of the residual representative, oriented so that for the
/// symmetric problems (where the residual is assembled as `Δ_h u + f`) the
/// representative equals `u - u*_h`.
pub fn representative_coefficients(res: &[f64], gram: &GramMatrix) -> Result<Vec<f64>> {
    let q = gram.factorization().solve(res)?;
    Ok(q.iter().map(|v| -v).collect())
}

/// Residual representative scattered back onto the grid over `dofs`;
/// its Gram energy norm equals `sqrt(loss)`.
pub fn residual_representative(
    res: &[f64],
    gram: &GramMatrix,
    dofs: &DofSet,
) -> Result<GridFunction> {
    if dofs.len() != gram.dim() {
        return Err(Error::DimensionMismatch {
            expected: gram.dim(),
            got: dofs.len(),
        });
    }
    dofs.scatter(&representative_coefficients(res, gram)?)
}

/// Theorem bounds `(sqrt(loss)/mu, sqrt(loss)/alpha)` on the energy-norm
/// error.
pub fn error_bounds(loss: f64, mu: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0) || mu < alpha {
        return Err(Error::InvalidConstants { mu, alpha });
    }
    let s = loss.max(0.0).sqrt();
    Ok((s / mu, s / alpha))
}

/// Baseline loss: mean of the squared residual entries (identity Gram).
pub fn pinn_loss(res: &[f64]) -> f64 {
    if res.is_empty() {
        return 0.0;
    }
    res.iter().map(|v| v * v).sum::<f64>() / res.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::gram_laplace;
    use crate::grid::GridSpec;

    #[test]
    fn zero_residual_gives_zero_loss_and_cotangent() {
        let gram = gram_laplace(GridSpec::new(4)).unwrap();
        let eval = robust_loss(&vec![0.0; gram.dim()], &gram).unwrap();
        assert_eq!(eval.loss, 0.0);
        assert!(loss_gradient_cotangent(&eval).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_residual_reads_the_inverse_diagonal() {
        let gram = gram_laplace(GridSpec::new(8)).unwrap();
        let dense_inv = gram
            .matrix()
            .to_dense()
            .try_inverse()
            .expect("SPD Gram is invertible");
        for k in [0usize, 17, 48] {
            let mut res = vec![0.0; gram.dim()];
            res[k] = 1.0;
            let eval = robust_loss(&res, &gram).unwrap();
            assert!((eval.loss - dense_inv[(k, k)]).abs() < 1e-12 * dense_inv[(k, k)]);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let gram = gram_laplace(GridSpec::new(4)).unwrap();
        assert!(robust_loss(&[1.0, 2.0], &gram).is_err());
    }

    #[test]
    fn cotangent_is_twice_the_solve_and_scales_linearly() {
        let gram = gram_laplace(GridSpec::new(6)).unwrap();
        let res: Vec<f64> = (0..gram.dim()).map(|k| ((k * 13) % 7) as f64 - 3.0).collect();
        let eval = robust_loss(&res, &gram).unwrap();
        let cot = loss_gradient_cotangent(&eval);
        for (c, q) in cot.iter().zip(&eval.q) {
            assert_eq!(*c, 2.0 * q);
        }
        let doubled: Vec<f64> = res.iter().map(|v| 2.0 * v).collect();
        let eval2 = robust_loss(&doubled, &gram).unwrap();
        let cot2 = loss_gradient_cotangent(&eval2);
        for (a, b) in cot2.iter().zip(&cot) {
            assert!((a - 2.0 * b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn cotangent_predicts_loss_perturbation() {
        let gram = gram_laplace(GridSpec::new(6)).unwrap();
        let res: Vec<f64> = (0..gram.dim()).map(|k| (k as f64 * 0.37).sin()).collect();
        let eval = robust_loss(&res, &gram).unwrap();
        let cot = loss_gradient_cotangent(&eval);
        let k = 7;
        let step = 1e-6;
        let mut perturbed = res.clone();
        perturbed[k] += step;
        let eval2 = robust_loss(&perturbed, &gram).unwrap();
        let predicted = cot[k] * step;
        let actual = eval2.loss - eval.loss;
        assert!((actual - predicted).abs() < 1e-4 * predicted.abs());
    }

    #[test]
    fn representative_norm_squared_equals_the_loss() {
        let gram = gram_laplace(GridSpec::new(8)).unwrap();
        let res: Vec<f64> = (0..gram.dim()).map(|k| ((k * 29) % 11) as f64 - 5.0).collect();
        let eval = robust_loss(&res, &gram).unwrap();
        let r = representative_coefficients(&res, &gram).unwrap();
        let norm = gram.energy_norm(&r).unwrap();
        assert!((norm * norm - eval.loss).abs() < 1e-10 * eval.loss);
    }

    #[test]
    fn representative_of_zero_residual_is_zero() {
        let spec = GridSpec::new(4);
        let gram = gram_laplace(spec).unwrap();
        let dofs = crate::grid::DofSet::interior(spec);
        let r = residual_representative(&vec![0.0; gram.dim()], &gram, &dofs).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bounds_follow_the_constants() {
        let (lo, hi) = error_bounds(4.0, 1.0, 1.0).unwrap();
        assert_eq!((lo, hi), (2.0, 2.0));
        let (lo, hi) = error_bounds(4.0, 4.1, 0.1).unwrap();
        assert!((lo - 2.0 / 4.1).abs() < 1e-15);
        assert!((hi - 20.0).abs() < 1e-12);
        let (lo, hi) = error_bounds(4.0, 1.0, 0.125).unwrap();
        assert_eq!((lo, hi), (2.0, 16.0));
        assert!(error_bounds(1.0, 1.0, 0.0).is_err());
        assert!(error_bounds(1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn baseline_loss_is_the_mean_square() {
        assert_eq!(pinn_loss(&[]), 0.0);
        assert_eq!(pinn_loss(&[0.0, 0.0]), 0.0);
        assert_eq!(pinn_loss(&vec![1.0; 17]), 1.0);
        let gram = gram_laplace(GridSpec::new(8)).unwrap();
        let res: Vec<f64> = (0..gram.dim()).map(|k| (k as f64).cos()).collect();
        let robust = robust_loss(&res, &gram).unwrap().loss;
        let plain = pinn_loss(&res);
        assert!((robust - plain).abs() > 1e-6 * plain);
    }
}
