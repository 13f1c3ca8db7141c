use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{gram_sym, KernelSpec};

use super::{DualIVModel, TripleDataset};

/// Term-by-term evaluation of the empirical regularized saddle objective.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ObjectiveReport {
    /// `1/n sum (f - y) u + lambda2/2 |f|^2 - 1/(2n) sum u^2 - lambda1/2 |u|^2`
    pub psi_hat: f64,
    /// The unpenalized part `1/n sum (f - y) u - 1/(2n) sum u^2`.
    pub primal_risk: f64,
    /// `|u|_U^2 = beta^T L beta`
    pub dual_norm_sq: f64,
    /// `|f|_H^2 = alpha^T K alpha`
    pub primal_norm_sq: f64,
}

/// `f = sum f_coeffs[i] k(x_i, .)`, `u = sum u_coeffs[i] l((y_i, z_i), .)`.
pub fn objective_report(
    data: &TripleDataset,
    f_coeffs: &[f64],
    u_coeffs: &[f64],
    k: &KernelSpec,
    l: &KernelSpec,
    lambda1: f64,
    lambda2: f64,
) -> Result<ObjectiveReport> {
    data.validate()?;
    let n = data.len();
    for c in [f_coeffs, u_coeffs] {
        if c.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: c.len(),
            });
        }
    }
    let kmat = gram_sym(k, data.xs())?;
    let lmat = gram_sym(l, &data.yz_points())?;
    Ok(report_from_grams(&kmat, &lmat, data.ys(), f_coeffs, u_coeffs, lambda1, lambda2))
}

pub(crate) fn report_from_grams(
    kmat: &DMatrix<f64>,
    lmat: &DMatrix<f64>,
    ys: &[f64],
    f_coeffs: &[f64],
    u_coeffs: &[f64],
    lambda1: f64,
    lambda2: f64,
) -> ObjectiveReport {
    let n = ys.len() as f64;
    let alpha = DVector::from_column_slice(f_coeffs);
    let beta = DVector::from_column_slice(u_coeffs);
    let f_vals = kmat * &alpha;
    let u_vals = lmat * &beta;
    let cross: f64 = f_vals
        .iter()
        .zip(ys)
        .zip(u_vals.iter())
        .map(|((f, y), u)| (f - y) * u)
        .sum::<f64>()
        / n;
    let u_sq = u_vals.norm_squared() / (2.0 * n);
    let primal_norm_sq = alpha.dot(&f_vals);
    let dual_norm_sq = beta.dot(&u_vals);
    let primal_risk = cross - u_sq;
    ObjectiveReport {
        psi_hat: primal_risk + 0.5 * lambda2 * primal_norm_sq - 0.5 * lambda1 * dual_norm_sq,
        primal_risk,
        dual_norm_sq,
        primal_norm_sq,
    }
}

/// Coefficients of the inner maximizer `u` for a fitted `f`:
/// `beta = (L + n lambda1 I)^-1 (K theta - y)`.
pub fn dual_witness(data: &TripleDataset, model: &DualIVModel, l: &KernelSpec) -> Result<Vec<f64>> {
    data.validate()?;
    let n = data.len();
    if model.thetas().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: model.thetas().len(),
        });
    }
    let kmat = gram_sym(model.k_spec(), data.xs())?;
    let mut shifted = gram_sym(l, &data.yz_points())?;
    for i in 0..n {
        shifted[(i, i)] += n as f64 * model.lambda1();
    }
    let resid = &kmat * DVector::from_column_slice(model.thetas()) - DVector::from_column_slice(data.ys());
    let chol = shifted.cholesky().ok_or_else(|| Error::Numerical {
        message: "L + n lambda1 I is not positive definite".into(),
        condition: f64::INFINITY,
    })?;
    Ok(chol.solve(&resid).as_slice().to_vec())
}
