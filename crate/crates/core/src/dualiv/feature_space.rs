//! Explicit-covariance route to the dual IV estimator.
//!
//! With feature matrices `Phi` (columns `phi(x_i)`) and `Ups` (columns
//! `varphi(y_i, z_i)`):
//!
//! ```text
//! C_yz  = Ups Ups^T / n      C_xyz = Phi Ups^T / n      r = Ups y / n
//! w     = (C_xyz (C_yz + lambda1 I)^-1 C_yzx + lambda2 I)^-1 C_xyz (C_yz + lambda1 I)^-1 r
//! ```
//!
//! Only finite-rank kernels have such coordinates. This never builds an
//! `n x n` matrix, which makes it an independent check on [`super::fit`].

use nalgebra::{DMatrix, DVector};

use crate::error::{input, Error, Result};
use crate::kernels::FeatureMap;

use super::TripleDataset;

#[derive(Debug, Clone)]
pub struct FeatureSpaceWeights {
    weights: Vec<f64>,
    phi: FeatureMap,
}

impl FeatureSpaceWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let f = self.phi.featurize(x)?;
        Ok(f.iter().zip(&self.weights).map(|(a, b)| a * b).sum())
    }
}

pub fn closed_form_feature_space(
    data: &TripleDataset,
    phi: &FeatureMap,
    varphi: &FeatureMap,
    lambda1: f64,
    lambda2: f64,
) -> Result<FeatureSpaceWeights> {
    data.validate()?;
    if !(lambda1 > 0.0 && lambda2 > 0.0) {
        return Err(input("regularization parameters must be > 0"));
    }
    if phi.input_dim() != data.xs().dim() {
        return Err(Error::DimensionMismatch {
            expected: data.xs().dim(),
            actual: phi.input_dim(),
        });
    }
    if varphi.input_dim() != data.zs().dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: data.zs().dim() + 1,
            actual: varphi.input_dim(),
        });
    }
    let n = data.len() as f64;
    let big_phi = phi.feature_matrix(data.xs())?;
    let ups = varphi.feature_matrix(&data.yz_points())?;
    let y = DVector::from_column_slice(data.ys());

    let c_yz = &ups * ups.transpose() / n;
    let c_xyz = &big_phi * ups.transpose() / n;
    let r = &ups * y / n;

    let dv = c_yz.nrows();
    let reg_yz = c_yz + DMatrix::identity(dv, dv) * lambda1;
    let chol_yz = reg_yz.cholesky().ok_or_else(|| Error::Numerical {
        message: "C_yz + lambda1 I is not positive definite".into(),
        condition: f64::INFINITY,
    })?;
    let c_yzx = c_xyz.transpose();
    let q = chol_yz.solve(&c_yzx);
    let dp = c_xyz.nrows();
    let mut outer = &c_xyz * q + DMatrix::identity(dp, dp) * lambda2;
    outer = (&outer + outer.transpose()) * 0.5;
    let rhs = &c_xyz * chol_yz.solve(&r);
    let chol_outer = outer.cholesky().ok_or_else(|| Error::Numerical {
        message: "outer feature-space system is not positive definite".into(),
        condition: f64::INFINITY,
    })?;
    let w = chol_outer.solve(&rhs);
    Ok(FeatureSpaceWeights {
        weights: w.as_slice().to_vec(),
        phi: phi.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::linear_iv_data;
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::points::PointSet;

    #[test]
    fn zero_rewards_give_zero_weights() {
        let src = linear_iv_data(15, 4);
        let d = TripleDataset::new(src.xs().clone(), vec![0.0; 15], src.zs().clone()).unwrap();
        let phi = FeatureMap::new(KernelSpec::polynomial(2, 1.0).unwrap(), 2).unwrap();
        let varphi = FeatureMap::new(KernelSpec::polynomial(2, 1.0).unwrap(), 3).unwrap();
        let w = closed_form_feature_space(&d, &phi, &varphi, 0.1, 0.1).unwrap();
        assert!(w.weights().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heavy_ridge_shrinks_monotonically() {
        let d = linear_iv_data(30, 8);
        let phi = FeatureMap::new(KernelSpec::Linear, 2).unwrap();
        let varphi = FeatureMap::new(KernelSpec::Linear, 3).unwrap();
        let mut last = f64::INFINITY;
        for l2 in [1e-2, 1.0, 1e2, 1e4, 1e6] {
            let norm = closed_form_feature_space(&d, &phi, &varphi, 0.1, l2).unwrap().norm();
            assert!(norm < last);
            last = norm;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn agrees_with_kernel_route_on_linear_data() {
        let d = linear_iv_data(20, 2);
        let (l1, l2) = (0.05, 0.01);
        let model = super::super::fit(&d, &KernelSpec::Linear, &KernelSpec::Linear, l1, l2).unwrap();
        let phi = FeatureMap::new(KernelSpec::Linear, 2).unwrap();
        let varphi = FeatureMap::new(KernelSpec::Linear, 3).unwrap();
        let w = closed_form_feature_space(&d, &phi, &varphi, l1, l2).unwrap();
        let probes = PointSet::from_rows(&[[0.1, 0.2], [1.0, -1.0], [-0.4, 0.9], [2.0, 2.0]]).unwrap();
        for p in probes.iter() {
            let a = model.predict(p).unwrap();
            let b = w.predict(p).unwrap();
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_infinite_rank_and_mismatched_maps() {
        let d = linear_iv_data(5, 2);
        let phi = FeatureMap::new(KernelSpec::Linear, 2).unwrap();
        assert!(closed_form_feature_space(&d, &phi, &phi, 0.1, 0.1).is_err());
        assert!(FeatureMap::new(KernelSpec::rbf(1.0).unwrap(), 3).is_err());
    }
}
