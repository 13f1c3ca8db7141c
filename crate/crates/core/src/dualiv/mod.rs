//! Dual instrumental-variable kernel regression.
//!
//! The estimator solves the empirical saddle problem
//!
//! ```text
//! min_f max_u  1/n sum (f(x_i) - y_i) u(y_i, z_i) + lambda2/2 |f|_H^2
//!              - 1/(2n) sum u(y_i, z_i)^2 - lambda1/2 |u|_U^2
//! ```
//!
//! with `f = sum theta_i k(x_i, .)` and `u` in the span of `l((y_i, z_i), .)`.
//! Eliminating `u` gives the kernel-matrix recipe
//!
//! ```text
//! M     = K (L + n lambda1 I)^-1 L
//! theta = (M K + n lambda2 K)^-1 M y
//! ```
//!
//! `K` is rank deficient whenever `n` exceeds the rank of `k`, so the second
//! system is solved by truncated spectral least squares (minimum-norm
//! `theta`). Predictions only depend on `K theta`, so any solution of the
//! consistent system predicts identically.

mod feature_space;
mod identities;
mod objective;

pub use feature_space::{closed_form_feature_space, FeatureSpaceWeights};
pub use identities::{discrete_world_checks, IdentityReport};
pub use objective::{dual_witness, objective_report, ObjectiveReport};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::kernels::{gram_sym, KernelSpec};
use crate::points::PointSet;

/// Relative residual allowed on either linear solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Singular values below this fraction of the largest are discarded.
pub const SPECTRAL_CUTOFF: f64 = 1e-10;

/// Rows of `(x, y, z)`: regressor, reward and instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleDataset {
    xs: PointSet,
    ys: Vec<f64>,
    zs: PointSet,
}

impl TripleDataset {
    pub fn new(xs: PointSet, ys: Vec<f64>, zs: PointSet) -> Result<Self> {
        let data = Self { xs, ys, zs };
        data.validate()?;
        Ok(data)
    }

    /// An empty buffer to be filled with [`TripleDataset::push`].
    pub fn empty(x_dim: usize, z_dim: usize) -> Self {
        Self {
            xs: PointSet::new(x_dim),
            ys: Vec::new(),
            zs: PointSet::new(z_dim),
        }
    }

    pub fn push(&mut self, x: &[f64], y: f64, z: &[f64]) -> Result<()> {
        if x.len() != self.xs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.xs.dim(),
                actual: x.len(),
            });
        }
        if z.len() != self.zs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.zs.dim(),
                actual: z.len(),
            });
        }
        self.xs.push(x)?;
        self.zs.push(z)?;
        self.ys.push(y);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ys.len();
        if n == 0 {
            return Err(input("dataset needs at least one row"));
        }
        if self.xs.len() != n || self.zs.len() != n {
            return Err(input(format!(
                "row counts differ: xs {}, ys {}, zs {}",
                self.xs.len(),
                n,
                self.zs.len()
            )));
        }
        if !self.xs.is_finite() || !self.zs.is_finite() || !self.ys.iter().all(|y| y.is_finite()) {
            return Err(input("dataset contains non-finite values"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn xs(&self) -> &PointSet {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn zs(&self) -> &PointSet {
        &self.zs
    }

    /// Points `(y_i, z_i1, ..., z_id)` fed to the `l` kernel.
    pub fn yz_points(&self) -> PointSet {
        let mut out = PointSet::with_capacity(self.zs.dim() + 1, self.len());
        let mut row = Vec::with_capacity(self.zs.dim() + 1);
        for (y, z) in self.ys.iter().zip(self.zs.iter()) {
            row.clear();
            row.push(*y);
            row.extend_from_slice(z);
            out.push(&row).expect("row length is z_dim + 1");
        }
        out
    }

    pub fn clear(&mut self) {
        self.xs.clear();
        self.ys.clear();
        self.zs.clear();
    }

    /// FNV-1a over the bit patterns of every entry, for identifying data.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let values = self.xs.as_flat().iter().chain(&self.ys).chain(self.zs.as_flat());
        for v in values {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Which path produced `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveRoute {
    /// Truncated SVD of `M K + n lambda2 K`.
    Spectral,
    /// LU on the equivalent nonsingular system `(B K + n lambda2 I) theta = B y`,
    /// `B = (L + n lambda1 I)^-1 L`.
    Reduced,
    /// Cholesky on `K + n lambda I` (naive kernel ridge regression).
    Ridge,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    /// `|(L + n lambda1 I) B - L| / |L|` (zero for ridge fits).
    pub inner_residual: f64,
    /// `|A theta - b| / |b|` for the final system.
    pub outer_residual: f64,
    /// Numerical rank kept by the spectral solve.
    pub rank: usize,
    /// Ratio of largest to smallest retained singular value.
    pub condition: f64,
    pub route: SolveRoute,
}

/// A fitted kernel expansion `f(x) = sum_i theta_i k(x_i, x)`.
///
/// Naive ridge fits reuse this type with `lambda1 = 0`.
#[derive(Debug, Clone)]
pub struct DualIVModel {
    thetas: Vec<f64>,
    train_xs: PointSet,
    k_spec: KernelSpec,
    lambda1: f64,
    lambda2: f64,
    diagnostics: FitDiagnostics,
}

impl DualIVModel {
    /// Builds a model from explicit coefficients.
    pub fn from_parts(thetas: Vec<f64>, train_xs: PointSet, k_spec: KernelSpec) -> Result<Self> {
        if thetas.len() != train_xs.len() {
            return Err(Error::DimensionMismatch {
                expected: train_xs.len(),
                actual: thetas.len(),
            });
        }
        k_spec.validate()?;
        Ok(Self {
            thetas,
            train_xs,
            k_spec,
            lambda1: 0.0,
            lambda2: 0.0,
            diagnostics: FitDiagnostics {
                inner_residual: 0.0,
                outer_residual: 0.0,
                rank: 0,
                condition: 1.0,
                route: SolveRoute::Ridge,
            },
        })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn train_xs(&self) -> &PointSet {
        &self.train_xs
    }

    pub fn k_spec(&self) -> &KernelSpec {
        &self.k_spec
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.train_xs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.train_xs.dim(),
                actual: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.train_xs
            .iter()
            .zip(&self.thetas)
            .map(|(xi, t)| t * self.k_spec.eval_unchecked(xi, x))
            .sum()
    }
}

pub fn predict(model: &DualIVModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

fn check_lambda(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(input(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn rel_residual(residual: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
    let r = residual.norm();
    let b = rhs.norm();
    if b > 0.0 {
        r / b
    } else {
        r
    }
}

fn symmetrize(g: &mut DMatrix<f64>) {
    let n = g.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
}

/// Rough 2-norm condition estimate of an SPD matrix from its Cholesky diagonal.
fn cholesky_condition(l: &DMatrix<f64>) -> f64 {
    let d = l.diagonal();
    let max = d.max();
    let min = d.min();
    if min > 0.0 {
        (max / min).powi(2)
    } else {
        f64::INFINITY
    }
}

/// Dual IV regression of `y` on `x` with instrument `z`.
pub fn fit(data: &TripleDataset, k: &KernelSpec, l: &KernelSpec, lambda1: f64, lambda2: f64) -> Result<DualIVModel> {
    data.validate()?;
    check_lambda("lambda1", lambda1)?;
    check_lambda("lambda2", lambda2)?;
    let n = data.len();
    let nf = n as f64;

    let kmat = gram_sym(k, data.xs())?;
    let lmat = gram_sym(l, &data.yz_points())?;
    let y = DVector::from_column_slice(data.ys());

    let mut shifted = lmat.clone();
    for i in 0..n {
        shifted[(i, i)] += nf * lambda1;
    }
    symmetrize(&mut shifted);
    let chol = shifted.clone().cholesky().ok_or_else(|| Error::Numerical {
        message: "L + n lambda1 I is not positive definite".into(),
        condition: f64::INFINITY,
    })?;
    // B = (L + n lambda1 I)^-1 L
    let b = chol.solve(&lmat);
    let inner_residual = {
        let lnorm = lmat.norm();
        let r = (&shifted * &b - &lmat).norm();
        if lnorm > 0.0 {
            r / lnorm
        } else {
            r
        }
    };
    if inner_residual > RESIDUAL_TOLERANCE {
        return Err(Error::Numerical {
            message: format!("inner solve residual {inner_residual:.3e}"),
            condition: cholesky_condition(&chol.l()),
        });
    }

    let m = &kmat * &b;
    let mut a = &m * &kmat;
    a += &kmat * (nf * lambda2);
    let rhs = &m * &y;

    let (theta, rank, condition) = truncated_lstsq(&a, &rhs);
    let outer_residual = rel_residual(&(&a * &theta - &rhs), &rhs);
    let (theta, outer_residual, route) = if outer_residual <= RESIDUAL_TOLERANCE {
        (theta, outer_residual, SolveRoute::Spectral)
    } else {
        let mut reduced = &b * &kmat;
        for i in 0..n {
            reduced[(i, i)] += nf * lambda2;
        }
        let by = &b * &y;
        let alt = reduced.lu().solve(&by).ok_or_else(|| Error::Numerical {
            message: "B K + n lambda2 I is singular".into(),
            condition,
        })?;
        let alt_residual = rel_residual(&(&a * &alt - &rhs), &rhs);
        if alt_residual > RESIDUAL_TOLERANCE {
            return Err(Error::Numerical {
                message: format!("outer solve residual {outer_residual:.3e} (spectral), {alt_residual:.3e} (reduced)"),
                condition,
            });
        }
        (alt, alt_residual, SolveRoute::Reduced)
    };

    Ok(DualIVModel {
        thetas: theta.as_slice().to_vec(),
        train_xs: data.xs().clone(),
        k_spec: *k,
        lambda1,
        lambda2,
        diagnostics: FitDiagnostics {
            inner_residual,
            outer_residual,
            rank,
            condition,
            route,
        },
    })
}

/// Minimum-norm least-squares solution of `a x = b` dropping singular values
/// below `SPECTRAL_CUTOFF * sigma_max`. Returns `(x, rank, condition)`.
fn truncated_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize, f64) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let cutoff = SPECTRAL_CUTOFF * smax;
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    let mut smin = smax;
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            smin = smin.min(s);
            let coeff = u.column(i).dot(b) / s;
            x.axpy(coeff, &v_t.row(i).transpose(), 1.0);
        }
    }
    let condition = if rank > 0 { smax / smin } else { f64::INFINITY };
    (x, rank, condition)
}

/// Kernel ridge regression of `y` on `x`, ignoring the instrument:
/// `theta = (K + n lambda I)^-1 y`.
pub fn naive_krr_fit(data: &TripleDataset, k: &KernelSpec, lambda: f64) -> Result<DualIVModel> {
    data.validate()?;
    check_lambda("lambda", lambda)?;
    let n = data.len();
    let mut kmat = gram_sym(k, data.xs())?;
    for i in 0..n {
        kmat[(i, i)] += n as f64 * lambda;
    }
    symmetrize(&mut kmat);
    let y = DVector::from_column_slice(data.ys());
    let chol = kmat.clone().cholesky().ok_or_else(|| Error::Numerical {
        message: "K + n lambda I is not positive definite".into(),
        condition: f64::INFINITY,
    })?;
    let theta = chol.solve(&y);
    let outer_residual = rel_residual(&(&kmat * &theta - &y), &y);
    let condition = cholesky_condition(&chol.l());
    if outer_residual > RESIDUAL_TOLERANCE {
        return Err(Error::Numerical {
            message: format!("ridge residual {outer_residual:.3e}"),
            condition,
        });
    }
    Ok(DualIVModel {
        thetas: theta.as_slice().to_vec(),
        train_xs: data.xs().clone(),
        k_spec: *k,
        lambda1: 0.0,
        lambda2: lambda,
        diagnostics: FitDiagnostics {
            inner_residual: 0.0,
            outer_residual,
            rank: n,
            condition,
            route: SolveRoute::Ridge,
        },
    })
}
