//! Positive-semidefinite kernels, Gram matrices and explicit feature maps.
//!
//! Two kernels are in play for dual IV regression: `k` over regressors
//! `x = (context, action)` and `l` over the concatenation `(y, z)`. Both are
//! described declaratively by [`KernelSpec`].
//!
//! For the finite-rank families ([`KernelSpec::Linear`] and
//! [`KernelSpec::Polynomial`]) a [`FeatureMap`] gives the explicit monomial
//! embedding with `<phi(w), phi(w')> = k(w, w')`. It is used as an
//! independent route for checking the kernelised solver.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::points::PointSet;

/// Declarative kernel description.
///
/// Serialized as `{family = "...", degree?, offset?, bandwidth?}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `k(w, w') = <w, w'>`
    Linear,
    /// `k(w, w') = (<w, w'> + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `k(w, w') = exp(-|w - w'|^2 / (2 bandwidth^2))`
    Rbf { bandwidth: f64 },
}

impl KernelSpec {
    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let spec = KernelSpec::Polynomial { degree, offset };
        spec.validate()?;
        Ok(spec)
    }

    pub fn rbf(bandwidth: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf { bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if degree == 0 {
                    return Err(input("polynomial kernel needs degree >= 1"));
                }
                if !(offset >= 0.0 && offset.is_finite()) {
                    return Err(input(format!("polynomial offset must be finite and >= 0, got {offset}")));
                }
                Ok(())
            }
            KernelSpec::Rbf { bandwidth } => {
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(input(format!("rbf bandwidth must be > 0, got {bandwidth}")));
                }
                Ok(())
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Rbf { .. } => "rbf",
        }
    }

    pub fn is_finite_rank(&self) -> bool {
        !matches!(self, KernelSpec::Rbf { .. })
    }

    /// Evaluates the kernel without checking dimensions.
    #[inline]
    pub(crate) fn eval_unchecked(&self, w: &[f64], v: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(w, v),
            KernelSpec::Polynomial { degree, offset } => (dot(w, v) + offset).powi(degree as i32),
            KernelSpec::Rbf { bandwidth } => {
                let sq: f64 = w.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }

    /// Rank of the kernel on `dim`-dimensional inputs, `None` for infinite rank.
    ///
    /// Polynomial kernels with a positive offset span all monomials of total
    /// degree at most `p`, i.e. `binomial(dim + p, p)` functions. With a zero
    /// offset only the degree-`p` monomials survive.
    pub fn rank(&self, dim: usize) -> Option<usize> {
        match *self {
            KernelSpec::Linear => Some(dim),
            KernelSpec::Polynomial { degree, offset } => {
                let p = degree as usize;
                if offset > 0.0 {
                    Some(binomial(dim + p, p))
                } else {
                    Some(binomial(dim + p - 1, p))
                }
            }
            KernelSpec::Rbf { .. } => None,
        }
    }
}

#[inline]
fn dot(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn eval_kernel(spec: &KernelSpec, w: &[f64], v: &[f64]) -> Result<f64> {
    if w.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: v.len(),
        });
    }
    Ok(spec.eval_unchecked(w, v))
}

/// `G[i][j] = k(rows[i], cols[j])`.
pub fn gram(spec: &KernelSpec, rows: &PointSet, cols: &PointSet) -> Result<DMatrix<f64>> {
    if rows.is_empty() || cols.is_empty() {
        return Err(input("gram matrix of an empty point set"));
    }
    if rows.dim() != cols.dim() {
        return Err(Error::DimensionMismatch {
            expected: rows.dim(),
            actual: cols.dim(),
        });
    }
    spec.validate()?;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        spec.eval_unchecked(rows.row(i), cols.row(j))
    }))
}

/// Symmetric Gram matrix of a single point set; only the upper triangle is
/// evaluated so the result is exactly symmetric.
pub fn gram_sym(spec: &KernelSpec, points: &PointSet) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(input("gram matrix of an empty point set"));
    }
    spec.validate()?;
    let n = points.len();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = spec.eval_unchecked(points.row(i), points.row(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Kernel column `(k(p_1, w), ..., k(p_n, w))`.
pub fn kernel_column(spec: &KernelSpec, points: &PointSet, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            actual: w.len(),
        });
    }
    Ok(points.iter().map(|p| spec.eval_unchecked(p, w)).collect())
}

/// `binomial(n, k)` computed exactly in integers.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Exponent vectors of all monomials in `dim` variables with total degree
/// `<= max_degree`, in graded lexicographic order: by total degree first,
/// then lexicographically descending in the exponent of `w_1`, `w_2`, ...
pub fn graded_monomials(dim: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(binomial(dim + max_degree as usize, max_degree as usize));
    for degree in 0..=max_degree {
        let mut current = vec![0u32; dim];
        push_exact_degree(&mut out, &mut current, 0, degree);
    }
    out
}

fn push_exact_degree(out: &mut Vec<Vec<u32>>, current: &mut [u32], pos: usize, remaining: u32) {
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(current.to_vec());
        current[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        push_exact_degree(out, current, pos + 1, remaining - e);
    }
    current[pos] = 0;
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Explicit finite-rank embedding whose inner product reproduces a kernel.
///
/// Polynomial kernels `(<w, w'> + c)^p` expand by the multinomial theorem
/// into `sum_alpha  p! / ((p - |alpha|)! alpha!) c^(p - |alpha|) w^alpha w'^alpha`,
/// so each monomial `w^alpha` is scaled by the square root of its
/// multinomial weight. The monomial order is [`graded_monomials`]. The
/// linear kernel uses the identity map.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    spec: KernelSpec,
    input_dim: usize,
    exponents: Vec<Vec<u32>>,
    scales: Vec<f64>,
}

impl FeatureMap {
    pub fn new(spec: KernelSpec, input_dim: usize) -> Result<Self> {
        spec.validate()?;
        if input_dim == 0 {
            return Err(input("feature map needs input_dim >= 1"));
        }
        let (exponents, scales) = match spec {
            KernelSpec::Linear => {
                let exps = (0..input_dim)
                    .map(|i| {
                        let mut e = vec![0; input_dim];
                        e[i] = 1;
                        e
                    })
                    .collect();
                (exps, vec![1.0; input_dim])
            }
            KernelSpec::Polynomial { degree, offset } => {
                let exps = graded_monomials(input_dim, degree);
                let scales = exps
                    .iter()
                    .map(|alpha| {
                        let total: u32 = alpha.iter().sum();
                        let rest = degree - total;
                        let denom: f64 = factorial(rest) * alpha.iter().map(|&a| factorial(a)).product::<f64>();
                        let weight = factorial(degree) / denom * offset.powi(rest as i32);
                        weight.sqrt()
                    })
                    .collect();
                (exps, scales)
            }
            KernelSpec::Rbf { .. } => return Err(Error::UnsupportedFamily("rbf")),
        };
        Ok(Self {
            spec,
            input_dim,
            exponents,
            scales,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn featurize(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: w.len(),
            });
        }
        Ok(self
            .exponents
            .iter()
            .zip(&self.scales)
            .map(|(alpha, s)| {
                s * alpha
                    .iter()
                    .zip(w)
                    .map(|(&a, &x)| x.powi(a as i32))
                    .product::<f64>()
            })
            .collect())
    }

    /// Feature matrix with one column per point (`output_dim x n`).
    pub fn feature_matrix(&self, points: &PointSet) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.output_dim(), points.len());
        for (j, p) in points.iter().enumerate() {
            let f = self.featurize(p)?;
            m.set_column(j, &nalgebra::DVector::from_vec(f));
        }
        Ok(m)
    }
}

pub fn featurize(map: &FeatureMap, w: &[f64]) -> Result<Vec<f64>> {
    map.featurize(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly31() -> KernelSpec {
        KernelSpec::polynomial(3, 1.0).unwrap()
    }

    #[test]
    fn polynomial_at_unit_vector() {
        let w = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(eval_kernel(&poly31(), &w, &w).unwrap(), 8.0);
    }

    #[test]
    fn linear_with_zero_vector() {
        assert_eq!(eval_kernel(&KernelSpec::Linear, &[2.0, 3.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn poly_matches_enumerated_feature_map() {
        // Independent expansion of (w.v + 1)^3 in two variables, enumerated by hand:
        // 1, sqrt3 a, sqrt3 b, sqrt3 a^2, sqrt6 ab, sqrt3 b^2, a^3, sqrt3 a^2 b, sqrt3 a b^2, b^3
        let brute = |a: f64, b: f64| {
            let s3 = 3f64.sqrt();
            let s6 = 6f64.sqrt();
            vec![
                1.0,
                s3 * a,
                s3 * b,
                s3 * a * a,
                s6 * a * b,
                s3 * b * b,
                a * a * a,
                s3 * a * a * b,
                s3 * a * b * b,
                b * b * b,
            ]
        };
        let map = FeatureMap::new(poly31(), 2).unwrap();
        let fw = map.featurize(&[0.5, 0.5]).unwrap();
        let fv = map.featurize(&[1.0, 1.0]).unwrap();
        let bw = brute(0.5, 0.5);
        let bv = brute(1.0, 1.0);
        for (x, y) in fw.iter().zip(&bw) {
            assert!((x - y).abs() < 1e-14);
        }
        for (x, y) in fv.iter().zip(&bv) {
            assert!((x - y).abs() < 1e-14);
        }
        let k = eval_kernel(&poly31(), &[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert!((dot(&fw, &fv) - k).abs() < 1e-12);
        assert_eq!(k, 8.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = eval_kernel(&KernelSpec::Linear, &[1.0], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, actual: 2 }));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::polynomial(0, 1.0).is_err());
        assert!(KernelSpec::polynomial(2, -1.0).is_err());
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::rbf(f64::NAN).is_err());
    }

    #[test]
    fn single_point_gram() {
        let p = PointSet::from_rows(&[vec![0.3, -1.2]]).unwrap();
        let g = gram(&poly31(), &p, &p).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert_eq!(g[(0, 0)], eval_kernel(&poly31(), p.row(0), p.row(0)).unwrap());
    }

    #[test]
    fn empty_gram_rejected() {
        let empty = PointSet::new(2);
        assert!(gram(&KernelSpec::Linear, &empty, &empty).is_err());
    }

    #[test]
    fn gram_is_symmetric_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in [KernelSpec::Linear, poly31(), KernelSpec::rbf(0.7).unwrap()] {
            for n in [1usize, 10, 50] {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
                    .collect();
                let p = PointSet::from_rows(&rows).unwrap();
                let g = gram(&spec, &p, &p).unwrap();
                assert_eq!(g, g.transpose());
                let trace = g.trace();
                let min_eig = g.symmetric_eigenvalues().min();
                assert!(min_eig >= -1e-9 * trace, "{spec:?} n={n}: {min_eig} vs trace {trace}");
            }
        }
    }

    #[test]
    fn featurize_examples() {
        let lin = FeatureMap::new(KernelSpec::Linear, 2).unwrap();
        assert_eq!(lin.featurize(&[2.5, -1.0]).unwrap(), vec![2.5, -1.0]);

        let p11 = FeatureMap::new(KernelSpec::polynomial(1, 1.0).unwrap(), 1).unwrap();
        assert_eq!(p11.featurize(&[0.7]).unwrap(), vec![1.0, 0.7]);

        let p31 = FeatureMap::new(poly31(), 4).unwrap();
        assert_eq!(p31.output_dim(), 35);

        assert!(matches!(
            FeatureMap::new(KernelSpec::rbf(1.0).unwrap(), 2),
            Err(Error::UnsupportedFamily("rbf"))
        ));
    }

    #[test]
    fn graded_order_in_two_variables() {
        let m = graded_monomials(2, 2);
        assert_eq!(m, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn monomial_count_matches_binomial() {
        fn brute_count(d: usize, p: u32) -> usize {
            // count exponent vectors in [0, p]^d with sum <= p
            let base = p as usize + 1;
            (0..base.pow(d as u32))
                .filter(|&code| {
                    let mut c = code;
                    let mut sum = 0;
                    for _ in 0..d {
                        sum += c % base;
                        c /= base;
                    }
                    sum <= p as usize
                })
                .count()
        }
        for d in 1..=6 {
            for p in 1..=4u32 {
                let count = graded_monomials(d, p).len();
                assert_eq!(count, brute_count(d, p), "d={d} p={p}");
                assert_eq!(count, binomial(d + p as usize, p as usize));
            }
        }
    }

    #[test]
    fn rank_of_homogeneous_polynomial() {
        assert_eq!(KernelSpec::polynomial(3, 0.0).unwrap().rank(2), Some(4));
        assert_eq!(poly31().rank(4), Some(35));
        assert_eq!(poly31().rank(3), Some(20));
        assert_eq!(KernelSpec::rbf(1.0).unwrap().rank(3), None);
    }

    #[test]
    fn serde_shape() {
        let json = serde_json::to_string(&poly31()).unwrap();
        assert_eq!(json, r#"{"family":"polynomial","degree":3,"offset":1.0}"#);
        let back: KernelSpec = toml::from_str("family = \"rbf\"\nbandwidth = 0.5").unwrap();
        assert_eq!(back, KernelSpec::Rbf { bandwidth: 0.5 });
        let lin: KernelSpec = serde_json::from_str(r#"{"family":"linear"}"#).unwrap();
        assert_eq!(lin, KernelSpec::Linear);
    }

    fn any_spec() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            Just(KernelSpec::Linear),
            (1u32..=4, 0.0f64..2.0).prop_map(|(degree, offset)| KernelSpec::Polynomial { degree, offset }),
            (0.1f64..3.0).prop_map(|bandwidth| KernelSpec::Rbf { bandwidth }),
        ]
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(spec in any_spec(), w in prop::collection::vec(-3.0f64..3.0, 3), v in prop::collection::vec(-3.0f64..3.0, 3)) {
            prop_assert_eq!(spec.eval_unchecked(&w, &v), spec.eval_unchecked(&v, &w));
        }

        #[test]
        fn kernel_trick_holds(
            degree in 1u32..=4,
            offset in 0.0f64..2.0,
            dim in 1usize..=4,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for spec in [KernelSpec::Linear, KernelSpec::Polynomial { degree, offset }] {
                let map = FeatureMap::new(spec, dim).unwrap();
                let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                let k = spec.eval_unchecked(&w, &v);
                let via_features = dot(&map.featurize(&w).unwrap(), &map.featurize(&v).unwrap());
                prop_assert!((via_features - k).abs() <= 1e-10 * (1.0 + k.abs()));
            }
        }
    }
}
