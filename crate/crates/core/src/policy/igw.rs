//! Inverse gap weighting.

use rand::Rng;

use crate::error::{input, Result};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `p(a) = 1 / (K + gamma (f(a_hat) - f(a)))` for every `a != a_hat`;
/// the greedy arm `a_hat` takes the remaining mass.
pub fn igw_probabilities(values: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(input("need at least one arm"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(input("non-finite reward estimate"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(input(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let k = values.len() as f64;
    let best = argmax(values);
    let top = values[best];
    let mut probs: Vec<f64> = values.iter().map(|v| 1.0 / (k + gamma * (top - v))).collect();
    let rest: f64 = probs.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, p)| p).sum();
    // the residual can round an ulp below 1/K when every gap is zero
    probs[best] = (1.0 - rest).max(1.0 / k);
    Ok(probs)
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_when_no_gaps() {
        let p = igw_probabilities(&[1.0, 5.0, 2.0], 0.0).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = igw_probabilities(&[2.0; 4], 10.0).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        for k in 2..40 {
            let p = igw_probabilities(&vec![0.5; k], 0.0).unwrap();
            assert!(p[0] >= 1.0 / k as f64);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn worked_example() {
        let p = igw_probabilities(&[3.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        for v in &p[1..] {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ties_choose_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
        let p = igw_probabilities(&[1.0, 3.0, 3.0, 0.0], 2.0).unwrap();
        assert!(p[1] > p[2]);
    }

    #[test]
    fn large_gamma_concentrates() {
        let p = igw_probabilities(&[0.0, 1.0, 0.5], 1e12).unwrap();
        assert!(p[1] > 1.0 - 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(igw_probabilities(&[], 1.0).is_err());
        assert!(igw_probabilities(&[1.0, f64::NAN], 1.0).is_err());
        assert!(igw_probabilities(&[1.0, 2.0], -1.0).is_err());
        assert!(igw_probabilities(&[1.0, 2.0], f64::INFINITY).is_err());
    }

    #[test]
    fn sampling_follows_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = [0.1, 0.6, 0.3];
        let mut counts = [0usize; 3];
        for _ in 0..50_000 {
            counts[sample_index(&p, &mut rng)] += 1;
        }
        for (c, q) in counts.iter().zip(p) {
            assert!((*c as f64 / 50_000.0 - q).abs() < 0.01);
        }
        assert_eq!(sample_index(&[0.0, 0.0, 1.0], &mut rng), 2);
    }

    proptest! {
        #[test]
        fn distribution_invariants(values in prop::collection::vec(-50.0f64..50.0, 2..12), gamma in 0.0f64..1e4) {
            let p = igw_probabilities(&values, gamma).unwrap();
            let k = values.len() as f64;
            let best = argmax(&values);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p[best] >= 1.0 / k);
            for (i, v) in p.iter().enumerate() {
                if i != best {
                    prop_assert!(*v <= 1.0 / k);
                }
            }
        }

        #[test]
        fn widening_a_gap_lowers_its_probability(values in prop::collection::vec(-5.0f64..5.0, 3..8), gamma in 0.01f64..100.0, bump in 0.01f64..3.0) {
            let best = argmax(&values);
            let target = (best + 1) % values.len();
            let p = igw_probabilities(&values, gamma).unwrap();
            let mut lowered = values.clone();
            lowered[target] -= bump;
            let q = igw_probabilities(&lowered, gamma).unwrap();
            prop_assert!(q[target] <= p[target]);
        }
    }
}
