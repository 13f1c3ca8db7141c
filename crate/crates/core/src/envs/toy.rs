//! Finite-support world where every population expectation is an exact sum.
//!
//! `Z ~ P(z)`, `X | Z ~ P(x | z)`, `E ~ P(e)` independent of `(X, Z)`, and
//! `Y = f*(X) + E`.

use rand::Rng;

use crate::error::{input, Result};

/// Probability rows must sum to one within this tolerance.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteToyWorld {
    pub z_support: Vec<f64>,
    pub z_probs: Vec<f64>,
    pub x_support: Vec<f64>,
    /// `x_given_z[i][j] = P(X = x_support[j] | Z = z_support[i])`
    pub x_given_z: Vec<Vec<f64>>,
    pub e_support: Vec<f64>,
    pub e_probs: Vec<f64>,
    /// `f_star[j] = f*(x_support[j])`
    pub f_star: Vec<f64>,
}

fn check_distribution(name: &str, probs: &[f64], len: usize) -> Result<()> {
    if probs.len() != len {
        return Err(input(format!("{name}: expected {len} probabilities, got {}", probs.len())));
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(input(format!("{name}: probabilities must be finite and non-negative")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(input(format!("{name}: probabilities sum to {total}")));
    }
    Ok(())
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
    // push the rounding residue into the last entry
    let head: f64 = probs[..len - 1].iter().sum();
    probs[len - 1] = 1.0 - head;
    probs
}

impl DiscreteToyWorld {
    pub fn validate(&self) -> Result<()> {
        let nz = self.z_support.len();
        let nx = self.x_support.len();
        let ne = self.e_support.len();
        if nz == 0 || nx == 0 || ne == 0 {
            return Err(input("toy world supports must be non-empty"));
        }
        check_distribution("P(Z)", &self.z_probs, nz)?;
        check_distribution("P(E)", &self.e_probs, ne)?;
        if self.x_given_z.len() != nz {
            return Err(input("P(X|Z) needs one row per z value"));
        }
        for (i, row) in self.x_given_z.iter().enumerate() {
            check_distribution(&format!("P(X|Z={i})"), row, nx)?;
        }
        if self.f_star.len() != nx {
            return Err(input("f* needs one value per x value"));
        }
        Ok(())
    }

    /// Random world with full-support tables and a mean-zero noise law.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, nz: usize, nx: usize, ne: usize) -> Self {
        assert!(nz >= 1 && nx >= 1 && ne >= 2, "toy world needs nz, nx >= 1 and ne >= 2");
        let z_support = (0..nz).map(|i| i as f64 + rng.random_range(0.0..0.5)).collect();
        let z_probs = random_simplex(rng, nz);
        let x_support = (0..nx).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x_given_z = (0..nz).map(|_| random_simplex(rng, nx)).collect();
        let e_probs = random_simplex(rng, ne);
        let mut e_support: Vec<f64> = (0..ne).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean: f64 = e_support.iter().zip(&e_probs).map(|(e, p)| e * p).sum();
        for e in &mut e_support {
            *e -= mean;
        }
        let f_star = (0..nx).map(|_| rng.random_range(-2.0..2.0)).collect();
        Self {
            z_support,
            z_probs,
            x_support,
            x_given_z,
            e_support,
            e_probs,
            f_star,
        }
    }

    /// Marginal `P(X = x_j) = sum_i P(z_i) P(x_j | z_i)`.
    pub fn x_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.x_support.len()];
        for (pz, row) in self.z_probs.iter().zip(&self.x_given_z) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += pz * p;
            }
        }
        out
    }

    /// `E[f(X) | Z = z_i]` for every `z_i`.
    pub fn conditional_mean(&self, f_table: &[f64]) -> Vec<f64> {
        self.x_given_z
            .iter()
            .map(|row| row.iter().zip(f_table).map(|(p, f)| p * f).sum())
            .collect()
    }

    pub fn noise_mean(&self) -> f64 {
        self.e_support.iter().zip(&self.e_probs).map(|(e, p)| e * p).sum()
    }
}
