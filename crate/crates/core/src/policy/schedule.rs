//! Epoch boundaries and the per-epoch regularization / exploration schedules.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::kernels::KernelSpec;

use super::{PolicyConfig, RankVariant};

/// Epoch boundaries `0 = tau_0 < tau_1 < tau_2 < ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EpochSchedule {
    /// `tau_m = 2^m`
    #[default]
    Doubling,
    /// `tau_m = floor(2 T^(1 - 2^-m))`, clipped to the horizon `T`.
    Horizon,
}

impl EpochSchedule {
    /// Raw formula value of `tau_m` for `m >= 1` (no clipping).
    pub fn raw_boundary(&self, m: u32, horizon: u64) -> u64 {
        match self {
            EpochSchedule::Doubling => 1u64.checked_shl(m).unwrap_or(u64::MAX),
            EpochSchedule::Horizon => {
                let exponent = 1.0 - (-(m as f64)).exp2();
                let v = 2.0 * (horizon as f64).powf(exponent);
                // exact powers of two can land a hair below the integer
                let r = v.round();
                if (v - r).abs() <= 1e-9 * v {
                    r as u64
                } else {
                    v.floor() as u64
                }
            }
        }
    }

    /// The distinct boundaries `tau_1 < tau_2 < ...` needed to cover rounds
    /// `1..=horizon`. Horizon-aware boundaries are clipped to `horizon`;
    /// the last doubling boundary may exceed it.
    pub fn boundaries(&self, horizon: u64) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        let mut m = 1;
        while out.last().is_none_or(|&b| b < horizon) {
            let mut b = self.raw_boundary(m, horizon);
            if *self == EpochSchedule::Horizon {
                b = b.min(horizon);
            }
            if out.last().is_none_or(|&last| b > last) {
                out.push(b);
            }
            m += 1;
        }
        out
    }

    /// Number of model fits over `horizon` rounds: one per epoch after the first.
    pub fn fit_count(&self, horizon: u64) -> usize {
        self.boundaries(horizon).len().saturating_sub(1)
    }
}

/// `max(dim H, dim U)` for finite-rank kernels.
pub fn effective_dim(k: &KernelSpec, l: &KernelSpec, d_x: usize, d_yz: usize) -> Result<usize> {
    let rk = k.rank(d_x).ok_or(Error::UnsupportedFamily(k.family_name()))?;
    let rl = l.rank(d_yz).ok_or(Error::UnsupportedFamily(l.family_name()))?;
    Ok(rk.max(rl))
}

/// `nu / (2 nu + d)`
fn infinite_exponent(nu: f64, d: usize) -> f64 {
    nu / (2.0 * nu + d as f64)
}

/// Regularization pair `(lambda1, lambda2)` for a fit on `n` rows.
///
/// Finite rank: `lambda_i = eta_i sqrt(d_tilde / n)`.
/// Infinite rank: `lambda_i = eta_i (log n)^s n^-s` with `s = nu / (2 nu + d)`.
pub fn lambda_schedule(config: &PolicyConfig, n: usize) -> Result<(f64, f64)> {
    match config.variant {
        RankVariant::FiniteRank => {
            if n == 0 {
                return Err(input("lambda schedule needs n >= 1"));
            }
            let base = (config.d_tilde as f64 / n as f64).sqrt();
            Ok((config.eta1 * base, config.eta2 * base))
        }
        RankVariant::InfiniteRank { nu, d } => {
            if n < 2 {
                return Err(input("infinite-rank lambda schedule needs n >= 2"));
            }
            let s = infinite_exponent(nu, d);
            let nf = n as f64;
            let base = nf.ln().powf(s) * nf.powf(-s);
            Ok((config.eta1 * base, config.eta2 * base))
        }
    }
}

/// Exploration strength `gamma_m` for epoch `m >= 2`, where `epoch_len` is
/// `tau_{m-1} - tau_{m-2}` (the size of the previous epoch).
///
/// Finite rank: `sqrt(eta K epoch_len / (d_tilde log(2 m^2 / delta)))`.
/// Infinite rank: `sqrt(eta K / log(2 m^2 / delta)) (log n)^-s n^s`.
pub fn gamma_schedule(config: &PolicyConfig, n_arms: usize, m: usize, epoch_len: usize) -> Result<f64> {
    if m < 2 {
        return Err(input(format!("gamma schedule starts at epoch 2, got {m}")));
    }
    if epoch_len == 0 {
        return Err(input("epoch length must be >= 1"));
    }
    let mf = m as f64;
    let log_term = (2.0 * mf * mf / config.delta).ln();
    let numerator = config.eta * n_arms as f64;
    match config.variant {
        RankVariant::FiniteRank => Ok((numerator * epoch_len as f64 / (config.d_tilde as f64 * log_term)).sqrt()),
        RankVariant::InfiniteRank { nu, d } => {
            if epoch_len < 2 {
                return Err(input("infinite-rank gamma schedule needs n >= 2"));
            }
            let s = infinite_exponent(nu, d);
            let nf = epoch_len as f64;
            Ok((numerator / log_term).sqrt() * nf.ln().powf(-s) * nf.powf(s))
        }
    }
}
