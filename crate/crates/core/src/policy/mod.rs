//! Epoch-based explore/exploit policies.
//!
//! [`DivEls`] refits a reward model once per epoch on the previous epoch's
//! data only, then samples arms by inverse gap weighting. The estimator is
//! either dual IV regression or, for the naive baseline, plain kernel ridge
//! regression on `(x, y)`. [`UniformPolicy`] ignores everything.

mod div_els;
mod igw;
mod schedule;

pub use div_els::{DivEls, EpochDiagnostics, Estimator};
pub use igw::{argmax, igw_probabilities, sample_index};
pub use schedule::{effective_dim, gamma_schedule, lambda_schedule, EpochSchedule};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::kernels::KernelSpec;
use crate::seeding::{stream_rng, Stream};

/// Rate regime for the regularization and exploration schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RankVariant {
    /// Finite-dimensional RKHS of effective dimension `d_tilde`.
    #[default]
    FiniteRank,
    /// Sobolev-type smoothness `nu` over a `d`-dimensional input.
    InfiniteRank { nu: f64, d: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub eta: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub delta: f64,
    pub k_spec: KernelSpec,
    pub l_spec: KernelSpec,
    /// Effective dimension; unused by the infinite-rank schedules.
    pub d_tilde: usize,
    #[serde(default)]
    pub variant: RankVariant,
}

impl PolicyConfig {
    /// Finite-rank config with `d_tilde` taken from [`effective_dim`].
    pub fn finite_rank(eta: f64, k_spec: KernelSpec, l_spec: KernelSpec, d_x: usize, d_yz: usize) -> Result<Self> {
        let d_tilde = effective_dim(&k_spec, &l_spec, d_x, d_yz)?;
        let config = Self {
            eta,
            eta1: 1.0,
            eta2: 1.0,
            delta: 0.1,
            k_spec,
            l_spec,
            d_tilde,
            variant: RankVariant::FiniteRank,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(input(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(input(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        self.k_spec.validate()?;
        self.l_spec.validate()?;
        if self.d_tilde == 0 {
            return Err(input("d_tilde must be positive"));
        }
        if let RankVariant::InfiniteRank { nu, d } = self.variant {
            if d == 0 {
                return Err(input("infinite-rank input dimension must be positive"));
            }
            if !(nu > d as f64 / 2.0 && nu.is_finite()) {
                return Err(input(format!("nu must exceed d / 2 = {}, got {nu}", d as f64 / 2.0)));
            }
        }
        Ok(())
    }
}

/// The bandit-side interface shared by every policy.
///
/// Each round the runner calls `begin_round(t)`, then `act`, then `observe`
/// with the realized reward and the instrument.
pub trait Policy: Send {
    fn begin_round(&mut self, t: u64) -> Result<()>;

    fn act(&mut self, context: &[f64]) -> Result<usize>;

    fn observe(&mut self, context: &[f64], instrument: &[f64], arm: usize, reward: f64) -> Result<()>;

    /// One entry per model fit so far.
    fn epoch_log(&self) -> &[EpochDiagnostics] {
        &[]
    }
}

/// Picks each arm with probability `1 / K`.
#[derive(Debug, Clone)]
pub struct UniformPolicy {
    n_arms: usize,
    rng: ChaCha8Rng,
}

impl UniformPolicy {
    pub fn new(n_arms: usize, seed: u64) -> Result<Self> {
        if n_arms == 0 {
            return Err(input("need at least one arm"));
        }
        Ok(Self {
            n_arms,
            rng: stream_rng(seed, Stream::Policy),
        })
    }
}

impl Policy for UniformPolicy {
    fn begin_round(&mut self, _t: u64) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, _context: &[f64]) -> Result<usize> {
        Ok(self.rng.random_range(0..self.n_arms))
    }

    fn observe(&mut self, _context: &[f64], _instrument: &[f64], _arm: usize, _reward: f64) -> Result<()> {
        Ok(())
    }
}

pub fn uniform_policy(n_arms: usize, seed: u64) -> Result<UniformPolicy> {
    UniformPolicy::new(n_arms, seed)
}

/// The DIV-ELS loop with kernel ridge regression in place of dual IV.
pub fn naive_krr_policy(
    config: PolicyConfig,
    schedule: EpochSchedule,
    action_set: Vec<Vec<f64>>,
    context_dim: usize,
    horizon: u64,
    seed: u64,
) -> Result<DivEls> {
    DivEls::new(config, Estimator::NaiveKrr, schedule, action_set, context_dim, horizon, seed)
}
