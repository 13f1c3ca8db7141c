//! Synthetic confounded bandit environments.
//!
//! Each round draws an instrument `z ~ U[0,1]^d` and a scalar confounder
//! `e ~ N(0, sigma^2)`. The context is `c = rho z + (1 - rho) e (1, ..., 1)`
//! and pulling arm `a` pays
//!
//! ```text
//! y = (alpha^T x + 1)^3 + e,    x = (c, a)
//! ```
//!
//! with the *same* `e`, which is what makes `E[e | c] != 0`. Small `rho`
//! means a weak instrument and a strong confounder.

mod toy;

pub use toy::{DiscreteToyWorld, PROBABILITY_TOLERANCE};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dualiv::TripleDataset;
use crate::error::{input, Error, Result};
use crate::seeding::{stream_rng, Stream};

/// Default confounder standard deviation: variance 0.1.
pub fn default_noise_scale() -> f64 {
    0.1f64.sqrt()
}

/// Whether the reward reuses the context's confounder draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RewardNoise {
    #[default]
    Confounded,
    /// A fresh draw independent of the context.
    Independent,
}

/// Parameters from which an [`EnvSpec`] is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub n_arms: usize,
    pub rho: f64,
    pub noise_scale: f64,
    pub context_dim: usize,
    pub action_dim: usize,
}

impl EnvParams {
    pub fn new(n_arms: usize, rho: f64) -> Self {
        Self {
            n_arms,
            rho,
            noise_scale: default_noise_scale(),
            context_dim: 2,
            action_dim: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_arms == 0 {
            return Err(input("need at least one arm"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(input(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(input(format!("noise_scale must be > 0, got {}", self.noise_scale)));
        }
        if self.context_dim == 0 || self.action_dim == 0 {
            return Err(input("context and action dimensions must be positive"));
        }
        Ok(())
    }

    /// `alpha ~ U[0,1]^(context_dim + action_dim)`, arms `~ U[-2,2]^action_dim`.
    pub fn sample(&self, seed: u64) -> Result<EnvSpec> {
        self.validate()?;
        let mut rng = stream_rng(seed, Stream::Env);
        let alpha = (0..self.context_dim + self.action_dim)
            .map(|_| rng.random_range(0.0..=1.0))
            .collect();
        let action_set = (0..self.n_arms)
            .map(|_| (0..self.action_dim).map(|_| rng.random_range(-2.0..=2.0)).collect())
            .collect();
        Ok(EnvSpec {
            n_arms: self.n_arms,
            context_dim: self.context_dim,
            action_dim: self.action_dim,
            rho: self.rho,
            noise_scale: self.noise_scale,
            alpha,
            action_set,
            seed,
            reward_noise: RewardNoise::Confounded,
        })
    }
}

pub fn sample_env(n_arms: usize, rho: f64, seed: u64) -> Result<EnvSpec> {
    EnvParams::new(n_arms, rho).sample(seed)
}

/// A resolved bandit instance; the action set is fixed for the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub n_arms: usize,
    pub context_dim: usize,
    pub action_dim: usize,
    pub rho: f64,
    pub noise_scale: f64,
    pub alpha: Vec<f64>,
    pub action_set: Vec<Vec<f64>>,
    pub seed: u64,
    #[serde(default)]
    pub reward_noise: RewardNoise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundObservation {
    pub context: Vec<f64>,
    pub instrument: Vec<f64>,
    /// The confounder; hidden from policies.
    pub confounder: f64,
    /// Noise added to the reward: equal to `confounder` unless the
    /// environment is the unconfounded control.
    pub reward_noise: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        EnvParams {
            n_arms: self.n_arms,
            rho: self.rho,
            noise_scale: self.noise_scale,
            context_dim: self.context_dim,
            action_dim: self.action_dim,
        }
        .validate()?;
        if self.alpha.len() != self.context_dim + self.action_dim {
            return Err(Error::DimensionMismatch {
                expected: self.context_dim + self.action_dim,
                actual: self.alpha.len(),
            });
        }
        if self.action_set.len() != self.n_arms {
            return Err(input(format!(
                "action set has {} rows but n_arms = {}",
                self.action_set.len(),
                self.n_arms
            )));
        }
        if let Some(bad) = self.action_set.iter().find(|a| a.len() != self.action_dim) {
            return Err(Error::DimensionMismatch {
                expected: self.action_dim,
                actual: bad.len(),
            });
        }
        Ok(())
    }

    /// Dimension of `x = (c, a)`.
    pub fn x_dim(&self) -> usize {
        self.context_dim + self.action_dim
    }

    pub fn regressor(&self, context: &[f64], arm: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.x_dim());
        x.extend_from_slice(context);
        x.extend_from_slice(&self.action_set[arm]);
        x
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm < self.n_arms {
            Ok(())
        } else {
            Err(input(format!("arm {arm} out of range for {} arms", self.n_arms)))
        }
    }

    /// Noiseless reward `(alpha^T (c, a) + 1)^3`.
    pub fn structural_value(&self, context: &[f64], arm: usize) -> Result<f64> {
        self.check_arm(arm)?;
        if context.len() != self.context_dim {
            return Err(Error::DimensionMismatch {
                expected: self.context_dim,
                actual: context.len(),
            });
        }
        Ok(self.structural_unchecked(context, arm))
    }

    pub(crate) fn structural_unchecked(&self, context: &[f64], arm: usize) -> f64 {
        let (ac, aa) = self.alpha.split_at(self.context_dim);
        let s: f64 = ac.iter().zip(context).map(|(a, c)| a * c).sum::<f64>()
            + aa.iter().zip(&self.action_set[arm]).map(|(a, v)| a * v).sum::<f64>();
        (s + 1.0).powi(3)
    }

    /// Arm with the largest structural value; ties go to the lowest index.
    pub fn best_arm(&self, context: &[f64]) -> Result<(usize, f64)> {
        let mut best = (0, self.structural_value(context, 0)?);
        for arm in 1..self.n_arms {
            let v = self.structural_unchecked(context, arm);
            if v > best.1 {
                best = (arm, v);
            }
        }
        Ok(best)
    }

    pub fn realized_reward(&self, obs: &RoundObservation, arm: usize) -> Result<f64> {
        Ok(self.structural_value(&obs.context, arm)? + obs.reward_noise)
    }

    /// Same instance, but rewards use noise independent of the context.
    pub fn unconfounded_variant(&self) -> EnvSpec {
        EnvSpec {
            reward_noise: RewardNoise::Independent,
            ..self.clone()
        }
    }

    /// Draws one `(c, z, e)` triple; `reward_rng` is only touched for the
    /// unconfounded variant.
    pub fn draw_round<R: Rng + ?Sized, Q: Rng + ?Sized>(&self, rng: &mut R, reward_rng: &mut Q) -> RoundObservation {
        let normal = Normal::new(0.0, self.noise_scale).expect("noise_scale validated");
        let instrument: Vec<f64> = (0..self.context_dim).map(|_| rng.random::<f64>()).collect();
        let confounder = normal.sample(rng);
        let context = instrument
            .iter()
            .map(|z| self.rho * z + (1.0 - self.rho) * confounder)
            .collect();
        let reward_noise = match self.reward_noise {
            RewardNoise::Confounded => confounder,
            RewardNoise::Independent => normal.sample(reward_rng),
        };
        RoundObservation {
            context,
            instrument,
            confounder,
            reward_noise,
        }
    }
}

/// An environment instance that owns its round streams.
#[derive(Debug, Clone)]
pub struct ConfoundedEnv {
    spec: EnvSpec,
    rounds: ChaCha8Rng,
    reward_noise: ChaCha8Rng,
}

impl ConfoundedEnv {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        spec.validate()?;
        let rounds = stream_rng(spec.seed, Stream::Rounds);
        let reward_noise = stream_rng(spec.seed, Stream::RewardNoise);
        Ok(Self {
            spec,
            rounds,
            reward_noise,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn next_round(&mut self) -> RoundObservation {
        self.spec.draw_round(&mut self.rounds, &mut self.reward_noise)
    }

    pub fn realized_reward(&self, obs: &RoundObservation, arm: usize) -> Result<f64> {
        self.spec.realized_reward(obs, arm)
    }

    /// `n` rows collected with uniformly random arms.
    pub fn collect_uniform(&mut self, n: usize, arm_rng: &mut impl Rng) -> Result<TripleDataset> {
        let mut data = TripleDataset::empty(self.spec.x_dim(), self.spec.context_dim);
        for _ in 0..n {
            let obs = self.next_round();
            let arm = arm_rng.random_range(0..self.spec.n_arms);
            let y = self.realized_reward(&obs, arm)?;
            data.push(&self.spec.regressor(&obs.context, arm), y, &obs.instrument)?;
        }
        Ok(data)
    }
}

/// Root-mean-square error against the structural function under `P_X`,
/// where `x = (c, a)` with a fresh context and a uniformly random arm.
pub fn monte_carlo_l2_error<R: Rng + ?Sized>(
    spec: &EnvSpec,
    predict: impl Fn(&[f64]) -> f64,
    samples: usize,
    rng: &mut R,
) -> f64 {
    // never drawn from: the confounded variant reuses the confounder
    let mut sink = stream_rng(0, Stream::RewardNoise);
    let confounded = EnvSpec {
        reward_noise: RewardNoise::Confounded,
        ..spec.clone()
    };
    let mut total = 0.0;
    for _ in 0..samples {
        let obs = confounded.draw_round(rng, &mut sink);
        let arm = rng.random_range(0..spec.n_arms);
        let x = spec.regressor(&obs.context, arm);
        let err = predict(&x) - spec.structural_unchecked(&obs.context, arm);
        total += err * err;
    }
    (total / samples as f64).sqrt()
}
