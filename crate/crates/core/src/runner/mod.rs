//! Experiment orchestration: the round loop, regret accounting, repeated
//! runs and output files.

mod config;
mod output;

pub use config::{
    KernelFamily, PolicyKind, RunConfig, Settings, DEFAULT_ARMS, DEFAULT_HORIZON, DEFAULT_OUT, DEFAULT_REPEATS,
    DEFAULT_RHO,
};
pub use output::{emit_csv, emit_metadata, metadata_path, read_csv, Metadata, RunRecord};

use rayon::prelude::*;
use serde::Serialize;

use crate::envs::{ConfoundedEnv, EnvSpec};
use crate::error::{Error, Result};
use crate::policy::{naive_krr_policy, uniform_policy, DivEls, EpochDiagnostics, Estimator, Policy};

/// Cumulative pseudo-regret of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RegretTrace {
    pub run_index: usize,
    pub env: EnvSpec,
    /// `cumulative[t - 1] = Reg(t)`
    pub cumulative: Vec<f64>,
    pub epochs: Vec<EpochDiagnostics>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// `Reg(t) / t`
    pub fn average_at(&self, t: usize) -> f64 {
        self.cumulative[t - 1] / t as f64
    }
}

/// Plays `horizon` rounds. Regret accumulates the structural gap between
/// the best arm and the chosen arm; the reward noise never enters it.
pub fn simulate(env: &mut ConfoundedEnv, policy: &mut dyn Policy, horizon: u64) -> Result<Vec<f64>> {
    let mut cumulative = Vec::with_capacity(horizon as usize);
    let mut total = 0.0;
    for t in 1..=horizon {
        policy.begin_round(t)?;
        let obs = env.next_round();
        let arm = policy.act(&obs.context)?;
        let spec = env.spec();
        let (_, best) = spec.best_arm(&obs.context)?;
        let chosen = spec.structural_value(&obs.context, arm)?;
        let reward = chosen + obs.reward_noise;
        policy.observe(&obs.context, &obs.instrument, arm, reward)?;
        total += best - chosen;
        cumulative.push(total);
    }
    Ok(cumulative)
}

pub fn build_policy(config: &RunConfig, env: &EnvSpec) -> Result<Box<dyn Policy>> {
    let seed = env.seed;
    let actions = env.action_set.clone();
    let c = config.policy.clone();
    Ok(match config.kind {
        PolicyKind::Uniform => Box::new(uniform_policy(env.n_arms, seed)?),
        PolicyKind::NaiveKrr => Box::new(naive_krr_policy(c, config.schedule, actions, env.context_dim, config.horizon, seed)?),
        PolicyKind::DivEls | PolicyKind::DivElsInfinite => Box::new(DivEls::new(
            c,
            Estimator::DualIv,
            config.schedule,
            actions,
            env.context_dim,
            config.horizon,
            seed,
        )?),
    })
}

/// One run seeded with `base_seed + run_index`; the instance is resampled
/// from that seed.
pub fn run_once(config: &RunConfig, run_index: usize) -> Result<RegretTrace> {
    config.validate()?;
    let env_spec = config.env.sample(config.run_seed(run_index))?;
    let mut policy = build_policy(config, &env_spec)?;
    let mut env = ConfoundedEnv::new(env_spec.clone())?;
    let cumulative = simulate(&mut env, policy.as_mut(), config.horizon)?;
    Ok(RegretTrace {
        run_index,
        env: env_spec,
        cumulative,
        epochs: policy.epoch_log().to_vec(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub mean: Vec<f64>,
    /// Standard error of the mean; zero for a single run.
    pub stderr: Vec<f64>,
    pub runs: Vec<RegretTrace>,
}

impl ExperimentResult {
    pub fn mean_final(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    /// Mean `Reg(t) / t`.
    pub fn mean_average_at(&self, t: usize) -> f64 {
        self.mean[t - 1] / t as f64
    }
}

/// Elementwise mean and standard error, summed in run order.
pub fn aggregate(traces: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let r = traces.len();
    let len = traces.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    if r == 0 {
        return (mean, stderr);
    }
    for t in 0..len {
        let m = traces.iter().map(|tr| tr[t]).sum::<f64>() / r as f64;
        mean[t] = m;
        if r > 1 {
            let var = traces.iter().map(|tr| (tr[t] - m).powi(2)).sum::<f64>() / (r - 1) as f64;
            stderr[t] = (var / r as f64).sqrt();
        }
    }
    (mean, stderr)
}

/// Runs every repeat on a pool of `config.workers` threads. Results are
/// joined in run order, so they do not depend on the pool size.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<RegretTrace>> =
        pool.install(|| (0..config.repeats).into_par_iter().map(|i| run_once(config, i)).collect());
    let mut runs = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    let mut first = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(trace) => runs.push(trace),
            Err(e) => {
                failed.push(i);
                first.get_or_insert(e);
            }
        }
    }
    if let Some(first) = first {
        return Err(Error::Experiment {
            indices: failed,
            first: Box::new(first),
        });
    }
    let traces: Vec<Vec<f64>> = runs.iter().map(|r| r.cumulative.clone()).collect();
    let (mean, stderr) = aggregate(&traces);
    Ok(ExperimentResult { mean, stderr, runs })
}
