//! The epoch state machine.

use log::info;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dualiv::{fit, naive_krr_fit, DualIVModel, SolveRoute, TripleDataset};
use crate::error::{input, Error, Result};
use crate::seeding::{stream_rng, Stream};

use super::igw::{igw_probabilities, sample_index};
use super::schedule::{gamma_schedule, lambda_schedule, EpochSchedule};
use super::{Policy, PolicyConfig};

/// Which regression is refit at each epoch boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    DualIv,
    /// Kernel ridge regression of `y` on `x`; the instrument is never read.
    NaiveKrr,
}

/// One line per fit, also emitted through `log`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    /// First round of the epoch.
    pub start_round: u64,
    /// Rows the model was fit on.
    pub n: usize,
    pub data_checksum: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub inner_residual: f64,
    pub outer_residual: f64,
    pub rank: usize,
    pub route: SolveRoute,
}

#[derive(Debug, Clone)]
pub struct DivEls {
    config: PolicyConfig,
    estimator: Estimator,
    action_set: Vec<Vec<f64>>,
    context_dim: usize,
    /// `tau_1, tau_2, ...`
    boundaries: Vec<u64>,
    /// Current epoch `m`, 1-based.
    epoch: usize,
    /// `None` is the zero function of epoch 1.
    model: Option<DualIVModel>,
    gamma: f64,
    buffer: TripleDataset,
    log: Vec<EpochDiagnostics>,
    rng: ChaCha8Rng,
    scratch_x: Vec<f64>,
}

impl DivEls {
    pub fn new(
        config: PolicyConfig,
        estimator: Estimator,
        schedule: EpochSchedule,
        action_set: Vec<Vec<f64>>,
        context_dim: usize,
        horizon: u64,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if action_set.is_empty() {
            return Err(input("need at least one arm"));
        }
        if horizon == 0 {
            return Err(input("horizon must be positive"));
        }
        let action_dim = action_set[0].len();
        if let Some(bad) = action_set.iter().find(|a| a.len() != action_dim) {
            return Err(Error::DimensionMismatch {
                expected: action_dim,
                actual: bad.len(),
            });
        }
        let x_dim = context_dim + action_dim;
        Ok(Self {
            config,
            estimator,
            action_set,
            context_dim,
            boundaries: schedule.boundaries(horizon),
            epoch: 1,
            model: None,
            gamma: 1.0,
            buffer: TripleDataset::empty(x_dim, context_dim),
            log: Vec::new(),
            rng: stream_rng(seed, Stream::Policy),
            scratch_x: Vec::with_capacity(x_dim),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn model(&self) -> Option<&DualIVModel> {
        self.model.as_ref()
    }

    /// Rows observed so far in the current epoch.
    pub fn buffer(&self) -> &TripleDataset {
        &self.buffer
    }

    pub fn fit_count(&self) -> usize {
        self.log.len()
    }

    /// `f_hat(c, a)` for every arm; all zeros before the first fit.
    pub fn arm_values(&mut self, context: &[f64]) -> Result<Vec<f64>> {
        if context.len() != self.context_dim {
            return Err(Error::DimensionMismatch {
                expected: self.context_dim,
                actual: context.len(),
            });
        }
        let Some(model) = &self.model else {
            return Ok(vec![0.0; self.action_set.len()]);
        };
        let mut values = Vec::with_capacity(self.action_set.len());
        for a in &self.action_set {
            self.scratch_x.clear();
            self.scratch_x.extend_from_slice(context);
            self.scratch_x.extend_from_slice(a);
            values.push(model.predict_unchecked(&self.scratch_x));
        }
        Ok(values)
    }

    /// The IGW distribution the next `act` would sample from.
    pub fn probabilities(&mut self, context: &[f64]) -> Result<Vec<f64>> {
        let values = self.arm_values(context)?;
        igw_probabilities(&values, self.gamma)
    }

    /// Advances through every boundary `t` has passed, fitting once per
    /// epoch entered.
    pub fn maybe_advance_epoch(&mut self, t: u64) -> Result<()> {
        if t == 0 {
            return Err(input("rounds are numbered from 1"));
        }
        while t > self.boundaries[self.epoch - 1] {
            if self.epoch == self.boundaries.len() {
                return Err(input(format!("round {t} is past the horizon")));
            }
            let next = self.epoch + 1;
            self.start_epoch(next, t).map_err(|e| Error::Epoch {
                epoch: next,
                source: Box::new(e),
            })?;
        }
        Ok(())
    }

    fn start_epoch(&mut self, m: usize, t: u64) -> Result<()> {
        let n = self.buffer.len();
        let (lambda1, lambda2) = lambda_schedule(&self.config, n)?;
        let prev_end = self.boundaries[m - 2];
        let prev_start = if m >= 3 { self.boundaries[m - 3] } else { 0 };
        let epoch_len = (prev_end - prev_start) as usize;
        let gamma = gamma_schedule(&self.config, self.action_set.len(), m, epoch_len)?;
        let model = match self.estimator {
            Estimator::DualIv => fit(&self.buffer, &self.config.k_spec, &self.config.l_spec, lambda1, lambda2)?,
            Estimator::NaiveKrr => naive_krr_fit(&self.buffer, &self.config.k_spec, lambda2)?,
        };
        let d = model.diagnostics();
        let entry = EpochDiagnostics {
            epoch: m,
            start_round: t,
            n,
            data_checksum: self.buffer.checksum(),
            lambda1: model.lambda1(),
            lambda2,
            gamma,
            inner_residual: d.inner_residual,
            outer_residual: d.outer_residual,
            rank: d.rank,
            route: d.route,
        };
        info!(
            "epoch={} t={} n={} lambda1={:.6e} lambda2={:.6e} gamma={:.6e} inner_residual={:.3e} outer_residual={:.3e} rank={} route={:?}",
            entry.epoch,
            entry.start_round,
            entry.n,
            entry.lambda1,
            entry.lambda2,
            entry.gamma,
            entry.inner_residual,
            entry.outer_residual,
            entry.rank,
            entry.route
        );
        self.log.push(entry);
        self.model = Some(model);
        self.gamma = gamma;
        self.epoch = m;
        self.buffer.clear();
        Ok(())
    }
}

impl Policy for DivEls {
    fn begin_round(&mut self, t: u64) -> Result<()> {
        self.maybe_advance_epoch(t)
    }

    fn act(&mut self, context: &[f64]) -> Result<usize> {
        let probs = self.probabilities(context)?;
        Ok(sample_index(&probs, &mut self.rng))
    }

    fn observe(&mut self, context: &[f64], instrument: &[f64], arm: usize, reward: f64) -> Result<()> {
        let action = self
            .action_set
            .get(arm)
            .ok_or_else(|| input(format!("arm {arm} out of range")))?;
        let mut x = Vec::with_capacity(context.len() + action.len());
        x.extend_from_slice(context);
        x.extend_from_slice(action);
        self.buffer.push(&x, reward, instrument)
    }

    fn epoch_log(&self) -> &[EpochDiagnostics] {
        &self.log
    }
}
