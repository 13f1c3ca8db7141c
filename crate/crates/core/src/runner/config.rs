//! Run configuration: a flat, partially specified [`Settings`] layer (file or
//! flags) resolved into a validated [`RunConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{default_noise_scale, EnvParams};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::policy::{effective_dim, EpochSchedule, PolicyConfig, RankVariant};

pub const DEFAULT_HORIZON: u64 = 1024;
pub const DEFAULT_REPEATS: usize = 20;
pub const DEFAULT_ARMS: usize = 4;
pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_OUT: &str = "regret.csv";
const CONTEXT_DIM: usize = 2;
const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    #[default]
    DivEls,
    DivElsInfinite,
    NaiveKrr,
    Uniform,
}

impl PolicyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "div-els" => Ok(Self::DivEls),
            "div-els-infinite" => Ok(Self::DivElsInfinite),
            "naive-krr" => Ok(Self::NaiveKrr),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Polynomial,
    Rbf,
}

/// Every knob of an experiment, each optional. Field names match the
/// command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub n_arms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelFamily>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<EpochSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_tilde: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    /// Reads a TOML settings file, or the `settings` table of a metadata
    /// JSON file written by a previous run.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Wrapper {
                settings: Settings,
            }
            let w: Wrapper = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Ok(w.settings)
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    /// Fields set in `top` win.
    pub fn overlay(self, top: Settings) -> Settings {
        let base = self;
        overlay_fields!(
            base, top, horizon, n_arms, rho, noise_scale, eta, eta1, eta2, delta, kernel, degree, offset, bandwidth,
            schedule, policy, nu, d_tilde, repeats, seed, out, workers
        )
    }

    /// Fills defaults and checks flag combinations. Every failure is a
    /// [`Error::Config`].
    pub fn resolve(&self) -> Result<RunConfig> {
        self.resolve_inner().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    fn resolve_inner(&self) -> Result<RunConfig> {
        let usage = |m: &str| Err(Error::Config(m.to_string()));
        let horizon = self.horizon.unwrap_or(DEFAULT_HORIZON);
        if horizon < 2 {
            return usage("T must be at least 2");
        }
        let repeats = self.repeats.unwrap_or(DEFAULT_REPEATS);
        if repeats == 0 {
            return usage("repeats must be at least 1");
        }
        let workers = self.workers.unwrap_or_else(default_workers);
        if workers == 0 {
            return usage("workers must be at least 1");
        }
        let kind = self.policy.unwrap_or_default();
        let infinite = kind == PolicyKind::DivElsInfinite;
        if self.nu.is_some() && !infinite {
            return usage("--nu only applies to the div-els-infinite policy");
        }
        if self.d_tilde.is_some() && infinite {
            return usage("--d-tilde does not apply to the div-els-infinite policy");
        }

        let env = EnvParams {
            n_arms: self.n_arms.unwrap_or(DEFAULT_ARMS),
            rho: self.rho.unwrap_or(DEFAULT_RHO),
            noise_scale: self.noise_scale.unwrap_or_else(default_noise_scale),
            context_dim: CONTEXT_DIM,
            action_dim: ACTION_DIM,
        };
        env.validate()?;

        let family = self.kernel.unwrap_or(if infinite { KernelFamily::Rbf } else { KernelFamily::Polynomial });
        if self.degree.is_some() && family != KernelFamily::Polynomial {
            return usage("--degree only applies to the polynomial kernel");
        }
        if self.offset.is_some() && family != KernelFamily::Polynomial {
            return usage("--offset only applies to the polynomial kernel");
        }
        if self.bandwidth.is_some() && family != KernelFamily::Rbf {
            return usage("--bandwidth only applies to the rbf kernel");
        }
        let spec = match family {
            KernelFamily::Linear => KernelSpec::Linear,
            KernelFamily::Polynomial => KernelSpec::polynomial(self.degree.unwrap_or(3), self.offset.unwrap_or(1.0))?,
            KernelFamily::Rbf => KernelSpec::rbf(self.bandwidth.unwrap_or(1.0))?,
        };

        let d_x = CONTEXT_DIM + ACTION_DIM;
        let d_yz = 1 + CONTEXT_DIM;
        let (d_tilde, variant) = if infinite {
            let nu = self.nu.unwrap_or(d_x as f64);
            (1, RankVariant::InfiniteRank { nu, d: d_x })
        } else {
            let d = match (self.d_tilde, effective_dim(&spec, &spec, d_x, d_yz)) {
                (Some(d), _) => d,
                (None, Ok(d)) => d,
                (None, Err(_)) if kind == PolicyKind::Uniform => 1,
                (None, Err(_)) => return usage("an infinite-rank kernel needs --d-tilde or the div-els-infinite policy"),
            };
            (d, RankVariant::FiniteRank)
        };
        let policy = PolicyConfig {
            eta: self.eta.unwrap_or(200.0 * env.rho * env.rho),
            eta1: self.eta1.unwrap_or(1.0),
            eta2: self.eta2.unwrap_or(1.0),
            delta: self.delta.unwrap_or(0.1),
            k_spec: spec,
            l_spec: spec,
            d_tilde,
            variant,
        };
        if kind != PolicyKind::Uniform {
            policy.validate()?;
        }
        Ok(RunConfig {
            horizon,
            repeats,
            base_seed: self.seed.unwrap_or(0),
            env,
            kind,
            policy,
            schedule: self.schedule.unwrap_or_default(),
            workers,
            output_path: self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        })
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: u64,
    pub repeats: usize,
    pub base_seed: u64,
    pub env: EnvParams,
    pub kind: PolicyKind,
    pub policy: PolicyConfig,
    pub schedule: EpochSchedule,
    /// Size of the run pool; has no effect on results.
    pub workers: usize,
    pub output_path: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::Config("T must be at least 2".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.env.validate()?;
        if self.kind != PolicyKind::Uniform {
            self.policy.validate()?;
        }
        Ok(())
    }

    /// Seed of run `run_index`.
    pub fn run_seed(&self, run_index: usize) -> u64 {
        self.base_seed.wrapping_add(run_index as u64)
    }

    /// The flat settings that resolve back to this config.
    pub fn to_settings(&self) -> Settings {
        let infinite = self.kind == PolicyKind::DivElsInfinite;
        let mut s = Settings {
            horizon: Some(self.horizon),
            n_arms: Some(self.env.n_arms),
            rho: Some(self.env.rho),
            noise_scale: Some(self.env.noise_scale),
            eta: Some(self.policy.eta),
            eta1: Some(self.policy.eta1),
            eta2: Some(self.policy.eta2),
            delta: Some(self.policy.delta),
            schedule: Some(self.schedule),
            policy: Some(self.kind),
            d_tilde: (!infinite).then_some(self.policy.d_tilde),
            repeats: Some(self.repeats),
            seed: Some(self.base_seed),
            out: Some(self.output_path.clone()),
            workers: Some(self.workers),
            ..Settings::default()
        };
        match self.policy.k_spec {
            KernelSpec::Linear => s.kernel = Some(KernelFamily::Linear),
            KernelSpec::Polynomial { degree, offset } => {
                s.kernel = Some(KernelFamily::Polynomial);
                s.degree = Some(degree);
                s.offset = Some(offset);
            }
            KernelSpec::Rbf { bandwidth } => {
                s.kernel = Some(KernelFamily::Rbf);
                s.bandwidth = Some(bandwidth);
            }
        }
        if let RankVariant::InfiniteRank { nu, .. } = self.policy.variant {
            s.nu = Some(nu);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Settings {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn defaults() {
        let c = Settings::default().resolve().unwrap();
        assert_eq!(c.horizon, 1024);
        assert_eq!(c.repeats, 20);
        assert_eq!(c.env.n_arms, 4);
        assert_eq!(c.policy.d_tilde, 35);
        assert_eq!(c.policy.k_spec, KernelSpec::polynomial(3, 1.0).unwrap());
        assert_eq!(c.policy.delta, 0.1);
        assert_eq!(c.schedule, EpochSchedule::Doubling);
        assert_eq!(c.kind, PolicyKind::DivEls);
    }

    #[test]
    fn eta_follows_rho() {
        let c = settings("rho = 0.95").resolve().unwrap();
        assert!((c.policy.eta - 180.5).abs() < 1e-12);
        let c = settings("rho = 0.5\neta = 3.0").resolve().unwrap();
        assert_eq!(c.policy.eta, 3.0);
    }

    #[test]
    fn overlay_prefers_top() {
        let file = settings("T = 512\nrho = 0.25\nrepeats = 3");
        let flags = Settings {
            horizon: Some(2048),
            ..Settings::default()
        };
        let c = file.overlay(flags).resolve().unwrap();
        assert_eq!(c.horizon, 2048);
        assert_eq!(c.env.rho, 0.25);
        assert_eq!(c.repeats, 3);
    }

    #[test]
    fn usage_errors() {
        for bad in [
            "nu = 3.0",
            "policy = \"div-els-infinite\"\nd_tilde = 5",
            "kernel = \"rbf\"",
            "kernel = \"rbf\"\ndegree = 2",
            "bandwidth = 2.0",
            "T = 1",
            "repeats = 0",
            "workers = 0",
            "rho = 1.5",
            "rho = 0.0",
            "policy = \"div-els-infinite\"\nnu = 1.0",
        ] {
            assert!(matches!(settings(bad).resolve(), Err(Error::Config(_))), "{bad}");
        }
        assert!(toml::from_str::<Settings>("bogus = 1").is_err());
    }

    #[test]
    fn infinite_defaults() {
        let c = settings("policy = \"div-els-infinite\"").resolve().unwrap();
        assert_eq!(c.policy.k_spec, KernelSpec::rbf(1.0).unwrap());
        assert_eq!(c.policy.variant, RankVariant::InfiniteRank { nu: 4.0, d: 4 });
        let c = settings("kernel = \"rbf\"\nd_tilde = 50").resolve().unwrap();
        assert_eq!(c.policy.d_tilde, 50);
        assert!(settings("kernel = \"rbf\"\npolicy = \"uniform\"").resolve().is_ok());
    }

    #[test]
    fn settings_round_trip() {
        for text in [
            "",
            "policy = \"div-els-infinite\"\nnu = 3.0\nbandwidth = 0.5",
            "kernel = \"linear\"\nschedule = \"horizon\"\nK = 10",
            "policy = \"naive-krr\"\ndegree = 2\noffset = 0.5",
        ] {
            let c = settings(text).resolve().unwrap();
            let s = c.to_settings();
            assert_eq!(s.resolve().unwrap(), c);
            let back: Settings = toml::from_str(&toml::to_string(&s).unwrap()).unwrap();
            assert_eq!(back, s);
        }
    }
}
