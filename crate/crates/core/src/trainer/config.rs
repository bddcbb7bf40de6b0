use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerWidths, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::quantum::StepLayout;

/// Exact mode is rejected beyond `2^20` final branches.
pub const MAX_EXACT_BRANCH_BITS: usize = 20;

/// `auto` mode enumerates branches up to `2^10` leaves and samples beyond.
pub const AUTO_EXACT_BRANCH_BITS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Sampled,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Pure,
    Mixed,
}

/// Where test Hamiltonians come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFamily {
    /// `cos θ σx + (sin θ/√2)(σy + σz)`, θ ~ Uniform[0, 2π). Single qubit only.
    Theta,
    /// All Pauli strings with Uniform[−1, 1] coefficients.
    Random,
}

/// Experiment and optimizer settings, read from a flat TOML table. Every key
/// is optional; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_sys: usize,
    pub n_anc_m: usize,
    pub n_anc_t: usize,
    /// Protocol steps `T`; the last one is not measured.
    pub steps: usize,
    pub depth: usize,
    pub initial_state: InitialState,
    pub mixture_components: usize,
    pub mode: Mode,
    pub hidden: usize,
    pub batch_size: usize,
    /// Trajectories per instance in sampled mode.
    pub trajectories: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub prune_threshold: f64,
    pub checkpoint_every: usize,
    pub test_family: TestFamily,
    pub test_seed: u64,
    pub eval_samples: usize,
    /// Trajectories per test sample during evaluation.
    pub eval_trajectories: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_sys: 1,
            n_anc_m: 2,
            n_anc_t: 2,
            steps: 5,
            depth: 2,
            initial_state: InitialState::Mixed,
            mixture_components: 4,
            mode: Mode::Auto,
            hidden: DEFAULT_HIDDEN,
            batch_size: 16,
            trajectories: 32,
            epochs: 3000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            prune_threshold: 1e-12,
            checkpoint_every: 100,
            test_family: TestFamily::Theta,
            test_seed: 12345,
            eval_samples: 100,
            eval_trajectories: 64,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| config_err(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Canonical text used in checkpoints and reports.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=crate::hamiltonian::MAX_QUBITS).contains(&self.n_sys) {
            return Err(config_err(format!(
                "n_sys = {} is outside 1..={}",
                self.n_sys,
                crate::hamiltonian::MAX_QUBITS
            )));
        }
        self.layout()?;
        for (name, v) in [
            ("steps", self.steps),
            ("depth", self.depth),
            ("mixture_components", self.mixture_components),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("trajectories", self.trajectories),
            ("checkpoint_every", self.checkpoint_every),
            ("eval_samples", self.eval_samples),
            ("eval_trajectories", self.eval_trajectories),
        ] {
            if v == 0 {
                return Err(config_err(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err("learning_rate must be positive and finite"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(config_err(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(config_err("epsilon must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(config_err("prune_threshold must lie in [0, 1)"));
        }
        if self.test_family == TestFamily::Theta && self.n_sys != 1 {
            return Err(config_err("test_family = \"theta\" requires n_sys = 1"));
        }
        if self.mode == Mode::Exact && self.branch_bits() > MAX_EXACT_BRANCH_BITS {
            return Err(config_err(format!(
                "exact mode needs 2^{} branches, above the budget of 2^{MAX_EXACT_BRANCH_BITS}",
                self.branch_bits()
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<StepLayout> {
        StepLayout::new(self.n_sys, self.n_anc_m, self.n_anc_t, self.depth).map_err(|e| config_err(e.to_string()))
    }

    pub fn widths(&self) -> Result<ControllerWidths> {
        let layout = self.layout()?;
        Ok(ControllerWidths::new(
            self.n_sys,
            self.n_anc_m,
            self.hidden,
            layout.parameter_count(),
        ))
    }

    /// `N_anc_m · (T − 1)`, the log₂ of the number of final branches.
    pub fn branch_bits(&self) -> usize {
        self.n_anc_m * self.steps.saturating_sub(1)
    }

    /// `Exact` or `Sampled`, resolving `Auto` by the branch count.
    pub fn resolved_mode(&self) -> Mode {
        match self.mode {
            Mode::Auto if self.branch_bits() <= AUTO_EXACT_BRANCH_BITS => Mode::Exact,
            Mode::Auto => Mode::Sampled,
            m => m,
        }
    }
}
