//! Evaluation of trained controllers on held-out Hamiltonians, restarts and the
//! ancilla-allocation ablation.

mod ablation;
mod metrics;
mod report;

pub use ablation::{best_per_cell, run_ablation, table_grid, AblationCell, AblationOptions, AblationRow, ABLATION_FILE};
pub use metrics::{bloch_coordinates, fidelity, zz_expectation, FIDELITY_CONVENTION, TRACE_TOL};
pub use report::{
    EvalReport, SampleRecord, StepRecord, StepSummary, TwoStageSummary, BLOCH_FILE, REPORT_FILE, SUMMARY_FILE,
    ZZ_FILE,
};

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::controller::{ControllerNodes, ControllerParams};
use crate::error::{Error, Result};
use crate::hamiltonian::{expectation_dense, sample_hamiltonian, test_family_single_qubit};
use crate::tensor::ComplexMatrix;
use crate::trainer::{
    rollout_exact, rollout_trajectory, sample_initial_state, train, Checkpoint, Instance, RolloutSpec, TestFamily,
    TrainConfig, TrainOptions, CHECKPOINT_FILE, MAX_EXACT_BRANCH_BITS,
};

/// RNG stream for test-set generation; trajectory sampling uses the next one.
const TEST_SET_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;

/// How per-step states are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Average of `trajectories` sampled trajectories per sample.
    Sampled,
    /// Sum over the full branch tree.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub trajectories: usize,
    pub samples: usize,
    /// Seeds both the test set and the trajectory draws.
    pub seed: u64,
    pub test_family: TestFamily,
    /// Run samples on the calling thread only.
    pub deterministic: bool,
}

impl EvalOptions {
    pub fn from_config(config: &TrainConfig) -> Self {
        Self {
            mode: EvalMode::Sampled,
            trajectories: config.eval_trajectories,
            samples: config.eval_samples,
            seed: config.test_seed,
            test_family: config.test_family,
            deterministic: false,
        }
    }
}

/// Held-out instances drawn from `seed` alone, so every configuration with
/// the same system size sees the same Hamiltonians and initial states.
pub fn test_set(config: &TrainConfig, family: TestFamily, samples: usize, seed: u64) -> Result<Vec<Instance>> {
    if family == TestFamily::Theta && config.n_sys != 1 {
        return Err(Error::Config("the theta test family is single-qubit only".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TEST_SET_STREAM);
    (0..samples)
        .map(|_| {
            let h = match family {
                TestFamily::Theta => test_family_single_qubit(rng.random_range(0.0..std::f64::consts::TAU)),
                TestFamily::Random => sample_hamiltonian(config.n_sys, &mut rng)?,
            };
            Instance::new(sample_initial_state(config, &mut rng), h)
        })
        .collect()
}

/// Per-step system states of one instance, each with unit trace: the branch
/// ensemble in exact mode, the mean over trajectories in sampled mode.
pub fn step_states<R: Rng + ?Sized>(
    params: &ControllerParams,
    config: &TrainConfig,
    instance: &Instance,
    mode: EvalMode,
    trajectories: usize,
    rng: &mut R,
) -> Result<Vec<ComplexMatrix>> {
    let spec = RolloutSpec::from_config(config)?;
    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, params, false);
    match mode {
        EvalMode::Exact => {
            if config.branch_bits() > MAX_EXACT_BRANCH_BITS {
                return Err(Error::Config(format!(
                    "exact evaluation needs 2^{} branches, above the budget of 2^{MAX_EXACT_BRANCH_BITS}",
                    config.branch_bits()
                )));
            }
            let r = rollout_exact(&mut tape, &nodes, instance, &spec)?;
            Ok(r.step_states)
        }
        EvalMode::Sampled => {
            let drive = nodes.drive_hamiltonian(&mut tape, &instance.hamiltonian)?;
            let h = tape.constant(instance.dense.clone());
            let rho0 = tape.constant(instance.rho0.clone());
            let deterministic = config.n_anc_m == 0 || config.steps == 1;
            let k = if deterministic { 1 } else { trajectories.max(1) };
            let dim = instance.rho0.rows();
            let mut sums = vec![ComplexMatrix::zeros(dim, dim); config.steps];
            for _ in 0..k {
                let mark = tape.len();
                let traj = rollout_trajectory(&mut tape, &nodes, drive, h, rho0, &spec, rng)?;
                for (acc, s) in sums.iter_mut().zip(&traj.states) {
                    acc.add_assign(s);
                }
                tape.truncate(mark);
            }
            Ok(sums.into_iter().map(|s| s.scale(1.0 / k as f64)).collect())
        }
    }
}

/// Metrics of one state against one instance.
pub fn step_record(step: usize, rho: &ComplexMatrix, instance: &Instance) -> Result<StepRecord> {
    let n = rho.rows().trailing_zeros() as usize;
    Ok(StepRecord {
        step,
        energy: expectation_dense(rho, &instance.dense)?,
        fidelity: fidelity(rho, &instance.ground)?,
        bloch: if n == 1 { Some(bloch_coordinates(rho)?) } else { None },
        zz: if n == 2 { Some(zz_expectation(rho)?) } else { None },
    })
}

/// Evaluates a controller on the test set described by `options`.
pub fn evaluate(params: &ControllerParams, config: &TrainConfig, options: &EvalOptions) -> Result<EvalReport> {
    config.validate()?;
    let widths = config.widths()?;
    if params.widths() != widths {
        return Err(Error::Config(format!(
            "controller widths {:?} do not match the configuration {:?}",
            params.widths(),
            widths
        )));
    }
    if options.samples == 0 || options.trajectories == 0 {
        return Err(Error::Config("evaluation needs at least one sample and one trajectory".into()));
    }
    let instances = test_set(config, options.test_family, options.samples, options.seed)?;
    let mut seeder = ChaCha8Rng::seed_from_u64(options.seed);
    seeder.set_stream(EVAL_STREAM);
    let jobs: Vec<(usize, &Instance, u64)> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (i, inst, seeder.random::<u64>()))
        .collect();
    let run = |&(id, inst, seed): &(usize, &Instance, u64)| -> Result<SampleRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = step_states(params, config, inst, options.mode, options.trajectories, &mut rng)?;
        let steps = std::iter::once(&inst.rho0)
            .chain(&states)
            .enumerate()
            .map(|(t, rho)| step_record(t, rho, inst))
            .collect::<Result<Vec<_>>>()?;
        let last = steps.last().expect("at least one step");
        Ok(SampleRecord {
            sample_id: id,
            e_min: inst.ground.energy,
            e_final: last.energy,
            fidelity: last.fidelity,
            hamiltonian: inst.hamiltonian.coefficient_vector(),
            steps,
        })
    };
    let samples: Vec<SampleRecord> = if options.deterministic {
        jobs.iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    };
    let report = EvalReport::new(config.clone(), options, samples);
    report.validate()?;
    Ok(report)
}

/// Evaluates a checkpoint with its own embedded configuration.
pub fn evaluate_checkpoint(checkpoint: &Checkpoint, options: &EvalOptions) -> Result<EvalReport> {
    let params = ControllerParams::from_flat(checkpoint.config.widths()?, &checkpoint.params)?;
    evaluate(&params, &checkpoint.config, options)
}

/// One training run of a restart series.
#[derive(Clone, Debug)]
pub struct RestartRun {
    pub restart: usize,
    pub seed: u64,
    pub checkpoint: Checkpoint,
    pub report: EvalReport,
}

/// Outcome of [`train_with_restarts`].
#[derive(Clone, Debug)]
pub struct Restarts {
    pub runs: Vec<RestartRun>,
    /// Index into `runs` of the highest held-out mean fidelity.
    pub best: usize,
}

impl Restarts {
    pub fn best_run(&self) -> &RestartRun {
        &self.runs[self.best]
    }
}

/// Settings for [`train_with_restarts`].
#[derive(Clone, Debug, Default)]
pub struct RestartOptions {
    pub restarts: usize,
    /// Per-restart subdirectories `restart_<r>` go here; the best checkpoint
    /// and report are copied to the top level.
    pub out_dir: Option<PathBuf>,
    pub deterministic: bool,
    /// Stop once a run reaches this mean fidelity and this mean energy gap.
    pub stop_at: Option<(f64, f64)>,
}

/// Trains seeds `config.seed + r` for `r < restarts` and keeps the run with
/// the best held-out mean fidelity.
pub fn train_with_restarts(config: &TrainConfig, eval: &EvalOptions, options: &RestartOptions) -> Result<Restarts> {
    if options.restarts == 0 {
        return Err(Error::Config("restarts must be positive".into()));
    }
    let mut runs: Vec<RestartRun> = Vec::with_capacity(options.restarts);
    for r in 0..options.restarts {
        let seed = config.seed.wrapping_add(r as u64);
        let run_config = TrainConfig { seed, ..config.clone() };
        let dir = options.out_dir.as_ref().map(|d| d.join(format!("restart_{r}")));
        let checkpoint = train(
            &run_config,
            TrainOptions {
                out_dir: dir.clone(),
                deterministic: options.deterministic,
                ..Default::default()
            },
        )?;
        let report = evaluate_checkpoint(&checkpoint, eval)?;
        if let Some(d) = &dir {
            report.write_all(d)?;
        }
        let done = options
            .stop_at
            .is_some_and(|(f, gap)| report.mean_fidelity >= f && report.mean_gap <= gap);
        runs.push(RestartRun {
            restart: r,
            seed,
            checkpoint,
            report,
        });
        if done {
            break;
        }
    }
    let best = best_index(runs.iter().map(|r| r.report.mean_fidelity));
    if let Some(dir) = &options.out_dir {
        let run = &runs[best];
        run.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
        run.report.write_all(dir)?;
        write_restart_table(dir, &runs, best)?;
    }
    Ok(Restarts { runs, best })
}

/// First index of the maximum; NaN never wins.
fn best_index(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub const RESTARTS_FILE: &str = "restarts.csv";

fn write_restart_table(dir: &Path, runs: &[RestartRun], best: usize) -> Result<()> {
    let path = dir.join(RESTARTS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::format(&path, e.to_string()))?;
    w.write_record(["restart", "seed", "mean_fidelity", "mean_gap", "selected_flag"])
        .map_err(|e| Error::format(&path, e.to_string()))?;
    for (i, r) in runs.iter().enumerate() {
        w.write_record([
            r.restart.to_string(),
            r.seed.to_string(),
            r.report.mean_fidelity.to_string(),
            r.report.mean_gap.to_string(),
            u8::from(i == best).to_string(),
        ])
        .map_err(|e| Error::format(&path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests;
