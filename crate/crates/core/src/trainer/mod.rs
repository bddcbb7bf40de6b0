//! End-to-end training: batched rollouts, gradient averaging and Adam.

mod adam;
mod checkpoint;
mod config;
mod rollout;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, RngState, MAGIC, VERSION};
pub use config::{InitialState, Mode, TestFamily, TrainConfig, AUTO_EXACT_BRANCH_BITS, MAX_EXACT_BRANCH_BITS};
pub use rollout::{
    instance_gradient, rollout_exact, rollout_sampled, rollout_trajectory, sample_initial_state, ExactRollout,
    Instance, InstanceGradient, RolloutSpec, SampledRollout, Trajectory,
};

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::controller::ControllerParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.csv";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.json";

/// Stream of the training RNG; parameter initialization uses the seed
/// directly, so the two never overlap.
const TRAIN_STREAM: u64 = 1;

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub mean_loss: f64,
    pub mean_gap_to_emin: f64,
    pub wall_ms: f64,
}

/// Run-time options that do not change results.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Metrics, periodic checkpoints and diagnostics go here when set.
    pub out_dir: Option<PathBuf>,
    /// Continue from this checkpoint instead of initializing.
    pub resume: Option<Checkpoint>,
    /// Roll out batch instances on the calling thread only.
    pub deterministic: bool,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochMetrics)>,
}

/// Initial checkpoint for a config: seeded parameters, fresh moments.
pub fn initial_checkpoint(config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    let widths = config.widths()?;
    let params = ControllerParams::init(widths, config.seed)?.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(TRAIN_STREAM);
    Ok(Checkpoint {
        config: config.clone(),
        epoch: 0,
        adam: AdamState::new(params.len()),
        params,
        rng: RngState::capture(&rng),
        loss_history: Vec::new(),
    })
}

fn same_run(a: &TrainConfig, b: &TrainConfig) -> bool {
    let mut a = a.clone();
    a.epochs = b.epochs;
    a.checkpoint_every = b.checkpoint_every;
    a == *b
}

struct MetricsWriter {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl MetricsWriter {
    fn open(dir: &Path, append: bool) -> Result<Self> {
        let path = dir.join(METRICS_FILE);
        let fresh = !append || !path.exists();
        let file = OpenOptions::new()
            .create(true)
            .append(!fresh)
            .write(true)
            .truncate(fresh)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { path, writer })
    }

    fn write(&mut self, row: &EpochMetrics) -> Result<()> {
        self.writer
            .serialize(row)
            .map_err(|e| Error::format(&self.path, e.to_string()))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Trains the controller for `config.epochs` epochs (counting epochs already
/// in a resumed checkpoint) and returns the final checkpoint.
///
/// Each epoch draws `batch_size` fresh (Hamiltonian, initial state) pairs and
/// one rollout seed per pair from the training RNG, so results do not depend
/// on thread scheduling; gradients are averaged in batch order.
pub fn train(config: &TrainConfig, mut options: TrainOptions<'_>) -> Result<Checkpoint> {
    config.validate()?;
    let mut ckpt = match options.resume.take() {
        Some(c) => {
            if !same_run(&c.config, config) {
                return Err(Error::Config("checkpoint was written for a different configuration".into()));
            }
            Checkpoint {
                config: config.clone(),
                ..c
            }
        }
        None => initial_checkpoint(config)?,
    };
    let resumed = ckpt.epoch > 0;
    let widths = config.widths()?;
    let spec = RolloutSpec::from_config(config)?;
    let mode = config.resolved_mode();
    let hyper = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.beta1,
        beta2: config.beta2,
        epsilon: config.epsilon,
    };
    let mut rng = ckpt.rng.restore();
    let mut metrics = match &options.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(MetricsWriter::open(dir, resumed)?)
        }
        None => None,
    };

    while (ckpt.epoch as usize) < config.epochs {
        let started = Instant::now();
        let params = ControllerParams::from_flat(widths, &ckpt.params)?;
        let jobs: Vec<(Instance, u64)> = (0..config.batch_size)
            .map(|_| Ok((Instance::sample(config, &mut rng)?, rng.random::<u64>())))
            .collect::<Result<_>>()?;
        let run = |(inst, seed): &(Instance, u64)| {
            let mut r = ChaCha8Rng::seed_from_u64(*seed);
            instance_gradient(&params, inst, &spec, mode, config.trajectories, &mut r)
        };
        let results: Vec<InstanceGradient> = if options.deterministic {
            jobs.iter().map(run).collect::<Result<_>>()?
        } else {
            jobs.par_iter().map(run).collect::<Result<_>>()?
        };

        let n = results.len() as f64;
        let mut grad = vec![0.0; ckpt.params.len()];
        let mut loss = 0.0;
        let mut gap = 0.0;
        for (r, (inst, _)) in results.iter().zip(&jobs) {
            loss += r.loss;
            gap += r.loss - inst.ground.energy;
            for (g, x) in grad.iter_mut().zip(&r.gradient) {
                *g += x;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        let (loss, gap) = (loss / n, gap / n);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let detail = dump_diagnostic(options.out_dir.as_deref(), ckpt.epoch, &jobs, &results, &ckpt.params);
            return Err(Error::Numerical(format!(
                "non-finite loss or gradient at epoch {} (mean loss {loss}); {detail}",
                ckpt.epoch
            )));
        }
        ckpt.adam.update(&hyper, &mut ckpt.params, &grad);
        ckpt.epoch += 1;
        ckpt.loss_history.push(loss);
        ckpt.rng = RngState::capture(&rng);

        let row = EpochMetrics {
            epoch: ckpt.epoch,
            mean_loss: loss,
            mean_gap_to_emin: gap,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        if let Some(m) = metrics.as_mut() {
            m.write(&row)?;
        }
        if let Some(cb) = options.on_epoch.as_mut() {
            cb(&row);
        }
        if let Some(dir) = &options.out_dir {
            if ckpt.epoch as usize % config.checkpoint_every == 0 {
                ckpt.save(&dir.join(CHECKPOINT_FILE))?;
            }
        }
    }
    if let Some(dir) = &options.out_dir {
        ckpt.save(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(ckpt)
}

fn dump_diagnostic(
    dir: Option<&Path>,
    epoch: u64,
    jobs: &[(Instance, u64)],
    results: &[InstanceGradient],
    params: &[f64],
) -> String {
    let instances: Vec<serde_json::Value> = jobs
        .iter()
        .zip(results)
        .map(|((inst, seed), r)| {
            serde_json::json!({
                "hamiltonian": inst.hamiltonian.coefficient_vector(),
                "e_min": inst.ground.energy,
                "rollout_seed": seed,
                "loss": r.loss,
                "gradient_finite": r.gradient.iter().all(|g| g.is_finite()),
                "gradient_max_abs": r.gradient.iter().fold(0.0f64, |a, g| a.max(g.abs())),
            })
        })
        .collect();
    let report = serde_json::json!({
        "epoch": epoch,
        "params_finite": params.iter().all(|p| p.is_finite()),
        "params_max_abs": params.iter().fold(0.0f64, |a, p| a.max(p.abs())),
        "instances": instances,
    });
    match dir {
        Some(d) => {
            let path = d.join(DIAGNOSTIC_FILE);
            match std::fs::File::create(&path).and_then(|mut f| f.write_all(report.to_string().as_bytes())) {
                Ok(()) => format!("diagnostics written to {}", path.display()),
                Err(e) => format!("could not write diagnostics: {e}"),
            }
        }
        None => format!("diagnostics: {report}"),
    }
}
