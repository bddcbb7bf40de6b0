use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qfeedback::error::exit;
use qfeedback::eval::{
    best_per_cell, evaluate_checkpoint, run_ablation, step_record, step_states, table_grid, train_with_restarts,
    AblationOptions, EvalMode, EvalOptions, RestartOptions, StepRecord, ABLATION_FILE,
};
use qfeedback::hamiltonian::PauliHamiltonian;
use qfeedback::tensor::ComplexMatrix;
use qfeedback::trainer::{
    sample_initial_state, train, Checkpoint, Instance, TestFamily, TrainConfig, TrainOptions, CHECKPOINT_FILE,
};
use qfeedback::Error;

#[derive(Parser)]
#[command(name = "qfeedback", version, about = "Ground-state preparation with measurement and feedback")]
struct Cli {
    /// TOML configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Training seed for `train` and `ablation`, test-set seed for `eval` and `rollout`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a controller, optionally keeping the best of several restarts.
    Train {
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        /// Continue from a checkpoint; its configuration is used unless --config is given.
        #[arg(long, conflicts_with = "restarts")]
        resume: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on a held-out test set.
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Dump per-step states and metrics of one instance.
    Rollout {
        checkpoint: PathBuf,
        /// Hamiltonian file; drawn from the test family when absent.
        #[arg(long)]
        hamiltonian: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        trajectories: usize,
    },
    /// Print the ground energy and ground state of a Hamiltonian file.
    Oracle { hamiltonian: PathBuf },
    /// Train and evaluate every ancilla allocation of the given totals.
    Ablation {
        /// Total ancilla counts.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        totals: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        restarts: usize,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Sampled)]
    mode: ModeArg,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sampled,
    Exact,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sampled => EvalMode::Sampled,
            ModeArg::Exact => EvalMode::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Theta,
    Random,
}

impl From<FamilyArg> for TestFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Theta => TestFamily::Theta,
            FamilyArg::Random => TestFamily::Random,
        }
    }
}

impl EvalArgs {
    fn options(&self, config: &TrainConfig, seed: Option<u64>, deterministic: bool) -> EvalOptions {
        let base = EvalOptions::from_config(config);
        EvalOptions {
            mode: self.mode.into(),
            trajectories: self.trajectories.unwrap_or(base.trajectories),
            samples: self.samples.unwrap_or(base.samples),
            seed: seed.unwrap_or(base.seed),
            test_family: self.family.map_or(base.test_family, Into::into),
            deterministic,
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<TrainConfig> {
    Ok(match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    })
}

fn load_hamiltonian(path: &Path) -> anyhow::Result<PauliHamiltonian> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let h = text
        .parse()
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(h)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train {
            restarts,
            resume,
            epochs,
        } => {
            if let Some(path) = resume {
                let ckpt = Checkpoint::load(path)?;
                let mut config = match &cli.config {
                    Some(p) => TrainConfig::load(p)?,
                    None => ckpt.config.clone(),
                };
                if let Some(s) = cli.seed {
                    config.seed = s;
                }
                if let Some(e) = epochs {
                    config.epochs = *e;
                }
                let done = train(
                    &config,
                    TrainOptions {
                        out_dir: Some(cli.out_dir.clone()),
                        resume: Some(ckpt),
                        deterministic: cli.deterministic,
                        ..Default::default()
                    },
                )?;
                done.save(&cli.out_dir.join(CHECKPOINT_FILE))?;
                println!("epoch {}", done.epoch);
                if let Some(loss) = done.loss_history.last() {
                    println!("final training loss {loss}");
                }
                return Ok(());
            }
            let mut config = load_config(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if let Some(e) = epochs {
                config.epochs = *e;
            }
            let eval = EvalOptions {
                deterministic: cli.deterministic,
                ..EvalOptions::from_config(&config)
            };
            let result = train_with_restarts(
                &config,
                &eval,
                &RestartOptions {
                    restarts: *restarts,
                    out_dir: Some(cli.out_dir.clone()),
                    deterministic: cli.deterministic,
                    stop_at: None,
                },
            )?;
            for run in &result.runs {
                println!(
                    "restart {} seed {}: mean fidelity {:.4}, mean gap {:.4}",
                    run.restart, run.seed, run.report.mean_fidelity, run.report.mean_gap
                );
            }
            println!(
                "best restart {} written to {}",
                result.best_run().restart,
                cli.out_dir.join(CHECKPOINT_FILE).display()
            );
        }
        Command::Eval { checkpoint, eval } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let options = eval.options(&ckpt.config, cli.seed, cli.deterministic);
            let report = evaluate_checkpoint(&ckpt, &options)?;
            report.write_all(&cli.out_dir)?;
            println!(
                "{} samples: mean fidelity {:.4} (sd {:.4}), mean gap {:.4}",
                report.sample_count, report.mean_fidelity, report.std_fidelity, report.mean_gap
            );
            if let Some(t) = &report.two_stage {
                println!(
                    "two-stage: step {} value {:.4} observed {}",
                    t.step, t.value, t.observed
                );
            }
        }
        Command::Rollout {
            checkpoint,
            hamiltonian,
            mode,
            trajectories,
        } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let config = &ckpt.config;
            let seed = cli.seed.unwrap_or(config.test_seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let instance = match hamiltonian {
                Some(path) => {
                    let h = load_hamiltonian(path)?;
                    if h.qubits() != config.n_sys {
                        bail!(Error::Config(format!(
                            "Hamiltonian acts on {} qubits, checkpoint on {}",
                            h.qubits(),
                            config.n_sys
                        )));
                    }
                    Instance::new(sample_initial_state(config, &mut rng), h)?
                }
                None => qfeedback::eval::test_set(config, config.test_family, 1, seed)?.remove(0),
            };
            let params = qfeedback::controller::ControllerParams::from_flat(config.widths()?, &ckpt.params)?;
            let states = step_states(&params, config, &instance, (*mode).into(), *trajectories, &mut rng)?;
            let dump = RolloutDump::new(&instance, &states)?;
            for s in &dump.steps {
                println!("step {} energy {:.6} fidelity {:.6}", s.record.step, s.record.energy, s.record.fidelity);
            }
            std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
            let path = cli.out_dir.join("rollout.json");
            let text = serde_json::to_string_pretty(&dump)?;
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            println!("E_min {:.6}, written to {}", dump.e_min, path.display());
        }
        Command::Oracle { hamiltonian } => {
            let h = load_hamiltonian(hamiltonian)?;
            let g = h.ground()?;
            println!("E_min {:?}", g.energy);
            println!("gap {:?}", g.gap);
            println!("degeneracy {}", g.degeneracy);
            println!("ground state (qubit 0 leftmost):");
            let n = h.qubits();
            for (i, a) in g.state.iter().enumerate() {
                println!("|{:0n$b}> {:+.12} {:+.12}i", i, a.re, a.im);
            }
        }
        Command::Ablation { totals, restarts, eval } => {
            let mut config = load_config(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            let options = eval.options(&config, None, cli.deterministic);
            let rows = run_ablation(
                &config,
                &options,
                &AblationOptions {
                    cells: table_grid(totals),
                    restarts: *restarts,
                    out_dir: Some(cli.out_dir.clone()),
                    deterministic: cli.deterministic,
                },
            )?;
            println!("N_anc N_anc_m best_mean_fidelity");
            for (cell, f) in best_per_cell(&rows) {
                println!("{:5} {:7} {:.4}", cell.n_anc, cell.n_anc_m, f);
            }
            println!("table written to {}", cli.out_dir.join(ABLATION_FILE).display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct StateDump {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl StateDump {
    fn new(m: &ComplexMatrix) -> Self {
        let rows = |d: &[f64]| d.chunks(m.cols()).map(<[f64]>::to_vec).collect();
        Self {
            re: rows(m.re()),
            im: rows(m.im()),
        }
    }
}

#[derive(Serialize)]
struct StepDump {
    #[serde(flatten)]
    record: StepRecord,
    state: StateDump,
}

#[derive(Serialize)]
struct RolloutDump {
    hamiltonian: String,
    e_min: f64,
    steps: Vec<StepDump>,
}

impl RolloutDump {
    fn new(instance: &Instance, states: &[ComplexMatrix]) -> qfeedback::Result<Self> {
        let steps = std::iter::once(&instance.rho0)
            .chain(states)
            .enumerate()
            .map(|(t, rho)| {
                Ok(StepDump {
                    record: step_record(t, rho, instance)?,
                    state: StateDump::new(rho),
                })
            })
            .collect::<qfeedback::Result<_>>()?;
        Ok(Self {
            hamiltonian: instance.hamiltonian.to_string(),
            e_min: instance.ground.energy,
            steps,
        })
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let code = err
        .chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(exit::NUMERICAL, Error::exit_code);
    code as u8
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
