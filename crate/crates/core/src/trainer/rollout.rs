//! Differentiable protocol rollouts: controller, circuit steps and final
//! energy on one tape.

use rand::Rng;

use super::config::{InitialState, Mode, TrainConfig};
use crate::autodiff::{NodeId, Tape};
use crate::controller::{CellState, ControllerNodes};
use crate::error::{Error, Result};
use crate::hamiltonian::{sample_hamiltonian, GroundSolution, PauliHamiltonian};
use crate::quantum::{
    random_mixed_state, random_pure_state, sample_from_isometry, step_channel_traced, step_children, step_isometry,
    Outcome, StepLayout,
};
use crate::tensor::ComplexMatrix;

/// One (initial state, Hamiltonian) pair with its exact ground solution.
#[derive(Clone, Debug)]
pub struct Instance {
    pub rho0: ComplexMatrix,
    pub hamiltonian: PauliHamiltonian,
    pub dense: ComplexMatrix,
    pub ground: GroundSolution,
}

impl Instance {
    pub fn new(rho0: ComplexMatrix, hamiltonian: PauliHamiltonian) -> Result<Self> {
        let dense = hamiltonian.to_dense();
        let ground = GroundSolution::of_matrix(&dense)?;
        Ok(Self {
            rho0,
            hamiltonian,
            dense,
            ground,
        })
    }

    /// Samples the Hamiltonian first, then the initial state.
    pub fn sample<R: Rng + ?Sized>(config: &TrainConfig, rng: &mut R) -> Result<Self> {
        let h = sample_hamiltonian(config.n_sys, rng)?;
        Self::new(sample_initial_state(config, rng), h)
    }
}

pub fn sample_initial_state<R: Rng + ?Sized>(config: &TrainConfig, rng: &mut R) -> ComplexMatrix {
    match config.initial_state {
        InitialState::Pure => random_pure_state(config.n_sys, rng),
        InitialState::Mixed => random_mixed_state(config.n_sys, config.mixture_components, rng),
    }
}

/// Settings a rollout needs, independent of the optimizer.
#[derive(Clone, Copy, Debug)]
pub struct RolloutSpec {
    pub layout: StepLayout,
    pub steps: usize,
    pub prune_threshold: f64,
    /// Subtract the leave-one-out baseline in the score term. Switching it
    /// off leaves the estimator unbiased but noisier.
    pub baseline: bool,
}

impl RolloutSpec {
    pub fn from_config(config: &TrainConfig) -> Result<Self> {
        Ok(Self {
            layout: config.layout()?,
            steps: config.steps,
            prune_threshold: config.prune_threshold,
            baseline: true,
        })
    }
}

/// Exact branch-tree rollout on a tape.
#[derive(Clone, Debug)]
pub struct ExactRollout {
    /// `Σ_b Re Tr(ρ_b H)` over final branches.
    pub loss: NodeId,
    /// Ensemble state `Σ_b ρ_b` after each step.
    pub step_states: Vec<ComplexMatrix>,
    /// `Σ_b w_b` after each step, after pruning.
    pub weight_sums: Vec<f64>,
    /// Number of live branches after each step.
    pub branch_counts: Vec<usize>,
}

struct Branch {
    rho: NodeId,
    state: CellState,
    recurrent: NodeId,
    last: Option<Outcome>,
}

fn energy(tape: &mut Tape, rho: NodeId, h: NodeId) -> Result<NodeId> {
    let rh = tape.matmul(rho, h)?;
    Ok(tape.trace_re(rh)?)
}

fn sum_values(tape: &Tape, ids: &[NodeId]) -> ComplexMatrix {
    let first = tape.complex(ids[0]);
    let mut acc = ComplexMatrix::zeros(first.rows(), first.cols());
    for &id in ids {
        acc.add_assign(tape.complex(id));
    }
    acc
}

/// Enumerates every outcome history. Each branch carries its own controller
/// state; siblings share their parent's recurrent pre-activation. The loss
/// never divides by a branch probability.
pub fn rollout_exact(
    tape: &mut Tape,
    nodes: &ControllerNodes,
    instance: &Instance,
    spec: &RolloutSpec,
) -> Result<ExactRollout> {
    let layout = &spec.layout;
    let drive = nodes.drive_hamiltonian(tape, &instance.hamiltonian)?;
    let h = tape.constant(instance.dense.clone());
    let root_state = nodes.initial_state(tape);
    let root_rec = nodes.drive_recurrent(tape, &root_state)?;
    let mut frontier = vec![Branch {
        rho: tape.constant(instance.rho0.clone()),
        state: root_state,
        recurrent: root_rec,
        last: None,
    }];
    let mut out = ExactRollout {
        loss: drive,
        step_states: Vec::with_capacity(spec.steps),
        weight_sums: Vec::with_capacity(spec.steps),
        branch_counts: Vec::with_capacity(spec.steps),
    };
    for t in 1..=spec.steps {
        let mut next = Vec::new();
        let mut weights = Vec::new();
        let mut finals = Vec::new();
        for b in &frontier {
            let pre = nodes.preactivation(tape, drive, b.recurrent, b.last.as_ref())?;
            let (state, theta) = nodes.cell_update(tape, pre, &b.state)?;
            if t == spec.steps {
                finals.push(step_channel_traced(tape, b.rho, theta, layout)?);
                continue;
            }
            let v = step_isometry(tape, theta, layout)?;
            let children = step_children(tape, v, b.rho, layout)?;
            let recurrent = nodes.drive_recurrent(tape, &state)?;
            for (child, m) in children.into_iter().zip(layout.outcomes()) {
                let weight = tape.complex(child).trace().re;
                if weight < spec.prune_threshold || weight <= 0.0 {
                    continue;
                }
                weights.push(weight);
                next.push(Branch {
                    rho: child,
                    state,
                    recurrent,
                    last: Some(m),
                });
            }
        }
        if t == spec.steps {
            let state = tape.sum(&finals)?;
            out.step_states.push(tape.complex(state).clone());
            out.weight_sums.push(tape.complex(state).trace().re);
            out.branch_counts.push(finals.len());
            out.loss = energy(tape, state, h)?;
        } else {
            if next.is_empty() {
                return Err(Error::Numerical(format!("every branch was pruned at step {t}")));
            }
            let ids: Vec<NodeId> = next.iter().map(|b| b.rho).collect();
            out.step_states.push(sum_values(tape, &ids));
            out.weight_sums.push(weights.iter().sum());
            out.branch_counts.push(next.len());
            frontier = next;
        }
    }
    Ok(out)
}

/// One sampled trajectory on a tape.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `Re Tr(ρ_T H)` for the normalized final state.
    pub energy: NodeId,
    /// `Σ_t ln p(m_t)`, absent when nothing was measured.
    pub log_probability: Option<NodeId>,
    pub outcomes: Vec<Outcome>,
    /// Normalized system state after each step.
    pub states: Vec<ComplexMatrix>,
}

/// Draws outcomes step by step and renormalizes after each measurement.
pub fn rollout_trajectory<R: Rng + ?Sized>(
    tape: &mut Tape,
    nodes: &ControllerNodes,
    drive: NodeId,
    h: NodeId,
    rho0: NodeId,
    spec: &RolloutSpec,
    rng: &mut R,
) -> Result<Trajectory> {
    let layout = &spec.layout;
    let mut state = nodes.initial_state(tape);
    let mut rho = rho0;
    let mut last = None;
    let mut log_terms = Vec::new();
    let mut outcomes = Vec::new();
    let mut states = Vec::with_capacity(spec.steps);
    for t in 1..=spec.steps {
        let rec = nodes.drive_recurrent(tape, &state)?;
        let pre = nodes.preactivation(tape, drive, rec, last.as_ref())?;
        let (next, theta) = nodes.cell_update(tape, pre, &state)?;
        state = next;
        if t == spec.steps || layout.n_meas() == 0 {
            rho = step_channel_traced(tape, rho, theta, layout)?;
        } else {
            let v = step_isometry(tape, theta, layout)?;
            let s = sample_from_isometry(tape, v, rho, layout, rng)?;
            log_terms.push(tape.ln(s.probability_node)?);
            outcomes.push(s.outcome);
            last = Some(s.outcome);
            rho = s.rho;
        }
        states.push(tape.complex(rho).clone());
    }
    let log_probability = if log_terms.is_empty() {
        None
    } else {
        Some(tape.sum(&log_terms)?)
    };
    Ok(Trajectory {
        energy: energy(tape, rho, h)?,
        log_probability,
        outcomes,
        states,
    })
}

/// Score-function surrogate over a group of trajectories.
#[derive(Clone, Debug)]
pub struct SampledRollout {
    /// Differentiate this; its value is not the energy.
    pub surrogate: NodeId,
    /// Mean trajectory energy, the loss estimate.
    pub energy: f64,
    pub energies: Vec<f64>,
}

/// `M` trajectories of one instance combined into
/// `(1/M) Σ_j [E_j + (E_j − b_j) Σ_t ln p(m_t)]` with the outcome-independent
/// value factor held constant and `b_j` the mean energy of the other
/// trajectories, or zero when `spec.baseline` is off. Its gradient is an
/// unbiased estimate of the exact gradient.
/// Without measured ancillas a single trajectory is exact.
pub fn rollout_sampled<R: Rng + ?Sized>(
    tape: &mut Tape,
    nodes: &ControllerNodes,
    instance: &Instance,
    spec: &RolloutSpec,
    trajectories: usize,
    rng: &mut R,
) -> Result<SampledRollout> {
    let drive = nodes.drive_hamiltonian(tape, &instance.hamiltonian)?;
    let h = tape.constant(instance.dense.clone());
    let rho0 = tape.constant(instance.rho0.clone());
    let deterministic = spec.layout.n_meas() == 0 || spec.steps == 1;
    let m = if deterministic { 1 } else { trajectories.max(1) };
    let trajs: Vec<Trajectory> = (0..m)
        .map(|_| rollout_trajectory(tape, nodes, drive, h, rho0, spec, rng))
        .collect::<Result<_>>()?;
    let energies: Vec<f64> = trajs.iter().map(|t| tape.scalar(t.energy)).collect();
    let total: f64 = energies.iter().sum();
    let mut terms = Vec::with_capacity(m);
    for (traj, &e) in trajs.iter().zip(&energies) {
        let mut term = traj.energy;
        if let Some(lp) = traj.log_probability {
            let baseline = if spec.baseline && m > 1 { (total - e) / (m - 1) as f64 } else { 0.0 };
            let score = tape.scale(lp, e - baseline)?;
            term = tape.add(term, score)?;
        }
        terms.push(term);
    }
    let summed = tape.sum(&terms)?;
    Ok(SampledRollout {
        surrogate: tape.scale(summed, 1.0 / m as f64)?,
        energy: total / m as f64,
        energies,
    })
}

/// Loss value and flat parameter gradient of one instance.
#[derive(Clone, Debug)]
pub struct InstanceGradient {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

/// Builds a fresh tape, rolls out in the requested mode and backpropagates.
pub fn instance_gradient<R: Rng + ?Sized>(
    params: &crate::controller::ControllerParams,
    instance: &Instance,
    spec: &RolloutSpec,
    mode: Mode,
    trajectories: usize,
    rng: &mut R,
) -> Result<InstanceGradient> {
    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, params, true);
    let (objective, loss) = match mode {
        Mode::Sampled => {
            let r = rollout_sampled(&mut tape, &nodes, instance, spec, trajectories, rng)?;
            (r.surrogate, r.energy)
        }
        _ => {
            let r = rollout_exact(&mut tape, &nodes, instance, spec)?;
            (r.loss, tape.scalar(r.loss))
        }
    };
    let grads = tape.backward(objective)?;
    Ok(InstanceGradient {
        loss,
        gradient: nodes.flat_gradient(&grads),
    })
}
