//! Test suites shared by the integration tests and the acceptance harness.
//! Each suite takes its size as an argument and returns a verdict instead of
//! panicking, so the harness can print one line per criterion.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qfeedback::autodiff::Tape;
use qfeedback::controller::{ControllerNodes, ControllerParams};
use qfeedback::quantum::{
    expand_branch, random_mixed_state, random_pure_state, reference_trace_out, step_unitary, BranchState, Projector,
    StepLayout,
};
use qfeedback::tensor::{hermitian_eig, partial_trace, ComplexMatrix, RegisterShape};
use qfeedback::trainer::{
    instance_gradient, rollout_exact, rollout_trajectory, Instance, Mode, RolloutSpec, TrainConfig,
};

/// Slack on the variational bound.
pub const BOUND_TOL: f64 = 1e-9;

static BOUND_CHECKS: AtomicUsize = AtomicUsize::new(0);
static BOUND_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);
/// Smallest `E − E_min` seen, as f64 bits.
static BOUND_WORST: AtomicU64 = AtomicU64::new(f64::INFINITY.to_bits());
static BOUND_FIRST: Mutex<Option<String>> = Mutex::new(None);

/// Records one energy against its ground energy; false on a violation.
pub fn check_bound(energy: f64, e_min: f64, context: &str) -> bool {
    BOUND_CHECKS.fetch_add(1, Ordering::Relaxed);
    let margin = energy - e_min;
    let _ = BOUND_WORST.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |w| {
        (margin < f64::from_bits(w)).then_some(margin.to_bits())
    });
    let ok = margin >= -BOUND_TOL && energy.is_finite();
    if !ok {
        BOUND_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
        BOUND_FIRST
            .lock()
            .unwrap()
            .get_or_insert_with(|| format!("{context}: E {energy} < E_min {e_min}"));
    }
    ok
}

/// Panics on a violation; for plain tests.
pub fn assert_bound(energy: f64, e_min: f64, context: &str) {
    assert!(check_bound(energy, e_min, context), "{context}: E {energy} below E_min {e_min}");
}

pub struct BoundTally {
    pub checks: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub first_violation: Option<String>,
}

pub fn bound_tally() -> BoundTally {
    BoundTally {
        checks: BOUND_CHECKS.load(Ordering::Relaxed),
        violations: BOUND_VIOLATIONS.load(Ordering::Relaxed),
        worst_margin: f64::from_bits(BOUND_WORST.load(Ordering::Relaxed)),
        first_violation: BOUND_FIRST.lock().unwrap().clone(),
    }
}

pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn assert(self) {
        assert!(self.passed, "{}", self.detail);
    }
}

pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let a = ComplexMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    a.add(&a.adjoint()).unwrap().scale(0.5)
}

fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    hermitian_eig(m).unwrap().eigenvalues[0]
}

/// Eigensolver residuals and partial-trace trace preservation.
pub fn kernel_suite(matrices: usize, seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [2, 4, 8, 16, 32, 64];
    let (mut worst_residual, mut worst_orth, mut failures) = (0.0f64, 0.0f64, Vec::new());
    for k in 0..matrices {
        let n = sizes[k % sizes.len()];
        let h = random_hermitian(n, &mut rng);
        let norm = h.frobenius_norm();
        let eig = hermitian_eig(&h).unwrap();
        let v = &eig.eigenvectors;
        let lambda: Vec<f64> = eig.eigenvalues.clone();
        let hv = h.matmul(v).unwrap();
        let vl = ComplexMatrix::from_fn(n, n, |i, j| v.get(i, j) * lambda[j]);
        let residual = hv.sub(&vl).unwrap().frobenius_norm() / norm;
        let orth = v.adjoint().matmul(v).unwrap().max_abs_diff(&ComplexMatrix::identity(n));
        let sorted = lambda.windows(2).all(|w| w[0] <= w[1]);
        worst_residual = worst_residual.max(residual);
        worst_orth = worst_orth.max(orth);
        if residual > 1e-9 || orth > 1e-9 || !sorted {
            failures.push(format!("matrix {k} ({n}x{n}): residual {residual:e}, orthogonality {orth:e}"));
        }
    }
    let mut worst_trace = 0.0f64;
    for k in 0..matrices {
        let n = 1 + k % 6;
        let shape = RegisterShape::new(n);
        let m = if k % 2 == 0 {
            random_mixed_state(n, 1 + k % 4, &mut rng)
        } else {
            random_hermitian(1 << n, &mut rng)
        };
        let mut keep: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if keep.is_empty() {
            keep.push(rng.random_range(0..n));
        }
        let r = partial_trace(&m, shape, &keep).unwrap();
        let err = (r.trace() - m.trace()).norm();
        worst_trace = worst_trace.max(err);
        if err > 1e-12 {
            failures.push(format!("partial trace {k}: {n} qubits keep {keep:?}, trace error {err:e}"));
        }
    }
    let mut detail = format!(
        "{matrices} eigenproblems up to 64x64: max residual/||H||_F {worst_residual:.2e}, max ||V†V−I|| {worst_orth:.2e}; \
         {matrices} partial traces: max trace error {worst_trace:.2e}"
    );
    if let Some(f) = failures.first() {
        let _ = write!(detail, "; {} failures, first: {f}", failures.len());
    }
    Verdict {
        passed: failures.is_empty(),
        detail,
    }
}

/// Layouts with total width at most six.
pub fn channel_layouts() -> Vec<StepLayout> {
    let mut out = Vec::new();
    for n_sys in 1..=2 {
        for nm in 0..=3 {
            for nt in 0..=2 {
                if n_sys + nm + nt <= 6 {
                    out.push(StepLayout::new(n_sys, nm, nt, 2).unwrap());
                }
            }
        }
    }
    out
}

/// Completeness, branch weights, positivity, measure-and-discard against
/// trace-out, and the variational bound on every branch.
pub fn channel_suite(instances_per_layout: usize, steps: usize, seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let (mut worst_weight, mut worst_psd, mut worst_discard, mut branches) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    let layouts = channel_layouts();
    for layout in &layouts {
        let dim = 1 << layout.n_total();
        let mut total = ComplexMatrix::zeros(dim, dim);
        for p in Projector::all(layout) {
            total.add_assign(&p.matrix);
        }
        if total != ComplexMatrix::identity(dim) {
            failures.push(format!("{layout:?}: projectors do not sum to the identity"));
        }
        for k in 0..instances_per_layout {
            let n = layout.n_sys();
            let h = random_hermitian(1 << n, &mut rng);
            let e_min = min_eigenvalue(&h);
            let rho0 = if k % 2 == 0 {
                random_pure_state(n, &mut rng)
            } else {
                random_mixed_state(n, 3, &mut rng)
            };
            let mut frontier = vec![BranchState::root(rho0)];
            for t in 0..steps {
                let theta: Vec<f64> = (0..layout.parameter_count())
                    .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                    .collect();
                let u = step_unitary(&theta, layout).unwrap();
                let mut next = Vec::new();
                for b in &frontier {
                    let children = expand_branch(b, &theta, layout).unwrap();
                    let mut summed = ComplexMatrix::zeros(b.rho.rows(), b.rho.rows());
                    for c in &children {
                        summed.add_assign(&c.rho);
                    }
                    let reference = reference_trace_out(&b.rho, &u, layout).unwrap();
                    worst_discard = worst_discard.max(summed.max_abs_diff(&reference));
                    next.extend(children.into_iter().filter(|c| c.weight > 1e-14));
                }
                let weight: f64 = next.iter().map(|b| b.weight).sum();
                worst_weight = worst_weight.max((weight - 1.0).abs());
                for b in &next {
                    branches += 1;
                    let herm = b.rho.hermitian_deviation();
                    let neg = -min_eigenvalue(&b.rho).min(0.0);
                    worst_psd = worst_psd.max(herm).max(neg);
                    let energy = b.rho.matmul(&h).unwrap().trace().re / b.weight;
                    if !check_bound(energy, e_min, "channel suite branch") {
                        failures.push(format!("{layout:?} step {t}: branch energy below E_min"));
                    }
                }
                frontier = next;
            }
        }
    }
    if worst_weight > 1e-9 {
        failures.push(format!("branch weights drift by {worst_weight:e}"));
    }
    if worst_psd > 1e-9 {
        failures.push(format!("branch states leave the PSD cone by {worst_psd:e}"));
    }
    if worst_discard > 1e-10 {
        failures.push(format!("measure-and-discard differs from trace-out by {worst_discard:e}"));
    }
    let mut detail = format!(
        "{} layouts x {instances_per_layout} instances x {steps} steps, {branches} branches: weight drift {worst_weight:.1e}, \
         Hermitian/PSD deviation {worst_psd:.1e}, discard vs trace-out {worst_discard:.1e}",
        layouts.len()
    );
    if let Some(f) = failures.first() {
        let _ = write!(detail, "; {} failures, first: {f}", failures.len());
    }
    Verdict {
        passed: failures.is_empty(),
        detail,
    }
}

pub fn exact_loss(params: &ControllerParams, instance: &Instance, spec: &RolloutSpec) -> f64 {
    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, params, false);
    let r = rollout_exact(&mut tape, &nodes, instance, spec).unwrap();
    let loss = tape.scalar(r.loss);
    check_bound(loss, instance.ground.energy, "exact loss");
    loss
}

/// Reverse-mode gradient of the exact single-qubit `T = 2` loss against
/// central differences on `coordinates` randomly chosen parameters.
pub fn gradient_suite(coordinates: usize, seed: u64) -> Verdict {
    let config = TrainConfig {
        steps: 2,
        hidden: 8,
        ..TrainConfig::default()
    };
    let spec = RolloutSpec::from_config(&config).unwrap();
    let widths = config.widths().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ControllerParams::init(widths, seed).unwrap();
    let instance = Instance::sample(&config, &mut rng).unwrap();
    let ad = instance_gradient(&params, &instance, &spec, Mode::Exact, 1, &mut rng).unwrap();
    check_bound(ad.loss, instance.ground.energy, "gradient suite loss");
    let base = params.flatten();
    let count = coordinates.min(base.len());
    let mut picks: Vec<usize> = (0..base.len()).collect();
    for i in 0..count {
        let j = rng.random_range(i..picks.len());
        picks.swap(i, j);
    }
    let h = 1e-5;
    let (mut worst, mut floored, mut failures) = (0.0f64, 0usize, Vec::new());
    for &k in &picks[..count] {
        let at = |delta: f64| {
            let mut p = base.clone();
            p[k] += delta;
            exact_loss(&ControllerParams::from_flat(widths, &p).unwrap(), &instance, &spec)
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let g = ad.gradient[k];
        let scale = fd.abs().max(g.abs());
        // Central differences carry about 1e-10 of truncation and rounding
        // error, so gradients below 1e-6 are compared in absolute terms.
        let rel = if scale < 1e-6 {
            floored += 1;
            (fd - g).abs() / 1e-6
        } else {
            (fd - g).abs() / scale
        };
        worst = worst.max(rel);
        if rel > 1e-4 {
            failures.push(format!("parameter {k}: autodiff {g:e}, finite difference {fd:e}"));
        }
    }
    let mut detail = format!(
        "{count} of {} parameters, max relative error {worst:.2e} ({floored} below 1e-6 compared absolutely)",
        base.len()
    );
    if let Some(f) = failures.first() {
        let _ = write!(detail, "; {} failures, first: {f}", failures.len());
    }
    Verdict {
        passed: failures.is_empty() && count >= coordinates,
        detail,
    }
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Configuration of the estimator checks: one qubit, three steps, one
/// measured ancilla.
pub fn estimator_config() -> TrainConfig {
    TrainConfig {
        n_anc_m: 1,
        n_anc_t: 1,
        steps: 3,
        hidden: 6,
        ..TrainConfig::default()
    }
}

/// Per-trajectory final energies, drawn on one reusable tape.
pub fn trajectory_energies(params: &ControllerParams, instance: &Instance, spec: &RolloutSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, params, false);
    let drive = nodes.drive_hamiltonian(&mut tape, &instance.hamiltonian).unwrap();
    let h = tape.constant(instance.dense.clone());
    let rho0 = tape.constant(instance.rho0.clone());
    let mark = tape.len();
    (0..n)
        .map(|_| {
            let t = rollout_trajectory(&mut tape, &nodes, drive, h, rho0, spec, rng).unwrap();
            let e = tape.scalar(t.energy);
            tape.truncate(mark);
            e
        })
        .collect()
}

/// Gradient coordinates the estimator suite tests: those with the largest
/// exact magnitude, where a biased estimator would show first.
pub const ESTIMATOR_COORDINATES: usize = 8;

/// Sampled loss over `trajectories` draws and sampled gradient over
/// `repeats` estimates, each against exact mode within three standard errors.
pub fn estimator_suite(trajectories: usize, repeats: usize, per_estimate: usize, seed: u64) -> Verdict {
    let config = estimator_config();
    let spec = RolloutSpec::from_config(&config).unwrap();
    let params = ControllerParams::init(config.widths().unwrap(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = Instance::sample(&config, &mut rng).unwrap();
    let e_min = instance.ground.energy;
    let exact = instance_gradient(&params, &instance, &spec, Mode::Exact, 1, &mut rng).unwrap();
    let mut failures = Vec::new();

    let energies = trajectory_energies(&params, &instance, &spec, trajectories, &mut rng);
    for &e in &energies {
        if !check_bound(e, e_min, "sampled trajectory energy") {
            failures.push(format!("trajectory energy {e} below E_min {e_min}"));
            break;
        }
    }
    let (loss, loss_se) = mean_and_se(&energies);
    let loss_z = (loss - exact.loss) / loss_se;
    if loss_z.abs() > 3.0 {
        failures.push(format!("loss {loss} vs exact {} is {loss_z:.2} standard errors away", exact.loss));
    }

    let estimates: Vec<Vec<f64>> = (0..repeats)
        .map(|_| {
            instance_gradient(&params, &instance, &spec, Mode::Sampled, per_estimate, &mut rng)
                .unwrap()
                .gradient
        })
        .collect();
    let mut order: Vec<usize> = (0..exact.gradient.len()).collect();
    order.sort_by(|&a, &b| exact.gradient[b].abs().total_cmp(&exact.gradient[a].abs()));
    let mut worst_z = 0.0f64;
    for &k in &order[..ESTIMATOR_COORDINATES] {
        let xs: Vec<f64> = estimates.iter().map(|g| g[k]).collect();
        let (m, se) = mean_and_se(&xs);
        let z = (m - exact.gradient[k]) / se;
        worst_z = worst_z.max(z.abs());
        if z.abs() > 3.0 {
            failures.push(format!("gradient[{k}] {m:e} vs exact {:e}: {z:.2} standard errors", exact.gradient[k]));
        }
    }
    // The projection onto the exact direction pools every coordinate.
    let norm = exact.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    let proj: Vec<f64> = estimates
        .iter()
        .map(|g| g.iter().zip(&exact.gradient).map(|(a, b)| a * b).sum::<f64>() / norm)
        .collect();
    let (pm, pse) = mean_and_se(&proj);
    let proj_z = (pm - norm) / pse;
    if proj_z.abs() > 3.0 {
        failures.push(format!("projected gradient {pm:e} vs exact norm {norm:e}: {proj_z:.2} standard errors"));
    }
    let mut detail = format!(
        "loss over {trajectories} trajectories {loss_z:+.2} SE from exact; gradient over {repeats} estimates \
         ({per_estimate} trajectories each): top-{ESTIMATOR_COORDINATES} coordinates max |z| {worst_z:.2}, \
         projection onto exact direction z {proj_z:+.2}"
    );
    if let Some(f) = failures.first() {
        let _ = write!(detail, "; {} failures, first: {f}", failures.len());
    }
    Verdict {
        passed: failures.is_empty(),
        detail,
    }
}
