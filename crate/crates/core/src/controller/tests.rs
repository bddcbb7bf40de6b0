use super::*;
use crate::hamiltonian::{sample_hamiltonian, PauliString};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straightforward LSTM cell on plain vectors.
fn reference_step(p: &ControllerParams, h: &[f64], c: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let w = p.widths();
    let hid = w.hidden;
    let cols = w.input() + hid;
    let z: Vec<f64> = (0..4 * hid)
        .map(|r| {
            let row = &p.w_gates[r * cols..(r + 1) * cols];
            let xs = x.iter().chain(h.iter());
            row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>() + p.b_gates[r]
        })
        .collect();
    let mut c2 = vec![0.0; hid];
    let mut h2 = vec![0.0; hid];
    for k in 0..hid {
        let (i, f, g, o) = (sig(z[k]), sig(z[hid + k]), z[2 * hid + k].tanh(), sig(z[3 * hid + k]));
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    let theta = (0..w.output)
        .map(|r| {
            p.w_out[r * hid..(r + 1) * hid]
                .iter()
                .zip(&h2)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + p.b_out[r]
        })
        .collect();
    (h2, c2, theta)
}

fn small_widths() -> ControllerWidths {
    ControllerWidths::new(1, 2, 5, 6)
}

fn two_step_thetas(p: &ControllerParams, h: &PauliHamiltonian, outcome: Outcome) -> Vec<f64> {
    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, p, false);
    let s0 = nodes.initial_state(&mut tape);
    let x1 = tape.constant(RealTensor::vector(encode_input(h, None, &p.widths()).unwrap()));
    let (s1, _) = nodes.lstm_step(&mut tape, &s0, x1).unwrap();
    let x2 = tape.constant(RealTensor::vector(encode_input(h, Some(&outcome), &p.widths()).unwrap()));
    let (_, theta) = nodes.lstm_step(&mut tape, &s1, x2).unwrap();
    tape.real(theta).data().to_vec()
}

#[test]
fn parameter_count_formula() {
    let w = ControllerWidths::new(2, 2, 64, 24);
    assert_eq!(w.input(), 18);
    assert_eq!(w.parameter_count(), 4 * 64 * (18 + 64 + 1) + 24 * 65);
    let p = ControllerParams::init(w, 0).unwrap();
    assert_eq!(p.flatten().len(), w.parameter_count());
    assert_eq!(ControllerParams::from_flat(w, &p.flatten()).unwrap(), p);
    assert!(ControllerParams::from_flat(w, &[0.0; 3]).is_err());
}

#[test]
fn init_is_seeded_and_sets_forget_bias() {
    let w = small_widths();
    let a = ControllerParams::init(w, 9).unwrap();
    assert_eq!(a, ControllerParams::init(w, 9).unwrap());
    assert_ne!(a, ControllerParams::init(w, 10).unwrap());
    assert!(a.b_gates[5..10].iter().all(|&b| b == 1.0));
    assert!(a.b_gates[..5].iter().chain(&a.b_gates[10..]).all(|&b| b == 0.0));
    assert!(a.b_out.iter().all(|&b| b == 0.0));
    assert!(ControllerParams::init(ControllerWidths::new(1, 0, 0, 2), 0).is_err());
}

#[test]
fn init_weight_spread_matches_uniform_moments() {
    // input 16 + hidden 84 = fan-in 100.
    let w = ControllerWidths::new(2, 0, 84, 1);
    let draws: Vec<f64> = (0..4)
        .flat_map(|seed| ControllerParams::init(w, seed).unwrap().w_gates)
        .collect();
    assert!(draws.len() >= 100_000);
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let std = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let expected = 1.0 / 300f64.sqrt();
    assert!((std / expected - 1.0).abs() < 0.1, "{std} vs {expected}");
    assert!(draws.iter().all(|x| x.abs() <= 0.1));
}

#[test]
fn encoding_order_and_signs() {
    let w = ControllerWidths::new(1, 2, 4, 4);
    let z = PauliHamiltonian::new(1, vec![(1.0, "Z".parse::<PauliString>().unwrap())]).unwrap();
    assert_eq!(encode_input(&z, None, &w).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let m = Outcome::from_bits(&[0, 1]);
    assert_eq!(encode_input(&z, Some(&m), &w).unwrap()[4..], [1.0, -1.0]);
    assert!(encode_input(&z, Some(&Outcome::from_bits(&[1])), &w).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h2 = sample_hamiltonian(2, &mut rng).unwrap();
    assert!(encode_input(&h2, None, &w).is_err());
    let w2 = ControllerWidths::new(2, 3, 4, 4);
    assert_eq!(encode_input(&h2, None, &w2).unwrap().len(), 19);
}

#[test]
fn zero_weights_emit_output_bias() {
    let w = small_widths();
    let mut p = ControllerParams::zeros(w);
    p.b_out = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, &p, false);
    let s0 = nodes.initial_state(&mut tape);
    let x = tape.constant(RealTensor::vector(vec![0.7; w.input()]));
    let (s1, theta) = nodes.lstm_step(&mut tape, &s0, x).unwrap();
    assert!(tape.real(s1.hidden).data().iter().all(|&h| h == 0.0));
    assert_eq!(tape.real(theta).data(), &p.b_out[..]);
}

#[test]
fn saturated_forget_gate_carries_the_cell() {
    let w = small_widths();
    let mut p = ControllerParams::zeros(w);
    p.b_gates[5..10].fill(50.0);
    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, &p, false);
    let c0 = tape.constant(RealTensor::vector(vec![0.3, -0.2, 0.9, -1.5, 0.0]));
    let mut state = CellState {
        hidden: tape.constant(RealTensor::zeros(5, 1)),
        cell: c0,
    };
    for _ in 0..3 {
        let x = tape.constant(RealTensor::vector(vec![1.0; w.input()]));
        state = nodes.lstm_step(&mut tape, &state, x).unwrap().0;
    }
    assert_eq!(tape.real(state.cell), tape.real(c0));
}

#[test]
fn matches_reference_cell_and_split_api() {
    let w = ControllerWidths::new(2, 2, 7, 12);
    let p = ControllerParams::init(w, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ham = sample_hamiltonian(2, &mut rng).unwrap();
    let m = Outcome::from_bits(&[1, 0]);
    let h0: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c0: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = encode_input(&ham, Some(&m), &w).unwrap();
    let (rh, rc, rt) = reference_step(&p, &h0, &c0, &x);

    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, &p, true);
    let state = CellState {
        hidden: tape.constant(RealTensor::vector(h0)),
        cell: tape.constant(RealTensor::vector(c0)),
    };
    let xin = tape.constant(RealTensor::vector(x));
    let (full, theta_full) = nodes.lstm_step(&mut tape, &state, xin).unwrap();
    let drive = nodes.drive_hamiltonian(&mut tape, &ham).unwrap();
    let rec = nodes.drive_recurrent(&mut tape, &state).unwrap();
    let pre = nodes.preactivation(&mut tape, drive, rec, Some(&m)).unwrap();
    let (split, theta_split) = nodes.cell_update(&mut tape, pre, &state).unwrap();

    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
    assert!(close(tape.real(full.hidden).data(), &rh));
    assert!(close(tape.real(full.cell).data(), &rc));
    assert!(close(tape.real(theta_full).data(), &rt));
    assert!(close(tape.real(split.hidden).data(), &rh));
    assert!(close(tape.real(theta_split).data(), tape.real(theta_full).data()));
}

#[test]
fn theta_gradients_match_finite_differences() {
    let w = small_widths();
    let p = ControllerParams::init(w, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ham = sample_hamiltonian(1, &mut rng).unwrap();
    let weights: Vec<f64> = (0..w.output).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = Outcome::from_bits(&[1, 1]);
    let objective = |tape: &mut Tape, nodes: &ControllerNodes| {
        let s0 = nodes.initial_state(tape);
        let x1 = tape.constant(RealTensor::vector(encode_input(&ham, None, &w).unwrap()));
        let (s1, _) = nodes.lstm_step(tape, &s0, x1).unwrap();
        let x2 = tape.constant(RealTensor::vector(encode_input(&ham, Some(&m), &w).unwrap()));
        let (_, theta) = nodes.lstm_step(tape, &s1, x2).unwrap();
        let r = tape.constant(RealTensor::vector(weights.clone()));
        let prod = tape.mul(theta, r).unwrap();
        let parts: Vec<NodeId> = (0..w.output).map(|k| tape.slice(prod, k, 1).unwrap()).collect();
        tape.sum(&parts).unwrap()
    };
    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, &p, true);
    let loss = objective(&mut tape, &nodes);
    let grad = nodes.flat_gradient(&tape.backward(loss).unwrap());

    let value_at = |flat: &[f64]| {
        let q = ControllerParams::from_flat(w, flat).unwrap();
        let mut tape = Tape::new();
        let nodes = ControllerNodes::register(&mut tape, &q, false);
        let l = objective(&mut tape, &nodes);
        tape.scalar(l)
    };
    let base = p.flatten();
    let step = 1e-5;
    for k in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[k] += step;
        minus[k] -= step;
        let fd = (value_at(&plus) - value_at(&minus)) / (2.0 * step);
        let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-7);
        assert!(err <= 1e-4 || (fd - grad[k]).abs() < 1e-9, "coord {k}: fd {fd} vs {}", grad[k]);
    }
}

#[test]
fn policy_depends_on_outcome_history() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..5 {
        let w = ControllerWidths::new(1, 2, 16, 10);
        let p = ControllerParams::init(w, seed).unwrap();
        let ham = sample_hamiltonian(1, &mut rng).unwrap();
        let a = two_step_thetas(&p, &ham, Outcome::from_bits(&[0, 0]));
        let b = two_step_thetas(&p, &ham, Outcome::from_bits(&[1, 0]));
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff > 1e-6);
    }
}

#[test]
fn hidden_state_is_bounded_and_steps_are_deterministic() {
    let w = ControllerWidths::new(1, 1, 8, 4);
    let mut p = ControllerParams::init(w, 1).unwrap();
    p.w_gates.iter_mut().for_each(|x| *x *= 40.0);
    let mut tape = Tape::new();
    let nodes = ControllerNodes::register(&mut tape, &p, false);
    let mut s = nodes.initial_state(&mut tape);
    let x = tape.constant(RealTensor::vector(vec![3.0, -2.0, 5.0, 1.0, -1.0]));
    for _ in 0..10 {
        s = nodes.lstm_step(&mut tape, &s, x).unwrap().0;
        assert!(tape.real(s.hidden).data().iter().all(|h| h.abs() <= 1.0));
    }
    let ham = PauliHamiltonian::from_coefficients(1, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    let m = Outcome::from_bits(&[1]);
    let one = two_step_thetas(&p, &ham, m);
    assert_eq!(one, two_step_thetas(&p, &ham, m));
}
