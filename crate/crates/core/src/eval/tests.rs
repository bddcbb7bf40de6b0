use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::hamiltonian::{GroundSolution, PauliHamiltonian};
use crate::quantum::{random_mixed_state, random_pure_state};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn ground_of(text: &str) -> GroundSolution {
    let h: PauliHamiltonian = text.parse().unwrap();
    GroundSolution::of_matrix(&h.to_dense()).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        n_anc_m: 1,
        n_anc_t: 1,
        steps: 3,
        hidden: 4,
        batch_size: 2,
        epochs: 2,
        eval_samples: 6,
        eval_trajectories: 8,
        ..Default::default()
    }
}

#[test]
fn fidelity_of_the_ground_state_is_one() {
    let g = ground_of("0.3 X\n-0.8 Y\n0.5 Z\n");
    let rho = ComplexMatrix::outer(&g.state);
    assert!((fidelity(&rho, &g).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn maximally_mixed_fidelity_is_one_over_dimension() {
    for (n, text) in [(1, "1 X\n"), (2, "1 XZ\n0.3 YY\n-0.2 IZ\n")] {
        let g = ground_of(text);
        let d = 1usize << n;
        let rho = ComplexMatrix::identity(d).scale(1.0 / d as f64);
        assert!((fidelity(&rho, &g).unwrap() - 1.0 / d as f64).abs() < 1e-12, "n = {n}");
    }
}

#[test]
fn sigma_z_fidelity_is_the_excited_population() {
    let g = ground_of("1 Z\n");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let rho = random_mixed_state(1, 3, &mut rng);
        assert!((fidelity(&rho, &g).unwrap() - rho.get(1, 1).re).abs() < 1e-14);
    }
}

#[test]
fn degenerate_ground_levels_use_the_projector() {
    let g = ground_of("1 ZI\n");
    assert!(g.is_degenerate());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rho = random_mixed_state(2, 4, &mut rng);
    // Ground space of Z⊗I is spanned by |10⟩ and |11⟩.
    let expected = rho.get(2, 2).re + rho.get(3, 3).re;
    assert!((fidelity(&rho, &g).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn fidelity_rejects_bad_inputs() {
    let g = ground_of("1 Z\n");
    assert!(fidelity(&ComplexMatrix::identity(4).scale(0.25), &g).is_err());
    assert!(fidelity(&ComplexMatrix::identity(2), &g).is_err());
}

#[test]
fn bloch_coordinates_of_reference_states() {
    let zero = ComplexMatrix::diagonal(&[1.0, 0.0]);
    assert_eq!(bloch_coordinates(&zero).unwrap(), [0.0, 0.0, 1.0]);
    let mixed = ComplexMatrix::identity(2).scale(0.5);
    assert_eq!(bloch_coordinates(&mixed).unwrap(), [0.0, 0.0, 0.0]);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = ComplexMatrix::outer(&[c(s, 0.0), c(s, 0.0)]);
    let b = bloch_coordinates(&plus).unwrap();
    assert!((b[0] - 1.0).abs() < 1e-15 && b[1].abs() < 1e-15 && b[2].abs() < 1e-15);
    let plus_i = ComplexMatrix::outer(&[c(s, 0.0), c(0.0, s)]);
    let b = bloch_coordinates(&plus_i).unwrap();
    assert!((b[1] - 1.0).abs() < 1e-15, "{b:?}");
    assert!(bloch_coordinates(&ComplexMatrix::identity(4)).is_err());
}

#[test]
fn bloch_vectors_of_random_states_are_inside_the_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let pure = random_pure_state(1, &mut rng);
        let b = bloch_coordinates(&pure).unwrap();
        assert!((b.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let mixed = random_mixed_state(1, 5, &mut rng);
        let b = bloch_coordinates(&mixed).unwrap();
        assert!(b.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-12);
    }
}

#[test]
fn zz_of_reference_states() {
    let basis = |k: usize| {
        let mut d = [0.0; 4];
        d[k] = 1.0;
        ComplexMatrix::diagonal(&d)
    };
    assert_eq!(zz_expectation(&basis(0)).unwrap(), 1.0);
    assert_eq!(zz_expectation(&basis(1)).unwrap(), -1.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bell = ComplexMatrix::outer(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
    assert!((zz_expectation(&bell).unwrap() - 1.0).abs() < 1e-15);
    assert!(zz_expectation(&basis(0).scale(1.0)).is_ok());
    assert!(zz_expectation(&ComplexMatrix::identity(2)).is_err());
}

#[test]
fn test_sets_depend_only_on_the_seed() {
    let a = small_config();
    let b = TrainConfig {
        n_anc_m: 2,
        n_anc_t: 0,
        hidden: 9,
        ..a.clone()
    };
    let sa = test_set(&a, TestFamily::Theta, 5, 77).unwrap();
    let sb = test_set(&b, TestFamily::Theta, 5, 77).unwrap();
    for (x, y) in sa.iter().zip(&sb) {
        assert_eq!(x.hamiltonian, y.hamiltonian);
        assert_eq!(x.rho0, y.rho0);
    }
    let other = test_set(&a, TestFamily::Theta, 5, 78).unwrap();
    assert_ne!(sa[0].hamiltonian, other[0].hamiltonian);
    let two = TrainConfig {
        n_sys: 2,
        test_family: TestFamily::Random,
        ..a
    };
    assert!(test_set(&two, TestFamily::Theta, 5, 1).is_err());
    assert_eq!(test_set(&two, TestFamily::Random, 3, 1).unwrap()[0].rho0.rows(), 4);
}

#[test]
fn untrained_evaluation_validates_and_is_reproducible() {
    let config = small_config();
    let params = ControllerParams::init(config.widths().unwrap(), 5).unwrap();
    let options = EvalOptions {
        deterministic: true,
        ..EvalOptions::from_config(&config)
    };
    let report = evaluate(&params, &config, &options).unwrap();
    report.validate().unwrap();
    assert_eq!(report.samples.len(), 6);
    assert_eq!(report.per_step.len(), config.steps + 1);
    assert!(report.mean_fidelity < 0.9);
    let parallel = evaluate(
        &params,
        &config,
        &EvalOptions {
            deterministic: false,
            ..options.clone()
        },
    )
    .unwrap();
    assert_eq!(report, parallel);
    let tests = test_set(&config, options.test_family, options.samples, options.seed).unwrap();
    for (s, inst) in report.samples.iter().zip(&tests) {
        assert_eq!(s.steps[0].bloch.unwrap(), bloch_coordinates(&inst.rho0).unwrap());
        assert!(s.e_final >= s.e_min - 1e-9);
    }
}

#[test]
fn sampled_evaluation_agrees_with_exact() {
    let config = small_config();
    let params = ControllerParams::init(config.widths().unwrap(), 8).unwrap();
    let base = EvalOptions {
        samples: 3,
        trajectories: 3000,
        ..EvalOptions::from_config(&config)
    };
    let exact = evaluate(
        &params,
        &config,
        &EvalOptions {
            mode: EvalMode::Exact,
            ..base.clone()
        },
    )
    .unwrap();
    let sampled = evaluate(&params, &config, &base).unwrap();
    for (e, s) in exact.samples.iter().zip(&sampled.samples) {
        // Each fidelity is a mean of 3000 numbers in [0, 1].
        assert!((e.fidelity - s.fidelity).abs() < 4.0 * 0.5 / 3000f64.sqrt(), "{} vs {}", e.fidelity, s.fidelity);
        assert_eq!(e.e_min, s.e_min);
    }
}

#[test]
fn mismatched_widths_are_a_config_error() {
    let config = small_config();
    let params = ControllerParams::init(TrainConfig { hidden: 5, ..config.clone() }.widths().unwrap(), 0).unwrap();
    let e = evaluate(&params, &config, &EvalOptions::from_config(&config)).unwrap_err();
    assert_eq!(e.exit_code(), crate::error::exit::CONFIG);
}

#[test]
fn reports_write_their_files() {
    let config = small_config();
    let params = ControllerParams::init(config.widths().unwrap(), 1).unwrap();
    let report = evaluate(&params, &config, &EvalOptions::from_config(&config)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write_all(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("sample_id,E_min,E_final,fidelity,energy_0,fidelity_0,bloch_x_0"));
    assert_eq!(csv.lines().count(), 7);
    let bloch = std::fs::read_to_string(dir.path().join(BLOCH_FILE)).unwrap();
    assert_eq!(bloch.lines().next().unwrap(), "sample_id,step,x,y,z");
    assert_eq!(bloch.lines().count(), 1 + 6 * (config.steps + 1));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["mean_fidelity"].as_f64().unwrap(), report.mean_fidelity);
    assert_eq!(summary["fidelity_convention"].as_str().unwrap(), FIDELITY_CONVENTION);
    assert!(summary["two_stage"].is_object());
}

#[test]
fn two_qubit_reports_carry_zz() {
    let config = TrainConfig {
        n_sys: 2,
        test_family: TestFamily::Random,
        ..small_config()
    };
    let params = ControllerParams::init(config.widths().unwrap(), 1).unwrap();
    let report = evaluate(&params, &config, &EvalOptions::from_config(&config)).unwrap();
    assert!(report.samples[0].steps.iter().all(|s| s.zz.is_some() && s.bloch.is_none()));
    let dir = tempfile::tempdir().unwrap();
    report.write_all(dir.path()).unwrap();
    assert!(dir.path().join(ZZ_FILE).exists());
    assert!(!dir.path().join(BLOCH_FILE).exists());
}

#[test]
fn tampered_reports_fail_validation() {
    let config = small_config();
    let params = ControllerParams::init(config.widths().unwrap(), 1).unwrap();
    let report = evaluate(&params, &config, &EvalOptions::from_config(&config)).unwrap();
    let mut r = report.clone();
    r.mean_fidelity += 1e-6;
    assert!(r.validate().is_err());
    let mut r = report.clone();
    r.samples[0].steps[1].fidelity = 1.1;
    assert!(r.validate().is_err());
    let mut r = report;
    r.samples[0].steps[1].energy = r.samples[0].e_min - 1e-6;
    assert!(r.validate().is_err());
}

#[test]
fn restarts_keep_the_best_run() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let eval = EvalOptions::from_config(&config);
    let r = train_with_restarts(
        &config,
        &eval,
        &RestartOptions {
            restarts: 3,
            out_dir: Some(dir.path().to_path_buf()),
            deterministic: true,
            stop_at: None,
        },
    )
    .unwrap();
    assert_eq!(r.runs.len(), 3);
    let best = r.best_run().report.mean_fidelity;
    assert!(r.runs.iter().all(|run| run.report.mean_fidelity <= best));
    assert_eq!(r.runs.iter().map(|run| run.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    let saved = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(saved, r.best_run().checkpoint);
    assert!(dir.path().join("restart_2").join(REPORT_FILE).exists());
    let table = std::fs::read_to_string(dir.path().join(RESTARTS_FILE)).unwrap();
    assert_eq!(table.lines().count(), 4);

    let early = train_with_restarts(
        &config,
        &eval,
        &RestartOptions {
            restarts: 3,
            stop_at: Some((0.0, f64::INFINITY)),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(early.runs.len(), 1);
}

#[test]
fn ablation_grid_and_table() {
    assert_eq!(table_grid(&[2, 3, 4]).len(), 9);
    assert_eq!(
        table_grid(&[2]),
        vec![AblationCell { n_anc: 2, n_anc_m: 1 }, AblationCell { n_anc: 2, n_anc_m: 2 }]
    );
    let config = TrainConfig {
        epochs: 1,
        ..small_config()
    };
    let eval = EvalOptions {
        samples: 3,
        ..EvalOptions::from_config(&config)
    };
    let dir = tempfile::tempdir().unwrap();
    let options = AblationOptions {
        cells: table_grid(&[2]),
        restarts: 1,
        out_dir: Some(dir.path().to_path_buf()),
        deterministic: true,
    };
    let rows = run_ablation(&config, &eval, &options).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.selected_flag));
    let again = run_ablation(&config, &eval, &AblationOptions { out_dir: None, ..options }).unwrap();
    assert_eq!(rows, again);
    let csv = std::fs::read_to_string(dir.path().join(ABLATION_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "N_anc,N_anc_m,restart,mean_fidelity,selected_flag");
    assert!(lines[1].starts_with("2,1,0,"));
    assert!(lines[2].ends_with(",1"));
    assert_eq!(best_per_cell(&rows).len(), 2);
}
