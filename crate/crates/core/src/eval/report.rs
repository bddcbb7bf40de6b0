use std::path::Path;

use serde::Serialize;

use super::metrics::FIDELITY_CONVENTION;
use super::{EvalMode, EvalOptions};
use crate::error::{Error, Result};
use crate::trainer::{TestFamily, TrainConfig};

pub const REPORT_FILE: &str = "eval_report.csv";
pub const BLOCH_FILE: &str = "bloch_steps.csv";
pub const ZZ_FILE: &str = "zz_steps.csv";
pub const SUMMARY_FILE: &str = "eval_summary.json";

/// Slack allowed on physical bounds of reported numbers.
const BOUND_TOL: f64 = 1e-9;

/// Metrics of the system state after one step. Step 0 is the initial state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub energy: f64,
    pub fidelity: f64,
    /// Single-qubit runs only.
    pub bloch: Option<[f64; 3]>,
    /// Two-qubit runs only.
    pub zz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub e_min: f64,
    pub e_final: f64,
    pub fidelity: f64,
    /// Pauli coefficients in canonical string order.
    pub hamiltonian: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

/// Averages over samples at one step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepSummary {
    pub step: usize,
    pub mean_energy_gap: f64,
    pub mean_fidelity: f64,
    pub mean_bloch: Option<[f64; 3]>,
    /// Mean distance of the Bloch vectors from their mean.
    pub bloch_spread: Option<f64>,
    pub mean_zz: Option<f64>,
}

/// Whether states gather at a common intermediate state before moving to
/// their targets. Reported, never enforced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoStageSummary {
    /// Intermediate step where the samples agree most.
    pub step: usize,
    /// Bloch spread (single qubit) or mean ZZ (two qubits) at that step.
    pub value: f64,
    pub mean_bloch: Option<[f64; 3]>,
    pub final_fidelity: f64,
    pub fidelity_at_step: f64,
    pub observed: bool,
    pub criterion: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: TrainConfig,
    pub mode: EvalMode,
    pub trajectories: usize,
    pub test_family: TestFamily,
    pub seed: u64,
    pub fidelity_convention: String,
    pub sample_count: usize,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    /// Mean of `E_final − E_min`.
    pub mean_gap: f64,
    pub per_step: Vec<StepSummary>,
    pub two_stage: Option<TwoStageSummary>,
    #[serde(skip)]
    pub samples: Vec<SampleRecord>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    s / n as f64
}

fn aggregates(samples: &[SampleRecord]) -> (f64, f64, f64) {
    let f = mean(samples.iter().map(|s| s.fidelity));
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s.fidelity - f).powi(2)).sum::<f64>() / (samples.len() - 1) as f64
    } else {
        0.0
    };
    let gap = mean(samples.iter().map(|s| s.e_final - s.e_min));
    (f, var.sqrt(), gap)
}

fn step_summaries(samples: &[SampleRecord]) -> Vec<StepSummary> {
    let steps = samples.first().map_or(0, |s| s.steps.len());
    (0..steps)
        .map(|t| {
            let at = || samples.iter().map(move |s| (&s.steps[t], s.e_min));
            let mean_bloch = samples[0].steps[t].bloch.map(|_| {
                let mut m = [0.0; 3];
                for (r, _) in at() {
                    let b = r.bloch.expect("uniform records");
                    for k in 0..3 {
                        m[k] += b[k] / samples.len() as f64;
                    }
                }
                m
            });
            let bloch_spread = mean_bloch.map(|m| {
                mean(at().map(|(r, _)| {
                    let b = r.bloch.expect("uniform records");
                    ((b[0] - m[0]).powi(2) + (b[1] - m[1]).powi(2) + (b[2] - m[2]).powi(2)).sqrt()
                }))
            });
            StepSummary {
                step: samples[0].steps[t].step,
                mean_energy_gap: mean(at().map(|(r, e)| r.energy - e)),
                mean_fidelity: mean(at().map(|(r, _)| r.fidelity)),
                mean_bloch,
                bloch_spread,
                mean_zz: samples[0].steps[t].zz.map(|_| mean(at().map(|(r, _)| r.zz.expect("uniform records")))),
            }
        })
        .collect()
}

fn two_stage(per_step: &[StepSummary]) -> Option<TwoStageSummary> {
    let last = per_step.last()?;
    // Intermediate steps exclude the initial state and the final step.
    let inner = per_step.get(1..per_step.len().saturating_sub(1)).filter(|s| !s.is_empty())?;
    if let Some(final_spread) = last.bloch_spread {
        let s = inner
            .iter()
            .min_by(|a, b| a.bloch_spread.partial_cmp(&b.bloch_spread).expect("finite"))?;
        let spread = s.bloch_spread.expect("single-qubit records");
        let center = s.mean_bloch.expect("single-qubit records");
        let radius = center.iter().map(|c| c * c).sum::<f64>().sqrt();
        return Some(TwoStageSummary {
            step: s.step,
            value: spread,
            mean_bloch: Some(center),
            final_fidelity: last.mean_fidelity,
            fidelity_at_step: s.mean_fidelity,
            observed: spread <= 0.2 && radius >= 0.8 && final_spread >= 2.0 * spread,
            criterion: "Bloch spread <= 0.2 around a mean vector of length >= 0.8 at an intermediate step, \
                        final spread at least twice as large"
                .into(),
        });
    }
    let s = inner
        .iter()
        .filter(|s| s.mean_zz.is_some())
        .max_by(|a, b| a.mean_zz.partial_cmp(&b.mean_zz).expect("finite"))?;
    let zz = s.mean_zz.expect("two-qubit records");
    Some(TwoStageSummary {
        step: s.step,
        value: zz,
        mean_bloch: None,
        final_fidelity: last.mean_fidelity,
        fidelity_at_step: s.mean_fidelity,
        observed: zz >= 0.8 && last.mean_fidelity > s.mean_fidelity,
        criterion: "mean ZZ >= 0.8 at an intermediate step, fidelity still rising afterwards".into(),
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::format(path, e.to_string())
}

fn f(x: f64) -> String {
    format!("{x:?}")
}

impl EvalReport {
    pub fn new(config: TrainConfig, options: &EvalOptions, samples: Vec<SampleRecord>) -> Self {
        let (mean_fidelity, std_fidelity, mean_gap) = aggregates(&samples);
        let per_step = step_summaries(&samples);
        Self {
            config,
            mode: options.mode,
            trajectories: options.trajectories,
            test_family: options.test_family,
            seed: options.seed,
            fidelity_convention: FIDELITY_CONVENTION.into(),
            sample_count: samples.len(),
            mean_fidelity,
            std_fidelity,
            mean_gap,
            two_stage: two_stage(&per_step),
            per_step,
            samples,
        }
    }

    /// Checks physical bounds on every record and that the aggregates match
    /// the records.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Numerical(format!("evaluation report: {msg}")));
        if self.samples.is_empty() || self.samples.len() != self.sample_count {
            return bad(format!("{} records for {} samples", self.samples.len(), self.sample_count));
        }
        for s in &self.samples {
            for r in &s.steps {
                if !(-BOUND_TOL..=1.0 + BOUND_TOL).contains(&r.fidelity) {
                    return bad(format!("sample {} step {}: fidelity {}", s.sample_id, r.step, r.fidelity));
                }
                if r.energy < s.e_min - BOUND_TOL || !r.energy.is_finite() {
                    return bad(format!(
                        "sample {} step {}: energy {} below E_min {}",
                        s.sample_id, r.step, r.energy, s.e_min
                    ));
                }
                if let Some(b) = r.bloch {
                    let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1.0 + BOUND_TOL {
                        return bad(format!("sample {} step {}: Bloch norm {norm}", s.sample_id, r.step));
                    }
                }
                if let Some(zz) = r.zz {
                    if zz.abs() > 1.0 + BOUND_TOL {
                        return bad(format!("sample {} step {}: ZZ {zz}", s.sample_id, r.step));
                    }
                }
            }
            let last = s.steps.last().expect("steps recorded");
            if s.e_final != last.energy || s.fidelity != last.fidelity {
                return bad(format!("sample {}: final values differ from the last step", s.sample_id));
            }
        }
        let (f, sd, gap) = aggregates(&self.samples);
        if f != self.mean_fidelity || sd != self.std_fidelity || gap != self.mean_gap {
            return bad("aggregates differ from the per-sample records".into());
        }
        Ok(())
    }

    /// `eval_report.csv`, `bloch_steps.csv` or `zz_steps.csv`, and
    /// `eval_summary.json` in `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_report_csv(&dir.join(REPORT_FILE))?;
        if self.samples[0].steps[0].bloch.is_some() {
            self.write_bloch_csv(&dir.join(BLOCH_FILE))?;
        }
        if self.samples[0].steps[0].zz.is_some() {
            self.write_zz_csv(&dir.join(ZZ_FILE))?;
        }
        self.write_summary(&dir.join(SUMMARY_FILE))
    }

    pub fn write_report_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        let mut header: Vec<String> = ["sample_id", "E_min", "E_final", "fidelity"].map(String::from).to_vec();
        for r in &self.samples[0].steps {
            let t = r.step;
            header.push(format!("energy_{t}"));
            header.push(format!("fidelity_{t}"));
            if r.bloch.is_some() {
                header.extend([format!("bloch_x_{t}"), format!("bloch_y_{t}"), format!("bloch_z_{t}")]);
            }
            if r.zz.is_some() {
                header.push(format!("zz_{t}"));
            }
        }
        w.write_record(&header).map_err(csv_err(path))?;
        for s in &self.samples {
            let mut row = vec![s.sample_id.to_string(), f(s.e_min), f(s.e_final), f(s.fidelity)];
            for r in &s.steps {
                row.push(f(r.energy));
                row.push(f(r.fidelity));
                if let Some(b) = r.bloch {
                    row.extend(b.map(f));
                }
                if let Some(zz) = r.zz {
                    row.push(f(zz));
                }
            }
            w.write_record(&row).map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_bloch_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        w.write_record(["sample_id", "step", "x", "y", "z"]).map_err(csv_err(path))?;
        for s in &self.samples {
            for r in &s.steps {
                if let Some([x, y, z]) = r.bloch {
                    w.write_record([s.sample_id.to_string(), r.step.to_string(), f(x), f(y), f(z)])
                        .map_err(csv_err(path))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_zz_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        w.write_record(["sample_id", "step", "zz", "fidelity"]).map_err(csv_err(path))?;
        for s in &self.samples {
            for r in &s.steps {
                if let Some(zz) = r.zz {
                    w.write_record([s.sample_id.to_string(), r.step.to_string(), f(zz), f(r.fidelity)])
                        .map_err(csv_err(path))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
