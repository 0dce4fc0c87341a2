//! Open-loop then closed-loop experiments against the emulator.
//!
//! A run starts with the controller disconnected so the oscillation can
//! develop, then switches the controller on at `t_open`. Row `k` of the
//! resulting record holds the measurement `y_k`, the requested and implemented
//! controls `u_req,k` and `u_k` (held over `[k T_s, (k+1) T_s)`), and the
//! coefficient estimate after the update at step `k`.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use nalgebra::DVector;

use crate::controller::{Pcac, PcacConfig};
use crate::error::{PcacError, Result};
use crate::plant::{plant_output, plant_zoh_step_with, EmulatorParams, NoiseSource, PlantState};
use crate::spectrum::{amplitude_spectrum, SpectralLine};

/// Length of the trailing RMS window used for suppression times (s).
pub const SUPPRESSION_WINDOW: f64 = 0.1;
/// Fraction of the pre-switch RMS that counts as suppressed (1%, i.e. -40 dB).
pub const SUPPRESSION_FRACTION: f64 = 0.01;
/// Window before the switch over which the reference RMS is taken (s).
pub const REFERENCE_WINDOW: f64 = 0.5;
/// Window at the end of the run over which the final RMS is taken (s).
pub const FINAL_WINDOW: f64 = 0.5;
/// Window length for the open- and closed-loop spectra (s).
pub const SPECTRUM_WINDOW: f64 = 1.0;
/// Per-step compute budget (s).
pub const STEP_BUDGET: f64 = 1e-3;

/// Definition of the suppression metrics, written at the top of summaries.
pub const METRIC_DEFINITION: &str = "suppression time = first time after the switch at which the trailing 0.1 s RMS \
     of y falls below 1% of the RMS over the 0.5 s before the switch; attenuation = 20 log10 of the final 0.5 s RMS \
     over that reference RMS";

/// Abrupt emulator frequency change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantChange {
    pub at: f64,
    pub omega_factor: f64,
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub plant: EmulatorParams,
    pub initial: PlantState,
    pub controller: PcacConfig,
    pub ts: f64,
    pub t_open: f64,
    pub t_total: f64,
    pub substeps: usize,
    pub change: Option<PlantChange>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.controller.validate()?;
        let bad = |m: String| Err(PcacError::InvalidConfig(m));
        if !(self.ts > 0.0) || self.substeps == 0 {
            return bad("sample time and substeps must be positive".into());
        }
        if !(self.t_open >= 0.0 && self.t_open <= self.t_total) {
            return bad(format!(
                "need 0 <= t_open <= t_total (t_open={}, t_total={})",
                self.t_open, self.t_total
            ));
        }
        for (name, v) in [("t_open", self.t_open), ("t_total", self.t_total)] {
            let steps = v / self.ts;
            if (steps - steps.round()).abs() > 1e-6 {
                return bad(format!(
                    "{name} = {v} is not a multiple of ts = {}",
                    self.ts
                ));
            }
        }
        if let Some(c) = self.change {
            if !(c.omega_factor > 0.0) {
                return bad("omega_factor must be positive".into());
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        (self.t_total / self.ts).round() as usize
    }

    pub fn open_steps(&self) -> usize {
        (self.t_open / self.ts).round() as usize
    }

    /// Same spec with the closed-loop phase removed.
    pub fn open_loop_only(mut self) -> Self {
        self.t_open = self.t_total;
        self
    }
}

/// One logged sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub step: usize,
    pub t: f64,
    pub closed_loop: bool,
    pub y: f64,
    pub u_requested: f64,
    pub u: f64,
    pub beta: f64,
    pub fallback: bool,
    pub theta: Vec<f64>,
}

/// Full log of a run. Wall-clock timings are kept apart from the rows so the
/// written record is reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub ts: f64,
    pub open_steps: usize,
    pub change_step: Option<usize>,
    pub rows: Vec<RecordRow>,
    /// Controller compute time per closed-loop step (s).
    pub step_seconds: Vec<f64>,
}

/// Runs the experiment described by `spec`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentRecord> {
    spec.validate()?;
    let n = spec.total_steps();
    let k_open = spec.open_steps();
    let change_step = spec.change.map(|c| (c.at / spec.ts).round() as usize);

    let mut params = spec.plant;
    let mut plant = spec.initial;
    let mut noise = NoiseSource::new(params.noise_std, params.seed);
    let mut controller: Option<Pcac> = None;
    let theta0 = spec.controller.theta0.as_vector().as_slice().to_vec();

    let mut rows = Vec::with_capacity(n + 1);
    let mut step_seconds = Vec::with_capacity(n + 1 - k_open.min(n + 1));
    let mut u = 0.0;
    let mut u_req = 0.0;

    for k in 0..=n {
        if Some(k) == change_step {
            params.omega *= spec
                .change
                .expect("change step implies change")
                .omega_factor;
        }
        let y = plant_output(&plant, &params, &mut noise);
        let closed = k >= k_open && k_open < n;

        let (mut u_next, mut u_req_next) = (0.0, 0.0);
        let (mut beta, mut fallback, mut theta) = (1.0, false, None);
        if closed {
            if controller.is_none() {
                let c = Pcac::new(spec.controller.clone())?;
                u = c.state().u_implemented[0];
                u_req = c.state().u_requested[0];
                controller = Some(c);
            }
            let c = controller.as_mut().expect("controller initialized");
            let start = Instant::now();
            let out = c.step(&DVector::from_element(1, y))?;
            step_seconds.push(start.elapsed().as_secs_f64());
            u_next = out.u_implemented[0];
            u_req_next = out.u_requested[0];
            beta = out.beta;
            fallback = out.fallback.is_some();
            theta = Some(c.theta().as_vector().as_slice().to_vec());
        }

        rows.push(RecordRow {
            step: k,
            t: k as f64 * spec.ts,
            closed_loop: closed,
            y,
            u_requested: u_req,
            u,
            beta,
            fallback,
            theta: theta.unwrap_or_else(|| theta0.clone()),
        });

        if k < n {
            plant = plant_zoh_step_with(plant, u, &params, spec.ts, spec.substeps)?;
        }
        u = u_next;
        u_req = u_req_next;
    }

    Ok(ExperimentRecord {
        ts: spec.ts,
        open_steps: k_open,
        change_step,
        rows,
        step_seconds,
    })
}

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

fn steps(seconds: f64, ts: f64) -> usize {
    (seconds / ts).round() as usize
}

impl ExperimentRecord {
    pub fn outputs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn has_closed_loop(&self) -> bool {
        self.rows.iter().any(|r| r.closed_loop)
    }

    pub fn fallback_count(&self) -> usize {
        self.rows.iter().filter(|r| r.fallback).count()
    }

    /// RMS of `y` over the reference window before the switch.
    pub fn reference_rms(&self) -> f64 {
        let y = self.outputs();
        let end = self.open_steps.min(y.len());
        let start = end.saturating_sub(steps(REFERENCE_WINDOW, self.ts));
        rms(&y[start..end])
    }

    /// RMS of `y` over the final window of the run.
    pub fn final_rms(&self) -> f64 {
        let y = self.outputs();
        let start = y.len().saturating_sub(steps(FINAL_WINDOW, self.ts));
        rms(&y[start..])
    }

    /// Final RMS relative to the reference RMS, in dB.
    pub fn attenuation_db(&self) -> f64 {
        20.0 * (self.final_rms() / self.reference_rms()).log10()
    }

    fn suppressed_threshold(&self) -> f64 {
        SUPPRESSION_FRACTION * self.reference_rms()
    }

    /// Time after the switch at which the trailing RMS first falls below the
    /// threshold; `None` if it never does. The trailing window only covers
    /// closed-loop samples.
    pub fn suppression_time(&self) -> Option<f64> {
        if !self.has_closed_loop() {
            return None;
        }
        let y = self.outputs();
        let w = steps(SUPPRESSION_WINDOW, self.ts);
        let threshold = self.suppressed_threshold();
        (self.open_steps + w..=y.len())
            .find(|&end| rms(&y[end - w..end]) < threshold)
            .map(|end| (end - 1 - self.open_steps) as f64 * self.ts)
    }

    /// Settling time after the plant change: time from the change until the
    /// trailing RMS stays below the threshold for the rest of the run. Zero
    /// when the output never leaves the suppressed band; `None` when it has
    /// not settled by the end of the run or there was no change.
    pub fn resuppression_time(&self) -> Option<f64> {
        let kc = self.change_step?;
        let y = self.outputs();
        let w = steps(SUPPRESSION_WINDOW, self.ts);
        let threshold = self.suppressed_threshold();
        let first = kc.max(w);
        if first > y.len() {
            return None;
        }
        let last_bad = (first..=y.len())
            .rev()
            .find(|&end| rms(&y[end - w..end]) >= threshold);
        match last_bad {
            None => Some(0.0),
            Some(end) if end == y.len() => None,
            Some(end) => Some((end - kc) as f64 * self.ts),
        }
    }

    /// Largest implemented control magnitude.
    pub fn max_abs_control(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.u.abs()))
    }

    /// Spectrum of the last `SPECTRUM_WINDOW` seconds before the switch.
    pub fn open_loop_spectrum(&self) -> Result<Vec<SpectralLine>> {
        let y = self.outputs();
        let end = self.open_steps.min(y.len());
        let start = end.saturating_sub(steps(SPECTRUM_WINDOW, self.ts));
        amplitude_spectrum(&y[start..end], self.ts)
    }

    /// Spectrum of the last `SPECTRUM_WINDOW` seconds of the run.
    pub fn closed_loop_spectrum(&self) -> Result<Vec<SpectralLine>> {
        let y = self.outputs();
        let start = y
            .len()
            .saturating_sub(steps(SPECTRUM_WINDOW, self.ts))
            .max(self.open_steps);
        amplitude_spectrum(&y[start..], self.ts)
    }

    /// Attenuation of the open-loop dominant peak in the closed-loop spectrum
    /// (dB, negative when reduced), with the peak frequency. Both spectra use
    /// windows of equal length so their bins coincide.
    pub fn peak_attenuation_db(&self) -> Result<(f64, f64)> {
        let open = self.open_loop_spectrum()?;
        let closed = self.closed_loop_spectrum()?;
        if open.len() != closed.len() {
            return Err(PcacError::InvalidConfig(
                "open- and closed-loop spectrum windows differ in length".into(),
            ));
        }
        let (idx, peak) = open
            .iter()
            .enumerate()
            .skip(1)
            .max_by(|a, b| a.1.amplitude.total_cmp(&b.1.amplitude))
            .ok_or(PcacError::EmptySignal)?;
        Ok((
            20.0 * (closed[idx].amplitude / peak.amplitude).log10(),
            peak.frequency,
        ))
    }

    /// Number of closed-loop steps whose compute time exceeded the budget.
    pub fn budget_violations(&self) -> usize {
        self.step_seconds
            .iter()
            .filter(|s| **s > STEP_BUDGET)
            .count()
    }

    /// Writes the per-step record as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n_theta = self.rows.first().map_or(0, |r| r.theta.len());
        let mut header: Vec<String> = ["step", "t", "phase", "y", "u_req", "u", "beta", "fallback"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..n_theta).map(|i| format!("theta_{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.step.to_string(),
                r.t.to_string(),
                if r.closed_loop { "closed" } else { "open" }.to_string(),
                r.y.to_string(),
                r.u_requested.to_string(),
                r.u.to_string(),
                r.beta.to_string(),
                u8::from(r.fallback).to_string(),
            ];
            rec.extend(r.theta.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let file =
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Reads the `t` and `y` columns (and phase) back from a record file.
pub fn read_record_outputs(path: &Path) -> anyhow::Result<Vec<(f64, bool, f64)>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("record has no `{name}` column"))
    };
    let (ti, pi, yi) = (col("t")?, col("phase")?, col("y")?);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        out.push((row[ti].parse()?, &row[pi] == "closed", row[yi].parse()?));
    }
    Ok(out)
}

/// Writes `frequency,amplitude` lines.
pub fn write_spectrum<W: Write>(spectrum: &[SpectralLine], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frequency_hz", "amplitude"])?;
    for l in spectrum {
        w.write_record([l.frequency.to_string(), l.amplitude.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
