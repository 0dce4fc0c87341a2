//! Operating-grid sweeps and the forgetting ablation.
//!
//! Every cell runs the same controller hyperparameters against a different
//! emulator setting. Cells are independent and run on the rayon pool; a
//! failure in one cell is reported in its row without stopping the sweep.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;

use crate::experiment::{
    run_experiment, ExperimentRecord, ExperimentSpec, PlantChange, METRIC_DEFINITION,
};
use crate::plant::{operating_grid, GridPoint};

/// Metrics of one completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub reference_rms: f64,
    pub final_rms: f64,
    pub attenuation_db: f64,
    pub suppression_time: Option<f64>,
    pub peak_frequency: f64,
    pub peak_attenuation_db: f64,
    pub max_abs_control: f64,
    pub fallback_count: usize,
    pub resuppression_time: Option<f64>,
    pub budget_violations: usize,
}

impl CellMetrics {
    pub fn from_record(rec: &ExperimentRecord) -> crate::error::Result<Self> {
        let (peak_attenuation_db, peak_frequency) = rec.peak_attenuation_db()?;
        Ok(Self {
            reference_rms: rec.reference_rms(),
            final_rms: rec.final_rms(),
            attenuation_db: rec.attenuation_db(),
            suppression_time: rec.suppression_time(),
            peak_frequency,
            peak_attenuation_db,
            max_abs_control: rec.max_abs_control(),
            fallback_count: rec.fallback_count(),
            resuppression_time: rec.resuppression_time(),
            budget_violations: rec.budget_violations(),
        })
    }
}

/// One row of a grid sweep.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub index: usize,
    pub point: GridPoint,
    pub outcome: Result<(CellMetrics, ExperimentRecord), String>,
}

impl GridCell {
    pub fn metrics(&self) -> Option<&CellMetrics> {
        self.outcome.as_ref().ok().map(|(m, _)| m)
    }

    pub fn record(&self) -> Option<&ExperimentRecord> {
        self.outcome.as_ref().ok().map(|(_, r)| r)
    }
}

/// `base` with the emulator replaced by grid cell `index`. The noise seed is
/// offset by the cell index so cells are reproducible and distinct.
pub fn cell_spec(base: &ExperimentSpec, point: &GridPoint, index: usize) -> ExperimentSpec {
    let mut spec = base.clone();
    spec.plant = point.params;
    spec.plant.seed = base.plant.seed.wrapping_add(index as u64);
    spec
}

fn run_cell(spec: &ExperimentSpec) -> Result<(CellMetrics, ExperimentRecord), String> {
    let rec = run_experiment(spec).map_err(|e| e.to_string())?;
    let m = CellMetrics::from_record(&rec).map_err(|e| e.to_string())?;
    Ok((m, rec))
}

/// Runs all nine grid cells with the controller and timing of `base`.
pub fn run_grid(base: &ExperimentSpec) -> Vec<GridCell> {
    operating_grid()
        .into_par_iter()
        .enumerate()
        .map(|(index, point)| GridCell {
            index,
            point,
            outcome: run_cell(&cell_spec(base, &point, index)),
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |t| format!("{t:.3}"))
}

/// Writes the grid summary table with its metric definition as a comment.
pub fn write_grid_summary<W: Write>(cells: &[GridCell], mut out: W) -> anyhow::Result<()> {
    writeln!(out, "# {METRIC_DEFINITION}")?;
    writeln!(
        out,
        "cell,x_us,v_rms,freq_hz,mu,status,suppression_time_s,attenuation_db,peak_hz,peak_attenuation_db,max_abs_u,fallbacks,budget_violations"
    )?;
    for c in cells {
        let p = &c.point;
        let head = format!(
            "{},{},{},{:.1},{:.3}",
            c.index,
            p.x_us,
            p.v_rms,
            p.params.frequency_hz(),
            p.params.mu
        );
        match &c.outcome {
            Ok((m, _)) => writeln!(
                out,
                "{head},ok,{},{:.2},{:.1},{:.2},{:.4},{},{}",
                opt(m.suppression_time),
                m.attenuation_db,
                m.peak_frequency,
                m.peak_attenuation_db,
                m.max_abs_control,
                m.fallback_count,
                m.budget_violations
            )?,
            Err(e) => writeln!(out, "{head},failed: {},,,,,,,", e.replace(',', ";"))?,
        }
    }
    Ok(())
}

/// Writes the summary and one record file per cell into `dir`.
pub fn save_grid(cells: &[GridCell], dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for c in cells {
        if let Some(rec) = c.record() {
            rec.save(&dir.join(format!("cell_{}.csv", c.index)))?;
        }
    }
    let file = std::fs::File::create(dir.join("grid_summary.csv"))?;
    write_grid_summary(cells, std::io::BufWriter::new(file))
}

/// Paired runs of one cell with and without forgetting.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub index: usize,
    pub point: GridPoint,
    pub with_forgetting: Result<CellMetrics, String>,
    pub without_forgetting: Result<CellMetrics, String>,
}

impl AblationCell {
    /// Whether forgetting re-suppressed no later than the fixed-rate
    /// estimator. A run that never re-settles counts as infinitely slow.
    pub fn forgetting_not_slower(&self) -> Option<bool> {
        let with = self.with_forgetting.as_ref().ok()?;
        let without = self.without_forgetting.as_ref().ok()?;
        let t = |m: &CellMetrics| m.resuppression_time.unwrap_or(f64::INFINITY);
        Some(t(with) <= t(without))
    }
}

/// Default plant change for the ablation: 10% frequency increase one second
/// after the switch.
pub fn default_change(base: &ExperimentSpec) -> PlantChange {
    PlantChange {
        at: base.t_open + 1.0,
        omega_factor: 1.1,
    }
}

/// Runs every grid cell twice with identical seeds and plant change, once
/// with the forgetting gain of `base` and once with it set to zero.
pub fn run_ablation(base: &ExperimentSpec) -> Vec<AblationCell> {
    let mut base = base.clone();
    if base.change.is_none() {
        base.change = Some(default_change(&base));
    }
    operating_grid()
        .into_par_iter()
        .enumerate()
        .map(|(index, point)| {
            let with = cell_spec(&base, &point, index);
            let mut without = with.clone();
            without.controller.forgetting.eta = 0.0;
            AblationCell {
                index,
                point,
                with_forgetting: run_cell(&with).map(|(m, _)| m),
                without_forgetting: run_cell(&without).map(|(m, _)| m),
            }
        })
        .collect()
}

pub fn write_ablation_summary<W: Write>(cells: &[AblationCell], mut out: W) -> anyhow::Result<()> {
    writeln!(
        out,
        "# re-suppression time = time from the plant change until the trailing 0.1 s RMS stays below 1% of the \
         pre-switch RMS; 'none' = not settled by the end of the run"
    )?;
    writeln!(
        out,
        "cell,x_us,v_rms,suppression_eta,suppression_eta0,resuppression_eta,resuppression_eta0,forgetting_not_slower"
    )?;
    let fmt = |r: &Result<CellMetrics, String>| match r {
        Ok(m) => (opt(m.suppression_time), opt(m.resuppression_time)),
        Err(_) => ("failed".into(), "failed".into()),
    };
    for c in cells {
        let (s1, r1) = fmt(&c.with_forgetting);
        let (s0, r0) = fmt(&c.without_forgetting);
        let verdict = c
            .forgetting_not_slower()
            .map_or("n/a".to_string(), |b| b.to_string());
        writeln!(
            out,
            "{},{},{},{s1},{s0},{r1},{r0},{verdict}",
            c.index, c.point.x_us, c.point.v_rms
        )?;
    }
    Ok(())
}
