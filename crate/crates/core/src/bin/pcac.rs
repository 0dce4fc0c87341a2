use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pcac::experiment::{read_record_outputs, write_spectrum, METRIC_DEFINITION};
use pcac::grid::{save_grid, write_ablation_summary, write_grid_summary, CellMetrics};
use pcac::{amplitude_spectrum, run_ablation, run_experiment, run_grid, ExperimentSpec, SpecFile};

#[derive(Parser)]
#[command(
    name = "pcac",
    version,
    about = "Adaptive predictive control of a self-excited oscillator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Spec file (flat `section.key = value` lines). Defaults are used when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the plant noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single open-loop/closed-loop experiment.
    Run {
        #[command(flatten)]
        common: Common,
        /// Keep the controller disconnected for the whole run.
        #[arg(long)]
        open_loop_only: bool,
    },
    /// Sweep the 3 x 3 operating grid.
    Grid {
        #[command(flatten)]
        common: Common,
    },
    /// Amplitude spectra of a record file, split by phase.
    Spectrum {
        /// Record file written by `run` or `grid`.
        record: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Paired comparison of forgetting on and off after a plant change.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Print the default spec file.
    DefaultSpec,
}

fn load_spec(common: &Common) -> Result<(SpecFile, ExperimentSpec)> {
    let mut file = match &common.spec {
        Some(p) => SpecFile::load(p)?,
        None => SpecFile::default(),
    };
    if let Some(seed) = common.seed {
        file.plant.seed = seed;
    }
    let spec = file.to_experiment()?;
    Ok((file, spec))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or_else(|| "not reached".into(), |t| format!("{t:.3} s"))
}

fn cmd_run(common: &Common, open_loop_only: bool) -> Result<ExitCode> {
    let (file, mut spec) = load_spec(common)?;
    if open_loop_only {
        spec = spec.open_loop_only();
    }
    let rec = run_experiment(&spec)?;
    create(&common.out, "spec.txt")?.write_all(file.render().as_bytes())?;
    rec.save(&common.out.join("record.csv"))?;

    let y = rec.outputs();
    write_spectrum(
        &amplitude_spectrum(&y, spec.ts)?,
        create(&common.out, "spectrum.csv")?,
    )?;

    let mut summary = create(&common.out, "summary.txt")?;
    writeln!(summary, "# {METRIC_DEFINITION}")?;
    writeln!(summary, "rows = {}", rec.rows.len())?;
    writeln!(summary, "reference_rms = {}", rec.reference_rms())?;
    if rec.has_closed_loop() {
        let m = CellMetrics::from_record(&rec)?;
        write_spectrum(
            &rec.open_loop_spectrum()?,
            create(&common.out, "spectrum_open.csv")?,
        )?;
        write_spectrum(
            &rec.closed_loop_spectrum()?,
            create(&common.out, "spectrum_closed.csv")?,
        )?;
        writeln!(summary, "final_rms = {}", m.final_rms)?;
        writeln!(summary, "attenuation_db = {:.2}", m.attenuation_db)?;
        writeln!(
            summary,
            "suppression_time = {}",
            fmt_time(m.suppression_time)
        )?;
        writeln!(summary, "peak_hz = {:.1}", m.peak_frequency)?;
        writeln!(
            summary,
            "peak_attenuation_db = {:.2}",
            m.peak_attenuation_db
        )?;
        writeln!(summary, "max_abs_u = {}", m.max_abs_control)?;
        writeln!(summary, "fallbacks = {}", m.fallback_count)?;
        if rec.change_step.is_some() {
            writeln!(
                summary,
                "resuppression_time = {}",
                fmt_time(m.resuppression_time)
            )?;
        }
        let mean = rec.step_seconds.iter().sum::<f64>() / rec.step_seconds.len().max(1) as f64;
        writeln!(summary, "mean_step_us = {:.1}", mean * 1e6)?;
        writeln!(summary, "budget_violations = {}", m.budget_violations)?;
        println!(
            "suppression time {}, attenuation {:.1} dB, max |u| {:.3}",
            fmt_time(m.suppression_time),
            m.attenuation_db,
            m.max_abs_control
        );
        if m.fallback_count > 0 {
            eprintln!(
                "{} optimizer failures (previous control held)",
                m.fallback_count
            );
            return Ok(ExitCode::FAILURE);
        }
    } else {
        println!("open-loop run, reference RMS {:.3}", rec.reference_rms());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_grid(common: &Common) -> Result<ExitCode> {
    let (_, spec) = load_spec(common)?;
    let cells = run_grid(&spec);
    save_grid(&cells, &common.out)?;
    write_grid_summary(&cells, std::io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_spectrum(record: &Path, out: &Path) -> Result<ExitCode> {
    let rows = read_record_outputs(record)?;
    if rows.len() < 2 {
        bail!("record {} has fewer than two rows", record.display());
    }
    let ts = rows[1].0 - rows[0].0;
    let all: Vec<f64> = rows.iter().map(|r| r.2).collect();
    write_spectrum(&amplitude_spectrum(&all, ts)?, create(out, "spectrum.csv")?)?;
    for (closed, name) in [(false, "spectrum_open.csv"), (true, "spectrum_closed.csv")] {
        let part: Vec<f64> = rows.iter().filter(|r| r.1 == closed).map(|r| r.2).collect();
        if !part.is_empty() {
            write_spectrum(&amplitude_spectrum(&part, ts)?, create(out, name)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ablate(common: &Common) -> Result<ExitCode> {
    let (_, mut spec) = load_spec(common)?;
    if spec.change.is_none() {
        spec.t_total = spec.t_total.max(spec.t_open + 3.0);
    }
    let cells = run_ablation(&spec);
    let mut file = create(&common.out, "ablation_summary.csv")?;
    write_ablation_summary(&cells, &mut file)?;
    write_ablation_summary(&cells, std::io::stdout().lock())?;
    let wins = cells
        .iter()
        .filter(|c| c.forgetting_not_slower() == Some(true))
        .count();
    println!("forgetting not slower on {wins} of {} cells", cells.len());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            common,
            open_loop_only,
        } => cmd_run(common, *open_loop_only),
        Command::Grid { common } => cmd_grid(common),
        Command::Spectrum { record, out } => cmd_spectrum(record, out),
        Command::Ablate { common } => cmd_ablate(common),
        Command::DefaultSpec => {
            print!("{}", SpecFile::default().render());
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
