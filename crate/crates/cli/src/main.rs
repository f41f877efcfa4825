//! gravojcm: simulate, cross-check and plot the damped falling-atom JCM.

mod format;
mod record;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gravojcm::config::{parse_config, FormulaMode, RunConfig, TraceMode};
use gravojcm::observables::{ObservableSeries, OBSERVABLES};
use gravojcm::oracle::{compare_columns, regime, simulate_oracle, Discrepancy, Regime};
use gravojcm::run::{simulate, threads_from_env};

use crate::format::sig12;
use crate::record::{
    load_run, observables_csv, photons_csv, write_files, write_record, Overrides, RunRecord, OBSERVABLES_CSV,
    PHOTONS_CSV,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, flags or mismatched inputs: exit 2.
    Config(String),
    /// Reading or writing files failed: exit 3.
    Io(String),
    /// Oracle cost over budget: exit 4.
    Budget(String),
    /// Numerical breakdown (step underflow, overflow): exit 5.
    Numerical(String),
    /// Comparison above threshold: exit 1.
    Threshold(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Threshold(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Budget(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }
}

impl From<gravojcm::Error> for CliError {
    fn from(e: gravojcm::Error) -> Self {
        use gravojcm::Error as E;
        let msg = e.to_string();
        match e {
            E::Budget { .. } => CliError::Budget(msg),
            E::StepUnderflow { .. } | E::Overflow { .. } => CliError::Numerical(msg),
            _ => CliError::Config(msg),
        }
    }
}

#[derive(Parser)]
#[command(name = "gravojcm", version, about = "Phase-damped Jaynes-Cummings model of an atom falling through a cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the analytic solution on the configured grid.
    Simulate(RunArgs),
    /// Integrate the master equation directly (reference solution).
    Oracle(RunArgs),
    /// Compare the observables of two run directories.
    Compare(CompareArgs),
    /// Sweep qg over {0, 0.5e7, 1.5e7} and write SVG figures with backing CSVs.
    Figures(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Paper,
    BlockExact,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceArg {
    Paper,
    Consistent,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long = "trace-mode", value_enum)]
    trace_mode: Option<TraceArg>,
    /// Override q·g (rad/s²).
    #[arg(long)]
    qg: Option<f64>,
    /// Override the damping rate (in the config's gamma_units).
    #[arg(long)]
    gamma: Option<f64>,
    /// Reserved. Nothing here is random; setting it is an error.
    #[arg(long)]
    seedless: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// First run directory.
    run_a: PathBuf,
    /// Second run directory.
    run_b: PathBuf,
    /// Exit 1 if any compared max-abs difference exceeds this.
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated observables the threshold applies to.
    #[arg(long, value_delimiter = ',')]
    observables: Option<Vec<String>>,
    /// Directory for discrepancy.csv and discrepancy.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_run(&a, false),
        Command::Oracle(a) => cmd_run(&a, true),
        Command::Compare(a) => cmd_compare(&a),
        Command::Figures(a) => cmd_figures(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Threshold(m) => eprintln!("{m}"),
                CliError::Config(m) => eprintln!("error: {m}"),
                CliError::Io(m) => eprintln!("i/o error: {m}"),
                CliError::Budget(m) => eprintln!("refused: {m}"),
                CliError::Numerical(m) => eprintln!("numerical failure: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}

/// Reads the config, applies command-line overrides, validates.
fn resolve_config(a: &RunArgs) -> Result<(RunConfig, Overrides), CliError> {
    if a.seedless {
        return Err(CliError::Config(
            "--seedless is reserved: every computation here is deterministic and uses no RNG".into(),
        ));
    }
    let text = fs::read_to_string(&a.config)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", a.config.display())))?;
    let mut cfg = parse_config(&text)?;
    let mut ov = Overrides::default();
    if let Some(qg) = a.qg {
        cfg.physical.qg = qg;
        cfg.physical.gravity_angle = None;
        ov.qg = Some(qg);
    }
    if let Some(g) = a.gamma {
        cfg.physical.gamma = g;
        ov.gamma = Some(g);
    }
    if let Some(m) = a.mode {
        cfg.numerics.mode = match m {
            ModeArg::Paper => FormulaMode::PaperFaithful,
            ModeArg::BlockExact => FormulaMode::BlockExact,
        };
        ov.mode = Some(format!("{:?}", cfg.numerics.mode));
    }
    if let Some(t) = a.trace_mode {
        cfg.numerics.trace_mode = match t {
            TraceArg::Paper => TraceMode::PaperFaithful,
            TraceArg::Consistent => TraceMode::TraceConsistent,
        };
        ov.trace_mode = Some(format!("{:?}", cfg.numerics.trace_mode));
    }
    cfg.validate()?;
    Ok((cfg, ov))
}

fn cmd_run(a: &RunArgs, oracle: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let (cfg, ov) = resolve_config(a)?;
    let threads = threads_from_env();
    let (series, extra) = if oracle {
        // budget is checked before anything is written
        let run = simulate_oracle(&cfg, threads)?;
        (run.series, Some((run.cost, run.nodes)))
    } else {
        (simulate(&cfg, threads)?, None)
    };
    let manifest = write_files(
        &a.out,
        &[(OBSERVABLES_CSV, &observables_csv(&series)), (PHOTONS_CSV, &photons_csv(&series))],
    )?;
    let command = if oracle { "oracle" } else { "simulate" };
    let mut rec = RunRecord::new(command, &cfg, &a.config, ov, regime(&cfg), threads, &series);
    if let Some((cost, nodes)) = extra {
        rec = rec.with_oracle(&cost, &nodes);
    }
    rec.manifest = manifest;
    rec.wall_seconds = start.elapsed().as_secs_f64();
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    write_record(&a.out, &rec)?;
    println!(
        "{command}: {} time points, {} written to {}",
        series.len(),
        OBSERVABLES_CSV,
        a.out.display()
    );
    Ok(())
}

fn discrepancy_table(rows: &[Discrepancy]) -> String {
    let mut s = format!("{:<10} {:>14} {:>14} {:>12}\n", "observable", "max_abs", "rms", "n_nonfinite");
    for r in rows {
        s.push_str(&format!("{:<10} {:>14.6e} {:>14.6e} {:>12}\n", r.observable, r.max_abs, r.rms, r.n_nonfinite));
    }
    s
}

fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let ra = load_run(&a.run_a)?;
    let rb = load_run(&a.run_b)?;
    if ra.record.param_hash != rb.record.param_hash {
        return Err(CliError::Config(format!(
            "parameter hashes differ ({} vs {}); the runs describe different physics or grids",
            ra.record.param_hash, rb.record.param_hash
        )));
    }
    let (ta, tb) = (ra.column("lambda_t").unwrap_or_default(), rb.column("lambda_t").unwrap_or_default());
    if ta.len() != tb.len() || ta.iter().zip(tb).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0)) {
        return Err(CliError::Config("time grids differ".into()));
    }
    let names: Vec<&str> = OBSERVABLES.iter().copied().chain(["trace"]).collect();
    let rows: Vec<Discrepancy> = names
        .iter()
        .map(|n| compare_columns(n, ra.column(n).unwrap_or_default(), rb.column(n).unwrap_or_default()))
        .collect();
    let regime_tag: Regime = ra.record.regime;
    println!(
        "{} ({}, {}) vs {} ({}, {}); regime: {:?}",
        a.run_a.display(),
        ra.record.origin,
        ra.record.mode,
        a.run_b.display(),
        rb.record.origin,
        rb.record.mode,
        regime_tag
    );
    print!("{}", discrepancy_table(&rows));

    if let Some(dir) = &a.out {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["observable", "max_abs", "rms", "n_nonfinite"]).unwrap();
        for r in &rows {
            w.write_record([r.observable.clone(), sig12(r.max_abs), sig12(r.rms), r.n_nonfinite.to_string()])
                .unwrap();
        }
        let body = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let json = serde_json::to_string_pretty(&serde_json::json!({
            "run_a": a.run_a.display().to_string(),
            "run_b": a.run_b.display().to_string(),
            "origin_a": ra.record.origin,
            "origin_b": rb.record.origin,
            "mode_a": ra.record.mode,
            "mode_b": rb.record.mode,
            "param_hash": ra.record.param_hash,
            "regime": regime_tag,
            "threshold": a.threshold,
            "rows": rows,
        }))
        .unwrap();
        write_files(dir, &[("discrepancy.csv", &body), ("discrepancy.json", &json)])?;
    }

    if let Some(th) = a.threshold {
        let selected: Vec<&str> = match &a.observables {
            Some(v) => v.iter().map(String::as_str).collect(),
            None => OBSERVABLES.to_vec(),
        };
        if let Some(bad) = selected.iter().find(|n| !names.contains(n)) {
            return Err(CliError::Config(format!("unknown observable `{bad}`")));
        }
        let over: Vec<&Discrepancy> = rows
            .iter()
            .filter(|r| selected.contains(&r.observable.as_str()) && (r.max_abs > th || r.n_nonfinite > 0))
            .collect();
        if !over.is_empty() {
            let list: Vec<String> = over.iter().map(|r| format!("{} ({:.3e})", r.observable, r.max_abs)).collect();
            return Err(CliError::Threshold(format!("above threshold {th:e}: {}", list.join(", "))));
        }
    }
    Ok(())
}

/// qg values of the figure sweep, with file-name labels.
pub const FIGURE_QG: [(f64, &str); 3] = [(0.0, "0"), (0.5e7, "0.5e7"), (1.5e7, "1.5e7")];

struct Family {
    file: &'static str,
    title: &'static str,
    y_label: &'static str,
    columns: &'static [&'static str],
}

const FAMILIES: [Family; 5] = [
    Family { file: "fig1_inversion", title: "Atomic population inversion", y_label: "W", columns: &["W"] },
    Family { file: "fig2_dipole_squeezing", title: "Atomic dipole squeezing", y_label: "F", columns: &["F1", "F2"] },
    Family { file: "fig3_momentum_diffusion", title: "Atomic momentum diffusion", y_label: "Δp", columns: &["delta_p"] },
    Family { file: "fig4_mandel_q", title: "Mandel parameter", y_label: "Q", columns: &["Q"] },
    Family { file: "fig5_quadrature_squeezing", title: "Quadrature squeezing", y_label: "S", columns: &["S1", "S2"] },
];

const COLORS: [&str; 2] = ["#1f4e99", "#c0392b"];

fn cmd_figures(a: &RunArgs) -> Result<(), CliError> {
    if a.qg.is_some() {
        return Err(CliError::Config("figures sweeps qg itself; --qg is not accepted here".into()));
    }
    let (base, _) = resolve_config(a)?;
    let threads = threads_from_env();
    let mut runs: Vec<(&str, ObservableSeries)> = Vec::new();
    for (qg, label) in FIGURE_QG {
        let mut cfg = base.clone();
        cfg.physical.qg = qg;
        cfg.physical.gravity_angle = None;
        cfg.validate()?;
        runs.push((label, simulate(&cfg, threads)?));
    }
    let mut files: Vec<(String, String)> = Vec::new();
    for (label, series) in &runs {
        files.push((format!("figures_qg{label}.csv"), observables_csv(series)));
        for fam in &FAMILIES {
            let cols: Vec<Vec<f64>> = fam.columns.iter().map(|c| series.column(c).unwrap()).collect();
            let lines: Vec<svg::Series> = fam
                .columns
                .iter()
                .zip(&cols)
                .zip(COLORS)
                .map(|((name, y), color)| svg::Series { label: name, y, color })
                .collect();
            let title = format!("{} (q·g = {label})", fam.title);
            let body = svg::line_plot(&title, "λt", fam.y_label, &series.lambda_t, &lines);
            files.push((format!("{}_qg{label}.svg", fam.file), body));
        }
    }
    let refs: Vec<(&str, &str)> = files.iter().map(|(n, b)| (n.as_str(), b.as_str())).collect();
    let manifest = write_files(&a.out, &refs)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "command": "figures",
        "param_hash": record::param_hash(&base),
        "qg": FIGURE_QG.iter().map(|q| q.0).collect::<Vec<_>>(),
        "manifest": manifest,
    }))
    .unwrap();
    write_files(&a.out, &[("figures_record.json", &json)])?;
    println!("figures: {} files written to {}", files.len(), a.out.display());
    Ok(())
}
