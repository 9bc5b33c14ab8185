//! Command-line driver: runs the solvers, fits blow-up times, summarizes
//! ensembles and writes plot-ready tables.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fburgers::io::{
    default_out_dir, read_manifest, read_series, write_trajectory, FigureInputs, OUT_DIR_ENV,
};
use fburgers::stats::extract_outcome;
use fburgers::{
    estimate_t_star, export_figures_data, limit_blowup_alpha_zero, limit_blowup_inviscid,
    parse_config, read_outcomes, run_deterministic, run_ensemble, run_realization,
    serialize_config, summarize, write_outcomes, Quantity, RunMode, RunSpec, Termination,
    Trajectory,
};

#[derive(Parser, Debug)]
#[command(
    name = "fburgers",
    version,
    about = "Fractional Burgers solvers and blow-up analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the unforced equation with adaptive resolution.
    Deterministic {
        #[command(flatten)]
        common: Common,
        /// Comma-separated snapshot times.
        #[arg(long, value_delimiter = ',', value_parser = parse_f64)]
        snapshots: Vec<f64>,
    },
    /// Integrate one noisy realization on a fixed grid.
    Stochastic {
        #[command(flatten)]
        common: Common,
        /// Realization index within the seeded family.
        #[arg(long, default_value = "0", value_parser = parse_u64)]
        sample: u64,
    },
    /// Run a Monte-Carlo ensemble and write its outcome table and manifest.
    Ensemble {
        #[command(flatten)]
        common: Common,
        /// Realizations whose full diagnostics are written.
        #[arg(long, value_parser = parse_usize)]
        retain: Option<usize>,
    },
    /// Estimate a blow-up time from a diagnostics file.
    FitBlowup {
        /// Diagnostics file written by `deterministic` or `stochastic`.
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Series::Enstrophy)]
        series: Series,
        /// Thinning spacing applied before fitting.
        #[arg(long, default_value = "1e-3", value_parser = parse_f64)]
        spacing: f64,
        #[arg(long, value_parser = parse_usize)]
        window_len: Option<usize>,
        #[arg(long, value_parser = parse_usize)]
        window_stride: Option<usize>,
        #[arg(long, value_parser = parse_usize)]
        window_count: Option<usize>,
    },
    /// Moments and bootstrap intervals of an outcome table.
    Stats {
        /// Outcome table written by `ensemble`.
        input: PathBuf,
        #[arg(long, default_value = "1000", value_parser = parse_usize)]
        resamples: usize,
        #[arg(long, default_value = "0", value_parser = parse_u64)]
        seed: u64,
    },
    /// Write plot-ready tables from runs and ensembles.
    Export {
        #[command(flatten)]
        common: Common,
        /// Run the configured deterministic problem and export its profiles,
        /// spectra and histories.
        #[arg(long)]
        deterministic: bool,
        /// Comma-separated snapshot times for the deterministic run.
        #[arg(long, value_delimiter = ',', value_parser = parse_f64)]
        snapshots: Vec<f64>,
        /// Comma-separated dissipation exponents to sweep for T*(alpha).
        #[arg(long, value_delimiter = ',', value_parser = parse_f64)]
        sweep_alpha: Vec<f64>,
        /// Ensemble output directories (each with outcomes.csv and
        /// manifest.json).
        #[arg(long = "ensemble")]
        ensembles: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Series {
    Enstrophy,
    StripWidth,
}

/// Flags shared by the solver subcommands. Each overrides the matching key of
/// the configuration file.
#[derive(Args, Debug)]
struct Common {
    /// TOML or JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_f64)]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_f64)]
    nu: Option<f64>,
    #[arg(long, value_parser = parse_f64)]
    rho: Option<f64>,
    /// Initial (deterministic) or fixed (stochastic) grid size.
    #[arg(long, value_parser = parse_usize)]
    n: Option<usize>,
    #[arg(long, value_parser = parse_usize)]
    n_max: Option<usize>,
    /// Initial step for deterministic runs, fixed step for noisy ones.
    #[arg(long, value_parser = parse_f64)]
    dt: Option<f64>,
    #[arg(long, value_parser = parse_f64)]
    t_end: Option<f64>,
    #[arg(long, value_parser = parse_u64)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_usize)]
    samples: Option<usize>,
    #[arg(long, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_usize)]
    window_len: Option<usize>,
    #[arg(long, value_parser = parse_usize)]
    window_stride: Option<usize>,
    #[arg(long, value_parser = parse_usize)]
    threads: Option<usize>,
}

impl Common {
    fn spec(&self, mode: RunMode) -> Result<RunSpec> {
        let mut spec = match &self.config {
            Some(p) => parse_config(p).with_context(|| format!("reading {}", p.display()))?,
            None => RunSpec::default(),
        };
        spec.run.mode = mode;
        if mode != RunMode::Deterministic {
            spec.solver
                .enstrophy_cap
                .get_or_insert(fburgers::stochastic::DEFAULT_ENSTROPHY_CAP);
        }
        let s = &mut spec.solver;
        set(&mut s.alpha, self.alpha);
        set(&mut s.nu, self.nu);
        set(&mut s.t_end, self.t_end);
        set(&mut s.n_max, self.n_max);
        if let Some(n) = self.n {
            s.n_init = n;
            if self.n_max.is_none() {
                s.n_max = s.n_max.max(n);
            }
        }
        if let Some(dt) = self.dt {
            s.dt_init = dt;
            spec.noise.dt = Some(dt);
        }
        set(&mut spec.noise.rho, self.rho);
        set(&mut spec.noise.master_seed, self.seed);
        let r = &mut spec.run;
        set(&mut r.samples, self.samples);
        if self.threads.is_some() {
            r.threads = self.threads;
        }
        if self.window_len.is_some() {
            r.window_len = self.window_len;
        }
        if self.window_stride.is_some() {
            r.window_stride = self.window_stride;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(default_out_dir)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| format!("`{s}`: {e}"))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("`{s}` is not finite"))
            }
        })
}

/// Integers may be written in scientific notation (`2e4`) as long as the
/// value is exact.
fn parse_u64(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    let v = parse_f64(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
        Ok(v as u64)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    parse_u64(s).and_then(|v| usize::try_from(v).map_err(|e| e.to_string()))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn hard_failure(t: Termination) -> bool {
    matches!(t, Termination::NumericalFailure | Termination::DtUnderflow)
}

fn fit_json(series: &[(f64, f64)], q: Quantity, spec: &RunSpec) -> serde_json::Value {
    match estimate_t_star(series, q, spec.run.fit_spacing(), &spec.run.plan()) {
        Ok(f) => serde_json::to_value(f).unwrap_or_default(),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn deterministic_run(spec: &RunSpec) -> Result<Trajectory> {
    let g = spec.run.initial(spec.solver.n_init)?;
    Ok(run_deterministic(&spec.solver, &g)?)
}

fn cmd_deterministic(common: &Common, snapshots: Vec<f64>) -> Result<bool> {
    let mut spec = common.spec(RunMode::Deterministic)?;
    if !snapshots.is_empty() {
        spec.solver.snapshot_times = snapshots;
    }
    let tr = deterministic_run(&spec)?;
    let dir = common.out_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), serialize_config(&spec)?)?;
    write_trajectory(&dir.join("diagnostics.dat"), &tr, &[])?;
    let report = export_figures_data(
        &dir,
        &FigureInputs {
            deterministic: Some(&tr),
            ..Default::default()
        },
    )?;

    let (e_max, t_max) = tr.enstrophy_peak();
    let slope = spec.run.min_slope();
    let mut summary = json!({
        "termination": tr.termination.as_str(),
        "t_final": tr.final_state.time(),
        "n_final": tr.final_state.grid().n(),
        "e_max": e_max,
        "t_max": t_max,
        "t_star_inviscid": limit_blowup_inviscid(slope),
        "t_star_alpha_zero": limit_blowup_alpha_zero(spec.solver.nu, slope)?,
        "files": report.written.len(),
    });
    if tr.termination == Termination::ResolutionExhausted {
        summary["t_star_enstrophy"] = fit_json(&tr.enstrophy_series(), Quantity::Enstrophy, &spec);
        summary["t_star_strip_width"] = fit_json(&tr.strip_series(), Quantity::StripWidth, &spec);
    }
    write_json(&dir.join("summary.json"), &summary)?;
    print_json(&summary)?;
    Ok(!hard_failure(tr.termination))
}

fn cmd_stochastic(common: &Common, sample: u64) -> Result<bool> {
    let spec = common.spec(RunMode::Stochastic)?;
    let g = spec.run.initial(spec.solver.n_init)?;
    let tr = run_realization(&spec.solver, &spec.noise, sample, &g)?;
    let dir = common.out_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), serialize_config(&spec)?)?;
    write_trajectory(
        &dir.join("diagnostics.dat"),
        &tr,
        &[
            format!("sample_index: {sample}"),
            format!("rho: {}", spec.noise.rho),
        ],
    )?;
    let outcome = extract_outcome(sample, &tr, spec.run.fit_spacing(), &spec.run.plan());
    write_outcomes(&dir.join("outcomes.csv"), std::slice::from_ref(&outcome))?;
    let summary = json!({
        "termination": tr.termination.as_str(),
        "sample_index": sample,
        "t_star": outcome.t_star,
        "e_max": outcome.e_max,
        "t_max": outcome.t_max,
        "censored": outcome.censored,
    });
    print_json(&summary)?;
    Ok(!hard_failure(tr.termination))
}

fn cmd_ensemble(common: &Common, retain: Option<usize>) -> Result<bool> {
    let mut spec = common.spec(RunMode::Ensemble)?;
    set(&mut spec.run.retain, retain);
    let g = spec.run.initial(spec.solver.n_init)?;
    let result = run_ensemble(&spec.solver, &spec.noise, &g, &spec.run.ensemble())?;
    let dir = common.out_dir();
    fburgers::io::write_ensemble(&dir, &result)?;
    std::fs::write(dir.join("config.toml"), serialize_config(&spec)?)?;
    let summary = summarize(&result.outcomes, 1000, spec.noise.master_seed);
    let v = serde_json::to_value(&summary)?;
    write_json(&dir.join("summary.json"), &v)?;
    print_json(&json!({
        "samples": summary.samples,
        "censored": summary.censored,
        "terminations": result.manifest.terminations,
        "t_star": summary.t_star.map(|c| c.moments),
        "out_dir": dir,
    }))?;
    Ok(true)
}

fn cmd_fit(input: &Path, series: Series, spacing: f64, plan: [Option<usize>; 3]) -> Result<bool> {
    let (column, q) = match series {
        Series::Enstrophy => ("enstrophy", Quantity::Enstrophy),
        Series::StripWidth => ("delta", Quantity::StripWidth),
    };
    let mut data = read_series(input, column)?;
    if let Series::StripWidth = series {
        let (cols, rows) = fburgers::io::read_table(input)?;
        if let Some(i) = cols.iter().position(|c| c == "delta_reliable") {
            let reliable: Vec<f64> = rows
                .iter()
                .filter(|r| r.get(i) == Some(&1.0))
                .map(|r| r[0])
                .collect();
            data.retain(|(t, _)| reliable.contains(t));
        }
    }
    let mut p = fburgers::WindowPlan::default();
    set(&mut p.window_len, plan[0]);
    set(&mut p.stride, plan[1]);
    set(&mut p.count, plan[2]);
    let fit = estimate_t_star(&data, q, spacing, &p)
        .with_context(|| format!("fitting {column} from {}", input.display()))?;
    print_json(&serde_json::to_value(fit)?)?;
    Ok(true)
}

fn cmd_stats(input: &Path, resamples: usize, seed: u64) -> Result<bool> {
    let outcomes = read_outcomes(input)?;
    if outcomes.is_empty() {
        bail!("{} has no samples", input.display());
    }
    print_json(&serde_json::to_value(summarize(
        &outcomes, resamples, seed,
    ))?)?;
    Ok(true)
}

fn cmd_export(
    common: &Common,
    deterministic: bool,
    snapshots: Vec<f64>,
    sweep: Vec<f64>,
    ensembles: Vec<PathBuf>,
) -> Result<bool> {
    let mut spec = common.spec(RunMode::Deterministic)?;
    if !snapshots.is_empty() {
        spec.solver.snapshot_times = snapshots;
    }
    let tr = if deterministic {
        Some(deterministic_run(&spec)?)
    } else {
        None
    };

    let mut alpha_sweep = Vec::new();
    for &alpha in &sweep {
        let mut s = spec.clone();
        s.solver.alpha = alpha;
        s.solver.snapshot_times.clear();
        let run = deterministic_run(&s)?;
        match estimate_t_star(
            &run.enstrophy_series(),
            Quantity::Enstrophy,
            s.run.fit_spacing(),
            &s.run.plan(),
        ) {
            Ok(f) if run.termination == Termination::ResolutionExhausted => {
                alpha_sweep.push((alpha, f.t_star));
            }
            Ok(_) => eprintln!("alpha {alpha}: no blow-up before t_end, skipped"),
            Err(e) => eprintln!("alpha {alpha}: {e}, skipped"),
        }
    }

    let mut ens = Vec::new();
    for dir in &ensembles {
        let manifest = read_manifest(&dir.join("manifest.json"))
            .with_context(|| format!("reading manifest in {}", dir.display()))?;
        let outcomes = read_outcomes(&dir.join("outcomes.csv"))?;
        ens.push((manifest.noise.rho, outcomes));
    }
    ens.sort_by(|a, b| a.0.total_cmp(&b.0));

    let out = common.out_dir();
    let report = export_figures_data(
        &out,
        &FigureInputs {
            deterministic: tr.as_ref(),
            alpha_sweep,
            ensembles: ens,
        },
    )?;
    if !report.missing.is_empty() {
        let listing = report.missing.join(", ");
        std::fs::write(out.join("missing_panels.txt"), format!("{listing}\n"))?;
        eprintln!("not produced: {listing}");
    }
    for p in &report.written {
        println!("{}", p.display());
    }
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Deterministic { common, snapshots } => cmd_deterministic(&common, snapshots),
        Command::Stochastic { common, sample } => cmd_stochastic(&common, sample),
        Command::Ensemble { common, retain } => cmd_ensemble(&common, retain),
        Command::FitBlowup {
            input,
            series,
            spacing,
            window_len,
            window_stride,
            window_count,
        } => cmd_fit(
            &input,
            series,
            spacing,
            [window_len, window_stride, window_count],
        ),
        Command::Stats {
            input,
            resamples,
            seed,
        } => cmd_stats(&input, resamples, seed),
        Command::Export {
            common,
            deterministic,
            snapshots,
            sweep_alpha,
            ensembles,
        } => cmd_export(&common, deterministic, snapshots, sweep_alpha, ensembles),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("run ended in a numerical failure");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
