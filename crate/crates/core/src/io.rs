//! Configuration files, result tables and plot-ready data export.
//!
//! Configuration is a flat TOML (or JSON, by extension) table mixing solver,
//! noise and run keys. Every key is optional; unknown keys are rejected.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::blowup::{WindowPlan, FIT_SPACING};
use crate::deterministic::{SolverConfig, Trajectory};
use crate::ensemble::{EnsembleResult, EnsembleSettings, RunManifest};
use crate::error::{Error, Result};
use crate::spectral::{inverse_transform, GridSpec, SpectralField};
use crate::stats::{
    bootstrap_ci, histogram_pdf, joint_pdf, moments, running_errors, Bins, OutcomeSample, Statistic,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FBURGERS_OUT_DIR";
/// Header row of outcome tables.
pub const OUTCOME_HEADER: [&str; 5] = ["sample_index", "t_star", "e_max", "t_max", "censored"];

/// Output directory from the environment, or `fburgers-out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fburgers-out"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Deterministic,
    Stochastic,
    Ensemble,
}

/// Run-level keys that are neither solver nor noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub mode: RunMode,
    /// Initial condition `g(x) = amplitude · sin(x)`.
    pub amplitude: f64,
    pub sample_index: u64,
    pub samples: usize,
    pub threads: Option<usize>,
    pub retain: usize,
    /// Fit settings; unset values take the defaults of the run mode, which
    /// differ between deterministic and noisy series.
    pub fit_spacing: Option<f64>,
    pub window_len: Option<usize>,
    pub window_stride: Option<usize>,
    pub window_count: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        let e = EnsembleSettings::default();
        Self {
            mode: RunMode::default(),
            amplitude: 1.0,
            sample_index: 0,
            samples: e.samples,
            threads: e.threads,
            retain: e.retain,
            fit_spacing: None,
            window_len: None,
            window_stride: None,
            window_count: None,
        }
    }
}

impl RunSettings {
    fn noisy(&self) -> bool {
        self.mode != RunMode::Deterministic
    }

    pub fn plan(&self) -> WindowPlan {
        let base = if self.noisy() {
            WindowPlan::NOISY
        } else {
            WindowPlan::default()
        };
        WindowPlan {
            window_len: self.window_len.unwrap_or(base.window_len),
            stride: self.window_stride.unwrap_or(base.stride),
            count: self.window_count.unwrap_or(base.count),
        }
    }

    pub fn fit_spacing(&self) -> f64 {
        self.fit_spacing.unwrap_or(if self.noisy() {
            EnsembleSettings::default().fit_spacing
        } else {
            FIT_SPACING
        })
    }

    pub fn ensemble(&self) -> EnsembleSettings {
        EnsembleSettings {
            samples: self.samples,
            threads: self.threads,
            fit_spacing: self.fit_spacing(),
            plan: self.plan(),
            retain: self.retain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude != 0.0) {
            return Err(Error::config("amplitude", "must be finite and non-zero"));
        }
        if self.samples == 0 {
            return Err(Error::config("samples", "must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be positive"));
        }
        let sp = self.fit_spacing();
        if !(sp >= 0.0 && sp.is_finite()) {
            return Err(Error::config("fit_spacing", "must be non-negative"));
        }
        self.plan().validate()
    }

    /// The initial field on a grid of `n` points.
    pub fn initial(&self, n: usize) -> Result<SpectralField> {
        let grid = GridSpec::new(n)?;
        let a = self.amplitude;
        SpectralField::from_fn(grid, |x| a * x.sin())
    }

    /// Infimum of `g'` for the configured initial condition.
    pub fn min_slope(&self) -> f64 {
        -self.amplitude.abs()
    }
}

/// A complete, validated run description.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSpec {
    pub solver: SolverConfig,
    pub noise: crate::stochastic::NoiseParams,
    pub run: RunSettings,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.noise.validate()?;
        self.run.validate()
    }
}

fn keys_of<T: Serialize + Default>() -> BTreeSet<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

fn part<T: for<'de> Deserialize<'de>>(map: Map<String, Value>, section: &str) -> Result<T> {
    serde_json::from_value(Value::Object(map)).map_err(|e| Error::Parse {
        context: section.to_string(),
        reason: e.to_string(),
    })
}

/// Splits a flat table into its solver, noise and run parts.
pub fn spec_from_value(value: Value) -> Result<RunSpec> {
    let Value::Object(map) = value else {
        return Err(Error::Parse {
            context: "config".into(),
            reason: "top level must be a table".into(),
        });
    };
    let solver_keys = keys_of::<SolverConfig>();
    let noise_keys = keys_of::<crate::stochastic::NoiseParams>();
    let run_keys = keys_of::<RunSettings>();
    let (mut solver, mut noise, mut run) = (Map::new(), Map::new(), Map::new());
    for (k, v) in map {
        if v.is_null() {
            continue;
        }
        if solver_keys.contains(&k) {
            solver.insert(k, v);
        } else if noise_keys.contains(&k) {
            noise.insert(k, v);
        } else if run_keys.contains(&k) {
            run.insert(k, v);
        } else {
            return Err(Error::config(k, "unknown key"));
        }
    }
    let spec = RunSpec {
        solver: part(solver, "solver")?,
        noise: part(noise, "noise")?,
        run: part(run, "run")?,
    };
    spec.validate()?;
    Ok(spec)
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Parses TOML text into a run description.
pub fn parse_config_str(text: &str) -> Result<RunSpec> {
    let value: Value = toml::from_str(text).map_err(|e| Error::Parse {
        context: "toml".into(),
        reason: e.to_string(),
    })?;
    spec_from_value(value)
}

/// Reads a configuration file; `.json` files are JSON, anything else TOML.
pub fn parse_config(path: &Path) -> Result<RunSpec> {
    let text = fs::read_to_string(path)?;
    if is_json(path) {
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            reason: e.to_string(),
        })?;
        spec_from_value(value)
    } else {
        parse_config_str(&text)
    }
}

/// The flat table describing `spec`, with unset options omitted.
pub fn spec_to_value(spec: &RunSpec) -> Result<Value> {
    let mut out = Map::new();
    for v in [
        serde_json::to_value(&spec.solver),
        serde_json::to_value(&spec.noise),
        serde_json::to_value(&spec.run),
    ] {
        let v = v.map_err(|e| Error::Parse {
            context: "serialize".into(),
            reason: e.to_string(),
        })?;
        if let Value::Object(m) = v {
            out.extend(m.into_iter().filter(|(_, v)| !v.is_null()));
        }
    }
    Ok(Value::Object(out))
}

/// TOML text that [`parse_config_str`] maps back to `spec`.
pub fn serialize_config(spec: &RunSpec) -> Result<String> {
    toml::to_string(&spec_to_value(spec)?).map_err(|e| Error::Parse {
        context: "toml".into(),
        reason: e.to_string(),
    })
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn parse_err(context: impl Into<String>, reason: impl ToString) -> Error {
    Error::Parse {
        context: context.into(),
        reason: reason.to_string(),
    }
}

pub fn write_outcomes(path: &Path, outcomes: &[OutcomeSample]) -> Result<()> {
    create_parent(path)?;
    let mut w =
        csv::Writer::from_path(path).map_err(|e| parse_err(path.display().to_string(), e))?;
    let ctx = || path.display().to_string();
    w.write_record(OUTCOME_HEADER)
        .map_err(|e| parse_err(ctx(), e))?;
    for o in outcomes {
        w.write_record([
            o.sample_index.to_string(),
            o.t_star.map_or(String::new(), |t| t.to_string()),
            o.e_max.to_string(),
            o.t_max.to_string(),
            u8::from(o.censored).to_string(),
        ])
        .map_err(|e| parse_err(ctx(), e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_outcomes(path: &Path) -> Result<Vec<OutcomeSample>> {
    let ctx = || path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| parse_err(ctx(), e))?;
    let header = r.headers().map_err(|e| parse_err(ctx(), e))?.clone();
    if header.iter().ne(OUTCOME_HEADER) {
        return Err(parse_err(ctx(), format!("unexpected header {header:?}")));
    }
    let num = |s: &str, line: usize| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| parse_err(format!("{}:{line}", ctx()), e))
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(ctx(), e))?;
        let line = i + 2;
        let field = |j: usize| rec.get(j).unwrap_or("");
        out.push(OutcomeSample {
            sample_index: field(0)
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("{}:{line}", ctx()), e))?,
            t_star: match field(1).trim() {
                "" => None,
                s => Some(num(s, line)?),
            },
            e_max: num(field(2), line)?,
            t_max: num(field(3), line)?,
            censored: field(4).trim() == "1",
        });
    }
    Ok(out)
}

/// Writes whitespace-separated columns preceded by `#` comment lines, the last
/// of which names the columns.
pub fn write_table(
    path: &Path,
    comments: &[String],
    columns: &[&str],
    rows: &[Vec<f64>],
) -> Result<()> {
    create_parent(path)?;
    let mut text = String::new();
    for c in comments {
        let _ = writeln!(text, "# {c}");
    }
    let _ = writeln!(text, "# {}", columns.join(" "));
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(text, "{}", line.join(" "));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Column names and rows of a file written by [`write_table`].
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut columns = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(c) = line.strip_prefix('#') {
            columns = c.split_whitespace().map(str::to_string).collect();
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(format!("{}:{}", path.display(), i + 1), e))?;
        rows.push(row);
    }
    Ok((columns, rows))
}

/// Per-step diagnostics of a trajectory.
pub fn write_trajectory(path: &Path, trajectory: &Trajectory, comments: &[String]) -> Result<()> {
    let mut c = comments.to_vec();
    c.push(format!("termination: {}", trajectory.termination.as_str()));
    let rows: Vec<Vec<f64>> = trajectory
        .records
        .iter()
        .map(|r| {
            vec![
                r.t,
                r.enstrophy,
                r.delta.unwrap_or(f64::NAN),
                f64::from(u8::from(r.delta_reliable)),
                r.n_active as f64,
                r.dt,
            ]
        })
        .collect();
    write_table(
        path,
        &c,
        &["t", "enstrophy", "delta", "delta_reliable", "n", "dt"],
        &rows,
    )
}

/// `(t, value)` pairs from columns `t` and `column` of a diagnostics file,
/// skipping non-finite or non-positive values.
pub fn read_series(path: &Path, column: &str) -> Result<Vec<(f64, f64)>> {
    let (cols, rows) = read_table(path)?;
    let find = |name: &str| {
        cols.iter()
            .position(|c| c == name)
            .ok_or_else(|| parse_err(path.display().to_string(), format!("no column `{name}`")))
    };
    let (it, iv) = (find("t")?, find(column)?);
    Ok(rows
        .iter()
        .filter_map(|r| Some((*r.get(it)?, *r.get(iv)?)))
        .filter(|(t, v)| t.is_finite() && v.is_finite() && *v > 0.0)
        .collect())
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    create_parent(path)?;
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| parse_err(path.display().to_string(), e))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path.display().to_string(), e))
}

/// Writes an ensemble's outcome table, manifest and retained diagnostics into
/// `dir`. Returns the outcome table path.
pub fn write_ensemble(dir: &Path, result: &EnsembleResult) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let table = dir.join("outcomes.csv");
    write_outcomes(&table, &result.outcomes)?;
    write_manifest(&dir.join("manifest.json"), &result.manifest)?;
    for (i, tr) in &result.retained {
        write_trajectory(
            &dir.join(format!("diagnostics_sample_{i:05}.dat")),
            tr,
            &[format!("sample_index: {i}")],
        )?;
    }
    Ok(table)
}

/// Inputs for [`export_figures_data`]; every part is optional.
#[derive(Debug, Clone, Default)]
pub struct FigureInputs<'a> {
    /// A deterministic run with its snapshots.
    pub deterministic: Option<&'a Trajectory>,
    /// `(alpha, T*)` pairs from a sweep over the dissipation exponent.
    pub alpha_sweep: Vec<(f64, f64)>,
    /// Outcome tables keyed by noise amplitude.
    pub ensembles: Vec<(f64, Vec<OutcomeSample>)>,
}

/// Files written by [`export_figures_data`] and the panels that could not be
/// produced from the inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportReport {
    pub written: Vec<PathBuf>,
    pub missing: Vec<String>,
}

type Column = (&'static str, fn(&OutcomeSample) -> Option<f64>);

const OUTCOME_COLUMNS: [Column; 3] = [
    ("t_star", |o| o.t_star),
    ("e_max", |o| o.e_max.is_finite().then_some(o.e_max)),
    ("t_max", |o| o.t_max.is_finite().then_some(o.t_max)),
];

fn rho_tag(rho: f64) -> String {
    format!("{rho:e}").replace('.', "p")
}

/// Writes one columnar file per plot panel that the inputs support. Panels
/// that cannot be produced are listed in the report; if none can be
/// produced the call fails with [`Error::MissingInputs`].
pub fn export_figures_data(dir: &Path, inputs: &FigureInputs) -> Result<ExportReport> {
    let mut report = ExportReport::default();
    let mut put = |name: &str, comments: Vec<String>, cols: &[&str], rows: Vec<Vec<f64>>| {
        let path = dir.join(name);
        write_table(&path, &comments, cols, &rows).map(|_| report.written.push(path))
    };
    let mut missing = Vec::new();

    match inputs.deterministic {
        Some(tr) => {
            if tr.snapshots.is_empty() {
                missing.push("solution_profiles".to_string());
                missing.push("spectra".to_string());
            }
            for (i, snap) in tr.snapshots.iter().enumerate() {
                let u = inverse_transform(snap)?;
                let rows = snap
                    .grid()
                    .points()
                    .iter()
                    .zip(&u)
                    .map(|(&x, &v)| vec![x, v])
                    .collect();
                let t = snap.time();
                put(
                    &format!("solution_profile_{i:02}.dat"),
                    vec![format!("t: {t}")],
                    &["x", "u"],
                    rows,
                )?;
                let rows = snap
                    .coeffs()
                    .iter()
                    .enumerate()
                    .map(|(k, c)| vec![(k + 1) as f64, c.norm()])
                    .collect();
                put(
                    &format!("spectrum_{i:02}.dat"),
                    vec![format!("t: {t}")],
                    &["k", "abs_u_hat"],
                    rows,
                )?;
            }
            let rows = tr.records.iter().map(|r| vec![r.t, r.enstrophy]).collect();
            put("enstrophy_history.dat", vec![], &["t", "enstrophy"], rows)?;
            let rows: Vec<Vec<f64>> = tr
                .records
                .iter()
                .filter(|r| r.delta_reliable)
                .filter_map(|r| r.delta.map(|d| vec![r.t, d]))
                .collect();
            if rows.is_empty() {
                missing.push("strip_width_history".to_string());
            } else {
                put("strip_width_history.dat", vec![], &["t", "delta"], rows)?;
            }
        }
        None => missing.push("deterministic_run".to_string()),
    }

    if inputs.alpha_sweep.is_empty() {
        missing.push("blowup_time_vs_alpha".to_string());
    } else {
        let rows = inputs
            .alpha_sweep
            .iter()
            .map(|&(a, t)| vec![a, t])
            .collect();
        put(
            "blowup_time_vs_alpha.dat",
            vec![],
            &["alpha", "t_star"],
            rows,
        )?;
    }

    if inputs.ensembles.is_empty() {
        missing.push("ensemble_statistics".to_string());
    }
    let mut moment_rows: Vec<(&str, Vec<Vec<f64>>)> = OUTCOME_COLUMNS
        .iter()
        .map(|(n, _)| (*n, Vec::new()))
        .collect();
    for (rho, outcomes) in &inputs.ensembles {
        let tag = rho_tag(*rho);
        for (ci, (name, get)) in OUTCOME_COLUMNS.iter().enumerate() {
            let values: Vec<f64> = outcomes.iter().filter_map(get).collect();
            let Ok(m) = moments(&values) else {
                missing.push(format!("{name}_statistics_rho_{tag}"));
                continue;
            };
            let mut row = vec![*rho, values.len() as f64, m.mu, m.sigma, m.skew, m.kurt];
            for s in Statistic::ALL {
                let (lo, hi) =
                    bootstrap_ci(&values, s, 0.95, 1000, 0).unwrap_or((f64::NAN, f64::NAN));
                row.extend([lo, hi]);
            }
            moment_rows[ci].1.push(row);

            let h = histogram_pdf(&values, Bins::Auto)?;
            let rows = h
                .centers()
                .iter()
                .zip(&h.density)
                .map(|(&c, &d)| vec![c, d])
                .collect();
            put(
                &format!("pdf_{name}_rho_{tag}.dat"),
                vec![format!("rho: {rho}"), format!("samples: {}", values.len())],
                &[name, "density"],
                rows,
            )?;

            if values.len() >= 10 {
                let r = running_errors(&values)?;
                let curve = |s: Statistic| r.curve(s).map(<[f64]>::to_vec);
                let curves = [
                    curve(Statistic::Mu),
                    curve(Statistic::Sigma),
                    curve(Statistic::Skew),
                    curve(Statistic::Kurt),
                ];
                let rows = r
                    .m
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| {
                        let mut row = vec![m as f64];
                        row.extend(curves.iter().map(|c| c.as_ref().map_or(f64::NAN, |c| c[i])));
                        row
                    })
                    .collect();
                put(
                    &format!("running_error_{name}_rho_{tag}.dat"),
                    vec![format!("rho: {rho}")],
                    &["m", "err_mu", "err_sigma", "err_skew", "err_kurt"],
                    rows,
                )?;
            }
        }

        let pairs: Vec<(f64, f64, f64)> = outcomes
            .iter()
            .filter_map(|o| Some((o.t_star?, o.e_max, o.t_max)))
            .filter(|p| p.1.is_finite() && p.2.is_finite())
            .collect();
        let joint = [
            ("t_star", "e_max", 0usize, 1usize),
            ("t_star", "t_max", 0, 2),
            ("e_max", "t_max", 1, 2),
        ];
        for (xn, yn, xi, yi) in joint {
            let pick = |p: &(f64, f64, f64), i: usize| [p.0, p.1, p.2][i];
            let xs: Vec<f64> = pairs.iter().map(|p| pick(p, xi)).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| pick(p, yi)).collect();
            match joint_pdf(&xs, &ys, (Bins::Auto, Bins::Auto)) {
                Ok(j) => {
                    let mut rows = Vec::new();
                    for (i, row) in j.density.iter().enumerate() {
                        let xc = 0.5 * (j.x_edges[i] + j.x_edges[i + 1]);
                        for (k, d) in row.iter().enumerate() {
                            let yc = 0.5 * (j.y_edges[k] + j.y_edges[k + 1]);
                            rows.push(vec![xc, yc, *d]);
                        }
                    }
                    put(
                        &format!("jpdf_{xn}_{yn}_rho_{tag}.dat"),
                        vec![format!("rho: {rho}")],
                        &[xn, yn, "density"],
                        rows,
                    )?;
                }
                Err(_) => missing.push(format!("jpdf_{xn}_{yn}_rho_{tag}")),
            }
        }
    }
    for (name, rows) in moment_rows {
        if !rows.is_empty() {
            put(
                &format!("moments_{name}_vs_rho.dat"),
                vec!["95% percentile bootstrap intervals, 1000 resamples".to_string()],
                &[
                    "rho", "m", "mu", "sigma", "skew", "kurt", "mu_lo", "mu_hi", "sigma_lo",
                    "sigma_hi", "skew_lo", "skew_hi", "kurt_lo", "kurt_hi",
                ],
                rows,
            )?;
        }
    }

    report.missing = missing;
    if report.written.is_empty() {
        return Err(Error::MissingInputs(report.missing));
    }
    Ok(report)
}
