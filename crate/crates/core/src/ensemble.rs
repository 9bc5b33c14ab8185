//! Monte-Carlo ensembles of stochastic realizations.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blowup::{WindowPlan, NOISY_FIT_SPACING};
use crate::deterministic::{SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::spectral::SpectralField;
use crate::stats::{bootstrap_ci, extract_outcome, moments, MomentSet, OutcomeSample, Statistic};
use crate::stochastic::{run_realization, sample_seed, NoiseParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSettings {
    pub samples: usize,
    /// Worker threads; `None` uses all cores. Results do not depend on it.
    pub threads: Option<usize>,
    /// Spacing the enstrophy series is thinned to before the blow-up fit.
    pub fit_spacing: f64,
    pub plan: WindowPlan,
    /// Number of leading realizations whose full diagnostics are kept.
    pub retain: usize,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            samples: 100,
            threads: None,
            fit_spacing: NOISY_FIT_SPACING,
            plan: WindowPlan::NOISY,
            retain: 0,
        }
    }
}

/// Everything needed to rerun an ensemble bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config: SolverConfig,
    pub noise: NoiseParams,
    pub settings: EnsembleSettings,
    pub master_seed: u64,
    pub sample_seeds: Vec<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub terminations: BTreeMap<String, usize>,
    pub censored: usize,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub manifest: RunManifest,
    pub outcomes: Vec<OutcomeSample>,
    /// Full diagnostics of the first `settings.retain` realizations.
    pub retained: Vec<(u64, Trajectory)>,
    /// Snapshots of every realization at `config.snapshot_times`, indexed
    /// `[sample][time]`.
    pub snapshots: Vec<Vec<SpectralField>>,
}

impl EnsembleResult {
    /// Fields of all realizations at the `i`-th snapshot time.
    pub fn snapshots_at(&self, i: usize) -> Vec<SpectralField> {
        self.snapshots
            .iter()
            .filter_map(|s| s.get(i).cloned())
            .collect()
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Runs `settings.samples` independent realizations from `initial` on a
/// worker pool. Individual failures are recorded as censored samples.
pub fn run_ensemble(
    cfg: &SolverConfig,
    noise: &NoiseParams,
    initial: &SpectralField,
    settings: &EnsembleSettings,
) -> Result<EnsembleResult> {
    cfg.validate()?;
    noise.validate()?;
    if settings.samples == 0 {
        return Err(Error::config("samples", "must be positive"));
    }
    if settings.threads == Some(0) {
        return Err(Error::config("threads", "must be positive"));
    }
    settings.plan.validate()?;
    if !(settings.fit_spacing >= 0.0) {
        return Err(Error::config("fit_spacing", "must be non-negative"));
    }

    let started_unix = unix_now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = settings.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;

    let runs: Vec<(
        OutcomeSample,
        &'static str,
        Option<Trajectory>,
        Vec<SpectralField>,
    )> = pool.install(|| {
        (0..settings.samples as u64)
            .into_par_iter()
            .map(|i| match run_realization(cfg, noise, i, initial) {
                Ok(tr) => {
                    let outcome = extract_outcome(i, &tr, settings.fit_spacing, &settings.plan);
                    let label = tr.termination.as_str();
                    let snaps = tr.snapshots.clone();
                    let keep = (i as usize) < settings.retain;
                    (outcome, label, keep.then_some(tr), snaps)
                }
                Err(_) => (
                    OutcomeSample {
                        sample_index: i,
                        t_star: None,
                        e_max: f64::NAN,
                        t_max: f64::NAN,
                        censored: true,
                    },
                    "error",
                    None,
                    Vec::new(),
                ),
            })
            .collect()
    });

    let mut terminations = BTreeMap::new();
    let mut outcomes = Vec::with_capacity(runs.len());
    let mut retained = Vec::new();
    let mut snapshots = Vec::with_capacity(runs.len());
    for (outcome, label, tr, snaps) in runs {
        *terminations.entry(label.to_string()).or_insert(0) += 1;
        if let Some(tr) = tr {
            retained.push((outcome.sample_index, tr));
        }
        outcomes.push(outcome);
        snapshots.push(snaps);
    }
    let censored = outcomes.iter().filter(|o| o.censored).count();
    let manifest = RunManifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        noise: noise.clone(),
        settings: settings.clone(),
        master_seed: noise.master_seed,
        sample_seeds: (0..settings.samples as u64)
            .map(|i| sample_seed(noise.master_seed, i))
            .collect(),
        started_unix,
        finished_unix: unix_now(),
        terminations,
        censored,
    };
    Ok(EnsembleResult {
        manifest,
        outcomes,
        retained,
        snapshots,
    })
}

/// Moments and 95% bootstrap intervals of one outcome column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub moments: MomentSet,
    /// `(statistic, lo, hi)` for each of the four moments.
    pub intervals: Vec<(Statistic, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub samples: usize,
    pub censored: usize,
    pub t_star: Option<ColumnSummary>,
    pub e_max: Option<ColumnSummary>,
    pub t_max: Option<ColumnSummary>,
}

fn summarize_column(values: &[f64], resamples: usize, seed: u64) -> Option<ColumnSummary> {
    let moments = moments(values).ok()?;
    let intervals = Statistic::ALL
        .iter()
        .filter_map(|&s| {
            bootstrap_ci(values, s, 0.95, resamples, seed)
                .ok()
                .map(|(lo, hi)| (s, lo, hi))
        })
        .collect();
    Some(ColumnSummary { moments, intervals })
}

/// Summaries over uncensored samples; columns with too few usable values are
/// left out.
pub fn summarize(outcomes: &[OutcomeSample], resamples: usize, seed: u64) -> EnsembleSummary {
    let t_star: Vec<f64> = outcomes.iter().filter_map(|o| o.t_star).collect();
    let finite = |f: fn(&OutcomeSample) -> f64| -> Vec<f64> {
        outcomes.iter().map(f).filter(|v| v.is_finite()).collect()
    };
    EnsembleSummary {
        samples: outcomes.len(),
        censored: outcomes.iter().filter(|o| o.censored).count(),
        t_star: summarize_column(&t_star, resamples, seed),
        e_max: summarize_column(&finite(|o| o.e_max), resamples, seed),
        t_max: summarize_column(&finite(|o| o.t_max), resamples, seed),
    }
}
