//! Ensemble statistics: moments, convergence curves, bootstrap intervals,
//! histograms, power-law fits and the Jensen check on enstrophy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blowup::{estimate_t_star, Quantity, WindowPlan};
use crate::deterministic::{Termination, Trajectory};
use crate::diagnostics::enstrophy;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::spectral::SpectralField;

/// Scalar outcomes of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSample {
    pub sample_index: u64,
    pub t_star: Option<f64>,
    pub e_max: f64,
    pub t_max: f64,
    /// No blow-up time could be attached to this realization.
    pub censored: bool,
}

/// Reduces a trajectory to its outcomes. A blow-up time is estimated from
/// the enstrophy series only when the run stopped on under-resolution; any
/// other ending, or a failed fit, leaves the sample censored.
pub fn extract_outcome(
    sample_index: u64,
    trajectory: &Trajectory,
    spacing: f64,
    plan: &WindowPlan,
) -> OutcomeSample {
    let (e_max, t_max) = trajectory.enstrophy_peak();
    let t_star = match trajectory.termination {
        Termination::ResolutionExhausted => estimate_t_star(
            &trajectory.enstrophy_series(),
            Quantity::Enstrophy,
            spacing,
            plan,
        )
        .ok()
        .map(|f| f.t_star)
        .filter(|t| t.is_finite()),
        _ => None,
    };
    OutcomeSample {
        sample_index,
        t_star,
        e_max,
        t_max,
        censored: t_star.is_none(),
    }
}

/// Population moments. `sigma` is the square root of the `1/m` variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mu: f64,
    pub sigma: f64,
    pub skew: f64,
    pub kurt: f64,
    pub m_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mu,
    Sigma,
    Skew,
    Kurt,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Self::Mu, Self::Sigma, Self::Skew, Self::Kurt];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mu => "mu",
            Self::Sigma => "sigma",
            Self::Skew => "skew",
            Self::Kurt => "kurt",
        }
    }

    pub fn of(self, m: &MomentSet) -> f64 {
        match self {
            Self::Mu => m.mu,
            Self::Sigma => m.sigma,
            Self::Skew => m.skew,
            Self::Kurt => m.kurt,
        }
    }
}

/// Streaming central sums (Pébay's one-pass update).
#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Accumulator {
    fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    /// `(mu, sigma, skew, kurt)`, with the shape moments absent when the
    /// spread vanishes.
    fn moments(&self) -> (f64, f64, Option<f64>, Option<f64>) {
        let var = self.m2 / self.n;
        let sigma = var.max(0.0).sqrt();
        if var <= 0.0 || sigma <= 1e-300 {
            return (self.mean, 0.0, None, None);
        }
        let skew = self.m3 / self.n / (var * sigma);
        let kurt = self.m4 / self.n / (var * var);
        (self.mean, sigma, Some(skew), Some(kurt))
    }
}

fn check_finite(samples: &[f64]) -> Result<()> {
    if samples.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("samples must be finite".into()))
    }
}

fn two_pass(samples: &[f64]) -> (f64, f64, f64, f64) {
    let m = samples.len() as f64;
    let mu = samples.iter().sum::<f64>() / m;
    let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mu;
        let d2 = d * d;
        s2 += d2;
        s3 += d2 * d;
        s4 += d2 * d2;
    }
    (mu, s2 / m, s3 / m, s4 / m)
}

/// Mean, standard deviation, skewness and kurtosis with `1/m` normalization.
pub fn moments(samples: &[f64]) -> Result<MomentSet> {
    if samples.len() < 2 {
        return Err(Error::Domain("moments need at least 2 samples".into()));
    }
    check_finite(samples)?;
    let (mu, var, c3, c4) = two_pass(samples);
    let sigma = var.sqrt();
    if !(sigma > 1e-300) || samples.iter().all(|&x| x == samples[0]) {
        return Err(Error::DegenerateMoments(format!(
            "all {} samples are equal to {}",
            samples.len(),
            samples[0]
        )));
    }
    Ok(MomentSet {
        mu,
        sigma,
        skew: c3 / (var * sigma),
        kurt: c4 / (var * var),
        m_used: samples.len(),
    })
}

/// Relative errors `|X_m − X_M| / |X_M|` of the prefix estimates, `m = 1..M`.
/// A curve is `None` when `X_M` is zero (to round-off) or undefined while its
/// prefix values are not; individual entries are NaN where `X_m` itself is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningErrors {
    pub m: Vec<usize>,
    pub mu: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
    pub skew: Option<Vec<f64>>,
    pub kurt: Option<Vec<f64>>,
}

impl RunningErrors {
    pub fn curve(&self, stat: Statistic) -> Option<&[f64]> {
        match stat {
            Statistic::Mu => self.mu.as_deref(),
            Statistic::Sigma => self.sigma.as_deref(),
            Statistic::Skew => self.skew.as_deref(),
            Statistic::Kurt => self.kurt.as_deref(),
        }
    }
}

pub fn running_errors(samples: &[f64]) -> Result<RunningErrors> {
    if samples.len() < 10 {
        return Err(Error::Domain(
            "running errors need at least 10 samples".into(),
        ));
    }
    check_finite(samples)?;
    let mut acc = Accumulator::default();
    let mut prefix = Vec::with_capacity(samples.len());
    for &x in samples {
        acc.push(x);
        let (mu, sigma, skew, kurt) = acc.moments();
        prefix.push([Some(mu), Some(sigma), skew, kurt]);
    }
    let last = *prefix.last().expect("non-empty");
    // Truth values within round-off of zero count as zero.
    let scale = samples.iter().map(|x| x.abs()).sum::<f64>() / samples.len() as f64;
    let zero_tol = [1e-12 * scale, 1e-12 * scale, 1e-12, 1e-12];
    let curve = |i: usize| -> Option<Vec<f64>> {
        let truth = last[i];
        let mut out = Vec::with_capacity(prefix.len());
        for p in &prefix {
            let e = match (p[i], truth) {
                (a, b) if a == b => 0.0,
                (Some(a), Some(b)) if b.abs() > zero_tol[i] => (a - b).abs() / b.abs(),
                (None, _) => f64::NAN,
                _ => return None,
            };
            out.push(e);
        }
        Some(out)
    };
    Ok(RunningErrors {
        m: (1..=samples.len()).collect(),
        mu: curve(0),
        sigma: curve(1),
        skew: curve(2),
        kurt: curve(3),
    })
}

/// Least-squares slope of `ln e` against `ln m` over the finite, positive
/// entries with `m ≥ m_min`.
pub fn loglog_slope(m: &[usize], e: &[f64], m_min: usize) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = m
        .iter()
        .zip(e)
        .filter(|(&mi, &ei)| mi >= m_min && ei.is_finite() && ei > 0.0)
        .map(|(&mi, &ei)| ((mi as f64).ln(), ei.ln()))
        .unzip();
    if xs.len() < 2 {
        return None;
    }
    least_squares(&[vec![1.0; xs.len()], xs], &ys).map(|s| s[1])
}

fn statistic_value(samples: &[f64], stat: Statistic) -> Option<f64> {
    let (mu, var, c3, c4) = two_pass(samples);
    let sigma = var.sqrt();
    match stat {
        Statistic::Mu => Some(mu),
        Statistic::Sigma => Some(sigma),
        _ if !(sigma > 1e-300) => None,
        Statistic::Skew => Some(c3 / (var * sigma)),
        Statistic::Kurt => Some(c4 / (var * var)),
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval from `b` resamples drawn with a generator
/// seeded by `seed`.
pub fn bootstrap_ci(
    samples: &[f64],
    stat: Statistic,
    level: f64,
    b: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(
            "level",
            format!("must lie in (0, 1), got {level}"),
        ));
    }
    if b < 1000 {
        return Err(Error::config(
            "b",
            format!("needs at least 1000 resamples, got {b}"),
        ));
    }
    if samples.len() < 2 {
        return Err(Error::Domain("bootstrap needs at least 2 samples".into()));
    }
    check_finite(samples)?;
    if samples.iter().all(|&x| x == samples[0]) {
        let v = match stat {
            Statistic::Mu => samples[0],
            Statistic::Sigma => 0.0,
            _ => {
                return Err(Error::DegenerateMoments(
                    "shape statistics of constant samples are undefined".into(),
                ))
            }
        };
        return Ok((v, v));
    }
    let m = samples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resample = vec![0.0; m];
    let mut values = Vec::with_capacity(b);
    for _ in 0..b {
        for r in resample.iter_mut() {
            *r = samples[rng.random_range(0..m)];
        }
        if let Some(v) = statistic_value(&resample, stat) {
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::DegenerateMoments(
            "every resample was degenerate".into(),
        ));
    }
    values.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok((quantile(&values, tail), quantile(&values, 1.0 - tail)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bins {
    /// Freedman–Diaconis width `2 IQR m^{−1/3}`.
    Auto,
    Fixed(usize),
}

/// Piecewise-constant density; `density[i]` covers `[edges[i], edges[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `Σ density · width`.
    pub fn mass(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.density)
            .map(|(w, d)| d * (w[1] - w[0]))
            .sum()
    }
}

struct Axis {
    lo: f64,
    width: f64,
    count: usize,
}

impl Axis {
    fn new(samples: &[f64], bins: Bins) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain(
                "density estimates need at least 2 samples".into(),
            ));
        }
        check_finite(samples)?;
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            // All mass at one point: a single narrow bin. A power-of-two
            // width keeps the edges exact.
            let width = 2f64.powi(lo.abs().max(1.0).log2().floor() as i32 - 30);
            return Ok(Self {
                lo: lo - 0.5 * width,
                width,
                count: 1,
            });
        }
        let count = match bins {
            Bins::Fixed(0) => return Err(Error::config("bins", "must be positive")),
            Bins::Fixed(n) => n,
            Bins::Auto => {
                let mut sorted = samples.to_vec();
                sorted.sort_by(f64::total_cmp);
                let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
                let h = 2.0 * iqr * (samples.len() as f64).powf(-1.0 / 3.0);
                if h > 0.0 {
                    (((hi - lo) / h).ceil() as usize).clamp(1, 10_000)
                } else {
                    // Sturges when the quartiles coincide.
                    ((samples.len() as f64).log2().ceil() as usize + 1).max(1)
                }
            }
        };
        Ok(Self {
            lo,
            width: (hi - lo) / count as f64,
            count,
        })
    }

    fn index(&self, x: f64) -> usize {
        (((x - self.lo) / self.width) as usize).min(self.count - 1)
    }

    fn edges(&self) -> Vec<f64> {
        (0..=self.count)
            .map(|i| self.lo + self.width * i as f64)
            .collect()
    }
}

pub fn histogram_pdf(samples: &[f64], bins: Bins) -> Result<Histogram> {
    let axis = Axis::new(samples, bins)?;
    let mut counts = vec![0usize; axis.count];
    for &x in samples {
        counts[axis.index(x)] += 1;
    }
    let norm = 1.0 / (samples.len() as f64 * axis.width);
    Ok(Histogram {
        edges: axis.edges(),
        density: counts.iter().map(|&c| c as f64 * norm).collect(),
    })
}

/// Joint density on a rectangular grid, row-major with `x` as the row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPdf {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub density: Vec<Vec<f64>>,
}

impl JointPdf {
    pub fn mass(&self) -> f64 {
        let mut total = 0.0;
        for (i, row) in self.density.iter().enumerate() {
            let dx = self.x_edges[i + 1] - self.x_edges[i];
            for (j, d) in row.iter().enumerate() {
                total += d * dx * (self.y_edges[j + 1] - self.y_edges[j]);
            }
        }
        total
    }

    /// Plug-in mutual information of the binned distribution, in nats.
    pub fn mutual_information(&self) -> f64 {
        let p: Vec<Vec<f64>> = self
            .density
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let dx = self.x_edges[i + 1] - self.x_edges[i];
                row.iter()
                    .enumerate()
                    .map(|(j, d)| d * dx * (self.y_edges[j + 1] - self.y_edges[j]))
                    .collect()
            })
            .collect();
        let px: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
        let py: Vec<f64> = (0..self.y_edges.len() - 1)
            .map(|j| p.iter().map(|r| r[j]).sum())
            .collect();
        let mut mi = 0.0;
        for (i, row) in p.iter().enumerate() {
            for (j, &pij) in row.iter().enumerate() {
                if pij > 0.0 {
                    mi += pij * (pij / (px[i] * py[j])).ln();
                }
            }
        }
        mi
    }
}

pub fn joint_pdf(xs: &[f64], ys: &[f64], bins: (Bins, Bins)) -> Result<JointPdf> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!(
            "paired samples differ in length: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    let ax = Axis::new(xs, bins.0)?;
    let ay = Axis::new(ys, bins.1)?;
    let mut counts = vec![vec![0usize; ay.count]; ax.count];
    for (&x, &y) in xs.iter().zip(ys) {
        counts[ax.index(x)][ay.index(y)] += 1;
    }
    let norm = 1.0 / (xs.len() as f64 * ax.width * ay.width);
    Ok(JointPdf {
        x_edges: ax.edges(),
        y_edges: ay.edges(),
        density: counts
            .iter()
            .map(|r| r.iter().map(|&c| c as f64 * norm).collect())
            .collect(),
    })
}

/// Parameters of `y = a x^b + c` and the attained sum of squared residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub residual: f64,
}

struct PowerLawProblem<'a> {
    lx: Vec<f64>,
    y: &'a [f64],
    fix_c: Option<f64>,
}

impl PowerLawProblem<'_> {
    /// Optimal `(a, c)` for fixed `b` and the resulting residual.
    fn project(&self, b: f64) -> Option<(f64, f64, f64)> {
        let xb: Vec<f64> = self.lx.iter().map(|l| (b * l).exp()).collect();
        let (a, c) = match self.fix_c {
            Some(c) => {
                let num: f64 = xb.iter().zip(self.y).map(|(p, y)| p * (y - c)).sum();
                let den: f64 = xb.iter().map(|p| p * p).sum();
                if !(den > 0.0) {
                    return None;
                }
                (num / den, c)
            }
            None => {
                let sol = least_squares(&[xb.clone(), vec![1.0; xb.len()]], self.y)?;
                (sol[0], sol[1])
            }
        };
        Some((a, c, self.residual(a, b, c)))
    }

    fn residual(&self, a: f64, b: f64, c: f64) -> f64 {
        self.lx
            .iter()
            .zip(self.y)
            .map(|(l, y)| (a * (b * l).exp() + c - y).powi(2))
            .sum()
    }
}

/// Least-squares fit of `y = a x^b + c`, optionally with `c` pinned.
/// The exponent is found by a scan and golden-section search on the
/// reduced problem (`a`, `c` eliminated), then polished by Gauss–Newton.
pub fn powerlaw_fit(x: &[f64], y: &[f64], fix_c: Option<f64>) -> Result<PowerLawFit> {
    if x.len() != y.len() {
        return Err(Error::Domain("x and y differ in length".into()));
    }
    if x.len() < 3 {
        return Err(Error::Domain(
            "power-law fit needs at least 3 points".into(),
        ));
    }
    if x.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("x must be strictly positive".into()));
    }
    check_finite(y)?;
    let problem = PowerLawProblem {
        lx: x.iter().map(|v| v.ln()).collect(),
        y,
        fix_c,
    };

    let grid: Vec<f64> = (0..=400).map(|i| -6.0 + 0.03 * i as f64).collect();
    let scored: Vec<(f64, f64)> = grid
        .iter()
        .filter_map(|&b| problem.project(b).map(|(_, _, r)| (b, r)))
        .collect();
    let Some(best) = scored
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
    else {
        return Err(Error::FitFailure {
            iterations: 0,
            objective: f64::NAN,
            best: Vec::new(),
        });
    };
    let lo = scored[best.saturating_sub(1)].0;
    let hi = scored[(best + 1).min(scored.len() - 1)].0;
    let reduced = |b: f64| problem.project(b).map_or(f64::INFINITY, |p| p.2);
    let b = golden_min(reduced, lo, hi, 200);
    let (mut a, mut c, mut res) = problem.project(b).ok_or_else(|| Error::FitFailure {
        iterations: 0,
        objective: f64::NAN,
        best: vec![b],
    })?;
    let mut b = b;

    // Gauss–Newton on all free parameters.
    for _ in 0..50 {
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(), Vec::new()];
        let mut r = Vec::with_capacity(y.len());
        for (l, yi) in problem.lx.iter().zip(y) {
            let p = (b * l).exp();
            cols[0].push(p);
            cols[1].push(a * p * l);
            r.push(yi - (a * p + c));
        }
        if fix_c.is_none() {
            cols.push(vec![1.0; y.len()]);
        }
        let Some(step) = least_squares(&cols, &r) else {
            break;
        };
        let (na, nb) = (a + step[0], b + step[1]);
        let nc = if fix_c.is_none() { c + step[2] } else { c };
        let nres = problem.residual(na, nb, nc);
        if !(nres < res) {
            break;
        }
        let small =
            (step[1].abs() < 1e-15 * (1.0 + b.abs())) && (step[0].abs() < 1e-15 * (1.0 + a.abs()));
        a = na;
        b = nb;
        c = nc;
        res = nres;
        if small {
            break;
        }
    }
    if !res.is_finite() {
        return Err(Error::FitFailure {
            iterations: 50,
            objective: res,
            best: vec![a, b, c],
        });
    }
    Ok(PowerLawFit {
        a,
        b,
        c,
        residual: res,
    })
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if hi - lo < 1e-15 * (1.0 + lo.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// `E[E(u)]` against `E(E[u])` over an ensemble of fields at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn jensen_check(fields: &[SpectralField]) -> Result<JensenCheck> {
    if fields.len() < 2 {
        return Err(Error::Domain(
            "Jensen check needs at least 2 realizations".into(),
        ));
    }
    let grid = fields[0].grid();
    let time = fields[0].time();
    if fields.iter().any(|f| f.grid() != grid) {
        return Err(Error::config(
            "grid",
            "realizations live on different grids",
        ));
    }
    if fields.iter().any(|f| f.time() != time) {
        return Err(Error::config("time", "realizations are at different times"));
    }
    let m = fields.len() as f64;
    let lhs = fields.iter().map(enstrophy).sum::<f64>() / m;
    let mut mean = vec![num_complex::Complex64::new(0.0, 0.0); grid.n_half()];
    for f in fields {
        for (acc, c) in mean.iter_mut().zip(f.coeffs()) {
            *acc += c;
        }
    }
    for c in mean.iter_mut() {
        *c /= m;
    }
    let rhs = enstrophy(&SpectralField::from_coeffs(grid, mean)?);
    Ok(JensenCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn moments_by_hand() {
        let s = moments(&[1.0, 2.0, 3.0]).unwrap();
        assert!((s.mu - 2.0).abs() < 1e-15);
        assert!((s.sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(s.skew.abs() < 1e-15);
        assert!((s.kurt - 1.5).abs() < 1e-14);
        assert_eq!(moments(&[-4.0, 4.0]).unwrap().skew, 0.0);
    }

    #[test]
    fn moments_degenerate_and_short() {
        assert!(matches!(
            moments(&[2.0, 2.0, 2.0]),
            Err(Error::DegenerateMoments(_))
        ));
        assert!(moments(&[1.0]).is_err());
    }

    #[test]
    fn gaussian_reference_values() {
        let m = 1_000_000;
        let s = moments(&normals(m, 1)).unwrap();
        let tol = 5.0 / (m as f64).sqrt();
        assert!(s.skew.abs() < tol, "{s:?}");
        assert!((s.kurt - 3.0).abs() < tol, "{s:?}");
    }

    #[test]
    fn streaming_matches_two_pass() {
        let xs: Vec<f64> = normals(500, 3)
            .iter()
            .map(|x| 1.13 + 0.01 * x.exp())
            .collect();
        let r = running_errors(&xs).unwrap();
        let s = moments(&xs).unwrap();
        let mut acc = Accumulator::default();
        xs.iter().for_each(|&x| acc.push(x));
        let (mu, sigma, skew, kurt) = acc.moments();
        assert!((mu - s.mu).abs() < 1e-14);
        assert!((sigma / s.sigma - 1.0).abs() < 1e-10);
        assert!((skew.unwrap() - s.skew).abs() < 1e-8);
        assert!((kurt.unwrap() - s.kurt).abs() < 1e-8);
        assert_eq!(r.mu.as_ref().unwrap()[499], 0.0);
    }

    #[test]
    fn running_errors_of_constant_samples_vanish() {
        let r = running_errors(&[5.0; 20]).unwrap();
        for stat in Statistic::ALL {
            assert!(r.curve(stat).unwrap().iter().all(|&e| e == 0.0));
        }
    }

    #[test]
    fn running_errors_zero_truth_is_flagged() {
        let xs: Vec<f64> = (0..20)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let r = running_errors(&xs).unwrap();
        assert!(r.mu.is_none());
        assert!(r.sigma.is_some());
    }

    #[test]
    fn running_mean_error_decays_like_inverse_root() {
        let xs = normals(10_000, 5);
        let r = running_errors(&xs).unwrap();
        let slope = loglog_slope(&r.m, r.mu.as_ref().unwrap(), 10).unwrap();
        assert!((-0.7..=-0.3).contains(&slope), "{slope}");
    }

    #[test]
    fn heavy_tails_make_kurtosis_noisier() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / 2.5))
            .collect();
        let r = running_errors(&xs).unwrap();
        let rms = |c: &[f64]| {
            let tail = &c[1000..9000];
            (tail.iter().map(|e| e * e).sum::<f64>() / tail.len() as f64).sqrt()
        };
        assert!(rms(r.kurt.as_ref().unwrap()) > rms(r.mu.as_ref().unwrap()));
    }

    #[test]
    fn bootstrap_width_matches_clt() {
        let m = 10_000;
        let xs = normals(m, 9);
        let (lo, hi) = bootstrap_ci(&xs, Statistic::Mu, 0.95, 1000, 1).unwrap();
        let expect = 2.0 * 1.96 / (m as f64).sqrt();
        assert!(((hi - lo) / expect - 1.0).abs() < 0.2, "{lo} {hi}");
        assert_eq!(
            bootstrap_ci(&xs, Statistic::Mu, 0.95, 1000, 1).unwrap(),
            (lo, hi)
        );
    }

    #[test]
    fn bootstrap_constant_and_bad_args() {
        assert_eq!(
            bootstrap_ci(&[3.0; 10], Statistic::Mu, 0.95, 1000, 0).unwrap(),
            (3.0, 3.0)
        );
        assert!(bootstrap_ci(&[1.0, 2.0], Statistic::Mu, 0.95, 10, 0).is_err());
        assert!(bootstrap_ci(&[1.0, 2.0], Statistic::Mu, 1.5, 1000, 0).is_err());
    }

    #[test]
    fn histogram_of_uniform_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let h = histogram_pdf(&xs, Bins::Fixed(20)).unwrap();
        assert!((h.mass() - 1.0).abs() < 1e-12);
        assert!(h.density.iter().all(|d| (d - 1.0).abs() < 0.05));
        let auto = histogram_pdf(&xs, Bins::Auto).unwrap();
        assert!((auto.mass() - 1.0).abs() < 1e-12);
        assert!(auto.density.len() > 20);
    }

    #[test]
    fn histogram_of_normal_matches_density() {
        let xs = normals(100_000, 6);
        let h = histogram_pdf(&xs, Bins::Auto).unwrap();
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let err = h
            .centers()
            .iter()
            .zip(&h.density)
            .map(|(&c, d)| (d - pdf(c)).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn histogram_of_point_mass() {
        let h = histogram_pdf(&[2.5; 7], Bins::Auto).unwrap();
        assert_eq!(h.density.len(), 1);
        assert!((h.mass() - 1.0).abs() < 1e-12);
        assert!(h.edges[0] < 2.5 && h.edges[1] > 2.5);
    }

    #[test]
    fn joint_pdf_of_independent_pairs() {
        let xs = normals(100_000, 10);
        let ys = normals(100_000, 11);
        let j = joint_pdf(&xs, &ys, (Bins::Fixed(10), Bins::Fixed(10))).unwrap();
        assert!((j.mass() - 1.0).abs() < 1e-12);
        assert!(j.mutual_information() < 0.01);
        let dependent = joint_pdf(&xs, &xs, (Bins::Fixed(10), Bins::Fixed(10))).unwrap();
        assert!(dependent.mutual_information() > 1.0);
    }

    #[test]
    fn powerlaw_recovers_generators() {
        let rho = [1e-6, 1e-4, 1e-2, 2e-2, 5e-2];
        for (a, b, c) in [
            (0.233, 0.792, 0.0),
            (3.136, 1.984, 0.0),
            (12.888, 1.128, -0.015),
            (1008.425, 2.615, 3.0),
        ] {
            let y: Vec<f64> = rho.iter().map(|r: &f64| a * r.powf(b) + c).collect();
            let f = powerlaw_fit(&rho, &y, None).unwrap();
            assert!((f.a / a - 1.0).abs() < 1e-6, "{f:?}");
            assert!((f.b / b - 1.0).abs() < 1e-6, "{f:?}");
            assert!((f.c - c).abs() < 1e-6 * c.abs().max(1e-3), "{f:?}");
            let pinned = powerlaw_fit(&rho, &y, Some(c)).unwrap();
            assert!((pinned.a / a - 1.0).abs() < 1e-6 && pinned.c == c);
        }
    }

    #[test]
    fn powerlaw_flat_data() {
        let f = powerlaw_fit(&[0.1, 0.2, 0.5, 1.0], &[4.0; 4], None).unwrap();
        assert!(f.a.abs() < 1e-10);
        assert!((f.c - 4.0).abs() < 1e-10);
        assert!(powerlaw_fit(&[0.0, 1.0, 2.0], &[1.0; 3], None).is_err());
    }

    #[test]
    fn jensen_cases() {
        let grid = GridSpec::new(16).unwrap();
        let s = SpectralField::from_fn(grid, f64::sin).unwrap();
        let m = SpectralField::from_fn(grid, |x| -x.sin()).unwrap();
        let j = jensen_check(&[s.clone(), m]).unwrap();
        assert!(j.rhs.abs() < 1e-20);
        assert!((j.lhs - std::f64::consts::PI.powi(2)).abs() < 1e-12);
        assert!(j.holds);
        let same = jensen_check(&[s.clone(), s.clone()]).unwrap();
        assert!((same.lhs - same.rhs).abs() < 1e-12 && same.holds);
        let other = SpectralField::zeros(GridSpec::new(32).unwrap());
        assert!(jensen_check(&[s, other]).is_err());
    }

    #[test]
    fn outcome_of_unresolved_run_is_estimated() {
        use crate::deterministic::DiagnosticRecord;
        let records: Vec<DiagnosticRecord> = (0..400)
            .map(|i| {
                let t = i as f64 * 2.5e-3;
                DiagnosticRecord {
                    t,
                    enstrophy: 2.0 * (1.1 - t).powf(-0.6),
                    delta: None,
                    delta_reliable: false,
                    n_active: 64,
                    dt: 2.5e-3,
                }
            })
            .collect();
        let grid = GridSpec::new(64).unwrap();
        let mut tr = Trajectory {
            records,
            snapshots: Vec::new(),
            termination: Termination::ResolutionExhausted,
            final_state: SpectralField::zeros(grid),
        };
        let o = extract_outcome(3, &tr, 1e-3, &WindowPlan::default());
        assert!((o.t_star.unwrap() - 1.1).abs() < 1e-6);
        assert!(!o.censored);
        assert!((o.t_max - 0.9975).abs() < 1e-12);
        tr.termination = Termination::ReachedTEnd;
        let o = extract_outcome(3, &tr, 1e-3, &WindowPlan::default());
        assert!(o.censored && o.t_star.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn affine_transforms(a in 0.01f64..100.0, b in -50.0f64..50.0, seed in 0u64..1000) {
            let xs = normals(200, seed);
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let (s, t) = (moments(&xs).unwrap(), moments(&ys).unwrap());
            prop_assert!((t.mu - (a * s.mu + b)).abs() < 1e-12 * (1.0 + t.mu.abs().max(a)));
            prop_assert!((t.sigma - a * s.sigma).abs() < 1e-12 * t.sigma.max(1.0));
            prop_assert!((t.skew - s.skew).abs() < 1e-12);
            prop_assert!((t.kurt - s.kurt).abs() < 1e-12);
            let neg: Vec<f64> = xs.iter().map(|x| -a * x).collect();
            let n = moments(&neg).unwrap();
            prop_assert!((n.sigma - a * s.sigma).abs() < 1e-12 * n.sigma.max(1.0));
        }

        #[test]
        fn histogram_mass_is_one(seed in 0u64..1000, bins in 1usize..200) {
            let xs = normals(300, seed);
            let h = histogram_pdf(&xs, Bins::Fixed(bins)).unwrap();
            prop_assert!((h.mass() - 1.0).abs() < 1e-12);
            let auto = histogram_pdf(&xs, Bins::Auto).unwrap();
            prop_assert!((auto.mass() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn powerlaw_exact_for_any_exponent(a in 0.1f64..100.0, b in 0.5f64..3.0, c in -5.0f64..5.0) {
            let x = [1e-6, 1e-4, 1e-2, 2e-2, 5e-2, 1e-1];
            let y: Vec<f64> = x.iter().map(|r: &f64| a * r.powf(b) + c).collect();
            let f = powerlaw_fit(&x, &y, None).unwrap();
            prop_assert!(f.residual < 1e-10, "{:?}", f);
        }

        #[test]
        fn bootstrap_interval_contains_estimate(seed in 0u64..50) {
            let xs = normals(200, seed);
            let (lo, hi) = bootstrap_ci(&xs, Statistic::Mu, 0.9, 1000, seed).unwrap();
            let mu = moments(&xs).unwrap().mu;
            prop_assert!(lo <= mu && mu <= hi);
        }
    }
}
