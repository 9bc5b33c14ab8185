//! Blow-up time estimation by sliding-window fits of `c (T* − t)^γ`.
//!
//! Each window solves
//!
//! ```text
//! min_{c, γ, T*}  Σ_i [ ln( c (T* − t_i)^γ / y_i ) ]²
//! ```
//!
//! with Levenberg–Marquardt on `(ln c, γ, q)`, `T* = t_last + ε + e^q`, so the
//! logarithm stays defined throughout. Windows are processed in time order and
//! every fit starts from the parameters of the previous one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_dense;

const MAX_ITERATIONS: usize = 500;
const STEP_TOLERANCE: f64 = 1e-10;

/// Which diagnostic a series holds; fixes the sign of the starting exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Grows without bound, `γ < 0`.
    Enstrophy,
    /// Vanishes at the singularity, `γ > 0`.
    StripWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupGuess {
    pub c: f64,
    pub gamma: f64,
    pub t_star: f64,
}

impl BlowupGuess {
    /// Places `T*` a fifth of the data span past the last sample, takes
    /// `|γ| = 1` with the sign implied by `quantity`, and picks `c` so the
    /// model passes through the last sample.
    pub fn initial(series: &[(f64, f64)], quantity: Quantity) -> Result<Self> {
        let (first, last) = match (series.first(), series.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(Error::Domain("empty series".into())),
        };
        let span = (last.0 - first.0).max(f64::EPSILON);
        let gamma = match quantity {
            Quantity::Enstrophy => -1.0,
            Quantity::StripWidth => 1.0,
        };
        let gap = 0.2 * span;
        Ok(Self {
            c: last.1 * gap.powf(-gamma),
            gamma,
            t_star: last.0 + gap,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub c: f64,
    pub gamma: f64,
    pub t_star: f64,
    /// Attained value of the log-space objective.
    pub objective: f64,
    pub window_center: f64,
    pub iterations: usize,
    /// Curvature of the objective along `T*` with `(c, γ)` eliminated. Near
    /// zero when the data do not pin down `T*` (e.g. a flat series).
    pub t_star_curvature: f64,
}

impl BlowupFit {
    pub fn guess(&self) -> BlowupGuess {
        BlowupGuess {
            c: self.c,
            gamma: self.gamma,
            t_star: self.t_star,
        }
    }

    /// Whether `T*` is constrained by the data.
    pub fn identifiable(&self) -> bool {
        self.t_star_curvature > 1e-8
    }
}

/// Sliding windows over sample indices: `count` windows of `window_len`
/// points, consecutive windows shifted by `stride`, the last one ending at the
/// final sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub window_len: usize,
    pub stride: usize,
    pub count: usize,
}

/// Thinning spacing for deterministic series.
pub const FIT_SPACING: f64 = 1e-3;
/// Thinning spacing for stochastic series.
pub const NOISY_FIT_SPACING: f64 = 2e-3;

impl Default for WindowPlan {
    fn default() -> Self {
        Self {
            window_len: 50,
            stride: 10,
            count: 10,
        }
    }
}

impl WindowPlan {
    /// Longer windows for noisy enstrophy series, used with a fit spacing of
    /// [`NOISY_FIT_SPACING`]: each window then spans 0.2 time units, enough to
    /// average out the forcing.
    pub const NOISY: WindowPlan = WindowPlan {
        window_len: 100,
        stride: 10,
        count: 5,
    };

    /// The largest plan with the given length and stride that fits in
    /// `n_samples`.
    pub fn covering(n_samples: usize, window_len: usize, stride: usize) -> Result<Self> {
        if window_len < 4 || stride == 0 {
            return Err(Error::config(
                "window",
                "needs window_len ≥ 4 and stride ≥ 1",
            ));
        }
        if n_samples < window_len {
            return Err(Error::Domain(format!(
                "{n_samples} samples cannot hold a window of {window_len}"
            )));
        }
        Ok(Self {
            window_len,
            stride,
            count: (n_samples - window_len) / stride + 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 4 {
            return Err(Error::config("window_len", "must be at least 4"));
        }
        if self.stride == 0 {
            return Err(Error::config("window_stride", "must be positive"));
        }
        if self.count == 0 {
            return Err(Error::config("window_count", "must be positive"));
        }
        Ok(())
    }

    /// Index ranges of the windows in sliding order.
    pub fn windows(&self, n_samples: usize) -> Result<Vec<std::ops::Range<usize>>> {
        self.validate()?;
        let reach = self.window_len + (self.count - 1) * self.stride;
        if reach > n_samples {
            return Err(Error::Domain(format!(
                "window plan needs {reach} samples, series has {n_samples}"
            )));
        }
        let first = n_samples - reach;
        Ok((0..self.count)
            .map(|j| {
                let start = first + j * self.stride;
                start..start + self.window_len
            })
            .collect())
    }
}

struct Problem<'a> {
    t: &'a [f64],
    log_y: Vec<f64>,
    t_last: f64,
    eps: f64,
}

impl Problem<'_> {
    fn t_star(&self, q: f64) -> f64 {
        self.t_last + self.eps + q.exp()
    }

    fn residuals(&self, p: &[f64; 3]) -> Vec<f64> {
        let ts = self.t_star(p[2]);
        self.t
            .iter()
            .zip(&self.log_y)
            .map(|(&t, &ly)| p[0] + p[1] * (ts - t).ln() - ly)
            .collect()
    }

    fn objective(&self, p: &[f64; 3]) -> f64 {
        self.residuals(p).iter().map(|r| r * r).sum()
    }

    fn jacobian(&self, p: &[f64; 3]) -> Vec<[f64; 3]> {
        let eq = p[2].exp();
        let ts = self.t_last + self.eps + eq;
        self.t
            .iter()
            .map(|&t| {
                let gap = ts - t;
                [1.0, gap.ln(), p[1] * eq / gap]
            })
            .collect()
    }
}

fn normal_equations(jac: &[[f64; 3]], res: &[f64]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for (row, r) in jac.iter().zip(res) {
        for a in 0..3 {
            jtr[a] += row[a] * r;
            for b in 0..3 {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    (jtj, jtr)
}

/// Schur complement of `JᵀJ` for the `T*` direction, expressed per unit of
/// `T*` (not of `q`).
fn t_star_curvature(jtj: &[[f64; 3]; 3], dq_dt: f64) -> f64 {
    let a = [[jtj[0][0], jtj[0][1]], [jtj[1][0], jtj[1][1]]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let b = [jtj[0][2], jtj[1][2]];
    let reduced = if det.abs() > 1e-300 {
        let x0 = (a[1][1] * b[0] - a[0][1] * b[1]) / det;
        let x1 = (a[0][0] * b[1] - a[1][0] * b[0]) / det;
        jtj[2][2] - (b[0] * x0 + b[1] * x1)
    } else {
        0.0
    };
    (reduced * dq_dt * dq_dt).max(0.0)
}

/// Fits `c (T* − t)^γ` to one window of positive data.
pub fn fit_window(series: &[(f64, f64)], guess: BlowupGuess) -> Result<BlowupFit> {
    if series.len() < 3 {
        return Err(Error::Domain("a window needs at least 3 samples".into()));
    }
    if let Some(&(t, y)) = series.iter().find(|(_, y)| !(*y > 0.0) || !y.is_finite()) {
        return Err(Error::Domain(format!("non-positive value {y} at t = {t}")));
    }
    let t: Vec<f64> = series.iter().map(|s| s.0).collect();
    let t_last = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(guess.t_star > t_last) {
        return Err(Error::Domain(format!(
            "initial T* = {} must exceed the last sample time {t_last}",
            guess.t_star
        )));
    }
    if !(guess.c > 0.0) {
        return Err(Error::Domain("initial c must be positive".into()));
    }
    let span = (t_last - t[0]).abs().max(1.0);
    let problem = Problem {
        t: &t,
        log_y: series.iter().map(|s| s.1.ln()).collect(),
        t_last,
        eps: 1e-12 * span,
    };

    let gap0 = (guess.t_star - t_last - problem.eps).max(1e-3 * problem.eps);
    let mut p = [guess.c.ln(), guess.gamma, gap0.ln()];
    let mut obj = problem.objective(&p);
    let mut lambda = 1e-3;
    let n = series.len() as f64;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if obj <= 1e-28 * n {
            converged = true;
            break;
        }
        let res = problem.residuals(&p);
        let jac = problem.jacobian(&p);
        let (jtj, jtr) = normal_equations(&jac, &res);
        let gnorm = jtr.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if gnorm < 1e-15 * (1.0 + obj) {
            converged = true;
            break;
        }
        let diag_floor = 1e-12 * (0..3).map(|i| jtj[i][i]).fold(0.0, f64::max);

        let mut accepted = false;
        while lambda < 1e16 {
            let m: Vec<Vec<f64>> = (0..3)
                .map(|a| {
                    (0..3)
                        .map(|b| {
                            if a == b {
                                jtj[a][b] + lambda * (jtj[a][a] + diag_floor)
                            } else {
                                jtj[a][b]
                            }
                        })
                        .collect()
                })
                .collect();
            let rhs = jtr.iter().map(|g| -g).collect();
            let Some(step) = solve_dense(m, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            let trial_obj = problem.objective(&trial);
            if trial_obj.is_finite() && trial_obj <= obj {
                let small = (0..3).all(|i| step[i].abs() <= STEP_TOLERANCE * (1.0 + p[i].abs()));
                p = trial;
                obj = trial_obj;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            // No descent direction left at any damping: a stationary point.
            converged = true;
            break;
        }
    }

    let ts = problem.t_star(p[2]);
    if !converged {
        return Err(Error::FitFailure {
            iterations,
            objective: obj,
            best: vec![p[0].exp(), p[1], ts],
        });
    }
    let (jtj, _) = normal_equations(&problem.jacobian(&p), &problem.residuals(&p));
    let dq_dt = 1.0 / p[2].exp();
    Ok(BlowupFit {
        c: p[0].exp(),
        gamma: p[1],
        t_star: ts,
        objective: obj,
        window_center: 0.5 * (t[0] + t_last),
        iterations,
        t_star_curvature: t_star_curvature(&jtj, dq_dt),
    })
}

/// Runs [`fit_window`] over every window of `plan`, each warm-started from
/// the previous window's parameters. The last entry is the estimate of `T*`.
pub fn sliding_estimate(
    series: &[(f64, f64)],
    plan: &WindowPlan,
    guess: BlowupGuess,
) -> Result<Vec<BlowupFit>> {
    if series.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::Domain(
            "series times must be strictly increasing".into(),
        ));
    }
    let mut current = guess;
    let mut fits = Vec::with_capacity(plan.count);
    for (index, range) in plan.windows(series.len())?.into_iter().enumerate() {
        let window = &series[range];
        let t_last = window[window.len() - 1].0;
        if current.t_star <= t_last {
            // The chained estimate fell behind the data; restart just ahead.
            current.t_star = t_last + (t_last - window[0].0).max(f64::EPSILON) * 0.2;
        }
        let fit = fit_window(window, current).map_err(|e| Error::Window {
            index,
            source: Box::new(e),
        })?;
        current = fit.guess();
        fits.push(fit);
    }
    Ok(fits)
}

/// Thins `series` to `spacing`, runs the sliding fit over the last windows
/// of `plan` (fewer if the data are short) and returns the final window's fit.
pub fn estimate_t_star(
    series: &[(f64, f64)],
    quantity: Quantity,
    spacing: f64,
    plan: &WindowPlan,
) -> Result<BlowupFit> {
    if !(spacing >= 0.0) {
        return Err(Error::config("spacing", "must be non-negative"));
    }
    let thinned = thin_series(series, spacing);
    let most = WindowPlan::covering(thinned.len(), plan.window_len, plan.stride)?;
    let plan = WindowPlan {
        count: plan.count.min(most.count),
        ..*plan
    };
    let first = plan.windows(thinned.len())?[0].clone();
    let guess = BlowupGuess::initial(&thinned[first], quantity)?;
    let fits = sliding_estimate(&thinned, &plan, guess)?;
    Ok(*fits.last().expect("plan has at least one window"))
}

/// Keeps samples at least `spacing` apart, anchored at the final sample.
pub fn thin_series(series: &[(f64, f64)], spacing: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &s in series.iter().rev() {
        match out.last() {
            Some(&(t, _)) if t - s.0 < spacing => {}
            _ => out.push(s),
        }
    }
    out.reverse();
    out
}

/// Blow-up time of the inviscid problem, `−1 / inf g'`. `None` when the
/// slope is not negative (no blow-up).
pub fn limit_blowup_inviscid(g_min_slope: f64) -> Option<f64> {
    (g_min_slope < 0.0).then(|| -1.0 / g_min_slope)
}

/// Blow-up time of the damped inviscid problem reached as `α → 0`,
/// `−(1/ν) ln(ν / inf g' + 1)`, provided `inf g' + ν < 0`.
pub fn limit_blowup_alpha_zero(nu: f64, g_min_slope: f64) -> Result<Option<f64>> {
    if !(nu > 0.0) {
        return Err(Error::config("nu", "must be positive"));
    }
    if g_min_slope + nu < 0.0 {
        Ok(Some(-(nu / g_min_slope).ln_1p() / nu))
    } else {
        Ok(None)
    }
}
