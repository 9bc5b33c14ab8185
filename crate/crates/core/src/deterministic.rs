//! Deterministic fractional Burgers solver: Crank–Nicolson / low-storage RK3
//! stepping with automatic grid refinement.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, enstrophy, strip_fit};
use crate::error::{Error, Result};
use crate::spectral::{self, dissipation_symbol, max_abs_physical, GridSpec, SpectralField};

/// Explicit stage weights applied to the current nonlinear term.
const RK3_GAMMA: [f64; 3] = [8.0 / 15.0, 5.0 / 12.0, 3.0 / 4.0];
/// Explicit stage weights applied to the previous stage's nonlinear term.
const RK3_ZETA: [f64; 3] = [0.0, -17.0 / 60.0, -5.0 / 12.0];

/// Time integrator used by [`run_deterministic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    /// Crank–Nicolson on the dissipation, three-stage RK on the nonlinearity.
    #[default]
    ImexRk3,
    /// The drift part of the stochastic scheme, `û + (dt/3)[f(Q) + 2f(Q)]`
    /// with `Q = û + (dt/2) f(û)`. Used to compare against noise-free
    /// stochastic runs.
    SrkDrift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub nu: f64,
    pub alpha: f64,
    pub t_end: f64,
    pub dt_init: f64,
    pub cfl: f64,
    pub n_init: usize,
    pub n_max: usize,
    /// Relative top-octave amplitude that triggers refinement.
    pub refine_threshold: f64,
    pub dt_min: f64,
    pub snapshot_times: Vec<f64>,
    /// Steps between analyticity-strip fits; 0 disables them.
    pub strip_stride: usize,
    pub strip_floor: f64,
    pub strip_k_lo: usize,
    pub scheme: TimeScheme,
    /// Disables the quadratic term (linear test problems).
    pub nonlinear: bool,
    /// Stop once the enstrophy exceeds this multiple of its initial value.
    pub enstrophy_cap: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: 0.11,
            alpha: 0.5,
            t_end: 2.0,
            dt_init: 1e-3,
            cfl: 0.5,
            n_init: 512,
            n_max: 1 << 14,
            refine_threshold: 1e-13,
            dt_min: 1e-10,
            snapshot_times: Vec::new(),
            strip_stride: 10,
            strip_floor: diagnostics::DEFAULT_FLOOR,
            strip_k_lo: diagnostics::DEFAULT_K_LO,
            scheme: TimeScheme::ImexRk3,
            nonlinear: true,
            enstrophy_cap: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    key,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        positive("nu", self.nu)?;
        positive("t_end", self.t_end)?;
        positive("dt_init", self.dt_init)?;
        positive("dt_min", self.dt_min)?;
        positive("refine_threshold", self.refine_threshold)?;
        positive("strip_floor", self.strip_floor)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(
                "alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config(
                "cfl",
                format!("must lie in (0, 1], got {}", self.cfl),
            ));
        }
        GridSpec::new(self.n_init).map_err(|_| {
            Error::config(
                "n_init",
                format!("must be a power of two ≥ 8, got {}", self.n_init),
            )
        })?;
        GridSpec::new(self.n_max).map_err(|_| {
            Error::config(
                "n_max",
                format!("must be a power of two ≥ 8, got {}", self.n_max),
            )
        })?;
        if self.n_init > self.n_max {
            return Err(Error::config("n_max", "must not be smaller than n_init"));
        }
        if self.dt_min >= self.dt_init {
            return Err(Error::config("dt_min", "must be smaller than dt_init"));
        }
        if self.snapshot_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "snapshot_times",
                "must be strictly increasing",
            ));
        }
        if self
            .snapshot_times
            .iter()
            .any(|&t| !(0.0..=self.t_end).contains(&t))
        {
            return Err(Error::config("snapshot_times", "must lie in [0, t_end]"));
        }
        if let Some(cap) = self.enstrophy_cap {
            positive("enstrophy_cap", cap)?;
        }
        Ok(())
    }
}

/// Diagnostics recorded after each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub enstrophy: f64,
    pub delta: Option<f64>,
    pub delta_reliable: bool,
    pub n_active: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTEnd,
    ResolutionExhausted,
    DtUnderflow,
    NumericalFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::ResolutionExhausted => "resolution_exhausted",
            Termination::DtUnderflow => "dt_underflow",
            Termination::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticRecord>,
    /// Fields at the requested snapshot times, each carrying its time tag.
    pub snapshots: Vec<SpectralField>,
    pub termination: Termination,
    /// Last valid state.
    pub final_state: SpectralField,
}

impl Trajectory {
    pub fn enstrophy_series(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, r.enstrophy)).collect()
    }

    /// `(t, δ)` for records with a reliable strip fit.
    pub fn strip_series(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter(|r| r.delta_reliable)
            .filter_map(|r| r.delta.map(|d| (r.t, d)))
            .collect()
    }

    /// `(max E, argmax E)` over the recorded series.
    pub fn enstrophy_peak(&self) -> (f64, f64) {
        self.records
            .iter()
            .fold((f64::NEG_INFINITY, 0.0), |(e, t), r| {
                if r.enstrophy > e {
                    (r.enstrophy, r.t)
                } else {
                    (e, t)
                }
            })
    }
}

/// Right-hand side pieces for a fixed grid.
pub(crate) struct Operators {
    pub grid: GridSpec,
    pub symbol: Vec<f64>,
    pub nonlinear: bool,
}

impl Operators {
    pub fn new(grid: GridSpec, cfg: &SolverConfig) -> Result<Self> {
        Ok(Self {
            grid,
            symbol: dissipation_symbol(grid, cfg.alpha, cfg.nu)?,
            nonlinear: cfg.nonlinear,
        })
    }

    pub fn nonlinear(&self, u: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        if self.nonlinear {
            spectral::nonlinear_into(u, self.grid, out)
        } else {
            out.fill(Complex64::new(0.0, 0.0));
            Ok(())
        }
    }

    /// `f(û) = r(û) + A û`.
    pub fn drift(&self, u: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.nonlinear(u, out)?;
        for ((o, c), a) in out.iter_mut().zip(u).zip(&self.symbol) {
            *o += c * a;
        }
        Ok(())
    }

    pub fn imex_step(&self, u: &mut [Complex64], dt: f64) -> Result<()> {
        let n = u.len();
        let mut r = vec![Complex64::new(0.0, 0.0); n];
        let mut r_prev = vec![Complex64::new(0.0, 0.0); n];
        for stage in 0..3 {
            self.nonlinear(u, &mut r)?;
            let (g, z) = (RK3_GAMMA[stage], RK3_ZETA[stage]);
            let half = 0.5 * dt * (g + z);
            for k in 0..n {
                let c = half * self.symbol[k];
                let rhs = u[k] * (1.0 + c) + (r[k] * g + r_prev[k] * z) * dt;
                u[k] = rhs / (1.0 - c);
            }
            if !u.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "non-finite state after substage {}",
                    stage + 1
                )));
            }
            std::mem::swap(&mut r, &mut r_prev);
        }
        Ok(())
    }

    pub fn drift_step(&self, u: &mut [Complex64], dt: f64) -> Result<()> {
        let n = u.len();
        let mut f = vec![Complex64::new(0.0, 0.0); n];
        self.drift(u, &mut f)?;
        let q: Vec<Complex64> = u.iter().zip(&f).map(|(a, b)| a + b * (0.5 * dt)).collect();
        self.drift(&q, &mut f)?;
        for (a, fq) in u.iter_mut().zip(&f) {
            *a += (fq + fq * 2.0) * (dt / 3.0);
        }
        if u.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericalFailure("non-finite state".into()))
        }
    }

    fn step(&self, scheme: TimeScheme, u: &mut [Complex64], dt: f64) -> Result<()> {
        match scheme {
            TimeScheme::ImexRk3 => self.imex_step(u, dt),
            TimeScheme::SrkDrift => self.drift_step(u, dt),
        }
    }
}

/// Advances `state` by one CN/RK3 step of size `dt`.
pub fn imex_step(state: &SpectralField, dt: f64, cfg: &SolverConfig) -> Result<SpectralField> {
    if !(dt > 0.0) {
        return Err(Error::config("dt", "must be positive"));
    }
    state.check_finite()?;
    let ops = Operators::new(state.grid(), cfg)?;
    let mut u = state.coeffs().to_vec();
    ops.imex_step(&mut u, dt)?;
    Ok(SpectralField::from_raw(state.grid(), u, state.time() + dt))
}

/// Ratio of the largest amplitude in `k ∈ [7N/16, N/2]` to the largest
/// amplitude overall; zero for the zero field.
pub fn tail_ratio(field: &SpectralField) -> f64 {
    let n = field.grid().n();
    let max = field.max_abs_coeff();
    if max == 0.0 {
        return 0.0;
    }
    let lo = 7 * n / 16;
    let tail = field.coeffs()[lo - 1..]
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    tail / max
}

/// Doubles the resolution (and halves `dt`) when the spectral tail exceeds
/// `cfg.refine_threshold`, unless the grid is already at `cfg.n_max`.
pub fn maybe_refine(
    state: &SpectralField,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<(SpectralField, f64, bool)> {
    let grid = state.grid();
    if tail_ratio(state) > cfg.refine_threshold && grid.n() < cfg.n_max {
        Ok((state.zero_padded(grid.refined())?, 0.5 * dt, true))
    } else {
        Ok((state.clone(), dt, false))
    }
}

pub(crate) fn make_record(
    field: &SpectralField,
    dt: f64,
    with_strip: bool,
    cfg: &SolverConfig,
) -> DiagnosticRecord {
    let fit = if with_strip {
        strip_fit(field, cfg.strip_floor, cfg.strip_k_lo).ok()
    } else {
        None
    };
    DiagnosticRecord {
        t: field.time(),
        enstrophy: enstrophy(field),
        delta: fit.map(|f| f.delta),
        delta_reliable: fit.is_some_and(|f| f.reliable),
        n_active: field.grid().n(),
        dt,
    }
}

/// Trims a step of size `h` so that the remaining distance `gap` to the next
/// output time is never left as a sliver. Returns the step and whether it
/// lands exactly on the target.
pub(crate) fn landing_step(h: f64, gap: f64) -> (f64, bool) {
    if h >= gap {
        (gap, true)
    } else if gap - h < 0.5 * h {
        (0.5 * gap, false)
    } else {
        (h, false)
    }
}

/// Integrates from `initial` until `cfg.t_end` or until one of the stopping
/// conditions in [`Termination`] fires.
pub fn run_deterministic(cfg: &SolverConfig, initial: &SpectralField) -> Result<Trajectory> {
    cfg.validate()?;
    if initial.grid().n() != cfg.n_init {
        return Err(Error::config(
            "n_init",
            format!(
                "initial field has {} points, configuration expects {}",
                initial.grid().n(),
                cfg.n_init
            ),
        ));
    }
    initial.check_finite()?;

    let mut state = initial.clone().with_time(0.0);
    let mut ops = Operators::new(state.grid(), cfg)?;
    let mut dt = cfg.dt_init;
    let mut t = 0.0;
    let mut steps = 0usize;
    let strip_due = |steps: usize| cfg.strip_stride > 0 && steps.is_multiple_of(cfg.strip_stride);

    let mut records = vec![make_record(&state, 0.0, strip_due(0), cfg)];
    let e0 = records[0].enstrophy;
    let mut snapshots = Vec::new();
    let mut pending = cfg.snapshot_times.iter().copied().peekable();
    if pending.peek() == Some(&0.0) {
        snapshots.push(state.clone());
        pending.next();
    }

    let termination = loop {
        if t >= cfg.t_end {
            break Termination::ReachedTEnd;
        }

        let mut exhausted = false;
        while tail_ratio(&state) > cfg.refine_threshold {
            if state.grid().n() >= cfg.n_max {
                exhausted = true;
                break;
            }
            let (refined, new_dt, _) = maybe_refine(&state, dt, cfg)?;
            state = refined;
            dt = new_dt;
            ops = Operators::new(state.grid(), cfg)?;
        }
        if exhausted {
            break Termination::ResolutionExhausted;
        }

        let umax = match max_abs_physical(&state) {
            Ok(v) => v,
            Err(_) => break Termination::NumericalFailure,
        };
        let mut h = dt;
        if umax > 0.0 {
            h = h.min(cfg.cfl * state.grid().dx() / umax);
        }
        if h < cfg.dt_min {
            break Termination::DtUnderflow;
        }
        let target = pending.peek().copied().unwrap_or(cfg.t_end).min(cfg.t_end);
        let (h, landing) = landing_step(h, target - t);

        let mut u = state.clone().into_coeffs();
        if ops.step(cfg.scheme, &mut u, h).is_err() {
            break Termination::NumericalFailure;
        }
        t = if landing { target } else { t + h };
        steps += 1;
        state = SpectralField::from_raw(state.grid(), u, t);

        let record = make_record(&state, h, strip_due(steps), cfg);
        let capped = cfg
            .enstrophy_cap
            .is_some_and(|cap| record.enstrophy > cap * e0);
        records.push(record);
        if landing && pending.peek() == Some(&target) {
            snapshots.push(state.clone());
            pending.next();
        }
        if capped {
            break Termination::ResolutionExhausted;
        }
    };

    Ok(Trajectory {
        records,
        snapshots,
        termination,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_cfg(alpha: f64, nu: f64) -> SolverConfig {
        SolverConfig {
            alpha,
            nu,
            nonlinear: false,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn zero_field_stays_zero() {
        let grid = GridSpec::new(64).unwrap();
        let cfg = SolverConfig::default();
        let out = imex_step(&SpectralField::zeros(grid), 1e-2, &cfg).unwrap();
        assert!(out.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn linear_one_step_error_is_third_order() {
        let grid = GridSpec::new(16).unwrap();
        let cfg = linear_cfg(1.0, 0.11);
        let mut f = SpectralField::zeros(grid);
        f.set_mode(1, Complex64::new(1.0, 0.0));
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&dt| {
                let g = imex_step(&f, dt, &cfg).unwrap();
                (g.mode(1).re - (-0.11 * dt).exp()).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((6.5..=9.8).contains(&ratio), "ratio {ratio}");
        }
        let slope = (errs[0] / errs[2]).ln() / 4f64.ln();
        assert!((2.7..=3.3).contains(&slope), "slope {slope}");
    }

    #[test]
    fn linear_step_is_product_of_pade_factors() {
        let grid = GridSpec::new(16).unwrap();
        let cfg = linear_cfg(0.0, 1.0);
        let mut f = SpectralField::zeros(grid);
        f.set_mode(2, Complex64::new(0.0, 1.0));
        let g = imex_step(&f, 0.1, &cfg).unwrap();
        // Product of three Padé factors with weights 8/15, 2/15, 1/3.
        let expected: f64 = [8.0 / 15.0, 2.0 / 15.0, 1.0 / 3.0]
            .iter()
            .map(|c: &f64| (1.0 - 0.05 * c) / (1.0 + 0.05 * c))
            .product();
        assert!((g.mode(2).im - expected).abs() < 1e-15);
    }

    #[test]
    fn refine_quiescent_tail_is_noop() {
        let grid = GridSpec::new(64).unwrap();
        let mut f = SpectralField::from_fn(grid, f64::sin).unwrap();
        f.set_mode(30, Complex64::new(1e-17, 0.0));
        let cfg = SolverConfig::default();
        let (g, dt, refined) = maybe_refine(&f, 1e-3, &cfg).unwrap();
        assert!(!refined);
        assert_eq!(dt, 1e-3);
        assert_eq!(g, f);
    }

    #[test]
    fn refine_loud_tail_doubles_grid() {
        let grid = GridSpec::new(64).unwrap();
        let mut f = SpectralField::zeros(grid);
        f.set_mode(1, Complex64::new(0.0, -0.5));
        f.set_mode(29, Complex64::new(0.5e-10, 0.0));
        let cfg = SolverConfig {
            refine_threshold: 1e-13,
            n_max: 1024,
            ..SolverConfig::default()
        };
        let (g, dt, refined) = maybe_refine(&f, 1e-3, &cfg).unwrap();
        assert!(refined);
        assert_eq!(g.grid().n(), 128);
        assert_eq!(dt, 5e-4);
        assert_eq!(&g.coeffs()[..32], f.coeffs());
        assert!(g.coeffs()[32..].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn refine_respects_cap_and_driver_stops() {
        let grid = GridSpec::new(64).unwrap();
        let mut f = SpectralField::zeros(grid);
        f.set_mode(1, Complex64::new(0.0, -0.5));
        f.set_mode(29, Complex64::new(1e-3, 0.0));
        let cfg = SolverConfig {
            n_init: 64,
            n_max: 64,
            ..SolverConfig::default()
        };
        let (g, _, refined) = maybe_refine(&f, 1e-3, &cfg).unwrap();
        assert!(!refined);
        assert_eq!(g.grid().n(), 64);
        let traj = run_deterministic(&cfg, &f).unwrap();
        assert_eq!(traj.termination, Termination::ResolutionExhausted);
        assert_eq!(traj.records.len(), 1);
    }

    #[test]
    fn zero_initial_condition_reaches_end() {
        let grid = GridSpec::new(64).unwrap();
        let cfg = SolverConfig {
            n_init: 64,
            alpha: 0.3,
            t_end: 0.5,
            dt_init: 1e-2,
            ..SolverConfig::default()
        };
        let traj = run_deterministic(&cfg, &SpectralField::zeros(grid)).unwrap();
        assert_eq!(traj.termination, Termination::ReachedTEnd);
        assert!(traj.records.iter().all(|r| r.enstrophy == 0.0));
        assert!((traj.records.last().unwrap().t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn snapshots_land_exactly() {
        let grid = GridSpec::new(64).unwrap();
        let cfg = SolverConfig {
            n_init: 64,
            n_max: 64,
            alpha: 1.0,
            nu: 0.5,
            t_end: 0.3,
            dt_init: 7e-3,
            snapshot_times: vec![0.0, 0.1, 0.25],
            ..SolverConfig::default()
        };
        let f = SpectralField::from_fn(grid, f64::sin).unwrap();
        let traj = run_deterministic(&cfg, &f).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.time()).collect();
        assert_eq!(times, vec![0.0, 0.1, 0.25]);
        assert!(traj.records.windows(2).all(|w| w[0].t < w[1].t));
        assert_eq!(traj.termination, Termination::ReachedTEnd);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            SolverConfig {
                alpha: 1.5,
                ..SolverConfig::default()
            },
            SolverConfig {
                n_init: 300,
                ..SolverConfig::default()
            },
            SolverConfig {
                n_init: 1024,
                n_max: 512,
                ..SolverConfig::default()
            },
            SolverConfig {
                cfl: 1.5,
                ..SolverConfig::default()
            },
            SolverConfig {
                dt_min: 1.0,
                ..SolverConfig::default()
            },
        ];
        for cfg in bad {
            assert!(
                matches!(cfg.validate(), Err(Error::Config { .. })),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn dt_underflow_is_reported() {
        let grid = GridSpec::new(64).unwrap();
        let cfg = SolverConfig {
            n_init: 64,
            n_max: 64,
            dt_init: 1e-3,
            dt_min: 9e-4,
            cfl: 0.005,
            ..SolverConfig::default()
        };
        let f = SpectralField::from_fn(grid, f64::sin).unwrap();
        let traj = run_deterministic(&cfg, &f).unwrap();
        assert_eq!(traj.termination, Termination::DtUnderflow);
    }

    #[test]
    fn refinement_is_conservative() {
        // A well-resolved field gives the same diagnostics on a padded grid.
        let grid = GridSpec::new(128).unwrap();
        let f = SpectralField::from_fn(grid, |x| 0.5 * x.sin()).unwrap();
        let cfg = SolverConfig {
            alpha: 0.6,
            ..SolverConfig::default()
        };
        let mut a = f.clone();
        let mut b = f.zero_padded(grid.refined()).unwrap();
        for _ in 0..50 {
            a = imex_step(&a, 1e-3, &cfg).unwrap();
            b = imex_step(&b, 1e-3, &cfg).unwrap();
        }
        let (ea, eb) = (enstrophy(&a), enstrophy(&b));
        assert!((ea - eb).abs() < 1e-10 * ea);
    }
}
