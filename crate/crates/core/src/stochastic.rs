//! Stochastic fractional Burgers solver with colored additive noise, advanced
//! by an order-1.5 stochastic Runge–Kutta scheme at fixed resolution.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::deterministic::{
    landing_step, make_record, Operators, SolverConfig, Termination, Trajectory,
};
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Fixed step used at `N = 1024` when none is given; scaled as `1/N`.
pub const REFERENCE_DT: f64 = 2.5e-4;
const REFERENCE_N: usize = 1024;
/// Enstrophy multiple at which noisy runs are stopped when no cap is
/// configured. A fixed grid of 1024 points still resolves the solution there.
pub const DEFAULT_ENSTROPHY_CAP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    pub rho: f64,
    pub master_seed: u64,
    /// Number of forced real basis functions; modes `k ≤ n_modes / 2` are
    /// forced. Defaults to the grid resolution.
    pub n_modes: Option<usize>,
    /// Fixed time step; defaults to [`NoiseParams::default_dt`].
    pub dt: Option<f64>,
    /// Apply the `1/k` weights to the auxiliary variate as well as to the
    /// increment. Turning this off reproduces the literal reading in which
    /// only `ΔW` carries the weights.
    pub colored_beta: bool,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            rho: 0.0,
            master_seed: 0,
            n_modes: None,
            dt: None,
            colored_beta: true,
        }
    }
}

impl NoiseParams {
    pub fn default_dt(n: usize) -> f64 {
        REFERENCE_DT * REFERENCE_N as f64 / n as f64
    }

    pub fn dt_for(&self, n: usize) -> f64 {
        self.dt.unwrap_or_else(|| Self::default_dt(n))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config(
                "rho",
                format!("must be ≥ 0, got {}", self.rho),
            ));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config("dt", format!("must be positive, got {dt}")));
            }
        }
        if self.n_modes == Some(0) {
            return Err(Error::config("n_modes", "must be positive"));
        }
        Ok(())
    }
}

/// Noise variates for one step, indexed by `k = 1..N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrement {
    pub dw: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub dt: f64,
}

/// 64-bit finalizer of SplitMix64.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed of realization `sample_index`.
pub fn sample_seed(master_seed: u64, sample_index: u64) -> u64 {
    let golden = 0x9e37_79b9_7f4a_7c15u64;
    mix64(mix64(master_seed).wrapping_add(golden.wrapping_mul(sample_index.wrapping_add(1))))
}

/// Generator owned by one realization.
pub fn sample_rng(master_seed: u64, sample_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sample_seed(master_seed, sample_index))
}

/// Draws the increment for one step. Modes above `forced` (and the Nyquist
/// mode, which has no sine partner) are left unforced; the same number of
/// variates is consumed regardless, so streams do not depend on the bandwidth.
pub fn sample_increment<R: Rng + ?Sized>(
    rng: &mut R,
    dt: f64,
    n_half: usize,
    forced: usize,
    colored_beta: bool,
) -> WienerIncrement {
    let sqrt_dt = dt.sqrt();
    let mut dw = Vec::with_capacity(n_half);
    let mut beta = Vec::with_capacity(n_half);
    for k in 1..=n_half {
        // (ξ_{2k−1}, ξ_{2k}, η_{2k−1}, η_{2k})
        let x_odd: f64 = rng.sample(StandardNormal);
        let x_even: f64 = rng.sample(StandardNormal);
        let e_odd: f64 = rng.sample(StandardNormal);
        let e_even: f64 = rng.sample(StandardNormal);
        if k > forced || k == n_half {
            dw.push(Complex64::new(0.0, 0.0));
            beta.push(Complex64::new(0.0, 0.0));
            continue;
        }
        let (w, b) = assemble_mode(k, [x_odd, x_even], [e_odd, e_even], sqrt_dt, colored_beta);
        dw.push(w);
        beta.push(b);
    }
    WienerIncrement { dw, beta, dt }
}

/// `ΔW_k = √dt (√2/2k)(ξ_{2k} − iξ_{2k−1})` and `β_k` built the same way from
/// `ξ/2 + (√3/6)η`, without the `√dt`.
fn assemble_mode(
    k: usize,
    xi: [f64; 2],
    eta: [f64; 2],
    sqrt_dt: f64,
    colored_beta: bool,
) -> (Complex64, Complex64) {
    let c3 = 3f64.sqrt() / 6.0;
    let w = std::f64::consts::SQRT_2 / (2.0 * k as f64);
    let wb = if colored_beta {
        w
    } else {
        std::f64::consts::FRAC_1_SQRT_2
    };
    let dw = Complex64::new(xi[1], -xi[0]) * (w * sqrt_dt);
    let beta = Complex64::new(0.5 * xi[1] + c3 * eta[1], -(0.5 * xi[0] + c3 * eta[0])) * wb;
    (dw, beta)
}

fn srk_update(ops: &Operators, u: &mut [Complex64], inc: &WienerIncrement, rho: f64) -> Result<()> {
    let dt = inc.dt;
    let n = u.len();
    let mut f = vec![Complex64::new(0.0, 0.0); n];
    ops.drift(u, &mut f)?;
    let q: Vec<Complex64> = u.iter().zip(&f).map(|(a, b)| a + b * (0.5 * dt)).collect();
    let kick = 1.5 * rho * dt.sqrt();
    let q_star: Vec<Complex64> = q.iter().zip(&inc.beta).map(|(a, b)| a + b * kick).collect();
    let mut f_star = vec![Complex64::new(0.0, 0.0); n];
    ops.drift(&q, &mut f)?;
    ops.drift(&q_star, &mut f_star)?;
    for k in 0..n {
        u[k] = (u[k] + inc.dw[k] * rho) + (f[k] + f_star[k] * 2.0) * (dt / 3.0);
    }
    if u.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure("non-finite state".into()))
    }
}

/// One step of
///
/// ```text
/// Q   = û + (dt/2) f(û)
/// Q*  = Q + (3/2) ρ √dt β
/// û⁺  = û + ρ ΔW + (dt/3) [f(Q) + 2 f(Q*)]
/// ```
pub fn srk_step(
    state: &SpectralField,
    inc: &WienerIncrement,
    rho: f64,
    cfg: &SolverConfig,
) -> Result<SpectralField> {
    let n_half = state.grid().n_half();
    if inc.dw.len() != n_half || inc.beta.len() != n_half {
        return Err(Error::config("increment", "length does not match the grid"));
    }
    if !(inc.dt > 0.0) {
        return Err(Error::config("dt", "must be positive"));
    }
    state.check_finite()?;
    let ops = Operators::new(state.grid(), cfg)?;
    let mut u = state.coeffs().to_vec();
    srk_update(&ops, &mut u, inc, rho)?;
    Ok(SpectralField::from_raw(
        state.grid(),
        u,
        state.time() + inc.dt,
    ))
}

/// Integrates one realization at fixed resolution `initial.grid()` and fixed
/// step. Stops at `cfg.t_end`, on a non-finite state, or (reported as
/// [`Termination::ResolutionExhausted`]) once the enstrophy passes
/// `cfg.enstrophy_cap` times its initial value.
pub fn run_realization(
    cfg: &SolverConfig,
    noise: &NoiseParams,
    sample_index: u64,
    initial: &SpectralField,
) -> Result<Trajectory> {
    cfg.validate()?;
    noise.validate()?;
    initial.check_finite()?;
    let grid = initial.grid();
    let n_half = grid.n_half();
    let forced = noise.n_modes.map_or(n_half, |m| (m / 2).min(n_half));
    let dt = noise.dt_for(grid.n());
    let ops = Operators::new(grid, cfg)?;
    let mut rng = sample_rng(noise.master_seed, sample_index);

    let strip_due = |steps: usize| cfg.strip_stride > 0 && steps.is_multiple_of(cfg.strip_stride);
    let mut state = initial.clone().with_time(0.0);
    let mut records = vec![make_record(&state, 0.0, strip_due(0), cfg)];
    let e0 = records[0].enstrophy;
    let mut snapshots = Vec::new();
    let mut pending = cfg.snapshot_times.iter().copied().peekable();
    if pending.peek() == Some(&0.0) {
        snapshots.push(state.clone());
        pending.next();
    }
    let mut t = 0.0;
    let mut steps = 0usize;

    let termination = loop {
        if t >= cfg.t_end {
            break Termination::ReachedTEnd;
        }
        let target = pending.peek().copied().unwrap_or(cfg.t_end).min(cfg.t_end);
        // Steps are only shortened to land on requested output times.
        let (h, landing) = landing_step(dt, target - t);
        let inc = sample_increment(&mut rng, h, n_half, forced, noise.colored_beta);
        let mut u = state.clone().into_coeffs();
        if srk_update(&ops, &mut u, &inc, noise.rho).is_err() {
            break Termination::NumericalFailure;
        }
        steps += 1;
        t = if landing { target } else { t + h };
        state = SpectralField::from_raw(grid, u, t);

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
    use crate::deterministic::{run_deterministic, TimeScheme};
    use crate::spectral::GridSpec;
    use rand::RngCore;

    #[test]
    fn increment_formula_by_substitution() {
        let (dw, beta) = assemble_mode(1, [0.0, 1.0], [0.0, 0.0], 1.0, true);
        assert!((dw - Complex64::new(2f64.sqrt() / 2.0, 0.0)).norm() < 1e-15);
        assert!((beta - Complex64::new(2f64.sqrt() / 4.0, 0.0)).norm() < 1e-15);
        let (dw, _) = assemble_mode(2, [1.0, 0.0], [0.0, 0.0], 2.0, true);
        assert!((dw - Complex64::new(0.0, -2f64.sqrt() / 2.0)).norm() < 1e-15);
        let (_, beta) = assemble_mode(4, [0.0, 0.0], [0.0, 2.0], 1.0, false);
        assert!((beta - Complex64::new(2f64.sqrt() * 3f64.sqrt() / 6.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn increment_variance_per_mode() {
        let mut rng = sample_rng(7, 0);
        let dt = 0.01;
        let m = 100_000;
        let mut acc = [0.0f64; 3];
        for _ in 0..m {
            let inc = sample_increment(&mut rng, dt, 4, 4, true);
            for k in 0..3 {
                acc[k] += inc.dw[k].re * inc.dw[k].re;
            }
            assert_eq!(inc.dw[3], Complex64::new(0.0, 0.0));
        }
        for (i, a) in acc.iter().enumerate() {
            let k = (i + 1) as f64;
            let expect = dt / (2.0 * k * k);
            let se = expect * (2.0 / m as f64).sqrt();
            assert!((a / m as f64 - expect).abs() < 3.0 * se, "mode {k}");
        }
    }

    #[test]
    fn seeds_are_distinct_and_reproducible() {
        assert_eq!(sample_seed(1, 2), sample_seed(1, 2));
        let firsts: Vec<u64> = (0..64).map(|i| sample_rng(42, i).next_u64()).collect();
        let mut sorted = firsts.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), firsts.len());
        assert_ne!(sample_seed(1, 0), sample_seed(2, 0));
    }

    fn sine(n: usize) -> SpectralField {
        SpectralField::from_fn(GridSpec::new(n).unwrap(), f64::sin).unwrap()
    }

    #[test]
    fn zero_noise_step_is_drift_step() {
        let cfg = SolverConfig {
            alpha: 0.4,
            ..Default::default()
        };
        let u = sine(64);
        let mut rng = sample_rng(3, 0);
        let inc = sample_increment(&mut rng, 1e-3, 32, 32, true);
        let a = srk_step(&u, &inc, 0.0, &cfg).unwrap();

        let ops = Operators::new(u.grid(), &cfg).unwrap();
        let mut b = u.coeffs().to_vec();
        ops.drift_step(&mut b, 1e-3).unwrap();
        assert_eq!(a.coeffs(), &b[..]);
    }

    #[test]
    fn zero_noise_realization_matches_fixed_grid_run() {
        let n = 128;
        let cfg = SolverConfig {
            alpha: 0.4,
            t_end: 0.5,
            n_init: n,
            n_max: n,
            refine_threshold: 1.0,
            dt_init: 1e-3,
            scheme: TimeScheme::SrkDrift,
            ..Default::default()
        };
        let noise = NoiseParams {
            dt: Some(1e-3),
            master_seed: 11,
            ..Default::default()
        };
        let s = run_realization(&cfg, &noise, 5, &sine(n)).unwrap();
        let d = run_deterministic(&cfg, &sine(n)).unwrap();
        assert_eq!(s.records.len(), d.records.len());
        for (a, b) in s.final_state.coeffs().iter().zip(d.final_state.coeffs()) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn realizations_are_reproducible() {
        let n = 64;
        let cfg = SolverConfig {
            alpha: 0.4,
            t_end: 0.05,
            n_init: n,
            ..Default::default()
        };
        let noise = NoiseParams {
            rho: 0.05,
            master_seed: 9,
            ..Default::default()
        };
        let a = run_realization(&cfg, &noise, 3, &sine(n)).unwrap();
        let b = run_realization(&cfg, &noise, 3, &sine(n)).unwrap();
        let c = run_realization(&cfg, &noise, 4, &sine(n)).unwrap();
        assert_eq!(a.final_state.coeffs(), b.final_state.coeffs());
        assert_ne!(a.final_state.coeffs(), c.final_state.coeffs());
    }

    #[test]
    fn mean_is_never_forced_and_bandwidth_respected() {
        let mut rng = sample_rng(1, 1);
        let inc = sample_increment(&mut rng, 1e-2, 16, 5, true);
        assert!(inc.dw[..5].iter().all(|c| c.norm() > 0.0));
        assert!(inc.dw[5..].iter().all(|c| c.norm() == 0.0));
        assert!(inc.beta[5..].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let n = 32;
        let cfg = SolverConfig {
            t_end: 0.01,
            n_init: n,
            snapshot_times: vec![0.0, 0.00333, 0.01],
            ..Default::default()
        };
        let noise = NoiseParams {
            rho: 0.01,
            dt: Some(1e-3),
            ..Default::default()
        };
        let tr = run_realization(&cfg, &noise, 0, &sine(n)).unwrap();
        let times: Vec<f64> = tr.snapshots.iter().map(|s| s.time()).collect();
        assert_eq!(times, vec![0.0, 0.00333, 0.01]);
        assert_eq!(tr.termination, Termination::ReachedTEnd);
    }
}
