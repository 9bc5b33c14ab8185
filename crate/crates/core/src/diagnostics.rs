//! Regularity diagnostics: enstrophy and the width of the analyticity strip.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::spectral::SpectralField;

/// Default relative floor below which modes are treated as round-off.
pub const DEFAULT_FLOOR: f64 = 1e-14;
/// Default lowest wavenumber entering the strip fit.
pub const DEFAULT_K_LO: usize = 4;
/// Minimum number of modes for a fit to be called reliable.
pub const MIN_RELIABLE_MODES: usize = 8;

/// Enstrophy `π ∫ |∂_x u|² dx = 4π² Σ_k k² |û_k|²`.
pub fn enstrophy(field: &SpectralField) -> f64 {
    4.0 * PI
        * PI
        * field
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = (i + 1) as f64;
                k * k * c.norm_sqr()
            })
            .sum::<f64>()
}

/// Least-squares fit of `|û_k| ≈ C k^α̃ e^{-δk}` in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripFit {
    pub c_amp: f64,
    pub alpha_tilde: f64,
    pub delta: f64,
    pub k_range: (usize, usize),
    pub n_modes: usize,
    /// RMS of the log-space residual.
    pub residual: f64,
    pub reliable: bool,
}

/// Fits the exponential decay of the spectrum over `k ∈ [k_lo, k_hi]`, where
/// `k_hi` is the largest wavenumber with `|û_k| > floor · max|û|`.
pub fn strip_fit(field: &SpectralField, floor: f64, k_lo: usize) -> Result<StripFit> {
    if floor <= 0.0 || !floor.is_finite() {
        return Err(Error::config("floor", "must be a positive number"));
    }
    let k_lo = k_lo.max(1);
    let amps: Vec<f64> = field.coeffs().iter().map(|c| c.norm()).collect();
    let max = amps.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::DegenerateFit("zero spectrum".into()));
    }
    let cutoff = floor * max;
    let k_hi = match amps.iter().rposition(|&a| a > cutoff) {
        Some(i) => i + 1,
        None => return Err(Error::DegenerateFit("no mode above floor".into())),
    };

    let mut ones = Vec::new();
    let mut logk = Vec::new();
    let mut negk = Vec::new();
    let mut rhs = Vec::new();
    for k in k_lo..=k_hi {
        let a = amps[k - 1];
        if a > cutoff {
            ones.push(1.0);
            logk.push((k as f64).ln());
            negk.push(-(k as f64));
            rhs.push(a.ln());
        }
    }
    let n_modes = rhs.len();
    if n_modes < 3 {
        return Err(Error::DegenerateFit(format!(
            "only {n_modes} usable modes in [{k_lo}, {k_hi}]"
        )));
    }
    let design = [ones, logk, negk];
    let sol = least_squares(&design, &rhs)
        .ok_or_else(|| Error::DegenerateFit("singular design matrix".into()))?;
    let sq: f64 = (0..n_modes)
        .map(|i| {
            let pred = sol[0] * design[0][i] + sol[1] * design[1][i] + sol[2] * design[2][i];
            (pred - rhs[i]).powi(2)
        })
        .sum();
    let residual = (sq / n_modes as f64).sqrt();
    let raw_delta = sol[2];
    let delta = raw_delta.max(0.0);
    let reliable = raw_delta >= 3.0 * field.grid().dx() && n_modes >= MIN_RELIABLE_MODES;
    Ok(StripFit {
        c_amp: sol[0].exp(),
        alpha_tilde: sol[1],
        delta,
        k_range: (k_lo, k_hi),
        n_modes,
        residual,
        reliable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{derivative, inverse_transform, GridSpec};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn synthetic(grid: GridSpec, amp: impl Fn(f64) -> f64) -> SpectralField {
        let coeffs = (1..=grid.n_half())
            .map(|k| {
                let phase = 0.37 * k as f64;
                Complex64::from_polar(amp(k as f64), phase)
            })
            .collect();
        SpectralField::from_coeffs(grid, coeffs).unwrap()
    }

    #[test]
    fn enstrophy_of_sines() {
        let grid = GridSpec::new(32).unwrap();
        let f = SpectralField::from_fn(grid, f64::sin).unwrap();
        assert!((enstrophy(&f) - PI * PI).abs() < 1e-12);
        let f = SpectralField::from_fn(grid, |x| (2.0 * x).sin()).unwrap();
        assert!((enstrophy(&f) - 4.0 * PI * PI).abs() < 1e-12);
        assert_eq!(enstrophy(&SpectralField::zeros(grid)), 0.0);
    }

    #[test]
    fn enstrophy_matches_physical_quadrature() {
        let grid = GridSpec::new(256).unwrap();
        let f = SpectralField::from_fn(grid, |x| (x.sin() + 0.3 * (3.0 * x).cos()).exp() - 1.0)
            .unwrap();
        let du = inverse_transform(&derivative(&f)).unwrap();
        let quad = PI * grid.dx() * du.iter().map(|v| v * v).sum::<f64>();
        assert!((quad - enstrophy(&f)).abs() < 1e-10 * quad);
    }

    #[test]
    fn recovers_synthetic_ansatz() {
        let grid = GridSpec::new(1024).unwrap();
        let f = synthetic(grid, |k| 3.0 * k.powf(-1.2) * (-0.05 * k).exp());
        let fit = strip_fit(&f, DEFAULT_FLOOR, DEFAULT_K_LO).unwrap();
        assert!((fit.delta - 0.05).abs() < 1e-10, "{fit:?}");
        assert!((fit.alpha_tilde + 1.2).abs() < 1e-10);
        assert!((fit.c_amp - 3.0).abs() < 1e-10);
        assert!(fit.reliable);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn pure_exponential() {
        let grid = GridSpec::new(128).unwrap();
        let f = synthetic(grid, |k| (-k).exp());
        let fit = strip_fit(&f, DEFAULT_FLOOR, DEFAULT_K_LO).unwrap();
        assert!((fit.delta - 1.0).abs() < 1e-10);
        assert!(fit.alpha_tilde.abs() < 1e-9);
        assert!((fit.c_amp - 1.0).abs() < 1e-9);
    }

    #[test]
    fn narrow_strip_is_unreliable() {
        let grid = GridSpec::new(64).unwrap();
        // δ below three grid spacings
        let f = synthetic(grid, |k| (-0.05 * k).exp() / k);
        let fit = strip_fit(&f, DEFAULT_FLOOR, DEFAULT_K_LO).unwrap();
        assert!((fit.delta - 0.05).abs() < 1e-10);
        assert!(!fit.reliable);
    }

    #[test]
    fn too_few_modes() {
        let grid = GridSpec::new(16).unwrap();
        let f = SpectralField::from_fn(grid, f64::sin).unwrap();
        assert!(matches!(
            strip_fit(&f, DEFAULT_FLOOR, DEFAULT_K_LO),
            Err(Error::DegenerateFit(_))
        ));
        assert!(strip_fit(&SpectralField::zeros(grid), DEFAULT_FLOOR, 1).is_err());
    }

    #[test]
    fn few_modes_is_unreliable() {
        let grid = GridSpec::new(64).unwrap();
        let f = synthetic(grid, |k| (-2.0 * k).exp());
        let fit = strip_fit(&f, 1e-6, 2).unwrap();
        assert!(fit.n_modes < MIN_RELIABLE_MODES);
        assert!(!fit.reliable);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scale_equivariance(s in 1e-3f64..1e3, delta in 0.05f64..0.5, order in -2.0f64..0.0) {
            let grid = GridSpec::new(512).unwrap();
            let f = synthetic(grid, |k| k.powf(order) * (-delta * k).exp() * (1.0 + 0.1 * (k * 0.7).sin()));
            let g = synthetic(grid, |k| s * k.powf(order) * (-delta * k).exp() * (1.0 + 0.1 * (k * 0.7).sin()));
            let a = strip_fit(&f, DEFAULT_FLOOR, DEFAULT_K_LO).unwrap();
            let b = strip_fit(&g, DEFAULT_FLOOR, DEFAULT_K_LO).unwrap();
            prop_assert!((a.delta - b.delta).abs() < 1e-12 * a.delta.max(1.0));
            prop_assert!((a.alpha_tilde - b.alpha_tilde).abs() < 1e-11);
            prop_assert!((b.c_amp / a.c_amp / s - 1.0).abs() < 1e-10);
        }

        #[test]
        fn exact_for_any_lower_band_edge(k_lo in 1usize..40) {
            let grid = GridSpec::new(512).unwrap();
            let f = synthetic(grid, |k| 0.5 * k.powf(-0.8) * (-0.1 * k).exp());
            let fit = strip_fit(&f, DEFAULT_FLOOR, k_lo).unwrap();
            prop_assert!((fit.delta - 0.1).abs() < 1e-10);
            prop_assert!((fit.alpha_tilde + 0.8).abs() < 1e-9);
        }
    }
}
