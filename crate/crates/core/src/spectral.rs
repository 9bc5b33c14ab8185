//! Truncated Fourier representation of real, zero-mean, 2π-periodic fields.
//!
//! A field on an `N`-point grid is stored through its coefficients
//! `û_k`, `k = 1..=N/2`, with the analytic normalization
//! `û_k = (1/N) Σ_j u(x_j) e^{-ikx_j}`, so that
//!
//! ```text
//! u(x_j) = Σ_{k=1}^{N/2-1} 2 Re(û_k e^{ikx_j}) + Re(û_{N/2}) (-1)^j
//! ```
//!
//! The mean `û_0` is identically zero and never stored; negative wavenumbers
//! follow from conjugate symmetry.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

fn r2c_plan(len: usize) -> Arc<dyn RealToComplex<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn c2r_plan(len: usize) -> Arc<dyn ComplexToReal<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Uniform periodic grid on `[0, 2π)` with a power-of-two number of points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub const DOMAIN_LENGTH: f64 = 2.0 * PI;

    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::config(
                "n",
                format!("must be a power of two no smaller than 8, got {n}"),
            ));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored coefficients, `N/2`.
    pub fn n_half(&self) -> usize {
        self.n / 2
    }

    pub fn dx(&self) -> f64 {
        Self::DOMAIN_LENGTH / self.n as f64
    }

    /// Collocation points `x_j = 2πj/N`.
    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| j as f64 * self.dx()).collect()
    }

    /// Grid with twice the resolution.
    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n }
    }

    /// Size of the padded grid used for quadratic products (3/2 rule).
    pub fn dealiased_len(&self) -> usize {
        3 * self.n / 2
    }
}

/// Fourier coefficients `û_k`, `k = 1..=N/2`, of a real zero-mean field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
    time: f64,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_half()],
            time: 0.0,
        }
    }

    /// Builds a field from coefficients ordered `k = 1..=N/2`.
    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n_half() {
            return Err(Error::config(
                "coeffs",
                format!(
                    "expected {} coefficients, got {}",
                    grid.n_half(),
                    coeffs.len()
                ),
            ));
        }
        let field = Self {
            grid,
            coeffs,
            time: 0.0,
        };
        field.check_finite()?;
        Ok(field)
    }

    /// Samples `f` on the grid and transforms.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples: Vec<f64> = grid.points().into_iter().map(f).collect();
        forward_transform(&samples, grid)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Builds a field without the finiteness check; callers validate later.
    pub(crate) fn from_raw(grid: GridSpec, coeffs: Vec<Complex64>, time: f64) -> Self {
        debug_assert_eq!(coeffs.len(), grid.n_half());
        Self { grid, coeffs, time }
    }

    /// Coefficient of wavenumber `k` (1-based, `k ≤ N/2`).
    pub fn mode(&self, k: usize) -> Complex64 {
        self.coeffs[k - 1]
    }

    pub fn set_mode(&mut self, k: usize, value: Complex64) {
        self.coeffs[k - 1] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NumericalFailure(format!(
                "non-finite Fourier coefficient at t = {}",
                self.time
            )))
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Spectral interpolation onto a finer grid (new modes are zero).
    pub fn zero_padded(&self, grid: GridSpec) -> Result<Self> {
        if grid.n() < self.grid.n() {
            return Err(Error::config(
                "n",
                "zero padding requires a grid at least as fine as the source",
            ));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(grid.n_half(), Complex64::new(0.0, 0.0));
        Ok(Self {
            grid,
            coeffs,
            time: self.time,
        })
    }

    /// Values of the field on the collocation points.
    pub fn to_physical(&self) -> Result<Vec<f64>> {
        inverse_transform(self)
    }
}

/// Transforms grid samples into Fourier coefficients. The sample mean is
/// removed.
pub fn forward_transform(samples: &[f64], grid: GridSpec) -> Result<SpectralField> {
    let n = grid.n();
    if samples.len() != n {
        return Err(Error::config(
            "samples",
            format!("length {} does not match grid size {n}", samples.len()),
        ));
    }
    let mut input = samples.to_vec();
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
    r2c_plan(n)
        .process(&mut input, &mut spectrum)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let scale = 1.0 / n as f64;
    let mut coeffs: Vec<Complex64> = spectrum[1..].iter().map(|c| c * scale).collect();
    coeffs[n / 2 - 1].im = 0.0;
    SpectralField::from_coeffs(grid, coeffs)
}

/// Collocation values of `field`; the exact inverse of [`forward_transform`]
/// on zero-mean data.
pub fn inverse_transform(field: &SpectralField) -> Result<Vec<f64>> {
    field.check_finite()?;
    let n = field.grid.n();
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
    spectrum[1..].copy_from_slice(&field.coeffs);
    spectrum[n / 2] = Complex64::new(field.coeffs[n / 2 - 1].re, 0.0);
    let mut out = vec![0.0; n];
    c2r_plan(n)
        .process(&mut spectrum, &mut out)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    Ok(out)
}

/// Diagonal symbol `-ν k^{2α}` for `k = 1..=N/2`.
pub fn dissipation_symbol(grid: GridSpec, alpha: f64, nu: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(
            "alpha",
            format!("must lie in [0, 1], got {alpha}"),
        ));
    }
    Ok((1..=grid.n_half())
        .map(|k| -nu * (k as f64).powf(2.0 * alpha))
        .collect())
}

/// Applies `A = -ν(-Δ)^α`, i.e. multiplies `û_k` by `-ν k^{2α}`.
pub fn fractional_laplacian(field: &SpectralField, alpha: f64, nu: f64) -> Result<SpectralField> {
    let symbol = dissipation_symbol(field.grid, alpha, nu)?;
    let coeffs = field
        .coeffs
        .iter()
        .zip(&symbol)
        .map(|(c, s)| c * s)
        .collect();
    Ok(SpectralField {
        grid: field.grid,
        coeffs,
        time: field.time,
    })
}

/// Evaluates `[r(û)]_k = -(i k / 2) [u²]^_k` with the square formed on a
/// `3N/2`-point grid. The Nyquist coefficient of the result is zero.
pub fn nonlinear_term(field: &SpectralField) -> Result<SpectralField> {
    let mut out = vec![Complex64::new(0.0, 0.0); field.grid.n_half()];
    nonlinear_into(&field.coeffs, field.grid, &mut out)?;
    Ok(SpectralField {
        grid: field.grid,
        coeffs: out,
        time: field.time,
    })
}

pub(crate) fn nonlinear_into(
    coeffs: &[Complex64],
    grid: GridSpec,
    out: &mut [Complex64],
) -> Result<()> {
    let n_half = grid.n_half();
    let m = grid.dealiased_len();
    let mut spectrum = vec![Complex64::new(0.0, 0.0); m / 2 + 1];
    spectrum[1..n_half].copy_from_slice(&coeffs[..n_half - 1]);
    // The N-grid Nyquist mode is a cosine of amplitude Re(û_{N/2}); on the
    // padded grid it is an ordinary mode carrying half of that per sign.
    spectrum[n_half] = Complex64::new(0.5 * coeffs[n_half - 1].re, 0.0);

    let mut phys = vec![0.0; m];
    c2r_plan(m)
        .process(&mut spectrum, &mut phys)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    for v in phys.iter_mut() {
        *v *= *v;
    }
    r2c_plan(m)
        .process(&mut phys, &mut spectrum)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;

    let scale = 1.0 / m as f64;
    for k in 1..n_half {
        let sq = spectrum[k] * scale;
        // -(i k / 2) * sq
        out[k - 1] = Complex64::new(0.5 * k as f64 * sq.im, -0.5 * k as f64 * sq.re);
    }
    out[n_half - 1] = Complex64::new(0.0, 0.0);
    if out.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure(
            "non-finite value in nonlinear term".into(),
        ))
    }
}

/// `max_j |u(x_j)|` on the native grid.
pub fn max_abs_physical(field: &SpectralField) -> Result<f64> {
    Ok(inverse_transform(field)?
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max))
}

/// Spectral derivative `∂_x u`.
pub fn derivative(field: &SpectralField) -> SpectralField {
    let n_half = field.grid.n_half();
    let coeffs = field
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k = (i + 1) as f64;
            if i + 1 == n_half {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-k * c.im, k * c.re)
            }
        })
        .collect();
    SpectralField {
        grid: field.grid,
        coeffs,
        time: field.time,
    }
}
