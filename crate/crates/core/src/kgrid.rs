//! Wavevector grid, its conjugate position grid, and the Fourier conventions
//! shared by every other module.
//!
//! Detunings are measured from a mode's center wavevector: `κ_j = (j - n/2)·Δκ`
//! for `j = 0..n`, so `κ = 0` sits at index `n/2`. The conjugate window has
//! extent `L_z = 2π/Δκ` and spacing `Δz = L_z/n`, with `z_i = (i - n/2)·Δz`.
//!
//! Discrete amplitudes carry a `√Δκ` factor relative to continuous ones,
//! `b_j = b(κ_j)·√Δκ`, so that `Σ_j |b_j|²` is a photon number. The field in
//! position space is `ψ(z) = ∫dκ e^{iκz}/√(2π) b(κ)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqzError};

/// Uniform detuning grid around a mode center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaGrid {
    n_points: usize,
    delta_kappa: f64,
    center_k: f64,
}

impl KappaGrid {
    pub fn new(n_points: usize, delta_kappa: f64, center_k: f64) -> Result<Self> {
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(SqzError::config(format!(
                "grid size must be a power of two >= 2, got {n_points}"
            )));
        }
        if !(delta_kappa > 0.0) || !delta_kappa.is_finite() {
            return Err(SqzError::config(format!(
                "grid spacing must be positive and finite, got {delta_kappa}"
            )));
        }
        if !center_k.is_finite() {
            return Err(SqzError::config("grid center must be finite"));
        }
        Ok(KappaGrid {
            n_points,
            delta_kappa,
            center_k,
        })
    }

    pub fn n(&self) -> usize {
        self.n_points
    }

    pub fn delta_kappa(&self) -> f64 {
        self.delta_kappa
    }

    pub fn center_k(&self) -> f64 {
        self.center_k
    }

    #[inline]
    pub fn kappa(&self, j: usize) -> f64 {
        (j as f64 - (self.n_points / 2) as f64) * self.delta_kappa
    }

    pub fn kappa_values(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.kappa(j)).collect()
    }

    /// Largest |κ| on the grid.
    pub fn kappa_max(&self) -> f64 {
        (self.n_points / 2) as f64 * self.delta_kappa
    }

    pub fn z_extent(&self) -> f64 {
        2.0 * PI / self.delta_kappa
    }

    pub fn delta_z(&self) -> f64 {
        self.z_extent() / self.n_points as f64
    }

    #[inline]
    pub fn z(&self, i: usize) -> f64 {
        (i as f64 - (self.n_points / 2) as f64) * self.delta_z()
    }

    pub fn z_values(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.z(i)).collect()
    }

    /// Positions of the doubled (`2n`-point) sampling of the same window.
    pub fn padded_z_values(&self) -> Vec<f64> {
        let n = self.n_points;
        let h = 0.5 * self.delta_z();
        (0..2 * n).map(|i| (i as f64 - n as f64) * h).collect()
    }

    /// Wavevectors of the extended grid `q_m = (m - n)·Δκ`, `m = 0..2n`, which
    /// holds every sum `κ_j + κ_j'` and difference `κ_j - κ_j'`.
    pub fn extended_kappa_values(&self) -> Vec<f64> {
        let n = self.n_points as f64;
        (0..2 * self.n_points)
            .map(|m| (m as f64 - n) * self.delta_kappa)
            .collect()
    }

    /// Index of `κ_j + κ_j'` on the extended grid.
    #[inline]
    pub fn sum_index(&self, j: usize, jp: usize) -> usize {
        j + jp
    }

    /// Index of `κ_j - κ_j'` on the extended grid.
    #[inline]
    pub fn diff_index(&self, j: usize, jp: usize) -> usize {
        j + self.n_points - jp
    }

    /// Convert continuous-normalized samples `f(κ_j)` to discrete amplitudes.
    pub fn to_discrete(&self, continuous: &[Complex64]) -> Vec<Complex64> {
        let s = self.delta_kappa.sqrt();
        continuous.iter().map(|c| c * s).collect()
    }

    pub fn to_continuous(&self, discrete: &[Complex64]) -> Vec<Complex64> {
        let s = 1.0 / self.delta_kappa.sqrt();
        discrete.iter().map(|c| c * s).collect()
    }
}

/// Recommended lab-frame grid for a pump of wavevector bandwidth `bandwidth`
/// interacting over a nonlinear region of length `length`: the window covers
/// four pump bandwidths plus the phase-matching main lobe, and the spacing
/// resolves both the pump and the phase-matching function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAdvice {
    pub min_window: f64,
    pub max_spacing: f64,
}

impl GridAdvice {
    pub fn lab_frame(bandwidth: f64, length: f64) -> Self {
        GridAdvice {
            min_window: 4.0 * bandwidth + 2.0 * PI / length,
            max_spacing: (bandwidth / 8.0).min(PI / (4.0 * length)),
        }
    }

    pub fn accepts(&self, grid: &KappaGrid) -> bool {
        grid.n() as f64 * grid.delta_kappa() >= self.min_window
            && grid.delta_kappa() <= self.max_spacing
    }
}

/// Linear optical properties of one waveguide mode, dispersion truncated at
/// second order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// Group velocity, m/s.
    pub v: f64,
    /// Group velocity dispersion `d²ω/dk²`, m²/s.
    #[serde(default)]
    pub v_prime: f64,
    /// Intensity decay rate, 1/s.
    #[serde(default)]
    pub gamma_loss: f64,
    #[serde(default)]
    pub center_k: f64,
    #[serde(default)]
    pub center_omega: f64,
}

impl ModeParams {
    pub fn new(v: f64, v_prime: f64) -> Self {
        ModeParams {
            v,
            v_prime,
            gamma_loss: 0.0,
            center_k: 0.0,
            center_omega: 0.0,
        }
    }

    pub fn with_loss(mut self, gamma_loss: f64) -> Self {
        self.gamma_loss = gamma_loss;
        self
    }

    pub fn with_center(mut self, center_k: f64, center_omega: f64) -> Self {
        self.center_k = center_k;
        self.center_omega = center_omega;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0) || !self.v.is_finite() {
            return Err(SqzError::config(format!(
                "group velocity must be positive, got {}",
                self.v
            )));
        }
        if !(self.gamma_loss >= 0.0) || !self.gamma_loss.is_finite() {
            return Err(SqzError::config(format!(
                "loss rate must be non-negative, got {}",
                self.gamma_loss
            )));
        }
        if !self.v_prime.is_finite() {
            return Err(SqzError::config("dispersion parameter must be finite"));
        }
        Ok(())
    }

    /// Detuning frequency `ω(κ) = vκ + v'κ²/2`.
    #[inline]
    pub fn omega(&self, kappa: f64) -> f64 {
        self.v * kappa + 0.5 * self.v_prime * kappa * kappa
    }

    /// `ω(κ)` seen from a frame moving at `frame.v_ref`.
    #[inline]
    pub fn omega_in(&self, frame: Frame, kappa: f64) -> f64 {
        self.omega(kappa) - frame.v_ref * kappa
    }
}

/// Reference frame for the slowly varying fields. Moving at `v_ref` subtracts
/// `v_ref·κ` from every mode's `ω(κ)`; lab-frame amplitudes relate to
/// frame amplitudes by `b_lab(κ, t) = e^{-i v_ref κ t} b_frame(κ, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub v_ref: f64,
}

impl Frame {
    pub fn lab() -> Self {
        Frame { v_ref: 0.0 }
    }

    pub fn moving(v_ref: f64) -> Self {
        Frame { v_ref }
    }

    /// Phase taking a frame amplitude at detuning `kappa` and time `t` to the lab.
    #[inline]
    pub fn to_lab_phase(&self, kappa: f64, t: f64) -> Complex64 {
        Complex64::from_polar(1.0, -self.v_ref * kappa * t)
    }

    /// Lab position of frame coordinate `z` at time `t`.
    #[inline]
    pub fn lab_position(&self, z: f64, t: f64) -> f64 {
        z + self.v_ref * t
    }
}

/// Planned transforms between the κ grid and the z grid.
///
/// The unitary pair [`Spectral::kappa_to_z`] / [`Spectral::z_to_kappa`] hides
/// the FFT's native ordering; the padded variants sample continuous fields on
/// `2n` points so that products of two band-limited fields do not alias.
#[derive(Clone)]
pub struct Spectral {
    grid: KappaGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &KappaGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n();
        Spectral {
            grid: *grid,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            fwd2: planner.plan_fft_forward(2 * n),
            inv2: planner.plan_fft_inverse(2 * n),
        }
    }

    pub fn grid(&self) -> &KappaGrid {
        &self.grid
    }

    // Centered DFT: out_i = Σ_j exp(±2πi (j - N/2)(i - N/2)/N) x_j, unnormalized.
    fn centered(plan: &Arc<dyn Fft<f64>>, input: &[Complex64]) -> Vec<Complex64> {
        let len = input.len();
        let half = len / 2;
        let mut buf: Vec<Complex64> = input[half..].iter().chain(&input[..half]).copied().collect();
        plan.process(&mut buf);
        buf.rotate_left(half);
        buf
    }

    /// Unitary transform from discrete κ amplitudes to z-grid samples.
    pub fn kappa_to_z(&self, amplitudes: &[Complex64]) -> Result<Vec<Complex64>> {
        SqzError::check_len("kappa_to_z", self.grid.n(), amplitudes.len())?;
        let scale = 1.0 / (self.grid.n() as f64).sqrt();
        let mut out = Self::centered(&self.inv, amplitudes);
        out.iter_mut().for_each(|c| *c *= scale);
        Ok(out)
    }

    /// Inverse of [`Spectral::kappa_to_z`].
    pub fn z_to_kappa(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        SqzError::check_len("z_to_kappa", self.grid.n(), samples.len())?;
        let scale = 1.0 / (self.grid.n() as f64).sqrt();
        let mut out = Self::centered(&self.fwd, samples);
        out.iter_mut().for_each(|c| *c *= scale);
        Ok(out)
    }

    /// Continuous field `ψ(z_i)` on the base z grid from discrete amplitudes.
    pub fn field_on_z(&self, amplitudes: &[Complex64]) -> Result<Vec<Complex64>> {
        let s = 1.0 / self.grid.delta_z().sqrt();
        let mut out = self.kappa_to_z(amplitudes)?;
        out.iter_mut().for_each(|c| *c *= s);
        Ok(out)
    }

    /// Discrete amplitudes from continuous field samples on the base z grid.
    pub fn amplitudes_from_z(&self, field: &[Complex64]) -> Result<Vec<Complex64>> {
        let s = self.grid.delta_z().sqrt();
        let mut out = self.z_to_kappa(field)?;
        out.iter_mut().for_each(|c| *c *= s);
        Ok(out)
    }

    /// Continuous field `ψ(z)` at the `2n` padded positions
    /// ([`KappaGrid::padded_z_values`]), exact for the band-limited field.
    pub fn field_on_padded_z(&self, amplitudes: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.grid.n();
        SqzError::check_len("field_on_padded_z", n, amplitudes.len())?;
        let mut padded = vec![Complex64::new(0.0, 0.0); 2 * n];
        padded[n / 2..n / 2 + n].copy_from_slice(amplitudes);
        let scale = (self.grid.delta_kappa() / (2.0 * PI)).sqrt();
        let mut out = Self::centered(&self.inv2, &padded);
        out.iter_mut().for_each(|c| *c *= scale);
        Ok(out)
    }

    /// Continuous transform `F(q_m) = ∫dz e^{-i q_m z}/√(2π) f(z)` of samples on
    /// the padded positions, returned on the extended grid `q_m = (m - n)·Δκ`.
    pub fn spectrum_from_padded_z(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.grid.n();
        SqzError::check_len("spectrum_from_padded_z", 2 * n, samples.len())?;
        let scale = 0.5 * self.grid.delta_z() / (2.0 * PI).sqrt();
        let mut out = Self::centered(&self.fwd2, samples);
        out.iter_mut().for_each(|c| *c *= scale);
        Ok(out)
    }
}
