//! Closed-form and quadrature references for validating the propagator.
//!
//! Everything here is evaluated independently of the Bogoliubov machinery:
//! the perturbative SPDC moment, phase matching, the lossless product-form
//! JSA, the exact SPM solution and the analytic homodyne variance for SFWM.
//! All SPDC references are written in the lab frame with the pump given at
//! the start time `t0` and the moment returned at `t0 + T`.

use std::f64::consts::PI;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

use crate::error::{Result, SqzError};
use crate::kgrid::{KappaGrid, ModeParams, Spectral};
use crate::linalg::CMat;
use crate::meanfield::{gamma_to_zeta3, MeanField, NonlinearCoupling, PulseShape, Region};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// `sin(x)/x` for complex `x`.
fn csinc(x: Complex64) -> Complex64 {
    if x.norm() < 1e-3 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0
    } else {
        x.sin() / x
    }
}

/// `Φ(q) = ∫dz ζ(z) e^{-iqz}` for `ζ = zeta_bar` on `[-L/2, L/2]`.
pub fn phase_matching_tophat(q: f64, zeta_bar: Complex64, length: f64) -> Complex64 {
    zeta_bar * length * sinc(0.5 * q * length)
}

/// Phase matching of the top-hat whose edges are raised-cosine ramps of full
/// width `edge`. The profile is the hard top-hat convolved with
/// `(π/2w)cos(πx/w)` on `|x| ≤ w/2`, so its transform picks up that kernel's
/// factor `cos(qw/2)/(1 - (qw/π)²)`.
pub fn phase_matching_smoothed(q: f64, zeta_bar: Complex64, length: f64, edge: f64) -> Complex64 {
    let u = q * edge / PI;
    let kernel = if (u.abs() - 1.0).abs() < 1e-6 {
        PI / 4.0
    } else {
        (0.5 * q * edge).cos() / (1.0 - u * u)
    };
    phase_matching_tophat(q, zeta_bar, length) * kernel
}

/// Phase matching of the region in `coupling` at mismatch `q`.
pub fn phase_matching(coupling: &NonlinearCoupling, zeta: Complex64, q: f64, grid: &KappaGrid) -> Result<Complex64> {
    match &coupling.region {
        Region::TopHat { length, .. } => Ok(phase_matching_smoothed(
            q,
            zeta,
            *length,
            coupling.region.edge_width(grid),
        )),
        Region::Samples { values } => {
            let dz = grid.delta_z();
            Ok(zeta
                * grid
                    .z_values()
                    .iter()
                    .zip(values)
                    .map(|(&z, &s)| Complex64::from_polar(s * dz, -q * z))
                    .sum::<Complex64>())
        }
        Region::Uniform => Err(SqzError::config(
            "phase matching of an unbounded region is a delta function; use a finite region",
        )),
    }
}

/// Complex energy sum and difference of a pair of signal photons at `κ, κ'`
/// and a pump photon at `κ''`, with decay rates folded in as imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEnergies {
    pub eps_plus: Complex64,
    pub eps_minus: Complex64,
}

impl ComplexEnergies {
    /// `ε⁺ = -(ω_F(κ) + ω_F(κ') + ω_SH(κ'')) + i(2γ_F + γ_SH)/2`,
    /// `ε⁻ = ω_SH(κ'') - ω_F(κ) - ω_F(κ') + i(2γ_F - γ_SH)/2`.
    pub fn new(omega_f1: f64, omega_f2: f64, omega_sh: f64, gamma_f: f64, gamma_sh: f64) -> Self {
        ComplexEnergies {
            eps_plus: Complex64::new(-(omega_f1 + omega_f2 + omega_sh), 0.5 * (2.0 * gamma_f + gamma_sh)),
            eps_minus: Complex64::new(omega_sh - omega_f1 - omega_f2, 0.5 * (2.0 * gamma_f - gamma_sh)),
        }
    }

    /// `e^{iε⁺T/2} · sinh(iTε⁻/2)/(iε⁻/2)`.
    pub fn time_factor(&self, t: f64) -> Complex64 {
        let half = 0.5 * t;
        (I * self.eps_plus * half).exp() * t * csinc(self.eps_minus * half)
    }
}

fn spdc_inputs<'a>(pump0: &'a MeanField, grid: &KappaGrid) -> Result<(Vec<Complex64>, &'a ModeParams)> {
    SqzError::check_len("spdc oracle pump", grid.n(), pump0.amplitudes.len())?;
    let s = 1.0 / grid.delta_kappa().sqrt();
    Ok((pump0.amplitudes.iter().map(|b| b * s).collect(), &pump0.mode))
}

/// First-order SPDC moment `⟨b_F(κ_j) b_F(κ_j')⟩` (discrete normalization)
/// after an interaction time `t_total`, starting from vacuum with second
/// harmonic pump `pump0`:
///
/// `Δκ · i/(2π)^{3/2} Σ_κ'' Δκ ⟨b_SH(κ'')⟩ Φ(κ + κ' - κ'') e^{iε⁺T/2} sinh(iTε⁻/2)/(iε⁻/2)`.
pub fn spdc_perturbative_moment(
    pump0: &MeanField,
    signal: &ModeParams,
    coupling: &NonlinearCoupling,
    t_total: f64,
    grid: &KappaGrid,
) -> Result<CMat> {
    let (b_sh, sh) = spdc_inputs(pump0, grid)?;
    let n = grid.n();
    let dk = grid.delta_kappa();
    let kappa = grid.kappa_values();
    let active: Vec<usize> = (0..n).filter(|&j| b_sh[j].norm() > 0.0).collect();
    let prefactor = I * dk * dk / (2.0 * PI).powf(1.5);
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        for jp in 0..=j {
            let (wf1, wf2) = (signal.omega(kappa[j]), signal.omega(kappa[jp]));
            let mut acc = Complex64::new(0.0, 0.0);
            for &l in &active {
                let e = ComplexEnergies::new(wf1, wf2, sh.omega(kappa[l]), signal.gamma_loss, sh.gamma_loss);
                let phi = phase_matching(coupling, coupling.zeta2, kappa[j] + kappa[jp] - kappa[l], grid)?;
                acc += b_sh[l] * phi * e.time_factor(t_total);
            }
            out[(j, jp)] = prefactor * acc;
            out[(jp, j)] = out[(j, jp)];
        }
    }
    Ok(out)
}

/// The same moment obtained by integrating the first-order equation of
/// motion `dM/dt = -i a M + i S(t)` in time with composite Gauss-Legendre
/// quadrature, without the closed-form time integral.
pub fn spdc_moment_time_quadrature(
    pump0: &MeanField,
    signal: &ModeParams,
    coupling: &NonlinearCoupling,
    t_total: f64,
    grid: &KappaGrid,
) -> Result<CMat> {
    let (b_sh, sh) = spdc_inputs(pump0, grid)?;
    let n = grid.n();
    let dk = grid.delta_kappa();
    let kappa = grid.kappa_values();
    let q_ext: Vec<f64> = grid.extended_kappa_values();
    let active: Vec<usize> = (0..n).filter(|&j| b_sh[j].norm() > 0.0).collect();

    // Φ(q_m - κ_l) on the extended grid, per pump component.
    let mut phi = vec![Complex64::new(0.0, 0.0); q_ext.len() * active.len()];
    for (a, &l) in active.iter().enumerate() {
        for (m, &q) in q_ext.iter().enumerate() {
            phi[m * active.len() + a] = phase_matching(coupling, coupling.zeta2, q - kappa[l], grid)?;
        }
    }
    let b_rate: Vec<Complex64> = active
        .iter()
        .map(|&l| Complex64::new(sh.omega(kappa[l]), -0.5 * sh.gamma_loss))
        .collect();
    let a_rate = |j: usize, jp: usize| {
        Complex64::new(signal.omega(kappa[j]) + signal.omega(kappa[jp]), -signal.gamma_loss)
    };

    let w_max = kappa
        .iter()
        .map(|&k| signal.omega(k).abs())
        .fold(0.0, f64::max)
        * 2.0
        + active.iter().map(|&l| sh.omega(kappa[l]).abs()).fold(0.0, f64::max);
    let panels = ((w_max * t_total / 2.0).ceil() as usize).max(4);
    let rule = GaussLegendre::new(16).map_err(|e| SqzError::numeric(0.0, e.to_string()))?;

    let mut acc = CMat::zeros(n, n);
    let mut s_t = vec![Complex64::new(0.0, 0.0); q_ext.len()];
    let h = t_total / panels as f64;
    for p in 0..panels {
        let (lo, hi) = (p as f64 * h, (p + 1) as f64 * h);
        for &(x, w) in rule.as_node_weight_pairs() {
            let tau = 0.5 * (hi - lo) * x + 0.5 * (hi + lo);
            let wt = 0.5 * (hi - lo) * w;
            let phases: Vec<Complex64> = (0..active.len())
                .map(|a| b_sh[active[a]] * (-I * b_rate[a] * tau).exp())
                .collect();
            for (m, s) in s_t.iter_mut().enumerate() {
                let row = &phi[m * active.len()..(m + 1) * active.len()];
                *s = row.iter().zip(&phases).map(|(f, g)| f * g).sum::<Complex64>() * (dk / (2.0 * PI));
            }
            for j in 0..n {
                for jp in 0..=j {
                    let kernel = (-I * a_rate(j, jp) * (t_total - tau)).exp();
                    acc[(j, jp)] += kernel * s_t[grid.sum_index(j, jp)] * wt;
                }
            }
        }
    }
    let prefactor = I * dk / (2.0 * PI).sqrt();
    Ok(CMat::from_fn(n, n, |i, j| {
        let v = if i >= j { acc[(i, j)] } else { acc[(j, i)] };
        prefactor * v
    }))
}

/// Root of `ω_SH(κ'') = target` continuous with the linear-dispersion root.
fn invert_dispersion(mode: &ModeParams, target: f64) -> Option<f64> {
    if mode.v_prime == 0.0 {
        return Some(target / mode.v);
    }
    let disc = mode.v * mode.v + 2.0 * mode.v_prime * target;
    (disc >= 0.0).then(|| (disc.sqrt() - mode.v) / mode.v_prime)
}

fn interpolate(values: &[Complex64], grid: &KappaGrid, k: f64) -> Complex64 {
    let u = k / grid.delta_kappa() + (grid.n() / 2) as f64;
    if u < 0.0 || u > (grid.n() - 1) as f64 {
        return Complex64::new(0.0, 0.0);
    }
    let i = (u.floor() as usize).min(grid.n() - 2);
    let t = u - i as f64;
    values[i] * (1.0 - t) + values[i + 1] * t
}

/// Lossless long-time SPDC JSA shape: pump amplitude at the energy-conserving
/// pump wavevector times the phase matching there, normalized to unit
/// Frobenius norm.
pub fn spdc_lowgain_product_jsa(
    pump0: &MeanField,
    signal: &ModeParams,
    coupling: &NonlinearCoupling,
    grid: &KappaGrid,
) -> Result<CMat> {
    let (b_sh, sh) = spdc_inputs(pump0, grid)?;
    let n = grid.n();
    let kappa = grid.kappa_values();
    let mut out = CMat::zeros(n, n);
    let mut norm2 = 0.0;
    for j in 0..n {
        for jp in 0..n {
            let target = signal.omega(kappa[j]) + signal.omega(kappa[jp]);
            let v = match invert_dispersion(sh, target) {
                Some(k2) => {
                    interpolate(&b_sh, grid, k2)
                        * phase_matching(coupling, coupling.zeta2, kappa[j] + kappa[jp] - k2, grid)?
                }
                None => Complex64::new(0.0, 0.0),
            };
            norm2 += v.norm_sqr();
            out[(j, jp)] = v;
        }
    }
    if norm2 > 0.0 {
        let s = 1.0 / norm2.sqrt();
        for j in 0..n {
            for jp in 0..n {
                out[(j, jp)] *= s;
            }
        }
    }
    Ok(out)
}

/// Exact dispersionless SPM over interaction time `t`: the z-space field is
/// multiplied by `exp(iζ|ψ(z)|²t)`.
pub fn spm_exact_zeta(field0: &MeanField, zeta3: f64, t: f64, grid: &KappaGrid) -> Result<MeanField> {
    let sp = Spectral::new(grid);
    let mut psi = sp.field_on_z(&field0.amplitudes)?;
    for p in psi.iter_mut() {
        *p *= Complex64::from_polar(1.0, zeta3 * p.norm_sqr() * t);
    }
    Ok(MeanField {
        amplitudes: sp.amplitudes_from_z(&psi)?,
        time: field0.time + t,
        mode: field0.mode,
    })
}

/// `A(L, t) = e^{iγ|A(0,t)|²L} A(0,t)` expressed on the photon-normalized
/// field of mode `field0.mode` (whose `center_omega` sets the photon energy).
pub fn spm_exact(field0: &MeanField, gamma_nl: f64, length: f64, grid: &KappaGrid) -> Result<MeanField> {
    let mode = field0.mode;
    let zeta = gamma_to_zeta3(gamma_nl, mode.center_omega, mode.v);
    spm_exact_zeta(field0, zeta, length / mode.v, grid)
}

/// Pulse-shape constant `C` of the analytic SFWM homodyne variance.
pub fn shape_constant(shape: PulseShape) -> Result<f64> {
    match shape {
        PulseShape::Lorentzian => Ok(0.75),
        PulseShape::Sech => Ok(0.8),
        PulseShape::Gaussian => Ok((2.0f64 / 3.0).sqrt()),
        PulseShape::Rectangular => Ok(1.0),
        other => Err(SqzError::config(format!(
            "no analytic homodyne variance for pulse shape {other:?}"
        ))),
    }
}

/// Minimum quadrature variance of single-pump SFWM with peak nonlinear phase
/// `phi0`, for a power profile `Φ(t)/Φ(0)` given by the shape's envelope.
pub fn kerr_vminus(shape: PulseShape, phi0: f64) -> Result<f64> {
    kerr_vminus_windowed(shape, phi0, None, 1e-11)
}

/// As [`kerr_vminus`], with the time integrals restricted to
/// `|t| ≤ half_window` (in units of the pulse width) when given, and an
/// absolute quadrature tolerance `tol`.
pub fn kerr_vminus_windowed(shape: PulseShape, phi0: f64, half_window: Option<f64>, tol: f64) -> Result<f64> {
    let c = shape_constant(shape)?;
    if !(phi0 >= 0.0) || !phi0.is_finite() {
        return Err(SqzError::Precondition(format!("peak phase must be non-negative, got {phi0}")));
    }
    let root = (1.0 + c * c * phi0 * phi0).sqrt();
    let bracket = |f: f64| {
        let p = phi0 * f;
        1.0 + 2.0 * p * p - 2.0 * p * (1.0 + p * c * phi0) / root
    };
    if shape == PulseShape::Rectangular {
        return Ok(bracket(1.0));
    }
    let env = move |x: f64| shape.envelope(x);
    let integrate = |g: &dyn Fn(f64) -> f64| -> f64 {
        match half_window {
            Some(h) => {
                // Even integrand; geometric breakpoints keep the unit-width
                // core resolved on wide windows.
                let mut total = 0.0;
                let (mut a, mut b) = (0.0, 1.0f64.min(h));
                while a < h {
                    total += quadrature::double_exponential::integrate(g, a, b, tol).integral;
                    a = b;
                    b = (2.0 * b).min(h);
                }
                2.0 * total
            }
            None => {
                // x = u/(1 - u²) maps (-1, 1) onto the real line.
                let mapped = |u: f64| {
                    let d = 1.0 - u * u;
                    if d <= 0.0 {
                        return 0.0;
                    }
                    let x = u / d;
                    let v = g(x) * (1.0 + u * u) / (d * d);
                    if v.is_finite() {
                        v
                    } else {
                        0.0
                    }
                };
                quadrature::double_exponential::integrate(mapped, -1.0, 1.0, tol).integral
            }
        }
    };
    let den = integrate(&|x| env(x));
    let num = integrate(&|x| {
        let f = env(x);
        f * bracket(f)
    });
    Ok(num / den)
}
