//! Quantum fluctuations: the generator `Q(t)`, Bogoliubov propagators and the
//! Gaussian second moments `N = ⟨b†b⟩`, `M = ⟨bb⟩`.
//!
//! The fluctuation vector obeys `d/dt (b, b†) = i Q(t) (b, b†)` with
//! `Q = [[R, S], [-S*, -R*]]`,
//! `R_jj' = -ω(κ_j)δ_jj' + 2Δκ/√(2π)·M(κ_j - κ_j')` and
//! `S_jj' = Δκ/√(2π)·S(κ_j + κ_j')`.
//!
//! Each time step applies the exact dispersion phase for half a step, the
//! exponential of the drive part of `Q` sampled at the step midpoint, and
//! another exact half step of dispersion. This symmetric split is second
//! order in `dt` like the plain midpoint exponential, and it keeps the lab
//! and moving-frame descriptions related by an exact gauge transformation.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqzError};
use crate::kgrid::{Frame, KappaGrid, ModeParams};
use crate::linalg::{self, BlockPair, CMat};
use crate::meanfield::{DriveFields, DriveSchedule};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Hermitian `R` and symmetric `S` blocks of `Q(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorBlocks {
    pub r: CMat,
    pub s: CMat,
    pub time: f64,
}

impl GeneratorBlocks {
    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    /// `(max|R - R†|, max|S - Sᵀ|)`.
    pub fn structure_residuals(&self) -> (f64, f64) {
        (
            linalg::hermiticity_residual(self.r.as_ref()),
            linalg::symmetry_residual(self.s.as_ref()),
        )
    }
}

/// `ω(κ_j)` seen from `frame`.
pub fn dispersion(mode: &ModeParams, grid: &KappaGrid, frame: Frame) -> Vec<f64> {
    (0..grid.n()).map(|j| mode.omega_in(frame, grid.kappa(j))).collect()
}

/// Generator of the drive alone (no dispersion on the diagonal).
pub fn build_drive_generator(drive: &DriveFields, grid: &KappaGrid) -> Result<GeneratorBlocks> {
    let n = grid.n();
    SqzError::check_len("drive S", 2 * n, drive.s_ext.len())?;
    SqzError::check_len("drive M", 2 * n, drive.m_ext.len())?;
    if drive.s_ext.iter().chain(&drive.m_ext).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(SqzError::numeric(drive.time, "drive contains non-finite values"));
    }
    let c = grid.delta_kappa() / (2.0 * PI).sqrt();
    let r = Mat::from_fn(n, n, |j, jp| {
        if j == jp {
            // M(0) is real for a real M̃; drop rounding-level imaginary parts.
            Complex64::new(2.0 * c * drive.m_ext[n].re, 0.0)
        } else {
            2.0 * c * drive.m_ext[grid.diff_index(j, jp)]
        }
    });
    let s = Mat::from_fn(n, n, |j, jp| c * drive.s_ext[grid.sum_index(j, jp)]);
    Ok(GeneratorBlocks {
        r,
        s,
        time: drive.time,
    })
}

/// Full generator including `-ω(κ_j)` on the diagonal of `R`.
pub fn build_generator(drive: &DriveFields, mode: &ModeParams, grid: &KappaGrid, frame: Frame) -> Result<GeneratorBlocks> {
    let mut g = build_drive_generator(drive, grid)?;
    for (j, w) in dispersion(mode, grid, frame).into_iter().enumerate() {
        g.r[(j, j)] -= w;
    }
    Ok(g)
}

/// Step size rule: `dt ≤ 0.1/max(max|ω|, n·max|S|, n·max|R_offdiag|)`.
pub fn suggested_dt(gen: &GeneratorBlocks, omega_max: f64) -> f64 {
    let n = gen.dim() as f64;
    let mut off = 0.0f64;
    for j in 0..gen.dim() {
        for i in 0..gen.dim() {
            if i != j {
                off = off.max(gen.r[(i, j)].norm());
            }
        }
    }
    let scale = omega_max.abs().max(n * linalg::max_abs(gen.s.as_ref())).max(n * off);
    if scale > 0.0 {
        0.1 / scale
    } else {
        f64::INFINITY
    }
}

/// Bogoliubov propagator `b(t_end) = V b(t_start) + W b†(t_start)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovBlocks {
    pub v: CMat,
    pub w: CMat,
    pub t_start: f64,
    pub t_end: f64,
}

impl BogoliubovBlocks {
    pub fn identity(n: usize, t: f64) -> Self {
        BogoliubovBlocks {
            v: CMat::identity(n, n),
            w: CMat::zeros(n, n),
            t_start: t,
            t_end: t,
        }
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    /// Pure phase evolution `V = diag(e^{-iω_j dt})`.
    pub fn free(omega: &[f64], t_start: f64, dt: f64) -> Self {
        let n = omega.len();
        BogoliubovBlocks {
            v: Mat::from_fn(n, n, |i, j| {
                if i == j {
                    Complex64::from_polar(1.0, -omega[i] * dt)
                } else {
                    ZERO
                }
            }),
            w: CMat::zeros(n, n),
            t_start,
            t_end: t_start + dt,
        }
    }

    fn from_pair(p: BlockPair, t_start: f64, t_end: f64) -> Self {
        BogoliubovBlocks {
            v: p.a,
            w: p.b,
            t_start,
            t_end,
        }
    }

    fn to_pair(&self) -> BlockPair {
        BlockPair::new(self.v.clone(), self.w.clone())
    }

    /// `(max|VV† - WW† - I|, max|VWᵀ - (VWᵀ)ᵀ|)`.
    pub fn symplectic_residuals(&self) -> (f64, f64) {
        let n = self.dim();
        let a = &(self.v.as_ref() * self.v.adjoint()) - &(self.w.as_ref() * self.w.adjoint());
        let a = &a - &CMat::identity(n, n);
        let b = self.v.as_ref() * self.w.transpose();
        (linalg::max_abs(a.as_ref()), linalg::symmetry_residual(b.as_ref()))
    }

    pub fn symplectic_residual(&self) -> f64 {
        let (a, b) = self.symplectic_residuals();
        a.max(b)
    }
}

/// `K = exp(iΔt Q)` of the full generator.
pub fn exponentiate(gen: &GeneratorBlocks, dt: f64) -> Result<BogoliubovBlocks> {
    let idt = I * dt;
    let x = BlockPair::new(
        Mat::from_fn(gen.dim(), gen.dim(), |i, j| idt * gen.r[(i, j)]),
        Mat::from_fn(gen.dim(), gen.dim(), |i, j| idt * gen.s[(i, j)]),
    );
    let e = linalg::expm(&x).ok_or_else(|| SqzError::numeric(gen.time, "matrix exponential did not converge"))?;
    Ok(BogoliubovBlocks::from_pair(e, gen.time - 0.5 * dt, gen.time + 0.5 * dt))
}

/// One step from `t_start` to `t_start + dt`: exact half-step dispersion
/// around the exponential of the drive generator (sampled at the midpoint).
pub fn split_step(omega: &[f64], drive_gen: Option<&GeneratorBlocks>, t_start: f64, dt: f64) -> Result<BogoliubovBlocks> {
    let Some(gen) = drive_gen else {
        return Ok(BogoliubovBlocks::free(omega, t_start, dt));
    };
    let half: Vec<Complex64> = omega.iter().map(|w| Complex64::from_polar(1.0, -0.5 * w * dt)).collect();
    let mut e = exponentiate(gen, dt)?.to_pair();
    e.scale_rows(&half);
    e.scale_cols(&half);
    Ok(BogoliubovBlocks::from_pair(e, t_start, t_start + dt))
}

/// `K(t2, t0) = K(t2, t1) K(t1, t0)`.
pub fn concatenate(later: &BogoliubovBlocks, earlier: &BogoliubovBlocks) -> Result<BogoliubovBlocks> {
    let tol = 1e-9 * later.t_start.abs().max(earlier.t_end.abs()).max(1e-300);
    if (earlier.t_end - later.t_start).abs() > tol {
        return Err(SqzError::Sequencing {
            earlier_end: earlier.t_end,
            later_start: later.t_start,
        });
    }
    SqzError::check_len("concatenate", earlier.dim(), later.dim())?;
    let p = later.to_pair().mul(&earlier.to_pair());
    Ok(BogoliubovBlocks::from_pair(p, earlier.t_start, later.t_end))
}

/// Second moments of the zero-mean fluctuation field, discrete normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub n: CMat,
    pub m: CMat,
    pub time: f64,
}

/// Consistency of `(N, M)` with a Gaussian state: eigenvalues `n_l` of `N`
/// and singular values `λ_l` of `M`, both descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityReport {
    pub occupations: Vec<f64>,
    pub singular_values: Vec<f64>,
    /// Smallest eigenvalue of `N`.
    pub min_occupation: f64,
    /// `max_l (λ_l² - n_l(n_l + 1))`; at most rounding level for a valid state.
    pub max_excess: f64,
    /// `max_l |λ_l² - n_l(n_l + 1)| / (n_l(n_l + 1) + 1e-6·n_1(n_1 + 1))`;
    /// vanishes for pure states.
    pub purity_deviation: f64,
}

impl GaussianMoments {
    pub fn vacuum(n: usize, time: f64) -> Self {
        GaussianMoments {
            n: CMat::zeros(n, n),
            m: CMat::zeros(n, n),
            time,
        }
    }

    pub fn dim(&self) -> usize {
        self.n.nrows()
    }

    /// Moments of vacuum evolved by `k`: `N = W*Wᵀ`, `M = VWᵀ`.
    pub fn from_propagator(k: &BogoliubovBlocks) -> Self {
        let n = k.w.conjugate() * k.w.transpose();
        let m = k.v.as_ref() * k.w.transpose();
        let mut out = GaussianMoments { n, m, time: k.t_end };
        out.symmetrize();
        out
    }

    pub fn mean_photon_number(&self) -> f64 {
        (0..self.dim()).map(|j| self.n[(j, j)].re).sum()
    }

    fn symmetrize(&mut self) {
        let d = self.dim();
        for j in 0..d {
            self.n[(j, j)] = Complex64::new(self.n[(j, j)].re, 0.0);
            for i in 0..j {
                let h = 0.5 * (self.n[(i, j)] + self.n[(j, i)].conj());
                self.n[(i, j)] = h;
                self.n[(j, i)] = h.conj();
                let s = 0.5 * (self.m[(i, j)] + self.m[(j, i)]);
                self.m[(i, j)] = s;
                self.m[(j, i)] = s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(self.n.as_ref()) && linalg::all_finite(self.m.as_ref())
    }

    pub fn physicality(&self) -> Result<PhysicalityReport> {
        let eig = self
            .n
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| SqzError::numeric(self.time, format!("eigenvalues of N: {e:?}")))?;
        let mut occ: Vec<f64> = eig.into_iter().collect();
        occ.sort_by(|a, b| b.total_cmp(a));
        let mut sv = self
            .m
            .singular_values()
            .map_err(|e| SqzError::numeric(self.time, format!("singular values of M: {e:?}")))?;
        sv.sort_by(|a, b| b.total_cmp(a));
        let top = occ.first().map(|n| n * (n + 1.0)).unwrap_or(0.0).max(0.0);
        let mut max_excess = f64::NEG_INFINITY;
        let mut purity = 0.0f64;
        for (n, l) in occ.iter().zip(&sv) {
            let bound = n * (n + 1.0);
            let diff = l * l - bound;
            max_excess = max_excess.max(diff);
            let denom = bound.abs() + 1e-6 * top;
            if denom > 0.0 {
                purity = purity.max(diff.abs() / denom);
            }
        }
        Ok(PhysicalityReport {
            min_occupation: occ.last().copied().unwrap_or(0.0),
            occupations: occ,
            singular_values: sv,
            max_excess,
            purity_deviation: purity,
        })
    }

    /// Moments of the lab-frame operators `b_lab(κ) = e^{-i v_ref κ t} b(κ)`
    /// given moments expressed in `frame` at their own time.
    pub fn to_lab(&self, frame: Frame, grid: &KappaGrid) -> GaussianMoments {
        let ph: Vec<Complex64> = (0..grid.n()).map(|j| frame.to_lab_phase(grid.kappa(j), self.time)).collect();
        GaussianMoments {
            n: Mat::from_fn(self.dim(), self.dim(), |i, j| ph[i].conj() * self.n[(i, j)] * ph[j]),
            m: Mat::from_fn(self.dim(), self.dim(), |i, j| ph[i] * self.m[(i, j)] * ph[j]),
            time: self.time,
        }
    }
}

/// Moment update for one Bogoliubov step:
/// `N' = W*MVᵀ + V*M*Wᵀ + V*NVᵀ + W*NᵀWᵀ + W*Wᵀ`,
/// `M' = VMVᵀ + WM*Wᵀ + WNVᵀ + VNᵀWᵀ + VWᵀ`.
pub fn update_moments_unitary(m: &GaussianMoments, k: &BogoliubovBlocks) -> Result<GaussianMoments> {
    SqzError::check_len("update_moments_unitary", m.dim(), k.dim())?;
    let (v, w) = (k.v.as_ref(), k.w.as_ref());
    let x = &(w.conjugate() * &m.m) * v.transpose();
    let vnv = &(v.conjugate() * &m.n) * v.transpose();
    let wnw = (&(w * &m.n) * w.adjoint()).conjugate().to_owned();
    let ww = w.conjugate() * w.transpose();
    let new_n = &(&(&(&x + x.adjoint()) + &vnv) + &wnw) + &ww;

    let vmv = &(v * &m.m) * v.transpose();
    let wmw = &(w * m.m.conjugate()) * w.transpose();
    let p = &(w * &m.n) * v.transpose();
    let vw = v * w.transpose();
    let new_m = &(&(&(&vmv + &wmw) + &p) + p.transpose()) + &vw;

    let mut out = GaussianMoments {
        n: new_n,
        m: new_m,
        time: k.t_end,
    };
    out.symmetrize();
    Ok(out)
}

/// Photon loss over `dt`: both moments scale by `η = e^{-γ dt}`.
pub fn update_moments_loss(m: &GaussianMoments, gamma_loss: f64, dt: f64) -> GaussianMoments {
    let eta = Complex64::new((-gamma_loss * dt).exp(), 0.0);
    GaussianMoments {
        n: Mat::from_fn(m.dim(), m.dim(), |i, j| m.n[(i, j)] * eta),
        m: Mat::from_fn(m.dim(), m.dim(), |i, j| m.m[(i, j)] * eta),
        time: m.time,
    }
}

fn apply_diagonal(m: &GaussianMoments, d: &[Complex64], t_end: f64) -> GaussianMoments {
    GaussianMoments {
        n: Mat::from_fn(m.dim(), m.dim(), |i, j| d[i].conj() * m.n[(i, j)] * d[j]),
        m: Mat::from_fn(m.dim(), m.dim(), |i, j| d[i] * m.m[(i, j)] * d[j]),
        time: t_end,
    }
}

/// How the final moments are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentPath {
    /// Propagator-derived when lossless from vacuum, stepwise otherwise.
    #[default]
    Auto,
    /// Update `(N, M)` after every step with interleaved loss.
    Stepwise,
    /// Concatenate the step propagators and read off `N = W*Wᵀ`, `M = VWᵀ`.
    FromPropagator,
}

#[derive(Debug, Clone, Default)]
pub struct PropagateOptions {
    pub n_steps: usize,
    pub track_propagator: bool,
    pub moment_path: MomentPath,
    pub initial: Option<GaussianMoments>,
    pub trace: bool,
}

impl PropagateOptions {
    pub fn steps(n_steps: usize) -> Self {
        PropagateOptions {
            n_steps,
            ..Default::default()
        }
    }
}

/// Per-step monitoring record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    pub trace_n: f64,
    pub max_abs_m: f64,
    pub symplectic_residual: f64,
}

impl TraceRecord {
    pub const HEADER: &'static str = "step\ttime\ttrace_n\tmax_abs_m\tsymplectic_residual";

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}",
            self.step, self.time, self.trace_n, self.max_abs_m, self.symplectic_residual
        )
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub moments: GaussianMoments,
    pub propagator: Option<BogoliubovBlocks>,
    pub trace: Vec<TraceRecord>,
}

/// Evolves the fluctuations of `mode` from `t0` to `t1` in `n_steps` equal
/// steps, requesting the drive at each step midpoint.
pub fn propagate(
    schedule: &mut dyn DriveSchedule,
    mode: &ModeParams,
    grid: &KappaGrid,
    frame: Frame,
    t0: f64,
    t1: f64,
    opts: &PropagateOptions,
) -> Result<Propagation> {
    mode.validate()?;
    if opts.n_steps == 0 {
        return Err(SqzError::config("n_steps must be at least 1"));
    }
    if !(t1 > t0) {
        return Err(SqzError::config(format!("end time {t1:e} must exceed start time {t0:e}")));
    }
    let n = grid.n();
    let lossless = mode.gamma_loss == 0.0;
    let vacuum_start = opts.initial.is_none();
    if let Some(init) = &opts.initial {
        SqzError::check_len("initial moments", n, init.dim())?;
    }
    let from_propagator = match opts.moment_path {
        MomentPath::Auto => lossless && vacuum_start,
        MomentPath::Stepwise => false,
        MomentPath::FromPropagator => {
            if !(lossless && vacuum_start) {
                return Err(SqzError::config(
                    "moments can only be read from the propagator for lossless evolution from vacuum",
                ));
            }
            true
        }
    };
    let track = (opts.track_propagator && lossless) || from_propagator;
    let omega = dispersion(mode, grid, frame);
    let dt = (t1 - t0) / opts.n_steps as f64;

    let mut moments = opts.initial.clone().unwrap_or_else(|| GaussianMoments::vacuum(n, t0));
    moments.time = t0;
    let mut total = track.then(|| BogoliubovBlocks::identity(n, t0));
    let mut trace = Vec::new();

    for step in 0..opts.n_steps {
        let t = t0 + step as f64 * dt;
        let t_next = if step + 1 == opts.n_steps { t1 } else { t0 + (step + 1) as f64 * dt };
        let h = t_next - t;
        let drive = schedule.drive_at(t + 0.5 * h)?;
        let gen = if drive.is_zero() {
            None
        } else {
            Some(build_drive_generator(&drive, grid)?)
        };
        let k = split_step(&omega, gen.as_ref(), t, h)?;
        if !linalg::all_finite(k.v.as_ref()) || !linalg::all_finite(k.w.as_ref()) {
            return Err(SqzError::numeric(t, format!("step {step} propagator is non-finite")));
        }

        if let Some(acc) = total.as_mut() {
            *acc = if gen.is_none() {
                let d: Vec<Complex64> = omega.iter().map(|w| Complex64::from_polar(1.0, -w * h)).collect();
                let mut p = BlockPair::new(std::mem::replace(&mut acc.v, CMat::zeros(0, 0)), std::mem::replace(&mut acc.w, CMat::zeros(0, 0)));
                p.scale_rows(&d);
                BogoliubovBlocks::from_pair(p, acc.t_start, t_next)
            } else {
                concatenate(&k, acc)?
            };
        }

        if !from_propagator {
            let half = update_moments_loss(&moments, mode.gamma_loss, 0.5 * h);
            let unitary = if gen.is_none() {
                let d: Vec<Complex64> = omega.iter().map(|w| Complex64::from_polar(1.0, -w * h)).collect();
                apply_diagonal(&half, &d, t_next)
            } else {
                update_moments_unitary(&half, &k)?
            };
            moments = update_moments_loss(&unitary, mode.gamma_loss, 0.5 * h);
            moments.time = t_next;
            if !moments.is_finite() {
                return Err(SqzError::numeric(t_next, format!("moments became non-finite at step {step}")));
            }
        }

        if opts.trace {
            let current = match (&total, from_propagator) {
                (Some(acc), true) => GaussianMoments::from_propagator(acc),
                _ => moments.clone(),
            };
            let residual = match &total {
                Some(acc) => acc.symplectic_residual(),
                None => k.symplectic_residual(),
            };
            trace.push(TraceRecord {
                step,
                time: t_next,
                trace_n: current.mean_photon_number(),
                max_abs_m: linalg::max_abs(current.m.as_ref()),
                symplectic_residual: residual,
            });
        }
    }

    if let Some(acc) = &total {
        if !linalg::all_finite(acc.v.as_ref()) || !linalg::all_finite(acc.w.as_ref()) {
            return Err(SqzError::numeric(t1, "accumulated propagator is non-finite"));
        }
    }
    if from_propagator {
        moments = GaussianMoments::from_propagator(total.as_ref().expect("tracked"));
    }
    moments.time = t1;
    Ok(Propagation {
        moments,
        propagator: if opts.track_propagator && lossless { total } else { None },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::ConstantDrive;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_drive(grid: &KappaGrid, scale: f64, seed: u64) -> DriveFields {
        // M̃ real in z ⇒ M(q) = M*(-q); S arbitrary.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.n();
        let mut m_ext = vec![ZERO; 2 * n];
        m_ext[n] = c(rng.random_range(-1.0..1.0) * scale, 0.0);
        for d in 1..n {
            let v = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
            m_ext[n + d] = v;
            m_ext[n - d] = v.conj();
        }
        let s_ext = (0..2 * n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
            .collect();
        DriveFields { s_ext, m_ext, time: 0.0 }
    }

    #[test]
    fn zero_drive_generator() {
        let g = KappaGrid::new(8, 10.0, 0.0).unwrap();
        let mode = ModeParams::new(3.0, 0.5);
        let gen = build_generator(&DriveFields::zero(&g, 0.0), &mode, &g, Frame::lab()).unwrap();
        for j in 0..8 {
            for k in 0..8 {
                let want = if j == k { -mode.omega(g.kappa(j)) } else { 0.0 };
                assert_eq!(gen.r[(j, k)], c(want, 0.0));
                assert_eq!(gen.s[(j, k)], ZERO);
            }
        }
    }

    #[test]
    fn flat_xpm_shifts_diagonal() {
        let g = KappaGrid::new(8, 10.0, 0.0).unwrap();
        let mode = ModeParams::new(3.0, 0.0);
        let mut d = DriveFields::zero(&g, 0.0);
        d.m_ext[8] = c(0.7, 0.0);
        let gen = build_generator(&d, &mode, &g, Frame::lab()).unwrap();
        let shift = 2.0 * 0.7 * 10.0 / (2.0 * PI).sqrt();
        for j in 0..8 {
            for k in 0..8 {
                let want = if j == k { shift - mode.omega(g.kappa(j)) } else { 0.0 };
                assert!((gen.r[(j, k)] - c(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn generator_structure() {
        let g = KappaGrid::new(16, 5.0, 0.0).unwrap();
        let d = random_drive(&g, 1.0, 3);
        let gen = build_generator(&d, &ModeParams::new(1.0, 0.1), &g, Frame::lab()).unwrap();
        let (rh, ss) = gen.structure_residuals();
        assert!(rh <= 1e-12 * linalg::max_abs(gen.r.as_ref()));
        assert_eq!(ss, 0.0);
        // S depends only on κ_j + κ_j'.
        let cst = 5.0 / (2.0 * PI).sqrt();
        for j in 0..16 {
            for k in 0..16 {
                assert_eq!(gen.s[(j, k)], cst * d.s_ext[j + k]);
            }
        }
    }

    #[test]
    fn nan_drive_is_numeric_error() {
        let g = KappaGrid::new(4, 1.0, 0.0).unwrap();
        let mut d = DriveFields::zero(&g, 2.5);
        d.s_ext[3] = c(f64::NAN, 0.0);
        match build_drive_generator(&d, &g) {
            Err(SqzError::Numeric { time, .. }) => assert_eq!(time, 2.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exponential_of_diagonal() {
        let g = KappaGrid::new(8, 3.0, 0.0).unwrap();
        let mode = ModeParams::new(2.0, 0.3);
        let gen = build_generator(&DriveFields::zero(&g, 0.0), &mode, &g, Frame::lab()).unwrap();
        let k = exponentiate(&gen, 0.1).unwrap();
        for j in 0..8 {
            let want = Complex64::from_polar(1.0, -mode.omega(g.kappa(j)) * 0.1);
            assert!((k.v[(j, j)] - want).norm() < 1e-14);
        }
        assert_eq!(linalg::max_abs(k.w.as_ref()), 0.0);
    }

    #[test]
    fn single_mode_squeezer() {
        // n = 1, R = 0, S = s: exp(i dt [[0, s], [-s, 0]]) = [[cosh, i sinh], [-i sinh, cosh]].
        let (s, dt) = (1.3, 0.7);
        let gen = GeneratorBlocks {
            r: CMat::zeros(1, 1),
            s: Mat::from_fn(1, 1, |_, _| c(s, 0.0)),
            time: 0.0,
        };
        let k = exponentiate(&gen, dt).unwrap();
        // Reference: direct series of the 2x2 matrix.
        let x = [[c(0.0, 0.0), c(0.0, s * dt)], [c(0.0, -s * dt), c(0.0, 0.0)]];
        let mut term = [[c(1.0, 0.0), ZERO], [ZERO, c(1.0, 0.0)]];
        let mut sum = term;
        for p in 1..60 {
            let mut next = [[ZERO; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = (term[i][0] * x[0][j] + term[i][1] * x[1][j]) / p as f64;
                }
            }
            term = next;
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        assert!((k.v[(0, 0)] - sum[0][0]).norm() < 1e-14);
        assert!((k.w[(0, 0)] - sum[0][1]).norm() < 1e-14);
        assert!((k.v[(0, 0)] - c((s * dt).cosh(), 0.0)).norm() < 1e-14);
        assert!((k.w[(0, 0)] - c(0.0, (s * dt).sinh())).norm() < 1e-14);
    }

    #[test]
    fn single_mode_moments() {
        let r: f64 = 0.8;
        let k = BogoliubovBlocks {
            v: Mat::from_fn(1, 1, |_, _| c(r.cosh(), 0.0)),
            w: Mat::from_fn(1, 1, |_, _| c(0.0, r.sinh())),
            t_start: 0.0,
            t_end: 1.0,
        };
        let out = update_moments_unitary(&GaussianMoments::vacuum(1, 0.0), &k).unwrap();
        assert_relative_eq!(out.n[(0, 0)].re, r.sinh().powi(2), max_relative = 1e-14);
        assert!((out.m[(0, 0)] - c(0.0, (2.0 * r).sinh() / 2.0)).norm() < 1e-14);
    }

    #[test]
    fn vacuum_update_is_propagator_moments() {
        let g = KappaGrid::new(8, 2.0, 0.0).unwrap();
        let gen = build_generator(&random_drive(&g, 0.3, 5), &ModeParams::new(1.0, 0.2), &g, Frame::lab()).unwrap();
        let k = exponentiate(&gen, 0.5).unwrap();
        let a = update_moments_unitary(&GaussianMoments::vacuum(8, 0.0), &k).unwrap();
        let b = GaussianMoments::from_propagator(&k);
        assert!(linalg::max_abs((&a.n - &b.n).as_ref()) < 1e-14);
        assert!(linalg::max_abs((&a.m - &b.m).as_ref()) < 1e-14);
    }

    #[test]
    fn passive_step_keeps_trace() {
        let g = KappaGrid::new(8, 2.0, 0.0).unwrap();
        let mut d = random_drive(&g, 0.3, 6);
        d.s_ext.iter_mut().for_each(|s| *s = ZERO);
        let gen = build_generator(&d, &ModeParams::new(1.0, 0.2), &g, Frame::lab()).unwrap();
        let k = exponentiate(&gen, 0.9).unwrap();
        let squeezer = exponentiate(
            &build_generator(&random_drive(&g, 0.3, 7), &ModeParams::new(1.0, 0.2), &g, Frame::lab()).unwrap(),
            0.5,
        )
        .unwrap();
        let start = GaussianMoments::from_propagator(&squeezer);
        let out = update_moments_unitary(&start, &k).unwrap();
        assert_relative_eq!(out.mean_photon_number(), start.mean_photon_number(), max_relative = 1e-12);
    }

    #[test]
    fn concatenation_rules() {
        let g = KappaGrid::new(8, 2.0, 0.0).unwrap();
        let mode = ModeParams::new(1.0, 0.2);
        let gen = build_generator(&random_drive(&g, 0.4, 8), &mode, &g, Frame::lab()).unwrap();
        let mut k = exponentiate(&gen, 0.3).unwrap();
        k.t_start = 0.0;
        k.t_end = 0.3;
        let id = BogoliubovBlocks::identity(8, 0.0);
        let same = concatenate(&k, &id).unwrap();
        assert!(linalg::max_abs((&same.v - &k.v).as_ref()) < 1e-15);
        assert!(linalg::max_abs((&same.w - &k.w).as_ref()) < 1e-15);

        let omega: Vec<f64> = (0..8).map(|j| mode.omega(g.kappa(j))).collect();
        let a = BogoliubovBlocks::free(&omega, 0.0, 0.2);
        let b = BogoliubovBlocks::free(&omega, 0.2, 0.5);
        let ab = concatenate(&b, &a).unwrap();
        for j in 0..8 {
            let want = Complex64::from_polar(1.0, -omega[j] * 0.7);
            assert!((ab.v[(j, j)] - want).norm() < 1e-14);
        }
        assert_eq!((ab.t_start, ab.t_end), (0.0, 0.7));
        assert!(matches!(concatenate(&a, &b), Err(SqzError::Sequencing { .. })));
    }

    #[test]
    fn loss_scaling() {
        let g = KappaGrid::new(4, 1.0, 0.0).unwrap();
        let k = exponentiate(
            &build_generator(&random_drive(&g, 0.5, 9), &ModeParams::new(1.0, 0.0), &g, Frame::lab()).unwrap(),
            1.0,
        )
        .unwrap();
        let m0 = GaussianMoments::from_propagator(&k);
        let same = update_moments_loss(&m0, 0.0, 1.0);
        assert_eq!(same.n, m0.n);
        let half = update_moments_loss(&m0, 2f64.ln(), 1.0);
        assert!(linalg::max_abs((&half.n - &(&m0.n * faer::Scale(c(0.5, 0.0)))).as_ref()) < 1e-15);
        assert!(linalg::max_abs((&half.m - &(&m0.m * faer::Scale(c(0.5, 0.0)))).as_ref()) < 1e-15);
        let mut x = m0.clone();
        for _ in 0..5 {
            x = update_moments_loss(&x, 0.3, 0.2);
        }
        let once = update_moments_loss(&m0, 0.3, 1.0);
        assert!(linalg::max_abs((&x.n - &once.n).as_ref()) < 1e-15);
    }

    #[test]
    fn propagate_trivial_cases() {
        let g = KappaGrid::new(8, 1.0, 0.0).unwrap();
        let mode = ModeParams::new(1.0, 0.3);
        let mut zero = ConstantDrive(DriveFields::zero(&g, 0.0));
        let out = propagate(&mut zero, &mode, &g, Frame::lab(), 0.0, 1.0, &PropagateOptions::steps(5)).unwrap();
        assert_eq!(linalg::max_abs(out.moments.n.as_ref()), 0.0);
        assert_eq!(linalg::max_abs(out.moments.m.as_ref()), 0.0);

        let seed = exponentiate(
            &build_generator(&random_drive(&g, 0.5, 10), &mode, &g, Frame::lab()).unwrap(),
            1.0,
        )
        .unwrap();
        let n0 = GaussianMoments::from_propagator(&seed);
        let lossy = mode.with_loss(0.4);
        let opts = PropagateOptions {
            n_steps: 7,
            initial: Some(n0.clone()),
            ..Default::default()
        };
        let out = propagate(&mut zero, &lossy, &g, Frame::lab(), 0.0, 2.0, &opts).unwrap();
        let eta = (-0.4f64 * 2.0).exp();
        let d: Vec<Complex64> = (0..8).map(|j| Complex64::from_polar(1.0, -mode.omega(g.kappa(j)) * 2.0)).collect();
        let want = apply_diagonal(&n0, &d, 2.0);
        for i in 0..8 {
            for j in 0..8 {
                assert!((out.moments.n[(i, j)] - want.n[(i, j)] * eta).norm() <= 1e-10 * want.n[(i, j)].norm().max(1e-300) + 1e-16);
            }
        }
        assert!(propagate(&mut zero, &mode, &g, Frame::lab(), 1.0, 1.0, &PropagateOptions::steps(1)).is_err());
        assert!(propagate(&mut zero, &mode, &g, Frame::lab(), 0.0, 1.0, &PropagateOptions::steps(0)).is_err());
    }

    #[test]
    fn moment_paths_agree() {
        let g = KappaGrid::new(16, 1.0, 0.0).unwrap();
        let mode = ModeParams::new(1.0, 0.3);
        let mut k = 0u64;
        let mut sched = |t: f64| -> Result<DriveFields> {
            k += 1;
            let mut d = random_drive(&g, 0.05, 100 + k);
            d.time = t;
            Ok(d)
        };
        let stepwise = PropagateOptions {
            n_steps: 20,
            moment_path: MomentPath::Stepwise,
            track_propagator: true,
            trace: true,
            ..Default::default()
        };
        let a = propagate(&mut sched, &mode, &g, Frame::lab(), 0.0, 2.0, &stepwise).unwrap();
        let b = GaussianMoments::from_propagator(a.propagator.as_ref().unwrap());
        let scale = linalg::max_abs(b.n.as_ref()).max(linalg::max_abs(b.m.as_ref()));
        assert!(linalg::max_abs((&a.moments.n - &b.n).as_ref()) < 1e-10 * scale);
        assert!(linalg::max_abs((&a.moments.m - &b.m).as_ref()) < 1e-10 * scale);
        assert_eq!(a.trace.len(), 20);
        assert!(a.trace.iter().all(|r| r.symplectic_residual < 1e-10));
        assert_relative_eq!(a.trace[19].trace_n, a.moments.mean_photon_number(), max_relative = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn random_steps_are_bogoliubov(seed in 0u64..1_000_000, scale in 0.01f64..3.0, dt in 0.01f64..1.0) {
            let g = KappaGrid::new(8, 1.0, 0.0).unwrap();
            let gen = build_generator(&random_drive(&g, scale, seed), &ModeParams::new(1.0, 0.4), &g, Frame::lab()).unwrap();
            let k = exponentiate(&gen, dt).unwrap();
            let growth = linalg::max_abs(k.v.as_ref()).powi(2).max(1.0);
            prop_assert!(k.symplectic_residual() <= 1e-12 * 8.0 * growth);
        }

        #[test]
        fn concatenation_preserves_structure(seeds in proptest::collection::vec(0u64..1_000_000, 2..6)) {
            let g = KappaGrid::new(8, 1.0, 0.0).unwrap();
            let mode = ModeParams::new(1.0, 0.4);
            let mut acc = BogoliubovBlocks::identity(8, 0.0);
            let mut full = CMat::identity(16, 16);
            for (i, s) in seeds.iter().enumerate() {
                let gen = build_generator(&random_drive(&g, 0.3, *s), &mode, &g, Frame::lab()).unwrap();
                let mut k = exponentiate(&gen, 0.4).unwrap();
                k.t_start = 0.4 * i as f64;
                k.t_end = 0.4 * (i + 1) as f64;
                let kf = Mat::from_fn(16, 16, |a, b| match (a < 8, b < 8) {
                    (true, true) => k.v[(a, b)],
                    (true, false) => k.w[(a, b - 8)],
                    (false, true) => k.w[(a - 8, b)].conj(),
                    (false, false) => k.v[(a - 8, b - 8)].conj(),
                });
                full = &kf * &full;
                acc = concatenate(&k, &acc).unwrap();
            }
            let scale = linalg::max_abs(full.as_ref());
            for a in 0..8 {
                for b in 0..8 {
                    prop_assert!((acc.v[(a, b)] - full[(a, b)]).norm() <= 1e-12 * scale);
                    prop_assert!((acc.w[(a, b)] - full[(a, b + 8)]).norm() <= 1e-12 * scale);
                }
            }
            prop_assert!(acc.symplectic_residual() <= 1e-11 * scale * scale);
        }
    }
}
