//! Physical observables extracted from the Gaussian moments: Takagi
//! factorization of `M`, Schmidt modes and number, the joint spectral
//! amplitude, photon densities and homodyne variances.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqzError};
use crate::kgrid::KappaGrid;
use crate::linalg::{self, CMat};
use crate::qprop::GaussianMoments;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Relative spacing below which singular values are treated as degenerate.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Singular values below this fraction of the largest are treated as zero.
const NULL_TOL: f64 = 1e-12;
/// Modes with `sinh²r` below this fraction of `⟨n⟩` are omitted from output.
pub const REPORT_TOL: f64 = 1e-12;

/// `M = U diag(λ) Uᵀ` with unitary `U` and `λ` descending.
#[derive(Debug, Clone)]
pub struct Takagi {
    pub lambdas: Vec<f64>,
    pub u: CMat,
}

impl Takagi {
    pub fn reconstruct(&self) -> CMat {
        let n = self.u.nrows();
        let scaled = Mat::from_fn(n, self.lambdas.len(), |i, l| self.u[(i, l)] * self.lambdas[l]);
        scaled * self.u.transpose()
    }
}

fn canonical_sign(u: &mut CMat, col: usize) {
    let mut best = ZERO;
    for i in 0..u.nrows() {
        if u[(i, col)].norm() > best.norm() {
            best = u[(i, col)];
        }
    }
    let tiny = 1e-12 * best.norm();
    if best.re < -tiny || (best.re.abs() <= tiny && best.im < 0.0) {
        for i in 0..u.nrows() {
            u[(i, col)] = -u[(i, col)];
        }
    }
}

/// Square root of the symmetric unitary block `z` via a real orthogonal
/// diagonalization of `Re z` and `Im z` together.
fn symmetric_unitary_sqrt(z: &CMat) -> Result<CMat> {
    let k = z.nrows();
    if k == 1 {
        let p = z[(0, 0)];
        return Ok(Mat::from_fn(1, 1, |_, _| Complex64::from_polar(1.0, 0.5 * p.arg())));
    }
    let sym = Mat::from_fn(k, k, |i, j| 0.5 * (z[(i, j)] + z[(j, i)]));
    // Re z and Im z commute; a generic combination shares their eigenvectors.
    const MIX: f64 = 0.618_033_988_749_894_8;
    let real = Mat::from_fn(k, k, |i, j| sym[(i, j)].re + MIX * sym[(i, j)].im);
    let evd = real
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| SqzError::numeric(0.0, format!("degenerate Takagi block: {e:?}")))?;
    let o = evd.U();
    let oc = Mat::from_fn(k, k, |i, j| Complex64::new(o[(i, j)], 0.0));
    let d = oc.transpose() * &sym * &oc;
    let half: Vec<Complex64> = (0..k).map(|l| Complex64::from_polar(1.0, 0.5 * d[(l, l)].arg())).collect();
    let left = Mat::from_fn(k, k, |i, l| oc[(i, l)] * half[l]);
    Ok(left * oc.transpose())
}

/// Autonne–Takagi factorization of a complex symmetric matrix.
pub fn takagi(m: &CMat) -> Result<Takagi> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(SqzError::Dimension {
            context: "takagi".into(),
            expected: n,
            got: m.ncols(),
        });
    }
    let scale = linalg::max_abs(m.as_ref());
    if linalg::symmetry_residual(m.as_ref()) > 1e-9 * scale {
        return Err(SqzError::Precondition("takagi requires a complex symmetric matrix".into()));
    }
    if !linalg::all_finite(m.as_ref()) {
        return Err(SqzError::numeric(0.0, "takagi input is non-finite"));
    }
    if n == 0 {
        return Ok(Takagi {
            lambdas: Vec::new(),
            u: CMat::zeros(0, 0),
        });
    }
    let svd = m.svd().map_err(|e| SqzError::numeric(0.0, format!("svd: {e:?}")))?;
    let (su, sv) = (svd.U(), svd.V());
    let lambdas: Vec<f64> = (0..n).map(|i| svd.S().column_vector()[i].re).collect();
    let top = lambdas[0];
    let mut u = CMat::zeros(n, n);

    // M = u d vᴴ = Mᵀ ⇒ conj(v) = u Z with Z block diagonal over clusters of equal d,
    // so M = (u Z^{1/2}) d (u Z^{1/2})ᵀ.
    let mut start = 0;
    while start < n {
        if lambdas[start] <= NULL_TOL * top {
            for j in start..n {
                for i in 0..n {
                    u[(i, j)] = su[(i, j)];
                }
            }
            break;
        }
        let mut end = start + 1;
        while end < n && lambdas[end] > NULL_TOL * top && lambdas[end - 1] - lambdas[end] <= CLUSTER_TOL * lambdas[start] {
            end += 1;
        }
        let k = end - start;
        let ub = su.subcols(start, k);
        let vb = sv.subcols(start, k);
        let z = ub.adjoint() * vb.conjugate();
        let root = symmetric_unitary_sqrt(&z)?;
        let block = ub * &root;
        for j in 0..k {
            for i in 0..n {
                u[(i, start + j)] = block[(i, j)];
            }
        }
        start = end;
    }
    for col in 0..n {
        canonical_sign(&mut u, col);
    }
    Ok(Takagi { lambdas, u })
}

/// Squeezing parameters and Schmidt modes of a Gaussian state.
#[derive(Debug, Clone)]
pub struct SchmidtData {
    /// `r_l = asinh(2λ_l)/2`, descending, reported modes only.
    pub r_values: Vec<f64>,
    /// Discrete orthonormal Schmidt vectors as columns, each rotated so its
    /// largest component is real positive.
    pub modes: CMat,
    /// Phase `c_l` restoring `M = Σ_l λ_l c_l u_l u_lᵀ` after the rotation.
    pub pair_phases: Vec<Complex64>,
    /// `(Σ sinh²r)²/Σ sinh⁴r` over all modes; 1 for vacuum.
    pub schmidt_number: f64,
    /// `Σ sinh²r` over all modes.
    pub mean_photon: f64,
    /// Set when every `r` vanishes and `K` is reported by convention.
    pub vacuum: bool,
    pub delta_kappa: f64,
}

impl SchmidtData {
    pub fn n_modes(&self) -> usize {
        self.r_values.len()
    }

    pub fn occupations(&self) -> Vec<f64> {
        self.r_values.iter().map(|r| r.sinh().powi(2)).collect()
    }

    /// Continuous mode `ρ^(l)(κ_j) = u_jl/√Δκ`.
    pub fn continuous_mode(&self, l: usize) -> Vec<Complex64> {
        let s = 1.0 / self.delta_kappa.sqrt();
        (0..self.modes.nrows()).map(|j| self.modes[(j, l)] * s).collect()
    }

    pub fn mode(&self, l: usize) -> Vec<Complex64> {
        (0..self.modes.nrows()).map(|j| self.modes[(j, l)]).collect()
    }
}

/// `K = (Σ n_l)²/Σ n_l²`, or `None` when all `n_l` vanish.
pub fn schmidt_number(occupations: &[f64]) -> Option<f64> {
    let mut sorted = occupations.to_vec();
    sorted.sort_by(f64::total_cmp);
    let s1: f64 = sorted.iter().sum();
    let s2: f64 = sorted.iter().map(|n| n * n).sum();
    (s2 > 0.0).then(|| s1 * s1 / s2)
}

pub fn schmidt_from_moment(m: &CMat, grid: &KappaGrid) -> Result<SchmidtData> {
    SqzError::check_len("schmidt_from_moment", grid.n(), m.nrows())?;
    let t = takagi(m)?;
    let r_all: Vec<f64> = t.lambdas.iter().map(|l| 0.5 * (2.0 * l).asinh()).collect();
    let occ: Vec<f64> = r_all.iter().map(|r| r.sinh().powi(2)).collect();
    let mean_photon: f64 = occ.iter().sum();
    let k = schmidt_number(&occ);
    let kept: Vec<usize> = (0..occ.len()).filter(|&l| occ[l] > 0.0 && occ[l] >= REPORT_TOL * mean_photon).collect();
    let n = grid.n();
    let mut modes = CMat::zeros(n, kept.len());
    let mut pair_phases = Vec::with_capacity(kept.len());
    for (c, &l) in kept.iter().enumerate() {
        let mut best = ZERO;
        for i in 0..n {
            if t.u[(i, l)].norm() > best.norm() {
                best = t.u[(i, l)];
            }
        }
        let rot = if best.norm() > 0.0 { best.conj() / best.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            modes[(i, c)] = t.u[(i, l)] * rot;
        }
        pair_phases.push((rot * rot).conj());
    }
    Ok(SchmidtData {
        r_values: kept.iter().map(|&l| r_all[l]).collect(),
        modes,
        pair_phases,
        schmidt_number: k.unwrap_or(1.0),
        mean_photon,
        vacuum: k.is_none(),
        delta_kappa: grid.delta_kappa(),
    })
}

/// Joint spectral amplitude on the grid, 1/m per axis.
#[derive(Debug, Clone)]
pub struct JsaMatrix {
    pub values: CMat,
    pub grid: KappaGrid,
}

impl JsaMatrix {
    pub fn magnitude(&self) -> Mat<f64> {
        Mat::from_fn(self.values.nrows(), self.values.ncols(), |i, j| self.values[(i, j)].norm())
    }
}

/// `J(κ_i, κ_j) = Σ_l r_l ρ^(l)(κ_i) ρ^(l)(κ_j)`.
pub fn assemble_jsa(s: &SchmidtData, grid: &KappaGrid) -> JsaMatrix {
    let n = grid.n();
    let inv = 1.0 / grid.delta_kappa();
    let weighted = Mat::from_fn(n, s.n_modes(), |i, l| s.modes[(i, l)] * (s.r_values[l] * inv) * s.pair_phases[l]);
    let mut values = weighted * s.modes.transpose();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (values[(i, j)] + values[(j, i)]);
            values[(i, j)] = avg;
            values[(j, i)] = avg;
        }
    }
    JsaMatrix { values, grid: *grid }
}

/// `𝒩(κ_j) = Re N_jj/Δκ`.
pub fn photon_density(n: &CMat, grid: &KappaGrid) -> Vec<f64> {
    (0..n.nrows()).map(|j| n[(j, j)].re / grid.delta_kappa()).collect()
}

pub fn mean_photon(n: &CMat) -> f64 {
    (0..n.nrows()).map(|j| n[(j, j)].re).sum()
}

/// Standardized third moment of a non-negative density over `x`.
pub fn skewness(x: &[f64], density: &[f64]) -> f64 {
    let w: f64 = density.iter().sum();
    let mean = x.iter().zip(density).map(|(x, d)| x * d).sum::<f64>() / w;
    let var = x.iter().zip(density).map(|(x, d)| (x - mean).powi(2) * d).sum::<f64>() / w;
    let third = x.iter().zip(density).map(|(x, d)| (x - mean).powi(3) * d).sum::<f64>() / w;
    third / var.powf(1.5)
}

/// `(W₊ - W₋)/(W₊ + W₋)` for the weight above and below `center`.
pub fn lobe_imbalance(x: &[f64], density: &[f64], center: f64) -> f64 {
    let (mut hi, mut lo) = (0.0, 0.0);
    for (x, d) in x.iter().zip(density) {
        if *x > center {
            hi += d;
        } else if *x < center {
            lo += d;
        }
    }
    (hi - lo) / (hi + lo)
}

/// Quadrature variance extrema for one LO shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomodyneExtrema {
    pub v_min: f64,
    pub v_max: f64,
    /// LO phase that attains `v_min`.
    pub theta_min: f64,
}

impl HomodyneExtrema {
    pub fn v_min_db(&self) -> f64 {
        to_db(self.v_min)
    }

    pub fn v_max_db(&self) -> f64 {
        to_db(self.v_max)
    }
}

pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Rescales a sampled LO `φ_j` to unit norm.
pub fn normalize_lo(lo: &[Complex64]) -> Result<Vec<Complex64>> {
    let norm = lo.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(SqzError::Precondition("local oscillator has zero norm".into()));
    }
    Ok(lo.iter().map(|c| c / norm).collect())
}

fn lo_contractions(moments: &GaussianMoments, lo: &[Complex64]) -> Result<(f64, Complex64)> {
    SqzError::check_len("local oscillator", moments.dim(), lo.len())?;
    let norm: f64 = lo.iter().map(|c| c.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(SqzError::Precondition(format!("local oscillator norm² is {norm}, expected 1")));
    }
    let d = lo.len();
    let mut pn = ZERO;
    let mut pm = ZERO;
    for i in 0..d {
        let (mut rn, mut rm) = (ZERO, ZERO);
        for j in 0..d {
            rn += moments.n[(i, j)] * lo[j].conj();
            rm += moments.m[(i, j)] * lo[j].conj();
        }
        pn += lo[i] * rn;
        pm += lo[i].conj() * rm;
    }
    Ok((pn.re, pm))
}

/// `V_θ = 2 Re(e^{2iθ} φ*Mφ†) + 2φNφ† + 1`.
pub fn homodyne_variance(moments: &GaussianMoments, lo: &[Complex64], theta: f64) -> Result<f64> {
    let (pn, pm) = lo_contractions(moments, lo)?;
    Ok(2.0 * (Complex64::from_polar(1.0, 2.0 * theta) * pm).re + 2.0 * pn + 1.0)
}

pub fn homodyne_extrema(moments: &GaussianMoments, lo: &[Complex64]) -> Result<HomodyneExtrema> {
    let (pn, pm) = lo_contractions(moments, lo)?;
    let base = 2.0 * pn + 1.0;
    Ok(HomodyneExtrema {
        v_min: base - 2.0 * pm.norm(),
        v_max: base + 2.0 * pm.norm(),
        theta_min: 0.5 * (PI - pm.arg()),
    })
}
