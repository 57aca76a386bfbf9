//! Classical pump mean fields: preparation, split-step propagation and the
//! drive fields they impose on the quantum fluctuations.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqzError};
use crate::kgrid::{Frame, KappaGrid, ModeParams, Spectral};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054571817e-34;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Converts a conventional nonlinear parameter γ (1/(W·m)) at carrier
/// frequency `omega` and group velocity `v` to the field coupling `ζ⁽³⁾` (m/s)
/// used by the coupled-mode equations: `ζ⁽³⁾ = γħωv²`.
pub fn gamma_to_zeta3(gamma_nl: f64, omega: f64, v: f64) -> f64 {
    gamma_nl * HBAR * omega * v * v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    Gaussian,
    Sech,
    Lorentzian,
    Rectangular,
    QuarticExponential,
    Custom,
}

impl PulseShape {
    pub const ALL_ANALYTIC: [PulseShape; 5] = [
        PulseShape::Gaussian,
        PulseShape::Sech,
        PulseShape::Lorentzian,
        PulseShape::Rectangular,
        PulseShape::QuarticExponential,
    ];

    /// Peak-normalized envelope `g(x)` with `g(0) = 1`. Rectangular returns the
    /// hard indicator of `|x| ≤ 1`; the realized pulse smooths its edges.
    pub fn envelope(self, x: f64) -> f64 {
        match self {
            PulseShape::Gaussian => (-x * x).exp(),
            PulseShape::Sech => {
                let c = x.cosh();
                1.0 / (c * c)
            }
            PulseShape::Lorentzian => 1.0 / (1.0 + x * x),
            PulseShape::Rectangular => {
                if x.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            PulseShape::QuarticExponential => (-x.powi(4)).exp(),
            PulseShape::Custom => 0.0,
        }
    }
}

/// Where the pulse shape is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpDomain {
    /// Amplitude `β(κ) ∝ Σ_c g((κ - c)/bandwidth)`; centers and bandwidth in 1/m.
    #[default]
    Wavevector,
    /// Photon density `|ψ(z)|² ∝ g((z - c)/bandwidth)`; centers and width in m.
    Position,
}

/// One sample of a user supplied pump spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub kappa: f64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Pump pulse description. With several centers the lobes are summed with
/// equal weight before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub shape: PulseShape,
    #[serde(default)]
    pub domain: PumpDomain,
    #[serde(default = "default_centers", alias = "center_kappa")]
    pub centers: Vec<f64>,
    pub bandwidth: f64,
    pub mean_photon_number: f64,
    /// Rigid displacement of the pulse in z (m), applied as `e^{-iκ·position}`.
    #[serde(default)]
    pub position: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<SpectrumSample>>,
}

fn default_centers() -> Vec<f64> {
    vec![0.0]
}

impl PumpSpec {
    pub fn new(shape: PulseShape, bandwidth: f64, mean_photon_number: f64) -> Self {
        PumpSpec {
            shape,
            domain: PumpDomain::Wavevector,
            centers: vec![0.0],
            bandwidth,
            mean_photon_number,
            position: 0.0,
            samples: None,
        }
    }

    pub fn in_position(mut self) -> Self {
        self.domain = PumpDomain::Position;
        self
    }

    pub fn with_centers(mut self, centers: Vec<f64>) -> Self {
        self.centers = centers;
        self
    }

    pub fn at_position(mut self, position: f64) -> Self {
        self.position = position;
        self
    }

    pub fn custom(samples: Vec<SpectrumSample>, mean_photon_number: f64) -> Self {
        PumpSpec {
            shape: PulseShape::Custom,
            domain: PumpDomain::Wavevector,
            centers: vec![0.0],
            bandwidth: 1.0,
            mean_photon_number,
            position: 0.0,
            samples: Some(samples),
        }
    }

    /// Soft check: a pulse occupying more than 1/6 of the window half-width is
    /// likely under-resolved at its tails.
    pub fn fit_warning(&self, grid: &KappaGrid) -> Option<String> {
        if self.shape == PulseShape::Custom {
            return None;
        }
        let (half, reach) = match self.domain {
            PumpDomain::Wavevector => (grid.kappa_max(), 6.0 * self.bandwidth),
            PumpDomain::Position => (0.5 * grid.z_extent(), 6.0 * self.bandwidth),
        };
        let worst = self.centers.iter().map(|c| c.abs()).fold(0.0, f64::max);
        (worst + reach > half && !self.is_cw(grid)).then(|| {
            format!(
                "pump extends to {:e} of a window half-width {:e}; tails are truncated",
                worst + reach,
                half
            )
        })
    }

    fn is_cw(&self, grid: &KappaGrid) -> bool {
        self.domain == PumpDomain::Position
            && self.shape == PulseShape::Rectangular
            && self.bandwidth >= 0.5 * grid.z_extent()
    }
}

/// Photon-normalized mean field of one pump mode: `β_j = ⟨b(κ_j)⟩·√Δκ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
    pub mode: ModeParams,
}

impl MeanField {
    pub fn zeros(n: usize, mode: ModeParams) -> Self {
        MeanField {
            amplitudes: vec![ZERO; n],
            time: 0.0,
            mode,
        }
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn photon_number(&self) -> f64 {
        self.amplitudes.iter().map(|b| b.norm_sqr()).sum()
    }

    /// Unit-norm copy, or `None` for the zero field.
    pub fn normalized(&self) -> Option<Vec<Complex64>> {
        let norm = self.photon_number().sqrt();
        (norm > 0.0).then(|| self.amplitudes.iter().map(|b| b / norm).collect())
    }

    /// Photon density `|⟨b(κ_j)⟩|²` per unit wavevector.
    pub fn density(&self, grid: &KappaGrid) -> Vec<f64> {
        let dk = grid.delta_kappa();
        self.amplitudes.iter().map(|b| b.norm_sqr() / dk).collect()
    }
}

/// Raised-cosine ramp: 1 for `u ≤ -w/2`, 0 for `u ≥ w/2`.
fn ramp_down(u: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return if u < 0.0 {
            1.0
        } else if u > 0.0 {
            0.0
        } else {
            0.5
        };
    }
    if u <= -0.5 * w {
        1.0
    } else if u >= 0.5 * w {
        0.0
    } else {
        0.5 * (1.0 - (PI * u / w).sin())
    }
}

/// Top-hat of half-width `half` with raised-cosine edges of full width `edge`.
pub fn smooth_top_hat(x: f64, half: f64, edge: f64) -> f64 {
    ramp_down(x.abs() - half, edge)
}

/// Creates the photon-normalized pump on `grid` at time zero.
pub fn make_pump(spec: &PumpSpec, grid: &KappaGrid, mode: ModeParams) -> Result<MeanField> {
    if !(spec.mean_photon_number >= 0.0) || !spec.mean_photon_number.is_finite() {
        return Err(SqzError::config(format!(
            "mean photon number must be non-negative, got {}",
            spec.mean_photon_number
        )));
    }
    if spec.shape != PulseShape::Custom && !(spec.bandwidth > 0.0) {
        return Err(SqzError::config(format!(
            "pump bandwidth must be positive, got {}",
            spec.bandwidth
        )));
    }
    if spec.centers.is_empty() && spec.shape != PulseShape::Custom {
        return Err(SqzError::config("pump needs at least one center"));
    }
    let n = grid.n();
    let mut field = MeanField::zeros(n, mode);
    if spec.mean_photon_number == 0.0 {
        return Ok(field);
    }

    let raw: Vec<Complex64> = match (spec.shape, spec.domain) {
        (PulseShape::Custom, _) => {
            let samples = spec
                .samples
                .as_ref()
                .ok_or_else(|| SqzError::config("custom pump requires spectrum samples"))?;
            interpolate_spectrum(samples, grid)?
        }
        (shape, PumpDomain::Wavevector) => {
            let worst = spec.centers.iter().map(|c| c.abs()).fold(0.0, f64::max);
            if worst + spec.bandwidth > grid.kappa_max() {
                return Err(SqzError::config(format!(
                    "pump spectrum (center {worst:e}, bandwidth {:e}) exceeds the grid half-width {:e}",
                    spec.bandwidth,
                    grid.kappa_max()
                )));
            }
            let dk = grid.delta_kappa();
            grid.kappa_values()
                .iter()
                .map(|&k| {
                    let v: f64 = spec
                        .centers
                        .iter()
                        .map(|c| {
                            let x = (k - c) / spec.bandwidth;
                            if shape == PulseShape::Rectangular {
                                smooth_top_hat(k - c, spec.bandwidth, dk)
                            } else {
                                shape.envelope(x)
                            }
                        })
                        .sum();
                    Complex64::new(v, 0.0)
                })
                .collect()
        }
        (shape, PumpDomain::Position) => {
            let half = 0.5 * grid.z_extent();
            if spec.is_cw(grid) {
                let spectral = Spectral::new(grid);
                let flat = vec![Complex64::new(1.0, 0.0); n];
                spectral.amplitudes_from_z(&flat)?
            } else {
                let worst = spec.centers.iter().map(|c| c.abs()).fold(0.0, f64::max);
                if worst + spec.bandwidth > half {
                    return Err(SqzError::config(format!(
                        "pump pulse (center {worst:e} m, width {:e} m) exceeds the window half-width {half:e} m",
                        spec.bandwidth
                    )));
                }
                let dz = grid.delta_z();
                let field_z: Vec<Complex64> = grid
                    .z_values()
                    .iter()
                    .map(|&z| {
                        let p: f64 = spec
                            .centers
                            .iter()
                            .map(|c| {
                                if shape == PulseShape::Rectangular {
                                    smooth_top_hat(z - c, spec.bandwidth, dz)
                                } else {
                                    shape.envelope((z - c) / spec.bandwidth)
                                }
                            })
                            .sum();
                        Complex64::new(p.sqrt(), 0.0)
                    })
                    .collect();
                Spectral::new(grid).amplitudes_from_z(&field_z)?
            }
        }
    };

    let norm2: f64 = raw.iter().map(|b| b.norm_sqr()).sum();
    if !(norm2 > 0.0) || !norm2.is_finite() {
        return Err(SqzError::config("pump spectrum vanishes on the grid"));
    }
    let scale = (spec.mean_photon_number / norm2).sqrt();
    field.amplitudes = raw
        .iter()
        .zip(grid.kappa_values())
        .map(|(b, k)| b * scale * Complex64::from_polar(1.0, -k * spec.position))
        .collect();
    Ok(field)
}

fn interpolate_spectrum(samples: &[SpectrumSample], grid: &KappaGrid) -> Result<Vec<Complex64>> {
    if samples.len() < 2 {
        return Err(SqzError::config("custom pump spectrum needs at least two samples"));
    }
    let mut s = samples.to_vec();
    if s.iter().any(|p| !(p.kappa.is_finite() && p.re.is_finite() && p.im.is_finite())) {
        return Err(SqzError::config("custom pump spectrum has non-finite entries"));
    }
    s.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
    Ok(grid
        .kappa_values()
        .iter()
        .map(|&k| {
            if k < s[0].kappa || k > s[s.len() - 1].kappa {
                return ZERO;
            }
            let idx = s.partition_point(|p| p.kappa <= k).clamp(1, s.len() - 1);
            let (a, b) = (&s[idx - 1], &s[idx]);
            let span = b.kappa - a.kappa;
            let t = if span > 0.0 { (k - a.kappa) / span } else { 0.0 };
            Complex64::new(a.re + t * (b.re - a.re), a.im + t * (b.im - a.im))
        })
        .collect())
}

/// Spatial profile `s(z)` of the nonlinearity, in lab coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// `s ≡ 1` everywhere.
    Uniform,
    /// `s = 1` on `[-length/2, length/2]` with raised-cosine edges of full
    /// width `edge` (one base grid cell when absent).
    TopHat {
        length: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edge: Option<f64>,
    },
    /// Samples on the base z grid, linearly interpolated, zero outside.
    Samples { values: Vec<f64> },
}

impl Region {
    pub fn top_hat(length: f64) -> Self {
        Region::TopHat { length, edge: None }
    }

    pub fn validate(&self, grid: &KappaGrid) -> Result<()> {
        match self {
            Region::Uniform => Ok(()),
            Region::TopHat { length, edge } => {
                if !(*length > 0.0) || !length.is_finite() {
                    return Err(SqzError::config(format!(
                        "nonlinear length must be positive, got {length}"
                    )));
                }
                if let Some(e) = edge {
                    if !(*e >= 0.0) || *e > *length {
                        return Err(SqzError::config(format!(
                            "edge width must lie in [0, length], got {e}"
                        )));
                    }
                }
                Ok(())
            }
            Region::Samples { values } => {
                SqzError::check_len("region samples", grid.n(), values.len())?;
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(SqzError::config("region profile entries must lie in [0, 1]"));
                }
                Ok(())
            }
        }
    }

    pub fn edge_width(&self, grid: &KappaGrid) -> f64 {
        match self {
            Region::TopHat { edge, .. } => edge.unwrap_or(grid.delta_z()),
            _ => 0.0,
        }
    }

    /// `s(z)` at lab position `z`.
    pub fn value(&self, z: f64, grid: &KappaGrid) -> f64 {
        match self {
            Region::Uniform => 1.0,
            Region::TopHat { length, .. } => smooth_top_hat(z, 0.5 * length, self.edge_width(grid)),
            Region::Samples { values } => {
                let u = z / grid.delta_z() + (grid.n() / 2) as f64;
                if u < 0.0 || u > (grid.n() - 1) as f64 {
                    return 0.0;
                }
                let i = (u.floor() as usize).min(grid.n() - 2);
                let t = u - i as f64;
                values[i] * (1.0 - t) + values[i + 1] * t
            }
        }
    }

    /// Lab-frame extent `[lo, hi]` outside which `s = 0`, if bounded.
    pub fn support(&self, grid: &KappaGrid) -> Option<(f64, f64)> {
        match self {
            Region::Uniform => None,
            Region::TopHat { length, .. } => {
                let h = 0.5 * (length + self.edge_width(grid));
                Some((-h, h))
            }
            Region::Samples { .. } => {
                let h = 0.5 * grid.z_extent();
                Some((-h, h))
            }
        }
    }
}

/// Third-order couplings ζ⁽³⁾ (m/s), labelled by the modes they connect.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Zeta3 {
    #[serde(default)]
    pub pppp: f64,
    #[serde(default)]
    pub ssp1p2: f64,
    #[serde(default)]
    pub sp1sp1: f64,
    #[serde(default)]
    pub sp2sp2: f64,
    #[serde(default)]
    pub p1p2p1p2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearCoupling {
    /// ζ⁽²⁾, m^(1/2)/s.
    #[serde(default)]
    pub zeta2: Complex64,
    #[serde(default)]
    pub zeta3: Zeta3,
    pub region: Region,
}

/// Which nonlinear process drives the fluctuations, and therefore how many
/// pump fields are expected and in which order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    /// Pumps: `[second harmonic]`.
    Spdc,
    /// Pumps: `[pump]`, degenerate signal in the pump's own band.
    SinglePumpSfwm,
    /// Pumps: `[pump 1, pump 2]`, signal as a third mode.
    DualPumpSfwm,
}

impl Process {
    pub fn pump_count(self) -> usize {
        match self {
            Process::Spdc | Process::SinglePumpSfwm => 1,
            Process::DualPumpSfwm => 2,
        }
    }

    /// SPM (diagonal) and XPM (off-diagonal, already doubled) coefficients
    /// for the pump mean fields.
    pub fn kerr_matrix(self, zeta3: &Zeta3) -> Vec<Vec<f64>> {
        match self {
            Process::Spdc => vec![vec![0.0]],
            Process::SinglePumpSfwm => vec![vec![zeta3.pppp]],
            Process::DualPumpSfwm => vec![
                vec![zeta3.pppp, 2.0 * zeta3.p1p2p1p2],
                vec![2.0 * zeta3.p1p2p1p2, zeta3.pppp],
            ],
        }
    }

    fn check_fields(self, fields: &[MeanField]) -> Result<()> {
        if fields.len() != self.pump_count() {
            return Err(SqzError::config(format!(
                "{self:?} needs {} pump field(s), got {}",
                self.pump_count(),
                fields.len()
            )));
        }
        Ok(())
    }
}

/// Symmetric split-step propagator for a set of mutually coupled pumps.
#[derive(Debug, Clone)]
pub struct MeanFieldStepper {
    spectral: Spectral,
    frame: Frame,
    region: Region,
    kerr: Vec<Vec<f64>>,
}

impl MeanFieldStepper {
    /// `kerr[k][l]` multiplies `|ψ_l|²` in the phase of field `k`.
    pub fn new(grid: &KappaGrid, frame: Frame, region: Region, kerr: Vec<Vec<f64>>) -> Self {
        MeanFieldStepper {
            spectral: Spectral::new(grid),
            frame,
            region,
            kerr,
        }
    }

    pub fn for_process(
        process: Process,
        grid: &KappaGrid,
        frame: Frame,
        coupling: &NonlinearCoupling,
    ) -> Self {
        Self::new(grid, frame, coupling.region.clone(), process.kerr_matrix(&coupling.zeta3))
    }

    pub fn grid(&self) -> &KappaGrid {
        self.spectral.grid()
    }

    fn linear(&self, field: &mut MeanField, h: f64) {
        let grid = *self.spectral.grid();
        let decay = (-0.5 * field.mode.gamma_loss * h).exp();
        for (j, b) in field.amplitudes.iter_mut().enumerate() {
            let w = field.mode.omega_in(self.frame, grid.kappa(j));
            *b *= Complex64::from_polar(decay, -w * h);
        }
    }

    fn has_kerr(&self) -> bool {
        self.kerr.iter().flatten().any(|c| *c != 0.0)
    }

    /// Advances every field by `dt` (linear half step, Kerr phase, linear
    /// half step). The region is evaluated at the lab position of each frame
    /// coordinate at the step midpoint.
    pub fn step(&self, fields: &mut [MeanField], dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(SqzError::Precondition(format!("time step must be positive, got {dt}")));
        }
        let grid = *self.spectral.grid();
        for f in fields.iter() {
            SqzError::check_len("step_meanfield", grid.n(), f.amplitudes.len())?;
        }
        if self.kerr.len() != fields.len() {
            return Err(SqzError::config(format!(
                "Kerr matrix is {}x{}, but {} fields were given",
                self.kerr.len(),
                self.kerr.len(),
                fields.len()
            )));
        }
        let t0 = fields.first().map(|f| f.time).unwrap_or(0.0);
        for f in fields.iter_mut() {
            self.linear(f, 0.5 * dt);
        }
        if self.has_kerr() {
            let tm = t0 + 0.5 * dt;
            let s: Vec<f64> = grid
                .z_values()
                .iter()
                .map(|&z| self.region.value(self.frame.lab_position(z, tm), &grid))
                .collect();
            if s.iter().any(|v| *v != 0.0) {
                let psi: Vec<Vec<Complex64>> = fields
                    .iter()
                    .map(|f| self.spectral.field_on_z(&f.amplitudes))
                    .collect::<Result<_>>()?;
                for (k, f) in fields.iter_mut().enumerate() {
                    let mut z_field = psi[k].clone();
                    for (i, zf) in z_field.iter_mut().enumerate() {
                        let intensity: f64 = (0..psi.len())
                            .map(|l| self.kerr[k][l] * psi[l][i].norm_sqr())
                            .sum();
                        *zf *= Complex64::from_polar(1.0, s[i] * intensity * dt);
                    }
                    f.amplitudes = self.spectral.amplitudes_from_z(&z_field)?;
                }
            }
        }
        for f in fields.iter_mut() {
            self.linear(f, 0.5 * dt);
            f.time += dt;
        }
        for f in fields.iter() {
            if f.amplitudes.iter().any(|b| !b.re.is_finite() || !b.im.is_finite()) {
                return Err(SqzError::numeric(f.time, "mean field became non-finite"));
            }
        }
        Ok(())
    }
}

/// Advances a single field by `dt`. Each partner contributes cross-phase
/// modulation with its coefficient (doubled internally); partners are evolved
/// linearly alongside the field but not returned.
pub fn step_meanfield(
    field: &MeanField,
    spm_zeta: f64,
    partners: &[(MeanField, f64)],
    region: &Region,
    frame: Frame,
    grid: &KappaGrid,
    dt: f64,
) -> Result<MeanField> {
    let mut fields = vec![field.clone()];
    let mut row = vec![spm_zeta];
    for (p, z) in partners {
        let mut p = p.clone();
        p.time = field.time;
        fields.push(p);
        row.push(2.0 * z);
    }
    let m = fields.len();
    let mut kerr = vec![vec![0.0; m]; m];
    kerr[0] = row;
    let stepper = MeanFieldStepper::new(grid, frame, region.clone(), kerr);
    stepper.step(&mut fields, dt)?;
    Ok(fields.swap_remove(0))
}

/// Drive arrays on the extended grid `q_m = (m - n)·Δκ`, `m = 0..2n`:
/// `s_ext[m] = S(q_m)` (used at sums `κ_j + κ_j'`) and `m_ext[m] = M(q_m)`
/// (used at differences `κ_j - κ_j'`).
#[derive(Debug, Clone, PartialEq)]
pub struct DriveFields {
    pub s_ext: Vec<Complex64>,
    pub m_ext: Vec<Complex64>,
    pub time: f64,
}

impl DriveFields {
    pub fn zero(grid: &KappaGrid, time: f64) -> Self {
        DriveFields {
            s_ext: vec![ZERO; 2 * grid.n()],
            m_ext: vec![ZERO; 2 * grid.n()],
            time,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.s_ext.iter().chain(&self.m_ext).all(|c| *c == ZERO)
    }
}

/// Transforms the z-space products of the pump fields into `S(q)` and `M(q)`.
/// All fields must share one time.
pub fn drive_fields(
    process: Process,
    fields: &[MeanField],
    coupling: &NonlinearCoupling,
    spectral: &Spectral,
    frame: Frame,
) -> Result<DriveFields> {
    process.check_fields(fields)?;
    let grid = *spectral.grid();
    let t = fields[0].time;
    let zp = grid.padded_z_values();
    let s: Vec<f64> = zp
        .iter()
        .map(|&z| coupling.region.value(frame.lab_position(z, t), &grid))
        .collect();
    if s.iter().all(|v| *v == 0.0) || fields.iter().all(|f| f.photon_number() == 0.0) {
        return Ok(DriveFields::zero(&grid, t));
    }
    let psi: Vec<Vec<Complex64>> = fields
        .iter()
        .map(|f| spectral.field_on_padded_z(&f.amplitudes))
        .collect::<Result<_>>()?;
    let len = zp.len();
    let (s_tilde, m_tilde): (Vec<Complex64>, Option<Vec<Complex64>>) = match process {
        Process::Spdc => ((0..len).map(|i| coupling.zeta2 * s[i] * psi[0][i]).collect(), None),
        Process::SinglePumpSfwm => {
            let z = coupling.zeta3.pppp;
            (
                (0..len).map(|i| z * s[i] * psi[0][i] * psi[0][i]).collect(),
                Some((0..len).map(|i| Complex64::new(z * s[i] * psi[0][i].norm_sqr(), 0.0)).collect()),
            )
        }
        Process::DualPumpSfwm => {
            let z3 = &coupling.zeta3;
            (
                (0..len)
                    .map(|i| 2.0 * z3.ssp1p2 * s[i] * psi[0][i] * psi[1][i])
                    .collect(),
                Some(
                    (0..len)
                        .map(|i| {
                            Complex64::new(
                                s[i] * (z3.sp1sp1 * psi[0][i].norm_sqr() + z3.sp2sp2 * psi[1][i].norm_sqr()),
                                0.0,
                            )
                        })
                        .collect(),
                ),
            )
        }
    };
    let s_ext = spectral.spectrum_from_padded_z(&s_tilde)?;
    let m_ext = match m_tilde {
        Some(m) => spectral.spectrum_from_padded_z(&m)?,
        None => vec![ZERO; len],
    };
    if s_ext.iter().chain(&m_ext).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(SqzError::numeric(t, "drive field is non-finite"));
    }
    Ok(DriveFields { s_ext, m_ext, time: t })
}

/// Supplies the drive at the times the quantum propagator asks for; times
/// must be non-decreasing.
pub trait DriveSchedule {
    fn drive_at(&mut self, t: f64) -> Result<DriveFields>;
}

/// Fixed drive, for tests and externally computed pumps.
#[derive(Debug, Clone)]
pub struct ConstantDrive(pub DriveFields);

impl DriveSchedule for ConstantDrive {
    fn drive_at(&mut self, t: f64) -> Result<DriveFields> {
        let mut d = self.0.clone();
        d.time = t;
        Ok(d)
    }
}

impl<F: FnMut(f64) -> Result<DriveFields>> DriveSchedule for F {
    fn drive_at(&mut self, t: f64) -> Result<DriveFields> {
        self(t)
    }
}

/// Pump mean fields evolved on demand: each request advances the pumps to the
/// requested time with one split step and returns the resulting drive.
#[derive(Debug, Clone)]
pub struct PumpEvolution {
    process: Process,
    fields: Vec<MeanField>,
    coupling: NonlinearCoupling,
    stepper: MeanFieldStepper,
    frame: Frame,
}

impl PumpEvolution {
    pub fn new(
        process: Process,
        fields: Vec<MeanField>,
        coupling: NonlinearCoupling,
        grid: &KappaGrid,
        frame: Frame,
    ) -> Result<Self> {
        process.check_fields(&fields)?;
        coupling.region.validate(grid)?;
        for f in &fields {
            f.mode.validate()?;
            SqzError::check_len("pump field", grid.n(), f.amplitudes.len())?;
        }
        let t = fields[0].time;
        if fields.iter().any(|f| f.time != t) {
            return Err(SqzError::config("pump fields must start at a common time"));
        }
        let stepper = MeanFieldStepper::for_process(process, grid, frame, &coupling);
        Ok(PumpEvolution {
            process,
            fields,
            coupling,
            stepper,
            frame,
        })
    }

    pub fn fields(&self) -> &[MeanField] {
        &self.fields
    }

    pub fn time(&self) -> f64 {
        self.fields[0].time
    }

    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let now = self.time();
        if t < now {
            return Err(SqzError::Sequencing {
                earlier_end: now,
                later_start: t,
            });
        }
        if t > now {
            self.stepper.step(&mut self.fields, t - now)?;
            for f in &mut self.fields {
                f.time = t;
            }
        }
        Ok(())
    }

    /// Advances to `t` in `steps` equal split steps.
    pub fn advance_in_steps(&mut self, t: f64, steps: usize) -> Result<()> {
        let t0 = self.time();
        for k in 1..=steps.max(1) {
            self.advance_to(t0 + (t - t0) * k as f64 / steps.max(1) as f64)?;
        }
        Ok(())
    }

    pub fn current_drive(&self) -> Result<DriveFields> {
        drive_fields(self.process, &self.fields, &self.coupling, &self.stepper.spectral, self.frame)
    }
}

impl DriveSchedule for PumpEvolution {
    fn drive_at(&mut self, t: f64) -> Result<DriveFields> {
        self.advance_to(t)?;
        self.current_drive()
    }
}
