//! Scenario configuration: a single JSON document in SI units.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sqz_core::meanfield::{gamma_to_zeta3, PulseShape, PumpDomain, PumpSpec, Region, SpectrumSample, Zeta3};
use sqz_core::meanfield::{NonlinearCoupling, Process};
use sqz_core::{Complex64, Frame, KappaGrid, ModeParams, Result, SqzError};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SpdcLowgain,
    SfwmHomodyne,
    DualpumpJsa,
    Custom,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::SpdcLowgain,
        ScenarioKind::SfwmHomodyne,
        ScenarioKind::DualpumpJsa,
        ScenarioKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::SpdcLowgain => "spdc_lowgain",
            ScenarioKind::SfwmHomodyne => "sfwm_homodyne",
            ScenarioKind::DualpumpJsa => "dualpump_jsa",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ScenarioKind::SpdcLowgain => "low-gain SPDC moment compared with the first-order perturbative result",
            ScenarioKind::SfwmHomodyne => "single-pump SFWM homodyne squeezing versus nonlinear phase for several pulse shapes",
            ScenarioKind::DualpumpJsa => "dual-pump SFWM tuned to target photon numbers; densities, JSA and Schmidt spectrum",
            ScenarioKind::Custom => "free-form propagation with any process and outputs",
        }
    }

    pub fn process(self) -> Option<Process> {
        match self {
            ScenarioKind::SpdcLowgain => Some(Process::Spdc),
            ScenarioKind::SfwmHomodyne | ScenarioKind::DualpumpJsa => Some(Process::SinglePumpSfwm),
            ScenarioKind::Custom => None,
        }
    }

    fn allows(self, output: OutputKind) -> bool {
        use OutputKind::*;
        match self {
            ScenarioKind::SpdcLowgain | ScenarioKind::DualpumpJsa => output != Homodyne,
            ScenarioKind::SfwmHomodyne => matches!(output, Homodyne | Trace),
            ScenarioKind::Custom => true,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Jsa,
    Schmidt,
    Density,
    Homodyne,
    Moments,
    Trace,
}

/// Physical dimension implied by a unit suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Unspecified,
    Wavenumber,
    Length,
}

/// A number in SI units. Deserializes from a bare number or from a string
/// with a unit suffix (`"41.8 cm^-1"`, `"4180 1/m"`, `"2 mm"`); always
/// serializes as the bare SI number.
#[derive(Debug, Clone, Copy)]
pub struct Quantity {
    pub si: f64,
    dim: Dimension,
}

impl Quantity {
    pub fn new(si: f64) -> Self {
        Quantity { si, dim: Dimension::Unspecified }
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let t = text.trim();
        let split = t
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(t.len());
        let (num, unit) = t.split_at(split);
        let value: f64 = num.trim().parse().map_err(|_| format!("cannot parse number in {text:?}"))?;
        let (exp10, dim) = match unit.trim().replace(' ', "").as_str() {
            "" => (0, Dimension::Unspecified),
            "1/m" | "m^-1" | "/m" => (0, Dimension::Wavenumber),
            "cm^-1" | "1/cm" | "/cm" => (2, Dimension::Wavenumber),
            "mm^-1" | "1/mm" | "/mm" => (3, Dimension::Wavenumber),
            "um^-1" | "1/um" | "/um" => (6, Dimension::Wavenumber),
            "m" => (0, Dimension::Length),
            "cm" => (-2, Dimension::Length),
            "mm" => (-3, Dimension::Length),
            "um" => (-6, Dimension::Length),
            "nm" => (-9, Dimension::Length),
            other => return Err(format!("unknown unit {other:?} in {text:?}")),
        };
        let si = if exp10 >= 0 { value * 10f64.powi(exp10) } else { value / 10f64.powi(-exp10) };
        Ok(Quantity { si, dim })
    }

    fn check(&self, expected: Dimension, what: &str) -> Result<()> {
        if self.dim == Dimension::Unspecified || self.dim == expected {
            Ok(())
        } else {
            Err(SqzError::config(format!(
                "{what}: unit is a {:?} but a {:?} is required",
                self.dim, expected
            )))
        }
    }
}

impl PartialEq for Quantity {
    fn eq(&self, other: &Self) -> bool {
        self.si == other.si
    }
}

impl From<f64> for Quantity {
    fn from(si: f64) -> Self {
        Quantity::new(si)
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.si)
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Quantity::new(v)),
            Raw::Text(t) => Quantity::parse(&t).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    /// Spacing Δκ in 1/m.
    pub delta_kappa: Quantity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameConfig {
    Lab,
    /// Moves with the group velocity of `modes[0]`.
    Comoving,
    Moving { v_ref: f64 },
}

/// Pump description; `centers` and `bandwidth` are 1/m in the wavevector
/// domain and m in the position domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub shape: PulseShape,
    #[serde(default)]
    pub domain: PumpDomain,
    #[serde(default = "zero_centers")]
    pub centers: Vec<Quantity>,
    pub bandwidth: Quantity,
    pub mean_photon_number: f64,
    #[serde(default = "zero_quantity")]
    pub position: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<SpectrumSample>>,
}

fn zero_centers() -> Vec<Quantity> {
    vec![Quantity::new(0.0)]
}

fn zero_quantity() -> Quantity {
    Quantity::new(0.0)
}

impl PumpConfig {
    pub fn to_spec(&self) -> Result<PumpSpec> {
        let dim = match self.domain {
            PumpDomain::Wavevector => Dimension::Wavenumber,
            PumpDomain::Position => Dimension::Length,
        };
        for c in &self.centers {
            c.check(dim, "pump center")?;
        }
        self.bandwidth.check(dim, "pump bandwidth")?;
        self.position.check(Dimension::Length, "pump position")?;
        Ok(PumpSpec {
            shape: self.shape,
            domain: self.domain,
            centers: self.centers.iter().map(|c| c.si).collect(),
            bandwidth: self.bandwidth.si,
            mean_photon_number: self.mean_photon_number,
            position: self.position.si,
            samples: self.samples.clone(),
        })
    }
}

/// Kerr coupling from a waveguide nonlinear parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KerrConfig {
    /// γ_nl in 1/(W·m).
    pub gamma_nl: f64,
    /// Carrier vacuum wavelength in m.
    pub wavelength: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    #[serde(default)]
    pub zeta2: Complex64,
    #[serde(default)]
    pub zeta3: Zeta3,
    /// When set, overrides `zeta3.pppp` using the group velocity of `modes[0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kerr: Option<KerrConfig>,
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t0: f64,
    pub t1: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoChoice {
    /// Normalized output pump mean field.
    #[default]
    Pump,
    /// First Schmidt mode of the fluctuations.
    Schmidt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomodyneConfig {
    pub shapes: Vec<PulseShape>,
    /// Peak nonlinear phases Φ(0) reached at checkpoints of one run; the
    /// largest one is reached at `time.t1`.
    pub phi0: Vec<f64>,
    #[serde(default)]
    pub lo: LoChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualPumpConfig {
    /// Target mean photon numbers of the fluctuations.
    pub targets: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_evaluations")]
    pub max_evaluations: usize,
    /// Pump photon number search range.
    #[serde(default = "default_search_range")]
    pub search_range: [f64; 2],
    /// Relative L1 change of the pump density above which the mean field is
    /// reported as reshaped.
    #[serde(default = "default_reshape_threshold")]
    pub reshape_threshold: f64,
}

fn default_tolerance() -> f64 {
    0.01
}

fn default_max_evaluations() -> usize {
    16
}

fn default_search_range() -> [f64; 2] {
    [1.0, 1e12]
}

fn default_reshape_threshold() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub grid: GridConfig,
    pub frame: FrameConfig,
    /// `modes[0]` is the signal; pump `i` uses `modes[i + 1]` when present,
    /// otherwise `modes[0]`.
    pub modes: Vec<ModeParams>,
    pub pumps: Vec<PumpConfig>,
    pub coupling: CouplingConfig,
    pub time: TimeConfig,
    /// Per-mode intensity loss rates in 1/s, overriding `gamma_loss`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<Vec<f64>>,
    #[serde(default)]
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub oracle_compare: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<Process>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homodyne: Option<HomodyneConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dualpump: Option<DualPumpConfig>,
}

/// Validated, ready-to-run form of a [`ScenarioConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: KappaGrid,
    pub frame: Frame,
    pub signal: ModeParams,
    pub process: Process,
    pub pump_modes: Vec<ModeParams>,
    pub pumps: Vec<PumpSpec>,
    pub coupling: NonlinearCoupling,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| SqzError::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SqzError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn wants(&self, output: OutputKind) -> bool {
        self.outputs.contains(&output)
    }

    pub fn process(&self) -> Result<Process> {
        match (self.scenario.process(), self.process) {
            (Some(p), None) => Ok(p),
            (Some(p), Some(q)) if p == q => Ok(p),
            (Some(p), Some(q)) => Err(SqzError::config(format!(
                "scenario {} uses process {p:?}, not {q:?}",
                self.scenario
            ))),
            (None, Some(q)) => Ok(q),
            (None, None) => Err(SqzError::config("custom scenario requires a process")),
        }
    }

    /// Mode parameters after applying the `loss` override.
    pub fn effective_modes(&self) -> Result<Vec<ModeParams>> {
        let mut modes = self.modes.clone();
        if let Some(loss) = &self.loss {
            if loss.len() != modes.len() {
                return Err(SqzError::config(format!(
                    "loss lists {} rates for {} modes",
                    loss.len(),
                    modes.len()
                )));
            }
            for (m, &g) in modes.iter_mut().zip(loss) {
                m.gamma_loss = g;
            }
        }
        Ok(modes)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let grid = KappaGrid::new(self.grid.n_points, self.grid.delta_kappa.si, 0.0)?;
        self.grid.delta_kappa.check(Dimension::Wavenumber, "grid spacing")?;
        let t = &self.time;
        if !(t.t0.is_finite() && t.t1.is_finite() && t.t1 > t.t0) {
            return Err(SqzError::config(format!("time span requires t1 > t0, got [{}, {}]", t.t0, t.t1)));
        }
        if t.n_steps == 0 {
            return Err(SqzError::config("n_steps must be at least 1"));
        }
        let modes = self.effective_modes()?;
        let signal = *modes.first().ok_or_else(|| SqzError::config("at least one mode is required"))?;
        for m in &modes {
            m.validate()?;
        }
        let process = self.process()?;
        if self.scenario == ScenarioKind::SpdcLowgain && modes.len() < 2 {
            return Err(SqzError::config("SPDC needs the signal mode and the second-harmonic mode"));
        }
        if self.pumps.len() != process.pump_count() {
            return Err(SqzError::config(format!(
                "process {process:?} needs {} pump(s), {} configured",
                process.pump_count(),
                self.pumps.len()
            )));
        }
        let pump_modes: Vec<ModeParams> = (0..self.pumps.len()).map(|i| *modes.get(i + 1).unwrap_or(&signal)).collect();
        let pumps = self.pumps.iter().map(PumpConfig::to_spec).collect::<Result<Vec<_>>>()?;
        if let Some(bad) = self.outputs.iter().find(|o| !self.scenario.allows(**o)) {
            return Err(SqzError::config(format!(
                "output {bad:?} is not available for scenario {}",
                self.scenario
            )));
        }
        let frame = match self.frame {
            FrameConfig::Lab => Frame::lab(),
            FrameConfig::Comoving => Frame::moving(signal.v),
            FrameConfig::Moving { v_ref } => {
                if !v_ref.is_finite() {
                    return Err(SqzError::config("frame velocity must be finite"));
                }
                Frame::moving(v_ref)
            }
        };
        let mut zeta3 = self.coupling.zeta3;
        if let Some(k) = &self.coupling.kerr {
            k.wavelength.check(Dimension::Length, "kerr wavelength")?;
            if !(k.wavelength.si > 0.0) {
                return Err(SqzError::config("kerr wavelength must be positive"));
            }
            zeta3.pppp = gamma_to_zeta3(k.gamma_nl, 2.0 * PI * SPEED_OF_LIGHT / k.wavelength.si, signal.v);
        }
        let coupling = NonlinearCoupling {
            zeta2: self.coupling.zeta2,
            zeta3,
            region: self.coupling.region.clone(),
        };
        coupling.region.validate(&grid)?;
        self.validate_scenario(&modes, &coupling)?;
        Ok(Resolved {
            grid,
            frame,
            signal,
            process,
            pump_modes,
            pumps,
            coupling,
        })
    }

    fn validate_scenario(&self, modes: &[ModeParams], coupling: &NonlinearCoupling) -> Result<()> {
        match self.scenario {
            ScenarioKind::SfwmHomodyne => {
                let h = self
                    .homodyne
                    .as_ref()
                    .ok_or_else(|| SqzError::config("sfwm_homodyne requires a homodyne block"))?;
                if modes.iter().any(|m| m.v_prime != 0.0 || m.gamma_loss != 0.0) {
                    return Err(SqzError::config("sfwm_homodyne requires v_prime = 0 and no loss; use custom otherwise"));
                }
                if coupling.region != Region::Uniform {
                    return Err(SqzError::config("sfwm_homodyne requires a uniform nonlinear region"));
                }
                if self.pumps[0].domain != PumpDomain::Position {
                    return Err(SqzError::config("sfwm_homodyne pumps are specified in the position domain"));
                }
                if h.shapes.is_empty() || h.phi0.is_empty() {
                    return Err(SqzError::config("homodyne block needs at least one shape and one phase"));
                }
                for s in &h.shapes {
                    sqz_core::oracles::shape_constant(*s)?;
                }
                if h.phi0.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(SqzError::config("phi0 values must be non-negative"));
                }
            }
            ScenarioKind::DualpumpJsa => {
                let d = self
                    .dualpump
                    .as_ref()
                    .ok_or_else(|| SqzError::config("dualpump_jsa requires a dualpump block"))?;
                if d.targets.is_empty() || d.targets.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    return Err(SqzError::config("targets must be positive photon numbers"));
                }
                if !(d.tolerance > 0.0) || d.max_evaluations == 0 {
                    return Err(SqzError::config("tolerance and max_evaluations must be positive"));
                }
                let [lo, hi] = d.search_range;
                if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                    return Err(SqzError::config("search_range must satisfy 0 < low < high"));
                }
                if self.pumps[0].centers.len() < 2 {
                    return Err(SqzError::config("dualpump_jsa requires a pump with two spectral lobes"));
                }
            }
            ScenarioKind::SpdcLowgain | ScenarioKind::Custom => {}
        }
        Ok(())
    }
}

/// Built-in configuration for each scenario.
pub fn default_config(kind: ScenarioKind) -> ScenarioConfig {
    match kind {
        ScenarioKind::SpdcLowgain => spdc_default(),
        ScenarioKind::SfwmHomodyne => homodyne_default(),
        ScenarioKind::DualpumpJsa => dualpump_default(),
        ScenarioKind::Custom => {
            let mut cfg = spdc_default();
            cfg.scenario = ScenarioKind::Custom;
            cfg.process = Some(Process::Spdc);
            cfg.outputs = vec![OutputKind::Schmidt, OutputKind::Density, OutputKind::Homodyne];
            cfg
        }
    }
}

fn spdc_default() -> ScenarioConfig {
    let window = 4e-3;
    let dk = 2.0 * PI / window;
    let length = 1e-3;
    let v_sh = 1.5e8;
    let start = -(0.5 * length + 0.35e-3);
    ScenarioConfig {
        scenario: ScenarioKind::SpdcLowgain,
        grid: GridConfig { n_points: 128, delta_kappa: dk.into() },
        frame: FrameConfig::Lab,
        modes: vec![ModeParams::new(2.0e8, 2100.0), ModeParams::new(v_sh, 0.0)],
        pumps: vec![PumpConfig {
            shape: PulseShape::Gaussian,
            domain: PumpDomain::Wavevector,
            centers: zero_centers(),
            bandwidth: (8.0 * dk).into(),
            mean_photon_number: 1e6,
            position: start.into(),
            samples: None,
        }],
        coupling: CouplingConfig {
            zeta2: Complex64::new(6.0e4, 0.0),
            zeta3: Zeta3::default(),
            kerr: None,
            region: Region::top_hat(length),
        },
        time: TimeConfig { t0: 0.0, t1: -2.0 * start / v_sh, n_steps: 200 },
        loss: None,
        outputs: vec![OutputKind::Jsa, OutputKind::Schmidt, OutputKind::Density],
        oracle_compare: false,
        process: None,
        homodyne: None,
        dualpump: None,
    }
}

fn homodyne_default() -> ScenarioConfig {
    let width = 1e-3;
    let window = 100.0 * width;
    ScenarioConfig {
        scenario: ScenarioKind::SfwmHomodyne,
        grid: GridConfig { n_points: 256, delta_kappa: (2.0 * PI / window).into() },
        frame: FrameConfig::Comoving,
        modes: vec![ModeParams::new(1e8, 0.0)],
        pumps: vec![PumpConfig {
            shape: PulseShape::Gaussian,
            domain: PumpDomain::Position,
            centers: zero_centers(),
            bandwidth: width.into(),
            mean_photon_number: 1.0,
            position: zero_quantity(),
            samples: None,
        }],
        coupling: CouplingConfig {
            zeta2: Complex64::new(0.0, 0.0),
            zeta3: Zeta3 { pppp: 1.0, ..Default::default() },
            kerr: None,
            region: Region::Uniform,
        },
        time: TimeConfig { t0: 0.0, t1: 1e-9, n_steps: 80 },
        loss: None,
        outputs: vec![OutputKind::Homodyne],
        oracle_compare: true,
        process: None,
        homodyne: Some(HomodyneConfig {
            shapes: vec![PulseShape::Lorentzian, PulseShape::Sech, PulseShape::Gaussian, PulseShape::Rectangular],
            phi0: (0..=8).map(|i| 0.25 * i as f64).collect(),
            lo: LoChoice::Pump,
        }),
        dualpump: None,
    }
}

fn dualpump_default() -> ScenarioConfig {
    let dk_pump = 4180.0;
    let v = 7.019e7;
    let length = 0.065;
    ScenarioConfig {
        scenario: ScenarioKind::DualpumpJsa,
        grid: GridConfig { n_points: 512, delta_kappa: (dk_pump / 16.0).into() },
        frame: FrameConfig::Comoving,
        modes: vec![ModeParams::new(v, 4.711)],
        pumps: vec![PumpConfig {
            shape: PulseShape::QuarticExponential,
            domain: PumpDomain::Wavevector,
            centers: vec![(-1.5 * dk_pump).into(), (1.5 * dk_pump).into()],
            bandwidth: dk_pump.into(),
            mean_photon_number: 1.4e5,
            position: zero_quantity(),
            samples: None,
        }],
        coupling: CouplingConfig {
            zeta2: Complex64::new(0.0, 0.0),
            zeta3: Zeta3::default(),
            kerr: Some(KerrConfig { gamma_nl: 200.0, wavelength: 1550e-9.into() }),
            region: Region::Uniform,
        },
        time: TimeConfig { t0: 0.0, t1: length / v, n_steps: 40 },
        loss: None,
        outputs: vec![OutputKind::Jsa, OutputKind::Schmidt, OutputKind::Density],
        oracle_compare: false,
        process: None,
        homodyne: None,
        dualpump: Some(DualPumpConfig {
            targets: vec![0.0038, 0.8357],
            tolerance: default_tolerance(),
            max_evaluations: default_max_evaluations(),
            search_range: default_search_range(),
            reshape_threshold: default_reshape_threshold(),
        }),
    }
}
