//! Scenario runners producing a serializable report plus bulk artifacts.

use crate::config::{DualPumpConfig, LoChoice, OutputKind, Resolved, ScenarioConfig, ScenarioKind};
use rayon::prelude::*;
use serde::Serialize;
use sqz_core::analysis::{
    assemble_jsa, homodyne_extrema, lobe_imbalance, photon_density, schmidt_from_moment, skewness, to_db,
};
use sqz_core::linalg::{frobenius, magnitude_correlation, max_abs, relative_l2};
use sqz_core::meanfield::{make_pump, MeanField, PulseShape, PumpEvolution, PumpSpec};
use sqz_core::oracles::{
    shape_constant, kerr_vminus, kerr_vminus_windowed, spdc_lowgain_product_jsa,
    spdc_moment_time_quadrature, spdc_perturbative_moment,
};
use sqz_core::qprop::{propagate, PhysicalityReport};
use sqz_core::{CMat, KappaGrid, PropagateOptions, Propagation, Result, SchmidtData, SqzError, TraceRecord};

pub const TOOL: &str = "sqz";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest `|M_jj'|` for which first-order perturbation theory is trusted.
pub const PERTURBATIVE_THRESHOLD: f64 = 0.02;

/// Schmidt modes exported as continuous functions.
const EXPORTED_MODES: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
    pub result: ScenarioResult,
    #[serde(skip)]
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum ScenarioResult {
    SpdcLowgain(SpdcResult),
    SfwmHomodyne(HomodyneResult),
    DualpumpJsa(DualPumpResult),
    Custom(CustomResult),
}

/// Scalar summary of one propagation.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub time: f64,
    pub mean_photon: f64,
    pub schmidt_number: f64,
    pub vacuum: bool,
    pub r_values: Vec<f64>,
    /// `max(‖VV† − WW† − I‖, ‖VWᵀ − (VWᵀ)ᵀ‖)` of the full propagator, when tracked.
    pub symplectic_residual: Option<f64>,
    pub physicality: PhysicalityReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpdcResult {
    pub run: RunSummary,
    pub max_abs_m: f64,
    pub oracle_relative_l2: f64,
    pub quadrature_relative_l2: Option<f64>,
    pub product_correlation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HomodyneRow {
    pub shape: PulseShape,
    pub phi0: f64,
    pub v_minus_db: f64,
    pub v_plus_db: f64,
    /// Analytic value over the pulse as realized on the grid window.
    pub analytic_db: f64,
    /// Analytic value over the infinite line.
    pub analytic_infinite_db: f64,
    pub diff_db: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeConstant {
    pub shape: PulseShape,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HomodyneResult {
    pub lo: LoChoice,
    pub shape_constants: Vec<ShapeConstant>,
    pub max_abs_diff_db: f64,
    pub rows: Vec<HomodyneRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub pump_photon_number: f64,
    pub mean_photon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualTarget {
    pub target: f64,
    pub pump_photon_number: f64,
    pub relative_error: f64,
    pub run: RunSummary,
    /// Third standardized moment of the fluctuation density over κ. This and
    /// `lobe_imbalance` skip `κ_0 = -κ_max`, which has no mirror point.
    pub skewness: f64,
    /// `(right − left)/(right + left)` photon content about κ = 0.
    pub lobe_imbalance: f64,
    /// `Σ|𝒩_out − 𝒩_in| / Σ𝒩_in` of the pump mean-field density.
    pub reshape: f64,
    pub reshaped: bool,
    pub evaluations: Vec<Evaluation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualPumpResult {
    pub zeta3: f64,
    pub targets: Vec<DualTarget>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CustomResult {
    pub run: RunSummary,
    /// Quadrature variances measured with the first Schmidt mode as LO.
    pub homodyne: Option<CustomHomodyne>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CustomHomodyne {
    pub v_minus: f64,
    pub v_plus: f64,
    pub v_minus_db: f64,
    pub theta_min: f64,
}

/// Axis description stored in matrix sidecars.
#[derive(Debug, Clone, Serialize)]
pub struct Axis {
    pub name: &'static str,
    pub unit: &'static str,
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn kappa(grid: &KappaGrid) -> Self {
        Axis { name: "kappa", unit: "1/m", start: grid.kappa(0), step: grid.delta_kappa(), len: grid.n() }
    }

    fn index(name: &'static str, len: usize) -> Self {
        Axis { name, unit: "", start: 0.0, step: 1.0, len }
    }
}

/// Bulk data written next to the summary.
#[derive(Debug, Clone)]
pub enum Artifact {
    /// Two-column CSV.
    Series { name: String, columns: [&'static str; 2], x: Vec<f64>, y: Vec<f64> },
    /// Paired real/imaginary CSVs plus a JSON sidecar.
    Matrix { name: String, values: CMat, rows: Axis, cols: Axis, unit: &'static str },
    Table { name: String, header: Vec<&'static str>, rows: Vec<Vec<String>> },
    Trace { name: String, records: Vec<TraceRecord> },
}

impl Artifact {
    pub fn name(&self) -> &str {
        match self {
            Artifact::Series { name, .. }
            | Artifact::Matrix { name, .. }
            | Artifact::Table { name, .. }
            | Artifact::Trace { name, .. } => name,
        }
    }
}

/// Runs the configured scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<Report> {
    let resolved = cfg.resolve()?;
    let mut warnings: Vec<String> = resolved.pumps.iter().filter_map(|p| p.fit_warning(&resolved.grid)).collect();
    let mut artifacts = Vec::new();
    let result = match cfg.scenario {
        ScenarioKind::SpdcLowgain => {
            ScenarioResult::SpdcLowgain(run_spdc_lowgain(cfg, &resolved, &mut warnings, &mut artifacts)?)
        }
        ScenarioKind::SfwmHomodyne => ScenarioResult::SfwmHomodyne(run_sfwm_homodyne(cfg, &resolved, &mut artifacts)?),
        ScenarioKind::DualpumpJsa => ScenarioResult::DualpumpJsa(run_dualpump_jsa(cfg, &resolved, &mut artifacts)?),
        ScenarioKind::Custom => ScenarioResult::Custom(run_custom(cfg, &resolved, &mut artifacts)?),
    };
    Ok(Report { tool: TOOL, version: VERSION, config: cfg.clone(), warnings, result, artifacts })
}

fn options(cfg: &ScenarioConfig, n_steps: usize, lossless: bool) -> PropagateOptions {
    PropagateOptions {
        n_steps,
        track_propagator: lossless,
        trace: cfg.wants(OutputKind::Trace),
        ..Default::default()
    }
}

fn fresh_pumps(r: &Resolved, specs: &[PumpSpec], t0: f64) -> Result<Vec<MeanField>> {
    specs
        .iter()
        .zip(&r.pump_modes)
        .map(|(s, m)| Ok(make_pump(s, &r.grid, *m)?.at_time(t0)))
        .collect()
}

fn evolve(cfg: &ScenarioConfig, r: &Resolved, specs: &[PumpSpec]) -> Result<(Propagation, PumpEvolution)> {
    let t = cfg.time;
    let pumps = fresh_pumps(r, specs, t.t0)?;
    let mut evo = PumpEvolution::new(r.process, pumps, r.coupling.clone(), &r.grid, r.frame)?;
    let opts = options(cfg, t.n_steps, r.signal.gamma_loss == 0.0);
    let out = propagate(&mut evo, &r.signal, &r.grid, r.frame, t.t0, t.t1, &opts)?;
    evo.advance_to(t.t1)?;
    Ok((out, evo))
}

fn summarize(out: &Propagation, grid: &KappaGrid) -> Result<(RunSummary, SchmidtData)> {
    let s = schmidt_from_moment(&out.moments.m, grid)?;
    let summary = RunSummary {
        time: out.moments.time,
        mean_photon: out.moments.mean_photon_number(),
        schmidt_number: s.schmidt_number,
        vacuum: s.vacuum,
        r_values: s.r_values.clone(),
        symplectic_residual: out.propagator.as_ref().map(|k| k.symplectic_residual()),
        physicality: out.moments.physicality()?,
    };
    Ok((summary, s))
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

/// Artifacts shared by every single-run scenario, named with `prefix`.
fn run_artifacts(
    cfg: &ScenarioConfig,
    prefix: &str,
    out: &Propagation,
    s: &SchmidtData,
    grid: &KappaGrid,
    artifacts: &mut Vec<Artifact>,
) {
    let kappa = grid.kappa_values();
    if cfg.wants(OutputKind::Density) {
        artifacts.push(Artifact::Series {
            name: format!("{prefix}density"),
            columns: ["kappa", "density"],
            x: kappa.clone(),
            y: photon_density(&out.moments.n, grid),
        });
    }
    if cfg.wants(OutputKind::Jsa) {
        artifacts.push(Artifact::Matrix {
            name: format!("{prefix}jsa"),
            values: assemble_jsa(s, grid).values,
            rows: Axis::kappa(grid),
            cols: Axis::kappa(grid),
            unit: "1/m",
        });
    }
    if cfg.wants(OutputKind::Schmidt) {
        let occ = s.occupations();
        let total = s.mean_photon;
        let rows = s
            .r_values
            .iter()
            .zip(&occ)
            .enumerate()
            .map(|(l, (r, n))| {
                let frac = if total > 0.0 { n / total } else { 0.0 };
                vec![l.to_string(), fmt(*r), fmt(*n), fmt(frac)]
            })
            .collect();
        artifacts.push(Artifact::Table {
            name: format!("{prefix}schmidt"),
            header: vec!["mode", "r", "sinh2_r", "fraction"],
            rows,
        });
        let k = s.n_modes().min(EXPORTED_MODES);
        let modes = CMat::from_fn(grid.n(), k, |j, l| s.modes[(j, l)] / grid.delta_kappa().sqrt());
        artifacts.push(Artifact::Matrix {
            name: format!("{prefix}schmidt_modes"),
            values: modes,
            rows: Axis::kappa(grid),
            cols: Axis::index("mode", k),
            unit: "m^(1/2)",
        });
    }
    if cfg.wants(OutputKind::Moments) {
        for (label, m) in [("n", &out.moments.n), ("m", &out.moments.m)] {
            artifacts.push(Artifact::Matrix {
                name: format!("{prefix}moment_{label}"),
                values: m.clone(),
                rows: Axis::kappa(grid),
                cols: Axis::kappa(grid),
                unit: "",
            });
        }
    }
    if cfg.wants(OutputKind::Trace) {
        artifacts.push(Artifact::Trace { name: format!("{prefix}trace"), records: out.trace.clone() });
    }
}

/// Low-gain SPDC: numerical moment against the first-order perturbative one,
/// all compared in the lab frame.
pub fn run_spdc_lowgain(
    cfg: &ScenarioConfig,
    r: &Resolved,
    warnings: &mut Vec<String>,
    artifacts: &mut Vec<Artifact>,
) -> Result<SpdcResult> {
    let grid = &r.grid;
    let t = cfg.time;
    let (out, _) = evolve(cfg, r, &r.pumps)?;
    let (run, s) = summarize(&out, grid)?;
    let lab = out.moments.to_lab(r.frame, grid);

    let mut pump_lab = make_pump(&r.pumps[0], grid, r.pump_modes[0])?.at_time(t.t0);
    for (j, b) in pump_lab.amplitudes.iter_mut().enumerate() {
        *b *= r.frame.to_lab_phase(grid.kappa(j), t.t0);
    }
    let oracle = spdc_perturbative_moment(&pump_lab, &r.signal, &r.coupling, t.t1 - t.t0, grid)?;
    let discrepancy = |reference: &CMat| {
        if frobenius(reference.as_ref()) > 0.0 {
            relative_l2(lab.m.as_ref(), reference.as_ref())
        } else {
            frobenius(lab.m.as_ref())
        }
    };
    let oracle_relative_l2 = discrepancy(&oracle);
    let quadrature_relative_l2 = if cfg.oracle_compare {
        let q = spdc_moment_time_quadrature(&pump_lab, &r.signal, &r.coupling, t.t1 - t.t0, grid)?;
        Some(discrepancy(&q))
    } else {
        None
    };
    let product = spdc_lowgain_product_jsa(&pump_lab, &r.signal, &r.coupling, grid)?;
    let product_correlation = (frobenius(product.as_ref()) > 0.0 && frobenius(lab.m.as_ref()) > 0.0)
        .then(|| magnitude_correlation(lab.m.as_ref(), product.as_ref()));
    let max_abs_m = max_abs(lab.m.as_ref());
    if max_abs_m > PERTURBATIVE_THRESHOLD {
        warnings.push(format!(
            "max |M| = {max_abs_m:e} exceeds the perturbative threshold {PERTURBATIVE_THRESHOLD}; \
             oracle agreement degrades with gain"
        ));
    }
    run_artifacts(cfg, "", &out, &s, grid, artifacts);
    if cfg.wants(OutputKind::Moments) {
        artifacts.push(Artifact::Matrix {
            name: "oracle_moment_m".into(),
            values: oracle,
            rows: Axis::kappa(grid),
            cols: Axis::kappa(grid),
            unit: "",
        });
    }
    Ok(SpdcResult { run, max_abs_m, oracle_relative_l2, quadrature_relative_l2, product_correlation })
}

/// Half width, in pulse widths, of the window the pulse is truncated to.
fn realized_half_window(spec: &PumpSpec, grid: &KappaGrid) -> Option<f64> {
    (spec.shape == PulseShape::Lorentzian).then(|| 0.5 * grid.z_extent() / spec.bandwidth)
}

/// Single-pump SFWM: homodyne variance with a pump-shaped (or Schmidt) LO at
/// checkpoints of increasing nonlinear phase, one run per pulse shape.
pub fn run_sfwm_homodyne(cfg: &ScenarioConfig, r: &Resolved, artifacts: &mut Vec<Artifact>) -> Result<HomodyneResult> {
    let h = cfg.homodyne.as_ref().ok_or_else(|| SqzError::config("missing homodyne block"))?;
    let mut phis = h.phi0.clone();
    phis.sort_by(f64::total_cmp);
    phis.dedup();
    let sweeps: Vec<(PulseShape, Result<(Vec<HomodyneRow>, Vec<TraceRecord>)>)> = h
        .shapes
        .par_iter()
        .map(|&shape| (shape, homodyne_sweep(cfg, r, shape, &phis, h.lo)))
        .collect();
    let mut rows = Vec::new();
    for (shape, sweep) in sweeps {
        let (shape_rows, trace) = sweep?;
        rows.extend(shape_rows);
        if cfg.wants(OutputKind::Trace) {
            artifacts.push(Artifact::Trace { name: format!("trace_{}", shape_name(shape)), records: trace });
        }
    }
    let max_abs_diff_db = rows.iter().map(|r| r.diff_db.abs()).fold(0.0, f64::max);
    if cfg.wants(OutputKind::Homodyne) {
        artifacts.push(Artifact::Table {
            name: "homodyne".into(),
            header: vec!["shape", "phi0", "v_minus_db", "v_plus_db", "analytic_db", "analytic_infinite_db", "diff_db"],
            rows: rows
                .iter()
                .map(|r| {
                    vec![
                        shape_name(r.shape).to_string(),
                        fmt(r.phi0),
                        fmt(r.v_minus_db),
                        fmt(r.v_plus_db),
                        fmt(r.analytic_db),
                        fmt(r.analytic_infinite_db),
                        fmt(r.diff_db),
                    ]
                })
                .collect(),
        });
    }
    let shape_constants = h
        .shapes
        .iter()
        .map(|&shape| Ok(ShapeConstant { shape, c: shape_constant(shape)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(HomodyneResult { lo: h.lo, shape_constants, max_abs_diff_db, rows })
}

fn shape_name(shape: PulseShape) -> &'static str {
    match shape {
        PulseShape::Gaussian => "gaussian",
        PulseShape::Sech => "sech",
        PulseShape::Lorentzian => "lorentzian",
        PulseShape::Rectangular => "rectangular",
        PulseShape::QuarticExponential => "quartic_exponential",
        PulseShape::Custom => "custom",
    }
}

fn homodyne_sweep(
    cfg: &ScenarioConfig,
    r: &Resolved,
    shape: PulseShape,
    phis: &[f64],
    lo_choice: LoChoice,
) -> Result<(Vec<HomodyneRow>, Vec<TraceRecord>)> {
    let grid = &r.grid;
    let t = cfg.time;
    let span = t.t1 - t.t0;
    let mut spec = r.pumps[0].clone();
    spec.shape = shape;
    if shape == PulseShape::Rectangular {
        spec.bandwidth = 0.5 * grid.z_extent();
    }
    spec.mean_photon_number = 1.0;
    let unit = make_pump(&spec, grid, r.pump_modes[0])?;
    let spectral = sqz_core::Spectral::new(grid);
    let peak = spectral
        .field_on_z(&unit.amplitudes)?
        .iter()
        .map(|c| c.norm_sqr())
        .fold(0.0, f64::max);
    let phi_max = phis.last().copied().unwrap_or(0.0);
    let zeta = r.coupling.zeta3.pppp;
    if phi_max > 0.0 && !(zeta * peak > 0.0) {
        return Err(SqzError::config("a positive nonlinear phase needs zeta3.pppp > 0"));
    }
    spec.mean_photon_number = if phi_max > 0.0 { phi_max / (zeta * peak * span) } else { 0.0 };

    let pumps = fresh_pumps(r, std::slice::from_ref(&spec), t.t0)?;
    let mut evo = PumpEvolution::new(r.process, pumps, r.coupling.clone(), grid, r.frame)?;
    let mut moments = sqz_core::GaussianMoments::vacuum(grid.n(), t.t0);
    let mut now = t.t0;
    let mut trace = Vec::new();
    let half = realized_half_window(&spec, grid);
    let mut rows = Vec::with_capacity(phis.len());
    for &phi in phis {
        let target = if phi_max > 0.0 { t.t0 + span * phi / phi_max } else { t.t0 };
        if target > now {
            let steps = ((t.n_steps as f64) * (target - now) / span).round().max(1.0) as usize;
            let mut opts = options(cfg, steps, false);
            opts.initial = Some(moments);
            let out = propagate(&mut evo, &r.signal, grid, r.frame, now, target, &opts)?;
            let offset = trace.len();
            trace.extend(out.trace.into_iter().map(|mut rec| {
                rec.step += offset;
                rec
            }));
            moments = out.moments;
            now = target;
        }
        evo.advance_to(now)?;
        let (v_minus, v_plus) = measure(&moments, &evo.fields()[0], grid, lo_choice)?;
        let analytic = kerr_vminus_windowed(shape, phi, half, 1e-12)?;
        let infinite = kerr_vminus(shape, phi)?;
        rows.push(HomodyneRow {
            shape,
            phi0: phi,
            v_minus_db: to_db(v_minus),
            v_plus_db: to_db(v_plus),
            analytic_db: to_db(analytic),
            analytic_infinite_db: to_db(infinite),
            diff_db: to_db(v_minus) - to_db(analytic),
        });
    }
    Ok((rows, trace))
}

fn measure(
    moments: &sqz_core::GaussianMoments,
    pump: &MeanField,
    grid: &KappaGrid,
    lo_choice: LoChoice,
) -> Result<(f64, f64)> {
    let lo = match lo_choice {
        LoChoice::Pump => pump.normalized(),
        LoChoice::Schmidt => {
            let s = schmidt_from_moment(&moments.m, grid)?;
            (s.n_modes() > 0).then(|| s.mode(0))
        }
    };
    match lo {
        Some(lo) => {
            let e = homodyne_extrema(moments, &lo)?;
            Ok((e.v_min, e.v_max))
        }
        None => Ok((1.0, 1.0)),
    }
}

/// Dual-pump SFWM: for each target ⟨n⟩ (ascending), tunes the pump photon
/// number and analyses the resulting state.
pub fn run_dualpump_jsa(cfg: &ScenarioConfig, r: &Resolved, artifacts: &mut Vec<Artifact>) -> Result<DualPumpResult> {
    let d = cfg.dualpump.as_ref().ok_or_else(|| SqzError::config("missing dualpump block"))?;
    let grid = &r.grid;
    let kappa = grid.kappa_values();
    let mut order: Vec<usize> = (0..d.targets.len()).collect();
    order.sort_by(|&a, &b| d.targets[a].total_cmp(&d.targets[b]));
    let mut seed = (r.pumps[0].mean_photon_number.max(d.search_range[0]), None::<f64>);
    let mut results: Vec<Option<DualTarget>> = vec![None; d.targets.len()];
    for &i in &order {
        let target = d.targets[i];
        let start = match seed {
            (n, Some(achieved)) => n * (target / achieved).sqrt(),
            (n, None) => n,
        };
        let run_at = |n_pump: f64| -> Result<(Propagation, PumpEvolution)> {
            let mut spec = r.pumps[0].clone();
            spec.mean_photon_number = n_pump;
            evolve(cfg, r, &[spec])
        };
        let (n_pump, (out, evo), evaluations) = tune_pump(d, target, start, &run_at)?;
        let (run, s) = summarize(&out, grid)?;
        seed = (n_pump, Some(run.mean_photon));
        let density = photon_density(&out.moments.n, grid);
        let pump_in = fresh_pumps(r, &[PumpSpec { mean_photon_number: n_pump, ..r.pumps[0].clone() }], cfg.time.t0)?
            .remove(0)
            .density(grid);
        let pump_out = evo.fields()[0].density(grid);
        let total_in: f64 = pump_in.iter().sum();
        let reshape = pump_in.iter().zip(&pump_out).map(|(a, b)| (a - b).abs()).sum::<f64>() / total_in;
        let prefix = format!("target{i}_");
        if cfg.wants(OutputKind::Density) {
            for (label, y) in [("pump_density_in", pump_in), ("pump_density_out", pump_out)] {
                artifacts.push(Artifact::Series {
                    name: format!("{prefix}{label}"),
                    columns: ["kappa", "density"],
                    x: kappa.clone(),
                    y,
                });
            }
        }
        run_artifacts(cfg, &prefix, &out, &s, grid, artifacts);
        results[i] = Some(DualTarget {
            target,
            pump_photon_number: n_pump,
            relative_error: run.mean_photon / target - 1.0,
            skewness: skewness(&kappa[1..], &density[1..]),
            lobe_imbalance: lobe_imbalance(&kappa[1..], &density[1..], 0.0),
            reshape,
            reshaped: reshape > d.reshape_threshold,
            run,
            evaluations,
        });
    }
    Ok(DualPumpResult {
        zeta3: r.coupling.zeta3.pppp,
        targets: results.into_iter().map(|t| t.expect("every target visited")).collect(),
    })
}

type Evaluated<T> = (f64, T, Vec<Evaluation>);

/// Safeguarded secant search in `(ln N, ln ⟨n⟩)`, falling back to bisection
/// once the target is bracketed.
fn tune_pump<T>(
    d: &DualPumpConfig,
    target: f64,
    start: f64,
    run_at: &dyn Fn(f64) -> Result<(Propagation, T)>,
) -> Result<Evaluated<(Propagation, T)>> {
    let [lo_n, hi_n] = d.search_range;
    let (x_min, x_max) = (lo_n.ln(), hi_n.ln());
    let goal = target.ln();
    let mut evals: Vec<Evaluation> = Vec::new();
    let mut below: Option<(f64, f64)> = None;
    let mut above: Option<(f64, f64)> = None;
    let mut history: Vec<(f64, f64)> = Vec::new();
    let mut x = start.ln().clamp(x_min, x_max);
    let range_error = |evals: &[Evaluation]| {
        let achieved = evals.iter().map(|e| e.mean_photon);
        SqzError::Range {
            target,
            low: achieved.clone().fold(f64::INFINITY, f64::min),
            high: achieved.fold(f64::NEG_INFINITY, f64::max),
        }
    };
    for _ in 0..d.max_evaluations {
        let n_pump = x.exp();
        let (out, extra) = run_at(n_pump)?;
        let mean = out.moments.mean_photon_number();
        evals.push(Evaluation { pump_photon_number: n_pump, mean_photon: mean });
        if (mean / target - 1.0).abs() <= d.tolerance {
            return Ok((n_pump, (out, extra), evals));
        }
        if !(mean > 0.0) {
            x = (x + 1.0).min(x_max);
            continue;
        }
        let f = mean.ln() - goal;
        if f < 0.0 {
            below = Some((x, f));
        } else {
            above = Some((x, f));
        }
        history.push((x, f));
        let slope = match history.len() {
            1 => 2.0,
            k => {
                let (x0, f0) = history[k - 2];
                let s = (f - f0) / (x - x0);
                if s.is_finite() && s > 0.0 { s } else { 2.0 }
            }
        };
        let mut next = x - f / slope;
        if let (Some((xb, _)), Some((xa, _))) = (below, above) {
            let (lo, hi) = (xb.min(xa), xb.max(xa));
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
        }
        let clamped = next.clamp(x_min, x_max);
        if clamped == x && (x == x_min || x == x_max) {
            return Err(range_error(&evals));
        }
        x = clamped;
    }
    Err(range_error(&evals))
}

/// Free-form propagation.
pub fn run_custom(cfg: &ScenarioConfig, r: &Resolved, artifacts: &mut Vec<Artifact>) -> Result<CustomResult> {
    let (out, _) = evolve(cfg, r, &r.pumps)?;
    let (run, s) = summarize(&out, &r.grid)?;
    run_artifacts(cfg, "", &out, &s, &r.grid, artifacts);
    let homodyne = if cfg.wants(OutputKind::Homodyne) && s.n_modes() > 0 {
        let e = homodyne_extrema(&out.moments, &s.mode(0))?;
        Some(CustomHomodyne { v_minus: e.v_min, v_plus: e.v_max, v_minus_db: e.v_min_db(), theta_min: e.theta_min })
    } else {
        None
    };
    Ok(CustomResult { run, homodyne })
}
