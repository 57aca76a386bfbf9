//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness; exits non-zero when any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqz_cli::config::{default_config, FrameConfig, GridConfig, OutputKind, ScenarioConfig, ScenarioKind};
use sqz_cli::scenarios::{run, ScenarioResult};
use sqz_core::analysis::{homodyne_extrema, schmidt_from_moment};
use sqz_core::meanfield::{make_pump, ConstantDrive, DriveFields, DriveSchedule, Process, PulseShape, PumpEvolution, Region};
use sqz_core::qprop::propagate;
use sqz_core::{
    CMat, Complex64, Frame, GaussianMoments, KappaGrid, ModeParams, MomentPath, PropagateOptions, Propagation, Result,
};
use std::time::Instant;

struct Outcome {
    id: usize,
    title: &'static str,
    pass: bool,
    summary: String,
    details: Vec<String>,
}

fn report(o: &Outcome) {
    println!(
        "{} [{}] {}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.title,
        o.summary
    );
    for d in &o.details {
        println!("       {d}");
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random drive with the Hermitian structure of a real intensity profile.
fn random_drive(n: usize, scale: f64, rng: &mut ChaCha8Rng, time: f64) -> DriveFields {
    let mut m_ext = vec![c(0.0, 0.0); 2 * n];
    m_ext[n] = c(rng.random_range(-1.0..1.0) * scale, 0.0);
    for d in 1..n {
        let v = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
        m_ext[n + d] = v;
        m_ext[n - d] = v.conj();
    }
    let s_ext = (0..2 * n)
        .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
        .collect();
    DriveFields { s_ext, m_ext, time }
}

fn random_run(seed: u64, path: MomentPath) -> Result<(Propagation, KappaGrid)> {
    let grid = KappaGrid::new(64, 1.0, 0.0)?;
    let mode = ModeParams::new(1.0, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut schedule = move |t: f64| Ok(random_drive(64, 2.5, &mut rng, t));
    let opts = PropagateOptions { n_steps: 200, track_propagator: true, moment_path: path, ..Default::default() };
    let out = propagate(&mut schedule, &mode, &grid, Frame::lab(), 0.0, 1.0, &opts)?;
    Ok((out, grid))
}

fn criterion_1() -> Result<Outcome> {
    let start = Instant::now();
    let (mut worst_sym, mut worst_vw, mut growth) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 1..=3 {
        let (out, _) = random_run(seed, MomentPath::Auto)?;
        growth = growth.max(out.moments.mean_photon_number());
        let k = out.propagator.expect("propagator tracked");
        let (sym, vw) = k.symplectic_residuals();
        worst_sym = worst_sym.max(sym);
        worst_vw = worst_vw.max(vw);
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome {
        id: 1,
        title: "symplectic suite (n = 64, 200 random steps, 3 seeds)",
        pass: worst_sym <= 1e-8 && worst_vw <= 1e-8 && secs < 30.0,
        summary: format!(
            "max|VV†-WW†-I| = {worst_sym:.2e}, max|VWᵀ-(VWᵀ)ᵀ| = {worst_vw:.2e}, max <n> = {growth:.2}, {secs:.1} s"
        ),
        details: vec![],
    })
}

fn purity_and_sum(m: &GaussianMoments, grid: &KappaGrid) -> Result<(f64, f64)> {
    let p = m.physicality()?;
    let s = schmidt_from_moment(&m.m, grid)?;
    let trace = m.mean_photon_number();
    Ok((p.purity_deviation, (trace - s.mean_photon).abs() / trace))
}

fn strong_spdc(gain: f64) -> ScenarioConfig {
    let mut cfg = default_config(ScenarioKind::SpdcLowgain);
    cfg.coupling.zeta2 *= gain;
    cfg.outputs.clear();
    cfg
}

fn strong_spdc_run(gain: f64) -> Result<(Propagation, KappaGrid)> {
    let cfg = strong_spdc(gain);
    let r = cfg.resolve()?;
    let pump = make_pump(&r.pumps[0], &r.grid, r.pump_modes[0])?.at_time(cfg.time.t0);
    let mut evo = PumpEvolution::new(r.process, vec![pump], r.coupling.clone(), &r.grid, r.frame)?;
    let out = propagate(&mut evo, &r.signal, &r.grid, r.frame, cfg.time.t0, cfg.time.t1, &PropagateOptions::steps(200))?;
    Ok((out, r.grid))
}

fn criterion_2() -> Result<Outcome> {
    let mut details = Vec::new();
    let (mut worst_p, mut worst_s) = (0.0f64, 0.0f64);
    for (label, path) in [("random drive, propagator path", MomentPath::Auto), ("random drive, stepwise path", MomentPath::Stepwise)] {
        let (out, grid) = random_run(7, path)?;
        let (p, s) = purity_and_sum(&out.moments, &grid)?;
        details.push(format!("{label}: <n> = {:.4}, purity deviation {p:.2e}, sum deviation {s:.2e}", out.moments.mean_photon_number()));
        worst_p = worst_p.max(p);
        worst_s = worst_s.max(s);
    }
    let (out, spdc_grid) = strong_spdc_run(400.0)?;
    let (p, s) = purity_and_sum(&out.moments, &spdc_grid)?;
    details.push(format!("high-gain SPDC: <n> = {:.4}, purity deviation {p:.2e}, sum deviation {s:.2e}", out.moments.mean_photon_number()));
    worst_p = worst_p.max(p);
    worst_s = worst_s.max(s);
    Ok(Outcome {
        id: 2,
        title: "purity / consistency (lossless from vacuum)",
        pass: worst_p <= 1e-8 && worst_s <= 1e-8,
        summary: format!("max |λ²-n(n+1)| relative = {worst_p:.2e}, max |ΣN_jj - Σsinh²r|/ΣN_jj = {worst_s:.2e}"),
        details,
    })
}

fn spdc_result(cfg: &ScenarioConfig) -> Result<sqz_cli::scenarios::SpdcResult> {
    match run(cfg)?.result {
        ScenarioResult::SpdcLowgain(r) => Ok(r),
        _ => unreachable!("spdc scenario"),
    }
}

fn criteria_3_4() -> Result<(Outcome, Outcome)> {
    let start = Instant::now();
    let lossless_cfg = default_config(ScenarioKind::SpdcLowgain);
    let lossless = spdc_result(&lossless_cfg)?;
    let mut lossy_cfg = lossless_cfg.clone();
    let t = lossy_cfg.time.t1 - lossy_cfg.time.t0;
    lossy_cfg.loss = Some(vec![0.5 / t, 1.5 / t]);
    let lossy = spdc_result(&lossy_cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let c3 = Outcome {
        id: 3,
        title: "low-gain SPDC vs perturbative moment (n = 128)",
        pass: lossless.oracle_relative_l2 <= 0.01 && lossy.oracle_relative_l2 <= 0.01 && secs < 60.0,
        summary: format!(
            "relative L2 lossless {:.2e}, with loss {:.2e}; {secs:.1} s",
            lossless.oracle_relative_l2, lossy.oracle_relative_l2
        ),
        details: vec![format!(
            "max|M| = {:.2e}; loss γ_F T = 0.5, γ_SH T = 1.5",
            lossless.max_abs_m
        )],
    };
    let corr = lossless.product_correlation.unwrap_or(0.0);
    let c4 = Outcome {
        id: 4,
        title: "low-gain product form (pump × phase matching)",
        pass: corr >= 0.99,
        summary: format!("Frobenius magnitude correlation {corr:.5}"),
        details: vec![],
    };
    Ok((c3, c4))
}

fn criterion_5() -> Result<Outcome> {
    let start = Instant::now();
    let cfg = default_config(ScenarioKind::SfwmHomodyne);
    let result = match run(&cfg)?.result {
        ScenarioResult::SfwmHomodyne(r) => r,
        _ => unreachable!("homodyne scenario"),
    };
    let secs = start.elapsed().as_secs_f64();
    let expected = [
        (PulseShape::Lorentzian, 0.75),
        (PulseShape::Sech, 0.8),
        (PulseShape::Gaussian, (2.0f64 / 3.0).sqrt()),
        (PulseShape::Rectangular, 1.0),
    ];
    let constants_ok = expected
        .iter()
        .all(|(s, c)| result.shape_constants.iter().any(|k| k.shape == *s && (k.c - c).abs() < 1e-15));
    let mut details = Vec::new();
    let mut worst = 0.0f64;
    for (shape, _) in expected {
        let rows: Vec<_> = result.rows.iter().filter(|r| r.shape == shape).collect();
        let inf = rows.iter().map(|r| (r.v_minus_db - r.analytic_infinite_db).abs()).fold(0.0, f64::max);
        let win = rows.iter().map(|r| r.diff_db.abs()).fold(0.0, f64::max);
        let end = rows.last().map(|r| r.v_minus_db).unwrap_or(f64::NAN);
        worst = worst.max(inf);
        details.push(format!(
            "{shape:?}: {} points, V-(Φ=2) = {end:.3} dB, max diff {inf:.4} dB (window-integrated oracle {win:.4} dB)",
            rows.len()
        ));
    }
    let covered = result.rows.iter().any(|r| r.phi0 == 0.0) && result.rows.iter().any(|r| r.phi0 == 2.0);
    Ok(Outcome {
        id: 5,
        title: "single-pump SFWM homodyne vs analytic (n = 256)",
        pass: worst <= 0.1 && constants_ok && covered && secs < 300.0,
        summary: format!("max |V-(numerical) - V-(analytic)| = {worst:.4} dB over Φ(0) ∈ [0, 2]; C echoed {constants_ok}; {secs:.1} s"),
        details,
    })
}

fn schmidt_homodyne_deviation(m: &GaussianMoments, grid: &KappaGrid, modes: usize) -> Result<(f64, f64)> {
    let s = schmidt_from_moment(&m.m, grid)?;
    let mut worst = 0.0f64;
    for l in 0..s.n_modes().min(modes) {
        let e = homodyne_extrema(m, &s.mode(l))?;
        let r = s.r_values[l];
        let dm = (e.v_min / (-2.0 * r).exp() - 1.0).abs();
        let dp = (e.v_max / (2.0 * r).exp() - 1.0).abs();
        worst = worst.max(dm).max(dp);
    }
    Ok((worst, s.r_values[0]))
}

fn criterion_6() -> Result<Outcome> {
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    let (random, grid) = random_run(11, MomentPath::Auto)?;
    let (dev, r0) = schmidt_homodyne_deviation(&random.moments, &grid, 6)?;
    details.push(format!("random drive: r_0 = {r0:.4}, deviation {dev:.2e}"));
    worst = worst.max(dev);
    for gain in [40.0, 120.0] {
        let (out, g) = strong_spdc_run(gain)?;
        let (dev, r0) = schmidt_homodyne_deviation(&out.moments, &g, 6)?;
        details.push(format!("SPDC, coupling x{gain}: r_0 = {r0:.4}, deviation {dev:.2e}"));
        worst = worst.max(dev);
    }
    // V- is a difference of O(e^{2r}) terms, so double precision bounds its
    // relative accuracy by about 1e-16 e^{4r}; shown, not counted.
    let (out, g) = strong_spdc_run(400.0)?;
    let (dev, r0) = schmidt_homodyne_deviation(&out.moments, &g, 6)?;
    details.push(format!(
        "SPDC, coupling x400 (not counted): r_0 = {r0:.4}, deviation {dev:.2e}, precision floor ~{:.1e}",
        1e-16 * (4.0 * r0).exp()
    ));
    Ok(Outcome {
        id: 6,
        title: "Schmidt-mode homodyne V± = e^{±2r}",
        pass: worst <= 1e-6,
        summary: format!("max relative deviation {worst:.2e} over the first 6 Schmidt modes"),
        details,
    })
}

fn criterion_7() -> Result<Outcome> {
    let start = Instant::now();
    let cfg = default_config(ScenarioKind::DualpumpJsa);
    let result = match run(&cfg)?.result {
        ScenarioResult::DualpumpJsa(r) => r,
        _ => unreachable!("dual-pump scenario"),
    };
    let secs = start.elapsed().as_secs_f64();
    let t = &result.targets;
    let (low, high) = (&t[0], &t[1]);
    let hit = t.iter().all(|x| x.relative_error.abs() <= 0.01);
    let k_ok = t.iter().all(|x| (2.8..=3.4).contains(&x.run.schmidt_number));
    let reshape_ok = !low.reshaped && high.reshaped;
    let sign_change = low.skewness.signum() != high.skewness.signum();
    let mut details = Vec::new();
    for x in t {
        details.push(format!(
            "<n> = {:.5} (target {}, {:+.2e}), K = {:.3}, N_pump = {:.4e}, reshape {:.2e}, skewness {:+.3e}, evaluations {}",
            x.run.mean_photon,
            x.target,
            x.relative_error,
            x.run.schmidt_number,
            x.pump_photon_number,
            x.reshape,
            x.skewness,
            x.evaluations.len()
        ));
    }
    details.push(format!(
        "targets hit {hit}; K in [2.8, 3.4] {k_ok}; reshaping only at high gain {reshape_ok}; skewness sign change {sign_change}"
    ));
    Ok(Outcome {
        id: 7,
        title: "dual-pump SFWM densities, JSA and Schmidt number (n = 512)",
        pass: hit && k_ok && reshape_ok && sign_change && secs < 900.0,
        summary: format!(
            "K = {:.3} / {:.3} at <n> = {:.4} / {:.4}; skewness {:+.2e} / {:+.2e}; {secs:.0} s",
            low.run.schmidt_number, high.run.schmidt_number, low.run.mean_photon, high.run.mean_photon, low.skewness, high.skewness
        ),
        details,
    })
}

fn criterion_8() -> Result<Outcome> {
    let n = 32;
    let grid = KappaGrid::new(n, 1.0, 0.0)?;
    let gamma = 0.8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let drive = random_drive(n, 0.2, &mut rng, 0.0);

    // Squeezed initial state, then pure loss with free evolution.
    let lossless = ModeParams::new(1.0, 0.4);
    let mut constant = ConstantDrive(drive.clone());
    let initial = propagate(&mut constant, &lossless, &grid, Frame::lab(), 0.0, 1.0, &PropagateOptions::steps(20))?.moments;
    let lossy = lossless.with_loss(gamma);
    let mut zero = ConstantDrive(DriveFields::zero(&grid, 0.0));
    let mut worst_decay = 0.0f64;
    for &t in &[0.3, 1.0, 2.5] {
        let opts = PropagateOptions { n_steps: 7, initial: Some(initial.clone()), ..Default::default() };
        let out = propagate(&mut zero, &lossy, &grid, Frame::lab(), 1.0, 1.0 + t, &opts)?;
        let f = (-gamma * t).exp();
        let trace_dev = (out.moments.mean_photon_number() / (f * initial.mean_photon_number()) - 1.0).abs();
        let mut elem = 0.0f64;
        let scale = sqz_core::linalg::max_abs(initial.n.as_ref()).max(sqz_core::linalg::max_abs(initial.m.as_ref()));
        for j in 0..n {
            for k in 0..n {
                elem = elem.max((out.moments.n[(j, k)].norm() - f * initial.n[(j, k)].norm()).abs() / (f * scale));
                elem = elem.max((out.moments.m[(j, k)].norm() - f * initial.m[(j, k)].norm()).abs() / (f * scale));
            }
        }
        worst_decay = worst_decay.max(trace_dev).max(elem);
    }

    // Self-convergence of loss interleaved with a time-dependent drive.
    let smooth = |t: f64| -> DriveFields {
        let w = 1.0 + 0.5 * t.sin();
        DriveFields {
            s_ext: drive.s_ext.iter().map(|x| x * w).collect(),
            m_ext: drive.m_ext.iter().map(|x| x * w).collect(),
            time: t,
        }
    };
    let solve = |steps: usize| -> Result<CMat> {
        let mut sched = |t: f64| Ok(smooth(t));
        let opts = PropagateOptions { n_steps: steps, moment_path: MomentPath::Stepwise, ..Default::default() };
        let out = propagate(&mut sched as &mut dyn DriveSchedule, &lossy, &grid, Frame::lab(), 0.0, 2.0, &opts)?;
        let mut stacked = CMat::zeros(n, 2 * n);
        for j in 0..n {
            for k in 0..n {
                stacked[(j, k)] = out.moments.n[(j, k)];
                stacked[(j, n + k)] = out.moments.m[(j, k)];
            }
        }
        Ok(stacked)
    };
    let sols: Vec<CMat> = [40, 80, 160, 320].iter().map(|&s| solve(s)).collect::<Result<_>>()?;
    let diff = |a: &CMat, b: &CMat| sqz_core::linalg::frobenius((a - b).as_ref());
    let e: Vec<f64> = sols.windows(2).map(|w| diff(&w[0], &w[1])).collect();
    let orders: Vec<f64> = e.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = orders.last().copied().unwrap_or(0.0);
    Ok(Outcome {
        id: 8,
        title: "loss oracle and Strang interleaving order",
        pass: worst_decay <= 1e-10 && order >= 1.8,
        summary: format!("max deviation from e^(-γt) decay {worst_decay:.2e}; observed order {order:.3}"),
        details: vec![format!(
            "self-convergence differences {:?}, orders {:?}",
            e.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            orders.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>()
        )],
    })
}

fn frame_config(frame: FrameConfig) -> ScenarioConfig {
    let mut cfg = default_config(ScenarioKind::Custom);
    let dk = 2.0 * std::f64::consts::PI / 4e-3;
    cfg.grid = GridConfig { n_points: 128, delta_kappa: dk.into() };
    cfg.process = Some(Process::SinglePumpSfwm);
    cfg.frame = frame;
    cfg.modes = vec![ModeParams::new(2.0e8, 3000.0)];
    cfg.pumps[0].shape = PulseShape::Gaussian;
    cfg.pumps[0].bandwidth = (6.0 * dk).into();
    cfg.pumps[0].position = 0.0.into();
    cfg.pumps[0].mean_photon_number = 1e8;
    cfg.coupling.zeta2 = c(0.0, 0.0);
    cfg.coupling.zeta3.pppp = 4e-2;
    cfg.coupling.region = Region::Uniform;
    cfg.time.t1 = 1e-11;
    cfg.time.n_steps = 60;
    cfg.outputs = vec![OutputKind::Schmidt];
    cfg
}

fn criterion_9() -> Result<Outcome> {
    let summary = |frame| -> Result<sqz_cli::scenarios::RunSummary> {
        match run(&frame_config(frame))?.result {
            ScenarioResult::Custom(r) => Ok(r.run),
            _ => unreachable!("custom scenario"),
        }
    };
    let lab = summary(FrameConfig::Lab)?;
    let moving = summary(FrameConfig::Comoving)?;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
    let dn = rel(lab.mean_photon, moving.mean_photon);
    let dk = rel(lab.schmidt_number, moving.schmidt_number);
    let r0 = lab.r_values[0];
    let compared: Vec<(f64, f64)> = lab
        .r_values
        .iter()
        .zip(&moving.r_values)
        .filter(|(a, _)| **a >= 1e-3 * r0)
        .map(|(a, b)| (*a, *b))
        .collect();
    let dr = compared.iter().map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
    Ok(Outcome {
        id: 9,
        title: "frame invariance (lab vs comoving)",
        pass: dn <= 1e-8 && dk <= 1e-8 && dr <= 1e-8,
        summary: format!("relative differences <n> {dn:.2e}, K {dk:.2e}, r_l {dr:.2e} ({} modes)", compared.len()),
        details: vec![format!("<n> = {:.4}, K = {:.4}, r_0 = {r0:.4}", lab.mean_photon, lab.schmidt_number)],
    })
}

/// Optional criterion numbers on the command line restrict the run.
fn selected() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if picked.is_empty() {
        (1..=9).collect()
    } else {
        picked
    }
}

fn main() {
    let started = Instant::now();
    let wanted = selected();
    let mut outcomes: Vec<Outcome> = Vec::new();
    let mut push = |id: usize, title: &'static str, r: Result<Outcome>| {
        let o = r.unwrap_or_else(|e| Outcome { id, title, pass: false, summary: format!("error: {e}"), details: vec![] });
        report(&o);
        outcomes.push(o);
    };
    let on = |id: usize| wanted.contains(&id);
    if on(1) {
        push(1, "symplectic suite", criterion_1());
    }
    if on(2) {
        push(2, "purity / consistency", criterion_2());
    }
    if on(3) || on(4) {
        match criteria_3_4() {
            Ok((a, b)) => {
                push(3, "", Ok(a));
                push(4, "", Ok(b));
            }
            Err(e) => {
                push(3, "low-gain SPDC", Err(e));
                push(4, "low-gain product form", Err(sqz_core::SqzError::config("not run")));
            }
        }
    }
    if on(5) {
        push(5, "single-pump SFWM homodyne", criterion_5());
    }
    if on(6) {
        push(6, "Schmidt-mode homodyne", criterion_6());
    }
    if on(7) {
        push(7, "dual-pump SFWM", criterion_7());
    }
    if on(8) {
        push(8, "loss oracle", criterion_8());
    }
    if on(9) {
        push(9, "frame invariance", criterion_9());
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.0} s",
        outcomes.len(),
        started.elapsed().as_secs_f64()
    );
    if passed != outcomes.len() {
        std::process::exit(1);
    }
}
