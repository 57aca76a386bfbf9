//! Fixtures for the kernel benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqz_core::meanfield::DriveFields;
use sqz_core::qprop::{build_drive_generator, propagate};
use sqz_core::{Complex64, Frame, GaussianMoments, GeneratorBlocks, KappaGrid, ModeParams, PropagateOptions, Result};

/// Unit-spacing grid of `n` points.
pub fn grid(n: usize) -> KappaGrid {
    KappaGrid::new(n, 1.0, 0.0).expect("valid grid")
}

/// Random drive with a Hermitian intensity part, reproducible from `seed`.
pub fn random_drive(n: usize, scale: f64, seed: u64) -> DriveFields {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pair = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
    let mut m_ext = vec![Complex64::new(0.0, 0.0); 2 * n];
    m_ext[n] = Complex64::new(pair().re, 0.0);
    for d in 1..n {
        let v = pair();
        m_ext[n + d] = v;
        m_ext[n - d] = v.conj();
    }
    let s_ext = (0..2 * n).map(|_| pair()).collect();
    DriveFields { s_ext, m_ext, time: 0.0 }
}

pub fn generator(n: usize, seed: u64) -> GeneratorBlocks {
    build_drive_generator(&random_drive(n, 0.3, seed), &grid(n)).expect("generator")
}

/// Squeezed moments from a short constant-drive run.
pub fn squeezed_moments(n: usize, seed: u64) -> Result<GaussianMoments> {
    let g = grid(n);
    let mut drive = sqz_core::meanfield::ConstantDrive(random_drive(n, 0.3, seed));
    let out = propagate(&mut drive, &ModeParams::new(1.0, 0.4), &g, Frame::lab(), 0.0, 1.0, &PropagateOptions::steps(10))?;
    Ok(out.moments)
}
