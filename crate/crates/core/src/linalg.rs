//! Dense complex helpers and the block-structured matrix exponential.
//!
//! Every Bogoliubov-type `2n × 2n` matrix in this crate has the form
//! `[[A, B], [B*, A*]]` and is stored as the pair `(A, B)`; products and
//! exponentials of such matrices stay in that form.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef};
use num_complex::Complex64;

pub type CMat = Mat<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `[[A, B], [B*, A*]]` stored as `(A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPair {
    pub a: CMat,
    pub b: CMat,
}

impl BlockPair {
    pub fn new(a: CMat, b: CMat) -> Self {
        debug_assert_eq!(a.nrows(), b.nrows());
        BlockPair { a, b }
    }

    pub fn identity(n: usize) -> Self {
        BlockPair {
            a: CMat::identity(n, n),
            b: CMat::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Block product `self · rhs`.
    pub fn mul(&self, rhs: &BlockPair) -> BlockPair {
        let n = self.dim();
        let par = faer::get_global_parallelism();
        let mut a = CMat::zeros(n, n);
        let mut b = CMat::zeros(n, n);
        matmul(a.as_mut(), Accum::Replace, self.a.as_ref(), rhs.a.as_ref(), ONE, par);
        matmul(a.as_mut(), Accum::Add, self.b.as_ref(), rhs.b.conjugate(), ONE, par);
        matmul(b.as_mut(), Accum::Replace, self.a.as_ref(), rhs.b.as_ref(), ONE, par);
        matmul(b.as_mut(), Accum::Add, self.b.as_ref(), rhs.a.conjugate(), ONE, par);
        BlockPair { a, b }
    }

    /// `diag(d) · self`, where the diagonal acts as `[[d, 0], [0, d*]]`.
    pub fn scale_rows(&mut self, d: &[Complex64]) {
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                self.a[(i, j)] *= d[i];
                self.b[(i, j)] *= d[i];
            }
        }
    }

    /// `self · diag(d)`, where the diagonal acts as `[[d, 0], [0, d*]]`.
    pub fn scale_cols(&mut self, d: &[Complex64]) {
        let n = self.dim();
        for j in 0..n {
            let dj = d[j];
            let dj_c = dj.conj();
            for i in 0..n {
                self.a[(i, j)] *= dj;
                self.b[(i, j)] *= dj_c;
            }
        }
    }

    /// Induced 1-norm of the full `2n × 2n` matrix.
    pub fn one_norm(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| self.a[(i, j)].norm() + self.b[(i, j)].norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        all_finite(self.a.as_ref()) && all_finite(self.b.as_ref())
    }

    fn add_scaled(&mut self, other: &BlockPair, k: Complex64) {
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                self.a[(i, j)] += k * other.a[(i, j)];
                self.b[(i, j)] += k * other.b[(i, j)];
            }
        }
    }

    fn scaled(&self, k: f64) -> BlockPair {
        BlockPair {
            a: Mat::from_fn(self.dim(), self.dim(), |i, j| self.a[(i, j)] * k),
            b: Mat::from_fn(self.dim(), self.dim(), |i, j| self.b[(i, j)] * k),
        }
    }
}

/// Taylor degree and squaring count for `exp(X)` with `‖X‖₁ = norm`.
///
/// The truncation remainder of the scaled series is bounded by
/// `θ^{m+1}/(m+1)! · 1/(1 - θ/(m+2))` with `θ = norm/2^s`; the cheapest
/// `(m, s)` meeting `tol` is returned.
pub fn expm_plan(norm: f64, tol: f64) -> (usize, u32) {
    let mut best = (30usize, 60u32, usize::MAX);
    for s in 0..=60u32 {
        let theta = norm / 2f64.powi(s as i32);
        let mut term = 1.0;
        for m in 1..=30usize {
            term *= theta / m as f64;
            let next = term * theta / (m + 1) as f64;
            let tail = if theta < (m + 2) as f64 {
                next / (1.0 - theta / (m + 2) as f64)
            } else {
                f64::INFINITY
            };
            if tail <= tol {
                let cost = ps_cost(m) + s as usize;
                if cost < best.2 {
                    best = (m, s, cost);
                }
                break;
            }
        }
    }
    (best.0, best.1)
}

fn ps_block(m: usize) -> usize {
    ((m as f64).sqrt().ceil() as usize).max(1)
}

fn ps_cost(m: usize) -> usize {
    let q = ps_block(m);
    (q - 1) + m / q
}

/// `exp` of the block-structured matrix `x`, by scaling and squaring of a
/// Paterson-Stockmeyer evaluated Taylor polynomial.
pub fn expm(x: &BlockPair) -> Option<BlockPair> {
    const TOL: f64 = 1e-15;
    if !x.is_finite() {
        return None;
    }
    let norm = x.one_norm();
    let n = x.dim();
    if norm == 0.0 {
        return Some(BlockPair::identity(n));
    }
    let (m, s) = expm_plan(norm, TOL);
    let xs = x.scaled(0.5f64.powi(s as i32));

    let mut coef = vec![1.0f64; m + 1];
    for k in 1..=m {
        coef[k] = coef[k - 1] / k as f64;
    }

    let q = ps_block(m);
    let mut powers: Vec<BlockPair> = Vec::with_capacity(q + 1);
    powers.push(BlockPair::identity(n));
    powers.push(xs);
    for p in 2..=q {
        let next = powers[p - 1].mul(&powers[1]);
        powers.push(next);
    }

    // p(X) = Σ_i (X^q)^i B_i(X), B_i = Σ_{j<q} c_{iq+j} X^j, evaluated by Horner in X^q.
    let blocks = m / q;
    let block_poly = |i: usize| -> BlockPair {
        let mut acc = BlockPair {
            a: CMat::zeros(n, n),
            b: CMat::zeros(n, n),
        };
        let hi = if i == blocks { m - i * q } else { q - 1 };
        for j in 0..=hi {
            let c = coef[i * q + j];
            if j == 0 {
                for d in 0..n {
                    acc.a[(d, d)] += Complex64::new(c, 0.0);
                }
            } else {
                acc.add_scaled(&powers[j], Complex64::new(c, 0.0));
            }
        }
        acc
    };
    let mut p = block_poly(blocks);
    for i in (0..blocks).rev() {
        p = p.mul(&powers[q]);
        let b = block_poly(i);
        p.add_scaled(&b, ONE);
    }
    for _ in 0..s {
        p = p.mul(&p);
    }
    p.is_finite().then_some(p)
}

pub fn all_finite(m: MatRef<'_, Complex64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()))
}

pub fn max_abs(m: MatRef<'_, Complex64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

/// `max |M - Mᵀ|`.
pub fn symmetry_residual(m: MatRef<'_, Complex64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..j {
            out = out.max((m[(i, j)] - m[(j, i)]).norm());
        }
    }
    out
}

/// `max |M - M†|`.
pub fn hermiticity_residual(m: MatRef<'_, Complex64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..=j {
            out = out.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    out
}

pub fn frobenius(m: MatRef<'_, Complex64>) -> f64 {
    m.norm_l2()
}

/// `‖A - B‖_F / ‖B‖_F`.
pub fn relative_l2(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> f64 {
    let diff = a - b;
    diff.norm_l2() / b.norm_l2()
}

/// Frobenius inner product `Σ conj(a_ij) b_ij`.
pub fn inner(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> Complex64 {
    let mut acc = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].conj() * b[(i, j)];
        }
    }
    acc
}

/// `|⟨|a|, |b|⟩| / (‖a‖ ‖b‖)`: shape similarity of two magnitude maps.
pub fn magnitude_correlation(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let (x, y) = (a[(i, j)].norm(), b[(i, j)].norm());
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Relative L2 distance after removing the best global phase:
/// `min_φ ‖e^{iφ}a - b‖ / ‖b‖`.
pub fn phase_aligned_relative_l2(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> f64 {
    let ip = inner(a, b);
    let phase = if ip.norm() > 0.0 { ip / ip.norm() } else { ONE };
    let aligned = Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * phase);
    relative_l2(aligned.as_ref(), b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(n: usize, scale: f64, seed: u64) -> BlockPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
        let a = Mat::from_fn(n, n, |_, _| g());
        let b = Mat::from_fn(n, n, |_, _| g());
        BlockPair { a, b }
    }

    fn full(x: &BlockPair) -> CMat {
        let n = x.dim();
        Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => x.a[(i, j)],
            (true, false) => x.b[(i, j - n)],
            (false, true) => x.b[(i - n, j)].conj(),
            (false, false) => x.a[(i - n, j - n)].conj(),
        })
    }

    fn series_exp(m: &CMat) -> CMat {
        // Plain Taylor summation after scaling to norm ≤ 1/8; reference only.
        let norm = max_abs(m.as_ref()) * m.nrows() as f64;
        let s = (norm * 8.0).log2().ceil().max(0.0) as i32;
        let k = 0.5f64.powi(s);
        let x = Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * k);
        let mut term = CMat::identity(m.nrows(), m.ncols());
        let mut sum = term.clone();
        for p in 1..40 {
            term = &(&term * &x) * faer::Scale(Complex64::new(1.0 / p as f64, 0.0));
            sum = &sum + &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn block_product_matches_full() {
        let x = random_pair(5, 1.0, 1);
        let y = random_pair(5, 1.0, 2);
        let got = full(&x.mul(&y));
        let want = &full(&x) * &full(&y);
        assert!(max_abs((&got - &want).as_ref()) < 1e-13);
    }

    #[test]
    fn one_norm_matches_full() {
        let x = random_pair(6, 1.0, 3);
        let f = full(&x);
        let want = (0..12)
            .map(|j| (0..12).map(|i| f[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max);
        assert!((x.one_norm() - want).abs() < 1e-12);
    }

    #[test]
    fn expm_matches_reference() {
        for (seed, scale) in [(4u64, 0.01), (5, 0.3), (6, 2.0)] {
            let x = random_pair(6, scale, seed);
            let got = full(&expm(&x).unwrap());
            let want = series_exp(&full(&x));
            let err = max_abs((&got - &want).as_ref()) / max_abs(want.as_ref());
            assert!(err < 1e-12, "scale {scale}: {err}");
        }
    }

    #[test]
    fn expm_scalar_rotation() {
        // exp([[iθ, 0], [0, -iθ]]) is a pure phase.
        let theta = 0.7;
        let x = BlockPair {
            a: Mat::from_fn(1, 1, |_, _| Complex64::new(0.0, theta)),
            b: CMat::zeros(1, 1),
        };
        let e = expm(&x).unwrap();
        assert!((e.a[(0, 0)] - Complex64::from_polar(1.0, theta)).norm() < 1e-15);
        assert!(e.b[(0, 0)].norm() == 0.0);
    }

    #[test]
    fn expm_rejects_nan() {
        let mut x = random_pair(3, 1.0, 7);
        x.a[(1, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(expm(&x).is_none());
    }

    #[test]
    fn plan_small_norm_is_cheap() {
        let (m, s) = expm_plan(1e-6, 1e-15);
        assert!(m <= 3 && s == 0, "{m} {s}");
        let (_, s) = expm_plan(100.0, 1e-15);
        assert!(s > 0);
    }

    #[test]
    fn diagonal_scalings() {
        let x = random_pair(4, 1.0, 8);
        let d: Vec<Complex64> = (0..4).map(|k| Complex64::from_polar(1.0, 0.3 * k as f64)).collect();
        let dp = BlockPair {
            a: Mat::from_fn(4, 4, |i, j| if i == j { d[i] } else { ZERO }),
            b: CMat::zeros(4, 4),
        };
        let mut left = x.clone();
        left.scale_rows(&d);
        assert!(max_abs((&full(&left) - &full(&dp.mul(&x))).as_ref()) < 1e-14);
        let mut right = x.clone();
        right.scale_cols(&d);
        assert!(max_abs((&full(&right) - &full(&x.mul(&dp))).as_ref()) < 1e-14);
    }

    #[test]
    fn phase_alignment() {
        let x = random_pair(4, 1.0, 9).a;
        let rotated = Mat::from_fn(4, 4, |i, j| x[(i, j)] * Complex64::from_polar(1.0, 1.2));
        assert!(phase_aligned_relative_l2(rotated.as_ref(), x.as_ref()) < 1e-14);
        assert!((magnitude_correlation(rotated.as_ref(), x.as_ref()) - 1.0).abs() < 1e-14);
    }
}
