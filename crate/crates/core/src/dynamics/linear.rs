//! Exact per-mode transition of the damped linear wave equation with
//! additive noise,
//!
//! ```text
//! da = b dt,   db = (-⟨n⟩² a - ν b) dt + √(2ν) dB
//! ```
//!
//! whose generator matrix `A = [[0, 1], [-⟨n⟩², -ν]]` has eigenvalues
//! `-ν/2 ± iω` with `ω = √(⟨n⟩² - ν²/4)`. The stationary covariance is
//! `Σ = diag(⟨n⟩⁻², 1)` for every `ν > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::bracket_sq;

/// Row-major real 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T: Scalar> Mat2<T> {
    pub fn identity() -> Self {
        Self([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    pub fn zero() -> Self {
        Self([[T::zero(); 2]; 2])
    }

    pub fn diag(a: T, b: T) -> Self {
        Self([[a, T::zero()], [T::zero(), b]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.0[i][j]
    }

    pub fn mul(&self, o: &Self) -> Self {
        let a = &self.0;
        let b = &o.0;
        Self([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }

    pub fn transpose(&self) -> Self {
        let a = &self.0;
        Self([[a[0][0], a[1][0]], [a[0][1], a[1][1]]])
    }

    pub fn add(&self, o: &Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        Self([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-T::one()))
    }

    pub fn scale(&self, s: T) -> Self {
        let a = &self.0;
        Self([[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]])
    }

    pub fn max_abs(&self) -> T {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Spectral norm.
    pub fn norm2(&self) -> T {
        let ata = self.transpose().mul(self);
        let (a, b, d) = (ata.0[0][0], ata.0[0][1], ata.0[1][1]);
        let half_tr = (a + d) * T::lit(0.5);
        let disc = (((a - d) * T::lit(0.5)).powi(2) + b * b).sqrt();
        (half_tr + disc).max(T::zero()).sqrt()
    }

    /// Lower Cholesky factor of a symmetric positive-definite matrix.
    pub fn cholesky(&self) -> Option<Self> {
        let a = &self.0;
        if !(a[0][0] > T::zero()) {
            return None;
        }
        let l00 = a[0][0].sqrt();
        let l10 = a[1][0] / l00;
        let rem = a[1][1] - l10 * l10;
        if !(rem > T::zero()) {
            return None;
        }
        Some(Self([[l00, T::zero()], [l10, rem.sqrt()]]))
    }

    /// `M Σ Mᵀ`.
    pub fn congruence(&self, sigma: &Self) -> Self {
        self.mul(sigma).mul(&self.transpose())
    }
}

fn frequency<T: Scalar>(n: usize, damping: T) -> T {
    (bracket_sq::<T>(n) - damping * damping * T::lit(0.25)).sqrt()
}

/// `e^{-t/2} sin(tωₙ)/ωₙ` with `ωₙ = √(⟨n⟩² - 1/4)`: the Fourier multiplier
/// of the damped wave propagator.
pub fn propagator_multiplier<T: Scalar>(n: i64, t: T) -> T {
    let w = frequency::<T>(n.unsigned_abs() as usize, T::one());
    (-t * T::lit(0.5)).exp() * (t * w).sin() / w
}

/// `exp(t · [[0, 1], [-⟨n⟩², -ν]])` in closed form.
pub fn homogeneous_matrix_damped<T: Scalar>(n: usize, t: T, damping: T) -> Mat2<T> {
    let k2 = bracket_sq::<T>(n);
    let w = frequency::<T>(n, damping);
    let half_nu = damping * T::lit(0.5);
    let (s, c) = (t * w).sin_cos();
    let e = (-half_nu * t).exp();
    let sw = s / w;
    Mat2([
        [e * (c + half_nu * sw), e * sw],
        [-e * k2 * sw, e * (c - half_nu * sw)],
    ])
}

/// Propagator of the unit-damped homogeneous equation: maps
/// `(û₀(n), v̂₀(n))` to `(û(t, n), v̂(t, n))`.
pub fn homogeneous_matrix<T: Scalar>(n: usize, t: T) -> Mat2<T> {
    homogeneous_matrix_damped(n, t, T::one())
}

/// Stationary covariance `diag(⟨n⟩⁻², 1)` of one real component.
pub fn stationary_covariance<T: Scalar>(n: usize) -> Mat2<T> {
    Mat2::diag(T::one() / bracket_sq::<T>(n), T::one())
}

/// Joint law of the noise over one step for a unit-rate real Brownian
/// motion `B`: the increment `ΔB` (variance τ), the convolution
/// `η = √(2ν) ∫₀^τ E(τ-s) e₂ dB(s)` with covariance `q`, and their
/// cross-covariance `c = Cov(η, ΔB)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepNoiseLaw<T> {
    pub q: Mat2<T>,
    pub c: [T; 2],
}

/// Closed-form noise law.
pub fn noise_law_closed<T: Scalar>(n: usize, tau: T, damping: T) -> StepNoiseLaw<T> {
    if damping == T::zero() {
        return StepNoiseLaw { q: Mat2::zero(), c: [T::zero(); 2] };
    }
    let nu = damping;
    let k2 = bracket_sq::<T>(n);
    let w = frequency::<T>(n, nu);
    let b = w + w;
    let decay = (-nu * tau).exp();
    let den = nu * nu + b * b;
    let (sb, cb) = (b * tau).sin_cos();
    // ∫₀^τ e^{-νs} ds, ∫ e^{-νs} cos(bs) ds, ∫ e^{-νs} sin(bs) ds
    let j0 = -(-nu * tau).exp_m1() / nu;
    let jc = (nu - decay * (nu * cb - b * sb)) / den;
    let js = (b - decay * (nu * sb + b * cb)) / den;
    let half = T::lit(0.5);
    let i_ss = (j0 - jc) * half;
    let i_cc = (j0 + jc) * half;
    let i_sc = js * half;
    let two_nu = nu + nu;
    let w2 = w * w;
    let q11 = two_nu * i_ss / w2;
    let q12 = two_nu * (i_sc / w - nu * i_ss / (w2 + w2));
    let q22 = two_nu * (i_cc - nu * i_sc / w + nu * nu * i_ss / (T::lit(4.0) * w2));
    let e = homogeneous_matrix_damped(n, tau, nu);
    let amp = two_nu.sqrt();
    let int_e12 = (T::one() - e.get(1, 1) - nu * e.get(0, 1)) / k2;
    let int_e22 = e.get(0, 1);
    StepNoiseLaw {
        q: Mat2([[q11, q12], [q12, q22]]),
        c: [amp * int_e12, amp * int_e22],
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre<T: Scalar>(points: usize) -> (Vec<T>, Vec<T>) {
    assert!(points >= 1);
    let n = points;
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = T::lit(-x);
        nodes[n - 1 - i] = T::lit(x);
        weights[i] = T::lit(w);
        weights[n - 1 - i] = T::lit(w);
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre quadrature of the same noise law.
pub fn noise_law_quadrature<T: Scalar>(n: usize, tau: T, damping: T, panels: usize) -> StepNoiseLaw<T> {
    let (nodes, weights) = gauss_legendre::<T>(8);
    let h = tau / T::from_usize_lossy(panels);
    let half_h = h * T::lit(0.5);
    let mut q = Mat2::zero();
    let mut c = [T::zero(); 2];
    for p in 0..panels {
        let mid = h * T::from_usize_lossy(p) + half_h;
        for (x, w) in nodes.iter().zip(&weights) {
            let s = mid + half_h * *x;
            let e = homogeneous_matrix_damped(n, s, damping);
            let col = [e.get(0, 1), e.get(1, 1)];
            let wt = *w * half_h;
            for i in 0..2 {
                c[i] = c[i] + wt * col[i];
                for j in 0..2 {
                    q.0[i][j] = q.0[i][j] + wt * col[i] * col[j];
                }
            }
        }
    }
    let two_nu = damping + damping;
    StepNoiseLaw {
        q: q.scale(two_nu),
        c: [c[0] * two_nu.sqrt(), c[1] * two_nu.sqrt()],
    }
}

/// One exact step of size `tau` for a single mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearStep<T> {
    pub mode: usize,
    pub tau: T,
    /// Mean map `Eₙ(τ)`.
    pub mean: Mat2<T>,
    /// Noise covariance `Qₙ(τ)`.
    pub cov: Mat2<T>,
    /// Lower Cholesky factor of `Qₙ(τ)`.
    pub cov_chol: Mat2<T>,
    /// Regression of the convolution on the Brownian increment, `c/τ`.
    pub gain: [T; 2],
    /// Cholesky factor of the covariance of the convolution given the increment.
    pub cond_chol: Mat2<T>,
}

impl<T: Scalar> LinearStep<T> {
    pub fn new(n: usize, tau: T) -> Result<Self> {
        Self::with_damping(n, tau, T::one())
    }

    pub fn with_damping(n: usize, tau: T, damping: T) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("step must be positive, got {tau}"),
            });
        }
        let mean = homogeneous_matrix_damped(n, tau, damping);
        if damping == T::zero() {
            return Ok(Self {
                mode: n,
                tau,
                mean,
                cov: Mat2::zero(),
                cov_chol: Mat2::zero(),
                gain: [T::zero(); 2],
                cond_chol: Mat2::zero(),
            });
        }
        // Factors are built in f64 and rounded once, whatever `T` is.
        let (tau64, nu64) = (tau.as_f64(), damping.as_f64());
        let mean64 = homogeneous_matrix_damped(n, tau64, nu64);
        let not_pd = || Error::NotPositiveDefinite { mode: n, tau: tau64 };
        let closed = noise_law_closed(n, tau64, nu64);
        let q = if certified(n, &mean64, &closed) {
            closed.q
        } else {
            let quad = noise_law_quadrature(n, tau64, nu64, quadrature_panels(n, tau64, nu64));
            if !certified(n, &mean64, &quad) {
                return Err(not_pd());
            }
            quad.q
        };
        let cov_chol = q.cholesky().ok_or_else(not_pd)?;
        let (c, cond_chol) = conditional_factor(n, tau64, nu64).ok_or_else(not_pd)?;
        let cast = |m: Mat2<f64>| Mat2(m.0.map(|r| r.map(T::lit)));
        Ok(Self {
            mode: n,
            tau,
            mean,
            cov: cast(q),
            cov_chol: cast(cov_chol),
            gain: [T::lit(c[0] / tau64), T::lit(c[1] / tau64)],
            cond_chol: cast(cond_chol),
        })
    }

    /// Maps a Brownian increment `db` and auxiliary normals (same per-part
    /// variance convention as `db/√τ`) to the convolution term.
    #[inline]
    pub fn convolution<C>(&self, db: C, aux: [C; 2]) -> [C; 2]
    where
        C: Copy + std::ops::Mul<T, Output = C> + std::ops::Add<Output = C>,
    {
        let l = &self.cond_chol.0;
        [
            db * self.gain[0] + aux[0] * l[0][0],
            db * self.gain[1] + aux[0] * l[1][0] + aux[1] * l[1][1],
        ]
    }

    /// Recovers the auxiliary normals from `(db, η)`; inverse of
    /// [`Self::convolution`].
    pub fn auxiliary<C>(&self, db: C, eta: [C; 2]) -> [C; 2]
    where
        C: Copy
            + std::ops::Mul<T, Output = C>
            + std::ops::Add<Output = C>
            + std::ops::Sub<Output = C>,
    {
        let l = &self.cond_chol.0;
        let r0 = eta[0] - db * self.gain[0];
        let r1 = eta[1] - db * self.gain[1];
        let a0 = r0 * (T::one() / l[0][0]);
        let a1 = (r1 - a0 * l[1][0]) * (T::one() / l[1][1]);
        [a0, a1]
    }

    /// Residual of the discrete Lyapunov identity `EΣEᵀ + Q - Σ`.
    pub fn stationarity_residual(&self) -> T {
        let sigma = stationary_covariance::<T>(self.mode);
        self.mean.congruence(&sigma).add(&self.cov).sub(&sigma).max_abs()
    }
}

fn certified<T: Scalar>(n: usize, mean: &Mat2<T>, law: &StepNoiseLaw<T>) -> bool {
    let sigma = stationary_covariance::<T>(n);
    let resid = mean.congruence(&sigma).add(&law.q).sub(&sigma).max_abs();
    let finite = law.q.0.iter().flatten().chain(law.c.iter()).all(|x| x.is_finite());
    finite && resid <= T::lit(64.0) * T::epsilon() && law.q.cholesky().is_some()
}

fn quadrature_panels(n: usize, tau: f64, damping: f64) -> usize {
    let w = frequency::<f64>(n, damping);
    16usize.max(((w + damping) * tau * 2.0).ceil() as usize)
}

/// Cross-covariance `c = Cov(η, ΔB)` and the Cholesky factor of
/// `Cov(η | ΔB)`, by weighted Gram–Schmidt of `(1, f₁, f₂)` on Gauss–Legendre
/// nodes where `f(s) = √(2ν) E(τ−s) e₂`. Orthogonalizing the sampled
/// functions avoids forming `Q − c cᵀ/τ`, whose Schur complement is
/// `O(τ⁵)` and would be lost to cancellation at small steps.
pub fn conditional_factor(n: usize, tau: f64, damping: f64) -> Option<([f64; 2], Mat2<f64>)> {
    let panels = quadrature_panels(n, tau, damping);
    let (nodes, weights) = gauss_legendre::<f64>(8);
    let h = tau / panels as f64;
    let amp = (2.0 * damping).sqrt();
    let mut w = Vec::with_capacity(panels * 8);
    let mut f1 = Vec::with_capacity(panels * 8);
    let mut f2 = Vec::with_capacity(panels * 8);
    for p in 0..panels {
        let mid = h * (p as f64 + 0.5);
        for (x, wt) in nodes.iter().zip(&weights) {
            let s = mid + 0.5 * h * x;
            let e = homogeneous_matrix_damped(n, s, damping);
            w.push(wt * 0.5 * h);
            f1.push(amp * e.get(0, 1));
            f2.push(amp * e.get(1, 1));
        }
    }
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let terms: Vec<f64> = a.iter().zip(b).zip(&w).map(|((x, y), w)| x * y * w).collect();
        crate::stats::pairwise_sum(&terms)
    };
    let mean = |a: &[f64]| dot(a, &vec![1.0; a.len()]);
    let c = [mean(&f1), mean(&f2)];
    let g1: Vec<f64> = f1.iter().map(|x| x - c[0] / tau).collect();
    let g2: Vec<f64> = f2.iter().map(|x| x - c[1] / tau).collect();
    let l00 = dot(&g1, &g1).sqrt();
    if !(l00 > 0.0) {
        return None;
    }
    let l10 = dot(&g2, &g1) / l00;
    let r: Vec<f64> = g2.iter().zip(&g1).map(|(b, a)| b - l10 / l00 * a).collect();
    let l11 = dot(&r, &r).sqrt();
    if !(l11 > 0.0) {
        return None;
    }
    Some((c, Mat2([[l00, 0.0], [l10, l11]])))
}

/// Exact steps of size `tau` for modes `0..=max_mode`.
#[derive(Debug, Clone)]
pub struct LinearPropagator<T> {
    pub tau: T,
    pub damping: T,
    pub steps: Vec<LinearStep<T>>,
}

impl<T: Scalar> LinearPropagator<T> {
    pub fn new(max_mode: usize, tau: T, damping: T) -> Result<Self> {
        let steps = (0..=max_mode)
            .map(|n| LinearStep::with_damping(n, tau, damping))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tau, damping, steps })
    }

    pub fn max_mode(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Alias used in docs and the CLI.
pub fn build_linear_step<T: Scalar>(n: usize, tau: T) -> Result<LinearStep<T>> {
    LinearStep::new(n, tau)
}
