//! Fourier-side representation of real fields on the circle.
//!
//! A real field is stored by its coefficients at modes `0..=N`; the
//! coefficient at `-n` is the conjugate of the one at `n` and is never
//! stored. Integrals over the circle use the normalized measure
//! `dx / 2π`, so the grid counterpart of an integral is a plain average.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Japanese bracket `(1 + n²)^{1/2}`.
pub fn bracket<T: Scalar>(n: i64) -> T {
    let n = T::from_i64(n).expect("mode index representable");
    (T::one() + n * n).sqrt()
}

/// `⟨n⟩²` without the square root.
#[inline]
pub(crate) fn bracket_sq<T: Scalar>(n: usize) -> T {
    let n = T::from_usize_lossy(n);
    T::one() + n * n
}

/// Sobolev exponent.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SobolevIndex<T>(pub T);

impl<T: Scalar> SobolevIndex<T> {
    /// Default regularity gap below 1/2.
    pub const DEFAULT_EPS_REG: f64 = 0.1;

    /// The exponent `1/2 - eps_reg` at which the Gaussian reference field lives.
    pub fn below_half(eps_reg: T) -> Result<Self> {
        if !(eps_reg > T::zero() && eps_reg < T::lit(0.5)) {
            return Err(Error::InvalidParameter {
                name: "eps_reg",
                reason: format!("must lie in (0, 1/2), got {eps_reg}"),
            });
        }
        Ok(Self(T::lit(0.5) - eps_reg))
    }

    pub fn value(self) -> T {
        self.0
    }

    pub fn shifted(self, by: T) -> Self {
        Self(self.0 + by)
    }
}

impl<T: Scalar> Default for SobolevIndex<T> {
    fn default() -> Self {
        Self(T::lit(0.5 - Self::DEFAULT_EPS_REG))
    }
}

/// Per-mode weights `⟨n⟩^{2α}` for a fixed exponent and mode count.
#[derive(Debug, Clone)]
pub struct SobolevWeights<T> {
    weights: Vec<T>,
}

impl<T: Scalar> SobolevWeights<T> {
    pub fn new(max_mode: usize, alpha: SobolevIndex<T>) -> Self {
        // ⟨n⟩^{2α} = (1 + n²)^α
        let weights = (0..=max_mode)
            .map(|n| bracket_sq::<T>(n).powf(alpha.0))
            .collect();
        Self { weights }
    }

    #[inline]
    pub fn get(&self, n: usize) -> T {
        self.weights[n]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weighted squared norm, conjugate modes included.
    pub fn norm_sq(&self, f: &FourierField<T>) -> T {
        debug_assert!(f.len() <= self.weights.len());
        let c = f.coeffs();
        let mut acc = self.weights[0] * c[0].norm_sqr();
        let two = T::lit(2.0);
        for n in 1..c.len() {
            acc = acc + two * self.weights[n] * c[n].norm_sqr();
        }
        acc
    }

    /// Weighted real inner product `Σ_{n∈Z} w(n) Re(f̂(n) conj ĝ(n))`.
    pub fn inner(&self, f: &FourierField<T>, g: &FourierField<T>) -> T {
        let (a, b) = (f.coeffs(), g.coeffs());
        let mut acc = self.weights[0] * (a[0] * b[0].conj()).re;
        let two = T::lit(2.0);
        for n in 1..a.len().min(b.len()) {
            acc = acc + two * self.weights[n] * (a[n] * b[n].conj()).re;
        }
        acc
    }
}

/// Truncated Fourier coefficients of a real field, modes `0..=max_mode`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField<T> {
    coeffs: Vec<Complex<T>>,
}

impl<T: Scalar> fmt::Debug for FourierField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierField")
            .field("max_mode", &self.max_mode())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl<T: Scalar> FourierField<T> {
    pub fn zeros(max_mode: usize) -> Self {
        assert!(max_mode >= 1, "max_mode must be at least 1");
        Self {
            coeffs: vec![Complex::new(T::zero(), T::zero()); max_mode + 1],
        }
    }

    /// Checked constructor enforcing reality of the zero mode and finiteness.
    pub fn from_coeffs(coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::EmptySpectrum(coeffs.len().saturating_sub(1)));
        }
        if coeffs[0].im != T::zero() {
            return Err(Error::NonRealZeroMode(coeffs[0].im.as_f64()));
        }
        if let Some(n) = coeffs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite(n));
        }
        Ok(Self { coeffs })
    }

    /// Builds a field whose only non-zero coefficient sits at `mode`.
    pub fn single_mode(max_mode: usize, mode: usize, value: Complex<T>) -> Self {
        let mut f = Self::zeros(max_mode);
        let value = if mode == 0 { Complex::new(value.re, T::zero()) } else { value };
        f.coeffs[mode] = value;
        f
    }

    /// `amplitude · cos(k x)`.
    pub fn cosine(max_mode: usize, k: usize, amplitude: T) -> Self {
        if k == 0 {
            return Self::single_mode(max_mode, 0, Complex::new(amplitude, T::zero()));
        }
        Self::single_mode(max_mode, k, Complex::new(amplitude * T::lit(0.5), T::zero()))
    }

    #[inline]
    pub fn max_mode(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    /// Mutable coefficient access. Writers must keep the zero mode real.
    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    #[inline]
    pub fn coeff(&self, n: usize) -> Complex<T> {
        self.coeffs[n]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: T, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a = *a + b * s;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(T::one(), other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-T::one(), other);
        out
    }

    /// Value of the field at the point `x`.
    pub fn eval(&self, x: T) -> T {
        let mut acc = self.coeffs[0].re;
        let two = T::lit(2.0);
        for (n, c) in self.coeffs.iter().enumerate().skip(1) {
            let phase = x * T::from_usize_lossy(n);
            acc = acc + two * (c.re * phase.cos() - c.im * phase.sin());
        }
        acc
    }
}

/// Position/momentum pair `(u, ∂ₜu)`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct PairField<T> {
    pub u: FourierField<T>,
    pub v: FourierField<T>,
}

impl<T: Scalar> fmt::Debug for PairField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairField")
            .field("u", &self.u)
            .field("v", &self.v)
            .finish()
    }
}

impl<T: Scalar> PairField<T> {
    pub fn new(u: FourierField<T>, v: FourierField<T>) -> Result<Self> {
        if u.max_mode() != v.max_mode() {
            return Err(Error::ModeMismatch {
                left: u.max_mode(),
                right: v.max_mode(),
            });
        }
        Ok(Self { u, v })
    }

    pub fn zeros(max_mode: usize) -> Self {
        Self {
            u: FourierField::zeros(max_mode),
            v: FourierField::zeros(max_mode),
        }
    }

    #[inline]
    pub fn max_mode(&self) -> usize {
        self.u.max_mode()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            u: self.u.scaled(s),
            v: self.v.scaled(s),
        }
    }

    pub fn axpy(&mut self, s: T, other: &Self) {
        self.u.axpy(s, &other.u);
        self.v.axpy(s, &other.v);
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            u: self.u.add(&other.u),
            v: self.v.add(&other.v),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            u: self.u.sub(&other.u),
            v: self.v.sub(&other.v),
        }
    }

    /// Largest absolute coefficient difference over both components.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.u
            .coeffs()
            .iter()
            .zip(other.u.coeffs())
            .chain(self.v.coeffs().iter().zip(other.v.coeffs()))
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), T::max)
    }
}

/// `Σ_{|n|≤N} ⟨n⟩^{2α} |f̂(n)|²`.
pub fn sobolev_norm_sq<T: Scalar>(f: &FourierField<T>, alpha: SobolevIndex<T>) -> T {
    SobolevWeights::new(f.max_mode(), alpha).norm_sq(f)
}

/// `‖u‖²_{H^α} + ‖v‖²_{H^{α-1}}`.
pub fn pair_norm_sq<T: Scalar>(p: &PairField<T>, alpha: SobolevIndex<T>) -> T {
    PairNorm::new(p.max_mode(), alpha).norm_sq(p)
}

/// Cached weights for the phase-space norm `H^α × H^{α-1}`.
#[derive(Debug, Clone)]
pub struct PairNorm<T> {
    pub position: SobolevWeights<T>,
    pub momentum: SobolevWeights<T>,
    alpha: SobolevIndex<T>,
}

impl<T: Scalar> PairNorm<T> {
    pub fn new(max_mode: usize, alpha: SobolevIndex<T>) -> Self {
        Self {
            position: SobolevWeights::new(max_mode, alpha),
            momentum: SobolevWeights::new(max_mode, alpha.shifted(-T::one())),
            alpha,
        }
    }

    pub fn alpha(&self) -> SobolevIndex<T> {
        self.alpha
    }

    pub fn norm_sq(&self, p: &PairField<T>) -> T {
        self.position.norm_sq(&p.u) + self.momentum.norm_sq(&p.v)
    }

    pub fn norm(&self, p: &PairField<T>) -> T {
        self.norm_sq(p).sqrt()
    }

    pub fn dist(&self, a: &PairField<T>, b: &PairField<T>) -> T {
        let mut acc = T::zero();
        let two = T::lit(2.0);
        for n in 0..a.u.len() {
            let m = if n == 0 { T::one() } else { two };
            acc = acc
                + m * (self.position.get(n) * (a.u.coeff(n) - b.u.coeff(n)).norm_sqr()
                    + self.momentum.get(n) * (a.v.coeff(n) - b.v.coeff(n)).norm_sqr());
        }
        acc.sqrt()
    }
}

/// Shape of the frequency cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Sharp,
    SmoothBump,
}

/// Smooth plateau function: 1 on `|ξ| ≤ 1/2`, 0 on `|ξ| ≥ 1`, and
/// `exp(1 - 1/(1 - (2|ξ|-1)²))` in between.
pub fn smooth_bump<T: Scalar>(xi: T) -> T {
    let a = xi.abs();
    let half = T::lit(0.5);
    if a <= half {
        T::one()
    } else if a >= T::one() {
        T::zero()
    } else {
        let y = a + a - T::one();
        (T::one() - T::one() / (T::one() - y * y)).exp()
    }
}

/// Frequency projector `P_N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectorSpec {
    pub cutoff: usize,
    pub profile: Profile,
}

impl ProjectorSpec {
    pub fn new(cutoff: usize, profile: Profile) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidParameter {
                name: "cutoff",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self { cutoff, profile })
    }

    pub fn sharp(cutoff: usize) -> Self {
        Self { cutoff, profile: Profile::Sharp }
    }

    pub fn smooth(cutoff: usize) -> Self {
        Self { cutoff, profile: Profile::SmoothBump }
    }

    /// Fourier multiplier at mode `n`.
    pub fn multiplier<T: Scalar>(&self, n: usize) -> T {
        match self.profile {
            Profile::Sharp => {
                if n <= self.cutoff {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Profile::SmoothBump => {
                smooth_bump(T::from_usize_lossy(n) / T::from_usize_lossy(self.cutoff))
            }
        }
    }

    pub fn multipliers<T: Scalar>(&self, max_mode: usize) -> Vec<T> {
        (0..=max_mode).map(|n| self.multiplier(n)).collect()
    }
}

/// Applies the projector's multiplier modewise.
pub fn project<T: Scalar>(f: &FourierField<T>, spec: &ProjectorSpec) -> Result<FourierField<T>> {
    if spec.cutoff > f.max_mode() {
        return Err(Error::CutoffTooLarge {
            cutoff: spec.cutoff,
            max_mode: f.max_mode(),
        });
    }
    let mut out = f.clone();
    for (n, c) in out.coeffs_mut().iter_mut().enumerate() {
        *c = *c * spec.multiplier::<T>(n);
    }
    Ok(out)
}

/// Planned FFT pair between `max_mode + 1` half-spectrum coefficients and
/// `points` equispaced samples on `[0, 2π)`.
#[derive(Clone)]
pub struct GridTransform<T: Scalar> {
    max_mode: usize,
    points: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> fmt::Debug for GridTransform<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridTransform")
            .field("max_mode", &self.max_mode)
            .field("points", &self.points)
            .finish()
    }
}

/// Scratch buffers for [`GridTransform`]; one per worker.
#[derive(Debug, Default, Clone)]
pub struct GridBuffers<T> {
    spectrum: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Scalar> GridTransform<T> {
    pub fn new(max_mode: usize, points: usize) -> Result<Self> {
        let needed = 2 * max_mode + 1;
        if points < needed {
            return Err(Error::Aliasing {
                points,
                modes: max_mode,
                needed,
            });
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            max_mode,
            points,
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
        })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    pub fn buffers(&self) -> GridBuffers<T> {
        let zero = Complex::new(T::zero(), T::zero());
        let scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        GridBuffers {
            spectrum: vec![zero; self.points],
            scratch: vec![zero; scratch_len],
        }
    }

    /// Samples `f` at `x_k = 2πk/M`. Coefficients above this transform's
    /// `max_mode` are ignored.
    pub fn to_grid_into(&self, f: &FourierField<T>, out: &mut [T], buf: &mut GridBuffers<T>) {
        let m = self.points;
        debug_assert_eq!(out.len(), m);
        let zero = Complex::new(T::zero(), T::zero());
        buf.spectrum.iter_mut().for_each(|c| *c = zero);
        let c = f.coeffs();
        let top = self.max_mode.min(f.max_mode());
        buf.spectrum[0] = c[0];
        for n in 1..=top {
            buf.spectrum[n] = c[n];
            buf.spectrum[m - n] = c[n].conj();
        }
        self.inverse
            .process_with_scratch(&mut buf.spectrum, &mut buf.scratch);
        for (o, s) in out.iter_mut().zip(&buf.spectrum) {
            *o = s.re;
        }
    }

    /// Discrete Fourier coefficients `(1/M) Σ_k f(x_k) e^{-inx_k}` for
    /// `n = 0..=max_mode`.
    pub fn from_grid_into(&self, samples: &[T], out: &mut FourierField<T>, buf: &mut GridBuffers<T>) {
        let m = self.points;
        debug_assert_eq!(samples.len(), m);
        for (s, &x) in buf.spectrum.iter_mut().zip(samples) {
            *s = Complex::new(x, T::zero());
        }
        self.forward
            .process_with_scratch(&mut buf.spectrum, &mut buf.scratch);
        let scale = T::one() / T::from_usize_lossy(m);
        let coeffs = out.coeffs_mut();
        let top = self.max_mode.min(coeffs.len() - 1);
        coeffs[0] = Complex::new(buf.spectrum[0].re * scale, T::zero());
        for n in 1..=top {
            coeffs[n] = buf.spectrum[n] * scale;
        }
    }

    pub fn to_grid(&self, f: &FourierField<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.points];
        let mut buf = self.buffers();
        self.to_grid_into(f, &mut out, &mut buf);
        out
    }

    pub fn from_grid(&self, samples: &[T]) -> Result<FourierField<T>> {
        if samples.len() != self.points {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: format!("expected {} samples, got {}", self.points, samples.len()),
            });
        }
        let mut out = FourierField::zeros(self.max_mode);
        let mut buf = self.buffers();
        self.from_grid_into(samples, &mut out, &mut buf);
        Ok(out)
    }
}

/// Samples `f` on `grid_points` equispaced points.
pub fn to_grid<T: Scalar>(f: &FourierField<T>, grid_points: usize) -> Result<Vec<T>> {
    Ok(GridTransform::new(f.max_mode(), grid_points)?.to_grid(f))
}

/// Recovers modes `0..=max_mode` from equispaced samples.
pub fn from_grid<T: Scalar>(samples: &[T], max_mode: usize) -> Result<FourierField<T>> {
    if max_mode == 0 {
        return Err(Error::EmptySpectrum(0));
    }
    GridTransform::new(max_mode, samples.len())?.from_grid(samples)
}

/// Average of the samples: the normalized integral over the circle.
pub fn grid_mean<T: Scalar>(samples: &[T]) -> T {
    crate::stats::pairwise_sum(samples) / T::from_usize_lossy(samples.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn bracket_values() {
        assert_eq!(bracket::<f64>(0), 1.0);
        assert_relative_eq!(bracket::<f64>(1), 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(bracket::<f64>(-3), 10f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(bracket::<f64>(-3), 3.16227766, epsilon = 1e-8);
    }

    #[test]
    fn cosine_norms() {
        let f = FourierField::<f64>::cosine(4, 1, 1.0);
        assert_eq!(sobolev_norm_sq(&FourierField::<f64>::zeros(4), SobolevIndex(1.0)), 0.0);
        assert_relative_eq!(sobolev_norm_sq(&f, SobolevIndex(1.0)), 1.0, epsilon = 1e-14);
        assert_relative_eq!(
            sobolev_norm_sq(&f, SobolevIndex(0.4)),
            2f64.powf(-0.6),
            epsilon = 1e-14
        );
        assert_relative_eq!(sobolev_norm_sq(&f, SobolevIndex(0.4)), 0.659754, epsilon = 1e-6);

        let zero = FourierField::zeros(4);
        let alpha = SobolevIndex(0.4);
        assert_eq!(pair_norm_sq(&PairField::zeros(4), alpha), 0.0);
        let p = PairField::new(f.clone(), zero.clone()).unwrap();
        assert_relative_eq!(pair_norm_sq(&p, alpha), 0.659754, epsilon = 1e-6);
        let q = PairField::new(zero, f).unwrap();
        assert_relative_eq!(pair_norm_sq(&q, alpha), 2f64.powf(-1.6), epsilon = 1e-14);
        assert_relative_eq!(pair_norm_sq(&q, alpha), 0.329877, epsilon = 1e-6);
    }

    #[test]
    fn default_index_is_point_four() {
        assert_relative_eq!(SobolevIndex::<f64>::default().0, 0.4);
        assert!(SobolevIndex::<f64>::below_half(0.6).is_err());
        assert!(SobolevIndex::<f64>::below_half(0.0).is_err());
    }

    #[test]
    fn constructor_checks() {
        assert!(FourierField::from_coeffs(vec![c(1.0, 0.0)]).is_err());
        assert_eq!(
            FourierField::from_coeffs(vec![c(1.0, 0.5), c(0.0, 0.0)]),
            Err(Error::NonRealZeroMode(0.5))
        );
        assert_eq!(
            FourierField::from_coeffs(vec![c(1.0, 0.0), c(f64::NAN, 0.0)]),
            Err(Error::NonFinite(1))
        );
        let u = FourierField::<f64>::zeros(3);
        let v = FourierField::<f64>::zeros(4);
        assert!(PairField::new(u, v).is_err());
    }

    #[test]
    fn bump_profile() {
        assert_eq!(smooth_bump(0.0f64), 1.0);
        assert_eq!(smooth_bump(0.5f64), 1.0);
        assert_eq!(smooth_bump(-0.5f64), 1.0);
        assert_eq!(smooth_bump(1.0f64), 0.0);
        assert_eq!(smooth_bump(1.3f64), 0.0);
        let mid = smooth_bump(0.75f64);
        assert!(mid > 0.0 && mid < 1.0);
        assert_relative_eq!(mid, (1.0 - 1.0 / 0.75f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn projector_examples() {
        let n = 8;
        let f = FourierField::from_coeffs((0..=n).map(|k| c(k as f64 + 1.0, if k == 0 { 0.0 } else { -0.5 })).collect()).unwrap();
        assert_eq!(project(&f, &ProjectorSpec::sharp(n)).unwrap(), f);

        let top = FourierField::single_mode(n, n, c(1.0, 1.0));
        let p = project(&top, &ProjectorSpec::smooth(n)).unwrap();
        assert_eq!(p.coeff(n), c(0.0, 0.0));

        let quarter = FourierField::single_mode(n, n / 4, c(0.3, -0.2));
        assert_eq!(project(&quarter, &ProjectorSpec::smooth(n)).unwrap(), quarter);

        assert!(matches!(
            project(&f, &ProjectorSpec::sharp(n + 1)),
            Err(Error::CutoffTooLarge { .. })
        ));
    }

    #[test]
    fn grid_examples() {
        let zero = FourierField::<f64>::zeros(3);
        assert!(to_grid(&zero, 8).unwrap().iter().all(|&x| x == 0.0));

        let f = FourierField::<f64>::cosine(3, 1, 1.0);
        let samples = to_grid(&f, 8).unwrap();
        for (k, s) in samples.iter().enumerate() {
            let x = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
            assert_relative_eq!(*s, x.cos(), epsilon = 1e-14);
        }
        assert!(grid_mean(&samples).abs() < 1e-15);
        assert!(matches!(to_grid(&f, 6), Err(Error::Aliasing { .. })));
        assert!(matches!(from_grid(&samples[..6], 3), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn eval_matches_grid() {
        let f = FourierField::from_coeffs(vec![c(0.3, 0.0), c(0.1, -0.4), c(-0.2, 0.25)]).unwrap();
        let g = to_grid(&f, 16).unwrap();
        for (k, s) in g.iter().enumerate() {
            let x = 2.0 * std::f64::consts::PI * k as f64 / 16.0;
            assert_relative_eq!(*s, f.eval(x), epsilon = 1e-13);
        }
    }

    fn field_strategy(max_mode: usize) -> impl Strategy<Value = FourierField<f64>> {
        proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), max_mode + 1).prop_map(|v| {
            let coeffs = v
                .into_iter()
                .enumerate()
                .map(|(n, (re, im))| c(re, if n == 0 { 0.0 } else { im }))
                .collect();
            FourierField::from_coeffs(coeffs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn parseval(f in field_strategy(7), extra in 0usize..9) {
            let m = 2 * 7 + 1 + extra;
            let g = to_grid(&f, m).unwrap();
            let sq: Vec<f64> = g.iter().map(|x| x * x).collect();
            let lhs = sobolev_norm_sq(&f, SobolevIndex(0.0));
            prop_assert!((lhs - grid_mean(&sq)).abs() <= 1e-12 * lhs.max(1e-300));
        }

        #[test]
        fn round_trip(f in field_strategy(6), extra in 0usize..10) {
            let m = 13 + extra;
            let back = from_grid(&to_grid(&f, m).unwrap(), 6).unwrap();
            for (a, b) in f.coeffs().iter().zip(back.coeffs()) {
                prop_assert!((a - b).norm() < 1e-13);
            }
        }

        #[test]
        fn norm_monotone_in_alpha(f in field_strategy(5), a in -2.0f64..2.0, d in 0.0f64..2.0) {
            let lo = sobolev_norm_sq(&f, SobolevIndex(a));
            let hi = sobolev_norm_sq(&f, SobolevIndex(a + d));
            prop_assert!(lo <= hi * (1.0 + 1e-14));
        }

        #[test]
        fn projection_contracts(f in field_strategy(8), cutoff in 1usize..=8, smooth in any::<bool>(), a in -1.0f64..1.5) {
            let spec = if smooth { ProjectorSpec::smooth(cutoff) } else { ProjectorSpec::sharp(cutoff) };
            let p = project(&f, &spec).unwrap();
            prop_assert!(sobolev_norm_sq(&p, SobolevIndex(a)) <= sobolev_norm_sq(&f, SobolevIndex(a)) * (1.0 + 1e-14));
            if !smooth {
                prop_assert_eq!(project(&p, &spec).unwrap(), p.clone());
            }
            let sharp = project(&f, &ProjectorSpec::sharp(cutoff)).unwrap();
            let smooth_p = project(&f, &ProjectorSpec::smooth(cutoff)).unwrap();
            for n in 0..=cutoff / 2 {
                prop_assert_eq!(sharp.coeff(n), smooth_p.coeff(n));
            }
        }
    }
}
