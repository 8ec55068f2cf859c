//! Weighted distances on phase space and certified test observables.

use serde::{Deserialize, Serialize};

use crate::dynamics::linear::gauss_legendre;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{bracket_sq, PairField, PairNorm, SobolevIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Exponential weight in `ρ_λ`.
    pub lambda: f64,
    /// Scale in `d_δ = 1 ∧ ρ_λ/δ`.
    pub delta: f64,
    /// Index of `d_n = 1 ∧ n‖·‖`.
    pub n: u32,
    pub quad_points: usize,
    pub alpha_minus: SobolevIndex<f64>,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            lambda: 0.02,
            delta: 0.5,
            n: 1,
            quad_points: 16,
            alpha_minus: SobolevIndex::default(),
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("must be finite and non-negative, got {}", self.lambda));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta", format!("must be positive, got {}", self.delta));
        }
        if self.n < 1 {
            return bad("n", "must be at least 1".into());
        }
        if self.quad_points < 2 {
            return bad("quad_points", format!("need at least 2, got {}", self.quad_points));
        }
        Ok(())
    }
}

/// Which of the three distances a cloud is compared under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    DDelta,
    DN,
    DTilde,
}

/// Precomputed norm and quadrature rule for repeated distance evaluations.
#[derive(Debug, Clone)]
pub struct Metric<T> {
    pub params: MetricParams,
    norm: PairNorm<T>,
    /// Nodes mapped to `[0, 1]` with matching weights.
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl<T: Scalar> Metric<T> {
    pub fn new(max_mode: usize, params: MetricParams) -> Result<Self> {
        params.validate()?;
        let (x, w) = gauss_legendre::<f64>(params.quad_points);
        Ok(Self {
            params,
            norm: PairNorm::new(max_mode, SobolevIndex(T::lit(params.alpha_minus.0))),
            nodes: x.iter().map(|x| 0.5 * (x + 1.0)).collect(),
            weights: w.iter().map(|w| 0.5 * w).collect(),
        })
    }

    pub fn norm_sq(&self, p: &PairField<T>) -> f64 {
        self.norm.norm_sq(p).as_f64()
    }

    pub fn dist(&self, a: &PairField<T>, b: &PairField<T>) -> f64 {
        self.norm.dist(a, b).as_f64()
    }

    fn inner(&self, a: &PairField<T>, b: &PairField<T>) -> f64 {
        (self.norm.position.inner(&a.u, &b.u) + self.norm.momentum.inner(&a.v, &b.v)).as_f64()
    }

    /// `∫₀¹ exp(λ‖s p₁ + (1−s) p₂‖²) ds · ‖p₁ − p₂‖`: the weighted length of
    /// the straight segment, an upper bound for the path infimum `ρ_λ`.
    pub fn rho_lambda_upper(&self, p1: &PairField<T>, p2: &PairField<T>) -> f64 {
        let d = self.dist(p1, p2);
        if d == 0.0 {
            return 0.0;
        }
        let lam = self.params.lambda;
        if lam == 0.0 {
            return d;
        }
        let (a, b, c) = (self.norm_sq(p1), self.norm_sq(p2), self.inner(p1, p2));
        let integral: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| {
                let r = 1.0 - s;
                w * (lam * (s * s * a + r * r * b + 2.0 * s * r * c)).exp()
            })
            .sum();
        integral * d
    }

    pub fn d_delta(&self, p1: &PairField<T>, p2: &PairField<T>) -> f64 {
        (self.rho_lambda_upper(p1, p2) / self.params.delta).min(1.0)
    }

    pub fn d_n(&self, p1: &PairField<T>, p2: &PairField<T>) -> f64 {
        (self.params.n as f64 * self.dist(p1, p2)).min(1.0)
    }

    /// `sqrt(d_δ · (1 + e^{λ‖p₁‖²} + e^{λ‖p₂‖²}))`.
    pub fn d_tilde(&self, p1: &PairField<T>, p2: &PairField<T>) -> f64 {
        let lam = self.params.lambda;
        let spread = 1.0 + (lam * self.norm_sq(p1)).exp() + (lam * self.norm_sq(p2)).exp();
        (self.d_delta(p1, p2) * spread).sqrt()
    }

    pub fn ground(&self, kind: MetricKind, p1: &PairField<T>, p2: &PairField<T>) -> f64 {
        match kind {
            MetricKind::DDelta => self.d_delta(p1, p2),
            MetricKind::DN => self.d_n(p1, p2),
            MetricKind::DTilde => self.d_tilde(p1, p2),
        }
    }
}

pub fn rho_lambda_upper<T: Scalar>(p1: &PairField<T>, p2: &PairField<T>, mp: &MetricParams) -> Result<f64> {
    Ok(Metric::new(p1.max_mode(), *mp)?.rho_lambda_upper(p1, p2))
}

pub fn d_delta<T: Scalar>(p1: &PairField<T>, p2: &PairField<T>, mp: &MetricParams) -> Result<f64> {
    Ok(Metric::new(p1.max_mode(), *mp)?.d_delta(p1, p2))
}

pub fn d_n<T: Scalar>(p1: &PairField<T>, p2: &PairField<T>, mp: &MetricParams) -> Result<f64> {
    Ok(Metric::new(p1.max_mode(), *mp)?.d_n(p1, p2))
}

pub fn d_tilde<T: Scalar>(p1: &PairField<T>, p2: &PairField<T>, mp: &MetricParams) -> Result<f64> {
    Ok(Metric::new(p1.max_mode(), *mp)?.d_tilde(p1, p2))
}

/// Bounded observables with an analytic `d_n`-Lipschitz certificate:
/// `‖F‖_∞ ≤ ½` and `|F(x) − F(y)| ≤ n‖x − y‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservableKind {
    /// `½ tanh(c · Re û(mode))`.
    ModeCoordinate { mode: usize },
    /// `½ tanh(c · ‖p‖)`.
    Norm,
    /// A constant in `[−½, ½]`.
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzObservable {
    pub kind: ObservableKind,
    /// The `n` of the metric `d_n` the certificate refers to.
    pub n: u32,
    pub alpha_minus: SobolevIndex<f64>,
}

impl LipschitzObservable {
    pub fn new(kind: ObservableKind, n: u32) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "must be at least 1".into(),
            });
        }
        if let ObservableKind::Constant { value } = kind {
            if !(value.abs() <= 0.5) {
                return Err(Error::InvalidParameter {
                    name: "value",
                    reason: format!("constant observable must lie in [-1/2, 1/2], got {value}"),
                });
            }
        }
        Ok(Self {
            kind,
            n,
            alpha_minus: SobolevIndex::default(),
        })
    }

    /// The three observables used by the smoothing experiment.
    pub fn standard_set(n: u32) -> [Self; 3] {
        [
            Self::new(ObservableKind::ModeCoordinate { mode: 1 }, n).unwrap(),
            Self::new(ObservableKind::Norm, n).unwrap(),
            Self::new(ObservableKind::ModeCoordinate { mode: 0 }, n).unwrap(),
        ]
    }

    pub fn label(&self) -> String {
        match self.kind {
            ObservableKind::ModeCoordinate { mode } => format!("tanh_re_u{mode}"),
            ObservableKind::Norm => "tanh_norm".into(),
            ObservableKind::Constant { .. } => "constant".into(),
        }
    }

    /// Slope `c` of the inner function. `|Re Δû(m)| ≤ ‖Δ‖ / sqrt(m_m ⟨m⟩^{2α})`
    /// with multiplicity `m_m = 2` for `m ≥ 1` (conjugate mode), and `tanh`
    /// is 1-Lipschitz, so `c = 2n · sqrt(m_m ⟨m⟩^{2α})` gives `[F] ≤ n`.
    pub fn scale(&self) -> f64 {
        let n = self.n as f64;
        match self.kind {
            ObservableKind::ModeCoordinate { mode } => {
                let mult = if mode == 0 { 1.0 } else { 2.0 };
                2.0 * n * (mult * bracket_sq::<f64>(mode).powf(self.alpha_minus.0)).sqrt()
            }
            ObservableKind::Norm => 2.0 * n,
            ObservableKind::Constant { .. } => 0.0,
        }
    }

    pub fn eval<T: Scalar>(&self, p: &PairField<T>) -> f64 {
        let c = self.scale();
        match self.kind {
            ObservableKind::ModeCoordinate { mode } => 0.5 * (c * p.u.coeff(mode).re.as_f64()).tanh(),
            ObservableKind::Norm => {
                let norm = PairNorm::new(p.max_mode(), SobolevIndex(T::lit(self.alpha_minus.0)));
                0.5 * (c * norm.norm(p).as_f64()).tanh()
            }
            ObservableKind::Constant { value } => value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::sampling::sample_free_pair;
    use crate::spectral::FourierField;
    use approx::assert_relative_eq;

    fn cos_pair(n: usize) -> PairField<f64> {
        PairField::new(FourierField::cosine(n, 1, 1.0), FourierField::zeros(n)).unwrap()
    }

    fn params(lambda: f64) -> MetricParams {
        MetricParams { lambda, ..MetricParams::default() }
    }

    #[test]
    fn rho_examples() {
        let z = PairField::<f64>::zeros(4);
        let c = cos_pair(4);
        assert_eq!(rho_lambda_upper(&c, &c, &params(0.1)).unwrap(), 0.0);
        let norm = PairNorm::new(4, SobolevIndex(0.4)).norm(&c);
        assert_eq!(rho_lambda_upper(&z, &c, &params(0.0)).unwrap(), norm);
        assert_relative_eq!(norm, 0.8123, epsilon = 1e-4);
        // Composite midpoint oracle on 10³ panels.
        let a = norm * norm;
        let oracle: f64 = (0..1000).map(|i| ((i as f64 + 0.5) / 1000.0, 1e-3)).map(|(s, h)| h * (0.1 * s * s * a).exp()).sum::<f64>() * norm;
        let rho = rho_lambda_upper(&z, &c, &params(0.1)).unwrap();
        assert_relative_eq!(rho, oracle, epsilon = 1e-6);
        assert_relative_eq!(rho, 0.8305, epsilon = 1e-4);
        // Symmetric in the endpoints.
        assert_relative_eq!(rho, rho_lambda_upper(&c, &z, &params(0.1)).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn saturation_and_zero() {
        let m = Metric::<f64>::new(4, params(0.02)).unwrap();
        let a: PairField<f64> = sample_free_pair(4, &RngStream::new(1, 1));
        assert_eq!((m.d_delta(&a, &a), m.d_n(&a, &a), m.d_tilde(&a, &a)), (0.0, 0.0, 0.0));
        let far = a.scaled(50.0);
        assert_eq!(m.d_delta(&a, &far), 1.0);
        assert_eq!(m.d_n(&a, &far), 1.0);
    }

    #[test]
    fn dn_monotone_and_separating() {
        let a: PairField<f64> = sample_free_pair(4, &RngStream::new(2, 1));
        let b = a.add(&a.scaled(1e-4));
        let mut prev = 0.0;
        for n in [1, 2, 5, 100, 10_000, 10_000_000] {
            let d = d_n(&a, &b, &MetricParams { n, ..MetricParams::default() }).unwrap();
            assert!(d >= prev);
            prev = d;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn metric_axioms_pointwise() {
        let m = Metric::<f64>::new(5, MetricParams { n: 3, ..params(0.05) }).unwrap();
        let s = RngStream::new(3, 3);
        for i in 0..200u64 {
            let a: PairField<f64> = sample_free_pair(5, &s.substream(3 * i));
            let b: PairField<f64> = sample_free_pair::<f64>(5, &s.substream(3 * i + 1)).scaled(0.1);
            let c: PairField<f64> = sample_free_pair::<f64>(5, &s.substream(3 * i + 2)).scaled(0.3);
            for kind in [MetricKind::DDelta, MetricKind::DN] {
                let (ab, ba) = (m.ground(kind, &a, &b), m.ground(kind, &b, &a));
                assert!((ab - ba).abs() < 1e-14 && (0.0..=1.0).contains(&ab) && ab > 0.0);
            }
            assert!(m.d_n(&a, &c) <= m.d_n(&a, &b) + m.d_n(&b, &c) + 1e-15);
        }
    }

    #[test]
    fn observable_certificates() {
        let s = RngStream::new(5, 5);
        for n in [1u32, 4] {
            let metric = Metric::<f64>::new(6, MetricParams { n, ..params(0.0) }).unwrap();
            for f in LipschitzObservable::standard_set(n) {
                for i in 0..2000u64 {
                    let a: PairField<f64> = sample_free_pair::<f64>(6, &s.substream(2 * i)).scaled(0.3);
                    let mut b = a.clone();
                    // Push along the observable's most sensitive direction.
                    match f.kind {
                        ObservableKind::ModeCoordinate { mode } => {
                            b.u.coeffs_mut()[mode].re += 1e-3 * (i as f64 % 7.0 - 3.0);
                        }
                        _ => b = a.scaled(1.0 + 1e-3 * (i as f64 % 5.0)),
                    }
                    let (fa, fb) = (f.eval(&a), f.eval(&b));
                    assert!(fa.abs() <= 0.5 && fb.abs() <= 0.5);
                    assert!((fa - fb).abs() <= metric.d_n(&a, &b) * (1.0 + 1e-12) + 1e-15);
                }
            }
        }
        // The bound is attained to first order at the origin along the mode.
        let f = LipschitzObservable::new(ObservableKind::ModeCoordinate { mode: 1 }, 2).unwrap();
        let metric = Metric::<f64>::new(3, MetricParams { n: 2, ..params(0.0) }).unwrap();
        let z = PairField::<f64>::zeros(3);
        let mut e = z.clone();
        e.u.coeffs_mut()[1].re = 1e-7;
        assert_relative_eq!((f.eval(&e) - f.eval(&z)) / metric.d_n(&e, &z), 1.0, epsilon = 1e-6);
        assert!(LipschitzObservable::new(ObservableKind::Constant { value: 0.7 }, 1).is_err());
    }
}
