//! Exact draws from the Gaussian reference field and an importance-weighted
//! representation of the truncated Gibbs measure.

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{Coupling, Nonlinearity};
use crate::rng::{normal, RngStream};
use crate::scalar::Scalar;
use crate::spectral::{bracket_sq, PairField};
use crate::stats::{pairwise_sum, Estimate};

/// Draws `(u, v)` with `û(n) = gₙ/⟨n⟩`, `v̂(n) = hₙ`, where `g₀, h₀` are
/// real standard normals and the real and imaginary parts of `gₙ, hₙ`
/// (`n ≥ 1`) are independent `N(0, 1/2)`.
pub fn sample_free_pair_with<T: Scalar, R: Rng + ?Sized>(max_mode: usize, rng: &mut R) -> PairField<T> {
    let mut p = PairField::zeros(max_mode);
    let half = T::lit(0.5).sqrt();
    let g0: T = normal(rng);
    let h0: T = normal(rng);
    p.u.coeffs_mut()[0] = Complex::new(g0, T::zero());
    p.v.coeffs_mut()[0] = Complex::new(h0, T::zero());
    for n in 1..=max_mode {
        let inv_bracket = T::one() / bracket_sq::<T>(n).sqrt();
        let (gr, gi): (T, T) = (normal(rng), normal(rng));
        let (hr, hi): (T, T) = (normal(rng), normal(rng));
        p.u.coeffs_mut()[n] = Complex::new(gr, gi) * (half * inv_bracket);
        p.v.coeffs_mut()[n] = Complex::new(hr, hi) * half;
    }
    p
}

pub fn sample_free_pair<T: Scalar>(max_mode: usize, stream: &RngStream) -> PairField<T> {
    sample_free_pair_with(max_mode, &mut stream.rng())
}

/// Log-density of the truncated Gibbs measure with respect to the Gaussian
/// reference: `(γ/β) · mean_x cos(β P_N u(x))`.
pub fn gibbs_log_weight<T: Scalar>(p: &PairField<T>, coupling: &Coupling<T>) -> Result<T> {
    let nl = Nonlinearity::new(p.max_mode(), *coupling)?;
    Ok(nl.potential(&p.u, &mut nl.buffers()))
}

/// Monte Carlo estimate of `∫ exp(p · log_weight) dμ` over `sample_count`
/// reference draws; `p = 1` gives the partition function.
pub fn estimate_partition<T: Scalar>(
    max_mode: usize,
    coupling: &Coupling<T>,
    p_exponent: f64,
    sample_count: usize,
    stream: &RngStream,
) -> Result<Estimate> {
    if sample_count < 2 {
        return Err(Error::InvalidParameter {
            name: "sample_count",
            reason: "need at least two samples".into(),
        });
    }
    if p_exponent < 1.0 {
        return Err(Error::InvalidParameter {
            name: "p_exponent",
            reason: format!("must be at least 1, got {p_exponent}"),
        });
    }
    let nl = Nonlinearity::new(max_mode, *coupling)?;
    if coupling.gamma == T::zero() {
        return Ok(Estimate { mean: 1.0, stderr: 0.0, count: sample_count });
    }
    let values: Vec<f64> = (0..sample_count as u64)
        .into_par_iter()
        .map_init(
            || nl.buffers(),
            |buf, i| {
                let pair: PairField<T> = sample_free_pair(max_mode, &stream.substream(i));
                (p_exponent * nl.potential(&pair.u, buf).as_f64()).exp()
            },
        )
        .collect();
    Ok(Estimate::from_samples(&values))
}

/// Self-normalized importance sample of the truncated Gibbs measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct GibbsEnsemble<T: Scalar> {
    pub states: Vec<PairField<T>>,
    pub log_weights: Vec<T>,
    pub coupling: Coupling<T>,
}

pub fn build_gibbs_ensemble<T: Scalar>(
    max_mode: usize,
    coupling: &Coupling<T>,
    sample_count: usize,
    stream: &RngStream,
) -> Result<GibbsEnsemble<T>> {
    if sample_count < 2 {
        return Err(Error::InvalidParameter {
            name: "sample_count",
            reason: "need at least two samples".into(),
        });
    }
    let nl = Nonlinearity::new(max_mode, *coupling)?;
    let (states, log_weights): (Vec<_>, Vec<_>) = (0..sample_count as u64)
        .into_par_iter()
        .map_init(
            || nl.buffers(),
            |buf, i| {
                let pair: PairField<T> = sample_free_pair(max_mode, &stream.substream(i));
                let w = nl.potential(&pair.u, buf);
                (pair, w)
            },
        )
        .unzip();
    Ok(GibbsEnsemble {
        states,
        log_weights,
        coupling: *coupling,
    })
}

impl<T: Scalar> GibbsEnsemble<T> {
    pub fn new(states: Vec<PairField<T>>, log_weights: Vec<T>, coupling: Coupling<T>) -> Result<Self> {
        if states.is_empty() || states.len() != log_weights.len() {
            return Err(Error::InvalidParameter {
                name: "ensemble",
                reason: format!("{} states with {} weights", states.len(), log_weights.len()),
            });
        }
        if log_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "log_weights",
                reason: "weights must be finite".into(),
            });
        }
        Ok(Self { states, log_weights, coupling })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn max_mode(&self) -> usize {
        self.states[0].max_mode()
    }

    /// `exp(log_weight - max log_weight)`.
    pub fn weights(&self) -> Vec<f64> {
        let top = self
            .log_weights
            .iter()
            .fold(f64::NEG_INFINITY, |a, w| a.max(w.as_f64()));
        self.log_weights
            .iter()
            .map(|w| (w.as_f64() - top).exp())
            .collect()
    }

    /// Weighted mean of an observable over the ensemble.
    pub fn weighted_mean(&self, values: &[f64]) -> Estimate {
        Estimate::weighted(values, &self.weights())
    }
}

/// `(Σw)² / Σw²` with max-shifted weights.
pub fn effective_sample_size<T: Scalar>(e: &GibbsEnsemble<T>) -> f64 {
    let w = e.weights();
    let s = pairwise_sum(&w);
    let sq: Vec<f64> = w.iter().map(|x| x * x).collect();
    s * s / pairwise_sum(&sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{ProjectorSpec, SobolevIndex, SobolevWeights};
    use crate::stats::variance_estimate;
    use approx::assert_relative_eq;

    fn coupling(beta: f64, gamma: f64, n: usize) -> Coupling<f64> {
        Coupling::new(beta, gamma, ProjectorSpec::smooth(n))
    }

    fn ensemble_with(log_weights: Vec<f64>) -> GibbsEnsemble<f64> {
        let states = vec![PairField::zeros(2); log_weights.len()];
        GibbsEnsemble::new(states, log_weights, coupling(1.0, 1.0, 2)).unwrap()
    }

    #[test]
    fn ess_examples() {
        assert_relative_eq!(effective_sample_size(&ensemble_with(vec![0.3; 7])), 7.0, epsilon = 1e-12);
        let dominant = effective_sample_size(&ensemble_with(vec![0.0, 0.0, 40.0]));
        assert!((dominant - 1.0).abs() < 1e-12);
        let e = std::f64::consts::E;
        assert_relative_eq!(
            effective_sample_size(&ensemble_with(vec![0.0, 1.0])),
            (1.0 + e).powi(2) / (1.0 + e * e),
            epsilon = 1e-14
        );
        assert_relative_eq!(effective_sample_size(&ensemble_with(vec![0.0, 1.0])), 1.648054, epsilon = 1e-6);
    }

    #[test]
    fn log_weight_examples() {
        let p = PairField::<f64>::zeros(4);
        assert_relative_eq!(gibbs_log_weight(&p, &coupling(2.0, 3.0, 4)).unwrap(), 1.5);
        let q: PairField<f64> = sample_free_pair(4, &RngStream::new(1, 1));
        assert_eq!(gibbs_log_weight(&q, &coupling(2.0, 0.0, 4)).unwrap(), 0.0);
        let beta = 0.7;
        let mut r = PairField::<f64>::zeros(4);
        r.u.coeffs_mut()[0] = Complex::new(std::f64::consts::PI / beta, 0.0);
        assert_relative_eq!(gibbs_log_weight(&r, &coupling(beta, 1.3, 4)).unwrap(), -1.3 / beta, epsilon = 1e-13);
        assert_eq!(gibbs_log_weight(&r, &coupling(0.0, 1.0, 4)), Err(Error::ZeroBeta));
    }

    #[test]
    fn partition_trivial_and_bounded() {
        let s = RngStream::new(3, 0);
        let z = estimate_partition(4, &coupling(1.0, 0.0, 4), 1.0, 10, &s).unwrap();
        assert_eq!((z.mean, z.stderr), (1.0, 0.0));
        let c = coupling(0.5, 0.8, 4);
        let z = estimate_partition(4, &c, 2.0, 500, &s).unwrap();
        let bound = (0.8f64 / 0.5 * 2.0).exp();
        assert!(z.mean <= bound && z.mean >= 1.0 / bound);
        assert!(estimate_partition(4, &c, 2.0, 1, &s).is_err());
    }

    #[test]
    fn free_field_moments() {
        let n = 6;
        let count = 100_000u64;
        let s = RngStream::new(11, 0);
        let draws: Vec<PairField<f64>> = (0..count).map(|i| sample_free_pair(n, &s.substream(i))).collect();
        let u0: Vec<f64> = draws.iter().map(|p| p.u.coeff(0).re).collect();
        let v0: Vec<f64> = draws.iter().map(|p| p.v.coeff(0).re).collect();
        assert!(variance_estimate(&u0).z_to(1.0) < 5.0);
        assert!(variance_estimate(&v0).z_to(1.0) < 5.0);
        for k in 0..=n {
            let re: Vec<f64> = draws.iter().map(|p| p.u.coeff(k).re).collect();
            assert!(Estimate::from_samples(&re).z_to(0.0) < 5.0);
        }
        // E|û(5)|² = 1/⟨5⟩² = 1/26
        let m5: Vec<f64> = draws.iter().map(|p| p.u.coeff(5).norm_sqr()).collect();
        assert!(Estimate::from_samples(&m5).z_to(1.0 / 26.0) < 5.0);
        // E‖u‖²_{H^α} = Σ_{|n|≤N} ⟨n⟩^{2α-2}
        let alpha = SobolevIndex(0.4);
        let w = SobolevWeights::new(n, alpha);
        let norms: Vec<f64> = draws.iter().map(|p| w.norm_sq(&p.u)).collect();
        let exact: f64 = (-(n as i64)..=n as i64).map(|k| (1.0 + (k * k) as f64).powf(alpha.0 - 1.0)).sum();
        assert!(Estimate::from_samples(&norms).z_to(exact) < 5.0);
    }

    #[test]
    fn gaussian_covariance_per_mode() {
        let n = 4;
        let ens = build_gibbs_ensemble(n, &coupling(1.0, 0.0, n), 100_000, &RngStream::new(5, 9)).unwrap();
        assert!(ens.weights().iter().all(|&w| w == 1.0));
        for k in 1..=n {
            let target = 0.5 / (1.0 + (k * k) as f64);
            let comps: [(Box<dyn Fn(&PairField<f64>) -> f64>, f64); 4] = [
                (Box::new(move |p| p.u.coeff(k).re), target),
                (Box::new(move |p| p.u.coeff(k).im), target),
                (Box::new(move |p| p.v.coeff(k).re), 0.5),
                (Box::new(move |p| p.v.coeff(k).im), 0.5),
            ];
            for (f, t) in comps.iter() {
                let xs: Vec<f64> = ens.states.iter().map(|p| f(p)).collect();
                assert!(variance_estimate(&xs).z_to(*t) < 5.0);
            }
            let cross: Vec<f64> = ens.states.iter().map(|p| p.u.coeff(k).re * p.v.coeff(k).re).collect();
            assert!(Estimate::from_samples(&cross).z_to(0.0) < 5.0);
        }
    }

    #[test]
    fn weights_bounded_and_ess_floor() {
        let (beta, gamma) = (0.8, 1.2);
        let ens = build_gibbs_ensemble(8, &coupling(beta, gamma, 8), 2000, &RngStream::new(2, 2)).unwrap();
        let bound = gamma / beta;
        assert!(ens.log_weights.iter().all(|w| w.abs() <= bound + 1e-12));
        let ess = effective_sample_size(&ens);
        assert!(ess / ens.len() as f64 >= (-4.0 * bound).exp());
    }

    #[test]
    fn ensemble_is_deterministic() {
        let c = coupling(1.0, 1.0, 4);
        let a = build_gibbs_ensemble(4, &c, 64, &RngStream::new(9, 1)).unwrap();
        let b = build_gibbs_ensemble(4, &c, 64, &RngStream::new(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weighted_cos_mean_matches_log_partition_derivative() {
        // d/dγ log Z_N(γ) = E_ρ[(1/β) mean cos(β P_N u)]; compare a central
        // difference of log Z (common random numbers) with the ensemble mean.
        let (n, beta, count) = (6, 1.0, 40_000);
        let stream = RngStream::new(21, 4);
        let g = 0.6;
        let dg = 0.05;
        let lz = |gamma: f64| {
            estimate_partition(n, &coupling(beta, gamma, n), 1.0, count, &stream)
                .unwrap()
                .mean
                .ln()
        };
        let fd = (lz(g + dg) - lz(g - dg)) / (2.0 * dg);
        let ens = build_gibbs_ensemble(n, &coupling(beta, g, n), count, &stream).unwrap();
        let nl = Nonlinearity::new(n, coupling(beta, g, n)).unwrap();
        let mut buf = nl.buffers();
        let obs: Vec<f64> = ens.states.iter().map(|p| nl.cos_average(&p.u, &mut buf) / beta).collect();
        let direct = ens.weighted_mean(&obs);
        assert!((direct.mean - fd).abs() < 5.0 * direct.stderr + 1e-3, "{} vs {}", direct.mean, fd);
    }
}
