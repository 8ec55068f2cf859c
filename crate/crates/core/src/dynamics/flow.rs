//! Strang splitting for the truncated nonlinear flow: half-kick by the
//! sine force, exact linear-plus-noise step, half-kick.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dynamics::linear::{LinearPropagator, LinearStep};
use crate::dynamics::noise::{ModeNoise, NoisePath};
use crate::error::{Error, Result};
use crate::nonlinearity::{Coupling, NonlinearBuffers, Nonlinearity};
use crate::scalar::Scalar;
use crate::spectral::{sobolev_norm_sq, FourierField, PairField, ProjectorSpec, SobolevIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig<T> {
    pub max_mode: usize,
    pub coupling: Coupling<T>,
    pub dt: T,
    /// Damping coefficient; the noise amplitude follows as `√(2·damping)`.
    /// Only `1` is the model proper, `0` gives the conservative flow used
    /// for energy checks.
    pub damping: T,
}

impl<T: Scalar> FlowConfig<T> {
    pub const DEFAULT_DT: f64 = 5e-3;

    /// Smooth projector at cutoff `max_mode`, grid factor 8, unit damping.
    pub fn new(max_mode: usize, beta: T, gamma: T, dt: T) -> Self {
        Self {
            max_mode,
            coupling: Coupling::new(beta, gamma, ProjectorSpec::smooth(max_mode)),
            dt,
            damping: T::one(),
        }
    }

    pub fn with_projector(mut self, projector: ProjectorSpec) -> Self {
        self.coupling.projector = projector;
        self
    }

    pub fn with_grid_factor(mut self, grid_factor: usize) -> Self {
        self.coupling.grid_factor = grid_factor;
        self
    }

    pub fn with_damping(mut self, damping: T) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_dt(mut self, dt: T) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_gamma(mut self, gamma: T) -> Self {
        self.coupling.gamma = gamma;
        self
    }

    pub fn beta(&self) -> T {
        self.coupling.beta
    }

    pub fn gamma(&self) -> T {
        self.coupling.gamma
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.max_mode < 1 {
            return bad("max_mode", "must be at least 1".into());
        }
        if self.coupling.grid_factor < 4 {
            return bad("grid_factor", format!("must be at least 4, got {}", self.coupling.grid_factor));
        }
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return bad("dt", format!("must be positive and finite, got {}", self.dt));
        }
        if !(self.damping >= T::zero() && self.damping < T::lit(2.0)) {
            return bad("damping", format!("must lie in [0, 2), got {}", self.damping));
        }
        if !(self.coupling.beta.is_finite() && self.coupling.gamma.is_finite()) {
            return bad("beta", "couplings must be finite".into());
        }
        if self.coupling.gamma != T::zero() && self.coupling.beta == T::zero() {
            return Err(Error::ZeroBeta);
        }
        if self.coupling.projector.cutoff > self.max_mode {
            return Err(Error::CutoffTooLarge {
                cutoff: self.coupling.projector.cutoff,
                max_mode: self.max_mode,
            });
        }
        Ok(())
    }
}

/// Precomputed integrator for one configuration; immutable and shareable.
#[derive(Debug, Clone)]
pub struct Flow<T: Scalar> {
    cfg: FlowConfig<T>,
    linear: LinearPropagator<T>,
    nonlinearity: Option<Nonlinearity<T>>,
}

/// Per-trajectory scratch space.
#[derive(Debug, Clone)]
pub struct FlowBuffers<T: Scalar> {
    pub(crate) nl: Option<NonlinearBuffers<T>>,
    pub(crate) force: FourierField<T>,
}

impl<T: Scalar> FlowBuffers<T> {
    /// Force at the current state, valid after [`Flow::prime`] or a step.
    pub fn force(&self) -> &FourierField<T> {
        &self.force
    }
}

#[inline]
fn advance_mode<T: Scalar>(step: &LinearStep<T>, u: &mut Complex<T>, v: &mut Complex<T>, noise: &ModeNoise<T>) {
    let m = &step.mean.0;
    let eta = step.convolution(noise.db, noise.aux);
    let (a, b) = (*u, *v);
    *u = a * m[0][0] + b * m[0][1] + eta[0];
    *v = a * m[1][0] + b * m[1][1] + eta[1];
}

#[inline]
fn advance_mode_mean<T: Scalar>(step: &LinearStep<T>, u: &mut Complex<T>, v: &mut Complex<T>) {
    let m = &step.mean.0;
    let (a, b) = (*u, *v);
    *u = a * m[0][0] + b * m[0][1];
    *v = a * m[1][0] + b * m[1][1];
}

impl<T: Scalar> Flow<T> {
    pub fn new(cfg: FlowConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let linear = LinearPropagator::new(cfg.max_mode, cfg.dt, cfg.damping)?;
        let nonlinearity = if cfg.coupling.gamma == T::zero() {
            None
        } else {
            Some(Nonlinearity::new(cfg.max_mode, cfg.coupling)?)
        };
        Ok(Self { cfg, linear, nonlinearity })
    }

    pub fn config(&self) -> &FlowConfig<T> {
        &self.cfg
    }

    pub fn linear(&self) -> &LinearPropagator<T> {
        &self.linear
    }

    pub fn nonlinearity(&self) -> Option<&Nonlinearity<T>> {
        self.nonlinearity.as_ref()
    }

    pub fn buffers(&self) -> FlowBuffers<T> {
        FlowBuffers {
            nl: self.nonlinearity.as_ref().map(|n| n.buffers()),
            force: FourierField::zeros(self.cfg.max_mode),
        }
    }

    /// Number of steps covering `t`; refuses a trailing partial step.
    pub fn steps_for(&self, t: T) -> Result<usize> {
        steps_for(t, self.cfg.dt)
    }

    pub fn check_noise(&self, noise: &NoisePath<T>, start: usize, steps: usize) -> Result<()> {
        if noise.max_mode() != self.cfg.max_mode {
            return Err(Error::ModeMismatch {
                left: self.cfg.max_mode,
                right: noise.max_mode(),
            });
        }
        let rel = ((noise.dt() - self.cfg.dt) / self.cfg.dt).abs();
        if rel > T::lit(1e-12) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("noise path step {} differs from flow step {}", noise.dt(), self.cfg.dt),
            });
        }
        if start + steps > noise.steps() {
            return Err(Error::NoiseTooShort {
                needed: start + steps,
                available: noise.steps(),
            });
        }
        Ok(())
    }

    fn check_state(&self, p: &PairField<T>) -> Result<()> {
        if p.max_mode() != self.cfg.max_mode {
            return Err(Error::ModeMismatch {
                left: self.cfg.max_mode,
                right: p.max_mode(),
            });
        }
        Ok(())
    }

    /// `γ P_N sin(β P_N u)` into `out` (zero when `γ = 0`).
    pub fn force_into(&self, u: &FourierField<T>, out: &mut FourierField<T>, buf: &mut FlowBuffers<T>) {
        match (&self.nonlinearity, buf.nl.as_mut()) {
            (Some(nl), Some(b)) => nl.force(u, out, b),
            _ => out.coeffs_mut().iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero())),
        }
    }

    /// Evaluates and caches the force at `u`.
    pub fn prime(&self, u: &FourierField<T>, buf: &mut FlowBuffers<T>) {
        if let (Some(nl), Some(b)) = (&self.nonlinearity, buf.nl.as_mut()) {
            nl.force(u, &mut buf.force, b);
        }
    }

    /// `v ← v − (τ/2)·force`.
    #[inline]
    pub fn half_kick(&self, v: &mut FourierField<T>, force: &FourierField<T>) {
        v.axpy(-self.cfg.dt * T::lit(0.5), force);
    }

    /// Exact linear-plus-noise step on every mode.
    pub fn linear_step(&self, p: &mut PairField<T>, noise: &[ModeNoise<T>]) {
        let (u, v) = (p.u.coeffs_mut(), p.v.coeffs_mut());
        for (n, step) in self.linear.steps.iter().enumerate() {
            advance_mode(step, &mut u[n], &mut v[n], &noise[n]);
        }
    }

    /// Noise-free linear step.
    pub fn mean_step(&self, p: &mut PairField<T>) {
        let (u, v) = (p.u.coeffs_mut(), p.v.coeffs_mut());
        for (n, step) in self.linear.steps.iter().enumerate() {
            advance_mode_mean(step, &mut u[n], &mut v[n]);
        }
    }

    /// One Strang step, assuming `buf.force` holds the force at `p.u`;
    /// on return it holds the force at the new position.
    pub fn step_primed(&self, p: &mut PairField<T>, noise: &[ModeNoise<T>], buf: &mut FlowBuffers<T>) {
        if self.nonlinearity.is_none() {
            self.linear_step(p, noise);
            return;
        }
        self.half_kick(&mut p.v, &buf.force);
        self.linear_step(p, noise);
        self.prime(&p.u, buf);
        self.half_kick(&mut p.v, &buf.force);
    }

    /// Advances `p` over `steps` steps of `noise` beginning at `start`,
    /// calling `observe(k, p)` after every completed step `k` (1-based).
    pub fn advance<F>(
        &self,
        p: &mut PairField<T>,
        noise: &NoisePath<T>,
        start: usize,
        steps: usize,
        buf: &mut FlowBuffers<T>,
        mut observe: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &PairField<T>),
    {
        self.check_state(p)?;
        self.check_noise(noise, start, steps)?;
        self.prime(&p.u, buf);
        for k in 0..steps {
            self.step_primed(p, noise.step(start + k), buf);
            if !p.is_finite() {
                return Err(Error::BlowUp { step: start + k + 1 });
            }
            observe(k + 1, p);
        }
        Ok(())
    }

    /// `Φ_t^N(p0, ξ)`.
    pub fn run(&self, p0: &PairField<T>, noise: &NoisePath<T>, t: T) -> Result<PairField<T>> {
        let steps = self.steps_for(t)?;
        let mut p = p0.clone();
        let mut buf = self.buffers();
        self.advance(&mut p, noise, 0, steps, &mut buf, |_, _| {})?;
        Ok(p)
    }

    /// States at `0, every·dt, 2·every·dt, …` up to `t`.
    pub fn record(&self, p0: &PairField<T>, noise: &NoisePath<T>, t: T, every: usize) -> Result<TrajectoryRecord<T>> {
        let steps = self.steps_for(t)?;
        let every = every.max(1);
        let dt = self.cfg.dt.as_f64();
        let mut rec = TrajectoryRecord {
            times: vec![0.0],
            states: vec![p0.clone()],
            config: self.cfg,
        };
        let mut p = p0.clone();
        let mut buf = self.buffers();
        self.advance(&mut p, noise, 0, steps, &mut buf, |k, q| {
            if k % every == 0 {
                rec.times.push(k as f64 * dt);
                rec.states.push(q.clone());
            }
        })?;
        Ok(rec)
    }

    /// Hamiltonian with the flow's own truncation of the potential.
    pub fn hamiltonian(&self, p: &PairField<T>, buf: &mut FlowBuffers<T>) -> T {
        let pot = match (&self.nonlinearity, buf.nl.as_mut()) {
            (Some(nl), Some(b)) => nl.potential(&p.u, b),
            _ => T::zero(),
        };
        quadratic_energy(p) - pot
    }

    /// Da Prato–Debussche split: integrates the remainder `w = u_N − Ψ`
    /// driven by the linear solution `Ψ` from `p0` on the same noise.
    pub fn remainder(&self, p0: &PairField<T>, noise: &NoisePath<T>, t: T, every: usize) -> Result<RemainderRun<T>> {
        let steps = self.steps_for(t)?;
        self.check_state(p0)?;
        self.check_noise(noise, 0, steps)?;
        let every = every.max(1);
        let dt = self.cfg.dt.as_f64();
        let mut psi = p0.clone();
        let mut w = PairField::zeros(self.cfg.max_mode);
        let mut buf = self.buffers();
        let mut total = FourierField::zeros(self.cfg.max_mode);
        let h1 = SobolevIndex(T::one());
        let mut times = vec![0.0];
        let mut energy = vec![T::zero()];
        let force_at = |w: &PairField<T>, psi: &PairField<T>, total: &mut FourierField<T>, buf: &mut FlowBuffers<T>| {
            for ((t, a), b) in total.coeffs_mut().iter_mut().zip(w.u.coeffs()).zip(psi.u.coeffs()) {
                *t = a + b;
            }
            self.prime(total, buf);
        };
        let nonlinear = self.nonlinearity.is_some();
        if nonlinear {
            force_at(&w, &psi, &mut total, &mut buf);
        }
        for k in 0..steps {
            if nonlinear {
                self.half_kick(&mut w.v, &buf.force);
            }
            self.linear_step(&mut psi, noise.step(k));
            self.mean_step(&mut w);
            if nonlinear {
                force_at(&w, &psi, &mut total, &mut buf);
                self.half_kick(&mut w.v, &buf.force);
            }
            if !w.is_finite() || !psi.is_finite() {
                return Err(Error::BlowUp { step: k + 1 });
            }
            if (k + 1) % every == 0 {
                times.push((k + 1) as f64 * dt);
                energy.push(crate::spectral::pair_norm_sq(&w, h1));
            }
        }
        Ok(RemainderRun {
            remainder: w,
            linear: psi,
            times,
            h1_norm_sq: energy,
        })
    }
}

fn quadratic_energy<T: Scalar>(p: &PairField<T>) -> T {
    let half = T::lit(0.5);
    half * (sobolev_norm_sq(&p.u, SobolevIndex(T::one())) + sobolev_norm_sq(&p.v, SobolevIndex(T::zero())))
}

pub(crate) fn steps_for<T: Scalar>(t: T, dt: T) -> Result<usize> {
    if !(t >= T::zero()) {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: format!("must be non-negative, got {t}"),
        });
    }
    let ratio = (t / dt).as_f64();
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::PartialStep { t: t.as_f64(), dt: dt.as_f64() });
    }
    Ok(n as usize)
}

/// Output of [`Flow::remainder`].
#[derive(Debug, Clone)]
pub struct RemainderRun<T: Scalar> {
    pub remainder: PairField<T>,
    pub linear: PairField<T>,
    pub times: Vec<f64>,
    /// `‖w(t)‖²` in `H¹ × L²`.
    pub h1_norm_sq: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord<T: Scalar> {
    pub times: Vec<f64>,
    pub states: Vec<PairField<T>>,
    pub config: FlowConfig<T>,
}

/// Exact linear flow (no nonlinearity, unit damping) driven by `noise`.
pub fn linear_flow<T: Scalar>(p0: &PairField<T>, noise: &NoisePath<T>, t: T) -> Result<PairField<T>> {
    let cfg = FlowConfig::new(p0.max_mode(), T::one(), T::zero(), noise.dt());
    Flow::new(cfg)?.run(p0, noise, t)
}

pub fn nonlinear_flow<T: Scalar>(p0: &PairField<T>, noise: &NoisePath<T>, cfg: &FlowConfig<T>, t: T) -> Result<PairField<T>> {
    Flow::new(*cfg)?.run(p0, noise, t)
}

pub fn remainder_flow<T: Scalar>(noise: &NoisePath<T>, p0: &PairField<T>, cfg: &FlowConfig<T>, t: T) -> Result<RemainderRun<T>> {
    Flow::new(*cfg)?.remainder(p0, noise, t, 1)
}

/// `½(‖∂ₓu‖² + ‖v‖² + ‖u‖²) − (γ/β)·mean cos(βu)` with the sharp projector
/// at the field's own cutoff.
pub fn hamiltonian<T: Scalar>(p: &PairField<T>, beta: T, gamma: T) -> Result<T> {
    if beta == T::zero() {
        return Err(Error::ZeroBeta);
    }
    let n = p.max_mode();
    let nl = Nonlinearity::new(n, Coupling::new(beta, gamma, ProjectorSpec::sharp(n)))?;
    let mut buf = nl.buffers();
    Ok(quadratic_energy(p) - nl.potential(&p.u, &mut buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::linear::homogeneous_matrix;
    use crate::rng::RngStream;
    use crate::sampling::sample_free_pair;
    use crate::spectral::{pair_norm_sq, PairNorm};
    use crate::stats::Estimate;
    use approx::assert_relative_eq;
    use rayon::prelude::*;

    fn noise(seed: u64, dt: f64, steps: usize, n: usize) -> NoisePath<f64> {
        NoisePath::generate(&RngStream::new(seed, 0), dt, steps, n).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(FlowConfig::new(8, 1.0, 1.0, 0.01).validate().is_ok());
        assert!(FlowConfig::new(8, 1.0, 1.0, 0.0).validate().is_err());
        assert!(FlowConfig::new(8, 1.0, 1.0, 0.01).with_grid_factor(3).validate().is_err());
        assert_eq!(FlowConfig::new(8, 0.0, 1.0, 0.01).validate().unwrap_err(), Error::ZeroBeta);
        assert!(FlowConfig::new(8, 0.0, 0.0, 0.01).validate().is_ok());
    }

    #[test]
    fn partial_steps_refused() {
        assert_eq!(steps_for(1.0, 0.1).unwrap(), 10);
        assert_eq!(steps_for(10.0, 5e-3).unwrap(), 2000);
        assert!(matches!(steps_for(1.05, 0.1), Err(Error::PartialStep { .. })));
    }

    #[test]
    fn zero_noise_is_homogeneous_propagation() {
        let n = 4;
        let p0 = sample_free_pair::<f64>(n, &RngStream::new(1, 1));
        let z = NoisePath::zero(0.01, 100, n).unwrap();
        let out = linear_flow(&p0, &z, 1.0).unwrap();
        for k in 0..=n {
            let m = homogeneous_matrix::<f64>(k, 1.0);
            let u = p0.u.coeff(k) * m.get(0, 0) + p0.v.coeff(k) * m.get(0, 1);
            let v = p0.u.coeff(k) * m.get(1, 0) + p0.v.coeff(k) * m.get(1, 1);
            assert!((u - out.u.coeff(k)).norm() < 1e-12 && (v - out.v.coeff(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn gamma_zero_matches_linear_flow_bitwise() {
        let n = 6;
        let p0 = sample_free_pair::<f64>(n, &RngStream::new(2, 1));
        let path = noise(4, 0.01, 200, n);
        let cfg = FlowConfig::new(n, 1.0, 0.0, 0.01);
        assert_eq!(nonlinear_flow(&p0, &path, &cfg, 2.0).unwrap(), linear_flow(&p0, &path, 2.0).unwrap());
    }

    #[test]
    fn cocycle_property_is_bitwise() {
        let n = 8;
        let cfg = FlowConfig::new(n, 1.0, 1.0, 0.01);
        let flow = Flow::new(cfg).unwrap();
        let p0 = sample_free_pair::<f64>(n, &RngStream::new(5, 1));
        let path = noise(6, 0.01, 300, n);
        let whole = flow.run(&p0, &path, 3.0).unwrap();
        let mid = flow.run(&p0, &path.slice(0, 120).unwrap(), 1.2).unwrap();
        let split = flow.run(&mid, &path.slice(120, 180).unwrap(), 1.8).unwrap();
        assert_eq!(whole, split);
        assert_eq!(whole, flow.run(&p0, &path, 3.0).unwrap());
    }

    #[test]
    fn blow_up_reports_step() {
        let n = 4;
        let flow = Flow::new(FlowConfig::new(n, 1.0, 1.0, 0.01)).unwrap();
        let mut p0 = PairField::zeros(n);
        p0.v.coeffs_mut()[1] = Complex::new(f64::INFINITY, 0.0);
        let err = flow.run(&p0, &noise(1, 0.01, 10, n), 0.1).unwrap_err();
        assert_eq!(err, Error::BlowUp { step: 1 });
    }

    fn zero_mode_velocity_variance(t: f64, dt: f64) -> Estimate {
        let n = 2;
        let steps = (t / dt).round() as usize;
        let samples: Vec<f64> = (0..20_000u64)
            .into_par_iter()
            .map(|i| {
                let path = NoisePath::generate(&RngStream::new(11, i), dt, steps, n).unwrap();
                linear_flow(&PairField::zeros(n), &path, t).unwrap().v.coeff(0).re.powi(2)
            })
            .collect();
        Estimate::from_samples(&samples)
    }

    #[test]
    fn zero_mode_variance_from_rest() {
        // The full wave flow from rest has Var v̂₀(t) = Q₂₂(t), which relaxes
        // to the white-noise value 1; the velocity-only OU part would give
        // 1 − e^{−2t} = 0.864665 at t = 1.
        assert_relative_eq!(1.0 - (-2.0f64).exp(), 0.864665, epsilon = 1e-6);
        let q22 = crate::dynamics::linear::noise_law_quadrature::<f64>(0, 1.0, 1.0, 64).q.get(1, 1);
        let est = zero_mode_velocity_variance(1.0, 0.1);
        assert!(est.z_to(q22) < 5.0, "{est:?} vs {q22}");
        let est = zero_mode_velocity_variance(5.0, 0.25);
        assert!(est.z_to(1.0 - (-10.0f64).exp()) < 5.0, "{est:?}");
    }

    #[test]
    fn hamiltonian_examples() {
        let n = 4;
        assert_relative_eq!(hamiltonian(&PairField::<f64>::zeros(n), 2.0, 3.0).unwrap(), -1.5, epsilon = 1e-14);
        let p = PairField::new(FourierField::cosine(n, 1, 1.0), FourierField::zeros(n)).unwrap();
        assert_relative_eq!(hamiltonian(&p, 1.0, 0.0).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(hamiltonian(&p, 0.0, 1.0).unwrap_err(), Error::ZeroBeta);
    }

    fn max_energy_drift(dt: f64) -> f64 {
        let n = 8;
        let cfg = FlowConfig::new(n, 1.0, 1.0, dt).with_damping(0.0);
        let flow = Flow::new(cfg).unwrap();
        let p0 = sample_free_pair::<f64>(n, &RngStream::new(21, 0));
        let steps = flow.steps_for(10.0).unwrap();
        let path = NoisePath::zero(dt, steps, n).unwrap();
        let mut buf = flow.buffers();
        let h0 = flow.hamiltonian(&p0, &mut buf);
        let mut p = p0.clone();
        let mut worst = 0.0f64;
        let mut hb = flow.buffers();
        flow.advance(&mut p, &path, 0, steps, &mut buf, |_, q| {
            worst = worst.max((flow.hamiltonian(q, &mut hb) - h0).abs());
        })
        .unwrap();
        worst
    }

    #[test]
    fn conservative_splitting_energy_error_is_second_order() {
        let (a, b, c) = (max_energy_drift(0.02), max_energy_drift(0.01), max_energy_drift(0.005));
        assert!(a / b > 3.0 && b / c > 3.0, "{a} {b} {c}");
        assert!(c < 1e-3);
    }

    #[test]
    fn deterministic_damped_run_stays_near_linear_bound() {
        let n = 8;
        let gamma = 0.01;
        let flow = Flow::new(FlowConfig::new(n, 1.0, gamma, 0.01)).unwrap();
        let p0 = sample_free_pair::<f64>(n, &RngStream::new(3, 3));
        let norm = PairNorm::new(n, SobolevIndex::default());
        let z = NoisePath::zero(0.01, 1000, n).unwrap();
        let rec = flow.record(&p0, &z, 10.0, 10).unwrap();
        for (t, s) in rec.times.iter().zip(&rec.states) {
            // ‖S(t)‖ ≤ 2e^{−t/2}; the forcing contributes at most |γ|·∫ e^{−s/2}·2 ds
            let bound = 2.0 * (-t / 2.0).exp() * norm.norm(&p0) + 8.0 * gamma;
            assert!(norm.norm(s) <= bound, "t={t}");
        }
        assert!(rec.times.windows(2).all(|w| w[1] > w[0]) && rec.times[0] == 0.0);
    }

    #[test]
    fn remainder_decomposition_and_bound() {
        let n = 8;
        let cfg = FlowConfig::new(n, 1.0, 1.0, 0.01);
        let p0 = sample_free_pair::<f64>(n, &RngStream::new(8, 8));
        let path = noise(9, 0.01, 5000, n);
        let rem = remainder_flow(&path, &p0, &cfg, 50.0).unwrap();
        let full = nonlinear_flow(&p0, &path, &cfg, 50.0).unwrap();
        assert!(rem.remainder.add(&rem.linear).max_abs_diff(&full) < 1e-8);
        let sup = rem.h1_norm_sq.iter().cloned().fold(0.0, f64::max);
        assert!(sup < 10.0, "sup ‖w‖² = {sup}");

        let free = remainder_flow(&path, &p0, &FlowConfig::new(n, 1.0, 0.0, 0.01), 5.0).unwrap();
        assert_eq!(free.remainder, PairField::zeros(n));
    }

    #[test]
    fn gamma_continuity() {
        let n = 8;
        let p0 = sample_free_pair::<f64>(n, &RngStream::new(4, 4));
        let path = noise(10, 0.01, 1000, n);
        let norm = PairNorm::new(n, SobolevIndex::default());
        let a = nonlinear_flow(&p0, &path, &FlowConfig::new(n, 1.0, 0.5, 0.01), 10.0).unwrap();
        let b = nonlinear_flow(&p0, &path, &FlowConfig::new(n, 1.0, 0.51, 0.01), 10.0).unwrap();
        let c = nonlinear_flow(&p0, &path, &FlowConfig::new(n, 1.0, 0.52, 0.01), 10.0).unwrap();
        let (d1, d2) = (norm.dist(&a, &b), norm.dist(&a, &c));
        assert!(d1 <= 0.01 * 10.0 * 2.0);
        assert!((d2 / d1 - 2.0).abs() < 0.2);
        let _ = pair_norm_sq(&a, SobolevIndex::default());
    }

    #[test]
    fn generic_over_f32() {
        let n = 4;
        let flow = Flow::new(FlowConfig::<f32>::new(n, 1.0, 1.0, 0.01)).unwrap();
        let path = NoisePath::<f32>::generate(&RngStream::new(1, 2), 0.01, 100, n).unwrap();
        let p0 = sample_free_pair::<f32>(n, &RngStream::new(1, 3));
        let a = flow.run(&p0, &path, 1.0).unwrap();
        assert!(a.is_finite());
    }
}
