//! Derivative flows, the controlled residual, Girsanov shifts and
//! stochastic exponentials.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dynamics::{homogeneous_matrix, Flow, FlowBuffers, ModeNoise, NoisePath};
use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearBuffers;
use crate::scalar::Scalar;
use crate::spectral::{sobolev_norm_sq, FourierField, PairField, PairNorm, SobolevIndex};

/// `⟨f, g⟩` in `L²(T)` with the normalized measure, summed over `n ∈ Z`.
pub fn l2_inner<T: Scalar>(f: &FourierField<T>, g: &FourierField<T>) -> T {
    let (a, b) = (f.coeffs(), g.coeffs());
    let mut acc = a[0].re * b[0].re;
    for n in 1..a.len() {
        acc = acc + T::lit(2.0) * (a[n] * b[n].conj()).re;
    }
    acc
}

pub fn l2_norm_sq<T: Scalar>(f: &FourierField<T>) -> T {
    sobolev_norm_sq(f, SobolevIndex(T::zero()))
}

/// `⟨f, ΔW⟩` against the Brownian increments of one step.
pub fn noise_inner<T: Scalar>(f: &FourierField<T>, step: &[ModeNoise<T>]) -> T {
    let a = f.coeffs();
    let mut acc = a[0].re * step[0].db.re;
    for n in 1..a.len() {
        acc = acc + T::lit(2.0) * (a[n] * step[n].db.conj()).re;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentState<T: Scalar> {
    pub j: PairField<T>,
    pub base_time: f64,
}

/// Scratch for the linearized force.
#[derive(Debug, Clone)]
pub struct TangentBuffers<T: Scalar> {
    nl: Option<NonlinearBuffers<T>>,
    lin: FourierField<T>,
}

pub fn tangent_buffers<T: Scalar>(flow: &Flow<T>) -> TangentBuffers<T> {
    TangentBuffers {
        nl: flow.nonlinearity().map(|n| n.buffers()),
        lin: FourierField::zeros(flow.config().max_mode),
    }
}

fn tangent_kick<T: Scalar>(flow: &Flow<T>, base_u: &FourierField<T>, j: &mut PairField<T>, buf: &mut TangentBuffers<T>) {
    if let (Some(nl), Some(b)) = (flow.nonlinearity(), buf.nl.as_mut()) {
        nl.linearized(base_u, &j.u, &mut buf.lin, b);
        flow.half_kick(&mut j.v, &buf.lin);
    }
}

/// Derivative of one split step with respect to the initial state, given
/// the base positions at both ends of the step.
pub fn tangent_step<T: Scalar>(
    flow: &Flow<T>,
    base_before: &FourierField<T>,
    base_after: &FourierField<T>,
    ts: &mut TangentState<T>,
    buf: &mut TangentBuffers<T>,
) {
    tangent_kick(flow, base_before, &mut ts.j, buf);
    flow.mean_step(&mut ts.j);
    tangent_kick(flow, base_after, &mut ts.j, buf);
    ts.base_time += flow.config().dt.as_f64();
}

/// Base trajectory and tangent `J_t h` advanced in lockstep.
pub fn tangent_flow<T: Scalar>(
    flow: &Flow<T>,
    p0: &PairField<T>,
    h0: &PairField<T>,
    noise: &NoisePath<T>,
    t: T,
) -> Result<(PairField<T>, TangentState<T>)> {
    let steps = flow.steps_for(t)?;
    flow.check_noise(noise, 0, steps)?;
    let mut base = p0.clone();
    let mut prev = base.u.clone();
    let mut ts = TangentState { j: h0.clone(), base_time: 0.0 };
    let mut fb = flow.buffers();
    let mut tb = tangent_buffers(flow);
    flow.prime(&base.u, &mut fb);
    for k in 0..steps {
        prev.coeffs_mut().copy_from_slice(base.u.coeffs());
        flow.step_primed(&mut base, noise.step(k), &mut fb);
        tangent_step(flow, &prev, &base.u, &mut ts, &mut tb);
        if !base.is_finite() || !ts.j.is_finite() {
            return Err(Error::BlowUp { step: k + 1 });
        }
    }
    Ok((base, ts))
}

/// Running state of the controlled residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlState<T: Scalar> {
    pub rho: PairField<T>,
    /// `Σ ⟨v_k, ΔW_k⟩`.
    pub ito_accumulator: f64,
    /// `Σ ‖v_k‖² τ`.
    pub control_l2_accumulator: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub t: f64,
    pub rho_norm_sq: f64,
    pub control_l2: f64,
    pub ito: f64,
}

/// Evolves `ρ` from `h0` with the control `v = −γβ P_N[cos(β P_N Φ)·P_N ρ_u]`,
/// which cancels the nonlinear term so that `ρ` follows the homogeneous
/// damped wave equation. The base trajectory `Φ` starts at `p0` and is
/// driven by `noise`. Records are taken every `every` steps.
pub fn control_residual_run<T: Scalar>(
    flow: &Flow<T>,
    p0: &PairField<T>,
    h0: &PairField<T>,
    noise: &NoisePath<T>,
    t: T,
    every: usize,
) -> Result<(ControlState<T>, Vec<ControlRecord>)> {
    let steps = flow.steps_for(t)?;
    flow.check_noise(noise, 0, steps)?;
    let alpha = SobolevIndex::<T>::default();
    let norm = PairNorm::new(flow.config().max_mode, alpha);
    let dt = flow.config().dt.as_f64();
    let every = every.max(1);
    let mut base = p0.clone();
    let mut fb = flow.buffers();
    let mut tb = tangent_buffers(flow);
    let mut state = ControlState {
        rho: h0.clone(),
        ito_accumulator: 0.0,
        control_l2_accumulator: 0.0,
    };
    let mut history = vec![ControlRecord {
        t: 0.0,
        rho_norm_sq: norm.norm_sq(h0).as_f64(),
        control_l2: 0.0,
        ito: 0.0,
    }];
    flow.prime(&base.u, &mut fb);
    for k in 0..steps {
        if let (Some(nl), Some(b)) = (flow.nonlinearity(), tb.nl.as_mut()) {
            nl.linearized(&base.u, &state.rho.u, &mut tb.lin, b);
            // v_k = −lin; accumulate with the left-point rule
            let v_sq = l2_norm_sq(&tb.lin).as_f64();
            let ito = -noise_inner(&tb.lin, noise.step(k)).as_f64();
            state.control_l2_accumulator += v_sq * dt;
            state.ito_accumulator += ito;
        }
        flow.step_primed(&mut base, noise.step(k), &mut fb);
        flow.mean_step(&mut state.rho);
        if !base.is_finite() {
            return Err(Error::BlowUp { step: k + 1 });
        }
        if (k + 1) % every == 0 {
            history.push(ControlRecord {
                t: (k + 1) as f64 * dt,
                rho_norm_sq: norm.norm_sq(&state.rho).as_f64(),
                control_l2: state.control_l2_accumulator,
                ito: state.ito_accumulator,
            });
        }
    }
    Ok((state, history))
}

/// `h = (γ/√2)·P_N[sin(β P_N(ref_u + shifted_linear)) − sin(β P_N ref_u)]`.
pub fn girsanov_shift<T: Scalar>(
    flow: &Flow<T>,
    ref_u: &FourierField<T>,
    shifted_linear: &FourierField<T>,
    out: &mut FourierField<T>,
    buf: &mut FlowBuffers<T>,
) {
    match (flow.nonlinearity(), buf.nl.as_mut()) {
        (Some(nl), Some(b)) => {
            let target = ref_u.add(shifted_linear);
            let scale = nl.coupling().gamma / T::lit(2.0).sqrt();
            nl.sine_difference(&target, ref_u, scale, out, b);
        }
        _ => out.coeffs_mut().iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero())),
    }
}

/// Log stochastic exponential and the accumulated shift energy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GirsanovRecord {
    pub log_e: f64,
    pub h_l2_sq: f64,
}

impl GirsanovRecord {
    /// Adds the left-point contribution of `h_k` over step `k`.
    pub fn accumulate<T: Scalar>(&mut self, h: &FourierField<T>, step: &[ModeNoise<T>], dt: f64) {
        let sq = l2_norm_sq(h).as_f64() * dt;
        self.log_e += noise_inner(h, step).as_f64() - 0.5 * sq;
        self.h_l2_sq += sq;
    }

    pub fn exponential(&self) -> f64 {
        self.log_e.exp()
    }
}

/// `log ℰ = Σ⟨h_k, ΔW_k⟩ − ½ Σ ‖h_k‖² τ` over the steps covered by `h`.
pub fn stochastic_exponential<T: Scalar>(h: &[FourierField<T>], noise: &NoisePath<T>) -> Result<GirsanovRecord> {
    if h.len() > noise.steps() {
        return Err(Error::NoiseTooShort {
            needed: h.len(),
            available: noise.steps(),
        });
    }
    let dt = noise.dt().as_f64();
    let mut rec = GirsanovRecord::default();
    for (k, hk) in h.iter().enumerate() {
        rec.accumulate(hk, noise.step(k), dt);
    }
    Ok(rec)
}

/// `S(t)x` computed mode by mode from the closed-form propagator.
pub fn free_evolution<T: Scalar>(x: &PairField<T>, t: T) -> PairField<T> {
    let mut out = x.clone();
    let (u, v) = (out.u.coeffs_mut(), out.v.coeffs_mut());
    for n in 0..u.len() {
        let m = homogeneous_matrix::<T>(n, t);
        let (a, b) = (x.u.coeff(n), x.v.coeff(n));
        u[n] = a * m.get(0, 0) + b * m.get(0, 1);
        v[n] = a * m.get(1, 0) + b * m.get(1, 1);
    }
    out
}

/// Output of [`shifted_flow_identity_check`].
#[derive(Debug, Clone)]
pub struct ShiftedRun<T: Scalar> {
    /// `sup_k ‖Φ(u₂, ξ+h) − Φ(u₁, ξ) − S(t_k)(u₂ − u₁)‖` in the `α⁻` pair norm.
    pub max_deviation: f64,
    pub times: Vec<f64>,
    pub deviation: Vec<f64>,
    pub h_l2_sq: Vec<f64>,
    pub log_e: Vec<f64>,
    /// Final states of the reference and shifted runs.
    pub reference: PairField<T>,
    pub shifted: PairField<T>,
    pub record: GirsanovRecord,
}

/// Runs `Φ(u₁, ξ)` and `Φ(u₂, ξ + h)` side by side, with the shift
/// `h_k = (γ/√2) P_N[sin(β P_N(Φ_k + S(t_k)Δ)) − sin(β P_N Φ_k)]` injected
/// as a forcing of the momentum at both half-kicks, and accumulates the
/// stochastic exponential of `h` against the realized increments.
/// `observe(k, Φ₁, Φ₂, record)` is called after every step `k` (1-based).
pub fn shifted_flow_observe<T: Scalar, F>(
    flow: &Flow<T>,
    u1: &PairField<T>,
    u2: &PairField<T>,
    noise: &NoisePath<T>,
    steps: usize,
    mut observe: F,
) -> Result<(PairField<T>, PairField<T>, GirsanovRecord)>
where
    F: FnMut(usize, &PairField<T>, &PairField<T>, &GirsanovRecord),
{
    flow.check_noise(noise, 0, steps)?;
    let cfg = flow.config();
    let dt = cfg.dt;
    let dt64 = dt.as_f64();
    let delta = u2.sub(u1);
    let root2 = T::lit(2.0).sqrt();
    let mut p1 = u1.clone();
    let mut p2 = u2.clone();
    let mut b1 = flow.buffers();
    let mut b2 = flow.buffers();
    let mut h = FourierField::zeros(cfg.max_mode);
    let mut record = GirsanovRecord::default();
    let nonlinear = flow.nonlinearity().is_some();
    // Forcing on the shifted run: F(u₂) − √2 h at the current time.
    let shifted_force = |p1: &PairField<T>, p2: &PairField<T>, time: T, h: &mut FourierField<T>, b2: &mut FlowBuffers<T>| {
        let s_delta = free_evolution(&delta, time);
        girsanov_shift(flow, &p1.u, &s_delta.u, h, b2);
        flow.prime(&p2.u, b2);
        let force = &mut b2.force;
        force.axpy(-root2, h);
    };
    if nonlinear {
        flow.prime(&p1.u, &mut b1);
        shifted_force(&p1, &p2, T::zero(), &mut h, &mut b2);
    }
    for k in 0..steps {
        let step = noise.step(k);
        record.accumulate(&h, step, dt64);
        if nonlinear {
            flow.half_kick(&mut p1.v, &b1.force);
            flow.half_kick(&mut p2.v, &b2.force);
        }
        flow.linear_step(&mut p1, step);
        flow.linear_step(&mut p2, step);
        let time = dt * T::from_usize_lossy(k + 1);
        if nonlinear {
            flow.prime(&p1.u, &mut b1);
            shifted_force(&p1, &p2, time, &mut h, &mut b2);
            flow.half_kick(&mut p1.v, &b1.force);
            flow.half_kick(&mut p2.v, &b2.force);
        }
        if !p1.is_finite() || !p2.is_finite() {
            return Err(Error::BlowUp { step: k + 1 });
        }
        observe(k + 1, &p1, &p2, &record);
    }
    Ok((p1, p2, record))
}

/// [`shifted_flow_observe`] over `[0, t]`, measuring the deviation from the
/// shift identity `Φ(u₂, ξ+h)(t) = Φ(u₁, ξ)(t) + S(t)(u₂ − u₁)`.
pub fn shifted_flow_identity_check<T: Scalar>(
    flow: &Flow<T>,
    u1: &PairField<T>,
    u2: &PairField<T>,
    noise: &NoisePath<T>,
    t: T,
    every: usize,
) -> Result<ShiftedRun<T>> {
    let steps = flow.steps_for(t)?;
    let cfg = flow.config();
    let dt = cfg.dt;
    let every = every.max(1);
    let norm = PairNorm::new(cfg.max_mode, SobolevIndex::<T>::default());
    let delta = u2.sub(u1);
    let mut out = ShiftedRun {
        max_deviation: 0.0,
        times: vec![0.0],
        deviation: vec![0.0],
        h_l2_sq: vec![0.0],
        log_e: vec![0.0],
        reference: u1.clone(),
        shifted: u2.clone(),
        record: GirsanovRecord::default(),
    };
    let (p1, p2, record) = shifted_flow_observe(flow, u1, u2, noise, steps, |k, p1, p2, rec| {
        let time = dt * T::from_usize_lossy(k);
        let predicted = p1.add(&free_evolution(&delta, time));
        let dev = norm.dist(p2, &predicted).as_f64();
        out.max_deviation = out.max_deviation.max(dev);
        if k % every == 0 {
            out.times.push(k as f64 * dt.as_f64());
            out.deviation.push(dev);
            out.h_l2_sq.push(rec.h_l2_sq);
            out.log_e.push(rec.log_e);
        }
    })?;
    out.reference = p1;
    out.shifted = p2;
    out.record = record;
    Ok(out)
}

/// One path of the reweighting identity `Law_P(Φ_t) = Law_Q(L_t)`: the
/// nonlinear state `Φ_t(p0, ξ)`, the linear state `L_t(p0, ξ)` and the log
/// density `log dQ/dP = −Σ⟨g_k, ΔW_k⟩ − ½Σ‖g_k‖²τ` with
/// `g_k = (γ/√2) P_N sin(β P_N L_k)`.
#[derive(Debug, Clone)]
pub struct ReweightedPath<T: Scalar> {
    pub nonlinear: PairField<T>,
    pub linear: PairField<T>,
    pub log_weight: f64,
}

pub fn reweighted_path<T: Scalar>(flow: &Flow<T>, p0: &PairField<T>, noise: &NoisePath<T>, t: T) -> Result<ReweightedPath<T>> {
    let (linear, log_weight) = linear_path_log_density(flow, p0, noise, t)?;
    let nonlinear = flow.run(p0, noise, t)?;
    Ok(ReweightedPath {
        nonlinear,
        linear,
        log_weight,
    })
}

/// The linear state `L_t(p0, ξ)` and `log dQ/dP` from [`ReweightedPath`],
/// without running the nonlinear flow.
pub fn linear_path_log_density<T: Scalar>(flow: &Flow<T>, p0: &PairField<T>, noise: &NoisePath<T>, t: T) -> Result<(PairField<T>, f64)> {
    let cfg = flow.config();
    let steps = flow.steps_for(t)?;
    flow.check_noise(noise, 0, steps)?;
    let dt = cfg.dt.as_f64();
    let mut lin = p0.clone();
    let mut buf = flow.buffers();
    let mut g = FourierField::zeros(cfg.max_mode);
    let mut rec = GirsanovRecord::default();
    let scale = -T::one() / T::lit(2.0).sqrt();
    let nonlinear = flow.nonlinearity().is_some();
    for k in 0..steps {
        if nonlinear {
            flow.force_into(&lin.u, &mut g, &mut buf);
            g.coeffs_mut().iter_mut().for_each(|c| *c = *c * scale);
            rec.accumulate(&g, noise.step(k), dt);
        }
        flow.linear_step(&mut lin, noise.step(k));
    }
    if !lin.is_finite() {
        return Err(Error::BlowUp { step: steps });
    }
    Ok((lin, rec.log_e))
}
