//! Realized noise over a uniform time grid.
//!
//! Each step stores, per retained mode, the Brownian increment `ΔBₙ` and two
//! auxiliary normals that carry the part of the stochastic convolution not
//! explained by the increment. The increments alone define the Itô sums of
//! the Girsanov machinery; together with the auxiliaries they give the
//! exact joint law of `(ΔB, ∫ E dB)` over the step.

use num_complex::Complex;
use rand::Rng;

use crate::dynamics::linear::LinearPropagator;
use crate::error::{Error, Result};
use crate::rng::{normal, RngStream};
use crate::scalar::Scalar;

/// Noise of one mode over one step. For `n = 0` everything is real with
/// `Var(db) = τ` and unit-variance auxiliaries; for `n ≥ 1` real and
/// imaginary parts are independent with half those variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeNoise<T> {
    pub db: Complex<T>,
    pub aux: [Complex<T>; 2],
}

impl<T: Scalar> ModeNoise<T> {
    pub fn zero() -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Self { db: z, aux: [z, z] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath<T> {
    dt: T,
    steps: usize,
    max_mode: usize,
    data: Vec<ModeNoise<T>>,
}

impl<T: Scalar> NoisePath<T> {
    pub fn generate(stream: &RngStream, dt: T, steps: usize, max_mode: usize) -> Result<Self> {
        Self::generate_with(&mut stream.rng(), dt, steps, max_mode)
    }

    pub fn generate_with<R: Rng + ?Sized>(rng: &mut R, dt: T, steps: usize, max_mode: usize) -> Result<Self> {
        check_dt(dt)?;
        let sd = dt.sqrt();
        let half = T::lit(0.5).sqrt();
        let mut data = Vec::with_capacity(steps * (max_mode + 1));
        for _ in 0..steps {
            let (z0, z1, z2): (T, T, T) = (normal(rng), normal(rng), normal(rng));
            data.push(ModeNoise {
                db: Complex::new(sd * z0, T::zero()),
                aux: [Complex::new(z1, T::zero()), Complex::new(z2, T::zero())],
            });
            for _ in 1..=max_mode {
                let mut c = [Complex::new(T::zero(), T::zero()); 3];
                for slot in c.iter_mut() {
                    let (re, im): (T, T) = (normal(rng), normal(rng));
                    *slot = Complex::new(re, im) * half;
                }
                data.push(ModeNoise {
                    db: c[0] * sd,
                    aux: [c[1], c[2]],
                });
            }
        }
        Ok(Self { dt, steps, max_mode, data })
    }

    pub fn zero(dt: T, steps: usize, max_mode: usize) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self {
            dt,
            steps,
            max_mode,
            data: vec![ModeNoise::zero(); steps * (max_mode + 1)],
        })
    }

    /// Path from raw per-step, per-mode noise laid out step-major.
    pub fn from_steps(dt: T, max_mode: usize, data: Vec<ModeNoise<T>>) -> Result<Self> {
        check_dt(dt)?;
        let w = max_mode + 1;
        if data.len() % w != 0 {
            return Err(Error::InvalidParameter {
                name: "data",
                reason: format!("{} entries is not a multiple of {w} modes", data.len()),
            });
        }
        Ok(Self {
            dt,
            steps: data.len() / w,
            max_mode,
            data,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    /// Total model time covered.
    pub fn duration(&self) -> T {
        self.dt * T::from_usize_lossy(self.steps)
    }

    #[inline]
    pub fn step(&self, k: usize) -> &[ModeNoise<T>] {
        let w = self.max_mode + 1;
        &self.data[k * w..(k + 1) * w]
    }

    /// Brownian increment `ΔBₙ` over step `k`.
    #[inline]
    pub fn increment(&self, k: usize, n: usize) -> Complex<T> {
        self.step(k)[n].db
    }

    /// Steps `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.steps {
            return Err(Error::NoiseTooShort {
                needed: start + len,
                available: self.steps,
            });
        }
        let w = self.max_mode + 1;
        Ok(Self {
            dt: self.dt,
            steps: len,
            max_mode: self.max_mode,
            data: self.data[start * w..(start + len) * w].to_vec(),
        })
    }

    /// Same realization on the grid of step `2·dt`: increments add, and the
    /// auxiliaries are recomputed from the composed convolution so the
    /// coarse path drives the exact coarse transition.
    pub fn coarsen(&self) -> Result<Self> {
        self.coarsen_with(T::one())
    }

    pub fn coarsen_with(&self, damping: T) -> Result<Self> {
        let fine = LinearPropagator::new(self.max_mode, self.dt, damping)?;
        let coarse = LinearPropagator::new(self.max_mode, self.dt + self.dt, damping)?;
        let steps = self.steps / 2;
        let mut data = Vec::with_capacity(steps * (self.max_mode + 1));
        for k in 0..steps {
            let (a, b) = (self.step(2 * k), self.step(2 * k + 1));
            for n in 0..=self.max_mode {
                let f = &fine.steps[n];
                let e1 = f.convolution(a[n].db, a[n].aux);
                let e2 = f.convolution(b[n].db, b[n].aux);
                let m = &f.mean.0;
                let eta = [
                    e1[0] * m[0][0] + e1[1] * m[0][1] + e2[0],
                    e1[0] * m[1][0] + e1[1] * m[1][1] + e2[1],
                ];
                let db = a[n].db + b[n].db;
                data.push(ModeNoise {
                    db,
                    aux: coarse.steps[n].auxiliary(db, eta),
                });
            }
        }
        Ok(Self {
            dt: self.dt + self.dt,
            steps,
            max_mode: self.max_mode,
            data,
        })
    }
}

fn check_dt<T: Scalar>(dt: T) -> Result<()> {
    if !(dt > T::zero() && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive and finite, got {dt}"),
        });
    }
    Ok(())
}
