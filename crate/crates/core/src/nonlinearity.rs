//! Pseudospectral evaluation of the sine-Gordon terms `γ P_N sin(β P_N u)`,
//! their linearization, and the cosine potential, on an oversampled grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{FourierField, GridBuffers, GridTransform, ProjectorSpec};
use crate::stats::pairwise_sum;

/// Couplings of the cosine interaction and its truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling<T> {
    pub beta: T,
    pub gamma: T,
    pub projector: ProjectorSpec,
    /// Grid points per retained mode.
    pub grid_factor: usize,
}

impl<T: Scalar> Coupling<T> {
    pub const DEFAULT_GRID_FACTOR: usize = 8;

    pub fn new(beta: T, gamma: T, projector: ProjectorSpec) -> Self {
        Self {
            beta,
            gamma,
            projector,
            grid_factor: Self::DEFAULT_GRID_FACTOR,
        }
    }

    pub fn with_grid_factor(mut self, grid_factor: usize) -> Self {
        self.grid_factor = grid_factor;
        self
    }
}

/// Shared, immutable evaluator for one `(max_mode, coupling)` pair.
#[derive(Debug, Clone)]
pub struct Nonlinearity<T: Scalar> {
    coupling: Coupling<T>,
    transform: GridTransform<T>,
    multipliers: Vec<T>,
}

/// Per-worker scratch space for [`Nonlinearity`].
#[derive(Debug, Clone)]
pub struct NonlinearBuffers<T: Scalar> {
    grid: GridBuffers<T>,
    field: FourierField<T>,
    samples: Vec<T>,
    other: Vec<T>,
}

impl<T: Scalar> Nonlinearity<T> {
    pub fn new(max_mode: usize, coupling: Coupling<T>) -> Result<Self> {
        if coupling.beta == T::zero() {
            return Err(Error::ZeroBeta);
        }
        if coupling.projector.cutoff > max_mode {
            return Err(Error::CutoffTooLarge {
                cutoff: coupling.projector.cutoff,
                max_mode,
            });
        }
        let transform = GridTransform::new(max_mode, coupling.grid_factor * max_mode)?;
        Ok(Self {
            multipliers: coupling.projector.multipliers(max_mode),
            coupling,
            transform,
        })
    }

    pub fn coupling(&self) -> &Coupling<T> {
        &self.coupling
    }

    pub fn max_mode(&self) -> usize {
        self.transform.max_mode()
    }

    pub fn grid_points(&self) -> usize {
        self.transform.points()
    }

    pub fn multipliers(&self) -> &[T] {
        &self.multipliers
    }

    pub fn buffers(&self) -> NonlinearBuffers<T> {
        NonlinearBuffers {
            grid: self.transform.buffers(),
            field: FourierField::zeros(self.max_mode()),
            samples: vec![T::zero(); self.grid_points()],
            other: vec![T::zero(); self.grid_points()],
        }
    }

    fn load_projected(&self, f: &FourierField<T>, buf: &mut NonlinearBuffers<T>) {
        for ((dst, src), m) in buf
            .field
            .coeffs_mut()
            .iter_mut()
            .zip(f.coeffs())
            .zip(&self.multipliers)
        {
            *dst = src * *m;
        }
    }

    /// Samples of `P_N f` on the grid, written to `buf.samples`.
    fn projected_samples(&self, f: &FourierField<T>, buf: &mut NonlinearBuffers<T>) {
        self.load_projected(f, buf);
        self.transform
            .to_grid_into(&buf.field, &mut buf.samples, &mut buf.grid);
    }

    fn finish_projected(&self, scale: T, out: &mut FourierField<T>, buf: &mut NonlinearBuffers<T>) {
        self.transform
            .from_grid_into(&buf.samples, out, &mut buf.grid);
        for (c, m) in out.coeffs_mut().iter_mut().zip(&self.multipliers) {
            *c = *c * (*m * scale);
        }
    }

    /// `(γ/β) · mean_x cos(β P_N u(x))`.
    pub fn potential(&self, u: &FourierField<T>, buf: &mut NonlinearBuffers<T>) -> T {
        let Coupling { beta, gamma, .. } = self.coupling;
        if gamma == T::zero() {
            return T::zero();
        }
        self.projected_samples(u, buf);
        for s in buf.samples.iter_mut() {
            *s = (beta * *s).cos();
        }
        let mean = pairwise_sum(&buf.samples) / T::from_usize_lossy(buf.samples.len());
        gamma / beta * mean
    }

    /// Grid average of `cos(β P_N u)`.
    pub fn cos_average(&self, u: &FourierField<T>, buf: &mut NonlinearBuffers<T>) -> T {
        let beta = self.coupling.beta;
        self.projected_samples(u, buf);
        for s in buf.samples.iter_mut() {
            *s = (beta * *s).cos();
        }
        pairwise_sum(&buf.samples) / T::from_usize_lossy(buf.samples.len())
    }

    /// `γ P_N sin(β P_N u)`, the force entering the momentum equation with a
    /// minus sign.
    pub fn force(&self, u: &FourierField<T>, out: &mut FourierField<T>, buf: &mut NonlinearBuffers<T>) {
        let Coupling { beta, gamma, .. } = self.coupling;
        self.projected_samples(u, buf);
        for s in buf.samples.iter_mut() {
            *s = (beta * *s).sin();
        }
        self.finish_projected(gamma, out, buf);
    }

    /// `γβ P_N [cos(β P_N u) · P_N j]`, the derivative of [`Self::force`]
    /// at `u` in direction `j`.
    pub fn linearized(
        &self,
        u: &FourierField<T>,
        j: &FourierField<T>,
        out: &mut FourierField<T>,
        buf: &mut NonlinearBuffers<T>,
    ) {
        let Coupling { beta, gamma, .. } = self.coupling;
        self.projected_samples(j, buf);
        std::mem::swap(&mut buf.samples, &mut buf.other);
        self.projected_samples(u, buf);
        for (s, jx) in buf.samples.iter_mut().zip(&buf.other) {
            *s = (beta * *s).cos() * *jx;
        }
        self.finish_projected(gamma * beta, out, buf);
    }

    /// `P_N [sin(β P_N a) - sin(β P_N b)] · scale`.
    pub fn sine_difference(
        &self,
        a: &FourierField<T>,
        b: &FourierField<T>,
        scale: T,
        out: &mut FourierField<T>,
        buf: &mut NonlinearBuffers<T>,
    ) {
        let beta = self.coupling.beta;
        self.projected_samples(b, buf);
        std::mem::swap(&mut buf.samples, &mut buf.other);
        self.projected_samples(a, buf);
        for (s, bx) in buf.samples.iter_mut().zip(&buf.other) {
            *s = (beta * *s).sin() - (beta * *bx).sin();
        }
        self.finish_projected(scale, out, buf);
    }
}
