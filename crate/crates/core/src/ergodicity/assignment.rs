//! Exact optimal assignment and the Wasserstein-1 distance between equal-size
//! empirical measures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ergodicity::metrics::{Metric, MetricKind, MetricParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::PairField;

pub const ASSIGNMENT_CAP: usize = 512;

/// Minimum-cost perfect matching of a square cost matrix (row-major) by the
/// Hungarian method with potentials, `O(n³)`. Returns the column matched to
/// each row and the total cost summed in row order.
pub fn solve_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n, "cost matrix must be n×n");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let c = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    let inf = f64::INFINITY;
    // 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[matched[j] - 1] = j - 1;
    }
    let total = row_to_col.iter().enumerate().fold(0.0, |acc, (i, &j)| acc + cost[i * n + j]);
    (row_to_col, total)
}

/// Point cloud standing for an empirical measure, with its ground metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct EmpiricalCloud<T: Scalar> {
    pub points: Vec<PairField<T>>,
    pub metric: MetricParams,
    pub kind: MetricKind,
}

impl<T: Scalar> EmpiricalCloud<T> {
    pub fn new(points: Vec<PairField<T>>, metric: MetricParams, kind: MetricKind) -> Result<Self> {
        metric.validate()?;
        let first = points.first().ok_or(Error::InvalidParameter {
            name: "points",
            reason: "cloud must be nonempty".into(),
        })?;
        let n = first.max_mode();
        if let Some(p) = points.iter().find(|p| p.max_mode() != n) {
            return Err(Error::ModeMismatch { left: n, right: p.max_mode() });
        }
        Ok(Self { points, metric, kind })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_mode(&self) -> usize {
        self.points[0].max_mode()
    }
}

/// Ground-cost matrix between two clouds, rows computed in parallel.
pub fn cost_matrix<T: Scalar>(c1: &EmpiricalCloud<T>, c2: &EmpiricalCloud<T>) -> Result<Vec<f64>> {
    check_pair(c1, c2)?;
    let metric = Metric::new(c1.max_mode(), c1.metric)?;
    let rows: Vec<Vec<f64>> = c1
        .points
        .par_iter()
        .map(|a| c2.points.iter().map(|b| metric.ground(c1.kind, a, b)).collect())
        .collect();
    Ok(rows.concat())
}

fn check_pair<T: Scalar>(c1: &EmpiricalCloud<T>, c2: &EmpiricalCloud<T>) -> Result<()> {
    if c1.len() != c2.len() {
        return Err(Error::CloudSizeMismatch { left: c1.len(), right: c2.len() });
    }
    if c1.len() > ASSIGNMENT_CAP {
        return Err(Error::AssignmentCap { size: c1.len(), cap: ASSIGNMENT_CAP });
    }
    if c1.metric != c2.metric || c1.kind != c2.kind {
        return Err(Error::ConfigMismatch("clouds carry different ground metrics".into()));
    }
    if c1.max_mode() != c2.max_mode() {
        return Err(Error::ModeMismatch { left: c1.max_mode(), right: c2.max_mode() });
    }
    Ok(())
}

/// `W₁` between the two empirical measures: the optimal assignment cost
/// divided by the cloud size.
pub fn wasserstein_assignment<T: Scalar>(c1: &EmpiricalCloud<T>, c2: &EmpiricalCloud<T>) -> Result<f64> {
    let cost = cost_matrix(c1, c2)?;
    let n = c1.len();
    Ok(solve_assignment(&cost, n).1 / n as f64)
}
