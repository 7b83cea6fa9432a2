//! Log-barrier objective of the relaxed soft-margin problem
//!
//! ```text
//! 1/(2γ²) + B·Σε − μ Σ_r log(Δ_r·w − γδ_r + ε_i(r))
//!                − μ Σ_col log(1 − Σ_a exp(w_a))      (or − μ log(1 − w·w))
//!                − μ log γ − μ Σ_k log(w_k − floor)
//! ```
//!
//! over the stacked variable `z = [w, γ, ε]`.

use nalgebra::{DMatrix, DVector};

use crate::barrier::newton::NewtonObjective;
use crate::barrier::ConstraintSet;
use crate::error::{Error, Result};
use crate::margin::MarginProblem;
use crate::model::Network;

/// Iterate of the barrier method.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub w: Vec<f64>,
    pub gamma: f64,
    pub eps: Vec<f64>,
    pub mu: f64,
}

impl SolverState {
    pub fn stack(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.w.len() + 1 + self.eps.len());
        z.extend_from_slice(&self.w);
        z.push(self.gamma);
        z.extend_from_slice(&self.eps);
        z
    }

    pub fn unstack(z: &[f64], dim: usize, mu: f64) -> Self {
        Self {
            w: z[..dim].to_vec(),
            gamma: z[dim],
            eps: z[dim + 1..].to_vec(),
            mu,
        }
    }

    /// `1/(2γ²) + B·Σε`.
    pub fn primal_objective(&self, reg: f64) -> f64 {
        0.5 / (self.gamma * self.gamma) + reg * self.eps.iter().sum::<f64>()
    }
}

/// The barrier function of one problem at a fixed `μ`.
#[derive(Debug, Clone, Copy)]
pub struct BarrierObjective<'a> {
    pub problem: &'a MarginProblem,
    pub net: &'a Network,
    pub set: ConstraintSet,
    pub mu: f64,
    /// Lower bound on every weight, enforced by its own barrier term
    /// (subnormalization set only).
    pub w_floor: Option<f64>,
}

impl<'a> BarrierObjective<'a> {
    fn split<'z>(&self, z: &'z [f64]) -> (&'z [f64], f64, &'z [f64]) {
        let d = self.problem.dim();
        (&z[..d], z[d], &z[d + 1..])
    }

    fn floor(&self) -> Option<f64> {
        match self.set {
            ConstraintSet::Subnormalization => self.w_floor,
            ConstraintSet::EuclideanBall => None,
        }
    }

    /// Number of logarithmic barrier terms (the `m` in the `m·μ` gap bound).
    pub fn num_barrier_terms(&self) -> usize {
        let norm_terms = match self.set {
            ConstraintSet::Subnormalization => self.net.num_columns(),
            ConstraintSet::EuclideanBall => 1,
        };
        let floor_terms = if self.floor().is_some() { self.problem.dim() } else { 0 };
        self.problem.rows().len() + norm_terms + 1 + floor_terms
    }

    /// Margin slacks `Δ_r·w − γδ_r + ε_i(r)`.
    pub fn margin_slacks(&self, z: &[f64]) -> Vec<f64> {
        let (w, gamma, eps) = self.split(z);
        self.problem
            .rows()
            .iter()
            .map(|r| r.dot(w) - gamma * r.margin + eps[r.example])
            .collect()
    }

    /// Slacks of the normalization constraints: `1 − Σ_a exp(w_a)` per column
    /// or `1 − w·w`.
    pub fn norm_slacks(&self, w: &[f64]) -> Vec<f64> {
        match self.set {
            ConstraintSet::Subnormalization => self
                .net
                .columns()
                .map(|(_, _, r)| 1.0 - w[r].iter().map(|v| v.exp()).sum::<f64>())
                .collect(),
            ConstraintSet::EuclideanBall => vec![1.0 - w.iter().map(|v| v * v).sum::<f64>()],
        }
    }

    /// Smallest slack of any barrier term at `z` (positive iff strictly
    /// feasible).
    pub fn min_slack(&self, z: &[f64]) -> f64 {
        let (w, gamma, _) = self.split(z);
        let mut m = gamma;
        for s in self.margin_slacks(z) {
            m = m.min(s);
        }
        for s in self.norm_slacks(w) {
            m = m.min(s);
        }
        if let Some(f) = self.floor() {
            for &v in w {
                m = m.min(v - f);
            }
        }
        m
    }

    pub fn evaluate(&self, z: &[f64]) -> Result<f64> {
        self.value(z).ok_or_else(|| {
            Error::InfeasiblePoint(format!("minimum barrier slack {:e}", self.min_slack(z)))
        })
    }
}

impl NewtonObjective for BarrierObjective<'_> {
    fn dim(&self) -> usize {
        self.problem.dim() + 1 + self.problem.num_examples()
    }

    fn value(&self, z: &[f64]) -> Option<f64> {
        let (w, gamma, eps) = self.split(z);
        if !(gamma > 0.0) || z.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mu = self.mu;
        let mut f = 0.5 / (gamma * gamma) + self.problem.reg() * eps.iter().sum::<f64>();
        let mut barrier = -gamma.ln();
        for s in self.margin_slacks(z) {
            if !(s > 0.0) {
                return None;
            }
            barrier -= s.ln();
        }
        for s in self.norm_slacks(w) {
            if !(s > 0.0) {
                return None;
            }
            barrier -= s.ln();
        }
        if let Some(floor) = self.floor() {
            for &v in w {
                let s = v - floor;
                if !(s > 0.0) {
                    return None;
                }
                barrier -= s.ln();
            }
        }
        if mu != 0.0 {
            f += mu * barrier;
        }
        Some(f)
    }

    fn gradient_hessian(&self, z: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.problem.dim();
        let n = self.dim();
        let gi = d; // position of γ
        let (w, gamma, _) = self.split(z);
        let mu = self.mu;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);

        g[gi] = -1.0 / gamma.powi(3) - mu / gamma;
        h[(gi, gi)] = 3.0 / gamma.powi(4) + mu / (gamma * gamma);
        for i in 0..self.problem.num_examples() {
            g[d + 1 + i] = self.problem.reg();
        }

        // Margin rows: gradient of the slack is a_r = (Δ_r, −δ_r, e_i).
        let slacks = self.margin_slacks(z);
        let mut a: Vec<(usize, f64)> = Vec::new();
        for (row, &s) in self.problem.rows().iter().zip(&slacks) {
            a.clear();
            a.extend_from_slice(&row.entries);
            if row.margin != 0.0 {
                a.push((gi, -row.margin));
            }
            a.push((d + 1 + row.example, 1.0));
            let inv = 1.0 / s;
            let c = mu * inv * inv;
            for &(p, vp) in &a {
                g[p] -= mu * vp * inv;
                for &(q, vq) in &a {
                    h[(p, q)] += c * vp * vq;
                }
            }
        }

        match self.set {
            ConstraintSet::Subnormalization => {
                for (_, _, range) in self.net.columns() {
                    let e: Vec<f64> = w[range.clone()].iter().map(|v| v.exp()).collect();
                    let u = 1.0 - e.iter().sum::<f64>();
                    let inv = 1.0 / u;
                    for (ka, &ea) in e.iter().enumerate() {
                        let p = range.start + ka;
                        g[p] += mu * ea * inv;
                        h[(p, p)] += mu * ea * inv;
                        for (kb, &eb) in e.iter().enumerate() {
                            h[(p, range.start + kb)] += mu * ea * eb * inv * inv;
                        }
                    }
                }
            }
            ConstraintSet::EuclideanBall => {
                let v = 1.0 - w.iter().map(|x| x * x).sum::<f64>();
                let inv = 1.0 / v;
                for p in 0..d {
                    g[p] += 2.0 * mu * w[p] * inv;
                    h[(p, p)] += 2.0 * mu * inv;
                    for q in 0..d {
                        h[(p, q)] += 4.0 * mu * w[p] * w[q] * inv * inv;
                    }
                }
            }
        }

        if let Some(floor) = self.floor() {
            for p in 0..d {
                let s = w[p] - floor;
                g[p] -= mu / s;
                h[(p, p)] += mu / (s * s);
            }
        }
        (g, h)
    }
}

/// Barrier objective of `state` (using `state.mu`) for the given constraint
/// set; `w_floor` adds the weight-floor barrier terms.
pub fn barrier_objective(
    state: &SolverState,
    problem: &MarginProblem,
    net: &Network,
    set: ConstraintSet,
    w_floor: Option<f64>,
) -> Result<f64> {
    check_state(state, problem)?;
    BarrierObjective { problem, net, set, mu: state.mu, w_floor }.evaluate(&state.stack())
}

/// Analytic gradient and Hessian over `(w, γ, ε)`.
pub fn barrier_gradient_hessian(
    state: &SolverState,
    problem: &MarginProblem,
    net: &Network,
    set: ConstraintSet,
    w_floor: Option<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_state(state, problem)?;
    let obj = BarrierObjective { problem, net, set, mu: state.mu, w_floor };
    let z = state.stack();
    obj.evaluate(&z)?;
    Ok(obj.gradient_hessian(&z))
}

pub(crate) fn check_state(state: &SolverState, problem: &MarginProblem) -> Result<()> {
    if state.w.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: state.w.len() });
    }
    if state.eps.len() != problem.num_examples() {
        return Err(Error::DimensionMismatch {
            expected: problem.num_examples(),
            got: state.eps.len(),
        });
    }
    Ok(())
}
