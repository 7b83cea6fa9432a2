use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// A smooth convex function with an open domain.
pub trait NewtonObjective {
    fn dim(&self) -> usize;

    /// Objective value, or `None` outside the strict interior of the domain.
    fn value(&self, z: &[f64]) -> Option<f64>;

    /// Gradient and Hessian at a point of the domain.
    fn gradient_hessian(&self, z: &[f64]) -> (DVector<f64>, DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    /// Smallest step fraction tried before the iteration gives up.
    pub min_step: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            min_step: 1e-20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub z: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Solves `H d = -g` by Cholesky, adding a growing multiple of the identity
/// when the factorization fails.
pub fn newton_direction(grad: &DVector<f64>, hess: DMatrix<f64>) -> Result<DVector<f64>> {
    let scale = hess.diagonal().iter().fold(1.0f64, |m, d| m.max(d.abs()));
    let mut h = hess;
    let mut shift = 0.0;
    for attempt in 0..=3 {
        if attempt > 0 {
            let next = 1e-10 * scale * 10f64.powi(attempt - 1);
            for i in 0..h.nrows() {
                h[(i, i)] += next - shift;
            }
            shift = next;
        }
        if let Some(chol) = Cholesky::new(h.clone()) {
            let d = chol.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Ok(d);
            }
        }
    }
    Err(Error::LinearSolveFailure)
}

/// Damped Newton descent with backtracking. Every accepted iterate lies in
/// the objective's domain and the objective never increases.
///
/// Stops when the gradient norm drops to `tol`, after `max_iters` steps, or
/// when full steps at the objective's floating-point resolution stop
/// reducing the gradient (reported as converged).
pub fn damped_newton<O: NewtonObjective + ?Sized>(
    obj: &O,
    z0: &[f64],
    tol: f64,
    max_iters: usize,
    ls: &LineSearch,
) -> Result<NewtonOutcome> {
    let mut z = z0.to_vec();
    let mut f = obj
        .value(&z)
        .ok_or_else(|| Error::InfeasiblePoint("Newton start is outside the domain".into()))?;
    let mut iterations = 0;
    loop {
        let (g, h) = obj.gradient_hessian(&z);
        let grad_norm = g.norm();
        if grad_norm <= tol {
            return Ok(NewtonOutcome { z, value: f, iterations, grad_norm, converged: true });
        }
        if iterations >= max_iters {
            return Ok(NewtonOutcome { z, value: f, iterations, grad_norm, converged: false });
        }
        let d = newton_direction(&g, h)?;
        let slope = g.dot(&d);
        // Below the objective's rounding level the sufficient-decrease test
        // is meaningless; take full steps while they still shrink the
        // gradient.
        let resolution = 64.0 * f64::EPSILON * f.abs().max(1.0);
        if -slope <= resolution {
            let trial: Vec<f64> = z.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
            let improved = obj.value(&trial).and_then(|ft| {
                let (gt, _) = obj.gradient_hessian(&trial);
                (gt.norm() < grad_norm && ft <= f + resolution).then_some(ft)
            });
            match improved {
                Some(ft) => {
                    z = trial;
                    f = ft;
                    iterations += 1;
                    continue;
                }
                None => {
                    return Ok(NewtonOutcome { z, value: f, iterations, grad_norm, converged: true });
                }
            }
        }
        let mut t = 1.0;
        let mut trial = vec![0.0; z.len()];
        let accepted = loop {
            for (k, v) in trial.iter_mut().enumerate() {
                *v = z[k] + t * d[k];
            }
            if let Some(ft) = obj.value(&trial) {
                if ft <= f + ls.sufficient_decrease * t * slope {
                    break Some(ft);
                }
            }
            t *= ls.shrink;
            if t < ls.min_step {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some(ft) => {
                debug_assert!(ft <= f);
                std::mem::swap(&mut z, &mut trial);
                f = ft;
            }
            None => {
                let (g, _) = obj.gradient_hessian(&z);
                let grad_norm = g.norm();
                return Ok(NewtonOutcome {
                    z,
                    value: f,
                    iterations,
                    grad_norm,
                    converged: grad_norm <= tol,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: f64,
        curvature: f64,
    }

    impl NewtonObjective for Quadratic {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, z: &[f64]) -> Option<f64> {
            Some(0.5 * self.curvature * (z[0] - self.center).powi(2))
        }
        fn gradient_hessian(&self, z: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
            (
                DVector::from_element(1, self.curvature * (z[0] - self.center)),
                DMatrix::from_element(1, 1, self.curvature),
            )
        }
    }

    /// `x - ln x` on `x > 0`.
    struct LogBarrier;

    impl NewtonObjective for LogBarrier {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, z: &[f64]) -> Option<f64> {
            (z[0] > 0.0).then(|| z[0] - z[0].ln())
        }
        fn gradient_hessian(&self, z: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
            (
                DVector::from_element(1, 1.0 - 1.0 / z[0]),
                DMatrix::from_element(1, 1, 1.0 / (z[0] * z[0])),
            )
        }
    }

    #[test]
    fn quadratic_in_one_step() {
        let q = Quadratic { center: 3.0, curvature: 2.5 };
        let out = damped_newton(&q, &[-7.0], 1e-10, 20, &LineSearch::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert!((out.z[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_at_minimizer() {
        let q = Quadratic { center: 1.0, curvature: 1.0 };
        let out = damped_newton(&q, &[1.0], 1e-10, 20, &LineSearch::default()).unwrap();
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn stays_in_domain() {
        let out = damped_newton(&LogBarrier, &[20.0], 1e-12, 50, &LineSearch::default()).unwrap();
        assert!(out.converged);
        assert!((out.z[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_infeasible_start() {
        assert!(matches!(
            damped_newton(&LogBarrier, &[-1.0], 1e-12, 5, &LineSearch::default()),
            Err(Error::InfeasiblePoint(_))
        ));
    }

    #[test]
    fn regularizes_semidefinite_hessian() {
        let g = DVector::from_vec(vec![1.0, 0.0]);
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let d = newton_direction(&g, h).unwrap();
        assert!((d[0] + 1.0).abs() < 1e-6);
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(newton_direction(&g, bad), Err(Error::LinearSolveFailure)));
    }
}
