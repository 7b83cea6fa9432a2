use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Network, ParamVector};

/// Label enumerations above this size are refused.
const LABEL_CAP: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct MclConfig {
    pub initial_step: f64,
    /// Step multiplier on a rejected trial.
    pub backtrack: f64,
    /// Step multiplier after an accepted step.
    pub grow: f64,
    pub sufficient_increase: f64,
    pub max_iters: usize,
    /// Threshold on the largest gradient entry of the per-example average
    /// objective.
    pub grad_tol: f64,
    /// Ridge penalty `λ/2·‖ω‖²` on the unconstrained parameters.
    pub l2_strength: f64,
}

impl Default for MclConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            backtrack: 0.5,
            grow: 2.0,
            sufficient_increase: 1e-4,
            max_iters: 500,
            grad_tol: 1e-6,
            l2_strength: 0.0,
        }
    }
}

impl MclConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.l2_strength >= 0.0) {
            return Err(Error::InvalidConfig("l2_strength must be non-negative".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.initial_step > 0.0) {
            return Err(Error::InvalidConfig("invalid step-size schedule".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MclResult {
    pub w: ParamVector,
    pub omega: Vec<f64>,
    /// Penalized objective at the returned point.
    pub objective: f64,
    /// Objective after every accepted step, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Column-wise softmax: `w = ln θ(ω)`.
pub fn softmax_params(net: &Network, omega: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; omega.len()];
    for (_, _, range) in net.columns() {
        let col = &omega[range.clone()];
        let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + col.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for k in range {
            w[k] = omega[k] - lse;
        }
    }
    w
}

fn check_labels(net: &Network) -> Result<()> {
    let size = net.label_space_size();
    if size > LABEL_CAP as u128 {
        return Err(Error::LabelSpaceTooLarge { size, cap: LABEL_CAP });
    }
    Ok(())
}

/// `Σ_i ln P(y^i | x^i)` with its gradient in `w`, by enumerating labels.
fn cl_and_grad(net: &Network, w: &[f64], data: &Dataset) -> (f64, Vec<f64>) {
    let factors = net.class_factors();
    let labels: Vec<Vec<usize>> = net.label_space().collect();
    let mut grad = vec![0.0; w.len()];
    let mut total = 0.0;
    let mut scores = vec![0.0; labels.len()];
    let mut active = vec![Vec::new(); labels.len()];
    for row in data.rows() {
        let mut values = row.clone();
        for (l, y) in labels.iter().enumerate() {
            net.set_labels(&mut values, y);
            active[l] = factors.iter().map(|&j| net.active_index(j, &values)).collect::<Vec<_>>();
            scores[l] = active[l].iter().map(|&k| w[k]).sum();
        }
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z = scores.iter().map(|s| (s - m).exp()).sum::<f64>();
        let lse = m + z.ln();
        let truth: Vec<usize> = factors.iter().map(|&j| net.active_index(j, row)).collect();
        total += truth.iter().map(|&k| w[k]).sum::<f64>() - lse;
        for &k in &truth {
            grad[k] += 1.0;
        }
        for (l, idx) in active.iter().enumerate() {
            let p = (scores[l] - lse).exp();
            for &k in idx {
                grad[k] -= p;
            }
        }
    }
    (total, grad)
}

/// `Σ_i ln P(y^i | x^i, w)`. `w` need not be normalized.
pub fn conditional_log_likelihood(net: &Network, w: &ParamVector, data: &Dataset) -> Result<f64> {
    net.check_dim(w)?;
    data.check_schema(net)?;
    check_labels(net)?;
    Ok(cl_and_grad(net, w.as_slice(), data).0)
}

/// Penalized conditional log-likelihood `Σ ln P(y|x, θ(ω)) − λ/2·‖ω‖²` and
/// its gradient in `ω`.
pub fn mcl_objective(net: &Network, omega: &[f64], data: &Dataset, l2: f64) -> Result<(f64, Vec<f64>)> {
    if omega.len() != net.dim() {
        return Err(Error::DimensionMismatch { expected: net.dim(), got: omega.len() });
    }
    data.check_schema(net)?;
    check_labels(net)?;
    Ok(objective(net, omega, data, l2))
}

fn objective(net: &Network, omega: &[f64], data: &Dataset, l2: f64) -> (f64, Vec<f64>) {
    let w = softmax_params(net, omega);
    let (cl, gw) = cl_and_grad(net, &w, data);
    let mut g = vec![0.0; omega.len()];
    for (_, _, range) in net.columns() {
        let col_sum: f64 = gw[range.clone()].iter().sum();
        for k in range {
            g[k] = gw[k] - w[k].exp() * col_sum - l2 * omega[k];
        }
    }
    let penalty = 0.5 * l2 * omega.iter().map(|v| v * v).sum::<f64>();
    (cl - penalty, g)
}

/// Gradient ascent with backtracking on the softmax parameters, starting
/// from uniform CPTs.
pub fn solve_mcl(net: &Network, data: &Dataset, config: &MclConfig) -> Result<MclResult> {
    config.validate()?;
    data.check_schema(net)?;
    check_labels(net)?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("no training examples".into()));
    }
    let scale = data.len() as f64;
    let mut omega = vec![0.0; net.dim()];
    let (mut f, mut g) = objective(net, &omega, data, config.l2_strength);
    let mut trace = vec![f];
    let mut step = config.initial_step / scale;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gmax <= config.grad_tol * scale {
            converged = true;
            break;
        }
        iterations += 1;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let accepted = loop {
            let cand: Vec<f64> = omega.iter().zip(&g).map(|(o, d)| o + step * d).collect();
            let (fc, gc) = objective(net, &cand, data, config.l2_strength);
            if fc >= f + config.sufficient_increase * step * gg {
                break Some((cand, fc, gc));
            }
            step *= config.backtrack;
            if step * gg.sqrt() < 1e-300 || step == 0.0 {
                break None;
            }
        };
        match accepted {
            Some((cand, fc, gc)) => {
                omega = cand;
                f = fc;
                g = gc;
                trace.push(f);
                step *= config.grow;
            }
            None => break,
        }
    }
    let w = ParamVector::new(softmax_params(net, &omega))?;
    Ok(MclResult {
        w,
        omega,
        objective: f,
        trace,
        iterations,
        converged,
    })
}

/// `Σ_i ln P(x^i, y^i | w)` for normalized `w`.
pub fn joint_log_likelihood(net: &Network, w: &ParamVector, data: &Dataset) -> Result<f64> {
    w.ensure_normalized(net)?;
    data.check_schema(net)?;
    data.rows().iter().map(|row| net.log_prob(w, row)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_frequency_root() {
        let net = Network::from_names(&[("y", 2, &[])], &["y"]).unwrap();
        let data = Dataset::new(&net, vec![vec![0], vec![1]]).unwrap();
        let r = solve_mcl(&net, &data, &MclConfig::default()).unwrap();
        let th = r.w.theta();
        assert!((th[0] - 0.5).abs() < 1e-12);
        assert!((r.objective - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!(r.converged);

        let data = Dataset::new(&net, vec![vec![0], vec![0], vec![0], vec![1]]).unwrap();
        let r = solve_mcl(&net, &data, &MclConfig::default()).unwrap();
        assert!((r.w.theta()[0] - 0.75).abs() < 1e-6, "{:?}", r.w.theta());
        assert!(r.trace.windows(2).all(|p| p[1] >= p[0]));
        assert!(r.w.max_residual(&net) <= 1e-10);
    }

    #[test]
    fn gradient_matches_differences() {
        let net = Network::from_names(&[("y", 3, &[]), ("x1", 2, &["y"]), ("x2", 2, &["y", "x1"])], &["y"]).unwrap();
        let data = Dataset::new(&net, vec![vec![0, 1, 0], vec![2, 0, 1], vec![1, 1, 1], vec![2, 1, 0]]).unwrap();
        let omega: Vec<f64> = (0..net.dim()).map(|k| ((k * 37 % 11) as f64 - 5.0) / 4.0).collect();
        let (_, g) = mcl_objective(&net, &omega, &data, 0.1).unwrap();
        for k in 0..omega.len() {
            let h = 1e-5;
            let mut p = omega.clone();
            p[k] += h;
            let mut m = omega.clone();
            m[k] -= h;
            let fd = (mcl_objective(&net, &p, &data, 0.1).unwrap().0 - mcl_objective(&net, &m, &data, 0.1).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(1e-3), "k={k} fd={fd} g={}", g[k]);
        }
    }

    #[test]
    fn separable_with_ridge_converges() {
        let net = Network::from_names(&[("x", 2, &[]), ("y", 2, &["x"])], &["y"]).unwrap();
        let data = Dataset::new(&net, vec![vec![0, 0], vec![1, 1], vec![0, 0], vec![1, 1]]).unwrap();
        let free = solve_mcl(&net, &data, &MclConfig::default()).unwrap();
        assert!(free.objective < 0.0 && free.objective > -0.1);
        let cfg = MclConfig { l2_strength: 1e-3, max_iters: 20000, ..MclConfig::default() };
        let ridge = solve_mcl(&net, &data, &cfg).unwrap();
        assert!(ridge.converged);
    }

    #[test]
    fn joint_likelihood_uniform() {
        let net = Network::from_names(&[("a", 2, &[]), ("b", 2, &["a"]), ("c", 2, &["b"])], &["a"]).unwrap();
        let data = Dataset::new(&net, vec![vec![1, 0, 1]]).unwrap();
        let ll = joint_log_likelihood(&net, &ParamVector::uniform(&net), &data).unwrap();
        assert!((ll - 3.0 * 0.5f64.ln()).abs() < 1e-12);
        let bad = ParamVector::new(vec![0.0; net.dim()]).unwrap();
        assert!(matches!(joint_log_likelihood(&net, &bad, &data), Err(Error::NotNormalized(_))));
    }
}
