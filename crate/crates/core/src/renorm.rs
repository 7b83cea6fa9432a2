//! Converting subnormalized weights into proper CPTs without changing the
//! class posterior `P(y | x)`.
//!
//! A CPT column of a child `c` of `y` can be rescaled by `1/ρ_z` (where `z`
//! is the parent configuration) as long as `ρ_z` is folded into another
//! local function whose scope contains all of `z`. Such a function exists
//! for every child exactly when the child's parents are pairwise adjacent.
//! Columns are processed in reverse topological order, so a function that
//! absorbs a factor is normalized after it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LabelIter, Network, ParamVector};

/// Child `child` of the target has parents `a` and `b` that are not adjacent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub child: usize,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenormCheck {
    pub renormalizable: bool,
    pub violations: Vec<Violation>,
}

fn adjacent(net: &Network, a: usize, b: usize) -> bool {
    net.parents(a).contains(&b) || net.parents(b).contains(&a)
}

/// Tests whether the parents of every child of `target` are pairwise
/// adjacent.
pub fn check_renormalizable(net: &Network, target: usize) -> RenormCheck {
    let mut violations = Vec::new();
    for &c in net.children(target) {
        let ps = net.parents(c);
        for (k, &a) in ps.iter().enumerate() {
            for &b in &ps[k + 1..] {
                if !adjacent(net, a, b) {
                    violations.push(Violation { child: c, a, b });
                }
            }
        }
    }
    RenormCheck {
        renormalizable: violations.is_empty(),
        violations,
    }
}

fn topo_positions(net: &Network) -> Vec<usize> {
    let mut pos = vec![0; net.num_nodes()];
    for (k, &j) in net.topological_order().iter().enumerate() {
        pos[j] = k;
    }
    pos
}

/// The local function that absorbs the column factors of child `j`: among
/// the target's function and the target's other children, those processed
/// after `j` whose scope covers `π(j)`, the one processed last.
fn covering_function(net: &Network, j: usize, target: usize, pos: &[usize]) -> Option<usize> {
    std::iter::once(target)
        .chain(net.children(target).iter().copied())
        .filter(|&k| k != j && pos[k] < pos[j])
        .filter(|&k| net.parents(j).iter().all(|&p| p == k || net.parents(k).contains(&p)))
        .min_by_key(|&k| pos[k])
}

fn check_target(net: &Network, target: usize) -> Result<()> {
    if target >= net.num_nodes() {
        return Err(Error::InvalidConfig(format!("target index {target} out of range")));
    }
    Ok(())
}

/// Renormalizes subnormalized weights into proper CPTs that induce the same
/// `P(target | rest)`.
pub fn renormalize(net: &Network, w: &ParamVector, target: usize) -> Result<ParamVector> {
    net.check_dim(w)?;
    if !w.is_subnormalized(net) {
        return Err(Error::NotSubnormalized(
            net.normalization_residuals(w).into_iter().fold(f64::NEG_INFINITY, f64::max),
        ));
    }
    renormalize_any(net, w, target)
}

/// Same procedure without the subnormalization precondition, for weights
/// produced by other trainers.
pub fn renormalize_any(net: &Network, w: &ParamVector, target: usize) -> Result<ParamVector> {
    net.check_dim(w)?;
    check_target(net, target)?;
    let check = check_renormalizable(net, target);
    if let Some(v) = check.violations.first() {
        return Err(Error::NotRenormalizable {
            child: net.name(v.child).to_string(),
            a: net.name(v.a).to_string(),
            b: net.name(v.b).to_string(),
        });
    }
    let pos = topo_positions(net);
    let mut out = w.as_slice().to_vec();

    for &j in net.topological_order().iter().rev() {
        if j == target {
            continue;
        }
        let cover = if net.parents(j).contains(&target) {
            Some(covering_function(net, j, target, &pos).ok_or_else(|| {
                Error::InvalidStructure(format!("no covering function for `{}`", net.name(j)))
            })?)
        } else {
            None
        };
        for b in 0..net.num_configs(j) {
            let range = net.column_range(j, b);
            let log_rho = log_sum_exp(&out[range.clone()]);
            for v in &mut out[range] {
                *v -= log_rho;
            }
            if let Some(k) = cover {
                absorb(net, &mut out, k, j, b, log_rho);
            }
        }
    }
    for b in 0..net.num_configs(target) {
        let range = net.column_range(target, b);
        let log_mass = log_sum_exp(&out[range.clone()]);
        for v in &mut out[range] {
            *v -= log_mass;
        }
    }
    ParamVector::new(out)
}

/// Adds `log_rho` to every cell of node `k`'s CPT that agrees with parent
/// configuration `b` of node `j`.
fn absorb(net: &Network, w: &mut [f64], k: usize, j: usize, b: usize, log_rho: f64) {
    let pv = net.decode_config(j, b);
    let kp = net.parents(k);
    for bk in 0..net.num_configs(k) {
        let kv = net.decode_config(k, bk);
        for a in 0..net.arity(k) {
            let agrees = net.parents(j).iter().zip(&pv).all(|(&p, &val)| {
                if p == k {
                    a == val
                } else {
                    let slot = kp.iter().position(|&q| q == p).expect("cover contains all parents");
                    kv[slot] == val
                }
            });
            if agrees {
                w[net.column_range(k, bk).start + a] += log_rho;
            }
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Enumeration cap on blanket configurations for exact posterior checks.
pub const EVIDENCE_CAP: usize = 1 << 16;

/// `P(target | blanket)` for every blanket configuration (outer) and target
/// value (inner).
fn posteriors(net: &Network, w: &[f64], target: usize, blanket: &[usize]) -> Vec<Vec<f64>> {
    let factors: Vec<usize> = (0..net.num_nodes())
        .filter(|&j| j == target || net.parents(j).contains(&target))
        .collect();
    let arities: Vec<usize> = blanket.iter().map(|&b| net.arity(b)).collect();
    let mut values = vec![0usize; net.num_nodes()];
    let mut out = Vec::new();
    for config in LabelIter::new(arities) {
        for (&b, &v) in blanket.iter().zip(&config) {
            values[b] = v;
        }
        let scores: Vec<f64> = (0..net.arity(target))
            .map(|y| {
                values[target] = y;
                factors.iter().map(|&j| w[net.active_index(j, &values)]).sum()
            })
            .collect();
        let z = log_sum_exp(&scores);
        out.push(scores.iter().map(|s| (s - z).exp()).collect());
    }
    out
}

/// Exact `max |P(y|x, before) − P(y|x, after)|` over all configurations of
/// the target's Markov blanket (variables outside it cannot matter).
pub fn verify_decision_preserved(
    net: &Network,
    before: &ParamVector,
    after: &ParamVector,
    target: usize,
) -> Result<f64> {
    net.check_dim(before)?;
    net.check_dim(after)?;
    check_target(net, target)?;
    let blanket: Vec<usize> = net.markov_blanket(target).into_iter().collect();
    let size: u128 = blanket.iter().map(|&b| net.arity(b) as u128).product();
    if size > EVIDENCE_CAP as u128 {
        return Err(Error::EvidenceSpaceTooLarge { size, cap: EVIDENCE_CAP });
    }
    let p = posteriors(net, before.as_slice(), target, &blanket);
    let q = posteriors(net, after.as_slice(), target, &blanket);
    Ok(p.iter()
        .zip(&q)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max))
}

/// Where the weights being renormalized came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParamSource {
    /// The subnormalized max-margin problem; renormalized weights stay optimal.
    MaxMargin,
    /// Any other trainer; the decision rule is preserved but optimality for
    /// the max-margin problem is not implied.
    Foreign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenormReport {
    pub renormalizable: bool,
    pub violating_children: Vec<Violation>,
    pub normalized_params: Option<ParamVector>,
    /// `None` when the blanket is too large to enumerate or nothing was
    /// renormalized.
    pub max_decision_deviation: Option<f64>,
    pub source: ParamSource,
}

pub fn renormalize_report(net: &Network, w: &ParamVector, target: usize, source: ParamSource) -> Result<RenormReport> {
    check_target(net, target)?;
    let check = check_renormalizable(net, target);
    if !check.renormalizable {
        return Ok(RenormReport {
            renormalizable: false,
            violating_children: check.violations,
            normalized_params: None,
            max_decision_deviation: None,
            source,
        });
    }
    let normalized = match source {
        ParamSource::MaxMargin => renormalize(net, w, target)?,
        ParamSource::Foreign => renormalize_any(net, w, target)?,
    };
    let deviation = match verify_decision_preserved(net, w, &normalized, target) {
        Ok(d) => Some(d),
        Err(Error::EvidenceSpaceTooLarge { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(RenormReport {
        renormalizable: true,
        violating_children: Vec::new(),
        normalized_params: Some(normalized),
        max_decision_deviation: deviation,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb() -> Network {
        Network::from_names(&[("y", 2, &[]), ("x", 2, &["y"])], &["y"]).unwrap()
    }

    #[test]
    fn condition_examples() {
        let nb3 = Network::from_names(
            &[("y", 2, &[]), ("a", 2, &["y"]), ("b", 2, &["y"])],
            &["y"],
        )
        .unwrap();
        assert!(check_renormalizable(&nb3, 0).renormalizable);

        let v = Network::from_names(&[("y", 2, &[]), ("z", 2, &[]), ("c", 2, &["y", "z"])], &["y"])
            .unwrap();
        let check = check_renormalizable(&v, 0);
        assert!(!check.renormalizable);
        assert_eq!(check.violations, vec![Violation { child: 2, a: 0, b: 1 }]);

        let m = Network::from_names(
            &[("y", 2, &[]), ("z", 2, &["y"]), ("c", 2, &["y", "z"])],
            &["y"],
        )
        .unwrap();
        assert!(check_renormalizable(&m, 0).renormalizable);
    }

    #[test]
    fn normalized_input_is_fixed_point() {
        let net = nb();
        let w = ParamVector::from_theta(&net, &[0.3, 0.7, 0.1, 0.9, 0.6, 0.4]).unwrap();
        let r = renormalize(&net, &w, 0).unwrap();
        for (a, b) in r.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn naive_bayes_column_is_rescaled_and_folded() {
        let net = nb();
        // y column (0.3, 0.4); x|y=0 column (0.2, 0.6); x|y=1 column (0.5, 0.5).
        let w = ParamVector::new(
            [0.3, 0.4, 0.2, 0.6, 0.5, 0.5].iter().map(|v: &f64| v.ln()).collect(),
        )
        .unwrap();
        let r = renormalize(&net, &w, 0).unwrap();
        let theta = r.theta();
        assert!((theta[2] - 0.25).abs() < 1e-12 && (theta[3] - 0.75).abs() < 1e-12);
        // y-function picks up 0.8 for y=0 and 1.0 for y=1 before normalizing.
        let (u0, u1) = (0.3 * 0.8, 0.4 * 1.0);
        assert!((theta[0] - u0 / (u0 + u1)).abs() < 1e-12);
        assert!(r.max_residual(&net) <= 1e-10);
        assert!(verify_decision_preserved(&net, &w, &r, 0).unwrap() <= 1e-12);
    }

    #[test]
    fn refuses_bad_inputs() {
        let v = Network::from_names(&[("y", 2, &[]), ("z", 2, &[]), ("c", 2, &["y", "z"])], &["y"])
            .unwrap();
        let w = ParamVector::new(vec![-1.0; v.dim()]).unwrap();
        assert!(matches!(renormalize(&v, &w, 0), Err(Error::NotRenormalizable { .. })));
        let net = nb();
        let w = ParamVector::new(vec![0.0; net.dim()]).unwrap();
        assert!(matches!(renormalize(&net, &w, 0), Err(Error::NotSubnormalized(_))));
        assert!(renormalize_any(&net, &w, 0).unwrap().is_normalized(&net));
    }

    #[test]
    fn report_for_unrenormalizable_structure() {
        let v = Network::from_names(&[("y", 2, &[]), ("z", 2, &[]), ("c", 2, &["y", "z"])], &["y"])
            .unwrap();
        let w = ParamVector::uniform(&v);
        let rep = renormalize_report(&v, &w, 0, ParamSource::MaxMargin).unwrap();
        assert!(!rep.renormalizable && rep.normalized_params.is_none());
        assert_eq!(rep.violating_children.len(), 1);
    }

    #[test]
    fn identical_params_have_zero_deviation() {
        let net = nb();
        let w = ParamVector::new(vec![-0.5, -1.5, -2.0, -0.1, -0.7, -0.9]).unwrap();
        assert_eq!(verify_decision_preserved(&net, &w, &w, 0).unwrap(), 0.0);
    }
}
