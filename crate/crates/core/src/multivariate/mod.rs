//! Vector-valued labels: Hamming-scaled margins and cutting-plane training.
//!
//! The constraint set has one row per example and labeling, which is
//! exponential in the number of class variables. Training starts from the
//! zero rows (which only assert `ε_i ≥ 0`), solves the restricted problem
//! with the barrier method, adds each example's most violated labeling and
//! repeats until nothing is violated by more than the tolerance.

mod chain;

use std::collections::HashSet;
use std::fmt::Write as _;

use log::debug;
use rayon::prelude::*;

pub use chain::{augmented_score, check_labels, exhaustive, hamming_margin, viterbi, ChainLabelModel, Decoded, TIE_TOL};

use crate::barrier::{self, BarrierConfig, ConstraintSet, Solution, SolverState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::margin::{delta_row, DeltaRow, MarginKind, MarginProblem};
use crate::model::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationMethod {
    Viterbi,
    Exhaustive,
}

/// `γ·δ(i,y) − ε_i − Δ(i,y)·w`; positive when the constraint is violated.
pub fn violation_score(
    net: &Network,
    data: &Dataset,
    i: usize,
    labels: &[usize],
    w: &[f64],
    gamma: f64,
    eps_i: f64,
) -> Result<f64> {
    check_labels(net, labels)?;
    if i >= data.len() {
        return Err(Error::InvalidLabelVector(format!("example {i} out of range")));
    }
    let row = delta_row(net, data.row(i), i, labels, MarginKind::Hamming);
    Ok(gamma * row.margin - eps_i - row.dot(w))
}

/// The labeling of example `i` that maximizes the constraint violation,
/// with its violation.
pub fn generate_constraint(
    net: &Network,
    data: &Dataset,
    i: usize,
    w: &[f64],
    gamma: f64,
    eps_i: f64,
    model: Option<&ChainLabelModel>,
    method: GenerationMethod,
) -> Result<(Vec<usize>, f64)> {
    let row = data.row(i);
    let truth = net.labels_of(row);
    let decoded = match method {
        GenerationMethod::Viterbi => {
            let model = model.ok_or_else(|| Error::NotAChain("no chain model supplied".into()))?;
            viterbi(net, model, w, row, Some(&truth), gamma)
        }
        GenerationMethod::Exhaustive => exhaustive(net, w, row, &truth, gamma)?,
    };
    let true_score = augmented_score(net, w, row, &truth, &truth, gamma);
    Ok((decoded.labels, decoded.score - true_score - eps_i))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub example: usize,
    pub labels: Vec<usize>,
    pub violation_at_add: f64,
    pub round_added: usize,
}

/// Constraints currently enforced, in insertion order, without duplicates.
#[derive(Debug, Clone, Default)]
pub struct ConstraintPool {
    entries: Vec<PoolEntry>,
    rows: Vec<DeltaRow>,
    seen: HashSet<(usize, Vec<usize>)>,
}

impl ConstraintPool {
    /// Pool holding each example's zero row `(i, y^i)`.
    pub fn with_zero_rows(net: &Network, data: &Dataset) -> Self {
        let mut pool = Self::default();
        for (i, row) in data.rows().iter().enumerate() {
            pool.insert(net, data, i, net.labels_of(row), 0.0, 0);
        }
        pool
    }

    /// Adds `(i, labels)` unless present; returns whether it was new.
    pub fn insert(
        &mut self,
        net: &Network,
        data: &Dataset,
        example: usize,
        labels: Vec<usize>,
        violation_at_add: f64,
        round_added: usize,
    ) -> bool {
        if !self.seen.insert((example, labels.clone())) {
            return false;
        }
        self.rows
            .push(delta_row(net, data.row(example), example, &labels, MarginKind::Hamming));
        self.entries.push(PoolEntry {
            example,
            labels,
            violation_at_add,
            round_added,
        });
        true
    }

    pub fn contains(&self, example: usize, labels: &[usize]) -> bool {
        self.seen.contains(&(example, labels.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn rows(&self) -> &[DeltaRow] {
        &self.rows
    }

    pub fn to_problem(&self, num_examples: usize, dim: usize, reg: f64) -> Result<MarginProblem> {
        MarginProblem::new(self.rows.clone(), num_examples, dim, reg)
    }

    /// One line per constraint: `example labels violation_at_add round_added`,
    /// labels comma-separated.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let labels: Vec<String> = e.labels.iter().map(|l| l.to_string()).collect();
            let _ = writeln!(
                out,
                "{} {} {:e} {}",
                e.example,
                labels.join(","),
                e.violation_at_add,
                e.round_added
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlaneConfig {
    pub violation_tol: f64,
    pub max_rounds: usize,
    /// Labelings generated per example per round. Values above 1 add the
    /// best labeling plus further exhaustive-order runners-up.
    pub per_example: usize,
    pub method: Option<GenerationMethod>,
    pub set: ConstraintSet,
    /// Slack given to new rows when warm-starting the next solve.
    pub warm_padding: f64,
}

impl Default for CuttingPlaneConfig {
    fn default() -> Self {
        Self {
            violation_tol: 1e-6,
            max_rounds: 60,
            per_example: 1,
            method: None,
            set: ConstraintSet::Subnormalization,
            warm_padding: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlaneRound {
    pub round: usize,
    pub pool_size: usize,
    pub objective: f64,
    pub added: usize,
    pub max_violation: f64,
}

#[derive(Debug, Clone)]
pub struct CuttingPlaneResult {
    pub solution: Solution,
    pub pool: ConstraintPool,
    pub rounds: Vec<CuttingPlaneRound>,
    /// False when `max_rounds` ran out while constraints were still being
    /// added.
    pub completed: bool,
}

impl CuttingPlaneResult {
    pub fn max_rounds_exceeded(&self) -> bool {
        !self.completed
    }
}

fn warm_state(prev: &Solution, problem: &MarginProblem, padding: f64) -> SolverState {
    let mut state = prev.state();
    for i in 0..problem.num_examples() {
        let need = problem
            .rows_of(i)
            .iter()
            .map(|&r| {
                let row = &problem.rows()[r];
                state.gamma * row.margin - row.dot(&state.w)
            })
            .fold(0.0, f64::max)
            + padding;
        if state.eps[i] < need {
            state.eps[i] = need;
        }
    }
    state
}

/// Constraint-generation training on the full label space of each example.
pub fn cutting_plane_solve(
    net: &Network,
    data: &Dataset,
    reg: f64,
    config: &BarrierConfig,
    cp: &CuttingPlaneConfig,
) -> Result<CuttingPlaneResult> {
    data.check_schema(net)?;
    if cp.max_rounds == 0 || cp.per_example == 0 {
        return Err(Error::InvalidConfig("max_rounds and per_example must be positive".into()));
    }
    let chain = ChainLabelModel::from_network(net);
    let method = match (cp.method, &chain) {
        (Some(m), _) => m,
        (None, Ok(_)) => GenerationMethod::Viterbi,
        (None, Err(_)) => GenerationMethod::Exhaustive,
    };
    let chain = match method {
        GenerationMethod::Viterbi => Some(chain?),
        GenerationMethod::Exhaustive => None,
    };
    let mut pool = ConstraintPool::with_zero_rows(net, data);
    // The zero rows alone leave γ unbounded, so the first labelings are
    // generated at the solver's starting point with the smallest feasible ε.
    let seed_problem = pool.to_problem(data.len(), net.dim(), reg)?;
    let start = barrier::initial_point(&seed_problem, net, config, cp.set)?;
    let zero_eps = vec![0.0; data.len()];
    let seeds = generate_all(net, data, &start.w, start.gamma, &zero_eps, chain.as_ref(), method, cp.per_example)?;
    for (i, cands) in seeds.into_iter().enumerate() {
        for (labels, v) in cands {
            if v > cp.violation_tol {
                pool.insert(net, data, i, labels, v, 0);
            }
        }
    }
    let mut rounds = Vec::new();
    let mut previous: Option<Solution> = None;

    for round in 1..=cp.max_rounds {
        let problem = pool.to_problem(data.len(), net.dim(), reg)?;
        let solution = match &previous {
            None => barrier::solve(&problem, net, config, cp.set)?,
            Some(prev) => {
                let start = warm_state(prev, &problem, cp.warm_padding);
                barrier::solve_from(&problem, net, config, cp.set, start, config.mu_initial)?
            }
        };
        let candidates = generate_all(
            net,
            data,
            solution.w.as_slice(),
            solution.gamma,
            &solution.eps,
            chain.as_ref(),
            method,
            cp.per_example,
        )?;

        let mut added = 0;
        let mut max_violation = f64::NEG_INFINITY;
        for (i, cands) in candidates.into_iter().enumerate() {
            for (labels, v) in cands {
                max_violation = max_violation.max(v);
                if v > cp.violation_tol && !pool.contains(i, &labels) {
                    assert!(v > cp.violation_tol);
                    pool.insert(net, data, i, labels, v, round);
                    added += 1;
                }
            }
        }
        debug!(
            "cutting plane round {round}: pool={} objective={:.8e} added={added} max_violation={:.3e}",
            pool.len(),
            solution.objective,
            max_violation
        );
        rounds.push(CuttingPlaneRound {
            round,
            pool_size: problem.rows().len(),
            objective: solution.objective,
            added,
            max_violation,
        });
        if added == 0 {
            return Ok(CuttingPlaneResult {
                solution,
                pool,
                rounds,
                completed: true,
            });
        }
        previous = Some(solution);
    }
    // Re-solve so the returned solution reflects the final pool.
    let problem = pool.to_problem(data.len(), net.dim(), reg)?;
    let prev = previous.expect("at least one round ran");
    let start = warm_state(&prev, &problem, cp.warm_padding);
    let solution = barrier::solve_from(&problem, net, config, cp.set, start, config.mu_initial)?;
    Ok(CuttingPlaneResult {
        solution,
        pool,
        rounds,
        completed: false,
    })
}

#[allow(clippy::too_many_arguments)]
fn generate_all(
    net: &Network,
    data: &Dataset,
    w: &[f64],
    gamma: f64,
    eps: &[f64],
    chain: Option<&ChainLabelModel>,
    method: GenerationMethod,
    per_example: usize,
) -> Result<Vec<Vec<(Vec<usize>, f64)>>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (labels, v) = generate_constraint(net, data, i, w, gamma, eps[i], chain, method)?;
            let mut out = vec![(labels, v)];
            if per_example > 1 {
                out.extend(runners_up(net, data, i, w, gamma, eps[i], per_example)?);
            }
            Ok(out)
        })
        .collect()
}

/// Additional violated labelings for batch generation: the next-best
/// labelings by violation, found by enumeration.
fn runners_up(
    net: &Network,
    data: &Dataset,
    i: usize,
    w: &[f64],
    gamma: f64,
    eps_i: f64,
    count: usize,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let size = net.label_space_size();
    if size > 1 << 20 {
        return Err(Error::LabelSpaceTooLarge { size, cap: 1 << 20 });
    }
    let mut all: Vec<(Vec<usize>, f64)> = net
        .label_space()
        .map(|labels| {
            let v = violation_score(net, data, i, &labels, w, gamma, eps_i)?;
            Ok((labels, v))
        })
        .collect::<Result<_>>()?;
    // Stable sort keeps lexicographic order among equal violations.
    all.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(all.into_iter().skip(1).take(count - 1).collect())
}

/// Joint MAP labeling of the class chain (`γ = 0`).
pub fn map_labels(net: &Network, model: &ChainLabelModel, w: &[f64], row: &[usize]) -> Vec<usize> {
    viterbi(net, model, w, row, None, 0.0).labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::BarrierConfig;
    use crate::margin::build_delta;
    use crate::model::{ParamVector, Variable};
    use crate::synth::{ancestral_sample, builtin_structure, skewed_params, Builtin, SkewSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_chain(rng: &mut ChaCha8Rng) -> Network {
        let len = rng.gen_range(1..=5);
        let k = rng.gen_range(2..=3);
        let mut vars = Vec::new();
        let mut parents = Vec::new();
        for p in 0..len {
            vars.push(Variable::new(format!("y{p}"), k));
            parents.push(if p == 0 { vec![] } else { vec![2 * (p - 1)] });
            vars.push(Variable::new(format!("x{p}"), rng.gen_range(2..=3)));
            let mut ps = vec![2 * p];
            if p > 0 && rng.gen_bool(0.5) {
                ps.push(2 * (p - 1));
            }
            parents.push(ps);
        }
        let class = (0..len).map(|p| 2 * p).collect();
        Network::new(vars, parents, class).unwrap()
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_margin(&[0, 1, 0], &[0, 0, 0]).unwrap(), 1);
        assert_eq!(hamming_margin(&[1, 1], &[0, 0]).unwrap(), 2);
        assert!(hamming_margin(&[1], &[0, 0]).is_err());
    }

    #[test]
    fn viterbi_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let net = random_chain(&mut rng);
            let model = ChainLabelModel::from_network(&net).unwrap();
            let w: Vec<f64> = (0..net.dim()).map(|_| rng.gen_range(-2.0..0.0)).collect();
            let row: Vec<usize> = (0..net.num_nodes()).map(|j| rng.gen_range(0..net.arity(j))).collect();
            let truth = net.labels_of(&row);
            let gamma = rng.gen_range(0.0..2.0);
            let v = viterbi(&net, &model, &w, &row, Some(&truth), gamma);
            let e = exhaustive(&net, &w, &row, &truth, gamma).unwrap();
            assert!((v.score - e.score).abs() <= 1e-10);
            assert_eq!(v.labels, e.labels);
        }
    }

    #[test]
    fn uniform_weights_flip_everything() {
        let net = builtin_structure(Builtin::HmmChain { length: 4, children: 2 }).unwrap();
        let w = ParamVector::uniform(&net);
        let data = Dataset::new(&net, vec![vec![1; net.num_nodes()]]).unwrap();
        let model = ChainLabelModel::from_network(&net).unwrap();
        let (labels, v) =
            generate_constraint(&net, &data, 0, w.as_slice(), 0.5, 0.0, Some(&model), GenerationMethod::Viterbi)
                .unwrap();
        assert_eq!(labels, vec![0; 4]);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn violation_score_cases() {
        let net = builtin_structure(Builtin::HmmChain { length: 3, children: 1 }).unwrap();
        let data = Dataset::new(&net, vec![vec![0, 1, 1, 0, 1, 0]]).unwrap();
        let w: Vec<f64> = (0..net.dim()).map(|k| -0.1 * k as f64).collect();
        let truth = net.labels_of(data.row(0));
        assert_eq!(violation_score(&net, &data, 0, &truth, &w, 1.3, 0.25).unwrap(), -0.25);
        let y = vec![1, 1, 1];
        let row = delta_row(&net, data.row(0), 0, &y, MarginKind::Hamming);
        let direct = violation_score(&net, &data, 0, &y, &w, 0.0, 0.0).unwrap();
        assert!((direct + row.dot(&w)).abs() < 1e-15);
        assert!(violation_score(&net, &data, 0, &[2, 0, 0], &w, 0.0, 0.0).is_err());
    }

    #[test]
    fn gamma_zero_gives_map() {
        let net = builtin_structure(Builtin::HmmChain { length: 3, children: 2 }).unwrap();
        let w = skewed_params(&net, &SkewSpec::new(0.8, 3).unwrap()).unwrap();
        let data = ancestral_sample(&net, &w, 20, 4).unwrap();
        let model = ChainLabelModel::from_network(&net).unwrap();
        for (i, row) in data.rows().iter().enumerate() {
            let (labels, _) =
                generate_constraint(&net, &data, i, w.as_slice(), 0.0, 0.0, Some(&model), GenerationMethod::Viterbi)
                    .unwrap();
            assert_eq!(labels, net.predict_row(&w, row).unwrap());
        }
    }

    #[test]
    fn non_chain_rejected() {
        let net = Network::from_names(
            &[("a", 2, &[]), ("b", 2, &["a"]), ("c", 2, &["b"]), ("x", 2, &["a", "c"])],
            &["a", "b", "c"],
        )
        .unwrap();
        assert!(matches!(ChainLabelModel::from_network(&net), Err(Error::NotAChain(_))));
    }

    #[test]
    fn single_position_matches_univariate() {
        let net = builtin_structure(Builtin::HmmChain { length: 1, children: 3 }).unwrap();
        let w = skewed_params(&net, &SkewSpec::new(0.8, 1).unwrap()).unwrap();
        let data = ancestral_sample(&net, &w, 1, 2).unwrap();
        let config = BarrierConfig::default();
        let cp = cutting_plane_solve(&net, &data, 1.0, &config, &CuttingPlaneConfig::default()).unwrap();
        assert!(cp.completed);
        let problem = build_delta(&net, &data, MarginKind::Hamming, 1.0).unwrap();
        let uni = barrier::solve(&problem, &net, &config, ConstraintSet::Subnormalization).unwrap();
        assert!((cp.solution.objective - uni.objective).abs() < 1e-8);
        assert!((cp.solution.gamma - uni.gamma).abs() < 1e-8 * uni.gamma.max(1.0));
    }

    #[test]
    fn cutting_plane_pool_and_completeness() {
        let net = builtin_structure(Builtin::HmmChain { length: 3, children: 2 }).unwrap();
        let w = skewed_params(&net, &SkewSpec::new(0.8, 5).unwrap()).unwrap();
        let data = ancestral_sample(&net, &w, 12, 6).unwrap();
        let cp =
            cutting_plane_solve(&net, &data, 1.0, &BarrierConfig::default(), &CuttingPlaneConfig::default()).unwrap();
        assert!(cp.completed);
        let mut seen = HashSet::new();
        for e in cp.pool.entries() {
            assert!(seen.insert((e.example, e.labels.clone())));
            if e.round_added > 0 {
                assert!(e.violation_at_add > 1e-6);
            }
        }
        for (e, row) in cp.pool.entries().iter().zip(cp.pool.rows()) {
            assert_eq!(*row, delta_row(&net, data.row(e.example), e.example, &e.labels, MarginKind::Hamming));
        }
        let sol = &cp.solution;
        for i in 0..data.len() {
            for y in net.label_space() {
                let v = violation_score(&net, &data, i, &y, sol.w.as_slice(), sol.gamma, sol.eps[i]).unwrap();
                assert!(v <= 1e-6, "example {i} labels {y:?} violation {v}");
            }
        }
        let dump = cp.pool.dump();
        assert_eq!(dump.lines().count(), cp.pool.len());
        assert!(dump.lines().next().unwrap().split(' ').count() == 4);
    }
}
