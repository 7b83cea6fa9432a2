use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::params::ParamVector;

/// A discrete variable of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub arity: usize,
}

impl Variable {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        Self {
            name: name.into(),
            arity,
        }
    }
}

/// Position of one CPT cell: node `node`, child value `value`, parent
/// configuration `config` (row-major over the declared parent order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CptIndex {
    pub node: usize,
    pub value: usize,
    pub config: usize,
}

/// Checks a candidate network and returns a topological order of its nodes.
///
/// Among the valid orders the one that always emits the smallest ready node
/// index first is returned, so unconnected nodes keep their index order.
pub fn validate_structure(
    vars: &[Variable],
    parents: &[Vec<usize>],
    class_vars: &[usize],
) -> Result<Vec<usize>> {
    let n = vars.len();
    if n == 0 {
        return Err(Error::InvalidStructure("network has no nodes".into()));
    }
    if parents.len() != n {
        return Err(Error::InvalidStructure(format!(
            "{} parent lists for {} nodes",
            parents.len(),
            n
        )));
    }
    for v in vars {
        if v.arity < 2 {
            return Err(Error::BadArity {
                name: v.name.clone(),
                arity: v.arity,
            });
        }
    }
    let mut seen_names = BTreeSet::new();
    for v in vars {
        if !seen_names.insert(v.name.as_str()) {
            return Err(Error::InvalidStructure(format!(
                "duplicate variable name `{}`",
                v.name
            )));
        }
    }
    for (j, ps) in parents.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for &p in ps {
            if p >= n {
                return Err(Error::BadParentIndex(format!(
                    "node `{}` lists parent index {p} of {n} nodes",
                    vars[j].name
                )));
            }
            if p == j {
                return Err(Error::BadParentIndex(format!(
                    "node `{}` is its own parent",
                    vars[j].name
                )));
            }
            if !seen.insert(p) {
                return Err(Error::BadParentIndex(format!(
                    "node `{}` lists parent `{}` twice",
                    vars[j].name, vars[p].name
                )));
            }
        }
    }
    if class_vars.is_empty() {
        return Err(Error::InvalidStructure("no class variable".into()));
    }
    let mut seen = BTreeSet::new();
    for &c in class_vars {
        if c >= n || !seen.insert(c) {
            return Err(Error::InvalidStructure(format!(
                "class variable index {c} is invalid or repeated"
            )));
        }
    }

    // Kahn's algorithm with a min-heap for a deterministic order.
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (j, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(j);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
        .filter(|&j| indegree[j] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(j)) = ready.pop() {
        order.push(j);
        for &c in &children[j] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&j| indegree[j] > 0).unwrap_or(0);
        return Err(Error::CycleDetected(vars[stuck].name.clone()));
    }
    Ok(order)
}

/// A Bayesian network structure together with the flat indexing of its CPT
/// cells.
///
/// Cells of node `j` occupy a contiguous block; inside the block cell
/// `(a, b)` sits at `b * arity(j) + a`, so each CPT column (fixed `b`) is a
/// contiguous run of `arity(j)` weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    vars: Vec<Variable>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    class_vars: Vec<usize>,
    order: Vec<usize>,
    offsets: Vec<usize>,
    configs: Vec<usize>,
    column_offsets: Vec<usize>,
    dim: usize,
    num_columns: usize,
}

impl Network {
    pub fn new(vars: Vec<Variable>, parents: Vec<Vec<usize>>, class_vars: Vec<usize>) -> Result<Self> {
        let order = validate_structure(&vars, &parents, &class_vars)?;
        let n = vars.len();
        let mut children = vec![Vec::new(); n];
        for (j, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(j);
            }
        }
        let mut offsets = Vec::with_capacity(n);
        let mut column_offsets = Vec::with_capacity(n);
        let mut configs = Vec::with_capacity(n);
        let mut dim = 0usize;
        let mut num_columns = 0usize;
        for j in 0..n {
            let count = parents[j]
                .iter()
                .try_fold(1usize, |acc, &p| acc.checked_mul(vars[p].arity))
                .ok_or_else(|| Error::InvalidStructure(format!("CPT of `{}` is too large", vars[j].name)))?;
            offsets.push(dim);
            column_offsets.push(num_columns);
            configs.push(count);
            dim += count * vars[j].arity;
            num_columns += count;
        }
        Ok(Self {
            vars,
            parents,
            children,
            class_vars,
            order,
            offsets,
            configs,
            column_offsets,
            dim,
            num_columns,
        })
    }

    /// Builds a network from names: `(name, arity, parent names)`.
    pub fn from_names(nodes: &[(&str, usize, &[&str])], class: &[&str]) -> Result<Self> {
        let vars: Vec<Variable> = nodes.iter().map(|(n, a, _)| Variable::new(*n, *a)).collect();
        let lookup = |name: &str| {
            vars.iter()
                .position(|v| v.name == name)
                .ok_or_else(|| Error::BadParentIndex(format!("unknown variable `{name}`")))
        };
        let parents = nodes
            .iter()
            .map(|(_, _, ps)| ps.iter().map(|p| lookup(p)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let class_vars = class.iter().map(|c| lookup(c)).collect::<Result<Vec<_>>>()?;
        Self::new(vars, parents, class_vars)
    }

    pub fn num_nodes(&self) -> usize {
        self.vars.len()
    }

    /// Number of CPT cells, i.e. the length of a parameter vector.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_columns(&self) -> usize {
        self.num_columns
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn name(&self, j: usize) -> &str {
        &self.vars[j].name
    }

    pub fn arity(&self, j: usize) -> usize {
        self.vars[j].arity
    }

    pub fn parents(&self, j: usize) -> &[usize] {
        &self.parents[j]
    }

    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    pub fn class_vars(&self) -> &[usize] {
        &self.class_vars
    }

    pub fn is_class(&self, j: usize) -> bool {
        self.class_vars.contains(&j)
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Number of parent configurations of node `j`.
    pub fn num_configs(&self, j: usize) -> usize {
        self.configs[j]
    }

    pub fn node_range(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j] + self.configs[j] * self.vars[j].arity
    }

    /// Flat range of the CPT column `(j, b)`.
    pub fn column_range(&self, j: usize, b: usize) -> Range<usize> {
        let start = self.offsets[j] + b * self.vars[j].arity;
        start..start + self.vars[j].arity
    }

    /// Flat position of column `(j, b)` among all columns.
    pub fn column_index(&self, j: usize, b: usize) -> usize {
        self.column_offsets[j] + b
    }

    /// All columns in node order as `(node, config, flat range)`.
    pub fn columns(&self) -> impl Iterator<Item = (usize, usize, Range<usize>)> + '_ {
        (0..self.num_nodes())
            .flat_map(move |j| (0..self.configs[j]).map(move |b| (j, b, self.column_range(j, b))))
    }

    pub fn feature_index(&self, idx: CptIndex) -> usize {
        debug_assert!(idx.value < self.arity(idx.node) && idx.config < self.configs[idx.node]);
        self.offsets[idx.node] + idx.config * self.vars[idx.node].arity + idx.value
    }

    pub fn cpt_index(&self, flat: usize) -> CptIndex {
        assert!(flat < self.dim, "feature index {flat} out of range {}", self.dim);
        let node = self.offsets.partition_point(|&o| o <= flat) - 1;
        let local = flat - self.offsets[node];
        let arity = self.vars[node].arity;
        CptIndex {
            node,
            value: local % arity,
            config: local / arity,
        }
    }

    /// Row-major parent configuration index of node `j` under `values`
    /// (a full assignment; only the parents' entries are read).
    pub fn parent_config(&self, j: usize, values: &[usize]) -> usize {
        self.parents[j]
            .iter()
            .fold(0, |acc, &p| acc * self.vars[p].arity + values[p])
    }

    /// Inverse of [`Network::parent_config`]: the parent values of config `b`.
    pub fn decode_config(&self, j: usize, mut b: usize) -> Vec<usize> {
        let mut out = vec![0; self.parents[j].len()];
        for (k, &p) in self.parents[j].iter().enumerate().rev() {
            let ar = self.vars[p].arity;
            out[k] = b % ar;
            b /= ar;
        }
        out
    }

    /// Flat index of the indicator that node `j` activates under `values`.
    pub fn active_index(&self, j: usize, values: &[usize]) -> usize {
        self.offsets[j] + self.parent_config(j, values) * self.vars[j].arity + values[j]
    }

    pub fn check_assignment(&self, values: &[usize]) -> Result<()> {
        if values.len() != self.num_nodes() {
            return Err(Error::InvalidAssignment(format!(
                "{} values for {} nodes",
                values.len(),
                self.num_nodes()
            )));
        }
        for (j, &v) in values.iter().enumerate() {
            if v >= self.arity(j) {
                return Err(Error::InvalidAssignment(format!(
                    "value {v} out of range for `{}` (arity {})",
                    self.name(j),
                    self.arity(j)
                )));
            }
        }
        Ok(())
    }

    /// Sparse indicator vector: the active feature index of every node, in
    /// node order.
    pub fn feature_vector(&self, values: &[usize]) -> Result<Vec<usize>> {
        self.check_assignment(values)?;
        Ok((0..self.num_nodes()).map(|j| self.active_index(j, values)).collect())
    }

    /// `φ(x)·w`; the log-probability of `x` when `w` is normalized.
    pub fn log_prob(&self, w: &ParamVector, values: &[usize]) -> Result<f64> {
        self.check_dim(w)?;
        self.check_assignment(values)?;
        Ok(self.score_unchecked(w.as_slice(), values))
    }

    pub(crate) fn score_unchecked(&self, w: &[f64], values: &[usize]) -> f64 {
        (0..self.num_nodes()).map(|j| w[self.active_index(j, values)]).sum()
    }

    pub(crate) fn check_dim(&self, w: &ParamVector) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: w.len(),
            });
        }
        Ok(())
    }

    /// Parents, children and the children's other parents of `target`.
    pub fn markov_blanket(&self, target: usize) -> BTreeSet<usize> {
        let mut out: BTreeSet<usize> = self.parents[target].iter().copied().collect();
        for &c in &self.children[target] {
            out.insert(c);
            out.extend(self.parents[c].iter().copied());
        }
        out.remove(&target);
        out
    }

    /// Nodes whose CPT mentions at least one class variable.
    pub fn class_factors(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&j| self.is_class(j) || self.parents[j].iter().any(|&p| self.is_class(p)))
            .collect()
    }

    /// Non-class variables that the class posterior depends on.
    pub fn required_evidence(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &c in &self.class_vars {
            out.extend(self.markov_blanket(c));
        }
        out.retain(|&j| !self.is_class(j));
        out
    }

    /// Number of joint class assignments.
    pub fn label_space_size(&self) -> u128 {
        self.class_vars
            .iter()
            .map(|&c| self.arity(c) as u128)
            .product()
    }

    /// Joint class assignments in lexicographic order over `class_vars`.
    pub fn label_space(&self) -> LabelIter {
        LabelIter::new(self.class_vars.iter().map(|&c| self.arity(c)).collect())
    }

    /// Class values of a full assignment, in `class_vars` order.
    pub fn labels_of(&self, values: &[usize]) -> Vec<usize> {
        self.class_vars.iter().map(|&c| values[c]).collect()
    }

    /// Writes `labels` into the class positions of `values`.
    pub fn set_labels(&self, values: &mut [usize], labels: &[usize]) {
        for (&c, &l) in self.class_vars.iter().zip(labels) {
            values[c] = l;
        }
    }

    /// Max-score joint class assignment given evidence on the non-class
    /// variables. Evidence outside the class variables' blankets is ignored;
    /// ties go to the lexicographically smallest labeling.
    pub fn predict(&self, w: &ParamVector, evidence: &[Option<usize>]) -> Result<Vec<usize>> {
        self.check_dim(w)?;
        if evidence.len() != self.num_nodes() {
            return Err(Error::InvalidAssignment(format!(
                "{} evidence slots for {} nodes",
                evidence.len(),
                self.num_nodes()
            )));
        }
        let mut values = vec![0usize; self.num_nodes()];
        for j in self.required_evidence() {
            match evidence[j] {
                Some(v) if v < self.arity(j) => values[j] = v,
                Some(v) => {
                    return Err(Error::InvalidAssignment(format!(
                        "value {v} out of range for `{}`",
                        self.name(j)
                    )))
                }
                None => return Err(Error::MissingEvidence(self.name(j).to_string())),
            }
        }
        Ok(self.predict_unchecked(w.as_slice(), &mut values))
    }

    /// Like [`Network::predict`] for a complete row; the row's class values
    /// are ignored.
    pub fn predict_row(&self, w: &ParamVector, row: &[usize]) -> Result<Vec<usize>> {
        self.check_dim(w)?;
        self.check_assignment(row)?;
        let mut values = row.to_vec();
        Ok(self.predict_unchecked(w.as_slice(), &mut values))
    }

    pub(crate) fn predict_unchecked(&self, w: &[f64], values: &mut [usize]) -> Vec<usize> {
        let factors = self.class_factors();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for labels in self.label_space() {
            self.set_labels(values, &labels);
            let s: f64 = factors.iter().map(|&j| w[self.active_index(j, values)]).sum();
            if best.as_ref().map_or(true, |(b, _)| s > *b) {
                best = Some((s, labels));
            }
        }
        best.expect("label space is never empty").1
    }

    /// `Σ_a exp(w_{j,ab}) − 1` for every column, in column order.
    pub fn normalization_residuals(&self, w: &ParamVector) -> Vec<f64> {
        let w = w.as_slice();
        self.columns()
            .map(|(_, _, r)| w[r].iter().map(|v| v.exp()).sum::<f64>() - 1.0)
            .collect()
    }
}

/// Odometer over joint assignments, last position fastest.
#[derive(Debug, Clone)]
pub struct LabelIter {
    arities: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl LabelIter {
    pub fn new(arities: Vec<usize>) -> Self {
        let next = if arities.iter().all(|&a| a > 0) {
            Some(vec![0; arities.len()])
        } else {
            None
        };
        Self { arities, next }
    }
}

impl Iterator for LabelIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut k = succ.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            succ[k] += 1;
            if succ[k] < self.arities[k] {
                self.next = Some(succ);
                break;
            }
            succ[k] = 0;
        }
        Some(current)
    }
}
