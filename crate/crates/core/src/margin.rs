//! Margin constraints `Δ(i,y)·w ≥ γ·δ(i,y) − ε_i` and related diagnostics.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Network, ParamVector};

/// Default cap on explicitly enumerated label assignments per example.
pub const DEFAULT_ROW_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginKind {
    /// `δ = 1` for every wrong label; single class variable only.
    Multiclass,
    /// `δ` = number of class positions that differ.
    Hamming,
}

/// One sparse constraint row `Δ(i,y) = φ(x^i,y^i) − φ(x^i,y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub example: usize,
    pub labels: Vec<usize>,
    /// `(feature, ±1)` sorted by feature index.
    pub entries: Vec<(usize, f64)>,
    pub margin: f64,
}

impl DeltaRow {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(k, v)| v * w[k]).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn hamming_distance(a: &[usize], b: &[usize]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// The constraint row of example `row` (a full assignment holding the true
/// labels) against the alternative labeling `labels`.
pub fn delta_row(net: &Network, row: &[usize], example: usize, labels: &[usize], kind: MarginKind) -> DeltaRow {
    let truth = net.labels_of(row);
    let mut alt = row.to_vec();
    net.set_labels(&mut alt, labels);
    let mut entries = Vec::new();
    for j in net.class_factors() {
        let t = net.active_index(j, row);
        let a = net.active_index(j, &alt);
        if t != a {
            entries.push((t, 1.0));
            entries.push((a, -1.0));
        }
    }
    entries.sort_by_key(|e| e.0);
    let differing = truth.iter().zip(labels).filter(|(x, y)| x != y).count();
    let margin = match kind {
        MarginKind::Multiclass => (differing > 0) as usize as f64,
        MarginKind::Hamming => differing as f64,
    };
    DeltaRow {
        example,
        labels: labels.to_vec(),
        entries,
        margin,
    }
}

/// Margin constraints over a training set with the slack-cost constant.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginProblem {
    rows: Vec<DeltaRow>,
    num_examples: usize,
    dim: usize,
    reg: f64,
    by_example: Vec<Vec<usize>>,
}

impl MarginProblem {
    pub fn new(rows: Vec<DeltaRow>, num_examples: usize, dim: usize, reg: f64) -> Result<Self> {
        if !(reg > 0.0) || !reg.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "regularization constant must be positive, got {reg}"
            )));
        }
        if num_examples == 0 {
            return Err(Error::InvalidConfig("no training examples".into()));
        }
        let mut by_example = vec![Vec::new(); num_examples];
        for (r, row) in rows.iter().enumerate() {
            if row.example >= num_examples {
                return Err(Error::DimensionMismatch {
                    expected: num_examples,
                    got: row.example,
                });
            }
            if let Some(&(k, _)) = row.entries.iter().find(|e| e.0 >= dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: k });
            }
            by_example[row.example].push(r);
        }
        Ok(Self {
            rows,
            num_examples,
            dim,
            reg,
            by_example,
        })
    }

    pub fn rows(&self) -> &[DeltaRow] {
        &self.rows
    }

    pub fn num_examples(&self) -> usize {
        self.num_examples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn with_reg(&self, reg: f64) -> Result<Self> {
        Self::new(self.rows.clone(), self.num_examples, self.dim, reg)
    }

    /// Row indices belonging to example `i`.
    pub fn rows_of(&self, i: usize) -> &[usize] {
        &self.by_example[i]
    }

    pub fn max_margin(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.margin))
    }
}

/// Enumerates every class labeling of every example (default row cap).
pub fn build_delta(net: &Network, data: &Dataset, kind: MarginKind, reg: f64) -> Result<MarginProblem> {
    build_delta_capped(net, data, kind, reg, DEFAULT_ROW_CAP)
}

pub fn build_delta_capped(
    net: &Network,
    data: &Dataset,
    kind: MarginKind,
    reg: f64,
    cap: usize,
) -> Result<MarginProblem> {
    data.check_schema(net)?;
    if kind == MarginKind::Multiclass && net.class_vars().len() != 1 {
        return Err(Error::InvalidConfig(
            "multiclass margins need exactly one class variable".into(),
        ));
    }
    let size = net.label_space_size();
    if size > cap as u128 {
        return Err(Error::LabelSpaceTooLarge { size, cap });
    }
    let mut rows = Vec::with_capacity(data.len() * size as usize);
    for (i, row) in data.rows().iter().enumerate() {
        for labels in net.label_space() {
            rows.push(delta_row(net, row, i, &labels, kind));
        }
    }
    MarginProblem::new(rows, data.len(), net.dim(), reg)
}

/// Log minimum conditional likelihood ratio of the training set:
/// `min_i min_{y≠y^i} log P(x^i,y^i) − log P(x^i,y)`.
pub fn mclr(net: &Network, w: &ParamVector, data: &Dataset) -> Result<f64> {
    net.check_dim(w)?;
    data.check_schema(net)?;
    let size = net.label_space_size();
    if size > DEFAULT_ROW_CAP as u128 {
        return Err(Error::LabelSpaceTooLarge {
            size,
            cap: DEFAULT_ROW_CAP,
        });
    }
    if data.is_empty() {
        return Err(Error::InvalidConfig("mclr of an empty dataset".into()));
    }
    let w = w.as_slice();
    let mut best = f64::INFINITY;
    for (i, row) in data.rows().iter().enumerate() {
        let truth = net.labels_of(row);
        for labels in net.label_space() {
            if labels != truth {
                let r = delta_row(net, row, i, &labels, MarginKind::Hamming);
                best = best.min(r.dot(w));
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlackDirection {
    /// `(ξ, C) → (ε = γξ, B = C/γ)`.
    XiToEps,
    /// `(ε, B) → (ξ = ε/γ, C = Bγ)`.
    EpsToXi,
}

/// Converts between the two soft-margin parameterizations at margin `gamma`.
pub fn slack_convert(gamma: f64, slacks: &[f64], constant: f64, direction: SlackDirection) -> Result<(Vec<f64>, f64)> {
    if !(gamma > 0.0) {
        return Err(Error::NonpositiveGamma(gamma));
    }
    Ok(match direction {
        SlackDirection::XiToEps => (slacks.iter().map(|x| gamma * x).collect(), constant / gamma),
        SlackDirection::EpsToXi => (slacks.iter().map(|e| e / gamma).collect(), constant * gamma),
    })
}

/// `max_r (γ·δ_r − ε_{i(r)} − Δ_r·w)`; non-positive means every constraint holds.
pub fn margin_feasibility(problem: &MarginProblem, w: &[f64], gamma: f64, eps: &[f64]) -> Result<f64> {
    if eps.len() != problem.num_examples() {
        return Err(Error::DimensionMismatch {
            expected: problem.num_examples(),
            got: eps.len(),
        });
    }
    if w.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: w.len(),
        });
    }
    Ok(problem
        .rows()
        .iter()
        .map(|r| gamma * r.margin - eps[r.example] - r.dot(w))
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CptIndex;

    fn nb() -> Network {
        Network::from_names(&[("y", 2, &[]), ("x", 2, &["y"])], &["y"]).unwrap()
    }

    #[test]
    fn naive_bayes_row() {
        let net = nb();
        let data = Dataset::new(&net, vec![vec![0, 1]]).unwrap();
        let p = build_delta(&net, &data, MarginKind::Multiclass, 1.0).unwrap();
        assert_eq!(p.rows().len(), 2);
        let zero = &p.rows()[0];
        assert!(zero.is_zero() && zero.margin == 0.0);
        let r = &p.rows()[1];
        let f = |node, value, config| net.feature_index(CptIndex { node, value, config });
        let mut expected = vec![(f(0, 0, 0), 1.0), (f(1, 1, 0), 1.0), (f(0, 1, 0), -1.0), (f(1, 1, 1), -1.0)];
        expected.sort_by_key(|e| e.0);
        assert_eq!(r.entries, expected);
        assert_eq!(r.margin, 1.0);
    }

    #[test]
    fn row_count_is_examples_times_labels() {
        let net = Network::from_names(&[("y", 4, &[]), ("x", 2, &["y"])], &["y"]).unwrap();
        let data = Dataset::new(&net, vec![vec![0, 1], vec![3, 0], vec![2, 1]]).unwrap();
        let p = build_delta(&net, &data, MarginKind::Multiclass, 1.0).unwrap();
        assert_eq!(p.rows().len(), 12);
        for r in p.rows() {
            let s: f64 = r.entries.iter().map(|e| e.1).sum();
            assert_eq!(s, 0.0);
        }
        assert!(p.with_reg(0.0).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let net = Network::from_names(&[("y", 4, &[]), ("x", 2, &["y"])], &["y"]).unwrap();
        let data = Dataset::new(&net, vec![vec![0, 1]]).unwrap();
        assert!(matches!(
            build_delta_capped(&net, &data, MarginKind::Multiclass, 1.0, 3),
            Err(Error::LabelSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn mclr_of_direct_ratio() {
        let net = Network::from_names(&[("y", 2, &[])], &["y"]).unwrap();
        let w = ParamVector::new(vec![0.4f64.ln(), 0.1f64.ln()]).unwrap();
        let data = Dataset::new(&net, vec![vec![0]]).unwrap();
        assert!((mclr(&net, &w, &data).unwrap() - 4f64.ln()).abs() < 1e-12);
        let u = ParamVector::uniform(&nb());
        let d = Dataset::new(&nb(), vec![vec![1, 0], vec![0, 0]]).unwrap();
        assert_eq!(mclr(&nb(), &u, &d).unwrap(), 0.0);
    }

    #[test]
    fn slack_conversion() {
        let (eps, b) = slack_convert(0.5, &[0.2, 0.0], 10.0, SlackDirection::XiToEps).unwrap();
        assert_eq!(eps, vec![0.1, 0.0]);
        assert_eq!(b, 20.0);
        let (xi, c) = slack_convert(1.0, &[0.3], 2.0, SlackDirection::EpsToXi).unwrap();
        assert_eq!((xi, c), (vec![0.3], 2.0));
        assert!(matches!(
            slack_convert(0.0, &[], 1.0, SlackDirection::EpsToXi),
            Err(Error::NonpositiveGamma(_))
        ));
    }

    #[test]
    fn feasibility_examples() {
        let net = nb();
        let data = Dataset::new(&net, vec![vec![0, 1]]).unwrap();
        let p = build_delta(&net, &data, MarginKind::Multiclass, 1.0).unwrap();
        let w = ParamVector::uniform(&net);
        // Δw = 0 for uniform weights; the zero row contributes −ε.
        let v = margin_feasibility(&p, w.as_slice(), 0.0, &[0.5]).unwrap();
        assert_eq!(v, -0.5);
        let v = margin_feasibility(&p, w.as_slice(), 1.0, &[0.25]).unwrap();
        assert_eq!(v, 0.75);
        assert!(margin_feasibility(&p, w.as_slice(), 1.0, &[0.0, 0.0]).is_err());
    }
}
