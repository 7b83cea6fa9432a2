use crate::error::{Error, Result};
use crate::margin::hamming_distance;
use crate::model::Network;

/// Score ties closer than this are broken toward smaller labels.
pub const TIE_TOL: f64 = 1e-12;

/// The factor layout of a network whose class variables, taken in
/// `class_vars` order, form a chain: every local function mentions either
/// one class position or two consecutive ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainLabelModel {
    class_nodes: Vec<usize>,
    unary: Vec<Vec<usize>>,
    /// `pairwise[k]` couples positions `k - 1` and `k`; empty for `k = 0`.
    pairwise: Vec<Vec<usize>>,
}

impl ChainLabelModel {
    pub fn from_network(net: &Network) -> Result<Self> {
        let class_nodes = net.class_vars().to_vec();
        let len = class_nodes.len();
        let position = |node: usize| class_nodes.iter().position(|&c| c == node);
        let mut unary = vec![Vec::new(); len];
        let mut pairwise = vec![Vec::new(); len];
        for j in net.class_factors() {
            let mut scope: Vec<usize> = std::iter::once(j)
                .chain(net.parents(j).iter().copied())
                .filter_map(position)
                .collect();
            scope.sort_unstable();
            match scope[..] {
                [k] => unary[k].push(j),
                [a, b] if b == a + 1 => pairwise[b].push(j),
                _ => {
                    return Err(Error::NotAChain(format!(
                        "CPT of `{}` couples non-adjacent class positions {:?}",
                        net.name(j),
                        scope
                    )))
                }
            }
        }
        Ok(Self {
            class_nodes,
            unary,
            pairwise,
        })
    }

    pub fn len(&self) -> usize {
        self.class_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_nodes.is_empty()
    }

    pub fn class_nodes(&self) -> &[usize] {
        &self.class_nodes
    }
}

/// The maximizer of `γ·hamming(y, y_true) + φ(x, y)·w` over class labelings
/// (only class-dependent terms of `φ·w` are included in `score`).
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub labels: Vec<usize>,
    pub score: f64,
}

/// Max-sum dynamic programming over the chain. `row` supplies the
/// observation values; `truth` (when given with `gamma > 0`) adds the
/// Hamming bonus. Among optimal labelings the lexicographically smallest is
/// returned: suffix maxima are computed backwards and labels are then
/// fixed front to back, taking the smallest value that still attains the
/// optimum.
pub fn viterbi(
    net: &Network,
    model: &ChainLabelModel,
    w: &[f64],
    row: &[usize],
    truth: Option<&[usize]>,
    gamma: f64,
) -> Decoded {
    let len = model.len();
    let mut values = row.to_vec();
    let arity: Vec<usize> = model.class_nodes.iter().map(|&c| net.arity(c)).collect();

    let unary: Vec<Vec<f64>> = (0..len)
        .map(|k| {
            let node = model.class_nodes[k];
            (0..arity[k])
                .map(|v| {
                    values[node] = v;
                    let mut s: f64 = model.unary[k]
                        .iter()
                        .map(|&j| w[net.active_index(j, &values)])
                        .sum();
                    if let Some(t) = truth {
                        if v != t[k] {
                            s += gamma;
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    // pair[k][u][v]: positions k-1 = u, k = v.
    let pair: Vec<Vec<Vec<f64>>> = (0..len)
        .map(|k| {
            if k == 0 {
                return Vec::new();
            }
            let (prev, node) = (model.class_nodes[k - 1], model.class_nodes[k]);
            (0..arity[k - 1])
                .map(|u| {
                    (0..arity[k])
                        .map(|v| {
                            values[prev] = u;
                            values[node] = v;
                            model.pairwise[k]
                                .iter()
                                .map(|&j| w[net.active_index(j, &values)])
                                .sum()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    // suffix[k][v]: best score of positions k.. given y_k = v.
    let mut suffix: Vec<Vec<f64>> = vec![Vec::new(); len];
    for k in (0..len).rev() {
        suffix[k] = (0..arity[k])
            .map(|v| {
                let tail = if k + 1 < len {
                    (0..arity[k + 1])
                        .map(|u| pair[k + 1][v][u] + suffix[k + 1][u])
                        .fold(f64::NEG_INFINITY, f64::max)
                } else {
                    0.0
                };
                unary[k][v] + tail
            })
            .collect();
    }

    let mut labels: Vec<usize> = Vec::with_capacity(len);
    let mut score = 0.0;
    for k in 0..len {
        let cand: Vec<f64> = (0..arity[k])
            .map(|v| if k == 0 { suffix[0][v] } else { pair[k][labels[k - 1]][v] + suffix[k][v] })
            .collect();
        let best = cand.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = cand
            .iter()
            .position(|&c| c >= best - TIE_TOL * (1.0 + best.abs()))
            .expect("non-empty label range");
        if k == 0 {
            score = best;
        }
        labels.push(v);
    }
    Decoded { labels, score }
}

/// `γ·hamming(y, y_true) + φ(x, y)·w` restricted to class-dependent factors.
pub fn augmented_score(net: &Network, w: &[f64], row: &[usize], labels: &[usize], truth: &[usize], gamma: f64) -> f64 {
    let mut values = row.to_vec();
    net.set_labels(&mut values, labels);
    let base: f64 = net
        .class_factors()
        .into_iter()
        .map(|j| w[net.active_index(j, &values)])
        .sum();
    let d = truth.iter().zip(labels).filter(|(a, b)| a != b).count();
    base + gamma * d as f64
}

/// Brute-force maximizer of [`augmented_score`] (first maximum in
/// lexicographic order wins).
pub fn exhaustive(net: &Network, w: &[f64], row: &[usize], truth: &[usize], gamma: f64) -> Result<Decoded> {
    let size = net.label_space_size();
    if size > 1 << 20 {
        return Err(Error::LabelSpaceTooLarge { size, cap: 1 << 20 });
    }
    let mut best: Option<Decoded> = None;
    for labels in net.label_space() {
        let s = augmented_score(net, w, row, &labels, truth, gamma);
        let better = best
            .as_ref()
            .map_or(true, |b| s > b.score + TIE_TOL * (1.0 + b.score.abs()));
        if better {
            best = Some(Decoded { labels, score: s });
        }
    }
    Ok(best.expect("label space is never empty"))
}

pub fn check_labels(net: &Network, labels: &[usize]) -> Result<()> {
    if labels.len() != net.class_vars().len() {
        return Err(Error::InvalidLabelVector(format!(
            "{} labels for {} class variables",
            labels.len(),
            net.class_vars().len()
        )));
    }
    for (&c, &l) in net.class_vars().iter().zip(labels) {
        if l >= net.arity(c) {
            return Err(Error::InvalidLabelVector(format!(
                "label {l} out of range for `{}`",
                net.name(c)
            )));
        }
    }
    Ok(())
}

/// Number of class positions where the labelings differ.
pub fn hamming_margin(truth: &[usize], labels: &[usize]) -> Result<usize> {
    hamming_distance(truth, labels)
}
