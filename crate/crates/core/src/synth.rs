//! Synthetic generative models and ancestral sampling.
//!
//! Randomness comes from [`GENERATOR_ID`]: a ChaCha8 stream cipher seeded
//! with `ChaCha8Rng::seed_from_u64(seed)` and positioned with
//! `set_stream(stream)`. Distinct purposes inside one run use distinct
//! stream numbers (see [`Stream`]); repetition `r` of a plan with seed `s`
//! uses seed `s + r`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Network, ParamVector, Variable};

pub const GENERATOR_ID: &str = "chacha8/rand_chacha-0.3/seed_from_u64+set_stream";

/// Stream numbers reserved for the different random draws of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Model = 0,
    Test = 1,
    Train = 2,
    Shuffle = 3,
    Sample = 4,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Skew of the generated conditional distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewSpec {
    pub beta: f64,
    pub seed: u64,
}

impl SkewSpec {
    pub fn new(beta: f64, seed: u64) -> Result<Self> {
        if !(0.5..=1.0).contains(&beta) {
            return Err(Error::BadBeta(beta));
        }
        Ok(Self { beta, seed })
    }
}

/// Mass of the dominant value: `β` for binary variables and
/// `1/k + (β − 0.5)·2·(1 − 1/k)` in general, so that `β = 0.5` is uniform and
/// `β = 1` deterministic for every arity.
pub fn dominant_mass(arity: usize, beta: f64) -> f64 {
    if arity == 2 {
        return beta;
    }
    let k = arity as f64;
    1.0 / k + (beta - 0.5) * 2.0 * (1.0 - 1.0 / k)
}

fn skewed_columns<R: Rng>(arity: usize, configs: usize, beta: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if !(0.5..=1.0).contains(&beta) {
        return Err(Error::BadBeta(beta));
    }
    if arity < 2 {
        return Err(Error::InvalidConfig(format!("arity {arity} < 2")));
    }
    let top = dominant_mass(arity, beta);
    let rest = (1.0 - top) / (arity - 1) as f64;
    Ok((0..configs)
        .map(|_| {
            let dominant = rng.gen_range(0..arity);
            let mut col = vec![rest; arity];
            col[dominant] = top;
            // Put the rounding error of the shares on the last non-dominant
            // value so the column sums to one.
            let last = if dominant == arity - 1 { arity - 2 } else { arity - 1 };
            let others: f64 = col
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != last)
                .map(|(_, v)| v)
                .sum();
            col[last] = 1.0 - others;
            col
        })
        .collect())
}

/// One skewed CPT: `configs` columns of `arity` probabilities, each with a
/// uniformly chosen dominant value.
pub fn skewed_cpt(arity: usize, configs: usize, spec: &SkewSpec) -> Result<Vec<Vec<f64>>> {
    skewed_columns(arity, configs, spec.beta, &mut rng_for(spec.seed, Stream::Model))
}

/// Skewed CPTs for every node (roots included), drawn in node order from a
/// single stream.
pub fn skewed_params(net: &Network, spec: &SkewSpec) -> Result<ParamVector> {
    let mut rng = rng_for(spec.seed, Stream::Model);
    let mut theta = vec![0.0; net.dim()];
    for j in 0..net.num_nodes() {
        let cols = skewed_columns(net.arity(j), net.num_configs(j), spec.beta, &mut rng)?;
        for (b, col) in cols.iter().enumerate() {
            theta[net.column_range(j, b)].copy_from_slice(col);
        }
    }
    ParamVector::from_theta(net, &theta)
}

fn draw<R: Rng>(column: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, &p) in column.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    column.len() - 1
}

/// `n` independent draws, each sampling nodes in topological order.
pub fn ancestral_sample(net: &Network, w: &ParamVector, n: usize, seed: u64) -> Result<Dataset> {
    ancestral_sample_with(net, w, n, &mut rng_for(seed, Stream::Sample))
}

pub fn ancestral_sample_with<R: Rng>(net: &Network, w: &ParamVector, n: usize, rng: &mut R) -> Result<Dataset> {
    w.ensure_normalized(net)?;
    let theta = w.theta();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![0usize; net.num_nodes()];
        for &j in net.topological_order() {
            let b = net.parent_config(j, &row);
            row[j] = draw(&theta[net.column_range(j, b)], rng);
        }
        rows.push(row);
    }
    Dataset::new(net, rows)
}

/// Structures shipped with the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Builtin {
    /// Class `y` with five children whose parents are moralized.
    Prop2Sat,
    /// Class `y` with a child whose two parents are not adjacent.
    Prop2Unsat,
    /// Class chain `y1 → … → yL`, each state with its own binary observations.
    HmmChain { length: usize, children: usize },
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Prop2Sat => write!(f, "prop2_sat"),
            Builtin::Prop2Unsat => write!(f, "prop2_unsat"),
            Builtin::HmmChain { length, children } => write!(f, "hmm_chain({length},{children})"),
        }
    }
}

impl FromStr for Builtin {
    type Err = Error;

    /// Accepts `prop2_sat`, `prop2_unsat`, `hmm_chain(L,C)` and `hmm_chain:L:C`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "prop2_sat" => return Ok(Builtin::Prop2Sat),
            "prop2_unsat" => return Ok(Builtin::Prop2Unsat),
            _ => {}
        }
        let args = s
            .strip_prefix("hmm_chain(")
            .and_then(|r| r.strip_suffix(')'))
            .map(|r| r.split(',').collect::<Vec<_>>())
            .or_else(|| s.strip_prefix("hmm_chain:").map(|r| r.split(':').collect()))
            .ok_or_else(|| Error::BadName(s.to_string()))?;
        let nums = args
            .iter()
            .map(|a| a.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::BadSize(s.to_string()))?;
        match nums[..] {
            [length, children] => Ok(Builtin::HmmChain { length, children }),
            _ => Err(Error::BadSize(s.to_string())),
        }
    }
}

pub fn builtin_structure(which: Builtin) -> Result<Network> {
    match which {
        Builtin::Prop2Sat => Network::from_names(
            &[
                ("y", 2, &[]),
                ("x1", 2, &["y"]),
                ("x2", 2, &["y"]),
                ("x3", 2, &["y"]),
                ("x4", 2, &["y"]),
                ("x5", 2, &["y", "x4"]),
                ("x6", 2, &["y", "x1"]),
            ],
            &["y"],
        ),
        Builtin::Prop2Unsat => Network::from_names(
            &[
                ("y", 2, &[]),
                ("z", 2, &[]),
                ("x1", 2, &["y"]),
                ("x2", 2, &["y"]),
                ("x3", 2, &["y"]),
                ("x4", 2, &["y", "z"]),
                ("x5", 2, &["z"]),
            ],
            &["y"],
        ),
        Builtin::HmmChain { length, children } => {
            if length == 0 || children == 0 {
                return Err(Error::BadSize(format!("hmm_chain({length},{children})")));
            }
            let mut vars = Vec::new();
            let mut parents = Vec::new();
            for k in 0..length {
                vars.push(Variable::new(format!("y{}", k + 1), 2));
                parents.push(if k == 0 { vec![] } else { vec![k - 1] });
            }
            for k in 0..length {
                for c in 0..children {
                    vars.push(Variable::new(format!("x{}_{}", k + 1, c + 1), 2));
                    parents.push(vec![k]);
                }
            }
            Network::new(vars, parents, (0..length).collect())
        }
    }
}

/// Sidecar describing how a dataset was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub structure: String,
    pub beta: f64,
    pub seed: u64,
    pub rows: usize,
    pub generator: String,
}
