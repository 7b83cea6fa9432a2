//! Reference implementations used by the integration and acceptance tests.
//! Nothing here calls into the solver code paths being checked.
#![allow(dead_code)]

use mmbn_core::model::Variable;
use mmbn_core::{Dataset, Network, ParamVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All assignments of the given arities, first position slowest.
pub fn assignments(arities: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &k in arities {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Flat position of the CPT cell of node `j` selected by `values`, computed
/// from the structure alone.
pub fn flat_index(net: &Network, j: usize, values: &[usize]) -> usize {
    let mut offset = 0;
    for k in 0..j {
        offset += net.arity(k) * net.parents(k).iter().map(|&p| net.arity(p)).product::<usize>();
    }
    let mut b = 0;
    for &p in net.parents(j) {
        b = b * net.arity(p) + values[p];
    }
    offset + b * net.arity(j) + values[j]
}

/// `Σ_j w[index_j(values)]`.
pub fn log_score(net: &Network, w: &[f64], values: &[usize]) -> f64 {
    (0..net.num_nodes()).map(|j| w[flat_index(net, j, values)]).sum()
}

/// Dense feature vector of a full assignment.
pub fn features(net: &Network, values: &[usize]) -> Vec<f64> {
    let mut f = vec![0.0; net.dim()];
    for j in 0..net.num_nodes() {
        f[flat_index(net, j, values)] += 1.0;
    }
    f
}

/// `(start, len)` of every CPT column.
pub fn column_spans(net: &Network) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for j in 0..net.num_nodes() {
        let configs: usize = net.parents(j).iter().map(|&p| net.arity(p)).product();
        for _ in 0..configs {
            out.push((offset, net.arity(j)));
            offset += net.arity(j);
        }
    }
    out
}

/// `P(target | all other variables)` for every joint assignment of the
/// other variables (outer) and target value (inner).
pub fn conditional_table(net: &Network, w: &[f64], target: usize) -> Vec<Vec<f64>> {
    let arities: Vec<usize> = (0..net.num_nodes())
        .map(|j| if j == target { 1 } else { net.arity(j) })
        .collect();
    assignments(&arities)
        .into_iter()
        .map(|mut values| {
            let s: Vec<f64> = (0..net.arity(target))
                .map(|y| {
                    values[target] = y;
                    log_score(net, w, &values)
                })
                .collect();
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
            s.iter().map(|v| (v - m).exp() / z).collect()
        })
        .collect()
}

pub fn max_table_deviation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Whether the parents of every child of `target` are pairwise adjacent.
pub fn moralized_children(parents: &[Vec<usize>], target: usize) -> bool {
    let adjacent = |a: usize, b: usize| parents[a].contains(&b) || parents[b].contains(&a);
    parents.iter().filter(|ps| ps.contains(&target)).all(|ps| {
        ps.iter()
            .enumerate()
            .all(|(k, &a)| ps[k + 1..].iter().all(|&b| adjacent(a, b)))
    })
}

/// Random binary DAG on `n` nodes whose class node has at least one child
/// and satisfies the moralized-children condition.
pub fn random_prop2_network<R: Rng>(rng: &mut R, n: usize) -> Network {
    loop {
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for j in 1..n {
            for k in 0..j {
                if parents[j].len() < 3 && rng.gen_bool(0.4) {
                    parents[j].push(k);
                }
            }
        }
        let target = rng.gen_range(0..n);
        if !parents.iter().any(|ps| ps.contains(&target)) || !moralized_children(&parents, target) {
            continue;
        }
        let vars = (0..n).map(|j| Variable::new(format!("v{j}"), 2)).collect();
        return Network::new(vars, parents, vec![target]).unwrap();
    }
}

/// Random weights with every column sum in `(0, 1]`; roughly a third of the
/// columns are exactly normalized.
pub fn random_subnormalized<R: Rng>(rng: &mut R, net: &Network) -> Vec<f64> {
    let mut w = vec![0.0; net.dim()];
    for (start, len) in column_spans(net) {
        let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.02..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let scale = if rng.gen_bool(0.33) { 1.0 } else { rng.gen_range(0.1..1.0) };
        for (k, r) in raw.iter().enumerate() {
            w[start + k] = (scale * r / total).ln();
        }
    }
    w
}

pub fn random_dataset<R: Rng>(rng: &mut R, net: &Network, t: usize) -> Dataset {
    let rows = (0..t)
        .map(|_| (0..net.num_nodes()).map(|j| rng.gen_range(0..net.arity(j))).collect())
        .collect();
    Dataset::new(net, rows).unwrap()
}

/// One margin row with a dense difference vector.
#[derive(Debug, Clone)]
pub struct DenseRow {
    pub example: usize,
    pub labels: Vec<usize>,
    pub delta: Vec<f64>,
    pub margin: f64,
}

impl DenseRow {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.delta.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

/// Rows for every labeling of the class variables of every example, with
/// Hamming margins (which equal the 0/1 margin for one class variable).
pub fn dense_rows(net: &Network, data: &Dataset) -> Vec<DenseRow> {
    let class = net.class_vars().to_vec();
    let arities: Vec<usize> = class.iter().map(|&c| net.arity(c)).collect();
    let mut out = Vec::new();
    for (i, row) in data.rows().iter().enumerate() {
        let truth = features(net, row);
        for labels in assignments(&arities) {
            let mut alt = row.clone();
            for (&c, &v) in class.iter().zip(&labels) {
                alt[c] = v;
            }
            let fa = features(net, &alt);
            let margin = class.iter().zip(&labels).filter(|(&c, &v)| row[c] != v).count() as f64;
            out.push(DenseRow {
                example: i,
                labels,
                delta: truth.iter().zip(&fa).map(|(a, b)| a - b).collect(),
                margin,
            });
        }
    }
    out
}

/// Smallest feasible slack of each example: `max(0, max_r γδ_r − Δ_r·w)`.
pub fn min_slacks(rows: &[DenseRow], t: usize, w: &[f64], gamma: f64) -> Vec<f64> {
    let mut eps = vec![0.0f64; t];
    for r in rows {
        eps[r.example] = eps[r.example].max(gamma * r.margin - r.dot(w));
    }
    eps
}

/// `1/(2γ²) + B·Σε` minimized over `γ` and `ε` for fixed `w`. The function
/// of `γ` is convex, hence unimodal in `ln γ`, and is searched by golden
/// section.
pub fn profile_objective(rows: &[DenseRow], t: usize, w: &[f64], reg: f64) -> (f64, f64) {
    let dots: Vec<f64> = rows.iter().map(|r| r.dot(w)).collect();
    let f = |lg: f64| {
        let g = lg.exp();
        let mut eps = vec![0.0f64; t];
        for (r, d) in rows.iter().zip(&dots) {
            eps[r.example] = eps[r.example].max(g * r.margin - d);
        }
        0.5 / (g * g) + reg * eps.iter().sum::<f64>()
    };
    let (mut a, mut b) = (-12.0f64, 12.0f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..120 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let lg = 0.5 * (a + b);
    (f(lg), lg.exp())
}

/// Maps unconstrained coordinates onto weights that satisfy both the column
/// constraint and the floor: per column one scale logit followed by one
/// logit per cell.
pub fn column_weights(spans: &[(usize, usize)], x: &[f64], floor: f64) -> Vec<f64> {
    let lo = floor.exp();
    let dim: usize = spans.iter().map(|s| s.1).sum();
    let mut w = vec![0.0; dim];
    let mut p = 0;
    for &(start, len) in spans {
        let scale = 1.0 / (1.0 + (-x[p]).exp());
        let logits = &x[p + 1..p + 1 + len];
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
        for k in 0..len {
            let theta = lo + (1.0 - len as f64 * lo) * scale * (logits[k] - m).exp() / z;
            w[start + k] = theta.ln();
        }
        p += 1 + len;
    }
    w
}

/// Derivative-free minimization: coordinate and random directions with an
/// expanding/shrinking step.
pub fn pattern_search<R: Rng>(rng: &mut R, x0: Vec<f64>, f: impl Fn(&[f64]) -> f64, min_step: f64, max_iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    let mut step = 1.0;
    for _ in 0..max_iters {
        if step < min_step {
            break;
        }
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(4 * n);
        for k in 0..n {
            for s in [1.0, -1.0] {
                let mut d = vec![0.0; n];
                d[k] = s;
                dirs.push(d);
            }
        }
        for _ in 0..2 * n {
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            dirs.push(d.into_iter().map(|v| v / norm).collect());
        }
        let mut improved = false;
        for d in &dirs {
            let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + step * b).collect();
            let fy = f(&y);
            if fy < fx {
                x = y;
                fx = fy;
                improved = true;
            }
        }
        step *= if improved { 2.0 } else { 0.5 };
    }
    (x, fx)
}

/// Reference optimum of the subnormalized soft-margin problem: pattern
/// search over the column coordinates, each point profiled over `(γ, ε)`.
pub fn soft_margin_oracle(net: &Network, data: &Dataset, reg: f64, floor: f64, seed: u64) -> f64 {
    let rows = dense_rows(net, data);
    let spans = column_spans(net);
    let n: usize = spans.iter().map(|s| 1 + s.1).sum();
    let t = data.len();
    let f = |x: &[f64]| profile_objective(&rows, t, &column_weights(&spans, x, floor), reg).0;
    let mut r = rng(seed);
    let mut best = f64::INFINITY;
    for start in 0..3 {
        let x0: Vec<f64> = (0..n).map(|_| if start == 0 { 0.0 } else { r.gen_range(-2.0..2.0) }).collect();
        let (_, v) = pattern_search(&mut r, x0, f, 1e-10, 20_000);
        best = best.min(v);
    }
    best
}

/// Independent evaluation of the barrier function over `z = [w, γ, ε]`;
/// `None` outside the strict interior.
pub fn barrier_value(
    net: &Network,
    rows: &[DenseRow],
    t: usize,
    ball: bool,
    floor: Option<f64>,
    reg: f64,
    mu: f64,
    z: &[f64],
) -> Option<f64> {
    let d = net.dim();
    let (w, gamma, eps) = (&z[..d], z[d], &z[d + 1..d + 1 + t]);
    if gamma <= 0.0 {
        return None;
    }
    let mut logs = gamma.ln();
    for r in rows {
        let s = r.dot(w) - gamma * r.margin + eps[r.example];
        if s <= 0.0 {
            return None;
        }
        logs += s.ln();
    }
    if ball {
        let s = 1.0 - w.iter().map(|v| v * v).sum::<f64>();
        if s <= 0.0 {
            return None;
        }
        logs += s.ln();
    } else {
        for (start, len) in column_spans(net) {
            let s = 1.0 - w[start..start + len].iter().map(|v| v.exp()).sum::<f64>();
            if s <= 0.0 {
                return None;
            }
            logs += s.ln();
        }
        if let Some(fl) = floor {
            for &v in w {
                if v <= fl {
                    return None;
                }
                logs += (v - fl).ln();
            }
        }
    }
    Some(0.5 / (gamma * gamma) + reg * eps.iter().sum::<f64>() - mu * logs)
}

/// Euclidean projection onto `{a ≥ 0, Σa = c}`.
pub fn project_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - c) / (k as f64 + 1.0);
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// `min ½‖w‖² + C·Σξ  s.t.  Δ_r·w ≥ δ_r − ξ_i` through its dual
/// `max Σαδ − ½‖Σα_rΔ_r‖²` over per-example simplices of mass `C`, by
/// accelerated projected gradient. Returns the primal value recovered from
/// the final dual point and the duality gap.
pub fn quadratic_margin_oracle(rows: &[DenseRow], t: usize, dim: usize, c: f64, iters: usize) -> (f64, f64) {
    let n = rows.len();
    let combo = |a: &[f64]| {
        let mut w = vec![0.0; dim];
        for (r, &ar) in rows.iter().zip(a) {
            for (k, v) in r.delta.iter().enumerate() {
                w[k] += ar * v;
            }
        }
        w
    };
    // Power iteration for the Lipschitz constant of the dual gradient.
    let mut v = vec![1.0; n];
    let mut lip = 1.0;
    for _ in 0..200 {
        let w = combo(&v);
        let hv: Vec<f64> = rows.iter().map(|r| r.dot(&w)).collect();
        let norm = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lip = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = hv.iter().map(|x| x / norm).collect();
    }
    let lip = lip * 1.01 + 1e-12;
    let groups: Vec<Vec<usize>> = (0..t).map(|i| (0..n).filter(|&r| rows[r].example == i).collect()).collect();
    let project = |a: &mut Vec<f64>| {
        for g in &groups {
            let p = project_simplex(&g.iter().map(|&r| a[r]).collect::<Vec<_>>(), c);
            for (&r, x) in g.iter().zip(p) {
                a[r] = x;
            }
        }
    };
    let mut alpha = vec![0.0; n];
    project(&mut alpha);
    let mut y = alpha.clone();
    let mut tk = 1.0f64;
    for _ in 0..iters {
        let w = combo(&y);
        let mut next: Vec<f64> = rows
            .iter()
            .zip(&y)
            .map(|(r, &yr)| yr + (r.margin - r.dot(&w)) / lip)
            .collect();
        project(&mut next);
        let tn = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        y = next.iter().zip(&alpha).map(|(a, b)| a + (tk - 1.0) / tn * (a - b)).collect();
        alpha = next;
        tk = tn;
    }
    let w = combo(&alpha);
    let ww: f64 = w.iter().map(|x| x * x).sum();
    let dual = rows.iter().zip(&alpha).map(|(r, a)| a * r.margin).sum::<f64>() - 0.5 * ww;
    let xi = min_slacks(rows, t, &w, 1.0);
    let primal = 0.5 * ww + c * xi.iter().sum::<f64>();
    (primal, primal - dual)
}

pub fn params(w: Vec<f64>) -> ParamVector {
    ParamVector::new(w).unwrap()
}
