//! Text formats for networks and parameters.
//!
//! Network file:
//!
//! ```text
//! nodes 3
//! y 2 -
//! x1 2 y
//! x2 3 y x1
//! class y
//! ```
//!
//! Parameter file, one line per CPT column (`node config v_0 .. v_{k-1}`):
//!
//! ```text
//! y 0 0.6 0.4
//! x1 0 0.9 0.1
//! x1 1 0.2 0.8
//! ```
//!
//! Values are probabilities and are loaded as `w = ln θ` (clamped at
//! [`LOG_ZERO`](crate::model::LOG_ZERO)). A file whose first directive is
//! `format log-weights` stores `w` directly; that variant is used for
//! weights that are not valid CPTs (e.g. max-margin Markov network output).
//! Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::network::{Network, Variable};
use crate::model::params::ParamVector;

/// How the numbers of a parameter file are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamFormat {
    Theta,
    LogWeights,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_network(text: &str, source: &Path) -> Result<Network> {
    let mut lines = content_lines(text);
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(source, 0, "empty network file"))?;
    let mut it = header.split_whitespace();
    if it.next() != Some("nodes") {
        return Err(parse_err(source, ln, "expected `nodes N`"));
    }
    let count: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(source, ln, "bad node count"))?;

    let mut raw = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(source, ln, "fewer node lines than declared"))?;
        let mut toks = line.split_whitespace();
        let name = toks.next().ok_or_else(|| parse_err(source, ln, "missing name"))?;
        let arity: usize = toks
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(source, ln, "missing or bad arity"))?;
        let parents: Vec<&str> = toks.filter(|t| *t != "-").collect();
        raw.push((ln, name.to_string(), arity, parents));
    }
    let (ln, footer) = lines
        .next()
        .ok_or_else(|| parse_err(source, 0, "missing `class` line"))?;
    let mut toks = footer.split_whitespace();
    if toks.next() != Some("class") {
        return Err(parse_err(source, ln, "expected `class name ...`"));
    }
    let class_names: Vec<&str> = toks.collect();
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(source, ln, "trailing content after `class` line"));
    }

    let vars: Vec<Variable> = raw
        .iter()
        .map(|(_, n, a, _)| Variable::new(n.clone(), *a))
        .collect();
    let lookup = |name: &str, ln: usize| {
        vars.iter()
            .position(|v| v.name == name)
            .ok_or_else(|| parse_err(source, ln, format!("unknown variable `{name}`")))
    };
    let mut parents = Vec::with_capacity(count);
    for (ln, _, _, ps) in &raw {
        parents.push(ps.iter().map(|p| lookup(p, *ln)).collect::<Result<Vec<_>>>()?);
    }
    let class_vars = class_names
        .iter()
        .map(|c| lookup(c, ln))
        .collect::<Result<Vec<_>>>()?;
    Network::new(vars, parents, class_vars)
}

pub fn read_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    parse_network(&fs::read_to_string(path)?, path)
}

pub fn format_network(net: &Network) -> String {
    let mut out = format!("nodes {}\n", net.num_nodes());
    for j in 0..net.num_nodes() {
        let parents = if net.parents(j).is_empty() {
            "-".to_string()
        } else {
            net.parents(j)
                .iter()
                .map(|&p| net.name(p))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "{} {} {}", net.name(j), net.arity(j), parents);
    }
    let class: Vec<&str> = net.class_vars().iter().map(|&c| net.name(c)).collect();
    let _ = writeln!(out, "class {}", class.join(" "));
    out
}

pub fn write_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_network(net))?;
    Ok(())
}

pub fn parse_params(net: &Network, text: &str, source: &Path) -> Result<(ParamVector, ParamFormat)> {
    let mut format = ParamFormat::Theta;
    let mut values = vec![f64::NAN; net.dim()];
    let mut seen = vec![false; net.num_columns()];
    for (idx, (ln, line)) in content_lines(text).enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks[0] == "format" {
            if idx != 0 {
                return Err(parse_err(source, ln, "`format` must be the first directive"));
            }
            format = match toks.get(1).copied() {
                Some("theta") => ParamFormat::Theta,
                Some("log-weights") => ParamFormat::LogWeights,
                other => {
                    return Err(parse_err(source, ln, format!("unknown format {other:?}")));
                }
            };
            continue;
        }
        let j = net
            .index_of(toks[0])
            .ok_or_else(|| parse_err(source, ln, format!("unknown variable `{}`", toks[0])))?;
        let b: usize = toks
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(source, ln, "missing or bad configuration index"))?;
        if b >= net.num_configs(j) {
            return Err(parse_err(
                source,
                ln,
                format!("configuration {b} out of range for `{}`", toks[0]),
            ));
        }
        let nums = toks[2..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(source, ln, e.to_string()))?;
        if nums.len() != net.arity(j) {
            return Err(parse_err(
                source,
                ln,
                format!("expected {} values, found {}", net.arity(j), nums.len()),
            ));
        }
        let col = net.column_index(j, b);
        if std::mem::replace(&mut seen[col], true) {
            return Err(parse_err(source, ln, "column given twice"));
        }
        values[net.column_range(j, b)].copy_from_slice(&nums);
    }
    if let Some((j, b, _)) = net.columns().find(|(j, b, _)| !seen[net.column_index(*j, *b)]) {
        return Err(parse_err(
            source,
            0,
            format!("missing column `{}` {b}", net.name(j)),
        ));
    }
    let w = match format {
        ParamFormat::Theta => ParamVector::from_theta(net, &values)?,
        ParamFormat::LogWeights => ParamVector::new(values)?,
    };
    Ok((w, format))
}

pub fn read_params(net: &Network, path: impl AsRef<Path>) -> Result<ParamVector> {
    let path = path.as_ref();
    Ok(parse_params(net, &fs::read_to_string(path)?, path)?.0)
}

pub fn format_params(net: &Network, w: &ParamVector, format: ParamFormat) -> String {
    let mut out = String::new();
    if format == ParamFormat::LogWeights {
        out.push_str("# unnormalized log-space weights; not loadable as CPTs without renormalization\n");
        out.push_str("format log-weights\n");
    }
    for (j, b, range) in net.columns() {
        let _ = write!(out, "{} {}", net.name(j), b);
        for &v in &w.as_slice()[range] {
            let v = match format {
                ParamFormat::Theta => v.exp(),
                ParamFormat::LogWeights => v,
            };
            let _ = write!(out, " {v:e}");
        }
        out.push('\n');
    }
    out
}

pub fn write_params(net: &Network, w: &ParamVector, format: ParamFormat, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_params(net, w, format))?;
    Ok(())
}
