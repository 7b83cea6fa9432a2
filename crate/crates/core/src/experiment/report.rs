use std::collections::BTreeMap;

use super::run::format_number;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub trainer: String,
    pub structure: String,
    pub beta: String,
    pub train_size: usize,
    pub runs: usize,
    pub failed: usize,
    pub mean_test_error: Option<f64>,
    pub std_test_error: Option<f64>,
    pub mean_train_error: Option<f64>,
    pub converged: usize,
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), std)
}

/// Groups a results table by trainer, structure, beta and train size (in
/// order of first appearance) and averages the error columns over
/// successful repetitions.
pub fn summarize(results_csv: &str) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_reader(results_csv.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("results table lacks column `{name}`")))
    };
    let (ct, cs, cb, cn, cte, ctr, cc) = (
        col("trainer")?,
        col("structure")?,
        col("beta")?,
        col("train_size")?,
        col("test_error")?,
        col("train_error")?,
        col("converged")?,
    );
    type Key = (String, String, String, usize);
    let mut order: BTreeMap<usize, Key> = BTreeMap::new();
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>, usize, usize, usize)> = BTreeMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| {
                Error::SchemaMismatch(format!("row {}: `{s}` is not a number", line + 2))
            })
        };
        let size: usize = rec
            .get(cn)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::SchemaMismatch(format!("row {}: bad train_size", line + 2)))?;
        let key = (
            rec[ct].to_string(),
            rec[cs].to_string(),
            rec[cb].to_string(),
            size,
        );
        let next = order.len();
        if !groups.contains_key(&key) {
            order.insert(next, key.clone());
        }
        let g = groups.entry(key).or_default();
        g.2 += 1;
        let status = rec.get(cc).unwrap_or("");
        if status.starts_with("error:") {
            g.3 += 1;
            continue;
        }
        if status == "true" {
            g.4 += 1;
        }
        if let Some(v) = num(cte)? {
            g.0.push(v);
        }
        if let Some(v) = num(ctr)? {
            g.1.push(v);
        }
    }
    Ok(order
        .into_values()
        .map(|key| {
            let (test, train, runs, failed, converged) = &groups[&key];
            let (mean_test_error, std_test_error) = mean_std(test);
            SummaryRow {
                trainer: key.0,
                structure: key.1,
                beta: key.2,
                train_size: key.3,
                runs: *runs,
                failed: *failed,
                mean_test_error,
                std_test_error,
                mean_train_error: mean_std(train).0,
                converged: *converged,
            }
        })
        .collect())
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<String> {
    let o = |v: Option<f64>| v.map(format_number).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "trainer",
        "structure",
        "beta",
        "train_size",
        "runs",
        "failed",
        "converged",
        "mean_test_error",
        "std_test_error",
        "mean_train_error",
    ])?;
    for r in rows {
        w.write_record([
            r.trainer.clone(),
            r.structure.clone(),
            r.beta.clone(),
            r.train_size.to_string(),
            r.runs.to_string(),
            r.failed.to_string(),
            r.converged.to_string(),
            o(r.mean_test_error),
            o(r.std_test_error),
            o(r.mean_train_error),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
