use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::io::{read_network, read_params};
use crate::model::{Network, ParamVector};
use crate::synth::{builtin_structure, skewed_params, Builtin, SkewSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trainer {
    M2bn,
    M3n,
    Mcl,
}

impl Trainer {
    pub const ALL: [Trainer; 3] = [Trainer::M2bn, Trainer::M3n, Trainer::Mcl];

    /// The regularization knob each trainer exposes: `B` for max-margin
    /// Bayesian networks, `C` for Markov networks, the ridge strength for
    /// conditional likelihood.
    pub fn reg_name(self) -> &'static str {
        match self {
            Trainer::M2bn => "B",
            Trainer::M3n => "C",
            Trainer::Mcl => "l2",
        }
    }
}

impl fmt::Display for Trainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trainer::M2bn => "m2bn",
            Trainer::M3n => "m3n",
            Trainer::Mcl => "mcl",
        })
    }
}

impl FromStr for Trainer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m2bn" => Ok(Trainer::M2bn),
            "m3n" => Ok(Trainer::M3n),
            "mcl" => Ok(Trainer::Mcl),
            other => Err(Error::InvalidConfig(format!("unknown trainer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Univariate,
    Multivariate,
}

impl EvalMode {
    /// Multivariate whenever there is more than one class variable.
    pub fn default_for(net: &Network) -> Self {
        if net.class_vars().len() > 1 {
            EvalMode::Multivariate
        } else {
            EvalMode::Univariate
        }
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "univariate" => Ok(EvalMode::Univariate),
            "multivariate" => Ok(EvalMode::Multivariate),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegSettings {
    pub m2bn: f64,
    pub m3n: f64,
    pub mcl: f64,
}

impl Default for RegSettings {
    fn default() -> Self {
        Self {
            m2bn: 1.0,
            m3n: 1.0,
            mcl: 0.0,
        }
    }
}

impl RegSettings {
    pub fn get(&self, t: Trainer) -> f64 {
        match t {
            Trainer::M2bn => self.m2bn,
            Trainer::M3n => self.m3n,
            Trainer::Mcl => self.mcl,
        }
    }

    pub fn set(&mut self, t: Trainer, v: f64) {
        match t {
            Trainer::M2bn => self.m2bn = v,
            Trainer::M3n => self.m3n = v,
            Trainer::Mcl => self.mcl = v,
        }
    }
}

/// A full experiment description, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    /// Built-in name or network file.
    pub structure: String,
    /// Generative parameters; drawn with `beta` and `seed` when absent.
    pub params: Option<PathBuf>,
    /// Existing dataset used as the sampling pool instead of generation.
    pub data: Option<PathBuf>,
    pub beta: f64,
    pub seed: u64,
    pub trainers: Vec<Trainer>,
    pub train_sizes: Vec<usize>,
    pub reps: usize,
    pub test_size: usize,
    pub reg: RegSettings,
    /// Candidate regularization values tried on repetition 0.
    pub tune_grid: Option<Vec<f64>>,
    pub mode: Option<EvalMode>,
    pub out: Option<PathBuf>,
    /// Fill the `wall_ms` column (which makes the output run-dependent).
    pub timing: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            structure: "prop2_sat".into(),
            params: None,
            data: None,
            beta: 0.9,
            seed: 0,
            trainers: Trainer::ALL.to_vec(),
            train_sizes: vec![50],
            reps: 20,
            test_size: 1000,
            reg: RegSettings::default(),
            tune_grid: None,
            mode: None,
            out: None,
            timing: false,
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str, source: &Path) -> Result<Self> {
        let mut plan: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        // Relative paths are taken relative to the plan file.
        if let Some(dir) = source.parent() {
            for p in [&mut plan.params, &mut plan.data, &mut plan.out].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            if builtin(&plan.structure).is_none() && Path::new(&plan.structure).is_relative() {
                let joined = dir.join(&plan.structure);
                if joined.exists() {
                    plan.structure = joined.to_string_lossy().into_owned();
                }
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml_str(&fs::read_to_string(path)?, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.trainers.is_empty() {
            return bad("at least one trainer is required".into());
        }
        if self.train_sizes.is_empty() || self.train_sizes.contains(&0) {
            return bad("train sizes must be positive".into());
        }
        if self.test_size == 0 {
            return bad("test_size must be positive".into());
        }
        let mut seen = self.trainers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.trainers.len() {
            return bad("trainers are listed more than once".into());
        }
        for t in Trainer::ALL {
            let v = self.reg.get(t);
            let ok = match t {
                Trainer::Mcl => v >= 0.0 && v.is_finite(),
                _ => v > 0.0 && v.is_finite(),
            };
            if !ok {
                return bad(format!("invalid {} regularization {v}", t));
            }
        }
        if let Some(grid) = &self.tune_grid {
            if grid.is_empty() || grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("tune_grid needs finite non-negative values".into());
            }
        }
        if self.params.is_none() && self.data.is_none() {
            SkewSpec::new(self.beta, self.seed)?;
        }
        Ok(())
    }

    pub fn network(&self) -> Result<Network> {
        match builtin(&self.structure) {
            Some(b) => builtin_structure(b?),
            None if !Path::new(&self.structure).is_file() => Err(Error::BadName(self.structure.clone())),
            None => read_network(&self.structure),
        }
    }

    /// Canonical structure label for result rows.
    pub fn structure_label(&self) -> String {
        match builtin(&self.structure) {
            Some(Ok(b)) => b.to_string(),
            _ => self.structure.clone(),
        }
    }

    /// Generative parameters for synthetic runs.
    pub fn generative_params(&self, net: &Network) -> Result<ParamVector> {
        match &self.params {
            Some(p) => {
                let w = read_params(net, p)?;
                w.ensure_normalized(net)?;
                Ok(w)
            }
            None => skewed_params(net, &SkewSpec::new(self.beta, self.seed)?),
        }
    }

    /// Whether `beta` describes the data (it does not for supplied
    /// parameters or datasets).
    pub fn uses_beta(&self) -> bool {
        self.params.is_none() && self.data.is_none()
    }
}

/// `None` when `name` is not built-in syntax (so it is a file path), else
/// the parse result.
fn builtin(name: &str) -> Option<Result<Builtin>> {
    let n = name.trim();
    let looks_builtin = n == "prop2_sat" || n == "prop2_unsat" || n.starts_with("hmm_chain");
    (looks_builtin && !Path::new(n).exists()).then(|| n.parse())
}
