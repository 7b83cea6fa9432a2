use crate::error::{Error, Result};
use crate::model::network::Network;

/// Log-space value used for zero probabilities; `exp(-30) ≈ 9.4e-14`.
pub const LOG_ZERO: f64 = -30.0;

/// Tolerance of the normalized / subnormalized column tests.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Log-space CPT weights `w = ln θ`, one per CPT cell of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("weight {i} is not finite")));
        }
        Ok(Self(w))
    }

    /// Converts probabilities to weights, clamping `ln θ` at [`LOG_ZERO`].
    pub fn from_theta(net: &Network, theta: &[f64]) -> Result<Self> {
        if theta.len() != net.dim() {
            return Err(Error::DimensionMismatch {
                expected: net.dim(),
                got: theta.len(),
            });
        }
        let mut w = Vec::with_capacity(theta.len());
        for (i, &t) in theta.iter().enumerate() {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::InvalidConfig(format!("probability {t} at cell {i}")));
            }
            w.push(t.ln().max(LOG_ZERO));
        }
        Ok(Self(w))
    }

    /// Uniform CPTs.
    pub fn uniform(net: &Network) -> Self {
        let mut w = vec![0.0; net.dim()];
        for j in 0..net.num_nodes() {
            let v = -(net.arity(j) as f64).ln();
            w[net.node_range(j)].fill(v);
        }
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// The probability view `θ = exp(w)`.
    pub fn theta(&self) -> Vec<f64> {
        self.0.iter().map(|w| w.exp()).collect()
    }

    pub fn max_residual(&self, net: &Network) -> f64 {
        net.normalization_residuals(self)
            .into_iter()
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn is_normalized(&self, net: &Network) -> bool {
        self.len() == net.dim() && self.max_residual(net) <= NORMALIZATION_TOL
    }

    pub fn is_subnormalized(&self, net: &Network) -> bool {
        self.len() == net.dim()
            && net
                .normalization_residuals(self)
                .into_iter()
                .all(|r| r <= NORMALIZATION_TOL)
    }

    pub fn ensure_normalized(&self, net: &Network) -> Result<()> {
        net.check_dim(self)?;
        if self.is_normalized(net) {
            Ok(())
        } else {
            Err(Error::NotNormalized(self.max_residual(net)))
        }
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
