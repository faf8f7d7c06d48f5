//! Fixed-node Gauss–Legendre quadrature on the unit interval, composed with
//! each item's contribution quantile to realize one-dimensional expectations.

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;

pub const DEFAULT_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes: DEFAULT_NODES }
    }
}

impl QuadratureSpec {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::InvalidConfig(format!("quadrature needs at least 2 nodes, got {nodes}")));
        }
        Ok(Self { nodes })
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        let gl = GaussLegendre::new(self.nodes)
            .map_err(|_| Error::InvalidConfig(format!("quadrature needs at least 2 nodes, got {}", self.nodes)))?;
        let mut points: Vec<(f64, f64)> = gl
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(QuadratureRule { points })
    }
}

/// Nodes `u_q ∈ (0, 1)` with weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<(f64, f64)>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// `∫₀¹ f(u) du`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.points.iter().map(|&(u, w)| w * f(u)).sum()
    }
}

/// Ad contributions of every item evaluated at the rule's quantile nodes, so
/// `E[g(a_i)] ≈ Σ_q weights[q]·g(values[i][q])`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub weights: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl NodeTable {
    pub fn new(inst: &Instance, rule: &QuadratureRule) -> Self {
        let values = inst
            .items()
            .iter()
            .map(|item| rule.nodes().map(|u| item.ad_contribution_quantile(u)).collect())
            .collect();
        Self { weights: rule.weights().collect(), values }
    }

    pub fn nodes(&self) -> usize {
        self.weights.len()
    }
}
