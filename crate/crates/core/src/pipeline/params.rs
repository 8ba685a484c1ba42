//! Derived parameters of the one-round protocol.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_tree::TreeParams;
use crate::nets::NetFamily;
use crate::oracles::Budget;

/// Which oracle backends serve the encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Local,
    Shuffle,
    Exact,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Local => "local",
            Model::Shuffle => "shuffle",
            Model::Exact => "exact",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Model::Local),
            "shuffle" => Ok(Model::Shuffle),
            "exact" => Ok(Model::Exact),
            _ => Err(Error::InvalidParameter(format!("unknown model {s:?}"))),
        }
    }
}

/// Default constant in the target dimension formula.
pub const PROJ_CONSTANT: f64 = 8.0;

/// Default cap on the size of the complete net tree.
pub const DEFAULT_MAX_NODES: u64 = 4_000_000;

/// User-facing inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineInput {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Overrides the target dimension formula.
    pub proj_dim: Option<usize>,
    pub proj_constant: f64,
    pub max_nodes: u64,
}

impl PipelineInput {
    pub fn new(n: usize, d: usize, k: usize, epsilon: f64, delta: f64, alpha: f64, beta: f64) -> Self {
        PipelineInput {
            n,
            d,
            k,
            epsilon,
            delta,
            alpha,
            beta,
            proj_dim: None,
            proj_constant: PROJ_CONSTANT,
            max_nodes: DEFAULT_MAX_NODES,
        }
    }

    pub fn with_proj_dim(mut self, d_prime: usize) -> Self {
        self.proj_dim = Some(d_prime);
        self
    }
}

/// Every derived quantity, in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PipelineInput,
    /// `0.1 alpha`.
    pub xi: f64,
    pub alpha_tilde: f64,
    pub beta_tilde: f64,
    /// Target dimension `d'`.
    pub proj_dim: usize,
    /// `sqrt(0.01 / ln(n / beta) * d / d')`.
    pub lambda: f64,
    pub tree: TreeParams,
    pub hist_budget: Budget,
    pub vec_budget: Budget,
    /// Failure probability granted to each oracle, `0.1 beta / N_T`.
    pub oracle_failure: f64,
}

/// `min(d, max(4, ceil(c log2(k / beta~) / alpha~^2)))`.
pub fn proj_dim_formula(d: usize, k: usize, alpha_tilde: f64, beta_tilde: f64, c: f64) -> usize {
    let raw = (c * (k as f64 / beta_tilde).log2() / (alpha_tilde * alpha_tilde)).ceil();
    let raw = if raw.is_finite() && raw < usize::MAX as f64 { raw as usize } else { usize::MAX };
    d.min(raw.max(4))
}

pub fn lambda(n: usize, beta: f64, d: usize, d_prime: usize) -> f64 {
    (0.01 / (n as f64 / beta).ln() * d as f64 / d_prime as f64).sqrt()
}

/// Validate inputs and derive the configuration and net family.
pub fn derive_params(input: PipelineInput) -> Result<(PipelineConfig, NetFamily)> {
    let PipelineInput {
        n,
        d,
        k,
        epsilon,
        delta,
        alpha,
        beta,
        ..
    } = input;
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidK { k, support: n });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} not in (0, 1]")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta = {beta} not in (0, 1)")));
    }
    if !(input.proj_constant > 0.0) {
        return Err(Error::InvalidParameter("projection constant must be positive".into()));
    }
    let total = Budget::new(epsilon, delta)?;
    let half = Budget {
        epsilon: total.epsilon / 2.0,
        delta: total.delta / 2.0,
    };
    let xi = 0.1 * alpha;
    let alpha_tilde = 0.1 * alpha;
    let beta_tilde = 0.1 * beta;
    let proj_dim = match input.proj_dim {
        Some(p) if p == 0 || p > d => {
            return Err(Error::InvalidParameter(format!("projected dimension {p} not in 1..={d}")))
        }
        Some(p) => p,
        None => proj_dim_formula(d, k, alpha_tilde, beta_tilde, input.proj_constant),
    };
    let nets = NetFamily::new(proj_dim, TreeParams::depth_for(n))?;
    let complete = (0..=nets.depth()).fold(0u64, |a, i| a.saturating_add(nets.level_size_bound(i)));
    if complete > input.max_nodes {
        return Err(Error::BudgetExceeded {
            nodes: complete,
            budget: input.max_nodes,
        });
    }
    let tree = TreeParams::new(n, k, xi, &nets)?;
    let cfg = PipelineConfig {
        input,
        xi,
        alpha_tilde,
        beta_tilde,
        proj_dim,
        lambda: lambda(n, beta, d, proj_dim),
        tree,
        hist_budget: half,
        vec_budget: half,
        oracle_failure: 0.1 * beta / tree.node_budget.max(1) as f64,
    };
    Ok((cfg, nets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plug_in_values() {
        // alpha = 1, beta = 0.1, k = 8: 8 log2(800) / 0.01 = 7715.08..
        let i = PipelineInput::new(1000, 20_000, 8, 2.0, 1e-6, 1.0, 0.1);
        let (c, _) = derive_params(i.with_proj_dim(2)).unwrap();
        assert_eq!(c.xi, 0.1);
        assert!((c.beta_tilde - 0.01).abs() < 1e-15);
        assert_eq!(proj_dim_formula(20_000, 8, 0.1, 0.01, 8.0), 7716);
        assert_eq!(proj_dim_formula(20, 8, 0.1, 0.01, 8.0), 20);
        assert_eq!(proj_dim_formula(100, 1, 1.0, 0.9, 1.0), 4);
        assert_eq!(c.hist_budget.epsilon, 1.0);
        assert_eq!(c.vec_budget.epsilon, 1.0);
        assert_eq!(c.hist_budget.delta, 5e-7);
    }

    #[test]
    fn tiny_n() {
        let (c, nets) = derive_params(PipelineInput::new(2, 3, 1, 1.0, 0.0, 0.5, 0.5)).unwrap();
        assert_eq!(c.tree.rounds, 1);
        assert_eq!(c.tree.depth, 1);
        assert_eq!(nets.depth(), 1);
    }

    #[test]
    fn lambda_formula() {
        let l = lambda(2000, 0.1, 20, 2);
        assert!((l - (0.1 / (20_000f64).ln()).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_ranges() {
        let ok = PipelineInput::new(100, 4, 2, 1.0, 0.0, 0.5, 0.1).with_proj_dim(2);
        assert!(derive_params(ok).is_ok());
        for bad in [
            PipelineInput { alpha: 0.0, ..ok },
            PipelineInput { beta: 1.0, ..ok },
            PipelineInput { epsilon: -1.0, ..ok },
            PipelineInput { k: 0, ..ok },
            PipelineInput { n: 0, ..ok },
            PipelineInput { proj_dim: Some(5), ..ok },
        ] {
            assert!(derive_params(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn oversized_tree_is_refused() {
        let i = PipelineInput::new(100_000, 50, 4, 1.0, 0.0, 0.5, 0.1);
        assert!(matches!(derive_params(i), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn model_names() {
        for m in [Model::Local, Model::Shuffle, Model::Exact] {
            assert_eq!(m.to_string().parse::<Model>().unwrap(), m);
        }
        assert!("central".parse::<Model>().is_err());
    }
}
