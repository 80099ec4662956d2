//! Solver outputs: the computed value, an optional witness partition, the
//! certified additive error budget, and audit parameters.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::partition::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Oracle,
    TypeSparse,
    Ptas,
    Pipeline,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Oracle => "oracle",
            Solver::TypeSparse => "typesparse",
            Solver::Ptas => "ptas",
            Solver::Pipeline => "pipeline",
        })
    }
}

/// Result of one solver invocation.
///
/// For exact solvers the budget is 0 and the witness cost equals `value`.
/// For approximate solvers the guarantee is
/// `|value - CalDist| <= additive_error_budget` on the lower side and
/// `value <= CalDist + eps` on the upper side, with the concrete split
/// recorded in `params` for audit.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub value: f64,
    pub witness: Option<Partition>,
    pub solver: Solver,
    pub additive_error_budget: f64,
    pub wall_time: Duration,
    pub params: BTreeMap<String, f64>,
}

impl SolverResult {
    pub fn new(solver: Solver, value: f64) -> Self {
        SolverResult {
            value,
            witness: None,
            solver,
            additive_error_budget: 0.0,
            wall_time: Duration::ZERO,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }
}
