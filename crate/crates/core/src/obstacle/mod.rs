//! Linear complementarity solvers for one implicit time step of an obstacle
//! problem:
//!
//! ```text
//! A u ≥ rhs,   u ≥ ψ,   (A u − rhs)·(u − ψ) = 0
//! ```
//!
//! with `A` a tridiagonal M-matrix. Each method implements
//! [`ObstacleSolver`] and is registered by name in an [`ObstacleRegistry`];
//! solvers are picked at runtime from configuration.

mod brennan_schwartz;
mod penalty;
mod psor;
mod tridiag;

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

pub use brennan_schwartz::BrennanSchwartz;
pub use penalty::Penalty;
pub use psor::Psor;
pub use tridiag::Tridiagonal;

use crate::error::{Error, Result};

/// One step's complementarity problem.
#[derive(Debug, Clone, Copy)]
pub struct LcpProblem<'a> {
    pub matrix: &'a Tridiagonal,
    pub rhs: &'a [f64],
    pub obstacle: &'a [f64],
    /// Length of the time step that produced `matrix`; scales the penalty.
    pub time_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LcpStats {
    pub iterations: usize,
    pub residual: f64,
}

pub trait ObstacleSolver: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// `u` carries the initial guess in and the solution out.
    fn solve(&self, problem: &LcpProblem<'_>, u: &mut [f64]) -> Result<LcpStats>;
}

/// Tuning shared by the built-in solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleOptions {
    /// PSOR relaxation factor.
    pub omega: f64,
    /// Absolute stopping tolerance on successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Penalty intensity ρ, in 1/time.
    pub penalty: f64,
}

impl Default for ObstacleOptions {
    fn default() -> Self {
        Self { omega: 1.5, tol: 1e-12, max_iter: 10_000, penalty: 1e7 }
    }
}

pub type SolverFactory = fn(&ObstacleOptions) -> Box<dyn ObstacleSolver>;

/// Name → constructor table for obstacle solvers.
#[derive(Clone)]
pub struct ObstacleRegistry {
    entries: BTreeMap<&'static str, SolverFactory>,
}

impl Debug for ObstacleRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl Default for ObstacleRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ObstacleRegistry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("psor", |o| Box::new(Psor::from_options(o)));
        reg.register("penalty", |o| Box::new(Penalty::from_options(o)));
        reg.register("brennan-schwartz", |_| Box::new(BrennanSchwartz));
        reg
    }

    pub fn register(&mut self, name: &'static str, factory: SolverFactory) {
        self.entries.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn create(&self, name: &str, opts: &ObstacleOptions) -> Result<Box<dyn ObstacleSolver>> {
        self.entries.get(name).map(|f| f(opts)).ok_or_else(|| Error::UnknownSolver {
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }
}

/// Build a solver from the built-in registry.
pub fn create_solver(name: &str, opts: &ObstacleOptions) -> Result<Box<dyn ObstacleSolver>> {
    ObstacleRegistry::with_builtins().create(name, opts)
}

/// max_i |min(u_i − ψ_i, (A u − rhs)_i)|
pub fn complementarity_residual(p: &LcpProblem<'_>, u: &[f64]) -> f64 {
    (0..u.len())
        .map(|i| (u[i] - p.obstacle[i]).min(p.matrix.row_dot(i, u) - p.rhs[i]).abs())
        .fold(0.0, f64::max)
}
