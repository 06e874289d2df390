use super::{LcpProblem, LcpStats, ObstacleOptions, ObstacleSolver};
use crate::error::{Error, Result};

/// Projected successive over-relaxation.
#[derive(Debug, Clone)]
pub struct Psor {
    pub omega: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Psor {
    pub fn from_options(opts: &ObstacleOptions) -> Self {
        Self { omega: opts.omega, tol: opts.tol, max_iter: opts.max_iter }
    }
}

impl ObstacleSolver for Psor {
    fn name(&self) -> &'static str {
        "psor"
    }

    fn solve(&self, p: &LcpProblem<'_>, u: &mut [f64]) -> Result<LcpStats> {
        let a = p.matrix;
        let n = a.len();
        for i in 0..n {
            u[i] = u[i].max(p.obstacle[i]);
        }
        let mut change = f64::INFINITY;
        for it in 1..=self.max_iter {
            change = 0.0;
            for i in 0..n {
                let mut off = 0.0;
                if i > 0 {
                    off += a.lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    off += a.upper[i] * u[i + 1];
                }
                let gs = (p.rhs[i] - off) / a.diag[i];
                let next = (u[i] + self.omega * (gs - u[i])).max(p.obstacle[i]);
                change = f64::max(change, (next - u[i]).abs());
                u[i] = next;
            }
            if change <= self.tol {
                return Ok(LcpStats { iterations: it, residual: change });
            }
        }
        Err(Error::NonConvergence { what: "PSOR", iterations: self.max_iter, residual: change })
    }
}
