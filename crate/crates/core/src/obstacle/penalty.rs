use super::{LcpProblem, LcpStats, ObstacleOptions, ObstacleSolver};
use crate::error::{Error, Result};

/// Penalty formulation `A u = rhs + ρ̃ (ψ − u)⁺`, solved by policy iteration
/// on the penalized set. `ρ̃ = ρ · time_step`, so the obstacle violation is
/// O(1/ρ) in PDE units independently of the step size.
#[derive(Debug, Clone)]
pub struct Penalty {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Penalty {
    pub fn from_options(opts: &ObstacleOptions) -> Self {
        Self { rho: opts.penalty, tol: opts.tol, max_iter: 200 }
    }
}

impl ObstacleSolver for Penalty {
    fn name(&self) -> &'static str {
        "penalty"
    }

    fn solve(&self, p: &LcpProblem<'_>, u: &mut [f64]) -> Result<LcpStats> {
        let n = p.matrix.len();
        let weight = self.rho * p.time_step;
        let mut penalized: Vec<bool> = (0..n).map(|i| u[i] < p.obstacle[i]).collect();
        let mut m = p.matrix.clone();
        let mut rhs = vec![0.0; n];
        let mut next = vec![0.0; n];
        for it in 1..=self.max_iter {
            for i in 0..n {
                let w = if penalized[i] { weight } else { 0.0 };
                m.diag[i] = p.matrix.diag[i] + w;
                rhs[i] = p.rhs[i] + w * p.obstacle[i];
            }
            m.solve_into(&rhs, &mut next);
            let mut change: f64 = 0.0;
            let mut flipped = false;
            for i in 0..n {
                change = change.max((next[i] - u[i]).abs());
                let pen = next[i] < p.obstacle[i];
                flipped |= pen != penalized[i];
                penalized[i] = pen;
            }
            u.copy_from_slice(&next);
            if !flipped || change <= self.tol {
                return Ok(LcpStats { iterations: it, residual: change });
            }
        }
        Err(Error::NonConvergence { what: "penalty iteration", iterations: self.max_iter, residual: f64::NAN })
    }
}
