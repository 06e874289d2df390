use super::{LcpProblem, LcpStats, ObstacleSolver};
use crate::error::Result;

/// Direct projected elimination for problems whose contact set is a single
/// interval at the low end of the grid (`u = ψ` on `[0, i*]`, free above).
///
/// The superdiagonal is eliminated from the top row down, then the unknowns
/// are recovered from the bottom up with the projection applied as each one
/// is computed.
#[derive(Debug, Clone, Default)]
pub struct BrennanSchwartz;

impl ObstacleSolver for BrennanSchwartz {
    fn name(&self) -> &'static str {
        "brennan-schwartz"
    }

    fn solve(&self, p: &LcpProblem<'_>, u: &mut [f64]) -> Result<LcpStats> {
        let a = p.matrix;
        let n = a.len();
        let mut b = vec![0.0; n];
        let mut d = vec![0.0; n];
        b[n - 1] = a.diag[n - 1];
        d[n - 1] = p.rhs[n - 1];
        for i in (0..n - 1).rev() {
            let m = a.upper[i] / b[i + 1];
            b[i] = a.diag[i] - m * a.lower[i + 1];
            d[i] = p.rhs[i] - m * d[i + 1];
        }
        u[0] = (d[0] / b[0]).max(p.obstacle[0]);
        for i in 1..n {
            u[i] = ((d[i] - a.lower[i] * u[i - 1]) / b[i]).max(p.obstacle[i]);
        }
        Ok(LcpStats { iterations: 1, residual: 0.0 })
    }
}
