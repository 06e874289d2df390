//! American put under the jump diffusion: backward march of the variational
//! inequality on a log-spot grid, exercise-boundary extraction and diagnostics.
//!
//! In time to maturity θ the price u(θ, x), x = ln S, satisfies
//!
//! ```text
//! min( u − ψ,  ∂_θ u − ½σ² u_xx − μ u_x + (r + ν(ℝ)) u − Σ wᵢ u(x + yᵢ) ) = 0
//! ```
//!
//! with ψ = (K − eˣ)⁺. Diffusion, drift and discounting are implicit; the jump
//! sum is lagged and iterated to a fixed point inside each step.

mod boundary;
mod grid;
mod premium;
mod surface;

use serde::{Deserialize, Serialize};

pub use boundary::{extract_boundary, smooth_fit_check, spot_slope, BoundaryCurve, BoundaryPoint, SmoothFitPoint, DEFAULT_C_EX};
pub use grid::{time_levels, GridSpec, JumpInterpolation, ShiftStencil, SpaceGrid, TimeScheme};
pub use premium::{premium_mc_check, PremiumCheck};
pub use surface::{PriceSurface, SolveDiagnostics, SURFACE_CSV_HEADER};

use crate::error::{Error, Result};
use crate::levy_model::ModelParams;
use crate::obstacle::{complementarity_residual, LcpProblem, ObstacleOptions, ObstacleRegistry, Tridiagonal};

/// Solver knobs that do not affect the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    /// Registry name of the obstacle solver.
    pub obstacle: String,
    pub obstacle_options: ObstacleOptions,
    pub interpolation: JumpInterpolation,
    /// Fixed-point stopping tolerance, relative to K.
    pub step_tol: f64,
    pub max_fixed_point: usize,
    /// Implicit Euler steps before Crank–Nicolson takes over.
    pub rannacher_steps: usize,
    /// Keep every time level (otherwise only the requested ones and the last).
    pub store_all: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            obstacle: "brennan-schwartz".into(),
            obstacle_options: ObstacleOptions::default(),
            interpolation: JumpInterpolation::Cubic,
            step_tol: 1e-10,
            max_fixed_point: 200,
            rannacher_steps: 4,
            store_all: true,
        }
    }
}

/// Everything `solve_am` needs besides the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmericanConfig {
    pub grid: GridSpec,
    pub solver: SolverSpec,
    /// Time levels that must appear exactly in the surface.
    pub thetas: Vec<f64>,
}

/// Spatial part of the discrete generator, without the obstacle.
struct Operator {
    lo: f64,
    mid: f64,
    hi: f64,
    stencils: Vec<ShiftStencil>,
}

impl Operator {
    fn new(m: &ModelParams, g: &SpaceGrid, interp: JumpInterpolation) -> Result<Self> {
        let s2 = m.sigma() * m.sigma();
        let mu = m.mu();
        let diff = 0.5 * s2 / (g.dx * g.dx);
        let adv = 0.5 * mu / g.dx;
        if diff - adv.abs() < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "space step {:e} too coarse for drift {mu:e}: the scheme loses monotonicity",
                g.dx
            )));
        }
        Ok(Self {
            lo: diff - adv,
            mid: -(2.0 * diff + m.r() + m.nu().total_mass()),
            hi: diff + adv,
            stencils: m
                .nu()
                .atoms()
                .iter()
                .map(|a| ShiftStencil::new(a.y, a.w, g.dx, interp))
                .collect(),
        })
    }

    /// L u at interior nodes (boundary entries left at 0).
    fn apply_local(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for j in 1..n - 1 {
            out[j] = self.lo * u[j - 1] + self.mid * u[j] + self.hi * u[j + 1];
        }
    }

    /// Σ wᵢ u(x_j + yᵢ) with payoff below the grid and 0 above it.
    fn apply_jumps(&self, u: &[f64], payoff_ext: impl Fn(isize) -> f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let n = u.len() as isize;
        for st in &self.stencils {
            for (j, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &(k, c) in &st.taps {
                    let idx = j as isize + k;
                    let v = if idx < 0 {
                        payoff_ext(idx)
                    } else if idx >= n {
                        0.0
                    } else {
                        u[idx as usize]
                    };
                    acc += c * v;
                }
                *o += st.intensity * acc;
            }
        }
    }

    fn system(&self, n: usize, dt: f64, implicit_weight: f64) -> Tridiagonal {
        let c = dt * implicit_weight;
        let mut lower = vec![-c * self.lo; n];
        let mut diag = vec![1.0 - c * self.mid; n];
        let mut upper = vec![-c * self.hi; n];
        lower[0] = 0.0;
        upper[0] = 0.0;
        diag[0] = 1.0;
        lower[n - 1] = 0.0;
        upper[n - 1] = 0.0;
        diag[n - 1] = 1.0;
        Tridiagonal::new(lower, diag, upper)
    }
}

/// Solve the American put on the grid and return the price surface.
pub fn solve_am(m: &ModelParams, cfg: &AmericanConfig) -> Result<PriceSurface> {
    solve_am_with(m, cfg, &ObstacleRegistry::with_builtins())
}

/// As [`solve_am`], resolving the obstacle solver in a caller-supplied registry.
pub fn solve_am_with(m: &ModelParams, cfg: &AmericanConfig, registry: &ObstacleRegistry) -> Result<PriceSurface> {
    let spec = &cfg.grid;
    let sol = &cfg.solver;
    spec.validate(m)?;
    let obstacle = registry.create(&sol.obstacle, &sol.obstacle_options)?;
    let k = m.strike();
    let xi = m.maturity_limit_price();
    let horizon = spec.horizon_for(m);
    let grid = SpaceGrid::build(spec, m, xi);
    let n = grid.n;
    let op = Operator::new(m, &grid, sol.interpolation)?;
    let levels = time_levels(spec, horizon, &cfg.thetas);
    let keep = |idx: usize| {
        sol.store_all
            || idx == 0
            || idx + 1 == levels.len()
            || cfg.thetas.iter().any(|&t| t == levels[idx])
    };

    let xs = grid.nodes();
    let psi: Vec<f64> = xs.iter().map(|&x| (k - x.exp()).max(0.0)).collect();
    let payoff_ext = |idx: isize| k - (grid.x0 + idx as f64 * grid.dx).exp();
    let active_tol = 1e-12 * k;
    let step_tol = sol.step_tol * k;

    let mut surface = PriceSurface::new(m, spec.clone(), sol.clone(), grid.clone(), xi);
    surface.push_level(0.0, psi.clone(), vec![true; n]);

    let mut u = psi.clone();
    let mut next = vec![0.0; n];
    let mut lu = vec![0.0; n];
    let mut ju = vec![0.0; n];
    let mut ju_old = vec![0.0; n];
    let mut explicit = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut diag = SolveDiagnostics::new(obstacle.name(), spec.scheme);

    for step in 1..levels.len() {
        let dt = levels[step] - levels[step - 1];
        let cn = spec.scheme == TimeScheme::CrankNicolson && step > sol.rannacher_steps;
        let wi = if cn { 0.5 } else { 1.0 };
        let a = op.system(n, dt, wi);

        // θ-explicit part of the right-hand side
        explicit.copy_from_slice(&u);
        if cn {
            op.apply_local(&u, &mut lu);
            op.apply_jumps(&u, payoff_ext, &mut ju_old);
            for j in 1..n - 1 {
                explicit[j] += 0.5 * dt * (lu[j] + ju_old[j]);
            }
        }

        let mut guess = u.clone();
        let mut converged = false;
        let mut fp_iters = 0;
        let mut change = f64::INFINITY;
        while fp_iters < sol.max_fixed_point {
            fp_iters += 1;
            op.apply_jumps(&guess, payoff_ext, &mut ju);
            for j in 1..n - 1 {
                rhs[j] = explicit[j] + wi * dt * ju[j];
            }
            rhs[0] = psi[0];
            rhs[n - 1] = 0.0;
            next.copy_from_slice(&guess);
            let problem = LcpProblem { matrix: &a, rhs: &rhs, obstacle: &psi, time_step: dt };
            let stats = obstacle.solve(&problem, &mut next)?;
            diag.lcp_iterations += stats.iterations;
            change = next.iter().zip(&guess).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            std::mem::swap(&mut guess, &mut next);
            if change <= step_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "jump fixed-point iteration",
                iterations: fp_iters,
                residual: change,
            });
        }
        diag.fixed_point_iterations += fp_iters;
        diag.max_fixed_point = diag.max_fixed_point.max(fp_iters);
        diag.max_step_change = diag.max_step_change.max(change);

        // residual of the fully coupled step at the accepted iterate
        op.apply_jumps(&guess, payoff_ext, &mut ju);
        for j in 1..n - 1 {
            rhs[j] = explicit[j] + wi * dt * ju[j];
        }
        let problem = LcpProblem { matrix: &a, rhs: &rhs, obstacle: &psi, time_step: dt };
        let res = complementarity_residual(&problem, &guess);
        diag.max_residual = diag.max_residual.max(res);

        u = guess;
        diag.steps += 1;
        if keep(step) {
            let active = u.iter().zip(&psi).map(|(v, p)| v - p <= active_tol).collect();
            surface.push_level(levels[step], u.clone(), active);
        }
    }
    surface.diagnostics = diag;
    Ok(surface)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::european::{price_eu_theta, SeriesConfig};
    use crate::levy_model::LevyMeasure;

    fn model_b() -> ModelParams {
        ModelParams::new(0.05, 0.02, 0.2, 100.0, 0.5, LevyMeasure::single(1.25f64.ln(), 0.2).unwrap()).unwrap()
    }

    fn quick() -> AmericanConfig {
        AmericanConfig {
            grid: GridSpec { nx: 400, nt: 100, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn terminal_slice_is_payoff() {
        let m = model_b();
        let s = solve_am(&m, &quick()).unwrap();
        assert_eq!(s.thetas[0], 0.0);
        for (x, v) in s.logspots.iter().zip(&s.values[0]) {
            assert_eq!(*v, (100.0 - x.exp()).max(0.0));
        }
    }

    #[test]
    fn american_dominates_european_and_payoff() {
        let m = model_b();
        let s = solve_am(&m, &quick()).unwrap();
        let last = s.thetas.len() - 1;
        let theta = s.thetas[last];
        for (i, &x) in s.logspots.iter().enumerate().step_by(7) {
            let spot = x.exp();
            if !(40.0..200.0).contains(&spot) {
                continue;
            }
            let pe = price_eu_theta(&m, theta, spot, &SeriesConfig::default()).unwrap().price;
            let p = s.values[last][i];
            assert!(p >= pe - 2e-3, "P < P_e at S={spot}: {p} vs {pe}");
            assert!(p >= (100.0 - spot).max(0.0) - 1e-12);
        }
        assert!(s.diagnostics.max_residual < 1e-8);
    }

    #[test]
    fn convex_and_nonincreasing_in_spot() {
        let m = model_b();
        let s = solve_am(&m, &quick()).unwrap();
        let v = s.values.last().unwrap();
        let xs = &s.logspots;
        for j in 1..v.len() - 1 {
            assert!(v[j + 1] <= v[j] + 1e-10);
            // convexity in S on the nonuniform spot grid
            let (s0, s1, s2) = (xs[j - 1].exp(), xs[j].exp(), xs[j + 1].exp());
            let d1 = (v[j] - v[j - 1]) / (s1 - s0);
            let d2 = (v[j + 1] - v[j]) / (s2 - s1);
            assert!(d2 >= d1 - 1e-7, "convexity at {j}");
        }
    }

    #[test]
    fn psor_and_penalty_agree() {
        let m = model_b();
        let mut base = quick();
        base.grid.horizon = Some(0.1);
        base.solver.store_all = false;
        let mut sols = Vec::new();
        for name in ["psor", "penalty"] {
            let mut c = base.clone();
            c.solver.obstacle = name.into();
            c.solver.obstacle_options.tol = 1e-13;
            sols.push(solve_am(&m, &c).unwrap());
        }
        let (a, b) = (sols[0].values.last().unwrap(), sols[1].values.last().unwrap());
        let diff = a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6 * 100.0, "max diff {diff}");
    }

    #[test]
    fn unknown_solver_rejected() {
        let mut c = quick();
        c.solver.obstacle = "gauss".into();
        assert!(matches!(solve_am(&model_b(), &c), Err(Error::UnknownSolver { .. })));
    }

    #[test]
    fn fixed_point_budget_enforced() {
        let mut c = quick();
        c.solver.max_fixed_point = 1;
        assert!(matches!(solve_am(&model_b(), &c), Err(Error::NonConvergence { .. })));
    }
}
