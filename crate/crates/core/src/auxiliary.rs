//! The auxiliary stopping problem behind the near-maturity expansion:
//!
//! ```text
//! v(y) = sup_τ E[ e^{λτ} 1{N̂_τ = 0} ∫₀^τ f_{λβ}(y + B_s) ds
//!               + (β/2) e^{λτ} 1{N̂_τ = 1} (L^{−y}_τ − L^{−y}_{T̂₁}) ]
//! ```
//!
//! with f_a(x) = x + a x⁺, N̂ a Poisson process of rate λ and T̂₁ its first
//! jump. After the first jump it is never worth stopping before time 1, so
//! the post-jump value is (β/2)·m(s, x) with m(s, x) = E|x + B_{1−s}| − |x|.
//! Integrating out the jump time leaves a plain running-reward problem
//!
//! ```text
//! v(y) = sup_σ E ∫₀^σ g(s, y + B_s) ds,   g = f_{λβ}(x) + λ(β/2) m(s, x),
//! ```
//!
//! solved here as a parabolic obstacle problem with obstacle 0. The
//! [`tree_oracle`] prices the original two-regime problem on a binomial
//! lattice without using that reduction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obstacle::{complementarity_residual, LcpProblem, ObstacleOptions, ObstacleRegistry, Tridiagonal};
use crate::special::{brownian_local_time_mean, gaussian_loss, norm_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxParams {
    pub lambda: f64,
    pub beta: f64,
}

impl AuxParams {
    pub fn new(lambda: f64, beta: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "auxiliary parameters need lambda >= 0 and beta > 0, got ({lambda}, {beta})"
            )));
        }
        Ok(Self { lambda, beta })
    }

    pub fn lambda_beta(&self) -> f64 {
        self.lambda * self.beta
    }

    /// Upper bound 1 + λβ(2 + e^λ) for the threshold.
    pub fn threshold_bound(&self) -> f64 {
        1.0 + self.lambda_beta() * (2.0 + self.lambda.exp())
    }

    /// Running reward f_{λβ}(x) = x + λβ x⁺.
    pub fn reward(&self, x: f64) -> f64 {
        x + self.lambda_beta() * x.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxGrid {
    /// Lower end of the y grid; widened automatically to cover the
    /// zero region implied by the threshold bound.
    pub y_min: f64,
    pub y_max: f64,
    pub dy: f64,
    pub dt: f64,
    pub obstacle: String,
    pub obstacle_options: ObstacleOptions,
    /// Level below which v counts as zero when locating the support edge.
    pub v_tol: f64,
    /// Number of stored time slices besides t = 0.
    pub slices: usize,
}

impl Default for AuxGrid {
    fn default() -> Self {
        Self {
            y_min: -12.0,
            y_max: 6.0,
            dy: 2.5e-3,
            dt: 2.5e-4,
            obstacle: "brennan-schwartz".into(),
            obstacle_options: ObstacleOptions::default(),
            v_tol: 1e-8,
            slices: 20,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuxDiagnostics {
    pub steps: usize,
    pub lcp_iterations: usize,
    pub max_residual: f64,
}

/// Grid solution of the reduced obstacle problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxSolution {
    pub params: AuxParams,
    pub ygrid: Vec<f64>,
    /// Calendar times of the stored slices, ascending; `tgrid[0] = 0`.
    pub tgrid: Vec<f64>,
    /// w(t, ·) at each stored time; `w0[0]` is v.
    pub w0: Vec<Vec<f64>>,
    pub y_threshold: f64,
    pub diagnostics: AuxDiagnostics,
}

/// `E|x + B_{1−t}| − |x|`: expected local time of y + B at 0 over [t, 1].
pub fn expected_local_time(t: f64, x: f64) -> f64 {
    brownian_local_time_mean(1.0 - t.min(1.0), x)
}

/// C(x) = x − λβ E(B₁ − x)⁺.
pub fn c_function(p: &AuxParams, x: f64) -> f64 {
    x - p.lambda_beta() * gaussian_loss(x)
}

/// `(E(a − B_t)⁺ − a⁺, √t φ(a/√t))`; the first never exceeds the second.
pub fn local_time_bound_check(a: f64, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("t must be positive".into()));
    }
    let rt = t.sqrt();
    Ok((rt * gaussian_loss(a.abs() / rt), rt * norm_pdf(a / rt)))
}

pub fn solve_aux(p: &AuxParams, grid: &AuxGrid) -> Result<AuxSolution> {
    solve_aux_with(p, grid, &ObstacleRegistry::with_builtins())
}

pub fn solve_aux_with(p: &AuxParams, grid: &AuxGrid, registry: &ObstacleRegistry) -> Result<AuxSolution> {
    if !(grid.dy > 0.0 && grid.dt > 0.0 && grid.dt <= 1.0 && grid.y_max >= 4.0) {
        return Err(Error::InvalidArgument("auxiliary grid needs dy, dt > 0, dt <= 1 and y_max >= 4".into()));
    }
    let solver = registry.create(&grid.obstacle, &grid.obstacle_options)?;
    let lo = grid.y_min.min(-(2.0 + p.lambda_beta() * (2.0 + p.lambda.exp())));
    // kink of f at 0 sits on a node
    let below = (-lo / grid.dy).ceil() as usize;
    let above = (grid.y_max / grid.dy).ceil() as usize;
    let n = below + above + 1;
    let ys: Vec<f64> = (0..n).map(|j| (j as f64 - below as f64) * grid.dy).collect();
    let y_top = ys[n - 1];
    let nt = (1.0 / grid.dt).round().max(1.0) as usize;
    let dt = 1.0 / nt as f64;
    let every = (nt / grid.slices.max(1)).max(1);

    let c = 0.5 * dt / (grid.dy * grid.dy);
    let mut lower = vec![-c; n];
    let mut diag = vec![1.0 + 2.0 * c; n];
    let mut upper = vec![-c; n];
    for j in [0, n - 1] {
        lower[j] = 0.0;
        upper[j] = 0.0;
        diag[j] = 1.0;
    }
    let a = Tridiagonal::new(lower, diag, upper);

    let f: Vec<f64> = ys.iter().map(|&y| p.reward(y)).collect();
    let half_lb = 0.5 * p.lambda * p.beta;
    // source at time-to-go τ; the local-time term is negligible beyond 12√τ
    let source_into = |tau: f64, out: &mut [f64]| {
        let reach = 12.0 * tau.sqrt();
        for (j, o) in out.iter_mut().enumerate() {
            *o = f[j];
            if half_lb > 0.0 && ys[j].abs() < reach {
                *o += half_lb * brownian_local_time_mean(tau, ys[j]);
            }
        }
    };
    let mut src0 = vec![0.0; n];
    let mut src1 = vec![0.0; n];
    source_into(0.0, &mut src0);
    let zero = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut slices = vec![w.clone()];
    let mut times = vec![1.0];
    let mut diagn = AuxDiagnostics::default();

    for step in 1..=nt {
        let tau1 = step as f64 * dt;
        source_into(tau1, &mut src1);
        for j in 1..n - 1 {
            rhs[j] = w[j] + 0.5 * dt * (src0[j] + src1[j]);
        }
        std::mem::swap(&mut src0, &mut src1);
        rhs[0] = 0.0;
        // far above the edge stopping is never optimal before time 1
        rhs[n - 1] = (1.0 + p.lambda_beta()) * y_top * tau1;
        next.copy_from_slice(&w);
        let prob = LcpProblem { matrix: &a, rhs: &rhs, obstacle: &zero, time_step: dt };
        let stats = solver.solve(&prob, &mut next)?;
        diagn.lcp_iterations += stats.iterations;
        diagn.max_residual = diagn.max_residual.max(complementarity_residual(&prob, &next));
        std::mem::swap(&mut w, &mut next);
        diagn.steps += 1;
        if step % every == 0 || step == nt {
            slices.push(w.clone());
            times.push(1.0 - tau1);
        }
    }
    slices.reverse();
    times.reverse();
    times[0] = 0.0;

    let v = &slices[0];
    let y_threshold = support_edge(&ys, v, grid.v_tol).ok_or_else(|| Error::NonConvergence {
        what: "auxiliary support edge (v never exceeds v_tol)",
        iterations: nt,
        residual: v.iter().cloned().fold(0.0, f64::max),
    })?;
    Ok(AuxSolution { params: *p, ygrid: ys, tgrid: times, w0: slices, y_threshold, diagnostics: diagn })
}

/// −(level where v first rises above `tol`), linear between nodes.
fn support_edge(ys: &[f64], v: &[f64], tol: f64) -> Option<f64> {
    let j = v.iter().position(|&x| x > tol)?;
    if j == 0 {
        return Some(-ys[0]);
    }
    let frac = (tol - v[j - 1]) / (v[j] - v[j - 1]);
    Some(-(ys[j - 1] + frac.clamp(0.0, 1.0) * (ys[j] - ys[j - 1])))
}

impl AuxSolution {
    /// v(y) by linear interpolation; 0 below the grid, linear growth above.
    pub fn v(&self, y: f64) -> f64 {
        let ys = &self.ygrid;
        let v = &self.w0[0];
        if y <= ys[0] {
            return 0.0;
        }
        let n = ys.len();
        if y >= ys[n - 1] {
            return v[n - 1] + (1.0 + self.params.lambda_beta()) * (y - ys[n - 1]);
        }
        let dy = ys[1] - ys[0];
        let s = (y - ys[0]) / dy;
        let j = (s.floor() as usize).min(n - 2);
        let t = s - j as f64;
        (1.0 - t) * v[j] + t * v[j + 1]
    }

    pub fn dy(&self) -> f64 {
        self.ygrid[1] - self.ygrid[0]
    }

    /// `y,v_value` rows for the t = 0 slice.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,v_value\n");
        for (y, v) in self.ygrid.iter().zip(&self.w0[0]) {
            out.push_str(&format!("{y},{v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxSummary {
    pub lambda: f64,
    pub beta: f64,
    pub y_threshold: f64,
    pub y0_reference: f64,
    pub bound_1_plus_lb: f64,
}

impl AuxSummary {
    pub fn new(sol: &AuxSolution, y0_reference: f64) -> Self {
        Self {
            lambda: sol.params.lambda,
            beta: sol.params.beta,
            y_threshold: sol.y_threshold,
            y0_reference,
            bound_1_plus_lb: sol.params.threshold_bound(),
        }
    }
}

/// Value of the original two-regime problem on a recombining binomial
/// lattice with `nsteps` steps of ±√Δt.
///
/// Regime 1 (one jump seen) collects the Tanaka increment |x'| − |x| per
/// step and may stop at any node; regime 0 collects f by the trapezoid rule
/// and moves to regime 1 with probability 1 − e^{−λΔt}. The e^{λτ} weight
/// cancels the survival probability, and the reward is linear in the
/// accumulated quantities, so each regime needs a single value per node.
pub fn tree_oracle(p: &AuxParams, y: f64, nsteps: usize) -> f64 {
    let n = nsteps.max(1);
    let dt = 1.0 / n as f64;
    let h = dt.sqrt();
    let jump = (p.lambda * dt).exp_m1() * 0.5 * p.beta;
    let x = |k: usize, j: usize| y + (2.0 * j as f64 - k as f64) * h;
    let mut u = vec![0.0; n + 1];
    let mut w = vec![0.0; n + 1];
    for k in (0..n).rev() {
        for j in 0..=k {
            let xk = x(k, j);
            let (up, dn) = (xk + h, xk - h);
            let tanaka = 0.5 * (up.abs() + dn.abs()) - xk.abs();
            let u_next = 0.5 * (u[j + 1] + u[j]);
            let run = 0.5 * dt * (p.reward(xk) + 0.5 * (p.reward(up) + p.reward(dn)));
            w[j] = (run + 0.5 * (w[j + 1] + w[j]) + jump * u_next).max(0.0);
            u[j] = (tanaka + u_next).max(0.0);
        }
    }
    w[0]
}

/// [`tree_oracle`] at several starting points, in parallel.
pub fn tree_oracle_many(p: &AuxParams, ys: &[f64], nsteps: usize) -> Vec<f64> {
    ys.par_iter().map(|&y| tree_oracle(p, y, nsteps)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> AuxGrid {
        AuxGrid { dy: 1e-2, dt: 1e-3, ..Default::default() }
    }

    #[test]
    fn local_time_closed_forms() {
        assert!((expected_local_time(0.0, 0.0) - 0.797_884_560_802_865_4).abs() < 1e-12);
        assert!(expected_local_time(1.0 - 1e-14, 0.3).abs() < 1e-12);
        let (l, r) = local_time_bound_check(0.0, 1.0).unwrap();
        assert!((l - r).abs() < 1e-15 && (l - 0.398_942_280_401_432_7).abs() < 1e-15);
        let (l, r) = local_time_bound_check(5.0, 0.01).unwrap();
        assert!(l >= 0.0 && l <= r && r < 1e-300);
        let (l, r) = local_time_bound_check(-1.0, 0.5).unwrap();
        assert!(0.0 <= l && l <= r);
    }

    #[test]
    fn c_function_values() {
        let p = AuxParams::new(0.05, 50.0).unwrap();
        assert!((c_function(&p, 0.0) + 0.997_355_701_003_582).abs() < 1e-12);
        let p0 = AuxParams::new(0.0, 3.0).unwrap();
        assert_eq!(c_function(&p0, 0.7), 0.7);
    }

    #[test]
    fn tree_is_zero_far_below() {
        let p = AuxParams::new(0.0, 1.0).unwrap();
        assert_eq!(tree_oracle(&p, -10.0, 400), 0.0);
    }

    #[test]
    fn tree_reward_dominance() {
        let p0 = AuxParams::new(0.0, 50.0).unwrap();
        let p1 = AuxParams::new(0.05, 50.0).unwrap();
        assert!(tree_oracle(&p1, 0.0, 400) >= tree_oracle(&p0, 0.0, 400));
    }

    #[test]
    fn lambda_zero_threshold_in_bounds() {
        let p = AuxParams::new(0.0, 1.0).unwrap();
        let s = solve_aux(&p, &coarse()).unwrap();
        assert!(s.y_threshold > 0.0 && s.y_threshold < 1.0);
        assert!(s.v(0.0) > 0.0);
        assert!(s.w0.iter().flatten().all(|&w| w >= -1e-12));
        assert!(s.w0.last().unwrap().iter().all(|&w| w == 0.0));
        assert_eq!(s.tgrid[0], 0.0);
        let tree = tree_oracle(&p, 0.0, 1000);
        assert!((s.v(0.0) - tree).abs() < 0.03 * tree, "{} vs {tree}", s.v(0.0));
    }

    #[test]
    fn grid_widens_for_large_lambda_beta() {
        let p = AuxParams::new(0.3, 50.0).unwrap();
        let s = solve_aux(&p, &AuxGrid { dy: 2e-2, dt: 4e-3, ..Default::default() }).unwrap();
        assert!(s.ygrid[0] <= -p.threshold_bound());
        assert!(s.y_threshold > 0.0 && s.y_threshold < p.threshold_bound());
        assert!(s.v(-p.threshold_bound()) <= 1e-8);
    }

    #[test]
    fn support_edge_interpolates() {
        let ys = [-2.0, -1.0, 0.0, 1.0];
        let v = [0.0, 0.0, 1.0, 2.0];
        assert!((support_edge(&ys, &v, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(support_edge(&ys, &[0.0; 4], 0.5).is_none());
    }
}
