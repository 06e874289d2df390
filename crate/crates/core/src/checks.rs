//! Invariant suite run by `putbound check`: shape properties of P and P_e,
//! orderings, smooth fit under refinement and obstacle-solver agreement.

use serde::{Deserialize, Serialize};

use crate::american::{
    extract_boundary, smooth_fit_check, solve_am, AmericanConfig, GridSpec, PriceSurface, SolverSpec, TimeScheme,
};
use crate::error::Result;
use crate::european::{solve_be_theta, EuroSlice, SeriesConfig};
use crate::levy_model::{ModelConfig, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub c_ex: f64,
    /// Horizon of the smaller solves used for refinement and solver agreement.
    pub short_horizon: f64,
    pub min_cells: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec { nx: 1600, nt: 200, ..Default::default() },
            solver: SolverSpec::default(),
            c_ex: crate::american::DEFAULT_C_EX,
            short_horizon: 0.1,
            min_cells: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub model: ModelConfig,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

fn item(name: &str, passed: bool, detail: String) -> CheckItem {
    CheckItem { name: name.to_string(), passed, detail }
}

/// Worst violation of "nonincreasing" and "convex in S" over a level.
fn shape_violations(spots: &[f64], v: &[f64]) -> (f64, f64) {
    let mut incr: f64 = 0.0;
    let mut conv: f64 = 0.0;
    for j in 1..v.len() {
        incr = incr.max(v[j] - v[j - 1]);
        if j + 1 < v.len() {
            let d1 = (v[j] - v[j - 1]) / (spots[j] - spots[j - 1]);
            let d2 = (v[j + 1] - v[j]) / (spots[j + 1] - spots[j]);
            conv = conv.max(d1 - d2);
        }
    }
    (incr, conv)
}

/// Shape properties are checked on the implicit-Euler solve, whose M-matrix
/// steps preserve them exactly; the comparison with the series price uses a
/// Crank–Nicolson solve on the same grid, restricted to levels where the
/// payoff kink spans at least `min_cells` cells.
pub fn run_invariants(m: &ModelParams, cfg: &CheckConfig) -> Result<CheckReport> {
    let k = m.strike();
    let mut items = Vec::new();
    let main_cfg = AmericanConfig {
        grid: GridSpec { scheme: TimeScheme::ImplicitEuler, ..cfg.grid.clone() },
        solver: SolverSpec { store_all: true, ..cfg.solver.clone() },
        thetas: Vec::new(),
    };
    let s = solve_am(m, &main_cfg)?;
    let spots: Vec<f64> = s.logspots.iter().map(|x| x.exp()).collect();

    let terminal_ok = s.values[0].iter().zip(&spots).all(|(v, x)| *v == (k - x).max(0.0));
    items.push(item("terminal_payoff", terminal_ok, "P(T, .) equals the payoff exactly".into()));

    let (mut incr, mut conv) = (0.0f64, 0.0f64);
    for v in &s.values {
        let (a, b) = shape_violations(&spots, v);
        incr = incr.max(a);
        conv = conv.max(b);
    }
    items.push(item(
        "american_shape",
        incr <= 1e-10 * k && conv <= 1e-6,
        format!("max increase {incr:e}, max slope drop {conv:e}"),
    ));

    let mut theta_mono: f64 = 0.0;
    for w in s.values.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            theta_mono = theta_mono.max(a - b);
        }
    }
    items.push(item(
        "american_monotone_in_theta",
        theta_mono <= 1e-10 * k,
        format!("max decrease with time to maturity {theta_mono:e}"),
    ));

    items.push(item(
        "complementarity_residual",
        s.diagnostics.max_residual <= 1e-9 * k,
        format!("max residual {:e}", s.diagnostics.max_residual),
    ));

    let cn_cfg = AmericanConfig {
        grid: GridSpec { scheme: TimeScheme::CrankNicolson, ..cfg.grid.clone() },
        ..main_cfg.clone()
    };
    let cn = solve_am(m, &cn_cfg)?;
    items.extend(european_items(m, &cn, cfg.min_cells)?);

    let bc = extract_boundary(&s, cfg.c_ex)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for p in bc.points.iter().step_by((bc.points.len() / 25).max(1)) {
        let be = solve_be_theta(m, p.theta)?;
        worst = worst.max(p.raw - be).max(be - k);
        count += 1;
    }
    items.push(item(
        "boundary_ordering",
        worst <= 0.0,
        format!("b <= b_e <= K at {count} levels, worst excess {worst:e}"),
    ));

    items.push(smooth_fit_item(m, cfg)?);
    items.push(obstacle_agreement_item(m, cfg)?);
    Ok(CheckReport { model: ModelConfig::from(m), items })
}

fn european_items(m: &ModelParams, s: &PriceSurface, min_cells: f64) -> Result<Vec<CheckItem>> {
    let k = m.strike();
    let (r, d) = (m.r(), m.delta());
    let xs: Vec<f64> = (0..81).map(|i| k * (0.5 + i as f64 / 80.0)).collect();
    let stride = (s.thetas.len() / 8).max(1);
    let (mut shape, mut bounds, mut prem, mut delta_bad) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for l in (1..s.thetas.len()).step_by(stride) {
        let theta = s.thetas[l];
        let slice = EuroSlice::new(m, theta, &SeriesConfig::default())?;
        let q: Vec<_> = xs.iter().map(|&x| slice.put(x)).collect();
        let pe: Vec<f64> = q.iter().map(|q| q.price).collect();
        let (a, b) = shape_violations(&xs, &pe);
        shape = shape.max(a / k).max(b * (xs[1] - xs[0]) / k);
        for (&x, qq) in xs.iter().zip(&q) {
            let parity = k * (-r * theta).exp() - x * (-d * theta).exp();
            bounds = bounds
                .max(parity - qq.price)
                .max(qq.price - k * (-r * theta).exp())
                .max(-qq.price);
            delta_bad = delta_bad.max(qq.delta - 0.0).max(-1.0 - qq.delta);
        }
        if m.sigma() * theta.sqrt() < min_cells * s.grid.dx {
            continue;
        }
        for (j, &x) in s.logspots.iter().enumerate() {
            let spot = x.exp();
            if (0.5 * k..=1.5 * k).contains(&spot) {
                prem = prem.max(slice.put(spot).price - s.values[l][j]);
            }
        }
    }
    // P carries the O(dx^2) discretization error, P_e does not
    let prem_tol = 1e-4 * k;
    Ok(vec![
        item("european_shape", shape <= 1e-8, format!("worst relative violation {shape:e}")),
        item(
            "european_bounds",
            bounds <= 1e-10 * k && delta_bad <= 1e-12,
            format!("parity/upper/positivity excess {bounds:e}, delta outside [-1, 0] by {delta_bad:e}"),
        ),
        item("american_above_european", prem <= prem_tol, format!("max P_e - P {prem:e} (tol {prem_tol:e})")),
    ])
}

fn short_grid(cfg: &CheckConfig, nx: usize) -> GridSpec {
    GridSpec { nx, horizon: Some(cfg.short_horizon), ..cfg.grid.clone() }
}

fn smooth_fit_item(m: &ModelParams, cfg: &CheckConfig) -> Result<CheckItem> {
    let thetas: Vec<f64> = (0..8).map(|i| cfg.short_horizon / 2f64.powi(i)).collect();
    let mut means = Vec::new();
    for nx in [cfg.grid.nx, 2 * cfg.grid.nx] {
        let c = AmericanConfig {
            grid: short_grid(cfg, nx),
            solver: SolverSpec { store_all: false, ..cfg.solver.clone() },
            thetas: thetas.clone(),
        };
        let s = solve_am(m, &c)?;
        let bc = extract_boundary(&s, cfg.c_ex)?;
        let errs: Vec<f64> = smooth_fit_check(&s, &bc).iter().map(|p| p.slope_error).collect();
        means.push(errs.iter().sum::<f64>() / errs.len() as f64);
    }
    let ratio = means[1] / means[0];
    Ok(item(
        "smooth_fit_refinement",
        ratio <= 0.75,
        format!("mean slope error {:e} -> {:e} when nx doubles (ratio {ratio:.3})", means[0], means[1]),
    ))
}

fn obstacle_agreement_item(m: &ModelParams, cfg: &CheckConfig) -> Result<CheckItem> {
    let mut out = Vec::new();
    for name in ["psor", "penalty"] {
        let mut solver = SolverSpec { store_all: false, obstacle: name.into(), ..cfg.solver.clone() };
        solver.obstacle_options.tol = 1e-13;
        let c = AmericanConfig { grid: short_grid(cfg, 400), solver, thetas: Vec::new() };
        out.push(solve_am(m, &c)?);
    }
    let diff = out[0]
        .values
        .last()
        .zip(out[1].values.last())
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY);
    let k = m.strike();
    Ok(item("psor_vs_penalty", diff <= 1e-6 * k, format!("max difference {diff:e} (tol {:e})", 1e-6 * k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::LevyMeasure;

    #[test]
    fn suite_passes_on_jump_model() {
        let m = ModelParams::new(0.05, 0.02, 0.2, 100.0, 0.5, LevyMeasure::single(1.25f64.ln(), 0.2).unwrap()).unwrap();
        let r = run_invariants(&m, &CheckConfig::default()).unwrap();
        for i in &r.items {
            assert!(i.passed, "{i:?}");
        }
    }

    #[test]
    fn shape_violation_detects_concavity() {
        let xs = [1.0, 2.0, 3.0];
        assert!(shape_violations(&xs, &[3.0, 2.0, 0.0]).1 > 0.0);
        assert_eq!(shape_violations(&xs, &[3.0, 1.0, 0.0]), (0.0, 0.0));
    }
}
