use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridSpec, SolverSpec, SpaceGrid, TimeScheme};
use crate::error::{Error, Result};
use crate::levy_model::{ModelConfig, ModelParams};

pub const SURFACE_CSV_HEADER: &str = "theta,logspot,price,active";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub obstacle: String,
    pub scheme: TimeScheme,
    pub steps: usize,
    pub fixed_point_iterations: usize,
    pub max_fixed_point: usize,
    pub lcp_iterations: usize,
    /// Largest final fixed-point update over all steps.
    pub max_step_change: f64,
    /// Largest complementarity residual over all steps.
    pub max_residual: f64,
}

impl SolveDiagnostics {
    pub(crate) fn new(obstacle: &str, scheme: TimeScheme) -> Self {
        Self {
            obstacle: obstacle.to_string(),
            scheme,
            steps: 0,
            fixed_point_iterations: 0,
            max_fixed_point: 0,
            lcp_iterations: 0,
            max_step_change: 0.0,
            max_residual: 0.0,
        }
    }
}

/// Stored time levels of an American solve, indexed by time to maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSurface {
    pub model: ModelParams,
    pub grid_spec: GridSpec,
    pub solver: SolverSpec,
    pub grid: SpaceGrid,
    /// Maturity limit of the boundary the grid was aligned to.
    pub xi: f64,
    /// Ascending, starting at 0.
    pub thetas: Vec<f64>,
    pub logspots: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub active: Vec<Vec<bool>>,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    model: ModelConfig,
    grid: GridSpec,
    solver: SolverSpec,
    space_grid: SpaceGrid,
    xi: f64,
    levels: usize,
    diagnostics: SolveDiagnostics,
}

impl PriceSurface {
    pub(crate) fn new(m: &ModelParams, grid_spec: GridSpec, solver: SolverSpec, grid: SpaceGrid, xi: f64) -> Self {
        let diagnostics = SolveDiagnostics::new(&solver.obstacle, grid_spec.scheme);
        Self {
            model: m.clone(),
            logspots: grid.nodes(),
            grid_spec,
            solver,
            grid,
            xi,
            thetas: Vec::new(),
            values: Vec::new(),
            active: Vec::new(),
            diagnostics,
        }
    }

    pub(crate) fn push_level(&mut self, theta: f64, values: Vec<f64>, active: Vec<bool>) {
        self.thetas.push(theta);
        self.values.push(values);
        self.active.push(active);
    }

    /// Calendar times t = T − θ, ascending.
    pub fn times(&self) -> Vec<f64> {
        self.thetas.iter().rev().map(|th| self.model.maturity() - th).collect()
    }

    pub fn payoff(&self, spot: f64) -> f64 {
        (self.model.strike() - spot).max(0.0)
    }

    pub fn max_theta(&self) -> f64 {
        *self.thetas.last().unwrap_or(&0.0)
    }

    /// Index of a stored level equal to `theta` up to rounding.
    pub fn level_of(&self, theta: f64) -> Option<usize> {
        self.thetas
            .iter()
            .position(|&t| (t - theta).abs() <= 1e-12 * theta.abs().max(1e-300))
    }

    /// Price at a stored level; cubic interpolation of the time value P − ψ
    /// in log-spot, payoff below the grid and 0 above it.
    pub fn price_at_level(&self, level: usize, spot: f64) -> f64 {
        let psi = self.payoff(spot);
        let g = &self.grid;
        let x = spot.ln();
        if x <= g.x0 {
            return psi;
        }
        if x >= g.x_max() {
            return 0.0;
        }
        let v = &self.values[level];
        let tv = |i: isize| -> f64 {
            let i = i.clamp(0, g.n as isize - 1) as usize;
            v[i] - (self.model.strike() - self.logspots[i].exp()).max(0.0)
        };
        let s = (x - g.x0) / g.dx;
        let k = s.floor();
        let t = s - k;
        let k = k as isize;
        let interp = if k < 1 || k + 2 >= g.n as isize {
            (1.0 - t) * tv(k) + t * tv(k + 1)
        } else {
            -t * (t - 1.0) * (t - 2.0) / 6.0 * tv(k - 1)
                + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * tv(k)
                - (t + 1.0) * t * (t - 2.0) / 2.0 * tv(k + 1)
                + (t + 1.0) * t * (t - 1.0) / 6.0 * tv(k + 2)
        };
        psi + interp.max(0.0)
    }

    /// Price at time to maturity `theta`, linear in θ between stored levels.
    pub fn price(&self, theta: f64, spot: f64) -> Result<f64> {
        if !(theta >= 0.0 && theta <= self.max_theta() * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "theta = {theta} outside the solved range [0, {}]",
                self.max_theta()
            )));
        }
        let hi = self.thetas.partition_point(|&t| t < theta).min(self.thetas.len() - 1);
        if hi == 0 || (self.thetas[hi] - theta).abs() <= 1e-14 {
            return Ok(self.price_at_level(hi, spot));
        }
        let (t0, t1) = (self.thetas[hi - 1], self.thetas[hi]);
        let w = (theta - t0) / (t1 - t0);
        Ok((1.0 - w) * self.price_at_level(hi - 1, spot) + w * self.price_at_level(hi, spot))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.thetas.len() * self.logspots.len() * 48);
        out.push_str(SURFACE_CSV_HEADER);
        out.push('\n');
        for (l, &th) in self.thetas.iter().enumerate() {
            for (i, &x) in self.logspots.iter().enumerate() {
                let _ = writeln!(out, "{th},{x},{},{}", self.values[l][i], u8::from(self.active[l][i]));
            }
        }
        out
    }

    pub fn sidecar_json(&self) -> String {
        let sc = Sidecar {
            model: ModelConfig::from(&self.model),
            grid: self.grid_spec.clone(),
            solver: self.solver.clone(),
            space_grid: self.grid.clone(),
            xi: self.xi,
            levels: self.thetas.len(),
            diagnostics: self.diagnostics.clone(),
        };
        serde_json::to_string_pretty(&sc).expect("sidecar serializes")
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        fs::write(dir.join(format!("{stem}.json")), self.sidecar_json())?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let side_path = dir.join(format!("{stem}.json"));
        let side_text = fs::read_to_string(&side_path)?;
        let de = &mut serde_json::Deserializer::from_str(&side_text);
        let sc: Sidecar = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: format!("{}: {}", side_path.display(), e.path()),
            message: e.inner().to_string(),
        })?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let text = fs::read_to_string(&csv_path)?;
        let bad = |line: usize, msg: &str| Error::Config {
            path: format!("{}:{line}", csv_path.display()),
            message: msg.to_string(),
        };
        let mut lines = text.lines();
        if lines.next() != Some(SURFACE_CSV_HEADER) {
            return Err(bad(1, "unexpected header"));
        }
        let m = sc.model.build()?;
        let mut s = PriceSurface::new(&m, sc.grid, sc.solver, sc.space_grid, sc.xi);
        s.diagnostics = sc.diagnostics;
        let n = s.grid.n;
        let (mut vals, mut act) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let mut current = f64::NAN;
        for (no, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(no + 2, "expected 4 fields"));
            }
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(no + 2, "not a number"));
            let th = num(f[0])?;
            if vals.is_empty() {
                current = th;
            } else if th != current {
                return Err(bad(no + 2, "level has wrong node count"));
            }
            vals.push(num(f[2])?);
            act.push(f[3] == "1");
            if vals.len() == n {
                s.push_level(current, std::mem::take(&mut vals), std::mem::take(&mut act));
            }
        }
        if !vals.is_empty() || s.thetas.len() != sc.levels {
            return Err(bad(0, "truncated surface"));
        }
        Ok(s)
    }
}
