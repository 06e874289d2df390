//! Space and time grids for the American solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    ImplicitEuler,
    CrankNicolson,
}

impl std::str::FromStr for TimeScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit-euler" | "ie" => Ok(Self::ImplicitEuler),
            "crank-nicolson" | "cn" => Ok(Self::CrankNicolson),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scheme '{s}' (expected implicit-euler or crank-nicolson)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpInterpolation {
    Cubic,
    Linear,
}

/// Discretization of the (time-to-maturity, log-spot) domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Target number of space nodes; the realized count differs slightly
    /// because ln ξ and ln K are placed on nodes.
    pub nx: usize,
    /// Number of uniform steps over the horizon before grading.
    pub nt: usize,
    /// Log-space margin below ln ξ. `None` picks the minimum admissible value.
    pub pad_lo: Option<f64>,
    /// Log-space margin above ln K.
    pub pad_hi: Option<f64>,
    pub scheme: TimeScheme,
    /// Geometric ratio between consecutive steps in the graded zone near
    /// maturity; 1 disables grading.
    pub time_grading: f64,
    /// Grading guarantees at least 20 time levels below this θ.
    pub theta_fine: f64,
    /// Solve only up to this time to maturity (defaults to T).
    pub horizon: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 800,
            nt: 200,
            pad_lo: None,
            pad_hi: None,
            scheme: TimeScheme::ImplicitEuler,
            time_grading: 0.9,
            theta_fine: 1e-3,
            horizon: None,
        }
    }
}

impl GridSpec {
    pub fn horizon_for(&self, m: &ModelParams) -> f64 {
        self.horizon.map_or(m.maturity(), |h| h.min(m.maturity()))
    }

    /// Smallest admissible margins: the largest jump in that direction plus
    /// six diffusive standard deviations over the horizon.
    pub fn required_pads(&self, m: &ModelParams) -> (f64, f64) {
        let spread = 6.0 * m.sigma() * self.horizon_for(m).sqrt();
        (m.nu().max_down_jump() + spread, m.nu().max_up_jump() + spread)
    }

    pub fn validate(&self, m: &ModelParams) -> Result<()> {
        if self.nx < 200 || self.nt < 100 {
            return Err(Error::InvalidArgument(format!(
                "grid too coarse: nx = {} (min 200), nt = {} (min 100)",
                self.nx, self.nt
            )));
        }
        if !(self.time_grading > 0.0 && self.time_grading <= 1.0) {
            return Err(Error::InvalidArgument("time_grading must lie in (0, 1]".into()));
        }
        if !(self.theta_fine > 0.0) {
            return Err(Error::InvalidArgument("theta_fine must be positive".into()));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("horizon must be positive".into()));
            }
        }
        let (lo, hi) = self.required_pads(m);
        if self.pad_lo.is_some_and(|p| p < lo) || self.pad_hi.is_some_and(|p| p < hi) {
            return Err(Error::InvalidArgument(format!(
                "pads must cover jumps plus 6 standard deviations: need pad_lo >= {lo:.4}, pad_hi >= {hi:.4}"
            )));
        }
        Ok(())
    }
}

/// Uniform log-spot grid with ln ξ on a node (and ln K too when ξ < K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
    /// Index of ln ξ.
    pub xi_index: usize,
}

impl SpaceGrid {
    pub fn build(spec: &GridSpec, m: &ModelParams, xi: f64) -> Self {
        let (req_lo, req_hi) = spec.required_pads(m);
        let pad_lo = spec.pad_lo.unwrap_or(req_lo);
        let pad_hi = spec.pad_hi.unwrap_or(req_hi);
        let a = xi.ln();
        let b = m.strike().ln();
        let gap = b - a;
        let dx0 = (pad_lo + gap + pad_hi) / (spec.nx - 1) as f64;
        let dx = if gap > 1e-12 {
            gap / (gap / dx0).round().max(1.0)
        } else {
            dx0
        };
        let below = (pad_lo / dx).ceil() as usize;
        let above = ((gap + pad_hi) / dx - 1e-9).ceil() as usize;
        Self { x0: a - below as f64 * dx, dx, n: below + above + 1, xi_index: below }
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }
}

/// Levels θ₀ = 0 < θ₁ < … covering [0, horizon]. Steps start small near
/// maturity and grow geometrically to the uniform size; `required` levels are
/// inserted exactly.
pub fn time_levels(spec: &GridSpec, horizon: f64, required: &[f64]) -> Vec<f64> {
    let base = horizon / spec.nt as f64;
    let mut levels = vec![0.0];
    let mut theta = 0.0;
    if spec.time_grading < 1.0 {
        let q = 1.0 / spec.time_grading;
        let mut step = spec.theta_fine * (q - 1.0) / (q.powi(20) - 1.0);
        while step < base && theta + step < horizon {
            theta += step;
            levels.push(theta);
            step *= q;
        }
    }
    while theta + base < horizon * (1.0 - 1e-12) {
        theta += base;
        levels.push(theta);
    }
    levels.push(horizon);
    for &r in required {
        if !(r > 0.0 && r <= horizon) {
            continue;
        }
        let pos = levels.partition_point(|&l| l < r);
        let near = |l: f64| (l - r).abs() <= 1e-9 * r;
        if pos < levels.len() && near(levels[pos]) {
            levels[pos] = r;
        } else if pos > 0 && near(levels[pos - 1]) {
            levels[pos - 1] = r;
        } else {
            levels.insert(pos, r);
        }
    }
    levels
}

/// Precomputed interpolation stencil for the value at `x + y` relative to a
/// node at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftStencil {
    pub intensity: f64,
    /// Node offsets and weights.
    pub taps: Vec<(isize, f64)>,
}

impl ShiftStencil {
    pub fn new(y: f64, w: f64, dx: f64, interp: JumpInterpolation) -> Self {
        let s = y / dx;
        let k = s.floor();
        let t = s - k;
        let k = k as isize;
        let taps = if t < 1e-9 {
            vec![(k, 1.0)]
        } else if t > 1.0 - 1e-9 {
            vec![(k + 1, 1.0)]
        } else {
            match interp {
                JumpInterpolation::Linear => vec![(k, 1.0 - t), (k + 1, t)],
                JumpInterpolation::Cubic => vec![
                    (k - 1, -t * (t - 1.0) * (t - 2.0) / 6.0),
                    (k, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0),
                    (k + 1, -(t + 1.0) * t * (t - 2.0) / 2.0),
                    (k + 2, (t + 1.0) * t * (t - 1.0) / 6.0),
                ],
            }
        };
        Self { intensity: w, taps }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::LevyMeasure;

    fn model_b() -> ModelParams {
        ModelParams::new(0.05, 0.02, 0.2, 100.0, 0.5, LevyMeasure::single(1.25f64.ln(), 0.2).unwrap()).unwrap()
    }

    #[test]
    fn xi_and_strike_on_nodes() {
        let m = model_b();
        let xi = 25.0 / 0.27;
        let g = SpaceGrid::build(&GridSpec::default(), &m, xi);
        assert!((g.x(g.xi_index) - xi.ln()).abs() < 1e-14);
        let k_idx = ((100f64.ln() - g.x0) / g.dx).round() as usize;
        assert!((g.x(k_idx) - 100f64.ln()).abs() < 1e-12);
        let (lo, hi) = GridSpec::default().required_pads(&m);
        assert!(xi.ln() - g.x0 >= lo - 1e-12);
        assert!(g.x_max() - 100f64.ln() >= hi - 1e-9);
    }

    #[test]
    fn graded_levels_resolve_fine_theta() {
        let spec = GridSpec::default();
        let lv = time_levels(&spec, 0.5, &[0.04, 0.01, 0.0025]);
        assert_eq!(lv[0], 0.0);
        assert_eq!(*lv.last().unwrap(), 0.5);
        assert!(lv.windows(2).all(|w| w[1] > w[0]));
        assert!(lv.iter().filter(|&&t| t > 0.0 && t <= 1e-3 * (1.0 + 1e-9)).count() >= 20);
        for r in [0.04, 0.01, 0.0025] {
            assert!(lv.contains(&r));
        }
    }

    #[test]
    fn stencils_reproduce_cubics() {
        let dx = 0.01;
        for interp in [JumpInterpolation::Cubic, JumpInterpolation::Linear] {
            let st = ShiftStencil::new(0.0237, 1.0, dx, interp);
            let f = |x: f64| 1.0 + 2.0 * x - x * x + 3.0 * x * x * x;
            let exact = f(0.0237);
            let approx: f64 = st.taps.iter().map(|&(k, w)| w * f(k as f64 * dx)).sum();
            let tol = if interp == JumpInterpolation::Cubic { 1e-13 } else { 1e-4 };
            assert!((approx - exact).abs() < tol);
        }
        let exact = ShiftStencil::new(0.03, 1.0, 0.01, JumpInterpolation::Cubic);
        assert_eq!(exact.taps, vec![(3, 1.0)]);
    }

    #[test]
    fn pads_below_requirement_rejected() {
        let m = model_b();
        let spec = GridSpec { pad_hi: Some(0.1), ..Default::default() };
        assert!(spec.validate(&m).is_err());
        let spec = GridSpec { nx: 100, ..Default::default() };
        assert!(spec.validate(&m).is_err());
    }
}
