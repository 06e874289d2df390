use serde::Serialize;

use super::PriceSurface;
use crate::error::{Error, Result};

/// Critical price at one time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub theta: f64,
    /// Last node of the contiguous active set starting at the low edge.
    pub raw: f64,
    /// Zero of the linear interpolant of (P − ψ) − ε across the boundary cell.
    pub refined: f64,
    pub raw_index: usize,
    /// Contact threshold ε used for the refinement.
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCurve {
    pub xi: f64,
    pub c_ex: f64,
    /// Ascending in θ; θ = 0 is not included.
    pub points: Vec<BoundaryPoint>,
}

impl BoundaryCurve {
    pub fn thetas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta).collect()
    }

    pub fn b(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.refined).collect()
    }

    pub fn at(&self, theta: f64) -> Option<&BoundaryPoint> {
        self.points
            .iter()
            .find(|p| (p.theta - theta).abs() <= 1e-12 * theta.abs().max(1e-300))
    }

    /// Refined boundary at θ, linear between levels; ξ at θ = 0.
    pub fn interpolate(&self, theta: f64) -> f64 {
        let pts = &self.points;
        if pts.is_empty() || theta <= 0.0 {
            return self.xi;
        }
        let hi = pts.partition_point(|p| p.theta < theta);
        if hi >= pts.len() {
            return pts[pts.len() - 1].refined;
        }
        let (t0, b0) = if hi == 0 { (0.0, self.xi) } else { (pts[hi - 1].theta, pts[hi - 1].refined) };
        let (t1, b1) = (pts[hi].theta, pts[hi].refined);
        b0 + (b1 - b0) * (theta - t0) / (t1 - t0)
    }
}

pub const DEFAULT_C_EX: f64 = 0.01;

/// Boundary at every stored level with θ > 0.
pub fn extract_boundary(s: &PriceSurface, c_ex: f64) -> Result<BoundaryCurve> {
    let k = s.model.strike();
    let dx = s.grid.dx;
    let eps = c_ex * dx * dx * k;
    let psi: Vec<f64> = s.logspots.iter().map(|x| (k - x.exp()).max(0.0)).collect();
    let mut points = Vec::with_capacity(s.thetas.len());
    for (l, &theta) in s.thetas.iter().enumerate().skip(1) {
        let act = &s.active[l];
        if !act[0] {
            return Err(Error::DegenerateBoundary { theta });
        }
        let istar = act.iter().position(|a| !a).map_or(act.len() - 1, |j| j - 1);
        // b lies in [x_{i*}, x_{i*+1}): the root is sought in that cell only
        let mut refined = s.logspots[istar];
        if istar + 1 < act.len() {
            let g0 = (s.values[l][istar] - psi[istar] - eps).min(0.0);
            let g1 = s.values[l][istar + 1] - psi[istar + 1] - eps;
            refined += if g1 > 0.0 { dx * (-g0) / (g1 - g0) } else { dx };
        }
        points.push(BoundaryPoint {
            theta,
            raw: s.logspots[istar].exp(),
            refined: refined.exp(),
            raw_index: istar,
            eps,
        });
    }
    Ok(BoundaryCurve { xi: s.xi, c_ex, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothFitPoint {
    pub theta: f64,
    pub slope: f64,
    pub slope_error: f64,
}

/// Forward difference of P between spot nodes `i` and `j` at a stored level.
pub fn spot_slope(s: &PriceSurface, level: usize, i: usize, j: usize) -> f64 {
    let v = &s.values[level];
    (v[j] - v[i]) / (s.logspots[j].exp() - s.logspots[i].exp())
}

/// One-sided slope of P across the boundary cell, from the last exercise
/// node into the continuation region.
pub fn smooth_fit_check(s: &PriceSurface, bc: &BoundaryCurve) -> Vec<SmoothFitPoint> {
    bc.points
        .iter()
        .filter_map(|p| {
            let l = s.level_of(p.theta)?;
            let i = p.raw_index;
            (i + 1 < s.logspots.len()).then(|| {
                let slope = spot_slope(s, l, i, i + 1);
                SmoothFitPoint { theta: p.theta, slope, slope_error: (slope + 1.0).abs() }
            })
        })
        .collect()
}
