use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{BoundaryCurve, PriceSurface};
use crate::error::{Error, Result};
use crate::european::{price_eu_theta, SeriesConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PremiumCheck {
    /// P − P_e from the PDE surface and the series.
    pub lhs: f64,
    /// Monte Carlo estimate of the premium integral.
    pub rhs: f64,
    pub mc_se: f64,
}

const CHUNKS: u64 = 64;

/// Compare the early exercise premium at `(t, x)` with a simulation of
///
/// ```text
/// E ∫₀^θ e^{−rs} [rK − δS_s − Σ_{y>0} w (P(t+s, S_s e^y) − (K − S_s e^y))] 1{S_s < b(t+s)} ds
/// ```
///
/// using the solved surface for P and the extracted boundary. Simulation
/// dates are the stored surface levels between `t` and `T`, so `T − t` must be
/// one of them. Results depend only on `seed`, not on the thread count.
pub fn premium_mc_check(
    s: &PriceSurface,
    bc: &BoundaryCurve,
    t: f64,
    x: f64,
    paths: usize,
    seed: u64,
) -> Result<PremiumCheck> {
    let m = &s.model;
    let theta0 = m.maturity() - t;
    let top = s.level_of(theta0).ok_or_else(|| {
        Error::InvalidArgument(format!("theta = {theta0} is not a stored level of the surface"))
    })?;
    if paths < 2 || !(x > 0.0) {
        return Err(Error::InvalidArgument("need at least 2 paths and a positive spot".into()));
    }
    let pe = price_eu_theta(m, theta0, x, &SeriesConfig::default())?.price;
    let lhs = s.price_at_level(top, x) - pe;

    // simulation dates s_k = θ₀ − θ_{top−k}
    let dates: Vec<f64> = (0..=top).map(|k| theta0 - s.thetas[top - k]).collect();
    let bounds: Vec<f64> = (0..=top)
        .map(|k| {
            let l = top - k;
            if l == 0 {
                bc.xi
            } else {
                bc.at(s.thetas[l]).map_or_else(|| bc.interpolate(s.thetas[l]), |p| p.refined)
            }
        })
        .collect();
    let (r, delta, sigma, mu, k) = (m.r(), m.delta(), m.sigma(), m.mu(), m.strike());
    let atoms = m.nu().atoms();
    let up: Vec<(f64, f64)> = atoms.iter().filter(|a| a.y > 0.0).map(|a| (a.y.exp(), a.w)).collect();
    let jumps: Vec<Vec<Option<Poisson<f64>>>> = dates
        .windows(2)
        .map(|d| atoms.iter().map(|a| Poisson::new(a.w * (d[1] - d[0])).ok()).collect())
        .collect();

    let integrand = |step: usize, spot: f64| -> f64 {
        if spot >= bounds[step] {
            return 0.0;
        }
        let level = top - step;
        let mut g = r * k - delta * spot;
        for &(ey, w) in &up {
            let sj = spot * ey;
            g -= w * (s.price_at_level(level, sj) - (k - sj));
        }
        (-r * dates[step]).exp() * g
    };

    let per_chunk = paths.div_ceil(CHUNKS as usize);
    let sums: Vec<(f64, f64, usize)> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let start = c as usize * per_chunk;
            let count = per_chunk.min(paths.saturating_sub(start));
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let mut lx = x.ln();
                let mut prev = integrand(0, x);
                let mut acc = 0.0;
                for (step, d) in dates.windows(2).enumerate() {
                    let dt = d[1] - d[0];
                    let z: f64 = rng.sample(StandardNormal);
                    lx += mu * dt + sigma * dt.sqrt() * z;
                    for (a, dist) in atoms.iter().zip(&jumps[step]) {
                        if let Some(p) = dist {
                            lx += a.y * p.sample(&mut rng);
                        }
                    }
                    let cur = integrand(step + 1, lx.exp());
                    acc += 0.5 * dt * (prev + cur);
                    prev = cur;
                }
                s1 += acc;
                s2 += acc * acc;
            }
            (s1, s2, count)
        })
        .collect();
    let (s1, s2, n) = sums
        .iter()
        .fold((0.0, 0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let n_f = n as f64;
    let mean = s1 / n_f;
    let var = ((s2 - n_f * mean * mean) / (n_f - 1.0)).max(0.0);
    Ok(PremiumCheck { lhs, rhs: mean, mc_se: (var / n_f).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::american::{extract_boundary, solve_am, AmericanConfig, GridSpec, DEFAULT_C_EX};
    use crate::levy_model::{LevyMeasure, ModelParams};

    #[test]
    fn premium_vanishes_far_out_of_the_money() {
        let m = ModelParams::new(0.05, 0.02, 0.2, 100.0, 0.5, LevyMeasure::single(1.25f64.ln(), 0.2).unwrap())
            .unwrap();
        let cfg = AmericanConfig {
            grid: GridSpec { nx: 400, nt: 100, horizon: Some(0.1), ..Default::default() },
            thetas: vec![0.1],
            ..Default::default()
        };
        let s = solve_am(&m, &cfg).unwrap();
        let bc = extract_boundary(&s, DEFAULT_C_EX).unwrap();
        let far = 100.0 * 1.25 * 2.0;
        let pc = premium_mc_check(&s, &bc, 0.4, far, 2000, 7).unwrap();
        assert!(pc.lhs.abs() < 0.1 && pc.rhs.abs() < 0.1, "{pc:?}");
        let again = premium_mc_check(&s, &bc, 0.4, far, 2000, 7).unwrap();
        assert_eq!(pc, again);
    }
}
