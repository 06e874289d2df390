//! European put under the atomic jump diffusion, priced by conditioning on
//! the per-atom jump counts (Merton-style series), plus the European critical
//! price `b_e` and the normalized log-moneyness `α(θ)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy_model::{classify_regime, ModelParams, Regime};
use crate::roots::newton_bracketed;
use crate::special::{norm_cdf, NeumaierSum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    /// Truncation tolerance relative to the strike.
    pub rel_tol: f64,
    /// Upper bound on the number of jump-count scenarios.
    pub max_terms: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-13, max_terms: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EuroQuote {
    pub price: f64,
    pub delta: f64,
}

/// One jump-count configuration: its probability and total log-jump.
#[derive(Debug, Clone, Copy)]
struct Scenario {
    weight: f64,
    shift: f64,
}

/// Everything about the European problem at a fixed time-to-maturity that
/// does not depend on spot.
#[derive(Debug, Clone)]
pub struct EuroSlice {
    theta: f64,
    strike: f64,
    r: f64,
    delta: f64,
    sd: f64,
    drift: f64,
    scenarios: Vec<Scenario>,
}

/// Poisson pmf for counts 0..=n_max and the tail mass beyond each count.
fn poisson_table(mean: f64) -> (Vec<f64>, Vec<f64>) {
    let n_max = (mean + 40.0 + 12.0 * mean.sqrt()).ceil() as usize;
    let mut pmf = Vec::with_capacity(n_max + 1);
    let mut p = (-mean).exp();
    for n in 0..=n_max {
        if n > 0 {
            p *= mean / n as f64;
        }
        pmf.push(p);
    }
    // tail[n] = P(N > n)
    let mut tail = vec![0.0; n_max + 1];
    let mut acc = 0.0;
    for n in (0..n_max).rev() {
        acc += pmf[n + 1];
        tail[n] = acc;
    }
    (pmf, tail)
}

impl EuroSlice {
    pub fn new(m: &ModelParams, theta: f64, cfg: &SeriesConfig) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidArgument(format!("time to maturity must be positive, got {theta}")));
        }
        let atoms = m.nu().atoms();
        let per_atom_tol = cfg.rel_tol / atoms.len().max(1) as f64;
        let mut scenarios = vec![Scenario { weight: 1.0, shift: 0.0 }];
        let mut total_tail = 0.0;
        for a in atoms {
            let (pmf, tail) = poisson_table(a.w * theta);
            let cut = tail.iter().position(|&t| t < per_atom_tol).unwrap_or(pmf.len() - 1);
            total_tail += tail[cut];
            let next_len = scenarios.len() * (cut + 1);
            if next_len > cfg.max_terms {
                return Err(Error::TruncationFailure { terms: next_len, tail: total_tail });
            }
            let mut next = Vec::with_capacity(next_len);
            for s in &scenarios {
                for (n, &p) in pmf.iter().enumerate().take(cut + 1) {
                    next.push(Scenario { weight: s.weight * p, shift: s.shift + n as f64 * a.y });
                }
            }
            scenarios = next;
        }
        if total_tail > cfg.rel_tol {
            return Err(Error::TruncationFailure { terms: scenarios.len(), tail: total_tail });
        }
        Ok(Self {
            theta,
            strike: m.strike(),
            r: m.r(),
            delta: m.delta(),
            sd: m.sigma() * theta.sqrt(),
            drift: m.mu() * theta,
            scenarios,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n_terms(&self) -> usize {
        self.scenarios.len()
    }

    /// Put price and ∂P/∂x.
    pub fn put(&self, x: f64) -> EuroQuote {
        let disc = (-self.r * self.theta).exp();
        let k = self.strike;
        let lx = x.ln();
        let mut price = NeumaierSum::new();
        let mut delta = NeumaierSum::new();
        for s in &self.scenarios {
            // forward conditional on the jump counts
            let ln_fwd = lx + self.drift + s.shift + 0.5 * self.sd * self.sd;
            let fwd = ln_fwd.exp();
            let d1 = (ln_fwd - k.ln()) / self.sd + 0.5 * self.sd;
            let d2 = d1 - self.sd;
            let n1 = norm_cdf(-d1);
            price.add(s.weight * (k * norm_cdf(-d2) - fwd * n1));
            delta.add(-s.weight * (fwd / x) * n1);
        }
        EuroQuote { price: disc * price.value(), delta: disc * delta.value() }
    }

    /// Call price and ∂C/∂x (same series, used for the critical-price equation).
    pub fn call(&self, x: f64) -> EuroQuote {
        let disc = (-self.r * self.theta).exp();
        let k = self.strike;
        let lx = x.ln();
        let mut price = NeumaierSum::new();
        let mut delta = NeumaierSum::new();
        for s in &self.scenarios {
            let ln_fwd = lx + self.drift + s.shift + 0.5 * self.sd * self.sd;
            let fwd = ln_fwd.exp();
            let d1 = (ln_fwd - k.ln()) / self.sd + 0.5 * self.sd;
            let d2 = d1 - self.sd;
            let n1 = norm_cdf(d1);
            price.add(s.weight * (fwd * n1 - k * norm_cdf(d2)));
            delta.add(s.weight * (fwd / x) * n1);
        }
        EuroQuote { price: disc * price.value(), delta: disc * delta.value() }
    }

    /// F(x) = P_e(x) − (K − x) and ∂F/∂x.
    ///
    /// Written through put-call parity as
    /// `K(e^{−rθ} − 1) − x(e^{−δθ} − 1) + C_e(x)` so that no O(K) quantities
    /// cancel when θ is tiny.
    pub fn critical_fn(&self, x: f64) -> (f64, f64) {
        let c = self.call(x);
        let a = self.strike * (-self.r * self.theta).exp_m1();
        let b = -x * (-self.delta * self.theta).exp_m1();
        let mut acc = NeumaierSum::new();
        acc.add(a);
        acc.add(b);
        acc.add(c.price);
        (acc.value(), -(-self.delta * self.theta).exp_m1() + c.delta)
    }

    /// Root of F in (0, K). The bracket starts ten standard deviations below
    /// the maturity limit of the boundary (K when d̄ = 0).
    pub fn critical_price(&self, m: &ModelParams) -> Result<f64> {
        let k = self.strike;
        let lo = m.maturity_limit_price() * (-10.0 * self.sd - m.mu().abs() * self.theta).exp();
        let (f_lo, _) = self.critical_fn(lo);
        let (f_hi, _) = self.critical_fn(k);
        if !(f_lo < 0.0 && f_hi > 0.0) {
            return Err(Error::RootBracketFailure {
                theta: self.theta,
                detail: format!("F({lo}) = {f_lo:e}, F(K) = {f_hi:e}"),
            });
        }
        newton_bracketed(|x| self.critical_fn(x), lo, k, 1e-13 * k, 400).map_err(|e| Error::RootBracketFailure {
            theta: self.theta,
            detail: e.to_string(),
        })
    }
}

/// European put price and delta at calendar time `t`, spot `x`.
pub fn price_eu(m: &ModelParams, t: f64, x: f64) -> Result<EuroQuote> {
    let theta = m.maturity() - t;
    price_eu_theta(m, theta, x, &SeriesConfig::default())
}

pub fn price_eu_theta(m: &ModelParams, theta: f64, x: f64, cfg: &SeriesConfig) -> Result<EuroQuote> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::InvalidArgument(format!("spot must be positive, got {x}")));
    }
    Ok(EuroSlice::new(m, theta, cfg)?.put(x))
}

/// European critical price `b_e(t)`, the root of `P_e(t, x) = K − x`.
pub fn solve_be(m: &ModelParams, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < m.maturity()) {
        return Err(Error::InvalidArgument(format!("t must lie in (0, T), got {t}")));
    }
    solve_be_theta(m, m.maturity() - t)
}

/// [`solve_be`] parametrized by time to maturity θ, which keeps full
/// precision for θ far below machine epsilon relative to T.
pub fn solve_be_theta(m: &ModelParams, theta: f64) -> Result<f64> {
    EuroSlice::new(m, theta, &SeriesConfig::default())?.critical_price(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaPoint {
    pub theta: f64,
    pub b_e: f64,
    /// (ln(K/b_e) − μθ) / (σ√θ)
    pub alpha: f64,
    /// α / √(2 ln(1/θ))
    pub alpha_ratio: f64,
    /// (K − b_e) / (σK√(θ|ln θ|))
    pub rate_ratio: f64,
}

impl AlphaPoint {
    pub fn new(m: &ModelParams, theta: f64, b_e: f64) -> Self {
        let k = m.strike();
        let s = m.sigma();
        let alpha = ((k / b_e).ln() - m.mu() * theta) / (s * theta.sqrt());
        let log_inv = -theta.ln();
        Self {
            theta,
            b_e,
            alpha,
            alpha_ratio: alpha / (2.0 * log_inv).sqrt(),
            rate_ratio: (k - b_e) / (s * k * (theta * log_inv).sqrt()),
        }
    }
}

/// α(θ) for each θ; only meaningful when d̄ = 0.
pub fn alpha_of_theta(m: &ModelParams, thetas: &[f64]) -> Result<Vec<AlphaPoint>> {
    let regime = classify_regime(m)?;
    if regime != Regime::ZeroDbar {
        return Err(Error::RegimeMismatch { expected: Regime::ZeroDbar, found: regime });
    }
    if let Some(bad) = thetas.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {bad}")));
    }
    thetas
        .par_iter()
        .map(|&theta| solve_be_theta(m, theta).map(|b| AlphaPoint::new(m, theta, b)))
        .collect()
}

pub const ALPHA_CSV_HEADER: &str = "theta,b_e,alpha,alpha_ratio,rate_ratio";

pub fn alpha_csv(points: &[AlphaPoint]) -> String {
    let mut out = String::from(ALPHA_CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!("{},{},{},{},{}\n", p.theta, p.b_e, p.alpha, p.alpha_ratio, p.rate_ratio));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::LevyMeasure;
    use approx::assert_relative_eq;

    fn bs(r: f64, delta: f64, sigma: f64) -> ModelParams {
        ModelParams::new(r, delta, sigma, 100.0, 1.0, LevyMeasure::empty()).unwrap()
    }

    fn model_c() -> ModelParams {
        ModelParams::new(0.05, 0.03, 0.3, 100.0, 1.0, LevyMeasure::single(1.2f64.ln(), 0.1).unwrap()).unwrap()
    }

    #[test]
    fn payoff_at_vanishing_maturity() {
        let q = price_eu_theta(&model_c(), 1e-14, 80.0, &SeriesConfig::default()).unwrap();
        assert_relative_eq!(q.price, 20.0, epsilon = 1e-9);
        assert_relative_eq!(q.delta, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn no_jump_put_against_closed_form() {
        // independent textbook formula
        let (r, sigma, k, x, t): (f64, f64, f64, f64, f64) = (0.05, 0.2, 100.0, 100.0, 1.0);
        let d1 = ((x / k).ln() + (r + 0.5 * sigma * sigma) * t) / (sigma * t.sqrt());
        let d2 = d1 - sigma * t.sqrt();
        let expected = k * (-r * t).exp() * norm_cdf(-d2) - x * norm_cdf(-d1);
        let q = price_eu_theta(&bs(r, 0.0, sigma), t, x, &SeriesConfig::default()).unwrap();
        assert!((q.price - expected).abs() < 1e-10, "{} vs {}", q.price, expected);
        assert_relative_eq!(expected, 5.573_526_022_256_971, epsilon = 1e-9);
    }

    #[test]
    fn put_call_parity_holds_termwise() {
        let m = model_c();
        let slice = EuroSlice::new(&m, 0.3, &SeriesConfig::default()).unwrap();
        for x in [60.0, 95.0, 100.0, 130.0] {
            let p = slice.put(x).price;
            let c = slice.call(x).price;
            let fwd = 100.0 * (-0.05f64 * 0.3).exp() - x * (-0.03f64 * 0.3).exp();
            assert!((p - c - fwd).abs() < 1e-11);
        }
    }

    #[test]
    fn be_root_and_ordering() {
        let m = model_c();
        let be_2 = solve_be_theta(&m, 1e-2).unwrap();
        let be_3 = solve_be_theta(&m, 1e-3).unwrap();
        assert!(be_3 > be_2 && be_3 < 100.0);
        for (theta, be) in [(1e-2, be_2), (1e-3, be_3)] {
            let q = price_eu_theta(&m, theta, be, &SeriesConfig::default()).unwrap();
            assert!((q.price - (100.0 - be)).abs() < 1e-10 * 100.0);
        }
    }

    #[test]
    fn be_no_jumps_below_strike_and_approaching() {
        let m = bs(0.05, 0.0, 0.25);
        let mut prev = 0.0;
        for theta in [0.5, 0.1, 0.01, 1e-4] {
            let be = solve_be_theta(&m, theta).unwrap();
            assert!(be < 100.0 && be > prev);
            prev = be;
        }
        assert!(100.0 - prev < 1.0);
    }

    #[test]
    fn alpha_requires_zero_dbar() {
        let m = bs(0.04, 0.08, 0.2);
        assert!(matches!(alpha_of_theta(&m, &[0.01]), Err(Error::RegimeMismatch { .. })));
        let pts = alpha_of_theta(&model_c(), &[1e-2, 1e-4]).unwrap();
        assert!(pts.iter().all(|p| p.alpha > 0.0));
        let csv = alpha_csv(&pts);
        assert!(csv.starts_with("theta,b_e,alpha,alpha_ratio,rate_ratio\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn truncation_failure_reported() {
        let cfg = SeriesConfig { rel_tol: 1e-13, max_terms: 3 };
        assert!(matches!(EuroSlice::new(&model_c(), 1.0, &cfg), Err(Error::TruncationFailure { .. })));
    }
}
