//! Jump-diffusion model definition and the maturity-limit data of the
//! exercise boundary.
//!
//! The log-price is `ln S_t = ln S_0 + μt + σB_t + Z_t` where `Z` is a compound
//! Poisson process whose Lévy measure is a finite list of atoms and
//! `μ = r − δ − Σ wᵢ(e^{yᵢ} − 1) − σ²/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two log-jump sizes closer than this are merged into one atom.
const MERGE_TOL: f64 = 1e-12;

/// Atom `yᵢ` counts toward λ when `|yᵢ − ln(K/ξ)|` is within this bound.
pub const ATOM_MATCH_TOL: f64 = 1e-9;

/// One atom of a purely atomic Lévy measure: jumps of log-size `y` arriving
/// at rate `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpAtom {
    pub y: f64,
    pub w: f64,
}

/// Finite, purely atomic Lévy measure. Atoms are sorted by `y` with distinct
/// sizes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevyMeasure {
    atoms: Vec<JumpAtom>,
}

impl LevyMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(mut atoms: Vec<JumpAtom>) -> Result<Self> {
        for a in &atoms {
            if !a.y.is_finite() || a.y == 0.0 {
                return Err(Error::InvalidModel(format!("jump size must be finite and nonzero, got {}", a.y)));
            }
            if !(a.w.is_finite() && a.w > 0.0) {
                return Err(Error::InvalidModel(format!("jump intensity must be positive, got {}", a.w)));
            }
        }
        atoms.sort_by(|a, b| a.y.total_cmp(&b.y));
        let mut merged: Vec<JumpAtom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if (a.y - last.y).abs() <= MERGE_TOL => last.w += a.w,
                _ => merged.push(a),
            }
        }
        let m = Self { atoms: merged };
        if !m.exp_moment().is_finite() {
            return Err(Error::InvalidModel("exponential moment of the Lévy measure overflows".into()));
        }
        Ok(m)
    }

    pub fn single(y: f64, w: f64) -> Result<Self> {
        Self::new(vec![JumpAtom { y, w }])
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// ν(ℝ)
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    /// ∫ e^y ν(dy)
    pub fn exp_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a.w * a.y.exp()).sum()
    }

    /// ∫ (e^y − 1) ν(dy)
    pub fn compensator(&self) -> f64 {
        self.atoms.iter().map(|a| a.w * a.y.exp_m1()).sum()
    }

    /// ∫_{y>0} (e^y − 1) ν(dy)
    pub fn positive_compensator(&self) -> f64 {
        self.atoms.iter().filter(|a| a.y > 0.0).map(|a| a.w * a.y.exp_m1()).sum()
    }

    pub fn max_up_jump(&self) -> f64 {
        self.atoms.iter().map(|a| a.y).fold(0.0, f64::max)
    }

    pub fn max_down_jump(&self) -> f64 {
        self.atoms.iter().map(|a| -a.y).fold(0.0, f64::max)
    }
}

/// Model parameters. Immutable once validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    r: f64,
    delta: f64,
    sigma: f64,
    strike: f64,
    maturity: f64,
    nu: LevyMeasure,
}

impl ModelParams {
    pub fn new(r: f64, delta: f64, sigma: f64, strike: f64, maturity: f64, nu: LevyMeasure) -> Result<Self> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidModel(what.to_string()))
            }
        };
        check(r.is_finite() && r > 0.0, "r must be positive")?;
        check(delta.is_finite() && delta >= 0.0, "delta must be nonnegative")?;
        check(sigma.is_finite() && sigma > 0.0, "sigma must be positive")?;
        check(strike.is_finite() && strike > 0.0, "K must be positive")?;
        check(maturity.is_finite() && maturity > 0.0, "T must be positive")?;
        Ok(Self { r, delta, sigma, strike, maturity, nu })
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn strike(&self) -> f64 {
        self.strike
    }
    pub fn maturity(&self) -> f64 {
        self.maturity
    }
    pub fn nu(&self) -> &LevyMeasure {
        &self.nu
    }

    /// Copy of the model with a different strike.
    pub fn with_strike(&self, strike: f64) -> Result<Self> {
        Self::new(self.r, self.delta, self.sigma, strike, self.maturity, self.nu.clone())
    }

    /// Copy of the model with a different maturity.
    pub fn with_maturity(&self, maturity: f64) -> Result<Self> {
        Self::new(self.r, self.delta, self.sigma, self.strike, maturity, self.nu.clone())
    }

    /// γ₀ = r − δ − ∫(e^y − 1)ν(dy), the drift of dS/S.
    pub fn gamma0(&self) -> f64 {
        self.r - self.delta - self.nu.compensator()
    }

    /// μ = γ₀ − σ²/2, the drift of the continuous part of ln S.
    pub fn mu(&self) -> f64 {
        self.gamma0() - 0.5 * self.sigma * self.sigma
    }

    /// d̄ = r − δ − ∫_{y>0}(e^y − 1)ν(dy)
    pub fn dbar(&self) -> f64 {
        self.r - self.delta - self.nu.positive_compensator()
    }

    /// Regime-classification tolerance on d̄.
    pub fn dbar_tolerance(&self) -> f64 {
        1e-12 * (self.r + self.delta + self.nu.total_mass())
    }

    /// H(x) = rK − δx − Σ wᵢ(x e^{yᵢ} − K)⁺; its root in (0, K] is b(T).
    pub fn limit_function(&self, x: f64) -> f64 {
        let k = self.strike;
        let jumps: f64 = self.nu.atoms().iter().map(|a| a.w * (x * a.y.exp() - k).max(0.0)).sum();
        self.r * k - self.delta * x - jumps
    }

    /// Limit of the critical price at maturity for any sign of d̄:
    /// K when d̄ ≥ 0, otherwise the root of [`ModelParams::limit_function`].
    pub fn maturity_limit_price(&self) -> f64 {
        if self.dbar() >= -self.dbar_tolerance() {
            self.strike
        } else {
            piecewise_linear_root(self)
        }
    }
}

/// JSON model document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub r: f64,
    pub delta: f64,
    pub sigma: f64,
    #[serde(rename = "K")]
    pub strike: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    #[serde(default)]
    pub atoms: Vec<JumpAtom>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.r,
            self.delta,
            self.sigma,
            self.strike,
            self.maturity,
            LevyMeasure::new(self.atoms.clone())?,
        )
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }
}

impl From<&ModelParams> for ModelConfig {
    fn from(m: &ModelParams) -> Self {
        Self {
            r: m.r,
            delta: m.delta,
            sigma: m.sigma,
            strike: m.strike,
            maturity: m.maturity,
            atoms: m.nu.atoms().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    StrictlyNegativeDbar,
    ZeroDbar,
}

/// Everything the near-maturity asymptotics need about the limit point
/// `(T, b(T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitData {
    /// ξ = b(T)
    pub xi: f64,
    /// λ = ν{ln(K/ξ)}
    #[serde(rename = "lambda")]
    pub lambda_atom: f64,
    /// δ̄ = δ + ∫_{y > ln(K/ξ)} e^y ν(dy)
    pub delta_bar: f64,
    /// β = K / (δ̄ ξ)
    pub beta: f64,
    pub regime: Regime,
    /// C = σ ξ δ̄ e^λ
    #[serde(rename = "C")]
    pub expansion_c: f64,
    pub dbar: f64,
}

pub fn compute_dbar(m: &ModelParams) -> f64 {
    m.dbar()
}

pub fn classify_regime(m: &ModelParams) -> Result<Regime> {
    let dbar = m.dbar();
    let tol = m.dbar_tolerance();
    if dbar < -tol {
        Ok(Regime::StrictlyNegativeDbar)
    } else if dbar <= tol {
        Ok(Regime::ZeroDbar)
    } else {
        Err(Error::DbarPositive { dbar })
    }
}

/// Solve `rK = δx + Σ wᵢ(x e^{yᵢ} − K)⁺` for ξ and derive λ, δ̄, β and C.
pub fn solve_xi(m: &ModelParams) -> Result<LimitData> {
    let regime = classify_regime(m)?;
    let k = m.strike();
    let xi = match regime {
        Regime::ZeroDbar => k,
        Regime::StrictlyNegativeDbar => piecewise_linear_root(m),
    };
    let kink = (k / xi).ln();
    let mut lambda = 0.0;
    let mut delta_bar = m.delta();
    for a in m.nu().atoms() {
        if (a.y - kink).abs() <= ATOM_MATCH_TOL {
            lambda += a.w;
        } else if a.y > kink {
            delta_bar += a.w * a.y.exp();
        }
    }
    let beta = k / (delta_bar * xi);
    Ok(LimitData {
        xi,
        lambda_atom: lambda,
        delta_bar,
        beta,
        regime,
        expansion_c: m.sigma() * xi * delta_bar * lambda.exp(),
        dbar: m.dbar(),
    })
}

/// H is piecewise linear and strictly decreasing once it turns negative, with
/// kinks at `K e^{−yᵢ}` for the positive atoms. Locate the segment where H
/// changes sign and invert the linear piece exactly.
fn piecewise_linear_root(m: &ModelParams) -> f64 {
    let k = m.strike();
    let mut kinks: Vec<(f64, &JumpAtom)> = m
        .nu()
        .atoms()
        .iter()
        .filter(|a| a.y > 0.0)
        .map(|a| (k * (-a.y).exp(), a))
        .collect();
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));

    // On a segment whose left end is `lo`, the active atoms are those whose
    // kink is <= lo; there H(x) = rK + K Σw − (δ + Σ w e^y) x.
    let mut intercept = m.r() * k;
    let mut slope = m.delta();
    let mut idx = 0;
    let mut lo = 0.0;
    loop {
        let hi = if idx < kinks.len() { kinks[idx].0.min(k) } else { k };
        if slope > 0.0 {
            let root = intercept / slope;
            if root <= hi * (1.0 + 1e-15) {
                return root.clamp(lo, k);
            }
        }
        if idx >= kinks.len() || hi >= k {
            return k;
        }
        // absorb every atom whose kink sits at this breakpoint
        while idx < kinks.len() && kinks[idx].0 <= hi {
            let a = kinks[idx].1;
            intercept += a.w * k;
            slope += a.w * a.y.exp();
            idx += 1;
        }
        lo = hi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roots::brent;
    use approx::assert_relative_eq;

    fn model(r: f64, delta: f64, atoms: &[(f64, f64)]) -> ModelParams {
        let nu = LevyMeasure::new(atoms.iter().map(|&(y, w)| JumpAtom { y, w }).collect()).unwrap();
        ModelParams::new(r, delta, 0.3, 100.0, 1.0, nu).unwrap()
    }

    #[test]
    fn dbar_examples() {
        assert_eq!(compute_dbar(&model(0.05, 0.05, &[])), 0.0);
        assert_relative_eq!(compute_dbar(&model(0.02, 0.04, &[(2f64.ln(), 0.05)])), -0.07, epsilon = 1e-15);
        assert_relative_eq!(compute_dbar(&model(0.05, 0.02, &[(1.25f64.ln(), 0.2)])), -0.02, epsilon = 1e-15);
    }

    #[test]
    fn xi_without_jumps_is_rk_over_delta() {
        let lim = solve_xi(&model(0.04, 0.08, &[])).unwrap();
        assert_eq!(lim.xi, 50.0);
        assert_eq!(lim.lambda_atom, 0.0);
        assert_relative_eq!(lim.delta_bar, 0.08);
        assert_relative_eq!(lim.beta, 25.0, epsilon = 1e-12);
        assert_eq!(lim.regime, Regime::StrictlyNegativeDbar);
    }

    #[test]
    fn zero_dbar_gives_strike() {
        let lim = solve_xi(&model(0.05, 0.03, &[(1.2f64.ln(), 0.1)])).unwrap();
        assert_eq!(lim.xi, 100.0);
        assert_eq!(lim.regime, Regime::ZeroDbar);
    }

    #[test]
    fn xi_on_upper_branch() {
        let m = model(0.05, 0.02, &[(1.25f64.ln(), 0.2)]);
        let lim = solve_xi(&m).unwrap();
        // 25 = 0.27 x on x > 80
        assert_relative_eq!(lim.xi, 25.0 / 0.27, max_relative = 1e-14);
        assert_eq!(lim.lambda_atom, 0.0);
        assert_relative_eq!(lim.delta_bar, 0.27, epsilon = 1e-14);
        assert_relative_eq!(lim.beta, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn atom_at_the_kink() {
        let m = model(0.02, 0.04, &[(2f64.ln(), 0.05)]);
        let lim = solve_xi(&m).unwrap();
        assert_eq!(lim.xi, 50.0);
        assert_eq!(lim.lambda_atom, 0.05);
        assert_relative_eq!(lim.delta_bar, 0.04);
        assert_relative_eq!(lim.beta, 50.0, epsilon = 1e-12);
        assert_relative_eq!(lim.expansion_c, 0.3 * 50.0 * 0.04 * 0.05f64.exp(), epsilon = 1e-12);
    }

    #[test]
    fn positive_dbar_rejected() {
        let m = model(0.05, 0.01, &[]);
        assert!(matches!(classify_regime(&m), Err(Error::DbarPositive { .. })));
        assert!(matches!(solve_xi(&m), Err(Error::DbarPositive { .. })));
        // the maturity limit is still defined
        assert_eq!(m.maturity_limit_price(), 100.0);
    }

    #[test]
    fn matches_brent_on_h() {
        let m = model(0.03, 0.05, &[(-0.3, 0.4), (0.1, 0.3), (0.4, 0.2), (0.9, 0.05)]);
        let lim = solve_xi(&m).unwrap();
        let r = brent(|x| m.limit_function(x), 1e-9, 100.0, 1e-14, 200).unwrap();
        assert_relative_eq!(lim.xi, r, max_relative = 1e-12);
        assert!(m.limit_function(lim.xi).abs() <= 1e-12 * m.r() * 100.0);
    }

    #[test]
    fn duplicates_merge_and_sort() {
        let nu = LevyMeasure::new(vec![
            JumpAtom { y: 0.2, w: 0.1 },
            JumpAtom { y: -0.1, w: 0.3 },
            JumpAtom { y: 0.2, w: 0.05 },
        ])
        .unwrap();
        assert_eq!(nu.atoms().len(), 2);
        assert_eq!(nu.atoms()[0].y, -0.1);
        assert_relative_eq!(nu.atoms()[1].w, 0.15);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(LevyMeasure::single(0.0, 1.0).is_err());
        assert!(LevyMeasure::single(0.1, -1.0).is_err());
        assert!(ModelParams::new(0.05, 0.0, 0.0, 100.0, 1.0, LevyMeasure::empty()).is_err());
        assert!(ModelParams::new(0.0, 0.0, 0.2, 100.0, 1.0, LevyMeasure::empty()).is_err());
    }

    #[test]
    fn json_roundtrip_and_unknown_key() {
        let doc = r#"{"r":0.02,"delta":0.04,"sigma":0.2,"K":100,"T":0.5,"atoms":[{"y":0.6931471805599453,"w":0.05}]}"#;
        let cfg = ModelConfig::from_json_str(doc).unwrap();
        let m = cfg.build().unwrap();
        assert_eq!(m.strike(), 100.0);
        assert_eq!(ModelConfig::from(&m), cfg);

        let bad = r#"{"r":0.02,"delta":0.04,"sigma":0.2,"K":100,"T":0.5,"atoms":[{"y":0.1,"w":0.05,"z":1}]}"#;
        match ModelConfig::from_json_str(bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "atoms[0].z"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
