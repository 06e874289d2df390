//! Near-maturity experiments: boundary rates against the auxiliary
//! threshold (d̄ < 0) or the √(2θ|ln θ|) law (d̄ = 0), the b_e − b gap, and
//! the price expansion around ξ.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::american::{extract_boundary, solve_am, AmericanConfig, BoundaryCurve, GridSpec, PriceSurface, SolverSpec, TimeScheme};
use crate::auxiliary::{solve_aux, AuxGrid, AuxParams, AuxSolution};
use crate::error::{Error, Result};
use crate::european::{solve_be_theta, AlphaPoint};
use crate::levy_model::{classify_regime, solve_xi, LimitData, ModelParams, Regime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    /// FD grid; the horizon is set to the largest solved θ.
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub aux: AuxGrid,
    pub c_ex: f64,
    /// Terminal relative gap allowed between boundary ratio and target.
    pub gap_gate: f64,
    /// Relative tolerance of the FD ratio against √2 when d̄ = 0.
    pub zero_gate: f64,
    /// θ below this are not solved by finite differences.
    pub fd_min_theta: f64,
    /// A boundary closer to ξ than this many cells is reported as unresolved.
    pub min_cells: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec { nx: 32_000, nt: 1600, scheme: TimeScheme::CrankNicolson, ..Default::default() },
            solver: SolverSpec { store_all: false, ..Default::default() },
            aux: AuxGrid::default(),
            c_ex: crate::american::DEFAULT_C_EX,
            gap_gate: 0.25,
            zero_gate: 0.35,
            fd_min_theta: 1e-3,
            min_cells: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "insufficient points")]
    Insufficient,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub property: String,
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    fn new(property: &str, status: Status, detail: String) -> Self {
        Self { property: property.to_string(), status, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub theta: f64,
    /// FD boundary, absent when not resolved.
    pub b: Option<f64>,
    pub b_e: f64,
    pub ratio_thm: Option<f64>,
    pub ratio_target: f64,
    /// (b_e − b)/√θ
    pub gap_ratio: Option<f64>,
    /// (K − b_e)/(σK√(θ|ln θ|)); d̄ = 0 only.
    pub be_ratio: Option<f64>,
    /// α/√(2 ln(1/θ)); d̄ = 0 only.
    pub alpha_ratio: Option<f64>,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub model_id: String,
    pub regime: Regime,
    pub xi: f64,
    pub target: f64,
    /// Threshold of the λ = 0 problem (d̄ < 0 only).
    pub y0_reference: Option<f64>,
    pub rows: Vec<RateRow>,
    pub verdicts: Vec<Verdict>,
}

pub const RATE_CSV_HEADER: &str = "theta,b,b_e,ratio_thm,ratio_target,gap_ratio,verdict";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl RateReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RATE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.theta,
                opt(r.b),
                r.b_e,
                opt(r.ratio_thm),
                r.ratio_target,
                opt(r.gap_ratio),
                r.verdict
            );
        }
        out
    }

    pub fn verdict(&self, property: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.property == property)
    }
}

/// Sorted strictly decreasing, validated.
fn normalize_thetas(m: &ModelParams, thetas: &[f64]) -> Result<Vec<f64>> {
    let mut th = thetas.to_vec();
    if let Some(bad) = th.iter().find(|&&t| !(t > 0.0 && t < m.maturity() && t < 1.0)) {
        return Err(Error::InvalidArgument(format!("theta {bad} must lie in (0, min(T, 1))")));
    }
    th.sort_by(|a, b| b.total_cmp(a));
    th.dedup();
    Ok(th)
}

fn fd_config(cfg: &RateConfig, fd_thetas: &[f64]) -> AmericanConfig {
    let mut grid = cfg.grid.clone();
    grid.horizon = fd_thetas.first().copied();
    AmericanConfig { grid, solver: SolverSpec { store_all: false, ..cfg.solver.clone() }, thetas: fd_thetas.to_vec() }
}

/// Boundary at θ if it sits at least `min_cells` cells below ξ.
fn resolved_boundary(bc: &BoundaryCurve, s: &PriceSurface, theta: f64, min_cells: f64) -> Option<f64> {
    let p = bc.at(theta)?;
    ((bc.xi / p.refined).ln() >= min_cells * s.grid.dx).then_some(p.refined)
}

/// Shared inputs of the d̄ < 0 experiments.
#[derive(Debug, Clone)]
pub struct NegContext {
    pub model: ModelParams,
    pub limit: LimitData,
    pub aux: AuxSolution,
    pub y0: f64,
    pub surface: PriceSurface,
    pub boundary: BoundaryCurve,
    pub min_cells: f64,
}

/// Solve the FD surface at `thetas` and the auxiliary problems (λ and 0).
pub fn prepare_neg(m: &ModelParams, thetas: &[f64], cfg: &RateConfig) -> Result<NegContext> {
    let regime = classify_regime(m)?;
    if regime != Regime::StrictlyNegativeDbar {
        return Err(Error::RegimeMismatch { expected: Regime::StrictlyNegativeDbar, found: regime });
    }
    let limit = solve_xi(m)?;
    let thetas = normalize_thetas(m, thetas)?;
    let fd: Vec<f64> = thetas.iter().copied().filter(|&t| t >= cfg.fd_min_theta).collect();
    if fd.is_empty() {
        return Err(Error::InvalidArgument("no theta at or above fd_min_theta".into()));
    }
    let params = AuxParams::new(limit.lambda_atom, limit.beta)?;
    let zero = AuxParams::new(0.0, limit.beta)?;
    let (surface, (aux, aux0)) = rayon::join(
        || solve_am(m, &fd_config(cfg, &fd)),
        || {
            rayon::join(
                || solve_aux(&params, &cfg.aux),
                || if params.lambda > 0.0 { Some(solve_aux(&zero, &cfg.aux)) } else { None },
            )
        },
    );
    let surface = surface?;
    let aux = aux?;
    let y0 = match aux0 {
        Some(s) => s?.y_threshold,
        None => aux.y_threshold,
    };
    let boundary = extract_boundary(&surface, cfg.c_ex)?;
    Ok(NegContext { model: m.clone(), limit, aux, y0, surface, boundary, min_cells: cfg.min_cells })
}

/// (ξ − b)/(σξ√θ) against the auxiliary threshold.
pub fn rate_report_neg(id: &str, ctx: &NegContext, thetas: &[f64], gap_gate: f64) -> Result<RateReport> {
    let m = &ctx.model;
    let thetas = normalize_thetas(m, thetas)?;
    let (k, sigma, xi) = (m.strike(), m.sigma(), ctx.limit.xi);
    let target = ctx.aux.y_threshold;
    let mut rows = Vec::with_capacity(thetas.len());
    for &theta in &thetas {
        let b_e = solve_be_theta(m, theta)?;
        let b = resolved_boundary(&ctx.boundary, &ctx.surface, theta, ctx.min_cells);
        let ratio = b.map(|b| (xi - b) / (sigma * xi * theta.sqrt()));
        let gap = b.map(|b| (b_e - b) / theta.sqrt());
        let verdict = match b {
            None => "unresolved".to_string(),
            Some(b) if b <= b_e && b_e <= k && b < xi => "ok".to_string(),
            Some(_) => "order-violation".to_string(),
        };
        rows.push(RateRow {
            theta,
            b,
            b_e,
            ratio_thm: ratio,
            ratio_target: target,
            gap_ratio: gap,
            be_ratio: None,
            alpha_ratio: None,
            verdict,
        });
    }
    let mut verdicts = Vec::new();
    let resolved: Vec<&RateRow> = rows.iter().filter(|r| r.ratio_thm.is_some()).collect();
    if resolved.len() < 3 {
        verdicts.push(Verdict::new(
            "trend",
            Status::Insufficient,
            format!("{} resolved points, need 3", resolved.len()),
        ));
    } else {
        let last3: Vec<f64> = resolved[resolved.len() - 3..]
            .iter()
            .map(|r| (r.ratio_thm.unwrap_or(f64::NAN) - target).abs())
            .collect();
        verdicts.push(Verdict::new(
            "trend",
            Status::from_bool(last3[0] > last3[1] && last3[1] > last3[2]),
            format!("|ratio - target| over the three smallest theta: {last3:?}"),
        ));
        let final_gap = last3[2] / target;
        verdicts.push(Verdict::new(
            "terminal_gap",
            Status::from_bool(final_gap <= gap_gate),
            format!("relative gap {final_gap:.4} (gate {gap_gate})"),
        ));
    }
    verdicts.push(ordering_verdict(&rows));
    verdicts.push(gap_verdict(&rows));
    Ok(RateReport {
        model_id: id.to_string(),
        regime: Regime::StrictlyNegativeDbar,
        xi,
        target,
        y0_reference: Some(ctx.y0),
        rows,
        verdicts,
    })
}

fn ordering_verdict(rows: &[RateRow]) -> Verdict {
    let bad: Vec<f64> = rows.iter().filter(|r| r.verdict == "order-violation").map(|r| r.theta).collect();
    Verdict::new("ordering", Status::from_bool(bad.is_empty()), format!("b <= b_e <= K and b < xi; violations at {bad:?}"))
}

/// (b_e − b)/√θ must not double between successive resolved θ.
fn gap_verdict(rows: &[RateRow]) -> Verdict {
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap_ratio).collect();
    if gaps.len() < 2 {
        return Verdict::new("gap_bounded", Status::Insufficient, format!("{} resolved points", gaps.len()));
    }
    let ok = gaps.windows(2).all(|w| w[1] <= 2.0 * w[0]) && gaps.iter().all(|g| g.is_finite() && *g >= 0.0);
    Verdict::new("gap_bounded", Status::from_bool(ok), format!("(b_e - b)/sqrt(theta): {gaps:?}"))
}

/// Boundary rate for d̄ < 0 models.
pub fn rate_experiment_neg(id: &str, m: &ModelParams, thetas: &[f64], cfg: &RateConfig) -> Result<RateReport> {
    let ctx = prepare_neg(m, thetas, cfg)?;
    rate_report_neg(id, &ctx, thetas, cfg.gap_gate)
}

/// Boundary and European critical price rates for d̄ = 0 models. FD rows are
/// produced for θ ≥ `fd_min_theta`; smaller θ carry b_e only.
pub fn rate_experiment_zero(id: &str, m: &ModelParams, thetas: &[f64], cfg: &RateConfig) -> Result<RateReport> {
    let regime = classify_regime(m)?;
    if regime != Regime::ZeroDbar {
        return Err(Error::RegimeMismatch { expected: Regime::ZeroDbar, found: regime });
    }
    let thetas = normalize_thetas(m, thetas)?;
    let (k, sigma) = (m.strike(), m.sigma());
    let target = std::f64::consts::SQRT_2;
    let fd: Vec<f64> = thetas.iter().copied().filter(|&t| t >= cfg.fd_min_theta).collect();
    let fd_part = if fd.is_empty() {
        None
    } else {
        let s = solve_am(m, &fd_config(cfg, &fd))?;
        let bc = extract_boundary(&s, cfg.c_ex)?;
        Some((s, bc))
    };
    let mut rows = Vec::with_capacity(thetas.len());
    for &theta in &thetas {
        let b_e = solve_be_theta(m, theta)?;
        let ap = AlphaPoint::new(m, theta, b_e);
        let b = fd_part.as_ref().and_then(|(s, bc)| resolved_boundary(bc, s, theta, cfg.min_cells));
        let scale = sigma * k * (theta * theta.ln().abs()).sqrt();
        let verdict = match b {
            None => "unresolved".to_string(),
            Some(b) if b <= b_e && b_e <= k && b < k => "ok".to_string(),
            Some(_) => "order-violation".to_string(),
        };
        rows.push(RateRow {
            theta,
            b,
            b_e,
            ratio_thm: b.map(|b| (k - b) / scale),
            ratio_target: target,
            gap_ratio: b.map(|b| (b_e - b) / theta.sqrt()),
            be_ratio: Some(ap.rate_ratio),
            alpha_ratio: Some(ap.alpha_ratio),
            verdict,
        });
    }

    let mut verdicts = Vec::new();
    let be: Vec<f64> = rows.iter().filter_map(|r| r.be_ratio).collect();
    let alpha: Vec<f64> = rows.iter().filter_map(|r| r.alpha_ratio).collect();
    let bes: Vec<f64> = rows.iter().map(|r| r.b_e).collect();
    if rows.len() < 3 {
        for p in ["be_ratio_increasing", "alpha_ratio_increasing", "be_monotone_in_t"] {
            verdicts.push(Verdict::new(p, Status::Insufficient, format!("{} points, need 3", rows.len())));
        }
    } else {
        let inc = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        verdicts.push(Verdict::new(
            "be_ratio_increasing",
            Status::from_bool(inc(&be) && be.iter().all(|&r| r < target)),
            format!("(K - b_e)/(sigma K sqrt(theta|ln theta|)) as theta decreases: {be:?}"),
        ));
        verdicts.push(Verdict::new(
            "alpha_ratio_increasing",
            Status::from_bool(inc(&alpha)),
            format!("alpha/sqrt(2 ln(1/theta)) as theta decreases: {alpha:?}"),
        ));
        verdicts.push(Verdict::new(
            "be_monotone_in_t",
            Status::from_bool(inc(&bes)),
            format!("b_e as theta decreases: {bes:?}"),
        ));
    }
    match rows.iter().rev().find_map(|r| r.ratio_thm.map(|x| (r.theta, x))) {
        Some((theta, x)) => {
            let rel = (x / target - 1.0).abs();
            verdicts.push(Verdict::new(
                "fd_ratio_near_sqrt2",
                Status::from_bool(rel <= cfg.zero_gate),
                format!("FD ratio {x:.4} at theta = {theta}, relative distance {rel:.4} (gate {})", cfg.zero_gate),
            ));
        }
        None => verdicts.push(Verdict::new("fd_ratio_near_sqrt2", Status::Insufficient, "no resolved FD boundary".into())),
    }
    verdicts.push(ordering_verdict(&rows));
    verdicts.push(gap_verdict(&rows));
    Ok(RateReport { model_id: id.to_string(), regime, xi: k, target, y0_reference: None, rows, verdicts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionRow {
    pub theta: f64,
    pub spot: f64,
    /// [P − ψ](T − θ, ξe^{a√θ}) / θ^{3/2}
    pub lhs_scaled: f64,
    /// C · v(a/σ)
    pub rhs: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub a: f64,
    pub expansion_c: f64,
    pub v_at_a: f64,
    pub rows: Vec<ExpansionRow>,
    pub verdicts: Vec<Verdict>,
}

pub const EXPANSION_CSV_HEADER: &str = "theta,spot,lhs_scaled,rhs,ratio";

impl ExpansionReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EXPANSION_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.theta, r.spot, r.lhs_scaled, r.rhs, opt(r.ratio));
        }
        out
    }
}

/// Compare the scaled time value at ξe^{a√θ} with C·v(a/σ) on a prepared
/// context. `thetas` must be among the solved levels.
pub fn expansion_report(ctx: &NegContext, a: f64, thetas: &[f64], ratio_gate: f64) -> Result<ExpansionReport> {
    if !(a < 0.0) {
        return Err(Error::InvalidArgument("expansion check needs a < 0".into()));
    }
    let m = &ctx.model;
    let thetas = normalize_thetas(m, thetas)?;
    let xi = ctx.limit.xi;
    let c = ctx.limit.expansion_c;
    let v_at_a = ctx.aux.v(a / m.sigma());
    let positive = v_at_a > 1e-8;
    let rhs = if positive { c * v_at_a } else { 0.0 };
    let mut rows = Vec::new();
    for &theta in &thetas {
        let level = ctx.surface.level_of(theta).ok_or_else(|| {
            Error::InvalidArgument(format!("theta = {theta} is not a solved level"))
        })?;
        let spot = xi * (a * theta.sqrt()).exp();
        let tv = ctx.surface.price_at_level(level, spot) - ctx.surface.payoff(spot);
        let lhs_scaled = tv / theta.powf(1.5);
        rows.push(ExpansionRow { theta, spot, lhs_scaled, rhs, ratio: positive.then(|| lhs_scaled / rhs) });
    }
    let mut verdicts = Vec::new();
    if positive {
        let errs: Vec<f64> = rows.iter().filter_map(|r| r.ratio).map(|r| (r - 1.0).abs()).collect();
        verdicts.push(if errs.len() < 2 {
            Verdict::new("ratio_improving", Status::Insufficient, format!("{} points", errs.len()))
        } else {
            Verdict::new(
                "ratio_improving",
                Status::from_bool(errs.windows(2).all(|w| w[1] < w[0])),
                format!("|lhs/rhs - 1| as theta decreases: {errs:?}"),
            )
        });
        if let Some(&last) = errs.last() {
            verdicts.push(Verdict::new(
                "ratio_within_gate",
                Status::from_bool(last <= ratio_gate),
                format!("|lhs/rhs - 1| = {last:.4} at the smallest theta (gate {ratio_gate})"),
            ));
        }
    } else {
        let worst = rows.iter().map(|r| r.lhs_scaled.abs()).fold(0.0, f64::max);
        verdicts.push(Verdict::new(
            "zero_region",
            Status::from_bool(worst <= 1e-2 * c),
            format!("max |lhs_scaled| = {worst:e} against 1e-2 C = {:e}", 1e-2 * c),
        ));
    }
    Ok(ExpansionReport { a, expansion_c: c, v_at_a, rows, verdicts })
}

/// Standalone expansion check: solves the FD and auxiliary problems first.
pub fn expansion_check(m: &ModelParams, a: f64, thetas: &[f64], cfg: &RateConfig) -> Result<ExpansionReport> {
    let ctx = prepare_neg(m, thetas, cfg)?;
    expansion_report(&ctx, a, thetas, 0.30)
}

/// Geometric θ grid from `start` downwards by `ratio`, `count` points.
pub fn geometric_thetas(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start / ratio.powi(i as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::LevyMeasure;

    fn small_cfg() -> RateConfig {
        RateConfig {
            grid: GridSpec { nx: 8000, nt: 200, scheme: TimeScheme::CrankNicolson, ..Default::default() },
            aux: AuxGrid { dy: 1e-2, dt: 1e-3, ..Default::default() },
            ..Default::default()
        }
    }

    fn model_d() -> ModelParams {
        ModelParams::new(0.04, 0.08, 0.2, 100.0, 0.5, LevyMeasure::empty()).unwrap()
    }

    #[test]
    fn single_theta_is_insufficient() {
        let r = rate_experiment_neg("D", &model_d(), &[0.01], &small_cfg()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.verdict("trend").unwrap().status, Status::Insufficient);
        assert!(r.passed());
        assert!(r.to_csv().starts_with(RATE_CSV_HEADER));
    }

    #[test]
    fn zero_experiment_rejects_negative_model() {
        let err = rate_experiment_zero("D", &model_d(), &[0.01, 0.001], &small_cfg()).unwrap_err();
        assert!(matches!(err, Error::RegimeMismatch { .. }));
    }

    #[test]
    fn rows_sorted_and_ordered() {
        let r = rate_experiment_neg("D", &model_d(), &[0.0025, 0.04, 0.01], &small_cfg()).unwrap();
        let th: Vec<f64> = r.rows.iter().map(|r| r.theta).collect();
        assert_eq!(th, vec![0.04, 0.01, 0.0025]);
        assert_eq!(r.verdict("ordering").unwrap().status, Status::Pass);
        for row in &r.rows {
            let ratio = row.ratio_thm.unwrap();
            assert!(ratio > 0.3 && ratio < 1.0, "{row:?}");
        }
    }

    #[test]
    fn geometric_grid() {
        assert_eq!(geometric_thetas(0.04, 4.0, 3), vec![0.04, 0.01, 0.0025]);
    }
}
