mod common;

use putbound::american::{
    extract_boundary, premium_mc_check, smooth_fit_check, solve_am, AmericanConfig, GridSpec, SolverSpec, TimeScheme,
    DEFAULT_C_EX,
};
use putbound::auxiliary::{tree_oracle, AuxParams};
use putbound::european::{price_eu_theta, solve_be_theta, SeriesConfig};
use putbound::levy_model::solve_xi;

use common::*;

#[test]
fn premium_matches_simulated_integral() {
    let m = model_b();
    let cfg = AmericanConfig {
        grid: GridSpec { nx: 3200, nt: 400, scheme: TimeScheme::CrankNicolson, horizon: Some(0.25), ..Default::default() },
        solver: SolverSpec::default(),
        thetas: vec![0.25],
    };
    let s = solve_am(&m, &cfg).unwrap();
    let bc = extract_boundary(&s, DEFAULT_C_EX).unwrap();
    let xi = solve_xi(&m).unwrap().xi;
    let c = premium_mc_check(&s, &bc, m.maturity() - 0.25, xi, 100_000, 7).unwrap();
    assert!(c.lhs > 0.0);
    assert!((c.lhs - c.rhs).abs() <= 3.0 * c.mc_se, "{c:?}");
}

#[test]
fn smooth_fit_on_fine_grid() {
    let m = model_b();
    let cfg = AmericanConfig {
        grid: GridSpec { nx: 6400, nt: 400, scheme: TimeScheme::CrankNicolson, horizon: Some(0.1), ..Default::default() },
        solver: SolverSpec { store_all: false, ..Default::default() },
        thetas: vec![0.1],
    };
    let s = solve_am(&m, &cfg).unwrap();
    let bc = extract_boundary(&s, DEFAULT_C_EX).unwrap();
    let fit = smooth_fit_check(&s, &bc);
    let at = fit.iter().find(|p| p.theta == 0.1).unwrap();
    assert!(at.slope_error < 0.05, "{at:?}");
}

#[test]
fn fd_american_dominates_european_series() {
    for (id, m) in reference_models() {
        let cfg = AmericanConfig {
            grid: GridSpec { nx: 3200, nt: 400, scheme: TimeScheme::CrankNicolson, ..Default::default() },
            solver: SolverSpec { store_all: false, ..Default::default() },
            thetas: vec![0.25],
        };
        let s = solve_am(&m, &cfg).unwrap();
        for x in [70.0, 85.0, 100.0, 115.0] {
            let am = s.price(0.25, x).unwrap();
            let eu = price_eu_theta(&m, 0.25, x, &SeriesConfig::default()).unwrap().price;
            assert!(am >= eu - 1e-4 * m.strike(), "model {id} x={x}: {am} < {eu}");
        }
    }
}

#[test]
fn european_critical_price_rises_toward_maturity() {
    let m = model_c();
    assert!(solve_be_theta(&m, 0.001).unwrap() > solve_be_theta(&m, 0.01).unwrap());
}

#[test]
fn tree_oracle_reward_dominance() {
    let zero = AuxParams::new(0.0, 50.0).unwrap();
    let jump = AuxParams::new(0.05, 50.0).unwrap();
    assert_eq!(tree_oracle(&zero, -10.0, 400), 0.0);
    assert!(tree_oracle(&jump, 0.0, 400) >= tree_oracle(&zero, 0.0, 400));
}

#[test]
fn crr_oracle_matches_european_limit() {
    // deep in the money and at one step the tree reduces to intrinsic value
    assert_eq!(crr_american_put(0.05, 0.0, 0.2, 100.0, 0.5, 50.0, 1), 50.0);
    let p = crr_american_put(0.06, 0.0, 0.4, 100.0, 0.5, 100.0, 2000);
    assert!(p > 9.0 && p < 11.0, "{p}");
}
