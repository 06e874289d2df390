//! `putbound`: driver for the exercise-boundary experiments.
//!
//! Exit codes: 0 success, 1 a reported check failed, 2 configuration,
//! 3 regime/domain, 4 missing artifact, 5 solver failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use putbound::american::{
    extract_boundary, premium_mc_check, smooth_fit_check, solve_am, AmericanConfig, GridSpec, PriceSurface,
    SolverSpec, TimeScheme, DEFAULT_C_EX,
};
use putbound::asymptotics::{
    expansion_report, prepare_neg, rate_experiment_zero, rate_report_neg, RateConfig, RateReport,
};
use putbound::auxiliary::{solve_aux, AuxParams, AuxSummary};
use putbound::checks::run_invariants;
use putbound::european::{price_eu_theta, SeriesConfig};
use putbound::levy_model::{classify_regime, solve_xi, ModelConfig, ModelParams, Regime};
use putbound::Error;

use config::RunConfig;

const SURFACE_STEM: &str = "surface";

#[derive(Parser)]
#[command(name = "putbound", version, about = "American put exercise boundary near maturity under jump diffusion")]
struct Cli {
    /// JSON run configuration (or a bare model)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: config `out`, else ./out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads [default: available cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Time stepping: implicit-euler (ie) or crank-nicolson (cn)
    #[arg(long, global = true)]
    scheme: Option<TimeScheme>,
    #[arg(long, global = true)]
    nx: Option<usize>,
    #[arg(long, global = true)]
    nt: Option<usize>,
    #[arg(long, global = true)]
    time_grading: Option<f64>,
    /// Obstacle solver name (psor, penalty, brennan-schwartz)
    #[arg(long, global = true)]
    obstacle: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Point {
    /// Calendar time in [0, T)
    #[arg(long, conflicts_with = "theta", allow_hyphen_values = true)]
    t: Option<f64>,
    /// Time to maturity
    #[arg(long)]
    theta: Option<f64>,
    /// Spot
    #[arg(long)]
    x: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Auto,
    Neg,
    Zero,
}

#[derive(Subcommand)]
enum Command {
    /// Maturity limit ξ of the boundary and the derived constants
    Limit,
    /// European put price and delta
    PriceEu(Point),
    /// American put price from a persisted or freshly solved surface
    PriceAm {
        #[command(flatten)]
        point: Point,
        /// Fail instead of solving when no surface is stored
        #[arg(long)]
        no_solve: bool,
    },
    /// Exercise boundary, smooth-fit errors and optional premium check
    Boundary {
        #[arg(long)]
        c_ex: Option<f64>,
        /// Calendar time of the Monte Carlo premium check
        #[arg(long, requires = "premium_x")]
        premium_t: Option<f64>,
        #[arg(long, requires = "premium_t")]
        premium_x: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
    },
    /// Auxiliary optimal-stopping problem
    Aux {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Near-maturity rate experiments
    Rates {
        #[arg(long, value_enum, default_value_t = Experiment::Auto)]
        experiment: Experiment,
        /// Comma-separated θ list
        #[arg(long, value_delimiter = ',')]
        thetas: Option<Vec<f64>>,
        /// Also compare the price expansion at ξe^{a√θ} (d̄ < 0 only)
        #[arg(long, allow_hyphen_values = true)]
        expansion_a: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        expansion_thetas: Option<Vec<f64>>,
    },
    /// Invariant suite
    Check,
}

/// Stored surface absent while solving was not allowed.
#[derive(Debug)]
struct MissingArtifact(PathBuf);

impl std::fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "missing artifact {}", self.0.display())
    }
}

impl std::error::Error for MissingArtifact {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<MissingArtifact>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config { .. } | Error::InvalidModel(_) | Error::UnknownSolver { .. } => 2,
                Error::DbarPositive { .. } | Error::RegimeMismatch { .. } | Error::InvalidArgument(_) => 3,
                Error::NonConvergence { .. }
                | Error::TruncationFailure { .. }
                | Error::RootBracketFailure { .. }
                | Error::DegenerateBoundary { .. } => 5,
                Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 4,
                Error::Io(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Ctx {
    /// Config file stem, used as the model id in reports.
    id: String,
    cfg: RunConfig,
    model: ModelParams,
    out: PathBuf,
    seed: u64,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> anyhow::Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn theta_of(&self, p: &Point) -> anyhow::Result<f64> {
        match (p.t, p.theta) {
            (Some(t), None) => Ok(self.model.maturity() - t),
            (None, Some(th)) => Ok(th),
            _ => Err(Error::InvalidArgument("give exactly one of --t and --theta".into()).into()),
        }
    }
}

fn apply_overrides(cli: &Cli, grid: &mut GridSpec, solver: &mut SolverSpec) {
    if let Some(s) = cli.scheme {
        grid.scheme = s;
    }
    if let Some(n) = cli.nx {
        grid.nx = n;
    }
    if let Some(n) = cli.nt {
        grid.nt = n;
    }
    if let Some(g) = cli.time_grading {
        grid.time_grading = g;
    }
    if let Some(o) = &cli.obstacle {
        solver.obstacle = o.clone();
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| Error::Config { path: "--config".into(), message: "a configuration file is required".into() })?;
    let mut cfg = RunConfig::load(&path)?;
    apply_overrides(&cli, &mut cfg.grid, &mut cfg.solver);
    apply_overrides(&cli, &mut cfg.rates.grid, &mut cfg.rates.solver);
    apply_overrides(&cli, &mut cfg.check.grid, &mut cfg.check.solver);
    if let Some(o) = &cli.obstacle {
        cfg.aux.grid.obstacle = o.clone();
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let model = cfg.model.build()?;
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let seed = cli.seed.unwrap_or(cfg.seed);
    let id = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    let ctx = Ctx { id, cfg, model, out, seed };

    match cli.command {
        Command::Limit => cmd_limit(&ctx),
        Command::PriceEu(p) => cmd_price_eu(&ctx, &p),
        Command::PriceAm { point, no_solve } => cmd_price_am(&ctx, &point, no_solve),
        Command::Boundary { c_ex, premium_t, premium_x, paths } => {
            cmd_boundary(&ctx, c_ex.unwrap_or(DEFAULT_C_EX), premium_t.zip(premium_x), paths)
        }
        Command::Aux { lambda, beta } => cmd_aux(&ctx, lambda, beta),
        Command::Rates { experiment, thetas, expansion_a, expansion_thetas } => {
            cmd_rates(&ctx, experiment, thetas, expansion_a, expansion_thetas)
        }
        Command::Check => cmd_check(&ctx),
    }
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn cmd_limit(ctx: &Ctx) -> anyhow::Result<bool> {
    print_json(&solve_xi(&ctx.model)?)?;
    Ok(true)
}

fn cmd_price_eu(ctx: &Ctx, p: &Point) -> anyhow::Result<bool> {
    let theta = ctx.theta_of(p)?;
    let q = price_eu_theta(&ctx.model, theta, p.x, &SeriesConfig::default())?;
    print_json(&json!({ "theta": theta, "x": p.x, "price": q.price, "delta": q.delta }))?;
    Ok(true)
}

fn american_config(ctx: &Ctx, thetas: Vec<f64>) -> AmericanConfig {
    AmericanConfig { grid: ctx.cfg.grid.clone(), solver: ctx.cfg.solver.clone(), thetas }
}

fn surface_exists(dir: &Path) -> bool {
    ["csv", "json"].iter().all(|ext| dir.join(format!("{SURFACE_STEM}.{ext}")).is_file())
}

fn cmd_price_am(ctx: &Ctx, p: &Point, no_solve: bool) -> anyhow::Result<bool> {
    let theta = ctx.theta_of(p)?;
    let stored = if surface_exists(&ctx.out) {
        let s = PriceSurface::load(&ctx.out, SURFACE_STEM)?;
        let same = ModelConfig::from(&s.model) == ModelConfig::from(&ctx.model)
            && s.grid_spec == ctx.cfg.grid
            && s.solver == ctx.cfg.solver;
        (no_solve || same).then_some(s)
    } else if no_solve {
        return Err(MissingArtifact(ctx.out.join(format!("{SURFACE_STEM}.json"))).into());
    } else {
        None
    };
    let (s, source) = match stored {
        Some(s) => (s, "stored"),
        None => {
            let s = solve_am(&ctx.model, &american_config(ctx, vec![theta]))?;
            s.save(&ctx.out, SURFACE_STEM)?;
            (s, "solved")
        }
    };
    let price = s.price(theta, p.x)?;
    let eu = price_eu_theta(&ctx.model, theta, p.x, &SeriesConfig::default())?.price;
    print_json(&json!({ "theta": theta, "x": p.x, "price": price, "european": eu, "surface": source }))?;
    Ok(true)
}

fn cmd_boundary(ctx: &Ctx, c_ex: f64, premium: Option<(f64, f64)>, paths: usize) -> anyhow::Result<bool> {
    let thetas = premium.map(|(t, _)| vec![ctx.model.maturity() - t]).unwrap_or_default();
    let s = solve_am(&ctx.model, &american_config(ctx, thetas))?;
    s.save(&ctx.out, SURFACE_STEM)?;
    let bc = extract_boundary(&s, c_ex)?;
    let mut csv = String::from("theta,b_raw,b,eps\n");
    for p in &bc.points {
        csv.push_str(&format!("{},{},{},{}\n", p.theta, p.raw, p.refined, p.eps));
    }
    ctx.write("boundary.csv", &csv)?;
    let fit = smooth_fit_check(&s, &bc);
    let mut csv = String::from("theta,slope_error\n");
    for p in &fit {
        csv.push_str(&format!("{},{}\n", p.theta, p.slope_error));
    }
    ctx.write("smooth_fit.csv", &csv)?;
    let premium = premium
        .map(|(t, x)| premium_mc_check(&s, &bc, t, x, paths, ctx.seed))
        .transpose()?;
    let summary = json!({
        "xi": bc.xi,
        "c_ex": c_ex,
        "levels": bc.points.len(),
        "b_at_horizon": bc.points.last().map(|p| p.refined),
        "max_slope_error": fit.iter().map(|p| p.slope_error).fold(0.0, f64::max),
        "premium": premium,
        "seed": ctx.seed,
    });
    ctx.write("boundary.json", &serde_json::to_string_pretty(&summary)?)?;
    print_json(&summary)?;
    Ok(true)
}

fn cmd_aux(ctx: &Ctx, lambda: Option<f64>, beta: Option<f64>) -> anyhow::Result<bool> {
    let sec = &ctx.cfg.aux;
    let (lambda, beta) = match (lambda.or(sec.lambda), beta.or(sec.beta)) {
        (Some(l), Some(b)) => (l, b),
        (l, b) => {
            let lim = solve_xi(&ctx.model)?;
            (l.unwrap_or(lim.lambda_atom), b.unwrap_or(lim.beta))
        }
    };
    let p = AuxParams::new(lambda, beta)?;
    let sol = solve_aux(&p, &sec.grid)?;
    let y0 = if lambda == 0.0 {
        sol.y_threshold
    } else {
        solve_aux(&AuxParams::new(0.0, beta)?, &sec.grid)?.y_threshold
    };
    let summary = AuxSummary::new(&sol, y0);
    ctx.write("aux_values.csv", &sol.to_csv())?;
    ctx.write("aux_summary.json", &serde_json::to_string_pretty(&summary)?)?;
    print_json(&summary)?;
    Ok(true)
}

fn report_verdicts(report_name: &str, verdicts: &[putbound::asymptotics::Verdict]) {
    for v in verdicts {
        let status = serde_json::to_value(v.status)
            .ok()
            .and_then(|s| s.as_str().map(str::to_string))
            .unwrap_or_default();
        println!("{report_name} {} {status}: {}", v.property, v.detail);
    }
}

fn cmd_rates(
    ctx: &Ctx,
    experiment: Experiment,
    thetas: Option<Vec<f64>>,
    expansion_a: Option<f64>,
    expansion_thetas: Option<Vec<f64>>,
) -> anyhow::Result<bool> {
    let m = &ctx.model;
    let regime = classify_regime(m)?;
    let wanted = match experiment {
        Experiment::Auto => regime,
        Experiment::Neg => Regime::StrictlyNegativeDbar,
        Experiment::Zero => Regime::ZeroDbar,
    };
    if wanted != regime {
        return Err(Error::RegimeMismatch { expected: wanted, found: regime }.into());
    }
    let thetas = thetas.or_else(|| ctx.cfg.thetas.clone()).unwrap_or_else(|| match regime {
        Regime::StrictlyNegativeDbar => vec![0.04, 0.01, 0.0025],
        Regime::ZeroDbar => (2..=8).map(|k| 10f64.powi(-k)).collect(),
    });
    let rc: &RateConfig = &ctx.cfg.rates;
    let id = &ctx.id;
    let mut passed = true;
    let report: RateReport = match regime {
        Regime::ZeroDbar => {
            if expansion_a.is_some() {
                return Err(Error::RegimeMismatch { expected: Regime::StrictlyNegativeDbar, found: regime }.into());
            }
            rate_experiment_zero(id, m, &thetas, rc)?
        }
        Regime::StrictlyNegativeDbar => {
            let exp_thetas = expansion_thetas.unwrap_or_else(|| thetas.clone());
            let mut all = thetas.clone();
            if expansion_a.is_some() {
                all.extend(&exp_thetas);
            }
            let nctx = prepare_neg(m, &all, rc)?;
            if let Some(a) = expansion_a {
                let e = expansion_report(&nctx, a, &exp_thetas, 0.30)?;
                ctx.write("expansion.csv", &e.to_csv())?;
                ctx.write("expansion.json", &serde_json::to_string_pretty(&e)?)?;
                report_verdicts("expansion", &e.verdicts);
                passed = e.passed();
            }
            rate_report_neg(id, &nctx, &thetas, rc.gap_gate)?
        }
    };
    ctx.write("rates.csv", &report.to_csv())?;
    ctx.write("rates.json", &serde_json::to_string_pretty(&report)?)?;
    report_verdicts("rates", &report.verdicts);
    Ok(passed && report.passed())
}

fn cmd_check(ctx: &Ctx) -> anyhow::Result<bool> {
    let report = run_invariants(&ctx.model, &ctx.cfg.check)?;
    for i in &report.items {
        println!("{} {}: {}", if i.passed { "PASS" } else { "FAIL" }, i.name, i.detail);
    }
    ctx.write("check.json", &serde_json::to_string_pretty(&report)?)?;
    Ok(report.passed())
}
