//! Reference models and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use putbound::levy_model::{JumpAtom, LevyMeasure, ModelParams};

pub fn model(r: f64, delta: f64, sigma: f64, atoms: &[(f64, f64)]) -> ModelParams {
    let nu = LevyMeasure::new(atoms.iter().map(|&(y, w)| JumpAtom { y, w }).collect()).unwrap();
    ModelParams::new(r, delta, sigma, 100.0, 0.5, nu).unwrap()
}

/// d̄ < 0 with the atom exactly at ln(K/ξ): ξ = 50, λ = 0.05, β = 50.
pub fn model_a() -> ModelParams {
    model(0.02, 0.04, 0.2, &[(2f64.ln(), 0.05)])
}

/// d̄ < 0, no atom at the kink: ξ = 92.59…, λ = 0, β = 4.
pub fn model_b() -> ModelParams {
    model(0.05, 0.02, 0.2, &[(1.25f64.ln(), 0.2)])
}

/// d̄ = 0: ξ = K.
pub fn model_c() -> ModelParams {
    model(0.05, 0.03, 0.3, &[(1.2f64.ln(), 0.1)])
}

/// No jumps, δ > r: ξ = rK/δ = 50.
pub fn model_d() -> ModelParams {
    model(0.04, 0.08, 0.2, &[])
}

/// No-jump model for the binomial comparison.
pub fn model_tree() -> ModelParams {
    model(0.06, 0.0, 0.4, &[])
}

pub fn reference_models() -> Vec<(&'static str, ModelParams)> {
    vec![("A", model_a()), ("B", model_b()), ("C", model_c()), ("D", model_d())]
}

/// rK − δx − Σ w (x e^y − K)⁺, written out from the model inputs.
pub fn limit_h(m: &ModelParams, x: f64) -> f64 {
    let k = m.strike();
    let jumps: f64 = m.nu().atoms().iter().map(|a| a.w * (x * a.y.exp() - k).max(0.0)).sum();
    m.r() * k - m.delta() * x - jumps
}

/// Cox–Ross–Rubinstein American put with continuous dividend yield.
pub fn crr_american_put(r: f64, delta: f64, sigma: f64, k: f64, theta: f64, x: f64, steps: usize) -> f64 {
    let dt = theta / steps as f64;
    let u = (sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let p = (((r - delta) * dt).exp() - d) / (u - d);
    let disc = (-r * dt).exp();
    let mut v: Vec<f64> = (0..=steps).map(|j| (k - x * u.powi(2 * j as i32 - steps as i32)).max(0.0)).collect();
    for n in (0..steps).rev() {
        for j in 0..=n {
            let cont = disc * (p * v[j + 1] + (1.0 - p) * v[j]);
            let spot = x * u.powi(2 * j as i32 - n as i32);
            v[j] = cont.max(k - spot);
        }
    }
    v[0]
}

pub struct McEstimate {
    pub price: f64,
    pub se: f64,
}

/// European put by direct simulation of
/// ln S_θ = ln x + (r − δ − Σ w(e^y − 1) − σ²/2)θ + σ√θ Z + Σ N_i y_i.
pub fn mc_european_put(m: &ModelParams, theta: f64, x: f64, paths: usize, seed: u64) -> McEstimate {
    let atoms = m.nu().atoms().to_vec();
    let comp: f64 = atoms.iter().map(|a| a.w * (a.y.exp() - 1.0)).sum();
    let drift = (m.r() - m.delta() - comp - 0.5 * m.sigma() * m.sigma()) * theta;
    let vol = m.sigma() * theta.sqrt();
    let k = m.strike();
    let chunks = 32usize;
    let per = paths / chunks;
    let (s1, s2) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let counts: Vec<Poisson<f64>> = atoms.iter().map(|a| Poisson::new(a.w * theta).unwrap()).collect();
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..per {
                let z: f64 = StandardNormal.sample(&mut rng);
                let jumps: f64 = atoms.iter().zip(&counts).map(|(at, p)| p.sample(&mut rng) * at.y).sum();
                let payoff = (k - x * (drift + vol * z + jumps).exp()).max(0.0);
                a += payoff;
                b += payoff * payoff;
            }
            (a, b)
        })
        .reduce(|| (0.0, 0.0), |p, q| (p.0 + q.0, p.1 + q.1));
    let n = (per * chunks) as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0);
    let disc = (-m.r() * theta).exp();
    McEstimate { price: disc * mean, se: disc * (var / n).sqrt() }
}

/// E(a − B_t)⁺ by composite Simpson integration against the Gaussian density.
pub fn expected_put_on_brownian(a: f64, t: f64) -> f64 {
    let s = t.sqrt();
    let n = 20_000;
    let lo = -12.0;
    let h = (a / s - lo) / n as f64;
    if h <= 0.0 {
        return 0.0;
    }
    let f = |z: f64| (a - s * z) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (inner + f(lo) + f(a / s))
}
