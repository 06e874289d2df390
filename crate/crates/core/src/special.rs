//! Gaussian special functions and compensated summation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ(x).
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function Φ(x).
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate deep in the tail.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal loss function `E(B₁ − z)⁺ = φ(z) − z(1 − Φ(z))`.
///
/// Evaluated through a continued fraction for large positive `z` where the
/// direct difference cancels, and through `E(B − z)⁺ = −z + E(B + z)⁺` for
/// negative `z`.
pub fn gaussian_loss(z: f64) -> f64 {
    if z < 0.0 {
        return -z + gaussian_loss(-z);
    }
    if z < 4.0 {
        return norm_pdf(z) - z * norm_sf(z);
    }
    // Mills ratio R = 1/(z + 1/D) with D = z + 2/(z + 3/(z + ...)), so that
    // 1 − zR = 1/(zD + 1).
    let mut d = z;
    for k in (2..=80).rev() {
        d = z + k as f64 / d;
    }
    norm_pdf(z) / (z * d + 1.0)
}

/// `E|x + √s·B₁| − |x|`, the expected Brownian local time at 0 accumulated
/// over a horizon `s` by a path started at `x`.
pub fn brownian_local_time_mean(s: f64, x: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let rs = s.sqrt();
    2.0 * rs * gaussian_loss(x.abs() / rs)
}

/// `√(2/π)`, the mean of |B₁|.
pub fn sqrt_2_over_pi() -> f64 {
    (2.0 / PI).sqrt()
}

/// Neumaier (improved Kahan) compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_reference_values() {
        assert_relative_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(norm_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-15);
        assert_relative_eq!(norm_sf(6.0), 9.865_876_450_376_946e-10, max_relative = 1e-13);
    }

    #[test]
    fn loss_continuity_at_switch() {
        let below = norm_pdf(4.0) - 4.0 * norm_sf(4.0);
        let above = gaussian_loss(4.0);
        assert_relative_eq!(below, above, max_relative = 1e-10);
        // 2nd switch: negative branch
        assert_relative_eq!(gaussian_loss(-1.0), 1.0 + gaussian_loss(1.0), epsilon = 1e-15);
    }

    #[test]
    fn loss_tail_is_positive_and_small() {
        // asymptotically φ(z)/z²
        let z = 12.0;
        let v = gaussian_loss(z);
        assert!(v > 0.0);
        assert_relative_eq!(v, norm_pdf(z) / (z * z), max_relative = 0.03);
    }

    #[test]
    fn local_time_mean_at_origin() {
        assert_relative_eq!(brownian_local_time_mean(1.0, 0.0), 0.797_884_560_802_865_4, epsilon = 1e-14);
        assert_eq!(brownian_local_time_mean(0.0, 0.3), 0.0);
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let acc: NeumaierSum = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(acc.value(), 2.0);
    }
}
