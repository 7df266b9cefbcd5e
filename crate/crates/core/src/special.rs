//! Special functions in the numerically stable forms needed by the spectrum model.

use libm::{erfc, lgamma as ln_gamma};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 4.0 {
        return (x * x).exp() * erfc(x);
    }
    // Continued fraction, evaluated bottom-up; converges quickly for x >= 4.
    let mut tail = 0.0;
    for n in (1..=60).rev() {
        tail = (n as f64 / 2.0) / (x + tail);
    }
    FRAC_1_SQRT_PI / (x + tail)
}

/// `ln Γ(k + 1/2) − ln Γ(k)`, accurate for very large `k`.
pub fn ln_gamma_half_shift(k: f64) -> f64 {
    if k > 1.0e3 {
        let k2 = k * k;
        0.5 * k.ln() - 1.0 / (8.0 * k) + 1.0 / (192.0 * k2 * k) + 1.0 / (640.0 * k2 * k2 * k)
    } else {
        ln_gamma(k + 0.5) - ln_gamma(k)
    }
}

/// Density of a Gaussian(`mu`, `sigma`) convolved with an exponential of rate `lambda`
/// supported on `[0, inf)` (exponentially modified Gaussian).
pub fn exgauss_pdf(x: f64, mu: f64, sigma: f64, lambda: f64) -> f64 {
    let z = (mu + lambda * sigma * sigma - x) / (std::f64::consts::SQRT_2 * sigma);
    if z < 0.0 {
        let expo = lambda * (mu - x) + 0.5 * lambda * lambda * sigma * sigma;
        0.5 * lambda * expo.exp() * erfc(z)
    } else {
        let d = (x - mu) / sigma;
        0.5 * lambda * (-0.5 * d * d).exp() * erfcx(z)
    }
}

pub fn gauss_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let d = (x - mu) / sigma;
    (-0.5 * d * d).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}
