//! Model functions against independent numerical oracles, plus algebraic
//! properties checked over random inputs.

use fockherald::model::{
    fit_coupling_from_sidebands, mixed_sideband_populations, predicted_bunching,
    sideband_populations, spectrum_model, CouplingSpec, SpectrumParams,
};
use proptest::prelude::*;

fn poisson_oracle(g: f64, m: usize) -> f64 {
    // Product form, no factorial or power helpers shared with the library.
    (1..=m).fold((-g).exp(), |acc, j| acc * g / j as f64)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn gauss(x: f64, mu: f64, s: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn poisson_populations_match_product_oracle() {
    // Oracle values frozen from `poisson_oracle(0.25, m)`.
    let frozen = [
        0.778_800_783_071_404_9,
        0.194_700_195_767_851_2,
        0.024_337_524_470_981_4,
    ];
    let p = sideband_populations(0.5, 2).unwrap();
    for m in 0..3 {
        assert!((poisson_oracle(0.25, m) - frozen[m]).abs() < 1e-16);
        assert!((p.p[m] - frozen[m]).abs() < 1e-15);
    }
    let q = sideband_populations(0.32, 1).unwrap();
    assert!((q.p[1] / q.p[0] - 0.1024).abs() < 1e-14);
}

/// `p_m = E[exp(-G) G^m / m!]` under the Gamma law, integrated in `u = G^shape`
/// so the density singularity at zero disappears.
fn mixture_oracle(spec: &CouplingSpec, m: usize) -> f64 {
    let law = spec.gamma_law().expect("spread > 0");
    let (k, theta) = (law.shape, law.scale);
    let u_max = (80.0 * theta).powf(k);
    let norm = 1.0 / (k * libm::tgamma(k) * theta.powf(k));
    norm * simpson(
        |u| {
            let g = u.powf(1.0 / k);
            (-g / theta).exp() * poisson_oracle(g, m)
        },
        0.0,
        u_max,
        400_000,
    )
}

#[test]
fn mixture_matches_quadrature() {
    let spec = CouplingSpec::new(0.32, 0.24).unwrap();
    let p = mixed_sideband_populations(&spec, 2).unwrap();
    // Frozen from `mixture_oracle`.
    let frozen = [
        0.870_178_258_029_9,
        0.105_827_055_828_9,
        0.019_129_260_368_8,
    ];
    for m in 0..3 {
        let oracle = mixture_oracle(&spec, m);
        assert!(
            (oracle - frozen[m]).abs() < 1e-12,
            "oracle m={m}: {oracle:.13}"
        );
        assert!(
            (p.p[m] - oracle).abs() < 1e-6,
            "m={m}: {} vs {oracle}",
            p.p[m]
        );
    }
}

#[test]
fn gamma_law_reproduces_coupling_moments_by_quadrature() {
    let spec = CouplingSpec::new(0.32, 0.24).unwrap();
    let law = spec.gamma_law().unwrap();
    let (k, theta) = (law.shape, law.scale);
    let u_max = (80.0 * theta).powf(k);
    let norm = 1.0 / (k * libm::tgamma(k) * theta.powf(k));
    let moment = |f: &dyn Fn(f64) -> f64| {
        norm * simpson(
            |u| {
                let g = u.powf(1.0 / k);
                (-g / theta).exp() * f(g)
            },
            0.0,
            u_max,
            400_000,
        )
    };
    let mean = moment(&|g: f64| g.sqrt());
    let second = moment(&|g: f64| g);
    let std = (second - mean * mean).sqrt();
    assert!((mean - 0.32).abs() < 1e-6, "{mean}");
    assert!((std - 0.24).abs() < 1e-6, "{std}");
}

#[test]
fn coupling_fit_inverts_the_mixture() {
    let p = mixed_sideband_populations(&CouplingSpec::new(0.32, 0.24).unwrap(), 2).unwrap();
    let fit = fit_coupling_from_sidebands(p.p[0], p.p[1], p.p[2]).unwrap();
    assert!((fit.coupling.mean_g0 - 0.32).abs() < 1e-3);
    assert!((fit.coupling.std_g0 - 0.24).abs() < 1e-3);
    let p = sideband_populations(0.5, 2).unwrap();
    let fit = fit_coupling_from_sidebands(p.p[0], p.p[1], p.p[2]).unwrap();
    assert!((fit.coupling.mean_g0 - 0.5).abs() < 1e-9 && fit.coupling.std_g0 < 1e-6);
}

#[test]
fn bunching_examples() {
    assert!((predicted_bunching(1e8, 1e-8).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(
        predicted_bunching(1e8, 2e-8).unwrap(),
        predicted_bunching(2e8, 1e-8).unwrap()
    );
    assert!((predicted_bunching(1e30, 1e-8).unwrap() - 1.0).abs() < 1e-12);
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize + 1;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

fn normalize(v: &mut [f64], step: f64) {
    let s: f64 = v.iter().sum::<f64>() * step;
    v.iter_mut().for_each(|x| *x /= s);
}

/// Direct convolution of the Gaussian zero-loss peak with each Gaussian
/// phase-matching order, integrated numerically point by point.
#[test]
fn spectrum_matches_brute_force_convolution() {
    let params = SpectrumParams {
        zlp_sigma: 0.26,
        photon_energy: 0.9,
        coupling: CouplingSpec::fixed(0.32),
        continuum_prob: 0.0,
        continuum_decay: 1.0,
        pm_bandwidth: 0.065,
    };
    let step = 0.03;
    let x = grid(-1.5, 5.0, step);
    let model = spectrum_model(&params, &x).unwrap();
    let pm = params.pm_bandwidth / 2.354_820_045_030_949;
    let mut oracle: Vec<f64> = x
        .iter()
        .map(|&xi| {
            (0..12)
                .map(|m| {
                    let w = poisson_oracle(0.32 * 0.32, m);
                    let mu = m as f64 * 0.9;
                    if m == 0 {
                        return w * gauss(xi, 0.0, 0.26);
                    }
                    let s = pm * (m as f64).sqrt();
                    w * simpson(
                        |y| gauss(xi - y, 0.0, 0.26) * gauss(y, mu, s),
                        mu - 14.0 * s,
                        mu + 14.0 * s,
                        4000,
                    )
                })
                .sum()
        })
        .collect();
    normalize(&mut oracle, step);
    let worst = model
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "max deviation {worst:e}");
}

/// Continuum channel: exponential loss convolved numerically on its support.
#[test]
fn continuum_matches_numerical_convolution() {
    let params = SpectrumParams {
        zlp_sigma: 0.255,
        photon_energy: 0.9,
        coupling: CouplingSpec::fixed(0.32),
        continuum_prob: 0.08,
        continuum_decay: 0.8,
        pm_bandwidth: 0.065,
    };
    let step = 0.03;
    let x = grid(-1.5, 5.0, step);
    let model = spectrum_model(&params, &x).unwrap();
    let pm = params.pm_bandwidth / 2.354_820_045_030_949;
    let q = params.continuum_prob;
    let lambda = 1.0 / params.continuum_decay;
    let mut oracle: Vec<f64> = x
        .iter()
        .map(|&xi| {
            (0..12)
                .map(|m| {
                    let mu = m as f64 * 0.9;
                    let s = (0.255f64.powi(2) + m as f64 * pm * pm).sqrt();
                    let tail = simpson(
                        |y| lambda * (-lambda * y).exp() * gauss(xi - y, mu, s),
                        0.0,
                        40.0,
                        200_000,
                    );
                    poisson_oracle(0.32 * 0.32, m) * ((1.0 - q) * gauss(xi, mu, s) + q * tail)
                })
                .sum()
        })
        .collect();
    normalize(&mut oracle, step);
    let worst = model
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "max deviation {worst:e}");
}

proptest! {
    #[test]
    fn poisson_ratio_identity(g0 in 0.01f64..3.0, m in 0usize..12) {
        let p = sideband_populations(g0, m + 1).unwrap();
        let lhs = p.p[m + 1] / p.p[m] * (m + 1) as f64;
        prop_assert!((lhs - g0 * g0).abs() <= 1e-12 * g0 * g0);
    }

    #[test]
    fn mixture_is_super_poissonian(mean in 0.05f64..1.5, rel in 0.05f64..1.2) {
        let spec = CouplingSpec::new(mean, mean * rel).unwrap();
        let p = mixed_sideband_populations(&spec, 2).unwrap();
        prop_assert!(p.p[2] * p.p[0] / (p.p[1] * p.p[1]) > 0.5);
    }

    #[test]
    fn coupling_fit_round_trip(mean in 0.05f64..1.2, rel in 0.0f64..1.0) {
        let spec = CouplingSpec::new(mean, mean * rel).unwrap();
        let p = mixed_sideband_populations(&spec, 2).unwrap();
        let fit = fit_coupling_from_sidebands(p.p[0], p.p[1], p.p[2]).unwrap();
        prop_assert!((fit.coupling.mean_g0 - mean).abs() < 1e-6, "{:?}", fit.coupling);
        prop_assert!((fit.coupling.std_g0 - mean * rel).abs() < 1e-6, "{:?}", fit.coupling);
    }

    #[test]
    fn bunching_excess_is_inverse_in_rate(rate in 1e3f64..1e10, bin in 1e-10f64..1e-6) {
        let a = predicted_bunching(rate, bin).unwrap() - 1.0;
        let b = predicted_bunching(rate / 2.0, bin).unwrap() - 1.0;
        prop_assert!((b / a - 2.0).abs() < 1e-9);
    }

    #[test]
    fn mixture_populations_sum_to_one(mean in 0.0f64..2.0, rel in 0.0f64..1.0) {
        let spec = CouplingSpec::new(mean, if mean > 0.0 { mean * rel } else { 0.0 }).unwrap();
        // Spreads near the mean give shapes well below one and heavy tails.
        let p = mixed_sideband_populations(&spec, 2000).unwrap();
        prop_assert!((p.total() - 1.0).abs() < 1e-9);
    }
}
