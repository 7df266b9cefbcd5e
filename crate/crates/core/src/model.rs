//! Analytic electron-photon scattering model.
//!
//! Photon number per electron follows a Poisson law with mean `g0^2`. When the
//! coupling fluctuates from electron to electron, `G = g0^2` is drawn from a Gamma
//! law whose first two moments of `g0` match the requested mean and standard
//! deviation (so `g0` itself is Nakagami distributed). The resulting photon-number
//! distribution is negative binomial.
//!
//! The spectrum model convolves a Gaussian zero-loss peak with the cascaded sideband
//! comb and an independent exponential continuum channel. All functions here are
//! pure and are used both by the simulator and as oracles for the estimators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::{exgauss_pdf, gauss_pdf, ln_gamma_half_shift};

pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Below this relative spread the coupling is treated as fixed.
const FIXED_COUPLING_REL_STD: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub mean_g0: f64,
    /// Zero means a fixed coupling constant.
    pub std_g0: f64,
}

/// Gamma law of `G = g0^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaLaw {
    pub shape: f64,
    pub scale: f64,
}

impl CouplingSpec {
    pub fn fixed(g0: f64) -> Self {
        Self {
            mean_g0: g0,
            std_g0: 0.0,
        }
    }

    pub fn new(mean_g0: f64, std_g0: f64) -> Result<Self> {
        let spec = Self { mean_g0, std_g0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_g0.is_finite() && self.mean_g0 >= 0.0) {
            return Err(invalid(
                "mean_g0",
                format!("must be >= 0, got {}", self.mean_g0),
            ));
        }
        if !(self.std_g0.is_finite() && self.std_g0 >= 0.0) {
            return Err(invalid(
                "std_g0",
                format!("must be >= 0, got {}", self.std_g0),
            ));
        }
        if self.mean_g0 == 0.0 && self.std_g0 > 0.0 {
            return Err(invalid("std_g0", "a spread needs a positive mean coupling"));
        }
        Ok(())
    }

    pub fn is_fixed(&self) -> bool {
        self.mean_g0 == 0.0 || self.std_g0 <= FIXED_COUPLING_REL_STD * self.mean_g0
    }

    /// Mean photon number per electron, `E[g0^2]`.
    pub fn mean_photon_number(&self) -> f64 {
        self.mean_g0 * self.mean_g0 + self.std_g0 * self.std_g0
    }

    /// The Gamma law of `G`, or `None` for a fixed coupling.
    pub fn gamma_law(&self) -> Option<GammaLaw> {
        if self.is_fixed() {
            return None;
        }
        let omega = self.mean_photon_number();
        let ratio = self.mean_g0 * self.mean_g0 / omega;
        let shape = nakagami_shape(ratio);
        Some(GammaLaw {
            shape,
            scale: omega / shape,
        })
    }
}

/// Solves `Γ(k+1/2)^2 / (k Γ(k)^2) = ratio` for the shape `k`; `ratio` in (0, 1).
fn nakagami_shape(ratio: f64) -> f64 {
    let target = ratio.ln();
    let f = |ln_k: f64| {
        let k = ln_k.exp();
        2.0 * ln_gamma_half_shift(k) - ln_k - target
    };
    let (mut lo, mut hi) = (-40.0_f64, 60.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn coupling_from_gamma(shape: f64, scale: f64) -> CouplingSpec {
    let omega = shape * scale;
    let mean = ln_gamma_half_shift(shape).exp() * scale.sqrt();
    let std = (omega - mean * mean).max(0.0).sqrt();
    CouplingSpec {
        mean_g0: mean,
        std_g0: std,
    }
}

/// Probabilities of losing `m = 0..=m_max` photon quanta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandPopulations {
    pub p: Vec<f64>,
}

impl SidebandPopulations {
    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    /// Probability mass beyond `m_max`.
    pub fn tail_mass(&self) -> f64 {
        (1.0 - self.total()).max(0.0)
    }

    pub fn get(&self, m: usize) -> f64 {
        self.p.get(m).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

pub fn sideband_populations(g0: f64, m_max: usize) -> Result<SidebandPopulations> {
    if !(g0.is_finite() && g0 >= 0.0) {
        return Err(invalid("g0", format!("must be >= 0, got {g0}")));
    }
    let lambda = g0 * g0;
    let mut p = Vec::with_capacity(m_max + 1);
    let mut term = (-lambda).exp();
    for m in 0..=m_max {
        p.push(term);
        term *= lambda / (m + 1) as f64;
    }
    Ok(SidebandPopulations { p })
}

/// Populations averaged over the coupling distribution (negative binomial).
pub fn mixed_sideband_populations(
    coupling: &CouplingSpec,
    m_max: usize,
) -> Result<SidebandPopulations> {
    coupling.validate()?;
    let Some(law) = coupling.gamma_law() else {
        return sideband_populations(coupling.mean_g0, m_max);
    };
    let GammaLaw { shape, scale } = law;
    let x = scale / (1.0 + scale);
    let mut p = Vec::with_capacity(m_max + 1);
    let mut term = (-shape * scale.ln_1p()).exp();
    for m in 0..=m_max {
        p.push(term);
        term *= (shape + m as f64) / (m + 1) as f64 * x;
    }
    Ok(SidebandPopulations { p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandFit {
    pub coupling: CouplingSpec,
    /// Set when the ratios are narrower than Poisson; the fit falls back to a
    /// fixed coupling.
    pub sub_poissonian: bool,
}

/// Recovers `(mean_g0, std_g0)` from the first three sideband populations.
///
/// For the negative binomial, `p1/p0 = k x` and `2 p2/p1 = (k + 1) x` with
/// `x = θ/(1+θ)`, so the two ratios determine the Gamma law exactly.
pub fn fit_coupling_from_sidebands(p0: f64, p1: f64, p2: f64) -> Result<SidebandFit> {
    if !(p0 > 0.0 && p0.is_finite()) {
        return Err(invalid("p0", format!("must be > 0, got {p0}")));
    }
    if !(p1 >= 0.0 && p1.is_finite()) {
        return Err(invalid("p1", format!("must be >= 0, got {p1}")));
    }
    if !(p2 >= 0.0 && p2.is_finite()) {
        return Err(invalid("p2", format!("must be >= 0, got {p2}")));
    }
    if p1 == 0.0 {
        return Ok(SidebandFit {
            coupling: CouplingSpec::fixed(0.0),
            sub_poissonian: p2 > 0.0,
        });
    }
    let r1 = p1 / p0;
    let r2 = p2 / p1;
    let x = 2.0 * r2 - r1;
    if x <= 1e-12 * r1 {
        return Ok(SidebandFit {
            coupling: CouplingSpec::fixed(r1.sqrt()),
            sub_poissonian: x < -1e-12 * r1,
        });
    }
    if x >= 1.0 {
        return Err(invalid(
            "p2",
            "sideband ratios imply a non-normalizable photon distribution",
        ));
    }
    let shape = r1 / x;
    let scale = x / (1.0 - x);
    Ok(SidebandFit {
        coupling: coupling_from_gamma(shape, scale),
        sub_poissonian: false,
    })
}

/// Zero-delay bunching `1 + 1/(I τ_bin)` of photons from Poisson-numbered
/// multi-photon electron events.
pub fn predicted_bunching(electron_rate: f64, bin_width: f64) -> Result<f64> {
    if !(electron_rate > 0.0) {
        return Err(invalid("electron_rate", "must be > 0"));
    }
    if !(bin_width > 0.0) {
        return Err(invalid("bin_width", "must be > 0"));
    }
    Ok(1.0 + 1.0 / (electron_rate * bin_width))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    /// Gaussian sigma of the zero-loss peak, eV.
    pub zlp_sigma: f64,
    /// Photon energy, eV.
    pub photon_energy: f64,
    pub coupling: CouplingSpec,
    pub continuum_prob: f64,
    /// Decay constant of the continuum, eV.
    pub continuum_decay: f64,
    /// FWHM of the per-photon energy spread, eV.
    pub pm_bandwidth: f64,
}

impl SpectrumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.zlp_sigma > 0.0 && self.zlp_sigma.is_finite()) {
            return Err(invalid("zlp_sigma", "must be > 0"));
        }
        if !(self.photon_energy > 0.0 && self.photon_energy.is_finite()) {
            return Err(invalid("photon_energy", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.continuum_prob) {
            return Err(invalid("continuum_prob", "must lie in [0, 1]"));
        }
        if !(self.continuum_decay > 0.0 && self.continuum_decay.is_finite()) {
            return Err(invalid("continuum_decay", "must be > 0"));
        }
        if !(self.pm_bandwidth >= 0.0 && self.pm_bandwidth.is_finite()) {
            return Err(invalid("pm_bandwidth", "must be >= 0"));
        }
        self.coupling.validate()
    }

    pub fn pm_sigma(&self) -> f64 {
        self.pm_bandwidth / FWHM_PER_SIGMA
    }
}

/// Sideband orders kept so the discarded mass is below `1e-13`.
fn populations_for_model(coupling: &CouplingSpec) -> Result<SidebandPopulations> {
    let mut m_max = 8;
    loop {
        let pops = mixed_sideband_populations(coupling, m_max)?;
        if pops.tail_mass() < 1e-13 || m_max >= 400 {
            return Ok(pops);
        }
        m_max *= 2;
    }
}

/// Unnormalized density of sideband order `m` with the continuum channel applied.
fn order_density(x: f64, m: usize, params: &SpectrumParams) -> f64 {
    let mu = m as f64 * params.photon_energy;
    let pm = params.pm_sigma();
    let s = (params.zlp_sigma * params.zlp_sigma + m as f64 * pm * pm).sqrt();
    let q = params.continuum_prob;
    let mut v = 0.0;
    if q < 1.0 {
        v += (1.0 - q) * gauss_pdf(x, mu, s);
    }
    if q > 0.0 {
        v += q * exgauss_pdf(x, mu, s, 1.0 / params.continuum_decay);
    }
    v
}

fn check_grid(grid: &[f64], zlp_sigma: f64) -> Result<f64> {
    if grid.len() < 2 {
        return Err(invalid("grid", "needs at least two points"));
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(invalid("grid", "must be strictly increasing"));
    }
    for w in grid.windows(2) {
        let d = w[1] - w[0];
        if !(d > 0.0) || (d - step).abs() > 1e-6 * step {
            return Err(invalid(
                "grid",
                "must be strictly increasing with uniform spacing",
            ));
        }
    }
    if step > zlp_sigma / 4.0 + 1e-12 {
        return Err(invalid(
            "grid",
            format!(
                "spacing {step} eV is coarser than zlp_sigma/4 = {}",
                zlp_sigma / 4.0
            ),
        ));
    }
    Ok(step)
}

/// Electron energy-loss density on `grid`, normalized so that its Riemann sum
/// over the grid equals one.
pub fn spectrum_model(params: &SpectrumParams, grid: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    let step = check_grid(grid, params.zlp_sigma)?;
    let pops = populations_for_model(&params.coupling)?;
    let mut out: Vec<f64> = grid
        .iter()
        .map(|&x| {
            pops.p
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(m, &w)| w * order_density(x, m, params))
                .sum()
        })
        .collect();
    let norm: f64 = out.iter().sum::<f64>() * step;
    if !(norm > 0.0) {
        return Err(invalid("grid", "model has no support on the grid"));
    }
    for v in &mut out {
        *v /= norm;
    }
    Ok(out)
}

/// Histogram on a uniform energy axis; bin `i` covers `[start + i w, start + (i+1) w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyHistogram {
    pub start: f64,
    pub width: f64,
    pub counts: Vec<f64>,
}

impl EnergyHistogram {
    pub fn new(start: f64, width: f64, bins: usize) -> Self {
        Self {
            start,
            width,
            counts: vec![0.0; bins],
        }
    }

    pub fn from_energies<I: IntoIterator<Item = f64>>(
        start: f64,
        width: f64,
        bins: usize,
        energies: I,
    ) -> Self {
        let mut h = Self::new(start, width, bins);
        for e in energies {
            h.fill(e);
        }
        h
    }

    pub fn fill(&mut self, e: f64) {
        let idx = ((e - self.start) / self.width).floor();
        if idx >= 0.0 && (idx as usize) < self.counts.len() {
            self.counts[idx as usize] += 1.0;
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|i| self.start + (i as f64 + 0.5) * self.width)
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit {
    pub params: SpectrumParams,
    /// Normalized fitted sideband areas.
    pub populations: SidebandPopulations,
    pub reduced_chi2: f64,
    pub iterations: usize,
    pub sub_poissonian: bool,
}

// The phase-matching width enters as a variance so the gradient survives at zero.
const SHAPE_PARAMS: usize = 5;

struct FitProblem<'a> {
    x: Vec<f64>,
    y: Vec<f64>,
    inv_sigma: Vec<f64>,
    orders: usize,
    template: &'a SpectrumParams,
}

impl FitProblem<'_> {
    fn unpack(&self, theta: &[f64]) -> SpectrumParams {
        SpectrumParams {
            zlp_sigma: theta[0],
            photon_energy: theta[1],
            pm_bandwidth: theta[2].max(0.0).sqrt() * FWHM_PER_SIGMA,
            continuum_prob: theta[3],
            continuum_decay: theta[4],
            ..*self.template
        }
    }

    fn clamp(&self, theta: &mut [f64]) {
        theta[0] = theta[0].clamp(1e-3, 10.0);
        theta[1] = theta[1].clamp(1e-3, 100.0);
        theta[2] = theta[2].clamp(0.0, 1.0);
        theta[3] = theta[3].clamp(0.0, 1.0);
        // A tail shorter than the zero-loss width is indistinguishable from a
        // shifted peak and trades off against sideband broadening.
        theta[4] = theta[4].clamp(theta[0], 100.0);
        for a in &mut theta[SHAPE_PARAMS..] {
            *a = a.max(0.0);
        }
    }

    fn residuals(&self, theta: &[f64]) -> DVector<f64> {
        let params = self.unpack(theta);
        let areas = &theta[SHAPE_PARAMS..];
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().enumerate().map(|(i, &x)| {
                let model: f64 = (0..self.orders)
                    .map(|m| areas[m] * order_density(x, m, &params))
                    .sum();
                (model - self.y[i]) * self.inv_sigma[i]
            }),
        )
    }

    fn jacobian(&self, theta: &[f64], r0: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(r0.len(), theta.len());
        let mut probe = theta.to_vec();
        for j in 0..theta.len() {
            let h = 1e-6 * theta[j].abs().max(1e-3);
            // Step away from the bound for parameters clamped at zero.
            let h = if j == 3 && theta[j] + h > 1.0 { -h } else { h };
            probe[j] = theta[j] + h;
            let r = self.residuals(&probe);
            jac.set_column(j, &((r - r0) / h));
            probe[j] = theta[j];
        }
        jac
    }
}

/// Damped least-squares fit of [`spectrum_model`] to a measured loss histogram.
///
/// Sideband areas are free parameters; the coupling is then recovered from the
/// first three areas with [`fit_coupling_from_sidebands`].
/// Damped Gauss-Newton from `theta`; returns the parameters, chi-square and
/// iteration count at convergence.
fn levenberg_marquardt(
    problem: &FitProblem<'_>,
    mut theta: Vec<f64>,
) -> Result<(Vec<f64>, f64, usize)> {
    let mut r = problem.residuals(&theta);
    let mut cost = r.norm_squared();
    let mut damping = 1e-3;
    let max_iter = 300;
    let mut converged = false;
    let mut stalled = 0;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let jac = problem.jacobian(&theta, &r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut accepted = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for d in 0..lhs.nrows() {
                lhs[(d, d)] += damping * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&grad)) else {
                damping *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            problem.clamp(&mut trial);
            let r_trial = problem.residuals(&trial);
            let cost_trial = r_trial.norm_squared();
            if cost_trial <= cost {
                let rel_step = theta
                    .iter()
                    .zip(&trial)
                    .map(|(a, b)| ((a - b) / a.abs().max(1e-6)).abs())
                    .fold(0.0, f64::max);
                let drop = cost - cost_trial;
                let rel_cost = drop / cost.max(f64::MIN_POSITIVE);
                stalled = if drop < 1e-3 { stalled + 1 } else { 0 };
                theta = trial;
                r = r_trial;
                cost = cost_trial;
                damping = (damping / 3.0).max(1e-12);
                accepted = true;
                // Residuals are in units of sigma: repeated chi-square changes far
                // below one no longer move any parameter by a meaningful amount.
                if rel_step < 1e-8 || rel_cost < 1e-10 || stalled >= 3 {
                    converged = true;
                }
                break;
            }
            damping *= 4.0;
        }
        if !accepted || converged {
            // A step that cannot lower the cost at any damping means we sit on
            // the minimum to numerical precision.
            converged = true;
            break;
        }
    }
    if !converged {
        let dof = (problem.x.len() as f64 - theta.len() as f64).max(1.0);
        return Err(Error::FitFailed {
            iterations,
            residual: cost / dof,
        });
    }
    Ok((theta, cost, iterations))
}

pub fn fit_spectrum(histogram: &EnergyHistogram, init: &SpectrumParams) -> Result<SpectrumFit> {
    init.validate()?;
    if histogram
        .counts
        .iter()
        .any(|&c| !(c >= 0.0 && c.is_finite()))
    {
        return Err(invalid(
            "histogram",
            "counts must be finite and non-negative",
        ));
    }
    let total = histogram.total();
    if !(total > 0.0) {
        return Err(invalid("histogram", "is empty"));
    }
    let x = histogram.centers();
    let e_max = x.last().copied().unwrap_or(0.0);
    if e_max < 2.5 * init.photon_energy {
        return Err(invalid(
            "histogram",
            "energy range must cover at least three sidebands",
        ));
    }
    let orders = ((e_max / init.photon_energy).floor() as usize + 1).clamp(3, 7);
    let norm = total * histogram.width;
    let y: Vec<f64> = histogram.counts.iter().map(|c| c / norm).collect();
    let inv_sigma: Vec<f64> = histogram
        .counts
        .iter()
        .map(|&c| norm / c.max(1.0).sqrt())
        .collect();
    let problem = FitProblem {
        x,
        y,
        inv_sigma,
        orders,
        template: init,
    };

    let pops = mixed_sideband_populations(&init.coupling, orders - 1)?;
    // A short continuum tail can mimic sideband broadening, which gives the
    // cost a second basin; restart from a few tail and width seeds and keep
    // the lowest chi-square.
    let decays = [init.continuum_decay, 0.5, 1.0, 2.0];
    // Second area seed: histogram mass within half a photon energy of each order.
    let mut measured = vec![0.0; orders];
    for (&x, &c) in problem.x.iter().zip(&histogram.counts) {
        let m = (x / init.photon_energy).round();
        if m >= 0.0 && (m as usize) < orders {
            measured[m as usize] += c / total;
        }
    }
    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    let mut last_failure = None;
    for areas in [&pops.p, &measured] {
        for (k, &decay) in decays.iter().enumerate() {
            for pm_var in [init.pm_sigma().powi(2), 0.0] {
                if k > 0 && pm_var > 0.0 && decay == init.continuum_decay {
                    continue;
                }
                let mut theta = vec![
                    init.zlp_sigma,
                    init.photon_energy,
                    pm_var,
                    init.continuum_prob.max(0.02),
                    decay,
                ];
                if k == 0 && pm_var == init.pm_sigma().powi(2) {
                    theta[3] = init.continuum_prob;
                }
                theta.extend(areas.iter().copied());
                problem.clamp(&mut theta);
                match levenberg_marquardt(&problem, theta) {
                    Ok((theta, cost, it)) => {
                        if best.as_ref().is_none_or(|b| cost < b.1) {
                            best = Some((theta, cost, it));
                        }
                    }
                    Err(e) => last_failure = Some(e),
                }
            }
        }
    }
    let Some((theta, cost, iterations)) = best else {
        return Err(last_failure.expect("at least one start ran"));
    };
    let dof = (problem.x.len() as f64 - theta.len() as f64).max(1.0);
    let reduced_chi2 = cost / dof;

    let areas = &theta[SHAPE_PARAMS..];
    let area_sum: f64 = areas.iter().sum();
    if !(area_sum > 0.0) {
        return Err(Error::FitFailed {
            iterations,
            residual: reduced_chi2,
        });
    }
    let populations = SidebandPopulations {
        p: areas.iter().map(|a| a / area_sum).collect(),
    };
    let sideband =
        fit_coupling_from_sidebands(populations.get(0), populations.get(1), populations.get(2))?;
    let mut params = problem.unpack(&theta);
    params.coupling = sideband.coupling;
    Ok(SpectrumFit {
        params,
        populations,
        reduced_chi2,
        iterations,
        sub_poissonian: sideband.sub_poissonian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_like() -> SpectrumParams {
        SpectrumParams {
            zlp_sigma: 0.26,
            photon_energy: 0.9,
            coupling: CouplingSpec::fixed(0.32),
            continuum_prob: 0.15,
            continuum_decay: 0.8,
            pm_bandwidth: 0.065,
        }
    }

    #[test]
    fn zero_coupling_is_identity() {
        let p = sideband_populations(0.0, 3).unwrap();
        assert_eq!(p.p, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn poisson_values() {
        let p = sideband_populations(0.5, 2).unwrap();
        let expected = [
            0.778_800_783_071_404_9,
            0.194_700_195_767_851_2,
            0.024_337_524_470_981_4,
        ];
        for (a, b) in p.p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        let q = sideband_populations(0.32, 1).unwrap();
        assert!((q.p[1] / q.p[0] - 0.1024).abs() < 1e-14);
    }

    #[test]
    fn poisson_ratio_identity() {
        for &g0 in &[0.05, 0.32, 1.0, 2.7] {
            let p = sideband_populations(g0, 12).unwrap();
            for m in 0..12 {
                let lhs = p.p[m + 1] / p.p[m] * (m + 1) as f64;
                assert!((lhs - g0 * g0).abs() < 1e-12 * g0 * g0);
            }
        }
    }

    #[test]
    fn rejects_negative_inputs() {
        assert!(sideband_populations(-0.1, 2).is_err());
        assert!(CouplingSpec::new(0.3, -0.1).is_err());
        assert!(predicted_bunching(0.0, 1.0).is_err());
        assert!(predicted_bunching(1.0, -1.0).is_err());
    }

    #[test]
    fn degenerate_mixture_matches_poisson() {
        let a = mixed_sideband_populations(&CouplingSpec::fixed(0.5), 2).unwrap();
        let b = sideband_populations(0.5, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gamma_law_reproduces_moments() {
        let spec = CouplingSpec::new(0.32, 0.24).unwrap();
        let law = spec.gamma_law().unwrap();
        let back = coupling_from_gamma(law.shape, law.scale);
        assert!((back.mean_g0 - 0.32).abs() < 1e-12);
        assert!((back.std_g0 - 0.24).abs() < 1e-12);
    }

    #[test]
    fn tiny_spread_stays_continuous() {
        let spec = CouplingSpec::new(0.5, 1e-4).unwrap();
        let law = spec.gamma_law().unwrap();
        let back = coupling_from_gamma(law.shape, law.scale);
        assert!((back.std_g0 - 1e-4).abs() < 1e-8, "{}", back.std_g0);
    }

    #[test]
    fn mixture_is_normalized_and_super_poissonian() {
        let spec = CouplingSpec::new(0.32, 0.24).unwrap();
        let p = mixed_sideband_populations(&spec, 200).unwrap();
        assert!((p.total() - 1.0).abs() < 1e-12);
        let mean: f64 = p.p.iter().enumerate().map(|(m, v)| m as f64 * v).sum();
        let second: f64 =
            p.p.iter()
                .enumerate()
                .map(|(m, v)| (m * m) as f64 * v)
                .sum();
        assert!(second - mean * mean > mean);
        assert!((mean - spec.mean_photon_number()).abs() < 1e-12);
        assert!(p.p[2] * p.p[0] / (p.p[1] * p.p[1]) > 0.5);
    }

    #[test]
    fn coupling_fit_round_trips() {
        let pure = sideband_populations(0.5, 2).unwrap();
        let fit = fit_coupling_from_sidebands(pure.p[0], pure.p[1], pure.p[2]).unwrap();
        assert!((fit.coupling.mean_g0 - 0.5).abs() < 1e-9);
        assert!(fit.coupling.std_g0 < 1e-6);
        assert!(!fit.sub_poissonian);

        for &(mean, std) in &[(0.32, 0.24), (0.1, 0.02), (1.2, 0.9), (0.5, 0.001)] {
            let spec = CouplingSpec::new(mean, std).unwrap();
            let p = mixed_sideband_populations(&spec, 2).unwrap();
            let fit = fit_coupling_from_sidebands(p.p[0], p.p[1], p.p[2]).unwrap();
            assert!((fit.coupling.mean_g0 - mean).abs() < 1e-6, "{fit:?}");
            assert!((fit.coupling.std_g0 - std).abs() < 1e-6, "{fit:?}");
        }
    }

    #[test]
    fn sub_poissonian_ratios_are_flagged() {
        let fit = fit_coupling_from_sidebands(0.9, 0.09, 0.001).unwrap();
        assert!(fit.sub_poissonian);
        assert_eq!(fit.coupling.std_g0, 0.0);
        assert!((fit.coupling.mean_g0 - 0.1_f64.sqrt()).abs() < 1e-12);
        assert!(fit_coupling_from_sidebands(0.0, 0.1, 0.01).is_err());
    }

    #[test]
    fn bunching_law() {
        assert!((predicted_bunching(1e8, 1e-8).unwrap() - 2.0).abs() < 1e-12);
        assert!((predicted_bunching(1e30, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            predicted_bunching(1e8, 2e-8).unwrap(),
            predicted_bunching(2e8, 1e-8).unwrap()
        );
        let a = predicted_bunching(4e6, 1e-7).unwrap() - 1.0;
        let b = predicted_bunching(2e6, 1e-7).unwrap() - 1.0;
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize + 1;
        (0..n).map(|i| lo + i as f64 * step).collect()
    }

    #[test]
    fn spectrum_is_normalized() {
        let g = grid(-2.0, 6.0, 0.01);
        let s = spectrum_model(&paper_like(), &g).unwrap();
        let integral: f64 = s.iter().sum::<f64>() * 0.01;
        assert!((integral - 1.0).abs() < 1e-6);
        assert!(s.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn spectrum_rejects_coarse_or_irregular_grid() {
        let p = paper_like();
        assert!(spectrum_model(&p, &grid(-1.0, 3.0, 0.1)).is_err());
        let mut g = grid(-1.0, 3.0, 0.01);
        g[10] += 0.004;
        assert!(spectrum_model(&p, &g).is_err());
    }

    #[test]
    fn delta_comb_limit() {
        let step = 0.002;
        let params = SpectrumParams {
            zlp_sigma: 4.0 * step,
            photon_energy: 0.9,
            coupling: CouplingSpec::fixed(0.8),
            continuum_prob: 0.0,
            continuum_decay: 1.0,
            pm_bandwidth: 0.0,
        };
        let g = grid(-0.5, 4.5, step);
        let s = spectrum_model(&params, &g).unwrap();
        let pops = sideband_populations(0.8, 4).unwrap();
        for m in 0..4 {
            let c = m as f64 * 0.9;
            let w: f64 = g
                .iter()
                .zip(&s)
                .filter(|(x, _)| (*x - c).abs() < 0.2)
                .map(|(_, v)| v * step)
                .sum();
            assert!(
                (w - pops.p[m]).abs() < 1e-3,
                "order {m}: {w} vs {}",
                pops.p[m]
            );
        }
    }

    #[test]
    fn spectrum_refinement_invariance() {
        let p = paper_like();
        let coarse = grid(-2.0, 8.0, 0.02);
        let fine = grid(-2.0, 8.0, 0.01);
        let sc = spectrum_model(&p, &coarse).unwrap();
        let sf = spectrum_model(&p, &fine).unwrap();
        let peak = sf.iter().cloned().fold(0.0, f64::max);
        for (i, v) in sc.iter().enumerate() {
            let w = sf[2 * i];
            assert!((v - w).abs() < 1e-4 * peak, "{i}: {v} vs {w}");
        }
    }

    #[test]
    fn noise_free_fit_recovers_params() {
        let truth = SpectrumParams {
            coupling: CouplingSpec::new(0.32, 0.24).unwrap(),
            ..paper_like()
        };
        let width = 0.03;
        let start = -1.5;
        let bins = 200;
        let hist0 = EnergyHistogram::new(start, width, bins);
        let dense = spectrum_model(&truth, &hist0.centers()).unwrap();
        let hist = EnergyHistogram {
            counts: dense.iter().map(|v| v * 1e9 * width).collect(),
            ..hist0
        };
        let init = SpectrumParams {
            zlp_sigma: 0.3,
            photon_energy: 0.85,
            coupling: CouplingSpec::new(0.3, 0.1).unwrap(),
            continuum_prob: 0.1,
            continuum_decay: 1.0,
            pm_bandwidth: 0.05,
        };
        let fit = fit_spectrum(&hist, &init).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.params.zlp_sigma, truth.zlp_sigma) < 1e-4, "{fit:?}");
        assert!(
            rel(fit.params.photon_energy, truth.photon_energy) < 1e-4,
            "{fit:?}"
        );
        assert!(rel(fit.params.continuum_prob, truth.continuum_prob) < 1e-4);
        assert!(rel(fit.params.continuum_decay, truth.continuum_decay) < 1e-4);
        assert!(rel(fit.params.coupling.mean_g0, 0.32) < 1e-4, "{fit:?}");
        assert!(rel(fit.params.coupling.std_g0, 0.24) < 1e-4, "{fit:?}");
        assert!(
            rel(fit.params.pm_bandwidth, truth.pm_bandwidth) < 1e-2,
            "{fit:?}"
        );
    }

    #[test]
    fn fit_rejects_short_range() {
        let hist = EnergyHistogram {
            start: -0.5,
            width: 0.03,
            counts: vec![1.0; 40],
        };
        assert!(fit_spectrum(&hist, &paper_like()).is_err());
    }
}
