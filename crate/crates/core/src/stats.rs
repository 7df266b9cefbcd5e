//! Correlation estimators with counting-statistics uncertainties.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::correlate::{Axis, CoincidenceCube, TripleRecord};
use crate::error::{invalid, Error, Result};
use crate::model::sideband_populations;
use crate::simgen::{seconds_to_ps, Channel};

/// Upper limit of a Poisson mean after observing zero counts, 95 % confidence.
pub const POISSON_ZERO_UPPER_95: f64 = 2.995_732_273_553_991;

fn check_sorted(name: &'static str, t: &[i64]) -> Result<()> {
    match t.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(invalid(name, format!("not time-sorted at index {}", i + 1))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    /// Bin centers, ps.
    pub tau: Vec<f64>,
    pub g2: Vec<f64>,
    pub stderr: Vec<f64>,
    pub counts: Vec<f64>,
    /// `|τ|` range used for normalization, ps; `None` when normalized by rates.
    pub baseline_window: Option<(f64, f64)>,
    /// Counts per bin that corresponds to `g2 = 1`.
    pub normalization: f64,
}

impl CorrelationCurve {
    /// Value in the bin containing `tau` (ps).
    pub fn at(&self, tau: f64) -> Option<(f64, f64)> {
        let w = self.tau.get(1).zip(self.tau.first()).map(|(b, a)| b - a)?;
        let i = ((tau - self.tau[0]) / w + 0.5).floor();
        (i >= 0.0 && (i as usize) < self.tau.len())
            .then(|| (self.g2[i as usize], self.stderr[i as usize]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Options {
    pub bin: f64,
    pub span: f64,
    /// `|τ|` range in seconds whose mean defines `g2 = 1`.
    pub baseline: (f64, f64),
    /// Measurement time for the rate fallback; defaults to the stream extent.
    pub duration: Option<f64>,
}

impl G2Options {
    pub fn new(bin: f64, span: f64) -> Self {
        Self {
            bin,
            span,
            baseline: (200e-9, 1e-6),
            duration: None,
        }
    }
}

/// Photon cross-correlation `g2(τ = t_B - t_A)` with bins centered on zero.
pub fn g2_unheralded(a: &[i64], b: &[i64], opts: &G2Options) -> Result<CorrelationCurve> {
    check_sorted("photons_a", a)?;
    check_sorted("photons_b", b)?;
    if !(opts.bin > 0.0 && opts.span >= opts.bin) {
        return Err(invalid("span", "needs bin > 0 and span >= bin"));
    }
    let w = seconds_to_ps(opts.bin).max(1);
    let (base_lo, base_hi) = (
        seconds_to_ps(opts.baseline.0),
        seconds_to_ps(opts.baseline.1),
    );
    let half = (seconds_to_ps(opts.span).max(base_hi) + w / 2) / w;
    let nbins = (2 * half + 1) as usize;
    let reach = half * w + w / 2;
    let mut counts = vec![0.0f64; nbins];
    let mut lo = 0usize;
    for &ta in a {
        while lo < b.len() && b[lo] < ta - reach {
            lo += 1;
        }
        let mut j = lo;
        while j < b.len() && b[j] < ta + reach {
            let d = b[j] - ta;
            let k = (d + half * w + w / 2).div_euclid(w);
            if (0..nbins as i64).contains(&k) {
                counts[k as usize] += 1.0;
            }
            j += 1;
        }
    }
    let centers: Vec<f64> = (0..nbins).map(|i| ((i as i64 - half) * w) as f64).collect();
    let base: Vec<usize> = (0..nbins)
        .filter(|&i| {
            let c = centers[i].abs();
            c >= base_lo as f64 && c <= base_hi as f64
        })
        .collect();
    let (norm, window) = if !base.is_empty() && base_hi > base_lo {
        let s: f64 = base.iter().map(|&i| counts[i]).sum();
        if s <= 0.0 {
            return Err(Error::Undefined(
                "no pair counts in the g2 baseline window".into(),
            ));
        }
        (
            s / base.len() as f64,
            Some((base_lo as f64, base_hi as f64)),
        )
    } else {
        let t = match opts.duration {
            Some(d) => d,
            None => {
                let first = a
                    .first()
                    .into_iter()
                    .chain(b.first())
                    .min()
                    .copied()
                    .unwrap_or(0);
                let last = a
                    .last()
                    .into_iter()
                    .chain(b.last())
                    .max()
                    .copied()
                    .unwrap_or(0);
                (last - first) as f64 * 1e-12
            }
        };
        let n = a.len() as f64 * b.len() as f64 * opts.bin / t;
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Undefined("accidental level is zero".into()));
        }
        (n, None)
    };
    let g2 = counts.iter().map(|c| c / norm).collect();
    let stderr = counts.iter().map(|c| c.max(1.0).sqrt() / norm).collect();
    Ok(CorrelationCurve {
        tau: centers,
        g2,
        stderr,
        counts,
        baseline_window: window,
        normalization: norm,
    })
}

/// Bins whose centers lie in `[lo, hi]`, rejecting an empty selection.
fn energy_bins(axis: &Axis, window: (f64, f64)) -> Result<Range<usize>> {
    let r = axis.range_bins(window.0, window.1);
    if r.is_empty() {
        Err(invalid("energy_window", "selects no energy bins"))
    } else {
        Ok(r)
    }
}

struct Marginals {
    n_e: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn marginals(cube: &CoincidenceCube, re: &Range<usize>) -> Marginals {
    let ax = cube.axes;
    Marginals {
        n_e: re.clone().map(|ie| cube.totals[ie] as f64).sum(),
        a: (0..ax.tau_a.bins)
            .map(|ia| re.clone().map(|ie| cube.pair_a(ia, ie) as f64).sum())
            .collect(),
        b: (0..ax.tau_b.bins)
            .map(|ib| re.clone().map(|ie| cube.pair_b(ib, ie) as f64).sum())
            .collect(),
    }
}

fn triple_sum(cube: &CoincidenceCube, ia: usize, ib: usize, re: &Range<usize>) -> f64 {
    re.clone().map(|ie| cube.at(ia, ib, ie) as f64).sum()
}

fn ratio_stderr(g: f64, parts: &[f64]) -> f64 {
    g * parts.iter().map(|n| 1.0 / n.max(1.0)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeraldedG2Surface {
    pub tau_a: Axis,
    pub tau_b: Axis,
    pub energy_window: (f64, f64),
    /// Row-major `[τ_A][τ_B]`; `None` where a marginal is empty.
    pub values: Vec<Option<f64>>,
    pub stderr: Vec<Option<f64>>,
}

impl HeraldedG2Surface {
    pub fn get(&self, ia: usize, ib: usize) -> Option<(f64, f64)> {
        let i = ia * self.tau_b.bins + ib;
        self.values[i].zip(self.stderr[i])
    }

    /// Value in the cell containing `(τ_A, τ_B)` in ps.
    pub fn at(&self, tau_a: f64, tau_b: f64) -> Option<(f64, f64)> {
        self.get(self.tau_a.index(tau_a)?, self.tau_b.index(tau_b)?)
    }
}

/// `g2_H = N_eAB N_e / (N_eA N_eB)` per delay cell after summing the energy window.
pub fn g2_heralded_surface(
    cube: &CoincidenceCube,
    window: (f64, f64),
) -> Result<HeraldedG2Surface> {
    let re = energy_bins(&cube.axes.energy, window)?;
    let m = marginals(cube, &re);
    let (na, nb) = (cube.axes.tau_a.bins, cube.axes.tau_b.bins);
    let mut values = Vec::with_capacity(na * nb);
    let mut stderr = Vec::with_capacity(na * nb);
    for ia in 0..na {
        for ib in 0..nb {
            let (pa, pb) = (m.a[ia], m.b[ib]);
            if pa == 0.0 || pb == 0.0 || m.n_e == 0.0 {
                values.push(None);
                stderr.push(None);
                continue;
            }
            let n = triple_sum(cube, ia, ib, &re);
            let g = n * m.n_e / (pa * pb);
            let unit = m.n_e / (pa * pb);
            values.push(Some(g));
            stderr.push(Some(if n > 0.0 {
                ratio_stderr(g, &[n, pa, pb, m.n_e])
            } else {
                unit
            }));
        }
    }
    Ok(HeraldedG2Surface {
        tau_a: cube.axes.tau_a,
        tau_b: cube.axes.tau_b,
        energy_window: window,
        values,
        stderr,
    })
}

/// Heralded correlation versus relative photon delay `τ = τ_A - τ_B`, averaged
/// over heralding delays `τ_A` in `herald` (ps, bin centers):
/// `g2(τ) = Σ N_eAB(τ_A, τ_A - τ) N_e / Σ N_eA(τ_A) N_eB(τ_A - τ)`.
pub fn g2_time_averaged(
    cube: &CoincidenceCube,
    window: (f64, f64),
    herald: (f64, f64),
) -> Result<CorrelationCurve> {
    let ax = cube.axes;
    if (ax.tau_a.width - ax.tau_b.width).abs() > 1e-9 * ax.tau_a.width {
        return Err(invalid("cube", "delay axes need equal bin widths"));
    }
    let re = energy_bins(&ax.energy, window)?;
    let ra = ax.tau_a.range_bins(herald.0, herald.1);
    if ra.is_empty() {
        return Err(invalid("herald", "selects no delay bins"));
    }
    let m = marginals(cube, &re);
    let nb = ax.tau_b.bins as isize;
    let ndiff = ax.tau_a.bins + ax.tau_b.bins - 1;
    let mut num = vec![0.0; ndiff];
    let mut den = vec![0.0; ndiff];
    for ia in ra {
        for ib in 0..ax.tau_b.bins {
            let k = (ia as isize - ib as isize + nb - 1) as usize;
            num[k] += triple_sum(cube, ia, ib, &re);
            den[k] += m.a[ia] * m.b[ib];
        }
    }
    let w = ax.tau_a.width;
    let offset = ax.tau_a.start - ax.tau_b.start;
    let mut tau = Vec::new();
    let mut g2 = Vec::new();
    let mut stderr = Vec::new();
    let mut counts = Vec::new();
    for k in 0..ndiff {
        if den[k] == 0.0 {
            continue;
        }
        let scale = m.n_e / den[k];
        tau.push(offset + (k as f64 - (nb - 1) as f64) * w);
        g2.push(num[k] * scale);
        stderr.push(num[k].max(1.0).sqrt() * scale);
        counts.push(num[k]);
    }
    if tau.is_empty() {
        return Err(Error::Undefined(
            "no heralded pairs in the selection".into(),
        ));
    }
    Ok(CorrelationCurve {
        tau,
        g2,
        stderr,
        counts,
        baseline_window: None,
        normalization: f64::NAN,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteG2 {
    pub g2: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Pair counts `N_eAB[q]`, symmetrized for `q > 0`.
    pub pairs: Vec<f64>,
    pub heralds: usize,
    pub heralds_a: usize,
    pub heralds_b: usize,
}

impl DiscreteG2 {
    /// Mean and standard error of `g2[q]` over `q` in `range`.
    pub fn mean_over(&self, range: Range<usize>) -> (f64, f64) {
        let sel: Vec<usize> = range.filter(|&q| q < self.g2.len()).collect();
        let n = sel.len() as f64;
        let mean = sel.iter().map(|&q| self.g2[q]).sum::<f64>() / n;
        let var = sel.iter().map(|&q| self.stderr[q].powi(2)).sum::<f64>() / (n * n);
        (mean, var.sqrt())
    }
}

/// Correlation between photon detections heralded by electrons `q` heralds apart.
///
/// Heralds are the records in `window`, in time order. Herald `i` counts as `A_i`
/// when it owns a true A coincidence with `|τ| <= coincidence_window`.
/// `g2[q] = N_eAB[q] / ((N_e - q) p_A p_B)` with `p_X = N_eX / N_e`.
pub fn g2_discrete(
    records: &[TripleRecord],
    window: Option<(f64, f64)>,
    coincidence_window: f64,
    q_max: usize,
) -> Result<DiscreteG2> {
    if let Some(i) = records.windows(2).position(|w| w[1].t_el < w[0].t_el) {
        return Err(invalid(
            "records",
            format!("not time-sorted at index {}", i + 1),
        ));
    }
    let cw = seconds_to_ps(coincidence_window);
    let hit = |r: &TripleRecord, c: Channel| r.tau(c, true).is_some_and(|t| (t as i64).abs() <= cw);
    let flags: Vec<(bool, bool)> = records
        .iter()
        .filter(|r| {
            window.is_none_or(|(lo, hi)| (r.energy as f64) >= lo && (r.energy as f64) <= hi)
        })
        .map(|r| (hit(r, Channel::A), hit(r, Channel::B)))
        .collect();
    let n = flags.len();
    let na = flags.iter().filter(|f| f.0).count();
    let nb = flags.iter().filter(|f| f.1).count();
    if na == 0 || nb == 0 {
        return Err(Error::Undefined(format!(
            "no heralded coincidences on one channel (A: {na}, B: {nb})"
        )));
    }
    let (pa, pb) = (na as f64 / n as f64, nb as f64 / n as f64);
    let mut g2 = Vec::with_capacity(q_max + 1);
    let mut stderr = Vec::with_capacity(q_max + 1);
    let mut pairs = Vec::with_capacity(q_max + 1);
    for q in 0..=q_max.min(n.saturating_sub(1)) {
        let mut c = 0.0;
        for i in 0..n - q {
            let (x, y) = (flags[i], flags[i + q]);
            if q == 0 {
                c += (x.0 && x.1) as u8 as f64;
            } else {
                c += 0.5 * ((x.0 && y.1) as u8 as f64 + (x.1 && y.0) as u8 as f64);
            }
        }
        let expected = (n - q) as f64 * pa * pb;
        let g = c / expected;
        // Symmetrized counts are sums of two near-independent halves.
        let var_counts = if q == 0 { c } else { 0.5 * c };
        g2.push(g);
        stderr.push(var_counts.max(1.0).sqrt() / expected);
        pairs.push(c);
    }
    Ok(DiscreteG2 {
        g2,
        stderr,
        pairs,
        heralds: n,
        heralds_a: na,
        heralds_b: nb,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Car {
    /// Infinite when no accidentals were observed.
    pub car: f64,
    pub stderr: f64,
    pub signal: f64,
    /// Accidentals scaled to the signal width.
    pub accidentals: f64,
    pub accidentals_err: f64,
    /// `(S - A) / sqrt(S + σ_A^2)`.
    pub significance: f64,
    pub infinite: bool,
    /// With zero accidentals: CAR computed from the 95 % upper accidental limit.
    pub lower_bound: Option<f64>,
}

/// Coincidence-to-accidental ratio `(S - A) / A` from a delay histogram.
pub fn car(hist: &[f64], signal: Range<usize>, background: &[Range<usize>]) -> Result<Car> {
    let in_range = |r: &Range<usize>| r.start < r.end && r.end <= hist.len();
    if !in_range(&signal) {
        return Err(invalid("signal_window", "empty or outside the histogram"));
    }
    if background.is_empty() || !background.iter().all(in_range) {
        return Err(invalid(
            "background_windows",
            "empty or outside the histogram",
        ));
    }
    let mut all: Vec<&Range<usize>> = background.iter().chain(std::iter::once(&signal)).collect();
    all.sort_by_key(|r| r.start);
    if all.windows(2).any(|w| w[1].start < w[0].end) {
        return Err(invalid("background_windows", "windows must be disjoint"));
    }
    let s: f64 = hist[signal.clone()].iter().sum();
    let bg: f64 = background
        .iter()
        .map(|r| hist[r.clone()].iter().sum::<f64>())
        .sum();
    let bg_bins: usize = background.iter().map(|r| r.len()).sum();
    let scale = signal.len() as f64 / bg_bins as f64;
    let a = bg * scale;
    let sa = bg.sqrt() * scale;
    if bg == 0.0 {
        let a_up = POISSON_ZERO_UPPER_95 * scale;
        return Ok(Car {
            car: f64::INFINITY,
            stderr: f64::INFINITY,
            signal: s,
            accidentals: 0.0,
            accidentals_err: a_up,
            significance: (s - a_up) / (s + a_up * a_up).sqrt(),
            infinite: true,
            lower_bound: Some((s - a_up) / a_up),
        });
    }
    let value = (s - a) / a;
    let stderr = (s / (a * a) + s * s * sa * sa / a.powi(4)).sqrt();
    Ok(Car {
        car: value,
        stderr,
        signal: s,
        accidentals: a,
        accidentals_err: sa,
        significance: (s - a) / (s + sa * sa).sqrt(),
        infinite: false,
        lower_bound: None,
    })
}

impl Car {
    /// CAR, or its lower bound when no accidentals were seen.
    pub fn conservative(&self) -> f64 {
        self.lower_bound.unwrap_or(self.car)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub eta: f64,
    pub stderr: f64,
    /// Above one: the loss calibration is inconsistent with the counts.
    pub exceeds_one: bool,
}

/// Intrinsic heralding efficiency `N_ij / (N_j η_d T)` with binomial error.
pub fn heralding_efficiency(
    n_ij: f64,
    n_j: f64,
    detector_eff: f64,
    transmission: f64,
) -> Result<Efficiency> {
    if !(n_j > 0.0) {
        return Err(invalid("n_j", "needs at least one herald"));
    }
    if !(n_ij >= 0.0) {
        return Err(invalid("n_ij", "must be >= 0"));
    }
    for (name, p) in [
        ("detector_eff", detector_eff),
        ("transmission", transmission),
    ] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(invalid(name, "must lie in (0, 1]"));
        }
    }
    let loss = detector_eff * transmission;
    let p = n_ij / n_j;
    let eta = p / loss;
    let pc = p.clamp(0.0, 1.0);
    let stderr = (pc * (1.0 - pc) / n_j).sqrt().max(1.0 / n_j) / loss;
    Ok(Efficiency {
        eta,
        stderr,
        exceeds_one: eta > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiOptions {
    /// Time bin, s.
    pub bin: f64,
    /// Largest shift in bins.
    pub max_shift: usize,
    /// Only losses above this energy enter the energy signal.
    pub loss_threshold: Option<f64>,
    pub blocks: usize,
}

impl Default for CsiOptions {
    fn default() -> Self {
        Self {
            bin: 20e-9,
            max_shift: 20,
            loss_threshold: None,
            blocks: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiCurve {
    /// Shift of photons relative to electrons, s.
    pub tau: Vec<f64>,
    pub gamma: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `<S^2>/<S>^2` of the binned energy signal.
    pub g_e: f64,
    /// `<n_A n_B>/(<n_A><n_B>)`.
    pub g2_zero: f64,
    /// `<S(t) n(t+τ)>/(<S><n>)`.
    pub g_en: Vec<f64>,
}

#[derive(Clone, Default)]
struct CsiSums {
    bins: f64,
    s: f64,
    s2: f64,
    n: f64,
    na: f64,
    nb: f64,
    nab: f64,
    sn: Vec<f64>,
}

impl CsiSums {
    fn sub(&self, o: &CsiSums) -> CsiSums {
        CsiSums {
            bins: self.bins - o.bins,
            s: self.s - o.s,
            s2: self.s2 - o.s2,
            n: self.n - o.n,
            na: self.na - o.na,
            nb: self.nb - o.nb,
            nab: self.nab - o.nab,
            sn: self.sn.iter().zip(&o.sn).map(|(a, b)| a - b).collect(),
        }
    }

    fn gamma(&self) -> Option<(f64, f64, Vec<f64>, Vec<f64>)> {
        let m = self.bins;
        let (s, n) = (self.s / m, self.n / m);
        if !(s > 0.0 && n > 0.0 && self.na > 0.0 && self.nb > 0.0) {
            return None;
        }
        let g_e = (self.s2 / m) / (s * s);
        let g2 = (self.nab / m) / ((self.na / m) * (self.nb / m));
        let g_en: Vec<f64> = self.sn.iter().map(|v| (v / m) / (s * n)).collect();
        let gamma = g_en.iter().map(|g| g * g / (g_e * g2)).collect();
        Some((g_e, g2, g_en, gamma))
    }
}

fn sparse_bins(times: &[i64], weights: Option<&[f64]>, w: i64) -> Vec<(i64, f64)> {
    let mut out: Vec<(i64, f64)> = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let b = t.div_euclid(w);
        let v = weights.map_or(1.0, |ws| ws[i]);
        match out.last_mut() {
            Some((lb, acc)) if *lb == b => *acc += v,
            _ => out.push((b, v)),
        }
    }
    out
}

/// Cauchy-Schwarz ratio between the binned energy-loss signal and photon counts:
/// `γ(τ) = g_En(τ)^2 / (g_E g2(0))`, which is at most one for classical fields.
/// Errors come from a delete-one-block jackknife over contiguous time blocks.
pub fn csi_gamma(
    electrons: &[i64],
    energies: &[f32],
    photons_a: &[i64],
    photons_b: &[i64],
    opts: &CsiOptions,
) -> Result<CsiCurve> {
    check_sorted("electrons", electrons)?;
    check_sorted("photons_a", photons_a)?;
    check_sorted("photons_b", photons_b)?;
    if electrons.len() != energies.len() {
        return Err(invalid("energies", "length differs from electron times"));
    }
    if !(opts.bin > 0.0) || opts.blocks < 2 {
        return Err(invalid("csi", "needs bin > 0 and at least two blocks"));
    }
    let w = seconds_to_ps(opts.bin).max(1);
    let weights: Vec<f64> = energies
        .iter()
        .map(|&e| {
            let e = e as f64;
            match opts.loss_threshold {
                Some(th) if e < th => 0.0,
                _ => e,
            }
        })
        .collect();
    let s_bins = sparse_bins(electrons, Some(&weights), w);
    let a_bins = sparse_bins(photons_a, None, w);
    let b_bins = sparse_bins(photons_b, None, w);
    let mut merged: Vec<i64> = photons_a.iter().chain(photons_b).copied().collect();
    merged.sort_unstable();
    let n_bins = sparse_bins(&merged, None, w);

    let all_first = [s_bins.first(), a_bins.first(), b_bins.first()]
        .into_iter()
        .flatten()
        .map(|x| x.0)
        .min()
        .ok_or_else(|| Error::Undefined("empty streams".into()))?;
    let all_last = [s_bins.last(), a_bins.last(), b_bins.last()]
        .into_iter()
        .flatten()
        .map(|x| x.0)
        .max()
        .expect("non-empty");
    let span = (all_last - all_first + 1) as f64;
    let nblocks = opts.blocks;
    let block_of =
        |b: i64| (((b - all_first) as f64 / span * nblocks as f64) as usize).min(nblocks - 1);
    let k = opts.max_shift as i64;
    let nshift = (2 * k + 1) as usize;
    let mut blocks: Vec<CsiSums> = (0..nblocks)
        .map(|_| CsiSums {
            sn: vec![0.0; nshift],
            ..Default::default()
        })
        .collect();
    for i in 0..nblocks {
        let lo = all_first as f64 + span * i as f64 / nblocks as f64;
        let hi = all_first as f64 + span * (i + 1) as f64 / nblocks as f64;
        blocks[i].bins = (hi.ceil() - lo.ceil()).max(0.0);
    }
    for &(b, s) in &s_bins {
        let blk = &mut blocks[block_of(b)];
        blk.s += s;
        blk.s2 += s * s;
    }
    for &(b, n) in &n_bins {
        blocks[block_of(b)].n += n;
    }
    for &(b, n) in &a_bins {
        blocks[block_of(b)].na += n;
    }
    for &(b, n) in &b_bins {
        blocks[block_of(b)].nb += n;
    }
    let mut j = 0;
    for &(b, na) in &a_bins {
        while j < b_bins.len() && b_bins[j].0 < b {
            j += 1;
        }
        if j < b_bins.len() && b_bins[j].0 == b {
            blocks[block_of(b)].nab += na * b_bins[j].1;
        }
    }
    let mut lo = 0;
    for &(b, s) in &s_bins {
        while lo < n_bins.len() && n_bins[lo].0 < b - k {
            lo += 1;
        }
        let blk = block_of(b);
        let mut p = lo;
        while p < n_bins.len() && n_bins[p].0 <= b + k {
            let shift = (n_bins[p].0 - b + k) as usize;
            blocks[blk].sn[shift] += s * n_bins[p].1;
            p += 1;
        }
    }

    let mut total = CsiSums {
        sn: vec![0.0; nshift],
        ..Default::default()
    };
    for blk in &blocks {
        total.bins += blk.bins;
        total.s += blk.s;
        total.s2 += blk.s2;
        total.n += blk.n;
        total.na += blk.na;
        total.nb += blk.nb;
        total.nab += blk.nab;
        for (t, v) in total.sn.iter_mut().zip(&blk.sn) {
            *t += v;
        }
    }
    let (g_e, g2_zero, g_en, gamma) = total.gamma().ok_or_else(|| {
        Error::Undefined("mean energy signal or photon coincidences vanish".into())
    })?;
    let leave_out: Vec<Vec<f64>> = blocks
        .iter()
        .filter_map(|blk| total.sub(blk).gamma().map(|g| g.3))
        .collect();
    let nj = leave_out.len() as f64;
    let stderr = (0..nshift)
        .map(|i| {
            if nj < 2.0 {
                return f64::INFINITY;
            }
            let mean = leave_out.iter().map(|g| g[i]).sum::<f64>() / nj;
            let ss: f64 = leave_out.iter().map(|g| (g[i] - mean).powi(2)).sum();
            ((nj - 1.0) / nj * ss).sqrt()
        })
        .collect();
    let tau = (-k..=k).map(|i| i as f64 * w as f64 * 1e-12).collect();
    Ok(CsiCurve {
        tau,
        gamma,
        stderr,
        g_e,
        g2_zero,
        g_en,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEstimate {
    pub g0: f64,
    pub stderr: f64,
    /// Chi-square of the two observed coincidence probabilities at the optimum.
    pub chi2: f64,
    /// The losses leave (almost) no information on the coupling.
    pub diverging: bool,
}

/// Detection probabilities of one and two photons from an electron with
/// Poisson photon number, given per-photon detection probabilities `d_a`, `d_b`.
pub fn detected_pair_model(g0: f64, d_a: f64, d_b: f64) -> (f64, f64) {
    let p = sideband_populations(g0, 2).expect("g0 >= 0").p;
    let one = p[1] * (d_a + d_b);
    let both = 1.0 - (1.0 - d_a).powi(2) - (1.0 - d_b).powi(2) + (1.0 - d_a - d_b).powi(2);
    (one, p[2] * both)
}

/// Fits `g0` to the observed numbers of one-photon (`n1`, m = 1 sideband,
/// either detector) and two-photon (`n2`, m = 2 sideband, both detectors)
/// coincidences among `n_e` electrons.
pub fn coupling_from_coincidences(
    n1: f64,
    n2: f64,
    n_e: f64,
    d_a: f64,
    d_b: f64,
) -> Result<CouplingEstimate> {
    if !(n_e > 0.0) {
        return Err(invalid("n_e", "must be > 0"));
    }
    if !(n1 >= 0.0 && n2 >= 0.0) {
        return Err(invalid("n1", "counts must be >= 0"));
    }
    if !(d_a >= 0.0 && d_b >= 0.0 && d_a + d_b <= 1.0) {
        return Err(invalid(
            "d_a",
            "detection probabilities must be >= 0 and sum to <= 1",
        ));
    }
    let chi2 = |g: f64| {
        let (m1, m2) = detected_pair_model(g, d_a, d_b);
        let (e1, e2) = (m1 * n_e, m2 * n_e);
        (n1 - e1).powi(2) / e1.max(1.0) + (n2 - e2).powi(2) / e2.max(1.0)
    };
    // One-photon rates alone are two-valued in g0; a grid scan picks the basin.
    let grid = 1000;
    let best = (0..=grid)
        .map(|i| 5.0 * i as f64 / grid as f64)
        .min_by(|x, y| chi2(*x).total_cmp(&chi2(*y)))
        .expect("non-empty grid");
    let (mut a, mut b) = ((best - 0.005).max(0.0), best + 0.005);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (chi2(c), chi2(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = chi2(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = chi2(d);
        }
    }
    let g0 = 0.5 * (a + b);
    let h = 1e-4 * g0.max(1e-2);
    let curv = (chi2(g0 + h) - 2.0 * chi2(g0) + chi2((g0 - h).max(0.0))) / (h * h);
    let stderr = if curv > 0.0 {
        (2.0 / curv).sqrt()
    } else {
        f64::INFINITY
    };
    let diverging = !(stderr.is_finite()) || stderr > g0.max(1e-3) || d_a + d_b < 1e-9;
    Ok(CouplingEstimate {
        g0,
        stderr,
        chi2: chi2(g0),
        diverging,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakWidth {
    pub center: f64,
    pub sigma: f64,
    /// Gaussian-equivalent FWHM, `2.3548 sigma`.
    pub fwhm: f64,
    /// Background-subtracted counts in the peak region.
    pub signal: f64,
    pub background_per_bin: f64,
}

/// Width of a peak from the background-subtracted second moment of the bins
/// whose centers lie in `region`; the flat background level is the mean of
/// the `background` bins. Exact for data that live on the bin lattice.
pub fn peak_width(
    centers: &[f64],
    counts: &[f64],
    region: (f64, f64),
    background: &[Range<usize>],
) -> Option<PeakWidth> {
    let nbg: usize = background.iter().map(|r| r.len()).sum();
    let level = if nbg == 0 {
        0.0
    } else {
        background
            .iter()
            .map(|r| counts[r.clone()].iter().sum::<f64>())
            .sum::<f64>()
            / nbg as f64
    };
    let sel: Vec<usize> = (0..centers.len())
        .filter(|&i| centers[i] >= region.0 && centers[i] <= region.1)
        .collect();
    let w: Vec<f64> = sel.iter().map(|&i| counts[i] - level).collect();
    let s0: f64 = w.iter().sum();
    if !(s0 > 0.0) {
        return None;
    }
    let mean = sel
        .iter()
        .zip(&w)
        .map(|(&i, w)| centers[i] * w)
        .sum::<f64>()
        / s0;
    let var = sel
        .iter()
        .zip(&w)
        .map(|(&i, w)| (centers[i] - mean).powi(2) * w)
        .sum::<f64>()
        / s0;
    (var > 0.0).then(|| PeakWidth {
        center: mean,
        sigma: var.sqrt(),
        fwhm: crate::model::FWHM_PER_SIGMA * var.sqrt(),
        signal: s0,
        background_per_bin: level,
    })
}

/// Full width at half maximum of the highest peak, linearly interpolated.
pub fn peak_fwhm(centers: &[f64], values: &[f64], baseline: f64) -> Option<f64> {
    let (imax, &vmax) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))?;
    let half = baseline + 0.5 * (vmax - baseline);
    if !(vmax > baseline) {
        return None;
    }
    let mut l = imax;
    while l > 0 && values[l - 1] > half {
        l -= 1;
    }
    let mut r = imax;
    while r + 1 < values.len() && values[r + 1] > half {
        r += 1;
    }
    if l == 0 || r + 1 == values.len() {
        return None;
    }
    let cross = |i_out: usize, i_in: usize| {
        let (x0, y0, x1, y1) = (centers[i_out], values[i_out], centers[i_in], values[i_in]);
        x0 + (half - y0) / (y1 - y0) * (x1 - x0)
    };
    Some(cross(r + 1, r) - cross(l - 1, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::PhotonLink;

    #[test]
    fn car_arithmetic() {
        let mut h = vec![0.0; 30];
        h[10] = 100.0;
        for v in h[20..30].iter_mut() {
            *v = 2.0;
        }
        let c = car(&h, 10..11, &[20..30]).unwrap();
        assert!((c.car - 49.0).abs() < 1e-12);
        assert!(!c.infinite);
        assert!(car(&h, 10..11, &[5..11]).is_err());
    }

    #[test]
    fn car_zero_background() {
        let mut h = vec![0.0; 30];
        h[10] = 50.0;
        let c = car(&h, 10..11, &[20..30]).unwrap();
        assert!(c.infinite);
        let a_up = POISSON_ZERO_UPPER_95 / 10.0;
        assert!((c.lower_bound.unwrap() - (50.0 - a_up) / a_up).abs() < 1e-9);
    }

    #[test]
    fn efficiency_examples() {
        let e = heralding_efficiency(10.0, 1000.0, 0.02, 1.0).unwrap();
        assert!((e.eta - 0.5).abs() < 1e-12);
        let e = heralding_efficiency(500.0, 500.0, 1.0, 1.0).unwrap();
        assert_eq!(e.eta, 1.0);
        assert!(!e.exceeds_one);
        assert!(
            heralding_efficiency(30.0, 1000.0, 0.02, 1.0)
                .unwrap()
                .exceeds_one
        );
        assert!(heralding_efficiency(1.0, 0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn coupling_round_trip_lossless() {
        let (p1, p2) = detected_pair_model(0.3, 0.5, 0.5);
        let est = coupling_from_coincidences(p1 * 1e6, p2 * 1e6, 1e6, 0.5, 0.5).unwrap();
        assert!((est.g0 - 0.3).abs() < 1e-4, "{est:?}");
        assert!(!est.diverging);
        let blind = coupling_from_coincidences(0.0, 0.0, 1e6, 0.0, 0.0).unwrap();
        assert!(blind.diverging);
    }

    #[test]
    fn moment_width_of_lattice_gaussian() {
        let x: Vec<f64> = (-40..=40).map(|i| i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 5.0 + 1e4 * (-0.5 * (v / 4.0f64).powi(2)).exp())
            .collect();
        let w = peak_width(&x, &y, (-30.0, 30.0), &[0..5, 76..81]).unwrap();
        assert!((w.sigma - 4.0).abs() < 1e-3, "{w:?}");
        assert!((w.background_per_bin - 5.0).abs() < 1e-6);
    }

    #[test]
    fn fwhm_of_triangle() {
        let x: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| (10.0 - (v - 10.0).abs()).max(0.0))
            .collect();
        assert!((peak_fwhm(&x, &y, 0.0).unwrap() - 10.0).abs() < 1e-12);
    }

    fn rec(t: i64, a: bool, b: bool) -> TripleRecord {
        let link = PhotonLink { index: 0, tau: 0 };
        TripleRecord {
            t_el: t,
            energy: 0.9,
            a: a.then_some(link),
            b: b.then_some(link),
            true_a: a,
            true_b: b,
        }
    }

    #[test]
    fn discrete_g2_counts() {
        // Alternating A-only and B-only heralds: no same-herald pairs.
        let records: Vec<TripleRecord> =
            (0..1000).map(|i| rec(i, i % 2 == 0, i % 2 == 1)).collect();
        let g = g2_discrete(&records, None, 5e-9, 3).unwrap();
        assert_eq!(g.g2[0], 0.0);
        assert_eq!(g.pairs[1], 999.0 * 0.5);
        assert!((g.g2[1] - 999.0 * 0.5 / (999.0 * 0.25)).abs() < 1e-12);
        assert_eq!(g.g2[2], 0.0);
    }

    #[test]
    fn g2_rejects_empty_baseline() {
        let a = [0i64, 10];
        let b = [0i64, 10];
        assert!(g2_unheralded(&a, &b, &G2Options::new(1e-9, 1e-6)).is_err());
    }
}
