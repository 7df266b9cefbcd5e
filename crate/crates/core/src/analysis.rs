//! One event stream analyzed end to end with a run configuration: matching,
//! the coincidence cube, and the estimator recipes that need both.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::correlate::{
    correlate, correlate_sharded, Axis, CoincidenceCube, Columns, CubeAxes, RecordFilter,
    TripleRecord,
};
use crate::error::{invalid, Error, Result};
use crate::ingest::{correct_zlp_drift, DriftReport};
use crate::model::{fit_spectrum, EnergyHistogram, SpectrumFit};
use crate::simgen::{seconds_to_ps, Channel, EventStream};
use crate::special::{exgauss_pdf, gauss_pdf};
use crate::stats::{
    car, coupling_from_coincidences, csi_gamma, g2_discrete, g2_heralded_surface, g2_time_averaged,
    g2_unheralded, heralding_efficiency, Car, CorrelationCurve, CouplingEstimate, CsiCurve,
    CsiOptions, DiscreteG2, Efficiency, G2Options, HeraldedG2Surface,
};

/// Largest `q` reported by the discrete correlator.
pub const DISCRETE_Q_MAX: usize = 20;

/// Delay histogram with signal and background selections used for a CAR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayHistogram {
    pub axis: Axis,
    pub counts: Vec<f64>,
    pub car: Car,
    pub signal: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiencies {
    /// Photon-heralded electrons with an energy loss.
    pub electron: Efficiency,
    /// m = 1 electrons heralding a photon on either detector.
    pub union: Efficiency,
    /// m = 2 electrons heralding photons on both detectors.
    pub both: Efficiency,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub config: RunConfig,
    pub columns: Columns,
    pub records: Vec<TripleRecord>,
    pub cube: CoincidenceCube,
    pub drift: Option<DriftReport>,
}

impl Analysis {
    /// `threads == 1` runs unsharded; `0` uses all cores.
    pub fn new(stream: &EventStream, config: &RunConfig, threads: usize) -> Result<Self> {
        let a = &config.analysis;
        let (stream, drift) = if a.drift_window > 0.0 {
            let (s, r) = correct_zlp_drift(
                stream,
                a.drift_window,
                config.experiment.physics.photon_energy,
            )?;
            (std::borrow::Cow::Owned(s), Some(r))
        } else {
            (std::borrow::Cow::Borrowed(stream), None)
        };
        let columns = Columns::from_stream(&stream);
        let axes = CubeAxes::from_config(a)?;
        let (records, cube) = if threads == 1 {
            correlate(columns.streams(), a.max_delay, axes, RecordFilter::All)?
        } else {
            let workers = if threads == 0 {
                rayon::current_num_threads()
            } else {
                threads
            };
            correlate_sharded(
                columns.streams(),
                a.max_delay,
                axes,
                RecordFilter::All,
                4 * workers,
                workers,
            )?
        };
        Ok(Self {
            config: *config,
            columns,
            records,
            cube,
            drift,
        })
    }

    pub fn window(&self, m: usize) -> (f64, f64) {
        self.config
            .analysis
            .sideband_window(m, self.config.experiment.physics.photon_energy)
    }

    fn cw(&self) -> i64 {
        seconds_to_ps(self.config.analysis.coincidence_window)
    }

    fn in_window(r: &TripleRecord, w: (f64, f64)) -> bool {
        let e = r.energy as f64;
        e >= w.0 && e <= w.1
    }

    fn true_hit(&self, r: &TripleRecord, c: Channel) -> bool {
        r.tau(c, true)
            .is_some_and(|t| (t as i64).abs() <= self.cw())
    }

    pub fn spectrum_histogram(&self) -> EnergyHistogram {
        let a = &self.config.analysis;
        let bins = ((a.energy_max - a.energy_min) / a.energy_bin).round() as usize;
        EnergyHistogram::from_energies(
            a.energy_min,
            a.energy_bin,
            bins,
            self.columns.energies.iter().map(|&e| e as f64),
        )
    }

    /// Fit seeded with the configured physics.
    pub fn fit_spectrum(&self) -> Result<SpectrumFit> {
        fit_spectrum(&self.spectrum_histogram(), &self.config.experiment.physics)
    }

    pub fn g2_unheralded(&self) -> Result<CorrelationCurve> {
        let a = &self.config.analysis;
        let mut opts = G2Options::new(a.g2_bin, a.g2_span);
        opts.duration = Some(self.config.experiment.duration);
        g2_unheralded(&self.columns.photons_a, &self.columns.photons_b, &opts)
    }

    pub fn heralded_surface(&self, m: usize) -> Result<HeraldedG2Surface> {
        g2_heralded_surface(&self.cube, self.window(m))
    }

    /// Relative-delay correlation heralded by the coincidence bin of `τ_A`.
    pub fn time_averaged(&self, m: usize) -> Result<CorrelationCurve> {
        let ax = self.cube.axes.tau_a;
        let peak = self.peak_bin(&ax, Channel::A, self.window(m));
        let c = ax.center(peak);
        g2_time_averaged(&self.cube, self.window(m), (c, c))
    }

    pub fn discrete(&self, m: Option<usize>) -> Result<DiscreteG2> {
        g2_discrete(
            &self.records,
            m.map(|m| self.window(m)),
            self.config.analysis.coincidence_window,
            DISCRETE_Q_MAX,
        )
    }

    fn peak_bin(&self, axis: &Axis, c: Channel, w: (f64, f64)) -> usize {
        let mut h = vec![0u64; axis.bins];
        for r in self.records.iter().filter(|r| Self::in_window(r, w)) {
            if let Some(i) = r.tau(c, false).and_then(|t| axis.index(t as f64)) {
                h[i] += 1;
            }
        }
        (0..h.len())
            .max_by_key(|&i| (h[i], std::cmp::Reverse(i)))
            .unwrap_or(0)
    }

    fn delay_car(&self, axis: Axis, counts: Vec<f64>, half: usize) -> Result<DelayHistogram> {
        let peak = (0..counts.len())
            .max_by(|&i, &j| counts[i].total_cmp(&counts[j]).then(j.cmp(&i)))
            .ok_or_else(|| Error::Undefined("empty delay histogram".into()))?;
        let sig = peak.saturating_sub(half)..(peak + half + 1).min(counts.len());
        let d = self.config.analysis.max_delay * 1e12;
        let bg_lo = axis.range_bins(-d, -0.5 * d);
        let bg_hi = axis.range_bins(0.5 * d, d);
        let background: Vec<_> = [bg_lo, bg_hi]
            .into_iter()
            .filter(|r| !r.is_empty())
            .collect();
        let result = car(&counts, sig.clone(), &background)?;
        Ok(DelayHistogram {
            axis,
            counts,
            car: result,
            signal: (sig.start, sig.end),
        })
    }

    /// CAR of electron-photon delays (both detectors) for electrons in the
    /// `m`-th window; signal is the peak bin and its neighbours.
    pub fn electron_photon_car(&self, m: usize) -> Result<DelayHistogram> {
        let w = self.window(m);
        let axis = self.cube.axes.tau_a;
        let mut counts = vec![0.0; axis.bins];
        for r in self.records.iter().filter(|r| Self::in_window(r, w)) {
            for c in [Channel::A, Channel::B] {
                if let Some(i) = r.tau(c, false).and_then(|t| axis.index(t as f64)) {
                    counts[i] += 1.0;
                }
            }
        }
        self.delay_car(axis, counts, 1)
    }

    /// CAR of `τ_A - τ_B` for electrons in the `m`-th window that herald a true
    /// A photon, on a grid of the photon timestamp quantum.
    pub fn two_photon_car(&self, m: usize) -> Result<DelayHistogram> {
        let w = self.window(m);
        let q = self
            .config
            .experiment
            .channel_a
            .timestamp_quantum
            .max(1e-12)
            * 1e12;
        let d = self.config.analysis.max_delay * 1e12;
        let axis = Axis::aligned(-2.0 * d, 2.0 * d, q)?;
        let mut counts = vec![0.0; axis.bins];
        for r in self.records.iter().filter(|r| Self::in_window(r, w)) {
            if !self.true_hit(r, Channel::A) {
                continue;
            }
            let (Some(ta), Some(tb)) = (r.tau(Channel::A, true), r.tau(Channel::B, false)) else {
                continue;
            };
            if let Some(i) = axis.index((ta - tb) as f64) {
                counts[i] += 1.0;
            }
        }
        self.delay_car(axis, counts, 2)
    }

    pub fn efficiencies(&self) -> Result<Efficiencies> {
        let x = &self.config.experiment;
        let half = 0.5 * x.physics.photon_energy;
        let c = &self.columns;
        let photons = (c.photons_a.len() + c.photons_b.len()) as f64;
        // Photon-side search so that every photon of a multi-photon electron
        // counts; accidentals come from a window displaced by half the delay range.
        let cw = self.cw();
        let off = seconds_to_ps(self.config.analysis.max_delay) / 2;
        let lossy_electron_in = |lo: i64, hi: i64| {
            let start = c.electrons.partition_point(|&t| t < lo);
            c.electrons[start..]
                .iter()
                .zip(&c.energies[start..])
                .take_while(|(&t, _)| t <= hi)
                .any(|(_, &e)| e as f64 >= half)
        };
        let (mut sig, mut acc) = (0.0, 0.0);
        for &t in c.photons_a.iter().chain(&c.photons_b) {
            sig += lossy_electron_in(t - cw, t + cw) as u8 as f64;
            acc += lossy_electron_in(t + off - cw, t + off + cw) as u8 as f64;
        }
        let heralded_photons = (sig - acc).max(0.0);
        let (w1, w2) = (self.window(1), self.window(2));
        let (mut n1, mut n1_hit, mut n2, mut n2_both) = (0.0, 0.0, 0.0, 0.0);
        for r in &self.records {
            let (a, b) = (self.true_hit(r, Channel::A), self.true_hit(r, Channel::B));
            if Self::in_window(r, w1) {
                n1 += 1.0;
                n1_hit += (a || b) as u8 as f64;
            }
            if Self::in_window(r, w2) {
                n2 += 1.0;
                n2_both += (a && b) as u8 as f64;
            }
        }
        let d_a = x.split(Channel::A) * x.channel_a.efficiency;
        let d_b = x.split(Channel::B) * x.channel_b.efficiency;
        Ok(Efficiencies {
            electron: heralding_efficiency(
                heralded_photons,
                photons,
                1.0,
                x.electron.transmission,
            )?,
            union: heralding_efficiency(n1_hit, n1, (d_a + d_b).min(1.0), 1.0)?,
            both: heralding_efficiency(n2_both, n2, (2.0 * d_a * d_b).min(1.0), 1.0)?,
        })
    }

    pub fn csi(&self, loss_threshold: Option<f64>) -> Result<CsiCurve> {
        let opts = CsiOptions {
            loss_threshold,
            ..CsiOptions::default()
        };
        let c = &self.columns;
        csi_gamma(&c.electrons, &c.energies, &c.photons_a, &c.photons_b, &opts)
    }

    /// Fraction of sideband `m` that falls inside its selection window under the
    /// configured line shape.
    pub fn window_capture(&self, m: usize) -> f64 {
        let p = &self.config.experiment.physics;
        let (lo, hi) = self.window(m);
        let mu = m as f64 * p.photon_energy;
        let pm = p.pm_sigma();
        let s = (p.zlp_sigma * p.zlp_sigma + m as f64 * pm * pm).sqrt();
        let n = 2000;
        let h = (hi - lo) / n as f64;
        (0..n)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                (1.0 - p.continuum_prob) * gauss_pdf(x, mu, s)
                    + p.continuum_prob * exgauss_pdf(x, mu, s, 1.0 / p.continuum_decay)
            })
            .sum::<f64>()
            * h
    }

    /// Photon detection probability per generated photon, corrected for the
    /// live fraction implied by the measured count rate.
    pub fn live_detection(&self, c: Channel) -> f64 {
        let x = &self.config.experiment;
        let ch = x.channel(c);
        let n = match c {
            Channel::A => self.columns.photons_a.len(),
            Channel::B => self.columns.photons_b.len(),
        } as f64;
        let live = if x.duration > 0.0 {
            (1.0 - n / x.duration * ch.dead_time).clamp(0.0, 1.0)
        } else {
            1.0
        };
        x.split(c) * ch.efficiency * live
    }

    /// Coupling from background-subtracted one- and two-photon coincidence
    /// counts in the m = 1 and m = 2 windows, corrected for window capture.
    pub fn coupling(&self) -> Result<CouplingEstimate> {
        let n_e = self.columns.electrons.len() as f64;
        if n_e == 0.0 {
            return Err(invalid("electrons", "no electrons recorded"));
        }
        let cw = self.cw();
        let d = seconds_to_ps(self.config.analysis.max_delay);
        let far = d / 2;
        let (w1, w2) = (self.window(1), self.window(2));
        let (mut s1, mut b1, mut s2) = (0.0, 0.0, 0.0);
        for r in &self.records {
            if Self::in_window(r, w1) {
                let hits =
                    [Channel::A, Channel::B].map(|c| r.tau(c, true).map(|t| (t as i64).abs()));
                if hits.iter().any(|t| t.is_some_and(|t| t <= cw)) {
                    s1 += 1.0;
                }
                b1 += hits.iter().filter(|t| t.is_some_and(|t| t >= far)).count() as f64;
            }
            if Self::in_window(r, w2)
                && self.true_hit(r, Channel::A)
                && self.true_hit(r, Channel::B)
            {
                s2 += 1.0;
            }
        }
        let acc = b1 * (2 * cw + 1) as f64 / (2 * (d - far + 1)) as f64;
        let n1 = (s1 - acc).max(0.0) / self.window_capture(1);
        let n2 = s2 / self.window_capture(2);
        coupling_from_coincidences(
            n1,
            n2,
            n_e,
            self.live_detection(Channel::A),
            self.live_detection(Channel::B),
        )
    }
}

impl Analysis {
    /// Delay bins of the electron-photon coincidence peak on each detector.
    pub fn coincidence_cell(&self, m: usize) -> (usize, usize) {
        let w = self.window(m);
        (
            self.peak_bin(&self.cube.axes.tau_a, Channel::A, w),
            self.peak_bin(&self.cube.axes.tau_b, Channel::B, w),
        )
    }

    /// Energy spectra of electrons with a true coincidence on either detector
    /// and on both detectors.
    pub fn coincidence_spectra(&self) -> (EnergyHistogram, EnergyHistogram) {
        let mut union = self.spectrum_histogram();
        union.counts.iter_mut().for_each(|c| *c = 0.0);
        let mut both = union.clone();
        for r in &self.records {
            let (a, b) = (self.true_hit(r, Channel::A), self.true_hit(r, Channel::B));
            if a || b {
                union.fill(r.energy as f64);
            }
            if a && b {
                both.fill(r.energy as f64);
            }
        }
        (union, both)
    }
}
