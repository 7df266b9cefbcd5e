//! Seedable Monte Carlo generator of electron and photon detection streams.
//!
//! Every electron draws a coupling, a photon number, photon energies and a
//! continuum loss. Photons are routed through a beam splitter into two lossy,
//! jittery, dead-time limited detectors with dark counts. Electrons pass a lossy
//! spectrometer with its own timing jitter and quantization.
//!
//! Generation is split into time segments, each with its own random stream, so the
//! output is bit-identical for a given seed regardless of the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{SpectrumParams, FWHM_PER_SIGMA};

pub const PS_PER_S: f64 = 1e12;
pub const DETECTOR_PIXELS: u16 = 514;
pub const MAX_CLUSTER_SIZE: usize = 10;
/// Expected electrons per generation segment.
const SEGMENT_ELECTRONS: f64 = 1.0e6;
const DARK_ORIGIN: u32 = u32::MAX;
const PIXEL_STREAM: u64 = 1 << 40;

pub fn seconds_to_ps(t: f64) -> i64 {
    (t * PS_PER_S).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    A,
    B,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::A => 0,
            Channel::B => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Electron,
    Photon(Channel),
}

/// Flag bit set on photon events produced by detector dark counts.
pub const FLAG_DARK: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// Picoseconds since run start.
    pub time: i64,
    /// Energy loss in eV; zero for photons.
    pub energy: f32,
    pub flags: u16,
}

impl Event {
    pub fn electron(time: i64, energy: f32) -> Self {
        Self {
            kind: EventKind::Electron,
            time,
            energy,
            flags: 0,
        }
    }

    pub fn photon(channel: Channel, time: i64) -> Self {
        Self {
            kind: EventKind::Photon(channel),
            time,
            energy: 0.0,
            flags: 0,
        }
    }
}

/// Time-ordered mixed stream of electron and photon detections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        if let Some(i) = events.windows(2).position(|w| w[1].time < w[0].time) {
            return Err(Error::Unsorted { index: i + 1 });
        }
        Ok(Self { events })
    }

    /// Merges already time-sorted per-kind lists; ties order electrons first.
    pub fn merge(mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| (e.time, e.kind));
        Self { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn electrons(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::Electron)
    }

    pub fn photons(&self, channel: Channel) -> impl Iterator<Item = &Event> {
        self.events
            .iter()
            .filter(move |e| e.kind == EventKind::Photon(channel))
    }

    pub fn electron_times(&self) -> Vec<i64> {
        self.electrons().map(|e| e.time).collect()
    }

    pub fn electron_energies(&self) -> Vec<f32> {
        self.electrons().map(|e| e.energy).collect()
    }

    pub fn photon_times(&self, channel: Channel) -> Vec<i64> {
        self.photons(channel).map(|e| e.time).collect()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelHit {
    pub x: u16,
    pub y: u16,
    pub time: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PixelHitStream {
    pub hits: Vec<PixelHit>,
    /// Electrons whose energy mapped outside the detector and were clipped.
    pub clipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonChannel {
    /// End-to-end detection probability of a photon routed to this channel.
    pub efficiency: f64,
    pub jitter_fwhm: f64,
    pub dead_time: f64,
    pub dark_rate: f64,
    pub timestamp_quantum: f64,
}

impl PhotonChannel {
    fn validate(&self, name: &'static str) -> Result<()> {
        check_prob(name, self.efficiency)?;
        check_non_negative(name, self.jitter_fwhm)?;
        check_non_negative(name, self.dead_time)?;
        check_non_negative(name, self.dark_rate)?;
        check_quantum(name, self.timestamp_quantum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronChain {
    pub transmission: f64,
    pub jitter_fwhm: f64,
    pub timestamp_quantum: f64,
    /// eV per pixel column.
    pub pixel_dispersion: f64,
    pub mean_cluster_size: f64,
    /// Column of zero energy loss.
    pub zlp_column: f64,
    /// Row of the spectrum line and its spread in pixels.
    pub spot_row: f64,
    pub spot_row_sigma: f64,
    /// Sigma of the extra delay of non-seed pixels in a cluster, s.
    pub pixel_jitter_sigma: f64,
}

impl ElectronChain {
    fn validate(&self) -> Result<()> {
        check_prob("electron.transmission", self.transmission)?;
        check_non_negative("electron.jitter_fwhm", self.jitter_fwhm)?;
        check_quantum("electron.timestamp_quantum", self.timestamp_quantum)?;
        if !(self.pixel_dispersion > 0.0) {
            return Err(invalid("electron.pixel_dispersion", "must be > 0"));
        }
        if !(1.0..=MAX_CLUSTER_SIZE as f64).contains(&self.mean_cluster_size) {
            return Err(invalid("electron.mean_cluster_size", "must lie in [1, 10]"));
        }
        check_non_negative("electron.spot_row_sigma", self.spot_row_sigma)?;
        check_non_negative("electron.pixel_jitter_sigma", self.pixel_jitter_sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub electron_rate: f64,
    pub duration: f64,
    pub physics: SpectrumParams,
    pub splitter_ratio: f64,
    pub channel_a: PhotonChannel,
    pub channel_b: PhotonChannel,
    pub electron: ElectronChain,
    /// Slow linear offset of the zero-loss peak, eV/s.
    pub zlp_drift_rate: f64,
    pub emit_pixels: bool,
    /// Resource guard on `electron_rate * duration`.
    pub max_electrons: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        crate::config::paper_preset()
    }
}

fn check_prob(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("probability must lie in [0, 1], got {p}"),
        ))
    }
}

fn check_non_negative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {v}")))
    }
}

fn check_quantum(name: &'static str, q: f64) -> Result<()> {
    if q >= 1e-12 && q.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("timestamp quantum must be >= 1 ps, got {q}"),
        ))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("electron_rate", self.electron_rate)?;
        check_non_negative("duration", self.duration)?;
        self.physics.validate()?;
        check_prob("splitter_ratio", self.splitter_ratio)?;
        self.channel_a.validate("channel_a")?;
        self.channel_b.validate("channel_b")?;
        self.electron.validate()?;
        if !self.zlp_drift_rate.is_finite() {
            return Err(invalid("zlp_drift_rate", "must be finite"));
        }
        let requested = self.electron_rate * self.duration;
        if requested > self.max_electrons {
            return Err(Error::ResourceLimit {
                requested,
                limit: self.max_electrons,
            });
        }
        Ok(())
    }

    pub fn channel(&self, channel: Channel) -> &PhotonChannel {
        match channel {
            Channel::A => &self.channel_a,
            Channel::B => &self.channel_b,
        }
    }

    pub fn split(&self, channel: Channel) -> f64 {
        match channel {
            Channel::A => self.splitter_ratio,
            Channel::B => 1.0 - self.splitter_ratio,
        }
    }

    /// Expected detected signal photon rate before dead time.
    pub fn signal_rate(&self, channel: Channel) -> f64 {
        self.electron_rate
            * self.physics.coupling.mean_photon_number()
            * self.split(channel)
            * self.channel(channel).efficiency
    }
}

/// Per-electron ground truth, in generation order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronTruth {
    /// True arrival time before detector jitter, ps.
    pub time: i64,
    /// Energy loss reported by the spectrometer, eV.
    pub energy: f32,
    pub continuum_loss: f32,
    pub true_k: u8,
    /// Photons of this electron present in the final stream per channel.
    pub det_a: u8,
    pub det_b: u8,
    /// Whether the electron appears in the event stream.
    pub recorded: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub electrons: Vec<ElectronTruth>,
    /// Truth index of each electron event, in stream order.
    pub electron_index: Vec<u32>,
    /// Generating electron of each photon event per channel in stream order;
    /// `None` marks a dark count.
    pub origin_a: Vec<Option<u32>>,
    pub origin_b: Vec<Option<u32>>,
}

impl GroundTruth {
    pub fn origins(&self, channel: Channel) -> &[Option<u32>] {
        match channel {
            Channel::A => &self.origin_a,
            Channel::B => &self.origin_b,
        }
    }

    /// One JSON object per electron.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for e in &self.electrons {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Simulation {
    pub events: EventStream,
    pub pixels: Option<PixelHitStream>,
    pub truth: GroundTruth,
}

#[derive(Clone, Copy)]
struct RawPhoton {
    time: i64,
    origin: u32,
}

struct Segment {
    truth: Vec<ElectronTruth>,
    /// Detected electron time, or `None` when lost in transmission.
    detected: Vec<Option<i64>>,
    photons: [Vec<RawPhoton>; 2],
}

fn quantize(t_ps: f64, quantum_ps: i64) -> i64 {
    (t_ps / quantum_ps as f64).floor() as i64 * quantum_ps
}

fn quantum_ps(q: f64) -> i64 {
    seconds_to_ps(q).max(1)
}

fn normal_or_zero(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

fn sample<R: Rng>(d: &Option<Normal<f64>>, rng: &mut R) -> f64 {
    d.as_ref().map_or(0.0, |n| n.sample(rng))
}

struct Samplers {
    gamma: Option<Gamma<f64>>,
    fixed_g: f64,
    photon_energy: Normal<f64>,
    continuum: Exp<f64>,
    zlp: Normal<f64>,
    jitter_el: Option<Normal<f64>>,
    jitter_ph: [Option<Normal<f64>>; 2],
}

impl Samplers {
    fn new(cfg: &ExperimentConfig) -> Self {
        let p = &cfg.physics;
        let gamma = p
            .coupling
            .gamma_law()
            .map(|law| Gamma::new(law.shape, law.scale).expect("valid gamma law"));
        Self {
            gamma,
            fixed_g: p.coupling.mean_g0 * p.coupling.mean_g0,
            photon_energy: Normal::new(p.photon_energy, p.pm_sigma()).expect("valid"),
            continuum: Exp::new(1.0 / p.continuum_decay).expect("valid"),
            zlp: Normal::new(0.0, p.zlp_sigma).expect("valid"),
            jitter_el: normal_or_zero(cfg.electron.jitter_fwhm / FWHM_PER_SIGMA * PS_PER_S),
            jitter_ph: [
                normal_or_zero(cfg.channel_a.jitter_fwhm / FWHM_PER_SIGMA * PS_PER_S),
                normal_or_zero(cfg.channel_b.jitter_fwhm / FWHM_PER_SIGMA * PS_PER_S),
            ],
        }
    }

    fn photon_number<R: Rng>(&self, rng: &mut R) -> u32 {
        let g = match &self.gamma {
            Some(d) => d.sample(rng),
            None => self.fixed_g,
        };
        if g <= 0.0 {
            return 0;
        }
        let k: f64 = Poisson::new(g).expect("positive mean").sample(rng);
        k as u32
    }

    /// Energy loss with the zero-loss noise truncated at three sigma below zero.
    fn energy_loss<R: Rng>(&self, rng: &mut R, k: u32, continuum: f64, floor: f64) -> f64 {
        let mut base = continuum;
        for _ in 0..k {
            base += self.photon_energy.sample(rng);
        }
        loop {
            let e = base + self.zlp.sample(rng);
            if e >= floor {
                return e;
            }
        }
    }
}

fn generate_segment(cfg: &ExperimentConfig, s: &Samplers, index: u64, t0: f64, t1: f64) -> Segment {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let mut seg = Segment {
        truth: Vec::new(),
        detected: Vec::new(),
        photons: [Vec::new(), Vec::new()],
    };
    let floor = -3.0 * cfg.physics.zlp_sigma;
    let q = cfg.physics.continuum_prob;
    let eff = [cfg.channel_a.efficiency, cfg.channel_b.efficiency];
    let quanta = [
        quantum_ps(cfg.channel_a.timestamp_quantum),
        quantum_ps(cfg.channel_b.timestamp_quantum),
    ];
    let el_quantum = quantum_ps(cfg.electron.timestamp_quantum);

    if cfg.electron_rate > 0.0 {
        let gaps = Exp::new(cfg.electron_rate).expect("positive rate");
        let mut t = t0;
        loop {
            t += gaps.sample(&mut rng);
            if t >= t1 {
                break;
            }
            let local = seg.truth.len() as u32;
            let t_ps = t * PS_PER_S;
            let k = s.photon_number(&mut rng);
            for _ in 0..k {
                let ch = usize::from(!rng.random_bool(cfg.splitter_ratio));
                if rng.random_bool(eff[ch]) {
                    let tp = t_ps + sample(&s.jitter_ph[ch], &mut rng);
                    seg.photons[ch].push(RawPhoton {
                        time: quantize(tp, quanta[ch]),
                        origin: local,
                    });
                }
            }
            let continuum = if q > 0.0 && rng.random_bool(q) {
                s.continuum.sample(&mut rng)
            } else {
                0.0
            };
            let energy = s.energy_loss(&mut rng, k, continuum, floor) + cfg.zlp_drift_rate * t;
            let detected = rng.random_bool(cfg.electron.transmission).then(|| {
                let te = t_ps + sample(&s.jitter_el, &mut rng);
                quantize(te, el_quantum)
            });
            seg.truth.push(ElectronTruth {
                time: t_ps.round() as i64,
                energy: energy as f32,
                continuum_loss: continuum as f32,
                true_k: k.min(u8::MAX as u32) as u8,
                det_a: 0,
                det_b: 0,
                recorded: false,
            });
            seg.detected.push(detected);
        }
    }

    for (ch, channel) in [cfg.channel_a, cfg.channel_b].iter().enumerate() {
        let mean = channel.dark_rate * (t1 - t0);
        if mean > 0.0 {
            let n: f64 = Poisson::new(mean).expect("positive").sample(&mut rng);
            for _ in 0..n as u64 {
                let t = rng.random_range(t0..t1) * PS_PER_S;
                seg.photons[ch].push(RawPhoton {
                    time: quantize(t, quanta[ch]),
                    origin: DARK_ORIGIN,
                });
            }
        }
    }
    seg
}

/// Sorts, applies non-paralyzable dead time and drops events outside the run.
fn finish_channel(mut photons: Vec<RawPhoton>, dead_time: f64, end_ps: i64) -> Vec<RawPhoton> {
    photons.sort_by_key(|p| p.time);
    let dead = seconds_to_ps(dead_time);
    let mut out = Vec::with_capacity(photons.len());
    let mut last: Option<i64> = None;
    for p in photons {
        if p.time < 0 || p.time > end_ps {
            continue;
        }
        if let Some(l) = last {
            if p.time - l < dead {
                continue;
            }
        }
        last = Some(p.time);
        out.push(p);
    }
    out
}

fn segment_bounds(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    let expected = cfg.electron_rate * cfg.duration;
    let n = (expected / SEGMENT_ELECTRONS).ceil().max(1.0) as usize;
    let len = cfg.duration / n as f64;
    (0..n)
        .map(|i| {
            let t1 = if i + 1 == n {
                cfg.duration
            } else {
                (i + 1) as f64 * len
            };
            (i as f64 * len, t1)
        })
        .collect()
}

/// Simulates a full acquisition run.
pub fn generate(cfg: &ExperimentConfig) -> Result<Simulation> {
    cfg.validate()?;
    let samplers = Samplers::new(cfg);
    let bounds = segment_bounds(cfg);
    let segments: Vec<Segment> = bounds
        .par_iter()
        .enumerate()
        .map(|(i, &(t0, t1))| generate_segment(cfg, &samplers, i as u64, t0, t1))
        .collect();

    let end_ps = seconds_to_ps(cfg.duration);
    let total: usize = segments.iter().map(|s| s.truth.len()).sum();
    let mut truth = GroundTruth {
        electrons: Vec::with_capacity(total),
        ..Default::default()
    };
    let mut electrons: Vec<(i64, u32)> = Vec::with_capacity(total);
    let mut raw: [Vec<RawPhoton>; 2] = [Vec::new(), Vec::new()];
    for seg in segments {
        let offset = truth.electrons.len() as u32;
        for (i, d) in seg.detected.iter().enumerate() {
            if let Some(t) = *d {
                if (0..=end_ps).contains(&t) {
                    electrons.push((t, offset + i as u32));
                }
            }
        }
        for (ch, list) in seg.photons.into_iter().enumerate() {
            raw[ch].extend(list.into_iter().map(|p| RawPhoton {
                origin: if p.origin == DARK_ORIGIN {
                    DARK_ORIGIN
                } else {
                    p.origin + offset
                },
                ..p
            }));
        }
        truth.electrons.extend(seg.truth);
    }
    electrons.sort_by_key(|&(t, _)| t);

    let [raw_a, raw_b] = raw;
    let final_a = finish_channel(raw_a, cfg.channel_a.dead_time, end_ps);
    let final_b = finish_channel(raw_b, cfg.channel_b.dead_time, end_ps);

    let mut events = Vec::with_capacity(electrons.len() + final_a.len() + final_b.len());
    for &(t, idx) in &electrons {
        let rec = &mut truth.electrons[idx as usize];
        rec.recorded = true;
        events.push(Event::electron(t, rec.energy));
        truth.electron_index.push(idx);
    }
    for (channel, list) in [(Channel::A, &final_a), (Channel::B, &final_b)] {
        for p in list {
            let mut ev = Event::photon(channel, p.time);
            let origin = if p.origin == DARK_ORIGIN {
                ev.flags |= FLAG_DARK;
                None
            } else {
                let rec = &mut truth.electrons[p.origin as usize];
                match channel {
                    Channel::A => rec.det_a = rec.det_a.saturating_add(1),
                    Channel::B => rec.det_b = rec.det_b.saturating_add(1),
                }
                Some(p.origin)
            };
            events.push(ev);
            match channel {
                Channel::A => truth.origin_a.push(origin),
                Channel::B => truth.origin_b.push(origin),
            }
        }
    }
    let events = EventStream::merge(events);
    let pixels = if cfg.emit_pixels {
        let list: Vec<Event> = events.electrons().copied().collect();
        Some(emit_pixel_hits(&list, cfg)?)
    } else {
        None
    };
    log::debug!(
        "generated {} electrons ({} recorded), {} + {} photons",
        truth.electrons.len(),
        electrons.len(),
        final_a.len(),
        final_b.len()
    );
    Ok(Simulation {
        events,
        pixels,
        truth,
    })
}

const NEIGHBOURS: [(i32, i32); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Turns detected electrons into 8-connected pixel clusters.
///
/// The seed pixel carries the electron time; the other pixels are delayed by a
/// half-normal response time quantized to the electron timestamp quantum.
pub fn emit_pixel_hits(electrons: &[Event], cfg: &ExperimentConfig) -> Result<PixelHitStream> {
    cfg.electron.validate()?;
    if let Some(i) = electrons.windows(2).position(|w| w[1].time < w[0].time) {
        return Err(Error::Unsorted { index: i + 1 });
    }
    let chain = &cfg.electron;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(PIXEL_STREAM);
    let extra = (chain.mean_cluster_size > 1.0)
        .then(|| Poisson::new(chain.mean_cluster_size - 1.0).expect("positive mean"));
    let row = normal_or_zero(chain.spot_row_sigma);
    let delay = normal_or_zero(chain.pixel_jitter_sigma * PS_PER_S);
    let quantum = quantum_ps(chain.timestamp_quantum);
    let max = DETECTOR_PIXELS as i32 - 1;

    let mut out = PixelHitStream::default();
    let mut cluster: Vec<(i32, i32)> = Vec::with_capacity(MAX_CLUSTER_SIZE);
    for e in electrons {
        let col = chain.zlp_column - e.energy as f64 / chain.pixel_dispersion;
        let r = chain.spot_row + sample(&row, &mut rng);
        let (cx, cy) = (col.round(), r.round());
        if cx < 0.0 || cx > max as f64 || cy < 0.0 || cy > max as f64 {
            out.clipped += 1;
        }
        let seed = (
            cx.clamp(0.0, max as f64) as i32,
            cy.clamp(0.0, max as f64) as i32,
        );
        let size = match &extra {
            Some(p) => 1 + (p.sample(&mut rng) as usize).min(MAX_CLUSTER_SIZE - 1),
            None => 1,
        };
        cluster.clear();
        cluster.push(seed);
        let mut attempts = 0;
        while cluster.len() < size && attempts < 1000 {
            attempts += 1;
            let (bx, by) = cluster[rng.random_range(0..cluster.len())];
            let (dx, dy) = NEIGHBOURS[rng.random_range(0..8)];
            let p = (bx + dx, by + dy);
            if p.0 < 0 || p.1 < 0 || p.0 > max || p.1 > max || cluster.contains(&p) {
                continue;
            }
            cluster.push(p);
        }
        for (i, &(x, y)) in cluster.iter().enumerate() {
            let time = if i == 0 {
                e.time
            } else {
                let d = sample(&delay, &mut rng).abs();
                e.time + quantize(d, quantum)
            };
            out.hits.push(PixelHit {
                x: x as u16,
                y: y as u16,
                time,
            });
        }
    }
    out.hits.sort_by_key(|h| (h.time, h.x, h.y));
    Ok(out)
}

/// Control source: electrons with the same spectrum and photons from independent
/// Poisson processes at the rates `generate` would produce before dead time.
pub fn classical_control(cfg: &ExperimentConfig) -> Result<Simulation> {
    let mut dark = *cfg;
    for ch in [&mut dark.channel_a, &mut dark.channel_b] {
        ch.efficiency = 0.0;
    }
    dark.channel_a.dark_rate = cfg.channel_a.dark_rate + cfg.signal_rate(Channel::A);
    dark.channel_b.dark_rate = cfg.channel_b.dark_rate + cfg.signal_rate(Channel::B);
    let mut sim = generate(&dark)?;
    for e in &mut sim.events.events {
        e.flags &= !FLAG_DARK;
    }
    Ok(sim)
}
