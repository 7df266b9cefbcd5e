//! Coincidence engine.
//!
//! Every electron is linked to its nearest photon on each channel, a photon is
//! then credited as a true coincidence to the single electron closest to it, and
//! the links are histogrammed into a `(τ_A, τ_B, E)` cube.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::simgen::{seconds_to_ps, Channel, EventStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonLink {
    /// Index of the photon in its channel's time-sorted list.
    pub index: u32,
    /// `t_photon - t_electron`, ps.
    pub tau: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub t_el: i64,
    pub energy: f32,
    pub a: Option<PhotonLink>,
    pub b: Option<PhotonLink>,
    pub true_a: bool,
    pub true_b: bool,
}

impl TripleRecord {
    pub fn link(&self, channel: Channel) -> Option<PhotonLink> {
        match channel {
            Channel::A => self.a,
            Channel::B => self.b,
        }
    }

    pub fn is_true(&self, channel: Channel) -> bool {
        match channel {
            Channel::A => self.true_a,
            Channel::B => self.true_b,
        }
    }

    /// Delay on `channel`, counting only true coincidences when `true_only`.
    pub fn tau(&self, channel: Channel, true_only: bool) -> Option<i32> {
        let link = self.link(channel)?;
        (!true_only || self.is_true(channel)).then_some(link.tau)
    }
}

/// Electron times, energies and both photon channels, each sorted by time.
#[derive(Debug, Clone, Copy)]
pub struct Streams<'a> {
    pub electrons: &'a [i64],
    pub energies: &'a [f32],
    pub photons_a: &'a [i64],
    pub photons_b: &'a [i64],
}

/// Owned columns extracted from an [`EventStream`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Columns {
    pub electrons: Vec<i64>,
    pub energies: Vec<f32>,
    pub photons_a: Vec<i64>,
    pub photons_b: Vec<i64>,
}

impl Columns {
    pub fn from_stream(stream: &EventStream) -> Self {
        Self {
            electrons: stream.electron_times(),
            energies: stream.electron_energies(),
            photons_a: stream.photon_times(Channel::A),
            photons_b: stream.photon_times(Channel::B),
        }
    }

    pub fn streams(&self) -> Streams<'_> {
        Streams {
            electrons: &self.electrons,
            energies: &self.energies,
            photons_a: &self.photons_a,
            photons_b: &self.photons_b,
        }
    }
}

fn check_sorted(name: &'static str, times: &[i64]) -> Result<()> {
    match times.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(invalid(name, format!("not time-sorted at index {}", i + 1))),
        None => Ok(()),
    }
}

fn check_max_delay(max_delay: i64) -> Result<()> {
    if (0..=i32::MAX as i64).contains(&max_delay) {
        Ok(())
    } else {
        Err(invalid("max_delay", "must lie in [0, 2.1 ms]"))
    }
}

/// Streaming nearest-photon search for one channel.
struct Nearest<'a> {
    photons: &'a [i64],
    /// First photon with time >= the current electron.
    next: usize,
    max_delay: i64,
}

impl Nearest<'_> {
    fn find(&mut self, t: i64) -> Option<PhotonLink> {
        let p = self.photons;
        while self.next < p.len() && p[self.next] < t {
            self.next += 1;
        }
        let after = (self.next < p.len()).then(|| (self.next, p[self.next] - t));
        let before = (self.next > 0).then(|| {
            let t_before = p[self.next - 1];
            let mut i = self.next - 1;
            while i > 0 && p[i - 1] == t_before {
                i -= 1;
            }
            (i, t - t_before)
        });
        // Ties prefer the earlier photon.
        let (index, tau) = match (before, after) {
            (Some((i, db)), Some((j, da))) => {
                if db <= da {
                    (i, -db)
                } else {
                    (j, da)
                }
            }
            (Some((i, db)), None) => (i, -db),
            (None, Some((j, da))) => (j, da),
            (None, None) => return None,
        };
        (tau.abs() <= self.max_delay).then(|| PhotonLink {
            index: index as u32,
            tau: tau as i32,
        })
    }
}

fn match_core(s: Streams<'_>, max_delay: i64, index_offset: [u32; 2]) -> Vec<TripleRecord> {
    let mut na = Nearest {
        photons: s.photons_a,
        next: 0,
        max_delay,
    };
    let mut nb = Nearest {
        photons: s.photons_b,
        next: 0,
        max_delay,
    };
    let shift = |l: PhotonLink, off: u32| PhotonLink {
        index: l.index + off,
        ..l
    };
    s.electrons
        .iter()
        .zip(s.energies)
        .map(|(&t, &energy)| TripleRecord {
            t_el: t,
            energy,
            a: na.find(t).map(|l| shift(l, index_offset[0])),
            b: nb.find(t).map(|l| shift(l, index_offset[1])),
            true_a: false,
            true_b: false,
        })
        .collect()
}

fn validate_streams(s: &Streams<'_>) -> Result<()> {
    if s.electrons.len() != s.energies.len() {
        return Err(invalid("energies", "length differs from electron times"));
    }
    check_sorted("electrons", s.electrons)?;
    check_sorted("photons_a", s.photons_a)?;
    check_sorted("photons_b", s.photons_b)?;
    for p in [s.photons_a, s.photons_b] {
        if p.len() > u32::MAX as usize {
            return Err(invalid("photons", "more than 2^32 photons per channel"));
        }
    }
    Ok(())
}

/// Links each electron to its nearest photon per channel within `max_delay` seconds.
///
/// Runs in a single merge pass over the three sorted streams.
pub fn match_coincidences(s: Streams<'_>, max_delay: f64) -> Result<Vec<TripleRecord>> {
    validate_streams(&s)?;
    let max_delay = seconds_to_ps(max_delay);
    check_max_delay(max_delay)?;
    Ok(match_core(s, max_delay, [0, 0]))
}

/// Marks each linked photon as a true coincidence on the one electron with the
/// smallest `|τ|`; ties go to the earlier electron.
pub fn dedupe_true_coincidences(records: &mut [TripleRecord]) {
    for channel in [Channel::A, Channel::B] {
        dedupe_channel(records, channel);
    }
}

fn dedupe_channel(records: &mut [TripleRecord], channel: Channel) {
    let Some(min_index) = records
        .iter()
        .filter_map(|r| r.link(channel))
        .map(|l| l.index)
        .min()
    else {
        for r in records.iter_mut() {
            set_true(r, channel, false);
        }
        return;
    };
    let max_index = records
        .iter()
        .filter_map(|r| r.link(channel))
        .map(|l| l.index)
        .max()
        .expect("non-empty");
    let span = (max_index - min_index) as usize + 1;
    // Best record per photon; records are in electron order, so strict `<`
    // keeps the earliest electron among equal |τ|.
    let mut best: Vec<(u32, u32)> = vec![(u32::MAX, u32::MAX); span];
    for (i, r) in records.iter().enumerate() {
        if let Some(l) = r.link(channel) {
            let slot = &mut best[(l.index - min_index) as usize];
            let d = l.tau.unsigned_abs();
            if d < slot.0 {
                *slot = (d, i as u32);
            }
        }
    }
    for (i, r) in records.iter_mut().enumerate() {
        let flag = r
            .link(channel)
            .is_some_and(|l| best[(l.index - min_index) as usize].1 == i as u32);
        set_true(r, channel, flag);
    }
}

fn set_true(r: &mut TripleRecord, channel: Channel, flag: bool) {
    match channel {
        Channel::A => r.true_a = flag,
        Channel::B => r.true_b = flag,
    }
}

/// Uniform binning; bin `i` covers `[start + i w, start + (i+1) w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub width: f64,
    pub bins: usize,
}

impl Axis {
    pub fn new(start: f64, width: f64, bins: usize) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && start.is_finite()) {
            return Err(invalid("axis", "width must be > 0 and start finite"));
        }
        if bins == 0 {
            return Err(invalid("axis", "needs at least one bin"));
        }
        Ok(Self { start, width, bins })
    }

    /// Covers `[lo, hi)` with bins of `width` whose edges sit on multiples of `width`.
    pub fn aligned(lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid("axis", "range must be non-empty"));
        }
        let first = (lo / width).floor();
        let last = (hi / width).ceil();
        Self::new(first * width, width, (last - first).max(1.0) as usize)
    }

    pub fn end(&self) -> f64 {
        self.start + self.width * self.bins as f64
    }

    pub fn index(&self, v: f64) -> Option<usize> {
        let i = ((v - self.start) / self.width).floor();
        (i >= 0.0 && i < self.bins as f64).then_some(i as usize)
    }

    pub fn center(&self, i: usize) -> f64 {
        self.start + (i as f64 + 0.5) * self.width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.center(i)).collect()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins)
            .map(|i| self.start + i as f64 * self.width)
            .collect()
    }

    /// Bins whose centers fall in `[lo, hi]`.
    pub fn range_bins(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let first = ((lo - self.start) / self.width - 0.5).ceil().max(0.0) as usize;
        let last = (((hi - self.start) / self.width - 0.5).floor() + 1.0).max(0.0) as usize;
        first.min(self.bins)..last.min(self.bins).max(first.min(self.bins))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeAxes {
    /// Delay axes in ps.
    pub tau_a: Axis,
    pub tau_b: Axis,
    /// Energy loss axis in eV.
    pub energy: Axis,
}

impl CubeAxes {
    /// Delay bins aligned on multiples of `tau_bin` covering `±max_delay`.
    pub fn new(max_delay: f64, tau_bin: f64, e_lo: f64, e_hi: f64, e_bin: f64) -> Result<Self> {
        let d = max_delay * 1e12;
        let w = tau_bin * 1e12;
        let tau = Axis::aligned(-d, d + w * 1e-9, w)?;
        Ok(Self {
            tau_a: tau,
            tau_b: tau,
            energy: Axis::new(
                e_lo,
                e_bin,
                ((e_hi - e_lo) / e_bin).round().max(1.0) as usize,
            )?,
        })
    }

    pub fn from_config(a: &crate::config::AnalysisConfig) -> Result<Self> {
        Self::new(
            a.max_delay,
            a.tau_bin,
            a.energy_min,
            a.energy_max,
            a.energy_bin,
        )
    }

    fn len(&self) -> usize {
        self.tau_a.bins * self.tau_b.bins * self.energy.bins
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordFilter {
    /// Every nearest-photon link.
    All,
    /// Only links flagged as true coincidences.
    TrueOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overflow {
    /// Complete triples outside the cube.
    pub triples: u64,
    pub pairs_a: u64,
    pub pairs_b: u64,
    pub electrons: u64,
}

/// Threefold histogram with the marginals needed for heralded correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceCube {
    pub axes: CubeAxes,
    pub filter: RecordFilter,
    /// Row-major `[τ_A][τ_B][E]`.
    pub counts: Vec<u64>,
    /// `N_{e,A}(τ_A, E)`, row-major `[τ_A][E]`.
    pub counts_a: Vec<u64>,
    /// `N_{e,B}(τ_B, E)`, row-major `[τ_B][E]`.
    pub counts_b: Vec<u64>,
    /// `N_e(E)` over all electrons.
    pub totals: Vec<u64>,
    pub overflow: Overflow,
    pub electrons: u64,
    pub triples: u64,
}

impl CoincidenceCube {
    pub fn empty(axes: CubeAxes, filter: RecordFilter) -> Self {
        Self {
            axes,
            filter,
            counts: vec![0; axes.len()],
            counts_a: vec![0; axes.tau_a.bins * axes.energy.bins],
            counts_b: vec![0; axes.tau_b.bins * axes.energy.bins],
            totals: vec![0; axes.energy.bins],
            overflow: Overflow::default(),
            electrons: 0,
            triples: 0,
        }
    }

    pub fn at(&self, ia: usize, ib: usize, ie: usize) -> u64 {
        let ne = self.axes.energy.bins;
        self.counts[(ia * self.axes.tau_b.bins + ib) * ne + ie]
    }

    /// Electron-photon delay histogram on one channel, summed over the energy
    /// bins whose centers lie in `energy` (all bins when `None`).
    pub fn pair_histogram(&self, channel: Channel, energy: Option<(f64, f64)>) -> Result<Vec<u64>> {
        let re = selected(&self.axes.energy, energy)?;
        let bins = match channel {
            Channel::A => self.axes.tau_a.bins,
            Channel::B => self.axes.tau_b.bins,
        };
        Ok((0..bins)
            .map(|i| {
                re.clone()
                    .map(|ie| match channel {
                        Channel::A => self.pair_a(i, ie),
                        Channel::B => self.pair_b(i, ie),
                    })
                    .sum()
            })
            .collect())
    }

    pub fn pair_a(&self, ia: usize, ie: usize) -> u64 {
        self.counts_a[ia * self.axes.energy.bins + ie]
    }

    pub fn pair_b(&self, ib: usize, ie: usize) -> u64 {
        self.counts_b[ib * self.axes.energy.bins + ie]
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn fill(&mut self, records: &[TripleRecord]) {
        let true_only = self.filter == RecordFilter::TrueOnly;
        let ax = self.axes;
        let ne = ax.energy.bins;
        for r in records {
            self.electrons += 1;
            let ie = ax.energy.index(r.energy as f64);
            match ie {
                Some(ie) => self.totals[ie] += 1,
                None => self.overflow.electrons += 1,
            }
            let ta = r.tau(Channel::A, true_only);
            let tb = r.tau(Channel::B, true_only);
            let ia = ta.and_then(|t| ax.tau_a.index(t as f64));
            let ib = tb.and_then(|t| ax.tau_b.index(t as f64));
            if ta.is_some() {
                match (ia, ie) {
                    (Some(ia), Some(ie)) => self.counts_a[ia * ne + ie] += 1,
                    _ => self.overflow.pairs_a += 1,
                }
            }
            if tb.is_some() {
                match (ib, ie) {
                    (Some(ib), Some(ie)) => self.counts_b[ib * ne + ie] += 1,
                    _ => self.overflow.pairs_b += 1,
                }
            }
            if ta.is_some() && tb.is_some() {
                self.triples += 1;
                match (ia, ib, ie) {
                    (Some(ia), Some(ib), Some(ie)) => {
                        self.counts[(ia * ax.tau_b.bins + ib) * ne + ie] += 1
                    }
                    _ => self.overflow.triples += 1,
                }
            }
        }
    }

    /// Elementwise sum; both cubes must share axes and filter.
    pub fn merge(&mut self, other: &CoincidenceCube) -> Result<()> {
        if self.axes != other.axes || self.filter != other.filter {
            return Err(invalid(
                "cube",
                "cannot merge cubes with different axes or filters",
            ));
        }
        let add = |a: &mut [u64], b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.counts, &other.counts);
        add(&mut self.counts_a, &other.counts_a);
        add(&mut self.counts_b, &other.counts_b);
        add(&mut self.totals, &other.totals);
        self.overflow.triples += other.overflow.triples;
        self.overflow.pairs_a += other.overflow.pairs_a;
        self.overflow.pairs_b += other.overflow.pairs_b;
        self.overflow.electrons += other.overflow.electrons;
        self.electrons += other.electrons;
        self.triples += other.triples;
        Ok(())
    }

    /// JSON header line followed by the counts as little-endian `u64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = CubeHeader {
            axes: self.axes,
            filter: self.filter,
            counts_a: self.counts_a.clone(),
            counts_b: self.counts_b.clone(),
            totals: self.totals.clone(),
            overflow: self.overflow.clone(),
            electrons: self.electrons,
            triples: self.triples,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut block = Vec::with_capacity(self.counts.len() * 8);
        for c in &self.counts {
            block.extend_from_slice(&c.to_le_bytes());
        }
        w.write_all(&block)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Schema("cube file lacks a header line".into()))?;
        let header: CubeHeader = serde_json::from_slice(&bytes[..nl])?;
        let block = &bytes[nl + 1..];
        let n = header.axes.len();
        if block.len() != n * 8 {
            return Err(Error::Schema(format!(
                "cube block has {} bytes, expected {}",
                block.len(),
                n * 8
            )));
        }
        let counts = block
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            axes: header.axes,
            filter: header.filter,
            counts,
            counts_a: header.counts_a,
            counts_b: header.counts_b,
            totals: header.totals,
            overflow: header.overflow,
            electrons: header.electrons,
            triples: header.triples,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CubeHeader {
    axes: CubeAxes,
    filter: RecordFilter,
    counts_a: Vec<u64>,
    counts_b: Vec<u64>,
    totals: Vec<u64>,
    overflow: Overflow,
    electrons: u64,
    triples: u64,
}

pub fn build_cube(
    records: &[TripleRecord],
    axes: CubeAxes,
    filter: RecordFilter,
) -> CoincidenceCube {
    let mut cube = CoincidenceCube::empty(axes, filter);
    cube.fill(records);
    cube
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CubeAxis {
    TauA,
    TauB,
    Energy,
    /// `τ_A - τ_B`.
    TauDiff,
}

/// Axes to keep and value ranges (inclusive on bin centers) to sum over.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub keep: Vec<CubeAxis>,
    pub tau_a: Option<(f64, f64)>,
    pub tau_b: Option<(f64, f64)>,
    pub energy: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub axes: Vec<(CubeAxis, Axis)>,
    /// Row-major over `axes`; a single value when no axis is kept.
    pub values: Vec<u64>,
}

impl Projection {
    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<&str> = self
            .axes
            .iter()
            .map(|(a, _)| match a {
                CubeAxis::TauA => "tau_a_ps",
                CubeAxis::TauB => "tau_b_ps",
                CubeAxis::Energy => "energy_ev",
                CubeAxis::TauDiff => "tau_diff_ps",
            })
            .collect();
        let mut header = names.join(",");
        if !header.is_empty() {
            header.push(',');
        }
        writeln!(w, "{header}counts")?;
        let dims: Vec<usize> = self.axes.iter().map(|(_, a)| a.bins).collect();
        for (flat, v) in self.values.iter().enumerate() {
            let mut rem = flat;
            let mut coords = vec![0.0; dims.len()];
            for k in (0..dims.len()).rev() {
                coords[k] = self.axes[k].1.center(rem % dims[k]);
                rem /= dims[k];
            }
            for c in coords {
                write!(w, "{c},")?;
            }
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

fn selected(axis: &Axis, range: Option<(f64, f64)>) -> Result<std::ops::Range<usize>> {
    match range {
        None => Ok(0..axis.bins),
        Some((lo, hi)) => {
            let r = axis.range_bins(lo, hi);
            if r.is_empty() {
                Err(invalid("range", format!("[{lo}, {hi}] selects no bins")))
            } else {
                Ok(r)
            }
        }
    }
}

/// Sums the cube over discarded axes restricted to the given ranges.
pub fn project(cube: &CoincidenceCube, spec: &ProjectionSpec) -> Result<Projection> {
    let ax = cube.axes;
    let ra = selected(&ax.tau_a, spec.tau_a)?;
    let rb = selected(&ax.tau_b, spec.tau_b)?;
    let re = selected(&ax.energy, spec.energy)?;
    let has_diff = spec.keep.contains(&CubeAxis::TauDiff);
    if has_diff && (spec.keep.contains(&CubeAxis::TauA) || spec.keep.contains(&CubeAxis::TauB)) {
        return Err(invalid(
            "keep",
            "the difference axis replaces both delay axes",
        ));
    }
    for (i, a) in spec.keep.iter().enumerate() {
        if spec.keep[..i].contains(a) {
            return Err(invalid("keep", "axes must not repeat"));
        }
    }
    let diff_axis = if has_diff {
        if (ax.tau_a.width - ax.tau_b.width).abs() > 1e-9 * ax.tau_a.width {
            return Err(invalid(
                "keep",
                "difference axis needs equal delay bin widths",
            ));
        }
        let w = ax.tau_a.width;
        let lo = -(ax.tau_b.bins as f64 - 1.0);
        Some(Axis::new(
            ax.tau_a.start - ax.tau_b.start + (lo - 0.5) * w,
            w,
            ax.tau_a.bins + ax.tau_b.bins - 1,
        )?)
    } else {
        None
    };
    let out_axes: Vec<(CubeAxis, Axis)> = spec
        .keep
        .iter()
        .map(|&a| {
            let axis = match a {
                CubeAxis::TauA => ax.tau_a,
                CubeAxis::TauB => ax.tau_b,
                CubeAxis::Energy => ax.energy,
                CubeAxis::TauDiff => diff_axis.expect("set above"),
            };
            (a, axis)
        })
        .collect();
    let dims: Vec<usize> = out_axes.iter().map(|(_, a)| a.bins).collect();
    let mut values = vec![0u64; dims.iter().product()];
    let nb = ax.tau_b.bins as isize;
    for ia in ra.clone() {
        for ib in rb.clone() {
            for ie in re.clone() {
                let v = cube.at(ia, ib, ie);
                if v == 0 {
                    continue;
                }
                let mut flat = 0;
                for (k, (a, _)) in out_axes.iter().enumerate() {
                    let i = match a {
                        CubeAxis::TauA => ia,
                        CubeAxis::TauB => ib,
                        CubeAxis::Energy => ie,
                        CubeAxis::TauDiff => (ia as isize - ib as isize + nb - 1) as usize,
                    };
                    flat = flat * dims[k] + i;
                }
                values[flat] += v;
            }
        }
    }
    Ok(Projection {
        axes: out_axes,
        values,
    })
}

/// Parallel matching, deduplication and cube building over electron time shards.
///
/// Each shard also sees electrons within `2·max_delay` and photons within
/// `3·max_delay` of its window, which is enough for every decision about its own
/// electrons to match the unsharded result exactly.
pub fn correlate_sharded(
    s: Streams<'_>,
    max_delay: f64,
    axes: CubeAxes,
    filter: RecordFilter,
    shards: usize,
    threads: usize,
) -> Result<(Vec<TripleRecord>, CoincidenceCube)> {
    validate_streams(&s)?;
    let d = seconds_to_ps(max_delay);
    check_max_delay(d)?;
    let shards = shards.max(1).min(s.electrons.len().max(1));
    let n = s.electrons.len();
    let bounds: Vec<(usize, usize)> = (0..shards)
        .map(|k| (k * n / shards, (k + 1) * n / shards))
        .collect();
    let run = |&(lo, hi): &(usize, usize)| -> (Vec<TripleRecord>, CoincidenceCube) {
        if lo == hi {
            return (Vec::new(), CoincidenceCube::empty(axes, filter));
        }
        let (t0, t1) = (s.electrons[lo], s.electrons[hi - 1]);
        let e_lo = s
            .electrons
            .partition_point(|&t| t < t0.saturating_sub(2 * d));
        let e_hi = s
            .electrons
            .partition_point(|&t| t <= t1.saturating_add(2 * d));
        let slice = |p: &[i64]| {
            let a = p.partition_point(|&t| t < t0.saturating_sub(3 * d));
            let b = p.partition_point(|&t| t <= t1.saturating_add(3 * d));
            (a, b)
        };
        let (pa0, pa1) = slice(s.photons_a);
        let (pb0, pb1) = slice(s.photons_b);
        let sub = Streams {
            electrons: &s.electrons[e_lo..e_hi],
            energies: &s.energies[e_lo..e_hi],
            photons_a: &s.photons_a[pa0..pa1],
            photons_b: &s.photons_b[pb0..pb1],
        };
        let mut records = match_core(sub, d, [pa0 as u32, pb0 as u32]);
        dedupe_true_coincidences(&mut records);
        let own = records[lo - e_lo..hi - e_lo].to_vec();
        let cube = build_cube(&own, axes, filter);
        (own, cube)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    let parts: Vec<(Vec<TripleRecord>, CoincidenceCube)> =
        pool.install(|| bounds.par_iter().map(run).collect());
    let mut records = Vec::with_capacity(n);
    let mut cube = CoincidenceCube::empty(axes, filter);
    for (r, c) in parts {
        records.extend(r);
        cube.merge(&c)?;
    }
    Ok((records, cube))
}

/// Single-threaded match, dedupe and cube build.
pub fn correlate(
    s: Streams<'_>,
    max_delay: f64,
    axes: CubeAxes,
    filter: RecordFilter,
) -> Result<(Vec<TripleRecord>, CoincidenceCube)> {
    let mut records = match_coincidences(s, max_delay)?;
    dedupe_true_coincidences(&mut records);
    let cube = build_cube(&records, axes, filter);
    Ok((records, cube))
}
