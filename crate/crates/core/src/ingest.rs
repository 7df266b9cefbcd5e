//! Raw stream I/O and electron event reconstruction.
//!
//! Event file: magic `EHPEVT01` followed by 16-byte little-endian records
//! `u8 kind, u8 channel, u16 flags, i64 time_ps, f32 energy_ev`.
//! Pixel file: magic `EHPPIX01` followed by 12-byte records `u16 x, u16 y, i64 time_ps`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, ParseErrorKind, Result};
use crate::simgen::{
    seconds_to_ps, Channel, Event, EventKind, EventStream, PixelHit, DETECTOR_PIXELS,
    MAX_CLUSTER_SIZE,
};

pub const EVENT_MAGIC: &[u8; 8] = b"EHPEVT01";
pub const PIXEL_MAGIC: &[u8; 8] = b"EHPPIX01";
pub const EVENT_RECORD: usize = 16;
pub const PIXEL_RECORD: usize = 12;

fn parse_error(offset: usize, kind: ParseErrorKind) -> Error {
    Error::Parse { offset, kind }
}

pub fn encode_events(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + EVENT_RECORD * stream.len());
    out.extend_from_slice(EVENT_MAGIC);
    for e in &stream.events {
        let (kind, channel) = match e.kind {
            EventKind::Electron => (0u8, 0u8),
            EventKind::Photon(c) => (1, c.index() as u8),
        };
        out.push(kind);
        out.push(channel);
        out.extend_from_slice(&e.flags.to_le_bytes());
        out.extend_from_slice(&e.time.to_le_bytes());
        out.extend_from_slice(&e.energy.to_le_bytes());
    }
    out
}

pub fn parse_events(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < 8 || &bytes[..8] != EVENT_MAGIC {
        return Err(parse_error(0, ParseErrorKind::BadMagic));
    }
    let body = &bytes[8..];
    let full = body.len() / EVENT_RECORD;
    let mut events = Vec::with_capacity(full);
    let mut last = i64::MIN;
    for (i, r) in body.chunks(EVENT_RECORD).enumerate() {
        let offset = 8 + i * EVENT_RECORD;
        if r.len() < EVENT_RECORD {
            return Err(parse_error(offset, ParseErrorKind::Truncated));
        }
        let kind = match (r[0], r[1]) {
            (0, 0) => EventKind::Electron,
            (0, c) => return Err(parse_error(offset + 1, ParseErrorKind::BadChannel(c))),
            (1, 0) => EventKind::Photon(Channel::A),
            (1, 1) => EventKind::Photon(Channel::B),
            (1, c) => return Err(parse_error(offset + 1, ParseErrorKind::BadChannel(c))),
            (k, _) => return Err(parse_error(offset, ParseErrorKind::BadKind(k))),
        };
        let flags = u16::from_le_bytes([r[2], r[3]]);
        let time = i64::from_le_bytes(r[4..12].try_into().expect("8 bytes"));
        let energy = f32::from_le_bytes(r[12..16].try_into().expect("4 bytes"));
        if time < last {
            return Err(parse_error(offset + 4, ParseErrorKind::Unsorted));
        }
        last = time;
        events.push(Event {
            kind,
            time,
            energy,
            flags,
        });
    }
    Ok(EventStream { events })
}

pub fn encode_pixels(hits: &[PixelHit]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + PIXEL_RECORD * hits.len());
    out.extend_from_slice(PIXEL_MAGIC);
    for h in hits {
        out.extend_from_slice(&h.x.to_le_bytes());
        out.extend_from_slice(&h.y.to_le_bytes());
        out.extend_from_slice(&h.time.to_le_bytes());
    }
    out
}

pub fn parse_pixels(bytes: &[u8]) -> Result<Vec<PixelHit>> {
    if bytes.len() < 8 || &bytes[..8] != PIXEL_MAGIC {
        return Err(parse_error(0, ParseErrorKind::BadMagic));
    }
    let body = &bytes[8..];
    let mut hits = Vec::with_capacity(body.len() / PIXEL_RECORD);
    let mut last = i64::MIN;
    for (i, r) in body.chunks(PIXEL_RECORD).enumerate() {
        let offset = 8 + i * PIXEL_RECORD;
        if r.len() < PIXEL_RECORD {
            return Err(parse_error(offset, ParseErrorKind::Truncated));
        }
        let x = u16::from_le_bytes([r[0], r[1]]);
        let y = u16::from_le_bytes([r[2], r[3]]);
        for (c, at) in [(x, 0), (y, 2)] {
            if c >= DETECTOR_PIXELS {
                return Err(parse_error(offset + at, ParseErrorKind::BadCoordinate(c)));
            }
        }
        let time = i64::from_le_bytes(r[4..12].try_into().expect("8 bytes"));
        if time < last {
            return Err(parse_error(offset + 4, ParseErrorKind::Unsorted));
        }
        last = time;
        hits.push(PixelHit { x, y, time });
    }
    Ok(hits)
}

pub fn write_events_file(path: &Path, stream: &EventStream) -> Result<()> {
    std::fs::write(path, encode_events(stream))?;
    Ok(())
}

pub fn read_events_file(path: &Path) -> Result<EventStream> {
    parse_events(&std::fs::read(path)?)
}

pub fn write_pixels_file(path: &Path, hits: &[PixelHit]) -> Result<()> {
    std::fs::write(path, encode_pixels(hits))?;
    Ok(())
}

pub fn read_pixels_file(path: &Path) -> Result<Vec<PixelHit>> {
    parse_pixels(&std::fs::read(path)?)
}

pub fn write_events_csv<W: Write>(stream: &EventStream, mut w: W) -> Result<()> {
    writeln!(w, "kind,channel,flags,time_ps,energy_ev")?;
    for e in &stream.events {
        let (kind, channel) = match e.kind {
            EventKind::Electron => ("electron", ""),
            EventKind::Photon(Channel::A) => ("photon", "A"),
            EventKind::Photon(Channel::B) => ("photon", "B"),
        };
        writeln!(w, "{kind},{channel},{},{},{}", e.flags, e.time, e.energy)?;
    }
    Ok(())
}

pub fn write_pixels_csv<W: Write>(hits: &[PixelHit], mut w: W) -> Result<()> {
    writeln!(w, "x,y,time_ps")?;
    for h in hits {
        writeln!(w, "{},{},{}", h.x, h.y, h.time)?;
    }
    Ok(())
}

/// Per-pixel arrival time offsets, subtracted before clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelTimeOffsets {
    offsets: Vec<i64>,
}

impl PixelTimeOffsets {
    pub fn zeros() -> Self {
        let n = DETECTOR_PIXELS as usize;
        Self {
            offsets: vec![0; n * n],
        }
    }

    pub fn set(&mut self, x: u16, y: u16, offset_ps: i64) {
        let n = DETECTOR_PIXELS as usize;
        self.offsets[y as usize * n + x as usize] = offset_ps;
    }

    pub fn get(&self, x: u16, y: u16) -> i64 {
        self.offsets[y as usize * DETECTOR_PIXELS as usize + x as usize]
    }

    pub fn apply(&self, hits: &[PixelHit]) -> Vec<PixelHit> {
        let mut out: Vec<PixelHit> = hits
            .iter()
            .map(|h| PixelHit {
                time: h.time - self.get(h.x, h.y),
                ..*h
            })
            .collect();
        out.sort_by_key(|h| (h.time, h.x, h.y));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCluster {
    pub x: f64,
    pub y: f64,
    pub time: i64,
    pub size: u8,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let p = self.parent[i as usize];
            self.parent[i as usize] = self.parent[p as usize];
            i = p;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        // The smaller index is the root, so roots are the earliest hits.
        match ra.cmp(&rb) {
            std::cmp::Ordering::Less => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Greater => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Equal => {}
        }
    }
}

fn touching(a: &PixelHit, b: &PixelHit, window: i64) -> bool {
    a.x.abs_diff(b.x) <= 1 && a.y.abs_diff(b.y) <= 1 && a.time.abs_diff(b.time) <= window as u64
}

/// Groups hits that are 8-connected in space and within `window` seconds in time.
///
/// Groups larger than ten pixels are split by region growth from their earliest
/// hit, reseeding at the earliest unassigned hit, so a group of `n` hits becomes
/// exactly `ceil(n / 10)` clusters.
pub fn cluster_pixel_hits(hits: &[PixelHit], window: f64) -> Result<Vec<PixelCluster>> {
    if !(window >= 0.0 && window.is_finite()) {
        return Err(invalid("window", "must be finite and >= 0"));
    }
    if let Some(i) = hits.windows(2).position(|w| w[1].time < w[0].time) {
        return Err(Error::Unsorted { index: i + 1 });
    }
    let window = seconds_to_ps(window);
    let mut sets = DisjointSet::new(hits.len());
    let mut recent: HashMap<(u16, u16), Vec<u32>> = HashMap::new();
    for (i, h) in hits.iter().enumerate() {
        for dx in -1i32..=1 {
            for dy in -1i32..=1 {
                let (nx, ny) = (h.x as i32 + dx, h.y as i32 + dy);
                if nx < 0 || ny < 0 {
                    continue;
                }
                if let Some(list) = recent.get_mut(&(nx as u16, ny as u16)) {
                    list.retain(|&j| h.time - hits[j as usize].time <= window);
                    for &j in list.iter() {
                        sets.union(i as u32, j);
                    }
                }
            }
        }
        recent.entry((h.x, h.y)).or_default().push(i as u32);
    }

    let mut groups: HashMap<u32, Vec<u32>> = HashMap::new();
    for i in 0..hits.len() as u32 {
        let r = sets.find(i);
        groups.entry(r).or_default().push(i);
    }
    let mut roots: Vec<u32> = groups.keys().copied().collect();
    roots.sort_unstable();

    let mut out = Vec::with_capacity(roots.len());
    for r in roots {
        let members = &groups[&r];
        if members.len() <= MAX_CLUSTER_SIZE {
            out.push(summarize(hits, members));
        } else {
            for part in split_group(hits, members, window) {
                out.push(summarize(hits, &part));
            }
        }
    }
    out.sort_by(|a, b| {
        (a.time, a.x, a.y)
            .partial_cmp(&(b.time, b.x, b.y))
            .expect("finite centroids")
    });
    Ok(out)
}

fn split_group(hits: &[PixelHit], members: &[u32], window: i64) -> Vec<Vec<u32>> {
    let n = members.len();
    let mut taken = vec![false; n];
    let mut parts = Vec::with_capacity(n.div_ceil(MAX_CLUSTER_SIZE));
    let mut remaining = n;
    while remaining > 0 {
        let mut part = Vec::with_capacity(MAX_CLUSTER_SIZE);
        let mut frontier: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
        let mut queued = vec![false; n];
        while part.len() < MAX_CLUSTER_SIZE && remaining > 0 {
            let next = loop {
                match frontier.pop() {
                    Some(Reverse(k)) if !taken[k] => break Some(k),
                    Some(_) => continue,
                    None => break None,
                }
            };
            // Members are in time order, so the first free one is the earliest.
            let k = next.unwrap_or_else(|| taken.iter().position(|t| !t).expect("remaining > 0"));
            taken[k] = true;
            remaining -= 1;
            part.push(members[k]);
            let hk = &hits[members[k] as usize];
            for (j, &m) in members.iter().enumerate() {
                if !taken[j] && !queued[j] && touching(hk, &hits[m as usize], window) {
                    queued[j] = true;
                    frontier.push(Reverse(j));
                }
            }
        }
        parts.push(part);
    }
    parts
}

fn summarize(hits: &[PixelHit], members: &[u32]) -> PixelCluster {
    let n = members.len() as f64;
    let (mut sx, mut sy, mut t) = (0.0, 0.0, i64::MAX);
    for &m in members {
        let h = &hits[m as usize];
        sx += h.x as f64;
        sy += h.y as f64;
        t = t.min(h.time);
    }
    PixelCluster {
        x: sx / n,
        y: sy / n,
        time: t,
        size: members.len() as u8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    /// eV per pixel column.
    pub dispersion: f64,
    /// Column of zero energy loss.
    pub zlp_reference: f64,
    /// Drift correction window, s.
    pub drift_window: f64,
}

impl CalibrationMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return Err(invalid("dispersion", "must be > 0"));
        }
        if !(self.drift_window > 0.0) {
            return Err(invalid("drift_window", "must be > 0"));
        }
        Ok(())
    }

    pub fn energy_of_column(&self, x: f64) -> f64 {
        (self.zlp_reference - x) * self.dispersion
    }
}

/// Converts clusters into an electron-only event stream.
pub fn calibrate_energy(clusters: &[PixelCluster], cal: &CalibrationMap) -> Result<EventStream> {
    cal.validate()?;
    let events: Vec<Event> = clusters
        .iter()
        .map(|c| Event::electron(c.time, cal.energy_of_column(c.x) as f32))
        .collect();
    EventStream::new(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftWindow {
    pub start: i64,
    pub electrons: usize,
    /// Subtracted energy offset, eV.
    pub offset: f64,
    /// Too few electrons: the previous offset was reused.
    pub reused: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub windows: Vec<DriftWindow>,
}

pub const DRIFT_BIN: f64 = 0.03;
pub const DRIFT_MIN_ELECTRONS: usize = 100;
const PEAK_HALF_WIDTH: f64 = 0.25;

/// Locates the zero-loss peak center: mode within `|E| < limit`, refined by a
/// weighted parabola through the log counts around the mode.
///
/// A peak far from zero is truncated asymmetrically by the search range, so
/// the search is repeated once around the first estimate.
pub fn locate_zlp(energies: &[f32], limit: f64) -> Option<f64> {
    let first = locate_zlp_around(energies, 0.0, limit)?;
    Some(first + locate_zlp_around(energies, first, limit).unwrap_or(0.0))
}

fn locate_zlp_around(energies: &[f32], origin: f64, limit: f64) -> Option<f64> {
    let nb = (limit / DRIFT_BIN).ceil() as i64;
    let mut counts = vec![0.0f64; (2 * nb + 1) as usize];
    for &e in energies {
        let e = e as f64 - origin;
        if e.abs() < limit {
            let b = (e / DRIFT_BIN).round() as i64;
            if b.abs() <= nb {
                counts[(b + nb) as usize] += 1.0;
            }
        }
    }
    let (mode, &peak) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite").then(b.0.cmp(&a.0)))?;
    if peak <= 0.0 {
        return None;
    }
    let mut center = (mode as i64 - nb) as f64 * DRIFT_BIN;
    for _ in 0..2 {
        center = parabola_vertex(&counts, nb, center).unwrap_or(center);
    }
    Some(center)
}

fn parabola_vertex(counts: &[f64], nb: i64, center: f64) -> Option<f64> {
    // Weighted least squares of ln c = a + b u + c u^2 with weight c.
    let mut m = [[0.0f64; 3]; 3];
    let mut v = [0.0f64; 3];
    let mut used = 0;
    for (i, &c) in counts.iter().enumerate() {
        let e = (i as i64 - nb) as f64 * DRIFT_BIN;
        let u = e - center;
        if c <= 0.0 || u.abs() > PEAK_HALF_WIDTH {
            continue;
        }
        used += 1;
        let basis = [1.0, u, u * u];
        let y = c.ln();
        for r in 0..3 {
            v[r] += c * basis[r] * y;
            for s in 0..3 {
                m[r][s] += c * basis[r] * basis[s];
            }
        }
    }
    if used < 3 {
        return None;
    }
    let mat = nalgebra::Matrix3::from_fn(|r, s| m[r][s]);
    let sol = mat.lu().solve(&nalgebra::Vector3::from(v))?;
    if !(sol[2] < 0.0) {
        return None;
    }
    let shift = -sol[1] / (2.0 * sol[2]);
    (shift.abs() <= PEAK_HALF_WIDTH).then_some(center + shift)
}

/// Removes slow drifts of the energy axis by re-centering the zero-loss peak in
/// consecutive time windows. Photon events and all timestamps are untouched.
pub fn correct_zlp_drift(
    stream: &EventStream,
    window: f64,
    photon_energy: f64,
) -> Result<(EventStream, DriftReport)> {
    if !(window > 0.0) {
        return Err(invalid("window", "must be > 0"));
    }
    if !(photon_energy > 0.0) {
        return Err(invalid("photon_energy", "must be > 0"));
    }
    if let Some(i) = stream.events.windows(2).position(|w| w[1].time < w[0].time) {
        return Err(Error::Unsorted { index: i + 1 });
    }
    let w_ps = seconds_to_ps(window).max(1);
    let mut out = stream.clone();
    let mut report = DriftReport::default();
    let mut offset = 0.0;
    let idx: Vec<usize> = (0..stream.events.len())
        .filter(|&i| stream.events[i].kind == EventKind::Electron)
        .collect();
    let mut start = 0;
    while start < idx.len() {
        let k = stream.events[idx[start]].time.div_euclid(w_ps);
        let mut end = start;
        while end < idx.len() && stream.events[idx[end]].time.div_euclid(w_ps) == k {
            end += 1;
        }
        let energies: Vec<f32> = idx[start..end]
            .iter()
            .map(|&i| stream.events[i].energy)
            .collect();
        let n = energies.len();
        let located = (n >= DRIFT_MIN_ELECTRONS)
            .then(|| locate_zlp(&energies, photon_energy / 2.0))
            .flatten();
        let reused = located.is_none();
        if let Some(c) = located {
            offset = c;
        }
        for &i in &idx[start..end] {
            let e = &mut out.events[i];
            e.energy = (e.energy as f64 - offset) as f32;
        }
        report.windows.push(DriftWindow {
            start: k * w_ps,
            electrons: n,
            offset,
            reused,
        });
        start = end;
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hit(x: u16, y: u16, t: i64) -> PixelHit {
        PixelHit { x, y, time: t }
    }

    #[test]
    fn empty_payload() {
        let s = parse_events(EVENT_MAGIC).unwrap();
        assert!(s.is_empty());
        assert!(parse_pixels(PIXEL_MAGIC).unwrap().is_empty());
    }

    #[test]
    fn parse_errors_carry_offsets() {
        assert!(matches!(
            parse_events(b"EHPEVT02"),
            Err(Error::Parse {
                offset: 0,
                kind: ParseErrorKind::BadMagic
            })
        ));
        let s = EventStream {
            events: vec![Event::electron(5, 0.1), Event::photon(Channel::B, 7)],
        };
        let mut b = encode_events(&s);
        b.pop();
        assert!(matches!(
            parse_events(&b),
            Err(Error::Parse {
                offset: 24,
                kind: ParseErrorKind::Truncated
            })
        ));
        let mut b = encode_events(&s);
        b[24] = 7;
        assert!(matches!(
            parse_events(&b),
            Err(Error::Parse {
                offset: 24,
                kind: ParseErrorKind::BadKind(7)
            })
        ));
        let mut b = encode_events(&s);
        b[25] = 2;
        assert!(matches!(
            parse_events(&b),
            Err(Error::Parse {
                offset: 25,
                kind: ParseErrorKind::BadChannel(2)
            })
        ));
        let s = EventStream {
            events: vec![Event::electron(5, 0.1), Event::electron(6, 0.1)],
        };
        let mut b = encode_events(&s);
        b[28..36].copy_from_slice(&1i64.to_le_bytes());
        assert!(matches!(
            parse_events(&b),
            Err(Error::Parse {
                offset: 28,
                kind: ParseErrorKind::Unsorted
            })
        ));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = EventStream {
            events: vec![Event::electron(5, 0.5), Event::photon(Channel::A, 9)],
        };
        let mut buf = Vec::new();
        write_events_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("photon,A,0,9,0"));
    }

    #[test]
    fn single_hit_cluster() {
        let c = cluster_pixel_hits(&[hit(10, 20, 500)], 100e-9).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].x, c[0].y, c[0].time, c[0].size), (10.0, 20.0, 500, 1));
    }

    #[test]
    fn l_shaped_cluster() {
        let hits = [hit(5, 5, 0), hit(6, 5, 1000), hit(6, 6, 2000)];
        let c = cluster_pixel_hits(&hits, 100e-9).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].x - 17.0 / 3.0).abs() < 1e-12);
        assert!((c[0].y - 16.0 / 3.0).abs() < 1e-12);
        assert_eq!(c[0].time, 0);
    }

    #[test]
    fn temporal_window_separates() {
        let hits = [hit(5, 5, 0), hit(5, 6, 200_000)];
        assert_eq!(cluster_pixel_hits(&hits, 100e-9).unwrap().len(), 2);
        assert_eq!(cluster_pixel_hits(&hits, 300e-9).unwrap().len(), 1);
    }

    #[test]
    fn oversize_group_is_split() {
        let hits: Vec<PixelHit> = (0..25).map(|i| hit(100 + i, 50, i as i64)).collect();
        let c = cluster_pixel_hits(&hits, 100e-9).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|c| c.size as usize <= MAX_CLUSTER_SIZE));
        assert_eq!(c.iter().map(|c| c.size as usize).sum::<usize>(), 25);
        assert_eq!(c[0].x, 104.5);
    }

    #[test]
    fn calibration_examples() {
        let cal = CalibrationMap {
            dispersion: 0.03,
            zlp_reference: 400.0,
            drift_window: 10.0,
        };
        assert_eq!(cal.energy_of_column(400.0), 0.0);
        assert!((cal.energy_of_column(370.0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zlp_locator_is_unbiased_on_gaussian() {
        let n = 200_000;
        let sigma = 0.255;
        // Deterministic quantiles of N(0.07, sigma).
        let energies: Vec<f32> = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                (0.07 + sigma * std::f64::consts::SQRT_2 * inv_erf(2.0 * p - 1.0)) as f32
            })
            .collect();
        let c = locate_zlp(&energies, 0.45).unwrap();
        assert!((c - 0.07).abs() < 2e-3, "{c}");
    }

    fn inv_erf(y: f64) -> f64 {
        let mut x = 0.0;
        for _ in 0..100 {
            let f = libm::erf(x) - y;
            x -= f / (2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp());
            x = x.clamp(-6.0, 6.0);
        }
        x
    }

    #[test]
    fn sparse_window_reuses_offset() {
        let mut events: Vec<Event> = (0..500).map(|i| Event::electron(i * 1000, 0.1)).collect();
        events.push(Event::electron(20_000_000_000_000, 0.3));
        let s = EventStream { events };
        let (out, report) = correct_zlp_drift(&s, 10.0, 0.9).unwrap();
        assert_eq!(report.windows.len(), 2);
        assert!(!report.windows[0].reused);
        assert!(report.windows[1].reused);
        assert_eq!(report.windows[0].offset, report.windows[1].offset);
        assert_eq!(out.electron_times(), s.electron_times());
    }
}
