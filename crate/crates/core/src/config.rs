//! INI-style run configuration with unit-suffixed keys.
//!
//! Every key that is absent falls back to the shipped paper preset, so a config
//! file only needs to list what it changes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{CouplingSpec, SpectrumParams};
use crate::simgen::{ElectronChain, ExperimentConfig, PhotonChannel};

pub const PAPER_PRESET: &str = include_str!("../../../presets/paper.cfg");

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Largest electron-photon delay considered, s.
    pub max_delay: f64,
    pub tau_bin: f64,
    pub energy_bin: f64,
    pub energy_min: f64,
    pub energy_max: f64,
    /// Half width of the sideband selection windows, eV.
    pub window_half_width: f64,
    /// Largest |τ| of a true coincidence, s.
    pub coincidence_window: f64,
    pub cluster_window: f64,
    /// Zero disables drift correction.
    pub drift_window: f64,
    pub g2_bin: f64,
    pub g2_span: f64,
}

impl AnalysisConfig {
    /// Energy window around the `m`-th sideband.
    pub fn sideband_window(&self, m: usize, photon_energy: f64) -> (f64, f64) {
        let c = m as f64 * photon_energy;
        (c - self.window_half_width, c + self.window_half_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn paper() -> Self {
        let mut cfg = skeleton();
        apply_text(&mut cfg, PAPER_PRESET).expect("shipped preset parses");
        cfg
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::paper();
        apply_text(&mut cfg, text)?;
        cfg.experiment.validate().map_err(|e| Error::Config {
            line: 0,
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plain data serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Canonical config text; parsing it reproduces `self`.
    pub fn to_ini(&self) -> String {
        let e = &self.experiment;
        let p = &e.physics;
        let a = &self.analysis;
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "seed = {}", e.seed);
        let _ = writeln!(s, "duration_s = {:?}", e.duration);
        let _ = writeln!(s, "electron_rate_per_s = {:?}", e.electron_rate);
        let _ = writeln!(s, "max_electrons = {:?}", e.max_electrons);
        let _ = writeln!(s, "emit_pixels = {}", e.emit_pixels);
        let _ = writeln!(s, "zlp_drift_ev_per_s = {:?}", e.zlp_drift_rate);
        let _ = writeln!(s, "\n[physics]");
        let _ = writeln!(s, "zlp_sigma_ev = {:?}", p.zlp_sigma);
        let _ = writeln!(s, "photon_energy_ev = {:?}", p.photon_energy);
        let _ = writeln!(s, "mean_g0 = {:?}", p.coupling.mean_g0);
        let _ = writeln!(s, "std_g0 = {:?}", p.coupling.std_g0);
        let _ = writeln!(s, "continuum_prob = {:?}", p.continuum_prob);
        let _ = writeln!(s, "continuum_decay_ev = {:?}", p.continuum_decay);
        let _ = writeln!(s, "pm_bandwidth_ev = {:?}", p.pm_bandwidth);
        let _ = writeln!(s, "splitter_ratio = {:?}", e.splitter_ratio);
        let c = &e.electron;
        let _ = writeln!(s, "\n[electron]");
        let _ = writeln!(s, "transmission = {:?}", c.transmission);
        let _ = writeln!(s, "jitter_fwhm_s = {:?}", c.jitter_fwhm);
        let _ = writeln!(s, "timestamp_quantum_s = {:?}", c.timestamp_quantum);
        let _ = writeln!(s, "pixel_dispersion_ev = {:?}", c.pixel_dispersion);
        let _ = writeln!(s, "mean_cluster_size = {:?}", c.mean_cluster_size);
        let _ = writeln!(s, "zlp_column = {:?}", c.zlp_column);
        let _ = writeln!(s, "spot_row = {:?}", c.spot_row);
        let _ = writeln!(s, "spot_row_sigma_px = {:?}", c.spot_row_sigma);
        let _ = writeln!(s, "pixel_jitter_s = {:?}", c.pixel_jitter_sigma);
        for (name, ch) in [("channel_a", &e.channel_a), ("channel_b", &e.channel_b)] {
            let _ = writeln!(s, "\n[{name}]");
            let _ = writeln!(s, "efficiency = {:?}", ch.efficiency);
            let _ = writeln!(s, "jitter_fwhm_s = {:?}", ch.jitter_fwhm);
            let _ = writeln!(s, "dead_time_s = {:?}", ch.dead_time);
            let _ = writeln!(s, "dark_rate_per_s = {:?}", ch.dark_rate);
            let _ = writeln!(s, "timestamp_quantum_s = {:?}", ch.timestamp_quantum);
        }
        let _ = writeln!(s, "\n[analysis]");
        let _ = writeln!(s, "max_delay_s = {:?}", a.max_delay);
        let _ = writeln!(s, "tau_bin_s = {:?}", a.tau_bin);
        let _ = writeln!(s, "energy_bin_ev = {:?}", a.energy_bin);
        let _ = writeln!(s, "energy_min_ev = {:?}", a.energy_min);
        let _ = writeln!(s, "energy_max_ev = {:?}", a.energy_max);
        let _ = writeln!(s, "window_half_width_ev = {:?}", a.window_half_width);
        let _ = writeln!(s, "coincidence_window_s = {:?}", a.coincidence_window);
        let _ = writeln!(s, "cluster_window_s = {:?}", a.cluster_window);
        let _ = writeln!(s, "drift_window_s = {:?}", a.drift_window);
        let _ = writeln!(s, "g2_bin_s = {:?}", a.g2_bin);
        let _ = writeln!(s, "g2_span_s = {:?}", a.g2_span);
        s
    }
}

pub fn paper_preset() -> ExperimentConfig {
    RunConfig::paper().experiment
}

fn skeleton() -> RunConfig {
    let channel = PhotonChannel {
        efficiency: 0.0,
        jitter_fwhm: 0.0,
        dead_time: 0.0,
        dark_rate: 0.0,
        timestamp_quantum: 1e-12,
    };
    RunConfig {
        experiment: ExperimentConfig {
            electron_rate: 0.0,
            duration: 0.0,
            physics: SpectrumParams {
                zlp_sigma: 1.0,
                photon_energy: 1.0,
                coupling: CouplingSpec::fixed(0.0),
                continuum_prob: 0.0,
                continuum_decay: 1.0,
                pm_bandwidth: 0.0,
            },
            splitter_ratio: 0.5,
            channel_a: channel,
            channel_b: channel,
            electron: ElectronChain {
                transmission: 1.0,
                jitter_fwhm: 0.0,
                timestamp_quantum: 1e-12,
                pixel_dispersion: 1.0,
                mean_cluster_size: 1.0,
                zlp_column: 0.0,
                spot_row: 0.0,
                spot_row_sigma: 0.0,
                pixel_jitter_sigma: 0.0,
            },
            zlp_drift_rate: 0.0,
            emit_pixels: false,
            max_electrons: 1e9,
            seed: 0,
        },
        analysis: AnalysisConfig {
            max_delay: 0.0,
            tau_bin: 0.0,
            energy_bin: 0.0,
            energy_min: 0.0,
            energy_max: 0.0,
            window_half_width: 0.0,
            coincidence_window: 0.0,
            cluster_window: 0.0,
            drift_window: 0.0,
            g2_bin: 0.0,
            g2_span: 0.0,
        },
    }
}

fn apply_text(cfg: &mut RunConfig, text: &str) -> Result<()> {
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |reason: String| Error::Config {
            line: line_no,
            reason,
        };
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err("unterminated section header".into()))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(format!(
                    "unknown section [{name}]; expected one of {}",
                    SECTIONS.join(", ")
                )));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if section.is_empty() {
            return Err(err(format!("key `{key}` appears before any section")));
        }
        set_key(cfg, &section, key, value).map_err(|r| {
            if r.contains(&format!("`{key}`")) {
                err(r)
            } else {
                err(format!("{key}: {r}"))
            }
        })?;
    }
    Ok(())
}

const SECTIONS: [&str; 6] = [
    "run",
    "physics",
    "electron",
    "channel_a",
    "channel_b",
    "analysis",
];

fn num(value: &str) -> std::result::Result<f64, String> {
    let v: f64 = value
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{value}` is not finite"))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Unit {
    Time,
    Rate,
    Energy,
    Pixels,
}

/// Splits `name_unit` into the base name, the factor to SI units and the kind.
fn unit_of(key: &str) -> Option<(&str, f64, Unit)> {
    const UNITS: [(&str, f64, Unit); 8] = [
        ("_per_s", 1.0, Unit::Rate),
        ("_s", 1.0, Unit::Time),
        ("_ms", 1e-3, Unit::Time),
        ("_us", 1e-6, Unit::Time),
        ("_ns", 1e-9, Unit::Time),
        ("_ps", 1e-12, Unit::Time),
        ("_ev", 1.0, Unit::Energy),
        ("_px", 1.0, Unit::Pixels),
    ];
    UNITS
        .iter()
        .find_map(|&(suffix, f, u)| key.strip_suffix(suffix).map(|base| (base, f, u)))
}

fn set_key(
    cfg: &mut RunConfig,
    section: &str,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    let e = &mut cfg.experiment;
    let unknown = || format!("unknown key `{key}` in [{section}]");
    match (section, key) {
        ("run", "seed") => {
            e.seed = value
                .parse()
                .map_err(|_| format!("`{value}` is not an unsigned 64-bit integer"))?
        }
        ("run", "emit_pixels") => {
            e.emit_pixels = value
                .parse()
                .map_err(|_| format!("`{value}` is not true or false"))?
        }
        ("run", "max_electrons") => e.max_electrons = num(value)?,
        ("run", "current_pa") => e.electron_rate = num(value)? * 1e-12 / ELEMENTARY_CHARGE,
        ("physics", "mean_g0") => e.physics.coupling.mean_g0 = num(value)?,
        ("physics", "std_g0") => e.physics.coupling.std_g0 = num(value)?,
        ("physics", "continuum_prob") => e.physics.continuum_prob = num(value)?,
        ("physics", "splitter_ratio") => e.splitter_ratio = num(value)?,
        ("electron", "transmission") => e.electron.transmission = num(value)?,
        ("electron", "mean_cluster_size") => e.electron.mean_cluster_size = num(value)?,
        ("electron", "zlp_column") => e.electron.zlp_column = num(value)?,
        ("electron", "spot_row") => e.electron.spot_row = num(value)?,
        ("channel_a" | "channel_b", "efficiency") => {
            let ch = if section == "channel_a" {
                &mut e.channel_a
            } else {
                &mut e.channel_b
            };
            ch.efficiency = num(value)?;
        }
        _ => {
            let (base, factor, unit) = unit_of(key).ok_or_else(|| {
                format!(
                    "{}; keys carry a unit suffix such as _s, _ns or _ev",
                    unknown()
                )
            })?;
            let v = num(value)? * factor;
            let a = &mut cfg.analysis;
            use Unit::*;
            let slot: &mut f64 = match (section, base, unit) {
                ("run", "duration", Time) => &mut e.duration,
                ("run", "electron_rate", Rate) => &mut e.electron_rate,
                ("run", "zlp_drift_ev", Rate) => &mut e.zlp_drift_rate,
                ("physics", "zlp_sigma", Energy) => &mut e.physics.zlp_sigma,
                ("physics", "photon_energy", Energy) => &mut e.physics.photon_energy,
                ("physics", "continuum_decay", Energy) => &mut e.physics.continuum_decay,
                ("physics", "pm_bandwidth", Energy) => &mut e.physics.pm_bandwidth,
                ("electron", "jitter_fwhm", Time) => &mut e.electron.jitter_fwhm,
                ("electron", "timestamp_quantum", Time) => &mut e.electron.timestamp_quantum,
                ("electron", "pixel_dispersion", Energy) => &mut e.electron.pixel_dispersion,
                ("electron", "spot_row_sigma", Pixels) => &mut e.electron.spot_row_sigma,
                ("electron", "pixel_jitter", Time) => &mut e.electron.pixel_jitter_sigma,
                ("channel_a" | "channel_b", name, unit) => {
                    let ch = if section == "channel_a" {
                        &mut e.channel_a
                    } else {
                        &mut e.channel_b
                    };
                    match (name, unit) {
                        ("jitter_fwhm", Time) => &mut ch.jitter_fwhm,
                        ("dead_time", Time) => &mut ch.dead_time,
                        ("dark_rate", Rate) => &mut ch.dark_rate,
                        ("timestamp_quantum", Time) => &mut ch.timestamp_quantum,
                        _ => return Err(unknown()),
                    }
                }
                ("analysis", name, Time) => match name {
                    "max_delay" => &mut a.max_delay,
                    "tau_bin" => &mut a.tau_bin,
                    "coincidence_window" => &mut a.coincidence_window,
                    "cluster_window" => &mut a.cluster_window,
                    "drift_window" => &mut a.drift_window,
                    "g2_bin" => &mut a.g2_bin,
                    "g2_span" => &mut a.g2_span,
                    _ => return Err(unknown()),
                },
                ("analysis", name, Energy) => match name {
                    "energy_bin" => &mut a.energy_bin,
                    "energy_min" => &mut a.energy_min,
                    "energy_max" => &mut a.energy_max,
                    "window_half_width" => &mut a.window_half_width,
                    _ => return Err(unknown()),
                },
                _ => return Err(unknown()),
            };
            *slot = v;
        }
    }
    Ok(())
}
