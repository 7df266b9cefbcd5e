//! Command implementations behind the `fockherald` binary: simulate, analyze
//! and report, each writing a manifest next to its outputs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::Analysis;
use crate::config::RunConfig;
use crate::correlate::{project, CubeAxis, ProjectionSpec};
use crate::error::Error;
use crate::ingest::{read_events_file, write_events_file, write_pixels_file};
use crate::model::{predicted_bunching, spectrum_model};
use crate::report::{write_bundle, Report, ReportMetadata};
use crate::simgen::generate;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ESTIMATOR: i32 = 4;

pub const ESTIMATORS: [&str; 11] = [
    "spectrum",
    "cube",
    "g2",
    "g2_heralded",
    "g2_time_averaged",
    "g2_discrete",
    "car",
    "efficiency",
    "csi",
    "coupling",
    "coincidence_spectrum",
];

/// Estimators run when none are requested.
pub const DEFAULT_ESTIMATORS: [&str; 13] = [
    "spectrum",
    "cube",
    "coincidence_spectrum",
    "g2",
    "g2_heralded: m=1",
    "g2_time_averaged: m=1",
    "g2_discrete",
    "g2_discrete: m=1",
    "car: m=1",
    "car: m=2",
    "efficiency",
    "csi",
    "coupling",
];

/// A failure with its exit code; `Display` is a single line.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(e: impl fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, "config", e)
    }

    pub fn data(e: impl fmt::Display) -> Self {
        Self::new(EXIT_DATA, "data", e)
    }

    fn new(code: i32, kind: &'static str, e: impl fmt::Display) -> Self {
        let message = e
            .to_string()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        Self {
            code,
            kind,
            message,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "error code={} kind={} reason={}",
            self.code, self.kind, self.message
        )
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the manifest's directory for outputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorFailure {
    pub spec: String,
    pub reason: String,
}

/// Provenance of one command invocation. `hash` covers the command, tool
/// version, config hash, seed, arguments and input digests; timings and
/// outputs are excluded so the hash is known before any output is written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub hash: String,
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub arguments: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub failures: Vec<EstimatorFailure>,
    pub timings: Vec<StageTiming>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        cfg: Option<&RunConfig>,
        arguments: Vec<String>,
        inputs: Vec<FileDigest>,
    ) -> Self {
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let config_hash = cfg.map(RunConfig::hash).unwrap_or_default();
        let seed = cfg.map_or(0, |c| c.experiment.seed);
        let key = serde_json::json!({
            "command": command,
            "tool_version": tool_version,
            "config_hash": config_hash,
            "seed": seed,
            "arguments": arguments,
            "inputs": inputs.iter().map(|i| &i.sha256).collect::<Vec<_>>(),
        });
        let hash = hex::encode(Sha256::digest(key.to_string().as_bytes()));
        Self {
            hash,
            command: command.into(),
            tool_version,
            config_hash,
            seed,
            arguments,
            inputs,
            outputs: Vec::new(),
            failures: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn metadata(&self) -> ReportMetadata {
        ReportMetadata {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            manifest: self.hash.clone(),
        }
    }

    fn time(&mut self, stage: &str, start: Instant) {
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    fn record_outputs(&mut self, dir: &Path, paths: &[PathBuf]) -> Result<(), CliError> {
        for p in paths {
            let name = p
                .strip_prefix(dir)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned();
            self.outputs.push(FileDigest {
                path: name,
                sha256: file_digest(p)?,
            });
        }
        Ok(())
    }

    fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(CliError::data)? + "\n";
        std::fs::write(&path, text).map_err(CliError::data)?;
        Ok(path)
    }
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn input(path: &Path) -> Result<FileDigest, CliError> {
    Ok(FileDigest {
        path: path.to_string_lossy().into_owned(),
        sha256: file_digest(path)?,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

/// Loads a config file (overrides on top of the paper preset) and applies a
/// seed override.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            RunConfig::load(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::paper(),
    };
    if let Some(s) = seed {
        cfg.experiment.seed = s;
    }
    Ok(cfg)
}

/// Writes `events.evt`, `truth.jsonl`, `config.cfg`, optionally `pixels.pix`,
/// and `manifest.json` into `out`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    cfg.experiment.validate().map_err(CliError::config)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("simulate", Some(cfg), Vec::new(), Vec::new());
    let t = Instant::now();
    let sim = generate(&cfg.experiment).map_err(CliError::config)?;
    manifest.time("generate", t);
    let t = Instant::now();
    let mut paths = Vec::new();
    let events = out.join("events.evt");
    write_events_file(&events, &sim.events).map_err(CliError::data)?;
    paths.push(events);
    if let Some(px) = &sim.pixels {
        let p = out.join("pixels.pix");
        write_pixels_file(&p, &px.hits).map_err(CliError::data)?;
        paths.push(p);
    }
    let truth = out.join("truth.jsonl");
    let f = std::io::BufWriter::new(std::fs::File::create(&truth).map_err(CliError::data)?);
    sim.truth.write_jsonl(f).map_err(CliError::data)?;
    paths.push(truth);
    let config = out.join("config.cfg");
    std::fs::write(&config, cfg.to_ini()).map_err(CliError::data)?;
    paths.push(config);
    manifest.time("write", t);
    manifest.record_outputs(out, &paths)?;
    manifest.write(out)?;
    Ok(manifest)
}

/// One requested estimator: `name` or `name: key=value, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub name: String,
    pub m: Option<usize>,
    pub threshold: Option<f64>,
    pub raw: String,
}

impl EstimatorSpec {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let (name, rest) = text.split_once(':').unwrap_or((text, ""));
        let name = name.trim();
        if !ESTIMATORS.contains(&name) {
            return Err(Error::Config {
                line: 0,
                reason: format!(
                    "unknown estimator '{name}'; valid names: {}",
                    ESTIMATORS.join(", ")
                ),
            });
        }
        let bad = |reason: String| Error::Config { line: 0, reason };
        let mut spec = Self {
            name: name.into(),
            m: None,
            threshold: None,
            raw: text.trim().into(),
        };
        for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("estimator option '{kv}' is not key=value")))?;
            match k.trim() {
                "m" if v.trim() == "none" => spec.m = None,
                "m" => {
                    spec.m = Some(
                        v.trim()
                            .parse()
                            .map_err(|_| bad(format!("m must be an integer, got '{v}'")))?,
                    )
                }
                "threshold" => {
                    spec.threshold = Some(
                        v.trim()
                            .parse()
                            .map_err(|_| bad(format!("threshold must be a number, got '{v}'")))?,
                    )
                }
                other => {
                    return Err(bad(format!(
                        "unknown option '{other}' for estimator {name}"
                    )))
                }
            }
        }
        Ok(spec)
    }

    fn suffix(&self) -> String {
        self.m.map_or(String::new(), |m| format!("_m{m}"))
    }
}

/// Reports for one estimator.
pub fn run_estimator(
    an: &Analysis,
    spec: &EstimatorSpec,
    out: &Path,
) -> Result<Vec<Report>, Error> {
    let cfg = &an.config;
    let a = &cfg.analysis;
    let name = spec.name.as_str();
    let reports = match name {
        "spectrum" => {
            let fit = an.fit_spectrum()?;
            let hist = an.spectrum_histogram();
            let x = hist.centers();
            let scale = hist.total() * hist.width;
            let model: Vec<f64> = spectrum_model(&fit.params, &x)?
                .iter()
                .map(|v| v * scale)
                .collect();
            let err: Vec<f64> = hist.counts.iter().map(|c| c.sqrt()).collect();
            let p = &fit.params;
            vec![Report::new(name, "spectrum")
                .figure("fig3a")
                .axis("energy", "ev", x)
                .data(&hist.counts, &err)
                .series("model", &model)
                .scalar("mean_g0", p.coupling.mean_g0)
                .scalar("std_g0", p.coupling.std_g0)
                .scalar("zlp_sigma_ev", p.zlp_sigma)
                .scalar("photon_energy_ev", p.photon_energy)
                .scalar("continuum_prob", p.continuum_prob)
                .scalar("continuum_decay_ev", p.continuum_decay)
                .scalar("pm_bandwidth_ev", p.pm_bandwidth)
                .scalar("p0", fit.populations.get(0))
                .scalar("p1", fit.populations.get(1))
                .scalar("p2", fit.populations.get(2))
                .scalar("reduced_chi2", fit.reduced_chi2)
                .scalar("iterations", fit.iterations as f64)
                .scalar("sub_poissonian", fit.sub_poissonian as u8 as f64)]
        }
        "cube" => {
            let f = std::io::BufWriter::new(std::fs::File::create(out.join("cube.bin"))?);
            an.cube.write_to(f)?;
            // Electron-photon map from the pair histograms: a triple projection
            // would only count electrons that also have a link on the other detector.
            let c = &an.cube;
            let pairs_a: Vec<f64> = c.counts_a.iter().map(|&v| v as f64).collect();
            let pairs_b: Vec<f64> = c.counts_b.iter().map(|&v| v as f64).collect();
            let err: Vec<f64> = pairs_a.iter().map(|v| v.sqrt()).collect();
            let mut map = Report::new(name, "cube_tau_energy")
                .figure("fig2c")
                .axis("tau", "ps", c.axes.tau_a.centers())
                .axis("energy", "ev", c.axes.energy.centers())
                .data(&pairs_a, &err);
            if c.axes.tau_a == c.axes.tau_b {
                map = map.series("channel_b", &pairs_b);
            }
            let mut reports = vec![map
                .scalar("electrons", c.electrons as f64)
                .scalar("overflow_pairs_a", c.overflow.pairs_a as f64)
                .scalar("overflow_pairs_b", c.overflow.pairs_b as f64)];
            let views: [(&str, &str, Vec<CubeAxis>, Option<usize>); 2] = [
                (
                    "cube_m1_tau_a_tau_b",
                    "fig4a",
                    vec![CubeAxis::TauA, CubeAxis::TauB],
                    Some(1),
                ),
                (
                    "cube_m2_tau_a_tau_b",
                    "fig4b",
                    vec![CubeAxis::TauA, CubeAxis::TauB],
                    Some(2),
                ),
            ];
            for (id, fig, keep, m) in views {
                let p = project(
                    &an.cube,
                    &ProjectionSpec {
                        keep,
                        energy: m.map(|m| an.window(m)),
                        ..Default::default()
                    },
                )?;
                let values: Vec<f64> = p.values.iter().map(|&v| v as f64).collect();
                let err: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
                let mut r = Report::new(name, id).figure(fig);
                for (ax, axis) in &p.axes {
                    let (n, u) = match ax {
                        CubeAxis::TauA => ("tau_a", "ps"),
                        CubeAxis::TauB => ("tau_b", "ps"),
                        CubeAxis::Energy => ("energy", "ev"),
                        CubeAxis::TauDiff => ("tau_diff", "ps"),
                    };
                    r = r.axis(n, u, axis.centers());
                }
                if let Some(m) = m {
                    r = r.param("m", m);
                }
                reports.push(
                    r.data(&values, &err)
                        .scalar("electrons", an.cube.electrons as f64)
                        .scalar("triples", an.cube.triples as f64)
                        .scalar("overflow_triples", an.cube.overflow.triples as f64),
                );
            }
            reports
        }
        "coincidence_spectrum" => {
            let (u, b) = an.coincidence_spectra();
            let err: Vec<f64> = u.counts.iter().map(|c| c.sqrt()).collect();
            vec![Report::new(name, "coincidence_spectrum")
                .figure("fig3d")
                .axis("energy", "ev", u.centers())
                .data(&u.counts, &err)
                .series("both_detectors", &b.counts)
                .scalar("union_total", u.total())
                .scalar("both_total", b.total())]
        }
        "g2" => {
            let c = an.g2_unheralded()?;
            let zero = c.at(0.0).map_or(f64::NAN, |v| v.0);
            vec![Report::new(name, "g2")
                .figure("fig4d")
                .param("bin_s", a.g2_bin)
                .param("span_s", a.g2_span)
                .axis("tau", "ps", c.tau.clone())
                .data(&c.g2, &c.stderr)
                .series("counts", &c.counts)
                .scalar("g2_zero", zero)
                .scalar(
                    "predicted_zero",
                    predicted_bunching(cfg.experiment.electron_rate, a.g2_bin).unwrap_or(f64::NAN),
                )
                .scalar("normalization", c.normalization)]
        }
        "g2_heralded" => {
            let m = spec.m.unwrap_or(1);
            let s = an.heralded_surface(m)?;
            let (ia, ib) = an.coincidence_cell(m);
            let centre = s.get(ia, ib);
            let mut r = Report::new(name, &format!("g2_heralded_m{m}"))
                .figure("fig4e")
                .param("m", m)
                .axis("tau_a", "ps", s.tau_a.centers())
                .axis("tau_b", "ps", s.tau_b.centers());
            r.values = s.values.clone();
            r.stderr = s.stderr.clone();
            vec![r
                .scalar("coincidence_value", centre.map_or(f64::NAN, |v| v.0))
                .scalar("coincidence_stderr", centre.map_or(f64::NAN, |v| v.1))]
        }
        "g2_time_averaged" => {
            let m = spec.m.unwrap_or(1);
            let c = an.time_averaged(m)?;
            let zero = c.at(0.0).map_or(f64::NAN, |v| v.0);
            vec![Report::new(name, &format!("g2_time_averaged_m{m}"))
                .figure("fig4e")
                .param("m", m)
                .axis("tau", "ps", c.tau.clone())
                .data(&c.g2, &c.stderr)
                .series("counts", &c.counts)
                .scalar("g2_zero", zero)]
        }
        "g2_discrete" => {
            let d = an.discrete(spec.m)?;
            let q: Vec<f64> = (0..d.g2.len()).map(|q| q as f64).collect();
            let (mean, mean_err) = d.mean_over(1..d.g2.len());
            let mut r = Report::new(name, &format!("g2_discrete{}", spec.suffix()))
                .figure("fig4f")
                .axis("q", "", q)
                .data(&d.g2, &d.stderr)
                .series("pairs", &d.pairs)
                .scalar("g2_zero", d.g2[0])
                .scalar("g2_zero_stderr", d.stderr[0])
                .scalar("g2_q_ge_1_mean", mean)
                .scalar("g2_q_ge_1_stderr", mean_err)
                .scalar("heralds", d.heralds as f64);
            if let Some(m) = spec.m {
                r = r.param("m", m);
            }
            vec![r]
        }
        "car" => {
            let m = spec.m.unwrap_or(1);
            let h = if m <= 1 {
                an.electron_photon_car(m)?
            } else {
                an.two_photon_car(m)?
            };
            let err: Vec<f64> = h.counts.iter().map(|c| c.sqrt()).collect();
            let c = h.car;
            let mut r = Report::new(name, &format!("car_m{m}"))
                .param("m", m)
                .axis(
                    if m <= 1 { "tau" } else { "tau_diff" },
                    "ps",
                    h.axis.centers(),
                )
                .data(&h.counts, &err)
                .scalar("car", c.car)
                .scalar("car_stderr", c.stderr)
                .scalar("car_lower_bound", c.lower_bound.unwrap_or(f64::NAN))
                .scalar("signal", c.signal)
                .scalar("accidentals", c.accidentals)
                .scalar("significance", c.significance)
                .scalar("infinite", c.infinite as u8 as f64);
            if m >= 2 {
                r = r.figure("fig2d");
            }
            vec![r]
        }
        "efficiency" => {
            let e = an.efficiencies()?;
            let mut r = Report::new(name, "efficiency");
            for (k, v) in [
                ("electron", e.electron),
                ("union", e.union),
                ("both", e.both),
            ] {
                r = r
                    .scalar(&format!("eta_{k}"), v.eta)
                    .scalar(&format!("eta_{k}_stderr"), v.stderr)
                    .scalar(&format!("eta_{k}_exceeds_one"), v.exceeds_one as u8 as f64);
            }
            vec![r]
        }
        "csi" => {
            let c = an.csi(spec.threshold)?;
            let tau: Vec<f64> = c.tau.iter().map(|t| t * 1e12).collect();
            let k = c.tau.len() / 2;
            let mut r = Report::new(name, "csi")
                .figure("fig4c")
                .axis("tau", "ps", tau)
                .data(&c.gamma, &c.stderr)
                .series("g_en", &c.g_en)
                .scalar("gamma_zero", c.gamma[k])
                .scalar("gamma_zero_stderr", c.stderr[k])
                .scalar("g_e", c.g_e)
                .scalar("g2_zero", c.g2_zero);
            if let Some(t) = spec.threshold {
                r = r.param("threshold_ev", t);
            }
            vec![r]
        }
        "coupling" => {
            let c = an.coupling()?;
            vec![Report::new(name, "coupling")
                .scalar("g0", c.g0)
                .scalar("g0_stderr", c.stderr)
                .scalar("chi2", c.chi2)
                .scalar("diverging", c.diverging as u8 as f64)]
        }
        _ => unreachable!("names are validated when parsing"),
    };
    Ok(reports)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub manifest: RunManifest,
    pub reports: Vec<Report>,
}

impl AnalyzeOutcome {
    /// Exit code: estimator failures map to [`EXIT_ESTIMATOR`].
    pub fn exit_code(&self) -> i32 {
        if self.manifest.failures.is_empty() {
            0
        } else {
            EXIT_ESTIMATOR
        }
    }
}

/// Runs the requested estimators (all when `specs` is empty). A failing
/// estimator is recorded in the manifest and the others still run.
pub fn cmd_analyze(
    events: &Path,
    cfg: &RunConfig,
    specs: &[String],
    out: &Path,
    threads: usize,
) -> Result<AnalyzeOutcome, CliError> {
    let requested: Vec<String> = if specs.is_empty() {
        DEFAULT_ESTIMATORS.iter().map(|s| s.to_string()).collect()
    } else {
        specs.to_vec()
    };
    let parsed = requested
        .iter()
        .map(|s| EstimatorSpec::parse(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::config)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new(
        "analyze",
        Some(cfg),
        requested.clone(),
        vec![input(events)?],
    );
    let t = Instant::now();
    let stream = read_events_file(events)
        .map_err(|e| CliError::data(format!("{}: {e}", events.display())))?;
    manifest.time("read", t);
    let t = Instant::now();
    let an = Analysis::new(&stream, cfg, threads).map_err(CliError::data)?;
    manifest.time("correlate", t);
    let mut reports = Vec::new();
    let mut paths = Vec::new();
    for spec in &parsed {
        let t = Instant::now();
        match run_estimator(&an, spec, out) {
            Ok(rs) => {
                for mut r in rs {
                    r.metadata = manifest.metadata();
                    r.params
                        .insert("estimator_spec".into(), spec.raw.clone().into());
                    paths.extend(r.write_files(out).map_err(CliError::data)?);
                    reports.push(r);
                }
                if spec.name == "cube" {
                    paths.push(out.join("cube.bin"));
                }
            }
            Err(e) => {
                log::info!("estimator {} failed: {e}", spec.raw);
                manifest.failures.push(EstimatorFailure {
                    spec: spec.raw.clone(),
                    reason: e.to_string(),
                });
            }
        }
        manifest.time(&spec.raw, t);
    }
    manifest.record_outputs(out, &paths)?;
    manifest.write(out)?;
    Ok(AnalyzeOutcome { manifest, reports })
}

/// Directories expand to their `*.json` files; manifests are skipped.
fn expand_report_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    out.retain(|p| p.file_name().is_none_or(|n| n != "manifest.json"));
    Ok(out)
}

/// Copies each report unchanged, then writes the per-figure bundle and table.
pub fn cmd_report(paths: &[PathBuf], out: &Path) -> Result<RunManifest, CliError> {
    let paths = expand_report_paths(paths)?;
    if paths.is_empty() {
        return Err(CliError::config("no reports given"));
    }
    let mut reports = Vec::new();
    let mut texts = Vec::new();
    let mut inputs = Vec::new();
    for p in &paths {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        let r = Report::from_json(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        if reports.iter().any(|o: &Report| o.id == r.id) {
            return Err(CliError::data(format!("duplicate report id {}", r.id)));
        }
        inputs.push(input(p)?);
        reports.push(r);
        texts.push(text);
    }
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("report", None, Vec::new(), inputs);
    let t = Instant::now();
    let mut written = Vec::new();
    for (r, text) in reports.iter().zip(&texts) {
        let p = out.join(format!("{}.json", r.id));
        std::fs::write(&p, text).map_err(CliError::data)?;
        written.push(p);
    }
    written.extend(write_bundle(&reports, out).map_err(CliError::data)?);
    manifest.time("bundle", t);
    manifest.record_outputs(out, &written)?;
    manifest.write(out)?;
    Ok(manifest)
}
