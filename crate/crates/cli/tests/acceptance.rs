//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p vibraforge-cli --test acceptance`.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use vibraforge::corpus::{consonant_v, WAVEFORMS};
use vibraforge::pattern::{compile, Waveform};
use vibraforge::protocol::{apply_hop, decode, encode, HopDecision, VibrationCommand, WaveSelect, FREQUENCIES_HZ};
use vibraforge::report::{envelope_fidelity, pearson, Report};
use vibraforge::segment::{quantize_frequency, segment, SampledWaveform};
use vibraforge::sim::{ChainSim, LadderModel, LatencyModel, LoopMode, Phase};
use vibraforge::transport::{dispatch, schedule, SimLoopback};

/// Criteria that fail by construction; see the README.
const KNOWN_FAILURES: &[u32] = &[9];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn cli(args: &[&str], seed: &str) -> (Option<i32>, Vec<u8>) {
    let o = Command::new(env!("CARGO_BIN_EXE_vibraforge"))
        .args(args)
        .env("VIBRAFORGE_SEED", seed)
        .output()
        .unwrap();
    (o.status.code(), o.stdout)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn latency() -> Outcome {
    let ((code, out), took) = timed(|| cli(&["report", "latency"], "1"));
    let report = Report::parse(&String::from_utf8(out).unwrap()).unwrap();
    let total = report.find("total_ms").and_then(|r| r.get("total_ms")).unwrap_or("?").to_owned();
    Outcome {
        id: 1,
        pass: code == Some(0) && total == "16.000" && took < Duration::from_secs(1),
        detail: format!("total_ms={total} runtime={took:.2?}"),
    }
}

fn bandwidth() -> Outcome {
    let ((code, out), took) = timed(|| cli(&["report", "bandwidth", "--packets", "1000"], "1"));
    let report = Report::parse(&String::from_utf8(out).unwrap()).unwrap();
    let row = &report.rows[0];
    let n = |k: &str| row.number(k).unwrap_or(f64::NAN);
    let pass = code == Some(0)
        && n("commands_sent") == 5000.0
        && n("commands_delivered") == 5000.0
        && n("commands_lost") == 0.0
        && n("packet_rate_hz") == 200.0
        && took < Duration::from_secs(5);
    Outcome {
        id: 2,
        pass,
        detail: format!(
            "delivered={} lost={} rate={} packets/s runtime={took:.2?}",
            n("commands_delivered"),
            n("commands_lost"),
            n("packet_rate_hz")
        ),
    }
}

fn battery() -> Outcome {
    let (code, out) = cli(&["report", "battery"], "1");
    let report = Report::parse(&String::from_utf8(out).unwrap()).unwrap();
    let published = [(186.0, 2.69), (486.0, 1.03), (266.0, 30.83), (1460.0, 5.62)];
    let mut pass = code == Some(0);
    let mut parts = Vec::new();
    for (row, (ma, h)) in report.rows.iter().zip(published) {
        let (cur, hours) = (row.number("current_ma").unwrap(), row.number("hours").unwrap());
        pass &= (cur - ma).abs() <= 0.01 * ma && (hours - h).abs() <= 0.01 * h;
        parts.push(format!("{cur}mA/{hours}h"));
    }
    Outcome { id: 3, pass, detail: parts.join(" ") }
}

fn voltage() -> Outcome {
    let (code, out) = cli(&["report", "voltage"], "1");
    let report = Report::parse(&String::from_utf8(out).unwrap()).unwrap();
    let summary = report.rows.last().unwrap();
    let (mcu, act) = (summary.get("mcu_crossing").unwrap(), summary.get("actuator_crossing").unwrap());
    let sweep = &report.rows[..report.rows.len() - 1];
    let col = |k: &str| sweep.iter().map(|r| r.number(k).unwrap()).collect::<Vec<_>>();
    let non_increasing = ["v_mcu", "v_act", "v_mcu_closed", "v_act_closed"]
        .iter()
        .all(|k| col(k).windows(2).all(|w| w[1] <= w[0]));
    let closed_dominates = col("v_mcu_closed").iter().zip(col("v_mcu")).all(|(c, o)| *c >= o)
        && col("v_act_closed").iter().zip(col("v_act")).all(|(c, o)| *c >= o);
    let ladder = LadderModel::default();
    let open8 = ladder.head_first(LoopMode::Open, 8, 8).actuator;
    let closed8 = ladder.head_first(LoopMode::Closed, 8, 8).actuator;
    let pass = code == Some(0)
        && mcu == "17"
        && act == "18"
        && non_increasing
        && closed_dominates
        && (open8 - 3.1).abs() <= 0.2
        && (closed8 - 4.2).abs() <= 0.2;
    Outcome {
        id: 4,
        pass,
        detail: format!(
            "mcu_crossing={mcu} actuator_crossing={act} monotone={non_increasing} closed>=open={closed_dominates} 8-unit open={open8:.2}V closed={closed8:.2}V"
        ),
    }
}

fn codec() -> Outcome {
    let (failures, took) = timed(|| {
        let mut failures = 0usize;
        for address in 0..=127u8 {
            let mut cmds = vec![VibrationCommand::stop(address)];
            for i in 0..16 {
                for f in 0..8 {
                    for w in [WaveSelect::Sine, WaveSelect::Square] {
                        cmds.push(VibrationCommand::start(address, i, f, w));
                    }
                }
            }
            for cmd in cmds {
                let frames = encode(&cmd).unwrap();
                failures += usize::from(decode(&frames) != Ok(cmd));
                for (k, frame) in frames.iter().enumerate() {
                    for bit in 0..9 {
                        let mut bad = frames.clone();
                        bad[k] = frame.with_bit_flipped(bit);
                        failures += usize::from(decode(&bad).is_ok());
                    }
                }
            }
        }
        for address in 0..16u8 {
            let mut header = encode(&VibrationCommand::stop(address)).unwrap()[0];
            let mut hops = 0;
            while let HopDecision::Forward(next) = apply_hop(header).unwrap() {
                header = next;
                hops += 1;
            }
            failures += usize::from(hops != address);
        }
        failures
    });
    Outcome {
        id: 5,
        pass: failures == 0 && took < Duration::from_secs(1),
        detail: format!("failures={failures} runtime={took:.2?}"),
    }
}

fn segmentation() -> Outcome {
    let w = SampledWaveform::from_fn(44_100.0, 2.0, |t| (TAU * 200.0 * t).sin() * (TAU * 5.0 * t).sin());
    let s = segment(&w).unwrap();
    let wrong_carrier = s.frames.iter().filter(|f| f.active && f.frequency_index != 3).count();
    let intensity: Vec<f64> = s.frames.iter().map(|f| if f.active { f64::from(f.intensity) } else { 0.0 }).collect();
    let truth: Vec<f64> = (0..s.frames.len()).map(|i| (TAU * 5.0 * i as f64 / 200.0).sin().abs()).collect();
    let r = pearson(&intensity, &truth);
    Outcome {
        id: 6,
        pass: s.frames.len() == 400 && wrong_carrier == 0 && r >= 0.95,
        detail: format!("frames={} off-carrier={wrong_carrier} pearson={r:.4}", s.frames.len()),
    }
}

fn approximation() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, text) in WAVEFORMS {
        let w: Waveform = serde_json::from_str(text).unwrap();
        let f = envelope_fidelity(&w, &LatencyModel::default()).unwrap();
        pass &= f.pearson >= 0.9;
        parts.push(format!("{name}={:.4}", f.pearson));
    }
    Outcome { id: 7, pass, detail: parts.join(" ") }
}

fn phonemic() -> Outcome {
    let doc = consonant_v();
    let plan = schedule(&compile(&doc).unwrap());
    let mut ep = SimLoopback::new(ChainSim::new(doc.topology(), LatencyModel::default()).unwrap());
    dispatch(&plan.packets, &mut ep).unwrap();
    let mut sim = ep.into_sim();
    sim.run_to_idle();
    let mut violations = 0;
    for t in 0..=600u64 {
        for c in 0..4 {
            for u in 0..6 {
                let active = sim.state_at(c, u, t * 1000).unwrap().phase == Phase::Active;
                let target = u == 5;
                let bad = if !target {
                    active
                } else if (16..414).contains(&t) {
                    !active
                } else if !(14..416).contains(&t) {
                    active
                } else {
                    false
                };
                violations += usize::from(bad);
            }
        }
    }
    let stats = sim.stats();
    let idle = sim.units().iter().flatten().all(|u| u.phase == Phase::Idle);
    Outcome {
        id: 8,
        pass: violations == 0 && idle && stats.consumed == stats.injected,
        detail: format!("violations={violations} delivered={}/{} final_idle={idle}", stats.consumed, stats.injected),
    }
}

fn frequency_table() -> Outcome {
    let ratios: Vec<f64> = FREQUENCIES_HZ.windows(2).map(|w| w[1] / w[0]).collect();
    let in_band = ratios.iter().all(|r| (1.17..=1.19).contains(r));
    let identity = FREQUENCIES_HZ.iter().enumerate().all(|(i, hz)| quantize_frequency(*hz) == Ok(i as u8));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
    Outcome {
        id: 9,
        pass: in_band && identity,
        detail: format!("ratios=[{}] identity={identity}", shown.join(", ")),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let a = |p: &str| assets().join(p).to_str().unwrap().to_owned();
    let cmds = dir.path().join("v.cmds");
    let cmds_s = cmds.to_str().unwrap().to_owned();
    let topo = a("forearm_4x6.topology.json");
    let pattern = a("consonant_v.pattern.json");
    let csv = a("am_200x5.csv");
    let pipelines: Vec<Vec<&str>> = vec![
        vec!["transcode", &csv],
        vec!["compile", &pattern],
        vec!["report", "latency"],
        vec!["report", "voltage"],
        vec!["report", "battery"],
        vec!["report", "bandwidth", "--packets", "200"],
    ];
    let (code, _) = cli(&["compile", &pattern, "-o", &cmds_s], "7");
    let mut pass = code == Some(0);
    let mut runs = 0;
    for seed in ["7", "123456789"] {
        let mut all = pipelines.clone();
        all.push(vec!["simulate", &cmds_s, "--topology", &topo, "--random-faults", "3"]);
        for args in &all {
            let first = cli(args, seed);
            let second = cli(args, seed);
            pass &= first.0 == Some(0) && first == second && !first.1.is_empty();
            runs += 1;
        }
    }
    Outcome {
        id: 10,
        pass,
        detail: format!("{runs} pipelines run twice, byte-identical={pass}"),
    }
}

fn main() {
    let outcomes = [
        latency(),
        bandwidth(),
        battery(),
        voltage(),
        codec(),
        segmentation(),
        approximation(),
        phonemic(),
        frequency_table(),
        determinism(),
    ];
    for o in &outcomes {
        println!("{} criterion {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if failed != KNOWN_FAILURES {
        eprintln!("unexpected acceptance result: failing {failed:?}, expected {KNOWN_FAILURES:?}");
        std::process::exit(1);
    }
}
