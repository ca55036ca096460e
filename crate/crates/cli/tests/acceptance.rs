//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::net::TcpListener;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::thread;
use std::time::{Duration, Instant};
use trax_core::client::null_sink;
use trax_core::framing::LineReader;
use trax_core::harness::{run_realtime, ExperimentOptions, Mode, Sequence, VirtualClock};
use trax_core::protocol::trace_is_legal;
use trax_core::server::ServerSession;
use trax_core::tracker::{run_static_tracker, StaticTrackerOptions};
use trax_core::{
    decode, encode, region_overlap, ClientError, Message, MessageKind, Point, Properties, Region,
    StreamItem, TrackerCommand, TrackerHandle,
};

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn trax() -> &'static str {
    env!("CARGO_BIN_EXE_trax")
}

fn dummy_cmd(extra: &str) -> String {
    format!("'{}' dummy {extra}", trax())
}

fn trax_run(args: &[&str]) -> Output {
    Command::new(trax()).args(args).output().expect("spawn trax")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn synthetic(dir: &Path, frames: usize) -> PathBuf {
    let seq = dir.join("seq");
    trax_core::synthetic::generate_sequence(&seq, frames, trax_core::synthetic::DEFAULT_SIZE)
        .expect("generate sequence");
    seq
}

// ---------------------------------------------------------------- wire

const TOKEN_CHARS: &[char] = &[
    'a', 'Z', '0', '9', '.', '_', '-', '/', ':', ',', ' ', '\t', '"', '\\', '=', '\r', '@', 'é', '→',
];

fn random_token(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(0..12);
    (0..len)
        .map(|_| TOKEN_CHARS[rng.gen_range(0..TOKEN_CHARS.len())])
        .collect()
}

fn random_key(rng: &mut ChaCha8Rng) -> String {
    const KEY: &[u8] = b"abcxyzABC019_.";
    let len = rng.gen_range(1..8);
    (0..len)
        .map(|_| KEY[rng.gen_range(0..KEY.len())] as char)
        .collect()
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    let kind = MessageKind::ALL[rng.gen_range(0..MessageKind::ALL.len())];
    let args = (0..kind.arity()).map(|_| random_token(rng)).collect();
    let mut params = Properties::new();
    for _ in 0..rng.gen_range(0..4) {
        params.set(random_key(rng), random_token(rng)).unwrap();
    }
    Message::new(kind, args, params)
}

fn random_passthrough(rng: &mut ChaCha8Rng) -> String {
    let mut line = match rng.gen_range(0..4) {
        0 => "@@TRAX!".to_owned(),
        1 => " @@TRAX:state 1,2,3,4".to_owned(),
        2 => "@@trax:hello".to_owned(),
        _ => String::new(),
    };
    line.push_str(&random_token(rng).replace('\r', ""));
    line
}

fn wire_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = Instant::now();
    let mut expected = Vec::new();
    let mut stream = String::new();
    for _ in 0..10_000 {
        let m = random_message(&mut rng);
        stream.push_str(&encode(&m).map_err(|e| format!("encode {m:?}: {e}"))?);
        expected.push(StreamItem::Protocol(m));
        let p = random_passthrough(&mut rng);
        stream.push_str(&p);
        stream.push('\n');
        expected.push(StreamItem::Passthrough(p));
    }
    let mut reader = LineReader::new(stream.as_bytes());
    let mut got = Vec::new();
    while let Some(line) = reader.next_line().map_err(|e| e.to_string())? {
        got.push(decode(&line).map_err(|e| format!("decode {line:?}: {e}"))?);
    }
    let elapsed = start.elapsed();
    ensure!(got.len() == expected.len(), "{} items decoded, {} sent", got.len(), expected.len());
    if let Some(i) = (0..got.len()).find(|&i| got[i] != expected[i]) {
        return Err(format!("item {i}: sent {:?}, got {:?}", expected[i], got[i]));
    }
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("10000 messages + 10000 passthrough lines in {elapsed:.2?}"))
}

// ---------------------------------------------------------------- traces

fn trace_legality() -> Verdict {
    let oracle = regex::Regex::new(r"^h(is(fs|is)*)?q?$").unwrap();
    let letter = |k: MessageKind| match k {
        MessageKind::Hello => 'h',
        MessageKind::Initialize => 'i',
        MessageKind::Frame => 'f',
        MessageKind::State => 's',
        MessageKind::Quit => 'q',
    };
    let kinds = MessageKind::ALL;
    let mut checked = 0;
    let mut legal = 0;
    for len in 0..=6u32 {
        for code in 0..kinds.len().pow(len) {
            let mut c = code;
            let trace: Vec<MessageKind> = (0..len)
                .map(|_| {
                    let k = kinds[c % kinds.len()];
                    c /= kinds.len();
                    k
                })
                .collect();
            let text: String = trace.iter().map(|&k| letter(k)).collect();
            let want = oracle.is_match(&text);
            ensure!(trace_is_legal(&trace) == want, "trace {text:?}: oracle says {want}");
            checked += 1;
            legal += want as usize;
        }
    }
    Ok(format!("{checked} traces up to length 6 agree ({legal} legal)"))
}

// ---------------------------------------------------------------- overlap

fn rect(x: f64, y: f64, w: f64, h: f64) -> Region {
    Region::rectangle(x, y, w, h).unwrap()
}

fn random_convex(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let cx = rng.gen_range(20.0..80.0);
    let cy = rng.gen_range(20.0..80.0);
    let r = rng.gen_range(5.0..20.0);
    let n = rng.gen_range(3..=8);
    // Distinct angles at least 0.05 rad apart, so no vertices coincide.
    let mut angles: Vec<f64> = Vec::new();
    while angles.len() < n {
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let gap = |b: &f64| {
            let d = (a - b).abs();
            d.min(std::f64::consts::TAU - d)
        };
        if angles.iter().all(|b| gap(b) > 0.05) {
            angles.push(a);
        }
    }
    angles.sort_by(f64::total_cmp);
    angles
        .iter()
        .map(|a| Point {
            x: cx + r * a.cos(),
            y: cy + r * a.sin(),
        })
        .collect()
}

/// x-interval of a convex polygon on the horizontal line `y`.
fn span_at(poly: &[Point], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        if (p.y <= y && y < q.y) || (q.y <= y && y < p.y) {
            let x = p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Jaccard index by counting cell centres of an N×N grid over the union
/// bounding box. Only valid for convex operands.
fn raster_oracle(a: &[Point], b: &[Point], n: usize) -> f64 {
    let all = a.iter().chain(b);
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in all {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (cw, ch) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let count = |lo: f64, hi: f64| -> i64 {
        // Columns j with centre x0 + (j + 0.5) cw in [lo, hi].
        let first = ((lo - x0) / cw - 0.5).ceil().max(0.0) as i64;
        let last = ((hi - x0) / cw - 0.5).floor().min(n as f64 - 1.0) as i64;
        (last - first + 1).max(0)
    };
    let (mut inter, mut union) = (0i64, 0i64);
    for row in 0..n {
        let y = y0 + (row as f64 + 0.5) * ch;
        let sa = span_at(a, y);
        let sb = span_at(b, y);
        let ca = sa.map_or(0, |(l, h)| count(l, h));
        let cb = sb.map_or(0, |(l, h)| count(l, h));
        let ci = match (sa, sb) {
            (Some((la, ha)), Some((lb, hb))) if la.max(lb) <= ha.min(hb) => count(la.max(lb), ha.min(hb)),
            _ => 0,
        };
        inter += ci;
        union += ca + cb - ci;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn overlap() -> Verdict {
    let third = region_overlap(&rect(0.0, 0.0, 2.0, 1.0), &rect(1.0, 0.0, 2.0, 1.0));
    ensure!((third - 1.0 / 3.0).abs() <= 1e-9, "half-shifted rectangles: {third}");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let (pa, pb) = (random_convex(&mut rng), random_convex(&mut rng));
        let (a, b) = (
            Region::polygon(pa.clone()).unwrap(),
            Region::polygon(pb.clone()).unwrap(),
        );
        let ab = region_overlap(&a, &b);
        let ba = region_overlap(&b, &a);
        ensure!(ab == ba, "pair {i}: asymmetric {ab} vs {ba}");
        ensure!((0.0..=1.0).contains(&ab), "pair {i}: out of range {ab}");
        let self_ov = region_overlap(&a, &a);
        ensure!((self_ov - 1.0).abs() <= 1e-9, "pair {i}: self overlap {self_ov}");
        let oracle = raster_oracle(&pa, &pb, 2000);
        let err = (ab - oracle).abs();
        ensure!(err <= 5e-3, "pair {i}: {ab} vs raster {oracle}");
        worst = worst.max(err);
    }
    Ok(format!(
        "1/3 exact; 1000 convex pairs within {worst:.2e} of raster, symmetric, in [0,1]"
    ))
}

// ---------------------------------------------------------------- end to end

fn end_to_end_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seq = synthetic(dir.path(), 20);
    let mut trajectories = Vec::new();
    for transport in ["stdio", "tcp"] {
        let out = dir.path().join(transport);
        let result = trax_run(&[
            "run",
            "--tracker",
            &dummy_cmd(""),
            "--sequence",
            seq.to_str().unwrap(),
            "--transport",
            transport,
            "--output",
            out.to_str().unwrap(),
        ]);
        ensure!(
            result.status.success(),
            "{transport}: {:?}\n{}",
            result.status,
            String::from_utf8_lossy(&result.stderr)
        );
        let text = std::fs::read_to_string(out.join("trajectory.txt")).map_err(|e| e.to_string())?;
        ensure!(text.lines().count() == 20, "{transport}: {} lines", text.lines().count());
        trajectories.push(text);
    }
    ensure!(trajectories[0] == trajectories[1], "stdio and tcp trajectories differ");
    let first = trajectories[0].lines().next().unwrap_or_default().to_owned();
    ensure!(first == "1", "frame 0 is {first:?}");
    ensure!(
        trajectories[0].lines().skip(1).all(|l| l == "10,10,20,20"),
        "static tracker drifted"
    );
    Ok("20-frame trajectories identical over stdio and tcp".into())
}

fn supervised_fixture() -> Verdict {
    let expected_path = fixtures().join("supervised_expected.txt");
    let expected = std::fs::read_to_string(&expected_path).map_err(|e| e.to_string())?;
    // Regenerate from the oracle script when Python is around.
    let regenerated = Command::new("python3")
        .arg(fixtures().join("supervised_oracle.py"))
        .output();
    let oracle_note = match regenerated {
        Ok(o) if o.status.success() => {
            ensure!(
                String::from_utf8_lossy(&o.stdout) == expected,
                "committed fixture is stale"
            );
            "oracle re-run"
        }
        _ => "oracle not re-run (no python3)",
    };

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seq = synthetic(dir.path(), 20);
    let out = dir.path().join("trial");
    let result = trax_run(&[
        "run",
        "--tracker",
        &dummy_cmd("--fail-after 3"),
        "--sequence",
        seq.to_str().unwrap(),
        "--mode",
        "supervised",
        "--skip",
        "5",
        "--output",
        out.to_str().unwrap(),
    ]);
    ensure!(
        result.status.success(),
        "{:?}\n{}",
        result.status,
        String::from_utf8_lossy(&result.stderr)
    );
    let got = std::fs::read_to_string(out.join("trajectory.txt")).map_err(|e| e.to_string())?;
    for (i, (g, e)) in got.lines().zip(expected.lines()).enumerate() {
        ensure!(g == e, "frame {i}: got {g:?}, expected {e:?}");
    }
    ensure!(got.lines().count() == expected.lines().count(), "length differs");
    Ok(format!("trajectory matches fixture ({oracle_note})"))
}

// ---------------------------------------------------------------- realtime

fn in_process_launcher() -> impl Fn() -> Result<TrackerHandle, ClientError> {
    || {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        thread::spawn(move || {
            let Ok((stream, _)) = listener.accept() else { return };
            let opts = StaticTrackerOptions::default();
            let reader = stream.try_clone().expect("clone socket");
            let mut session = ServerSession::new(opts.capabilities(), reader, stream);
            let _ = run_static_tracker(&mut session, &opts);
        });
        TrackerHandle::connect(addr, Duration::from_secs(10), null_sink())
    }
}

fn fake_sequence(n: usize, fps: f64) -> Sequence {
    Sequence {
        name: "virtual".into(),
        frames: (1..=n).map(|i| PathBuf::from(format!("/virtual/{i:08}.pgm"))).collect(),
        groundtruth: (0..n).map(|i| rect(i as f64, i as f64, 10.0, 10.0)).collect(),
        fps,
    }
}

/// Frames a real-time run processes, given the scripted response times.
fn expected_processed(n: usize, dt: f64, script: &[f64]) -> Vec<usize> {
    let response = |i: usize| script[i.min(script.len() - 1)];
    let mut processed = vec![0];
    let mut k = 0;
    let mut r = response(0);
    let mut used = 1;
    loop {
        let mut step = 1;
        while (step as f64) * dt < r {
            step += 1;
        }
        if k + step >= n {
            return processed;
        }
        k += step;
        processed.push(k);
        r = response(used);
        used += 1;
    }
}

fn realtime() -> Verdict {
    let launcher = in_process_launcher();
    let opts = ExperimentOptions::with_mode(Mode::Realtime);

    let dt = 1.0 / 20.0;
    let seq = fake_sequence(20, 20.0);
    let trial = run_realtime(&launcher, &seq, &opts, &mut VirtualClock::constant(2.5 * dt))
        .map_err(|e| e.to_string())?;
    let processed = trial.processed_frames();
    let want: Vec<usize> = (0..20).step_by(3).collect();
    ensure!(processed == want, "2.5 dt: processed {processed:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let n = rng.gen_range(2..40);
        let fps = [10.0, 20.0, 25.0, 30.0][rng.gen_range(0..4)];
        let dt = 1.0 / fps;
        // Ratios kept off integers so the oracle needs no tolerance.
        let script: Vec<f64> = (0..rng.gen_range(1..10))
            .map(|_| dt * (rng.gen_range(0..5) as f64 + rng.gen_range(0.05..0.95)))
            .collect();
        let seq = fake_sequence(n, fps);
        let trial = run_realtime(&launcher, &seq, &opts, &mut VirtualClock::new(script.clone()))
            .map_err(|e| format!("case {case}: {e}"))?;
        let want = expected_processed(n, dt, &script);
        let got = trial.processed_frames();
        ensure!(got == want, "case {case} (n={n}, script {script:?}): {got:?} vs {want:?}");
        // Skipped frames inherit the last reported region; the static
        // tracker answers initialization with the initial region.
        let mut last = seq.groundtruth[0].clone();
        for i in 1..n {
            if want.contains(&i) {
                last = trial.trajectory[i].clone();
            } else {
                ensure!(trial.trajectory[i] == last, "case {case}: frame {i} not carried over");
            }
        }
    }
    Ok("2.5 dt processes every third frame; 100 random schedules match re-simulation".into())
}

// ---------------------------------------------------------------- watchdog

fn reaped(pid: u32) -> bool {
    match std::fs::read_to_string(format!("/proc/{pid}/stat")) {
        Err(_) => true,
        Ok(stat) => !stat.contains(") Z "),
    }
}

fn watchdog() -> Verdict {
    let timeout = Duration::from_secs(1);
    let command = TrackerCommand::parse(&dummy_cmd("--hang"))
        .map_err(|e| e.to_string())?
        .watchdog(timeout);
    let mut handle = TrackerHandle::launch(&command, null_sink()).map_err(|e| e.to_string())?;
    let pid = handle.child_id().ok_or("no child process")?;
    handle.handshake().map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seq = synthetic(dir.path(), 3);
    let seq = trax_core::harness::load_sequence(&seq).map_err(|e| e.to_string())?;
    handle
        .initialize(&seq.frame_image(0), &seq.groundtruth[0], &Properties::new())
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let result = handle.frame(&seq.frame_image(1), &Properties::new());
    let waited = start.elapsed();
    ensure!(
        matches!(result, Err(ClientError::WatchdogTimeout { .. })),
        "frame returned {result:?}"
    );
    ensure!(waited < timeout + Duration::from_secs(1), "failed after {waited:?}");
    let report = handle.terminate(Duration::from_millis(500));
    ensure!(report.killed, "hung tracker was not killed: {report:?}");
    ensure!(report.status.is_some(), "no exit status");
    ensure!(reaped(pid), "process {pid} left as a zombie");
    ensure!(handle.terminate(Duration::ZERO) == report, "terminate not idempotent");
    Ok(format!("frame failed after {waited:.2?}; tracker killed and reaped"))
}

// ---------------------------------------------------------------- conformance

fn conformance_run(tracker: &str, transport: &str) -> Result<(i32, serde_json::Value), String> {
    let out = trax_run(&[
        "test", "--tracker", tracker, "--transport", transport, "--timeout", "2", "--grace", "2",
        "--json",
    ]);
    let code = out.status.code().ok_or("killed by signal")?;
    let json = serde_json::from_slice(&out.stdout)
        .map_err(|e| format!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout)))?;
    Ok((code, json))
}

fn failed_checks(report: &serde_json::Value) -> Vec<String> {
    report
        .as_object()
        .map(|m| {
            m.iter()
                .filter(|(_, v)| v["passed"] != serde_json::Value::Bool(true))
                .map(|(k, _)| k.clone())
                .collect()
        })
        .unwrap_or_default()
}

fn conformance() -> Verdict {
    for transport in ["stdio", "tcp"] {
        let (code, report) = conformance_run(&dummy_cmd(""), transport)?;
        ensure!(
            code == 0,
            "dummy over {transport}: exit {code}, failed {:?}",
            failed_checks(&report)
        );
    }
    for (violation, target) in [
        ("no-hello", "hello-first"),
        ("double-state", "one-state-per-request"),
        ("malformed-region", "state-region-valid"),
    ] {
        let (code, report) = conformance_run(&dummy_cmd(&format!("--violate {violation}")), "stdio")?;
        ensure!(code == 3, "{violation}: exit {code}");
        let failed = failed_checks(&report);
        ensure!(failed == [target], "{violation}: failed {failed:?}, expected only {target}");
    }
    Ok("dummy passes on stdio and tcp; each fixture fails exactly its check".into())
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("wire round-trip", wire_round_trip),
        ("message order legality", trace_legality),
        ("overlap accuracy and symmetry", overlap),
        ("end-to-end determinism", end_to_end_determinism),
        ("supervised reset rule", supervised_fixture),
        ("real-time frame skipping", realtime),
        ("watchdog and termination", watchdog),
        ("conformance tester", conformance),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let elapsed = start.elapsed();
        match verdict {
            Ok(detail) => println!("PASS  {name:<30} {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {name:<30} {detail} [{elapsed:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 8 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
