//! End-to-end checks of the `busenc` binary.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_busenc"));
    c.env_remove("BUSENC_OUTPUT_DIR");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert_eq!(code(&o), 0, "{args:?}\n{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn rows(path: &Path) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn org_vs_mbdc_reports_reduction() {
    let out = tempfile::tempdir().unwrap();
    let img = data("camera.pgm");
    ok(&[
        "run",
        "-i",
        s(&img),
        "--scheme",
        "ORG,MBDC",
        "--baseline",
        "ORG",
        "-o",
        s(out.path()),
    ]);
    let energy = rows(&out.path().join("energy.csv"));
    assert_eq!(energy.len(), 2);
    assert_eq!(energy[0]["scheme"], "ORG");
    assert_eq!(energy[0]["term_reduction_pct"].parse::<f64>().unwrap(), 0.0);
    let red: f64 = energy[1]["term_reduction_pct"].parse().unwrap();
    assert!(red > 0.0, "MBDC should save termination energy, got {red}");
    for name in [
        "quality.csv",
        "frame_mix.csv",
        "energy.json",
        "resolved.json",
        "config.toml",
    ] {
        assert!(out.path().join(name).is_file(), "{name} missing");
    }
    // exact schemes hand back the original pixels
    let q = rows(&out.path().join("quality.csv"));
    assert!(q.iter().all(|r| r["psnr_db"] == "inf"));
}

#[test]
fn percentages_recompute_from_counts() {
    let out = tempfile::tempdir().unwrap();
    ok(&[
        "run",
        "-i",
        s(&data("moon.pgm")),
        "-i",
        s(&data("coins.pgm")),
        "--scheme",
        "ORG,BDE_ORG,DBI,MBDC,ZAC-DEST",
        "--limit",
        "80%",
        "-o",
        s(out.path()),
    ]);
    let energy = rows(&out.path().join("energy.csv"));
    assert_eq!(energy.len(), 10);
    let num = |r: &HashMap<String, String>, k: &str| r[k].parse::<f64>().unwrap();
    for r in &energy {
        assert_eq!(
            num(r, "term_total"),
            num(r, "term_data") + num(r, "term_index") + num(r, "term_flags")
        );
        assert_eq!(
            num(r, "sw_total"),
            num(r, "sw_data") + num(r, "sw_index") + num(r, "sw_flags")
        );
        let base = energy
            .iter()
            .find(|b| b["stream"] == r["stream"] && b["scheme"] == "ORG")
            .unwrap();
        let expect = (num(base, "term_total") - num(r, "term_total")) / num(base, "term_total") * 100.0;
        assert_eq!(num(r, "term_reduction_pct"), expect);
        let expect = (num(base, "sw_total") - num(r, "sw_total")) / num(base, "sw_total") * 100.0;
        assert_eq!(num(r, "sw_reduction_pct"), expect);
    }
}

#[test]
fn limit_preset_is_echoed_in_bits() {
    let out = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "run",
        "-i",
        s(&data("moon.pgm")),
        "--scheme",
        "ORG,ZAC-DEST",
        "--limit",
        "90%",
        "-o",
        s(out.path()),
    ]);
    assert!(stdout.lines().any(|l| l == "limit_bits=7"), "{stdout}");
    let resolved: serde_json::Value =
        serde_json::from_slice(&fs::read(out.path().join("resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["limit_bits"], 7);
    let energy = rows(&out.path().join("energy.csv"));
    assert_eq!(energy[1]["limit_bits"], "7");
}

#[test]
fn empty_input_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", "-i", s(dir.path()), "-o", s(out.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_trace_magic_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.betr");
    fs::write(&bad, vec![b'X'; 256]).unwrap();
    let o = run(&["reconstruct", s(&bad), s(&dir.path().join("o.bin"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("magic"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["run", "-i", s(&data("moon.pgm")), "--limit", "55%"])), 1);
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        "-i",
        s(&data("moon.pgm")),
        "--scheme",
        "MBDC",
        "--baseline",
        "ORG",
        "-o",
        s(out.path()),
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn trace_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (img, hex) in [("chelsea_rgb.ppm", false), ("camera.pgm", true)] {
        let src = data(img);
        let ext = if hex { "hex" } else { "betr" };
        let trace = dir.path().join(format!("t.{ext}"));
        let back = dir.path().join(img);
        let mut args = vec!["img2trace", s(&src), s(&trace)];
        if hex {
            args.push("--hex");
        }
        ok(&args);
        ok(&["reconstruct", s(&trace), s(&back)]);
        assert_eq!(fs::read(&src).unwrap(), fs::read(&back).unwrap(), "{img}");
    }
}

fn pgm_pixels(bytes: &[u8]) -> &[u8] {
    // P5\n<w> <h>\n255\n
    let mut newlines = 0;
    let start = bytes
        .iter()
        .position(|&b| {
            newlines += (b == b'\n') as u32;
            newlines == 3
        })
        .unwrap();
    &bytes[start + 1..]
}

#[test]
fn truncated_decode_clears_low_nibbles() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("cam.betr");
    ok(&["img2trace", s(&data("camera.pgm")), s(&trace)]);
    let original = fs::read(data("camera.pgm")).unwrap();
    let a = pgm_pixels(&original);

    let back = dir.path().join("approx.pgm");
    ok(&[
        "reconstruct",
        s(&trace),
        s(&back),
        "--scheme",
        "ZAC-DEST",
        "--limit",
        "80%",
        "--trunc",
        "32",
    ]);
    let out = fs::read(&back).unwrap();
    assert_eq!(pgm_pixels(&out).len(), a.len());
    assert!(pgm_pixels(&out).iter().all(|p| p & 0x0F == 0));

    // with no similarity budget the only loss is the truncation itself
    let back = dir.path().join("exact.pgm");
    ok(&[
        "reconstruct",
        s(&trace),
        s(&back),
        "--scheme",
        "ZAC-DEST",
        "--limit",
        "0",
        "--trunc",
        "32",
    ]);
    let out = fs::read(&back).unwrap();
    let expect: Vec<u8> = a.iter().map(|p| p & 0xF0).collect();
    assert_eq!(pgm_pixels(&out), &expect[..]);
}

#[test]
fn knobs_on_exact_scheme_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("m.betr");
    ok(&["img2trace", s(&data("moon.pgm")), s(&trace)]);
    let o = run(&[
        "reconstruct",
        s(&trace),
        s(&dir.path().join("m.pgm")),
        "--scheme",
        "MBDC",
        "--trunc",
        "32",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn sweep_grid_has_eight_rows_per_input() {
    let out = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "sweep",
        "-i",
        s(&data("moon.pgm")),
        "-i",
        s(&data("rocket.pgm")),
        "--scheme",
        "ZAC-DEST",
        "--baseline",
        "ZAC-DEST",
        "--limits",
        "90%,80%,75%,70%",
        "--truncs",
        "0,16",
        "-o",
        s(out.path()),
    ]);
    assert!(stdout.contains("16 sweep rows"), "{stdout}");
    let sweep = rows(&out.path().join("sweep.csv"));
    assert_eq!(sweep.len(), 16);
    for stream in ["moon", "rocket"] {
        assert_eq!(sweep.iter().filter(|r| r["stream"] == stream).count(), 8);
    }
    let mono = rows(&out.path().join("sweep_monotonicity.csv"));
    assert_eq!(mono.len(), 4);
    assert!(mono.iter().all(|r| r["non_increasing"] == "true"));
}

#[test]
fn float32_tolerance_keeps_tensor_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let tensor = dir.path().join("weights.f32");
    let values: Vec<f32> = (0..8192)
        .map(|i| ((i % 37) as f32 * 0.013).sin() * (1 + i % 5) as f32)
        .collect();
    fs::write(
        &tensor,
        values.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>(),
    )
    .unwrap();
    ok(&[
        "run",
        "-i",
        s(&tensor),
        "--scheme",
        "ORG,ZAC-DEST",
        "--limit",
        "70%",
        "--tol",
        "float32",
        "-o",
        s(&out),
    ]);
    let q = rows(&out.join("quality.csv"));
    assert_eq!(q.len(), 2);
    assert!(q.iter().all(|r| r["f32_audit"] == "pass"), "{q:?}");
    assert_eq!(q[1]["tol"], "float32");
    let back = fs::read(out.join("reconstructed/weights.ZAC-DEST.f32")).unwrap();
    for (a, b) in values.iter().zip(back.chunks_exact(4)) {
        let b = u32::from_le_bytes(b.try_into().unwrap());
        assert_eq!(a.to_bits() & 0xFF80_0000, b & 0xFF80_0000);
    }
}

#[test]
fn identical_runs_write_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "schemes = [\"ORG\", \"MBDC\", \"ZAC-DEST\"]\ninputs = [{:?}, {:?}]\nlimit = \"75%\"\ntruncation = 8\nframe_log = \"jsonl\"\ndump_tables = true\n",
            s(&data("coins.pgm")),
            s(&data("chelsea_rgb.ppm"))
        ),
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["run", "--config", s(&cfg), "-o", s(&a)]);
    ok(&["run", "--config", s(&cfg), "-o", s(&b), "--sequential"]);
    for name in [
        "energy.csv",
        "quality.csv",
        "frame_mix.csv",
        "frames/coins.ZAC-DEST.jsonl",
        "tables/coins.MBDC.json",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn binary_frame_log_and_saved_traces() {
    let out = tempfile::tempdir().unwrap();
    ok(&[
        "run",
        "-i",
        s(&data("moon.pgm")),
        "--scheme",
        "ORG,MBDC",
        "--frame-log",
        "binary",
        "--save-traces",
        "-o",
        s(out.path()),
    ]);
    let log = fs::read(out.path().join("frames/moon.MBDC.bin")).unwrap();
    assert_eq!(&log[..4], b"BEFL");
    let records = busenc::framelog::read_frame_log(&log[..]).unwrap();
    let lines = busenc::trace::load_trace(out.path().join("traces/moon.MBDC.betr"))
        .unwrap()
        .len();
    assert_eq!(records.len(), lines * 8);
}

#[test]
fn output_dir_comes_from_environment() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "-i", s(&data("moon.pgm")), "--scheme", "ORG"])
        .env("BUSENC_OUTPUT_DIR", out.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.path().join("energy.csv").is_file());
}

#[test]
fn selftest_passes() {
    let stdout = ok(&["selftest", "--seed", "7", "--lines", "64"]);
    assert!(stdout.starts_with("selftest:"), "{stdout}");
}
