use std::fs;
use std::path::Path;
use std::process::Command;

use evkit::cli::run_with_output;
use evkit::event_codec::decode_evs1;
use evkit::event_model::Polarity;
use evkit::freqmap::{FrequencyMap, Histogram};

fn run(dir: &Path, args: &str) -> (i32, String, String) {
    let argv = std::iter::once("evkit".to_string()).chain(args.split_whitespace().map(|a| match a.strip_prefix('@') {
        Some(name) => dir.join(name).display().to_string(),
        None => a.to_string(),
    }));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with_output(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(dir: &Path, args: &str) -> String {
    let (code, out, err) = run(dir, args);
    assert_eq!(code, 0, "evkit {args}: {err}");
    out
}

fn flicker_file(dir: &Path) {
    ok(
        dir,
        "synth flicker --geometry 32x16 --region 0,0,16,16 --freq 100 --region 16,0,16,16 --freq 20 \
         --duration-ms 500 --out @s.evs1",
    );
}

#[test]
fn synth_info_and_convert() {
    let d = tempfile::tempdir().unwrap();
    flicker_file(d.path());
    let info = ok(d.path(), "info @s.evs1");
    assert!(info.contains("geometry: 32x16"), "{info}");
    let s = decode_evs1(&fs::read(d.path().join("s.evs1")).unwrap()).unwrap();
    assert!(info.contains(&format!("events: {}", s.len())));
    assert_eq!(s.count_polarity(Polarity::On), s.count_polarity(Polarity::Off));

    ok(d.path(), "convert @s.evs1 --out @s.csv");
    ok(d.path(), "convert @s.csv --geometry 32x16 --out @back.evs1");
    assert_eq!(
        fs::read(d.path().join("s.evs1")).unwrap(),
        fs::read(d.path().join("back.evs1")).unwrap()
    );
}

#[test]
fn freqmap_render_histogram() {
    let d = tempfile::tempdir().unwrap();
    flicker_file(d.path());
    let csv = ok(d.path(), "freqmap @s.evs1 --preset flicker");
    let map = FrequencyMap::from_csv(&csv, None).unwrap();
    assert!((map.get(3, 3).unwrap() - 100.0).abs() < 1.0);
    assert!((map.get(20, 3).unwrap() - 20.0).abs() < 0.5);

    ok(d.path(), "freqmap @s.evs1 --window-ms 50 --out @m.png --csv @m.csv");
    assert!(fs::read(d.path().join("m.png")).unwrap().starts_with(b"\x89PNG"));
    ok(d.path(), "render @m.csv --geometry 32x16 --out @r.ppm");
    assert!(fs::read(d.path().join("r.ppm")).unwrap().starts_with(b"P6"));

    let hist = ok(d.path(), "histogram @m.csv --bins 4");
    let h = Histogram::from_csv(&hist).unwrap();
    assert_eq!(h.bins.iter().map(|b| b.count).sum::<usize>(), 512);
}

#[test]
fn filter_steps_follow_command_line_order() {
    let d = tempfile::tempdir().unwrap();
    flicker_file(d.path());
    ok(d.path(), "filter @s.evs1 --af-band 95:105 --out @af.evs1");
    let af = decode_evs1(&fs::read(d.path().join("af.evs1")).unwrap()).unwrap();
    assert!(af.events.iter().all(|e| e.x >= 16), "flicker region survived");

    fs::write(d.path().join("f.conf"), "# one step\nrefractory_us = 6000\n").unwrap();
    ok(d.path(), "filter @s.evs1 --config @f.conf --out @r.evs1");
    let r = decode_evs1(&fs::read(d.path().join("r.evs1")).unwrap()).unwrap();
    let flick_pols: std::collections::HashSet<_> = r.events.iter().filter(|e| e.x < 16).map(|e| e.p).collect();
    assert_eq!(flick_pols.len(), 1);

    // ERC then STC differs from STC then ERC on a dense stream.
    ok(
        d.path(),
        "filter @s.evs1 --erc-keps 50 --stc-window-us 60000 --out @a.evs1",
    );
    ok(
        d.path(),
        "filter @s.evs1 --stc-window-us 60000 --erc-keps 50 --out @b.evs1",
    );
    assert_ne!(
        fs::read(d.path().join("a.evs1")).unwrap(),
        fs::read(d.path().join("b.evs1")).unwrap()
    );
}

#[test]
fn frames_measure_and_magnify() {
    let d = tempfile::tempdir().unwrap();
    ok(
        d.path(),
        "synth moving-pattern --width 48 --height 48 --frames 45 --fps 30 --amplitude-px 0.2 --motion-hz 5 --out @fr",
    );
    let out = ok(d.path(), "measure @fr --motion-hz 5");
    assert!(out.starts_with("frame,dx,dy\n0,0,0\n"), "{out}");
    let amp: f64 = out
        .lines()
        .last()
        .unwrap()
        .strip_prefix("amplitude_px: ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((amp - 0.2).abs() < 0.01, "{amp}");

    ok(
        d.path(),
        "magnify @fr --fps 30 --band 4:6 --m 0 --orientations 4 --octave full --out @m0",
    );
    let a = fs::read(d.path().join("fr/000007.pgm")).unwrap();
    let b = fs::read(d.path().join("m0/000007.pgm")).unwrap();
    assert_eq!(a.len(), b.len());

    // Sub-pixel motion of a smooth blob stays under the contrast threshold; use a larger swing.
    ok(
        d.path(),
        "synth moving-pattern --width 32 --height 32 --frames 10 --amplitude-px 3 --out @big",
    );
    ok(d.path(), "synth from-frames @big --fps 30 --out @ev.csv");
    assert!(!fs::read_to_string(d.path().join("ev.csv")).unwrap().is_empty());
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), "info").0, 1);
    assert_eq!(run(d.path(), "frobnicate").0, 1);
    assert_eq!(run(d.path(), "info @missing.evs1").0, 1);
    flicker_file(d.path());
    assert_eq!(run(d.path(), "convert @s.evs1 --out @s.txt").0, 1);
    assert_eq!(run(d.path(), "freqmap @s.evs1 --fmin 50 --fmax 10").0, 2);
    assert_eq!(run(d.path(), "filter @s.evs1 --af-band 10:5 --out @x.evs1").0, 2);

    fs::write(d.path().join("bad.csv"), "0,1,1,1\nabc,1,1,1\n").unwrap();
    let (code, _, err) = run(d.path(), "info @bad.csv");
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");

    let mut bytes = fs::read(d.path().join("s.evs1")).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(d.path().join("t.evs1"), bytes).unwrap();
    assert_eq!(run(d.path(), "info @t.evs1").0, 2);

    ok(
        d.path(),
        "synth moving-pattern --width 32 --height 32 --frames 10 --out @fr",
    );
    assert_eq!(run(d.path(), "magnify @fr --fps 30 --band 4:20 --m 5 --out @o").0, 2);
    assert_eq!(run(d.path(), "magnify @fr --fps 30 --m 5 --out @o").0, 1);
}

#[test]
fn binary_reports_through_process_exit_status() {
    let bin = env!("CARGO_BIN_EXE_evkit");
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert!(help.status.success());
    assert!(String::from_utf8_lossy(&help.stdout).contains("freqmap"));
    let bad = Command::new(bin)
        .args(["info", "/definitely/not/here.evs1"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(!bad.stderr.is_empty() && bad.stdout.is_empty());
}
