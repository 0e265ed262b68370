use std::path::Path;
use std::process::Command;

use setgan::bundle::TrainedBundle;
use setgan::editor::Mask;
use setgan::image_io;
use setgan::profiler::EnergyReport;
use setgan::pyramid::Dims;
use setgan::synthetic;

fn setgan(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_setgan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = setgan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_generate_edit_profile() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("x.png");
    image_io::save_png(&synthetic::texture(Dims::new(48, 48), 3), &img).unwrap();
    let bundle = dir.path().join("b.setgan");
    let out = ok(&[
        "train", "--image", s(&img), "--threshold", "1.01", "--workers", "2", "--iterations", "3",
        "--max-dim", "48", "--min-dim", "25", "--out", s(&bundle),
    ]);
    let summary: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    let b = TrainedBundle::load(&bundle).unwrap();
    assert_eq!(summary["best_scale"], b.manifest.best_scale);
    assert_eq!(b.scale_count(), b.manifest.schedule.scale_count);
    let telemetry = std::fs::read_to_string(format!("{}.telemetry.jsonl", bundle.display())).unwrap();
    assert_eq!(telemetry.lines().count(), 3 * b.scale_count());

    let top = (b.scale_count() - 1).to_string();
    let (g1, g2) = (dir.path().join("g1.png"), dir.path().join("g2.png"));
    for g in [&g1, &g2] {
        ok(&["generate", "--bundle", s(&bundle), "--scale", &top, "--seed", "3", "--out", s(g)]);
    }
    assert_eq!(std::fs::read(&g1).unwrap(), std::fs::read(&g2).unwrap());

    let mask = dir.path().join("m.png");
    std::fs::write(&mask, image_io::encode_mask(&Mask::full(Dims::new(48, 48))).unwrap()).unwrap();
    let edited = dir.path().join("e.png");
    ok(&[
        "edit", "--bundle", s(&bundle), "--kind", "editing", "--image", s(&img), "--mask", s(&mask),
        "--scale", "1", "--out", s(&edited),
    ]);
    assert_eq!(Dims::of(&image_io::load_image(&edited).unwrap()), Dims::new(48, 48));

    let report: EnergyReport =
        serde_json::from_str(&ok(&["profile", "--bundle", s(&bundle), "--power", "synthetic"])).unwrap();
    assert_eq!(report.normalized_edp.last(), Some(&1.0));
    assert!(report.normalized_edp.windows(2).all(|w| w[0] < w[1]));

    // config file keys win over flags
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 77\n").unwrap();
    let dumped = dir.path().join("d.toml");
    ok(&["train", "--image", s(&img), "--seed", "1", "--workers", "3", "--config", s(&cfg), "--dump-config", s(&dumped)]);
    let text = std::fs::read_to_string(&dumped).unwrap();
    assert!(text.contains("seed = 77") && text.contains("worker_count = 3"), "{text}");
}

#[test]
fn errors_are_machine_parsable() {
    let out = setgan(&["generate", "--bundle", "/nonexistent.setgan", "--out", "/tmp/never.png"]);
    assert_eq!(out.status.code(), Some(5));
    let line: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap();
    assert_eq!(line["error"], "io");
    assert_eq!(line["exit_code"], 5);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.setgan");
    std::fs::write(&junk, b"definitely not a bundle").unwrap();
    let out = setgan(&["generate", "--bundle", s(&junk), "--out", "/tmp/never.png"]);
    assert_eq!(out.status.code(), Some(4));

    assert_eq!(setgan(&["train"]).status.code(), Some(2));
}

#[test]
fn bench_prints_tables() {
    let out = ok(&["bench"]);
    assert!(out.contains("9 scales"), "{out}");
    assert!(out.contains("normalized_edp"));
}
