use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use stainforge::baselines::reinhard_fit;
use stainforge::raster::{read_raster, write_raster};
use stainforge::{decode_u8, Rgb8Image};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stainforge"));
    cmd.env_remove("STAINFORGE_WORKERS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Weights files are ~45 MB, so each is written once per test binary.
fn fixtures() -> &'static (tempfile::TempDir, PathBuf, PathBuf) {
    static F: OnceLock<(tempfile::TempDir, PathBuf, PathBuf)> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let zero = dir.path().join("zero.pnwt");
        let seeded = dir.path().join("seeded.pnwt");
        assert!(run(&["init-weights", s(&zero), "--zero"]).status.success());
        assert!(run(&["init-weights", s(&seeded), "--seed", "3"]).status.success());
        (dir, zero, seeded)
    })
}

/// Deterministic tissue-like noise in the u8 range [lo, hi].
fn noise(w: usize, h: usize, seed: u32, lo: u8, hi: u8) -> Rgb8Image {
    let mut state = seed.wrapping_mul(2654435761).wrapping_add(1);
    let span = (hi - lo) as u32 + 1;
    let data = (0..w * h * 3)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            lo + (state % span) as u8
        })
        .collect();
    Rgb8Image::new(w, h, data).unwrap()
}

#[test]
fn zero_weights_give_mid_gray() {
    let (_, zero, _) = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    let output = dir.path().join("out.png");
    write_raster(&input, &noise(40, 30, 1, 0, 255)).unwrap();
    let out = run(&["normalize", s(&input), s(&output), "--weights", s(zero)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let img = read_raster(&output).unwrap();
    assert_eq!((img.width(), img.height()), (40, 30));
    assert!(img.data().iter().all(|&v| v == 128));
}

#[test]
fn directory_batch_continues_past_bad_files() {
    let (_, _, seeded) = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    let output = dir.path().join("out");
    std::fs::create_dir(&input).unwrap();
    write_raster(&input.join("a.png"), &noise(20, 20, 2, 0, 255)).unwrap();
    write_raster(&input.join("c.ppm"), &noise(16, 24, 3, 0, 255)).unwrap();
    std::fs::write(input.join("b.png"), b"not a png").unwrap();
    let out = run(&["normalize", s(&input), s(&output), "--weights", s(seeded), "--json", "-"]);
    assert_eq!(code(&out), 1);
    assert!(output.join("a.png").is_file() && output.join("c.ppm").is_file());
    assert!(!output.join("b.png").exists());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let ok: Vec<bool> = report.as_array().unwrap().iter().map(|r| r["ok"].as_bool().unwrap()).collect();
    assert_eq!(ok, [true, false, true]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("b.png"));
}

#[test]
fn lut_and_direct_paths_write_identical_files() {
    let (_, _, seeded) = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    write_raster(&input, &noise(33, 17, 4, 0, 255)).unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    assert!(run(&["normalize", s(&input), s(&a), "--weights", s(seeded), "--lut"]).status.success());
    assert!(run(&["normalize", s(&input), s(&b), "--weights", s(seeded), "--no-lut"]).status.success());
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    write_raster(&input, &noise(8, 8, 5, 0, 255)).unwrap();
    let out_png = dir.path().join("o.png");
    // missing weights flag, missing weights file, missing input, bad workers
    assert_eq!(code(&run(&["normalize", s(&input), s(&out_png)])), 2);
    assert_eq!(code(&run(&["normalize", s(&input), s(&out_png), "--weights", "/nonexistent.pnwt"])), 2);
    assert_eq!(code(&run(&["normalize", "/nonexistent.png", s(&out_png), "--weights", "x"])), 2);
    let out = bin().env("STAINFORGE_WORKERS", "0").args(["inspect-weights", "--expected"]).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = bin().env("STAINFORGE_WORKERS", "3").args(["inspect-weights", "--expected"]).output().unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn reinhard_output_matches_reference_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.png");
    let reference = dir.path().join("ref.png");
    write_raster(&src, &noise(64, 64, 6, 90, 170)).unwrap();
    write_raster(&reference, &noise(64, 64, 7, 110, 150)).unwrap();
    let out_img = dir.path().join("out.png");
    let out = run(&["normalize", s(&src), s(&out_img), "--method", "reinhard", "--reference", s(&reference)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let got = reinhard_fit(&decode_u8(&read_raster(&out_img).unwrap()));
    let want = reinhard_fit(&decode_u8(&read_raster(&reference).unwrap()));
    for c in 0..3 {
        // 8-bit quantization of the output bounds the agreement
        assert!((got.mean[c] - want.mean[c]).abs() < 5e-3, "{got:?} vs {want:?}");
        assert!((got.std[c] - want.std[c]).abs() < 5e-3, "{got:?} vs {want:?}");
    }

    let json = dir.path().join("ref.json");
    assert_eq!(code(&run(&["fit-reference", s(&reference), "--method", "reinhard", "-o", s(&json)])), 0);
    let via_json = dir.path().join("out2.png");
    assert_eq!(code(&run(&["normalize", s(&src), s(&via_json), "--method", "reinhard", "--reference", s(&json)])), 0);
    assert_eq!(std::fs::read(&out_img).unwrap(), std::fs::read(&via_json).unwrap());
    // a reinhard reference cannot drive macenko
    assert_eq!(code(&run(&["normalize", s(&src), s(&via_json), "--method", "macenko", "--reference", s(&json)])), 2);
}

#[test]
fn benchmark_report_is_consistent() {
    let (_, zero, _) = fixtures();
    let out = run(&["benchmark", "--weights", s(zero), "--tile", "64", "--duration", "0.05", "--workers", "2", "--json", "-"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let reports = v["reports"].as_array().unwrap();
    // direct and lut, each at 1 and 2 workers
    assert_eq!(reports.len(), 4);
    for r in reports {
        let fps = r["fps"].as_f64().unwrap();
        let mpx = r["mpx_per_s"].as_f64().unwrap();
        assert!((fps * 64.0 * 64.0 - mpx * 1e6).abs() <= 1e-9 * mpx * 1e6);
        let tiles = r["tiles"].as_f64().unwrap();
        assert!((fps - tiles / r["wall_seconds"].as_f64().unwrap()).abs() <= 1e-9 * fps);
    }
    let footer = v["footer"].as_str().unwrap();
    assert!(footer.contains("881.8") && footer.contains("1605.2"));

    let table = run(&["benchmark", "--weights", s(zero), "--tile", "32", "--duration", "0.02", "--path", "lut"]);
    assert!(stdout(&table).contains("1605.2"));
}

fn write_set(dir: &Path, names: &[&str], seed: u32) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, n) in names.iter().enumerate() {
        write_raster(&dir.join(n), &noise(32, 32, seed + i as u32, 0, 255)).unwrap();
    }
}

#[test]
fn metrics_on_identical_sets() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set");
    write_set(&set, &["x.png", "y.png"], 10);
    let out = run(&["metrics", s(&set), s(&set), s(&set), "--label", "same"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let row = text.lines().find(|l| l.starts_with("same")).unwrap();
    assert_eq!(row.split_whitespace().collect::<Vec<_>>(), ["same", "1.000±0.000", "1.000±0.000", "inf", "1.000±0.000"]);

    let out = run(&["metrics", s(&set), s(&set), s(&set), "--json", "-"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["files"], serde_json::json!(["x.png", "y.png"]));
    assert_eq!(v["report"]["psnr_target"]["mean"], "inf");
}

#[test]
fn metrics_skips_unmatched_and_rejects_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    write_set(&a, &["1.png", "2.png"], 20);
    write_set(&b, &["1.png", "2.png"], 30);
    write_set(&c, &["1.png"], 40);
    let out = run(&["metrics", s(&a), s(&b), s(&c), "--json", "-"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("2.png"));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["files"], serde_json::json!(["1.png"]));

    let d = dir.path().join("d");
    write_set(&d, &["9.png"], 50);
    assert_eq!(code(&run(&["metrics", s(&a), s(&b), s(&d)])), 2);
}

#[test]
fn train_mapper_identity_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set");
    std::fs::create_dir(&set).unwrap();
    // u8 26..229 is [-0.8, 0.8] after decoding
    write_raster(&set.join("p.png"), &noise(100, 100, 60, 26, 229)).unwrap();
    let params = dir.path().join("params.json");
    let curve = dir.path().join("curve.csv");
    let out = run(&["train-mapper", s(&set), s(&set), "-o", s(&params), "--curve", s(&curve), "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&curve).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,lr,mse"));
    assert!(lines.next().unwrap().starts_with("0,0e0,"));
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "5000");
    assert!(last[2].parse::<f64>().unwrap() < 1e-3, "{csv}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&params).unwrap()).unwrap();
    assert_eq!(json["w1"].as_array().unwrap().len(), 8);

    // the trained mapper applies through --method mapper
    let img = dir.path().join("mapped.png");
    assert_eq!(code(&run(&["normalize", s(&set.join("p.png")), s(&img), "--method", "mapper", "--params", s(&params)])), 0);

    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert_eq!(code(&run(&["train-mapper", s(&set), s(&set), "-o", s(p), "--iters", "300", "--seed", "4"])), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn inspect_weights_reports_layout() {
    let (_, zero, _) = fixtures();
    let out = run(&["inspect-weights", "--expected", "--json", "-"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let names: Vec<&str> = v["tensors"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(names[0], "stem.conv.weight");
    assert!(names.contains(&"stage4.block0.shortcut.weight"));
    assert_eq!(*names.last().unwrap(), "alpha");

    let out = run(&["inspect-weights", s(zero), "--expected"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("valid predictor weights"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.pnwt");
    std::fs::write(&bad, b"XXXX\x01\x00\x00\x00").unwrap();
    assert_eq!(code(&run(&["inspect-weights", s(&bad)])), 2);
}

#[test]
fn montage_layout_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut inputs = Vec::new();
    for i in 0..3 {
        let p = dir.path().join(format!("panel{i}.png"));
        write_raster(&p, &noise(64, 64, 70 + i, 0, 255)).unwrap();
        inputs.push(p);
    }
    let a = dir.path().join("m1.png");
    let b = dir.path().join("m2.png");
    for out in [&a, &b] {
        let mut args = vec!["montage", "-o", s(out)];
        args.extend(inputs.iter().map(|p| s(p)));
        assert_eq!(code(&run(&args)), 0);
    }
    assert_eq!(read_raster(&a).unwrap().width(), 3 * 64 + 2 * 4);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn wsi_output_is_independent_of_tiling_and_storage() {
    let (_, _, seeded) = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let raster = dir.path().join("slide.ppm");
    write_raster(&raster, &noise(300, 200, 80, 0, 255)).unwrap();

    let whole = dir.path().join("whole.png");
    let out = run(&["normalize-wsi", s(&raster), s(&whole), "--weights", s(seeded), "--tile", "512"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // re-tile the slide as a directory, then normalize it into another directory
    let tiled_out = dir.path().join("tiled_out");
    let out = run(&["normalize-wsi", s(&raster), s(&tiled_out), "--weights", s(seeded), "--tile", "64", "--no-lut", "--workers", "3"]);
    assert_eq!(code(&out), 0);
    let round = dir.path().join("round.png");
    let out = run(&["normalize-wsi", s(&tiled_out), s(&round), "--weights", s(seeded), "--tile", "100"]);
    assert_eq!(code(&out), 0);

    let direct = read_raster(&whole).unwrap();
    // assemble the tile directory via its index and compare
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tiled_out.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["width"], 300);
    let tile = read_raster(&tiled_out.join("tiles/1_2.png")).unwrap();
    assert_eq!(tile, direct.crop(128, 64, 64, 64).unwrap());
    assert_eq!(read_raster(&round).unwrap().width(), 300);
}
