use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_visbeam");

fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = r#"{
        "seed": 3,
        "light_levels": 2,
        "samples_per_pair": 8,
        "obstacle": "none",
        "stage1": { "epochs": 3, "batch_size": 256, "learning_rate": 0.001, "patience": 3 },
        "stage2": { "epochs": 20, "batch_size": 256, "learning_rate": 0.001 }
    }"#;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn visbeam(out: &Path, cfg: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("VISBEAM_OUT")
        .env_remove("VISBEAM_CONFIG")
        .output()
        .unwrap()
}

fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn fails_with(o: Output, code: i32, kind: &str) {
    assert_eq!(o.status.code(), Some(code), "stderr {}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error={kind} code={code} message=")), "{err}");
}

#[test]
fn full_pipeline_through_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = small_config(tmp.path());
    let run = |args: &[&str]| ok(visbeam(&out, &cfg, args));

    run(&["gen-scenes"]);
    let scenes = std::fs::read_to_string(out.join("scenes/scenes.csv")).unwrap();
    assert_eq!(scenes.lines().count(), 26);
    assert!(out.join("scenes/cam1/case_3_3_l00.ppm").exists());

    run(&["gen-snr"]);
    let printed = run(&["label"]);
    let labels = std::fs::read_to_string(out.join("labels_none.csv")).unwrap();
    assert_eq!(printed, labels);
    let rows: Vec<&str> = labels.lines().collect();
    assert_eq!(rows[0], "i,j,t,r");
    assert_eq!(rows.len(), 26);
    let label_33 = rows.iter().find(|r| r.starts_with("3,3,")).unwrap().to_string();
    let first_manifest = std::fs::read(out.join("manifests/label.json")).unwrap();

    run(&["gen-crops"]);
    let s1 = run(&["train-stage1"]);
    assert!(s1.contains("test_accuracy="), "{s1}");
    let conv = run(&["convert-fcn"]);
    assert!(out.join("stage1_fcn.bsw").exists());
    let diff: f64 = conv.split("max_abs_diff=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(diff <= 1e-9, "{conv}");

    run(&["bitmap"]);
    let manifest = std::fs::read_to_string(out.join("bitmaps/per-crop/stage2_1.csv")).unwrap();
    assert_eq!(manifest.lines().next().unwrap(), "case_i,case_j,light_level,camera_set,bitmap_path,t,r");
    assert_eq!(manifest.lines().count(), 1 + 25 * 2);
    run(&["train-stage2"]);
    assert!(out.join("stage2_per-crop_1.bsw").exists());

    let image = out.join("scenes/cam1/case_3_3_l00.ppm");
    let pred = run(&["predict", "--image", image.to_str().unwrap()]);
    let (t, r) = {
        let f: Vec<&str> = label_33.split(',').collect();
        (f[2].to_owned(), f[3].to_owned())
    };
    assert!(pred.starts_with(&format!("pair=({t},{r}) ")), "{pred} vs {label_33}");
    for key in ["confidence=", "stage1_ms=", "stage2_ms=", "total_ms="] {
        assert!(pred.contains(key), "{pred}");
    }

    let single = run(&["bitmap", "--image", image.to_str().unwrap()]);
    assert!(single.starts_with("grid=28x38 top_k=8"), "{single}");
    assert!(out.join("bitmap/case_3_3_l00_bits.pgm").exists());

    let eval = run(&["evaluate"]);
    assert!(eval.contains("min_visible_iou,"), "{eval}");
    assert!(eval.contains("stage2_test_accuracy,"), "{eval}");
    assert!(out.join("eval/confusion.csv").exists());

    let bench = run(&["bench", "--repeats", "10"]);
    assert!(bench.contains("fcn_speedup="), "{bench}");
    run(&["report"]);
    let rep = run(&["report", "--predicted-ms", "3.104"]);
    assert!(rep.contains("reduction_pct=93.32"), "{rep}");
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("predicted_ms,dwell_ms,pairs,sweep_ms,reduction_pct\n3.104,0.275,169,"), "{csv}");

    run(&["label"]);
    assert_eq!(std::fs::read(out.join("manifests/label.json")).unwrap(), first_manifest);
}

#[test]
fn errors_are_one_line_with_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = small_config(tmp.path());

    fails_with(visbeam(&out, &cfg, &["label"]), 4, "missing-input");

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{ "window": 0 }"#).unwrap();
    fails_with(visbeam(&out, &bad, &["gen-snr"]), 3, "config");
    std::fs::write(&bad, r#"{ "no_such_field": 1 }"#).unwrap();
    fails_with(visbeam(&out, &bad, &["gen-snr"]), 3, "config");

    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("stage1.bsw"), b"XXXX0000").unwrap();
    fails_with(visbeam(&out, &cfg, &["convert-fcn"]), 6, "bad-magic");
    std::fs::write(out.join("stage1.bsw"), b"BSW1").unwrap();
    fails_with(visbeam(&out, &cfg, &["convert-fcn"]), 7, "truncated");

    std::fs::write(out.join("snr_none.csv"), "i,j,t,r,sample_index,snr\n1,1,0,0,0,abc\n").unwrap();
    fails_with(visbeam(&out, &cfg, &["label"]), 5, "parse");

    let usage = visbeam(&out, &cfg, &["no-such-command"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn env_overrides_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("from-env");
    let o = Command::new(BIN)
        .arg("--config")
        .arg(&cfg)
        .arg("gen-snr")
        .env("VISBEAM_OUT", &out)
        .env("VISBEAM_THREADS", "1")
        .output()
        .unwrap();
    ok(o);
    assert!(out.join("snr_none.csv").exists());
    assert!(out.join("manifests/gen-snr.json").exists());
}

#[test]
fn fcn_mode_agrees_with_per_crop_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{ "light_levels": 4, "stage2": { "epochs": 100, "batch_size": 256, "learning_rate": 0.001 } }"#,
    )
    .unwrap();
    let run = |args: &[&str]| ok(visbeam(&out, &cfg, args));
    for step in [&["gen-scenes"][..], &["gen-snr"], &["label"], &["gen-crops"], &["train-stage1"], &["convert-fcn"]] {
        run(step);
    }
    for mode in ["per-crop", "fcn"] {
        run(&["--mode", mode, "bitmap"]);
        run(&["--mode", mode, "train-stage2"]);
    }
    let pair = |line: &str| line.split_whitespace().next().unwrap().to_owned();
    let mut agree = 0;
    for i in 1..=5 {
        for j in 1..=5 {
            let img = out.join(format!("scenes/cam1/case_{i}_{j}_l00.ppm"));
            let img = img.to_str().unwrap();
            let a = run(&["--mode", "per-crop", "predict", "--image", img]);
            let b = run(&["--mode", "fcn", "predict", "--image", img]);
            agree += (pair(&a) == pair(&b)) as usize;
        }
    }
    assert!(agree * 100 >= 95 * 25, "modes agree on {agree}/25 scenes");
}
