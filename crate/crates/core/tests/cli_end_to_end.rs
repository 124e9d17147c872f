mod common;

use std::path::Path;

use common::{lenssweep, path_str, stdout_json};
use serde_json::{json, Value};

fn write_scene(dir: &Path) -> std::path::PathBuf {
    use lenssweep::io_formats::write_png8;
    write_png8(&common::texture(160, 160, 3, 9), &dir.join("bg.png")).unwrap();
    write_png8(&common::foreground(30, 40, 10), &dir.join("fg.png")).unwrap();
    let doc = json!({
        "schema": "lenssweep/scene/v1",
        "background": "bg.png",
        "background_plane": {"a": 0.0, "b": 0.0, "c": 0.3},
        "foreground": {
            "image": "fg.png",
            "plane": {"a": 0.0, "b": 0.0, "c": 0.8},
            "placement": {"x": 65, "y": 60, "width": 30, "height": 40}
        }
    });
    let path = dir.join("scene.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn gen_bench_then_validate_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let (fg, bg) = common::write_assets(tmp.path(), 1, 2);
    let out = tmp.path().join("bench");
    let report = stdout_json(&lenssweep(&[
        "gen-bench",
        "--fg-dir",
        path_str(&fg),
        "--bg-dir",
        path_str(&bg),
        "--out",
        path_str(&out),
        "--canvas-px",
        "64",
        "--margin-px",
        "16",
    ]));
    assert_eq!(report["scenes"], 2);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["schema"], "lenssweep/manifest/v1");
    assert_eq!(manifest["subcommand"], "gen-bench");
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["resolved"]["canvas_px"], 64);

    let summary = stdout_json(&lenssweep(&["validate-bench", "--dir", path_str(&out)]));
    assert_eq!(summary, json!({"scenes": 2, "images": 6}));
}

#[test]
fn gen_bench_output_does_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let (fg, bg) = common::write_assets(tmp.path(), 2, 1);
    let mut dirs = Vec::new();
    for jobs in ["1", "4"] {
        let out = tmp.path().join(format!("bench_{jobs}"));
        stdout_json(&lenssweep(&[
            "gen-bench",
            "--fg-dir",
            path_str(&fg),
            "--bg-dir",
            path_str(&bg),
            "--out",
            path_str(&out),
            "--canvas-px",
            "64",
            "--margin-px",
            "16",
            "--seed",
            "4",
            "--jobs",
            jobs,
        ]));
        dirs.push(out);
    }
    for sub in ["aif", "depth", "images", "metadata"] {
        for entry in std::fs::read_dir(dirs[0].join(sub)).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dirs[0].join(sub).join(&name)).unwrap();
            let b = std::fs::read(dirs[1].join(sub).join(&name)).unwrap();
            assert!(a == b, "{sub}/{name:?} depends on --jobs");
        }
    }
}

#[test]
fn stack_writes_reference_and_one_frame_per_k() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = write_scene(tmp.path());
    let out = tmp.path().join("stack");
    let o = lenssweep(&[
        "stack",
        "--scene",
        path_str(&scene),
        "--ks",
        "10,20,30",
        "--focus-disparity",
        "0.8",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stack = read_json(&out.join("stack.json"));
    assert_eq!(stack["ks"], json!([10.0, 20.0, 30.0]));
    assert_eq!(stack["frames"].as_array().unwrap().len(), 3);
    assert!(out.join("reference.png").is_file());
    for f in stack["frames"].as_array().unwrap() {
        assert!(out.join(f["image"].as_str().unwrap()).is_file());
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["resolved"]["ks"], json!([10.0, 20.0, 30.0]));

    let loaded = lenssweep::io_formats::read_stack_dir(&out).unwrap();
    assert_eq!(loaded.ks(), vec![10.0, 20.0, 30.0]);
    assert_eq!(loaded.reference.width(), 160);
}

#[test]
fn manifest_only_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = write_scene(tmp.path());
    let out = tmp.path().join("stack");
    let manifest = stdout_json(&lenssweep(&[
        "stack",
        "--scene",
        path_str(&scene),
        "--ks",
        "10,20",
        "--focus-disparity",
        "0.5",
        "--out",
        path_str(&out),
        "--manifest-only",
    ]));
    assert_eq!(manifest["subcommand"], "stack");
    assert_eq!(manifest["resolved"]["render"]["radius_steps_per_px"], 32);
    assert_eq!(manifest["config"]["ks"], json!([10.0, 20.0]));
    assert!(!out.exists());
}

#[test]
fn render_then_eval_bokeh() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = write_scene(tmp.path());
    let sharp = tmp.path().join("sharp.png");
    let soft = tmp.path().join("soft.png");
    for (k, out) in [("0", &sharp), ("12", &soft)] {
        let o = lenssweep(&[
            "render",
            "--scene",
            path_str(&scene),
            "--k",
            k,
            "--focus-disparity",
            "0.8",
            "--out",
            path_str(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(
        tmp.path().join("soft.png.manifest.json").is_file()
            || tmp.path().join("soft.manifest.json").is_file()
    );

    let same = stdout_json(&lenssweep(&[
        "eval-bokeh",
        "--pred",
        path_str(&sharp),
        "--gt",
        path_str(&sharp),
    ]));
    assert_eq!(same["psnr_db"], "inf");
    assert_eq!(same["ssim"], 1.0);

    let report_path = tmp.path().join("q.json");
    let diff = stdout_json(&lenssweep(&[
        "eval-bokeh",
        "--pred",
        path_str(&soft),
        "--gt",
        path_str(&sharp),
        "--report",
        path_str(&report_path),
    ]));
    let psnr = diff["psnr_db"].as_f64().unwrap();
    assert!(psnr > 10.0 && psnr < 60.0, "{psnr}");
    assert!(diff["ssim"].as_f64().unwrap() < 1.0);
    assert_eq!(read_json(&report_path), diff);
}

#[test]
fn calibrate_writes_jsonl_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/calib");
    let out = tmp.path().join("aperture.jsonl");
    let o = lenssweep(&[
        "calibrate",
        "--dataset",
        "aperture",
        "--root",
        path_str(&fixtures.join("aperture")),
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 5, "4 rows and a trailer");
    assert_eq!(rows[4]["trailer"], true);
    for r in &rows[..4] {
        let d = r["camera_anns"]["dof-cond"].as_f64().unwrap();
        assert!((0.0..=30.0).contains(&d));
    }
}

#[test]
fn config_file_supplies_missing_flags_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = write_scene(tmp.path());
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"ks": [4, 8], "focus_disparity": 0.3, "gamma": 2.0}"#,
    )
    .unwrap();
    let out = tmp.path().join("stack");
    let manifest = stdout_json(&lenssweep(&[
        "stack",
        "--scene",
        path_str(&scene),
        "--out",
        path_str(&out),
        "--config",
        path_str(&cfg),
        "--gamma",
        "2.4",
        "--manifest-only",
    ]));
    assert_eq!(manifest["config"]["ks"], json!([4.0, 8.0]));
    assert_eq!(manifest["config"]["focus_disparity"], 0.3);
    assert_eq!(manifest["config"]["gamma"], 2.4);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lenssweep(&["render", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--no-such-flag"));

    let o = lenssweep(&["sweep-depth", "--out", "x.pfm"]);
    assert_eq!(o.status.code(), Some(1));

    let missing = tmp.path().join("missing.json");
    let o = lenssweep(&[
        "render",
        "--scene",
        path_str(&missing),
        "--k",
        "5",
        "--focus-disparity",
        "0.5",
        "--out",
        "x.png",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = lenssweep(&["validate-bench", "--dir", path_str(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(lenssweep(&["--version"]).status.code(), Some(0));
}

#[test]
fn sweep_depth_on_a_stack_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = write_scene(tmp.path());
    let stack = tmp.path().join("stack");
    let o = lenssweep(&[
        "stack",
        "--scene",
        path_str(&scene),
        "--ks",
        "4,8,12",
        "--focus-disparity",
        "0.8",
        "--out",
        path_str(&stack),
    ]);
    assert!(o.status.success());
    let depth = tmp.path().join("d.pfm");
    let delta = tmp.path().join("delta.pfm");
    let report = stdout_json(&lenssweep(&[
        "sweep-depth",
        "--stack-dir",
        path_str(&stack),
        "--out",
        path_str(&depth),
        "--delta-out",
        path_str(&delta),
        "--sign",
        "gt",
    ]));
    assert_eq!(report["m_frames"], 3);
    assert_eq!(report["sum_k_sq"], 16.0 + 64.0 + 144.0);
    assert!(report["valid_fraction"].as_f64().unwrap() > 0.2);
    // background offset is 0.8 - 0.3 = 0.5
    let median = report["median_rel_error"].as_f64().unwrap();
    assert!(median < 0.05, "{median}");
    let map = lenssweep::io_formats::read_pfm(&delta).unwrap();
    assert_eq!((map.width, map.height), (160, 160));
}
