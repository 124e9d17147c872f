//! Procedural assets shared by integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lenssweep::io_formats::write_png8;
use lenssweep::raster::{Colorspace, RasterImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Multi-octave blocky value noise in display gamma, values in [0, 1].
pub fn texture(width: usize, height: usize, channels: usize, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let octaves = [1usize, 2, 4, 8];
    let grids: Vec<(usize, Vec<f32>)> = octaves
        .iter()
        .map(|&s| {
            let (gw, gh) = (width / s + 1, height / s + 1);
            (s, (0..gw * gh * 3).map(|_| rng.random::<f32>()).collect())
        })
        .collect();
    RasterImage::from_fn(
        width,
        height,
        channels,
        Colorspace::DisplayGamma,
        |x, y, px| {
            for c in 0..3.min(channels) {
                let mut v = 0.0;
                for (s, g) in &grids {
                    let gw = width / s + 1;
                    v += g[((y / s) * gw + x / s) * 3 + c];
                }
                px[c] = v / octaves.len() as f32;
            }
            if channels == 4 {
                px[3] = 1.0;
            }
        },
    )
    .unwrap()
}

/// Textured RGBA ellipse filling most of its frame.
pub fn foreground(width: usize, height: usize, seed: u64) -> RasterImage {
    let tex = texture(width, height, 4, seed);
    let (cx, cy) = (width as f32 / 2.0, height as f32 / 2.0);
    let (rx, ry) = (width as f32 * 0.45, height as f32 * 0.45);
    RasterImage::from_fn(width, height, 4, Colorspace::DisplayGamma, |x, y, px| {
        px.copy_from_slice(tex.pixel(x, y));
        let dx = (x as f32 + 0.5 - cx) / rx;
        let dy = (y as f32 + 0.5 - cy) / ry;
        px[3] = if dx * dx + dy * dy < 1.0 { 1.0 } else { 0.0 };
    })
    .unwrap()
}

/// Writes `n_fg` foregrounds to `dir/fg` and `n_bg` backgrounds to `dir/bg`.
pub fn write_assets(dir: &Path, n_fg: usize, n_bg: usize) -> (PathBuf, PathBuf) {
    let (fg, bg) = (dir.join("fg"), dir.join("bg"));
    std::fs::create_dir_all(&fg).unwrap();
    std::fs::create_dir_all(&bg).unwrap();
    for i in 0..n_fg {
        write_png8(
            &foreground(120, 160, 100 + i as u64),
            &fg.join(format!("fg{i}.png")),
        )
        .unwrap();
    }
    for i in 0..n_bg {
        write_png8(
            &texture(300, 300, 3, 200 + i as u64),
            &bg.join(format!("bg{i}.png")),
        )
        .unwrap();
    }
    (fg, bg)
}

pub fn lenssweep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lenssweep"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// gen-bench, then sweep-depth with ground-truth signs and eval-depth per
/// scene. Returns each scene's eval-depth report.
pub fn bench_pipeline(dir: &Path, scenes: usize, canvas_px: usize) -> Vec<serde_json::Value> {
    let (fg, bg) = write_assets(dir, 2, 2);
    let bench = dir.join("bench");
    let (n, c) = (scenes.to_string(), canvas_px.to_string());
    stdout_json(&lenssweep(&[
        "gen-bench",
        "--fg-dir",
        path_str(&fg),
        "--bg-dir",
        path_str(&bg),
        "--out",
        path_str(&bench),
        "--scenes",
        &n,
        "--canvas-px",
        &c,
        "--margin-px",
        "32",
        "--seed",
        "1",
        "--log-level",
        "warn",
    ]));
    let mut reports = Vec::new();
    for i in 0..scenes {
        let id = format!("scene_{i:04}");
        let pred = dir.join(format!("{id}_depth.pfm"));
        stdout_json(&lenssweep(&[
            "sweep-depth",
            "--bench-dir",
            path_str(&bench),
            "--scene",
            &id,
            "--sign",
            "gt",
            "--out",
            path_str(&pred),
            "--log-level",
            "warn",
        ]));
        let gt = bench.join(format!("depth/{id}.pfm"));
        reports.push(stdout_json(&lenssweep(&[
            "eval-depth",
            "--pred",
            path_str(&pred),
            "--gt",
            path_str(&gt),
            "--gt-kind",
            "disparity",
            "--log-level",
            "warn",
        ])));
    }
    reports
}
