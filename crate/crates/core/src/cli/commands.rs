use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use super::{usage, CliError, Command, Plan};
use crate::benchgen::{self, BenchmarkPolicy};
use crate::calib::{harmonize_dataset, DatasetKind, HarmonizeDefaults};
use crate::dfd::{
    sweep_depth, DepthEstimate, MeasureOptions, Sign, SignPolicy, SweepOptions, SweepProvenance,
};
use crate::error::{Error, Result};
use crate::io_formats::{
    ensure_dir, read_image8, read_json, read_pfm, read_stack_dir, write_json, write_jsonl,
    write_pfm, write_png8, write_stack_dir,
};
use crate::metrics::{bokeh_quality, depth_metrics};
use crate::raster::{discontinuity_mask, FloatMap, DEFAULT_GAMMA};
use crate::renderer::{
    render_bokeh, render_from_disparity, render_stack, BokehStack, Provenance, RenderParams,
    DEFAULT_MAX_RADIUS_PX, DEFAULT_RADIUS_STEPS_PER_PX,
};
use crate::scene::SceneDocument;

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenBenchArgs {
    /// Directory of RGBA foreground mattes (PNG).
    #[arg(long)]
    pub fg_dir: PathBuf,
    /// Directory of background photographs.
    #[arg(long)]
    pub bg_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of scenes (default: one per foreground × background pair).
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub ks_per_scene: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write renders as JPEG (quality 95) instead of PNG.
    #[arg(long)]
    pub jpeg: bool,
    #[arg(long, default_value_t = 1024)]
    pub canvas_px: usize,
    #[arg(long, default_value_t = 64)]
    pub margin_px: usize,
    #[arg(long, default_value_t = 5.0)]
    pub k_min: f64,
    #[arg(long, default_value_t = 30.0)]
    pub k_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub defocus_scale: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
}

impl GenBenchArgs {
    fn policy(&self) -> BenchmarkPolicy {
        BenchmarkPolicy {
            canvas_px: self.canvas_px,
            margin_px: self.margin_px,
            n_k: self.ks_per_scene,
            k_range: (self.k_min, self.k_max),
            defocus_scale: self.defocus_scale,
            gamma: self.gamma,
            seed: self.seed,
            jpeg: self.jpeg,
            ..BenchmarkPolicy::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderArgs {
    /// Scene document (schema lenssweep/scene/v1).
    #[arg(long)]
    pub scene: PathBuf,
    /// Bokeh strength in px per unit disparity.
    #[arg(long)]
    pub k: f64,
    #[arg(long)]
    pub focus_disparity: f64,
    /// Output PNG (display gamma).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub defocus_scale: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_RADIUS_PX)]
    pub max_radius_px: f64,
    #[arg(long, default_value_t = DEFAULT_RADIUS_STEPS_PER_PX)]
    pub radius_steps_per_px: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StackArgs {
    /// Scene document; alternative to --aif with --disparity.
    #[arg(long, conflicts_with_all = ["aif", "disparity"])]
    pub scene: Option<PathBuf>,
    /// All-in-focus image (display gamma).
    #[arg(long, requires = "disparity")]
    pub aif: Option<PathBuf>,
    /// Normalized disparity PFM matching --aif.
    #[arg(long, requires = "aif")]
    pub disparity: Option<PathBuf>,
    /// Comma-separated increasing bokeh strengths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<f64>,
    #[arg(long)]
    pub focus_disparity: f64,
    /// Output stack directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub defocus_scale: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_RADIUS_PX)]
    pub max_radius_px: f64,
    #[arg(long, default_value_t = DEFAULT_RADIUS_STEPS_PER_PX)]
    pub radius_steps_per_px: u32,
    /// Disparity step marking an occlusion edge (with --disparity).
    #[arg(long, default_value_t = benchgen::OCCLUSION_JUMP)]
    pub edge_jump: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignArg {
    Front,
    Behind,
    None,
    /// Per-pixel sign from ground-truth disparity.
    Gt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepDepthArgs {
    /// Stack directory written by `stack`.
    #[arg(long, conflicts_with = "bench_dir")]
    pub stack_dir: Option<PathBuf>,
    /// Benchmark directory written by `gen-bench`; needs --scene.
    #[arg(long, requires = "scene")]
    pub bench_dir: Option<PathBuf>,
    /// Scene id inside --bench-dir, e.g. scene_0000.
    #[arg(long)]
    pub scene: Option<String>,
    /// Metric depth PFM; 0 where unknown.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional PFM of the inverse-depth offset; -1 where invalid.
    #[arg(long)]
    pub delta_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SignArg::None)]
    pub sign: SignArg,
    /// Focus distance in meters (default: 1 / focus disparity).
    #[arg(long)]
    pub s1_m: Option<f64>,
    /// Ground-truth disparity PFM (default: the stack's own, when present).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Odd side of the square matching window.
    #[arg(long, default_value_t = 21)]
    pub window_px: usize,
    #[arg(long, default_value_t = 32.0)]
    pub r_max_px: f64,
    #[arg(long, default_value_t = 0.25)]
    pub grid_step_px: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub texture_threshold: f64,
    /// Disable parabolic refinement of the grid optimum.
    #[arg(long)]
    pub no_subgrid: bool,
    /// Exclusion distance around occlusion edges (default: half window + 1).
    #[arg(long)]
    pub edge_exclusion_px: Option<f64>,
    /// Do not mask pixels near the stack's occlusion edges.
    #[arg(long)]
    pub ignore_edges: bool,
}

impl SweepDepthArgs {
    fn measure(&self) -> MeasureOptions {
        MeasureOptions {
            window_px: self.window_px,
            r_max_px: self.r_max_px,
            grid_step_px: self.grid_step_px,
            texture_threshold: self.texture_threshold,
            subgrid: !self.no_subgrid,
            edge_exclusion_px: self.edge_exclusion_px,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    /// dpdd, aperture or blb.
    #[arg(long)]
    pub dataset: DatasetKind,
    #[arg(long)]
    pub root: PathBuf,
    /// `exiftool -j` dump (DPDD; default ROOT/exif.json).
    #[arg(long)]
    pub exif_json: Option<PathBuf>,
    /// Output JSONL.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub focal_mm: Option<f64>,
    #[arg(long)]
    pub sensor_mm: Option<f64>,
    #[arg(long)]
    pub crop: Option<f64>,
    /// Directory for converted depth maps (BLB; default OUT_STEM_depth/ next to OUT).
    #[arg(long)]
    pub aux_dir: Option<PathBuf>,
    #[arg(long, default_value_t = crate::calib::DEFAULT_RELAX_FACTOR)]
    pub relax_factor: f64,
    #[arg(long, default_value_t = crate::calib::DEFAULT_PROBE_FRACTION)]
    pub probe_fraction: f64,
    #[arg(long, default_value_t = 60.0)]
    pub pairing_window_s: f64,
    #[arg(long, default_value_t = 0.05)]
    pub focus_tolerance: f64,
}

impl CalibrateArgs {
    fn defaults(&self) -> HarmonizeDefaults {
        let aux = self.aux_dir.clone().or_else(|| {
            (self.dataset == DatasetKind::Blb).then(|| {
                let stem = self
                    .out
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                self.out.with_file_name(format!("{stem}_depth"))
            })
        });
        HarmonizeDefaults {
            focal_length_mm: self.focal_mm,
            sensor_width_mm: self.sensor_mm,
            crop_factor: self.crop,
            exif_json: self.exif_json.clone(),
            aux_dir: aux,
            relax_factor: self.relax_factor,
            probe_fraction: self.probe_fraction,
            pairing_window_s: self.pairing_window_s,
            focus_tolerance: self.focus_tolerance,
            ..HarmonizeDefaults::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalBokehArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Evaluate only the window x,y,width,height.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub crop: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1.0)]
    pub data_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Depth,
    Disparity,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalDepthArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = ValueKind::Depth)]
    pub pred_kind: ValueKind,
    /// Disparity ground truth is compared as depth 1/d.
    #[arg(long, value_enum, default_value_t = ValueKind::Depth)]
    pub gt_kind: ValueKind,
    /// PNG mask; nonzero pixels are evaluated.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateBenchArgs {
    #[arg(long)]
    pub dir: PathBuf,
}

pub(super) fn config_value(cmd: &Command) -> CliResult<Value> {
    let v = match cmd {
        Command::GenBench(a) => serde_json::to_value(a),
        Command::Render(a) => serde_json::to_value(a),
        Command::Stack(a) => serde_json::to_value(a),
        Command::SweepDepth(a) => serde_json::to_value(a),
        Command::Calibrate(a) => serde_json::to_value(a),
        Command::EvalBokeh(a) => serde_json::to_value(a),
        Command::EvalDepth(a) => serde_json::to_value(a),
        Command::ValidateBench(a) => serde_json::to_value(a),
    };
    v.map_err(|e| CliError::Lib(Error::Internal(e.to_string())))
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Lib(Error::Internal(e.to_string())))
}

fn sibling_manifest(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{name}.manifest.json"))
}

fn check_ks(ks: &[f64]) -> CliResult<()> {
    if ks.is_empty() {
        return Err(usage("--ks needs at least one value"));
    }
    for (i, &k) in ks.iter().enumerate() {
        if !(k.is_finite() && k > 0.0) || (i > 0 && k <= ks[i - 1]) {
            return Err(usage(format!(
                "--ks must be positive and strictly increasing, got {ks:?}"
            )));
        }
    }
    Ok(())
}

fn render_params(
    k: f64,
    focus: f64,
    scale: f64,
    gamma: f64,
    max_radius: f64,
    steps: u32,
) -> RenderParams {
    RenderParams {
        k,
        focus_disparity: focus,
        defocus_scale: scale,
        gamma,
        radius_steps_per_px: steps,
        max_radius_px: max_radius,
    }
}

pub(super) fn plan(cmd: &Command) -> CliResult<Plan> {
    Ok(match cmd {
        Command::GenBench(a) => {
            let policy = a.policy();
            policy.validate()?;
            Plan {
                resolved: to_value(&policy)?,
                seed: Some(a.seed),
                inputs: vec![a.fg_dir.clone(), a.bg_dir.clone()],
                outputs: vec![a.out.clone()],
                manifest_path: Some(a.out.join("manifest.json")),
            }
        }
        Command::Render(a) => Plan {
            resolved: to_value(&render_params(
                a.k,
                a.focus_disparity,
                a.defocus_scale,
                read_json::<SceneDocument>(&a.scene)?.gamma,
                a.max_radius_px,
                a.radius_steps_per_px,
            ))?,
            seed: None,
            inputs: vec![a.scene.clone()],
            outputs: vec![a.out.clone()],
            manifest_path: Some(sibling_manifest(&a.out)),
        },
        Command::Stack(a) => {
            check_ks(&a.ks)?;
            if a.scene.is_none() && a.aif.is_none() {
                return Err(usage("stack needs --scene or --aif with --disparity"));
            }
            let params = render_params(
                0.0,
                a.focus_disparity,
                a.defocus_scale,
                a.gamma,
                a.max_radius_px,
                a.radius_steps_per_px,
            );
            let inputs = [&a.scene, &a.aif, &a.disparity]
                .into_iter()
                .flatten()
                .cloned()
                .collect();
            Plan {
                resolved: json!({ "render": to_value(&params)?, "ks": a.ks, "edge_jump": a.edge_jump }),
                seed: None,
                inputs,
                outputs: vec![a.out.clone()],
                manifest_path: Some(a.out.join("manifest.json")),
            }
        }
        Command::SweepDepth(a) => {
            let input = match (&a.stack_dir, &a.bench_dir, &a.scene) {
                (Some(dir), None, _) => dir.clone(),
                (None, Some(dir), Some(scene)) => dir.join(format!("metadata/{scene}_*")),
                _ => {
                    return Err(usage(
                        "sweep-depth needs --stack-dir or --bench-dir with --scene",
                    ))
                }
            };
            if a.window_px % 2 == 0 {
                return Err(usage("--window-px must be odd"));
            }
            let mut outputs = vec![a.out.clone()];
            outputs.extend(a.delta_out.clone());
            outputs.extend(a.report.clone());
            let mut inputs = vec![input];
            inputs.extend(a.gt.clone());
            Plan {
                resolved: json!({
                    "measure": to_value(&a.measure())?,
                    "edge_exclusion_px": a.measure().edge_exclusion(),
                    "sign": a.sign,
                    "s1_m": a.s1_m,
                    "ignore_edges": a.ignore_edges,
                }),
                seed: None,
                inputs,
                outputs,
                manifest_path: Some(sibling_manifest(&a.out)),
            }
        }
        Command::Calibrate(a) => {
            let defaults = a.defaults();
            let mut outputs = vec![a.out.clone()];
            outputs.extend(defaults.aux_dir.clone());
            Plan {
                resolved: to_value(&defaults)?,
                seed: None,
                inputs: [Some(a.root.clone()), a.exif_json.clone()]
                    .into_iter()
                    .flatten()
                    .collect(),
                outputs,
                manifest_path: Some(sibling_manifest(&a.out)),
            }
        }
        Command::EvalBokeh(a) => Plan {
            resolved: json!({ "data_range": a.data_range, "crop": a.crop }),
            seed: None,
            inputs: vec![a.pred.clone(), a.gt.clone()],
            outputs: a.report.iter().cloned().collect(),
            manifest_path: a.report.as_deref().map(sibling_manifest),
        },
        Command::EvalDepth(a) => Plan {
            resolved: json!({ "pred_kind": a.pred_kind, "gt_kind": a.gt_kind }),
            seed: None,
            inputs: [Some(a.pred.clone()), Some(a.gt.clone()), a.mask.clone()]
                .into_iter()
                .flatten()
                .collect(),
            outputs: a.report.iter().cloned().collect(),
            manifest_path: a.report.as_deref().map(sibling_manifest),
        },
        Command::ValidateBench(a) => Plan {
            resolved: Value::Null,
            seed: None,
            inputs: vec![a.dir.clone()],
            outputs: Vec::new(),
            manifest_path: None,
        },
    })
}

pub(super) fn execute(cmd: &Command) -> CliResult<Value> {
    match cmd {
        Command::GenBench(a) => gen_bench(a),
        Command::Render(a) => render(a),
        Command::Stack(a) => stack(a),
        Command::SweepDepth(a) => sweep(a),
        Command::Calibrate(a) => calibrate(a),
        Command::EvalBokeh(a) => eval_bokeh(a),
        Command::EvalDepth(a) => eval_depth(a),
        Command::ValidateBench(a) => Ok(to_value(&benchgen::validate_bench(&a.dir)?)?),
    }
}

fn gen_bench(a: &GenBenchArgs) -> CliResult<Value> {
    let records =
        benchgen::generate_benchmark(&a.fg_dir, &a.bg_dir, &a.out, &a.policy(), a.scenes)?;
    let images: usize = records.iter().map(|r| r.images.len()).sum();
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    Ok(json!({ "scenes": records.len(), "images": images, "ids": ids }))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn render(a: &RenderArgs) -> CliResult<Value> {
    let doc: SceneDocument = read_json(&a.scene)?;
    let scene = SceneDocument::load(&a.scene)?;
    let params = render_params(
        a.k,
        a.focus_disparity,
        a.defocus_scale,
        doc.gamma,
        a.max_radius_px,
        a.radius_steps_per_px,
    );
    let img = render_bokeh(&scene, &params)?;
    ensure_parent(&a.out)?;
    write_png8(&img, &a.out)?;
    Ok(Value::Null)
}

fn stack(a: &StackArgs) -> CliResult<Value> {
    let quality = render_params(
        0.0,
        a.focus_disparity,
        a.defocus_scale,
        a.gamma,
        a.max_radius_px,
        a.radius_steps_per_px,
    );
    let stack = match (&a.scene, &a.aif, &a.disparity) {
        (Some(scene), _, _) => render_stack(&SceneDocument::load(scene)?, &a.ks, &quality)?,
        (None, Some(aif), Some(disp)) => {
            let reference = read_image8(aif)?.to_rgb();
            let disparity = read_pfm(disp)?;
            if (disparity.width, disparity.height) != (reference.width(), reference.height()) {
                return Err(CliError::Lib(Error::DimensionMismatch(format!(
                    "disparity {}x{} vs image {}x{}",
                    disparity.width,
                    disparity.height,
                    reference.width(),
                    reference.height()
                ))));
            }
            let linear = reference.to_linear(a.gamma);
            let mut frames = Vec::with_capacity(a.ks.len());
            for &k in &a.ks {
                frames.push((
                    k,
                    render_from_disparity(&linear, &disparity, &quality.with_k(k))?,
                ));
            }
            let edges = discontinuity_mask(&disparity, a.edge_jump);
            BokehStack {
                reference,
                frames,
                focus_disparity: a.focus_disparity,
                defocus_scale: a.defocus_scale,
                gamma: a.gamma,
                disparity: Some(disparity),
                occlusion_edges: Some(edges),
                provenance: Provenance::current(),
            }
        }
        _ => return Err(usage("stack needs --scene or --aif with --disparity")),
    };
    let manifest = write_stack_dir(&stack, &a.out)?;
    Ok(json!({ "ks": manifest.ks, "frames": manifest.frames.len(), "dir": a.out }))
}

/// Sweep summary written by `sweep-depth --report`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema: String,
    pub width: usize,
    pub height: usize,
    pub valid_fraction: f64,
    pub n_valid: usize,
    pub m_frames: usize,
    pub sum_k_sq: f64,
    pub sign: SignArg,
    /// Relative error of the offset estimate against ground truth, over valid
    /// pixels whose true radius at the largest strength is at least 1 px.
    pub median_rel_error: Option<f64>,
    pub p95_rel_error: Option<f64>,
    pub n_compared: usize,
    pub provenance: SweepProvenance,
}

fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    Some(sorted[idx])
}

fn offset_errors(
    est: &DepthEstimate,
    gt: &FloatMap,
    focus: f64,
    scale: f64,
    k_max: f64,
) -> Vec<f64> {
    let mut errs: Vec<f64> = (0..est.delta_hat.len())
        .filter(|&i| est.is_valid(i))
        .filter_map(|i| {
            let truth = (gt.data[i] as f64 - focus).abs() / scale;
            (truth * k_max >= 1.0).then(|| (est.delta_hat[i] as f64 - truth).abs() / truth)
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    errs
}

fn sweep(a: &SweepDepthArgs) -> CliResult<Value> {
    let stack = match (&a.stack_dir, &a.bench_dir, &a.scene) {
        (Some(dir), _, _) => read_stack_dir(dir)?,
        (None, Some(dir), Some(scene)) => benchgen::load_bench_stack(dir, scene)?,
        _ => {
            return Err(usage(
                "sweep-depth needs --stack-dir or --bench-dir with --scene",
            ))
        }
    };
    let gt = match &a.gt {
        Some(p) => Some(read_pfm(p)?),
        None => stack.disparity.clone(),
    };
    let sign = match a.sign {
        SignArg::None => SignPolicy::None,
        SignArg::Front => SignPolicy::Constant(Sign::Front),
        SignArg::Behind => SignPolicy::Constant(Sign::Behind),
        SignArg::Gt => {
            let gt = gt.as_ref().ok_or_else(|| {
                usage("--sign gt needs --gt or a stack with ground-truth disparity")
            })?;
            let f = stack.focus_disparity as f32;
            SignPolicy::PerPixel(
                gt.data
                    .iter()
                    .map(|&d| if d >= f { Sign::Front } else { Sign::Behind })
                    .collect(),
            )
        }
    };
    let options = SweepOptions {
        measure: a.measure(),
        sign,
        s1_m: a.s1_m,
        ignore_edges: a.ignore_edges,
    };
    let est = sweep_depth(&stack, &options)?;
    let (w, h) = (est.width, est.height);

    let depth: Vec<f32> = est
        .depth_m
        .iter()
        .map(|&d| if d.is_finite() && d > 0.0 { d } else { 0.0 })
        .collect();
    ensure_parent(&a.out)?;
    write_pfm(&FloatMap::new(w, h, depth)?, &a.out)?;
    if let Some(p) = &a.delta_out {
        let delta: Vec<f32> = est
            .delta_hat
            .iter()
            .map(|&d| if d.is_finite() { d } else { -1.0 })
            .collect();
        ensure_parent(p)?;
        write_pfm(&FloatMap::new(w, h, delta)?, p)?;
    }

    let errors = match &gt {
        Some(g) if (g.width, g.height) == (w, h) => {
            let k_max = stack.ks().last().copied().unwrap_or(0.0);
            offset_errors(&est, g, stack.focus_disparity, stack.defocus_scale, k_max)
        }
        Some(_) => {
            return Err(CliError::Lib(Error::DimensionMismatch(
                "ground truth size differs from stack".into(),
            )))
        }
        None => Vec::new(),
    };
    let report = SweepReport {
        schema: "lenssweep/sweep-report/v1".to_string(),
        width: w,
        height: h,
        valid_fraction: est.valid_fraction(),
        n_valid: est.delta_hat.iter().filter(|d| d.is_finite()).count(),
        m_frames: est.m_frames,
        sum_k_sq: est.sum_k_sq,
        sign: a.sign,
        median_rel_error: percentile(&errors, 0.5),
        p95_rel_error: percentile(&errors, 0.95),
        n_compared: errors.len(),
        provenance: est.provenance.clone(),
    };
    if let Some(p) = &a.report {
        ensure_parent(p)?;
        write_json(&report, p)?;
    }
    to_value(&report)
}

fn calibrate(a: &CalibrateArgs) -> CliResult<Value> {
    let out = harmonize_dataset(a.dataset, &a.root, &a.defaults())?;
    ensure_parent(&a.out)?;
    write_jsonl(&out.records()?, &a.out)?;
    to_value(&out.trailer)
}

fn eval_bokeh(a: &EvalBokehArgs) -> CliResult<Value> {
    let mut pred = read_image8(&a.pred)?.to_rgb();
    let mut gt = read_image8(&a.gt)?.to_rgb();
    if let Some(c) = &a.crop {
        pred = pred.crop(c[0], c[1], c[2], c[3])?;
        gt = gt.crop(c[0], c[1], c[2], c[3])?;
    }
    let report = bokeh_quality(&pred, &gt, a.data_range)?;
    if let Some(p) = &a.report {
        ensure_parent(p)?;
        write_json(&report, p)?;
    }
    to_value(&report)
}

fn as_depth(map: FloatMap, kind: ValueKind) -> FloatMap {
    match kind {
        ValueKind::Depth => map,
        ValueKind::Disparity => FloatMap {
            data: map
                .data
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
                .collect(),
            ..map
        },
    }
}

fn eval_depth(a: &EvalDepthArgs) -> CliResult<Value> {
    let pred = as_depth(read_pfm(&a.pred)?, a.pred_kind);
    let gt = as_depth(read_pfm(&a.gt)?, a.gt_kind);
    let mask = match &a.mask {
        Some(p) => Some(
            read_image8(p)?
                .luminance()
                .iter()
                .map(|&v| v > 0.0)
                .collect::<Vec<bool>>(),
        ),
        None => None,
    };
    let report = depth_metrics(&pred, &gt, mask.as_deref())?;
    if let Some(p) = &a.report {
        ensure_parent(p)?;
        write_json(&report, p)?;
    }
    to_value(&report)
}
