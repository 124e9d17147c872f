//! Synthetic bokeh benchmark generation.
//!
//! Each scene pairs one foreground matte with one background photograph. The
//! background sits on a random tilted disparity plane, the foreground on a
//! nearer, nearly fronto-parallel band. Scenes are rendered on a canvas with a
//! margin on every side and cropped afterwards so blur never reaches past the
//! image boundary.
//!
//! Output layout under the target directory:
//!
//! ```text
//! aif/<id>.png               all-in-focus reference
//! depth/<id>.pfm             ground-truth normalized disparity
//! images/<id>_k<k>.png       one render per bokeh strength
//! metadata/<id>_k<k>.json    per-render parameters
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Rgba};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_formats::{self, read_image8, write_jpeg, write_pfm, write_png8};
use crate::optics::fstop_to_fnumber;
use crate::raster::{Colorspace, RasterImage, DEFAULT_GAMMA};
use crate::renderer::{
    render_stack, RenderParams, DEFAULT_MAX_RADIUS_PX, DEFAULT_RADIUS_STEPS_PER_PX,
};
use crate::scene::{sample_plane, ForegroundLayer, LayeredScene, Rect};

pub const BENCH_SCHEMA: &str = "lenssweep/bench/v1";
const MIN_FOREGROUND_SIDE: usize = 8;
const DRAW_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkPolicy {
    /// Side of the square output frame.
    pub canvas_px: usize,
    /// Extra border rendered on every side and cropped away.
    pub margin_px: usize,
    pub fg_area_fraction: (f64, f64),
    pub n_k: usize,
    pub k_range: (f64, f64),
    pub fnumber_range: (f64, f64),
    pub background_disparity: (f64, f64),
    pub foreground_band: (f64, f64),
    pub background_tilt: f64,
    pub foreground_tilt: f64,
    /// Largest offset of the foreground from the frame center, as a fraction
    /// of the free space on each side.
    pub center_jitter: f64,
    pub defocus_scale: f64,
    pub gamma: f64,
    pub radius_steps_per_px: u32,
    pub seed: u64,
    pub jpeg: bool,
}

impl Default for BenchmarkPolicy {
    fn default() -> Self {
        BenchmarkPolicy {
            canvas_px: 1024,
            margin_px: 64,
            fg_area_fraction: (0.30, 0.80),
            n_k: 3,
            k_range: (5.0, 30.0),
            fnumber_range: (1.4, 22.0),
            background_disparity: crate::scene::DEFAULT_BACKGROUND_RANGE,
            foreground_band: crate::scene::DEFAULT_FOREGROUND_BAND,
            background_tilt: 0.4,
            foreground_tilt: 0.05,
            center_jitter: 0.25,
            defocus_scale: 1.0,
            gamma: DEFAULT_GAMMA,
            radius_steps_per_px: DEFAULT_RADIUS_STEPS_PER_PX,
            seed: 0,
            jpeg: false,
        }
    }
}

fn ordered(name: &'static str, r: (f64, f64)) -> Result<()> {
    if r.0 > 0.0 && r.0 < r.1 && r.1.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("need 0 < lo < hi, got [{}, {}]", r.0, r.1),
        ))
    }
}

impl BenchmarkPolicy {
    pub fn validate(&self) -> Result<()> {
        ordered("fg_area_fraction", self.fg_area_fraction)?;
        if self.fg_area_fraction.1 > 1.0 {
            return Err(Error::invalid("fg_area_fraction", "upper bound exceeds 1"));
        }
        ordered("k_range", self.k_range)?;
        ordered("fnumber_range", self.fnumber_range)?;
        ordered("background_disparity", self.background_disparity)?;
        ordered("foreground_band", self.foreground_band)?;
        if self.foreground_band.1 > 1.0 {
            return Err(Error::invalid("foreground_band", "upper bound exceeds 1"));
        }
        if self.n_k == 0 {
            return Err(Error::invalid(
                "n_k",
                "need at least one strength per scene",
            ));
        }
        if self.canvas_px < 2 * MIN_FOREGROUND_SIDE {
            return Err(Error::invalid("canvas_px", "canvas too small"));
        }
        if self.background_disparity.1 >= self.foreground_band.0 {
            return Err(Error::invalid(
                "foreground_band",
                "must lie entirely above the background disparity range",
            ));
        }
        Ok(())
    }

    fn full_canvas(&self) -> usize {
        self.canvas_px + 2 * self.margin_px
    }

    fn max_radius(&self) -> f64 {
        let band_span = self.foreground_band.1 - self.background_disparity.0;
        (self.k_range.1 * band_span / self.defocus_scale).max(DEFAULT_MAX_RADIUS_PX)
    }
}

/// Tight bounding box of pixels with nonzero alpha.
pub fn alpha_bbox(rgba: &RasterImage) -> Option<Rect> {
    let (w, h) = (rgba.width(), rgba.height());
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if rgba.pixel(x, y)[3] > 0.0 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    (x0 != usize::MAX).then(|| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
}

/// Size of a `bbox_w × bbox_h` box scaled to cover `fraction` of a
/// `frame × frame` image, preserving aspect.
pub fn scaled_size(bbox_w: usize, bbox_h: usize, frame: usize, fraction: f64) -> (usize, usize) {
    let scale = (fraction * (frame * frame) as f64 / (bbox_w * bbox_h) as f64).sqrt();
    (
        ((bbox_w as f64 * scale).round() as usize).max(1),
        ((bbox_h as f64 * scale).round() as usize).max(1),
    )
}

/// Foreground footprint in final-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    /// Tight alpha box in the source asset.
    pub source_bbox: Rect,
    /// Scaled box inside the `canvas_px × canvas_px` output frame.
    pub frame_rect: Rect,
}

impl Placement {
    pub fn area_fraction(&self, frame: usize) -> f64 {
        self.frame_rect.area() as f64 / (frame * frame) as f64
    }
}

/// Picks a scale and near-center position for the foreground's alpha box.
pub fn place_foreground<R: Rng + ?Sized>(
    rng: &mut R,
    fg: &RasterImage,
    policy: &BenchmarkPolicy,
) -> Result<Placement> {
    if fg.channels() != 4 {
        return Err(Error::invalid("foreground", "needs an alpha channel"));
    }
    let bbox = alpha_bbox(fg).ok_or_else(|| Error::invalid("foreground", "alpha is empty"))?;
    let frame = policy.canvas_px;
    let (lo, hi) = policy.fg_area_fraction;
    // largest fraction whose scaled box still fits the frame
    let fit = {
        let s = (frame as f64 / bbox.width as f64).min(frame as f64 / bbox.height as f64);
        (bbox.width as f64 * s).floor() * (bbox.height as f64 * s).floor() / (frame * frame) as f64
    };
    let top = hi.min(fit);
    if top < lo {
        return Err(Error::Geometry(format!(
            "asset aspect {}x{} cannot cover {lo} of the frame",
            bbox.width, bbox.height
        )));
    }
    for _ in 0..DRAW_RETRIES {
        let fraction = if top > lo {
            rng.random_range(lo..=top)
        } else {
            lo
        };
        let (sw, sh) = scaled_size(bbox.width, bbox.height, frame, fraction);
        let (sw, sh) = (sw.min(frame), sh.min(frame));
        let actual = (sw * sh) as f64 / (frame * frame) as f64;
        if sw < MIN_FOREGROUND_SIDE || sh < MIN_FOREGROUND_SIDE || actual < lo || actual > hi {
            continue;
        }
        let jitter = |slack: usize, rng: &mut R| -> usize {
            let half = slack as f64 / 2.0;
            let amp = half * policy.center_jitter;
            let off = if amp > 0.0 {
                rng.random_range(-amp..=amp)
            } else {
                0.0
            };
            ((half + off).round() as usize).min(slack)
        };
        let x = jitter(frame - sw, rng);
        let y = jitter(frame - sh, rng);
        return Ok(Placement {
            source_bbox: bbox,
            frame_rect: Rect::new(x, y, sw, sh),
        });
    }
    Err(Error::Sampling {
        attempts: DRAW_RETRIES,
        reason: format!(
            "no scale of the {}x{} asset met the area bounds with side ≥ {MIN_FOREGROUND_SIDE}",
            bbox.width, bbox.height
        ),
    })
}

/// Bokeh strengths, focus and equivalent f-numbers for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensDraw {
    pub ks: Vec<f64>,
    pub focus_disparity: f64,
    pub f_numbers: Vec<f64>,
}

/// Equivalent f-number of `k`: the strongest blur maps to the widest aperture.
pub fn equivalent_fnumber(k: f64, policy: &BenchmarkPolicy) -> Result<f64> {
    let (klo, khi) = policy.k_range;
    let t = ((khi.ln() - k.ln()) / (khi.ln() - klo.ln())).clamp(0.0, 1.0);
    fstop_to_fnumber(t, policy.fnumber_range.0, policy.fnumber_range.1)
}

/// Draws `n_k` distinct ascending strengths (log-uniform over the policy range)
/// and a focus disparity uniform over `fg_range`.
pub fn sample_lens_draw<R: Rng + ?Sized>(
    rng: &mut R,
    policy: &BenchmarkPolicy,
    fg_range: (f64, f64),
) -> Result<LensDraw> {
    let (klo, khi) = policy.k_range;
    let min_gap = (khi - klo) / (4.0 * policy.n_k as f64);
    let mut ks = Vec::new();
    for _ in 0..DRAW_RETRIES {
        ks = (0..policy.n_k)
            .map(|_| rng.random_range(klo.ln()..=khi.ln()).exp())
            .collect();
        ks.sort_by(|a, b| a.total_cmp(b));
        if ks.windows(2).all(|w| w[1] - w[0] >= min_gap) {
            break;
        }
        ks.clear();
    }
    if ks.is_empty() {
        let n = policy.n_k;
        ks = (0..n)
            .map(|i| {
                if n == 1 {
                    klo
                } else {
                    klo + (khi - klo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
    }
    let focus_disparity = if fg_range.1 > fg_range.0 {
        rng.random_range(fg_range.0..=fg_range.1)
    } else {
        fg_range.0
    };
    let f_numbers = ks
        .iter()
        .map(|&k| equivalent_fnumber(k, policy))
        .collect::<Result<_>>()?;
    Ok(LensDraw {
        ks,
        focus_disparity,
        f_numbers,
    })
}

/// Loads an 8-bit image as linear RGBA (opaque when the file has no alpha).
pub fn load_rgba_linear(path: &Path, gamma: f64) -> Result<RasterImage> {
    let img = read_image8(path)?;
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let src = img.data();
    RasterImage::from_fn(w, h, 4, Colorspace::Linear, |x, y, px| {
        let p = &src[(y * w + x) * c..(y * w + x + 1) * c];
        for k in 0..3 {
            let v = if c == 1 { p[0] } else { p[k] };
            px[k] = crate::raster::decode_gamma(v, gamma);
        }
        px[3] = if c == 4 { p[3] } else { 1.0 };
    })
}

fn to_buffer(img: &RasterImage, premultiply: bool) -> ImageBuffer<Rgba<f32>, Vec<f32>> {
    let c = img.channels();
    let data: Vec<f32> = img
        .data()
        .chunks_exact(c)
        .flat_map(|p| {
            let rgb = if c >= 3 {
                [p[0], p[1], p[2]]
            } else {
                [p[0]; 3]
            };
            let alpha = if c == 4 || c == 2 { p[c - 1] } else { 1.0 };
            let a = if premultiply { alpha } else { 1.0 };
            [rgb[0] * a, rgb[1] * a, rgb[2] * a, alpha]
        })
        .collect();
    ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data)
        .expect("buffer size matches")
}

/// Resizes linear RGBA through premultiplied alpha so transparent pixels do
/// not bleed color into the edge.
pub fn resize_rgba(img: &RasterImage, width: usize, height: usize) -> Result<RasterImage> {
    let buf = to_buffer(img, true);
    let out = imageops::resize(&buf, width as u32, height as u32, FilterType::Triangle);
    let data: Vec<f32> = out
        .into_raw()
        .chunks_exact(4)
        .flat_map(|p| {
            let a = p[3].clamp(0.0, 1.0);
            if a > 0.0 {
                [
                    (p[0] / a).max(0.0),
                    (p[1] / a).max(0.0),
                    (p[2] / a).max(0.0),
                    a,
                ]
            } else {
                [0.0, 0.0, 0.0, 0.0]
            }
        })
        .collect();
    RasterImage::new(width, height, 4, data, Colorspace::Linear)
}

/// Scales a background to cover `side × side`, then center-crops. Returns
/// linear RGB.
pub fn fit_background(img: &RasterImage, side: usize) -> Result<RasterImage> {
    let scale = (side as f64 / img.width() as f64).max(side as f64 / img.height() as f64);
    let w = ((img.width() as f64 * scale).ceil() as usize).max(side);
    let h = ((img.height() as f64 * scale).ceil() as usize).max(side);
    let buf = to_buffer(img, false);
    let out = imageops::resize(&buf, w as u32, h as u32, FilterType::Triangle);
    let x0 = (w - side) / 2;
    let y0 = (h - side) / 2;
    let raw = out.into_raw();
    RasterImage::from_fn(side, side, 3, Colorspace::Linear, |x, y, px| {
        let i = ((y + y0) * w + x + x0) * 4;
        px.copy_from_slice(&raw[i..i + 3]);
    })
}

/// Per-render metadata written next to each bokeh image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetadata {
    pub schema: String,
    pub scene_id: String,
    pub k: f64,
    pub focus_disparity: f64,
    pub f_number: f64,
    pub seed: u64,
    pub scene_index: u64,
    /// Random generator family; each scene uses stream `scene_index`.
    pub rng: String,
    pub image: String,
    pub aif: String,
    pub depth: String,
    pub foreground_asset: String,
    pub background_asset: String,
    pub background_plane: crate::scene::PlanarDisparity,
    pub foreground_plane: crate::scene::PlanarDisparity,
    pub placement: Placement,
    pub all_ks: Vec<f64>,
    pub renderer: RendererSettings,
    /// Pixels with disparity above the focus are in front of it.
    pub sign_convention: String,
    pub generator_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RendererSettings {
    pub canvas_px: usize,
    pub margin_px: usize,
    pub defocus_scale: f64,
    pub gamma: f64,
    pub radius_steps_per_px: u32,
    pub max_radius_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub aif: PathBuf,
    pub depth: PathBuf,
    pub images: Vec<PathBuf>,
    pub metadata: Vec<FrameMetadata>,
}

pub const BENCH_DIRS: [&str; 4] = ["aif", "images", "depth", "metadata"];

/// Filename token for a bokeh strength.
pub fn k_token(k: f64) -> String {
    format!("k{k:.3}")
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn asset_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Deterministic per-scene random stream.
pub fn scene_rng(seed: u64, scene_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scene_index);
    rng
}

/// Builds the layered scene and lens draw for one asset pair.
pub fn build_scene(
    fg: &RasterImage,
    bg: &RasterImage,
    policy: &BenchmarkPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<(LayeredScene, LensDraw, Placement)> {
    let full = policy.full_canvas();
    let background = fit_background(bg, full)?;
    let placement = place_foreground(rng, fg, policy)?;
    let sb = placement.source_bbox;
    let cropped = fg.crop(sb.x, sb.y, sb.width, sb.height)?;
    let fr = placement.frame_rect;
    let scaled = resize_rgba(&cropped, fr.width, fr.height)?;
    let bg_plane = sample_plane(
        rng,
        policy.background_disparity.0,
        policy.background_disparity.1,
        policy.background_tilt,
    )?;
    let fg_plane = sample_plane(
        rng,
        policy.foreground_band.0,
        policy.foreground_band.1,
        policy.foreground_tilt,
    )?;
    let m = policy.margin_px;
    let layer = ForegroundLayer {
        image: scaled,
        plane: fg_plane,
        placement: Rect::new(fr.x + m, fr.y + m, fr.width, fr.height),
    };
    let scene = LayeredScene::new(
        background,
        bg_plane,
        Some(layer),
        Rect::new(m, m, policy.canvas_px, policy.canvas_px),
    )?;
    let fg_range = scene
        .foreground_support_range()
        .ok_or_else(|| Error::invalid("foreground", "alpha vanished after resizing"))?;
    let draw = sample_lens_draw(rng, policy, fg_range)?;
    Ok((scene, draw, placement))
}

fn generate_scene(
    index: u64,
    fg_path: &Path,
    bg_path: &Path,
    out: &Path,
    policy: &BenchmarkPolicy,
) -> Result<SceneRecord> {
    let id = format!("scene_{index:04}");
    let fg = load_rgba_linear(fg_path, policy.gamma)?;
    let bg = load_rgba_linear(bg_path, policy.gamma)?;
    let mut rng = scene_rng(policy.seed, index);
    let (scene, draw, placement) = build_scene(&fg, &bg, policy, &mut rng)?;
    let quality = RenderParams {
        k: 0.0,
        focus_disparity: draw.focus_disparity,
        defocus_scale: policy.defocus_scale,
        gamma: policy.gamma,
        radius_steps_per_px: policy.radius_steps_per_px,
        max_radius_px: policy.max_radius(),
    };
    let stack = render_stack(&scene, &draw.ks, &quality)?;

    let aif_rel = format!("aif/{id}.png");
    let depth_rel = format!("depth/{id}.pfm");
    write_png8(&stack.reference, &out.join(&aif_rel))?;
    write_pfm(
        stack.disparity.as_ref().expect("stack carries disparity"),
        &out.join(&depth_rel),
    )?;
    let ext = if policy.jpeg { "jpg" } else { "png" };
    let settings = RendererSettings {
        canvas_px: policy.canvas_px,
        margin_px: policy.margin_px,
        defocus_scale: policy.defocus_scale,
        gamma: policy.gamma,
        radius_steps_per_px: policy.radius_steps_per_px,
        max_radius_px: quality.max_radius_px,
    };
    let fg_layer = scene
        .foreground()
        .expect("benchmark scenes have a foreground");
    let mut images = Vec::new();
    let mut metadata = Vec::new();
    for ((k, frame), f_number) in stack.frames.iter().zip(&draw.f_numbers) {
        let token = k_token(*k);
        let image_rel = format!("images/{id}_{token}.{ext}");
        if policy.jpeg {
            write_jpeg(frame, &out.join(&image_rel), 95)?;
        } else {
            write_png8(frame, &out.join(&image_rel))?;
        }
        let meta = FrameMetadata {
            schema: BENCH_SCHEMA.to_string(),
            scene_id: id.clone(),
            k: *k,
            focus_disparity: draw.focus_disparity,
            f_number: *f_number,
            seed: policy.seed,
            scene_index: index,
            rng: "chacha8".to_string(),
            image: image_rel.clone(),
            aif: aif_rel.clone(),
            depth: depth_rel.clone(),
            foreground_asset: asset_name(fg_path),
            background_asset: asset_name(bg_path),
            background_plane: scene.background_plane(),
            foreground_plane: fg_layer.plane,
            placement,
            all_ks: draw.ks.clone(),
            renderer: settings.clone(),
            sign_convention: "front where disparity exceeds focus_disparity".to_string(),
            generator_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        io_formats::write_json(&meta, &out.join(format!("metadata/{id}_{token}.json")))?;
        images.push(out.join(&image_rel));
        metadata.push(meta);
    }
    Ok(SceneRecord {
        id,
        aif: out.join(aif_rel),
        depth: out.join(depth_rel),
        images,
        metadata,
    })
}

/// Renders one scene per foreground × background pair (cycling through the
/// pairs when `scenes` asks for more). Scenes that fail are logged and
/// skipped.
pub fn generate_benchmark(
    fg_dir: &Path,
    bg_dir: &Path,
    out: &Path,
    policy: &BenchmarkPolicy,
    scenes: Option<usize>,
) -> Result<Vec<SceneRecord>> {
    policy.validate()?;
    let fgs = list_images(fg_dir)?;
    let bgs = list_images(bg_dir)?;
    if fgs.is_empty() || bgs.is_empty() {
        return Err(Error::invalid(
            "assets",
            "need at least one foreground and one background image",
        ));
    }
    let pairs: Vec<(&PathBuf, &PathBuf)> = fgs
        .iter()
        .flat_map(|f| bgs.iter().map(move |b| (f, b)))
        .collect();
    let count = scenes.unwrap_or(pairs.len());
    for d in BENCH_DIRS {
        io_formats::ensure_dir(&out.join(d))?;
    }
    let results: Vec<Result<SceneRecord>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let (f, b) = pairs[i % pairs.len()];
            generate_scene(i as u64, f, b, out, policy)
        })
        .collect();
    let mut records = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => log::warn!("scene {i} skipped: {e}"),
        }
    }
    if records.is_empty() {
        return Err(Error::invalid("assets", "no scene could be generated"));
    }
    log::info!("generated {} of {count} scenes", records.len());
    Ok(records)
}

/// Smallest disparity step treated as an occlusion boundary when a bench
/// scene is reloaded. Foreground and background ranges are separated by more.
pub const OCCLUSION_JUMP: f32 = 0.025;

/// Scene ids present in a benchmark directory, sorted.
pub fn bench_scene_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = std::collections::BTreeSet::new();
    for meta in read_all_metadata(dir)? {
        ids.insert(meta.scene_id);
    }
    Ok(ids.into_iter().collect())
}

fn read_all_metadata(dir: &Path) -> Result<Vec<FrameMetadata>> {
    let meta_dir = dir.join("metadata");
    let mut entries: Vec<PathBuf> = fs::read_dir(&meta_dir)
        .map_err(|e| Error::io(&meta_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    entries.sort();
    entries.iter().map(|p| io_formats::read_json(p)).collect()
}

/// Reassembles one generated scene as a bokeh stack with its ground-truth
/// disparity. Occlusion edges are recovered from disparity jumps.
pub fn load_bench_stack(dir: &Path, scene_id: &str) -> Result<crate::renderer::BokehStack> {
    let mut metas: Vec<FrameMetadata> = read_all_metadata(dir)?
        .into_iter()
        .filter(|m| m.scene_id == scene_id)
        .collect();
    if metas.is_empty() {
        return Err(Error::MissingField(format!(
            "scene `{scene_id}` in {}",
            dir.display()
        )));
    }
    metas.sort_by(|a, b| a.k.total_cmp(&b.k));
    let first = &metas[0];
    let reference = read_image8(&dir.join(&first.aif))?.to_rgb();
    let disparity = io_formats::read_pfm(&dir.join(&first.depth))?;
    let mut frames = Vec::with_capacity(metas.len());
    for m in &metas {
        frames.push((m.k, read_image8(&dir.join(&m.image))?.to_rgb()));
    }
    let occlusion_edges = crate::raster::discontinuity_mask(&disparity, OCCLUSION_JUMP);
    let stack = crate::renderer::BokehStack {
        reference,
        frames,
        focus_disparity: first.focus_disparity,
        defocus_scale: first.renderer.defocus_scale,
        gamma: first.renderer.gamma,
        disparity: Some(disparity),
        occlusion_edges: Some(occlusion_edges),
        provenance: crate::renderer::Provenance {
            seed: Some(first.seed),
            lens: None,
            generator_version: first.generator_version.clone(),
        },
    };
    stack.validate()?;
    Ok(stack)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub scenes: usize,
    pub images: usize,
}

/// Re-scans a benchmark directory and checks its layout and metadata.
pub fn validate_bench(dir: &Path) -> Result<BenchSummary> {
    for d in BENCH_DIRS {
        if !dir.join(d).is_dir() {
            return Err(Error::MissingField(format!("directory {d}/")));
        }
    }
    let meta_dir = dir.join("metadata");
    let mut entries: Vec<PathBuf> = fs::read_dir(&meta_dir)
        .map_err(|e| Error::io(&meta_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    entries.sort();
    let mut scenes = std::collections::BTreeSet::new();
    for path in &entries {
        let meta: FrameMetadata = io_formats::read_json(path)?;
        if meta.schema != BENCH_SCHEMA {
            return Err(Error::decode(path, format!("schema `{}`", meta.schema)));
        }
        let token = k_token(meta.k);
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        if stem != format!("{}_{token}", meta.scene_id)
            || !meta.image.contains(&format!("_{token}."))
        {
            return Err(Error::decode(
                path,
                format!("k={} does not match the file name", meta.k),
            ));
        }
        for rel in [&meta.image, &meta.aif, &meta.depth] {
            if !dir.join(rel).is_file() {
                return Err(Error::decode(
                    path,
                    format!("referenced file {rel} is missing"),
                ));
            }
        }
        if scenes.insert(meta.scene_id.clone()) {
            let aif = read_image8(&dir.join(&meta.aif))?;
            let depth = io_formats::read_pfm(&dir.join(&meta.depth))?;
            if depth.width != aif.width() || depth.height != aif.height() {
                return Err(Error::DimensionMismatch(format!(
                    "{}: depth and aif sizes differ",
                    meta.scene_id
                )));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::MissingField("metadata/*.json".into()));
    }
    Ok(BenchSummary {
        scenes: scenes.len(),
        images: entries.len(),
    })
}
