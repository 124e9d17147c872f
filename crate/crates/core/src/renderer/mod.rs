//! Occlusion-aware layered bokeh rendering.
//!
//! Each layer is blurred by a gather convolution whose pillbox radius follows
//! `k · |d − d_f| / s` per pixel. Radii are binned into steps of
//! `1 / radius_steps_per_px` and each bin uses one kernel whose radius is the
//! midpoint of the exact radii it covers. The foreground is blurred in
//! premultiplied form so color and alpha share the same PSF, then composited
//! over the blurred background.

pub mod convolve;
pub mod kernel;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use convolve::{blur_plane, mirror_index, Padding};
pub use kernel::{disk_rect_area, PillboxKernel, IDENTITY_RADIUS};

use crate::error::{Error, Result};
use crate::optics::LensConfig;
use crate::raster::{
    discontinuity_mask, Colorspace, DisparityMap, FloatMap, Mask, RasterImage, DEFAULT_GAMMA,
};
use crate::scene::{LayeredScene, Rect};
use convolve::PaddedPlanes;

/// Largest blur radius accepted by default, in pixels.
pub const DEFAULT_MAX_RADIUS_PX: f64 = 64.0;
/// Default number of radius bins per pixel of radius.
pub const DEFAULT_RADIUS_STEPS_PER_PX: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Blur radius in pixels per unit of normalized disparity.
    pub k: f64,
    pub focus_disparity: f64,
    #[serde(default = "default_scale")]
    pub defocus_scale: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Quality knob. Radii are binned with this many steps per pixel, so the
    /// per-pixel radius error is at most `1 / (2 · steps)`.
    #[serde(default = "default_steps")]
    pub radius_steps_per_px: u32,
    #[serde(default = "default_max_radius")]
    pub max_radius_px: f64,
}

fn default_scale() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_steps() -> u32 {
    DEFAULT_RADIUS_STEPS_PER_PX
}
fn default_max_radius() -> f64 {
    DEFAULT_MAX_RADIUS_PX
}

impl RenderParams {
    pub fn new(k: f64, focus_disparity: f64) -> Self {
        RenderParams {
            k,
            focus_disparity,
            defocus_scale: default_scale(),
            gamma: default_gamma(),
            radius_steps_per_px: default_steps(),
            max_radius_px: default_max_radius(),
        }
    }

    pub fn with_k(self, k: f64) -> Self {
        RenderParams { k, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::invalid(
                "k",
                format!("must be finite and nonnegative, got {}", self.k),
            ));
        }
        if !(0.0..=1.0).contains(&self.focus_disparity) {
            return Err(Error::invalid(
                "focus_disparity",
                format!("must lie in [0, 1], got {}", self.focus_disparity),
            ));
        }
        if !(self.defocus_scale.is_finite() && self.defocus_scale > 0.0) {
            return Err(Error::invalid("defocus_scale", "must be positive"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid("gamma", "must be positive"));
        }
        // three or more steps keep the radius error strictly below 0.25 px
        if self.radius_steps_per_px < 3 {
            return Err(Error::invalid("radius_steps_per_px", "must be at least 3"));
        }
        if !(self.max_radius_px > 0.0) {
            return Err(Error::invalid("max_radius_px", "must be positive"));
        }
        Ok(())
    }

    /// Blur radius in pixels for disparity `d`.
    #[inline]
    pub fn radius_at(&self, d: f64) -> f64 {
        self.k * (d - self.focus_disparity).abs() / self.defocus_scale
    }
}

/// Normalized pillbox kernel of the given radius.
pub fn pillbox_kernel(radius_px: f64) -> Result<PillboxKernel> {
    if !(radius_px.is_finite() && radius_px >= 0.0) {
        return Err(Error::invalid(
            "radius",
            format!("must be finite and nonnegative, got {radius_px}"),
        ));
    }
    Ok(PillboxKernel::new(radius_px))
}

/// Per-pixel radii over an output window; `NAN` marks pixels to skip.
struct RadiusField {
    radii: Vec<f64>,
    window: Rect,
}

/// Groups radii into bins and builds one kernel per bin.
struct KernelBank {
    steps: f64,
    kernels: BTreeMap<u64, PillboxKernel>,
    max_half: usize,
}

impl KernelBank {
    fn build(field: &RadiusField, steps: u32, max_radius: f64) -> Result<Self> {
        let steps = steps as f64;
        let mut bounds: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        for &r in &field.radii {
            if r.is_nan() {
                continue;
            }
            if r > max_radius {
                return Err(Error::RadiusTooLarge {
                    radius: r,
                    max: max_radius,
                });
            }
            let e = bounds.entry((r * steps).round() as u64).or_insert((r, r));
            e.0 = e.0.min(r);
            e.1 = e.1.max(r);
        }
        let kernels: BTreeMap<u64, PillboxKernel> = bounds
            .into_par_iter()
            .map(|(level, (lo, hi))| (level, PillboxKernel::new(0.5 * (lo + hi))))
            .collect();
        let max_half = kernels.values().map(|k| k.half()).max().unwrap_or(0);
        Ok(KernelBank {
            steps,
            kernels,
            max_half,
        })
    }

    #[inline]
    fn get(&self, r: f64) -> &PillboxKernel {
        &self.kernels[&((r * self.steps).round() as u64)]
    }
}

/// Blurs an interleaved canvas-sized layer over `field.window`.
///
/// Returns window-sized interleaved samples; skipped pixels are zero.
fn blur_layer(
    samples: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    padding: Padding,
    field: &RadiusField,
    params: &RenderParams,
) -> Result<Vec<f64>> {
    let bank = KernelBank::build(field, params.radius_steps_per_px, params.max_radius_px)?;
    let planes = PaddedPlanes::new(samples, width, height, channels, bank.max_half, padding);
    let win = field.window;
    let mut out = vec![0.0f64; win.width * win.height * channels];
    out.par_chunks_mut(win.width * channels)
        .enumerate()
        .for_each(|(wy, row)| {
            for wx in 0..win.width {
                let r = field.radii[wy * win.width + wx];
                if r.is_nan() {
                    continue;
                }
                let kernel = bank.get(r);
                for c in 0..channels {
                    row[wx * channels + c] = planes.gather(c, win.x + wx, win.y + wy, kernel);
                }
            }
        });
    Ok(out)
}

/// Renders the scene's crop window in linear light.
pub fn render_bokeh_linear(scene: &LayeredScene, params: &RenderParams) -> Result<RasterImage> {
    params.validate()?;
    let (w, h) = scene.canvas_size();
    let crop = scene.crop();
    let bg_plane = scene.background_plane();

    let mut bg_radii = Vec::with_capacity(crop.area());
    for y in crop.y..crop.y + crop.height {
        for x in crop.x..crop.x + crop.width {
            bg_radii.push(params.radius_at(bg_plane.at_pixel(x, y, w, h)));
        }
    }
    let bg_field = RadiusField {
        radii: bg_radii,
        window: crop,
    };
    let bg = blur_layer(
        scene.background().data(),
        w,
        h,
        3,
        Padding::Mirror,
        &bg_field,
        params,
    )?;

    let Some(fg) = scene.foreground() else {
        return window_image(bg, crop, 3);
    };
    let fg_canvas = scene.foreground_canvas().expect("foreground present");
    let premult: Vec<f32> = fg_canvas
        .chunks_exact(4)
        .flat_map(|p| [p[0] * p[3], p[1] * p[3], p[2] * p[3], p[3]])
        .collect();
    let place = fg.placement;
    let mut fg_radii = Vec::with_capacity(crop.area());
    for y in crop.y..crop.y + crop.height {
        for x in crop.x..crop.x + crop.width {
            let r = params.radius_at(fg.plane.at_pixel(x, y, w, h));
            let half = PillboxKernel::half_for(r) as isize;
            let (xi, yi) = (x as isize, y as isize);
            let reaches = xi + half >= place.x as isize
                && xi - half < (place.x + place.width) as isize
                && yi + half >= place.y as isize
                && yi - half < (place.y + place.height) as isize;
            fg_radii.push(if reaches { r } else { f64::NAN });
        }
    }
    let fg_field = RadiusField {
        radii: fg_radii,
        window: crop,
    };
    let fgb = blur_layer(&premult, w, h, 4, Padding::Zero, &fg_field, params)?;

    let mut out = Vec::with_capacity(crop.area() * 3);
    for (b, f) in bg.chunks_exact(3).zip(fgb.chunks_exact(4)) {
        let transmit = 1.0 - f[3];
        for c in 0..3 {
            out.push(f[c] + transmit * b[c]);
        }
    }
    window_image(out, crop, 3)
}

fn window_image(samples: Vec<f64>, win: Rect, channels: usize) -> Result<RasterImage> {
    let data = samples.into_iter().map(|v| v.max(0.0) as f32).collect();
    RasterImage::new(win.width, win.height, channels, data, Colorspace::Linear)
}

/// Renders the crop window and encodes it with display gamma `1 / γ`.
pub fn render_bokeh(scene: &LayeredScene, params: &RenderParams) -> Result<RasterImage> {
    Ok(render_bokeh_linear(scene, params)?.to_display(params.gamma))
}

/// Single-layer render of a linear image with a per-pixel disparity map.
///
/// No occlusion handling; used when only an all-in-focus image and its
/// disparity are available. Returns display-gamma output.
pub fn render_from_disparity(
    image: &RasterImage,
    disparity: &DisparityMap,
    params: &RenderParams,
) -> Result<RasterImage> {
    params.validate()?;
    if image.colorspace() != Colorspace::Linear {
        return Err(Error::invalid("image", "expected linear colorspace"));
    }
    let (w, h) = (image.width(), image.height());
    if disparity.width != w || disparity.height != h {
        return Err(Error::DimensionMismatch(format!(
            "image is {w}x{h}, disparity is {}x{}",
            disparity.width, disparity.height
        )));
    }
    let rgb = image.to_rgb();
    let field = RadiusField {
        radii: disparity
            .data
            .iter()
            .map(|&d| params.radius_at(d as f64))
            .collect(),
        window: Rect::new(0, 0, w, h),
    };
    let out = blur_layer(rgb.data(), w, h, 3, Padding::Mirror, &field, params)?;
    Ok(window_image(out, field.window, 3)?.to_display(params.gamma))
}

/// Where a stack came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub lens: Option<LensConfig>,
    pub generator_version: String,
}

impl Provenance {
    pub fn current() -> Self {
        Provenance {
            seed: None,
            lens: None,
            generator_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// All-in-focus reference plus frames at increasing bokeh strength, all in
/// display gamma and sharing dimensions and focus.
#[derive(Debug, Clone, PartialEq)]
pub struct BokehStack {
    pub reference: RasterImage,
    pub frames: Vec<(f64, RasterImage)>,
    pub focus_disparity: f64,
    pub defocus_scale: f64,
    pub gamma: f64,
    /// Ground-truth disparity of the crop window, when known.
    pub disparity: Option<DisparityMap>,
    /// Foreground silhouette boundary, when known.
    pub occlusion_edges: Option<Mask>,
    pub provenance: Provenance,
}

impl BokehStack {
    pub fn ks(&self) -> Vec<f64> {
        self.frames.iter().map(|(k, _)| *k).collect()
    }

    pub fn validate(&self) -> Result<()> {
        check_ks(&self.ks())?;
        for (k, img) in &self.frames {
            if !img.same_shape(&self.reference) {
                return Err(Error::DimensionMismatch(format!(
                    "frame at k={k} differs from the reference"
                )));
            }
        }
        Ok(())
    }
}

fn check_ks(ks: &[f64]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::invalid(
            "ks",
            "at least one bokeh strength is required",
        ));
    }
    for (i, &k) in ks.iter().enumerate() {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::invalid("ks", format!("k={k} must be positive")));
        }
        if i > 0 && !(k > ks[i - 1]) {
            return Err(Error::invalid(
                "ks",
                format!("k={k} does not exceed previous {}", ks[i - 1]),
            ));
        }
    }
    Ok(())
}

/// Renders one frame per strength plus the all-in-focus reference.
pub fn render_stack(
    scene: &LayeredScene,
    ks: &[f64],
    quality: &RenderParams,
) -> Result<BokehStack> {
    check_ks(ks)?;
    let base = RenderParams { k: 0.0, ..*quality };
    base.validate()?;
    let reference = render_bokeh(scene, &base)?;
    let mut frames = Vec::with_capacity(ks.len());
    for &k in ks {
        let img = render_bokeh(scene, &base.with_k(k)).map_err(|e| match e {
            Error::RadiusTooLarge { radius, max } => Error::invalid(
                "ks",
                format!("k={k}: blur radius {radius:.3} px exceeds the maximum {max:.3} px"),
            ),
            other => other,
        })?;
        frames.push((k, img));
    }
    let (_, disparity) = crate::scene::composite_scene(scene)?;
    let occlusion_edges = scene.foreground().map(|_| silhouette_edges(scene));
    Ok(BokehStack {
        reference,
        frames,
        focus_disparity: base.focus_disparity,
        defocus_scale: base.defocus_scale,
        gamma: base.gamma,
        disparity: Some(disparity),
        occlusion_edges,
        provenance: Provenance::current(),
    })
}

/// Boundary of the `alpha > 0.5` foreground region inside the crop.
fn silhouette_edges(scene: &LayeredScene) -> Mask {
    let (w, _) = scene.canvas_size();
    let crop = scene.crop();
    let canvas = scene.foreground_canvas().unwrap_or_default();
    let mut data = Vec::with_capacity(crop.area());
    for y in crop.y..crop.y + crop.height {
        for x in crop.x..crop.x + crop.width {
            let a = canvas.get((y * w + x) * 4 + 3).copied().unwrap_or(0.0);
            data.push(if a > 0.5 { 1.0 } else { 0.0 });
        }
    }
    let map = FloatMap {
        width: crop.width,
        height: crop.height,
        data,
    };
    discontinuity_mask(&map, 0.5)
}
