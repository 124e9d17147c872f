//! Two-layer scenes: a background photograph on a planar disparity field and a
//! foreground RGBA matte on a nearer planar disparity band.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::FloatMap;
pub use crate::raster::{Colorspace, DisparityMap, RasterImage};

/// Smallest allowed value of `1 − a·x − b·y` on the unit square.
pub const MIN_PLANE_DENOMINATOR: f64 = 0.05;

/// Default disparity range of background planes.
pub const DEFAULT_BACKGROUND_RANGE: (f64, f64) = (0.2, 0.6);
/// Default disparity band of foreground planes.
pub const DEFAULT_FOREGROUND_BAND: (f64, f64) = (0.65, 0.95);
/// Minimum gap between the nearest background and farthest foreground disparity.
pub const FOREGROUND_MARGIN: f64 = 0.05;

const PLANE_RETRIES: usize = 256;

/// `d(x, y) = c / (1 − a·x − b·y)` over normalized pixel-center coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarDisparity {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PlanarDisparity {
    pub fn constant(c: f64) -> Self {
        PlanarDisparity { a: 0.0, b: 0.0, c }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, _) = self.denominator_range();
        if !(lo >= MIN_PLANE_DENOMINATOR) {
            return Err(Error::invalid(
                "plane",
                format!("denominator {lo:.4} below {MIN_PLANE_DENOMINATOR} on the unit square"),
            ));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid(
                "plane",
                format!("c must be positive, got {}", self.c),
            ));
        }
        Ok(())
    }

    /// Min and max of `1 − a·x − b·y` over `[0, 1]²` (attained at corners).
    fn denominator_range(&self) -> (f64, f64) {
        let corners = [1.0, 1.0 - self.a, 1.0 - self.b, 1.0 - self.a - self.b];
        let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Exact min and max of the disparity over the unit square.
    pub fn range(&self) -> (f64, f64) {
        let (lo, hi) = self.denominator_range();
        (self.c / hi, self.c / lo)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.c / (1.0 - self.a * x - self.b * y)
    }

    /// Value at pixel `(col, row)` of a `width × height` grid.
    pub fn at_pixel(&self, col: usize, row: usize, width: usize, height: usize) -> f64 {
        self.eval(
            (col as f64 + 0.5) / width as f64,
            (row as f64 + 0.5) / height as f64,
        )
    }

    pub fn rasterize(&self, width: usize, height: usize) -> DisparityMap {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(self.at_pixel(col, row, width, height) as f32);
            }
        }
        FloatMap {
            width,
            height,
            data,
        }
    }
}

/// Samples a plane with `|a|, |b| ≤ max_tilt` whose values over the unit square
/// lie inside `[lo, hi]`.
pub fn sample_plane<R: Rng + ?Sized>(
    rng: &mut R,
    lo: f64,
    hi: f64,
    max_tilt: f64,
) -> Result<PlanarDisparity> {
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::invalid(
            "disparity range",
            format!("need 0 < lo < hi, got [{lo}, {hi}]"),
        ));
    }
    let max_tilt = max_tilt.clamp(0.0, (1.0 - MIN_PLANE_DENOMINATOR) / 2.0);
    for _ in 0..PLANE_RETRIES {
        let (a, b) = if max_tilt > 0.0 {
            (
                rng.random_range(-max_tilt..=max_tilt),
                rng.random_range(-max_tilt..=max_tilt),
            )
        } else {
            (0.0, 0.0)
        };
        let probe = PlanarDisparity { a, b, c: 1.0 };
        let (dmin, dmax) = probe.denominator_range();
        if dmin < MIN_PLANE_DENOMINATOR {
            continue;
        }
        // d ranges over [c/dmax, c/dmin]; need c ∈ [lo·dmax, hi·dmin]
        let (c_lo, c_hi) = (lo * dmax, hi * dmin);
        if c_lo > c_hi {
            continue;
        }
        let c = if c_lo == c_hi {
            c_lo
        } else {
            rng.random_range(c_lo..=c_hi)
        };
        let plane = PlanarDisparity { a, b, c };
        let (vmin, vmax) = plane.range();
        if vmin >= lo && vmax <= hi {
            return Ok(plane);
        }
    }
    Err(Error::Sampling {
        attempts: PLANE_RETRIES,
        reason: format!("no plane with tilt ≤ {max_tilt} fits in [{lo}, {hi}]"),
    })
}

/// Background plane within `[lo, hi]` with the default tilt bound.
pub fn sample_background_plane<R: Rng + ?Sized>(
    rng: &mut R,
    range: (f64, f64),
) -> Result<PlanarDisparity> {
    sample_plane(rng, range.0, range.1, 0.4)
}

/// Integer pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Rect {
            x,
            y,
            width,
            height,
        }
    }

    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.width > 0
            && self.height > 0
            && self.x + self.width <= width
            && self.y + self.height <= height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundLayer {
    /// Straight-alpha RGBA in linear light, sized like `placement`.
    pub image: RasterImage,
    pub plane: PlanarDisparity,
    /// Position of `image` on the canvas.
    pub placement: Rect,
}

/// Canvas-sized background plus an optional foreground.
///
/// Disparity planes are evaluated in canvas-normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredScene {
    background: RasterImage,
    background_plane: PlanarDisparity,
    foreground: Option<ForegroundLayer>,
    crop: Rect,
}

impl LayeredScene {
    pub fn new(
        background: RasterImage,
        background_plane: PlanarDisparity,
        foreground: Option<ForegroundLayer>,
        crop: Rect,
    ) -> Result<Self> {
        if background.channels() != 3 || background.colorspace() != Colorspace::Linear {
            return Err(Error::invalid("background", "must be 3-channel linear RGB"));
        }
        background_plane.validate()?;
        let (w, h) = (background.width(), background.height());
        if !crop.inside(w, h) {
            return Err(Error::invalid(
                "crop",
                format!("{crop:?} not inside {w}x{h} canvas"),
            ));
        }
        if let Some(fg) = &foreground {
            if fg.image.channels() != 4 || fg.image.colorspace() != Colorspace::Linear {
                return Err(Error::invalid(
                    "foreground",
                    "must be 4-channel linear RGBA",
                ));
            }
            fg.plane.validate()?;
            let p = fg.placement;
            if !p.inside(w, h) {
                return Err(Error::invalid(
                    "placement",
                    format!("{p:?} not inside {w}x{h} canvas"),
                ));
            }
            if fg.image.width() != p.width || fg.image.height() != p.height {
                return Err(Error::DimensionMismatch(
                    "foreground image does not match placement".into(),
                ));
            }
        }
        let scene = LayeredScene {
            background,
            background_plane,
            foreground,
            crop,
        };
        if let Some((fg_min, bg_max)) = scene.support_disparity_extremes() {
            if !(fg_min > bg_max) {
                return Err(Error::Geometry(format!(
                    "foreground is not nearer than the background: min fg disparity {fg_min:.4} ≤ max bg disparity {bg_max:.4}"
                )));
            }
        }
        Ok(scene)
    }

    pub fn background(&self) -> &RasterImage {
        &self.background
    }

    pub fn background_plane(&self) -> PlanarDisparity {
        self.background_plane
    }

    pub fn foreground(&self) -> Option<&ForegroundLayer> {
        self.foreground.as_ref()
    }

    pub fn crop(&self) -> Rect {
        self.crop
    }

    pub fn canvas_size(&self) -> (usize, usize) {
        (self.background.width(), self.background.height())
    }

    /// Minimum foreground and maximum background disparity over the alpha
    /// support, by brute-force scan. `None` without a foreground or support.
    pub fn support_disparity_extremes(&self) -> Option<(f64, f64)> {
        let fg = self.foreground.as_ref()?;
        let (w, h) = self.canvas_size();
        let p = fg.placement;
        let mut fg_min = f64::INFINITY;
        let mut bg_max = f64::NEG_INFINITY;
        for y in 0..p.height {
            for x in 0..p.width {
                if fg.image.pixel(x, y)[3] > 0.0 {
                    let (cx, cy) = (p.x + x, p.y + y);
                    fg_min = fg_min.min(fg.plane.at_pixel(cx, cy, w, h));
                    bg_max = bg_max.max(self.background_plane.at_pixel(cx, cy, w, h));
                }
            }
        }
        fg_min.is_finite().then_some((fg_min, bg_max))
    }

    /// Min and max foreground disparity over its alpha support.
    pub fn foreground_support_range(&self) -> Option<(f64, f64)> {
        let fg = self.foreground.as_ref()?;
        let (w, h) = self.canvas_size();
        let p = fg.placement;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in 0..p.height {
            for x in 0..p.width {
                if fg.image.pixel(x, y)[3] > 0.0 {
                    let d = fg.plane.at_pixel(p.x + x, p.y + y, w, h);
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
        }
        lo.is_finite().then_some((lo, hi))
    }

    /// Canvas-sized straight-alpha foreground RGBA (zero outside the placement).
    pub(crate) fn foreground_canvas(&self) -> Option<Vec<f32>> {
        let fg = self.foreground.as_ref()?;
        let (w, h) = self.canvas_size();
        let p = fg.placement;
        let mut out = vec![0.0f32; w * h * 4];
        for y in 0..p.height {
            let dst = ((p.y + y) * w + p.x) * 4;
            let src = y * p.width * 4;
            out[dst..dst + p.width * 4].copy_from_slice(&fg.image.data()[src..src + p.width * 4]);
        }
        Some(out)
    }
}

/// All-in-focus composite and fused disparity, before cropping.
pub(crate) struct Composite {
    pub rgb: Vec<f32>,
    pub disparity: Vec<f32>,
}

/// Alpha-over of a straight-alpha pixel onto an opaque one.
#[inline]
pub(crate) fn over(fg: f64, alpha: f64, bg: f64) -> f64 {
    fg * alpha + (1.0 - alpha) * bg
}

pub(crate) fn composite_canvas(scene: &LayeredScene) -> Composite {
    let (w, h) = scene.canvas_size();
    let bg = scene.background.data();
    let mut rgb = bg.to_vec();
    let mut disparity = scene.background_plane.rasterize(w, h).data;
    if let Some(fg) = &scene.foreground {
        let p = fg.placement;
        for y in 0..p.height {
            for x in 0..p.width {
                let px = fg.image.pixel(x, y);
                let a = px[3] as f64;
                let (cx, cy) = (p.x + x, p.y + y);
                let i = cy * w + cx;
                for c in 0..3 {
                    rgb[i * 3 + c] = over(px[c] as f64, a, bg[i * 3 + c] as f64) as f32;
                }
                if a > 0.5 {
                    disparity[i] = fg.plane.at_pixel(cx, cy, w, h) as f32;
                }
            }
        }
    }
    Composite { rgb, disparity }
}

/// All-in-focus image (linear) and fused disparity, cropped to the final window.
///
/// Pixels with foreground alpha above 0.5 take the foreground disparity.
pub fn composite_scene(scene: &LayeredScene) -> Result<(RasterImage, DisparityMap)> {
    let (w, h) = scene.canvas_size();
    let comp = composite_canvas(scene);
    let image = RasterImage::new(w, h, 3, comp.rgb, Colorspace::Linear)?;
    let disparity = FloatMap::new(w, h, comp.disparity)?;
    let c = scene.crop;
    Ok((
        image.crop(c.x, c.y, c.width, c.height)?,
        disparity.crop(c.x, c.y, c.width, c.height)?,
    ))
}

/// On-disk scene description. Image paths are relative to the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub schema: String,
    pub background: String,
    pub background_plane: PlanarDisparity,
    #[serde(default)]
    pub foreground: Option<ForegroundDocument>,
    /// Final crop inside the canvas; the whole canvas when absent.
    #[serde(default)]
    pub crop: Option<Rect>,
    #[serde(default = "default_doc_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForegroundDocument {
    pub image: String,
    pub plane: PlanarDisparity,
    pub placement: Rect,
}

fn default_doc_gamma() -> f64 {
    crate::raster::DEFAULT_GAMMA
}

pub const SCENE_SCHEMA: &str = "lenssweep/scene/v1";

impl SceneDocument {
    /// Reads a scene document and its images. Image paths resolve against the
    /// document's directory; 8-bit images are decoded with the document gamma.
    pub fn load(path: &std::path::Path) -> Result<LayeredScene> {
        let doc: SceneDocument = crate::io_formats::read_json(path)?;
        if doc.schema != SCENE_SCHEMA {
            return Err(Error::decode(
                path,
                format!("unsupported schema `{}`", doc.schema),
            ));
        }
        doc.build(path.parent().unwrap_or(std::path::Path::new(".")))
    }

    pub fn build(&self, base: &std::path::Path) -> Result<LayeredScene> {
        let background =
            crate::benchgen::load_rgba_linear(&base.join(&self.background), self.gamma)?.to_rgb();
        let foreground = match &self.foreground {
            Some(f) => Some(ForegroundLayer {
                image: crate::benchgen::load_rgba_linear(&base.join(&f.image), self.gamma)?,
                plane: f.plane,
                placement: f.placement,
            }),
            None => None,
        };
        let crop = self
            .crop
            .unwrap_or_else(|| Rect::new(0, 0, background.width(), background.height()));
        LayeredScene::new(background, self.background_plane, foreground, crop)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize) -> RasterImage {
        RasterImage::from_fn(w, h, 3, Colorspace::Linear, |x, y, px| {
            px[0] = ((x * 31 + y * 17) % 23) as f32 / 22.0;
            px[1] = ((x * 7 + y * 13) % 11) as f32 / 10.0;
            px[2] = 0.5;
        })
        .unwrap()
    }

    fn rgba(w: usize, h: usize, alpha: impl Fn(usize, usize) -> f32) -> RasterImage {
        RasterImage::from_fn(w, h, 4, Colorspace::Linear, |x, y, px| {
            px[0] = 0.9;
            px[1] = (x % 3) as f32 / 3.0;
            px[2] = (y % 5) as f32 / 5.0;
            px[3] = alpha(x, y);
        })
        .unwrap()
    }

    #[test]
    fn degenerate_plane_is_constant() {
        let p = PlanarDisparity::constant(0.5);
        let m = p.rasterize(9, 7);
        assert!(m.data.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn sampled_planes_stay_in_range_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = sample_background_plane(&mut rng, (0.2, 0.6)).unwrap();
            p.validate().unwrap();
            let m = p.rasterize(64, 64);
            for &v in &m.data {
                assert!((0.2 - 1e-6..=0.6 + 1e-6).contains(&(v as f64)), "{v}");
            }
        }
    }

    #[test]
    fn plane_sampling_is_deterministic() {
        let a = sample_background_plane(&mut ChaCha8Rng::seed_from_u64(42), (0.2, 0.6)).unwrap();
        let b = sample_background_plane(&mut ChaCha8Rng::seed_from_u64(42), (0.2, 0.6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_range_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_plane(&mut rng, 0.6, 0.2, 0.1).is_err());
        assert!(sample_plane(&mut rng, 0.0, 0.2, 0.1).is_err());
    }

    #[test]
    fn transparent_foreground_leaves_background() {
        let bg = textured(20, 16);
        let plane = PlanarDisparity {
            a: 0.1,
            b: -0.2,
            c: 0.3,
        };
        let fg = ForegroundLayer {
            image: rgba(6, 5, |_, _| 0.0),
            plane: PlanarDisparity::constant(0.8),
            placement: Rect::new(4, 4, 6, 5),
        };
        let scene =
            LayeredScene::new(bg.clone(), plane, Some(fg), Rect::new(2, 1, 15, 12)).unwrap();
        let (img, disp) = composite_scene(&scene).unwrap();
        assert_eq!(img, bg.crop(2, 1, 15, 12).unwrap());
        let expect = plane.rasterize(20, 16).crop(2, 1, 15, 12).unwrap();
        assert_eq!(disp, expect);
    }

    #[test]
    fn opaque_foreground_replaces_rgb() {
        let bg = textured(20, 16);
        let fg_img = rgba(6, 5, |_, _| 1.0);
        let fg = ForegroundLayer {
            image: fg_img.clone(),
            plane: PlanarDisparity::constant(0.8),
            placement: Rect::new(4, 4, 6, 5),
        };
        let scene = LayeredScene::new(
            bg,
            PlanarDisparity::constant(0.3),
            Some(fg),
            Rect::new(0, 0, 20, 16),
        )
        .unwrap();
        let (img, disp) = composite_scene(&scene).unwrap();
        for y in 0..5 {
            for x in 0..6 {
                assert_eq!(img.pixel(4 + x, 4 + y), &fg_img.pixel(x, y)[..3]);
                assert_eq!(disp.get(4 + x, 4 + y), 0.8);
            }
        }
    }

    #[test]
    fn checkerboard_alpha_matches_scalar_oracle() {
        let bg = textured(12, 12);
        let fg_img = rgba(8, 8, |x, y| if (x + y) % 2 == 0 { 0.75 } else { 0.25 });
        let fg = ForegroundLayer {
            image: fg_img.clone(),
            plane: PlanarDisparity::constant(0.9),
            placement: Rect::new(2, 3, 8, 8),
        };
        let scene = LayeredScene::new(
            bg.clone(),
            PlanarDisparity::constant(0.4),
            Some(fg),
            Rect::new(0, 0, 12, 12),
        )
        .unwrap();
        let (img, disp) = composite_scene(&scene).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let f = fg_img.pixel(x, y);
                let b = bg.pixel(x + 2, y + 3);
                for c in 0..3 {
                    let oracle = f[c] * f[3] + (1.0 - f[3]) * b[c];
                    assert!((img.pixel(x + 2, y + 3)[c] - oracle).abs() < 1e-6);
                }
                let d = disp.get(x + 2, y + 3);
                assert_eq!(d, if f[3] > 0.5 { 0.9 } else { 0.4 });
            }
        }
    }

    #[test]
    fn rejects_foreground_behind_background() {
        let fg = ForegroundLayer {
            image: rgba(4, 4, |_, _| 1.0),
            plane: PlanarDisparity::constant(0.3),
            placement: Rect::new(0, 0, 4, 4),
        };
        let err = LayeredScene::new(
            textured(8, 8),
            PlanarDisparity::constant(0.5),
            Some(fg),
            Rect::new(0, 0, 8, 8),
        );
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_out_of_canvas_placement() {
        let fg = ForegroundLayer {
            image: rgba(4, 4, |_, _| 1.0),
            plane: PlanarDisparity::constant(0.9),
            placement: Rect::new(6, 0, 4, 4),
        };
        assert!(LayeredScene::new(
            textured(8, 8),
            PlanarDisparity::constant(0.5),
            Some(fg),
            Rect::new(0, 0, 8, 8)
        )
        .is_err());
    }
}
