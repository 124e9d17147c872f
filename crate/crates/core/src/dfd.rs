//! Depth from a bokeh-strength sweep.
//!
//! For a fixed pose and focus, the blur radius at a pixel grows linearly with
//! the bokeh strength: `r_i = K_i · Δ`. Radii are measured per frame against
//! the all-in-focus reference, `Δ` is the least-squares slope through the
//! origin, and depth follows from `1/S₂ = 1/S₁ ± Δ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{distance_to_mask, Colorspace, Mask, RasterImage};
use crate::renderer::{blur_plane, BokehStack, PillboxKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    /// Odd side length of the square matching window.
    pub window_px: usize,
    pub r_max_px: f64,
    pub grid_step_px: f64,
    /// Minimum variance of the reference window for a pixel to be measured.
    pub texture_threshold: f64,
    /// Refine the grid argmin with a parabola through its neighbours.
    pub subgrid: bool,
    /// Extra exclusion distance (px) around occlusion edges, added to the
    /// measured radius. Defaults to half the window plus one.
    pub edge_exclusion_px: Option<f64>,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            window_px: 21,
            r_max_px: 32.0,
            grid_step_px: 0.25,
            texture_threshold: 1e-4,
            subgrid: true,
            edge_exclusion_px: None,
        }
    }
}

impl MeasureOptions {
    fn validate(&self) -> Result<()> {
        if self.window_px == 0 || self.window_px % 2 == 0 {
            return Err(Error::invalid(
                "window_px",
                format!("must be odd, got {}", self.window_px),
            ));
        }
        if !(self.grid_step_px > 0.0 && self.r_max_px >= 0.0) {
            return Err(Error::invalid(
                "radius grid",
                "step must be positive and r_max nonnegative",
            ));
        }
        Ok(())
    }

    fn grid(&self) -> Vec<f64> {
        let n = (self.r_max_px / self.grid_step_px + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.grid_step_px).collect()
    }

    pub fn edge_exclusion(&self) -> f64 {
        self.edge_exclusion_px
            .unwrap_or((self.window_px / 2) as f64 + 1.0)
    }
}

/// Per-pixel blur radius fitted for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusMeasurement {
    pub width: usize,
    pub height: usize,
    pub r_hat: Vec<f32>,
    /// Mean squared residual at the optimum.
    pub fit_residual: Vec<f32>,
    /// Proxy for the variance of `r_hat`.
    pub variance: Vec<f32>,
    pub valid: Vec<bool>,
}

impl RadiusMeasurement {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Sums of `values` over every `window × window` neighbourhood fully inside the
/// image; entries whose window crosses the border are left at zero.
fn window_sums(values: &[f64], width: usize, height: usize, window: usize) -> Vec<f64> {
    let half = window / 2;
    let iw = width + 1;
    let mut integral = vec![0.0f64; iw * (height + 1)];
    for y in 0..height {
        let mut acc = 0.0;
        for x in 0..width {
            acc += values[y * width + x];
            integral[(y + 1) * iw + x + 1] = integral[y * iw + x + 1] + acc;
        }
    }
    let mut out = vec![0.0; width * height];
    if window > width || window > height {
        return out;
    }
    for y in half..height - half {
        for x in half..width - half {
            let (x0, x1, y0, y1) = (x - half, x + half + 1, y - half, y + half + 1);
            out[y * width + x] =
                integral[y1 * iw + x1] - integral[y0 * iw + x1] - integral[y1 * iw + x0]
                    + integral[y0 * iw + x0];
        }
    }
    out
}

fn linear_luminance(img: &RasterImage, gamma: f64) -> Vec<f32> {
    match img.colorspace() {
        Colorspace::Linear => img.luminance(),
        Colorspace::DisplayGamma => img.to_linear(gamma).luminance(),
    }
}

/// Fits a pillbox radius per pixel by matching the blurred reference to the
/// frame over a square window.
///
/// Ties go to the smaller radius. `edges`, when given, marks occlusion
/// boundaries; pixels closer than `edge_exclusion + r̂` are invalid.
pub fn measure_blur_radius(
    reference: &RasterImage,
    frame: &RasterImage,
    edges: Option<&Mask>,
    options: &MeasureOptions,
) -> Result<RadiusMeasurement> {
    options.validate()?;
    let (w, h) = (reference.width(), reference.height());
    if frame.width() != w || frame.height() != h {
        return Err(Error::DimensionMismatch(format!(
            "reference is {w}x{h}, frame is {}x{}",
            frame.width(),
            frame.height()
        )));
    }
    if options.window_px >= w || options.window_px >= h {
        return Err(Error::invalid(
            "window_px",
            format!(
                "window {} must be smaller than the {w}x{h} image",
                options.window_px
            ),
        ));
    }
    if let Some(m) = edges {
        if m.width != w || m.height != h {
            return Err(Error::DimensionMismatch(
                "edge mask does not match the image".into(),
            ));
        }
    }
    // Gamma-tagged inputs are decoded with the default exponent.
    let gamma = crate::raster::DEFAULT_GAMMA;
    let reference_l = linear_luminance(reference, gamma);
    let frame_l = linear_luminance(frame, gamma);
    let n = (options.window_px * options.window_px) as f64;
    let half_win = options.window_px / 2;

    let ref64: Vec<f64> = reference_l.iter().map(|&v| v as f64).collect();
    let sums = window_sums(&ref64, w, h, options.window_px);
    let sq: Vec<f64> = ref64.iter().map(|v| v * v).collect();
    let sq_sums = window_sums(&sq, w, h, options.window_px);
    let textured: Vec<bool> = sums
        .iter()
        .zip(&sq_sums)
        .map(|(&s, &ss)| {
            let mean = s / n;
            ss / n - mean * mean > options.texture_threshold
        })
        .collect();

    let grid = options.grid();
    let npx = w * h;
    let mut best_idx = vec![0usize; npx];
    let mut best = vec![f64::INFINITY; npx];
    let mut below = vec![f64::NAN; npx];
    let mut above = vec![f64::NAN; npx];
    let mut previous = vec![f64::NAN; npx];
    for (j, &r) in grid.iter().enumerate() {
        let blurred = blur_plane(&reference_l, w, h, &PillboxKernel::new(r));
        let diff: Vec<f64> = blurred
            .iter()
            .zip(&frame_l)
            .map(|(b, &f)| (b - f as f64).powi(2))
            .collect();
        let ssd = window_sums(&diff, w, h, options.window_px);
        best_idx
            .par_iter_mut()
            .zip(best.par_iter_mut())
            .zip(below.par_iter_mut())
            .zip(above.par_iter_mut())
            .zip(previous.par_iter_mut())
            .enumerate()
            .for_each(|(i, ((((bi, b), lo), hi), prev))| {
                let s = ssd[i];
                if s < *b {
                    *b = s;
                    *bi = j;
                    *lo = *prev;
                    *hi = f64::NAN;
                } else if j == *bi + 1 {
                    *hi = s;
                }
                *prev = s;
            });
    }

    let edge_dist = edges.map(distance_to_mask);
    let q = options.grid_step_px;
    let exclusion = options.edge_exclusion();
    let mut out = RadiusMeasurement {
        width: w,
        height: h,
        r_hat: vec![f32::NAN; npx],
        fit_residual: vec![f32::NAN; npx],
        variance: vec![f32::NAN; npx],
        valid: vec![false; npx],
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !textured[i] {
                continue;
            }
            let mut r = grid[best_idx[i]];
            let (s0, sm, sp) = (best[i].max(0.0), below[i], above[i]);
            let curvature = (sm - 2.0 * s0 + sp) / (q * q);
            if options.subgrid && sm.is_finite() && sp.is_finite() && curvature > 0.0 {
                let offset = 0.5 * (sm - sp) / (sm - 2.0 * s0 + sp) * q;
                r += offset.clamp(-0.5 * q, 0.5 * q);
            }
            let reach = half_win + PillboxKernel::half_for(r) + 1;
            let border = x.min(y).min(w - 1 - x).min(h - 1 - y);
            if border < reach {
                continue;
            }
            if let Some(d) = &edge_dist {
                if (d.data[i] as f64) <= exclusion + r {
                    continue;
                }
            }
            let sigma2 = s0 / n;
            let var = if curvature > 0.0 {
                2.0 * sigma2 / curvature
            } else {
                q * q / 12.0
            };
            out.r_hat[i] = r as f32;
            out.fit_residual[i] = sigma2 as f32;
            out.variance[i] = var as f32;
            out.valid[i] = true;
        }
    }
    Ok(out)
}

fn check_ks(ks: &[f64]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::invalid(
            "ks",
            "at least one bokeh strength is required",
        ));
    }
    if let Some(k) = ks.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
        return Err(Error::invalid("ks", format!("k={k} must be positive")));
    }
    Ok(())
}

/// Least-squares slope through the origin, `Σ K·r / Σ K²`, over frames whose
/// radius is finite. `None` when no frame is usable.
pub fn ols_slope(ks: &[f64], r_hats: &[f64]) -> Result<Option<f64>> {
    check_ks(ks)?;
    if ks.len() != r_hats.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} strengths but {} radii",
            ks.len(),
            r_hats.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&k, &r) in ks.iter().zip(r_hats) {
        if r.is_finite() {
            num += k * r;
            den += k * k;
        }
    }
    Ok((den > 0.0).then(|| num / den))
}

/// `Σ K²·v / (Σ K²)²` over frames whose variance is finite.
pub fn variance_proxy(ks: &[f64], variances: &[f64]) -> Result<Option<f64>> {
    check_ks(ks)?;
    if ks.len() != variances.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} strengths but {} variances",
            ks.len(),
            variances.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&k, &v) in ks.iter().zip(variances) {
        if v.is_finite() {
            num += k * k * v;
            den += k * k;
        }
    }
    Ok((den > 0.0).then(|| num / (den * den)))
}

/// Side of the focal plane a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    /// Nearer than the focus distance.
    Front,
    /// Farther than the focus distance.
    Behind,
    Unknown,
}

/// `S₂ = 1 / (1/S₁ ± Δ)`, plus in front of focus and minus behind.
pub fn invert_depth(delta: f64, s1_m: f64, sign: Sign) -> Result<f64> {
    if !(s1_m.is_finite() && s1_m > 0.0) {
        return Err(Error::invalid(
            "s1_m",
            format!("must be positive, got {s1_m}"),
        ));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::invalid(
            "delta",
            format!("must be finite and nonnegative, got {delta}"),
        ));
    }
    let inv = 1.0 / s1_m;
    match sign {
        Sign::Front => Ok(1.0 / (inv + delta)),
        Sign::Behind if delta < inv => Ok(1.0 / (inv - delta)),
        Sign::Behind => Err(Error::Geometry(format!(
            "offset {delta} ≥ 1/S₁ = {inv} puts the point at or beyond infinity behind focus"
        ))),
        Sign::Unknown => Err(Error::invalid("sign", "depth needs a known sign")),
    }
}

/// How to resolve the front/behind ambiguity.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SignPolicy {
    /// Emit offsets only.
    #[default]
    None,
    Constant(Sign),
    PerPixel(Vec<Sign>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub measure: MeasureOptions,
    pub sign: SignPolicy,
    /// Focus distance in meters. Defaults to `1 / focus_disparity`.
    pub s1_m: Option<f64>,
    /// Ignore the stack's occlusion edges.
    pub ignore_edges: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            measure: MeasureOptions::default(),
            sign: SignPolicy::None,
            s1_m: None,
            ignore_edges: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepProvenance {
    pub ks: Vec<f64>,
    pub window_px: usize,
    pub grid_step_px: f64,
    pub r_max_px: f64,
    pub subgrid: bool,
    pub texture_threshold: f64,
    pub edge_exclusion_px: f64,
    pub defocus_scale: f64,
    pub s1_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthEstimate {
    pub width: usize,
    pub height: usize,
    /// Estimated `|d − d_f| / s`; `NaN` where invalid.
    pub delta_hat: Vec<f32>,
    pub variance_proxy: Vec<f32>,
    pub sign: Vec<Sign>,
    /// Metric depth where the sign is known; `NaN` elsewhere.
    pub depth_m: Vec<f32>,
    /// Number of frames contributing at each pixel.
    pub valid_frames: Vec<u16>,
    pub m_frames: usize,
    pub sum_k_sq: f64,
    pub provenance: SweepProvenance,
}

impl DepthEstimate {
    pub fn is_valid(&self, i: usize) -> bool {
        self.delta_hat[i].is_finite()
    }

    pub fn valid_fraction(&self) -> f64 {
        let n = self.delta_hat.iter().filter(|v| v.is_finite()).count();
        n as f64 / self.delta_hat.len().max(1) as f64
    }
}

/// Full sweep: radius per frame, origin slope, variance proxy and optional depth.
pub fn sweep_depth(stack: &BokehStack, options: &SweepOptions) -> Result<DepthEstimate> {
    stack.validate()?;
    let ks = stack.ks();
    let (w, h) = (stack.reference.width(), stack.reference.height());
    let linear = |img: &RasterImage| match img.colorspace() {
        Colorspace::Linear => img.clone(),
        Colorspace::DisplayGamma => img.to_linear(stack.gamma),
    };
    let reference = linear(&stack.reference);
    let edges = if options.ignore_edges {
        None
    } else {
        stack.occlusion_edges.as_ref()
    };
    // Normalized disparity lies in [0, 1], so no pixel of frame k can blur
    // beyond k * max(d_f, 1 - d_f) / s; the search stops a few steps past that.
    let max_offset = stack.focus_disparity.max(1.0 - stack.focus_disparity) / stack.defocus_scale;
    let mut measurements = Vec::with_capacity(ks.len());
    for (k, frame) in &stack.frames {
        log::debug!("measuring blur radii for k={k}");
        let mut measure = options.measure;
        if max_offset.is_finite() && max_offset > 0.0 {
            let cap = k * max_offset + 2.0 * measure.grid_step_px;
            measure.r_max_px = measure.r_max_px.min(cap);
        }
        measurements.push(measure_blur_radius(
            &reference,
            &linear(frame),
            edges,
            &measure,
        )?);
    }
    let s = stack.defocus_scale;
    let s1 = match options.s1_m {
        Some(v) => Some(v),
        None if stack.focus_disparity > 0.0 => Some(1.0 / stack.focus_disparity),
        None => None,
    };
    if let (Some(v), false) = (s1, matches!(options.sign, SignPolicy::None)) {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid("s1_m", format!("must be positive, got {v}")));
        }
    }
    if let SignPolicy::PerPixel(map) = &options.sign {
        if map.len() != w * h {
            return Err(Error::DimensionMismatch(format!(
                "sign map has {} entries for {w}x{h}",
                map.len()
            )));
        }
    }

    let npx = w * h;
    let mut est = DepthEstimate {
        width: w,
        height: h,
        delta_hat: vec![f32::NAN; npx],
        variance_proxy: vec![f32::NAN; npx],
        sign: vec![Sign::Unknown; npx],
        depth_m: vec![f32::NAN; npx],
        valid_frames: vec![0; npx],
        m_frames: ks.len(),
        sum_k_sq: ks.iter().map(|k| k * k).sum(),
        provenance: SweepProvenance {
            ks: ks.clone(),
            window_px: options.measure.window_px,
            grid_step_px: options.measure.grid_step_px,
            r_max_px: options.measure.r_max_px,
            subgrid: options.measure.subgrid,
            texture_threshold: options.measure.texture_threshold,
            edge_exclusion_px: options.measure.edge_exclusion(),
            defocus_scale: s,
            s1_m: s1,
        },
    };
    let mut radii = vec![0.0; ks.len()];
    let mut vars = vec![0.0; ks.len()];
    for i in 0..npx {
        let mut count = 0u16;
        for (f, m) in measurements.iter().enumerate() {
            if m.valid[i] {
                radii[f] = m.r_hat[i] as f64;
                vars[f] = m.variance[i] as f64;
                count += 1;
            } else {
                radii[f] = f64::NAN;
                vars[f] = f64::NAN;
            }
        }
        est.valid_frames[i] = count;
        let Some(delta) = ols_slope(&ks, &radii)? else {
            continue;
        };
        let delta = delta.max(0.0);
        est.delta_hat[i] = delta as f32;
        est.variance_proxy[i] = variance_proxy(&ks, &vars)?.unwrap_or(f64::NAN) as f32;
        let sign = match &options.sign {
            SignPolicy::None => Sign::Unknown,
            SignPolicy::Constant(s) => *s,
            SignPolicy::PerPixel(map) => map[i],
        };
        est.sign[i] = sign;
        if let (Some(s1), Sign::Front | Sign::Behind) = (s1, sign) {
            // offsets live in disparity units scaled by 1/s
            if let Ok(depth) = invert_depth(s * delta, s1, sign) {
                est.depth_m[i] = depth as f32;
            }
        }
    }
    Ok(est)
}
