//! Image fidelity (PSNR, SSIM) and depth accuracy metrics.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::raster::{FloatMap, RasterImage};

/// Side of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio, which may be infinite. Serialized as a number
/// or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Psnr(pub f64);

impl Psnr {
    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Psnr(v)),
            Repr::Text(t) if t == "inf" => Ok(Psnr(f64::INFINITY)),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "unexpected psnr value `{t}`"
            ))),
        }
    }
}

fn check_same(a: &RasterImage, b: &RasterImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean squared error over every pixel and channel.
pub fn mse(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_same(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(peak² / MSE)`; infinite for identical inputs.
pub fn psnr(a: &RasterImage, b: &RasterImage, peak: f64) -> Result<Psnr> {
    if !(peak > 0.0) {
        return Err(Error::invalid("peak", "must be positive"));
    }
    let m = mse(a, b)?;
    Ok(Psnr(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / m).log10()
    }))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable weighted window mean over all fully-inside positions.
fn filter_valid(plane: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|k| g[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|k| g[k] * tmp[(y + k) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize, range: f64) -> f64 {
    let g = gaussian_window();
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mu_a = filter_valid(a, w, h, &g);
    let mu_b = filter_valid(b, w, h, &g);
    let aa = filter_valid(&prod(a, a), w, h, &g);
    let bb = filter_valid(&prod(b, b), w, h, &g);
    let ab = filter_valid(&prod(a, b), w, h, &g);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / mu_a.len() as f64
}

/// Mean SSIM over 11×11 Gaussian windows (σ = 1.5) lying fully inside the
/// image, averaged over channels. `range` is the dynamic range `L`.
pub fn ssim(a: &RasterImage, b: &RasterImage, range: f64) -> Result<f64> {
    check_same(a, b)?;
    let (w, h, c) = (a.width(), a.height(), a.channels());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(
            "image",
            format!("{w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let mut acc = 0.0;
    for ch in 0..c {
        let pa: Vec<f64> = a
            .data()
            .iter()
            .skip(ch)
            .step_by(c)
            .map(|&v| v as f64)
            .collect();
        let pb: Vec<f64> = b
            .data()
            .iter()
            .skip(ch)
            .step_by(c)
            .map(|&v| v as f64)
            .collect();
        acc += ssim_plane(&pa, &pb, w, h, range);
    }
    Ok(acc / c as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BokehQualityReport {
    pub psnr_db: Psnr,
    pub ssim: f64,
    pub n_pixels: usize,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
    pub data_range: f64,
    /// Reserved for perceptual metrics; always null.
    pub lpips: Option<f64>,
    pub dists: Option<f64>,
}

pub fn bokeh_quality(
    pred: &RasterImage,
    gt: &RasterImage,
    range: f64,
) -> Result<BokehQualityReport> {
    Ok(BokehQualityReport {
        psnr_db: psnr(pred, gt, range)?,
        ssim: ssim(pred, gt, range)?,
        n_pixels: pred.width() * pred.height(),
        ssim_window: SSIM_WINDOW,
        ssim_sigma: SSIM_SIGMA,
        ssim_k1: SSIM_K1,
        ssim_k2: SSIM_K2,
        data_range: range,
        lpips: None,
        dists: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthAccuracyReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
    /// Pixels dropped because the prediction was not positive and finite.
    pub n_invalid_pred: usize,
}

/// Standard depth errors in metric units, without scale alignment.
///
/// A pixel counts when the mask allows it and the ground truth is positive and
/// finite. Among those, nonpositive or non-finite predictions are dropped and
/// counted in `n_invalid_pred`.
pub fn depth_metrics(
    pred: &FloatMap,
    gt: &FloatMap,
    mask: Option<&[bool]>,
) -> Result<DepthAccuracyReport> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    if let Some(m) = mask {
        if m.len() != gt.data.len() {
            return Err(Error::DimensionMismatch(
                "mask size differs from ground truth".into(),
            ));
        }
    }
    let mut n = 0usize;
    let mut invalid = 0usize;
    let (mut abs_rel, mut sq_rel, mut se, mut se_log, mut l10) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    for i in 0..gt.data.len() {
        let g = gt.data[i] as f64;
        if mask.is_some_and(|m| !m[i]) || !(g.is_finite() && g > 0.0) {
            continue;
        }
        let p = pred.data[i] as f64;
        if !(p.is_finite() && p > 0.0) {
            invalid += 1;
            continue;
        }
        n += 1;
        let d = p - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        se += d * d;
        se_log += (p.ln() - g.ln()).powi(2);
        l10 += (p.log10() - g.log10()).abs();
        let ratio = (p / g).max(g / p);
        for (k, hit) in hits.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *hit += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::invalid("mask", "no valid pixels to evaluate"));
    }
    let nf = n as f64;
    Ok(DepthAccuracyReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (se / nf).sqrt(),
        rmse_log: (se_log / nf).sqrt(),
        log10: l10 / nf,
        delta1: hits[0] as f64 / nf,
        delta2: hits[1] as f64 / nf,
        delta3: hits[2] as f64 / nf,
        n_valid: n,
        n_invalid_pred: invalid,
    })
}
