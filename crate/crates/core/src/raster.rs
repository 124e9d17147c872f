//! In-memory float rasters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Display-gamma exponent used when nothing else is configured.
pub const DEFAULT_GAMMA: f64 = 2.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Colorspace {
    Linear,
    DisplayGamma,
}

/// Interleaved 32-bit float image with 1, 3 or 4 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    colorspace: Colorspace,
}

impl RasterImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
        colorspace: Colorspace,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("raster size", "must be at least 1x1"));
        }
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::invalid(
                "channels",
                format!("expected 1, 3 or 4, got {channels}"),
            ));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} raster needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "samples",
                format!("non-finite value at index {i}"),
            ));
        }
        if channels == 4 {
            if let Some(px) = data
                .chunks_exact(4)
                .position(|p| !(0.0..=1.0).contains(&p[3]))
            {
                return Err(Error::invalid(
                    "alpha",
                    format!("alpha outside [0, 1] at pixel {px}"),
                ));
            }
        }
        Ok(RasterImage {
            width,
            height,
            channels,
            data,
            colorspace,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: f32,
        colorspace: Colorspace,
    ) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
            colorspace,
        )
    }

    /// Builds an image from a per-pixel function returning `channels` samples.
    pub fn from_fn<F>(
        width: usize,
        height: usize,
        channels: usize,
        colorspace: Colorspace,
        mut f: F,
    ) -> Result<Self>
    where
        F: FnMut(usize, usize, &mut [f32]),
    {
        let mut data = vec![0.0f32; width * height * channels];
        for y in 0..height {
            for x in 0..width {
                let i = (y * width + x) * channels;
                f(x, y, &mut data[i..i + channels]);
            }
        }
        Self::new(width, height, channels, data, colorspace)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn colorspace(&self) -> Colorspace {
        self.colorspace
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Rec. 709 luminance (or the single channel), ignoring alpha.
    pub fn luminance(&self) -> Vec<f32> {
        match self.channels {
            1 => self.data.clone(),
            c => self
                .data
                .chunks_exact(c)
                .map(|p| 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2])
                .collect(),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<RasterImage> {
        if x0 + width > self.width || y0 + height > self.height || width == 0 || height == 0 {
            return Err(Error::invalid(
                "crop",
                format!(
                    "window {width}x{height}+{x0}+{y0} outside {}x{} image",
                    self.width, self.height
                ),
            ));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(width * height * c);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Ok(RasterImage {
            width,
            height,
            channels: c,
            data,
            colorspace: self.colorspace,
        })
    }

    /// Linear light to display gamma (`v^(1/γ)`), clamping to [0, 1]. Alpha is untouched.
    pub fn to_display(&self, gamma: f64) -> RasterImage {
        match self.colorspace {
            Colorspace::DisplayGamma => self.clone(),
            Colorspace::Linear => {
                self.map_color(|v| encode_gamma(v, gamma), Colorspace::DisplayGamma)
            }
        }
    }

    /// Display gamma to linear light (`v^γ`). Alpha is untouched.
    pub fn to_linear(&self, gamma: f64) -> RasterImage {
        match self.colorspace {
            Colorspace::Linear => self.clone(),
            Colorspace::DisplayGamma => {
                self.map_color(|v| decode_gamma(v, gamma), Colorspace::Linear)
            }
        }
    }

    fn map_color(&self, f: impl Fn(f32) -> f32, colorspace: Colorspace) -> RasterImage {
        let c = self.channels;
        let color = if c == 4 { 3 } else { c };
        let mut data = self.data.clone();
        for px in data.chunks_exact_mut(c) {
            for v in &mut px[..color] {
                *v = f(*v);
            }
        }
        RasterImage {
            data,
            colorspace,
            ..*self
        }
    }

    /// Drops the alpha channel of an RGBA image.
    pub fn to_rgb(&self) -> RasterImage {
        if self.channels != 4 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect();
        RasterImage {
            channels: 3,
            data,
            ..*self
        }
    }
}

pub fn encode_gamma(v: f32, gamma: f64) -> f32 {
    (v.clamp(0.0, 1.0) as f64).powf(1.0 / gamma) as f32
}

pub fn decode_gamma(v: f32, gamma: f64) -> f32 {
    (v.clamp(0.0, 1.0) as f64).powf(gamma) as f32
}

/// Single-channel float map, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} map needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(FloatMap {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        FloatMap {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<FloatMap> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::invalid("crop", "window outside map"));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            let s = y * self.width + x0;
            data.extend_from_slice(&self.data[s..s + width]);
        }
        Ok(FloatMap {
            width,
            height,
            data,
        })
    }

    /// Nearest-neighbour resample to a new size.
    pub fn resize_nearest(&self, width: usize, height: usize) -> FloatMap {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            let sy = sy.min(self.height - 1);
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                data.push(self.data[sy * self.width + sx.min(self.width - 1)]);
            }
        }
        FloatMap {
            width,
            height,
            data,
        }
    }
}

/// Per-pixel normalized disparity, `d(x, y) ≥ 0`.
pub type DisparityMap = FloatMap;

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Marks pixels whose value differs from a 4-neighbour by more than `jump`.
pub fn discontinuity_mask(map: &FloatMap, jump: f32) -> Mask {
    let (w, h) = (map.width, map.height);
    let mut out = Mask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let v = map.get(x, y);
            let mut edge = false;
            if x + 1 < w && (map.get(x + 1, y) - v).abs() > jump {
                edge = true;
                out.data[y * w + x + 1] = true;
            }
            if y + 1 < h && (map.get(x, y + 1) - v).abs() > jump {
                edge = true;
                out.data[(y + 1) * w + x] = true;
            }
            if edge {
                out.data[y * w + x] = true;
            }
        }
    }
    out
}

/// Euclidean distance (px) from every pixel to the nearest set pixel of `mask`.
///
/// An empty mask gives `f32::INFINITY` everywhere. Exact separable transform
/// (Felzenszwalb and Huttenlocher).
pub fn distance_to_mask(mask: &Mask) -> FloatMap {
    let (w, h) = (mask.width, mask.height);
    let inf = f64::INFINITY;
    // column pass: vertical distance to nearest set pixel
    let mut g = vec![inf; w * h];
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if mask.get(x, y) {
                last = Some(y);
            }
            if let Some(l) = last {
                g[y * w + x] = (y - l) as f64;
            }
        }
        let mut next: Option<usize> = None;
        for y in (0..h).rev() {
            if mask.get(x, y) {
                next = Some(y);
            }
            if let Some(n) = next {
                g[y * w + x] = g[y * w + x].min((n - y) as f64);
            }
        }
    }
    // row pass: lower envelope of parabolas
    let mut out = vec![f32::INFINITY; w * h];
    let mut f = vec![0.0f64; w];
    let mut d = vec![0.0f64; w];
    for y in 0..h {
        for x in 0..w {
            let v = g[y * w + x];
            f[x] = if v.is_finite() { v * v } else { 1e20 };
        }
        squared_distance_1d(&f, &mut d);
        for x in 0..w {
            out[y * w + x] = if d[x] >= 1e19 {
                f32::INFINITY
            } else {
                d[x].sqrt() as f32
            };
        }
    }
    FloatMap {
        width: w,
        height: h,
        data: out,
    }
}

fn squared_distance_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}
