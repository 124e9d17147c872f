//! Camera metadata harmonization into a single bokeh-strength record.
//!
//! Every dataset route ends in [`calc_dof_cond`]: thin-lens K at the native
//! raster width, rescaled to a 512 px reference and clipped to `[0, 30]`.

mod datasets;
mod exif;

pub use datasets::{
    harmonize_dataset, AnnsRow, DatasetKind, HarmonizeDefaults, HarmonizeOutput, HarmonizeTrailer,
    ANNS_SCHEMA,
};
pub use exif::{read_exif_dump, ExifRecord};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::optics::{bokeh_strength_k, dof_bounds, LensConfig, DEFAULT_REFERENCE_WIDTH_PX};
use crate::raster::{FloatMap, RasterImage};

pub const DOF_COND_MAX: f64 = 30.0;
pub const FULL_FRAME_WIDTH_MM: f64 = 36.0;
pub const APS_C_CANON_WIDTH_MM: f64 = 22.3;
/// Base circle of confusion as a fraction of sensor width.
pub const COC_SENSOR_DIVISOR: f64 = 1500.0;
pub const DEFAULT_RELAX_FACTOR: f64 = 3.0;
pub const DEFAULT_PROBE_FRACTION: f64 = 0.8;
/// Gradient percentile above which pixels vote for the focus distance.
pub const FOCUS_GRADIENT_PERCENTILE: f64 = 0.9;

/// Where the focus distance and sensor parameters of a row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnsSource {
    Exif,
    DepthMedian,
    RendererManifest,
    Heuristic,
}

/// Unified per-pair camera annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraAnns {
    pub aperture: f64,
    pub focal_length_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_length_35mm: Option<f64>,
    pub sensor_width_mm: f64,
    pub focus_distance_m: f64,
    #[serde(rename = "dof-cond")]
    pub dof_cond: f64,
    #[serde(
        rename = "dof-cond-crop",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub dof_cond_crop: Option<f64>,
    pub foreground_clear: bool,
    pub source: AnnsSource,
    /// Dataset-specific fields kept for auditing.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl CameraAnns {
    pub fn crop_factor(&self) -> Option<f64> {
        self.focal_length_35mm.map(|f35| f35 / self.focal_length_mm)
    }
}

/// Camera parameters collected so far; any may still be missing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DofInputs {
    pub aperture: Option<f64>,
    pub focal_length_mm: Option<f64>,
    pub sensor_width_mm: Option<f64>,
    pub focus_distance_m: Option<f64>,
}

fn require(value: Option<f64>, name: &str) -> Result<f64> {
    value.ok_or_else(|| Error::MissingField(name.to_string()))
}

/// K at the native width, rescaled to `reference_width_px / image_width_px`
/// and clipped to `[0, 30]`.
pub fn calc_dof_cond(
    inputs: &DofInputs,
    image_width_px: u32,
    reference_width_px: u32,
) -> Result<f64> {
    let lens = LensConfig::new(
        require(inputs.focal_length_mm, "focal_length_mm")?,
        require(inputs.aperture, "aperture")?,
        require(inputs.focus_distance_m, "focus_distance_m")?,
        require(inputs.sensor_width_mm, "sensor_width_mm")?,
        image_width_px,
        1,
    )?;
    if reference_width_px == 0 {
        return Err(Error::invalid("reference_width_px", "must be positive"));
    }
    let native = bokeh_strength_k(&lens, image_width_px).px_per_inv_m();
    let scaled = native * reference_width_px as f64 / image_width_px as f64;
    Ok(scaled.clamp(0.0, DOF_COND_MAX))
}

/// `calc_dof_cond` at the default 512 px reference width.
pub fn dof_cond_512(inputs: &DofInputs, image_width_px: u32) -> Result<f64> {
    calc_dof_cond(inputs, image_width_px, DEFAULT_REFERENCE_WIDTH_PX)
}

/// `dof_cond / (f35 / f)`; absent without a 35 mm equivalent.
pub fn dof_cond_crop(
    dof_cond: f64,
    focal_length_mm: f64,
    focal_length_35mm: Option<f64>,
) -> Option<f64> {
    let f35 = focal_length_35mm?;
    (f35 > 0.0 && focal_length_mm > 0.0).then(|| dof_cond / (f35 / focal_length_mm))
}

/// Strategy that produced a sensor width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorWidthSource {
    FocalPlaneResolution,
    CropFactor,
    ModelHeuristic,
}

const CANON_FULL_FRAME_MARKERS: &[&str] =
    &["5D", "6D", "1D", "1DS", "R", "RP", "R3", "R5", "R6", "R8"];

fn canon_sensor_width(model: &str) -> Option<f64> {
    let upper = model.to_ascii_uppercase();
    if !upper.contains("CANON") {
        return None;
    }
    let full = upper
        .split_whitespace()
        .any(|word| CANON_FULL_FRAME_MARKERS.contains(&word))
        || upper.contains("5D")
        || upper.contains("6D")
        || upper.contains("1D");
    Some(if full {
        FULL_FRAME_WIDTH_MM
    } else {
        APS_C_CANON_WIDTH_MM
    })
}

/// Sensor width from focal-plane resolution, then crop-factor inversion, then
/// the Canon body table.
pub fn estimate_sensor_width(exif: &ExifRecord) -> Result<(f64, SensorWidthSource)> {
    let mut missing = Vec::new();

    match (
        exif.number("FocalPlaneXResolution"),
        exif.image_width(),
        exif.focal_plane_unit_mm(),
    ) {
        (Some(res), Some(w), Some(unit_mm)) if res > 0.0 => {
            return Ok((
                w as f64 / res * unit_mm,
                SensorWidthSource::FocalPlaneResolution,
            ));
        }
        (res, w, unit) => {
            if res.is_none() {
                missing.push("FocalPlaneXResolution");
            }
            if w.is_none() {
                missing.push("ImageWidth");
            }
            if unit.is_none() {
                missing.push("FocalPlaneResolutionUnit");
            }
        }
    }

    match (
        exif.number("FocalLength"),
        exif.number("FocalLengthIn35mmFormat"),
    ) {
        (Some(f), Some(f35)) if f > 0.0 && f35 > 0.0 => {
            return Ok((
                FULL_FRAME_WIDTH_MM / (f35 / f),
                SensorWidthSource::CropFactor,
            ));
        }
        (f, f35) => {
            if f.is_none() {
                missing.push("FocalLength");
            }
            if f35.is_none() {
                missing.push("FocalLengthIn35mmFormat");
            }
        }
    }

    match exif.text("Model") {
        Some(model) => {
            if let Some(w) = canon_sensor_width(&model) {
                return Ok((w, SensorWidthSource::ModelHeuristic));
            }
            missing.push("Model (not a known Canon body)");
        }
        None => missing.push("Model"),
    }

    Err(Error::MissingField(format!(
        "sensor width: every strategy failed ({})",
        missing.join(", ")
    )))
}

fn lower_weighted_median(mut pairs: Vec<(f32, f32)>) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1 as f64).sum();
    let mut acc = 0.0;
    for &(value, weight) in &pairs {
        acc += weight as f64;
        if acc >= 0.5 * total {
            return value as f64;
        }
    }
    pairs.last().map_or(f64::NAN, |p| p.0 as f64)
}

/// Gradient-weighted median of depth over the strongest image edges.
///
/// `depth_m` is resized to the image by nearest neighbor. Gradients are central
/// differences of luminance on interior pixels; pixels at or above the 90th
/// percentile vote with weight `|∇I|`.
pub fn focus_distance_from_depth(depth_m: &FloatMap, sharp: &RasterImage) -> Result<f64> {
    let (w, h) = (sharp.width(), sharp.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(
            "sharp image",
            "needs at least 3x3 px for gradients",
        ));
    }
    let depth = if (depth_m.width, depth_m.height) == (w, h) {
        depth_m.clone()
    } else {
        depth_m.resize_nearest(w, h)
    };
    let lum = sharp.luminance();
    let mut votes = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = 0.5 * (lum[y * w + x + 1] - lum[y * w + x - 1]);
            let gy = 0.5 * (lum[(y + 1) * w + x] - lum[(y - 1) * w + x]);
            let d = depth.get(x, y);
            if d.is_finite() && d > 0.0 {
                votes.push((d, gx.hypot(gy)));
            }
        }
    }
    let mut grads: Vec<f32> = votes.iter().map(|v| v.1).collect();
    grads.sort_by(f32::total_cmp);
    let threshold = match grads.last() {
        Some(&max) if max > 0.0 => {
            grads[((grads.len() - 1) as f64 * FOCUS_GRADIENT_PERCENTILE).floor() as usize]
        }
        _ => {
            return Err(Error::Geometry(
                "image has no gradient support for a focus estimate".into(),
            ))
        }
    };
    let strong: Vec<(f32, f32)> = votes
        .into_iter()
        .filter(|v| v.1 >= threshold && v.1 > 0.0)
        .collect();
    Ok(lower_weighted_median(strong))
}

/// Whether a plane at `probe_fraction · S₁` stays inside the depth of field
/// for a CoC limit of `sensor_width / 1500 · relax_factor`.
pub fn foreground_clear_flag(
    anns: &CameraAnns,
    relax_factor: f64,
    probe_fraction: f64,
) -> Result<bool> {
    if !(relax_factor > 0.0) {
        return Err(Error::invalid("relax_factor", "must be positive"));
    }
    let lens = LensConfig::new(
        anns.focal_length_mm,
        anns.aperture,
        anns.focus_distance_m,
        anns.sensor_width_mm,
        1,
        1,
    )?;
    let coc = anns.sensor_width_mm / COC_SENSOR_DIVISOR * relax_factor;
    let bounds = dof_bounds(&lens, coc)?;
    Ok(bounds.contains(probe_fraction * anns.focus_distance_m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    use crate::raster::Colorspace;

    fn inputs(f: f64, n: f64, s1: f64, sensor: f64) -> DofInputs {
        DofInputs {
            aperture: Some(n),
            focal_length_mm: Some(f),
            sensor_width_mm: Some(sensor),
            focus_distance_m: Some(s1),
        }
    }

    fn anns(f: f64, n: f64, s1: f64, sensor: f64) -> CameraAnns {
        CameraAnns {
            aperture: n,
            focal_length_mm: f,
            focal_length_35mm: None,
            sensor_width_mm: sensor,
            focus_distance_m: s1,
            dof_cond: 0.0,
            dof_cond_crop: None,
            foreground_clear: false,
            source: AnnsSource::Exif,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn dof_cond_matches_hand_arithmetic() {
        // K[px*m] = f^2 S1 / (2 N (S1 - f)) * (W / sensor) / 1000, then * 512 / W.
        let (f, n, s1_mm, sensor, w) = (50.0, 2.0, 2000.0, 36.0, 4096.0);
        let expected =
            f * f * s1_mm / (2.0 * n * (s1_mm - f)) * (w / sensor) / 1000.0 * (512.0 / w);
        let got = calc_dof_cond(&inputs(50.0, 2.0, 2.0, 36.0), 4096, 512).unwrap();
        assert!(
            ((got - expected) / expected).abs() < 1e-9,
            "{got} vs {expected}"
        );
        assert!((got - 9.1168).abs() < 1e-3);
    }

    #[test]
    fn dof_cond_clips_to_thirty() {
        let v = calc_dof_cond(&inputs(200.0, 1.0, 3.0, 36.0), 6000, 512).unwrap();
        assert_eq!(v, 30.0);
    }

    #[test]
    fn pinhole_aperture_gives_zero() {
        let v = calc_dof_cond(&inputs(50.0, 1e12, 2.0, 36.0), 4096, 512).unwrap();
        assert!(v >= 0.0 && v < 1e-9);
    }

    #[test]
    fn missing_fields_are_named() {
        let mut i = inputs(50.0, 2.0, 2.0, 36.0);
        i.sensor_width_mm = None;
        match calc_dof_cond(&i, 4096, 512) {
            Err(Error::MissingField(name)) => assert_eq!(name, "sensor_width_mm"),
            other => panic!("{other:?}"),
        }
        let mut i = inputs(50.0, 2.0, 2.0, 36.0);
        i.aperture = None;
        assert!(
            matches!(calc_dof_cond(&i, 4096, 512), Err(Error::MissingField(n)) if n == "aperture")
        );
    }

    #[test]
    fn focus_inside_focal_length_is_rejected() {
        assert!(calc_dof_cond(&inputs(50.0, 2.0, 0.04, 36.0), 4096, 512).is_err());
    }

    #[test]
    fn full_frame_crop_is_identity() {
        assert_eq!(dof_cond_crop(7.25, 50.0, Some(50.0)), Some(7.25));
        assert_eq!(dof_cond_crop(8.0, 50.0, Some(80.0)), Some(5.0));
        assert_eq!(dof_cond_crop(8.0, 50.0, None), None);
    }

    proptest! {
        #[test]
        fn dof_cond_ignores_native_resolution(
            f in 18.0f64..200.0, n in 1.2f64..22.0, s1 in 0.5f64..20.0, w in 256u32..4096
        ) {
            let i = inputs(f, n, s1.max(f / 1000.0 * 1.5), 36.0);
            let a = calc_dof_cond(&i, w, 512).unwrap();
            let b = calc_dof_cond(&i, 2 * w, 512).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            prop_assert!((0.0..=30.0).contains(&a));
        }
    }

    fn exif(v: serde_json::Value) -> ExifRecord {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn sensor_from_focal_plane_resolution() {
        let e = exif(
            json!({"FocalPlaneXResolution": 3940, "FocalPlaneResolutionUnit": "cm", "ImageWidth": 6720}),
        );
        let (w, src) = estimate_sensor_width(&e).unwrap();
        assert_eq!(src, SensorWidthSource::FocalPlaneResolution);
        assert!((w - 6720.0 / 3940.0 * 10.0).abs() < 1e-12);
        let e = exif(json!({"FocalPlaneXResolution": "1600", "ImageWidth": 5760}));
        let (w, _) = estimate_sensor_width(&e).unwrap();
        assert!((w - 5760.0 / 1600.0 * 25.4).abs() < 1e-12);
    }

    #[test]
    fn sensor_from_crop_factor() {
        let e = exif(json!({"FocalLength": "50.0 mm", "FocalLengthIn35mmFormat": "80 mm"}));
        assert_eq!(
            estimate_sensor_width(&e).unwrap(),
            (22.5, SensorWidthSource::CropFactor)
        );
    }

    #[test]
    fn sensor_from_canon_table() {
        let e = exif(json!({"Model": "Canon EOS 5D Mark IV"}));
        assert_eq!(
            estimate_sensor_width(&e).unwrap(),
            (36.0, SensorWidthSource::ModelHeuristic)
        );
        let e = exif(json!({"Model": "Canon EOS R5"}));
        assert_eq!(estimate_sensor_width(&e).unwrap().0, 36.0);
        let e = exif(json!({"Model": "Canon EOS 80D"}));
        assert_eq!(estimate_sensor_width(&e).unwrap().0, 22.3);
    }

    #[test]
    fn sensor_failure_lists_missing_tags() {
        let err = estimate_sensor_width(&exif(json!({"Model": "Nikon D850"}))).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("FocalPlaneXResolution") && msg.contains("FocalLengthIn35mmFormat"),
            "{msg}"
        );
    }

    fn textured(w: usize, h: usize) -> RasterImage {
        RasterImage::from_fn(w, h, 3, Colorspace::Linear, |x, y, px| {
            let v = (((x * 7 + y * 13) % 11) as f32) / 10.0;
            px.fill(v);
        })
        .unwrap()
    }

    #[test]
    fn constant_depth_is_returned() {
        let depth = FloatMap::filled(8, 6, 2.5);
        assert_eq!(
            focus_distance_from_depth(&depth, &textured(32, 24)).unwrap(),
            2.5
        );
    }

    #[test]
    fn strong_edges_pick_their_plane() {
        // Left half: 1 m with a hard checkerboard. Right half: 3 m, smooth ramp.
        let (w, h) = (40, 20);
        let img = RasterImage::from_fn(w, h, 3, Colorspace::Linear, |x, y, px| {
            let v = if x < w / 2 {
                ((x / 2 + y / 2) % 2) as f32
            } else {
                0.3 + 0.001 * x as f32
            };
            px.fill(v);
        })
        .unwrap();
        let depth = FloatMap::new(
            w,
            h,
            (0..w * h)
                .map(|i| if i % w < w / 2 { 1.0 } else { 3.0 })
                .collect(),
        )
        .unwrap();
        assert_eq!(focus_distance_from_depth(&depth, &img).unwrap(), 1.0);
    }

    #[test]
    fn weighted_median_oracle() {
        assert_eq!(
            lower_weighted_median(vec![(3.0, 1.0), (1.0, 1.0), (2.0, 1.0)]),
            2.0
        );
        assert_eq!(lower_weighted_median(vec![(1.0, 1.0), (5.0, 3.0)]), 5.0);
        assert_eq!(lower_weighted_median(vec![(1.0, 3.0), (5.0, 1.0)]), 1.0);
    }

    proptest! {
        #[test]
        fn equal_weights_reduce_to_plain_median(values in proptest::collection::vec(0.1f32..10.0, 1..40)) {
            let mut v = values.clone();
            if v.len() % 2 == 0 { v.pop(); }
            prop_assume!(!v.is_empty());
            let mut sorted = v.clone();
            sorted.sort_by(f32::total_cmp);
            let median = sorted[sorted.len() / 2] as f64;
            let got = lower_weighted_median(v.into_iter().map(|x| (x, 1.0)).collect());
            prop_assert_eq!(got, median);
        }
    }

    #[test]
    fn flat_image_has_no_focus_estimate() {
        let img = RasterImage::filled(16, 16, 3, 0.4, Colorspace::Linear).unwrap();
        assert!(focus_distance_from_depth(&FloatMap::filled(16, 16, 2.0), &img).is_err());
    }

    #[test]
    fn fast_portrait_lens_fails_foreground_test() {
        let a = anns(85.0, 1.4, 1.5, 36.0);
        // Explicit bounds: near = S1 / (1 + c / A) with A = f^2 / (N (S1 - f)).
        let big_a = 85.0 * 85.0 / (1.4 * (1500.0 - 85.0));
        let near = 1.5 / (1.0 + 0.072 / big_a);
        assert!(1.2 < near);
        assert!(!foreground_clear_flag(&a, 3.0, 0.8).unwrap());
    }

    #[test]
    fn huge_relaxation_or_pinhole_is_clear() {
        assert!(foreground_clear_flag(&anns(85.0, 1.4, 1.5, 36.0), 1e9, 0.8).unwrap());
        assert!(foreground_clear_flag(&anns(85.0, 1e6, 1.5, 36.0), 3.0, 0.8).unwrap());
    }

    #[test]
    fn anns_field_names_follow_schema_vocabulary() {
        let mut a = anns(50.0, 2.0, 2.0, 36.0);
        a.dof_cond_crop = Some(1.0);
        a.extra.insert("camera".into(), json!("x"));
        let v = serde_json::to_value(&a).unwrap();
        for key in ["dof-cond", "dof-cond-crop", "foreground_clear", "camera"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: CameraAnns = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
    }
}
