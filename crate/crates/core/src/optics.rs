//! Thin-lens defocus formulas.
//!
//! Lengths are accepted in the units used by camera metadata (focal length and
//! sensor width in millimeters, focus and subject distances in meters) and
//! converted to millimeters internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference raster width used to normalize bokeh strengths across datasets.
pub const DEFAULT_REFERENCE_WIDTH_PX: u32 = 512;

const MM_PER_M: f64 = 1000.0;

/// Physical camera parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensConfig {
    pub focal_length_mm: f64,
    pub f_number: f64,
    pub focus_distance_m: f64,
    pub sensor_width_mm: f64,
    pub image_width_px: u32,
    pub image_height_px: u32,
}

impl LensConfig {
    pub fn new(
        focal_length_mm: f64,
        f_number: f64,
        focus_distance_m: f64,
        sensor_width_mm: f64,
        image_width_px: u32,
        image_height_px: u32,
    ) -> Result<Self> {
        let lens = LensConfig {
            focal_length_mm,
            f_number,
            focus_distance_m,
            sensor_width_mm,
            image_width_px,
            image_height_px,
        };
        lens.validate()?;
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        positive("focal_length_mm", self.focal_length_mm)?;
        positive("f_number", self.f_number)?;
        positive("sensor_width_mm", self.sensor_width_mm)?;
        positive("focus_distance_m", self.focus_distance_m)?;
        if self.image_width_px == 0 || self.image_height_px == 0 {
            return Err(Error::invalid("image size", "must be at least 1x1 px"));
        }
        if self.focus_distance_m * MM_PER_M <= self.focal_length_mm {
            return Err(Error::invalid(
                "focus_distance_m",
                format!(
                    "focus distance {} m must exceed the focal length {} mm",
                    self.focus_distance_m, self.focal_length_mm
                ),
            ));
        }
        Ok(())
    }

    pub fn with_f_number(mut self, f_number: f64) -> Result<Self> {
        self.f_number = f_number;
        self.validate()?;
        Ok(self)
    }

    fn focus_mm(&self) -> f64 {
        self.focus_distance_m * MM_PER_M
    }

    /// `f² / (N·(S₁ − f))` in millimeters: the CoC diameter of a point at infinity.
    fn coc_scale_mm(&self) -> f64 {
        let f = self.focal_length_mm;
        f * f / (self.f_number * (self.focus_mm() - f))
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be a positive finite number, got {v}"),
        ))
    }
}

/// Calibrated bokeh strength: blur radius in output pixels per unit of
/// inverse-depth offset `|1/S₁ − 1/S₂|`.
///
/// Stored per inverse meter. [`BokehStrength::px_per_inv_mm`] gives the same
/// quantity when the offset is measured in inverse millimeters.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BokehStrength(pub f64);

impl BokehStrength {
    /// Radius in px per 1/m of inverse-depth offset (units px·m).
    pub fn px_per_inv_m(self) -> f64 {
        self.0
    }

    /// Radius in px per 1/mm of inverse-depth offset (units px·mm).
    pub fn px_per_inv_mm(self) -> f64 {
        self.0 * MM_PER_M
    }

    /// Blur radius for an inverse-depth offset given in 1/m.
    pub fn radius_px(self, inverse_depth_offset_per_m: f64) -> f64 {
        blur_radius_px(self.0, inverse_depth_offset_per_m)
    }
}

/// Near and far limits of acceptable focus, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofBounds {
    pub near_m: f64,
    /// `f64::INFINITY` once the hyperfocal condition is met.
    pub far_m: f64,
}

impl DofBounds {
    pub fn contains(&self, distance_m: f64) -> bool {
        self.near_m <= distance_m && distance_m <= self.far_m
    }
}

/// Output pixels per sensor millimeter at the given raster width.
pub fn pixel_ratio(lens: &LensConfig, reference_width_px: u32) -> f64 {
    reference_width_px as f64 / lens.sensor_width_mm
}

/// Thin-lens circle of confusion diameter, in millimeters on the sensor.
pub fn coc_diameter_mm(lens: &LensConfig, subject_distance_m: f64) -> Result<f64> {
    if !(subject_distance_m > 0.0) {
        return Err(Error::invalid(
            "subject_distance_m",
            format!("must be positive, got {subject_distance_m}"),
        ));
    }
    let s1 = lens.focus_mm();
    let s2 = subject_distance_m * MM_PER_M;
    Ok(lens.coc_scale_mm() * (s2 - s1).abs() / s2)
}

/// `|1/S₁ − 1/S₂|` in inverse meters.
pub fn inverse_depth_offset(focus_distance_m: f64, subject_distance_m: f64) -> f64 {
    (1.0 / focus_distance_m - 1.0 / subject_distance_m).abs()
}

/// `K = f²·S₁ / (2·N·(S₁ − f)) · pixel_ratio`.
pub fn bokeh_strength_k(lens: &LensConfig, reference_width_px: u32) -> BokehStrength {
    bokeh_strength_with_ratio(lens, pixel_ratio(lens, reference_width_px))
}

/// Same as [`bokeh_strength_k`] with an explicit px/mm conversion factor.
pub fn bokeh_strength_with_ratio(lens: &LensConfig, px_per_mm: f64) -> BokehStrength {
    // coc_scale_mm * S1[mm] gives mm²; dividing by 1000 moves S1 to meters so
    // that K multiplies an offset in 1/m.
    let k_mm = 0.5 * lens.coc_scale_mm() * lens.focus_mm() * px_per_mm;
    BokehStrength(k_mm / MM_PER_M)
}

pub fn blur_radius_px(k: f64, delta_disp: f64) -> f64 {
    k * delta_disp
}

/// Exact thin-lens depth of field for a CoC diameter limit in millimeters.
pub fn dof_bounds(lens: &LensConfig, coc_limit_mm: f64) -> Result<DofBounds> {
    if !(coc_limit_mm > 0.0) {
        return Err(Error::invalid("coc_limit_mm", "must be positive"));
    }
    // |S2 − S1| / S2 = c / A on either side of the focal plane.
    let ratio = coc_limit_mm / lens.coc_scale_mm();
    let s1 = lens.focus_distance_m;
    let near_m = s1 / (1.0 + ratio);
    let far_m = if ratio < 1.0 {
        s1 / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    Ok(DofBounds { near_m, far_m })
}

/// Log-linear interpolation between two f-numbers for `t ∈ [0, 1]`.
pub fn fstop_to_fnumber(normalized_fstop: f64, n_min: f64, n_max: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&normalized_fstop) {
        return Err(Error::invalid(
            "normalized_fstop",
            format!("must lie in [0, 1], got {normalized_fstop}"),
        ));
    }
    if !(n_min > 0.0 && n_min < n_max) {
        return Err(Error::invalid("f-number range", "need 0 < n_min < n_max"));
    }
    if normalized_fstop == 0.0 {
        return Ok(n_min);
    }
    if normalized_fstop == 1.0 {
        return Ok(n_max);
    }
    let (lo, hi) = (n_min.ln(), n_max.ln());
    Ok((lo + normalized_fstop * (hi - lo)).exp())
}

/// Inverse of [`fstop_to_fnumber`].
pub fn fnumber_to_fstop(f_number: f64, n_min: f64, n_max: f64) -> Result<f64> {
    if !(n_min > 0.0 && n_min < n_max) {
        return Err(Error::invalid("f-number range", "need 0 < n_min < n_max"));
    }
    if !(n_min..=n_max).contains(&f_number) {
        return Err(Error::invalid(
            "f_number",
            format!("{f_number} outside [{n_min}, {n_max}]"),
        ));
    }
    Ok((f_number.ln() - n_min.ln()) / (n_max.ln() - n_min.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lens(f: f64, n: f64, s1: f64) -> LensConfig {
        LensConfig::new(f, n, s1, 36.0, 6000, 4000).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn pixel_ratio_examples() {
        let l = lens(50.0, 2.0, 2.0);
        assert!(rel(pixel_ratio(&l, 512), 512.0 / 36.0) < 1e-15);
        assert_eq!(pixel_ratio(&l, 36), 1.0);
        let l24 = LensConfig {
            sensor_width_mm: 24.0,
            ..l
        };
        assert!(rel(pixel_ratio(&l24, 512), 512.0 / 24.0) < 1e-15);
    }

    #[test]
    fn coc_examples() {
        let l = lens(50.0, 2.0, 2.0);
        assert_eq!(coc_diameter_mm(&l, 2.0).unwrap(), 0.0);
        let expect = 2500.0 / (2.0 * 1950.0) * (2000.0 / 4000.0);
        assert!(rel(coc_diameter_mm(&l, 4.0).unwrap(), expect) < 1e-14);
        let l4 = lens(50.0, 4.0, 2.0);
        assert!(rel(coc_diameter_mm(&l4, 4.0).unwrap(), expect / 2.0) < 1e-14);
        assert!(coc_diameter_mm(&l, 0.0).is_err());
        assert!(coc_diameter_mm(&l, -1.0).is_err());
    }

    #[test]
    fn k_example_with_unit_pixel_ratio() {
        let l = lens(50.0, 2.0, 2.0);
        let k = bokeh_strength_with_ratio(&l, 1.0);
        // (2500·2000)/(2·2·1950) px·mm
        let expect_mm = 2500.0 * 2000.0 / (2.0 * 2.0 * 1950.0);
        assert!(rel(k.px_per_inv_mm(), expect_mm) < 1e-14);
        assert!(rel(k.px_per_inv_m(), expect_mm / 1000.0) < 1e-14);
        // radius for S2 = 4 m equals half the CoC diameter in px
        let r = k.radius_px(inverse_depth_offset(2.0, 4.0));
        let d = coc_diameter_mm(&l, 4.0).unwrap();
        assert!(rel(r, d / 2.0) < 1e-12);
    }

    #[test]
    fn k_pinhole_limit() {
        let l = lens(50.0, 1e9, 2.0);
        let k = bokeh_strength_k(&l, 512);
        let k_ref = bokeh_strength_k(&lens(50.0, 1.0, 2.0), 512);
        assert!(k.0 / k_ref.0 < 1e-6 * 1.0001);
    }

    #[test]
    fn rejects_focus_inside_focal_length() {
        assert!(LensConfig::new(50.0, 2.0, 0.05, 36.0, 10, 10).is_err());
        assert!(LensConfig::new(50.0, 2.0, 0.049, 36.0, 10, 10).is_err());
        assert!(LensConfig::new(50.0, 0.0, 2.0, 36.0, 10, 10).is_err());
        assert!(LensConfig::new(50.0, 2.0, 2.0, 36.0, 0, 10).is_err());
    }

    #[test]
    fn blur_radius_examples() {
        assert_eq!(blur_radius_px(20.0, 0.0), 0.0);
        assert_eq!(blur_radius_px(20.0, 0.5), 10.0);
        assert_eq!(blur_radius_px(0.0, 7.3), 0.0);
    }

    /// Bisection on the monotone branch of the CoC curve.
    fn bisect_coc(l: &LensConfig, target: f64, mut lo: f64, mut hi: f64) -> f64 {
        let f = |s: f64| coc_diameter_mm(l, s).unwrap() - target;
        let rising = f(hi) > f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn dof_bounds_bisection_oracle() {
        let l = lens(50.0, 2.0, 2.0);
        let b = dof_bounds(&l, 0.03).unwrap();
        assert!(b.near_m < 2.0 && 2.0 < b.far_m && b.far_m.is_finite());
        let near = bisect_coc(&l, 0.03, 0.06, 2.0);
        let far = bisect_coc(&l, 0.03, 2.0, 1e4);
        assert!(rel(b.near_m, near) < 1e-9);
        assert!(rel(b.far_m, far) < 1e-9);
    }

    #[test]
    fn dof_bounds_inverts_coc() {
        let l = lens(50.0, 2.0, 2.0);
        let s_star = 3.7;
        let c = coc_diameter_mm(&l, s_star).unwrap();
        let b = dof_bounds(&l, c).unwrap();
        assert!(rel(b.far_m, s_star) < 1e-9);
        assert!(rel(coc_diameter_mm(&l, b.near_m).unwrap(), c) < 1e-9);
    }

    #[test]
    fn dof_bounds_collapse_and_hyperfocal() {
        let l = lens(50.0, 2.0, 2.0);
        let b = dof_bounds(&l, 1e-12).unwrap();
        assert!(rel(b.near_m, 2.0) < 1e-9 && rel(b.far_m, 2.0) < 1e-9);
        let b = dof_bounds(&l, 10.0).unwrap();
        assert!(b.far_m.is_infinite());
        assert!(dof_bounds(&l, 0.0).is_err());
    }

    #[test]
    fn fstop_examples() {
        assert_eq!(fstop_to_fnumber(0.0, 1.4, 16.0).unwrap(), 1.4);
        assert_eq!(fstop_to_fnumber(1.0, 1.4, 22.0).unwrap(), 22.0);
        assert!((fstop_to_fnumber(0.5, 1.0, 4.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(fstop_to_fnumber(1.01, 1.4, 22.0).is_err());
        assert!(fstop_to_fnumber(-0.1, 1.4, 22.0).is_err());
        assert!(fstop_to_fnumber(0.5, 4.0, 1.0).is_err());
    }

    fn arb_lens() -> impl Strategy<Value = LensConfig> {
        (10.0f64..300.0, 1.0f64..32.0, 0.5f64..50.0, 5.0f64..60.0)
            .prop_filter_map("focus beyond focal length", |(f, n, s1, w)| {
                LensConfig::new(f, n, s1, w, 4000, 3000).ok()
            })
    }

    proptest! {
        #[test]
        fn k_matches_half_coc(l in arb_lens(), s2 in 0.1f64..200.0, width in 64u32..8192) {
            let k = bokeh_strength_k(&l, width);
            let lhs = 2.0 * k.radius_px(inverse_depth_offset(l.focus_distance_m, s2));
            let rhs = coc_diameter_mm(&l, s2).unwrap() * pixel_ratio(&l, width);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }

        #[test]
        fn coc_monotone(l in arb_lens(), a in 0.01f64..0.9, b in 0.01f64..0.9) {
            prop_assume!((a - b).abs() > 1e-6);
            // behind focus: larger inverse offset means farther subject
            let inv_s1 = 1.0 / l.focus_distance_m;
            let s_a = 1.0 / (inv_s1 * (1.0 - a));
            let s_b = 1.0 / (inv_s1 * (1.0 - b));
            let (ca, cb) = (coc_diameter_mm(&l, s_a).unwrap(), coc_diameter_mm(&l, s_b).unwrap());
            prop_assert_eq!(a < b, ca < cb);
            let l2 = l.with_f_number(l.f_number * 1.5).unwrap();
            prop_assert!(coc_diameter_mm(&l2, s_a).unwrap() < ca);
        }

        #[test]
        fn k_scaling(l in arb_lens()) {
            let k = bokeh_strength_k(&l, 512).0;
            let k2n = bokeh_strength_k(&l.with_f_number(l.f_number * 2.0).unwrap(), 512).0;
            prop_assert!((k2n * 2.0 - k).abs() <= 1e-12 * k);
            let k2r = bokeh_strength_k(&l, 1024).0;
            prop_assert!((k2r - 2.0 * k).abs() <= 1e-12 * k);
        }

        #[test]
        fn fstop_monotone(t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            prop_assume!(t2 - t1 > 1e-9);
            prop_assert!(fstop_to_fnumber(t1, 1.4, 22.0).unwrap() < fstop_to_fnumber(t2, 1.4, 22.0).unwrap());
            let n = fstop_to_fnumber(t1, 1.4, 22.0).unwrap();
            prop_assert!((fnumber_to_fstop(n, 1.4, 22.0).unwrap() - t1).abs() < 1e-12);
        }
    }
}
