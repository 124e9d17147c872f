//! Dataset converters: DPDD exposure groups, Aperture-Dataset triplets and
//! BLB renderer manifests.
//!
//! Layouts:
//! - DPDD: images under `root`, tags in an `exiftool -j` dump (`--exif-json`,
//!   default `root/exif.json`) whose `SourceFile` entries are relative to `root`.
//! - Aperture: `root/<scene>/{f22,f8,f2}.{png,jpg}` plus `root/<scene>/depth.pfm`
//!   holding metric depth.
//! - BLB: `root/<scene>/info.json` (see [`BlbManifest`]) next to the sharp
//!   image, the disparity image and the renders it lists.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::exif::{read_exif_dump, ExifRecord};
use super::{
    calc_dof_cond, dof_cond_crop, estimate_sensor_width, focus_distance_from_depth,
    foreground_clear_flag, AnnsSource, CameraAnns, DofInputs, SensorWidthSource,
    DEFAULT_PROBE_FRACTION, DEFAULT_RELAX_FACTOR, FULL_FRAME_WIDTH_MM,
};
use crate::error::{Error, Result};
use crate::io_formats::{ensure_dir, read_image8, read_pfm, write_pfm};
use crate::optics::{fstop_to_fnumber, DEFAULT_REFERENCE_WIDTH_PX};
use crate::raster::FloatMap;

pub const ANNS_SCHEMA: &str = "lenssweep/anns/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Dpdd,
    Aperture,
    Blb,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dpdd" => Ok(DatasetKind::Dpdd),
            "aperture" => Ok(DatasetKind::Aperture),
            "blb" => Ok(DatasetKind::Blb),
            other => Err(Error::invalid(
                "dataset",
                format!("unknown kind `{other}`; use dpdd, aperture or blb"),
            )),
        }
    }
}

/// Conversion settings and camera overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarmonizeDefaults {
    /// Focal length used when metadata has none. Aperture-Dataset default 50 mm.
    pub focal_length_mm: Option<f64>,
    /// Overrides every sensor-width estimate. Aperture-Dataset default 36 mm.
    pub sensor_width_mm: Option<f64>,
    /// Crop factor for datasets without a 35 mm equivalent. Aperture default 1.0.
    pub crop_factor: Option<f64>,
    pub exif_json: Option<PathBuf>,
    /// Where converted depth rasters are written (BLB).
    pub aux_dir: Option<PathBuf>,
    pub reference_width_px: u32,
    pub relax_factor: f64,
    pub probe_fraction: f64,
    pub pairing_window_s: f64,
    /// Relative focus-distance tolerance for DPDD grouping.
    pub focus_tolerance: f64,
    pub blb_fnumber_range: (f64, f64),
    /// Depth at normalized disparity 1 and 0, used when a manifest has none.
    pub blb_depth_range_m: (f64, f64),
}

impl Default for HarmonizeDefaults {
    fn default() -> Self {
        HarmonizeDefaults {
            focal_length_mm: None,
            sensor_width_mm: None,
            crop_factor: None,
            exif_json: None,
            aux_dir: None,
            reference_width_px: DEFAULT_REFERENCE_WIDTH_PX,
            relax_factor: DEFAULT_RELAX_FACTOR,
            probe_fraction: DEFAULT_PROBE_FRACTION,
            pairing_window_s: 60.0,
            focus_tolerance: 0.05,
            blb_fnumber_range: (1.4, 16.0),
            blb_depth_range_m: (0.5, 20.0),
        }
    }
}

const APERTURE_FOCAL_MM: f64 = 50.0;
const APERTURE_CROP: f64 = 1.0;
const APERTURE_CAMERA: &str = "Canon EOS (assumed)";

/// One training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnsRow {
    pub schema: String,
    pub dataset: DatasetKind,
    pub input: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    pub width: u32,
    pub height: u32,
    pub camera_anns: CameraAnns,
}

/// Final JSONL record with item counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonizeTrailer {
    pub schema: String,
    pub dataset: DatasetKind,
    pub trailer: bool,
    pub rows: usize,
    /// Items dropped because they could not be parsed or evaluated.
    pub skipped: usize,
    /// DPDD groups without two distinct apertures.
    pub unpaired: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizeOutput {
    pub rows: Vec<AnnsRow>,
    pub trailer: HarmonizeTrailer,
}

impl HarmonizeOutput {
    /// Rows then trailer, as JSON values ready for a JSONL sink.
    pub fn records(&self) -> Result<Vec<Value>> {
        let mut out = Vec::with_capacity(self.rows.len() + 1);
        for row in &self.rows {
            out.push(serde_json::to_value(row).map_err(|e| Error::Internal(e.to_string()))?);
        }
        out.push(serde_json::to_value(&self.trailer).map_err(|e| Error::Internal(e.to_string()))?);
        Ok(out)
    }

    /// Splits decoded JSONL records back into rows and the trailer.
    pub fn from_records(records: Vec<Value>) -> Result<Self> {
        let mut rows = Vec::new();
        let mut trailer = None;
        for (i, rec) in records.into_iter().enumerate() {
            let line = i + 1;
            if rec.get("trailer").and_then(Value::as_bool) == Some(true) {
                trailer = Some(serde_json::from_value(rec).map_err(|e| Error::Jsonl {
                    line,
                    reason: e.to_string(),
                })?);
            } else {
                rows.push(serde_json::from_value(rec).map_err(|e| Error::Jsonl {
                    line,
                    reason: e.to_string(),
                })?);
            }
        }
        let trailer = trailer.ok_or_else(|| Error::MissingField("trailer record".into()))?;
        Ok(HarmonizeOutput { rows, trailer })
    }
}

/// Converts one dataset into rows sorted by `(input, target)` plus a trailer.
pub fn harmonize_dataset(
    kind: DatasetKind,
    root: &Path,
    defaults: &HarmonizeDefaults,
) -> Result<HarmonizeOutput> {
    if !root.is_dir() {
        return Err(Error::invalid(
            "root",
            format!("{} is not a directory", root.display()),
        ));
    }
    let (mut rows, skipped, unpaired) = match kind {
        DatasetKind::Dpdd => dpdd(root, defaults)?,
        DatasetKind::Aperture => aperture(root, defaults)?,
        DatasetKind::Blb => blb(root, defaults)?,
    };
    rows.sort_by(|a, b| (&a.input, &a.target).cmp(&(&b.input, &b.target)));
    let trailer = HarmonizeTrailer {
        schema: ANNS_SCHEMA.to_string(),
        dataset: kind,
        trailer: true,
        rows: rows.len(),
        skipped,
        unpaired,
    };
    Ok(HarmonizeOutput { rows, trailer })
}

struct AnnsParts {
    aperture: f64,
    focal_length_mm: f64,
    focal_length_35mm: Option<f64>,
    sensor_width_mm: f64,
    focus_distance_m: f64,
    width: u32,
    source: AnnsSource,
    extra: BTreeMap<String, Value>,
}

fn finish_anns(p: AnnsParts, defaults: &HarmonizeDefaults) -> Result<CameraAnns> {
    let inputs = DofInputs {
        aperture: Some(p.aperture),
        focal_length_mm: Some(p.focal_length_mm),
        sensor_width_mm: Some(p.sensor_width_mm),
        focus_distance_m: Some(p.focus_distance_m),
    };
    let dof_cond = calc_dof_cond(&inputs, p.width, defaults.reference_width_px)?;
    let mut anns = CameraAnns {
        aperture: p.aperture,
        focal_length_mm: p.focal_length_mm,
        focal_length_35mm: p.focal_length_35mm,
        sensor_width_mm: p.sensor_width_mm,
        focus_distance_m: p.focus_distance_m,
        dof_cond,
        dof_cond_crop: dof_cond_crop(dof_cond, p.focal_length_mm, p.focal_length_35mm),
        foreground_clear: false,
        source: p.source,
        extra: p.extra,
    };
    anns.foreground_clear =
        foreground_clear_flag(&anns, defaults.relax_factor, defaults.probe_fraction)?;
    Ok(anns)
}

fn rel_string(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

// ---------------------------------------------------------------- DPDD

#[derive(Debug, Clone)]
struct Exposure {
    file: String,
    time: NaiveDateTime,
    f_number: f64,
    focal_mm: f64,
    focus_m: f64,
    exif: ExifRecord,
}

fn parse_exposure(
    exif: ExifRecord,
    defaults: &HarmonizeDefaults,
) -> std::result::Result<Exposure, String> {
    let file = exif.source_file().ok_or("no SourceFile")?;
    let time = exif
        .create_date()
        .ok_or_else(|| format!("{file}: no parseable CreateDate"))?;
    let f_number = exif
        .number("FNumber")
        .filter(|n| *n > 0.0)
        .ok_or_else(|| format!("{file}: no FNumber"))?;
    let focal_mm = exif
        .number("FocalLength")
        .or(defaults.focal_length_mm)
        .filter(|f| *f > 0.0)
        .ok_or_else(|| format!("{file}: no FocalLength"))?;
    let focus_m = exif
        .focus_distance_m()
        .filter(|d| d.is_finite() && *d > 0.0)
        .ok_or_else(|| format!("{file}: no finite focus distance"))?;
    Ok(Exposure {
        file,
        time,
        f_number,
        focal_mm,
        focus_m,
        exif,
    })
}

fn dpdd(root: &Path, defaults: &HarmonizeDefaults) -> Result<(Vec<AnnsRow>, usize, usize)> {
    let dump = defaults
        .exif_json
        .clone()
        .unwrap_or_else(|| root.join("exif.json"));
    if !dump.exists() {
        if sorted_entries(root)?.is_empty() {
            return Ok((Vec::new(), 0, 0));
        }
        return Err(Error::invalid(
            "exif_json",
            format!(
                "no tag dump at {}; pass one produced by `exiftool -j`",
                dump.display()
            ),
        ));
    }
    let mut skipped = 0;
    let mut exposures = Vec::new();
    for rec in read_exif_dump(&dump)? {
        match parse_exposure(rec, defaults) {
            Ok(e) => exposures.push(e),
            Err(reason) => {
                log::warn!("dpdd: skipping exposure: {reason}");
                skipped += 1;
            }
        }
    }
    exposures.sort_by(|a, b| (a.time, &a.file).cmp(&(b.time, &b.file)));

    let groups = group_exposures(&exposures, defaults);
    let mut rows = Vec::new();
    let mut unpaired = 0;
    for group in groups {
        let members: Vec<&Exposure> = group.iter().map(|&i| &exposures[i]).collect();
        let target = members
            .iter()
            .min_by(|a, b| a.f_number.total_cmp(&b.f_number).then(a.file.cmp(&b.file)));
        let source = members
            .iter()
            .max_by(|a, b| a.f_number.total_cmp(&b.f_number).then(b.file.cmp(&a.file)));
        let (Some(target), Some(source)) = (target, source) else {
            continue;
        };
        if target.f_number == source.f_number {
            unpaired += 1;
            continue;
        }
        match dpdd_row(root, source, target, defaults) {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!(
                    "dpdd: skipping pair {} -> {}: {e}",
                    source.file,
                    target.file
                );
                skipped += 1;
            }
        }
    }
    Ok((rows, skipped, unpaired))
}

/// Greedy grouping in time order: an exposure joins the first open group whose
/// first member is within the window and matches focal length exactly and
/// focus distance within tolerance.
fn group_exposures(exposures: &[Exposure], defaults: &HarmonizeDefaults) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, e) in exposures.iter().enumerate() {
        let slot = groups.iter().position(|g| {
            let head = &exposures[g[0]];
            let dt = (e.time - head.time).num_milliseconds() as f64 / 1000.0;
            dt <= defaults.pairing_window_s
                && e.focal_mm == head.focal_mm
                && (e.focus_m - head.focus_m).abs() <= defaults.focus_tolerance * head.focus_m
        });
        match slot {
            Some(g) => groups[g].push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

fn dpdd_row(
    root: &Path,
    source: &Exposure,
    target: &Exposure,
    defaults: &HarmonizeDefaults,
) -> Result<AnnsRow> {
    let exif = &target.exif;
    let (width, height) = match (exif.image_width(), exif.image_height()) {
        (Some(w), Some(h)) => (w, h),
        _ => image::image_dimensions(root.join(&target.file))
            .map_err(|e| Error::MissingField(format!("ImageWidth/ImageHeight ({e})")))?,
    };
    let (sensor, sensor_source) = match defaults.sensor_width_mm {
        Some(w) => (w, None),
        None => {
            let (w, s) = estimate_sensor_width(exif)?;
            (w, Some(s))
        }
    };
    let f35 = exif
        .number("FocalLengthIn35mmFormat")
        .filter(|v| *v > 0.0)
        .or_else(|| defaults.crop_factor.map(|c| c * target.focal_mm));
    let mut extra = BTreeMap::new();
    extra.insert(
        "sensor_width_source".into(),
        json!(sensor_source.map_or("override", sensor_source_name)),
    );
    if let Some(model) = exif.text("Model") {
        extra.insert("camera_model".into(), json!(model));
    }
    extra.insert("source_aperture".into(), json!(source.f_number));
    extra.insert(
        "create_date".into(),
        json!(target.time.format("%Y-%m-%dT%H:%M:%S").to_string()),
    );
    let source_kind = if sensor_source == Some(SensorWidthSource::ModelHeuristic) {
        AnnsSource::Heuristic
    } else {
        AnnsSource::Exif
    };
    let anns = finish_anns(
        AnnsParts {
            aperture: target.f_number,
            focal_length_mm: target.focal_mm,
            focal_length_35mm: f35,
            sensor_width_mm: sensor,
            focus_distance_m: target.focus_m,
            width,
            source: source_kind,
            extra,
        },
        defaults,
    )?;
    Ok(AnnsRow {
        schema: ANNS_SCHEMA.to_string(),
        dataset: DatasetKind::Dpdd,
        input: source.file.clone(),
        target: target.file.clone(),
        depth: None,
        width,
        height,
        camera_anns: anns,
    })
}

fn sensor_source_name(s: SensorWidthSource) -> &'static str {
    match s {
        SensorWidthSource::FocalPlaneResolution => "focal-plane-resolution",
        SensorWidthSource::CropFactor => "crop-factor",
        SensorWidthSource::ModelHeuristic => "model-heuristic",
    }
}

// ---------------------------------------------------------------- Aperture

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

fn aperture(root: &Path, defaults: &HarmonizeDefaults) -> Result<(Vec<AnnsRow>, usize, usize)> {
    let scenes: Vec<PathBuf> = sorted_entries(root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    let results: Vec<Result<Vec<AnnsRow>>> = scenes
        .par_iter()
        .map(|dir| aperture_scene(root, dir, defaults))
        .collect();
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (dir, res) in scenes.iter().zip(results) {
        match res {
            Ok(r) => rows.extend(r),
            Err(e) => {
                log::warn!("aperture: skipping {}: {e}", dir.display());
                skipped += 1;
            }
        }
    }
    Ok((rows, skipped, 0))
}

fn aperture_scene(root: &Path, dir: &Path, defaults: &HarmonizeDefaults) -> Result<Vec<AnnsRow>> {
    let missing = |name: &str| Error::MissingField(format!("{}/{name}", dir.display()));
    let source = find_image(dir, "f22").ok_or_else(|| missing("f22.png"))?;
    let depth_path = dir.join("depth.pfm");
    if !depth_path.is_file() {
        return Err(missing("depth.pfm"));
    }
    let sharp = read_image8(&source)?;
    let depth = read_pfm(&depth_path)?;
    let focus_m = focus_distance_from_depth(&depth, &sharp)?;

    let focal = defaults.focal_length_mm.unwrap_or(APERTURE_FOCAL_MM);
    let sensor = defaults.sensor_width_mm.unwrap_or(FULL_FRAME_WIDTH_MM);
    let crop = defaults.crop_factor.unwrap_or(APERTURE_CROP);

    let mut rows = Vec::new();
    for (stem, n) in [("f8", 8.0), ("f2", 2.0)] {
        let target = find_image(dir, stem).ok_or_else(|| missing(&format!("{stem}.png")))?;
        let (width, height) =
            image::image_dimensions(&target).map_err(|e| Error::decode(&target, e.to_string()))?;
        let mut extra = BTreeMap::new();
        extra.insert("camera_model".into(), json!(APERTURE_CAMERA));
        extra.insert("crop_factor".into(), json!(crop));
        let anns = finish_anns(
            AnnsParts {
                aperture: n,
                focal_length_mm: focal,
                focal_length_35mm: Some(focal * crop),
                sensor_width_mm: sensor,
                focus_distance_m: focus_m,
                width,
                source: AnnsSource::DepthMedian,
                extra,
            },
            defaults,
        )?;
        rows.push(AnnsRow {
            schema: ANNS_SCHEMA.to_string(),
            dataset: DatasetKind::Aperture,
            input: rel_string(root, &source),
            target: rel_string(root, &target),
            depth: Some(rel_string(root, &depth_path)),
            width,
            height,
            camera_anns: anns,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------- BLB

/// `info.json` of a BLB scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlbManifest {
    /// Sharp all-in-focus image, relative to the scene directory.
    pub image: String,
    /// 8-bit disparity image; 1 is nearest.
    pub disparity: String,
    pub focal_length: f64,
    #[serde(default = "default_unit")]
    pub focal_length_unit: String,
    pub sensor_width: f64,
    #[serde(default = "default_unit")]
    pub sensor_width_unit: String,
    pub width: u32,
    pub height: u32,
    /// Depth at normalized disparity 1 and 0, in meters.
    #[serde(default)]
    pub depth_range_m: Option<(f64, f64)>,
    pub renders: Vec<BlbRender>,
}

fn default_unit() -> String {
    "mm".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlbRender {
    pub path: String,
    pub focus_distance: f64,
    /// Renderer aperture setting normalized to `[0, 1]`.
    pub fstop: f64,
}

fn to_mm(value: f64, unit: &str, field: &'static str) -> Result<f64> {
    let scale = match unit {
        "mm" => 1.0,
        "cm" => 10.0,
        "m" => 1000.0,
        other => return Err(Error::invalid(field, format!("unknown unit `{other}`"))),
    };
    Ok(value * scale)
}

fn blb(root: &Path, defaults: &HarmonizeDefaults) -> Result<(Vec<AnnsRow>, usize, usize)> {
    let scenes: Vec<PathBuf> = sorted_entries(root)?
        .into_iter()
        .filter(|p| p.join("info.json").is_file())
        .collect();
    let mut rows = Vec::new();
    let mut skipped = 0;
    for dir in scenes {
        match blb_scene(root, &dir, defaults) {
            Ok((r, s)) => {
                rows.extend(r);
                skipped += s;
            }
            Err(e) => {
                log::warn!("blb: skipping {}: {e}", dir.display());
                skipped += 1;
            }
        }
    }
    Ok((rows, skipped, 0))
}

/// Inverse depth linear in normalized disparity between the far and near limits.
fn disparity_to_depth(disparity: &[f32], near_m: f64, far_m: f64) -> Vec<f32> {
    let (inv_far, inv_near) = (1.0 / far_m, 1.0 / near_m);
    disparity
        .iter()
        .map(|&d| (1.0 / (inv_far + d.clamp(0.0, 1.0) as f64 * (inv_near - inv_far))) as f32)
        .collect()
}

fn blb_scene(
    root: &Path,
    dir: &Path,
    defaults: &HarmonizeDefaults,
) -> Result<(Vec<AnnsRow>, usize)> {
    let info_path = dir.join("info.json");
    let text = std::fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
    let manifest: BlbManifest =
        serde_json::from_str(&text).map_err(|e| Error::decode(&info_path, e.to_string()))?;
    let focal = to_mm(
        manifest.focal_length,
        &manifest.focal_length_unit,
        "focal_length",
    )?;
    let sensor = match defaults.sensor_width_mm {
        Some(w) => w,
        None => to_mm(
            manifest.sensor_width,
            &manifest.sensor_width_unit,
            "sensor_width",
        )?,
    };
    let crop = FULL_FRAME_WIDTH_MM / sensor;
    let (near, far) = manifest.depth_range_m.unwrap_or(defaults.blb_depth_range_m);
    if !(near > 0.0 && far > near) {
        return Err(Error::invalid("depth_range_m", "need 0 < near < far"));
    }
    let scene_name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();

    let depth_rel = match &defaults.aux_dir {
        Some(aux) => {
            let disp_path = dir.join(&manifest.disparity);
            let disp = read_image8(&disp_path)?;
            let depth = FloatMap::new(
                disp.width(),
                disp.height(),
                disparity_to_depth(&disp.luminance(), near, far),
            )?;
            ensure_dir(aux)?;
            let out = aux.join(format!("{scene_name}_depth.pfm"));
            write_pfm(&depth, &out)?;
            Some(out.to_string_lossy().into_owned())
        }
        None => {
            log::info!("blb: no aux directory, depth conversion skipped for {scene_name}");
            None
        }
    };

    let input = rel_string(root, &dir.join(&manifest.image));
    let (nmin, nmax) = defaults.blb_fnumber_range;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for render in &manifest.renders {
        let target = dir.join(&render.path);
        let row = (|| -> Result<AnnsRow> {
            if !target.is_file() {
                return Err(Error::MissingField(format!("render {}", target.display())));
            }
            let n = fstop_to_fnumber(render.fstop, nmin, nmax)?;
            let s1 = render.focus_distance;
            let inputs = DofInputs {
                aperture: Some(n),
                focal_length_mm: Some(focal),
                sensor_width_mm: Some(sensor),
                focus_distance_m: Some(s1),
            };
            let native = calc_dof_cond(&inputs, manifest.width, manifest.width)?;
            let disp_focus = ((1.0 / s1 - 1.0 / far) / (1.0 / near - 1.0 / far)).clamp(0.0, 1.0);
            let mut extra = BTreeMap::new();
            extra.insert("dof-cond-native".into(), json!(native));
            extra.insert("fstop".into(), json!(render.fstop));
            extra.insert("fstop_field".into(), json!("renders[].fstop"));
            extra.insert("disp_focus".into(), json!(disp_focus));
            let anns = finish_anns(
                AnnsParts {
                    aperture: n,
                    focal_length_mm: focal,
                    focal_length_35mm: Some(focal * crop),
                    sensor_width_mm: sensor,
                    focus_distance_m: s1,
                    width: manifest.width,
                    source: AnnsSource::RendererManifest,
                    extra,
                },
                defaults,
            )?;
            Ok(AnnsRow {
                schema: ANNS_SCHEMA.to_string(),
                dataset: DatasetKind::Blb,
                input: input.clone(),
                target: rel_string(root, &target),
                depth: depth_rel.clone(),
                width: manifest.width,
                height: manifest.height,
                camera_anns: anns,
            })
        })();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => {
                log::warn!("blb: skipping render {}: {e}", target.display());
                skipped += 1;
            }
        }
    }
    Ok((rows, skipped))
}
