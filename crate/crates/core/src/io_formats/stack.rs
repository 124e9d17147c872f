//! Bokeh stack directories.
//!
//! ```text
//! stack.json              manifest (schema lenssweep/stack/v1)
//! reference.png           all-in-focus image
//! frame_<i>_k<k>.png      one frame per strength, increasing k
//! disparity.pfm           optional ground-truth disparity
//! occlusion_edges.png     optional 0/255 edge mask
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ensure_dir, read_image8, read_json, read_pfm, write_json, write_pfm, write_png8};
use crate::error::{Error, Result};
use crate::raster::{Colorspace, Mask, RasterImage};
use crate::renderer::{BokehStack, Provenance};

pub const STACK_SCHEMA: &str = "lenssweep/stack/v1";
pub const STACK_MANIFEST: &str = "stack.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackFrame {
    pub k: f64,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub schema: String,
    pub reference: String,
    pub frames: Vec<StackFrame>,
    pub ks: Vec<f64>,
    pub focus_disparity: f64,
    pub defocus_scale: f64,
    pub gamma: f64,
    #[serde(default)]
    pub disparity: Option<String>,
    #[serde(default)]
    pub occlusion_edges: Option<String>,
    pub provenance: Provenance,
}

fn mask_image(mask: &Mask) -> Result<RasterImage> {
    let data = mask
        .data
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    RasterImage::new(mask.width, mask.height, 1, data, Colorspace::DisplayGamma)
}

/// Writes the stack and returns its manifest.
pub fn write_stack_dir(stack: &BokehStack, dir: &Path) -> Result<StackManifest> {
    stack.validate()?;
    ensure_dir(dir)?;
    let reference = "reference.png".to_string();
    write_png8(
        &stack.reference.to_display(stack.gamma),
        &dir.join(&reference),
    )?;
    let mut frames = Vec::with_capacity(stack.frames.len());
    for (i, (k, img)) in stack.frames.iter().enumerate() {
        let name = format!("frame_{i:02}_k{k:.3}.png");
        write_png8(&img.to_display(stack.gamma), &dir.join(&name))?;
        frames.push(StackFrame { k: *k, image: name });
    }
    let disparity = match &stack.disparity {
        Some(d) => {
            write_pfm(d, &dir.join("disparity.pfm"))?;
            Some("disparity.pfm".to_string())
        }
        None => None,
    };
    let occlusion_edges = match &stack.occlusion_edges {
        Some(m) => {
            write_png8(&mask_image(m)?, &dir.join("occlusion_edges.png"))?;
            Some("occlusion_edges.png".to_string())
        }
        None => None,
    };
    let manifest = StackManifest {
        schema: STACK_SCHEMA.to_string(),
        reference,
        ks: stack.ks(),
        frames,
        focus_disparity: stack.focus_disparity,
        defocus_scale: stack.defocus_scale,
        gamma: stack.gamma,
        disparity,
        occlusion_edges,
        provenance: stack.provenance.clone(),
    };
    write_json(&manifest, &dir.join(STACK_MANIFEST))?;
    Ok(manifest)
}

pub fn read_stack_dir(dir: &Path) -> Result<BokehStack> {
    let manifest_path = dir.join(STACK_MANIFEST);
    let manifest: StackManifest = read_json(&manifest_path)?;
    if manifest.schema != STACK_SCHEMA {
        return Err(Error::decode(
            &manifest_path,
            format!("unsupported schema `{}`", manifest.schema),
        ));
    }
    let reference = read_image8(&dir.join(&manifest.reference))?.to_rgb();
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for f in &manifest.frames {
        frames.push((f.k, read_image8(&dir.join(&f.image))?.to_rgb()));
    }
    let disparity = manifest
        .disparity
        .as_ref()
        .map(|p| read_pfm(&dir.join(p)))
        .transpose()?;
    let occlusion_edges = match &manifest.occlusion_edges {
        Some(p) => {
            let img = read_image8(&dir.join(p))?;
            Some(Mask {
                width: img.width(),
                height: img.height(),
                data: img.luminance().iter().map(|&v| v > 0.5).collect(),
            })
        }
        None => None,
    };
    let stack = BokehStack {
        reference,
        frames,
        focus_disparity: manifest.focus_disparity,
        defocus_scale: manifest.defocus_scale,
        gamma: manifest.gamma,
        disparity,
        occlusion_edges,
        provenance: manifest.provenance,
    };
    stack.validate()?;
    Ok(stack)
}
