//! Per-nucleus features and their per-patch averages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morpho::glcm::{glcm, haralick};
use crate::morpho::region::{region_area, region_eccentricity, region_euler};
use crate::tensorio::{Grid, MaskedImage};

pub const AREA: &str = "area";
pub const ECCENTRICITY: &str = "eccentricity";
pub const EULER: &str = "euler";
pub const ASM: &str = "asm";
pub const CONTRAST: &str = "contrast";
pub const CORRELATION: &str = "correlation";

/// The six concept names, in report order.
pub const CONCEPTS: [&str; 6] = [CORRELATION, ASM, ECCENTRICITY, EULER, AREA, CONTRAST];

/// Settings for concept extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractOptions {
    /// Number of gray levels after quantization.
    pub levels: usize,
    /// GLCM displacements `(dy, dx)`; texture features are averaged over them.
    pub offsets: Vec<(isize, isize)>,
    pub symmetric: bool,
    /// Drop nuclei with a pixel on the patch border.
    pub exclude_border: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            levels: 8,
            offsets: vec![(0, 1), (1, 0), (1, 1), (1, -1)],
            symmetric: true,
            exclude_border: false,
        }
    }
}

/// Features of one nucleus. Texture features are `None` when undefined
/// (no valid pixel pair, or zero marginal variance for correlation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NucleusFeatures {
    pub area: f64,
    pub eccentricity: f64,
    pub euler: i64,
    pub asm: Option<f64>,
    pub contrast: Option<f64>,
    pub correlation: Option<f64>,
}

/// Linear rescale of raw intensities in `[0, max_value]` onto `levels` bins.
pub fn quantize(image: &Grid<u32>, max_value: u32, levels: usize) -> Grid<u32> {
    let span = max_value as u64 + 1;
    image.map(|v| ((v.min(max_value) as u64 * levels as u64) / span) as u32)
}

/// Computes the features of the region `mask` in an already-quantized image.
pub fn nucleus_features(
    quantized: &Grid<u32>,
    mask: &Grid<bool>,
    opts: &ExtractOptions,
) -> Result<NucleusFeatures> {
    let area = region_area(mask)?;
    let eccentricity = region_eccentricity(mask)?;
    let euler = region_euler(mask);

    let mut asm = Vec::new();
    let mut contrast = Vec::new();
    let mut correlation = Vec::new();
    for &offset in &opts.offsets {
        let g = match glcm(quantized, mask, opts.levels, offset, opts.symmetric) {
            Ok(g) => g,
            Err(Error::NoPixelPairs { .. }) => continue,
            Err(e) => return Err(e),
        };
        let h = haralick(&g);
        asm.push(h.asm);
        contrast.push(h.contrast);
        if let Some(c) = h.correlation {
            correlation.push(c);
        }
    }
    Ok(NucleusFeatures {
        area,
        eccentricity,
        euler,
        asm: mean(&asm),
        contrast: mean(&contrast),
        correlation: mean(&correlation),
    })
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn touches_border(mask: &Grid<bool>) -> bool {
    let (h, w) = (mask.height(), mask.width());
    (0..w).any(|c| mask.get(0, c) || mask.get(h - 1, c))
        || (0..h).any(|r| mask.get(r, 0) || mask.get(r, w - 1))
}

/// Features of every nucleus instance in the patch, keyed by label.
pub fn patch_nuclei(
    patch: &MaskedImage,
    max_value: u32,
    opts: &ExtractOptions,
) -> Result<BTreeMap<u32, NucleusFeatures>> {
    let quantized = quantize(&patch.image, max_value, opts.levels);
    let mut out = BTreeMap::new();
    for label in patch.labels() {
        let mask = patch.mask.map(|l| l == label);
        if opts.exclude_border && touches_border(&mask) {
            continue;
        }
        out.insert(label, nucleus_features(&quantized, &mask, opts)?);
    }
    Ok(out)
}

/// Per-concept patch averages; a concept maps to `None` when no nucleus in
/// the patch has it defined.
pub fn patch_concept_measures_partial(
    patch: &MaskedImage,
    max_value: u32,
    opts: &ExtractOptions,
) -> Result<BTreeMap<String, Option<f64>>> {
    let nuclei = patch_nuclei(patch, max_value, opts)?;
    if nuclei.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let collect = |f: &dyn Fn(&NucleusFeatures) -> Option<f64>| {
        mean(&nuclei.values().filter_map(f).collect::<Vec<_>>())
    };
    let mut out = BTreeMap::new();
    out.insert(AREA.to_string(), collect(&|n| Some(n.area)));
    out.insert(ECCENTRICITY.to_string(), collect(&|n| Some(n.eccentricity)));
    out.insert(EULER.to_string(), collect(&|n| Some(n.euler as f64)));
    out.insert(ASM.to_string(), collect(&|n| n.asm));
    out.insert(CONTRAST.to_string(), collect(&|n| n.contrast));
    out.insert(CORRELATION.to_string(), collect(&|n| n.correlation));
    Ok(out)
}

/// Averages each concept over the nucleus instances of one patch.
///
/// Fails when the patch has no instance, or when some concept is undefined
/// for every instance.
pub fn patch_concept_measures(
    patch: &MaskedImage,
    max_value: u32,
    opts: &ExtractOptions,
) -> Result<BTreeMap<String, f64>> {
    patch_concept_measures_partial(patch, max_value, opts)?
        .into_iter()
        .map(|(k, v)| {
            v.map(|v| (k.clone(), v)).ok_or_else(|| {
                Error::Degenerate(format!(
                    "patch '{}': concept '{k}' undefined for every nucleus",
                    patch.sample_id
                ))
            })
        })
        .collect()
}
