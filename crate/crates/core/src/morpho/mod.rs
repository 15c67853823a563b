//! Concept measures from instance-segmented grayscale patches: nucleus area,
//! eccentricity and Euler number, plus GLCM texture (ASM, contrast,
//! correlation), averaged over the nuclei of a patch.

mod glcm;
mod patch;
mod region;

pub use glcm::{glcm, haralick, Glcm, Haralick};
pub use patch::{
    nucleus_features, patch_concept_measures, patch_concept_measures_partial, patch_nuclei,
    quantize, ExtractOptions, NucleusFeatures, AREA, ASM, CONCEPTS, CONTRAST, CORRELATION,
    ECCENTRICITY, EULER,
};
pub use region::{region_area, region_eccentricity, region_euler};
