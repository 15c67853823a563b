//! File formats shared between components: npy tensors, measure CSVs,
//! sample manifests and masked image patches.

mod images;
mod measures;
mod npy;

pub use images::{read_gray_png, write_gray_png16, Grid, MaskedImage, MaskedImageSet};
pub use measures::{
    parse_measures, read_manifest, read_measures, write_manifest, write_measures,
    write_measures_to, ConceptMeasures, MeasureRow, MeasureTable,
};
pub use npy::{
    read_npy, read_tensor, read_tensor_with, write_npy, write_tensor, Dtype, ReadOptions, Tensor,
};
