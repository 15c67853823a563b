//! Grayscale patches and instance masks (the inputs of concept extraction).

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorio::npy::{read_tensor, Tensor};

/// A 2-D row-major grid of values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height * width != data.len() {
            return Err(Error::Dimension(format!(
                "{height}x{width} grid needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Grid {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Builds a grid from `f(row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Grid {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    /// Bounds-checked lookup with signed coordinates.
    pub fn get_signed(&self, row: isize, col: isize) -> Option<T> {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            None
        } else {
            Some(self.get(row as usize, col as usize))
        }
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// One grayscale patch with its nuclei instance mask (0 = background, k > 0 = instance k).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedImage {
    pub sample_id: String,
    pub image: Grid<u32>,
    pub mask: Grid<u32>,
}

impl MaskedImage {
    pub fn new(sample_id: impl Into<String>, image: Grid<u32>, mask: Grid<u32>) -> Result<Self> {
        let sample_id = sample_id.into();
        if !image.same_shape(&mask) {
            return Err(Error::Dimension(format!(
                "patch '{sample_id}': image {}x{} vs mask {}x{}",
                image.height(),
                image.width(),
                mask.height(),
                mask.width()
            )));
        }
        Ok(MaskedImage {
            sample_id,
            image,
            mask,
        })
    }

    /// Distinct positive instance labels, ascending.
    pub fn labels(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self
            .mask
            .data()
            .iter()
            .copied()
            .filter(|&l| l > 0)
            .collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

/// A set of masked patches. `max_value` is the largest representable raw
/// intensity (255 for 8-bit data), used for gray-level quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedImageSet {
    pub entries: Vec<MaskedImage>,
    pub max_value: u32,
}

fn grid_from_plane(t: &Tensor, index: usize, what: &str) -> Result<Grid<u32>> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let plane = &t.data()[index * h * w..(index + 1) * h * w];
    let data = plane
        .iter()
        .map(|&v| {
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                Err(Error::InvalidArgument(format!(
                    "{what} value {v} is not a non-negative integer"
                )))
            } else {
                Ok(v as u32)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Grid::new(h, w, data)
}

impl MaskedImageSet {
    /// Loads `P×H×W` image and mask stacks; plane `p` belongs to `manifest[p]`.
    pub fn from_npy(
        images: impl AsRef<Path>,
        masks: impl AsRef<Path>,
        manifest: &[String],
        max_value: u32,
    ) -> Result<Self> {
        let images = read_tensor(images)?;
        let masks = read_tensor(masks)?;
        Self::from_tensors(&images, &masks, manifest, max_value)
    }

    pub fn from_tensors(
        images: &Tensor,
        masks: &Tensor,
        manifest: &[String],
        max_value: u32,
    ) -> Result<Self> {
        if images.shape().len() != 3 || images.shape() != masks.shape() {
            return Err(Error::Dimension(format!(
                "image stack {:?} and mask stack {:?} must both be P×H×W",
                images.shape(),
                masks.shape()
            )));
        }
        if images.shape()[0] != manifest.len() {
            return Err(Error::Misaligned(format!(
                "{} patches but {} manifest ids",
                images.shape()[0],
                manifest.len()
            )));
        }
        let entries = manifest
            .iter()
            .enumerate()
            .map(|(p, id)| {
                let image = grid_from_plane(images, p, "image")?;
                if let Some(&v) = image.data().iter().find(|&&v| v > max_value) {
                    return Err(Error::InvalidArgument(format!(
                        "patch '{id}': intensity {v} exceeds max value {max_value}"
                    )));
                }
                MaskedImage::new(id.clone(), image, grid_from_plane(masks, p, "mask")?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MaskedImageSet { entries, max_value })
    }

    /// Loads `<dir>/<sample_id>.png` pairs of grayscale 8- or 16-bit PNGs.
    /// `max_value` is taken from the image bit depth.
    pub fn from_png_dirs(
        image_dir: impl AsRef<Path>,
        mask_dir: impl AsRef<Path>,
        manifest: &[String],
    ) -> Result<Self> {
        let mut max_value = 0;
        let mut entries = Vec::with_capacity(manifest.len());
        for id in manifest {
            let (image, depth) = read_gray_png(image_dir.as_ref().join(format!("{id}.png")))?;
            let (mask, _) = read_gray_png(mask_dir.as_ref().join(format!("{id}.png")))?;
            max_value = max_value.max((1u32 << depth) - 1);
            entries.push(MaskedImage::new(id.clone(), image, mask)?);
        }
        Ok(MaskedImageSet { entries, max_value })
    }
}

/// Decodes a grayscale PNG, returning the pixels and the bit depth (8 or 16).
pub fn read_gray_png(path: impl AsRef<Path>) -> Result<(Grid<u32>, u32)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Image(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::Image(format!(
            "{}: expected grayscale, found {:?}",
            path.display(),
            info.color_type
        )));
    }
    let (h, w) = (info.height as usize, info.width as usize);
    let (data, depth) = match info.bit_depth {
        png::BitDepth::Eight => (
            (0..h)
                .flat_map(|r| buf[r * info.line_size..r * info.line_size + w].to_vec())
                .map(u32::from)
                .collect(),
            8,
        ),
        png::BitDepth::Sixteen => (
            (0..h)
                .flat_map(|r| {
                    let row = &buf[r * info.line_size..r * info.line_size + 2 * w];
                    row.chunks_exact(2)
                        .map(|b| u32::from(u16::from_be_bytes([b[0], b[1]])))
                        .collect::<Vec<_>>()
                })
                .collect(),
            16,
        ),
        other => {
            return Err(Error::Image(format!(
                "{}: unsupported bit depth {other:?}",
                path.display()
            )))
        }
    };
    Ok((Grid::new(h, w, data)?, depth))
}

/// Encodes a 16-bit grayscale PNG.
pub fn write_gray_png16(grid: &Grid<u32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        std::io::BufWriter::new(file),
        grid.width() as u32,
        grid.height() as u32,
    );
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Image(e.to_string()))?;
    let bytes: Vec<u8> = grid
        .data()
        .iter()
        .flat_map(|&v| (v.min(u16::MAX as u32) as u16).to_be_bytes())
        .collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Image(e.to_string()))
}
