//! Gray-level co-occurrence matrices and the Haralick ASM, contrast and
//! correlation features.

use crate::error::{Error, Result};
use crate::tensorio::Grid;

/// Co-occurrence counts and probabilities of gray levels at a fixed offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    levels: usize,
    offset: (isize, isize),
    counts: Vec<u64>,
    probabilities: Vec<f64>,
}

impl Glcm {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn offset(&self) -> (isize, isize) {
        self.offset
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.levels + j]
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.probabilities[i * self.levels + j]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Builds a normalized matrix from raw counts (row-major `levels × levels`).
    pub fn from_counts(levels: usize, offset: (isize, isize), counts: Vec<u64>) -> Result<Self> {
        if counts.len() != levels * levels {
            return Err(Error::Dimension(format!(
                "{} counts for {levels} levels",
                counts.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::NoPixelPairs {
                dy: offset.0,
                dx: offset.1,
            });
        }
        let probabilities = counts.iter().map(|&n| n as f64 / total as f64).collect();
        Ok(Glcm {
            levels,
            offset,
            counts,
            probabilities,
        })
    }
}

/// Counts level pairs `(image[p], image[p + offset])` over all positions where
/// both `p` and `p + offset` lie inside `mask`. Symmetric mode also counts the
/// reversed pair.
pub fn glcm(
    image: &Grid<u32>,
    mask: &Grid<bool>,
    levels: usize,
    offset: (isize, isize),
    symmetric: bool,
) -> Result<Glcm> {
    if offset == (0, 0) {
        return Err(Error::InvalidArgument("GLCM offset must be nonzero".into()));
    }
    if !image.same_shape(mask) {
        return Err(Error::Dimension("image and mask shapes differ".into()));
    }
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be positive".into()));
    }
    let (dy, dx) = offset;
    let mut counts = vec![0u64; levels * levels];
    for r in 0..image.height() {
        for c in 0..image.width() {
            if !mask.get(r, c) {
                continue;
            }
            let (r2, c2) = (r as isize + dy, c as isize + dx);
            if mask.get_signed(r2, c2) != Some(true) {
                continue;
            }
            let i = image.get(r, c) as usize;
            let j = image.get(r2 as usize, c2 as usize) as usize;
            if i >= levels || j >= levels {
                return Err(Error::InvalidArgument(format!(
                    "gray level {} outside [0, {levels})",
                    i.max(j)
                )));
            }
            counts[i * levels + j] += 1;
            if symmetric {
                counts[j * levels + i] += 1;
            }
        }
    }
    Glcm::from_counts(levels, offset, counts)
}

/// The three Haralick texture features used as concepts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Haralick {
    pub asm: f64,
    pub contrast: f64,
    /// `None` when either marginal has zero variance.
    pub correlation: Option<f64>,
}

pub fn haralick(g: &Glcm) -> Haralick {
    let l = g.levels();
    let mut asm = 0.0;
    let mut contrast = 0.0;
    let mut px = vec![0.0; l];
    let mut py = vec![0.0; l];
    for (i, pxi) in px.iter_mut().enumerate() {
        for (j, pyj) in py.iter_mut().enumerate() {
            let p = g.p(i, j);
            asm += p * p;
            let d = i as f64 - j as f64;
            contrast += d * d * p;
            *pxi += p;
            *pyj += p;
        }
    }

    let moments = |m: &[f64]| {
        let mean: f64 = m.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
        let var: f64 = m
            .iter()
            .enumerate()
            .map(|(i, p)| (i as f64 - mean).powi(2) * p)
            .sum();
        (mean, var.sqrt())
    };
    let (mx, sx) = moments(&px);
    let (my, sy) = moments(&py);
    let spread = |m: &[f64]| m.iter().filter(|&&p| p > 0.0).count() > 1;

    let correlation = if spread(&px) && spread(&py) {
        let mut cov = 0.0;
        for i in 0..l {
            for j in 0..l {
                cov += (i as f64 - mx) * (j as f64 - my) * g.p(i, j);
            }
        }
        Some((cov / (sx * sy)).clamp(-1.0, 1.0))
    } else {
        None
    };

    Haralick {
        asm,
        contrast,
        correlation,
    }
}
