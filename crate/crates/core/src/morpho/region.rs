//! Shape measures of a single binary region.

use crate::error::{Error, Result};
use crate::tensorio::Grid;

/// Number of foreground pixels.
pub fn region_area(mask: &Grid<bool>) -> Result<f64> {
    match mask.data().iter().filter(|&&b| b).count() {
        0 => Err(Error::EmptyRegion),
        n => Ok(n as f64),
    }
}

/// Eccentricity of the ellipse with the same second central moments as the
/// foreground pixel coordinates: `sqrt(1 - λ2/λ1)`.
///
/// A single pixel yields 0 and exactly collinear pixels yield 1.
pub fn region_eccentricity(mask: &Grid<bool>) -> Result<f64> {
    // Integer raw moments so that the scaled central moments below are exact.
    let (mut n, mut sr, mut sc, mut srr, mut scc, mut src) =
        (0i128, 0i128, 0i128, 0i128, 0i128, 0i128);
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(r, c) {
                let (r, c) = (r as i128, c as i128);
                n += 1;
                sr += r;
                sc += c;
                srr += r * r;
                scc += c * c;
                src += r * c;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    // n² × covariance entries
    let a = n * srr - sr * sr;
    let c = n * scc - sc * sc;
    let b = n * src - sr * sc;
    let det = a * c - b * b;

    let (af, cf, bf) = (a as f64, c as f64, b as f64);
    let half_diff = (af - cf) / 2.0;
    let lambda1 = (af + cf) / 2.0 + (half_diff * half_diff + bf * bf).sqrt();
    if lambda1 <= 0.0 {
        return Ok(0.0);
    }
    let lambda2 = det as f64 / lambda1;
    Ok((1.0 - lambda2 / lambda1).clamp(0.0, 1.0).sqrt())
}

/// Euler number: connected components (8-connected) minus holes
/// (4-connected background components not reaching the border).
///
/// Computed by counting 2×2 bit-quad patterns over the zero-padded mask.
pub fn region_euler(mask: &Grid<bool>) -> i64 {
    let at = |r: isize, c: isize| mask.get_signed(r, c).unwrap_or(false);
    let (mut q1, mut q3, mut qd) = (0i64, 0i64, 0i64);
    for r in -1..mask.height() as isize {
        for c in -1..mask.width() as isize {
            let quad = [at(r, c), at(r, c + 1), at(r + 1, c), at(r + 1, c + 1)];
            match quad.iter().filter(|&&b| b).count() {
                1 => q1 += 1,
                3 => q3 += 1,
                2 if quad[0] == quad[3] => qd += 1,
                _ => {}
            }
        }
    }
    (q1 - q3 - 2 * qd) / 4
}
