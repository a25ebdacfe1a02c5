use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster};
use crate::scalar::Scalar;

use super::{Homography, Point};

/// Warps `art` into the scene frame through `h` (art -> scene).
///
/// Every set pixel of `region` is inverse-mapped into the art and sampled
/// bilinearly; pixels whose preimage falls outside the art, and all pixels
/// outside `region`, come out transparent. The output is RGBA of
/// `target_size`.
pub fn warp_into_region<T: Scalar>(
    art: &Raster<T>,
    h: &Homography<T>,
    target_size: (usize, usize),
    region: &BinaryMask,
) -> Result<Raster<T>> {
    let (w, hgt) = target_size;
    if (region.width(), region.height()) != (w, hgt) {
        return Err(Error::Shape(format!(
            "region mask is {}x{}, target is {w}x{hgt}",
            region.width(),
            region.height()
        )));
    }
    let inv = h.inverse()?;
    let bounds = ArtBounds::of(art);

    let mut out = vec![T::zero(); w * hgt * 4];
    for y in 0..hgt {
        for x in 0..w {
            if !region.get(x, y) {
                continue;
            }
            let Some(p) = bounds.preimage(&inv, x, y) else {
                continue;
            };
            if let Some(px) = art.sample_bilinear(p.x, p.y) {
                let i = (y * w + x) * 4;
                out[i..i + 4].copy_from_slice(&px);
            }
        }
    }
    Raster::new(w, hgt, 4, out)
}

/// Sampling domain of an art raster, `[0, w-1] x [0, h-1]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ArtBounds<T> {
    max_x: T,
    max_y: T,
}

impl<T: Scalar> ArtBounds<T> {
    pub(crate) fn of(art: &Raster<T>) -> Self {
        Self::new(art.width(), art.height())
    }

    pub(crate) fn new(width: usize, height: usize) -> Self {
        Self {
            max_x: T::lit(width.saturating_sub(1) as f64),
            max_y: T::lit(height.saturating_sub(1) as f64),
        }
    }

    /// Inverse-maps scene pixel `(x, y)` into the art. Returns `None` when the
    /// preimage is at infinity or outside the art. Round-off just past the
    /// border is snapped back so border pixels are not lost.
    #[inline]
    pub(crate) fn preimage(&self, inv: &Homography<T>, x: usize, y: usize) -> Option<Point<T>> {
        let p = inv.apply(Point::new(T::lit(x as f64), T::lit(y as f64))).ok()?;
        let slack = T::lit(1e-9).max(T::epsilon() * T::lit(1024.0));
        let px = snap(p.x, self.max_x, slack);
        let py = snap(p.y, self.max_y, slack);
        let inside = px >= T::zero() && py >= T::zero() && px <= self.max_x && py <= self.max_y;
        inside.then(|| Point::new(px, py))
    }
}

#[inline]
fn snap<T: Scalar>(v: T, max: T, slack: T) -> T {
    if v < T::zero() && v > -slack {
        T::zero()
    } else if v > max && v < max + slack {
        max
    } else {
        v
    }
}
