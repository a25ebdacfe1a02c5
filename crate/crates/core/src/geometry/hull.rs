use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{orient, Point, Polygon};

/// Counterclockwise convex hull (Andrew's monotone chain).
///
/// Points lying on a hull edge are dropped, so every returned vertex is a
/// strict corner.
pub fn convex_hull<T: Scalar>(points: &[Point<T>]) -> Result<Polygon<T>> {
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::degenerate("hull input has non-finite coordinates"));
    }
    let mut pts: Vec<Point<T>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
    });
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::degenerate(format!(
            "hull needs 3 distinct points, got {}",
            pts.len()
        )));
    }

    let mut hull: Vec<Point<T>> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero()
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    if hull.len() < 3 {
        return Err(Error::degenerate("all points are collinear"));
    }
    Polygon::new(hull)
}
