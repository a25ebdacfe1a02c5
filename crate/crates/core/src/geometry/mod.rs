//! Planar geometry for crosswalk regions: polygons, hulls, enclosing quads,
//! homographies and destination-driven warping.
//!
//! Coordinates are pixels with the origin at the top-left, x to the right and
//! y down. "Counterclockwise" means a positive shoelace area in these
//! coordinates.

mod homography;
mod hull;
mod quad;
mod warp;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::scalar::Scalar;

pub use homography::{homography_from_correspondences, Homography};
pub use hull::convex_hull;
pub use quad::{min_area_rectangle, min_enclosing_quad, Quad};
pub use warp::warp_into_region;
pub(crate) use warp::ArtBounds;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    #[inline]
    pub fn scale(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm2(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn dist(self, o: Self) -> T {
        self.sub(o).norm2().sqrt()
    }
}

impl<T: Scalar> From<(T, T)> for Point<T> {
    fn from((x, y): (T, T)) -> Self {
        Self::new(x, y)
    }
}

/// Twice the signed area of triangle `abc`; positive when `a -> b -> c` turns left.
#[inline]
pub fn orient<T: Scalar>(a: Point<T>, b: Point<T>, c: Point<T>) -> T {
    b.sub(a).cross(c.sub(a))
}

/// Signed shoelace area.
pub fn signed_area<T: Scalar>(pts: &[Point<T>]) -> T {
    let n = pts.len();
    let twice: T = (0..n).map(|i| pts[i].cross(pts[(i + 1) % n])).sum();
    twice / T::lit(2.0)
}

/// An ordered vertex list of at least three points.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon<T> {
    vertices: Vec<Point<T>>,
}

impl<T: Scalar> Polygon<T> {
    pub fn new(vertices: Vec<Point<T>>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::degenerate(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::degenerate("polygon has non-finite coordinates"));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::degenerate(format!(
                    "consecutive vertices {i} and {} coincide",
                    (i + 1) % n
                )));
            }
        }
        Ok(Self { vertices })
    }

    pub fn from_xy(coords: &[[T; 2]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point::new(c[0], c[1])).collect())
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn signed_area(&self) -> T {
        signed_area(&self.vertices)
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Point<T>, Point<T>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices[1..] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point<T>) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// True when no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                    return false;
                }
            }
        }
        true
    }

    /// Pixels whose centers fall inside the polygon.
    pub fn rasterize(&self, width: usize, height: usize) -> BinaryMask {
        let mut mask = BinaryMask::new(width, height);
        let v = &self.vertices;
        let n = v.len();
        let mut crossings: Vec<T> = Vec::with_capacity(n);
        for y in 0..height {
            let py = T::lit(y as f64);
            crossings.clear();
            let mut j = n - 1;
            for i in 0..n {
                let (a, b) = (v[i], v[j]);
                if (a.y > py) != (b.y > py) {
                    crossings.push(a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y));
                }
                j = i;
            }
            crossings.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            for pair in crossings.chunks_exact(2) {
                // centers x with pair[0] <= x < pair[1]
                let start = pair[0].ceil().max(T::zero());
                let end = pair[1].ceil().min(T::lit(width as f64));
                let (start, end) = (start.to_usize().unwrap_or(0), end.to_usize().unwrap_or(0));
                for x in start..end {
                    mask.set(x, y, true);
                }
            }
        }
        mask
    }
}

fn segments_intersect<T: Scalar>(a: Point<T>, b: Point<T>, c: Point<T>, d: Point<T>) -> bool {
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    let z = T::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    let on = |p: Point<T>, q: Point<T>, r: Point<T>, o: T| {
        o == z && r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    on(a, b, c, d1) || on(a, b, d, d2) || on(c, d, a, d3) || on(c, d, b, d4)
}

/// A named crosswalk region as stored in polygon mask files and manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    pub polygon: Vec<[f64; 2]>,
}

impl RegionSpec {
    pub fn to_polygon(&self) -> Result<Polygon<f64>> {
        Polygon::from_xy(&self.polygon)
            .map_err(|e| Error::degenerate(format!("region {:?}: {e}", self.name)))
    }

    pub fn from_polygon(name: impl Into<String>, polygon: &Polygon<f64>) -> Self {
        Self {
            name: name.into(),
            polygon: polygon.vertices().iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

/// `{"image_size": [w, h], "regions": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonMaskFile {
    pub image_size: [usize; 2],
    pub regions: Vec<RegionSpec>,
}

impl PolygonMaskFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn polygons(&self) -> Result<Vec<Polygon<f64>>> {
        self.regions.iter().map(RegionSpec::to_polygon).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon<f64> {
        Polygon::from_xy(&[[1.0, 1.0], [4.0, 1.0], [4.0, 3.0], [1.0, 3.0]]).unwrap()
    }

    #[test]
    fn polygon_validation() {
        assert!(Polygon::<f64>::from_xy(&[[0.0, 0.0], [1.0, 0.0]]).is_err());
        assert!(Polygon::<f64>::from_xy(&[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]).is_err());
        assert!(Polygon::<f64>::from_xy(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn rasterize_rectangle_uses_pixel_centers() {
        let m = square().rasterize(6, 5);
        for y in 0..5 {
            for x in 0..6 {
                let expect = (1..4).contains(&x) && (1..3).contains(&y);
                assert_eq!(m.get(x, y), expect, "({x},{y})");
            }
        }
    }

    #[test]
    fn rasterize_matches_contains() {
        let p = Polygon::from_xy(&[[2.3, 0.7], [9.1, 3.2], [6.0, 8.9], [4.4, 5.0], [0.5, 6.1]]).unwrap();
        let m = p.rasterize(12, 10);
        for y in 0..10 {
            for x in 0..12 {
                assert_eq!(m.get(x, y), p.contains(Point::new(x as f64, y as f64)));
            }
        }
    }

    #[test]
    fn simplicity() {
        assert!(square().is_simple());
        let bowtie = Polygon::from_xy(&[[0.0, 0.0], [2.0, 2.0], [2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert!(!bowtie.is_simple());
    }

    #[test]
    fn polygon_file_json_shape() {
        let text = r#"{"image_size": [640, 480], "regions": [{"name": "north", "polygon": [[0,0],[10,0],[10,5]]}]}"#;
        let f: PolygonMaskFile = serde_json::from_str(text).unwrap();
        assert_eq!(f.image_size, [640, 480]);
        assert_eq!(f.polygons().unwrap()[0].len(), 3);
    }
}
