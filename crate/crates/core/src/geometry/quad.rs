use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{convex_hull, orient, signed_area, Point, Polygon};

/// A convex quadrilateral with counterclockwise corners.
///
/// Corner 0 is the one that receives the art image's top-left corner; the
/// remaining corners follow the art's top-right, bottom-right and
/// bottom-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad<T> {
    corners: [Point<T>; 4],
}

impl<T: Scalar> Quad<T> {
    pub fn new(corners: [Point<T>; 4]) -> Result<Self> {
        let scale = corners
            .iter()
            .flat_map(|p| [p.x.abs(), p.y.abs()])
            .fold(T::one(), T::max);
        let tol = T::singular_eps() * scale * scale;
        for i in 0..4 {
            let turn = orient(corners[i], corners[(i + 1) % 4], corners[(i + 2) % 4]);
            if turn <= tol {
                return Err(Error::degenerate(format!(
                    "quad is not strictly convex and counterclockwise at corner {}",
                    (i + 1) % 4
                )));
            }
        }
        Ok(Self { corners })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]` with corner 0 at the top-left.
    pub fn rect(x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        Self::new([
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    #[inline]
    pub fn corners(&self) -> &[Point<T>; 4] {
        &self.corners
    }

    pub fn area(&self) -> T {
        signed_area(&self.corners)
    }

    /// Shifts the corner correspondence by `k` quarter turns.
    pub fn rotated(&self, k: i32) -> Self {
        let shift = k.rem_euclid(4) as usize;
        let mut corners = self.corners;
        corners.rotate_left(shift);
        Self { corners }
    }

    /// Inside-or-on test with an absolute tolerance on the edge distance.
    pub fn contains(&self, p: Point<T>, tol: T) -> bool {
        (0..4).all(|i| {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            let len = a.dist(b);
            orient(a, b, p) >= -tol * len
        })
    }
}

/// Tight convex quadrilateral around a polygon.
///
/// Takes the convex hull; four hull vertices are returned as-is. Larger hulls
/// are simplified by edge merging: each step removes the hull edge whose two
/// neighbouring edges, extended until they meet, add the least area, and
/// replaces its endpoints by that meeting point. Triangles, and hulls where no
/// merge is possible, fall back to the minimum-area enclosing rectangle.
pub fn min_enclosing_quad<T: Scalar>(polygon: &Polygon<T>) -> Result<Quad<T>> {
    let hull = convex_hull(polygon.vertices())?;
    let mut v: Vec<Point<T>> = hull.vertices().to_vec();

    let corners = match v.len() {
        3 => rectangle_corners(&v)?,
        _ => {
            let mut merged = true;
            while v.len() > 4 && merged {
                merged = merge_cheapest_edge(&mut v);
            }
            if v.len() == 4 {
                [v[0], v[1], v[2], v[3]]
            } else {
                rectangle_corners(hull.vertices())?
            }
        }
    };
    let quad = Quad::new(orient_corners(corners, hull.vertices()))
        .or_else(|_| Quad::new(orient_corners(rectangle_corners(hull.vertices())?, hull.vertices())))?;
    Ok(quad)
}

/// Removes one edge of a convex CCW polygon in place. Returns false when every
/// candidate has parallel or diverging neighbour edges.
fn merge_cheapest_edge<T: Scalar>(v: &mut Vec<Point<T>>) -> bool {
    let n = v.len();
    let mut best: Option<(T, usize, Point<T>)> = None;
    for i in 0..n {
        let prev = v[(i + n - 1) % n];
        let a = v[i];
        let b = v[(i + 1) % n];
        let next = v[(i + 2) % n];
        let d1 = a.sub(prev);
        let d2 = b.sub(next);
        let denom = d1.cross(d2);
        let scale = d1.norm2().sqrt() * d2.norm2().sqrt();
        if denom.abs() <= T::singular_eps() * scale {
            continue;
        }
        // a + t*d1 == b + s*d2
        let t = b.sub(a).cross(d2) / denom;
        let s = a.sub(b).cross(d1) / d2.cross(d1);
        if t <= T::zero() || s <= T::zero() {
            continue;
        }
        let p = a.add(d1.scale(t));
        // the new corner must sit outside edge a->b
        let added = -orient(a, b, p) / T::lit(2.0);
        if added < T::zero() {
            continue;
        }
        if best.is_none_or(|(area, _, _)| added < area) {
            best = Some((added, i, p));
        }
    }
    let Some((_, i, p)) = best else {
        return false;
    };
    let j = (i + 1) % n;
    if j == 0 {
        v[0] = p;
        v.pop();
    } else {
        v[i] = p;
        v.remove(j);
    }
    true
}

/// Minimum-area enclosing rectangle of a point set (rotating over hull edges).
pub fn min_area_rectangle<T: Scalar>(points: &[Point<T>]) -> Result<Quad<T>> {
    let hull = convex_hull(points)?;
    let corners = rectangle_corners(hull.vertices())?;
    Quad::new(orient_corners(corners, hull.vertices()))
}

fn rectangle_corners<T: Scalar>(hull: &[Point<T>]) -> Result<[Point<T>; 4]> {
    let n = hull.len();
    let mut best: Option<(T, [Point<T>; 4])> = None;
    for i in 0..n {
        let edge = hull[(i + 1) % n].sub(hull[i]);
        let len = edge.norm2().sqrt();
        if len <= T::zero() {
            continue;
        }
        let u = edge.scale(T::one() / len);
        let w = Point::new(-u.y, u.x);
        let (mut umin, mut umax, mut wmin, mut wmax) =
            (T::infinity(), T::neg_infinity(), T::infinity(), T::neg_infinity());
        for &p in hull {
            let pu = p.dot(u);
            let pw = p.dot(w);
            umin = umin.min(pu);
            umax = umax.max(pu);
            wmin = wmin.min(pw);
            wmax = wmax.max(pw);
        }
        let area = (umax - umin) * (wmax - wmin);
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let at = |s: T, t: T| u.scale(s).add(w.scale(t));
            best = Some((area, [at(umin, wmin), at(umax, wmin), at(umax, wmax), at(umin, wmax)]));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::degenerate("no enclosing rectangle for empty hull"))
}

/// Orders four corners counterclockwise, starting at the corner nearest the
/// hull vertex with the smallest `(y, x)`.
fn orient_corners<T: Scalar>(mut c: [Point<T>; 4], hull: &[Point<T>]) -> [Point<T>; 4] {
    if signed_area(&c) < T::zero() {
        c.reverse();
    }
    let anchor = hull
        .iter()
        .copied()
        .min_by(|a, b| a.y.partial_cmp(&b.y).unwrap().then(a.x.partial_cmp(&b.x).unwrap()))
        .expect("hull is non-empty");
    let start = (0..4)
        .min_by(|&i, &j| {
            c[i].sub(anchor)
                .norm2()
                .partial_cmp(&c[j].sub(anchor).norm2())
                .unwrap()
        })
        .unwrap_or(0);
    c.rotate_left(start);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(xy: &[[f64; 2]]) -> Polygon<f64> {
        Polygon::from_xy(xy).unwrap()
    }

    #[test]
    fn rectangle_is_fixed_point() {
        let p = poly(&[[2.0, 3.0], [10.0, 3.0], [10.0, 7.0], [2.0, 7.0]]);
        let q = min_enclosing_quad(&p).unwrap();
        assert_eq!(q, Quad::rect(2.0, 3.0, 10.0, 7.0).unwrap());
    }

    #[test]
    fn clockwise_rectangle_is_reoriented() {
        let p = poly(&[[2.0, 3.0], [2.0, 7.0], [10.0, 7.0], [10.0, 3.0]]);
        let q = min_enclosing_quad(&p).unwrap();
        assert_eq!(q.corners()[0], Point::new(2.0, 3.0));
        assert!(q.area() > 0.0);
    }

    #[test]
    fn triangle_gets_enclosing_rectangle() {
        let p = poly(&[[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]]);
        let q = min_enclosing_quad(&p).unwrap();
        assert!(q.area() >= 8.0);
        for v in p.vertices() {
            assert!(q.contains(*v, 1e-9));
        }
    }

    #[test]
    fn concave_polygon_is_contained() {
        let p = poly(&[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [5.0, 3.0], [0.0, 10.0]]);
        let q = min_enclosing_quad(&p).unwrap();
        for v in p.vertices() {
            assert!(q.contains(*v, 1e-9));
        }
        assert!((q.area() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn octagon_merges_down_to_four() {
        let p: Vec<[f64; 2]> = (0..8)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 8.0 + 0.1;
                [5.0 * a.cos(), 3.0 * a.sin()]
            })
            .collect();
        let p = poly(&p);
        let q = min_enclosing_quad(&p).unwrap();
        for v in p.vertices() {
            assert!(q.contains(*v, 1e-9));
        }
        assert!(q.area() < 60.0);
    }

    #[test]
    fn rotation_shifts_correspondence() {
        let q = Quad::rect(0.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(q.rotated(1).corners()[0], Point::new(2.0, 0.0));
        assert_eq!(q.rotated(-1).corners()[0], Point::new(0.0, 1.0));
        assert_eq!(q.rotated(4), q);
    }

    #[test]
    fn degenerate_quads_rejected() {
        let p = |x, y| Point::new(x, y);
        assert!(Quad::new([p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0), p(0.0, 1.0)]).is_err());
        assert!(Quad::new([p(0.0, 0.0), p(0.0, 1.0), p(1.0, 1.0), p(1.0, 0.0)]).is_err());
        assert!(Quad::new([p(0.0, 0.0), p(2.0, 2.0), p(2.0, 0.0), p(0.0, 2.0)]).is_err());
    }

    #[test]
    fn min_area_rectangle_of_rotated_square() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pts = [
            Point::new(0.0, -s),
            Point::new(s, 0.0),
            Point::new(0.0, s),
            Point::new(-s, 0.0),
        ];
        let q = min_area_rectangle(&pts).unwrap();
        assert!((q.area() - 1.0).abs() < 1e-12);
    }
}
