use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{orient, Point};

/// 3x3 projective map, normalized so that `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography<T> {
    m: [[T; 3]; 3],
}

impl<T: Scalar> Homography<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    /// Normalizes `m` by its bottom-right entry and checks invertibility.
    pub fn from_matrix(m: [[T; 3]; 3]) -> Result<Self> {
        let s = m[2][2];
        if !s.is_finite() || s.abs() <= T::singular_eps() {
            return Err(Error::degenerate(format!(
                "homography has h33 = {:?} and cannot be normalized",
                s
            )));
        }
        let mut n = m;
        for row in n.iter_mut() {
            for v in row.iter_mut() {
                *v = *v / s;
            }
        }
        n[2][2] = T::one();
        let h = Self { m: n };
        let det = h.determinant();
        if !det.is_finite() || det.abs() <= T::singular_eps() {
            return Err(Error::degenerate(format!("homography is singular (det {det:?})")));
        }
        Ok(h)
    }

    pub fn translation(dx: T, dy: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, dx], [z, o, dy], [z, z, o]],
        }
    }

    pub fn scaling(sx: T, sy: T) -> Result<Self> {
        let (o, z) = (T::one(), T::zero());
        Self::from_matrix([[sx, z, z], [z, sy, z], [z, z, o]])
    }

    #[inline]
    pub fn matrix(&self) -> &[[T; 3]; 3] {
        &self.m
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Maps a point, failing when it lands at infinity.
    #[inline]
    pub fn apply(&self, p: Point<T>) -> Result<Point<T>> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if !(w.abs() >= T::singular_eps()) {
            return Err(Error::PointAtInfinity(w.as_f64()));
        }
        Ok(Point::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        ))
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = self.determinant();
        if !det.is_finite() || det.abs() <= T::singular_eps() {
            return Err(Error::degenerate("homography is not invertible"));
        }
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Self::from_matrix(adj)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Self) -> Result<Self> {
        Self::from_matrix(mul3(&self.m, &first.m))
    }
}

/// Exact homography from four point correspondences (DLT with `h33 = 1`).
///
/// Both point sets are conditioned (centroid at the origin, mean distance
/// sqrt(2)) before the 8x8 system is solved with partial pivoting.
pub fn homography_from_correspondences<T: Scalar>(
    src: &[Point<T>; 4],
    dst: &[Point<T>; 4],
) -> Result<Homography<T>> {
    check_no_collinear_triple(src, "source")?;
    check_no_collinear_triple(dst, "destination")?;

    let (ts, src_n) = condition(src);
    let (td, dst_n) = condition(dst);

    let mut a = [[T::zero(); 9]; 8];
    for k in 0..4 {
        let (x, y) = (src_n[k].x, src_n[k].y);
        let (u, v) = (dst_n[k].x, dst_n[k].y);
        let (o, z) = (T::one(), T::zero());
        a[2 * k] = [x, y, o, z, z, z, -u * x, -u * y, u];
        a[2 * k + 1] = [z, z, z, x, y, o, -v * x, -v * y, v];
    }
    let h = solve8(a)?;
    let hn = Homography {
        m: [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], T::one()]],
    };
    // H = Td^-1 * Hn * Ts
    let td_inv = td.inverse()?;
    let prod = mul3(&td_inv.m, &mul3(&hn.m, &ts.m));
    Homography::from_matrix(prod)
}

fn mul3<T: Scalar>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn check_no_collinear_triple<T: Scalar>(p: &[Point<T>; 4], which: &str) -> Result<()> {
    if p.iter().any(|q| !q.x.is_finite() || !q.y.is_finite()) {
        return Err(Error::degenerate(format!("{which} points are not finite")));
    }
    let extent = p
        .iter()
        .flat_map(|a| p.iter().map(move |b| a.sub(*b).norm2()))
        .fold(T::zero(), T::max);
    let tol = T::singular_eps() * extent.max(T::min_positive_value());
    for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        if orient(p[i], p[j], p[k]).abs() <= tol {
            return Err(Error::degenerate(format!(
                "{which} points {i}, {j}, {k} are collinear"
            )));
        }
    }
    Ok(())
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn condition<T: Scalar>(p: &[Point<T>; 4]) -> (Homography<T>, [Point<T>; 4]) {
    let four = T::lit(4.0);
    let c = Point::new(
        p.iter().map(|q| q.x).sum::<T>() / four,
        p.iter().map(|q| q.y).sum::<T>() / four,
    );
    let mean_dist = p.iter().map(|q| q.dist(c)).sum::<T>() / four;
    let s = T::lit(std::f64::consts::SQRT_2) / mean_dist;
    let z = T::zero();
    let t = Homography {
        m: [[s, z, -s * c.x], [z, s, -s * c.y], [z, z, T::one()]],
    };
    let out = p.map(|q| q.sub(c).scale(s));
    (t, out)
}

/// Gaussian elimination with partial pivoting on an augmented 8x9 system.
fn solve8<T: Scalar>(mut a: [[T; 9]; 8]) -> Result<[T; 8]> {
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if !(a[pivot][col].abs() > T::singular_eps()) {
            return Err(Error::degenerate("correspondence system is singular"));
        }
        a.swap(col, pivot);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..9 {
                a[row][k] = a[row][k] - f * a[col][k];
            }
        }
    }
    let mut x = [T::zero(); 8];
    for row in (0..8).rev() {
        let s: T = (row + 1..8).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][8] - s) / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts(xy: [(f64, f64); 4]) -> [Point<f64>; 4] {
        xy.map(|(x, y)| Point::new(x, y))
    }

    const UNIT: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

    #[test]
    fn identity_from_equal_squares() {
        let h = homography_from_correspondences(&pts(UNIT), &pts(UNIT)).unwrap();
        let id = Homography::<f64>::identity();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(h.matrix()[i][j], id.matrix()[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn translation_recovered() {
        let dst = pts(UNIT.map(|(x, y)| (x + 5.0, y - 2.0)));
        let h = homography_from_correspondences(&pts(UNIT), &dst).unwrap();
        let expect = [[1.0, 0.0, 5.0], [0.0, 1.0, -2.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(h.matrix()[i][j], expect[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn apply_basics() {
        let id = Homography::<f64>::identity();
        assert_eq!(id.apply(Point::new(3.0, 7.0)).unwrap(), Point::new(3.0, 7.0));
        let s = Homography::scaling(2.0, 2.0).unwrap();
        assert_eq!(s.apply(Point::new(1.0, 1.0)).unwrap(), Point::new(2.0, 2.0));
    }

    #[test]
    fn point_at_infinity() {
        let h = Homography::from_matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(
            h.apply(Point::new(-1.0, 4.0)),
            Err(Error::PointAtInfinity(_))
        ));
    }

    #[test]
    fn collinear_inputs_rejected() {
        let bad = pts([(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 1.0)]);
        assert!(matches!(
            homography_from_correspondences(&bad, &pts(UNIT)),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(homography_from_correspondences(&pts(UNIT), &bad).is_err());
    }

    #[test]
    fn singular_matrix_rejected() {
        assert!(Homography::from_matrix([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(Homography::from_matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn f32_homography() {
        let src = UNIT.map(|(x, y)| Point::new(x as f32, y as f32));
        let dst = [(0.0f32, 0.0f32), (2.0, 0.0), (3.0, 2.0), (-1.0, 2.0)].map(|(x, y)| Point::new(x, y));
        let h = homography_from_correspondences(&src, &dst).unwrap();
        for k in 0..4 {
            let p = h.apply(src[k]).unwrap();
            assert!((p.x - dst[k].x).abs() < 1e-4 && (p.y - dst[k].y).abs() < 1e-4);
        }
    }
}
