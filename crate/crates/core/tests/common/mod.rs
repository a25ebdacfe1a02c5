//! Independent reference implementations and random instance generators
//! shared by the property suites and the acceptance runner.

#![allow(dead_code)]

use artwalk::compose::GroundTruthBox;
use artwalk::detect::Detection;
use artwalk::geometry::{Point, Polygon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- geometry

/// Convex quad, counterclockwise, corners well away from collinear.
pub fn random_convex_quad(rng: &mut ChaCha8Rng) -> [Point<f64>; 4] {
    loop {
        let c = Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let base: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut angles: Vec<f64> = (0..4)
            .map(|k| base + k as f64 * std::f64::consts::FRAC_PI_2 + rng.random_range(-0.5..0.5))
            .collect();
        angles.sort_by(f64::total_cmp);
        let pts: Vec<Point<f64>> = angles
            .iter()
            .map(|a| {
                let r = rng.random_range(5.0..40.0);
                Point::new(c.x + r * a.cos(), c.y + r * a.sin())
            })
            .collect();
        let ok = (0..4).all(|i| {
            let (a, b, d) = (pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]);
            let cross = (b.x - a.x) * (d.y - a.y) - (b.y - a.y) * (d.x - a.x);
            cross > 1.0
        });
        if ok {
            return [pts[0], pts[1], pts[2], pts[3]];
        }
    }
}

/// Star-shaped, hence simple, polygon with 3..=12 vertices.
pub fn random_simple_polygon(rng: &mut ChaCha8Rng) -> Polygon<f64> {
    loop {
        let n = rng.random_range(3..=12);
        let c = Point::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0));
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let gaps_ok = angles.windows(2).all(|w| w[1] - w[0] > 0.05)
            && angles[0] + std::f64::consts::TAU - angles[n - 1] > 0.05;
        // three or more vertices must not all sit in a half plane through c
        let spread = angles
            .windows(2)
            .map(|w| w[1] - w[0])
            .chain([angles[0] + std::f64::consts::TAU - angles[n - 1]])
            .all(|g| g < std::f64::consts::PI - 0.05);
        if !(gaps_ok && spread) {
            continue;
        }
        let verts = angles
            .iter()
            .map(|a| {
                let r = rng.random_range(10.0..60.0);
                Point::new(c.x + r * a.cos(), c.y + r * a.sin())
            })
            .collect();
        let poly = Polygon::new(verts).expect("distinct vertices");
        assert!(poly.is_simple());
        return poly;
    }
}

/// Inside-or-on test for a convex counterclockwise polygon, tolerance
/// relative to the edge length.
pub fn in_convex(corners: &[Point<f64>], p: Point<f64>, tol: f64) -> bool {
    let n = corners.len();
    (0..n).all(|i| {
        let (a, b) = (corners[i], corners[(i + 1) % n]);
        let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= -tol * len
    })
}

/// Hull vertices by brute force: a point is a hull vertex iff some directed
/// edge between two other points has every point on its left, with the
/// point as an endpoint and no other point strictly between the endpoints.
pub fn brute_hull_vertices(pts: &[Point<f64>]) -> Vec<Point<f64>> {
    let n = pts.len();
    let mut out: Vec<Point<f64>> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || pts[i] == pts[j] {
                continue;
            }
            let (a, b) = (pts[i], pts[j]);
            let left = (0..n).all(|k| {
                let c = pts[k];
                (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x) >= 0.0
            });
            if !left {
                continue;
            }
            // among collinear points on this edge only the extremes are vertices
            let t = |c: Point<f64>| (c.x - a.x) * (b.x - a.x) + (c.y - a.y) * (b.y - a.y);
            let len2 = t(b);
            let interior = (0..n).any(|k| {
                let c = pts[k];
                let on = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x) == 0.0;
                on && (t(c) < 0.0 || t(c) > len2)
            });
            if !interior && !out.contains(&a) {
                out.push(a);
            }
        }
    }
    out
}

// ---------------------------------------------------------------- metrics

pub fn gt(x: f64, y: f64, w: f64, h: f64) -> GroundTruthBox {
    GroundTruthBox::new(x, y, w, h).unwrap()
}

fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let ix = ((a.0 + a.2).min(b.0 + b.2) - a.0.max(b.0)).max(0.0);
    let iy = ((a.1 + a.3).min(b.1 + b.3) - a.1.max(b.1)).max(0.0);
    let inter = ix * iy;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.2 * a.3 + b.2 * b.3 - inter)
}

/// Small random instance; objectness drawn from a coarse grid so that ties
/// and the 0.3 boundary occur, boxes clustered so that matches occur.
pub fn random_instance(rng: &mut ChaCha8Rng, max_dets: usize, max_gts: usize) -> (Vec<Detection>, Vec<GroundTruthBox>) {
    let n_gt = rng.random_range(0..=max_gts);
    let gts: Vec<GroundTruthBox> = (0..n_gt)
        .map(|_| {
            gt(
                rng.random_range(0.0..12.0),
                rng.random_range(0.0..12.0),
                rng.random_range(2.0..8.0),
                rng.random_range(2.0..8.0),
            )
        })
        .collect();
    let n_det = rng.random_range(0..=max_dets);
    let dets = (0..n_det)
        .map(|_| {
            let obj = rng.random_range(0..=10) as f64 / 10.0;
            if !gts.is_empty() && rng.random_bool(0.7) {
                let g = gts[rng.random_range(0..gts.len())];
                Detection::new(
                    g.x + rng.random_range(-1.5..1.5),
                    g.y + rng.random_range(-1.5..1.5),
                    g.w * rng.random_range(0.7..1.3),
                    g.h * rng.random_range(0.7..1.3),
                    obj,
                )
            } else {
                Detection::new(
                    rng.random_range(0.0..12.0),
                    rng.random_range(0.0..12.0),
                    rng.random_range(2.0..8.0),
                    rng.random_range(2.0..8.0),
                    obj,
                )
            }
        })
        .collect();
    (dets, gts)
}

/// TP/FP/FN by enumerating every injective assignment of the included
/// detections to ground truths (or to nothing) and keeping the unique one
/// consistent with the greedy rule.
pub fn oracle_counts(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_min: f64,
    include: impl Fn(&Detection) -> bool,
) -> (usize, usize, usize) {
    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| include(&dets[i])).collect();
    order.sort_by(|&a, &b| dets[b].objectness.partial_cmp(&dets[a].objectness).unwrap().then(a.cmp(&b)));
    let ious: Vec<Vec<f64>> = order
        .iter()
        .map(|&d| {
            let db = (dets[d].x, dets[d].y, dets[d].w, dets[d].h);
            gts.iter().map(|g| iou(db, (g.x, g.y, g.w, g.h))).collect()
        })
        .collect();

    let mut consistent: Vec<Vec<Option<usize>>> = Vec::new();
    let mut current = Vec::new();
    enumerate(order.len(), gts.len(), &mut current, &mut |assign| {
        if greedy_consistent(assign, &ious, iou_min) {
            consistent.push(assign.to_vec());
        }
    });
    assert_eq!(consistent.len(), 1, "greedy assignment must be unique");
    let tp = consistent[0].iter().filter(|a| a.is_some()).count();
    (tp, order.len() - tp, gts.len() - tp)
}

fn enumerate(n: usize, m: usize, current: &mut Vec<Option<usize>>, visit: &mut impl FnMut(&[Option<usize>])) {
    if current.len() == n {
        visit(current);
        return;
    }
    current.push(None);
    enumerate(n, m, current, visit);
    current.pop();
    for g in 0..m {
        if current.contains(&Some(g)) {
            continue;
        }
        current.push(Some(g));
        enumerate(n, m, current, visit);
        current.pop();
    }
}

/// Each detection, in visit order, holds the free ground truth of highest
/// IoU (lowest index on ties) when that IoU clears `iou_min`, else nothing.
fn greedy_consistent(assign: &[Option<usize>], ious: &[Vec<f64>], iou_min: f64) -> bool {
    for (k, a) in assign.iter().enumerate() {
        let taken: Vec<usize> = assign[..k].iter().flatten().copied().collect();
        let free: Vec<usize> = (0..ious[k].len()).filter(|g| !taken.contains(g)).collect();
        let best = free
            .iter()
            .copied()
            .fold(None::<usize>, |b, g| match b {
                Some(bg) if ious[k][bg] >= ious[k][g] => Some(bg),
                _ => Some(g),
            })
            .filter(|&g| ious[k][g] > iou_min);
        if *a != best {
            return false;
        }
    }
    true
}

/// (recall, precision, threshold) at every distinct objectness, highest first.
pub fn oracle_curve(dets: &[Detection], gts: &[GroundTruthBox], iou_min: f64) -> Vec<(f64, f64, f64)> {
    let mut thresholds: Vec<f64> = dets.iter().map(|d| d.objectness).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| {
            let (tp, fp, _) = oracle_counts(dets, gts, iou_min, |d| d.objectness >= t);
            let recall = if gts.is_empty() { 0.0 } else { tp as f64 / gts.len() as f64 };
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            (recall, precision, t)
        })
        .collect()
}

/// Area under the precision envelope by summing it over a uniform recall
/// grid. `cells` must make every attainable recall a grid node.
pub fn dense_grid_ap(curve: &[(f64, f64, f64)], cells: usize) -> f64 {
    let step = 1.0 / cells as f64;
    (1..=cells)
        .map(|i| {
            let r = i as f64 / cells as f64;
            curve
                .iter()
                .filter(|p| p.0 >= r)
                .map(|p| p.1)
                .fold(0.0, f64::max)
                * step
        })
        .sum()
}

/// (f1, precision, recall, threshold) by exhaustive sweep.
pub fn oracle_max_f1(curve: &[(f64, f64, f64)]) -> (f64, f64, f64, f64) {
    let mut best = (0.0, 0.0, 0.0, 1.0);
    let mut found = false;
    for &(r, p, t) in curve {
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        if !found || f1 > best.0 || (f1 == best.0 && t > best.3) {
            best = (f1, p, r, t);
            found = true;
        }
    }
    best
}

pub fn oracle_fdr(dets: &[Detection], gts: &[GroundTruthBox]) -> f64 {
    let (tp, fp, _) = oracle_counts(dets, gts, 0.5, |d| d.objectness > 0.3);
    if tp + fp == 0 {
        0.0
    } else {
        fp as f64 / (tp + fp) as f64
    }
}

/// Grid fine enough (below 1e-4) to hold k/n exactly for n <= 4.
pub const AP_GRID_CELLS: usize = 12_000;

// ---------------------------------------------------------------- scenes

/// In-memory equivalent of loading a generated scene from disk.
pub fn loaded(s: &artwalk::scenegen::GeneratedScene) -> artwalk::compose::LoadedScene {
    artwalk::compose::LoadedScene {
        background: s.background.clone(),
        regions: s.crosswalks.clone(),
        ground_truth: s.ground_truth.clone(),
        foregrounds: s.cutouts.clone(),
        composed: None,
    }
}
