mod common;

use artwalk::attack::Perturbation;
use artwalk::compose::{apply_perturbation, compose_scene, inject_art, ForegroundCutout, InjectOptions};
use artwalk::geometry::{Point, Polygon};
use artwalk::raster::{BinaryMask, Raster};
use artwalk::Raster64;
use common::*;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const W: usize = 96;
const H: usize = 72;

fn noise(r: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Raster64 {
    Raster::from_fn(w, h, c, |_, _, px| px.iter_mut().for_each(|v| *v = r.random())).unwrap()
}

/// Polygon scaled into the scene.
fn region(r: &mut ChaCha8Rng) -> Polygon<f64> {
    let p = random_simple_polygon(r);
    let s = r.random_range(0.15..0.35);
    let (ox, oy) = (r.random_range(-10.0..40.0), r.random_range(-10.0..30.0));
    Polygon::new(p.vertices().iter().map(|v| Point::new(ox + v.x * s, oy + v.y * s)).collect()).unwrap()
}

fn union_mask(regions: &[Polygon<f64>]) -> BinaryMask {
    regions
        .iter()
        .fold(BinaryMask::new(W, H), |m, p| m.union(&p.rasterize(W, H)))
}

/// Cutout with an opaque core, a soft rim and transparent corners.
fn cutout(r: &mut ChaCha8Rng) -> ForegroundCutout {
    let (w, h) = (r.random_range(3..12), r.random_range(3..16));
    let mut img = noise(r, w, h, 4);
    for y in 0..h {
        for x in 0..w {
            let edge = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            let a = if edge { [0.0, 0.5][(x + y) % 2] } else { 1.0 };
            let mut px = img.pixel(x, y).to_vec();
            px[3] = a;
            img.set_pixel(x, y, &px);
        }
    }
    let offset = (r.random_range(0..(W - w) as i64), r.random_range(0..(H - h) as i64));
    ForegroundCutout { image: img, offset }
}

fn opts(r: &mut ChaCha8Rng) -> InjectOptions {
    InjectOptions {
        blend: [1.0, 0.6][r.random_range(0..2)],
        orientation: r.random_range(-2..4),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn injection_confined_to_regions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bg = noise(&mut r, W, H, 3);
        let regions: Vec<_> = (0..r.random_range(1..4)).map(|_| region(&mut r)).collect();
        let (aw, ah) = (r.random_range(2..40), r.random_range(2..20));
        let art = noise(&mut r, aw, ah, 3);
        let o = opts(&mut r);
        let out = inject_art(&bg, &regions, &art, &o).unwrap();
        let mask = union_mask(&regions);
        for y in 0..H {
            for x in 0..W {
                if !mask.get(x, y) {
                    prop_assert_eq!(out.image.pixel(x, y), bg.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn opaque_foregrounds_survive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bg = noise(&mut r, W, H, 3);
        let regions: Vec<_> = (0..2).map(|_| region(&mut r)).collect();
        let cutouts: Vec<_> = (0..r.random_range(1..4)).map(|_| cutout(&mut r)).collect();
        let art = noise(&mut r, 30, 10, 3);
        let o = opts(&mut r);
        let out = compose_scene(&bg, &regions, Some(&art), &cutouts, &o).unwrap();
        // only the last cutout covering a pixel decides it
        for y in 0..H {
            for x in 0..W {
                let top = cutouts.iter().rev().find(|c| {
                    let (ox, oy) = (c.offset.0 as usize, c.offset.1 as usize);
                    x >= ox && y >= oy && x < ox + c.image.width() && y < oy + c.image.height()
                        && c.image.alpha(x - ox, y - oy) > 0.0
                });
                if let Some(c) = top {
                    let px = c.image.pixel(x - c.offset.0 as usize, y - c.offset.1 as usize);
                    if px[3] == 1.0 {
                        prop_assert_eq!(out.image.pixel(x, y), &px[..3]);
                    }
                }
            }
        }
        let again = compose_scene(&bg, &regions, Some(&art), &cutouts, &o).unwrap();
        prop_assert_eq!(again.image, out.image);
    }

    #[test]
    fn disjoint_regions_commute(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bg = noise(&mut r, W, H, 3);
        let a = region(&mut r);
        let b = region(&mut r);
        let (ma, mb) = (a.rasterize(W, H), b.rasterize(W, H));
        prop_assume!(ma.bits().iter().zip(mb.bits()).all(|(p, q)| !(*p && *q)));
        let art = noise(&mut r, 16, 8, 3);
        let o = InjectOptions::default();
        let both = inject_art(&bg, &[a.clone(), b.clone()], &art, &o).unwrap().image;
        let ab = inject_art(&inject_art(&bg, std::slice::from_ref(&a), &art, &o).unwrap().image, std::slice::from_ref(&b), &art, &o).unwrap().image;
        let ba = inject_art(&inject_art(&bg, &[b], &art, &o).unwrap().image, &[a], &art, &o).unwrap().image;
        prop_assert_eq!(&both, &ab);
        prop_assert_eq!(&both, &ba);
    }

    #[test]
    fn perturbation_elementwise(seed in any::<u64>(), eps in 0.001..1.0f64) {
        let mut r = rng(seed);
        let (w, h) = (r.random_range(1..10), r.random_range(1..10));
        let art = noise(&mut r, w, h, 3);
        let values: Vec<f64> = (0..w * h * 3).map(|_| r.random_range(-eps..=eps)).collect();
        let d = Perturbation::from_values(w, h, 3, values.clone(), eps, None).unwrap();
        let out = apply_perturbation(&art, &d).unwrap();
        for (i, v) in out.data().iter().enumerate() {
            let want = art.data()[i] + values[i];
            let want = if want < 0.0 { 0.0 } else if want > 1.0 { 1.0 } else { want };
            prop_assert_eq!(*v, want);
            prop_assert!((0.0..=1.0).contains(v));
        }
    }
}

#[test]
fn cutout_over_art_two_layer_oracle() {
    let mut r = rng(5);
    let bg = noise(&mut r, W, H, 3);
    let regions = vec![Polygon::from_xy(&[[10.0, 10.0], [80.0, 12.0], [78.0, 60.0], [12.0, 58.0]]).unwrap()];
    let art = noise(&mut r, 20, 10, 3);
    let mut c = cutout(&mut r);
    c.offset = (30, 25);
    let o = InjectOptions::default();
    let layer = inject_art(&bg, &regions, &art, &o).unwrap().image;
    let out = compose_scene(&bg, &regions, Some(&art), std::slice::from_ref(&c), &o).unwrap().image;
    for y in 0..H {
        for x in 0..W {
            let under = layer.pixel(x, y);
            let inside = x >= 30 && y >= 25 && x < 30 + c.image.width() && y < 25 + c.image.height();
            let want: Vec<f64> = if inside {
                let px = c.image.pixel(x - 30, y - 25);
                let a = px[3];
                (0..3).map(|k| if a >= 1.0 { px[k] } else if a > 0.0 { px[k] * a + under[k] * (1.0 - a) } else { under[k] }).collect()
            } else {
                under.to_vec()
            };
            assert_eq!(out.pixel(x, y), &want[..]);
        }
    }
}

#[test]
fn no_art_no_foregrounds_is_background() {
    let mut r = rng(6);
    let bg = noise(&mut r, W, H, 3);
    let regions = vec![region(&mut r)];
    let out = compose_scene(&bg, &regions, None, &[], &InjectOptions::default()).unwrap();
    assert_eq!(out.image, bg);
}

#[test]
fn out_of_bounds_cutout_named() {
    let mut r = rng(7);
    let bg = noise(&mut r, W, H, 3);
    let ok = cutout(&mut r);
    let mut bad = cutout(&mut r);
    bad.offset = (W as i64 - 1, 0);
    let err = compose_scene(&bg, &[], None, &[ok, bad], &InjectOptions::default()).unwrap_err();
    assert!(err.to_string().contains('1'), "{err}");
}

#[test]
fn perturbation_examples() {
    let art = Raster::solid(2, 2, &[0.95, 0.5, 0.0]).unwrap();
    let zero = Perturbation::zeros(2, 2, 3, 0.1);
    assert_eq!(apply_perturbation(&art, &zero).unwrap(), art);
    let up = Perturbation::from_values(2, 2, 3, vec![0.1; 12], 0.1, None).unwrap();
    assert_eq!(apply_perturbation(&art, &up).unwrap().pixel(0, 0)[0], 1.0);
    let wrong = Perturbation::zeros(3, 2, 3, 0.1);
    assert!(apply_perturbation(&art, &wrong).is_err());
}
