use artwalk::raster::{load_image, save_image, BinaryMask, Raster};
use artwalk::Raster64;
use proptest::prelude::*;

fn raster(w: usize, h: usize, c: usize) -> impl Strategy<Value = Raster64> {
    prop::collection::vec(0.0..=1.0f64, w * h * c).prop_map(move |d| Raster::new(w, h, c, d).unwrap())
}

fn sized() -> impl Strategy<Value = Raster64> {
    (1usize..9, 1usize..9, prop::sample::select(vec![3usize, 4])).prop_flat_map(|(w, h, c)| raster(w, h, c))
}

fn quantized() -> impl Strategy<Value = Raster64> {
    (1usize..12, 1usize..12, prop::sample::select(vec![3usize, 4])).prop_flat_map(|(w, h, c)| {
        prop::collection::vec(0u8..=255, w * h * c)
            .prop_map(move |b| Raster::new(w, h, c, b.iter().map(|&v| v as f64 / 255.0).collect()).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bilinear_exact_on_grid(r in sized()) {
        for y in 0..r.height() {
            for x in 0..r.width() {
                let s = r.sample_bilinear(x as f64, y as f64).unwrap();
                prop_assert_eq!(&s[..r.channels()], r.pixel(x, y));
            }
        }
    }

    #[test]
    fn bilinear_within_neighbours(r in (2usize..9, 2usize..9).prop_flat_map(|(w, h)| raster(w, h, 3)), fx in 0.0..1.0f64, fy in 0.0..1.0f64) {
        let x = fx * (r.width() - 1) as f64;
        let y = fy * (r.height() - 1) as f64;
        let s = r.sample_bilinear(x, y).unwrap();
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(r.width() - 1), (y0 + 1).min(r.height() - 1));
        for c in 0..3 {
            let n = [r.pixel(x0, y0)[c], r.pixel(x1, y0)[c], r.pixel(x0, y1)[c], r.pixel(x1, y1)[c]];
            let lo = n.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = n.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s[c] >= lo - 1e-12 && s[c] <= hi + 1e-12);
        }
    }

    #[test]
    fn png_round_trip_identity(r in quantized()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        save_image(&r, &p).unwrap();
        let back: Raster64 = load_image(&p).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn ppm_round_trip_identity(r in quantized()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ppm");
        let rgb = r.to_rgb();
        save_image(&rgb, &p).unwrap();
        let back: Raster64 = load_image(&p).unwrap();
        prop_assert_eq!(back, rgb);
    }

    #[test]
    fn mask_png_round_trip(w in 1usize..20, h in 1usize..20, bits in prop::collection::vec(any::<bool>(), 400)) {
        let m = BinaryMask::from_bits(w, h, bits[..w * h].to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        m.save_png(&p).unwrap();
        prop_assert_eq!(BinaryMask::load_png(&p).unwrap(), m);
    }
}

#[test]
fn bilinear_examples() {
    let r = Raster::from_fn(4, 5, 3, |x, y, px| px.fill((x * 10 + y) as f64 / 100.0)).unwrap();
    assert_eq!(r.sample_bilinear(2.0, 3.0).unwrap()[0], 0.23);
    let ramp = Raster::new(2, 1, 3, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    assert_eq!(ramp.sample_bilinear(0.5, 0.0).unwrap()[0], 0.5);
    assert!(r.sample_bilinear(-0.5, 0.0).is_none());
    assert!(r.sample_bilinear(3.0001, 0.0).is_none());
}

#[test]
fn unsupported_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.gif");
    std::fs::write(&p, b"GIF89a\x01\x00\x01\x00\x00\x00\x00;").unwrap();
    assert!(load_image::<f64>(&p).is_err());
    assert!(load_image::<f64>(dir.path().join("none.png")).is_err());
}

#[test]
fn single_precision_raster_loads() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.png");
    let r = Raster::new(2, 1, 3, vec![0.0, 0.5, 1.0, 51.0 / 255.0, 0.2, 0.4]).unwrap();
    save_image(&r, &p).unwrap();
    let f: Raster<f32> = load_image(&p).unwrap();
    assert_eq!(f.pixel(1, 0)[0], 51.0f32 / 255.0);
}
