//! Layered scene compositing: art warped into crosswalk regions, then
//! pedestrian cutouts restored on top.

mod manifest;

use serde::{Deserialize, Serialize};

use crate::attack::Perturbation;
use crate::error::{Error, Result};
use crate::geometry::{
    homography_from_correspondences, min_enclosing_quad, ArtBounds, Point, Polygon,
};
use crate::raster::{BinaryMask, Raster};
use crate::scalar::Scalar;
use crate::Raster64;

pub use manifest::{list_manifests, ForegroundSpec, GroundTruthBox, LoadedScene, SceneManifest};

/// An alpha-matted object placed at an integer pixel offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundCutout<T = f64> {
    pub image: Raster<T>,
    pub offset: (i64, i64),
}

impl<T: Scalar> ForegroundCutout<T> {
    pub fn fits(&self, width: usize, height: usize) -> bool {
        let (x, y) = self.offset;
        x >= 0
            && y >= 0
            && x as usize + self.image.width() <= width
            && y as usize + self.image.height() <= height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectOptions {
    /// Opacity of the art over the road; 1 overwrites region pixels.
    pub blend: f64,
    /// Quarter turns applied to the art-corner correspondence.
    pub orientation: i32,
}

impl Default for InjectOptions {
    fn default() -> Self {
        Self {
            blend: 1.0,
            orientation: 0,
        }
    }
}

/// Region that could not be painted, with the reason.
#[derive(Debug)]
pub struct RegionError {
    pub index: usize,
    pub error: Error,
}

/// Precomputed inverse mapping from scene pixels into art coordinates for a
/// fixed scene size, region list and art size.
///
/// Painting many art variants (as the perturbation search does) only has to
/// resample; the geometry is solved once.
#[derive(Debug)]
pub struct ArtPlacement<T = f64> {
    scene_size: (usize, usize),
    art_size: (usize, usize),
    blend: T,
    regions: Vec<std::result::Result<Vec<(usize, Point<T>)>, Error>>,
}

impl<T: Scalar> ArtPlacement<T> {
    pub fn new(
        scene_size: (usize, usize),
        regions: &[Polygon<T>],
        art_size: (usize, usize),
        opts: &InjectOptions,
    ) -> Self {
        let regions = regions
            .iter()
            .map(|poly| region_samples(scene_size, poly, art_size, opts.orientation))
            .collect();
        Self {
            scene_size,
            art_size,
            blend: T::lit(opts.blend.clamp(0.0, 1.0)),
            regions,
        }
    }

    pub fn art_size(&self) -> (usize, usize) {
        self.art_size
    }

    pub fn errors(&self) -> impl Iterator<Item = (usize, &Error)> {
        self.regions
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
    }

    /// Union of the pixels this placement may write.
    pub fn coverage(&self) -> BinaryMask {
        let (w, h) = self.scene_size;
        let mut m = BinaryMask::new(w, h);
        for samples in self.regions.iter().flatten() {
            for &(idx, _) in samples {
                m.set(idx % w, idx / w, true);
            }
        }
        m
    }

    /// Paints `art` into `scene` (RGB) region by region, in list order.
    pub fn paint(&self, scene: &mut Raster<T>, art: &Raster<T>) -> Result<()> {
        if (scene.width(), scene.height()) != self.scene_size {
            return Err(Error::Shape(format!(
                "scene is {}x{}, placement was built for {}x{}",
                scene.width(),
                scene.height(),
                self.scene_size.0,
                self.scene_size.1
            )));
        }
        if (art.width(), art.height()) != self.art_size {
            return Err(Error::Shape(format!(
                "art is {}x{}, placement was built for {}x{}",
                art.width(),
                art.height(),
                self.art_size.0,
                self.art_size.1
            )));
        }
        let w = self.scene_size.0;
        for samples in self.regions.iter().flatten() {
            for &(idx, p) in samples {
                let Some(px) = art.sample_bilinear(p.x, p.y) else {
                    continue;
                };
                let a = px[3] * self.blend;
                let (x, y) = (idx % w, idx / w);
                if a >= T::one() {
                    scene.set_pixel(x, y, &px[..3]);
                } else if a > T::zero() {
                    let under = scene.pixel(x, y);
                    let mixed = [
                        px[0] * a + under[0] * (T::one() - a),
                        px[1] * a + under[1] * (T::one() - a),
                        px[2] * a + under[2] * (T::one() - a),
                    ];
                    scene.set_pixel(x, y, &mixed);
                }
            }
        }
        Ok(())
    }
}

fn region_samples<T: Scalar>(
    (w, h): (usize, usize),
    poly: &Polygon<T>,
    (aw, ah): (usize, usize),
    orientation: i32,
) -> Result<Vec<(usize, Point<T>)>> {
    let quad = min_enclosing_quad(poly)?.rotated(orientation);
    let (mx, my) = (T::lit(aw as f64 - 1.0), T::lit(ah as f64 - 1.0));
    let art_corners = [
        Point::new(T::zero(), T::zero()),
        Point::new(mx, T::zero()),
        Point::new(mx, my),
        Point::new(T::zero(), my),
    ];
    let hom = homography_from_correspondences(&art_corners, quad.corners())?;
    let inv = hom.inverse()?;
    let bounds = ArtBounds::new(aw, ah);
    let mask = poly.rasterize(w, h);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                if let Some(p) = bounds.preimage(&inv, x, y) {
                    out.push((y * w + x, p));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::degenerate("region covers no pixel centers"));
    }
    Ok(out)
}

/// Scene with art painted into every region; unpaintable regions are reported
/// and skipped.
#[derive(Debug)]
pub struct Injected<T = f64> {
    pub image: Raster<T>,
    pub region_errors: Vec<RegionError>,
}

/// Warps `art` into each region's enclosing quad and overwrites the scene
/// where the warp is opaque. Pixels outside every region are left untouched.
pub fn inject_art<T: Scalar>(
    scene: &Raster<T>,
    regions: &[Polygon<T>],
    art: &Raster<T>,
    opts: &InjectOptions,
) -> Result<Injected<T>> {
    let placement = ArtPlacement::new(
        (scene.width(), scene.height()),
        regions,
        (art.width(), art.height()),
        opts,
    );
    let mut image = scene.to_rgb();
    placement.paint(&mut image, art)?;
    let region_errors = placement
        .regions
        .into_iter()
        .enumerate()
        .filter_map(|(index, r)| r.err().map(|error| RegionError { index, error }))
        .collect();
    Ok(Injected {
        image,
        region_errors,
    })
}

/// Alpha-composites `cutout` over `scene` at its offset.
pub fn alpha_over<T: Scalar>(scene: &mut Raster<T>, cutout: &ForegroundCutout<T>) {
    let (ox, oy) = (cutout.offset.0 as usize, cutout.offset.1 as usize);
    let fg = &cutout.image;
    for y in 0..fg.height() {
        for x in 0..fg.width() {
            let px = fg.pixel(x, y);
            let a = if fg.has_alpha() { px[3] } else { T::one() };
            if a >= T::one() {
                scene.set_pixel(ox + x, oy + y, &px[..3]);
            } else if a > T::zero() {
                let under = scene.pixel(ox + x, oy + y);
                let mixed = [
                    px[0] * a + under[0] * (T::one() - a),
                    px[1] * a + under[1] * (T::one() - a),
                    px[2] * a + under[2] * (T::one() - a),
                ];
                scene.set_pixel(ox + x, oy + y, &mixed);
            }
        }
    }
}

pub(crate) fn check_cutouts<T: Scalar>(
    width: usize,
    height: usize,
    foregrounds: &[ForegroundCutout<T>],
) -> Result<()> {
    for (index, f) in foregrounds.iter().enumerate() {
        if !f.fits(width, height) {
            return Err(Error::Placement {
                index,
                message: format!(
                    "{}x{} at {:?} in a {width}x{height} scene",
                    f.image.width(),
                    f.image.height(),
                    f.offset
                ),
            });
        }
    }
    Ok(())
}

/// Background, then art (if any) in the regions, then each cutout in order.
pub fn compose_scene<T: Scalar>(
    background: &Raster<T>,
    regions: &[Polygon<T>],
    art: Option<&Raster<T>>,
    foregrounds: &[ForegroundCutout<T>],
    opts: &InjectOptions,
) -> Result<Injected<T>> {
    check_cutouts(background.width(), background.height(), foregrounds)?;
    let mut out = match art {
        Some(art) => inject_art(background, regions, art, opts)?,
        None => Injected {
            image: background.to_rgb(),
            region_errors: Vec::new(),
        },
    };
    for f in foregrounds {
        alpha_over(&mut out.image, f);
    }
    Ok(out)
}

/// Composites with a prepared placement; used when the same scene is
/// rendered with many art variants.
pub fn compose_with_placement<T: Scalar>(
    background: &Raster<T>,
    placement: &ArtPlacement<T>,
    art: &Raster<T>,
    foregrounds: &[ForegroundCutout<T>],
) -> Result<Raster<T>> {
    check_cutouts(background.width(), background.height(), foregrounds)?;
    let mut image = background.to_rgb();
    placement.paint(&mut image, art)?;
    for f in foregrounds {
        alpha_over(&mut image, f);
    }
    Ok(image)
}

/// `clamp(art + delta, 0, 1)` per sample.
pub fn apply_perturbation(art: &Raster64, delta: &Perturbation) -> Result<Raster64> {
    if (art.width(), art.height(), art.channels())
        != (delta.width(), delta.height(), delta.channels())
    {
        return Err(Error::Shape(format!(
            "art is {}x{}x{}, perturbation is {}x{}x{}",
            art.width(),
            art.height(),
            art.channels(),
            delta.width(),
            delta.height(),
            delta.channels()
        )));
    }
    let data = art
        .data()
        .iter()
        .zip(delta.values())
        .map(|(&a, &d)| (a + d).clamp(0.0, 1.0))
        .collect();
    Raster64::new(art.width(), art.height(), art.channels(), data)
}
