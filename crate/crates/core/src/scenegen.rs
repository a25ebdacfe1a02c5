//! Deterministic synthetic intersections: road, zebra crosswalks and
//! pedestrians drawn from the detector's template, with exact ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::compose::{ForegroundCutout, ForegroundSpec, GroundTruthBox, SceneManifest};
use crate::detect::{pedestrian_template, DetectorParams};
use crate::error::{Error, Result};
use crate::geometry::{Point, PolygonMaskFile, RegionSpec};
use crate::raster::{save_image, BinaryMask};
use crate::{Polygon64, Raster64};

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGenConfig {
    pub image_size: [usize; 2],
    pub n_crosswalks: usize,
    /// Inclusive `[min, max]`.
    pub pedestrians_per_scene: [usize; 2],
    /// Inclusive `[[min_w, min_h], [max_w, max_h]]`.
    pub pedestrian_size: [[usize; 2]; 2],
    /// Relative widening of each crosswalk from its far to its near edge.
    pub perspective_skew: f64,
    pub seed: u64,
    /// Inclusive crosswalk height range in pixels.
    pub crosswalk_height: [usize; 2],
    /// Stripe period along the crosswalk at its far edge, in pixels.
    pub stripe_period: f64,
    pub road_luma: f64,
    pub stripe_luma: f64,
    pub pedestrian_luma: f64,
    /// Standard deviation of the per-pixel road texture.
    pub road_noise: f64,
    /// Per-channel relative jitter of the pedestrian contrast.
    pub color_jitter: f64,
    /// Margin around each pedestrian that must stay clear of the others
    /// and inside the crosswalk; matches the detector's context ring.
    pub context_margin: [usize; 2],
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        let t = pedestrian_template();
        let window = DetectorParams::default().window;
        Self {
            image_size: [160, 120],
            n_crosswalks: 2,
            pedestrians_per_scene: [1, 3],
            pedestrian_size: [[t.width(), t.height()], [t.width(), t.height()]],
            perspective_skew: 0.2,
            seed: 0,
            crosswalk_height: [28, 36],
            stripe_period: 12.0,
            road_luma: 0.45,
            stripe_luma: 0.52,
            pedestrian_luma: 0.40,
            road_noise: 0.004,
            color_jitter: 0.1,
            context_margin: [(window[0] - t.width()) / 2, (window[1] - t.height()) / 2],
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.image_size;
        let bad = |m: String| Err(Error::Config(m));
        if w == 0 || h == 0 {
            return bad("image size must be positive".into());
        }
        if !(1..=3).contains(&self.n_crosswalks) {
            return bad(format!("n_crosswalks {} outside 1..=3", self.n_crosswalks));
        }
        let [lo, hi] = self.pedestrians_per_scene;
        if lo > hi {
            return bad(format!("empty pedestrian count range {lo}..={hi}"));
        }
        let [smin, smax] = self.pedestrian_size;
        if smin[0] == 0 || smin[1] == 0 || smin[0] > smax[0] || smin[1] > smax[1] {
            return bad(format!("invalid pedestrian size range {smin:?}..={smax:?}"));
        }
        if !(0.0..=0.5).contains(&self.perspective_skew) {
            return bad(format!("perspective_skew {} outside [0, 0.5]", self.perspective_skew));
        }
        let [cmin, cmax] = self.crosswalk_height;
        if cmin < 2 || cmin > cmax || cmax * self.n_crosswalks > h {
            return bad(format!(
                "crosswalk height range {cmin}..={cmax} does not fit {} crosswalks in {h} rows",
                self.n_crosswalks
            ));
        }
        if !(self.stripe_period >= 2.0) {
            return bad("stripe_period must be at least 2 pixels".into());
        }
        for (name, v) in [
            ("road_luma", self.road_luma),
            ("stripe_luma", self.stripe_luma),
            ("pedestrian_luma", self.pedestrian_luma),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.road_noise >= 0.0) || !(0.0..=0.1).contains(&self.color_jitter) {
            return bad("road_noise must be non-negative and color_jitter within [0, 0.1]".into());
        }
        Ok(())
    }
}

/// Where one pedestrian was drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub x: i64,
    pub y: i64,
    pub w: usize,
    pub h: usize,
    pub crosswalk: usize,
    /// Per-channel contrast multipliers.
    pub jitter: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub index: usize,
    pub background: Raster64,
    pub crosswalks: Vec<Polygon64>,
    pub cutouts: Vec<ForegroundCutout>,
    pub ground_truth: Vec<GroundTruthBox>,
    pub placements: Vec<PlacementRecord>,
}

impl GeneratedScene {
    /// Manifest for the dataset layout written by [`generate_dataset`].
    pub fn manifest(&self) -> SceneManifest {
        let stem = scene_stem(self.index);
        SceneManifest {
            background: format!("backgrounds/{stem}.png"),
            regions: self.region_specs(),
            ground_truth: self.ground_truth.clone(),
            foregrounds: self
                .cutouts
                .iter()
                .enumerate()
                .map(|(i, c)| ForegroundSpec {
                    image: format!("cutouts/{stem}_p{i}.png"),
                    offset: [c.offset.0, c.offset.1],
                })
                .collect(),
            composed: None,
        }
    }

    fn region_specs(&self) -> Vec<RegionSpec> {
        self.crosswalks
            .iter()
            .enumerate()
            .map(|(i, p)| RegionSpec::from_polygon(format!("crosswalk_{i}"), p))
            .collect()
    }
}

fn scene_stem(index: usize) -> String {
    format!("scene_{index:03}")
}

/// Random source of scene `index`; independent of every other index.
fn scene_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce9_e6e0);
    rng.set_stream(index as u64);
    rng
}

/// Trapezoid over rows `[y0, y1]`, far (top) edge narrower than the near one.
fn crosswalk_polygon(cx: f64, top_w: f64, skew: f64, y0: f64, y1: f64) -> Result<Polygon64> {
    let bot_w = top_w * (1.0 + skew);
    Polygon64::new(vec![
        Point::new(cx - top_w / 2.0, y0),
        Point::new(cx + top_w / 2.0, y0),
        Point::new(cx + bot_w / 2.0, y1),
        Point::new(cx - bot_w / 2.0, y1),
    ])
}

/// Left and right crosswalk edges on row `y` of a trapezoid made by
/// [`crosswalk_polygon`].
fn row_span(poly: &Polygon64, y: f64) -> (f64, f64) {
    let v = poly.vertices();
    let t = ((y - v[0].y) / (v[3].y - v[0].y)).clamp(0.0, 1.0);
    (v[0].x + (v[3].x - v[0].x) * t, v[1].x + (v[2].x - v[1].x) * t)
}

/// Nearest-neighbor resize of the template mask to `w x h`.
fn scaled_template(w: usize, h: usize) -> Vec<f64> {
    let t = pedestrian_template();
    let mut a = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let sx = x * t.width() / w;
            let sy = y * t.height() / h;
            a[y * w + x] = t.alpha(sx, sy);
        }
    }
    a
}

fn rect_inside(poly: &Polygon64, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
    [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        .iter()
        .all(|&(x, y)| poly.contains(Point::new(x, y)))
}

pub fn generate_scene(cfg: &SceneGenConfig, index: usize) -> Result<GeneratedScene> {
    cfg.validate()?;
    let mut rng = scene_rng(cfg.seed, index);
    let [w, h] = cfg.image_size;
    let (wf, hf) = (w as f64, h as f64);

    // crosswalks: one per horizontal slot
    let slot = hf / cfg.n_crosswalks as f64;
    let mut crosswalks = Vec::with_capacity(cfg.n_crosswalks);
    for k in 0..cfg.n_crosswalks {
        let band = rng.random_range(cfg.crosswalk_height[0]..=cfg.crosswalk_height[1]) as f64;
        let room = (slot - band - 1.0).max(0.0);
        let y0 = (k as f64 * slot + rng.random_range(0.0..=room)).floor();
        let y1 = (y0 + band).min(hf - 1.0);
        let max_top = (wf - 2.0) / (1.0 + cfg.perspective_skew);
        let top_w = rng.random_range(0.6..=0.85) * max_top;
        let half = top_w * (1.0 + cfg.perspective_skew) / 2.0;
        let slack = (wf / 2.0 - half - 1.0).max(0.0);
        let cx = wf / 2.0 + rng.random_range(-slack..=slack);
        crosswalks.push(crosswalk_polygon(cx, top_w, cfg.perspective_skew, y0, y1)?);
    }

    // road, texture, stripes
    let noise = Normal::new(0.0, cfg.road_noise.max(1e-300)).expect("finite sigma");
    let mut luma: Vec<f64> = (0..w * h)
        .map(|_| {
            let n = if cfg.road_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            cfg.road_luma + n
        })
        .collect();
    for poly in &crosswalks {
        let mask = poly.rasterize(w, h);
        let top_w = poly.vertices()[1].x - poly.vertices()[0].x;
        let n_stripes = (top_w / cfg.stripe_period).round().max(1.0);
        for y in 0..h {
            let (l, r) = row_span(poly, y as f64);
            for x in 0..w {
                if !mask.get(x, y) {
                    continue;
                }
                let u = (x as f64 - l) / (r - l);
                let phase = (u * n_stripes).fract();
                if phase < 0.5 {
                    luma[y * w + x] += cfg.stripe_luma - cfg.road_luma;
                }
            }
        }
    }
    let mut background = Raster64::from_fn(w, h, 3, |x, y, px| {
        px.fill(luma[y * w + x]);
    })?;

    // pedestrians
    let [lo, hi] = cfg.pedestrians_per_scene;
    let count = rng.random_range(lo..=hi);
    let [mx, my] = cfg.context_margin;
    let mut placements: Vec<PlacementRecord> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let pw = rng.random_range(cfg.pedestrian_size[0][0]..=cfg.pedestrian_size[1][0]);
            let ph = rng.random_range(cfg.pedestrian_size[0][1]..=cfg.pedestrian_size[1][1]);
            let k = rng.random_range(0..crosswalks.len());
            let (lo_b, hi_b) = crosswalks[k].bounds();
            let (ww, wh) = (pw + 2 * mx, ph + 2 * my);
            let x_hi = (hi_b.x.floor() as i64) - ww as i64 + 1;
            let y_hi = (hi_b.y.floor() as i64) - wh as i64 + 1;
            let (x_lo, y_lo) = (lo_b.x.ceil() as i64, lo_b.y.ceil() as i64);
            if x_hi < x_lo || y_hi < y_lo {
                continue;
            }
            let wx = rng.random_range(x_lo..=x_hi);
            let wy = rng.random_range(y_lo..=y_hi);
            let (x0, y0) = (wx as f64, wy as f64);
            let (x1, y1) = (x0 + ww as f64 - 1.0, y0 + wh as f64 - 1.0);
            let inside_image = wx >= 0 && wy >= 0 && (wx as usize + ww) <= w && (wy as usize + wh) <= h;
            if !inside_image || !rect_inside(&crosswalks[k], x0, y0, x1, y1) {
                continue;
            }
            let clear = placements.iter().all(|p| {
                let (px0, py0) = (p.x - mx as i64, p.y - my as i64);
                let (pw1, ph1) = ((p.w + 2 * mx) as i64, (p.h + 2 * my) as i64);
                wx + ww as i64 <= px0 || px0 + pw1 <= wx || wy + wh as i64 <= py0 || py0 + ph1 <= wy
            });
            if !clear {
                continue;
            }
            let jitter = [0; 3].map(|_| 1.0 + rng.random_range(-cfg.color_jitter..=cfg.color_jitter));
            placed = Some(PlacementRecord {
                x: wx + mx as i64,
                y: wy + my as i64,
                w: pw,
                h: ph,
                crosswalk: k,
                jitter,
            });
            break;
        }
        match placed {
            Some(p) => placements.push(p),
            None => {
                return Err(Error::Generation(format!(
                    "scene {index}: could not place pedestrian {} with its context window fully on a \
                     crosswalk and clear of the others after {MAX_ATTEMPTS} attempts",
                    placements.len()
                )))
            }
        }
    }

    let mut cutouts = Vec::with_capacity(placements.len());
    let mut ground_truth = Vec::with_capacity(placements.len());
    for p in &placements {
        let alpha = scaled_template(p.w, p.h);
        let color: Vec<f64> = p
            .jitter
            .iter()
            .map(|j| (cfg.road_luma + (cfg.pedestrian_luma - cfg.road_luma) * j).clamp(0.0, 1.0))
            .collect();
        let color = Raster64::solid(1, 1, &color)?.quantize_u8().into_data();
        let image = Raster64::from_fn(p.w, p.h, 4, |x, y, px| {
            let a = alpha[y * p.w + x];
            px[..3].copy_from_slice(&color);
            px[3] = a;
            if a == 0.0 {
                px[..3].fill(0.0);
            }
        })?;
        let cutout = ForegroundCutout {
            image,
            offset: (p.x, p.y),
        };
        crate::compose::alpha_over(&mut background, &cutout);
        cutouts.push(cutout);
        ground_truth.push(GroundTruthBox::new(p.x as f64, p.y as f64, p.w as f64, p.h as f64)?);
    }

    Ok(GeneratedScene {
        index,
        background: background.quantize_u8(),
        crosswalks,
        cutouts,
        ground_truth,
        placements,
    })
}

/// Generates scenes `0..n` and writes them under `out`:
/// `manifest_NNN.json`, `backgrounds/`, `cutouts/` and `masks/` (polygon
/// JSON plus a PNG of the region union per scene).
pub fn generate_dataset(cfg: &SceneGenConfig, n: usize, out: impl AsRef<Path>) -> Result<Vec<SceneManifest>> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    cfg.validate()?;
    let out = out.as_ref();
    for sub in ["backgrounds", "cutouts", "masks"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut manifests = Vec::with_capacity(n);
    for index in 0..n {
        let scene = generate_scene(cfg, index)?;
        let manifest = scene.manifest();
        save_image(&scene.background, out.join(&manifest.background))?;
        for (c, spec) in scene.cutouts.iter().zip(&manifest.foregrounds) {
            save_image(&c.image, out.join(&spec.image))?;
        }
        let stem = scene_stem(index);
        let [w, h] = cfg.image_size;
        PolygonMaskFile {
            image_size: cfg.image_size,
            regions: scene.region_specs(),
        }
        .save(out.join(format!("masks/{stem}.json")))?;
        let union = scene
            .crosswalks
            .iter()
            .fold(BinaryMask::new(w, h), |m, p| m.union(&p.rasterize(w, h)));
        union.save_png(out.join(format!("masks/{stem}.png")))?;
        manifest.save(out.join(format!("manifest_{index:03}.json")))?;
        manifests.push(manifest);
    }
    Ok(manifests)
}
