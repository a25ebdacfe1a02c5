use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::iou;
use crate::raster::Raster;
use crate::Raster64;

use super::{Detection, Detector};

/// Scalar settings of the template detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// Scored window `[w, h]`: the template plus a context ring around it.
    pub window: [usize; 2],
    pub stride: usize,
    /// Sigmoid gain applied to `score - threshold`.
    pub gain: f64,
    pub threshold: f64,
    pub nms_iou: f64,
    /// Luma assumed for the ring and for transparent template pixels.
    pub context: f64,
    /// Per-pixel standard deviation added to the window norm so that flat
    /// windows score 0 and the score stays Lipschitz in the pixels.
    pub noise_floor: f64,
    /// Proposals at or below this objectness are dropped before NMS.
    pub min_objectness: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            window: [11, 19],
            stride: 1,
            gain: 60.0,
            threshold: 0.72,
            nms_iou: 0.3,
            context: 0.45,
            noise_floor: 0.002,
            min_objectness: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// RGBA appearance template; alpha marks the silhouette.
    pub template: Raster64,
    pub params: DetectorParams,
}

impl DetectorConfig {
    /// The template and settings matched to the scene generator.
    pub fn pedestrian() -> Self {
        Self {
            template: pedestrian_template(),
            params: DetectorParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let (tw, th) = (self.template.width(), self.template.height());
        if p.window[0] < tw || p.window[1] < th {
            return Err(Error::Config(format!(
                "window {:?} smaller than the {tw}x{th} template",
                p.window
            )));
        }
        if p.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(p.nms_iou > 0.0 && p.nms_iou < 1.0) {
            return Err(Error::Config(format!("nms_iou {} outside (0, 1)", p.nms_iou)));
        }
        if !(p.gain > 0.0 && p.gain.is_finite()) || !p.threshold.is_finite() {
            return Err(Error::Config("gain must be positive and threshold finite".into()));
        }
        if !(p.noise_floor >= 0.0) || !(0.0..1.0).contains(&p.min_objectness) {
            return Err(Error::Config("invalid noise floor or objectness cut".into()));
        }
        Ok(())
    }
}

/// A 7x15 standing-figure silhouette (head, torso, two legs) in uniform
/// dark gray on a transparent background.
pub fn pedestrian_template() -> Raster64 {
    const ROWS: [&str; 15] = [
        "..###..", "..###..", "..###..", ".#####.", ".#####.", ".#####.", ".#####.", ".#####.",
        ".#####.", ".##.##.", ".##.##.", ".##.##.", ".##.##.", ".##.##.", ".##.##.",
    ];
    const BODY: f64 = 0.40;
    Raster::from_fn(7, 15, 4, |x, y, px| {
        if ROWS[y].as_bytes()[x] == b'#' {
            px.copy_from_slice(&[BODY, BODY, BODY, 1.0]);
        } else {
            px.copy_from_slice(&[0.0, 0.0, 0.0, 0.0]);
        }
    })
    .expect("static template")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOutput {
    pub detections: Vec<Detection>,
    /// Set when the image is smaller than the window.
    pub too_small: bool,
}

/// Correlation score of every window position.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub cols: usize,
    pub rows: usize,
    pub stride: usize,
    pub scores: Vec<f64>,
}

/// Sliding-window normalized cross-correlation detector.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    cfg: DetectorConfig,
    /// Zero-mean padded template scaled to unit norm, row-major in the window.
    kernel: Vec<f64>,
    template_offset: (usize, usize),
}

impl SyntheticDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        let [ww, wh] = cfg.params.window;
        let (tw, th) = (cfg.template.width(), cfg.template.height());
        let off = ((ww - tw) / 2, (wh - th) / 2);
        let ctx = cfg.params.context;
        let luma = cfg.template.luminance();
        let mut padded = vec![ctx; ww * wh];
        for y in 0..th {
            for x in 0..tw {
                let a = cfg.template.alpha(x, y);
                padded[(y + off.1) * ww + x + off.0] = a * luma[y * tw + x] + (1.0 - a) * ctx;
            }
        }
        let mean = padded.iter().sum::<f64>() / padded.len() as f64;
        let mut kernel: Vec<f64> = padded.iter().map(|v| v - mean).collect();
        let norm = kernel.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Err(Error::Config("padded template has no contrast".into()));
        }
        kernel.iter_mut().for_each(|v| *v /= norm);
        Ok(Self {
            cfg,
            kernel,
            template_offset: off,
        })
    }

    pub fn pedestrian() -> Self {
        Self::new(DetectorConfig::pedestrian()).expect("default config is valid")
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Largest change of any window score when one pixel's luma moves by 1.
    pub fn lipschitz_bound(&self) -> f64 {
        let [ww, wh] = self.cfg.params.window;
        let n = (ww * wh) as f64;
        2.0 / (n.sqrt() * self.cfg.params.noise_floor)
    }

    pub fn scores(&self, image: &Raster64) -> Option<ScoreMap> {
        let p = &self.cfg.params;
        let [ww, wh] = p.window;
        let (w, h) = (image.width(), image.height());
        if w < ww || h < wh {
            return None;
        }
        let luma = image.luminance();
        // integral images with a zero row/column in front
        let iw = w + 1;
        let mut s1 = vec![0.0; iw * (h + 1)];
        let mut s2 = vec![0.0; iw * (h + 1)];
        for y in 0..h {
            let (mut r1, mut r2) = (0.0, 0.0);
            for x in 0..w {
                let v = luma[y * w + x];
                r1 += v;
                r2 += v * v;
                s1[(y + 1) * iw + x + 1] = s1[y * iw + x + 1] + r1;
                s2[(y + 1) * iw + x + 1] = s2[y * iw + x + 1] + r2;
            }
        }
        let n = (ww * wh) as f64;
        let floor = n * p.noise_floor * p.noise_floor;
        let cols = (w - ww) / p.stride + 1;
        let rows = (h - wh) / p.stride + 1;
        let mut scores = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            let y0 = r * p.stride;
            for c in 0..cols {
                let x0 = c * p.stride;
                let rect = |s: &[f64]| {
                    s[(y0 + wh) * iw + x0 + ww] - s[y0 * iw + x0 + ww] - s[(y0 + wh) * iw + x0]
                        + s[y0 * iw + x0]
                };
                let sum = rect(&s1);
                let sq = rect(&s2);
                let centered = (sq - sum * sum / n).max(0.0);
                let mut cov = 0.0;
                for ky in 0..wh {
                    let row = &luma[(y0 + ky) * w + x0..(y0 + ky) * w + x0 + ww];
                    let krow = &self.kernel[ky * ww..(ky + 1) * ww];
                    cov += row.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>();
                }
                let denom = (centered + floor).sqrt();
                scores.push(if denom > 0.0 { cov / denom } else { 0.0 });
            }
        }
        Some(ScoreMap {
            cols,
            rows,
            stride: p.stride,
            scores,
        })
    }

    pub fn run(&self, image: &Raster64) -> SyntheticOutput {
        let p = &self.cfg.params;
        let Some(map) = self.scores(image) else {
            return SyntheticOutput {
                detections: Vec::new(),
                too_small: true,
            };
        };
        let (tw, th) = (self.cfg.template.width() as f64, self.cfg.template.height() as f64);
        let mut candidates = Vec::new();
        for r in 0..map.rows {
            for c in 0..map.cols {
                let s = map.scores[r * map.cols + c];
                let obj = sigmoid(p.gain * (s - p.threshold));
                if obj > p.min_objectness {
                    candidates.push(Detection::new(
                        (c * map.stride + self.template_offset.0) as f64,
                        (r * map.stride + self.template_offset.1) as f64,
                        tw,
                        th,
                        obj,
                    ));
                }
            }
        }
        SyntheticOutput {
            detections: nms(candidates, p.nms_iou),
            too_small: false,
        }
    }
}

impl Detector for SyntheticDetector {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn detect(&mut self, image: &Raster64) -> Result<Vec<Detection>> {
        let out = self.run(image);
        if out.too_small {
            log::warn!(
                "image {}x{} is smaller than the detector window",
                image.width(),
                image.height()
            );
        }
        Ok(out.detections)
    }
}

/// Runs the template detector once with the given configuration.
pub fn synthetic_detect(image: &Raster64, cfg: &DetectorConfig) -> Result<SyntheticOutput> {
    Ok(SyntheticDetector::new(cfg.clone())?.run(image))
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Greedy non-maximum suppression. Higher objectness first, earlier index on
/// ties; a box is kept unless it overlaps a kept box by more than `max_iou`.
pub fn nms(mut candidates: Vec<Detection>, max_iou: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .objectness
            .total_cmp(&candidates[a].objectness)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let bi = candidates[i].bbox();
        if kept.iter().all(|&k| iou(&candidates[k].bbox(), &bi) <= max_iou) {
            kept.push(i);
        }
    }
    let mut taken: Vec<Option<Detection>> = candidates.drain(..).map(Some).collect();
    kept.into_iter().map(|i| taken[i].take().unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene_with(copies: &[(usize, usize)], w: usize, h: usize) -> Raster64 {
        let t = pedestrian_template();
        let ctx = DetectorParams::default().context;
        let mut img = Raster::solid(w, h, &[ctx, ctx, ctx]).unwrap();
        for &(ox, oy) in copies {
            for y in 0..t.height() {
                for x in 0..t.width() {
                    if t.alpha(x, y) > 0.0 {
                        img.set_pixel(ox + x, oy + y, &t.pixel(x, y)[..3]);
                    }
                }
            }
        }
        img
    }

    #[test]
    fn exact_copy_is_found() {
        let img = scene_with(&[(20, 10)], 48, 40);
        let out = synthetic_detect(&img, &DetectorConfig::pedestrian()).unwrap();
        assert!(!out.too_small);
        assert_eq!(out.detections.len(), 1);
        let d = &out.detections[0];
        assert_eq!((d.x, d.y, d.w, d.h), (20.0, 10.0, 7.0, 15.0));
        assert!(d.objectness > 0.9);
    }

    #[test]
    fn uniform_image_has_no_detections() {
        let img = scene_with(&[], 40, 40);
        let out = synthetic_detect(&img, &DetectorConfig::pedestrian()).unwrap();
        assert!(out.detections.is_empty());
    }

    #[test]
    fn two_separated_copies() {
        let img = scene_with(&[(5, 5), (30, 20)], 60, 45);
        let out = synthetic_detect(&img, &DetectorConfig::pedestrian()).unwrap();
        assert_eq!(out.detections.len(), 2);
    }

    #[test]
    fn small_image_flags_warning() {
        let img = scene_with(&[], 8, 8);
        let out = synthetic_detect(&img, &DetectorConfig::pedestrian()).unwrap();
        assert!(out.too_small);
        assert!(out.detections.is_empty());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = DetectorConfig::pedestrian();
        cfg.params.window = [5, 19];
        assert!(SyntheticDetector::new(cfg.clone()).is_err());
        cfg.params.window = [11, 19];
        cfg.params.stride = 0;
        assert!(SyntheticDetector::new(cfg.clone()).is_err());
        cfg.params.stride = 1;
        cfg.params.nms_iou = 1.0;
        assert!(SyntheticDetector::new(cfg).is_err());
    }

    #[test]
    fn nms_keeps_highest_and_disjoint() {
        let d = vec![
            Detection::new(0.0, 0.0, 10.0, 10.0, 0.6),
            Detection::new(1.0, 0.0, 10.0, 10.0, 0.9),
            Detection::new(50.0, 0.0, 10.0, 10.0, 0.5),
        ];
        let kept = nms(d, 0.5);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].objectness, 0.9);
        assert_eq!(kept[1].objectness, 0.5);
    }
}
