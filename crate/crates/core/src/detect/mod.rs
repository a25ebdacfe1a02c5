//! Detector exchange types, the built-in template-correlation detector and
//! the client for external detector processes.

mod external;
pub mod mock;
pub mod protocol;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::BBox;
use crate::Raster64;

pub use external::{ExternalDetector, DEFAULT_TIMEOUT};
pub use synthetic::{
    nms, pedestrian_template, synthetic_detect, DetectorConfig, DetectorParams, SyntheticDetector,
    SyntheticOutput,
};

/// One detector proposal. The box is anchored at its top-left corner;
/// `objectness` is a probability (post-sigmoid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub objectness: f64,
    #[serde(default)]
    pub class_scores: Option<Vec<f64>>,
}

impl Detection {
    pub fn new(x: f64, y: f64, w: f64, h: f64, objectness: f64) -> Self {
        Self {
            x,
            y,
            w,
            h,
            objectness,
            class_scores: None,
        }
    }

    pub fn bbox(&self) -> BBox<f64> {
        BBox::new(self.x, self.y, self.w, self.h)
    }

    /// Checks the box and score invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err("non-finite box position".into());
        }
        if !(self.w > 0.0 && self.h > 0.0 && self.w.is_finite() && self.h.is_finite()) {
            return Err(format!("box size {}x{} is not positive", self.w, self.h));
        }
        if !(0.0..=1.0).contains(&self.objectness) {
            return Err(format!("objectness {} outside [0, 1]", self.objectness));
        }
        if let Some(scores) = &self.class_scores {
            if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(format!("class score {bad} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Anything that turns an RGB scene into proposals.
///
/// Handles are used by one worker at a time; run several handles to
/// parallelize.
pub trait Detector: Send {
    fn name(&self) -> &str;

    fn detect(&mut self, image: &Raster64) -> Result<Vec<Detection>>;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn detect(&mut self, image: &Raster64) -> Result<Vec<Detection>> {
        (**self).detect(image)
    }
}

/// Runs `detectors` over `images`, one worker thread per detector, and
/// returns results in input order.
pub fn detect_all<D: Detector>(detectors: &mut [D], images: &[Raster64]) -> Vec<Result<Vec<Detection>>> {
    if detectors.is_empty() {
        return images
            .iter()
            .map(|_| Err(Error::Config("no detector workers".into())))
            .collect();
    }
    if detectors.len() == 1 {
        let d = &mut detectors[0];
        return images.iter().map(|img| d.detect(img)).collect();
    }
    let workers = detectors.len();
    let mut slots: Vec<Option<Result<Vec<Detection>>>> = (0..images.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = detectors
            .iter_mut()
            .enumerate()
            .map(|(w, det)| {
                scope.spawn(move || {
                    (w..images.len())
                        .step_by(workers)
                        .map(|i| (i, det.detect(&images[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("detector worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every image visited")).collect()
}
