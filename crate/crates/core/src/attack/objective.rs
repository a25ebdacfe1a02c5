use serde::{Deserialize, Serialize};

use crate::compose::{apply_perturbation, compose_with_placement, ArtPlacement, ForegroundCutout, InjectOptions, LoadedScene};
use crate::detect::Detector;
use crate::error::{Error, Result};
use crate::Raster64;

use super::Perturbation;

/// Something the optimizer can query: maps raw delta vectors (art layout,
/// possibly outside the feasible set) to losses.
pub trait Objective {
    /// Length of a delta vector.
    fn dims(&self) -> usize;

    /// Losses of `deltas`, in order.
    fn evaluate(&mut self, deltas: &[Vec<f64>]) -> Result<Vec<f64>>;
}

/// How per-image maxima are reduced over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Mean,
    Max,
}

/// A scene ready to be re-rendered with different art.
#[derive(Debug)]
pub struct PreparedScene {
    pub name: String,
    background: Raster64,
    placement: ArtPlacement,
    foregrounds: Vec<ForegroundCutout>,
}

impl PreparedScene {
    pub fn new(name: impl Into<String>, scene: &LoadedScene, art_size: (usize, usize), opts: &InjectOptions) -> Self {
        let size = (scene.background.width(), scene.background.height());
        Self {
            name: name.into(),
            background: scene.background.clone(),
            placement: ArtPlacement::new(size, &scene.regions, art_size, opts),
            foregrounds: scene.foregrounds.clone(),
        }
    }

    pub fn render(&self, art: &Raster64) -> Result<Raster64> {
        compose_with_placement(&self.background, &self.placement, art, &self.foregrounds)
    }
}

/// Highest objectness on each image, 0 for an image without proposals.
fn image_loss(detector: &mut dyn Detector, scene: &PreparedScene, art: &Raster64) -> Result<f64> {
    let image = scene.render(art)?;
    let dets = detector.detect(&image).map_err(|e| Error::Detector {
        context: scene.name.clone(),
        source: Box::new(e),
    })?;
    Ok(dets.iter().fold(0.0, |m, d| m.max(d.objectness)))
}

fn reduce(values: &[f64], how: Aggregate) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    match how {
        Aggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregate::Max => values.iter().fold(0.0, |m: f64, v| m.max(*v)),
    }
}

/// Mean over the batch of each image's highest objectness with
/// `art + delta` injected.
pub fn objectness_loss(
    art: &Raster64,
    delta: &Perturbation,
    batch: &[PreparedScene],
    detector: &mut dyn Detector,
) -> Result<f64> {
    let perturbed = apply_perturbation(art, delta)?;
    let per_image = batch
        .iter()
        .map(|s| image_loss(detector, s, &perturbed))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(&per_image, Aggregate::Mean))
}

/// The detection loss over a batch of scenes, queried through one or more
/// detector handles in parallel.
pub struct DetectorObjective<D> {
    art: Raster64,
    scenes: Vec<PreparedScene>,
    detectors: Vec<D>,
    aggregate: Aggregate,
}

impl<D: Detector> DetectorObjective<D> {
    pub fn new(art: Raster64, scenes: Vec<PreparedScene>, detectors: Vec<D>, aggregate: Aggregate) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::Config("attack batch is empty".into()));
        }
        if detectors.is_empty() {
            return Err(Error::Config("no detector workers".into()));
        }
        Ok(Self {
            art,
            scenes,
            detectors,
            aggregate,
        })
    }

    pub fn art(&self) -> &Raster64 {
        &self.art
    }

    pub fn scenes(&self) -> &[PreparedScene] {
        &self.scenes
    }

    /// Hands the detector handles back, e.g. to reuse adapter processes.
    pub fn into_detectors(self) -> Vec<D> {
        self.detectors
    }

    fn perturbed(&self, delta: &[f64]) -> Result<Raster64> {
        let data = self
            .art
            .data()
            .iter()
            .zip(delta)
            .map(|(&a, &d)| (a + d).clamp(0.0, 1.0))
            .collect();
        Raster64::new(self.art.width(), self.art.height(), self.art.channels(), data)
    }
}

impl<D: Detector> Objective for DetectorObjective<D> {
    fn dims(&self) -> usize {
        self.art.data().len()
    }

    fn evaluate(&mut self, deltas: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(d) = deltas.iter().find(|d| d.len() != self.dims()) {
            return Err(Error::Shape(format!("delta of length {} for {} art samples", d.len(), self.dims())));
        }
        let arts = deltas.iter().map(|d| self.perturbed(d)).collect::<Result<Vec<_>>>()?;
        let n_scenes = self.scenes.len();
        let jobs = arts.len() * n_scenes;
        let workers = self.detectors.len();
        let scenes = &self.scenes;
        let arts = &arts;
        let mut per_job = vec![0.0; jobs];
        if workers == 1 {
            let det = &mut self.detectors[0];
            for (j, slot) in per_job.iter_mut().enumerate() {
                *slot = image_loss(det, &scenes[j % n_scenes], &arts[j / n_scenes])?;
            }
        } else {
            let results: Vec<Vec<(usize, Result<f64>)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = self
                    .detectors
                    .iter_mut()
                    .enumerate()
                    .map(|(w, det)| {
                        scope.spawn(move || {
                            let mut out = Vec::new();
                            for j in (w..jobs).step_by(workers) {
                                let r = image_loss(det, &scenes[j % n_scenes], &arts[j / n_scenes]);
                                let failed = r.is_err();
                                out.push((j, r));
                                if failed {
                                    break;
                                }
                            }
                            out
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("loss worker panicked")).collect()
            });
            // first error in job order wins, so failures are reported deterministically
            let mut flat: Vec<(usize, Result<f64>)> = results.into_iter().flatten().collect();
            flat.sort_by_key(|(j, _)| *j);
            for (j, r) in flat {
                per_job[j] = r?;
            }
        }
        Ok(per_job.chunks(n_scenes).map(|c| reduce(c, self.aggregate)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reductions() {
        assert_eq!(reduce(&[], Aggregate::Mean), 0.0);
        assert!((reduce(&[0.8, 0.4], Aggregate::Mean) - 0.6).abs() < 1e-15);
        assert_eq!(reduce(&[0.8, 0.4], Aggregate::Max), 0.8);
    }
}
