//! Dataset-level plumbing shared by the command line and the experiments:
//! loading a dataset, rendering its scenes with a given art pattern, and
//! scoring a detector on them.

use std::path::{Path, PathBuf};

use crate::compose::{compose_scene, list_manifests, InjectOptions, LoadedScene, RegionError, SceneManifest};
use crate::detect::{detect_all, Detection, Detector};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_dataset, EvalOptions, ImageRecord, MetricsReport};
use crate::Raster64;

#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub manifest: SceneManifest,
    pub scene: LoadedScene,
}

impl DatasetEntry {
    /// File name of the manifest, used to label records.
    pub fn name(&self) -> String {
        self.path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    /// Loads every `manifest_*.json` in `dir`; an empty directory is an
    /// input error.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let paths = list_manifests(dir)?;
        if paths.is_empty() {
            return Err(Error::Input(format!("no manifest_*.json files in {}", dir.display())));
        }
        let entries = paths
            .into_iter()
            .map(|path| {
                let manifest = SceneManifest::load(&path)?;
                let scene = manifest.load_assets(dir)?;
                Ok(DatasetEntry { path, manifest, scene })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keeps entries `range` (clamped to the dataset).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let end = range.end.min(self.len());
        let start = range.start.min(end);
        Self {
            dir: self.dir.clone(),
            entries: self.entries[start..end].to_vec(),
        }
    }
}

/// A scene as handed to a detector.
#[derive(Debug)]
pub struct Rendered {
    pub image: Raster64,
    pub region_errors: Vec<RegionError>,
}

/// Renders a scene with `art` (or the stored composite / clean scene when
/// `art` is `None`) and quantizes it to 8 bits, exactly as written to disk.
pub fn render_scene(scene: &LoadedScene, art: Option<&Raster64>, opts: &InjectOptions) -> Result<Rendered> {
    if art.is_none() {
        if let Some(img) = &scene.composed {
            return Ok(Rendered {
                image: img.quantize_u8(),
                region_errors: Vec::new(),
            });
        }
    }
    let out = compose_scene(&scene.background, &scene.regions, art, &scene.foregrounds, opts)?;
    Ok(Rendered {
        image: out.image.quantize_u8(),
        region_errors: out.region_errors,
    })
}

/// Detections per image plus the pooled report.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub records: Vec<ImageRecord>,
}

/// Runs the detectors over `images` (one worker per detector) and scores
/// against the dataset's ground truth. Images align with `dataset.entries`.
pub fn evaluate_images<D: Detector>(
    dataset: &Dataset,
    images: &[Raster64],
    detectors: &mut [D],
    opts: &EvalOptions,
) -> Result<Evaluation> {
    if images.len() != dataset.len() {
        return Err(Error::Input(format!(
            "{} images for {} scenes",
            images.len(),
            dataset.len()
        )));
    }
    let results = detect_all(detectors, images);
    let mut dets: Vec<Vec<Detection>> = Vec::with_capacity(images.len());
    for (entry, r) in dataset.entries.iter().zip(results) {
        dets.push(r.map_err(|e| Error::Detector {
            context: entry.name(),
            source: Box::new(e),
        })?);
    }
    let gts: Vec<_> = dataset.entries.iter().map(|e| e.scene.ground_truth.clone()).collect();
    let report = evaluate_dataset(&dets, &gts, opts)?;
    let records = dataset
        .entries
        .iter()
        .zip(dets)
        .zip(gts)
        .map(|((e, d), g)| ImageRecord {
            image: e.name(),
            detections: d,
            ground_truth: g,
        })
        .collect();
    Ok(Evaluation { report, records })
}

/// Renders every scene with `art` and evaluates.
pub fn evaluate_art<D: Detector>(
    dataset: &Dataset,
    art: Option<&Raster64>,
    inject: &InjectOptions,
    detectors: &mut [D],
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let images = dataset
        .entries
        .iter()
        .map(|e| render_scene(&e.scene, art, inject).map(|r| r.image))
        .collect::<Result<Vec<_>>>()?;
    evaluate_images(dataset, &images, detectors, opts)
}
