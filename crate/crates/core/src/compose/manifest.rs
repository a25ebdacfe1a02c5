use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RegionSpec;
use crate::raster::load_image;
use crate::{Polygon64, Raster64};

use super::ForegroundCutout;

/// Axis-aligned ground-truth box, top-left corner plus size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl GroundTruthBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::Input(format!("invalid ground-truth box {x},{y},{w},{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= width as f64 && self.y + self.h <= height as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForegroundSpec {
    pub image: String,
    pub offset: [i64; 2],
}

/// One scene: background, crosswalk polygons, ground truth and cutouts.
///
/// Paths are resolved relative to the directory holding the manifest file.
/// `composed`, when present, points at an already composited image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub background: String,
    pub regions: Vec<RegionSpec>,
    #[serde(default)]
    pub ground_truth: Vec<GroundTruthBox>,
    #[serde(default)]
    pub foregrounds: Vec<ForegroundSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composed: Option<String>,
}

/// A manifest with its assets decoded.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub background: Raster64,
    pub regions: Vec<Polygon64>,
    pub ground_truth: Vec<GroundTruthBox>,
    pub foregrounds: Vec<ForegroundCutout>,
    pub composed: Option<Raster64>,
}

impl SceneManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn polygons(&self) -> Result<Vec<Polygon64>> {
        self.regions.iter().map(RegionSpec::to_polygon).collect()
    }

    /// Checks boxes and polygons against the image bounds.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for (i, b) in self.ground_truth.iter().enumerate() {
            GroundTruthBox::new(b.x, b.y, b.w, b.h)?;
            if !b.within(width, height) {
                return Err(Error::Input(format!(
                    "ground-truth box {i} lies outside the {width}x{height} image"
                )));
            }
        }
        for r in &self.regions {
            let poly = r.to_polygon()?;
            let (lo, hi) = poly.bounds();
            if lo.x < -0.5 || lo.y < -0.5 || hi.x > width as f64 - 0.5 || hi.y > height as f64 - 0.5 {
                return Err(Error::Input(format!(
                    "region {:?} extends outside the {width}x{height} image",
                    r.name
                )));
            }
        }
        Ok(())
    }

    /// Decodes every referenced asset. `base` is the manifest's directory.
    pub fn load_assets(&self, base: &Path) -> Result<LoadedScene> {
        let resolve = |p: &str| -> PathBuf { base.join(p) };
        let background: Raster64 = load_image(resolve(&self.background))?;
        let background = background.to_rgb();
        self.validate(background.width(), background.height())?;
        let foregrounds = self
            .foregrounds
            .iter()
            .map(|f| {
                let image: Raster64 = load_image(resolve(&f.image))?;
                Ok(ForegroundCutout {
                    image: image.to_rgba(),
                    offset: (f.offset[0], f.offset[1]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let composed = match &self.composed {
            Some(p) => Some(load_image::<f64>(resolve(p))?.to_rgb()),
            None => None,
        };
        Ok(LoadedScene {
            background,
            regions: self.polygons()?,
            ground_truth: self.ground_truth.clone(),
            foregrounds,
            composed,
        })
    }
}

/// Manifest files (`manifest_*.json`) in a dataset directory, sorted by name.
pub fn list_manifests(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("manifest_") && name.ends_with(".json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_json_shape() {
        let text = r#"{
            "background": "backgrounds/scene_000.png",
            "regions": [{"name": "north", "polygon": [[1,1],[20,1],[20,8],[1,8]]}],
            "ground_truth": [{"x": 2.0, "y": 3.0, "w": 7.0, "h": 15.0}],
            "foregrounds": [{"image": "cutouts/scene_000_00.png", "offset": [2, 3]}]
        }"#;
        let m: SceneManifest = serde_json::from_str(text).unwrap();
        assert_eq!(m.ground_truth[0].w, 7.0);
        assert_eq!(m.foregrounds[0].offset, [2, 3]);
        assert!(m.composed.is_none());
        assert!(m.validate(32, 32).is_ok());
        assert!(m.validate(8, 32).is_err());
        let back = serde_json::to_string(&m).unwrap();
        assert!(!back.contains("composed"));
    }

    #[test]
    fn bad_box_rejected() {
        assert!(GroundTruthBox::new(0.0, 0.0, 0.0, 3.0).is_err());
        assert!(GroundTruthBox::new(0.0, 0.0, 2.0, -1.0).is_err());
    }
}
