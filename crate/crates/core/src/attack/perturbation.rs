use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, Rgba};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Signed, L-infinity bounded delta in art coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
    epsilon: f64,
    support: Option<BinaryMask>,
}

impl Perturbation {
    pub fn zeros(width: usize, height: usize, channels: usize, epsilon: f64) -> Self {
        Self {
            width,
            height,
            channels,
            values: vec![0.0; width * height * channels],
            epsilon,
            support: None,
        }
    }

    /// Validates the bound and the support; values must already satisfy them.
    pub fn from_values(
        width: usize,
        height: usize,
        channels: usize,
        values: Vec<f64>,
        epsilon: f64,
        support: Option<BinaryMask>,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon {epsilon} outside (0, 1]")));
        }
        if values.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height}x{channels} perturbation",
                values.len()
            )));
        }
        if let Some(m) = &support {
            if (m.width(), m.height()) != (width, height) {
                return Err(Error::Shape(format!(
                    "support is {}x{}, perturbation is {width}x{height}",
                    m.width(),
                    m.height()
                )));
            }
        }
        let p = Self {
            width,
            height,
            channels,
            values,
            epsilon,
            support,
        };
        if let Some(i) = p.values.iter().position(|v| !(v.abs() <= epsilon)) {
            return Err(Error::Input(format!(
                "value {} at {i} exceeds epsilon {epsilon}",
                p.values[i]
            )));
        }
        if let Some(m) = &p.support {
            for (i, v) in p.values.iter().enumerate() {
                if *v != 0.0 && !m.bits()[i / channels] {
                    return Err(Error::Input(format!("nonzero value outside support at {i}")));
                }
            }
        }
        Ok(p)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn support(&self) -> Option<&BinaryMask> {
        self.support.as_ref()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Writes `<stem>_pos.png`, `<stem>_neg.png` and `<stem>.json` next to
    /// `stem`. Each plane stores `|delta| / epsilon` as 16-bit samples.
    pub fn save(&self, stem: impl AsRef<Path>, support_path: Option<&str>) -> Result<PerturbationFiles> {
        let stem = stem.as_ref();
        let pos = with_suffix(stem, "_pos.png");
        let neg = with_suffix(stem, "_neg.png");
        let side = with_suffix(stem, ".json");
        let plane = |sign: f64| -> Vec<u16> {
            self.values
                .iter()
                .map(|&v| {
                    let m = (v * sign).max(0.0) / self.epsilon;
                    (m.min(1.0) * 65535.0).round() as u16
                })
                .collect()
        };
        write_plane(&pos, self.width, self.height, self.channels, plane(1.0))?;
        write_plane(&neg, self.width, self.height, self.channels, plane(-1.0))?;
        let meta = PerturbationMeta {
            epsilon: self.epsilon,
            width: self.width,
            height: self.height,
            channels: self.channels,
            positive: file_name(&pos),
            negative: file_name(&neg),
            encoding: "abs(delta)/epsilon*65535".into(),
            support: support_path.map(str::to_string),
            max_abs: self.max_abs(),
        };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(side.display().to_string(), e))?;
        std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))?;
        Ok(PerturbationFiles {
            positive: pos,
            negative: neg,
            sidecar: side,
        })
    }

    /// Reads a perturbation written by [`Perturbation::save`], given its
    /// sidecar path.
    pub fn load(sidecar: impl AsRef<Path>) -> Result<Self> {
        let side = sidecar.as_ref();
        let text = std::fs::read_to_string(side).map_err(|e| Error::io(side, e))?;
        let meta: PerturbationMeta =
            serde_json::from_str(&text).map_err(|e| Error::json(side.display().to_string(), e))?;
        let dir = side.parent().unwrap_or(Path::new("."));
        let pos = read_plane(&dir.join(&meta.positive), &meta)?;
        let neg = read_plane(&dir.join(&meta.negative), &meta)?;
        let values = pos
            .iter()
            .zip(&neg)
            .map(|(&p, &n)| (p as f64 - n as f64) / 65535.0 * meta.epsilon)
            .collect();
        let support = match &meta.support {
            Some(p) => Some(BinaryMask::load_png(dir.join(p))?),
            None => None,
        };
        Self::from_values(meta.width, meta.height, meta.channels, values, meta.epsilon, support)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationFiles {
    pub positive: PathBuf,
    pub negative: PathBuf,
    pub sidecar: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PerturbationMeta {
    epsilon: f64,
    width: usize,
    height: usize,
    channels: usize,
    positive: String,
    negative: String,
    encoding: String,
    support: Option<String>,
    max_abs: f64,
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn write_plane(path: &Path, w: usize, h: usize, channels: usize, data: Vec<u16>) -> Result<()> {
    let fail = |e: image::ImageError| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let (w32, h32) = (w as u32, h as u32);
    match channels {
        3 => ImageBuffer::<Rgb<u16>, _>::from_raw(w32, h32, data)
            .expect("plane size")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(fail),
        4 => ImageBuffer::<Rgba<u16>, _>::from_raw(w32, h32, data)
            .expect("plane size")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(fail),
        c => Err(Error::Shape(format!("cannot store a {c}-channel perturbation"))),
    }
}

fn read_plane(path: &Path, meta: &PerturbationMeta) -> Result<Vec<u16>> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    if (img.width() as usize, img.height() as usize) != (meta.width, meta.height) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "plane size disagrees with sidecar".into(),
        });
    }
    Ok(match meta.channels {
        3 => img.to_rgb16().into_raw(),
        _ => img.to_rgba16().into_raw(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Perturbation::from_values(1, 1, 3, vec![0.1, 0.0, 0.0], 0.05, None).is_err());
        assert!(Perturbation::from_values(1, 1, 3, vec![0.0; 2], 0.05, None).is_err());
        assert!(Perturbation::from_values(1, 1, 3, vec![0.0; 3], 0.0, None).is_err());
        let outside = BinaryMask::new(1, 1);
        assert!(Perturbation::from_values(1, 1, 3, vec![0.01, 0.0, 0.0], 0.05, Some(outside)).is_err());
    }

    #[test]
    fn png_pair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let eps = 16.0 / 255.0;
        let values: Vec<f64> = (0..4 * 3 * 3).map(|i| ((i as f64 * 0.37).sin()) * eps).collect();
        let p = Perturbation::from_values(4, 3, 3, values, eps, None).unwrap();
        let files = p.save(dir.path().join("delta"), None).unwrap();
        assert!(files.positive.exists() && files.negative.exists());
        let q = Perturbation::load(&files.sidecar).unwrap();
        assert_eq!(q.epsilon(), eps);
        for (a, b) in p.values().iter().zip(q.values()) {
            assert!((a - b).abs() <= eps / 65535.0);
        }
    }
}
