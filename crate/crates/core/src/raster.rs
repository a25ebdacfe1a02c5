//! Normalized RGB(A) rasters, binary masks and the PNG/PPM boundary.
//!
//! Samples are stored as reals in `[0, 1]`; 8-bit quantization only happens
//! when a raster is written to or read from a file. Pixel `(i, j)` has its
//! center at integer coordinates and covers `[i - 0.5, i + 0.5)`.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Raster<T> {
    /// Builds a raster from row-major interleaved samples.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty raster {width}x{height}")));
        }
        if channels != 3 && channels != 4 {
            return Err(Error::Shape(format!("{channels} channels, expected 3 or 4")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && **v >= T::zero() && **v <= T::one())) {
            return Err(Error::Shape(format!("sample {bad:?} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// A raster with every sample set to `value` (clamped into `[0, 1]`).
    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Result<Self> {
        let v = clamp01(value);
        Self::new(width, height, channels, vec![v; width * height * channels])
    }

    /// A raster whose every pixel is the given color; `color.len()` selects RGB or RGBA.
    pub fn solid(width: usize, height: usize, color: &[T]) -> Result<Self> {
        let channels = color.len();
        let mut data = Vec::with_capacity(width * height * channels);
        for _ in 0..width * height {
            data.extend(color.iter().map(|&c| clamp01(c)));
        }
        Self::new(width, height, channels, data)
    }

    /// Builds a raster pixel by pixel. Returned samples are clamped into `[0, 1]`.
    pub fn from_fn<F>(width: usize, height: usize, channels: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, &mut [T]),
    {
        let mut data = vec![T::zero(); width * height * channels];
        if channels > 0 {
            for (idx, px) in data.chunks_exact_mut(channels).enumerate() {
                f(idx % width.max(1), idx / width.max(1), px);
                for v in px.iter_mut() {
                    *v = clamp01(*v);
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn has_alpha(&self) -> bool {
        self.channels == 4
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Sets one pixel; values are clamped into `[0, 1]`.
    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, values: &[T]) {
        let i = (y * self.width + x) * self.channels;
        for (dst, &v) in self.data[i..i + self.channels].iter_mut().zip(values) {
            *dst = clamp01(v);
        }
    }

    /// Alpha of a pixel; RGB rasters are opaque.
    #[inline]
    pub fn alpha(&self, x: usize, y: usize) -> T {
        if self.channels == 4 {
            self.pixel(x, y)[3]
        } else {
            T::one()
        }
    }

    /// Bilinear interpolation between the four pixel centers around `(x, y)`.
    ///
    /// Returns `None` outside `[0, w-1] x [0, h-1]`. The result is always
    /// RGBA; for RGB rasters the alpha entry is 1.
    pub fn sample_bilinear(&self, x: T, y: T) -> Option<[T; 4]> {
        let max_x = T::lit((self.width - 1) as f64);
        let max_y = T::lit((self.height - 1) as f64);
        if !(x >= T::zero() && y >= T::zero() && x <= max_x && y <= max_y) {
            return None;
        }
        let fx = x.floor();
        let fy = y.floor();
        let x0 = fx.to_usize().unwrap_or(0).min(self.width - 1);
        let y0 = fy.to_usize().unwrap_or(0).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = x - fx;
        let ty = y - fy;

        let mut out = [T::zero(), T::zero(), T::zero(), T::one()];
        let p00 = self.pixel(x0, y0);
        let p10 = self.pixel(x1, y0);
        let p01 = self.pixel(x0, y1);
        let p11 = self.pixel(x1, y1);
        for c in 0..self.channels {
            let top = p00[c] + (p10[c] - p00[c]) * tx;
            let bottom = p01[c] + (p11[c] - p01[c]) * tx;
            let v = top + (bottom - top) * ty;
            out[c] = clamp01(v);
        }
        Some(out)
    }

    /// Same image with an alpha channel (opaque if there was none).
    pub fn to_rgba(&self) -> Self {
        if self.channels == 4 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.width * self.height * 4);
        for px in self.data.chunks_exact(3) {
            data.extend_from_slice(px);
            data.push(T::one());
        }
        Self {
            width: self.width,
            height: self.height,
            channels: 4,
            data,
        }
    }

    /// Drops the alpha channel, if any.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(4)
            .flat_map(|px| px[..3].iter().copied())
            .collect();
        Self {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Rec. 601 luma of every pixel, row-major.
    pub fn luminance(&self) -> Vec<T> {
        let (r, g, b) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        self.data
            .chunks_exact(self.channels)
            .map(|px| r * px[0] + g * px[1] + b * px[2])
            .collect()
    }

    /// Rounds every sample to the nearest multiple of 1/255.
    pub fn quantize_u8(&self) -> Self {
        let scale = T::lit(255.0);
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| (v * scale).round() / scale).collect(),
        }
    }

    pub fn to_f64(&self) -> Raster<f64> {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn from_f64(r: &Raster<f64>) -> Self {
        Self {
            width: r.width,
            height: r.height,
            channels: r.channels,
            data: r.data.iter().map(|&v| T::lit(v)).collect(),
        }
    }

    /// Encodes the raster as 8-bit samples.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v.as_f64())).collect()
    }

    pub fn from_bytes(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let scale = T::lit(255.0);
        let data = bytes.iter().map(|&b| T::lit(b as f64) / scale).collect();
        Self::new(width, height, channels, data)
    }

    /// Encodes as an in-memory PNG.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let color = if self.channels == 4 {
            ColorType::Rgba8
        } else {
            ColorType::Rgb8
        };
        image::write_buffer_with_format(
            &mut std::io::Cursor::new(&mut out),
            &self.to_bytes(),
            self.width as u32,
            self.height as u32,
            color,
            ImageFormat::Png,
        )
        .map_err(|e| Error::Format {
            path: "<memory>".into(),
            message: e.to_string(),
        })?;
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
            Error::Format {
                path: "<memory>".into(),
                message: e.to_string(),
            }
        })?;
        Self::from_dynamic(img)
    }

    fn from_dynamic(img: DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if img.color().has_alpha() {
            Self::from_bytes(w, h, 4, img.to_rgba8().as_raw())
        } else {
            Self::from_bytes(w, h, 3, img.to_rgb8().as_raw())
        }
    }
}

/// Reads a PNG or binary PPM file into a normalized raster.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Raster<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("{format:?} is not supported (PNG or PPM expected)"),
        });
    }
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Raster::from_dynamic(img)
}

/// Writes a raster as 8-bit PNG, or as P6 PPM when the extension is `.ppm`
/// (PPM has no alpha; it is dropped).
pub fn save_image<T: Scalar>(raster: &Raster<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_ppm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let bytes = if is_ppm {
        let rgb = raster.to_rgb();
        let mut out = format!("P6\n{} {}\n255\n", rgb.width, rgb.height).into_bytes();
        out.extend(rgb.to_bytes());
        out
    } else {
        raster.encode_png()?
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[inline]
pub(crate) fn clamp01<T: Scalar>(v: T) -> T {
    if v.is_nan() {
        T::zero()
    } else {
        v.max(T::zero()).min(T::one())
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// One boolean per pixel; set pixels mark an injection region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Shape(format!(
                "{} mask bits for {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let bits = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Pixelwise OR. Panics on dimension mismatch.
    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// Loads a mask image; any nonzero luma sample is set.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })?;
        let luma = img.to_luma8();
        let (w, h) = (luma.width() as usize, luma.height() as usize);
        Self::from_bits(w, h, luma.as_raw().iter().map(|&v| v != 0).collect())
    }

    /// Writes the mask as an 8-bit grayscale PNG (255 = set).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        image::save_buffer_with_format(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            ColorType::L8,
            ImageFormat::Png,
        )
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
    }
}
