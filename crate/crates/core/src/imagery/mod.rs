//! Raster types, the camera-frame convention, linearization, and file I/O.
//!
//! Every direction in this crate lives in the camera frame: `x` points to the
//! image right, `y` points **up** the image, and `z` points toward the viewer.
//! Pixel `(row, col)` therefore sits at `(x, y) = (col, height - 1 - row)`.
//! Row 0 is the top of the image, as in the stored files.

mod pfm;

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transfer function applied when an image is ingested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colorspace {
    Linear,
    Srgb,
}

/// Encoding used by [`save_map`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    /// 16-bit PNG, values must lie in `[0, 1]`. Preview/export only.
    Png16,
    /// 32-bit float map, lossless for `f32`-representable values.
    Pfm,
}

/// Camera-frame coordinates of a pixel center.
#[inline]
pub fn pixel_to_xy(row: usize, col: usize, height: usize) -> (f64, f64) {
    (col as f64, (height - 1 - row) as f64)
}

/// Standard sRGB electro-optical transfer function on a normalized code value.
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Row-major raster of linear values with 1 or 3 interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Unsupported(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", width * height * channels),
                found: format!("{} values", data.len()),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(format!("non-finite value {bad}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Builds a raster by evaluating `f(row, col, out)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Self {
        let mut img = Self::zeros(width, height, channels);
        for row in 0..height {
            for col in 0..width {
                let i = (row * width + col) * channels;
                f(row, col, &mut img.data[i..i + channels]);
            }
        }
        img
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

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let i = (row * self.width + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Pixel by flat index `row * width + col`.
    #[inline]
    pub fn pixel_at(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    /// Channel mean at a pixel.
    #[inline]
    pub fn luminance(&self, row: usize, col: usize) -> f64 {
        mean(self.pixel(row, col))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }
}

#[inline]
pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-pixel validity raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} mask entries", width * height),
                found: format!("{}", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    #[inline]
    pub fn at(&self, index: usize) -> bool {
        self.data[index]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.check_dims(other.width, other.height)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    pub fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                expected: format!("{width}x{height}"),
                found: format!("{}x{}", self.width, self.height),
            });
        }
        Ok(())
    }
}

/// Co-registered images of one fixed pose, one per light.
#[derive(Debug, Clone)]
pub struct ImageStack {
    images: Vec<RasterImage>,
    mask: Mask,
    pose_id: String,
}

impl ImageStack {
    /// Checks that every image shares the first image's shape, that the mask
    /// matches, and that all values are non-negative radiances.
    ///
    /// A stack may hold a single image; solvers enforce their own minimum.
    pub fn new(images: Vec<RasterImage>, mask: Mask, pose_id: impl Into<String>) -> Result<Self> {
        let first = images.first().ok_or(Error::TooFewImages {
            required: 1,
            found: 0,
        })?;
        for (j, img) in images.iter().enumerate() {
            if !img.same_shape(first) {
                return Err(Error::at_image(
                    j,
                    Error::DimensionMismatch {
                        expected: first.shape_string(),
                        found: img.shape_string(),
                    },
                ));
            }
            if let Some(v) = img.data.iter().find(|&&v| v < 0.0) {
                return Err(Error::at_image(
                    j,
                    Error::OutOfRange(format!("negative radiance {v}")),
                ));
            }
        }
        mask.check_dims(first.width, first.height)?;
        Ok(Self {
            images,
            mask,
            pose_id: pose_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn width(&self) -> usize {
        self.images[0].width
    }

    pub fn height(&self) -> usize {
        self.images[0].height
    }

    pub fn channels(&self) -> usize {
        self.images[0].channels
    }

    pub fn images(&self) -> &[RasterImage] {
        &self.images
    }

    pub fn image(&self, index: usize) -> &RasterImage {
        &self.images[index]
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn pose_id(&self) -> &str {
        &self.pose_id
    }

    /// Returns a copy of the stack with its mask replaced.
    pub fn with_mask(&self, mask: Mask) -> Result<Self> {
        mask.check_dims(self.width(), self.height())?;
        Ok(Self {
            images: self.images.clone(),
            mask,
            pose_id: self.pose_id.clone(),
        })
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn decode_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Loads an 8/16-bit gray or RGB PNG, or a PFM, as linear radiance.
///
/// Integer codes are normalized to `[0, 1]` first, then the sRGB transfer
/// function is inverted when `colorspace` is [`Colorspace::Srgb`].
pub fn load_image(path: impl AsRef<Path>, colorspace: Colorspace) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;

    let (width, height, channels, mut data) = if pfm::is_pfm(&bytes) {
        let map = pfm::decode(&bytes).map_err(|m| decode_error(path, m))?;
        if map.data.iter().any(|v| v.is_nan()) {
            return Err(decode_error(path, "NaN in float map"));
        }
        if map.data.iter().any(|v| v.is_infinite()) {
            return Err(decode_error(path, "infinite value in float map"));
        }
        let data = map.data.iter().map(|&v| v as f64).collect::<Vec<_>>();
        (map.width, map.height, map.channels, data)
    } else {
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| decode_error(path, e.to_string()))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(buf) => (w, h, 1, normalize(buf.as_raw(), 255.0)),
            DynamicImage::ImageRgb8(buf) => (w, h, 3, normalize(buf.as_raw(), 255.0)),
            DynamicImage::ImageLuma16(buf) => (w, h, 1, normalize(buf.as_raw(), 65535.0)),
            DynamicImage::ImageRgb16(buf) => (w, h, 3, normalize(buf.as_raw(), 65535.0)),
            other => {
                return Err(Error::Unsupported(format!(
                    "{}: pixel layout {:?}",
                    path.display(),
                    other.color()
                )))
            }
        }
    };

    if colorspace == Colorspace::Srgb {
        for v in &mut data {
            *v = srgb_to_linear(*v);
        }
    }
    RasterImage::new(width, height, channels, data)
}

fn normalize<T: Copy + Into<f64>>(codes: &[T], full_scale: f64) -> Vec<f64> {
    codes.iter().map(|&c| c.into() / full_scale).collect()
}

/// Quantizes a `[0, 1]` value to a 16-bit code.
#[inline]
pub fn quantize_u16(v: f64) -> u16 {
    (v * 65535.0).round() as u16
}

/// Writes a raster as 16-bit PNG or PFM.
pub fn save_map(map: &RasterImage, path: impl AsRef<Path>, format: MapFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        MapFormat::Pfm => {
            let data: Vec<f32> = map.data.iter().map(|&v| v as f32).collect();
            pfm::write_file(path, map.width, map.height, map.channels, &data)
        }
        MapFormat::Png16 => {
            if let Some(v) = map.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::OutOfRange(format!(
                    "{v} outside [0, 1] cannot be stored as png16"
                )));
            }
            let codes: Vec<u16> = map.data.iter().map(|&v| quantize_u16(v)).collect();
            let (w, h) = (map.width as u32, map.height as u32);
            let result = if map.channels == 1 {
                ImageBuffer::<Luma<u16>, _>::from_raw(w, h, codes)
                    .expect("buffer size matches")
                    .save_with_format(path, image::ImageFormat::Png)
            } else {
                ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, codes)
                    .expect("buffer size matches")
                    .save_with_format(path, image::ImageFormat::Png)
            };
            result.map_err(|e| image_write_error(path, e))
        }
    }
}

fn image_write_error(path: &Path, err: image::ImageError) -> Error {
    match err {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => decode_error(path, other.to_string()),
    }
}

/// Loads an 8-bit mask PNG; codes of 128 and above are valid.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| decode_error(path, e.to_string()))?;
    let gray = match img {
        DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(Error::Unsupported(format!(
                "{}: mask must be 8-bit gray, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    Mask::new(w, h, gray.as_raw().iter().map(|&c| c >= 128).collect())
}

/// Writes a mask as 8-bit PNG (0 invalid, 255 valid).
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let codes: Vec<u8> = mask.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
    ImageBuffer::<Luma<u8>, _>::from_raw(mask.width as u32, mask.height as u32, codes)
        .expect("buffer size matches")
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_write_error(path, e))
}
