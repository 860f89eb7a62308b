//! Lambertian photometric stereo.
//!
//! Each valid pixel is solved independently: luminance observations
//! `I_j = φ_j (m · l_j)` give `m = ρ n` by linear least squares, then the
//! per-channel albedo is refit with the normal held fixed. Observations with
//! any channel at or above [`SATURATION_LEVEL`] never enter a solve.
//!
//! [`solve_robust`] adds iterative trimming: the most negative residuals
//! (shadow candidates) and the most positive (highlight candidates) are
//! dropped and the pixel is re-solved until the kept set stops changing.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagery::{mean, ImageStack, Mask, RasterImage};
use crate::lightcal::{LightSet, SATURATION_LEVEL};

const MIN_SCALED_NORM: f64 = 1e-6;
const CONDITION_FLOOR: f64 = 1e-10;
const MAX_TRIM_ITERATIONS: usize = 5;
const UNIT_TOLERANCE: f64 = 1e-6;

/// Per-pixel unit normals in the camera frame, facing the viewer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    width: usize,
    height: usize,
    normals: Vec<Vector3<f64>>,
    mask: Mask,
}

impl NormalField {
    /// Invalid pixels are stored as the zero vector.
    pub fn new(
        width: usize,
        height: usize,
        normals: Vec<Vector3<f64>>,
        mask: Mask,
    ) -> Result<Self> {
        mask.check_dims(width, height)?;
        if normals.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} normals", width * height),
                found: format!("{}", normals.len()),
            });
        }
        let mut normals = normals;
        for (i, n) in normals.iter_mut().enumerate() {
            if !mask.at(i) {
                *n = Vector3::zeros();
                continue;
            }
            if (n.norm() - 1.0).abs() > UNIT_TOLERANCE || n.z < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "normal {i} = {:?} is not a camera-facing unit vector",
                    n.as_slice()
                )));
            }
        }
        Ok(Self {
            width,
            height,
            normals,
            mask,
        })
    }

    /// Builds a field from `f(row, col)`; `None` marks the pixel invalid.
    /// Returned vectors are normalized.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<Vector3<f64>>,
    ) -> Self {
        let mut normals = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                match f(row, col) {
                    Some(n) if n.norm() > 0.0 && n.z >= 0.0 => {
                        normals.push(n.normalize());
                        valid.push(true);
                    }
                    _ => {
                        normals.push(Vector3::zeros());
                        valid.push(false);
                    }
                }
            }
        }
        Self {
            width,
            height,
            normals,
            mask: Mask::new(width, height, valid).expect("mask size"),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<Vector3<f64>> {
        let i = row * self.width + col;
        self.mask.at(i).then(|| self.normals[i])
    }

    #[inline]
    pub fn at(&self, index: usize) -> Option<Vector3<f64>> {
        self.mask.at(index).then(|| self.normals[index])
    }

    /// Restricts the field to `mask`.
    pub fn masked(&self, mask: &Mask) -> Result<Self> {
        let mask = self.mask.and(mask)?;
        Self::new(self.width, self.height, self.normals.clone(), mask)
    }

    /// Three-channel raster of `(n_x, n_y, n_z)`; invalid pixels are zero.
    pub fn to_raster(&self) -> RasterImage {
        let data = self.normals.iter().flat_map(|n| [n.x, n.y, n.z]).collect();
        RasterImage::new(self.width, self.height, 3, data).expect("finite normals")
    }

    /// Inverse of [`NormalField::to_raster`]. Vectors shorter than 0.5 or
    /// facing away from the camera are invalid; others are renormalized.
    pub fn from_raster(raster: &RasterImage) -> Result<Self> {
        if raster.channels() != 3 {
            return Err(Error::Unsupported(format!(
                "normal map needs 3 channels, found {}",
                raster.channels()
            )));
        }
        Ok(Self::from_fn(raster.width(), raster.height(), |r, c| {
            let px = raster.pixel(r, c);
            let v = Vector3::new(px[0], px[1], px[2]);
            (v.norm() >= 0.5 && v.z >= 0.0).then_some(v)
        }))
    }
}

/// Per-pixel diffuse reflectance (1 or 3 channels) with validity.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoMap {
    image: RasterImage,
    mask: Mask,
}

impl AlbedoMap {
    pub fn new(image: RasterImage, mask: Mask) -> Result<Self> {
        mask.check_dims(image.width(), image.height())?;
        if let Some(v) = image.data().iter().find(|&&v| v < 0.0) {
            return Err(Error::OutOfRange(format!("negative albedo {v}")));
        }
        Ok(Self { image, mask })
    }

    /// Constant albedo over a mask.
    pub fn uniform(mask: Mask, value: &[f64]) -> Result<Self> {
        let img = RasterImage::from_fn(mask.width(), mask.height(), value.len(), |r, c, px| {
            if mask.get(r, c) {
                px.copy_from_slice(value)
            }
        });
        Self::new(img, mask)
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn channels(&self) -> usize {
        self.image.channels()
    }

    pub fn image(&self) -> &RasterImage {
        &self.image
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    #[inline]
    pub fn pixel_at(&self, index: usize) -> &[f64] {
        self.image.pixel_at(index)
    }

    /// Largest reflectance over valid pixels and channels (0 if none).
    pub fn max_value(&self) -> f64 {
        let ch = self.channels();
        (0..self.image.pixel_count())
            .filter(|&i| self.mask.at(i))
            .flat_map(|i| self.image.data()[i * ch..(i + 1) * ch].iter().copied())
            .fold(0.0, f64::max)
    }

    /// Raster with invalid pixels zeroed.
    pub fn to_raster(&self) -> RasterImage {
        let ch = self.channels();
        RasterImage::from_fn(self.width(), self.height(), ch, |r, c, px| {
            if self.mask.get(r, c) {
                px.copy_from_slice(self.image.pixel(r, c));
            }
        })
    }
}

/// Fractions of each pixel's observations dropped by [`solve_robust`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trim {
    /// Most negative residuals (shadow candidates).
    pub low: f64,
    /// Most positive residuals (highlight candidates).
    pub high: f64,
}

impl Default for Trim {
    fn default() -> Self {
        Self {
            low: 0.15,
            high: 0.10,
        }
    }
}

impl Trim {
    fn validate(&self) -> Result<()> {
        let ok = |f: f64| (0.0..1.0).contains(&f);
        if !ok(self.low) || !ok(self.high) || self.low + self.high >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "trim fractions ({}, {}) must lie in [0, 1) and sum below 1",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Observations dropped from each end out of `n`.
    fn counts(&self, n: usize) -> (usize, usize) {
        let drop = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
        (drop(self.low), drop(self.high))
    }
}

/// Normals, albedo, and the raster of pixels whose `n_z` was flipped.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub normals: NormalField,
    pub albedo: AlbedoMap,
    pub flipped: Mask,
}

impl SolveOutput {
    pub fn valid_count(&self) -> usize {
        self.normals.mask().count()
    }

    pub fn flipped_count(&self) -> usize {
        self.flipped.count()
    }
}

pub fn solve_lambertian(stack: &ImageStack, lights: &LightSet) -> Result<SolveOutput> {
    check_inputs(stack, lights, 3)?;
    solve_pixels(stack, lights, None)
}

/// Trimmed least squares exploiting redundant lights; needs `k >= 6`.
pub fn solve_robust(stack: &ImageStack, lights: &LightSet, trim: Trim) -> Result<SolveOutput> {
    check_inputs(stack, lights, 6)?;
    trim.validate()?;
    let k = stack.len();
    let (low, high) = trim.counts(k);
    if k - low - high < 3 {
        return Err(Error::InsufficientObservations(format!(
            "{k} images minus {low} low and {high} high leaves fewer than 3"
        )));
    }
    solve_pixels(stack, lights, Some(trim))
}

fn check_inputs(stack: &ImageStack, lights: &LightSet, min_k: usize) -> Result<()> {
    if stack.len() < min_k {
        return Err(Error::TooFewImages {
            required: min_k,
            found: stack.len(),
        });
    }
    if stack.len() != lights.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} images (one per light)", lights.len()),
            found: format!("{}", stack.len()),
        });
    }
    lights.ensure_rank3()
}

struct PixelResult {
    normal: Vector3<f64>,
    albedo: [f64; 3],
    valid: bool,
    flipped: bool,
}

impl PixelResult {
    const INVALID: PixelResult = PixelResult {
        normal: Vector3::new(0.0, 0.0, 0.0),
        albedo: [0.0; 3],
        valid: false,
        flipped: false,
    };
}

fn solve_pixels(stack: &ImageStack, lights: &LightSet, trim: Option<Trim>) -> Result<SolveOutput> {
    let (w, h, ch) = (stack.width(), stack.height(), stack.channels());
    let scaled: Vec<Vector3<f64>> = lights
        .directions()
        .iter()
        .zip(lights.intensities())
        .map(|(d, &phi)| d * phi)
        .collect();

    let rows: Vec<Vec<PixelResult>> = (0..h)
        .into_par_iter()
        .map(|row| {
            let mut obs = Observations::with_capacity(stack.len(), ch);
            (0..w)
                .map(|col| {
                    let index = row * w + col;
                    if !stack.mask().at(index) {
                        return PixelResult::INVALID;
                    }
                    obs.gather(stack, index);
                    solve_pixel(&obs, &scaled, ch, trim).unwrap_or(PixelResult::INVALID)
                })
                .collect()
        })
        .collect();

    let mut normals = Vec::with_capacity(w * h);
    let mut albedo = Vec::with_capacity(w * h * ch);
    let mut valid = Vec::with_capacity(w * h);
    let mut flipped = Vec::with_capacity(w * h);
    for px in rows.into_iter().flatten() {
        normals.push(px.normal);
        albedo.extend_from_slice(&px.albedo[..ch]);
        valid.push(px.valid);
        flipped.push(px.flipped);
    }
    let mask = Mask::new(w, h, valid)?;
    Ok(SolveOutput {
        normals: NormalField::new(w, h, normals, mask.clone())?,
        albedo: AlbedoMap::new(RasterImage::new(w, h, ch, albedo)?, mask)?,
        flipped: Mask::new(w, h, flipped)?,
    })
}

/// Unsaturated observations of one pixel.
struct Observations {
    /// Light indices.
    index: Vec<usize>,
    luminance: Vec<f64>,
    /// Channel values, `channels` per observation.
    values: Vec<f64>,
}

impl Observations {
    fn with_capacity(k: usize, channels: usize) -> Self {
        Self {
            index: Vec::with_capacity(k),
            luminance: Vec::with_capacity(k),
            values: Vec::with_capacity(k * channels),
        }
    }

    fn gather(&mut self, stack: &ImageStack, pixel: usize) {
        self.index.clear();
        self.luminance.clear();
        self.values.clear();
        for (j, img) in stack.images().iter().enumerate() {
            let px = img.pixel_at(pixel);
            if px.iter().any(|&v| v >= SATURATION_LEVEL) {
                continue;
            }
            self.index.push(j);
            self.luminance.push(mean(px));
            self.values.extend_from_slice(px);
        }
    }

    fn len(&self) -> usize {
        self.index.len()
    }
}

/// Least squares for `m` over the observations listed in `active`
/// (positions into `obs`). `None` if the local system is rank-deficient.
fn fit_scaled_normal(
    obs: &Observations,
    active: &[usize],
    scaled: &[Vector3<f64>],
) -> Option<Vector3<f64>> {
    if active.len() < 3 {
        return None;
    }
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &o in active {
        let a = scaled[obs.index[o]];
        ata += a * a.transpose();
        atb += a * obs.luminance[o];
    }
    let eig = SymmetricEigen::new(ata);
    let max = eig.eigenvalues.max();
    if !(max > 0.0) || eig.eigenvalues.min() <= CONDITION_FLOOR * max {
        return None;
    }
    ata.cholesky().map(|c| c.solve(&atb))
}

fn solve_pixel(
    obs: &Observations,
    scaled: &[Vector3<f64>],
    channels: usize,
    trim: Option<Trim>,
) -> Option<PixelResult> {
    let n = obs.len();
    let mut active: Vec<usize> = (0..n).collect();
    let mut m = fit_scaled_normal(obs, &active, scaled)?;

    if let Some(trim) = trim {
        let (low, high) = trim.counts(n);
        if n < low + high + 3 {
            return None;
        }
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        for _ in 0..MAX_TRIM_ITERATIONS {
            order.clear();
            order.extend((0..n).map(|o| (obs.luminance[o] - scaled[obs.index[o]].dot(&m), o)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut kept: Vec<usize> = order[low..n - high].iter().map(|&(_, o)| o).collect();
            kept.sort_unstable();
            if kept == active {
                break;
            }
            active = kept;
            m = fit_scaled_normal(obs, &active, scaled)?;
        }
    }

    let magnitude = m.norm();
    if !(magnitude >= MIN_SCALED_NORM) {
        return None;
    }
    let mut normal = m / magnitude;
    let flipped = normal.z < 0.0;
    if flipped {
        normal.z = -normal.z;
    }

    // per-channel magnitude with the normal fixed
    let mut num = [0.0; 3];
    let mut den = 0.0;
    for &o in &active {
        let s = scaled[obs.index[o]].dot(&normal);
        den += s * s;
        for (c, acc) in num.iter_mut().enumerate().take(channels) {
            *acc += obs.values[o * channels + c] * s;
        }
    }
    if !(den > 0.0) {
        return None;
    }
    let mut albedo = [0.0; 3];
    for c in 0..channels {
        albedo[c] = (num[c] / den).max(0.0);
    }
    Some(PixelResult {
        normal,
        albedo,
        valid: true,
        flipped,
    })
}

/// Maps normals to colors: `(n + 1) / 2` per component, invalid pixels black.
pub fn encode_normals_rgb(normals: &NormalField) -> RasterImage {
    RasterImage::from_fn(normals.width(), normals.height(), 3, |r, c, px| {
        if let Some(n) = normals.get(r, c) {
            px[0] = (n.x + 1.0) / 2.0;
            px[1] = (n.y + 1.0) / 2.0;
            px[2] = (n.z + 1.0) / 2.0;
        }
    })
}

/// Inverse of [`encode_normals_rgb`]. Returns the field and the number of
/// corrupt pixels (decoded vector shorter than 0.5 or facing away), which
/// are marked invalid. Pure black decodes as invalid and is not counted.
pub fn decode_normals_rgb(image: &RasterImage) -> Result<(NormalField, usize)> {
    if image.channels() != 3 {
        return Err(Error::Unsupported(format!(
            "normal encoding needs 3 channels, found {}",
            image.channels()
        )));
    }
    if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange(format!("{v} outside [0, 1]")));
    }
    let mut corrupt = 0;
    let field = NormalField::from_fn(image.width(), image.height(), |r, c| {
        let px = image.pixel(r, c);
        if px.iter().all(|&v| v == 0.0) {
            return None;
        }
        let v = Vector3::new(2.0 * px[0] - 1.0, 2.0 * px[1] - 1.0, 2.0 * px[2] - 1.0);
        if v.norm() < 0.5 || v.z < 0.0 {
            corrupt += 1;
            return None;
        }
        Some(unit_in_cell(v))
    });
    Ok((field, corrupt))
}

/// Unit vector inside the 16-bit quantization cell around `center`, found by
/// alternating projection between the sphere and the cell. Plain
/// normalization can leave the cell by a fraction of a step.
fn unit_in_cell(center: Vector3<f64>) -> Vector3<f64> {
    let half = 1.0 / 65535.0;
    let mut v = center.normalize();
    for _ in 0..50 {
        let clamped = v.zip_map(&center, |x, c| x.clamp(c - half, c + half));
        if clamped == v {
            break;
        }
        v = clamped.normalize();
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axes() -> LightSet {
        LightSet::from_directions(vec![Vector3::x(), Vector3::y(), Vector3::z()]).unwrap()
    }

    fn one_pixel_stack(values: &[f64]) -> ImageStack {
        let images = values
            .iter()
            .map(|&v| RasterImage::new(1, 1, 1, vec![v]).unwrap())
            .collect();
        ImageStack::new(images, Mask::full(1, 1), "t").unwrap()
    }

    #[test]
    fn identity_lights_read_the_normal_directly() {
        let out = solve_lambertian(&one_pixel_stack(&[0.0, 0.0, 0.8]), &axes()).unwrap();
        let n = out.normals.get(0, 0).unwrap();
        assert!((n - Vector3::z()).norm() < 1e-12);
        assert!((out.albedo.pixel_at(0)[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn identity_lights_tilted_normal() {
        let out = solve_lambertian(&one_pixel_stack(&[0.6, 0.0, 0.8]), &axes()).unwrap();
        let n = out.normals.get(0, 0).unwrap();
        assert!((n - Vector3::new(0.6, 0.0, 0.8)).norm() < 1e-12);
        assert!((out.albedo.pixel_at(0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backfacing_solution_is_flipped_and_flagged() {
        let lights =
            LightSet::from_directions(vec![Vector3::x(), Vector3::y(), -Vector3::z()]).unwrap();
        // m = (0.3, 0.1, -0.2)
        let out = solve_lambertian(&one_pixel_stack(&[0.3, 0.1, 0.2]), &lights).unwrap();
        assert_eq!(out.flipped_count(), 1);
        let n = out.normals.get(0, 0).unwrap();
        let expected = Vector3::new(0.3, 0.1, 0.2).normalize();
        assert!((n - expected).norm() < 1e-12);
    }

    #[test]
    fn dark_pixel_is_invalid() {
        let out = solve_lambertian(&one_pixel_stack(&[0.0, 0.0, 0.0]), &axes()).unwrap();
        assert_eq!(out.valid_count(), 0);
    }

    #[test]
    fn saturated_observations_are_excluded() {
        // one of four observations is clipped; the remaining three still determine m
        let lights = LightSet::from_directions(vec![
            Vector3::x(),
            Vector3::y(),
            Vector3::z(),
            Vector3::new(0.6, 0.0, 0.8),
        ])
        .unwrap();
        let out = solve_lambertian(&one_pixel_stack(&[0.3, 0.0, 0.4, 1.0]), &lights).unwrap();
        let n = out.normals.get(0, 0).unwrap();
        assert!((n - Vector3::new(0.6, 0.0, 0.8)).norm() < 1e-12);
        assert!((out.albedo.pixel_at(0)[0] - 0.5).abs() < 1e-12);

        // with two clipped only two remain: the pixel becomes invalid
        let out = solve_lambertian(&one_pixel_stack(&[1.0, 0.0, 0.4, 1.0]), &lights).unwrap();
        assert_eq!(out.valid_count(), 0);
    }

    #[test]
    fn coplanar_lights_are_rejected() {
        let lights = LightSet::from_directions(vec![
            Vector3::x(),
            Vector3::new(0.6, 0.8, 0.0),
            Vector3::y(),
        ])
        .unwrap();
        let err = solve_lambertian(&one_pixel_stack(&[0.1, 0.1, 0.1]), &lights).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));
    }

    #[test]
    fn light_count_must_match_stack() {
        let err = solve_lambertian(&one_pixel_stack(&[0.1, 0.1, 0.1, 0.1]), &axes()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn robust_needs_six_images() {
        let lights = LightSet::from_directions(vec![
            Vector3::x(),
            Vector3::y(),
            Vector3::z(),
            Vector3::new(0.6, 0.0, 0.8),
        ])
        .unwrap();
        let err = solve_robust(&one_pixel_stack(&[0.1; 4]), &lights, Trim::default()).unwrap_err();
        assert!(matches!(err, Error::TooFewImages { required: 6, .. }));
    }

    #[test]
    fn excessive_trim_is_rejected() {
        let dirs: Vec<_> = (0..6)
            .map(|i| {
                let a = i as f64;
                Vector3::new(0.5 * a.cos(), 0.5 * a.sin(), 0.75f64.sqrt())
            })
            .collect();
        let lights = LightSet::from_directions(dirs).unwrap();
        let stack = one_pixel_stack(&[0.5; 6]);
        let err = solve_robust(
            &stack,
            &lights,
            Trim {
                low: 0.5,
                high: 0.4,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientObservations(_)));
        assert!(solve_robust(
            &stack,
            &lights,
            Trim {
                low: 0.6,
                high: 0.6
            }
        )
        .is_err());
    }

    #[test]
    fn trim_counts() {
        assert_eq!(Trim::default().counts(20), (3, 2));
        assert_eq!(Trim::default().counts(6), (0, 0));
        assert_eq!(Trim::default().counts(105), (15, 10));
    }

    #[test]
    fn encode_canonical_colors() {
        let field = NormalField::from_fn(2, 1, |_, c| {
            Some(if c == 0 { Vector3::z() } else { Vector3::x() })
        });
        let rgb = encode_normals_rgb(&field);
        assert_eq!(rgb.pixel(0, 0), &[0.5, 0.5, 1.0]);
        assert_eq!(rgb.pixel(0, 1), &[1.0, 0.5, 0.5]);
    }

    #[test]
    fn decode_sentinels() {
        let img =
            RasterImage::new(3, 1, 3, vec![0.5, 0.5, 1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.6]).unwrap();
        let (field, corrupt) = decode_normals_rgb(&img).unwrap();
        assert!((field.get(0, 0).unwrap() - Vector3::z()).norm() < 1e-12);
        assert!(field.get(0, 1).is_none());
        // (0, 0, 0.2) is too short to be a normal
        assert!(field.get(0, 2).is_none());
        assert_eq!(corrupt, 1);
    }

    #[test]
    fn encode_decode_over_unit_vector_grid() {
        // every unit vector on a 1-degree grid of the upper hemisphere
        let mut dirs = Vec::new();
        for el in 0..=90 {
            for az in 0..360 {
                let (e, a) = ((el as f64).to_radians(), (az as f64).to_radians());
                dirs.push(Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin()));
            }
        }
        let field = NormalField::from_fn(dirs.len(), 1, |_, c| Some(dirs[c]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.png");
        crate::imagery::save_map(
            &encode_normals_rgb(&field),
            &path,
            crate::imagery::MapFormat::Png16,
        )
        .unwrap();
        let loaded = crate::imagery::load_image(&path, crate::imagery::Colorspace::Linear).unwrap();
        let (back, corrupt) = decode_normals_rgb(&loaded).unwrap();
        assert_eq!(corrupt, 0);
        let step = 1.0 / 65535.0;
        for (c, d) in dirs.iter().enumerate() {
            // raw components 2v - 1 sit within half a code step (1/65535 in
            // normal units); slack covers float rounding at exact ties
            let px = loaded.pixel(0, c);
            let raw = Vector3::new(2.0 * px[0] - 1.0, 2.0 * px[1] - 1.0, 2.0 * px[2] - 1.0);
            let raw_err = (raw - d).amax();
            assert!(raw_err <= step + 1e-10, "{d:?} -> {raw:?}: {raw_err}");
            // the unit normal stays inside the code's cell, so within a full step
            let n = back.get(0, c).unwrap();
            assert!((n.norm() - 1.0).abs() < 1e-12);
            let err = (n - d).amax();
            assert!(err <= 2.0 * step + 1e-10, "{d:?} -> {n:?}: {err}");
        }
    }

    proptest! {
        #[test]
        fn encoding_is_a_fixed_point(x in -1.0f64..1.0, y in -1.0f64..1.0, z in 0.05f64..1.0) {
            let n = Vector3::new(x, y, z).normalize();
            let field = NormalField::from_fn(1, 1, |_, _| Some(n));
            let rgb = encode_normals_rgb(&field);
            let (back, _) = decode_normals_rgb(&rgb).unwrap();
            let again = encode_normals_rgb(&back);
            for (a, b) in rgb.data().iter().zip(again.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
