//! Light calibration: per-image light directions and relative intensities,
//! estimated from reference spheres in frame or read from a dome manifest.
//!
//! Sphere geometry is orthographic: the view vector is `(0, 0, 1)` everywhere
//! and a sphere pixel at offset `(dx, dy)` from the disk center (camera
//! frame, radius-normalized) has normal `(dx, dy, sqrt(1 - dx² - dy²))`.

use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::{ImageStack, RasterImage};

/// Relative radiance at or above which a pixel counts as clipped.
pub const SATURATION_LEVEL: f64 = 0.995;

const HIGHLIGHT_PERCENTILE: f64 = 0.995;
const SATURATED_DISK_FRACTION: f64 = 0.2;
const MATTE_INCIDENCE_GATE: f64 = 0.2;
const MIN_MATTE_PIXELS: usize = 50;
const UNIT_TOLERANCE: f64 = 1e-6;
const MANIFEST_UNIT_TOLERANCE: f64 = 1e-3;
const RANK_TOLERANCE: f64 = 1e-6;

/// Directions (surface toward light) and relative intensities of `k` lights.
#[derive(Debug, Clone, PartialEq)]
pub struct LightSet {
    directions: Vec<Vector3<f64>>,
    intensities: Vec<f64>,
}

impl LightSet {
    pub fn new(directions: Vec<Vector3<f64>>, intensities: Vec<f64>) -> Result<Self> {
        if directions.len() != intensities.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} intensities", directions.len()),
                found: format!("{}", intensities.len()),
            });
        }
        for (j, (d, &phi)) in directions.iter().zip(&intensities).enumerate() {
            if !d.iter().all(|v| v.is_finite()) || (d.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::InvalidLight(format!(
                    "light {j}: direction norm {} is not 1",
                    d.norm()
                )));
            }
            if !(phi > 0.0 && phi.is_finite()) {
                return Err(Error::InvalidLight(format!(
                    "light {j}: intensity {phi} is not positive"
                )));
            }
        }
        Ok(Self {
            directions,
            intensities,
        })
    }

    /// Unit-intensity light set.
    pub fn from_directions(directions: Vec<Vector3<f64>>) -> Result<Self> {
        let n = directions.len();
        Self::new(directions, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vector3<f64>] {
        &self.directions
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn direction(&self, j: usize) -> Vector3<f64> {
        self.directions[j]
    }

    pub fn intensity(&self, j: usize) -> f64 {
        self.intensities[j]
    }

    /// Numerical rank of the `k × 3` direction matrix.
    pub fn rank(&self) -> usize {
        if self.directions.is_empty() {
            return 0;
        }
        let m = DMatrix::from_fn(self.len(), 3, |r, c| self.directions[r][c]);
        let sv = m.singular_values();
        let max = sv.max();
        sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
    }

    pub fn ensure_rank3(&self) -> Result<()> {
        let rank = self.rank();
        if rank < 3 {
            return Err(Error::RankDeficient(format!(
                "light set: direction matrix has rank {rank}, lights are coplanar"
            )));
        }
        Ok(())
    }

    pub fn to_file(&self) -> LightsFile {
        LightsFile {
            lights: self
                .directions
                .iter()
                .zip(&self.intensities)
                .map(|(d, &intensity)| LightEntry {
                    dir: [d.x, d.y, d.z],
                    intensity,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("light set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LightsFile = serde_json::from_str(text)?;
        let (dirs, intens) = file
            .lights
            .iter()
            .enumerate()
            .map(|(j, e)| Ok((unit_within(e.dir, MANIFEST_UNIT_TOLERANCE, j)?, e.intensity)))
            .collect::<Result<(Vec<_>, Vec<_>)>>()?;
        Self::new(dirs, intens)
    }
}

/// One serialized light: `{"dir": [x, y, z], "intensity": s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightEntry {
    pub dir: [f64; 3],
    pub intensity: f64,
}

/// `lights.json`: `{"lights": [{"dir": [...], "intensity": s}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightsFile {
    pub lights: Vec<LightEntry>,
}

fn unit_within(dir: [f64; 3], tolerance: f64, index: usize) -> Result<Vector3<f64>> {
    let v = Vector3::from(dir);
    let norm = v.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > tolerance {
        return Err(Error::InvalidLight(format!(
            "light {index}: direction norm {norm} deviates from 1 by more than {tolerance}"
        )));
    }
    Ok(v / norm)
}

/// Surface finish of a reference sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finish {
    Specular,
    Matte,
}

/// Operator-placed sphere: subpixel center `(row, col)`, radius in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereAnnotation {
    pub center: [f64; 2],
    pub radius: f64,
    pub finish: Finish,
}

impl SphereAnnotation {
    pub fn new(row: f64, col: f64, radius: f64, finish: Finish) -> Self {
        Self {
            center: [row, col],
            radius,
            finish,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let [r0, c0] = self.center;
        let radius = self.radius;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidSphere(format!("radius {radius}")));
        }
        let inside = r0 - radius >= 0.0
            && c0 - radius >= 0.0
            && r0 + radius <= (height as f64 - 1.0)
            && c0 + radius <= (width as f64 - 1.0);
        if !inside {
            return Err(Error::InvalidSphere(format!(
                "disk at ({r0}, {c0}) radius {radius} leaves the {width}x{height} image"
            )));
        }
        Ok(())
    }

    /// Whether pixel center `(row, col)` lies strictly inside the disk.
    #[inline]
    pub fn contains(&self, row: f64, col: f64) -> bool {
        let (dr, dc) = (row - self.center[0], col - self.center[1]);
        dr * dr + dc * dc < self.radius * self.radius
    }

    /// Outward sphere normal seen at image position `(row, col)`.
    pub fn normal_at(&self, row: f64, col: f64) -> Vector3<f64> {
        let dx = (col - self.center[1]) / self.radius;
        let dy = (self.center[0] - row) / self.radius;
        let nz = (1.0 - dx * dx - dy * dy).max(0.0).sqrt();
        Vector3::new(dx, dy, nz)
    }

    /// Integer pixel bounding box `(row_lo, row_hi, col_lo, col_hi)`, inclusive.
    fn bounds(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let [r0, c0] = self.center;
        let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        (
            clamp((r0 - self.radius).floor(), height - 1),
            clamp((r0 + self.radius).ceil(), height - 1),
            clamp((c0 - self.radius).floor(), width - 1),
            clamp((c0 + self.radius).ceil(), width - 1),
        )
    }

    /// In-disk pixels as `(row, col, luminance, max channel)`.
    fn disk_pixels(&self, image: &RasterImage) -> Vec<(usize, usize, f64, f64)> {
        let (r_lo, r_hi, c_lo, c_hi) = self.bounds(image.width(), image.height());
        let mut out = Vec::new();
        for row in r_lo..=r_hi {
            for col in c_lo..=c_hi {
                if self.contains(row as f64, col as f64) {
                    let px = image.pixel(row, col);
                    let peak = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    out.push((row, col, image.luminance(row, col), peak));
                }
            }
        }
        out
    }
}

/// Mirror reflection of the view vector `(0, 0, 1)` about `normal`.
pub fn reflect_view(normal: &Vector3<f64>) -> Vector3<f64> {
    let v = Vector3::z();
    2.0 * normal.dot(&v) * normal - v
}

/// Light direction recovered from one specular sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct HighlightEstimate {
    pub direction: Vector3<f64>,
    /// Intensity-weighted highlight centroid `(row, col)`.
    pub centroid: (f64, f64),
    /// Fraction of disk pixels at or above [`SATURATION_LEVEL`].
    pub saturated_fraction: f64,
}

impl HighlightEstimate {
    /// Clipping covers more than a fifth of the disk; the estimate is kept but suspect.
    pub fn is_saturated(&self) -> bool {
        self.saturated_fraction > SATURATED_DISK_FRACTION
    }
}

/// Locates the highlight on a mirror sphere and reflects the view ray.
///
/// The highlight is the intensity-weighted centroid of disk pixels at or above
/// the 99.5th percentile of in-disk luminance.
pub fn estimate_direction_from_specular_sphere(
    image: &RasterImage,
    sphere: &SphereAnnotation,
) -> Result<HighlightEstimate> {
    if sphere.finish != Finish::Specular {
        return Err(Error::InvalidSphere(
            "direction estimation needs a specular sphere".into(),
        ));
    }
    sphere.validate(image.width(), image.height())?;
    let pixels = sphere.disk_pixels(image);
    if pixels.is_empty() {
        return Err(Error::InvalidSphere("disk covers no pixel centers".into()));
    }

    let mut values: Vec<f64> = pixels.iter().map(|p| p.2).collect();
    values.sort_by(f64::total_cmp);
    let rank =
        ((HIGHLIGHT_PERCENTILE * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let threshold = values[rank - 1];
    if threshold <= 0.0 || threshold <= values[0] {
        return Err(Error::NoHighlight);
    }

    let (mut sw, mut sr, mut sc) = (0.0, 0.0, 0.0);
    for &(row, col, v, _) in &pixels {
        if v >= threshold {
            sw += v;
            sr += v * row as f64;
            sc += v * col as f64;
        }
    }
    let centroid = (sr / sw, sc / sw);
    if !sphere.contains(centroid.0, centroid.1) {
        return Err(Error::HighlightOutsideDisk {
            row: centroid.0,
            col: centroid.1,
        });
    }

    let normal = sphere.normal_at(centroid.0, centroid.1);
    let direction = reflect_view(&normal).normalize();
    let saturated =
        pixels.iter().filter(|p| p.3 >= SATURATION_LEVEL).count() as f64 / pixels.len() as f64;
    Ok(HighlightEstimate {
        direction,
        centroid,
        saturated_fraction: saturated,
    })
}

/// Least-squares light intensity from a Lambertian sphere with known direction.
///
/// Uses unsaturated disk pixels whose analytic normal satisfies
/// `n·l > 0.2`; the result absorbs the sphere's own albedo.
pub fn estimate_intensity_from_matte_sphere(
    image: &RasterImage,
    sphere: &SphereAnnotation,
    direction: &Vector3<f64>,
) -> Result<f64> {
    if sphere.finish != Finish::Matte {
        return Err(Error::InvalidSphere(
            "intensity estimation needs a matte sphere".into(),
        ));
    }
    sphere.validate(image.width(), image.height())?;
    if (direction.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidLight(format!(
            "direction norm {} is not 1",
            direction.norm()
        )));
    }

    let (mut num, mut den, mut used) = (0.0, 0.0, 0usize);
    for (row, col, v, peak) in sphere.disk_pixels(image) {
        let shading = sphere.normal_at(row as f64, col as f64).dot(direction);
        if shading > MATTE_INCIDENCE_GATE && peak < SATURATION_LEVEL {
            num += v * shading;
            den += shading * shading;
            used += 1;
        }
    }
    if used < MIN_MATTE_PIXELS {
        return Err(Error::TooFewUsablePixels {
            required: MIN_MATTE_PIXELS,
            found: used,
        });
    }
    let phi = num / den;
    if !(phi > 0.0) {
        return Err(Error::NonPositiveIntensity(phi));
    }
    Ok(phi)
}

/// Per-sphere outcome for one image.
#[derive(Debug, Clone, Serialize)]
pub struct SphereReport {
    pub sphere: usize,
    pub direction: [f64; 3],
    pub centroid: [f64; 2],
    /// Angle between this sphere's estimate and the averaged direction.
    pub residual_deg: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageReport {
    pub image: usize,
    pub spheres: Vec<SphereReport>,
    /// `None` when no matte sphere was annotated.
    pub matte_intensity: Option<f64>,
}

/// Calibrated lights plus per-image diagnostics.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub lights: LightSet,
    pub reports: Vec<ImageReport>,
}

/// Calibrates every image of a stack from the annotated spheres.
///
/// Directions from several specular spheres are averaged; intensities come
/// from the matte spheres (averaged) or default to 1 with a warning.
pub fn calibrate_from_spheres(
    stack: &ImageStack,
    spheres: &[SphereAnnotation],
) -> Result<Calibration> {
    if stack.len() < 3 {
        return Err(Error::TooFewImages {
            required: 3,
            found: stack.len(),
        });
    }
    for s in spheres {
        s.validate(stack.width(), stack.height())?;
    }
    let specular: Vec<usize> = (0..spheres.len())
        .filter(|&i| spheres[i].finish == Finish::Specular)
        .collect();
    let matte: Vec<usize> = (0..spheres.len())
        .filter(|&i| spheres[i].finish == Finish::Matte)
        .collect();
    if specular.is_empty() {
        return Err(Error::InvalidSphere(
            "at least one specular sphere is required".into(),
        ));
    }
    if matte.is_empty() {
        log::warn!("no matte sphere annotated; all light intensities set to 1");
    }

    let per_image: Vec<(Vector3<f64>, f64, ImageReport)> = stack
        .images()
        .par_iter()
        .enumerate()
        .map(|(index, image)| {
            calibrate_image(image, spheres, &specular, &matte, index)
                .map_err(|e| Error::at_image(index, e))
        })
        .collect::<Result<_>>()?;

    let mut directions = Vec::with_capacity(per_image.len());
    let mut intensities = Vec::with_capacity(per_image.len());
    let mut reports = Vec::with_capacity(per_image.len());
    for (d, phi, report) in per_image {
        for s in &report.spheres {
            if s.saturated {
                log::warn!(
                    "image {}: sphere {} highlight is saturated over more than 20% of the disk",
                    report.image,
                    s.sphere
                );
            }
        }
        directions.push(d);
        intensities.push(phi);
        reports.push(report);
    }
    let lights = LightSet::new(directions, intensities)?;
    lights.ensure_rank3()?;
    Ok(Calibration { lights, reports })
}

fn calibrate_image(
    image: &RasterImage,
    spheres: &[SphereAnnotation],
    specular: &[usize],
    matte: &[usize],
    index: usize,
) -> Result<(Vector3<f64>, f64, ImageReport)> {
    let estimates = specular
        .iter()
        .map(|&i| estimate_direction_from_specular_sphere(image, &spheres[i]))
        .collect::<Result<Vec<_>>>()?;
    let sum: Vector3<f64> = estimates.iter().map(|e| e.direction).sum();
    let direction = sum.normalize();

    let reports = specular
        .iter()
        .zip(&estimates)
        .map(|(&i, e)| SphereReport {
            sphere: i,
            direction: [e.direction.x, e.direction.y, e.direction.z],
            centroid: [e.centroid.0, e.centroid.1],
            residual_deg: angle_deg(&e.direction, &direction),
            saturated: e.is_saturated(),
        })
        .collect();

    let matte_intensity = if matte.is_empty() {
        None
    } else {
        let total = matte
            .iter()
            .map(|&i| estimate_intensity_from_matte_sphere(image, &spheres[i], &direction))
            .sum::<Result<f64>>()?;
        Some(total / matte.len() as f64)
    };

    Ok((
        direction,
        matte_intensity.unwrap_or(1.0),
        ImageReport {
            image: index,
            spheres: reports,
            matte_intensity,
        },
    ))
}

/// Angle between two directions in degrees.
pub fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    // atan2 keeps precision for nearly parallel vectors, unlike acos
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Pre-calibrated RTI dome description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomeManifest {
    pub dome_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub led_count: Option<usize>,
    pub leds: Vec<LightEntry>,
}

impl DomeManifest {
    pub fn led_count(&self) -> usize {
        self.leds.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Manifest(format!("schema mismatch: {e}")))
    }

    /// Validates every LED and returns the lights in LED order.
    ///
    /// Directions within 1e-3 of unit length are renormalized; others are
    /// rejected, as are lower-hemisphere directions and non-positive intensities.
    pub fn to_light_set(&self) -> Result<LightSet> {
        if self.leds.is_empty() {
            return Err(Error::Manifest("no LEDs".into()));
        }
        if let Some(n) = self.led_count {
            if n != self.leds.len() {
                return Err(Error::Manifest(format!(
                    "led_count {n} but {} entries",
                    self.leds.len()
                )));
            }
        }
        let mut dirs = Vec::with_capacity(self.leds.len());
        let mut intens = Vec::with_capacity(self.leds.len());
        for (j, led) in self.leds.iter().enumerate() {
            let d = unit_within(led.dir, MANIFEST_UNIT_TOLERANCE, j)
                .map_err(|e| Error::Manifest(e.to_string()))?;
            if d.z <= 0.0 {
                return Err(Error::Manifest(format!(
                    "LED {j}: direction is not in the upper hemisphere"
                )));
            }
            if !(led.intensity > 0.0 && led.intensity.is_finite()) {
                return Err(Error::Manifest(format!(
                    "LED {j}: intensity {} is not positive",
                    led.intensity
                )));
            }
            dirs.push(d);
            intens.push(led.intensity);
        }
        LightSet::new(dirs, intens)
    }
}

pub fn load_dome_manifest(path: impl AsRef<Path>) -> Result<LightSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DomeManifest::from_json(&text)?.to_light_set()
}
