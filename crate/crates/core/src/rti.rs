//! Polynomial texture maps (LRGB PTM).
//!
//! Each pixel stores six luminance coefficients for the biquadratic basis
//! `(u², v², uv, u, v, 1)` over the light's in-plane components
//! `(u, v) = (l_x, l_y)`, plus a static chroma triple with unit mean.
//! Evaluation clamps negative luminance to zero; fitting stays linear.

use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Matrix6, Vector2, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::{
    load_image, load_mask, mean, save_map, save_mask, Colorspace, ImageStack, MapFormat, Mask,
    RasterImage,
};
use crate::lightcal::{LightSet, SATURATION_LEVEL};
use crate::psolve::NormalField;

/// Observed luminance below this is treated as shadowed.
pub const SHADOW_LEVEL: f64 = 0.02;
const SHADOW_WEIGHT: f64 = 0.1;
const DESIGN_RANK_TOLERANCE: f64 = 1e-8;
pub const BASIS_NAME: &str = "ptm6-lrgb";

#[inline]
pub fn ptm_basis(u: f64, v: f64) -> Vector6<f64> {
    Vector6::new(u * u, v * v, u * v, u, v, 1.0)
}

/// Per-pixel LRGB polynomial texture map. Output renders always have three
/// channels; gray stacks get unit chroma.
#[derive(Debug, Clone, PartialEq)]
pub struct PtmModel {
    width: usize,
    height: usize,
    coefficients: Vec<[f64; 6]>,
    chroma: Vec<[f64; 3]>,
    mask: Mask,
    fit_rmse: Vec<f64>,
}

impl PtmModel {
    pub fn new(
        width: usize,
        height: usize,
        coefficients: Vec<[f64; 6]>,
        chroma: Vec<[f64; 3]>,
        mask: Mask,
        fit_rmse: Vec<f64>,
    ) -> Result<Self> {
        mask.check_dims(width, height)?;
        let n = width * height;
        if coefficients.len() != n || chroma.len() != n || fit_rmse.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} entries per PTM layer"),
                found: format!(
                    "{}, {}, {}",
                    coefficients.len(),
                    chroma.len(),
                    fit_rmse.len()
                ),
            });
        }
        for i in (0..n).filter(|&i| mask.at(i)) {
            if coefficients[i].iter().any(|a| !a.is_finite()) {
                return Err(Error::OutOfRange(format!("non-finite coefficient at {i}")));
            }
            let ch = chroma[i];
            if ch.iter().any(|&c| !(c >= 0.0)) || (mean(&ch) - 1.0).abs() > 1e-6 {
                return Err(Error::OutOfRange(format!(
                    "chroma {ch:?} at {i} is not non-negative with unit mean"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            coefficients,
            chroma,
            mask,
            fit_rmse,
        })
    }

    /// Same coefficients everywhere, gray chroma.
    pub fn uniform(width: usize, height: usize, coefficients: [f64; 6]) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            coefficients: vec![coefficients; n],
            chroma: vec![[1.0; 3]; n],
            mask: Mask::full(width, height),
            fit_rmse: vec![0.0; n],
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

    pub fn coefficients(&self) -> &[[f64; 6]] {
        &self.coefficients
    }

    pub fn chroma(&self) -> &[[f64; 3]] {
        &self.chroma
    }

    pub fn fit_rmse(&self) -> &[f64] {
        &self.fit_rmse
    }

    /// Unclamped polynomial luminance at pixel `index`.
    #[inline]
    pub fn luminance(&self, index: usize, u: f64, v: f64) -> f64 {
        Vector6::from(self.coefficients[index]).dot(&ptm_basis(u, v))
    }
}

/// Least-squares PTM fit; needs `k >= 6` lights whose design matrix has full rank.
///
/// Observed luminance (channel mean) below [`SHADOW_LEVEL`] is kept with
/// weight 0.1. Chroma averages `channel / luminance` over unsaturated,
/// unshadowed observations.
pub fn fit_ptm(stack: &ImageStack, lights: &LightSet) -> Result<PtmModel> {
    let k = stack.len();
    if k < 6 {
        return Err(Error::TooFewImages {
            required: 6,
            found: k,
        });
    }
    if lights.len() != k {
        return Err(Error::DimensionMismatch {
            expected: format!("{} images (one per light)", lights.len()),
            found: format!("{k}"),
        });
    }
    let basis: Vec<Vector6<f64>> = lights
        .directions()
        .iter()
        .map(|d| ptm_basis(d.x, d.y))
        .collect();
    let design = DMatrix::from_fn(k, 6, |r, c| basis[r][c]);
    let sv = design.singular_values();
    if sv.min() <= DESIGN_RANK_TOLERANCE * sv.max() {
        return Err(Error::RankDeficient(
            "PTM design matrix: light positions do not span the biquadratic basis".into(),
        ));
    }
    let outer: Vec<Matrix6<f64>> = basis.iter().map(|b| b * b.transpose()).collect();

    let (w, h, ch) = (stack.width(), stack.height(), stack.channels());
    let fits: Vec<Option<PixelFit>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if !stack.mask().at(i) {
                return None;
            }
            fit_pixel(stack, lights, &basis, &outer, i, ch)
        })
        .collect();

    let mut coefficients = Vec::with_capacity(w * h);
    let mut chroma = Vec::with_capacity(w * h);
    let mut rmse = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for fit in fits {
        match fit {
            Some((a, c, r)) => {
                coefficients.push(a);
                chroma.push(c);
                rmse.push(r);
                valid.push(true);
            }
            None => {
                coefficients.push([0.0; 6]);
                chroma.push([1.0; 3]);
                rmse.push(0.0);
                valid.push(false);
            }
        }
    }
    PtmModel::new(w, h, coefficients, chroma, Mask::new(w, h, valid)?, rmse)
}

/// Coefficients, chroma and RMSE of one pixel.
type PixelFit = ([f64; 6], [f64; 3], f64);

fn fit_pixel(
    stack: &ImageStack,
    lights: &LightSet,
    basis: &[Vector6<f64>],
    outer: &[Matrix6<f64>],
    index: usize,
    channels: usize,
) -> Option<PixelFit> {
    let k = stack.len();
    let mut normal = Matrix6::zeros();
    let mut rhs = Vector6::zeros();
    let mut lum = Vec::with_capacity(k);
    let mut ratio = [0.0; 3];
    let mut ratio_count = 0usize;
    for j in 0..k {
        let px = stack.image(j).pixel_at(index);
        let observed = mean(px);
        let y = observed / lights.intensity(j);
        let weight = if observed < SHADOW_LEVEL {
            SHADOW_WEIGHT
        } else {
            1.0
        };
        normal += outer[j] * weight;
        rhs += basis[j] * (weight * y);
        lum.push(y);
        if channels == 3 && observed > SHADOW_LEVEL && px.iter().all(|&v| v < SATURATION_LEVEL) {
            for c in 0..3 {
                ratio[c] += px[c] / observed;
            }
            ratio_count += 1;
        }
    }
    let a = normal.cholesky()?.solve(&rhs);
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let sq: f64 = (0..k).map(|j| (lum[j] - a.dot(&basis[j])).powi(2)).sum();
    let rmse = (sq / k as f64).sqrt();

    let chroma = if ratio_count > 0 {
        let m = mean(&ratio);
        if m > 0.0 {
            [ratio[0] / m, ratio[1] / m, ratio[2] / m]
        } else {
            [1.0; 3]
        }
    } else {
        [1.0; 3]
    };
    Some((a.into(), chroma, rmse))
}

/// Renders the model under `light` (upper hemisphere, unit length).
pub fn eval_ptm(model: &PtmModel, light: &Vector3<f64>) -> Result<RasterImage> {
    if !(light.z > 0.0) {
        return Err(Error::InvalidLight(
            "PTM evaluation needs an upper-hemisphere light".into(),
        ));
    }
    if (light.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidLight(format!(
            "direction norm {} is not 1",
            light.norm()
        )));
    }
    let b = ptm_basis(light.x, light.y);
    let (w, h) = (model.width, model.height);
    let data: Vec<f64> = (0..w * h)
        .into_par_iter()
        .flat_map_iter(|i| {
            let lum = if model.mask.at(i) {
                Vector6::from(model.coefficients[i]).dot(&b).max(0.0)
            } else {
                0.0
            };
            let chroma = model.chroma[i];
            chroma.into_iter().map(move |c| lum * c)
        })
        .collect();
    RasterImage::new(w, h, 3, data)
}

/// Normals from the in-plane position of each pixel's luminance maximum.
#[derive(Debug, Clone)]
pub struct PtmNormals {
    pub normals: NormalField,
    /// Fraction of model-valid pixels rejected as saddles or maxima outside the unit disk.
    pub invalid_fraction: f64,
}

/// Maximum of one pixel's biquadratic: `None` unless the Hessian is
/// negative definite and the stationary point lies inside the unit disk.
pub fn ptm_peak(a: &[f64; 6]) -> Option<Vector3<f64>> {
    let hessian = Matrix2::new(2.0 * a[0], a[2], a[2], 2.0 * a[1]);
    let negative_definite = hessian[(0, 0)] < 0.0 && hessian.determinant() > 0.0;
    if !negative_definite {
        return None;
    }
    let uv = hessian.lu().solve(&Vector2::new(-a[3], -a[4]))?;
    let r2 = uv.norm_squared();
    if r2 >= 1.0 {
        return None;
    }
    Some(Vector3::new(uv.x, uv.y, (1.0 - r2).sqrt()))
}

pub fn ptm_to_normals(model: &PtmModel) -> PtmNormals {
    let w = model.width;
    let mut rejected = 0usize;
    let normals = NormalField::from_fn(w, model.height, |r, c| {
        let i = r * w + c;
        if !model.mask.at(i) {
            return None;
        }
        let peak = ptm_peak(&model.coefficients[i]);
        if peak.is_none() {
            rejected += 1;
        }
        peak
    });
    let total = model.mask.count();
    PtmNormals {
        normals,
        invalid_fraction: if total == 0 {
            0.0
        } else {
            rejected as f64 / total as f64
        },
    }
}

/// `ptm.json` in a PTM archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtmDescriptor {
    pub basis: String,
    pub width: usize,
    pub height: usize,
}

pub const COEFFS_A_FILE: &str = "coeffs_a.pfm";
pub const COEFFS_B_FILE: &str = "coeffs_b.pfm";
pub const CHROMA_FILE: &str = "chroma.pfm";
pub const MASK_FILE: &str = "mask.png";
pub const RMSE_FILE: &str = "fit_rmse.pfm";
pub const DESCRIPTOR_FILE: &str = "ptm.json";

/// Writes the archive: `(a0, a1, a2)` and `(a3, a4, a5)` as two 3-channel
/// PFMs, chroma PFM, fit RMSE PFM, mask PNG, and `ptm.json`.
pub fn save_ptm_archive(model: &PtmModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h) = (model.width, model.height);
    let layer = |f: &dyn Fn(usize) -> [f64; 3]| {
        RasterImage::from_fn(w, h, 3, |r, c, px| {
            let i = r * w + c;
            if model.mask.at(i) {
                px.copy_from_slice(&f(i));
            }
        })
    };
    let co = &model.coefficients;
    save_map(
        &layer(&|i| [co[i][0], co[i][1], co[i][2]]),
        dir.join(COEFFS_A_FILE),
        MapFormat::Pfm,
    )?;
    save_map(
        &layer(&|i| [co[i][3], co[i][4], co[i][5]]),
        dir.join(COEFFS_B_FILE),
        MapFormat::Pfm,
    )?;
    save_map(
        &layer(&|i| model.chroma[i]),
        dir.join(CHROMA_FILE),
        MapFormat::Pfm,
    )?;
    let rmse = RasterImage::new(w, h, 1, model.fit_rmse.clone())?;
    save_map(&rmse, dir.join(RMSE_FILE), MapFormat::Pfm)?;
    save_mask(&model.mask, dir.join(MASK_FILE))?;
    let descriptor = PtmDescriptor {
        basis: BASIS_NAME.into(),
        width: w,
        height: h,
    };
    let path = dir.join(DESCRIPTOR_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&descriptor)?)
        .map_err(|e| Error::io(&path, e))
}

pub fn load_ptm_archive(dir: impl AsRef<Path>) -> Result<PtmModel> {
    let dir = dir.as_ref();
    let path = dir.join(DESCRIPTOR_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let descriptor: PtmDescriptor = serde_json::from_str(&text)?;
    if descriptor.basis != BASIS_NAME {
        return Err(Error::Unsupported(format!(
            "PTM basis {:?}",
            descriptor.basis
        )));
    }
    let (w, h) = (descriptor.width, descriptor.height);
    let load = |name: &str, channels: usize| -> Result<RasterImage> {
        let img = load_image(dir.join(name), Colorspace::Linear)?;
        if img.width() != w || img.height() != h || img.channels() != channels {
            return Err(Error::DimensionMismatch {
                expected: format!("{w}x{h}x{channels}"),
                found: format!(
                    "{}x{}x{} in {name}",
                    img.width(),
                    img.height(),
                    img.channels()
                ),
            });
        }
        Ok(img)
    };
    let a = load(COEFFS_A_FILE, 3)?;
    let b = load(COEFFS_B_FILE, 3)?;
    let chroma_img = load(CHROMA_FILE, 3)?;
    let rmse = load(RMSE_FILE, 1)?;
    let mask = load_mask(dir.join(MASK_FILE))?;
    mask.check_dims(w, h)?;

    let mut coefficients = Vec::with_capacity(w * h);
    let mut chroma = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let (pa, pb) = (a.pixel_at(i), b.pixel_at(i));
        coefficients.push([pa[0], pa[1], pa[2], pb[0], pb[1], pb[2]]);
        let c = chroma_img.pixel_at(i);
        // f32 storage perturbs the unit mean slightly; restore it
        let m = mean(c);
        chroma.push(if mask.at(i) && m > 0.0 {
            [c[0] / m, c[1] / m, c[2] / m]
        } else {
            [1.0; 3]
        });
    }
    PtmModel::new(w, h, coefficients, chroma, mask, rmse.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagery::Mask;

    fn hemisphere_lights(k: usize) -> LightSet {
        let dirs = (0..k)
            .map(|i| {
                let a = i as f64 * 2.399963; // golden angle
                let e = 0.35 + 1.1 * (i as f64 + 0.5) / k as f64;
                Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
            })
            .collect();
        LightSet::from_directions(dirs).unwrap()
    }

    fn stack_from(lum: impl Fn(&Vector3<f64>) -> f64, lights: &LightSet) -> ImageStack {
        let images = lights
            .directions()
            .iter()
            .map(|l| RasterImage::new(1, 1, 1, vec![lum(l)]).unwrap())
            .collect();
        ImageStack::new(images, Mask::full(1, 1), "t").unwrap()
    }

    #[test]
    fn constant_pixel_fits_constant_term() {
        let lights = hemisphere_lights(12);
        let model = fit_ptm(&stack_from(|_| 0.4, &lights), &lights).unwrap();
        let a = model.coefficients()[0];
        for (i, want) in [0.0, 0.0, 0.0, 0.0, 0.0, 0.4].iter().enumerate() {
            assert!((a[i] - want).abs() < 1e-12, "{a:?}");
        }
    }

    #[test]
    fn constant_model_renders_constant_image() {
        let mut model = PtmModel::uniform(2, 2, [0.0, 0.0, 0.0, 0.0, 0.0, 0.3]);
        model.chroma = vec![[0.5, 1.0, 1.5]; 4];
        for l in [Vector3::z(), Vector3::new(0.6, 0.0, 0.8)] {
            let img = eval_ptm(&model, &l).unwrap();
            for (got, want) in img.pixel(1, 1).iter().zip([0.15, 0.3, 0.45]) {
                assert!((got - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn negative_polynomial_is_clamped() {
        let model = PtmModel::uniform(1, 1, [0.0, 0.0, 0.0, -1.0, 0.0, 0.1]);
        let img = eval_ptm(&model, &Vector3::new(0.6, 0.0, 0.8)).unwrap();
        assert_eq!(img.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn lower_hemisphere_light_is_rejected() {
        let model = PtmModel::uniform(1, 1, [0.0; 6]);
        assert!(eval_ptm(&model, &Vector3::new(0.6, 0.0, -0.8)).is_err());
        assert!(eval_ptm(&model, &Vector3::x()).is_err());
    }

    #[test]
    fn collinear_lights_are_rank_deficient() {
        // all on the azimuth-0 great circle: v = 0 for every light
        let dirs = (0..8)
            .map(|i| {
                let e = 0.3 + 0.15 * i as f64;
                Vector3::new(e.cos(), 0.0, e.sin())
            })
            .collect();
        let lights = LightSet::from_directions(dirs).unwrap();
        let err = fit_ptm(&stack_from(|_| 0.5, &lights), &lights).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));
    }

    #[test]
    fn fewer_than_six_lights() {
        let lights = hemisphere_lights(5);
        assert!(matches!(
            fit_ptm(&stack_from(|_| 0.5, &lights), &lights),
            Err(Error::TooFewImages { required: 6, .. })
        ));
    }

    #[test]
    fn peak_classification() {
        // -(u - 0.3)² - (v + 0.2)² + 1
        let a = [-1.0, -1.0, 0.0, 0.6, -0.4, 0.87];
        let n = ptm_peak(&a).unwrap();
        assert!((n.x - 0.3).abs() < 1e-12 && (n.y + 0.2).abs() < 1e-12);
        // saddle
        assert!(ptm_peak(&[-1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).is_none());
        // maximum at u² + v² = 1.2
        let u = 1.2f64.sqrt();
        assert!(ptm_peak(&[-1.0, -1.0, 0.0, 2.0 * u, 0.0, 0.0]).is_none());
    }

    #[test]
    fn chroma_is_unit_mean_ratio() {
        let lights = hemisphere_lights(10);
        let images = lights
            .directions()
            .iter()
            .map(|l| {
                let s = 0.5 * l.z;
                RasterImage::new(1, 1, 3, vec![0.5 * s, s, 1.5 * s]).unwrap()
            })
            .collect();
        let stack = ImageStack::new(images, Mask::full(1, 1), "t").unwrap();
        let model = fit_ptm(&stack, &lights).unwrap();
        let c = model.chroma()[0];
        for (got, want) in c.iter().zip([0.5, 1.0, 1.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn archive_round_trip() {
        let lights = hemisphere_lights(15);
        let stack = stack_from(|l| 0.2 + 0.5 * l.z + 0.1 * l.x, &lights);
        let model = fit_ptm(&stack, &lights).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_ptm_archive(&model, dir.path()).unwrap();
        let back = load_ptm_archive(dir.path()).unwrap();
        assert_eq!(back.mask(), model.mask());
        for (a, b) in back.coefficients()[0].iter().zip(&model.coefficients()[0]) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3));
        }
        let text = std::fs::read_to_string(dir.path().join(DESCRIPTOR_FILE)).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["basis"], "ptm6-lrgb");
        assert_eq!(json["width"], 1);
    }
}
