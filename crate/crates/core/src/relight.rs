//! Lambertian relighting of a normal/albedo pair under virtual directional
//! lights, raking-light sweeps, and stack synthesis for testing.
//!
//! Shading is purely local: `I = φ ρ max(0, n·l)`. No shadows are cast.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::{save_map, ImageStack, MapFormat, Mask, RasterImage};
use crate::lightcal::LightSet;
use crate::psolve::{AlbedoMap, NormalField};

const UNIT_TOLERANCE: f64 = 1e-6;

fn check_pair(normals: &NormalField, albedo: &AlbedoMap) -> Result<()> {
    if normals.width() != albedo.width() || normals.height() != albedo.height() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", normals.width(), normals.height()),
            found: format!("{}x{}", albedo.width(), albedo.height()),
        });
    }
    Ok(())
}

fn check_light(light: &Vector3<f64>, intensity: f64) -> Result<()> {
    if (light.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidLight(format!(
            "direction norm {} is not 1",
            light.norm()
        )));
    }
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(Error::InvalidLight(format!(
            "intensity {intensity} is not positive"
        )));
    }
    Ok(())
}

/// Renders `intensity · ρ · max(0, n·light)`; pixels invalid in either input are 0.
pub fn relight_lambertian(
    normals: &NormalField,
    albedo: &AlbedoMap,
    light: &Vector3<f64>,
    intensity: f64,
) -> Result<RasterImage> {
    check_pair(normals, albedo)?;
    check_light(light, intensity)?;
    let (w, h, ch) = (normals.width(), normals.height(), albedo.channels());
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..w).flat_map(move |col| {
                let i = row * w + col;
                let shade = match normals.at(i) {
                    Some(n) if albedo.mask().at(i) => intensity * n.dot(light).max(0.0),
                    _ => 0.0,
                };
                let rho = albedo.pixel_at(i);
                (0..ch).map(move |c| if shade > 0.0 { shade * rho[c] } else { 0.0 })
            })
        })
        .collect();
    RasterImage::new(w, h, ch, data)
}

/// One render per light, masked by the validity of both inputs.
pub fn synthesize_stack(
    normals: &NormalField,
    albedo: &AlbedoMap,
    lights: &LightSet,
) -> Result<ImageStack> {
    check_pair(normals, albedo)?;
    let images = lights
        .directions()
        .iter()
        .zip(lights.intensities())
        .map(|(l, &phi)| relight_lambertian(normals, albedo, l, phi))
        .collect::<Result<Vec<_>>>()?;
    let mask = normals.mask().and(albedo.mask())?;
    ImageStack::new(images, mask, "synthetic")
}

/// Light direction at `elevation` above the image plane and `azimuth`
/// counter-clockwise from image right, both in degrees.
pub fn direction_from_angles(azimuth_deg: f64, elevation_deg: f64) -> Vector3<f64> {
    if elevation_deg == 90.0 {
        return Vector3::z();
    }
    let (e, a) = (elevation_deg.to_radians(), azimuth_deg.to_radians());
    Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
}

/// Standard deviation of luminance over `mask`, the contrast measure used
/// to compare raking renders.
pub fn frame_contrast(image: &RasterImage, mask: &Mask) -> f64 {
    let values: Vec<f64> = (0..image.pixel_count())
        .filter(|&i| mask.at(i))
        .map(|i| crate::imagery::mean(image.pixel_at(i)))
        .collect();
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// A rendered sweep frame.
#[derive(Debug, Clone)]
pub struct SweepFrame {
    pub azimuth_deg: f64,
    pub image: RasterImage,
}

/// Renders `count` frames at evenly spaced azimuths `360·i/count`.
pub fn render_sweep(
    normals: &NormalField,
    albedo: &AlbedoMap,
    elevation_deg: f64,
    count: usize,
) -> Result<Vec<SweepFrame>> {
    // 90 is accepted: every azimuth then degenerates to the zenith light
    if !(elevation_deg > 0.0 && elevation_deg <= 90.0) {
        return Err(Error::InvalidArgument(format!(
            "elevation {elevation_deg} must lie in (0, 90]"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "sweep needs at least one frame".into(),
        ));
    }
    (0..count)
        .map(|i| {
            let azimuth_deg = 360.0 * i as f64 / count as f64;
            let light = direction_from_angles(azimuth_deg, elevation_deg);
            Ok(SweepFrame {
                azimuth_deg,
                image: relight_lambertian(normals, albedo, &light, 1.0)?,
            })
        })
        .collect()
}

/// File name of a sweep frame, e.g. `rake_090.png`.
pub fn sweep_file_name(azimuth_deg: f64) -> String {
    if (azimuth_deg - azimuth_deg.round()).abs() < 1e-9 {
        format!("rake_{:03}.png", azimuth_deg.round() as i64)
    } else {
        format!("rake_{azimuth_deg:06.2}.png")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub azimuth_deg: f64,
    pub file: String,
}

/// `index.json` written next to the sweep frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub elevation_deg: f64,
    pub frames: Vec<SweepEntry>,
    /// Factor applied to the linear renders before PNG16 storage.
    pub exposure: f64,
}

/// Display exposure mapping the brightest possible unit-intensity render to 1.
pub fn default_exposure(albedo: &AlbedoMap) -> f64 {
    let max = albedo.max_value();
    if max > 0.0 {
        1.0 / max
    } else {
        1.0
    }
}

/// Stores `image · exposure`, clamped to `[0, 1]`, as PNG16.
pub fn save_exposed(image: &RasterImage, exposure: f64, path: impl AsRef<Path>) -> Result<()> {
    save_map(
        &image.map(|v| (v * exposure).clamp(0.0, 1.0)),
        path,
        MapFormat::Png16,
    )
}

/// Writes a raking sweep to `out_dir` as PNG16 frames plus `index.json`.
pub fn raking_sweep(
    normals: &NormalField,
    albedo: &AlbedoMap,
    elevation_deg: f64,
    count: usize,
    out_dir: impl AsRef<Path>,
) -> Result<SweepIndex> {
    let out_dir = out_dir.as_ref();
    let frames = render_sweep(normals, albedo, elevation_deg, count)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let exposure = default_exposure(albedo);
    let mut entries = Vec::with_capacity(frames.len());
    for frame in &frames {
        let file = sweep_file_name(frame.azimuth_deg);
        save_exposed(&frame.image, exposure, out_dir.join(&file))?;
        entries.push(SweepEntry {
            azimuth_deg: frame.azimuth_deg,
            file,
        });
    }
    let index = SweepIndex {
        elevation_deg,
        frames: entries,
        exposure,
    };
    let path: PathBuf = out_dir.join("index.json");
    let text = serde_json::to_string_pretty(&index)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(n: Vector3<f64>, rho: f64) -> (NormalField, AlbedoMap) {
        let normals = NormalField::from_fn(1, 1, |_, _| Some(n));
        let albedo = AlbedoMap::uniform(Mask::full(1, 1), &[rho]).unwrap();
        (normals, albedo)
    }

    #[test]
    fn head_on() {
        let (n, a) = single(Vector3::z(), 1.0);
        let img = relight_lambertian(&n, &a, &Vector3::z(), 1.0).unwrap();
        assert_eq!(img.data(), &[1.0]);
    }

    #[test]
    fn grazing_light_clamps_to_zero() {
        let (n, a) = single(Vector3::z(), 1.0);
        let img = relight_lambertian(&n, &a, &Vector3::x(), 1.0).unwrap();
        assert_eq!(img.data(), &[0.0]);
        let img = relight_lambertian(&n, &a, &-Vector3::z(), 1.0).unwrap();
        assert_eq!(img.data(), &[0.0]);
    }

    #[test]
    fn tilted_normal() {
        let (n, a) = single(Vector3::new(0.6, 0.0, 0.8), 1.0);
        let img = relight_lambertian(&n, &a, &Vector3::z(), 1.0).unwrap();
        assert!((img.data()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn non_unit_light_is_rejected() {
        let (n, a) = single(Vector3::z(), 1.0);
        let err = relight_lambertian(&n, &a, &Vector3::new(0.0, 0.0, 2.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidLight(_)));
        assert!(relight_lambertian(&n, &a, &Vector3::z(), 0.0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let normals = NormalField::from_fn(2, 2, |_, _| Some(Vector3::z()));
        let albedo = AlbedoMap::uniform(Mask::full(3, 2), &[1.0]).unwrap();
        assert!(matches!(
            relight_lambertian(&normals, &albedo, &Vector3::z(), 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_pixels_render_black() {
        let normals = NormalField::from_fn(2, 1, |_, c| (c == 0).then(Vector3::z));
        let albedo = AlbedoMap::uniform(Mask::full(2, 1), &[0.7]).unwrap();
        let img = relight_lambertian(&normals, &albedo, &Vector3::z(), 1.0).unwrap();
        assert_eq!(img.data(), &[0.7, 0.0]);
    }

    #[test]
    fn identity_axes_on_flat_surface() {
        let normals = NormalField::from_fn(3, 2, |_, _| Some(Vector3::z()));
        let albedo = AlbedoMap::uniform(Mask::full(3, 2), &[1.0]).unwrap();
        let lights =
            LightSet::from_directions(vec![Vector3::x(), Vector3::y(), Vector3::z()]).unwrap();
        let stack = synthesize_stack(&normals, &albedo, &lights).unwrap();
        for (j, want) in [0.0, 0.0, 1.0].iter().enumerate() {
            assert!(stack.image(j).data().iter().all(|v| v == want));
        }
        assert_eq!(stack.mask().count(), 6);
    }

    #[test]
    fn doubling_intensities_doubles_images() {
        let normals = NormalField::from_fn(4, 4, |r, c| {
            Some(Vector3::new(r as f64 * 0.1, c as f64 * 0.05, 1.0))
        });
        let albedo = AlbedoMap::uniform(Mask::full(4, 4), &[0.3, 0.5, 0.7]).unwrap();
        let dirs = vec![Vector3::new(0.6, 0.0, 0.8), Vector3::new(0.0, -0.6, 0.8)];
        let one = LightSet::new(dirs.clone(), vec![1.0, 0.5]).unwrap();
        let two = LightSet::new(dirs, vec![2.0, 1.0]).unwrap();
        let a = synthesize_stack(&normals, &albedo, &one).unwrap();
        let b = synthesize_stack(&normals, &albedo, &two).unwrap();
        for (x, y) in a.images().iter().zip(b.images()) {
            for (u, v) in x.data().iter().zip(y.data()) {
                assert_eq!(2.0 * u, *v);
            }
        }
    }

    #[test]
    fn sweep_names_and_index() {
        let normals = NormalField::from_fn(4, 4, |_, _| Some(Vector3::new(0.2, 0.0, 1.0)));
        let albedo = AlbedoMap::uniform(Mask::full(4, 4), &[0.5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let index = raking_sweep(&normals, &albedo, 20.0, 4, dir.path()).unwrap();
        let names: Vec<_> = index.frames.iter().map(|f| f.file.as_str()).collect();
        assert_eq!(
            names,
            [
                "rake_000.png",
                "rake_090.png",
                "rake_180.png",
                "rake_270.png"
            ]
        );
        for name in names {
            assert!(dir.path().join(name).exists());
        }
        let text = std::fs::read_to_string(dir.path().join("index.json")).unwrap();
        let back: SweepIndex = serde_json::from_str(&text).unwrap();
        assert_eq!(back, index);
        assert_eq!(index.exposure, 2.0);
        assert_eq!(sweep_file_name(360.0 / 7.0), "rake_051.43.png");
    }

    #[test]
    fn zenith_sweep_frames_are_identical() {
        let normals = NormalField::from_fn(5, 5, |r, c| {
            Some(Vector3::new(
                r as f64 * 0.1 - 0.2,
                c as f64 * 0.1 - 0.2,
                1.0,
            ))
        });
        let albedo = AlbedoMap::uniform(Mask::full(5, 5), &[0.8]).unwrap();
        let frames = render_sweep(&normals, &albedo, 90.0, 6).unwrap();
        for f in &frames[1..] {
            assert_eq!(f.image, frames[0].image);
        }
    }

    #[test]
    fn sweep_argument_guards() {
        let (n, a) = single(Vector3::z(), 1.0);
        assert!(render_sweep(&n, &a, 0.0, 4).is_err());
        assert!(render_sweep(&n, &a, 95.0, 4).is_err());
        assert!(render_sweep(&n, &a, 30.0, 0).is_err());
    }

    #[test]
    fn unwritable_sweep_directory() {
        let (n, a) = single(Vector3::z(), 1.0);
        let file = tempfile::NamedTempFile::new().unwrap();
        // a regular file cannot host the sweep directory
        let err = raking_sweep(&n, &a, 30.0, 2, file.path().join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn render_is_linear_and_bounded(
            nx in -0.9f64..0.9, ny in -0.9f64..0.9, rho in 0.0f64..2.0,
            az in 0.0f64..360.0, el in 1.0f64..90.0, phi in 0.1f64..5.0, s in 0.1f64..4.0,
        ) {
            let (n, a) = single(Vector3::new(nx, ny, 1.0), rho);
            let l = direction_from_angles(az, el);
            let base = relight_lambertian(&n, &a, &l, phi).unwrap().data()[0];
            prop_assert!(base <= phi * rho + 1e-12);
            let scaled_i = relight_lambertian(&n, &a, &l, phi * s).unwrap().data()[0];
            prop_assert!((scaled_i - s * base).abs() < 1e-12);
            let (_, a2) = single(Vector3::z(), rho * s);
            let scaled_rho = relight_lambertian(&n, &a2, &l, phi).unwrap().data()[0];
            prop_assert!((scaled_rho - s * base).abs() < 1e-12);
        }
    }
}
