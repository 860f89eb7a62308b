//! Synthetic capture sessions with known ground truth, written as job
//! directories the CLI can run on.

use std::path::{Path, PathBuf};

use lumen3d_core::imagery::{save_map, MapFormat, RasterImage};
use lumen3d_core::lightcal::{DomeManifest, LightEntry};
use lumen3d_core::synthetic::{
    dome_layout, paint_matte_sphere, paint_specular_sphere, random_lights, smooth_albedo,
    SmoothSurface,
};
use lumen3d_core::{
    relight_lambertian, AlbedoMap, Finish, NormalField, Result, SphereAnnotation, Vector3,
};
use serde_json::json;

pub const SPHERE_SCENE: (usize, usize) = (160, 150);
pub const MIRROR: SphereAnnotation = SphereAnnotation {
    center: [36.0, 36.0],
    radius: 30.0,
    finish: Finish::Specular,
};
pub const MATTE: SphereAnnotation = SphereAnnotation {
    center: [36.0, 122.0],
    radius: 30.0,
    finish: Finish::Matte,
};

fn write_job(dir: &Path, job: serde_json::Value) -> Result<PathBuf> {
    let path = dir.join("job.json");
    let text = serde_json::to_string_pretty(&job)?;
    std::fs::write(&path, text).map_err(|e| lumen3d_core::Error::io(&path, e))?;
    Ok(path)
}

/// A color object photographed next to a mirror and a matte sphere under
/// `count` lights (PNG16 images). Returns the job file path.
pub fn write_sphere_session(dir: &Path, count: usize, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| lumen3d_core::Error::io(dir, e))?;
    let (w, h) = SPHERE_SCENE;
    let normals = SmoothSurface::random(w, h, 30.0, seed).normals(w, h);
    let albedo = smooth_albedo(normals.mask(), 3, seed + 1)?;
    let lights = random_lights(count, 35.0, seed + 2);
    let mut names = Vec::with_capacity(count);
    for (j, l) in lights.iter().enumerate() {
        let intensity = 0.75 + 0.2 * (j as f64 / count.max(1) as f64);
        let mut img = relight_lambertian(&normals, &albedo, l, intensity)?;
        paint_specular_sphere(&mut img, &MIRROR, l, 0.9 * intensity);
        paint_matte_sphere(&mut img, &MATTE, l, intensity, 1.0);
        let name = format!("img_{j:03}.png");
        save_map(&img, dir.join(&name), MapFormat::Png16)?;
        names.push(name);
    }
    write_job(
        dir,
        json!({
            "images": names,
            "colorspace": "linear",
            "spheres": [MIRROR, MATTE],
            "solver": "robust",
            "region": {"rect": [70, 10, 75, 140]},
            "output_dir": "out",
            "pixel_pitch": 0.05,
            "relight": {"light": [0.0, -0.5, 0.8660254037844386], "intensity": 1.0},
            "sweep": {"elevation_deg": 10.0, "count": 8},
            "asset_id": "synthetic-spheres"
        }),
    )
}

/// A gray object captured in the 105-LED dome (PFM images) with its manifest.
pub fn write_dome_session(dir: &Path, size: usize, seed: u64) -> Result<PathBuf> {
    let normals = SmoothSurface::random(size, size, 25.0, seed).normals(size, size);
    let albedo = smooth_albedo(normals.mask(), 1, seed + 1)?;
    write_dome_session_for(dir, &normals, &albedo)
}

/// Dome session rendering a given surface.
pub fn write_dome_session_for(
    dir: &Path,
    normals: &NormalField,
    albedo: &AlbedoMap,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| lumen3d_core::Error::io(dir, e))?;
    let dirs: Vec<Vector3<f64>> = dome_layout();
    let mut leds = Vec::with_capacity(dirs.len());
    let mut names = Vec::with_capacity(dirs.len());
    for (j, l) in dirs.iter().enumerate() {
        let intensity = 0.9 + 0.1 * ((j % 5) as f64 / 4.0);
        let img: RasterImage = relight_lambertian(normals, albedo, l, intensity)?;
        let name = format!("led_{j:03}.pfm");
        save_map(&img, dir.join(&name), MapFormat::Pfm)?;
        names.push(name);
        leds.push(LightEntry {
            dir: [l.x, l.y, l.z],
            intensity,
        });
    }
    let manifest = DomeManifest {
        dome_id: "synthetic-105".into(),
        led_count: Some(leds.len()),
        leds,
    };
    let path = dir.join("dome.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| lumen3d_core::Error::io(&path, e))?;
    write_job(
        dir,
        json!({
            "images": names,
            "dome_manifest": "dome.json",
            "output_dir": "out",
            "asset_id": "synthetic-dome"
        }),
    )
}
