//! Subcommand implementations. Each writes into `<output_dir>/<command>/`.

use std::path::Path;

use lumen3d_core::imagery::{
    load_image, load_mask, save_map, Colorspace, ImageStack, MapFormat, Mask, RasterImage,
};
use lumen3d_core::integrate::{export_mesh, integrate_normals};
use lumen3d_core::lightcal::{calibrate_from_spheres, load_dome_manifest, ImageReport};
use lumen3d_core::psolve::{encode_normals_rgb, solve_lambertian, solve_robust};
use lumen3d_core::relight::{default_exposure, raking_sweep, relight_lambertian, save_exposed};
use lumen3d_core::rti::{
    fit_ptm, load_ptm_archive, ptm_to_normals, save_ptm_archive, DESCRIPTOR_FILE,
};
use lumen3d_core::{AlbedoMap, Error, LightSet, NormalField, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{config, CliError, CliResult};
use crate::job::{Job, LightSource, RegionConfig, SolverChoice};
use crate::output::StageRun;

pub const CALIBRATE: &str = "calibrate";
pub const SOLVE: &str = "solve";
pub const INTEGRATE: &str = "integrate";
pub const RELIGHT: &str = "relight";
pub const SWEEP: &str = "sweep";
pub const FIT_PTM: &str = "fit-ptm";
pub const EXPORT_VIEWER: &str = "export-viewer";

pub const NORMALS_PFM: &str = "normals.pfm";
pub const NORMALS_RGB: &str = "normals_rgb.png";
pub const ALBEDO_PFM: &str = "albedo.pfm";
pub const ALBEDO_PNG: &str = "albedo.png";
pub const MANIFEST_FILE: &str = "manifest.json";

/// `manifest.json` of a viewer bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub asset_id: String,
    pub width: usize,
    pub height: usize,
    pub modes: Vec<String>,
    pub exposure: f64,
}

/// Stack of the job's images in job order, masked by the job mask minus
/// any annotated sphere disks.
fn load_stack(job: &Job) -> CliResult<ImageStack> {
    let cfg = &job.config;
    let images = cfg
        .images
        .iter()
        .enumerate()
        .map(|(i, p)| load_image(p, cfg.colorspace).map_err(|e| Error::at_image(i, e)))
        .collect::<Result<Vec<RasterImage>, Error>>()?;
    let (w, h) = (images[0].width(), images[0].height());
    let mut mask = match &cfg.mask {
        Some(p) => load_mask(p)?,
        None => Mask::full(w, h),
    };
    if let Some(spheres) = &cfg.spheres {
        for s in spheres {
            for row in 0..mask.height() {
                for col in 0..mask.width() {
                    if s.contains(row as f64, col as f64) {
                        mask.set(row, col, false);
                    }
                }
            }
        }
    }
    Ok(ImageStack::new(images, mask, job.asset_id())?)
}

/// Checks the image count against the dome before any image is decoded.
fn dome_lights(job: &Job, manifest: &Path) -> CliResult<LightSet> {
    let lights = load_dome_manifest(manifest)
        .map_err(|e| config(format!("dome manifest {}: {e}", manifest.display())))?;
    let n = job.config.images.len();
    if n != lights.len() {
        return Err(config(format!(
            "job lists {n} images but the dome manifest has {} LEDs",
            lights.len()
        )));
    }
    Ok(lights)
}

struct Lights {
    set: LightSet,
    reports: Option<Vec<ImageReport>>,
}

/// Lights and the stack for the job, calibrating from spheres when annotated.
fn lights_and_stack(job: &Job) -> CliResult<(Lights, ImageStack)> {
    match job.light_source()? {
        LightSource::Dome(manifest) => {
            let set = dome_lights(job, manifest)?;
            Ok((Lights { set, reports: None }, load_stack(job)?))
        }
        LightSource::Spheres(spheres) => {
            let stack = load_stack(job)?;
            let cal = calibrate_from_spheres(&stack, spheres)?;
            Ok((
                Lights {
                    set: cal.lights,
                    reports: Some(cal.reports),
                },
                stack,
            ))
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn calibrate(job: &Job, force: bool) -> CliResult<()> {
    let source = job.light_source()?;
    let mut run = StageRun::begin(job, CALIBRATE, force)?;
    let lights = run.stage("calibrate", |_| match source {
        LightSource::Dome(manifest) => Ok(Lights {
            set: dome_lights(job, manifest)?,
            reports: None,
        }),
        LightSource::Spheres(_) => Ok(lights_and_stack(job)?.0),
    })?;
    lights.set.ensure_rank3()?;
    write_json(&run.path("lights.json"), &lights.set.to_file())?;
    if let Some(reports) = &lights.reports {
        write_json(&run.path("calibration_report.json"), reports)?;
        let worst = reports
            .iter()
            .flat_map(|r| r.spheres.iter().map(|s| s.residual_deg))
            .fold(0.0, f64::max);
        run.meta("max_sphere_residual_deg", worst);
        run.meta(
            "saturated_spheres",
            reports
                .iter()
                .flat_map(|r| &r.spheres)
                .filter(|s| s.saturated)
                .count(),
        );
    }
    run.meta("lights", lights.set.len());
    run.meta("rank", lights.set.rank());
    run.finish()
}

pub fn solve(job: &Job, force: bool) -> CliResult<()> {
    job.light_source()?;
    let mut run = StageRun::begin(job, SOLVE, force)?;
    let (lights, stack) = run.stage("load", |_| lights_and_stack(job))?;
    let trim = job.trim();
    let out = run.stage("solve", |_| {
        Ok(match job.config.solver {
            SolverChoice::Lambertian => solve_lambertian(&stack, &lights.set)?,
            SolverChoice::Robust => solve_robust(&stack, &lights.set, trim)?,
        })
    })?;
    run.stage("write", |dir| {
        save_map(
            &out.normals.to_raster(),
            dir.join(NORMALS_PFM),
            MapFormat::Pfm,
        )?;
        save_map(
            &encode_normals_rgb(&out.normals),
            dir.join(NORMALS_RGB),
            MapFormat::Png16,
        )?;
        save_map(
            &out.albedo.to_raster(),
            dir.join(ALBEDO_PFM),
            MapFormat::Pfm,
        )?;
        save_map(
            &out.albedo.to_raster().map(|v| v.clamp(0.0, 1.0)),
            dir.join(ALBEDO_PNG),
            MapFormat::Png16,
        )?;
        Ok(())
    })?;
    run.meta("solver", job.config.solver);
    if job.config.solver == SolverChoice::Robust {
        run.meta("trim", [trim.low, trim.high]);
    }
    run.meta("images", stack.len());
    run.meta("mask_pixels", stack.mask().count());
    run.meta("valid_pixels", out.valid_count());
    run.meta("invalid_pixels", stack.mask().count() - out.valid_count());
    run.meta("flipped_pixels", out.flipped_count());
    run.finish()
}

/// Normals and albedo written by `solve`.
fn load_solution(job: &Job) -> CliResult<(NormalField, AlbedoMap)> {
    let dir = job.stage_dir(SOLVE);
    let normals_path = dir.join(NORMALS_PFM);
    if !normals_path.exists() {
        return Err(Error::io(
            &normals_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "run `solve` first"),
        )
        .into());
    }
    let normals = NormalField::from_raster(&load_image(&normals_path, Colorspace::Linear)?)?;
    let albedo = load_image(dir.join(ALBEDO_PFM), Colorspace::Linear)?;
    let albedo = AlbedoMap::new(albedo, normals.mask().clone())?;
    Ok((normals, albedo))
}

fn region_mask(job: &Job, width: usize, height: usize) -> CliResult<Option<Mask>> {
    Ok(match &job.config.region {
        None => None,
        Some(RegionConfig::Mask(p)) => Some(load_mask(p)?),
        Some(RegionConfig::Rect([r0, c0, h, w])) => {
            if r0 + h > height || c0 + w > width {
                return Err(config(format!(
                    "region rectangle {:?} exceeds the {width}x{height} image",
                    [r0, c0, h, w]
                )));
            }
            Some(Mask::from_fn(width, height, |r, c| {
                (*r0..r0 + h).contains(&r) && (*c0..c0 + w).contains(&c)
            }))
        }
    })
}

pub fn integrate(job: &Job, force: bool) -> CliResult<()> {
    let mut run = StageRun::begin(job, INTEGRATE, force)?;
    let (normals, albedo) = run.stage("load", |_| load_solution(job))?;
    let region = match region_mask(job, normals.width(), normals.height())? {
        Some(r) => r.and(normals.mask())?,
        None => normals.mask().clone(),
    };
    let result = run.stage("integrate", |_| Ok(integrate_normals(&normals, &region)?))?;
    let mut depth = result.depth;
    depth.pixel_pitch = job.config.pixel_pitch;
    let mesh = run.stage("write", |dir| {
        save_map(&depth.to_raster(), dir.join("depth.pfm"), MapFormat::Pfm)?;
        Ok(export_mesh(&depth, &albedo, dir.join("mesh.ply"))?)
    })?;
    run.meta("components", result.components);
    run.meta("iterations", result.iterations);
    run.meta("relative_residual", result.relative_residual);
    run.meta("excluded_pixels", result.excluded);
    run.meta("vertices", mesh.vertices);
    run.meta("triangles", mesh.triangles);
    run.finish()
}

pub fn relight(job: &Job, force: bool) -> CliResult<()> {
    let mut run = StageRun::begin(job, RELIGHT, force)?;
    let (normals, albedo) = run.stage("load", |_| load_solution(job))?;
    let (light, intensity) = match &job.config.relight {
        Some(r) => (Vector3::from(r.light), r.intensity),
        None => (Vector3::z(), 1.0),
    };
    let image = run.stage("render", |_| {
        Ok(relight_lambertian(&normals, &albedo, &light, intensity)?)
    })?;
    let exposure = default_exposure(&albedo) / intensity;
    run.stage("write", |dir| {
        save_map(&image, dir.join("relight.pfm"), MapFormat::Pfm)?;
        save_exposed(&image, exposure, dir.join("relight.png"))?;
        Ok(())
    })?;
    run.meta("light", light.as_slice());
    run.meta("intensity", intensity);
    run.meta("exposure", exposure);
    run.finish()
}

pub fn sweep(job: &Job, force: bool) -> CliResult<()> {
    let mut run = StageRun::begin(job, SWEEP, force)?;
    let (normals, albedo) = run.stage("load", |_| load_solution(job))?;
    let (elevation, count) = job
        .config
        .sweep
        .as_ref()
        .map_or((15.0, 8), |s| (s.elevation_deg, s.count));
    let index = run.stage("render", |dir| {
        Ok(raking_sweep(&normals, &albedo, elevation, count, dir)?)
    })?;
    run.meta("elevation_deg", elevation);
    run.meta("frames", index.frames.len());
    run.meta("exposure", index.exposure);
    run.finish()
}

pub fn fit_ptm_cmd(job: &Job, force: bool) -> CliResult<()> {
    job.light_source()?;
    let mut run = StageRun::begin(job, FIT_PTM, force)?;
    let (lights, stack) = run.stage("load", |_| lights_and_stack(job))?;
    let model = run.stage("fit", |_| Ok(fit_ptm(&stack, &lights.set)?))?;
    let peaks = ptm_to_normals(&model);
    run.stage("write", |dir| {
        save_ptm_archive(&model, dir)?;
        save_map(
            &peaks.normals.to_raster(),
            dir.join("ptm_normals.pfm"),
            MapFormat::Pfm,
        )?;
        Ok(())
    })?;
    let mut rmse: Vec<f64> = (0..model.width() * model.height())
        .filter(|&i| model.mask().at(i))
        .map(|i| model.fit_rmse()[i])
        .collect();
    rmse.sort_by(f64::total_cmp);
    run.meta("images", stack.len());
    run.meta("valid_pixels", rmse.len());
    run.meta(
        "median_fit_rmse",
        rmse.get(rmse.len() / 2).copied().unwrap_or(0.0),
    );
    run.meta("ptm_normal_invalid_fraction", peaks.invalid_fraction);
    run.finish()
}

pub fn export_viewer(job: &Job, force: bool) -> CliResult<()> {
    let mut run = StageRun::begin(job, EXPORT_VIEWER, force)?;
    let (normals, albedo) = run.stage("load", |_| load_solution(job))?;
    let ptm_dir = job.stage_dir(FIT_PTM);
    let ptm = if ptm_dir.join(DESCRIPTOR_FILE).exists() {
        let model = load_ptm_archive(&ptm_dir)?;
        if model.width() != normals.width() || model.height() != normals.height() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", normals.width(), normals.height()),
                found: format!("{}x{} PTM archive", model.width(), model.height()),
            }
            .into());
        }
        Some(model)
    } else {
        None
    };
    let exposure = default_exposure(&albedo);
    let mut modes = vec!["lambertian".to_string()];
    run.stage("write", |dir| {
        save_map(
            &encode_normals_rgb(&normals),
            dir.join(NORMALS_RGB),
            MapFormat::Png16,
        )?;
        save_map(
            &albedo.to_raster().map(|v| v.clamp(0.0, 1.0)),
            dir.join(ALBEDO_PNG),
            MapFormat::Png16,
        )?;
        if let Some(model) = &ptm {
            save_ptm_archive(model, dir.join("ptm"))?;
        }
        Ok::<_, CliError>(())
    })?;
    if ptm.is_some() {
        modes.push("ptm".into());
    }
    let manifest = BundleManifest {
        asset_id: job.asset_id(),
        width: normals.width(),
        height: normals.height(),
        modes: modes.clone(),
        exposure,
    };
    write_json(&run.path(MANIFEST_FILE), &manifest)?;
    run.meta("modes", modes);
    run.finish()
}
