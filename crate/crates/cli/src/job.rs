//! Job files. Relative paths resolve against the job file's directory.

use std::path::{Path, PathBuf};

use lumen3d_core::imagery::Colorspace;
use lumen3d_core::{SphereAnnotation, Trim};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config, CliResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Lambertian,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrimConfig {
    pub low: f64,
    pub high: f64,
}

impl From<TrimConfig> for Trim {
    fn from(t: TrimConfig) -> Self {
        Trim {
            low: t.low,
            high: t.high,
        }
    }
}

/// Integration region: a mask image or a `[row, col, height, width]` rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionConfig {
    Mask(PathBuf),
    Rect([usize; 4]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelightConfig {
    pub light: [f64; 3],
    #[serde(default = "one")]
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub elevation_deg: f64,
    pub count: usize,
}

fn one() -> f64 {
    1.0
}

fn linear() -> Colorspace {
    Colorspace::Linear
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    /// Ordered capture list; order must match the dome's LED order.
    pub images: Vec<PathBuf>,
    #[serde(default = "linear")]
    pub colorspace: Colorspace,
    #[serde(default)]
    pub mask: Option<PathBuf>,
    #[serde(default)]
    pub spheres: Option<Vec<SphereAnnotation>>,
    #[serde(default)]
    pub dome_manifest: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default)]
    pub trim: Option<TrimConfig>,
    #[serde(default)]
    pub region: Option<RegionConfig>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pixel_pitch: Option<f64>,
    #[serde(default)]
    pub relight: Option<RelightConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub asset_id: Option<String>,
}

/// Where the lights of a job come from.
#[derive(Debug, Clone)]
pub enum LightSource<'a> {
    Spheres(&'a [SphereAnnotation]),
    Dome(&'a Path),
}

/// A parsed job with resolved paths.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: JobConfig,
    pub path: PathBuf,
    /// `sha256:<hex>` of the job file bytes.
    pub config_hash: String,
}

impl Job {
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| config(format!("cannot read job file {}: {e}", path.display())))?;
        let mut job: JobConfig = serde_json::from_slice(&bytes)
            .map_err(|e| config(format!("job file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        job.images.iter_mut().for_each(resolve);
        job.mask.as_mut().map(resolve);
        job.dome_manifest.as_mut().map(resolve);
        resolve(&mut job.output_dir);
        if let Some(RegionConfig::Mask(p)) = job.region.as_mut() {
            resolve(p);
        }
        validate(&job)?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            config: job,
            path: path.to_path_buf(),
            config_hash: format!("sha256:{hex}"),
        })
    }

    /// Exactly one of spheres and dome manifest must be given.
    pub fn light_source(&self) -> CliResult<LightSource<'_>> {
        match (&self.config.spheres, &self.config.dome_manifest) {
            (Some(s), None) => Ok(LightSource::Spheres(s)),
            (None, Some(d)) => Ok(LightSource::Dome(d)),
            (Some(_), Some(_)) => Err(config(
                "job gives both sphere annotations and a dome manifest; choose one",
            )),
            (None, None) => Err(config("job needs sphere annotations or a dome manifest")),
        }
    }

    pub fn trim(&self) -> Trim {
        self.config.trim.map(Trim::from).unwrap_or_default()
    }

    pub fn asset_id(&self) -> String {
        self.config.asset_id.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "asset".into())
        })
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.config.output_dir.join(stage)
    }
}

fn validate(job: &JobConfig) -> CliResult<()> {
    if job.images.is_empty() {
        return Err(config("job lists no images"));
    }
    if let Some(p) = job.pixel_pitch {
        if !(p > 0.0 && p.is_finite()) {
            return Err(config(format!("pixel_pitch {p} must be positive")));
        }
    }
    if let Some(t) = job.trim {
        let ok = |f: f64| (0.0..1.0).contains(&f);
        if !ok(t.low) || !ok(t.high) || t.low + t.high >= 1.0 {
            return Err(config(format!(
                "trim ({}, {}) must lie in [0, 1) and sum below 1",
                t.low, t.high
            )));
        }
    }
    if let Some(r) = &job.relight {
        let norm = r.light.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(config(format!("relight light has norm {norm}, expected 1")));
        }
        if !(r.intensity > 0.0) {
            return Err(config("relight intensity must be positive"));
        }
    }
    if let Some(s) = &job.sweep {
        if !(s.elevation_deg > 0.0 && s.elevation_deg <= 90.0) || s.count == 0 {
            return Err(config("sweep needs elevation in (0, 90] and count >= 1"));
        }
    }
    if let Some(RegionConfig::Rect([_, _, h, w])) = job.region {
        if h == 0 || w == 0 {
            return Err(config("region rectangle is empty"));
        }
    }
    Ok(())
}
