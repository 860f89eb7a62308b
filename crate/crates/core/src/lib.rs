//! Photometric stereo, light calibration, normal integration, relighting and
//! polynomial texture maps for fixed-viewpoint image stacks.
//!
//! Coordinates follow the camera frame described in [`imagery`]: x right,
//! y up the image, z toward the viewer.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod imagery;
pub mod integrate;
pub mod lightcal;
pub mod psolve;
pub mod relight;
pub mod rti;
pub mod synthetic;

pub use error::{Error, Result};
pub use imagery::{Colorspace, ImageStack, MapFormat, Mask, RasterImage};
pub use integrate::{integrate_normals, DepthMap, Integration};
pub use lightcal::{DomeManifest, Finish, LightSet, SphereAnnotation};
pub use psolve::{solve_lambertian, solve_robust, AlbedoMap, NormalField, SolveOutput, Trim};
pub use relight::{relight_lambertian, synthesize_stack};
pub use rti::{eval_ptm, fit_ptm, ptm_to_normals, PtmModel};

pub use nalgebra::Vector3;
