//! Normal-field integration into a relative depth map.
//!
//! Normals become surface gradients `p = ∂z/∂x = -n_x/n_z` and
//! `q = ∂z/∂y = -n_y/n_z`. Remember that `y` points **up** the image: the
//! pixel above `(row, col)` is `(row - 1, col)` and sits one unit higher.
//!
//! Depth minimizes `Σ (z_j - z_i - g_ij)²` over every pair of 4-adjacent
//! region pixels, where `g_ij` is the mean of the two endpoint gradients
//! along the edge. Pixels at the region border simply have fewer edges,
//! which is the natural (Neumann) boundary condition; the region can have
//! any shape. Each connected component is solved with one pinned pixel and
//! then shifted to zero mean.

mod mesh;
mod solver;

pub use mesh::{export_mesh, mesh_ply, MeshStats};

use crate::error::{Error, Result};
use crate::imagery::{Mask, RasterImage};
use crate::psolve::NormalField;
use solver::GridLaplacian;

/// Normals with `n_z` below this are excluded from integration.
pub const GRAZING_CUTOFF: f64 = 0.05;
/// Target relative residual of the normal equations.
pub const SOLVER_TOLERANCE: f64 = 1e-8;

/// Relative depth over a mask (larger is closer to the camera).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    mask: Mask,
    /// Physical size of one pixel, used when exporting meshes.
    pub pixel_pitch: Option<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, depth: Vec<f64>, mask: Mask) -> Result<Self> {
        mask.check_dims(width, height)?;
        if depth.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} depths", width * height),
                found: format!("{}", depth.len()),
            });
        }
        if depth.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("non-finite depth".into()));
        }
        Ok(Self {
            width,
            height,
            depth,
            mask,
            pixel_pitch: None,
        })
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

    pub fn values(&self) -> &[f64] {
        &self.depth
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.mask.at(i).then(|| self.depth[i])
    }

    /// One-channel raster, invalid pixels zero.
    pub fn to_raster(&self) -> RasterImage {
        let data = self
            .depth
            .iter()
            .enumerate()
            .map(|(i, &z)| if self.mask.at(i) { z } else { 0.0 })
            .collect();
        RasterImage::new(self.width, self.height, 1, data).expect("finite depth")
    }
}

/// Depth plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct Integration {
    pub depth: DepthMap,
    /// Connected components of the integrated region.
    pub components: usize,
    pub iterations: usize,
    /// `|b - L z| / |b|` on the full normal equations.
    pub relative_residual: f64,
    /// Region pixels dropped for grazing or missing normals.
    pub excluded: usize,
}

/// Integrates `normals` over `region`.
///
/// Several components are each integrated independently and brought to zero
/// mean; a warning is logged.
pub fn integrate_normals(normals: &NormalField, region: &Mask) -> Result<Integration> {
    let (w, h) = (normals.width(), normals.height());
    region.check_dims(w, h)?;

    // gradients of active pixels, NaN elsewhere
    let mut grad = vec![(f64::NAN, f64::NAN); w * h];
    let mut active = vec![false; w * h];
    let mut excluded = 0;
    for i in 0..w * h {
        if !region.at(i) {
            continue;
        }
        match normals.at(i) {
            Some(n) if n.z >= GRAZING_CUTOFF => {
                grad[i] = (-n.x / n.z, -n.y / n.z);
                active[i] = true;
            }
            _ => excluded += 1,
        }
    }
    if !active.iter().any(|&a| a) {
        return Err(Error::EmptyRegion);
    }
    if excluded > 0 {
        log::info!("{excluded} region pixels excluded (grazing or invalid normals)");
    }

    // edges (from, to, gradient along from -> to)
    let mut edges = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if !active[i] {
                continue;
            }
            if col + 1 < w && active[i + 1] {
                edges.push((i, i + 1, 0.5 * (grad[i].0 + grad[i + 1].0)));
            }
            // the pixel above is one step up in y
            if row > 0 && active[i - w] {
                edges.push((i, i - w, 0.5 * (grad[i].1 + grad[i - w].1)));
            }
        }
    }

    let component = label_components(&active, &edges, w * h);
    let n_components = component.iter().flatten().max().map_or(0, |&c| c + 1);
    if n_components > 1 {
        log::warn!(
            "integration region has {n_components} disconnected components; each is zero-mean"
        );
    }

    // the first pixel of each component (row-major) is pinned
    let mut pinned = vec![false; n_components];
    let mut unknown = vec![usize::MAX; w * h];
    let mut free_pixels = Vec::new();
    for i in 0..w * h {
        if let Some(c) = component[i] {
            if !pinned[c] {
                pinned[c] = true;
            } else {
                unknown[i] = free_pixels.len();
                free_pixels.push(i);
            }
        }
    }

    let mut degree = vec![0.0; w * h];
    let mut rhs = vec![0.0; w * h];
    for &(from, to, g) in &edges {
        degree[from] += 1.0;
        degree[to] += 1.0;
        rhs[to] += g;
        rhs[from] -= g;
    }

    let n = free_pixels.len();
    let mut system = GridLaplacian {
        degree: free_pixels.iter().map(|&i| degree[i]).collect(),
        lower: vec![Vec::new(); n],
        upper: vec![Vec::new(); n],
    };
    for &(from, to, _) in &edges {
        let (a, b) = (unknown[from], unknown[to]);
        if a != usize::MAX && b != usize::MAX {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            system.lower[hi].push(lo);
            system.upper[lo].push(hi);
        }
    }
    for list in system.lower.iter_mut().chain(system.upper.iter_mut()) {
        list.sort_unstable();
    }
    let b: Vec<f64> = free_pixels.iter().map(|&i| rhs[i]).collect();

    let max_iterations = ((10.0 * (n.max(1) as f64).sqrt()).ceil() as usize).max(10);
    let outcome = solver::conjugate_gradient(&system, &b, SOLVER_TOLERANCE, max_iterations);
    if !outcome.converged {
        return Err(Error::NotConverged {
            iterations: outcome.iterations,
            residual: outcome.relative_residual,
        });
    }

    let mut depth = vec![0.0; w * h];
    for (k, &i) in free_pixels.iter().enumerate() {
        depth[i] = outcome.solution[k];
    }

    let relative_residual = full_residual(&depth, &degree, &rhs, &edges);

    // zero mean per component
    let mut sums = vec![(0.0, 0usize); n_components];
    for i in 0..w * h {
        if let Some(c) = component[i] {
            sums[c].0 += depth[i];
            sums[c].1 += 1;
        }
    }
    for i in 0..w * h {
        if let Some(c) = component[i] {
            depth[i] -= sums[c].0 / sums[c].1 as f64;
        }
    }

    let mask = Mask::new(w, h, active)?;
    Ok(Integration {
        depth: DepthMap::new(w, h, depth, mask)?,
        components: n_components,
        iterations: outcome.iterations,
        relative_residual,
        excluded,
    })
}

fn full_residual(depth: &[f64], degree: &[f64], rhs: &[f64], edges: &[(usize, usize, f64)]) -> f64 {
    let mut lz: Vec<f64> = depth.iter().zip(degree).map(|(z, d)| z * d).collect();
    for &(from, to, _) in edges {
        lz[from] -= depth[to];
        lz[to] -= depth[from];
    }
    let b_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return 0.0;
    }
    let r: f64 = lz.iter().zip(rhs).map(|(a, b)| (b - a) * (b - a)).sum();
    r.sqrt() / b_norm
}

fn label_components(
    active: &[bool],
    edges: &[(usize, usize, f64)],
    n: usize,
) -> Vec<Option<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b, _) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut label = vec![None; n];
    let mut root_label = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if !active[i] {
            continue;
        }
        let root = find(&mut parent, i);
        if root_label[root] == usize::MAX {
            root_label[root] = next;
            next += 1;
        }
        label[i] = Some(root_label[root]);
    }
    label
}
