//! ASCII PLY height-field export.

use std::fmt::Write as _;
use std::path::Path;

use super::DepthMap;
use crate::error::{Error, Result};
use crate::imagery::pixel_to_xy;
use crate::psolve::AlbedoMap;

/// Counts written to the mesh file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshStats {
    pub vertices: usize,
    pub triangles: usize,
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Renders the mesh as PLY text.
///
/// One vertex per valid depth pixel at `(x, y, z) * pitch`, colored by
/// albedo; every 2×2 block of valid pixels becomes two counter-clockwise
/// triangles split along the top-left/bottom-right diagonal.
pub fn mesh_ply(depth: &DepthMap, albedo: &AlbedoMap) -> Result<(String, MeshStats)> {
    let (w, h) = (depth.width(), depth.height());
    if albedo.width() != w || albedo.height() != h {
        return Err(Error::DimensionMismatch {
            expected: format!("{w}x{h}"),
            found: format!("{}x{}", albedo.width(), albedo.height()),
        });
    }
    let pitch = depth.pixel_pitch.unwrap_or(1.0);

    let mut vertex_id = vec![usize::MAX; w * h];
    let mut vertices = String::new();
    let mut count = 0;
    for row in 0..h {
        for col in 0..w {
            let Some(z) = depth.get(row, col) else {
                continue;
            };
            let i = row * w + col;
            vertex_id[i] = count;
            count += 1;
            let (x, y) = pixel_to_xy(row, col, h);
            let rgb = if albedo.mask().at(i) {
                let px = albedo.pixel_at(i);
                if px.len() == 1 {
                    [to_u8(px[0]); 3]
                } else {
                    [to_u8(px[0]), to_u8(px[1]), to_u8(px[2])]
                }
            } else {
                [0; 3]
            };
            writeln!(
                vertices,
                "{} {} {} {} {} {}",
                x * pitch,
                y * pitch,
                z * pitch,
                rgb[0],
                rgb[1],
                rgb[2]
            )
            .expect("write to string");
        }
    }
    if count == 0 {
        return Err(Error::NoValidPixels);
    }

    let mut faces = String::new();
    let mut triangles = 0;
    for row in 0..h.saturating_sub(1) {
        for col in 0..w.saturating_sub(1) {
            let tl = vertex_id[row * w + col];
            let tr = vertex_id[row * w + col + 1];
            let bl = vertex_id[(row + 1) * w + col];
            let br = vertex_id[(row + 1) * w + col + 1];
            if [tl, tr, bl, br].contains(&usize::MAX) {
                continue;
            }
            writeln!(faces, "3 {tl} {bl} {br}\n3 {tl} {br} {tr}").expect("write to string");
            triangles += 2;
        }
    }

    let mut out = String::with_capacity(vertices.len() + faces.len() + 256);
    out.push_str("ply\nformat ascii 1.0\ncomment lumen3d height field\n");
    writeln!(out, "element vertex {count}").unwrap();
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    writeln!(out, "element face {triangles}").unwrap();
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    out.push_str(&vertices);
    out.push_str(&faces);
    Ok((
        out,
        MeshStats {
            vertices: count,
            triangles,
        },
    ))
}

pub fn export_mesh(
    depth: &DepthMap,
    albedo: &AlbedoMap,
    path: impl AsRef<Path>,
) -> Result<MeshStats> {
    let path = path.as_ref();
    let (text, stats) = mesh_ply(depth, albedo)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(stats)
}
