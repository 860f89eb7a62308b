//! Synthetic scenes with known ground truth: normal fields, albedo maps,
//! light layouts and rendered calibration spheres.
//!
//! Everything is deterministic for a given seed.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imagery::{pixel_to_xy, ImageStack, Mask, RasterImage};
use crate::lightcal::SphereAnnotation;
use crate::psolve::{AlbedoMap, NormalField};
use crate::relight::direction_from_angles;

/// Sum of random sinusoids scaled so the steepest slope is `max_tilt_deg`.
#[derive(Debug, Clone)]
pub struct SmoothSurface {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl SmoothSurface {
    pub fn random(width: usize, height: usize, max_tilt_deg: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = width.max(height) as f64;
        let mut waves: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                let wavelength = size * rng.gen_range(0.25..0.8);
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / wavelength;
                (
                    k * angle.cos(),
                    k * angle.sin(),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.5..1.0),
                )
            })
            .collect();
        let mut steepest: f64 = 0.0;
        let probe = Self {
            waves: waves.clone(),
        };
        for row in 0..height {
            for col in 0..width {
                let (x, y) = pixel_to_xy(row, col, height);
                let (p, q) = probe.gradient(x, y);
                steepest = steepest.max(p.hypot(q));
            }
        }
        let scale = if steepest > 0.0 {
            max_tilt_deg.to_radians().tan() / steepest
        } else {
            0.0
        };
        for w in &mut waves {
            w.3 *= scale;
        }
        Self { waves }
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(kx, ky, phase, amp)| amp * (kx * x + ky * y + phase).sin())
            .sum()
    }

    /// `(∂z/∂x, ∂z/∂y)`.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        self.waves
            .iter()
            .fold((0.0, 0.0), |(p, q), &(kx, ky, phase, amp)| {
                let c = amp * (kx * x + ky * y + phase).cos();
                (p + kx * c, q + ky * c)
            })
    }

    pub fn normals(&self, width: usize, height: usize) -> NormalField {
        NormalField::from_fn(width, height, |row, col| {
            let (x, y) = pixel_to_xy(row, col, height);
            let (p, q) = self.gradient(x, y);
            Some(Vector3::new(-p, -q, 1.0))
        })
    }
}

/// Smoothly varying albedo in `[0.3, 0.9]` per channel.
pub fn smooth_albedo(mask: &Mask, channels: usize, seed: u64) -> Result<AlbedoMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (mask.width(), mask.height());
    let size = w.max(h) as f64;
    let params: Vec<(f64, f64, f64)> = (0..channels)
        .map(|_| {
            (
                rng.gen_range(1.0..3.0) / size,
                rng.gen_range(1.0..3.0) / size,
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let image = RasterImage::from_fn(w, h, channels, |row, col, px| {
        for (c, &(fx, fy, phase)) in params.iter().enumerate() {
            let t = (std::f64::consts::TAU * (fx * col as f64 + fy * row as f64) + phase).sin();
            px[c] = 0.6 + 0.3 * t;
        }
    });
    AlbedoMap::new(image, mask.clone())
}

/// Plane with depth `z = p·x + q·y`.
pub fn plane_normals(width: usize, height: usize, p: f64, q: f64) -> NormalField {
    NormalField::from_fn(width, height, |_, _| Some(Vector3::new(-p, -q, 1.0)))
}

/// Hemisphere of `radius` pixels centered on pixel `(row, col)`, bulging toward the viewer.
#[derive(Debug, Clone, Copy)]
pub struct Hemisphere {
    pub center: (f64, f64),
    pub radius: f64,
}

impl Hemisphere {
    fn offset(&self, row: usize, col: usize) -> (f64, f64) {
        (col as f64 - self.center.1, self.center.0 - row as f64)
    }

    pub fn contains(&self, row: usize, col: usize, radius: f64) -> bool {
        let (dx, dy) = self.offset(row, col);
        dx * dx + dy * dy < radius * radius
    }

    pub fn depth(&self, row: usize, col: usize) -> Option<f64> {
        let (dx, dy) = self.offset(row, col);
        let r2 = self.radius * self.radius - dx * dx - dy * dy;
        (r2 > 0.0).then(|| r2.sqrt())
    }

    pub fn normals(&self, width: usize, height: usize) -> NormalField {
        NormalField::from_fn(width, height, |row, col| {
            let (dx, dy) = self.offset(row, col);
            self.depth(row, col).map(|z| Vector3::new(dx, dy, z))
        })
    }

    pub fn disk(&self, width: usize, height: usize, radius: f64) -> Mask {
        Mask::from_fn(width, height, |row, col| self.contains(row, col, radius))
    }
}

/// Flat surface cut by one centered V-groove. `across_deg` is the azimuth of
/// the direction across the groove (0: groove parallel to y, walls facing ±x).
pub fn v_groove(
    width: usize,
    height: usize,
    half_width: f64,
    wall_deg: f64,
    across_deg: f64,
) -> NormalField {
    let (s, c) = across_deg.to_radians().sin_cos();
    let across = Vector3::new(c, s, 0.0);
    let t = wall_deg.to_radians().tan();
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    NormalField::from_fn(width, height, |row, col| {
        let (x, y) = pixel_to_xy(row, col, height);
        let d = (x - cx) * across.x + (y - cy) * across.y;
        if d.abs() >= half_width {
            return Some(Vector3::z());
        }
        // depth = -t (half_width - |d|): the wall slopes down toward the axis
        let slope = t * d.signum();
        Some(Vector3::new(-slope * across.x, -slope * across.y, 1.0))
    })
}

/// `(elevation_deg, count)` rings of the 105-LED dome used for synthetic RTI.
pub const DOME_RINGS: [(f64, usize); 7] = [
    (30.0, 28),
    (40.0, 25),
    (50.0, 21),
    (60.0, 16),
    (70.0, 10),
    (80.0, 4),
    (90.0, 1),
];

pub fn dome_layout() -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for (ring, &(elevation, count)) in DOME_RINGS.iter().enumerate() {
        // stagger rings so azimuths do not line up
        let offset = 7.0 * ring as f64;
        for i in 0..count {
            out.push(direction_from_angles(
                offset + 360.0 * i as f64 / count as f64,
                elevation,
            ));
        }
    }
    out
}

/// `count` lights evenly spaced in azimuth at one elevation.
pub fn ring_lights(count: usize, elevation_deg: f64, azimuth_offset_deg: f64) -> Vec<Vector3<f64>> {
    (0..count)
        .map(|i| {
            direction_from_angles(
                azimuth_offset_deg + 360.0 * i as f64 / count as f64,
                elevation_deg,
            )
        })
        .collect()
}

/// Uniformly random directions above `min_elevation_deg`.
pub fn random_lights(count: usize, min_elevation_deg: f64, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_min = min_elevation_deg.to_radians().sin();
    (0..count)
        .map(|_| {
            let z: f64 = rng.gen_range(z_min..1.0);
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            Vector3::new(r * a.cos(), r * a.sin(), z)
        })
        .collect()
}

/// Glossy lobe width (reflection-space standard deviation) of rendered mirror spheres.
pub const MIRROR_LOBE_DEG: f64 = 6.0;
const SUPERSAMPLING: usize = 4;

/// Ray-traces a glossy mirror sphere into `image`: each pixel averages
/// `4×4` orthographic rays whose reflected direction is scored with a
/// Gaussian lobe around `light`, peak `peak`.
pub fn paint_specular_sphere(
    image: &mut RasterImage,
    sphere: &SphereAnnotation,
    light: &Vector3<f64>,
    peak: f64,
) {
    let sigma = MIRROR_LOBE_DEG.to_radians();
    let [r0, c0] = sphere.center;
    let radius = sphere.radius;
    let (h, w) = (image.height(), image.width());
    let rows = (r0 - radius).floor().max(0.0) as usize..=((r0 + radius).ceil() as usize).min(h - 1);
    for row in rows {
        let cols =
            (c0 - radius).floor().max(0.0) as usize..=((c0 + radius).ceil() as usize).min(w - 1);
        for col in cols {
            let mut acc = 0.0;
            let mut hits = 0;
            for sr in 0..SUPERSAMPLING {
                for sc in 0..SUPERSAMPLING {
                    let fr = row as f64 - 0.5 + (sr as f64 + 0.5) / SUPERSAMPLING as f64;
                    let fc = col as f64 - 0.5 + (sc as f64 + 0.5) / SUPERSAMPLING as f64;
                    if !sphere.contains(fr, fc) {
                        continue;
                    }
                    hits += 1;
                    let n = sphere.normal_at(fr, fc);
                    let reflected = 2.0 * n.z * n - Vector3::z();
                    let angle = reflected.normalize().dot(light).clamp(-1.0, 1.0).acos();
                    acc += (-0.5 * (angle / sigma).powi(2)).exp();
                }
            }
            if hits > 0 && sphere.contains(row as f64, col as f64) {
                let v = peak * acc / (SUPERSAMPLING * SUPERSAMPLING) as f64;
                image.pixel_mut(row, col).iter_mut().for_each(|p| *p = v);
            }
        }
    }
}

/// Lambertian sphere shaded at pixel centers: `intensity · albedo · max(0, n·l)`.
pub fn paint_matte_sphere(
    image: &mut RasterImage,
    sphere: &SphereAnnotation,
    light: &Vector3<f64>,
    intensity: f64,
    albedo: f64,
) {
    let [r0, c0] = sphere.center;
    let radius = sphere.radius;
    let (h, w) = (image.height(), image.width());
    let rows = (r0 - radius).floor().max(0.0) as usize..=((r0 + radius).ceil() as usize).min(h - 1);
    for row in rows {
        let cols =
            (c0 - radius).floor().max(0.0) as usize..=((c0 + radius).ceil() as usize).min(w - 1);
        for col in cols {
            if sphere.contains(row as f64, col as f64) {
                let n = sphere.normal_at(row as f64, col as f64);
                let v = intensity * albedo * n.dot(light).max(0.0);
                image.pixel_mut(row, col).iter_mut().for_each(|p| *p = v);
            }
        }
    }
}

/// Zeroes `floor(fraction · k)` randomly chosen observations at every masked pixel.
pub fn inject_shadows(stack: &ImageStack, fraction: f64, seed: u64) -> Result<ImageStack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = stack.len();
    let drop = (fraction * k as f64 + 1e-9).floor() as usize;
    let mut images: Vec<RasterImage> = stack.images().to_vec();
    let (w, h) = (stack.width(), stack.height());
    let mut order: Vec<usize> = (0..k).collect();
    for row in 0..h {
        for col in 0..w {
            if !stack.mask().get(row, col) {
                continue;
            }
            // partial Fisher-Yates
            for i in 0..drop {
                let j = rng.gen_range(i..k);
                order.swap(i, j);
            }
            for &j in &order[..drop] {
                images[j]
                    .pixel_mut(row, col)
                    .iter_mut()
                    .for_each(|p| *p = 0.0);
            }
        }
    }
    ImageStack::new(images, stack.mask().clone(), stack.pose_id())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightcal::{angle_deg, Finish};

    #[test]
    fn smooth_surface_respects_tilt_bound() {
        let s = SmoothSurface::random(40, 30, 25.0, 3);
        let field = s.normals(40, 30);
        let max_tilt = field
            .normals()
            .iter()
            .map(|n| n.z.acos().to_degrees())
            .fold(0.0, f64::max);
        assert!(max_tilt <= 25.0 + 1e-9 && max_tilt > 20.0, "{max_tilt}");
    }

    #[test]
    fn same_seed_same_surface() {
        let a = SmoothSurface::random(16, 16, 30.0, 9).normals(16, 16);
        let b = SmoothSurface::random(16, 16, 30.0, 9).normals(16, 16);
        assert_eq!(a.normals(), b.normals());
    }

    #[test]
    fn dome_has_105_upper_leds() {
        let dome = dome_layout();
        assert_eq!(dome.len(), 105);
        assert!(dome
            .iter()
            .all(|d| d.z > 0.49 && (d.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn groove_walls_face_across_the_axis() {
        let g = v_groove(21, 11, 4.0, 30.0, 0.0);
        let left = g.get(5, 8).unwrap();
        let right = g.get(5, 12).unwrap();
        assert!(left.x > 0.0 && right.x < 0.0);
        assert_eq!(g.get(5, 0).unwrap(), Vector3::z());
        assert!((angle_deg(&left, &Vector3::z()) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn hemisphere_normals_point_outward() {
        let hs = Hemisphere {
            center: (10.0, 10.0),
            radius: 8.0,
        };
        let f = hs.normals(21, 21);
        let n = f.get(10, 14).unwrap();
        assert!((n.x - 0.5).abs() < 1e-12 && n.y.abs() < 1e-12);
        assert!(f.get(10, 19).is_none());
    }

    #[test]
    fn specular_sphere_peaks_at_half_vector() {
        let sphere = SphereAnnotation::new(30.0, 30.0, 25.0, Finish::Specular);
        let mut img = RasterImage::zeros(61, 61, 1);
        paint_specular_sphere(&mut img, &sphere, &Vector3::z(), 0.9);
        assert!(img.pixel(30, 30)[0] > 0.85);
        assert!(img.pixel(30, 50)[0] < 0.01);
    }

    #[test]
    fn shadow_injection_counts() {
        let mask = Mask::full(3, 2);
        let images = (0..20)
            .map(|_| RasterImage::new(3, 2, 1, vec![1.0; 6]).unwrap())
            .collect();
        let stack = ImageStack::new(images, mask, "t").unwrap();
        let shadowed = inject_shadows(&stack, 0.15, 1).unwrap();
        for i in 0..6 {
            let zeros = (0..20)
                .filter(|&j| shadowed.image(j).pixel_at(i)[0] == 0.0)
                .count();
            assert_eq!(zeros, 3);
        }
    }
}
