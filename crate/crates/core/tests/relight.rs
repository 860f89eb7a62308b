use lumen3d_core::imagery::{load_image, Colorspace, Mask};
use lumen3d_core::psolve::AlbedoMap;
use lumen3d_core::relight::{
    direction_from_angles, frame_contrast, raking_sweep, render_sweep, SweepIndex,
};
use lumen3d_core::synthetic::{smooth_albedo, v_groove, SmoothSurface};
use lumen3d_core::{relight_lambertian, solve_lambertian, synthesize_stack, LightSet};
use proptest::prelude::*;

fn groove_scene(across_deg: f64) -> (lumen3d_core::NormalField, AlbedoMap) {
    let normals = v_groove(64, 64, 6.0, 25.0, across_deg);
    let albedo = AlbedoMap::uniform(Mask::full(64, 64), &[0.7]).unwrap();
    (normals, albedo)
}

#[test]
fn groove_perpendicular_azimuth_maximizes_contrast() {
    for across in [0.0, 45.0, 90.0] {
        let (normals, albedo) = groove_scene(across);
        let frames = render_sweep(&normals, &albedo, 20.0, 8).unwrap();
        let contrast: Vec<f64> = frames
            .iter()
            .map(|f| frame_contrast(&f.image, normals.mask()))
            .collect();
        let best = (0..8)
            .max_by(|&a, &b| contrast[a].total_cmp(&contrast[b]))
            .unwrap();
        let az = frames[best].azimuth_deg;
        let off = ((az - across).rem_euclid(180.0)).min((across - az).rem_euclid(180.0));
        assert!(
            off < 1e-9,
            "groove across {across}: best azimuth {az}, contrast {contrast:?}"
        );
    }
}

#[test]
fn raking_light_beats_high_light_on_groove() {
    let (normals, albedo) = groove_scene(0.0);
    let low = relight_lambertian(&normals, &albedo, &direction_from_angles(0.0, 5.0), 1.0).unwrap();
    let high =
        relight_lambertian(&normals, &albedo, &direction_from_angles(0.0, 80.0), 1.0).unwrap();
    assert!(frame_contrast(&low, normals.mask()) > frame_contrast(&high, normals.mask()));
}

#[test]
fn sweep_writes_frames_and_index() {
    let (normals, albedo) = groove_scene(30.0);
    let dir = tempfile::tempdir().unwrap();
    let index = raking_sweep(&normals, &albedo, 15.0, 6, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("index.json")).unwrap();
    let parsed: SweepIndex = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, index);
    assert_eq!(parsed.frames.len(), 6);
    for f in &parsed.frames {
        let img = load_image(dir.path().join(&f.file), Colorspace::Linear).unwrap();
        assert_eq!((img.width(), img.height()), (64, 64));
    }
    assert!((parsed.exposure - 1.0 / 0.7).abs() < 1e-12);
}

#[test]
fn relight_solve_round_trip_on_color_scene() {
    let normals = SmoothSurface::random(40, 40, 30.0, 41).normals(40, 40);
    let albedo = smooth_albedo(normals.mask(), 3, 42).unwrap();
    let lights = LightSet::from_directions(vec![
        direction_from_angles(0.0, 50.0),
        direction_from_angles(120.0, 50.0),
        direction_from_angles(240.0, 50.0),
    ])
    .unwrap();
    let out = solve_lambertian(
        &synthesize_stack(&normals, &albedo, &lights).unwrap(),
        &lights,
    )
    .unwrap();
    for i in 0..1600 {
        let (a, b) = (out.normals.at(i).unwrap(), normals.at(i).unwrap());
        assert!((a - b).norm() < 1e-6);
        for (x, y) in out.albedo.pixel_at(i).iter().zip(albedo.pixel_at(i)) {
            assert!((x - y).abs() / y < 1e-4);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rendering_is_linear_in_albedo(scale in 0.1f64..3.0, az in 0.0f64..360.0, el in 5.0f64..90.0) {
        let normals = SmoothSurface::random(12, 12, 40.0, 3).normals(12, 12);
        let albedo = smooth_albedo(normals.mask(), 1, 4).unwrap();
        let scaled = AlbedoMap::new(albedo.image().map(|v| v * scale), albedo.mask().clone()).unwrap();
        let l = direction_from_angles(az, el);
        let a = relight_lambertian(&normals, &albedo, &l, 1.0).unwrap();
        let b = relight_lambertian(&normals, &scaled, &l, 1.0).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x * scale - y).abs() < 1e-12);
        }
    }
}
