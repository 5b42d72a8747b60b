use oculab_core::geometry::{
    acceptance_half_angle, angular_error, direction_from_yaw, hit_test, yaw_of, Direction3, GazeRay, TargetSphere,
    Vec3,
};
use proptest::prelude::*;

/// Rodrigues rotation about a unit axis.
fn rotate(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    let k = axis.scale(1.0 / axis.norm());
    v.scale(c) + k.cross(v).scale(s) + k.scale(k.dot(v) * (1.0 - c))
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn unit() -> impl Strategy<Value = Direction3> {
    vec3().prop_filter_map("non-zero", |v| Direction3::normalize(v).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn error_invariant_under_rigid_rotation(
        origin in vec3(),
        dir in unit(),
        center in vec3(),
        axis in unit(),
        angle in -std::f64::consts::PI..std::f64::consts::PI,
    ) {
        prop_assume!((center - origin).norm() > 1e-3);
        let target = TargetSphere::new(center, 0.1).unwrap();
        let ray = GazeRay::new(origin, dir);
        let a = axis.as_vec();
        let rotated_ray = GazeRay::new(
            rotate(origin, a, angle),
            Direction3::normalize(rotate(dir.as_vec(), a, angle)).unwrap(),
        );
        let rotated_target = TargetSphere::new(rotate(center, a, angle), 0.1).unwrap();
        let e0 = angular_error(&ray, &target).unwrap();
        let e1 = angular_error(&rotated_ray, &rotated_target).unwrap();
        prop_assert!((e0 - e1).abs() < 1e-6, "{e0} vs {e1}");
    }

    #[test]
    fn yaw_round_trip(yaw in -179.9..179.9f64) {
        let back = yaw_of(direction_from_yaw(yaw)).unwrap();
        prop_assert!((back - yaw).abs() < 1e-9, "{yaw} -> {back}");
    }

    #[test]
    fn error_is_bounded(origin in vec3(), dir in unit(), center in vec3()) {
        prop_assume!((center - origin).norm() > 1e-6);
        let e = angular_error(&GazeRay::new(origin, dir), &TargetSphere::new(center, 0.5).unwrap()).unwrap();
        prop_assert!((0.0..=180.0).contains(&e));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    /// Ray-sphere intersection agrees with the subtended-cone test except
    /// within 1e-9 degrees of the cone boundary.
    #[test]
    fn hit_iff_within_cone(
        origin in vec3(),
        dir in unit(),
        center in vec3(),
        radius in 0.01..1.5f64,
    ) {
        prop_assume!((center - origin).norm() > 1e-6);
        let target = TargetSphere::new(center, radius).unwrap();
        let ray = GazeRay::new(origin, dir);
        let hit = hit_test(&ray, &target).unwrap();
        let err = angular_error(&ray, &target).unwrap();
        let half = acceptance_half_angle(origin, &target);
        let cone = err <= half;
        prop_assert!(hit == cone || (err - half).abs() <= 1e-9, "hit={hit} err={err} half={half}");
    }
}

#[test]
fn cone_boundary_cases() {
    let t = TargetSphere::on_arc(0.0, 2.0, 0.1).unwrap();
    let half = acceptance_half_angle(Vec3::ZERO, &t);
    let oracle = (0.1f64 / 2.0).asin().to_degrees();
    assert!((half - oracle).abs() < 1e-12);
    for (offset, expect) in [(half - 1e-6, true), (half + 1e-6, false), (-half + 1e-6, true), (-half - 1e-6, false)] {
        let ray = GazeRay::new(Vec3::ZERO, direction_from_yaw(offset));
        assert_eq!(hit_test(&ray, &t).unwrap(), expect, "offset {offset}");
    }
}
