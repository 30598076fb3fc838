use std::sync::OnceLock;

use fsi_core::config::SimConfig;
use fsi_core::extension::cofactor;
use fsi_core::kinematics::{integrate_rotation, project_velocity, skew};
use fsi_core::mesh::{generate_ball_in_box, SolidMesh};
use fsi_core::{Mat3, Vec3};
use proptest::prelude::*;

fn solid() -> &'static SolidMesh {
    static S: OnceLock<SolidMesh> = OnceLock::new();
    S.get_or_init(|| generate_ball_in_box(1.0, 0.4, 8).unwrap().1)
}

fn vec3(s: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-s..s).prop_map(Vec3::from)
}

fn mat3() -> impl Strategy<Value = Mat3> {
    prop::array::uniform9(-2.0..2.0f64).prop_map(|a| Mat3::from_row_slice(&a))
}

fn max_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cofactor_is_the_transposed_adjugate(m in mat3()) {
        let d = m.transpose() * cofactor(&m) - Mat3::identity() * m.determinant();
        prop_assert!(d.amax() <= 1e-12 * (1.0 + m.amax().powi(3)));
    }

    #[test]
    fn cofactor_is_multiplicative(a in mat3(), b in mat3()) {
        let d = cofactor(&(a * b)) - cofactor(&a) * cofactor(&b);
        prop_assert!(d.amax() <= 1e-11 * (1.0 + a.amax() * b.amax()).powi(2));
    }

    #[test]
    fn skew_is_the_cross_product(w in vec3(3.0), v in vec3(3.0)) {
        prop_assert!((skew(&w) * v - w.cross(&v)).amax() <= 1e-14);
        prop_assert_eq!(skew(&w).transpose(), -skew(&w));
    }

    #[test]
    fn rotation_update_is_a_rotation(w in vec3(10.0), dt in 1e-4..0.5f64, steps in 1usize..50) {
        let mut r = Mat3::identity();
        for _ in 0..steps {
            r = integrate_rotation(&r, &w, dt);
        }
        prop_assert!((r.transpose() * r - Mat3::identity()).amax() <= 1e-13);
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-13);
        // a fixed axis is left in place
        prop_assert!((r * w - w).amax() <= 1e-12 * (1.0 + w.amax()));
    }

    #[test]
    fn projector_is_idempotent_and_kills_rigid_fields(
        seed in any::<u64>(), l in vec3(1.0), w in vec3(1.0), rho in 0.1..10.0f64,
    ) {
        let s = solid();
        let x = &s.nodes;
        let v: Vec<Vec3> = x
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let k = (seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)) as f64 * 1e-19;
                Vec3::new(k.sin(), (2.0 * k).cos(), y.norm_squared() * (3.0 * k).sin())
            })
            .collect();
        let p1 = project_velocity(s, rho, x, &v, 0.0).unwrap();
        let p2 = project_velocity(s, rho, x, &p1, 0.0).unwrap();
        prop_assert!(max_diff(&p1, &p2) <= 1e-12);

        let rigid: Vec<Vec3> = x.iter().map(|y| l + w.cross(y)).collect();
        let pr = project_velocity(s, rho, x, &rigid, 0.0).unwrap();
        prop_assert!(pr.iter().map(|a| a.amax()).fold(0.0, f64::max) <= 1e-12);

        // removing a rigid part first does not change the projection
        let shifted: Vec<Vec3> = v.iter().zip(&rigid).map(|(a, b)| a + b).collect();
        let ps = project_velocity(s, rho, x, &shifted, 0.0).unwrap();
        prop_assert!(max_diff(&p1, &ps) <= 1e-12);
    }

    #[test]
    fn config_echo_reparses(
        nu in 1e-3..10.0f64, dt in 1e-4..0.1f64, amp in 0.0..0.05f64, h1 in vec3(1.0), res in 4usize..20,
    ) {
        let text = format!(
            "geometry.resolution = {}\nfluid.nu = {nu}\ntime.dt = {dt}\ntime.t_end = 1\n\
             deformation.family = travelling_wave\ndeformation.amplitude = {amp}\n\
             initial.h1 = {}, {}, {}\n",
            2 * res, h1[0], h1[1], h1[2]
        );
        let c = SimConfig::parse(&text).unwrap();
        prop_assert_eq!(SimConfig::parse(&c.to_text()).unwrap(), c);
    }
}
