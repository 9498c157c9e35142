use nalgebra::{DMatrix, DVector, Isometry3, Matrix3x6, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vservo::arm::{forward_kinematics, forward_kinematics_from, step, DhParams, Joints, PlantPerturbation};
use vservo::baselines::{mfac_tick, mpc_tick, MfacParams, MpcParams};
use vservo::camera::{observe, CameraPose};
use vservo::config::Config;
use vservo::controller::lyapunov_variation;
use vservo::rbf::{RbfLayer, RbfNetwork};

fn joints() -> impl Strategy<Value = Joints> {
    proptest::array::uniform6(-3.0f64..3.0).prop_map(Joints::from)
}

fn vec3(span: f64) -> impl Strategy<Value = Vector3<f64>> {
    proptest::array::uniform3(-span..span).prop_map(Vector3::from)
}

fn jacobian() -> impl Strategy<Value = Matrix3x6<f64>> {
    proptest::collection::vec(-1.0f64..1.0, 18).prop_map(|v| Matrix3x6::from_column_slice(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kinematics_follow_a_moved_base(q in joints(), shift in vec3(2.0), axis in vec3(1.0)) {
        let dh = DhParams::ur5();
        let pert = PlantPerturbation::default_mismatch();
        let base = Isometry3::from_parts(Translation3::from(shift), UnitQuaternion::from_scaled_axis(axis));
        let moved = forward_kinematics_from(&base, &dh, &q, &pert);
        let direct = base * nalgebra::Point3::from(forward_kinematics(&dh, &q, &pert));
        prop_assert!((moved - direct.coords).norm() < 1e-12);
        // distances from the base origin are preserved by the extra transform
        let reach = forward_kinematics(&dh, &q, &pert).norm();
        prop_assert!(((moved - shift).norm() - reach).abs() < 1e-12);
    }

    #[test]
    fn plant_step_is_lipschitz_in_the_command(q in proptest::array::uniform6(-2.0f64..2.0).prop_map(Joints::from),
                                               a in joints(), b in joints()) {
        let dt = 0.05;
        let qa = step(&q, &a, dt, 1.0);
        let qb = step(&q, &b, dt, 1.0);
        // |q| <= 2 and |dt * qdot| <= 0.05 keep both results away from the wrap
        prop_assert!((qa - qb).amax() <= dt * (a - b).amax() + 1e-15);
        prop_assert_eq!(step(&q, &a, dt, 1.0), qa);
    }

    #[test]
    fn noiseless_observation_is_rigid(axis in vec3(3.0), t in vec3(2.0), p in vec3(1.0), r in vec3(1.0)) {
        let pose = CameraPose::from_axis_angle(axis, t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let yp = observe(&pose, &p, 0.0, &mut rng);
        let yr = observe(&pose, &r, 0.0, &mut rng);
        prop_assert!(((yp - yr).norm() - (p - r).norm()).abs() < 1e-12);
        prop_assert!((pose.inverse_apply(&yp) - p).norm() < 1e-12);
    }

    #[test]
    fn baselines_hold_still_at_zero_error(jac in jacobian(), r in joints()) {
        prop_assert_eq!(mfac_tick(&jac, &r, &Vector3::zeros(), &MfacParams::default()), r);
        prop_assert_eq!(mpc_tick(&jac, &r, &Vector3::zeros(), &MpcParams::default()), r);
    }

    #[test]
    fn lyapunov_variation_never_positive(k in -1.999f64..-0.001, sq in 0.0f64..1e3, g2 in 0.0f64..1e3, eps in 1e-14f64..1e-6) {
        prop_assert!(lyapunov_variation(k, sq, g2, eps) <= 0.0);
    }

    #[test]
    fn config_text_is_a_fixed_point(seed in any::<u64>(), k in -1.9f64..-0.1, k2 in 0.1f64..1.9, horizon in 1usize..8, radius in 0.01f64..0.5) {
        let text = format!("seed = {seed}\ncontroller.k = {k}\nestimator.k2 = {k2}\ncontroller.horizon = {horizon}\ntrajectory.radius = {radius}\n");
        let config = Config::parse(&text).unwrap();
        let again = Config::parse(config.canonical_text()).unwrap();
        prop_assert_eq!(again.canonical_text(), config.canonical_text());
        prop_assert_eq!(again.hash(), config.hash());
        prop_assert_eq!(config.seed, seed);
    }

    #[test]
    fn model_text_round_trips_bitwise(
        centers in proptest::collection::vec(-1e3f64..1e3, 12),
        radii in proptest::collection::vec(1e-3f64..1e2, 4),
        weights in proptest::collection::vec(-1e6f64..1e6, 8),
    ) {
        let layer = RbfLayer::new(DMatrix::from_vec(4, 3, centers), DVector::from_vec(radii)).unwrap();
        let net = RbfNetwork::new(layer, DMatrix::from_vec(2, 4, weights)).unwrap();
        let back = RbfNetwork::from_text(&net.to_text()).unwrap();
        prop_assert_eq!(back, net);
    }
}
