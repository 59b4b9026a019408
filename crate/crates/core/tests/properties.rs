use posequat_core::estimation::{extract_theta, theta_to_orientation, FilterState, ThetaRadians};
use posequat_core::geometry::{build_rotation_matrix, matrix_to_quaternion, quaternion_to_matrix, Quaternion, Vec3};
use posequat_core::intent::{classify, score_predictions, TrajectorySample, TrajectoryWindow};
use posequat_core::stream::{process_stream, Landmark, LandmarkFrame, PipelineConfig, LEFT_SHOULDER, RIGHT_SHOULDER};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -10.0f64..10.0
}

fn point() -> impl Strategy<Value = Vec3> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Random pairs plus the degenerate families: coincident points, axis
/// along ±up and axis nearly along −up (trace ≈ −1).
fn shoulder_pair() -> impl Strategy<Value = (Vec3, Vec3)> {
    prop_oneof![
        6 => (point(), point()),
        1 => point().prop_map(|p| (p, p)),
        1 => (point(), 0.01f64..5.0).prop_map(|(p, d)| (p + Vec3::new(0.0, 0.0, d), p)),
        1 => (point(), 0.01f64..5.0).prop_map(|(p, d)| (p, p + Vec3::new(0.0, 0.0, d))),
        1 => (point(), -1e-6f64..1e-6, -1e-6f64..1e-6)
            .prop_map(|(p, ex, ey)| (p + Vec3::new(ex, ey, -1.0), p)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn frame_is_orthonormal((l, r) in shoulder_pair()) {
        let m = build_rotation_matrix(l, r);
        prop_assert!(m.orthonormality_error() < 1e-9, "error {}", m.orthonormality_error());
    }

    #[test]
    fn quaternion_round_trip((l, r) in shoulder_pair()) {
        let m = build_rotation_matrix(l, r);
        let q = matrix_to_quaternion(&m);
        prop_assert!((q.norm() - 1.0).abs() < 1e-6);
        prop_assert!(q.a >= 0.0);
        prop_assert!(quaternion_to_matrix(&q).unwrap().max_abs_diff(&m) < 1e-6);
    }

    #[test]
    fn translation_invariance((l, r) in shoulder_pair(), t in point()) {
        let a = build_rotation_matrix(l, r);
        let b = build_rotation_matrix(l + t, r + t);
        // coincident points stay coincident under translation
        let d = l - r;
        if d.norm() > 1e-6 {
            // x̂ is ill-conditioned as ẑ approaches the up axis
            let horizontal = d.x.hypot(d.y).max(1e-9);
            prop_assert!(a.max_abs_diff(&b) < 1e-13 * (1.0 + t.norm()) * d.norm() / (horizontal * horizontal).max(1e-12) + 1e-12);
        } else {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn scale_invariance(l in point(), r in point(), s in 1e-3f64..1e3) {
        prop_assume!((l - r).norm() > 1e-3);
        let d = l - r;
        let a = build_rotation_matrix(d, Vec3::ZERO);
        let b = build_rotation_matrix(d * s, Vec3::ZERO);
        prop_assert!(a.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn yaw_equivariance(l in point(), r in point(), phi in -3.1f64..3.1) {
        let d = l - r;
        prop_assume!(d.x.hypot(d.z) > 1e-3);
        let rot = |v: Vec3| {
            let (s, c) = phi.sin_cos();
            Vec3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z)
        };
        let z0 = build_rotation_matrix(l, r).column(2);
        let z1 = build_rotation_matrix(rot(l), rot(r)).column(2);
        let expected = rot(z0);
        prop_assert!((z1 - expected).norm() < 1e-9);
    }

    #[test]
    fn theta_scale_invariant(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0, s in 1e-3f64..1e3) {
        let q = Quaternion::new(a, b, c, d);
        prop_assume!(q.norm() > 1e-6);
        let t0 = extract_theta(&q).unwrap().value();
        let t1 = extract_theta(&q.scale(s)).unwrap().value();
        prop_assert!((0.0..=std::f64::consts::PI).contains(&t0));
        prop_assert!((t0 - t1).abs() < 1e-7);
    }

    #[test]
    fn orientation_is_increasing(t0 in 0.0f64..3.1, dt in 1e-6f64..1e-2) {
        let a = theta_to_orientation(ThetaRadians::new(t0)).value();
        let b = theta_to_orientation(ThetaRadians::new(t0 + dt)).value();
        prop_assert!(b > a);
    }

    #[test]
    fn kalman_contracts(x0 in -500.0f64..500.0, z in -500.0f64..500.0, p0 in 0.01f64..100.0, r in 0.01f64..10.0, n in 1usize..60) {
        let mut s = FilterState::seeded(x0, p0, r);
        let mut err = (x0 - z).abs();
        let mut p = p0;
        for _ in 0..n {
            let u = s.update(z, true);
            let k = u.gain.unwrap();
            prop_assert!(k > 0.0 && k < 1.0);
            prop_assert!(s.covariance() < p);
            p = s.covariance();
            let e = (s.estimate().unwrap() - z).abs();
            prop_assert!(e < err || err == 0.0);
            err = e;
        }
    }

    #[test]
    fn kalman_is_deterministic(zs in proptest::collection::vec((-200.0f64..500.0, any::<bool>()), 1..80)) {
        let run = || {
            let mut s = FilterState::new(0.5);
            zs.iter().map(|&(z, v)| s.update(z, v).estimate.map(f64::to_bits)).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn pipeline_never_emits_nan(frames in proptest::collection::vec(
        (proptest::option::of((point(), point())), 0.0f64..1.0, 0.0f64..1.0), 0..40)
    ) {
        let stream: Vec<LandmarkFrame> = frames
            .iter()
            .enumerate()
            .map(|(i, (pair, vl, vr))| LandmarkFrame {
                frame_index: i as u64,
                timestamp_ms: i as f64 * 41.67,
                landmarks: pair
                    .map(|(l, r)| vec![Landmark::new(LEFT_SHOULDER, l, *vl), Landmark::new(RIGHT_SHOULDER, r, *vr)])
                    .unwrap_or_default(),
            })
            .collect();
        let out = process_stream(&stream, PipelineConfig::default()).unwrap();
        prop_assert!(out.len() <= stream.len());
        for r in &out {
            prop_assert!(r.quaternion.is_finite());
            prop_assert!(r.theta_raw.value().is_finite() && r.orientation_deg.value().is_finite());
            prop_assert!(stream.iter().any(|f| f.frame_index == r.frame_index));
        }
        let again = process_stream(&stream, PipelineConfig::default()).unwrap();
        for (a, b) in out.iter().zip(&again) {
            prop_assert_eq!(a.quaternion, b.quaternion);
            prop_assert_eq!(a.orientation_deg.value().to_bits(), b.orientation_deg.value().to_bits());
        }
    }

    #[test]
    fn classify_ignores_time_shift(
        vu in -0.3f64..0.3, vv in -0.3f64..0.3, orientation in -180.0f64..540.0, shift in -1e5f64..1e5
    ) {
        let build = |offset: f64| {
            let mut w = TrajectoryWindow::new(48);
            for i in 0..48 {
                let t = i as f64 * 1000.0 / 24.0;
                w.push(TrajectorySample { timestamp_ms: t + offset, u: 500.0 + vu * t, v: 400.0 + vv * t, orientation_deg: orientation }).unwrap();
            }
            w
        };
        let a = classify(&build(0.0), 1920.0).unwrap();
        let b = classify(&build(shift), 1920.0).unwrap();
        for (x, y) in a.memberships.to_array().into_iter().zip(b.memberships.to_array()) {
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((x - y).abs() < 1e-6);
        }
        let margin = {
            let mut m = a.memberships.to_array();
            m.sort_by(f64::total_cmp);
            m[4] - m[3]
        };
        if margin > 1e-6 {
            prop_assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn score_monotone_in_radius(
        pairs in proptest::collection::vec(((-100.0f64..100.0, -100.0f64..100.0), (-100.0f64..100.0, -100.0f64..100.0)), 1..50),
        r0 in 0.0f64..100.0, dr in 0.0f64..100.0
    ) {
        let (p, a): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let s0 = score_predictions(&p, &a, r0).unwrap();
        let s1 = score_predictions(&p, &a, r0 + dr).unwrap();
        prop_assert!((0.0..=1.0).contains(&s0));
        prop_assert!(s1 >= s0);
    }
}
