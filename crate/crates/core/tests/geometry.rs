use cpmg_zefoz::crystal::{
    default_site_table, field_direction, local_components, orientation_map, rabi, rabi_for_vectors,
    site4, site_response, splitting, FieldConfig, GyroTensor, SiteFrame, Vec3,
};
use cpmg_zefoz::zefoz::{
    broadening_estimate, find_partial_zefoz, BroadeningMethod, ZefozOptions, ZefozStatus,
};
use proptest::prelude::*;

const GY: f64 = 403e6;

/// Hand-rolled site-4 response: explicit axis projections, then
/// |γ∘b| and ½|γ∘b₁ × γ∘b| / |γ∘b|.
fn oracle_site4(theta: f64, phi: f64) -> (f64, f64) {
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let b = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
    let b1 = [-phi.sin(), phi.cos(), 0.0];
    let proj = |v: [f64; 3]| {
        [
            (-v[1] - v[2]) * s2,
            (v[1] - v[2]) * s2,
            v[0],
        ]
    };
    let g = [0.045 * GY, GY, 0.017 * GY];
    let eb: Vec<f64> = proj(b).iter().zip(g).map(|(c, k)| c * k).collect();
    let e1: Vec<f64> = proj(b1).iter().zip(g).map(|(c, k)| c * k).collect();
    let norm = (eb[0] * eb[0] + eb[1] * eb[1] + eb[2] * eb[2]).sqrt();
    let cross = [
        e1[1] * eb[2] - e1[2] * eb[1],
        e1[2] * eb[0] - e1[0] * eb[2],
        e1[0] * eb[1] - e1[1] * eb[0],
    ];
    let c = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    (norm, 0.5 * c / norm)
}

#[test]
fn site4_anchor_against_hand_oracle() {
    let (t, p) = (54.8f64.to_radians(), 45f64.to_radians());
    let (d, r) = oracle_site4(t, p);
    let resp = site_response(&GyroTensor::tm_yag(), &site4(), &FieldConfig::unit(t, p)).unwrap();
    assert!((resp.delta_per_tesla - d).abs() < 1e-6);
    assert!((resp.rabi_per_tesla - r).abs() < 1e-6);
    assert!((d / 1e6 - 15.3).abs() < 0.1);
    assert!((r / 1e6 - 101.0).abs() < 2.0);
}

#[test]
fn zefoz_anchor() {
    let res = find_partial_zefoz(
        &GyroTensor::tm_yag(),
        &site4(),
        45f64.to_radians(),
        (0.0, std::f64::consts::PI),
        &ZefozOptions::default(),
    )
    .unwrap();
    assert_eq!(res.status, ZefozStatus::Converged);
    assert!((res.theta_star.to_degrees() - 54.8).abs() < 0.2);
    // The in-plane minimum is not a full ZEFOZ point.
    assert!(res.grad_phi.abs() > 1e6);
}

#[test]
fn map_agrees_with_pointwise_oracle() {
    let g = GyroTensor::tm_yag();
    let thetas: Vec<f64> = (0..7).map(|i| (10.0 + 25.0 * i as f64).to_radians()).collect();
    let phis: Vec<f64> = (0..5).map(|i| (15.0 + 70.0 * i as f64).to_radians()).collect();
    let map = orientation_map(&g, &site4(), &thetas, &phis).unwrap();
    for (t, p, r) in map.iter() {
        let (d, rb) = oracle_site4(t, p);
        assert!((r.delta_per_tesla - d).abs() < 1e-6 * d);
        assert!((r.rabi_per_tesla - rb).abs() < 1e-6 * rb.max(1.0));
    }
}

#[test]
fn broadening_grows_with_misalignment() {
    let g = GyroTensor::tm_yag();
    let field = FieldConfig::new(0.985, 54.8f64.to_radians(), 45f64.to_radians(), 1e-3).unwrap();
    let mut prev = 0.0;
    for deg in [0.05, 0.1, 0.2, 0.3, 0.5, 1.0] {
        let est = broadening_estimate(
            &g,
            &site4(),
            &field,
            f64::to_radians(deg),
            BroadeningMethod::ConeSampling,
            100_000,
            7,
        )
        .unwrap();
        assert!(est.gamma_inh > prev, "σ={deg}°: {} <= {prev}", est.gamma_inh);
        prev = est.gamma_inh;
    }
}

#[test]
fn broadening_converges_in_sample_count() {
    let g = GyroTensor::tm_yag();
    let field = FieldConfig::new(0.985, 54.8f64.to_radians(), 45f64.to_radians(), 1e-3).unwrap();
    let run = |n, seed| {
        broadening_estimate(&g, &site4(), &field, 0.3f64.to_radians(), BroadeningMethod::ConeSampling, n, seed)
            .unwrap()
            .gamma_inh
    };
    let a = run(200_000, 1);
    let b = run(200_000, 2);
    assert!(((a - b) / a).abs() < 0.05, "{a} {b}");
    assert_eq!(run(50_000, 3), run(50_000, 3));
}

fn unit_vec() -> impl Strategy<Value = Vec3> {
    (0.01f64..3.13, 0.0..std::f64::consts::TAU).prop_map(|(t, p)| field_direction(t, p))
}

proptest! {
    #[test]
    fn splitting_is_linear_in_field_magnitude(b in unit_vec(), lam in 1e-3f64..10.0) {
        let g = GyroTensor::tm_yag();
        let f = site4();
        let d1 = splitting(&g, &local_components(&f, &b));
        let dl = splitting(&g, &local_components(&f, &(b * lam)));
        prop_assert!((dl - lam * d1).abs() <= 1e-12 * dl);
    }

    #[test]
    fn splitting_is_even_in_field(b in unit_vec()) {
        let g = GyroTensor::tm_yag();
        for f in default_site_table() {
            let a = splitting(&g, &local_components(&f, &b));
            let c = splitting(&g, &local_components(&f, &(-b)));
            prop_assert!((a - c).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn rabi_ignores_rf_sign_and_scales_linearly(b in unit_vec(), b1 in unit_vec(), k in 1e-4f64..1e-1) {
        let g = GyroTensor::tm_yag();
        let f = site4();
        let base = rabi_for_vectors(&g, &f, &b, &b1).unwrap();
        let flipped = rabi_for_vectors(&g, &f, &b, &(-b1)).unwrap();
        let scaled = rabi_for_vectors(&g, &f, &b, &(b1 * k)).unwrap();
        prop_assert!((base - flipped).abs() <= 1e-9 * base.max(1.0));
        prop_assert!((scaled - k * base).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn isotropic_tensor_is_orientation_blind(t in 0.01f64..3.13, p in 0.0..std::f64::consts::TAU, gamma in 1e6f64..1e9) {
        let g = GyroTensor::isotropic(gamma).unwrap();
        for f in default_site_table() {
            let r = site_response(&g, &f, &FieldConfig::unit(t, p)).unwrap();
            prop_assert!((r.delta_per_tesla - gamma).abs() <= 1e-9 * gamma);
            // rf direction is always perpendicular to B, so the full ½γ|B1|.
            prop_assert!((r.rabi_per_tesla - 0.5 * gamma).abs() <= 1e-9 * gamma);
        }
    }

    #[test]
    fn frames_from_the_table_are_orthonormal(i in 0usize..6) {
        let f: SiteFrame = default_site_table()[i].clone();
        let m = f.to_local_matrix();
        let id = m * m.transpose();
        prop_assert!((id - nalgebra::Matrix3::identity()).norm() < 1e-12);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn response_matches_hand_oracle(t in 0.01f64..3.13, p in 0.0..std::f64::consts::TAU) {
        let (d, r) = oracle_site4(t, p);
        let resp = site_response(&GyroTensor::tm_yag(), &site4(), &FieldConfig::unit(t, p)).unwrap();
        prop_assert!((resp.delta_per_tesla - d).abs() <= 1e-9 * d);
        prop_assert!((resp.rabi_per_tesla - r).abs() <= 1e-9 * d);
        let fc = FieldConfig::unit(t, p);
        prop_assert!((rabi(&GyroTensor::tm_yag(), &site4(), &fc).unwrap() - r).abs() <= 1e-9 * d);
    }
}
