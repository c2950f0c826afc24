use cpmg_zefoz::decoherence::{
    gamma_cpmg, gamma_spin_echo, t2_cpmg, t2_cpmg_small_tau, t2_spin_echo, OuParams,
};
use cpmg_zefoz::ou_sim::numeric_gamma;
use proptest::prelude::*;

/// ½σ²∬ s(t')s(t'')e^{−|t'−t''|/τc} over [0, nτ]², summed exactly over the
/// constant-sign cells between pulses.
fn cell_oracle(n: u32, tau: f64, ou: &OuParams) -> f64 {
    let tc = ou.tau_c;
    let mut edges = vec![0.0];
    for j in 0..n {
        edges.push((2 * j + 1) as f64 * tau / 2.0);
    }
    edges.push(n as f64 * tau);
    let cells: Vec<(f64, f64, f64)> = edges
        .windows(2)
        .enumerate()
        .map(|(k, w)| (w[0], w[1], if k % 2 == 0 { 1.0 } else { -1.0 }))
        .collect();
    let e = |d: f64| (-d / tc).exp();
    let mut total = 0.0;
    for (i, &(a0, a1, sa)) in cells.iter().enumerate() {
        let l = a1 - a0;
        total += 2.0 * tc * l - 2.0 * tc * tc * (1.0 - e(l));
        for &(b0, b1, sb) in &cells[i + 1..] {
            let pair = tc * tc * (e(b0 - a1) - e(b0 - a0) - e(b1 - a1) + e(b1 - a0));
            total += 2.0 * sa * sb * pair;
        }
    }
    0.5 * ou.sigma * ou.sigma * total
}

fn nominal() -> OuParams {
    OuParams::new(2.3e3, 172e-6).unwrap()
}

const GRID_N: [u32; 5] = [1, 2, 3, 5, 8];
const GRID_X: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 10.0];

#[test]
fn closed_form_matches_cell_oracle_on_grid() {
    let ou = nominal();
    for n in GRID_N {
        for x in GRID_X {
            let tau = x * ou.tau_c;
            let want = cell_oracle(n, tau, &ou);
            let got = gamma_cpmg(n, tau, &ou).unwrap();
            assert!(((got - want) / want).abs() < 1e-6, "n={n} τ/τc={x}: {got} vs {want}");
        }
    }
}

#[test]
fn closed_form_matches_numeric_quadrature_on_grid() {
    let ou = nominal();
    for n in GRID_N {
        for x in GRID_X {
            let tau = x * ou.tau_c;
            let want = numeric_gamma(n, tau, &ou, 24).unwrap();
            let got = gamma_cpmg(n, tau, &ou).unwrap();
            assert!(((got - want) / want).abs() < 1e-6, "n={n} τ/τc={x}: {got} vs {want}");
        }
    }
}

#[test]
fn spin_echo_reduction_over_decades() {
    let ou = nominal();
    let mut u = 1e-3;
    while u <= 1e3 {
        let t = u * ou.tau_c;
        let a = gamma_cpmg(1, t, &ou).unwrap();
        let b = gamma_spin_echo(t, &ou).unwrap();
        assert!(((a - b) / b).abs() < 1e-12, "t/τc={u}: {a} vs {b}");
        u *= 1.7;
    }
}

#[test]
fn spin_echo_matches_cell_oracle() {
    let ou = nominal();
    for u in [0.05, 0.3, 1.0, 3.0, 20.0] {
        let t = u * ou.tau_c;
        let want = cell_oracle(1, t, &ou);
        let got = gamma_spin_echo(t, &ou).unwrap();
        assert!(((got - want) / want).abs() < 1e-9, "u={u}");
    }
}

#[test]
fn long_time_rate_approaches_inverse_t2() {
    let ou = nominal();
    for x in [0.02, 0.1, 0.5, 1.0] {
        let tau = x * ou.tau_c;
        let n = ((50.0 * ou.tau_c / tau).ceil() as u32).max(1);
        let t = n as f64 * tau;
        let rate = gamma_cpmg(n, tau, &ou).unwrap() / t;
        let inv = 1.0 / t2_cpmg(tau, &ou).unwrap();
        assert!(((rate - inv) / inv).abs() <= 0.01, "τ/τc={x}");
    }
}

#[test]
fn long_interval_edge_term_decays_as_inverse_time() {
    // At τ = 3τc the edge term is ~3% of γ at t = 50τc; it must fall off
    // as 1/t.
    let ou = nominal();
    let tau = 3.0 * ou.tau_c;
    let inv = 1.0 / t2_cpmg(tau, &ou).unwrap();
    let gap = |n: u32| {
        let t = n as f64 * tau;
        ((gamma_cpmg(n, tau, &ou).unwrap() / t - inv) / inv).abs()
    };
    let (a, b) = (gap(17), gap(170));
    assert!(a > 0.01 && a < 0.05, "{a}");
    assert!((a / b - 10.0).abs() < 0.01, "{a} {b}");
    assert!(b < 0.01);
}

#[test]
fn more_pulses_preserve_more_coherence() {
    let ou = nominal();
    let t = 24.0 * ou.tau_c;
    let g: Vec<f64> = [1u32, 2, 4, 8, 16]
        .iter()
        .map(|&n| gamma_cpmg(n, t / n as f64, &ou).unwrap())
        .collect();
    assert!(g.windows(2).all(|w| w[1] < w[0]), "{g:?}");
}

#[test]
fn t2_anchor_values() {
    let ou = nominal();
    let a = t2_cpmg(150e-6, &ou).unwrap();
    assert!((a - 18.7e-3).abs() < 0.5e-3, "{a}");
    let b = t2_cpmg(3e-6, &ou).unwrap();
    assert!((b - 43.0).abs() < 2.0, "{b}");
    let c = t2_cpmg_small_tau(3e-6, &ou).unwrap();
    assert!(((b - c) / b).abs() < 1e-3);
    let se = t2_spin_echo(&ou).unwrap();
    assert!((se / 1.01e-3 - 1.0).abs() < 0.10, "{se}");
}

proptest! {
    #[test]
    fn gamma_scales_with_sigma_squared(
        n in 1u32..20,
        x in 1e-3f64..30.0,
        s in 1e2f64..1e5,
    ) {
        let tc = 172e-6;
        let a = gamma_cpmg(n, x * tc, &OuParams::new(s, tc).unwrap()).unwrap();
        let b = gamma_cpmg(n, x * tc, &OuParams::new(2.0 * s, tc).unwrap()).unwrap();
        prop_assert!((b - 4.0 * a).abs() <= 1e-12 * b.abs().max(1e-300));
    }

    #[test]
    fn gamma_is_nonnegative_and_matches_oracle(
        n in 1u32..12,
        x in 0.05f64..20.0,
    ) {
        let ou = nominal();
        let g = gamma_cpmg(n, x * ou.tau_c, &ou).unwrap();
        prop_assert!(g >= 0.0);
        let want = cell_oracle(n, x * ou.tau_c, &ou);
        prop_assert!(((g - want) / want).abs() < 1e-6);
    }
}
