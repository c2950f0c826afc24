//! Closed-form coherence under CPMG and Hahn-echo sequences when the
//! transition frequency carries stationary Ornstein-Uhlenbeck noise.
//!
//! Angular frequencies throughout (rad/s). The decay exponent is
//!
//! ```text
//! γ(n, τ) = (σ τ_c)² { [1/τ_c − (2/τ) tanh(τ/2τ_c)] t
//!                      − [1 + (−1)^{n+1} e^{−t/τ_c}] [1 − sech(τ/2τ_c)]² },  t = nτ
//! ```
//!
//! and the echo amplitude is `ρ₀ exp(−γ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency-noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Standard deviation of the splitting fluctuation, rad/s.
    pub sigma: f64,
    /// Correlation time, s.
    pub tau_c: f64,
}

impl OuParams {
    pub fn new(sigma: f64, tau_c: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be >= 0, got {sigma}")));
        }
        if !(tau_c.is_finite() && tau_c > 0.0) {
            return Err(Error::invalid("tau_c", format!("must be > 0, got {tau_c}")));
        }
        Ok(Self { sigma, tau_c })
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::new(sigma, self.tau_c)
    }
}

/// `n` equally spaced π pulses at `(2j+1)τ/2`, echo read at `nτ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpmgParams {
    pub n: u32,
    /// Inter-pulse interval, s.
    pub tau: f64,
}

impl CpmgParams {
    pub fn new(n: u32, tau: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "need at least one pulse"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
        }
        Ok(Self { n, tau })
    }

    /// The single-pulse echo read out at `t`.
    pub fn spin_echo(t: f64) -> Result<Self> {
        Self::new(1, t)
    }

    pub fn total_time(&self) -> f64 {
        self.n as f64 * self.tau
    }

    pub fn pulse_times(&self) -> Vec<f64> {
        (0..self.n).map(|j| (2 * j + 1) as f64 * self.tau / 2.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceDescriptor {
    /// One π pulse; the time axis is the echo time.
    SpinEcho,
    /// Fixed interval, pulse count increasing along the curve.
    CpmgFixedTau { tau: f64 },
    /// Fixed pulse count, interval increasing along the curve.
    CpmgFixedN { n: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    /// `(t [s], |ρ_ab| / ρ_ab⁽⁰⁾)`, strictly increasing in t.
    pub points: Vec<(f64, f64)>,
    pub params: OuParams,
    pub sequence: SequenceDescriptor,
    pub rho0: f64,
}

impl CoherenceCurve {
    /// Writes `t_s,value`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "value"])?;
        for &(t, v) in &self.points {
            w.write_record([format!("{t}"), format!("{v}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Toggling function of the sequence: ±1, flipping at every pulse, ending
/// at +1. A pulse instant belongs to the interval that starts there.
pub fn sign_function(cpmg: &CpmgParams, t: f64) -> Result<f64> {
    let total = cpmg.total_time();
    if !(t >= 0.0 && t <= total) {
        return Err(Error::OutOfWindow { t, total });
    }
    let passed = ((t / cpmg.tau + 0.5).floor() as u64).min(cpmg.n as u64);
    Ok(if (cpmg.n as u64 - passed).is_multiple_of(2) { 1.0 } else { -1.0 })
}

/// `1 − tanh(x)/x`, with a series below x = 0.1 where the subtraction
/// would cancel.
fn one_minus_tanhc(x: f64) -> f64 {
    if x < 0.1 {
        // Coefficients of 1 − tanh(x)/x in powers of x².
        const C: [f64; 7] = [
            1.0 / 3.0,
            -2.0 / 15.0,
            17.0 / 315.0,
            -62.0 / 2835.0,
            1382.0 / 155_925.0,
            -21_844.0 / 6_081_075.0,
            929_569.0 / 638_512_875.0,
        ];
        let x2 = x * x;
        C.iter().rev().fold(0.0, |acc, c| acc * x2 + c) * x2
    } else {
        1.0 - x.tanh() / x
    }
}

/// `1 − sech(x)` without cancellation at small x or overflow at large x.
fn one_minus_sech(x: f64) -> f64 {
    if x < 1.0 {
        let s = (0.5 * x).sinh();
        2.0 * s * s / x.cosh()
    } else {
        let e = (-x).exp();
        1.0 - 2.0 * e / (1.0 + e * e)
    }
}

fn clamp_rounding(gamma: f64, scale: f64) -> f64 {
    if gamma < 0.0 && gamma > -1e-15 * scale.max(1.0) {
        0.0
    } else {
        gamma
    }
}

/// Decay exponent γ(n, τ) after `n` pulses with interval `tau`.
pub fn gamma_cpmg(n: u32, tau: f64, ou: &OuParams) -> Result<f64> {
    let seq = CpmgParams::new(n, tau)?;
    let x = tau / (2.0 * ou.tau_c);
    let u = seq.total_time() / ou.tau_c;
    let parity = if n % 2 == 1 { 1.0 } else { -1.0 };
    let edge = (1.0 + parity * (-u).exp()) * one_minus_sech(x).powi(2);
    let st = ou.sigma * ou.tau_c;
    let scale = st * st;
    Ok(clamp_rounding(scale * (u * one_minus_tanhc(x) - edge), scale * u))
}

/// `rho0 · exp(−γ(n, τ))`.
pub fn coherence_cpmg(n: u32, tau: f64, ou: &OuParams, rho0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho0) {
        return Err(Error::invalid("rho0", format!("must lie in [0, 1], got {rho0}")));
    }
    Ok(rho0 * (-gamma_cpmg(n, tau, ou)?).exp())
}

/// Asymptotic (t ≫ τ_c) decay time under CPMG with interval `tau`.
pub fn t2_cpmg(tau: f64, ou: &OuParams) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
    }
    let rate = ou.sigma * ou.sigma * ou.tau_c * one_minus_tanhc(tau / (2.0 * ou.tau_c));
    Ok(1.0 / rate)
}

/// `12 τ_c / (σ² τ²)`, the τ ≪ τ_c limit of [`t2_cpmg`].
pub fn t2_cpmg_small_tau(tau: f64, ou: &OuParams) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
    }
    Ok(12.0 * ou.tau_c / (ou.sigma * ou.sigma * tau * tau))
}

/// Hahn-echo exponent `(στ_c)² (u + 4e^{−u/2} − e^{−u} − 3)`, u = t/τ_c.
pub fn gamma_spin_echo(t: f64, ou: &OuParams) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
    }
    let u = t / ou.tau_c;
    let bracket = if u < 0.5 {
        // Orders 0..2 cancel exactly; term k is (−1)^k (4·2^{−k} − 1) u^k / k!.
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..=30 {
            term *= u / k as f64;
            if k >= 3 {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign * (4.0 * 0.5f64.powi(k) - 1.0) * term;
            }
        }
        sum
    } else {
        u + 4.0 * (-0.5 * u).exp() - (-u).exp() - 3.0
    };
    let st = ou.sigma * ou.tau_c;
    Ok(clamp_rounding(st * st * bracket, st * st * u))
}

/// `(σ² τ_c)⁻¹`, the long-time Hahn-echo decay time.
pub fn t2_spin_echo(ou: &OuParams) -> Result<f64> {
    if ou.sigma <= 0.0 {
        return Err(Error::invalid("sigma", "zero noise gives an infinite lifetime"));
    }
    Ok(1.0 / (ou.sigma * ou.sigma * ou.tau_c))
}

fn check_increasing(name: &'static str, xs: &[f64]) -> Result<()> {
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(name, "must be strictly increasing"));
    }
    Ok(())
}

/// Echo amplitude at each time in `times`.
pub fn spin_echo_curve(ou: &OuParams, times: &[f64], rho0: f64) -> Result<CoherenceCurve> {
    check_increasing("times", times)?;
    let points = times
        .iter()
        .map(|&t| Ok((t, rho0 * (-gamma_spin_echo(t, ou)?).exp())))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceCurve {
        points,
        params: *ou,
        sequence: SequenceDescriptor::SpinEcho,
        rho0,
    })
}

/// Fixed interval, increasing pulse count; time axis is `nτ`.
pub fn cpmg_fixed_tau_curve(ou: &OuParams, tau: f64, ns: &[u32], rho0: f64) -> Result<CoherenceCurve> {
    let times: Vec<f64> = ns.iter().map(|&n| n as f64 * tau).collect();
    check_increasing("pulse counts", &times)?;
    let points = ns
        .iter()
        .map(|&n| Ok((n as f64 * tau, coherence_cpmg(n, tau, ou, rho0)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceCurve {
        points,
        params: *ou,
        sequence: SequenceDescriptor::CpmgFixedTau { tau },
        rho0,
    })
}

/// Fixed pulse count, increasing interval; time axis is `nτ`.
pub fn cpmg_fixed_n_curve(ou: &OuParams, n: u32, taus: &[f64], rho0: f64) -> Result<CoherenceCurve> {
    check_increasing("intervals", taus)?;
    let points = taus
        .iter()
        .map(|&tau| Ok((n as f64 * tau, coherence_cpmg(n, tau, ou, rho0)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceCurve {
        points,
        params: *ou,
        sequence: SequenceDescriptor::CpmgFixedN { n },
        rho0,
    })
}

/// `count` log-spaced values from `start` to `stop` inclusive.
pub fn logspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    crate::crystal::linspace(start.ln(), stop.ln(), count)
        .into_iter()
        .map(f64::exp)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn nominal() -> OuParams {
        presets::paper_noise()
    }

    #[test]
    fn sign_function_examples() {
        let one = CpmgParams::new(1, 1.0).unwrap();
        assert_eq!(sign_function(&one, 0.0).unwrap(), -1.0);
        assert_eq!(sign_function(&one, 0.499).unwrap(), -1.0);
        assert_eq!(sign_function(&one, 0.5).unwrap(), 1.0);
        assert_eq!(sign_function(&one, 1.0).unwrap(), 1.0);

        let two = CpmgParams::new(2, 1.0).unwrap();
        assert_eq!(sign_function(&two, 0.0).unwrap(), 1.0);
        assert_eq!(sign_function(&two, 0.5 + 1e-9).unwrap(), -1.0);
        assert_eq!(sign_function(&two, 1.5 + 1e-9).unwrap(), 1.0);

        assert!(matches!(sign_function(&two, 2.0 + 1e-9), Err(Error::OutOfWindow { .. })));
        assert!(sign_function(&two, -1e-12).is_err());
    }

    #[test]
    fn sign_function_integrates_to_zero() {
        // Exact piecewise integral: each interval has constant sign.
        for n in 1..=8u32 {
            let seq = CpmgParams::new(n, 2.0).unwrap();
            let mut edges = vec![0.0];
            edges.extend(seq.pulse_times());
            edges.push(seq.total_time());
            let integral: f64 = edges
                .windows(2)
                .map(|w| sign_function(&seq, 0.5 * (w[0] + w[1])).unwrap() * (w[1] - w[0]))
                .sum();
            assert!(integral.abs() < 1e-12, "n={n}: {integral}");
        }
    }

    #[test]
    fn pulse_times_are_ordered() {
        let s = CpmgParams::new(5, 3.0).unwrap();
        let p = s.pulse_times();
        assert_eq!(p[0], 1.5);
        assert!(p.windows(2).all(|w| w[1] > w[0]));
        assert!(*p.last().unwrap() < s.total_time());
        assert!(CpmgParams::new(0, 1.0).is_err());
        assert!(CpmgParams::new(1, 0.0).is_err());
    }

    #[test]
    fn zero_noise_gives_full_coherence() {
        let ou = OuParams::new(0.0, 1e-4).unwrap();
        assert_eq!(gamma_cpmg(4, 1e-4, &ou).unwrap(), 0.0);
        assert_eq!(coherence_cpmg(4, 1e-4, &ou, 1.0).unwrap(), 1.0);
        assert_eq!(coherence_cpmg(4, 1e-4, &nominal(), 0.0).unwrap(), 0.0);
        assert!(coherence_cpmg(4, 1e-4, &nominal(), 1.5).is_err());
    }

    #[test]
    fn single_pulse_reduces_to_spin_echo() {
        let ou = nominal();
        for r in [0.1, 1.0, 10.0] {
            let t = r * ou.tau_c;
            assert_relative_eq!(
                gamma_cpmg(1, t, &ou).unwrap(),
                gamma_spin_echo(t, &ou).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn spin_echo_value_at_tau_c() {
        // Double-integral oracle value for σ = 2.3e3 rad/s, τ_c = 172 µs, t = τ_c.
        let g = gamma_spin_echo(172e-6, &nominal()).unwrap();
        assert!((g - 9.115_023e-3).abs() < 1e-8, "{g}");
        assert!((gamma_cpmg(1, 172e-6, &nominal()).unwrap() - 9.1e-3).abs() < 0.05e-3);
    }

    #[test]
    fn spin_echo_limits() {
        let ou = nominal();
        assert_eq!(gamma_spin_echo(0.0, &ou).unwrap(), 0.0);
        let t = 1e3 * ou.tau_c;
        let rate = gamma_spin_echo(t, &ou).unwrap() / t;
        // Linear asymptote σ²τc·(t − 3τc).
        assert_relative_eq!(rate, ou.sigma.powi(2) * ou.tau_c * (1.0 - 3e-3), max_relative = 1e-9);
        // Quasi-static noise refocuses: γ_se → 0 as τ_c → ∞ at fixed t.
        let mut prev = f64::INFINITY;
        for tc in [1e-3, 1e-1, 1e1, 1e3] {
            let g = gamma_spin_echo(1e-3, &OuParams::new(ou.sigma, tc).unwrap()).unwrap();
            assert!(g < prev);
            prev = g;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn t2_anchor_values() {
        let ou = nominal();
        let t150 = t2_cpmg(150e-6, &ou).unwrap();
        assert!((t150 - 18.7e-3).abs() < 0.5e-3, "{t150}");
        let t3 = t2_cpmg(3e-6, &ou).unwrap();
        assert!((t3 - 43.0).abs() < 2.0, "{t3}");
        assert_relative_eq!(t2_cpmg_small_tau(3e-6, &ou).unwrap(), 43.35, max_relative = 1e-3);
        assert_relative_eq!(t2_cpmg(1e3, &ou).unwrap(), t2_spin_echo(&ou).unwrap(), max_relative = 1e-6);
    }

    #[test]
    fn small_tau_limit_agrees() {
        let ou = nominal();
        let tau = ou.tau_c / 100.0;
        assert_relative_eq!(
            t2_cpmg(tau, &ou).unwrap(),
            t2_cpmg_small_tau(tau, &ou).unwrap(),
            max_relative = 0.01
        );
        assert_relative_eq!(
            t2_cpmg_small_tau(2.0 * tau, &ou).unwrap() * 4.0,
            t2_cpmg_small_tau(tau, &ou).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn t2_spin_echo_cases() {
        let one = OuParams::new(1.0, 1.0).unwrap();
        assert_eq!(t2_spin_echo(&one).unwrap(), 1.0);
        let ou = nominal();
        let t = t2_spin_echo(&ou).unwrap();
        assert_relative_eq!(t2_spin_echo(&ou.with_sigma(2.0 * ou.sigma).unwrap()).unwrap(), t / 4.0);
        assert!(t2_spin_echo(&OuParams::new(0.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn extreme_ratios_are_finite_and_non_negative() {
        let ou = OuParams::new(1.0, 1.0).unwrap();
        for r in [1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6] {
            for n in [1, 2, 7] {
                let g = gamma_cpmg(n, r, &ou).unwrap();
                assert!(g.is_finite() && g >= 0.0, "n={n} r={r}: {g}");
            }
        }
        // Leading small-τ behaviour: γ ≈ (σ²/12τ_c) n τ³.
        let g = gamma_cpmg(10, 1e-6, &ou).unwrap();
        assert_relative_eq!(g, 10.0 * 1e-18 / 12.0, max_relative = 1e-5);
    }

    #[test]
    fn fixed_n_curve_plateau_and_decay() {
        let ou = nominal();
        let taus = logspace(ou.tau_c / 100.0, ou.tau_c * 10.0, 40);
        let c = cpmg_fixed_n_curve(&ou, 4, &taus, 1.0).unwrap();
        let first = c.points[0].1;
        assert!(first > 0.999);
        assert!(c.points[5].1 > 0.99);
        assert!(c.points.last().unwrap().1 < 0.1);
        assert!(c.points.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn curve_csv_format() {
        let c = spin_echo_curve(&nominal(), &[1e-4, 2e-4], 1.0).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,value\n"));
        assert_eq!(text.lines().count(), 3);
        assert!(spin_echo_curve(&nominal(), &[2e-4, 1e-4], 1.0).is_err());
    }
}
