//! Parameter extraction from echo decays.
//!
//! Spin-echo data are fitted to `ρ(t) = A·exp(−γ_se(t; σ, τc))` (or the
//! additive-offset variant `ρ = c + exp(−γ_se)`), CPMG decays to a straight
//! line in `ln ρ`.

pub mod lm;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::decoherence::{coherence_cpmg, gamma_spin_echo, CpmgParams, OuParams};
use crate::error::{Error, Result};
use crate::ou_sim::{mc_cpmg, trial_rng, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensities {
    pub initial: f64,
    pub final_: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoPoint {
    pub t: f64,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<Intensities>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoDataset {
    pub points: Vec<EchoPoint>,
    pub provenance: String,
}

const RHO_MAX: f64 = 1.2;

impl EchoDataset {
    /// Validates `t > 0` strictly increasing and `ρ ∈ [0, 1.2]`.
    pub fn new(points: Vec<EchoPoint>, provenance: impl Into<String>) -> Result<Self> {
        let mut prev = 0.0;
        for (i, p) in points.iter().enumerate() {
            if !(p.t.is_finite() && p.t > prev) {
                return Err(Error::Dataset(format!(
                    "row {i}: t = {} must be positive and strictly increasing",
                    p.t
                )));
            }
            if !(0.0..=RHO_MAX).contains(&p.rho) {
                return Err(Error::Dataset(format!(
                    "row {i}: rho = {} outside [0, {RHO_MAX}]",
                    p.rho
                )));
            }
            prev = p.t;
        }
        Ok(Self {
            points,
            provenance: provenance.into(),
        })
    }

    pub fn from_pairs(t: &[f64], rho: &[f64], provenance: impl Into<String>) -> Result<Self> {
        if t.len() != rho.len() {
            return Err(Error::Dataset(format!(
                "length mismatch: {} times, {} values",
                t.len(),
                rho.len()
            )));
        }
        let points = t
            .iter()
            .zip(rho)
            .map(|(&t, &rho)| EchoPoint { t, rho, raw: None })
            .collect();
        Self::new(points, provenance)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rho).collect()
    }

    /// Reads `t_s,rho` or `t_s,I_i,I_f,I_ref`, chosen by header. Other columns
    /// are ignored.
    pub fn read_csv<R: Read>(input: R, provenance: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let t_col = col("t_s").ok_or_else(|| Error::Dataset("missing column t_s".into()))?;
        enum Layout {
            Rho(usize),
            Raw(usize, usize, usize),
        }
        let layout = if let Some(r) = col("rho") {
            Layout::Rho(r)
        } else {
            match (col("I_i"), col("I_f"), col("I_ref")) {
                (Some(a), Some(b), Some(c)) => Layout::Raw(a, b, c),
                _ => {
                    return Err(Error::Dataset(
                        "expected columns t_s,rho or t_s,I_i,I_f,I_ref".into(),
                    ))
                }
            }
        };
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                let s = rec.get(c).unwrap_or("");
                s.parse::<f64>().map_err(|e| Error::Parse {
                    input: s.to_string(),
                    reason: format!("row {}: {e}", i + 1),
                })
            };
            let t = num(t_col)?;
            let point = match layout {
                Layout::Rho(r) => EchoPoint {
                    t,
                    rho: num(r)?,
                    raw: None,
                },
                Layout::Raw(a, b, c) => {
                    let raw = Intensities {
                        initial: num(a)?,
                        final_: num(b)?,
                        reference: num(c)?,
                    };
                    EchoPoint {
                        t,
                        rho: intensity_to_coherence(raw.initial, raw.final_, raw.reference)?,
                        raw: Some(raw),
                    }
                }
            };
            points.push(point);
        }
        Self::new(points, provenance)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, path.display().to_string())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "rho"])?;
        for p in &self.points {
            w.write_record([format!("{:.17e}", p.t), format!("{:.17e}", p.rho)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `ln(I_f/I_ref) / ln(I_i/I_ref)`.
pub fn intensity_to_coherence(i_i: f64, i_f: f64, i_ref: f64) -> Result<f64> {
    for (field, v) in [("I_i", i_i), ("I_f", i_f), ("I_ref", i_ref)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(field, format!("intensity must be positive, got {v}")));
        }
    }
    let den = (i_i / i_ref).ln();
    if den == 0.0 {
        return Err(Error::invalid("I_i", "equals I_ref; coherence is undefined"));
    }
    Ok((i_f / i_ref).ln() / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoModel {
    /// `ρ = A·exp(−γ_se)`
    Amplitude,
    /// `ρ = c + exp(−γ_se)`
    Offset,
}

impl EchoModel {
    pub fn formula(self) -> &'static str {
        match self {
            EchoModel::Amplitude => "rho = A*exp(-gamma_se(t; sigma, tau_c))",
            EchoModel::Offset => "rho = c + exp(-gamma_se(t; sigma, tau_c))",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    SingularCovariance,
    /// The fitted decay is negligible over the data window: σ → 0.
    SigmaAtBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinEchoGuess {
    pub sigma: f64,
    pub tau_c: f64,
    /// `A` for the amplitude model, `c` for the offset model.
    pub third: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinEchoFit {
    pub model: EchoModel,
    pub formula: String,
    pub sigma: Estimate,
    pub tau_c: Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<Estimate>,
    pub residual_norm: f64,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: FitStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500 }
    }
}

struct Prepared {
    t: Vec<f64>,
    rho: Vec<f64>,
}

fn prepare_spin_echo(data: &EchoDataset) -> Result<Prepared> {
    if data.len() < 5 {
        return Err(Error::Dataset(format!(
            "spin-echo fit needs at least 5 points, got {}",
            data.len()
        )));
    }
    let t = data.times();
    let span = t[t.len() - 1] / t[0];
    if span < 4.0 {
        return Err(Error::Dataset(format!(
            "spin-echo fit needs times spanning a factor 4, got {span:.3}"
        )));
    }
    Ok(Prepared {
        t,
        rho: data.values(),
    })
}

// `g(u) = u + 4e^{−u/2} − e^{−u} − 3` with γ_se = (στc)²·g(t/τc).
fn g_prime(u: f64) -> f64 {
    // 1 − 2e^{−u/2} + e^{−u} = (1 − e^{−u/2})²
    let a = -(-0.5 * u).exp_m1();
    a * a
}

/// Residuals and Jacobian in `(ln σ, ln τc, third)`.
fn echo_model(
    model: EchoModel,
    t: &[f64],
    rho: &[f64],
    p: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let m = t.len();
    let mut r = DVector::zeros(m);
    let mut j = DMatrix::zeros(m, 3);
    let sigma = p[0].exp();
    let tau_c = p[1].exp();
    let third = p[2];
    let Ok(ou) = OuParams::new(sigma, tau_c) else {
        r.fill(f64::INFINITY);
        return (r, j);
    };
    for i in 0..m {
        let gamma = gamma_spin_echo(t[i], &ou).unwrap_or(f64::INFINITY);
        let e = (-gamma).exp();
        let u = t[i] / tau_c;
        // ∂γ/∂ln σ = 2γ; ∂γ/∂ln τc = 2γ − σ²τc·t·g'(u)
        let dg_dls = 2.0 * gamma;
        let dg_dlt = 2.0 * gamma - sigma * sigma * tau_c * t[i] * g_prime(u);
        let (pred, scale) = match model {
            EchoModel::Amplitude => (third * e, third * e),
            EchoModel::Offset => (third + e, e),
        };
        r[i] = pred - rho[i];
        j[(i, 0)] = -scale * dg_dls;
        j[(i, 1)] = -scale * dg_dlt;
        j[(i, 2)] = match model {
            EchoModel::Amplitude => e,
            EchoModel::Offset => 1.0,
        };
    }
    (r, j)
}

/// Structured initial guess: τc from the curvature knee of `−ln ρ`, σ from
/// the late-time slope.
pub fn initial_guess(data: &EchoDataset, model: EchoModel) -> Result<SpinEchoGuess> {
    let p = prepare_spin_echo(data)?;
    let (t, rho) = (&p.t, &p.rho);
    let l: Vec<f64> = rho.iter().map(|&r| -(r.max(1e-12)).ln()).collect();
    let n = t.len();

    // −ln ρ has its largest curvature at t = 2 ln2 · τc.
    let mut knee = None;
    let mut best = f64::NEG_INFINITY;
    for i in 1..n - 1 {
        let d1 = (l[i] - l[i - 1]) / (t[i] - t[i - 1]);
        let d2 = (l[i + 1] - l[i]) / (t[i + 1] - t[i]);
        let curv = 2.0 * (d2 - d1) / (t[i + 1] - t[i - 1]);
        if curv > best {
            best = curv;
            knee = Some(t[i]);
        }
    }
    let t_span = (t[0], t[n - 1]);
    let tau_c = match knee {
        Some(tk) if best > 0.0 => tk / (2.0 * std::f64::consts::LN_2),
        _ => (t_span.0 * t_span.1).sqrt(),
    };

    let tail = (n / 3).max(2);
    let (slope, _) = ols(&t[n - tail..], &l[n - tail..]);
    let floor = 1e-6 / (tau_c * t_span.1);
    let sigma = (slope / tau_c).max(floor).sqrt();

    let ou = OuParams::new(sigma, tau_c)?;
    let e0 = (-gamma_spin_echo(t[0], &ou)?).exp();
    let third = match model {
        EchoModel::Amplitude => (rho[0] / e0).clamp(0.1, 1.5),
        EchoModel::Offset => (rho[0] - e0).clamp(-0.5, 0.5),
    };
    Ok(SpinEchoGuess { sigma, tau_c, third })
}

/// Nonlinear least-squares spin-echo fit. Without a guess a structured
/// initializer plus a small multi-start over τc is used.
pub fn fit_spin_echo(
    data: &EchoDataset,
    guess: Option<SpinEchoGuess>,
    model: EchoModel,
    opts: &FitOptions,
) -> Result<SpinEchoFit> {
    let p = prepare_spin_echo(data)?;
    let starts: Vec<SpinEchoGuess> = match guess {
        Some(g) => {
            if !(g.sigma.is_finite() && g.sigma > 0.0 && g.tau_c.is_finite() && g.tau_c > 0.0) {
                return Err(Error::invalid("guess", "sigma and tau_c must be positive"));
            }
            vec![g]
        }
        None => {
            let g = initial_guess(data, model)?;
            [1.0f64, 0.3, 3.0]
                .iter()
                .map(|&k| SpinEchoGuess {
                    sigma: g.sigma / k.sqrt(),
                    tau_c: g.tau_c * k,
                    third: g.third,
                })
                .collect()
        }
    };

    let lm_opts = lm::LmOptions {
        max_iter: opts.max_iter,
        ..Default::default()
    };
    let mut best: Option<lm::LmOutcome> = None;
    for s in starts {
        let p0 = DVector::from_vec(vec![s.sigma.ln(), s.tau_c.ln(), s.third]);
        let out = lm::minimize(|q| echo_model(model, &p.t, &p.rho, q), p0, &lm_opts);
        let better = match &best {
            None => true,
            Some(b) => out.cost() < b.cost(),
        };
        if better {
            best = Some(out);
        }
    }
    let out = best.expect("at least one start");

    let sigma = out.params[0].exp();
    let tau_c = out.params[1].exp();
    let third = out.params[2];
    let rss = out.residuals.norm_squared();
    let residual_norm = rss.sqrt();
    let residual_rms = (rss / p.t.len() as f64).sqrt();

    let cov = lm::covariance(&out.jacobian, &out.residuals);
    let (se_ls, se_lt, se_third) = match &cov {
        Some(c) => (
            c[(0, 0)].max(0.0).sqrt(),
            c[(1, 1)].max(0.0).sqrt(),
            c[(2, 2)].max(0.0).sqrt(),
        ),
        None => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
    };

    // Decay below 1e-6 over the whole window means σ has run to zero.
    let t_max = p.t[p.t.len() - 1];
    let max_gamma = OuParams::new(sigma, tau_c)
        .and_then(|ou| gamma_spin_echo(t_max, &ou))
        .unwrap_or(0.0);

    let status = if !out.converged {
        FitStatus::MaxIterations
    } else if max_gamma < 1e-6 {
        FitStatus::SigmaAtBoundary
    } else if cov.is_none() {
        FitStatus::SingularCovariance
    } else {
        FitStatus::Converged
    };
    let converged = status == FitStatus::Converged && residual_norm.is_finite();
    if !converged {
        log::warn!("spin-echo fit not converged: {status:?}");
    }

    let third_est = Estimate {
        value: third,
        stderr: se_third,
    };
    Ok(SpinEchoFit {
        model,
        formula: model.formula().to_string(),
        sigma: Estimate {
            value: sigma,
            stderr: sigma * se_ls,
        },
        tau_c: Estimate {
            value: tau_c,
            stderr: tau_c * se_lt,
        },
        amplitude: (model == EchoModel::Amplitude).then_some(third_est),
        offset: (model == EchoModel::Offset).then_some(third_est),
        residual_norm,
        residual_rms,
        iterations: out.iterations,
        converged,
        status,
    })
}

/// Amplitude fit, followed by the offset fit when `with_offset` is set.
pub fn fit_spin_echo_variants(
    data: &EchoDataset,
    guess: Option<SpinEchoGuess>,
    with_offset: bool,
    opts: &FitOptions,
) -> Result<Vec<SpinEchoFit>> {
    let mut fits = vec![fit_spin_echo(data, guess, EchoModel::Amplitude, opts)?];
    if with_offset {
        let g = guess.map(|g| SpinEchoGuess { third: 0.0, ..g });
        fits.push(fit_spin_echo(data, g, EchoModel::Offset, opts)?);
    }
    Ok(fits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Fit {
    pub t2: Estimate,
    pub intercept: Estimate,
    pub residual_norm: f64,
    pub points: usize,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// OLS of `ln ρ = b − t/T2`.
pub fn fit_t2_loglinear(data: &EchoDataset) -> Result<T2Fit> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Dataset(format!("log-linear fit needs at least 2 points, got {n}")));
    }
    if let Some(p) = data.points.iter().find(|p| p.rho.is_nan() || p.rho <= 0.0) {
        return Err(Error::Dataset(format!(
            "rho = {} at t = {} has no logarithm; filter non-positive points first",
            p.rho, p.t
        )));
    }
    let x = data.times();
    let y: Vec<f64> = data.points.iter().map(|p| p.rho.ln()).collect();
    let (slope, intercept) = ols(&x, &y);
    if slope.is_nan() || slope >= 0.0 {
        return Err(Error::Dataset(format!("slope {slope} is not negative; no decay")));
    }
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            let e = b - (intercept + slope * a);
            e * e
        })
        .sum();
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let (se_slope, se_int) = if n > 2 {
        let s2 = rss / (nf - 2.0);
        let se_slope = (s2 / sxx).sqrt();
        let se_int = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
        (se_slope, se_int)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let t2 = -1.0 / slope;
    Ok(T2Fit {
        t2: Estimate {
            value: t2,
            stderr: se_slope / (slope * slope),
        },
        intercept: Estimate {
            value: intercept,
            stderr: se_int,
        },
        residual_norm: rss.sqrt(),
        points: n,
    })
}

/// Removes points with `ρ ≤ 0`, logging each one.
pub fn drop_nonpositive(data: &EchoDataset) -> EchoDataset {
    let mut kept = Vec::with_capacity(data.len());
    for p in &data.points {
        if p.rho > 0.0 {
            kept.push(*p);
        } else {
            log::warn!("dropping point t = {} s with rho = {} before log-linear fit", p.t, p.rho);
        }
    }
    EchoDataset {
        points: kept,
        provenance: data.provenance.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthSequence {
    SpinEcho { times: Vec<f64> },
    CpmgFixedTau { tau: f64, ns: Vec<u32> },
    CpmgFixedN { n: u32, taus: Vec<f64> },
}

impl SynthSequence {
    /// `(n, τ)` per point; a spin echo read at t is `(1, t)`.
    fn pulses(&self) -> Vec<(u32, f64)> {
        match self {
            SynthSequence::SpinEcho { times } => times.iter().map(|&t| (1, t)).collect(),
            SynthSequence::CpmgFixedTau { tau, ns } => ns.iter().map(|&n| (n, *tau)).collect(),
            SynthSequence::CpmgFixedN { n, taus } => taus.iter().map(|&tau| (*n, tau)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForwardModel {
    Analytic,
    MonteCarlo { trials: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub sequence: SynthSequence,
    pub model: ForwardModel,
    pub amplitude: f64,
    /// Relative standard deviation of multiplicative Gaussian noise.
    pub rel_noise: f64,
    pub seed: u64,
}

/// Forward model on a grid with optional multiplicative noise. Times are the
/// echo times `nτ`.
pub fn synth_dataset(ou: &OuParams, spec: &SynthSpec) -> Result<EchoDataset> {
    if !(spec.rel_noise.is_finite() && spec.rel_noise >= 0.0) {
        return Err(Error::invalid("rel_noise", "must be non-negative"));
    }
    let mut noise_rng = trial_rng(spec.seed, u64::MAX);
    let mut points = Vec::new();
    for (i, (n, tau)) in spec.sequence.pulses().into_iter().enumerate() {
        let cpmg = CpmgParams::new(n, tau)?;
        let clean = match spec.model {
            ForwardModel::Analytic => match spec.sequence {
                SynthSequence::SpinEcho { .. } => {
                    spec.amplitude * (-gamma_spin_echo(cpmg.total_time(), ou)?).exp()
                }
                _ => coherence_cpmg(n, tau, ou, spec.amplitude)?,
            },
            ForwardModel::MonteCarlo { trials } => {
                let mut cfg = SimConfig::new(*ou, cpmg, spec.seed.wrapping_add(i as u64 + 1));
                cfg.trials = trials;
                spec.amplitude * mc_cpmg(&cfg)?.magnitude()
            }
        };
        let rho = if spec.rel_noise > 0.0 {
            let z: f64 = noise_rng.sample(StandardNormal);
            clean * (1.0 + spec.rel_noise * z)
        } else {
            clean
        };
        points.push(EchoPoint {
            t: cpmg.total_time(),
            rho,
            raw: None,
        });
    }
    EchoDataset::new(
        points,
        format!(
            "synthetic: sigma={} rad/s, tau_c={} s, model={:?}, rel_noise={}, seed={}",
            ou.sigma, ou.tau_c, spec.model, spec.rel_noise, spec.seed
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoherence::logspace;
    use crate::presets;

    fn nominal_se(noise: f64, seed: u64) -> EchoDataset {
        let spec = SynthSpec {
            sequence: SynthSequence::SpinEcho {
                times: logspace(50e-6, 2e-3, 12),
            },
            model: ForwardModel::Analytic,
            amplitude: 0.9,
            rel_noise: noise,
            seed,
        };
        synth_dataset(&presets::paper_noise(), &spec).unwrap()
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(intensity_to_coherence(0.5, 0.5, 1.0).unwrap(), 1.0);
        assert_eq!(intensity_to_coherence(0.5, 1.0, 1.0).unwrap(), 0.0);
        let v = intensity_to_coherence(0.5, 0.7, 1.0).unwrap();
        assert!((v - 0.7f64.ln() / 0.5f64.ln()).abs() < 1e-15);
        assert!((v - 0.5146).abs() < 1e-4);
    }

    #[test]
    fn intensity_domain_errors() {
        assert!(intensity_to_coherence(0.0, 0.5, 1.0).is_err());
        assert!(intensity_to_coherence(0.5, -1.0, 1.0).is_err());
        assert!(intensity_to_coherence(1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(EchoDataset::from_pairs(&[1.0, 1.0], &[0.5, 0.4], "").is_err());
        assert!(EchoDataset::from_pairs(&[0.0, 1.0], &[0.5, 0.4], "").is_err());
        assert!(EchoDataset::from_pairs(&[1.0, 2.0], &[0.5, 1.3], "").is_err());
        assert!(EchoDataset::from_pairs(&[1.0, 2.0], &[1.2, 0.0], "").is_ok());
    }

    #[test]
    fn csv_layouts_detected() {
        let a = "t_s,rho,note\n1e-4,0.9,x\n2e-4,0.8,y\n";
        let d = EchoDataset::read_csv(a.as_bytes(), "a").unwrap();
        assert_eq!(d.values(), vec![0.9, 0.8]);
        let b = "I_ref,t_s,I_i,I_f\n1.0,1e-4,0.5,0.7\n";
        let d = EchoDataset::read_csv(b.as_bytes(), "b").unwrap();
        assert!((d.points[0].rho - 0.7f64.ln() / 0.5f64.ln()).abs() < 1e-15);
        assert!(d.points[0].raw.is_some());
        assert!(EchoDataset::read_csv("t_s,x\n1,2\n".as_bytes(), "c").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = nominal_se(0.0, 0);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = EchoDataset::read_csv(buf.as_slice(), d.provenance.clone()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn noiseless_round_trip() {
        let d = nominal_se(0.0, 0);
        let fit = fit_spin_echo(&d, None, EchoModel::Amplitude, &FitOptions::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!((fit.sigma.value / 2.3e3 - 1.0).abs() < 1e-6);
        assert!((fit.tau_c.value / 172e-6 - 1.0).abs() < 1e-6);
        assert!((fit.amplitude.unwrap().value - 0.9).abs() < 1e-6);
        assert!(fit.residual_rms < 1e-8);
        assert!(fit.sigma.stderr >= 0.0 && fit.tau_c.stderr >= 0.0);
    }

    #[test]
    fn offset_variant_reported() {
        let d = nominal_se(0.0, 0);
        let fits = fit_spin_echo_variants(&d, None, true, &FitOptions::default()).unwrap();
        assert_eq!(fits.len(), 2);
        assert_eq!(fits[1].model, EchoModel::Offset);
        assert!(fits[1].offset.is_some() && fits[1].amplitude.is_none());
    }

    #[test]
    fn constant_data_is_flagged() {
        let t = logspace(50e-6, 2e-3, 12);
        let d = EchoDataset::from_pairs(&t, &[1.0; 12], "flat").unwrap();
        let fit = fit_spin_echo(&d, None, EchoModel::Amplitude, &FitOptions::default()).unwrap();
        assert!(!fit.converged);
        assert_ne!(fit.status, FitStatus::Converged);
    }

    #[test]
    fn too_few_points_or_narrow_span() {
        let d = EchoDataset::from_pairs(&[1.0, 2.0, 3.0, 4.0], &[0.9; 4], "").unwrap();
        assert!(fit_spin_echo(&d, None, EchoModel::Amplitude, &FitOptions::default()).is_err());
        let d = EchoDataset::from_pairs(&[1.0, 1.5, 2.0, 2.5, 3.0], &[0.9; 5], "").unwrap();
        assert!(fit_spin_echo(&d, None, EchoModel::Amplitude, &FitOptions::default()).is_err());
    }

    #[test]
    fn t2_exact_exponential() {
        let t = [1e-3, 2e-3, 5e-3, 8e-3, 13e-3];
        let rho: Vec<f64> = t.iter().map(|&x: &f64| (-x / 10e-3).exp()).collect();
        let d = EchoDataset::from_pairs(&t, &rho, "").unwrap();
        let fit = fit_t2_loglinear(&d).unwrap();
        assert!((fit.t2.value / 10e-3 - 1.0).abs() < 1e-10);
        assert!(fit.intercept.value.abs() < 1e-12);
    }

    #[test]
    fn t2_two_points() {
        let d = EchoDataset::from_pairs(&[1.0, 3.0], &[0.5, 0.25], "").unwrap();
        let fit = fit_t2_loglinear(&d).unwrap();
        assert!((fit.t2.value - 2.0 / 2f64.ln()).abs() < 1e-12);
        assert!(fit.residual_norm < 1e-15);
        assert!(fit.t2.stderr.is_infinite());
    }

    #[test]
    fn t2_errors() {
        let d = EchoDataset::from_pairs(&[1.0, 2.0, 3.0], &[0.5, 0.0, 0.2], "").unwrap();
        assert!(fit_t2_loglinear(&d).is_err());
        let d = EchoDataset::from_pairs(&[1.0, 2.0, 3.0], &[0.5, 0.6, 0.7], "").unwrap();
        assert!(fit_t2_loglinear(&d).is_err());
        let kept = drop_nonpositive(&EchoDataset::from_pairs(&[1.0, 2.0, 3.0], &[0.5, 0.0, 0.2], "").unwrap());
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn synth_zero_noise_matches_model() {
        let ou = presets::paper_noise();
        let d = nominal_se(0.0, 9);
        for p in &d.points {
            let want = 0.9 * (-gamma_spin_echo(p.t, &ou).unwrap()).exp();
            assert_eq!(p.rho, want);
        }
    }

    #[test]
    fn synth_is_seed_reproducible() {
        assert_eq!(nominal_se(0.02, 5), nominal_se(0.02, 5));
        assert_ne!(nominal_se(0.02, 5), nominal_se(0.02, 6));
    }
}
