//! Monte Carlo and quadrature cross-checks for the closed-form decay.
//!
//! [`mc_cpmg`] samples Ornstein-Uhlenbeck paths with the exact one-step
//! update and averages `exp(iφ)` over trials. [`numeric_gamma`] evaluates
//! the variance double integral directly. Neither touches the closed form in
//! [`crate::decoherence`]; they exist to be compared against it.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoherence::{sign_function, CpmgParams, OuParams};
use crate::error::{Error, Result};

/// Stationary OU path sampled every `dt`, `steps + 1` values.
///
/// The first value is drawn from the stationary law N(0, σ²); each update
/// is the exact transition `ζ' = a ζ + σ √(1 − a²) ξ`, `a = exp(−dt/τ_c)`.
pub fn ou_path<R: Rng + ?Sized>(ou: &OuParams, dt: f64, steps: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    let a = (-dt / ou.tau_c).exp();
    let kick = ou.sigma * (-(-2.0 * dt / ou.tau_c).exp_m1()).sqrt();
    let mut path = Vec::with_capacity(steps + 1);
    let mut z = ou.sigma * rng.sample::<f64, _>(StandardNormal);
    path.push(z);
    for _ in 0..steps {
        z = a * z + kick * rng.sample::<f64, _>(StandardNormal);
        path.push(z);
    }
    Ok(path)
}

/// Per-trial generator: ChaCha8 keyed by `seed`, stream `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trials: usize,
    /// Upper bound on the integration step, s. The step actually used
    /// divides τ/2 exactly.
    pub dt: f64,
    pub seed: u64,
    pub ou: OuParams,
    pub cpmg: CpmgParams,
    /// Standard deviation of the per-trial static detuning, rad/s.
    pub static_detuning_spread: f64,
}

impl SimConfig {
    /// Defaults: 10⁵ trials, `dt = min(τ/50, τ_c/200)`, no static spread.
    pub fn new(ou: OuParams, cpmg: CpmgParams, seed: u64) -> Self {
        Self {
            trials: 100_000,
            dt: default_dt(&ou, &cpmg),
            seed,
            ou,
            cpmg,
            static_detuning_spread: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 100 {
            return Err(Error::invalid("trials", format!("need >= 100, got {}", self.trials)));
        }
        let bound = (self.cpmg.tau / 20.0).min(self.ou.tau_c / 100.0);
        if !(self.dt > 0.0 && self.dt <= bound * (1.0 + 1e-12)) {
            return Err(Error::invalid(
                "dt",
                format!("need 0 < dt <= min(tau/20, tau_c/100) = {bound:e} s, got {:e} s", self.dt),
            ));
        }
        if !(self.static_detuning_spread.is_finite() && self.static_detuning_spread >= 0.0) {
            return Err(Error::invalid("static_detuning_spread", "must be >= 0"));
        }
        OuParams::new(self.ou.sigma, self.ou.tau_c)?;
        CpmgParams::new(self.cpmg.n, self.cpmg.tau)?;
        Ok(())
    }

    /// Cells per half interval τ/2.
    pub fn cells_per_half(&self) -> usize {
        ((self.cpmg.tau / 2.0) / self.dt).ceil().max(1.0) as usize
    }

    pub fn effective_dt(&self) -> f64 {
        self.cpmg.tau / (2.0 * self.cells_per_half() as f64)
    }
}

pub fn default_dt(ou: &OuParams, cpmg: &CpmgParams) -> f64 {
    (cpmg.tau / 50.0).min(ou.tau_c / 200.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean_re: f64,
    pub mean_im: f64,
    /// Standard error of `mean_re`.
    pub stderr: f64,
    /// Standard error of `mean_im`.
    pub stderr_im: f64,
    pub trials: usize,
    pub seed: u64,
    /// Step actually used, s.
    pub dt: f64,
    /// Wall time, s. Not serialised so records stay reproducible.
    #[serde(skip)]
    pub elapsed_s: f64,
}

impl McEstimate {
    pub fn magnitude(&self) -> f64 {
        self.mean_re.hypot(self.mean_im)
    }
}

/// Ensemble average of `exp(iφ)` with `φ = Σ s(t_k) (ζ(t_k) + δ̄) dt` over
/// cell midpoints. Pulse instants fall on cell edges.
///
/// Each trial draws from its own stream, and the reduction runs in trial
/// order, so the result is bit-identical for any thread count.
pub fn mc_cpmg(cfg: &SimConfig) -> Result<McEstimate> {
    cfg.validate()?;
    let start = Instant::now();
    let m = cfg.cells_per_half();
    let dt = cfg.effective_dt();
    let cells = 2 * m * cfg.cpmg.n as usize;
    let signs: Vec<f64> = (0..cells)
        .map(|k| sign_function(&cfg.cpmg, (k as f64 + 0.5) * dt))
        .collect::<Result<_>>()?;
    // Integer sum of the toggling function; zero for any CPMG sequence.
    let sign_sum: i64 = signs.iter().map(|&s| s as i64).sum();

    let ou = cfg.ou;
    let a = (-dt / ou.tau_c).exp();
    let kick = ou.sigma * (-(-2.0 * dt / ou.tau_c).exp_m1()).sqrt();
    let spread = cfg.static_detuning_spread;

    let phases: Vec<(f64, f64)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let detuning = spread * rng.sample::<f64, _>(StandardNormal);
            let mut z = ou.sigma * rng.sample::<f64, _>(StandardNormal);
            let mut acc = signs[0] * z;
            for &s in &signs[1..] {
                z = a * z + kick * rng.sample::<f64, _>(StandardNormal);
                acc += s * z;
            }
            let phase = dt * acc + detuning * dt * sign_sum as f64;
            let (im, re) = phase.sin_cos();
            (re, im)
        })
        .collect();

    let n = phases.len() as f64;
    let (sum_re, sum_im) = phases
        .iter()
        .fold((0.0, 0.0), |(r, i), &(re, im)| (r + re, i + im));
    let (mean_re, mean_im) = (sum_re / n, sum_im / n);
    let (ss_re, ss_im) = phases.iter().fold((0.0, 0.0), |(r, i), &(re, im)| {
        (r + (re - mean_re).powi(2), i + (im - mean_im).powi(2))
    });
    Ok(McEstimate {
        mean_re,
        mean_im,
        stderr: (ss_re / (n - 1.0)).sqrt() / n.sqrt(),
        stderr_im: (ss_im / (n - 1.0)).sqrt() / n.sqrt(),
        trials: cfg.trials,
        seed: cfg.seed,
        dt,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Gauss-Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// γ(n, τ) from `σ² ∫₀^{nτ} s(t) ∫₀^t s(t') e^{−(t−t')/τ_c} dt' dt`.
///
/// The inner integral is done in closed form segment by segment (s is
/// piecewise constant), the outer one by Gauss-Legendre with `quad_points`
/// nodes on panels no longer than τ_c.
pub fn numeric_gamma(n: u32, tau: f64, ou: &OuParams, quad_points: usize) -> Result<f64> {
    let seq = CpmgParams::new(n, tau)?;
    if quad_points < 8 {
        return Err(Error::invalid("quad_points", format!("need >= 8, got {quad_points}")));
    }
    let tc = ou.tau_c;
    let mut edges = vec![0.0];
    edges.extend(seq.pulse_times());
    edges.push(seq.total_time());
    let segs: Vec<(f64, f64, f64)> = edges
        .windows(2)
        .map(|w| Ok((w[0], w[1], sign_function(&seq, 0.5 * (w[0] + w[1]))?)))
        .collect::<Result<_>>()?;

    // ∫₀^t s(t') e^{−(t−t')/τ_c} dt' for t inside segment `cur`.
    let inner = |cur: usize, t: f64| -> f64 {
        let mut h = 0.0;
        for &(b, e, s) in &segs[..cur] {
            h += s * tc * ((-(t - e) / tc).exp() - (-(t - b) / tc).exp());
        }
        let (b, _, s) = segs[cur];
        h - s * tc * (-(t - b) / tc).exp_m1()
    };

    let (nodes, weights) = gauss_legendre(quad_points);
    let mut total = 0.0;
    for (cur, &(b, e, s)) in segs.iter().enumerate() {
        let panels = ((e - b) / tc).ceil().max(1.0) as usize;
        let width = (e - b) / panels as f64;
        for p in 0..panels {
            let lo = b + p as f64 * width;
            let half = 0.5 * width;
            let mid = lo + half;
            let panel: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * inner(cur, mid + half * x))
                .sum();
            total += s * half * panel;
        }
    }
    Ok(ou.sigma * ou.sigma * total)
}
