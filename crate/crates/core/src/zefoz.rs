//! Partial-ZEFOZ orientation search and misorientation broadening.
//!
//! With no zero-field splitting the gradient of the splitting never vanishes
//! in all three field coordinates. What can be had is a minimum of the
//! per-tesla splitting along θ at a chosen azimuth, which makes the line
//! first-order insensitive to tilts in that one direction.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crystal::{
    field_direction, local_components, rf_direction, site_response, splitting, FieldConfig,
    GyroTensor, SiteFrame, Vec3,
};
use crate::error::{Error, Result};

/// Gradient of the splitting with respect to the crystal-frame field, Hz/T.
///
/// Local component i is `γ_i² B_i / Δ`; the result is rotated back into the
/// crystal frame.
pub fn grad_delta(g: &GyroTensor, frame: &SiteFrame, b: &Vec3) -> Result<Vec3> {
    let local = local_components(frame, b);
    let delta = splitting(g, &local);
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::ZeroField);
    }
    let gamma = g.diagonal();
    let grad_local = gamma.component_mul(&gamma).component_mul(&local) / delta;
    Ok(frame.to_crystal(&grad_local))
}

/// Crystal-frame Hessian of the splitting, Hz/T².
pub fn hessian_delta(g: &GyroTensor, frame: &SiteFrame, b: &Vec3) -> Result<Matrix3<f64>> {
    let rot = frame.to_local_matrix();
    let gamma = g.diagonal();
    let metric = rot.transpose() * Matrix3::from_diagonal(&gamma.component_mul(&gamma)) * rot;
    let mb = metric * b;
    let delta = b.dot(&mb).sqrt();
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::ZeroField);
    }
    Ok(metric / delta - mb * mb.transpose() / delta.powi(3))
}

/// Unit vectors ∂b̂/∂θ and ∂b̂/(sin θ ∂φ).
pub fn tangent_basis(theta: f64, phi: f64) -> (Vec3, Vec3) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (Vec3::new(ct * cp, ct * sp, -st), rf_direction(phi))
}

/// Second-order expansion of Δ_B (Hz/T) on the unit sphere around a
/// direction, in orthonormal tangent coordinates (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentExpansion {
    pub value: f64,
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

/// Expansion along the θ̂ and φ̂ tangent directions using geodesic
/// coordinates, so `H_ij = e_iᵀ ∇²Δ e_j − Δ δ_ij`.
pub fn tangent_expansion(
    g: &GyroTensor,
    frame: &SiteFrame,
    theta: f64,
    phi: f64,
) -> Result<TangentExpansion> {
    let b = field_direction(theta, phi);
    let value = splitting(g, &local_components(frame, &b));
    let grad = grad_delta(g, frame, &b)?;
    let hess = hessian_delta(g, frame, &b)?;
    let (e1, e2) = tangent_basis(theta, phi);
    let e = [e1, e2];
    let mut h = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            h[i][j] = e[i].dot(&(hess * e[j])) - if i == j { value } else { 0.0 };
        }
    }
    Ok(TangentExpansion {
        value,
        gradient: [grad.dot(&e1), grad.dot(&e2)],
        hessian: h,
    })
}

/// ∂Δ_B/∂θ and ∂Δ_B/∂φ in Hz/T per radian.
pub fn angular_gradient(g: &GyroTensor, frame: &SiteFrame, theta: f64, phi: f64) -> Result<(f64, f64)> {
    let grad = grad_delta(g, frame, &field_direction(theta, phi))?;
    let (e_theta, e_phi) = tangent_basis(theta, phi);
    Ok((grad.dot(&e_theta), theta.sin() * grad.dot(&e_phi)))
}

fn delta_b(g: &GyroTensor, frame: &SiteFrame, theta: f64, phi: f64) -> f64 {
    splitting(g, &local_components(frame, &field_direction(theta, phi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZefozStatus {
    Converged,
    /// Interior minimum found but |∂Δ_B/∂θ| exceeds the tolerance.
    GradientAboveTolerance,
    /// The smallest grid value sits on the bracket edge.
    NoInteriorMinimum,
    /// Δ_B is constant over the bracket (e.g. an isotropic tensor).
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZefozOptions {
    /// Coarse scan step, radians.
    pub grid_step: f64,
    /// Golden-section stopping width, radians.
    pub angle_tol: f64,
    /// Bound on |∂Δ_B/∂θ| at the optimum, Hz/T per radian.
    pub grad_tol: f64,
}

impl Default for ZefozOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.5f64.to_radians(),
            angle_tol: 0.01f64.to_radians(),
            // 1 kHz/T per mrad.
            grad_tol: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZefozResult {
    pub theta_star: f64,
    pub phi_star: f64,
    /// Hz/T.
    pub delta_per_tesla_at_min: f64,
    /// Hz/T per radian.
    pub grad_theta: f64,
    /// Hz/T per radian. Not driven to zero: only θ is optimised.
    pub grad_phi: f64,
    pub converged: bool,
    pub status: ZefozStatus,
}

/// Minimises Δ_B(θ, φ_fixed) over `theta_bracket` by a coarse scan followed
/// by golden-section refinement around the best grid node.
pub fn find_partial_zefoz(
    g: &GyroTensor,
    frame: &SiteFrame,
    phi_fixed: f64,
    theta_bracket: (f64, f64),
    opts: &ZefozOptions,
) -> Result<ZefozResult> {
    let (lo, hi) = theta_bracket;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::invalid("theta bracket", format!("need lo < hi, got ({lo}, {hi})")));
    }
    if !(opts.grid_step > 0.0 && opts.angle_tol > 0.0 && opts.grad_tol > 0.0) {
        return Err(Error::invalid("zefoz options", "step and tolerances must be > 0"));
    }
    let f = |t: f64| delta_b(g, frame, t, phi_fixed);
    let n = ((hi - lo) / opts.grid_step).ceil().max(2.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let (k, &vmin) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid has at least three nodes");
    let vmax = vals.iter().cloned().fold(f64::MIN, f64::max);

    let finish = |theta: f64, status: ZefozStatus| -> Result<ZefozResult> {
        let (gt, gp) = angular_gradient(g, frame, theta, phi_fixed)?;
        let status = match status {
            ZefozStatus::Converged if gt.abs() >= opts.grad_tol => ZefozStatus::GradientAboveTolerance,
            s => s,
        };
        Ok(ZefozResult {
            theta_star: theta,
            phi_star: phi_fixed,
            delta_per_tesla_at_min: f(theta),
            grad_theta: gt,
            grad_phi: gp,
            converged: status == ZefozStatus::Converged,
            status,
        })
    };

    if vmax - vmin <= 1e-12 * vmax.abs() {
        return finish(grid[k], ZefozStatus::Degenerate);
    }
    if k == 0 || k == n {
        return finish(grid[k], ZefozStatus::NoInteriorMinimum);
    }

    let theta = golden_section(f, grid[k - 1], grid[k + 1], opts.angle_tol);
    finish(theta, ZefozStatus::Converged)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [(c, fc), (d, fd), (mid, f(mid))]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(t, _)| t)
        .unwrap_or(mid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BroadeningMethod {
    /// Histogram FWHM of Δ over Gaussian-weighted directions in a 3σ cone.
    ConeSampling,
    /// Gaussian-equivalent FWHM of the second-order tangent expansion.
    QuadraticExpansion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BroadeningEstimate {
    /// FWHM, Hz.
    pub gamma_inh: f64,
    pub method: BroadeningMethod,
    /// Radians.
    pub angular_sigma: f64,
    pub sample_count: usize,
    pub seed: u64,
}

const BATCH: usize = 4096;
const HIST_BINS: usize = 256;

/// Inhomogeneous width produced by a Gaussian spread of field directions.
///
/// `angular_sigma` is the per-axis standard deviation of the tangent-plane
/// misalignment. The sampled estimate is reproducible for a given seed and
/// independent of the rayon pool size: each batch of samples owns its own
/// ChaCha stream.
pub fn broadening_estimate(
    g: &GyroTensor,
    frame: &SiteFrame,
    field: &FieldConfig,
    angular_sigma: f64,
    method: BroadeningMethod,
    samples: usize,
    seed: u64,
) -> Result<BroadeningEstimate> {
    if !(angular_sigma.is_finite() && angular_sigma >= 0.0) {
        return Err(Error::invalid("angular_sigma", format!("must be >= 0, got {angular_sigma}")));
    }
    if samples == 0 {
        return Err(Error::invalid("samples", "must be > 0"));
    }
    if field.b_mag <= 0.0 {
        return Err(Error::ZeroField);
    }
    let estimate = |gamma_inh| BroadeningEstimate {
        gamma_inh,
        method,
        angular_sigma,
        sample_count: if method == BroadeningMethod::ConeSampling { samples } else { 0 },
        seed,
    };
    if angular_sigma == 0.0 {
        return Ok(estimate(0.0));
    }
    let width = match method {
        BroadeningMethod::QuadraticExpansion => {
            let ex = tangent_expansion(g, frame, field.theta, field.phi)?;
            let s2 = angular_sigma * angular_sigma;
            let grad2 = ex.gradient[0].powi(2) + ex.gradient[1].powi(2);
            let h = ex.hessian;
            let tr_h2 = h[0][0].powi(2) + 2.0 * h[0][1].powi(2) + h[1][1].powi(2);
            // Var(gᵀw + ½wᵀHw) for w ~ N(0, σ²I).
            let var = s2 * grad2 + 0.5 * s2 * s2 * tr_h2;
            fwhm_factor() * var.sqrt() * field.b_mag
        }
        BroadeningMethod::ConeSampling => {
            let values = sample_cone_splittings(g, frame, field, angular_sigma, samples, seed);
            histogram_fwhm(&values)
        }
    };
    Ok(estimate(width))
}

fn fwhm_factor() -> f64 {
    2.0 * (2.0 * 2f64.ln()).sqrt()
}

/// Splittings (Hz) for `samples` directions drawn around the field axis.
pub fn sample_cone_splittings(
    g: &GyroTensor,
    frame: &SiteFrame,
    field: &FieldConfig,
    angular_sigma: f64,
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    let b_hat = field.b_hat();
    let (e1, e2) = tangent_basis(field.theta, field.phi);
    let cone = 3.0 * angular_sigma;
    let batches = samples.div_ceil(BATCH);
    let per_batch: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|bi| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(bi as u64);
            let count = BATCH.min(samples - bi * BATCH);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let u: f64 = rng.sample::<f64, _>(StandardNormal) * angular_sigma;
                let v: f64 = rng.sample::<f64, _>(StandardNormal) * angular_sigma;
                let alpha = u.hypot(v);
                if alpha > cone {
                    continue;
                }
                let dir = if alpha > 0.0 {
                    b_hat * alpha.cos() + (e1 * u + e2 * v) * (alpha.sin() / alpha)
                } else {
                    b_hat
                };
                out.push(splitting(g, &local_components(frame, &dir)) * field.b_mag);
            }
            out
        })
        .collect();
    per_batch.into_iter().flatten().collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// FWHM of a sample histogram: 256 bins over the central 99% of the data,
/// lightly smoothed, half-maximum crossings interpolated linearly.
pub fn histogram_fwhm(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile(&sorted, 0.005);
    let hi = quantile(&sorted, 0.995);
    let scale = sorted.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if hi - lo <= 1e-12 * scale {
        return 0.0;
    }
    let width = (hi - lo) / HIST_BINS as f64;
    let mut counts = vec![0.0f64; HIST_BINS];
    for &v in &sorted {
        if v < lo || v > hi {
            continue;
        }
        let k = (((v - lo) / width) as usize).min(HIST_BINS - 1);
        counts[k] += 1.0;
    }
    let smooth: Vec<f64> = (0..HIST_BINS)
        .map(|k| {
            let a = counts[k.saturating_sub(1)];
            let c = counts[(k + 1).min(HIST_BINS - 1)];
            0.25 * a + 0.5 * counts[k] + 0.25 * c
        })
        .collect();
    let (peak, &pmax) = smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty histogram");
    let half = 0.5 * pmax;
    let center = |k: f64| lo + (k + 0.5) * width;
    let mut left = center(0.0) - 0.5 * width;
    for k in (0..peak).rev() {
        if smooth[k] < half {
            let t = (half - smooth[k]) / (smooth[k + 1] - smooth[k]);
            left = center(k as f64 + t);
            break;
        }
    }
    let mut right = center(HIST_BINS as f64 - 1.0) + 0.5 * width;
    for k in peak + 1..HIST_BINS {
        if smooth[k] < half {
            let t = (smooth[k - 1] - half) / (smooth[k - 1] - smooth[k]);
            right = center(k as f64 - 1.0 + t);
            break;
        }
    }
    right - left
}

/// Partitions sites by equal (Δ, Ω) within relative 1e-9, in table order.
pub fn site_degeneracy_groups(
    g: &GyroTensor,
    sites: &[SiteFrame],
    field: &FieldConfig,
) -> Result<Vec<Vec<u8>>> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()) + 1e-9;
    let mut groups: Vec<(f64, f64, Vec<u8>)> = Vec::new();
    for frame in sites {
        let r = site_response(g, frame, field)?;
        match groups
            .iter_mut()
            .find(|(d, o, _)| close(*d, r.delta_per_tesla) && close(*o, r.rabi_per_tesla))
        {
            Some((_, _, ids)) => ids.push(frame.site_id),
            None => groups.push((r.delta_per_tesla, r.rabi_per_tesla, vec![frame.site_id])),
        }
    }
    Ok(groups.into_iter().map(|(_, _, ids)| ids).collect())
}
