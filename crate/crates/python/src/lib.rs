//! Python bindings. Angles are in degrees, times in seconds, noise
//! amplitudes in rad/s, fields in tesla. Structured results come back as
//! plain dicts.

use cpmg_zefoz::crystal::{self, CrystalConfig, FieldConfig, GyroTensor};
use cpmg_zefoz::decoherence::{self, CpmgParams};
use cpmg_zefoz::fitting::{self, EchoDataset, EchoModel, FitOptions};
use cpmg_zefoz::ou_sim::{self, SimConfig};
use cpmg_zefoz::zefoz::{self, BroadeningMethod, ZefozOptions};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: cpmg_zefoz::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn frame(crystal: &CrystalConfig, site: u8) -> PyResult<crystal::SiteFrame> {
    crystal
        .site(site)
        .cloned()
        .ok_or_else(|| PyValueError::new_err(format!("no site {site}")))
}

fn gyro(gamma: Option<(f64, f64, f64)>) -> PyResult<GyroTensor> {
    match gamma {
        Some((x, y, z)) => GyroTensor::new(x, y, z).map_err(err),
        None => Ok(GyroTensor::tm_yag()),
    }
}

/// Ornstein-Uhlenbeck frequency noise.
#[pyclass(frozen, module = "pycpmgz")]
pub struct OuParams {
    inner: decoherence::OuParams,
}

#[pymethods]
impl OuParams {
    #[new]
    fn new(sigma: f64, tau_c: f64) -> PyResult<Self> {
        Ok(Self {
            inner: decoherence::OuParams::new(sigma, tau_c).map_err(err)?,
        })
    }

    /// The published noise parameters.
    #[staticmethod]
    fn paper() -> Self {
        Self {
            inner: cpmg_zefoz::presets::paper_noise(),
        }
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn tau_c(&self) -> f64 {
        self.inner.tau_c
    }

    fn gamma_cpmg(&self, n: u32, tau: f64) -> PyResult<f64> {
        decoherence::gamma_cpmg(n, tau, &self.inner).map_err(err)
    }

    #[pyo3(signature = (n, tau, rho0 = 1.0))]
    fn coherence_cpmg(&self, n: u32, tau: f64, rho0: f64) -> PyResult<f64> {
        decoherence::coherence_cpmg(n, tau, &self.inner, rho0).map_err(err)
    }

    fn gamma_spin_echo(&self, t: f64) -> PyResult<f64> {
        decoherence::gamma_spin_echo(t, &self.inner).map_err(err)
    }

    fn t2_cpmg(&self, tau: f64) -> PyResult<f64> {
        decoherence::t2_cpmg(tau, &self.inner).map_err(err)
    }

    fn t2_spin_echo(&self) -> PyResult<f64> {
        decoherence::t2_spin_echo(&self.inner).map_err(err)
    }

    /// Monte Carlo estimate of the CPMG coherence.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (n, tau, trials = 100_000, seed = 0, dt = None, static_spread = 0.0))]
    fn mc_cpmg<'py>(
        &self,
        py: Python<'py>,
        n: u32,
        tau: f64,
        trials: usize,
        seed: u64,
        dt: Option<f64>,
        static_spread: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cpmg = CpmgParams::new(n, tau).map_err(err)?;
        let mut cfg = SimConfig::new(self.inner, cpmg, seed);
        cfg.trials = trials;
        cfg.static_detuning_spread = static_spread;
        if let Some(dt) = dt {
            cfg.dt = dt;
        }
        let est = py.detach(|| ou_sim::mc_cpmg(&cfg)).map_err(err)?;
        to_py(py, &est)
    }

    fn __repr__(&self) -> String {
        format!("OuParams(sigma={}, tau_c={})", self.inner.sigma, self.inner.tau_c)
    }
}

/// Splitting (Hz/T) and Rabi frequency (Hz per tesla of rf) at one orientation.
#[pyfunction]
#[pyo3(signature = (theta_deg, phi_deg, site = 4, gamma = None))]
fn site_response<'py>(
    py: Python<'py>,
    theta_deg: f64,
    phi_deg: f64,
    site: u8,
    gamma: Option<(f64, f64, f64)>,
) -> PyResult<Bound<'py, PyAny>> {
    let f = frame(&CrystalConfig::default(), site)?;
    let field = FieldConfig::unit(theta_deg.to_radians(), phi_deg.to_radians());
    let r = crystal::site_response(&gyro(gamma)?, &f, &field).map_err(err)?;
    to_py(py, &r)
}

/// Minimum of the splitting over θ at fixed φ.
#[pyfunction]
#[pyo3(signature = (phi_deg = 45.0, site = 4, theta_min_deg = 0.0, theta_max_deg = 180.0, gamma = None))]
fn find_partial_zefoz<'py>(
    py: Python<'py>,
    phi_deg: f64,
    site: u8,
    theta_min_deg: f64,
    theta_max_deg: f64,
    gamma: Option<(f64, f64, f64)>,
) -> PyResult<Bound<'py, PyAny>> {
    let f = frame(&CrystalConfig::default(), site)?;
    let r = zefoz::find_partial_zefoz(
        &gyro(gamma)?,
        &f,
        phi_deg.to_radians(),
        (theta_min_deg.to_radians(), theta_max_deg.to_radians()),
        &ZefozOptions::default(),
    )
    .map_err(err)?;
    to_py(py, &r)
}

/// Inhomogeneous width (Hz FWHM) for a Gaussian misalignment of `sigma_deg`.
#[pyfunction]
#[pyo3(signature = (
    sigma_deg, b = 0.985, theta_deg = 54.8, phi_deg = 45.0, method = "cone",
    samples = 100_000, seed = 0, site = 4
))]
#[allow(clippy::too_many_arguments)]
fn broadening(
    py: Python<'_>,
    sigma_deg: f64,
    b: f64,
    theta_deg: f64,
    phi_deg: f64,
    method: &str,
    samples: usize,
    seed: u64,
    site: u8,
) -> PyResult<f64> {
    let method = match method {
        "cone" => BroadeningMethod::ConeSampling,
        "quadratic" => BroadeningMethod::QuadraticExpansion,
        other => return Err(PyValueError::new_err(format!("method must be 'cone' or 'quadratic', got {other:?}"))),
    };
    let f = frame(&CrystalConfig::default(), site)?;
    let field = FieldConfig::new(b, theta_deg.to_radians(), phi_deg.to_radians(), 1e-3).map_err(err)?;
    let est = py
        .detach(|| {
            zefoz::broadening_estimate(
                &GyroTensor::tm_yag(),
                &f,
                &field,
                sigma_deg.to_radians(),
                method,
                samples,
                seed,
            )
        })
        .map_err(err)?;
    Ok(est.gamma_inh)
}

/// Hole-burning lines merged within `tol` Hz.
#[pyfunction]
#[pyo3(signature = (delta_g, delta_e, tol = 1.0))]
fn holeburn_positions<'py>(py: Python<'py>, delta_g: f64, delta_e: f64, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let features = crystal::holeburn_positions(delta_g, delta_e).map_err(err)?;
    to_py(py, &crystal::merge_coincident(&features, tol))
}

#[pyfunction]
fn intensity_to_coherence(i_i: f64, i_f: f64, i_ref: f64) -> PyResult<f64> {
    fitting::intensity_to_coherence(i_i, i_f, i_ref).map_err(err)
}

/// Spin-echo fit; returns one record, or two with `offset=True`.
#[pyfunction]
#[pyo3(signature = (t, rho, offset = false))]
fn fit_spin_echo<'py>(py: Python<'py>, t: Vec<f64>, rho: Vec<f64>, offset: bool) -> PyResult<Bound<'py, PyAny>> {
    let data = EchoDataset::from_pairs(&t, &rho, "python").map_err(err)?;
    let fits = fitting::fit_spin_echo_variants(&data, None, offset, &FitOptions::default()).map_err(err)?;
    to_py(py, &fits)
}

#[pyfunction]
fn fit_t2_loglinear<'py>(py: Python<'py>, t: Vec<f64>, rho: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let data = EchoDataset::from_pairs(&t, &rho, "python").map_err(err)?;
    let fit = fitting::fit_t2_loglinear(&fitting::drop_nonpositive(&data)).map_err(err)?;
    to_py(py, &fit)
}

/// Noiseless or noisy spin-echo data `A·exp(−γ_se)` at the given times.
#[pyfunction]
#[pyo3(signature = (ou, times, amplitude = 1.0, rel_noise = 0.0, seed = 0))]
fn synth_spin_echo(
    ou: &Bound<'_, OuParams>,
    times: Vec<f64>,
    amplitude: f64,
    rel_noise: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let spec = fitting::SynthSpec {
        sequence: fitting::SynthSequence::SpinEcho { times },
        model: fitting::ForwardModel::Analytic,
        amplitude,
        rel_noise,
        seed,
    };
    let d = fitting::synth_dataset(&ou.get().inner, &spec).map_err(err)?;
    Ok((d.times(), d.values()))
}

/// The model variant names accepted by the spin-echo fit.
#[pyfunction]
fn echo_models() -> Vec<&'static str> {
    [EchoModel::Amplitude, EchoModel::Offset]
        .iter()
        .map(|m| m.formula())
        .collect()
}

#[pymodule]
fn pycpmgz(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<OuParams>()?;
    m.add_function(wrap_pyfunction!(site_response, m)?)?;
    m.add_function(wrap_pyfunction!(find_partial_zefoz, m)?)?;
    m.add_function(wrap_pyfunction!(broadening, m)?)?;
    m.add_function(wrap_pyfunction!(holeburn_positions, m)?)?;
    m.add_function(wrap_pyfunction!(intensity_to_coherence, m)?)?;
    m.add_function(wrap_pyfunction!(fit_spin_echo, m)?)?;
    m.add_function(wrap_pyfunction!(fit_t2_loglinear, m)?)?;
    m.add_function(wrap_pyfunction!(synth_spin_echo, m)?)?;
    m.add_function(wrap_pyfunction!(echo_models, m)?)?;
    Ok(())
}
