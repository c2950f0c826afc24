use std::path::PathBuf;

use clap::{Args, ValueEnum};
use cpmg_zefoz::crystal::{
    holeburn_positions, linspace, merge_coincident, orientation_map, write_maps_csv, SiteFrame,
};
use cpmg_zefoz::decoherence::{gamma_cpmg, logspace, t2_cpmg, t2_cpmg_small_tau, CpmgParams};
use cpmg_zefoz::fitting::{
    drop_nonpositive, fit_spin_echo_variants, fit_t2_loglinear, EchoDataset, FitOptions,
    SpinEchoGuess,
};
use cpmg_zefoz::ou_sim::{mc_cpmg, SimConfig};
use cpmg_zefoz::units::{parse_angle, parse_frequency, parse_time};
use cpmg_zefoz::zefoz::{broadening_estimate, find_partial_zefoz, BroadeningMethod, ZefozOptions};
use cpmg_zefoz::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::CliError;

/// A command's data file plus the parameters that produced it.
pub struct Artifact {
    pub body: Vec<u8>,
    pub parameters: Value,
    /// Set when a numerical stage did not converge; the data are still written.
    pub not_converged: Option<String>,
}

fn arg<T>(field: &'static str, s: &str, parse: impl Fn(&str) -> Result<T, Error>) -> Result<T, CliError> {
    parse(s).map_err(|e| CliError::Config(format!("{field}: {e}")))
}

fn list<T>(field: &'static str, s: &str, parse: impl Fn(&str) -> Result<T, Error>) -> Result<Vec<T>, CliError> {
    s.split(',').map(|p| arg(field, p, &parse)).collect()
}

fn hz(s: &str) -> Result<f64, Error> {
    parse_frequency(s).map(|f| f.as_hz())
}

fn site(r: &Resolved, id: u8) -> Result<&SiteFrame, CliError> {
    r.crystal
        .site(id)
        .ok_or_else(|| CliError::Config(format!("--site: no site {id} in the site table")))
}

fn json_body<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut body = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    body.push(b'\n');
    Ok(body)
}

fn csv_body(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(Error::from)?;
    for r in rows {
        w.write_record(r).map_err(Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Other(e.to_string()))
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Comma-separated site ids, or `all`.
    #[arg(long, default_value = "4")]
    pub sites: String,
    #[arg(long = "theta-step", default_value = "1 deg")]
    pub theta_step: String,
    #[arg(long = "phi-step", default_value = "1 deg")]
    pub phi_step: String,
}

pub fn map(r: &Resolved, a: &MapArgs) -> Result<Artifact, CliError> {
    let ids: Vec<u8> = if a.sites == "all" {
        r.crystal.sites.iter().map(|s| s.site_id).collect()
    } else {
        a.sites
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("--sites: cannot parse {s:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    let dt = arg("--theta-step", &a.theta_step, parse_angle)?;
    let dp = arg("--phi-step", &a.phi_step, parse_angle)?;
    if !(dt > 0.0 && dp > 0.0) {
        return Err(CliError::Config("--theta-step/--phi-step: must be > 0".into()));
    }
    let nt = (std::f64::consts::PI / dt).round() as usize + 1;
    let np = (std::f64::consts::TAU / dp).round() as usize;
    let thetas = linspace(0.0, std::f64::consts::PI, nt);
    let phis: Vec<f64> = (0..np).map(|i| i as f64 * std::f64::consts::TAU / np as f64).collect();
    let maps = ids
        .iter()
        .map(|&id| orientation_map(&r.crystal.gyro, site(r, id)?, &thetas, &phis).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let mut body = Vec::new();
    write_maps_csv(&maps, &mut body)?;
    Ok(Artifact {
        body,
        parameters: json!({ "sites": ids, "theta_points": nt, "phi_points": np }),
        not_converged: None,
    })
}

#[derive(Debug, Args)]
pub struct ZefozArgs {
    #[arg(long, default_value_t = 4)]
    pub site: u8,
    #[arg(long = "theta-min", default_value = "0 deg")]
    pub theta_min: String,
    #[arg(long = "theta-max", default_value = "180 deg")]
    pub theta_max: String,
}

pub fn zefoz(r: &Resolved, a: &ZefozArgs) -> Result<Artifact, CliError> {
    let field = r.field()?;
    let lo = arg("--theta-min", &a.theta_min, parse_angle)?;
    let hi = arg("--theta-max", &a.theta_max, parse_angle)?;
    let opts = ZefozOptions::default();
    let res = find_partial_zefoz(&r.crystal.gyro, site(r, a.site)?, field.phi, (lo, hi), &opts)?;
    let record = json!({
        "site": a.site,
        "theta_star_deg": res.theta_star.to_degrees(),
        "phi_deg": res.phi_star.to_degrees(),
        "delta_MHz_per_T": res.delta_per_tesla_at_min / 1e6,
        "result": res,
    });
    Ok(Artifact {
        body: json_body(&record)?,
        parameters: json!({ "site": a.site, "theta_bracket_rad": [lo, hi], "options": opts }),
        not_converged: (!res.converged).then(|| format!("partial ZEFOZ search: {:?}", res.status)),
    })
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Cone,
    Quadratic,
    Both,
}

#[derive(Debug, Args)]
pub struct BroadeningArgs {
    #[arg(long, default_value_t = 4)]
    pub site: u8,
    /// Per-axis misalignment standard deviation.
    #[arg(long = "angular-sigma", default_value = "0.3 deg")]
    pub angular_sigma: String,
    #[arg(long, value_enum, default_value = "both")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
}

pub fn broadening(r: &Resolved, a: &BroadeningArgs) -> Result<Artifact, CliError> {
    let field = r.field()?;
    let sigma = arg("--angular-sigma", &a.angular_sigma, parse_angle)?;
    let methods: &[BroadeningMethod] = match a.method {
        MethodArg::Cone => &[BroadeningMethod::ConeSampling],
        MethodArg::Quadratic => &[BroadeningMethod::QuadraticExpansion],
        MethodArg::Both => &[BroadeningMethod::ConeSampling, BroadeningMethod::QuadraticExpansion],
    };
    let frame = site(r, a.site)?;
    let estimates = methods
        .iter()
        .map(|&m| broadening_estimate(&r.crystal.gyro, frame, &field, sigma, m, a.samples, r.seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Artifact {
        body: json_body(&json!({ "site": a.site, "estimates": estimates }))?,
        parameters: json!({ "site": a.site, "angular_sigma_rad": sigma, "method": a.method, "samples": a.samples }),
        not_converged: None,
    })
}

#[derive(Debug, Args)]
pub struct GammaArgs {
    /// Pulse counts, comma-separated.
    #[arg(long, default_value = "1")]
    pub n: String,
    /// Pulse intervals, comma-separated, each with a unit.
    #[arg(long, conflicts_with_all = ["tau_min", "tau_max"])]
    pub tau: Option<String>,
    #[arg(long = "tau-min", requires = "tau_max")]
    pub tau_min: Option<String>,
    #[arg(long = "tau-max", requires = "tau_min")]
    pub tau_max: Option<String>,
    /// Log-spaced points between `--tau-min` and `--tau-max`.
    #[arg(long, default_value_t = 50)]
    pub points: usize,
}

fn parse_counts(s: &str) -> Result<Vec<u32>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Config(format!("--n: {p:?} is not a positive integer")))
        })
        .collect()
}

fn tau_grid(tau: &Option<String>, lo: &Option<String>, hi: &Option<String>, points: usize) -> Result<Vec<f64>, CliError> {
    match (tau, lo, hi) {
        (Some(t), _, _) => list("--tau", t, parse_time),
        (None, Some(lo), Some(hi)) => {
            let lo = arg("--tau-min", lo, parse_time)?;
            let hi = arg("--tau-max", hi, parse_time)?;
            if !(lo > 0.0 && hi >= lo) || points == 0 {
                return Err(CliError::Config("--tau-min/--tau-max: need 0 < min <= max and points > 0".into()));
            }
            Ok(logspace(lo, hi, points))
        }
        _ => Err(CliError::Config("--tau: missing (give --tau or --tau-min/--tau-max)".into())),
    }
}

pub fn gamma(r: &Resolved, a: &GammaArgs) -> Result<Artifact, CliError> {
    let ou = r.noise()?;
    let ns = parse_counts(&a.n)?;
    let taus = tau_grid(&a.tau, &a.tau_min, &a.tau_max, a.points)?;
    let mut rows = Vec::new();
    for &n in &ns {
        for &tau in &taus {
            let g = gamma_cpmg(n, tau, &ou)?;
            rows.push(vec![
                n.to_string(),
                tau.to_string(),
                (n as f64 * tau).to_string(),
                g.to_string(),
                (-g).exp().to_string(),
            ]);
        }
    }
    Ok(Artifact {
        body: csv_body(&["n", "tau_s", "t_s", "gamma", "rho"], &rows)?,
        parameters: json!({ "n": ns, "tau_s": taus }),
        not_converged: None,
    })
}

#[derive(Debug, Args)]
pub struct T2CurveArgs {
    #[arg(long = "tau-min", default_value = "3 us")]
    pub tau_min: String,
    #[arg(long = "tau-max", default_value = "150 us")]
    pub tau_max: String,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
}

pub fn t2curve(r: &Resolved, a: &T2CurveArgs) -> Result<Artifact, CliError> {
    let ou = r.noise()?;
    let taus = tau_grid(&None, &Some(a.tau_min.clone()), &Some(a.tau_max.clone()), a.points)?;
    let rows = taus
        .iter()
        .map(|&tau| {
            Ok(vec![
                tau.to_string(),
                t2_cpmg(tau, &ou)?.to_string(),
                t2_cpmg_small_tau(tau, &ou)?.to_string(),
            ])
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Artifact {
        body: csv_body(&["tau_s", "t2_s", "t2_small_tau_s"], &rows)?,
        parameters: json!({ "tau_s": taus }),
        not_converged: None,
    })
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, default_value = "1")]
    pub n: String,
    #[arg(long, conflicts_with_all = ["tau_min", "tau_max", "batch"])]
    pub tau: Option<String>,
    #[arg(long = "tau-min", requires = "tau_max")]
    pub tau_min: Option<String>,
    #[arg(long = "tau-max", requires = "tau_min")]
    pub tau_max: Option<String>,
    #[arg(long, default_value_t = 12)]
    pub points: usize,
    /// CSV with columns `n,tau_s`; replaces `--n`/`--tau`.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["tau_min", "tau_max"])]
    pub batch: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    /// Step bound; default `min(tau/50, tau_c/200)`.
    #[arg(long)]
    pub dt: Option<String>,
    /// Spread of a per-trial static detuning, e.g. `1e5 rad/s`.
    #[arg(long = "static-spread")]
    pub static_spread: Option<String>,
}

fn read_batch(path: &PathBuf) -> Result<Vec<(u32, f64)>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("--batch {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(Error::from)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("--batch: missing column {name}")))
    };
    let (cn, ct) = (col("n")?, col("tau_s")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let bad = |c: &str| CliError::Config(format!("--batch row {}: bad {c}", i + 1));
        let n: u32 = rec.get(cn).and_then(|s| s.parse().ok()).ok_or_else(|| bad("n"))?;
        let tau: f64 = rec.get(ct).and_then(|s| s.parse().ok()).ok_or_else(|| bad("tau_s"))?;
        out.push((n, tau));
    }
    Ok(out)
}

pub fn mc(r: &Resolved, a: &McArgs) -> Result<Artifact, CliError> {
    let ou = r.noise()?;
    let jobs: Vec<(u32, f64)> = match &a.batch {
        Some(path) => read_batch(path)?,
        None => {
            let ns = parse_counts(&a.n)?;
            let taus = tau_grid(&a.tau, &a.tau_min, &a.tau_max, a.points)?;
            ns.iter().flat_map(|&n| taus.iter().map(move |&t| (n, t))).collect()
        }
    };
    let dt = a.dt.as_deref().map(|s| arg("--dt", s, parse_time)).transpose()?;
    let spread = a
        .static_spread
        .as_deref()
        .map(|s| arg("--static-spread", s, parse_frequency).map(|f| f.as_rad_per_s()))
        .transpose()?
        .unwrap_or(0.0);

    let mut rows = Vec::new();
    for (i, &(n, tau)) in jobs.iter().enumerate() {
        let cpmg = CpmgParams::new(n, tau).map_err(|e| CliError::Config(format!("job {i}: {e}")))?;
        let mut cfg = SimConfig::new(ou, cpmg, r.seed.wrapping_add(i as u64));
        cfg.trials = a.trials;
        cfg.static_detuning_spread = spread;
        if let Some(dt) = dt {
            cfg.dt = dt;
        }
        let est = mc_cpmg(&cfg)?;
        let analytic = (-gamma_cpmg(n, tau, &ou)?).exp();
        rows.push(vec![
            n.to_string(),
            tau.to_string(),
            cpmg.total_time().to_string(),
            est.mean_re.to_string(),
            est.stderr.to_string(),
            est.mean_im.to_string(),
            analytic.to_string(),
            est.dt.to_string(),
        ]);
    }
    Ok(Artifact {
        body: csv_body(
            &["n", "tau_s", "t_s", "rho", "stderr", "mean_im", "analytic", "dt_s"],
            &rows,
        )?,
        parameters: json!({
            "jobs": jobs,
            "trials": a.trials,
            "dt_bound_s": dt,
            "static_spread_rad_per_s": spread,
            "seed_per_job": "seed + job index",
        }),
        not_converged: None,
    })
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    SpinEcho,
    T2,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with `t_s,rho` or `t_s,I_i,I_f,I_ref`.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "spin-echo")]
    pub kind: FitKind,
    /// Also report the additive-offset model.
    #[arg(long)]
    pub offset: bool,
    #[arg(long = "guess-sigma", requires = "guess_tau_c")]
    pub guess_sigma: Option<String>,
    #[arg(long = "guess-tau-c", requires = "guess_sigma")]
    pub guess_tau_c: Option<String>,
    #[arg(long = "max-iter", default_value_t = 500)]
    pub max_iter: usize,
}

pub fn fit(_r: &Resolved, a: &FitArgs) -> Result<Artifact, CliError> {
    let data = EchoDataset::load(&a.input)
        .map_err(|e| CliError::Config(format!("--input {}: {e}", a.input.display())))?;
    let input = a.input.display().to_string();
    match a.kind {
        FitKind::SpinEcho => {
            let guess = match (&a.guess_sigma, &a.guess_tau_c) {
                (Some(s), Some(t)) => Some(SpinEchoGuess {
                    sigma: arg("--guess-sigma", s, parse_frequency)?.as_rad_per_s(),
                    tau_c: arg("--guess-tau-c", t, parse_time)?,
                    third: 1.0,
                }),
                _ => None,
            };
            let opts = FitOptions { max_iter: a.max_iter };
            let fits = fit_spin_echo_variants(&data, guess, a.offset, &opts)?;
            let bad: Vec<String> = fits
                .iter()
                .filter(|f| !f.converged)
                .map(|f| format!("{:?} model: {:?}", f.model, f.status))
                .collect();
            Ok(Artifact {
                body: json_body(&json!({ "input": input, "points": data.len(), "fits": fits }))?,
                parameters: json!({
                    "input": input,
                    "kind": a.kind,
                    "offset": a.offset,
                    "guess": guess.map(|g| json!({ "sigma_rad_per_s": g.sigma, "tau_c_s": g.tau_c })),
                    "max_iter": a.max_iter,
                }),
                not_converged: (!bad.is_empty()).then(|| format!("spin-echo fit: {}", bad.join(", "))),
            })
        }
        FitKind::T2 => {
            let kept = drop_nonpositive(&data);
            let t2 = fit_t2_loglinear(&kept)?;
            Ok(Artifact {
                body: json_body(&json!({
                    "input": input,
                    "points": data.len(),
                    "dropped": data.len() - kept.len(),
                    "model": "ln(rho) = b - t/T2",
                    "fit": t2,
                }))?,
                parameters: json!({ "input": input, "kind": a.kind }),
                not_converged: None,
            })
        }
    }
}

#[derive(Debug, Args)]
pub struct PositionsArgs {
    /// Ground-state splitting, e.g. `15.1 MHz`.
    #[arg(long = "delta-g")]
    pub delta_g: String,
    /// Excited-state splitting, e.g. `0 Hz`.
    #[arg(long = "delta-e")]
    pub delta_e: String,
    /// Lines closer than this are merged.
    #[arg(long, default_value = "1 Hz")]
    pub tol: String,
}

pub fn positions(_r: &Resolved, a: &PositionsArgs) -> Result<Artifact, CliError> {
    let dg = arg("--delta-g", &a.delta_g, hz)?;
    let de = arg("--delta-e", &a.delta_e, hz)?;
    let tol = arg("--tol", &a.tol, hz)?;
    let features = holeburn_positions(dg, de).map_err(|e| CliError::Config(e.to_string()))?;
    let rows: Vec<Vec<String>> = merge_coincident(&features, tol)
        .iter()
        .map(|l| {
            let kinds: Vec<&str> = l.kinds.iter().map(|k| k.as_str()).collect();
            vec![l.offset.to_string(), l.multiplicity().to_string(), kinds.join(";")]
        })
        .collect();
    Ok(Artifact {
        body: csv_body(&["offset_hz", "multiplicity", "kinds"], &rows)?,
        parameters: json!({ "delta_g_hz": dg, "delta_e_hz": de, "tol_hz": tol }),
        not_converged: None,
    })
}
