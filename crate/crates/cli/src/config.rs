//! Resolution order: `--preset`, then `--config`, then individual flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cpmg_zefoz::crystal::{CrystalConfig, FieldConfig};
use cpmg_zefoz::decoherence::OuParams;
use cpmg_zefoz::units::{parse_angle, parse_field, parse_frequency, parse_time};
use cpmg_zefoz::{presets, Error};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Paper,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Built-in parameter bundle.
    #[arg(long, global = true)]
    pub preset: Option<Preset>,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output file. Without it the data go to stdout and no sidecar is written.
    #[arg(long, short, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Noise amplitude, e.g. `2300 rad/s` or `2.3 kHz` (read as cyclic).
    #[arg(long, global = true, value_name = "FREQ")]
    pub sigma: Option<String>,
    /// Noise correlation time, e.g. `172 us`.
    #[arg(long = "tau-c", global = true, value_name = "TIME")]
    pub tau_c: Option<String>,
    /// Static field magnitude, e.g. `0.985 T`.
    #[arg(long = "b", global = true, value_name = "FIELD")]
    pub b: Option<String>,
    #[arg(long, global = true, value_name = "ANGLE")]
    pub theta: Option<String>,
    #[arg(long, global = true, value_name = "ANGLE")]
    pub phi: Option<String>,
    /// Rf field amplitude, e.g. `1 mT`.
    #[arg(long = "b1", global = true, value_name = "FIELD")]
    pub b1: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    sigma: Option<String>,
    tau_c: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    b: Option<String>,
    theta: Option<String>,
    phi: Option<String>,
    b1: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct RawRun {
    seed: Option<u64>,
    noise: Option<RawNoise>,
    field: Option<RawField>,
}

/// Fully resolved inputs shared by all commands; written to the sidecar.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub preset: Option<Preset>,
    pub config_file: Option<String>,
    pub seed: u64,
    pub crystal: CrystalConfig,
    pub noise: Option<OuParams>,
    pub field: Option<FieldConfig>,
}

#[derive(Default)]
struct Pending {
    sigma: Option<f64>,
    tau_c: Option<f64>,
    b: Option<f64>,
    theta: Option<f64>,
    phi: Option<f64>,
    b1: Option<f64>,
}

fn field_err(field: &'static str, e: Error) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

fn apply<T>(
    slot: &mut Option<f64>,
    field: &'static str,
    value: Option<&String>,
    parse: impl Fn(&str) -> Result<T, Error>,
    conv: impl Fn(T) -> f64,
) -> Result<(), CliError> {
    if let Some(v) = value {
        *slot = Some(conv(parse(v).map_err(|e| field_err(field, e))?));
    }
    Ok(())
}

impl Pending {
    #[allow(clippy::too_many_arguments)]
    fn layer(
        &mut self,
        sigma: Option<&String>,
        tau_c: Option<&String>,
        b: Option<&String>,
        theta: Option<&String>,
        phi: Option<&String>,
        b1: Option<&String>,
        prefix: &'static [&'static str; 6],
    ) -> Result<(), CliError> {
        apply(&mut self.sigma, prefix[0], sigma, parse_frequency, |f| f.as_rad_per_s())?;
        apply(&mut self.tau_c, prefix[1], tau_c, parse_time, |t| t)?;
        apply(&mut self.b, prefix[2], b, parse_field, |t| t)?;
        apply(&mut self.theta, prefix[3], theta, parse_angle, |t| t)?;
        apply(&mut self.phi, prefix[4], phi, parse_angle, |t| t)?;
        apply(&mut self.b1, prefix[5], b1, parse_field, |t| t)?;
        Ok(())
    }
}

const FILE_FIELDS: [&str; 6] = [
    "noise.sigma",
    "noise.tau_c",
    "field.b",
    "field.theta",
    "field.phi",
    "field.b1",
];
const FLAG_FIELDS: [&str; 6] = ["--sigma", "--tau-c", "--b", "--theta", "--phi", "--b1"];

pub fn resolve(args: &GlobalArgs) -> Result<Resolved, CliError> {
    let mut p = Pending::default();
    let mut seed = 0;
    let mut crystal = CrystalConfig::default();

    if args.preset == Some(Preset::Paper) {
        let ou = presets::paper_noise();
        let f = presets::paper_field();
        p = Pending {
            sigma: Some(ou.sigma),
            tau_c: Some(ou.tau_c),
            b: Some(f.b_mag),
            theta: Some(f.theta),
            phi: Some(f.phi),
            b1: Some(f.b1_mag),
        };
        crystal = presets::paper_crystal();
    }

    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("--config {}: {e}", path.display())))?;
        let raw: RawRun = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        crystal = CrystalConfig::from_toml_str(&text)
            .map_err(|e| CliError::Config(format!("{}: crystal: {e}", path.display())))?;
        if let Some(s) = raw.seed {
            seed = s;
        }
        let n = raw.noise.unwrap_or_default();
        let f = raw.field.unwrap_or_default();
        p.layer(
            n.sigma.as_ref(),
            n.tau_c.as_ref(),
            f.b.as_ref(),
            f.theta.as_ref(),
            f.phi.as_ref(),
            f.b1.as_ref(),
            &FILE_FIELDS,
        )?;
    }

    p.layer(
        args.sigma.as_ref(),
        args.tau_c.as_ref(),
        args.b.as_ref(),
        args.theta.as_ref(),
        args.phi.as_ref(),
        args.b1.as_ref(),
        &FLAG_FIELDS,
    )?;
    if let Some(s) = args.seed {
        seed = s;
    }

    let noise = match (p.sigma, p.tau_c) {
        (Some(s), Some(t)) => Some(OuParams::new(s, t).map_err(|e| CliError::Config(format!("noise: {e}")))?),
        (None, None) => None,
        (Some(_), None) => return Err(CliError::Config("noise.tau_c: missing (sigma given without tau_c)".into())),
        (None, Some(_)) => return Err(CliError::Config("noise.sigma: missing (tau_c given without sigma)".into())),
    };
    let field = match (p.theta, p.phi) {
        (Some(theta), Some(phi)) => Some(
            FieldConfig::new(p.b.unwrap_or(1.0), theta, phi, p.b1.unwrap_or(1e-3))
                .map_err(|e| CliError::Config(format!("field: {e}")))?,
        ),
        (None, None) if p.b.is_none() && p.b1.is_none() => None,
        (None, _) => return Err(CliError::Config("field.theta: missing".into())),
        (_, None) => return Err(CliError::Config("field.phi: missing".into())),
    };

    Ok(Resolved {
        preset: args.preset,
        config_file: args.config.as_deref().map(Path::display).map(|d| d.to_string()),
        seed,
        crystal,
        noise,
        field,
    })
}

impl Resolved {
    pub fn noise(&self) -> Result<OuParams, CliError> {
        self.noise.ok_or_else(|| {
            CliError::Config("noise.sigma: missing (use --preset paper, --config or --sigma/--tau-c)".into())
        })
    }

    pub fn field(&self) -> Result<FieldConfig, CliError> {
        self.field.ok_or_else(|| {
            CliError::Config("field.theta: missing (use --preset paper, --config or --theta/--phi)".into())
        })
    }
}
