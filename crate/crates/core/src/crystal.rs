//! Field geometry for an anisotropic spin in the six-site cubic host.
//!
//! A field given in the crystal frame `{[100], [010], [001]}` is projected
//! onto the local twofold axes of a site, scaled component-wise by the
//! gyromagnetic tensor eigenvalues, and turned into a splitting and a Rabi
//! frequency. All frequencies here are cyclic (Hz).

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

pub type Vec3 = Vector3<f64>;

const FRAME_TOL: f64 = 1e-12;

/// Diagonal gyromagnetic tensor, eigenvalues in Hz/T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyroTensor {
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub gamma_z: f64,
}

impl GyroTensor {
    pub fn new(gamma_x: f64, gamma_y: f64, gamma_z: f64) -> Result<Self> {
        for (name, v) in [
            ("gamma_x", gamma_x),
            ("gamma_y", gamma_y),
            ("gamma_z", gamma_z),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    field: name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        Ok(Self {
            gamma_x,
            gamma_y,
            gamma_z,
        })
    }

    /// Tm:YAG ground level: γ_y = 403 MHz/T, γ_x = 0.045 γ_y, γ_z = 0.017 γ_y.
    pub fn tm_yag() -> Self {
        let gy = 403e6;
        Self {
            gamma_x: 0.045 * gy,
            gamma_y: gy,
            gamma_z: 0.017 * gy,
        }
    }

    pub fn isotropic(gamma: f64) -> Result<Self> {
        Self::new(gamma, gamma, gamma)
    }

    pub fn diagonal(&self) -> Vec3 {
        Vec3::new(self.gamma_x, self.gamma_y, self.gamma_z)
    }

    /// Effective field `γ∘v` (Hz) for a local-frame vector `v` (T).
    pub fn apply(&self, local: &Vec3) -> Vec3 {
        self.diagonal().component_mul(local)
    }
}

impl Default for GyroTensor {
    fn default() -> Self {
        Self::tm_yag()
    }
}

/// Orthonormal right-handed local axes of one substitution site, written
/// in the crystal frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteFrame {
    pub site_id: u8,
    pub x_hat: Vec3,
    pub y_hat: Vec3,
    pub z_hat: Vec3,
}

impl SiteFrame {
    /// Validates unit norm, orthogonality and handedness to 1e-12.
    pub fn new(site_id: u8, x_hat: Vec3, y_hat: Vec3, z_hat: Vec3) -> Result<Self> {
        let frame = Self {
            site_id,
            x_hat,
            y_hat,
            z_hat,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// Builds a frame from two (not necessarily normalised) axis directions,
    /// completing it with `z = x × y`.
    pub fn from_xy(site_id: u8, x: Vec3, y: Vec3) -> Result<Self> {
        let (nx, ny) = (x.norm(), y.norm());
        if nx == 0.0 || ny == 0.0 {
            return Err(Error::invalid("site axes", "zero-length axis"));
        }
        let x_hat = x / nx;
        let y_hat = y / ny;
        Self::new(site_id, x_hat, y_hat, x_hat.cross(&y_hat))
    }

    fn validate(&self) -> Result<()> {
        let axes = [&self.x_hat, &self.y_hat, &self.z_hat];
        for a in axes {
            if (a.norm() - 1.0).abs() > FRAME_TOL {
                return Err(Error::invalid(
                    "site axes",
                    format!("site {}: axis not unit norm", self.site_id),
                ));
            }
        }
        if self.x_hat.dot(&self.y_hat).abs() > FRAME_TOL
            || self.y_hat.dot(&self.z_hat).abs() > FRAME_TOL
            || self.z_hat.dot(&self.x_hat).abs() > FRAME_TOL
        {
            return Err(Error::invalid(
                "site axes",
                format!("site {}: axes not orthogonal", self.site_id),
            ));
        }
        if (self.x_hat.cross(&self.y_hat) - self.z_hat).norm() > FRAME_TOL {
            return Err(Error::invalid(
                "site axes",
                format!("site {}: frame is left-handed", self.site_id),
            ));
        }
        Ok(())
    }

    /// Rows are the local axes; maps crystal-frame vectors to local components.
    pub fn to_local_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_rows(&[
            self.x_hat.transpose(),
            self.y_hat.transpose(),
            self.z_hat.transpose(),
        ])
    }

    pub fn to_crystal(&self, local: &Vec3) -> Vec3 {
        self.x_hat * local.x + self.y_hat * local.y + self.z_hat * local.z
    }

    /// The frame with local x and y exchanged (z flipped to stay right-handed).
    pub fn swapped_xy(&self) -> Self {
        Self {
            site_id: self.site_id,
            x_hat: self.y_hat,
            y_hat: self.x_hat,
            z_hat: -self.z_hat,
        }
    }
}

/// The reference site: x ∥ [0-1-1], y ∥ [01-1], z ∥ [100].
pub fn site4() -> SiteFrame {
    SiteFrame::from_xy(4, Vec3::new(0.0, -1.0, -1.0), Vec3::new(0.0, 1.0, -1.0))
        .expect("reference frame is orthonormal")
}

/// Six-site table. For each cubic axis z the two sites take the two
/// perpendicular <110> directions as (x, y) in both orders. Only site 4 is
/// pinned by published data; site 6 is its image under the [100] <-> [010]
/// mirror, sites 3 and 5 the corresponding pair with y along [011] / [101],
/// and sites 1, 2 have z ∥ [001]. Load a [`CrystalConfig`] to override.
pub fn default_site_table() -> Vec<SiteFrame> {
    let v = Vec3::new;
    let table = [
        (1, v(1.0, -1.0, 0.0), v(1.0, 1.0, 0.0)),
        (2, v(1.0, 1.0, 0.0), v(-1.0, 1.0, 0.0)),
        (3, v(0.0, 1.0, -1.0), v(0.0, 1.0, 1.0)),
        (4, v(0.0, -1.0, -1.0), v(0.0, 1.0, -1.0)),
        (5, v(1.0, 0.0, -1.0), v(1.0, 0.0, 1.0)),
        (6, v(-1.0, 0.0, -1.0), v(1.0, 0.0, -1.0)),
    ];
    table
        .into_iter()
        .map(|(id, x, y)| SiteFrame::from_xy(id, x, y).expect("table frames are orthonormal"))
        .collect()
}

/// Unit vector at polar angle `theta` from [001] and azimuth `phi` from
/// [100] toward [010].
pub fn field_direction(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(st * cp, st * sp, ct)
}

/// rf coil axis `(-sin φ, cos φ, 0)`; lies in the (001) plane and is
/// orthogonal to every [`field_direction`] with the same `phi`.
pub fn rf_direction(phi: f64) -> Vec3 {
    let (sp, cp) = phi.sin_cos();
    Vec3::new(-sp, cp, 0.0)
}

/// Static field plus rf drive. At `theta = 0` the azimuth is meaningless
/// for `B` but still selects the rf axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Tesla.
    pub b_mag: f64,
    /// Radians.
    pub theta: f64,
    /// Radians.
    pub phi: f64,
    /// Tesla.
    pub b1_mag: f64,
}

impl FieldConfig {
    pub fn new(b_mag: f64, theta: f64, phi: f64, b1_mag: f64) -> Result<Self> {
        if !(b_mag.is_finite() && b_mag >= 0.0) {
            return Err(Error::invalid("B_mag", format!("must be >= 0, got {b_mag}")));
        }
        if !(b1_mag.is_finite() && b1_mag >= 0.0) {
            return Err(Error::invalid("B1_mag", format!("must be >= 0, got {b1_mag}")));
        }
        if !(theta.is_finite() && phi.is_finite()) {
            return Err(Error::invalid("theta/phi", "angles must be finite"));
        }
        Ok(Self {
            b_mag,
            theta,
            phi,
            b1_mag,
        })
    }

    /// Unit static field and unit rf field at the given angles.
    pub fn unit(theta: f64, phi: f64) -> Self {
        Self {
            b_mag: 1.0,
            theta,
            phi,
            b1_mag: 1.0,
        }
    }

    pub fn b_hat(&self) -> Vec3 {
        field_direction(self.theta, self.phi)
    }

    pub fn b1_hat(&self) -> Vec3 {
        rf_direction(self.phi)
    }

    pub fn b_vec(&self) -> Vec3 {
        self.b_hat() * self.b_mag
    }

    pub fn b1_vec(&self) -> Vec3 {
        self.b1_hat() * self.b1_mag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteResponse {
    pub site_id: u8,
    /// Splitting at the configured field, Hz.
    pub delta: f64,
    /// Hz/T.
    pub delta_per_tesla: f64,
    /// Ω/2π per unit rf field, Hz/T.
    pub rabi_per_tesla: f64,
}

/// Components of a crystal-frame vector along the local axes.
pub fn local_components(frame: &SiteFrame, v: &Vec3) -> Vec3 {
    Vec3::new(frame.x_hat.dot(v), frame.y_hat.dot(v), frame.z_hat.dot(v))
}

/// Sublevel splitting `|γ∘b|` in Hz for a local-frame field in tesla.
pub fn splitting(g: &GyroTensor, b_local: &Vec3) -> f64 {
    g.apply(b_local).norm()
}

/// Ω/2π for arbitrary static and rf field vectors (crystal frame, tesla).
///
/// Only the part of `γ∘B1` perpendicular to `γ∘B` drives the transition,
/// and only the co-rotating half of a linear drive contributes, hence the
/// factor ½.
pub fn rabi_for_vectors(g: &GyroTensor, frame: &SiteFrame, b: &Vec3, b1: &Vec3) -> Result<f64> {
    let eff = g.apply(&local_components(frame, b));
    let eff_norm2 = eff.norm_squared();
    if eff_norm2 == 0.0 || !eff_norm2.is_finite() {
        return Err(Error::ZeroField);
    }
    let eff1 = g.apply(&local_components(frame, b1));
    let perp = eff1 - eff * (eff.dot(&eff1) / eff_norm2);
    Ok(0.5 * perp.norm())
}

/// Ω/2π in Hz for the configured field, with the rf axis set by `phi`.
pub fn rabi(g: &GyroTensor, frame: &SiteFrame, field: &FieldConfig) -> Result<f64> {
    if field.b_mag == 0.0 {
        return Err(Error::ZeroField);
    }
    rabi_for_vectors(g, frame, &field.b_hat(), &field.b1_vec())
}

pub fn site_response(g: &GyroTensor, frame: &SiteFrame, field: &FieldConfig) -> Result<SiteResponse> {
    let b_hat = field.b_hat();
    let delta_per_tesla = splitting(g, &local_components(frame, &b_hat));
    let rabi_per_tesla = rabi_for_vectors(g, frame, &b_hat, &field.b1_hat())?;
    Ok(SiteResponse {
        site_id: frame.site_id,
        delta: delta_per_tesla * field.b_mag,
        delta_per_tesla,
        rabi_per_tesla,
    })
}

/// Splitting per tesla and Rabi per tesla over a (θ, φ) grid.
#[derive(Debug, Clone, Serialize)]
pub struct OrientationMap {
    pub site_id: u8,
    /// Radians, monotone.
    pub thetas: Vec<f64>,
    /// Radians, monotone.
    pub phis: Vec<f64>,
    /// Row-major: θ index outer, φ index inner.
    pub nodes: Vec<SiteResponse>,
}

impl OrientationMap {
    pub fn get(&self, i_theta: usize, i_phi: usize) -> &SiteResponse {
        &self.nodes[i_theta * self.phis.len() + i_phi]
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, &SiteResponse)> + '_ {
        self.nodes.iter().enumerate().map(move |(k, r)| {
            let np = self.phis.len();
            (self.thetas[k / np], self.phis[k % np], r)
        })
    }
}

/// Header of the orientation-map CSV.
pub const MAP_CSV_HEADER: [&str; 5] = [
    "theta_deg",
    "phi_deg",
    "site_id",
    "delta_MHz_per_T",
    "rabi_kHz_per_mT",
];

/// Writes one or more maps as a single CSV table.
pub fn write_maps_csv<W: std::io::Write>(maps: &[OrientationMap], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MAP_CSV_HEADER)?;
    for map in maps {
        for (theta, phi, r) in map.iter() {
            w.write_record([
                format!("{}", theta.to_degrees()),
                format!("{}", phi.to_degrees()),
                r.site_id.to_string(),
                format!("{}", r.delta_per_tesla / 1e6),
                // Hz/T -> kHz/mT is 1e-3 * 1e-3.
                format!("{}", r.rabi_per_tesla * 1e-6),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn check_grid(name: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(name, "grid is empty"));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(name, "grid contains non-finite values"));
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::invalid(name, "grid must be strictly monotone"));
    }
    Ok(())
}

/// Evaluates the site response at every grid node. Nodes are independent,
/// so the map is computed in parallel; ordering is fixed by the grid.
pub fn orientation_map(
    g: &GyroTensor,
    frame: &SiteFrame,
    thetas: &[f64],
    phis: &[f64],
) -> Result<OrientationMap> {
    check_grid("theta grid", thetas)?;
    check_grid("phi grid", phis)?;
    let np = phis.len();
    let nodes = (0..thetas.len() * np)
        .into_par_iter()
        .map(|k| site_response(g, frame, &FieldConfig::unit(thetas[k / np], phis[k % np])))
        .collect::<Result<Vec<_>>>()?;
    Ok(OrientationMap {
        site_id: frame.site_id,
        thetas: thetas.to_vec(),
        phis: phis.to_vec(),
        nodes,
    })
}

/// `count` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (count - 1) as f64;
            (0..count).map(|i| start + step * i as f64).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    CentralHole,
    ExcitedHole,
    GroundAntihole,
    MixedAntihole,
}

impl FeatureKind {
    pub fn is_hole(self) -> bool {
        matches!(self, FeatureKind::CentralHole | FeatureKind::ExcitedHole)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::CentralHole => "central_hole",
            FeatureKind::ExcitedHole => "excited_hole",
            FeatureKind::GroundAntihole => "ground_antihole",
            FeatureKind::MixedAntihole => "mixed_antihole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralFeature {
    /// Offset from the burn frequency, Hz.
    pub offset: f64,
    pub kind: FeatureKind,
}

/// Hole-burning line positions: central hole, ±Δe holes, ±Δg antiholes and
/// ±(Δg − Δe) mixed antiholes, sorted by offset (ties by kind).
pub fn holeburn_positions(delta_g: f64, delta_e: f64) -> Result<Vec<SpectralFeature>> {
    if !(delta_g.is_finite() && delta_g >= 0.0) {
        return Err(Error::invalid("delta_g", "must be >= 0"));
    }
    if !(delta_e.is_finite() && delta_e >= 0.0) {
        return Err(Error::invalid("delta_e", "must be >= 0"));
    }
    let mixed = delta_g - delta_e;
    let mut out = vec![SpectralFeature {
        offset: 0.0,
        kind: FeatureKind::CentralHole,
    }];
    for (mag, kind) in [
        (delta_e, FeatureKind::ExcitedHole),
        (delta_g, FeatureKind::GroundAntihole),
        (mixed, FeatureKind::MixedAntihole),
    ] {
        // +0.0 for both signs so coincident lines compare equal.
        out.push(SpectralFeature { offset: -mag + 0.0, kind });
        out.push(SpectralFeature { offset: mag + 0.0, kind });
    }
    out.sort_by(|a, b| a.offset.total_cmp(&b.offset).then(a.kind.cmp(&b.kind)));
    Ok(out)
}

/// A spectral position with every feature that lands on it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedLine {
    pub offset: f64,
    pub kinds: Vec<FeatureKind>,
}

impl MergedLine {
    pub fn multiplicity(&self) -> usize {
        self.kinds.len()
    }
}

/// Collapses features whose offsets agree within `tol` Hz.
pub fn merge_coincident(features: &[SpectralFeature], tol: f64) -> Vec<MergedLine> {
    let mut out: Vec<MergedLine> = Vec::new();
    for f in features {
        match out.last_mut() {
            Some(last) if (f.offset - last.offset).abs() <= tol => last.kinds.push(f.kind),
            _ => out.push(MergedLine {
                offset: f.offset,
                kinds: vec![f.kind],
            }),
        }
    }
    out
}

/// Square π-pulse length for Ω/2π = `rabi_hz`: area 2π·rabi·T = π.
pub fn pi_pulse_duration(rabi_hz: f64) -> Result<f64> {
    if !(rabi_hz.is_finite() && rabi_hz > 0.0) {
        return Err(Error::invalid("rabi frequency", format!("must be > 0, got {rabi_hz}")));
    }
    Ok(1.0 / (2.0 * rabi_hz))
}

/// Material constants: tensor plus site table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrystalConfig {
    pub gyro: GyroTensor,
    pub sites: Vec<SiteFrame>,
}

impl Default for CrystalConfig {
    fn default() -> Self {
        Self {
            gyro: GyroTensor::tm_yag(),
            sites: default_site_table(),
        }
    }
}

#[derive(Deserialize)]
struct RawCrystal {
    gyro: Option<RawGyro>,
    #[serde(default)]
    sites: Vec<RawSite>,
}

#[derive(Deserialize)]
struct RawGyro {
    gamma_x: String,
    gamma_y: String,
    gamma_z: String,
}

#[derive(Deserialize)]
struct RawSite {
    id: u8,
    x: [f64; 3],
    y: [f64; 3],
    z: Option<[f64; 3]>,
}

impl CrystalConfig {
    /// Parses the `[gyro]` table and `[[sites]]` array. Missing sections fall
    /// back to the Tm:YAG defaults. Axis directions may be unnormalised
    /// Miller indices; an explicit `z` must agree with `x × y`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawCrystal = toml::from_str(text)?;
        let gyro = match raw.gyro {
            Some(g) => GyroTensor::new(
                units::parse_gyro(&g.gamma_x)?,
                units::parse_gyro(&g.gamma_y)?,
                units::parse_gyro(&g.gamma_z)?,
            )?,
            None => GyroTensor::tm_yag(),
        };
        let sites = if raw.sites.is_empty() {
            default_site_table()
        } else {
            raw.sites
                .into_iter()
                .map(|s| {
                    let frame = SiteFrame::from_xy(s.id, Vec3::from(s.x), Vec3::from(s.y))?;
                    if let Some(z) = s.z {
                        let z = Vec3::from(z);
                        let z = z / z.norm();
                        SiteFrame::new(s.id, frame.x_hat, frame.y_hat, z)
                    } else {
                        Ok(frame)
                    }
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self { gyro, sites })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn site(&self, id: u8) -> Option<&SiteFrame> {
        self.sites.iter().find(|s| s.site_id == id)
    }
}
