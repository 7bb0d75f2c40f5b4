//! Geometry, directions, band plan and scenario configuration.
//!
//! The surface lies in the `(ν, ζ)` plane with its normal along the third
//! axis. Element indices are zero-based throughout the crate: element `n`
//! sits at grid coordinates `ν_n = n mod I`, `ζ_n = ⌊n / I⌋`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Free-space wavelength at `freq_hz`.
pub fn wavelength(freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / freq_hz
}

/// Cartesian axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> [f64; 3] {
        let mut u = [0.0; 3];
        u[self.index()] = 1.0;
        u
    }

    fn third(a: Axis, b: Axis) -> Axis {
        match (a, b) {
            (Axis::X, Axis::Y) | (Axis::Y, Axis::X) => Axis::Z,
            (Axis::X, Axis::Z) | (Axis::Z, Axis::X) => Axis::Y,
            _ => Axis::X,
        }
    }
}

/// Planar element grid of the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct MtpGeometry {
    i_count: usize,
    j_count: usize,
    delta_nu: f64,
    delta_zeta: f64,
    nu_axis: Axis,
    zeta_axis: Axis,
    origin: [f64; 3],
    positions: Vec<[f64; 3]>,
}

impl MtpGeometry {
    /// Grid centred on the coordinate origin with `(ν, ζ) = (y, z)`.
    pub fn centered(
        i_count: usize,
        j_count: usize,
        delta_nu: f64,
        delta_zeta: f64,
    ) -> Result<Self> {
        Self::centered_on_axes(i_count, j_count, delta_nu, delta_zeta, Axis::Y, Axis::Z)
    }

    pub fn centered_on_axes(
        i_count: usize,
        j_count: usize,
        delta_nu: f64,
        delta_zeta: f64,
        nu_axis: Axis,
        zeta_axis: Axis,
    ) -> Result<Self> {
        let mut origin = [0.0; 3];
        origin[nu_axis.index()] = -((i_count.max(1) - 1) as f64) * delta_nu / 2.0;
        origin[zeta_axis.index()] = -((j_count.max(1) - 1) as f64) * delta_zeta / 2.0;
        Self::with_origin(
            i_count, j_count, delta_nu, delta_zeta, nu_axis, zeta_axis, origin,
        )
    }

    /// Grid whose lowest-`(ν, ζ)` element sits at `origin`.
    pub fn with_origin(
        i_count: usize,
        j_count: usize,
        delta_nu: f64,
        delta_zeta: f64,
        nu_axis: Axis,
        zeta_axis: Axis,
        origin: [f64; 3],
    ) -> Result<Self> {
        if i_count == 0 || j_count == 0 {
            return Err(Error::validation("element counts I and J must be positive"));
        }
        if !(delta_nu > 0.0 && delta_nu.is_finite() && delta_zeta > 0.0 && delta_zeta.is_finite()) {
            return Err(Error::validation(
                "element spacings must be positive and finite",
            ));
        }
        if nu_axis == zeta_axis {
            return Err(Error::validation("ν and ζ must be distinct axes"));
        }
        if origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation("non-finite grid origin"));
        }
        let mut geom = Self {
            i_count,
            j_count,
            delta_nu,
            delta_zeta,
            nu_axis,
            zeta_axis,
            origin,
            positions: Vec::with_capacity(i_count * j_count),
        };
        for n in 0..i_count * j_count {
            let p = geom.position_from_indices(geom.nu_index(n), geom.zeta_index(n));
            geom.positions.push(p);
        }
        Ok(geom)
    }

    pub fn len(&self) -> usize {
        self.i_count * self.j_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn i_count(&self) -> usize {
        self.i_count
    }

    pub fn j_count(&self) -> usize {
        self.j_count
    }

    pub fn delta_nu(&self) -> f64 {
        self.delta_nu
    }

    pub fn delta_zeta(&self) -> f64 {
        self.delta_zeta
    }

    pub fn nu_axis(&self) -> Axis {
        self.nu_axis
    }

    pub fn zeta_axis(&self) -> Axis {
        self.zeta_axis
    }

    pub fn normal_axis(&self) -> Axis {
        Axis::third(self.nu_axis, self.zeta_axis)
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn nu_index(&self, n: usize) -> usize {
        n % self.i_count
    }

    pub fn zeta_index(&self, n: usize) -> usize {
        n / self.i_count
    }

    /// `(ν_n Δν, ζ_n Δζ)`: offset of element `n` from the grid origin.
    pub fn local_offset(&self, n: usize) -> (f64, f64) {
        (
            self.nu_index(n) as f64 * self.delta_nu,
            self.zeta_index(n) as f64 * self.delta_zeta,
        )
    }

    pub fn position(&self, n: usize) -> [f64; 3] {
        self.positions[n]
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    /// Rebuilds a position from grid indices; inverse of the element indexing.
    pub fn position_from_indices(&self, nu: usize, zeta: usize) -> [f64; 3] {
        let mut p = self.origin;
        p[self.nu_axis.index()] += nu as f64 * self.delta_nu;
        p[self.zeta_axis.index()] += zeta as f64 * self.delta_zeta;
        p
    }

    /// In-plane `(ν, ζ)` coordinates of element `n`.
    pub fn planar_coordinates(&self, n: usize) -> (f64, f64) {
        let p = self.positions[n];
        (p[self.nu_axis.index()], p[self.zeta_axis.index()])
    }

    /// Total extent `I·Δν` along ν.
    pub fn aperture_nu(&self) -> f64 {
        self.i_count as f64 * self.delta_nu
    }

    /// Point at distance `range` in direction `dir` from the grid centre frame origin.
    pub fn point_at(&self, dir: Direction, range: f64) -> [f64; 3] {
        let mut p = [0.0; 3];
        let (st, ct) = dir.theta.sin_cos();
        let (sp, cp) = dir.phi.sin_cos();
        p[self.normal_axis().index()] = range * ct;
        p[self.nu_axis.index()] = range * st * cp;
        p[self.zeta_axis.index()] = range * st * sp;
        p
    }
}

/// Elevation / azimuth pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    /// Validates the elevation and wraps the azimuth into `[0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::validation("non-finite direction"));
        }
        if theta.abs() > FRAC_PI_2 + 1e-12 {
            return Err(Error::validation(format!(
                "elevation {theta} outside [-π/2, π/2]"
            )));
        }
        let phi = phi.rem_euclid(TAU);
        let phi = if phi >= TAU { 0.0 } else { phi };
        Ok(Self {
            theta: theta.clamp(-FRAC_PI_2, FRAC_PI_2),
            phi,
        })
    }

    pub fn broadside() -> Self {
        Self {
            theta: 0.0,
            phi: 0.0,
        }
    }

    /// Direction cosines `(u_ν, u_ζ) = sinθ (cosφ, sinφ)`.
    pub fn direction_cosines(&self) -> (f64, f64) {
        let st = self.theta.sin();
        (st * self.phi.cos(), st * self.phi.sin())
    }
}

/// Carrier, bandwidth and the uniformly sampled frequency set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPlan {
    pub f0: f64,
    pub bandwidth: f64,
    pub k: usize,
}

impl BandPlan {
    pub fn new(f0: f64, bandwidth: f64, k: usize) -> Result<Self> {
        if !(f0 > 0.0 && f0.is_finite()) {
            return Err(Error::validation("carrier frequency must be positive"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::validation("bandwidth must be positive"));
        }
        if bandwidth >= 2.0 * f0 {
            return Err(Error::validation(
                "band extends to non-positive frequencies",
            ));
        }
        if k < 2 {
            return Err(Error::validation(
                "at least two sampled frequencies are required",
            ));
        }
        if bandwidth / f0 >= 0.1 {
            log::warn!(
                "fractional bandwidth {:.3} is not narrowband; λ≈λ0 approximations degrade",
                bandwidth / f0
            );
        }
        Ok(Self { f0, bandwidth, k })
    }

    pub fn lambda0(&self) -> f64 {
        wavelength(self.f0)
    }

    pub fn lower(&self) -> f64 {
        self.f0 - self.bandwidth / 2.0
    }

    pub fn upper(&self) -> f64 {
        self.f0 + self.bandwidth / 2.0
    }

    /// `f_k`, uniformly spaced and including both band edges.
    pub fn frequencies(&self) -> Vec<f64> {
        linspace(self.lower(), self.upper(), self.k)
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::new(self.f0, self.bandwidth, k)
    }
}

/// `n` evenly spaced samples over `[a, b]`, endpoints included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let step = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + step * i as f64 })
                .collect()
        }
    }
}

/// Transverse wavenumber `(2π/λ)[sinθ cosφ, sinθ sinφ]` in rad/m.
pub fn wavenumber(dir: Direction, freq_hz: f64) -> Result<[f64; 2]> {
    if !dir.theta.is_finite() || !dir.phi.is_finite() || !freq_hz.is_finite() {
        return Err(Error::validation("non-finite wavenumber input"));
    }
    if freq_hz <= 0.0 {
        return Err(Error::validation("frequency must be positive"));
    }
    let k = TAU / wavelength(freq_hz);
    let (u_nu, u_zeta) = dir.direction_cosines();
    Ok([k * u_nu, k * u_zeta])
}

/// Plane-wave array response `a_n = exp(j kᵀ p_n)`.
pub fn array_response(geom: &MtpGeometry, dir: Direction, freq_hz: f64) -> Result<Vec<Complex64>> {
    let k = wavenumber(dir, freq_hz)?;
    Ok((0..geom.len())
        .map(|n| {
            let (nu, zeta) = geom.planar_coordinates(n);
            Complex64::from_polar(1.0, k[0] * nu + k[1] * zeta)
        })
        .collect())
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

/// Reference aperture used when only the ν spacing is overridden.
const REFERENCE_I: usize = 16;
const REFERENCE_DELTA_NU_WL: f64 = 0.5;

/// User-facing scenario document. Every field is optional; omitted fields
/// take the reference defaults (3.6 GHz carrier, 100 MHz band, coverage
/// `[π/6, π/3]`, 16 × 4 half-wave/three-quarter-wave grid, 10 m / 20 m links).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub band: BandSection,
    #[serde(default)]
    pub coverage: CoverageSection,
    #[serde(default)]
    pub array: ArraySection,
    #[serde(default)]
    pub links: LinkSection,
    #[serde(default)]
    pub power: PowerSection,
    #[serde(default)]
    pub dipole: DipoleSection,
    #[serde(default)]
    pub circuit: CircuitSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    /// f0 (Hz)
    pub f0_hz: Option<f64>,
    /// W (Hz)
    pub bandwidth_hz: Option<f64>,
    /// K, number of users / sampled frequencies. Defaults to ⌈W/ΔW⌉.
    pub k_users: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    /// θ_m (rad)
    pub theta_min_rad: Option<f64>,
    /// θ_M (rad)
    pub theta_max_rad: Option<f64>,
    /// θ_inc (rad)
    pub theta_inc_rad: Option<f64>,
    /// azimuth of the incident wave (rad)
    pub phi_inc_rad: Option<f64>,
    /// φ of the reflected beams (rad)
    pub phi_rad: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    /// I
    pub i_count: Option<usize>,
    /// J
    pub j_count: Option<usize>,
    /// Δν in units of λ0
    pub delta_nu_wavelengths: Option<f64>,
    /// Δζ in units of λ0
    pub delta_zeta_wavelengths: Option<f64>,
    /// Δν in metres (takes precedence over the wavelength form)
    pub delta_nu_m: Option<f64>,
    /// Δζ in metres
    pub delta_zeta_m: Option<f64>,
    /// Keep I·Δν fixed when Δν is overridden and I is not.
    pub keep_aperture: Option<bool>,
    /// (ν, ζ) axis assignment, e.g. "yz".
    pub axes: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    /// D_b (m)
    pub d_b_m: Option<f64>,
    /// D_u (m)
    pub d_u_m: Option<f64>,
    /// Scalar far-field link gain g_mt = g_rm.
    pub far_field_gain: Option<f64>,
    /// Keep the transmitter–receiver coupling in the impedance matrix.
    pub direct_link: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    /// P_t (dBm)
    pub pt_dbm: Option<f64>,
    /// N_0 (dBm/Hz)
    pub n0_dbm_per_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleSection {
    /// dipole length in units of λ0
    pub length_wavelengths: Option<f64>,
    /// wire radius in units of λ0
    pub radius_wavelengths: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    /// Z0 (Ω)
    pub z0_ohm: Option<f64>,
    /// ψ0, common phase offset (rad)
    pub psi0_rad: Option<f64>,
}

/// Fully resolved and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: MtpGeometry,
    pub f0: f64,
    pub bandwidth: f64,
    pub k_users: Option<usize>,
    pub theta_min: f64,
    pub theta_max: f64,
    pub incidence: Direction,
    pub phi: f64,
    pub d_b: f64,
    pub d_u: f64,
    pub far_field_gain: f64,
    pub direct_link: bool,
    pub pt_dbm: f64,
    pub n0_dbm_per_hz: f64,
    pub dipole_length_wl: f64,
    pub dipole_radius_wl: f64,
    pub z0: f64,
    pub psi0: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        ScenarioConfig::default()
            .resolve()
            .expect("reference scenario is valid")
    }
}

fn parse_axes(s: &str) -> Result<(Axis, Axis)> {
    let chars: Vec<char> = s.trim().to_ascii_lowercase().chars().collect();
    let axis = |c: char| match c {
        'x' => Ok(Axis::X),
        'y' => Ok(Axis::Y),
        'z' => Ok(Axis::Z),
        _ => Err(Error::validation(format!("unknown axis '{c}'"))),
    };
    if chars.len() != 2 {
        return Err(Error::validation(format!(
            "axes must name two axes, got '{s}'"
        )));
    }
    let (a, b) = (axis(chars[0])?, axis(chars[1])?);
    if a == b {
        return Err(Error::validation("ν and ζ must be distinct axes"));
    }
    Ok((a, b))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::validation(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl ScenarioConfig {
    /// Parses a TOML scenario document.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::validation(format!("scenario: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config serializes")
    }

    /// Resolves defaults and validates ranges.
    pub fn resolve(&self) -> Result<Scenario> {
        let f0 = positive("f0_hz", self.band.f0_hz.unwrap_or(3.6e9))?;
        let bandwidth = positive("bandwidth_hz", self.band.bandwidth_hz.unwrap_or(100e6))?;
        BandPlan::new(f0, bandwidth, 2)?;
        let lambda0 = wavelength(f0);

        let theta_min = self.coverage.theta_min_rad.unwrap_or(PI / 6.0);
        let theta_max = self.coverage.theta_max_rad.unwrap_or(PI / 3.0);
        if !(theta_min.is_finite() && theta_max.is_finite()) {
            return Err(Error::validation("non-finite coverage bounds"));
        }
        if theta_min < -FRAC_PI_2 - 1e-12 || theta_max > FRAC_PI_2 + 1e-12 {
            return Err(Error::validation("coverage must lie within [-π/2, π/2]"));
        }
        if theta_min >= theta_max {
            return Err(Error::validation(format!(
                "empty or inverted coverage interval: θ_m = {theta_min} ≥ θ_M = {theta_max}"
            )));
        }
        let incidence = Direction::new(
            self.coverage.theta_inc_rad.unwrap_or(0.0),
            self.coverage.phi_inc_rad.unwrap_or(0.0),
        )?;
        let phi = self.coverage.phi_rad.unwrap_or(0.0);
        if !phi.is_finite() {
            return Err(Error::validation("non-finite azimuth"));
        }

        let delta_nu = match (self.array.delta_nu_m, self.array.delta_nu_wavelengths) {
            (Some(m), _) => positive("delta_nu_m", m)?,
            (None, Some(wl)) => positive("delta_nu_wavelengths", wl)? * lambda0,
            (None, None) => REFERENCE_DELTA_NU_WL * lambda0,
        };
        let delta_zeta = match (self.array.delta_zeta_m, self.array.delta_zeta_wavelengths) {
            (Some(m), _) => positive("delta_zeta_m", m)?,
            (None, Some(wl)) => positive("delta_zeta_wavelengths", wl)? * lambda0,
            (None, None) => 0.75 * lambda0,
        };
        let keep_aperture = self.array.keep_aperture.unwrap_or(true);
        let i_count = match self.array.i_count {
            Some(i) => i,
            None if keep_aperture => {
                let reference = REFERENCE_I as f64 * REFERENCE_DELTA_NU_WL * lambda0;
                ((reference / delta_nu).round() as usize).max(1)
            }
            None => REFERENCE_I,
        };
        let j_count = self.array.j_count.unwrap_or(4);
        let (nu_axis, zeta_axis) = parse_axes(self.array.axes.as_deref().unwrap_or("yz"))?;
        let geometry = MtpGeometry::centered_on_axes(
            i_count, j_count, delta_nu, delta_zeta, nu_axis, zeta_axis,
        )?;

        let d_b = positive("d_b_m", self.links.d_b_m.unwrap_or(10.0))?;
        let d_u = positive("d_u_m", self.links.d_u_m.unwrap_or(20.0))?;
        let far_field_gain = positive("far_field_gain", self.links.far_field_gain.unwrap_or(1.0))?;

        let pt_dbm = self.power.pt_dbm.unwrap_or(0.0);
        let n0_dbm_per_hz = self.power.n0_dbm_per_hz.unwrap_or(-165.37);
        if !pt_dbm.is_finite() || !n0_dbm_per_hz.is_finite() {
            return Err(Error::validation("non-finite power levels"));
        }

        let dipole_length_wl = positive(
            "length_wavelengths",
            self.dipole.length_wavelengths.unwrap_or(0.46),
        )?;
        let dipole_radius_wl = positive(
            "radius_wavelengths",
            self.dipole.radius_wavelengths.unwrap_or(1.0 / 500.0),
        )?;
        let z0 = positive("z0_ohm", self.circuit.z0_ohm.unwrap_or(50.0))?;
        let psi0 = self.circuit.psi0_rad.unwrap_or(0.0);

        if let Some(k) = self.band.k_users {
            if k < 2 {
                return Err(Error::validation("k_users must be at least 2"));
            }
        }

        Ok(Scenario {
            geometry,
            f0,
            bandwidth,
            k_users: self.band.k_users,
            theta_min,
            theta_max,
            incidence,
            phi,
            d_b,
            d_u,
            far_field_gain,
            direct_link: self.links.direct_link.unwrap_or(false),
            pt_dbm,
            n0_dbm_per_hz,
            dipole_length_wl,
            dipole_radius_wl,
            z0,
            psi0,
        })
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    ScenarioConfig::from_toml(text)?.resolve()
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}

impl Scenario {
    pub fn lambda0(&self) -> f64 {
        wavelength(self.f0)
    }

    pub fn band_plan(&self, k: usize) -> Result<BandPlan> {
        BandPlan::new(self.f0, self.bandwidth, k)
    }

    pub fn tx_position(&self) -> [f64; 3] {
        self.geometry.point_at(self.incidence, self.d_b)
    }

    /// Receiver at elevation `theta` and the beam azimuth.
    pub fn user_position(&self, theta: f64) -> [f64; 3] {
        self.geometry.point_at(
            Direction {
                theta,
                phi: self.phi,
            },
            self.d_u,
        )
    }

    pub fn pt_watts(&self) -> f64 {
        dbm_to_watts(self.pt_dbm)
    }

    /// Noise power spectral density in W/Hz.
    pub fn n0_watts_per_hz(&self) -> f64 {
        dbm_to_watts(self.n0_dbm_per_hz)
    }

    /// Writes every resolved value back as a configuration document.
    pub fn to_config(&self) -> ScenarioConfig {
        let axes = |a: Axis| match a {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        };
        ScenarioConfig {
            band: BandSection {
                f0_hz: Some(self.f0),
                bandwidth_hz: Some(self.bandwidth),
                k_users: self.k_users,
            },
            coverage: CoverageSection {
                theta_min_rad: Some(self.theta_min),
                theta_max_rad: Some(self.theta_max),
                theta_inc_rad: Some(self.incidence.theta),
                phi_inc_rad: Some(self.incidence.phi),
                phi_rad: Some(self.phi),
            },
            array: ArraySection {
                i_count: Some(self.geometry.i_count()),
                j_count: Some(self.geometry.j_count()),
                delta_nu_wavelengths: None,
                delta_zeta_wavelengths: None,
                delta_nu_m: Some(self.geometry.delta_nu()),
                delta_zeta_m: Some(self.geometry.delta_zeta()),
                keep_aperture: Some(false),
                axes: Some(format!(
                    "{}{}",
                    axes(self.geometry.nu_axis()),
                    axes(self.geometry.zeta_axis())
                )),
            },
            links: LinkSection {
                d_b_m: Some(self.d_b),
                d_u_m: Some(self.d_u),
                far_field_gain: Some(self.far_field_gain),
                direct_link: Some(self.direct_link),
            },
            power: PowerSection {
                pt_dbm: Some(self.pt_dbm),
                n0_dbm_per_hz: Some(self.n0_dbm_per_hz),
            },
            dipole: DipoleSection {
                length_wavelengths: Some(self.dipole_length_wl),
                radius_wavelengths: Some(self.dipole_radius_wl),
            },
            circuit: CircuitSection {
                z0_ohm: Some(self.z0),
                psi0_rad: Some(self.psi0),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavenumber_examples() {
        assert_eq!(
            wavenumber(Direction::broadside(), 3.6e9).unwrap(),
            [0.0, 0.0]
        );

        let endfire = Direction::new(FRAC_PI_2, 0.0).unwrap();
        let k = wavenumber(endfire, SPEED_OF_LIGHT).unwrap();
        assert!((k[0] - TAU).abs() < 1e-12 && k[1].abs() < 1e-12);

        let k = wavenumber(Direction::new(PI / 6.0, 0.0).unwrap(), 3.6e9).unwrap();
        let lambda0 = SPEED_OF_LIGHT / 3.6e9;
        assert!((lambda0 - 0.083_275_683).abs() < 1e-8);
        assert!((k[0] - TAU * 0.5 / lambda0).abs() < 1e-9);
        assert!((k[0] - 37.72).abs() < 0.01);
    }

    #[test]
    fn wavenumber_rejects_non_finite() {
        let d = Direction {
            theta: f64::NAN,
            phi: 0.0,
        };
        assert!(wavenumber(d, 1e9).is_err());
        assert!(wavenumber(Direction::broadside(), f64::INFINITY).is_err());
    }

    #[test]
    fn array_response_examples() {
        let g = MtpGeometry::centered(16, 4, 0.04, 0.06).unwrap();
        let a = array_response(&g, Direction::broadside(), 3.6e9).unwrap();
        assert!(a
            .iter()
            .all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let single = MtpGeometry::centered(1, 1, 0.1, 0.1).unwrap();
        let a = array_response(&single, Direction::new(0.7, 1.1).unwrap(), 3.6e9).unwrap();
        assert_eq!(a, vec![Complex64::new(1.0, 0.0)]);

        // Two elements half a wavelength apart, endfire: relative phase π.
        let lambda = 1.0;
        let f = SPEED_OF_LIGHT / lambda;
        let pair =
            MtpGeometry::with_origin(2, 1, lambda / 2.0, 1.0, Axis::Y, Axis::Z, [0.0; 3]).unwrap();
        let a = array_response(&pair, Direction::new(FRAC_PI_2, 0.0).unwrap(), f).unwrap();
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn indexing_follows_column_major_grid() {
        let g = MtpGeometry::centered(16, 4, 0.5, 0.75).unwrap();
        assert_eq!(g.len(), 64);
        // Paper-style one-based n = 17 is zero-based 16: ν = 0, ζ = 1.
        assert_eq!((g.nu_index(16), g.zeta_index(16)), (0, 1));
        assert_eq!((g.nu_index(15), g.zeta_index(15)), (15, 0));
        let c: [f64; 3] = g.positions().iter().fold([0.0; 3], |acc, p| {
            [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]
        });
        assert!(c.iter().all(|v| v.abs() < 1e-12), "grid is centred");
    }

    #[test]
    fn table_defaults() {
        let s = load_scenario("").unwrap();
        let l0 = SPEED_OF_LIGHT / 3.6e9;
        assert_eq!(s.f0, 3.6e9);
        assert_eq!(s.bandwidth, 100e6);
        assert_eq!(s.incidence, Direction::broadside());
        assert!((s.theta_min - PI / 6.0).abs() < 1e-15);
        assert!((s.theta_max - PI / 3.0).abs() < 1e-15);
        assert_eq!(s.phi, 0.0);
        assert_eq!((s.geometry.i_count(), s.geometry.j_count()), (16, 4));
        assert!((s.geometry.delta_nu() - l0 / 2.0).abs() < 1e-15);
        assert!((s.geometry.delta_zeta() - 0.75 * l0).abs() < 1e-15);
        assert_eq!((s.d_b, s.d_u), (10.0, 20.0));
        assert_eq!(s.tx_position(), [10.0, 0.0, 0.0]);
        assert_eq!(s.geometry.normal_axis(), Axis::X);
    }

    #[test]
    fn inverted_coverage_is_rejected() {
        let text = format!(
            "[coverage]\ntheta_min_rad = {}\ntheta_max_rad = {}\n",
            PI / 3.0,
            PI / 6.0
        );
        assert!(matches!(load_scenario(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn quarter_wave_spacing_keeps_aperture() {
        let s = load_scenario("[array]\ndelta_nu_wavelengths = 0.25\n").unwrap();
        assert_eq!(s.geometry.i_count(), 32);
        let explicit =
            load_scenario("[array]\ndelta_nu_wavelengths = 0.25\ni_count = 10\n").unwrap();
        assert_eq!(explicit.geometry.i_count(), 10);
    }

    #[test]
    fn bad_documents() {
        assert!(load_scenario("[array]\ni_count = -3\n").is_err());
        assert!(load_scenario("[links]\nd_b_m = -1.0\n").is_err());
        assert!(load_scenario("[band]\nunknown_key = 1\n").is_err());
        assert!(load_scenario("[array]\naxes = \"yy\"\n").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let s = load_scenario("[array]\ndelta_nu_wavelengths = 0.25\n").unwrap();
        let text = s.to_config().to_toml();
        let again = load_scenario(&text).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn band_plan_sampling() {
        let b = BandPlan::new(3.6e9, 1e8, 5).unwrap();
        let f = b.frequencies();
        assert_eq!(f.first().copied(), Some(3.55e9));
        assert_eq!(f.last().copied(), Some(3.65e9));
        assert!(f.windows(2).all(|w| w[1] > w[0]));
        assert!(BandPlan::new(3.6e9, 1e8, 1).is_err());
        assert!(BandPlan::new(3.6e9, -1.0, 4).is_err());
    }
}
