//! Ideal frequency-selective surface: the angle–frequency map, per-element
//! phases and reactances, the far-field channel, beam bandwidth and the
//! multipath filtering analysis.

use crate::error::{Error, Result};
use crate::scenario::{array_response, wavelength, Direction, MtpGeometry, Scenario};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::sync::Arc;

/// `M(f) = asin(α (f − f0) + γ)`, fitted so the band edges land on the
/// coverage bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleFrequencyMap {
    pub theta_min: f64,
    pub theta_max: f64,
    /// Slope of `sin M(f)` (1/Hz).
    pub alpha: f64,
    /// `sin M(f0)`.
    pub gamma: f64,
    pub f0: f64,
    pub bandwidth: f64,
}

impl AngleFrequencyMap {
    pub fn new(theta_min: f64, theta_max: f64, f0: f64, bandwidth: f64) -> Result<Self> {
        if !(theta_min.is_finite() && theta_max.is_finite()) {
            return Err(Error::validation("non-finite coverage bounds"));
        }
        if theta_min < -FRAC_PI_2 - 1e-12 || theta_max > FRAC_PI_2 + 1e-12 || theta_min >= theta_max
        {
            return Err(Error::validation(format!(
                "coverage must satisfy -π/2 ≤ θ_m < θ_M ≤ π/2 (got {theta_min}, {theta_max})"
            )));
        }
        if !(f0 > 0.0 && bandwidth > 0.0 && f0.is_finite() && bandwidth.is_finite()) {
            return Err(Error::validation("f0 and W must be positive"));
        }
        let (s_min, s_max) = (theta_min.sin(), theta_max.sin());
        Ok(Self {
            theta_min,
            theta_max,
            alpha: (s_max - s_min) / bandwidth,
            gamma: (s_max + s_min) / 2.0,
            f0,
            bandwidth,
        })
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        Self::new(s.theta_min, s.theta_max, s.f0, s.bandwidth)
    }

    /// `α (f − f0) + γ`, the sine of the mapped angle.
    pub fn argument(&self, freq_hz: f64) -> f64 {
        self.alpha * (freq_hz - self.f0) + self.gamma
    }

    pub fn angle(&self, freq_hz: f64) -> Result<f64> {
        map_frequency_to_angle(self, freq_hz)
    }

    /// Frequency served at elevation `theta`.
    pub fn frequency_for(&self, theta: f64) -> f64 {
        self.f0 + (theta.sin() - self.gamma) / self.alpha
    }

    /// Uniform-in-angle reference map, kept for comparisons only.
    pub fn uniform_angle(&self, freq_hz: f64) -> f64 {
        self.theta_min
            + (freq_hz - (self.f0 - self.bandwidth / 2.0)) / self.bandwidth
                * (self.theta_max - self.theta_min)
    }
}

/// Elevation mapped from `freq_hz`.
pub fn map_frequency_to_angle(map: &AngleFrequencyMap, freq_hz: f64) -> Result<f64> {
    let arg = map.argument(freq_hz);
    if !arg.is_finite() || arg.abs() > 1.0 + 1e-12 {
        return Err(Error::OutOfBand {
            freq_hz,
            argument: arg,
        });
    }
    Ok(arg.clamp(-1.0, 1.0).asin())
}

/// Wavelength used inside the per-element phase law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseModel {
    /// `λ = λ0`: phases exactly affine in frequency, realizable by Foster loads.
    #[default]
    Narrowband,
    /// `λ = c / f`: beams land exactly on `M(f)` for the far-field channel.
    Exact,
}

/// Per-element target phases for a given incidence and beam azimuth.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealDesign {
    pub geometry: MtpGeometry,
    pub map: AngleFrequencyMap,
    pub incidence: Direction,
    pub phi: f64,
    pub psi0: f64,
    pub model: PhaseModel,
}

impl IdealDesign {
    pub fn new(
        geometry: MtpGeometry,
        map: AngleFrequencyMap,
        incidence: Direction,
        phi: f64,
    ) -> Self {
        Self {
            geometry,
            map,
            incidence,
            phi,
            psi0: 0.0,
            model: PhaseModel::Narrowband,
        }
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        let mut d = Self::new(
            s.geometry.clone(),
            AngleFrequencyMap::from_scenario(s)?,
            s.incidence,
            s.phi,
        );
        d.psi0 = s.psi0;
        Ok(d)
    }

    pub fn with_model(mut self, model: PhaseModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_psi0(mut self, psi0: f64) -> Self {
        self.psi0 = psi0;
        self
    }

    pub fn lambda0(&self) -> f64 {
        wavelength(self.map.f0)
    }

    fn projected_offset(&self, n: usize) -> (f64, f64) {
        self.geometry.local_offset(n)
    }

    /// Unwrapped target phase `ψ_n(f)` in radians.
    pub fn phase(&self, n: usize, freq_hz: f64) -> f64 {
        let lambda = match self.model {
            PhaseModel::Narrowband => self.lambda0(),
            PhaseModel::Exact => wavelength(freq_hz),
        };
        let (off_nu, off_zeta) = self.projected_offset(n);
        let (u_nu, u_zeta) = self.incidence.direction_cosines();
        let s = self.map.argument(freq_hz);
        let (sp, cp) = self.phi.sin_cos();
        -TAU / lambda * (off_nu * (u_nu + s * cp) + off_zeta * (u_zeta + s * sp)) + self.psi0
    }

    /// `(slope, offset)` with `ψ_n(f) = slope·(f − f0) + offset` under the
    /// narrowband law.
    pub fn linear_coefficients(&self, n: usize) -> (f64, f64) {
        let lambda0 = self.lambda0();
        let (off_nu, off_zeta) = self.projected_offset(n);
        let (u_nu, u_zeta) = self.incidence.direction_cosines();
        let (sp, cp) = self.phi.sin_cos();
        let proj = off_nu * cp + off_zeta * sp;
        let slope = -TAU / lambda0 * proj * self.map.alpha;
        let offset = -TAU / lambda0
            * (off_nu * (u_nu + self.map.gamma * cp) + off_zeta * (u_zeta + self.map.gamma * sp))
            + self.psi0;
        (slope, offset)
    }

    /// `K × N` phase matrix over `freqs`.
    pub fn phase_profile(&self, freqs: &[f64]) -> IdealPhaseProfile {
        let psi = freqs
            .iter()
            .map(|&f| (0..self.geometry.len()).map(|n| self.phase(n, f)).collect())
            .collect();
        IdealPhaseProfile {
            freqs: freqs.to_vec(),
            psi,
            psi0: self.psi0,
            incidence: self.incidence,
        }
    }

    /// Diagonal of `Γ(f)` with every element at its target phase.
    pub fn reflection(&self, freq_hz: f64) -> Vec<Complex64> {
        (0..self.geometry.len())
            .map(|n| Complex64::from_polar(1.0, self.phase(n, freq_hz)))
            .collect()
    }

    /// Target load reactance of element `n`.
    pub fn reactance(&self, n: usize, freq_hz: f64, z0: f64) -> Result<f64> {
        ideal_reactance(self.phase(n, freq_hz), z0)
    }

    /// `h(θ, f)` at the beam azimuth with every element at its target phase.
    pub fn channel(&self, theta: f64, freq_hz: f64) -> Result<Complex64> {
        let dir = Direction::new(theta, self.phi)?;
        ideal_channel_gain(
            &self.geometry,
            &self.reflection(freq_hz),
            self.incidence,
            dir,
            freq_hz,
            1.0,
        )
    }

    /// `|h(θ, f)|²` over a grid, one row per frequency.
    pub fn gain_map(&self, thetas: &[f64], freqs: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        use rayon::prelude::*;
        freqs
            .par_iter()
            .map(|&f| {
                let gamma = self.reflection(f);
                let inc = array_response(&self.geometry, self.incidence, f)?;
                let weighted: Vec<Complex64> = gamma.iter().zip(&inc).map(|(g, a)| g * a).collect();
                thetas
                    .iter()
                    .map(|&t| {
                        let a = array_response(&self.geometry, Direction::new(t, self.phi)?, f)?;
                        Ok(a.iter().zip(&weighted).map(|(x, y)| x * y).sum())
                    })
                    .collect()
            })
            .collect()
    }
}

/// Target phases `ψ_n(f_k)`, row `k`, column `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealPhaseProfile {
    pub freqs: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
    pub psi0: f64,
    pub incidence: Direction,
}

/// Wraps a phase into `(−π, π]`.
pub fn wrap_phase(psi: f64) -> f64 {
    let r = (psi + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Reactance whose reflection coefficient has phase `psi`:
/// `X = Z0 tan((π − ψ)/2)`. Phases that are multiples of `2π` need an open
/// circuit and return `+∞`.
pub fn ideal_reactance(psi: f64, z0: f64) -> Result<f64> {
    if !(z0 > 0.0) {
        return Err(Error::validation("reference impedance must be positive"));
    }
    if !psi.is_finite() {
        return Err(Error::validation("non-finite phase"));
    }
    let reduced = psi.rem_euclid(TAU);
    if reduced == 0.0 || reduced == TAU {
        return Ok(f64::INFINITY);
    }
    Ok(z0 * ((PI - reduced) / 2.0).tan())
}

/// `Γ = (jX − Z0)/(jX + Z0)`; infinite reactance (open) gives `+1`.
pub fn reflection_coefficient(x: f64, z0: f64) -> Complex64 {
    if x.is_infinite() {
        return Complex64::new(1.0, 0.0);
    }
    let jx = Complex64::new(0.0, x);
    (jx - z0) / (jx + z0)
}

/// `h(Θ, f) = g² · aᵀ(Θ, f) Γ a(Θ_inc, f)`.
pub fn ideal_channel_gain(
    geom: &MtpGeometry,
    gamma: &[Complex64],
    incidence: Direction,
    dir: Direction,
    freq_hz: f64,
    link_gain: f64,
) -> Result<Complex64> {
    if gamma.len() != geom.len() {
        return Err(Error::validation(format!(
            "reflection vector has {} entries for {} elements",
            gamma.len(),
            geom.len()
        )));
    }
    let a_out = array_response(geom, dir, freq_hz)?;
    let a_in = array_response(geom, incidence, freq_hz)?;
    let h: Complex64 = a_out
        .iter()
        .zip(gamma)
        .zip(&a_in)
        .map(|((o, g), i)| o * g * i)
        .sum();
    Ok(h * link_gain * link_gain)
}

fn dirichlet(count: usize, x: f64) -> f64 {
    let m = count as f64;
    let s = x.sin();
    if s.abs() < 1e-9 {
        // sin(mx)/sin(x) → m cos(mx)/cos(x) near multiples of π
        m * (m * x).cos() / x.cos()
    } else {
        (m * x).sin() / s
    }
}

/// Beam response `h(θ_k, f_k + Δf) / h_M(k)` in closed form: the product of
/// two Dirichlet kernels with the linear phase of the zero-based grid.
/// Independent of `f_k`.
pub fn frequency_response_at_beam(
    geom: &MtpGeometry,
    map: &AngleFrequencyMap,
    delta_f: f64,
    phi: f64,
) -> Complex64 {
    let lambda0 = wavelength(map.f0);
    let (i, j) = (geom.i_count(), geom.j_count());
    let x_nu = PI * map.alpha * geom.delta_nu() * delta_f * phi.cos() / lambda0;
    let x_zeta = PI * map.alpha * geom.delta_zeta() * delta_f * phi.sin() / lambda0;
    let magnitude = dirichlet(i, x_nu) * dirichlet(j, x_zeta) / geom.len() as f64;
    let phase = -((i - 1) as f64 * x_nu + (j - 1) as f64 * x_zeta);
    Complex64::from_polar(magnitude, phase)
}

/// Beam bandwidth at droop fraction `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub omega: f64,
    /// `2Δf` solving `|h|² = (1 − ω)² |h_M|²` on the main lobe (Hz).
    pub exact_hz: f64,
    /// Third-order Taylor estimate (Hz).
    pub approx_hz: f64,
    /// Offset of the first null from the beam centre (Hz).
    pub first_null_hz: f64,
}

const BANDWIDTH_TOL_HZ: f64 = 1e-3;

pub fn bandwidth(
    map: &AngleFrequencyMap,
    geom: &MtpGeometry,
    omega: f64,
    phi: f64,
) -> Result<BandwidthReport> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::validation(format!(
            "droop fraction must lie in (0, 1), got {omega}"
        )));
    }
    let lambda0 = wavelength(map.f0);
    let nulls = [
        (geom.i_count(), geom.delta_nu() * phi.cos().abs()),
        (geom.j_count(), geom.delta_zeta() * phi.sin().abs()),
    ];
    let first_null = nulls
        .iter()
        .filter(|(count, proj)| *count > 1 && *proj > 1e-15)
        .map(|(count, proj)| lambda0 / (*count as f64 * map.alpha.abs() * proj))
        .fold(f64::INFINITY, f64::min);
    if !first_null.is_finite() {
        return Err(Error::RootNotBracketed(
            "the surface has no frequency selectivity along the beam azimuth".into(),
        ));
    }
    let level = (1.0 - omega).powi(2);
    let g = |df: f64| frequency_response_at_beam(geom, map, df, phi).norm_sqr() - level;
    let (mut lo, mut hi) = (0.0, first_null);
    if !(g(lo) > 0.0 && g(hi) < 0.0) {
        return Err(Error::RootNotBracketed(format!(
            "level {level} not bracketed on [0, {first_null}] Hz"
        )));
    }
    while hi - lo > BANDWIDTH_TOL_HZ {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let exact = lo + hi; // 2 · midpoint
    let proj = geom.delta_nu() * phi.cos().abs();
    let approx = (6.0 * omega).sqrt() * 2.0 * lambda0
        / (PI * geom.i_count() as f64 * map.alpha.abs() * proj);
    Ok(BandwidthReport {
        omega,
        exact_hz: exact,
        approx_hz: approx,
        first_null_hz: first_null,
    })
}

// ---------------------------------------------------------------------------
// Multipath
// ---------------------------------------------------------------------------

/// Angular power distribution `s²(θ)` on `[−π/2, π/2]`.
#[derive(Clone)]
pub enum AngularProfile {
    /// `s(θ) = 1/√π`.
    Isotropic,
    /// `s²(θ) ∝ exp(κ cos(θ − centre))`.
    VonMises { center: f64, concentration: f64 },
    /// User-supplied unnormalized `s²(θ)`.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for AngularProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AngularProfile::Isotropic => write!(f, "Isotropic"),
            AngularProfile::VonMises {
                center,
                concentration,
            } => f
                .debug_struct("VonMises")
                .field("center", center)
                .field("concentration", concentration)
                .finish(),
            AngularProfile::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl AngularProfile {
    fn raw(&self, theta: f64) -> f64 {
        match self {
            AngularProfile::Isotropic => 1.0 / PI,
            // shifted so the peak is 1 and large concentrations stay finite
            AngularProfile::VonMises {
                center,
                concentration,
            } => (concentration * ((theta - center).cos() - 1.0)).exp(),
            AngularProfile::Custom(f) => f(theta),
        }
    }
}

/// Rician multipath on the surface–receiver link.
#[derive(Debug, Clone)]
pub struct MultipathSpec {
    /// Rician factor κ_R (linear).
    pub kappa_r: f64,
    pub profile: AngularProfile,
    /// Initial number of quadrature points over `[−π/2, π/2]` (odd).
    pub grid_points: usize,
    normalization: f64,
}

const MAX_QUADRATURE_POINTS: usize = 1 << 20;
const QUADRATURE_RTOL: f64 = 1e-6;

fn simpson_weights(points: usize) -> Vec<f64> {
    let h = PI / (points - 1) as f64;
    (0..points)
        .map(|i| {
            let c = if i == 0 || i == points - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

fn theta_grid(points: usize) -> Vec<f64> {
    crate::scenario::linspace(-FRAC_PI_2, FRAC_PI_2, points)
}

/// Composite Simpson on `[−π/2, π/2]`, doubling the grid until converged.
fn adaptive_simpson<F: Fn(f64) -> f64 + Sync>(f: F, start_points: usize) -> Result<f64> {
    use rayon::prelude::*;
    let mut points = (start_points.max(3) | 1).max(3);
    let eval = |points: usize| -> f64 {
        let grid = theta_grid(points);
        let w = simpson_weights(points);
        grid.par_iter()
            .zip(w.par_iter())
            .map(|(t, w)| w * f(*t))
            .collect::<Vec<_>>()
            .iter()
            .sum()
    };
    let mut prev = eval(points);
    loop {
        let next_points = 2 * points - 1;
        if next_points > MAX_QUADRATURE_POINTS {
            return Err(Error::Quadrature(format!(
                "no convergence to {QUADRATURE_RTOL:e} with {points} points (last value {prev})"
            )));
        }
        let next = eval(next_points);
        if (next - prev).abs() <= QUADRATURE_RTOL * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        prev = next;
        points = next_points;
    }
}

impl MultipathSpec {
    pub fn new(kappa_r: f64, profile: AngularProfile, grid_points: usize) -> Result<Self> {
        if !(kappa_r >= 0.0) {
            return Err(Error::validation("Rician factor must be non-negative"));
        }
        if grid_points < 3 {
            return Err(Error::validation(
                "at least three quadrature points are required",
            ));
        }
        let normalization = match profile {
            AngularProfile::Isotropic => 1.0,
            _ => {
                let p = profile.clone();
                let total = adaptive_simpson(move |t| p.raw(t), grid_points)?;
                if !(total > 0.0) {
                    return Err(Error::validation("angular profile has no power"));
                }
                1.0 / total
            }
        };
        Ok(Self {
            kappa_r,
            profile,
            grid_points: grid_points | 1,
            normalization,
        })
    }

    pub fn isotropic(kappa_r: f64) -> Result<Self> {
        Self::new(kappa_r, AngularProfile::Isotropic, 1001)
    }

    /// Normalized `s²(θ)`; integrates to one over `[−π/2, π/2]`.
    pub fn s_squared(&self, theta: f64) -> f64 {
        self.profile.raw(theta) * self.normalization
    }
}

fn beam_peak(design: &IdealDesign, freq_hz: f64) -> Result<(f64, Complex64)> {
    let theta_k = design.map.angle(freq_hz)?;
    Ok((theta_k, design.channel(theta_k, freq_hz)?))
}

/// `∫ s²(θ) |h(θ, f_k)|² / |h_M(k)|² dθ`, the diffuse-power fraction passed
/// by the surface.
pub fn diffuse_fraction(spec: &MultipathSpec, design: &IdealDesign, freq_hz: f64) -> Result<f64> {
    let (_, h_max) = beam_peak(design, freq_hz)?;
    let peak = h_max.norm_sqr();
    if !(peak > 0.0) {
        return Err(Error::validation("beam peak has zero gain"));
    }
    let gamma = design.reflection(freq_hz);
    let inc = array_response(&design.geometry, design.incidence, freq_hz)?;
    let weighted: Vec<Complex64> = gamma.iter().zip(&inc).map(|(g, a)| g * a).collect();
    let geom = &design.geometry;
    let phi = design.phi;
    adaptive_simpson(
        |t| {
            let a =
                array_response(geom, Direction { theta: t, phi }, freq_hz).expect("finite angle");
            let h: Complex64 = a.iter().zip(&weighted).map(|(x, y)| x * y).sum();
            spec.s_squared(t) * h.norm_sqr() / peak
        },
        spec.grid_points,
    )
}

/// `κ_eff = κ_R / ∫ s² |h|²/|h_M|² dθ`.
pub fn effective_rician_factor(
    spec: &MultipathSpec,
    design: &IdealDesign,
    freq_hz: f64,
) -> Result<f64> {
    if spec.kappa_r == 0.0 {
        return Ok(0.0);
    }
    if spec.kappa_r.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(spec.kappa_r / diffuse_fraction(spec, design, freq_hz)?)
}

/// One realization of the total channel with its deterministic and diffuse parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipathDraw {
    pub total: Complex64,
    /// `h_M(k)`
    pub los: Complex64,
    /// `Σ s(θ_i) z(θ_i) h(θ_i, f_k) √w_i`, before the Rician weighting.
    pub diffuse: Complex64,
}

/// Precomputed quadrature for repeated Monte Carlo draws.
#[derive(Debug, Clone)]
pub struct MultipathSampler {
    kappa_r: f64,
    los: Complex64,
    /// `s(θ_i) √w_i h(θ_i, f_k)`
    taps: Vec<Complex64>,
}

impl MultipathSampler {
    pub fn new(spec: &MultipathSpec, design: &IdealDesign, freq_hz: f64) -> Result<Self> {
        let (_, los) = beam_peak(design, freq_hz)?;
        let points = spec.grid_points;
        let grid = theta_grid(points);
        let weights = simpson_weights(points);
        let gamma = design.reflection(freq_hz);
        let inc = array_response(&design.geometry, design.incidence, freq_hz)?;
        let weighted: Vec<Complex64> = gamma.iter().zip(&inc).map(|(g, a)| g * a).collect();
        let taps = grid
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| {
                let a = array_response(
                    &design.geometry,
                    Direction {
                        theta: t,
                        phi: design.phi,
                    },
                    freq_hz,
                )?;
                let h: Complex64 = a.iter().zip(&weighted).map(|(x, y)| x * y).sum();
                Ok(h * (spec.s_squared(t) * w).sqrt())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kappa_r: spec.kappa_r,
            los,
            taps,
        })
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> MultipathDraw {
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let diffuse: Complex64 = self
            .taps
            .iter()
            .map(|tap| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                tap * Complex64::new(re * scale, im * scale)
            })
            .sum();
        let (w_los, w_diff) = if self.kappa_r.is_infinite() {
            (1.0, 0.0)
        } else {
            (
                (self.kappa_r / (self.kappa_r + 1.0)).sqrt(),
                (1.0 / (self.kappa_r + 1.0)).sqrt(),
            )
        };
        MultipathDraw {
            total: self.los * w_los + diffuse * w_diff,
            los: self.los,
            diffuse,
        }
    }
}

/// Single seeded realization of the multipath channel at the beam for `f_k`.
pub fn multipath_channel_draw(
    spec: &MultipathSpec,
    design: &IdealDesign,
    freq_hz: f64,
    seed: u64,
) -> Result<MultipathDraw> {
    let sampler = MultipathSampler::new(spec, design, freq_hz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.draw(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::SPEED_OF_LIGHT;

    fn table_map() -> AngleFrequencyMap {
        AngleFrequencyMap::new(PI / 6.0, PI / 3.0, 3.6e9, 100e6).unwrap()
    }

    fn table_design() -> IdealDesign {
        let s = Scenario::default();
        IdealDesign::from_scenario(&s).unwrap()
    }

    #[test]
    fn mapping_endpoints_and_centre() {
        let m = table_map();
        assert!((m.angle(3.55e9).unwrap() - PI / 6.0).abs() < 1e-12);
        assert!((m.angle(3.65e9).unwrap() - PI / 3.0).abs() < 1e-12);
        // γ = (sin 60° + sin 30°)/2
        assert!((m.gamma - 0.683_012_701_892_219_3).abs() < 1e-15);
        let centre = m.angle(3.6e9).unwrap();
        assert!((centre - 0.683_012_701_892_219_3f64.asin()).abs() < 1e-15);
        assert!((centre - 0.751_879).abs() < 1e-6);
        assert!((centre.to_degrees() - 43.08).abs() < 0.01);
    }

    #[test]
    fn mapping_out_of_band() {
        let m = table_map();
        assert!(matches!(m.angle(4.5e9), Err(Error::OutOfBand { .. })));
    }

    #[test]
    fn ideal_phase_examples() {
        let d = table_design();
        // ν = ζ = 0: zero phase at every frequency
        for f in [3.55e9, 3.6e9, 3.65e9] {
            assert_eq!(d.phase(0, f), 0.0);
        }
        // second element along ν: −2π·0.5·0.683
        let p = d.phase(1, 3.6e9);
        assert!((p - (-TAU * 0.5 * 0.683_012_701_892_219_3)).abs() < 1e-12);
        assert!((p + 2.1457).abs() < 1e-4);

        // φ = 0, θ_inc = 0: ψ_n = −(2π ν Δν/λ)(α(f − f0) + γ)
        let f = 3.63e9;
        let n = 5;
        let expected = -TAU * 5.0 * d.geometry.delta_nu() / d.lambda0() * d.map.argument(f);
        assert!((d.phase(n, f) - expected).abs() < 1e-12);
    }

    #[test]
    fn linear_coefficients_reproduce_narrowband_phase() {
        let d = table_design();
        for n in [0, 3, 15, 17, 63] {
            let (a, b) = d.linear_coefficients(n);
            for f in [3.55e9, 3.6e9, 3.647e9] {
                assert!((a * (f - 3.6e9) + b - d.phase(n, f)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reactance_examples() {
        assert!(ideal_reactance(PI, 50.0).unwrap().abs() < 1e-12);
        assert_eq!(ideal_reactance(0.0, 50.0).unwrap(), f64::INFINITY);
        assert_eq!(ideal_reactance(-TAU, 50.0).unwrap(), f64::INFINITY);
        let x = ideal_reactance(FRAC_PI_2, 50.0).unwrap();
        assert!((x - 50.0).abs() < 1e-12);
        assert!((reflection_coefficient(x, 50.0) - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(ideal_reactance(1.0, 0.0).is_err());
    }

    #[test]
    fn reflection_examples() {
        assert_eq!(reflection_coefficient(0.0, 50.0), Complex64::new(-1.0, 0.0));
        assert_eq!(
            reflection_coefficient(f64::INFINITY, 50.0),
            Complex64::new(1.0, 0.0)
        );
        assert!((reflection_coefficient(50.0, 50.0) - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn coherent_and_specular_gains() {
        let d = table_design().with_model(PhaseModel::Exact);
        let f = 3.62e9;
        let theta_k = d.map.angle(f).unwrap();
        let h = d.channel(theta_k, f).unwrap();
        assert!((h.norm() - 64.0).abs() < 1e-9);

        let g = MtpGeometry::centered(8, 1, 0.04, 0.06).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); 8];
        let h = ideal_channel_gain(
            &g,
            &ones,
            Direction::broadside(),
            Direction::broadside(),
            3.6e9,
            1.0,
        )
        .unwrap();
        assert!((h.norm() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn beam_response_closed_form() {
        let d = table_design();
        assert!(
            (frequency_response_at_beam(&d.geometry, &d.map, 0.0, 0.0) - Complex64::new(1.0, 0.0))
                .norm()
                < 1e-15
        );
        let lambda0 = SPEED_OF_LIGHT / 3.6e9;
        let null = lambda0 / (16.0 * d.map.alpha * d.geometry.delta_nu());
        assert!(frequency_response_at_beam(&d.geometry, &d.map, null, 0.0).norm() < 1e-12);
    }

    #[test]
    fn bandwidth_table_scenario() {
        let d = table_design();
        let r = bandwidth(&d.map, &d.geometry, 0.05, 0.0).unwrap();
        assert!((r.exact_hz - 12e6).abs() < 1.2e6, "{r:?}");
        assert!((r.approx_hz - r.exact_hz).abs() / r.exact_hz < 0.15);
        let r_small = bandwidth(&d.map, &d.geometry, 0.01, 0.0).unwrap();
        assert!(r_small.exact_hz < r.exact_hz);
        assert!(bandwidth(&d.map, &d.geometry, 0.0, 0.0).is_err());
        assert!(bandwidth(&d.map, &d.geometry, 1.0, 0.0).is_err());
    }

    #[test]
    fn doubling_elements_halves_estimate() {
        let d = table_design();
        let g2 =
            MtpGeometry::centered(32, 4, d.geometry.delta_nu(), d.geometry.delta_zeta()).unwrap();
        let a = bandwidth(&d.map, &d.geometry, 0.05, 0.0).unwrap().approx_hz;
        let b = bandwidth(&d.map, &g2, 0.05, 0.0).unwrap().approx_hz;
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rician_limits() {
        let d = table_design().with_model(PhaseModel::Exact);
        let zero = MultipathSpec::isotropic(0.0).unwrap();
        assert_eq!(effective_rician_factor(&zero, &d, 3.6e9).unwrap(), 0.0);
        let inf = MultipathSpec::isotropic(f64::INFINITY).unwrap();
        let draw = multipath_channel_draw(&inf, &d, 3.6e9, 7).unwrap();
        assert_eq!(draw.total, draw.los);
    }

    #[test]
    fn seeded_draws_repeat() {
        let d = table_design().with_model(PhaseModel::Exact);
        let spec = MultipathSpec::isotropic(3.0).unwrap();
        let a = multipath_channel_draw(&spec, &d, 3.6e9, 42).unwrap();
        let b = multipath_channel_draw(&spec, &d, 3.6e9, 42).unwrap();
        let c = multipath_channel_draw(&spec, &d, 3.6e9, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.total, c.total);
    }

    #[test]
    fn profile_normalization() {
        let spec = MultipathSpec::new(
            1.0,
            AngularProfile::VonMises {
                center: 0.3,
                concentration: 50.0,
            },
            1001,
        )
        .unwrap();
        let total = adaptive_simpson(|t| spec.s_squared(t), 1001).unwrap();
        assert!((total - 1.0).abs() < 1e-6);
        let iso = MultipathSpec::isotropic(1.0).unwrap();
        assert!((iso.s_squared(0.2) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * TAU + 0.5) - 0.5).abs() < 1e-12);
    }
}
