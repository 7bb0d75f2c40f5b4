//! Induced-EMF impedances of parallel thin-wire dipoles with sinusoidal
//! current distributions.

use crate::error::{Error, Result};
use crate::scenario::wavelength;
use crate::special::ein;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Free-space wave impedance (Ω).
pub const ETA0: f64 = 376.730_313_412;

/// Center-fed thin wire dipole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleSpec {
    /// Total length (m).
    pub length: f64,
    /// Wire radius (m).
    pub radius: f64,
    /// Unit vector along the wire.
    pub orientation: [f64; 3],
}

impl DipoleSpec {
    pub fn new(length: f64, radius: f64, orientation: [f64; 3]) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::validation("dipole length must be positive"));
        }
        if !(radius > 0.0 && radius / length < 0.05) {
            return Err(Error::validation(format!(
                "thin-wire model needs 0 < radius/length < 0.05 (got {})",
                radius / length
            )));
        }
        let norm = orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::validation(
                "dipole orientation must be a non-zero vector",
            ));
        }
        Ok(Self {
            length,
            radius,
            orientation: orientation.map(|c| c / norm),
        })
    }

    /// `0.46 λ0` long, radius `λ0/500`, along z.
    pub fn reference(f0: f64) -> Self {
        let lambda0 = wavelength(f0);
        Self {
            length: 0.46 * lambda0,
            radius: lambda0 / 500.0,
            orientation: [0.0, 0.0, 1.0],
        }
    }

    /// Dimensions scaled by `λ0`, along `orientation`.
    pub fn in_wavelengths(
        f0: f64,
        length_wl: f64,
        radius_wl: f64,
        orientation: [f64; 3],
    ) -> Result<Self> {
        let lambda0 = wavelength(f0);
        Self::new(length_wl * lambda0, radius_wl * lambda0, orientation)
    }

    pub fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    /// Splits `p_b − p_a` into lateral distance and axial offset.
    pub fn decompose(&self, p_a: [f64; 3], p_b: [f64; 3]) -> (f64, f64) {
        let r = [p_b[0] - p_a[0], p_b[1] - p_a[1], p_b[2] - p_a[2]];
        let axial: f64 = r.iter().zip(&self.orientation).map(|(a, b)| a * b).sum();
        let total = r.iter().map(|c| c * c).sum::<f64>();
        let lateral = (total - axial * axial).max(0.0).sqrt();
        (lateral, axial)
    }

    fn feed_factor(&self, k: f64) -> Result<f64> {
        let s = (k * self.half_length()).sin();
        if s.abs() < 1e-9 {
            return Err(Error::validation(
                "dipole length is a multiple of the wavelength; the feed current vanishes",
            ));
        }
        Ok(s)
    }
}

/// `∫_{za}^{zb} G_c(z) e^{jσkz} dz` with `G_c = e^{−jkR}/R`,
/// `R = √(d² + (z − c)²)`.
fn piece(k: f64, d: f64, c: f64, sigma: f64, za: f64, zb: f64) -> Result<Complex64> {
    let s = -sigma;
    let phase = Complex64::from_polar(1.0, sigma * k * c);
    let (xa, xb) = (za - c, zb - c);
    if d == 0.0 {
        if xa * xb <= 0.0 {
            return Err(Error::validation("collinear dipoles overlap"));
        }
        if s * xa < 0.0 {
            // R + s x vanishes identically: the integrand reduces to 1/|x|
            return Ok(phase * xa.signum() * (xb.abs() / xa.abs()).ln());
        }
    }
    let u = |x: f64| {
        let r = d.hypot(x);
        let sum = if s * x >= 0.0 {
            r + x.abs()
        } else {
            d * d / (r + x.abs())
        };
        k * sum
    };
    Ok(phase * s * (ein(u(xb)) - ein(u(xa))))
}

/// Mutual impedance referred to the current maxima. Dipole 1 (half length
/// `h1`) sits at the origin, dipole 2 (half length `h2`) at lateral distance
/// `d` and axial offset `dz`.
fn mutual_at_maxima(k: f64, h1: f64, h2: f64, d: f64, dz: f64) -> Result<Complex64> {
    let sources = [(h1, 1.0), (-h1, 1.0), (0.0, -2.0 * (k * h1).cos())];
    let (lo, mid, hi) = (dz - h2, dz, dz + h2);
    let e_lo_p = Complex64::from_polar(1.0, k * (h2 - dz));
    let e_up_p = Complex64::from_polar(1.0, k * (h2 + dz));
    let mut total = Complex64::new(0.0, 0.0);
    for (c, w) in sources {
        let lower =
            e_lo_p * piece(k, d, c, 1.0, lo, mid)? - e_lo_p.conj() * piece(k, d, c, -1.0, lo, mid)?;
        let upper =
            e_up_p * piece(k, d, c, -1.0, mid, hi)? - e_up_p.conj() * piece(k, d, c, 1.0, mid, hi)?;
        total += (lower + upper) * w;
    }
    Ok(total * (ETA0 / (8.0 * PI)))
}

/// Input impedance of an isolated dipole at `freq_hz`.
pub fn self_impedance(spec: &DipoleSpec, freq_hz: f64) -> Result<Complex64> {
    let k = TAU / wavelength(freq_hz);
    let h = spec.half_length();
    let f = spec.feed_factor(k)?;
    Ok(mutual_at_maxima(k, h, h, spec.radius, 0.0)? / (f * f))
}

/// Input-referred mutual impedance between two parallel dipoles centred at
/// `p_a` and `p_b`. Symmetric in its arguments.
pub fn mutual_impedance(
    spec: &DipoleSpec,
    p_a: [f64; 3],
    p_b: [f64; 3],
    freq_hz: f64,
) -> Result<Complex64> {
    let (lateral, axial) = spec.decompose(p_a, p_b);
    let k = TAU / wavelength(freq_hz);
    let h = spec.half_length();
    if lateral < 2.0 * spec.radius && axial.abs() < spec.length + 2.0 * spec.radius {
        return Err(Error::validation(format!(
            "dipole volumes overlap (lateral {lateral} m, axial {axial} m)"
        )));
    }
    // collinear wires closer than a radius count as collinear
    let d = if lateral < spec.radius { 0.0 } else { lateral };
    let f = spec.feed_factor(k)?;
    Ok(mutual_at_maxima(k, h, h, d, axial.abs())? / (f * f))
}
