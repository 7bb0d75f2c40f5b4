//! Sine and cosine integrals.
//!
//! `Si(x) = ∫₀ˣ sin t / t dt` and `Ci(x) = γ + ln x + ∫₀ˣ (cos t − 1) / t dt`,
//! evaluated with the power series for small arguments and a Lentz continued
//! fraction of the exponential integral `E₁(ix)` otherwise.

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_CUTOFF: f64 = 2.0;
const EPS: f64 = 1e-16;
const MAX_ITER: usize = 200;

/// Returns `(Ci(x), Si(x))` for `x > 0`.
///
/// `x == 0` yields `(-inf, 0)`. Negative arguments are not used by the
/// impedance kernels and are rejected with NaN.
pub fn cisi(x: f64) -> (f64, f64) {
    if x.is_nan() || x < 0.0 {
        return (f64::NAN, f64::NAN);
    }
    if x == 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if x.is_infinite() {
        return (0.0, FRAC_PI_2);
    }
    if x < SERIES_CUTOFF {
        series(x)
    } else {
        continued_fraction(x)
    }
}

/// Sine integral.
pub fn si(x: f64) -> f64 {
    if x < 0.0 {
        return -cisi(-x).1;
    }
    cisi(x).1
}

/// Cosine integral, `x > 0`.
pub fn ci(x: f64) -> f64 {
    cisi(x).0
}

/// `Ci(u) − j Si(u)`, the antiderivative of `e^{−ju}/u` on `u > 0`.
pub fn ein(u: f64) -> Complex64 {
    let (c, s) = cisi(u);
    Complex64::new(c, -s)
}

fn series(x: f64) -> (f64, f64) {
    let x2 = x * x;
    // Si: sum_k (-1)^k x^(2k+1) / ((2k+1)(2k+1)!)
    let mut si = 0.0;
    let mut fact_term = x; // x^(2k+1)/(2k+1)!
    let mut k = 0usize;
    loop {
        let n = (2 * k + 1) as f64;
        let term = fact_term / n;
        si += if k % 2 == 0 { term } else { -term };
        if term.abs() < EPS * si.abs() || k > MAX_ITER {
            break;
        }
        fact_term *= x2 / ((n + 1.0) * (n + 2.0));
        k += 1;
    }
    // Ci: gamma + ln x + sum_{k>=1} (-1)^k x^(2k) / (2k (2k)!)
    let mut sum = 0.0;
    let mut fact_term = x2 / 2.0; // x^(2k)/(2k)! at k = 1
    let mut k = 1usize;
    loop {
        let n = (2 * k) as f64;
        let term = fact_term / n;
        sum += if k % 2 == 1 { -term } else { term };
        if term.abs() < EPS * (EULER_GAMMA + x.ln() + sum).abs().max(EPS) || k > MAX_ITER {
            break;
        }
        fact_term *= x2 / ((n + 1.0) * (n + 2.0));
        k += 1;
    }
    (EULER_GAMMA + x.ln() + sum, si)
}

fn continued_fraction(x: f64) -> (f64, f64) {
    const FPMIN: f64 = 1e-300;
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / FPMIN, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 1..MAX_ITER {
        let a = -((i * i) as f64);
        b += 2.0;
        d = (d * a + b).inv();
        c = b + c.inv() * a;
        let del = c * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < EPS {
            break;
        }
    }
    let h = Complex64::new(x.cos(), -x.sin()) * h;
    (-h.re, FRAC_PI_2 + h.im)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from Abramowitz & Stegun table 5.1.
    #[test]
    fn tabulated_values() {
        let cases = [
            (0.5, -0.177_784_078_806_612_3, 0.493_107_418_043_066_7),
            (1.0, 0.337_403_922_900_968_1, 0.946_083_070_367_183_0),
            (2.0, 0.422_980_828_774_864_9, 1.605_412_976_802_694_8),
            (5.0, -0.190_029_749_656_643_9, 1.549_931_244_944_674_1),
            (10.0, -0.045_456_433_004_455_4, 1.658_347_594_218_874_0),
        ];
        for (x, ci_ref, si_ref) in cases {
            let (c, s) = cisi(x);
            assert!((c - ci_ref).abs() < 1e-13, "Ci({x}) = {c}");
            assert!((s - si_ref).abs() < 1e-13, "Si({x}) = {s}");
        }
    }

    #[test]
    fn continuity_at_cutoff() {
        let below = series(SERIES_CUTOFF);
        let above = continued_fraction(SERIES_CUTOFF);
        assert!((below.0 - above.0).abs() < 1e-13);
        assert!((below.1 - above.1).abs() < 1e-13);
    }

    #[test]
    fn large_argument_asymptotics() {
        let x = 3000.0;
        let (c, s) = cisi(x);
        // Leading terms: Ci ~ sin x / x, Si ~ pi/2 - cos x / x.
        assert!((c - x.sin() / x).abs() < 1e-6);
        assert!((s - (FRAC_PI_2 - x.cos() / x)).abs() < 1e-6);
    }

    #[test]
    fn derivative_of_ein_matches_integrand() {
        for &u in &[0.3, 1.7, 2.5, 12.0, 400.0] {
            let h = 1e-5 * u;
            let d = (ein(u + h) - ein(u - h)) / (2.0 * h);
            let expected = Complex64::new(0.0, -u).exp() / u;
            assert!(
                (d - expected).norm() < 1e-7 * expected.norm().max(1.0),
                "u = {u}"
            );
        }
    }

    #[test]
    fn small_argument_log_behaviour() {
        let x = 1e-8;
        assert!((ci(x) - (EULER_GAMMA + x.ln())).abs() < 1e-15);
        assert!((si(x) - x).abs() < 1e-20);
        assert_eq!(si(-1.0), -si(1.0));
    }
}
