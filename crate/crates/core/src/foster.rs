//! Foster first-form load synthesis: pole planning, least-squares
//! inductance fit, realized reactance and SPICE netlists.

use crate::error::{Error, Result};
use crate::ideal::{ideal_reactance, reflection_coefficient, wrap_phase, IdealDesign};
use crate::scenario::linspace;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt::Write as _;

/// Poles of one element's target reactance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolePlan {
    pub element: usize,
    /// Integers `ϰ` with `ψ_n(f_p) = 2πϰ` for the in-band poles.
    pub kappas: Vec<i64>,
    /// In-band pole frequencies, increasing (Hz).
    pub poles_hz: Vec<f64>,
    /// Nearest out-of-band pole on each side, when positive (Hz).
    pub guard_poles_hz: Vec<f64>,
    /// `ψ_n(f) = slope·(f − f0) + offset`
    pub slope: f64,
    pub offset: f64,
    pub f0: f64,
    pub band: (f64, f64),
}

impl PolePlan {
    /// `P_n`
    pub fn count(&self) -> usize {
        self.poles_hz.len()
    }

    /// In-band and guard poles, increasing.
    pub fn all_poles(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .poles_hz
            .iter()
            .chain(&self.guard_poles_hz)
            .copied()
            .collect();
        p.sort_by(f64::total_cmp);
        p
    }

    pub fn phase(&self, freq_hz: f64) -> f64 {
        self.slope * (freq_hz - self.f0) + self.offset
    }

    fn pole_for(&self, kappa: i64) -> f64 {
        self.f0 + (TAU * kappa as f64 - self.offset) / self.slope
    }
}

/// Lower bound `⌊(ν_n Δν/λ0)(sin θ_M − sin θ_m)⌋` on the number of in-band poles.
pub fn pole_count_bound(design: &IdealDesign, n: usize) -> usize {
    let (off_nu, _) = design.geometry.local_offset(n);
    let span = design.map.theta_max.sin() - design.map.theta_min.sin();
    (off_nu / design.lambda0() * span * design.phi.cos().abs() + 1e-12).floor() as usize
}

/// Plans the poles of element `n` under the narrowband (affine) phase law.
pub fn plan_poles(design: &IdealDesign, n: usize) -> PolePlan {
    let (slope, offset) = design.linear_coefficients(n);
    let f0 = design.map.f0;
    let band = (
        f0 - design.map.bandwidth / 2.0,
        f0 + design.map.bandwidth / 2.0,
    );
    let mut plan = PolePlan {
        element: n,
        kappas: Vec::new(),
        poles_hz: Vec::new(),
        guard_poles_hz: Vec::new(),
        slope,
        offset,
        f0,
        band,
    };
    if slope == 0.0 {
        return plan;
    }
    let (pa, pb) = (plan.phase(band.0), plan.phase(band.1));
    let (lo, hi) = (pa.min(pb), pa.max(pb));
    let k_min = (lo / TAU).ceil() as i64;
    let k_max = (hi / TAU).floor() as i64;
    let mut in_band: Vec<(f64, i64)> = (k_min..=k_max)
        .map(|k| (plan.pole_for(k), k))
        .filter(|(f, _)| *f > band.0 && *f < band.1)
        .collect();
    in_band.sort_by(|a, b| a.0.total_cmp(&b.0));
    plan.kappas = in_band.iter().map(|p| p.1).collect();
    plan.poles_hz = in_band.iter().map(|p| p.0).collect();
    // poles sitting exactly on a band edge are kept as guards
    plan.guard_poles_hz = (k_min - 1..=k_max + 1)
        .map(|k| plan.pole_for(k))
        .filter(|f| *f > 0.0 && f.is_finite() && (*f <= band.0 || *f >= band.1))
        .collect();
    plan.guard_poles_hz.sort_by(f64::total_cmp);
    plan
}

/// `β(f) = 2πf / (1 − (f/f_p)²)` for each pole; `None` exactly at a pole.
pub fn reactance_basis(poles_hz: &[f64], freq_hz: f64) -> Option<Vec<f64>> {
    poles_hz
        .iter()
        .map(|&fp| {
            let den = 1.0 - (freq_hz / fp).powi(2);
            (den != 0.0).then(|| TAU * freq_hz / den)
        })
        .collect()
}

/// Parallel LC section of the Foster chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcSection {
    pub inductance: f64,
    pub capacitance: f64,
}

impl LcSection {
    /// Section resonating at `pole_hz` with inductance `l`.
    pub fn from_pole(l: f64, pole_hz: f64) -> Self {
        Self {
            inductance: l,
            capacitance: 1.0 / (l * (TAU * pole_hz).powi(2)),
        }
    }

    pub fn pole_hz(&self) -> f64 {
        1.0 / (TAU * (self.inductance * self.capacitance).sqrt())
    }

    pub fn reactance(&self, freq_hz: f64) -> f64 {
        let w = TAU * freq_hz;
        let den = 1.0 - w * w * self.inductance * self.capacitance;
        if den == 0.0 {
            f64::INFINITY
        } else {
            w * self.inductance / den
        }
    }
}

/// Single series component closing the chain to ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeriesElement {
    Inductor(f64),
    Capacitor(f64),
}

impl SeriesElement {
    pub fn reactance(&self, freq_hz: f64) -> f64 {
        let w = TAU * freq_hz;
        match *self {
            SeriesElement::Inductor(l) => w * l,
            SeriesElement::Capacitor(c) => -1.0 / (w * c),
        }
    }
}

/// Foster first-form load of one element. An empty chain is a short;
/// `open` marks an open-circuit stub.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FosterCircuit {
    pub element: usize,
    pub sections: Vec<LcSection>,
    pub series: Option<SeriesElement>,
    pub open: bool,
}

impl FosterCircuit {
    pub fn open(element: usize) -> Self {
        Self {
            element,
            sections: Vec::new(),
            series: None,
            open: true,
        }
    }

    pub fn reactance(&self, freq_hz: f64) -> f64 {
        realized_reactance(self, freq_hz)
    }

    pub fn reflection(&self, freq_hz: f64, z0: f64) -> num_complex::Complex64 {
        reflection_coefficient(self.reactance(freq_hz), z0)
    }

    pub fn is_realizable(&self) -> bool {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        self.sections
            .iter()
            .all(|s| positive(s.inductance) && positive(s.capacitance))
            && match self.series {
                Some(SeriesElement::Inductor(v)) | Some(SeriesElement::Capacitor(v)) => positive(v),
                None => true,
            }
    }
}

/// `X̄(f) = Σ 2πf L_p / (1 − (2πf)² L_p C_p)` plus the series element;
/// `+∞` for an open stub or exactly at a pole.
pub fn realized_reactance(circ: &FosterCircuit, freq_hz: f64) -> f64 {
    if circ.open {
        return f64::INFINITY;
    }
    let mut x = circ.series.map_or(0.0, |s| s.reactance(freq_hz));
    for s in &circ.sections {
        let v = s.reactance(freq_hz);
        if v.is_infinite() {
            return f64::INFINITY;
        }
        x += v;
    }
    x
}

/// Linear solver that produced the fitted inductances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Cholesky,
    Svd,
    /// Constant target, no fit needed.
    Direct,
}

/// Diagnostics of one element's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub element: usize,
    pub pole_count: usize,
    pub used_samples: usize,
    pub masked_samples: usize,
    /// `‖X̄ − X‖ / ‖X‖` over the unmasked samples.
    pub reactance_rel_rms: f64,
    /// RMS of the wrapped reflection-phase error (rad).
    pub phase_rms_rad: f64,
    pub condition: f64,
    pub method: FitMethod,
    pub retries: usize,
}

/// Fit settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Uniform samples across the band.
    pub grid_points: usize,
    /// Samples closer than this to any pole are excluded (Hz).
    pub mask_halfwidth_hz: f64,
    pub guard_poles: bool,
    pub max_retries: usize,
}

impl FitOptions {
    /// 201-point grid with a `ΔW/4` mask.
    pub fn with_beam_bandwidth(delta_w_hz: f64) -> Self {
        Self {
            grid_points: 201,
            mask_halfwidth_hz: delta_w_hz / 4.0,
            guard_poles: true,
            max_retries: 3,
        }
    }
}

const COND_FALLBACK: f64 = 1e10;
const COND_SINGULAR: f64 = 1e15;

/// Fits `X̄(f) = Σ L_p β_p(f)` to `samples` of `(f, X)` by least squares on
/// the normal equations, with one section per pole in `poles_hz`.
/// Returns the inductances, the condition estimate and the method used.
pub fn fit_inductances(
    poles_hz: &[f64],
    samples: &[(f64, f64)],
) -> Result<(Vec<f64>, f64, FitMethod)> {
    fit_chain(poles_hz, None, samples)
}

/// Series term appended to the pole basis: `ωL` or `−1/(ωC)`, fitted through
/// `L` or `1/C` respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SeriesKind {
    Inductor,
    Capacitor,
}

fn fit_chain(
    poles_hz: &[f64],
    series: Option<SeriesKind>,
    samples: &[(f64, f64)],
) -> Result<(Vec<f64>, f64, FitMethod)> {
    let p = poles_hz.len() + usize::from(series.is_some());
    if samples.len() < p || poles_hz.is_empty() {
        return Err(Error::validation(format!(
            "{} samples cannot determine {p} inductances",
            samples.len()
        )));
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(f, _)| {
            let mut r = reactance_basis(poles_hz, f)
                .ok_or_else(|| Error::validation(format!("sample at a pole ({f} Hz)")))?;
            match series {
                Some(SeriesKind::Inductor) => r.push(TAU * f),
                Some(SeriesKind::Capacitor) => r.push(-1.0 / (TAU * f)),
                None => {}
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    // column scaling keeps Q well conditioned across very different poles
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            rows.iter()
                .map(|r| r[j] * r[j])
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE)
        })
        .collect();
    let mut q = DMatrix::<f64>::zeros(p, p);
    let mut mu = DVector::<f64>::zeros(p);
    for (r, &(_, x)) in rows.iter().zip(samples) {
        for i in 0..p {
            let bi = r[i] / scale[i];
            mu[i] += x * bi;
            for j in 0..p {
                q[(i, j)] += bi * r[j] / scale[j];
            }
        }
    }
    let sv = q.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(cond < COND_SINGULAR) {
        return Err(Error::Singular {
            context: "Foster normal equations".into(),
            condition: cond,
        });
    }
    let (scaled, method) = match q.clone().cholesky() {
        Some(ch) if cond <= COND_FALLBACK => (ch.solve(&mu), FitMethod::Cholesky),
        _ => {
            let b = DMatrix::from_fn(samples.len(), p, |i, j| rows[i][j] / scale[j]);
            let x = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
            let sol = b
                .svd(true, true)
                .solve(&x, 1e-14 * smax.sqrt())
                .map_err(|e| Error::Singular {
                    context: format!("Foster least squares: {e}"),
                    condition: cond,
                })?;
            (sol, FitMethod::Svd)
        }
    };
    Ok(((0..p).map(|j| scaled[j] / scale[j]).collect(), cond, method))
}

fn mask(samples: &[f64], poles: &[f64], halfwidth: f64) -> Vec<bool> {
    samples
        .iter()
        .map(|f| poles.iter().all(|p| (f - p).abs() > halfwidth))
        .collect()
}

fn fit_errors(circ: &FosterCircuit, pts: &[(f64, f64)], phases: &[f64], z0: f64) -> (f64, f64) {
    let (mut num, mut den, mut ph) = (0.0, 0.0, 0.0);
    for (&(f, x), &psi) in pts.iter().zip(phases) {
        let xr = realized_reactance(circ, f);
        if x.is_finite() && xr.is_finite() {
            num += (xr - x).powi(2);
            den += x * x;
        }
        ph += wrap_phase(reflection_coefficient(xr, z0).arg() - psi).powi(2);
    }
    let rel = if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    };
    (rel, (ph / pts.len().max(1) as f64).sqrt())
}

/// Synthesizes the load of element `n` for the affine target phase.
pub fn synthesize_element(
    design: &IdealDesign,
    n: usize,
    z0: f64,
    opts: &FitOptions,
) -> Result<(FosterCircuit, FitReport)> {
    let plan = plan_poles(design, n);
    let grid = linspace(plan.band.0, plan.band.1, opts.grid_points.max(2));
    if plan.slope == 0.0 {
        let psi = plan.offset;
        let x = ideal_reactance(psi, z0)?;
        let circ = if x.is_infinite() {
            FosterCircuit::open(n)
        } else {
            let w0 = TAU * plan.f0;
            let series = if x > 0.0 {
                Some(SeriesElement::Inductor(x / w0))
            } else if x < 0.0 {
                Some(SeriesElement::Capacitor(-1.0 / (w0 * x)))
            } else {
                None
            };
            FosterCircuit {
                element: n,
                sections: Vec::new(),
                series,
                open: false,
            }
        };
        let pts: Vec<(f64, f64)> = grid.iter().map(|&f| (f, x)).collect();
        let phases = vec![psi; pts.len()];
        let (rel, ph) = if x.is_infinite() {
            (0.0, fit_errors(&circ, &pts, &phases, z0).1)
        } else {
            fit_errors(&circ, &pts, &phases, z0)
        };
        return Ok((
            circ,
            FitReport {
                element: n,
                pole_count: 0,
                used_samples: grid.len(),
                masked_samples: 0,
                reactance_rel_rms: rel,
                phase_rms_rad: ph,
                condition: 1.0,
                method: FitMethod::Direct,
                retries: 0,
            },
        ));
    }

    let mut guards = if opts.guard_poles {
        plan.guard_poles_hz.clone()
    } else {
        Vec::new()
    };
    let step = (plan.band.1 - plan.band.0) / (grid.len() - 1) as f64;
    let mut retries = 0;
    loop {
        let shift = if retries == 0 {
            0.0
        } else {
            step * (0.37 * retries as f64).fract()
        };
        let shifted: Vec<f64> = grid.iter().map(|&f| (f + shift).min(plan.band.1)).collect();
        let mut poles = plan.poles_hz.clone();
        poles.extend_from_slice(&guards);
        poles.sort_by(f64::total_cmp);
        let keep = mask(&shifted, &poles, opts.mask_halfwidth_hz);
        let mut pts = Vec::new();
        let mut phases = Vec::new();
        for (&f, k) in shifted.iter().zip(&keep) {
            if !k {
                continue;
            }
            let psi = plan.phase(f);
            let x = ideal_reactance(psi, z0)?;
            if x.is_finite() {
                pts.push((f, x));
                phases.push(psi);
            }
        }
        let masked = shifted.len() - pts.len();
        let fitted = fit_chain(&poles, None, &pts);
        let (mut ls, cond, method) = match fitted {
            Ok(v) => v,
            Err(Error::Singular { .. }) | Err(Error::Validation(_))
                if retries < opts.max_retries =>
            {
                retries += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        // a guard section with a non-physical value is dropped and the fit repeated
        if let Some(bad) = poles
            .iter()
            .zip(&ls)
            .find(|(p, l)| !(**l > 0.0) && guards.contains(p))
            .map(|(p, _)| *p)
        {
            guards.retain(|g| *g != bad);
            continue;
        }
        if let Some((p, l)) = poles.iter().zip(&ls).find(|(_, l)| !(**l > 0.0)) {
            return Err(Error::NonRealizable {
                element: n,
                reason: format!("fitted inductance {l:e} H for the pole at {p} Hz"),
            });
        }
        let residual = |ls: &[f64], series: Option<SeriesElement>| -> f64 {
            pts.iter()
                .map(|&(f, x)| {
                    let xr = poles
                        .iter()
                        .zip(ls)
                        .map(|(&p, &l)| LcSection::from_pole(l, p).reactance(f))
                        .sum::<f64>()
                        + series.map_or(0.0, |s| s.reactance(f));
                    (xr - x).powi(2)
                })
                .sum()
        };
        let mut series = None;
        let mut best = residual(&ls, None);
        for kind in [SeriesKind::Inductor, SeriesKind::Capacitor] {
            let Ok((v, _, _)) = fit_chain(&poles, Some(kind), &pts) else {
                continue;
            };
            let (chain, extra) = v.split_at(poles.len());
            if !(extra[0] > 0.0) || chain.iter().any(|l| !(*l > 0.0)) {
                continue;
            }
            let element = match kind {
                SeriesKind::Inductor => SeriesElement::Inductor(extra[0]),
                SeriesKind::Capacitor => SeriesElement::Capacitor(1.0 / extra[0]),
            };
            let r = residual(chain, Some(element));
            if r < best {
                best = r;
                ls = chain.to_vec();
                series = Some(element);
            }
        }
        let circ = FosterCircuit {
            element: n,
            sections: poles
                .iter()
                .zip(&ls)
                .map(|(&p, &l)| LcSection::from_pole(l, p))
                .collect(),
            series,
            open: false,
        };
        let (rel, ph) = fit_errors(&circ, &pts, &phases, z0);
        return Ok((
            circ,
            FitReport {
                element: n,
                pole_count: plan.count(),
                used_samples: pts.len(),
                masked_samples: masked,
                reactance_rel_rms: rel,
                phase_rms_rad: ph,
                condition: cond,
                method,
                retries,
            },
        ));
    }
}

/// Synthesizes every element in parallel.
pub fn synthesize_all(
    design: &IdealDesign,
    z0: f64,
    opts: &FitOptions,
) -> Vec<Result<(FosterCircuit, FitReport)>> {
    use rayon::prelude::*;
    (0..design.geometry.len())
        .into_par_iter()
        .map(|n| synthesize_element(design, n, z0, opts))
        .collect()
}

/// Reads a target curve from CSV rows `f_hz,X_ohm` (header optional).
pub fn read_target_curve(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::parse(idx + 1, "expected f_hz,X_ohm"));
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(f), Ok(x)) => out.push((f, x)),
            _ if idx == 0 => continue,
            _ => return Err(Error::parse(idx + 1, "non-numeric value")),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Netlists
// ---------------------------------------------------------------------------

/// Engineering notation with `digits` significant digits, trailing zeros trimmed.
pub fn format_engineering(value: f64, digits: usize) -> String {
    const SUFFIX: [(i32, &str); 10] = [
        (-15, "f"),
        (-12, "p"),
        (-9, "n"),
        (-6, "u"),
        (-3, "m"),
        (0, ""),
        (3, "k"),
        (6, "meg"),
        (9, "g"),
        (12, "t"),
    ];
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let digits = digits.max(1);
    let rounded: f64 = format!("{:.*e}", digits - 1, value)
        .parse()
        .unwrap_or(value);
    let exp3 = ((rounded.abs().log10().floor() as i32).div_euclid(3) * 3).clamp(-15, 12);
    let suffix = SUFFIX
        .iter()
        .find(|s| s.0 == exp3)
        .map(|s| s.1)
        .unwrap_or("");
    let mantissa = rounded / 10f64.powi(exp3);
    let int_digits = (mantissa.abs().log10().floor() as i32 + 1).max(1) as usize;
    let decimals = digits.saturating_sub(int_digits);
    let mut s = format!("{:.*}", decimals, mantissa);
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    format!("{s}{suffix}")
}

/// Parses a SPICE value with optional engineering suffix.
pub fn parse_engineering(text: &str) -> Option<f64> {
    let t = text.trim().to_ascii_lowercase();
    let end = t
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e')))
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    // a trailing 'e' without exponent digits belongs to no suffix we know
    let (num, rest) = t.split_at(end);
    let base: f64 = num.parse().ok()?;
    let mult = if rest.starts_with("meg") {
        1e6
    } else {
        match rest.chars().next() {
            None => 1.0,
            Some('f') => 1e-15,
            Some('p') => 1e-12,
            Some('n') => 1e-9,
            Some('u') => 1e-6,
            Some('m') => 1e-3,
            Some('k') => 1e3,
            Some('g') => 1e9,
            Some('t') => 1e12,
            Some(_) => return None,
        }
    };
    Some(base * mult)
}

pub fn subcircuit_name(element: usize) -> String {
    format!("MTP_E{element}")
}

/// SPICE subcircuit: series chain of parallel LC sections from `port` to
/// ground, values printed with `digits` significant digits.
pub fn export_netlist(circ: &FosterCircuit, digits: usize) -> Result<String> {
    if !circ.is_realizable() {
        return Err(Error::NonRealizable {
            element: circ.element,
            reason: "component values must be positive and finite".into(),
        });
    }
    let name = subcircuit_name(circ.element);
    let mut out = String::new();
    writeln!(
        out,
        "* element {}: {} parallel LC section(s)",
        circ.element,
        circ.sections.len()
    )
    .unwrap();
    writeln!(out, ".SUBCKT {name} port").unwrap();
    if circ.open {
        writeln!(out, "* open-circuit stub").unwrap();
        writeln!(out, "IOPEN port 0 0").unwrap();
    } else {
        let links = circ.sections.len() + usize::from(circ.series.is_some());
        let node = |i: usize| {
            if i == 0 {
                "port".to_string()
            } else if i == links {
                "0".to_string()
            } else {
                format!("n{i}")
            }
        };
        if links == 0 {
            writeln!(out, "* short-circuit stub").unwrap();
            writeln!(out, "VSHORT port 0 0").unwrap();
        }
        for (i, s) in circ.sections.iter().enumerate() {
            let (a, b) = (node(i), node(i + 1));
            writeln!(
                out,
                "L{} {a} {b} {}",
                i + 1,
                format_engineering(s.inductance, digits)
            )
            .unwrap();
            writeln!(
                out,
                "C{} {a} {b} {}",
                i + 1,
                format_engineering(s.capacitance, digits)
            )
            .unwrap();
        }
        if let Some(series) = circ.series {
            let (a, b) = (node(links - 1), node(links));
            match series {
                SeriesElement::Inductor(l) => {
                    writeln!(out, "LS {a} {b} {}", format_engineering(l, digits)).unwrap()
                }
                SeriesElement::Capacitor(c) => {
                    writeln!(out, "CS {a} {b} {}", format_engineering(c, digits)).unwrap()
                }
            }
        }
    }
    writeln!(out, ".ENDS {name}").unwrap();
    Ok(out)
}

/// Parses a subcircuit written by [`export_netlist`].
pub fn parse_netlist(text: &str) -> Result<FosterCircuit> {
    let mut element = None;
    let mut open = false;
    let mut short = false;
    // (from, to) -> (L, C)
    let mut links: Vec<(String, String, Option<f64>, Option<f64>)> = Vec::new();
    let mut ended = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let head = toks[0].to_ascii_uppercase();
        if head == ".SUBCKT" {
            let name = toks
                .get(1)
                .ok_or_else(|| Error::parse(line_no, "missing subcircuit name"))?;
            let idx = name
                .to_ascii_uppercase()
                .strip_prefix("MTP_E")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| {
                    Error::parse(line_no, format!("unexpected subcircuit name '{name}'"))
                })?;
            element = Some(idx);
            continue;
        }
        if head == ".ENDS" {
            ended = true;
            continue;
        }
        if toks.len() != 4 {
            return Err(Error::parse(
                line_no,
                "expected <name> <node> <node> <value>",
            ));
        }
        let value = parse_engineering(toks[3])
            .ok_or_else(|| Error::parse(line_no, format!("bad value '{}'", toks[3])))?;
        let (a, b) = (toks[1].to_string(), toks[2].to_string());
        match head.chars().next() {
            Some('I') => open = true,
            Some('V') => short = true,
            Some(kind @ ('L' | 'C')) => {
                let slot = match links.iter_mut().find(|l| l.0 == a && l.1 == b) {
                    Some(s) => s,
                    None => {
                        links.push((a, b, None, None));
                        links.last_mut().unwrap()
                    }
                };
                let target = if kind == 'L' {
                    &mut slot.2
                } else {
                    &mut slot.3
                };
                if target.replace(value).is_some() {
                    return Err(Error::parse(
                        line_no,
                        "duplicate component between the same nodes",
                    ));
                }
            }
            _ => {
                return Err(Error::parse(
                    line_no,
                    format!("unsupported element '{}'", toks[0]),
                ))
            }
        }
    }
    let element = element.ok_or_else(|| Error::parse(0, "no .SUBCKT line"))?;
    if !ended {
        return Err(Error::parse(text.lines().count(), "missing .ENDS"));
    }
    if open {
        return Ok(FosterCircuit::open(element));
    }
    let mut circ = FosterCircuit {
        element,
        sections: Vec::new(),
        series: None,
        open: false,
    };
    if short && links.is_empty() {
        return Ok(circ);
    }
    let mut node = "port".to_string();
    while node != "0" {
        let link = links
            .iter()
            .find(|l| l.0 == node)
            .ok_or_else(|| Error::parse(0, format!("chain is broken at node '{node}'")))?;
        match (link.2, link.3) {
            (Some(l), Some(c)) => circ.sections.push(LcSection {
                inductance: l,
                capacitance: c,
            }),
            (Some(l), None) if link.1 == "0" => circ.series = Some(SeriesElement::Inductor(l)),
            (None, Some(c)) if link.1 == "0" => circ.series = Some(SeriesElement::Capacitor(c)),
            _ => {
                return Err(Error::parse(
                    0,
                    format!("unexpected components after node '{node}'"),
                ))
            }
        }
        node = link.1.clone();
    }
    Ok(circ)
}

/// Manifest CSV row per element.
pub fn manifest_csv(rows: &[(FosterCircuit, FitReport, PolePlan)]) -> String {
    let mut out = String::from(
        "element,pole_count,poles_hz,inductances_h,capacitances_f,series,reactance_rel_rms,phase_rms_rad\n",
    );
    for (c, r, p) in rows {
        let join = |v: Vec<String>| v.join(";");
        let series = match c.series {
            _ if c.open => "open".to_string(),
            Some(SeriesElement::Inductor(l)) => format!("L={l:.6e}"),
            Some(SeriesElement::Capacitor(v)) => format!("C={v:.6e}"),
            None if c.sections.is_empty() => "short".to_string(),
            None => String::new(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6e},{:.6e}",
            c.element,
            r.pole_count,
            join(p.poles_hz.iter().map(|f| format!("{f:.6}")).collect()),
            join(
                c.sections
                    .iter()
                    .map(|s| format!("{:.6e}", s.inductance))
                    .collect()
            ),
            join(
                c.sections
                    .iter()
                    .map(|s| format!("{:.6e}", s.capacitance))
                    .collect()
            ),
            series,
            r.reactance_rel_rms,
            r.phase_rms_rad
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideal::bandwidth;
    use crate::scenario::Scenario;
    use std::f64::consts::PI;

    fn design() -> IdealDesign {
        IdealDesign::from_scenario(&Scenario::default()).unwrap()
    }

    fn options(d: &IdealDesign) -> FitOptions {
        FitOptions::with_beam_bandwidth(bandwidth(&d.map, &d.geometry, 0.05, 0.0).unwrap().exact_hz)
    }

    #[test]
    fn first_element_has_no_poles() {
        let d = design();
        let plan = plan_poles(&d, 0);
        assert_eq!(plan.count(), 0);
        assert!(plan.guard_poles_hz.is_empty());
    }

    #[test]
    fn last_column_pole_bound() {
        let d = design();
        assert_eq!(pole_count_bound(&d, 15), 2);
        let plan = plan_poles(&d, 15);
        assert!(plan.count() >= 2);
        for &f in &plan.poles_hz {
            let psi = d.phase(15, f);
            let r = psi - TAU * (psi / TAU).round();
            assert!(r.abs() < 1e-6, "{psi}");
        }
        assert!(plan.poles_hz.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn pole_count_is_monotone_in_nu() {
        let d = design();
        let counts: Vec<usize> = (0..16).map(|n| plan_poles(&d, n).count()).collect();
        let bounds: Vec<usize> = (0..16).map(|n| pole_count_bound(&d, n)).collect();
        assert!(bounds.windows(2).all(|w| w[1] >= w[0]));
        assert!(counts.iter().zip(&bounds).all(|(c, b)| c >= b));
    }

    #[test]
    fn basis_examples() {
        let fp = 3.6e9;
        let f = fp / 2f64.sqrt();
        let b = reactance_basis(&[fp], f).unwrap()[0];
        assert!((b - 4.0 * PI * f).abs() < 1e-6 * b);
        assert!(reactance_basis(&[fp], fp).is_none());
        let eps = 1e3;
        assert!(reactance_basis(&[fp], fp - eps).unwrap()[0] > 0.0);
        assert!(reactance_basis(&[fp], fp + eps).unwrap()[0] < 0.0);
        assert!(reactance_basis(&[fp], 1.0).unwrap()[0] < 7.0);
    }

    #[test]
    fn exact_single_term_recovery() {
        let fp = 3.61e9;
        let l = 2.7e-9;
        let samples: Vec<(f64, f64)> = linspace(3.55e9, 3.65e9, 101)
            .into_iter()
            .filter(|f| (f - fp).abs() > 1e6)
            .map(|f| (f, l * reactance_basis(&[fp], f).unwrap()[0]))
            .collect();
        let (ls, _, method) = fit_inductances(&[fp], &samples).unwrap();
        assert_eq!(method, FitMethod::Cholesky);
        assert!((ls[0] - l).abs() / l < 1e-12);
    }

    #[test]
    fn normal_equations_match_dense_least_squares() {
        let poles = [3.4e9, 3.57e9, 3.63e9, 3.9e9];
        let samples: Vec<(f64, f64)> = linspace(3.55e9, 3.65e9, 201)
            .into_iter()
            .filter(|f| poles.iter().all(|p| (f - p).abs() > 3e6))
            .map(|f| (f, 50.0 * ((f - 3.6e9) / 7e6).sin() + 20.0))
            .collect();
        let (ls, _, _) = fit_inductances(&poles, &samples).unwrap();
        // oracle: QR of the unscaled design matrix
        let b = DMatrix::from_fn(samples.len(), 4, |i, j| {
            reactance_basis(&poles, samples[i].0).unwrap()[j]
        });
        let x = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
        let qr = b.clone().qr();
        let rhs = qr.q().transpose() * &x;
        let oracle = qr.r().solve_upper_triangular(&rhs).unwrap();
        for j in 0..4 {
            assert!(
                (ls[j] - oracle[j]).abs() <= 1e-9 * oracle[j].abs(),
                "{j}: {} vs {}",
                ls[j],
                oracle[j]
            );
        }
    }

    #[test]
    fn resonance_and_realizability() {
        let d = design();
        let opts = options(&d);
        for n in [1, 2, 7, 15, 31, 63] {
            let (c, r) = synthesize_element(&d, n, 50.0, &opts).unwrap();
            assert!(c.is_realizable(), "element {n}");
            let plan = plan_poles(&d, n);
            let poles = plan.all_poles();
            for s in &c.sections {
                let p = poles
                    .iter()
                    .copied()
                    .find(|p| (s.pole_hz() - p).abs() / p < 1e-9)
                    .unwrap();
                assert!((TAU * p * (s.inductance * s.capacitance).sqrt() - 1.0).abs() < 1e-9);
            }
            assert!(plan.poles_hz.iter().all(|p| c
                .sections
                .iter()
                .any(|s| (s.pole_hz() - p).abs() / p < 1e-9)));
            assert!(r.reactance_rel_rms < 0.05, "element {n}: {r:?}");
            assert!(r.phase_rms_rad < 0.1, "element {n}: {r:?}");
        }
    }

    #[test]
    fn reactance_increases_between_poles() {
        let d = design();
        let (c, _) = synthesize_element(&d, 15, 50.0, &options(&d)).unwrap();
        let poles = plan_poles(&d, 15).all_poles();
        let fs = linspace(3.55e9, 3.65e9, 1000);
        for w in fs.windows(2) {
            if poles.iter().any(|p| *p > w[0] && *p <= w[1]) {
                continue;
            }
            assert!(c.reactance(w[1]) > c.reactance(w[0]));
        }
        for p in plan_poles(&d, 15).poles_hz {
            let below = c.reactance(p - 1e3);
            let above = c.reactance(p + 1e3);
            assert!(below > 1e4 && above < -1e4, "{below} {above}");
        }
    }

    #[test]
    fn constant_targets() {
        let d = design();
        let (c, r) = synthesize_element(&d, 0, 50.0, &options(&d)).unwrap();
        assert!(c.open);
        assert_eq!(r.method, FitMethod::Direct);
        assert_eq!(c.reactance(3.6e9), f64::INFINITY);
        let shifted = d.clone().with_psi0(PI / 2.0);
        let (c, _) = synthesize_element(&shifted, 0, 50.0, &options(&d)).unwrap();
        assert!(matches!(c.series, Some(SeriesElement::Inductor(_))));
        assert!((c.reactance(3.6e9) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn engineering_format() {
        assert_eq!(format_engineering(1e-9, 6), "1n");
        assert_eq!(format_engineering(1e-12, 6), "1p");
        assert_eq!(format_engineering(2.2e6, 6), "2.2meg");
        assert_eq!(format_engineering(1.234_567_89e-9, 6), "1.23457n");
        assert_eq!(format_engineering(999.999_9e-12, 6), "1n");
        assert_eq!(parse_engineering("2.2MEG"), Some(2.2e6));
        assert_eq!(parse_engineering("4.7m"), Some(4.7e-3));
        assert_eq!(parse_engineering("1e-9"), Some(1e-9));
        assert_eq!(parse_engineering("3x"), None);
    }

    #[test]
    fn single_section_netlist() {
        let c = FosterCircuit {
            element: 4,
            sections: vec![LcSection {
                inductance: 1e-9,
                capacitance: 1e-12,
            }],
            series: None,
            open: false,
        };
        let text = export_netlist(&c, 6).unwrap();
        assert!(text.contains("L1 port 0 1n"));
        assert!(text.contains("C1 port 0 1p"));
        assert_eq!(parse_netlist(&text).unwrap(), c);
    }

    #[test]
    fn netlist_round_trip() {
        let d = design();
        let opts = options(&d);
        for n in [0, 5, 15] {
            let (c, _) = synthesize_element(&d, n, 50.0, &opts).unwrap();
            let back = parse_netlist(&export_netlist(&c, 12).unwrap()).unwrap();
            assert_eq!(back.sections.len(), c.sections.len());
            for f in linspace(3.55e9, 3.65e9, 97) {
                let (a, b) = (c.reactance(f), back.reactance(f));
                if a.is_finite() {
                    assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{f}: {a} vs {b}");
                }
            }
            // six digits keep every component to printed precision
            let six = parse_netlist(&export_netlist(&c, 6).unwrap()).unwrap();
            for (x, y) in c.sections.iter().zip(&six.sections) {
                assert!((x.inductance - y.inductance).abs() <= 5e-6 * x.inductance);
                assert!((x.capacitance - y.capacitance).abs() <= 5e-6 * x.capacitance);
            }
        }
    }

    #[test]
    fn non_realizable_refused() {
        let c = FosterCircuit {
            element: 1,
            sections: vec![LcSection {
                inductance: -1e-9,
                capacitance: 1e-12,
            }],
            series: None,
            open: false,
        };
        assert!(matches!(
            export_netlist(&c, 6),
            Err(Error::NonRealizable { .. })
        ));
    }

    #[test]
    fn target_curve_csv() {
        let pts = read_target_curve("f_hz,X_ohm\n1e9,5\n2e9,-3.5\n").unwrap();
        assert_eq!(pts, vec![(1e9, 5.0), (2e9, -3.5)]);
        assert!(read_target_curve("1e9,5\nabc,1\n").is_err());
    }
}
