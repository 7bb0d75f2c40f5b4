//! Alternating optimization of the per-element affine phase laws
//! `ψ_{k,n} = α_n (f_k − f0) + γ_n` with rank-one (Sherman–Morrison) updates.

use crate::em::network::{checked_inverse, realistic_channel, CMatrix, CVector, MultiportNetwork};
use crate::error::{Error, Result};
use crate::ideal::IdealDesign;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Affine phase law of every element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    /// Slopes `α_n` (rad/Hz).
    pub alpha: Vec<f64>,
    /// Offsets `γ_n` in `[0, 2π)` (rad).
    pub gamma: Vec<f64>,
}

fn wrap_2pi(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl PhaseProfile {
    pub fn new(alpha: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if alpha.len() != gamma.len() {
            return Err(Error::validation("α and γ lengths differ"));
        }
        if alpha.iter().chain(&gamma).any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite phase coefficients"));
        }
        Ok(Self {
            alpha,
            gamma: gamma.into_iter().map(wrap_2pi).collect(),
        })
    }

    /// Ideal affine coefficients of `design`.
    pub fn from_design(design: &IdealDesign) -> Self {
        let (alpha, gamma) = (0..design.geometry.len())
            .map(|n| {
                let (a, b) = design.linear_coefficients(n);
                (a, wrap_2pi(b))
            })
            .unzip();
        Self { alpha, gamma }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `Ψ_{k,n}` for the frequency offset `f_k − f0`.
    pub fn psi(&self, offset_hz: f64, n: usize) -> f64 {
        self.alpha[n] * offset_hz + self.gamma[n]
    }

    /// Reflection vector `e^{jΨ_{k,·}}`.
    pub fn reflections(&self, offset_hz: f64) -> Vec<Complex64> {
        (0..self.len())
            .map(|n| Complex64::from_polar(1.0, self.psi(offset_hz, n)))
            .collect()
    }

    /// CSV `n,alpha_rad_per_hz,gamma_rad`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,alpha_rad_per_hz,gamma_rad\n");
        for n in 0..self.len() {
            out.push_str(&format!(
                "{n},{:.17e},{:.17e}\n",
                self.alpha[n], self.gamma[n]
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (idx == 0 && line.starts_with('n')) {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = (f.len() == 3)
                .then(|| Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?)))
                .flatten();
            rows.push(parsed.ok_or_else(|| Error::parse(idx + 1, "expected n,alpha,gamma"))?);
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(Error::parse(
                0,
                "element indices must run 0..N−1 without gaps",
            ));
        }
        Self::new(
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
        )
    }
}

/// One user network per sampled frequency plus the link budget.
#[derive(Debug, Clone)]
pub struct CapacityProblem {
    pub nets: Vec<MultiportNetwork>,
    pub freqs: Vec<f64>,
    pub f0: f64,
    pub bandwidth: f64,
    pub pt_w: f64,
    pub n0_w_per_hz: f64,
}

impl CapacityProblem {
    pub fn new(
        nets: Vec<MultiportNetwork>,
        freqs: Vec<f64>,
        f0: f64,
        bandwidth: f64,
        pt_w: f64,
        n0_w_per_hz: f64,
    ) -> Result<Self> {
        if nets.is_empty() || nets.len() != freqs.len() {
            return Err(Error::validation(
                "one network per sampled frequency is required",
            ));
        }
        let n = nets[0].len();
        if nets.iter().any(|net| net.len() != n) {
            return Err(Error::validation(
                "user networks disagree on the element count",
            ));
        }
        if !(bandwidth > 0.0 && pt_w > 0.0 && n0_w_per_hz > 0.0) {
            return Err(Error::validation(
                "bandwidth, transmit power and noise density must be positive",
            ));
        }
        Ok(Self {
            nets,
            freqs,
            f0,
            bandwidth,
            pt_w,
            n0_w_per_hz,
        })
    }

    pub fn users(&self) -> usize {
        self.nets.len()
    }

    pub fn elements(&self) -> usize {
        self.nets[0].len()
    }

    /// `P_t / (W N0)`
    pub fn snr_scale(&self) -> f64 {
        self.pt_w / (self.bandwidth * self.n0_w_per_hz)
    }

    fn offsets(&self) -> Vec<f64> {
        self.freqs.iter().map(|f| f - self.f0).collect()
    }

    fn rate_term(&self, gain: f64) -> f64 {
        (self.bandwidth / self.users() as f64) * (1.0 + gain * self.snr_scale()).log2()
    }

    fn sum_rate(&self, h: &[Complex64]) -> f64 {
        h.iter().map(|v| self.rate_term(v.norm_sqr())).sum()
    }
}

/// Full-load capacity and its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    /// `C_M` (bit/s)
    pub capacity_bps: f64,
    /// `C_M / W` (bit/s/Hz)
    pub normalized: f64,
    /// `R_k` (bit/s)
    pub rates_bps: Vec<f64>,
    /// `|h̃(k)|²`
    pub gains: Vec<f64>,
    /// `C_M` after each outer iteration, starting with the initial value.
    pub trace: Vec<f64>,
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pt_w: f64,
    pub n0_w_per_hz: f64,
    /// Number of scalar channel evaluations spent in grid scans.
    pub evaluations: u64,
}

/// Capacity for explicit per-user reflection vectors.
pub fn capacity_for_reflections(
    problem: &CapacityProblem,
    gammas: &[Vec<Complex64>],
) -> Result<CapacityReport> {
    if gammas.len() != problem.users() {
        return Err(Error::validation(
            "one reflection vector per user is required",
        ));
    }
    let h = problem
        .nets
        .par_iter()
        .zip(gammas.par_iter())
        .enumerate()
        .map(|(k, (net, g))| {
            realistic_channel(net, g).map_err(|e| match e {
                Error::Singular { context, condition } => Error::Singular {
                    context: format!("user {k}: {context}"),
                    condition,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from_channels(problem, &h))
}

fn report_from_channels(problem: &CapacityProblem, h: &[Complex64]) -> CapacityReport {
    let gains: Vec<f64> = h.iter().map(|v| v.norm_sqr()).collect();
    let rates: Vec<f64> = gains.iter().map(|&g| problem.rate_term(g)).collect();
    let total: f64 = rates.iter().sum();
    CapacityReport {
        capacity_bps: total,
        normalized: total / problem.bandwidth,
        rates_bps: rates,
        gains,
        trace: vec![total],
        mu: 0.0,
        iterations: 0,
        converged: true,
        pt_w: problem.pt_w,
        n0_w_per_hz: problem.n0_w_per_hz,
        evaluations: 0,
    }
}

/// `C_M` for an affine profile, by direct inversion.
pub fn capacity(problem: &CapacityProblem, profile: &PhaseProfile) -> Result<CapacityReport> {
    let gammas: Vec<Vec<Complex64>> = problem
        .offsets()
        .iter()
        .map(|&o| profile.reflections(o))
        .collect();
    capacity_for_reflections(problem, &gammas)
}

/// Explicit split `(Γ⁻¹ − S)⁻¹ = A − B / (e^{jψ_n} + c)` for element `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneSplit {
    /// `Γ⁻¹` with entry `n` zeroed.
    pub delta_minus_n: Vec<Complex64>,
    /// `(Δ_{−n} − S)⁻¹`
    pub a: CMatrix,
    /// `A e_n e_nᵀ A`
    pub b: CMatrix,
    /// `A_nn`
    pub c: Complex64,
}

pub fn rank_one_split(gamma_inv: &[Complex64], s_ss: &CMatrix, n: usize) -> Result<RankOneSplit> {
    let size = gamma_inv.len();
    if s_ss.nrows() != size || n >= size {
        return Err(Error::validation("dimension mismatch in rank-one split"));
    }
    let mut delta = gamma_inv.to_vec();
    delta[n] = Complex64::new(0.0, 0.0);
    let mut m = -s_ss.clone();
    for (i, d) in delta.iter().enumerate() {
        m[(i, i)] += d;
    }
    let a = checked_inverse(&m, "Δ_{−n} − S_SS")?;
    let col = a.column(n).into_owned();
    let row = a.row(n).into_owned();
    let b = &col * &row;
    let c = a[(n, n)];
    Ok(RankOneSplit {
        delta_minus_n: delta,
        a,
        b,
        c,
    })
}

/// Channel of one user as a function of element `n`'s reflection,
/// `h(ψ) = h − x_n y_n t / (1 + t G_nn)` with `t = e^{−jψ} − Γ_n⁻¹`.
/// Algebraically equal to `D + F / (e^{jψ} + c)` but finite when
/// `S_SS` has a zero row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementParams {
    pub h: Complex64,
    pub xy: Complex64,
    pub delta: Complex64,
    pub g_nn: Complex64,
}

impl ElementParams {
    /// `rot = e^{jψ}`
    pub fn channel(&self, rot: Complex64) -> Complex64 {
        let t = rot.conj() - self.delta;
        self.h - self.xy * t / (Complex64::new(1.0, 0.0) + t * self.g_nn)
    }
}

/// Uniform search grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SearchGrid {
    /// `n_alpha` slopes over `[α_min, α_max]` and `n_gamma` offsets over `[0, 2π)`.
    pub fn new(alpha_min: f64, alpha_max: f64, n_alpha: usize, n_gamma: usize) -> Result<Self> {
        if n_alpha == 0 || n_gamma == 0 {
            return Err(Error::validation("search grids need at least one point"));
        }
        if !(alpha_min <= alpha_max) {
            return Err(Error::validation("α range is empty"));
        }
        Ok(Self {
            alpha: crate::scenario::linspace(alpha_min, alpha_max, n_alpha),
            gamma: (0..n_gamma)
                .map(|j| TAU * j as f64 / n_gamma as f64)
                .collect(),
        })
    }

    /// Spans the signed range of the ideal slopes of `design`.
    pub fn for_design(design: &IdealDesign, n_alpha: usize, n_gamma: usize) -> Result<Self> {
        let slopes: Vec<f64> = (0..design.geometry.len())
            .map(|n| design.linear_coefficients(n).0)
            .collect();
        let lo = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi, n_alpha, n_gamma)
    }

    pub fn size(&self) -> usize {
        self.alpha.len() * self.gamma.len()
    }
}

/// Best point of one element's grid scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemResult {
    pub alpha: f64,
    pub gamma: f64,
    pub capacity: f64,
    /// Whether a grid point strictly beat the incumbent.
    pub improved: bool,
    pub evaluations: u64,
}

/// Relative margin a candidate needs over the incumbent.
const ACCEPT_RTOL: f64 = 1e-12;

/// Exhaustive scan over `grid` for one element; `params[k]` holds the
/// user-`k` coefficients and `offsets[k] = f_k − f0`. The incumbent
/// `(alpha, gamma)` competes with the grid and wins ties.
pub fn element_subproblem(
    problem: &CapacityProblem,
    params: &[ElementParams],
    offsets: &[f64],
    grid: &SearchGrid,
    incumbent: (f64, f64),
) -> SubproblemResult {
    let users = params.len();
    let eval = |alpha: f64, gamma: f64| -> f64 {
        params
            .iter()
            .zip(offsets)
            .map(|(p, &o)| {
                problem.rate_term(
                    p.channel(Complex64::from_polar(1.0, alpha * o + gamma))
                        .norm_sqr(),
                )
            })
            .sum()
    };
    let base = eval(incumbent.0, incumbent.1);
    let rot_gamma: Vec<Complex64> = grid
        .gamma
        .iter()
        .map(|&g| Complex64::from_polar(1.0, g))
        .collect();
    let rows: Vec<(f64, usize)> = grid
        .alpha
        .par_iter()
        .map(|&a| {
            let rot_alpha: Vec<Complex64> = offsets
                .iter()
                .map(|&o| Complex64::from_polar(1.0, a * o))
                .collect();
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (j, rg) in rot_gamma.iter().enumerate() {
                let v: f64 = params
                    .iter()
                    .zip(&rot_alpha)
                    .map(|(p, ra)| problem.rate_term(p.channel(ra * rg).norm_sqr()))
                    .sum();
                if v > best.0 {
                    best = (v, j);
                }
            }
            best
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for (i, &(v, j)) in rows.iter().enumerate() {
        if v > best.0 {
            best = (v, i, j);
        }
    }
    let evaluations = (grid.size() * users + users) as u64;
    if best.0 > base + ACCEPT_RTOL * base.abs() {
        SubproblemResult {
            alpha: grid.alpha[best.1],
            gamma: grid.gamma[best.2],
            capacity: best.0,
            improved: true,
            evaluations,
        }
    } else {
        SubproblemResult {
            alpha: incumbent.0,
            gamma: incumbent.1,
            capacity: base,
            improved: false,
            evaluations,
        }
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub epsilon: f64,
    pub max_outer: usize,
    /// Recompute `C_M` by full inversion after every accepted update and
    /// fail if it drifts from the tracked value.
    pub verify: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_outer: 50,
            verify: false,
        }
    }
}

/// Per-user inverse `G = (Γ⁻¹ − S)⁻¹` with `x = s_RMᵀG` and `y = G s_MT`.
struct UserState {
    g: CMatrix,
    x: CVector,
    y: CVector,
    /// Current `Γ⁻¹` diagonal.
    delta: Vec<Complex64>,
    h: Complex64,
}

impl UserState {
    fn new(net: &MultiportNetwork, gamma: &[Complex64], k: usize) -> Result<Self> {
        let delta: Vec<Complex64> = gamma.iter().map(|g| g.inv()).collect();
        let mut m = -net.s_ss.clone();
        for (i, d) in delta.iter().enumerate() {
            m[(i, i)] += d;
        }
        let g = checked_inverse(&m, &format!("Γ⁻¹ − S_SS for user {k}"))?;
        let x = g.tr_mul(&net.s_rm);
        let y = &g * &net.s_mt;
        let h = net.s_rt + net.s_rm.dot(&y);
        Ok(Self { g, x, y, delta, h })
    }

    fn params(&self, n: usize) -> ElementParams {
        ElementParams {
            h: self.h,
            xy: self.x[n] * self.y[n],
            delta: self.delta[n],
            g_nn: self.g[(n, n)],
        }
    }

    /// Rank-one update after element `n` switches to reflection `gamma_new`.
    fn update(&mut self, net: &MultiportNetwork, n: usize, gamma_new: Complex64) {
        let d_new = gamma_new.inv();
        let change = d_new - self.delta[n];
        if change == Complex64::new(0.0, 0.0) {
            return;
        }
        let col = self.g.column(n).into_owned();
        let row = self.g.row(n).into_owned();
        let scale = change / (Complex64::new(1.0, 0.0) + change * self.g[(n, n)]);
        self.g -= (&col * &row) * scale;
        self.delta[n] = d_new;
        self.x = self.g.tr_mul(&net.s_rm);
        self.y = &self.g * &net.s_mt;
        self.h = net.s_rt + net.s_rm.dot(&self.y);
    }
}

fn relative_change(new: f64, old: f64) -> f64 {
    if old == 0.0 {
        (new - old).abs()
    } else {
        ((new - old) / old).abs()
    }
}

fn states_for(problem: &CapacityProblem, gammas: &[Vec<Complex64>]) -> Result<Vec<UserState>> {
    problem
        .nets
        .par_iter()
        .zip(gammas.par_iter())
        .enumerate()
        .map(|(k, (net, g))| UserState::new(net, g, k))
        .collect()
}

fn verify_tracked(
    problem: &CapacityProblem,
    gammas: &[Vec<Complex64>],
    tracked: f64,
) -> Result<()> {
    let direct = capacity_for_reflections(problem, gammas)?.capacity_bps;
    if relative_change(tracked, direct) > 1e-8 {
        return Err(Error::Singular {
            context: format!("incremental capacity {tracked} drifted from direct value {direct}"),
            condition: f64::NAN,
        });
    }
    Ok(())
}

/// Alternating optimization under the affine phase constraint.
pub fn optimize(
    problem: &CapacityProblem,
    initial: &PhaseProfile,
    grid: &SearchGrid,
    opts: &OptimizeOptions,
) -> Result<(PhaseProfile, CapacityReport)> {
    let n_el = problem.elements();
    if initial.len() != n_el {
        return Err(Error::validation(
            "profile length differs from the element count",
        ));
    }
    let offsets = problem.offsets();
    let mut profile = initial.clone();
    let mut gammas: Vec<Vec<Complex64>> = offsets.iter().map(|&o| profile.reflections(o)).collect();
    let mut states = states_for(problem, &gammas)?;
    let mut current = problem.sum_rate(&states.iter().map(|s| s.h).collect::<Vec<_>>());
    let mut trace = vec![current];
    let mut evaluations = 0u64;
    let mut mu = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_outer {
        iterations += 1;
        let start = current;
        for n in 0..n_el {
            let params: Vec<ElementParams> = states.iter().map(|s| s.params(n)).collect();
            let res = element_subproblem(
                problem,
                &params,
                &offsets,
                grid,
                (profile.alpha[n], profile.gamma[n]),
            );
            evaluations += res.evaluations;
            if !res.improved {
                continue;
            }
            profile.alpha[n] = res.alpha;
            profile.gamma[n] = res.gamma;
            for (k, (state, net)) in states.iter_mut().zip(&problem.nets).enumerate() {
                let g = Complex64::from_polar(1.0, profile.psi(offsets[k], n));
                gammas[k][n] = g;
                state.update(net, n, g);
            }
            current = problem.sum_rate(&states.iter().map(|s| s.h).collect::<Vec<_>>());
            if opts.verify {
                verify_tracked(problem, &gammas, current)?;
            }
        }
        // refresh the inverses to stop rank-one drift
        states = states_for(problem, &gammas)?;
        current = problem.sum_rate(&states.iter().map(|s| s.h).collect::<Vec<_>>());
        // keep the trace monotone against round-off in the refresh
        current = current.max(start);
        trace.push(current);
        mu = relative_change(current, start);
        if mu <= opts.epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("optimizer stopped after {iterations} outer iterations (μ = {mu:e})");
    }
    let mut report = capacity(problem, &profile)?;
    report.trace = trace;
    report.mu = mu;
    report.iterations = iterations;
    report.converged = converged;
    report.evaluations = evaluations;
    Ok((profile, report))
}

/// Per-user, per-element free phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreePhases {
    /// `psi[k][n]` in `[0, 2π)`.
    pub psi: Vec<Vec<f64>>,
}

impl FreePhases {
    pub fn from_profile(profile: &PhaseProfile, offsets: &[f64]) -> Self {
        Self {
            psi: offsets
                .iter()
                .map(|&o| {
                    (0..profile.len())
                        .map(|n| wrap_2pi(profile.psi(o, n)))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn reflections(&self) -> Vec<Vec<Complex64>> {
        self.psi
            .iter()
            .map(|row| row.iter().map(|&p| Complex64::from_polar(1.0, p)).collect())
            .collect()
    }
}

/// Unconstrained baseline: every `ψ_{k,n}` is searched independently over
/// `grid.gamma`, starting from `start`.
pub fn optimize_unconstrained(
    problem: &CapacityProblem,
    start: &FreePhases,
    grid: &SearchGrid,
    opts: &OptimizeOptions,
) -> Result<(FreePhases, CapacityReport)> {
    let n_el = problem.elements();
    if start.psi.len() != problem.users() || start.psi.iter().any(|r| r.len() != n_el) {
        return Err(Error::validation(
            "phase matrix shape differs from users × elements",
        ));
    }
    let mut phases = start.clone();
    let mut gammas = phases.reflections();
    let mut states = states_for(problem, &gammas)?;
    let mut current = problem.sum_rate(&states.iter().map(|s| s.h).collect::<Vec<_>>());
    let mut trace = vec![current];
    let rot: Vec<Complex64> = grid
        .gamma
        .iter()
        .map(|&g| Complex64::from_polar(1.0, g))
        .collect();
    let mut evaluations = 0u64;
    let mut mu = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_outer {
        iterations += 1;
        let start_value = current;
        // the objective separates over users, so each user runs its own sweep
        let results: Vec<(Vec<f64>, u64)> = states
            .par_iter_mut()
            .zip(problem.nets.par_iter())
            .zip(phases.psi.par_iter())
            .map(|((state, net), row)| {
                let mut row = row.clone();
                let mut evals = 0u64;
                for n in 0..n_el {
                    let p = state.params(n);
                    let base = p.channel(Complex64::from_polar(1.0, row[n])).norm_sqr();
                    let mut best = (base, None);
                    for (j, r) in rot.iter().enumerate() {
                        let v = p.channel(*r).norm_sqr();
                        if v > best.0 + ACCEPT_RTOL * best.0.abs() {
                            best = (v, Some(j));
                        }
                    }
                    evals += rot.len() as u64 + 1;
                    if let Some(j) = best.1 {
                        row[n] = grid.gamma[j];
                        state.update(net, n, rot[j]);
                    }
                }
                (row, evals)
            })
            .collect();
        for (k, (row, evals)) in results.into_iter().enumerate() {
            phases.psi[k] = row;
            evaluations += evals;
        }
        gammas = phases.reflections();
        states = states_for(problem, &gammas)?;
        current = problem
            .sum_rate(&states.iter().map(|s| s.h).collect::<Vec<_>>())
            .max(start_value);
        trace.push(current);
        mu = relative_change(current, start_value);
        if mu <= opts.epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "unconstrained optimizer stopped after {iterations} outer iterations (μ = {mu:e})"
        );
    }
    let mut report = capacity_for_reflections(problem, &gammas)?;
    report.trace = trace;
    report.mu = mu;
    report.iterations = iterations;
    report.converged = converged;
    report.evaluations = evaluations;
    Ok((phases, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
        Complex64::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    fn random_net(rng: &mut ChaCha8Rng, n: usize) -> MultiportNetwork {
        let raw = CMatrix::from_fn(n, n, |_, _| rand_c(rng, 0.1));
        let s_ss = (&raw + raw.transpose()) * Complex64::new(0.5, 0.0);
        MultiportNetwork {
            s_rt: rand_c(rng, 1e-3),
            s_rm: CVector::from_fn(n, |_, _| rand_c(rng, 1e-2)),
            s_mt: CVector::from_fn(n, |_, _| rand_c(rng, 1e-2)),
            s_ss,
            z0: 50.0,
            freq_hz: 3.6e9,
        }
    }

    fn random_problem(seed: u64, n: usize, k: usize) -> CapacityProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nets = (0..k).map(|_| random_net(&mut rng, n)).collect();
        let freqs = crate::scenario::linspace(3.55e9, 3.65e9, k);
        CapacityProblem::new(nets, freqs, 3.6e9, 1e8, 1e-3, 1e-19).unwrap()
    }

    fn random_profile(seed: u64, n: usize) -> PhaseProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PhaseProfile::new(
            (0..n).map(|_| rng.random_range(-2e-7..0.0)).collect(),
            (0..n).map(|_| rng.random_range(0.0..TAU)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_channels_give_zero_capacity() {
        let net =
            MultiportNetwork::ideal(CVector::zeros(3), CVector::zeros(3), 50.0, 3.6e9).unwrap();
        let p = CapacityProblem::new(
            vec![net.clone(), net],
            vec![3.55e9, 3.65e9],
            3.6e9,
            1e8,
            1e-3,
            1e-19,
        )
        .unwrap();
        let r = capacity(&p, &PhaseProfile::new(vec![0.0; 3], vec![0.0; 3]).unwrap()).unwrap();
        assert_eq!(r.capacity_bps, 0.0);
    }

    #[test]
    fn identical_gains_collapse_the_sum() {
        let one = Complex64::new(1.0, 0.0);
        let net = MultiportNetwork::ideal(
            CVector::from_element(1, one * 1e-4),
            CVector::from_element(1, one),
            50.0,
            3.6e9,
        )
        .unwrap();
        let p = CapacityProblem::new(
            vec![net; 4],
            crate::scenario::linspace(3.55e9, 3.65e9, 4),
            3.6e9,
            1e8,
            1e-3,
            1e-19,
        )
        .unwrap();
        let r = capacity(&p, &PhaseProfile::new(vec![0.0], vec![0.0]).unwrap()).unwrap();
        let g = 1e-8;
        let expected = 1e8 * (1.0 + g * p.snr_scale()).log2();
        assert!((r.capacity_bps - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn sherman_morrison_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let net = random_net(&mut rng, 8);
            let psi: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..TAU)).collect();
            let gi: Vec<Complex64> = psi
                .iter()
                .map(|&p| Complex64::from_polar(1.0, -p))
                .collect();
            let n = rng.random_range(0..8);
            let split = rank_one_split(&gi, &net.s_ss, n).unwrap();
            assert_eq!(split.c, split.a[(n, n)]);
            let lhs = &split.a - &split.b / (Complex64::from_polar(1.0, psi[n]) + split.c);
            let mut m = -net.s_ss.clone();
            for i in 0..8 {
                m[(i, i)] += gi[i];
            }
            let direct = m.try_inverse().unwrap();
            let dev = (&lhs - &direct)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-10, "{dev}");
        }
    }

    #[test]
    fn scalar_form_matches_direct_channel() {
        let p = random_problem(5, 6, 3);
        let prof = random_profile(6, 6);
        let offsets = p.offsets();
        let gammas: Vec<Vec<Complex64>> = offsets.iter().map(|&o| prof.reflections(o)).collect();
        let states = states_for(&p, &gammas).unwrap();
        for n in 0..6 {
            for (k, (s, net)) in states.iter().zip(&p.nets).enumerate() {
                let params = s.params(n);
                let psi = 1.234;
                let mut g = gammas[k].clone();
                g[n] = Complex64::from_polar(1.0, psi);
                let direct = realistic_channel(net, &g).unwrap();
                let fast = params.channel(Complex64::from_polar(1.0, psi));
                assert!((direct - fast).norm() < 1e-12 * direct.norm().max(1e-6));
            }
        }
    }

    #[test]
    fn uninfluential_element_keeps_first_point() {
        let p = random_problem(1, 2, 2);
        let params = vec![
            ElementParams {
                h: Complex64::new(1e-4, 0.0),
                xy: Complex64::new(0.0, 0.0),
                delta: Complex64::new(1.0, 0.0),
                g_nn: Complex64::new(0.1, 0.0),
            };
            2
        ];
        let grid = SearchGrid::new(-1e-7, 0.0, 5, 4).unwrap();
        let r = element_subproblem(&p, &params, &p.offsets(), &grid, (-3e-8, 1.0));
        assert!(!r.improved);
        assert_eq!((r.alpha, r.gamma), (-3e-8, 1.0));
    }

    #[test]
    fn single_user_aligns_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s_rm = CVector::from_fn(4, |_, _| rand_c(&mut rng, 1.0));
        let s_mt = CVector::from_fn(4, |_, _| rand_c(&mut rng, 1.0));
        let net = MultiportNetwork::ideal(s_rm.clone(), s_mt.clone(), 50.0, 3.6e9).unwrap();
        let p = CapacityProblem::new(vec![net], vec![3.6e9], 3.6e9, 1e8, 1e-3, 1e-19).unwrap();
        let grid = SearchGrid::new(0.0, 0.0, 1, 100).unwrap();
        let start = PhaseProfile::new(vec![0.0; 4], vec![0.0; 4]).unwrap();
        let opts = OptimizeOptions {
            epsilon: 0.0,
            ..Default::default()
        };
        let (prof, _) = optimize(&p, &start, &grid, &opts).unwrap();
        let terms: Vec<Complex64> = (0..4)
            .map(|n| s_rm[n] * s_mt[n] * Complex64::from_polar(1.0, prof.gamma[n]))
            .collect();
        let total: Complex64 = terms.iter().sum();
        // coordinate ascent leaves every term within half a grid step of the sum
        for (n, t) in terms.iter().enumerate() {
            let diff = crate::ideal::wrap_phase(t.arg() - total.arg()).abs();
            assert!(diff <= TAU / 200.0 + 1e-9, "element {n}: {diff}");
        }
    }

    #[test]
    fn trace_is_monotone_and_tracking_is_exact() {
        let p = random_problem(21, 8, 4);
        let grid = SearchGrid::new(-2e-7, 0.0, 15, 12).unwrap();
        let opts = OptimizeOptions {
            verify: true,
            ..Default::default()
        };
        let start = random_profile(22, 8);
        let (prof, r) = optimize(&p, &start, &grid, &opts).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.capacity_bps >= capacity(&p, &start).unwrap().capacity_bps);
        assert!(prof.gamma.iter().all(|g| (0.0..TAU).contains(g)));

        let free = FreePhases::from_profile(&prof, &p.offsets());
        let (_, nc) = optimize_unconstrained(&p, &free, &grid, &opts).unwrap();
        assert!(nc.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(nc.capacity_bps >= r.capacity_bps * (1.0 - 1e-12));
    }

    #[test]
    fn profile_csv_round_trip() {
        let prof = random_profile(3, 5);
        assert_eq!(PhaseProfile::from_csv(&prof.to_csv()).unwrap(), prof);
        assert!(PhaseProfile::from_csv("n,a,g\n0,1,2\n2,1,2\n").is_err());
    }

    #[test]
    fn profile_is_affine() {
        let prof = random_profile(4, 3);
        for n in 0..3 {
            let o = 2.5e7;
            assert_eq!(prof.psi(o, n), prof.alpha[n] * o + prof.gamma[n]);
        }
    }
}
