//! Scenario-driven pipelines, artifact writers and the command-line front end.

use crate::em::{DipoleSpec, MultiportNetwork, NetworkBuilder};
use crate::error::{Error, Result};
use crate::foster::{
    export_netlist, manifest_csv, plan_poles, subcircuit_name, synthesize_all, FitOptions,
    FitReport, FosterCircuit, PolePlan,
};
use crate::ideal::{
    bandwidth, ideal_channel_gain, ideal_reactance, AngleFrequencyMap, BandwidthReport,
    IdealDesign, MultipathSampler, MultipathSpec, PhaseModel,
};
use crate::optimize::{
    capacity_for_reflections, optimize, optimize_unconstrained, CapacityProblem, CapacityReport,
    FreePhases, OptimizeOptions, PhaseProfile, SearchGrid,
};
use crate::scenario::{linspace, load_scenario_file, Direction, Scenario, ScenarioConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Gains below this are reported at the floor (dB).
pub const DB_FLOOR: f64 = -200.0;

/// Droop fraction that defines the beam bandwidth.
pub const BEAM_DROOP: f64 = 0.05;

/// `10·log10(power)` floored at [`DB_FLOOR`].
pub fn to_db(power: f64) -> f64 {
    if power > 0.0 {
        (10.0 * power.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Plane-wave links, no coupling, no structural scattering.
    Ideal,
    /// Induced-EMF multiport network.
    #[default]
    Multiport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    /// Transmitter and receiver are dipoles inside the impedance matrix.
    Em,
    /// Plane-wave array responses scaled by the far-field gain.
    FarField,
}

/// Channel model selection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Multiport)]
    pub model: ModelKind,
    /// Link model; defaults to far-field when both zero flags are set, EM otherwise.
    #[arg(long, value_enum)]
    pub links: Option<LinkKind>,
    /// Zero the off-diagonal of S_SS.
    #[arg(long)]
    pub zero_coupling: bool,
    /// Zero s_RT and the diagonal of S_SS.
    #[arg(long)]
    pub zero_structural: bool,
    /// Evaluate EM networks at each frequency instead of once at f0.
    #[arg(long)]
    pub per_frequency: bool,
}

impl ModelArgs {
    pub fn ideal() -> Self {
        Self {
            model: ModelKind::Ideal,
            ..Default::default()
        }
    }

    pub fn multiport() -> Self {
        Self::default()
    }

    pub fn link_kind(&self) -> LinkKind {
        match (self.model, self.links) {
            (ModelKind::Ideal, _) => LinkKind::FarField,
            (_, Some(l)) => l,
            _ if self.zero_coupling && self.zero_structural => LinkKind::FarField,
            _ => LinkKind::Em,
        }
    }
}

/// Dipole model of the scenario, aligned with the ζ axis.
pub fn dipole_spec(s: &Scenario) -> Result<DipoleSpec> {
    DipoleSpec::in_wavelengths(
        s.f0,
        s.dipole_length_wl,
        s.dipole_radius_wl,
        s.geometry.zeta_axis().unit(),
    )
}

/// Builds user networks at one frequency for every direction in `users`.
/// EM networks are frequency-flat (built at f0) unless `per_frequency` is set.
pub fn networks_at(
    s: &Scenario,
    model: &ModelArgs,
    freq_hz: f64,
    users: &[Direction],
) -> Result<Vec<MultiportNetwork>> {
    let nets: Vec<MultiportNetwork> = match model.link_kind() {
        LinkKind::FarField => users
            .iter()
            .map(|&u| {
                MultiportNetwork::far_field(
                    &s.geometry,
                    s.incidence,
                    u,
                    freq_hz,
                    s.far_field_gain,
                    s.z0,
                )
            })
            .collect::<Result<_>>()?,
        LinkKind::Em => {
            let f = if model.per_frequency { freq_hz } else { s.f0 };
            let builder =
                NetworkBuilder::new(&s.geometry, s.tx_position(), &dipole_spec(s)?, f, s.z0)?
                    .with_direct_link(s.direct_link);
            users
                .iter()
                .map(|&u| builder.network(s.geometry.point_at(u, s.d_u)))
                .collect::<Result<_>>()?
        }
    };
    Ok(nets
        .into_iter()
        .map(|mut n| {
            if model.zero_coupling {
                n = n.without_coupling();
            }
            if model.zero_structural {
                n = n.without_structural();
            }
            n
        })
        .collect())
}

/// Number of users: the scenario value, else `⌈W/ΔW⌉` at the 5 % droop.
pub fn default_users(s: &Scenario) -> Result<usize> {
    if let Some(k) = s.k_users {
        return Ok(k);
    }
    let map = AngleFrequencyMap::from_scenario(s)?;
    let bw = bandwidth(&map, &s.geometry, BEAM_DROOP, s.phi)?;
    Ok(((s.bandwidth / bw.exact_hz).ceil() as usize).max(2))
}

/// Frequencies `f_k` and user directions `θ_k = M(f_k)`.
pub fn user_plan(s: &Scenario, k: usize) -> Result<(Vec<f64>, Vec<Direction>)> {
    let map = AngleFrequencyMap::from_scenario(s)?;
    let freqs = s.band_plan(k)?.frequencies();
    let dirs = freqs
        .iter()
        .map(|&f| Direction::new(map.angle(f)?, s.phi))
        .collect::<Result<Vec<_>>>()?;
    Ok((freqs, dirs))
}

/// Where the per-element reflection coefficients come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileSource {
    /// Exact target phases at every frequency.
    Ideal,
    /// Synthesized Foster circuits.
    #[default]
    Foster,
    /// Affine profile read from `--profile`.
    File,
}

/// Frequency-dependent reflection coefficients for all elements.
#[derive(Debug, Clone)]
pub enum Reflections {
    Ideal(IdealDesign),
    Foster {
        circuits: Vec<Option<FosterCircuit>>,
        fallback: IdealDesign,
        z0: f64,
    },
    Affine {
        profile: PhaseProfile,
        f0: f64,
    },
}

impl Reflections {
    pub fn at(&self, freq_hz: f64) -> Vec<Complex64> {
        match self {
            Reflections::Ideal(d) => d.reflection(freq_hz),
            Reflections::Foster {
                circuits,
                fallback,
                z0,
            } => circuits
                .iter()
                .enumerate()
                .map(|(n, c)| match c {
                    Some(c) => c.reflection(freq_hz, *z0),
                    None => Complex64::from_polar(1.0, fallback.phase(n, freq_hz)),
                })
                .collect(),
            Reflections::Affine { profile, f0 } => profile.reflections(freq_hz - f0),
        }
    }
}

/// Outcome of synthesizing one element.
#[derive(Debug, Clone)]
pub struct ElementSynthesis {
    pub plan: PolePlan,
    pub result: std::result::Result<(FosterCircuit, FitReport), String>,
}

#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub design: IdealDesign,
    pub beam_bandwidth: BandwidthReport,
    pub elements: Vec<ElementSynthesis>,
}

impl SynthesisOutcome {
    pub fn failures(&self) -> Vec<(usize, String)> {
        self.elements
            .iter()
            .enumerate()
            .filter_map(|(n, e)| e.result.as_ref().err().map(|m| (n, m.clone())))
            .collect()
    }

    pub fn reflections(&self, z0: f64) -> Reflections {
        Reflections::Foster {
            circuits: self
                .elements
                .iter()
                .map(|e| e.result.as_ref().ok().map(|r| r.0.clone()))
                .collect(),
            fallback: self.design.clone(),
            z0,
        }
    }
}

/// Foster synthesis of every element; failures are recorded, not raised.
pub fn run_synthesis(s: &Scenario) -> Result<SynthesisOutcome> {
    let design = IdealDesign::from_scenario(s)?;
    let bw = bandwidth(&design.map, &s.geometry, BEAM_DROOP, s.phi)?;
    let opts = FitOptions::with_beam_bandwidth(bw.exact_hz);
    let results = synthesize_all(&design, s.z0, &opts);
    let elements = results
        .into_iter()
        .enumerate()
        .map(|(n, r)| ElementSynthesis {
            plan: plan_poles(&design, n),
            result: r.map_err(|e| e.to_string()),
        })
        .collect();
    Ok(SynthesisOutcome {
        design,
        beam_bandwidth: bw,
        elements,
    })
}

/// `|h(θ, f)|²` over a grid, one row per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    pub thetas: Vec<f64>,
    pub freqs: Vec<f64>,
    pub power: Vec<Vec<f64>>,
}

impl GainMap {
    /// `freq_hz,theta_rad,gain_db`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,theta_rad,gain_db\n");
        for (f, row) in self.freqs.iter().zip(&self.power) {
            for (t, p) in self.thetas.iter().zip(row) {
                writeln!(out, "{f:.6},{t:.9},{:.9}", to_db(*p)).unwrap();
            }
        }
        out
    }

    /// Index of the strongest angle in row `k` (first among equals).
    pub fn argmax(&self, k: usize) -> usize {
        let row = &self.power[k];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.power.iter().flatten().cloned().fold(0.0, f64::max)
    }
}

/// Gain map through the selected channel model.
pub fn gain_map(
    s: &Scenario,
    model: &ModelArgs,
    refl: &Reflections,
    thetas: &[f64],
    freqs: &[f64],
) -> Result<GainMap> {
    let dirs = thetas
        .iter()
        .map(|&t| Direction::new(t, s.phi))
        .collect::<Result<Vec<_>>>()?;
    let power = freqs
        .par_iter()
        .map(|&f| {
            let gamma = refl.at(f);
            if model.model == ModelKind::Ideal {
                return dirs
                    .iter()
                    .map(|&d| {
                        Ok(ideal_channel_gain(
                            &s.geometry,
                            &gamma,
                            s.incidence,
                            d,
                            f,
                            s.far_field_gain,
                        )?
                        .norm_sqr())
                    })
                    .collect::<Result<Vec<_>>>();
            }
            let nets = networks_at(s, model, f, &dirs)?;
            nets.iter()
                .map(|n| Ok(n.channel(&gamma)?.norm_sqr()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GainMap {
        thetas: thetas.to_vec(),
        freqs: freqs.to_vec(),
        power,
    })
}

/// Ideal gain map, beam bandwidth and target reactances.
#[derive(Debug, Clone)]
pub struct IdealSweep {
    pub map: GainMap,
    pub mapped: Vec<f64>,
    pub bandwidth: BandwidthReport,
    pub design: IdealDesign,
}

pub fn run_ideal_sweep(s: &Scenario, thetas: &[f64], freqs: &[f64]) -> Result<IdealSweep> {
    if thetas.is_empty() || freqs.is_empty() {
        return Err(Error::validation(
            "angle and frequency grids must be non-empty",
        ));
    }
    let design = IdealDesign::from_scenario(s)?.with_model(PhaseModel::Exact);
    let map = gain_map(
        s,
        &ModelArgs::ideal(),
        &Reflections::Ideal(design.clone()),
        thetas,
        freqs,
    )?;
    let mapped = freqs
        .iter()
        .map(|&f| design.map.angle(f))
        .collect::<Result<Vec<_>>>()?;
    let bw = bandwidth(&design.map, &s.geometry, BEAM_DROOP, s.phi)?;
    Ok(IdealSweep {
        map,
        mapped,
        bandwidth: bw,
        design,
    })
}

/// Capacity of `refl` over the user plan.
pub fn evaluate_capacity(
    s: &Scenario,
    model: &ModelArgs,
    refl: &Reflections,
    k: usize,
) -> Result<(CapacityProblem, CapacityReport)> {
    let problem = capacity_problem(s, model, k)?;
    let gammas: Vec<Vec<Complex64>> = problem.freqs.iter().map(|&f| refl.at(f)).collect();
    let report = capacity_for_reflections(&problem, &gammas)?;
    Ok((problem, report))
}

/// User networks for the capacity objective. Links are frequency-flat at
/// f0 unless `per_frequency` is set; the reflection phases still follow `f_k`.
pub fn capacity_problem(s: &Scenario, model: &ModelArgs, k: usize) -> Result<CapacityProblem> {
    let (freqs, users) = user_plan(s, k)?;
    let nets = freqs
        .par_iter()
        .zip(users.par_iter())
        .map(|(&f, &u)| {
            let f_net = if model.per_frequency { f } else { s.f0 };
            Ok(networks_at(s, model, f_net, &[u])?.remove(0))
        })
        .collect::<Result<Vec<_>>>()?;
    CapacityProblem::new(
        nets,
        freqs,
        s.f0,
        s.bandwidth,
        s.pt_watts(),
        s.n0_watts_per_hz(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizeMode {
    Constrained,
    Unconstrained,
    #[default]
    Both,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub problem: CapacityProblem,
    /// Ideal affine profile, the optimizer's starting point.
    pub non_opt: CapacityReport,
    /// Synthesized Foster circuits, before optimization.
    pub foster: Option<CapacityReport>,
    pub mtp: (PhaseProfile, CapacityReport),
    pub nc: Option<(FreePhases, CapacityReport)>,
    pub warnings: Vec<String>,
}

/// Non-optimized, constrained and (optionally) unconstrained capacities.
pub fn run_optimize(
    s: &Scenario,
    model: &ModelArgs,
    k: usize,
    n_alpha: usize,
    n_gamma: usize,
    opts: &OptimizeOptions,
    mode: OptimizeMode,
    with_foster: bool,
) -> Result<OptimizeOutcome> {
    let problem = capacity_problem(s, model, k)?;
    let design = IdealDesign::from_scenario(s)?;
    let initial = PhaseProfile::from_design(&design);
    let grid = SearchGrid::for_design(&design, n_alpha, n_gamma)?;
    let mut warnings = Vec::new();

    let initial_refl = Reflections::Affine {
        profile: initial.clone(),
        f0: s.f0,
    };
    let gammas: Vec<Vec<Complex64>> = problem.freqs.iter().map(|&f| initial_refl.at(f)).collect();
    let non_opt = capacity_for_reflections(&problem, &gammas)?;

    let foster = if with_foster {
        let synth = run_synthesis(s)?;
        for (n, msg) in synth.failures() {
            warnings.push(format!(
                "element {n} not realizable ({msg}); ideal phases used"
            ));
        }
        let refl = synth.reflections(s.z0);
        let gammas: Vec<Vec<Complex64>> = problem.freqs.iter().map(|&f| refl.at(f)).collect();
        Some(capacity_for_reflections(&problem, &gammas)?)
    } else {
        None
    };

    let (profile, mut report) = if mode == OptimizeMode::Unconstrained {
        let r = non_opt.clone();
        (initial.clone(), r)
    } else {
        optimize(&problem, &initial, &grid, opts)?
    };
    if !report.converged {
        warnings.push(format!(
            "iteration cap of {} reached (μ = {:e})",
            opts.max_outer, report.mu
        ));
    }
    if mode == OptimizeMode::Unconstrained {
        report.trace = vec![report.capacity_bps];
    }
    let nc = if mode == OptimizeMode::Constrained {
        None
    } else {
        let offsets: Vec<f64> = problem.freqs.iter().map(|f| f - s.f0).collect();
        let start = FreePhases::from_profile(&profile, &offsets);
        let (phases, r) = optimize_unconstrained(&problem, &start, &grid, opts)?;
        if !r.converged {
            warnings.push(format!(
                "unconstrained iteration cap of {} reached (μ = {:e})",
                opts.max_outer, r.mu
            ));
        }
        Some((phases, r))
    };
    Ok(OptimizeOutcome {
        problem,
        non_opt,
        foster,
        mtp: (profile, report),
        nc,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// command line

/// Scenario file plus targeted overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
pub struct ScenarioArgs {
    /// TOML scenario; reference values when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Carrier frequency f0 (Hz) [3.6e9].
    #[arg(long)]
    pub f0_hz: Option<f64>,
    /// Bandwidth W (Hz) [1e8].
    #[arg(long)]
    pub bandwidth_hz: Option<f64>,
    /// Number of users K [⌈W/ΔW⌉].
    #[arg(long)]
    pub k_users: Option<usize>,
    /// Lower coverage angle (rad) [π/6].
    #[arg(long, allow_negative_numbers = true)]
    pub theta_min_rad: Option<f64>,
    /// Upper coverage angle (rad) [π/3].
    #[arg(long, allow_negative_numbers = true)]
    pub theta_max_rad: Option<f64>,
    /// Element spacing along ν (wavelengths) [0.5].
    #[arg(long)]
    pub delta_nu_wl: Option<f64>,
    /// Elements along ν [16, scaled to keep the aperture].
    #[arg(long)]
    pub i_count: Option<usize>,
    /// Elements along ζ [4].
    #[arg(long)]
    pub j_count: Option<usize>,
    /// Transmit power (dBm) [0].
    #[arg(long, allow_negative_numbers = true)]
    pub pt_dbm: Option<f64>,
    /// Noise density (dBm/Hz) [−165.37].
    #[arg(long, allow_negative_numbers = true)]
    pub n0_dbm_per_hz: Option<f64>,
    /// Reflection phase at the array origin (rad) [0].
    #[arg(long, allow_negative_numbers = true)]
    pub psi0_rad: Option<f64>,
}

impl ScenarioArgs {
    /// Applies the overrides on top of `base` (or the file, or the defaults).
    pub fn config(&self, base: Option<ScenarioConfig>) -> Result<ScenarioConfig> {
        let mut cfg = match (base, &self.scenario) {
            (Some(c), _) => c,
            (None, Some(p)) => load_scenario_file(p)?.to_config(),
            (None, None) => ScenarioConfig::default(),
        };
        let set = |dst: &mut Option<f64>, v: Option<f64>| {
            if v.is_some() {
                *dst = v;
            }
        };
        set(&mut cfg.band.f0_hz, self.f0_hz);
        set(&mut cfg.band.bandwidth_hz, self.bandwidth_hz);
        if self.k_users.is_some() {
            cfg.band.k_users = self.k_users;
        }
        set(&mut cfg.coverage.theta_min_rad, self.theta_min_rad);
        set(&mut cfg.coverage.theta_max_rad, self.theta_max_rad);
        if let Some(wl) = self.delta_nu_wl {
            cfg.array.delta_nu_wavelengths = Some(wl);
            cfg.array.delta_nu_m = None;
            if self.i_count.is_none() && cfg.array.keep_aperture != Some(false) {
                cfg.array.i_count = None;
            }
        }
        if self.i_count.is_some() {
            cfg.array.i_count = self.i_count;
        }
        if self.j_count.is_some() {
            cfg.array.j_count = self.j_count;
        }
        set(&mut cfg.power.pt_dbm, self.pt_dbm);
        set(&mut cfg.power.n0_dbm_per_hz, self.n0_dbm_per_hz);
        set(&mut cfg.circuit.psi0_rad, self.psi0_rad);
        // the resolved form pins every derived value
        Ok(cfg.resolve()?.to_config())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Re-run the command recorded in a manifest.
    #[arg(long)]
    #[serde(skip)]
    pub from_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Angle samples across the coverage interval.
    #[arg(long, default_value_t = 1001)]
    pub theta_points: usize,
    /// Sampled frequencies across the band.
    #[arg(long, default_value_t = 17)]
    pub freq_points: usize,
    /// Frequencies per element in the reactance table.
    #[arg(long, default_value_t = 201)]
    pub reactance_points: usize,
    /// Rician factor for the multipath table (omit to skip).
    #[arg(long)]
    pub kappa_r: Option<f64>,
    /// Monte Carlo draws per frequency for the multipath table.
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Significant digits of netlist component values.
    #[arg(long, default_value_t = 6)]
    pub digits: usize,
    /// Frequencies per element in the realized-reactance table.
    #[arg(long, default_value_t = 201)]
    pub curve_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ProfileSource::Foster)]
    pub source: ProfileSource,
    /// Affine profile CSV for `--source file`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value_t = 361)]
    pub theta_points: usize,
    /// Angle grid start (rad).
    #[arg(long, allow_negative_numbers = true, default_value_t = -std::f64::consts::FRAC_PI_2)]
    pub theta_from: f64,
    /// Angle grid end (rad).
    #[arg(long, allow_negative_numbers = true, default_value_t = std::f64::consts::FRAC_PI_2)]
    pub theta_to: f64,
    /// Frequencies of the gain map [K].
    #[arg(long)]
    pub freq_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = OptimizeMode::Both)]
    pub mode: OptimizeMode,
    #[arg(long, default_value_t = 300)]
    pub n_alpha: usize,
    #[arg(long, default_value_t = 100)]
    pub n_gamma: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 50)]
    pub max_outer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ReportArgs {
    /// Directory holding a previous run's manifest.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Ideal gain map, beam bandwidth and target reactances.
    SweepIdeal(SweepArgs),
    /// Foster synthesis of every element load.
    Synth(SynthArgs),
    /// Realistic gain map and capacity of a reflection profile.
    Eval(EvalArgs),
    /// Capacity optimization of the affine phase profile.
    Optimize(OptimizeArgs),
    /// Output inventory and hash check of a finished run.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SweepIdeal(_) => "sweep-ideal",
            Command::Synth(_) => "synth",
            Command::Eval(_) => "eval",
            Command::Optimize(_) => "optimize",
            Command::Report(_) => "report",
        }
    }

    fn scenario_args(&self) -> Option<&ScenarioArgs> {
        match self {
            Command::SweepIdeal(a) => Some(&a.scenario),
            Command::Synth(a) => Some(&a.scenario),
            Command::Eval(a) => Some(&a.scenario),
            Command::Optimize(a) => Some(&a.scenario),
            Command::Report(_) => None,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "metaprism",
    version,
    about = "Frequency-selective reflecting surface design and simulation"
)]
pub struct Cli {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub modules: BTreeMap<String, String>,
    pub command: Command,
    pub scenario_hash: Option<String>,
    pub scenario: Option<ScenarioConfig>,
    pub outputs: Vec<OutputEntry>,
    pub timings_ms: BTreeMap<String, f64>,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub warnings: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Collects outputs in memory; files are written once computation finishes.
#[derive(Debug, Default)]
struct Artifacts {
    files: Vec<(String, String)>,
    timings: BTreeMap<String, f64>,
    warnings: Vec<String>,
    seeds: Vec<u64>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, content: String) {
        self.files.push((name.into(), content));
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let v = f()?;
        self.timings
            .insert(stage.to_string(), t.elapsed().as_secs_f64() * 1e3);
        Ok(v)
    }
}

fn module_versions() -> BTreeMap<String, String> {
    let v = env!("CARGO_PKG_VERSION").to_string();
    [
        "scenario-core",
        "ideal-mtp",
        "em-multiport",
        "foster-synth",
        "reflection-opt",
        "cli-runner",
    ]
    .iter()
    .map(|m| (m.to_string(), v.clone()))
    .collect()
}

fn fmt_f(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.12e}")
    }
}

fn sweep(s: &Scenario, a: &SweepArgs, art: &mut Artifacts) -> Result<()> {
    if a.theta_points < 2 || a.freq_points < 2 {
        return Err(Error::validation(
            "sweep needs at least two angles and two frequencies",
        ));
    }
    let thetas = linspace(s.theta_min, s.theta_max, a.theta_points);
    let freqs = s.band_plan(a.freq_points)?.frequencies();
    let sw = art.time("gain_map", || run_ideal_sweep(s, &thetas, &freqs))?;
    art.add("gain_map.csv", sw.map.to_csv());

    let mut beams = String::from("k,freq_hz,mapped_theta_rad,argmax_theta_rad,peak_gain_db\n");
    for (k, f) in freqs.iter().enumerate() {
        let i = sw.map.argmax(k);
        writeln!(
            beams,
            "{k},{f:.6},{:.12e},{:.12e},{:.9}",
            sw.mapped[k],
            thetas[i],
            to_db(sw.map.power[k][i])
        )
        .unwrap();
    }
    art.add("beams.csv", beams);

    let bw = &sw.bandwidth;
    art.add(
        "bandwidth.csv",
        format!(
            "omega,exact_hz,approx_hz,first_null_hz,users\n{},{:.6},{:.6},{:.6},{}\n",
            bw.omega,
            bw.exact_hz,
            bw.approx_hz,
            bw.first_null_hz,
            ((s.bandwidth / bw.exact_hz).ceil() as usize).max(2)
        ),
    );

    let narrow = IdealDesign::from_scenario(s)?;
    let rfreqs = s.band_plan(a.reactance_points.max(2))?.frequencies();
    let rows = art.time("reactance", || {
        (0..s.geometry.len())
            .into_par_iter()
            .map(|n| {
                let mut out = String::new();
                for &f in &rfreqs {
                    let psi = narrow.phase(n, f);
                    writeln!(
                        out,
                        "{n},{f:.6},{:.12e},{}",
                        psi,
                        fmt_f(ideal_reactance(psi, s.z0)?)
                    )
                    .unwrap();
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    art.add(
        "reactance.csv",
        format!("element,freq_hz,phase_rad,reactance_ohm\n{}", rows.concat()),
    );

    if let Some(kappa) = a.kappa_r {
        let spec = MultipathSpec::isotropic(kappa)?;
        art.seeds.push(a.seed);
        let table = art.time("multipath", || {
            let mut out =
                String::from("freq_hz,diffuse_fraction,kappa_eff_over_kappa_r,mc_diffuse_power\n");
            for (k, &f) in freqs.iter().enumerate() {
                let frac = crate::ideal::diffuse_fraction(&spec, &sw.design, f)?;
                let sampler = MultipathSampler::new(&spec, &sw.design, f)?;
                let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(k as u64));
                let mc = (0..a.draws)
                    .map(|_| sampler.draw(&mut rng).diffuse.norm_sqr())
                    .sum::<f64>()
                    / a.draws.max(1) as f64;
                writeln!(out, "{f:.6},{frac:.12e},{:.12e},{mc:.12e}", 1.0 / frac).unwrap();
            }
            Ok(out)
        })?;
        art.add("multipath.csv", table);
    }
    Ok(())
}

fn synth(s: &Scenario, a: &SynthArgs, art: &mut Artifacts) -> Result<Vec<(usize, String)>> {
    let out = art.time("synthesis", || run_synthesis(s))?;
    let mut rows = Vec::new();
    let mut fit = String::from(
        "element,pole_count,reactance_rel_rms,phase_rms_rad,condition,method,retries,status\n",
    );
    let freqs = s.band_plan(a.curve_points.max(2))?.frequencies();
    let mut curves = String::from("element,freq_hz,ideal_ohm,realized_ohm\n");
    for (n, e) in out.elements.iter().enumerate() {
        match &e.result {
            Ok((circ, rep)) => {
                art.add(
                    format!("netlists/{}.cir", subcircuit_name(n)),
                    export_netlist(circ, a.digits)?,
                );
                writeln!(
                    fit,
                    "{n},{},{:.9e},{:.9e},{:.6e},{:?},{},ok",
                    rep.pole_count,
                    rep.reactance_rel_rms,
                    rep.phase_rms_rad,
                    rep.condition,
                    rep.method,
                    rep.retries
                )
                .unwrap();
                for &f in &freqs {
                    let ideal = ideal_reactance(out.design.phase(n, f), s.z0)?;
                    writeln!(
                        curves,
                        "{n},{f:.6},{},{}",
                        fmt_f(ideal),
                        fmt_f(circ.reactance(f))
                    )
                    .unwrap();
                }
                rows.push((circ.clone(), rep.clone(), e.plan.clone()));
            }
            Err(msg) => {
                writeln!(
                    fit,
                    "{n},{},,,,,,\"non-realizable: {}\"",
                    e.plan.count(),
                    msg.replace('"', "'")
                )
                .unwrap();
            }
        }
    }
    art.add("foster_manifest.csv", manifest_csv(&rows));
    art.add("fit_report.csv", fit);
    art.add("foster_reactance.csv", curves);
    Ok(out.failures())
}

fn reflections_for(
    s: &Scenario,
    source: ProfileSource,
    profile: Option<&Path>,
    art: &mut Artifacts,
) -> Result<Reflections> {
    Ok(match source {
        ProfileSource::Ideal => {
            Reflections::Ideal(IdealDesign::from_scenario(s)?.with_model(PhaseModel::Exact))
        }
        ProfileSource::Foster => {
            let synth = art.time("synthesis", || run_synthesis(s))?;
            for (n, msg) in synth.failures() {
                art.warnings.push(format!(
                    "element {n} not realizable ({msg}); ideal phases used"
                ));
            }
            synth.reflections(s.z0)
        }
        ProfileSource::File => {
            let path = profile.ok_or_else(|| Error::validation("--source file needs --profile"))?;
            let prof = PhaseProfile::from_csv(&std::fs::read_to_string(path)?)?;
            if prof.len() != s.geometry.len() {
                return Err(Error::validation(format!(
                    "profile has {} elements, scenario has {}",
                    prof.len(),
                    s.geometry.len()
                )));
            }
            Reflections::Affine {
                profile: prof,
                f0: s.f0,
            }
        }
    })
}

fn capacity_csv(case: &str, problem: &CapacityProblem, r: &CapacityReport, out: &mut String) {
    for (k, (g, rate)) in r.gains.iter().zip(&r.rates_bps).enumerate() {
        writeln!(
            out,
            "{case},{k},{:.6},{:.9},{:.9e}",
            problem.freqs[k],
            to_db(*g),
            rate
        )
        .unwrap();
    }
}

fn eval(s: &Scenario, a: &EvalArgs, art: &mut Artifacts) -> Result<()> {
    if a.theta_points < 2 || !(a.theta_from < a.theta_to) {
        return Err(Error::validation(
            "angle grid must hold at least two increasing angles",
        ));
    }
    let refl = reflections_for(s, a.source, a.profile.as_deref(), art)?;
    let k = default_users(s)?;
    let freqs = s
        .band_plan(a.freq_points.unwrap_or(k).max(2))?
        .frequencies();
    let thetas = linspace(a.theta_from, a.theta_to, a.theta_points);
    let map = art.time("gain_map", || gain_map(s, &a.model, &refl, &thetas, &freqs))?;
    art.add("gain_map.csv", map.to_csv());
    let (problem, rep) = art.time("capacity", || evaluate_capacity(s, &a.model, &refl, k))?;
    let mut users = String::from("case,k,freq_hz,gain_db,rate_bps\n");
    capacity_csv("eval", &problem, &rep, &mut users);
    art.add("user_gains.csv", users);
    art.add(
        "capacity.csv",
        format!(
            "case,users,capacity_bps,normalized_bps_per_hz\neval,{k},{:.9e},{:.12}\n",
            rep.capacity_bps, rep.normalized
        ),
    );
    Ok(())
}

fn optimize_cmd(s: &Scenario, a: &OptimizeArgs, art: &mut Artifacts) -> Result<()> {
    let k = default_users(s)?;
    let opts = OptimizeOptions {
        epsilon: a.epsilon,
        max_outer: a.max_outer,
        verify: false,
    };
    let res = art.time("optimize", || {
        run_optimize(s, &a.model, k, a.n_alpha, a.n_gamma, &opts, a.mode, true)
    })?;
    art.warnings.extend(res.warnings.iter().cloned());
    let mut table = String::from(
        "case,users,capacity_bps,normalized_bps_per_hz,iterations,converged,evaluations\n",
    );
    let mut trace = String::from("case,iteration,capacity_bps\n");
    let mut users = String::from("case,k,freq_hz,gain_db,rate_bps\n");
    let mut row = |case: &str, r: &CapacityReport, trace_it: bool| {
        writeln!(
            table,
            "{case},{k},{:.9e},{:.12},{},{},{}",
            r.capacity_bps, r.normalized, r.iterations, r.converged, r.evaluations
        )
        .unwrap();
        if trace_it {
            for (q, v) in r.trace.iter().enumerate() {
                writeln!(trace, "{case},{q},{v:.12e}").unwrap();
            }
        }
        capacity_csv(case, &res.problem, r, &mut users);
    };
    row("non-opt", &res.non_opt, false);
    if let Some(f) = &res.foster {
        row("foster", f, false);
    }
    if a.mode != OptimizeMode::Unconstrained {
        row("mtp", &res.mtp.1, true);
        art.add("profile.csv", res.mtp.0.to_csv());
    }
    if let Some((phases, r)) = &res.nc {
        row("nc-mtp", r, true);
        let mut out = String::from("k,n,psi_rad\n");
        for (kk, rowp) in phases.psi.iter().enumerate() {
            for (n, p) in rowp.iter().enumerate() {
                writeln!(out, "{kk},{n},{p:.12e}").unwrap();
            }
        }
        art.add("nc_phases.csv", out);
    }
    art.add("capacity_table.csv", table);
    art.add("trace.csv", trace);
    art.add("user_gains.csv", users);
    Ok(())
}

fn report(a: &ReportArgs, art: &mut Artifacts) -> Result<String> {
    let text = std::fs::read_to_string(a.input.join(MANIFEST_FILE))?;
    let m: RunManifest = serde_json::from_str(&text)?;
    let mut csv = String::from("path,bytes,sha256,intact\n");
    let mut summary = format!(
        "{} {} run, {} outputs\n",
        m.tool,
        m.command.name(),
        m.outputs.len()
    );
    for o in &m.outputs {
        let intact = std::fs::read(a.input.join(&o.path))
            .map(|b| sha256_hex(&b) == o.sha256)
            .unwrap_or(false);
        if !intact {
            art.warnings
                .push(format!("{} is missing or modified", o.path));
        }
        writeln!(csv, "{},{},{},{}", o.path, o.bytes, o.sha256, intact).unwrap();
        writeln!(
            summary,
            "  {:<32} {:>10} bytes  {}",
            o.path,
            o.bytes,
            if intact { "ok" } else { "CHANGED" }
        )
        .unwrap();
    }
    for (stage, ms) in &m.timings_ms {
        writeln!(summary, "  stage {stage:<20} {ms:>10.1} ms").unwrap();
    }
    for w in &m.warnings {
        writeln!(summary, "  warning: {w}").unwrap();
    }
    if let Ok(table) = std::fs::read_to_string(a.input.join("capacity_table.csv")) {
        summary.push_str(&table);
    }
    art.add("report.csv", csv);
    Ok(summary)
}

/// Result of one CLI invocation.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    /// Text for standard output.
    pub summary: String,
    /// Error raised after the outputs were written (partial success).
    pub deferred: Option<Error>,
}

/// Runs `command`, writes its outputs and manifest below `out`.
pub fn execute(command: &Command, base: Option<ScenarioConfig>, out: &Path) -> Result<RunOutcome> {
    let mut art = Artifacts::default();
    let cfg = match command.scenario_args() {
        Some(sa) => Some(sa.config(base)?),
        None => None,
    };
    let scenario = cfg.as_ref().map(|c| c.resolve()).transpose()?;
    let mut deferred = None;
    let mut summary = String::new();
    match (command, &scenario) {
        (Command::SweepIdeal(a), Some(s)) => sweep(s, a, &mut art)?,
        (Command::Synth(a), Some(s)) => {
            let failures = synth(s, a, &mut art)?;
            if let Some((n, msg)) = failures.first() {
                for (n, msg) in &failures {
                    art.warnings
                        .push(format!("element {n} not realizable: {msg}"));
                }
                deferred = Some(Error::NonRealizable {
                    element: *n,
                    reason: format!("{msg} ({} element(s) in total)", failures.len()),
                });
            }
        }
        (Command::Eval(a), Some(s)) => eval(s, a, &mut art)?,
        (Command::Optimize(a), Some(s)) => optimize_cmd(s, a, &mut art)?,
        (Command::Report(a), _) => summary = report(a, &mut art)?,
        _ => unreachable!("scenario resolved for every scenario command"),
    }

    let mut outputs = Vec::new();
    for (name, content) in &art.files {
        let path = out.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, content)?;
        outputs.push(OutputEntry {
            path: name.clone(),
            bytes: content.len(),
            sha256: sha256_hex(content.as_bytes()),
        });
    }
    let manifest = RunManifest {
        tool: "metaprism".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        modules: module_versions(),
        command: command.clone(),
        scenario_hash: cfg.as_ref().map(|c| sha256_hex(c.to_toml().as_bytes())),
        scenario: cfg,
        outputs,
        timings_ms: art.timings,
        seeds: art.seeds,
        threads: rayon::current_num_threads(),
        warnings: art.warnings,
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    if summary.is_empty() {
        summary = format!(
            "{}: {} files written to {}\n",
            command.name(),
            manifest.outputs.len(),
            out.display()
        );
        for w in &manifest.warnings {
            writeln!(summary, "warning: {w}").unwrap();
        }
    }
    Ok(RunOutcome {
        manifest,
        summary,
        deferred,
    })
}

/// Re-runs the command stored in a manifest file.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<RunOutcome> {
    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
    execute(&m.command, m.scenario, out)
}

/// Sizes the global thread pool from `METAPRISM_THREADS`.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("METAPRISM_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| {
            Error::validation(format!(
                "METAPRISM_THREADS must be a positive integer, got '{v}'"
            ))
        })?;
        if n == 0 {
            return Err(Error::validation("METAPRISM_THREADS must be positive"));
        }
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Parses arguments, runs and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = init_threads().and_then(|_| match &cli.output.from_manifest {
        Some(path) => {
            let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            if m.command.name() != cli.command.name() {
                return Err(Error::validation(format!(
                    "manifest records '{}', not '{}'",
                    m.command.name(),
                    cli.command.name()
                )));
            }
            execute(&m.command, m.scenario, &cli.output.out)
        }
        None => execute(&cli.command, None, &cli.output.out),
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            match outcome.deferred {
                Some(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
