use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{write_csv, write_json, CsvTable};
use super::presets::matches_table_ii;
use super::ExperimentError;
use crate::effective::{compute_effective, evolve_effective, EffectiveCoupling};
use crate::hilbert::SpaceLayout;
use crate::linalg::{ComplexMatrix, C64, ZERO};
use crate::model::{build_collapse_ops, build_hamiltonian, Preset, SystemParams};
use crate::modulation::{
    frame_alignment, modulated_provider, rwa_margin, ModulationParams, RwaReport, DEFAULT_OMEGA0, DEFAULT_OMEGA_D,
    DEFAULT_SIDEBAND_SIGN,
};
use crate::observables::{coarse_grain, concurrence, populations};
use crate::solver::{evolve_master, Diagnostics, Hamiltonian, SolverControls, TimeSpan, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    /// Left qubit excited.
    Eg,
    /// Right qubit excited.
    Ge,
}

impl Initial {
    pub fn occupations(self) -> [usize; 4] {
        match self {
            Initial::Eg => [1, 0, 0, 0],
            Initial::Ge => [0, 1, 0, 0],
        }
    }

    pub fn amplitudes(self) -> [C64; 2] {
        let one = C64::new(1.0, 0.0);
        match self {
            Initial::Eg => [one, ZERO],
            Initial::Ge => [ZERO, one],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Initial::Eg => "eg",
            Initial::Ge => "ge",
        }
    }
}

impl FromStr for Initial {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "eg" => Ok(Initial::Eg),
            "ge" => Ok(Initial::Ge),
            other => Err(format!("unknown initial state '{other}' (expected eg or ge)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Engineered,
    Modulated,
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    Populations,
    Occupations,
    Concurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PresetSpec {
    Named(Preset),
    Custom(SystemParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationConfig {
    #[serde(default = "default_omega_d")]
    pub omega_d: [f64; 2],
    /// Modulation indices `A_k / omega_dk`; defaults to the tabulated ones for named presets.
    #[serde(default)]
    pub indices: Option<[f64; 2]>,
    #[serde(default = "default_sideband_sign")]
    pub sideband_sign: [i32; 2],
    #[serde(default = "default_omega0")]
    pub omega0: f64,
}

fn default_omega_d() -> [f64; 2] {
    DEFAULT_OMEGA_D
}
fn default_sideband_sign() -> [i32; 2] {
    DEFAULT_SIDEBAND_SIGN
}
fn default_omega0() -> f64 {
    DEFAULT_OMEGA0
}
fn default_tmax() -> f64 {
    400.0
}
fn default_output_step() -> f64 {
    0.5
}
fn default_fock_dim() -> usize {
    3
}
fn default_outputs() -> Vec<Output> {
    vec![Output::Populations, Output::Occupations]
}
fn default_initial() -> Initial {
    Initial::Eg
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self { omega_d: DEFAULT_OMEGA_D, indices: None, sideband_sign: DEFAULT_SIDEBAND_SIGN, omega0: DEFAULT_OMEGA0 }
    }
}

/// One simulation request. Times are in units of `1/kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub preset: PresetSpec,
    /// Coherent phase difference; ignored for custom parameter sets.
    #[serde(default)]
    pub dphi: f64,
    #[serde(default = "default_initial")]
    pub initial: Initial,
    #[serde(default = "default_tmax")]
    pub tmax: f64,
    #[serde(default = "default_output_step")]
    pub output_step: f64,
    /// `(gamma, gamma_phi)`.
    #[serde(default)]
    pub decoherence: Option<[f64; 2]>,
    /// Detuning of the right qubit.
    #[serde(default)]
    pub qubit_detuning: Option<f64>,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
    #[serde(default = "default_fock_dim")]
    pub fock_dim: usize,
    /// Replaces the 0.1 prefactor of the coupling recipe for named presets.
    #[serde(default)]
    pub coupling_prefactor: Option<f64>,
    #[serde(default)]
    pub modulation: Option<ModulationConfig>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, preset: Preset, dphi: f64, initial: Initial) -> Self {
        Self {
            name: name.into(),
            preset: PresetSpec::Named(preset),
            dphi,
            initial,
            tmax: default_tmax(),
            output_step: default_output_step(),
            decoherence: None,
            qubit_detuning: None,
            model: ModelKind::Engineered,
            outputs: default_outputs(),
            fock_dim: default_fock_dim(),
            coupling_prefactor: None,
            modulation: None,
        }
    }

    pub fn custom(name: impl Into<String>, params: SystemParams, initial: Initial) -> Self {
        Self { preset: PresetSpec::Custom(params), ..Self::new(name, Preset::SetI, 0.0, initial) }
    }

    pub fn with_concurrence(mut self) -> Self {
        if !self.outputs.contains(&Output::Concurrence) {
            self.outputs.push(Output::Concurrence);
        }
        self
    }

    pub fn with_model(mut self, model: ModelKind) -> Self {
        self.model = model;
        self
    }

    pub fn with_tmax(mut self, tmax: f64) -> Self {
        self.tmax = tmax;
        self
    }

    pub fn with_decoherence(mut self, gamma: f64, gamma_phi: f64) -> Self {
        self.decoherence = Some([gamma, gamma_phi]);
        self
    }

    pub fn with_qubit_detuning(mut self, detuning: f64) -> Self {
        self.qubit_detuning = Some(detuning);
        self
    }

    pub fn with_prefactor(mut self, prefactor: f64) -> Self {
        self.coupling_prefactor = Some(prefactor);
        self
    }

    fn err(&self, reason: impl Into<String>) -> ExperimentError {
        ExperimentError::Scenario { name: self.name.clone(), reason: reason.into() }
    }

    pub fn wants(&self, o: Output) -> bool {
        self.outputs.contains(&o)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(self.err("name must be non-empty and contain no path separators"));
        }
        if !(self.tmax > 0.0 && self.tmax.is_finite()) {
            return Err(self.err(format!("tmax must be positive, got {}", self.tmax)));
        }
        if !(self.output_step > 0.0) || self.output_step > self.tmax {
            return Err(self.err(format!("output step {} not in (0, tmax]", self.output_step)));
        }
        let n = (self.tmax / self.output_step).round();
        if (n * self.output_step - self.tmax).abs() > 1e-9 * self.tmax {
            return Err(self.err(format!("output step {} does not divide tmax {}", self.output_step, self.tmax)));
        }
        if self.fock_dim < 2 {
            return Err(self.err("fock_dim must be at least 2"));
        }
        if self.model == ModelKind::Modulated && self.qubit_detuning.is_some() {
            return Err(self.err("qubit detuning is not supported by the modulated model"));
        }
        let p = self.resolve_params()?;
        p.validate()?;
        if let PresetSpec::Named(preset) = self.preset {
            if self.coupling_prefactor.is_none() && !matches_table_ii(preset, &p) {
                return Err(self.err("named preset does not reproduce the tabulated values"));
            }
        }
        Ok(())
    }

    /// Engineered-frame parameters including decoherence and detuning overrides.
    pub fn resolve_params(&self) -> Result<SystemParams, ExperimentError> {
        let mut p = match &self.preset {
            PresetSpec::Named(preset) => match self.coupling_prefactor {
                Some(f) => SystemParams::with_scaled_couplings(preset.mode_detunings(), 1.0, self.dphi, f),
                None => SystemParams::preset(*preset, self.dphi),
            },
            PresetSpec::Custom(p) => p.clone(),
        };
        if let Some([gamma, gamma_phi]) = self.decoherence {
            p = p.with_decoherence(gamma, gamma_phi);
        }
        if let Some(d) = self.qubit_detuning {
            p = p.with_qubit_detuning([0.0, d]);
        }
        Ok(p)
    }

    pub fn resolve_modulation(&self, p: &SystemParams) -> Result<ModulationParams, ExperimentError> {
        let cfg = self.modulation.clone().unwrap_or_default();
        let indices = match (cfg.indices, &self.preset) {
            (Some(i), _) => i,
            (None, PresetSpec::Named(Preset::SetI)) => [1.0, 1.0],
            (None, PresetSpec::Named(Preset::SetII)) => [0.2, 0.9],
            (None, PresetSpec::Custom(_)) => return Err(self.err("custom parameters need modulation.indices")),
        };
        Ok(ModulationParams::for_targets(p.delta, p.g, cfg.omega_d, indices, cfg.sideband_sign, cfg.omega0)?)
    }

    fn span(&self, step: f64) -> TimeSpan {
        let n = (self.tmax / step).round().max(1.0);
        TimeSpan::new(0.0, self.tmax, self.tmax / n)
    }
}

/// Reads a scenario from a TOML file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::Io { path: path.display().to_string(), source: e })?;
    toml::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub max_p_left: f64,
    pub max_p_right: f64,
    pub final_p_left: f64,
    pub final_p_right: f64,
    pub max_concurrence: Option<f64>,
    pub final_concurrence: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSettings {
    pub integrator: &'static str,
    pub dt: f64,
    pub steps: usize,
    pub output_step: f64,
    pub fock_dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub code_version: &'static str,
    pub scenario: Scenario,
    pub params: SystemParams,
    pub effective: Option<EffectiveCoupling>,
    pub modulation: Option<ModulationParams>,
    pub solver: SolverSettings,
    pub diagnostics: Option<Diagnostics>,
    pub summary: Summary,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub table: CsvTable,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn summarize(table: &CsvTable) -> Summary {
    let pl = table.column("P_L").unwrap_or(&[]);
    let pr = table.column("P_R").unwrap_or(&[]);
    let c = table.column("C");
    Summary {
        max_p_left: max_of(pl),
        max_p_right: max_of(pr),
        final_p_left: pl.last().copied().unwrap_or(f64::NAN),
        final_p_right: pr.last().copied().unwrap_or(f64::NAN),
        max_concurrence: c.map(max_of),
        final_concurrence: c.and_then(|c| c.last().copied()),
    }
}

fn trajectory_table(traj: &Trajectory, s: &Scenario) -> CsvTable {
    let mut t = CsvTable::new();
    t.push("t", traj.times.clone());
    t.push("P_L", traj.p_left.clone());
    t.push("P_R", traj.p_right.clone());
    if s.wants(Output::Occupations) {
        t.push("n1", traj.n1.clone());
        t.push("n2", traj.n2.clone());
    }
    if let Some(c) = &traj.concurrence {
        t.push("C", c.clone());
    }
    t
}

fn master_run(
    s: &Scenario,
    h: &Hamiltonian,
    p: &SystemParams,
    layout: &SpaceLayout,
    span: TimeSpan,
    omega_max: f64,
    snapshot_every: Option<usize>,
) -> Result<Trajectory, ExperimentError> {
    let collapse = build_collapse_ops(p, layout)?;
    let rho0 = layout.basis_density(&s.initial.occupations()).map_err(crate::model::ModelError::from)?;
    let mut controls = SolverControls::new(layout.clone(), SolverControls::default_step(p.max_kappa(), omega_max));
    controls.record_concurrence = s.wants(Output::Concurrence);
    controls.snapshot_every = snapshot_every;
    evolve_master(h, &collapse, &rho0, span, &controls)
        .map_err(|source| ExperimentError::Solver { name: s.name.clone(), source })
}

/// Runs a scenario in memory.
pub fn simulate(s: &Scenario) -> Result<ScenarioResult, ExperimentError> {
    s.validate()?;
    let p = s.resolve_params()?;
    let mut warnings = Vec::new();
    if p.adiabatic_warning() {
        warnings.push(format!("adiabaticity ratio {:.3} exceeds the elimination threshold", p.adiabaticity_ratio()));
    }
    let effective = compute_effective(&p).ok();
    let layout = SpaceLayout::standard(s.fock_dim, s.fock_dim).map_err(crate::model::ModelError::from)?;
    let (table, settings, diagnostics, modulation) = match s.model {
        ModelKind::Engineered => {
            let h = Hamiltonian::Static(build_hamiltonian(&p, &layout)?);
            let span = s.span(s.output_step);
            let traj = master_run(s, &h, &p, &layout, span, p.max_frequency(), None)?;
            let settings = solver_settings(&traj, span, s.fock_dim);
            (trajectory_table(&traj, s), settings, Some(traj.diagnostics), None)
        }
        ModelKind::Modulated => {
            let mp = s.resolve_modulation(&p)?;
            let report = rwa_margin(&mp, 4, 4)?;
            for f in report.flagged() {
                warnings.push(format!("RWA margin: sideband ({}, {}) of channel {} has ratio {:.3}", f.k, f.l, f.channel, f.ratio));
            }
            let h = modulated_provider(&mp, &layout)?;
            let span = s.span(s.output_step.min(modulated_output_step(&mp)));
            let traj = master_run(s, &h, &p, &layout, span, MODULATED_STEP_REFINEMENT * mp.max_frequency(), None)?;
            let settings = solver_settings(&traj, span, s.fock_dim);
            (trajectory_table(&traj, s), settings, Some(traj.diagnostics), Some(mp))
        }
        ModelKind::Effective => {
            if s.decoherence.is_some() {
                warnings.push("effective model ignores qubit decoherence".into());
            }
            let span = s.span(s.output_step);
            let traj = evolve_effective(&p, s.initial.amplitudes(), span, None)?;
            let mut t = CsvTable::new();
            t.push("t", traj.times.clone());
            t.push("P_L", traj.p_left());
            t.push("P_R", traj.p_right());
            if s.wants(Output::Concurrence) {
                let c = traj
                    .c_left
                    .iter()
                    .zip(&traj.c_right)
                    .map(|(&l, &r)| single_excitation_concurrence(l, r))
                    .collect::<Result<Vec<_>, _>>()?;
                t.push("C", c);
            }
            let settings = SolverSettings {
                integrator: "rk4-amplitudes",
                dt: traj.dt,
                steps: ((s.tmax / traj.dt).round()) as usize,
                output_step: span.output_step,
                fock_dim: 0,
            };
            (t, settings, None, None)
        }
    };
    Ok(ScenarioResult {
        code_version: env!("CARGO_PKG_VERSION"),
        scenario: s.clone(),
        params: p,
        effective,
        modulation,
        solver: settings,
        diagnostics,
        summary: summarize(&table),
        warnings,
        table,
    })
}

fn solver_settings(traj: &Trajectory, span: TimeSpan, fock_dim: usize) -> SolverSettings {
    SolverSettings {
        integrator: "rk4",
        dt: traj.diagnostics.dt,
        steps: traj.diagnostics.steps,
        output_step: span.output_step,
        fock_dim,
    }
}

/// Sampling fine enough to coarse-grain over one period of the first tone.
/// Extra step refinement for flux-modulated runs. At the default step the rank-one initial
/// state picks up eigenvalues near -1e-7 within the first modulation periods.
const MODULATED_STEP_REFINEMENT: f64 = 2.0;

fn modulated_output_step(mp: &ModulationParams) -> f64 {
    2.0 * PI / mp.omega_d[0] / 16.0
}

/// Concurrence of `c_L |eg> + c_R |ge>` mixed with `|gg>` for the missing norm.
fn single_excitation_concurrence(cl: C64, cr: C64) -> Result<f64, ExperimentError> {
    let mut rho = ComplexMatrix::zeros(4, 4);
    let (eg, ge) = (2, 1);
    rho[(eg, eg)] = cl * cl.conj();
    rho[(ge, ge)] = cr * cr.conj();
    rho[(eg, ge)] = cl * cr.conj();
    rho[(ge, eg)] = cr * cl.conj();
    rho[(0, 0)] = C64::new((1.0 - cl.norm_sqr() - cr.norm_sqr()).max(0.0), 0.0);
    let tr = rho.trace().re;
    let rho = rho.scale_real(1.0 / tr);
    Ok(concurrence(&rho)?.value)
}

/// Writes `<name>.csv` and `<name>.json` into `dir`.
pub fn write_result(dir: &Path, r: &ScenarioResult) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let csv = dir.join(format!("{}.csv", r.scenario.name));
    let json = dir.join(format!("{}.json", r.scenario.name));
    write_csv(&csv, &r.table)?;
    write_json(&json, r)?;
    Ok((csv, json))
}

pub fn run_scenario(s: &Scenario, dir: &Path) -> Result<ScenarioResult, ExperimentError> {
    let r = simulate(s)?;
    write_result(dir, &r)?;
    Ok(r)
}

/// Runs independent scenarios in the current rayon pool; results keep input order.
pub fn run_many(scenarios: &[Scenario]) -> Vec<Result<ScenarioResult, ExperimentError>> {
    scenarios.par_iter().map(simulate).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulationComparison {
    pub code_version: &'static str,
    pub name: String,
    pub initial: Initial,
    pub params: SystemParams,
    pub modulation: ModulationParams,
    pub rwa: RwaReport,
    pub coarse_grain_window: f64,
    pub max_difference: f64,
    pub diagnostics_full: Diagnostics,
    pub diagnostics_engineered: Diagnostics,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub table: CsvTable,
}

/// Compares the engineered model with the full modulated model, both averaged over one
/// period of the first tone.
///
/// `engineered` supplies the engineered-frame parameters (including decoherence);
/// `mp` drives the full rotating-frame Hamiltonian.
pub fn compare_models(
    name: &str,
    mp: &ModulationParams,
    engineered: &SystemParams,
    initial: Initial,
    tmax: f64,
    fock_dim: usize,
) -> Result<ModulationComparison, ExperimentError> {
    let s = Scenario {
        name: name.to_string(),
        initial,
        tmax,
        fock_dim,
        outputs: vec![Output::Populations],
        ..Scenario::custom(name, engineered.clone(), initial)
    };
    let mut warnings = Vec::new();
    let rwa = match rwa_margin(mp, 4, 4) {
        Ok(r) => {
            for f in r.flagged() {
                warnings.push(format!("RWA margin: sideband ({}, {}) of channel {} has ratio {:.3}", f.k, f.l, f.channel, f.ratio));
            }
            r
        }
        Err(e) => {
            warnings.push(format!("RWA margin: {e}"));
            RwaReport::default()
        }
    };
    let layout = SpaceLayout::standard(fock_dim, fock_dim).map_err(crate::model::ModelError::from)?;
    let span = s.span(modulated_output_step(mp));
    let omega_max = MODULATED_STEP_REFINEMENT * mp.max_frequency().max(engineered.max_frequency());
    let every = ((tmax / span.output_step) as usize / 50).max(1);
    let full = master_run(&s, &modulated_provider(mp, &layout)?, engineered, &layout, span, omega_max, Some(every))?;
    let h_eng = Hamiltonian::Static(build_hamiltonian(engineered, &layout)?);
    let eng = master_run(&s, &h_eng, engineered, &layout, span, omega_max, None)?;

    // the frame change is diagonal, so aligned populations must equal the raw ones
    let aligned = frame_alignment(mp, &layout, &full.snapshots)?;
    for ((t, rho), (_, raw)) in aligned.iter().zip(&full.snapshots) {
        let a = populations(rho, &layout)?;
        let b = populations(raw, &layout)?;
        if (a.p_left - b.p_left).abs() > 1e-12 || (a.p_right - b.p_right).abs() > 1e-12 {
            warnings.push(format!("frame alignment changed populations at t = {t}"));
        }
    }

    let window = 2.0 * PI / mp.omega_d[0];
    // both curves get the same window so that smoothing alone leaves no difference
    let full_l = coarse_grain(&full.times, &full.p_left, window)?;
    let full_r = coarse_grain(&full.times, &full.p_right, window)?;
    let eng_l = coarse_grain(&eng.times, &eng.p_left, window)?;
    let eng_r = coarse_grain(&eng.times, &eng.p_right, window)?;
    let diff_l: Vec<f64> = full_l.iter().zip(&eng_l).map(|(a, b)| (a - b).abs()).collect();
    let diff_r: Vec<f64> = full_r.iter().zip(&eng_r).map(|(a, b)| (a - b).abs()).collect();
    let max_difference = max_of(&diff_l).max(max_of(&diff_r));
    let mut table = CsvTable::new();
    table.push("t", eng.times.clone());
    table.push("P_L_engineered", eng_l);
    table.push("P_R_engineered", eng_r);
    table.push("P_L_full", full_l);
    table.push("P_R_full", full_r);
    table.push("diff_L", diff_l);
    table.push("diff_R", diff_r);
    Ok(ModulationComparison {
        code_version: env!("CARGO_PKG_VERSION"),
        name: name.to_string(),
        initial,
        params: engineered.clone(),
        modulation: mp.clone(),
        rwa,
        coarse_grain_window: window,
        max_difference,
        diagnostics_full: full.diagnostics,
        diagnostics_engineered: eng.diagnostics,
        warnings,
        table,
    })
}

/// Modulation check for a scenario: modulation resolved from its targets.
pub fn validate_modulation(s: &Scenario) -> Result<ModulationComparison, ExperimentError> {
    s.validate()?;
    let p = s.resolve_params()?;
    let mp = s.resolve_modulation(&p)?;
    compare_models(&s.name, &mp, &p, s.initial, s.tmax, s.fock_dim)
}

pub fn write_comparison(dir: &Path, c: &ModulationComparison) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let csv = dir.join(format!("{}.csv", c.name));
    let json = dir.join(format!("{}.json", c.name));
    write_csv(&csv, &c.table)?;
    write_json(&json, c)?;
    Ok((csv, json))
}
