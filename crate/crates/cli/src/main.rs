//! `nonrecip` command-line runner.
//!
//! Settings are resolved in three layers: built-in defaults, then the TOML file given by
//! `--config`, then individual flags. A flag always wins over the file.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use nonrecip::experiments::{
    isolation_curve, load_scenario, presets_report, run_many, selftest, sweep_isolation, validate_modulation,
    write_comparison, write_csv, write_result, write_sweep, Initial, ModelKind, Quantity, Scenario, ScenarioResult,
    SweepGrid, SweepRoute, OUT_DIR_ENV,
};
use nonrecip::model::{Preset, FIG_GAMMA, FIG_GAMMA_PHI};
use nonrecip::SystemParams;

#[derive(Parser)]
#[command(name = "nonrecip", version, about = "Loss-induced nonreciprocal qubit coupling simulator")]
struct Cli {
    /// Worker threads for sweeps and independent scenarios (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ScenarioArgs {
    /// TOML scenario file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    /// Coherent phase difference in radians.
    #[arg(long, allow_hyphen_values = true)]
    dphi: Option<f64>,
    /// Initial state; both are run when neither file nor flag sets it.
    #[arg(long)]
    initial: Option<Initial>,
    /// Final time in units of 1/kappa.
    #[arg(long, allow_hyphen_values = true)]
    tmax: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Isolation factor (or normalized couplings) over the (dphi, dtheta) square.
    IsolationMap {
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long, default_value = "dh")]
        quantity: Quantity,
        #[arg(long, default_value = "factored")]
        route: SweepRoute,
    },
    /// Population dynamics.
    Dynamics(ScenarioArgs),
    /// Population dynamics with concurrence.
    Concurrence(ScenarioArgs),
    /// Concurrence with and without qubit relaxation and dephasing.
    Decoherence {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = FIG_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = FIG_GAMMA_PHI)]
        gamma_phi: f64,
    },
    /// Dynamics with the right qubit detuned.
    Detuning {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Right-qubit detunings in units of kappa.
        #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.1])]
        delta_r: Vec<f64>,
    },
    /// Engineered model against the coarse-grained flux-modulated model.
    ModulationCheck(ScenarioArgs),
    /// Print the parameter tables.
    Presets,
    /// Run the quick invariant checks.
    Selftest,
}

impl ScenarioArgs {
    /// Base scenario: file if given, otherwise the isolating configuration of the preset.
    fn base(&self, name: &str) -> Result<(Scenario, bool)> {
        let (mut s, initial_set) = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let has_initial = text.lines().any(|l| l.trim_start().starts_with("initial"));
                (load_scenario(path)?, has_initial)
            }
            None => (Scenario::new(name, Preset::SetII, -PI / 2.0, Initial::Eg), false),
        };
        if let Some(p) = self.preset {
            s.preset = nonrecip::experiments::PresetSpec::Named(p);
        }
        if let Some(d) = self.dphi {
            s.dphi = d;
        }
        if let Some(t) = self.tmax {
            s.tmax = t;
        }
        if let Some(i) = self.initial {
            s.initial = i;
        }
        Ok((s, initial_set || self.initial.is_some()))
    }

    /// One scenario per requested initial state, named `<prefix>_<preset>_<initial>`.
    fn expand(&self, prefix: &str) -> Result<Vec<Scenario>> {
        let (s, fixed) = self.base(prefix)?;
        let initials = if fixed { vec![s.initial] } else { vec![Initial::Eg, Initial::Ge] };
        let tag = match &s.preset {
            nonrecip::experiments::PresetSpec::Named(p) => p.name().to_string(),
            nonrecip::experiments::PresetSpec::Custom(_) => "custom".to_string(),
        };
        let stem = if self.config.is_some() { s.name.clone() } else { format!("{prefix}_{tag}") };
        Ok(initials
            .into_iter()
            .map(|i| Scenario { name: format!("{stem}_{}", i.name()), initial: i, ..s.clone() })
            .collect())
    }
}

fn run_all(scenarios: &[Scenario], out: &Path) -> Result<Vec<ScenarioResult>> {
    for s in scenarios {
        s.validate()?;
    }
    let mut done = Vec::new();
    for r in run_many(scenarios) {
        let r = r?;
        let (csv, json) = write_result(out, &r)?;
        for w in &r.warnings {
            warn!("{}: {w}", r.scenario.name);
        }
        let c = r.summary.max_concurrence.map(|c| format!(", max C {c:.4}")).unwrap_or_default();
        println!(
            "{}: max P_L {:.4e}, max P_R {:.4e}{c} -> {}, {}",
            r.scenario.name,
            r.summary.max_p_left,
            r.summary.max_p_right,
            csv.display(),
            json.display()
        );
        done.push(r);
    }
    Ok(done)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    let out = cli.out.as_path();
    match cli.command {
        Command::IsolationMap { points, quantity, route } => {
            if points < 2 {
                bail!("--points must be at least 2");
            }
            let mut grid = SweepGrid::square(points, quantity, route);
            if route == SweepRoute::Realized {
                grid.dtheta_axis = grid.dtheta_axis[1..points - 1].to_vec();
                info!("realized route: dropping the unreachable dtheta = +-pi rows");
            }
            let base = SystemParams::preset(Preset::SetI, 0.0);
            let r = sweep_isolation(&grid, &base)?;
            let (csv, json) = write_sweep(out, "isolation_map", &r)?;
            let curve = out.join("isolation_curve.csv");
            write_csv(&curve, &isolation_curve(100))?;
            println!(
                "isolation map {}x{} ({} undefined cells) -> {}, {}, {}",
                grid.dtheta_axis.len(),
                grid.dphi_axis.len(),
                r.undefined_count,
                csv.display(),
                json.display(),
                curve.display()
            );
        }
        Command::Dynamics(a) => {
            run_all(&a.expand("dynamics")?, out)?;
        }
        Command::Concurrence(a) => {
            let s: Vec<_> = a.expand("concurrence")?.into_iter().map(Scenario::with_concurrence).collect();
            run_all(&s, out)?;
        }
        Command::Decoherence { scenario, gamma, gamma_phi } => {
            let mut s = Vec::new();
            for base in scenario.expand("decoherence")? {
                let base = base.with_concurrence();
                s.push(Scenario { name: format!("{}_ideal", base.name), ..base.clone() });
                s.push(Scenario { name: format!("{}_noisy", base.name), ..base.with_decoherence(gamma, gamma_phi) });
            }
            let r = run_all(&s, out)?;
            for pair in r.chunks(2) {
                if let (Some(a), Some(b)) = (pair[0].summary.max_concurrence, pair[1].summary.max_concurrence) {
                    if a > 0.0 {
                        println!("{}: noisy/ideal peak concurrence {:.3}", pair[1].scenario.name, b / a);
                    }
                }
            }
        }
        Command::Detuning { scenario, delta_r } => {
            let mut s = Vec::new();
            for base in scenario.expand("detuning")? {
                for &d in &delta_r {
                    s.push(Scenario { name: format!("{}_dR{d}", base.name), ..base.clone().with_qubit_detuning(d) });
                }
            }
            run_all(&s, out)?;
        }
        Command::ModulationCheck(a) => {
            for s in a.expand("modulation")? {
                let s = s.with_model(ModelKind::Modulated);
                let c = validate_modulation(&s)?;
                for w in &c.warnings {
                    warn!("{}: {w}", c.name);
                }
                let (csv, json) = write_comparison(out, &c)?;
                println!("{}: max coarse-grained difference {:.4} -> {}, {}", c.name, c.max_difference, csv.display(), json.display());
            }
        }
        Command::Presets => print!("{}", presets_report()),
        Command::Selftest => {
            let results = selftest();
            let mut ok = true;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            // library errors already embed their source in the message
            let mut msg = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&text);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
