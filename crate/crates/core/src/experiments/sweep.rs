use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{format_number, write_csv, write_json, CsvTable};
use super::ExperimentError;
use crate::effective::{compute_effective, detunings_for_delta_theta, h_factored, isolation_factor};
use crate::model::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Dh,
    /// `|h_fwd| / 2G`.
    HForward,
    /// `|h_back| / 2G`.
    HBackward,
}

impl std::str::FromStr for Quantity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dh" => Ok(Quantity::Dh),
            "h_forward" => Ok(Quantity::HForward),
            "h_backward" => Ok(Quantity::HBackward),
            other => Err(format!("unknown quantity '{other}' (dh, h_forward, h_backward)")),
        }
    }
}

/// How a `(dphi, dtheta)` cell is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepRoute {
    /// Detunings solved from `dtheta` at fixed kappa, couplings from the figure recipe,
    /// then the direct sums. `|dtheta| = pi` is unreachable.
    Realized,
    /// Equal-amplitude closed form with `G = 1`; covers the closed square.
    Factored,
}

impl std::str::FromStr for SweepRoute {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "realized" => Ok(SweepRoute::Realized),
            "factored" => Ok(SweepRoute::Factored),
            other => Err(format!("unknown route '{other}' (realized, factored)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub dphi_axis: Vec<f64>,
    pub dtheta_axis: Vec<f64>,
    pub quantity: Quantity,
    pub route: SweepRoute,
}

/// `n` points on `[-pi, pi]` with `-pi`, `0` (odd `n`) and `pi` represented exactly.
pub fn symmetric_axis(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let m = (n - 1) as f64;
    (0..n).map(|i| PI * (2.0 * i as f64 - m) / m).collect()
}

impl SweepGrid {
    pub fn square(n: usize, quantity: Quantity, route: SweepRoute) -> Self {
        Self { dphi_axis: symmetric_axis(n), dtheta_axis: symmetric_axis(n), quantity, route }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        for (name, axis) in [("dphi", &self.dphi_axis), ("dtheta", &self.dtheta_axis)] {
            if axis.is_empty() {
                return Err(ExperimentError::Grid(format!("{name} axis is empty")));
            }
            if axis.iter().any(|x| !x.is_finite()) {
                return Err(ExperimentError::Grid(format!("{name} axis has non-finite values")));
            }
            let up = axis.windows(2).all(|w| w[1] > w[0]);
            let down = axis.windows(2).all(|w| w[1] < w[0]);
            if !(up || down) {
                return Err(ExperimentError::Grid(format!("{name} axis is not strictly monotone")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub code_version: &'static str,
    pub grid: SweepGrid,
    pub kappa: f64,
    /// `values[i][j]` at `dtheta_axis[i]`, `dphi_axis[j]`; NaN marks an undefined cell.
    #[serde(skip)]
    pub values: Vec<Vec<f64>>,
    pub undefined_count: usize,
}

impl SweepResult {
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i][j];
        v.is_finite().then_some(v)
    }
}

fn pick(q: Quantity, fwd: f64, back: f64, two_g: f64) -> f64 {
    match q {
        Quantity::Dh => f64::NAN,
        Quantity::HForward => fwd / two_g,
        Quantity::HBackward => back / two_g,
    }
}

/// Evaluates the grid. `base` supplies the common decay rate `kappa` of the realized route.
pub fn sweep_isolation(grid: &SweepGrid, base: &SystemParams) -> Result<SweepResult, ExperimentError> {
    grid.validate()?;
    let kappa = base.kappa[0];
    if grid.route == SweepRoute::Realized {
        let bad: Vec<String> = grid
            .dtheta_axis
            .iter()
            .filter(|d| detunings_for_delta_theta(**d, kappa).is_err())
            .map(|d| format!("{d}"))
            .collect();
        if !bad.is_empty() {
            return Err(ExperimentError::Grid(format!("unreachable dtheta values: {}", bad.join(", "))));
        }
    }
    let rows: Result<Vec<Vec<f64>>, ExperimentError> = grid
        .dtheta_axis
        .par_iter()
        .map(|&dtheta| {
            grid.dphi_axis
                .iter()
                .map(|&dphi| -> Result<f64, ExperimentError> {
                    let (fwd, back, two_g) = match grid.route {
                        SweepRoute::Factored => {
                            let (f, b) = h_factored(1.0, 0.0, PI / 2.0, dphi, dtheta);
                            (f, b, 2.0)
                        }
                        SweepRoute::Realized => {
                            let delta = detunings_for_delta_theta(dtheta, kappa)?;
                            let p = SystemParams::with_figure_couplings(delta, kappa, dphi);
                            let e = compute_effective(&p)?;
                            (e.h_right, e.h_left, 2.0 * e.amp[0])
                        }
                    };
                    Ok(match grid.quantity {
                        Quantity::Dh => isolation_factor(fwd, back).unwrap_or(f64::NAN),
                        q => pick(q, fwd.norm(), back.norm(), two_g),
                    })
                })
                .collect()
        })
        .collect();
    let values = rows?;
    let undefined_count = values.iter().flatten().filter(|v| v.is_nan()).count();
    Ok(SweepResult { code_version: env!("CARGO_PKG_VERSION"), grid: grid.clone(), kappa, values, undefined_count })
}

/// Normalized couplings along the unidirectional curve `dphi = dtheta - pi` at
/// `n` interior points of `dtheta in (0, pi)`.
pub fn isolation_curve(n: usize) -> CsvTable {
    let dtheta: Vec<f64> = (1..=n).map(|i| PI * i as f64 / (n + 1) as f64).collect();
    let mut fwd = Vec::with_capacity(n);
    let mut back = Vec::with_capacity(n);
    for &d in &dtheta {
        let (f, b) = h_factored(1.0, 0.0, PI / 2.0, d - PI, d);
        fwd.push(f.norm() / 2.0);
        back.push(b.norm() / 2.0);
    }
    let mut t = CsvTable::new();
    t.push("dphi", dtheta.iter().map(|d| d - PI).collect());
    t.push("dtheta", dtheta.clone());
    t.push("h_forward_norm", fwd);
    t.push("h_backward_norm", back);
    t.push("abs_sin_dtheta", dtheta.iter().map(|d| d.sin().abs()).collect());
    t
}

/// Matrix CSV: first column `dtheta`, then one column per `dphi` value (header holds the value).
pub fn write_sweep(dir: &Path, name: &str, r: &SweepResult) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let mut t = CsvTable::new();
    t.push("dtheta", r.grid.dtheta_axis.clone());
    for (j, &dphi) in r.grid.dphi_axis.iter().enumerate() {
        t.push(&format_number(dphi), r.values.iter().map(|row| row[j]).collect());
    }
    let csv = dir.join(format!("{name}.csv"));
    let json = dir.join(format!("{name}.json"));
    write_csv(&csv, &t)?;
    write_json(&json, r)?;
    Ok((csv, json))
}
