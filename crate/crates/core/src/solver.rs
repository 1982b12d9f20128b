//! Fixed-step RK4 integration of the Lindblad master equation
//!
//! `d rho/dt = -i[H(t), rho] + sum_k rate_k D[O_k] rho`,
//! `D[O] rho = O rho O^dag - {O^dag O, rho}/2`.
//!
//! The generator is applied as `K rho + (K rho)^dag + sum_k rate_k O_k rho O_k^dag`
//! with `K = -i H - (1/2) sum_k rate_k O_k^dag O_k`. Operators are converted to a
//! list of their nonzero entries once; the model operators have a handful of
//! nonzeros per row, which keeps a step at a few thousand complex multiply-adds.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::SpaceLayout;
use crate::linalg::{hermitian_eig, ComplexMatrix, LinalgError, C64, I, ZERO};
use crate::model::CollapseOp;
use crate::observables::{self, ObservableError};

/// Abort when `|tr rho - 1|` exceeds this at an output step.
pub const TRACE_FAILURE_TOL: f64 = 1e-6;
/// Abort when the smallest eigenvalue of `rho` drops below this.
pub const POSITIVITY_FAILURE_TOL: f64 = -1e-7;
const INITIAL_STATE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid initial state: {0}")]
    InitialState(String),
    #[error("invalid collapse channel '{label}': {reason}")]
    Channel { label: String, reason: String },
    #[error("invalid time span: {0}")]
    TimeSpan(String),
    #[error("operator dimension {got} does not match state dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("trace drifted by {drift:e} at t = {t}; reduce the step size")]
    StepSize { t: f64, drift: f64 },
    #[error("state lost positivity at t = {t} (min eigenvalue {min_eigenvalue:e})")]
    Quality { t: f64, min_eigenvalue: f64 },
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type MatrixFn = Arc<dyn Fn(f64) -> ComplexMatrix + Send + Sync>;

/// A Hermitian operator term multiplied by a real function of time.
#[derive(Clone)]
pub struct DrivenTerm {
    pub operator: ComplexMatrix,
    pub coefficient: Coefficient,
}

impl DrivenTerm {
    pub fn new(operator: ComplexMatrix, coefficient: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { operator, coefficient: Arc::new(coefficient) }
    }
}

/// Hamiltonian supplied to [`evolve_master`].
#[derive(Clone)]
pub enum Hamiltonian {
    Static(ComplexMatrix),
    /// `H(t) = constant + sum_k f_k(t) H_k`.
    Driven { constant: ComplexMatrix, terms: Vec<DrivenTerm> },
    /// Arbitrary `t -> H(t)`, re-evaluated at every RK4 stage.
    Function { dim: usize, f: MatrixFn },
}

impl Hamiltonian {
    pub fn function(dim: usize, f: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'static) -> Self {
        Hamiltonian::Function { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Hamiltonian::Static(h) => h.rows(),
            Hamiltonian::Driven { constant, .. } => constant.rows(),
            Hamiltonian::Function { dim, .. } => *dim,
        }
    }

    pub fn at(&self, t: f64) -> ComplexMatrix {
        match self {
            Hamiltonian::Static(h) => h.clone(),
            Hamiltonian::Driven { constant, terms } => {
                let mut h = constant.clone();
                for term in terms {
                    h += &term.operator.scale_real((term.coefficient)(t));
                }
                h
            }
            Hamiltonian::Function { f, .. } => f(t),
        }
    }
}

impl std::fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hamiltonian::Static(_) => write!(f, "Hamiltonian::Static(dim {})", self.dim()),
            Hamiltonian::Driven { terms, .. } => {
                write!(f, "Hamiltonian::Driven(dim {}, {} terms)", self.dim(), terms.len())
            }
            Hamiltonian::Function { .. } => write!(f, "Hamiltonian::Function(dim {})", self.dim()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub t0: f64,
    pub t1: f64,
    pub output_step: f64,
}

impl TimeSpan {
    pub fn new(t0: f64, t1: f64, output_step: f64) -> Self {
        Self { t0, t1, output_step }
    }

    fn intervals(&self) -> Result<usize, SolverError> {
        if !(self.t1 > self.t0) || !(self.output_step > 0.0) || !self.t1.is_finite() {
            return Err(SolverError::TimeSpan(format!("{self:?}")));
        }
        let n = ((self.t1 - self.t0) / self.output_step).round();
        if n < 1.0 || ((self.t0 + n * self.output_step) - self.t1).abs() > 1e-9 * self.t1.abs().max(1.0) {
            return Err(SolverError::TimeSpan(format!(
                "output step {} does not divide [{}, {}]",
                self.output_step, self.t0, self.t1
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverControls {
    /// Upper bound on the RK4 step; the actual step divides the output step evenly.
    pub max_dt: f64,
    pub layout: SpaceLayout,
    pub record_concurrence: bool,
    /// Keep a density-matrix snapshot every this many output steps.
    pub snapshot_every: Option<usize>,
    /// Diagonalize `rho` at every output step and enforce positivity.
    pub check_positivity: bool,
}

impl SolverControls {
    pub fn new(layout: SpaceLayout, max_dt: f64) -> Self {
        Self { max_dt, layout, record_concurrence: false, snapshot_every: None, check_positivity: true }
    }

    /// Default step rule `min(0.02 / kappa, (2 pi / omega_max) / 40)`.
    pub fn default_step(kappa_max: f64, omega_max: f64) -> f64 {
        let mut dt = 0.02 / kappa_max;
        if omega_max > 0.0 {
            dt = dt.min(2.0 * PI / omega_max / 40.0);
        }
        dt
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub dt: f64,
    pub steps: usize,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    /// Smallest eigenvalue seen at any output step (only when positivity is checked).
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub p_left: Vec<f64>,
    pub p_right: Vec<f64>,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub concurrence: Option<Vec<f64>>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, ComplexMatrix)>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn max_p_left(&self) -> f64 {
        self.p_left.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_p_right(&self) -> f64 {
        self.p_right.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_concurrence(&self) -> Option<f64> {
        self.concurrence.as_ref().map(|c| c.iter().copied().fold(0.0, f64::max))
    }
}

/// Nonzero entries of an operator, row-major.
#[derive(Debug, Clone)]
struct SparseOp {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_dense(m: &ComplexMatrix) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                let v = m[(r, c)];
                if v != ZERO {
                    entries.push((r, c, v));
                }
            }
        }
        Self { entries }
    }

    /// `out += s * (self . x)` for row-major `n x n` dense `x`.
    fn mul_add(&self, s: C64, x: &[C64], out: &mut [C64], n: usize) {
        for &(r, c, v) in &self.entries {
            let w = v * s;
            let src = &x[c * n..(c + 1) * n];
            let dst = &mut out[r * n..(r + 1) * n];
            for (o, &xv) in dst.iter_mut().zip(src) {
                *o += w * xv;
            }
        }
    }
}

struct Generator {
    n: usize,
    constant: SparseOp,
    driven: Vec<(SparseOp, Coefficient)>,
    function: Option<(MatrixFn, ComplexMatrix)>,
    jumps: Vec<(SparseOp, f64)>,
    a: Vec<C64>,
    b: Vec<C64>,
    bt: Vec<C64>,
}

impl Generator {
    fn new(h: &Hamiltonian, collapse: &[CollapseOp]) -> Self {
        let n = h.dim();
        let mut anti = ComplexMatrix::zeros(n, n);
        for op in collapse {
            anti += &op.operator.dagger().matmul(&op.operator).scale_real(-0.5 * op.rate);
        }
        let (constant, driven, function) = match h {
            Hamiltonian::Static(m) => (SparseOp::from_dense(&(&m.scale(-I) + &anti)), Vec::new(), None),
            Hamiltonian::Driven { constant, terms } => (
                SparseOp::from_dense(&(&constant.scale(-I) + &anti)),
                terms
                    .iter()
                    .map(|t| (SparseOp::from_dense(&t.operator.scale(-I)), t.coefficient.clone()))
                    .collect(),
                None,
            ),
            Hamiltonian::Function { f, .. } => (SparseOp { entries: Vec::new() }, Vec::new(), Some((f.clone(), anti))),
        };
        let jumps = collapse
            .iter()
            .filter(|op| op.rate > 0.0)
            .map(|op| (SparseOp::from_dense(&op.operator), op.rate))
            .collect();
        Self { n, constant, driven, function, jumps, a: vec![ZERO; n * n], b: vec![ZERO; n * n], bt: vec![ZERO; n * n] }
    }

    /// `out = L(t) rho` for Hermitian `rho`.
    fn apply(&mut self, t: f64, rho: &[C64], out: &mut [C64]) {
        let n = self.n;
        let one = C64::new(1.0, 0.0);
        self.a.iter_mut().for_each(|z| *z = ZERO);
        self.constant.mul_add(one, rho, &mut self.a, n);
        for (op, f) in &self.driven {
            let s = f(t);
            if s != 0.0 {
                op.mul_add(C64::new(s, 0.0), rho, &mut self.a, n);
            }
        }
        if let Some((f, anti)) = &self.function {
            let k = &f(t).scale(-I) + anti;
            SparseOp::from_dense(&k).mul_add(one, rho, &mut self.a, n);
        }
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = self.a[r * n + c] + self.a[c * n + r].conj();
            }
        }
        for (op, rate) in &self.jumps {
            // O rho O^dag = O (O rho)^dag for Hermitian rho
            self.b.iter_mut().for_each(|z| *z = ZERO);
            op.mul_add(one, rho, &mut self.b, n);
            for r in 0..n {
                for c in 0..n {
                    self.bt[r * n + c] = self.b[c * n + r].conj();
                }
            }
            op.mul_add(C64::new(*rate, 0.0), &self.bt, out, n);
        }
    }
}

fn validate_initial(rho0: &ComplexMatrix, dim: usize) -> Result<(), SolverError> {
    if rho0.rows() != dim || rho0.cols() != dim {
        return Err(SolverError::Dimension { expected: dim, got: rho0.rows() });
    }
    let herm = rho0.hermiticity_error();
    if herm > INITIAL_STATE_TOL {
        return Err(SolverError::InitialState(format!("not Hermitian ({herm:e})")));
    }
    let tr = rho0.trace();
    if (tr.re - 1.0).abs() > INITIAL_STATE_TOL || tr.im.abs() > INITIAL_STATE_TOL {
        return Err(SolverError::InitialState(format!("trace {tr}")));
    }
    let min = hermitian_eig(rho0)?.min_value();
    if min < -INITIAL_STATE_TOL {
        return Err(SolverError::InitialState(format!("negative eigenvalue {min:e}")));
    }
    Ok(())
}

/// Integrates the master equation and records observables on the output grid.
pub fn evolve_master(
    h: &Hamiltonian,
    collapse: &[CollapseOp],
    rho0: &ComplexMatrix,
    span: TimeSpan,
    controls: &SolverControls,
) -> Result<Trajectory, SolverError> {
    let n = h.dim();
    if controls.layout.total_dim() != n {
        return Err(SolverError::Dimension { expected: n, got: controls.layout.total_dim() });
    }
    for op in collapse {
        if !(op.rate >= 0.0 && op.rate.is_finite()) {
            return Err(SolverError::Channel { label: op.label.clone(), reason: format!("rate {}", op.rate) });
        }
        if op.operator.rows() != n || op.operator.cols() != n {
            return Err(SolverError::Dimension { expected: n, got: op.operator.rows() });
        }
    }
    validate_initial(rho0, n)?;
    if !(controls.max_dt > 0.0) {
        return Err(SolverError::TimeSpan(format!("step {}", controls.max_dt)));
    }
    let intervals = span.intervals()?;
    let substeps = (span.output_step / controls.max_dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let dt = span.output_step / substeps as f64;

    let mut gen = Generator::new(h, collapse);
    let mut rho = rho0.hermitian_part().into_vec();
    let len = rho.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]);

    let mut traj = Trajectory {
        concurrence: controls.record_concurrence.then(Vec::new),
        diagnostics: Diagnostics { dt, min_eigenvalue: f64::INFINITY, ..Default::default() },
        ..Default::default()
    };

    let half = C64::new(0.5 * dt, 0.0);
    let full = C64::new(dt, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);

    for out_index in 0..=intervals {
        let t = span.t0 + out_index as f64 * span.output_step;
        if out_index > 0 {
            for s in 0..substeps {
                let ts = t - span.output_step + s as f64 * dt;
                gen.apply(ts, &rho, &mut k1);
                for i in 0..len {
                    tmp[i] = rho[i] + half * k1[i];
                }
                gen.apply(ts + 0.5 * dt, &tmp, &mut k2);
                for i in 0..len {
                    tmp[i] = rho[i] + half * k2[i];
                }
                gen.apply(ts + 0.5 * dt, &tmp, &mut k3);
                for i in 0..len {
                    tmp[i] = rho[i] + full * k3[i];
                }
                gen.apply(ts + dt, &tmp, &mut k4);
                for i in 0..len {
                    rho[i] += sixth * (k1[i] + two * (k2[i] + k3[i]) + k4[i]);
                }
            }
            traj.diagnostics.steps += substeps;
        }
        let state = ComplexMatrix::from_vec(n, n, rho.clone()).expect("square state");
        record(&mut traj, t, &state, out_index, controls)?;
        // re-symmetrize so roundoff asymmetry does not accumulate
        rho = state.hermitian_part().into_vec();
    }
    Ok(traj)
}

fn record(
    traj: &mut Trajectory,
    t: f64,
    rho: &ComplexMatrix,
    out_index: usize,
    controls: &SolverControls,
) -> Result<(), SolverError> {
    let d = &mut traj.diagnostics;
    let drift = (rho.trace() - C64::new(1.0, 0.0)).norm();
    if drift > TRACE_FAILURE_TOL || !drift.is_finite() {
        return Err(SolverError::StepSize { t, drift });
    }
    d.max_trace_error = d.max_trace_error.max(drift);
    d.max_hermiticity_error = d.max_hermiticity_error.max(rho.hermiticity_error());
    if controls.check_positivity {
        let min = hermitian_eig(&rho.hermitian_part())?.min_value();
        if min < POSITIVITY_FAILURE_TOL {
            return Err(SolverError::Quality { t, min_eigenvalue: min });
        }
        d.min_eigenvalue = d.min_eigenvalue.min(min);
    }
    let pops = observables::populations(rho, &controls.layout)?;
    traj.times.push(t);
    traj.p_left.push(pops.p_left);
    traj.p_right.push(pops.p_right);
    traj.n1.push(pops.n1);
    traj.n2.push(pops.n2);
    if let Some(c) = traj.concurrence.as_mut() {
        let rho2 = observables::two_qubit_state(&rho.hermitian_part(), &controls.layout)?;
        c.push(observables::concurrence(&rho2)?.value);
    }
    if let Some(every) = controls.snapshot_every {
        if every > 0 && out_index % every == 0 {
            traj.snapshots.push((t, rho.clone()));
        }
    }
    Ok(())
}
