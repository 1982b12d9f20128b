//! Physical quantities extracted from density matrices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{ops, LayoutError, SpaceLayout, MODE_1, MODE_2, QUBIT_L, QUBIT_R};
use crate::linalg::{hermitian_eig, kron, singular_values, ComplexMatrix, LinalgError};

const STATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("invalid two-qubit state: {0}")]
    State(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid series: {0}")]
    Range(String),
}

/// Qubit excitation probabilities and mode occupations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub p_left: f64,
    pub p_right: f64,
    pub n1: f64,
    pub n2: f64,
}

/// `P_m = tr(rho s+_m s-_m)`, `n_k = tr(rho c_k^dag c_k)`.
///
/// All four operators are diagonal in the product basis, so only the
/// diagonal of `rho` is read.
pub fn populations(rho: &ComplexMatrix, layout: &SpaceLayout) -> Result<Populations, ObservableError> {
    layout.require_standard()?;
    let dim = layout.total_dim();
    if rho.rows() != dim || rho.cols() != dim {
        return Err(LayoutError::StateMismatch { expected: dim, got: rho.rows() }.into());
    }
    let mut out = Populations { p_left: 0.0, p_right: 0.0, n1: 0.0, n2: 0.0 };
    for i in 0..dim {
        let w = rho[(i, i)].re;
        if w == 0.0 {
            continue;
        }
        let occ = layout.occupations(i);
        out.p_left += w * occ[QUBIT_L] as f64;
        out.p_right += w * occ[QUBIT_R] as f64;
        out.n1 += w * occ[MODE_1] as f64;
        out.n2 += w * occ[MODE_2] as f64;
    }
    Ok(out)
}

/// Reduced state of the two qubits.
pub fn two_qubit_state(rho: &ComplexMatrix, layout: &SpaceLayout) -> Result<ComplexMatrix, ObservableError> {
    layout.require_standard()?;
    Ok(layout.partial_trace(rho, &[QUBIT_L, QUBIT_R])?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcurrenceResult {
    pub value: f64,
    /// Square roots of the eigenvalues of `rho rho~`, decreasing.
    pub lambdas: [f64; 4],
}

/// Wootters concurrence of a two-qubit density matrix.
///
/// The `lambda_i` are the square roots of the spectrum of the Hermitian matrix
/// `sqrt(rho) rho~ sqrt(rho)`, which is similar to `rho rho~`. They are evaluated
/// as singular values of a factor of that matrix so that small values keep full
/// absolute precision.
pub fn concurrence(rho2: &ComplexMatrix) -> Result<ConcurrenceResult, ObservableError> {
    if rho2.rows() != 4 || rho2.cols() != 4 {
        return Err(ObservableError::State(format!("expected 4x4, got {}x{}", rho2.rows(), rho2.cols())));
    }
    let herm = rho2.hermiticity_error();
    if herm > STATE_TOL {
        return Err(ObservableError::State(format!("not Hermitian ({herm:e})")));
    }
    let tr = rho2.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(ObservableError::State(format!("trace {tr} is not 1")));
    }
    let eig = hermitian_eig(rho2)?;
    if eig.min_value() < -STATE_TOL {
        return Err(ObservableError::State(format!("negative eigenvalue {:e}", eig.min_value())));
    }
    // rho = W W^dag with W = V diag(sqrt(mu)); the lambda_i are the singular
    // values of W^dag (sy x sy) conj(W)
    let n = 4;
    let mut w = eig.vectors.clone();
    for c in 0..n {
        let s = eig.values[c].max(0.0).sqrt();
        for r in 0..n {
            w[(r, c)] *= s;
        }
    }
    let yy = kron(&ops::sigma_y(), &ops::sigma_y());
    let m = w.dagger().matmul(&yy).matmul(&w.conj());
    let sv = singular_values(&m)?;
    let mut lambdas = [0.0; 4];
    lambdas.copy_from_slice(&sv);
    let value = (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0);
    Ok(ConcurrenceResult { value, lambdas })
}

/// Centered moving average of a sampled signal over a window of duration
/// `window`, using the exact integral of the piecewise-linear interpolant.
///
/// Near the ends the window shrinks symmetrically so it stays centered; the
/// first and last samples are returned unchanged.
pub fn coarse_grain(times: &[f64], values: &[f64], window: f64) -> Result<Vec<f64>, ObservableError> {
    if times.len() != values.len() {
        return Err(ObservableError::Range(format!("{} times vs {} values", times.len(), values.len())));
    }
    if times.len() < 2 {
        return Err(ObservableError::Range("need at least two samples".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ObservableError::Range("times must be strictly increasing".into()));
    }
    let max_interval = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if window < 2.0 * max_interval * (1.0 - 1e-12) {
        return Err(ObservableError::Range(format!(
            "window {window} shorter than two sample intervals ({max_interval})"
        )));
    }
    let span = times[times.len() - 1] - times[0];
    if window > span {
        return Err(ObservableError::Range(format!("window {window} longer than series span {span}")));
    }

    // cumulative trapezoid integral at each sample
    let mut cum = Vec::with_capacity(times.len());
    cum.push(0.0);
    for i in 1..times.len() {
        let prev = cum[i - 1];
        cum.push(prev + 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]));
    }
    let integral_to = |t: f64| -> f64 {
        // index of the segment [times[k], times[k+1]] containing t
        let k = match times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(k) => return cum[k],
            Err(0) => 0,
            Err(k) => (k - 1).min(times.len() - 2),
        };
        let dt = t - times[k];
        let h = times[k + 1] - times[k];
        let slope = (values[k + 1] - values[k]) / h;
        cum[k] + values[k] * dt + 0.5 * slope * dt * dt
    };

    let t0 = times[0];
    let t1 = times[times.len() - 1];
    Ok(times
        .iter()
        .zip(values)
        .map(|(&t, &v)| {
            let half = (window / 2.0).min(t - t0).min(t1 - t);
            if half <= 0.0 {
                v
            } else {
                (integral_to(t + half) - integral_to(t - half)) / (2.0 * half)
            }
        })
        .collect())
}
