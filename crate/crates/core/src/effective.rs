//! Adiabatic elimination of the connecting modes.
//!
//! Channel `n` contributes self-energies `|g_mn|^2 / (Delta_n + i kappa_n/2)` and the
//! directional exchange terms
//! `h_back = sum_n g_Ln conj(g_Rn) / (Delta_n + i kappa_n/2)` (right to left) and
//! `h_fwd = sum_n conj(g_Ln) g_Rn / (Delta_n + i kappa_n/2)` (left to right).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{C64, I, ZERO};
use crate::model::{SystemParams, ADIABATIC_WARN_RATIO};
use crate::solver::TimeSpan;

/// Below this value of `|h_fwd| + |h_back|` the isolation factor is undefined.
pub const UNDEFINED_DH_TOL: f64 = 1e-15;
const NORM_GROWTH_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EffectiveError {
    #[error("mode {mode} decay rate must be positive, got {kappa}")]
    NonPositiveKappa { mode: usize, kappa: f64 },
    #[error("adiabatic elimination not justified: |g|/|Delta + i kappa/2| = {ratio:.3} exceeds {limit}")]
    NotAdiabatic { ratio: f64, limit: f64 },
    #[error("initial amplitudes have norm {0} > 1")]
    InitialNorm(f64),
    #[error("norm grew by {growth:e} at t = {t}")]
    Instability { t: f64, growth: f64 },
    #[error("invalid time grid: {0}")]
    TimeSpan(String),
    #[error("loss-induced phase difference {0} cannot be realized with finite detunings")]
    Unreachable(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCoupling {
    pub lambda_l: C64,
    pub lambda_r: C64,
    pub h_left: C64,
    pub h_right: C64,
    pub amp: [f64; 2],
    pub phi: [f64; 2],
    pub theta: [f64; 2],
    pub dphi: f64,
    pub dtheta: f64,
    pub phi0: f64,
    pub theta0: f64,
    /// `None` when both directional couplings vanish.
    pub dh: Option<f64>,
}

/// `(|h_fwd| - |h_back|) / (|h_fwd| + |h_back|)`, undefined when both vanish.
pub fn isolation_factor(h_right: C64, h_left: C64) -> Option<f64> {
    let (f, b) = (h_right.norm(), h_left.norm());
    if f + b < UNDEFINED_DH_TOL {
        None
    } else {
        Some((f - b) / (f + b))
    }
}

pub fn compute_effective(p: &SystemParams) -> Result<EffectiveCoupling, EffectiveError> {
    for (n, &k) in p.kappa.iter().enumerate() {
        if !(k > 0.0) {
            return Err(EffectiveError::NonPositiveKappa { mode: n + 1, kappa: k });
        }
    }
    let mut out = EffectiveCoupling {
        lambda_l: ZERO,
        lambda_r: ZERO,
        h_left: ZERO,
        h_right: ZERO,
        amp: [0.0; 2],
        phi: [0.0; 2],
        theta: [0.0; 2],
        dphi: 0.0,
        dtheta: 0.0,
        phi0: 0.0,
        theta0: 0.0,
        dh: None,
    };
    for n in 0..2 {
        let d = p.mode_denominator(n);
        let (gl, gr) = (p.g[0][n], p.g[1][n]);
        out.lambda_l += gl.norm_sqr() / d;
        out.lambda_r += gr.norm_sqr() / d;
        let cross = gl * gr.conj();
        out.h_left += cross / d;
        out.h_right += cross.conj() / d;
        out.amp[n] = cross.norm() / d.norm();
        out.phi[n] = cross.arg();
        out.theta[n] = d.arg();
    }
    out.dphi = out.phi[1] - out.phi[0];
    out.dtheta = out.theta[1] - out.theta[0];
    out.phi0 = (out.phi[0] + out.phi[1]) / 2.0;
    out.theta0 = (out.theta[0] + out.theta[1]) / 2.0;
    out.dh = isolation_factor(out.h_right, out.h_left);
    Ok(out)
}

/// Equal-amplitude closed form `h = 2G exp(-+i phi0 - i theta0) cos((dphi +- dtheta)/2)`,
/// upper signs for the forward coupling. Returns `(h_fwd, h_back)`.
pub fn h_factored(g: f64, phi0: f64, theta0: f64, dphi: f64, dtheta: f64) -> (C64, C64) {
    let fwd = C64::from_polar(2.0 * g * ((dphi + dtheta) / 2.0).cos(), -phi0 - theta0);
    let back = C64::from_polar(2.0 * g * ((dphi - dtheta) / 2.0).cos(), phi0 - theta0);
    (fwd, back)
}

/// `theta2 - theta1` from the two-argument arctangent.
pub fn delta_theta_formula(delta1: f64, kappa1: f64, delta2: f64, kappa2: f64) -> f64 {
    (2.0 * (delta1 * kappa2 - delta2 * kappa1)).atan2(4.0 * delta1 * delta2 + kappa1 * kappa2)
}

/// Detunings `(Delta1, Delta2)` at common decay `kappa` with `theta1 = pi/2 - dtheta/2`
/// and `theta2 = pi/2 + dtheta/2`. Requires `|dtheta| < pi`.
pub fn detunings_for_delta_theta(dtheta: f64, kappa: f64) -> Result<[f64; 2], EffectiveError> {
    if !(dtheta.abs() < PI) {
        return Err(EffectiveError::Unreachable(dtheta));
    }
    let cot = |x: f64| x.cos() / x.sin();
    let t1 = PI / 2.0 - dtheta / 2.0;
    let t2 = PI / 2.0 + dtheta / 2.0;
    Ok([kappa / 2.0 * cot(t1), kappa / 2.0 * cot(t2)])
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AmplitudeTrajectory {
    pub times: Vec<f64>,
    pub c_left: Vec<C64>,
    pub c_right: Vec<C64>,
    pub dt: f64,
}

impl AmplitudeTrajectory {
    pub fn p_left(&self) -> Vec<f64> {
        self.c_left.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn p_right(&self) -> Vec<f64> {
        self.c_right.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Single-excitation effective dynamics
/// `dc_L/dt = -i(Lambda_L - Delta_L) c_L - i h_back c_R`,
/// `dc_R/dt = -i(Lambda_R - Delta_R) c_R - i h_fwd c_L`,
/// integrated with RK4. `dt = None` uses `min(0.01 / max|entry|, 0.1 / kappa)`.
pub fn evolve_effective(
    p: &SystemParams,
    c0: [C64; 2],
    span: TimeSpan,
    dt: Option<f64>,
) -> Result<AmplitudeTrajectory, EffectiveError> {
    let ratio = p.adiabaticity_ratio();
    if ratio > ADIABATIC_WARN_RATIO {
        return Err(EffectiveError::NotAdiabatic { ratio, limit: ADIABATIC_WARN_RATIO });
    }
    let norm0 = c0[0].norm_sqr() + c0[1].norm_sqr();
    if norm0 > 1.0 + 1e-12 {
        return Err(EffectiveError::InitialNorm(norm0.sqrt()));
    }
    let e = compute_effective(p)?;
    let gen = [
        [-I * (e.lambda_l - p.qubit_detuning[0]), -I * e.h_left],
        [-I * e.h_right, -I * (e.lambda_r - p.qubit_detuning[1])],
    ];
    let max_entry = gen.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let step_bound = dt.unwrap_or_else(|| {
        let mut h = 0.1 / p.max_kappa();
        if max_entry > 0.0 {
            h = h.min(0.01 / max_entry);
        }
        h
    });
    if !(span.t1 > span.t0) || !(span.output_step > 0.0) || !(step_bound > 0.0) {
        return Err(EffectiveError::TimeSpan(format!("{span:?}, dt {step_bound}")));
    }
    let intervals = ((span.t1 - span.t0) / span.output_step).round() as usize;
    if intervals == 0 || (span.t0 + intervals as f64 * span.output_step - span.t1).abs() > 1e-9 * span.t1.abs().max(1.0) {
        return Err(EffectiveError::TimeSpan(format!("output step does not divide {span:?}")));
    }
    let substeps = (span.output_step / step_bound * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = span.output_step / substeps as f64;
    let f = |c: [C64; 2]| [gen[0][0] * c[0] + gen[0][1] * c[1], gen[1][0] * c[0] + gen[1][1] * c[1]];
    let axpy = |c: [C64; 2], k: [C64; 2], s: f64| [c[0] + k[0] * s, c[1] + k[1] * s];

    let mut traj = AmplitudeTrajectory { dt: h, ..Default::default() };
    let mut c = c0;
    for i in 0..=intervals {
        let t = span.t0 + i as f64 * span.output_step;
        if i > 0 {
            for _ in 0..substeps {
                let k1 = f(c);
                let k2 = f(axpy(c, k1, h / 2.0));
                let k3 = f(axpy(c, k2, h / 2.0));
                let k4 = f(axpy(c, k3, h));
                for j in 0..2 {
                    c[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
                }
            }
            let growth = c[0].norm_sqr() + c[1].norm_sqr() - norm0;
            if growth > NORM_GROWTH_TOL || !growth.is_finite() {
                return Err(EffectiveError::Instability { t, growth });
            }
        }
        traj.times.push(t);
        traj.c_left.push(c[0]);
        traj.c_right.push(c[1]);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_params(rng: &mut StdRng, equal_amp: bool) -> SystemParams {
        let mut p = SystemParams::preset(Preset::SetI, 0.0);
        for n in 0..2 {
            p.delta[n] = rng.gen_range(-5.0..5.0);
            p.kappa[n] = rng.gen_range(0.1..3.0);
            for m in 0..2 {
                p.g[m][n] = C64::from_polar(rng.gen_range(0.01..0.2), rng.gen_range(-PI..PI));
            }
        }
        if equal_amp {
            // rescale channel 2 so both channels share G
            let d1 = p.mode_denominator(0).norm();
            let d2 = p.mode_denominator(1).norm();
            let g1 = p.g[0][0].norm() * p.g[1][0].norm() / d1;
            let g2 = p.g[0][1].norm() * p.g[1][1].norm() / d2;
            p.g[0][1] *= (g1 / g2).sqrt();
            p.g[1][1] *= (g1 / g2).sqrt();
        }
        p
    }

    #[test]
    fn single_channel_is_reciprocal() {
        let mut p = SystemParams::preset(Preset::SetI, 0.7);
        p.g[0][1] = ZERO;
        p.g[1][1] = ZERO;
        let e = compute_effective(&p).unwrap();
        assert!((e.h_left.norm() - e.h_right.norm()).abs() < 1e-15);
        assert_eq!(e.dh, Some(0.0));
    }

    #[test]
    fn isolation_point_of_both_presets() {
        for preset in Preset::all() {
            let e = compute_effective(&SystemParams::isolating(preset)).unwrap();
            assert!((e.dtheta - PI / 2.0).abs() < 1e-12);
            assert!((e.dphi + PI / 2.0).abs() < 1e-12);
            assert!((e.amp[0] - 0.01).abs() < 1e-12 && (e.amp[1] - 0.01).abs() < 1e-12);
            assert!(e.h_left.norm() < 1e-15);
            assert!((e.h_right.norm() - 0.02).abs() < 1e-14);
            assert!((e.dh.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resonant_real_couplings_are_reciprocal() {
        let mut p = SystemParams::preset(Preset::SetI, 0.0);
        p.delta = [0.0, 0.0];
        p.g = [[c(0.05, 0.0); 2]; 2];
        let e = compute_effective(&p).unwrap();
        assert!((e.theta[0] - PI / 2.0).abs() < 1e-15 && (e.theta[1] - PI / 2.0).abs() < 1e-15);
        assert_eq!(e.dtheta, 0.0);
        assert!((e.h_left - e.h_right).norm() < 1e-15);
    }

    #[test]
    fn undefined_isolation_factor_is_flagged() {
        let mut p = SystemParams::preset(Preset::SetI, 0.0);
        p.g[1] = [ZERO; 2];
        let e = compute_effective(&p).unwrap();
        assert_eq!(e.dh, None);
        assert!(e.lambda_l.norm() > 0.0);
    }

    #[test]
    fn self_energy_is_dissipative() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let e = compute_effective(&random_params(&mut rng, false)).unwrap();
            assert!(e.lambda_l.im < 0.0 && e.lambda_r.im < 0.0);
            if let Some(dh) = e.dh {
                assert!((-1.0..=1.0).contains(&dh));
            }
        }
    }

    #[test]
    fn rejects_nonpositive_kappa() {
        let mut p = SystemParams::preset(Preset::SetI, 0.0);
        p.kappa[1] = 0.0;
        assert!(matches!(compute_effective(&p), Err(EffectiveError::NonPositiveKappa { mode: 2, .. })));
    }

    #[test]
    fn direct_and_polar_sums_agree() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..500 {
            let p = random_params(&mut rng, false);
            let e = compute_effective(&p).unwrap();
            let mut back = ZERO;
            let mut fwd = ZERO;
            for n in 0..2 {
                back += C64::from_polar(e.amp[n], e.phi[n] - e.theta[n]);
                fwd += C64::from_polar(e.amp[n], -e.phi[n] - e.theta[n]);
            }
            assert!((back.norm() - e.h_left.norm()).abs() < 1e-12);
            assert!((fwd.norm() - e.h_right.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn factored_form_matches_direct_sum() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..500 {
            let e = compute_effective(&random_params(&mut rng, true)).unwrap();
            assert!((e.amp[0] - e.amp[1]).abs() < 1e-14);
            let (fwd, back) = h_factored(e.amp[0], e.phi0, e.theta0, e.dphi, e.dtheta);
            assert!((fwd - e.h_right).norm() < 1e-12);
            assert!((back - e.h_left).norm() < 1e-12);
            let dh = isolation_factor(fwd, back).unwrap();
            assert!((dh - e.dh.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn factored_form_examples() {
        let (fwd, back) = h_factored(0.3, 0.2, 1.0, -PI / 2.0, PI / 2.0);
        assert!((fwd.norm() - 0.6).abs() < 1e-15);
        assert!(back.norm() < 1e-15);
        for dphi in [-2.0, -0.3, 0.0, 1.4, 3.0] {
            let (f, b) = h_factored(1.0, 0.4, 0.9, dphi, 0.0);
            assert!((f.norm() - b.norm()).abs() < 1e-15);
        }
        for i in 1..50 {
            let dtheta = PI * i as f64 / 50.0;
            let (f, b) = h_factored(1.0, 0.0, 0.5, dtheta - PI, dtheta);
            assert!((f.norm() - 2.0 * dtheta.sin().abs()).abs() < 1e-12);
            assert!(b.norm() < 1e-12);
        }
    }

    #[test]
    fn phase_formula_cases() {
        assert!((delta_theta_formula(0.5, 1.0, -0.5, 1.0) - PI / 2.0).abs() < 1e-15);
        assert!((delta_theta_formula(0.005, 1.0, -50.0, 1.0) - PI / 2.0).abs() < 1e-15);
        let reciprocal = delta_theta_formula(0.3, 1.0, 0.6, 2.0);
        assert!(reciprocal == 0.0 || (reciprocal.abs() - PI).abs() < 1e-15);
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..1000 {
            let (d1, d2) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            let (k1, k2) = (rng.gen_range(0.01..5.0), rng.gen_range(0.01..5.0));
            let direct = (c(d2, k2 / 2.0).arg() - c(d1, k1 / 2.0).arg()).rem_euclid(2.0 * PI);
            let formula = delta_theta_formula(d1, k1, d2, k2).rem_euclid(2.0 * PI);
            let diff = (direct - formula).abs();
            assert!(diff.min(2.0 * PI - diff) < 1e-12);
        }
    }

    #[test]
    fn detuning_inversion() {
        let d = detunings_for_delta_theta(PI / 2.0, 1.0).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] + 0.5).abs() < 1e-15);
        for dtheta in [-3.0, -1.0, 0.0, 0.4, 3.1] {
            let d = detunings_for_delta_theta(dtheta, 2.0).unwrap();
            assert!((delta_theta_formula(d[0], 2.0, d[1], 2.0) - dtheta).abs() < 1e-12);
        }
        assert!(detunings_for_delta_theta(PI, 1.0).is_err());
        assert!(detunings_for_delta_theta(-PI, 1.0).is_err());
    }

    #[test]
    fn one_way_coupling_leaves_left_qubit_dark() {
        let p = SystemParams::isolating(Preset::SetI);
        let e = compute_effective(&p).unwrap();
        let traj = evolve_effective(&p, [ZERO, c(1.0, 0.0)], TimeSpan::new(0.0, 400.0, 1.0), None).unwrap();
        for (t, (cl, cr)) in traj.times.iter().zip(traj.c_left.iter().zip(&traj.c_right)) {
            assert!(cl.norm() < 1e-14);
            let expected = (2.0 * e.lambda_r.im * t).exp();
            assert!((cr.norm_sqr() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn free_evolution_is_constant() {
        let mut p = SystemParams::preset(Preset::SetI, 0.0);
        p.g = [[ZERO; 2]; 2];
        let c0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let traj = evolve_effective(&p, c0, TimeSpan::new(0.0, 10.0, 0.5), None).unwrap();
        assert!(traj.c_left.iter().all(|&z| z == c0[0]));
        assert!(traj.c_right.iter().all(|&z| z == c0[1]));
    }

    #[test]
    fn reciprocal_exchange_symmetry() {
        let p = SystemParams::preset(Preset::SetI, 0.0);
        let e = compute_effective(&p).unwrap();
        assert!((e.h_left - e.h_right).norm() < 1e-15 && (e.lambda_l - e.lambda_r).norm() < 1e-15);
        let span = TimeSpan::new(0.0, 200.0, 2.0);
        let a = evolve_effective(&p, [c(1.0, 0.0), ZERO], span, None).unwrap();
        let b = evolve_effective(&p, [ZERO, c(1.0, 0.0)], span, None).unwrap();
        for i in 0..a.times.len() {
            assert!((a.c_left[i] - b.c_right[i]).norm() < 1e-14);
            assert!((a.c_right[i] - b.c_left[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn effective_errors() {
        let p = SystemParams::with_scaled_couplings([0.5, -0.5], 1.0, 0.0, 0.5);
        assert!(matches!(
            evolve_effective(&p, [c(1.0, 0.0), ZERO], TimeSpan::new(0.0, 1.0, 0.5), None),
            Err(EffectiveError::NotAdiabatic { .. })
        ));
        let p = SystemParams::preset(Preset::SetI, 0.0);
        assert!(matches!(
            evolve_effective(&p, [c(1.0, 0.0), c(1.0, 0.0)], TimeSpan::new(0.0, 1.0, 0.5), None),
            Err(EffectiveError::InitialNorm(_))
        ));
        assert!(evolve_effective(&p, [c(1.0, 0.0), ZERO], TimeSpan::new(0.0, 1.0, 0.3), None).is_err());
    }
}
