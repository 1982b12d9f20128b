use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::Serialize;

use crate::effective::{compute_effective, delta_theta_formula, h_factored};
use crate::hilbert::SpaceLayout;
use crate::linalg::{ComplexMatrix, C64, ZERO};
use crate::model::{build_collapse_ops, build_hamiltonian, Preset, SystemParams};
use crate::modulation::bessel_j;
use crate::observables::concurrence;
use crate::solver::{evolve_master, Hamiltonian, SolverControls, TimeSpan};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn werner(p: f64) -> ComplexMatrix {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let psi = ComplexMatrix::column(vec![ZERO, s, -s, ZERO]);
    &ComplexMatrix::outer(&psi, &psi).scale_real(p) + &ComplexMatrix::identity(4).scale_real((1.0 - p) / 4.0)
}

/// Fast invariant checks; each returns a pass flag and the measured deviation.
pub fn selftest() -> Vec<CheckResult> {
    let mut out = Vec::new();

    let mut worst = 0.0_f64;
    for p in [0.0, 1.0 / 3.0, 0.5, 1.0] {
        let c = concurrence(&werner(p)).map(|c| c.value).unwrap_or(f64::NAN);
        worst = worst.max((c - ((3.0 * p - 1.0) / 2.0_f64).max(0.0)).abs());
    }
    out.push(check("werner concurrence", worst < 1e-9, format!("max error {worst:e}")));

    let mut residual = 0.0_f64;
    for zi in 0..=10 {
        let z = zi as f64 / 10.0;
        for ti in 0..32 {
            let theta = -PI + 2.0 * PI * ti as f64 / 32.0;
            let mut sum = ZERO;
            for k in -15..=15 {
                sum += C64::from_polar(bessel_j(k, z).unwrap_or(f64::NAN), k as f64 * theta);
            }
            residual = residual.max((sum - C64::from_polar(1.0, z * theta.sin())).norm());
        }
    }
    out.push(check("jacobi-anger expansion", residual < 1e-10, format!("residual {residual:e}")));

    let quoted = [(0, 1.0, 0.765), (1, 1.0, 0.440), (2, 1.0, 0.115), (0, 0.9, 0.808), (1, 0.9, 0.406)];
    let dev = quoted.iter().map(|&(k, x, q)| (bessel_j(k, x).unwrap_or(f64::NAN) - q).abs()).fold(0.0, f64::max);
    out.push(check("bessel values", dev < 5e-4, format!("max deviation {dev:e}")));

    let mut dev = 0.0_f64;
    for preset in Preset::all() {
        match compute_effective(&SystemParams::isolating(preset)) {
            Ok(e) => dev = dev.max((e.dh.unwrap_or(f64::NAN) - 1.0).abs()),
            Err(_) => dev = f64::NAN,
        }
    }
    out.push(check("isolation point", dev < 1e-12, format!("|dh - 1| = {dev:e}")));

    let mut dev = 0.0_f64;
    for i in 0..40 {
        let d1 = -4.0 + 0.2 * i as f64;
        let d2 = 3.0 - 0.15 * i as f64;
        let (k1, k2) = (0.3 + 0.05 * i as f64, 1.7 - 0.03 * i as f64);
        let direct = C64::new(d2, k2 / 2.0).arg() - C64::new(d1, k1 / 2.0).arg();
        let diff = (delta_theta_formula(d1, k1, d2, k2) - direct).rem_euclid(2.0 * PI);
        dev = dev.max(diff.min(2.0 * PI - diff));
    }
    out.push(check("phase-difference formula", dev < 1e-12, format!("max error {dev:e}")));

    let mut dev = 0.0_f64;
    for dphi in [-2.5, -PI / 2.0, 0.0, 0.8, 2.9] {
        if let Ok(e) = compute_effective(&SystemParams::preset(Preset::SetI, dphi)) {
            let (f, b) = h_factored(e.amp[0], e.phi0, e.theta0, e.dphi, e.dtheta);
            dev = dev.max((f - e.h_right).norm()).max((b - e.h_left).norm());
        }
    }
    out.push(check("factored couplings", dev < 1e-12, format!("max error {dev:e}")));

    let layout = SpaceLayout::standard(3, 3).expect("standard layout");
    let p = SystemParams::isolating(Preset::SetI).with_decoherence(1e-3, 3e-3);
    let run = || -> Result<(f64, f64), String> {
        let h = Hamiltonian::Static(build_hamiltonian(&p, &layout).map_err(|e| e.to_string())?);
        let c = build_collapse_ops(&p, &layout).map_err(|e| e.to_string())?;
        let rho0 = layout.basis_density(&[1, 0, 0, 0]).map_err(|e| e.to_string())?;
        let controls = SolverControls::new(layout.clone(), 0.02);
        let t = evolve_master(&h, &c, &rho0, TimeSpan::new(0.0, 20.0, 1.0), &controls).map_err(|e| e.to_string())?;
        Ok((t.diagnostics.max_trace_error, t.diagnostics.min_eigenvalue))
    };
    match run() {
        Ok((tr, min)) => out.push(check(
            "master equation trace and positivity",
            tr < 1e-8 && min > -1e-7,
            format!("trace error {tr:e}, min eigenvalue {min:e}"),
        )),
        Err(e) => out.push(check("master equation trace and positivity", false, e)),
    }
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for r in super::selftest() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
