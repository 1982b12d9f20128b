//! Engineered-frame two-qubit / two-mode model.
//!
//! All frequencies and rates are in units of the reference mode decay rate
//! `kappa_ref`, so the default presets use `kappa = 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{ops, LayoutError, SpaceLayout, MODE_1, MODE_2, QUBIT_L, QUBIT_R};
use crate::linalg::{ComplexMatrix, C64};

/// Ratio `|g| / |Delta + i kappa/2|` above which adiabatic elimination is flagged.
pub const ADIABATIC_WARN_RATIO: f64 = 0.2;

/// Qubit relaxation rate used for the decoherence study, units of kappa.
pub const FIG_GAMMA: f64 = 1e-3;
/// Qubit pure-dephasing rate used for the decoherence study, units of kappa.
pub const FIG_GAMMA_PHI: f64 = 3e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    Parameter { name: &'static str, value: f64, reason: &'static str },
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// Named detuning configurations of the two connecting modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// Symmetric detunings `Delta1 = -Delta2 = kappa/2`.
    SetI,
    /// Strongly asymmetric detunings `Delta1 = kappa/200`, `Delta2 = -50 kappa`.
    SetII,
}

impl Preset {
    pub fn mode_detunings(self) -> [f64; 2] {
        match self {
            Preset::SetI => [0.5, -0.5],
            Preset::SetII => [1.0 / 200.0, -50.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::SetI => "SetI",
            Preset::SetII => "SetII",
        }
    }

    pub fn all() -> [Preset; 2] {
        [Preset::SetI, Preset::SetII]
    }
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "SetI" | "seti" | "set1" | "I" => Ok(Preset::SetI),
            "SetII" | "setii" | "set2" | "II" => Ok(Preset::SetII),
            other => Err(format!("unknown preset '{other}' (expected SetI or SetII)")),
        }
    }
}

/// Engineered-frame parameters.
///
/// `g[m][n]` is the coupling of qubit `m` (0 = L, 1 = R) to mode `n`
/// (0 = mode 1, 1 = mode 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub delta: [f64; 2],
    pub kappa: [f64; 2],
    pub g: [[C64; 2]; 2],
    #[serde(default)]
    pub qubit_detuning: [f64; 2],
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub gamma_phi: f64,
}

impl SystemParams {
    /// Couplings following the figure recipe:
    /// `g_L1 = g_R1 = 0.1 sqrt(kappa |Delta1 + i kappa/2|)`,
    /// `g_L2 = 0.1 sqrt(kappa |Delta2 + i kappa/2|)`, `g_R2 = g_L2 exp(-i dphi)`.
    ///
    /// Both channels then carry the same effective amplitude `G = 0.01 kappa`.
    pub fn with_figure_couplings(delta: [f64; 2], kappa: f64, dphi: f64) -> Self {
        Self::with_scaled_couplings(delta, kappa, dphi, 0.1)
    }

    /// Same construction with an arbitrary prefactor in place of 0.1.
    pub fn with_scaled_couplings(delta: [f64; 2], kappa: f64, dphi: f64, prefactor: f64) -> Self {
        let amp = |d: f64| prefactor * (kappa * C64::new(d, kappa / 2.0).norm()).sqrt();
        let g1 = C64::new(amp(delta[0]), 0.0);
        let g2 = C64::new(amp(delta[1]), 0.0);
        Self {
            delta,
            kappa: [kappa; 2],
            g: [[g1, g2], [g1, g2 * C64::from_polar(1.0, -dphi)]],
            qubit_detuning: [0.0; 2],
            gamma: 0.0,
            gamma_phi: 0.0,
        }
    }

    pub fn preset(preset: Preset, dphi: f64) -> Self {
        Self::with_figure_couplings(preset.mode_detunings(), 1.0, dphi)
    }

    /// Preset at the complete-isolation point `dphi = -pi/2`.
    pub fn isolating(preset: Preset) -> Self {
        Self::preset(preset, -PI / 2.0)
    }

    pub fn with_decoherence(mut self, gamma: f64, gamma_phi: f64) -> Self {
        self.gamma = gamma;
        self.gamma_phi = gamma_phi;
        self
    }

    pub fn with_qubit_detuning(mut self, detuning: [f64; 2]) -> Self {
        self.qubit_detuning = detuning;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for &k in &self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(ModelError::Parameter { name: "kappa", value: k, reason: "must be positive" });
            }
        }
        for (name, value) in [("gamma", self.gamma), ("gamma_phi", self.gamma_phi)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ModelError::Parameter { name, value, reason: "must be non-negative" });
            }
        }
        for &d in self.delta.iter().chain(&self.qubit_detuning) {
            if !d.is_finite() {
                return Err(ModelError::Parameter { name: "detuning", value: d, reason: "must be finite" });
            }
        }
        for z in self.g.iter().flatten() {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(ModelError::Parameter { name: "g", value: z.norm(), reason: "must be finite" });
            }
        }
        Ok(())
    }

    /// Complex mode response denominator `Delta_n + i kappa_n / 2`.
    pub fn mode_denominator(&self, n: usize) -> C64 {
        C64::new(self.delta[n], self.kappa[n] / 2.0)
    }

    /// Largest `|g_m^(n)| / |Delta_n + i kappa_n/2|` over all couplings.
    pub fn adiabaticity_ratio(&self) -> f64 {
        let mut worst = 0.0_f64;
        for m in 0..2 {
            for n in 0..2 {
                worst = worst.max(self.g[m][n].norm() / self.mode_denominator(n).norm());
            }
        }
        worst
    }

    pub fn adiabatic_warning(&self) -> bool {
        self.adiabaticity_ratio() > ADIABATIC_WARN_RATIO
    }

    /// Fastest coherent frequency in the Hamiltonian, used for step sizing.
    pub fn max_frequency(&self) -> f64 {
        let mut w = 0.0_f64;
        for &d in self.delta.iter().chain(&self.qubit_detuning) {
            w = w.max(d.abs());
        }
        for z in self.g.iter().flatten() {
            w = w.max(z.norm());
        }
        w
    }

    pub fn max_kappa(&self) -> f64 {
        self.kappa[0].max(self.kappa[1])
    }
}

/// A Lindblad channel `rate * D[op]`.
#[derive(Debug, Clone)]
pub struct CollapseOp {
    pub operator: ComplexMatrix,
    pub rate: f64,
    pub label: String,
}

/// `H = -sum_m (Delta_m/2) sz_m - sum_n Delta_n c_n^dag c_n
///      + sum_n [(g_L^(n) s+_L + g_R^(n) s+_R) c_n + h.c.]`.
pub fn build_hamiltonian(p: &SystemParams, layout: &SpaceLayout) -> Result<ComplexMatrix, ModelError> {
    layout.require_standard()?;
    p.validate()?;
    let dim = layout.total_dim();
    let mut h = ComplexMatrix::zeros(dim, dim);
    let qubits = [QUBIT_L, QUBIT_R];
    let modes = [MODE_1, MODE_2];
    for (m, &site) in qubits.iter().enumerate() {
        if p.qubit_detuning[m] != 0.0 {
            h += &layout.embed(&ops::sigma_z(), site)?.scale_real(-p.qubit_detuning[m] / 2.0);
        }
    }
    for (n, &site) in modes.iter().enumerate() {
        let d = layout.dims()[site];
        h += &layout.embed(&ops::number(d), site)?.scale_real(-p.delta[n]);
        let c = layout.embed(&ops::annihilation(d), site)?;
        for (m, &qsite) in qubits.iter().enumerate() {
            let sp = layout.embed(&ops::sigma_plus(), qsite)?;
            let term = sp.matmul(&c).scale(p.g[m][n]);
            h += &term;
            h += &term.dagger();
        }
    }
    Ok(h)
}

/// Mode decay channels, plus qubit relaxation and dephasing when their rates
/// are nonzero. Dephasing enters as `(gamma_phi / 2) D[sz]`.
pub fn build_collapse_ops(p: &SystemParams, layout: &SpaceLayout) -> Result<Vec<CollapseOp>, ModelError> {
    layout.require_standard()?;
    p.validate()?;
    let mut out = Vec::new();
    for (n, &site) in [MODE_1, MODE_2].iter().enumerate() {
        out.push(CollapseOp {
            operator: layout.embed(&ops::annihilation(layout.dims()[site]), site)?,
            rate: p.kappa[n],
            label: format!("c{}", n + 1),
        });
    }
    let names = ["L", "R"];
    if p.gamma > 0.0 {
        for (m, &site) in [QUBIT_L, QUBIT_R].iter().enumerate() {
            out.push(CollapseOp {
                operator: layout.embed(&ops::sigma_minus(), site)?,
                rate: p.gamma,
                label: format!("sigma-_{}", names[m]),
            });
        }
    }
    if p.gamma_phi > 0.0 {
        for (m, &site) in [QUBIT_L, QUBIT_R].iter().enumerate() {
            out.push(CollapseOp {
                operator: layout.embed(&ops::sigma_z(), site)?,
                rate: p.gamma_phi / 2.0,
                label: format!("sigmaz_{}", names[m]),
            });
        }
    }
    Ok(out)
}

/// Total excitation number `sum_m s+_m s-_m + sum_n c_n^dag c_n`.
pub fn excitation_number(layout: &SpaceLayout) -> Result<ComplexMatrix, ModelError> {
    layout.require_standard()?;
    let mut n_op = layout.embed(&ops::excited_projector(), QUBIT_L)?;
    n_op += &layout.embed(&ops::excited_projector(), QUBIT_R)?;
    for site in [MODE_1, MODE_2] {
        n_op += &layout.embed(&ops::number(layout.dims()[site]), site)?;
    }
    Ok(n_op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::DEFAULT_FOCK_DIM;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn layout() -> SpaceLayout {
        SpaceLayout::standard(DEFAULT_FOCK_DIM, DEFAULT_FOCK_DIM).unwrap()
    }

    fn random_params(rng: &mut StdRng) -> SystemParams {
        let mut cplx = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let g = [[cplx(), cplx()], [cplx(), cplx()]];
        SystemParams {
            delta: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            kappa: [rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
            g,
            qubit_detuning: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            gamma: 0.0,
            gamma_phi: 0.0,
        }
    }

    #[test]
    fn decoupled_hamiltonian_is_diagonal_photon_energy() {
        let lay = layout();
        let mut p = SystemParams::preset(Preset::SetI, 0.0);
        p.g = [[C64::new(0.0, 0.0); 2]; 2];
        let h = build_hamiltonian(&p, &lay).unwrap();
        for i in 0..lay.total_dim() {
            let occ = lay.occupations(i);
            let expected = -(p.delta[0] * occ[2] as f64 + p.delta[1] * occ[3] as f64);
            assert!((h[(i, i)].re - expected).abs() < 1e-15);
            for j in 0..lay.total_dim() {
                if i != j {
                    assert_eq!(h[(i, j)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn coupling_matrix_element() {
        let lay = layout();
        let p = SystemParams::preset(Preset::SetII, -PI / 2.0);
        let h = build_hamiltonian(&p, &lay).unwrap();
        let eg00 = lay.basis_state(&[1, 0, 0, 0]).unwrap();
        let gg10 = lay.basis_state(&[0, 0, 1, 0]).unwrap();
        let ge01 = lay.basis_state(&[0, 1, 0, 0]).unwrap();
        let gg01 = lay.basis_state(&[0, 0, 0, 1]).unwrap();
        assert!((h.matrix_element(&eg00, &gg10) - p.g[0][0]).norm() < 1e-15);
        assert!((h.matrix_element(&ge01, &gg01) - p.g[1][1]).norm() < 1e-15);
    }

    #[test]
    fn set_i_hamiltonian_is_hermitian_and_finite() {
        let h = build_hamiltonian(&SystemParams::isolating(Preset::SetI), &layout()).unwrap();
        assert!(h.hermiticity_error() < 1e-12);
        assert!(h.frobenius_norm().is_finite());
    }

    #[test]
    fn hamiltonian_conserves_excitations() {
        let lay = layout();
        let n_op = excitation_number(&lay).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..10 {
            let h = build_hamiltonian(&random_params(&mut rng), &lay).unwrap();
            assert!(h.hermiticity_error() < 1e-12);
            assert!(h.commutator(&n_op).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn presets_reproduce_parameter_table() {
        let expected = [(Preset::SetI, [0.707, 0.707], [0.084, 0.084]), (Preset::SetII, [0.500, 50.002], [0.071, 0.707])];
        for (preset, denoms, gs) in expected {
            let p = SystemParams::preset(preset, 0.0);
            for n in 0..2 {
                assert_eq!(format!("{:.3}", p.mode_denominator(n).norm()), format!("{:.3}", denoms[n]));
                for m in 0..2 {
                    assert_eq!(format!("{:.3}", p.g[m][n].norm()), format!("{:.3}", gs[n]));
                }
            }
            assert!(!p.adiabatic_warning());
        }
    }

    #[test]
    fn collapse_channel_counts() {
        let lay = layout();
        let p = SystemParams::preset(Preset::SetI, 0.0);
        assert_eq!(build_collapse_ops(&p, &lay).unwrap().len(), 2);
        let p = p.with_decoherence(FIG_GAMMA, FIG_GAMMA_PHI);
        let ops = build_collapse_ops(&p, &lay).unwrap();
        assert_eq!(ops.len(), 6);
        let rates: Vec<f64> = ops.iter().map(|c| c.rate).collect();
        assert_eq!(rates, vec![1.0, 1.0, 1e-3, 1e-3, 1.5e-3, 1.5e-3]);
    }

    #[test]
    fn negative_rates_rejected() {
        let lay = layout();
        let p = SystemParams::preset(Preset::SetI, 0.0).with_decoherence(-1.0, 0.0);
        assert!(matches!(build_collapse_ops(&p, &lay), Err(ModelError::Parameter { .. })));
        let mut p = SystemParams::preset(Preset::SetI, 0.0);
        p.kappa[1] = 0.0;
        assert!(build_hamiltonian(&p, &lay).is_err());
        assert!(build_hamiltonian(&SystemParams::preset(Preset::SetI, 0.0), &SpaceLayout::new(vec![2, 3]).unwrap()).is_err());
    }

    #[test]
    fn preset_parsing() {
        assert_eq!("SetI".parse::<Preset>().unwrap(), Preset::SetI);
        assert_eq!("SetII".parse::<Preset>().unwrap(), Preset::SetII);
        assert!("SetIII".parse::<Preset>().is_err());
    }
}
