//! Composite Hilbert-space bookkeeping.
//!
//! Subsystems are ordered `[qubit L, qubit R, mode 1, mode 2]` and flattened
//! row-major, so the last site is the fastest index. Qubit basis index 0 is
//! the ground state `|g>` and index 1 the excited state `|e>`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{kron_all, ComplexMatrix, C64, ONE, ZERO};

pub const QUBIT_L: usize = 0;
pub const QUBIT_R: usize = 1;
pub const MODE_1: usize = 2;
pub const MODE_2: usize = 3;

/// Default Fock truncation per connecting mode (occupations 0, 1, 2).
pub const DEFAULT_FOCK_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("local dimension {dim} at site {site} is below 2")]
    DimensionTooSmall { site: usize, dim: usize },
    #[error("site {site} out of range for {sites} subsystems")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error("operator is {rows}x{cols} but site {site} has dimension {dim}")]
    OperatorMismatch { site: usize, dim: usize, rows: usize, cols: usize },
    #[error("occupation {index} out of range at site {site} (dimension {dim})")]
    OccupationOutOfRange { site: usize, index: usize, dim: usize },
    #[error("expected {expected} occupations, got {got}")]
    OccupationCount { expected: usize, got: usize },
    #[error("state dimension {got} does not match layout dimension {expected}")]
    StateMismatch { expected: usize, got: usize },
    #[error("malformed keep list {0:?}")]
    BadKeepList(Vec<usize>),
    #[error("layout {0:?} is not the [2, 2, N1, N2] qubit-qubit-mode-mode layout")]
    NotStandard(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceLayout {
    dims: Vec<usize>,
}

impl SpaceLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self, LayoutError> {
        if let Some((site, &dim)) = dims.iter().enumerate().find(|(_, &d)| d < 2) {
            return Err(LayoutError::DimensionTooSmall { site, dim });
        }
        Ok(Self { dims })
    }

    /// Two qubits followed by two modes truncated at `n1` and `n2` levels.
    pub fn standard(n1: usize, n2: usize) -> Result<Self, LayoutError> {
        Self::new(vec![2, 2, n1, n2])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn sites(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_standard(&self) -> bool {
        self.dims.len() == 4 && self.dims[QUBIT_L] == 2 && self.dims[QUBIT_R] == 2
    }

    pub fn require_standard(&self) -> Result<(), LayoutError> {
        if self.is_standard() {
            Ok(())
        } else {
            Err(LayoutError::NotStandard(self.dims.clone()))
        }
    }

    /// Flattened index of a multi-index (no range checks).
    pub fn flat_index(&self, occupations: &[usize]) -> usize {
        occupations.iter().zip(&self.dims).fold(0, |acc, (&o, &d)| acc * d + o)
    }

    /// Multi-index of a flattened index.
    pub fn occupations(&self, mut flat: usize) -> Vec<usize> {
        let mut occ = vec![0; self.dims.len()];
        for (slot, &d) in occ.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        occ
    }

    fn check_site(&self, site: usize) -> Result<(), LayoutError> {
        if site >= self.dims.len() {
            return Err(LayoutError::SiteOutOfRange { site, sites: self.dims.len() });
        }
        Ok(())
    }

    /// Embeds `local_op` at `site`, identity elsewhere.
    pub fn embed(&self, local_op: &ComplexMatrix, site: usize) -> Result<ComplexMatrix, LayoutError> {
        self.check_site(site)?;
        let dim = self.dims[site];
        if local_op.rows() != dim || local_op.cols() != dim {
            return Err(LayoutError::OperatorMismatch {
                site,
                dim,
                rows: local_op.rows(),
                cols: local_op.cols(),
            });
        }
        let factors: Vec<ComplexMatrix> = self
            .dims
            .iter()
            .enumerate()
            .map(|(s, &d)| if s == site { local_op.clone() } else { ComplexMatrix::identity(d) })
            .collect();
        Ok(kron_all(&factors))
    }

    /// Computational basis column vector for the given local indices.
    pub fn basis_state(&self, occupations: &[usize]) -> Result<ComplexMatrix, LayoutError> {
        if occupations.len() != self.dims.len() {
            return Err(LayoutError::OccupationCount { expected: self.dims.len(), got: occupations.len() });
        }
        for (site, (&index, &dim)) in occupations.iter().zip(&self.dims).enumerate() {
            if index >= dim {
                return Err(LayoutError::OccupationOutOfRange { site, index, dim });
            }
        }
        let mut v = vec![ZERO; self.total_dim()];
        v[self.flat_index(occupations)] = ONE;
        Ok(ComplexMatrix::column(v))
    }

    /// Pure-state density matrix `|n><n|` of a basis state.
    pub fn basis_density(&self, occupations: &[usize]) -> Result<ComplexMatrix, LayoutError> {
        let v = self.basis_state(occupations)?;
        Ok(ComplexMatrix::outer(&v, &v))
    }

    /// Reduced density matrix on `keep_sites` (returned in ascending site order).
    pub fn partial_trace(&self, rho: &ComplexMatrix, keep_sites: &[usize]) -> Result<ComplexMatrix, LayoutError> {
        let total = self.total_dim();
        if rho.rows() != total || rho.cols() != total {
            return Err(LayoutError::StateMismatch { expected: total, got: rho.rows() });
        }
        let mut keep = keep_sites.to_vec();
        keep.sort_unstable();
        let duplicated = keep.windows(2).any(|w| w[0] == w[1]);
        if duplicated || keep.iter().any(|&s| s >= self.dims.len()) {
            return Err(LayoutError::BadKeepList(keep_sites.to_vec()));
        }
        let kept_dims: Vec<usize> = keep.iter().map(|&s| self.dims[s]).collect();
        let traced: Vec<usize> = (0..self.dims.len()).filter(|s| !keep.contains(s)).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&s| self.dims[s]).collect();
        let flatten = |occ: &[usize], sites: &[usize], dims: &[usize]| {
            sites.iter().zip(dims).fold(0usize, |acc, (&s, &d)| acc * d + occ[s])
        };
        let mut kept_index = Vec::with_capacity(total);
        let mut traced_index = Vec::with_capacity(total);
        for flat in 0..total {
            let occ = self.occupations(flat);
            kept_index.push(flatten(&occ, &keep, &kept_dims));
            traced_index.push(flatten(&occ, &traced, &traced_dims));
        }
        let kd: usize = kept_dims.iter().product();
        let mut out = ComplexMatrix::zeros(kd, kd);
        for i in 0..total {
            for j in 0..total {
                if traced_index[i] == traced_index[j] {
                    out[(kept_index[i], kept_index[j])] += rho[(i, j)];
                }
            }
        }
        Ok(out)
    }
}

/// Local operators in the `(|g>, |e>)` qubit basis and the Fock basis.
pub mod ops {
    use super::*;

    /// `sigma^+ = |e><g|`.
    pub fn sigma_plus() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]])
    }

    /// `sigma^- = |g><e|`.
    pub fn sigma_minus() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]])
    }

    /// `sigma^z = |e><e| - |g><g|`, i.e. `diag(-1, 1)` in this basis.
    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_real_diag(&[-1.0, 1.0])
    }

    /// `sigma^+ sigma^- = |e><e|`.
    pub fn excited_projector() -> ComplexMatrix {
        ComplexMatrix::from_real_diag(&[0.0, 1.0])
    }

    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])
    }

    pub fn sigma_y() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[vec![ZERO, C64::new(0.0, -1.0)], vec![C64::new(0.0, 1.0), ZERO]])
    }

    /// Truncated annihilation operator on `dim` Fock levels.
    pub fn annihilation(dim: usize) -> ComplexMatrix {
        let mut a = ComplexMatrix::zeros(dim, dim);
        for n in 1..dim {
            a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        a
    }

    pub fn number(dim: usize) -> ComplexMatrix {
        let diag: Vec<f64> = (0..dim).map(|n| n as f64).collect();
        ComplexMatrix::from_real_diag(&diag)
    }
}

#[cfg(test)]
mod tests {
    use super::ops::*;
    use super::*;
    use crate::linalg::{hermitian_eig, kron};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut StdRng, n: usize) -> ComplexMatrix {
        let data = (0..n * n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        ComplexMatrix::from_vec(n, n, data).unwrap()
    }

    #[test]
    fn rejects_degenerate_dimension() {
        assert!(SpaceLayout::new(vec![2, 1]).is_err());
    }

    #[test]
    fn embed_two_site() {
        let layout = SpaceLayout::new(vec![2, 2]).unwrap();
        let z = sigma_z();
        assert_eq!(layout.embed(&z, 0).unwrap(), kron(&z, &ComplexMatrix::identity(2)));
        assert!(layout.embed(&ComplexMatrix::identity(3), 0).is_err());
        assert!(layout.embed(&z, 2).is_err());
    }

    #[test]
    fn embed_identity_is_identity() {
        let layout = SpaceLayout::standard(3, 3).unwrap();
        for site in 0..4 {
            let d = layout.dims()[site];
            assert_eq!(layout.embed(&ComplexMatrix::identity(d), site).unwrap(), ComplexMatrix::identity(36));
        }
    }

    #[test]
    fn embedded_operators_on_distinct_sites_commute() {
        let layout = SpaceLayout::standard(3, 2).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        for (s1, s2) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            let a = layout.embed(&random_matrix(&mut rng, layout.dims()[s1]), s1).unwrap();
            let b = layout.embed(&random_matrix(&mut rng, layout.dims()[s2]), s2).unwrap();
            assert!(a.commutator(&b).max_abs() < 1e-14);
        }
    }

    #[test]
    fn embed_is_multiplicative_on_same_site() {
        let layout = SpaceLayout::standard(3, 3).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        for site in 0..4 {
            let d = layout.dims()[site];
            let a = random_matrix(&mut rng, d);
            let b = random_matrix(&mut rng, d);
            let lhs = layout.embed(&a, site).unwrap().matmul(&layout.embed(&b, site).unwrap());
            let rhs = layout.embed(&a.matmul(&b), site).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-13);
        }
    }

    #[test]
    fn basis_state_indexing() {
        let layout = SpaceLayout::standard(3, 3).unwrap();
        let v = layout.basis_state(&[1, 0, 0, 0]).unwrap();
        assert_eq!(v.rows(), 36);
        // (1,0,0,0) flattens to 1*2*3*3 = 18
        assert_eq!(v[(18, 0)], ONE);
        assert!((v.frobenius_norm() - 1.0).abs() < 1e-15);
        assert!(layout.basis_state(&[0, 0, 3, 0]).is_err());
        assert!(layout.basis_state(&[0, 0]).is_err());
        assert_eq!(layout.occupations(18), vec![1, 0, 0, 0]);
    }

    #[test]
    fn excited_left_population_matrix_element() {
        let layout = SpaceLayout::standard(3, 3).unwrap();
        let v = layout.basis_state(&[1, 0, 0, 0]).unwrap();
        let p = layout.embed(&sigma_plus().matmul(&sigma_minus()), QUBIT_L).unwrap();
        assert!((p.matrix_element(&v, &v) - ONE).norm() < 1e-15);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let layout = SpaceLayout::new(vec![2, 3]).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 2);
        let rho_a = a.dagger().matmul(&a).scale_real(1.0 / a.dagger().matmul(&a).trace().re);
        let b = random_matrix(&mut rng, 3);
        let rho_b = b.dagger().matmul(&b).scale_real(1.0 / b.dagger().matmul(&b).trace().re);
        let rho = kron(&rho_a, &rho_b);
        assert!(layout.partial_trace(&rho, &[0]).unwrap().max_abs_diff(&rho_a) < 1e-14);
        assert!(layout.partial_trace(&rho, &[1]).unwrap().max_abs_diff(&rho_b) < 1e-14);
        assert!(layout.partial_trace(&rho, &[0, 1]).unwrap().max_abs_diff(&rho) < 1e-15);
        assert!(layout.partial_trace(&rho, &[0, 0]).is_err());
        assert!(layout.partial_trace(&rho, &[2]).is_err());
    }

    #[test]
    fn bell_state_marginal_is_maximally_mixed() {
        let layout = SpaceLayout::new(vec![2, 2]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = ComplexMatrix::column(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]);
        let rho = ComplexMatrix::outer(&psi, &psi);
        let marginal = layout.partial_trace(&rho, &[0]).unwrap();
        assert!(marginal.max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
    }

    #[test]
    fn complementary_marginals_share_spectrum() {
        let layout = SpaceLayout::new(vec![2, 2, 3, 2]).unwrap();
        let mut rng = StdRng::seed_from_u64(4);
        let dim = layout.total_dim();
        let mut amps: Vec<C64> =
            (0..dim).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|z| *z /= norm);
        let psi = ComplexMatrix::column(amps);
        let rho = ComplexMatrix::outer(&psi, &psi);
        let a = layout.partial_trace(&rho, &[0, 1]).unwrap();
        let b = layout.partial_trace(&rho, &[2, 3]).unwrap();
        assert!((a.trace().re - 1.0).abs() < 1e-12 && (b.trace().re - 1.0).abs() < 1e-12);
        let mut ea = hermitian_eig(&a).unwrap().values;
        let mut eb = hermitian_eig(&b).unwrap().values;
        ea.retain(|&x| x > 1e-10);
        eb.retain(|&x| x > 1e-10);
        assert_eq!(ea.len(), eb.len());
        for (x, y) in ea.iter().zip(&eb) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn ladder_operators() {
        let a = annihilation(3);
        let n = a.dagger().matmul(&a);
        assert!(n.max_abs_diff(&number(3)) < 1e-15);
        let sz = sigma_plus().commutator(&sigma_minus());
        assert!(sz.max_abs_diff(&sigma_z()) < 1e-15);
    }
}
