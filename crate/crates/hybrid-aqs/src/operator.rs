//! Dense Hermitian operators with cached spectral decompositions.
//!
//! Registers stay at or below seven qubits, so operators are stored as full
//! `2^n × 2^n` complex matrices and diagonalised exactly. The decomposition
//! is computed once on demand and shared afterwards; an operator is
//! immutable after construction.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::AqsError;

/// Relative tolerance on `‖M − M†‖_max` accepted at construction.
pub const HERMITICITY_REL_TOL: f64 = 1e-12;

/// Eigenvalues closer than `1e-9 · max(1, ‖H‖₂)` belong to one degenerate
/// group.
pub const DEGENERACY_REL_TOL: f64 = 1e-9;

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending, eigenvectors
/// the matching columns of a unitary.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<Complex64>,
}

/// A validated Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    matrix: DMatrix<Complex64>,
    spectral: OnceLock<SpectralDecomposition>,
}

impl HermitianOperator {
    /// Validates hermiticity (`‖M − M†‖_max ≤ 1e-12 · ‖M‖_max`) and wraps
    /// the matrix.
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self, AqsError> {
        if matrix.nrows() != matrix.ncols() || matrix.is_empty() {
            return Err(AqsError::DimensionError(format!(
                "operator must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = max_abs(&matrix);
        let deviation = max_abs(&(&matrix - matrix.adjoint()));
        let tolerance = HERMITICITY_REL_TOL * scale.max(1e-300);
        if deviation > tolerance {
            return Err(AqsError::NotHermitian { deviation, tolerance });
        }
        Ok(Self {
            matrix,
            spectral: OnceLock::new(),
        })
    }

    /// Builds from real entries; hermiticity still checked.
    pub fn from_real(matrix: DMatrix<f64>) -> Result<Self, AqsError> {
        Self::new(matrix.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            spectral: OnceLock::new(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
            spectral: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    /// Sum of two operators of equal dimension.
    pub fn add(&self, other: &Self) -> Result<Self, AqsError> {
        if self.dim() != other.dim() {
            return Err(AqsError::DimensionError(format!(
                "cannot add operators of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
            spectral: OnceLock::new(),
        })
    }

    /// Scales by a real factor (complex factors would break hermiticity).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * Complex64::new(factor, 0.0),
            spectral: OnceLock::new(),
        }
    }

    /// Tensor product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.kronecker(&other.matrix),
            spectral: OnceLock::new(),
        }
    }

    /// Plain matrix product; generally not Hermitian, hence a raw matrix.
    pub fn matmul(&self, other: &Self) -> DMatrix<Complex64> {
        &self.matrix * &other.matrix
    }

    /// Eigendecomposition with ascending eigenvalues, computed once.
    pub fn spectral_decomposition(&self) -> &SpectralDecomposition {
        self.spectral.get_or_init(|| {
            // Symmetrize to scrub the sub-tolerance asymmetry allowed at
            // construction before handing to the solver.
            let sym = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
            let eig = sym.symmetric_eigen();
            let n = eig.eigenvalues.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
            let mut eigenvectors = DMatrix::zeros(n, n);
            for (dst, &src) in order.iter().enumerate() {
                eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
            }
            SpectralDecomposition {
                eigenvalues,
                eigenvectors,
            }
        })
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        let ev = &self.spectral_decomposition().eigenvalues;
        ev[0].abs().max(ev[ev.len() - 1].abs())
    }

    /// Absolute tolerance under which eigenvalues count as degenerate.
    pub fn degeneracy_tolerance(&self) -> f64 {
        DEGENERACY_REL_TOL * self.spectral_norm().max(1.0)
    }

    /// Eigenvalues grouped into degenerate clusters (ascending). Each entry
    /// is the group's lowest eigenvalue and the index range into the sorted
    /// spectrum. Chains of near-coincident values merge transitively.
    pub fn eigenvalue_groups(&self) -> Vec<(f64, std::ops::Range<usize>)> {
        let ev = &self.spectral_decomposition().eigenvalues;
        let tol = self.degeneracy_tolerance();
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=ev.len() {
            if i == ev.len() || ev[i] - ev[i - 1] > tol {
                groups.push((ev[start], start..i));
                start = i;
            }
        }
        groups
    }

    /// Ground energy and an orthonormal basis (columns) of the possibly
    /// degenerate ground subspace.
    pub fn ground_state(&self) -> (f64, DMatrix<Complex64>) {
        let dec = self.spectral_decomposition();
        let (energy, range) = self.eigenvalue_groups().remove(0);
        (energy, dec.eigenvectors.columns(range.start, range.len()).into_owned())
    }

    /// Projector onto the ground subspace.
    pub fn ground_projector(&self) -> DMatrix<Complex64> {
        let (_, basis) = self.ground_state();
        &basis * basis.adjoint()
    }

    /// Spectral gap from the ground group to the next distinct group.
    /// `None` when the whole spectrum is one degenerate cluster.
    pub fn ground_gap(&self) -> Option<f64> {
        let groups = self.eigenvalue_groups();
        (groups.len() > 1).then(|| groups[1].0 - groups[0].0)
    }

    /// Unitary `exp(-i H t)` from the eigendecomposition.
    pub fn evolution_unitary(&self, t: f64) -> DMatrix<Complex64> {
        let dec = self.spectral_decomposition();
        let phases = DVector::from_iterator(
            self.dim(),
            dec.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, -e * t)),
        );
        let v = &dec.eigenvectors;
        v * DMatrix::from_diagonal(&phases) * v.adjoint()
    }

    /// `⟨ψ|H|ψ⟩` for a column vector.
    pub fn expectation(&self, psi: &DVector<Complex64>) -> f64 {
        (psi.adjoint() * &self.matrix * psi)[(0, 0)].re
    }

    /// `tr(Hρ)` for a density matrix.
    pub fn expectation_density(&self, rho: &DMatrix<Complex64>) -> f64 {
        (&self.matrix * rho).trace().re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }
}

/// Largest entry modulus; zero for empty matrices.
fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// 2×2 Pauli X.
pub fn sigma_x() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[
        Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0),
        Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0),
    ])
}

/// 2×2 Pauli Y.
pub fn sigma_y() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[
        Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0),
        Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0),
    ])
}

/// 2×2 Pauli Z.
pub fn sigma_z() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[
        Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0),
    ])
}

/// `|0⟩⟨0|` on one qubit.
pub fn ket0_projector() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[
        Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0),
    ])
}

/// `|1⟩⟨1|` on one qubit.
pub fn ket1_projector() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[
        Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0),
    ])
}

/// Embeds a single-qubit matrix at `site` of an `n`-qubit register, site 0
/// being the leftmost tensor factor.
pub fn embed_single_qubit(op: &DMatrix<Complex64>, site: usize, n: usize) -> DMatrix<Complex64> {
    assert_eq!(op.nrows(), 2);
    assert!(site < n, "site {site} out of range for {n} qubits");
    let mut out = DMatrix::<Complex64>::identity(1, 1);
    for k in 0..n {
        out = if k == site {
            out.kronecker(op)
        } else {
            out.kronecker(&DMatrix::identity(2, 2))
        };
    }
    out
}
