//! Dense operators on truncated Fock spaces and two-level truncation.
//!
//! Levels are indexed 0..N-1. Composite spaces use the Kronecker ordering
//! in which slot 0 is the most significant index.

use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix};

/// Complex scalar used throughout.
pub type C64 = Complex<f64>;

/// Largest matrix dimension accepted by the exponential.
pub const MAX_EXP_DIM: usize = 4096;

/// Dense operator with the factor dimensions of the space it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    /// Subsystem dimensions; a single-mode operator has one entry.
    pub dims: Vec<usize>,
    pub matrix: DMatrix<C64>,
    pub label: String,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::Domain(format!("Fock truncation must be at least 2, got {dim}")));
    }
    Ok(())
}

impl FockOperator {
    /// Wrap a square matrix acting on a space with the given factors.
    pub fn new(dims: Vec<usize>, matrix: DMatrix<C64>, label: impl Into<String>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if matrix.nrows() != total || matrix.ncols() != total {
            return Err(Error::Shape(format!(
                "matrix is {}x{}, space dimension is {total}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { dims, matrix, label: label.into() })
    }

    /// Total dimension of the space.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Identity on a space with the given factors.
    pub fn identity(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self { dims: dims.to_vec(), matrix: DMatrix::identity(n, n), label: "I".into() }
    }

    /// Hermitian conjugate.
    pub fn adjoint(&self) -> Self {
        Self { dims: self.dims.clone(), matrix: self.matrix.adjoint(), label: format!("({})†", self.label) }
    }

    /// Operator product self·other.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            matrix: &self.matrix * &other.matrix,
            label: format!("{}·{}", self.label, other.label),
        })
    }

    /// Sum self + other.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            matrix: &self.matrix + &other.matrix,
            label: format!("{}+{}", self.label, other.label),
        })
    }

    /// Scalar multiple.
    pub fn scale(&self, s: C64) -> Self {
        Self { dims: self.dims.clone(), matrix: &self.matrix * s, label: self.label.clone() }
    }

    /// Commutator [self, other].
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
            label: format!("[{},{}]", self.label, other.label),
        })
    }

    /// Integer power.
    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::identity(&self.dims);
        for _ in 0..n {
            out.matrix = &out.matrix * &self.matrix;
        }
        out.label = format!("({})^{n}", self.label);
        out
    }

    /// Largest absolute deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("space {:?} differs from {:?}", self.dims, other.dims)));
        }
        Ok(())
    }
}

/// Annihilation operator a = Σ √(j+1) |j⟩⟨j+1|.
pub fn annihilation(dim: usize) -> Result<FockOperator> {
    check_dim(dim)?;
    let mut m = DMatrix::zeros(dim, dim);
    for j in 0..dim - 1 {
        m[(j, j + 1)] = c(((j + 1) as f64).sqrt());
    }
    Ok(FockOperator { dims: vec![dim], matrix: m, label: "a".into() })
}

/// Creation operator a† = Σ √(j+1) |j+1⟩⟨j|.
pub fn creation(dim: usize) -> Result<FockOperator> {
    let mut a = annihilation(dim)?.adjoint();
    a.label = "a†".into();
    Ok(a)
}

/// Number operator a†a.
pub fn number(dim: usize) -> Result<FockOperator> {
    check_dim(dim)?;
    let m = DMatrix::from_fn(dim, dim, |i, j| if i == j { c(i as f64) } else { c(0.0) });
    Ok(FockOperator { dims: vec![dim], matrix: m, label: "n".into() })
}

/// Displacement quadrature a† + a.
pub fn position_quadrature(dim: usize) -> Result<FockOperator> {
    let mut x = creation(dim)?.add(&annihilation(dim)?)?;
    x.label = "a†+a".into();
    Ok(x)
}

/// Momentum-like combination a† − a.
pub fn momentum_quadrature(dim: usize) -> Result<FockOperator> {
    let mut p = creation(dim)?.add(&annihilation(dim)?.scale(c(-1.0)))?;
    p.label = "a†-a".into();
    Ok(p)
}

/// Pauli operator labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliKind {
    X,
    Y,
    Z,
    Identity,
    Raise,
    Lower,
}

/// Two-level operator in the basis (|0⟩, |1⟩) with |1⟩ the excited state.
///
/// The convention follows from truncating a†+a, i(a†−a) and a†a: σ_z is
/// +1 on the excited state, σ_+ = |1⟩⟨0|.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliOperator {
    pub which: PauliKind,
    pub matrix: DMatrix<C64>,
}

/// Build a Pauli operator.
pub fn pauli(which: PauliKind) -> PauliOperator {
    let z = c(0.0);
    let o = c(1.0);
    let i = C64::new(0.0, 1.0);
    let m = match which {
        PauliKind::X => [z, o, o, z],
        PauliKind::Y => [z, -i, i, z],
        PauliKind::Z => [-o, z, z, o],
        PauliKind::Identity => [o, z, z, o],
        PauliKind::Raise => [z, z, o, z],
        PauliKind::Lower => [z, o, z, z],
    };
    PauliOperator { which, matrix: DMatrix::from_row_slice(2, 2, &m) }
}

impl PauliOperator {
    /// As a single-mode operator on a two-level space.
    pub fn as_fock(&self) -> FockOperator {
        FockOperator { dims: vec![2], matrix: self.matrix.clone(), label: format!("σ{:?}", self.which) }
    }
}

/// Coefficients of an operator in the basis {σ_0, σ_x, σ_y, σ_z}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliDecomposition {
    pub identity: C64,
    pub x: C64,
    pub y: C64,
    pub z: C64,
}

impl PauliDecomposition {
    /// Reassemble the 2×2 matrix.
    pub fn matrix(&self) -> DMatrix<C64> {
        pauli(PauliKind::Identity).matrix * self.identity
            + pauli(PauliKind::X).matrix * self.x
            + pauli(PauliKind::Y).matrix * self.y
            + pauli(PauliKind::Z).matrix * self.z
    }
}

/// Project a single-mode operator onto its lowest two levels and expand in Pauli matrices.
pub fn two_level_truncate(op: &FockOperator) -> Result<PauliDecomposition> {
    if op.dims.len() != 1 {
        return Err(Error::Shape("two-level truncation needs a single-mode operator".into()));
    }
    let block = op.matrix.view((0, 0), (2, 2)).into_owned();
    let coeff = |k: PauliKind| (pauli(k).matrix * &block).trace() * 0.5;
    Ok(PauliDecomposition {
        identity: coeff(PauliKind::Identity),
        x: coeff(PauliKind::X),
        y: coeff(PauliKind::Y),
        z: coeff(PauliKind::Z),
    })
}

/// Ordered tensor-product space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeSpace {
    pub factors: Vec<usize>,
}

impl CompositeSpace {
    pub fn new(factors: Vec<usize>) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("invalid factor list {factors:?}")));
        }
        Ok(Self { factors })
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().product()
    }

    /// Flat index of a multi-index.
    pub fn flatten(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.factors.len() || idx.iter().zip(&self.factors).any(|(i, d)| i >= d) {
            return Err(Error::Shape(format!("index {idx:?} outside {:?}", self.factors)));
        }
        Ok(idx.iter().zip(&self.factors).fold(0, |acc, (i, d)| acc * d + i))
    }

    /// Multi-index of a flat index.
    pub fn unflatten(&self, mut flat: usize) -> Result<Vec<usize>> {
        if flat >= self.total_dim() {
            return Err(Error::Shape(format!("flat index {flat} outside dimension {}", self.total_dim())));
        }
        let mut out = vec![0; self.factors.len()];
        for (slot, d) in self.factors.iter().enumerate().rev() {
            out[slot] = flat % d;
            flat /= d;
        }
        Ok(out)
    }
}

/// Kronecker product of two dense matrices.
pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Embed a single-factor operator into slot `slot`, identity elsewhere.
pub fn tensor_embed(op: &FockOperator, space: &CompositeSpace, slot: usize) -> Result<FockOperator> {
    let d = *space
        .factors
        .get(slot)
        .ok_or_else(|| Error::Shape(format!("slot {slot} outside {:?}", space.factors)))?;
    if op.dim() != d {
        return Err(Error::Shape(format!("operator dimension {} does not match factor {d}", op.dim())));
    }
    let mut m = DMatrix::<C64>::identity(1, 1);
    for (s, &f) in space.factors.iter().enumerate() {
        let factor = if s == slot { op.matrix.clone() } else { DMatrix::identity(f, f) };
        m = kron(&m, &factor);
    }
    Ok(FockOperator { dims: space.factors.clone(), matrix: m, label: format!("{}@{slot}", op.label) })
}

/// exp(scale·op) by scaling and squaring with a Padé approximant.
pub fn matrix_exponential(op: &FockOperator, scale: C64) -> Result<FockOperator> {
    let total: usize = op.dims.iter().product();
    if total > MAX_EXP_DIM {
        return Err(Error::Resource(format!("dimension {total} exceeds cap {MAX_EXP_DIM}")));
    }
    let m = (&op.matrix * scale).exp();
    Ok(FockOperator { dims: op.dims.clone(), matrix: m, label: format!("exp({})", op.label) })
}

/// Operator 2-norm (largest singular value).
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_definitions() {
        let a = annihilation(3).unwrap();
        assert!((a.matrix[(1, 2)] - c(2f64.sqrt())).norm() < 1e-15);
        let n = number(5).unwrap();
        let ev = n.matrix.map(|z| z.re).symmetric_eigenvalues();
        let mut v: Vec<f64> = ev.iter().cloned().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, x) in v.iter().enumerate() {
            assert!((x - i as f64).abs() < 1e-12);
        }
        assert!(matches!(annihilation(1), Err(Error::Domain(_))));
    }

    #[test]
    fn quartic_matrix_element() {
        let x4 = position_quadrature(20).unwrap().pow(4);
        assert!((x4.matrix[(3, 3)].re - 75.0).abs() < 1e-10);
    }

    #[test]
    fn commutator_on_interior() {
        let n = 12;
        let comm = annihilation(n).unwrap().commutator(&creation(n).unwrap()).unwrap();
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((comm.matrix[(i, j)] - c(want)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_maps() {
        let n = 6;
        let x = two_level_truncate(&position_quadrature(n).unwrap()).unwrap();
        assert!((x.x - c(1.0)).norm() < 1e-15 && x.identity.norm() < 1e-15 && x.z.norm() < 1e-15);
        let iy = momentum_quadrature(n).unwrap().scale(C64::new(0.0, 1.0));
        let y = two_level_truncate(&iy).unwrap();
        assert!((y.y - c(1.0)).norm() < 1e-15 && y.x.norm() < 1e-15);
        let nn = two_level_truncate(&number(n).unwrap()).unwrap();
        assert!((nn.identity - c(0.5)).norm() < 1e-15 && (nn.z - c(0.5)).norm() < 1e-15);
        let x2 = two_level_truncate(&position_quadrature(n).unwrap().pow(2)).unwrap();
        assert!((x2.identity - c(2.0)).norm() < 1e-14 && (x2.z - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn embedding_examples() {
        let space = CompositeSpace::new(vec![2, 3]).unwrap();
        let sz = tensor_embed(&pauli(PauliKind::Z).as_fock(), &space, 0).unwrap();
        assert!(sz.matrix.trace().norm() < 1e-15);
        assert!(tensor_embed(&number(3).unwrap(), &space, 0).is_err());
        let s4 = CompositeSpace::new(vec![4, 4]).unwrap();
        let a0 = tensor_embed(&annihilation(4).unwrap(), &s4, 0).unwrap();
        let ad1 = tensor_embed(&creation(4).unwrap(), &s4, 1).unwrap();
        assert!(a0.commutator(&ad1).unwrap().matrix.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn exponential_examples() {
        let sx = pauli(PauliKind::X).as_fock();
        let id = matrix_exponential(&sx, c(0.0)).unwrap();
        assert!((id.matrix - DMatrix::<C64>::identity(2, 2)).norm() < 1e-15);
        let half = std::f64::consts::FRAC_PI_2;
        let u = matrix_exponential(&sx, C64::new(0.0, half)).unwrap();
        let v = matrix_exponential(&sx, C64::new(0.0, -half)).unwrap();
        assert!((u.mul(&v).unwrap().matrix - DMatrix::<C64>::identity(2, 2)).norm() < 1e-14);
        let big = FockOperator { dims: vec![4097], matrix: DMatrix::zeros(1, 1), label: "big".into() };
        assert!(matches!(matrix_exponential(&big, c(1.0)), Err(Error::Resource(_))));
    }
}
