use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::numerics::tolerances;
use crate::{Error, Result};

/// Dense complex square matrix with verified Hermitian/unitary flags.
///
/// The Hermitian flag is computed on every construction. The unitary flag is
/// only ever set by [`Operator::unitary`], which checks `U†U = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: DMatrix<Complex64>,
    hermitian: bool,
    unitary: bool,
}

impl Operator {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("operator entries"));
        }
        let hermitian = hermitian_deviation(&matrix) <= tolerances().state;
        Ok(Operator {
            matrix,
            hermitian,
            unitary: false,
        })
    }

    /// Builds an operator that must be Hermitian.
    pub fn hermitian(matrix: DMatrix<Complex64>) -> Result<Self> {
        let op = Self::new(matrix)?;
        if !op.hermitian {
            return Err(Error::NotHermitian {
                deviation: hermitian_deviation(&op.matrix),
            });
        }
        Ok(op)
    }

    /// Builds an operator that must be unitary to the operator tolerance.
    pub fn unitary(matrix: DMatrix<Complex64>) -> Result<Self> {
        let mut op = Self::new(matrix)?;
        let deviation = unitary_deviation(&op.matrix);
        if deviation > tolerances().operator {
            return Err(Error::NotUnitary { deviation });
        }
        op.unitary = true;
        Ok(op)
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        let m = DMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| Complex64::new(x, 0.0)));
        Self::new(m)
    }

    pub fn identity(dim: usize) -> Self {
        Operator {
            matrix: DMatrix::identity(dim, dim),
            hermitian: true,
            unitary: true,
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

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
            unitary: self.unitary,
        }
    }

    fn same_dim(&self, other: &Operator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.same_dim(other)?;
        Operator::new(&self.matrix + &other.matrix)
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.same_dim(other)?;
        Operator::new(&self.matrix - &other.matrix)
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        self.same_dim(other)?;
        Operator::new(&self.matrix * &other.matrix)
    }

    pub fn scale(&self, factor: Complex64) -> Operator {
        let matrix = &self.matrix * factor;
        let hermitian = self.hermitian && factor.im == 0.0;
        Operator {
            matrix,
            hermitian,
            unitary: self.unitary && factor.norm() == 1.0,
        }
    }

    pub fn scale_real(&self, factor: f64) -> Operator {
        self.scale(Complex64::new(factor, 0.0))
    }
}

pub(crate) fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn unitary_deviation(m: &DMatrix<Complex64>) -> f64 {
    let product = m.adjoint() * m;
    max_entry_dev_from_identity(&product)
}

pub(crate) fn max_entry_dev_from_identity(m: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for ((i, j), z) in m.iter().enumerate().map(|(k, z)| ((k % m.nrows(), k / m.nrows()), z)) {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((z - Complex64::new(target, 0.0)).norm());
    }
    worst
}

pub(crate) fn max_entry(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}
