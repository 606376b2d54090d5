//! Dense operators on truncated multi-mode Fock spaces.
//!
//! Tensor ordering: the first label of a [`ModeLayout`] is the
//! slowest-varying index of the product basis, so for a layout `(A:2, B:2)`
//! the basis order is `|0,0>, |0,1>, |1,0>, |1,1>`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Default relative tolerance used when checking Hermiticity.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Ordered list of truncated subsystems making up a product Hilbert space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeLayout {
    labels: Vec<String>,
    dims: Vec<usize>,
}

impl ModeLayout {
    pub fn new<S: Into<String>>(modes: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut labels = Vec::new();
        let mut dims = Vec::new();
        for (label, dim) in modes {
            let label = label.into();
            if dim < 2 {
                return Err(Error::input(format!(
                    "mode `{label}` has truncation {dim}, need at least 2 levels"
                )));
            }
            if labels.contains(&label) {
                return Err(Error::input(format!("duplicate mode label `{label}`")));
            }
            labels.push(label);
            dims.push(dim);
        }
        if labels.is_empty() {
            return Err(Error::input("layout needs at least one mode"));
        }
        Ok(Self { labels, dims })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::input(format!("unknown mode label `{label}`")))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.index_of(label)?])
    }

    /// Flat basis index of a product state given per-mode occupations.
    pub fn basis_index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.dims.len() {
            return Err(Error::input(format!(
                "expected {} occupations, got {}",
                self.dims.len(),
                occupations.len()
            )));
        }
        let mut index = 0;
        for (&n, (&d, label)) in occupations.iter().zip(self.dims.iter().zip(&self.labels)) {
            if n >= d {
                return Err(Error::input(format!(
                    "occupation {n} of mode `{label}` exceeds truncation {d}"
                )));
            }
            index = index * d + n;
        }
        Ok(index)
    }

    /// Inverse of [`basis_index`](Self::basis_index).
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.dims.len()];
        for (slot, &d) in occ.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        occ
    }

    /// Same modes with every truncation raised by `extra` levels.
    pub fn enlarged(&self, extra: usize) -> Self {
        Self {
            labels: self.labels.clone(),
            dims: self.dims.iter().map(|d| d + extra).collect(),
        }
    }
}

/// A dense complex operator bound to the layout it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    layout: ModeLayout,
}

impl Operator {
    pub fn from_matrix(layout: &ModeLayout, matrix: CMatrix) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::input(format!(
                "matrix is {}x{}, layout needs {n}x{n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            matrix,
            layout: layout.clone(),
        })
    }

    pub fn zeros(layout: &ModeLayout) -> Self {
        let n = layout.total_dim();
        Self {
            matrix: CMatrix::zeros(n, n),
            layout: layout.clone(),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            layout: self.layout.clone(),
        }
    }

    /// `max|M - M†|` divided by `max|M|` (zero for the zero operator).
    pub fn hermiticity_error(&self) -> f64 {
        let scale = max_abs(&self.matrix);
        if scale == 0.0 {
            return 0.0;
        }
        max_abs(&(&self.matrix - self.matrix.adjoint())) / scale
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() <= HERMITIAN_TOL
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * C64::new(factor, 0.0),
            layout: self.layout.clone(),
        }
    }

    pub fn add_scaled(&mut self, other: &Operator, factor: f64) {
        self.matrix += &other.matrix * C64::new(factor, 0.0);
    }

    pub fn product(&self, other: &Operator) -> Self {
        Self {
            matrix: &self.matrix * &other.matrix,
            layout: self.layout.clone(),
        }
    }

    pub fn commutator(&self, other: &Operator) -> CMatrix {
        &self.matrix * &other.matrix - &other.matrix * &self.matrix
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Single-mode annihilation matrix with `a[n-1, n] = sqrt(n)`.
pub fn ladder(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn single_mode_number(dim: usize) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_fn(dim, |n, _| {
        C64::new(n as f64, 0.0)
    }))
}

/// Kronecker product over the layout with identities on unspecified modes.
pub fn tensor_embed(ops: &[(&str, &CMatrix)], layout: &ModeLayout) -> Result<Operator> {
    let mut factors: Vec<Option<&CMatrix>> = vec![None; layout.num_modes()];
    for (label, m) in ops {
        let idx = layout.index_of(label)?;
        if factors[idx].is_some() {
            return Err(Error::input(format!("mode `{label}` given twice")));
        }
        let d = layout.dims()[idx];
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::input(format!(
                "operator on `{label}` is {}x{}, mode dimension is {d}",
                m.nrows(),
                m.ncols()
            )));
        }
        factors[idx] = Some(m);
    }
    let mut acc = CMatrix::identity(1, 1);
    for (factor, &d) in factors.iter().zip(layout.dims()) {
        acc = match factor {
            Some(m) => acc.kronecker(*m),
            None => acc.kronecker(&CMatrix::identity(d, d)),
        };
    }
    Operator::from_matrix(layout, acc)
}

pub fn identity(layout: &ModeLayout) -> Operator {
    let n = layout.total_dim();
    Operator {
        matrix: CMatrix::identity(n, n),
        layout: layout.clone(),
    }
}

pub fn annihilation(layout: &ModeLayout, mode: &str) -> Result<Operator> {
    let a = ladder(layout.dim_of(mode)?);
    tensor_embed(&[(mode, &a)], layout)
}

pub fn creation(layout: &ModeLayout, mode: &str) -> Result<Operator> {
    Ok(annihilation(layout, mode)?.adjoint())
}

pub fn number_op(layout: &ModeLayout, mode: &str) -> Result<Operator> {
    let n = single_mode_number(layout.dim_of(mode)?);
    tensor_embed(&[(mode, &n)], layout)
}
