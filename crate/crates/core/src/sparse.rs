//! Symmetric sparse matrices stored by their upper triangle in compressed
//! columns, with one pattern shared by a whole matrix family.

use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LltRef, SymbolicCholesky,
    SymmetricOrdering,
};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side, Spec};

use crate::dd::{self, Dd};
use crate::error::{Error, Result};

/// Upper-triangle pattern (`row <= col`), rows sorted within each column.
#[derive(Debug)]
pub struct SymPattern {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic: OnceLock<Arc<SymbolicCholesky<usize>>>,
}

impl PartialEq for SymPattern {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.col_ptr == other.col_ptr && self.row_idx == other.row_idx
    }
}

impl SymPattern {
    /// Builds a pattern from per-column row lists. Entries below the
    /// diagonal are dropped, duplicates merged, and the diagonal always kept.
    pub fn from_columns(dim: usize, mut columns: Vec<Vec<usize>>) -> Result<Self> {
        if columns.len() != dim {
            return Err(Error::Construction(format!(
                "{} columns supplied for dimension {dim}",
                columns.len()
            )));
        }
        let mut col_ptr = Vec::with_capacity(dim + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for (j, rows) in columns.iter_mut().enumerate() {
            rows.push(j);
            rows.retain(|&i| i <= j);
            rows.sort_unstable();
            rows.dedup();
            row_idx.extend_from_slice(rows);
            col_ptr.push(row_idx.len());
        }
        Ok(SymPattern {
            dim,
            col_ptr,
            row_idx,
            symbolic: OnceLock::new(),
        })
    }

    /// Full upper triangle of a `dim × dim` matrix.
    pub fn dense(dim: usize) -> Self {
        let columns = (0..dim).map(|j| (0..=j).collect()).collect();
        Self::from_columns(dim, columns).expect("column count matches")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    /// Storage index of `(i, j)` in either order, if present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if j >= self.dim {
            return None;
        }
        let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
        self.row_idx[lo..hi].binary_search(&i).ok().map(|k| lo + k)
    }

    fn symbolic_ref(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.dim, self.dim, &self.col_ptr, None, &self.row_idx)
    }

    /// Symbolic Cholesky analysis, computed on first use and then shared.
    /// The simplicial variant is used because it needs no dense kernels,
    /// which are unavailable for double-double scalars.
    pub fn symbolic_llt(&self) -> Result<Arc<SymbolicCholesky<usize>>> {
        if let Some(s) = self.symbolic.get() {
            return Ok(s.clone());
        }
        let params = CholeskySymbolicParams {
            supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SIMPLICIAL,
            ..Default::default()
        };
        let s = factorize_symbolic_cholesky(
            self.symbolic_ref(),
            Side::Upper,
            SymmetricOrdering::Amd,
            params,
        )
        .map_err(|e| Error::Construction(format!("symbolic analysis failed: {e:?}")))?;
        Ok(self.symbolic.get_or_init(|| Arc::new(s)).clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pattern: Arc<SymPattern>,
    values: Vec<Dd>,
}

impl SymMatrix {
    pub fn zeros(pattern: Arc<SymPattern>) -> Self {
        let values = vec![dd::ZERO; pattern.nnz()];
        SymMatrix { pattern, values }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Construction("dense input must be square".into()));
        }
        let pattern = Arc::new(SymPattern::dense(n));
        let mut m = SymMatrix::zeros(pattern);
        for j in 0..n {
            for i in 0..=j {
                let k = m.pattern.position(i, j).expect("dense pattern");
                m.values[k] = dd::scale(dd::add(dd::from(rows[i][j]), dd::from(rows[j][i])), 0.5);
            }
        }
        Ok(m)
    }

    pub fn pattern(&self) -> &Arc<SymPattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim
    }

    pub fn values(&self) -> &[Dd] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Dd] {
        &mut self.values
    }

    /// Entry `(i, j)` rounded to `f64`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| dd::to_f64(self.values[k]))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.0.abs()))
    }

    fn check_same_pattern(&self, other: &SymMatrix) -> Result<()> {
        if Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern {
            Ok(())
        } else {
            Err(Error::Construction("matrices do not share a sparsity pattern".into()))
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &SymMatrix) -> Result<()> {
        self.check_same_pattern(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = dd::add(*a, dd::scale(*b, alpha));
        }
        Ok(())
    }

    /// `self * x` in double-double.
    pub fn apply_dd(&self, x: &[f64]) -> Vec<Dd> {
        let p = &*self.pattern;
        assert_eq!(x.len(), p.dim);
        let mut y = vec![dd::ZERO; p.dim];
        for j in 0..p.dim {
            let mut acc = dd::ZERO;
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                let i = p.row_idx[k];
                let v = self.values[k];
                acc = dd::add(acc, dd::scale(v, x[i]));
                if i != j {
                    y[i] = dd::add(y[i], dd::scale(v, x[j]));
                }
            }
            y[j] = dd::add(y[j], acc);
        }
        y
    }

    /// `y = self * x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(y.len(), self.pattern.dim);
        for (out, v) in y.iter_mut().zip(self.apply_dd(x)) {
            *out = dd::to_f64(v);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matvec(x, &mut y);
        y
    }

    /// `xᵀ self y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.apply_dd(y);
        let xs: Vec<Dd> = x.iter().map(|&v| dd::from(v)).collect();
        dd::to_f64(dd::dot_dd(&xs, &ay))
    }

    /// `xᵀ self x` in double-double.
    pub fn quadratic_form_dd(&self, x: &[f64]) -> Dd {
        let p = &*self.pattern;
        assert_eq!(x.len(), p.dim);
        let mut acc = dd::ZERO;
        for j in 0..p.dim {
            let mut col = dd::ZERO;
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                let i = p.row_idx[k];
                let v = if i == j { self.values[k] } else { dd::scale(self.values[k], 2.0) };
                col = dd::add(col, dd::scale(v, x[i]));
            }
            acc = dd::add(acc, dd::scale(col, x[j]));
        }
        acc
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dd::to_f64(self.quadratic_form_dd(x))
    }

    /// Sparse Cholesky factor of this matrix, or `None` if it is not
    /// numerically positive definite.
    pub fn cholesky(&self) -> Result<Option<Cholesky>> {
        let symbolic = self.pattern.symbolic_llt()?;
        let mat = SparseColMatRef::new(self.pattern.symbolic_ref(), &self.values);
        let mut factor = vec![dd::ZERO; symbolic.len_val()];
        let mut buf = MemBuffer::new(
            symbolic.factorize_numeric_llt_scratch::<Dd>(Par::Seq, Spec::default()),
        );
        let ok = symbolic
            .factorize_numeric_llt(
                &mut factor,
                mat,
                Side::Upper,
                Default::default(),
                Par::Seq,
                MemStack::new(&mut buf),
                Spec::default(),
            )
            .is_ok();
        Ok(ok.then_some(Cholesky { symbolic, factor }))
    }

    /// Upper-triangle entries as `row col value` lines, value rounded to
    /// `f64`.
    pub fn dump(&self) -> String {
        let p = &*self.pattern;
        let mut out = String::new();
        for j in 0..p.dim {
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                let v = dd::to_f64(self.values[k]);
                let _ = writeln!(out, "{} {} {v:.17e}", p.row_idx[k], j);
            }
        }
        out
    }
}

pub struct Cholesky {
    symbolic: Arc<SymbolicCholesky<usize>>,
    factor: Vec<Dd>,
}

impl Cholesky {
    /// Solves in double-double, overwriting `rhs`.
    pub fn solve_dd(&self, rhs: &mut [Dd]) {
        let n = rhs.len();
        let mat = MatMut::from_column_major_slice_mut(rhs, n, 1);
        let llt = LltRef::new(&self.symbolic, &self.factor);
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<Dd>(1, Par::Seq));
        llt.solve_in_place_with_conj(Conj::No, mat, Par::Seq, MemStack::new(&mut buf));
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let mut b: Vec<Dd> = rhs.iter().map(|&v| dd::from(v)).collect();
        self.solve_dd(&mut b);
        for (out, v) in rhs.iter_mut().zip(b) {
            *out = dd::to_f64(v);
        }
    }
}
