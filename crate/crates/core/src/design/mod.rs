//! Design ingestion and reduction to canonical coordinates.
//!
//! A raw `n × p` design `X` with rank `d` is replaced by a `d × p` matrix
//! `X̃ = Qᵀ X`, where `Q` is an orthonormal basis of the column space of `X`.
//! Everything downstream (adjusted predictors, t-ratios, the constant) depends
//! on `X` only through its Gram matrix, so `X̃` carries all the information at
//! a fraction of the size.

mod model;
mod stream;
mod universe;

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use model::{ModelId, MAX_COLUMNS};
pub use stream::{
    adjusted_predictor, direction_stream, vif, DedupIndex, DedupMode, Direction, DirectionRef,
    DirectionSet, DirectionStream, StreamRoot, StreamStats, DEFAULT_DEDUP_TOLERANCE,
};
pub use universe::{enumerate_models, Constraint, ModelUniverse};

use crate::error::{PosiError, Result};

/// Relative singular-value cutoff used for ranks and full-rank filtering.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

/// Raw predictor matrix with its numerical rank.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    column_names: Vec<String>,
    rank_tolerance: f64,
    rank: usize,
}

impl DesignMatrix {
    pub fn new(
        values: DMatrix<f64>,
        column_names: Option<Vec<String>>,
        rank_tolerance: f64,
    ) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(PosiError::EmptyTable);
        }
        if !(rank_tolerance >= 0.0) {
            return Err(PosiError::InvalidArgument(format!(
                "rank tolerance {rank_tolerance} must be nonnegative"
            )));
        }
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() {
                let (row, col) = (idx % values.nrows(), idx / values.nrows());
                return Err(PosiError::NonFinite { row: row + 1, col: col + 1 });
            }
        }
        let p = values.ncols();
        let column_names = match column_names {
            Some(names) if names.len() == p => names,
            Some(names) => {
                return Err(PosiError::DimensionMismatch { expected: p, found: names.len() })
            }
            None => (1..=p).map(|j| format!("x{j}")).collect(),
        };
        let rank = numerical_rank(&values, rank_tolerance);
        if rank == 0 {
            return Err(PosiError::ZeroRank);
        }
        Ok(Self { values, column_names, rank_tolerance, rank })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if n == 0 || p == 0 {
            return Err(PosiError::EmptyTable);
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(PosiError::RaggedRow { row: i + 1, expected: p, found: r.len() });
            }
        }
        let values = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(values, None, DEFAULT_RANK_TOLERANCE)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
}

/// Number of singular values above `tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub header: bool,
    pub intercept: bool,
    pub rank_tolerance: Option<f64>,
}

/// Reads a comma- or whitespace-separated numeric table.
pub fn load_design<R: BufRead>(source: R, options: LoadOptions) -> Result<DesignMatrix> {
    let mut names: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields = split_fields(trimmed);
        if options.header && names.is_none() {
            width = Some(fields.len());
            names = Some(fields.iter().map(|s| s.trim_matches('"').to_string()).collect());
            continue;
        }
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(PosiError::RaggedRow { row: line_no, expected, found: fields.len() });
        }
        let mut row = Vec::with_capacity(fields.len() + 1);
        if options.intercept {
            row.push(1.0);
        }
        for (c, cell) in fields.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| PosiError::NonNumeric {
                row: line_no,
                col: c + 1,
                cell: cell.to_string(),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PosiError::EmptyTable);
    }
    let p = rows[0].len();
    let values = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let names = names.map(|mut ns| {
        if options.intercept {
            ns.insert(0, "(intercept)".to_string());
        }
        ns
    });
    let names = match (names, options.intercept) {
        (Some(ns), _) => Some(ns),
        (None, true) => Some(
            std::iter::once("(intercept)".to_string())
                .chain((1..p).map(|j| format!("x{j}")))
                .collect(),
        ),
        (None, false) => None,
    };
    DesignMatrix::new(values, names, options.rank_tolerance.unwrap_or(DEFAULT_RANK_TOLERANCE))
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Writes the design as CSV with a header line of column names.
pub fn write_design<W: Write>(design: &DesignMatrix, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", design.column_names.join(","))?;
    for i in 0..design.rows() {
        let row: Vec<String> = (0..design.cols())
            .map(|j| format!("{:?}", design.values[(i, j)]))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalForm {
    UpperTriangular,
    Symmetric,
    Unspecified,
}

/// `d × p` design in canonical coordinates together with the basis `Q`.
#[derive(Clone, Debug)]
pub struct CanonicalDesign {
    values: DMatrix<f64>,
    basis: DMatrix<f64>,
    form: CanonicalForm,
    rank_tolerance: f64,
    /// Order in which columns entered the triangular factor when `d < p`.
    pivot: Option<Vec<usize>>,
    column_names: Vec<String>,
}

impl CanonicalDesign {
    /// Wraps a `d × p` matrix that is already in canonical coordinates
    /// (its rows must be linearly independent). The basis is `I_d`.
    pub fn from_values(values: DMatrix<f64>, form: CanonicalForm, rank_tolerance: f64) -> Result<Self> {
        let d = values.nrows();
        if d == 0 || values.ncols() == 0 {
            return Err(PosiError::EmptyTable);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PosiError::InvalidArgument("non-finite canonical entry".into()));
        }
        let rank = numerical_rank(&values, rank_tolerance);
        if rank != d {
            return Err(PosiError::InvalidArgument(format!(
                "canonical matrix has {d} rows but rank {rank}"
            )));
        }
        let p = values.ncols();
        Ok(Self {
            values,
            basis: DMatrix::identity(d, d),
            form,
            rank_tolerance,
            pivot: None,
            column_names: (1..=p).map(|j| format!("x{j}")).collect(),
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn form(&self) -> CanonicalForm {
        self.form
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    pub fn pivot(&self) -> Option<&[usize]> {
        self.pivot.as_deref()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// `d`.
    pub fn rank(&self) -> usize {
        self.values.nrows()
    }

    /// `p`.
    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Number of rows of the original design.
    pub fn original_rows(&self) -> usize {
        self.basis.nrows()
    }

    pub fn is_classical(&self) -> bool {
        self.rank() == self.cols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let d = self.rank();
        &self.values.as_slice()[j * d..(j + 1) * d]
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.values.transpose() * &self.values
    }

    /// `ỹ = Qᵀ y` for a response given in original coordinates.
    pub fn reduce_response(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.original_rows() {
            return Err(PosiError::DimensionMismatch { expected: self.original_rows(), found: y.len() });
        }
        let y = DVector::from_column_slice(y);
        Ok((self.basis.transpose() * y).as_slice().to_vec())
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.cols() {
            self.column_names = names;
        }
        self
    }
}

/// Reduces `X` to canonical coordinates in the requested form.
///
/// The upper-triangular form uses Householder QR when `d = p`. When `d < p`
/// an orthonormal basis of the column space is taken from the SVD and the
/// reduced matrix is triangularized with greedy column pivoting; the pivot
/// order is recorded. The symmetric form (`d = p` only) is `V D Vᵀ` from
/// `X = U D Vᵀ`, with `Q = U Vᵀ`.
pub fn canonicalize(x: &DesignMatrix, form: CanonicalForm) -> Result<CanonicalDesign> {
    let (n, p, d) = (x.rows(), x.cols(), x.rank());
    let (values, basis, pivot) = match form {
        CanonicalForm::Symmetric => {
            if d < p {
                return Err(PosiError::SymmetricNeedsFullRank { rank: d, cols: p });
            }
            let svd = x.values.clone().svd(true, true);
            let u = svd.u.expect("requested U");
            let vt = svd.v_t.expect("requested Vt");
            let dmat = DMatrix::from_diagonal(&svd.singular_values);
            let v = vt.transpose();
            let sym = &v * dmat * &vt;
            let sym = (&sym + sym.transpose()) * 0.5;
            (sym, u * vt, None)
        }
        CanonicalForm::UpperTriangular | CanonicalForm::Unspecified if d == p => {
            let qr = x.values.clone().qr();
            let mut q = qr.q();
            let mut r = qr.r();
            for i in 0..p {
                if r[(i, i)] < 0.0 {
                    r.row_mut(i).neg_mut();
                    q.column_mut(i).neg_mut();
                }
            }
            (r, q, None)
        }
        _ => {
            let svd = x.values.clone().svd(true, false);
            let u = svd.u.expect("requested U");
            let sv = &svd.singular_values;
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            let keep: Vec<usize> =
                (0..sv.len()).filter(|&i| sv[i] > x.rank_tolerance * smax).collect();
            let ud = DMatrix::from_fn(n, keep.len(), |i, k| u[(i, keep[k])]);
            let reduced = ud.transpose() * &x.values;
            let (q2, order) = pivoted_orthonormal_basis(&reduced);
            let mut tri = q2.transpose() * &reduced;
            for (k, &col) in order.iter().enumerate() {
                for i in k + 1..tri.nrows() {
                    tri[(i, col)] = 0.0;
                }
            }
            (tri, ud * q2, Some(order))
        }
    };
    Ok(CanonicalDesign {
        values,
        basis,
        form: if form == CanonicalForm::Unspecified { CanonicalForm::UpperTriangular } else { form },
        rank_tolerance: x.rank_tolerance,
        pivot,
        column_names: x.column_names.clone(),
    })
}

/// Greedy pivoted Gram–Schmidt on the columns of a full-row-rank `d × p`
/// matrix. Returns an orthogonal `d × d` matrix and the pivot column order.
fn pivoted_orthonormal_basis(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let (d, p) = a.shape();
    let mut residual = a.clone();
    let mut q = DMatrix::zeros(d, d);
    let mut order = Vec::with_capacity(d);
    let mut used = vec![false; p];
    for k in 0..d {
        let best = (0..p)
            .filter(|&j| !used[j])
            .max_by(|&i, &j| residual.column(i).norm().total_cmp(&residual.column(j).norm()))
            .expect("d <= p");
        used[best] = true;
        order.push(best);
        let mut v = residual.column(best).clone_owned();
        for _ in 0..2 {
            for i in 0..k {
                let qi = q.column(i);
                let c = qi.dot(&v);
                v -= qi * c;
            }
        }
        v /= v.norm();
        q.set_column(k, &v);
        for j in (0..p).filter(|&j| !used[j]) {
            let c = v.dot(&residual.column(j));
            let mut col = residual.column_mut(j);
            col -= &v * c;
        }
    }
    order.extend((0..p).filter(|&j| !used[j]));
    (q, order)
}
