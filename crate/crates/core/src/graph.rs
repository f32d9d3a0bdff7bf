//! Item-item Laplacians built from the binary rating matrix.
//!
//! Two constructions are provided. The hypergraph Laplacian treats each user
//! as a hyperedge over the items they touched:
//!
//! ```text
//! L = I - Dv^{-1/2} R De^{-1} R^T Dv^{-1/2}
//! ```
//!
//! The covariance Laplacian uses row covariances as edge weights,
//! `L = I - D^{-1/2} A D^{-1/2}` with `A[i][j] = max(Cov(R_i, R_j), 0)` off the
//! diagonal and a zero diagonal.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::RatingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianKind {
    Hypergraph,
    Covariance,
}

impl fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LaplacianKind::Hypergraph => "hypergraph",
            LaplacianKind::Covariance => "covariance",
        })
    }
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hypergraph" => Ok(LaplacianKind::Hypergraph),
            "covariance" => Ok(LaplacianKind::Covariance),
            other => Err(Error::InvalidArgument(format!("unknown graph kind {other:?}"))),
        }
    }
}

/// A symmetric positive-semidefinite normalized Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    kind: LaplacianKind,
    matrix: DMatrix<f64>,
}

impl Laplacian {
    /// Wraps an arbitrary symmetric matrix, e.g. for synthetic experiments.
    pub fn from_matrix(kind: LaplacianKind, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dim(matrix.nrows(), matrix.ncols()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "Laplacian is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self { kind, matrix })
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The similarity kernel `I - L`.
    pub fn similarity(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - &self.matrix
    }

    /// Conjugates by a row permutation: entry `(i, j)` of the result is entry
    /// `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let matrix = DMatrix::from_fn(n, n, |i, j| self.matrix[(perm[i], perm[j])]);
        Self {
            kind: self.kind,
            matrix,
        }
    }

    /// SHA-256 over the dimension and the little-endian matrix entries.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n() as u64).to_le_bytes());
        for v in self.matrix.iter() {
            hasher.update(v.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Writes the lower triangle in Matrix Market coordinate format.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.n();
        let mut entries = Vec::new();
        for j in 0..n {
            for i in j..n {
                let v = self.matrix[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(out, "% {} Laplacian", self.kind)?;
        writeln!(out, "{n} {n} {}", entries.len())?;
        for (i, j, v) in entries {
            writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

fn inv_sqrt_or_zero(d: f64) -> f64 {
    if d > 0.0 {
        1.0 / d.sqrt()
    } else {
        0.0
    }
}

/// The implicit hypergraph similarity `S = B B^T`, `B = Dv^{-1/2} R De^{-1/2}`,
/// evaluated column by column from the sparse rating matrix.
#[derive(Debug, Clone)]
pub struct HypergraphOperator<'a> {
    ratings: &'a RatingMatrix,
    dv_inv_sqrt: Vec<f64>,
    de_inv: Vec<f64>,
}

impl<'a> HypergraphOperator<'a> {
    pub fn new(ratings: &'a RatingMatrix) -> Result<Self> {
        let dv = ratings.row_degrees();
        let de = ratings.col_degrees();
        if let Some(i) = dv.iter().position(|&d| d == 0) {
            return Err(Error::DegenerateDegree {
                what: "item row",
                index: i,
            });
        }
        if let Some(j) = de.iter().position(|&d| d == 0) {
            return Err(Error::DegenerateDegree {
                what: "user column",
                index: j,
            });
        }
        Ok(Self {
            ratings,
            dv_inv_sqrt: dv.iter().map(|&d| inv_sqrt_or_zero(d as f64)).collect(),
            de_inv: de.iter().map(|&d| 1.0 / d as f64).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.ratings.n()
    }

    /// Column `j` of `S`, accumulated into `out`.
    pub fn similarity_column_into(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &u in self.ratings.row(j) {
            let w = self.de_inv[u];
            for &i in self.ratings.col(u) {
                out[i] += w;
            }
        }
        let sj = self.dv_inv_sqrt[j];
        for (i, v) in out.iter_mut().enumerate() {
            *v *= self.dv_inv_sqrt[i] * sj;
        }
    }

    /// The `n x idx.len()` block of `S` with the given columns.
    pub fn similarity_columns(&self, idx: &[usize]) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, idx.len());
        let mut buf = vec![0.0; n];
        for (c, &j) in idx.iter().enumerate() {
            self.similarity_column_into(j, &mut buf);
            out.column_mut(c).copy_from_slice(&buf);
        }
        out
    }

    /// `Dv^{1/2} 1`, the exact null vector of the hypergraph Laplacian.
    pub fn null_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.ratings.row_degrees().iter().map(|&d| (d as f64).sqrt()),
        )
    }

    pub fn laplacian(&self) -> Laplacian {
        let n = self.n();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for u in 0..self.ratings.m() {
            let items = self.ratings.col(u);
            let w = self.de_inv[u];
            for &a in items {
                for &b in items {
                    s[(a, b)] += w;
                }
            }
        }
        let mut l = DMatrix::identity(n, n);
        for j in 0..n {
            for i in 0..n {
                l[(i, j)] -= s[(i, j)] * self.dv_inv_sqrt[i] * self.dv_inv_sqrt[j];
            }
        }
        symmetrize(&mut l);
        Laplacian {
            kind: LaplacianKind::Hypergraph,
            matrix: l,
        }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `I - Dv^{-1/2} R De^{-1} R^T Dv^{-1/2}`; fails on any zero-degree row or column.
pub fn hypergraph_laplacian(ratings: &RatingMatrix) -> Result<Laplacian> {
    Ok(HypergraphOperator::new(ratings)?.laplacian())
}

/// Population covariance of the item rows over the user columns.
fn row_covariance(ratings: &RatingMatrix) -> DMatrix<f64> {
    let n = ratings.n();
    let m = ratings.m() as f64;
    let mut co = DMatrix::<f64>::zeros(n, n);
    for u in 0..ratings.m() {
        let items = ratings.col(u);
        for &a in items {
            for &b in items {
                co[(a, b)] += 1.0;
            }
        }
    }
    let mean: Vec<f64> = ratings.row_degrees().iter().map(|&d| d as f64 / m).collect();
    DMatrix::from_fn(n, n, |i, j| co[(i, j)] / m - mean[i] * mean[j])
}

/// Covariance-graph Laplacian over the training-user columns.
///
/// Negative covariances are clipped to zero and the diagonal of the adjacency
/// is zero. A vertex left without positive-weight neighbours keeps an identity
/// row.
pub fn covariance_laplacian(ratings: &RatingMatrix) -> Result<Laplacian> {
    let n = ratings.n();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance graph needs at least 2 items, got {n}"
        )));
    }
    let cov = row_covariance(ratings);
    if let Some(i) = (0..n).find(|&i| cov[(i, i)] <= 0.0) {
        return Err(Error::DegenerateRow(i));
    }
    let adj = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { cov[(i, j)].max(0.0) });
    let scale: Vec<f64> = adj.column_sum().iter().map(|&d| inv_sqrt_or_zero(d)).collect();
    let mut l = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - scale[i] * adj[(i, j)] * scale[j]
    });
    symmetrize(&mut l);
    Ok(Laplacian {
        kind: LaplacianKind::Covariance,
        matrix: l,
    })
}

pub fn build_laplacian(ratings: &RatingMatrix, kind: LaplacianKind) -> Result<Laplacian> {
    match kind {
        LaplacianKind::Hypergraph => hypergraph_laplacian(ratings),
        LaplacianKind::Covariance => covariance_laplacian(ratings),
    }
}
