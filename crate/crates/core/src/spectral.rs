//! Leading Laplacian eigenpairs and the graph Fourier transform.
//!
//! The basis keeps the `k` smallest Laplacian eigenvalues (the low-frequency
//! band) in ascending order. Eigenvectors are column-orthonormal and each is
//! signed so that its largest-magnitude entry is positive.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HypergraphOperator, Laplacian};
use crate::kernels::EIGEN_TOLERANCE;

/// How a basis was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum BasisMethod {
    Exact,
    Nystrom {
        l: usize,
        p: usize,
        q: usize,
        seed: u64,
    },
}

/// `k` leading Laplacian eigenpairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    method: BasisMethod,
    laplacian_hash: Option<String>,
}

/// Flips the sign of each column so its largest-magnitude entry is positive.
/// Near-ties (within 1e-12) resolve to the lowest row index.
fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let peak = col.amax();
        if peak == 0.0 {
            continue;
        }
        let lead = col
            .iter()
            .position(|v| v.abs() >= peak - 1e-12)
            .expect("peak exists");
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
}

impl SpectralBasis {
    /// Assembles a basis from eigenpairs, sorting ascending and fixing signs.
    pub fn new(
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<f64>,
        method: BasisMethod,
    ) -> Result<Self> {
        if eigenvalues.len() != eigenvectors.ncols() {
            return Err(Error::dim(eigenvectors.ncols(), eigenvalues.len()));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite eigenvalue".into()));
        }
        let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eigenvalues[i]));
        let mut vectors = eigenvectors.select_columns(&order);
        fix_signs(&mut vectors);
        Ok(Self {
            eigenvalues: values,
            eigenvectors: vectors,
            method,
            laplacian_hash: None,
        })
    }

    pub fn with_laplacian_hash(mut self, hash: String) -> Self {
        self.laplacian_hash = Some(hash);
        self
    }

    pub fn n(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn k(&self) -> usize {
        self.eigenvectors.ncols()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn method(&self) -> BasisMethod {
        self.method
    }

    pub fn laplacian_hash(&self) -> Option<&str> {
        self.laplacian_hash.as_deref()
    }

    /// Keeps only the first `k` eigenpairs.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a rank-{} basis to {k}",
                self.k()
            )));
        }
        Ok(Self {
            eigenvalues: self.eigenvalues.rows(0, k).into_owned(),
            eigenvectors: self.eigenvectors.columns(0, k).into_owned(),
            method: self.method,
            laplacian_hash: self.laplacian_hash.clone(),
        })
    }

    /// The Paley-Wiener band: all eigenpairs with eigenvalue at most `omega`,
    /// up to [`EIGEN_TOLERANCE`] of roundoff.
    pub fn band(&self, omega: f64) -> Result<Self> {
        if omega < -EIGEN_TOLERANCE {
            return Err(Error::Bandlimit(omega));
        }
        let count = self
            .eigenvalues
            .iter()
            .take_while(|&&v| v <= omega + EIGEN_TOLERANCE)
            .count();
        if count == 0 {
            return Err(Error::Bandlimit(omega));
        }
        self.truncated(count)
    }

    /// Largest absolute entry of `U^T U - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.eigenvectors.tr_mul(&self.eigenvectors);
        (gram - DMatrix::identity(self.k(), self.k())).amax()
    }

    /// Analysis transform `U^T f`.
    pub fn gft(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        if f.len() != self.n() {
            return Err(Error::dim(self.n(), f.len()));
        }
        Ok(self.eigenvectors.tr_mul(f))
    }

    /// `U^T s` for the indicator vector of `items`; `O(|items| k)`.
    pub fn gft_indicator(&self, items: &[usize]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.k());
        for &i in items {
            if i >= self.n() {
                return Err(Error::dim(self.n(), i + 1));
            }
            out += self.eigenvectors.row(i).transpose();
        }
        Ok(out)
    }

    /// Synthesis transform `U c`.
    pub fn igft(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        if coeffs.len() != self.k() {
            return Err(Error::dim(self.k(), coeffs.len()));
        }
        Ok(&self.eigenvectors * coeffs)
    }

    /// Orthogonal projection onto the span of the basis.
    pub fn project(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.igft(&self.gft(f)?)
    }

    /// Whether `f` lies in the band `lambda <= omega` up to `tol` residual.
    pub fn is_bandlimited(&self, f: &DVector<f64>, omega: f64, tol: f64) -> Result<bool> {
        let band = match self.band(omega) {
            Ok(b) => b,
            Err(Error::Bandlimit(_)) => return Ok(f.norm() <= tol),
            Err(e) => return Err(e),
        };
        Ok((f - band.project(f)?).norm() <= tol)
    }
}

/// Residual of `L u = lambda u` for every column, as a vector of norms.
pub fn eigen_residuals(laplacian: &Laplacian, basis: &SpectralBasis) -> DVector<f64> {
    let lu = laplacian.matrix() * basis.eigenvectors();
    let ul = basis.eigenvectors() * DMatrix::from_diagonal(basis.eigenvalues());
    DVector::from_iterator(basis.k(), (lu - ul).column_iter().map(|c| c.norm()))
}

/// The `k` algebraically smallest eigenpairs from a dense symmetric solve.
pub fn exact_eigs(laplacian: &Laplacian, k: usize) -> Result<SpectralBasis> {
    let n = laplacian.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    let eig = SymmetricEigen::try_new(laplacian.matrix().clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(k);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    let basis = SpectralBasis::new(values, vectors, BasisMethod::Exact)?
        .with_laplacian_hash(laplacian.content_hash());
    let worst = eigen_residuals(laplacian, &basis).max();
    if worst > 1e-6 {
        return Err(Error::Numeric(format!(
            "eigenpair residual {worst:e} exceeds 1e-6"
        )));
    }
    Ok(basis)
}

/// Column access to a PSD similarity kernel `S = I - L`.
pub trait SimilarityColumns {
    fn dim(&self) -> usize;
    fn columns(&self, idx: &[usize]) -> DMatrix<f64>;
}

impl SimilarityColumns for Laplacian {
    fn dim(&self) -> usize {
        self.n()
    }

    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        let mut out = -self.matrix().select_columns(idx);
        for (c, &j) in idx.iter().enumerate() {
            out[(j, c)] += 1.0;
        }
        out
    }
}

impl SimilarityColumns for HypergraphOperator<'_> {
    fn dim(&self) -> usize {
        self.n()
    }

    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        self.similarity_columns(idx)
    }
}

/// Which small kernel the randomized eigensolver decomposes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NystromKernel {
    /// `W = A^{-1/2} C^T C A^{-1/2}`: the eigenpairs of the full Nyström
    /// approximation `C A^+ C^T`, with orthonormal extended eigenvectors.
    #[default]
    Orthogonalized,
    /// `W = A`: the intersection block alone. Exact only when `l = n`.
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NystromParams {
    /// Sampled columns.
    pub l: usize,
    /// Rank.
    pub k: usize,
    /// Oversampling.
    pub p: usize,
    /// Power iterations.
    pub q: usize,
    pub seed: u64,
    #[serde(default)]
    pub kernel: NystromKernel,
}

impl NystromParams {
    pub fn new(l: usize, k: usize, p: usize, q: usize, seed: u64) -> Self {
        Self {
            l,
            k,
            p,
            q,
            seed,
            kernel: NystromKernel::default(),
        }
    }
}

/// Relative eigenvalue floor for the pseudo-inverse square root of `A`.
const A_FLOOR: f64 = 1e-10;

fn orthonormal_range(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Approximate leading eigenpairs by column sampling and a randomized
/// range finder on the sampled kernel.
///
/// Runs on the similarity `S = I - L`; similarity eigenvalues `sigma` map back
/// to Laplacian eigenvalues `1 - sigma`.
pub fn nystrom_eigs<K: SimilarityColumns + ?Sized>(
    kernel: &K,
    params: NystromParams,
) -> Result<SpectralBasis> {
    let NystromParams { l, k, p, q, seed, .. } = params;
    let n = kernel.dim();
    let r = k + p;
    if k == 0 || r > l || l > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k, k + p <= l <= n; got k={k}, p={p}, l={l}, n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, l).into_vec();
    idx.sort_unstable();

    let c = kernel.columns(&idx);
    let a = {
        let a = c.select_rows(&idx);
        (&a + a.transpose()) * 0.5
    };

    let a_eig = SymmetricEigen::new(a.clone());
    let a_max = a_eig.eigenvalues.max();
    if a_max <= 0.0 {
        return Err(Error::RankDeficient(format!(
            "sampled block is zero; increase l (currently {l})"
        )));
    }
    let cutoff = A_FLOOR * a_max;
    let rank = a_eig.eigenvalues.iter().filter(|&&v| v > cutoff).count();
    if rank < k {
        return Err(Error::RankDeficient(format!(
            "sampled block has numerical rank {rank} < k = {k}; increase l (currently {l})"
        )));
    }
    let inv_sqrt = DVector::from_iterator(
        l,
        a_eig
            .eigenvalues
            .iter()
            .map(|&v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 }),
    );
    let a_inv_sqrt =
        &a_eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * a_eig.eigenvectors.transpose();

    let w = match params.kernel {
        NystromKernel::Orthogonalized => {
            let ct_c = c.tr_mul(&c);
            let w = &a_inv_sqrt * ct_c * &a_inv_sqrt;
            (&w + w.transpose()) * 0.5
        }
        NystromKernel::Intersection => a,
    };

    // Randomized range finder with re-orthonormalized power iterations.
    let omega = DMatrix::from_fn(l, r, |_, _| StandardNormal.sample(&mut rng));
    let mut basis = orthonormal_range(&w * &omega);
    for _ in 1..q.max(1) {
        basis = orthonormal_range(&w * basis);
    }
    // Rayleigh-Ritz on the captured range.
    let z = basis.tr_mul(&(&w * &basis));
    let z_sym = (&z + z.transpose()) * 0.5;
    let z_eig = SymmetricEigen::new(z_sym);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| z_eig.eigenvalues[y].total_cmp(&z_eig.eigenvalues[x]));
    order.truncate(k);
    let sigma: Vec<f64> = order.iter().map(|&i| z_eig.eigenvalues[i]).collect();
    if let Some(&smallest) = sigma.last() {
        if smallest <= cutoff {
            return Err(Error::RankDeficient(format!(
                "approximate similarity eigenvalue {smallest:e} is not positive; \
                 reduce k or increase l"
            )));
        }
    }
    let u_w = basis * z_eig.eigenvectors.select_columns(&order);
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(
        k,
        sigma.iter().map(|s| 1.0 / s.sqrt()),
    ));
    let vectors = c * a_inv_sqrt * u_w * scale;
    let lambdas = sigma.iter().map(|s| 1.0 - s).collect();
    SpectralBasis::new(
        lambdas,
        vectors,
        BasisMethod::Nystrom { l, p, q, seed },
    )
}
