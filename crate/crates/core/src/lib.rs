//! Inductive one-bit matrix completion as graph signal sampling.
//!
//! Items are vertices of a graph built from the training users' binary
//! interactions. A user's observed items form a signal on that graph; a
//! closed-form low-pass spectral filter reconstructs scores for every item,
//! and a Kalman-style prediction-correction step refines those scores online
//! as new interactions arrive.
//!
//! Module map:
//!
//! - [`data`]: interaction logs, user split, rating matrix, holdout
//! - [`graph`]: hypergraph and covariance Laplacians
//! - [`spectral`]: exact and Nyström eigenbases, graph Fourier transform
//! - [`kernels`]: regularizers `R(lambda)` and filters `H(lambda)`
//! - [`gsimc`]: closed-form reconstruction and ranking
//! - [`bgsimc`]: online Bayesian refinement
//! - [`metrics`]: HR/NDCG evaluation and spectrum profiles
//! - [`theory`]: numerical checks of the recovery bounds
//! - [`synthetic`]: planted-structure interaction logs for experiments
//! - [`io`]: basis cache files
//!
//! ```
//! use gsimc_core::graph::hypergraph_laplacian;
//! use gsimc_core::gsimc::recommend_topn;
//! use gsimc_core::spectral::exact_eigs;
//! use gsimc_core::{GsImcModel, KernelSpec, RatingMatrix};
//!
//! let ratings = RatingMatrix::from_dense(&[vec![1, 0], vec![1, 1], vec![0, 1]])?;
//! let laplacian = hypergraph_laplacian(&ratings)?;
//! let basis = exact_eigs(&laplacian, 3)?;
//! let model = GsImcModel::fit(basis, KernelSpec::tikhonov(1.0, 1.0)?)?;
//! let prediction = model.reconstruct_items(&[0])?;
//! assert_eq!(recommend_topn(&prediction, 2), vec![1, 2]);
//! # Ok::<(), gsimc_core::Error>(())
//! ```

pub mod bgsimc;
pub mod data;
pub mod error;
pub mod graph;
pub mod gsimc;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod spectral;
pub mod synthetic;
pub mod theory;

pub use bgsimc::{BgsUserState, NoiseConfig};
pub use data::{DatasetSplit, Interaction, RatingMatrix, SplitRatios};
pub use error::{Error, Result};
pub use graph::{Laplacian, LaplacianKind};
pub use gsimc::{GsImcModel, Prediction};
pub use kernels::{KernelFamily, KernelSpec};
pub use metrics::{MetricsReport, SpectrumProfile};
pub use spectral::{BasisMethod, NystromParams, SpectralBasis};
