//! Vector and matrix primitives.

mod csr;
mod dense;
mod svd;
mod vector;

pub use csr::{CsrMatrix, LinearMap};
pub use dense::DenseMatrix;
pub use svd::{hard_threshold_mat, projector_im, psd_sqrt, svd, sym_eigen, SvdTriple, SymEigen};
pub use vector::{hard_threshold_vec, top_k_indices, weighted_sq_norm, DenseVector};

pub(crate) use vector::{dot, threshold_slice, weighted_sq_norm_unchecked};
