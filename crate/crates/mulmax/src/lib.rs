//! Exact desk-scale machinery for two-weight bounds of the multilinear
//! maximal operator: cube grids, discrete weight tuples, the four weight
//! constants, sparse families, and a replay of the four-collection
//! decomposition behind the restricted-testing characterization.

pub mod constants;
pub mod decomposition;
pub mod error;
pub mod extremal;
pub mod grid;
pub mod linear;
pub mod maximal;
pub mod report;
pub mod sparse;
pub mod weights;

pub use error::{Error, Result};

/// `a <= b` up to relative slack `tol`, tolerant of infinities.
pub fn le_rel(a: f64, b: f64, tol: f64) -> bool {
    if b.is_infinite() && b > 0.0 {
        return true;
    }
    if a.is_infinite() {
        return false;
    }
    a <= b + tol * a.abs().max(b.abs())
}

/// `a == b` up to relative slack `tol`.
pub fn eq_rel(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    if !a.is_finite() || !b.is_finite() {
        return false;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
