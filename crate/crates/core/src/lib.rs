//! Type-II zeroing control barrier functions with a blended safety filter.
//!
//! A barrier `h` only needs to certify the safety condition on the annulus
//! `-b <= h <= a`. Inside it the filter blends a safety input `u_s` with any
//! nominal input through a smooth weight, and outside every annulus the
//! nominal input passes through untouched.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod barrier;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod input_box;
pub mod plants;
pub mod qp;
pub mod sim;

pub use barrier::{
    blend_multi, blend_single, check_type_ii, kappa, phi, phi_with, smoothstep, type_ii_residual, AlphaFn, Barrier,
    BarrierSpec, BlendReport, KappaFn, Margins, TypeIIReport,
};
pub use dynamics::ControlAffine;
pub use error::{Error, Result};
pub use geometry::{annuli_disjoint, AnnulusShell, DisjointnessReport, Ellipsoid, Region};
pub use input_box::InputBox;
