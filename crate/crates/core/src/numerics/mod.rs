//! Complex linear algebra and the dense SDP solver.

mod linalg;
mod sdp;

pub use linalg::{
    complex_matrix, fro_norm_sqr, inner, solve_hpd_system, top_singular, CMat, CVec,
    ComplexMatrix, TopSingular, C64,
};
pub use sdp::{
    solve_sdp, SdpIterate, SdpProblem, SdpSolution, SdpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
