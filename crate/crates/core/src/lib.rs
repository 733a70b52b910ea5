#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Numerical laboratory for the skew product `T(ω, x) = (4ω, T_{α(ω)}(x))`
//! on `S¹ × [0,1]`, whose fibre maps share the neutral fixed point `x = 0`.

pub mod circle;
pub mod config;
pub mod decorrelation;
pub mod error;
pub mod experiment;
pub mod interval;
pub mod limit;
pub mod markov;
pub mod measure;
pub mod numerics;
pub mod rng;
pub mod stable;

pub use circle::{alpha_eval, laplace_moment, omega_from_seed, OmegaState, ParamCurve};
pub use error::{Error, Result};
pub use interval::{orbit, skew_step, t_alpha, t_alpha_deriv, t_alpha_left_inverse, OrbitAccumulator, SkewPoint};
pub use markov::{
    distortion_check, expansion_check, induced_orbit, return_time, xn_sequence, yn_value, CheckReport,
    GeometryConstants, PartitionLabel, ReturnOptions, ReturnRecord, XnSequence,
};
