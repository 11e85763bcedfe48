//! Exact arithmetic layer: dyadic rationals, outward-rounded intervals and
//! computable reals with precision oracles.

pub mod creal;
pub mod dyadic;
pub mod interval;

pub use creal::{cpoint_dist, dist_encl, square, CPoint, CReal, PointKey};
pub use dyadic::{parse_ratio, ratio_as_dyadic, ratio_to_dyadic, sqrtn_upper, Dyadic, Round};
pub use interval::{cos_sin_dyadic, exp_dyadic, interval_eval, DyInterval, Expr};
