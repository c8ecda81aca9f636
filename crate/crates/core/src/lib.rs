//! Model-independent price bounds for options on one asset observed at
//! finitely many dates, computed as discrete martingale optimal transport
//! problems, together with the semi-static hedges read off the LP dual.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envelope;
pub mod error;
pub mod hedge;
pub mod io;
pub mod lp;
pub mod measures;
pub mod mot;
pub mod payoff;
pub mod pwl;
pub mod reference;

pub use error::{Error, Result};
