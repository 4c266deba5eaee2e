//! Random walk in random environment: simulation and reconstruction.
//!
//! A walker moves on `Z` with site-dependent right-step probabilities drawn
//! i.i.d. from a law `mu` on `(0,1)`. The only data available to the
//! reconstruction routines is the stream of environment values seen at the
//! walker's positions. From that stream this crate
//!
//! * splits the observed support into atoms and non-atomic values
//!   ([`classifier`]),
//! * harvests fresh-site samples through non-atomic markers and rebuilds the
//!   environment itself in the recurrent case ([`marker`]),
//! * decodes the hidden walk on the labeled tree and scores straight
//!   crossings of four-vertex patterns ([`tree`], [`decoder`]),
//! * inverts the straight-crossing probability into atom weights
//!   ([`estimator`]).
//!
//! [`environment`] produces the streams (and, for testing, the hidden
//! objects), and [`oracle`] holds the independent exact and Monte-Carlo
//! checks.

pub mod classifier;
pub mod decoder;
pub mod environment;
pub mod error;
pub mod estimator;
pub mod marker;
pub mod measure;
pub mod oracle;
pub mod rng;
pub mod tree;

pub use classifier::{mode_select, scan_support, Mode, SupportReport};
pub use environment::{run_simulation, Environment, ObservationSeq, Simulation, Trajectory};
pub use error::{Error, Result};
pub use estimator::{reconstruct, ReconstructOptions, Reconstruction};
pub use measure::{MeasureSpec, SolomonVerdict};

/// Bitwise identity key for an observed value.
///
/// Values are compared bitwise everywhere: atoms are bit-identical by
/// construction and continuous draws never coincide in practice.
#[inline]
pub fn value_key(v: f64) -> u64 {
    v.to_bits()
}
