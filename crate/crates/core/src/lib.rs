//! Security analysis of measurement-device-independent QKD with
//! discrete-phase-randomized weak coherent sources.
//!
//! The crate covers the whole numerical chain: photon-class statistics of an
//! `N`-phase source ([`fock`]), the channel simulation that produces observed
//! gains and error rates ([`channel`]), the two-stage linear-programming
//! decoy estimation ([`estimator`], backed by the small simplex in [`lp`]),
//! the key rate with basis-dependence corrections ([`key_rate`]), parameter
//! sweeps ([`sweep`]) and an unambiguous-state-discrimination attack on
//! sources without phase randomization ([`attack`]).

pub mod attack;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod fock;
pub mod key_rate;
pub mod lp;
pub mod sweep;
pub mod validation;

pub use error::{Error, Result};
