//! Solver library for finite-horizon distributionally robust Markov games with
//! total-variation uncertainty sets.
//!
//! The main entry points are [`nvi::dr_nvi`] (robust equilibrium value
//! iteration), the gap metrics in [`eval`], the generative-model sampler in
//! [`sampler`], and the game families in [`instances`].

pub mod equilibrium;
pub mod error;
pub mod eval;
pub mod game;
pub mod instances;
pub mod io;
pub mod nvi;
pub mod sampler;
pub mod tv;

pub use error::{Result, RmgError};
pub use game::{JointActionSpace, JointPolicy, PolicyKind, QTensor, RobustMarkovGame, ValueTensor};
