//! Magic squares as periodic patterns.
//!
//! The crate is organised around the pipeline it simulates:
//!
//! * [`squares`] builds and validates magic squares: the 3×3 arithmetic
//!   pattern, weighted 3×3 systems, and the order-`n` construction from
//!   `n` arithmetic progressions via orthogonal diagonal Latin squares.
//! * [`markedset`] is the black-box input: a bitstring over `{1..B}` with
//!   oracle access, noise injection and an on-disk format.
//! * [`qsim`] simulates the quantum primitives exactly (state vectors,
//!   phase oracles, QFT, shot sampling, shifted oracles, Hadamard tests).
//! * [`detect`] runs QFT period detection with continued fractions and the
//!   shifted-oracle spacing recovery, both ending in classical verification.
//! * [`numbertheory`] holds the finite-bound search, factoring and
//!   sum-of-two-squares based absence certificates.
//! * [`protocol`] runs the two-party reconstruction protocol over a framed
//!   channel.

pub mod detect;
pub mod markedset;
pub mod numbertheory;
pub mod protocol;
pub mod qsim;
pub mod rng;
pub mod squares;

pub use markedset::{MarkedSet, MembershipOracle, NoiseKind, NoiseSpec};
pub use squares::{MagicSquare, Pattern3x3, ProgressionFamily};
