//! Entanglement fidelity of quantum channels under discrete-time feedback.
//!
//! A channel is given by Kraus operators `T_x`; measuring the environment
//! reveals `x` and the recovery `V_x^dag` from the polar decomposition
//! `T_x = V_x |T_x|` is applied. Repeating this over `n` channel uses gives
//! the Markovian fidelity `F_n` (each correction uses only its own outcome)
//! and the Bayesian fidelity `F'_n` (corrections use the whole outcome
//! history). The crate evaluates both, searches Kraus decompositions that
//! maximise them, and runs the qubit and qutrit sweeps in [`experiments`].
//!
//! Modules, bottom up:
//!
//! - [`linalg`]: polar decomposition, matrix absolute value, Haar unitaries.
//! - [`channels`]: Kraus sets, channel families, mixing unitaries, spec files.
//! - [`fidelity`]: `F_1`, `F_n`, `F'_n` and the definitional oracle.
//! - [`optimizer`]: searches over mixing unitaries.
//! - [`experiments`]: parameter sweeps producing CSV/JSON tables.

pub mod channels;
pub mod error;
pub mod experiments;
pub mod fidelity;
pub mod linalg;
pub mod optimizer;

pub use error::{Error, Result};
