//! Synthesis of linear-optical circuits that herald arbitrary single-mode
//! Fock superpositions.
//!
//! A target state is produced by a tree of small circuits. Leaves are
//! few-mode Gaussian circuits (squeezers, displacements, an interferometer)
//! whose output mode is kept while every other mode is measured by a
//! photon-number-resolving detector. Interior nodes couple two states on a
//! beam splitter and keep the output only when the second port carries no
//! photons. Circuit parameters are found backwards: the root target is split
//! into two sub-targets, those are split again, and finally each leaf circuit
//! is fitted to its sub-target.
//!
//! Module map:
//!
//! - [`hafnian`]: exact loop hafnians, matrix reduction, cost model.
//! - [`gaussian`]: pure multimode Gaussian states and heralded Fock amplitudes.
//! - [`fock`]: truncated single-mode Fock arithmetic, beam-splitter coupling,
//!   Wigner grids and brute-force truncated-unitary oracles.
//! - [`gkp`]: approximate GKP codewords in the Fock basis.
//! - [`optimize`]: seeded multistart derivative-free maximization.
//! - [`backcast`]: layer planning, target splitting, leaf solving, forward
//!   verification.
//!
//! Conventions: ħ = 1, `x = (a + a†)/√2`, vacuum quadrature variance 1/2,
//! quadratures ordered `(x_1, p_1, x_2, p_2, ...)`.

pub mod backcast;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod gkp;
pub mod hafnian;
pub mod optimize;

pub use error::{Error, Result};
pub use num_complex::Complex64;
