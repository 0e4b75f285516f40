//! Core library for compiling linear feedback controller designs into
//! dual-rail chemical reaction networks (CRNs) and DNA strand-displacement
//! (DSD) programs, and for analyzing and simulating the resulting nonlinear
//! positive dynamics.
//!
//! The pipeline has three lowering stages and two numerical backends:
//!
//! ```text
//! BlockDiagram --compile--> Crn --translate--> DsdProgram
//!                            |                     |
//!                       analysis (eigen,      sim (stiff mass-action
//!                       equilibria, bounds)       integration)
//! ```
//!
//! - [`frontend`] defines the source language (typed linear blocks wired into
//!   a diagram) and the two built-in worked designs.
//! - [`crn`] is the IR: dual-rail species, catalysis/degradation/annihilation
//!   reactions, the mass-action vector field, and the structured matrices
//!   (partition blocks and rotated coordinates).
//! - [`analysis`] decides stability: eigenvalues, irreducibility, Perron
//!   pairs, equilibria, linearization, and boundedness certificates.
//! - [`sim`] integrates the stiff mass-action ODEs with reference profiles.
//! - [`dsd`] lowers a CRN to a fuel-mediated bimolecular reaction program and
//!   checks implementation fidelity against the source network.
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `libm`
//! feature in place of the default `std` feature for embedded use.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod crn;
pub mod dsd;
pub mod frontend;
pub mod linalg;
pub mod sim;
pub mod tol;

mod float;
