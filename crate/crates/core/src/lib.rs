//! Planar surface-code simulation on defective qubit arrays.
//!
//! The crate is `no_std` (with `alloc`). It covers the code geometry, defect
//! clustering, shell schedules around punctures, a phenomenological Pauli-frame
//! simulator, detector construction by fault enumeration, an exact blossom
//! matcher and the analytic bound calculators.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod bitset;
pub mod blossom;
pub mod bounds;
pub mod decoder;
pub mod defects;
pub mod detectors;
pub mod lattice;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod stats;

pub use lattice::{CellCoord, CodeLayout, Pauli};
