// SPDX-License-Identifier: Apache-2.0

//! Simulation and verification toolkit for binary adversarial channels in
//! which the adversary sees the codeword only through a size-bounded Boolean
//! circuit and flips at most `floor(p n)` bits.

pub mod adversary;
pub mod analysis;
pub mod bitword;
pub mod bounds;
pub mod circuit;
pub mod cli;
pub mod code;
pub mod error;
pub mod experiment;
pub mod verify;

pub use error::{Error, Result};
