//! Core pipeline for synthesizing exploit transaction sequences against DeFi
//! protocols described in a small textual IR.
//!
//! The pipeline lifts a protocol into a token flow graph, enumerates attack
//! sketches by constrained reachability over that graph, compiles sketches
//! into arithmetic constraints for an external SMT solver, and validates
//! completed candidates by concrete interpretation against a ledger
//! simulator inside a CEGIS loop.
//!
//! This crate is `no_std`-compatible (requires `alloc`). Process spawning,
//! file IO, and the CLI live in the companion `foray` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod afl;
pub mod constraints;
pub mod goal;
pub mod ir;
pub mod num;
pub mod sim;
pub mod sketch;
pub mod smtlib;
pub mod solver;
pub mod synth;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod tfg;
