//! Fence synthesis for weak memory models by reorder-bounded model checking.
//!
//! [`ir`] parses and unrolls programs, [`memmodel`] says which statement
//! pairs an architecture may reorder, [`checker`] searches for violating
//! executions, [`hitset`] and [`repair`] turn counterexamples into a set of
//! pairs to keep ordered, and [`bench`] generates programs and runs grids.

pub mod bench;
pub mod checker;
pub mod hitset;
pub mod ir;
pub mod memmodel;
pub mod repair;
