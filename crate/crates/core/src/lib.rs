//! Core algorithms for shrinking fully-connected neural networks with an
//! error-bounded lossy compressor.
//!
//! The crate is `no_std` (with `alloc`) so the numerical pieces can be reused
//! anywhere; file formats, lossless backends and the command-line front end
//! live in the companion `deepsz` crate.
//!
//! Pipeline, in order:
//!
//! 1. [`pruner`]: magnitude pruning and the value/gap dual-array sparse form.
//! 2. [`assessor`]: per-layer error-bound range discovery.
//! 3. [`planner`]: knapsack selection of one bound per layer.
//! 4. [`codec`]: the lossy compressor used for every data array.
//!
//! [`netmodel`] provides the small MLP used as the accuracy oracle.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod assessor;
pub mod codec;
pub mod lossless;
pub mod netmodel;
pub mod planner;
pub mod pruner;
