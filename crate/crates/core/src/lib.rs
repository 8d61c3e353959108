//! Core of the gract toolkit: a calculus of resource-aware active objects.
//!
//! The crate is `no_std` (with `alloc`). Modules follow the pipeline:
//! [`grades`] → [`ast`] → [`parser`] → [`semantics`] → [`typing`] → [`explorer`].

#![no_std]

extern crate alloc;

pub mod ast;
pub mod explorer;
pub mod grades;
pub mod name;
pub mod parser;
pub mod semantics;
pub mod typing;

pub use name::Name;
