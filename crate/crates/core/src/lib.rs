//! A small framework-neutral deep-learning graph compiler.
//!
//! Graphs are built in the [`ir`] module, differentiated by [`autodiff`],
//! rewritten and analysed by [`passes`], and executed by the reference
//! interpreter in [`interp`]. [`serial`] holds the JSON interchange format.

pub mod autodiff;
pub mod interp;
pub mod ir;
pub mod layout;
pub mod passes;
pub mod serial;
