//! Hessian-manifold toolkit.

pub mod check;
pub mod dsl;
pub mod flow;
pub mod infogeo;
pub mod manifest;
pub mod report;
pub mod run;
pub mod soliton;
pub mod structure;
pub mod tensor;
