//! Configuration families, context evaluation, selection and diffing.

pub mod context;
pub mod diff;
pub mod graph;
pub mod oracle;
pub mod select;
