//! The unified component model: business components wrapped in
//! elementary processors, interconnected by conduits.

pub mod conduit;
pub mod control;
pub mod descriptor;
pub mod frame;
pub mod pe;
