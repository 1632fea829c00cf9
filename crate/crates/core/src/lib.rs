//! A small probabilistic language with user-labelled sample statements and
//! while loops, a static analysis that factorises the program density, a
//! factor slicer, and inference engines that exploit the factorisation.

pub mod lang;
pub mod semantics;
pub mod cfg;
pub mod analysis;
pub mod slicer;
pub mod inference;
pub mod corpus;
