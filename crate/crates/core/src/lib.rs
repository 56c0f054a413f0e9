pub mod formula;
pub mod sat;
pub mod expansion;
pub mod calculus;
pub mod solver;
pub mod bench;
pub mod format;
