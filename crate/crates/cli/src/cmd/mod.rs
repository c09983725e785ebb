pub mod cost;
pub mod decompose;
pub mod eval;
pub mod train;
