pub mod ablate;
pub mod bench;
pub mod eval;
pub mod rounds;
pub mod stylize;
pub mod train;
