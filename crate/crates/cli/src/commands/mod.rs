pub mod attack;
pub mod eval;
pub mod gen_data;
pub mod project;
pub mod sweep;
pub mod train;
