pub mod lang;
pub mod compile;
pub mod random;
pub mod autodiff;
pub mod infer;
pub mod train;
pub mod tasks;
pub mod eval;
