//! Lowering of ground programs to linear systems and soft-logic losses.

pub mod capability;
pub mod linear;
pub mod lp;
pub mod soft;

use thiserror::Error;

pub use capability::{capability_matrix, categorize, program_categories, support, Category, Method, Support};
pub use linear::{linearize, Cmp, LinearSystem, LpVar, LpVarKind, Row};
pub use lp::{read_lp, write_lp};
pub use soft::{to_soft_violation, to_soft_violation_with_cap, SoftExpr, SoftNode, TNorm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("counting expansion exceeds the cap of {cap} nodes")]
    ExpansionCap { cap: usize },
    #[error("LP text line {line}: {message}")]
    LpParse { line: usize, message: String },
}
