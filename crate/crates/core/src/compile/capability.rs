use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::{CountKind, GroundFormula, GroundProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    MutualExclusivity,
    Sequential,
    Linear,
    Logical,
    LogicalQuantifier,
    /// Constraints given as opaque predicate callbacks.
    Program,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::MutualExclusivity,
        Category::Sequential,
        Category::Linear,
        Category::Logical,
        Category::LogicalQuantifier,
        Category::Program,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::MutualExclusivity => "mutual-exclusivity",
            Category::Sequential => "sequential",
            Category::Linear => "linear",
            Category::Logical => "logical",
            Category::LogicalQuantifier => "logical+quantifier",
            Category::Program => "program",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Softmax,
    Pd,
    SampL,
    SemL,
    Ilp,
    AStar,
    Viterbi,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Softmax,
        Method::Pd,
        Method::SampL,
        Method::SemL,
        Method::Ilp,
        Method::AStar,
        Method::Viterbi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Softmax => "softmax",
            Method::Pd => "pd",
            Method::SampL => "sampl",
            Method::SemL => "seml",
            Method::Ilp => "ilp",
            Method::AStar => "astar",
            Method::Viterbi => "viterbi",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    Supported,
    /// Handled after this crate's grounding and linearization.
    SupportedAfterConversion,
    Unsupported,
}

impl Support {
    pub fn is_usable(self) -> bool {
        self != Support::Unsupported
    }

    pub fn name(self) -> &'static str {
        match self {
            Support::Supported => "supported",
            Support::SupportedAfterConversion => "supported-after-conversion",
            Support::Unsupported => "unsupported",
        }
    }
}

/// Support of one method for one constraint category.
pub fn support(method: Method, cat: Category) -> Support {
    use Category::*;
    use Support::*;
    match method {
        Method::Softmax => match cat {
            MutualExclusivity => Supported,
            _ => Unsupported,
        },
        Method::Pd | Method::Ilp => match cat {
            MutualExclusivity | Sequential | Linear => Supported,
            Logical | LogicalQuantifier => SupportedAfterConversion,
            Program => Unsupported,
        },
        Method::SampL | Method::SemL => Supported,
        // no decomposable heuristic beyond sequence structure
        Method::AStar | Method::Viterbi => match cat {
            MutualExclusivity | Sequential => Supported,
            _ => Unsupported,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRow {
    pub method: Method,
    pub per_category: Vec<(Category, Support)>,
    /// Worst support over the categories present.
    pub overall: Support,
}

/// Support table for `methods` over the given constraint categories.
pub fn capability_matrix(methods: &[Method], categories: &BTreeSet<Category>) -> Vec<CapabilityRow> {
    methods
        .iter()
        .map(|&m| {
            let per: Vec<(Category, Support)> = categories.iter().map(|&c| (c, support(m, c))).collect();
            let overall = per.iter().map(|p| p.1).max().unwrap_or(Support::Supported);
            CapabilityRow {
                method: m,
                per_category: per,
                overall,
            }
        })
        .collect()
}

fn literal_var(f: &GroundFormula) -> Option<usize> {
    match f {
        GroundFormula::Lit { var, .. } => Some(*var),
        GroundFormula::Not(x) => literal_var(x),
        _ => None,
    }
}

/// Counting over literals that is at most one-hot: over boolean variables,
/// or over labels of a single categorical variable.
fn is_exclusivity(g: &GroundProgram, f: &GroundFormula) -> bool {
    let GroundFormula::Count { kind, k, elems } = f else {
        return false;
    };
    if *k != 1 || *kind == CountKind::AtLeast {
        return false;
    }
    let mut vars = BTreeSet::new();
    for e in elems {
        match e {
            GroundFormula::Lit { var, .. } => {
                vars.insert(*var);
            }
            _ => return false,
        }
    }
    vars.len() == 1 || vars.iter().all(|&v| !g.vars[v].categorical)
}

/// All scope variables share a predicate and all key arguments except the
/// last, and the last arguments are adjacent positions.
fn is_sequential(g: &GroundProgram, scope: &[usize]) -> bool {
    if scope.len() != 2 {
        return false;
    }
    let (a, b) = (&g.vars[scope[0]], &g.vars[scope[1]]);
    if a.pred != b.pred || a.args.is_empty() || a.args.len() != b.args.len() {
        return false;
    }
    let n = a.args.len();
    a.args[..n - 1] == b.args[..n - 1] && (a.args[n - 1] - b.args[n - 1]).abs() == 1
}

fn is_linear(f: &GroundFormula) -> bool {
    match f {
        GroundFormula::Count { elems, .. } => elems.iter().all(|e| literal_var(e).is_some()),
        // a → b between literals is a single linear row
        GroundFormula::Implies(a, b) => literal_var(a).is_some() && literal_var(b).is_some(),
        _ => false,
    }
}

/// Category of each ground constraint. `quantified` lists templates whose
/// source formula has quantifiers below its leading `forall` chain.
pub fn categorize(g: &GroundProgram, quantified: &BTreeSet<String>) -> Vec<Category> {
    g.constraints
        .iter()
        .map(|c| {
            // a unary constraint only restricts one variable's label set
            if c.scope.len() <= 1 || is_exclusivity(g, &c.formula) {
                Category::MutualExclusivity
            } else if is_sequential(g, &c.scope) {
                Category::Sequential
            } else if is_linear(&c.formula) {
                Category::Linear
            } else if quantified.contains(&c.template) {
                Category::LogicalQuantifier
            } else {
                Category::Logical
            }
        })
        .collect()
}

/// Templates of `p` with inner quantifiers or comprehensions.
pub fn quantified_templates(p: &crate::lang::ConstraintProgram) -> BTreeSet<String> {
    p.constraints
        .iter()
        .filter(|c| c.formula.has_inner_quantifier())
        .map(|c| c.name.clone())
        .collect()
}

/// Distinct categories of a grounded program.
pub fn program_categories(p: &crate::lang::ConstraintProgram, g: &GroundProgram) -> BTreeSet<Category> {
    categorize(g, &quantified_templates(p)).into_iter().collect()
}
