use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CompileError;
use crate::lang::{CountKind, GroundFormula, GroundProgram};

/// Default bound on nodes created by counting expansion.
pub const DEFAULT_EXPANSION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TNorm {
    #[default]
    Product,
    Godel,
    Lukasiewicz,
}

impl TNorm {
    pub const ALL: [TNorm; 3] = [TNorm::Product, TNorm::Godel, TNorm::Lukasiewicz];

    pub fn name(self) -> &'static str {
        match self {
            TNorm::Product => "product",
            TNorm::Godel => "godel",
            TNorm::Lukasiewicz => "lukasiewicz",
        }
    }

    pub fn parse(s: &str) -> Option<TNorm> {
        match s {
            "product" => Some(TNorm::Product),
            "godel" | "goedel" | "gödel" => Some(TNorm::Godel),
            "lukasiewicz" | "łukasiewicz" => Some(TNorm::Lukasiewicz),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum SoftNode {
    Const { value: f64 },
    Input { var: usize, label: usize },
    Product { args: Vec<usize> },
    Min { args: Vec<usize> },
    Max { args: Vec<usize> },
    /// clamp(Σ coef·arg + bias, 0, 1)
    ClampSum { args: Vec<(usize, f64)>, bias: f64 },
    /// 1 − arg
    Complement { arg: usize },
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Const(u64),
    Input(usize, usize),
    Product(Vec<usize>),
    Min(Vec<usize>),
    Max(Vec<usize>),
    ClampSum(Vec<(usize, u64)>, u64),
    Complement(usize),
}

impl Key {
    fn of(n: &SoftNode) -> Key {
        match n {
            SoftNode::Const { value } => Key::Const(value.to_bits()),
            SoftNode::Input { var, label } => Key::Input(*var, *label),
            SoftNode::Product { args } => Key::Product(args.clone()),
            SoftNode::Min { args } => Key::Min(args.clone()),
            SoftNode::Max { args } => Key::Max(args.clone()),
            SoftNode::ClampSum { args, bias } => Key::ClampSum(
                args.iter().map(|(a, c)| (*a, c.to_bits())).collect(),
                bias.to_bits(),
            ),
            SoftNode::Complement { arg } => Key::Complement(*arg),
        }
    }
}

/// Shared DAG of satisfaction degrees, one root per ground constraint.
/// Children always precede parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftExpr {
    pub tnorm: TNorm,
    pub nodes: Vec<SoftNode>,
    /// Satisfaction node of each ground constraint.
    pub roots: Vec<usize>,
    pub names: Vec<String>,
}

struct Builder {
    tnorm: TNorm,
    nodes: Vec<SoftNode>,
    memo: HashMap<Key, usize>,
    cap: usize,
}

impl Builder {
    fn add(&mut self, n: SoftNode) -> Result<usize, CompileError> {
        let key = Key::of(&n);
        if let Some(&i) = self.memo.get(&key) {
            return Ok(i);
        }
        if self.nodes.len() >= self.cap {
            return Err(CompileError::ExpansionCap { cap: self.cap });
        }
        let i = self.nodes.len();
        self.nodes.push(n);
        self.memo.insert(key, i);
        Ok(i)
    }

    fn constant(&mut self, v: f64) -> Result<usize, CompileError> {
        self.add(SoftNode::Const { value: v })
    }

    fn const_of(&self, i: usize) -> Option<f64> {
        match self.nodes[i] {
            SoftNode::Const { value } => Some(value),
            _ => None,
        }
    }

    fn not(&mut self, a: usize) -> Result<usize, CompileError> {
        match &self.nodes[a] {
            SoftNode::Complement { arg } => Ok(*arg),
            SoftNode::Const { value } => {
                let v = 1.0 - *value;
                self.constant(v)
            }
            _ => self.add(SoftNode::Complement { arg: a }),
        }
    }

    fn and(&mut self, mut xs: Vec<usize>) -> Result<usize, CompileError> {
        let mut kept = Vec::with_capacity(xs.len());
        for x in xs.drain(..) {
            match self.const_of(x) {
                Some(v) if v == 0.0 => return self.constant(0.0),
                Some(v) if v == 1.0 => {}
                _ => kept.push(x),
            }
        }
        match kept.len() {
            0 => return self.constant(1.0),
            1 => return Ok(kept[0]),
            _ => {}
        }
        let n = kept.len() as f64;
        match self.tnorm {
            TNorm::Product => self.add(SoftNode::Product { args: kept }),
            TNorm::Godel => self.add(SoftNode::Min { args: kept }),
            TNorm::Lukasiewicz => self.add(SoftNode::ClampSum {
                args: kept.into_iter().map(|a| (a, 1.0)).collect(),
                bias: -(n - 1.0),
            }),
        }
    }

    fn or(&mut self, mut xs: Vec<usize>) -> Result<usize, CompileError> {
        let mut kept = Vec::with_capacity(xs.len());
        for x in xs.drain(..) {
            match self.const_of(x) {
                Some(v) if v == 1.0 => return self.constant(1.0),
                Some(v) if v == 0.0 => {}
                _ => kept.push(x),
            }
        }
        match kept.len() {
            0 => return self.constant(0.0),
            1 => return Ok(kept[0]),
            _ => {}
        }
        match self.tnorm {
            TNorm::Product => {
                let neg = kept.into_iter().map(|a| self.not(a)).collect::<Result<Vec<_>, _>>()?;
                let p = self.add(SoftNode::Product { args: neg })?;
                self.not(p)
            }
            TNorm::Godel => self.add(SoftNode::Max { args: kept }),
            TNorm::Lukasiewicz => self.add(SoftNode::ClampSum {
                args: kept.into_iter().map(|a| (a, 1.0)).collect(),
                bias: 0.0,
            }),
        }
    }

    /// Boolean expansion of "at least k of xs": OR over k-subsets of ANDs.
    fn at_least_expanded(&mut self, xs: &[usize], k: usize) -> Result<usize, CompileError> {
        if k == 0 {
            return self.constant(1.0);
        }
        if k > xs.len() {
            return self.constant(0.0);
        }
        let n_subsets = binomial(xs.len(), k);
        if n_subsets.saturating_mul(k as u128) > self.cap.saturating_sub(self.nodes.len()) as u128 {
            return Err(CompileError::ExpansionCap { cap: self.cap });
        }
        let mut disjuncts = Vec::new();
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let conj = idx.iter().map(|&i| xs[i]).collect();
            disjuncts.push(self.and(conj)?);
            // next combination in lexicographic order
            let mut i = k;
            while i > 0 && idx[i - 1] == xs.len() - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
        self.or(disjuncts)
    }

    fn count(&mut self, kind: CountKind, k: usize, xs: Vec<usize>) -> Result<usize, CompileError> {
        let n = xs.len();
        if self.tnorm == TNorm::Lukasiewicz {
            let at_least = |b: &mut Builder, k: usize| -> Result<usize, CompileError> {
                if k == 0 {
                    return b.constant(1.0);
                }
                if k > n {
                    return b.constant(0.0);
                }
                b.add(SoftNode::ClampSum {
                    args: xs.iter().map(|&a| (a, 1.0)).collect(),
                    bias: 1.0 - k as f64,
                })
            };
            let at_most = |b: &mut Builder, k: usize| -> Result<usize, CompileError> {
                if k >= n {
                    return b.constant(1.0);
                }
                b.add(SoftNode::ClampSum {
                    args: xs.iter().map(|&a| (a, -1.0)).collect(),
                    bias: k as f64 + 1.0,
                })
            };
            return match kind {
                CountKind::AtLeast => at_least(self, k),
                CountKind::AtMost => at_most(self, k),
                CountKind::Exactly => {
                    let a = at_least(self, k)?;
                    let b = at_most(self, k)?;
                    self.and(vec![a, b])
                }
            };
        }
        match kind {
            CountKind::AtLeast => self.at_least_expanded(&xs, k),
            CountKind::AtMost => {
                let over = self.at_least_expanded(&xs, k + 1)?;
                self.not(over)
            }
            CountKind::Exactly => {
                let a = self.at_least_expanded(&xs, k)?;
                let over = self.at_least_expanded(&xs, k + 1)?;
                let b = self.not(over)?;
                self.and(vec![a, b])
            }
        }
    }

    fn sat(&mut self, f: &GroundFormula) -> Result<usize, CompileError> {
        match f {
            GroundFormula::Const(b) => self.constant(*b as u8 as f64),
            GroundFormula::Lit { var, label } => self.add(SoftNode::Input {
                var: *var,
                label: *label,
            }),
            GroundFormula::Not(x) => {
                let a = self.sat(x)?;
                self.not(a)
            }
            GroundFormula::And(xs) => {
                let args = xs.iter().map(|x| self.sat(x)).collect::<Result<Vec<_>, _>>()?;
                self.and(args)
            }
            GroundFormula::Or(xs) => {
                let args = xs.iter().map(|x| self.sat(x)).collect::<Result<Vec<_>, _>>()?;
                self.or(args)
            }
            GroundFormula::Implies(a, b) => {
                let a = self.sat(a)?;
                let na = self.not(a)?;
                let b = self.sat(b)?;
                self.or(vec![na, b])
            }
            GroundFormula::Iff(a, b) => {
                let a = self.sat(a)?;
                let b = self.sat(b)?;
                let na = self.not(a)?;
                let nb = self.not(b)?;
                let ab = self.or(vec![na, b])?;
                let ba = self.or(vec![a, nb])?;
                self.and(vec![ab, ba])
            }
            GroundFormula::Count { kind, k, elems } => {
                let xs = elems.iter().map(|x| self.sat(x)).collect::<Result<Vec<_>, _>>()?;
                self.count(*kind, *k, xs)
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    r
}

pub fn to_soft_violation(g: &GroundProgram, tnorm: TNorm) -> Result<SoftExpr, CompileError> {
    to_soft_violation_with_cap(g, tnorm, DEFAULT_EXPANSION_CAP)
}

pub fn to_soft_violation_with_cap(
    g: &GroundProgram,
    tnorm: TNorm,
    cap: usize,
) -> Result<SoftExpr, CompileError> {
    let formulas: Vec<&GroundFormula> = g.constraints.iter().map(|c| &c.formula).collect();
    let mut e = soft_formulas(&formulas, tnorm, cap)?;
    e.names = g.constraints.iter().map(|c| c.id()).collect();
    Ok(e)
}

/// Soft semantics for a list of standalone formulas.
pub fn soft_formulas(fs: &[&GroundFormula], tnorm: TNorm, cap: usize) -> Result<SoftExpr, CompileError> {
    let mut b = Builder {
        tnorm,
        nodes: Vec::new(),
        memo: HashMap::new(),
        cap,
    };
    let mut roots = Vec::with_capacity(fs.len());
    for f in fs {
        roots.push(b.sat(f)?);
    }
    Ok(SoftExpr {
        tnorm,
        nodes: b.nodes,
        names: (0..roots.len()).map(|i| format!("f{i}")).collect(),
        roots,
    })
}

impl SoftExpr {
    /// Value of every node.
    pub fn forward(&self, probs: &[Vec<f64>]) -> Vec<f64> {
        let mut v = vec![0.0; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            v[i] = match n {
                SoftNode::Const { value } => *value,
                SoftNode::Input { var, label } => probs[*var][*label],
                SoftNode::Product { args } => args.iter().map(|&a| v[a]).product(),
                SoftNode::Min { args } => args.iter().map(|&a| v[a]).fold(f64::INFINITY, f64::min),
                SoftNode::Max { args } => args.iter().map(|&a| v[a]).fold(f64::NEG_INFINITY, f64::max),
                SoftNode::ClampSum { args, bias } => {
                    (args.iter().map(|&(a, c)| c * v[a]).sum::<f64>() + bias).clamp(0.0, 1.0)
                }
                SoftNode::Complement { arg } => 1.0 - v[*arg],
            };
        }
        v
    }

    pub fn sat(&self, probs: &[Vec<f64>]) -> Vec<f64> {
        let v = self.forward(probs);
        self.roots.iter().map(|&r| v[r]).collect()
    }

    pub fn violations(&self, probs: &[Vec<f64>]) -> Vec<f64> {
        self.sat(probs).into_iter().map(|s| 1.0 - s).collect()
    }

    /// Violations and the gradient of `Σ_i weights[i]·violation_i` with
    /// respect to `probs`.
    pub fn violation_grad(&self, probs: &[Vec<f64>], weights: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let v = self.forward(probs);
        let mut adj = vec![0.0; self.nodes.len()];
        for (&r, &w) in self.roots.iter().zip(weights) {
            adj[r] -= w;
        }
        let mut grad: Vec<Vec<f64>> = probs.iter().map(|row| vec![0.0; row.len()]).collect();
        for i in (0..self.nodes.len()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match &self.nodes[i] {
                SoftNode::Const { .. } => {}
                SoftNode::Input { var, label } => grad[*var][*label] += g,
                SoftNode::Product { args } => {
                    // prefix/suffix products keep zeros exact
                    let n = args.len();
                    let mut suffix = vec![1.0; n + 1];
                    for k in (0..n).rev() {
                        suffix[k] = suffix[k + 1] * v[args[k]];
                    }
                    let mut prefix = 1.0;
                    for k in 0..n {
                        adj[args[k]] += g * prefix * suffix[k + 1];
                        prefix *= v[args[k]];
                    }
                }
                SoftNode::Min { args } | SoftNode::Max { args } => {
                    let target = v[i];
                    if let Some(&a) = args.iter().find(|&&a| v[a] == target) {
                        adj[a] += g;
                    }
                }
                SoftNode::ClampSum { args, bias } => {
                    let raw: f64 = args.iter().map(|&(a, c)| c * v[a]).sum::<f64>() + bias;
                    if raw > 0.0 && raw < 1.0 {
                        for &(a, c) in args {
                            adj[a] += g * c;
                        }
                    }
                }
                SoftNode::Complement { arg } => adj[*arg] -= g,
            }
        }
        let viol = self.roots.iter().map(|&r| 1.0 - v[r]).collect();
        (viol, grad)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("soft expression serializes")
    }
}
