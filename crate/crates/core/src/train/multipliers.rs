use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lang::GroundConstraint;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierMode {
    /// One λ per constraint template.
    #[default]
    PerTemplate,
    /// One λ per ground constraint, keyed by template and bindings.
    PerGround,
}

/// Nonnegative Lagrange multipliers, created at 0 on first use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub mode: MultiplierMode,
    pub eta: f64,
    pub values: BTreeMap<String, f64>,
}

impl Multipliers {
    pub fn new(mode: MultiplierMode, eta: f64) -> Multipliers {
        Multipliers {
            mode,
            eta,
            values: BTreeMap::new(),
        }
    }

    pub fn key(&self, c: &GroundConstraint) -> String {
        self.key_with(c, None)
    }

    /// Like [`Multipliers::key`], with `id` naming the ground constraint
    /// stably across batches.
    pub fn key_with(&self, c: &GroundConstraint, id: Option<&str>) -> String {
        match (self.mode, id) {
            (MultiplierMode::PerTemplate, _) => c.template.clone(),
            (MultiplierMode::PerGround, Some(id)) => id.to_string(),
            (MultiplierMode::PerGround, None) => {
                let mut k = c.template.clone();
                for (n, v) in &c.bindings {
                    k.push_str(&format!(" {n}={v}"));
                }
                if c.bindings.is_empty() {
                    k.push_str(&format!(" #{}", c.index));
                }
                k
            }
        }
    }

    pub fn get(&self, c: &GroundConstraint) -> f64 {
        self.get_with(c, None)
    }

    pub fn get_with(&self, c: &GroundConstraint, id: Option<&str>) -> f64 {
        self.values.get(&self.key_with(c, id)).copied().unwrap_or(0.0)
    }

    /// `λ ← max(0, λ + η·v)` where `v` is the mean violation of the ground
    /// constraints sharing a key.
    pub fn ascend(&mut self, constraints: &[GroundConstraint], violations: &[f64]) {
        self.ascend_with(constraints, None, violations)
    }

    /// [`Multipliers::ascend`] with optional stable ids, one per constraint.
    pub fn ascend_with(&mut self, constraints: &[GroundConstraint], ids: Option<&[String]>, violations: &[f64]) {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for (i, (c, &v)) in constraints.iter().zip(violations).enumerate() {
            let e = acc.entry(self.key_with(c, ids.map(|x| x[i].as_str()))).or_default();
            e.0 += v;
            e.1 += 1;
        }
        for (k, (s, n)) in acc {
            let lam = self.values.entry(k).or_insert(0.0);
            *lam = (*lam + self.eta * s / n as f64).max(0.0);
        }
    }
}
