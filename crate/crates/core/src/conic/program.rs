use super::ConicError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Sparse linear row `Σ coefs · x  (= or ≤)  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `‖x[tail]‖₂ ≤ x[head]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocBlock {
    pub name: String,
    pub head: usize,
    pub tail: Vec<usize>,
}

/// Linear-objective program over the nonnegative orthant and second-order
/// cones:
///
/// ```text
/// minimize    c'x + d
/// subject to  E x  = f          (named equality rows)
///             G x ≤ h          (named inequality rows)
///             l ≤ x ≤ u
///             ‖x[tail_k]‖ ≤ x[head_k]
/// ```
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConicProgram {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    pub objective: Vec<f64>,
    pub offset: f64,
    pub eq_rows: Vec<Row>,
    pub ineq_rows: Vec<Row>,
    pub socs: Vec<SocBlock>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(skip)]
    eq_index: HashMap<String, usize>,
    #[serde(skip)]
    ineq_index: HashMap<String, usize>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    /// Adds a free variable with zero cost; names must be unique.
    pub fn add_var(&mut self, name: impl Into<String>) -> Result<usize, ConicError> {
        self.add_var_bounded(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_var_bounded(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<usize, ConicError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(ConicError::DuplicateName(name));
        }
        if lower > upper || lower.is_nan() || upper.is_nan() {
            return Err(ConicError::InvalidBounds { name, lower, upper });
        }
        let j = self.names.len();
        self.index.insert(name.clone(), j);
        self.names.push(name);
        self.objective.push(0.0);
        self.lower.push(lower);
        self.upper.push(upper);
        Ok(j)
    }

    pub fn var(&self, name: &str) -> Result<usize, ConicError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| ConicError::UnknownName(name.to_string()))
    }

    pub fn try_var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn var_name(&self, j: usize) -> &str {
        &self.names[j]
    }

    pub fn var_names(&self) -> &[String] {
        &self.names
    }

    pub fn set_cost(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) -> Result<(), ConicError> {
        if lower > upper {
            return Err(ConicError::InvalidBounds {
                name: self.names[j].clone(),
                lower,
                upper,
            });
        }
        self.lower[j] = lower;
        self.upper[j] = upper;
        Ok(())
    }

    fn check_coefs(&self, name: &str, coefs: &[(usize, f64)]) -> Result<(), ConicError> {
        for &(j, v) in coefs {
            if j >= self.num_vars() {
                return Err(ConicError::Dimension(format!("row {name} references column {j}")));
            }
            if !v.is_finite() {
                return Err(ConicError::Dimension(format!("row {name} has a non-finite coefficient")));
            }
        }
        Ok(())
    }

    pub fn add_eq(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, rhs: f64) -> Result<usize, ConicError> {
        let name = name.into();
        self.check_coefs(&name, &coefs)?;
        if self.eq_index.contains_key(&name) {
            return Err(ConicError::DuplicateName(name));
        }
        let k = self.eq_rows.len();
        self.eq_index.insert(name.clone(), k);
        self.eq_rows.push(Row { name, coefs, rhs });
        Ok(k)
    }

    pub fn add_le(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, rhs: f64) -> Result<usize, ConicError> {
        let name = name.into();
        self.check_coefs(&name, &coefs)?;
        if self.ineq_index.contains_key(&name) {
            return Err(ConicError::DuplicateName(name));
        }
        let k = self.ineq_rows.len();
        self.ineq_index.insert(name.clone(), k);
        self.ineq_rows.push(Row { name, coefs, rhs });
        Ok(k)
    }

    /// `Σ coefs · x ≥ rhs`, stored as `−Σ coefs · x ≤ −rhs`.
    pub fn add_ge(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, rhs: f64) -> Result<usize, ConicError> {
        let neg = coefs.into_iter().map(|(j, v)| (j, -v)).collect();
        self.add_le(name, neg, -rhs)
    }

    pub fn add_soc(&mut self, name: impl Into<String>, head: usize, tail: Vec<usize>) -> Result<usize, ConicError> {
        let name = name.into();
        if head >= self.num_vars() || tail.iter().any(|&j| j >= self.num_vars()) {
            return Err(ConicError::Dimension(format!("cone {name} references a missing column")));
        }
        if tail.is_empty() {
            return Err(ConicError::Dimension(format!("cone {name} has an empty tail")));
        }
        let mut all = tail.clone();
        all.push(head);
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConicError::Dimension(format!("cone {name} repeats a column")));
        }
        self.socs.push(SocBlock { name, head, tail });
        // the head of a second-order cone is nonnegative
        if self.lower[head] < 0.0 {
            self.lower[head] = 0.0;
        }
        Ok(self.socs.len() - 1)
    }

    pub fn eq_row(&self, name: &str) -> Result<usize, ConicError> {
        self.eq_index
            .get(name)
            .copied()
            .ok_or_else(|| ConicError::UnknownName(name.to_string()))
    }

    pub fn ineq_row(&self, name: &str) -> Result<usize, ConicError> {
        self.ineq_index
            .get(name)
            .copied()
            .ok_or_else(|| ConicError::UnknownName(name.to_string()))
    }

    /// Rebuilds the lookup tables after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.names.iter().enumerate().map(|(j, n)| (n.clone(), j)).collect();
        self.eq_index = self.eq_rows.iter().enumerate().map(|(k, r)| (r.name.clone(), k)).collect();
        self.ineq_index = self.ineq_rows.iter().enumerate().map(|(k, r)| (r.name.clone(), k)).collect();
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }

    /// Largest violation of rows, bounds and cones at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eval = |r: &Row| r.coefs.iter().map(|&(j, v)| v * x[j]).sum::<f64>();
        let mut worst = 0.0f64;
        for r in &self.eq_rows {
            worst = worst.max((eval(r) - r.rhs).abs());
        }
        for r in &self.ineq_rows {
            worst = worst.max(eval(r) - r.rhs);
        }
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for c in &self.socs {
            let n = c.tail.iter().map(|&j| x[j] * x[j]).sum::<f64>().sqrt();
            worst = worst.max(n - x[c.head]);
        }
        worst
    }

    /// Plain-text dump (objective, rows, bounds, cones) for diffing.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let term = |out: &mut String, coefs: &[(usize, f64)]| {
            for &(j, v) in coefs {
                let _ = write!(out, " {:+.12e} {}", v, self.names[j]);
            }
        };
        let _ = writeln!(out, "minimize");
        let obj: Vec<(usize, f64)> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        term(&mut out, &obj);
        let _ = writeln!(out, " {:+.12e}", self.offset);
        let _ = writeln!(out, "subject to");
        for r in &self.eq_rows {
            let _ = write!(out, " {}:", r.name);
            term(&mut out, &r.coefs);
            let _ = writeln!(out, " = {:.12e}", r.rhs);
        }
        for r in &self.ineq_rows {
            let _ = write!(out, " {}:", r.name);
            term(&mut out, &r.coefs);
            let _ = writeln!(out, " <= {:.12e}", r.rhs);
        }
        let _ = writeln!(out, "bounds");
        for j in 0..self.num_vars() {
            let _ = writeln!(out, " {:.12e} <= {} <= {:.12e}", self.lower[j], self.names[j], self.upper[j]);
        }
        let _ = writeln!(out, "cones");
        for c in &self.socs {
            let tail: Vec<&str> = c.tail.iter().map(|&j| self.names[j].as_str()).collect();
            let _ = writeln!(out, " {}: norm({}) <= {}", c.name, tail.join(", "), self.names[c.head]);
        }
        out
    }
}
