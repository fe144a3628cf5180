use std::fmt::{self, Write as _};

use crate::LpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Row {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Minimisation LP with dense constraint rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub(crate) objective: Vec<f64>,
    pub(crate) rows: Vec<Row>,
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
}

impl LinearProgram {
    /// `n` variables, zero objective, bounds `[0, +inf)`.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_objective(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    /// Adds a row from sparse `(variable, coefficient)` terms. Repeated
    /// variables accumulate.
    pub fn add_constraint(&mut self, terms: &[(usize, f64)], sense: Sense, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn add_dense_constraint(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[f64], Sense, f64) {
        let r = &self.rows[i];
        (&r.coeffs, r.sense, r.rhs)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match r.sense {
                Sense::Le => lhs - r.rhs,
                Sense::Ge => r.rhs - lhs,
                Sense::Eq => (lhs - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub(crate) fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match variable count".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeffs.len() != n {
                return Err(LpError::Malformed(format!(
                    "row {i} has {} coefficients, expected {n}",
                    r.coeffs.len()
                )));
            }
            if !r.rhs.is_finite() || r.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::Malformed(format!("row {i} has a non-finite entry")));
            }
        }
        if self
            .lower
            .iter()
            .chain(&self.upper)
            .any(|b| b.is_nan())
        {
            return Err(LpError::Malformed("NaN bound".into()));
        }
        Ok(())
    }
}

/// Human-readable dump:
///
/// ```text
/// minimize
///   <coef> x<j> + ...
/// subject to
///   r<i>: <coef> x<j> + ... (<=|=|>=) <rhs>
/// bounds
///   <lower> <= x<j> <= <upper>
/// end
/// ```
///
/// Zero coefficients are omitted; infinite bounds print as `-inf` / `inf`.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "minimize")?;
        writeln!(f, "  {}", linear_expr(&self.objective))?;
        writeln!(f, "subject to")?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                f,
                "  r{i}: {} {} {}",
                linear_expr(&r.coeffs),
                r.sense.symbol(),
                r.rhs
            )?;
        }
        writeln!(f, "bounds")?;
        for j in 0..self.num_vars() {
            writeln!(f, "  {} <= x{j} <= {}", self.lower[j], self.upper[j])?;
        }
        writeln!(f, "end")
    }
}

fn linear_expr(coeffs: &[f64]) -> String {
    let mut s = String::new();
    for (j, &a) in coeffs.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        if s.is_empty() {
            let _ = write!(s, "{a} x{j}");
        } else if a < 0.0 {
            let _ = write!(s, " - {} x{j}", -a);
        } else {
            let _ = write!(s, " + {a} x{j}");
        }
    }
    if s.is_empty() {
        s.push('0');
    }
    s
}
