use crate::problem::{LinearProgram, Sense};
use crate::LpError;

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers: `d objective / d rhs_i`. Non-positive for `<=` rows
    /// and non-negative for `>=` rows at a minimum.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(Solution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<Solution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// `None` scales the cap with problem size.
    pub max_iterations: Option<usize>,
    pub pivot_tol: f64,
    pub optimality_tol: f64,
    pub feasibility_tol: f64,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            pivot_tol: 1e-9,
            optimality_tol: 1e-9,
            feasibility_tol: 1e-8,
            bland_after: 50,
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    solve_with(lp, &SimplexOptions::default())
}

/// How an original variable is expressed through non-negative columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = offset + y
    Shifted { col: usize, offset: f64 },
    /// x = offset - y
    Mirrored { col: usize, offset: f64 },
    /// x = y+ - y-
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    n: usize,
    t: Vec<f64>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    upper: Vec<f64>,
    d: Vec<f64>,
    barred: Vec<bool>,
    iterations: usize,
    max_iterations: usize,
    opts: SimplexOptions,
}

impl Tableau {
    fn col(&self, i: usize, k: usize) -> f64 {
        self.t[i * self.n + k]
    }

    fn reset_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.n..(i + 1) * self.n];
            for (d, a) in self.d.iter_mut().zip(row) {
                *d -= cb * a;
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn price(&self, bland: bool) -> Option<usize> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, f64)> = None;
        for k in 0..self.n {
            if self.barred[k] {
                continue;
            }
            let score = match self.state[k] {
                State::Basic => continue,
                State::Lower if self.d[k] < -tol && self.upper[k] > 0.0 => -self.d[k],
                State::Upper if self.d[k] > tol => self.d[k],
                _ => continue,
            };
            if bland {
                return Some(k);
            }
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((k, score));
            }
        }
        best.map(|(k, _)| k)
    }

    fn run(&mut self) -> Result<PhaseEnd, LpError> {
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let bland = degenerate_run > self.opts.bland_after;
            let Some(k) = self.price(bland) else {
                return Ok(PhaseEnd::Optimal);
            };
            self.iterations += 1;
            let dir = if self.state[k] == State::Lower { 1.0 } else { -1.0 };

            // Ratio test.
            let mut step = self.upper[k];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let alpha = dir * self.col(i, k);
                let limit = if alpha > self.opts.pivot_tol {
                    self.xb[i].max(0.0) / alpha
                } else if alpha < -self.opts.pivot_tol {
                    let ub = self.upper[self.basis[i]];
                    if !ub.is_finite() {
                        continue;
                    }
                    (ub - self.xb[i]).max(0.0) / -alpha
                } else {
                    continue;
                };
                let take = if limit < step - 1e-12 {
                    true
                } else if limit <= step + 1e-12 {
                    // Ties: prefer a pivot over a bound flip, then break by rule.
                    match leave {
                        None => true,
                        Some((r, _)) if bland => self.basis[i] < self.basis[r],
                        Some((_, a)) => alpha.abs() > a.abs(),
                    }
                } else {
                    false
                };
                if take {
                    step = step.min(limit);
                    leave = Some((i, alpha));
                }
            }
            if !step.is_finite() {
                return Ok(PhaseEnd::Unbounded);
            }
            if step <= self.opts.feasibility_tol {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            if step != 0.0 {
                for i in 0..self.m {
                    let a = self.t[i * self.n + k];
                    if a != 0.0 {
                        self.xb[i] -= dir * step * a;
                    }
                }
            }

            let Some((r, alpha)) = leave else {
                // Entering variable runs into its own opposite bound.
                self.state[k] = if dir > 0.0 { State::Upper } else { State::Lower };
                continue;
            };

            let leaving = self.basis[r];
            self.state[leaving] = if alpha > 0.0 { State::Lower } else { State::Upper };
            let entering_value = if dir > 0.0 { step } else { self.upper[k] - step };
            self.pivot(r, k);
            self.xb[r] = entering_value;
            self.basis[r] = k;
            self.state[k] = State::Basic;
        }
    }

    fn pivot(&mut self, r: usize, k: usize) {
        let n = self.n;
        let p = self.t[r * n + k];
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[k] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * n);
        let (prow, after) = rest.split_at_mut(n);
        for chunk in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)) {
            let f = chunk[k];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in chunk.iter_mut().zip(prow.iter()) {
                *v -= f * pv;
            }
            chunk[k] = 0.0;
        }
        let f = self.d[k];
        if f != 0.0 {
            for (v, pv) in self.d.iter_mut().zip(prow.iter()) {
                *v -= f * pv;
            }
            self.d[k] = 0.0;
        }
    }

    fn value(&self, k: usize, row_of: &[Option<usize>]) -> f64 {
        match self.state[k] {
            State::Basic => self.xb[row_of[k].expect("basic column has a row")],
            State::Lower => 0.0,
            State::Upper => self.upper[k],
        }
    }
}

pub fn solve_with(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    let nv = lp.num_vars();
    let m = lp.num_rows();

    // Map variables onto non-negative columns.
    let mut maps = Vec::with_capacity(nv);
    let mut col_upper = Vec::new();
    let mut col_cost = Vec::new();
    for j in 0..nv {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
            return Ok(LpOutcome::Infeasible);
        }
        let c = lp.objective[j];
        if l.is_finite() {
            maps.push(VarMap::Shifted {
                col: col_upper.len(),
                offset: l,
            });
            col_upper.push(u - l);
            col_cost.push(c);
        } else if u.is_finite() {
            maps.push(VarMap::Mirrored {
                col: col_upper.len(),
                offset: u,
            });
            col_upper.push(f64::INFINITY);
            col_cost.push(-c);
        } else {
            let pos = col_upper.len();
            maps.push(VarMap::Split { pos, neg: pos + 1 });
            col_upper.extend([f64::INFINITY, f64::INFINITY]);
            col_cost.extend([c, -c]);
        }
    }
    let n_struct = col_upper.len();

    // Transformed rows: coefficients over structural columns, rhs, slack sign.
    let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::with_capacity(m);
    for r in &lp.rows {
        let mut coeffs = vec![0.0; n_struct];
        let mut rhs = r.rhs;
        for (j, &a) in r.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shifted { col, offset } => {
                    coeffs[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Mirrored { col, offset } => {
                    coeffs[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        let slack = match r.sense {
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
            Sense::Eq => 0.0,
        };
        rows.push((coeffs, rhs, slack));
    }

    let n_slack = rows.iter().filter(|r| r.2 != 0.0).count();
    let mut row_sign = vec![1.0; m];
    let mut needs_artificial = vec![false; m];
    for (i, (_, rhs, slack)) in rows.iter().enumerate() {
        if *rhs < 0.0 {
            row_sign[i] = -1.0;
        }
        needs_artificial[i] = *slack * row_sign[i] <= 0.0;
    }
    let n_art = needs_artificial.iter().filter(|&&b| b).count();
    let n = n_struct + n_slack + n_art;

    let mut t = vec![0.0; m * n];
    let mut xb = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut init_col = vec![0; m];
    let mut upper = col_upper;
    upper.resize(n, f64::INFINITY);
    let mut is_art = vec![false; n];
    let mut next_slack = n_struct;
    let mut next_art = n_struct + n_slack;
    for (i, (coeffs, rhs, slack)) in rows.iter().enumerate() {
        let s = row_sign[i];
        let row = &mut t[i * n..(i + 1) * n];
        for (dst, a) in row.iter_mut().zip(coeffs) {
            *dst = s * a;
        }
        xb[i] = s * rhs;
        if *slack != 0.0 {
            row[next_slack] = s * slack;
            if !needs_artificial[i] {
                basis[i] = next_slack;
                init_col[i] = next_slack;
            }
            next_slack += 1;
        }
        if needs_artificial[i] {
            row[next_art] = 1.0;
            basis[i] = next_art;
            init_col[i] = next_art;
            is_art[next_art] = true;
            next_art += 1;
        }
    }

    let mut state = vec![State::Lower; n];
    for &b in &basis {
        state[b] = State::Basic;
    }
    let max_iterations = opts
        .max_iterations
        .unwrap_or(100 * (m + n) + 1000);
    let mut tab = Tableau {
        m,
        n,
        t,
        xb,
        basis,
        state,
        upper,
        d: vec![0.0; n],
        barred: vec![false; n],
        iterations: 0,
        max_iterations,
        opts: *opts,
    };

    if n_art > 0 {
        let phase1: Vec<f64> = is_art.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        tab.reset_costs(&phase1);
        tab.run()?;
        let infeasibility: f64 = (0..m)
            .filter(|&i| is_art[tab.basis[i]])
            .map(|i| tab.xb[i])
            .sum();
        let scale = 1.0 + rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
        if infeasibility > opts.feasibility_tol * scale {
            return Ok(LpOutcome::Infeasible);
        }
        for (k, &art) in is_art.iter().enumerate().take(n) {
            if art {
                tab.barred[k] = true;
                tab.upper[k] = 0.0;
                if tab.state[k] != State::Basic {
                    tab.state[k] = State::Lower;
                }
            }
        }
        for i in 0..m {
            if is_art[tab.basis[i]] {
                tab.xb[i] = 0.0;
            }
        }
    }

    let mut phase2 = col_cost;
    phase2.resize(n, 0.0);
    tab.reset_costs(&phase2);
    if let PhaseEnd::Unbounded = tab.run()? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut row_of = vec![None; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        row_of[b] = Some(i);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, offset } => offset + tab.value(col, &row_of),
            VarMap::Mirrored { col, offset } => offset - tab.value(col, &row_of),
            VarMap::Split { pos, neg } => tab.value(pos, &row_of) - tab.value(neg, &row_of),
        })
        .collect();
    let duals = (0..m).map(|i| -tab.d[init_col[i]] * row_sign[i]).collect();
    Ok(LpOutcome::Optimal(Solution {
        objective: lp.evaluate(&x),
        x,
        duals,
        iterations: tab.iterations,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_solvable_maximisation() {
        // max x1 + x2 s.t. x1 + x2 <= 1, 0 <= x <= 1
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, -1.0);
        lp.set_objective(1, -1.0);
        lp.set_bounds(0, 0.0, 1.0);
        lp.set_bounds(1, 0.0, 1.0);
        lp.add_constraint(&[(0, 1.0), (1, 1.0)], Sense::Le, 1.0);
        let s = solve(&lp).unwrap().optimal().unwrap();
        assert!((s.objective + 1.0).abs() < 1e-12);
        assert!(lp.max_violation(&s.x) < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut lp = LinearProgram::new(1);
        lp.set_bounds(0, 2.0, 1.0);
        assert_eq!(solve(&lp).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::new(2);
        lp.add_constraint(&[(0, 1.0), (1, 1.0)], Sense::Ge, 3.0);
        lp.add_constraint(&[(0, 1.0), (1, 1.0)], Sense::Le, 2.0);
        assert_eq!(solve(&lp).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_ray_is_detected() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, -1.0);
        lp.add_constraint(&[(0, 1.0), (1, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve(&lp).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn free_and_mirrored_variables() {
        // min x0 - x1 with x0 free, x1 <= 3 (no lower bound), x0 >= x1 - 5, x0 + x1 = 1
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, -1.0);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(1, f64::NEG_INFINITY, 3.0);
        lp.add_constraint(&[(0, 1.0), (1, -1.0)], Sense::Ge, -5.0);
        lp.add_constraint(&[(0, 1.0), (1, 1.0)], Sense::Eq, 1.0);
        let s = solve(&lp).unwrap().optimal().unwrap();
        // x0 = -2, x1 = 3 gives -5
        assert!((s.objective + 5.0).abs() < 1e-10, "{s:?}");
        assert!(lp.max_violation(&s.x) < 1e-10);
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let mut lp = LinearProgram::new(3);
        for j in 0..3 {
            lp.set_objective(j, -1.0);
            lp.add_constraint(&[(j, 1.0)], Sense::Le, 1.0);
        }
        let opts = SimplexOptions {
            max_iterations: Some(1),
            ..SimplexOptions::default()
        };
        assert_eq!(solve_with(&lp, &opts), Err(LpError::IterationLimit(1)));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance.
        let mut lp = LinearProgram::new(4);
        for (j, c) in [-0.75, 150.0, -0.02, 6.0].into_iter().enumerate() {
            lp.set_objective(j, c);
        }
        lp.add_constraint(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Sense::Le, 0.0);
        lp.add_constraint(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Sense::Le, 0.0);
        lp.add_constraint(&[(2, 1.0)], Sense::Le, 1.0);
        let s = solve(&lp).unwrap().optimal().unwrap();
        assert!((s.objective + 0.05).abs() < 1e-10, "{}", s.objective);
    }

    #[test]
    fn dump_lists_rows_and_bounds() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 2.0);
        lp.add_constraint(&[(0, 1.0), (1, -3.0)], Sense::Ge, 4.0);
        let text = lp.to_string();
        assert!(text.contains("r0: 1 x0 - 3 x1 >= 4"));
        assert!(text.contains("0 <= x1 <= inf"));
        assert!(text.starts_with("minimize\n  2 x0\n"));
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let mut lp = LinearProgram::new(2);
        lp.add_dense_constraint(vec![1.0], Sense::Le, 1.0);
        assert!(matches!(solve(&lp), Err(LpError::Malformed(_))));
        let mut lp = LinearProgram::new(1);
        lp.add_constraint(&[(0, f64::NAN)], Sense::Le, 1.0);
        assert!(matches!(solve(&lp), Err(LpError::Malformed(_))));
    }
}
