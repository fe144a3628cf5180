//! Random small programs checked against brute-force vertex enumeration and
//! against the dual bound built from the reported multipliers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voltmesh_lp::{solve, LinearProgram, LpOutcome, Sense};

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
#[allow(clippy::needless_range_loop)]
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum over all basic feasible points. Requires finite bounds.
fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..lp.num_rows() {
        let (a, _, b) = lp.row(i);
        planes.push((a.to_vec(), b));
    }
    for j in 0..n {
        let (l, u) = lp.bounds(j);
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), l));
        planes.push((e, u));
    }
    // Equality rows are enforced by the feasibility check, so every vertex is
    // the intersection of some n planes.
    let free: Vec<usize> = (0..planes.len()).collect();
    let need = n;
    let mut best: Option<f64> = None;
    let mut combo: Vec<usize> = (0..need).collect();
    loop {
        let chosen: Vec<usize> = combo.iter().map(|&c| free[c]).collect();
        let a = chosen.iter().map(|&i| planes[i].0.clone()).collect();
        let b = chosen.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if lp.max_violation(&x) <= 1e-9 {
                let v = lp.evaluate(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        // next combination
        let mut i = need;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if combo[i] < free.len() - need + i {
                combo[i] += 1;
                for k in i + 1..need {
                    combo[k] = combo[k - 1] + 1;
                }
                break;
            }
        }
    }
}

fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = rng.random_range(1..=5);
    let m = rng.random_range(1..=5);
    let mut lp = LinearProgram::new(n);
    let anchor: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    for j in 0..n {
        lp.set_objective(j, rng.random_range(-5..=5) as f64);
        let l = rng.random_range(-4..=0) as f64;
        let u = l + rng.random_range(1..=6) as f64;
        lp.set_bounds(j, l, u);
    }
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-4..=4) as f64).collect();
        let at: f64 = a.iter().zip(&anchor).map(|(a, x)| a * x).sum();
        // Mostly satisfiable around the anchor, sometimes not.
        let slack = rng.random_range(-1.0..3.0);
        let sense = match rng.random_range(0..6) {
            0 => Sense::Eq,
            1 | 2 => Sense::Ge,
            _ => Sense::Le,
        };
        let rhs = match sense {
            Sense::Le => at + slack,
            Sense::Ge => at - slack,
            Sense::Eq => at,
        };
        lp.add_dense_constraint(a, sense, rhs);
    }
    lp
}

#[test]
fn random_programs_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut optimal, mut infeasible) = (0, 0);
    for case in 0..400 {
        let lp = random_lp(&mut rng);
        let oracle = vertex_enumeration(&lp);
        match (solve(&lp).unwrap(), oracle) {
            (LpOutcome::Optimal(s), Some(best)) => {
                assert!(
                    (s.objective - best).abs() <= 1e-8 * (1.0 + best.abs()),
                    "case {case}: simplex {} vs enumeration {best}\n{lp}",
                    s.objective
                );
                assert!(lp.max_violation(&s.x) <= 1e-7, "case {case}");
                optimal += 1;
            }
            (LpOutcome::Infeasible, None) => infeasible += 1,
            (got, want) => panic!("case {case}: simplex {got:?}, enumeration {want:?}\n{lp}"),
        }
    }
    assert!(optimal > 200 && infeasible > 10, "{optimal} optimal, {infeasible} infeasible");
}

#[test]
fn reported_duals_certify_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 200 {
        let lp = random_lp(&mut rng);
        let Some(s) = solve(&lp).unwrap().optimal() else {
            continue;
        };
        let n = lp.num_vars();
        let mut bound = 0.0;
        let mut reduced = lp.objective().to_vec();
        for (i, &y) in s.duals.iter().enumerate() {
            let (a, sense, b) = lp.row(i);
            match sense {
                Sense::Le => assert!(y <= 1e-9, "<= row multiplier {y}"),
                Sense::Ge => assert!(y >= -1e-9, ">= row multiplier {y}"),
                Sense::Eq => {}
            }
            bound += y * b;
            for j in 0..n {
                reduced[j] -= y * a[j];
            }
        }
        for (j, &r) in reduced.iter().enumerate().take(n) {
            let (l, u) = lp.bounds(j);
            bound += (r * l).min(r * u);
        }
        assert!(
            (bound - s.objective).abs() <= 1e-6 * (1.0 + s.objective.abs()),
            "dual bound {bound} vs primal {}",
            s.objective
        );
        checked += 1;
    }
}
