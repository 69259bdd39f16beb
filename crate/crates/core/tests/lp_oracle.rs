//! Cross-checks the simplex engine against an independent brute-force
//! vertex enumerator on randomly generated boxed programs.
//!
//! The enumerator shares no code with the engine: it walks every candidate
//! active set (equality rows always active, plus a choice of inequality
//! rows, plus variables pinned to a bound side), solves the square system by
//! Gaussian elimination, filters by feasibility, and takes the best
//! objective. On a bounded feasible program the best feasible vertex is the
//! LP optimum, so the two objectives must agree to tight tolerance.

use mitbid_core::lp::{kkt_residual, solve_lp, LinearProgram, LpStatus, Sense};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OBJ_TOL: f64 = 1e-7;
const FEAS_TOL: f64 = 1e-7;

// ─── independent vertex enumerator ───────────────────────────────────────────

/// Solves `A x = b` for square dense `A` (row-major), returning `None` when
/// the system is singular. Plain Gaussian elimination with partial pivoting.
fn solve_square(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r * n + col].abs() > m[piv * n + col].abs() {
                piv = r;
            }
        }
        if m[piv * n + col].abs() < 1e-10 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            rhs.swap(col, piv);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = rhs[col];
        for k in col + 1..n {
            s -= m[col * n + k] * x[k];
        }
        x[col] = s / m[col * n + col];
    }
    Some(x)
}

fn feasible(lp: &LinearProgram, x: &[f64]) -> bool {
    for j in 0..lp.num_vars() {
        if x[j] < lp.lower[j] - FEAS_TOL || x[j] > lp.upper[j] + FEAS_TOL {
            return false;
        }
    }
    for row in &lp.rows {
        let lhs: f64 = row.terms.iter().map(|&(j, c)| c * x[j]).sum();
        let ok = match row.sense {
            Sense::Le => lhs <= row.rhs + FEAS_TOL,
            Sense::Ge => lhs >= row.rhs - FEAS_TOL,
            Sense::Eq => (lhs - row.rhs).abs() <= FEAS_TOL,
        };
        if !ok {
            return false;
        }
    }
    true
}

/// Brute-force optimum over all vertices of a fully boxed program.
fn best_vertex(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let eq_rows: Vec<usize> = (0..lp.rows.len())
        .filter(|&i| lp.rows[i].sense == Sense::Eq)
        .collect();
    let ineq_rows: Vec<usize> = (0..lp.rows.len())
        .filter(|&i| lp.rows[i].sense != Sense::Eq)
        .collect();

    let mut best: Option<f64> = None;
    // Choose k inequality rows to activate (plus all equalities), then pin
    // the remaining degrees of freedom to variable bounds.
    let max_extra = n.saturating_sub(eq_rows.len());
    for k in 0..=max_extra.min(ineq_rows.len()) {
        let n_fixed = n - eq_rows.len() - k;
        for rows_choice in combinations(ineq_rows.len(), k) {
            let active: Vec<usize> = eq_rows
                .iter()
                .copied()
                .chain(rows_choice.iter().map(|&i| ineq_rows[i]))
                .collect();
            for vars_choice in combinations(n, n_fixed) {
                for side_mask in 0..(1u32 << n_fixed) {
                    let mut a = vec![0.0; n * n];
                    let mut b = vec![0.0; n];
                    for (r, &row_idx) in active.iter().enumerate() {
                        for &(j, c) in &lp.rows[row_idx].terms {
                            a[r * n + j] += c;
                        }
                        b[r] = lp.rows[row_idx].rhs;
                    }
                    for (f, &v) in vars_choice.iter().enumerate() {
                        let r = active.len() + f;
                        a[r * n + v] = 1.0;
                        b[r] = if side_mask >> f & 1 == 0 {
                            lp.lower[v]
                        } else {
                            lp.upper[v]
                        };
                    }
                    let Some(x) = solve_square(&a, &b, n) else {
                        continue;
                    };
                    if !feasible(lp, &x) {
                        continue;
                    }
                    let obj = lp.objective_value(&x);
                    best = Some(match best {
                        Some(cur) if cur <= obj => cur,
                        _ => obj,
                    });
                }
            }
        }
    }
    best
}

/// All k-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

// ─── random program generator ────────────────────────────────────────────────

/// Builds a feasible boxed program: bounds around the origin, every row
/// anchored to pass through a sampled interior point with positive slack.
fn random_lp(rng: &mut ChaCha8Rng, with_equality: bool) -> LinearProgram {
    let n = 5;
    let m = 8;
    let mut lp = LinearProgram::default();
    for j in 0..n {
        let lo = rng.gen_range(-3.0..0.0);
        let hi = rng.gen_range(1.0..5.0);
        let cost = rng.gen_range(-5.0..5.0);
        lp.add_var(format!("x{}", j), lo, hi, cost);
    }
    let anchor: Vec<f64> = (0..n)
        .map(|j| {
            let (lo, hi) = (lp.lower[j], lp.upper[j]);
            lo + (hi - lo) * rng.gen_range(0.25..0.75)
        })
        .collect();
    for i in 0..m {
        let n_terms = rng.gen_range(2..=4);
        let mut vars: Vec<usize> = (0..n).collect();
        for k in 0..n_terms {
            let pick = rng.gen_range(k..n);
            vars.swap(k, pick);
        }
        let terms: Vec<(usize, f64)> = vars[..n_terms]
            .iter()
            .map(|&j| (j, rng.gen_range(-4.0..4.0)))
            .collect();
        let at_anchor: f64 = terms.iter().map(|&(j, c)| c * anchor[j]).sum();
        let (sense, rhs) = if with_equality && i == 0 {
            (Sense::Eq, at_anchor)
        } else if rng.gen_bool(0.5) {
            (Sense::Le, at_anchor + rng.gen_range(0.5..3.0))
        } else {
            (Sense::Ge, at_anchor - rng.gen_range(0.5..3.0))
        };
        lp.add_row(format!("r{}", i), terms, sense, rhs);
    }
    lp
}

// ─── the cross-check ─────────────────────────────────────────────────────────

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut failures = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7 + seed);
        for case in 0..8 {
            let lp = random_lp(&mut rng, case % 2 == 1);
            let sol = solve_lp(&lp).expect("solver error");
            assert_eq!(
                sol.status,
                LpStatus::Optimal,
                "anchored program must be feasible and bounded (seed {seed} case {case})"
            );
            let oracle = best_vertex(&lp).expect("enumerator found no feasible vertex");
            let scale = 1.0 + oracle.abs();
            if (sol.objective - oracle).abs() / scale > OBJ_TOL {
                failures.push(format!(
                    "seed {seed} case {case}: simplex {:.12} vs enumeration {:.12}",
                    sol.objective, oracle
                ));
            }
            let resid = kkt_residual(&lp, &sol);
            if resid > 1e-7 {
                failures.push(format!(
                    "seed {seed} case {case}: optimality residual {resid:.3e}"
                ));
            }
        }
    }
    assert!(failures.is_empty(), "mismatches:\n{}", failures.join("\n"));
}

#[test]
fn duality_identity_on_random_programs() {
    // c^T x* equals y^T b plus the reduced-cost value of every bound-pinned
    // variable; checked directly rather than through the residual helper.
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for case in 0..10 {
        let lp = random_lp(&mut rng, case % 3 == 0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        let ytb: f64 = lp
            .rows
            .iter()
            .zip(&sol.duals)
            .map(|(r, y)| y * r.rhs)
            .sum();
        let dtx: f64 = sol
            .reduced_costs
            .iter()
            .zip(&sol.x)
            .map(|(d, x)| d * x)
            .sum();
        let gap = (sol.objective - ytb - dtx).abs() / (1.0 + sol.objective.abs());
        assert!(gap < 1e-7, "case {case}: duality identity gap {gap:.3e}");
    }
}
