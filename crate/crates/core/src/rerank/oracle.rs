//! Exhaustive enumeration of every per-user K-subset; the ground truth the
//! other solvers are checked against on small instances.

use std::time::Instant;

use super::problem::{RerankProblem, Selection};
use super::{finalize, Infeasibility, SolveOutcome, SolverConfig, SolverKind};
use crate::error::{Error, Result};

pub const ENUMERATION_BUDGET: u64 = 1_000_000;

/// Next K-subset of `0..n` in lexicographic order; false after the last.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub fn solve_oracle(p: &RerankProblem, cfg: &SolverConfig) -> Result<SolveOutcome> {
    let start = Instant::now();
    let space = p.search_space();
    if space > ENUMERATION_BUDGET as f64 {
        return Err(Error::BudgetExceeded {
            combinations: space,
            budget: ENUMERATION_BUDGET,
        });
    }
    let k = p.k();
    let users = p.users();
    // per-user (objective, relevant count) of the current combination
    let mut combos: Selection = users.iter().map(|_| (0..k).collect()).collect();
    let eval = |u: usize, c: &[usize]| -> (f64, f64) {
        let cand = &users[u].candidates;
        let s: f64 = c.iter().map(|&j| cand[j].score).sum();
        let h = c.iter().filter(|&&j| cand[j].relevant).count() as f64;
        (s, users[u].coeff * h)
    };
    let mut best: Option<(f64, Selection)> = None;
    let mut min_abs_d = f64::INFINITY;
    let mut visited = 0u64;
    loop {
        visited += 1;
        let (mut obj, mut d) = (0.0, 0.0);
        for (u, c) in combos.iter().enumerate() {
            let (s, w) = eval(u, c);
            obj += s;
            d += w;
        }
        min_abs_d = min_abs_d.min(d.abs());
        if p.is_feasible_value(d, cfg.feasibility_tol) && best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, combos.clone()));
        }
        // odometer: the last user varies fastest, so the visiting order is
        // lexicographic in the concatenated selection
        let mut u = users.len();
        loop {
            if u == 0 {
                let wall = start.elapsed().as_secs_f64();
                return Ok(match best {
                    Some((_, sel)) => {
                        let mut sol = finalize(p, &sel, SolverKind::Oracle)?;
                        sol.nodes = visited;
                        sol.wall_time = wall;
                        SolveOutcome::Solved(sol)
                    }
                    None => SolveOutcome::Infeasible(Infeasibility {
                        solver: SolverKind::Oracle,
                        epsilon: p.epsilon(),
                        min_abs_constraint: min_abs_d,
                        certified: true,
                        nodes: visited,
                        wall_time: wall,
                    }),
                });
            }
            u -= 1;
            if next_combination(&mut combos[u], users[u].candidates.len()) {
                break;
            }
            combos[u] = (0..k).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_in_order() {
        let mut c = vec![0, 1];
        let mut all = vec![c.clone()];
        while next_combination(&mut c, 4) {
            all.push(c.clone());
        }
        assert_eq!(
            all,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
    }
}
