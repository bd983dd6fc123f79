//! Multiplier bisection with a single-swap repair pass.
//!
//! For a fixed multiplier `lambda` the coupling constraint moves into the
//! objective and the problem separates: each user keeps the K candidates with
//! the largest adjusted score `S_ij - lambda c_ij`. The constraint value of
//! that selection is non-increasing in `lambda`, so bisection finds the
//! breakpoint where it enters `[-epsilon, epsilon]`. When the discrete jump
//! at the breakpoint overshoots the interval, the repair pass walks single
//! swaps from either side of the breakpoint.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;

use super::problem::{RerankProblem, Selection};
use super::{finalize, passthrough, Infeasibility, SolveOutcome, SolveStatus, SolverConfig, SolverKind};
use crate::error::Result;

/// The per-user top-K selection for one multiplier value.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSelection {
    pub lambda: f64,
    pub selection: Selection,
    /// Constraint value `sum c_ij W_ij` of the selection.
    pub constraint: f64,
    /// `sum (S_ij - lambda c_ij) W_ij`.
    pub adjusted_value: f64,
}

impl RelaxedSelection {
    /// Lagrangian dual function value, an upper bound on the optimum of the
    /// problem with bound `eps`.
    pub fn dual_value(&self, eps: f64) -> f64 {
        self.adjusted_value + self.lambda.abs() * eps
    }
}

/// Each user's K best candidates by `S - lambda c`; ties prefer the smaller
/// coefficient, then the earlier slot.
pub fn relaxed_selection(p: &RerankProblem, lambda: f64) -> RelaxedSelection {
    let k = p.k();
    let per_user: Vec<(Vec<usize>, f64, f64)> = p
        .users()
        .par_iter()
        .map(|u| {
            let n = u.candidates.len();
            let key = |j: usize| u.candidates[j].score - lambda * u.fairness_coeff(j);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                key(b)
                    .total_cmp(&key(a))
                    .then_with(|| u.fairness_coeff(a).total_cmp(&u.fairness_coeff(b)))
                    .then(a.cmp(&b))
            });
            idx.truncate(k);
            idx.sort_unstable();
            let adjusted: f64 = idx.iter().map(|&j| key(j)).sum();
            let h = idx.iter().filter(|&&j| u.candidates[j].relevant).count();
            (idx, adjusted, u.coeff * h as f64)
        })
        .collect();
    let mut selection = Vec::with_capacity(per_user.len());
    let (mut adjusted_value, mut constraint) = (0.0, 0.0);
    for (sel, a, d) in per_user {
        adjusted_value += a;
        constraint += d;
        selection.push(sel);
    }
    RelaxedSelection {
        lambda,
        selection,
        constraint,
        adjusted_value,
    }
}

/// Cheapest swap of one user that changes its relevant count by one.
#[derive(Debug, Clone, Copy)]
struct Swap {
    user: usize,
    out: usize,
    into: usize,
    loss: f64,
    delta: f64,
}

fn best_swaps(p: &RerankProblem, sel: &Selection, user: usize) -> [Option<Swap>; 2] {
    let u = &p.users()[user];
    if u.coeff == 0.0 {
        return [None, None];
    }
    let mut chosen = vec![false; u.candidates.len()];
    for &j in &sel[user] {
        chosen[j] = true;
    }
    // slots are in score order: the last selected of a kind is the cheapest
    // to drop and the first unselected of a kind the best to add
    let last_selected = |rel: bool| (0..u.candidates.len()).rev().find(|&j| chosen[j] && u.candidates[j].relevant == rel);
    let first_free = |rel: bool| (0..u.candidates.len()).find(|&j| !chosen[j] && u.candidates[j].relevant == rel);
    let make = |out: Option<usize>, into: Option<usize>, delta: f64| {
        out.zip(into).map(|(out, into)| Swap {
            user,
            out,
            into,
            loss: u.candidates[out].score - u.candidates[into].score,
            delta,
        })
    };
    [
        make(last_selected(true), first_free(false), -u.coeff),
        make(last_selected(false), first_free(true), u.coeff),
    ]
}

fn by_loss(a: &Swap, b: &Swap) -> Ordering {
    a.loss.total_cmp(&b.loss).then(a.user.cmp(&b.user))
}

/// Applies single swaps until the constraint value lies in `[-eps, eps]`.
/// Returns the repaired selection and its constraint value, or the closest
/// value reached on failure.
fn repair(p: &RerankProblem, mut sel: Selection, eps: f64, max_swaps: usize) -> std::result::Result<(Selection, f64), f64> {
    let mut d = p.constraint_value(&sel);
    let mut swaps: Vec<[Option<Swap>; 2]> = (0..sel.len()).map(|i| best_swaps(p, &sel, i)).collect();
    for _ in 0..max_swaps {
        if d.abs() <= eps {
            return Ok((sel, d));
        }
        let lowering = d > eps;
        let useful = swaps
            .iter()
            .flatten()
            .flatten()
            .filter(|s| (s.delta < 0.0) == lowering);
        let mut landing: Option<Swap> = None;
        let mut approach: Option<(f64, Swap)> = None;
        for s in useful {
            let next = d + s.delta;
            if next.abs() <= eps {
                if landing.is_none_or(|b| by_loss(s, &b) == Ordering::Less) {
                    landing = Some(*s);
                }
            } else if (next > eps) == lowering {
                let rate = s.loss / s.delta.abs();
                let better = match approach {
                    None => true,
                    Some((r, b)) => rate.total_cmp(&r).then(s.user.cmp(&b.user)) == Ordering::Less,
                };
                if better {
                    approach = Some((rate, *s));
                }
            }
        }
        let Some(s) = landing.or(approach.map(|(_, s)| s)) else {
            return Err(d.abs());
        };
        let slots = &mut sel[s.user];
        if let Some(pos) = slots.iter().position(|&j| j == s.out) {
            slots[pos] = s.into;
        }
        slots.sort_unstable();
        d = p.constraint_value(&sel);
        swaps[s.user] = best_swaps(p, &sel, s.user);
    }
    if d.abs() <= eps {
        Ok((sel, d))
    } else {
        Err(d.abs())
    }
}

pub fn solve_lagrangian(p: &RerankProblem, cfg: &SolverConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    if p.is_unconstrained() {
        let mut s = passthrough(p)?;
        s.wall_time = start.elapsed().as_secs_f64();
        return Ok(SolveOutcome::Solved(s));
    }
    let eps = p.epsilon() + cfg.feasibility_tol;
    let mut evaluations = 1u64;
    let at_zero = relaxed_selection(p, 0.0);
    let mut dual_bound = at_zero.dual_value(eps);

    let chosen: Option<(RelaxedSelection, Selection)>;
    let mut closest = at_zero.constraint.abs();
    if at_zero.constraint.abs() <= eps {
        let sel = at_zero.selection.clone();
        chosen = Some((at_zero, sel));
    } else {
        // D(lambda) is non-increasing: search upward when D is too high
        let (lo_bound, hi_bound) = cfg.lagrangian.multiplier_bounds;
        let upward = at_zero.constraint > eps;
        let outside = |r: &RelaxedSelection| if upward { r.constraint > eps } else { r.constraint < -eps };
        let far = relaxed_selection(p, if upward { hi_bound } else { lo_bound });
        evaluations += 1;
        dual_bound = dual_bound.min(far.dual_value(eps));
        let (mut inner, mut outer) = (at_zero, far);
        if !outside(&outer) {
            for _ in 0..cfg.lagrangian.max_bisection_iters {
                let mid = 0.5 * (inner.lambda + outer.lambda);
                if mid == inner.lambda || mid == outer.lambda {
                    break;
                }
                let r = relaxed_selection(p, mid);
                evaluations += 1;
                dual_bound = dual_bound.min(r.dual_value(eps));
                if outside(&r) {
                    inner = r;
                } else {
                    outer = r;
                }
            }
        }
        closest = closest.min(inner.constraint.abs()).min(outer.constraint.abs());
        let mut best: Option<(RelaxedSelection, Selection, f64)> = None;
        let mut consider = |origin: &RelaxedSelection, sel: Selection| {
            let obj = p.selection_objective(&sel);
            if best.as_ref().is_none_or(|(_, _, b)| obj > *b) {
                best = Some((origin.clone(), sel, obj));
            }
        };
        if outer.constraint.abs() <= eps {
            consider(&outer, outer.selection.clone());
        } else {
            for origin in [&inner, &outer] {
                match repair(p, origin.selection.clone(), eps, cfg.lagrangian.max_repair_swaps) {
                    Ok((sel, _)) => consider(origin, sel),
                    Err(d) => closest = closest.min(d),
                }
            }
        }
        chosen = best.map(|(r, s, _)| (r, s));
    }

    let wall_time = start.elapsed().as_secs_f64();
    match chosen {
        None => Ok(SolveOutcome::Infeasible(Infeasibility {
            solver: SolverKind::Lagrangian,
            epsilon: p.epsilon(),
            min_abs_constraint: closest,
            certified: false,
            nodes: evaluations,
            wall_time,
        })),
        Some((origin, sel)) => {
            let mut s = finalize(p, &sel, SolverKind::Lagrangian)?;
            let bound = dual_bound.max(s.objective_value);
            s.dual_bound = Some(bound);
            s.optimality_gap = ((bound - s.objective_value) / s.objective_value.abs().max(1e-12)).max(0.0);
            s.status = if s.optimality_gap <= cfg.gap_tol {
                SolveStatus::Optimal
            } else {
                SolveStatus::Feasible
            };
            s.lambda = Some(origin.lambda);
            s.nodes = evaluations;
            s.wall_time = wall_time;
            Ok(SolveOutcome::Solved(s))
        }
    }
}
