//! Best-first branch-and-bound for the re-ranking program.
//!
//! Within one user, relevant candidates all carry the same constraint
//! coefficient and irrelevant ones carry zero, so an optimal selection that
//! keeps `h` relevant items takes the `h` best-scored relevant slots and the
//! `K - h` best irrelevant ones. The user's best objective `v_i(h)` is
//! concave in `h`. Users with bit-identical coefficients (same group, same
//! relevant total) are pooled into a class whose best objective for a total
//! of `H` relevant picks is again concave, obtained by merging the users'
//! marginal gains. The search therefore branches on each class's relevant
//! total, i.e. on whether the next-best relevant slot of the class is in or
//! out.
//!
//! The bound at a node is the Lagrangian dual with the two constraint sides
//! dualized. For a concave separable objective with one linear constraint
//! the dual equals the continuous relaxation, which is solved exactly by
//! walking marginal moves in order of objective loss per unit of constraint
//! change; the walk stops at the breakpoint multiplier and leaves at most one
//! class fractional.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use super::problem::{RerankProblem, Selection};
use super::{finalize, passthrough, Infeasibility, SolveOutcome, SolveStatus, SolverConfig, SolverKind};
use crate::error::{Error, Result};

struct UserBlock {
    relevant: Vec<usize>,
    irrelevant: Vec<usize>,
    lo: usize,
}

struct Class {
    coeff: f64,
    /// Marginal gains, non-increasing.
    gains: Vec<f64>,
    /// The user that each gain belongs to.
    owners: Vec<usize>,
    prefix: Vec<f64>,
    /// Number of strictly positive gains.
    positive: usize,
}

struct Model {
    users: Vec<UserBlock>,
    classes: Vec<Class>,
    base_objective: f64,
    base_constraint: f64,
    k: usize,
}

impl Model {
    fn new(p: &RerankProblem) -> Self {
        let k = p.k();
        let mut users = Vec::with_capacity(p.users().len());
        let mut pooled: BTreeMap<u64, (f64, Vec<(f64, usize, usize)>)> = BTreeMap::new();
        let mut base_objective = 0.0;
        let mut base_constraint = 0.0;
        for (i, u) in p.users().iter().enumerate() {
            let (relevant, irrelevant): (Vec<usize>, Vec<usize>) =
                (0..u.candidates.len()).partition(|&j| u.candidates[j].relevant);
            let lo = k.saturating_sub(irrelevant.len());
            let hi = k.min(relevant.len());
            let score = |j: usize| u.candidates[j].score;
            base_objective += relevant[..lo].iter().map(|&j| score(j)).sum::<f64>()
                + irrelevant[..k - lo].iter().map(|&j| score(j)).sum::<f64>();
            base_constraint += u.coeff * lo as f64;
            if hi > lo && u.coeff != 0.0 {
                let entry = pooled.entry(u.coeff.to_bits()).or_insert((u.coeff, Vec::new()));
                for h in lo..hi {
                    let gain = score(relevant[h]) - score(irrelevant[k - h - 1]);
                    entry.1.push((gain, i, h));
                }
            }
            users.push(UserBlock { relevant, irrelevant, lo });
        }
        let classes = pooled
            .into_values()
            .map(|(coeff, mut moves)| {
                moves.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
                let gains: Vec<f64> = moves.iter().map(|m| m.0).collect();
                let owners = moves.iter().map(|m| m.1).collect();
                let mut prefix = Vec::with_capacity(gains.len() + 1);
                prefix.push(0.0);
                for g in &gains {
                    prefix.push(prefix.last().unwrap() + g);
                }
                let positive = gains.partition_point(|&g| g > 0.0);
                Class {
                    coeff,
                    gains,
                    owners,
                    prefix,
                    positive,
                }
            })
            .collect();
        Model {
            users,
            classes,
            base_objective,
            base_constraint,
            k,
        }
    }

    fn objective(&self, t: &[usize]) -> f64 {
        self.base_objective + self.classes.iter().zip(t).map(|(c, &t)| c.prefix[t]).sum::<f64>()
    }

    fn constraint(&self, t: &[usize]) -> f64 {
        self.base_constraint + self.classes.iter().zip(t).map(|(c, &t)| c.coeff * t as f64).sum::<f64>()
    }

    fn selection(&self, t: &[usize]) -> Selection {
        let mut h: Vec<usize> = self.users.iter().map(|u| u.lo).collect();
        for (c, &t) in self.classes.iter().zip(t) {
            for &owner in &c.owners[..t] {
                h[owner] += 1;
            }
        }
        self.users
            .iter()
            .zip(h)
            .map(|(u, h)| {
                let mut s: Vec<usize> = u.relevant[..h]
                    .iter()
                    .chain(&u.irrelevant[..self.k - h])
                    .copied()
                    .collect();
                s.sort_unstable();
                s
            })
            .collect()
    }
}

/// A marginal move of one class, keyed by loss per unit of constraint change.
struct Move {
    ratio: f64,
    class: usize,
}

impl PartialEq for Move {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Move {}
impl PartialOrd for Move {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Move {
    // reversed so that BinaryHeap pops the cheapest move
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .ratio
            .total_cmp(&self.ratio)
            .then_with(|| other.class.cmp(&self.class))
    }
}

enum Relaxation {
    /// No point of the node's box meets the constraint, even fractionally.
    Infeasible { min_abs: f64 },
    /// The relaxation optimum is integral.
    Integral { t: Vec<usize> },
    Fractional {
        bound: f64,
        /// The relaxation optimum with the fractional move taken in full.
        rounded: Vec<usize>,
        class: usize,
        /// The two integer neighbours of the fractional class total.
        floor: usize,
        ceil: usize,
        lambda: f64,
    },
}

fn relax(m: &Model, lo: &[usize], hi: &[usize], bound_eps: f64) -> Relaxation {
    let mut t: Vec<usize> = m
        .classes
        .iter()
        .enumerate()
        .map(|(q, c)| c.positive.clamp(lo[q], hi[q]))
        .collect();
    let d0 = m.constraint(&t);
    let v0 = m.objective(&t);
    if d0.abs() <= bound_eps {
        return Relaxation::Integral { t };
    }
    // direction: +1 lowers the constraint value, -1 raises it
    let lowering = d0 > bound_eps;
    let need = if lowering { d0 - bound_eps } else { -bound_eps - d0 };
    // a class moves down when that changes the constraint the wanted way
    let moves_down = |c: &Class| (c.coeff > 0.0) == lowering;
    let next_cost = |q: usize, t: usize| -> Option<f64> {
        let c = &m.classes[q];
        if moves_down(c) {
            (t > lo[q]).then(|| c.gains[t - 1])
        } else {
            (t < hi[q]).then(|| -c.gains[t])
        }
    };
    let mut heap = BinaryHeap::new();
    for q in 0..m.classes.len() {
        if let Some(cost) = next_cost(q, t[q]) {
            heap.push(Move {
                ratio: cost / m.classes[q].coeff.abs(),
                class: q,
            });
        }
    }
    let mut moved = 0.0;
    let mut loss = 0.0;
    while let Some(Move { ratio, class: q }) = heap.pop() {
        let c = &m.classes[q];
        let step = c.coeff.abs();
        let cost = next_cost(q, t[q]).expect("queued move exists");
        let before = t[q];
        let after = if moves_down(c) { before - 1 } else { before + 1 };
        if moved + step >= need {
            let frac = (need - moved) / step;
            t[q] = after;
            if frac >= 1.0 - 1e-12 {
                return Relaxation::Integral { t };
            }
            return Relaxation::Fractional {
                bound: v0 - loss - frac * cost,
                rounded: t,
                class: q,
                floor: before.min(after),
                ceil: before.max(after),
                lambda: if lowering { ratio } else { -ratio },
            };
        }
        moved += step;
        loss += cost;
        t[q] = after;
        if let Some(cost) = next_cost(q, after) {
            heap.push(Move {
                ratio: cost / step,
                class: q,
            });
        }
    }
    Relaxation::Infeasible {
        min_abs: m.constraint(&t).abs(),
    }
}

struct Node {
    bound: f64,
    seq: u64,
    lo: Vec<usize>,
    hi: Vec<usize>,
    class: usize,
    floor: usize,
    ceil: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // highest bound first, earliest node on ties
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    model: &'a Model,
    eps: f64,
    incumbent: Option<(f64, Vec<usize>)>,
    min_abs: f64,
}

impl Search<'_> {
    fn offer(&mut self, t: &[usize]) {
        let d = self.model.constraint(t);
        self.min_abs = self.min_abs.min(d.abs());
        if d.abs() > self.eps {
            return;
        }
        let v = self.model.objective(t);
        if self.incumbent.as_ref().is_none_or(|(best, _)| v > *best) {
            self.incumbent = Some((v, t.to_vec()));
        }
    }

    fn prune_below(&self, gap_tol: f64) -> f64 {
        match &self.incumbent {
            Some((v, _)) => v + gap_tol * v.abs().max(1e-12),
            None => f64::NEG_INFINITY,
        }
    }
}

pub fn solve_exact(p: &RerankProblem, cfg: &SolverConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    if p.is_unconstrained() {
        let mut s = passthrough(p)?;
        s.wall_time = start.elapsed().as_secs_f64();
        return Ok(SolveOutcome::Solved(s));
    }
    let model = Model::new(p);
    let eps = p.epsilon() + cfg.feasibility_tol;
    let root_lo = vec![0; model.classes.len()];
    let root_hi: Vec<usize> = model.classes.iter().map(|c| c.gains.len()).collect();
    let mut search = Search {
        model: &model,
        eps,
        incumbent: None,
        min_abs: f64::INFINITY,
    };
    let mut nodes = 1u64;
    let mut seq = 0u64;
    let mut heap = BinaryHeap::new();
    let root_lambda = match relax(&model, &root_lo, &root_hi, eps) {
        Relaxation::Infeasible { min_abs } => {
            return Ok(SolveOutcome::Infeasible(Infeasibility {
                solver: SolverKind::Exact,
                epsilon: p.epsilon(),
                min_abs_constraint: min_abs,
                certified: true,
                nodes,
                wall_time: start.elapsed().as_secs_f64(),
            }));
        }
        Relaxation::Integral { t } => {
            search.offer(&t);
            Some(0.0)
        }
        Relaxation::Fractional {
            bound,
            rounded,
            class,
            floor,
            ceil,
            lambda,
        } => {
            search.offer(&rounded);
            heap.push(Node {
                bound,
                seq,
                lo: root_lo,
                hi: root_hi,
                class,
                floor,
                ceil,
            });
            Some(lambda)
        }
    };

    let mut timed_out = false;
    while let Some(node) = heap.peek() {
        if node.bound <= search.prune_below(cfg.gap_tol) {
            break;
        }
        if start.elapsed().as_secs_f64() > cfg.time_limit {
            timed_out = true;
            break;
        }
        let node = heap.pop().expect("peeked");
        for side in 0..2 {
            let (mut lo, mut hi) = (node.lo.clone(), node.hi.clone());
            if side == 0 {
                hi[node.class] = node.floor;
            } else {
                lo[node.class] = node.ceil;
            }
            if lo[node.class] > hi[node.class] {
                continue;
            }
            nodes += 1;
            match relax(&model, &lo, &hi, eps) {
                Relaxation::Infeasible { .. } => {}
                Relaxation::Integral { t } => search.offer(&t),
                Relaxation::Fractional {
                    bound,
                    rounded,
                    class,
                    floor,
                    ceil,
                    ..
                } => {
                    search.offer(&rounded);
                    if bound > search.prune_below(cfg.gap_tol) {
                        seq += 1;
                        heap.push(Node {
                            bound,
                            seq,
                            lo,
                            hi,
                            class,
                            floor,
                            ceil,
                        });
                    }
                }
            }
        }
    }

    let wall_time = start.elapsed().as_secs_f64();
    let open_bound = heap.peek().map(|n| n.bound);
    match search.incumbent {
        None if timed_out => Err(Error::Timeout {
            seconds: cfg.time_limit,
        }),
        None => Ok(SolveOutcome::Infeasible(Infeasibility {
            solver: SolverKind::Exact,
            epsilon: p.epsilon(),
            min_abs_constraint: search.min_abs,
            certified: true,
            nodes,
            wall_time,
        })),
        Some((value, t)) => {
            let mut s = finalize(p, &model.selection(&t), SolverKind::Exact)?;
            let best_open = open_bound.unwrap_or(value).max(value);
            s.optimality_gap = ((best_open - value) / value.abs().max(1e-12)).max(0.0);
            s.status = if timed_out {
                SolveStatus::Feasible
            } else {
                SolveStatus::Optimal
            };
            s.dual_bound = Some(best_open.max(s.objective_value));
            s.lambda = root_lambda;
            s.nodes = nodes;
            s.wall_time = wall_time;
            Ok(SolveOutcome::Solved(s))
        }
    }
}
