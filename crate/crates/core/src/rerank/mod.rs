//! Fairness-constrained re-selection of top-K lists.
//!
//! Each user has a scored candidate pool; the program picks exactly K
//! candidates per user, maximizing total score while keeping the gap in mean
//! F1@K between the advantaged and disadvantaged groups within epsilon.
//! Because F1@K of a size-K list is linear in the selection, the gap is a
//! linear constraint and the whole problem is a 0-1 integer program.
//!
//! Three solvers share the [`RerankProblem`] type:
//! - [`solve_oracle`] enumerates everything (tiny instances only),
//! - [`solve_exact`] is a best-first branch-and-bound with Lagrangian bounds,
//! - [`solve_lagrangian`] bisects the multiplier and repairs by single swaps.
//!
//! Every solution goes through [`finalize`], which orders each list by the
//! original score and recomputes the achieved gap with the metrics module.

mod exact;
mod lagrangian;
mod oracle;
mod problem;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use exact::solve_exact;
pub use lagrangian::{relaxed_selection, solve_lagrangian, RelaxedSelection};
pub use oracle::{solve_oracle, ENUMERATION_BUDGET};
pub use problem::{build_problem, ProblemUser, RerankProblem, Selection};

use crate::error::{Error, Result};
use crate::metrics::{f1_at_k, group_report};
use crate::types::{candidate_order, Candidate, Group, GroupAssignment, GroupReport, MetricName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Oracle,
    #[default]
    Exact,
    Lagrangian,
}

impl FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(SolverMode::Oracle),
            "exact" => Ok(SolverMode::Exact),
            "lagrangian" => Ok(SolverMode::Lagrangian),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianConfig {
    pub max_bisection_iters: usize,
    pub multiplier_bounds: (f64, f64),
    pub max_repair_swaps: usize,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        LagrangianConfig {
            max_bisection_iters: 64,
            multiplier_bounds: (-1e6, 1e6),
            max_repair_swaps: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Slack accepted on `|constraint| <= epsilon`.
    pub feasibility_tol: f64,
    /// Relative optimality gap at which branch-and-bound stops.
    pub gap_tol: f64,
    /// Seconds.
    pub time_limit: f64,
    pub lagrangian: LagrangianConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: SolverMode::Exact,
            feasibility_tol: 1e-9,
            gap_tol: 1e-6,
            time_limit: 300.0,
            lagrangian: LagrangianConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_mode(mode: SolverMode) -> Self {
        SolverConfig {
            mode,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.feasibility_tol > 0.0 && self.gap_tol > 0.0 && self.time_limit > 0.0) {
            return Err(Error::Config("solver tolerances and time limit must be positive".into()));
        }
        let (lo, hi) = self.lagrangian.multiplier_bounds;
        if !(lo <= 0.0 && hi >= 0.0) {
            return Err(Error::Config("multiplier bounds must bracket 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Oracle,
    Exact,
    Lagrangian,
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Proven optimal within the gap tolerance.
    Optimal,
    /// Feasible, optimality not proven (heuristic or time limit).
    Feasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalList {
    pub user_id: String,
    pub items: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankSolution {
    pub selection: Selection,
    pub final_lists: Vec<FinalList>,
    pub objective_value: f64,
    /// `sum c_ij W_ij` as tracked by the program.
    pub constraint_value: f64,
    /// Gap in mean F1@K recomputed from the final lists.
    pub achieved_ugf: f64,
    pub epsilon: f64,
    pub solver: SolverKind,
    pub status: SolveStatus,
    pub optimality_gap: f64,
    /// Proven upper bound on the optimum: the best open node of the exact
    /// search, or the smallest Lagrangian dual value seen by the heuristic.
    pub dual_bound: Option<f64>,
    /// Multiplier of the root relaxation (exact) or of the returned
    /// selection (Lagrangian).
    pub lambda: Option<f64>,
    pub nodes: u64,
    pub wall_time: f64,
}

impl RerankSolution {
    /// Item ids per user, in final order.
    pub fn lists(&self) -> BTreeMap<String, Vec<String>> {
        self.final_lists
            .iter()
            .map(|l| (l.user_id.clone(), l.items.iter().map(|c| c.item_id.clone()).collect()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infeasibility {
    pub solver: SolverKind,
    pub epsilon: f64,
    /// Smallest `|constraint|` the solver found (a lower bound when certified
    /// by the relaxation).
    pub min_abs_constraint: f64,
    /// True when infeasibility is proven rather than suspected.
    pub certified: bool,
    pub nodes: u64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Solved(RerankSolution),
    Infeasible(Infeasibility),
}

impl SolveOutcome {
    pub fn solution(&self) -> Option<&RerankSolution> {
        match self {
            SolveOutcome::Solved(s) => Some(s),
            SolveOutcome::Infeasible(_) => None,
        }
    }

    pub fn into_solution(self) -> Option<RerankSolution> {
        match self {
            SolveOutcome::Solved(s) => Some(s),
            SolveOutcome::Infeasible(_) => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Solved(_))
    }
}

/// Groups of the evaluated users of `p`.
pub fn problem_groups(p: &RerankProblem) -> Result<GroupAssignment> {
    let mut adv = BTreeSet::new();
    let mut dis = BTreeSet::new();
    for u in p.users().iter().filter(|u| u.is_evaluated()) {
        match u.group {
            Group::Advantaged => adv.insert(u.user_id.clone()),
            Group::Disadvantaged => dis.insert(u.user_id.clone()),
        };
    }
    GroupAssignment::new(adv, dis, None, None)
}

/// F1@K group report of per-user lists over the evaluated users of `p`.
pub fn f1_report(p: &RerankProblem, lists: &[FinalList]) -> Result<GroupReport> {
    let mut per_user = BTreeMap::new();
    for (u, l) in p.users().iter().zip(lists) {
        if !u.is_evaluated() {
            continue;
        }
        let relevant: std::collections::HashSet<&str> = u
            .candidates
            .iter()
            .filter(|c| c.relevant)
            .map(|c| c.item_id.as_str())
            .collect();
        let items: Vec<&str> = l.items.iter().map(|c| c.item_id.as_str()).collect();
        per_user.insert(u.user_id.clone(), f1_at_k(&items, &relevant, p.k(), u.n_relevant_total)?);
    }
    group_report(&per_user, &problem_groups(p)?, MetricName::F1)
}

/// Orders each user's selected candidates by original score and recomputes
/// objective, constraint value and achieved gap from scratch.
pub fn finalize(p: &RerankProblem, sel: &Selection, solver: SolverKind) -> Result<RerankSolution> {
    p.check_cardinality(sel)?;
    let final_lists: Vec<FinalList> = p
        .users()
        .iter()
        .zip(sel)
        .map(|(u, slots)| {
            let mut items: Vec<Candidate> = slots.iter().map(|&j| u.candidates[j].clone()).collect();
            items.sort_by(candidate_order);
            FinalList {
                user_id: u.user_id.clone(),
                items,
            }
        })
        .collect();
    let mut selection = sel.clone();
    for s in &mut selection {
        s.sort_unstable();
    }
    let achieved_ugf = f1_report(p, &final_lists)?.ugf;
    Ok(RerankSolution {
        objective_value: p.selection_objective(&selection),
        constraint_value: p.constraint_value(&selection),
        selection,
        final_lists,
        achieved_ugf,
        epsilon: p.epsilon(),
        solver,
        status: SolveStatus::Optimal,
        optimality_gap: 0.0,
        dual_bound: None,
        lambda: None,
        nodes: 0,
        wall_time: 0.0,
    })
}

/// The unconstrained optimum: every user's top K.
pub fn passthrough(p: &RerankProblem) -> Result<RerankSolution> {
    let mut s = finalize(p, &p.top_k_selection(), SolverKind::Passthrough)?;
    s.dual_bound = Some(s.objective_value);
    s.lambda = Some(0.0);
    Ok(s)
}

/// Solves with the solver named in `cfg.mode`.
pub fn solve(p: &RerankProblem, cfg: &SolverConfig) -> Result<SolveOutcome> {
    match cfg.mode {
        SolverMode::Oracle => solve_oracle(p, cfg),
        SolverMode::Exact => solve_exact(p, cfg),
        SolverMode::Lagrangian => solve_lagrangian(p, cfg),
    }
}

/// `factor` times the baseline gap.
pub fn epsilon_from_baseline(report: &GroupReport, factor: f64) -> Result<f64> {
    if factor.is_nan() || factor < 0.0 {
        return Err(Error::Config(format!("epsilon factor {factor} must be non-negative")));
    }
    if report.ugf.is_nan() || report.ugf < 0.0 {
        return Err(Error::InvalidData(format!("baseline gap {} is negative", report.ugf)));
    }
    Ok(factor * report.ugf)
}

/// Writes `user_id,rank,item_id,score` rows.
pub fn write_solution<W: Write>(writer: W, sol: &RerankSolution) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "rank", "item_id", "score"])?;
    for l in &sol.final_lists {
        for (r, c) in l.items.iter().enumerate() {
            w.write_record([l.user_id.as_str(), &(r + 1).to_string(), &c.item_id, &c.score.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<solution>", e))?;
    Ok(())
}

/// Reads a solution file back into per-user item lists.
pub fn read_solution_lists<R: std::io::Read>(reader: R, path: &std::path::Path) -> Result<BTreeMap<String, Vec<String>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 3 {
            return Err(Error::parse(path, line, "expected user_id,rank,item_id,score"));
        }
        let rank: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad rank `{}`", &rec[1])))?;
        rows.entry(rec[0].to_string()).or_default().push((rank, rec[2].to_string()));
    }
    Ok(rows
        .into_iter()
        .map(|(u, mut v)| {
            v.sort();
            (u, v.into_iter().map(|(_, i)| i).collect())
        })
        .collect())
}

/// Solver diagnostics; `ugf`, `epsilon` and `min_abs_constraint` in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub status: String,
    pub solver: SolverKind,
    pub objective: Option<f64>,
    pub ugf: Option<f64>,
    pub epsilon: Option<f64>,
    pub gap: Option<f64>,
    pub dual_bound: Option<f64>,
    pub lambda: Option<f64>,
    pub nodes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
    pub min_abs_constraint: Option<f64>,
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Diagnostics {
    /// `with_timing = false` leaves `wall_time` out so that repeated runs
    /// produce identical files.
    pub fn from_outcome(outcome: &SolveOutcome, with_timing: bool) -> Self {
        match outcome {
            SolveOutcome::Solved(s) => Diagnostics {
                status: match s.status {
                    SolveStatus::Optimal => "optimal".into(),
                    SolveStatus::Feasible => "feasible".into(),
                },
                solver: s.solver,
                objective: Some(s.objective_value),
                ugf: Some(s.achieved_ugf * 100.0),
                epsilon: finite_or_none(s.epsilon * 100.0),
                gap: Some(s.optimality_gap),
                dual_bound: s.dual_bound,
                lambda: s.lambda,
                nodes: s.nodes,
                wall_time: with_timing.then_some(s.wall_time),
                min_abs_constraint: None,
            },
            SolveOutcome::Infeasible(inf) => Diagnostics {
                status: if inf.certified {
                    "infeasible".into()
                } else {
                    "infeasible_suspected".into()
                },
                solver: inf.solver,
                objective: None,
                ugf: None,
                epsilon: finite_or_none(inf.epsilon * 100.0),
                gap: None,
                dual_bound: None,
                lambda: None,
                nodes: inf.nodes,
                wall_time: with_timing.then_some(inf.wall_time),
                min_abs_constraint: finite_or_none(inf.min_abs_constraint * 100.0),
            },
        }
    }
}
