use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::f1_linear_coeffs;
use crate::types::{Candidate, CandidateSet, Group, GroupAssignment};

/// One user's block of the 0-1 program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemUser {
    pub user_id: String,
    pub group: Group,
    /// Candidates in canonical order (score descending, item id ascending).
    pub candidates: Vec<Candidate>,
    pub n_relevant_total: usize,
    /// Signed weight of one relevant selected slot in the fairness constraint:
    /// `±2 / ((K + T) |Z_g|)`, `+` for the advantaged group. Zero for users
    /// that have no relevant items and so are not evaluated.
    pub coeff: f64,
}

impl ProblemUser {
    pub fn is_evaluated(&self) -> bool {
        self.n_relevant_total > 0
    }

    /// Constraint coefficient of candidate `slot`.
    pub fn fairness_coeff(&self, slot: usize) -> f64 {
        if self.candidates[slot].relevant {
            self.coeff
        } else {
            0.0
        }
    }
}

/// Maximize the summed scores of exactly `k` candidates per user subject to
/// `-epsilon <= sum c_ij W_ij <= epsilon`, where the constrained sum equals
/// the advantaged-minus-disadvantaged gap in mean F1@K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankProblem {
    users: Vec<ProblemUser>,
    k: usize,
    epsilon: f64,
    n_advantaged: usize,
    n_disadvantaged: usize,
}

/// Per-user selected candidate slots, each sorted ascending.
pub type Selection = Vec<Vec<usize>>;

/// Assembles the program. Group sizes count only users with at least one
/// relevant item, so the constrained sum reproduces the reported gap.
pub fn build_problem(
    cands: &[CandidateSet],
    groups: &GroupAssignment,
    k: usize,
    epsilon: f64,
) -> Result<RerankProblem> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::Config(format!("epsilon {epsilon} must be non-negative")));
    }
    let short: Vec<String> = cands
        .iter()
        .filter(|c| c.len() < k)
        .map(|c| format!("{} ({} candidates)", c.user_id(), c.len()))
        .collect();
    if !short.is_empty() {
        return Err(Error::InvalidData(format!(
            "{} users have fewer than K = {k} candidates: {}",
            short.len(),
            short.iter().take(10).cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut tagged = Vec::with_capacity(cands.len());
    for c in cands {
        let g = groups
            .group_of(c.user_id())
            .ok_or_else(|| Error::UnknownId(format!("user {} has no group", c.user_id())))?;
        tagged.push((c, g));
    }
    let count = |g: Group| {
        tagged
            .iter()
            .filter(|(c, gg)| *gg == g && c.n_relevant_total() > 0)
            .count()
    };
    let (n_adv, n_dis) = (count(Group::Advantaged), count(Group::Disadvantaged));
    if n_adv == 0 || n_dis == 0 {
        return Err(Error::InvalidData(format!(
            "both groups need evaluated users (advantaged {n_adv}, disadvantaged {n_dis})"
        )));
    }
    let users = tagged
        .into_iter()
        .map(|(c, g)| {
            let (sign, size) = match g {
                Group::Advantaged => (1.0, n_adv),
                Group::Disadvantaged => (-1.0, n_dis),
            };
            let coeff = if c.n_relevant_total() > 0 {
                // one relevant coefficient from the F1 linearization, scaled by group
                let a = f1_linear_coeffs(c, k)
                    .into_iter()
                    .find(|&x| x > 0.0)
                    .unwrap_or(2.0 / (k + c.n_relevant_total()) as f64);
                sign * a / size as f64
            } else {
                0.0
            };
            ProblemUser {
                user_id: c.user_id().to_string(),
                group: g,
                candidates: c.candidates().to_vec(),
                n_relevant_total: c.n_relevant_total(),
                coeff,
            }
        })
        .collect();
    Ok(RerankProblem {
        users,
        k,
        epsilon,
        n_advantaged: n_adv,
        n_disadvantaged: n_dis,
    })
}

impl RerankProblem {
    pub fn users(&self) -> &[ProblemUser] {
        &self.users
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_unconstrained(&self) -> bool {
        self.epsilon.is_infinite()
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        (self.n_advantaged, self.n_disadvantaged)
    }

    /// Same problem with another bound.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<RerankProblem> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::Config(format!("epsilon {epsilon} must be non-negative")));
        }
        Ok(RerankProblem {
            epsilon,
            ..self.clone()
        })
    }

    /// Score of slot `j` of user `i`.
    pub fn objective_coeff(&self, i: usize, j: usize) -> f64 {
        self.users[i].candidates[j].score
    }

    pub fn fairness_coeff(&self, i: usize, j: usize) -> f64 {
        self.users[i].fairness_coeff(j)
    }

    /// The unconstrained optimum: each user's first `k` slots.
    pub fn top_k_selection(&self) -> Selection {
        self.users.iter().map(|_| (0..self.k).collect()).collect()
    }

    pub fn selection_objective(&self, sel: &Selection) -> f64 {
        sel.iter()
            .zip(&self.users)
            .map(|(slots, u)| slots.iter().map(|&j| u.candidates[j].score).sum::<f64>())
            .sum()
    }

    /// The constrained sum `sum_i coeff_i * h_i`, `h_i` being the number of
    /// relevant selected slots of user `i`.
    pub fn constraint_value(&self, sel: &Selection) -> f64 {
        sel.iter()
            .zip(&self.users)
            .map(|(slots, u)| u.coeff * slots.iter().filter(|&&j| u.candidates[j].relevant).count() as f64)
            .sum()
    }

    pub fn is_feasible_value(&self, d: f64, tol: f64) -> bool {
        d.abs() <= self.epsilon + tol
    }

    /// Checks that `sel` picks exactly `k` distinct in-range slots per user.
    pub fn check_cardinality(&self, sel: &Selection) -> Result<()> {
        if sel.len() != self.users.len() {
            return Err(Error::Internal(format!(
                "selection covers {} users, problem has {}",
                sel.len(),
                self.users.len()
            )));
        }
        for (slots, u) in sel.iter().zip(&self.users) {
            let mut sorted = slots.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.k || slots.len() != self.k {
                return Err(Error::Internal(format!(
                    "user {} has {} selected slots, expected {}",
                    u.user_id,
                    slots.len(),
                    self.k
                )));
            }
            if sorted.last().is_some_and(|&j| j >= u.candidates.len()) {
                return Err(Error::Internal(format!("slot out of range for user {}", u.user_id)));
            }
        }
        Ok(())
    }

    /// Number of complete selections, `prod_i C(N_i, k)`, as a float.
    pub fn search_space(&self) -> f64 {
        self.users
            .iter()
            .map(|u| binomial(u.candidates.len(), self.k))
            .product()
    }

    /// Writes the program in CPLEX LP syntax. Variable `x_i_j` is slot `j`
    /// of user `i` in problem order; a comment block maps them to ids.
    pub fn to_lp(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\ fairness-constrained top-{} re-ranking", self.k);
        for (i, u) in self.users.iter().enumerate() {
            let _ = writeln!(s, "\\ user {i} = {} ({})", u.user_id, u.group.label());
        }
        let _ = writeln!(s, "Maximize");
        let mut terms = Vec::new();
        for (i, u) in self.users.iter().enumerate() {
            for (j, c) in u.candidates.iter().enumerate() {
                terms.push(format!("{} x_{i}_{j}", c.score));
            }
        }
        let _ = writeln!(s, " obj: {}", join_terms(&terms));
        let _ = writeln!(s, "Subject To");
        for (i, u) in self.users.iter().enumerate() {
            let vars: Vec<String> = (0..u.candidates.len()).map(|j| format!("1 x_{i}_{j}")).collect();
            let _ = writeln!(s, " card_{i}: {} = {}", join_terms(&vars), self.k);
        }
        if !self.is_unconstrained() {
            let mut fair = Vec::new();
            for (i, u) in self.users.iter().enumerate() {
                for j in 0..u.candidates.len() {
                    let c = u.fairness_coeff(j);
                    if c != 0.0 {
                        fair.push(format!("{c} x_{i}_{j}"));
                    }
                }
            }
            if fair.is_empty() {
                fair.push("0 x_0_0".into());
            }
            let body = join_terms(&fair);
            let _ = writeln!(s, " ugf_hi: {body} <= {}", self.epsilon);
            let _ = writeln!(s, " ugf_lo: {body} >= {}", -self.epsilon);
        }
        let _ = writeln!(s, "Binary");
        for (i, u) in self.users.iter().enumerate() {
            for j in 0..u.candidates.len() {
                let _ = writeln!(s, " x_{i}_{j}");
            }
        }
        let _ = writeln!(s, "End");
        s
    }
}

fn join_terms(terms: &[String]) -> String {
    let mut out = String::new();
    for (n, t) in terms.iter().enumerate() {
        if n == 0 {
            out.push_str(t);
        } else if let Some(neg) = t.strip_prefix('-') {
            out.push_str(" - ");
            out.push_str(neg);
        } else {
            out.push_str(" + ");
            out.push_str(t);
        }
    }
    out
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
