// The three solvers side by side on one small random instance.
//
// The oracle enumerates every selection, the exact solver runs branch and
// bound, and the Lagrangian heuristic bisects on the multiplier. The exact
// and oracle objectives agree; the heuristic is at most the exact value
// and its dual bound is at least it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ugf_rerank::rerank::{build_problem, solve, SolverMode};
use ugf_rerank::{Candidate, CandidateSet, GroupAssignment, SolverConfig};

fn main() -> ugf_rerank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cands = Vec::new();
    for u in 0..4 {
        let items: Vec<Candidate> = (0..6)
            .map(|j| Candidate::new(format!("item{j}"), rng.random::<f64>(), rng.random_bool(0.4)))
            .collect();
        let t = items.iter().filter(|c| c.relevant).count().max(1);
        cands.push(CandidateSet::new(format!("user{u}"), items, t)?);
    }
    let groups = GroupAssignment::new(
        ["user0".to_string()].into(),
        ["user1", "user2", "user3"].map(String::from).into(),
        None,
        None,
    )?;

    let problem = build_problem(&cands, &groups, 2, 0.05)?;
    println!("{} selections in the search space\n", problem.search_space());
    for mode in [SolverMode::Oracle, SolverMode::Exact, SolverMode::Lagrangian] {
        match solve(&problem, &SolverConfig::with_mode(mode))?.into_solution() {
            Some(s) => println!(
                "{mode:?}: objective {:.6}, gap {:.3}, dual bound {}, achieved F1 gap {:.4}, nodes {}",
                s.objective_value,
                s.optimality_gap,
                s.dual_bound.map_or("-".into(), |b| format!("{b:.6}")),
                s.achieved_ugf,
                s.nodes
            ),
            None => println!("{mode:?}: infeasible"),
        }
    }

    println!("\nLP form of the same program:\n");
    for line in problem.to_lp().lines().take(8) {
        println!("{line}");
    }
    println!("...");
    Ok(())
}
