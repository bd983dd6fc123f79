// Synthetic log to fair top-10 lists, over several seeds.
//
// Each seed draws a 1000-user / 500-item log whose top 5% of users have ten
// times the interactions of everyone else, trains BPR, samples 100 negatives
// per test user, and reranks with epsilon set to half the baseline F1 gap.
//
//     cargo run --release --example end_to_end -- 5

use ugf_rerank::pipeline::{prepare, rerank_candidates, EpsilonSpec, PipelineConfig};
use ugf_rerank::synthetic::{generate, SyntheticConfig};
use ugf_rerank::SolverConfig;

fn main() -> ugf_rerank::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    println!("seed  F1 before (all/adv/dis)   F1 after (all/adv/dis)    UGF before -> after  eps");
    for seed in 0..seeds {
        let (log, _) = generate(&SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        })?;
        let prepared = prepare(&log, &PipelineConfig::seeded(seed))?;
        let run = rerank_candidates(
            &prepared.candidates,
            &prepared.groups,
            10,
            EpsilonSpec::Factor(0.5),
            &SolverConfig::default(),
        )?;
        let b = &run.before.f1;
        let Some(after) = &run.after else {
            println!("{seed:>4}  infeasible at epsilon {:.4}", run.epsilon);
            continue;
        };
        let a = &after.f1;
        println!(
            "{seed:>4}  {:6.2} {:6.2} {:6.2}      {:6.2} {:6.2} {:6.2}      {:6.2} -> {:5.2}     {:5.2}   (best epoch {})",
            100.0 * b.overall,
            100.0 * b.advantaged,
            100.0 * b.disadvantaged,
            100.0 * a.overall,
            100.0 * a.advantaged,
            100.0 * a.disadvantaged,
            100.0 * b.ugf,
            100.0 * a.ugf,
            100.0 * run.epsilon,
            prepared.training.best_epoch,
        );
    }
    Ok(())
}
