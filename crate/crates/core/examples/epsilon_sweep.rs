// Rerank one synthetic run over a grid of fairness bounds.
//
//     cargo run --release --example epsilon_sweep -- out_dir
//
// Writes `sweep.csv` and a two-panel `sweep.svg` (overall, advantaged and
// disadvantaged curves for F1@10 and NDCG@10).

use std::fs::File;

use ugf_rerank::pipeline::{prepare, sweep, sweep_svg, write_sweep, EpsilonSpec, PipelineConfig};
use ugf_rerank::synthetic::{generate, SyntheticConfig};
use ugf_rerank::SolverConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sweep_out".into()));
    std::fs::create_dir_all(&out)?;

    let (log, _) = generate(&SyntheticConfig::default())?;
    let prepared = prepare(&log, &PipelineConfig::seeded(0))?;
    let mut grid = vec![EpsilonSpec::Absolute(f64::INFINITY)];
    grid.extend([1.0, 0.75, 0.5, 0.25, 0.1, 0.0].map(EpsilonSpec::Factor));

    let (before, rows) = sweep(&prepared.candidates, &prepared.groups, 10, &grid, &SolverConfig::default())?;
    println!("baseline F1@10 gap {:.2}%", before.f1.ugf * 100.0);
    for r in &rows {
        match &r.reports {
            Some(m) => println!(
                "eps {:>6.2}%: F1 overall {:.2} adv {:.2} disadv {:.2}",
                r.epsilon * 100.0,
                m.f1.overall * 100.0,
                m.f1.advantaged * 100.0,
                m.f1.disadvantaged * 100.0
            ),
            None => println!("eps {:>6.2}%: {}", r.epsilon * 100.0, r.status),
        }
    }
    write_sweep(File::create(out.join("sweep.csv"))?, &rows)?;
    std::fs::write(out.join("sweep.svg"), sweep_svg(&rows, 10))?;
    println!("wrote {}", out.display());
    Ok(())
}
