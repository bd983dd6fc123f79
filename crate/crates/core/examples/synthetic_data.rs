// Writes a synthetic interactions CSV with a heavy-user head.
//
//     cargo run --example synthetic_data -- data/interactions.csv [seed]
//
// The file has `user_id,item_id,rating,timestamp,price` columns and feeds
// straight into `ugf-rerank split --input`.

use std::fs::File;
use std::io::BufWriter;

use ugf_rerank::ingest::{write_interactions, LogStats};
use ugf_rerank::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "interactions.csv".into());
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let cfg = SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    };
    let (log, heavy) = generate(&cfg)?;
    if let Some(dir) = std::path::Path::new(&path).parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_interactions(BufWriter::new(File::create(&path)?), &log)?;

    let stats = LogStats::of(&log);
    println!(
        "{path}: {} actions, {} users ({} heavy), {} items, sparsity {:.2}%",
        stats.actions,
        stats.users,
        heavy.len(),
        stats.items,
        stats.sparsity
    );
    Ok(())
}
