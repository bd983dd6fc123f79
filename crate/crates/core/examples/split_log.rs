// Parse an interactions CSV and split each user's history in time order.
//
//     cargo run --example split_log -- path/to/interactions.csv
//
// Without an argument a small inline log is used.

use std::io::Write;

use ugf_rerank::ingest::{parse_interactions, split_dataset, split_sizes, LogStats, SplitConfig};

const INLINE: &str = "\
user_id,item_id,rating,timestamp,price
alice,book,5,100,12.5
alice,lamp,4,200,30
alice,mug,5,300,8
alice,pen,3,400,2
alice,tea,4,500,6
alice,desk,5,600,120
alice,chair,4,700,80
alice,rug,4,800,45
alice,vase,5,900,22
alice,clock,3,1000,19
bob,book,4,150,12.5
bob,tea,5,250,6
bob,mug,4,350,8
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = match std::env::args().nth(1) {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let mut f = tempfile_path()?;
            f.1.write_all(INLINE.as_bytes())?;
            f.0
        }
    };
    let log = parse_interactions(&path, None)?;
    let stats = LogStats::of(&log);
    println!("{} actions / {} users / {} items, sparsity {}%", stats.actions, stats.users, stats.items, stats.sparsity);

    for n in [3, 10, 12, 120] {
        let (train, val, test) = split_sizes(n, 0.1, 0.1);
        println!("a user with {n:>3} interactions -> train {train:>3}, validation {val:>2}, test {test:>2}");
    }

    let split = split_dataset(&log, &SplitConfig::default())?;
    split.check_against(&log)?;
    for (name, part) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        let first: Vec<String> = part
            .interactions()
            .iter()
            .take(3)
            .map(|x| format!("{}:{}", x.user_id, x.item_id))
            .collect();
        println!("{name:>10}: {:>5} rows, e.g. {}", part.len(), first.join(" "));
    }
    Ok(())
}

fn tempfile_path() -> std::io::Result<(std::path::PathBuf, std::fs::File)> {
    let path = std::env::temp_dir().join(format!("ugf-split-example-{}.csv", std::process::id()));
    let f = std::fs::File::create(&path)?;
    Ok((path, f))
}
