// Advantaged and disadvantaged users under the three activity criteria.
//
// The advantaged group is the top 5% of training users by interaction
// count, total spend, or most expensive purchase. The three criteria pick
// overlapping but different users.

use ugf_rerank::grouping::{activity_score, assign_groups, distribution_report, GroupingConfig};
use ugf_rerank::ingest::{split_dataset, SplitConfig};
use ugf_rerank::synthetic::{generate, SyntheticConfig};
use ugf_rerank::GroupingMethod;

fn main() -> ugf_rerank::Result<()> {
    let (log, heavy) = generate(&SyntheticConfig::default())?;
    let split = split_dataset(&log, &SplitConfig::default())?;

    let methods = [GroupingMethod::Interactions, GroupingMethod::TotalConsumption, GroupingMethod::MaxPrice];
    let mut sets = Vec::new();
    for method in methods {
        let groups = assign_groups(&split.train, &GroupingConfig { method, top_fraction: 0.05 })?;
        let top = groups.advantaged().iter().next().unwrap();
        println!(
            "{:>17}: |Z1| = {}, |Z2| = {}, e.g. {top} with score {:.2}",
            method.to_string(),
            groups.advantaged().len(),
            groups.disadvantaged().len(),
            activity_score(&split.train, top, method)?
        );
        sets.push(groups.advantaged().clone());
    }
    let recovered = heavy.iter().filter(|u| sets[0].contains(*u)).count();
    println!("interaction grouping recovers {recovered} of {} heavy users", heavy.len());
    println!(
        "overlap interactions/consumption: {}, interactions/max price: {}",
        sets[0].intersection(&sets[1]).count(),
        sets[0].intersection(&sets[2]).count()
    );

    println!("\nshare of users with at least t training interactions");
    for (t, share) in distribution_report(&split.train, &[5.0, 10.0, 20.0, 50.0, 90.0], GroupingMethod::Interactions) {
        println!("  t = {t:>4}: {:5.1}%", share * 100.0);
    }
    Ok(())
}
