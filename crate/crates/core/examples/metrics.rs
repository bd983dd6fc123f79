// F1@K, NDCG@K and the group gap on hand-made lists.

use std::collections::{BTreeMap, HashSet};

use ugf_rerank::metrics::{f1_at_k, group_report, ndcg_at_k};
use ugf_rerank::{GroupAssignment, MetricName};

fn main() -> ugf_rerank::Result<()> {
    let relevant: HashSet<&str> = ["a", "c", "x"].into();
    let list = ["a", "b", "c", "d", "e"];
    println!("F1@5   = {:.4}", f1_at_k(&list, &relevant, 5, relevant.len())?);
    println!("NDCG@5 = {:.4}", ndcg_at_k(&list, &relevant, 5)?);

    // per-user F1 values of two advantaged and three disadvantaged users
    let f1: BTreeMap<String, f64> = [("a1", 0.40), ("a2", 0.32), ("d1", 0.10), ("d2", 0.15), ("d3", 0.125)]
        .into_iter()
        .map(|(u, v)| (u.to_string(), v))
        .collect();
    let groups = GroupAssignment::new(
        ["a1", "a2"].map(String::from).into(),
        ["d1", "d2", "d3"].map(String::from).into(),
        None,
        None,
    )?;
    let r = group_report(&f1, &groups, MetricName::F1)?;
    println!(
        "overall {:.2}%, adv {:.2}%, disadv {:.2}%, gap {:.2}%",
        r.overall * 100.0,
        r.advantaged * 100.0,
        r.disadvantaged * 100.0,
        r.ugf * 100.0
    );
    Ok(())
}
