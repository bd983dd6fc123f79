//! Activity-based partition of users into advantaged and disadvantaged groups.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Group, GroupAssignment, GroupingMethod, InteractionLog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    pub method: GroupingMethod,
    pub top_fraction: f64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            method: GroupingMethod::Interactions,
            top_fraction: 0.05,
        }
    }
}

/// Interaction count, summed price or maximum price of a user's training
/// interactions. Missing prices count as 0.
pub fn activity_score(train: &InteractionLog, user: &str, method: GroupingMethod) -> Result<f64> {
    let h = train
        .user_handle(user)
        .filter(|&h| train.user_len(h) > 0)
        .ok_or_else(|| Error::UnknownId(format!("user {user} not in training data")))?;
    Ok(score_handle(train, h, method))
}

fn score_handle(train: &InteractionLog, user: u32, method: GroupingMethod) -> f64 {
    let prices = train.user_interactions(user).map(|x| x.price.unwrap_or(0.0));
    match method {
        GroupingMethod::Interactions => train.user_len(user) as f64,
        GroupingMethod::TotalConsumption => prices.sum(),
        GroupingMethod::MaxPrice => prices.fold(0.0, f64::max),
    }
}

/// Number of advantaged users for `n` users: `ceil(fraction * n)`.
pub fn advantaged_count(n: usize, top_fraction: f64) -> usize {
    // the epsilon keeps exact products such as 0.05 * 100 from rounding up
    ((top_fraction * n as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Ranks training users by activity (descending, ties by id ascending) and
/// puts the first `ceil(top_fraction * n)` into the advantaged group.
pub fn assign_groups(train: &InteractionLog, cfg: &GroupingConfig) -> Result<GroupAssignment> {
    if train.is_empty() {
        return Err(Error::InvalidData("cannot group users of an empty log".into()));
    }
    if !(cfg.top_fraction > 0.0 && cfg.top_fraction < 1.0) {
        return Err(Error::Config(format!("top_fraction {} not in (0, 1)", cfg.top_fraction)));
    }
    let mut ranked: Vec<(f64, &str)> = train
        .active_users()
        .map(|u| (score_handle(train, u, cfg.method), train.user_table().id(u)))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let n_adv = advantaged_count(ranked.len(), cfg.top_fraction).min(ranked.len());
    let advantaged: BTreeSet<String> = ranked[..n_adv].iter().map(|(_, u)| u.to_string()).collect();
    let disadvantaged: BTreeSet<String> = ranked[n_adv..].iter().map(|(_, u)| u.to_string()).collect();
    GroupAssignment::new(advantaged, disadvantaged, Some(cfg.method), Some(cfg.top_fraction))
}

/// Fraction of training users whose activity is at least each threshold.
pub fn distribution_report(
    train: &InteractionLog,
    thresholds: &[f64],
    method: GroupingMethod,
) -> Vec<(f64, f64)> {
    let scores: Vec<f64> = train
        .active_users()
        .map(|u| score_handle(train, u, method))
        .collect();
    let n = scores.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| (t, scores.iter().filter(|&&s| s >= t).count() as f64 / n))
        .collect()
}

/// Writes `user_id,group` rows with group `adv` or `disadv`.
pub fn write_groups<W: Write>(writer: W, groups: &GroupAssignment) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "group"])?;
    for (user, g) in groups.iter() {
        w.write_record([user, g.label()])?;
    }
    w.flush().map_err(|e| Error::io("<groups>", e))?;
    Ok(())
}

pub fn read_groups<R: Read>(reader: R, path: &Path) -> Result<GroupAssignment> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut seen: BTreeMap<String, Group> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::parse(path, line, "expected `user_id,group`"));
        }
        let g: Group = rec[1]
            .trim()
            .parse()
            .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        if seen.insert(rec[0].trim().to_string(), g).is_some() {
            return Err(Error::parse(path, line, format!("user {} listed twice", &rec[0])));
        }
    }
    let (adv, dis): (Vec<_>, Vec<_>) = seen.into_iter().partition(|(_, g)| *g == Group::Advantaged);
    GroupAssignment::new(
        adv.into_iter().map(|(u, _)| u).collect(),
        dis.into_iter().map(|(u, _)| u).collect(),
        None,
        None,
    )
}

pub fn save_groups(path: &Path, groups: &GroupAssignment) -> Result<()> {
    write_groups(std::fs::File::create(path).map_err(|e| Error::io(path, e))?, groups)
}

pub fn load_groups(path: &Path) -> Result<GroupAssignment> {
    read_groups(std::fs::File::open(path).map_err(|e| Error::io(path, e))?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Interaction;
    use proptest::prelude::*;

    fn log_with_counts(counts: &[usize]) -> InteractionLog {
        let mut rows = Vec::new();
        for (u, &c) in counts.iter().enumerate() {
            for t in 0..c {
                rows.push(Interaction::new(format!("u{u:03}"), format!("i{t}"), 5.0, t as i64));
            }
        }
        InteractionLog::new(rows).unwrap()
    }

    #[test]
    fn activity_scores() {
        let log = InteractionLog::new(vec![
            Interaction::new("a", "x", 5.0, 1).with_price(Some(3.0)),
            Interaction::new("a", "y", 5.0, 2).with_price(Some(5.5)),
            Interaction::new("a", "z", 5.0, 3),
            Interaction::new("b", "x", 5.0, 1),
        ])
        .unwrap();
        assert_eq!(activity_score(&log, "a", GroupingMethod::Interactions).unwrap(), 3.0);
        assert_eq!(activity_score(&log, "a", GroupingMethod::TotalConsumption).unwrap(), 8.5);
        assert_eq!(activity_score(&log, "a", GroupingMethod::MaxPrice).unwrap(), 5.5);
        assert_eq!(activity_score(&log, "b", GroupingMethod::MaxPrice).unwrap(), 0.0);
        assert!(activity_score(&log, "nobody", GroupingMethod::Interactions).is_err());
        assert!("most_clicks".parse::<GroupingMethod>().is_err());

        let seven = log_with_counts(&[7]);
        assert_eq!(activity_score(&seven, "u000", GroupingMethod::Interactions).unwrap(), 7.0);
    }

    #[test]
    fn ceil_sizes() {
        assert_eq!(advantaged_count(100, 0.05), 5);
        // ceil(0.05 * 14681) = ceil(734.05)
        assert_eq!(14681usize.div_ceil(20), 735);
        assert_eq!(advantaged_count(14681, 0.05), 735);
        assert_eq!(advantaged_count(3, 0.05), 1);
        for n in 1..5000usize {
            assert_eq!(advantaged_count(n, 0.05), n.div_ceil(20), "n = {n}");
        }
    }

    #[test]
    fn hundred_users() {
        let counts: Vec<usize> = (0..100).map(|u| 1 + u % 17).collect();
        let g = assign_groups(&log_with_counts(&counts), &GroupingConfig::default()).unwrap();
        assert_eq!(g.advantaged().len(), 5);
        assert_eq!(g.disadvantaged().len(), 95);
    }

    #[test]
    fn ties_go_to_smallest_ids() {
        let g = assign_groups(&log_with_counts(&[4; 100]), &GroupingConfig::default()).unwrap();
        let adv: Vec<_> = g.advantaged().iter().cloned().collect();
        assert_eq!(adv, ["u000", "u001", "u002", "u003", "u004"]);
    }

    #[test]
    fn distribution() {
        let log = log_with_counts(&[9; 10]);
        let rep = distribution_report(&log, &[0.0, 5.0, 10.0], GroupingMethod::Interactions);
        assert_eq!(rep, vec![(0.0, 1.0), (5.0, 1.0), (10.0, 0.0)]);
    }

    #[test]
    fn group_file_round_trip() {
        let g = assign_groups(&log_with_counts(&[1, 2, 3, 4, 5]), &GroupingConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_groups(&mut buf, &g).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user_id,group\nu000,disadv\n"));
        let back = read_groups(buf.as_slice(), Path::new("g.csv")).unwrap();
        assert_eq!(back.advantaged(), g.advantaged());
        assert_eq!(back.disadvantaged(), g.disadvantaged());
        assert!(read_groups("user_id,group\nx,rich\n".as_bytes(), Path::new("g.csv")).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_monotonicity(counts in prop::collection::vec(1usize..20, 1..60), f1 in 0.01f64..0.99, f2 in 0.01f64..0.99) {
            let log = log_with_counts(&counts);
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let cfg = |f| GroupingConfig { method: GroupingMethod::Interactions, top_fraction: f };
            let small = assign_groups(&log, &cfg(lo)).unwrap();
            let large = assign_groups(&log, &cfg(hi)).unwrap();
            prop_assert_eq!(small.len(), counts.len());
            prop_assert!(small.advantaged().is_disjoint(small.disadvantaged()));
            prop_assert_eq!(small.advantaged().len(), advantaged_count(counts.len(), lo).min(counts.len()));
            prop_assert!(small.advantaged().is_subset(large.advantaged()));
        }

        #[test]
        fn distribution_is_non_increasing(counts in prop::collection::vec(1usize..30, 1..40), mut ts in prop::collection::vec(0.0f64..40.0, 1..10)) {
            ts.sort_by(f64::total_cmp);
            let rep = distribution_report(&log_with_counts(&counts), &ts, GroupingMethod::Interactions);
            for w in rep.windows(2) {
                prop_assert!(w[0].1 >= w[1].1);
            }
        }
    }
}
