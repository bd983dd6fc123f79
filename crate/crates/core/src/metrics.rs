//! Top-K quality metrics and the group fairness gap between user groups.
//!
//! Values are fractions in [0, 1] internally; [`ReportJson`] renders them in
//! percent for external reports.

use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CandidateSet, Group, GroupAssignment, GroupReport, MetricName};

fn check_k(k: usize, len: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidData("K must be at least 1".into()));
    }
    if len < k {
        return Err(Error::InvalidData(format!(
            "recommendation list has {len} items, fewer than K = {k}"
        )));
    }
    Ok(())
}

/// F1@K with `h` hits: `2h / (K + T)`.
pub fn f1_from_hits(hits: usize, k: usize, total_relevant: usize) -> Result<f64> {
    if total_relevant == 0 {
        return Err(Error::UndefinedMetric("F1@K with no relevant items".into()));
    }
    Ok(2.0 * hits as f64 / (k + total_relevant) as f64)
}

/// F1@K of `reclist`; `total_relevant` is the user's ground-truth size T,
/// which may exceed `relevant.len()` when not every positive was offered.
pub fn f1_at_k<T: Eq + Hash>(
    reclist: &[T],
    relevant: &HashSet<T>,
    k: usize,
    total_relevant: usize,
) -> Result<f64> {
    check_k(k, reclist.len())?;
    let hits = reclist[..k].iter().filter(|x| relevant.contains(x)).count();
    f1_from_hits(hits, k, total_relevant)
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 2) as f64).log2()
}

/// NDCG@K from per-position relevance flags and the number of relevant items.
pub fn ndcg_from_flags(flags: &[bool], k: usize, total_relevant: usize) -> Result<f64> {
    if total_relevant == 0 {
        return Err(Error::UndefinedMetric("NDCG@K with no relevant items".into()));
    }
    check_k(k, flags.len())?;
    let dcg: f64 = flags[..k]
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(p, _)| discount(p))
        .sum();
    let idcg: f64 = (0..total_relevant.min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

/// NDCG@K with binary gains and `log2(p + 1)` discounting.
pub fn ndcg_at_k<T: Eq + Hash>(reclist: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    let flags: Vec<bool> = reclist.iter().map(|x| relevant.contains(x)).collect();
    ndcg_from_flags(&flags, k, relevant.len())
}

/// Per-candidate coefficients `2 r_ij / (K + T_i)`.
///
/// For any selection of exactly `k` candidates the sum of the selected
/// coefficients equals that selection's F1@K.
pub fn f1_linear_coeffs(cand: &CandidateSet, k: usize) -> Vec<f64> {
    let a = 2.0 / (k + cand.n_relevant_total()) as f64;
    cand.candidates()
        .iter()
        .map(|c| if c.relevant { a } else { 0.0 })
        .collect()
}

/// Means per group and overall, and their absolute gap.
pub fn group_report(
    per_user: &BTreeMap<String, f64>,
    groups: &GroupAssignment,
    metric: MetricName,
) -> Result<GroupReport> {
    let (mut sum_adv, mut n_adv) = (0.0, 0usize);
    let (mut sum_dis, mut n_dis) = (0.0, 0usize);
    for (user, &value) in per_user {
        match groups.group_of(user) {
            Some(Group::Advantaged) => {
                sum_adv += value;
                n_adv += 1;
            }
            Some(Group::Disadvantaged) => {
                sum_dis += value;
                n_dis += 1;
            }
            None => return Err(Error::UnknownId(format!("user {user} has no group"))),
        }
    }
    if n_adv == 0 || n_dis == 0 {
        return Err(Error::InvalidData(format!(
            "empty group among evaluated users (advantaged {n_adv}, disadvantaged {n_dis})"
        )));
    }
    let advantaged = sum_adv / n_adv as f64;
    let disadvantaged = sum_dis / n_dis as f64;
    Ok(GroupReport {
        metric,
        overall: (sum_adv + sum_dis) / (n_adv + n_dis) as f64,
        advantaged,
        disadvantaged,
        ugf: (advantaged - disadvantaged).abs(),
        n_advantaged: n_adv,
        n_disadvantaged: n_dis,
    })
}

/// Per-user F1@K and NDCG@K of a set of recommendation lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserMetrics {
    pub f1: BTreeMap<String, f64>,
    pub ndcg: BTreeMap<String, f64>,
}

/// Scores `lists` against the relevance labels in `cands`. Users with no
/// relevant items are skipped; every other user must have a list.
pub fn per_user_metrics(
    cands: &[CandidateSet],
    lists: &BTreeMap<String, Vec<String>>,
    k: usize,
) -> Result<UserMetrics> {
    let mut out = UserMetrics::default();
    for cs in cands {
        let t = cs.n_relevant_total();
        if t == 0 {
            continue;
        }
        let list = lists
            .get(cs.user_id())
            .ok_or_else(|| Error::UnknownId(format!("no list for user {}", cs.user_id())))?;
        let relevant = cs.relevant_items();
        let flags: Vec<bool> = list.iter().map(|x| relevant.contains(x.as_str())).collect();
        check_k(k, flags.len())?;
        let hits = flags[..k].iter().filter(|&&r| r).count();
        out.f1.insert(cs.user_id().to_string(), f1_from_hits(hits, k, t)?);
        out.ndcg
            .insert(cs.user_id().to_string(), ndcg_from_flags(&flags, k, t)?);
    }
    Ok(out)
}

/// F1@K and NDCG@K group reports of `lists`.
pub fn evaluate(
    cands: &[CandidateSet],
    lists: &BTreeMap<String, Vec<String>>,
    groups: &GroupAssignment,
    k: usize,
) -> Result<(GroupReport, GroupReport)> {
    let m = per_user_metrics(cands, lists, k)?;
    Ok((
        group_report(&m.f1, groups, MetricName::F1)?,
        group_report(&m.ndcg, groups, MetricName::Ndcg)?,
    ))
}

/// Baseline lists: each user's first `k` candidates.
pub fn baseline_lists(cands: &[CandidateSet], k: usize) -> BTreeMap<String, Vec<String>> {
    cands
        .iter()
        .map(|c| (c.user_id().to_string(), c.top_k(k)))
        .collect()
}

pub(crate) fn percent2(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub advantaged: usize,
    pub disadvantaged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreciseValues {
    pub overall: f64,
    pub advantaged: f64,
    pub disadvantaged: f64,
    pub ugf: f64,
}

/// External rendering of a [`GroupReport`]: percent values rounded to two
/// decimals, with the unrounded percentages kept under `precise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub metric: MetricName,
    pub k: usize,
    pub overall: f64,
    pub advantaged: f64,
    pub disadvantaged: f64,
    pub ugf: f64,
    pub n_users_per_group: GroupSizes,
    pub precise: PreciseValues,
}

impl ReportJson {
    pub fn from_report(r: &GroupReport, k: usize) -> Self {
        ReportJson {
            metric: r.metric,
            k,
            overall: percent2(r.overall),
            advantaged: percent2(r.advantaged),
            disadvantaged: percent2(r.disadvantaged),
            ugf: percent2(r.ugf),
            n_users_per_group: GroupSizes {
                advantaged: r.n_advantaged,
                disadvantaged: r.n_disadvantaged,
            },
            precise: PreciseValues {
                overall: r.overall * 100.0,
                advantaged: r.advantaged * 100.0,
                disadvantaged: r.disadvantaged * 100.0,
                ugf: r.ugf * 100.0,
            },
        }
    }
}
