//! Domain types shared across the crate.
//!
//! Ids are opaque strings at every public boundary. Internally an
//! [`InteractionLog`] assigns each user and item a dense handle through an
//! [`IdTable`]; handles are assigned in lexicographic id order so that
//! handle order and id order agree, which keeps tie-breaking identical
//! whichever representation a caller holds.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped user-item event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    pub timestamp: i64,
    #[serde(default)]
    pub price: Option<f64>,
}

impl Interaction {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, rating: f64, timestamp: i64) -> Self {
        Interaction {
            user_id: user_id.into(),
            item_id: item_id.into(),
            rating,
            timestamp,
            price: None,
        }
    }

    pub fn with_price(mut self, price: Option<f64>) -> Self {
        self.price = price;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_id.is_empty() || self.item_id.is_empty() {
            return Err(Error::InvalidData("empty user_id or item_id".into()));
        }
        if !(1.0..=5.0).contains(&self.rating) {
            return Err(Error::InvalidData(format!(
                "rating {} outside [1, 5] for ({}, {})",
                self.rating, self.user_id, self.item_id
            )));
        }
        if self.timestamp < 0 {
            return Err(Error::InvalidData(format!(
                "negative timestamp for ({}, {})",
                self.user_id, self.item_id
            )));
        }
        if let Some(p) = self.price {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidData(format!(
                    "price {p} for item {} is not a non-negative number",
                    self.item_id
                )));
            }
        }
        Ok(())
    }
}

/// Bidirectional map between opaque string ids and dense `u32` handles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdTable {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdTable {
    /// Builds a table from arbitrary ids; duplicates collapse and handles
    /// follow lexicographic order.
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = ids.into_iter().map(Into::into).collect();
        let ids: Vec<String> = set.into_iter().collect();
        let index = ids
            .iter()
            .enumerate()
            .map(|(h, id)| (id.clone(), h as u32))
            .collect();
        IdTable { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn handle(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn id(&self, handle: u32) -> &str {
        &self.ids[handle as usize]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// The raw dataset with per-user and per-item indexes.
///
/// Several logs may share one pair of id tables (the parts of a
/// [`DatasetSplit`] do), so handles are comparable across them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interaction>", into = "Vec<Interaction>")]
pub struct InteractionLog {
    interactions: Vec<Interaction>,
    users: Arc<IdTable>,
    items: Arc<IdTable>,
    by_user: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

impl InteractionLog {
    /// Validates every row, rejects duplicate `(user, item, timestamp)`
    /// triples and builds fresh id tables.
    pub fn new(interactions: Vec<Interaction>) -> Result<Self> {
        let users = IdTable::from_ids(interactions.iter().map(|x| x.user_id.as_str()));
        let items = IdTable::from_ids(interactions.iter().map(|x| x.item_id.as_str()));
        Self::with_tables(interactions, Arc::new(users), Arc::new(items))
    }

    /// Like [`InteractionLog::new`] but reuses existing id tables, which must
    /// contain every id in `interactions`.
    pub fn with_tables(
        interactions: Vec<Interaction>,
        users: Arc<IdTable>,
        items: Arc<IdTable>,
    ) -> Result<Self> {
        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        let mut seen = HashSet::with_capacity(interactions.len());
        let mut dups = Vec::new();
        for (idx, x) in interactions.iter().enumerate() {
            x.validate()?;
            let u = users
                .handle(&x.user_id)
                .ok_or_else(|| Error::UnknownId(format!("user {}", x.user_id)))?;
            let v = items
                .handle(&x.item_id)
                .ok_or_else(|| Error::UnknownId(format!("item {}", x.item_id)))?;
            if !seen.insert((u, v, x.timestamp)) {
                dups.push(format!("({}, {}, {})", x.user_id, x.item_id, x.timestamp));
            }
            by_user[u as usize].push(idx);
            by_item[v as usize].push(idx);
        }
        if !dups.is_empty() {
            let count = dups.len();
            dups.truncate(5);
            return Err(Error::Duplicates {
                count,
                examples: dups,
            });
        }
        for list in &mut by_user {
            list.sort_by(|&a, &b| chrono_order(&interactions[a], &interactions[b]));
        }
        for list in &mut by_item {
            list.sort_by(|&a, &b| chrono_order(&interactions[a], &interactions[b]));
        }
        Ok(InteractionLog {
            interactions,
            users,
            items,
            by_user,
            by_item,
        })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn user_table(&self) -> &Arc<IdTable> {
        &self.users
    }

    pub fn item_table(&self) -> &Arc<IdTable> {
        &self.items
    }

    /// Number of users with at least one interaction in this log.
    pub fn n_users(&self) -> usize {
        self.by_user.iter().filter(|l| !l.is_empty()).count()
    }

    /// Number of items with at least one interaction in this log.
    pub fn n_items(&self) -> usize {
        self.by_item.iter().filter(|l| !l.is_empty()).count()
    }

    /// Handles of users that have interactions here, ascending.
    pub fn active_users(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_user
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(h, _)| h as u32)
    }

    /// The user's interactions, oldest first (ties by item id).
    pub fn user_interactions(&self, user: u32) -> impl Iterator<Item = &Interaction> + '_ {
        self.by_user
            .get(user as usize)
            .into_iter()
            .flatten()
            .map(move |&i| &self.interactions[i])
    }

    pub fn user_len(&self, user: u32) -> usize {
        self.by_user.get(user as usize).map_or(0, Vec::len)
    }

    pub fn item_interactions(&self, item: u32) -> impl Iterator<Item = &Interaction> + '_ {
        self.by_item
            .get(item as usize)
            .into_iter()
            .flatten()
            .map(move |&i| &self.interactions[i])
    }

    pub fn user_handle(&self, id: &str) -> Option<u32> {
        self.users.handle(id)
    }

    pub fn item_handle(&self, id: &str) -> Option<u32> {
        self.items.handle(id)
    }

    /// Fraction of the user-item matrix that is empty, in [0, 1].
    pub fn sparsity(&self) -> f64 {
        let cells = self.n_users() as f64 * self.n_items() as f64;
        if cells == 0.0 {
            return 1.0;
        }
        1.0 - self.len() as f64 / cells
    }
}

impl PartialEq for InteractionLog {
    fn eq(&self, other: &Self) -> bool {
        self.interactions == other.interactions
    }
}

impl TryFrom<Vec<Interaction>> for InteractionLog {
    type Error = Error;

    fn try_from(v: Vec<Interaction>) -> Result<Self> {
        InteractionLog::new(v)
    }
}

impl From<InteractionLog> for Vec<Interaction> {
    fn from(log: InteractionLog) -> Self {
        log.interactions
    }
}

pub(crate) fn chrono_order(a: &Interaction, b: &Interaction) -> Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// Train / validation / test parts of one log. The parts share id tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: InteractionLog,
    pub validation: InteractionLog,
    pub test: InteractionLog,
}

impl DatasetSplit {
    /// Every user and item handle known to any part.
    pub fn user_table(&self) -> &Arc<IdTable> {
        self.train.user_table()
    }

    pub fn item_table(&self) -> &Arc<IdTable> {
        self.train.item_table()
    }

    /// Checks disjointness, coverage of `source` and that every evaluated
    /// user also has training data.
    pub fn check_against(&self, source: &InteractionLog) -> Result<()> {
        let key = |x: &Interaction| (x.user_id.clone(), x.item_id.clone(), x.timestamp);
        let mut parts: HashSet<(String, String, i64)> = HashSet::new();
        for part in [&self.train, &self.validation, &self.test] {
            for x in part.interactions() {
                if !parts.insert(key(x)) {
                    return Err(Error::Internal(format!("row {:?} in two parts", key(x))));
                }
            }
        }
        let src: HashSet<_> = source.interactions().iter().map(key).collect();
        if src != parts {
            return Err(Error::Internal("split parts do not cover the source log".into()));
        }
        for part in [&self.validation, &self.test] {
            for u in part.active_users() {
                if self.train.user_len(u) == 0 {
                    return Err(Error::Internal(format!(
                        "user {} evaluated but absent from train",
                        part.user_table().id(u)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Activity criterion used to rank users before grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingMethod {
    Interactions,
    TotalConsumption,
    MaxPrice,
}

impl fmt::Display for GroupingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupingMethod::Interactions => "interactions",
            GroupingMethod::TotalConsumption => "total_consumption",
            GroupingMethod::MaxPrice => "max_price",
        })
    }
}

impl FromStr for GroupingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interactions" => Ok(GroupingMethod::Interactions),
            "total_consumption" | "consumption" => Ok(GroupingMethod::TotalConsumption),
            "max_price" => Ok(GroupingMethod::MaxPrice),
            other => Err(Error::Config(format!("unknown grouping method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Advantaged,
    Disadvantaged,
}

impl Group {
    pub fn label(self) -> &'static str {
        match self {
            Group::Advantaged => "adv",
            Group::Disadvantaged => "disadv",
        }
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adv" | "advantaged" => Ok(Group::Advantaged),
            "disadv" | "disadvantaged" => Ok(Group::Disadvantaged),
            other => Err(Error::InvalidData(format!("unknown group label `{other}`"))),
        }
    }
}

#[derive(Deserialize)]
struct RawGroupAssignment {
    advantaged: BTreeSet<String>,
    disadvantaged: BTreeSet<String>,
    method: Option<GroupingMethod>,
    top_fraction: Option<f64>,
}

/// Partition of users into an advantaged set and a disadvantaged set.
///
/// `method` and `top_fraction` are `None` for groupings imported from a
/// file rather than computed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGroupAssignment")]
pub struct GroupAssignment {
    advantaged: BTreeSet<String>,
    disadvantaged: BTreeSet<String>,
    method: Option<GroupingMethod>,
    top_fraction: Option<f64>,
}

impl GroupAssignment {
    pub fn new(
        advantaged: BTreeSet<String>,
        disadvantaged: BTreeSet<String>,
        method: Option<GroupingMethod>,
        top_fraction: Option<f64>,
    ) -> Result<Self> {
        if let Some(u) = advantaged.intersection(&disadvantaged).next() {
            return Err(Error::InvalidData(format!("user {u} is in both groups")));
        }
        if let Some(f) = top_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("top_fraction {f} not in (0, 1)")));
            }
        }
        Ok(GroupAssignment {
            advantaged,
            disadvantaged,
            method,
            top_fraction,
        })
    }

    pub fn advantaged(&self) -> &BTreeSet<String> {
        &self.advantaged
    }

    pub fn disadvantaged(&self) -> &BTreeSet<String> {
        &self.disadvantaged
    }

    pub fn method(&self) -> Option<GroupingMethod> {
        self.method
    }

    pub fn top_fraction(&self) -> Option<f64> {
        self.top_fraction
    }

    pub fn group_of(&self, user: &str) -> Option<Group> {
        if self.advantaged.contains(user) {
            Some(Group::Advantaged)
        } else if self.disadvantaged.contains(user) {
            Some(Group::Disadvantaged)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.advantaged.len() + self.disadvantaged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All users with their group, in id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Group)> + '_ {
        let mut all: Vec<(&str, Group)> = self
            .advantaged
            .iter()
            .map(|u| (u.as_str(), Group::Advantaged))
            .chain(self.disadvantaged.iter().map(|u| (u.as_str(), Group::Disadvantaged)))
            .collect();
        all.sort();
        all.into_iter()
    }
}

impl TryFrom<RawGroupAssignment> for GroupAssignment {
    type Error = Error;

    fn try_from(r: RawGroupAssignment) -> Result<Self> {
        GroupAssignment::new(r.advantaged, r.disadvantaged, r.method, r.top_fraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub item_id: String,
    pub score: f64,
    pub relevant: bool,
}

impl Candidate {
    pub fn new(item_id: impl Into<String>, score: f64, relevant: bool) -> Self {
        Candidate {
            item_id: item_id.into(),
            score,
            relevant,
        }
    }
}

/// Score descending, then item id ascending.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.item_id.cmp(&b.item_id))
}

#[derive(Deserialize)]
struct RawCandidateSet {
    user_id: String,
    candidates: Vec<Candidate>,
    n_relevant_total: usize,
}

/// One user's scored candidate pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCandidateSet")]
pub struct CandidateSet {
    user_id: String,
    candidates: Vec<Candidate>,
    n_relevant_total: usize,
}

impl CandidateSet {
    /// Sorts the candidates into canonical order and checks the invariants.
    pub fn new(user_id: impl Into<String>, mut candidates: Vec<Candidate>, n_relevant_total: usize) -> Result<Self> {
        let user_id = user_id.into();
        if user_id.is_empty() {
            return Err(Error::InvalidData("empty user_id in candidate set".into()));
        }
        if let Some(c) = candidates.iter().find(|c| !c.score.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite score for ({user_id}, {})",
                c.item_id
            )));
        }
        candidates.sort_by(candidate_order);
        let mut ids = HashSet::with_capacity(candidates.len());
        for c in &candidates {
            if !ids.insert(c.item_id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate candidate {} for user {user_id}",
                    c.item_id
                )));
            }
        }
        let relevant = candidates.iter().filter(|c| c.relevant).count();
        if relevant > n_relevant_total {
            return Err(Error::InvalidData(format!(
                "user {user_id} has {relevant} relevant candidates but only {n_relevant_total} relevant items in total"
            )));
        }
        Ok(CandidateSet {
            user_id,
            candidates,
            n_relevant_total,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn n_relevant_total(&self) -> usize {
        self.n_relevant_total
    }

    /// Ids of the relevant candidates.
    pub fn relevant_items(&self) -> HashSet<&str> {
        self.candidates
            .iter()
            .filter(|c| c.relevant)
            .map(|c| c.item_id.as_str())
            .collect()
    }

    /// The first `k` item ids in score order.
    pub fn top_k(&self, k: usize) -> Vec<String> {
        self.candidates
            .iter()
            .take(k)
            .map(|c| c.item_id.clone())
            .collect()
    }

    /// Keeps only the `n` best-scored candidates; `n_relevant_total` is kept.
    pub fn truncated(&self, n: usize) -> CandidateSet {
        let mut out = self.clone();
        out.candidates.truncate(n);
        out
    }
}

impl TryFrom<RawCandidateSet> for CandidateSet {
    type Error = Error;

    fn try_from(r: RawCandidateSet) -> Result<Self> {
        CandidateSet::new(r.user_id, r.candidates, r.n_relevant_total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricName {
    #[serde(rename = "F1@K")]
    F1,
    #[serde(rename = "NDCG@K")]
    Ndcg,
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricName::F1 => "F1@K",
            MetricName::Ndcg => "NDCG@K",
        })
    }
}

/// Group-level summary of one per-user metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub metric: MetricName,
    pub overall: f64,
    pub advantaged: f64,
    pub disadvantaged: f64,
    pub ugf: f64,
    pub n_advantaged: usize,
    pub n_disadvantaged: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(rows: &[(&str, &str, i64)]) -> InteractionLog {
        InteractionLog::new(
            rows.iter()
                .map(|&(u, i, t)| Interaction::new(u, i, 5.0, t))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn per_user_lists_are_chronological() {
        let l = log(&[("u", "c", 30), ("u", "a", 10), ("u", "b", 10), ("v", "a", 1)]);
        let u = l.user_handle("u").unwrap();
        let items: Vec<_> = l.user_interactions(u).map(|x| x.item_id.as_str()).collect();
        assert_eq!(items, ["a", "b", "c"]);
        assert_eq!(l.n_users(), 2);
        assert_eq!(l.n_items(), 3);
        let a = l.item_handle("a").unwrap();
        assert_eq!(l.item_interactions(a).count(), 2);
    }

    #[test]
    fn duplicate_triples_are_rejected() {
        let rows = vec![
            Interaction::new("u", "a", 5.0, 1),
            Interaction::new("u", "a", 4.0, 1),
        ];
        match InteractionLog::new(rows) {
            Err(Error::Duplicates { count, .. }) => assert_eq!(count, 1),
            other => panic!("expected duplicates, got {other:?}"),
        }
    }

    #[test]
    fn interaction_invariants() {
        assert!(Interaction::new("", "a", 5.0, 1).validate().is_err());
        assert!(Interaction::new("u", "a", 5.0, -1).validate().is_err());
        assert!(Interaction::new("u", "a", 0.5, 1).validate().is_err());
        assert!(Interaction::new("u", "a", 5.0, 1)
            .with_price(Some(-1.0))
            .validate()
            .is_err());
        assert!(Interaction::new("u", "a", 5.0, 1)
            .with_price(None)
            .validate()
            .is_ok());
    }

    #[test]
    fn group_assignment_rejects_overlap() {
        let a: BTreeSet<String> = ["x".to_string()].into();
        let b: BTreeSet<String> = ["x".to_string(), "y".to_string()].into();
        assert!(GroupAssignment::new(a.clone(), b, None, None).is_err());
        let g = GroupAssignment::new(a, ["y".to_string()].into(), None, None).unwrap();
        assert_eq!(g.group_of("x"), Some(Group::Advantaged));
        assert_eq!(g.group_of("y"), Some(Group::Disadvantaged));
        assert_eq!(g.group_of("z"), None);
    }

    #[test]
    fn group_assignment_deserialization_is_checked() {
        let bad = r#"{"advantaged":["a"],"disadvantaged":["a"],"method":null,"top_fraction":null}"#;
        assert!(serde_json::from_str::<GroupAssignment>(bad).is_err());
    }

    #[test]
    fn candidate_set_sorts_and_validates() {
        let cs = CandidateSet::new(
            "u",
            vec![
                Candidate::new("b", 0.5, false),
                Candidate::new("a", 0.5, true),
                Candidate::new("c", 0.9, false),
            ],
            1,
        )
        .unwrap();
        let ids: Vec<_> = cs.candidates().iter().map(|c| c.item_id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);

        let dup = CandidateSet::new(
            "u",
            vec![Candidate::new("a", 0.1, false), Candidate::new("a", 0.9, false)],
            0,
        );
        assert!(dup.is_err());
        let too_many = CandidateSet::new("u", vec![Candidate::new("a", 0.1, true)], 0);
        assert!(too_many.is_err());
    }

    #[test]
    fn log_serde_round_trip() {
        let l = log(&[("u", "a", 3), ("v", "b", 1)]);
        let json = serde_json::to_string(&l).unwrap();
        let back: InteractionLog = serde_json::from_str(&json).unwrap();
        assert_eq!(l, back);
    }
}
