//! Reading interaction data, splitting it per user, and sampling the
//! evaluation candidates.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Candidate, CandidateSet, DatasetSplit, IdTable, Interaction, InteractionLog};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn required(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    column(headers, name).ok_or_else(|| Error::parse(path, 1, format!("missing column `{name}`")))
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, path: &Path) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::parse(path, line, format!("missing field `{name}`")))?
        .trim();
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("bad {name} `{raw}`")))
}

/// Reads the `item_id,price` table.
pub fn parse_prices(path: &Path) -> Result<HashMap<String, f64>> {
    read_prices(open(path)?, path)
}

pub fn read_prices<R: Read>(reader: R, path: &Path) -> Result<HashMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let item = required(&headers, "item_id", path)?;
    let price = required(&headers, "price", path)?;
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw = rec.get(price).unwrap_or("").trim();
        if raw.is_empty() {
            continue;
        }
        let p: f64 = field(&rec, price, "price", path)?;
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::parse(path, line, format!("negative or non-finite price {p}")));
        }
        out.insert(rec[item].trim().to_string(), p);
    }
    Ok(out)
}

/// Reads an interactions CSV (`user_id,item_id,rating,timestamp`, with an
/// optional `price` column; any other columns are ignored) and joins prices
/// from `price_path` by item id.
pub fn parse_interactions(path: &Path, price_path: Option<&Path>) -> Result<InteractionLog> {
    let rows = read_interaction_rows(open(path)?, path)?;
    let prices = price_path.map(parse_prices).transpose()?;
    build_log(rows.into_iter().map(|(x, _)| x).collect(), prices.as_ref())
}

fn build_log(mut rows: Vec<Interaction>, prices: Option<&HashMap<String, f64>>) -> Result<InteractionLog> {
    if let Some(prices) = prices {
        for x in &mut rows {
            if let Some(&p) = prices.get(&x.item_id) {
                x.price = Some(p);
            }
        }
    }
    InteractionLog::new(rows)
}

/// Rows with their optional `part` tag.
pub fn read_interaction_rows<R: Read>(reader: R, path: &Path) -> Result<Vec<(Interaction, Option<String>)>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let user = required(&headers, "user_id", path)?;
    let item = required(&headers, "item_id", path)?;
    let rating = required(&headers, "rating", path)?;
    let ts = required(&headers, "timestamp", path)?;
    let price = column(&headers, "price");
    let part = column(&headers, "part");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < headers.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        let price = match price.map(|i| rec[i].trim()) {
            None | Some("") => None,
            Some(_) => Some(field::<f64>(&rec, price.unwrap(), "price", path)?),
        };
        let x = Interaction {
            user_id: rec[user].trim().to_string(),
            item_id: rec[item].trim().to_string(),
            rating: field(&rec, rating, "rating", path)?,
            timestamp: field(&rec, ts, "timestamp", path)?,
            price,
        };
        x.validate().map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push((x, part.map(|i| rec[i].trim().to_string())));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Chronological,
    Random,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chronological" | "chrono" => Ok(SplitMode::Chronological),
            "random" => Ok(SplitMode::Random),
            other => Err(Error::Config(format!("unknown split mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
            mode: SplitMode::Chronological,
            seed: 0,
        }
    }
}

/// Per-user part sizes `(train, validation, test)` for `n` interactions.
///
/// Validation and test take the floor of their share, test never less than
/// one; train takes the remainder.
pub fn split_sizes(n: usize, validation: f64, test: f64) -> (usize, usize, usize) {
    let share = |r: f64| (r * n as f64 + 1e-9).floor() as usize;
    let n_test = share(test).max(1);
    let n_val = share(validation);
    (n - n_test - n_val, n_val, n_test)
}

/// Splits every user's history into train / validation / test.
pub fn split_dataset(log: &InteractionLog, cfg: &SplitConfig) -> Result<DatasetSplit> {
    if log.is_empty() {
        return Err(Error::InvalidData("cannot split an empty log".into()));
    }
    let ratios = [cfg.train, cfg.validation, cfg.test];
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || cfg.train <= 0.0 {
        return Err(Error::Config(format!("invalid split ratios {ratios:?}")));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} do not sum to 1")));
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for u in log.active_users() {
        let mut rows: Vec<&Interaction> = log.user_interactions(u).collect();
        let n = rows.len();
        if n < 3 {
            return Err(Error::InvalidData(format!(
                "user {} has {n} interactions; at least 3 are needed to split",
                log.user_table().id(u)
            )));
        }
        if cfg.mode == SplitMode::Random {
            rows.shuffle(&mut user_rng(cfg.seed, u));
        }
        let (n_train, n_val, _) = split_sizes(n, cfg.validation, cfg.test);
        for (pos, x) in rows.into_iter().enumerate() {
            let dest = if pos < n_train {
                &mut train
            } else if pos < n_train + n_val {
                &mut val
            } else {
                &mut test
            };
            dest.push(x.clone());
        }
    }
    let users = Arc::clone(log.user_table());
    let items = Arc::clone(log.item_table());
    Ok(DatasetSplit {
        train: InteractionLog::with_tables(train, users.clone(), items.clone())?,
        validation: InteractionLog::with_tables(val, users.clone(), items.clone())?,
        test: InteractionLog::with_tables(test, users, items)?,
    })
}

pub(crate) fn user_rng(seed: u64, user: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(user));
    rng
}

/// Dataset size summary; sparsity in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub actions: usize,
    pub users: usize,
    pub items: usize,
    pub sparsity: f64,
}

impl LogStats {
    pub fn of(log: &InteractionLog) -> Self {
        LogStats {
            actions: log.len(),
            users: log.n_users(),
            items: log.n_items(),
            sparsity: crate::metrics::percent2(log.sparsity()),
        }
    }
}

/// Writes a log in the interactions CSV format read by [`parse_interactions`].
pub fn write_interactions<W: Write>(writer: W, log: &InteractionLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "item_id", "rating", "timestamp", "price"])?;
    for u in log.active_users() {
        for x in log.user_interactions(u) {
            w.write_record([
                x.user_id.as_str(),
                x.item_id.as_str(),
                &x.rating.to_string(),
                &x.timestamp.to_string(),
                &x.price.map(|p| p.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Internal(e.to_string()))?;
    Ok(())
}

pub const PART_NAMES: [&str; 3] = ["train", "validation", "test"];

/// Writes `train.csv`, `validation.csv` and `test.csv` into `dir`.
pub fn write_split(split: &DatasetSplit, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, part) in PART_NAMES.iter().zip([&split.train, &split.validation, &split.test]) {
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["user_id", "item_id", "rating", "timestamp", "price", "part"])?;
        for u in part.active_users() {
            for x in part.user_interactions(u) {
                w.write_record([
                    x.user_id.as_str(),
                    x.item_id.as_str(),
                    &x.rating.to_string(),
                    &x.timestamp.to_string(),
                    &x.price.map(|p| p.to_string()).unwrap_or_default(),
                    name,
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads the three part files written by [`write_split`]. Prices from
/// `price_path` replace any stored in the files. The parts share id tables.
pub fn read_split(dir: &Path, price_path: Option<&Path>) -> Result<DatasetSplit> {
    let prices = price_path.map(parse_prices).transpose()?;
    let mut parts = Vec::new();
    for name in PART_NAMES {
        let path = dir.join(format!("{name}.csv"));
        let mut rows: Vec<Interaction> = read_interaction_rows(open(&path)?, &path)?
            .into_iter()
            .map(|(x, _)| x)
            .collect();
        if let Some(prices) = &prices {
            for x in &mut rows {
                if let Some(&p) = prices.get(&x.item_id) {
                    x.price = Some(p);
                }
            }
        }
        parts.push(rows);
    }
    let all = parts.iter().flatten();
    let users = Arc::new(IdTable::from_ids(all.clone().map(|x| x.user_id.as_str())));
    let items = Arc::new(IdTable::from_ids(all.map(|x| x.item_id.as_str())));
    let mut it = parts.into_iter();
    let mut next = || InteractionLog::with_tables(it.next().unwrap_or_default(), users.clone(), items.clone());
    Ok(DatasetSplit {
        train: next()?,
        validation: next()?,
        test: next()?,
    })
}

/// Anything that can score a (user, item) pair.
pub trait ScoreProvider: Sync {
    fn score(&self, user: &str, item: &str) -> Result<f64>;
}

impl<F> ScoreProvider for F
where
    F: Fn(&str, &str) -> f64 + Sync,
{
    fn score(&self, user: &str, item: &str) -> Result<f64> {
        Ok(self(user, item))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSamplingConfig {
    pub n_negatives: usize,
    pub seed: u64,
}

impl Default for NegativeSamplingConfig {
    fn default() -> Self {
        NegativeSamplingConfig {
            n_negatives: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPart {
    Validation,
    Test,
}

impl FromStr for EvalPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" => Ok(EvalPart::Validation),
            "test" => Ok(EvalPart::Test),
            other => Err(Error::Config(format!("unknown part `{other}`"))),
        }
    }
}

/// Builds the evaluation pool of each user with at least one positive in
/// `part`: the positives plus `n_negatives` uniformly sampled items the user
/// never interacted with in any part. Users are returned in id order.
pub fn sample_candidates<S: ScoreProvider + ?Sized>(
    split: &DatasetSplit,
    scorer: &S,
    cfg: &NegativeSamplingConfig,
    part: EvalPart,
) -> Result<Vec<CandidateSet>> {
    if cfg.n_negatives == 0 {
        return Err(Error::Config("n_negatives must be at least 1".into()));
    }
    let eval = match part {
        EvalPart::Validation => &split.validation,
        EvalPart::Test => &split.test,
    };
    let items = split.item_table();
    let users: Vec<u32> = eval.active_users().collect();
    users
        .par_iter()
        .map(|&u| {
            let user_id = split.user_table().id(u);
            let positives: BTreeSet<u32> = eval
                .user_interactions(u)
                .filter_map(|x| items.handle(&x.item_id))
                .collect();
            let seen: HashSet<u32> = [&split.train, &split.validation, &split.test]
                .iter()
                .flat_map(|p| p.user_interactions(u))
                .filter_map(|x| items.handle(&x.item_id))
                .collect();
            let eligible: Vec<u32> = (0..items.len() as u32).filter(|v| !seen.contains(v)).collect();
            if eligible.len() < cfg.n_negatives {
                return Err(Error::InvalidData(format!(
                    "user {user_id}: only {} never-seen items for {} negatives",
                    eligible.len(),
                    cfg.n_negatives
                )));
            }
            let mut rng = user_rng(cfg.seed, u);
            let negatives = rand::seq::index::sample(&mut rng, eligible.len(), cfg.n_negatives);
            let mut cands = Vec::with_capacity(positives.len() + cfg.n_negatives);
            for &v in &positives {
                let id = items.id(v);
                cands.push(Candidate::new(id, scorer.score(user_id, id)?, true));
            }
            for idx in negatives.iter() {
                let id = items.id(eligible[idx]);
                cands.push(Candidate::new(id, scorer.score(user_id, id)?, false));
            }
            CandidateSet::new(user_id, cands, positives.len())
        })
        .collect()
}

/// Writes candidates as `user_id,item_id,score,relevant`, one score-ordered
/// block per user.
pub fn write_candidates<W: Write>(writer: W, cands: &[CandidateSet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "item_id", "score", "relevant"])?;
    for cs in cands {
        for c in cs.candidates() {
            w.write_record([
                cs.user_id(),
                c.item_id.as_str(),
                &c.score.to_string(),
                if c.relevant { "1" } else { "0" },
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<candidates>", e))?;
    Ok(())
}

pub fn save_candidates(path: &Path, cands: &[CandidateSet]) -> Result<()> {
    write_candidates(create(path)?, cands)
}

/// Reads a candidate file. A user's relevant-item total is the number of
/// relevant rows unless an `n_relevant` column supplies it.
pub fn read_candidates<R: Read>(reader: R, path: &Path) -> Result<Vec<CandidateSet>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let user = required(&headers, "user_id", path)?;
    let item = required(&headers, "item_id", path)?;
    let score = required(&headers, "score", path)?;
    let relevant = required(&headers, "relevant", path)?;
    let total = column(&headers, "n_relevant");
    let mut blocks: BTreeMap<String, (Vec<Candidate>, Option<usize>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < headers.len() {
            return Err(Error::parse(path, line, "short row"));
        }
        let rel = match rec[relevant].trim() {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(path, line, format!("relevant must be 0 or 1, got `{other}`"))),
        };
        let s: f64 = field(&rec, score, "score", path)?;
        if !s.is_finite() {
            return Err(Error::parse(path, line, "non-finite score"));
        }
        let t = total.map(|i| field::<usize>(&rec, i, "n_relevant", path)).transpose()?;
        let entry = blocks.entry(rec[user].trim().to_string()).or_default();
        entry.0.push(Candidate::new(rec[item].trim(), s, rel));
        if t.is_some() {
            entry.1 = t;
        }
    }
    blocks
        .into_iter()
        .map(|(u, (cands, t))| {
            let t = t.unwrap_or_else(|| cands.iter().filter(|c| c.relevant).count());
            CandidateSet::new(u, cands, t)
        })
        .collect()
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidateSet>> {
    read_candidates(open(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_from(rows: &[(&str, &str, i64)]) -> InteractionLog {
        InteractionLog::new(
            rows.iter()
                .map(|&(u, i, t)| Interaction::new(u, i, 5.0, t))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_and_sorts_one_user() {
        let csv = "user_id,item_id,rating,timestamp\nu,c,5,30\nu,a,4,10\nu,b,3,20\n";
        let rows = read_interaction_rows(csv.as_bytes(), Path::new("x.csv")).unwrap();
        let log = build_log(rows.into_iter().map(|r| r.0).collect(), None).unwrap();
        assert_eq!(log.n_users(), 1);
        assert_eq!(log.len(), 3);
        let items: Vec<_> = log.user_interactions(0).map(|x| x.item_id.clone()).collect();
        assert_eq!(items, ["a", "b", "c"]);
    }

    #[test]
    fn empty_price_is_missing() {
        let csv = "user_id,item_id,rating,timestamp,price\nu,a,5,1,\nu,b,5,2,3.5\n";
        let rows = read_interaction_rows(csv.as_bytes(), Path::new("x.csv")).unwrap();
        assert_eq!(rows[0].0.price, None);
        assert_eq!(rows[1].0.price, Some(3.5));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "user_id,item_id,rating,timestamp\nu,a,5,1\nu,b,five,2\n";
        match read_interaction_rows(csv.as_bytes(), Path::new("x.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn price_join() {
        let prices = read_prices("item_id,price\na,2.5\nb,\n".as_bytes(), Path::new("p.csv")).unwrap();
        let log = build_log(
            vec![Interaction::new("u", "a", 5.0, 1), Interaction::new("u", "b", 5.0, 2)],
            Some(&prices),
        )
        .unwrap();
        assert_eq!(log.interactions()[0].price, Some(2.5));
        assert_eq!(log.interactions()[1].price, None);
    }

    /// Independent statement of the rounding rule in integer arithmetic.
    fn expected_sizes(n: usize) -> (usize, usize, usize) {
        let test = (n / 10).max(1);
        let val = n / 10;
        (n - test - val, val, test)
    }

    #[test]
    fn rounding_rule_over_small_counts() {
        assert_eq!(split_sizes(10, 0.1, 0.1), (8, 1, 1));
        assert_eq!(split_sizes(5, 0.1, 0.1), (4, 0, 1));
        for n in 5..=20 {
            let got = split_sizes(n, 0.1, 0.1);
            assert_eq!(got, expected_sizes(n), "n = {n}");
            assert_eq!(got.0 + got.1 + got.2, n);
            assert!(got.0 >= 1 && got.2 >= 1);
        }
        for n in 3..=1000 {
            assert_eq!(split_sizes(n, 0.1, 0.1), expected_sizes(n), "n = {n}");
        }
    }

    #[test]
    fn chronological_split_of_ten() {
        let rows: Vec<(String, String, i64)> =
            (0..10).map(|t| ("u".to_string(), format!("i{t}"), t as i64)).collect();
        let rows: Vec<(&str, &str, i64)> = rows.iter().map(|(u, i, t)| (u.as_str(), i.as_str(), *t)).collect();
        let log = log_from(&rows);
        let split = split_dataset(&log, &SplitConfig::default()).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.validation.len(), 1);
        assert_eq!(split.test.len(), 1);
        assert_eq!(split.validation.interactions()[0].item_id, "i8");
        assert_eq!(split.test.interactions()[0].item_id, "i9");
        split.check_against(&log).unwrap();
    }

    #[test]
    fn split_errors() {
        let empty = InteractionLog::new(vec![]).unwrap();
        assert!(split_dataset(&empty, &SplitConfig::default()).is_err());
        let short = log_from(&[("u", "a", 1), ("u", "b", 2)]);
        let err = split_dataset(&short, &SplitConfig::default()).unwrap_err();
        assert!(err.to_string().contains("user u"));
        let bad = SplitConfig {
            train: 0.5,
            ..SplitConfig::default()
        };
        assert!(split_dataset(&log_from(&[("u", "a", 1), ("u", "b", 2), ("u", "c", 3)]), &bad).is_err());
    }

    fn small_split() -> DatasetSplit {
        let mut rows = Vec::new();
        for u in 0..4 {
            for t in 0..10 {
                rows.push(Interaction::new(format!("u{u}"), format!("i{}", (u * 3 + t) % 40), 5.0, t));
            }
        }
        // three fillers that each touch a third of the catalogue
        for i in 0..210 {
            rows.push(Interaction::new(format!("filler{}", i % 3), format!("x{i:03}"), 5.0, i));
        }
        split_dataset(&InteractionLog::new(rows).unwrap(), &SplitConfig::default()).unwrap()
    }

    #[test]
    fn candidates_contain_positives_and_fresh_negatives() {
        let split = small_split();
        let scorer = |_: &str, item: &str| item.len() as f64;
        let cfg = NegativeSamplingConfig { n_negatives: 100, seed: 7 };
        let cands = sample_candidates(&split, &scorer, &cfg, EvalPart::Test).unwrap();
        let u0 = cands.iter().find(|c| c.user_id() == "u0").unwrap();
        assert_eq!(u0.len(), 101);
        assert_eq!(u0.candidates().iter().filter(|c| c.relevant).count(), 1);
        assert_eq!(u0.n_relevant_total(), 1);
        let again = sample_candidates(&split, &scorer, &cfg, EvalPart::Test).unwrap();
        assert_eq!(cands, again);

        let h = split.user_table().handle("u0").unwrap();
        let history: HashSet<&str> = [&split.train, &split.validation, &split.test]
            .iter()
            .flat_map(|p| p.user_interactions(h))
            .map(|x| x.item_id.as_str())
            .collect();
        for c in u0.candidates().iter().filter(|c| !c.relevant) {
            assert!(!history.contains(c.item_id.as_str()));
        }
    }

    #[test]
    fn users_without_positives_are_omitted() {
        let split = small_split();
        let scorer = |_: &str, _: &str| 0.0;
        let cfg = NegativeSamplingConfig { n_negatives: 5, seed: 1 };
        // 10 interactions give a validation positive; a 3-interaction user gets none.
        let mut rows: Vec<Interaction> = split
            .train
            .interactions()
            .iter()
            .chain(split.validation.interactions())
            .chain(split.test.interactions())
            .cloned()
            .collect();
        for t in 0..3 {
            rows.push(Interaction::new("tiny", format!("i{t}"), 5.0, t));
        }
        let split = split_dataset(&InteractionLog::new(rows).unwrap(), &SplitConfig::default()).unwrap();
        let cands = sample_candidates(&split, &scorer, &cfg, EvalPart::Validation).unwrap();
        assert!(cands.iter().all(|c| c.user_id() != "tiny"));
        assert!(cands.iter().any(|c| c.user_id() == "u0"));
    }

    #[test]
    fn too_few_items_for_negatives() {
        let split = small_split();
        let scorer = |_: &str, _: &str| 0.0;
        let cfg = NegativeSamplingConfig { n_negatives: 10_000, seed: 1 };
        assert!(sample_candidates(&split, &scorer, &cfg, EvalPart::Test).is_err());
    }

    #[test]
    fn candidate_file_round_trip() {
        let split = small_split();
        let scorer = |u: &str, i: &str| (u.len() * 7 + i.len()) as f64 / 3.0;
        let cfg = NegativeSamplingConfig { n_negatives: 20, seed: 3 };
        let cands = sample_candidates(&split, &scorer, &cfg, EvalPart::Test).unwrap();
        let mut buf = Vec::new();
        write_candidates(&mut buf, &cands).unwrap();
        let back = read_candidates(buf.as_slice(), Path::new("c.csv")).unwrap();
        assert_eq!(cands, back);
    }

    #[test]
    fn candidate_file_rejects_bad_relevance() {
        let csv = "user_id,item_id,score,relevant\nu,a,0.5,2\n";
        assert!(matches!(
            read_candidates(csv.as_bytes(), Path::new("c.csv")),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
