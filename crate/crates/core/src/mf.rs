//! Biased matrix factorization trained with the pairwise BPR objective.
//!
//! `score(u, v) = global + b_u + b_v + <p_u, q_v>`. Training walks every
//! training (user, item) pair once per epoch in shuffled order, pairs it with
//! one uniformly drawn item the user has not interacted with, and takes an
//! SGD step on `-ln sigmoid(x_uij)` plus L2 weight decay. The model with the
//! best validation NDCG@10 (the initialization included) is returned.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ScoreProvider;
use crate::metrics::ndcg_from_flags;
use crate::types::{IdTable, InteractionLog};

const MAGIC: &[u8; 8] = b"UGFMF001";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate on validation after every epoch and keep the best model.
    pub early_stop: bool,
    pub init_std: f64,
    pub eval_negatives: usize,
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            learning_rate: 0.001,
            l2: 0.00001,
            epochs: 100,
            seed: 0,
            early_stop: true,
            init_std: 0.01,
            eval_negatives: 100,
            eval_k: 10,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 {} must be non-negative", self.l2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    dim: usize,
    users: Arc<IdTable>,
    items: Arc<IdTable>,
    pub user_vectors: Vec<f64>,
    pub item_vectors: Vec<f64>,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub global_bias: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl FactorModel {
    /// All-zero parameters.
    pub fn zeros(users: Arc<IdTable>, items: Arc<IdTable>, dim: usize) -> Self {
        FactorModel {
            dim,
            user_vectors: vec![0.0; users.len() * dim],
            item_vectors: vec![0.0; items.len() * dim],
            user_bias: vec![0.0; users.len()],
            item_bias: vec![0.0; items.len()],
            global_bias: 0.0,
            users,
            items,
        }
    }

    /// Factors drawn from N(0, std^2); biases start at zero.
    pub fn random(users: Arc<IdTable>, items: Arc<IdTable>, dim: usize, std: f64, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(users, items, dim);
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in m.user_vectors.iter_mut().chain(m.item_vectors.iter_mut()) {
            *x = normal.sample(&mut rng);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user_table(&self) -> &Arc<IdTable> {
        &self.users
    }

    pub fn item_table(&self) -> &Arc<IdTable> {
        &self.items
    }

    pub fn user_vec(&self, u: u32) -> &[f64] {
        let d = self.dim;
        &self.user_vectors[u as usize * d..(u as usize + 1) * d]
    }

    pub fn item_vec(&self, v: u32) -> &[f64] {
        let d = self.dim;
        &self.item_vectors[v as usize * d..(v as usize + 1) * d]
    }

    pub fn score_handles(&self, u: u32, v: u32) -> f64 {
        self.global_bias
            + self.user_bias[u as usize]
            + self.item_bias[v as usize]
            + dot(self.user_vec(u), self.item_vec(v))
    }

    pub fn score(&self, user: &str, item: &str) -> Result<f64> {
        let u = self
            .users
            .handle(user)
            .ok_or_else(|| Error::UnknownId(format!("user {user}")))?;
        let v = self
            .items
            .handle(item)
            .ok_or_else(|| Error::UnknownId(format!("item {item}")))?;
        Ok(self.score_handles(u, v))
    }

    pub fn is_finite(&self) -> bool {
        self.global_bias.is_finite()
            && [&self.user_vectors, &self.item_vectors, &self.user_bias, &self.item_bias]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Regularized BPR loss of one `(user, positive, negative)` triple.
    pub fn bpr_loss(&self, u: u32, pos: u32, neg: u32, l2: f64) -> f64 {
        let (p, qi, qj) = (self.user_vec(u), self.item_vec(pos), self.item_vec(neg));
        let (bi, bj) = (self.item_bias[pos as usize], self.item_bias[neg as usize]);
        let x = bi - bj + dot(p, qi) - dot(p, qj);
        let sq = |v: &[f64]| dot(v, v);
        // -ln sigmoid(x) = ln(1 + e^{-x}), written to stay finite for large |x|
        let nll = if x >= 0.0 {
            (-x).exp().ln_1p()
        } else {
            -x + x.exp().ln_1p()
        };
        nll + 0.5 * l2 * (sq(p) + sq(qi) + sq(qj) + bi * bi + bj * bj)
    }

    /// One SGD step on [`FactorModel::bpr_loss`]; returns the loss before the
    /// step.
    pub fn bpr_step(&mut self, u: u32, pos: u32, neg: u32, lr: f64, l2: f64) -> f64 {
        let d = self.dim;
        let loss = self.bpr_loss(u, pos, neg, l2);
        let (ui, pi, ni) = (u as usize * d, pos as usize * d, neg as usize * d);
        let x = self.item_bias[pos as usize] - self.item_bias[neg as usize]
            + (0..d)
                .map(|k| self.user_vectors[ui + k] * (self.item_vectors[pi + k] - self.item_vectors[ni + k]))
                .sum::<f64>();
        let g = sigmoid(-x);
        for k in 0..d {
            let p = self.user_vectors[ui + k];
            let qi = self.item_vectors[pi + k];
            let qj = self.item_vectors[ni + k];
            self.user_vectors[ui + k] -= lr * (-g * (qi - qj) + l2 * p);
            self.item_vectors[pi + k] -= lr * (-g * p + l2 * qi);
            self.item_vectors[ni + k] -= lr * (g * p + l2 * qj);
        }
        let bi = self.item_bias[pos as usize];
        let bj = self.item_bias[neg as usize];
        self.item_bias[pos as usize] -= lr * (-g + l2 * bi);
        self.item_bias[neg as usize] -= lr * (g + l2 * bj);
        loss
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for n in [self.dim, self.users.len(), self.items.len()] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for id in self.users.ids().iter().chain(self.items.ids()) {
            w.write_all(&(id.len() as u64).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        w.write_all(&self.global_bias.to_le_bytes())?;
        for arr in [&self.user_bias, &self.item_bias, &self.user_vectors, &self.item_vectors] {
            for x in arr.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::InvalidData(format!("model checkpoint: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let u64_at = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
            Ok(u64::from_le_bytes(b))
        };
        let dim = u64_at(&mut r)? as usize;
        let n_users = u64_at(&mut r)? as usize;
        let n_items = u64_at(&mut r)? as usize;
        let read_ids = |n: usize, r: &mut R| -> Result<Vec<String>> {
            (0..n)
                .map(|_| {
                    let len = u64_at(r)? as usize;
                    let mut buf = vec![0u8; len];
                    r.read_exact(&mut buf).map_err(|_| bad("truncated id"))?;
                    String::from_utf8(buf).map_err(|_| bad("id is not UTF-8"))
                })
                .collect()
        };
        let user_ids = read_ids(n_users, &mut r)?;
        let item_ids = read_ids(n_items, &mut r)?;
        let users = IdTable::from_ids(user_ids.iter().cloned());
        let items = IdTable::from_ids(item_ids.iter().cloned());
        if users.ids() != user_ids.as_slice() || items.ids() != item_ids.as_slice() {
            return Err(bad("id tables are not in canonical order"));
        }
        let mut m = FactorModel::zeros(Arc::new(users), Arc::new(items), dim);
        let f64_at = |r: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated parameters"))?;
            Ok(f64::from_le_bytes(b))
        };
        m.global_bias = f64_at(&mut r)?;
        for arr in [&mut m.user_bias, &mut m.item_bias, &mut m.user_vectors, &mut m.item_vectors] {
            for x in arr.iter_mut() {
                *x = f64_at(&mut r)?;
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

impl ScoreProvider for FactorModel {
    fn score(&self, user: &str, item: &str) -> Result<f64> {
        FactorModel::score(self, user, item)
    }
}

/// Fixed validation pools: (user, positive items, negative items).
struct ValidationPools {
    pools: Vec<(u32, Vec<u32>, Vec<u32>)>,
    k: usize,
}

impl ValidationPools {
    fn build(train: &InteractionLog, validation: &InteractionLog, cfg: &TrainConfig) -> Self {
        let items = train.item_table();
        let mut pools = Vec::new();
        for u in validation.active_users() {
            let pos: Vec<u32> = {
                let set: std::collections::BTreeSet<u32> = validation
                    .user_interactions(u)
                    .filter_map(|x| items.handle(&x.item_id))
                    .collect();
                set.into_iter().collect()
            };
            let seen: HashSet<u32> = train
                .user_interactions(u)
                .chain(validation.user_interactions(u))
                .filter_map(|x| items.handle(&x.item_id))
                .collect();
            let eligible: Vec<u32> = (0..items.len() as u32).filter(|v| !seen.contains(v)).collect();
            let n = cfg.eval_negatives.min(eligible.len());
            let mut rng = crate::ingest::user_rng(cfg.seed ^ 0x5eed_0f_e7a1, u);
            let neg = rand::seq::index::sample(&mut rng, eligible.len(), n)
                .iter()
                .map(|i| eligible[i])
                .collect();
            pools.push((u, pos, neg));
        }
        ValidationPools { pools, k: cfg.eval_k }
    }

    fn ndcg(&self, model: &FactorModel) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for (u, pos, neg) in &self.pools {
            let mut scored: Vec<(f64, bool, u32)> = pos
                .iter()
                .map(|&v| (model.score_handles(*u, v), true, v))
                .chain(neg.iter().map(|&v| (model.score_handles(*u, v), false, v)))
                .collect();
            if scored.len() < self.k || pos.is_empty() {
                continue;
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
            let flags: Vec<bool> = scored.iter().map(|s| s.1).collect();
            if let Ok(v) = ndcg_from_flags(&flags, self.k, pos.len()) {
                total += v;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub validation_ndcg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FactorModel,
    pub best_epoch: usize,
    pub best_validation_ndcg: Option<f64>,
    pub history: Vec<EpochLog>,
}

pub fn train_bpr(train: &InteractionLog, validation: Option<&InteractionLog>, cfg: &TrainConfig) -> Result<FactorModel> {
    train_bpr_with_history(train, validation, cfg).map(|o| o.model)
}

/// Trains and also reports the epoch log and which epoch was kept
/// (epoch 0 is the initialization).
pub fn train_bpr_with_history(
    train: &InteractionLog,
    validation: Option<&InteractionLog>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidData("cannot train on an empty log".into()));
    }
    let users = Arc::clone(train.user_table());
    let items = Arc::clone(train.item_table());
    let n_items = items.len() as u32;
    let mut model = FactorModel::random(users, items.clone(), cfg.dim, cfg.init_std, cfg.seed)?;

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut seen: Vec<Vec<u32>> = vec![Vec::new(); train.user_table().len()];
    for u in train.active_users() {
        let mut row: Vec<u32> = train
            .user_interactions(u)
            .filter_map(|x| items.handle(&x.item_id))
            .collect();
        row.sort_unstable();
        row.dedup();
        pairs.extend(row.iter().map(|&v| (u, v)));
        seen[u as usize] = row;
    }

    let pools = validation
        .filter(|_| cfg.early_stop)
        .map(|v| ValidationPools::build(train, v, cfg));
    let mut best_ndcg = pools.as_ref().map(|p| p.ndcg(&model));
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    for epoch in 1..=cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut steps = 0usize;
        for &(u, pos) in &pairs {
            let row = &seen[u as usize];
            if row.len() as u32 >= n_items {
                continue;
            }
            let neg = loop {
                let v = rng.random_range(0..n_items);
                if row.binary_search(&v).is_err() {
                    break v;
                }
            };
            loss += model.bpr_step(u, pos, neg, cfg.learning_rate, cfg.l2);
            steps += 1;
        }
        if !model.is_finite() || !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let ndcg = pools.as_ref().map(|p| p.ndcg(&model));
        history.push(EpochLog {
            epoch,
            mean_loss: loss / steps.max(1) as f64,
            validation_ndcg: ndcg,
        });
        match (ndcg, best_ndcg) {
            (Some(now), Some(prev)) if now > prev => {
                best_ndcg = Some(now);
                best = model.clone();
                best_epoch = epoch;
            }
            (None, _) => {
                best = model.clone();
                best_epoch = epoch;
            }
            _ => {}
        }
    }
    if cfg.epochs == 0 {
        best = model;
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        best_validation_ndcg: best_ndcg,
        history,
    })
}
