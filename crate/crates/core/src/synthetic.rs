//! Synthetic interaction logs with a small heavy-user head.
//!
//! Users and items get latent taste vectors; each user consumes a fixed
//! number of distinct items drawn without replacement from a softmax over
//! `taste_weight * <a_u, b_v> / sqrt(dim) + log popularity_v`. A fraction of
//! users consumes `heavy_multiplier` times as many items as the rest, which
//! is what separates the advantaged group from everyone else.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Interaction, InteractionLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Share of users that are heavy consumers.
    pub heavy_fraction: f64,
    /// Interactions of an ordinary user.
    pub light_interactions: usize,
    pub heavy_multiplier: usize,
    pub latent_dim: usize,
    pub taste_weight: f64,
    /// Zipf exponent of item popularity.
    pub popularity_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 1000,
            n_items: 500,
            heavy_fraction: 0.05,
            light_interactions: 12,
            heavy_multiplier: 10,
            latent_dim: 8,
            taste_weight: 2.0,
            popularity_exponent: 0.8,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn n_heavy(&self) -> usize {
        crate::grouping::advantaged_count(self.n_users, self.heavy_fraction)
    }

    fn validate(&self) -> Result<()> {
        let heavy = self.light_interactions * self.heavy_multiplier;
        if self.n_users < 2 || self.light_interactions < 3 || self.latent_dim == 0 {
            return Err(Error::Config(
                "synthetic data needs at least 2 users, 3 interactions per user and a latent dimension".into(),
            ));
        }
        if !(self.heavy_fraction > 0.0 && self.heavy_fraction < 1.0) {
            return Err(Error::Config(format!("heavy fraction {} must lie in (0, 1)", self.heavy_fraction)));
        }
        if heavy >= self.n_items {
            return Err(Error::Config(format!(
                "heavy users would consume {heavy} of only {} items",
                self.n_items
            )));
        }
        Ok(())
    }
}

/// Draws a log; also returns the ids of the heavy users.
pub fn generate(cfg: &SyntheticConfig) -> Result<(InteractionLog, Vec<String>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.latent_dim;
    let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let user_taste = gauss(cfg.n_users * d);
    let item_taste = gauss(cfg.n_items * d);

    let mut rank: Vec<usize> = (0..cfg.n_items).collect();
    rank.shuffle(&mut rng);
    let log_pop: Vec<f64> = rank
        .iter()
        .map(|&r| -cfg.popularity_exponent * ((r + 1) as f64).ln())
        .collect();
    let price_dist = LogNormal::<f64>::new(3.0, 0.8).map_err(|e| Error::Internal(e.to_string()))?;
    let prices: Vec<f64> = (0..cfg.n_items)
        .map(|_| (price_dist.sample(&mut rng) * 100.0).round() / 100.0)
        .collect();

    let mut order: Vec<usize> = (0..cfg.n_users).collect();
    order.shuffle(&mut rng);
    let mut heavy: Vec<usize> = order[..cfg.n_heavy()].to_vec();
    heavy.sort_unstable();

    let width = (cfg.n_users.max(cfg.n_items) as f64).log10().floor() as usize + 1;
    let user_id = |u: usize| format!("u{u:0width$}");
    let item_id = |v: usize| format!("i{v:0width$}");
    let scale = cfg.taste_weight / (d as f64).sqrt();

    let mut rows = Vec::new();
    for u in 0..cfg.n_users {
        let n = if heavy.binary_search(&u).is_ok() {
            cfg.light_interactions * cfg.heavy_multiplier
        } else {
            cfg.light_interactions
        };
        let a = &user_taste[u * d..(u + 1) * d];
        // Gumbel top-n is sampling n items without replacement from the softmax
        let mut keys: Vec<(f64, usize)> = (0..cfg.n_items)
            .map(|v| {
                let b = &item_taste[v * d..(v + 1) * d];
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let g = -(-rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).ln();
                (scale * dot + log_pop[v] + g, v)
            })
            .collect();
        keys.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut picked: Vec<usize> = keys[..n].iter().map(|k| k.1).collect();
        picked.shuffle(&mut rng);
        let mut t: i64 = 1_500_000_000 + rng.random_range(0..10_000_000);
        for v in picked {
            t += rng.random_range(60..86_400);
            let rating = f64::from(rng.random_range(3u8..=5));
            rows.push(Interaction::new(user_id(u), item_id(v), rating, t).with_price(Some(prices[v])));
        }
    }
    let log = InteractionLog::new(rows)?;
    Ok((log, heavy.into_iter().map(user_id).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_of_default_log() {
        let cfg = SyntheticConfig::default();
        let (log, heavy) = generate(&cfg).unwrap();
        assert_eq!(heavy.len(), 50);
        assert_eq!(log.len(), 950 * 12 + 50 * 120);
        assert_eq!(log.n_users(), 1000);
        assert!(log.n_items() <= 500);
        let h = log.user_handle(&heavy[0]).unwrap();
        assert_eq!(log.user_len(h), 120);
    }

    #[test]
    fn seeded() {
        let cfg = SyntheticConfig {
            n_users: 40,
            n_items: 80,
            light_interactions: 4,
            heavy_multiplier: 3,
            seed: 9,
            ..SyntheticConfig::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SyntheticConfig { seed: 10, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn rejects_impossible_sizes() {
        let cfg = SyntheticConfig {
            n_items: 100,
            ..SyntheticConfig::default()
        };
        assert!(generate(&cfg).is_err());
    }
}
