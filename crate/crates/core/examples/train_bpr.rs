// Fit the BPR matrix factorization baseline and score a few pairs.
//
// Validation NDCG@10 is tracked per epoch and the best epoch is kept.

use ugf_rerank::ingest::{split_dataset, SplitConfig};
use ugf_rerank::mf::{train_bpr_with_history, TrainConfig};
use ugf_rerank::synthetic::{generate, SyntheticConfig};

fn main() -> ugf_rerank::Result<()> {
    let (log, _) = generate(&SyntheticConfig {
        n_users: 300,
        seed: 3,
        ..SyntheticConfig::default()
    })?;
    let split = split_dataset(&log, &SplitConfig::default())?;
    let cfg = TrainConfig {
        epochs: 30,
        learning_rate: 0.01,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train_bpr_with_history(&split.train, Some(&split.validation), &cfg)?;
    for e in out.history.iter().step_by(5) {
        println!(
            "epoch {:>3}  loss {:.4}  validation NDCG@10 {:.4}",
            e.epoch,
            e.mean_loss,
            e.validation_ndcg.unwrap_or(f64::NAN)
        );
    }
    println!("kept epoch {} ({:.4})", out.best_epoch, out.best_validation_ndcg.unwrap_or(f64::NAN));

    let model = &out.model;
    let user = split.train.interactions()[0].user_id.clone();
    let seen = split.train.interactions()[0].item_id.clone();
    let other = model.item_table().ids().iter().find(|i| **i != seen).unwrap().clone();
    println!("score({user}, {seen}) = {:.4}", model.score(&user, &seen)?);
    println!("score({user}, {other}) = {:.4}", model.score(&user, &other)?);

    let path = std::env::temp_dir().join("ugf-example-model.bin");
    model.save(&path)?;
    let back = ugf_rerank::FactorModel::load(&path)?;
    assert_eq!(&back, model);
    println!("checkpoint round trip ok: {}", path.display());
    Ok(())
}
