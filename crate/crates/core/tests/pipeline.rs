use std::collections::BTreeSet;

use proptest::prelude::*;
use ugf_rerank::grouping::{read_groups, write_groups};
use ugf_rerank::ingest::{read_split, write_split, EvalPart};
use ugf_rerank::metrics::baseline_lists;
use ugf_rerank::pipeline::{prepare, rerank_candidates, EpsilonSpec, PipelineConfig};
use ugf_rerank::rerank::SolverMode;
use ugf_rerank::synthetic::{generate, SyntheticConfig};
use ugf_rerank::{Candidate, CandidateSet, GroupAssignment, GroupReport, Interaction, InteractionLog, MetricName, SolverConfig};

fn small_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::seeded(seed);
    cfg.train.epochs = 10;
    cfg.train.dim = 16;
    cfg.sampling.n_negatives = 50;
    cfg
}

fn small_log(seed: u64) -> InteractionLog {
    generate(&SyntheticConfig {
        n_users: 200,
        n_items: 200,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
    .0
}

#[test]
fn library_pipeline_end_to_end() {
    let log = small_log(1);
    let p = prepare(&log, &small_config(1)).unwrap();
    p.split.check_against(&log).unwrap();
    assert_eq!(p.groups.len(), 200);
    assert_eq!(p.groups.advantaged().len(), 10);
    assert_eq!(p.candidates.len(), 200);
    assert!(p.candidates.iter().all(|c| c.len() == c.n_relevant_total() + 50));

    for mode in [SolverMode::Exact, SolverMode::Lagrangian] {
        let run = rerank_candidates(&p.candidates, &p.groups, 10, EpsilonSpec::Factor(0.5), &SolverConfig::with_mode(mode))
            .unwrap();
        let after = run.after.expect("feasible");
        assert!(after.f1.ugf <= run.epsilon + 1e-9);
        assert!((run.epsilon - 0.5 * run.before.f1.ugf).abs() < 1e-15);
    }
}

#[test]
fn split_files_round_trip_with_prices() {
    let log = small_log(2);
    let p = prepare(&log, &small_config(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_split(&p.split, dir.path()).unwrap();
    let back = read_split(dir.path(), None).unwrap();
    assert_eq!(back.train, p.split.train);
    assert_eq!(back.validation, p.split.validation);
    assert_eq!(back.test, p.split.test);
    assert!(back.train.interactions().iter().all(|x| x.price.is_some()));
}

#[test]
fn validation_labels_can_drive_the_constraint() {
    let log = small_log(3);
    let mut cfg = small_config(3);
    cfg.part = EvalPart::Validation;
    let p = prepare(&log, &cfg).unwrap();
    let lists = baseline_lists(&p.candidates, 10);
    assert_eq!(lists.len(), p.candidates.len());
    for c in &p.candidates {
        let h = p.split.user_table().handle(c.user_id()).unwrap();
        let val: BTreeSet<&str> = p.split.validation.user_interactions(h).map(|x| x.item_id.as_str()).collect();
        let rel: BTreeSet<&str> = c.candidates().iter().filter(|x| x.relevant).map(|x| x.item_id.as_str()).collect();
        assert_eq!(val, rel);
    }
}

#[test]
fn same_seed_same_everything() {
    let log = small_log(4);
    let a = prepare(&log, &small_config(4)).unwrap();
    let b = prepare(&log, &small_config(4)).unwrap();
    assert_eq!(a.candidates, b.candidates);
    assert_eq!(a.model(), b.model());
    let c = prepare(&log, &small_config(5)).unwrap();
    assert_ne!(a.candidates, c.candidates);
}

fn id() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9]{0,5}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interactions_round_trip(rows in prop::collection::vec((id(), id(), 1u8..=5, 0i64..1_000_000, prop::option::of(0.0f64..1e4)), 0..30)) {
        let mut seen = BTreeSet::new();
        let rows: Vec<Interaction> = rows
            .into_iter()
            .filter(|r| seen.insert((r.0.clone(), r.1.clone(), r.3)))
            .map(|(u, i, r, t, p)| Interaction::new(u, i, f64::from(r), t).with_price(p))
            .collect();
        let log = InteractionLog::new(rows).unwrap();
        let text = serde_json::to_string(&log).unwrap();
        let back: InteractionLog = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &log);
        prop_assert_eq!(back.interactions(), log.interactions());
    }

    #[test]
    fn candidate_sets_round_trip(items in prop::collection::btree_map(id(), (-5.0f64..5.0, any::<bool>()), 1..12), extra in 0usize..3) {
        let rel = items.values().filter(|v| v.1).count();
        let cands = items.into_iter().map(|(i, (s, r))| Candidate::new(i, s, r)).collect();
        let cs = CandidateSet::new("u", cands, rel + extra).unwrap();
        let back: CandidateSet = serde_json::from_str(&serde_json::to_string(&cs).unwrap()).unwrap();
        prop_assert_eq!(back, cs);
    }

    #[test]
    fn groups_round_trip(users in prop::collection::btree_set(id(), 2..20), split in 1usize..19) {
        let users: Vec<String> = users.into_iter().collect();
        let split = split.min(users.len() - 1);
        let g = GroupAssignment::new(
            users[..split].iter().cloned().collect(),
            users[split..].iter().cloned().collect(),
            None,
            None,
        ).unwrap();
        let back: GroupAssignment = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(&back, &g);
        let mut buf = Vec::new();
        write_groups(&mut buf, &g).unwrap();
        let csv = read_groups(buf.as_slice(), std::path::Path::new("g.csv")).unwrap();
        prop_assert_eq!(csv.advantaged(), g.advantaged());
        prop_assert_eq!(csv.disadvantaged(), g.disadvantaged());
    }

    #[test]
    fn reports_round_trip(a in 0.0f64..1.0, d in 0.0f64..1.0, o in 0.0f64..1.0) {
        let r = GroupReport { metric: MetricName::Ndcg, overall: o, advantaged: a, disadvantaged: d, ugf: (a - d).abs(), n_advantaged: 3, n_disadvantaged: 9 };
        let back: GroupReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }
}
