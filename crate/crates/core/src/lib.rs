//! Group fairness measurement and fairness-constrained top-K re-ranking.
//!
//! The crate covers the whole offline pipeline: reading interaction logs,
//! per-user temporal splits, activity-based user grouping, a BPR matrix
//! factorization baseline, accuracy metrics with group gaps, and a re-ranker
//! that picks each user's K items from a candidate pool subject to a bound
//! on the F1 gap between the advantaged and disadvantaged groups.
//!
//! ```
//! use ugf_rerank::{build_problem, solve, Candidate, CandidateSet, GroupAssignment, SolverConfig};
//!
//! let cands = vec![
//!     CandidateSet::new("u1", vec![Candidate::new("a", 0.9, true), Candidate::new("b", 0.5, false)], 1)?,
//!     CandidateSet::new("u2", vec![Candidate::new("c", 0.8, false), Candidate::new("d", 0.7, true)], 1)?,
//! ];
//! let groups = GroupAssignment::new(
//!     ["u1".to_string()].into(),
//!     ["u2".to_string()].into(),
//!     None,
//!     None,
//! )?;
//! let problem = build_problem(&cands, &groups, 1, 0.2)?;
//! let solution = solve(&problem, &SolverConfig::default())?.into_solution().unwrap();
//! assert_eq!(solution.lists()["u2"], ["d"]);
//! # Ok::<(), ugf_rerank::Error>(())
//! ```

pub mod error;
pub mod grouping;
pub mod ingest;
pub mod metrics;
pub mod mf;
pub mod pipeline;
pub mod rerank;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use grouping::{assign_groups, GroupingConfig};
pub use ingest::{parse_interactions, sample_candidates, split_dataset, NegativeSamplingConfig, SplitConfig};
pub use metrics::{evaluate, f1_at_k, group_report, ndcg_at_k};
pub use mf::{train_bpr, FactorModel, TrainConfig};
pub use rerank::{build_problem, solve, RerankProblem, RerankSolution, SolveOutcome, SolverConfig, SolverMode};
pub use types::{
    Candidate, CandidateSet, DatasetSplit, Group, GroupAssignment, GroupReport, GroupingMethod, Interaction,
    InteractionLog, MetricName,
};
