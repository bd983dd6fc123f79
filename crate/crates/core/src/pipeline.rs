//! Experiment plumbing shared by the command line tool and the examples:
//! seed sub-streams, baseline-vs-reranked reports, epsilon sweeps and the
//! sweep chart.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{assign_groups, GroupingConfig};
use crate::ingest::{sample_candidates, split_dataset, EvalPart, NegativeSamplingConfig, SplitConfig};
use crate::metrics::{baseline_lists, evaluate, percent2, ReportJson};
use crate::mf::{train_bpr_with_history, FactorModel, TrainConfig, TrainOutcome};
use crate::rerank::{build_problem, epsilon_from_baseline, solve, Diagnostics, SolveOutcome, SolverConfig};
use crate::types::{CandidateSet, DatasetSplit, GroupAssignment, GroupReport, InteractionLog};

/// Seed of the named sub-stream `stream` of `seed`.
///
/// Split, sampling and training draw from separate streams so that any one
/// stage can be rerun on its own and still see the same randomness.
pub fn sub_seed(seed: u64, stream: &str) -> u64 {
    // FNV-1a over the name, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// An epsilon given directly (on the `[0, 1]` metric scale) or as a multiple
/// of the baseline F1 gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSpec {
    Absolute(f64),
    Factor(f64),
}

impl EpsilonSpec {
    pub fn resolve(self, baseline_f1: &GroupReport) -> Result<f64> {
        match self {
            EpsilonSpec::Absolute(e) if e >= 0.0 => Ok(e),
            EpsilonSpec::Absolute(e) => Err(Error::Config(format!("epsilon {e} must be non-negative"))),
            EpsilonSpec::Factor(f) => epsilon_from_baseline(baseline_f1, f),
        }
    }
}

/// Parses an epsilon in percent; `inf` means unconstrained.
pub fn parse_percent(s: &str) -> Result<f64> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    match f64::from_str(t) {
        Ok(v) if v >= 0.0 => Ok(v / 100.0),
        _ => Err(Error::Config(format!("`{s}` is not a non-negative epsilon"))),
    }
}

/// Renders an internal epsilon in percent, `inf` for no constraint.
pub fn format_percent(e: f64) -> String {
    if e.is_infinite() {
        "inf".into()
    } else {
        format!("{}", e * 100.0)
    }
}

/// F1 and NDCG reports of one set of lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ListReports {
    pub f1: GroupReport,
    pub ndcg: GroupReport,
}

impl ListReports {
    /// Percent-scale rendering of both reports.
    pub fn json(&self, k: usize) -> ListReportsJson {
        ListReportsJson {
            f1: ReportJson::from_report(&self.f1, k),
            ndcg: ReportJson::from_report(&self.ndcg, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListReportsJson {
    pub f1: ReportJson,
    pub ndcg: ReportJson,
}

/// Result of reranking one candidate file.
#[derive(Debug, Clone)]
pub struct RerankRun {
    pub k: usize,
    pub epsilon: f64,
    pub before: ListReports,
    /// `None` when the solver found no feasible selection.
    pub after: Option<ListReports>,
    pub outcome: SolveOutcome,
}

/// The before/after report file of a rerank run (percent scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankReportJson {
    pub k: usize,
    pub epsilon: String,
    pub before: ListReportsJson,
    pub after: Option<ListReportsJson>,
}

impl RerankRun {
    pub fn report_json(&self) -> RerankReportJson {
        RerankReportJson {
            k: self.k,
            epsilon: format_percent(self.epsilon),
            before: self.before.json(self.k),
            after: self.after.as_ref().map(|a| a.json(self.k)),
        }
    }

    pub fn diagnostics(&self, with_timing: bool) -> Diagnostics {
        Diagnostics::from_outcome(&self.outcome, with_timing)
    }
}

/// Scores lists against the labels in `cands`.
pub fn evaluate_lists(
    cands: &[CandidateSet],
    lists: &std::collections::BTreeMap<String, Vec<String>>,
    groups: &GroupAssignment,
    k: usize,
) -> Result<ListReports> {
    let (f1, ndcg) = evaluate(cands, lists, groups, k)?;
    Ok(ListReports { f1, ndcg })
}

/// Keeps each user's best `top_n` candidates.
pub fn truncate_candidates(cands: &[CandidateSet], top_n: Option<usize>) -> Vec<CandidateSet> {
    match top_n {
        Some(n) => cands.iter().map(|c| c.truncated(n)).collect(),
        None => cands.to_vec(),
    }
}

/// Baseline report, epsilon resolution, solve, and report of the result.
pub fn rerank_candidates(
    cands: &[CandidateSet],
    groups: &GroupAssignment,
    k: usize,
    epsilon: EpsilonSpec,
    cfg: &SolverConfig,
) -> Result<RerankRun> {
    let before = evaluate_lists(cands, &baseline_lists(cands, k), groups, k)?;
    let epsilon = epsilon.resolve(&before.f1)?;
    let problem = build_problem(cands, groups, k, epsilon)?;
    let outcome = solve(&problem, cfg)?;
    let after = match outcome.solution() {
        Some(s) => Some(evaluate_lists(cands, &s.lists(), groups, k)?),
        None => None,
    };
    Ok(RerankRun {
        k,
        epsilon,
        before,
        after,
        outcome,
    })
}

/// One epsilon of a sweep. Metric values are on the `[0, 1]` scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub status: String,
    pub objective: Option<f64>,
    pub reports: Option<ListReports>,
    pub error: Option<String>,
}

/// Reranks once per grid entry, reusing the baseline. A failure at one
/// epsilon is recorded in its row and the sweep moves on.
pub fn sweep(
    cands: &[CandidateSet],
    groups: &GroupAssignment,
    k: usize,
    grid: &[EpsilonSpec],
    cfg: &SolverConfig,
) -> Result<(ListReports, Vec<SweepRow>)> {
    if grid.is_empty() {
        return Err(Error::Config("empty epsilon grid".into()));
    }
    let before = evaluate_lists(cands, &baseline_lists(cands, k), groups, k)?;
    let base = build_problem(cands, groups, k, f64::INFINITY)?;
    let mut rows = Vec::with_capacity(grid.len());
    for spec in grid {
        let mut epsilon = f64::NAN;
        let solved = spec.resolve(&before.f1).and_then(|e| {
            epsilon = e;
            solve(&base.with_epsilon(e)?, cfg)
        });
        let row = match solved {
            Ok(outcome) => {
                let diag = Diagnostics::from_outcome(&outcome, false);
                let reports = match outcome.solution() {
                    Some(s) => Some(evaluate_lists(cands, &s.lists(), groups, k)?),
                    None => None,
                };
                SweepRow {
                    epsilon,
                    status: diag.status,
                    objective: diag.objective,
                    reports,
                    error: None,
                }
            }
            Err(e) => SweepRow {
                epsilon,
                status: "error".into(),
                objective: None,
                reports: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok((before, rows))
}

const SWEEP_HEADER: [&str; 12] = [
    "epsilon",
    "status",
    "objective",
    "f1_overall",
    "f1_advantaged",
    "f1_disadvantaged",
    "ndcg_overall",
    "ndcg_advantaged",
    "ndcg_disadvantaged",
    "ugf_f1",
    "ugf_ndcg",
    "error",
];

/// Writes sweep rows as CSV; epsilon and metrics in percent, two decimals.
pub fn write_sweep<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let mut rec = vec![format_percent(r.epsilon), r.status.clone()];
        rec.push(r.objective.map(|o| o.to_string()).unwrap_or_default());
        match &r.reports {
            Some(m) => {
                for g in [&m.f1, &m.ndcg] {
                    rec.extend([g.overall, g.advantaged, g.disadvantaged].map(|v| percent2(v).to_string()));
                }
                rec.push(percent2(m.f1.ugf).to_string());
                rec.push(percent2(m.ndcg.ugf).to_string());
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 8)),
        }
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Internal(e.to_string()))?;
    Ok(())
}

/// Two-panel line chart (F1@K and NDCG@K) with overall, advantaged and
/// disadvantaged series against the sweep grid. The x axis is categorical in
/// grid order so that an unconstrained entry can sit next to finite ones.
pub fn sweep_svg(rows: &[SweepRow], k: usize) -> String {
    const W: f64 = 420.0;
    const H: f64 = 300.0;
    const PAD: f64 = 48.0;
    let series: [(&str, &str, fn(&GroupReport) -> f64); 3] = [
        ("Overall", "#1f77b4", |g| g.overall),
        ("Adv.", "#d62728", |g| g.advantaged),
        ("Disadv.", "#2ca02c", |g| g.disadvantaged),
    ];
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        2.0 * W,
        H + 30.0
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (panel, name) in [(0usize, format!("F1@{k}")), (1, format!("NDCG@{k}"))] {
        let pick = |m: &ListReports| if panel == 0 { m.f1.clone() } else { m.ndcg.clone() };
        let values: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.reports.as_ref())
            .flat_map(|m| {
                let g = pick(m);
                series.map(|s| s.2(&g) * 100.0)
            })
            .collect();
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo.is_finite() {
            let pad = ((hi - lo) * 0.1).max(0.5);
            ((lo - pad).max(0.0), hi + pad)
        } else {
            (0.0, 1.0)
        };
        let x0 = panel as f64 * W;
        let x = |i: usize| {
            let n = rows.len().max(2) - 1;
            x0 + PAD + (W - 2.0 * PAD) * i as f64 / n as f64
        };
        let y = |v: f64| H - PAD + 20.0 - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{name}</text>"#,
            x0 + W / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{a}" y1="{b}" x2="{c}" y2="{b}" stroke="black"/><line x1="{a}" y1="{d}" x2="{a}" y2="{b}" stroke="black"/>"#,
            a = x0 + PAD,
            b = y(lo),
            c = x0 + W - PAD,
            d = y(hi)
        );
        for t in 0..=4 {
            let v = lo + (hi - lo) * f64::from(t) / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#,
                x0 + PAD - 4.0,
                y(v) + 4.0
            );
        }
        for (i, r) in rows.iter().enumerate() {
            let label = if r.epsilon.is_infinite() {
                "\u{221e}".to_string()
            } else {
                format!("{:.2}", r.epsilon * 100.0)
            };
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#,
                x(i),
                y(lo) + 16.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">epsilon (%)</text>"#,
            x0 + W / 2.0,
            H + 24.0
        );
        for (si, (label, color, f)) in series.iter().enumerate() {
            let pts: Vec<String> = rows
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.reports.as_ref().map(|m| format!("{:.2},{:.2}", x(i), y(f(&pick(m)) * 100.0))))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = 34.0 + 14.0 * si as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="{a}" y1="{ly}" x2="{b}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{c}" y="{d}">{label}</text>"#,
                a = x0 + W - PAD - 70.0,
                b = x0 + W - PAD - 52.0,
                c = x0 + W - PAD - 48.0,
                d = ly + 4.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Everything needed to go from a raw log to scored candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub split: SplitConfig,
    pub grouping: GroupingConfig,
    pub train: TrainConfig,
    pub sampling: NegativeSamplingConfig,
    pub part: EvalPart,
}

impl PipelineConfig {
    /// Defaults with every stage seeded from its own sub-stream of `seed`.
    pub fn seeded(seed: u64) -> Self {
        PipelineConfig {
            split: SplitConfig {
                seed: sub_seed(seed, "split"),
                ..SplitConfig::default()
            },
            grouping: GroupingConfig::default(),
            train: TrainConfig {
                seed: sub_seed(seed, "train"),
                ..TrainConfig::default()
            },
            sampling: NegativeSamplingConfig {
                n_negatives: 100,
                seed: sub_seed(seed, "sampling"),
            },
            part: EvalPart::Test,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub groups: GroupAssignment,
    pub training: TrainOutcome,
    pub candidates: Vec<CandidateSet>,
}

impl Prepared {
    pub fn model(&self) -> &FactorModel {
        &self.training.model
    }
}

/// Split, group on train, fit BPR with validation model selection, and
/// score sampled evaluation candidates.
pub fn prepare(log: &InteractionLog, cfg: &PipelineConfig) -> Result<Prepared> {
    let split = split_dataset(log, &cfg.split)?;
    let groups = assign_groups(&split.train, &cfg.grouping)?;
    let training = train_bpr_with_history(&split.train, Some(&split.validation), &cfg.train)?;
    let candidates = sample_candidates(&split, &training.model, &cfg.sampling, cfg.part)?;
    Ok(Prepared {
        split,
        groups,
        training,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rerank::SolverMode;
    use crate::types::Candidate;

    fn toy() -> (Vec<CandidateSet>, GroupAssignment) {
        let cands = vec![
            CandidateSet::new("u1", vec![Candidate::new("a", 0.9, true), Candidate::new("b", 0.5, false)], 1).unwrap(),
            CandidateSet::new("u2", vec![Candidate::new("c", 0.8, false), Candidate::new("d", 0.7, true)], 1).unwrap(),
        ];
        let groups = GroupAssignment::new(["u1".into()].into(), ["u2".into()].into(), None, None).unwrap();
        (cands, groups)
    }

    #[test]
    fn sub_seeds_differ_by_name_and_seed() {
        assert_ne!(sub_seed(1, "split"), sub_seed(1, "train"));
        assert_ne!(sub_seed(1, "split"), sub_seed(2, "split"));
        assert_eq!(sub_seed(7, "train"), sub_seed(7, "train"));
    }

    #[test]
    fn percent_parsing() {
        assert_eq!(parse_percent("inf").unwrap(), f64::INFINITY);
        assert!((parse_percent("11.755").unwrap() - 0.11755).abs() < 1e-15);
        assert!(parse_percent("-1").is_err());
        assert!(parse_percent("x").is_err());
        assert_eq!(format_percent(f64::INFINITY), "inf");
    }

    #[test]
    fn factor_half_halves_the_gap() {
        let (cands, groups) = toy();
        let run = rerank_candidates(&cands, &groups, 1, EpsilonSpec::Factor(0.5), &SolverConfig::default()).unwrap();
        assert_eq!(run.before.f1.ugf, 1.0);
        assert_eq!(run.epsilon, 0.5);
        let after = run.after.unwrap();
        assert_eq!(after.f1.ugf, 0.0);
        assert_eq!(after.f1.disadvantaged, 1.0);
    }

    #[test]
    fn single_entry_sweep_matches_rerank() {
        let (cands, groups) = toy();
        let cfg = SolverConfig::with_mode(SolverMode::Exact);
        let run = rerank_candidates(&cands, &groups, 1, EpsilonSpec::Absolute(0.2), &cfg).unwrap();
        let (before, rows) = sweep(&cands, &groups, 1, &[EpsilonSpec::Absolute(0.2)], &cfg).unwrap();
        assert_eq!(before, run.before);
        assert_eq!(rows[0].reports, run.after);
        assert_eq!(rows[0].objective, run.outcome.solution().map(|s| s.objective_value));
    }

    #[test]
    fn sweep_csv_and_chart() {
        let (cands, groups) = toy();
        let grid = [EpsilonSpec::Absolute(f64::INFINITY), EpsilonSpec::Factor(0.5), EpsilonSpec::Absolute(0.0)];
        let (_, rows) = sweep(&cands, &groups, 1, &grid, &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_sweep(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        let fields = |i: usize| lines[i].split(',').collect::<Vec<_>>();
        assert_eq!(fields(1)[..2], ["inf", "optimal"]);
        assert!((fields(1)[2].parse::<f64>().unwrap() - 1.7).abs() < 1e-12);
        assert_eq!(fields(1)[3..6], ["50", "100", "0"]);
        assert_eq!(fields(2)[0], "50");
        assert_eq!(fields(3)[..6], ["0", "optimal", "1.6", "100", "100", "100"]);
        let svg = sweep_svg(&rows, 1);
        assert_eq!(svg.matches("<polyline").count(), 6);
        assert!(svg.contains("F1@1") && svg.contains("NDCG@1"));
    }

    #[test]
    fn sweep_records_failures_in_row() {
        let (cands, groups) = toy();
        let grid = [EpsilonSpec::Factor(-1.0), EpsilonSpec::Absolute(0.0)];
        let (_, rows) = sweep(&cands, &groups, 1, &grid, &SolverConfig::default()).unwrap();
        assert_eq!(rows[0].status, "error");
        assert!(rows[0].error.as_deref().unwrap().contains("factor"));
        assert_eq!(rows[1].status, "optimal");
    }
}
