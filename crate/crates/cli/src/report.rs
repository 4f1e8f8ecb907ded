//! Report assembly: aggregates a record stream into per-planner tables
//! (severity x complexity x relation, filtered-vs-random deltas, baseline
//! rows) plus suite and accounting summaries. Built purely from the config
//! and the records, so a stored stream summarizes to exactly the report its
//! run produced.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use planprobe_core::baselines::BaselineId;
use planprobe_core::detector::{RelationTag, Severity};
use planprobe_core::diversity::{violation_diversity_from_parts, DiversityReport};
use planprobe_core::gridworld::Action;
use planprobe_core::metamorphic::MRKind;
use planprobe_core::planners::PlannerId;
use planprobe_core::seeds::{fnv1a64, mix2};
use planprobe_core::Real;

use crate::config::{CampaignConfig, FilterArm};
use crate::records::{CampaignRecord, RecordStatus};
use crate::suite::{ComplexityClass, SuiteCase};

/// Case counts by complexity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub n_cases: usize,
    pub short: usize,
    pub medium: usize,
    pub long: usize,
}

/// Violation counts at one complexity, split by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityCell {
    pub complexity: ComplexityClass,
    pub severe: usize,
    pub moderate: usize,
    pub slight: usize,
}

impl SeverityCell {
    fn total(&self) -> usize {
        self.severe + self.moderate + self.slight
    }
}

/// Diversity result without the per-case label vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VdSummary {
    pub n: usize,
    pub vd: usize,
    pub k_view: usize,
    pub k_action: usize,
    pub silhouette_view: Real,
    pub silhouette_action: Real,
    pub small_pool: bool,
}

impl From<&DiversityReport> for VdSummary {
    fn from(r: &DiversityReport) -> VdSummary {
        VdSummary {
            n: r.n,
            vd: r.vd,
            k_view: r.k_view,
            k_action: r.k_action,
            silhouette_view: r.silhouette_view,
            silhouette_action: r.silhouette_action,
            small_pool: r.small_pool,
        }
    }
}

/// One (relation, arm) cell of a planner's table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrCell {
    pub mr: MRKind,
    pub arm: FilterArm,
    pub pairs: usize,
    /// Pairs where both episodes succeeded and costs were compared.
    pub compared: usize,
    pub followup_failures: usize,
    pub violations: usize,
    /// Violations per compared pair, percent, 0.1 pp resolution.
    pub violation_rate_pct: Real,
    /// Violations per emitted pair (failures in the denominator).
    pub violation_rate_of_all_pct: Real,
    pub severity: Vec<SeverityCell>,
    /// Per-cell diversity; absent when pooling across relations.
    pub vd: Option<VdSummary>,
}

/// Filtered-vs-random contrast for one relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDelta {
    pub mr: MRKind,
    pub filtered_rate_pct: Real,
    pub random_rate_pct: Real,
    /// filtered minus random, percentage points.
    pub rate_delta_pp: Real,
    pub filtered_vd: Option<usize>,
    pub random_vd: Option<usize>,
    pub vd_delta: Option<i64>,
}

/// Per-arm diversity over all relations merged, when pooling is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledVd {
    pub arm: FilterArm,
    pub vd: VdSummary,
}

/// One baseline's row in a planner's table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCell {
    pub baseline: BaselineId,
    pub pairs: usize,
    pub compared: usize,
    pub followup_failures: usize,
    pub placement_failures: usize,
    pub violations: usize,
    /// Violations per non-failed pair, percent, 0.1 pp resolution.
    pub violation_rate_pct: Real,
    pub severity: Vec<SeverityCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerReport {
    pub planner: PlannerId,
    /// Case ids whose source episode failed for this planner.
    pub source_failures: Vec<String>,
    pub relations: Vec<MrCell>,
    pub arm_deltas: Vec<ArmDelta>,
    pub pooled_vd: Vec<PooledVd>,
    pub baselines: Vec<BaselineCell>,
}

/// The record-count identity the stream must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub cases: usize,
    pub planners: usize,
    pub records_per_pair: usize,
    pub source_failures: usize,
    pub expected_records: usize,
    pub emitted_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub suite: SuiteSummary,
    pub planners: Vec<PlannerReport>,
    pub accounting: Accounting,
}

/// Percent with 0.1 pp resolution; zero denominators report 0.0.
fn pct(numerator: usize, denominator: usize) -> Real {
    if denominator == 0 {
        0.0
    } else {
        (1000.0 * numerator as Real / denominator as Real).round() / 10.0
    }
}

fn round_pp(x: Real) -> Real {
    (x * 10.0).round() / 10.0
}

fn severity_table(records: &[&CampaignRecord]) -> Vec<SeverityCell> {
    ComplexityClass::ALL
        .iter()
        .map(|&complexity| {
            let mut cell = SeverityCell { complexity, severe: 0, moderate: 0, slight: 0 };
            for r in records {
                if r.complexity != complexity || !r.violated {
                    continue;
                }
                match r.severity {
                    Some(Severity::Severe) => cell.severe += 1,
                    Some(Severity::Moderate) => cell.moderate += 1,
                    Some(Severity::Slight) => cell.slight += 1,
                    _ => {}
                }
            }
            cell
        })
        .collect()
}

/// A relation-arm violation pool: the encoded views and action sequences of
/// every violated, compared record, in stream order.
fn pool_parts(records: &[&CampaignRecord]) -> Result<(Vec<Vec<Real>>, Vec<Vec<Action>>), String> {
    let mut views = Vec::new();
    let mut actions = Vec::new();
    for r in records {
        if r.status != RecordStatus::Ok || !r.violated {
            continue;
        }
        let view = r.fu_view.clone().ok_or_else(|| {
            format!("{} {}: violated relation record lacks fu_view", r.source_id, r.mr.name())
        })?;
        let acts = r.fu_actions.clone().ok_or_else(|| {
            format!("{} {}: violated relation record lacks fu_actions", r.source_id, r.mr.name())
        })?;
        views.push(view);
        actions.push(acts);
    }
    Ok((views, actions))
}

fn pool_seed(cfg: &CampaignConfig, planner: PlannerId, mr: Option<MRKind>, arm: FilterArm) -> u64 {
    let key = match mr {
        Some(mr) => format!("pool:{}:{}:{}", planner.name(), mr.name(), arm.name()),
        None => format!("pool:{}:{}", planner.name(), arm.name()),
    };
    mix2(cfg.seed, fnv1a64(key.as_bytes()))
}

/// One diversity pool, as recomputed by the offline `cluster` operation.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterPool {
    pub planner: PlannerId,
    /// Absent when the pool merges all relations for one arm.
    pub mr: Option<MRKind>,
    pub arm: FilterArm,
    pub report: DiversityReport,
}

/// Recomputes every diversity pool from a record stream. This is the whole
/// `cluster` operation: records store the encoded views and action
/// sequences, so no episode is re-executed.
pub fn compute_vd_pools(
    cfg: &CampaignConfig,
    records: &[CampaignRecord],
) -> Result<Vec<ClusterPool>, String> {
    let mut pools = Vec::new();
    for &planner in &cfg.planners {
        for &arm in cfg.arms.arms() {
            let arm_records: Vec<&CampaignRecord> = records
                .iter()
                .filter(|r| {
                    r.planner == planner
                        && r.arm == Some(arm)
                        && matches!(r.mr, RelationTag::Mr(_))
                })
                .collect();
            if cfg.vd_pooled_across_mrs {
                let (views, actions) = pool_parts(&arm_records)?;
                let report = violation_diversity_from_parts(
                    &views,
                    &actions,
                    cfg.k_max,
                    pool_seed(cfg, planner, None, arm),
                );
                pools.push(ClusterPool { planner, mr: None, arm, report });
            } else {
                for mr in cfg.mrs_in_order() {
                    let cell: Vec<&CampaignRecord> = arm_records
                        .iter()
                        .copied()
                        .filter(|r| r.mr == RelationTag::Mr(mr))
                        .collect();
                    let (views, actions) = pool_parts(&cell)?;
                    let report = violation_diversity_from_parts(
                        &views,
                        &actions,
                        cfg.k_max,
                        pool_seed(cfg, planner, Some(mr), arm),
                    );
                    pools.push(ClusterPool { planner, mr: Some(mr), arm, report });
                }
            }
        }
    }
    Ok(pools)
}

/// Builds the report, validating the stream against the config on the way:
/// ids must belong to the suite, complexities must match, and every present
/// (case, planner) pair must hold exactly the configured record keys.
/// Violating any of these is a stream/config mismatch, reported as `Err`.
pub fn build_report(
    cfg: &CampaignConfig,
    suite: &[SuiteCase],
    records: &[CampaignRecord],
) -> Result<CampaignReport, String> {
    let suite_summary = SuiteSummary {
        n_cases: suite.len(),
        short: suite.iter().filter(|c| c.complexity == ComplexityClass::Short).count(),
        medium: suite.iter().filter(|c| c.complexity == ComplexityClass::Medium).count(),
        long: suite.iter().filter(|c| c.complexity == ComplexityClass::Long).count(),
    };

    // index and validate the stream
    let id_to_index: BTreeMap<&str, usize> =
        suite.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    let mut by_pair: BTreeMap<(usize, String), Vec<&CampaignRecord>> = BTreeMap::new();
    for r in records {
        let &index = id_to_index
            .get(r.source_id.as_str())
            .ok_or_else(|| format!("record for unknown case {}", r.source_id))?;
        if r.complexity != suite[index].complexity {
            return Err(format!(
                "{}: record complexity {} disagrees with the suite ({}); records do not \
                 belong to this config",
                r.source_id,
                r.complexity.name(),
                suite[index].complexity.name()
            ));
        }
        if !cfg.planners.contains(&r.planner) {
            return Err(format!(
                "{}: record for planner {} which this config does not enable",
                r.source_id,
                r.planner.name()
            ));
        }
        by_pair.entry((index, r.planner.name().to_string())).or_default().push(r);
    }

    // every present pair must carry exactly the configured keys
    let mut expected_keys: Vec<(String, Option<FilterArm>)> = Vec::new();
    for mr in cfg.mrs_in_order() {
        for &arm in cfg.arms.arms() {
            expected_keys.push((mr.name().to_string(), Some(arm)));
        }
    }
    for b in cfg.baselines_in_order() {
        expected_keys.push((b.name().to_string(), None));
    }
    let mut expected_sorted = expected_keys.clone();
    expected_sorted.sort();
    for ((index, planner), pair_records) in &by_pair {
        let mut keys: Vec<(String, Option<FilterArm>)> =
            pair_records.iter().map(|r| (r.mr.name().to_string(), r.arm)).collect();
        keys.sort();
        if keys != expected_sorted {
            return Err(format!(
                "case {index} planner {planner}: record keys disagree with the config \
                 ({} records, expected {})",
                keys.len(),
                expected_sorted.len()
            ));
        }
    }

    // a pair missing entirely is a source failure (when stages are enabled)
    let records_per_pair = cfg.records_per_pair();
    let mut failures_by_planner: BTreeMap<PlannerId, Vec<String>> =
        cfg.planners.iter().map(|&p| (p, Vec::new())).collect();
    if records_per_pair > 0 {
        for (index, case) in suite.iter().enumerate() {
            for &planner in &cfg.planners {
                if !by_pair.contains_key(&(index, planner.name().to_string())) {
                    failures_by_planner.get_mut(&planner).unwrap().push(case.id.clone());
                }
            }
        }
    }
    let source_failures: usize = failures_by_planner.values().map(Vec::len).sum();

    let accounting = Accounting {
        cases: suite.len(),
        planners: cfg.planners.len(),
        records_per_pair,
        source_failures,
        expected_records: (suite.len() * cfg.planners.len() - source_failures)
            * records_per_pair,
        emitted_records: records.len(),
    };
    if accounting.expected_records != accounting.emitted_records {
        return Err(format!(
            "record accounting broken: expected {} records, stream holds {}",
            accounting.expected_records, accounting.emitted_records
        ));
    }

    let pools = compute_vd_pools(cfg, records)?;
    let mut planners = Vec::new();
    for &planner in &cfg.planners {
        let planner_records: Vec<&CampaignRecord> =
            records.iter().filter(|r| r.planner == planner).collect();

        let mut relations = Vec::new();
        for mr in cfg.mrs_in_order() {
            for &arm in cfg.arms.arms() {
                let cell: Vec<&CampaignRecord> = planner_records
                    .iter()
                    .copied()
                    .filter(|r| r.mr == RelationTag::Mr(mr) && r.arm == Some(arm))
                    .collect();
                let pairs = cell.len();
                let compared = cell.iter().filter(|r| r.status == RecordStatus::Ok).count();
                let violations = cell.iter().filter(|r| r.violated).count();
                let vd = if cfg.vd_pooled_across_mrs {
                    None
                } else {
                    pools
                        .iter()
                        .find(|p| p.planner == planner && p.mr == Some(mr) && p.arm == arm)
                        .map(|p| VdSummary::from(&p.report))
                };
                relations.push(MrCell {
                    mr,
                    arm,
                    pairs,
                    compared,
                    followup_failures: pairs - compared,
                    violations,
                    violation_rate_pct: pct(violations, compared),
                    violation_rate_of_all_pct: pct(violations, pairs),
                    severity: severity_table(&cell),
                    vd,
                });
            }
        }

        let both_arms = cfg.arms.arms().len() == 2;
        let mut arm_deltas = Vec::new();
        if both_arms {
            for mr in cfg.mrs_in_order() {
                let get = |arm: FilterArm| {
                    relations
                        .iter()
                        .find(|c| c.mr == mr && c.arm == arm)
                        .expect("both arm cells were just built")
                };
                let f = get(FilterArm::Filtered);
                let r = get(FilterArm::Random);
                let filtered_vd = f.vd.as_ref().map(|v| v.vd);
                let random_vd = r.vd.as_ref().map(|v| v.vd);
                arm_deltas.push(ArmDelta {
                    mr,
                    filtered_rate_pct: f.violation_rate_pct,
                    random_rate_pct: r.violation_rate_pct,
                    rate_delta_pp: round_pp(f.violation_rate_pct - r.violation_rate_pct),
                    filtered_vd,
                    random_vd,
                    vd_delta: match (filtered_vd, random_vd) {
                        (Some(a), Some(b)) => Some(a as i64 - b as i64),
                        _ => None,
                    },
                });
            }
        }

        let pooled_vd: Vec<PooledVd> = if cfg.vd_pooled_across_mrs {
            pools
                .iter()
                .filter(|p| p.planner == planner && p.mr.is_none())
                .map(|p| PooledVd { arm: p.arm, vd: VdSummary::from(&p.report) })
                .collect()
        } else {
            Vec::new()
        };

        let mut baselines = Vec::new();
        for baseline in cfg.baselines_in_order() {
            let cell: Vec<&CampaignRecord> = planner_records
                .iter()
                .copied()
                .filter(|r| r.mr == RelationTag::Baseline(baseline))
                .collect();
            let pairs = cell.len();
            let compared = cell.iter().filter(|r| r.status == RecordStatus::Ok).count();
            let followup_failures =
                cell.iter().filter(|r| r.status == RecordStatus::FollowupFailed).count();
            let placement_failures =
                cell.iter().filter(|r| r.status == RecordStatus::PlacementFailed).count();
            let violations = cell.iter().filter(|r| r.violated).count();
            baselines.push(BaselineCell {
                baseline,
                pairs,
                compared,
                followup_failures,
                placement_failures,
                violations,
                violation_rate_pct: pct(violations, compared),
                severity: severity_table(&cell),
            });
        }

        planners.push(PlannerReport {
            planner,
            source_failures: failures_by_planner.remove(&planner).unwrap_or_default(),
            relations,
            arm_deltas,
            pooled_vd,
            baselines,
        });
    }

    Ok(CampaignReport { config: cfg.clone(), suite: suite_summary, planners, accounting })
}

// ---------------------------------------------------------------------------
// Renderers
// ---------------------------------------------------------------------------

fn csv_row(out: &mut String, cells: [&str; 7]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

/// Flat CSV: one metric per row, the `section` column naming the table the
/// row belongs to.
pub fn render_csv(report: &CampaignReport) -> String {
    let mut out = String::new();
    csv_row(&mut out, ["section", "planner", "relation", "arm", "complexity", "metric", "value"]);

    let s = &report.suite;
    for (metric, value) in [
        ("n_cases", s.n_cases),
        ("short", s.short),
        ("medium", s.medium),
        ("long", s.long),
    ] {
        csv_row(&mut out, ["suite", "", "", "", "", metric, &value.to_string()]);
    }

    for p in &report.planners {
        let planner = p.planner.name();
        csv_row(&mut out, [
            "failures",
            planner,
            "",
            "",
            "",
            "source_failures",
            &p.source_failures.len().to_string(),
        ]);
        for c in &p.relations {
            let (mr, arm) = (c.mr.name(), c.arm.name());
            for (metric, value) in [
                ("pairs", c.pairs.to_string()),
                ("compared", c.compared.to_string()),
                ("followup_failures", c.followup_failures.to_string()),
                ("violations", c.violations.to_string()),
                ("violation_rate_pct", format!("{:.1}", c.violation_rate_pct)),
                ("violation_rate_of_all_pct", format!("{:.1}", c.violation_rate_of_all_pct)),
            ] {
                csv_row(&mut out, ["cells", planner, mr, arm, "", metric, &value]);
            }
            for row in &c.severity {
                let complexity = row.complexity.name();
                for (metric, value) in
                    [("severe", row.severe), ("moderate", row.moderate), ("slight", row.slight)]
                {
                    csv_row(
                        &mut out,
                        ["severity", planner, mr, arm, complexity, metric, &value.to_string()],
                    );
                }
            }
            if let Some(vd) = &c.vd {
                for (metric, value) in [
                    ("pool_n", vd.n.to_string()),
                    ("vd", vd.vd.to_string()),
                    ("k_view", vd.k_view.to_string()),
                    ("k_action", vd.k_action.to_string()),
                    ("silhouette_view", format!("{:.4}", vd.silhouette_view)),
                    ("silhouette_action", format!("{:.4}", vd.silhouette_action)),
                ] {
                    csv_row(&mut out, ["vd", planner, mr, arm, "", metric, &value]);
                }
            }
        }
        for d in &p.arm_deltas {
            let mr = d.mr.name();
            let mut rows: Vec<(&str, String)> = vec![
                ("filtered_rate_pct", format!("{:.1}", d.filtered_rate_pct)),
                ("random_rate_pct", format!("{:.1}", d.random_rate_pct)),
                ("rate_delta_pp", format!("{:.1}", d.rate_delta_pp)),
            ];
            if let (Some(f), Some(r)) = (d.filtered_vd, d.random_vd) {
                rows.push(("filtered_vd", f.to_string()));
                rows.push(("random_vd", r.to_string()));
                rows.push(("vd_delta", d.vd_delta.unwrap_or(0).to_string()));
            }
            for (metric, value) in rows {
                csv_row(&mut out, ["delta", planner, mr, "", "", metric, &value]);
            }
        }
        for pooled in &p.pooled_vd {
            for (metric, value) in [
                ("pool_n", pooled.vd.n.to_string()),
                ("vd", pooled.vd.vd.to_string()),
            ] {
                csv_row(&mut out, ["pooled_vd", planner, "", pooled.arm.name(), "", metric, &value]);
            }
        }
        for b in &p.baselines {
            let name = b.baseline.name();
            for (metric, value) in [
                ("pairs", b.pairs.to_string()),
                ("compared", b.compared.to_string()),
                ("followup_failures", b.followup_failures.to_string()),
                ("placement_failures", b.placement_failures.to_string()),
                ("violations", b.violations.to_string()),
                ("violation_rate_pct", format!("{:.1}", b.violation_rate_pct)),
            ] {
                csv_row(&mut out, ["baseline", planner, name, "", "", metric, &value]);
            }
            for row in &b.severity {
                if row.total() == 0 {
                    continue;
                }
                let complexity = row.complexity.name();
                for (metric, value) in
                    [("severe", row.severe), ("moderate", row.moderate), ("slight", row.slight)]
                {
                    csv_row(
                        &mut out,
                        ["severity", planner, name, "", complexity, metric, &value.to_string()],
                    );
                }
            }
        }
    }

    let a = &report.accounting;
    for (metric, value) in [
        ("cases", a.cases),
        ("planners", a.planners),
        ("records_per_pair", a.records_per_pair),
        ("source_failures", a.source_failures),
        ("expected_records", a.expected_records),
        ("emitted_records", a.emitted_records),
    ] {
        csv_row(&mut out, ["accounting", "", "", "", "", metric, &value.to_string()]);
    }
    out
}

/// Human-oriented plain-text tables.
pub fn render_text(report: &CampaignReport) -> String {
    let mut out = String::new();
    let s = &report.suite;
    out.push_str("campaign report\n===============\n\n");
    out.push_str(&format!(
        "suite: {} cases (SHORT {}, MEDIUM {}, LONG {})\nseed {} | planners {} | \
         relations {} | baselines {}\n",
        s.n_cases,
        s.short,
        s.medium,
        s.long,
        report.config.seed,
        report.config.planners.len(),
        report.config.mrs.len(),
        report.config.baselines.len(),
    ));

    for p in &report.planners {
        out.push_str(&format!("\nplanner {}\n", p.planner.name()));
        out.push_str(&format!("{}\n", "-".repeat(8 + p.planner.name().len())));
        if p.source_failures.is_empty() {
            out.push_str("source failures: none\n");
        } else {
            out.push_str(&format!(
                "source failures: {} ({})\n",
                p.source_failures.len(),
                p.source_failures.join(", ")
            ));
        }

        if !p.relations.is_empty() {
            out.push_str("\nrelation   arm       pairs  cmp  fail  viol  rate%   all%    vd\n");
            for c in &p.relations {
                let vd = c.vd.as_ref().map_or_else(|| "-".to_string(), |v| v.vd.to_string());
                out.push_str(&format!(
                    "{:<10} {:<9} {:>5} {:>4} {:>5} {:>5} {:>6.1} {:>6.1} {:>5}\n",
                    c.mr.name(),
                    c.arm.name(),
                    c.pairs,
                    c.compared,
                    c.followup_failures,
                    c.violations,
                    c.violation_rate_pct,
                    c.violation_rate_of_all_pct,
                    vd,
                ));
            }

            out.push_str("\nseverity x complexity (violations)\n");
            out.push_str("relation   arm       complexity  severe  moderate  slight\n");
            let mut any = false;
            for c in &p.relations {
                for row in &c.severity {
                    if row.total() == 0 {
                        continue;
                    }
                    any = true;
                    out.push_str(&format!(
                        "{:<10} {:<9} {:<11} {:>6} {:>9} {:>7}\n",
                        c.mr.name(),
                        c.arm.name(),
                        row.complexity.name(),
                        row.severe,
                        row.moderate,
                        row.slight,
                    ));
                }
            }
            if !any {
                out.push_str("(no violations)\n");
            }
        }

        if !p.arm_deltas.is_empty() {
            out.push_str("\nfiltered vs random\n");
            out.push_str("relation   rate_f%  rate_r%  delta_pp  vd_f  vd_r  vd_delta\n");
            for d in &p.arm_deltas {
                let fmt_opt = |v: Option<usize>| v.map_or_else(|| "-".into(), |x: usize| x.to_string());
                let fmt_delta =
                    |v: Option<i64>| v.map_or_else(|| "-".into(), |x: i64| format!("{x:+}"));
                out.push_str(&format!(
                    "{:<10} {:>7.1} {:>8.1} {:>9.1} {:>5} {:>5} {:>9}\n",
                    d.mr.name(),
                    d.filtered_rate_pct,
                    d.random_rate_pct,
                    d.rate_delta_pp,
                    fmt_opt(d.filtered_vd),
                    fmt_opt(d.random_vd),
                    fmt_delta(d.vd_delta),
                ));
            }
        }

        for pooled in &p.pooled_vd {
            out.push_str(&format!(
                "pooled diversity [{}]: vd {} over {} violations\n",
                pooled.arm.name(),
                pooled.vd.vd,
                pooled.vd.n
            ));
        }

        if !p.baselines.is_empty() {
            out.push_str("\nbaselines\n");
            out.push_str("baseline      pairs  cmp  fail  place_fail  viol  rate%\n");
            for b in &p.baselines {
                out.push_str(&format!(
                    "{:<13} {:>5} {:>4} {:>5} {:>10} {:>5} {:>6.1}\n",
                    b.baseline.name(),
                    b.pairs,
                    b.compared,
                    b.followup_failures,
                    b.placement_failures,
                    b.violations,
                    b.violation_rate_pct,
                ));
            }
        }
    }

    let a = &report.accounting;
    out.push_str(&format!(
        "\naccounting: ({} cases x {} planners - {} source failures) x {} records/pair = {} \
         expected; {} emitted\n",
        a.cases, a.planners, a.source_failures, a.records_per_pair, a.expected_records,
        a.emitted_records,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ArmChoice;
    use crate::runner::run_campaign;
    use crate::suite::generate_suite;
    use planprobe_core::metamorphic::MRKind;

    fn small_cfg(seed: u64, n: usize) -> CampaignConfig {
        let mut cfg = CampaignConfig::minimal(seed, n);
        cfg.generation.width = 9;
        cfg.generation.height = 9;
        cfg
    }

    #[test]
    fn empty_record_streams_report_all_zero_tables() {
        let mut cfg = small_cfg(3, 2);
        cfg.mrs = vec![];
        cfg.baselines = vec![];
        let suite = generate_suite(&cfg).unwrap();
        let report = build_report(&cfg, &suite, &[]).unwrap();
        assert_eq!(report.accounting.emitted_records, 0);
        assert_eq!(report.accounting.expected_records, 0);
        assert_eq!(report.accounting.source_failures, 0);
        for p in &report.planners {
            assert!(p.relations.is_empty());
            assert!(p.baselines.is_empty());
        }
        // renders still work on the degenerate shape
        assert!(render_text(&report).contains("campaign report"));
        assert!(render_csv(&report).starts_with("section,planner"));
    }

    #[test]
    fn a_hand_built_stream_yields_a_thirty_percent_rate() {
        use crate::records::{CampaignRecord, RecordStatus};
        use planprobe_core::detector::RelationTag;

        let mut cfg = small_cfg(17, 10);
        cfg.planners = vec![PlannerId::OracleOptimal];
        cfg.mrs = vec![MRKind::Position];
        cfg.arms = ArmChoice::Filtered;
        cfg.baselines = vec![];
        let suite = generate_suite(&cfg).unwrap();

        let records: Vec<CampaignRecord> = suite
            .iter()
            .enumerate()
            .map(|(i, case)| {
                let violated = i < 3;
                CampaignRecord {
                    source_id: case.id.clone(),
                    planner: PlannerId::OracleOptimal,
                    mr: RelationTag::Mr(MRKind::Position),
                    arm: Some(FilterArm::Filtered),
                    complexity: case.complexity,
                    status: RecordStatus::Ok,
                    c_s: Some(20.0),
                    c_f: Some(if violated { 15.0 } else { 20.0 }),
                    violated,
                    vs: Some(if violated { 0.25 } else { 0.0 }),
                    severity: Some(if violated { Severity::Severe } else { Severity::None }),
                    followup: serde_json::json!({"kind": "POSITION"}),
                    fu_view: Some(vec![i as Real; 16]),
                    fu_actions: Some(vec![Action::MoveAhead; i + 1]),
                }
            })
            .collect();

        let report = build_report(&cfg, &suite, &records).unwrap();
        let cell = &report.planners[0].relations[0];
        assert_eq!(cell.pairs, 10);
        assert_eq!(cell.violations, 3);
        assert_eq!(cell.violation_rate_pct, 30.0);
        let severe: usize = cell.severity.iter().map(|r| r.severe).sum();
        assert_eq!(severe, 3);
        assert_eq!(cell.vd.as_ref().unwrap().n, 3);
    }

    #[test]
    fn rates_round_to_a_tenth_of_a_point() {
        assert_eq!(pct(1, 3), 33.3);
        assert_eq!(pct(2, 3), 66.7);
        assert_eq!(pct(1, 7), 14.3);
        assert_eq!(pct(0, 0), 0.0);
        assert_eq!(pct(254, 367), 69.2);
    }

    #[test]
    fn mismatched_streams_are_rejected_with_context() {
        let cfg = small_cfg(29, 2);
        let suite = generate_suite(&cfg).unwrap();
        let outcome = run_campaign(&cfg, 1).unwrap();

        // a record claiming a case the suite does not contain
        let mut foreign = outcome.records.clone();
        foreign[0].source_id = "case-00099".into();
        let err = build_report(&cfg, &suite, &foreign).unwrap_err();
        assert!(err.contains("case-00099"), "{err}");

        // a record whose complexity disagrees with the regenerated suite
        let mut drifted = outcome.records.clone();
        drifted[0].complexity = ComplexityClass::Long;
        let err = build_report(&cfg, &suite, &drifted).unwrap_err();
        assert!(err.contains("complexity") || err.contains("LONG"), "{err}");

        // a duplicated record breaks the per-pair key set
        let mut duplicated = outcome.records.clone();
        let copy = duplicated[0].clone();
        duplicated.push(copy);
        assert!(build_report(&cfg, &suite, &duplicated).is_err());

        // dropping one record is likewise caught
        let mut truncated = outcome.records.clone();
        truncated.pop();
        assert!(build_report(&cfg, &suite, &truncated).is_err());
    }

    #[test]
    fn summarizing_a_run_reproduces_its_own_report() {
        let cfg = small_cfg(41, 3);
        let outcome = run_campaign(&cfg, 1).unwrap();
        let suite = generate_suite(&cfg).unwrap();
        let rebuilt = build_report(&cfg, &suite, &outcome.records).unwrap();
        assert_eq!(
            serde_json::to_string(&rebuilt).unwrap(),
            serde_json::to_string(&outcome.report).unwrap()
        );
    }

    #[test]
    fn pooled_mode_moves_diversity_out_of_the_cells() {
        let mut cfg = small_cfg(53, 3);
        cfg.vd_pooled_across_mrs = true;
        let outcome = run_campaign(&cfg, 1).unwrap();
        for p in &outcome.report.planners {
            assert!(p.relations.iter().all(|c| c.vd.is_none()));
            assert_eq!(p.pooled_vd.len(), 2, "one pooled entry per arm");
        }
    }

    #[test]
    fn cluster_pools_recompute_from_records_alone() {
        let cfg = small_cfg(67, 3);
        let outcome = run_campaign(&cfg, 1).unwrap();
        let pools = compute_vd_pools(&cfg, &outcome.records).unwrap();
        // 4 planners x 4 relations x 2 arms
        assert_eq!(pools.len(), 4 * 4 * 2);
        for pool in &pools {
            let cell = outcome.report.planners.iter().find(|p| p.planner == pool.planner).and_then(
                |p| {
                    p.relations
                        .iter()
                        .find(|c| Some(c.mr) == pool.mr && c.arm == pool.arm)
                        .and_then(|c| c.vd.as_ref())
                },
            );
            assert_eq!(cell, Some(&VdSummary::from(&pool.report)));
        }
    }
}
