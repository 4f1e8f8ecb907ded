//! Campaign execution: the case x planner x relation x arm matrix plus the
//! baseline battery, streamed into records. One pair seed per (case,
//! planner) derives every stochastic input downstream, so reruns — and
//! single-case replays — are bit-reproducible regardless of job count.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use planprobe_core::baselines::{
    default_pbt_sp_indices, pbt_nr_check, pbt_sp_run, place_obstacles, transform_case, BaselineId,
    GridTransform,
};
use planprobe_core::detector::{compute_cost, detect_violation, DetectionOutcome, RelationTag};
use planprobe_core::diversity::{encode_view, ViewEncodingParams};
use planprobe_core::filter::{
    select_action, select_condition, select_position_with, select_random, select_scene,
    SemanticDistanceTable,
};
use planprobe_core::gridworld::{Action, GridEnvironment};
use planprobe_core::metamorphic::{
    gen_action_candidates, gen_action_candidates_at, gen_condition_candidates_with,
    gen_position_candidates, gen_scene_candidates, run_followup, FollowUpCase, MRKind, SourceCase,
};
use planprobe_core::planners::{execute_episode, EpisodeResult, PlannerId};
use planprobe_core::seeds::{fnv1a64, mix2, mix3};
use planprobe_core::Real;

use crate::config::{CampaignConfig, ConfigError, FilterArm};
use crate::records::{CampaignRecord, RecordStatus, RecordsError};
use crate::report::{build_report, CampaignReport};
use crate::suite::{generate_case, generate_suite, parse_case_id, step_budget, SuiteCase, SuiteError};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Records(#[from] RecordsError),
    #[error("{0}")]
    Validation(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("internal invariant breached: {0}")]
    Invariant(String),
}

impl CampaignError {
    /// Process exit code: 1 for validation problems, 2 for I/O, 3 for
    /// internal invariant breaches.
    pub fn exit_code(&self) -> i32 {
        match self {
            CampaignError::Config(ConfigError::Io { .. }) => 2,
            CampaignError::Config(_) => 1,
            CampaignError::Suite(_) => 1,
            CampaignError::Records(RecordsError::Io { .. }) => 2,
            CampaignError::Records(_) => 1,
            CampaignError::Validation(_) => 1,
            CampaignError::Io { .. } => 2,
            CampaignError::Invariant(_) => 3,
        }
    }
}

/// A (case, planner) pair whose source episode failed: the whole pair is
/// skipped and contributes zero records.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceFailure {
    pub source_id: String,
    pub planner: PlannerId,
}

/// Every record produced for one suite case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutput {
    pub records: Vec<CampaignRecord>,
    pub fanout: Vec<CampaignRecord>,
    pub failures: Vec<SourceFailure>,
}

/// A finished campaign, before anything is written to disk.
#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub suite: Vec<SuiteCase>,
    pub records: Vec<CampaignRecord>,
    pub fanout: Vec<CampaignRecord>,
    pub failures: Vec<SourceFailure>,
    pub report: CampaignReport,
}

/// Loads the action distance table named by the config, or the built-in one.
pub fn load_semantic_table(cfg: &CampaignConfig) -> Result<SemanticDistanceTable, CampaignError> {
    match &cfg.semantic_table {
        None => Ok(SemanticDistanceTable::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| {
                CampaignError::Config(ConfigError::Io { path: path.display().to_string(), source })
            })?;
            SemanticDistanceTable::from_json(&text).map_err(|message| {
                CampaignError::Config(ConfigError::Invalid { field: "semantic_table", message })
            })
        }
    }
}

fn planner_ordinal(planner: PlannerId) -> u64 {
    PlannerId::ALL.iter().position(|&p| p == planner).expect("planner is in the id space") as u64
}

fn mr_ordinal(mr: MRKind) -> u64 {
    MRKind::ALL.iter().position(|&m| m == mr).expect("relation is in the id space") as u64
}

/// Root seed for one (case, planner) pair; every stream below derives from
/// it with fixed tags, so adding or removing stages never shifts the others.
fn pair_seed(cfg: &CampaignConfig, case_index: usize, planner: PlannerId) -> u64 {
    mix3(cfg.seed, case_index as u64, planner_ordinal(planner))
}

const TAG_SOURCE: u64 = 1;
const TAG_SCENE_POOL: u64 = 2;
const TAG_FOLLOWUP_BASE: u64 = 16; // + 2*mr_ordinal + arm_ordinal
const TAG_RANDOM_ARM_BASE: u64 = 32; // + mr_ordinal
const TAG_PBT_SP: u64 = 48;
const TAG_OBSTACLE_PLACE: u64 = 49;
const TAG_TRANSFORM_EP: u64 = 50;
const TAG_OBSTACLE_EP: u64 = 51;
const TAG_FANOUT_BASE: u64 = 64; // + mr_ordinal, then candidate index

fn arm_ordinal(arm: FilterArm) -> u64 {
    match arm {
        FilterArm::Filtered => 0,
        FilterArm::Random => 1,
    }
}

fn candidate_pool(
    cfg: &CampaignConfig,
    src: &SourceCase,
    mr: MRKind,
    scene_pool_seed: u64,
) -> Vec<FollowUpCase> {
    match mr {
        MRKind::Position => {
            gen_position_candidates(src).expect("suite guarantees a non-target object")
        }
        MRKind::Action => {
            if let Some(index) = cfg.action_substitution_index {
                if let Ok(cands) = gen_action_candidates_at(src, index) {
                    return cands;
                }
                // configured index invalid for this episode: midpoint default
            }
            gen_action_candidates(src).expect("suite guarantees at least 3 source steps")
        }
        MRKind::Condition => gen_condition_candidates_with(src, cfg.refine_max_distance),
        MRKind::Scene => gen_scene_candidates(src, cfg.scene_candidates, scene_pool_seed),
    }
}

fn select_filtered<'a>(
    cfg: &CampaignConfig,
    src: &SourceCase,
    table: &SemanticDistanceTable,
    mr: MRKind,
    candidates: &'a [FollowUpCase],
) -> &'a FollowUpCase {
    match mr {
        MRKind::Position => {
            select_position_with(candidates, &src.episode.trajectory, cfg.position_path_model)
        }
        MRKind::Action => {
            let FollowUpCase::Action { substitution_index, .. } = candidates[0] else {
                unreachable!("ACTION pool holds ACTION candidates");
            };
            let planned = src.episode.trajectory.actions[substitution_index];
            select_action(candidates, planned, table)
        }
        MRKind::Condition => select_condition(candidates, &src.task.condition),
        MRKind::Scene => select_scene(candidates, &src.env),
    }
}

fn followup_extras(
    ep: &EpisodeResult,
    env: &GridEnvironment,
) -> (Option<Vec<Real>>, Option<Vec<Action>>) {
    let params = ViewEncodingParams { width: env.width, height: env.height };
    (Some(encode_view(&ep.initial_observation, &params)), Some(ep.trajectory.actions.clone()))
}

/// The environment a follow-up episode runs in (the mutated scene for SCENE,
/// the source environment otherwise).
fn followup_env<'a>(src: &'a SourceCase, fu: &'a FollowUpCase) -> &'a GridEnvironment {
    match fu {
        FollowUpCase::Scene { mutated_env } => mutated_env,
        _ => &src.env,
    }
}

fn blank_record(
    case: &SuiteCase,
    planner: PlannerId,
    mr: impl Into<RelationTag>,
    arm: Option<FilterArm>,
    status: RecordStatus,
    followup: serde_json::Value,
) -> CampaignRecord {
    CampaignRecord {
        source_id: case.id.clone(),
        planner,
        mr: mr.into(),
        arm,
        complexity: case.complexity,
        status,
        c_s: None,
        c_f: None,
        violated: false,
        vs: None,
        severity: None,
        followup,
        fu_view: None,
        fu_actions: None,
    }
}

fn mr_record(
    cfg: &CampaignConfig,
    case: &SuiteCase,
    src: &SourceCase,
    planner: PlannerId,
    mr: MRKind,
    arm: Option<FilterArm>,
    selected: &FollowUpCase,
    fu_ep: &EpisodeResult,
) -> CampaignRecord {
    let payload = serde_json::to_value(selected).expect("follow-up cases serialize");
    let mut record =
        blank_record(case, planner, mr, arm, RecordStatus::FollowupFailed, payload);
    let (fu_view, fu_actions) = followup_extras(fu_ep, followup_env(src, selected));
    record.fu_view = fu_view;
    record.fu_actions = fu_actions;
    if let DetectionOutcome::Result(cmp) = detect_violation(&src.episode, fu_ep, mr, &cfg.cost_model)
    {
        record = record.with_comparison(&cmp);
    }
    record
}

/// Runs the full matrix for one suite case across all configured planners.
/// Record order is fixed: planner (config order), then relations in
/// canonical order with the filtered arm before the random arm, then
/// baselines in canonical order.
pub fn run_case(
    cfg: &CampaignConfig,
    case_index: usize,
    case: &SuiteCase,
    table: &SemanticDistanceTable,
) -> CaseOutput {
    let mut out =
        CaseOutput { records: Vec::new(), fanout: Vec::new(), failures: Vec::new() };
    let budget = step_budget(cfg, case);

    for &planner in &cfg.planners {
        let pb = pair_seed(cfg, case_index, planner);
        let src_ep = execute_episode(
            planner,
            &case.env,
            &case.task,
            case.start,
            budget,
            mix2(pb, TAG_SOURCE),
        );
        if !src_ep.success {
            out.failures.push(SourceFailure { source_id: case.id.clone(), planner });
            continue;
        }
        let src = SourceCase::new(case.env.clone(), case.task, case.start, src_ep)
            .expect("episode succeeded from the case start");
        let src_cost = compute_cost(&src.episode.trajectory, &cfg.cost_model);

        for mr in cfg.mrs_in_order() {
            let mo = mr_ordinal(mr);
            let candidates = candidate_pool(cfg, &src, mr, mix2(pb, TAG_SCENE_POOL));
            for &arm in cfg.arms.arms() {
                let selected = match arm {
                    FilterArm::Filtered => select_filtered(cfg, &src, table, mr, &candidates),
                    FilterArm::Random => {
                        select_random(&candidates, mix2(pb, TAG_RANDOM_ARM_BASE + mo))
                    }
                };
                let fu_seed = mix2(pb, TAG_FOLLOWUP_BASE + 2 * mo + arm_ordinal(arm));
                let fu_ep = run_followup(planner, &src, selected, budget, fu_seed);
                out.records
                    .push(mr_record(cfg, case, &src, planner, mr, Some(arm), selected, &fu_ep));
            }
            if cfg.fan_out {
                for (ci, candidate) in candidates.iter().enumerate() {
                    let seed = mix3(pb, TAG_FANOUT_BASE + mo, ci as u64);
                    let fu_ep = run_followup(planner, &src, candidate, budget, seed);
                    out.fanout
                        .push(mr_record(cfg, case, &src, planner, mr, None, candidate, &fu_ep));
                }
            }
        }

        for baseline in cfg.baselines_in_order() {
            let record = match baseline {
                BaselineId::PbtNr => {
                    let mut r = blank_record(
                        case,
                        planner,
                        baseline,
                        None,
                        RecordStatus::Ok,
                        json!({"kind": "PBT_NR"}),
                    );
                    r.c_s = Some(src_cost);
                    r.violated = pbt_nr_check(&src.episode);
                    r
                }
                BaselineId::PbtSp => {
                    let indices = default_pbt_sp_indices(src.steps());
                    let results = pbt_sp_run(planner, &src, &indices, budget, mix2(pb, TAG_PBT_SP))
                        .expect("default indices lie strictly inside the episode");
                    let hits: Vec<usize> =
                        results.iter().filter(|&&(_, v)| v).map(|&(i, _)| i).collect();
                    let mut r = blank_record(
                        case,
                        planner,
                        baseline,
                        None,
                        RecordStatus::Ok,
                        json!({"kind": "PBT_SP", "indices": indices, "violations": hits}),
                    );
                    r.c_s = Some(src_cost);
                    r.violated = !hits.is_empty();
                    r
                }
                BaselineId::MtObstacle => {
                    match place_obstacles(&src, cfg.n_obstacles, mix2(pb, TAG_OBSTACLE_PLACE)) {
                        Err(e) => blank_record(
                            case,
                            planner,
                            baseline,
                            None,
                            RecordStatus::PlacementFailed,
                            json!({"kind": "MT_OBSTACLE", "error": e.to_string()}),
                        ),
                        Ok(placement) => {
                            let fu_ep = execute_episode(
                                planner,
                                &placement.env,
                                &case.task,
                                case.start,
                                budget,
                                mix2(pb, TAG_OBSTACLE_EP),
                            );
                            let mut r = blank_record(
                                case,
                                planner,
                                baseline,
                                None,
                                RecordStatus::FollowupFailed,
                                json!({
                                    "kind": "MT_OBSTACLE",
                                    "cells": placement.cells,
                                    "attempts": placement.attempts,
                                }),
                            );
                            let (fu_view, fu_actions) = followup_extras(&fu_ep, &placement.env);
                            r.fu_view = fu_view;
                            r.fu_actions = fu_actions;
                            if let DetectionOutcome::Result(cmp) = detect_violation(
                                &src.episode,
                                &fu_ep,
                                baseline,
                                &cfg.cost_model,
                            ) {
                                r = r.with_comparison(&cmp);
                            }
                            r
                        }
                    }
                }
                BaselineId::MtTransform => {
                    let transform = GridTransform::ALL[case_index % GridTransform::ALL.len()];
                    let (t_env, t_pose) = transform_case(&case.env, case.start, transform);
                    let fu_ep = execute_episode(
                        planner,
                        &t_env,
                        &case.task,
                        t_pose,
                        budget,
                        mix2(pb, TAG_TRANSFORM_EP),
                    );
                    let mut r = blank_record(
                        case,
                        planner,
                        baseline,
                        None,
                        RecordStatus::FollowupFailed,
                        json!({"kind": "MT_TRANSFORM", "transform": transform}),
                    );
                    let (fu_view, fu_actions) = followup_extras(&fu_ep, &t_env);
                    r.fu_view = fu_view;
                    r.fu_actions = fu_actions;
                    if let DetectionOutcome::Result(cmp) =
                        detect_violation(&src.episode, &fu_ep, baseline, &cfg.cost_model)
                    {
                        r = r.with_comparison(&cmp);
                    }
                    r
                }
            };
            out.records.push(record);
        }
    }
    out
}

/// Runs the whole campaign in memory. `jobs <= 1` runs on the calling
/// thread; higher values parallelize across cases without changing any
/// output byte, because every random stream is keyed by position, not by
/// execution order.
pub fn run_campaign(cfg: &CampaignConfig, jobs: usize) -> Result<CampaignOutcome, CampaignError> {
    cfg.validate()?;
    let table = load_semantic_table(cfg)?;
    let suite = generate_suite(cfg)?;

    let outputs: Vec<CaseOutput> = if jobs <= 1 {
        suite.iter().enumerate().map(|(i, c)| run_case(cfg, i, c, &table)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| {
            CampaignError::Invariant(format!("cannot build a {jobs}-thread pool: {e}"))
        })?;
        pool.install(|| {
            suite.par_iter().enumerate().map(|(i, c)| run_case(cfg, i, c, &table)).collect()
        })
    };

    let mut records = Vec::new();
    let mut fanout = Vec::new();
    let mut failures = Vec::new();
    for output in outputs {
        records.extend(output.records);
        fanout.extend(output.fanout);
        failures.extend(output.failures);
    }

    let report =
        build_report(cfg, &suite, &records).map_err(CampaignError::Invariant)?;
    let inferred: Vec<SourceFailure> = report
        .planners
        .iter()
        .flat_map(|p| {
            p.source_failures
                .iter()
                .map(|id| SourceFailure { source_id: id.clone(), planner: p.planner })
        })
        .collect();
    let mut observed = failures.clone();
    observed.sort();
    let mut inferred_sorted = inferred;
    inferred_sorted.sort();
    if observed != inferred_sorted {
        return Err(CampaignError::Invariant(
            "source failures observed during the run disagree with the record stream".into(),
        ));
    }

    Ok(CampaignOutcome { suite, records, fanout, failures, report })
}

/// Re-executes one source case and returns (stored, recomputed) record
/// lines for it, byte-for-byte. Uses the exact code path of the original
/// run, so any drift is a reproducibility defect.
pub fn replay_source(
    cfg: &CampaignConfig,
    source_id: &str,
) -> Result<(Vec<String>, Vec<String>), CampaignError> {
    let index = parse_case_id(source_id).ok_or_else(|| {
        CampaignError::Validation(format!("{source_id} is not a case id (expected case-NNNNN)"))
    })?;
    if index >= cfg.n_cases {
        return Err(CampaignError::Validation(format!(
            "{source_id} is outside this campaign (n_cases = {})",
            cfg.n_cases
        )));
    }

    let records_path = cfg.out_dir.join("records.jsonl");
    let stored: Vec<String> = raw_lines(&records_path)?
        .into_iter()
        .filter(|line| {
            serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("source_id").and_then(|s| s.as_str().map(String::from)))
                .as_deref()
                == Some(source_id)
        })
        .collect();

    let table = load_semantic_table(cfg)?;
    let case = generate_case(cfg, index)?;
    let output = run_case(cfg, index, &case, &table);
    let recomputed: Vec<String> = output
        .records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize"))
        .collect();
    Ok((stored, recomputed))
}

/// Regenerates the suite from the config and checks it against the stored
/// `suite.jsonl`, byte for byte. Operations that interpret a stored record
/// stream (`report`, `cluster`) call this first, so a stream produced under
/// a different config — say, another seed — cannot be silently summarized.
pub fn verify_stored_suite(cfg: &CampaignConfig) -> Result<Vec<SuiteCase>, CampaignError> {
    let suite = generate_suite(cfg)?;
    let path = cfg.out_dir.join("suite.jsonl");
    let stored = std::fs::read_to_string(&path).map_err(|source| {
        CampaignError::Records(RecordsError::Io { path: path.display().to_string(), source })
    })?;
    if stored != jsonl(&suite) {
        return Err(CampaignError::Validation(format!(
            "{} was not generated by this config (seed {}, {} cases); refusing to interpret \
             its records",
            path.display(),
            cfg.seed,
            cfg.n_cases
        )));
    }
    Ok(suite)
}

fn raw_lines(path: &Path) -> Result<Vec<String>, CampaignError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CampaignError::Records(RecordsError::Io {
            path: path.display().to_string(),
            source,
        }))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect())
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

/// Unhashed sidecar describing a run: the only place timestamps and timing
/// live, so every hashed artifact stays byte-identical across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub created_unix_seconds: u64,
    pub duration_seconds: f64,
    pub jobs: usize,
    pub complete: bool,
    pub error: Option<String>,
    pub files: BTreeMap<String, FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub bytes: usize,
    pub fnv1a64: String,
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item).expect("campaign artifacts serialize"));
        s.push('\n');
    }
    s
}

fn write_file(
    dir: &Path,
    name: &str,
    contents: &str,
    files: &mut BTreeMap<String, FileDigest>,
) -> Result<(), CampaignError> {
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|source| CampaignError::Io { path: path.display().to_string(), source })?;
    files.insert(
        name.to_string(),
        FileDigest {
            bytes: contents.len(),
            fnv1a64: format!("{:016x}", fnv1a64(contents.as_bytes())),
        },
    );
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CampaignError> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    let mut file = std::fs::File::create(&path)
        .map_err(|source| CampaignError::Io { path: path.display().to_string(), source })?;
    file.write_all(text.as_bytes())
        .map_err(|source| CampaignError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

/// Writes every campaign artifact under the config's output directory. On
/// any I/O failure a partial manifest with `complete: false` and the error
/// is still attempted, so interrupted runs are visibly interrupted.
pub fn write_outputs(
    cfg: &CampaignConfig,
    outcome: &CampaignOutcome,
    jobs: usize,
    started: Instant,
) -> Result<(), CampaignError> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir)
        .map_err(|source| CampaignError::Io { path: dir.display().to_string(), source })?;

    let mut files = BTreeMap::new();
    let result = (|| -> Result<(), CampaignError> {
        write_file(dir, "suite.jsonl", &jsonl(&outcome.suite), &mut files)?;
        write_file(dir, "records.jsonl", &jsonl(&outcome.records), &mut files)?;
        if cfg.fan_out {
            write_file(dir, "fanout.jsonl", &jsonl(&outcome.fanout), &mut files)?;
        }
        let mut report_json =
            serde_json::to_string_pretty(&outcome.report).expect("reports serialize");
        report_json.push('\n');
        write_file(dir, "report.json", &report_json, &mut files)?;
        write_file(dir, "report.csv", &crate::report::render_csv(&outcome.report), &mut files)?;
        write_file(dir, "report.txt", &crate::report::render_text(&outcome.report), &mut files)?;
        Ok(())
    })();

    let manifest = RunManifest {
        created_unix_seconds: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        duration_seconds: started.elapsed().as_secs_f64(),
        jobs,
        complete: result.is_ok(),
        error: result.as_ref().err().map(|e| e.to_string()),
        files,
    };
    // manifest write errors must not mask the original failure
    match &result {
        Ok(()) => write_manifest(dir, &manifest)?,
        Err(_) => {
            let _ = write_manifest(dir, &manifest);
        }
    }
    result
}

/// `generate` artifact: the suite alone.
pub fn write_suite(cfg: &CampaignConfig, suite: &[SuiteCase]) -> Result<PathBuf, CampaignError> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir)
        .map_err(|source| CampaignError::Io { path: dir.display().to_string(), source })?;
    let path = dir.join("suite.jsonl");
    std::fs::write(&path, jsonl(suite))
        .map_err(|source| CampaignError::Io { path: path.display().to_string(), source })?;
    Ok(path)
}
