//! Campaign configuration: a strict JSON file with two required fields
//! (`seed`, `n_cases`) and defaults for everything else. Unknown keys are
//! rejected by name so typos fail loudly instead of silently running a
//! different experiment, and the parsed config is echoed verbatim into the
//! report for provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use planprobe_core::baselines::BaselineId;
use planprobe_core::detector::CostModel;
use planprobe_core::filter::PathModel;
use planprobe_core::gridworld::GenerationParams;
use planprobe_core::metamorphic::MRKind;
use planprobe_core::planners::PlannerId;

/// One of the two selection strategies applied to a candidate pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterArm {
    #[serde(rename = "FILTERED")]
    Filtered,
    #[serde(rename = "RANDOM")]
    Random,
}

impl FilterArm {
    pub const ALL: [FilterArm; 2] = [FilterArm::Filtered, FilterArm::Random];

    pub fn name(self) -> &'static str {
        match self {
            FilterArm::Filtered => "FILTERED",
            FilterArm::Random => "RANDOM",
        }
    }
}

/// Which arms a campaign runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmChoice {
    Filtered,
    Random,
    Both,
}

impl ArmChoice {
    pub fn arms(self) -> &'static [FilterArm] {
        match self {
            ArmChoice::Filtered => &[FilterArm::Filtered],
            ArmChoice::Random => &[FilterArm::Random],
            ArmChoice::Both => &FilterArm::ALL,
        }
    }
}

fn default_generation() -> GenerationParams {
    GenerationParams::default()
}
fn default_planners() -> Vec<PlannerId> {
    PlannerId::ALL.to_vec()
}
fn default_mrs() -> Vec<MRKind> {
    MRKind::ALL.to_vec()
}
fn default_arms() -> ArmChoice {
    ArmChoice::Both
}
fn default_baselines() -> Vec<BaselineId> {
    BaselineId::ALL.to_vec()
}
fn default_cost_model() -> CostModel {
    CostModel::StepCount
}
fn default_max_steps_multiplier() -> usize {
    20
}
fn default_short_max() -> usize {
    15
}
fn default_medium_max() -> usize {
    40
}
fn default_k_max() -> usize {
    planprobe_core::diversity::DEFAULT_K_MAX
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("campaign-out")
}
fn default_path_model() -> PathModel {
    PathModel::Polyline
}
fn default_scene_candidates() -> usize {
    6
}
fn default_n_obstacles() -> usize {
    1
}

/// Everything a campaign needs. `seed` and `n_cases` are required; every
/// other field has a documented default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Global seed; every other random stream derives from it.
    pub seed: u64,
    /// Suite size N: how many source cases to generate.
    #[serde(alias = "n")]
    pub n_cases: usize,
    /// Environment generation parameters.
    #[serde(default = "default_generation")]
    pub generation: GenerationParams,
    /// Planners under test, in report order.
    #[serde(default = "default_planners")]
    pub planners: Vec<PlannerId>,
    /// Relations to run; empty runs baselines only.
    #[serde(default = "default_mrs")]
    pub mrs: Vec<MRKind>,
    /// Candidate-selection arms.
    #[serde(default = "default_arms")]
    pub arms: ArmChoice,
    /// Baseline checks to run; empty disables them.
    #[serde(default = "default_baselines")]
    pub baselines: Vec<BaselineId>,
    /// How episode cost is measured.
    #[serde(default = "default_cost_model")]
    pub cost_model: CostModel,
    /// Step budget = multiplier x oracle cost; must be at least 2.
    #[serde(default = "default_max_steps_multiplier")]
    pub max_steps_multiplier: usize,
    /// Oracle-cost ceiling for SHORT cases (inclusive).
    #[serde(default = "default_short_max")]
    pub short_max: usize,
    /// Oracle-cost ceiling for MEDIUM cases (inclusive); above is LONG.
    #[serde(default = "default_medium_max")]
    pub medium_max: usize,
    /// Cluster-count ceiling for diversity scoring.
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Output directory for suite, records, and reports.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Distance-to-path model used by the POSITION selector.
    #[serde(default = "default_path_model")]
    pub position_path_model: PathModel,
    /// Fixed substitution index for the ACTION relation; episodes where it
    /// is invalid fall back to the midpoint default.
    #[serde(default)]
    pub action_substitution_index: Option<usize>,
    /// When set, CONDITION refinements also scale max_distance.
    #[serde(default)]
    pub refine_max_distance: bool,
    /// When set, diversity pools merge relations per (planner, arm).
    #[serde(default)]
    pub vd_pooled_across_mrs: bool,
    /// Diagnostic mode: additionally run every candidate (not just the
    /// selected one) and write those records to fanout.jsonl, excluded from
    /// all rates.
    #[serde(default)]
    pub fan_out: bool,
    /// SCENE candidate-pool size.
    #[serde(default = "default_scene_candidates")]
    pub scene_candidates: usize,
    /// Obstacles inserted per obstacle-baseline run.
    #[serde(default = "default_n_obstacles")]
    pub n_obstacles: usize,
    /// Optional JSON file overriding the built-in action distance table.
    #[serde(default)]
    pub semantic_table: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config field {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

impl CampaignConfig {
    /// A config with only the required fields set and every default applied;
    /// the library-side equivalent of the minimal `{seed, n_cases}` file.
    pub fn minimal(seed: u64, n_cases: usize) -> CampaignConfig {
        CampaignConfig {
            seed,
            n_cases,
            generation: default_generation(),
            planners: default_planners(),
            mrs: default_mrs(),
            arms: default_arms(),
            baselines: default_baselines(),
            cost_model: default_cost_model(),
            max_steps_multiplier: default_max_steps_multiplier(),
            short_max: default_short_max(),
            medium_max: default_medium_max(),
            k_max: default_k_max(),
            out_dir: default_out_dir(),
            position_path_model: default_path_model(),
            action_substitution_index: None,
            refine_max_distance: false,
            vd_pooled_across_mrs: false,
            fan_out: false,
            scene_candidates: default_scene_candidates(),
            n_obstacles: default_n_obstacles(),
            semantic_table: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
            ConfigError::Invalid { field, message: message.into() }
        }
        if self.n_cases < 1 {
            return Err(invalid("n_cases", "suite size must be at least 1"));
        }
        if self.short_max >= self.medium_max {
            return Err(invalid(
                "short_max",
                format!(
                    "short_max ({}) must be strictly below medium_max ({})",
                    self.short_max, self.medium_max
                ),
            ));
        }
        if self.max_steps_multiplier < 2 {
            return Err(invalid("max_steps_multiplier", "budget multiplier must be at least 2"));
        }
        if self.k_max < 2 {
            return Err(invalid("k_max", "cluster ceiling must be at least 2"));
        }
        if self.planners.is_empty() {
            return Err(invalid("planners", "at least one planner is required"));
        }
        if has_duplicates(&self.planners) {
            return Err(invalid("planners", "duplicate planner id"));
        }
        if has_duplicates(&self.mrs) {
            return Err(invalid("mrs", "duplicate relation kind"));
        }
        if has_duplicates(&self.baselines) {
            return Err(invalid("baselines", "duplicate baseline id"));
        }
        if self.scene_candidates < 1 {
            return Err(invalid("scene_candidates", "scene pool needs at least one candidate"));
        }
        if self.n_obstacles < 1 {
            return Err(invalid("n_obstacles", "obstacle insertion needs at least one obstacle"));
        }
        Ok(())
    }

    /// Relations to run, in the canonical POSITION, ACTION, CONDITION,
    /// SCENE order regardless of config order.
    pub fn mrs_in_order(&self) -> Vec<MRKind> {
        MRKind::ALL.into_iter().filter(|m| self.mrs.contains(m)).collect()
    }

    /// Baselines to run, in canonical order.
    pub fn baselines_in_order(&self) -> Vec<BaselineId> {
        BaselineId::ALL.into_iter().filter(|b| self.baselines.contains(b)).collect()
    }

    /// Records per (case, planner) pair when the source succeeds.
    pub fn records_per_pair(&self) -> usize {
        self.mrs_in_order().len() * self.arms.arms().len() + self.baselines_in_order().len()
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}

/// Reads, parses, and validates a campaign config file.
pub fn load_config(path: &Path) -> Result<CampaignConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    let cfg: CampaignConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_applies_every_default() {
        let cfg: CampaignConfig = serde_json::from_str(r#"{"seed": 7, "n_cases": 3}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg, CampaignConfig::minimal(7, 3));
        assert_eq!(cfg.planners, PlannerId::ALL.to_vec());
        assert_eq!(cfg.mrs, MRKind::ALL.to_vec());
        assert_eq!(cfg.arms.arms(), &[FilterArm::Filtered, FilterArm::Random]);
        assert_eq!(cfg.max_steps_multiplier, 20);
        assert_eq!((cfg.short_max, cfg.medium_max), (15, 40));
        assert_eq!(cfg.records_per_pair(), 4 * 2 + 4);
    }

    #[test]
    fn the_n_alias_is_accepted() {
        let cfg: CampaignConfig = serde_json::from_str(r#"{"seed": 1, "n": 5}"#).unwrap();
        assert_eq!(cfg.n_cases, 5);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = serde_json::from_str::<CampaignConfig>(r#"{"seed": 1, "n_cases": 2, "fovv": 3}"#)
            .unwrap_err();
        assert!(err.to_string().contains("fovv"), "{err}");

        let nested = serde_json::from_str::<CampaignConfig>(
            r#"{"seed": 1, "n_cases": 2, "generation": {"widht": 9}}"#,
        )
        .unwrap_err();
        assert!(nested.to_string().contains("widht"), "{nested}");
    }

    #[test]
    fn threshold_inversion_is_a_validation_error_naming_the_field() {
        let cfg: CampaignConfig =
            serde_json::from_str(r#"{"seed": 1, "n_cases": 2, "short_max": 40, "medium_max": 40}"#)
                .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "short_max", .. }), "{err}");
    }

    #[test]
    fn invariant_violations_are_rejected() {
        for (json, field) in [
            (r#"{"seed": 1, "n_cases": 0}"#, "n_cases"),
            (r#"{"seed": 1, "n_cases": 2, "max_steps_multiplier": 1}"#, "max_steps_multiplier"),
            (r#"{"seed": 1, "n_cases": 2, "planners": []}"#, "planners"),
            (
                r#"{"seed": 1, "n_cases": 2, "planners": ["ORACLE_OPTIMAL", "ORACLE_OPTIMAL"]}"#,
                "planners",
            ),
            (r#"{"seed": 1, "n_cases": 2, "k_max": 1}"#, "k_max"),
        ] {
            let cfg: CampaignConfig = serde_json::from_str(json).unwrap();
            let err = cfg.validate().unwrap_err();
            match err {
                ConfigError::Invalid { field: f, .. } => assert_eq!(f, field, "{json}"),
                other => panic!("expected validation error for {json}, got {other}"),
            }
        }
    }

    #[test]
    fn missing_required_fields_fail_to_parse() {
        assert!(serde_json::from_str::<CampaignConfig>(r#"{"seed": 1}"#).is_err());
        assert!(serde_json::from_str::<CampaignConfig>(r#"{"n_cases": 1}"#).is_err());
    }

    #[test]
    fn enabled_stage_lists_are_canonically_ordered() {
        let cfg: CampaignConfig = serde_json::from_str(
            r#"{"seed": 1, "n_cases": 2, "mrs": ["SCENE", "POSITION"],
                "baselines": ["MT_TRANSFORM", "PBT_NR"]}"#,
        )
        .unwrap();
        assert_eq!(cfg.mrs_in_order(), vec![MRKind::Position, MRKind::Scene]);
        assert_eq!(cfg.baselines_in_order(), vec![BaselineId::PbtNr, BaselineId::MtTransform]);
        assert_eq!(cfg.records_per_pair(), 2 * 2 + 2);
    }

    #[test]
    fn load_config_reports_parse_position_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, "{\n  \"seed\": 1,\n  bad\n}").unwrap();
        match load_config(&path).unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
        match load_config(&dir.path().join("missing.json")).unwrap_err() {
            ConfigError::Io { .. } => {}
            other => panic!("expected io error, got {other}"),
        }
    }

    #[test]
    fn configs_round_trip_through_json() {
        let cfg = CampaignConfig::minimal(11, 4);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: CampaignConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
