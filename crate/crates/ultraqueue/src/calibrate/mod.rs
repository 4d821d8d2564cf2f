//! Estimates every stochastic component from a classified event log and
//! packages them into an immutable, serializable [`CalibratedModel`].

mod tables;

pub use tables::{
    estimate_arrival_rates, estimate_gaps, estimate_open_patterns, estimate_service_table,
    ArrivalRateTable, ClassRates, DayPattern, FallbackLevel, GapCell, GapModel,
    OpenPatternLibrary, RoomHours, ServiceCell, ServiceTable,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{
    self, build_patient_classes, ClassifyError, ItemGroupModel, PatientClass, RoomTypeModel,
};
use crate::eventlog::{log_to_string, PatientRecord, RoomId};
use crate::forest::{ForestError, Hyperparams};
use crate::routing::{self, PolicyEvalReport, RoutingError, RoutingMode, RoutingPolicy};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("empty event log")]
    EmptyLog,
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("class {0} has no usable service observations")]
    ClassWithoutService(usize),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("model bundle: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model schema version {got}, this build reads {expected}")]
    SchemaVersion { expected: u32, got: u32 },
    #[error("model bundle inconsistent: {0}")]
    Inconsistent(String),
}

/// Hour-of-day horizon `[start_hour, end_hour)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourHorizon {
    pub start_hour: u8,
    pub end_hour: u8,
}

impl HourHorizon {
    pub const DEFAULT: HourHorizon = HourHorizon {
        start_hour: 7,
        end_hour: 17,
    };

    pub fn n_hours(&self) -> u8 {
        self.end_hour - self.start_hour
    }

    pub fn start_s(&self) -> u64 {
        self.start_hour as u64 * 3600
    }

    pub fn end_s(&self) -> u64 {
        self.end_hour as u64 * 3600
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.start_hour >= self.end_hour {
            return Err(format!(
                "horizon start {} not before end {}",
                self.start_hour, self.end_hour
            ));
        }
        Ok(())
    }
}

impl Default for HourHorizon {
    fn default() -> Self {
        HourHorizon::DEFAULT
    }
}

/// Calibration settings; the defaults follow the reference deployment
/// (rooms 1..=32, 07:00-17:00, five item clusters plus the multi-item group,
/// four room types, 10 s gap threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub room_universe: Vec<RoomId>,
    pub horizon: HourHorizon,
    pub item_clusters: usize,
    pub room_types: usize,
    pub gap_threshold_s: u32,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub seed: u64,
    pub routing_mode: RoutingMode,
    /// Rooms with fewer training rows than this get a warning.
    pub min_room_rows: usize,
    /// Level-1 forest settings; `None` uses the reference defaults.
    pub l1_hyperparams: Option<Hyperparams>,
    /// Per-room-type level-2 forest settings; `None` uses the reference defaults.
    pub l2_hyperparams: Option<Vec<Hyperparams>>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            room_universe: crate::eventlog::default_room_universe(),
            horizon: HourHorizon::DEFAULT,
            item_clusters: 5,
            room_types: 4,
            gap_threshold_s: 10,
            gmm_max_iter: 200,
            gmm_tol: 1e-6,
            seed: 0,
            routing_mode: RoutingMode::Sample,
            min_room_rows: 50,
            l1_hyperparams: None,
            l2_hyperparams: None,
        }
    }
}

/// A log with per-record patient class and item group resolved.
#[derive(Debug, Clone)]
pub struct ClassifiedLog {
    pub records: Vec<PatientRecord>,
    pub class_of: Vec<usize>,
    pub group_of: Vec<usize>,
}

/// Resolves each record's item group and patient class.
pub fn classify_log(
    records: Vec<PatientRecord>,
    items: &ItemGroupModel,
    classes: &[PatientClass],
) -> ClassifiedLog {
    let index: BTreeMap<PatientClass, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    let mut class_of = Vec::with_capacity(records.len());
    let mut group_of = Vec::with_capacity(records.len());
    for r in &records {
        let class = PatientClass::of_record(items, r);
        group_of.push(class.item_group);
        class_of.push(*index.get(&class).expect("record class missing from class list"));
    }
    ClassifiedLog {
        records,
        class_of,
        group_of,
    }
}

/// One observed (exam items, department) combination within a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSetEntry {
    pub items: Vec<String>,
    pub department: String,
    pub count: u32,
}

/// A patient class with the empirical demographics the simulator needs to
/// emit realistic records: observed ages and item sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub class: PatientClass,
    pub n_records: u32,
    /// Observed ages, sorted.
    pub ages: Vec<f64>,
    pub item_sets: Vec<ItemSetEntry>,
}

fn build_class_demographics(clog: &ClassifiedLog, classes: &[PatientClass]) -> Vec<ClassInfo> {
    let mut infos: Vec<ClassInfo> = classes
        .iter()
        .map(|&class| ClassInfo {
            class,
            n_records: 0,
            ages: Vec::new(),
            item_sets: Vec::new(),
        })
        .collect();
    let mut sets: Vec<BTreeMap<(Vec<String>, String), u32>> =
        vec![BTreeMap::new(); classes.len()];
    for (r, &c) in clog.records.iter().zip(&clog.class_of) {
        infos[c].n_records += 1;
        infos[c].ages.push(r.age);
        *sets[c]
            .entry((r.exam_items.clone(), r.department.clone()))
            .or_default() += 1;
    }
    for (info, set) in infos.iter_mut().zip(sets) {
        info.ages.sort_by(|a, b| a.partial_cmp(b).unwrap());
        info.item_sets = set
            .into_iter()
            .map(|((items, department), count)| ItemSetEntry {
                items,
                department,
                count,
            })
            .collect();
    }
    infos
}

/// Run provenance recorded in the bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_digest: String,
    pub seed: u64,
    pub n_source_records: usize,
}

/// Everything learned from a log, sufficient to drive the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub schema_version: u32,
    pub horizon: HourHorizon,
    pub room_universe: Vec<RoomId>,
    pub gap_threshold_s: u32,
    pub item_groups: ItemGroupModel,
    pub room_types: RoomTypeModel,
    pub classes: Vec<ClassInfo>,
    pub arrival_rates: ArrivalRateTable,
    pub open_patterns: OpenPatternLibrary,
    pub service: ServiceTable,
    pub gaps: GapModel,
    pub policy: RoutingPolicy,
    pub provenance: Provenance,
}

impl CalibratedModel {
    pub fn to_json_string(&self) -> Result<String, CalibrateError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<CalibratedModel, CalibrateError> {
        let model: CalibratedModel = serde_json::from_str(s)?;
        if model.schema_version != MODEL_SCHEMA_VERSION {
            return Err(CalibrateError::SchemaVersion {
                expected: MODEL_SCHEMA_VERSION,
                got: model.schema_version,
            });
        }
        model.validate()?;
        Ok(model)
    }

    /// Structural cross-reference checks over the bundle.
    pub fn validate(&self) -> Result<(), CalibrateError> {
        let fail = |msg: String| Err(CalibrateError::Inconsistent(msg));
        if self.arrival_rates.n_classes() != self.classes.len() {
            return fail(format!(
                "arrival table has {} classes, class list has {}",
                self.arrival_rates.n_classes(),
                self.classes.len()
            ));
        }
        let n_groups = self.item_groups.n_groups;
        for info in &self.classes {
            if info.class.item_group >= n_groups {
                return fail(format!(
                    "class references item group {} of {}",
                    info.class.item_group, n_groups
                ));
            }
        }
        for (&room, _) in self.room_types.rooms.iter().zip(&self.room_types.type_of) {
            if !self.room_universe.contains(&room) {
                return fail(format!("typed room {room} outside the universe"));
            }
        }
        if self.policy.eligibility.len() != n_groups {
            return fail(format!(
                "eligibility map covers {} groups, model has {}",
                self.policy.eligibility.len(),
                n_groups
            ));
        }
        if self.policy.n_types != self.room_types.n_types {
            return fail("policy and room model disagree on type count".to_string());
        }
        for pattern in &self.open_patterns.days {
            for rh in &pattern.rooms {
                if self.room_types.room_type(rh.room).is_none() {
                    return fail(format!("open pattern references untyped room {}", rh.room));
                }
            }
        }
        Ok(())
    }

    pub fn class_index(&self) -> BTreeMap<PatientClass, usize> {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, info)| (info.class, i))
            .collect()
    }
}

/// Calibration side-channel: warnings plus the routing evaluation report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub warnings: Vec<String>,
    pub policy_eval: PolicyEvalReport,
}

/// FNV-1a digest of the canonical CSV serialization, hex-encoded.
pub fn log_digest(records: &[PatientRecord]) -> String {
    let text = log_to_string(records);
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Runs the whole calibration pipeline: classification, the four empirical
/// estimators, and routing-policy training.
pub fn build_model(
    records: Vec<PatientRecord>,
    config: &CalibrationConfig,
) -> Result<(CalibratedModel, CalibrationReport), CalibrateError> {
    if records.is_empty() {
        return Err(CalibrateError::EmptyLog);
    }
    config
        .horizon
        .validate()
        .map_err(CalibrateError::BadConfig)?;
    if config.item_clusters < 1 {
        return Err(CalibrateError::BadConfig("item_clusters must be >= 1".into()));
    }

    let mut report = CalibrationReport::default();
    let digest = log_digest(&records);

    // Restrict the universe to rooms that actually appear, so sparse logs
    // calibrate cleanly against the default 32-room universe.
    let mut universe: Vec<RoomId> = config
        .room_universe
        .iter()
        .copied()
        .filter(|room| records.iter().any(|r| r.room_id == *room))
        .collect();
    universe.sort_unstable();
    if universe.len() < config.room_universe.len() {
        report.warnings.push(format!(
            "{} universe rooms have no records and were dropped",
            config.room_universe.len() - universe.len()
        ));
    }
    if universe.len() < config.room_types {
        return Err(CalibrateError::BadConfig(format!(
            "{} active rooms cannot form {} room types",
            universe.len(),
            config.room_types
        )));
    }

    // Item groups.
    let features = classify::item_features(&records, &universe);
    if features.items.len() < config.item_clusters {
        return Err(CalibrateError::BadConfig(format!(
            "{} well-observed items cannot form {} clusters",
            features.items.len(),
            config.item_clusters
        )));
    }
    for (item, n) in &features.insufficient {
        report.warnings.push(format!(
            "item {item} has {n} observation(s); assigned to the fallback group"
        ));
    }
    let fit = classify::fit_gmm(
        &features.rows,
        config.item_clusters,
        config.seed,
        config.gmm_max_iter,
        config.gmm_tol,
    )?;
    let item_groups = classify::assign_item_groups(fit, &features);

    // Room types.
    let room_types = classify::cluster_rooms(&records, &universe, config.room_types)?;

    // Patient classes and the classified log.
    let classes = build_patient_classes(&item_groups, &records);
    let clog = classify_log(records, &item_groups, &classes);
    let class_infos = build_class_demographics(&clog, &classes);

    // Empirical tables.
    let (arrival_rates, mut w) =
        estimate_arrival_rates(&clog, classes.len(), config.horizon);
    report.warnings.append(&mut w);
    let open_patterns = estimate_open_patterns(&clog.records, &universe, config.horizon);
    let (service, mut w) = estimate_service_table(&clog, classes.len())?;
    report.warnings.append(&mut w);
    let gaps = estimate_gaps(&clog.records, &room_types, config.gap_threshold_s);

    // Routing policy.
    let (policy, eval, mut w) = routing::train_policy(
        &clog,
        &item_groups,
        &room_types,
        &open_patterns,
        config.horizon,
        routing::TrainPolicyConfig {
            seed: crate::rng::derive_seed(config.seed, 0x7061),
            mode: config.routing_mode,
            l1_hyperparams: config.l1_hyperparams.clone(),
            l2_hyperparams: config.l2_hyperparams.clone(),
            min_room_rows: config.min_room_rows,
        },
    )?;
    report.policy_eval = eval;
    report.warnings.append(&mut w);

    let n_source_records = clog.records.len();
    let model = CalibratedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        horizon: config.horizon,
        room_universe: universe,
        gap_threshold_s: config.gap_threshold_s,
        item_groups,
        room_types,
        classes: class_infos,
        arrival_rates,
        open_patterns,
        service,
        gaps,
        policy,
        provenance: Provenance {
            source_digest: digest,
            seed: config.seed,
            n_source_records,
        },
    };
    model.validate()?;
    Ok((model, report))
}
