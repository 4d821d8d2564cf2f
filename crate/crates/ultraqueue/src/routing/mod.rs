//! Patient routing: the learned two-level policy (room type first, then a
//! specific room) and the join-shortest-queue baseline.
//!
//! Training reconstructs the simulation-state features for every historical
//! arrival by deterministic replay of the log: the queue at a room when a
//! patient arrives is the set of earlier arrivals routed there that have not
//! yet started service, and open rooms come from the estimated per-day open
//! patterns.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{ClassifiedLog, HourHorizon, OpenPatternLibrary};
use crate::classify::{ItemGroupModel, RoomTypeModel};
use crate::engine::{Router, RoutingContext, SimPatient};
use crate::eventlog::RoomId;
use crate::forest::{
    self, accuracy, ovr_auc, ForestError, Hyperparams, RandomForest,
};
use crate::rng;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("log day {0} has no entry in the open-pattern library")]
    MissingPattern(u32),
}

/// How forest probabilities turn into a routing decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingMode {
    /// Sample from the masked, renormalized probability vector.
    Sample,
    /// Take the highest-probability choice; ties go to the lower id.
    Argmax,
}

/// Router selection for a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouterChoice {
    TwoLevelSample,
    TwoLevelArgmax,
    Jsq,
}

/// Level-1 features: patient attributes plus queue and open-room counts
/// aggregated per room type.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingFeaturesL1 {
    pub age: f64,
    pub item_group: usize,
    pub arrival_hour: u32,
    pub weekday: u8,
    pub queue_length_by_type: Vec<u32>,
    pub num_open_by_type: Vec<u32>,
}

impl RoutingFeaturesL1 {
    /// One-hot expansion: [age, hour, weekday x7, group xG, queue xT, open xT].
    pub fn to_vector(&self, n_groups: usize) -> Vec<f64> {
        let n_types = self.queue_length_by_type.len();
        let mut v = Vec::with_capacity(2 + 7 + n_groups + 2 * n_types);
        v.push(self.age);
        v.push(self.arrival_hour as f64);
        for d in 0..7u8 {
            v.push((self.weekday == d) as u8 as f64);
        }
        for g in 0..n_groups {
            v.push((self.item_group == g) as u8 as f64);
        }
        v.extend(self.queue_length_by_type.iter().map(|&q| q as f64));
        v.extend(self.num_open_by_type.iter().map(|&o| o as f64));
        v
    }

    pub fn feature_names(n_groups: usize, n_types: usize) -> Vec<String> {
        let mut names = vec!["age".to_string(), "arrival_hour".to_string()];
        names.extend((0..7).map(|d| format!("weekday_{d}")));
        names.extend((0..n_groups).map(|g| format!("group_{g}")));
        names.extend((0..n_types).map(|t| format!("queue_type_{t}")));
        names.extend((0..n_types).map(|t| format!("open_type_{t}")));
        names
    }
}

/// Level-2 features: per-room queue lengths and open indicators within the
/// chosen type.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingFeaturesL2 {
    pub age: f64,
    pub item_group: usize,
    pub arrival_hour: u32,
    pub weekday: u8,
    pub rooms: Vec<RoomId>,
    pub queue_by_room: Vec<u32>,
    pub open_by_room: Vec<u8>,
}

impl RoutingFeaturesL2 {
    pub fn to_vector(&self, n_groups: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + 7 + n_groups + 2 * self.rooms.len());
        v.push(self.age);
        v.push(self.arrival_hour as f64);
        for d in 0..7u8 {
            v.push((self.weekday == d) as u8 as f64);
        }
        for g in 0..n_groups {
            v.push((self.item_group == g) as u8 as f64);
        }
        v.extend(self.queue_by_room.iter().map(|&q| q as f64));
        v.extend(self.open_by_room.iter().map(|&o| o as f64));
        v
    }

    pub fn feature_names(n_groups: usize, rooms: &[RoomId]) -> Vec<String> {
        let mut names = vec!["age".to_string(), "arrival_hour".to_string()];
        names.extend((0..7).map(|d| format!("weekday_{d}")));
        names.extend((0..n_groups).map(|g| format!("group_{g}")));
        names.extend(rooms.iter().map(|r| format!("queue_room_{r}")));
        names.extend(rooms.iter().map(|r| format!("open_room_{r}")));
        names
    }
}

/// Snapshot of level-1 features from the live simulation state.
pub fn extract_l1(ctx: &RoutingContext<'_>, patient: &SimPatient) -> RoutingFeaturesL1 {
    RoutingFeaturesL1 {
        age: patient.age,
        item_group: patient.item_group,
        arrival_hour: ctx.hour,
        weekday: ctx.weekday,
        queue_length_by_type: ctx.queue_by_type(),
        num_open_by_type: ctx.open_by_type(),
    }
}

/// Snapshot of level-2 features for the rooms of one type.
pub fn extract_l2(
    ctx: &RoutingContext<'_>,
    patient: &SimPatient,
    rooms_of_type: &[RoomId],
) -> RoutingFeaturesL2 {
    let mut queue_by_room = Vec::with_capacity(rooms_of_type.len());
    let mut open_by_room = Vec::with_capacity(rooms_of_type.len());
    for &room in rooms_of_type {
        let idx = ctx.rooms.binary_search(&room).expect("room in universe");
        queue_by_room.push(ctx.waiting[idx]);
        open_by_room.push(ctx.open[idx] as u8);
    }
    RoutingFeaturesL2 {
        age: patient.age,
        item_group: patient.item_group,
        arrival_hour: ctx.hour,
        weekday: ctx.weekday,
        rooms: rooms_of_type.to_vec(),
        queue_by_room,
        open_by_room,
    }
}

/// The trained two-level routing policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub mode: RoutingMode,
    pub n_types: usize,
    pub n_groups: usize,
    /// Level-1 forest over room-type labels 0..n_types.
    pub level1: RandomForest,
    /// One level-2 forest per room type, labels are the type's room ids.
    pub level2: Vec<RandomForest>,
    /// Admissible room types per item group (observed support).
    pub eligibility: Vec<Vec<u8>>,
    /// Rooms of each type, sorted; label catalogs of `level2` match these.
    pub type_rooms: Vec<Vec<RoomId>>,
    pub l1_feature_names: Vec<String>,
    pub l2_feature_names: Vec<Vec<String>>,
}

/// Masked, renormalized pick over `(label, prob)` candidates.
///
/// With zero surviving mass the pick is uniform over the candidates. Sample
/// mode consumes exactly one uniform draw; argmax ties resolve to the first
/// (lowest-label) candidate.
fn pick_masked(
    candidates: &[(u32, f64)],
    mode: RoutingMode,
    rng: &mut ChaCha8Rng,
) -> u32 {
    debug_assert!(!candidates.is_empty());
    if candidates.len() == 1 {
        return candidates[0].0;
    }
    let mass: f64 = candidates.iter().map(|(_, p)| p).sum();
    match mode {
        RoutingMode::Argmax => {
            let mut best = 0usize;
            for i in 1..candidates.len() {
                if candidates[i].1 > candidates[best].1 {
                    best = i;
                }
            }
            candidates[best].0
        }
        RoutingMode::Sample => {
            if mass <= 0.0 {
                let i = rng.random_range(0..candidates.len());
                return candidates[i].0;
            }
            let mut u = rng.random::<f64>() * mass;
            for &(label, p) in candidates {
                if u < p {
                    return label;
                }
                u -= p;
            }
            candidates[candidates.len() - 1].0
        }
    }
}

/// Two-level routing decision: pick an admissible room type with open rooms,
/// then an open room within it. `None` when nothing admissible is open.
pub fn route(
    policy: &RoutingPolicy,
    ctx: &RoutingContext<'_>,
    patient: &SimPatient,
    mode: RoutingMode,
    rng: &mut ChaCha8Rng,
) -> Option<RoomId> {
    let elig = &policy.eligibility[patient.item_group];
    let open_by_type = ctx.open_by_type();
    let valid_types: Vec<u8> = elig
        .iter()
        .copied()
        .filter(|&t| open_by_type[t as usize] > 0)
        .collect();
    if valid_types.is_empty() {
        return None;
    }

    let chosen_type = if valid_types.len() == 1 {
        valid_types[0]
    } else {
        let features = extract_l1(ctx, patient).to_vector(policy.n_groups);
        let probs = policy
            .level1
            .predict_proba(&features)
            .expect("level-1 schema mismatch");
        let candidates: Vec<(u32, f64)> = valid_types
            .iter()
            .map(|&t| {
                let li = policy
                    .level1
                    .labels
                    .binary_search(&(t as u32))
                    .expect("type in level-1 catalog");
                (t as u32, probs[li])
            })
            .collect();
        pick_masked(&candidates, mode, rng) as u8
    };

    let rooms_of_type = &policy.type_rooms[chosen_type as usize];
    let open_rooms: Vec<RoomId> = rooms_of_type
        .iter()
        .copied()
        .filter(|&room| {
            let idx = ctx.rooms.binary_search(&room).expect("room in universe");
            ctx.open[idx]
        })
        .collect();
    debug_assert!(!open_rooms.is_empty());

    let chosen_room = if open_rooms.len() == 1 {
        open_rooms[0]
    } else {
        let features = extract_l2(ctx, patient, rooms_of_type).to_vector(policy.n_groups);
        let forest = &policy.level2[chosen_type as usize];
        let probs = forest
            .predict_proba(&features)
            .expect("level-2 schema mismatch");
        let candidates: Vec<(u32, f64)> = open_rooms
            .iter()
            .map(|&room| {
                let li = forest
                    .labels
                    .binary_search(&(room as u32))
                    .expect("room in level-2 catalog");
                (room as u32, probs[li])
            })
            .collect();
        pick_masked(&candidates, mode, rng) as RoomId
    };

    debug_assert!(elig.contains(&chosen_type));
    Some(chosen_room)
}

/// Join-shortest-queue baseline over the open rooms of admissible types;
/// queue ties break to the lowest room id.
pub fn jsq_route(
    ctx: &RoutingContext<'_>,
    patient: &SimPatient,
    eligibility: &[Vec<u8>],
) -> Option<RoomId> {
    let elig = &eligibility[patient.item_group];
    let mut best: Option<(u32, RoomId)> = None;
    for (idx, &room) in ctx.rooms.iter().enumerate() {
        if !ctx.open[idx] || !elig.contains(&ctx.room_type[idx]) {
            continue;
        }
        let key = (ctx.waiting[idx], room);
        if best.is_none() || key < best.unwrap() {
            best = Some(key);
        }
    }
    best.map(|(_, room)| room)
}

/// Learned-policy router for the engine.
pub struct TwoLevelRouter<'a> {
    pub policy: &'a RoutingPolicy,
    pub mode: RoutingMode,
}

impl Router for TwoLevelRouter<'_> {
    fn route(
        &self,
        ctx: &RoutingContext<'_>,
        patient: &SimPatient,
        rng: &mut ChaCha8Rng,
    ) -> Option<RoomId> {
        route(self.policy, ctx, patient, self.mode, rng)
    }
}

/// JSQ baseline router for the engine.
pub struct JsqRouter<'a> {
    pub eligibility: &'a [Vec<u8>],
}

impl Router for JsqRouter<'_> {
    fn route(
        &self,
        ctx: &RoutingContext<'_>,
        patient: &SimPatient,
        _rng: &mut ChaCha8Rng,
    ) -> Option<RoomId> {
        jsq_route(ctx, patient, self.eligibility)
    }
}

/// Reconstructed state features for one historical arrival.
#[derive(Debug, Clone)]
pub struct ReplayRow {
    pub record_idx: usize,
    pub l1_vector: Vec<f64>,
    /// Type of the room the patient was actually routed to.
    pub l1_label: u8,
    pub l2_vector: Vec<f64>,
    pub l2_label: RoomId,
}

/// Replays a classified log day by day, reconstructing the queue lengths and
/// open-room indicators each arrival saw.
pub fn reconstruct_replay_rows(
    clog: &ClassifiedLog,
    item_groups: &ItemGroupModel,
    room_types: &RoomTypeModel,
    patterns: &OpenPatternLibrary,
    horizon: HourHorizon,
) -> Result<Vec<ReplayRow>, RoutingError> {
    let rooms = &room_types.rooms;
    let n_groups = item_groups.n_groups;

    let mut day_ids: Vec<u32> = clog.records.iter().map(|r| r.day_id).collect();
    day_ids.sort_unstable();
    day_ids.dedup();

    let mut rows = Vec::with_capacity(clog.records.len());
    for day_id in day_ids {
        let pattern = patterns
            .days
            .binary_search_by_key(&day_id, |d| d.day_id)
            .map(|i| &patterns.days[i])
            .map_err(|_| RoutingError::MissingPattern(day_id))?;

        // Arrival order within the day: time, then patient id.
        let mut order: Vec<usize> = (0..clog.records.len())
            .filter(|&i| clog.records[i].day_id == day_id)
            .collect();
        order.sort_by(|&a, &b| {
            let ra = &clog.records[a];
            let rb = &clog.records[b];
            (ra.arrival_ts, &ra.patient_id).cmp(&(rb.arrival_ts, &rb.patient_id))
        });

        // Waiting patients per room as a heap of service-start times;
        // starts strictly before the arrival instant have left the queue.
        let mut pending: Vec<BinaryHeap<Reverse<u32>>> =
            vec![BinaryHeap::new(); rooms.len()];
        let weekday = crate::eventlog::weekday_of(day_id);

        for &ri in &order {
            let rec = &clog.records[ri];
            let t = rec.arrival_ts;
            let mut waiting = vec![0u32; rooms.len()];
            for (room_idx, heap) in pending.iter_mut().enumerate() {
                while let Some(&Reverse(start)) = heap.peek() {
                    if start < t {
                        heap.pop();
                    } else {
                        break;
                    }
                }
                waiting[room_idx] = heap.len() as u32;
            }
            let hour = t / 3600;
            let open: Vec<bool> = rooms
                .iter()
                .map(|&room| {
                    hour >= horizon.start_hour as u32
                        && pattern.hours_of(room).contains(&(hour.min(255) as u8))
                })
                .collect();

            let ctx = RoutingContext {
                clock: t as u64,
                hour,
                weekday,
                rooms,
                open: &open,
                waiting: &waiting,
                room_type: &room_types.type_of,
                n_types: room_types.n_types,
            };
            let patient = SimPatient {
                patient_id: rec.patient_id.clone(),
                seq: ri,
                gender: rec.gender,
                age: rec.age,
                department: rec.department.clone(),
                exam_items: rec.exam_items.clone(),
                item_group: clog.group_of[ri],
                class_idx: clog.class_of[ri],
                arrival: t as u64,
            };
            let room_type = room_types
                .room_type(rec.room_id)
                .expect("record room outside universe");
            let l1 = extract_l1(&ctx, &patient).to_vector(n_groups);
            let l2 = extract_l2(&ctx, &patient, &room_types.type_members[room_type as usize])
                .to_vector(n_groups);
            rows.push(ReplayRow {
                record_idx: ri,
                l1_vector: l1,
                l1_label: room_type,
                l2_vector: l2,
                l2_label: rec.room_id,
            });

            let room_idx = rooms.binary_search(&rec.room_id).expect("room in universe");
            pending[room_idx].push(Reverse(rec.service_start_ts));
        }
    }
    Ok(rows)
}

/// One row of the policy evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub level: String,
    pub n_train: usize,
    pub n_test: usize,
    pub auc_train: Option<f64>,
    pub auc_test: Option<f64>,
    pub accuracy_train: Option<f64>,
    pub accuracy_test: Option<f64>,
}

/// Evaluation report: one entry for the first level plus one per room type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvalReport {
    pub entries: Vec<EvalEntry>,
}

impl PolicyEvalReport {
    /// CSV rendering: `level,n_train,n_test,auc_train,auc_test,acc_train,acc_test`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("level,n_train,n_test,auc_train,auc_test,accuracy_train,accuracy_test\n");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.level,
                e.n_train,
                e.n_test,
                fmt(e.auc_train),
                fmt(e.auc_test),
                fmt(e.accuracy_train),
                fmt(e.accuracy_test),
            ));
        }
        out
    }
}

pub struct TrainPolicyConfig {
    pub seed: u64,
    pub mode: RoutingMode,
    pub l1_hyperparams: Option<Hyperparams>,
    pub l2_hyperparams: Option<Vec<Hyperparams>>,
    pub min_room_rows: usize,
}

const SPLIT_STREAM: u64 = 0x53504c49;

fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream_rng(seed, SPLIT_STREAM);
    idx.shuffle(&mut rng);
    let n_train = (n * 4).div_ceil(5);
    let test = idx.split_off(n_train);
    (idx, test)
}

fn eval_forest(
    forest: &RandomForest,
    x_train: &[Vec<f64>],
    y_train: &[u32],
    x_test: &[Vec<f64>],
    y_test: &[u32],
    level: String,
) -> EvalEntry {
    let auc_of = |x: &[Vec<f64>], y: &[u32]| -> Option<f64> {
        if x.is_empty() {
            return None;
        }
        ovr_auc(forest, x, y).ok().map(|(a, _)| a)
    };
    let acc_of = |x: &[Vec<f64>], y: &[u32]| -> Option<f64> {
        if x.is_empty() {
            return None;
        }
        accuracy(forest, x, y).ok()
    };
    EvalEntry {
        level,
        n_train: x_train.len(),
        n_test: x_test.len(),
        auc_train: auc_of(x_train, y_train),
        auc_test: auc_of(x_test, y_test),
        accuracy_train: acc_of(x_train, y_train),
        accuracy_test: acc_of(x_test, y_test),
    }
}

/// Trains the two-level routing policy from replayed state features, with a
/// 4/5-1/5 random train/test split and an AUC/accuracy report per model.
pub fn train_policy(
    clog: &ClassifiedLog,
    item_groups: &ItemGroupModel,
    room_types: &RoomTypeModel,
    patterns: &OpenPatternLibrary,
    horizon: HourHorizon,
    cfg: TrainPolicyConfig,
) -> Result<(RoutingPolicy, PolicyEvalReport, Vec<String>), RoutingError> {
    let mut warnings = Vec::new();
    let rows = reconstruct_replay_rows(clog, item_groups, room_types, patterns, horizon)?;
    let n_types = room_types.n_types;
    let n_groups = item_groups.n_groups;

    // Observed eligibility: item group -> room types it was routed to.
    let mut eligibility: Vec<Vec<u8>> = vec![Vec::new(); n_groups];
    for row in &rows {
        let elig = &mut eligibility[clog.group_of[row.record_idx]];
        if !elig.contains(&row.l1_label) {
            elig.push(row.l1_label);
        }
    }
    for elig in &mut eligibility {
        elig.sort_unstable();
    }
    for (g, elig) in eligibility.iter().enumerate() {
        if elig.is_empty() {
            warnings.push(format!(
                "item group {g} has no observed routings; it can never be routed"
            ));
        }
    }

    let (train_idx, test_idx) = split_indices(rows.len(), cfg.seed);

    // Level 1.
    let l1_hp = cfg
        .l1_hyperparams
        .clone()
        .unwrap_or_else(|| Hyperparams::first_level(rng::derive_seed(cfg.seed, 100)));
    let l1_catalog: Vec<u32> = (0..n_types as u32).collect();
    let x_train: Vec<Vec<f64>> = train_idx.iter().map(|&i| rows[i].l1_vector.clone()).collect();
    let y_train: Vec<u32> = train_idx.iter().map(|&i| rows[i].l1_label as u32).collect();
    let x_test: Vec<Vec<f64>> = test_idx.iter().map(|&i| rows[i].l1_vector.clone()).collect();
    let y_test: Vec<u32> = test_idx.iter().map(|&i| rows[i].l1_label as u32).collect();
    let (level1, mut w) = forest::train_with_catalog(&x_train, &y_train, &l1_catalog, &l1_hp)?;
    warnings.append(&mut w);

    let mut report = PolicyEvalReport::default();
    report.entries.push(eval_forest(
        &level1,
        &x_train,
        &y_train,
        &x_test,
        &y_test,
        "level1".to_string(),
    ));

    // Level 2, one forest per type.
    let mut level2 = Vec::with_capacity(n_types);
    let mut l2_feature_names = Vec::with_capacity(n_types);
    for t in 0..n_types {
        let rooms_of_type = &room_types.type_members[t];
        let catalog: Vec<u32> = rooms_of_type.iter().map(|&r| r as u32).collect();
        let hp = cfg
            .l2_hyperparams
            .as_ref()
            .and_then(|v| v.get(t).cloned())
            .unwrap_or_else(|| {
                Hyperparams::second_level(t, rng::derive_seed(cfg.seed, 200 + t as u64))
            });

        let mut x_train: Vec<Vec<f64>> = Vec::new();
        let mut y_train: Vec<u32> = Vec::new();
        for &i in &train_idx {
            if rows[i].l1_label as usize == t {
                x_train.push(rows[i].l2_vector.clone());
                y_train.push(rows[i].l2_label as u32);
            }
        }
        let mut x_test: Vec<Vec<f64>> = Vec::new();
        let mut y_test: Vec<u32> = Vec::new();
        for &i in &test_idx {
            if rows[i].l1_label as usize == t {
                x_test.push(rows[i].l2_vector.clone());
                y_test.push(rows[i].l2_label as u32);
            }
        }
        if x_train.is_empty() {
            // Type landed entirely in the test split; train on everything.
            warnings.push(format!(
                "room type {t} had no rows in the training split; using all its rows"
            ));
            x_train = std::mem::take(&mut x_test);
            y_train = std::mem::take(&mut y_test);
        }

        let mut room_rows = vec![0usize; rooms_of_type.len()];
        for &label in &y_train {
            if let Ok(pos) = catalog.binary_search(&label) {
                room_rows[pos] += 1;
            }
        }
        for (pos, &count) in room_rows.iter().enumerate() {
            if count < cfg.min_room_rows {
                warnings.push(format!(
                    "room {} has {count} training rows (< {}); probability estimates will be noisy",
                    rooms_of_type[pos], cfg.min_room_rows
                ));
            }
        }

        let (forest_t, mut w) = forest::train_with_catalog(&x_train, &y_train, &catalog, &hp)?;
        warnings.append(&mut w);
        report.entries.push(eval_forest(
            &forest_t,
            &x_train,
            &y_train,
            &x_test,
            &y_test,
            format!("level2-R{}", t + 1),
        ));
        level2.push(forest_t);
        l2_feature_names.push(RoutingFeaturesL2::feature_names(n_groups, rooms_of_type));
    }

    let policy = RoutingPolicy {
        mode: cfg.mode,
        n_types,
        n_groups,
        level1,
        level2,
        eligibility,
        type_rooms: room_types.type_members.clone(),
        l1_feature_names: RoutingFeaturesL1::feature_names(n_groups, n_types),
        l2_feature_names,
    };
    Ok((policy, report, warnings))
}
