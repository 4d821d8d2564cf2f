//! Patient and room classification: exam-item groups from a Gaussian
//! mixture, room types from Ward hierarchical clustering, and the patient
//! classes (item group x age bucket x gender) built from their cross
//! product.

mod gmm;
mod ward;

pub use gmm::{fit_gmm, GmmFit, Standardizer, VAR_FLOOR};
pub use ward::{cut as cut_dendrogram, ward_linkage, Merge};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{Gender, PatientRecord, RoomId};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("component {0} degenerated twice during EM")]
    DegenerateComponent(usize),
    #[error("cannot cluster {rooms} rooms into {types} types")]
    TooManyTypes { rooms: usize, types: usize },
    #[error("room {0} has no records; every room in the universe needs at least one")]
    EmptyRoom(RoomId),
    #[error("no single-item records to build item features from")]
    NoSingleItemRecords,
}

/// Age bucket boundaries in years; buckets are half-open `[lo, hi)` with the
/// last one unbounded.
pub const AGE_BUCKET_BOUNDS: [f64; 10] = [0.0, 0.5, 5.5, 10.5, 20.5, 30.5, 40.5, 50.5, 60.5, 70.5];

pub const N_AGE_BUCKETS: usize = 10;

/// Bucket index of an age, 0..=9.
pub fn age_bucket(age: f64) -> usize {
    let mut b = 0;
    for (i, &lo) in AGE_BUCKET_BOUNDS.iter().enumerate() {
        if age >= lo {
            b = i;
        } else {
            break;
        }
    }
    b
}

/// Per-item calibration features: mean and standard deviation of service
/// time plus the empirical routing frequency over the room universe.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemFeatureSet {
    /// Item codes with >= 2 single-item observations, sorted.
    pub items: Vec<String>,
    /// Feature rows aligned with `items`.
    pub rows: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
    /// Items with fewer than two observations: (code, observation count).
    pub insufficient: Vec<(String, usize)>,
}

/// Computes per-item features from the single-item records of a log.
pub fn item_features(log: &[PatientRecord], universe: &[RoomId]) -> ItemFeatureSet {
    let mut obs: BTreeMap<&str, Vec<(f64, RoomId)>> = BTreeMap::new();
    for r in log {
        if r.exam_items.len() == 1 {
            obs.entry(r.exam_items[0].as_str())
                .or_default()
                .push((r.service_secs() as f64, r.room_id));
        }
    }

    let mut feature_names = vec!["service_mean_s".to_string(), "service_std_s".to_string()];
    for room in universe {
        feature_names.push(format!("room_{room}_freq"));
    }

    let mut set = ItemFeatureSet {
        items: Vec::new(),
        rows: Vec::new(),
        feature_names,
        insufficient: Vec::new(),
    };
    for (item, samples) in obs {
        if samples.len() < 2 {
            set.insufficient.push((item.to_string(), samples.len()));
            continue;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().map(|(s, _)| s).sum::<f64>() / n;
        let var = samples
            .iter()
            .map(|(s, _)| (s - mean) * (s - mean))
            .sum::<f64>()
            / (n - 1.0);
        let mut row = vec![mean, var.sqrt()];
        for room in universe {
            let c = samples.iter().filter(|(_, r)| r == room).count();
            row.push(c as f64 / n);
        }
        set.items.push(item.to_string());
        set.rows.push(row);
    }
    set
}

/// Exam-item grouping: fitted mixture components plus the item-to-group map
/// and the dedicated multi-item group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemGroupModel {
    pub gmm: GmmFit,
    pub feature_names: Vec<String>,
    /// (item code, group) sorted by code; covers items seen in calibration.
    pub item_groups: Vec<(String, usize)>,
    /// Group reserved for patients with more than one exam item.
    pub multi_group: usize,
    /// Largest cluster; items with too few observations land here.
    pub fallback_group: usize,
    /// Cluster count plus the multi-item group.
    pub n_groups: usize,
}

impl ItemGroupModel {
    pub fn group_of_item(&self, item: &str) -> Option<usize> {
        self.item_groups
            .binary_search_by(|(code, _)| code.as_str().cmp(item))
            .ok()
            .map(|i| self.item_groups[i].1)
    }

    /// Group of a record's item list: multi-item records go to the reserved
    /// group, known single items to their cluster, unseen items to the
    /// fallback group.
    pub fn group_for(&self, items: &[String]) -> usize {
        if items.len() > 1 {
            return self.multi_group;
        }
        self.group_of_item(&items[0]).unwrap_or(self.fallback_group)
    }

    /// Group for an unseen single item with freshly computed features:
    /// nearest component by Mahalanobis distance.
    pub fn group_for_unseen(&self, features: &[f64]) -> usize {
        self.gmm.nearest_mahalanobis(features)
    }

    /// Display label (P1, P2, ...) for a group index.
    pub fn group_label(&self, group: usize) -> String {
        format!("P{}", group + 1)
    }
}

/// Builds the item-group model from a fitted mixture: cluster assignments
/// for well-observed items, the largest cluster as fallback for the rest,
/// and the next free index as the multi-item group.
pub fn assign_item_groups(fit: GmmFit, features: &ItemFeatureSet) -> ItemGroupModel {
    let mut cluster_sizes = vec![0usize; fit.k];
    for &a in &fit.assignments {
        cluster_sizes[a] += 1;
    }
    let fallback_group = cluster_sizes
        .iter()
        .enumerate()
        .max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let mut item_groups: Vec<(String, usize)> = features
        .items
        .iter()
        .cloned()
        .zip(fit.assignments.iter().copied())
        .collect();
    for (item, _) in &features.insufficient {
        item_groups.push((item.clone(), fallback_group));
    }
    item_groups.sort();

    let multi_group = fit.k;
    ItemGroupModel {
        n_groups: fit.k + 1,
        gmm: fit,
        feature_names: features.feature_names.clone(),
        item_groups,
        multi_group,
        fallback_group,
    }
}

/// Room typing: the partition of the room universe plus the dendrogram and
/// feature matrix it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomTypeModel {
    /// Room ids, sorted; all other vectors align with this order.
    pub rooms: Vec<RoomId>,
    /// Type index per room, 0-based, ordered by each type's smallest room id.
    pub type_of: Vec<u8>,
    pub n_types: usize,
    /// Rooms of each type.
    pub type_members: Vec<Vec<RoomId>>,
    pub merges: Vec<Merge>,
    pub feature_names: Vec<String>,
    /// Raw (unstandardized) feature rows aligned with `rooms`.
    pub features: Vec<Vec<f64>>,
}

impl RoomTypeModel {
    pub fn room_type(&self, room: RoomId) -> Option<u8> {
        self.rooms
            .binary_search(&room)
            .ok()
            .map(|i| self.type_of[i])
    }

    pub fn type_label(&self, t: u8) -> String {
        format!("R{}", t + 1)
    }
}

/// Clusters rooms into `n_types` types with Ward linkage on standardized
/// features: open-day count, mean service time, and the proportion of each
/// exam item performed.
pub fn cluster_rooms(
    log: &[PatientRecord],
    universe: &[RoomId],
    n_types: usize,
) -> Result<RoomTypeModel, ClassifyError> {
    let mut rooms: Vec<RoomId> = universe.to_vec();
    rooms.sort_unstable();
    rooms.dedup();
    if n_types > rooms.len() {
        return Err(ClassifyError::TooManyTypes {
            rooms: rooms.len(),
            types: n_types,
        });
    }

    let mut item_codes: Vec<&str> = log
        .iter()
        .flat_map(|r| r.exam_items.iter().map(|s| s.as_str()))
        .collect();
    item_codes.sort_unstable();
    item_codes.dedup();

    let mut features = Vec::with_capacity(rooms.len());
    for &room in &rooms {
        let recs: Vec<&PatientRecord> = log.iter().filter(|r| r.room_id == room).collect();
        if recs.is_empty() {
            return Err(ClassifyError::EmptyRoom(room));
        }
        let mut days: Vec<u32> = recs.iter().map(|r| r.day_id).collect();
        days.sort_unstable();
        days.dedup();
        let mean_service =
            recs.iter().map(|r| r.service_secs() as f64).sum::<f64>() / recs.len() as f64;
        let mut row = vec![days.len() as f64, mean_service];
        let item_total: usize = recs.iter().map(|r| r.exam_items.len()).sum();
        for code in &item_codes {
            let c: usize = recs
                .iter()
                .map(|r| r.exam_items.iter().filter(|i| i == code).count())
                .sum();
            row.push(c as f64 / item_total as f64);
        }
        features.push(row);
    }

    let standardizer = Standardizer::fit(&features);
    let standardized = standardizer.apply_all(&features);
    let merges = ward_linkage(&standardized);
    let labels = ward::cut(&merges, rooms.len(), n_types);

    let mut type_members: Vec<Vec<RoomId>> = vec![Vec::new(); n_types];
    for (i, &room) in rooms.iter().enumerate() {
        type_members[labels[i]].push(room);
    }

    let mut feature_names = vec!["open_days".to_string(), "mean_service_s".to_string()];
    feature_names.extend(item_codes.iter().map(|c| format!("item_{c}_prop")));

    Ok(RoomTypeModel {
        type_of: labels.iter().map(|&l| l as u8).collect(),
        n_types,
        rooms,
        type_members,
        merges,
        feature_names,
        features,
    })
}

/// A patient class: item group x age bucket x gender.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct PatientClass {
    pub item_group: usize,
    pub age_bucket: usize,
    pub gender: Gender,
}

impl PatientClass {
    pub fn of_record(model: &ItemGroupModel, record: &PatientRecord) -> PatientClass {
        PatientClass {
            item_group: model.group_for(&record.exam_items),
            age_bucket: age_bucket(record.age),
            gender: record.gender,
        }
    }
}

/// The sorted list of patient classes observed in the log — only
/// combinations with at least one record are instantiated.
pub fn build_patient_classes(model: &ItemGroupModel, log: &[PatientRecord]) -> Vec<PatientClass> {
    let mut classes: Vec<PatientClass> = log
        .iter()
        .map(|r| PatientClass::of_record(model, r))
        .collect();
    classes.sort();
    classes.dedup();
    classes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::default_room_universe;

    fn record(item: &str, room: RoomId, service_s: u32, age: f64, gender: Gender, day: u32) -> PatientRecord {
        PatientRecord {
            patient_id: "p".into(),
            gender,
            age,
            department: "D".into(),
            exam_items: vec![item.into()],
            arrival_ts: 8 * 3600,
            service_start_ts: 8 * 3600,
            service_end_ts: 8 * 3600 + service_s,
            room_id: room,
            technician_id: None,
            day_id: day,
        }
    }

    #[test]
    fn item_features_hand_arithmetic() {
        let log = vec![
            record("A", 3, 300, 30.0, Gender::Female, 0),
            record("A", 3, 500, 30.0, Gender::Female, 0),
        ];
        let set = item_features(&log, &default_room_universe());
        assert_eq!(set.items, vec!["A".to_string()]);
        let row = &set.rows[0];
        assert!((row[0] - 400.0).abs() < 1e-9);
        assert!((row[1] - 141.4213562373095).abs() < 1e-9);
        // Routing frequency 1.0 at room 3.
        let room3_col = 2 + 2; // two service columns, rooms 1 and 2 before room 3
        assert_eq!(row[room3_col], 1.0);
        assert!((row[2..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_observation_goes_to_insufficient() {
        let log = vec![record("Z", 1, 100, 20.0, Gender::Male, 0)];
        let set = item_features(&log, &default_room_universe());
        assert!(set.items.is_empty());
        assert_eq!(set.insufficient, vec![("Z".to_string(), 1)]);
    }

    #[test]
    fn empty_log_empty_features() {
        let set = item_features(&[], &default_room_universe());
        assert!(set.items.is_empty() && set.insufficient.is_empty());
    }

    #[test]
    fn multi_item_records_ignored_for_features() {
        let mut log = vec![
            record("A", 3, 300, 30.0, Gender::Female, 0),
            record("A", 3, 400, 30.0, Gender::Female, 0),
        ];
        let mut multi = record("A", 3, 999, 30.0, Gender::Female, 0);
        multi.exam_items = vec!["A".into(), "B".into()];
        log.push(multi);
        let set = item_features(&log, &default_room_universe());
        assert!((set.rows[0][0] - 350.0).abs() < 1e-9);
    }

    #[test]
    fn age_bucket_boundaries_half_open() {
        assert_eq!(age_bucket(0.0), 0);
        assert_eq!(age_bucket(0.49), 0);
        assert_eq!(age_bucket(0.5), 1);
        assert_eq!(age_bucket(5.5), 2);
        assert_eq!(age_bucket(70.5), 9);
        assert_eq!(age_bucket(95.0), 9);
    }

    fn toy_group_model() -> ItemGroupModel {
        // Two far-apart items, two clusters.
        let log = vec![
            record("A", 1, 100, 20.0, Gender::Female, 0),
            record("A", 1, 110, 21.0, Gender::Female, 0),
            record("B", 2, 900, 22.0, Gender::Female, 0),
            record("B", 2, 910, 23.0, Gender::Female, 0),
        ];
        let set = item_features(&log, &[1, 2]);
        let fit = fit_gmm(&set.rows, 2, 1, 50, 1e-9).unwrap();
        assign_item_groups(fit, &set)
    }

    #[test]
    fn multi_item_record_maps_to_multi_group() {
        let model = toy_group_model();
        let group = model.group_for(&["A".into(), "B".into()]);
        assert_eq!(group, model.multi_group);
        assert_eq!(model.n_groups, 3);
        let ga = model.group_for(&["A".into()]);
        let gb = model.group_for(&["B".into()]);
        assert_ne!(ga, gb);
        assert_ne!(ga, model.multi_group);
    }

    #[test]
    fn unseen_item_falls_back() {
        let model = toy_group_model();
        assert_eq!(model.group_for(&["ZZZ".into()]), model.fallback_group);
    }

    #[test]
    fn group_census_partitions_log() {
        let model = toy_group_model();
        let mut log = vec![
            record("A", 1, 100, 20.0, Gender::Female, 0),
            record("B", 2, 900, 25.0, Gender::Male, 0),
        ];
        let mut multi = record("A", 1, 500, 40.0, Gender::Female, 0);
        multi.exam_items = vec!["A".into(), "B".into()];
        log.push(multi);
        let mut census = vec![0usize; model.n_groups];
        for r in &log {
            census[model.group_for(&r.exam_items)] += 1;
        }
        assert_eq!(census.iter().sum::<usize>(), log.len());
    }

    #[test]
    fn cluster_rooms_identical_rooms_same_type() {
        let mut log = Vec::new();
        for day in 0..3 {
            for room in [1, 2] {
                log.push(record("A", room, 300, 30.0, Gender::Female, day));
            }
            log.push(record("B", 3, 900, 30.0, Gender::Female, day));
        }
        let model = cluster_rooms(&log, &[1, 2, 3], 2).unwrap();
        assert_eq!(model.room_type(1), model.room_type(2));
        assert_ne!(model.room_type(1), model.room_type(3));
        assert_eq!(model.merges[0].height, 0.0);
    }

    #[test]
    fn cluster_rooms_singleton_cut() {
        let log = vec![
            record("A", 1, 300, 30.0, Gender::Female, 0),
            record("B", 2, 600, 30.0, Gender::Female, 0),
        ];
        let model = cluster_rooms(&log, &[1, 2], 2).unwrap();
        assert_eq!(model.type_of, vec![0, 1]);
    }

    #[test]
    fn cluster_rooms_too_many_types_errors() {
        let log = vec![record("A", 1, 300, 30.0, Gender::Female, 0)];
        assert!(matches!(
            cluster_rooms(&log, &[1], 2),
            Err(ClassifyError::TooManyTypes { .. })
        ));
    }

    #[test]
    fn cluster_rooms_empty_room_errors() {
        let log = vec![record("A", 1, 300, 30.0, Gender::Female, 0)];
        assert!(matches!(
            cluster_rooms(&log, &[1, 2], 1),
            Err(ClassifyError::EmptyRoom(2))
        ));
    }

    #[test]
    fn patient_classes_single_record() {
        let model = toy_group_model();
        let log = vec![record("A", 1, 100, 25.0, Gender::Female, 0)];
        let classes = build_patient_classes(&model, &log);
        assert_eq!(classes.len(), 1);
        assert_eq!(classes[0].age_bucket, 4); // [20.5, 30.5)
    }

    #[test]
    fn patient_classes_full_cross_product() {
        let model = toy_group_model();
        let mut log = Vec::new();
        let ages = [0.2, 1.0, 7.0, 15.0, 25.0, 35.0, 45.0, 55.0, 65.0, 80.0];
        for group_rep in ["A", "B", "multi"] {
            for &age in &ages {
                for gender in [Gender::Male, Gender::Female] {
                    let mut r = record("A", 1, 100, age, gender, 0);
                    match group_rep {
                        "A" => {}
                        "B" => r.exam_items = vec!["B".into()],
                        _ => r.exam_items = vec!["A".into(), "B".into()],
                    }
                    log.push(r);
                }
            }
        }
        let classes = build_patient_classes(&model, &log);
        // 3 groups x 10 buckets x 2 genders all observed.
        assert_eq!(classes.len(), 60);
    }
}
