//! Empirical tables estimated from a classified log: hourly arrival rates,
//! per-day room open patterns, service-duration multisets, and the
//! break/walk gap model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CalibrateError, ClassifiedLog, HourHorizon};
use crate::classify::RoomTypeModel;
use crate::eventlog::{day_kind_of, DayKind, PatientRecord, RoomId};

/// Hourly arrival rates per patient class and day kind. A class with an
/// empty vector for a kind has no observed days of that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRateTable {
    pub start_hour: u8,
    pub n_hours: u8,
    pub classes: Vec<ClassRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub weekday: Vec<f64>,
    pub weekend: Vec<f64>,
}

impl ArrivalRateTable {
    pub fn rates_of(&self, class: usize, kind: DayKind) -> &[f64] {
        match kind {
            DayKind::Weekday => &self.classes[class].weekday,
            DayKind::Weekend => &self.classes[class].weekend,
        }
    }

    /// Rate per hour for an absolute hour-of-day; zero outside the horizon.
    pub fn rate(&self, class: usize, kind: DayKind, hour: u32) -> f64 {
        let rates = self.rates_of(class, kind);
        if hour < self.start_hour as u32 {
            return 0.0;
        }
        let idx = (hour - self.start_hour as u32) as usize;
        rates.get(idx).copied().unwrap_or(0.0)
    }

    pub fn max_rate(&self, class: usize, kind: DayKind) -> f64 {
        self.rates_of(class, kind)
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Sum of class rates in one hour cell.
    pub fn total_rate(&self, kind: DayKind, hour: u32) -> f64 {
        (0..self.classes.len())
            .map(|c| self.rate(c, kind, hour))
            .sum()
    }
}

/// Empirical hourly arrival rates: arrivals in each (class, kind, hour) cell
/// divided by the number of observed days of that kind.
pub fn estimate_arrival_rates(
    clog: &ClassifiedLog,
    n_classes: usize,
    horizon: HourHorizon,
) -> (ArrivalRateTable, Vec<String>) {
    let mut warnings = Vec::new();
    let mut days_by_kind: [BTreeSet<u32>; 2] = [BTreeSet::new(), BTreeSet::new()];
    for r in &clog.records {
        days_by_kind[kind_idx(r.day_kind())].insert(r.day_id);
    }
    let n_hours = horizon.n_hours() as usize;
    let mut counts = vec![[vec![0u32; n_hours], vec![0u32; n_hours]]; n_classes];
    let mut outside = 0usize;
    for (r, &class) in clog.records.iter().zip(&clog.class_of) {
        let hour = r.arrival_ts / 3600;
        if hour < horizon.start_hour as u32 || hour >= horizon.end_hour as u32 {
            outside += 1;
            continue;
        }
        let idx = (hour - horizon.start_hour as u32) as usize;
        counts[class][kind_idx(r.day_kind())][idx] += 1;
    }
    if outside > 0 {
        warnings.push(format!(
            "{outside} arrivals outside the {}..{} horizon ignored for rate estimation",
            horizon.start_hour, horizon.end_hour
        ));
    }
    for (kind, name) in [(DayKind::Weekday, "weekday"), (DayKind::Weekend, "weekend")] {
        if days_by_kind[kind_idx(kind)].is_empty() {
            warnings.push(format!("no {name} days observed; {name} rates absent"));
        }
    }

    let classes = counts
        .into_iter()
        .map(|per_kind| {
            let mk = |kind: DayKind, cells: &[u32]| -> Vec<f64> {
                let days = days_by_kind[kind_idx(kind)].len();
                if days == 0 {
                    Vec::new()
                } else {
                    cells.iter().map(|&c| c as f64 / days as f64).collect()
                }
            };
            ClassRates {
                weekday: mk(DayKind::Weekday, &per_kind[0]),
                weekend: mk(DayKind::Weekend, &per_kind[1]),
            }
        })
        .collect();

    (
        ArrivalRateTable {
            start_hour: horizon.start_hour,
            n_hours: horizon.n_hours(),
            classes,
        },
        warnings,
    )
}

fn kind_idx(kind: DayKind) -> usize {
    match kind {
        DayKind::Weekday => 0,
        DayKind::Weekend => 1,
    }
}

/// Hours one room was open on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomHours {
    pub room: RoomId,
    pub hours: Vec<u8>,
}

/// One observed day's open pattern across all rooms, stored whole to
/// preserve cross-room correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPattern {
    pub day_id: u32,
    pub day_kind: DayKind,
    pub rooms: Vec<RoomHours>,
}

impl DayPattern {
    pub fn hours_of(&self, room: RoomId) -> &[u8] {
        self.rooms
            .binary_search_by_key(&room, |rh| rh.room)
            .map(|i| self.rooms[i].hours.as_slice())
            .unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OpenPatternLibrary {
    pub days: Vec<DayPattern>,
}

impl OpenPatternLibrary {
    pub fn days_of_kind(&self, kind: DayKind) -> Vec<&DayPattern> {
        self.days.iter().filter(|d| d.day_kind == kind).collect()
    }
}

/// Infers per-day open hours: room r is open in hour h on day d iff some
/// service interval in (r, d) overlaps the hour window.
pub fn estimate_open_patterns(
    log: &[PatientRecord],
    universe: &[RoomId],
    horizon: HourHorizon,
) -> OpenPatternLibrary {
    let mut day_ids: Vec<u32> = log.iter().map(|r| r.day_id).collect();
    day_ids.sort_unstable();
    day_ids.dedup();
    let mut rooms: Vec<RoomId> = universe.to_vec();
    rooms.sort_unstable();

    let mut by_day_room: BTreeMap<(u32, RoomId), Vec<(u32, u32)>> = BTreeMap::new();
    for r in log {
        by_day_room
            .entry((r.day_id, r.room_id))
            .or_default()
            .push((r.service_start_ts, r.service_end_ts));
    }

    let days = day_ids
        .iter()
        .map(|&day_id| {
            let room_hours = rooms
                .iter()
                .map(|&room| {
                    let mut hours: Vec<u8> = Vec::new();
                    if let Some(intervals) = by_day_room.get(&(day_id, room)) {
                        for h in horizon.start_hour..horizon.end_hour {
                            let lo = h as u32 * 3600;
                            let hi = lo + 3600;
                            let open = intervals.iter().any(|&(s, e)| {
                                (s < hi && e > lo) || (s == e && s >= lo && s < hi)
                            });
                            if open {
                                hours.push(h);
                            }
                        }
                    }
                    RoomHours { room, hours }
                })
                .collect();
            DayPattern {
                day_id,
                day_kind: day_kind_of(day_id),
                rooms: room_hours,
            }
        })
        .collect();

    OpenPatternLibrary { days }
}

/// Which fallback level served a service-table query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackLevel {
    RoomHourClass,
    TypeHourClass,
    TypeClass,
    Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceCell {
    pub room: RoomId,
    pub hour: u8,
    pub class: u16,
    /// Sorted observed durations in seconds, all positive.
    pub durations: Vec<u32>,
}

/// Empirical service durations keyed by (room, hour of service start,
/// patient class), with aggregate pools for the fallback chain.
#[derive(Debug, Serialize, Deserialize)]
pub struct ServiceTable {
    pub cells: Vec<ServiceCell>,
    #[serde(skip)]
    index: OnceLock<ServiceIndex>,
}

#[derive(Debug, Default)]
struct ServiceIndex {
    type_hour_class: HashMap<(u8, u8, u16), Vec<u32>>,
    type_class: HashMap<(u8, u16), Vec<u32>>,
    class: HashMap<u16, Vec<u32>>,
    room_type: HashMap<RoomId, u8>,
}

impl Clone for ServiceTable {
    fn clone(&self) -> Self {
        ServiceTable {
            cells: self.cells.clone(),
            index: OnceLock::new(),
        }
    }
}

impl PartialEq for ServiceTable {
    fn eq(&self, other: &Self) -> bool {
        self.cells == other.cells
    }
}

impl ServiceTable {
    pub fn new(cells: Vec<ServiceCell>) -> ServiceTable {
        ServiceTable {
            cells,
            index: OnceLock::new(),
        }
    }

    fn index(&self, room_types: &RoomTypeModel) -> &ServiceIndex {
        self.index.get_or_init(|| {
            let mut idx = ServiceIndex::default();
            for (&room, &t) in room_types.rooms.iter().zip(&room_types.type_of) {
                idx.room_type.insert(room, t);
            }
            for cell in &self.cells {
                let t = room_types.room_type(cell.room).unwrap_or(0);
                idx.type_hour_class
                    .entry((t, cell.hour, cell.class))
                    .or_default()
                    .extend_from_slice(&cell.durations);
                idx.type_class
                    .entry((t, cell.class))
                    .or_default()
                    .extend_from_slice(&cell.durations);
                idx.class
                    .entry(cell.class)
                    .or_default()
                    .extend_from_slice(&cell.durations);
            }
            for pool in idx.type_hour_class.values_mut() {
                pool.sort_unstable();
            }
            for pool in idx.type_class.values_mut() {
                pool.sort_unstable();
            }
            for pool in idx.class.values_mut() {
                pool.sort_unstable();
            }
            idx
        })
    }

    pub fn exact_cell(&self, room: RoomId, hour: u8, class: u16) -> Option<&ServiceCell> {
        self.cells
            .binary_search_by_key(&(room, hour, class), |c| (c.room, c.hour, c.class))
            .ok()
            .map(|i| &self.cells[i])
    }

    /// First non-empty sample along the fallback chain
    /// (room, hour, class) -> (type, hour, class) -> (type, class) -> (class).
    pub fn effective_sample(
        &self,
        room_types: &RoomTypeModel,
        room: RoomId,
        hour: u8,
        class: u16,
    ) -> Option<(&[u32], FallbackLevel)> {
        if let Some(cell) = self.exact_cell(room, hour, class) {
            if !cell.durations.is_empty() {
                return Some((&cell.durations, FallbackLevel::RoomHourClass));
            }
        }
        let idx = self.index(room_types);
        let t = *idx.room_type.get(&room)?;
        if let Some(pool) = idx.type_hour_class.get(&(t, hour, class)) {
            return Some((pool, FallbackLevel::TypeHourClass));
        }
        if let Some(pool) = idx.type_class.get(&(t, class)) {
            return Some((pool, FallbackLevel::TypeClass));
        }
        idx.class
            .get(&class)
            .map(|pool| (pool.as_slice(), FallbackLevel::Class))
    }

    /// Uniform draw with replacement from the effective sample.
    pub fn sample_duration(
        &self,
        room_types: &RoomTypeModel,
        room: RoomId,
        hour: u8,
        class: u16,
        rng: &mut ChaCha8Rng,
    ) -> Option<u32> {
        let (pool, _) = self.effective_sample(room_types, room, hour, class)?;
        Some(pool[rng.random_range(0..pool.len())])
    }
}

/// Buckets service durations by (room, hour of service start, class).
/// Zero-length services are dropped; a class whose every observation is
/// zero-length cannot be simulated and is an error.
pub fn estimate_service_table(
    clog: &ClassifiedLog,
    n_classes: usize,
) -> Result<(ServiceTable, Vec<String>), CalibrateError> {
    let mut cells: BTreeMap<(RoomId, u8, u16), Vec<u32>> = BTreeMap::new();
    let mut class_seen = vec![false; n_classes];
    let mut dropped = 0usize;
    for (r, &class) in clog.records.iter().zip(&clog.class_of) {
        let dur = r.service_secs();
        if dur == 0 {
            dropped += 1;
            continue;
        }
        let hour = (r.service_start_ts / 3600).min(255) as u8;
        cells
            .entry((r.room_id, hour, class as u16))
            .or_default()
            .push(dur);
        class_seen[class] = true;
    }
    for (class, seen) in class_seen.iter().enumerate() {
        if !seen {
            return Err(CalibrateError::ClassWithoutService(class));
        }
    }
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!("{dropped} zero-length services dropped"));
    }
    let cells = cells
        .into_iter()
        .map(|((room, hour, class), mut durations)| {
            durations.sort_unstable();
            ServiceCell {
                room,
                hour,
                class,
                durations,
            }
        })
        .collect();
    Ok((ServiceTable::new(cells), warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCell {
    pub room_type: u8,
    pub hour: u8,
    /// Break durations observed in this cell, sorted.
    pub breaks: Vec<u32>,
    /// Walk durations observed in this cell, sorted.
    pub walks: Vec<u32>,
    /// Busy-period handoffs observed (break-or-not denominators).
    pub busy_handoffs: u32,
    pub break_count: u32,
}

/// Break and walk gap distributions per (room type, hour), with the gap
/// detection threshold they were estimated under.
#[derive(Debug, Serialize, Deserialize)]
pub struct GapModel {
    pub threshold_s: u32,
    pub cells: Vec<GapCell>,
    #[serde(skip)]
    agg: OnceLock<GapAgg>,
}

#[derive(Debug, Default)]
struct GapAgg {
    type_breaks: HashMap<u8, Vec<u32>>,
    type_walks: HashMap<u8, Vec<u32>>,
    type_handoffs: HashMap<u8, (u32, u32)>,
    all_breaks: Vec<u32>,
    all_walks: Vec<u32>,
    all_handoffs: (u32, u32),
}

impl Clone for GapModel {
    fn clone(&self) -> Self {
        GapModel {
            threshold_s: self.threshold_s,
            cells: self.cells.clone(),
            agg: OnceLock::new(),
        }
    }
}

impl PartialEq for GapModel {
    fn eq(&self, other: &Self) -> bool {
        self.threshold_s == other.threshold_s && self.cells == other.cells
    }
}

impl GapModel {
    pub fn new(threshold_s: u32, cells: Vec<GapCell>) -> GapModel {
        GapModel {
            threshold_s,
            cells,
            agg: OnceLock::new(),
        }
    }

    fn agg(&self) -> &GapAgg {
        self.agg.get_or_init(|| {
            let mut agg = GapAgg::default();
            for cell in &self.cells {
                agg.type_breaks
                    .entry(cell.room_type)
                    .or_default()
                    .extend_from_slice(&cell.breaks);
                agg.type_walks
                    .entry(cell.room_type)
                    .or_default()
                    .extend_from_slice(&cell.walks);
                let h = agg.type_handoffs.entry(cell.room_type).or_default();
                h.0 += cell.busy_handoffs;
                h.1 += cell.break_count;
                agg.all_breaks.extend_from_slice(&cell.breaks);
                agg.all_walks.extend_from_slice(&cell.walks);
                agg.all_handoffs.0 += cell.busy_handoffs;
                agg.all_handoffs.1 += cell.break_count;
            }
            for pool in agg.type_breaks.values_mut() {
                pool.sort_unstable();
            }
            for pool in agg.type_walks.values_mut() {
                pool.sort_unstable();
            }
            agg.all_breaks.sort_unstable();
            agg.all_walks.sort_unstable();
            agg
        })
    }

    fn cell(&self, room_type: u8, hour: u8) -> Option<&GapCell> {
        self.cells
            .binary_search_by_key(&(room_type, hour), |c| (c.room_type, c.hour))
            .ok()
            .map(|i| &self.cells[i])
    }

    /// Break probability with fallback: cell -> room type -> global -> 0.
    pub fn break_probability(&self, room_type: u8, hour: u8) -> f64 {
        if let Some(cell) = self.cell(room_type, hour) {
            if cell.busy_handoffs > 0 {
                return cell.break_count as f64 / cell.busy_handoffs as f64;
            }
        }
        let agg = self.agg();
        if let Some(&(handoffs, breaks)) = agg.type_handoffs.get(&room_type) {
            if handoffs > 0 {
                return breaks as f64 / handoffs as f64;
            }
        }
        let (handoffs, breaks) = agg.all_handoffs;
        if handoffs > 0 {
            breaks as f64 / handoffs as f64
        } else {
            0.0
        }
    }

    pub fn sample_break_duration(
        &self,
        room_type: u8,
        hour: u8,
        rng: &mut ChaCha8Rng,
    ) -> Option<u32> {
        let pool: &[u32] = match self.cell(room_type, hour) {
            Some(cell) if !cell.breaks.is_empty() => &cell.breaks,
            _ => {
                let agg = self.agg();
                match agg.type_breaks.get(&room_type) {
                    Some(pool) if !pool.is_empty() => pool,
                    _ => &agg.all_breaks,
                }
            }
        };
        if pool.is_empty() {
            None
        } else {
            Some(pool[rng.random_range(0..pool.len())])
        }
    }

    /// Walk duration draw; zero when no walks were observed anywhere.
    pub fn sample_walk_duration(&self, room_type: u8, hour: u8, rng: &mut ChaCha8Rng) -> u32 {
        let pool: &[u32] = match self.cell(room_type, hour) {
            Some(cell) if !cell.walks.is_empty() => &cell.walks,
            _ => {
                let agg = self.agg();
                match agg.type_walks.get(&room_type) {
                    Some(pool) if !pool.is_empty() => pool,
                    _ => &agg.all_walks,
                }
            }
        };
        if pool.is_empty() {
            0
        } else {
            pool[rng.random_range(0..pool.len())]
        }
    }

    /// Pooled break probability over all cells.
    pub fn overall_break_probability(&self) -> Option<f64> {
        let (handoffs, breaks) = self.agg().all_handoffs;
        (handoffs > 0).then(|| breaks as f64 / handoffs as f64)
    }

    /// Pooled mean break duration.
    pub fn overall_break_mean(&self) -> Option<f64> {
        let pool = &self.agg().all_breaks;
        (!pool.is_empty()).then(|| pool.iter().map(|&v| v as f64).sum::<f64>() / pool.len() as f64)
    }

    /// Pooled mean walk duration.
    pub fn overall_walk_mean(&self) -> Option<f64> {
        let pool = &self.agg().all_walks;
        (!pool.is_empty()).then(|| pool.iter().map(|&v| v as f64).sum::<f64>() / pool.len() as f64)
    }

    /// Total busy-period handoffs (break-or-not decisions) observed.
    pub fn total_handoffs(&self) -> u32 {
        self.agg().all_handoffs.0
    }
}

/// Detects breaks and walks from consecutive services within each room-day.
///
/// For consecutive served patients (n, n+1) in one room on one day:
/// a busy handoff (`arrival(n+1) <= end(n)`) with `start(n+1) - end(n)` above
/// the threshold is a break at the hour service n ended; an idle-period
/// start (`arrival(n+1) > end(n)`) with `start(n+1) - arrival(n+1)` above the
/// threshold is a walk at the hour patient n+1 arrived.
pub fn estimate_gaps(
    log: &[PatientRecord],
    room_types: &RoomTypeModel,
    threshold_s: u32,
) -> GapModel {
    let mut by_room_day: BTreeMap<(RoomId, u32), Vec<&PatientRecord>> = BTreeMap::new();
    for r in log {
        by_room_day.entry((r.room_id, r.day_id)).or_default().push(r);
    }

    let mut cells: BTreeMap<(u8, u8), GapCell> = BTreeMap::new();
    for ((room, _), mut recs) in by_room_day {
        let Some(t) = room_types.room_type(room) else {
            continue;
        };
        recs.sort_by(|a, b| {
            (a.service_start_ts, a.service_end_ts, &a.patient_id).cmp(&(
                b.service_start_ts,
                b.service_end_ts,
                &b.patient_id,
            ))
        });
        for pair in recs.windows(2) {
            let (prev, next) = (pair[0], pair[1]);
            if next.arrival_ts <= prev.service_end_ts {
                let hour = (prev.service_end_ts / 3600).min(255) as u8;
                let entry = cells.entry((t, hour)).or_insert_with(|| GapCell {
                    room_type: t,
                    hour,
                    breaks: Vec::new(),
                    walks: Vec::new(),
                    busy_handoffs: 0,
                    break_count: 0,
                });
                entry.busy_handoffs += 1;
                let gap = next.service_start_ts.saturating_sub(prev.service_end_ts);
                if gap > threshold_s {
                    entry.break_count += 1;
                    entry.breaks.push(gap);
                }
            } else {
                let walk = next.service_start_ts - next.arrival_ts;
                if walk > threshold_s {
                    let hour = (next.arrival_ts / 3600).min(255) as u8;
                    let entry = cells.entry((t, hour)).or_insert_with(|| GapCell {
                        room_type: t,
                        hour,
                        breaks: Vec::new(),
                        walks: Vec::new(),
                        busy_handoffs: 0,
                        break_count: 0,
                    });
                    entry.walks.push(walk);
                }
            }
        }
    }

    let cells = cells
        .into_values()
        .map(|mut c| {
            c.breaks.sort_unstable();
            c.walks.sort_unstable();
            c
        })
        .collect();
    GapModel::new(threshold_s, cells)
}
