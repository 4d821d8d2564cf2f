//! Discrete-event simulation core: arrivals, availability, routing,
//! queueing, walk/service/break, departure.
//!
//! The event loop is generic over three component traits — [`Router`],
//! [`ServiceSampler`], and [`GapSampler`] — so the same engine drives the
//! calibrated replay, the synthetic ground-truth generator, and analytic
//! test rigs. One simulated day is strictly single-threaded; replications
//! run in parallel with no shared mutable state.

mod arrivals;

pub use arrivals::generate_arrivals;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibratedModel, DayPattern};
use crate::eventlog::{day_kind_of, Gender, PatientRecord, RoomId};
use crate::rng::{self, stream};
use crate::routing::{JsqRouter, RouterChoice, TwoLevelRouter};

/// Simulation clock in seconds from day start.
pub type SimTime = u64;

/// Second-resolution horizon `[start_s, end_s)` for arrival intake.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HorizonSec {
    pub start_s: u64,
    pub end_s: u64,
}

/// A patient while in the system.
#[derive(Debug, Clone)]
pub struct SimPatient {
    pub patient_id: String,
    /// Arrival sequence number within the day.
    pub seq: usize,
    pub gender: Gender,
    pub age: f64,
    pub department: String,
    pub exam_items: Vec<String>,
    pub item_group: usize,
    /// Index into the generator's class list.
    pub class_idx: usize,
    pub arrival: SimTime,
}

/// Read-only view of the live state handed to routing decisions.
#[derive(Debug)]
pub struct RoutingContext<'a> {
    pub clock: SimTime,
    pub hour: u32,
    pub weekday: u8,
    /// Sorted room ids; the remaining slices align with this.
    pub rooms: &'a [RoomId],
    pub open: &'a [bool],
    /// Waiting patients per room (in-service excluded).
    pub waiting: &'a [u32],
    pub room_type: &'a [u8],
    pub n_types: usize,
}

impl RoutingContext<'_> {
    pub fn queue_by_type(&self) -> Vec<u32> {
        let mut sums = vec![0u32; self.n_types];
        for (i, &w) in self.waiting.iter().enumerate() {
            sums[self.room_type[i] as usize] += w;
        }
        sums
    }

    pub fn open_by_type(&self) -> Vec<u32> {
        let mut sums = vec![0u32; self.n_types];
        for (i, &open) in self.open.iter().enumerate() {
            if open {
                sums[self.room_type[i] as usize] += 1;
            }
        }
        sums
    }
}

/// Routing decision: the chosen open room, or `None` when no admissible room
/// is open (the patient enters the holding queue).
pub trait Router: Sync {
    fn route(
        &self,
        ctx: &RoutingContext<'_>,
        patient: &SimPatient,
        rng: &mut ChaCha8Rng,
    ) -> Option<RoomId>;
}

/// Service duration draw for a patient starting service now.
pub trait ServiceSampler: Sync {
    fn sample(
        &self,
        room: RoomId,
        room_type: u8,
        hour: u32,
        patient: &SimPatient,
        rng: &mut ChaCha8Rng,
    ) -> u32;
}

/// Break/walk draws. `sample_break` returns `None` for a no-break handoff.
pub trait GapSampler: Sync {
    fn sample_break(&self, room_type: u8, hour: u32, rng: &mut ChaCha8Rng) -> Option<u32>;
    fn sample_walk(&self, room_type: u8, hour: u32, rng: &mut ChaCha8Rng) -> u32;
}

/// Gap sampler that never produces breaks or walks.
pub struct NoGaps;

impl GapSampler for NoGaps {
    fn sample_break(&self, _: u8, _: u32, _: &mut ChaCha8Rng) -> Option<u32> {
        None
    }
    fn sample_walk(&self, _: u8, _: u32, _: &mut ChaCha8Rng) -> u32 {
        0
    }
}

/// Everything one simulated day needs.
pub struct DayComponents<'a> {
    pub day_id: u32,
    /// Arrival-sorted patients.
    pub arrivals: Vec<SimPatient>,
    /// Sorted room ids.
    pub rooms: Vec<RoomId>,
    /// Type per room, aligned with `rooms`.
    pub room_type: Vec<u8>,
    pub n_types: usize,
    /// Open intervals `[from_s, to_s)` per room, aligned with `rooms`.
    pub open_intervals: Vec<Vec<(u64, u64)>>,
    pub router: &'a dyn Router,
    pub service: &'a dyn ServiceSampler,
    pub gaps: &'a dyn GapSampler,
    pub breaks_enabled: bool,
    pub walks_enabled: bool,
    pub horizon: HorizonSec,
}

/// Per-day RNG streams, one per stochastic component.
pub struct DayRngs {
    pub routing: ChaCha8Rng,
    pub service: ChaCha8Rng,
    pub gaps: ChaCha8Rng,
}

impl DayRngs {
    pub fn from_seed(day_seed: u64) -> DayRngs {
        DayRngs {
            routing: rng::stream_rng(day_seed, stream::ROUTING),
            service: rng::stream_rng(day_seed, stream::SERVICE),
            gaps: rng::stream_rng(day_seed, stream::GAPS),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DayStats {
    pub arrivals: usize,
    pub completed: usize,
    /// Patients left in the holding queue when the day drained.
    pub unserved: usize,
    pub breaks_taken: usize,
    pub walks_applied: usize,
    pub last_event_s: u64,
}

#[derive(Debug, Clone)]
pub struct DayResult {
    pub day_id: u32,
    pub records: Vec<PatientRecord>,
    pub unserved: Vec<SimPatient>,
    pub stats: DayStats,
}

// Simultaneous events process in this order, so a departure frees its room
// before a same-second arrival routes.
const PRIO_END_SERVICE: u8 = 0;
const PRIO_END_BREAK: u8 = 1;
const PRIO_ROOM_OPEN: u8 = 2;
const PRIO_ARRIVAL: u8 = 3;
const PRIO_BEGIN_SERVICE: u8 = 4;
const PRIO_ROOM_CLOSE: u8 = 5;
const PRIO_END_OF_DAY: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival(usize),
    BeginService(usize),
    EndService(usize),
    EndBreak(usize),
    RoomOpen(usize),
    RoomClose(usize),
    EndOfDay,
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::EndService(_) => PRIO_END_SERVICE,
            EventKind::EndBreak(_) => PRIO_END_BREAK,
            EventKind::RoomOpen(_) => PRIO_ROOM_OPEN,
            EventKind::Arrival(_) => PRIO_ARRIVAL,
            EventKind::BeginService(_) => PRIO_BEGIN_SERVICE,
            EventKind::RoomClose(_) => PRIO_ROOM_CLOSE,
            EventKind::EndOfDay => PRIO_END_OF_DAY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct EventKey(u64, u8, u64);

struct Calendar {
    heap: BinaryHeap<Reverse<(EventKey, usize)>>,
    events: Vec<EventKind>,
    seq: u64,
}

impl Calendar {
    fn new() -> Calendar {
        Calendar {
            heap: BinaryHeap::new(),
            events: Vec::new(),
            seq: 0,
        }
    }

    fn schedule(&mut self, time: u64, kind: EventKind) {
        let key = EventKey(time, kind.priority(), self.seq);
        self.seq += 1;
        self.events.push(kind);
        self.heap.push(Reverse((key, self.events.len() - 1)));
    }

    fn pop(&mut self) -> Option<(u64, EventKind)> {
        self.heap
            .pop()
            .map(|Reverse((key, idx))| (key.0, self.events[idx]))
    }
}

struct RoomState {
    open: bool,
    busy: Option<(usize, u64)>,
    pending_begin: bool,
    on_break: bool,
    queue: VecDeque<usize>,
}

impl RoomState {
    fn idle(&self) -> bool {
        self.busy.is_none() && !self.pending_begin && !self.on_break
    }
}

/// Runs one day to full drain and returns the completed records in
/// service-completion order.
pub fn simulate_day(c: &DayComponents<'_>, rngs: &mut DayRngs) -> DayResult {
    let n_rooms = c.rooms.len();
    assert_eq!(c.room_type.len(), n_rooms);
    assert_eq!(c.open_intervals.len(), n_rooms);
    debug_assert!(c.arrivals.windows(2).all(|w| w[0].arrival <= w[1].arrival));

    let mut cal = Calendar::new();
    for (ri, intervals) in c.open_intervals.iter().enumerate() {
        for &(from, to) in intervals {
            debug_assert!(from < to);
            cal.schedule(from, EventKind::RoomOpen(ri));
            cal.schedule(to, EventKind::RoomClose(ri));
        }
    }
    for (pi, p) in c.arrivals.iter().enumerate() {
        cal.schedule(p.arrival, EventKind::Arrival(pi));
    }
    cal.schedule(c.horizon.end_s, EventKind::EndOfDay);

    let mut rooms: Vec<RoomState> = (0..n_rooms)
        .map(|_| RoomState {
            open: false,
            busy: None,
            pending_begin: false,
            on_break: false,
            queue: VecDeque::new(),
        })
        .collect();
    let mut holding: Vec<usize> = Vec::new();
    let mut records: Vec<PatientRecord> = Vec::new();
    let mut stats = DayStats {
        arrivals: c.arrivals.len(),
        ..DayStats::default()
    };
    let weekday = crate::eventlog::weekday_of(c.day_id);

    let mut waiting_counts = vec![0u32; n_rooms];
    let mut last_time = 0u64;
    let mut arrivals_seen = 0usize;

    macro_rules! ctx {
        ($now:expr, $open:expr, $waiting:expr) => {
            RoutingContext {
                clock: $now,
                hour: ($now / 3600) as u32,
                weekday,
                rooms: &c.rooms,
                open: $open,
                waiting: $waiting,
                room_type: &c.room_type,
                n_types: c.n_types,
            }
        };
    }

    // Join a routed patient to a room; an idle room schedules begin_service
    // after the patient's walk time.
    let join = |ri: usize,
                pi: usize,
                now: u64,
                rooms: &mut Vec<RoomState>,
                waiting_counts: &mut Vec<u32>,
                cal: &mut Calendar,
                stats: &mut DayStats,
                gaps_rng: &mut ChaCha8Rng| {
        rooms[ri].queue.push_back(pi);
        waiting_counts[ri] += 1;
        if rooms[ri].idle() {
            let walk = if c.walks_enabled {
                let w = c
                    .gaps
                    .sample_walk(c.room_type[ri], (now / 3600) as u32, gaps_rng);
                if w > 0 {
                    stats.walks_applied += 1;
                }
                w as u64
            } else {
                0
            };
            rooms[ri].pending_begin = true;
            cal.schedule(now + walk, EventKind::BeginService(ri));
        }
    };

    while let Some((now, kind)) = cal.pop() {
        debug_assert!(now >= last_time, "event time went backwards");
        last_time = now;
        match kind {
            EventKind::RoomOpen(ri) => {
                rooms[ri].open = true;
                // Re-route the holding queue in arrival order.
                let pending: Vec<usize> = std::mem::take(&mut holding);
                for pi in pending {
                    let open_flags: Vec<bool> = rooms.iter().map(|r| r.open).collect();
                    let decision = {
                        let ctx = ctx!(now, &open_flags, &waiting_counts);
                        c.router.route(&ctx, &c.arrivals[pi], &mut rngs.routing)
                    };
                    match decision {
                        Some(room) => {
                            let idx = c.rooms.binary_search(&room).expect("router returned unknown room");
                            assert!(rooms[idx].open, "router chose a closed room");
                            join(
                                idx,
                                pi,
                                now,
                                &mut rooms,
                                &mut waiting_counts,
                                &mut cal,
                                &mut stats,
                                &mut rngs.gaps,
                            );
                        }
                        None => holding.push(pi),
                    }
                }
            }
            EventKind::RoomClose(ri) => {
                rooms[ri].open = false;
            }
            EventKind::Arrival(pi) => {
                arrivals_seen += 1;
                let open_flags: Vec<bool> = rooms.iter().map(|r| r.open).collect();
                let decision = {
                    let ctx = ctx!(now, &open_flags, &waiting_counts);
                    c.router.route(&ctx, &c.arrivals[pi], &mut rngs.routing)
                };
                match decision {
                    Some(room) => {
                        let idx = c.rooms.binary_search(&room).expect("router returned unknown room");
                        assert!(rooms[idx].open, "router chose a closed room");
                        join(
                            idx,
                            pi,
                            now,
                            &mut rooms,
                            &mut waiting_counts,
                            &mut cal,
                            &mut stats,
                            &mut rngs.gaps,
                        );
                    }
                    None => holding.push(pi),
                }
            }
            EventKind::BeginService(ri) => {
                let room = &mut rooms[ri];
                room.pending_begin = false;
                let pi = room
                    .queue
                    .pop_front()
                    .expect("begin_service on an empty queue");
                waiting_counts[ri] -= 1;
                room.busy = Some((pi, now));
                let dur = c
                    .service
                    .sample(
                        c.rooms[ri],
                        c.room_type[ri],
                        (now / 3600) as u32,
                        &c.arrivals[pi],
                        &mut rngs.service,
                    )
                    .max(1);
                cal.schedule(now + dur as u64, EventKind::EndService(ri));
            }
            EventKind::EndService(ri) => {
                let (pi, started) = rooms[ri].busy.take().expect("end_service on an idle room");
                let p = &c.arrivals[pi];
                records.push(PatientRecord {
                    patient_id: p.patient_id.clone(),
                    gender: p.gender,
                    age: p.age,
                    department: p.department.clone(),
                    exam_items: p.exam_items.clone(),
                    arrival_ts: p.arrival as u32,
                    service_start_ts: started as u32,
                    service_end_ts: now as u32,
                    room_id: c.rooms[ri],
                    technician_id: None,
                    day_id: c.day_id,
                });
                stats.completed += 1;
                if !rooms[ri].queue.is_empty() {
                    let take_break = if c.breaks_enabled {
                        c.gaps
                            .sample_break(c.room_type[ri], (now / 3600) as u32, &mut rngs.gaps)
                    } else {
                        None
                    };
                    match take_break {
                        Some(dur) => {
                            debug_assert!(dur > 0);
                            rooms[ri].on_break = true;
                            stats.breaks_taken += 1;
                            cal.schedule(now + dur as u64, EventKind::EndBreak(ri));
                        }
                        None => {
                            rooms[ri].pending_begin = true;
                            cal.schedule(now, EventKind::BeginService(ri));
                        }
                    }
                }
            }
            EventKind::EndBreak(ri) => {
                rooms[ri].on_break = false;
                debug_assert!(
                    !rooms[ri].queue.is_empty(),
                    "break taken without a waiting patient"
                );
                rooms[ri].pending_begin = true;
                cal.schedule(now, EventKind::BeginService(ri));
            }
            EventKind::EndOfDay => {}
        }

        // Conservation: every arrival seen so far is completed, waiting,
        // in service, or holding.
        #[cfg(debug_assertions)]
        {
            let waiting: usize = rooms.iter().map(|r| r.queue.len()).sum();
            let busy: usize = rooms.iter().filter(|r| r.busy.is_some()).count();
            debug_assert_eq!(
                arrivals_seen,
                stats.completed + waiting + busy + holding.len(),
                "conservation violated at t={now}"
            );
        }
    }

    assert_eq!(arrivals_seen, c.arrivals.len());
    for room in &rooms {
        assert!(room.queue.is_empty() && room.busy.is_none(), "day did not drain");
    }
    stats.unserved = holding.len();
    stats.last_event_s = last_time;
    let unserved = holding.into_iter().map(|pi| c.arrivals[pi].clone()).collect();

    DayResult {
        day_id: c.day_id,
        records,
        unserved,
        stats,
    }
}

/// How replication indices map to simulated day ids (and day kinds).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayKindMix {
    /// Replication i is day id i: five weekdays then two weekend days per week.
    Calendar,
    WeekdayOnly,
    WeekendOnly,
}

impl DayKindMix {
    pub fn day_id(&self, rep: usize) -> u32 {
        let rep = rep as u32;
        match self {
            DayKindMix::Calendar => rep,
            DayKindMix::WeekdayOnly => (rep / 5) * 7 + rep % 5,
            DayKindMix::WeekendOnly => (rep / 2) * 7 + 5 + rep % 2,
        }
    }
}

/// Simulation run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_replications: usize,
    pub master_seed: u64,
    pub router: RouterChoice,
    pub day_kind_mix: DayKindMix,
    pub breaks_enabled: bool,
    pub walks_enabled: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_replications: 1,
            master_seed: 0,
            router: RouterChoice::TwoLevelSample,
            day_kind_mix: DayKindMix::Calendar,
            breaks_enabled: true,
            walks_enabled: true,
        }
    }
}

/// Service sampler backed by a calibrated model's empirical table.
pub struct CalibratedService<'a> {
    pub model: &'a CalibratedModel,
}

impl ServiceSampler for CalibratedService<'_> {
    fn sample(
        &self,
        room: RoomId,
        _room_type: u8,
        hour: u32,
        patient: &SimPatient,
        rng: &mut ChaCha8Rng,
    ) -> u32 {
        self.model
            .service
            .sample_duration(
                &self.model.room_types,
                room,
                hour.min(255) as u8,
                patient.class_idx as u16,
                rng,
            )
            .expect("calibration guarantees a non-empty service fallback")
    }
}

/// Gap sampler backed by a calibrated model.
pub struct CalibratedGaps<'a> {
    pub model: &'a CalibratedModel,
}

impl GapSampler for CalibratedGaps<'_> {
    fn sample_break(&self, room_type: u8, hour: u32, rng: &mut ChaCha8Rng) -> Option<u32> {
        let gaps = &self.model.gaps;
        let p = gaps.break_probability(room_type, hour.min(255) as u8);
        if p > 0.0 && rng.random::<f64>() < p {
            gaps.sample_break_duration(room_type, hour.min(255) as u8, rng)
        } else {
            None
        }
    }

    fn sample_walk(&self, room_type: u8, hour: u32, rng: &mut ChaCha8Rng) -> u32 {
        self.model
            .gaps
            .sample_walk_duration(room_type, hour.min(255) as u8, rng)
    }
}

/// Converts a day pattern's open-hour sets into merged second intervals.
pub fn pattern_to_intervals(pattern: &DayPattern, rooms: &[RoomId]) -> Vec<Vec<(u64, u64)>> {
    rooms
        .iter()
        .map(|&room| {
            let hours = pattern.hours_of(room);
            let mut intervals: Vec<(u64, u64)> = Vec::new();
            for &h in hours {
                let from = h as u64 * 3600;
                let to = from + 3600;
                match intervals.last_mut() {
                    Some(last) if last.1 == from => last.1 = to,
                    _ => intervals.push((from, to)),
                }
            }
            intervals
        })
        .collect()
}

/// Weighted draw of one observed item set for a class.
fn sample_demographics(
    info: &crate::calibrate::ClassInfo,
    rng: &mut ChaCha8Rng,
) -> (f64, Vec<String>, String) {
    let age = info.ages[rng.random_range(0..info.ages.len())];
    let total: u32 = info.item_sets.iter().map(|e| e.count).sum();
    let mut pick = rng.random_range(0..total);
    for entry in &info.item_sets {
        if pick < entry.count {
            return (age, entry.items.clone(), entry.department.clone());
        }
        pick -= entry.count;
    }
    unreachable!("weighted pick out of range")
}

/// Simulates one replication day from a calibrated model.
///
/// The day samples a historical open pattern of the matching day kind,
/// generates class arrivals from the rate table, and replays the learned
/// (or baseline) routing policy.
pub fn run_day(model: &CalibratedModel, config: &SimConfig, rep_index: usize) -> DayResult {
    let day_id = config.day_kind_mix.day_id(rep_index);
    let day_kind = day_kind_of(day_id);
    let rep_seed = rng::derive_seed(config.master_seed, rep_index as u64);

    // Room open pattern: one historical day of the same kind, drawn whole.
    let mut pattern_rng = rng::stream_rng(rep_seed, stream::PATTERN);
    let candidates = model.open_patterns.days_of_kind(day_kind);
    assert!(
        !candidates.is_empty(),
        "no calibrated open patterns for {day_kind}"
    );
    let pattern = candidates[pattern_rng.random_range(0..candidates.len())];
    let rooms = model.room_types.rooms.clone();
    let open_intervals = pattern_to_intervals(pattern, &rooms);

    // Arrivals with per-class demographics.
    let arrival_seed = rng::derive_seed(rep_seed, stream::ARRIVALS);
    let raw = generate_arrivals(&model.arrival_rates, day_kind, arrival_seed);
    let mut demo_rng = rng::stream_rng(rep_seed, stream::DEMOGRAPHICS);
    let arrivals: Vec<SimPatient> = raw
        .iter()
        .enumerate()
        .map(|(seq, &(t, class))| {
            let info = &model.classes[class as usize];
            let (age, exam_items, department) = sample_demographics(info, &mut demo_rng);
            SimPatient {
                patient_id: format!("r{rep_index:04}-p{seq:05}"),
                seq,
                gender: info.class.gender,
                age,
                department,
                exam_items,
                item_group: info.class.item_group,
                class_idx: class as usize,
                arrival: t,
            }
        })
        .collect();

    let service = CalibratedService { model };
    let gaps = CalibratedGaps { model };
    let two_level_sample = TwoLevelRouter {
        policy: &model.policy,
        mode: crate::routing::RoutingMode::Sample,
    };
    let two_level_argmax = TwoLevelRouter {
        policy: &model.policy,
        mode: crate::routing::RoutingMode::Argmax,
    };
    let jsq = JsqRouter {
        eligibility: &model.policy.eligibility,
    };
    let router: &dyn Router = match config.router {
        RouterChoice::TwoLevelSample => &two_level_sample,
        RouterChoice::TwoLevelArgmax => &two_level_argmax,
        RouterChoice::Jsq => &jsq,
    };

    let components = DayComponents {
        day_id,
        arrivals,
        room_type: rooms
            .iter()
            .map(|&r| model.room_types.room_type(r).expect("room typed"))
            .collect(),
        n_types: model.room_types.n_types,
        rooms,
        open_intervals,
        router,
        service: &service,
        gaps: &gaps,
        breaks_enabled: config.breaks_enabled,
        walks_enabled: config.walks_enabled,
        horizon: HorizonSec {
            start_s: model.horizon.start_s(),
            end_s: model.horizon.end_s(),
        },
    };
    let mut rngs = DayRngs::from_seed(rep_seed);
    simulate_day(&components, &mut rngs)
}

/// Runs `n_replications` independent days. Replication i derives its RNG
/// streams from `(master_seed, i)`, so results are identical for any thread
/// count or execution order.
pub fn run_replications(model: &CalibratedModel, config: &SimConfig) -> Vec<DayResult> {
    (0..config.n_replications)
        .into_par_iter()
        .map(|rep| run_day(model, config, rep))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::DayKind;

    struct OnlyRoomRouter;
    impl Router for OnlyRoomRouter {
        fn route(
            &self,
            ctx: &RoutingContext<'_>,
            _p: &SimPatient,
            _rng: &mut ChaCha8Rng,
        ) -> Option<RoomId> {
            ctx.rooms
                .iter()
                .zip(ctx.open)
                .find(|(_, &open)| open)
                .map(|(&room, _)| room)
        }
    }

    struct ConstService(u32);
    impl ServiceSampler for ConstService {
        fn sample(&self, _: RoomId, _: u8, _: u32, _: &SimPatient, _: &mut ChaCha8Rng) -> u32 {
            self.0
        }
    }

    fn patient(seq: usize, arrival: u64) -> SimPatient {
        SimPatient {
            patient_id: format!("p{seq}"),
            seq,
            gender: Gender::Female,
            age: 30.0,
            department: "D".into(),
            exam_items: vec!["A".into()],
            item_group: 0,
            class_idx: 0,
            arrival,
        }
    }

    fn one_room_components<'a>(
        arrivals: Vec<SimPatient>,
        router: &'a dyn Router,
        service: &'a dyn ServiceSampler,
        gaps: &'a dyn GapSampler,
    ) -> DayComponents<'a> {
        DayComponents {
            day_id: 0,
            arrivals,
            rooms: vec![1],
            room_type: vec![0],
            n_types: 1,
            open_intervals: vec![vec![(0, 1_000_000)]],
            router,
            service,
            gaps,
            breaks_enabled: false,
            walks_enabled: false,
            horizon: HorizonSec {
                start_s: 0,
                end_s: 36_000,
            },
        }
    }

    #[test]
    fn zero_arrivals_drain_to_empty_output() {
        let router = OnlyRoomRouter;
        let service = ConstService(60);
        let c = one_room_components(Vec::new(), &router, &service, &NoGaps);
        let out = simulate_day(&c, &mut DayRngs::from_seed(1));
        assert!(out.records.is_empty());
        assert_eq!(out.stats.completed, 0);
        assert_eq!(out.stats.unserved, 0);
    }

    #[test]
    fn single_arrival_direct_path() {
        let router = OnlyRoomRouter;
        let service = ConstService(300);
        let c = one_room_components(vec![patient(0, 1000)], &router, &service, &NoGaps);
        let out = simulate_day(&c, &mut DayRngs::from_seed(1));
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.arrival_ts, 1000);
        assert_eq!(r.service_start_ts, 1000);
        assert_eq!(r.service_end_ts, 1300);
    }

    #[test]
    fn fcfs_order_within_room() {
        let router = OnlyRoomRouter;
        let service = ConstService(500);
        let arrivals: Vec<SimPatient> = (0..20).map(|i| patient(i, 100 + 40 * i as u64)).collect();
        let c = one_room_components(arrivals, &router, &service, &NoGaps);
        let out = simulate_day(&c, &mut DayRngs::from_seed(1));
        assert_eq!(out.records.len(), 20);
        for (i, r) in out.records.iter().enumerate() {
            assert_eq!(r.patient_id, format!("p{i}"), "service order broke FCFS");
        }
        for w in out.records.windows(2) {
            assert!(w[0].service_start_ts <= w[1].service_start_ts);
        }
    }

    #[test]
    fn walk_delays_begin_service_for_idle_room() {
        struct FixedWalk;
        impl GapSampler for FixedWalk {
            fn sample_break(&self, _: u8, _: u32, _: &mut ChaCha8Rng) -> Option<u32> {
                None
            }
            fn sample_walk(&self, _: u8, _: u32, _: &mut ChaCha8Rng) -> u32 {
                45
            }
        }
        let router = OnlyRoomRouter;
        let service = ConstService(100);
        let gaps = FixedWalk;
        let mut c = one_room_components(
            vec![patient(0, 1000), patient(1, 1010)],
            &router,
            &service,
            &gaps,
        );
        c.walks_enabled = true;
        let out = simulate_day(&c, &mut DayRngs::from_seed(1));
        // First patient walks 45 s; second arrived to a busy-pending room and
        // is handed off with no gap.
        assert_eq!(out.records[0].service_start_ts, 1045);
        assert_eq!(out.records[1].service_start_ts, 1145);
        assert_eq!(out.stats.walks_applied, 1);
    }

    #[test]
    fn break_applies_between_busy_handoffs() {
        struct AlwaysBreak;
        impl GapSampler for AlwaysBreak {
            fn sample_break(&self, _: u8, _: u32, _: &mut ChaCha8Rng) -> Option<u32> {
                Some(60)
            }
            fn sample_walk(&self, _: u8, _: u32, _: &mut ChaCha8Rng) -> u32 {
                0
            }
        }
        let router = OnlyRoomRouter;
        let service = ConstService(100);
        let gaps = AlwaysBreak;
        let mut c = one_room_components(
            vec![patient(0, 0), patient(1, 10)],
            &router,
            &service,
            &gaps,
        );
        c.breaks_enabled = true;
        let out = simulate_day(&c, &mut DayRngs::from_seed(1));
        assert_eq!(out.records[0].service_end_ts, 100);
        assert_eq!(out.records[1].service_start_ts, 160);
        assert_eq!(out.stats.breaks_taken, 1);
    }

    #[test]
    fn holding_queue_rerouted_at_room_open() {
        let router = OnlyRoomRouter;
        let service = ConstService(100);
        let mut c = one_room_components(vec![patient(0, 500)], &router, &service, &NoGaps);
        c.open_intervals = vec![vec![(2000, 10_000)]];
        let out = simulate_day(&c, &mut DayRngs::from_seed(1));
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].service_start_ts, 2000);
        assert_eq!(out.stats.unserved, 0);
    }

    #[test]
    fn patient_with_no_admissible_room_stays_unserved() {
        struct NeverRouter;
        impl Router for NeverRouter {
            fn route(
                &self,
                _: &RoutingContext<'_>,
                _: &SimPatient,
                _: &mut ChaCha8Rng,
            ) -> Option<RoomId> {
                None
            }
        }
        let router = NeverRouter;
        let service = ConstService(100);
        let c = one_room_components(vec![patient(0, 500)], &router, &service, &NoGaps);
        let out = simulate_day(&c, &mut DayRngs::from_seed(1));
        assert!(out.records.is_empty());
        assert_eq!(out.stats.unserved, 1);
        assert_eq!(out.unserved[0].patient_id, "p0");
    }

    #[test]
    fn room_close_drains_queue() {
        let router = OnlyRoomRouter;
        let service = ConstService(1000);
        let mut c = one_room_components(
            vec![patient(0, 100), patient(1, 200), patient(2, 300)],
            &router,
            &service,
            &NoGaps,
        );
        // Room closes at t=1200 with two patients still queued.
        c.open_intervals = vec![vec![(0, 1200)]];
        let out = simulate_day(&c, &mut DayRngs::from_seed(1));
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.records[2].service_end_ts, 100 + 3000);
    }

    #[test]
    fn day_kind_mix_ids() {
        assert_eq!(DayKindMix::Calendar.day_id(6), 6);
        for rep in 0..20 {
            assert_eq!(day_kind_of(DayKindMix::WeekdayOnly.day_id(rep)), DayKind::Weekday);
            assert_eq!(day_kind_of(DayKindMix::WeekendOnly.day_id(rep)), DayKind::Weekend);
        }
        // Distinct reps map to distinct day ids.
        let ids: Vec<u32> = (0..10).map(|r| DayKindMix::WeekendOnly.day_id(r)).collect();
        let mut dedup = ids.clone();
        dedup.dedup();
        assert_eq!(ids, dedup);
    }
}
