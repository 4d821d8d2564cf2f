//! Validation metrics: hourly queue-length curves, two-sample KS distance on
//! waiting times, routed-count comparisons, and the rendered report tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::HourHorizon;
use crate::classify::RoomTypeModel;
use crate::eventlog::{PatientRecord, RoomId};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty sample")]
    EmptySample,
    #[error("empty log")]
    EmptyLog,
}

/// Time-averaged number of waiting patients per horizon hour, averaged over
/// the days present in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueLengthCurve {
    pub start_hour: u8,
    pub values: Vec<f64>,
}

impl QueueLengthCurve {
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// Queue length as a step function of time (arrival increments, service
/// start decrements), integrated per hour and divided by 3600, then averaged
/// over days. With `include_in_service`, patients stay counted until service
/// end.
pub fn queue_length_curve(
    log: &[PatientRecord],
    horizon: HourHorizon,
    include_in_service: bool,
) -> QueueLengthCurve {
    let mut day_ids: Vec<u32> = log.iter().map(|r| r.day_id).collect();
    day_ids.sort_unstable();
    day_ids.dedup();
    let n_hours = horizon.n_hours() as usize;
    let mut totals = vec![0.0f64; n_hours];
    if day_ids.is_empty() {
        return QueueLengthCurve {
            start_hour: horizon.start_hour,
            values: totals,
        };
    }

    for &day in &day_ids {
        let mut events: Vec<(u32, i32)> = Vec::new();
        for r in log.iter().filter(|r| r.day_id == day) {
            events.push((r.arrival_ts, 1));
            let leave = if include_in_service {
                r.service_end_ts
            } else {
                r.service_start_ts
            };
            events.push((leave, -1));
        }
        events.sort_unstable();
        let mut count: i64 = 0;
        let mut prev: u32 = 0;
        let window_lo = horizon.start_s() as u32;
        let window_hi = horizon.end_s() as u32;
        for (t, delta) in events {
            if count > 0 && t > prev {
                let lo = prev.max(window_lo);
                let hi = t.min(window_hi);
                if lo < hi {
                    let mut h = lo / 3600;
                    while h * 3600 < hi {
                        let seg_lo = lo.max(h * 3600);
                        let seg_hi = hi.min((h + 1) * 3600);
                        let idx = (h - horizon.start_hour as u32) as usize;
                        totals[idx] += count as f64 * (seg_hi - seg_lo) as f64;
                        h += 1;
                    }
                }
            }
            count += delta as i64;
            prev = t;
        }
        debug_assert!(count == 0, "unbalanced queue events on day {day}");
    }

    let n_days = day_ids.len() as f64;
    QueueLengthCurve {
        start_hour: horizon.start_hour,
        values: totals
            .into_iter()
            .map(|v| v / 3600.0 / n_days)
            .collect(),
    }
}

/// Exact two-sample Kolmogorov-Smirnov statistic: the supremum of
/// |ECDF_x - ECDF_y| over the merged support.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    ys.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));

    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        let d = (i as f64 / n - j as f64 / m).abs();
        if d > sup {
            sup = d;
        }
    }
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedCell {
    pub room_type: u8,
    pub hour: u8,
    pub sim_per_day: f64,
    pub ref_per_day: f64,
    pub abs_diff: f64,
    /// |sim - ref| / ref; undefined when the reference cell is zero.
    pub rel_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomRoutedCell {
    pub room: RoomId,
    pub hour: u8,
    pub sim_per_day: f64,
    pub ref_per_day: f64,
    pub abs_diff: f64,
    pub rel_diff: Option<f64>,
}

/// Simulation-versus-reference comparison over the key performance metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub horizon: HourHorizon,
    pub n_sim_days: usize,
    pub n_ref_days: usize,
    pub sim_mean_queue: f64,
    pub ref_mean_queue: f64,
    pub diff_mean_queue_abs: f64,
    pub diff_mean_queue_rel: Option<f64>,
    pub sim_mean_wait_min: f64,
    pub ref_mean_wait_min: f64,
    pub diff_mean_wait_abs_min: f64,
    pub diff_mean_wait_rel: Option<f64>,
    /// KS distance between pooled waiting-time distributions.
    pub ks_wait: f64,
    pub sim_queue_curve: Vec<f64>,
    pub ref_queue_curve: Vec<f64>,
    pub routed_by_type: Vec<RoutedCell>,
    pub routed_by_room: Vec<RoomRoutedCell>,
    /// Pooled waiting times in minutes, sorted (kept for re-rendering).
    pub sim_waits_min: Vec<f64>,
    pub ref_waits_min: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CompareOptions {
    pub include_in_service: bool,
}

fn rel_diff(abs: f64, reference: f64) -> Option<f64> {
    (reference > 0.0).then_some(abs / reference)
}

fn n_days_of(log: &[PatientRecord]) -> usize {
    let mut ids: Vec<u32> = log.iter().map(|r| r.day_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

fn waits_min(log: &[PatientRecord]) -> Vec<f64> {
    let mut w: Vec<f64> = log.iter().map(|r| r.waiting_secs() as f64 / 60.0).collect();
    w.sort_by(|a, b| a.partial_cmp(b).unwrap());
    w
}

/// Builds the validation report from flattened simulated and reference logs.
pub fn compare(
    sim: &[PatientRecord],
    reference: &[PatientRecord],
    room_types: &RoomTypeModel,
    horizon: HourHorizon,
    opts: CompareOptions,
) -> Result<ValidationReport, MetricsError> {
    if sim.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let n_sim_days = n_days_of(sim);
    let n_ref_days = n_days_of(reference);

    let sim_curve = queue_length_curve(sim, horizon, opts.include_in_service);
    let ref_curve = queue_length_curve(reference, horizon, opts.include_in_service);
    let sim_mean_queue = sim_curve.mean();
    let ref_mean_queue = ref_curve.mean();
    let dq = (sim_mean_queue - ref_mean_queue).abs();

    let sim_waits = waits_min(sim);
    let ref_waits = waits_min(reference);
    let sim_mean_wait = sim_waits.iter().sum::<f64>() / sim_waits.len() as f64;
    let ref_mean_wait = ref_waits.iter().sum::<f64>() / ref_waits.len() as f64;
    let dw = (sim_mean_wait - ref_mean_wait).abs();

    let ks_wait = ks_two_sample(&sim_waits, &ref_waits)?;

    // Routed counts per (type, hour) and (room, hour), normalized per day.
    let n_hours = horizon.n_hours() as usize;
    let n_types = room_types.n_types;
    let mut sim_type = vec![0u32; n_types * n_hours];
    let mut ref_type = vec![0u32; n_types * n_hours];
    let n_rooms = room_types.rooms.len();
    let mut sim_room = vec![0u32; n_rooms * n_hours];
    let mut ref_room = vec![0u32; n_rooms * n_hours];
    let tally = |log: &[PatientRecord], per_type: &mut Vec<u32>, per_room: &mut Vec<u32>| {
        for r in log {
            let hour = r.arrival_ts / 3600;
            if hour < horizon.start_hour as u32 || hour >= horizon.end_hour as u32 {
                continue;
            }
            let h = (hour - horizon.start_hour as u32) as usize;
            if let Ok(room_idx) = room_types.rooms.binary_search(&r.room_id) {
                let t = room_types.type_of[room_idx] as usize;
                per_type[t * n_hours + h] += 1;
                per_room[room_idx * n_hours + h] += 1;
            }
        }
    };
    tally(sim, &mut sim_type, &mut sim_room);
    tally(reference, &mut ref_type, &mut ref_room);

    let mut routed_by_type = Vec::with_capacity(n_types * n_hours);
    for t in 0..n_types {
        for h in 0..n_hours {
            let s = sim_type[t * n_hours + h] as f64 / n_sim_days as f64;
            let r = ref_type[t * n_hours + h] as f64 / n_ref_days as f64;
            let abs = (s - r).abs();
            routed_by_type.push(RoutedCell {
                room_type: t as u8,
                hour: horizon.start_hour + h as u8,
                sim_per_day: s,
                ref_per_day: r,
                abs_diff: abs,
                rel_diff: rel_diff(abs, r),
            });
        }
    }
    let mut routed_by_room = Vec::with_capacity(n_rooms * n_hours);
    for (room_idx, &room) in room_types.rooms.iter().enumerate() {
        for h in 0..n_hours {
            let s = sim_room[room_idx * n_hours + h] as f64 / n_sim_days as f64;
            let r = ref_room[room_idx * n_hours + h] as f64 / n_ref_days as f64;
            let abs = (s - r).abs();
            routed_by_room.push(RoomRoutedCell {
                room,
                hour: horizon.start_hour + h as u8,
                sim_per_day: s,
                ref_per_day: r,
                abs_diff: abs,
                rel_diff: rel_diff(abs, r),
            });
        }
    }

    Ok(ValidationReport {
        horizon,
        n_sim_days,
        n_ref_days,
        sim_mean_queue,
        ref_mean_queue,
        diff_mean_queue_abs: dq,
        diff_mean_queue_rel: rel_diff(dq, ref_mean_queue),
        sim_mean_wait_min: sim_mean_wait,
        ref_mean_wait_min: ref_mean_wait,
        diff_mean_wait_abs_min: dw,
        diff_mean_wait_rel: rel_diff(dw, ref_mean_wait),
        ks_wait,
        sim_queue_curve: sim_curve.values,
        ref_queue_curve: ref_curve.values,
        routed_by_type,
        routed_by_room,
        sim_waits_min: sim_waits,
        ref_waits_min: ref_waits,
    })
}

fn fmt_rel(rel: Option<f64>) -> String {
    rel.map(|r| format!("{:.6}", r * 100.0)).unwrap_or_default()
}

/// Renders the report as CSV tables plus plot-ready data files. Re-rendering
/// the same report yields byte-identical output.
pub fn render_report(report: &ValidationReport, bin_minutes: f64) -> Vec<(String, String)> {
    assert!(bin_minutes > 0.0);
    let mut files = Vec::new();

    let mut summary = String::from("key,value\n");
    let mut kv = |k: &str, v: String| summary.push_str(&format!("{k},{v}\n"));
    kv("n_sim_days", report.n_sim_days.to_string());
    kv("n_ref_days", report.n_ref_days.to_string());
    kv("sim_mean_queue_length", format!("{:.6}", report.sim_mean_queue));
    kv("ref_mean_queue_length", format!("{:.6}", report.ref_mean_queue));
    kv(
        "diff_mean_queue_length_abs",
        format!("{:.6}", report.diff_mean_queue_abs),
    );
    kv(
        "diff_mean_queue_length_rel_pct",
        fmt_rel(report.diff_mean_queue_rel),
    );
    kv("sim_mean_wait_min", format!("{:.6}", report.sim_mean_wait_min));
    kv("ref_mean_wait_min", format!("{:.6}", report.ref_mean_wait_min));
    kv(
        "diff_mean_wait_abs_min",
        format!("{:.6}", report.diff_mean_wait_abs_min),
    );
    kv("diff_mean_wait_rel_pct", fmt_rel(report.diff_mean_wait_rel));
    kv("ks_wait", format!("{:.6}", report.ks_wait));
    files.push(("summary.csv".to_string(), summary));

    let mut by_type = String::from("room_type,hour,sim_per_day,ref_per_day,abs_diff,rel_diff_pct\n");
    for c in &report.routed_by_type {
        by_type.push_str(&format!(
            "R{},{},{:.6},{:.6},{:.6},{}\n",
            c.room_type + 1,
            c.hour,
            c.sim_per_day,
            c.ref_per_day,
            c.abs_diff,
            fmt_rel(c.rel_diff),
        ));
    }
    files.push(("routed_by_type.csv".to_string(), by_type));

    let mut by_room = String::from("room,hour,sim_per_day,ref_per_day,abs_diff,rel_diff_pct\n");
    for c in &report.routed_by_room {
        by_room.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            c.room,
            c.hour,
            c.sim_per_day,
            c.ref_per_day,
            c.abs_diff,
            fmt_rel(c.rel_diff),
        ));
    }
    files.push(("routed_by_room.csv".to_string(), by_room));

    let mut curve = String::from("hour,sim_mean_queue,ref_mean_queue\n");
    for (i, (s, r)) in report
        .sim_queue_curve
        .iter()
        .zip(&report.ref_queue_curve)
        .enumerate()
    {
        curve.push_str(&format!(
            "{},{:.6},{:.6}\n",
            report.horizon.start_hour as usize + i,
            s,
            r
        ));
    }
    files.push(("queue_curve.csv".to_string(), curve));

    let max_wait = report
        .sim_waits_min
        .iter()
        .chain(&report.ref_waits_min)
        .copied()
        .fold(0.0f64, f64::max);
    let n_bins = ((max_wait / bin_minutes).floor() as usize + 1).max(1);
    let mut sim_bins = vec![0usize; n_bins];
    let mut ref_bins = vec![0usize; n_bins];
    for &w in &report.sim_waits_min {
        sim_bins[((w / bin_minutes) as usize).min(n_bins - 1)] += 1;
    }
    for &w in &report.ref_waits_min {
        ref_bins[((w / bin_minutes) as usize).min(n_bins - 1)] += 1;
    }
    let mut hist = String::from("bin_lo_min,bin_hi_min,sim_count,ref_count\n");
    for b in 0..n_bins {
        hist.push_str(&format!(
            "{:.2},{:.2},{},{}\n",
            b as f64 * bin_minutes,
            (b + 1) as f64 * bin_minutes,
            sim_bins[b],
            ref_bins[b],
        ));
    }
    files.push(("wait_histogram.csv".to_string(), hist));

    files
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::Gender;

    fn rec(day: u32, arrival: u32, start: u32, end: u32, room: RoomId) -> PatientRecord {
        PatientRecord {
            patient_id: format!("p{arrival}"),
            gender: Gender::Female,
            age: 30.0,
            department: "D".into(),
            exam_items: vec!["A".into()],
            arrival_ts: arrival,
            service_start_ts: start,
            service_end_ts: end,
            room_id: room,
            technician_id: None,
            day_id: day,
        }
    }

    fn horizon() -> HourHorizon {
        HourHorizon::DEFAULT
    }

    #[test]
    fn one_patient_half_hour_rectangle() {
        let log = vec![rec(0, 9 * 3600, 9 * 3600 + 1800, 9 * 3600 + 2400, 1)];
        let curve = queue_length_curve(&log, horizon(), false);
        assert!((curve.values[2] - 0.5).abs() < 1e-12); // hour 9
        for (i, v) in curve.values.iter().enumerate() {
            if i != 2 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn no_waiting_all_zeros() {
        let log = vec![
            rec(0, 8 * 3600, 8 * 3600, 8 * 3600 + 100, 1),
            rec(0, 9 * 3600, 9 * 3600, 9 * 3600 + 100, 1),
        ];
        let curve = queue_length_curve(&log, horizon(), false);
        assert!(curve.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn integral_matches_per_patient_overlap() {
        // Independent oracle: sum over patients of their wait-interval
        // overlap with each hour window.
        let log = vec![
            rec(0, 8 * 3600 + 100, 9 * 3600 + 50, 9 * 3600 + 600, 1),
            rec(0, 8 * 3600 + 500, 10 * 3600, 10 * 3600 + 60, 2),
            rec(0, 9 * 3600 + 10, 9 * 3600 + 3599, 9 * 3600 + 3600, 1),
            rec(1, 12 * 3600, 12 * 3600 + 1800, 12 * 3600 + 1900, 3),
        ];
        let curve = queue_length_curve(&log, horizon(), false);
        let h = horizon();
        let mut oracle = vec![0.0f64; h.n_hours() as usize];
        let mut days: Vec<u32> = log.iter().map(|r| r.day_id).collect();
        days.sort_unstable();
        days.dedup();
        for r in &log {
            for (i, slot) in oracle.iter_mut().enumerate() {
                let lo = (h.start_hour as u32 + i as u32) * 3600;
                let hi = lo + 3600;
                let a = r.arrival_ts.max(lo);
                let b = r.service_start_ts.min(hi);
                if a < b {
                    *slot += (b - a) as f64;
                }
            }
        }
        for (c, o) in curve.values.iter().zip(&oracle) {
            assert!(
                (c - o / 3600.0 / days.len() as f64).abs() < 1e-12,
                "curve {c} vs oracle {o}"
            );
        }
    }

    #[test]
    fn ks_identical_zero() {
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn ks_disjoint_one() {
        assert_eq!(
            ks_two_sample(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(),
            1.0
        );
    }

    #[test]
    fn ks_hand_case_half() {
        // ECDFs over merged support {1,2,3}: x: 0.5,1,1 ; y: 0.5,0.5,1.
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn ks_symmetry_and_range() {
        let x = vec![0.3, 1.4, 1.4, 2.0, 5.5];
        let y = vec![0.1, 1.4, 3.2];
        let a = ks_two_sample(&x, &y).unwrap();
        let b = ks_two_sample(&y, &x).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn ks_empty_errors() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    fn toy_room_types() -> RoomTypeModel {
        RoomTypeModel {
            rooms: vec![1, 2, 3],
            type_of: vec![0, 0, 1],
            n_types: 2,
            type_members: vec![vec![1, 2], vec![3]],
            merges: Vec::new(),
            feature_names: Vec::new(),
            features: Vec::new(),
        }
    }

    #[test]
    fn self_comparison_all_zero() {
        let log = vec![
            rec(0, 8 * 3600, 8 * 3600 + 60, 8 * 3600 + 400, 1),
            rec(0, 9 * 3600, 9 * 3600 + 120, 9 * 3600 + 500, 3),
            rec(1, 10 * 3600, 10 * 3600 + 30, 10 * 3600 + 200, 2),
        ];
        let report = compare(&log, &log, &toy_room_types(), horizon(), CompareOptions::default())
            .unwrap();
        assert_eq!(report.diff_mean_queue_abs, 0.0);
        assert_eq!(report.diff_mean_wait_abs_min, 0.0);
        assert_eq!(report.ks_wait, 0.0);
        for c in &report.routed_by_type {
            assert_eq!(c.abs_diff, 0.0);
        }
    }

    #[test]
    fn abs_equals_rel_times_reference() {
        let sim = vec![
            rec(0, 8 * 3600, 8 * 3600 + 300, 8 * 3600 + 400, 1),
            rec(0, 9 * 3600, 9 * 3600 + 60, 9 * 3600 + 100, 3),
        ];
        let reference = vec![
            rec(0, 8 * 3600, 8 * 3600 + 120, 8 * 3600 + 400, 1),
            rec(0, 9 * 3600 + 10, 9 * 3600 + 300, 9 * 3600 + 600, 3),
        ];
        let report = compare(
            &sim,
            &reference,
            &toy_room_types(),
            horizon(),
            CompareOptions::default(),
        )
        .unwrap();
        if let Some(rel) = report.diff_mean_wait_rel {
            assert!(
                (report.diff_mean_wait_abs_min - rel * report.ref_mean_wait_min).abs() < 1e-9
            );
        }
        if let Some(rel) = report.diff_mean_queue_rel {
            assert!((report.diff_mean_queue_abs - rel * report.ref_mean_queue).abs() < 1e-9);
        }
        for c in &report.routed_by_type {
            if let Some(rel) = c.rel_diff {
                assert!((c.abs_diff - rel * c.ref_per_day).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn render_shapes_and_determinism() {
        let log = vec![
            rec(0, 8 * 3600, 8 * 3600 + 300, 8 * 3600 + 400, 1),
            rec(0, 9 * 3600, 9 * 3600 + 600, 9 * 3600 + 700, 3),
        ];
        let report =
            compare(&log, &log, &toy_room_types(), horizon(), CompareOptions::default()).unwrap();
        let files = render_report(&report, 5.0);
        let by_type = &files.iter().find(|(n, _)| n == "routed_by_type.csv").unwrap().1;
        // 2 types x 10 hours data rows plus the header.
        assert_eq!(by_type.lines().count(), 2 * 10 + 1);

        let hist = &files.iter().find(|(n, _)| n == "wait_histogram.csv").unwrap().1;
        let mut sim_total = 0usize;
        for line in hist.lines().skip(1) {
            sim_total += line.split(',').nth(2).unwrap().parse::<usize>().unwrap();
        }
        assert_eq!(sim_total, report.sim_waits_min.len());

        let again = render_report(&report, 5.0);
        assert_eq!(files, again);
    }
}
