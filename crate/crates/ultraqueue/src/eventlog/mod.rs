//! Canonical patient-record schema, log ingestion, and two-source merging.
//!
//! Timestamps are integer seconds from local-day midnight; each record also
//! carries a `day_id`. Day-of-week is `day_id % 7` with 0 = Monday, so ids
//! 5 and 6 (mod 7) are weekend days.

mod synth;

pub use synth::{synthesize_log, ScenarioError, SynthReport, SynthScenario};
pub use synth::{
    ScenarioClass, ScenarioGaps, ScenarioItem, ScenarioPattern, ScenarioRoom, ScenarioRouting,
};

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Room identifier within the configured room universe.
pub type RoomId = u16;

/// Seconds since local-day midnight. May exceed 86 400 when a day's queue
/// drains past midnight.
pub type Seconds = u32;

pub const DEFAULT_ROOM_UNIVERSE_MAX: RoomId = 32;

/// The default room universe, rooms 1..=32.
pub fn default_room_universe() -> Vec<RoomId> {
    (1..=DEFAULT_ROOM_UNIVERSE_MAX).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gender::Male => write!(f, "male"),
            Gender::Female => write!(f, "female"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayKind {
    Weekday,
    Weekend,
}

impl fmt::Display for DayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DayKind::Weekday => write!(f, "weekday"),
            DayKind::Weekend => write!(f, "weekend"),
        }
    }
}

/// Day-of-week of a day id, 0 = Monday .. 6 = Sunday.
pub fn weekday_of(day_id: u32) -> u8 {
    (day_id % 7) as u8
}

/// Weekday/weekend split of a day id.
pub fn day_kind_of(day_id: u32) -> DayKind {
    if weekday_of(day_id) >= 5 {
        DayKind::Weekend
    } else {
        DayKind::Weekday
    }
}

/// One event-log row: who the patient is, what they came for, the three
/// queueing timestamps, and where they were served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub gender: Gender,
    pub age: f64,
    pub department: String,
    pub exam_items: Vec<String>,
    pub arrival_ts: Seconds,
    pub service_start_ts: Seconds,
    pub service_end_ts: Seconds,
    pub room_id: RoomId,
    pub technician_id: Option<String>,
    pub day_id: u32,
}

impl PatientRecord {
    /// Checks the record invariants against a room universe.
    pub fn validate(&self, universe: &[RoomId]) -> Result<(), String> {
        if self.arrival_ts > self.service_start_ts {
            return Err(format!(
                "arrival_ts {} after service_start_ts {}",
                self.arrival_ts, self.service_start_ts
            ));
        }
        if self.service_start_ts > self.service_end_ts {
            return Err(format!(
                "service_start_ts {} after service_end_ts {}",
                self.service_start_ts, self.service_end_ts
            ));
        }
        if !universe.contains(&self.room_id) {
            return Err(format!("room_id {} outside room universe", self.room_id));
        }
        if self.exam_items.is_empty() {
            return Err("exam_items empty".to_string());
        }
        if self.age < 0.0 || !self.age.is_finite() {
            return Err(format!("age {} invalid", self.age));
        }
        Ok(())
    }

    pub fn waiting_secs(&self) -> u32 {
        self.service_start_ts - self.arrival_ts
    }

    pub fn service_secs(&self) -> u32 {
        self.service_end_ts - self.service_start_ts
    }

    pub fn sojourn_secs(&self) -> u32 {
        self.service_end_ts - self.arrival_ts
    }

    pub fn day_kind(&self) -> DayKind {
        day_kind_of(self.day_id)
    }
}

/// Row from source A (registration system): items, department, and the
/// registration / service-calling / report timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecordA {
    pub patient_id: String,
    pub department: String,
    pub exam_items: Vec<String>,
    pub registration_ts: Seconds,
    pub service_calling_ts: Seconds,
    pub report_generation_ts: Option<Seconds>,
    pub report_verification_ts: Option<Seconds>,
    pub day_id: u32,
}

/// Row from source B (room system): demographics, technician, room, and the
/// queue start/end timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecordB {
    pub patient_id: String,
    pub gender: Gender,
    pub age: f64,
    pub technician_id: Option<String>,
    pub room_id: RoomId,
    pub queue_start_ts: Seconds,
    pub queue_end_ts: Seconds,
    pub day_id: u32,
}

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: field `{field}`: {message}")]
    MalformedRow {
        row: usize,
        field: &'static str,
        message: String,
    },
    #[error("header mismatch: expected `{expected}`, got `{got}`")]
    HeaderMismatch { expected: String, got: String },
}

/// Supported log file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    CanonicalCsv,
}

/// A row excluded during parsing or merging, with the row index (1-based,
/// excluding the header) and the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: String,
}

/// Result of parsing a log: accepted records plus the rejection report.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<PatientRecord>,
    pub rejected: Vec<RejectedRow>,
}

pub const CANONICAL_HEADER: &str = "patient_id,gender,age,department,exam_items,arrival_ts,service_start_ts,service_end_ts,room_id,technician_id,day_id";

fn parse_hms(s: &str) -> Result<Seconds, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("`{s}` is not HH:MM:SS"));
    }
    let h: u32 = parts[0].parse().map_err(|_| format!("bad hours in `{s}`"))?;
    let m: u32 = parts[1]
        .parse()
        .map_err(|_| format!("bad minutes in `{s}`"))?;
    let sec: u32 = parts[2]
        .parse()
        .map_err(|_| format!("bad seconds in `{s}`"))?;
    if m >= 60 || sec >= 60 {
        return Err(format!("`{s}` has minutes/seconds out of range"));
    }
    Ok(h * 3600 + m * 60 + sec)
}

fn format_hms(ts: Seconds) -> String {
    format!("{:02}:{:02}:{:02}", ts / 3600, (ts / 60) % 60, ts % 60)
}

/// Parses a canonical CSV log from a file path with the default room universe.
pub fn parse_log(path: &Path, format: LogFormat) -> Result<ParseOutcome, EventLogError> {
    let universe = default_room_universe();
    parse_log_with(path, format, &universe)
}

/// Parses a canonical CSV log against an explicit room universe.
pub fn parse_log_with(
    path: &Path,
    format: LogFormat,
    universe: &[RoomId],
) -> Result<ParseOutcome, EventLogError> {
    let file = std::fs::File::open(path)?;
    parse_log_reader(file, format, universe)
}

/// Parses a canonical CSV log from any reader.
///
/// Structurally malformed rows (unparseable fields, wrong column count) abort
/// with an error naming the row and field. Rows violating record invariants
/// (timestamp order, unknown room, empty items) are rejected and reported.
pub fn parse_log_reader<R: Read>(
    reader: R,
    format: LogFormat,
    universe: &[RoomId],
) -> Result<ParseOutcome, EventLogError> {
    let LogFormat::CanonicalCsv = format;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    {
        let headers = rdr.headers()?;
        let got = headers.iter().collect::<Vec<_>>().join(",");
        if got != CANONICAL_HEADER {
            return Err(EventLogError::HeaderMismatch {
                expected: CANONICAL_HEADER.to_string(),
                got,
            });
        }
    }

    let mut outcome = ParseOutcome::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |idx: usize, name: &'static str| -> Result<&str, EventLogError> {
            rec.get(idx).ok_or(EventLogError::MalformedRow {
                row,
                field: name,
                message: "missing column".to_string(),
            })
        };

        let patient_id = field(0, "patient_id")?.to_string();
        let gender = match field(1, "gender")? {
            "male" => Gender::Male,
            "female" => Gender::Female,
            other => {
                return Err(EventLogError::MalformedRow {
                    row,
                    field: "gender",
                    message: format!("`{other}` is not male/female"),
                })
            }
        };
        let age: f64 = field(2, "age")?
            .parse()
            .map_err(|_| EventLogError::MalformedRow {
                row,
                field: "age",
                message: format!("`{}` is not a number", rec.get(2).unwrap_or("")),
            })?;
        let department = field(3, "department")?.to_string();
        let items_raw = field(4, "exam_items")?;
        let exam_items: Vec<String> = if items_raw.is_empty() {
            Vec::new()
        } else {
            items_raw.split(';').map(|s| s.to_string()).collect()
        };
        let arrival_ts =
            parse_hms(field(5, "arrival_ts")?).map_err(|message| EventLogError::MalformedRow {
                row,
                field: "arrival_ts",
                message,
            })?;
        let service_start_ts = parse_hms(field(6, "service_start_ts")?).map_err(|message| {
            EventLogError::MalformedRow {
                row,
                field: "service_start_ts",
                message,
            }
        })?;
        let service_end_ts = parse_hms(field(7, "service_end_ts")?).map_err(|message| {
            EventLogError::MalformedRow {
                row,
                field: "service_end_ts",
                message,
            }
        })?;
        let room_id: RoomId = field(8, "room_id")?
            .parse()
            .map_err(|_| EventLogError::MalformedRow {
                row,
                field: "room_id",
                message: format!("`{}` is not an integer", rec.get(8).unwrap_or("")),
            })?;
        let technician_raw = field(9, "technician_id")?;
        let technician_id = if technician_raw.is_empty() {
            None
        } else {
            Some(technician_raw.to_string())
        };
        let day_id: u32 = field(10, "day_id")?
            .parse()
            .map_err(|_| EventLogError::MalformedRow {
                row,
                field: "day_id",
                message: format!("`{}` is not an integer", rec.get(10).unwrap_or("")),
            })?;

        let record = PatientRecord {
            patient_id,
            gender,
            age,
            department,
            exam_items,
            arrival_ts,
            service_start_ts,
            service_end_ts,
            room_id,
            technician_id,
            day_id,
        };
        match record.validate(universe) {
            Ok(()) => outcome.records.push(record),
            Err(reason) => outcome.rejected.push(RejectedRow { row, reason }),
        }
    }
    Ok(outcome)
}

/// Writes records as canonical CSV (UTF-8, LF line endings).
pub fn write_log<W: Write>(writer: W, records: &[PatientRecord]) -> Result<(), EventLogError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(CANONICAL_HEADER.split(','))?;
    for r in records {
        wtr.write_record([
            r.patient_id.as_str(),
            &r.gender.to_string(),
            &r.age.to_string(),
            r.department.as_str(),
            &r.exam_items.join(";"),
            &format_hms(r.arrival_ts),
            &format_hms(r.service_start_ts),
            &format_hms(r.service_end_ts),
            &r.room_id.to_string(),
            r.technician_id.as_deref().unwrap_or(""),
            &r.day_id.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Canonical CSV bytes of a record list.
pub fn log_to_string(records: &[PatientRecord]) -> String {
    let mut buf = Vec::new();
    write_log(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("canonical CSV is UTF-8")
}

/// Result of merging the two raw sources.
#[derive(Debug, Clone, Default)]
pub struct MergeOutcome {
    pub merged: Vec<PatientRecord>,
    /// Indices into `a` that found no join partner.
    pub unmatched_a: Vec<usize>,
    /// Indices into `b` that found no join partner.
    pub unmatched_b: Vec<usize>,
    /// Indices into `a` whose join key is shared by multiple rows on either side.
    pub ambiguous_a: Vec<usize>,
    /// Indices into `b` whose join key is shared by multiple rows on either side.
    pub ambiguous_b: Vec<usize>,
    /// Rows from `a` dropped for missing or inconsistent timestamps.
    pub rejected_a: Vec<RejectedRow>,
}

/// Joins source A and source B rows on the exact key
/// `(patient_id, day_id, registration_ts = queue_start_ts,
/// service_calling_ts = queue_end_ts)`.
///
/// The merged record takes `arrival_ts` from the registration time,
/// `service_start_ts` from the service-calling time, and `service_end_ts`
/// from the report-generation time. Nothing is dropped silently: unmatched
/// and ambiguous rows are reported by index, and A-rows without a report
/// timestamp are rejected.
pub fn merge_sources(a: &[RawRecordA], b: &[RawRecordB]) -> MergeOutcome {
    type Key = (String, u32, Seconds, Seconds);

    let mut outcome = MergeOutcome::default();

    let mut a_by_key: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    for (i, ra) in a.iter().enumerate() {
        let key = (
            ra.patient_id.clone(),
            ra.day_id,
            ra.registration_ts,
            ra.service_calling_ts,
        );
        a_by_key.entry(key).or_default().push(i);
    }
    let mut b_by_key: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    for (j, rb) in b.iter().enumerate() {
        let key = (
            rb.patient_id.clone(),
            rb.day_id,
            rb.queue_start_ts,
            rb.queue_end_ts,
        );
        b_by_key.entry(key).or_default().push(j);
    }

    for (i, ra) in a.iter().enumerate() {
        let key = (
            ra.patient_id.clone(),
            ra.day_id,
            ra.registration_ts,
            ra.service_calling_ts,
        );
        let a_side = &a_by_key[&key];
        match b_by_key.get(&key) {
            None => outcome.unmatched_a.push(i),
            Some(b_side) => {
                if a_side.len() > 1 || b_side.len() > 1 {
                    outcome.ambiguous_a.push(i);
                    continue;
                }
                let rb = &b[b_side[0]];
                let end = match ra.report_generation_ts {
                    Some(end) => end,
                    None => {
                        outcome.rejected_a.push(RejectedRow {
                            row: i,
                            reason: "report_generation_ts missing".to_string(),
                        });
                        continue;
                    }
                };
                let record = PatientRecord {
                    patient_id: ra.patient_id.clone(),
                    gender: rb.gender,
                    age: rb.age,
                    department: ra.department.clone(),
                    exam_items: ra.exam_items.clone(),
                    arrival_ts: ra.registration_ts,
                    service_start_ts: ra.service_calling_ts,
                    service_end_ts: end,
                    room_id: rb.room_id,
                    technician_id: rb.technician_id.clone(),
                    day_id: ra.day_id,
                };
                if record.arrival_ts > record.service_start_ts
                    || record.service_start_ts > record.service_end_ts
                {
                    outcome.rejected_a.push(RejectedRow {
                        row: i,
                        reason: "timestamps out of order after merge".to_string(),
                    });
                    continue;
                }
                outcome.merged.push(record);
            }
        }
    }

    for (j, rb) in b.iter().enumerate() {
        let key = (
            rb.patient_id.clone(),
            rb.day_id,
            rb.queue_start_ts,
            rb.queue_end_ts,
        );
        match a_by_key.get(&key) {
            None => outcome.unmatched_b.push(j),
            Some(a_side) => {
                if a_side.len() > 1 || b_by_key[&key].len() > 1 {
                    outcome.ambiguous_b.push(j);
                }
            }
        }
    }

    outcome
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(arrival: &str, start: &str, end: &str, room: RoomId) -> String {
        format!("p1,female,30,OB/GYN,A,{arrival},{start},{end},{room},,0")
    }

    fn parse_str(s: &str) -> Result<ParseOutcome, EventLogError> {
        parse_log_reader(
            s.as_bytes(),
            LogFormat::CanonicalCsv,
            &default_room_universe(),
        )
    }

    #[test]
    fn accepted_row_field_arithmetic() {
        let csv = format!(
            "{CANONICAL_HEADER}\n{}\n",
            rec("08:00:00", "08:12:30", "08:19:00", 3)
        );
        let out = parse_str(&csv).unwrap();
        assert_eq!(out.records.len(), 1);
        assert!(out.rejected.is_empty());
        let r = &out.records[0];
        assert_eq!(r.waiting_secs(), 750);
        assert_eq!(r.service_secs(), 390);
        assert_eq!(r.room_id, 3);
    }

    #[test]
    fn start_before_arrival_rejected_with_ordering_error() {
        let csv = format!(
            "{CANONICAL_HEADER}\n{}\n",
            rec("08:12:30", "08:00:00", "08:19:00", 3)
        );
        let out = parse_str(&csv).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].row, 1);
        assert!(out.rejected[0].reason.contains("arrival_ts"));
    }

    #[test]
    fn empty_file_is_empty_list_zero_rejections() {
        let csv = format!("{CANONICAL_HEADER}\n");
        let out = parse_str(&csv).unwrap();
        assert!(out.records.is_empty());
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn malformed_row_errors_name_row_and_field() {
        let csv = format!("{CANONICAL_HEADER}\np1,female,notanage,D,A,08:00:00,08:01:00,08:02:00,3,,0\n");
        let err = parse_str(&csv).unwrap_err();
        match err {
            EventLogError::MalformedRow { row, field, .. } => {
                assert_eq!(row, 1);
                assert_eq!(field, "age");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_is_malformed() {
        let csv = format!("{CANONICAL_HEADER}\np1,female,30,D,A,08:61:00,08:01:00,08:02:00,3,,0\n");
        assert!(matches!(
            parse_str(&csv).unwrap_err(),
            EventLogError::MalformedRow {
                field: "arrival_ts",
                ..
            }
        ));
    }

    #[test]
    fn room_outside_universe_rejected() {
        let csv = format!(
            "{CANONICAL_HEADER}\n{}\n",
            rec("08:00:00", "08:01:00", "08:02:00", 77)
        );
        let out = parse_str(&csv).unwrap();
        assert!(out.records.is_empty());
        assert!(out.rejected[0].reason.contains("room"));
    }

    #[test]
    fn empty_items_rejected() {
        let csv =
            format!("{CANONICAL_HEADER}\np1,female,30,D,,08:00:00,08:01:00,08:02:00,3,,0\n");
        let out = parse_str(&csv).unwrap();
        assert!(out.records.is_empty());
        assert!(out.rejected[0].reason.contains("exam_items"));
    }

    #[test]
    fn write_parse_round_trip_exact() {
        let records = vec![
            PatientRecord {
                patient_id: "a1".into(),
                gender: Gender::Female,
                age: 27.5,
                department: "OB/GYN".into(),
                exam_items: vec!["A".into(), "B".into()],
                arrival_ts: 7 * 3600 + 30,
                service_start_ts: 7 * 3600 + 300,
                service_end_ts: 7 * 3600 + 700,
                room_id: 2,
                technician_id: Some("t9".into()),
                day_id: 3,
            },
            PatientRecord {
                patient_id: "a2".into(),
                gender: Gender::Male,
                age: 61.0,
                department: "Surgery".into(),
                exam_items: vec!["C".into()],
                arrival_ts: 9 * 3600,
                service_start_ts: 9 * 3600,
                service_end_ts: 9 * 3600 + 240,
                room_id: 31,
                technician_id: None,
                day_id: 6,
            },
        ];
        let csv = log_to_string(&records);
        let out = parse_str(&csv).unwrap();
        assert_eq!(out.records, records);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn day_kind_mod7() {
        assert_eq!(day_kind_of(0), DayKind::Weekday);
        assert_eq!(day_kind_of(4), DayKind::Weekday);
        assert_eq!(day_kind_of(5), DayKind::Weekend);
        assert_eq!(day_kind_of(6), DayKind::Weekend);
        assert_eq!(day_kind_of(7), DayKind::Weekday);
    }

    fn raw_a(id: &str, reg: Seconds, call: Seconds, report: Option<Seconds>) -> RawRecordA {
        RawRecordA {
            patient_id: id.into(),
            department: "D".into(),
            exam_items: vec!["A".into()],
            registration_ts: reg,
            service_calling_ts: call,
            report_generation_ts: report,
            report_verification_ts: None,
            day_id: 0,
        }
    }

    fn raw_b(id: &str, qs: Seconds, qe: Seconds, room: RoomId) -> RawRecordB {
        RawRecordB {
            patient_id: id.into(),
            gender: Gender::Female,
            age: 30.0,
            technician_id: None,
            room_id: room,
            queue_start_ts: qs,
            queue_end_ts: qe,
            day_id: 0,
        }
    }

    #[test]
    fn merge_exact_key_match() {
        let a = vec![raw_a("7", 8 * 3600, 8 * 3600 + 720, Some(8 * 3600 + 1140))];
        let b = vec![raw_b("7", 8 * 3600, 8 * 3600 + 720, 3)];
        let out = merge_sources(&a, &b);
        assert_eq!(out.merged.len(), 1);
        let m = &out.merged[0];
        assert_eq!(m.service_end_ts, 8 * 3600 + 1140);
        assert_eq!(m.room_id, 3);
        assert_eq!(m.arrival_ts, 8 * 3600);
        assert!(out.unmatched_a.is_empty() && out.unmatched_b.is_empty());
    }

    #[test]
    fn merge_unmatched_a_reported() {
        let a = vec![raw_a("7", 100, 200, Some(300))];
        let out = merge_sources(&a, &[]);
        assert!(out.merged.is_empty());
        assert_eq!(out.unmatched_a, vec![0]);
    }

    #[test]
    fn merge_duplicate_key_all_ambiguous() {
        let a = vec![raw_a("7", 100, 200, Some(300))];
        let b = vec![raw_b("7", 100, 200, 3), raw_b("7", 100, 200, 4)];
        let out = merge_sources(&a, &b);
        assert!(out.merged.is_empty());
        assert_eq!(out.ambiguous_a, vec![0]);
        assert_eq!(out.ambiguous_b, vec![0, 1]);
    }

    #[test]
    fn merge_missing_report_ts_rejected() {
        let a = vec![raw_a("7", 100, 200, None)];
        let b = vec![raw_b("7", 100, 200, 3)];
        let out = merge_sources(&a, &b);
        assert!(out.merged.is_empty());
        assert_eq!(out.rejected_a.len(), 1);
    }

    #[test]
    fn merge_projection_recovers_matched_subsets() {
        let a = vec![
            raw_a("1", 100, 200, Some(350)),
            raw_a("2", 110, 260, Some(400)),
            raw_a("3", 120, 220, Some(310)),
        ];
        let b = vec![
            raw_b("2", 110, 260, 5),
            raw_b("1", 100, 200, 4),
            raw_b("9", 100, 200, 4),
        ];
        let out = merge_sources(&a, &b);
        assert_eq!(out.merged.len(), 2);
        assert_eq!(out.unmatched_a, vec![2]);
        assert_eq!(out.unmatched_b, vec![2]);
        for m in &out.merged {
            let ra = a.iter().find(|r| r.patient_id == m.patient_id).unwrap();
            let rb = b.iter().find(|r| r.patient_id == m.patient_id).unwrap();
            assert_eq!(m.arrival_ts, ra.registration_ts);
            assert_eq!(m.service_start_ts, ra.service_calling_ts);
            assert_eq!(Some(m.service_end_ts), ra.report_generation_ts);
            assert_eq!(m.exam_items, ra.exam_items);
            assert_eq!(m.room_id, rb.room_id);
            assert_eq!(m.age, rb.age);
            assert_eq!(m.gender, rb.gender);
        }
    }
}
