//! Domain types, the event log format, temporal splitting and
//! relationship-tier permission records.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type UserId = u64;
pub type ContentId = u64;
pub type Timestamp = i64;

pub const SECONDS_PER_WEEK: i64 = 7 * 86_400;
pub const HEADER_PREFIX: &str = "#d2dtrace v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    App,
    Video,
    Music,
    Image,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::App,
        Category::Video,
        Category::Music,
        Category::Image,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::App => "app",
            Category::Video => "video",
            Category::Music => "music",
            Category::Image => "image",
            Category::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Option<Self> {
        ((-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon))
            .then_some(GeoPoint { lat, lon })
    }

    /// Grid cell of side `cell_deg` containing this point.
    pub fn cell(&self, cell_deg: f64) -> (i64, i64) {
        (
            (self.lat / cell_deg).floor() as i64,
            (self.lon / cell_deg).floor() as i64,
        )
    }
}

/// One timestamped D2D delivery of a content file between two users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingEvent {
    pub timestamp: Timestamp,
    pub sender: UserId,
    pub receiver: UserId,
    pub file: ContentId,
    pub size_bytes: u64,
    pub category: Category,
    pub geo: Option<GeoPoint>,
}

impl SharingEvent {
    /// Unordered pair `(min, max)` of the two endpoints.
    pub fn pair(&self) -> (UserId, UserId) {
        canonical_pair(self.sender, self.receiver)
    }

    /// Processing order used by every replay: time, then `(sender, receiver)`.
    pub fn order_key(&self) -> (Timestamp, UserId, UserId) {
        (self.timestamp, self.sender, self.receiver)
    }
}

pub fn canonical_pair(u: UserId, v: UserId) -> (UserId, UserId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Sort events by `(timestamp, sender, receiver)`; stable for full ties.
pub fn sort_events(events: &mut [SharingEvent]) {
    events.sort_by_key(SharingEvent::order_key);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub min_ts: Timestamp,
    pub max_ts: Timestamp,
}

impl TraceHeader {
    pub fn contains(&self, ts: Timestamp) -> bool {
        (self.min_ts..=self.max_ts).contains(&ts)
    }
}

impl fmt::Display for TraceHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} min_ts={} max_ts={}",
            HEADER_PREFIX, self.min_ts, self.max_ts
        )
    }
}

impl FromStr for TraceHeader {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let rest = line.strip_prefix(HEADER_PREFIX).ok_or_else(|| {
            Error::Header(format!("expected `{HEADER_PREFIX} ...`, got `{line}`"))
        })?;
        let mut min_ts = None;
        let mut max_ts = None;
        for tok in rest.split_whitespace() {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| Error::Header(format!("bad header token `{tok}`")))?;
            let value: Timestamp = value
                .parse()
                .map_err(|_| Error::Header(format!("bad header value `{tok}`")))?;
            match key {
                "min_ts" => min_ts = Some(value),
                "max_ts" => max_ts = Some(value),
                _ => return Err(Error::Header(format!("unknown header key `{key}`"))),
            }
        }
        match (min_ts, max_ts) {
            (Some(min_ts), Some(max_ts)) if min_ts <= max_ts => Ok(TraceHeader { min_ts, max_ts }),
            (Some(_), Some(_)) => Err(Error::Header("min_ts > max_ts".into())),
            _ => Err(Error::Header("header needs min_ts and max_ts".into())),
        }
    }
}

/// A parsed event log: declared span plus events in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<SharingEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineErrorReason {
    BadFieldCount(usize),
    BadInteger(&'static str),
    SelfShare,
    BadCoordinate,
    UnknownCategory(String),
    OutsideSpan,
}

impl fmt::Display for LineErrorReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LineErrorReason::BadFieldCount(n) => write!(f, "bad field count {n} (expected 7)"),
            LineErrorReason::BadInteger(field) => write!(f, "unparsable integer in `{field}`"),
            LineErrorReason::SelfShare => f.write_str("sender==receiver"),
            LineErrorReason::BadCoordinate => f.write_str("out-of-range or malformed coordinate"),
            LineErrorReason::UnknownCategory(c) => write!(f, "unknown category `{c}`"),
            LineErrorReason::OutsideSpan => f.write_str("timestamp outside declared span"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number in the input, header included.
    pub line_no: usize,
    pub reason: LineErrorReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub trace: Trace,
    pub errors: Vec<LineError>,
}

fn parse_event_line(
    line: &str,
    header: &TraceHeader,
) -> std::result::Result<SharingEvent, LineErrorReason> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 7 {
        return Err(LineErrorReason::BadFieldCount(fields.len()));
    }
    let timestamp: Timestamp = fields[0]
        .parse()
        .map_err(|_| LineErrorReason::BadInteger("timestamp"))?;
    let sender: UserId = fields[1]
        .parse()
        .map_err(|_| LineErrorReason::BadInteger("sender"))?;
    let receiver: UserId = fields[2]
        .parse()
        .map_err(|_| LineErrorReason::BadInteger("receiver"))?;
    let file: ContentId = fields[3]
        .parse()
        .map_err(|_| LineErrorReason::BadInteger("file"))?;
    let size_bytes: u64 = fields[4]
        .parse()
        .map_err(|_| LineErrorReason::BadInteger("size_bytes"))?;
    let category: Category = fields[5]
        .parse()
        .map_err(|_| LineErrorReason::UnknownCategory(fields[5].to_string()))?;
    let geo = if fields[6].is_empty() {
        None
    } else {
        let (lat, lon) = fields[6]
            .split_once(';')
            .ok_or(LineErrorReason::BadCoordinate)?;
        let lat: f64 = lat.parse().map_err(|_| LineErrorReason::BadCoordinate)?;
        let lon: f64 = lon.parse().map_err(|_| LineErrorReason::BadCoordinate)?;
        Some(GeoPoint::new(lat, lon).ok_or(LineErrorReason::BadCoordinate)?)
    };
    if sender == receiver {
        return Err(LineErrorReason::SelfShare);
    }
    if !header.contains(timestamp) {
        return Err(LineErrorReason::OutsideSpan);
    }
    Ok(SharingEvent {
        timestamp,
        sender,
        receiver,
        file,
        size_bytes,
        category,
        geo,
    })
}

/// Parse an event log. The first line must be the trace header.
///
/// Blank lines are skipped. In strict mode the first malformed line aborts
/// with [`Error::Line`]; otherwise malformed lines are collected and parsing
/// continues.
pub fn parse_event_log<R: BufRead>(reader: R, strict: bool) -> Result<ParsedLog> {
    let mut lines = reader.lines();
    let header: TraceHeader = match lines.next() {
        Some(line) => line?.trim_end_matches('\r').parse()?,
        None => return Err(Error::Header("empty input".into())),
    };
    let mut events = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        match parse_event_line(line, &header) {
            Ok(ev) => events.push(ev),
            Err(reason) => {
                let err = LineError {
                    line_no: i + 2,
                    reason,
                };
                if strict {
                    return Err(Error::Line(err));
                }
                errors.push(err);
            }
        }
    }
    Ok(ParsedLog {
        trace: Trace { header, events },
        errors,
    })
}

pub fn format_event(ev: &SharingEvent) -> String {
    let geo = ev
        .geo
        .map(|g| format!("{:.6};{:.6}", g.lat, g.lon))
        .unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{}",
        ev.timestamp, ev.sender, ev.receiver, ev.file, ev.size_bytes, ev.category, geo
    )
}

pub fn write_event_log<W: Write>(
    mut out: W,
    header: &TraceHeader,
    events: &[SharingEvent],
) -> Result<()> {
    writeln!(out, "{header}")?;
    for ev in events {
        writeln!(out, "{}", format_event(ev))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTotals {
    pub events: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub min_ts: Timestamp,
    pub max_ts: Timestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub num_events: u64,
    pub num_users: u64,
    pub num_files: u64,
    pub num_gps_records: u64,
    pub time_span: TimeSpan,
    pub per_category_counts: BTreeMap<Category, CategoryTotals>,
}

pub fn summarize(events: &[SharingEvent]) -> TraceSummary {
    let mut users = HashSet::new();
    let mut files = HashSet::new();
    let mut per_category: BTreeMap<Category, CategoryTotals> = Category::ALL
        .iter()
        .map(|&c| (c, CategoryTotals::default()))
        .collect();
    let mut span: Option<TimeSpan> = None;
    let mut gps = 0;
    for ev in events {
        users.insert(ev.sender);
        users.insert(ev.receiver);
        files.insert(ev.file);
        gps += u64::from(ev.geo.is_some());
        let totals = per_category.entry(ev.category).or_default();
        totals.events += 1;
        totals.bytes += ev.size_bytes;
        span = Some(match span {
            None => TimeSpan {
                min_ts: ev.timestamp,
                max_ts: ev.timestamp,
            },
            Some(s) => TimeSpan {
                min_ts: s.min_ts.min(ev.timestamp),
                max_ts: s.max_ts.max(ev.timestamp),
            },
        });
    }
    TraceSummary {
        num_events: events.len() as u64,
        num_users: users.len() as u64,
        num_files: files.len() as u64,
        num_gps_records: gps,
        time_span: span.unwrap_or_default(),
        per_category_counts: per_category,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitBoundary {
    Timestamp(Timestamp),
    /// Fraction `f` in (0, 1): boundary at `min_ts + f * (max_ts - min_ts)`.
    Fraction(f64),
}

/// Split events into those strictly before the boundary and the rest.
/// Both halves come back sorted by [`SharingEvent::order_key`].
pub fn split_by_time(
    events: &[SharingEvent],
    boundary: SplitBoundary,
) -> Result<(Vec<SharingEvent>, Vec<SharingEvent>)> {
    if let SplitBoundary::Fraction(f) = boundary {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split fraction {f} not in (0,1)"
            )));
        }
    }
    if events.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut sorted = events.to_vec();
    sort_events(&mut sorted);
    let min_ts = sorted[0].timestamp;
    let max_ts = sorted[sorted.len() - 1].timestamp;
    let cut = match boundary {
        SplitBoundary::Timestamp(t) => sorted.partition_point(|e| e.timestamp < t),
        SplitBoundary::Fraction(f) => {
            let b = min_ts as f64 + f * (max_ts - min_ts) as f64;
            sorted.partition_point(|e| (e.timestamp as f64) < b)
        }
    };
    let second = sorted.split_off(cut);
    Ok((sorted, second))
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    #[default]
    Stranger = 0,
    Friend = 1,
    Family = 2,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Stranger, Tier::Friend, Tier::Family];

    pub fn from_ordinal(v: u8) -> Option<Tier> {
        Tier::ALL.get(v as usize).copied()
    }

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Stranger => "stranger",
            Tier::Friend => "friend",
            Tier::Family => "family",
        }
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Tier> {
        Tier::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s || t.ordinal().to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tier `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationshipTier {
    pub user_a: UserId,
    pub user_b: UserId,
    pub tier: Tier,
}

impl RelationshipTier {
    /// Canonicalises the pair so that `user_a < user_b`.
    pub fn new(u: UserId, v: UserId, tier: Tier) -> Option<Self> {
        (u != v).then(|| {
            let (user_a, user_b) = canonical_pair(u, v);
            RelationshipTier {
                user_a,
                user_b,
                tier,
            }
        })
    }
}

/// Lookup of relationship tiers by unordered pair; missing pairs are strangers.
#[derive(Debug, Clone, Default)]
pub struct TierIndex {
    tiers: HashMap<(UserId, UserId), Tier>,
}

impl TierIndex {
    pub fn new(records: &[RelationshipTier]) -> Result<Self> {
        let mut tiers = HashMap::with_capacity(records.len());
        for r in records {
            if r.user_a >= r.user_b {
                return Err(Error::InvalidArgument(format!(
                    "relationship ({}, {}) is not canonical",
                    r.user_a, r.user_b
                )));
            }
            if tiers.insert((r.user_a, r.user_b), r.tier).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate relationship ({}, {})",
                    r.user_a, r.user_b
                )));
            }
        }
        Ok(TierIndex { tiers })
    }

    pub fn tier(&self, u: UserId, v: UserId) -> Tier {
        self.tiers
            .get(&canonical_pair(u, v))
            .copied()
            .unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }
}

pub fn permission_allows(tiers: &TierIndex, u: UserId, v: UserId, threshold: Tier) -> bool {
    tiers.tier(u, v) >= threshold
}

pub const RELATIONSHIP_HEADER: &str = "user_a,user_b,tier";

/// Parse a relationship file (`user_a,user_b,tier`, optional header line).
pub fn parse_relationships<R: BufRead>(reader: R) -> Result<Vec<RelationshipTier>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == RELATIONSHIP_HEADER) {
            continue;
        }
        let bad = || Error::InvalidArgument(format!("relationship line {}: `{line}`", i + 1));
        let mut it = line.split(',');
        let (Some(a), Some(b), Some(t), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        let a: UserId = a.parse().map_err(|_| bad())?;
        let b: UserId = b.parse().map_err(|_| bad())?;
        let tier = t
            .parse::<u8>()
            .ok()
            .and_then(Tier::from_ordinal)
            .ok_or_else(bad)?;
        out.push(RelationshipTier::new(a, b, tier).ok_or_else(bad)?);
    }
    Ok(out)
}

pub fn write_relationships<W: Write>(mut out: W, records: &[RelationshipTier]) -> Result<()> {
    writeln!(out, "{RELATIONSHIP_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{}", r.user_a, r.user_b, r.tier.ordinal())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "#d2dtrace v1 min_ts=0 max_ts=2000000000";

    fn ev(ts: i64, s: u64, r: u64, file: u64) -> SharingEvent {
        SharingEvent {
            timestamp: ts,
            sender: s,
            receiver: r,
            file,
            size_bytes: 10,
            category: Category::App,
            geo: None,
        }
    }

    fn parse(body: &str, strict: bool) -> Result<ParsedLog> {
        parse_event_log(format!("{HEADER}\n{body}").as_bytes(), strict)
    }

    #[test]
    fn parses_minimal_line() {
        let log = parse("1470009600,5,9,101,1048576,app,\n", true).unwrap();
        assert_eq!(
            log.trace.events,
            vec![SharingEvent {
                timestamp: 1470009600,
                sender: 5,
                receiver: 9,
                file: 101,
                size_bytes: 1048576,
                category: Category::App,
                geo: None,
            }]
        );
        assert!(log.errors.is_empty());
    }

    #[test]
    fn self_share_is_a_line_error() {
        let log = parse("1470009600,5,5,101,1048576,app,\n", false).unwrap();
        assert!(log.trace.events.is_empty());
        assert_eq!(
            log.errors,
            vec![LineError {
                line_no: 2,
                reason: LineErrorReason::SelfShare
            }]
        );
    }

    #[test]
    fn each_error_reason_is_reported() {
        let body = "1,2,3,4,5,app\n\
                    x,2,3,4,5,app,\n\
                    1,2,3,4,5,book,\n\
                    1,2,3,4,5,app,91.0;0.0\n\
                    -1,2,3,4,5,app,\n\
                    1,2,3,4,5,video,45.5;-120.25\n";
        let log = parse(body, false).unwrap();
        let reasons: Vec<_> = log.errors.iter().map(|e| e.reason.clone()).collect();
        assert_eq!(
            reasons,
            vec![
                LineErrorReason::BadFieldCount(6),
                LineErrorReason::BadInteger("timestamp"),
                LineErrorReason::UnknownCategory("book".into()),
                LineErrorReason::BadCoordinate,
                LineErrorReason::OutsideSpan,
            ]
        );
        assert_eq!(log.errors[4].line_no, 6);
        assert_eq!(log.trace.events.len(), 1);
        assert_eq!(log.trace.events[0].geo, GeoPoint::new(45.5, -120.25));
    }

    #[test]
    fn strict_mode_aborts() {
        let err = parse("1,2,3,4,5,app,\n1,2,2,4,5,app,\n", true).unwrap_err();
        assert!(matches!(err, Error::Line(LineError { line_no: 3, .. })));
    }

    #[test]
    fn header_is_required() {
        assert!(matches!(
            parse_event_log("1,2,3,4,5,app,\n".as_bytes(), false),
            Err(Error::Header(_))
        ));
        assert!(matches!(
            parse_event_log("".as_bytes(), false),
            Err(Error::Header(_))
        ));
        assert!("#d2dtrace v1 min_ts=5 max_ts=4"
            .parse::<TraceHeader>()
            .is_err());
    }

    #[test]
    fn summarize_empty_and_small() {
        let s = summarize(&[]);
        assert_eq!(s.num_events, 0);
        assert_eq!(s.num_users, 0);
        assert_eq!(s.time_span, TimeSpan::default());

        let events = vec![ev(3, 1, 2, 10), ev(1, 2, 3, 11), ev(2, 3, 1, 10)];
        let s = summarize(&events);
        assert_eq!((s.num_events, s.num_users, s.num_files), (3, 3, 2));
        assert_eq!(
            s.time_span,
            TimeSpan {
                min_ts: 1,
                max_ts: 3
            }
        );
        assert_eq!(
            s.per_category_counts[&Category::App],
            CategoryTotals {
                events: 3,
                bytes: 30
            }
        );
    }

    #[test]
    fn split_examples() {
        let events: Vec<_> = [0, 10, 20, 30].iter().map(|&t| ev(t, 1, 2, 0)).collect();
        let (a, b) = split_by_time(&events, SplitBoundary::Fraction(0.5)).unwrap();
        assert_eq!(
            a.iter().map(|e| e.timestamp).collect::<Vec<_>>(),
            vec![0, 10]
        );
        assert_eq!(
            b.iter().map(|e| e.timestamp).collect::<Vec<_>>(),
            vec![20, 30]
        );

        let (a, b) = split_by_time(&[ev(7, 1, 2, 0)], SplitBoundary::Fraction(0.5)).unwrap();
        assert!(a.is_empty());
        assert_eq!(b.len(), 1);

        let (a, b) = split_by_time(&[], SplitBoundary::Fraction(0.5)).unwrap();
        assert!(a.is_empty() && b.is_empty());
        assert!(split_by_time(&events, SplitBoundary::Fraction(1.0)).is_err());

        let (a, b) = split_by_time(&events, SplitBoundary::Timestamp(20)).unwrap();
        assert_eq!((a.len(), b.len()), (2, 2));
    }

    #[test]
    fn permission_examples() {
        let idx = TierIndex::new(&[RelationshipTier::new(2, 1, Tier::Family).unwrap()]).unwrap();
        assert!(permission_allows(&idx, 1, 2, Tier::Friend));
        assert!(permission_allows(&idx, 2, 1, Tier::Family));
        assert!(!permission_allows(&idx, 3, 4, Tier::Friend));
        assert!(permission_allows(&idx, 3, 4, Tier::Stranger));
    }

    #[test]
    fn duplicate_relationship_rejected() {
        let r = RelationshipTier::new(1, 2, Tier::Friend).unwrap();
        assert!(TierIndex::new(&[r, r]).is_err());
        assert!(RelationshipTier::new(3, 3, Tier::Friend).is_none());
    }

    #[test]
    fn relationship_file_round_trip() {
        let recs = vec![
            RelationshipTier::new(1, 2, Tier::Friend).unwrap(),
            RelationshipTier::new(9, 4, Tier::Family).unwrap(),
        ];
        let mut buf = Vec::new();
        write_relationships(&mut buf, &recs).unwrap();
        assert_eq!(parse_relationships(buf.as_slice()).unwrap(), recs);
        assert!(parse_relationships("1,2,7\n".as_bytes()).is_err());
    }

    fn arb_event() -> impl Strategy<Value = SharingEvent> {
        (
            0i64..1_000_000,
            0u64..50,
            1u64..50,
            0u64..1000,
            0u64..1 << 40,
            0usize..5,
            proptest::option::of((-90_000_000i64..=90_000_000, -180_000_000i64..=180_000_000)),
        )
            .prop_map(|(ts, s, d, file, size, c, geo)| SharingEvent {
                timestamp: ts,
                sender: s,
                receiver: (s + d) % 50,
                file,
                size_bytes: size,
                category: Category::ALL[c],
                geo: geo.map(|(a, b)| GeoPoint {
                    lat: a as f64 / 1e6,
                    lon: b as f64 / 1e6,
                }),
            })
            .prop_filter("distinct endpoints", |e| e.sender != e.receiver)
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(events in proptest::collection::vec(arb_event(), 0..60)) {
            let header = TraceHeader { min_ts: 0, max_ts: 1_000_000 };
            let mut buf = Vec::new();
            write_event_log(&mut buf, &header, &events).unwrap();
            let parsed = parse_event_log(buf.as_slice(), true).unwrap();
            prop_assert_eq!(parsed.trace.header, header);
            prop_assert_eq!(parsed.trace.events, events);
        }

        #[test]
        fn summarize_is_permutation_invariant(mut events in proptest::collection::vec(arb_event(), 0..60), seed in any::<u64>()) {
            let before = summarize(&events);
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            events.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let after = summarize(&events);
            prop_assert_eq!(before.num_events, after.per_category_counts.values().map(|c| c.events).sum::<u64>());
            prop_assert_eq!(before, after);
        }

        #[test]
        fn split_is_exhaustive_and_ordered(events in proptest::collection::vec(arb_event(), 0..60), f in 0.01f64..0.99) {
            let (a, b) = split_by_time(&events, SplitBoundary::Fraction(f)).unwrap();
            prop_assert_eq!(a.len() + b.len(), events.len());
            if let (Some(x), Some(y)) = (a.last(), b.first()) {
                prop_assert!(x.timestamp < y.timestamp);
            }
            let mut joined = a.clone();
            joined.extend(b);
            let mut sorted = events.clone();
            sort_events(&mut sorted);
            prop_assert_eq!(joined, sorted);
        }

        #[test]
        fn permission_is_symmetric(u in 0u64..6, v in 0u64..6, t in 0u8..3, th in 0u8..3) {
            prop_assume!(u != v);
            let idx = TierIndex::new(&[RelationshipTier::new(0, 1, Tier::from_ordinal(t).unwrap()).unwrap()]).unwrap();
            let th = Tier::from_ordinal(th).unwrap();
            prop_assert_eq!(permission_allows(&idx, u, v, th), permission_allows(&idx, v, u, th));
        }
    }
}
