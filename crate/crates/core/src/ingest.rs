//! Event-log ingestion: parsing `events-v1` records and building the
//! per-user and per-community indices every metric is computed from.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub const EVENTS_V1: &str = "events-v1";

/// One submitted post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostEvent {
    pub user: String,
    /// Seconds since the Unix epoch, UTC.
    pub ts: i64,
    pub community: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, rename = "pos", skip_serializing_if = "Option::is_none")]
    pub pos_tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<i64>,
}

impl PostEvent {
    pub fn month(&self) -> Month {
        Month::from_ts(self.ts)
    }
}

/// UTC calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month out of range: {month}");
        Self { year, month }
    }

    pub fn from_ts(ts: i64) -> Self {
        let dt = Utc
            .timestamp_opt(ts, 0)
            .single()
            .expect("timestamp validated at parse time");
        Self {
            year: dt.year(),
            month: dt.month(),
        }
    }

    /// First second of the month.
    pub fn start_ts(self) -> i64 {
        NaiveDate::from_ymd_opt(self.year, self.month, 1)
            .expect("valid month")
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp()
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self::new(self.year + 1, 1)
        } else {
            Self::new(self.year, self.month + 1)
        }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl std::str::FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("month `{s}` is not YYYY-MM"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Self { year, month })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    Strict,
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub mode: ParseMode,
    /// Inclusive lower and exclusive upper bound on timestamps.
    pub bounds: Option<(i64, i64)>,
    /// Events at or after this instant are dropped (not reported as errors).
    pub cutoff: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParseOutput {
    pub events: Vec<PostEvent>,
    pub diagnostics: Vec<Diagnostic>,
    pub dropped_after_cutoff: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTs {
    Epoch(i64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    user: String,
    ts: RawTs,
    community: String,
    #[serde(default)]
    tokens: Option<Vec<String>>,
    #[serde(default)]
    pos: Option<Vec<String>>,
    #[serde(default)]
    feedback: Option<i64>,
}

/// Parses an ISO-8601 timestamp. Offsets are honoured; a bare date-time or
/// date is taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

pub fn format_timestamp(ts: i64) -> String {
    Utc.timestamp_opt(ts, 0)
        .single()
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

fn parse_record(line: &str, opts: &ParseOptions) -> std::result::Result<PostEvent, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let ts = match raw.ts {
        RawTs::Epoch(ts) => ts,
        RawTs::Text(s) => parse_timestamp(&s).ok_or_else(|| format!("unparseable timestamp `{s}`"))?,
    };
    if Utc.timestamp_opt(ts, 0).single().is_none() {
        return Err(format!("timestamp {ts} out of range"));
    }
    if let Some((lo, hi)) = opts.bounds {
        if ts < lo || ts >= hi {
            return Err(format!("timestamp {ts} outside dataset bounds [{lo}, {hi})"));
        }
    }
    if raw.user.is_empty() {
        return Err("empty user".into());
    }
    if raw.community.is_empty() {
        return Err("empty community".into());
    }
    if let Some(pos) = &raw.pos {
        match &raw.tokens {
            None => return Err("pos tags given without tokens".into()),
            Some(tokens) if tokens.len() != pos.len() => {
                return Err(format!(
                    "pos tag count {} differs from token count {}",
                    pos.len(),
                    tokens.len()
                ))
            }
            _ => {}
        }
    }
    Ok(PostEvent {
        user: raw.user,
        ts,
        community: raw.community,
        tokens: raw.tokens,
        pos_tags: raw.pos,
        feedback: raw.feedback,
    })
}

/// Reads line-delimited records. Blank lines are ignored; line numbers in
/// diagnostics are 1-based.
pub fn parse_events<R: BufRead>(reader: R, format: &str, opts: &ParseOptions) -> Result<ParseOutput> {
    if format != EVENTS_V1 {
        return Err(Error::UnknownFormat(format.to_string()));
    }
    let mut out = ParseOutput::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match parse_record(line, opts) {
            Ok(ev) => {
                if opts.cutoff.is_some_and(|c| ev.ts >= c) {
                    out.dropped_after_cutoff += 1;
                } else {
                    out.events.push(ev);
                }
            }
            Err(message) => {
                if opts.mode == ParseMode::Strict {
                    return Err(Error::Malformed { line: idx + 1, message });
                }
                out.diagnostics.push(Diagnostic { line: idx + 1, message });
            }
        }
    }
    Ok(out)
}

pub fn write_events<'a, W: Write>(mut w: W, events: impl IntoIterator<Item = &'a PostEvent>) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut w, ev).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// A user's posts in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTrajectory {
    pub user: String,
    pub events: Vec<PostEvent>,
}

impl UserTrajectory {
    /// Total number of posts, `T`.
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Groups events by user. Each trajectory is sorted by timestamp; equal
/// timestamps keep their input order.
pub fn build_trajectories(events: Vec<PostEvent>) -> BTreeMap<String, UserTrajectory> {
    let mut by_user: BTreeMap<String, Vec<PostEvent>> = BTreeMap::new();
    for ev in events {
        by_user.entry(ev.user.clone()).or_default().push(ev);
    }
    by_user
        .into_iter()
        .map(|(user, mut events)| {
            events.sort_by_key(|e| e.ts);
            (user.clone(), UserTrajectory { user, events })
        })
        .collect()
}

pub fn filter_min_posts(
    trajectories: &BTreeMap<String, UserTrajectory>,
    k: usize,
) -> BTreeMap<String, UserTrajectory> {
    trajectories
        .iter()
        .filter(|(_, t)| t.len() >= k)
        .map(|(u, t)| (u.clone(), t.clone()))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommunityMonthStats {
    pub community: String,
    pub month: Month,
    pub post_count: u64,
    pub token_counts: BTreeMap<String, u64>,
    pub total_tokens: u64,
    pub pos_counts: BTreeMap<String, u64>,
    pub total_pos: u64,
    /// Ascending.
    pub feedback_values: Vec<i64>,
}

impl Default for Month {
    fn default() -> Self {
        Self { year: 1970, month: 1 }
    }
}

#[derive(Default)]
struct MonthAcc {
    posts: u64,
    tokens: HashMap<String, u64>,
    pos: HashMap<String, u64>,
    feedback: Vec<i64>,
}

impl MonthAcc {
    fn add(&mut self, ev: &PostEvent) {
        self.posts += 1;
        if let Some(tokens) = &ev.tokens {
            for t in tokens {
                *self.tokens.entry(t.clone()).or_default() += 1;
            }
        }
        if let Some(pos) = &ev.pos_tags {
            for t in pos {
                *self.pos.entry(t.clone()).or_default() += 1;
            }
        }
        if let Some(f) = ev.feedback {
            self.feedback.push(f);
        }
    }

    fn merge(&mut self, other: MonthAcc) {
        self.posts += other.posts;
        for (k, v) in other.tokens {
            *self.tokens.entry(k).or_default() += v;
        }
        for (k, v) in other.pos {
            *self.pos.entry(k).or_default() += v;
        }
        self.feedback.extend(other.feedback);
    }
}

type MonthKey = (String, Month);

/// `(community, month)` aggregates, nested so lookups can borrow `&str`.
#[derive(Debug, Clone, Default)]
pub struct MonthStatsIndex {
    by_community: BTreeMap<String, BTreeMap<Month, CommunityMonthStats>>,
}

impl MonthStatsIndex {
    pub fn get(&self, community: &str, month: Month) -> Option<&CommunityMonthStats> {
        self.by_community.get(community)?.get(&month)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CommunityMonthStats> {
        self.by_community.values().flat_map(|m| m.values())
    }

    pub fn len(&self) -> usize {
        self.by_community.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_community.is_empty()
    }

    pub fn communities(&self) -> impl Iterator<Item = &str> {
        self.by_community.keys().map(String::as_str)
    }

    pub fn months_of(&self, community: &str) -> impl Iterator<Item = &CommunityMonthStats> {
        self.by_community.get(community).into_iter().flat_map(|m| m.values())
    }

    /// Dataset-wide word counts.
    pub fn global_token_counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for s in self.iter() {
            for (k, v) in &s.token_counts {
                *out.entry(k.clone()).or_default() += v;
            }
        }
        out
    }

    pub fn global_pos_counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for s in self.iter() {
            for (k, v) in &s.pos_counts {
                *out.entry(k.clone()).or_default() += v;
            }
        }
        out
    }
}

pub fn build_community_month_stats(events: &[PostEvent]) -> MonthStatsIndex {
    let merged = par::fold_chunks(
        events,
        |chunk| {
            let mut acc: HashMap<MonthKey, MonthAcc> = HashMap::new();
            for ev in chunk {
                acc.entry((ev.community.clone(), ev.month())).or_default().add(ev);
            }
            acc
        },
        |mut a, b| {
            for (k, v) in b {
                a.entry(k).or_default().merge(v);
            }
            a
        },
    );
    let mut by_community: BTreeMap<String, BTreeMap<Month, CommunityMonthStats>> = BTreeMap::new();
    for ((community, month), acc) in merged {
        let token_counts: BTreeMap<String, u64> = acc.tokens.into_iter().collect();
        let pos_counts: BTreeMap<String, u64> = acc.pos.into_iter().collect();
        let mut feedback_values = acc.feedback;
        feedback_values.sort_unstable();
        let stats = CommunityMonthStats {
            community: community.clone(),
            month,
            post_count: acc.posts,
            total_tokens: token_counts.values().sum(),
            token_counts,
            total_pos: pos_counts.values().sum(),
            pos_counts,
            feedback_values,
        };
        by_community.entry(community).or_default().insert(month, stats);
    }
    MonthStatsIndex { by_community }
}

/// Everyone who ever posted in a community.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommunityUserIndex {
    pub community: String,
    pub posters: BTreeSet<String>,
    pub total_posts: u64,
}

pub fn build_community_user_index(events: &[PostEvent]) -> BTreeMap<String, CommunityUserIndex> {
    let merged = par::fold_chunks(
        events,
        |chunk| {
            let mut acc: HashMap<String, (BTreeSet<String>, u64)> = HashMap::new();
            for ev in chunk {
                let e = acc.entry(ev.community.clone()).or_default();
                e.0.insert(ev.user.clone());
                e.1 += 1;
            }
            acc
        },
        |mut a, b| {
            for (k, (users, n)) in b {
                let e = a.entry(k).or_default();
                e.0.extend(users);
                e.1 += n;
            }
            a
        },
    );
    merged
        .into_iter()
        .map(|(community, (posters, total_posts))| {
            (
                community.clone(),
                CommunityUserIndex {
                    community,
                    posters,
                    total_posts,
                },
            )
        })
        .collect()
}

/// All indices built from one event log.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub trajectories: BTreeMap<String, UserTrajectory>,
    pub month_stats: MonthStatsIndex,
    pub user_index: BTreeMap<String, CommunityUserIndex>,
    /// Latest timestamp seen, if any.
    pub end_ts: Option<i64>,
    pub has_tokens: bool,
    pub has_pos: bool,
    pub has_feedback: bool,
}

impl Dataset {
    pub fn build(events: Vec<PostEvent>) -> Self {
        let month_stats = build_community_month_stats(&events);
        let user_index = build_community_user_index(&events);
        let end_ts = events.iter().map(|e| e.ts).max();
        let has_tokens = events.iter().any(|e| e.tokens.is_some());
        let has_pos = events.iter().any(|e| e.pos_tags.is_some());
        let has_feedback = events.iter().any(|e| e.feedback.is_some());
        let trajectories = build_trajectories(events);
        Self {
            trajectories,
            month_stats,
            user_index,
            end_ts,
            has_tokens,
            has_pos,
            has_feedback,
        }
    }

    pub fn event_count(&self) -> usize {
        self.trajectories.values().map(UserTrajectory::len).sum()
    }

    /// Users with at least `k` posts.
    pub fn users_with_min_posts(&self, k: usize) -> impl Iterator<Item = &UserTrajectory> {
        self.trajectories.values().filter(move |t| t.len() >= k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(user: &str, ts: i64, community: &str) -> PostEvent {
        PostEvent {
            user: user.into(),
            ts,
            community: community.into(),
            tokens: None,
            pos_tags: None,
            feedback: None,
        }
    }

    fn parse(input: &str, mode: ParseMode) -> Result<ParseOutput> {
        parse_events(
            input.as_bytes(),
            EVENTS_V1,
            &ParseOptions {
                mode,
                ..Default::default()
            },
        )
    }

    #[test]
    fn minimal_record_has_no_optional_fields() {
        let out = parse(r#"{"user":"u1","ts":1267401600,"community":"A"}"#, ParseMode::Strict).unwrap();
        assert_eq!(out.events, vec![ev("u1", 1267401600, "A")]);
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn iso_timestamps() {
        let out = parse(
            concat!(
                r#"{"user":"u","ts":"2010-03-01T00:00:00Z","community":"A"}"#,
                "\n",
                r#"{"user":"u","ts":"2010-03-01T01:00:00+01:00","community":"A"}"#,
                "\n",
                r#"{"user":"u","ts":"2010-03-01","community":"A"}"#
            ),
            ParseMode::Strict,
        )
        .unwrap();
        assert!(out.events.iter().all(|e| e.ts == 1267401600));
    }

    #[test]
    fn pos_length_mismatch_is_diagnosed() {
        let input = concat!(
            r#"{"user":"u","ts":1,"community":"A","tokens":["a","b"],"pos":["DT"]}"#,
            "\n",
            r#"{"user":"u","ts":2,"community":"A"}"#
        );
        let out = parse(input, ParseMode::Lenient).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.diagnostics[0].line, 1);
        assert!(matches!(parse(input, ParseMode::Strict), Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn empty_stream() {
        let out = parse("", ParseMode::Strict).unwrap();
        assert!(out.events.is_empty() && out.diagnostics.is_empty());
    }

    #[test]
    fn unknown_format_is_fatal() {
        let r = parse_events("".as_bytes(), "csv", &ParseOptions::default());
        assert!(matches!(r, Err(Error::UnknownFormat(_))));
    }

    #[test]
    fn cutoff_and_bounds() {
        let input = "{\"user\":\"u\",\"ts\":5,\"community\":\"A\"}\n{\"user\":\"u\",\"ts\":50,\"community\":\"A\"}";
        let out = parse_events(
            input.as_bytes(),
            EVENTS_V1,
            &ParseOptions {
                cutoff: Some(10),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.dropped_after_cutoff, 1);

        let out = parse_events(
            input.as_bytes(),
            EVENTS_V1,
            &ParseOptions {
                bounds: Some((0, 10)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn negative_feedback_is_accepted() {
        let out = parse(r#"{"user":"u","ts":1,"community":"A","feedback":-3}"#, ParseMode::Strict).unwrap();
        assert_eq!(out.events[0].feedback, Some(-3));
    }

    #[test]
    fn trajectories_sort_and_keep_ties_in_input_order() {
        let events = vec![ev("u1", 30, "A"), ev("u1", 10, "B"), ev("u1", 20, "C"), ev("u2", 5, "X"), ev("u2", 5, "Y")];
        let t = build_trajectories(events);
        let c: Vec<_> = t["u1"].events.iter().map(|e| e.community.as_str()).collect();
        assert_eq!(c, ["B", "C", "A"]);
        let c: Vec<_> = t["u2"].events.iter().map(|e| e.community.as_str()).collect();
        assert_eq!(c, ["X", "Y"]);
    }

    #[test]
    fn min_post_boundary() {
        let mut events: Vec<_> = (0..49).map(|i| ev("a", i, "A")).collect();
        events.extend((0..50).map(|i| ev("b", i, "A")));
        let kept = filter_min_posts(&build_trajectories(events), 50);
        assert_eq!(kept.keys().collect::<Vec<_>>(), ["b"]);
    }

    #[test]
    fn single_post_month_stats() {
        let mut e = ev("u", Month::new(2010, 3).start_ts() + 100, "C");
        e.tokens = Some(vec!["a".into(), "a".into(), "b".into()]);
        e.feedback = Some(5);
        let mut e2 = ev("v", Month::new(2010, 3).start_ts() + 200, "C");
        e2.feedback = Some(-1);
        let idx = build_community_month_stats(&[e, e2]);
        let s = idx.get("C", Month::new(2010, 3)).unwrap();
        assert_eq!(s.token_counts, BTreeMap::from([("a".to_string(), 2), ("b".to_string(), 1)]));
        assert_eq!(s.total_tokens, 3);
        assert_eq!(s.post_count, 2);
        assert_eq!(s.feedback_values, vec![-1, 5]);
    }

    #[test]
    fn poster_dedup_and_absence() {
        let idx = build_community_user_index(&[ev("u1", 1, "C"), ev("u1", 2, "C")]);
        assert_eq!(idx["C"].posters.len(), 1);
        assert_eq!(idx["C"].total_posts, 2);
        assert!(!idx.contains_key("D"));
    }

    #[test]
    fn month_boundaries_are_utc() {
        let start = Month::new(2013, 7).start_ts();
        assert_eq!(Month::from_ts(start), Month::new(2013, 7));
        assert_eq!(Month::from_ts(start - 1), Month::new(2013, 6));
        assert_eq!(Month::new(2013, 12).succ(), Month::new(2014, 1));
        assert_eq!("2013-07".parse::<Month>().unwrap(), Month::new(2013, 7));
    }

    fn arb_event() -> impl Strategy<Value = PostEvent> {
        (
            0..5u8,
            0i64..100_000_000,
            0..4u8,
            proptest::option::of(proptest::collection::vec("[a-c]", 0..4)),
            proptest::option::of(-5i64..20),
        )
            .prop_map(|(u, ts, c, tokens, feedback)| PostEvent {
                user: format!("u{u}"),
                ts,
                community: format!("c{c}"),
                pos_tags: tokens.as_ref().map(|t| vec!["NN".to_string(); t.len()]),
                tokens,
                feedback,
            })
    }

    proptest! {
        #[test]
        fn serialized_trajectories_reparse_identically(events in proptest::collection::vec(arb_event(), 0..60)) {
            let t = build_trajectories(events);
            let mut buf = Vec::new();
            write_events(&mut buf, t.values().flat_map(|t| t.events.iter())).unwrap();
            let back = parse_events(buf.as_slice(), EVENTS_V1, &ParseOptions { mode: ParseMode::Strict, ..Default::default() }).unwrap();
            prop_assert_eq!(build_trajectories(back.events), t);
        }

        #[test]
        fn post_counts_are_conserved(events in proptest::collection::vec(arb_event(), 0..80)) {
            let stats = build_community_month_stats(&events);
            let users = build_community_user_index(&events);
            let by_month: u64 = stats.iter().map(|s| s.post_count).sum();
            let by_comm: u64 = users.values().map(|c| c.total_posts).sum();
            prop_assert_eq!(by_month, events.len() as u64);
            prop_assert_eq!(by_comm, events.len() as u64);
            for s in stats.iter() {
                prop_assert_eq!(s.total_tokens, s.token_counts.values().sum::<u64>());
                prop_assert!(s.feedback_values.len() as u64 <= s.post_count);
            }
        }

        #[test]
        fn appending_events_is_monotone(events in proptest::collection::vec(arb_event(), 1..60), split in 0usize..60) {
            let split = split.min(events.len());
            let before = build_community_month_stats(&events[..split]);
            let after = build_community_month_stats(&events);
            for s in before.iter() {
                prop_assert!(after.get(&s.community, s.month).unwrap().post_count >= s.post_count);
            }
            let ub = build_community_user_index(&events[..split]);
            let ua = build_community_user_index(&events);
            for (c, idx) in &ub {
                prop_assert!(ua[c].posters.len() >= idx.posters.len());
            }
        }
    }
}
