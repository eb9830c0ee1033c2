//! Future-activity labels: departing/staying status relative to a
//! start-of-future instant, and quartiles of lifetime activity after the
//! prefix.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Months, TimeDelta, Utc};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::framework::DEFAULT_PREFIX;
use crate::ingest::{Dataset, PostEvent, UserTrajectory};

/// 2013-07-01T00:00:00Z.
pub const DEFAULT_SOF: i64 = 1_372_636_800;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfRule {
    /// Three calendar months per half (UTC).
    Calendar,
    FixedDays(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuartileScope {
    /// Every user with at least `prefix_len` posts before SOF.
    AllEligible,
    /// Only departing and staying users.
    Labeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelConfig {
    pub sof: i64,
    pub half: HalfRule,
    pub prefix_len: usize,
    pub quartile_scope: QuartileScope,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            sof: DEFAULT_SOF,
            half: HalfRule::Calendar,
            prefix_len: DEFAULT_PREFIX,
            quartile_scope: QuartileScope::AllEligible,
        }
    }
}

impl LabelConfig {
    /// `(sof, start of second half, end of horizon)`.
    pub fn boundaries(&self) -> Result<(i64, i64, i64)> {
        let sof = DateTime::<Utc>::from_timestamp(self.sof, 0)
            .ok_or_else(|| Error::InvalidArgument(format!("SOF {} out of range", self.sof)))?;
        let (mid, end) = match self.half {
            HalfRule::Calendar => (
                sof.checked_add_months(Months::new(3)),
                sof.checked_add_months(Months::new(6)),
            ),
            HalfRule::FixedDays(d) => (
                sof.checked_add_signed(TimeDelta::days(d)),
                sof.checked_add_signed(TimeDelta::days(2 * d)),
            ),
        };
        match (mid, end) {
            (Some(m), Some(e)) if m > sof => Ok((self.sof, m.timestamp(), e.timestamp())),
            _ => Err(Error::InvalidArgument("label horizon out of range".into())),
        }
    }

    /// Fails if the horizon extends past `data_end` (exclusive end of the
    /// observation period).
    pub fn check_coverage(&self, data_end: i64) -> Result<()> {
        let (_, _, end) = self.boundaries()?;
        if end > data_end {
            return Err(Error::InvalidArgument(format!(
                "label horizon ends at {} but data ends at {}",
                crate::ingest::format_timestamp(end),
                crate::ingest::format_timestamp(data_end)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Departing,
    Staying,
    Neither,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Departing => "departing",
            Status::Staying => "staying",
            Status::Neither => "neither",
        })
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "departing" => Ok(Status::Departing),
            "staying" => Ok(Status::Staying),
            "neither" => Ok(Status::Neither),
            _ => Err(Error::InvalidArgument(format!("unknown status '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserLabel {
    pub user: String,
    pub status: Status,
    /// 1..=4, 4 = most active. 0 for users outside the quartile scope.
    pub quartile: u8,
    /// Lifetime posts after the prefix (`T − prefix_len`).
    pub future_post_count: usize,
}

pub fn is_eligible(events: &[PostEvent], cfg: &LabelConfig) -> bool {
    events.iter().filter(|e| e.ts < cfg.sof).count() >= cfg.prefix_len
}

/// `None` for users with fewer than `prefix_len` posts before SOF.
pub fn departing_status(events: &[PostEvent], cfg: &LabelConfig) -> Result<Option<Status>> {
    if !is_eligible(events, cfg) {
        return Ok(None);
    }
    let (sof, mid, end) = cfg.boundaries()?;
    let last = events.iter().map(|e| e.ts).max().expect("eligible users have posts");
    if last < sof {
        return Ok(Some(Status::Departing));
    }
    let first_half = events.iter().any(|e| (sof..mid).contains(&e.ts));
    let second_half = events.iter().any(|e| (mid..end).contains(&e.ts));
    Ok(Some(if first_half && second_half {
        Status::Staying
    } else {
        Status::Neither
    }))
}

/// Ranks users by `(future count, user id)` ascending and cuts the ranking
/// into four buckets whose sizes differ by at most one, the extra users
/// going to the lower quartiles.
pub fn activity_quartiles<'a>(users: impl IntoIterator<Item = (&'a str, usize)>) -> BTreeMap<String, u8> {
    let mut ranked: Vec<(usize, &str)> = users.into_iter().map(|(u, c)| (c, u)).collect();
    ranked.sort_unstable();
    let n = ranked.len();
    let (base, extra) = (n / 4, n % 4);
    let mut out = BTreeMap::new();
    let mut it = ranked.into_iter();
    for q in 1..=4u8 {
        let size = base + usize::from((q as usize) <= extra);
        for (_, u) in it.by_ref().take(size) {
            out.insert(u.to_string(), q);
        }
    }
    out
}

fn label_one(traj: &UserTrajectory, cfg: &LabelConfig) -> Result<Option<(String, Status, usize)>> {
    Ok(departing_status(&traj.events, cfg)?.map(|s| (traj.user.clone(), s, traj.len() - cfg.prefix_len)))
}

/// Labels for every eligible user, in user order.
pub fn label_users(dataset: &Dataset, cfg: &LabelConfig) -> Result<Vec<UserLabel>> {
    cfg.boundaries()?;
    let trajs: Vec<&UserTrajectory> = dataset.trajectories.values().collect();
    let labelled = crate::par::map(&trajs, |t| label_one(t, cfg));
    let mut rows = Vec::new();
    for r in labelled {
        if let Some(row) = r? {
            rows.push(row);
        }
    }
    let scope = rows
        .iter()
        .filter(|(_, s, _)| cfg.quartile_scope == QuartileScope::AllEligible || *s != Status::Neither)
        .map(|(u, _, c)| (u.as_str(), *c));
    let quartiles = activity_quartiles(scope);
    Ok(rows
        .into_iter()
        .map(|(user, status, future_post_count)| UserLabel {
            quartile: quartiles.get(&user).copied().unwrap_or(0),
            user,
            status,
            future_post_count,
        })
        .collect())
}
