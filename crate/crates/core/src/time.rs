//! UTC timestamps at second resolution.

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike, Utc};

pub type Timestamp = DateTime<Utc>;

const FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unparsable timestamp {0:?}")]
pub struct UnparsableTimestamp(pub String);

/// ISO-8601 UTC text, e.g. `2025-02-14T10:30:00Z`.
pub fn format_ts(ts: &Timestamp) -> String {
    ts.format(FORMAT).to_string()
}

/// Parses the exact `YYYY-MM-DDTHH:MM:SSZ` form written by [`format_ts`].
pub fn parse_ts(s: &str) -> Result<Timestamp, UnparsableTimestamp> {
    NaiveDateTime::parse_from_str(s, FORMAT)
        .map(|naive| naive.and_utc())
        .ok()
        .filter(|ts| format_ts(ts) == s)
        .ok_or_else(|| UnparsableTimestamp(s.to_string()))
}

/// `(hour, day_of_week, month)` with Monday = 0 and January = 1.
pub fn calendar_fields(ts: &Timestamp) -> (u32, u32, u32) {
    (ts.hour(), ts.weekday().num_days_from_monday(), ts.month())
}

pub fn from_unix(secs: i64) -> Timestamp {
    DateTime::from_timestamp(secs, 0).expect("timestamp in range")
}

/// Serde adapter storing a [`Timestamp`] as ISO-8601 text.
pub mod serde_ts {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_ts(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        parse_ts(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let ts = parse_ts("2025-02-14T10:30:00Z").unwrap();
        assert_eq!(format_ts(&ts), "2025-02-14T10:30:00Z");
    }

    #[test]
    fn rejects_other_spellings() {
        for bad in ["2025-02-14 10:30:00", "2025-02-14T10:30:00+00:00", "2025-2-14T10:30:00Z", "garbage"] {
            assert!(parse_ts(bad).is_err(), "{bad}");
        }
    }
}
