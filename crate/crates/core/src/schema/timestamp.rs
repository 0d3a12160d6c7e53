use chrono::{DateTime, FixedOffset, NaiveDate, NaiveDateTime};

/// A parsed ISO 8601 value at its stated precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsoTimestamp {
    Date(NaiveDate),
    DateTime(NaiveDateTime),
    Zoned(DateTime<FixedOffset>),
}

const NAIVE_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M"];

impl IsoTimestamp {
    pub fn parse(s: &str) -> Option<IsoTimestamp> {
        let s = s.trim();
        if s.len() == 10 {
            return NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .map(IsoTimestamp::Date);
        }
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Some(IsoTimestamp::Zoned(dt));
        }
        // rfc3339 requires seconds; accept HH:MM with an offset too.
        let zulu = s.strip_suffix('Z').map(|p| format!("{p}+00:00"));
        if let Ok(dt) = DateTime::parse_from_str(zulu.as_deref().unwrap_or(s), "%Y-%m-%dT%H:%M%:z") {
            return Some(IsoTimestamp::Zoned(dt));
        }
        NAIVE_FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
            .map(IsoTimestamp::DateTime)
    }

    pub fn date(&self) -> NaiveDate {
        match self {
            IsoTimestamp::Date(d) => *d,
            IsoTimestamp::DateTime(dt) => dt.date(),
            IsoTimestamp::Zoned(dt) => dt.date_naive(),
        }
    }

    pub fn is_date_only(&self) -> bool {
        matches!(self, IsoTimestamp::Date(_))
    }

    /// Ordering between two full datetimes; `None` when either is date-only
    /// or when one is zoned and the other is not.
    pub fn compare_full(&self, other: &IsoTimestamp) -> Option<std::cmp::Ordering> {
        match (self, other) {
            (IsoTimestamp::DateTime(a), IsoTimestamp::DateTime(b)) => Some(a.cmp(b)),
            (IsoTimestamp::Zoned(a), IsoTimestamp::Zoned(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_iso_forms() {
        assert!(matches!(IsoTimestamp::parse("2023-07-01"), Some(IsoTimestamp::Date(_))));
        assert!(matches!(
            IsoTimestamp::parse("2023-07-01T14:30:00-04:00"),
            Some(IsoTimestamp::Zoned(_))
        ));
        assert!(matches!(
            IsoTimestamp::parse("2023-07-01T14:30Z"),
            Some(IsoTimestamp::Zoned(_))
        ));
        assert!(matches!(
            IsoTimestamp::parse("2023-07-01T14:30:00"),
            Some(IsoTimestamp::DateTime(_))
        ));
    }

    #[test]
    fn rejects_non_iso() {
        assert_eq!(IsoTimestamp::parse("13/45/2020"), None);
        assert_eq!(IsoTimestamp::parse("2023-02-30"), None);
        assert_eq!(IsoTimestamp::parse("July 1, 2023"), None);
    }
}
