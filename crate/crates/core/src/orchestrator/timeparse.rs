//! Time expressions inside note content.
//!
//! Recognized: `H:MM AM/PM` (also `a.m.`), 24h `HH:MM`, and ISO dates
//! `YYYY-MM-DD`. The first time and the first valid date, each scanning left
//! to right, are combined; a date without a time yields nothing. At the same
//! position the 12h reading wins over the 24h one.

use std::sync::LazyLock;

use chrono::{NaiveDate, NaiveTime};
use regex::Regex;

static TIME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:(1[0-2]|0?[1-9]):([0-5]\d)\s*([ap])\.?m\b\.?|([01]?\d|2[0-3]):([0-5]\d))(?:\b|$)").unwrap()
});
static DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d{4})-(\d{2})-(\d{2})\b").unwrap());

pub fn find_time(content: &str) -> Option<NaiveTime> {
    let c = TIME.captures(content)?;
    if let (Some(h), Some(m), Some(ap)) = (c.get(1), c.get(2), c.get(3)) {
        let h: u32 = h.as_str().parse().ok()?;
        let m: u32 = m.as_str().parse().ok()?;
        let pm = ap.as_str().eq_ignore_ascii_case("p");
        let h24 = match (h, pm) {
            (12, false) => 0,
            (12, true) => 12,
            (h, true) => h + 12,
            (h, false) => h,
        };
        return NaiveTime::from_hms_opt(h24, m, 0);
    }
    let h: u32 = c.get(4)?.as_str().parse().ok()?;
    let m: u32 = c.get(5)?.as_str().parse().ok()?;
    NaiveTime::from_hms_opt(h, m, 0)
}

pub fn find_date(content: &str) -> Option<NaiveDate> {
    DATE.captures_iter(content)
        .find_map(|c| NaiveDate::from_ymd_opt(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?))
}

pub fn extract_time(content: &str, header_date: NaiveDate) -> Option<(NaiveDate, NaiveTime)> {
    let time = find_time(content)?;
    Some((find_date(content).unwrap_or(header_date), time))
}
