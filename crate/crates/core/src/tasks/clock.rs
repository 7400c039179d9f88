//! 12-hour wall-clock times with minute resolution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Minutes since midnight of the planning day. Values past 24h arise from
/// simulation and wrap when displayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Clock(pub u32);

impl Clock {
    pub fn from_hm(hour: u32, minute: u32) -> Self {
        Clock(hour * 60 + minute)
    }

    pub fn minutes(self) -> u32 {
        self.0
    }

    pub fn plus(self, minutes: u32) -> Self {
        Clock(self.0 + minutes)
    }

    fn parts(self) -> (u32, u32, &'static str) {
        let of_day = self.0 % (24 * 60);
        let (h24, m) = (of_day / 60, of_day % 60);
        let suffix = if h24 < 12 { "AM" } else { "PM" };
        let h12 = match h24 % 12 {
            0 => 12,
            h => h,
        };
        (h12, m, suffix)
    }

    /// Zero-padded hour, e.g. `06:15PM`.
    pub fn padded(self) -> String {
        let (h, m, s) = self.parts();
        format!("{h:02}:{m:02}{s}")
    }
}

/// Unpadded hour, e.g. `6:15PM`.
impl fmt::Display for Clock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (h, m, s) = self.parts();
        write!(f, "{h}:{m:02}{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{0}` is not a 12-hour time like 9:30AM")]
pub struct ClockParseError(pub String);

/// Accepts `H:MMAM` / `HH:MMpm` with one- or two-digit fields and no
/// surrounding whitespace.
impl FromStr for Clock {
    type Err = ClockParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ClockParseError(s.to_owned());
        if s.len() < 3 || !s.is_char_boundary(s.len() - 2) {
            return Err(err());
        }
        let (body, suffix) = s.split_at(s.len() - 2);
        let pm = match suffix.to_ascii_uppercase().as_str() {
            "AM" => false,
            "PM" => true,
            _ => return Err(err()),
        };
        let (h, m) = body.split_once(':').ok_or_else(err)?;
        let field = |t: &str| -> Option<u32> {
            if (1..=2).contains(&t.len()) && t.bytes().all(|b| b.is_ascii_digit()) {
                t.parse().ok()
            } else {
                None
            }
        };
        let (h, m) = (field(h).ok_or_else(err)?, field(m).ok_or_else(err)?);
        if !(1..=12).contains(&h) || m > 59 {
            return Err(err());
        }
        Ok(Clock::from_hm(h % 12 + if pm { 12 } else { 0 }, m))
    }
}

impl TryFrom<String> for Clock {
    type Error = ClockParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Clock> for String {
    fn from(c: Clock) -> String {
        c.to_string()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn parses_benchmark_times() {
        assert_eq!("9:00AM".parse::<Clock>().unwrap(), Clock::from_hm(9, 0));
        assert_eq!("12:30PM".parse::<Clock>().unwrap(), Clock::from_hm(12, 30));
        assert_eq!("12:05am".parse::<Clock>().unwrap(), Clock::from_hm(0, 5));
        assert_eq!("06:15PM".parse::<Clock>().unwrap(), Clock::from_hm(18, 15));
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "9AM", "9:00", "13:00PM", "9:60AM", "9:00 AM", " 9:00AM", "9:000AM", "ab:cdPM"] {
            assert!(bad.parse::<Clock>().is_err(), "{bad}");
        }
    }

    #[test]
    fn display_forms() {
        let t = Clock::from_hm(18, 15);
        assert_eq!(t.to_string(), "6:15PM");
        assert_eq!(t.padded(), "06:15PM");
        assert_eq!(Clock::from_hm(0, 0).to_string(), "12:00AM");
        assert_eq!(Clock::from_hm(13, 45).padded(), "01:45PM");
    }

    proptest! {
        #[test]
        fn round_trip(m in 0u32..24 * 60) {
            let c = Clock(m);
            prop_assert_eq!(c.to_string().parse::<Clock>().unwrap(), c);
            prop_assert_eq!(c.padded().parse::<Clock>().unwrap(), c);
        }
    }
}
