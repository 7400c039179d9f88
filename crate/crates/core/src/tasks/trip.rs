//! Multi-city trip itineraries with stay lengths, event windows and direct
//! flights.
//!
//! Day ranges are inclusive and consecutive segments share their flight day:
//! `Madrid (Day 3-7)` followed by `Santorini (Day 7-12)` flies on day 7, which
//! counts towards both stays. A well-posed instance therefore satisfies
//! `total_days = Σ stays − (cities − 1)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::blocks::parse_last;
use super::conversation_template;
use crate::error::{Error, Result};
use crate::eval::{wrong_plan_kind, EvaluationResult, ParseFailure, Plan, Task, TaskKind};
use crate::llm::prompt::PromptTemplate;

pub const FORMAT_PENALTY: f64 = 10.0;
pub const MAX_BRUTE_FORCE_CITIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindow {
    pub city: String,
    pub start_day: u32,
    pub end_day: u32,
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_label() -> String {
    "event".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripProblem {
    pub total_days: u32,
    pub required_stay: BTreeMap<String, u32>,
    #[serde(default)]
    pub event_windows: Vec<EventWindow>,
    /// Unordered pairs; lookups ignore orientation.
    pub flight_edges: BTreeSet<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub city: String,
    pub start_day: u32,
    pub end_day: u32,
}

impl Segment {
    pub fn new(city: &str, start_day: u32, end_day: u32) -> Self {
        Self {
            city: city.to_owned(),
            start_day,
            end_day,
        }
    }

    pub fn days(&self) -> u32 {
        self.end_day + 1 - self.start_day
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripItinerary {
    pub segments: Vec<Segment>,
}

impl TripItinerary {
    /// Lays cities out back to back from day 1 with the given stays.
    pub fn from_order(order: &[(&str, u32)]) -> Self {
        let mut day = 1;
        let segments = order
            .iter()
            .map(|&(city, stay)| {
                let seg = Segment::new(city, day, day + stay.max(1) - 1);
                day = seg.end_day;
                seg
            })
            .collect();
        Self { segments }
    }

    /// `City (Day a-b)` lines, the phrasing the parser accepts.
    pub fn render(&self) -> String {
        self.segments
            .iter()
            .map(|s| format!("{} (Day {}-{})", s.city, s.start_day, s.end_day))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// One unmet constraint.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TripViolation {
    StartDay { first_day: u32 },
    EndDay { last_day: u32, total_days: u32 },
    Gap { city: String, start_day: u32, previous_end: u32 },
    StayLength { city: String, actual: u32, required: u32 },
    Unrequired { city: String },
    Missing { city: String },
    Revisited { city: String, times: usize },
    EventMissed { city: String, label: String, start_day: u32, end_day: u32 },
    NoFlight { from: String, to: String },
}

fn plural(n: u32) -> &'static str {
    if n == 1 {
        "day"
    } else {
        "days"
    }
}

impl fmt::Display for TripViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TripViolation::*;
        match self {
            StartDay { first_day } => {
                write!(f, "The trip must start on day 1, but it starts on day {first_day}.")
            }
            EndDay { last_day, total_days } => write!(
                f,
                "The trip ends on day {last_day}: {last_day} days in total instead of {total_days}."
            ),
            Gap {
                city,
                start_day,
                previous_end,
            } => write!(
                f,
                "{city} starts on day {start_day}, but the previous city is left on day {previous_end}; \
                 the flight day must be the last day of one stay and the first day of the next."
            ),
            StayLength {
                city,
                actual,
                required,
            } => write!(f, "{actual} {} for {city} instead of {required}.", plural(*actual)),
            Unrequired { city } => write!(f, "{city} is not one of the cities to visit."),
            Missing { city } => write!(f, "{city} is never visited."),
            Revisited { city, times } => {
                write!(f, "{city} is visited {times} times; each city must be visited exactly once.")
            }
            EventMissed {
                city,
                label,
                start_day,
                end_day,
            } => write!(f, "omitted the {label} in {city} (Day {start_day}-{end_day})."),
            NoFlight { from, to } => write!(f, "no direct flight from {from} to {to}."),
        }
    }
}

impl TripProblem {
    pub fn has_flight(&self, a: &str, b: &str) -> bool {
        let (a, b) = (a.to_owned(), b.to_owned());
        self.flight_edges.contains(&(a.clone(), b.clone())) || self.flight_edges.contains(&(b, a))
    }

    pub fn city_count(&self) -> usize {
        self.required_stay.len()
    }

    /// Every violated constraint of `it`, in a stable order.
    pub fn violations(&self, it: &TripItinerary) -> Vec<TripViolation> {
        let mut out = Vec::new();
        let segs = &it.segments;

        if let Some(first) = segs.first() {
            if first.start_day != 1 {
                out.push(TripViolation::StartDay {
                    first_day: first.start_day,
                });
            }
        }
        for pair in segs.windows(2) {
            if pair[1].start_day != pair[0].end_day {
                out.push(TripViolation::Gap {
                    city: pair[1].city.clone(),
                    start_day: pair[1].start_day,
                    previous_end: pair[0].end_day,
                });
            }
        }

        let mut visits: BTreeMap<&str, Vec<&Segment>> = BTreeMap::new();
        for seg in segs {
            visits.entry(seg.city.as_str()).or_default().push(seg);
            if !self.required_stay.contains_key(&seg.city) {
                out.push(TripViolation::Unrequired {
                    city: seg.city.clone(),
                });
            }
        }
        for (city, &required) in &self.required_stay {
            match visits.get(city.as_str()).map(Vec::as_slice) {
                None => out.push(TripViolation::Missing { city: city.clone() }),
                Some([seg]) => {
                    if seg.days() != required {
                        out.push(TripViolation::StayLength {
                            city: city.clone(),
                            actual: seg.days(),
                            required,
                        });
                    }
                }
                Some(many) => out.push(TripViolation::Revisited {
                    city: city.clone(),
                    times: many.len(),
                }),
            }
        }

        for ev in &self.event_windows {
            let covered = match visits.get(ev.city.as_str()).map(Vec::as_slice) {
                Some([seg]) => seg.start_day <= ev.start_day && ev.end_day <= seg.end_day,
                _ => false,
            };
            if !covered {
                out.push(TripViolation::EventMissed {
                    city: ev.city.clone(),
                    label: ev.label.clone(),
                    start_day: ev.start_day,
                    end_day: ev.end_day,
                });
            }
        }

        for pair in segs.windows(2) {
            if !self.has_flight(&pair[0].city, &pair[1].city) {
                out.push(TripViolation::NoFlight {
                    from: pair[0].city.clone(),
                    to: pair[1].city.clone(),
                });
            }
        }

        if let Some(last) = segs.last() {
            if last.end_day != self.total_days {
                out.push(TripViolation::EndDay {
                    last_day: last.end_day,
                    total_days: self.total_days,
                });
            }
        }
        out
    }

    pub fn evaluate_itinerary(&self, it: &TripItinerary) -> EvaluationResult {
        let violations = self.violations(it);
        let score = -(violations.len() as f64);
        EvaluationResult {
            score,
            normalized: score,
            feedback: violations.iter().map(ToString::to_string).collect(),
            notes: Vec::new(),
            valid: true,
            solved: violations.is_empty(),
        }
    }

    /// Exhaustive search over city orders; stays are forced by the instance.
    /// Returns the first order satisfying every constraint.
    pub fn brute_force(&self) -> Result<Option<TripItinerary>> {
        let n = self.city_count();
        if n > MAX_BRUTE_FORCE_CITIES {
            return Err(Error::TooLarge {
                what: "cities",
                got: n,
                max: MAX_BRUTE_FORCE_CITIES,
            });
        }
        let stays: u32 = self.required_stay.values().sum();
        if n == 0 || stays + 1 != self.total_days + n as u32 {
            return Ok(None);
        }
        let cities: Vec<(&str, u32)> = self.required_stay.iter().map(|(c, &d)| (c.as_str(), d)).collect();
        let mut order = Vec::with_capacity(n);
        let mut used = vec![false; n];
        Ok(self.extend(&cities, &mut order, &mut used, 1).map(|o| {
            let it = TripItinerary::from_order(&o);
            debug_assert!(self.violations(&it).is_empty());
            it
        }))
    }

    fn extend<'a>(
        &self,
        cities: &[(&'a str, u32)],
        order: &mut Vec<(&'a str, u32)>,
        used: &mut [bool],
        day: u32,
    ) -> Option<Vec<(&'a str, u32)>> {
        if order.len() == cities.len() {
            return Some(order.clone());
        }
        for (i, &(city, stay)) in cities.iter().enumerate() {
            if used[i] || stay == 0 {
                continue;
            }
            if let Some(&(prev, _)) = order.last() {
                if !self.has_flight(prev, city) {
                    continue;
                }
            }
            let end = day + stay - 1;
            let events_ok = self
                .event_windows
                .iter()
                .filter(|e| e.city == city)
                .all(|e| day <= e.start_day && e.end_day <= end);
            if !events_ok {
                continue;
            }
            used[i] = true;
            order.push((city, stay));
            if let Some(found) = self.extend(cities, order, used, end) {
                return Some(found);
            }
            order.pop();
            used[i] = false;
        }
        None
    }

    /// The instance as a natural-language query.
    pub fn describe(&self) -> String {
        let mut s = format!(
            "You plan to visit {} European cities for {} days in total. You only take direct flights to commute between cities.",
            self.city_count(),
            self.total_days
        );
        for (city, days) in &self.required_stay {
            s.push_str(&format!(" You want to spend {days} {} in {city}.", plural(*days)));
            for ev in self.event_windows.iter().filter(|e| &e.city == city) {
                s.push_str(&format!(
                    " From day {} to day {}, there is a {} you want to attend in {city}.",
                    ev.start_day, ev.end_day, ev.label
                ));
            }
        }
        s.push_str("\n\nHere are the cities that have direct flights:\n");
        let edges: Vec<String> = self.flight_edges.iter().map(|(a, b)| format!("{a} and {b}")).collect();
        s.push_str(&edges.join(", "));
        s.push_str(&format!(
            ".\n\nFind a trip plan of visiting the cities for {} days by taking direct flights to commute between them.",
            self.total_days
        ));
        s
    }
}

fn day_range_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"([A-Z][\w'.\-]*(?: [A-Z][\w'.\-]*)*)\s*\(Days?\s*(\d+)(?:\s*(?:-|–|to)\s*(\d+))?\)")
            .expect("valid regex")
    })
}

#[derive(Deserialize)]
struct JsonSegment {
    city: String,
    #[serde(alias = "start")]
    start_day: u32,
    #[serde(alias = "end")]
    end_day: u32,
}

fn finish(segments: Vec<Segment>) -> std::result::Result<TripItinerary, ParseFailure> {
    if segments.is_empty() {
        return Err(ParseFailure::new("no itinerary segments found"));
    }
    if let Some(bad) = segments.iter().find(|s| s.start_day > s.end_day) {
        return Err(ParseFailure::new(format!(
            "{} starts on day {} after it ends on day {}",
            bad.city, bad.start_day, bad.end_day
        )));
    }
    Ok(TripItinerary { segments })
}

fn parse_block(block: &str) -> std::result::Result<TripItinerary, ParseFailure> {
    let trimmed = block.trim();
    if let (Some(a), Some(b)) = (trimmed.find('['), trimmed.rfind(']')) {
        if a < b {
            if let Ok(json) = serde_json::from_str::<Vec<JsonSegment>>(&trimmed[a..=b]) {
                return finish(
                    json.into_iter()
                        .map(|j| Segment {
                            city: j.city.trim().to_owned(),
                            start_day: j.start_day,
                            end_day: j.end_day,
                        })
                        .collect(),
                );
            }
        }
    }
    let mut segments = Vec::new();
    for cap in day_range_regex().captures_iter(trimmed) {
        let parse = |m: Option<regex::Match<'_>>| m.and_then(|m| m.as_str().parse::<u32>().ok());
        let Some(start) = parse(cap.get(2)) else {
            return Err(ParseFailure::new("day number out of range"));
        };
        let end = parse(cap.get(3)).unwrap_or(start);
        segments.push(Segment::new(cap[1].trim(), start, end));
    }
    finish(segments)
}

/// Extracts the last well-formed itinerary from generator output. Accepts a
/// JSON array of `{city, start_day, end_day}` objects or `City (Day a-b)`
/// phrases.
pub fn parse_itinerary(text: &str) -> std::result::Result<TripItinerary, ParseFailure> {
    if text.trim().is_empty() {
        return Err(ParseFailure::new("empty output"));
    }
    parse_last(text, parse_block)
}

const GENERAL: &str = "You are an expert travel planner. You will be given a trip planning request with required cities, \
stay lengths, fixed-date events and the list of direct flights. Plan an itinerary that satisfies every constraint.";

const DEFINITION: &str = "An itinerary is a sequence of cities with inclusive day ranges. You fly on the last day of one \
stay, and that day also counts as the first day of the next stay, so `A (Day 1-3)` followed by `B (Day 3-5)` spends 3 days \
in A and 3 days in B. Every city must be visited exactly once for exactly its required number of days, every event must fall \
inside the stay in its city, consecutive cities need a direct flight, and the trip must run from day 1 to the last day.";

const EXAMPLE: &str = "Q: You plan to visit 3 European cities for 7 days in total. You only take direct flights to commute \
between cities. You want to spend 3 days in Oslo. You want to spend 2 days in Vienna. From day 1 to day 2, there is a \
conference you want to attend in Vienna. You want to spend 4 days in Porto.\n\nHere are the cities that have direct \
flights:\nOslo and Porto, Oslo and Vienna.\n\nFind a trip plan of visiting the cities for 7 days by taking direct flights \
to commute between them.\n\nA:\nVienna (Day 1-2)\nOslo (Day 2-4)\nPorto (Day 4-7)";

const STRATEGY: &str = "Hints for the critic: Which events pin a city to fixed days, and what does that imply about its \
neighbours? Do the stay lengths, after subtracting the shared flight days, add up to the trip length? Which cities have \
few direct flights and therefore must sit at the start, at the end, or between specific neighbours? Is there a city order \
in which every consecutive pair is connected?";

const AUTHOR_FORMAT: &str = "Write the itinerary inside <solution> and </solution> tags, one city per line in the form \
`City (Day a-b)`, in travel order, and nothing else inside the tags.";

impl Task for TripProblem {
    fn kind(&self) -> TaskKind {
        TaskKind::Trip
    }

    fn prompt_template(&self) -> PromptTemplate {
        conversation_template(GENERAL, DEFINITION, &[EXAMPLE], &self.describe(), STRATEGY, AUTHOR_FORMAT)
    }

    fn parse(&self, raw: &str) -> std::result::Result<Plan, ParseFailure> {
        parse_itinerary(raw).map(Plan::Trip)
    }

    fn evaluate(&self, plan: &Plan) -> EvaluationResult {
        match plan {
            Plan::Trip(it) => self.evaluate_itinerary(it),
            _ => wrong_plan_kind(TaskKind::Trip, FORMAT_PENALTY, 0.0),
        }
    }

    fn format_failure(&self, failure: &ParseFailure) -> EvaluationResult {
        EvaluationResult {
            score: -FORMAT_PENALTY,
            normalized: -FORMAT_PENALTY,
            feedback: vec![format!("The itinerary could not be read: {failure}.")],
            notes: Vec::new(),
            valid: false,
            solved: false,
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::tasks::Problem;

    /// The 5-city, 16-day worked example shipped under `tests/fixtures`.
    pub fn five_city_problem() -> TripProblem {
        let text = include_str!("../../tests/fixtures/five_city_trip.json");
        match serde_json::from_str::<Problem>(text).expect("fixture parses") {
            Problem::Trip(p) => p,
            other => panic!("unexpected fixture kind {:?}", other.kind()),
        }
    }
}
