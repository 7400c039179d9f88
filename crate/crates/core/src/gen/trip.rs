use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tasks::trip::{EventWindow, TripItinerary, TripProblem};

pub const CITY_RANGE: std::ops::RangeInclusive<usize> = 3..=10;
pub const DEFAULT_DECOY_DENSITY: f64 = 0.3;
const STAY_RANGE: std::ops::RangeInclusive<u32> = 2..=7;
const MAX_EVENT_DAYS: u32 = 3;

const CITIES: &[&str] = &[
    "Amsterdam", "Athens", "Barcelona", "Berlin", "Brussels", "Bucharest", "Budapest", "Copenhagen", "Dublin",
    "Edinburgh", "Florence", "Frankfurt", "Geneva", "Hamburg", "Helsinki", "Istanbul", "Krakow", "Lisbon", "London",
    "Lyon", "Madrid", "Manchester", "Milan", "Munich", "Naples", "Nice", "Oslo", "Paris", "Porto", "Prague",
    "Reykjavik", "Riga", "Rome", "Santorini", "Seville", "Split", "Stockholm", "Tallinn", "Valencia", "Venice",
    "Vienna", "Vilnius", "Warsaw", "Zurich",
];

const EVENTS: &[&str] = &[
    "conference", "wedding", "workshop", "annual show", "festival", "relatives visit", "friends meetup", "tour",
];

/// Generation knobs for trip instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripSpec {
    pub n_cities: usize,
    /// Desired total length; clamped to what the city count allows.
    pub total_days_hint: Option<u32>,
    /// Fraction of non-witness city pairs that also get a direct flight.
    pub decoy_density: f64,
}

impl TripSpec {
    pub fn new(n_cities: usize) -> Self {
        Self {
            n_cities,
            total_days_hint: None,
            decoy_density: DEFAULT_DECOY_DENSITY,
        }
    }
}

/// Total trip length for `stays` with flight days shared.
fn total_days(stays: &[u32]) -> u32 {
    stays.iter().sum::<u32>() + 1 - stays.len() as u32
}

fn stays_for(n: usize, hint: Option<u32>, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut stays: Vec<u32> = (0..n).map(|_| rng.gen_range(STAY_RANGE)).collect();
    let Some(hint) = hint else { return stays };
    let lo = total_days(&vec![*STAY_RANGE.start(); n]);
    let hi = total_days(&vec![*STAY_RANGE.end(); n]);
    let target = hint.clamp(lo, hi);
    while total_days(&stays) != target {
        let i = rng.gen_range(0..n);
        if total_days(&stays) < target && stays[i] < *STAY_RANGE.end() {
            stays[i] += 1;
        } else if total_days(&stays) > target && stays[i] > *STAY_RANGE.start() {
            stays[i] -= 1;
        }
    }
    stays
}

fn event_in(segment: &crate::tasks::trip::Segment, rng: &mut ChaCha8Rng) -> EventWindow {
    let len = rng.gen_range(1..=segment.days().min(MAX_EVENT_DAYS));
    let start = rng.gen_range(segment.start_day..=segment.end_day + 1 - len);
    EventWindow {
        city: segment.city.clone(),
        start_day: start,
        end_day: start + len - 1,
        label: (*EVENTS.choose(rng).expect("non-empty")).to_owned(),
    }
}

/// A feasible trip instance and the itinerary it was built around.
///
/// The witness order's consecutive pairs always get flights; other pairs get
/// one with probability `decoy_density`. One or two event windows are placed
/// inside witness segments. If the reversed witness order would also be
/// feasible (flights are undirected), the first window is moved into the
/// first city, which no reversed layout can cover.
pub fn gen_trip_instance(spec: &TripSpec, rng: &mut ChaCha8Rng) -> Result<(TripProblem, TripItinerary)> {
    let n = spec.n_cities;
    if !CITY_RANGE.contains(&n) {
        return Err(Error::InvalidInstance(format!("city count {n} outside {CITY_RANGE:?}")));
    }
    if !(0.0..=1.0).contains(&spec.decoy_density) {
        return Err(Error::InvalidInstance(format!(
            "decoy density {} outside [0, 1]",
            spec.decoy_density
        )));
    }
    let cities: Vec<&str> = CITIES.choose_multiple(rng, n).copied().collect();
    let stays = stays_for(n, spec.total_days_hint, rng);
    let order: Vec<(&str, u32)> = cities.iter().copied().zip(stays.iter().copied()).collect();
    let witness = TripItinerary::from_order(&order);

    let mut flight_edges = BTreeSet::new();
    let edge = |a: &str, b: &str| {
        if a < b {
            (a.to_owned(), b.to_owned())
        } else {
            (b.to_owned(), a.to_owned())
        }
    };
    for pair in cities.windows(2) {
        flight_edges.insert(edge(pair[0], pair[1]));
    }
    for i in 0..n {
        for j in i + 1..n {
            if j != i + 1 && rng.gen_bool(spec.decoy_density) {
                flight_edges.insert(edge(cities[i], cities[j]));
            }
        }
    }

    let n_events = rng.gen_range(1..=2).min(n);
    let mut picks: Vec<usize> = (0..n).collect();
    picks.shuffle(rng);
    let event_windows = picks[..n_events]
        .iter()
        .map(|&i| event_in(&witness.segments[i], rng))
        .collect();

    let mut problem = TripProblem {
        total_days: total_days(&stays),
        required_stay: order.iter().map(|&(c, s)| (c.to_owned(), s)).collect(),
        event_windows,
        flight_edges,
    };
    let mut reversed = order.clone();
    reversed.reverse();
    if problem.violations(&TripItinerary::from_order(&reversed)).is_empty() {
        problem.event_windows[0] = event_in(&witness.segments[0], rng);
    }
    debug_assert!(problem.violations(&witness).is_empty());
    Ok((problem, witness))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn hint_sets_the_total() {
        let spec = TripSpec {
            total_days_hint: Some(16),
            ..TripSpec::new(5)
        };
        for seed in 0..20 {
            let (p, w) = gen_trip_instance(&spec, &mut rng(seed)).unwrap();
            assert_eq!(p.total_days, 16);
            assert!(p.violations(&w).is_empty());
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(gen_trip_instance(&TripSpec::new(2), &mut rng(0)).is_err());
        assert!(gen_trip_instance(&TripSpec::new(11), &mut rng(0)).is_err());
        let spec = TripSpec {
            decoy_density: 1.5,
            ..TripSpec::new(4)
        };
        assert!(gen_trip_instance(&spec, &mut rng(0)).is_err());
    }

    #[test]
    fn windows_lie_inside_the_trip() {
        for seed in 0..50 {
            let (p, _) = gen_trip_instance(&TripSpec::new(3 + (seed as usize % 8)), &mut rng(seed)).unwrap();
            assert!(!p.event_windows.is_empty());
            for e in &p.event_windows {
                assert!(1 <= e.start_day && e.start_day <= e.end_day && e.end_day <= p.total_days);
            }
        }
    }
}
