use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tasks::clock::Clock;
use crate::tasks::meeting::{FriendSchedule, MeetingPlan, MeetingProblem};

pub const FRIEND_RANGE: std::ops::RangeInclusive<usize> = 1..=10;
pub const TRAVEL_RANGE: std::ops::RangeInclusive<u32> = 5..=30;

const LOCATIONS: &[&str] = &[
    "Alamo Square", "Bayview", "Chinatown", "Embarcadero", "Financial District", "Fisherman's Wharf", "Golden Gate Park",
    "Haight-Ashbury", "Marina District", "Mission District", "Nob Hill", "North Beach", "Pacific Heights",
    "Presidio", "Richmond District", "Russian Hill", "Sunset District", "The Castro", "Union Square",
];

const NAMES: &[&str] = &[
    "Amanda", "Barbara", "Charles", "Daniel", "Emily", "George", "Jason", "Jessica", "Karen", "Kevin", "Laura",
    "Mark", "Mary", "Matthew", "Melissa", "Michelle", "Nancy", "Paul", "Rebecca", "Sandra", "Stephanie", "Thomas",
];

const QUARTER: u32 = 15;
const DAY_START: u32 = 9 * 60;
const LAST_WINDOW_START: u32 = 20 * 60;
const DAY_END: u32 = 22 * 60;

/// A generated meeting instance's certificate: the exact optimum and a plan
/// reaching it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeetingOptimum {
    pub optimum: u32,
    pub witness: MeetingPlan,
}

fn quarter_between(lo: u32, hi: u32, rng: &mut ChaCha8Rng) -> u32 {
    lo + QUARTER * rng.gen_range(0..=(hi - lo) / QUARTER)
}

/// A meeting instance with `n_friends` friends at distinct locations.
///
/// Travel times are drawn per unordered pair and then nudged by up to two
/// minutes per direction, always staying inside [`TRAVEL_RANGE`]. Windows
/// start on quarter hours between 9:00AM and 8:00PM and close by 10:00PM;
/// some requested meeting lengths exceed their window on purpose. The
/// optimum is exact (subset dynamic programming) and attached to the problem.
pub fn gen_meeting_instance(n_friends: usize, rng: &mut ChaCha8Rng) -> Result<(MeetingProblem, MeetingOptimum)> {
    if !FRIEND_RANGE.contains(&n_friends) {
        return Err(Error::InvalidInstance(format!(
            "friend count {n_friends} outside {FRIEND_RANGE:?}"
        )));
    }
    let places: Vec<&str> = LOCATIONS.choose_multiple(rng, n_friends + 1).copied().collect();
    let names: Vec<&str> = NAMES.choose_multiple(rng, n_friends).copied().collect();

    let mut distance_matrix: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for (i, a) in places.iter().enumerate() {
        for b in &places[i + 1..] {
            let base = rng.gen_range(TRAVEL_RANGE);
            for (from, to) in [(a, b), (b, a)] {
                let t = (base as i64 + rng.gen_range(-2..=2)).clamp(5, 30) as u32;
                distance_matrix.entry((*from).to_owned()).or_default().insert((*to).to_owned(), t);
            }
        }
    }

    let friend_schedules = names
        .iter()
        .zip(&places[1..])
        .map(|(name, place)| {
            let start = quarter_between(DAY_START, LAST_WINDOW_START, rng);
            let end = quarter_between(start + QUARTER * 4, (start + 5 * 60).min(DAY_END), rng);
            let meeting_time = QUARTER * rng.gen_range(1..=8);
            (
                (*name).to_owned(),
                FriendSchedule {
                    location: (*place).to_owned(),
                    start_time: Clock(start),
                    end_time: Clock(end),
                    meeting_time,
                },
            )
        })
        .collect();

    let mut problem = MeetingProblem {
        start_location: places[0].to_owned(),
        initial_time: Clock(DAY_START),
        friend_schedules,
        distance_matrix,
        optimum: None,
    };
    let (optimum, witness) = problem.brute_force()?;
    problem.optimum = Some(optimum);
    Ok((problem, MeetingOptimum { optimum, witness }))
}
