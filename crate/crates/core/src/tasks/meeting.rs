//! One-day meeting schedules: simulate a step list against friends'
//! availability windows and a travel-time matrix.
//!
//! Scoring: +1 per valid meeting, −2 per schedule mismatch, repeated meeting,
//! unparseable or backwards wait, and −10 per step that cannot be
//! interpreted at all. Steps are processed independently, so one step can
//! incur several penalties (an unparseable wait costs −2 and then −10).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::blocks::parse_last;
use super::clock::Clock;
use super::conversation_template;
use crate::error::{Error, Result};
use crate::eval::{wrong_plan_kind, EvaluationResult, ParseFailure, Plan, Task, TaskKind};
use crate::llm::prompt::PromptTemplate;

pub const FORMAT_PENALTY: f64 = 10.0;
pub const VIOLATION_PENALTY: f64 = 2.0;
pub const MAX_BRUTE_FORCE_FRIENDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendSchedule {
    pub location: String,
    pub start_time: Clock,
    pub end_time: Clock,
    /// Minimum meeting length in minutes.
    pub meeting_time: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingProblem {
    pub start_location: String,
    pub initial_time: Clock,
    pub friend_schedules: BTreeMap<String, FriendSchedule>,
    /// `distance_matrix[from][to]` in minutes.
    pub distance_matrix: BTreeMap<String, BTreeMap<String, u32>>,
    /// Maximum number of friends that can be met, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimum: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingPlan {
    pub steps: Vec<String>,
}

impl MeetingPlan {
    pub fn new<S: Into<String>>(steps: impl IntoIterator<Item = S>) -> Self {
        Self {
            steps: steps.into_iter().map(Into::into).collect(),
        }
    }

    /// A list literal of quoted step strings.
    pub fn render(&self) -> String {
        let items: Vec<String> = self
            .steps
            .iter()
            .map(|s| {
                if s.contains('\'') {
                    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
                } else {
                    format!("'{}'", s.replace('\\', "\\\\"))
                }
            })
            .collect();
        format!("[{}]", items.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    TimeFormat,
    BackwardsWait,
    RepeatedMeeting,
    ScheduleMismatch,
    StepFormat,
}

impl IssueKind {
    pub fn penalty(self) -> f64 {
        match self {
            IssueKind::StepFormat => FORMAT_PENALTY,
            _ => VIOLATION_PENALTY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub step: usize,
    pub message: String,
}

/// Result of running a plan through the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub score: i64,
    pub issues: Vec<Issue>,
    /// Friends with at least one `meet` step (valid or not).
    pub met_with: BTreeSet<String>,
    pub valid_meetings: u32,
}

impl Simulation {
    pub fn unmet<'a>(&self, problem: &'a MeetingProblem) -> Vec<&'a str> {
        problem
            .friend_schedules
            .keys()
            .filter(|name| !self.met_with.contains(name.as_str()))
            .map(String::as_str)
            .collect()
    }
}

/// Stepwise failure inside one step; mirrors an exception escaping the step.
struct StepFault;

fn after<'a>(text: &'a str, marker: &str) -> std::result::Result<&'a str, StepFault> {
    text.split_once(marker).map(|(_, rest)| rest).ok_or(StepFault)
}

fn before<'a>(text: &'a str, marker: &str) -> &'a str {
    text.split_once(marker).map_or(text, |(head, _)| head)
}

fn join_names(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => (*one).to_owned(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

impl MeetingProblem {
    pub fn friend_count(&self) -> usize {
        self.friend_schedules.len()
    }

    pub fn travel_time(&self, from: &str, to: &str) -> Option<u32> {
        self.distance_matrix.get(from)?.get(to).copied()
    }

    pub fn simulate(&self, plan: &MeetingPlan) -> Simulation {
        let mut sim = Simulation {
            score: 0,
            issues: Vec::new(),
            met_with: BTreeSet::new(),
            valid_meetings: 0,
        };
        let mut location = self.start_location.clone();
        let mut time = self.initial_time;

        for (index, step) in plan.steps.iter().enumerate() {
            let issue = |sim: &mut Simulation, kind: IssueKind, reason: String| {
                sim.score -= kind.penalty() as i64;
                sim.issues.push(Issue {
                    kind,
                    step: index,
                    message: format!("\"{step}\" is invalid because {reason}."),
                });
            };
            let outcome: std::result::Result<(), StepFault> = (|| {
                if step.starts_with("You start") {
                    Ok(())
                } else if step.starts_with("You travel") {
                    let destination = before(after(step, "travel to ")?, " in").trim();
                    let minutes = self.travel_time(&location, destination).ok_or(StepFault)?;
                    time = time.plus(minutes);
                    location = destination.to_owned();
                    Ok(())
                } else if step.starts_with("You wait") {
                    let raw = before(after(step, "wait until ")?, ".").trim();
                    let Ok(target) = raw.parse::<Clock>() else {
                        issue(
                            &mut sim,
                            IssueKind::TimeFormat,
                            "the time format doesn't follow the examples".to_owned(),
                        );
                        // comparing with the missing time fails
                        return Err(StepFault);
                    };
                    if target <= time {
                        issue(
                            &mut sim,
                            IssueKind::BackwardsWait,
                            format!(
                                "the previous step already ends at {} and you cannot go backwards in time",
                                target.padded()
                            ),
                        );
                    }
                    time = target;
                    Ok(())
                } else if step.starts_with("You meet") {
                    let person = before(after(step, "meet ")?, " for").trim();
                    if sim.met_with.contains(person) {
                        issue(
                            &mut sim,
                            IssueKind::RepeatedMeeting,
                            format!("you would be meeting with {person} more than once"),
                        );
                    }
                    sim.met_with.insert(person.to_owned());
                    let friend = self.friend_schedules.get(person).ok_or(StepFault)?;
                    let finish = time.plus(friend.meeting_time);
                    if location == friend.location && time >= friend.start_time && finish <= friend.end_time {
                        sim.score += 1;
                        sim.valid_meetings += 1;
                        time = finish;
                    } else {
                        issue(
                            &mut sim,
                            IssueKind::ScheduleMismatch,
                            format!(
                                "it doesn't match the schedule of {person}, who will be at {} from {} to {}",
                                friend.location,
                                friend.start_time.padded(),
                                friend.end_time.padded()
                            ),
                        );
                    }
                    Ok(())
                } else {
                    Err(StepFault)
                }
            })();
            if outcome.is_err() {
                issue(
                    &mut sim,
                    IssueKind::StepFormat,
                    "the format doesn't follow the examples".to_owned(),
                );
            }
        }
        sim
    }

    pub fn evaluate_plan(&self, plan: &MeetingPlan) -> EvaluationResult {
        let sim = self.simulate(plan);
        let score = sim.score as f64;
        let unmet = sim.unmet(self);
        let notes = if unmet.is_empty() {
            Vec::new()
        } else {
            vec![format!("Not meeting with {}.", join_names(&unmet))]
        };
        EvaluationResult {
            score,
            normalized: score - self.normalizer(),
            feedback: sim.issues.into_iter().map(|i| i.message).collect(),
            notes,
            valid: true,
            solved: self.optimum.is_some_and(|o| score == o as f64),
        }
    }

    fn normalizer(&self) -> f64 {
        self.optimum.map_or(self.friend_count() as f64, f64::from)
    }

    /// Maximum number of meetings and a witness plan achieving it.
    ///
    /// Dynamic programming over (friends met, last friend) keeping the
    /// earliest finishing time, which dominates any later one.
    pub fn brute_force(&self) -> Result<(u32, MeetingPlan)> {
        let names: Vec<&String> = self.friend_schedules.keys().collect();
        let n = names.len();
        if n > MAX_BRUTE_FORCE_FRIENDS {
            return Err(Error::TooLarge {
                what: "friends",
                got: n,
                max: MAX_BRUTE_FORCE_FRIENDS,
            });
        }
        let friends: Vec<&FriendSchedule> = names.iter().map(|n| &self.friend_schedules[*n]).collect();
        let travel = |from: &str, to: &str| -> Option<u32> {
            if from == to {
                Some(0)
            } else {
                self.travel_time(from, to)
            }
        };
        // earliest meeting start when arriving at `arrive`
        let slot = |f: &FriendSchedule, arrive: Clock| -> Option<Clock> {
            let start = arrive.max(f.start_time);
            (start.plus(f.meeting_time) <= f.end_time).then_some(start)
        };

        let states = 1usize << n;
        let mut finish: Vec<Vec<Option<Clock>>> = vec![vec![None; n]; states];
        let mut parent: Vec<Vec<Option<usize>>> = vec![vec![None; n]; states];
        for (j, f) in friends.iter().enumerate() {
            let Some(t) = travel(&self.start_location, &f.location) else { continue };
            if let Some(start) = slot(f, self.initial_time.plus(t)) {
                finish[1 << j][j] = Some(start.plus(f.meeting_time));
            }
        }
        let mut best: (u32, usize, usize) = (0, 0, 0);
        for mask in 1..states {
            for last in 0..n {
                let Some(done) = finish[mask][last] else { continue };
                let count = mask.count_ones();
                if count > best.0 {
                    best = (count, mask, last);
                }
                for (j, f) in friends.iter().enumerate() {
                    if mask & (1 << j) != 0 {
                        continue;
                    }
                    let Some(t) = travel(&friends[last].location, &f.location) else { continue };
                    let Some(start) = slot(f, done.plus(t)) else { continue };
                    let end = start.plus(f.meeting_time);
                    let next = mask | (1 << j);
                    if finish[next][j].is_none_or(|e| end < e) {
                        finish[next][j] = Some(end);
                        parent[next][j] = Some(last);
                    }
                }
            }
        }

        let mut order = Vec::new();
        if best.0 > 0 {
            let (mut mask, mut last) = (best.1, best.2);
            loop {
                order.push(last);
                match parent[mask][last] {
                    Some(p) => {
                        mask &= !(1 << last);
                        last = p;
                    }
                    None => break,
                }
            }
            order.reverse();
        }
        let order: Vec<&str> = order.iter().map(|&i| names[i].as_str()).collect();
        let plan = self.schedule(&order);
        Ok((best.0, plan))
    }

    /// Renders `order` with earliest timing: travel when the location
    /// changes, wait only when strictly needed, then meet. Meetings that
    /// do not fit are still rendered, so the evaluator reports them.
    pub fn schedule(&self, order: &[&str]) -> MeetingPlan {
        let mut steps = vec![format!("You start at {} at {}", self.start_location, self.initial_time)];
        let mut location = self.start_location.as_str();
        let mut time = self.initial_time;
        for &name in order {
            let Some(f) = self.friend_schedules.get(name) else { continue };
            if f.location != location {
                let Some(t) = self.travel_time(location, &f.location) else { continue };
                time = time.plus(t);
                location = &f.location;
                steps.push(format!("You travel to {location} in {t} minutes and arrive at {time}"));
            }
            if f.start_time > time {
                time = f.start_time;
                steps.push(format!("You wait until {time}"));
            }
            let end = time.plus(f.meeting_time);
            steps.push(format!(
                "You meet {name} for {} minutes from {time} to {end}",
                f.meeting_time
            ));
            time = end;
        }
        MeetingPlan { steps }
    }

    pub fn describe(&self) -> String {
        let mut s = String::from(
            "You are visiting San Francisco for the day and want to meet as many friends as possible. \
             Solve the problem by considering various different schedules and picking the best one to optimize your goals.\n\n\
             Travel distances (in minutes):\n\n",
        );
        let mut pairs = Vec::new();
        for (from, row) in &self.distance_matrix {
            for (to, minutes) in row {
                pairs.push(format!("{from} to {to}: {minutes}."));
            }
        }
        s.push_str(&pairs.join(" "));
        s.push_str(&format!(
            "\n\nCONSTRAINTS:\n\nYou arrive at {} at {}.",
            self.start_location, self.initial_time
        ));
        for (name, f) in &self.friend_schedules {
            s.push_str(&format!(
                " {name} will be at {} from {} to {}. You'd like to meet {name} for a minimum of {} minutes.",
                f.location, f.start_time, f.end_time, f.meeting_time
            ));
        }
        s
    }
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IssueKind::TimeFormat => "time format",
            IssueKind::BackwardsWait => "backwards wait",
            IssueKind::RepeatedMeeting => "repeated meeting",
            IssueKind::ScheduleMismatch => "schedule mismatch",
            IssueKind::StepFormat => "step format",
        })
    }
}

/// Parses one quoted string starting at `s[0]`; returns it and the rest.
fn quoted(s: &str) -> Option<(String, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let mut out = String::new();
    let mut chars = s[1..].char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                let (_, next) = chars.next()?;
                out.push(next);
            }
            c if c == quote => return Some((out, &s[1 + i + 1..])),
            c => out.push(c),
        }
    }
    None
}

/// Parses a list literal starting at `s[0] == '['`; returns it and the rest.
fn list_at(s: &str) -> Option<(Vec<String>, &str)> {
    let mut rest = s.strip_prefix('[')?.trim_start();
    let mut items = Vec::new();
    if let Some(after) = rest.strip_prefix(']') {
        return Some((items, after));
    }
    loop {
        let (item, after) = quoted(rest)?;
        items.push(item);
        rest = after.trim_start();
        if let Some(after) = rest.strip_prefix(',') {
            rest = after.trim_start();
            // trailing comma
            if let Some(after) = rest.strip_prefix(']') {
                return Some((items, after));
            }
        } else {
            let after = rest.strip_prefix(']')?;
            return Some((items, after));
        }
    }
}

fn parse_block(block: &str) -> std::result::Result<MeetingPlan, ParseFailure> {
    let mut found = None;
    let mut offset = 0;
    while let Some(pos) = block[offset..].find('[') {
        let start = offset + pos;
        match list_at(&block[start..]) {
            Some((items, rest)) => {
                found = Some(items);
                offset = block.len() - rest.len();
            }
            None => offset = start + 1,
        }
    }
    found
        .map(|steps| MeetingPlan { steps })
        .ok_or_else(|| ParseFailure::new("the plan is not a list of step strings"))
}

/// Extracts the last list-of-strings literal from generator output.
pub fn parse_meeting_plan(text: &str) -> std::result::Result<MeetingPlan, ParseFailure> {
    parse_last(text, parse_block)
}

const GENERAL: &str = "You are an expert at scheduling meetings. You will be given a set of friends with the places and \
times they are available, and travel times between places. Plan a day that meets as many friends as possible.";

const DEFINITION: &str = "A plan is a list of steps. Each step is one of: `You start at PLACE at TIME`, `You travel to PLACE \
in N minutes and arrive at TIME`, `You wait until TIME`, `You meet NAME for N minutes from TIME to TIME`. Times use the \
12-hour form such as 9:30AM. A meeting counts only if you are at the friend's place, the meeting starts no earlier than \
the friend arrives, and lasts at least the requested minutes without running past the friend's departure. Waiting can only \
move time forward, and each friend can be met at most once.";

const EXAMPLE: &str = "Q: Travel distances (in minutes): Nob Hill to Marina District: 11. Marina District to Nob Hill: 12.\n\n\
CONSTRAINTS: You arrive at Nob Hill at 9:00AM. Joshua will be at Marina District from 10:00AM to 11:30AM. You'd like to \
meet Joshua for a minimum of 60 minutes.\n\nA: ['You start at Nob Hill at 9:00AM', 'You travel to Marina District in 11 \
minutes and arrive at 9:11AM', 'You wait until 10:00AM', 'You meet Joshua for 60 minutes from 10:00AM to 11:00AM']";

const STRATEGY: &str = "Hints for the critic: Which friends have windows that overlap or conflict? Which meetings can be \
chained given the travel times, and which friend should be dropped when two windows cannot both be honoured? Are all \
arrival times, waits and meeting end times computed correctly from the previous step? Is there an order that fits one \
more friend?";

const AUTHOR_FORMAT: &str = "Write the plan inside <solution> and </solution> tags as a single Python-style list of step \
strings, for example ['You start at ...', 'You travel to ...'], and nothing else inside the tags.";

impl Task for MeetingProblem {
    fn kind(&self) -> TaskKind {
        TaskKind::Meeting
    }

    fn prompt_template(&self) -> PromptTemplate {
        conversation_template(GENERAL, DEFINITION, &[EXAMPLE], &self.describe(), STRATEGY, AUTHOR_FORMAT)
    }

    fn parse(&self, raw: &str) -> std::result::Result<Plan, ParseFailure> {
        parse_meeting_plan(raw).map(Plan::Meeting)
    }

    fn evaluate(&self, plan: &Plan) -> EvaluationResult {
        match plan {
            Plan::Meeting(p) => self.evaluate_plan(p),
            _ => wrong_plan_kind(TaskKind::Meeting, FORMAT_PENALTY, self.normalizer()),
        }
    }

    fn format_failure(&self, failure: &ParseFailure) -> EvaluationResult {
        EvaluationResult {
            score: -FORMAT_PENALTY,
            normalized: -FORMAT_PENALTY - self.normalizer(),
            feedback: vec![format!("The plan could not be read: {failure}.")],
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

    /// The five-friend example shipped under `tests/fixtures`.
    pub fn five_friend_problem() -> MeetingProblem {
        let text = include_str!("../../tests/fixtures/five_friend_meeting.json");
        match serde_json::from_str::<Problem>(text).expect("fixture parses") {
            Problem::Meeting(p) => p,
            other => panic!("unexpected fixture kind {:?}", other.kind()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::five_friend_problem;
    use super::*;

    fn tiny() -> MeetingProblem {
        let mut matrix = BTreeMap::new();
        matrix.insert("A".to_owned(), [("B".to_owned(), 10)].into_iter().collect());
        matrix.insert("B".to_owned(), [("A".to_owned(), 10)].into_iter().collect());
        MeetingProblem {
            start_location: "A".into(),
            initial_time: Clock::from_hm(9, 0),
            friend_schedules: [(
                "Ann".to_owned(),
                FriendSchedule {
                    location: "A".into(),
                    start_time: Clock::from_hm(9, 0),
                    end_time: Clock::from_hm(10, 0),
                    meeting_time: 30,
                },
            )]
            .into_iter()
            .collect(),
            distance_matrix: matrix,
            optimum: None,
        }
    }

    fn run(p: &MeetingProblem, steps: &[&str]) -> Simulation {
        p.simulate(&MeetingPlan::new(steps.iter().copied()))
    }

    #[test]
    fn empty_plan_is_vacuous() {
        let r = tiny().evaluate_plan(&MeetingPlan::new(Vec::<String>::new()));
        assert_eq!(r.score, 0.0);
        assert!(r.feedback.is_empty());
        assert_eq!(r.notes, vec!["Not meeting with Ann."]);
    }

    #[test]
    fn hand_traces() {
        let p = tiny();
        let s = run(&p, &["You start at A at 9:00AM", "You meet Ann for 30 minutes from 9:00AM to 9:30AM"]);
        assert_eq!((s.score, s.issues.len()), (1, 0));

        // repeat: −2 for the repeat, then the meeting itself still fits
        let s = run(&p, &["You meet Ann for 30 minutes", "You meet Ann for 30 minutes"]);
        assert_eq!(s.score, 1 - 2 + 1);
        assert_eq!(s.issues[0].kind, IssueKind::RepeatedMeeting);

        // unknown person: repeat check passes, lookup faults
        let s = run(&p, &["You meet Bob for 30 minutes"]);
        assert_eq!(s.score, -10);
        assert_eq!(s.issues[0].kind, IssueKind::StepFormat);

        // unparseable wait: −2 then −10, cursor unchanged
        let s = run(&p, &["You wait until noon.", "You meet Ann for 30 minutes"]);
        assert_eq!(s.score, -2 - 10 + 1);
        let kinds: Vec<_> = s.issues.iter().map(|i| i.kind).collect();
        assert_eq!(kinds, vec![IssueKind::TimeFormat, IssueKind::StepFormat]);

        // backwards wait still moves the cursor
        let s = run(&p, &["You wait until 8:00AM.", "You meet Ann for 30 minutes"]);
        assert_eq!(s.score, -2 - 2);
        assert!(s.issues[0].message.contains("already ends at 08:00AM"));
        assert_eq!(s.issues[1].kind, IssueKind::ScheduleMismatch);

        // travel to an unknown place and free text
        let s = run(&p, &["You travel to Mars in 5 minutes", "Have lunch."]);
        assert_eq!(s.score, -20);
    }

    #[test]
    fn parse_list_literals() {
        let p = parse_meeting_plan(r#"Plan: ['a', "it's", 'c\'d']"#).unwrap();
        assert_eq!(p.steps, vec!["a", "it's", "c'd"]);
        let p = parse_meeting_plan("['x'] then [1, 2] and finally ['y', 'z',]").unwrap();
        assert_eq!(p.steps, vec!["y", "z"]);
        assert!(parse_meeting_plan("no list here").is_err());
        assert!(parse_meeting_plan("[1, 2]").is_err());
        assert_eq!(parse_meeting_plan("[]").unwrap().steps, Vec::<String>::new());
        let plan = MeetingPlan::new(["You start", "it's"]);
        assert_eq!(parse_meeting_plan(&plan.render()).unwrap(), plan);
    }

    #[test]
    fn format_failure_penalty() {
        let r = tiny().evaluate_raw("I cannot do this");
        assert_eq!(r.score, -10.0);
        assert!(!r.valid);
    }

    #[test]
    fn oracle_small_cases() {
        let p = tiny();
        let (best, plan) = p.brute_force().unwrap();
        assert_eq!(best, 1);
        let r = p.evaluate_plan(&plan);
        assert_eq!(r.score, 1.0);
        assert!(r.feedback.is_empty());
        assert_eq!(plan.steps.len(), 2, "no travel or wait needed: {plan:?}");

        let mut short = tiny();
        short.friend_schedules.get_mut("Ann").unwrap().meeting_time = 90;
        assert_eq!(short.brute_force().unwrap().0, 0);
    }

    #[test]
    fn oracle_on_five_friends() {
        let p = five_friend_problem();
        let (best, plan) = p.brute_force().unwrap();
        assert_eq!(best, 4);
        let r = p.evaluate_plan(&plan);
        assert_eq!(r.score, 4.0);
        assert!(r.feedback.is_empty());
    }

    #[test]
    fn too_many_friends_refused() {
        let mut p = tiny();
        for i in 0..11 {
            p.friend_schedules.insert(format!("F{i}"), p.friend_schedules["Ann"].clone());
        }
        assert!(matches!(p.brute_force(), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn solved_needs_an_attached_optimum() {
        let mut p = tiny();
        let plan = p.brute_force().unwrap().1;
        assert!(!p.evaluate_plan(&plan).solved);
        p.optimum = Some(1);
        let r = p.evaluate_plan(&plan);
        assert!(r.solved);
        assert_eq!(r.normalized, 0.0);
    }
}
