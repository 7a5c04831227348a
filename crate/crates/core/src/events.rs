//! Event extraction from raw tracking through possession chains.
//!
//! Possession spans are read off the per-frame `has_ball` flags. Consecutive
//! spans of different entities become pass/reception or
//! turnover/interception pairs, unless the release qualifies as a shot or a
//! dead-ball condition lies between them.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use crate::fsutil;
use crate::schema::{EntityId, Match, Role, Team};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventType {
    Pass,
    Turnover,
    Shot,
    Reception,
    Interception,
    Goal,
    OutOfPlay,
}

impl EventType {
    pub fn code(self) -> &'static str {
        match self {
            EventType::Pass => "PASS",
            EventType::Turnover => "TURNOVER",
            EventType::Shot => "SHOT",
            EventType::Reception => "RECEPTION",
            EventType::Interception => "INTERCEPTION",
            EventType::Goal => "GOAL",
            EventType::OutOfPlay => "OUT_OF_PLAY",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShotOutcome {
    Goal,
    OutBeyondGoalLine,
    KeeperPossession,
}

impl ShotOutcome {
    pub fn code(self) -> &'static str {
        match self {
            ShotOutcome::Goal => "GOAL",
            ShotOutcome::OutBeyondGoalLine => "OUT_BEYOND_GOAL_LINE",
            ShotOutcome::KeeperPossession => "KEEPER_POSSESSION",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub event_type: EventType,
    pub frame: usize,
    pub actor: EntityId,
    pub actor_team: Team,
    /// Counterpart of a transition: the receiver or interceptor for a
    /// pass/turnover, the releasing player for a reception/interception.
    pub target: Option<EntityId>,
    pub x: f64,
    pub y: f64,
    /// Present iff `event_type` is `Shot`.
    pub outcome: Option<ShotOutcome>,
    /// Frame of the other half of a pass/reception or turnover/interception pair.
    pub paired_frame: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PossessionSpan {
    pub entity: EntityId,
    pub team: Team,
    pub role: Role,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Possessor location at `start_frame` and `end_frame`.
    pub start_pos: (f64, f64),
    pub end_pos: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventParams {
    /// Longest possessor-less gap, in frames, that still links two spans.
    pub flight_gap_max: usize,
    /// Frames after a release within which a shot outcome must occur.
    pub shot_window_max: usize,
    /// Per-frame displacement above which entities are deemed teleported.
    pub teleport_threshold: f64,
}

impl Default for EventParams {
    fn default() -> Self {
        EventParams {
            flight_gap_max: 25,
            shot_window_max: 30,
            teleport_threshold: 5.0,
        }
    }
}

/// Frames on which play is dead: the ball is off the pitch, or some entity
/// jumped further than `teleport_threshold` since the previous frame.
pub fn dead_ball_mask(m: &Match, teleport_threshold: f64) -> Vec<bool> {
    (0..m.frames.len())
        .map(|t| {
            let out = m.frames[t]
                .ball()
                .is_some_and(|b| !m.pitch.contains(b.x, b.y));
            out || m.max_displacement(t) > teleport_threshold
        })
        .collect()
}

fn any_dead(mask: &[bool], after: usize, upto: usize) -> bool {
    mask.get(after + 1..=upto).is_some_and(|s| s.iter().any(|&d| d))
}

pub fn possession_spans(m: &Match, params: &EventParams) -> Vec<PossessionSpan> {
    let dead = dead_ball_mask(m, params.teleport_threshold);
    let mut spans: Vec<PossessionSpan> = Vec::new();
    for (t, frame) in m.frames.iter().enumerate() {
        let Some(p) = frame.possessor() else { continue };
        if let Some(last) = spans.last_mut() {
            let gap = t - last.end_frame - 1;
            if last.entity == p.entity_id && gap <= params.flight_gap_max && !any_dead(&dead, last.end_frame, t) {
                last.end_frame = t;
                last.end_pos = p.position();
                continue;
            }
        }
        spans.push(PossessionSpan {
            entity: p.entity_id.clone(),
            team: p.team,
            role: p.role,
            start_frame: t,
            end_frame: t,
            start_pos: p.position(),
            end_pos: p.position(),
        });
    }
    spans
}

/// Which consecutive span pairs may be labeled as transitions.
#[derive(Debug, Clone, Copy)]
pub struct TransitionFilter<'a> {
    pub flight_gap_max: usize,
    /// Dead-ball mask over frames; a pair whose gap contains a dead frame is skipped.
    pub dead: &'a [bool],
    /// Indices of spans whose release was a shot.
    pub shot_releases: &'a HashSet<usize>,
}

pub fn extract_transitions(spans: &[PossessionSpan], filter: &TransitionFilter<'_>) -> Vec<Event> {
    let mut out = Vec::new();
    for (i, pair) in spans.windows(2).enumerate() {
        let (from, to) = (&pair[0], &pair[1]);
        if from.entity == to.entity || filter.shot_releases.contains(&i) {
            continue;
        }
        let gap = to.start_frame - from.end_frame - 1;
        if gap > filter.flight_gap_max || any_dead(filter.dead, from.end_frame, to.start_frame) {
            continue;
        }
        let (release, gain) = if from.team == to.team {
            (EventType::Pass, EventType::Reception)
        } else {
            (EventType::Turnover, EventType::Interception)
        };
        out.push(Event {
            event_type: release,
            frame: from.end_frame,
            actor: from.entity.clone(),
            actor_team: from.team,
            target: Some(to.entity.clone()),
            x: from.end_pos.0,
            y: from.end_pos.1,
            outcome: None,
            paired_frame: Some(to.start_frame),
        });
        out.push(Event {
            event_type: gain,
            frame: to.start_frame,
            actor: to.entity.clone(),
            actor_team: to.team,
            target: Some(from.entity.clone()),
            x: to.start_pos.0,
            y: to.start_pos.1,
            outcome: None,
            paired_frame: Some(from.end_frame),
        });
    }
    out
}

/// Shots found among span releases, plus the indices of the spans they consume.
#[derive(Debug, Clone, Default)]
pub struct ShotScan {
    pub events: Vec<Event>,
    pub releases: HashSet<usize>,
}

pub fn extract_shots(m: &Match, spans: &[PossessionSpan], params: &EventParams) -> ShotScan {
    let mut scan = ShotScan::default();
    let n = m.frames.len();
    let half = m.pitch.half_length();
    let half_mouth = m.pitch.goal_width / 2.0;
    let ball_at = |t: usize| m.frames[t].ball().map(|b| (b.x, b.y));

    for (i, span) in spans.iter().enumerate() {
        let release = span.end_frame;
        if release + 1 >= n || span.team == Team::Ball {
            continue;
        }
        let sign = if m.attacks_right(span.team) { 1.0 } else { -1.0 };
        let (Some(b0), Some(b1)) = (ball_at(release), ball_at(release + 1)) else {
            continue;
        };
        if sign * (b1.0 - b0.0) <= 0.0 {
            continue;
        }
        let next = spans.get(i + 1);
        let mut limit = (release + params.shot_window_max).min(n - 1);
        if let Some(nx) = next {
            limit = limit.min(nx.start_frame.saturating_sub(1));
        }

        let mut outcome = None;
        let mut crossing = None;
        let mut prev = b0;
        for k in release + 1..=limit {
            let Some(b) = ball_at(k) else { break };
            if !m.pitch.contains(b.0, b.1) {
                let (ax0, ax1) = (sign * prev.0, sign * b.0);
                if ax1 > half && ax0 <= half {
                    let frac = (half - ax0) / (ax1 - ax0);
                    let y = prev.1 + (b.1 - prev.1) * frac;
                    outcome = Some(if y.abs() <= half_mouth {
                        ShotOutcome::Goal
                    } else {
                        ShotOutcome::OutBeyondGoalLine
                    });
                    crossing = Some(k);
                }
                break;
            }
            prev = b;
        }
        if outcome.is_none() {
            if let Some(nx) = next {
                if nx.team == span.team.opponent()
                    && nx.role == Role::Goalkeeper
                    && nx.start_frame - release <= params.shot_window_max
                {
                    outcome = Some(ShotOutcome::KeeperPossession);
                }
            }
        }
        let Some(outcome) = outcome else { continue };

        scan.releases.insert(i);
        scan.events.push(Event {
            event_type: EventType::Shot,
            frame: release,
            actor: span.entity.clone(),
            actor_team: span.team,
            target: None,
            x: span.end_pos.0,
            y: span.end_pos.1,
            outcome: Some(outcome),
            paired_frame: None,
        });
        if let (ShotOutcome::Goal, Some(k)) = (outcome, crossing) {
            let (x, y) = m.frames[k].entity(&span.entity).map_or(span.end_pos, |r| r.position());
            scan.events.push(Event {
                event_type: EventType::Goal,
                frame: k,
                actor: span.entity.clone(),
                actor_team: span.team,
                target: None,
                x,
                y,
                outcome: None,
                paired_frame: None,
            });
        }
    }
    scan
}

/// Ball exits not already explained by a scored shot. Exits through either
/// goal mouth are goals, everything else is out of play. The actor is the
/// last possessor before the exit.
pub fn extract_exits(m: &Match, spans: &[PossessionSpan], known_goals: &HashSet<usize>) -> Vec<Event> {
    let mut out = Vec::new();
    let half = m.pitch.half_length();
    let half_mouth = m.pitch.goal_width / 2.0;
    for t in 1..m.frames.len() {
        let (Some(prev), Some(cur)) = (m.frames[t - 1].ball(), m.frames[t].ball()) else {
            continue;
        };
        if !m.pitch.contains(prev.x, prev.y) || m.pitch.contains(cur.x, cur.y) || known_goals.contains(&t) {
            continue;
        }
        let Some(last) = spans.iter().rev().find(|s| s.start_frame < t) else {
            continue;
        };
        let through_mouth = cur.x.abs() > half && prev.x.abs() <= half && {
            let frac = (half - prev.x.abs()) / (cur.x.abs() - prev.x.abs());
            (prev.y + (cur.y - prev.y) * frac).abs() <= half_mouth
        };
        let (x, y) = m.frames[t].entity(&last.entity).map_or(last.end_pos, |r| r.position());
        out.push(Event {
            event_type: if through_mouth { EventType::Goal } else { EventType::OutOfPlay },
            frame: t,
            actor: last.entity.clone(),
            actor_team: last.team,
            target: None,
            x,
            y,
            outcome: None,
            paired_frame: None,
        });
    }
    out
}

/// Full extraction: shots, goals, transitions and out-of-play events,
/// ordered by frame.
pub fn extract_events(m: &Match, params: &EventParams) -> Vec<Event> {
    let spans = possession_spans(m, params);
    let dead = dead_ball_mask(m, params.teleport_threshold);
    let shots = extract_shots(m, &spans, params);
    let filter = TransitionFilter {
        flight_gap_max: params.flight_gap_max,
        dead: &dead,
        shot_releases: &shots.releases,
    };
    let goals: HashSet<usize> = shots
        .events
        .iter()
        .filter(|e| e.event_type == EventType::Goal)
        .map(|e| e.frame)
        .collect();
    let mut events = extract_transitions(&spans, &filter);
    events.extend(extract_exits(m, &spans, &goals));
    events.extend(shots.events);
    events.sort_by(|a, b| {
        a.frame
            .cmp(&b.frame)
            .then(a.event_type.cmp(&b.event_type))
            .then_with(|| a.actor.cmp(&b.actor))
    });
    events
}

pub fn write_events<W: Write>(match_id: &str, events: &[Event], out: W) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "match_id", "frame", "event_type", "actor", "actor_team", "target", "x", "y", "outcome",
    ])?;
    for e in events {
        w.write_record([
            match_id,
            &e.frame.to_string(),
            e.event_type.code(),
            e.actor.as_str(),
            e.actor_team.code(),
            e.target.as_ref().map_or("", |t| t.as_str()),
            &e.x.to_string(),
            &e.y.to_string(),
            e.outcome.map_or("", |o| o.code()),
        ])?;
    }
    w.flush()
}

pub fn write_events_file(match_id: &str, events: &[Event], path: &Path) -> io::Result<()> {
    fsutil::write_atomic(path, |w| write_events(match_id, events, w))
}
