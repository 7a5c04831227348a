//! Segmentation of a match into stints: maximal stretches of live play.
//!
//! A stint ends when the ball leaves the pitch (a goal or out of play), when
//! entities teleport between consecutive frames (a restart layout), when
//! nobody has possessed the ball for longer than `lapse_max` frames, or at
//! the end of the match. Frames between stints belong to none.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use crate::events::{Event, EventType};
use crate::fsutil;
use crate::schema::Match;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BreakReason {
    Goal,
    BallOut,
    Teleport,
    PossessionLapse,
    MatchEnd,
}

impl BreakReason {
    pub fn code(self) -> &'static str {
        match self {
            BreakReason::Goal => "GOAL",
            BreakReason::BallOut => "BALL_OUT",
            BreakReason::Teleport => "TELEPORT",
            BreakReason::PossessionLapse => "POSSESSION_LAPSE",
            BreakReason::MatchEnd => "MATCH_END",
        }
    }
}

impl fmt::Display for BreakReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stint {
    pub stint_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub break_reason_at_end: BreakReason,
}

impl Stint {
    pub fn contains(&self, frame: usize) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }

    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StintParams {
    /// Per-frame displacement (meters) treated as a repositioning.
    pub teleport_threshold: f64,
    /// Possessor-less frames tolerated before play is deemed dead.
    pub lapse_max: usize,
}

impl Default for StintParams {
    fn default() -> Self {
        StintParams {
            teleport_threshold: 5.0,
            lapse_max: 50,
        }
    }
}

pub fn stint_id(match_id: &str, ordinal: usize) -> String {
    format!("{match_id}-{ordinal:04}")
}

pub fn segment_stints(m: &Match, events: &[Event], params: &StintParams) -> Vec<Stint> {
    let goals: HashSet<usize> = events
        .iter()
        .filter(|e| e.event_type == EventType::Goal)
        .map(|e| e.frame)
        .collect();
    let n = m.frames.len();
    let mut stints = Vec::new();
    let mut close = |start: usize, end: usize, reason: BreakReason| {
        let ordinal = stints.len() + 1;
        stints.push(Stint {
            stint_id: stint_id(&m.match_id, ordinal),
            start_frame: start,
            end_frame: end,
            break_reason_at_end: reason,
        });
    };

    let mut open: Option<usize> = None;
    let mut last_possession = 0usize;
    let mut need_possessor = false;
    for t in 0..n {
        let frame = &m.frames[t];
        let ball_in = frame.ball().is_some_and(|b| m.pitch.contains(b.x, b.y));
        let possessed = frame.possessor().is_some();

        if let Some(start) = open {
            if t > start && m.max_displacement(t) > params.teleport_threshold {
                close(start, t - 1, BreakReason::Teleport);
                open = None;
            } else if !ball_in {
                let reason = if goals.contains(&t) {
                    BreakReason::Goal
                } else {
                    BreakReason::BallOut
                };
                close(start, t, reason);
                open = None;
                continue;
            } else if possessed {
                last_possession = t;
            } else if t - last_possession > params.lapse_max {
                close(start, last_possession, BreakReason::PossessionLapse);
                open = None;
                need_possessor = true;
                continue;
            }
        }
        if open.is_none() && ball_in && (possessed || !need_possessor) {
            open = Some(t);
            last_possession = t;
            need_possessor = false;
        }
    }
    if let Some(start) = open {
        close(start, n - 1, BreakReason::MatchEnd);
    }
    stints
}

pub fn write_stints<W: Write>(match_id: &str, stints: &[Stint], out: W) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["match_id", "stint_id", "start_frame", "end_frame", "break_reason"])?;
    for s in stints {
        w.write_record([
            match_id,
            &s.stint_id,
            &s.start_frame.to_string(),
            &s.end_frame.to_string(),
            s.break_reason_at_end.code(),
        ])?;
    }
    w.flush()
}

pub fn write_stints_file(match_id: &str, stints: &[Stint], path: &Path) -> io::Result<()> {
    fsutil::write_atomic(path, |w| write_stints(match_id, stints, w))
}
