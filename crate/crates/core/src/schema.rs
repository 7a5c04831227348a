//! Canonical tracking-data model.
//!
//! Coordinates are meters with the origin at the center of the pitch and x
//! increasing toward the right goal. Time is measured in timesteps of `dt`
//! seconds.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

/// Number of timesteps in a standard simulated match.
pub const DEFAULT_FRAME_COUNT: usize = 3000;
/// Default seconds per timestep.
pub const DEFAULT_DT: f64 = 0.1;
/// Slack around the pitch lines that an entity may occupy.
pub const DEFAULT_OUT_MARGIN: f64 = 2.0;
/// Agents per team.
pub const TEAM_SIZE: usize = 11;
/// Rows per timestep: 22 agents plus the ball.
pub const ENTITIES_PER_FRAME: usize = 2 * TEAM_SIZE + 1;
/// Reserved identifier of the ball entity.
pub const BALL_ID: &str = "ball";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchSpec {
    pub length: f64,
    pub width: f64,
    pub goal_width: f64,
}

impl Default for PitchSpec {
    fn default() -> Self {
        PitchSpec {
            length: 105.0,
            width: 68.0,
            goal_width: 7.32,
        }
    }
}

impl PitchSpec {
    pub fn new(length: f64, width: f64, goal_width: f64) -> Result<Self, String> {
        let pitch = PitchSpec {
            length,
            width,
            goal_width,
        };
        pitch.check()?;
        Ok(pitch)
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(format!(
                "pitch dimensions must be positive, got {} x {}",
                self.length, self.width
            ));
        }
        if !(self.goal_width > 0.0 && self.goal_width < self.width) {
            return Err(format!(
                "goal width {} must lie in (0, {})",
                self.goal_width, self.width
            ));
        }
        Ok(())
    }

    pub fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    pub fn right_goal(&self) -> (f64, f64) {
        (self.half_length(), 0.0)
    }

    pub fn left_goal(&self) -> (f64, f64) {
        (-self.half_length(), 0.0)
    }

    /// True when the point lies on the pitch (lines count as inside).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.half_length() && y.abs() <= self.half_width()
    }

    pub fn within_margin(&self, x: f64, y: f64, margin: f64) -> bool {
        x.abs() <= self.half_length() + margin && y.abs() <= self.half_width() + margin
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(value: impl Into<String>) -> Result<Self, String> {
        let value = value.into();
        if value.is_empty() {
            return Err("entity id must be non-empty".into());
        }
        Ok(EntityId(value))
    }

    pub fn ball() -> Self {
        EntityId(BALL_ID.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_ball(&self) -> bool {
        self.0 == BALL_ID
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Team {
    Home,
    Away,
    Ball,
}

impl Team {
    pub fn code(self) -> &'static str {
        match self {
            Team::Home => "HOME",
            Team::Away => "AWAY",
            Team::Ball => "BALL",
        }
    }

    /// The other side; the ball maps to itself.
    pub fn opponent(self) -> Team {
        match self {
            Team::Home => Team::Away,
            Team::Away => Team::Home,
            Team::Ball => Team::Ball,
        }
    }

    // ball first, then home, then away
    fn sort_rank(self) -> u8 {
        match self {
            Team::Ball => 0,
            Team::Home => 1,
            Team::Away => 2,
        }
    }
}

impl fmt::Display for Team {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Team {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "HOME" => Ok(Team::Home),
            "AWAY" => Ok(Team::Away),
            "BALL" => Ok(Team::Ball),
            other => Err(format!("unknown team code {other:?}")),
        }
    }
}

/// Positional role. Eight agent roles plus a marker for the ball row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Goalkeeper,
    CenterBack,
    LeftBack,
    RightBack,
    DefensiveMidfield,
    CentralMidfield,
    LeftWing,
    CentralFront,
    None,
}

impl Role {
    pub const AGENT_ROLES: [Role; 8] = [
        Role::Goalkeeper,
        Role::CenterBack,
        Role::LeftBack,
        Role::RightBack,
        Role::DefensiveMidfield,
        Role::CentralMidfield,
        Role::LeftWing,
        Role::CentralFront,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Role::Goalkeeper => "GK",
            Role::CenterBack => "CB",
            Role::LeftBack => "LB",
            Role::RightBack => "RB",
            Role::DefensiveMidfield => "DM",
            Role::CentralMidfield => "CM",
            Role::LeftWing => "LM",
            Role::CentralFront => "RM",
            Role::None => "NONE",
        }
    }

    pub fn is_agent(self) -> bool {
        self != Role::None
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "GK" => Role::Goalkeeper,
            "CB" => Role::CenterBack,
            "LB" => Role::LeftBack,
            "RB" => Role::RightBack,
            "DM" => Role::DefensiveMidfield,
            "CM" => Role::CentralMidfield,
            "LM" => Role::LeftWing,
            "RM" => Role::CentralFront,
            "NONE" => Role::None,
            other => return Err(format!("unknown role code {other:?}")),
        })
    }
}

/// One row of tracking data.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityRecord {
    pub match_id: String,
    pub timestep: usize,
    pub entity_id: EntityId,
    pub team: Team,
    pub role: Role,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub has_ball: bool,
}

impl EntityRecord {
    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn is_ball(&self) -> bool {
        self.team == Team::Ball
    }

    pub fn distance_to(&self, other: &EntityRecord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Canonical row order: ball first, then Home, then Away, each by entity id.
pub fn canonical_order(a: &EntityRecord, b: &EntityRecord) -> Ordering {
    a.team
        .sort_rank()
        .cmp(&b.team.sort_rank())
        .then_with(|| a.entity_id.cmp(&b.entity_id))
}

/// Reflects a record through the halfway line.
pub fn mirror_x(record: &EntityRecord, _pitch: &PitchSpec) -> EntityRecord {
    EntityRecord {
        x: -record.x,
        vx: -record.vx,
        ..record.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestep: usize,
    pub records: Vec<EntityRecord>,
}

impl Frame {
    /// Builds a frame, sorting records into canonical order.
    pub fn new(timestep: usize, mut records: Vec<EntityRecord>) -> Self {
        records.sort_by(canonical_order);
        Frame { timestep, records }
    }

    pub fn ball(&self) -> Option<&EntityRecord> {
        self.records.iter().find(|r| r.team == Team::Ball)
    }

    pub fn agents(&self) -> impl Iterator<Item = &EntityRecord> {
        self.records.iter().filter(|r| r.team != Team::Ball)
    }

    pub fn possessor(&self) -> Option<&EntityRecord> {
        self.records.iter().find(|r| r.has_ball)
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityRecord> {
        self.records.iter().find(|r| &r.entity_id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub match_id: String,
    pub pitch: PitchSpec,
    pub dt: f64,
    pub frames: Vec<Frame>,
    /// Team attacking the right (highest-x) goal.
    pub attacking_right: Team,
    /// Set when velocities were reconstructed from positions at ingest.
    pub velocity_derived: bool,
}

impl Match {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn row_count(&self) -> usize {
        self.frames.iter().map(|f| f.records.len()).sum()
    }

    /// True when the match length differs from the standard 3000 timesteps.
    pub fn deviates_from_default_length(&self) -> bool {
        self.frames.len() != DEFAULT_FRAME_COUNT
    }

    /// Whether `team` attacks toward increasing x.
    pub fn attacks_right(&self, team: Team) -> bool {
        team == self.attacking_right
    }

    /// Largest displacement of any entity between timestep `t - 1` and `t`.
    /// Entities are paired by id; returns 0 for `t == 0`.
    pub fn max_displacement(&self, t: usize) -> f64 {
        if t == 0 || t >= self.frames.len() {
            return 0.0;
        }
        let prev = &self.frames[t - 1];
        let cur = &self.frames[t];
        let mut max = 0.0f64;
        for (i, rec) in cur.records.iter().enumerate() {
            // canonical order makes the same index the same entity in valid frames
            let before = match prev.records.get(i) {
                Some(p) if p.entity_id == rec.entity_id => Some(p),
                _ => prev.entity(&rec.entity_id),
            };
            if let Some(p) = before {
                max = max.max(p.distance_to(rec));
            }
        }
        max
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.timestep != i {
                out.push(Violation {
                    rule: Rule::TimestepSequence,
                    entity: None,
                    timestep: frame.timestep,
                    detail: format!("expected timestep {i}"),
                });
            }
            out.extend(validate_frame(frame, &self.pitch));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    MissingEntity,
    ExtraEntity,
    BallCount,
    TeamCount,
    MultiplePossessors,
    BallPossession,
    RoleMismatch,
    OutOfBounds,
    NonFinite,
    RecordTimestep,
    Ordering,
    DuplicateEntity,
    TimestepSequence,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A broken schema rule. Violations are reported as data.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub entity: Option<EntityId>,
    pub timestep: usize,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "timestep {}: {}", self.timestep, self.rule)?;
        if let Some(e) = &self.entity {
            write!(f, " [{e}]")?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

pub fn validate_frame(frame: &Frame, pitch: &PitchSpec) -> Vec<Violation> {
    validate_frame_with_margin(frame, pitch, DEFAULT_OUT_MARGIN)
}

pub fn validate_frame_with_margin(frame: &Frame, pitch: &PitchSpec, out_margin: f64) -> Vec<Violation> {
    let t = frame.timestep;
    let mut out = Vec::new();
    let mut push = |rule, entity: Option<&EntityId>, detail: String| {
        out.push(Violation {
            rule,
            entity: entity.cloned(),
            timestep: t,
            detail,
        })
    };

    let n = frame.records.len();
    if n < ENTITIES_PER_FRAME {
        push(Rule::MissingEntity, None, format!("{n} of {ENTITIES_PER_FRAME} entities present"));
    } else if n > ENTITIES_PER_FRAME {
        push(Rule::ExtraEntity, None, format!("{n} entities, expected {ENTITIES_PER_FRAME}"));
    }

    let count = |team| frame.records.iter().filter(|r| r.team == team).count();
    let balls = count(Team::Ball);
    if balls != 1 {
        push(Rule::BallCount, None, format!("{balls} ball rows"));
    }
    for team in [Team::Home, Team::Away] {
        let c = count(team);
        if c != TEAM_SIZE {
            push(Rule::TeamCount, None, format!("{c} {team} agents"));
        }
    }

    let possessors: Vec<&EntityRecord> = frame.records.iter().filter(|r| r.has_ball).collect();
    if possessors.len() > 1 {
        let ids: Vec<&str> = possessors.iter().map(|r| r.entity_id.as_str()).collect();
        push(Rule::MultiplePossessors, None, ids.join(","));
    }

    for (i, r) in frame.records.iter().enumerate() {
        let id = Some(&r.entity_id);
        if r.timestep != t {
            push(Rule::RecordTimestep, id, format!("record carries timestep {}", r.timestep));
        }
        if frame.records[..i].iter().any(|o| o.entity_id == r.entity_id) {
            push(Rule::DuplicateEntity, id, String::new());
        }
        if r.is_ball() {
            if r.has_ball {
                push(Rule::BallPossession, id, "ball row flagged as possessor".into());
            }
            if r.role != Role::None || !r.entity_id.is_ball() {
                push(Rule::RoleMismatch, id, "ball row must use the reserved id and NONE role".into());
            }
        } else if r.role == Role::None || r.entity_id.is_ball() {
            push(Rule::RoleMismatch, id, "agent row needs one of the 8 roles".into());
        }
        if ![r.x, r.y, r.vx, r.vy].iter().all(|v| v.is_finite()) {
            push(Rule::NonFinite, id, String::new());
        } else if !pitch.within_margin(r.x, r.y, out_margin) {
            push(Rule::OutOfBounds, id, format!("({}, {})", r.x, r.y));
        }
        if i > 0 && canonical_order(&frame.records[i - 1], r) != Ordering::Less {
            push(Rule::Ordering, id, "records not in canonical order".into());
        }
    }
    out
}
