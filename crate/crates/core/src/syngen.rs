//! Deterministic synthetic match generator.
//!
//! Produces schema-conformant tracking data together with a ground-truth log
//! of every on-ball action the generator performed. The behavior model is
//! deliberately simple: the ball carrier drifts toward the attacking goal,
//! everyone else holds a noisy, ball-following formation slot, passes go to
//! a teammate in range (or occasionally straight to an opponent), and shots
//! are taken from the attacking third. Goals and shots out of play are
//! followed by a short dead period and a kickoff layout teleport.
//!
//! All randomness comes from one ChaCha8 stream seeded with `seed`. Per
//! frame the draws happen in a fixed order: carrier decisions first, then
//! positional noise for each agent in home-then-away index order.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::events::ShotOutcome;
use crate::fsutil;
use crate::schema::{EntityId, EntityRecord, Frame, Match, PitchSpec, Role, Team, DEFAULT_DT, DEFAULT_FRAME_COUNT, TEAM_SIZE};

/// Longest flight of a pass, in frames.
const MAX_PASS_FRAMES: usize = 20;
/// Frames a carrier keeps the ball before acting.
const MIN_HOLD_FRAMES: usize = 4;
/// No pass or shot starts this close to the end of the match.
const END_RESERVE_FRAMES: usize = 45;
/// Shots are only taken from within this distance of the goal center.
const MAX_SHOT_DISTANCE: f64 = 35.0;
/// Carriers stop advancing at this aligned x.
const CARRIER_X_LIMIT: f64 = 40.0;
/// Keep agents this far inside the lines.
const EDGE_INSET: f64 = 0.5;
/// Dead balls come to rest this far behind the goal line.
const REST_BEHIND_LINE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynConfig {
    pub seed: u64,
    pub frames: usize,
    /// Pass probability per possession-second.
    pub pass_rate: f64,
    /// Shot probability per possession-second inside the attacking third.
    pub shot_rate: f64,
    pub player_max_speed: f64,
    pub ball_pass_speed: f64,
    /// Standard deviation of per-frame positional jitter, meters.
    pub noise_std: f64,
    /// Share of passes played straight to an opponent.
    pub intercept_prob: f64,
    /// Share of missed shots that end in the keeper's hands rather than out.
    pub keeper_save_share: f64,
    /// Logit of the scoring probability: intercept, per meter, per radian.
    pub goal_logit: [f64; 3],
    pub dead_frames: usize,
    pub dt: f64,
    pub pitch: PitchSpec,
}

impl Default for SynConfig {
    fn default() -> Self {
        SynConfig {
            seed: 0,
            frames: DEFAULT_FRAME_COUNT,
            pass_rate: 0.4,
            shot_rate: 0.35,
            player_max_speed: 7.0,
            ball_pass_speed: 18.0,
            noise_std: 0.05,
            intercept_prob: 0.2,
            keeper_save_share: 0.5,
            goal_logit: [1.2, -0.12, -1.5],
            dead_frames: 20,
            dt: DEFAULT_DT,
            pitch: PitchSpec::default(),
        }
    }
}

impl SynConfig {
    pub fn with_seed(seed: u64) -> Self {
        SynConfig {
            seed,
            ..SynConfig::default()
        }
    }

    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("pass_rate", self.pass_rate),
            ("shot_rate", self.shot_rate),
            ("intercept_prob", self.intercept_prob),
            ("keeper_save_share", self.keeper_save_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.player_max_speed > 0.0 && self.ball_pass_speed > 0.0) {
            return Err("speeds must be positive".into());
        }
        if !(self.noise_std >= 0.0) {
            return Err("noise_std must be non-negative".into());
        }
        if self.frames < 1 {
            return Err("frames must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return Err("dt must be positive".into());
        }
        if self.goal_logit.iter().any(|v| !v.is_finite()) {
            return Err("goal_logit must be finite".into());
        }
        self.pitch.check()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruthKind {
    Pass,
    Reception,
    Turnover,
    Interception,
    Shot,
    Goal,
    OutOfPlay,
    Restart,
}

impl TruthKind {
    pub fn code(self) -> &'static str {
        match self {
            TruthKind::Pass => "pass",
            TruthKind::Reception => "reception",
            TruthKind::Turnover => "turnover",
            TruthKind::Interception => "interception",
            TruthKind::Shot => "shot",
            TruthKind::Goal => "goal",
            TruthKind::OutOfPlay => "out_of_play",
            TruthKind::Restart => "restart",
        }
    }
}

impl fmt::Display for TruthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One action performed by the generator.
///
/// `from` is the releasing (or restarting) entity; `to` is the receiving
/// entity when there is one. Receptions and interceptions keep the same
/// `from`/`to` as the pass or turnover they complete.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthEvent {
    pub frame: usize,
    pub kind: TruthKind,
    pub from: EntityId,
    pub to: Option<EntityId>,
    pub outcome: Option<ShotOutcome>,
}

impl TruthEvent {
    /// The entity performing the action.
    pub fn actor(&self) -> &EntityId {
        match self.kind {
            TruthKind::Reception | TruthKind::Interception => self.to.as_ref().unwrap_or(&self.from),
            _ => &self.from,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthLog {
    pub events: Vec<TruthEvent>,
}

impl TruthLog {
    pub fn count(&self, kind: TruthKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn restarts(&self) -> impl Iterator<Item = &TruthEvent> {
        self.events.iter().filter(|e| e.kind == TruthKind::Restart)
    }

    /// Number of distinct possessions: the opening kickoff, every completed
    /// pass or interception, every restart and every keeper save.
    pub fn possession_count(&self) -> usize {
        1 + self.count(TruthKind::Reception)
            + self.count(TruthKind::Interception)
            + self.count(TruthKind::Restart)
            + self
                .events
                .iter()
                .filter(|e| e.kind == TruthKind::Shot && e.outcome == Some(ShotOutcome::KeeperPossession))
                .count()
    }

    pub fn write<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["frame", "event_type", "from_entity", "to_entity"])?;
        for e in &self.events {
            w.write_record([
                e.frame.to_string().as_str(),
                e.kind.code(),
                e.from.as_str(),
                e.to.as_ref().map_or("", |t| t.as_str()),
            ])?;
        }
        w.flush()
    }

    pub fn write_file(&self, path: &Path) -> io::Result<()> {
        fsutil::write_atomic(path, |w| self.write(w))
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    role: Role,
    /// Kickoff position, aligned so the team attacks +x.
    kickoff: (f64, f64),
    /// Formation anchor before ball-following shifts, aligned.
    base: (f64, f64),
}

const SLOTS: [Slot; TEAM_SIZE] = [
    Slot { role: Role::Goalkeeper, kickoff: (-50.0, 0.0), base: (-49.0, 0.0) },
    Slot { role: Role::LeftBack, kickoff: (-25.0, 22.0), base: (-30.0, 22.0) },
    Slot { role: Role::CenterBack, kickoff: (-30.0, 8.0), base: (-34.0, 8.0) },
    Slot { role: Role::CenterBack, kickoff: (-30.0, -8.0), base: (-34.0, -8.0) },
    Slot { role: Role::RightBack, kickoff: (-25.0, -22.0), base: (-30.0, -22.0) },
    Slot { role: Role::DefensiveMidfield, kickoff: (-18.0, 0.0), base: (-20.0, 0.0) },
    Slot { role: Role::CentralMidfield, kickoff: (-10.0, 12.0), base: (-10.0, 12.0) },
    Slot { role: Role::CentralMidfield, kickoff: (-10.0, -12.0), base: (-10.0, -12.0) },
    Slot { role: Role::LeftWing, kickoff: (-3.0, 24.0), base: (4.0, 24.0) },
    Slot { role: Role::CentralFront, kickoff: (-3.0, -24.0), base: (4.0, -24.0) },
    Slot { role: Role::CentralMidfield, kickoff: (-10.0, 0.0), base: (8.0, 0.0) },
];
const GK_SLOT: usize = 0;
const KICKER_SLOT: usize = 10;

#[derive(Debug, Clone)]
struct Agent {
    id: EntityId,
    team: Team,
    slot: usize,
    pos: (f64, f64),
    prev: (f64, f64),
    frozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FlightKind {
    Pass,
    Intercept,
    Shot(ShotOutcome),
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Held {
        holder: usize,
        since: usize,
    },
    Flight {
        kind: FlightKind,
        from: usize,
        target: Option<usize>,
        start: (f64, f64),
        dir: (f64, f64),
        dist: f64,
        steps: usize,
    },
    Dead {
        restart_at: usize,
        kickoff_team: Team,
        rest: (f64, f64),
    },
}

struct Sim<'a> {
    cfg: &'a SynConfig,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    attacking_right: Team,
    agents: Vec<Agent>,
    ball: (f64, f64),
    ball_prev: (f64, f64),
    phase: Phase,
    teleported: bool,
    log: Vec<TruthEvent>,
}

/// Generates a match and the log of everything the generator did.
pub fn generate(config: &SynConfig) -> (Match, TruthLog) {
    let mut sim = Sim::new(config);
    let match_id = format!("syn-{}", config.seed);
    let mut frames = Vec::with_capacity(config.frames);
    for t in 0..config.frames {
        frames.push(sim.snapshot(&match_id, t));
        if t + 1 < config.frames {
            sim.advance(t);
        }
    }
    let m = Match {
        match_id,
        pitch: config.pitch,
        dt: config.dt,
        frames,
        attacking_right: sim.attacking_right,
        velocity_derived: false,
    };
    (m, TruthLog { events: sim.log })
}

fn sub(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 - b.0, a.1 - b.1)
}

fn norm(v: (f64, f64)) -> f64 {
    v.0.hypot(v.1)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SynConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let attacking_right = if rng.random_bool(0.5) { Team::Home } else { Team::Away };
        let kickoff_team = if rng.random_bool(0.5) { Team::Home } else { Team::Away };
        let mut agents = Vec::with_capacity(2 * TEAM_SIZE);
        for (team, prefix) in [(Team::Home, 'H'), (Team::Away, 'A')] {
            for slot in 0..TEAM_SIZE {
                agents.push(Agent {
                    id: EntityId::new(format!("{prefix}{:02}", slot + 1)).expect("non-empty id"),
                    team,
                    slot,
                    pos: (0.0, 0.0),
                    prev: (0.0, 0.0),
                    frozen: false,
                });
            }
        }
        let noise = if cfg.noise_std > 0.0 {
            Some(Normal::new(0.0, cfg.noise_std).expect("finite noise"))
        } else {
            None
        };
        let mut sim = Sim {
            cfg,
            rng,
            noise,
            attacking_right,
            agents,
            ball: (0.0, 0.0),
            ball_prev: (0.0, 0.0),
            phase: Phase::Dead {
                restart_at: 0,
                kickoff_team,
                rest: (0.0, 0.0),
            },
            teleported: false,
            log: Vec::new(),
        };
        let kicker = sim.kickoff(kickoff_team);
        sim.phase = Phase::Held { holder: kicker, since: 0 };
        sim.teleported = true;
        sim
    }

    fn sign(&self, team: Team) -> f64 {
        if team == self.attacking_right {
            1.0
        } else {
            -1.0
        }
    }

    fn to_world(&self, team: Team, p: (f64, f64)) -> (f64, f64) {
        (self.sign(team) * p.0, p.1)
    }

    fn to_aligned(&self, team: Team, p: (f64, f64)) -> (f64, f64) {
        (self.sign(team) * p.0, p.1)
    }

    fn index(&self, team: Team, slot: usize) -> usize {
        match team {
            Team::Home => slot,
            _ => TEAM_SIZE + slot,
        }
    }

    fn clamp_inside(&self, p: (f64, f64)) -> (f64, f64) {
        let hx = self.cfg.pitch.half_length() - EDGE_INSET;
        let hy = self.cfg.pitch.half_width() - EDGE_INSET;
        (p.0.clamp(-hx, hx), p.1.clamp(-hy, hy))
    }

    /// Places everyone in the kickoff layout and returns the kicker.
    fn kickoff(&mut self, team: Team) -> usize {
        for i in 0..self.agents.len() {
            let a = &self.agents[i];
            let mut p = SLOTS[a.slot].kickoff;
            if a.slot == KICKER_SLOT && a.team == team {
                p = (0.0, 0.0);
            }
            let w = self.to_world(a.team, p);
            self.agents[i].pos = w;
            self.agents[i].frozen = false;
        }
        self.ball = (0.0, 0.0);
        self.index(team, KICKER_SLOT)
    }

    fn snapshot(&self, match_id: &str, t: usize) -> Frame {
        let dt = self.cfg.dt;
        let vel = |now: (f64, f64), before: (f64, f64)| {
            if self.teleported {
                (0.0, 0.0)
            } else {
                ((now.0 - before.0) / dt, (now.1 - before.1) / dt)
            }
        };
        let holder = match self.phase {
            Phase::Held { holder, .. } => Some(holder),
            _ => None,
        };
        let mut records = Vec::with_capacity(self.agents.len() + 1);
        let (bvx, bvy) = vel(self.ball, self.ball_prev);
        records.push(EntityRecord {
            match_id: match_id.to_string(),
            timestep: t,
            entity_id: EntityId::ball(),
            team: Team::Ball,
            role: Role::None,
            x: self.ball.0,
            y: self.ball.1,
            vx: bvx,
            vy: bvy,
            has_ball: false,
        });
        for (i, a) in self.agents.iter().enumerate() {
            let (vx, vy) = vel(a.pos, a.prev);
            records.push(EntityRecord {
                match_id: match_id.to_string(),
                timestep: t,
                entity_id: a.id.clone(),
                team: a.team,
                role: SLOTS[a.slot].role,
                x: a.pos.0,
                y: a.pos.1,
                vx,
                vy,
                has_ball: holder == Some(i),
            });
        }
        Frame::new(t, records)
    }

    fn push(&mut self, frame: usize, kind: TruthKind, from: usize, to: Option<usize>, outcome: Option<ShotOutcome>) {
        let ev = TruthEvent {
            frame,
            kind,
            from: self.agents[from].id.clone(),
            to: to.map(|i| self.agents[i].id.clone()),
            outcome,
        };
        self.log.push(ev);
    }

    /// Moves the simulation from frame `t` to frame `t + 1`.
    fn advance(&mut self, t: usize) {
        for a in &mut self.agents {
            a.prev = a.pos;
        }
        self.ball_prev = self.ball;
        self.teleported = false;
        let next = t + 1;
        let step = self.cfg.ball_pass_speed * self.cfg.dt;

        match self.phase {
            Phase::Held { holder, since } => {
                let acted = t - since >= MIN_HOLD_FRAMES
                    && t + END_RESERVE_FRAMES < self.cfg.frames
                    && self.try_release(t, holder);
                if !acted {
                    self.move_agents(Some(holder));
                    self.ball = self.agents[holder].pos;
                    return;
                }
                self.move_agents(None);
                self.advance_flight(next, step);
            }
            Phase::Flight { .. } => {
                self.move_agents(None);
                self.advance_flight(next, step);
            }
            Phase::Dead {
                restart_at,
                kickoff_team,
                rest,
            } => {
                if next >= restart_at {
                    let kicker = self.kickoff(kickoff_team);
                    self.phase = Phase::Held { holder: kicker, since: next };
                    self.teleported = true;
                    self.push(next, TruthKind::Restart, kicker, None, None);
                } else {
                    self.move_agents(None);
                    let d = sub(rest, self.ball);
                    let len = norm(d);
                    if len <= step {
                        self.ball = rest;
                    } else {
                        self.ball = (self.ball.0 + d.0 / len * step, self.ball.1 + d.1 / len * step);
                    }
                }
            }
        }
    }

    /// Decides whether the holder shoots or passes at frame `t`.
    fn try_release(&mut self, t: usize, holder: usize) -> bool {
        let cfg = self.cfg;
        let team = self.agents[holder].team;
        let here = self.to_aligned(team, self.agents[holder].pos);
        let goal = (cfg.pitch.half_length(), 0.0);
        let r = norm(sub(goal, here));
        let is_gk = self.agents[holder].slot == GK_SLOT;

        let u_shot: f64 = self.rng.random();
        let in_third = here.0 > cfg.pitch.length / 6.0 && r <= MAX_SHOT_DISTANCE && !is_gk;
        if in_third && u_shot < cfg.shot_rate * cfg.dt {
            self.shoot(t, holder, here, r);
            return true;
        }

        let u_pass: f64 = self.rng.random();
        let rate = if is_gk { 1.0 } else { cfg.pass_rate };
        if u_pass >= rate * cfg.dt {
            return false;
        }
        let reach = MAX_PASS_FRAMES as f64 * cfg.ball_pass_speed * cfg.dt;
        let origin = self.agents[holder].pos;
        let intercept = self.rng.random_bool(cfg.intercept_prob);
        let candidates: Vec<usize> = (0..self.agents.len())
            .filter(|&i| {
                let a = &self.agents[i];
                let d = norm(sub(a.pos, origin));
                if intercept {
                    a.team != team && a.slot != GK_SLOT && (3.0..=reach).contains(&d)
                } else {
                    a.team == team && i != holder && (5.0..=reach).contains(&d)
                }
            })
            .collect();
        if candidates.is_empty() {
            return false;
        }
        let target = candidates[self.rng.random_range(0..candidates.len())];
        let (kind, truth) = if intercept {
            (FlightKind::Intercept, TruthKind::Turnover)
        } else {
            (FlightKind::Pass, TruthKind::Pass)
        };
        self.push(t, truth, holder, Some(target), None);
        self.launch(kind, holder, Some(target), self.agents[target].pos);
        true
    }

    fn shoot(&mut self, t: usize, holder: usize, here: (f64, f64), r: f64) {
        let cfg = self.cfg;
        let team = self.agents[holder].team;
        let goal_x = cfg.pitch.half_length();
        let theta = here.1.atan2(goal_x - here.0).abs();
        let [b0, br, bt] = cfg.goal_logit;
        let p_goal = sigmoid(b0 + br * r + bt * theta);
        let outcome = if self.rng.random_bool(p_goal) {
            ShotOutcome::Goal
        } else if self.rng.random_bool(cfg.keeper_save_share) {
            ShotOutcome::KeeperPossession
        } else {
            ShotOutcome::OutBeyondGoalLine
        };

        match outcome {
            ShotOutcome::KeeperPossession => {
                let keeper = self.index(team.opponent(), GK_SLOT);
                self.push(t, TruthKind::Shot, holder, Some(keeper), Some(outcome));
                self.launch(FlightKind::Shot(outcome), holder, Some(keeper), self.agents[keeper].pos);
            }
            _ => {
                let half_mouth = cfg.pitch.goal_width / 2.0;
                let y_cross = if outcome == ShotOutcome::Goal {
                    self.rng.random_range(-(half_mouth - 0.5)..=(half_mouth - 0.5))
                } else {
                    let mag = self.rng.random_range((half_mouth + 1.0)..=14.0);
                    if self.rng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                };
                // extend the line through the crossing point to the resting spot
                let dx = goal_x - here.0;
                let slope = (y_cross - here.1) / dx;
                let rest_aligned = (goal_x + REST_BEHIND_LINE, y_cross + slope * REST_BEHIND_LINE);
                let rest = self.to_world(team, rest_aligned);
                self.push(t, TruthKind::Shot, holder, None, Some(outcome));
                self.launch(FlightKind::Shot(outcome), holder, None, rest);
            }
        }
    }

    fn launch(&mut self, kind: FlightKind, from: usize, target: Option<usize>, dest: (f64, f64)) {
        let start = self.agents[from].pos;
        let d = sub(dest, start);
        let dist = norm(d);
        let dir = if dist > 0.0 { (d.0 / dist, d.1 / dist) } else { (1.0, 0.0) };
        if let Some(i) = target {
            self.agents[i].frozen = true;
        }
        self.phase = Phase::Flight {
            kind,
            from,
            target,
            start,
            dir,
            dist,
            steps: 0,
        };
    }

    fn advance_flight(&mut self, next: usize, step: f64) {
        let Phase::Flight {
            kind,
            from,
            target,
            start,
            dir,
            dist,
            steps,
        } = self.phase
        else {
            return;
        };
        let steps = steps + 1;
        let travelled = (steps as f64 * step).min(dist);
        let was_in = self.cfg.pitch.contains(self.ball.0, self.ball.1);
        self.ball = (start.0 + dir.0 * travelled, start.1 + dir.1 * travelled);

        if let Some(rcv) = target {
            if travelled >= dist {
                self.ball = self.agents[rcv].pos;
                self.agents[rcv].frozen = false;
                self.phase = Phase::Held { holder: rcv, since: next };
                match kind {
                    FlightKind::Pass => self.push(next, TruthKind::Reception, from, Some(rcv), None),
                    FlightKind::Intercept => self.push(next, TruthKind::Interception, from, Some(rcv), None),
                    FlightKind::Shot(_) => {}
                }
                return;
            }
        } else if was_in && !self.cfg.pitch.contains(self.ball.0, self.ball.1) {
            let scored = kind == FlightKind::Shot(ShotOutcome::Goal);
            let truth = if scored { TruthKind::Goal } else { TruthKind::OutOfPlay };
            self.push(next, truth, from, None, None);
            let rest = (start.0 + dir.0 * dist, start.1 + dir.1 * dist);
            self.phase = Phase::Dead {
                restart_at: next + self.cfg.dead_frames.max(1),
                kickoff_team: self.agents[from].team.opponent(),
                rest,
            };
            return;
        }
        self.phase = Phase::Flight {
            kind,
            from,
            target,
            start,
            dir,
            dist,
            steps,
        };
    }

    fn ball_aligned(&self, team: Team) -> (f64, f64) {
        self.to_aligned(team, self.ball)
    }

    fn possessing_team(&self) -> Option<Team> {
        match self.phase {
            Phase::Held { holder, .. } => Some(self.agents[holder].team),
            Phase::Flight { from, .. } => Some(self.agents[from].team),
            Phase::Dead { .. } => None,
        }
    }

    fn move_agents(&mut self, holder: Option<usize>) {
        let cfg = self.cfg;
        let dt = cfg.dt;
        let vmax = cfg.player_max_speed;
        let in_possession = self.possessing_team();

        // the defender closest to the carrier presses
        let presser = holder.and_then(|h| {
            let team = self.agents[h].team.opponent();
            (0..self.agents.len())
                .filter(|&i| self.agents[i].team == team && self.agents[i].slot != GK_SLOT)
                .min_by(|&a, &b| {
                    let da = norm(sub(self.agents[a].pos, self.ball));
                    let db = norm(sub(self.agents[b].pos, self.ball));
                    da.total_cmp(&db)
                })
        });

        for i in 0..self.agents.len() {
            let a = &self.agents[i];
            if a.frozen {
                continue;
            }
            let team = a.team;
            let slot = SLOTS[a.slot];
            let ball = self.ball_aligned(team);
            let (target, speed) = if Some(i) == holder {
                if a.slot == GK_SLOT {
                    (self.to_aligned(team, a.pos), 0.0)
                } else {
                    let here = self.to_aligned(team, a.pos);
                    ((CARRIER_X_LIMIT, here.1 * 0.9), 0.55 * vmax)
                }
            } else if Some(i) == presser {
                let d = sub(ball, self.to_aligned(team, a.pos));
                let len = norm(d);
                if len > 1.5 {
                    (ball, vmax)
                } else {
                    (self.to_aligned(team, a.pos), 0.0)
                }
            } else if a.slot == GK_SLOT {
                let gx = slot.base.0 + 0.04 * (ball.0 + cfg.pitch.half_length());
                ((gx, 0.1 * ball.1), 0.5 * vmax)
            } else {
                let push = match in_possession {
                    Some(t) if t == team => 8.0,
                    Some(_) => -6.0,
                    None => 0.0,
                };
                let ax = slot.base.0 + 0.5 * ball.0 + push;
                let ay = slot.base.1 * 0.85 + 0.25 * ball.1;
                ((ax, ay), 0.6 * vmax)
            };
            let here = self.to_aligned(team, a.pos);
            let d = sub(target, here);
            let len = norm(d);
            let reach = speed * dt;
            let moved = if len <= reach || len == 0.0 {
                target
            } else {
                (here.0 + d.0 / len * reach, here.1 + d.1 / len * reach)
            };
            let mut p = self.to_world(team, moved);
            if let Some(noise) = self.noise {
                let cap = 3.0 * cfg.noise_std;
                let nx = noise.sample(&mut self.rng).clamp(-cap, cap);
                let ny = noise.sample(&mut self.rng).clamp(-cap, cap);
                p = (p.0 + nx, p.1 + ny);
            }
            self.agents[i].pos = self.clamp_inside(p);
        }
    }
}
