//! Pitch control: the probability that each team would win the ball if it
//! were played to a given location now.
//!
//! Each player has an arrival time `tau` (react, then run straight at top
//! speed). From the moment the ball arrives, players absorb the remaining
//! control mass at a rate `lambda * f_i(t)`, where `f_i` is a logistic
//! readiness curve centered on `tau`. Each integration step applies the
//! exact solution of that decay over the step, so the absorbed mass never
//! overshoots what remains.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::Lattice;
use crate::schema::{EntityRecord, Frame, PitchSpec, Team};

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("frame {0} has no ball")]
    MissingBall(usize),
    #[error("invalid control parameters: {0}")]
    Params(String),
    #[error("grid step must be positive, got {0}")]
    Step(f64),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub reaction_time: f64,
    pub max_speed: f64,
    pub ball_speed: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub int_dt: f64,
    pub horizon: f64,
    pub convergence: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            reaction_time: 0.7,
            max_speed: 5.0,
            ball_speed: 15.0,
            sigma: 0.45,
            lambda: 4.3,
            int_dt: 0.04,
            horizon: 10.0,
            convergence: 0.99,
        }
    }
}

impl ControlParams {
    pub fn check(&self) -> Result<(), ControlError> {
        let positive = [
            ("reaction_time", self.reaction_time),
            ("max_speed", self.max_speed),
            ("ball_speed", self.ball_speed),
            ("sigma", self.sigma),
            ("lambda", self.lambda),
            ("int_dt", self.int_dt),
            ("horizon", self.horizon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControlError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.convergence > 0.9 && self.convergence < 1.0) {
            return Err(ControlError::Params(format!(
                "convergence must lie in (0.9, 1), got {}",
                self.convergence
            )));
        }
        Ok(())
    }
}

/// Seconds for a player to reach `target`: coast through the reaction time,
/// then run straight at top speed.
pub fn time_to_reach(player: &EntityRecord, target: (f64, f64), params: &ControlParams) -> f64 {
    arrival((player.x, player.y), (player.vx, player.vy), target, params)
}

fn arrival(pos: (f64, f64), vel: (f64, f64), target: (f64, f64), params: &ControlParams) -> f64 {
    let fx = pos.0 + vel.0 * params.reaction_time;
    let fy = pos.1 + vel.1 * params.reaction_time;
    params.reaction_time + (target.0 - fx).hypot(target.1 - fy) / params.max_speed
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeamControl {
    pub p_home: f64,
    pub p_away: f64,
    /// Mass left unassigned when integration stopped.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
struct Runner {
    pos: (f64, f64),
    vel: (f64, f64),
    home: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Lane {
    tau: f64,
    home: bool,
    ready: f64,
    held: f64,
}

/// The parts of a frame that pitch control depends on.
#[derive(Debug, Clone)]
struct Snapshot {
    ball: (f64, f64),
    runners: Vec<Runner>,
}

impl Snapshot {
    fn of(frame: &Frame) -> Result<Snapshot, ControlError> {
        let ball = frame.ball().ok_or(ControlError::MissingBall(frame.timestep))?;
        let runners = frame
            .agents()
            .map(|r| Runner {
                pos: (r.x, r.y),
                vel: (r.vx, r.vy),
                home: r.team == Team::Home,
            })
            .collect();
        Ok(Snapshot {
            ball: ball.position(),
            runners,
        })
    }

    fn control(&self, target: (f64, f64), params: &ControlParams, lanes: &mut Vec<Lane>) -> TeamControl {
        let t_ball = (target.0 - self.ball.0).hypot(target.1 - self.ball.1) / params.ball_speed;
        lanes.clear();
        lanes.extend(self.runners.iter().map(|r| Lane {
            tau: arrival(r.pos, r.vel, target, params),
            home: r.home,
            ..Lane::default()
        }));
        let slope = PI / 3f64.sqrt() / params.sigma;
        // Before this time every readiness term underflows to exactly zero.
        let tau_min = lanes.iter().fold(f64::INFINITY, |m, l| m.min(l.tau));
        let silent_until = tau_min - 720.0 / slope;

        let mut remaining = 1.0f64;
        let mut k = 0usize;
        loop {
            let elapsed = k as f64 * params.int_dt;
            if elapsed > params.horizon || 1.0 - remaining >= params.convergence {
                break;
            }
            let t = t_ball + elapsed;
            k += 1;
            if t < silent_until {
                continue;
            }
            let mut rate = 0.0;
            for lane in lanes.iter_mut() {
                lane.ready = 1.0 / (1.0 + (-slope * (t - lane.tau)).exp());
                rate += lane.ready;
            }
            if rate == 0.0 {
                continue;
            }
            let kept = remaining * (-params.lambda * params.int_dt * rate).exp();
            let absorbed = remaining - kept;
            for lane in lanes.iter_mut() {
                lane.held += absorbed * lane.ready / rate;
            }
            remaining = kept;
        }

        let (mut p_home, mut p_away) = (0.0, 0.0);
        for lane in lanes.iter() {
            if lane.home {
                p_home += lane.held;
            } else {
                p_away += lane.held;
            }
        }
        let total = p_home + p_away;
        if total > 1.0 {
            p_home /= total;
            p_away = 1.0 - p_home;
        }
        TeamControl {
            p_home,
            p_away,
            residual: 1.0 - (p_home + p_away),
        }
    }
}

/// Control probabilities for one target location.
pub fn control_at(frame: &Frame, target: (f64, f64), params: &ControlParams) -> Result<TeamControl, ControlError> {
    params.check()?;
    let snap = Snapshot::of(frame)?;
    Ok(snap.control(target, params, &mut Vec::new()))
}

/// Home-team control over a lattice covering the pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    pub lattice: Lattice,
    pub frame: usize,
    /// Home probability per cell, row-major from the lowest y.
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Largest per-cell residual.
    pub residual: f64,
}

impl ControlGrid {
    pub fn nx(&self) -> usize {
        self.lattice.nx
    }

    pub fn ny(&self) -> usize {
        self.lattice.ny
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.lattice.nx + i]
    }
}

pub fn pitch_lattice(pitch: &PitchSpec, step: f64) -> Lattice {
    let (hl, hw) = (pitch.half_length(), pitch.half_width());
    Lattice::covering(-hl, hl, -hw, hw, step)
}

/// Evaluates every cell on the calling thread.
pub fn control_grid(frame: &Frame, pitch: &PitchSpec, step: f64, params: &ControlParams) -> Result<ControlGrid, ControlError> {
    control_grid_jobs(frame, pitch, step, params, 1)
}

/// As [`control_grid`], spread over `jobs` worker threads. Results do not
/// depend on `jobs`.
pub fn control_grid_jobs(
    frame: &Frame,
    pitch: &PitchSpec,
    step: f64,
    params: &ControlParams,
    jobs: usize,
) -> Result<ControlGrid, ControlError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(ControlError::Step(step));
    }
    params.check()?;
    let snap = Snapshot::of(frame)?;
    let lattice = pitch_lattice(pitch, step);
    let cells: Vec<TeamControl> = if jobs <= 1 {
        let mut lanes = Vec::new();
        (0..lattice.len())
            .map(|k| snap.control(lattice.center(k), params, &mut lanes))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| ControlError::Pool(e.to_string()))?;
        pool.install(|| {
            (0..lattice.len())
                .into_par_iter()
                .map_init(Vec::new, |lanes, k| snap.control(lattice.center(k), params, lanes))
                .collect()
        })
    };
    let values = cells.iter().map(|c| c.p_home).collect();
    let residuals: Vec<f64> = cells.iter().map(|c| c.residual).collect();
    let residual = residuals.iter().fold(0.0f64, |m, &r| m.max(r));
    Ok(ControlGrid {
        lattice,
        frame: frame.timestep,
        values,
        residuals,
        residual,
    })
}
