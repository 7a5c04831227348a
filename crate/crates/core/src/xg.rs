//! Expected-goals model: polar shot features about the attacked goal and a
//! three-coefficient logistic regression fitted by damped Newton steps.

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

use crate::events::{Event, EventType, ShotOutcome};
use crate::fsutil;
use crate::keyvalue::KeyValues;
use crate::lattice::Lattice;
use crate::schema::{mirror_x, EntityId, EntityRecord, PitchSpec, Role, Team};

pub const MODEL_FORMAT: &str = "pitchkit-xg-1";

#[derive(Debug, Error)]
pub enum XgError {
    #[error("shot at ({x}, {y}) lies beyond the attacked goal line")]
    Domain { x: f64, y: f64 },
    #[error("event at frame {0} is not a shot")]
    NotAShot(usize),
    #[error("training data needs both goals and non-goals")]
    DegenerateData,
    #[error("loss diverged ({0}); the data may be separable, try a positive l2 weight")]
    NonFinite(String),
    #[error("invalid fit options: {0}")]
    Options(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Model { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotFeatures {
    pub r: f64,
    pub theta: f64,
    pub label: bool,
}

impl ShotFeatures {
    pub fn new(r: f64, theta: f64, label: bool) -> Self {
        ShotFeatures { r, theta, label }
    }

    /// Location on the right half of the pitch the features describe, with
    /// the angle folded to `y >= 0`.
    pub fn folded_location(&self, pitch: &PitchSpec) -> (f64, f64) {
        (pitch.half_length() - self.r * self.theta.cos(), self.r * self.theta.sin())
    }
}

/// Features for a shot, after aligning play toward the right goal.
pub fn shot_features(shot: &Event, pitch: &PitchSpec, attacking_right: bool) -> Result<ShotFeatures, XgError> {
    if shot.event_type != EventType::Shot {
        return Err(XgError::NotAShot(shot.frame));
    }
    let (mut x, mut y) = (shot.x, shot.y);
    if !attacking_right {
        let rec = EntityRecord {
            match_id: String::new(),
            timestep: shot.frame,
            entity_id: EntityId::ball(),
            team: Team::Ball,
            role: Role::None,
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            has_ball: false,
        };
        let m = mirror_x(&rec, pitch);
        x = m.x;
        y = m.y;
    }
    let half = pitch.half_length();
    if x > half {
        return Err(XgError::Domain { x, y });
    }
    let dx = half - x;
    let r = dx.hypot(y);
    let theta = if r == 0.0 { 0.0 } else { y.atan2(dx).abs() };
    Ok(ShotFeatures {
        r,
        theta,
        label: shot.outcome == Some(ShotOutcome::Goal),
    })
}

/// Fitted coefficients and training summary.
#[derive(Debug, Clone, PartialEq)]
pub struct XgModel {
    pub beta0: f64,
    pub beta_r: f64,
    pub beta_theta: f64,
    pub n_train: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub l2: f64,
}

impl XgModel {
    pub fn with_coefficients(beta0: f64, beta_r: f64, beta_theta: f64) -> Self {
        XgModel {
            beta0,
            beta_r,
            beta_theta,
            n_train: 1,
            converged: true,
            final_loss: f64::NAN,
            l2: 0.0,
        }
    }

    pub fn coefficients(&self) -> [f64; 3] {
        [self.beta0, self.beta_r, self.beta_theta]
    }

    pub fn logit(&self, r: f64, theta: f64) -> f64 {
        self.beta0 + self.beta_r * r + self.beta_theta * theta
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("format", MODEL_FORMAT);
        kv.set("toolkit_version", env!("CARGO_PKG_VERSION"));
        kv.set("beta0", self.beta0);
        kv.set("beta_r", self.beta_r);
        kv.set("beta_theta", self.beta_theta);
        kv.set("n_train", self.n_train);
        kv.set("converged", self.converged);
        kv.set("final_loss", self.final_loss);
        kv.set("l2", self.l2);
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self, String> {
        let format: String = kv.require("format")?;
        if format != MODEL_FORMAT {
            return Err(format!("unsupported model format {format:?}"));
        }
        let model = XgModel {
            beta0: kv.require("beta0")?,
            beta_r: kv.require("beta_r")?,
            beta_theta: kv.require("beta_theta")?,
            n_train: kv.require("n_train")?,
            converged: kv.require("converged")?,
            final_loss: kv.require("final_loss")?,
            l2: kv.parse_opt("l2")?.unwrap_or(0.0),
        };
        if !model.coefficients().iter().all(|b| b.is_finite()) {
            return Err("coefficients must be finite".into());
        }
        if model.n_train == 0 {
            return Err("n_train must be at least 1".into());
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), XgError> {
        fsutil::write_bytes_atomic(path, self.to_key_values().to_text().as_bytes()).map_err(|source| XgError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, XgError> {
        let shown = path.display().to_string();
        let text = fsutil::read_to_string(path).map_err(|source| XgError::Io {
            path: shown.clone(),
            source,
        })?;
        let kv = KeyValues::parse(&text).map_err(|e| XgError::Model {
            path: shown.clone(),
            message: e.to_string(),
        })?;
        XgModel::from_key_values(&kv).map_err(|message| XgError::Model { path: shown, message })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop once the gradient max-norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge weight on `beta_r` and `beta_theta`; the intercept is free.
    pub l2: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 10_000,
            l2: 0.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn predict(model: &XgModel, features: &ShotFeatures) -> f64 {
    let p = sigmoid(model.logit(features.r, features.theta));
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn design(f: &ShotFeatures) -> [f64; 3] {
    [1.0, f.r, f.theta]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Mean negative log-likelihood plus `l2/2 * (beta_r^2 + beta_theta^2)`.
pub fn loss(beta: &[f64; 3], data: &[ShotFeatures], l2: f64) -> f64 {
    let nll: f64 = data
        .iter()
        .map(|f| {
            let z = dot(beta, &design(f));
            softplus(z) - if f.label { z } else { 0.0 }
        })
        .sum();
    nll / data.len() as f64 + 0.5 * l2 * (beta[1] * beta[1] + beta[2] * beta[2])
}

/// Analytic gradient of [`loss`].
pub fn gradient(beta: &[f64; 3], data: &[ShotFeatures], l2: f64) -> [f64; 3] {
    let mut g = [0.0; 3];
    for f in data {
        let x = design(f);
        let resid = sigmoid(dot(beta, &x)) - if f.label { 1.0 } else { 0.0 };
        for k in 0..3 {
            g[k] += resid * x[k];
        }
    }
    let n = data.len() as f64;
    [g[0] / n, g[1] / n + l2 * beta[1], g[2] / n + l2 * beta[2]]
}

fn hessian(beta: &[f64; 3], data: &[ShotFeatures], l2: f64) -> [[f64; 3]; 3] {
    let mut h = [[0.0; 3]; 3];
    for f in data {
        let x = design(f);
        let p = sigmoid(dot(beta, &x));
        let w = p * (1.0 - p);
        for a in 0..3 {
            for b in 0..3 {
                h[a][b] += w * x[a] * x[b];
            }
        }
    }
    let n = data.len() as f64;
    for row in &mut h {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    h[1][1] += l2;
    h[2][2] += l2;
    h
}

/// Solves `a x = b` by Cholesky; `None` unless `a` is positive definite.
fn cholesky_solve(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; 3];
    for i in 0..3 {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (y[i] - (i + 1..3).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

fn newton_direction(h: &[[f64; 3]; 3], g: &[f64; 3]) -> [f64; 3] {
    let neg = [-g[0], -g[1], -g[2]];
    let scale = (h[0][0] + h[1][1] + h[2][2]).max(1e-12);
    let mut damping = 0.0;
    loop {
        let mut hd = *h;
        for (k, row) in hd.iter_mut().enumerate() {
            row[k] += damping;
        }
        if let Some(d) = cholesky_solve(&hd, &neg) {
            if d.iter().all(|v| v.is_finite()) && dot(&d, g) < 0.0 {
                return d;
            }
        }
        damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
        if damping > 1e10 * scale {
            return neg;
        }
    }
}

fn max_norm(v: &[f64; 3]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Every training point on the correct side of the fitted boundary means
/// the unpenalized likelihood has no finite maximizer.
fn separates(beta: &[f64; 3], data: &[ShotFeatures]) -> bool {
    data.iter().all(|f| {
        let z = dot(beta, &design(f));
        if f.label {
            z > 0.0
        } else {
            z < 0.0
        }
    })
}

pub fn fit(features: &[ShotFeatures], options: &FitOptions) -> Result<XgModel, XgError> {
    if !(options.tol > 0.0) || !(options.l2 >= 0.0) || !options.l2.is_finite() {
        return Err(XgError::Options("tol must be positive and l2 non-negative".into()));
    }
    let goals = features.iter().filter(|f| f.label).count();
    if goals == 0 || goals == features.len() {
        return Err(XgError::DegenerateData);
    }
    if features.iter().any(|f| !f.r.is_finite() || !f.theta.is_finite()) {
        return Err(XgError::NonFinite("non-finite shot features".into()));
    }

    let l2 = options.l2;
    let mut beta = [0.0; 3];
    let mut current = loss(&beta, features, l2);
    let mut grad = gradient(&beta, features, l2);
    let mut converged = max_norm(&grad) < options.tol;
    let mut iter = 0;
    while !converged && iter < options.max_iter {
        iter += 1;
        let d = newton_direction(&hessian(&beta, features, l2), &grad);
        let slope = dot(&grad, &d);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = [beta[0] + step * d[0], beta[1] + step * d[1], beta[2] + step * d[2]];
            let l = loss(&trial, features, l2);
            if l.is_finite() && l <= current + 1e-4 * step * slope {
                accepted = Some((trial, l));
                break;
            }
            step *= 0.5;
        }
        let Some((next, l)) = accepted else {
            break;
        };
        beta = next;
        current = l;
        grad = gradient(&beta, features, l2);
        if !beta.iter().all(|b| b.is_finite()) || !current.is_finite() || max_norm(&beta) > 1e6 {
            return Err(XgError::NonFinite(format!("coefficients {beta:?}")));
        }
        converged = max_norm(&grad) < options.tol;
    }
    if l2 == 0.0 && separates(&beta, features) {
        return Err(XgError::NonFinite(format!("perfect separation at {beta:?}")));
    }
    Ok(XgModel {
        beta0: beta[0],
        beta_r: beta[1],
        beta_theta: beta[2],
        n_train: features.len(),
        converged,
        final_loss: current,
        l2,
    })
}

/// Probabilities over a lattice, row-major from the lowest y.
#[derive(Debug, Clone, PartialEq)]
pub struct XgSurface {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

/// Surface over the attacking half `[0, L/2] x [-W/2, W/2]`.
pub fn xg_surface(model: &XgModel, pitch: &PitchSpec, grid_step: f64) -> XgSurface {
    let (hl, hw) = (pitch.half_length(), pitch.half_width());
    xg_surface_region(model, pitch, (0.0, hl, -hw, hw), grid_step)
}

/// Surface over `(x_min, x_max, y_min, y_max)` in right-attacking coordinates.
pub fn xg_surface_region(model: &XgModel, pitch: &PitchSpec, region: (f64, f64, f64, f64), grid_step: f64) -> XgSurface {
    let lattice = Lattice::covering(region.0, region.1, region.2, region.3, grid_step);
    let half = pitch.half_length();
    let values = (0..lattice.len())
        .map(|k| {
            let (x, y) = lattice.center(k);
            let dx = half - x;
            let r = dx.hypot(y);
            let theta = if r == 0.0 { 0.0 } else { y.atan2(dx).abs() };
            predict(model, &ShotFeatures::new(r, theta.min(PI), false))
        })
        .collect();
    XgSurface { lattice, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shot_at(x: f64, y: f64, outcome: ShotOutcome) -> Event {
        Event {
            event_type: EventType::Shot,
            frame: 10,
            actor: EntityId::new("H09").unwrap(),
            actor_team: Team::Home,
            target: None,
            x,
            y,
            outcome: Some(outcome),
            paired_frame: None,
        }
    }

    fn threshold_set(l2: f64) -> (Vec<ShotFeatures>, FitOptions) {
        let data = (0..200)
            .map(|k| {
                let r = 0.15 * k as f64;
                ShotFeatures::new(r, 0.0, r < 10.0)
            })
            .collect();
        (data, FitOptions { l2, ..FitOptions::default() })
    }

    #[test]
    fn polar_features() {
        let pitch = PitchSpec::default();
        let f = shot_features(&shot_at(52.5, 0.0, ShotOutcome::Goal), &pitch, true).unwrap();
        assert_eq!((f.r, f.theta, f.label), (0.0, 0.0, true));
        let f = shot_features(&shot_at(42.5, 0.0, ShotOutcome::KeeperPossession), &pitch, true).unwrap();
        assert_eq!((f.r, f.theta, f.label), (10.0, 0.0, false));
        let f = shot_features(&shot_at(42.5, 10.0, ShotOutcome::Goal), &pitch, true).unwrap();
        assert!((f.r - 200f64.sqrt()).abs() < 1e-12);
        assert!((f.theta - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn left_attacking_shots_are_mirrored() {
        let pitch = PitchSpec::default();
        let left = shot_features(&shot_at(-42.5, -10.0, ShotOutcome::Goal), &pitch, false).unwrap();
        let right = shot_features(&shot_at(42.5, 10.0, ShotOutcome::Goal), &pitch, true).unwrap();
        assert!((left.r - right.r).abs() < 1e-12 && (left.theta - right.theta).abs() < 1e-12);
    }

    #[test]
    fn shots_behind_the_goal_line_are_rejected() {
        let pitch = PitchSpec::default();
        let err = shot_features(&shot_at(53.0, 0.0, ShotOutcome::Goal), &pitch, true).unwrap_err();
        assert!(matches!(err, XgError::Domain { .. }));
        let mut pass = shot_at(0.0, 0.0, ShotOutcome::Goal);
        pass.event_type = EventType::Pass;
        assert!(matches!(shot_features(&pass, &pitch, true), Err(XgError::NotAShot(10))));
    }

    #[test]
    fn predict_limits() {
        let zero = XgModel::with_coefficients(0.0, 0.0, 0.0);
        assert_eq!(predict(&zero, &ShotFeatures::new(17.0, 1.0, false)), 0.5);
        let m = XgModel::with_coefficients(0.0, -1.0, 0.0);
        assert_eq!(predict(&m, &ShotFeatures::new(0.0, 0.0, false)), 0.5);
        let far = predict(&m, &ShotFeatures::new(1e6, 0.0, false));
        assert!(far > 0.0 && far < 1e-300);
        let near = predict(&XgModel::with_coefficients(800.0, 0.0, 0.0), &ShotFeatures::new(0.0, 0.0, false));
        assert!(near < 1.0);
    }

    #[test]
    fn single_class_is_degenerate() {
        let data: Vec<_> = (0..10).map(|k| ShotFeatures::new(k as f64, 0.0, true)).collect();
        assert!(matches!(fit(&data, &FitOptions::default()), Err(XgError::DegenerateData)));
        assert!(matches!(fit(&[], &FitOptions::default()), Err(XgError::DegenerateData)));
    }

    #[test]
    fn separable_data_without_penalty_is_non_finite() {
        let (data, opts) = threshold_set(0.0);
        assert!(matches!(fit(&data, &opts), Err(XgError::NonFinite(_))));
    }

    #[test]
    fn threshold_set_with_small_penalty() {
        let (data, opts) = threshold_set(1e-3);
        let m = fit(&data, &opts).unwrap();
        assert!(m.converged);
        assert!(max_norm(&gradient(&m.coefficients(), &data, opts.l2)) < 1e-8);
        let p = |r| predict(&m, &ShotFeatures::new(r, 0.0, false));
        assert!(p(5.0) > 0.9, "p(5) = {}", p(5.0));
        assert!(p(20.0) < 0.1, "p(20) = {}", p(20.0));
        assert!((0.4..=0.6).contains(&p(10.0)), "p(10) = {}", p(10.0));
    }

    #[test]
    fn duplicating_the_data_keeps_the_fit() {
        let data: Vec<_> = (0..60)
            .map(|k| {
                let r = 1.0 + k as f64 * 0.5;
                let theta = (k % 7) as f64 * 0.2;
                ShotFeatures::new(r, theta, (k * 37) % 11 < (11 - k / 6))
            })
            .collect();
        let once = fit(&data, &FitOptions::default()).unwrap();
        let twice_data: Vec<_> = data.iter().chain(data.iter()).copied().collect();
        let twice = fit(&twice_data, &FitOptions::default()).unwrap();
        for (a, b) in once.coefficients().iter().zip(twice.coefficients()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(twice.n_train, 120);
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let m = XgModel {
            beta0: 0.1 + 0.2,
            beta_r: -1.0 / 3.0,
            beta_theta: -2.5e-7,
            n_train: 42,
            converged: true,
            final_loss: 0.123456789,
            l2: 0.0,
        };
        m.save(&path).unwrap();
        assert_eq!(XgModel::load(&path).unwrap(), m);
        std::fs::write(&path, "format=other\n").unwrap();
        assert!(matches!(XgModel::load(&path), Err(XgError::Model { .. })));
    }

    #[test]
    fn single_cell_surface() {
        let pitch = PitchSpec::default();
        let m = XgModel::with_coefficients(1.0, -0.1, -0.8);
        let s = xg_surface_region(&m, &pitch, (40.0, 41.0, 2.0, 3.0), 1.0);
        assert_eq!(s.values.len(), 1);
        let dx: f64 = 52.5 - 40.5;
        let expect = predict(&m, &ShotFeatures::new(dx.hypot(2.5), 2.5f64.atan2(dx), false));
        assert_eq!(s.values[0], expect);
    }

    #[test]
    fn surface_is_symmetric_and_declines_straight_on() {
        let pitch = PitchSpec::default();
        let m = XgModel::with_coefficients(1.2, -0.12, -1.5);
        let s = xg_surface(&m, &pitch, 1.0);
        let l = s.lattice;
        assert_eq!((l.nx, l.ny), (52, 68));
        for j in 0..l.ny {
            for i in 0..l.nx {
                let a = s.values[j * l.nx + i];
                let b = s.values[(l.ny - 1 - j) * l.nx + i];
                assert!((a - b).abs() <= 1e-12);
            }
        }
        let ray = xg_surface_region(&m, &pitch, (0.0, 52.0, -0.5, 0.5), 1.0);
        assert_eq!((ray.lattice.ny, ray.lattice.y(0)), (1, 0.0));
        for w in ray.values.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    proptest! {
        #[test]
        fn prediction_stays_open_and_monotone(
            b0 in -5.0..5.0f64, br in -1.0..0.0f64, bt in -3.0..0.0f64,
            r in 0.0..60.0f64, theta in 0.0..PI, dr in 0.01..10.0f64, dtheta in 0.01..1.0f64,
        ) {
            let m = XgModel::with_coefficients(b0, br, bt);
            let p = predict(&m, &ShotFeatures::new(r, theta, false));
            prop_assert!(p > 0.0 && p < 1.0);
            prop_assert!(m.logit(r + dr, theta) <= m.logit(r, theta));
            prop_assert!(m.logit(r, theta + dtheta) <= m.logit(r, theta));
        }

        #[test]
        fn features_are_mirror_invariant(x in -52.5..52.5f64, y in -34.0..34.0f64) {
            let pitch = PitchSpec::default();
            let a = shot_features(&shot_at(x, y, ShotOutcome::Goal), &pitch, true);
            let b = shot_features(&shot_at(-x, y, ShotOutcome::Goal), &pitch, false);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((a.r - b.r).abs() < 1e-12);
                    prop_assert!((a.theta - b.theta).abs() < 1e-12);
                    prop_assert!(a.r >= 0.0 && (0.0..=PI).contains(&a.theta));
                }
                (a, b) => prop_assert!(false, "{a:?} {b:?}"),
            }
        }
    }
}
