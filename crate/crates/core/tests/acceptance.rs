//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use pitchkit::events::{extract_events, Event, EventParams, EventType};
use pitchkit::ingest::{read_match, write_match, write_rows, IngestConfig};
use pitchkit::pitchcontrol::{control_at, control_grid, control_grid_jobs, ControlParams};
use pitchkit::render::{self, control_field, control_image, PixelMap, PIXELS_PER_METER, WHITE};
use pitchkit::schema::{EntityId, EntityRecord, Frame, Match, PitchSpec, Team};
use pitchkit::stints::{segment_stints, StintParams};
use pitchkit::syngen::{generate, SynConfig, TruthEvent, TruthKind, TruthLog};
use pitchkit::xg::{fit, gradient, shot_features, xg_surface, FitOptions, ShotFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn synth(seed: u64) -> (Match, TruthLog) {
    generate(&SynConfig::with_seed(seed))
}

fn schema_arithmetic() -> Outcome {
    let start = Instant::now();
    let (m, _) = synth(1);
    let mut buf = Vec::new();
    let rows = write_rows(&m, &mut buf).map_err(|e| e.to_string())?;
    let lines = buf.iter().filter(|&&b| b == b'\n').count() - 1;
    let violations = m.validate();
    let elapsed = start.elapsed().as_secs_f64();
    check(m.frames.len() == 3000, || format!("{} frames", m.frames.len()))?;
    check(rows == 69_000 && lines == 69_000, || format!("{rows} rows written, {lines} data lines"))?;
    check(violations.is_empty(), || format!("{} violations, first {}", violations.len(), violations[0]))?;
    check(elapsed < 5.0, || format!("took {elapsed:.2} s"))?;
    Ok(format!("69000 rows, 0 violations, {elapsed:.2} s"))
}

fn round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = IngestConfig::default();
    for seed in 1..=20 {
        let (m, _) = synth(seed);
        let a = dir.path().join(format!("m{seed}.csv"));
        let b = dir.path().join(format!("m{seed}-again.csv"));
        write_match(&m, &a).map_err(|e| e.to_string())?;
        let back = read_match(&a, &config).map_err(|e| e.to_string())?;
        check(back == m, || format!("seed {seed}: read(write(m)) differs"))?;
        write_match(&back, &b).map_err(|e| e.to_string())?;
        let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        check(ba == bb, || format!("seed {seed}: rewritten bytes differ"))?;
        let (ma, mb) = (
            std::fs::read(a.with_extension("meta")).unwrap(),
            std::fs::read(b.with_extension("meta")).unwrap(),
        );
        check(ma == mb, || format!("seed {seed}: rewritten meta differs"))?;
    }
    Ok("20 matches, exact".into())
}

fn truth_type(kind: TruthKind) -> Option<EventType> {
    match kind {
        TruthKind::Pass => Some(EventType::Pass),
        TruthKind::Reception => Some(EventType::Reception),
        TruthKind::Turnover => Some(EventType::Turnover),
        TruthKind::Interception => Some(EventType::Interception),
        TruthKind::Shot => Some(EventType::Shot),
        TruthKind::Goal => Some(EventType::Goal),
        TruthKind::OutOfPlay => Some(EventType::OutOfPlay),
        TruthKind::Restart => None,
    }
}

/// Pairs extracted events with truth entries of the same type in frame
/// order; every pair must share the actor (and shot outcome) and lie
/// within one frame.
fn compare_events(seed: u64, truth: &[TruthEvent], events: &[Event]) -> Result<usize, String> {
    let mut by_type: HashMap<EventType, (Vec<&TruthEvent>, Vec<&Event>)> = HashMap::new();
    for t in truth {
        if let Some(ty) = truth_type(t.kind) {
            by_type.entry(ty).or_default().0.push(t);
        }
    }
    for e in events {
        by_type.entry(e.event_type).or_default().1.push(e);
    }
    let mut matched = 0;
    for (ty, (ts, es)) in &by_type {
        check(ts.len() == es.len(), || {
            format!("seed {seed}: {} truth {ty:?} vs {} extracted", ts.len(), es.len())
        })?;
        for (t, e) in ts.iter().zip(es) {
            check(t.frame.abs_diff(e.frame) <= 1, || {
                format!("seed {seed}: {ty:?} truth frame {} vs extracted {}", t.frame, e.frame)
            })?;
            check(t.actor() == &e.actor, || {
                format!("seed {seed}: {ty:?} at {} actor {} vs {}", t.frame, t.actor(), e.actor)
            })?;
            if *ty == EventType::Shot {
                check(t.outcome == e.outcome, || {
                    format!("seed {seed}: shot at {} outcome {:?} vs {:?}", t.frame, t.outcome, e.outcome)
                })?;
            }
            matched += 1;
        }
    }
    let count = |ty| events.iter().filter(|e| e.event_type == ty).count();
    check(count(EventType::Pass) == count(EventType::Reception), || {
        format!("seed {seed}: passes and receptions differ")
    })?;
    check(count(EventType::Turnover) == count(EventType::Interception), || {
        format!("seed {seed}: turnovers and interceptions differ")
    })?;
    Ok(matched)
}

struct Corpus {
    matches: Vec<(u64, Match, TruthLog, Vec<Event>)>,
    seconds: f64,
}

fn event_corpus() -> Corpus {
    let start = Instant::now();
    let matches = (1..=50u64)
        .map(|seed| {
            let (m, log) = synth(seed);
            let events = extract_events(&m, &EventParams::default());
            (seed, m, log, events)
        })
        .collect();
    Corpus {
        matches,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn event_oracle(corpus: &Corpus) -> Outcome {
    let mut matched = 0;
    for (seed, _, log, events) in &corpus.matches {
        matched += compare_events(*seed, &log.events, events)?;
    }
    check(corpus.seconds < 60.0, || format!("took {:.1} s", corpus.seconds))?;
    Ok(format!("50 matches, {matched} events matched, {:.1} s", corpus.seconds))
}

fn stint_partition(corpus: &Corpus) -> Outcome {
    let mut total = 0;
    for (seed, m, log, events) in &corpus.matches {
        let stints = segment_stints(m, events, &StintParams::default());
        check(!stints.is_empty(), || format!("seed {seed}: no stints"))?;
        for s in &stints {
            check(s.start_frame <= s.end_frame, || format!("seed {seed}: empty stint {}", s.stint_id))?;
        }
        for w in stints.windows(2) {
            check(w[0].end_frame < w[1].start_frame, || {
                format!("seed {seed}: {} overlaps {}", w[0].stint_id, w[1].stint_id)
            })?;
        }
        for (t, f) in m.frames.iter().enumerate() {
            if f.possessor().is_some() {
                check(stints.iter().any(|s| s.contains(t)), || {
                    format!("seed {seed}: possession frame {t} outside every stint")
                })?;
            }
        }
        let restarts = log.restarts().count();
        check(stints.len() - 1 == restarts, || {
            format!("seed {seed}: {} boundaries vs {restarts} restarts", stints.len() - 1)
        })?;
        total += stints.len();
    }
    Ok(format!("50 matches, {total} stints"))
}

/// Mean log-loss plus ridge term, written out independently of the library.
fn oracle_loss(b0: f64, br: f64, bt: f64, data: &[ShotFeatures], l2: f64) -> f64 {
    let mut sum = 0.0;
    for f in data {
        let z = b0 + br * f.r + bt * f.theta;
        // -ln sigmoid(z) = ln(1 + e^-z); -ln(1 - sigmoid(z)) = ln(1 + e^z)
        let nll = if f.label { (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        let nll = if nll.is_finite() { nll } else if f.label { -z } else { z };
        sum += nll;
    }
    sum / data.len() as f64 + 0.5 * l2 * (br * br + bt * bt)
}

/// Minimizes over (beta0, beta_r) with beta_theta = 0 by successive grid
/// refinement.
fn grid_search(data: &[ShotFeatures], l2: f64) -> (f64, f64, f64) {
    let (mut c0, mut cr) = (0.0, 0.0);
    let (mut h0, mut hr) = (40.0, 4.0);
    let mut best = oracle_loss(c0, cr, 0.0, data, l2);
    for _ in 0..12 {
        let n = 100;
        for i in -n..=n {
            for j in -n..=n {
                let b0 = c0 + h0 * i as f64 / n as f64;
                let br = cr + hr * j as f64 / n as f64;
                let l = oracle_loss(b0, br, 0.0, data, l2);
                if l < best {
                    best = l;
                    c0 = b0;
                    cr = br;
                }
            }
        }
        h0 /= 8.0;
        hr /= 8.0;
    }
    (c0, cr, best)
}

fn xg_optimizer() -> Outcome {
    // label = 1 iff r < 10; separable, so a small ridge keeps the optimum finite
    let l2 = 1e-3;
    let data: Vec<ShotFeatures> = (0..200)
        .map(|k| {
            let r = 0.15 * k as f64;
            ShotFeatures::new(r, 0.0, r < 10.0)
        })
        .collect();
    let options = FitOptions { l2, ..FitOptions::default() };
    let model = fit(&data, &options).map_err(|e| e.to_string())?;
    let fitted = oracle_loss(model.beta0, model.beta_r, model.beta_theta, &data, l2);
    let (_, _, oracle) = grid_search(&data, l2);
    check((fitted - oracle).abs() < 1e-4, || format!("fit loss {fitted} vs oracle {oracle}"))?;
    check(model.converged, || "fit did not converge".into())?;
    let g = gradient(&model.coefficients(), &data, l2);
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check(gmax < 1e-8, || format!("converged gradient max-norm {gmax:e}"))?;

    // finite differences on a noisy two-feature set
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noisy: Vec<ShotFeatures> = (0..200)
        .map(|_| {
            let r: f64 = rng.random_range(0.0..35.0);
            let theta: f64 = rng.random_range(0.0..1.5);
            let p = 1.0 / (1.0 + (-(1.0 - 0.15 * r - theta)).exp());
            ShotFeatures::new(r, theta, rng.random_bool(p))
        })
        .collect();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let beta = [rng.random_range(-2.0..2.0), rng.random_range(-0.3..0.3), rng.random_range(-2.0..2.0)];
        let lam = rng.random_range(0.0..0.1);
        let analytic = gradient(&beta, &noisy, lam);
        for k in 0..3 {
            let h = 1e-5;
            let mut up = beta;
            let mut down = beta;
            up[k] += h;
            down[k] -= h;
            let fd = (oracle_loss(up[0], up[1], up[2], &noisy, lam) - oracle_loss(down[0], down[1], down[2], &noisy, lam)) / (2.0 * h);
            let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    check(worst < 1e-6, || format!("finite-difference relative error {worst:e}"))?;
    Ok(format!(
        "loss gap {:.1e}, grad max-norm {gmax:.1e}, fd rel err {worst:.1e}",
        (fitted - oracle).abs()
    ))
}

fn xg_qualitative() -> Outcome {
    let shots: Vec<ShotFeatures> = (1..=200u64)
        .into_par_iter()
        .map(|seed| {
            let (m, _) = synth(1000 + seed);
            extract_events(&m, &EventParams::default())
                .iter()
                .filter(|e| e.event_type == EventType::Shot)
                .map(|e| shot_features(e, &m.pitch, m.attacks_right(e.actor_team)).expect("shot inside pitch"))
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    let goals = shots.iter().filter(|s| s.label).count();
    let model = fit(&shots, &FitOptions::default()).map_err(|e| e.to_string())?;
    check(model.beta_r < 0.0, || format!("beta_r = {}", model.beta_r))?;
    check(model.beta_theta < 0.0, || format!("beta_theta = {}", model.beta_theta))?;
    // logit declines along every ray from the goal centre
    let pitch = PitchSpec::default();
    let surface = xg_surface(&model, &pitch, 1.0);
    for a in 0..=36 {
        let phi = -PI / 2.0 + PI * a as f64 / 36.0;
        let mut last = f64::INFINITY;
        for step in 0..200 {
            let r = 0.25 * step as f64;
            let (x, y) = (pitch.half_length() - r * phi.cos(), r * phi.sin());
            if x < 0.0 || y.abs() > pitch.half_width() {
                break;
            }
            let z = model.logit(r, phi.abs());
            check(z < last || r == 0.0, || format!("logit rises along ray {phi:.3} at r = {r}"))?;
            last = z;
        }
    }
    check(surface.values.iter().all(|p| *p > 0.0 && *p < 1.0), || "surface outside (0, 1)".into())?;
    Ok(format!(
        "{} shots ({goals} goals), beta_r = {:.4}, beta_theta = {:.4}",
        shots.len(),
        model.beta_r,
        model.beta_theta
    ))
}

fn sample_frames(count: usize, seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(count);
    for s in 0..count.div_ceil(20) as u64 {
        let (m, _) = synth(500 + s);
        for _ in 0..20 {
            let t = rng.random_range(0..m.frames.len());
            frames.push(m.frames[t].clone());
        }
    }
    frames.truncate(count);
    frames
}

fn random_target(rng: &mut ChaCha8Rng, pitch: &PitchSpec) -> (f64, f64) {
    (
        rng.random_range(-pitch.half_length()..=pitch.half_length()),
        rng.random_range(-pitch.half_width()..=pitch.half_width()),
    )
}

fn normalization(frames: &[Frame]) -> Outcome {
    let pitch = PitchSpec::default();
    let params = ControlParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for f in frames {
        for _ in 0..50 {
            let target = random_target(&mut rng, &pitch);
            let c = control_at(f, target, &params).map_err(|e| e.to_string())?;
            check(c.p_home + c.p_away + c.residual == 1.0, || format!("sum != 1 at {target:?}: {c:?}"))?;
            check(c.residual >= 0.0 && c.residual < 0.01, || format!("residual {} at {target:?}", c.residual))?;
            worst = worst.max(c.residual);
        }
    }
    Ok(format!("{} evaluations, max residual {worst:.6}", frames.len() * 50))
}

fn mirrored(frame: &Frame) -> Frame {
    let mut recs = Vec::new();
    for r in &frame.records {
        match r.team {
            Team::Ball => recs.push(EntityRecord {
                x: 0.0,
                y: 0.0,
                vx: 0.0,
                vy: 0.0,
                ..r.clone()
            }),
            Team::Home => {
                recs.push(r.clone());
                recs.push(EntityRecord {
                    entity_id: EntityId::new(format!("A{}", &r.entity_id.as_str()[1..])).unwrap(),
                    team: Team::Away,
                    x: -r.x,
                    y: -r.y,
                    vx: -r.vx,
                    vy: -r.vy,
                    has_ball: false,
                    ..r.clone()
                });
            }
            Team::Away => {}
        }
    }
    Frame::new(frame.timestep, recs)
}

fn swapped(frame: &Frame) -> Frame {
    let recs = frame
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            let flip = match r.team {
                Team::Home => Some((Team::Away, "A")),
                Team::Away => Some((Team::Home, "H")),
                Team::Ball => None,
            };
            if let Some((team, prefix)) = flip {
                r.team = team;
                r.entity_id = EntityId::new(format!("{prefix}{}", &r.entity_id.as_str()[1..])).unwrap();
            }
            r
        })
        .collect();
    Frame::new(frame.timestep, recs)
}

fn symmetry(frames: &[Frame]) -> Outcome {
    let pitch = PitchSpec::default();
    let params = ControlParams::default();
    let mut worst_centre: f64 = 0.0;
    for f in frames.iter().take(20) {
        let c = control_at(&mirrored(f), (0.0, 0.0), &params).map_err(|e| e.to_string())?;
        worst_centre = worst_centre.max((c.p_home - c.p_away).abs());
    }
    check(worst_centre < 1e-6, || format!("centre imbalance {worst_centre:e}"))?;
    let mut worst_swap: f64 = 0.0;
    for f in frames.iter().take(3) {
        let a = control_grid(f, &pitch, 1.0, &params).map_err(|e| e.to_string())?;
        let b = control_grid(&swapped(f), &pitch, 1.0, &params).map_err(|e| e.to_string())?;
        for k in 0..a.values.len() {
            worst_swap = worst_swap.max((b.values[k] - (1.0 - a.values[k] - a.residuals[k])).abs());
        }
    }
    check(worst_swap < 1e-12, || format!("team swap deviation {worst_swap:e}"))?;
    Ok(format!("centre gap {worst_centre:.1e}, swap gap {worst_swap:.1e}"))
}

fn voronoi_limit(frames: &[Frame]) -> Outcome {
    let pitch = PitchSpec::default();
    let params = ControlParams {
        sigma: 1e-3,
        lambda: 1e3,
        int_dt: 1e-4,
        horizon: 30.0,
        ..ControlParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut cases = Vec::new();
    for f in frames {
        for _ in 0..20 {
            let target = random_target(&mut rng, &pitch);
            // still players, ball already at the target
            let recs = f
                .records
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.vx = 0.0;
                    r.vy = 0.0;
                    if r.is_ball() {
                        r.x = target.0;
                        r.y = target.1;
                    }
                    r
                })
                .collect();
            cases.push((Frame::new(f.timestep, recs), target));
        }
    }
    let agree: Vec<Result<bool, String>> = cases
        .par_iter()
        .map(|(f, target)| {
            let nearest = f
                .agents()
                .map(|r| (params.reaction_time + (r.x - target.0).hypot(r.y - target.1) / params.max_speed, r.team))
                .fold((f64::INFINITY, Team::Ball), |best, c| if c.0 < best.0 { c } else { best });
            let c = control_at(f, *target, &params).map_err(|e| e.to_string())?;
            let winner = if c.p_home > c.p_away { Team::Home } else { Team::Away };
            Ok(winner == nearest.1)
        })
        .collect();
    let mut hits = 0;
    for a in agree {
        if a? {
            hits += 1;
        }
    }
    check(hits == cases.len(), || format!("{hits}/{} agree", cases.len()))?;
    Ok(format!("{hits}/{} argmax agreement", cases.len()))
}

fn parallel_determinism(frames: &[Frame]) -> Outcome {
    let pitch = PitchSpec::default();
    let params = ControlParams::default();
    let frame = &frames[0];
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let start = Instant::now();
    let full = control_grid_jobs(frame, &pitch, 1.0, &params, cores).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    check((full.nx(), full.ny()) == (105, 68), || format!("grid {}x{}", full.nx(), full.ny()))?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let reference = bits(&full.values);
    for jobs in [1, 4, 8] {
        let g = control_grid_jobs(frame, &pitch, 1.0, &params, jobs).map_err(|e| e.to_string())?;
        check(bits(&g.values) == reference && bits(&g.residuals) == bits(&full.residuals), || {
            format!("jobs = {jobs} differs")
        })?;
    }
    check(elapsed < 10.0, || format!("full grid took {elapsed:.2} s"))?;
    Ok(format!("jobs 1/4/8 identical, 105x68 grid in {elapsed:.3} s on {cores} threads"))
}

fn render_contract(frames: &[Frame]) -> Outcome {
    let pitch = PitchSpec::default();
    let frame = &frames[0];
    let mut grid = control_grid(frame, &pitch, 1.0, &ControlParams::default()).map_err(|e| e.to_string())?;
    grid.values.iter_mut().for_each(|v| *v = 0.5);
    let field = control_field(&grid).map_err(|e| e.to_string())?;
    check(field.pixels().all(|p| *p == WHITE), || "uniform 0.5 field is not all white".into())?;
    let img = control_image(&grid, frame).map_err(|e| e.to_string())?;
    let map = PixelMap::for_lattice(&grid.lattice, PIXELS_PER_METER);
    for (px, py, p) in img.enumerate_pixels() {
        let (x, y) = map.to_world(px, py);
        let clear = frame.records.iter().all(|r| (r.x - x).hypot(r.y - y) > 4.0);
        check(!clear || *p == WHITE, || format!("pixel ({px}, {py}) away from markers is {p:?}"))?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
    let real = control_grid(frame, &pitch, 1.0, &ControlParams::default()).map_err(|e| e.to_string())?;
    render::render_control(&real, frame, &a).map_err(|e| e.to_string())?;
    let again = control_grid(frame, &pitch, 1.0, &ControlParams::default()).map_err(|e| e.to_string())?;
    render::render_control(&again, frame, &b).map_err(|e| e.to_string())?;
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    check(ba == bb, || "renders differ between runs".into())?;
    check(ba.starts_with(b"P6"), || "not a binary PPM".into())?;
    Ok(format!("white neutral field, {} stable bytes", ba.len()))
}

fn main() {
    let frames = sample_frames(100, 3);
    let corpus = event_corpus();
    let criteria: Vec<Criterion<'_>> = vec![
        ("schema-arithmetic", Box::new(schema_arithmetic)),
        ("round-trip", Box::new(round_trip)),
        ("event-oracle", Box::new(|| event_oracle(&corpus))),
        ("stint-partition", Box::new(|| stint_partition(&corpus))),
        ("xg-optimizer", Box::new(xg_optimizer)),
        ("xg-qualitative", Box::new(xg_qualitative)),
        ("control-normalization", Box::new(|| normalization(&frames))),
        ("control-symmetry", Box::new(|| symmetry(&frames))),
        ("voronoi-limit", Box::new(|| voronoi_limit(&frames))),
        ("parallel-determinism", Box::new(|| parallel_determinism(&frames))),
        ("render-contract", Box::new(|| render_contract(&frames))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  {name:<22} {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<22} {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
