//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 on data errors, 2 on usage errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::events::{extract_events, write_events_file, EventParams, EventType};
use crate::fsutil;
use crate::ingest::{read_match, read_match_report, write_match, IngestConfig};
use crate::keyvalue::KeyValues;
use crate::lattice::{read_grid, write_grid};
use crate::pitchcontrol::{control_grid_jobs, ControlGrid, ControlParams};
use crate::render::{render_control, render_xg};
use crate::schema::{Frame, Match, PitchSpec};
use crate::stints::{segment_stints, write_stints_file, StintParams};
use crate::syngen::{generate, SynConfig};
use crate::xg::{fit, predict, shot_features, xg_surface, FitOptions, ShotFeatures, XgModel};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(e: impl ToString) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "pitchkit", version, about = "Football tracking-data toolkit")]
struct Cli {
    /// key=value settings file; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-match and per-cell work
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic match and its ground-truth event log
    Synth(SynthArgs),
    /// Check a match file against the schema
    Validate(ValidateArgs),
    /// Extract events from a match
    Events(MatchOut),
    /// Segment a match into stints
    Stints(MatchOut),
    /// Expected-goals model
    #[command(subcommand)]
    Xg(XgCommand),
    /// Pitch-control grid for one frame
    PitchControl(ControlArgs),
    /// Render images
    #[command(subcommand)]
    Render(RenderCommand),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Truth log path; defaults to the output with a `.truth.csv` extension
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    path: PathBuf,
}

#[derive(Debug, Args)]
struct MatchOut {
    path: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum XgCommand {
    /// Fit a model on the shots of one or more matches
    Train {
        #[arg(required = true)]
        matches: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Ridge weight on the distance and angle coefficients
        #[arg(long)]
        l2: Option<f64>,
    },
    /// Score every shot in a match
    Predict {
        #[arg(long)]
        model: PathBuf,
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probability grid over the attacking half
    Surface {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ControlArgs {
    #[arg(long = "match")]
    match_path: PathBuf,
    #[arg(long)]
    frame: usize,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum RenderCommand {
    /// Pitch-control image with player markers
    Control {
        #[arg(long = "match")]
        match_path: PathBuf,
        #[arg(long)]
        frame: usize,
        /// Grid written by `pitch-control`; computed when absent
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// xG surface image with shot locations from the given matches
    Xg {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        step: Option<f64>,
        matches: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Everything a config file may set.
#[derive(Debug, Clone)]
struct Settings {
    synth: SynConfig,
    ingest: IngestConfig,
    events: EventParams,
    stints: StintParams,
    fit: FitOptions,
    control: ControlParams,
    control_step: f64,
    xg_step: f64,
    jobs: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            synth: SynConfig::default(),
            ingest: IngestConfig {
                strict: false,
                ..IngestConfig::default()
            },
            events: EventParams::default(),
            stints: StintParams::default(),
            fit: FitOptions::default(),
            control: ControlParams::default(),
            control_step: 1.0,
            xg_step: 1.0,
            jobs: 1,
        }
    }
}

impl Settings {
    fn from_kv(kv: &KeyValues) -> Result<Settings, String> {
        let mut s = Settings::default();
        let mut length = s.synth.pitch.length;
        let mut width = s.synth.pitch.width;
        let mut goal = s.synth.pitch.goal_width;
        for key in kv.keys() {
            let v: &str = kv.get(key).unwrap_or_default();
            let f = || v.parse::<f64>().map_err(|_| format!("{key}: expected a number, got {v:?}"));
            let u = || v.parse::<usize>().map_err(|_| format!("{key}: expected a count, got {v:?}"));
            match key {
                "seed" => s.synth.seed = v.parse().map_err(|_| format!("seed: expected an integer, got {v:?}"))?,
                "frames" => s.synth.frames = u()?,
                "pass_rate" => s.synth.pass_rate = f()?,
                "shot_rate" => s.synth.shot_rate = f()?,
                "player_max_speed" => s.synth.player_max_speed = f()?,
                "ball_pass_speed" => s.synth.ball_pass_speed = f()?,
                "noise_std" => s.synth.noise_std = f()?,
                "intercept_prob" => s.synth.intercept_prob = f()?,
                "keeper_save_share" => s.synth.keeper_save_share = f()?,
                "goal_logit_intercept" => s.synth.goal_logit[0] = f()?,
                "goal_logit_r" => s.synth.goal_logit[1] = f()?,
                "goal_logit_theta" => s.synth.goal_logit[2] = f()?,
                "dead_frames" => s.synth.dead_frames = u()?,
                "dt" => {
                    s.synth.dt = f()?;
                    s.ingest.dt = s.synth.dt;
                }
                "pitch_length" => length = f()?,
                "pitch_width" => width = f()?,
                "goal_width" => goal = f()?,
                "source_x_min" => s.ingest.source_x_range.0 = f()?,
                "source_x_max" => s.ingest.source_x_range.1 = f()?,
                "source_y_min" => s.ingest.source_y_range.0 = f()?,
                "source_y_max" => s.ingest.source_y_range.1 = f()?,
                "strict" => s.ingest.strict = v.parse().map_err(|_| format!("strict: expected true or false, got {v:?}"))?,
                "out_margin" => s.ingest.out_margin = f()?,
                "flight_gap_max" => s.events.flight_gap_max = u()?,
                "shot_window_max" => s.events.shot_window_max = u()?,
                "teleport_threshold" => {
                    s.events.teleport_threshold = f()?;
                    s.stints.teleport_threshold = s.events.teleport_threshold;
                }
                "lapse_max" => s.stints.lapse_max = u()?,
                "l2" => s.fit.l2 = f()?,
                "tol" => s.fit.tol = f()?,
                "max_iter" => s.fit.max_iter = u()?,
                "xg_step" => s.xg_step = f()?,
                "reaction_time" => s.control.reaction_time = f()?,
                "max_speed" => s.control.max_speed = f()?,
                "ball_speed" => s.control.ball_speed = f()?,
                "sigma" => s.control.sigma = f()?,
                "lambda" => s.control.lambda = f()?,
                "int_dt" => s.control.int_dt = f()?,
                "horizon" => s.control.horizon = f()?,
                "convergence" => s.control.convergence = f()?,
                "step" => s.control_step = f()?,
                "jobs" => s.jobs = u()?,
                other => return Err(format!("unknown setting {other:?}")),
            }
        }
        let pitch = PitchSpec::new(length, width, goal)?;
        if pitch != s.synth.pitch {
            s.synth.pitch = pitch;
            s.ingest.pitch = pitch;
            if !kv.keys().any(|k| k.starts_with("source_x")) {
                s.ingest.source_x_range = (-length / 2.0, length / 2.0);
            }
            if !kv.keys().any(|k| k.starts_with("source_y")) {
                s.ingest.source_y_range = (-width / 2.0, width / 2.0);
            }
        }
        s.synth.check()?;
        s.ingest.check()?;
        s.control.check().map_err(|e| e.to_string())?;
        Ok(s)
    }

    fn load(cli: &Cli) -> CliResult<Settings> {
        let mut s = match &cli.config {
            Some(path) => {
                let text = fsutil::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let kv = KeyValues::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                Settings::from_kv(&kv).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => Settings::default(),
        };
        if let Some(j) = cli.jobs {
            s.jobs = j;
        }
        if s.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(s)
    }
}

fn positive_step(step: f64) -> CliResult<f64> {
    if step > 0.0 && step.is_finite() {
        Ok(step)
    } else {
        Err(CliError::Usage(format!("step must be positive, got {step}")))
    }
}

fn load_match(path: &Path, s: &Settings) -> CliResult<Match> {
    read_match(path, &s.ingest).map_err(CliError::data)
}

fn frame_of<'a>(m: &'a Match, t: usize, path: &Path) -> CliResult<&'a Frame> {
    m.frames
        .get(t)
        .ok_or_else(|| CliError::Data(format!("{}: no frame {t} (match has {})", path.display(), m.frames.len())))
}

fn with_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(pool.install(work))
}

fn match_shots(path: &Path, s: &Settings) -> CliResult<Vec<ShotFeatures>> {
    let m = load_match(path, s)?;
    extract_events(&m, &s.events)
        .iter()
        .filter(|e| e.event_type == EventType::Shot)
        .map(|e| {
            shot_features(e, &m.pitch, m.attacks_right(e.actor_team))
                .map_err(|err| CliError::Data(format!("{}: {err}", path.display())))
        })
        .collect()
}

fn pooled_shots(paths: &[PathBuf], s: &Settings) -> CliResult<Vec<ShotFeatures>> {
    let per_match: Vec<CliResult<Vec<ShotFeatures>>> =
        with_pool(s.jobs, || paths.par_iter().map(|p| match_shots(p, s)).collect())?;
    let mut shots = Vec::new();
    for r in per_match {
        shots.extend(r?);
    }
    Ok(shots)
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn synth(args: SynthArgs, s: &Settings) -> CliResult {
    let mut cfg = s.synth.clone();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(frames) = args.frames {
        cfg.frames = frames;
    }
    cfg.check().map_err(CliError::Usage)?;
    let (m, truth) = generate(&cfg);
    let rows = write_match(&m, &args.out).map_err(CliError::data)?;
    let truth_path = args.truth.unwrap_or_else(|| args.out.with_extension("truth.csv"));
    truth.write_file(&truth_path).map_err(|e| io_error(&truth_path, e))?;
    eprintln!("wrote {} rows to {}", rows, args.out.display());
    Ok(())
}

fn validate(args: ValidateArgs, s: &Settings) -> CliResult {
    let cfg = IngestConfig {
        strict: false,
        ..s.ingest.clone()
    };
    let report = read_match_report(&args.path, &cfg).map_err(CliError::data)?;
    let mut out = std::io::stdout().lock();
    for v in &report.warnings {
        let _ = writeln!(out, "{}: {v}", args.path.display());
    }
    if report.warnings.is_empty() {
        eprintln!("{}: {} rows, no violations", args.path.display(), report.tracking.row_count());
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{}: {} schema violation(s)",
            args.path.display(),
            report.warnings.len()
        )))
    }
}

fn events(args: MatchOut, s: &Settings) -> CliResult {
    let m = load_match(&args.path, s)?;
    let events = extract_events(&m, &s.events);
    write_events_file(&m.match_id, &events, &args.out).map_err(|e| io_error(&args.out, e))
}

fn stints(args: MatchOut, s: &Settings) -> CliResult {
    let m = load_match(&args.path, s)?;
    let events = extract_events(&m, &s.events);
    let stints = segment_stints(&m, &events, &s.stints);
    write_stints_file(&m.match_id, &stints, &args.out).map_err(|e| io_error(&args.out, e))
}

fn load_model(path: &Path) -> CliResult<XgModel> {
    XgModel::load(path).map_err(CliError::data)
}

fn xg(cmd: XgCommand, s: &Settings) -> CliResult {
    match cmd {
        XgCommand::Train { matches, out, l2 } => {
            let shots = pooled_shots(&matches, s)?;
            let options = FitOptions {
                l2: l2.unwrap_or(s.fit.l2),
                ..s.fit
            };
            let model = fit(&shots, &options).map_err(CliError::data)?;
            if !model.converged {
                eprintln!("warning: fit stopped before converging");
            }
            model.save(&out).map_err(CliError::data)?;
            eprintln!(
                "fitted {} shots: beta0={} beta_r={} beta_theta={}",
                model.n_train, model.beta0, model.beta_r, model.beta_theta
            );
            Ok(())
        }
        XgCommand::Predict { model, path, out } => {
            let model = load_model(&model)?;
            let m = load_match(&path, s)?;
            let mut rows = Vec::new();
            for e in extract_events(&m, &s.events).iter().filter(|e| e.event_type == EventType::Shot) {
                let f = shot_features(e, &m.pitch, m.attacks_right(e.actor_team))
                    .map_err(|err| CliError::Data(format!("{}: {err}", path.display())))?;
                rows.push(format!(
                    "{},{},{},{},{},{},{},{},{}",
                    m.match_id,
                    e.frame,
                    e.actor,
                    e.x,
                    e.y,
                    f.r,
                    f.theta,
                    f.label,
                    predict(&model, &f)
                ));
            }
            fsutil::write_atomic(&out, |w| {
                writeln!(w, "match_id,frame,actor,x,y,r,theta,goal,xg")?;
                for r in &rows {
                    writeln!(w, "{r}")?;
                }
                Ok(())
            })
            .map_err(|e| io_error(&out, e))
        }
        XgCommand::Surface { model, step, out } => {
            let model = load_model(&model)?;
            let step = positive_step(step.unwrap_or(s.xg_step))?;
            let surface = xg_surface(&model, &s.synth.pitch, step);
            fsutil::write_atomic(&out, |w| write_grid(&surface.lattice, None, &surface.values, w))
                .map_err(|e| io_error(&out, e))
        }
    }
}

fn compute_grid(m: &Match, frame: &Frame, step: f64, s: &Settings) -> CliResult<ControlGrid> {
    control_grid_jobs(frame, &m.pitch, step, &s.control, s.jobs).map_err(CliError::data)
}

fn pitch_control(args: ControlArgs, s: &Settings) -> CliResult {
    let step = positive_step(args.step.unwrap_or(s.control_step))?;
    let m = load_match(&args.match_path, s)?;
    let frame = frame_of(&m, args.frame, &args.match_path)?;
    let grid = compute_grid(&m, frame, step, s)?;
    fsutil::write_atomic(&args.out, |w| write_grid(&grid.lattice, Some(grid.frame), &grid.values, w))
        .map_err(|e| io_error(&args.out, e))?;
    eprintln!("max residual {}", grid.residual);
    Ok(())
}

fn render(cmd: RenderCommand, s: &Settings) -> CliResult {
    match cmd {
        RenderCommand::Control {
            match_path,
            frame,
            grid,
            step,
            out,
        } => {
            let m = load_match(&match_path, s)?;
            let f = frame_of(&m, frame, &match_path)?;
            let grid = match grid {
                Some(path) => {
                    let text = fsutil::read_to_string(&path).map_err(|e| io_error(&path, e))?;
                    let (lattice, _, values) = read_grid(&text).map_err(|e| io_error(&path, e))?;
                    ControlGrid {
                        lattice,
                        frame,
                        residuals: vec![0.0; values.len()],
                        values,
                        residual: 0.0,
                    }
                }
                None => compute_grid(&m, f, positive_step(step.unwrap_or(s.control_step))?, s)?,
            };
            render_control(&grid, f, &out).map_err(CliError::data)?;
            Ok(())
        }
        RenderCommand::Xg {
            model,
            step,
            matches,
            out,
        } => {
            let model = load_model(&model)?;
            let step = positive_step(step.unwrap_or(s.xg_step))?;
            let shots = pooled_shots(&matches, s)?;
            let surface = xg_surface(&model, &s.synth.pitch, step);
            render_xg(&surface, &shots, &s.synth.pitch, &out).map_err(CliError::data)?;
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let s = Settings::load(&cli)?;
    match cli.command {
        Command::Synth(a) => synth(a, &s),
        Command::Validate(a) => validate(a, &s),
        Command::Events(a) => events(a, &s),
        Command::Stints(a) => stints(a, &s),
        Command::Xg(c) => xg(c, &s),
        Command::PitchControl(a) => pitch_control(a, &s),
        Command::Render(c) => render(c, &s),
    }
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
    }
}
