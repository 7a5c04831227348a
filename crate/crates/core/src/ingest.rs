//! Reading and writing tracking files.
//!
//! A match is one comma-separated file with the header
//! `match_id,timestep,entity_id,team,role,x,y,vx,vy,has_ball` plus an
//! optional `<stem>.meta` sidecar of `key=value` lines describing the pitch,
//! timestep length, attacking side and source coordinate ranges.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fsutil;
use crate::keyvalue::KeyValues;
use crate::schema::{
    validate_frame_with_margin, EntityId, EntityRecord, Frame, Match, PitchSpec, Role, Rule, Team, Violation,
    DEFAULT_DT, DEFAULT_OUT_MARGIN,
};

pub const HEADER: [&str; 10] = [
    "match_id", "timestep", "entity_id", "team", "role", "x", "y", "vx", "vy", "has_ball",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {} schema violation(s); first: {}", path.display(), violations.len(), violations[0])]
    Schema { path: PathBuf, violations: Vec<Violation> },
    #[error("{}:{line}: entity {entity} appears twice in timestep {timestep}", path.display())]
    DuplicateEntity {
        path: PathBuf,
        line: usize,
        timestep: usize,
        entity: String,
    },
}

/// Linear map of one axis from a source interval onto a canonical one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMap {
    pub src: (f64, f64),
    pub dst: (f64, f64),
}

impl AxisMap {
    pub fn new(src: (f64, f64), dst: (f64, f64)) -> Self {
        AxisMap { src, dst }
    }

    pub fn is_identity(&self) -> bool {
        self.src == self.dst
    }

    pub fn scale(&self) -> f64 {
        if self.is_identity() {
            1.0
        } else {
            (self.dst.1 - self.dst.0) / (self.src.1 - self.src.0)
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        if self.is_identity() {
            return v;
        }
        self.dst.0 + (v - self.src.0) * self.scale()
    }

    pub fn inverse(&self, v: f64) -> f64 {
        if self.is_identity() {
            return v;
        }
        self.src.0 + (v - self.dst.0) / self.scale()
    }

    /// Velocities only scale; the offset cancels.
    pub fn forward_rate(&self, v: f64) -> f64 {
        if self.is_identity() {
            v
        } else {
            v * self.scale()
        }
    }
}

/// Maps canonical column names to the names used by a foreign export.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnMap(pub BTreeMap<String, String>);

impl ColumnMap {
    fn source_name<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.0.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub source_x_range: (f64, f64),
    pub source_y_range: (f64, f64),
    pub dt: f64,
    /// Any schema violation aborts the read when set.
    pub strict: bool,
    pub out_margin: f64,
    pub pitch: PitchSpec,
    pub attacking_right: Team,
    pub columns: ColumnMap,
}

impl Default for IngestConfig {
    fn default() -> Self {
        let pitch = PitchSpec::default();
        IngestConfig {
            source_x_range: (-pitch.half_length(), pitch.half_length()),
            source_y_range: (-pitch.half_width(), pitch.half_width()),
            dt: DEFAULT_DT,
            strict: true,
            out_margin: DEFAULT_OUT_MARGIN,
            pitch,
            attacking_right: Team::Home,
            columns: ColumnMap::default(),
        }
    }
}

impl IngestConfig {
    /// Source ranges of a normalized simulator space: x in [-1, 1] and
    /// y in [-0.42, 0.42]. These constants are assumptions about the
    /// simulator's headless coordinates.
    pub fn normalized_source() -> Self {
        IngestConfig {
            source_x_range: (-1.0, 1.0),
            source_y_range: (-0.42, 0.42),
            ..IngestConfig::default()
        }
    }

    pub fn check(&self) -> Result<(), String> {
        let (x0, x1) = self.source_x_range;
        let (y0, y1) = self.source_y_range;
        if !(x0 < x1) || !(y0 < y1) {
            return Err("source ranges need min < max".into());
        }
        if !(self.dt > 0.0) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        self.pitch.check()
    }

    pub fn x_map(&self) -> AxisMap {
        let h = self.pitch.half_length();
        AxisMap::new(self.source_x_range, (-h, h))
    }

    pub fn y_map(&self) -> AxisMap {
        let h = self.pitch.half_width();
        AxisMap::new(self.source_y_range, (-h, h))
    }

    /// Applies sidecar keys on top of this config.
    pub fn with_meta(&self, meta: &KeyValues) -> Result<IngestConfig, String> {
        let mut cfg = self.clone();
        if let Some(dt) = meta.parse_opt("dt")? {
            cfg.dt = dt;
        }
        let length = meta.parse_opt("pitch_length")?.unwrap_or(cfg.pitch.length);
        let width = meta.parse_opt("pitch_width")?.unwrap_or(cfg.pitch.width);
        let goal = meta.parse_opt("goal_width")?.unwrap_or(cfg.pitch.goal_width);
        let resized = length != cfg.pitch.length || width != cfg.pitch.width;
        cfg.pitch = PitchSpec::new(length, width, goal)?;
        if resized {
            // canonical ranges follow the pitch unless the sidecar overrides them
            if cfg.source_x_range == self.x_map().dst {
                cfg.source_x_range = (-length / 2.0, length / 2.0);
            }
            if cfg.source_y_range == self.y_map().dst {
                cfg.source_y_range = (-width / 2.0, width / 2.0);
            }
        }
        if let Some(team) = meta.parse_opt::<Team>("attacking_right")? {
            if team == Team::Ball {
                return Err("attacking_right must be HOME or AWAY".into());
            }
            cfg.attacking_right = team;
        }
        let sx0 = meta.parse_opt("source_x_min")?.unwrap_or(cfg.source_x_range.0);
        let sx1 = meta.parse_opt("source_x_max")?.unwrap_or(cfg.source_x_range.1);
        let sy0 = meta.parse_opt("source_y_min")?.unwrap_or(cfg.source_y_range.0);
        let sy1 = meta.parse_opt("source_y_max")?.unwrap_or(cfg.source_y_range.1);
        cfg.source_x_range = (sx0, sx1);
        cfg.source_y_range = (sy0, sy1);
        cfg.check()?;
        Ok(cfg)
    }
}

/// A parsed match plus the non-fatal findings of a lenient read.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub tracking: Match,
    pub warnings: Vec<Violation>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

pub fn read_match(path: &Path, config: &IngestConfig) -> Result<Match, IngestError> {
    read_match_report(path, config).map(|i| i.tracking)
}

pub fn read_match_report(path: &Path, config: &IngestConfig) -> Result<Ingested, IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let text = fsutil::read_to_string(path).map_err(io_err)?;
    let meta_file = meta_path(path);
    let meta = if meta_file.is_file() {
        let raw = fsutil::read_to_string(&meta_file).map_err(|source| IngestError::Io {
            path: meta_file.clone(),
            source,
        })?;
        Some(KeyValues::parse(&raw).map_err(|e| IngestError::Parse {
            path: meta_file.clone(),
            line: e.line,
            message: e.message,
        })?)
    } else {
        None
    };
    parse_match(&text, meta.as_ref(), config, path)
}

/// Parses match text. `origin` is only used in error messages.
pub fn parse_match(
    text: &str,
    meta: Option<&KeyValues>,
    config: &IngestConfig,
    origin: &Path,
) -> Result<Ingested, IngestError> {
    let parse_err = |line: usize, message: String| IngestError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let cfg = match meta {
        Some(m) => config.with_meta(m).map_err(|e| parse_err(0, format!("meta: {e}")))?,
        None => {
            config.check().map_err(|e| parse_err(0, format!("config: {e}")))?;
            config.clone()
        }
    };
    let velocity_flagged = meta.and_then(|m| m.get("velocity")) == Some("derived");

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();

    let header = match rows.next() {
        None => return Err(parse_err(1, "empty file: missing header".into())),
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
    };
    let columns = resolve_columns(&header, &cfg.columns).map_err(|m| parse_err(1, m))?;
    let xmap = cfg.x_map();
    let ymap = cfg.y_map();

    let mut match_id: Option<String> = None;
    let mut by_timestep: BTreeMap<usize, Vec<(usize, EntityRecord)>> = BTreeMap::new();
    for row in rows {
        let row = row.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() == 1 && row.get(0) == Some("") {
            continue;
        }
        if row.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", header.len(), row.len()),
            ));
        }
        let mut rec = columns.parse_row(&row).map_err(|m| parse_err(line, m))?;
        match &match_id {
            None => match_id = Some(rec.match_id.clone()),
            Some(id) if *id != rec.match_id => {
                return Err(parse_err(line, format!("match id {:?} differs from {:?}", rec.match_id, id)))
            }
            Some(_) => {}
        }
        rec.x = xmap.forward(rec.x);
        rec.y = ymap.forward(rec.y);
        rec.vx = xmap.forward_rate(rec.vx);
        rec.vy = ymap.forward_rate(rec.vy);

        let bucket = by_timestep.entry(rec.timestep).or_default();
        if let Some((_, dup)) = bucket.iter().find(|(_, r)| r.entity_id == rec.entity_id) {
            return Err(IngestError::DuplicateEntity {
                path: origin.to_path_buf(),
                line,
                timestep: dup.timestep,
                entity: dup.entity_id.to_string(),
            });
        }
        bucket.push((line, rec));
    }
    let Some(match_id) = match_id else {
        return Err(parse_err(2, "no data rows".into()));
    };

    let mut frames = Vec::with_capacity(by_timestep.len());
    for (expected, (t, bucket)) in by_timestep.into_iter().enumerate() {
        if t != expected {
            return Err(IngestError::Schema {
                path: origin.to_path_buf(),
                violations: vec![Violation {
                    rule: Rule::TimestepSequence,
                    entity: None,
                    timestep: t,
                    detail: format!("expected timestep {expected}"),
                }],
            });
        }
        frames.push(Frame::new(t, bucket.into_iter().map(|(_, r)| r).collect()));
    }

    let derived = !columns.has_velocity;
    if derived {
        derive_velocities(&mut frames, cfg.dt);
    }

    let violations: Vec<Violation> = frames
        .iter()
        .flat_map(|f| validate_frame_with_margin(f, &cfg.pitch, cfg.out_margin))
        .collect();
    if cfg.strict && !violations.is_empty() {
        return Err(IngestError::Schema {
            path: origin.to_path_buf(),
            violations,
        });
    }

    Ok(Ingested {
        tracking: Match {
            match_id,
            pitch: cfg.pitch,
            dt: cfg.dt,
            frames,
            attacking_right: cfg.attacking_right,
            velocity_derived: derived || velocity_flagged,
        },
        warnings: violations,
    })
}

struct Columns {
    idx: HashMap<&'static str, usize>,
    has_velocity: bool,
}

fn resolve_columns(header: &csv::StringRecord, map: &ColumnMap) -> Result<Columns, String> {
    let mut idx = HashMap::new();
    for name in HEADER {
        let source = map.source_name(name);
        if let Some(i) = header.iter().position(|h| h.trim() == source) {
            idx.insert(name, i);
        }
    }
    for name in HEADER {
        if matches!(name, "vx" | "vy") {
            continue;
        }
        if !idx.contains_key(name) {
            return Err(format!("header is missing column {:?}", map.source_name(name)));
        }
    }
    let has_velocity = match (idx.contains_key("vx"), idx.contains_key("vy")) {
        (true, true) => true,
        (false, false) => false,
        _ => return Err("vx and vy must be both present or both absent".into()),
    };
    Ok(Columns { idx, has_velocity })
}

impl Columns {
    fn field<'r>(&self, row: &'r csv::StringRecord, name: &str) -> &'r str {
        row.get(self.idx[name]).unwrap_or("")
    }

    fn float(&self, row: &csv::StringRecord, name: &str) -> Result<f64, String> {
        let raw = self.field(row, name);
        raw.trim()
            .parse::<f64>()
            .map_err(|_| format!("column {name}: non-numeric value {raw:?}"))
    }

    fn parse_row(&self, row: &csv::StringRecord) -> Result<EntityRecord, String> {
        let timestep_raw = self.field(row, "timestep");
        let timestep = timestep_raw
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("column timestep: invalid value {timestep_raw:?}"))?;
        let entity_id = EntityId::new(self.field(row, "entity_id").trim()).map_err(|e| format!("column entity_id: {e}"))?;
        let team: Team = self.field(row, "team").trim().parse().map_err(|e| format!("column team: {e}"))?;
        let role: Role = self.field(row, "role").trim().parse().map_err(|e| format!("column role: {e}"))?;
        let has_ball = match self.field(row, "has_ball").trim() {
            "0" => false,
            "1" => true,
            other => return Err(format!("column has_ball: expected 0 or 1, got {other:?}")),
        };
        let (vx, vy) = if self.has_velocity {
            (self.float(row, "vx")?, self.float(row, "vy")?)
        } else {
            (0.0, 0.0)
        };
        Ok(EntityRecord {
            match_id: self.field(row, "match_id").to_string(),
            timestep,
            entity_id,
            team,
            role,
            x: self.float(row, "x")?,
            y: self.float(row, "y")?,
            vx,
            vy,
            has_ball,
        })
    }
}

/// Central differences of position, one-sided at the ends of each
/// entity's track.
pub fn derive_velocities(frames: &mut [Frame], dt: f64) {
    let n = frames.len();
    if n == 0 {
        return;
    }
    let mut updates: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n);
    for t in 0..n {
        let mut v = Vec::with_capacity(frames[t].records.len());
        for rec in &frames[t].records {
            let find = |k: usize| frames[k].entity(&rec.entity_id).map(|r| (r.x, r.y));
            let prev = if t > 0 { find(t - 1) } else { None };
            let next = if t + 1 < n { find(t + 1) } else { None };
            let here = (rec.x, rec.y);
            let vel = match (prev, next) {
                (Some(p), Some(q)) => ((q.0 - p.0) / (2.0 * dt), (q.1 - p.1) / (2.0 * dt)),
                (None, Some(q)) => ((q.0 - here.0) / dt, (q.1 - here.1) / dt),
                (Some(p), None) => ((here.0 - p.0) / dt, (here.1 - p.1) / dt),
                (None, None) => (0.0, 0.0),
            };
            v.push(vel);
        }
        updates.push(v);
    }
    for (frame, vels) in frames.iter_mut().zip(updates) {
        for (rec, (vx, vy)) in frame.records.iter_mut().zip(vels) {
            rec.vx = vx;
            rec.vy = vy;
        }
    }
}

pub fn match_meta(m: &Match) -> KeyValues {
    let mut kv = KeyValues::default();
    kv.set("dt", m.dt);
    kv.set("pitch_length", m.pitch.length);
    kv.set("pitch_width", m.pitch.width);
    kv.set("goal_width", m.pitch.goal_width);
    kv.set("attacking_right", m.attacking_right);
    kv.set("source_x_min", -m.pitch.half_length());
    kv.set("source_x_max", m.pitch.half_length());
    kv.set("source_y_min", -m.pitch.half_width());
    kv.set("source_y_max", m.pitch.half_width());
    kv.set("velocity", if m.velocity_derived { "derived" } else { "measured" });
    kv
}

/// Serializes the rows of `m` in canonical form.
pub fn write_rows<W: Write>(m: &Match, out: W) -> io::Result<usize> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(HEADER)?;
    let mut rows = 0;
    for frame in &m.frames {
        let mut ordered: Vec<&EntityRecord> = frame.records.iter().collect();
        ordered.sort_by(|a, b| crate::schema::canonical_order(a, b));
        for r in ordered {
            w.write_record([
                r.match_id.as_str(),
                &frame.timestep.to_string(),
                r.entity_id.as_str(),
                r.team.code(),
                r.role.code(),
                &r.x.to_string(),
                &r.y.to_string(),
                &r.vx.to_string(),
                &r.vy.to_string(),
                if r.has_ball { "1" } else { "0" },
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

/// Writes the match file and its `.meta` sidecar. Returns the number of
/// data rows written.
pub fn write_match(m: &Match, path: &Path) -> Result<usize, IngestError> {
    let mut rows = 0;
    fsutil::write_atomic(path, |w| {
        rows = write_rows(m, w)?;
        Ok(())
    })
    .map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let meta = meta_path(path);
    fsutil::write_bytes_atomic(&meta, match_meta(m).to_text().as_bytes())
        .map_err(|source| IngestError::Io { path: meta, source })?;
    Ok(rows)
}
