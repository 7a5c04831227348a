//! Raster rendering of control grids and xG surfaces.
//!
//! Images are written as binary PPM (P6) unless the path ends in `.png`.
//! World coordinates map to pixels at [`PIXELS_PER_METER`], with y pointing
//! up: the lowest-y row of the field is the bottom row of the image.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ImageEncoder, ImageFormat, Rgb, RgbImage};
use thiserror::Error;

use crate::fsutil;
use crate::lattice::Lattice;
use crate::pitchcontrol::ControlGrid;
use crate::schema::{Frame, PitchSpec, Team};
use crate::xg::{ShotFeatures, XgSurface};

pub const PIXELS_PER_METER: f64 = 10.0;
/// Distance from 0.5 within which control renders as pure white.
pub const NEUTRAL_BAND: f64 = 0.02;

pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub const BLUE: Rgb<u8> = Rgb([0, 0, 255]);
pub const RED: Rgb<u8> = Rgb([255, 0, 0]);
pub const DARK_RED: Rgb<u8> = Rgb([139, 0, 0]);
pub const HOME_MARKER: Rgb<u8> = Rgb([0, 0, 139]);
pub const AWAY_MARKER: Rgb<u8> = Rgb([139, 0, 0]);
pub const BALL_MARKER: Rgb<u8> = Rgb([0, 0, 0]);
pub const GOLD: Rgb<u8> = Rgb([255, 215, 0]);
pub const SHOT_DOT: Rgb<u8> = Rgb([0, 0, 0]);
pub const LABEL: Rgb<u8> = Rgb([0, 0, 0]);

const PLAYER_RADIUS: f64 = 6.0;
const BALL_RADIUS: f64 = 4.0;
const RING_INNER: f64 = 8.0;
const RING_OUTER: f64 = 10.5;
const SHOT_RADIUS: f64 = 3.0;
const GLYPH_SCALE: u32 = 2;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not encode image: {0}")]
    Encode(#[from] image::ImageError),
    #[error("grid has {found} values, expected {expected}")]
    GridSize { expected: usize, found: usize },
}

/// Affine map between a world rectangle and image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMap {
    pub x_min: f64,
    pub y_min: f64,
    pub scale: f64,
    pub width: u32,
    pub height: u32,
}

impl PixelMap {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, scale: f64) -> Self {
        PixelMap {
            x_min,
            y_min,
            scale,
            width: (((x_max - x_min) * scale).round() as u32).max(1),
            height: (((y_max - y_min) * scale).round() as u32).max(1),
        }
    }

    pub fn for_lattice(l: &Lattice, scale: f64) -> Self {
        let h = l.step / 2.0;
        let x_max = l.x(l.nx - 1) + h;
        let y_max = l.y(l.ny - 1) + h;
        PixelMap::new(l.x0() - h, x_max, l.y0() - h, y_max, scale)
    }

    /// Pixel containing a world point, clamped to the image.
    pub fn to_pixel(&self, x: f64, y: f64) -> (u32, u32) {
        let px = ((x - self.x_min) * self.scale).floor();
        let up = ((y - self.y_min) * self.scale).floor();
        let px = (px.max(0.0) as u32).min(self.width - 1);
        let up = (up.max(0.0) as u32).min(self.height - 1);
        (px, self.height - 1 - up)
    }

    /// World coordinates of a pixel center.
    pub fn to_world(&self, px: u32, py: u32) -> (f64, f64) {
        (
            self.x_min + (px as f64 + 0.5) / self.scale,
            self.y_min + ((self.height - 1 - py) as f64 + 0.5) / self.scale,
        )
    }
}

fn lerp_channel(from: u8, to: u8, s: f64) -> u8 {
    (from as f64 + (to as f64 - from as f64) * s).round() as u8
}

fn lerp(from: Rgb<u8>, to: Rgb<u8>, s: f64) -> Rgb<u8> {
    let s = s.clamp(0.0, 1.0);
    Rgb([
        lerp_channel(from[0], to[0], s),
        lerp_channel(from[1], to[1], s),
        lerp_channel(from[2], to[2], s),
    ])
}

/// Blue for home control, red for away, white near an even split.
pub fn control_color(p_home: f64) -> Rgb<u8> {
    let lo = 0.5 - NEUTRAL_BAND;
    let hi = 0.5 + NEUTRAL_BAND;
    if p_home > hi {
        lerp(WHITE, BLUE, (p_home - hi) / (1.0 - hi))
    } else if p_home < lo {
        lerp(WHITE, RED, (lo - p_home) / lo)
    } else {
        WHITE
    }
}

/// White at zero, dark red at one.
pub fn xg_color(p: f64) -> Rgb<u8> {
    lerp(WHITE, DARK_RED, p)
}

fn paint_field(lattice: &Lattice, values: &[f64], map: &PixelMap, color: impl Fn(f64) -> Rgb<u8>) -> Result<RgbImage, RenderError> {
    if values.len() != lattice.len() {
        return Err(RenderError::GridSize {
            expected: lattice.len(),
            found: values.len(),
        });
    }
    Ok(RgbImage::from_fn(map.width, map.height, |px, py| {
        let (x, y) = map.to_world(px, py);
        let (i, j) = lattice.cell_of(x, y);
        color(values[j * lattice.nx + i])
    }))
}

fn disc(img: &mut RgbImage, cx: f64, cy: f64, inner: f64, outer: f64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let x0 = (cx - outer).floor().max(0.0) as u32;
    let y0 = (cy - outer).floor().max(0.0) as u32;
    let x1 = ((cx + outer).ceil().max(0.0) as u32).min(w.saturating_sub(1));
    let y1 = ((cy + outer).ceil().max(0.0) as u32).min(h.saturating_sub(1));
    for py in y0..=y1 {
        for px in x0..=x1 {
            let d = (px as f64 + 0.5 - cx).hypot(py as f64 + 0.5 - cy);
            if d <= outer && d >= inner {
                img.put_pixel(px, py, color);
            }
        }
    }
}

/// 3x5 glyphs, one row per entry, bit 2 is the leftmost column.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'A' => [2, 5, 7, 5, 5],
        'H' => [5, 5, 7, 5, 5],
        _ => [0; 5],
    }
}

fn label(img: &mut RgbImage, text: &str, left: i64, top: i64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    for (n, c) in text.chars().enumerate() {
        let ox = left + n as i64 * 4 * GLYPH_SCALE as i64;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) == 0 {
                    continue;
                }
                for dy in 0..GLYPH_SCALE as i64 {
                    for dx in 0..GLYPH_SCALE as i64 {
                        let x = ox + col * GLYPH_SCALE as i64 + dx;
                        let y = top + row as i64 * GLYPH_SCALE as i64 + dy;
                        if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
                            img.put_pixel(x as u32, y as u32, color);
                        }
                    }
                }
            }
        }
    }
}

fn pixel_center(map: &PixelMap, x: f64, y: f64) -> (f64, f64) {
    (
        (x - map.x_min) * map.scale,
        map.height as f64 - (y - map.y_min) * map.scale,
    )
}

/// The control field alone, without markers.
pub fn control_field(grid: &ControlGrid) -> Result<RgbImage, RenderError> {
    let map = PixelMap::for_lattice(&grid.lattice, PIXELS_PER_METER);
    paint_field(&grid.lattice, &grid.values, &map, control_color)
}

/// Control field with team markers, identifier labels, the ball, and a gold
/// ring around the player in possession.
pub fn control_image(grid: &ControlGrid, frame: &Frame) -> Result<RgbImage, RenderError> {
    let map = PixelMap::for_lattice(&grid.lattice, PIXELS_PER_METER);
    let mut img = paint_field(&grid.lattice, &grid.values, &map, control_color)?;
    for r in frame.agents() {
        let (cx, cy) = pixel_center(&map, r.x, r.y);
        if r.has_ball {
            disc(&mut img, cx, cy, RING_INNER, RING_OUTER, GOLD);
        }
        let color = if r.team == Team::Home { HOME_MARKER } else { AWAY_MARKER };
        disc(&mut img, cx, cy, 0.0, PLAYER_RADIUS, color);
        let left = (cx + RING_OUTER).round() as i64;
        let top = (cy - RING_OUTER - 5.0 * GLYPH_SCALE as f64).round() as i64;
        label(&mut img, r.entity_id.as_str(), left, top, LABEL);
    }
    if let Some(b) = frame.ball() {
        let (cx, cy) = pixel_center(&map, b.x, b.y);
        disc(&mut img, cx, cy, 0.0, BALL_RADIUS, BALL_MARKER);
    }
    Ok(img)
}

/// Map for the attacking half `[0, L/2] x [-W/2, W/2]`.
pub fn xg_pixel_map(pitch: &PitchSpec) -> PixelMap {
    PixelMap::new(0.0, pitch.half_length(), -pitch.half_width(), pitch.half_width(), PIXELS_PER_METER)
}

/// xG surface over the attacking half with shot locations dotted on top.
/// Shots are drawn at their folded (`y >= 0`) location.
pub fn xg_image(surface: &XgSurface, shots: &[ShotFeatures], pitch: &PitchSpec) -> Result<RgbImage, RenderError> {
    let map = xg_pixel_map(pitch);
    let mut img = paint_field(&surface.lattice, &surface.values, &map, xg_color)?;
    for s in shots {
        let (x, y) = s.folded_location(pitch);
        let (px, py) = map.to_pixel(x, y);
        disc(&mut img, px as f64 + 0.5, py as f64 + 0.5, 0.0, SHOT_RADIUS, SHOT_DOT);
    }
    Ok(img)
}

/// Encodes as PNG for a `.png` path, binary PPM otherwise.
pub fn encode(img: &RgbImage, path: &Path) -> Result<Vec<u8>, RenderError> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let mut bytes = Vec::new();
    if is_png {
        img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    } else {
        PnmEncoder::new(&mut bytes)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)?;
    }
    Ok(bytes)
}

pub fn save(img: &RgbImage, path: &Path) -> Result<(u32, u32), RenderError> {
    let bytes = encode(img, path)?;
    fsutil::write_bytes_atomic(path, &bytes).map_err(|source| RenderError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(img.dimensions())
}

pub fn render_control(grid: &ControlGrid, frame: &Frame, path: &Path) -> Result<(u32, u32), RenderError> {
    save(&control_image(grid, frame)?, path)
}

pub fn render_xg(surface: &XgSurface, shots: &[ShotFeatures], pitch: &PitchSpec, path: &Path) -> Result<(u32, u32), RenderError> {
    save(&xg_image(surface, shots, pitch)?, path)
}
