//! Regular cell-centered lattices over the pitch and their CSV form.
//!
//! Cells are indexed `(i, j)` with `i` along x and `j` along y. Values are
//! stored row-major: `values[j * nx + i]`, rows ordered from the lowest y
//! upward. The lattice is centered on `(cx, cy)`, so a lattice centered on
//! the origin is exactly symmetric under `(x, y) -> (-x, -y)`.

use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub nx: usize,
    pub ny: usize,
    pub step: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Lattice {
    /// Largest lattice of `step`-sized cells fitting in the rectangle,
    /// centered on it. Always at least one cell per axis.
    pub fn covering(x_min: f64, x_max: f64, y_min: f64, y_max: f64, step: f64) -> Lattice {
        assert!(step > 0.0, "lattice step must be positive");
        let count = |span: f64| ((span / step + 1e-9).floor() as usize).max(1);
        Lattice {
            nx: count(x_max - x_min),
            ny: count(y_max - y_min),
            step,
            cx: (x_min + x_max) / 2.0,
            cy: (y_min + y_max) / 2.0,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.cx + (i as f64 - (self.nx - 1) as f64 / 2.0) * self.step
    }

    pub fn y(&self, j: usize) -> f64 {
        self.cy + (j as f64 - (self.ny - 1) as f64 / 2.0) * self.step
    }

    pub fn x0(&self) -> f64 {
        self.x(0)
    }

    pub fn y0(&self) -> f64 {
        self.y(0)
    }

    /// Center of the cell with row-major index `k`.
    pub fn center(&self, k: usize) -> (f64, f64) {
        (self.x(k % self.nx), self.y(k / self.nx))
    }

    /// Cell containing the point, clamped to the lattice.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let fi = ((x - self.x0()) / self.step + 0.5).floor();
        let fj = ((y - self.y0()) / self.step + 0.5).floor();
        let clamp = |f: f64, n: usize| (f.max(0.0) as usize).min(n - 1);
        (clamp(fi, self.nx), clamp(fj, self.ny))
    }
}

/// Writes `nx,ny,x0,y0,step,frame` followed by `ny` rows of `nx` values.
/// `frame` is left empty when the grid is not tied to a timestep.
pub fn write_grid<W: Write>(lattice: &Lattice, frame: Option<usize>, values: &[f64], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{}",
        lattice.nx,
        lattice.ny,
        lattice.x0(),
        lattice.y0(),
        lattice.step,
        frame.map(|f| f.to_string()).unwrap_or_default()
    )?;
    for row in values.chunks(lattice.nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Parses the output of [`write_grid`].
pub fn read_grid(text: &str) -> Result<(Lattice, Option<usize>, Vec<f64>), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty grid file")?;
    let h: Vec<&str> = header.split(',').collect();
    if h.len() != 6 {
        return Err(format!("grid header needs 6 fields, found {}", h.len()));
    }
    let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| format!("bad {what}: {s:?}"));
    let nx: usize = h[0].trim().parse().map_err(|_| format!("bad nx: {:?}", h[0]))?;
    let ny: usize = h[1].trim().parse().map_err(|_| format!("bad ny: {:?}", h[1]))?;
    let x0 = num(h[2], "x0")?;
    let y0 = num(h[3], "y0")?;
    let step = num(h[4], "step")?;
    let frame = match h[5].trim() {
        "" => None,
        s => Some(s.parse::<usize>().map_err(|_| format!("bad frame: {s:?}"))?),
    };
    if nx == 0 || ny == 0 || !(step > 0.0) {
        return Err("grid dimensions must be positive".into());
    }
    let lattice = Lattice {
        nx,
        ny,
        step,
        cx: x0 + (nx - 1) as f64 * step / 2.0,
        cy: y0 + (ny - 1) as f64 * step / 2.0,
    };
    let mut values = Vec::with_capacity(nx * ny);
    for (j, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, String> = line.split(',').map(|s| num(s, "value")).collect();
        let row = row?;
        if row.len() != nx {
            return Err(format!("row {} has {} values, expected {nx}", j + 1, row.len()));
        }
        values.extend(row);
    }
    if values.len() != nx * ny {
        return Err(format!("expected {} rows, found {}", ny, values.len() / nx));
    }
    Ok((lattice, frame, values))
}
