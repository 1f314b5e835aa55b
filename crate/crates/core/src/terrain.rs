//! Heightfields: flat ground and diamond-square fractal terrain.
//!
//! Diamond-square on a `(2^n + 1)^2` grid, row-major `grid[r][c]`, `N = 2^n`:
//!
//! 1. Corners `(0,0), (0,N), (N,0), (N,N)` take successive uniform draws in `[0,1)`.
//! 2. For `step = N, N/2, ..., 2` at depth `d = 0, 1, ...` with `half = step/2` and
//!    amplitude `roughness * 0.5^d`:
//!    - diamond pass, row-major over square centers: mean of the four corners
//!      plus `amplitude * (2u - 1)`;
//!    - square pass, row-major over edge midpoints: mean of the available
//!      (3 or 4) axis neighbours at distance `half` plus `amplitude * (2u - 1)`.
//! 3. Min-max normalise to `[0, max_height]`; an all-equal grid maps to zero.
//!
//! All draws come from one [`SplitMix64`] seeded with the terrain seed, in the
//! order above. Column index runs along world x, row index along world y, and
//! the grid is centred on the world origin.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;
use crate::rng::SplitMix64;

pub const DEFAULT_EXPONENT: u32 = 7;
pub const DEFAULT_CELL_SIZE: f64 = 0.08;
pub const DEFAULT_ROUGHNESS: f64 = 0.5;
const MAX_EXPONENT: u32 = 14;

#[derive(Clone, Debug, PartialEq)]
pub struct Heightmap {
    exponent: u32,
    side: usize,
    heights: Vec<f64>,
    cell_size: f64,
    max_height: f64,
    roughness: f64,
    seed: u64,
    origin: [f64; 2],
}

/// How a run's terrain is built.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainSpec {
    #[default]
    Flat,
    Heightmap {
        max_height: f64,
        seed: u64,
        #[serde(default = "default_exponent")]
        n: u32,
        #[serde(default = "default_roughness")]
        roughness: f64,
    },
}

fn default_exponent() -> u32 {
    DEFAULT_EXPONENT
}

fn default_roughness() -> f64 {
    DEFAULT_ROUGHNESS
}

impl TerrainSpec {
    pub fn heightmap(max_height: f64, seed: u64) -> Self {
        TerrainSpec::Heightmap { max_height, seed, n: DEFAULT_EXPONENT, roughness: DEFAULT_ROUGHNESS }
    }

    /// Parameter checks only; does not generate the grid.
    pub fn validate(&self) -> Result<()> {
        match *self {
            TerrainSpec::Flat => Ok(()),
            TerrainSpec::Heightmap { max_height, n, roughness, .. } => {
                if !(1..=MAX_EXPONENT).contains(&n) {
                    return Err(Error::domain(format!("terrain.n must be in 1..={MAX_EXPONENT}, got {n}")));
                }
                if !(max_height.is_finite() && max_height >= 0.0) {
                    return Err(Error::domain(format!("terrain.max_height must be finite and >= 0, got {max_height}")));
                }
                if !(0.0..=1.0).contains(&roughness) {
                    return Err(Error::domain(format!("terrain.roughness must be in [0, 1], got {roughness}")));
                }
                Ok(())
            }
        }
    }

    pub fn build(&self) -> Result<Heightmap> {
        match *self {
            TerrainSpec::Flat => Ok(flat_terrain()),
            TerrainSpec::Heightmap { max_height, seed, n, roughness } => diamond_square(n, roughness, max_height, seed),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TerrainSpec::Flat => "flat".into(),
            TerrainSpec::Heightmap { max_height, .. } => format!("heightmap_{max_height}"),
        }
    }
}

pub fn diamond_square(n: u32, roughness: f64, max_height: f64, seed: u64) -> Result<Heightmap> {
    if n < 1 {
        return Err(Error::domain("diamond-square grid exponent must be >= 1"));
    }
    if n > MAX_EXPONENT {
        return Err(Error::domain(format!("grid exponent {n} exceeds {MAX_EXPONENT}")));
    }
    if !(max_height >= 0.0 && max_height.is_finite()) {
        return Err(Error::domain(format!("max_height must be finite and >= 0, got {max_height}")));
    }
    if !(0.0..=1.0).contains(&roughness) {
        return Err(Error::domain(format!("roughness must lie in [0, 1], got {roughness}")));
    }
    let mut rng = SplitMix64::new(seed);
    let corners = [rng.next_f64(), rng.next_f64(), rng.next_f64(), rng.next_f64()];
    let mut heights = fill(n, roughness, corners, &mut rng);
    normalize(&mut heights, max_height);
    Ok(Heightmap::from_parts(n, heights, DEFAULT_CELL_SIZE, max_height, roughness, seed))
}

/// Unnormalised diamond-square with explicit corner values.
pub(crate) fn fill(n: u32, roughness: f64, corners: [f64; 4], rng: &mut SplitMix64) -> Vec<f64> {
    let last = 1usize << n;
    let side = last + 1;
    let mut g = vec![0.0; side * side];
    let at = |r: usize, c: usize| r * side + c;
    g[at(0, 0)] = corners[0];
    g[at(0, last)] = corners[1];
    g[at(last, 0)] = corners[2];
    g[at(last, last)] = corners[3];

    let mut step = last;
    let mut amplitude = roughness;
    while step > 1 {
        let half = step / 2;
        for r in (half..last).step_by(step) {
            for c in (half..last).step_by(step) {
                let mean = 0.25
                    * (g[at(r - half, c - half)] + g[at(r - half, c + half)] + g[at(r + half, c - half)] + g[at(r + half, c + half)]);
                g[at(r, c)] = mean + amplitude * rng.next_signed();
            }
        }
        for r in (0..=last).step_by(half) {
            let start = if (r / half).is_multiple_of(2) { half } else { 0 };
            for c in (start..=last).step_by(step) {
                let mut sum = 0.0;
                let mut count = 0.0;
                if r >= half {
                    sum += g[at(r - half, c)];
                    count += 1.0;
                }
                if r + half <= last {
                    sum += g[at(r + half, c)];
                    count += 1.0;
                }
                if c >= half {
                    sum += g[at(r, c - half)];
                    count += 1.0;
                }
                if c + half <= last {
                    sum += g[at(r, c + half)];
                    count += 1.0;
                }
                g[at(r, c)] = sum / count + amplitude * rng.next_signed();
            }
        }
        step = half;
        amplitude *= 0.5;
    }
    g
}

fn normalize(heights: &mut [f64], max_height: f64) {
    let lo = heights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for h in heights.iter_mut() {
        *h = if span > 0.0 { ((*h - lo) / span * max_height).clamp(0.0, max_height) } else { 0.0 };
    }
}

/// All-zero heightfield on the default experiment grid.
pub fn flat_terrain() -> Heightmap {
    let side = (1usize << DEFAULT_EXPONENT) + 1;
    Heightmap::from_parts(DEFAULT_EXPONENT, vec![0.0; side * side], DEFAULT_CELL_SIZE, 0.0, 0.0, 0)
}

impl Heightmap {
    fn from_parts(exponent: u32, heights: Vec<f64>, cell_size: f64, max_height: f64, roughness: f64, seed: u64) -> Self {
        let side = (1usize << exponent) + 1;
        debug_assert_eq!(heights.len(), side * side);
        let half_extent = 0.5 * (side - 1) as f64 * cell_size;
        Self {
            exponent,
            side,
            heights,
            cell_size,
            max_height,
            roughness,
            seed,
            origin: [-half_extent, -half_extent],
        }
    }

    /// Same heights on a different cell size (re-centred).
    pub fn with_cell_size(self, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::domain(format!("cell size must be positive, got {cell_size}")));
        }
        Ok(Self::from_parts(self.exponent, self.heights, cell_size, self.max_height, self.roughness, self.seed))
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn max_height(&self) -> f64 {
        self.max_height
    }

    pub fn roughness(&self) -> f64 {
        self.roughness
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Height of grid node (row, column).
    pub fn node(&self, row: usize, col: usize) -> f64 {
        self.heights[row * self.side + col]
    }

    /// World position of grid node (row, column).
    pub fn node_position(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin[0] + col as f64 * self.cell_size,
            self.origin[1] + row as f64 * self.cell_size,
        )
    }

    /// Bilinear height; positions outside the grid are clamped onto its edge.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let last = (self.side - 1) as f64;
        let gx = ((x - self.origin[0]) / self.cell_size).clamp(0.0, last);
        let gy = ((y - self.origin[1]) / self.cell_size).clamp(0.0, last);
        let c0 = (gx.floor() as usize).min(self.side - 2);
        let r0 = (gy.floor() as usize).min(self.side - 2);
        let fx = gx - c0 as f64;
        let fy = gy - r0 as f64;
        let h00 = self.node(r0, c0);
        let h01 = self.node(r0, c0 + 1);
        let h10 = self.node(r0 + 1, c0);
        let h11 = self.node(r0 + 1, c0 + 1);
        let bottom = h00 + fx * (h01 - h00);
        let top = h10 + fx * (h11 - h10);
        bottom + fy * (top - bottom)
    }

    /// Largest absolute height difference between adjacent nodes.
    pub fn max_neighbor_difference(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.side {
            for c in 0..self.side {
                let h = self.node(r, c);
                if c + 1 < self.side {
                    worst = worst.max((self.node(r, c + 1) - h).abs());
                }
                if r + 1 < self.side {
                    worst = worst.max((self.node(r + 1, c) - h).abs());
                }
            }
        }
        worst
    }

    /// CSV text: one header line, then one row per grid row.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# diamond-square n={} seed={} roughness={} max_height={} cell={}\n",
            self.exponent, self.seed, self.roughness, self.max_height, self.cell_size
        );
        for row in self.heights.chunks_exact(self.side) {
            let mut first = true;
            for h in row {
                if !first {
                    out.push(',');
                }
                first = false;
                let _ = write!(out, "{}", fmt_g17(*h));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::domain("empty terrain file"))?;
        let body = header
            .strip_prefix("# diamond-square ")
            .ok_or_else(|| Error::domain("terrain header must start with `# diamond-square `"))?;
        let mut exponent = None;
        let mut seed = None;
        let mut roughness = None;
        let mut max_height = None;
        let mut cell = None;
        for field in body.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::domain(format!("malformed header field `{field}`")))?;
            let bad = |_| Error::domain(format!("bad value for `{key}`: `{value}`"));
            match key {
                "n" => exponent = Some(value.parse::<u32>().map_err(|e| bad(e.to_string()))?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "roughness" => roughness = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "max_height" => max_height = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "cell" => cell = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(Error::domain(format!("unknown header field `{key}`"))),
            }
        }
        let missing = |k: &str| Error::domain(format!("terrain header lacks `{k}`"));
        let exponent = exponent.ok_or_else(|| missing("n"))?;
        if !(1..=MAX_EXPONENT).contains(&exponent) {
            return Err(Error::domain(format!("grid exponent {exponent} out of range")));
        }
        let side = (1usize << exponent) + 1;
        let mut heights = Vec::with_capacity(side * side);
        let mut rows = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let before = heights.len();
            for cell in line.split(',') {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::domain(format!("row {rows}: bad height `{cell}`")))?;
                heights.push(v);
            }
            if heights.len() - before != side {
                return Err(Error::Shape { what: "terrain row", expected: side, got: heights.len() - before });
            }
            rows += 1;
        }
        if rows != side {
            return Err(Error::Shape { what: "terrain rows", expected: side, got: rows });
        }
        let map = Self::from_parts(
            exponent,
            heights,
            DEFAULT_CELL_SIZE,
            max_height.ok_or_else(|| missing("max_height"))?,
            roughness.ok_or_else(|| missing("roughness"))?,
            seed.ok_or_else(|| missing("seed"))?,
        );
        map.with_cell_size(cell.ok_or_else(|| missing("cell"))?)
    }
}
