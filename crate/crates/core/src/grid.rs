//! Manhattan street grid and per-frame UE mobility.
//!
//! Streets run along `y = j * block_height_m` (horizontal) and
//! `x = i * block_width_m` (vertical). A base station sits on every
//! intersection. The grid wraps at its edges, so a UE leaving the east edge
//! re-enters on the west edge of the same street.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::GlobalBeamId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub block_width_m: f64,
    pub block_height_m: f64,
    /// Number of vertical streets (intersections along x).
    pub blocks_x: usize,
    /// Number of horizontal streets (intersections along y).
    pub blocks_y: usize,
    pub bs_antenna_height_m: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            block_width_m: 200.0,
            block_height_m: 100.0,
            blocks_x: 8,
            blocks_y: 4,
            bs_antenna_height_m: 5.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.block_width_m > 0.0 && self.block_height_m > 0.0) {
            return Err(Error::Config("block dimensions must be positive".into()));
        }
        if self.blocks_x == 0 || self.blocks_y == 0 {
            return Err(Error::Config("grid needs at least one intersection".into()));
        }
        if !(self.bs_antenna_height_m > 0.0) {
            return Err(Error::Config("antenna height must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub mean_speed_kmh: f64,
    /// Speeds are uniform on `mean ± spread`.
    pub speed_spread_kmh: f64,
    pub speed_event_distance_m: f64,
    pub speed_change_probability: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            mean_speed_kmh: 100.0,
            speed_spread_kmh: 20.0,
            speed_event_distance_m: 100.0,
            speed_change_probability: 0.2,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_speed_kmh > 0.0)
            || !(self.speed_spread_kmh >= 0.0)
            || self.speed_spread_kmh >= self.mean_speed_kmh
        {
            return Err(Error::Config(
                "speed law needs mean > spread >= 0".into(),
            ));
        }
        if !(self.speed_event_distance_m > 0.0) {
            return Err(Error::Config("speed event distance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.speed_change_probability) {
            return Err(Error::Config("speed change probability outside [0,1]".into()));
        }
        Ok(())
    }

    pub fn sample_speed_mps<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let lo = self.mean_speed_kmh - self.speed_spread_kmh;
        let kmh = lo + 2.0 * self.speed_spread_kmh * rng.random::<f64>();
        kmh / 3.6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn unit(self) -> (f64, f64) {
        match self {
            Direction::N => (0.0, 1.0),
            Direction::E => (1.0, 0.0),
            Direction::S => (0.0, -1.0),
            Direction::W => (-1.0, 0.0),
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Direction::E | Direction::W => Axis::Horizontal,
            Direction::N | Direction::S => Axis::Vertical,
        }
    }

    pub fn left(self) -> Self {
        Self::ALL[(self as usize + 3) % 4]
    }

    pub fn right(self) -> Self {
        Self::ALL[(self as usize + 1) % 4]
    }

    pub fn reverse(self) -> Self {
        Self::ALL[(self as usize + 2) % 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsSite {
    pub bs_id: usize,
    pub position: Point,
    pub antenna_height_m: f64,
}

/// One block-long piece of street between two adjacent intersections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreetSegment {
    pub axis: Axis,
    pub start: Point,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeState {
    pub crnti: u32,
    pub position: Point,
    pub direction: Direction,
    pub speed_mps: f64,
    pub dist_since_speed_event_m: f64,
    /// Total distance travelled; drives shadowing decorrelation.
    pub odometer_m: f64,
    pub serving_beam: Option<GlobalBeamId>,
    pub previous_beam: Option<GlobalBeamId>,
    pub llm_paused: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub config: GridConfig,
    pub sites: Vec<BsSite>,
    pub segments: Vec<StreetSegment>,
    pub width_m: f64,
    pub height_m: f64,
}

pub fn build_grid(config: GridConfig) -> Result<Grid> {
    config.validate()?;
    let (nx, ny) = (config.blocks_x, config.blocks_y);
    let (bw, bh) = (config.block_width_m, config.block_height_m);
    let mut sites = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            sites.push(BsSite {
                bs_id: j * nx + i,
                position: Point::new(i as f64 * bw, j as f64 * bh),
                antenna_height_m: config.bs_antenna_height_m,
            });
        }
    }
    let mut segments = Vec::with_capacity(2 * nx * ny);
    for axis in [Axis::Horizontal, Axis::Vertical] {
        for j in 0..ny {
            for i in 0..nx {
                segments.push(StreetSegment {
                    axis,
                    start: Point::new(i as f64 * bw, j as f64 * bh),
                    length_m: if axis == Axis::Horizontal { bw } else { bh },
                });
            }
        }
    }
    Ok(Grid {
        config,
        sites,
        segments,
        width_m: nx as f64 * bw,
        height_m: ny as f64 * bh,
    })
}

fn on_line(v: f64, spacing: f64) -> bool {
    v == (v / spacing).round() * spacing
}

impl Grid {
    pub fn num_bs(&self) -> usize {
        self.sites.len()
    }

    fn in_bounds(&self, p: Point) -> bool {
        (0.0..self.width_m).contains(&p.x) && (0.0..self.height_m).contains(&p.y)
    }

    pub fn on_horizontal_street(&self, p: Point) -> bool {
        self.in_bounds(p) && on_line(p.y, self.config.block_height_m)
    }

    pub fn on_vertical_street(&self, p: Point) -> bool {
        self.in_bounds(p) && on_line(p.x, self.config.block_width_m)
    }

    /// Exact containment test against the street graph.
    pub fn on_street(&self, p: Point) -> bool {
        self.on_horizontal_street(p) || self.on_vertical_street(p)
    }

    pub fn is_intersection(&self, p: Point) -> bool {
        self.on_horizontal_street(p) && self.on_vertical_street(p)
    }

    /// Index into `segments` of the segment holding `p`; horizontal wins at
    /// intersections.
    pub fn segment_of(&self, p: Point) -> Option<usize> {
        let (nx, ny) = (self.config.blocks_x, self.config.blocks_y);
        let (bw, bh) = (self.config.block_width_m, self.config.block_height_m);
        if self.on_horizontal_street(p) {
            let j = (p.y / bh).round() as usize;
            let i = ((p.x / bw).floor() as usize).min(nx - 1);
            Some(j * nx + i)
        } else if self.on_vertical_street(p) {
            let i = (p.x / bw).round() as usize;
            let j = ((p.y / bh).floor() as usize).min(ny - 1);
            Some(nx * ny + j * nx + i)
        } else {
            None
        }
    }

    fn wrap(v: f64, extent: f64) -> f64 {
        let w = v.rem_euclid(extent);
        if w >= extent {
            0.0
        } else {
            w
        }
    }

    /// Shortest displacement from `from` to `to` on the wrapped plane.
    pub fn displacement(&self, from: Point, to: Point) -> (f64, f64) {
        let fold = |d: f64, extent: f64| {
            let mut d = d.rem_euclid(extent);
            if d > extent / 2.0 {
                d -= extent;
            }
            d
        };
        (fold(to.x - from.x, self.width_m), fold(to.y - from.y, self.height_m))
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let (dx, dy) = self.displacement(a, b);
        dx.hypot(dy)
    }

    /// Street-canyon line of sight: both points share a street line.
    pub fn shares_street_axis(&self, ue: Point, bs: Point) -> bool {
        (self.on_horizontal_street(ue) && ue.y == bs.y)
            || (self.on_vertical_street(ue) && ue.x == bs.x)
    }

    fn along(&self, p: Point, dir: Direction) -> (f64, f64, f64) {
        match dir.axis() {
            Axis::Horizontal => (p.x, self.config.block_width_m, self.width_m),
            Axis::Vertical => (p.y, self.config.block_height_m, self.height_m),
        }
    }

    /// Coordinate of the next intersection strictly ahead, and the distance to it.
    fn next_intersection(&self, p: Point, dir: Direction) -> (f64, f64) {
        let (a, spacing, extent) = self.along(p, dir);
        let k = (a / spacing).floor();
        let positive = matches!(dir, Direction::N | Direction::E);
        let (target, dist) = if positive {
            let t = (k + 1.0) * spacing;
            (if t >= extent { 0.0 } else { t }, t - a)
        } else if a == k * spacing {
            let t = (k - 1.0) * spacing;
            if t < 0.0 {
                (extent - spacing, spacing)
            } else {
                (t, spacing)
            }
        } else {
            (k * spacing, a - k * spacing)
        };
        (target, dist)
    }

    fn set_along(&self, p: Point, dir: Direction, value: f64) -> Point {
        match dir.axis() {
            Axis::Horizontal => Point::new(value, p.y),
            Axis::Vertical => Point::new(p.x, value),
        }
    }

    fn advance(&self, p: Point, dir: Direction, dist: f64) -> Point {
        let (a, _, extent) = self.along(p, dir);
        let signed = if matches!(dir, Direction::N | Direction::E) { dist } else { -dist };
        self.set_along(p, dir, Self::wrap(a + signed, extent))
    }

    fn on_axis_of(&self, p: Point, dir: Direction) -> bool {
        match dir.axis() {
            Axis::Horizontal => self.on_horizontal_street(p),
            Axis::Vertical => self.on_vertical_street(p),
        }
    }
}

/// Places `u` UEs on the streets. Direction is uniform over the four
/// headings; the UE then lands uniformly on a uniformly chosen segment whose
/// axis matches that heading.
pub fn spawn_ues<R: Rng + ?Sized>(
    grid: &Grid,
    u: usize,
    mobility: &MobilityConfig,
    rng: &mut R,
) -> Result<Vec<UeState>> {
    if u == 0 {
        return Err(Error::Config("at least one UE is required".into()));
    }
    mobility.validate()?;
    let per_axis = grid.config.blocks_x * grid.config.blocks_y;
    let mut ues = Vec::with_capacity(u);
    for idx in 0..u {
        let direction = Direction::ALL[rng.random_range(0..4)];
        let offset = match direction.axis() {
            Axis::Horizontal => 0,
            Axis::Vertical => per_axis,
        };
        let seg = grid.segments[offset + rng.random_range(0..per_axis)];
        let t = rng.random::<f64>() * seg.length_m;
        let position = match seg.axis {
            Axis::Horizontal => Point::new(seg.start.x + t, seg.start.y),
            Axis::Vertical => Point::new(seg.start.x, seg.start.y + t),
        };
        ues.push(UeState {
            crnti: idx as u32 + 1,
            position,
            direction,
            speed_mps: mobility.sample_speed_mps(rng),
            dist_since_speed_event_m: 0.0,
            odometer_m: 0.0,
            serving_beam: None,
            previous_beam: None,
            llm_paused: false,
        });
    }
    Ok(ues)
}

/// Advances one UE by `dt_s` seconds of travel.
///
/// Speed is resampled with the configured probability each time the UE
/// accumulates another `speed_event_distance_m`. At every intersection the
/// UE goes straight, left or right with equal probability.
pub fn step_mobility<R: Rng + ?Sized>(
    ue: &UeState,
    dt_s: f64,
    grid: &Grid,
    mobility: &MobilityConfig,
    rng: &mut R,
) -> Result<UeState> {
    if !(dt_s > 0.0) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt_s}")));
    }
    if !grid.on_axis_of(ue.position, ue.direction) {
        return Err(Error::Invariant(format!(
            "UE {} at ({}, {}) heading {:?} is off the street graph",
            ue.crnti, ue.position.x, ue.position.y, ue.direction
        )));
    }
    let mut s = ue.clone();
    let mut remaining_s = dt_s;
    while remaining_s > 0.0 {
        let (target, to_int) = grid.next_intersection(s.position, s.direction);
        let to_event = mobility.speed_event_distance_m - s.dist_since_speed_event_m;
        let reach = remaining_s * s.speed_mps;
        let step = reach.min(to_int).min(to_event);
        let hit_int = step >= to_int;
        s.position = if hit_int {
            grid.set_along(s.position, s.direction, target)
        } else {
            grid.advance(s.position, s.direction, step)
        };
        s.odometer_m += step;
        remaining_s = if step >= reach { 0.0 } else { remaining_s - step / s.speed_mps };

        let acc = s.dist_since_speed_event_m + step;
        if step >= to_event || acc >= mobility.speed_event_distance_m {
            s.dist_since_speed_event_m = 0.0;
            if rng.random::<f64>() < mobility.speed_change_probability {
                s.speed_mps = mobility.sample_speed_mps(rng);
            }
        } else {
            s.dist_since_speed_event_m = acc;
        }

        if hit_int {
            s.direction = match rng.random_range(0..3) {
                0 => s.direction,
                1 => s.direction.left(),
                _ => s.direction.right(),
            };
        }
    }
    Ok(s)
}

/// Angle in `[0, π]` between the UE's heading and the direction towards `bs`.
pub fn heading_angle(ue: &UeState, bs: &BsSite, grid: &Grid) -> Result<f64> {
    let (dx, dy) = grid.displacement(ue.position, bs.position);
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::Geometry(format!(
            "UE {} coincides with BS {}",
            ue.crnti, bs.bs_id
        )));
    }
    let (ux, uy) = ue.direction.unit();
    let dot = ux * dx + uy * dy;
    let cross = ux * dy - uy * dx;
    Ok(cross.abs().atan2(dot))
}
