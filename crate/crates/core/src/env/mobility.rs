//! Vehicle drop and movement on a Manhattan-style lane grid.
//!
//! The simulation area is covered by a rectangular block grid: vertical
//! streets at evenly spaced x coordinates and horizontal streets at evenly
//! spaced y coordinates. A vehicle always sits on exactly one street and
//! drives along it at constant speed; at intersections it goes straight,
//! left, or right with configured probabilities (restricted to directions
//! that stay inside the area). Street membership is kept exact by storing
//! the street index rather than a floating-point coordinate, so positions
//! never drift off-grid.

use rand::Rng;

use crate::channel::Position;
use crate::error::{Error, Result};

/// The street layout: vertical streets at `xs`, horizontal streets at `ys`.
#[derive(Debug, Clone)]
pub struct LaneGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl LaneGrid {
    pub fn new(width: f64, height: f64, blocks_x: usize, blocks_y: usize) -> Self {
        let xs = (0..=blocks_x)
            .map(|i| i as f64 * width / blocks_x as f64)
            .collect();
        let ys = (0..=blocks_y)
            .map(|j| j as f64 * height / blocks_y as f64)
            .collect();
        LaneGrid { xs, ys }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn width(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn height(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    /// Combined length of every street, used for length-weighted sampling.
    fn total_length(&self) -> f64 {
        self.xs.len() as f64 * self.height() + self.ys.len() as f64 * self.width()
    }

    /// A point uniformly distributed over the street network.
    fn sample_lane<R: Rng + ?Sized>(&self, rng: &mut R) -> Lane {
        let u = rng.random_range(0.0..self.total_length());
        let vertical_total = self.xs.len() as f64 * self.height();
        if u < vertical_total {
            let xi = ((u / self.height()) as usize).min(self.xs.len() - 1);
            Lane::Vertical {
                xi,
                y: u - xi as f64 * self.height(),
            }
        } else {
            let v = u - vertical_total;
            let yi = ((v / self.width()) as usize).min(self.ys.len() - 1);
            Lane::Horizontal {
                yi,
                x: v - yi as f64 * self.width(),
            }
        }
    }
}

/// Which street a vehicle is on and how far along it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lane {
    /// On the vertical street `xs[xi]`, at height `y`.
    Vertical { xi: usize, y: f64 },
    /// On the horizontal street `ys[yi]`, at offset `x`.
    Horizontal { yi: usize, x: f64 },
}

/// A vehicle driving on the grid. `dir` is ±1 along the street's moving
/// axis; `position` is kept in sync with `lane` after every update.
#[derive(Debug, Clone, Copy)]
pub struct Vehicle {
    pub lane: Lane,
    pub dir: i8,
    pub speed_kmh: f64,
    pub position: Position,
}

impl Vehicle {
    fn new(lane: Lane, dir: i8, speed_kmh: f64, grid: &LaneGrid) -> Self {
        let mut v = Vehicle {
            lane,
            dir,
            speed_kmh,
            position: Position::new(0.0, 0.0),
        };
        // never start pointed out of the area from a boundary node
        if next_node(&v, grid).is_none() {
            v.dir = -v.dir;
        }
        v.sync_position(grid);
        v
    }

    fn sync_position(&mut self, grid: &LaneGrid) {
        self.position = match self.lane {
            Lane::Vertical { xi, y } => Position::new(grid.xs[xi], y),
            Lane::Horizontal { yi, x } => Position::new(x, grid.ys[yi]),
        };
    }

    /// Unit heading vector.
    pub fn heading(&self) -> (f64, f64) {
        let d = self.dir as f64;
        match self.lane {
            Lane::Vertical { .. } => (0.0, d),
            Lane::Horizontal { .. } => (d, 0.0),
        }
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_kmh / 3.6
    }
}

/// The next grid node strictly ahead of the vehicle: `(node index, distance)`.
/// `None` when the vehicle is at the boundary facing out.
fn next_node(v: &Vehicle, grid: &LaneGrid) -> Option<(usize, f64)> {
    let (coords, at): (&[f64], f64) = match v.lane {
        Lane::Vertical { y, .. } => (&grid.ys, y),
        Lane::Horizontal { x, .. } => (&grid.xs, x),
    };
    if v.dir > 0 {
        coords
            .iter()
            .position(|&c| c > at)
            .map(|i| (i, coords[i] - at))
    } else {
        coords
            .iter()
            .rposition(|&c| c < at)
            .map(|i| (i, at - coords[i]))
    }
}

/// Candidate continuations at an intersection, in a fixed draw order.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Turn {
    Straight,
    Left,
    Right,
}

/// Rotate the heading `(hx, hy)` for a turn choice.
fn rotate(hx: i8, hy: i8, turn: Turn) -> (i8, i8) {
    match turn {
        Turn::Straight => (hx, hy),
        Turn::Left => (-hy, hx),
        Turn::Right => (hy, -hx),
    }
}

/// Pick a continuation at node `(xi, yj)` and point the vehicle down it.
fn turn_at_node<R: Rng + ?Sized>(
    v: &mut Vehicle,
    grid: &LaneGrid,
    xi: usize,
    yj: usize,
    turn_probability: f64,
    rng: &mut R,
) {
    let (hx, hy) = match v.lane {
        Lane::Vertical { .. } => (0, v.dir),
        Lane::Horizontal { .. } => (v.dir, 0),
    };
    let feasible = |hx: i8, hy: i8| -> bool {
        (hx > 0 && xi + 1 < grid.xs.len())
            || (hx < 0 && xi > 0)
            || (hy > 0 && yj + 1 < grid.ys.len())
            || (hy < 0 && yj > 0)
    };
    let weight = |t: Turn| match t {
        Turn::Straight => 1.0 - turn_probability,
        Turn::Left | Turn::Right => turn_probability / 2.0,
    };
    let options: Vec<(Turn, f64)> = [Turn::Straight, Turn::Left, Turn::Right]
        .into_iter()
        .filter(|&t| {
            let (nx, ny) = rotate(hx, hy, t);
            feasible(nx, ny)
        })
        .map(|t| (t, weight(t)))
        .collect();
    debug_assert!(!options.is_empty(), "a grid node always has a way onward");

    let total: f64 = options.iter().map(|(_, w)| w).sum();
    let mut draw = rng.random_range(0.0..1.0) * total;
    let mut chosen = options[options.len() - 1].0;
    for &(t, w) in &options {
        if draw < w {
            chosen = t;
            break;
        }
        draw -= w;
    }

    let (nx, ny) = rotate(hx, hy, chosen);
    if nx != 0 {
        v.lane = Lane::Horizontal {
            yi: yj,
            x: grid.xs[xi],
        };
        v.dir = nx;
    } else {
        v.lane = Lane::Vertical {
            xi,
            y: grid.ys[yj],
        };
        v.dir = ny;
    }
}

/// Drive a vehicle `distance` meters along the grid, turning at every node
/// it crosses.
fn advance<R: Rng + ?Sized>(
    v: &mut Vehicle,
    grid: &LaneGrid,
    distance: f64,
    turn_probability: f64,
    rng: &mut R,
) {
    let mut remaining = distance;
    while remaining > 0.0 {
        let (node, dist) = next_node(v, grid)
            .expect("vehicle heading is always feasible after a turn");
        if remaining < dist {
            match &mut v.lane {
                Lane::Vertical { y, .. } => *y += v.dir as f64 * remaining,
                Lane::Horizontal { x, .. } => *x += v.dir as f64 * remaining,
            }
            break;
        }
        remaining -= dist;
        // land exactly on the node, then decide where to go
        let (xi, yj) = match v.lane {
            Lane::Vertical { xi, .. } => (xi, node),
            Lane::Horizontal { yi, .. } => (node, yi),
        };
        match &mut v.lane {
            Lane::Vertical { y, .. } => *y = grid.ys[yj],
            Lane::Horizontal { x, .. } => *x = grid.xs[xi],
        }
        turn_at_node(v, grid, xi, yj, turn_probability, rng);
    }
    v.sync_position(grid);
}

/// A transmitter/receiver pair sharing safety traffic.
#[derive(Debug, Clone, Copy)]
pub struct D2dPair {
    pub tx: Vehicle,
    pub rx: Vehicle,
}

/// All actors in the scene.
#[derive(Debug, Clone)]
pub struct Topology {
    pub pairs: Vec<D2dPair>,
    pub cues: Vec<Vehicle>,
    pub bs_position: Position,
}

impl Topology {
    pub fn num_d2d(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_cues(&self) -> usize {
        self.cues.len()
    }

    fn vehicles_mut(&mut self) -> impl Iterator<Item = &mut Vehicle> {
        self.pairs
            .iter_mut()
            .flat_map(|p| [&mut p.tx, &mut p.rx])
            .chain(self.cues.iter_mut())
    }
}

/// Parameters for [`drop_vehicles`].
#[derive(Debug, Clone, Copy)]
pub struct DropConfig {
    pub num_d2d: usize,
    pub num_cues: usize,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    pub pairing_radius_m: f64,
}

const PAIRING_ATTEMPTS: usize = 10_000;

/// Place `num_d2d` transmitter/receiver pairs and `num_cues` cellular users
/// uniformly over the street network. Receivers are drawn uniformly from the
/// part of the network within the pairing radius of their transmitter (by
/// rejection), so every pair is within radio range for safety messaging.
pub fn drop_vehicles<R: Rng + ?Sized>(
    config: &DropConfig,
    grid: &LaneGrid,
    rng: &mut R,
) -> Result<Topology> {
    let sample_vehicle = |rng: &mut R| -> Vehicle {
        let lane = grid.sample_lane(rng);
        let dir: i8 = if rng.random::<bool>() { 1 } else { -1 };
        let speed = rng.random_range(config.speed_min_kmh..=config.speed_max_kmh);
        Vehicle::new(lane, dir, speed, grid)
    };

    let mut pairs = Vec::with_capacity(config.num_d2d);
    for k in 0..config.num_d2d {
        let tx = sample_vehicle(rng);
        let mut rx = None;
        for _ in 0..PAIRING_ATTEMPTS {
            let candidate = sample_vehicle(rng);
            if candidate.position.distance_to(&tx.position) <= config.pairing_radius_m {
                rx = Some(candidate);
                break;
            }
        }
        let rx = rx.ok_or_else(|| {
            Error::Config(format!(
                "could not place a receiver within {} m of transmitter {k}; \
                 the pairing radius is too small for this street grid",
                config.pairing_radius_m
            ))
        })?;
        pairs.push(D2dPair { tx, rx });
    }
    let cues = (0..config.num_cues).map(|_| sample_vehicle(rng)).collect();
    Ok(Topology {
        pairs,
        cues,
        bs_position: Position::new(grid.width() / 2.0, grid.height() / 2.0),
    })
}

/// Advance every vehicle by `dt` seconds at its own constant speed. The
/// iteration order (pair tx, pair rx, then CUEs) is fixed so a seeded run
/// is reproducible.
pub fn move_vehicles<R: Rng + ?Sized>(
    topology: &mut Topology,
    grid: &LaneGrid,
    dt_s: f64,
    turn_probability: f64,
    rng: &mut R,
) {
    debug_assert!(dt_s > 0.0);
    for v in topology.vehicles_mut() {
        let distance = v.speed_mps() * dt_s;
        advance(v, grid, distance, turn_probability, rng);
    }
}
