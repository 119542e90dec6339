//! Stochastic agent-based realization on a square lattice.
//!
//! Each step runs five phases over all agents in index order: contagion,
//! recovery, waning, reorientation and movement. Transmission needs an S and
//! an I agent in the same cell moving in the same direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ByClass, Class};
use crate::error::{Error, Result};

/// Bumped whenever the order or number of random draws changes.
pub const STREAM_VERSION: u32 = 1;

/// Lattice directions an agent can move along (one cell per step).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSet {
    #[default]
    Eight,
    Four,
    /// A single direction `(1, 0)`, for well-mixed single-cell worlds.
    Single,
}

impl DirectionSet {
    pub fn vectors(self) -> &'static [[i32; 2]] {
        match self {
            DirectionSet::Eight => &[
                [1, 0],
                [1, 1],
                [0, 1],
                [-1, 1],
                [-1, 0],
                [-1, -1],
                [0, -1],
                [1, -1],
            ],
            DirectionSet::Four => &[[1, 0], [0, 1], [-1, 0], [0, -1]],
            DirectionSet::Single => &[[1, 0]],
        }
    }

    pub fn len(self) -> usize {
        self.vectors().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// Direction with component `axis` negated, if the set contains it.
    fn flipped(self, dir: usize, axis: usize) -> usize {
        let mut v = self.vectors()[dir];
        v[axis] = -v[axis];
        self.vectors().iter().position(|u| *u == v).unwrap_or(dir)
    }
}

/// Per-step probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbmParams {
    pub p_transmit: f64,
    pub p_recover: f64,
    pub p_wane: f64,
    pub p_reorient: f64,
    pub directions: DirectionSet,
}

impl AbmParams {
    /// Probabilities used for the spreading experiment on the 50×50 lattice.
    pub fn fig2() -> Self {
        Self {
            p_transmit: 0.75,
            p_recover: 0.5,
            p_wane: 0.0,
            p_reorient: 0.5,
            directions: DirectionSet::Eight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_transmit", self.p_transmit),
            ("p_recover", self.p_recover),
            ("p_wane", self.p_wane),
            ("p_reorient", self.p_reorient),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("{p} is not a probability")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Agent {
    pub class: Class,
    pub pos: [usize; 2],
    pub dir: usize,
}

/// Where agents start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Placement {
    /// Uniformly over a centered square block of the given side.
    CentralBlock { side: usize },
    /// Uniformly over the whole lattice.
    Uniform,
}

impl Default for Placement {
    fn default() -> Self {
        Placement::CentralBlock { side: 5 }
    }
}

#[derive(Clone, Debug)]
pub struct AgentWorld {
    side: usize,
    directions: DirectionSet,
    agents: Vec<Agent>,
    seed: u64,
    rng: ChaCha8Rng,
    step: u64,
}

/// Lattice description for [`init_population`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub side: usize,
    pub placement: Placement,
    pub directions: DirectionSet,
    /// Maximum agents per cell; `None` lets agents stack without limit.
    pub capacity: Option<usize>,
}

impl WorldSpec {
    pub fn fig2() -> Self {
        Self {
            side: 50,
            placement: Placement::default(),
            directions: DirectionSet::Eight,
            capacity: None,
        }
    }
}

/// Places `n_S`, `n_I`, `n_R` agents (in that index order) with uniform
/// random directions. Draws per agent: x, y, direction.
pub fn init_population(counts: [usize; 3], spec: &WorldSpec, seed: u64) -> Result<AgentWorld> {
    if spec.side == 0 {
        return Err(Error::param("side", "lattice needs at least one cell"));
    }
    let (lo, extent) = match spec.placement {
        Placement::CentralBlock { side } => {
            if side == 0 || side > spec.side {
                return Err(Error::param(
                    "placement",
                    format!("block side {side} does not fit a lattice of side {}", spec.side),
                ));
            }
            ((spec.side - side) / 2, side)
        }
        Placement::Uniform => (0, spec.side),
    };
    let total: usize = counts.iter().sum();
    if let Some(cap) = spec.capacity {
        if total > cap * extent * extent {
            return Err(Error::param(
                "capacity",
                format!("{total} agents exceed {cap} per cell over {} cells", extent * extent),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occupancy = vec![0usize; spec.side * spec.side];
    let mut agents = Vec::with_capacity(total);
    let n_dir = spec.directions.len();
    for (class, &n) in Class::ALL.iter().zip(&counts) {
        for _ in 0..n {
            let agent = loop {
                let pos = [lo + rng.random_range(0..extent), lo + rng.random_range(0..extent)];
                let dir = rng.random_range(0..n_dir);
                let cell = pos[1] * spec.side + pos[0];
                match spec.capacity {
                    Some(cap) if occupancy[cell] >= cap => continue,
                    _ => {
                        occupancy[cell] += 1;
                        break Agent { class: *class, pos, dir };
                    }
                }
            };
            agents.push(agent);
        }
    }
    Ok(AgentWorld {
        side: spec.side,
        directions: spec.directions,
        agents,
        seed,
        rng,
        step: 0,
    })
}

impl AgentWorld {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn directions(&self) -> DirectionSet {
        self.directions
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for a in &self.agents {
            c[a.class.index()] += 1;
        }
        c
    }

    /// Agents per cell and class, row-major.
    pub fn occupancy(&self) -> Occupancy {
        let mut counts = ByClass::from_fn(|_| vec![0u32; self.side * self.side]);
        for a in &self.agents {
            counts[a.class][a.pos[1] * self.side + a.pos[0]] += 1;
        }
        Occupancy { side: self.side, counts }
    }

    /// Mean Euclidean distance of agents of a class from the lattice center.
    pub fn mean_radius(&self, class: Class) -> Option<f64> {
        let center = (self.side as f64 - 1.0) / 2.0;
        let (mut sum, mut n) = (0.0, 0usize);
        for a in self.agents.iter().filter(|a| a.class == class) {
            sum += (a.pos[0] as f64 - center).hypot(a.pos[1] as f64 - center);
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Stable binary encoding of the full state, including the stream position.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + self.agents.len() * 18);
        out.extend_from_slice(&STREAM_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.side as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        for a in &self.agents {
            out.push(a.class.index() as u8);
            out.extend_from_slice(&(a.pos[0] as u64).to_le_bytes());
            out.extend_from_slice(&(a.pos[1] as u64).to_le_bytes());
            out.push(a.dir as u8);
        }
        out
    }

    fn reflect(&self, x: usize, d: i32) -> (usize, bool) {
        if self.side == 1 || d == 0 {
            return (x, false);
        }
        let moved = x as i64 + d as i64;
        let last = self.side as i64 - 1;
        if moved < 0 {
            ((-moved) as usize, true)
        } else if moved > last {
            ((2 * last - moved) as usize, true)
        } else {
            (moved as usize, false)
        }
    }
}

/// One step of the five phases; see the module documentation.
pub fn abm_step(world: &mut AgentWorld, params: &AbmParams) -> Result<()> {
    params.validate()?;
    if params.directions != world.directions {
        return Err(Error::param("directions", "parameters and world use different direction sets"));
    }
    let side = world.side;
    let n_dir = world.directions.len();
    let slot = |a: &Agent| (a.pos[1] * side + a.pos[0]) * n_dir + a.dir;

    let mut infectious = vec![0u32; side * side * n_dir];
    for a in world.agents.iter().filter(|a| a.class == Class::I) {
        infectious[slot(a)] += 1;
    }
    let escape = 1.0 - params.p_transmit;
    for a in world.agents.iter_mut() {
        if a.class != Class::S {
            continue;
        }
        let n = infectious[slot(a)];
        if n > 0 {
            let p = 1.0 - escape.powi(n as i32);
            if world.rng.random::<f64>() < p {
                a.class = Class::I;
            }
        }
    }
    for a in world.agents.iter_mut().filter(|a| a.class == Class::I) {
        if world.rng.random::<f64>() < params.p_recover {
            a.class = Class::R;
        }
    }
    for a in world.agents.iter_mut().filter(|a| a.class == Class::R) {
        if world.rng.random::<f64>() < params.p_wane {
            a.class = Class::S;
        }
    }
    for a in world.agents.iter_mut() {
        if world.rng.random::<f64>() < params.p_reorient {
            a.dir = world.rng.random_range(0..n_dir);
        }
    }
    let dirs = world.directions;
    for k in 0..world.agents.len() {
        let a = world.agents[k];
        let v = dirs.vectors()[a.dir];
        let mut dir = a.dir;
        let mut pos = a.pos;
        for axis in 0..2 {
            let (p, flipped) = world.reflect(a.pos[axis], v[axis]);
            pos[axis] = p;
            if flipped {
                dir = dirs.flipped(dir, axis);
            }
        }
        world.agents[k].pos = pos;
        world.agents[k].dir = dir;
    }
    world.step += 1;
    Ok(())
}

/// Agents per cell for each class.
#[derive(Clone, Debug, PartialEq)]
pub struct Occupancy {
    pub side: usize,
    pub counts: ByClass<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbmRun {
    /// Class counts after each step, starting with the initial state.
    pub counts: Vec<[usize; 3]>,
    /// Mean distance of I agents from the center after each step.
    pub i_mean_radius: Vec<Option<f64>>,
    /// Occupancy grids at the requested steps.
    pub snapshots: Vec<(u64, Occupancy)>,
}

pub fn run_abm(world: &mut AgentWorld, params: &AbmParams, n_steps: u64, snapshot_steps: &[u64]) -> Result<AbmRun> {
    let mut run = AbmRun {
        counts: vec![world.counts()],
        i_mean_radius: vec![world.mean_radius(Class::I)],
        snapshots: Vec::new(),
    };
    if snapshot_steps.contains(&world.step) {
        run.snapshots.push((world.step, world.occupancy()));
    }
    for _ in 0..n_steps {
        abm_step(world, params)?;
        run.counts.push(world.counts());
        run.i_mean_radius.push(world.mean_radius(Class::I));
        if snapshot_steps.contains(&world.step) {
            run.snapshots.push((world.step, world.occupancy()));
        }
    }
    Ok(run)
}
