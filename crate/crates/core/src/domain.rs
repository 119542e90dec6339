//! Shared state types: velocity quadratures, uniform grids, phase-space and
//! spatial density fields, parameter fields and reference scales.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epidemiological class of an individual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    S,
    I,
    R,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::S, Class::I, Class::R];

    pub fn index(self) -> usize {
        match self {
            Class::S => 0,
            Class::I => 1,
            Class::R => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::S => "S",
            Class::I => "I",
            Class::R => "R",
        }
    }
}

/// One value per epidemiological class, indexable by [`Class`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ByClass<T>(pub [T; 3]);

impl<T> ByClass<T> {
    pub fn from_fn(mut f: impl FnMut(Class) -> T) -> Self {
        ByClass([f(Class::S), f(Class::I), f(Class::R)])
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ByClass<U> {
        ByClass([f(&self.0[0]), f(&self.0[1]), f(&self.0[2])])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Class, &T)> {
        Class::ALL.into_iter().zip(self.0.iter())
    }
}

impl<T> Index<Class> for ByClass<T> {
    type Output = T;
    fn index(&self, c: Class) -> &T {
        &self.0[c.index()]
    }
}

impl<T> IndexMut<Class> for ByClass<T> {
    fn index_mut(&mut self, c: Class) -> &mut T {
        &mut self.0[c.index()]
    }
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Discrete velocity quadrature for a compact, spherically symmetric set V.
///
/// One-dimensional sets store their velocities as `[v, 0.0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocitySet {
    dim: usize,
    velocities: Vec<[f64; 2]>,
    weights: Vec<f64>,
    equilibrium: Vec<f64>,
    total_measure: f64,
    mirror: [Vec<usize>; 2],
}

impl VelocitySet {
    /// Builds a quadrature and checks the moment identities: positive weights,
    /// `Σ w F = 1`, `Σ w v = 0`, `F` radial, and closure under reflection of
    /// each axis (needed by the specular wall treatment).
    pub fn new(
        dim: usize,
        velocities: Vec<[f64; 2]>,
        weights: Vec<f64>,
        equilibrium: Vec<f64>,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", format!("{dim} is not 1 or 2")));
        }
        let n = velocities.len();
        if n == 0 || weights.len() != n || equilibrium.len() != n {
            return Err(Error::Shape(format!(
                "{} velocities, {} weights, {} equilibrium values",
                n,
                weights.len(),
                equilibrium.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::param("weights", format!("weight {w} is not positive")));
        }
        if dim == 1 && velocities.iter().any(|v| v[1] != 0.0) {
            return Err(Error::param("velocities", "1D velocities must have zero y component"));
        }
        let total_measure: f64 = weights.iter().sum();
        let v_max = velocities.iter().map(|v| norm(*v)).fold(0.0, f64::max);

        let mass: f64 = weights.iter().zip(&equilibrium).map(|(w, f)| w * f).sum();
        if (mass - 1.0).abs() > SYMMETRY_TOL {
            return Err(Error::param("equilibrium", format!("Σ w F = {mass}, expected 1")));
        }
        let mut flux = [0.0; 2];
        for (v, w) in velocities.iter().zip(&weights) {
            flux[0] += w * v[0];
            flux[1] += w * v[1];
        }
        let scale = v_max.max(1.0) * total_measure;
        if norm(flux) > SYMMETRY_TOL * scale {
            return Err(Error::param("velocities", format!("Σ w v = {flux:?}, expected 0")));
        }
        for a in 0..n {
            for b in a + 1..n {
                let same_speed = (norm(velocities[a]) - norm(velocities[b])).abs()
                    <= SYMMETRY_TOL * v_max.max(1.0);
                if same_speed && (equilibrium[a] - equilibrium[b]).abs() > SYMMETRY_TOL {
                    return Err(Error::param("equilibrium", "F must depend on |v| only"));
                }
            }
        }

        let mut mirror = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for (axis, table) in mirror.iter_mut().enumerate() {
            for (k, v) in velocities.iter().enumerate() {
                let mut target = *v;
                target[axis] = -target[axis];
                let found = velocities.iter().position(|u| {
                    (u[0] - target[0]).abs() <= SYMMETRY_TOL * v_max.max(1.0)
                        && (u[1] - target[1]).abs() <= SYMMETRY_TOL * v_max.max(1.0)
                });
                match found {
                    Some(m) if (weights[m] - weights[k]).abs() <= SYMMETRY_TOL * weights[k] => {
                        table.push(m)
                    }
                    _ => {
                        return Err(Error::param(
                            "velocities",
                            format!("velocity {k} has no equal-weight mirror along axis {axis}"),
                        ))
                    }
                }
            }
        }

        Ok(Self {
            dim,
            velocities,
            weights,
            equilibrium,
            total_measure,
            mirror,
        })
    }

    /// Uniform angles on a circle of radius `v0` with `F = 1/|V|`.
    pub fn circle(n_angles: usize, v0: f64) -> Result<Self> {
        if n_angles < 4 || n_angles % 2 != 0 {
            return Err(Error::param(
                "n_angles",
                format!("{n_angles} must be even and at least 4"),
            ));
        }
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::param("v0", format!("{v0} is not a positive speed")));
        }
        let n = n_angles;
        // Fold every angle back to the first quadrant so the reflection
        // symmetries hold bit-for-bit.
        let quadrant = |k: usize| -> [f64; 2] {
            if k == 0 {
                [1.0, 0.0]
            } else if 4 * k == n {
                [0.0, 1.0]
            } else {
                let theta = 2.0 * PI * k as f64 / n as f64;
                [theta.cos(), theta.sin()]
            }
        };
        let velocities = (0..n)
            .map(|k| {
                let [c, s] = if 4 * k <= n {
                    quadrant(k)
                } else if 2 * k <= n {
                    let [c, s] = quadrant(n / 2 - k);
                    [-c, s]
                } else if 4 * k <= 3 * n {
                    let [c, s] = quadrant(k - n / 2);
                    [-c, -s]
                } else {
                    let [c, s] = quadrant(n - k);
                    [c, -s]
                };
                [v0 * c, v0 * s]
            })
            .collect();
        let measure = 2.0 * PI * v0;
        let weight = measure / n as f64;
        Self::new(2, velocities, vec![weight; n], vec![1.0 / measure; n])
    }

    /// One-dimensional signed pair `{+v, -v}` with unit weights and `F = 1/2`.
    pub fn two_speed(v_speed: f64) -> Result<Self> {
        if !(v_speed > 0.0 && v_speed.is_finite()) {
            return Err(Error::param("v_speed", format!("{v_speed} is not a positive speed")));
        }
        Self::new(
            1,
            vec![[v_speed, 0.0], [-v_speed, 0.0]],
            vec![1.0, 1.0],
            vec![0.5, 0.5],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn velocities(&self) -> &[[f64; 2]] {
        &self.velocities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn equilibrium(&self) -> &[f64] {
        &self.equilibrium
    }

    pub fn total_measure(&self) -> f64 {
        self.total_measure
    }

    pub fn v_max(&self) -> f64 {
        self.velocities.iter().map(|v| norm(*v)).fold(0.0, f64::max)
    }

    /// Index of the velocity obtained by flipping component `axis` of velocity `k`.
    pub fn mirror(&self, axis: usize, k: usize) -> usize {
        self.mirror[axis][k]
    }

    /// True when `F = 1/|V|`, the equilibrium of the reorientation kernel.
    pub fn has_uniform_equilibrium(&self) -> bool {
        let f = 1.0 / self.total_measure;
        self.equilibrium.iter().all(|e| (e - f).abs() <= SYMMETRY_TOL * f)
    }

    /// `Σ_k w_k F_k v_k,axis²`, the per-axis second moment of the equilibrium.
    pub fn axis_second_moment(&self, axis: usize) -> f64 {
        self.velocities
            .iter()
            .zip(self.weights.iter().zip(&self.equilibrium))
            .map(|(v, (w, f))| w * f * v[axis] * v[axis])
            .sum()
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

pub fn make_circle_velocity_set(n_angles: usize, v0: f64) -> Result<VelocitySet> {
    VelocitySet::circle(n_angles, v0)
}

pub fn make_two_speed_set(v_speed: f64) -> Result<VelocitySet> {
    VelocitySet::two_speed(v_speed)
}

/// Density `Σ w f` and flux `Σ w v f` of one per-velocity profile.
pub fn velocity_moments(f: &[f64], vs: &VelocitySet) -> Result<(f64, [f64; 2])> {
    if f.len() != vs.len() {
        return Err(Error::Shape(format!(
            "profile has {} values for {} velocities",
            f.len(),
            vs.len()
        )));
    }
    let mut density = 0.0;
    let mut flux = [0.0; 2];
    for ((fk, w), v) in f.iter().zip(vs.weights()).zip(vs.velocities()) {
        density += w * fk;
        flux[0] += w * v[0] * fk;
        flux[1] += w * v[1] * fk;
    }
    Ok((density, flux))
}

/// Boundary treatment of the spatial domain. Only the no-flux wall exists.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    #[default]
    NoFlux,
}

/// Uniform Cartesian cells over a rectangle (or interval) with no-flux walls.
///
/// Cells are stored row-major: `index = j * nx + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    dim: usize,
    cells: [usize; 2],
    h: f64,
    origin: [f64; 2],
    boundary: BoundaryRule,
}

impl SpatialGrid {
    pub fn new(dim: usize, cells: [usize; 2], h: f64, origin: [f64; 2]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", format!("{dim} is not 1 or 2")));
        }
        if cells[0] == 0 || cells[1] == 0 {
            return Err(Error::param("cells", "cell counts must be at least 1"));
        }
        if dim == 1 && cells[1] != 1 {
            return Err(Error::param("cells", "a 1D grid has exactly one row"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param("h", format!("{h} is not a positive cell size")));
        }
        Ok(Self {
            dim,
            cells,
            h,
            origin,
            boundary: BoundaryRule::NoFlux,
        })
    }

    pub fn line(n: usize, h: f64) -> Result<Self> {
        Self::new(1, [n, 1], h, [0.0, 0.0])
    }

    pub fn square(nx: usize, ny: usize, h: f64) -> Result<Self> {
        Self::new(2, [nx, ny], h, [0.0, 0.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn boundary(&self) -> BoundaryRule {
        self.boundary
    }

    /// Cell measure `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn extent(&self) -> [f64; 2] {
        let ly = if self.dim == 1 { 0.0 } else { self.cells[1] as f64 * self.h };
        [self.cells[0] as f64 * self.h, ly]
    }

    /// Measure of Ω.
    pub fn domain_measure(&self) -> f64 {
        self.n_cells() as f64 * self.cell_volume()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.cells[0], c / self.cells[0])
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.coords(c);
        let y = if self.dim == 1 {
            0.0
        } else {
            self.origin[1] + (j as f64 + 0.5) * self.h
        };
        [self.origin[0] + (i as f64 + 0.5) * self.h, y]
    }

    /// Axes along which the grid has more than one cell.
    pub fn active_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..2).filter(move |&a| self.cells[a] > 1)
    }

    /// Neighbor of `c` along `axis` in direction `step` (±1); `None` past a wall.
    pub fn neighbor(&self, c: usize, axis: usize, step: isize) -> Option<usize> {
        let (i, j) = self.coords(c);
        let (pos, n) = if axis == 0 { (i, self.cells[0]) } else { (j, self.cells[1]) };
        let next = pos as isize + step;
        if next < 0 || next >= n as isize {
            return None;
        }
        Some(if axis == 0 {
            self.index(next as usize, j)
        } else {
            self.index(i, next as usize)
        })
    }

    /// Gradient of a cell field: second-order central differences inside,
    /// second-order one-sided differences in boundary cells.
    pub fn gradient(&self, field: &[f64], c: usize) -> [f64; 2] {
        let mut g = [0.0; 2];
        for axis in self.active_axes() {
            g[axis] = self.axis_derivative(c, axis, |n| field[n]);
        }
        g
    }

    pub(crate) fn axis_derivative(&self, c: usize, axis: usize, value: impl Fn(usize) -> f64) -> f64 {
        let h = self.h;
        match (self.neighbor(c, axis, -1), self.neighbor(c, axis, 1)) {
            (Some(m), Some(p)) => (value(p) - value(m)) / (2.0 * h),
            (None, Some(p)) => match self.neighbor(p, axis, 1) {
                Some(pp) => (-3.0 * value(c) + 4.0 * value(p) - value(pp)) / (2.0 * h),
                None => (value(p) - value(c)) / h,
            },
            (Some(m), None) => match self.neighbor(m, axis, -1) {
                Some(mm) => (3.0 * value(c) - 4.0 * value(m) + value(mm)) / (2.0 * h),
                None => (value(c) - value(m)) / h,
            },
            (None, None) => 0.0,
        }
    }
}

/// Phase-space densities `f_j(x, v)`, stored cell-major: `c * n_vel + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField {
    n_cells: usize,
    n_vel: usize,
    data: ByClass<Vec<f64>>,
}

impl PhaseField {
    pub fn zeros(n_cells: usize, n_vel: usize) -> Self {
        Self {
            n_cells,
            n_vel,
            data: ByClass::from_fn(|_| vec![0.0; n_cells * n_vel]),
        }
    }

    pub fn from_classes(n_cells: usize, n_vel: usize, data: ByClass<Vec<f64>>) -> Result<Self> {
        for (c, d) in data.iter() {
            if d.len() != n_cells * n_vel {
                return Err(Error::Shape(format!(
                    "class {} has {} values, expected {}",
                    c.name(),
                    d.len(),
                    n_cells * n_vel
                )));
            }
        }
        Ok(Self { n_cells, n_vel, data })
    }

    /// `f_j(x, v) = ρ_j(x) F(v)`.
    pub fn equilibrium(rho: &MesoField, vs: &VelocitySet) -> Self {
        let n_vel = vs.len();
        let data = ByClass::from_fn(|class| {
            rho.class(class)
                .iter()
                .flat_map(|r| vs.equilibrium().iter().map(move |f| r * f))
                .collect()
        });
        Self {
            n_cells: rho.n_cells(),
            n_vel,
            data,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_vel(&self) -> usize {
        self.n_vel
    }

    pub fn class(&self, c: Class) -> &[f64] {
        &self.data[c]
    }

    pub fn class_mut(&mut self, c: Class) -> &mut [f64] {
        &mut self.data[c]
    }

    pub fn classes(&self) -> &ByClass<Vec<f64>> {
        &self.data
    }

    pub fn cell(&self, class: Class, c: usize) -> &[f64] {
        &self.data[class][c * self.n_vel..(c + 1) * self.n_vel]
    }

    /// Velocity integral `ρ_j = Σ_k w_k f_j(·, v_k)`.
    pub fn density(&self, class: Class, vs: &VelocitySet) -> Vec<f64> {
        self.data[class]
            .chunks_exact(self.n_vel)
            .map(|f| f.iter().zip(vs.weights()).map(|(f, w)| f * w).sum())
            .collect()
    }

    pub fn to_meso(&self, vs: &VelocitySet) -> MesoField {
        MesoField {
            data: ByClass::from_fn(|c| self.density(c, vs)),
        }
    }

    /// Number of individuals of one class, `∫∫ f_j dv dx`.
    pub fn class_total(&self, class: Class, vs: &VelocitySet, grid: &SpatialGrid) -> f64 {
        self.density(class, vs).iter().sum::<f64>() * grid.cell_volume()
    }

    pub fn totals(&self, vs: &VelocitySet, grid: &SpatialGrid) -> [f64; 3] {
        Class::ALL.map(|c| self.class_total(c, vs, grid))
    }

    /// `‖f_j‖_{L^p(Ω×V)}` with the quadrature and cell measures.
    pub fn lp_norm(&self, class: Class, p: f64, vs: &VelocitySet, grid: &SpatialGrid) -> f64 {
        let sum: f64 = self.data[class]
            .chunks_exact(self.n_vel)
            .map(|f| {
                f.iter()
                    .zip(vs.weights())
                    .map(|(f, w)| w * f.abs().powf(p))
                    .sum::<f64>()
            })
            .sum();
        (sum * grid.cell_volume()).powf(1.0 / p)
    }

    pub fn min_value(&self) -> f64 {
        self.data
            .0
            .iter()
            .flat_map(|d| d.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.0.iter().all(|d| d.iter().all(|x| x.is_finite()))
    }
}

/// Spatial densities `ρ_j(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MesoField {
    data: ByClass<Vec<f64>>,
}

impl MesoField {
    pub fn new(s: Vec<f64>, i: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if s.len() != i.len() || s.len() != r.len() {
            return Err(Error::Shape(format!(
                "class lengths {} / {} / {}",
                s.len(),
                i.len(),
                r.len()
            )));
        }
        Ok(Self {
            data: ByClass([s, i, r]),
        })
    }

    pub fn zeros(n_cells: usize) -> Self {
        Self {
            data: ByClass::from_fn(|_| vec![0.0; n_cells]),
        }
    }

    pub fn uniform(n_cells: usize, values: [f64; 3]) -> Self {
        Self {
            data: ByClass(values.map(|v| vec![v; n_cells])),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.data.0[0].len()
    }

    pub fn class(&self, c: Class) -> &[f64] {
        &self.data[c]
    }

    pub fn class_mut(&mut self, c: Class) -> &mut [f64] {
        &mut self.data[c]
    }

    pub fn classes(&self) -> &ByClass<Vec<f64>> {
        &self.data
    }

    pub fn totals(&self, grid: &SpatialGrid) -> [f64; 3] {
        Class::ALL.map(|c| self.data[c].iter().sum::<f64>() * grid.cell_volume())
    }

    /// Discrete `L²(Ω)` norm of one class.
    pub fn l2_norm(&self, class: Class, grid: &SpatialGrid) -> f64 {
        (self.data[class].iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt()
    }

    pub fn linf_norm(&self, class: Class) -> f64 {
        self.data[class].iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Discrete `L²(Ω)` distance between the two fields for one class.
    pub fn l2_distance(&self, other: &MesoField, class: Class, grid: &SpatialGrid) -> f64 {
        let s: f64 = self.data[class]
            .iter()
            .zip(&other.data[class])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (s * grid.cell_volume()).sqrt()
    }

    pub fn min_value(&self) -> f64 {
        self.data
            .0
            .iter()
            .flat_map(|d| d.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Model parameters sampled on the grid.
///
/// `alpha`, `beta`, `gamma` are stored per (cell, velocity) in cell-major
/// order; `lambda`, `eta` and `xi` are per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamFields {
    n_cells: usize,
    n_vel: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: ByClass<Vec<f64>>,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Spatially constant parameter values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: [f64; 3],
    pub eta: f64,
    pub xi: f64,
}

impl ConstantParams {
    /// Transition rates only; unit reorientation rate, no preferred direction.
    pub fn rates(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            lambda: [1.0; 3],
            eta: 0.0,
            xi: 0.0,
        }
    }
}

impl ParamFields {
    pub fn uniform(n_cells: usize, n_vel: usize, p: ConstantParams) -> Result<Self> {
        let n = n_cells * n_vel;
        let fields = Self {
            n_cells,
            n_vel,
            alpha: vec![p.alpha; n],
            beta: vec![p.beta; n],
            gamma: vec![p.gamma; n],
            lambda: ByClass(p.lambda.map(|l| vec![l; n_cells])),
            eta: vec![p.eta; n_cells],
            xi: vec![p.xi; n_cells],
        };
        fields.validate()?;
        Ok(fields)
    }

    /// Builds fields from per-cell values; the rates are copied across velocities.
    #[allow(clippy::too_many_arguments)]
    pub fn from_cell_fields(
        n_vel: usize,
        alpha: &[f64],
        beta: &[f64],
        gamma: &[f64],
        lambda: ByClass<Vec<f64>>,
        eta: Vec<f64>,
        xi: Vec<f64>,
    ) -> Result<Self> {
        let spread = |f: &[f64]| -> Vec<f64> {
            f.iter().flat_map(|x| std::iter::repeat_n(*x, n_vel)).collect()
        };
        let fields = Self {
            n_cells: alpha.len(),
            n_vel,
            alpha: spread(alpha),
            beta: spread(beta),
            gamma: spread(gamma),
            lambda,
            eta,
            xi,
        };
        fields.validate()?;
        Ok(fields)
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.n_cells * self.n_vel;
        for (name, f, len) in [
            ("alpha", &self.alpha, nv),
            ("beta", &self.beta, nv),
            ("gamma", &self.gamma, nv),
            ("eta", &self.eta, self.n_cells),
            ("xi", &self.xi, self.n_cells),
        ] {
            if f.len() != len {
                return Err(Error::Shape(format!("{name} has {} values, expected {len}", f.len())));
            }
            if let Some(x) = f.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                return Err(Error::param(name, format!("value {x} is negative or not finite")));
            }
        }
        for (c, l) in self.lambda.iter() {
            if l.len() != self.n_cells {
                return Err(Error::Shape(format!(
                    "lambda_{} has {} values, expected {}",
                    c.name(),
                    l.len(),
                    self.n_cells
                )));
            }
            if let Some(x) = l.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(Error::param("lambda", format!("value {x} is not strictly positive")));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_vel(&self) -> usize {
        self.n_vel
    }

    pub fn sup(field: &[f64]) -> f64 {
        field.iter().fold(0.0, |m, x| m.max(*x))
    }

    pub fn has_preferred_direction(&self) -> bool {
        self.eta.iter().chain(&self.xi).any(|x| *x != 0.0)
    }
}

/// Piecewise-constant-in-time values: segment `k` applies on `[start_k, start_{k+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule<T> {
    segments: Vec<(f64, T)>,
}

impl<T> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Self {
            segments: vec![(0.0, value)],
        }
    }

    pub fn new(segments: Vec<(f64, T)>) -> Result<Self> {
        match segments.first() {
            None => return Err(Error::param("schedule", "at least one segment is required")),
            Some((t, _)) if *t != 0.0 => {
                return Err(Error::param("schedule", "the first segment must start at t = 0"))
            }
            _ => {}
        }
        if segments.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::param("schedule", "segment start times must increase"));
        }
        Ok(Self { segments })
    }

    pub fn at(&self, t: f64) -> &T {
        let k = self.segments.partition_point(|(s, _)| *s <= t);
        &self.segments[k.saturating_sub(1)].1
    }

    /// Start of the first segment strictly after `t`, if any.
    pub fn next_change(&self, t: f64) -> Option<f64> {
        self.segments.iter().map(|(s, _)| *s).find(|s| *s > t)
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.segments.iter().map(|(_, v)| v)
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(&T) -> Result<U>) -> Result<Schedule<U>> {
        let segments = self
            .segments
            .iter()
            .map(|(t, v)| Ok((*t, f(v)?)))
            .collect::<Result<_>>()?;
        Ok(Schedule { segments })
    }
}

/// Reference scales of time, length, speed and per-class density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub t0: f64,
    pub x0: f64,
    pub v0: f64,
    pub f0: [f64; 3],
}

impl ScaleParams {
    pub fn identity() -> Self {
        Self {
            t0: 1.0,
            x0: 1.0,
            v0: 1.0,
            f0: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.t0, self.x0, self.v0, self.f0[0], self.f0[1], self.f0[2]];
        if all.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::param("scales", "all reference scales must be positive"));
        }
        Ok(())
    }

    /// `ε = (v0 / (x0 / t0))^{-1}`.
    pub fn epsilon(&self) -> f64 {
        self.x0 / (self.v0 * self.t0)
    }
}

/// Scalar model parameters in physical (or, after scaling, nondimensional) units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub dim: usize,
    /// Transition rates, 1/time.
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Reorientation rates per class, 1/time.
    pub lambda: [f64; 3],
    /// Turning responses, length / (time · speed^(d+1) · density).
    pub eta: f64,
    pub xi: f64,
    pub domain_length: f64,
    pub cell_size: f64,
    pub speed: f64,
    pub density: [f64; 3],
}

fn scale_params(p: &PhysicalParams, s: &ScaleParams, forward: bool) -> PhysicalParams {
    let apply = |x: f64, factor: f64| if forward { x * factor } else { x / factor };
    // Turning responses carry 1/density of the infectious class and a
    // velocity measure of dimension d.
    let turning = s.t0 * s.v0.powi(p.dim as i32 + 1) * s.f0[1] / s.x0;
    PhysicalParams {
        dim: p.dim,
        alpha: apply(p.alpha, s.t0),
        beta: apply(p.beta, s.t0),
        gamma: apply(p.gamma, s.t0),
        lambda: p.lambda.map(|l| apply(l, s.t0)),
        eta: apply(p.eta, turning),
        xi: apply(p.xi, turning),
        domain_length: apply(p.domain_length, 1.0 / s.x0),
        cell_size: apply(p.cell_size, 1.0 / s.x0),
        speed: apply(p.speed, 1.0 / s.v0),
        density: [
            apply(p.density[0], 1.0 / s.f0[0]),
            apply(p.density[1], 1.0 / s.f0[1]),
            apply(p.density[2], 1.0 / s.f0[2]),
        ],
    }
}

/// Rates times `t0`, lengths over `x0`, speeds over `v0`, densities over `f0_j`.
pub fn nondimensionalize(p: &PhysicalParams, scales: &ScaleParams) -> Result<(PhysicalParams, f64)> {
    scales.validate()?;
    Ok((scale_params(p, scales, true), scales.epsilon()))
}

pub fn redimensionalize(p: &PhysicalParams, scales: &ScaleParams) -> Result<PhysicalParams> {
    scales.validate()?;
    Ok(scale_params(p, scales, false))
}

/// One emitted row of a solver trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesRow {
    pub t: f64,
    pub totals: [f64; 3],
    pub norms: Vec<f64>,
}

/// Class totals and named norms at the emitted times of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub norm_names: Vec<String>,
    pub rows: Vec<TimeSeriesRow>,
}

impl TimeSeries {
    pub fn new(norm_names: Vec<String>) -> Self {
        Self {
            norm_names,
            rows: Vec::new(),
        }
    }

    pub fn norm(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.norm_names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r.norms[k]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn class(&self, c: Class) -> Vec<f64> {
        self.rows.iter().map(|r| r.totals[c.index()]).collect()
    }
}

/// Step sizes covering `[0, t_end]`: uniform `dt`, with the last step
/// shortened when `t_end` is not a multiple of `dt`.
pub fn step_plan(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("{dt} is not positive")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::param("t_end", format!("{t_end} is negative")));
    }
    let ratio = t_end / dt;
    let whole = ratio.round();
    if (ratio - whole).abs() <= 1e-9 * ratio.max(1.0) {
        return Ok(vec![dt; whole as usize]);
    }
    let full = ratio.floor() as usize;
    let mut steps = vec![dt; full];
    steps.push(t_end - full as f64 * dt);
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn circle_of_four() {
        let vs = VelocitySet::circle(4, 1.0).unwrap();
        assert_eq!(
            vs.velocities(),
            &[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
        );
        for w in vs.weights() {
            assert_relative_eq!(*w, PI / 2.0, max_relative = 1e-15);
        }
        for f in vs.equilibrium() {
            assert_relative_eq!(*f, 1.0 / (2.0 * PI), max_relative = 1e-15);
        }
    }

    #[test]
    fn circle_moments() {
        let vs = VelocitySet::circle(8, 2.0).unwrap();
        assert_relative_eq!(vs.total_measure(), 4.0 * PI, max_relative = 1e-14);
        let (_, flux) = velocity_moments(&vec![1.0; 8], &vs).unwrap();
        assert!(flux[0].abs() < 1e-14 && flux[1].abs() < 1e-14);

        let vs = VelocitySet::circle(16, 1.0).unwrap();
        let second: f64 = (0..16)
            .map(|k| {
                let v = vs.velocities()[k];
                vs.weights()[k] * vs.equilibrium()[k] * (v[0] * v[0] + v[1] * v[1])
            })
            .sum();
        assert_relative_eq!(second, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn circle_rejects_bad_sizes() {
        assert!(VelocitySet::circle(5, 1.0).is_err());
        assert!(VelocitySet::circle(2, 1.0).is_err());
        assert!(VelocitySet::circle(8, 0.0).is_err());
        assert!(VelocitySet::circle(8, -1.0).is_err());
    }

    #[test]
    fn circle_mirrors_are_exact() {
        for n in [4, 6, 10, 16, 64] {
            let vs = VelocitySet::circle(n, 1.3).unwrap();
            for k in 0..n {
                let v = vs.velocities()[k];
                let mx = vs.velocities()[vs.mirror(0, k)];
                let my = vs.velocities()[vs.mirror(1, k)];
                assert_eq!(mx, [-v[0], v[1]]);
                assert_eq!(my, [v[0], -v[1]]);
            }
        }
    }

    #[test]
    fn two_speed_set() {
        let vs = VelocitySet::two_speed(1.0).unwrap();
        assert_eq!(vs.velocities(), &[[1.0, 0.0], [-1.0, 0.0]]);
        assert_eq!(vs.equilibrium(), &[0.5, 0.5]);
        assert_eq!(vs.total_measure(), 2.0);

        let vs = VelocitySet::two_speed(0.25).unwrap();
        assert_eq!(velocity_moments(&[1.0, 1.0], &vs).unwrap().1, [0.0, 0.0]);

        let vs = VelocitySet::two_speed(2.0).unwrap();
        let m: f64 = (0..2)
            .map(|k| vs.weights()[k] * vs.equilibrium()[k] * vs.velocities()[k][0].powi(2))
            .sum();
        assert_eq!(m, 4.0);
        assert!(VelocitySet::two_speed(0.0).is_err());
    }

    #[test]
    fn moments_examples() {
        let vs = VelocitySet::circle(8, 1.0).unwrap();
        let (d, flux) = velocity_moments(&vec![3.0; 8], &vs).unwrap();
        assert_relative_eq!(d, 3.0 * vs.total_measure(), max_relative = 1e-14);
        assert!(flux[0].abs() < 1e-14 && flux[1].abs() < 1e-14);

        let (d, _) = velocity_moments(vs.equilibrium(), &vs).unwrap();
        assert_relative_eq!(d, 1.0, max_relative = 1e-14);

        let vs = VelocitySet::circle(4, 1.0).unwrap();
        let (d, flux) = velocity_moments(&[1.0, 0.0, 0.0, 0.0], &vs).unwrap();
        assert_relative_eq!(d, PI / 2.0, max_relative = 1e-15);
        assert_relative_eq!(flux[0], PI / 2.0, max_relative = 1e-15);
        assert_eq!(flux[1], 0.0);

        assert!(velocity_moments(&[1.0], &vs).is_err());
    }

    #[test]
    fn general_set_rejects_asymmetry() {
        let err = VelocitySet::new(1, vec![[1.0, 0.0], [-2.0, 0.0]], vec![1.0, 1.0], vec![0.5, 0.5]);
        assert!(err.is_err());
        let err = VelocitySet::new(1, vec![[1.0, 0.0], [-1.0, 0.0]], vec![1.0, 0.0], vec![0.5, 0.5]);
        assert!(err.is_err());
    }

    #[test]
    fn scaling_examples() {
        let scales = ScaleParams {
            t0: 1.0,
            x0: 10.0,
            v0: 100.0,
            f0: [1.0; 3],
        };
        assert_relative_eq!(scales.epsilon(), 0.1, max_relative = 1e-15);

        let p = PhysicalParams {
            dim: 2,
            alpha: 0.1,
            beta: 0.75,
            gamma: 0.5,
            lambda: [1.0, 2.0, 3.0],
            eta: 0.2,
            xi: 0.3,
            domain_length: 5.0,
            cell_size: 0.1,
            speed: 2.0,
            density: [1.0, 2.0, 3.0],
        };
        let (same, eps) = nondimensionalize(&p, &ScaleParams::identity()).unwrap();
        assert_eq!(same, p);
        assert_eq!(eps, 1.0);

        let days = ScaleParams {
            t0: 2.0,
            ..ScaleParams::identity()
        };
        let (scaled, _) = nondimensionalize(&p, &days).unwrap();
        assert_relative_eq!(scaled.gamma, 1.0, max_relative = 1e-15);

        let bad = ScaleParams {
            v0: 0.0,
            ..ScaleParams::identity()
        };
        assert!(nondimensionalize(&p, &bad).is_err());
    }

    #[test]
    fn gradient_stencils() {
        let grid = SpatialGrid::line(5, 0.5).unwrap();
        // Quadratic: exact for all second-order stencils.
        let f: Vec<f64> = (0..5).map(|c| grid.cell_center(c)[0].powi(2)).collect();
        for c in 0..5 {
            let x = grid.cell_center(c)[0];
            assert_relative_eq!(grid.gradient(&f, c)[0], 2.0 * x, max_relative = 1e-12);
        }
    }

    #[test]
    fn step_plans() {
        assert_eq!(step_plan(1.0, 0.25).unwrap(), vec![0.25; 4]);
        assert_eq!(step_plan(10.0, 1e-3).unwrap().len(), 10_000);
        let p = step_plan(1.0, 0.3).unwrap();
        assert_eq!(p.len(), 4);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(step_plan(0.0, 0.1).unwrap().is_empty());
        assert!(step_plan(1.0, 0.0).is_err());
    }

    #[test]
    fn schedule_lookup() {
        let s = Schedule::new(vec![(0.0, 'a'), (1.0, 'b'), (2.5, 'c')]).unwrap();
        assert_eq!(*s.at(0.0), 'a');
        assert_eq!(*s.at(0.999), 'a');
        assert_eq!(*s.at(1.0), 'b');
        assert_eq!(*s.at(10.0), 'c');
        assert_eq!(s.next_change(1.0), Some(2.5));
        assert!(Schedule::new(vec![(0.5, 'a')]).is_err());
        assert!(Schedule::new(vec![(0.0, 'a'), (0.0, 'b')]).is_err());
    }

    proptest! {
        #[test]
        fn circle_invariants(half in 2usize..40, v0 in 0.01f64..50.0) {
            let vs = VelocitySet::circle(2 * half, v0).unwrap();
            let (mass, flux) = velocity_moments(vs.equilibrium(), &vs).unwrap();
            prop_assert!((mass - 1.0).abs() <= 1e-12);
            let (_, wv) = velocity_moments(&vec![1.0; vs.len()], &vs).unwrap();
            prop_assert!(wv[0].hypot(wv[1]) <= 1e-12 * v0);
            prop_assert!(flux[0].hypot(flux[1]) <= 1e-12 * v0);
        }

        #[test]
        fn moments_are_linear(
            f in proptest::collection::vec(0.0f64..10.0, 12),
            g in proptest::collection::vec(0.0f64..10.0, 12),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let vs = VelocitySet::circle(12, 1.5).unwrap();
            let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let (dc, fc) = velocity_moments(&combo, &vs).unwrap();
            let (df, ff) = velocity_moments(&f, &vs).unwrap();
            let (dg, fg) = velocity_moments(&g, &vs).unwrap();
            let scale = 1e-12 * (1.0 + df.abs() + dg.abs()) * 10.0;
            prop_assert!((dc - (a * df + b * dg)).abs() <= scale);
            for axis in 0..2 {
                prop_assert!((fc[axis] - (a * ff[axis] + b * fg[axis])).abs() <= scale);
            }
        }

        #[test]
        fn scaling_round_trip(
            rates in proptest::array::uniform3(0.01f64..10.0),
            lens in proptest::array::uniform3(0.01f64..10.0),
            t0 in 0.1f64..10.0, x0 in 0.1f64..10.0, v0 in 0.1f64..10.0,
            f0 in proptest::array::uniform3(0.1f64..10.0),
        ) {
            let p = PhysicalParams {
                dim: 2,
                alpha: rates[0], beta: rates[1], gamma: rates[2],
                lambda: rates,
                eta: lens[0], xi: lens[1],
                domain_length: lens[2], cell_size: lens[0],
                speed: lens[1], density: lens,
            };
            let scales = ScaleParams { t0, x0, v0, f0 };
            let (nd, _) = nondimensionalize(&p, &scales).unwrap();
            let back = redimensionalize(&nd, &scales).unwrap();
            let pairs = [
                (p.alpha, back.alpha), (p.beta, back.beta), (p.gamma, back.gamma),
                (p.eta, back.eta), (p.xi, back.xi), (p.domain_length, back.domain_length),
                (p.cell_size, back.cell_size), (p.speed, back.speed),
                (p.density[1], back.density[1]), (p.lambda[2], back.lambda[2]),
            ];
            for (a, b) in pairs {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs());
            }
        }
    }
}
