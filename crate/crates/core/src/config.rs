//! Run configuration: JSON text in, a validated [`RunConfig`] out.
//!
//! Parsing reports every violation it finds, each with a field path such as
//! `params.lambda[1].table`. The schema is described in `docs/config-schema.md`.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::abm::{AbmParams, DirectionSet, Placement, WorldSpec};
use crate::closure::DiffusionReading;
use crate::domain::{ByClass, Class, MesoField, ParamFields, ScaleParams, SpatialGrid, VelocitySet};
use crate::error::{Error, Result};
use crate::kinetic::{KineticRunConfig, Scheme, Splitting};
use crate::meso::MesoRunConfig;
use crate::sirs::SirsState;
use crate::validation::Study;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSelector {
    Kinetic,
    Meso,
    Sirs,
    Abm,
    Compare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    /// Cells per axis; one entry in 1D, two in 2D.
    pub cells: Vec<usize>,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    Circle { n: usize, speed: f64 },
    TwoSpeed { speed: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub value: f64,
}

/// A scalar parameter over the grid: a constant, boxes over a default
/// (later boxes win), or one value per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Regions { default: f64, regions: Vec<Region> },
    Table { table: Vec<f64> },
}

impl FieldSpec {
    pub fn resolve(&self, grid: &SpatialGrid) -> Result<Vec<f64>> {
        let n = grid.n_cells();
        match self {
            FieldSpec::Constant(x) => Ok(vec![*x; n]),
            FieldSpec::Table { table } => {
                if table.len() != n {
                    return Err(Error::Shape(format!("table has {} values for {n} cells", table.len())));
                }
                Ok(table.clone())
            }
            FieldSpec::Regions { default, regions } => Ok((0..n)
                .map(|c| {
                    let x = grid.cell_center(c);
                    regions
                        .iter()
                        .rev()
                        .find(|r| (0..grid.dim()).all(|a| x[a] >= r.lo[a] && x[a] <= r.hi[a]))
                        .map_or(*default, |r| r.value)
                })
                .collect()),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            FieldSpec::Constant(x) => Some(*x),
            _ => None,
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            FieldSpec::Constant(x) => vec![*x],
            FieldSpec::Table { table } => table.clone(),
            FieldSpec::Regions { default, regions } => {
                std::iter::once(*default).chain(regions.iter().map(|r| r.value)).collect()
            }
        }
    }
}

/// One reorientation field shared by all classes, or one per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    PerClass(Vec<FieldSpec>),
    Shared(FieldSpec),
}

impl LambdaSpec {
    fn get(&self, class: Class) -> Option<&FieldSpec> {
        match self {
            LambdaSpec::Shared(f) => Some(f),
            LambdaSpec::PerClass(v) => v.get(class.index()),
        }
    }
}

fn zero_field() -> FieldSpec {
    FieldSpec::Constant(0.0)
}

fn unit_lambda() -> LambdaSpec {
    LambdaSpec::Shared(FieldSpec::Constant(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(default = "zero_field")]
    pub alpha: FieldSpec,
    pub beta: FieldSpec,
    pub gamma: FieldSpec,
    #[serde(default = "unit_lambda")]
    pub lambda: LambdaSpec,
    #[serde(default = "zero_field")]
    pub eta: FieldSpec,
    #[serde(default = "zero_field")]
    pub xi: FieldSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub class: Class,
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub class: Class,
    pub value: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Initial densities: a uniform background plus Gaussian bumps and boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub background: [f64; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bumps: Vec<Bump>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<BoxSpec>,
}

fn one() -> usize {
    1
}

fn default_lp() -> Vec<f64> {
    vec![2.0]
}

fn default_cfl() -> f64 {
    1.0
}

fn default_safety() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticSpec {
    pub dt: f64,
    pub t_end: f64,
    /// Defaults to the value implied by `scales`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub splitting: Splitting,
    #[serde(default = "default_cfl")]
    pub cfl_target: f64,
    #[serde(default = "one")]
    pub output_every: usize,
    #[serde(default = "default_lp")]
    pub lp_norms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesoSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub output_every: usize,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub reading: DiffusionReading,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirsSpec {
    pub initial: [f64; 3],
    pub dt: f64,
    pub t_end: f64,
}

/// Agent world; per-step probabilities come from the constant `params`
/// (`beta`, `gamma`, `alpha` and the S reorientation rate).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbmSpec {
    pub counts: [usize; 3],
    pub side: usize,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub directions: DirectionSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: String,
    pub scale: ScaleSelector,
    pub scales: ScaleParams,
    pub grid: Option<GridSpec>,
    pub velocity: Option<VelocitySpec>,
    pub params: ParamSpec,
    pub initial: Option<InitialSpec>,
    pub kinetic: Option<KineticSpec>,
    pub meso: Option<MesoSpec>,
    pub sirs: Option<SirsSpec>,
    pub abm: Option<AbmSpec>,
    pub validation: Vec<Study>,
    pub output: Option<String>,
    pub seed: Option<u64>,
}

/// One problem found while loading a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted field path; empty for document-level problems.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// All problems found in a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const REQUIRED: [&str; 3] = ["scenario", "scale", "params"];
const OPTIONAL: [&str; 11] = [
    "scales",
    "grid",
    "velocity",
    "initial",
    "kinetic",
    "meso",
    "sirs",
    "abm",
    "validation",
    "output",
    "seed",
];

struct Collector {
    errors: Vec<ConfigError>,
}

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ConfigError {
            path: path.into(),
            message: message.into(),
        });
    }

    fn section<T: DeserializeOwned>(&mut self, map: &Map<String, Value>, key: &str) -> Option<T> {
        let v = map.get(key)?;
        match serde_json::from_value(v.clone()) {
            Ok(x) => Some(x),
            Err(e) => {
                self.push(key, e.to_string());
                None
            }
        }
    }

    fn positive(&mut self, path: &str, x: f64) {
        if !(x > 0.0 && x.is_finite()) {
            self.push(path, format!("must be positive, got {x}"));
        }
    }

    fn non_negative(&mut self, path: &str, x: f64) {
        if !(x >= 0.0 && x.is_finite()) {
            self.push(path, format!("must be non-negative, got {x}"));
        }
    }
}

/// Parses and validates a configuration, returning every violation.
/// Empty text is read as an empty object.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, ConfigErrors> {
    let mut col = Collector { errors: Vec::new() };
    let value: Value = if text.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(text).map_err(|e| {
            ConfigErrors(vec![ConfigError {
                path: String::new(),
                message: format!("syntax error at line {}, column {}: {e}", e.line(), e.column()),
            }])
        })?
    };
    let Value::Object(map) = value else {
        return Err(ConfigErrors(vec![ConfigError {
            path: String::new(),
            message: "top level must be an object".into(),
        }]));
    };
    for key in map.keys() {
        if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
            col.push(key.clone(), "unknown field");
        }
    }
    for key in REQUIRED {
        if !map.contains_key(key) {
            col.push(key, "required field is missing");
        }
    }

    let scenario: Option<String> = col.section(&map, "scenario");
    let scale: Option<ScaleSelector> = col.section(&map, "scale");
    let params: Option<ParamSpec> = col.section(&map, "params");
    let scales: Option<ScaleParams> = col.section(&map, "scales");
    let grid: Option<GridSpec> = col.section(&map, "grid");
    let velocity: Option<VelocitySpec> = col.section(&map, "velocity");
    let initial: Option<InitialSpec> = col.section(&map, "initial");
    let kinetic: Option<KineticSpec> = col.section(&map, "kinetic");
    let meso: Option<MesoSpec> = col.section(&map, "meso");
    let sirs: Option<SirsSpec> = col.section(&map, "sirs");
    let abm: Option<AbmSpec> = col.section(&map, "abm");
    let validation: Option<Vec<Study>> = col.section(&map, "validation");
    let output: Option<String> = col.section(&map, "output");
    let seed: Option<u64> = col.section(&map, "seed");

    let sections_failed = !col.errors.is_empty();
    let (Some(scenario), Some(scale), Some(params)) = (scenario, scale, params) else {
        return Err(ConfigErrors(col.errors));
    };
    let cfg = RunConfig {
        scenario,
        scale,
        scales: scales.unwrap_or_else(ScaleParams::identity),
        grid,
        velocity,
        params,
        initial,
        kinetic,
        meso,
        sirs,
        abm,
        validation: validation.unwrap_or_default(),
        output,
        seed,
    };
    cfg.check(&mut col);
    if sections_failed || !col.errors.is_empty() {
        return Err(ConfigErrors(col.errors));
    }
    Ok(cfg)
}

impl RunConfig {
    fn check(&self, col: &mut Collector) {
        if self.scenario.trim().is_empty() {
            col.push("scenario", "must not be empty");
        }
        if let Err(e) = self.scales.validate() {
            col.push("scales", e.to_string());
        }
        let needs: &[(&str, bool)] = match self.scale {
            ScaleSelector::Kinetic => &[
                ("grid", self.grid.is_some()),
                ("velocity", self.velocity.is_some()),
                ("initial", self.initial.is_some()),
                ("kinetic", self.kinetic.is_some()),
            ],
            ScaleSelector::Meso => &[
                ("grid", self.grid.is_some()),
                ("velocity", self.velocity.is_some()),
                ("initial", self.initial.is_some()),
                ("meso", self.meso.is_some()),
            ],
            ScaleSelector::Sirs => &[("sirs", self.sirs.is_some())],
            ScaleSelector::Abm => &[("abm", self.abm.is_some())],
            ScaleSelector::Compare => &[("validation", !self.validation.is_empty())],
        };
        for (key, present) in needs {
            if !present {
                col.push(*key, format!("required for scale {:?}", self.scale));
            }
        }

        let dim = self.grid.as_ref().map(|g| g.dim);
        let n_cells = self.grid.as_ref().map(|g| g.cells.iter().product::<usize>());
        if let Some(g) = &self.grid {
            if g.dim != 1 && g.dim != 2 {
                col.push("grid.dim", format!("must be 1 or 2, got {}", g.dim));
            } else if g.cells.len() != g.dim {
                col.push("grid.cells", format!("needs {} entries, got {}", g.dim, g.cells.len()));
            }
            if g.cells.contains(&0) {
                col.push("grid.cells", "cell counts must be at least 1");
            }
            col.positive("grid.h", g.h);
        }
        if let Some(v) = &self.velocity {
            match v {
                VelocitySpec::Circle { n, speed } => {
                    if *n < 3 {
                        col.push("velocity.n", format!("a circle set needs at least 3 directions, got {n}"));
                    }
                    col.positive("velocity.speed", *speed);
                    if dim == Some(1) {
                        col.push("velocity.kind", "a circle set needs a 2D grid");
                    }
                }
                VelocitySpec::TwoSpeed { speed } => {
                    col.positive("velocity.speed", *speed);
                    if dim == Some(2) {
                        col.push("velocity.kind", "the two-speed set needs a 1D grid");
                    }
                }
            }
        }

        let p = &self.params;
        let mut fields: Vec<(String, &FieldSpec, bool)> = vec![
            ("params.alpha".into(), &p.alpha, false),
            ("params.beta".into(), &p.beta, false),
            ("params.gamma".into(), &p.gamma, false),
            ("params.eta".into(), &p.eta, false),
            ("params.xi".into(), &p.xi, false),
        ];
        match &p.lambda {
            LambdaSpec::Shared(f) => fields.push(("params.lambda".into(), f, true)),
            LambdaSpec::PerClass(v) => {
                if v.len() != 3 {
                    col.push("params.lambda", format!("needs one entry per class, got {}", v.len()));
                }
                for (k, f) in v.iter().enumerate() {
                    fields.push((format!("params.lambda[{k}]"), f, true));
                }
            }
        }
        for (path, f, strict) in &fields {
            for x in f.values() {
                if *strict {
                    col.positive(path, x);
                } else {
                    col.non_negative(path, x);
                }
            }
            match f {
                FieldSpec::Table { table } => match n_cells {
                    Some(n) if table.len() != n => {
                        col.push(format!("{path}.table"), format!("has {} values for {n} cells", table.len()))
                    }
                    None => col.push(format!("{path}.table"), "a table needs a grid"),
                    _ => {}
                },
                FieldSpec::Regions { regions, .. } => {
                    for (k, r) in regions.iter().enumerate() {
                        let rp = format!("{path}.regions[{k}]");
                        check_box(col, &rp, &r.lo, &r.hi, dim);
                    }
                }
                FieldSpec::Constant(_) => {}
            }
        }

        if let Some(init) = &self.initial {
            for (k, x) in init.background.iter().enumerate() {
                col.non_negative(&format!("initial.background[{k}]"), *x);
            }
            for (k, b) in init.bumps.iter().enumerate() {
                let bp = format!("initial.bumps[{k}]");
                col.non_negative(&format!("{bp}.amplitude"), b.amplitude);
                col.positive(&format!("{bp}.sigma"), b.sigma);
                if let Some(d) = dim {
                    if b.center.len() != d {
                        col.push(format!("{bp}.center"), format!("needs {d} coordinates"));
                    }
                }
            }
            for (k, b) in init.boxes.iter().enumerate() {
                let bp = format!("initial.boxes[{k}]");
                col.non_negative(&format!("{bp}.value"), b.value);
                check_box(col, &bp, &b.lo, &b.hi, dim);
            }
        }

        if let Some(k) = &self.kinetic {
            col.positive("kinetic.dt", k.dt);
            col.non_negative("kinetic.t_end", k.t_end);
            if let Some(e) = k.eps {
                col.positive("kinetic.eps", e);
            }
            if !(k.cfl_target > 0.0 && k.cfl_target <= 1.0) {
                col.push("kinetic.cfl_target", format!("must lie in (0, 1], got {}", k.cfl_target));
            }
            if k.output_every == 0 {
                col.push("kinetic.output_every", "must be at least 1");
            }
            if let Some(pn) = k.lp_norms.iter().find(|p| !(**p >= 1.0)) {
                col.push("kinetic.lp_norms", format!("p = {pn} is below 1"));
            }
        }
        if let Some(m) = &self.meso {
            col.positive("meso.dt", m.dt);
            col.non_negative("meso.t_end", m.t_end);
            if m.output_every == 0 {
                col.push("meso.output_every", "must be at least 1");
            }
            if !(m.safety > 0.0 && m.safety <= 1.0) {
                col.push("meso.safety", format!("must lie in (0, 1], got {}", m.safety));
            }
        }
        if let Some(s) = &self.sirs {
            for (k, x) in s.initial.iter().enumerate() {
                col.non_negative(&format!("sirs.initial[{k}]"), *x);
            }
            if s.initial.iter().sum::<f64>() <= 0.0 {
                col.push("sirs.initial", "total population must be positive");
            }
            col.positive("sirs.dt", s.dt);
            col.non_negative("sirs.t_end", s.t_end);
        }
        if let Some(a) = &self.abm {
            if a.side == 0 {
                col.push("abm.side", "must be at least 1");
            }
            if let Placement::CentralBlock { side } = a.placement {
                if side == 0 || side > a.side {
                    col.push("abm.placement.side", format!("block side {side} does not fit the lattice"));
                }
            }
            if a.capacity == Some(0) {
                col.push("abm.capacity", "must be at least 1");
            }
            for (path, f) in [
                ("params.beta", Some(&p.beta)),
                ("params.gamma", Some(&p.gamma)),
                ("params.alpha", Some(&p.alpha)),
                ("params.lambda", p.lambda.get(Class::S)),
            ] {
                match f.and_then(FieldSpec::constant) {
                    Some(x) if (0.0..=1.0).contains(&x) => {}
                    Some(x) => col.push(path, format!("agent probabilities must lie in [0, 1], got {x}")),
                    None => col.push(path, "agent runs need a constant probability"),
                }
            }
        }
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        let g = self.grid.as_ref().ok_or_else(|| Error::param("grid", "missing"))?;
        match g.dim {
            1 => SpatialGrid::line(g.cells[0], g.h),
            _ => SpatialGrid::square(g.cells[0], g.cells[1], g.h),
        }
    }

    pub fn velocity_set(&self) -> Result<VelocitySet> {
        match self.velocity.as_ref().ok_or_else(|| Error::param("velocity", "missing"))? {
            VelocitySpec::Circle { n, speed } => VelocitySet::circle(*n, *speed),
            VelocitySpec::TwoSpeed { speed } => VelocitySet::two_speed(*speed),
        }
    }

    /// A grid for the closure report: the configured one, or a single cell.
    pub fn grid_or_cell(&self, vs: &VelocitySet) -> Result<SpatialGrid> {
        match &self.grid {
            Some(_) => self.grid(),
            None if vs.dim() == 1 => SpatialGrid::line(1, 1.0),
            None => SpatialGrid::square(1, 1, 1.0),
        }
    }

    pub fn param_fields(&self, grid: &SpatialGrid, vs: &VelocitySet) -> Result<ParamFields> {
        let p = &self.params;
        let mut lambda = Vec::with_capacity(3);
        for class in Class::ALL {
            let f = p.lambda.get(class).ok_or_else(|| Error::param("lambda", "one entry per class"))?;
            lambda.push(f.resolve(grid)?);
        }
        let lambda: [Vec<f64>; 3] = lambda.try_into().map_err(|_| Error::param("lambda", "one entry per class"))?;
        ParamFields::from_cell_fields(
            vs.len(),
            &p.alpha.resolve(grid)?,
            &p.beta.resolve(grid)?,
            &p.gamma.resolve(grid)?,
            ByClass(lambda),
            p.eta.resolve(grid)?,
            p.xi.resolve(grid)?,
        )
    }

    pub fn initial_field(&self, grid: &SpatialGrid) -> Result<MesoField> {
        let init = self.initial.as_ref().ok_or_else(|| Error::param("initial", "missing"))?;
        let n = grid.n_cells();
        let mut rho = MesoField::uniform(n, init.background);
        let d = grid.dim();
        for b in &init.bumps {
            let field = rho.class_mut(b.class);
            for (c, v) in field.iter_mut().enumerate() {
                let x = grid.cell_center(c);
                let r2: f64 = (0..d).map(|a| (x[a] - b.center[a]).powi(2)).sum();
                *v += b.amplitude * (-r2 / (2.0 * b.sigma * b.sigma)).exp();
            }
        }
        for bx in &init.boxes {
            let field = rho.class_mut(bx.class);
            for (c, v) in field.iter_mut().enumerate() {
                let x = grid.cell_center(c);
                if (0..d).all(|a| x[a] >= bx.lo[a] && x[a] <= bx.hi[a]) {
                    *v = bx.value;
                }
            }
        }
        Ok(rho)
    }

    pub fn kinetic_config(&self) -> Result<KineticRunConfig> {
        let k = self.kinetic.as_ref().ok_or_else(|| Error::param("kinetic", "missing"))?;
        Ok(KineticRunConfig {
            dt: k.dt,
            t_end: k.t_end,
            eps: k.eps.unwrap_or_else(|| self.scales.epsilon()),
            cfl_target: k.cfl_target,
            splitting: k.splitting,
            scheme: k.scheme,
            output_every: k.output_every,
            lp_norms: k.lp_norms.clone(),
        })
    }

    pub fn meso_config(&self) -> Result<(MesoRunConfig, DiffusionReading)> {
        let m = self.meso.as_ref().ok_or_else(|| Error::param("meso", "missing"))?;
        Ok((
            MesoRunConfig {
                dt: m.dt,
                t_end: m.t_end,
                safety: m.safety,
                output_every: m.output_every,
            },
            m.reading,
        ))
    }

    /// SIRS state and run length `(state, dt, t_end)`; rates are the constant parameters.
    pub fn sirs_run(&self) -> Result<(SirsState, f64, f64)> {
        let s = self.sirs.as_ref().ok_or_else(|| Error::param("sirs", "missing"))?;
        let c = |f: &FieldSpec, name: &'static str| {
            f.constant().ok_or_else(|| Error::param(name, "SIRS runs need a constant rate"))
        };
        let p = &self.params;
        let state = SirsState::new(
            s.initial[0],
            s.initial[1],
            s.initial[2],
            c(&p.alpha, "alpha")?,
            c(&p.beta, "beta")?,
            c(&p.gamma, "gamma")?,
        )?;
        Ok((state, s.dt, s.t_end))
    }

    pub fn abm_setup(&self) -> Result<(AbmParams, WorldSpec, &AbmSpec)> {
        let a = self.abm.as_ref().ok_or_else(|| Error::param("abm", "missing"))?;
        let p = &self.params;
        let c = |f: Option<&FieldSpec>, name: &'static str| {
            f.and_then(FieldSpec::constant)
                .ok_or_else(|| Error::param(name, "agent runs need a constant probability"))
        };
        let params = AbmParams {
            p_transmit: c(Some(&p.beta), "beta")?,
            p_recover: c(Some(&p.gamma), "gamma")?,
            p_wane: c(Some(&p.alpha), "alpha")?,
            p_reorient: c(p.lambda.get(Class::S), "lambda")?,
            directions: a.directions,
        };
        params.validate()?;
        let world = WorldSpec {
            side: a.side,
            placement: a.placement,
            directions: a.directions,
            capacity: a.capacity,
        };
        Ok((params, world, a))
    }

    /// Pretty JSON that [`parse_config`] reads back to an equal value.
    pub fn to_json(&self) -> String {
        let mut map = Map::new();
        let put = |map: &mut Map<String, Value>, k: &str, v: Value| {
            map.insert(k.to_string(), v);
        };
        put(&mut map, "scenario", Value::String(self.scenario.clone()));
        put(&mut map, "scale", json(&self.scale));
        put(&mut map, "scales", json(&self.scales));
        if let Some(g) = &self.grid {
            put(&mut map, "grid", json(g));
        }
        if let Some(v) = &self.velocity {
            put(&mut map, "velocity", json(v));
        }
        put(&mut map, "params", json(&self.params));
        if let Some(x) = &self.initial {
            put(&mut map, "initial", json(x));
        }
        if let Some(x) = &self.kinetic {
            put(&mut map, "kinetic", json(x));
        }
        if let Some(x) = &self.meso {
            put(&mut map, "meso", json(x));
        }
        if let Some(x) = &self.sirs {
            put(&mut map, "sirs", json(x));
        }
        if let Some(x) = &self.abm {
            put(&mut map, "abm", json(x));
        }
        if !self.validation.is_empty() {
            put(&mut map, "validation", json(&self.validation));
        }
        if let Some(o) = &self.output {
            put(&mut map, "output", Value::String(o.clone()));
        }
        if let Some(s) = self.seed {
            put(&mut map, "seed", Value::from(s));
        }
        serde_json::to_string_pretty(&Value::Object(map)).unwrap_or_default()
    }
}

fn json<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

fn check_box(col: &mut Collector, path: &str, lo: &[f64], hi: &[f64], dim: Option<usize>) {
    if let Some(d) = dim {
        if lo.len() != d || hi.len() != d {
            col.push(path, format!("lo and hi need {d} coordinates"));
            return;
        }
    }
    if lo.len() != hi.len() {
        col.push(path, "lo and hi have different lengths");
        return;
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        col.push(path, "lo must be below hi on every axis");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIG2: &str = r#"{
        "scenario": "fig2",
        "scale": "abm",
        "params": { "alpha": 0, "beta": 0.75, "gamma": 0.5, "lambda": 0.5 },
        "abm": { "counts": [10000, 50, 0], "side": 50, "steps": 15, "snapshots": [3, 6, 9, 12, 15] }
    }"#;

    #[test]
    fn empty_text_names_every_required_field() {
        let err = parse_config("").unwrap_err();
        let paths: Vec<&str> = err.0.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, vec!["scenario", "scale", "params"]);
    }

    #[test]
    fn syntax_errors_have_line_and_column() {
        let err = parse_config("{\n  \"scenario\": \"x\",\n  oops\n}").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].message.contains("line 3, column 3"), "{}", err.0[0].message);
    }

    #[test]
    fn fig2_config_loads() {
        let cfg = parse_config(FIG2).unwrap();
        let (p, world, spec) = cfg.abm_setup().unwrap();
        assert_eq!((p.p_transmit, p.p_recover, p.p_wane, p.p_reorient), (0.75, 0.5, 0.0, 0.5));
        assert_eq!(world.side, 50);
        assert_eq!(spec.counts, [10000, 50, 0]);
    }

    #[test]
    fn violations_are_all_reported_with_paths() {
        let text = r#"{
            "scenario": "bad",
            "scale": "kinetic",
            "grid": { "dim": 2, "cells": [4, 4], "h": -1 },
            "velocity": { "kind": "circle", "n": 8, "speed": 1 },
            "params": { "beta": -0.5, "gamma": 0.5, "lambda": [1, 0, 1] },
            "initial": { "background": [1, 0, 0] },
            "kinetic": { "dt": 0, "t_end": 1, "eps": 1 },
            "colour": "red"
        }"#;
        let err = parse_config(text).unwrap_err();
        let paths: Vec<&str> = err.0.iter().map(|e| e.path.as_str()).collect();
        for p in ["colour", "grid.h", "params.beta", "params.lambda[1]", "kinetic.dt"] {
            assert!(paths.contains(&p), "{p} missing from {paths:?}");
        }
    }

    #[test]
    fn missing_sections_for_scale_are_reported() {
        let text = r#"{"scenario": "m", "scale": "meso", "params": {"beta": 0.5, "gamma": 0.5}}"#;
        let err = parse_config(text).unwrap_err();
        let paths: Vec<&str> = err.0.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, vec!["grid", "velocity", "initial", "meso"]);
    }

    #[test]
    fn regions_resolve_with_later_boxes_winning() {
        let grid = SpatialGrid::line(4, 1.0).unwrap();
        let f = FieldSpec::Regions {
            default: 1.0,
            regions: vec![
                Region { lo: vec![0.0], hi: vec![2.0], value: 2.0 },
                Region { lo: vec![1.0], hi: vec![2.0], value: 3.0 },
            ],
        };
        assert_eq!(f.resolve(&grid).unwrap(), vec![2.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn table_length_is_checked() {
        let text = r#"{
            "scenario": "t", "scale": "meso",
            "grid": { "dim": 1, "cells": [3], "h": 1 },
            "velocity": { "kind": "two_speed", "speed": 1 },
            "params": { "beta": { "table": [1, 2] }, "gamma": 0.5 },
            "initial": { "background": [1, 0, 0] },
            "meso": { "dt": 0.01, "t_end": 1 }
        }"#;
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.0[0].path, "params.beta.table");
    }

    #[test]
    fn abm_needs_probabilities() {
        let text = FIG2.replace("\"beta\": 0.75", "\"beta\": 1.5");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.0[0].path, "params.beta");
    }

    #[test]
    fn fields_resolve_on_grid() {
        let text = r#"{
            "scenario": "k", "scale": "kinetic",
            "grid": { "dim": 2, "cells": [4, 2], "h": 0.5 },
            "velocity": { "kind": "circle", "n": 8, "speed": 1 },
            "params": { "beta": 0.75, "gamma": 0.5, "lambda": 2,
                        "eta": { "default": 1, "regions": [{ "lo": [0, 0], "hi": [1, 1], "value": 0.2 }] } },
            "initial": { "background": [1, 0, 0],
                         "bumps": [{ "class": "I", "amplitude": 0.5, "center": [1, 0.5], "sigma": 0.3 }] },
            "kinetic": { "dt": 0.01, "t_end": 0.1 },
            "scales": { "t0": 1, "x0": 0.5, "v0": 1, "f0": [1, 1, 1] }
        }"#;
        let cfg = parse_config(text).unwrap();
        let grid = cfg.grid().unwrap();
        let vs = cfg.velocity_set().unwrap();
        let p = cfg.param_fields(&grid, &vs).unwrap();
        assert_eq!(p.eta, vec![0.2, 0.2, 1.0, 1.0, 0.2, 0.2, 1.0, 1.0]);
        assert!(p.lambda.0.iter().flatten().all(|l| *l == 2.0));
        assert_eq!(cfg.kinetic_config().unwrap().eps, 0.5);
        let rho = cfg.initial_field(&grid).unwrap();
        assert!(rho.class(Class::I).iter().all(|x| *x > 0.0));
    }

    fn field_strategy() -> impl Strategy<Value = FieldSpec> {
        prop_oneof![
            (0.0f64..5.0).prop_map(FieldSpec::Constant),
            proptest::collection::vec(0.0f64..5.0, 4).prop_map(|table| FieldSpec::Table { table }),
            (0.0f64..5.0, 0.0f64..2.0, 0.5f64..5.0).prop_map(|(default, lo, value)| FieldSpec::Regions {
                default,
                regions: vec![Region { lo: vec![lo], hi: vec![lo + 1.0], value }],
            }),
        ]
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(
            beta in field_strategy(),
            eta in field_strategy(),
            lambda in 0.1f64..5.0,
            dt in 1e-4f64..1e-1,
            seed in proptest::option::of(any::<u64>()),
        ) {
            let cfg = RunConfig {
                scenario: "prop".into(),
                scale: ScaleSelector::Meso,
                scales: ScaleParams::identity(),
                grid: Some(GridSpec { dim: 1, cells: vec![4], h: 1.0 }),
                velocity: Some(VelocitySpec::TwoSpeed { speed: 1.0 }),
                params: ParamSpec {
                    alpha: FieldSpec::Constant(0.0),
                    beta,
                    gamma: FieldSpec::Constant(0.5),
                    lambda: LambdaSpec::PerClass(vec![FieldSpec::Constant(lambda); 3]),
                    eta,
                    xi: FieldSpec::Constant(0.0),
                },
                initial: Some(InitialSpec { background: [1.0, 0.1, 0.0], bumps: vec![], boxes: vec![] }),
                kinetic: None,
                meso: Some(MesoSpec { dt, t_end: 1.0, output_every: 1, safety: 0.9, reading: DiffusionReading::PerAxis }),
                sirs: None,
                abm: None,
                validation: vec![],
                output: Some("out/prop".into()),
                seed,
            };
            let back = parse_config(&cfg.to_json()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(back, cfg);
        }
    }
}
