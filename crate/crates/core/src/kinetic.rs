//! Time integration of the ε-scaled kinetic equation
//!
//! ```text
//! ∂t f_j + (1/ε) v·∇f_j = (1/ε²) Q^R_j[f] + (1/ε) Q^P_j[f] + Q^T_j[f]
//! ```
//!
//! on a uniform grid with specular (no-flux) walls.
//!
//! Two schemes are available. [`Scheme::Splitting`] composes first-order
//! upwind transport, exact exponential relaxation and a Heun reaction step.
//! [`Scheme::MicroMacro`] evolves the decomposition `f = ρF + g`, `⟨g⟩ = 0`,
//! with the stiff relaxation implicit in `g`; its `ε → 0` limit is the
//! compact five-point diffusion scheme, so it stays accurate when `ε ≪ h`.

use serde::{Deserialize, Serialize};

use crate::domain::{
    step_plan, ByClass, Class, ParamFields, PhaseField, Schedule, SpatialGrid, TimeSeries, TimeSeriesRow,
    VelocitySet,
};
use crate::error::{Error, Result};
use crate::kernels::{preferred_into, transition_into, vacuum_floor};

/// Relative clipped mass above which a step is rejected.
pub const CLIP_ABORT: f64 = 1e-6;

/// Reaction substeps are capped at this fraction of the fastest rate's time scale.
const REACTION_CAP: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    Lie,
    #[default]
    Strang,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Splitting,
    MicroMacro,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticRunConfig {
    pub dt: f64,
    pub t_end: f64,
    pub eps: f64,
    pub cfl_target: f64,
    pub splitting: Splitting,
    pub scheme: Scheme,
    /// Emit observables every this many steps (and always at the end).
    pub output_every: usize,
    /// Exponents `p` of the `L^p(Ω×V)` norms recorded per class.
    pub lp_norms: Vec<f64>,
}

impl KineticRunConfig {
    pub fn new(dt: f64, t_end: f64, eps: f64) -> Self {
        Self {
            dt,
            t_end,
            eps,
            cfl_target: 1.0,
            splitting: Splitting::Strang,
            scheme: Scheme::Splitting,
            output_every: 1,
            lp_norms: vec![2.0],
        }
    }

    /// Largest admissible step for this scheme on the given discretization.
    pub fn max_dt(&self, vs: &VelocitySet, grid: &SpatialGrid, lambda_min: f64) -> f64 {
        let v = vs.v_max();
        let h = grid.h();
        match self.scheme {
            Scheme::Splitting => self.cfl_target * self.eps * h / v,
            Scheme::MicroMacro => {
                let d = grid.active_axes().count().max(1) as f64;
                self.cfl_target * (self.eps * h / (d * v) + lambda_min * h * h / (2.0 * d * v * v))
            }
        }
    }

    pub fn validate(&self, vs: &VelocitySet, grid: &SpatialGrid, params: &ParamFields) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("{} is not positive", self.dt)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::param("t_end", "must be non-negative"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::param("eps", format!("{} is not positive", self.eps)));
        }
        if !(self.cfl_target > 0.0 && self.cfl_target <= 1.0) {
            return Err(Error::param("cfl_target", format!("{} is outside (0, 1]", self.cfl_target)));
        }
        if self.output_every == 0 {
            return Err(Error::param("output_every", "must be at least 1"));
        }
        if let Some(p) = self.lp_norms.iter().find(|p| !(**p >= 1.0)) {
            return Err(Error::param("lp_norms", format!("p = {p} is below 1")));
        }
        if params.n_cells() != grid.n_cells() || params.n_vel() != vs.len() {
            return Err(Error::Shape("parameter fields do not match the discretization".into()));
        }
        if self.scheme == Scheme::MicroMacro && !vs.has_uniform_equilibrium() {
            return Err(Error::param("scheme", "micro-macro needs F = 1/|V|"));
        }
        let lambda_min = lambda_min(params);
        let limit = self.max_dt(vs, grid, lambda_min);
        if self.dt > limit {
            return Err(Error::Cfl {
                ratio: self.cfl_target * self.dt / limit,
                limit: self.cfl_target,
            });
        }
        Ok(())
    }
}

fn lambda_min(params: &ParamFields) -> f64 {
    params
        .lambda
        .0
        .iter()
        .flat_map(|l| l.iter())
        .fold(f64::INFINITY, |m, x| m.min(*x))
}

fn check_field(f: &PhaseField, vs: &VelocitySet, grid: &SpatialGrid) -> Result<()> {
    if f.n_cells() != grid.n_cells() || f.n_vel() != vs.len() {
        return Err(Error::Shape(format!(
            "field is {}x{}, discretization is {}x{}",
            f.n_cells(),
            f.n_vel(),
            grid.n_cells(),
            vs.len()
        )));
    }
    Ok(())
}

/// One upwind sweep along `axis` for one class; walls reflect velocity
/// `k` into its mirror, so no mass crosses them.
fn sweep(old: &[f64], new: &mut [f64], axis: usize, courant: f64, vs: &VelocitySet, grid: &SpatialGrid) {
    let nv = vs.len();
    for c in 0..grid.n_cells() {
        let lower = grid.neighbor(c, axis, -1);
        let upper = grid.neighbor(c, axis, 1);
        for k in 0..nv {
            let v = vs.velocities()[k][axis];
            let here = old[c * nv + k];
            new[c * nv + k] = if v > 0.0 {
                let up = match lower {
                    Some(n) => old[n * nv + k],
                    None => old[c * nv + vs.mirror(axis, k)],
                };
                here - courant * v * (here - up)
            } else if v < 0.0 {
                let up = match upper {
                    Some(n) => old[n * nv + k],
                    None => old[c * nv + vs.mirror(axis, k)],
                };
                here + courant * v * (here - up)
            } else {
                here
            };
        }
    }
}

fn transport_in_place(f: &mut PhaseField, dt: f64, eps: f64, vs: &VelocitySet, grid: &SpatialGrid) {
    let courant = dt / (eps * grid.h());
    let mut buf = vec![0.0; f.n_cells() * f.n_vel()];
    for class in Class::ALL {
        for axis in grid.active_axes().collect::<Vec<_>>() {
            sweep(f.class(class), &mut buf, axis, courant, vs, grid);
            f.class_mut(class).copy_from_slice(&buf);
        }
    }
}

/// Upwind update of `∂t f + (v/ε)·∇f = 0`, one dimension at a time.
pub fn transport_step(
    f: &PhaseField,
    dt: f64,
    eps: f64,
    vs: &VelocitySet,
    grid: &SpatialGrid,
) -> Result<PhaseField> {
    check_field(f, vs, grid)?;
    let ratio = dt * vs.v_max() / (eps * grid.h());
    if !(ratio <= 1.0) {
        return Err(Error::Cfl { ratio, limit: 1.0 });
    }
    let mut out = f.clone();
    transport_in_place(&mut out, dt, eps, vs, grid);
    Ok(out)
}

fn relax_in_place(f: &mut PhaseField, dt: f64, eps: f64, lambda: &ByClass<Vec<f64>>, vs: &VelocitySet) {
    let nv = vs.len();
    let inv_measure = 1.0 / vs.total_measure();
    for class in Class::ALL {
        let lam = &lambda[class];
        for (cell, l) in f.class_mut(class).chunks_exact_mut(nv).zip(lam) {
            let mean = cell.iter().zip(vs.weights()).map(|(f, w)| f * w).sum::<f64>() * inv_measure;
            let decay = (-l * dt / (eps * eps)).exp();
            for x in cell.iter_mut() {
                *x = mean + (*x - mean) * decay;
            }
        }
    }
}

/// Exact solution of `∂t f = (λ/ε²)(mean − f)` over `dt`.
pub fn relaxation_step(
    f: &PhaseField,
    dt: f64,
    eps: f64,
    lambda: &ByClass<Vec<f64>>,
    vs: &VelocitySet,
) -> PhaseField {
    let mut out = f.clone();
    relax_in_place(&mut out, dt, eps, lambda, vs);
    out
}

/// Largest rate appearing in the reaction right-hand side.
fn reaction_rate_scale(
    f: &PhaseField,
    eps: f64,
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
    with_preferred: bool,
) -> f64 {
    let sup = |x: &[f64]| ParamFields::sup(x);
    let mut rate = sup(&params.alpha).max(sup(&params.beta)).max(sup(&params.gamma));
    if with_preferred && params.has_preferred_direction() {
        let nv = vs.len();
        let fi = f.class(Class::I);
        let mut grad: f64 = 0.0;
        for c in 0..grid.n_cells() {
            for axis in grid.active_axes() {
                for k in 0..nv {
                    grad = grad.max(grid.axis_derivative(c, axis, |n| fi[n * nv + k]).abs());
                }
            }
        }
        let response = sup(&params.eta) + sup(&params.xi);
        rate = rate.max(response * vs.v_max() * grad * vs.total_measure() / eps);
    }
    rate
}

struct ReactionBuffers {
    k1: [Vec<f64>; 3],
    k2: [Vec<f64>; 3],
    stage: PhaseField,
    preferred: Vec<f64>,
    scratch: Vec<f64>,
}

impl ReactionBuffers {
    fn new(f: &PhaseField) -> Self {
        let n = f.n_cells() * f.n_vel();
        Self {
            k1: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            k2: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: f.clone(),
            preferred: vec![0.0; n],
            scratch: vec![0.0; f.n_vel()],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn reaction_rhs(
    f: &PhaseField,
    eps: f64,
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
    floor: f64,
    with_preferred: bool,
    preferred: &mut [f64],
    scratch: &mut [f64],
    out: &mut [Vec<f64>; 3],
) {
    let [qs, qi, qr] = out;
    transition_into(
        [f.class(Class::S), f.class(Class::I), f.class(Class::R)],
        params,
        floor,
        [qs.as_mut_slice(), qi.as_mut_slice(), qr.as_mut_slice()],
    );
    if with_preferred && params.has_preferred_direction() {
        preferred_into(
            f.class(Class::S),
            f.class(Class::I),
            &params.eta,
            &params.xi,
            vs,
            grid,
            scratch,
            preferred,
        );
        for (q, p) in qs.iter_mut().zip(preferred.iter()) {
            *q += p / eps;
        }
    }
}

/// Heun integration of `∂t f = (1/ε)Q^P + Q^T` (without `Q^P` when
/// `with_preferred` is false), substepped so that each substep stays below
/// a tenth of the fastest rate's time scale.
fn react_in_place(
    f: &mut PhaseField,
    dt: f64,
    eps: f64,
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
    with_preferred: bool,
) {
    let rate = reaction_rate_scale(f, eps, params, vs, grid, with_preferred);
    if rate == 0.0 {
        return;
    }
    let n_sub = (dt * rate / REACTION_CAP).ceil().max(1.0) as usize;
    let h = dt / n_sub as f64;
    let mut b = ReactionBuffers::new(f);
    for _ in 0..n_sub {
        let floor = vacuum_floor(f.class(Class::S), f.class(Class::I), f.class(Class::R));
        reaction_rhs(f, eps, params, vs, grid, floor, with_preferred, &mut b.preferred, &mut b.scratch, &mut b.k1);
        for class in Class::ALL {
            let j = class.index();
            for ((s, y), k) in b.stage.class_mut(class).iter_mut().zip(f.class(class)).zip(&b.k1[j]) {
                *s = y + h * k;
            }
        }
        reaction_rhs(
            &b.stage,
            eps,
            params,
            vs,
            grid,
            floor,
            with_preferred,
            &mut b.preferred,
            &mut b.scratch,
            &mut b.k2,
        );
        for class in Class::ALL {
            let j = class.index();
            for ((y, a), c) in f.class_mut(class).iter_mut().zip(&b.k1[j]).zip(&b.k2[j]) {
                *y += 0.5 * h * (a + c);
            }
        }
    }
}

/// Reaction substep on its own (simultaneous in all classes).
pub fn reaction_step(
    f: &PhaseField,
    dt: f64,
    eps: f64,
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
) -> Result<PhaseField> {
    check_field(f, vs, grid)?;
    let mut out = f.clone();
    react_in_place(&mut out, dt, eps, params, vs, grid, true);
    Ok(out)
}

/// Central gradient of a cell field with mirrored (zero-gradient) ghosts.
fn neumann_central(field: &[f64], c: usize, axis: usize, grid: &SpatialGrid) -> f64 {
    let lo = grid.neighbor(c, axis, -1).map_or(field[c], |n| field[n]);
    let hi = grid.neighbor(c, axis, 1).map_or(field[c], |n| field[n]);
    (hi - lo) / (2.0 * grid.h())
}

/// One micro-macro step for all classes.
fn micro_macro_in_place(
    f: &mut PhaseField,
    dt: f64,
    eps: f64,
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
) {
    let nv = vs.len();
    let n = grid.n_cells();
    let h = grid.h();
    let measure = vs.total_measure();
    let big_f = 1.0 / measure;
    let axes: Vec<usize> = grid.active_axes().collect();
    let c2 = [vs.axis_second_moment(0), vs.axis_second_moment(1)];

    let preferred = if params.has_preferred_direction() {
        let mut p = vec![0.0; n * nv];
        let mut scratch = vec![0.0; nv];
        preferred_into(
            f.class(Class::S),
            f.class(Class::I),
            &params.eta,
            &params.xi,
            vs,
            grid,
            &mut scratch,
            &mut p,
        );
        Some(p)
    } else {
        None
    };

    let mut g = vec![0.0; n * nv];
    let mut g_new = vec![0.0; n * nv];
    let mut rho = vec![0.0; n];
    let mut grad = vec![[0.0; 2]; n];
    let mut a = vec![0.0; nv];
    for class in Class::ALL {
        let fc = f.class(class);
        for c in 0..n {
            let cell = &fc[c * nv..(c + 1) * nv];
            rho[c] = cell.iter().zip(vs.weights()).map(|(f, w)| f * w).sum();
            for k in 0..nv {
                g[c * nv + k] = cell[k] - rho[c] * big_f;
            }
        }
        for c in 0..n {
            for &axis in &axes {
                grad[c][axis] = neumann_central(&rho, c, axis, grid);
            }
        }
        let lambda = &params.lambda[class];
        let q = if class == Class::S { preferred.as_deref() } else { None };
        for c in 0..n {
            let lower = axes.iter().map(|&ax| grid.neighbor(c, ax, -1)).collect::<Vec<_>>();
            let upper = axes.iter().map(|&ax| grid.neighbor(c, ax, 1)).collect::<Vec<_>>();
            let mut mean_a = 0.0;
            for k in 0..nv {
                let v = vs.velocities()[k];
                let here = g[c * nv + k];
                let mut acc = 0.0;
                for (slot, &axis) in axes.iter().enumerate() {
                    let va = v[axis];
                    if va > 0.0 {
                        let up = lower[slot].map_or(g[c * nv + vs.mirror(axis, k)], |m| g[m * nv + k]);
                        acc += va * (here - up) / h;
                    } else if va < 0.0 {
                        let up = upper[slot].map_or(g[c * nv + vs.mirror(axis, k)], |m| g[m * nv + k]);
                        acc += va * (up - here) / h;
                    }
                }
                a[k] = acc;
                mean_a += vs.weights()[k] * acc;
            }
            mean_a /= measure;
            let damp = 1.0 + lambda[c] * dt / (eps * eps);
            let mut mean_new = 0.0;
            for k in 0..nv {
                let v = vs.velocities()[k];
                let drive = big_f * (v[0] * grad[c][0] + v[1] * grad[c][1]);
                let mut rhs = -(a[k] - mean_a) / eps - drive / eps;
                if let Some(q) = q {
                    rhs += q[c * nv + k] / eps;
                }
                let x = (g[c * nv + k] + dt * rhs) / damp;
                g_new[c * nv + k] = x;
                mean_new += vs.weights()[k] * x;
            }
            mean_new /= measure;
            for x in &mut g_new[c * nv..(c + 1) * nv] {
                *x -= mean_new;
            }
        }
        let flux_moment = |c: usize, axis: usize| -> f64 {
            g_new[c * nv..(c + 1) * nv]
                .iter()
                .zip(vs.velocities().iter().zip(vs.weights()))
                .map(|(g, (v, w))| w * v[axis] * g)
                .sum()
        };
        let mut rho_new = rho.clone();
        for c in 0..n {
            for &axis in &axes {
                let Some(nb) = grid.neighbor(c, axis, 1) else { continue };
                let (kc, kn) = (c2[axis] / lambda[c], c2[axis] / lambda[nb]);
                let kinetic = 0.5 * (flux_moment(c, axis) + flux_moment(nb, axis)) / eps;
                let compact = -0.5 * (kc + kn) * (rho[nb] - rho[c]) / h;
                let wide = -0.5 * (kc * grad[c][axis] + kn * grad[nb][axis]);
                let flux = kinetic + (compact - wide);
                rho_new[c] -= dt * flux / h;
                rho_new[nb] += dt * flux / h;
            }
        }
        let out = f.class_mut(class);
        for c in 0..n {
            for k in 0..nv {
                out[c * nv + k] = rho_new[c] * big_f + g_new[c * nv + k];
            }
        }
    }
}

/// Per-step bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Mass removed by clipping negative values, relative to the total.
    pub clipped: f64,
    /// Most negative value before clipping.
    pub min_value: f64,
}

fn clip(f: &mut PhaseField, vs: &VelocitySet, grid: &SpatialGrid) -> Result<StepReport> {
    let total: f64 = f.totals(vs, grid).iter().sum();
    let nv = vs.len();
    let mut negative = 0.0;
    let mut min_value: f64 = 0.0;
    for class in Class::ALL {
        for (p, x) in f.class_mut(class).iter_mut().enumerate() {
            if *x < 0.0 {
                min_value = min_value.min(*x);
                negative -= vs.weights()[p % nv] * *x;
                *x = 0.0;
            }
        }
    }
    let clipped = negative * grid.cell_volume() / total.max(f64::MIN_POSITIVE);
    if clipped > 0.0 {
        log::debug!("clipped relative mass {clipped:e}");
    }
    if clipped > CLIP_ABORT {
        return Err(Error::ClipExceeded {
            clipped,
            threshold: CLIP_ABORT,
        });
    }
    Ok(StepReport { clipped, min_value })
}

fn step_with(
    f: &PhaseField,
    dt: f64,
    cfg: &KineticRunConfig,
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
) -> Result<(PhaseField, StepReport)> {
    let eps = cfg.eps;
    let mut out = f.clone();
    match (cfg.scheme, cfg.splitting) {
        (Scheme::Splitting, Splitting::Lie) => {
            transport_in_place(&mut out, dt, eps, vs, grid);
            relax_in_place(&mut out, dt, eps, &params.lambda, vs);
            react_in_place(&mut out, dt, eps, params, vs, grid, true);
        }
        (Scheme::Splitting, Splitting::Strang) => {
            transport_in_place(&mut out, 0.5 * dt, eps, vs, grid);
            relax_in_place(&mut out, 0.5 * dt, eps, &params.lambda, vs);
            react_in_place(&mut out, dt, eps, params, vs, grid, true);
            relax_in_place(&mut out, 0.5 * dt, eps, &params.lambda, vs);
            transport_in_place(&mut out, 0.5 * dt, eps, vs, grid);
        }
        (Scheme::MicroMacro, Splitting::Lie) => {
            micro_macro_in_place(&mut out, dt, eps, params, vs, grid);
            react_in_place(&mut out, dt, eps, params, vs, grid, false);
        }
        (Scheme::MicroMacro, Splitting::Strang) => {
            react_in_place(&mut out, 0.5 * dt, eps, params, vs, grid, false);
            micro_macro_in_place(&mut out, dt, eps, params, vs, grid);
            react_in_place(&mut out, 0.5 * dt, eps, params, vs, grid, false);
        }
    }
    if !out.is_finite() {
        return Err(Error::NegativeState { value: f64::NAN });
    }
    let report = clip(&mut out, vs, grid)?;
    Ok((out, report))
}

/// One full step of size `cfg.dt`.
pub fn kinetic_step(
    f: &PhaseField,
    cfg: &KineticRunConfig,
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
) -> Result<(PhaseField, StepReport)> {
    check_field(f, vs, grid)?;
    cfg.validate(vs, grid, params)?;
    step_with(f, cfg.dt, cfg, params, vs, grid)
}

/// Result of a kinetic run.
#[derive(Clone, Debug)]
pub struct KineticRun {
    /// Totals plus `l2_rhoI` and `l{p}_f{S,I,R}` at emitted times.
    pub series: TimeSeries,
    pub final_state: PhaseField,
    pub max_clipped: f64,
}

fn norm_names(cfg: &KineticRunConfig) -> Vec<String> {
    let mut names = vec!["l2_rhoI".to_string()];
    for p in &cfg.lp_norms {
        for class in Class::ALL {
            names.push(format!("l{p}_f{}", class.name()));
        }
    }
    names
}

fn record(series: &mut TimeSeries, t: f64, f: &PhaseField, cfg: &KineticRunConfig, vs: &VelocitySet, grid: &SpatialGrid) {
    let rho_i = f.density(Class::I, vs);
    let mut norms = vec![(rho_i.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt()];
    for p in &cfg.lp_norms {
        for class in Class::ALL {
            norms.push(f.lp_norm(class, *p, vs, grid));
        }
    }
    series.rows.push(TimeSeriesRow {
        t,
        totals: f.totals(vs, grid),
        norms,
    });
}

/// Iterates the scheme to `t_end` with parameters read from the schedule at
/// each step start; `observer` sees the state at every emitted time.
pub fn run_kinetic_scheduled(
    f0: &PhaseField,
    cfg: &KineticRunConfig,
    params: &Schedule<ParamFields>,
    vs: &VelocitySet,
    grid: &SpatialGrid,
    observer: &mut dyn FnMut(f64, &PhaseField) -> Result<()>,
) -> Result<KineticRun> {
    check_field(f0, vs, grid)?;
    for p in params.values() {
        cfg.validate(vs, grid, p)?;
    }
    let mut series = TimeSeries::new(norm_names(cfg));
    let mut f = f0.clone();
    record(&mut series, 0.0, &f, cfg, vs, grid);
    observer(0.0, &f)?;
    let plan = step_plan(cfg.t_end, cfg.dt)?;
    let mut t = 0.0;
    let mut max_clipped: f64 = 0.0;
    for (k, h) in plan.iter().enumerate() {
        let (next, report) = step_with(&f, *h, cfg, params.at(t), vs, grid).map_err(|e| e.at_time(t))?;
        f = next;
        max_clipped = max_clipped.max(report.clipped);
        t = if k + 1 == plan.len() { cfg.t_end } else { t + h };
        if (k + 1) % cfg.output_every == 0 || k + 1 == plan.len() {
            record(&mut series, t, &f, cfg, vs, grid);
            observer(t, &f)?;
        }
    }
    Ok(KineticRun {
        series,
        final_state: f,
        max_clipped,
    })
}

pub fn run_kinetic(
    f0: &PhaseField,
    cfg: &KineticRunConfig,
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
    observer: &mut dyn FnMut(f64, &PhaseField) -> Result<()>,
) -> Result<KineticRun> {
    run_kinetic_scheduled(f0, cfg, &Schedule::constant(params.clone()), vs, grid, observer)
}
