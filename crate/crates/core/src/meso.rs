//! Finite-volume solver for the drift-diffusion-reaction system
//!
//! ```text
//! ∂t ρ_S = ∇·(D_S ∇ρ_S + Γ ρ_S ∇ρ_I) + α0 ρ_R − β0 ρ_S ρ_I / A
//! ∂t ρ_I = ∇·(D_I ∇ρ_I) + β0 ρ_S ρ_I / A − γ0 ρ_I
//! ∂t ρ_R = ∇·(D_R ∇ρ_R) + γ0 ρ_I − α0 ρ_R
//! ```
//!
//! with no-flux walls, time-stepped by Heun's method.

use serde::{Deserialize, Serialize};

use crate::closure::ClosureCoefficients;
use crate::domain::{step_plan, Class, MesoField, Schedule, SpatialGrid, TimeSeries, TimeSeriesRow};
use crate::error::{Error, Result};
use crate::kernels::{transition_point, vacuum_floor};

/// Relative clipped mass above which a step is rejected.
pub const CLIP_ABORT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MesoRunConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Safety factor in (0, 1] applied to the stability limits.
    pub safety: f64,
    /// Emit observables every this many steps (and always at the end).
    pub output_every: usize,
}

impl MesoRunConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            safety: 0.9,
            output_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("{} is not positive", self.dt)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::param("t_end", "must be non-negative"));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::param("safety", format!("{} is outside (0, 1]", self.safety)));
        }
        if self.output_every == 0 {
            return Err(Error::param("output_every", "must be at least 1"));
        }
        Ok(())
    }
}

fn check_shapes(rho: &MesoField, coeffs: &ClosureCoefficients, grid: &SpatialGrid) -> Result<()> {
    if rho.n_cells() != grid.n_cells() || coeffs.n_cells() != grid.n_cells() {
        return Err(Error::Shape(format!(
            "field has {} cells, coefficients {}, grid {}",
            rho.n_cells(),
            coeffs.n_cells(),
            grid.n_cells()
        )));
    }
    Ok(())
}

/// Every interior face once, as `(left/lower cell, right/upper cell, axis)`.
fn faces(grid: &SpatialGrid) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..grid.n_cells()).flat_map(move |c| {
        grid.active_axes()
            .filter_map(move |axis| grid.neighbor(c, axis, 1).map(|n| (c, n)))
    })
}

/// Largest face drift speed `|Γ_face (ρ_I,n − ρ_I,c) / h|`.
fn max_drift_speed(rho: &MesoField, coeffs: &ClosureCoefficients, grid: &SpatialGrid) -> f64 {
    let ri = rho.class(Class::I);
    let g = &coeffs.gamma_drift;
    faces(grid)
        .map(|(c, n)| (0.5 * (g[c] + g[n]) * (ri[n] - ri[c]) / grid.h()).abs())
        .fold(0.0, f64::max)
}

/// Time derivative of all three densities.
pub fn meso_rhs(rho: &MesoField, coeffs: &ClosureCoefficients, grid: &SpatialGrid) -> Result<MesoField> {
    check_shapes(rho, coeffs, grid)?;
    let mut out = MesoField::zeros(grid.n_cells());
    rhs_into(rho, coeffs, grid, &mut out);
    Ok(out)
}

fn rhs_into(rho: &MesoField, coeffs: &ClosureCoefficients, grid: &SpatialGrid, out: &mut MesoField) {
    let n = grid.n_cells();
    let h = grid.h();
    let (s, i, r) = (rho.class(Class::S), rho.class(Class::I), rho.class(Class::R));
    let floor = vacuum_floor(s, i, r);
    let mut rates = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for c in 0..n {
        let q = transition_point(
            s[c],
            i[c],
            r[c],
            coeffs.alpha0[c],
            coeffs.beta0[c],
            coeffs.gamma0[c],
            floor,
        );
        for j in 0..3 {
            rates[j][c] = q[j];
        }
    }
    for class in Class::ALL {
        let f = rho.class(class);
        let d = &coeffs.d[class];
        let rate = &mut rates[class.index()];
        for (c, nb) in faces(grid) {
            let flux = 0.5 * (d[c] + d[nb]) * (f[nb] - f[c]) / (h * h);
            rate[c] += flux;
            rate[nb] -= flux;
        }
    }
    let g = &coeffs.gamma_drift;
    let rate_s = &mut rates[Class::S.index()];
    for (c, nb) in faces(grid) {
        let u = -0.5 * (g[c] + g[nb]) * (i[nb] - i[c]) / h;
        let upwind = if u > 0.0 { s[c] } else { s[nb] };
        let flux = u * upwind / h;
        rate_s[c] -= flux;
        rate_s[nb] += flux;
    }
    for class in Class::ALL {
        out.class_mut(class).copy_from_slice(&rates[class.index()]);
    }
}

/// Per-step bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Mass removed by clipping negative values, relative to the total.
    pub clipped: f64,
}

/// Stability limits `(diffusive, advective)` for the current state.
pub fn stability_limits(rho: &MesoField, coeffs: &ClosureCoefficients, grid: &SpatialGrid) -> (f64, f64) {
    let d_max = coeffs.max_d();
    let dim = grid.active_axes().count().max(1) as f64;
    let diffusive = if d_max > 0.0 {
        grid.h() * grid.h() / (2.0 * dim * d_max)
    } else {
        f64::INFINITY
    };
    let u = max_drift_speed(rho, coeffs, grid);
    let advective = if u > 0.0 { grid.h() / u } else { f64::INFINITY };
    (diffusive, advective)
}

/// One Heun step; rejects steps that violate either stability limit.
pub fn meso_step(
    rho: &MesoField,
    dt: f64,
    safety: f64,
    coeffs: &ClosureCoefficients,
    grid: &SpatialGrid,
) -> Result<(MesoField, StepReport)> {
    check_shapes(rho, coeffs, grid)?;
    let (diffusive, advective) = stability_limits(rho, coeffs, grid);
    if dt > safety * diffusive {
        return Err(Error::Stability {
            constraint: "diffusive",
            dt,
            limit: safety * diffusive,
        });
    }
    if dt > safety * advective {
        return Err(Error::Stability {
            constraint: "advective",
            dt,
            limit: safety * advective,
        });
    }
    let n = grid.n_cells();
    let mut k1 = MesoField::zeros(n);
    rhs_into(rho, coeffs, grid, &mut k1);
    let mut stage = rho.clone();
    for class in Class::ALL {
        for (y, k) in stage.class_mut(class).iter_mut().zip(k1.class(class)) {
            *y += dt * k;
        }
    }
    let mut k2 = MesoField::zeros(n);
    rhs_into(&stage, coeffs, grid, &mut k2);
    let mut next = rho.clone();
    for class in Class::ALL {
        let (a, b) = (k1.class(class), k2.class(class));
        for (p, y) in next.class_mut(class).iter_mut().enumerate() {
            *y += 0.5 * dt * (a[p] + b[p]);
        }
    }
    let clipped = clip(&mut next, grid)?;
    Ok((next, StepReport { clipped }))
}

fn clip(rho: &mut MesoField, grid: &SpatialGrid) -> Result<f64> {
    let total: f64 = rho.totals(grid).iter().sum();
    let mut negative = 0.0;
    for class in Class::ALL {
        for x in rho.class_mut(class) {
            if *x < 0.0 {
                negative -= *x;
                *x = 0.0;
            }
        }
    }
    if negative == 0.0 {
        return Ok(0.0);
    }
    let clipped = negative * grid.cell_volume() / total.max(f64::MIN_POSITIVE);
    log::debug!("clipped relative mass {clipped:e}");
    if clipped > CLIP_ABORT {
        return Err(Error::ClipExceeded {
            clipped,
            threshold: CLIP_ABORT,
        });
    }
    Ok(clipped)
}

/// Result of a mesoscopic run.
#[derive(Clone, Debug)]
pub struct MesoRun {
    /// Totals plus `l2_I` and `linf_I` at emitted times.
    pub series: TimeSeries,
    pub final_state: MesoField,
    pub max_clipped: f64,
}

pub const MESO_NORMS: [&str; 2] = ["l2_I", "linf_I"];

fn record(series: &mut TimeSeries, t: f64, rho: &MesoField, grid: &SpatialGrid) {
    series.rows.push(TimeSeriesRow {
        t,
        totals: rho.totals(grid),
        norms: vec![rho.l2_norm(Class::I, grid), rho.linf_norm(Class::I)],
    });
}

/// Iterates [`meso_step`] to `t_end`. `observer` sees the state at every
/// emitted time; coefficients are read from the schedule at each step start.
pub fn run_meso_scheduled(
    rho0: &MesoField,
    cfg: &MesoRunConfig,
    coeffs: &Schedule<ClosureCoefficients>,
    grid: &SpatialGrid,
    observer: &mut dyn FnMut(f64, &MesoField) -> Result<()>,
) -> Result<MesoRun> {
    cfg.validate()?;
    let mut series = TimeSeries::new(MESO_NORMS.iter().map(|s| s.to_string()).collect());
    let mut rho = rho0.clone();
    record(&mut series, 0.0, &rho, grid);
    observer(0.0, &rho)?;
    let plan = step_plan(cfg.t_end, cfg.dt)?;
    let mut t = 0.0;
    let mut max_clipped: f64 = 0.0;
    for (k, h) in plan.iter().enumerate() {
        let (next, report) =
            meso_step(&rho, *h, cfg.safety, coeffs.at(t), grid).map_err(|e| e.at_time(t))?;
        rho = next;
        max_clipped = max_clipped.max(report.clipped);
        t = if k + 1 == plan.len() { cfg.t_end } else { t + h };
        if (k + 1) % cfg.output_every == 0 || k + 1 == plan.len() {
            record(&mut series, t, &rho, grid);
            observer(t, &rho)?;
        }
    }
    Ok(MesoRun {
        series,
        final_state: rho,
        max_clipped,
    })
}

pub fn run_meso(
    rho0: &MesoField,
    cfg: &MesoRunConfig,
    coeffs: &ClosureCoefficients,
    grid: &SpatialGrid,
    observer: &mut dyn FnMut(f64, &MesoField) -> Result<()>,
) -> Result<MesoRun> {
    run_meso_scheduled(rho0, cfg, &Schedule::constant(coeffs.clone()), grid, observer)
}
