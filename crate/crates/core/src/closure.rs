//! Mesoscopic coefficients: inverse reorientation solves for κ and Θ, the
//! diffusion and drift moments D and Γ, and equilibrium-averaged rates.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{ByClass, Class, ParamFields, SpatialGrid, VelocitySet};
use crate::error::{Error, Result};

const SOLVABILITY_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-10;

/// How the scalar moment `∫ v·κ dv` enters a per-axis diffusion operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionReading {
    /// Use the trace `∫ v·κ dv` as the coefficient of `∇·(D∇ρ)`.
    #[default]
    Trace,
    /// Use the isotropic per-axis value, trace divided by the dimension.
    PerAxis,
}

/// Which inverse of the reorientation operator to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolvePath {
    #[default]
    Analytic,
    Generic,
}

/// Representative chosen for the kernel component of the order-one solutions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gauge {
    #[default]
    ZeroMean,
}

/// Coefficients of the drift-diffusion-reaction system on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosureCoefficients {
    /// Diffusion coefficient per class and cell.
    pub d: ByClass<Vec<f64>>,
    /// Infection-avoidance drift coefficient of S per cell.
    pub gamma_drift: Vec<f64>,
    pub alpha0: Vec<f64>,
    pub beta0: Vec<f64>,
    pub gamma0: Vec<f64>,
    /// Per-class κ over (cell, velocity), when computed from a velocity set.
    pub kappa: Option<ByClass<Vec<[f64; 2]>>>,
    pub theta: Option<Vec<[f64; 2]>>,
    pub gauge: Gauge,
    pub reading: DiffusionReading,
}

impl ClosureCoefficients {
    /// Spatially constant coefficients with per-class diffusion.
    pub fn uniform(n_cells: usize, d: [f64; 3], gamma_drift: f64, rates: [f64; 3]) -> Result<Self> {
        let c = Self {
            d: ByClass(d.map(|x| vec![x; n_cells])),
            gamma_drift: vec![gamma_drift; n_cells],
            alpha0: vec![rates[0]; n_cells],
            beta0: vec![rates[1]; n_cells],
            gamma0: vec![rates[2]; n_cells],
            kappa: None,
            theta: None,
            gauge: Gauge::ZeroMean,
            reading: DiffusionReading::Trace,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn n_cells(&self) -> usize {
        self.alpha0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_cells();
        let fields = [
            ("D_S", &self.d[Class::S]),
            ("D_I", &self.d[Class::I]),
            ("D_R", &self.d[Class::R]),
            ("Gamma", &self.gamma_drift),
            ("alpha0", &self.alpha0),
            ("beta0", &self.beta0),
            ("gamma0", &self.gamma0),
        ];
        for (name, f) in fields {
            if f.len() != n {
                return Err(Error::Shape(format!("{name} has {} values, expected {n}", f.len())));
            }
            if let Some(x) = f.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                return Err(Error::param(name, format!("value {x} is negative or not finite")));
            }
        }
        Ok(())
    }

    pub fn max_d(&self) -> f64 {
        self.d.0.iter().flat_map(|d| d.iter()).fold(0.0, |m, x| m.max(*x))
    }
}

fn check_zero_mean(g: &[f64], vs: &VelocitySet) -> Result<f64> {
    if g.len() != vs.len() {
        return Err(Error::Shape(format!("{} values for {} velocities", g.len(), vs.len())));
    }
    let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mean: f64 = g.iter().zip(vs.weights()).map(|(g, w)| g * w).sum();
    if mean.abs() > SOLVABILITY_TOL * scale.max(f64::MIN_POSITIVE) * vs.total_measure() {
        return Err(Error::NotZeroMean { mean });
    }
    Ok(scale)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("{lambda} is not strictly positive")));
    }
    Ok(())
}

/// `‖Q^R[f] + g‖∞` for velocity-independent λ.
pub fn inverse_residual(f: &[f64], g: &[f64], lambda: f64, vs: &VelocitySet) -> f64 {
    let mean = f.iter().zip(vs.weights()).map(|(f, w)| f * w).sum::<f64>() / vs.total_measure();
    f.iter()
        .zip(g)
        .map(|(f, g)| (lambda * (mean - f) + g).abs())
        .fold(0.0, f64::max)
}

fn residual_checked(f: Vec<f64>, g: &[f64], scale: f64, lambda: f64, vs: &VelocitySet) -> Result<Vec<f64>> {
    let residual = inverse_residual(&f, g, lambda, vs);
    let tolerance = RESIDUAL_TOL * scale;
    if residual > tolerance {
        return Err(Error::Residual { residual, tolerance });
    }
    Ok(f)
}

/// Unique zero-mean `f` with `Q^R[f] = −g`; closed form `g / λ`.
pub fn solve_reorientation_inverse(g: &[f64], lambda: f64, vs: &VelocitySet) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let scale = check_zero_mean(g, vs)?;
    let f = g.iter().map(|g| g / lambda).collect();
    residual_checked(f, g, scale, lambda, vs)
}

/// Dense factorization of the reorientation operator restricted to the
/// zero-mean subspace, bordered by the constraint `Σ w f = 0`.
#[derive(Clone, Debug)]
pub struct ReorientationInverse {
    lambda: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pseudo: Option<DMatrix<f64>>,
}

impl ReorientationInverse {
    pub fn new(lambda: f64, vs: &VelocitySet) -> Result<Self> {
        check_lambda(lambda)?;
        let n = vs.len();
        let w = vs.weights();
        let measure = vs.total_measure();
        let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
        for k in 0..n {
            for l in 0..n {
                m[(k, l)] = lambda * w[l] / measure;
            }
            m[(k, k)] -= lambda;
            m[(k, n)] = 1.0;
            m[(n, k)] = w[k];
        }
        let lu = m.clone().lu();
        let pseudo = if lu.is_invertible() {
            None
        } else {
            log::warn!("bordered reorientation matrix is singular; using the pseudoinverse");
            let svd = m.svd(true, true);
            Some(svd.pseudo_inverse(1e-13).map_err(|e| Error::param("lambda", e.to_string()))?)
        };
        Ok(Self { lambda, lu, pseudo })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn solve(&self, g: &[f64], vs: &VelocitySet) -> Result<Vec<f64>> {
        let scale = check_zero_mean(g, vs)?;
        let n = vs.len();
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for k in 0..n {
            rhs[k] = -g[k];
        }
        let x = match &self.pseudo {
            Some(p) => p * rhs,
            None => self
                .lu
                .solve(&rhs)
                .ok_or_else(|| Error::param("lambda", "bordered system is singular"))?,
        };
        residual_checked(x.as_slice()[..n].to_vec(), g, scale, self.lambda, vs)
    }
}

/// Same solve through the dense factorization.
pub fn solve_reorientation_inverse_generic(g: &[f64], lambda: f64, vs: &VelocitySet) -> Result<Vec<f64>> {
    ReorientationInverse::new(lambda, vs)?.solve(g, vs)
}

/// Per-velocity components of a d-vector right-hand side.
fn solve_vector(
    rhs: &[[f64; 2]],
    lambda: f64,
    vs: &VelocitySet,
    path: SolvePath,
    cache: &mut HashMap<u64, ReorientationInverse>,
) -> Result<Vec<[f64; 2]>> {
    let mut out = vec![[0.0; 2]; rhs.len()];
    for axis in 0..vs.dim() {
        let g: Vec<f64> = rhs.iter().map(|r| r[axis]).collect();
        let f = match path {
            SolvePath::Analytic => solve_reorientation_inverse(&g, lambda, vs)?,
            SolvePath::Generic => {
                let inv = match cache.entry(lambda.to_bits()) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(ReorientationInverse::new(lambda, vs)?)
                    }
                };
                inv.solve(&g, vs)?
            }
        };
        for (o, f) in out.iter_mut().zip(f) {
            o[axis] = f;
        }
    }
    Ok(out)
}

/// `κ_j` solves `Q^R_j[κ_j] = −vF`; `Θ` solves `Q^R_S[Θ] = −(η + ξF|V|) vF`.
/// Both are stored cell-major over (cell, velocity).
pub fn compute_kappa_theta(
    params: &ParamFields,
    vs: &VelocitySet,
    path: SolvePath,
) -> Result<(ByClass<Vec<[f64; 2]>>, Vec<[f64; 2]>)> {
    let nv = vs.len();
    let measure = vs.total_measure();
    let vf: Vec<[f64; 2]> = vs
        .velocities()
        .iter()
        .zip(vs.equilibrium())
        .map(|(v, f)| [v[0] * f, v[1] * f])
        .collect();
    let mut cache = HashMap::new();
    let mut kappa = ByClass::from_fn(|_| Vec::with_capacity(params.n_cells() * nv));
    let mut theta = Vec::with_capacity(params.n_cells() * nv);
    let mut rhs = vec![[0.0; 2]; nv];
    for c in 0..params.n_cells() {
        for class in Class::ALL {
            let k = solve_vector(&vf, params.lambda[class][c], vs, path, &mut cache)?;
            kappa[class].extend(k);
        }
        let (eta, xi) = (params.eta[c], params.xi[c]);
        for ((r, vf), f) in rhs.iter_mut().zip(&vf).zip(vs.equilibrium()) {
            let response = eta + xi * f * measure;
            *r = [response * vf[0], response * vf[1]];
        }
        theta.extend(solve_vector(&rhs, params.lambda[Class::S][c], vs, path, &mut cache)?);
    }
    Ok((kappa, theta))
}

fn trace_moment(field: &[[f64; 2]], vs: &VelocitySet) -> Vec<f64> {
    field
        .chunks_exact(vs.len())
        .map(|cell| {
            cell.iter()
                .zip(vs.velocities().iter().zip(vs.weights()))
                .map(|(k, (v, w))| w * (v[0] * k[0] + v[1] * k[1]))
                .sum()
        })
        .collect()
}

/// `D_j = Σ w v·κ_j` and `Γ = Σ w v·Θ` per cell.
pub fn compute_d_gamma(
    kappa: &ByClass<Vec<[f64; 2]>>,
    theta: &[[f64; 2]],
    vs: &VelocitySet,
) -> (ByClass<Vec<f64>>, Vec<f64>) {
    (kappa.map(|k| trace_moment(k, vs)), trace_moment(theta, vs))
}

/// Equilibrium-weighted velocity averages of the rates and their spatial means.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedRates {
    pub alpha0: Vec<f64>,
    pub beta0: Vec<f64>,
    pub gamma0: Vec<f64>,
    pub alpha_bar: f64,
    pub beta_bar: f64,
    pub gamma_bar: f64,
}

pub fn averaged_rates(params: &ParamFields, vs: &VelocitySet, grid: &SpatialGrid) -> Result<AveragedRates> {
    if params.n_cells() != grid.n_cells() || params.n_vel() != vs.len() {
        return Err(Error::Shape("parameter fields do not match the grid".into()));
    }
    let average = |field: &[f64]| -> Vec<f64> {
        field
            .chunks_exact(vs.len())
            .map(|c| {
                c.iter()
                    .zip(vs.weights().iter().zip(vs.equilibrium()))
                    .map(|(x, (w, f))| x * w * f)
                    .sum()
            })
            .collect()
    };
    let mean = |field: &[f64]| field.iter().sum::<f64>() * grid.cell_volume() / grid.domain_measure();
    let alpha0 = average(&params.alpha);
    let beta0 = average(&params.beta);
    let gamma0 = average(&params.gamma);
    Ok(AveragedRates {
        alpha_bar: mean(&alpha0),
        beta_bar: mean(&beta0),
        gamma_bar: mean(&gamma0),
        alpha0,
        beta0,
        gamma0,
    })
}

/// Full coefficient set for the drift-diffusion system.
pub fn closure_coefficients(
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
    reading: DiffusionReading,
    path: SolvePath,
) -> Result<ClosureCoefficients> {
    let (kappa, theta) = compute_kappa_theta(params, vs, path)?;
    let (mut d, mut gamma_drift) = compute_d_gamma(&kappa, &theta, vs);
    if reading == DiffusionReading::PerAxis {
        let dim = vs.dim() as f64;
        for x in d.0.iter_mut().flatten().chain(gamma_drift.iter_mut()) {
            *x /= dim;
        }
    }
    let rates = averaged_rates(params, vs, grid)?;
    Ok(ClosureCoefficients {
        d,
        gamma_drift,
        alpha0: rates.alpha0,
        beta0: rates.beta0,
        gamma0: rates.gamma0,
        kappa: Some(kappa),
        theta: Some(theta),
        gauge: Gauge::ZeroMean,
        reading,
    })
}

/// Coefficients of the one-dimensional model with class-dependent speed pairs `{±v_j}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfinementCoefficients {
    /// `κ_j^+`; the value at `−v_j` is its negative.
    pub kappa_plus: [f64; 3],
    pub theta_plus: [f64; 3],
    pub d: [f64; 3],
    pub gamma: [f64; 3],
}

pub fn confinement_coefficients(
    speeds: [f64; 3],
    lambdas: [f64; 3],
    eta: f64,
    xi: f64,
) -> Result<ConfinementCoefficients> {
    if let Some(v) = speeds.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::param("speeds", format!("{v} is negative")));
    }
    for l in lambdas {
        check_lambda(l)?;
    }
    if !(eta >= 0.0 && xi >= 0.0) {
        return Err(Error::param("eta/xi", "turning responses must be non-negative"));
    }
    let mut out = ConfinementCoefficients {
        kappa_plus: [0.0; 3],
        theta_plus: [0.0; 3],
        d: [0.0; 3],
        gamma: [0.0; 3],
    };
    for j in 0..3 {
        let (v, l) = (speeds[j], lambdas[j]);
        // Unit weights on {+v, -v} with F = 1/2.
        out.kappa_plus[j] = v / (2.0 * l);
        out.d[j] = 2.0 * v * out.kappa_plus[j];
        if j == Class::S.index() {
            out.theta_plus[j] = (eta + xi) * v / (2.0 * l);
            out.gamma[j] = 2.0 * v * out.theta_plus[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ConstantParams;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vf(vs: &VelocitySet, axis: usize) -> Vec<f64> {
        vs.velocities()
            .iter()
            .zip(vs.equilibrium())
            .map(|(v, f)| v[axis] * f)
            .collect()
    }

    #[test]
    fn inverse_examples() {
        let vs = VelocitySet::circle(16, 1.0).unwrap();
        let g = vf(&vs, 0);
        let f = solve_reorientation_inverse(&g, 1.0, &vs).unwrap();
        assert_eq!(f, g);
        let zero = solve_reorientation_inverse(&vec![0.0; 16], 1.0, &vs).unwrap();
        assert!(zero.iter().all(|x| *x == 0.0));
        let half = solve_reorientation_inverse(&g, 0.5, &vs).unwrap();
        for (h, g) in half.iter().zip(&g) {
            assert_eq!(*h, 2.0 * g);
        }
        assert!(inverse_residual(&half, &g, 0.5, &vs) < 1e-15);
    }

    #[test]
    fn inverse_rejects_nonzero_mean() {
        let vs = VelocitySet::circle(8, 1.0).unwrap();
        let err = solve_reorientation_inverse(&[1.0; 8], 1.0, &vs).unwrap_err();
        assert!(matches!(err, Error::NotZeroMean { .. }));
        assert!(solve_reorientation_inverse_generic(&[1.0; 8], 1.0, &vs).is_err());
        assert!(solve_reorientation_inverse(&vf(&vs, 0), 0.0, &vs).is_err());
    }

    #[test]
    fn generic_matches_analytic() {
        for n in [4, 16, 64] {
            let vs = VelocitySet::circle(n, 1.3).unwrap();
            for lambda in [0.05, 0.5, 1.0, 7.0] {
                for axis in 0..2 {
                    let g = vf(&vs, axis);
                    let a = solve_reorientation_inverse(&g, lambda, &vs).unwrap();
                    let b = solve_reorientation_inverse_generic(&g, lambda, &vs).unwrap();
                    for (a, b) in a.iter().zip(&b) {
                        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn circle_closure_formulas() {
        let vs = VelocitySet::circle(64, 1.0).unwrap();
        let grid = SpatialGrid::square(2, 2, 1.0).unwrap();
        let mut p = ConstantParams::rates(0.0, 0.75, 0.5);
        p.lambda = [0.5; 3];
        p.eta = 1.0;
        p.xi = 1.0;
        let params = ParamFields::uniform(4, 64, p).unwrap();
        for path in [SolvePath::Analytic, SolvePath::Generic] {
            let c = closure_coefficients(&params, &vs, &grid, DiffusionReading::Trace, path).unwrap();
            for x in &c.d[Class::S] {
                assert!((x - 2.0).abs() <= 1e-12);
            }
            for x in &c.gamma_drift {
                assert!((x - 4.0).abs() <= 1e-12);
            }
            let per_axis = closure_coefficients(&params, &vs, &grid, DiffusionReading::PerAxis, path).unwrap();
            assert!((per_axis.d[Class::I][0] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_response_and_constant_theta() {
        let vs = VelocitySet::circle(8, 2.0).unwrap();
        let params = ParamFields::uniform(3, 8, ConstantParams::rates(0.0, 0.0, 0.0)).unwrap();
        let (kappa, theta) = compute_kappa_theta(&params, &vs, SolvePath::Analytic).unwrap();
        assert!(theta.iter().all(|t| *t == [0.0, 0.0]));
        for (k, (v, f)) in kappa[Class::S][..8].iter().zip(vs.velocities().iter().zip(vs.equilibrium())) {
            assert_eq!(*k, [v[0] * f, v[1] * f]);
        }

        let mut p = ConstantParams::rates(0.0, 0.0, 0.0);
        p.lambda = [2.0; 3];
        p.eta = 0.3;
        p.xi = 0.2;
        let params = ParamFields::uniform(1, 8, p).unwrap();
        let (_, theta) = compute_kappa_theta(&params, &vs, SolvePath::Analytic).unwrap();
        for (t, (v, f)) in theta.iter().zip(vs.velocities().iter().zip(vs.equilibrium())) {
            assert_relative_eq!(t[0], 0.5 * v[0] * f / 2.0, epsilon = 1e-15);
            assert_relative_eq!(t[1], 0.5 * v[1] * f / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_region_theta_is_piecewise() {
        let vs = VelocitySet::circle(8, 1.0).unwrap();
        let grid = SpatialGrid::square(4, 1, 1.0).unwrap();
        let mut params = ParamFields::uniform(4, 8, ConstantParams::rates(0.0, 0.0, 0.0)).unwrap();
        params.eta = vec![0.2, 0.2, 1.0, 1.0];
        params.xi = params.eta.clone();
        let c = closure_coefficients(&params, &vs, &grid, DiffusionReading::Trace, SolvePath::Analytic).unwrap();
        assert_relative_eq!(c.gamma_drift[0], 0.4, max_relative = 1e-14);
        assert_relative_eq!(c.gamma_drift[1], 0.4, max_relative = 1e-14);
        assert_relative_eq!(c.gamma_drift[2], 2.0, max_relative = 1e-14);
        assert_relative_eq!(c.gamma_drift[3], 2.0, max_relative = 1e-14);
    }

    #[test]
    fn averaged_rate_examples() {
        let vs = VelocitySet::circle(16, 2.0).unwrap();
        let grid = SpatialGrid::square(4, 2, 0.5).unwrap();
        let mut params = ParamFields::uniform(8, 16, ConstantParams::rates(0.1, 0.75, 0.5)).unwrap();
        let a = averaged_rates(&params, &vs, &grid).unwrap();
        assert!(a.beta0.iter().all(|b| (b - 0.75).abs() < 1e-15));
        assert_relative_eq!(a.beta_bar, 0.75, max_relative = 1e-15);

        let c = 0.3;
        for (p, b) in params.beta.iter_mut().enumerate() {
            let v = vs.velocities()[p % 16];
            *b = c * (v[0] * v[0] + v[1] * v[1]);
        }
        for (p, g) in params.gamma.iter_mut().enumerate() {
            let (i, _) = grid.coords(p / 16);
            *g = if i < 2 { 0.2 } else { 0.6 };
        }
        let a = averaged_rates(&params, &vs, &grid).unwrap();
        for b in &a.beta0 {
            assert_relative_eq!(*b, c * 4.0, max_relative = 1e-13);
        }
        assert_relative_eq!(a.gamma_bar, 0.4, max_relative = 1e-14);
    }

    #[test]
    fn confinement_examples() {
        let c = confinement_coefficients([1.0, 0.0, 2.0], [0.5, 1.0, 1.0], 0.0, 0.0).unwrap();
        assert_eq!(c.d[Class::I.index()], 0.0);
        assert_eq!(c.d[Class::S.index()], 2.0);
        assert_eq!(c.gamma[Class::S.index()], 0.0);
        let c = confinement_coefficients([1.0, 1.0, 1.0], [1.0; 3], 0.5, 0.5).unwrap();
        assert_eq!(c.kappa_plus[Class::S.index()], 0.5);
        assert_eq!(c.gamma, [1.0, 0.0, 0.0]);

        // Cross-check against the quadrature on the signed pair.
        let (v, l) = (1.7, 0.3);
        let vs = VelocitySet::two_speed(v).unwrap();
        let k = solve_reorientation_inverse_generic(&vf(&vs, 0), l, &vs).unwrap();
        let d: f64 = (0..2).map(|j| vs.weights()[j] * vs.velocities()[j][0] * k[j]).sum();
        let c = confinement_coefficients([v; 3], [l; 3], 0.0, 0.0).unwrap();
        assert!((d - c.d[0]).abs() <= 1e-12 * d);
        assert!((c.d[0] - v * v / l).abs() <= 1e-12 * d);
        assert!(confinement_coefficients([1.0; 3], [0.0, 1.0, 1.0], 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn kappa_residual_gauge_and_generic_agreement(
            lambdas in proptest::collection::vec(0.01f64..20.0, 6),
        ) {
            let vs = VelocitySet::circle(16, 1.0).unwrap();
            let params = ParamFields::from_cell_fields(
                16,
                &[0.0; 2], &[0.0; 2], &[0.0; 2],
                ByClass([lambdas[0..2].to_vec(), lambdas[2..4].to_vec(), lambdas[4..6].to_vec()]),
                vec![0.5; 2], vec![0.25; 2],
            ).unwrap();
            let (ka, ta) = compute_kappa_theta(&params, &vs, SolvePath::Analytic).unwrap();
            let (kg, tg) = compute_kappa_theta(&params, &vs, SolvePath::Generic).unwrap();
            for class in Class::ALL {
                for c in 0..2 {
                    let l = params.lambda[class][c];
                    let cell = &ka[class][c * 16..(c + 1) * 16];
                    for axis in 0..2 {
                        let k: Vec<f64> = cell.iter().map(|k| k[axis]).collect();
                        prop_assert!(inverse_residual(&k, &vf(&vs, axis), l, &vs) <= 1e-10);
                        let mean: f64 = k.iter().zip(vs.weights()).map(|(k, w)| k * w).sum();
                        prop_assert!(mean.abs() <= 1e-12);
                    }
                }
                for (a, g) in ka[class].iter().zip(&kg[class]) {
                    for axis in 0..2 {
                        prop_assert!((a[axis] - g[axis]).abs() <= 1e-12 * (1.0 + a[axis].abs()));
                    }
                }
            }
            for (a, g) in ta.iter().zip(&tg) {
                prop_assert!((a[0] - g[0]).abs() <= 1e-12 * (1.0 + a[0].abs()));
            }
        }

        #[test]
        fn coefficients_are_local(
            lambdas in proptest::collection::vec(0.1f64..5.0, 5),
            etas in proptest::collection::vec(0.0f64..2.0, 5),
            shift in 1usize..5,
        ) {
            let vs = VelocitySet::circle(8, 1.0).unwrap();
            let grid = SpatialGrid::square(5, 1, 1.0).unwrap();
            let build = |perm: &dyn Fn(usize) -> usize| {
                let lam: Vec<f64> = (0..5).map(|c| lambdas[perm(c)]).collect();
                let eta: Vec<f64> = (0..5).map(|c| etas[perm(c)]).collect();
                let p = ParamFields::from_cell_fields(
                    8, &[0.0; 5], &[0.0; 5], &[0.0; 5],
                    ByClass([lam.clone(), lam.clone(), lam]), eta.clone(), eta,
                ).unwrap();
                closure_coefficients(&p, &vs, &grid, DiffusionReading::Trace, SolvePath::Analytic).unwrap()
            };
            let base = build(&|c| c);
            let permuted = build(&|c| (c + shift) % 5);
            for c in 0..5 {
                let src = (c + shift) % 5;
                prop_assert_eq!(permuted.d[Class::S][c], base.d[Class::S][src]);
                prop_assert_eq!(permuted.gamma_drift[c], base.gamma_drift[src]);
            }
        }
    }
}
