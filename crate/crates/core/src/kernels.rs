//! Collision kernels: reorientation, preferred-direction turning and class
//! transitions, plus their ε-weighted sum.

use crate::domain::{ByClass, Class, ParamFields, PhaseField, SpatialGrid, VelocitySet};
use crate::error::{Error, Result};

/// Kernel values per class over (cell, velocity), cell-major.
pub type KernelOutput = ByClass<Vec<f64>>;

/// Fraction of the global mean of `A = f_S + f_I + f_R` below which a phase
/// point counts as vacuum and the incidence term is dropped.
pub const VACUUM_FLOOR: f64 = 1e-12;

fn check_len(f: &[f64], n_cells: usize, n_vel: usize, what: &str) -> Result<()> {
    if f.len() != n_cells * n_vel {
        return Err(Error::Shape(format!(
            "{what} has {} values, expected {} cells x {} velocities",
            f.len(),
            n_cells,
            n_vel
        )));
    }
    Ok(())
}

/// `Q^R[f] = λ (|V|^{-1} Σ w f − f)` for one class.
pub fn q_reorientation(f: &[f64], lambda: &[f64], vs: &VelocitySet) -> Result<Vec<f64>> {
    check_len(f, lambda.len(), vs.len(), "f")?;
    if let Some(l) = lambda.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::param("lambda", format!("{l} is not strictly positive")));
    }
    let mut out = vec![0.0; f.len()];
    reorientation_into(f, lambda, vs, &mut out);
    Ok(out)
}

pub(crate) fn reorientation_into(f: &[f64], lambda: &[f64], vs: &VelocitySet, out: &mut [f64]) {
    let nv = vs.len();
    let inv_measure = 1.0 / vs.total_measure();
    for ((fc, oc), l) in f.chunks_exact(nv).zip(out.chunks_exact_mut(nv)).zip(lambda) {
        let mean = fc.iter().zip(vs.weights()).map(|(f, w)| w * f).sum::<f64>() * inv_measure;
        for (o, f) in oc.iter_mut().zip(fc) {
            *o = l * (mean - f);
        }
    }
}

/// Turning kernel for susceptibles,
/// `Q_S^P = Σ_l w_l (T(v_k, v_l) f_S(v_l) − T(v_l, v_k) f_S(v_k))`
/// with `T(v, v') = −η v·∇f_I(v) + ξ v'·∇f_I(v')`. Classes I and R carry no turning term.
pub fn q_preferred(
    f_s: &[f64],
    f_i: &[f64],
    eta: &[f64],
    xi: &[f64],
    vs: &VelocitySet,
    grid: &SpatialGrid,
) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    check_len(f_s, n, vs.len(), "f_S")?;
    check_len(f_i, n, vs.len(), "f_I")?;
    if eta.len() != n || xi.len() != n {
        return Err(Error::Shape("eta and xi need one value per cell".into()));
    }
    if let Some(x) = eta.iter().chain(xi).find(|x| !(**x >= 0.0)) {
        return Err(Error::param("eta/xi", format!("{x} is negative")));
    }
    let mut out = vec![0.0; f_s.len()];
    let mut scratch = vec![0.0; vs.len()];
    preferred_into(f_s, f_i, eta, xi, vs, grid, &mut scratch, &mut out);
    Ok(out)
}

/// Evaluation in O(n_v) per cell: the double sum factors into
/// `−η a_k M0 + ξ M1 + η f_k A1 − ξ a_k f_k |V|` with `a = v·∇f_I`,
/// `M0 = Σ w f`, `M1 = Σ w a f`, `A1 = Σ w a`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn preferred_into(
    f_s: &[f64],
    f_i: &[f64],
    eta: &[f64],
    xi: &[f64],
    vs: &VelocitySet,
    grid: &SpatialGrid,
    a: &mut [f64],
    out: &mut [f64],
) {
    let nv = vs.len();
    let measure = vs.total_measure();
    for c in 0..grid.n_cells() {
        let oc = &mut out[c * nv..(c + 1) * nv];
        let (e, x) = (eta[c], xi[c]);
        if e == 0.0 && x == 0.0 {
            oc.fill(0.0);
            continue;
        }
        for (k, ak) in a.iter_mut().enumerate() {
            let v = vs.velocities()[k];
            *ak = 0.0;
            for axis in grid.active_axes() {
                if v[axis] != 0.0 {
                    *ak += v[axis] * grid.axis_derivative(c, axis, |n| f_i[n * nv + k]);
                }
            }
        }
        let fc = &f_s[c * nv..(c + 1) * nv];
        let (mut m0, mut m1, mut a1) = (0.0, 0.0, 0.0);
        for k in 0..nv {
            let w = vs.weights()[k];
            m0 += w * fc[k];
            m1 += w * a[k] * fc[k];
            a1 += w * a[k];
        }
        for k in 0..nv {
            oc[k] = -e * a[k] * m0 + x * m1 + e * fc[k] * a1 - x * a[k] * fc[k] * measure;
        }
    }
}

/// Class transitions in cancelled product form, pointwise in phase space.
pub fn q_transition(f: &PhaseField, rates: &ParamFields) -> Result<KernelOutput> {
    let n = f.n_cells() * f.n_vel();
    if rates.n_cells() != f.n_cells() || rates.n_vel() != f.n_vel() {
        return Err(Error::Shape(format!(
            "rates are {}x{}, field is {}x{}",
            rates.n_cells(),
            rates.n_vel(),
            f.n_cells(),
            f.n_vel()
        )));
    }
    let mut out = ByClass::from_fn(|_| vec![0.0; n]);
    let floor = vacuum_floor(f.class(Class::S), f.class(Class::I), f.class(Class::R));
    let [qs, qi, qr] = &mut out.0;
    transition_into(
        [f.class(Class::S), f.class(Class::I), f.class(Class::R)],
        rates,
        floor,
        [qs, qi, qr],
    );
    Ok(out)
}

pub(crate) fn vacuum_floor(s: &[f64], i: &[f64], r: &[f64]) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    let total: f64 = s.iter().chain(i).chain(r).sum();
    VACUUM_FLOOR * total / s.len() as f64
}

/// `Q_S = α f_R − β f_S f_I / A`, `Q_R = γ f_I − α f_R`, `Q_I = −(Q_S + Q_R)`,
/// so that the three values sum to zero exactly.
#[inline]
pub(crate) fn transition_point(
    s: f64,
    i: f64,
    r: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    floor: f64,
) -> [f64; 3] {
    let total = s + i + r;
    let incidence = if total > floor && total > 0.0 {
        beta * s * i / total
    } else {
        0.0
    };
    let waning = alpha * r;
    let recovery = gamma * i;
    let qs = waning - incidence;
    let qr = recovery - waning;
    [qs, -(qs + qr), qr]
}

pub(crate) fn transition_into(f: [&[f64]; 3], rates: &ParamFields, floor: f64, out: [&mut [f64]; 3]) {
    let [qs, qi, qr] = out;
    for p in 0..f[0].len() {
        let [a, b, c] = transition_point(
            f[0][p],
            f[1][p],
            f[2][p],
            rates.alpha[p],
            rates.beta[p],
            rates.gamma[p],
            floor,
        );
        qs[p] = a;
        qi[p] = b;
        qr[p] = c;
    }
}

/// `Q^R + ε Q^P + ε² Q^T` per class.
pub fn full_kernel(
    f: &PhaseField,
    params: &ParamFields,
    vs: &VelocitySet,
    grid: &SpatialGrid,
    eps: f64,
) -> Result<KernelOutput> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", format!("{eps} is not positive")));
    }
    let mut out = q_transition(f, params)?;
    let eps2 = eps * eps;
    for class in Class::ALL {
        let qr = q_reorientation(f.class(class), &params.lambda[class], vs)?;
        for (o, r) in out[class].iter_mut().zip(qr) {
            *o = r + eps2 * *o;
        }
    }
    let qp = q_preferred(
        f.class(Class::S),
        f.class(Class::I),
        &params.eta,
        &params.xi,
        vs,
        grid,
    )?;
    for (o, p) in out[Class::S].iter_mut().zip(qp) {
        *o += eps * p;
    }
    Ok(out)
}
