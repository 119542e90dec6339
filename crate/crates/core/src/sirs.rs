//! Well-mixed SIRS model with frequency-dependent incidence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Population counts together with the transition rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirsState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// One emitted point of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SirsSample {
    pub t: f64,
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl SirsState {
    pub fn new(s: f64, i: f64, r: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let state = Self {
            s,
            i,
            r,
            alpha,
            beta,
            gamma,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("S", self.s), ("I", self.i), ("R", self.r)] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::param("state", format!("{name} = {x} is negative")));
            }
        }
        for (name, x) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::param(name, format!("{x} is negative")));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r
    }

    pub fn with_counts(&self, [s, i, r]: [f64; 3]) -> Self {
        Self { s, i, r, ..*self }
    }

    pub fn counts(&self) -> [f64; 3] {
        [self.s, self.i, self.r]
    }
}

fn field(st: &SirsState, [s, i, r]: [f64; 3]) -> [f64; 3] {
    let n = s + i + r;
    let incidence = st.beta * s * i / n;
    let ds = st.alpha * r - incidence;
    let dr = st.gamma * i - st.alpha * r;
    [ds, -(ds + dr), dr]
}

/// `(dS, dI, dR)`; the three components sum to zero exactly.
pub fn sirs_rhs(state: &SirsState) -> Result<[f64; 3]> {
    if !(state.total() > 0.0) {
        return Err(Error::param("state", "total population must be positive"));
    }
    Ok(field(state, state.counts()))
}

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step(state: &SirsState, dt: f64) -> Result<SirsState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("{dt} is not positive")));
    }
    let n = state.total();
    if !(n > 0.0) {
        return Err(Error::param("state", "total population must be positive"));
    }
    let y = state.counts();
    let add = |a: [f64; 3], k: [f64; 3], h: f64| [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2]];
    let k1 = field(state, y);
    let k2 = field(state, add(y, k1, 0.5 * dt));
    let k3 = field(state, add(y, k2, 0.5 * dt));
    let k4 = field(state, add(y, k3, dt));
    let mut next = [0.0; 3];
    for j in 0..3 {
        next[j] = y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    if let Some(x) = next.iter().find(|x| **x < -1e-12 * n) {
        return Err(Error::NegativeState { value: *x });
    }
    Ok(state.with_counts(next.map(|x| x.max(0.0))))
}

/// Integrates to `t_end` with step `dt` (the last step is shortened to land
/// on `t_end`). Without waning the run stops once `I < 1e-12 N`.
pub fn run_sirs(state0: &SirsState, dt: f64, t_end: f64) -> Result<Vec<SirsSample>> {
    state0.validate()?;
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::param("dt/t_end", "dt must be positive and t_end non-negative"));
    }
    let n = state0.total();
    let sample = |t: f64, s: &SirsState| SirsSample {
        t,
        s: s.s,
        i: s.i,
        r: s.r,
    };
    let mut out = vec![sample(0.0, state0)];
    let mut state = *state0;
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    for k in 0..steps {
        if state.alpha == 0.0 && state.i < 1e-12 * n {
            log::debug!("epidemic over at t = {}", k as f64 * dt);
            break;
        }
        let t = k as f64 * dt;
        let h = dt.min(t_end - t);
        state = rk4_step(&state, h).map_err(|e| e.at_time(t))?;
        out.push(sample(if k + 1 == steps { t_end } else { t + h }, &state));
    }
    Ok(out)
}

/// `R₀ = β / γ`.
pub fn basic_reproduction_number(state: &SirsState) -> Result<f64> {
    if !(state.gamma > 0.0) {
        return Err(Error::param("gamma", "R0 needs a positive recovery rate"));
    }
    Ok(state.beta / state.gamma)
}

/// Endemic equilibrium as population fractions `(s*, i*, r*)`, when it exists
/// (`β > γ` and `α > 0`).
pub fn endemic_equilibrium(alpha: f64, beta: f64, gamma: f64) -> Option<[f64; 3]> {
    if !(alpha > 0.0 && beta > gamma && gamma >= 0.0) {
        return None;
    }
    let s = gamma / beta;
    let i = (1.0 - s) / (1.0 + gamma / alpha);
    Some([s, i, 1.0 - s - i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fig2(s: f64, i: f64, r: f64) -> SirsState {
        SirsState::new(s, i, r, 0.0, 0.75, 0.5).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let d = sirs_rhs(&fig2(990.0, 10.0, 0.0)).unwrap();
        assert_relative_eq!(d[0], -7.425, max_relative = 1e-14);
        assert_relative_eq!(d[1], 2.425, max_relative = 1e-14);
        assert_relative_eq!(d[2], 5.0, max_relative = 1e-14);

        let st = SirsState::new(3.0, 0.0, 2.0, 0.4, 0.75, 0.5).unwrap();
        assert_eq!(sirs_rhs(&st).unwrap(), [0.8, 0.0, -0.8]);
        assert_eq!(sirs_rhs(&fig2(5.0, 0.0, 0.0)).unwrap(), [0.0, 0.0, 0.0]);
        assert!(sirs_rhs(&fig2(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn rk4_is_fourth_order() {
        let st = SirsState::new(0.9, 0.1, 0.0, 0.1, 0.75, 0.5).unwrap();
        let end = |dt: f64| run_sirs(&st, dt, 2.0).unwrap().last().unwrap().i;
        let reference = end(1e-5);
        let e1 = (end(0.1) - reference).abs();
        let e2 = (end(0.05) - reference).abs();
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_fixed_point_and_logistic() {
        let st = fig2(7.0, 0.0, 0.0);
        assert_eq!(rk4_step(&st, 0.1).unwrap(), st);

        let st = SirsState::new(0.99, 0.01, 0.0, 0.0, 0.75, 0.0).unwrap();
        let run = run_sirs(&st, 1e-3, 8.0).unwrap();
        let n = 1.0;
        let i0 = 0.01;
        for sample in run.iter().step_by(500) {
            let exact = n / (1.0 + (n / i0 - 1.0) * (-0.75 * sample.t).exp());
            assert_relative_eq!(sample.i, exact, max_relative = 1e-8);
            assert_relative_eq!(sample.s + sample.i, 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn final_size_matches_fixed_point_oracle() {
        let st = fig2(0.995, 0.005, 0.0);
        let r0 = basic_reproduction_number(&st).unwrap();
        let mut s_inf: f64 = 0.5;
        for _ in 0..500 {
            s_inf = 0.995 * (-r0 * (1.0 - s_inf)).exp();
        }
        let run = run_sirs(&st, 0.01, 400.0).unwrap();
        let last = run.last().unwrap();
        assert_relative_eq!(last.s, s_inf, max_relative = 1e-4);
    }

    #[test]
    fn endemic_equilibrium_matches_root_finding() {
        let (alpha, beta, gamma) = (0.1, 0.75, 0.5);
        let eq = endemic_equilibrium(alpha, beta, gamma).unwrap();
        // Newton on (dS, dR) = 0 with s + i + r = 1.
        let (mut s, mut i): (f64, f64) = (0.5, 0.2);
        for _ in 0..50 {
            let r = 1.0 - s - i;
            let f1 = alpha * r - beta * s * i;
            let f2 = gamma * i - alpha * r;
            let j11 = -alpha - beta * i;
            let j12 = -alpha - beta * s;
            let j21 = alpha;
            let j22 = gamma + alpha;
            let det = j11 * j22 - j12 * j21;
            s -= (f1 * j22 - f2 * j12) / det;
            i -= (j11 * f2 - j21 * f1) / det;
        }
        assert_relative_eq!(eq[0], s, max_relative = 1e-12);
        assert_relative_eq!(eq[1], i, max_relative = 1e-12);

        let st = SirsState::new(0.99, 0.01, 0.0, alpha, beta, gamma).unwrap();
        let last = *run_sirs(&st, 0.05, 400.0).unwrap().last().unwrap();
        assert!((last.s - eq[0]).abs() < 1e-6 && (last.i - eq[1]).abs() < 1e-6);
        assert!(endemic_equilibrium(0.1, 0.4, 0.5).is_none());
    }

    #[test]
    fn disease_free_manifold() {
        let st = SirsState::new(3.0, 0.0, 2.0, 0.2, 0.75, 0.5).unwrap();
        let run = run_sirs(&st, 0.01, 5.0).unwrap();
        assert!(run.iter().all(|p| p.i == 0.0));
        let last = run.last().unwrap();
        assert_relative_eq!(last.r, 2.0 * (-0.2f64 * 5.0).exp(), max_relative = 1e-9);
    }

    #[test]
    fn reproduction_number() {
        assert_eq!(basic_reproduction_number(&fig2(1.0, 0.0, 0.0)).unwrap(), 1.5);
        let st = SirsState::new(1.0, 0.0, 0.0, 0.0, 0.3, 0.3).unwrap();
        assert_eq!(basic_reproduction_number(&st).unwrap(), 1.0);
        let st = SirsState::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.3).unwrap();
        assert_eq!(basic_reproduction_number(&st).unwrap(), 0.0);
        let st = SirsState::new(1.0, 0.0, 0.0, 0.0, 0.3, 0.0).unwrap();
        assert!(basic_reproduction_number(&st).is_err());
    }

    #[test]
    fn early_exit_and_empty_run() {
        let st = fig2(1.0, 1e-14, 0.0);
        assert_eq!(run_sirs(&st, 0.1, 10.0).unwrap().len(), 1);
        assert_eq!(run_sirs(&fig2(1.0, 0.1, 0.0), 0.1, 0.0).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn stage_sums_vanish_and_population_is_conserved(
            s in 0.0f64..1000.0, i in 0.0f64..1000.0, r in 0.0f64..1000.0,
            alpha in 0.0f64..1.0, beta in 0.0f64..2.0, gamma in 0.0f64..1.0,
        ) {
            prop_assume!(s + i + r > 1e-6);
            let st = SirsState::new(s, i, r, alpha, beta, gamma).unwrap();
            let d = sirs_rhs(&st).unwrap();
            prop_assert_eq!((d[0] + d[2]) + d[1], 0.0);
            let next = rk4_step(&st, 0.05).unwrap();
            prop_assert!(next.s >= 0.0 && next.i >= 0.0 && next.r >= 0.0);
            let n = st.total();
            prop_assert!((next.total() - n).abs() <= 1e-12 * n);
        }

        #[test]
        fn threshold_behavior(s0 in 0.5f64..1.0, beta in 0.05f64..2.0, gamma in 0.05f64..2.0) {
            let i0 = 1.0 - s0;
            let st = SirsState::new(s0, i0, 0.0, 0.0, beta, gamma).unwrap();
            let run = run_sirs(&st, 0.01, 2.0).unwrap();
            let bs = beta * s0;
            if bs < gamma {
                prop_assert!(run.windows(2).all(|w| w[1].i <= w[0].i));
            } else if bs > gamma * 1.01 {
                prop_assert!(run[1].i > run[0].i);
            }
        }
    }
}
