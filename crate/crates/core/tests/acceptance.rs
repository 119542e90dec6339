//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use kinepi::closure::{
    closure_coefficients, compute_kappa_theta, inverse_residual, DiffusionReading, SolvePath,
};
use kinepi::domain::{ByClass, Class, ConstantParams, ParamFields, SpatialGrid, VelocitySet};
use kinepi::output::{occupancy_fields, render_panels};
use kinepi::validation::{
    abm_micro_probabilities, abm_spreading, confinement_check, conservation_check, decay_certificate,
    epsilon_convergence, final_size_check, homogeneous_consistency, lp_envelope, ComparisonReport,
    ConfinementStudy, ConservationStudy, DecayStudy, EpsilonStudy, FinalSizeStudy, HomogeneousStudy, LpStudy,
    MicroStudy, SpreadingStudy,
};
use rand::{Rng, SeedableRng};

type Outcome = Result<(bool, String), String>;

fn from_report(r: kinepi::Result<ComparisonReport>) -> Outcome {
    let r = r.map_err(|e| e.to_string())?;
    let detail: Vec<String> = r
        .checks
        .iter()
        .map(|c| format!("{} = {:.3e}{}", c.name, c.value, if c.passed { "" } else { " (FAILED)" }))
        .collect();
    Ok((r.passed(), detail.join("; ")))
}

fn homogeneous() -> Outcome {
    from_report(homogeneous_consistency(&HomogeneousStudy::fig2()))
}

fn closure_formulas() -> Outcome {
    let vs = VelocitySet::circle(64, 1.0).map_err(|e| e.to_string())?;
    let grid = SpatialGrid::square(1, 1, 1.0).map_err(|e| e.to_string())?;
    let p = ConstantParams {
        lambda: [0.5; 3],
        eta: 1.0,
        xi: 1.0,
        ..ConstantParams::rates(0.0, 0.75, 0.5)
    };
    let params = ParamFields::uniform(1, vs.len(), p).map_err(|e| e.to_string())?;
    let c = closure_coefficients(&params, &vs, &grid, DiffusionReading::Trace, SolvePath::Analytic)
        .map_err(|e| e.to_string())?;
    let d = c.d[Class::S][0];
    let g = c.gamma_drift[0];
    let ok = (d - 2.0).abs() <= 1e-12 && (g - 4.0).abs() <= 1e-12;
    Ok((ok, format!("D = {d:.15}, Gamma = {g:.15}")))
}

fn lax_milgram() -> Outcome {
    let vs = VelocitySet::circle(16, 1.0).map_err(|e| e.to_string())?;
    let n_cells = 200;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let lambda = ByClass::from_fn(|_| (0..n_cells).map(|_| rng.random_range(0.05..20.0)).collect::<Vec<f64>>());
    let zeros = vec![0.0; n_cells];
    let params = ParamFields::from_cell_fields(vs.len(), &zeros, &zeros, &zeros, lambda.clone(), zeros.clone(), zeros.clone())
        .map_err(|e| e.to_string())?;
    let (ka, _) = compute_kappa_theta(&params, &vs, SolvePath::Analytic).map_err(|e| e.to_string())?;
    let (kg, _) = compute_kappa_theta(&params, &vs, SolvePath::Generic).map_err(|e| e.to_string())?;
    let nv = vs.len();
    let mut residual = 0.0f64;
    let mut mismatch = 0.0f64;
    for class in Class::ALL {
        for c in 0..n_cells {
            let l = lambda[class][c];
            let exact: Vec<[f64; 2]> = vs
                .velocities()
                .iter()
                .zip(vs.equilibrium())
                .map(|(v, f)| [v[0] * f / l, v[1] * f / l])
                .collect();
            for axis in 0..2 {
                let vf: Vec<f64> = vs.velocities().iter().zip(vs.equilibrium()).map(|(v, f)| v[axis] * f).collect();
                for kappa in [&ka, &kg] {
                    let k: Vec<f64> = kappa[class][c * nv..(c + 1) * nv].iter().map(|x| x[axis]).collect();
                    residual = residual.max(inverse_residual(&k, &vf, l, &vs));
                }
                for (k, e) in kg[class][c * nv..(c + 1) * nv].iter().zip(&exact) {
                    mismatch = mismatch.max((k[axis] - e[axis]).abs());
                }
            }
        }
    }
    Ok((
        residual <= 1e-10 && mismatch <= 1e-12,
        format!("max residual = {residual:.3e}, generic vs v F / lambda = {mismatch:.3e}"),
    ))
}

fn conservation() -> Outcome {
    from_report(conservation_check(&ConservationStudy::standard()))
}

fn eps_convergence() -> Outcome {
    let r = epsilon_convergence(&EpsilonStudy::gaussian_fig2()).map_err(|e| e.to_string())?;
    let rows: Vec<String> = r
        .eps_table
        .iter()
        .map(|row| format!("eps {}: {:.3e} (per-axis) / {:.3e} (trace)", row.eps, row.per_axis, row.trace))
        .collect();
    let orders: Vec<String> = r.orders.iter().map(|(rd, p)| format!("{rd:?} order {p:.2}")).collect();
    Ok((
        r.passed(),
        format!("{}; {}; best reading {:?}", rows.join(", "), orders.join(", "), r.best_reading),
    ))
}

fn decay() -> Outcome {
    from_report(decay_certificate(&DecayStudy::standard()))
}

fn lp() -> Outcome {
    let study = LpStudy {
        p: vec![2.0],
        ..LpStudy::fig2()
    };
    let r = lp_envelope(&study).map_err(|e| e.to_string())?;
    let c = r.checks.iter().find(|c| c.name.contains("f_I")).ok_or("no f_I check")?;
    Ok((c.passed, format!("max ||f_I(t)|| / (||f_I(0)|| e^(beta t)) = {:.6}", c.value)))
}

fn confinement() -> Outcome {
    from_report(confinement_check(&ConfinementStudy::standard()))
}

fn fig2() -> Outcome {
    let study = SpreadingStudy::fig2();
    let (report, panels) = abm_spreading(&study).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut written = 0;
    for (step, occ) in &panels {
        let paths = render_panels(dir.path(), &format!("step{step:02}"), &occupancy_fields(occ), [occ.side, occ.side])
            .map_err(|e| e.to_string())?;
        written += paths.iter().filter(|p| p.exists()).count();
    }
    let steps: Vec<u64> = panels.iter().map(|(s, _)| *s).collect();
    let panels_ok = steps == study.checkpoints && written == 4 * study.checkpoints.len();
    let (ok, detail) = from_report(Ok(report.clone()))?;
    Ok((
        ok && panels_ok,
        format!("{detail}; {written} PPM panels; {}", report.notes.join("; ")),
    ))
}

fn micro() -> Outcome {
    let r = abm_micro_probabilities(&MicroStudy::fig2()).map_err(|e| e.to_string())?;
    Ok((r.passed(), r.notes.join("; ")))
}

fn final_size() -> Outcome {
    let r = final_size_check(&FinalSizeStudy::standard()).map_err(|e| e.to_string())?;
    let (ok, detail) = from_report(Ok(r.clone()))?;
    Ok((ok, format!("{detail}; {}", r.notes.join("; "))))
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 11] = [
        ("homogeneous reduction", Some(Duration::from_secs(10)), homogeneous),
        ("closure formulas D = 2, Gamma = 4", Some(Duration::from_secs(1)), closure_formulas),
        ("reorientation inverse residual", None, lax_milgram),
        ("population conservation", None, conservation),
        ("epsilon convergence", Some(Duration::from_secs(300)), eps_convergence),
        ("disease-free decay", None, decay),
        ("Lp envelope of f_I", None, lp),
        ("confinement of an immobile class", None, confinement),
        ("spreading experiment properties", Some(Duration::from_secs(60)), fig2),
        ("agent micro-probabilities", None, micro),
        ("SIRS final size", None, final_size),
    ];
    let mut failures = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_budget = budget.is_none_or(|b| elapsed <= b);
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && in_budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        let budget_note = match budget {
            Some(b) if !in_budget => format!(", over budget {:.0}s", b.as_secs_f64()),
            _ => String::new(),
        };
        println!(
            "criterion {:>2} {}: {} [{:.2}s{budget_note}] {detail}",
            k + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
