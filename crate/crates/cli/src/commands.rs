//! The five subcommands. Each one loads and validates the configuration,
//! runs the corresponding library entry point, writes its artifacts, and
//! maps the outcome onto the exit-code contract.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use num_complex::Complex64;

use hylo_core::dynamics::{
    evolve, EvolutionConfig, EvolutionTrace, PerturbationSpec, StabilityReport,
    stability_experiment,
};
use hylo_core::functionals::{
    charge, coercivity_params, energy_electrostatic, energy_gradient, PhysicsConfig,
};
use hylo_core::grid::{self, inner, ComplexField, Grid, RealField};
use hylo_core::minimizer::{
    minimize_fixed_charge, minimize_j_delta, MinimizerError, MonotonicityReport, SolitonRecord,
    sweep, SweepPlan,
};
use hylo_core::model::LatticePotential;
use hylo_core::poisson::solve_radial;

use crate::config::{self, Loaded};
use crate::error::CliError;
use crate::output::{fmt_num, json_num, write_csv, write_json};
use crate::CommonArgs;

const FAMILY_HEADER: &str = "delta,charge,energy,lambda,omega,residual,iterations";
const TRACE_HEADER: &str = "t,E,C,liapunov,orbit_distance,max_abs_psi";
const HYLOMORPHY_HEADER: &str = "R,lambda,kinetic,v_term,n_term,field_term,charge";

fn family_row(record: &SolitonRecord) -> Vec<String> {
    vec![
        record.delta().map(fmt_num).unwrap_or_default(),
        fmt_num(record.charge()),
        fmt_num(record.energy()),
        fmt_num(record.lambda()),
        fmt_num(record.omega()),
        fmt_num(record.residual()),
        record.iterations().to_string(),
    ]
}

fn trace_rows(trace: &EvolutionTrace) -> Vec<Vec<String>> {
    trace
        .samples()
        .iter()
        .map(|s| {
            vec![
                fmt_num(s.t),
                fmt_num(s.energy),
                fmt_num(s.charge),
                fmt_num(s.liapunov),
                fmt_num(s.orbit_distance),
                fmt_num(s.max_abs),
            ]
        })
        .collect()
}

fn dump_profile(dir: &Path, tag: &str, record: &SolitonRecord) -> Result<(), CliError> {
    let write = |name: String, field: &RealField| -> Result<(), CliError> {
        let path = dir.join(name);
        grid::io::write_real(&path, field)
            .map_err(|e| CliError::Artifact(format!("writing {}: {e}", path.display())))
    };
    write(format!("u{tag}.hfd"), record.u())?;
    write(format!("phi{tag}.hfd"), record.phi())
}

/// Solves min over M_c = { u : C(u) = c } of E(u) for the configured single
/// charge and records the result.
pub fn solve(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = config::load(&args.config)?;
    loaded.require_assumptions()?;
    let section = loaded
        .run
        .solve
        .as_ref()
        .ok_or_else(|| CliError::Config("solve: section missing from the config".into()))?;
    if !section.charge.is_finite() || section.charge <= 0.0 {
        return Err(CliError::Config(format!(
            "solve.charge must be positive and finite, got {}",
            section.charge
        )));
    }
    let out = config::resolve_out(args.out.as_deref(), &loaded.run)?;
    let mcfg = loaded.minimizer_config()?;

    let started = Instant::now();
    match minimize_fixed_charge(section.charge, &loaded.physics, &mcfg) {
        Ok(record) => {
            write_csv(
                &out.join("family.csv"),
                &loaded.stamp,
                FAMILY_HEADER,
                &[family_row(&record)],
            )?;
            dump_profile(&out, "", &record)?;
            println!(
                "converged: charge {:.6}, E = {:.9e}, Lambda = {:.9e}, omega = {:.9e}, \
                 residual = {:.3e}, {} iterations ({:.2?})",
                record.charge(),
                record.energy(),
                record.lambda(),
                record.omega(),
                record.residual(),
                record.iterations(),
                started.elapsed()
            );
            Ok(())
        }
        Err(MinimizerError::NotConverged {
            iterations,
            residual,
            record,
            ..
        }) => {
            // The partial record is still written so the run can be triaged.
            write_csv(
                &out.join("family.csv"),
                &loaded.stamp,
                FAMILY_HEADER,
                &[family_row(&record)],
            )?;
            dump_profile(&out, "", &record)?;
            Err(CliError::Failed(format!(
                "did not converge within {iterations} iterations (residual {residual:.3e}); \
                 partial record written to {}",
                out.display()
            )))
        }
        Err(e) => Err(CliError::Config(format!("solve: {e}"))),
    }
}

/// Runs indexed jobs on up to `threads` workers, returning results in index
/// order so the artifacts stay deterministic.
fn run_indexed<T: Send>(
    n: usize,
    threads: usize,
    job: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    let workers = threads.max(1).min(n.max(1));
    if workers <= 1 {
        return (0..n).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = job(i);
                *slots[i].lock().expect("worker panicked") = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("worker panicked").expect("job ran"))
        .collect()
}

/// Runs the penalized family over the configured weights, writes the family
/// table and per-entry profiles, and reports the monotonicity chains.
pub fn sweep_cmd(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = config::load(&args.config)?;
    loaded.require_assumptions()?;
    let section = loaded
        .run
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep: section missing from the config".into()))?;
    if section.deltas.is_empty() {
        return Err(CliError::Config("sweep.deltas must not be empty".into()));
    }
    if section.deltas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::Config(
            "sweep.deltas must be strictly increasing".into(),
        ));
    }
    let out = config::resolve_out(args.out.as_deref(), &loaded.run)?;
    let mcfg = loaded.minimizer_config()?;
    let params = coercivity_params(loaded.physics.model())
        .map_err(|e| CliError::Config(format!("sweep: {e}")))?;

    let started = Instant::now();
    let outcomes: Vec<(f64, Result<SolitonRecord, MinimizerError>)> = if args.no_warm_start {
        let results = run_indexed(section.deltas.len(), args.threads, |i| {
            minimize_j_delta(section.deltas[i], &params, &loaded.physics, &mcfg)
        });
        section.deltas.iter().copied().zip(results).collect()
    } else {
        if args.threads > 1 {
            log::warn!("--threads has no effect while warm-start chaining is on");
        }
        let report = sweep(
            SweepPlan::Penalty {
                deltas: &section.deltas,
                params: &params,
            },
            &loaded.physics,
            &mcfg,
        )
        .map_err(|e| CliError::Config(format!("sweep: {e}")))?;
        report
            .entries
            .into_iter()
            .map(|e| (e.parameter, e.outcome))
            .collect()
    };

    let converged: Vec<&SolitonRecord> =
        outcomes.iter().filter_map(|(_, o)| o.as_ref().ok()).collect();
    let monotonicity = MonotonicityReport::evaluate(&converged, &params);

    let mut rows = Vec::new();
    for (index, (_, outcome)) in outcomes.iter().enumerate() {
        if let Ok(record) = outcome {
            rows.push(family_row(record));
            dump_profile(&out, &format!("_{index:03}"), record)?;
        }
    }
    write_csv(&out.join("family.csv"), &loaded.stamp, FAMILY_HEADER, &rows)?;

    let chain = |c: &hylo_core::minimizer::ChainCheck| {
        serde_json::json!({ "holds": c.holds, "min_margin": json_num(c.min_margin) })
    };
    let entries: Vec<serde_json::Value> = outcomes
        .iter()
        .map(|(delta, outcome)| match outcome {
            Ok(r) => serde_json::json!({
                "delta": json_num(*delta),
                "converged": true,
                "residual": json_num(r.residual()),
                "iterations": r.iterations(),
            }),
            Err(e) => serde_json::json!({
                "delta": json_num(*delta),
                "converged": false,
                "error": e.to_string(),
            }),
        })
        .collect();
    let report_json = serde_json::json!({
        "version": loaded.stamp.version(),
        "config_sha256": loaded.stamp.config_sha256(),
        "entries": entries,
        "converged": monotonicity.converged,
        "chains": {
            "j_delta_increasing": chain(&monotonicity.j_increasing),
            "phi_decreasing": chain(&monotonicity.phi_decreasing),
            "lambda_increasing": chain(&monotonicity.lambda_increasing),
            "charge_decreasing": chain(&monotonicity.charge_decreasing),
            "witness_decreasing": chain(&monotonicity.witness_decreasing),
        },
        "all_hold": monotonicity.all_hold(),
    });
    write_json(&out.join("monotonicity_report.json"), &report_json)?;

    let failures = outcomes.len() - converged.len();
    println!(
        "sweep: {} of {} entries converged, monotonicity chains {} ({:.2?})",
        converged.len(),
        outcomes.len(),
        if monotonicity.all_hold() { "hold" } else { "VIOLATED" },
        started.elapsed()
    );
    if failures > 0 {
        return Err(CliError::Failed(format!(
            "{failures} of {} sweep entries did not converge",
            outcomes.len()
        )));
    }
    Ok(())
}

/// Evaluates the hylomorphy certificate: sweeps trapezoid test profiles and
/// checks whether the best hylenic ratio falls below the rest energy E0.
pub fn hylomorphy(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = config::load(&args.config)?;
    loaded.require_assumptions()?;
    let out = config::resolve_out(args.out.as_deref(), &loaded.run)?;
    let section = loaded.run.hylomorphy.as_ref();

    let started = Instant::now();
    let report = hylo_core::hylomorphy::check_hylomorphy(&loaded.physics)
        .map_err(|e| CliError::Failed(format!("hylomorphy: {e}")))?;

    let rows: Vec<Vec<String>> = report
        .rows()
        .iter()
        .map(|r| {
            vec![
                fmt_num(r.plateau_radius),
                fmt_num(r.lambda),
                fmt_num(r.kinetic),
                fmt_num(r.v_term),
                fmt_num(r.n_term),
                fmt_num(r.field_term),
                fmt_num(r.charge),
            ]
        })
        .collect();
    write_csv(
        &out.join("hylomorphy.csv"),
        &loaded.stamp,
        HYLOMORPHY_HEADER,
        &rows,
    )?;

    let slope = hylo_core::hylomorphy::field_term_slope(report.rows());
    let threshold = if section.is_some_and(|s| s.q_threshold) {
        let bracket = hylo_core::hylomorphy::q_threshold(
            loaded.physics.model(),
            loaded.physics.potential(),
        )
        .map_err(|e| CliError::Failed(format!("q threshold: {e}")))?;
        serde_json::json!({
            "certified_q": json_num(bracket.certified_q()),
            "uncertified_q": json_num(bracket.uncertified_q()),
            "value": json_num(bracket.value()),
        })
    } else {
        serde_json::Value::Null
    };
    let certificate = serde_json::json!({
        "version": loaded.stamp.version(),
        "config_sha256": loaded.stamp.config_sha256(),
        "certified": report.certified(),
        "e0": json_num(report.e0()),
        "s0": report.s0().map(json_num).unwrap_or(serde_json::Value::Null),
        "best_R": report.best_row().map(|r| json_num(r.plateau_radius)).unwrap_or(serde_json::Value::Null),
        "lambda_best": report.best_row().map(|r| json_num(r.lambda)).unwrap_or(serde_json::Value::Null),
        "field_term_slope": slope.map(json_num).unwrap_or(serde_json::Value::Null),
        "q_threshold": threshold,
    });
    write_json(&out.join("certificate.json"), &certificate)?;

    println!("{report} ({:.2?})", started.elapsed());
    Ok(())
}

/// Computes the reference soliton, runs the perturbation experiment, and
/// writes the traces, the verdict, and the final state. Completion exits 0
/// whichever way the verdict falls; the verdict is data.
pub fn evolve_cmd(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = config::load(&args.config)?;
    loaded.require_assumptions()?;
    let section = loaded
        .run
        .evolution
        .as_ref()
        .ok_or_else(|| CliError::Config("evolution: section missing from the config".into()))?;
    let out = config::resolve_out(args.out.as_deref(), &loaded.run)?;
    let mcfg = loaded.minimizer_config()?;
    let ecfg = EvolutionConfig::new(
        &loaded.grid,
        &loaded.physics,
        section.dt,
        section.t_final,
        section.stride,
    )
    .map_err(|e| CliError::Config(format!("evolution: {e}")))?;
    let mut spec = PerturbationSpec::new(
        section.eta,
        section.band,
        args.seed.unwrap_or(section.noise_seed),
    )
    .map_err(|e| CliError::Config(format!("evolution: {e}")))?;
    if let Some(multiple) = section.multiple {
        spec = spec
            .with_multiple(multiple)
            .map_err(|e| CliError::Config(format!("evolution.multiple: {e}")))?;
    }

    let started = Instant::now();
    let record = match minimize_fixed_charge(section.charge, &loaded.physics, &mcfg) {
        Ok(record) => record,
        Err(MinimizerError::NotConverged {
            iterations,
            residual,
            ..
        }) => {
            return Err(CliError::Failed(format!(
                "reference soliton did not converge within {iterations} iterations \
                 (residual {residual:.3e})"
            )))
        }
        Err(e) => return Err(CliError::Config(format!("reference solve: {e}"))),
    };

    match stability_experiment(&record, &spec, &ecfg) {
        Ok(report) => {
            write_evolution_artifacts(&out, &loaded, &record, &report)?;
            println!("{report} ({:.2?})", started.elapsed());
            Ok(())
        }
        Err(hylo_core::dynamics::DynamicsError::BlowUp {
            time,
            max_abs,
            trace,
        }) => {
            write_csv(
                &out.join("trace.csv"),
                &loaded.stamp,
                TRACE_HEADER,
                &trace_rows(&trace),
            )?;
            Err(CliError::Failed(format!(
                "evolution aborted at t = {time}: sup|psi| reached {max_abs:.3e}; \
                 partial trace written to {}",
                out.display()
            )))
        }
        Err(hylo_core::dynamics::DynamicsError::NotHylomorphic { lambda, e0 }) => {
            Err(CliError::Failed(format!(
                "reference state is not hylomorphic (Lambda = {lambda:.6} vs E0 = {e0:.6}); \
                 no stability experiment to run"
            )))
        }
        Err(e) => Err(CliError::Config(format!("evolution: {e}"))),
    }
}

fn write_evolution_artifacts(
    out: &Path,
    loaded: &Loaded,
    record: &SolitonRecord,
    report: &StabilityReport,
) -> Result<(), CliError> {
    write_csv(
        &out.join("trace.csv"),
        &loaded.stamp,
        TRACE_HEADER,
        &trace_rows(report.trace()),
    )?;
    write_csv(
        &out.join("control_trace.csv"),
        &loaded.stamp,
        TRACE_HEADER,
        &trace_rows(report.control_trace()),
    )?;
    let path = out.join("psi_final.hfd");
    grid::io::write_complex(&path, report.final_psi())
        .map_err(|e| CliError::Artifact(format!("writing {}: {e}", path.display())))?;
    let verdict = serde_json::json!({
        "version": loaded.stamp.version(),
        "config_sha256": loaded.stamp.config_sha256(),
        "verdict": report.verdict().to_string(),
        "stable": report.is_stable(),
        "max_liapunov": json_num(report.max_liapunov()),
        "liapunov_bound": json_num(report.liapunov_bound()),
        "max_orbit_distance": json_num(report.max_distance()),
        "distance_bound": json_num(report.distance_bound()),
        "control_dispersed": report.control_dispersed(),
        "relative_charge_drift": json_num(report.trace().relative_charge_drift()),
        "relative_energy_drift": json_num(report.trace().relative_energy_drift()),
        "reference": {
            "charge": json_num(record.charge()),
            "energy": json_num(record.energy()),
            "lambda": json_num(record.lambda()),
            "omega": json_num(record.omega()),
            "residual": json_num(record.residual()),
            "iterations": record.iterations(),
        },
    });
    write_json(&out.join("verdict.json"), &verdict)
}

struct CheckRow {
    name: &'static str,
    passed: bool,
    detail: String,
}

/// Runs the built-in invariant suite on the configured physics and prints a
/// pass/fail table. Exits 0 only when every row passes.
pub fn check(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = config::load(&args.config)?;
    let started = Instant::now();
    let rows = vec![
        assumptions_row(&loaded),
        gauss_row(),
        gradient_row(&loaded),
        conservation_row(&loaded),
        coercivity_row(&loaded),
    ];
    for row in &rows {
        println!(
            "{:42} {}  {}",
            row.name,
            if row.passed { "PASS" } else { "FAIL" },
            row.detail
        );
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    println!(
        "{} of {} checks passed ({:.2?})",
        rows.len() - failed.len(),
        rows.len(),
        started.elapsed()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}

fn assumptions_row(loaded: &Loaded) -> CheckRow {
    let failing: Vec<&str> = loaded
        .assumptions
        .items
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    CheckRow {
        name: "model assumptions",
        passed: failing.is_empty(),
        detail: if failing.is_empty() {
            format!("{} of {} hold", loaded.assumptions.items.len(), loaded.assumptions.items.len())
        } else {
            format!("failing: {}", failing.join(", "))
        },
    }
}

/// Field of a uniform ball against the closed form (4/3) pi q s0^2 r inside
/// the ball.
fn gauss_row() -> CheckRow {
    let fallible = || -> Result<f64, String> {
        let grid = Grid::radial(2048, 8.0).map_err(|e| e.to_string())?;
        let ball = RealField::from_radial_fn(&grid, |r| if r <= 1.0 { 1.0 } else { 0.0 })
            .map_err(|e| e.to_string())?;
        let q = 0.7;
        let solution = solve_radial(&ball, q).map_err(|e| e.to_string())?;
        let field = solution.gauss_field.ok_or("no field returned")?;
        let radial = grid.as_radial().expect("radial grid");
        let mut worst = 0.0f64;
        for i in 0..radial.len() {
            let r = radial.node(i);
            if r > 0.9 {
                break;
            }
            let expected = 4.0 / 3.0 * std::f64::consts::PI * q * r;
            worst = worst.max((field.values()[i] - expected).abs() / expected);
        }
        Ok(worst)
    };
    match fallible() {
        Ok(worst) => CheckRow {
            name: "gauss law, uniform ball field",
            passed: worst < 1e-6,
            detail: format!("worst relative error {worst:.3e} (bar 1e-6)"),
        },
        Err(e) => CheckRow {
            name: "gauss law, uniform ball field",
            passed: false,
            detail: e,
        },
    }
}

/// Directional derivatives of E against central finite differences on a
/// small box, with the configured model and coupling.
fn gradient_row(loaded: &Loaded) -> CheckRow {
    let fallible = || -> Result<f64, String> {
        let grid = Grid::box3([16; 3], [8.0; 3]).map_err(|e| e.to_string())?;
        let cfg = PhysicsConfig::new(
            loaded.physics.q(),
            loaded.physics.model().clone(),
            LatticePotential::zero(),
        )
        .map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for k in 0..5 {
            let kf = k as f64;
            let width = 1.0 + 0.1 * kf;
            let u = RealField::from_box_fn(&grid, |x| {
                let r2 = (x[0] - 4.0).powi(2) + (x[1] - 4.0).powi(2) + (x[2] - 4.0).powi(2);
                (0.5 + 0.1 * kf) * (-0.5 * r2 / (width * width)).exp()
            })
            .map_err(|e| e.to_string())?;
            let v = RealField::from_box_fn(&grid, |x| {
                let r2 = (x[0] - 4.0 - 0.3 * kf).powi(2)
                    + (x[1] - 4.0).powi(2)
                    + (x[2] - 4.0 + 0.2 * kf).powi(2);
                (-0.5 * r2).exp() * (1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0] / 8.0 + kf).sin())
            })
            .map_err(|e| e.to_string())?;
            let gradient = energy_gradient(&u, &cfg).map_err(|e| e.to_string())?;
            let exact = inner(&gradient, &v).map_err(|e| e.to_string())?;
            let h = 1e-5;
            let shifted = |sign: f64| -> Result<f64, String> {
                let values: Vec<f64> = u
                    .values()
                    .iter()
                    .zip(v.values())
                    .map(|(&a, &b)| a + sign * h * b)
                    .collect();
                let field = RealField::new(grid.clone(), values).map_err(|e| e.to_string())?;
                Ok(energy_electrostatic(&field, &cfg)
                    .map_err(|e| e.to_string())?
                    .total())
            };
            let fd = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * h);
            worst = worst.max((exact - fd).abs() / fd.abs().max(1e-12));
        }
        Ok(worst)
    };
    match fallible() {
        Ok(worst) => CheckRow {
            name: "energy gradient vs central differences",
            passed: worst < 1e-5,
            detail: format!("worst relative error {worst:.3e} over 5 pairs (bar 1e-5)"),
        },
        Err(e) => CheckRow {
            name: "energy gradient vs central differences",
            passed: false,
            detail: e,
        },
    }
}

/// Short split-step run on a smooth bump: charge conserved to rounding,
/// energy to second order.
fn conservation_row(loaded: &Loaded) -> CheckRow {
    let fallible = || -> Result<(f64, f64), String> {
        let grid = Grid::box3([16; 3], [8.0; 3]).map_err(|e| e.to_string())?;
        let cfg = PhysicsConfig::new(
            loaded.physics.q(),
            loaded.physics.model().clone(),
            LatticePotential::zero(),
        )
        .map_err(|e| e.to_string())?;
        let b = grid.as_box().expect("box grid");
        let k1 = 2.0 * std::f64::consts::PI / 8.0;
        let mut values = vec![Complex64::new(0.0, 0.0); b.len()];
        for i in 0..16 {
            for j in 0..16 {
                for l in 0..16 {
                    let x = b.node(i, j, l);
                    let r2 = (x[0] - 4.0).powi(2) + (x[1] - 4.0).powi(2) + (x[2] - 4.0).powi(2);
                    values[b.index(i, j, l)] =
                        Complex64::from_polar(0.8 * (-0.5 * r2).exp(), k1 * x[0]);
                }
            }
        }
        let psi0 = ComplexField::new(grid.clone(), values).map_err(|e| e.to_string())?;
        let ecfg =
            EvolutionConfig::new(&grid, &cfg, 1e-3, 0.2, 200).map_err(|e| e.to_string())?;
        let outcome = evolve(&psi0, &ecfg, None).map_err(|e| e.to_string())?;
        Ok((
            outcome.trace().relative_charge_drift(),
            outcome.trace().relative_energy_drift(),
        ))
    };
    match fallible() {
        Ok((c_drift, e_drift)) => CheckRow {
            name: "split-step conservation",
            passed: c_drift < 1e-12 && e_drift < 1e-8,
            detail: format!(
                "charge drift {c_drift:.3e} (bar 1e-12), energy drift {e_drift:.3e} (bar 1e-8) \
                 over 200 steps"
            ),
        },
        Err(e) => CheckRow {
            name: "split-step conservation",
            passed: false,
            detail: e,
        },
    }
}

/// Interpolation constants of the coercivity bound plus positivity of the
/// witness E + a C^s along a family of Gaussians.
fn coercivity_row(loaded: &Loaded) -> CheckRow {
    let model = loaded.physics.model();
    if model.mu() == 0.0 {
        return CheckRow {
            name: "coercivity witness",
            passed: true,
            detail: "not applicable: no focusing term (mu = 0)".into(),
        };
    }
    let fallible = || -> Result<(f64, f64), String> {
        let params = coercivity_params(model).map_err(|e| e.to_string())?;
        let grid = Grid::radial(256, 10.0).map_err(|e| e.to_string())?;
        let cfg = PhysicsConfig::new(
            loaded.physics.q(),
            model.clone(),
            LatticePotential::zero(),
        )
        .map_err(|e| e.to_string())?;
        let mut min_witness = f64::INFINITY;
        for amp in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let u = RealField::from_radial_fn(&grid, |r| amp * (-0.5 * r * r).exp())
                .map_err(|e| e.to_string())?;
            let energy = energy_electrostatic(&u, &cfg)
                .map_err(|e| e.to_string())?
                .total();
            let witness = energy + params.a() * charge(&u).powf(params.s());
            min_witness = min_witness.min(witness);
        }
        Ok((params.a(), min_witness))
    };
    match fallible() {
        Ok((a, min_witness)) => CheckRow {
            name: "coercivity witness",
            passed: min_witness > 0.0,
            detail: format!("min E + a C^s = {min_witness:.3e} over Gaussian family (a = {a:.3e})"),
        },
        Err(e) => CheckRow {
            name: "coercivity witness",
            passed: false,
            detail: e,
        },
    }
}
