//! Sequential task dispatch and report assembly.
//!
//! Tasks run in scenario order; a task error is recorded in its report
//! entry and the run continues. The process-level verdict is the
//! conjunction over tasks: any failed golden check or task error marks the
//! whole run failed.

use moyal::cantrans::canonicity_check;
use moyal::gauge::{transform_observable, verify_gauge};
use moyal::starprod::StarProduct;
use std::time::Instant;

use crate::error::{CliError, Result};
use crate::examples;
use crate::grid::{GridState, Packet};
use crate::report::{PlotPayload, Report, TaskReport};
use crate::scenario::{
    curve_arg, parse, GridSpec, OutputKind, PacketSpec, Scenario, TaskSpec, UnitarySpec,
};
use crate::unitary::{
    apply_fourier, apply_inverse_fourier, apply_linear, apply_linear_inverse, apply_ut1,
    apply_ut1_inverse, apply_ut4, CurveData,
};
use crate::wigner::wigner;

/// Options shared by the `run` and `example` entry points.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Overrides the scenario truncation order.
    pub k: Option<u16>,
    /// Recorded in the report; randomized suites live in the test harness,
    /// so the seed only documents the run.
    pub seed: u64,
    /// Attach wall-clock times per task. Off by default so consecutive
    /// runs stay byte-identical.
    pub timings: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            k: None,
            seed: 0,
            timings: false,
        }
    }
}

/// Run every task of a validated scenario and assemble the report.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<Report> {
    sc.validate()?;
    let k_eff = match opts.k {
        Some(k) if k > crate::scenario::MAX_ORDER => {
            return Err(CliError::Scenario(format!(
                "truncation order {k} exceeds the guard {}",
                crate::scenario::MAX_ORDER
            )));
        }
        Some(k) => k,
        None => sc.k,
    };

    let mut tasks = Vec::with_capacity(sc.tasks.len());
    for (i, task) in sc.tasks.iter().enumerate() {
        let started = Instant::now();
        let mut rep = match dispatch(&task.spec, sc, u32::from(k_eff)) {
            Ok(rep) => rep,
            Err(e) => TaskReport::errored(task.spec.kind_name(), &e.to_string()),
        };
        rep.id = task
            .label
            .clone()
            .unwrap_or_else(|| format!("task-{}", i + 1));
        if opts.timings {
            rep.wall_ms = Some(started.elapsed().as_millis() as u64);
        }
        tasks.push(rep);
    }

    let passed = tasks.iter().all(TaskReport::accepted);
    Ok(Report {
        scenario: sc.name.clone(),
        k: k_eff,
        seed: opts.seed,
        passed,
        tasks,
    })
}

fn dispatch(spec: &TaskSpec, sc: &Scenario, k_default: u32) -> Result<TaskReport> {
    let order = |k: &Option<u16>| k.map_or(k_default, u32::from);
    match spec {
        TaskSpec::StarEval {
            f,
            g,
            n,
            bracket,
            k,
        } => star_eval(f, g, *n, *bracket, order(k)),
        TaskSpec::Canonicity { transform, k } => {
            let t = transform.build()?;
            let mut rep = TaskReport::new("canonicity");
            let out = canonicity_check(&t, order(k));
            rep.value("label", t.label());
            rep.value("order", out.order);
            if !out.detail.is_empty() {
                rep.value("detail", &out.detail);
            }
            rep.check("classical", out.classical);
            rep.check("quantum", out.quantum);
            Ok(rep)
        }
        TaskSpec::SolveSt { transform, k } => {
            let t = transform.build()?;
            let k = order(k);
            let iso = moyal::gauge::solve_gauge(&t, k)?;
            let mut rep = TaskReport::new("solve-st");
            rep.value("s", iso.s());
            rep.gauge(&verify_gauge(&iso, k));
            Ok(rep)
        }
        TaskSpec::VerifySt {
            transform,
            generator,
            k,
        } => {
            let t = transform.build()?;
            let k = order(k);
            let iso = generator.build_iso(&t, k)?;
            let mut rep = TaskReport::new("verify-st");
            rep.value("s", iso.s());
            rep.gauge(&verify_gauge(&iso, k));
            Ok(rep)
        }
        TaskSpec::TransformObservable {
            transform,
            observable,
            generator,
            k,
        } => {
            let t = transform.build()?;
            let k = order(k);
            let iso = generator.build_iso(&t, k)?;
            let (pulled, op) = transform_observable(&parse(observable)?, &t, &iso)?;
            let mut rep = TaskReport::new("transform-observable");
            rep.value("observable-transformed", pulled);
            rep.value("operator", op);
            Ok(rep)
        }
        TaskSpec::UopApply {
            unitary,
            packet,
            grid,
            inverse,
            output,
        } => uop_apply(sc, unitary, packet, grid, *inverse, *output),
        TaskSpec::Example { id } => examples::run_example(id),
    }
}

fn star_eval(f: &str, g: &str, n: usize, bracket: bool, k: u32) -> Result<TaskReport> {
    if n == 0 || n > 4 {
        return Err(CliError::Scenario(format!(
            "star-eval supports 1 to 4 degrees of freedom, got {n}"
        )));
    }
    let sp = StarProduct::moyal(n);
    let fe = parse(f)?;
    let ge = parse(g)?;
    let series = if bracket {
        sp.bracket(&fe, &ge, k)?
    } else {
        sp.star(&fe, &ge, k)?
    };
    let mut rep = TaskReport::new("star-eval");
    rep.value("result", series.to_expr());
    rep.value("exact", series.is_exact());
    rep.series_of(
        "grades",
        series
            .known_coeffs()
            .map(|(grade, coeff)| format!("hbar^{grade}: {coeff}")),
    );
    Ok(rep)
}

fn uop_apply(
    sc: &Scenario,
    unitary: &UnitarySpec,
    packet: &PacketSpec,
    grid: &GridSpec,
    inverse: bool,
    output: OutputKind,
) -> Result<TaskReport> {
    let hbar = sc.hbar();
    let bindings = sc.binding_list();
    let state = GridState::gaussian(grid.l, grid.m, hbar, &Packet::new(packet.x0, packet.p0, packet.sigma))?;

    let curve = |phi1: &str, phi2: &str| -> Result<CurveData> {
        CurveData::from_exprs(
            &parse(phi1)?,
            &parse(phi2)?,
            &curve_arg(),
            grid.l,
            grid.m,
            hbar,
            &bindings,
        )
    };
    let out = match (unitary, inverse) {
        (UnitarySpec::Identity, _) => state.clone(),
        (UnitarySpec::Fourier, false) | (UnitarySpec::InverseFourier, true) => {
            apply_fourier(&state)?
        }
        (UnitarySpec::Fourier, true) | (UnitarySpec::InverseFourier, false) => {
            apply_inverse_fourier(&state)?
        }
        (UnitarySpec::Linear { a, b, d }, false) => apply_linear(&state, *a, *b, *d)?,
        (UnitarySpec::Linear { a, b, d }, true) => apply_linear_inverse(&state, *a, *b, *d)?,
        (UnitarySpec::Ut1 { phi1, phi2 }, false) => apply_ut1(&state, &curve(phi1, phi2)?)?,
        (UnitarySpec::Ut1 { phi1, phi2 }, true) => {
            apply_ut1_inverse(&state, &curve(phi1, phi2)?)?
        }
        (UnitarySpec::Ut4 { phi1, phi2 }, false) => apply_ut4(&state, &curve(phi1, phi2)?)?,
        (UnitarySpec::Ut4 { phi1, phi2 }, true) => {
            // The point-map kernel factors through the shear kernel and the
            // Fourier pair, so its inverse is the Fourier transform of the
            // inverse shear.
            apply_fourier(&apply_ut1_inverse(&state, &curve(phi1, phi2)?)?)?
        }
    };

    let mut rep = TaskReport::new("uop-apply");
    rep.residual("norm-in", state.norm())?;
    rep.residual("norm-out", out.norm())?;
    rep.residual("norm-drift", (out.norm() - state.norm()).abs())?;
    rep.grid = Some(match output {
        OutputKind::State => PlotPayload::from_state(&out),
        OutputKind::Wigner => PlotPayload::from_phase(&wigner(&out)?),
    });
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::TaskStatus;
    use crate::scenario::Scenario;

    fn run_json(src: &str) -> Report {
        let sc = Scenario::from_json(src).unwrap();
        run_scenario(&sc, &RunOptions::default()).unwrap()
    }

    #[test]
    fn star_eval_reports_the_commutator() {
        let rep = run_json(
            r#"{"name": "comm", "tasks": [
                {"task": "star-eval", "f": "x", "g": "p", "bracket": true}
            ]}"#,
        );
        assert!(rep.passed);
        assert_eq!(rep.tasks[0].status, TaskStatus::Value);
        assert_eq!(rep.tasks[0].values["result"], "1");
        assert_eq!(rep.tasks[0].id, "task-1");
    }

    #[test]
    fn canonicity_of_the_interchange_passes() {
        let rep = run_json(
            r#"{"name": "swap", "tasks": [
                {"task": "canonicity", "transform": {"type": "interchange"}}
            ]}"#,
        );
        assert!(rep.passed);
        assert_eq!(rep.tasks[0].status, TaskStatus::Pass);
    }

    #[test]
    fn task_errors_are_captured_and_fail_the_run() {
        let rep = run_json(
            r#"{"name": "broken", "tasks": [
                {"task": "star-eval", "f": "x +", "g": "p"},
                {"task": "star-eval", "f": "x", "g": "p"}
            ]}"#,
        );
        assert!(!rep.passed);
        assert_eq!(rep.tasks[0].status, TaskStatus::Error);
        assert!(rep.tasks[0].error.is_some());
        assert_eq!(rep.tasks[1].status, TaskStatus::Value);
    }

    #[test]
    fn uop_apply_attaches_a_payload_and_preserves_norms() {
        let rep = run_json(
            r#"{"name": "kernels", "tasks": [
                {"task": "uop-apply", "unitary": {"type": "fourier"},
                 "packet": {"x0": 0.3, "p0": -0.4, "sigma": 0.9},
                 "grid": {"l": 16.0, "m": 512}}
            ]}"#,
        );
        assert!(rep.passed);
        let t = &rep.tasks[0];
        assert!(t.grid.is_some());
        assert!(t.residuals["norm-drift"] < 1e-8);
    }

    #[test]
    fn reports_are_byte_identical_across_runs() {
        let src = r#"{"name": "det", "k": 3, "tasks": [
            {"task": "star-eval", "f": "x^3 + p", "g": "x*p"},
            {"task": "solve-st", "transform":
                {"type": "f1", "phi1": "u", "phi2": "u^3"}, "k": 3},
            {"task": "uop-apply", "unitary": {"type": "identity"},
             "grid": {"l": 12.0, "m": 256}, "output": "wigner"}
        ]}"#;
        let sc = Scenario::from_json(src).unwrap();
        let a = run_scenario(&sc, &RunOptions::default()).unwrap();
        let b = run_scenario(&sc, &RunOptions::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
