//! Machine-readable run reports.
//!
//! Reports are built for diffing: map fields are `BTreeMap`s, series
//! coefficients print as exact rationals, floats serialize through the
//! shortest round-trip representation, and wall-clock times are attached
//! only on explicit request. Two runs over the same scenario therefore
//! produce byte-identical files.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{CliError, Result};
use crate::grid::GridState;
use crate::wigner::PhaseGrid;

/// Outcome class of a single task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskStatus {
    /// All golden checks of the task passed.
    Pass,
    /// At least one golden check failed.
    Fail,
    /// The task computes values without a pass/fail golden.
    Value,
    /// The task aborted; the run continued.
    Error,
}

/// One named pass/fail line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
}

/// Decimated grid data attached to a task for plotting.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlotPayload {
    /// Wavefunction samples: rows of (x, Re psi, Im psi).
    State { rows: Vec<[f64; 3]> },
    /// Phase-space samples: rows of (x, p, W).
    Phase { rows: Vec<[f64; 3]> },
}

/// Keep 1D payloads at or below this many rows.
pub const MAX_STATE_ROWS: usize = 512;
/// Keep 2D payloads at or below this many samples per axis.
pub const MAX_PHASE_SIDE: usize = 64;

impl PlotPayload {
    /// Subsample a state to at most [`MAX_STATE_ROWS`] rows.
    pub fn from_state(state: &GridState) -> Self {
        let stride = state.len().div_ceil(MAX_STATE_ROWS).max(1);
        let rows = (0..state.len())
            .step_by(stride)
            .map(|i| {
                let z = state.samples()[i];
                [state.x(i), z.re, z.im]
            })
            .collect();
        PlotPayload::State { rows }
    }

    /// Subsample a phase-space grid to at most [`MAX_PHASE_SIDE`] points
    /// per axis, keeping the real part (imaginary parts of the grids we
    /// plot vanish up to rounding).
    pub fn from_phase(grid: &PhaseGrid) -> Self {
        let sx = grid.nx().div_ceil(MAX_PHASE_SIDE).max(1);
        let sp = grid.np().div_ceil(MAX_PHASE_SIDE).max(1);
        let mut rows = Vec::new();
        for i in (0..grid.nx()).step_by(sx) {
            for j in (0..grid.np()).step_by(sp) {
                rows.push([grid.xs()[i], grid.ps()[j], grid.value(i, j).re]);
            }
        }
        PlotPayload::Phase { rows }
    }

    /// The CSV header line for this payload.
    pub fn header(&self) -> &'static str {
        match self {
            PlotPayload::State { .. } => "x,re_psi,im_psi",
            PlotPayload::Phase { .. } => "x,p,w",
        }
    }

    /// Render the payload as CSV with a one-line header.
    pub fn to_csv(&self) -> String {
        let rows = match self {
            PlotPayload::State { rows } | PlotPayload::Phase { rows } => rows,
        };
        let mut out = String::from(self.header());
        out.push('\n');
        for r in rows {
            out.push_str(&format!("{},{},{}\n", r[0], r[1], r[2]));
        }
        out
    }
}

/// Report of a single task, in scenario order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskReport {
    pub id: String,
    pub kind: String,
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckLine>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub residuals: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub series: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<PlotPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

impl TaskReport {
    pub fn new(kind: &str) -> Self {
        TaskReport {
            id: String::new(),
            kind: kind.to_string(),
            status: TaskStatus::Value,
            checks: Vec::new(),
            residuals: BTreeMap::new(),
            values: BTreeMap::new(),
            series: BTreeMap::new(),
            grid: None,
            error: None,
            wall_ms: None,
        }
    }

    /// Record a named golden check; the task status becomes pass/fail.
    pub fn check(&mut self, name: &str, pass: bool) {
        self.checks.push(CheckLine {
            name: name.to_string(),
            pass,
        });
        let all = self.checks.iter().all(|c| c.pass);
        self.status = if all { TaskStatus::Pass } else { TaskStatus::Fail };
    }

    /// Record a residual; rejects non-finite values so the report stays
    /// serializable.
    pub fn residual(&mut self, name: &str, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(CliError::Numeric(format!(
                "residual {name} is not finite"
            )));
        }
        self.residuals.insert(name.to_string(), v);
        Ok(())
    }

    /// Record a residual together with a tolerance check of the same name.
    pub fn residual_check(&mut self, name: &str, v: f64, tol: f64) -> Result<()> {
        self.residual(name, v)?;
        self.check(name, v < tol);
        Ok(())
    }

    pub fn value(&mut self, name: &str, v: impl ToString) {
        self.values.insert(name.to_string(), v.to_string());
    }

    /// Record the three intertwining checks of a gauge verification.
    pub fn gauge(&mut self, out: &moyal::gauge::GaugeReport) {
        self.value("order", out.order);
        if !out.detail.is_empty() {
            self.value("detail", out.detail.join("; "));
        }
        self.check("conjugation", out.conjugation);
        self.check("homomorphism", out.homomorphism);
        self.check("fixed-points", out.fixed_points);
    }

    pub fn series_of(&mut self, name: &str, items: impl IntoIterator<Item = String>) {
        self.series
            .insert(name.to_string(), items.into_iter().collect());
    }

    pub fn errored(kind: &str, message: &str) -> Self {
        let mut r = TaskReport::new(kind);
        r.status = TaskStatus::Error;
        r.error = Some(message.to_string());
        r
    }

    /// True when the task neither failed a golden nor aborted.
    pub fn accepted(&self) -> bool {
        !matches!(self.status, TaskStatus::Fail | TaskStatus::Error)
    }
}

/// Full run report in scenario order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub k: u16,
    pub seed: u64,
    pub passed: bool,
    pub tasks: Vec<TaskReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn find_task(&self, id: &str) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Packet;

    #[test]
    fn serialization_is_deterministic() {
        let mut t = TaskReport::new("canonicity");
        t.id = "task-1".into();
        t.check("quantum", true);
        t.residual("norm-drift", 1.25e-9).unwrap();
        t.value("order", 6);
        t.series_of("a", ["1/2".to_string(), "1/4".to_string()]);
        let rep = Report {
            scenario: "demo".into(),
            k: 4,
            seed: 0,
            passed: true,
            tasks: vec![t],
        };
        let a = rep.to_json().unwrap();
        let b = Report::from_json(&a).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"1/2\""));
    }

    #[test]
    fn non_finite_residuals_are_rejected() {
        let mut t = TaskReport::new("uop-apply");
        assert!(t.residual("bad", f64::NAN).is_err());
        assert!(t.residual("good", 0.5).is_ok());
    }

    #[test]
    fn payload_decimation_respects_caps() {
        let g = GridState::gaussian(10.0, 2048, 1.0, &Packet::new(0.0, 0.0, 1.0)).unwrap();
        let p = PlotPayload::from_state(&g);
        let PlotPayload::State { rows } = &p else {
            panic!("state payload expected")
        };
        assert!(rows.len() <= MAX_STATE_ROWS);
        let csv = p.to_csv();
        assert!(csv.starts_with("x,re_psi,im_psi\n"));
        assert_eq!(csv.lines().count(), rows.len() + 1);
    }

    #[test]
    fn failing_check_flips_the_status() {
        let mut t = TaskReport::new("example-id");
        t.check("one", true);
        assert_eq!(t.status, TaskStatus::Pass);
        t.check("two", false);
        assert_eq!(t.status, TaskStatus::Fail);
        assert!(!t.accepted());
    }
}
