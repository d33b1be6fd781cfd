//! Run logs and their on-disk formats: a wide trajectory CSV, a compact
//! Lyapunov CSV, and one JSON line per assignment proposal. Float output
//! uses shortest round-trip formatting, so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assignment::ExchangeEvent;
use crate::dynamics::AgentState;
use crate::estimator::EstimatorState;

/// One logged instant. At exchange instants the surfaces carry the values
/// right before the exchange applied, so the record is the left limit.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    pub states: Vec<AgentState>,
    pub estimates: EstimatorState,
    pub e1: Vec<DVector<f64>>,
    pub e2: Vec<DVector<f64>>,
    pub v: f64,
    pub delta: Vec<DVector<f64>>,
}

/// Lyapunov bookkeeping for one accepted exchange: value right before and
/// right after the swap on the same continuous state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpCheck {
    pub t: f64,
    pub v_pre: f64,
    pub v_post: f64,
    pub e_cur: f64,
    pub e_new: f64,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub name: String,
    pub dimension: usize,
    pub n: usize,
    pub dt: f64,
    pub steps: Vec<StepRecord>,
    pub events: Vec<ExchangeEvent>,
    pub jump_checks: Vec<JumpCheck>,
    pub warnings: Vec<String>,
}

const AXES: [&str; 3] = ["x", "y", "z"];

impl RunLog {
    pub fn new(name: String, dimension: usize, n: usize, dt: f64) -> Self {
        Self {
            name,
            dimension,
            n,
            dt,
            steps: Vec::new(),
            events: Vec::new(),
            jump_checks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn accepted_events(&self) -> impl Iterator<Item = &ExchangeEvent> {
        self.events.iter().filter(|e| e.accepted)
    }

    /// Wide per-step CSV: time, then per agent position, velocity and both
    /// error surfaces, then the Lyapunov value.
    pub fn trajectory_csv(&self) -> String {
        let d = self.dimension;
        let mut out = String::from("t");
        for i in 1..=self.n {
            for field in ["p", "v", "e1", "e2"] {
                for axis in &AXES[..d] {
                    let _ = write!(out, ",{field}{i}_{axis}");
                }
            }
        }
        out.push_str(",V\n");
        for rec in &self.steps {
            let _ = write!(out, "{}", rec.t);
            for i in 0..self.n {
                for vec in [&rec.states[i].p, &rec.states[i].v, &rec.e1[i], &rec.e2[i]] {
                    for x in vec.iter() {
                        let _ = write!(out, ",{x}");
                    }
                }
            }
            let _ = writeln!(out, ",{}", rec.v);
        }
        out
    }

    pub fn lyapunov_csv(&self) -> String {
        let mut out = String::from("t,V\n");
        for rec in &self.steps {
            let _ = writeln!(out, "{},{}", rec.t, rec.v);
        }
        out
    }

    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            let line =
                serde_json::to_string(event).expect("event serialization cannot fail");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Writes `trajectory.csv`, `lyapunov.csv` and `events.jsonl` into
    /// `dir`, creating it if needed.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trajectory.csv"), self.trajectory_csv())?;
        fs::write(dir.join("lyapunov.csv"), self.lyapunov_csv())?;
        fs::write(dir.join("events.jsonl"), self.events_jsonl())?;
        Ok(())
    }
}

/// Parses a `lyapunov.csv` produced by [`RunLog::write_outputs`].
pub fn read_lyapunov_csv(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line != "t,V" {
                return Err(format!("unexpected header `{line}`"));
            }
            continue;
        }
        let mut parts = line.split(',');
        let t = parts
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| format!("bad time on line {}", idx + 1))?;
        let v = parts
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| format!("bad value on line {}", idx + 1))?;
        rows.push((t, v));
    }
    Ok(rows)
}

/// Pairs two Lyapunov traces on a shared time grid into one CSV with the
/// baseline (no assignment) first.
pub fn comparison_csv(
    without: &[(f64, f64)],
    with: &[(f64, f64)],
) -> Result<String, String> {
    if without.len() != with.len() {
        return Err(format!(
            "length mismatch: {} vs {} rows",
            without.len(),
            with.len()
        ));
    }
    let mut out = String::from("t,V_without,V_with\n");
    for ((ta, va), (tb, vb)) in without.iter().zip(with) {
        if (ta - tb).abs() > 1e-12 {
            return Err(format!("time grids differ at t={ta} vs t={tb}"));
        }
        let _ = writeln!(out, "{ta},{va},{vb}");
    }
    Ok(out)
}
