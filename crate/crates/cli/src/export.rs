//! trace.csv, events.csv and summary.txt.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! value read back parses to the identical f64. Files are written to a
//! temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use quadsafe_core::barrier::BarrierDomain;
use quadsafe_core::qp::QpStatus;
use quadsafe_core::sim::{Event, QpLevel, QpReport, TraceRecord};

/// Fixed trace.csv header.
pub const TRACE_HEADER: [&str; 26] = [
    "t", "x", "y", "z", "phi", "theta", "psi", "vx", "vy", "vz", "p", "q", "r_rate", "f_hat", "F_star", "taux_hat",
    "tauy_hat", "Mx_star", "My_star", "tauz", "h_alt", "h_altvel", "h_latpos", "h_latvel", "qp_hi_status",
    "qp_lo_status",
];

/// Invariance slack used for the violation-duration statistic.
pub const EPS_NUM: f64 = 0.02;

/// Export failure with the path involved.
#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    /// Filesystem error.
    #[error("{path}: {source}")]
    Io {
        /// File or directory.
        path: PathBuf,
        /// Cause.
        source: std::io::Error,
    },
    /// CSV encoding error.
    #[error("{path}: {source}")]
    Csv {
        /// File.
        path: PathBuf,
        /// Cause.
        source: csv::Error,
    },
    /// Nothing to write.
    #[error("trace is empty")]
    EmptyTrace,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.to_path_buf(), source }
}

/// Status column text.
pub fn status_text(report: &QpReport) -> &'static str {
    match report {
        QpReport::Disabled => "disabled",
        QpReport::Bypassed => "bypassed",
        QpReport::Solved { status: QpStatus::Optimal, .. } => "optimal",
        QpReport::Solved { status: QpStatus::Infeasible, .. } => "infeasible",
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn trace_row(r: &TraceRecord) -> Vec<String> {
    let s = &r.state;
    let mut row: Vec<String> = [
        r.t,
        s.position.x,
        s.position.y,
        s.position.z,
        r.euler.roll,
        r.euler.pitch,
        r.euler.yaw,
        s.velocity.x,
        s.velocity.y,
        s.velocity.z,
        s.body_rates.x,
        s.body_rates.y,
        s.body_rates.z,
        r.nominal.thrust,
        r.applied.thrust,
        r.nominal.torque.x,
        r.nominal.torque.y,
        r.applied.torque.x,
        r.applied.torque.y,
        r.applied.torque.z,
    ]
    .into_iter()
    .map(num)
    .collect();
    for d in BarrierDomain::ALL {
        row.push(r.barrier(d).map(|b| num(b.h)).unwrap_or_default());
    }
    row.push(status_text(&r.qp_high).to_string());
    row.push(status_text(&r.qp_low).to_string());
    row
}

fn level(l: QpLevel) -> &'static str {
    match l {
        QpLevel::High => "high",
        QpLevel::Low => "low",
    }
}

/// `(event_type, detail)` for events.csv.
pub fn event_fields(e: &Event) -> (&'static str, String) {
    match e {
        Event::Infeasible { level: l, max_violation } => {
            ("infeasible", format!("level={} max_violation={}", level(*l), num(*max_violation)))
        }
        Event::LateralSingular { det } => ("lateral-singular", format!("det={}", num(*det))),
        Event::ThrustTooSmall { thrust } => ("thrust-too-small", format!("thrust={}", num(*thrust))),
        Event::AttitudeSingular { r33 } => ("attitude-singular", format!("r33={}", num(*r33))),
        Event::BarrierSwitch { domain, activated } => (
            "barrier-switch",
            format!("{} {}", domain.name(), if *activated { "activated" } else { "deactivated" }),
        ),
        Event::PostQpClamp { level: l } => ("post-qp-clamp", format!("level={}", level(*l))),
        Event::GimbalLock => ("gimbal-lock", String::new()),
    }
}

fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<(), ExportError>) -> Result<(), ExportError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| ExportError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), ExportError> {
    write_atomic(path, |w| {
        let csv_err = |source| ExportError::Csv { path: path.to_path_buf(), source };
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header).map_err(csv_err)?;
        for row in rows {
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush().map_err(io_err(path))
    })
}

/// Per-domain statistics for summary.txt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierStats {
    /// Domain.
    pub domain: BarrierDomain,
    /// Smallest h over all steps where the domain was active.
    pub min_h: f64,
    /// Smallest h after h first reached 0 (infinite if it never did).
    pub min_h_after_entry: f64,
    /// Total time with h < −ε_num, s.
    pub violation_time: f64,
}

/// Summary of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Steps.
    pub steps: usize,
    /// One entry per domain that was ever active.
    pub barriers: Vec<BarrierStats>,
    /// Steps with at least one infeasible QP.
    pub infeasible_steps: usize,
    /// Post-QP clamp events.
    pub clamp_events: usize,
}

impl Summary {
    /// Computes statistics from a trace.
    pub fn from_trace(trace: &[TraceRecord], dt: f64) -> Self {
        let mut barriers = Vec::new();
        for d in BarrierDomain::ALL {
            let mut stats =
                BarrierStats { domain: d, min_h: f64::INFINITY, min_h_after_entry: f64::INFINITY, violation_time: 0.0 };
            let mut seen = false;
            let mut entered = false;
            for r in trace {
                if let Some(b) = r.barrier(d) {
                    seen = true;
                    stats.min_h = stats.min_h.min(b.h);
                    entered |= b.h >= 0.0;
                    if entered {
                        stats.min_h_after_entry = stats.min_h_after_entry.min(b.h);
                    }
                    if b.h < -EPS_NUM {
                        stats.violation_time += dt;
                    }
                }
            }
            if seen {
                barriers.push(stats);
            }
        }
        let infeasible_steps =
            trace.iter().filter(|r| r.events.iter().any(|e| matches!(e, Event::Infeasible { .. }))).count();
        let clamp_events =
            trace.iter().flat_map(|r| &r.events).filter(|e| matches!(e, Event::PostQpClamp { .. })).count();
        Self { steps: trace.len(), barriers, infeasible_steps, clamp_events }
    }

    /// Deterministic part of the summary (no wall time).
    pub fn render_brief(&self) -> String {
        let text = self.render(Duration::ZERO);
        text.lines().filter(|l| !l.starts_with("wall_time_s")).map(|l| format!("{l}\n")).collect()
    }

    /// Text for summary.txt.
    pub fn render(&self, wall: Duration) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps: {}", self.steps);
        for b in &self.barriers {
            let _ = writeln!(
                s,
                "{}: min_h={} min_h_after_entry={} violation_time_s={} (h < -{})",
                b.domain.name(),
                b.min_h,
                b.min_h_after_entry,
                b.violation_time,
                EPS_NUM
            );
        }
        let _ = writeln!(s, "infeasible_steps: {}", self.infeasible_steps);
        let _ = writeln!(s, "post_qp_clamp_events: {}", self.clamp_events);
        let _ = writeln!(s, "wall_time_s: {}", wall.as_secs_f64());
        s
    }
}

/// Writes trace.csv, events.csv and summary.txt into `dir` (created if
/// missing).
pub fn export_trace(trace: &[TraceRecord], dt: f64, wall: Duration, dir: &Path) -> Result<Summary, ExportError> {
    if trace.is_empty() {
        return Err(ExportError::EmptyTrace);
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_csv(&dir.join("trace.csv"), &TRACE_HEADER, trace.iter().map(trace_row))?;
    let events = trace.iter().flat_map(|r| {
        r.events.iter().map(move |e| {
            let (kind, detail) = event_fields(e);
            vec![num(r.t), kind.to_string(), detail]
        })
    });
    write_csv(&dir.join("events.csv"), &["t", "event_type", "detail"], events)?;
    let summary = Summary::from_trace(trace, dt);
    let text = summary.render(wall);
    let path = dir.join("summary.txt");
    write_atomic(&path, |w| w.write_all(text.as_bytes()).map_err(io_err(&path)))?;
    Ok(summary)
}
