use std::fmt::Write as _;

use nalgebra::DVector;

/// Metrics after one broadcast event. Row `t = 0` is the initial state and
/// has no triggering node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: u64,
    pub sigma: Option<usize>,
    pub mean_err: f64,
    pub max_err: f64,
    /// Per-node distances to the optimum; empty unless requested.
    pub node_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    /// `(t, estimates)` every `snapshot_stride` events.
    pub snapshots: Vec<(u64, Vec<DVector<f64>>)>,
    /// First event after which some estimate was no longer finite. Later
    /// rows carry infinite errors.
    pub diverged_at: Option<u64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("trajectory csv line {line}: {reason}")]
pub struct RecordParseError {
    pub line: usize,
    pub reason: String,
}

/// `(mean, max, per-node)` Euclidean distances of `estimates` to `optimum`.
pub fn distance_summary(estimates: &[&DVector<f64>], optimum: &DVector<f64>) -> (f64, f64, Vec<f64>) {
    let errs: Vec<f64> = estimates.iter().map(|x| (*x - optimum).norm()).collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let max = errs.iter().copied().fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) });
    (mean, max, errs)
}

fn fmt_num(out: &mut String, v: f64) {
    if v.is_finite() {
        let _ = write!(out, "{v:.16e}");
    } else if v.is_nan() {
        out.push_str("NaN");
    } else if v > 0.0 {
        out.push_str("inf");
    } else {
        out.push_str("-inf");
    }
}

impl TrajectoryRecord {
    pub fn initial_mean_error(&self) -> f64 {
        self.rows.first().map_or(f64::NAN, |r| r.mean_err)
    }

    pub fn final_mean_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.mean_err)
    }

    /// First event whose mean error is at or below `level`.
    pub fn first_event_below(&self, level: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.mean_err <= level).map(|r| r.t)
    }

    /// CSV with header `t,sigma,mean_err,max_err[,err_0..err_{N-1}]`; floats
    /// carry 17 significant digits and `sigma` is empty on the first row.
    pub fn to_csv(&self) -> String {
        let nodes = self.rows.first().map_or(0, |r| r.node_errors.len());
        let mut out = String::from("t,sigma,mean_err,max_err");
        for i in 0..nodes {
            let _ = write!(out, ",err_{i}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},", r.t);
            if let Some(s) = r.sigma {
                let _ = write!(out, "{s}");
            }
            out.push(',');
            fmt_num(&mut out, r.mean_err);
            out.push(',');
            fmt_num(&mut out, r.max_err);
            for &e in &r.node_errors {
                out.push(',');
                fmt_num(&mut out, e);
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`Self::to_csv`] output back into rows.
    pub fn from_csv(text: &str) -> Result<Self, RecordParseError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(RecordParseError { line: 1, reason: "empty file".into() })?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 4 || columns[..4] != ["t", "sigma", "mean_err", "max_err"] {
            return Err(RecordParseError { line: 1, reason: format!("bad header `{header}`") });
        }
        let mut rows = Vec::new();
        for (k, l) in lines {
            let line = k + 1;
            let err = |reason: String| RecordParseError { line, reason };
            let cells: Vec<&str> = l.split(',').collect();
            if cells.len() != columns.len() {
                return Err(err(format!("expected {} cells, found {}", columns.len(), cells.len())));
            }
            let num = |c: &str| c.parse::<f64>().map_err(|e| err(format!("`{c}`: {e}")));
            let t = cells[0].parse::<u64>().map_err(|e| err(e.to_string()))?;
            let sigma = if cells[1].is_empty() {
                None
            } else {
                Some(cells[1].parse::<usize>().map_err(|e| err(e.to_string()))?)
            };
            rows.push(TrajectoryRow {
                t,
                sigma,
                mean_err: num(cells[2])?,
                max_err: num(cells[3])?,
                node_errors: cells[4..].iter().map(|c| num(c)).collect::<Result<_, _>>()?,
            });
        }
        Ok(Self { rows, ..Self::default() })
    }
}
