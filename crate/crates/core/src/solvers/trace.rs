use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::manifold::Point;

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    /// Solver time since the start of the run, excluding recording overhead.
    pub elapsed_s: f64,
    /// Upper objective `f(xᵏ, yᵏ)`.
    pub objective: f64,
    /// `‖h_Φᵏ‖`, or the gradient-mapping norm for projected runs.
    pub grad_norm: f64,
    /// `‖grad_y g(xᵏ, yᵏ)‖`.
    pub inner_residual: f64,
}

impl IterRecord {
    /// Equality of everything except the timestamp.
    pub fn same_values(&self, other: &IterRecord) -> bool {
        self.k == other.k
            && self.objective.to_bits() == other.objective.to_bits()
            && self.grad_norm.to_bits() == other.grad_norm.to_bits()
            && self.inner_residual.to_bits() == other.inner_residual.to_bits()
    }
}

#[derive(Debug, Clone)]
pub struct IterateTrace {
    pub records: Vec<IterRecord>,
    pub final_x: Point,
    pub final_y: Point,
}

impl IterateTrace {
    /// Bitwise equality of records and final iterates, ignoring timestamps.
    pub fn same_values(&self, other: &IterateTrace) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_values(b))
            && self.final_x == other.final_x
            && self.final_y == other.final_y
    }
}

/// A run that stopped on an oracle failure, with everything recorded so far.
#[derive(Debug, Clone)]
pub struct Aborted {
    pub trace: IterateTrace,
    pub error: Error,
}

impl fmt::Display for Aborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "solver aborted after {} records: {}", self.trace.records.len(), self.error)
    }
}

impl std::error::Error for Aborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Wall clock that can be paused while bookkeeping runs.
pub(crate) struct SolverClock {
    start: Instant,
    excluded: Duration,
    paused_at: Option<Instant>,
}

impl SolverClock {
    pub fn start() -> Self {
        SolverClock {
            start: Instant::now(),
            excluded: Duration::ZERO,
            paused_at: None,
        }
    }

    pub fn pause(&mut self) {
        if self.paused_at.is_none() {
            self.paused_at = Some(Instant::now());
        }
    }

    pub fn resume(&mut self) {
        if let Some(t) = self.paused_at.take() {
            self.excluded += t.elapsed();
        }
    }

    pub fn seconds(&self) -> f64 {
        let now = self.paused_at.unwrap_or_else(Instant::now);
        now.duration_since(self.start).saturating_sub(self.excluded).as_secs_f64()
    }
}
