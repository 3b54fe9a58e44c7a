//! Bookkeeping for the acceptance run: each criterion is timed against its
//! budget and reported on a single PASS/FAIL line.

use std::fmt;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    /// Numerical verdict, before the runtime budget is applied.
    pub numbers_ok: bool,
    pub elapsed: Duration,
    pub budget: Duration,
    pub detail: String,
}

impl Outcome {
    pub fn within_budget(&self) -> bool {
        self.elapsed <= self.budget
    }

    pub fn pass(&self) -> bool {
        self.numbers_ok && self.within_budget()
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} [{:.3}s / {}s] {}: {}",
            self.id,
            if self.pass() { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.title,
            self.detail
        )?;
        if !self.within_budget() {
            write!(f, " (runtime budget exceeded)")?;
        }
        Ok(())
    }
}

/// Runs one criterion. `body` returns the numerical verdict and a one-line
/// summary of the measured values; an `Err` counts as a failure.
pub fn check<F>(id: u32, title: &'static str, budget_secs: u64, body: F) -> Outcome
where
    F: FnOnce() -> Result<(bool, String), String>,
{
    let start = Instant::now();
    let result = body();
    let elapsed = start.elapsed();
    let (numbers_ok, detail) = match result {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome {
        id,
        title,
        numbers_ok,
        elapsed,
        budget: Duration::from_secs(budget_secs),
        detail,
    }
}

/// Relative deviation `|a - b| / |b|`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
