//! Lifted flows `X' = b(X)`: adaptive integration, exact solutions of
//! direction fields along their lines, and torus-period detection.

mod dopri;
mod line;
mod period;

pub use dopri::{
    integrate, Checkpoints, IntegratorOptions, IntegratorStats, Sample, Segment, StationaryExit,
    Trajectory,
};
pub use line::{exact_line_solve, LineRestriction};
pub use period::{detect_torus_period, PeriodReport};
