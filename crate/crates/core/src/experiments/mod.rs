//! Solver × instance grids, persisted results and fitting curves.

mod curves;
mod grid;
mod runner;

pub use curves::{
    curve_points_csv, fit_loglog, fit_quadratic, mean_metric, odl_fit_curve, rsr_tolerance_curve, smallest_qualifying,
    CurveOutput, CurvePoint, Fit, FitRanges, OdlCurveSpec, RsrCurveSpec,
};
pub use grid::{job_key, jobs, run_grid, run_grid_to_dir, run_job, GridReport, GridSpec, InstanceSpec, ResultRow, SolverEntry, RESULTS_HEADER};
pub use runner::{default_start, random_start, run_solver, RunOutput, Solution, SolverSpec, SOLVER_NAMES};
