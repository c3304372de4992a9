//! Stage schedule and set construction.

mod pipeline;
mod schedule;
mod stage;

pub use schedule::{
    check_schedule, lattice_half_width, plan_schedule, smallest_height, ConstructionSchedule, InvariantCheck, Mode,
    ScheduleInput, StagePlan, MATERIALIZE_D_MAX,
};
pub use stage::{Construction, CorrectionReport, StageRecord, REPAIR_SPAN_MAX, RUN_MAX};
pub use pipeline::{feasible_initial_gamma, run_construction, CastleSummary, ConstructionOutput, PipelineOptions};
