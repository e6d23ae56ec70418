//! Streaming orchestration: scenario generation and the per-batch agent loop.

mod agent;
mod clock;
mod scenario;

pub use agent::{Agent, AgentConfig, AgentKind, StepAudit, StepOutcome, StepReport, StepTiming};
pub use clock::{Clock, SystemClock, TickingClock};
pub use scenario::{
    make_class_incremental, make_stream, make_variable_condition, task_of_class, AgentBatch, LabeledSample,
    NoiseSegment, ScenarioConfig, ScenarioMode, Stream, StreamBatch, UnlabeledSample,
};
