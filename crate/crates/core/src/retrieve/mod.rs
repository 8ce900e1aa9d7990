//! Cross-domain retrieval index and the interactive relevance-feedback loop:
//! sessions accumulate queries and three-image selections, estimate both
//! domains' dimensions, learn an SA alignment once the sample counts allow
//! it, and switch to ranking in the whitened target subspace.

mod index;
mod log;
mod session;
mod simulate;

pub use index::{average_precision_from_ranks, build_index, Alignment, Hit, IndexMode, MapMode, RetrievalIndex};
pub use log::{read_log, replay, EventLog, LogRecord};
pub use session::{
    model_hash, FeedbackRound, Session, SessionConfig, SessionEvent, SessionState, SessionStatus, SELECTIONS_PER_ROUND,
};
pub use simulate::{simulate_session, CurvePoint, MeanStd, Oracle, RepetitionReport, SessionReport, SimulationConfig};
