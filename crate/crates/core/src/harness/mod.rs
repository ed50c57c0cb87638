//! Experiment orchestration: configuration, parameter sweeps, the lemma
//! battery, trace ingestion and audits, and the results CSV.

pub mod audit;
pub mod config;
pub mod lemma;
pub mod results;
pub mod sweep;
pub mod traces;

pub use audit::{audit, AuditReport};
pub use config::{ExperimentConfig, ResolvedConfig};
pub use lemma::{run_lemma_battery, LemmaBattery};
pub use results::{read_rows, write_rows, ResultRow};
pub use sweep::{run_cells, run_sweep};
pub use traces::{ingest_traces, TraceDataset, TraceModel};
