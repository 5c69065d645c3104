//! Deterministic discrete-event simulator hosting every peer, the message
//! bus, churn, the query workload and metric collection.
//!
//! Events run in `(time, seq)` order on one logical timeline. Each cycle a
//! tick steps every live peer once, in a seeded shuffled order. All
//! randomness comes from ChaCha streams derived from the config seed, and
//! every map that is iterated is ordered, so a config fully determines the
//! output stream.

mod bus;
mod config;
mod engine;
mod event;
mod message;
mod metrics;
mod peer;
mod report;

pub use bus::{Bus, KindCounts};
pub use config::{Bootstrap, ChurnConfig, Dataset, DatasetConfig, DatasetKind, SimConfig, WorkloadConfig};
pub use engine::{community_count, Simulation};
pub use event::{Event, EventKind, EventQueue};
pub use message::{Message, MsgKind, Payload, QueryFwd, RpcId};
pub use metrics::{read_jsonl, FloodRecord, Footer, MetricsFrame, QueryRecord, Record, RepairEvent, RunOutput, SCHEMA};
pub use peer::Peer;
pub use report::{bootstrap_mean, summarize, Estimate, Summary, BOOTSTRAP_RESAMPLES};
