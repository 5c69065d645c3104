pub mod dht;
pub mod election;
pub mod error;
pub mod exec;
pub mod gossip;
pub mod ids;
pub mod profile;
pub mod query;
pub mod sim;

pub use error::{Error, Result};
pub use exec::Exec;
pub use ids::{LabelId, PeerId};
