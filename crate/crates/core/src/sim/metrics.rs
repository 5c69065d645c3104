//! Line-delimited JSON output. The stream opens with a header carrying the
//! schema tag and the full config, then one line per metrics frame, one per
//! finished query, and a closing footer with the message audit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::bus::{Bus, KindCounts};
use super::config::SimConfig;
use super::message::MsgKind;
use crate::error::{Error, Result};
use crate::ids::PeerId;
use crate::query::{EfficiencyReport, QueryCost, QueryId, ResultFlags};

pub const SCHEMA: &str = "strata-metrics/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub cycle: u64,
    pub live_peers: usize,
    pub mean_view_quality: f64,
    pub n_representatives: usize,
    /// Representatives past the convergence window.
    pub n_settled_representatives: usize,
    /// Connected components of the graph linking peers whose similarity is
    /// at least `tau_adopt`.
    pub n_communities_oracle: usize,
    /// Distinct representatives with at least one record held somewhere.
    pub indexed_representatives: usize,
    pub stored_records: usize,
    pub invariant_violations: u64,
    /// Cumulative counts by kind.
    pub messages: BTreeMap<MsgKind, KindCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloodRecord {
    pub cost: QueryCost,
    pub recall: f64,
    pub matches: Vec<(PeerId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: QueryId,
    pub cycle: u64,
    pub entry: PeerId,
    /// Peer whose profile was perturbed into the sample.
    pub sampled_from: PeerId,
    pub k: usize,
    pub theta: f64,
    pub oracle: Vec<(PeerId, f64)>,
    pub matches: Vec<(PeerId, f64)>,
    pub descriptors: Vec<(PeerId, f64)>,
    pub recall: f64,
    pub cost: QueryCost,
    pub flags: ResultFlags,
    pub flood: Option<FloodRecord>,
    pub efficiency: Option<EfficiencyReport>,
}

/// Representative silence detected by a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairEvent {
    pub cycle: u64,
    pub peer: PeerId,
    pub silenced: PeerId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub cycles: u64,
    pub live_peers: usize,
    pub representatives: Vec<PeerId>,
    pub repairs: usize,
    pub messages: BTreeMap<MsgKind, KindCounts>,
    pub totals: KindCounts,
    pub conservation_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum Record {
    Header { schema: String, config: Box<SimConfig> },
    Frame(MetricsFrame),
    Query(Box<QueryRecord>),
    Footer(Footer),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: SimConfig,
    pub frames: Vec<MetricsFrame>,
    pub queries: Vec<QueryRecord>,
    pub repairs: Vec<RepairEvent>,
    pub bus: Bus,
    pub footer: Footer,
}

impl RunOutput {
    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        std::iter::once(Record::Header { schema: SCHEMA.to_string(), config: Box::new(self.config.clone()) })
            .chain(self.frames.iter().cloned().map(Record::Frame))
            .chain(self.queries.iter().cloned().map(|q| Record::Query(Box::new(q))))
            .chain(std::iter::once(Record::Footer(self.footer.clone())))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut out, &r).map_err(|e| Error::Config(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Parses a metrics stream, checking the schema tag on the header line.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if out.is_empty() {
            match &rec {
                Record::Header { schema, .. } if schema == SCHEMA => {}
                Record::Header { schema, .. } => {
                    return Err(Error::parse(i + 1, format!("unsupported schema {schema:?}")));
                }
                _ => return Err(Error::parse(i + 1, "stream must start with a header record")),
            }
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::parse(0, "empty metrics stream"));
    }
    Ok(out)
}
