//! Experiment specs: a simulation config plus sweep axes and replication
//! seeds, read from TOML and patched by command-line overrides.
//!
//! ```toml
//! n_peers = 500
//! replications = [1, 2, 3]
//!
//! [query]
//! ttl = 3
//!
//! [sweep]
//! "query.theta" = [0.3, 0.5, 0.7]
//! ```
//!
//! Every key outside `sweep` and `replications` is a `SimConfig` field.
//! Overrides and sweep axes name fields by dotted path.

use std::collections::BTreeSet;

use strata_core::sim::SimConfig;
use toml::{Table, Value};

use crate::CliError;

pub const DEFAULT_SWEEP_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Config fields as written, before overrides are resolved.
    pub config: Table,
    pub axes: Vec<Axis>,
    pub replications: Option<Vec<u64>>,
}

impl ExperimentSpec {
    pub fn empty() -> Self {
        ExperimentSpec { config: Table::new(), axes: Vec::new(), replications: None }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config: Table = toml::from_str(text).map_err(|e| CliError::Spec(e.to_string()))?;
        let replications = match config.remove("replications") {
            None => None,
            Some(Value::Array(xs)) => Some(
                xs.iter()
                    .map(|v| v.as_integer().and_then(|i| u64::try_from(i).ok()))
                    .collect::<Option<Vec<u64>>>()
                    .ok_or_else(|| CliError::Spec("replications must be non-negative integers".into()))?,
            ),
            Some(_) => return Err(CliError::Spec("replications must be an array of seeds".into())),
        };
        let mut axes = Vec::new();
        match config.remove("sweep") {
            None => {}
            Some(Value::Table(t)) => {
                for (path, v) in t {
                    match v {
                        Value::Array(values) => axes.push(Axis { path, values }),
                        other => axes.push(Axis { path, values: vec![other] }),
                    }
                }
            }
            Some(_) => return Err(CliError::Spec("[sweep] must be a table of axes".into())),
        }
        let spec = ExperimentSpec { config, axes, replications };
        spec.check()?;
        Ok(spec)
    }

    pub fn set(&mut self, path: &str, value: Value) -> Result<(), CliError> {
        set_path(&mut self.config, path, value)
    }

    pub fn add_axis(&mut self, axis: Axis) {
        self.axes.retain(|a| a.path != axis.path);
        self.axes.push(axis);
    }

    /// Checks axis names, axis values and seed uniqueness.
    pub fn check(&self) -> Result<(), CliError> {
        let defaults = defaults_table();
        for a in &self.axes {
            if lookup(&defaults, &a.path).is_none() {
                return Err(CliError::Spec(format!("sweep axis {:?} is not a config field", a.path)));
            }
            if a.values.is_empty() {
                return Err(CliError::Spec(format!("sweep axis {:?} has no values", a.path)));
            }
        }
        if let Some(seeds) = &self.replications {
            if seeds.is_empty() {
                return Err(CliError::Spec("replications must list at least one seed".into()));
            }
            if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
                return Err(CliError::Spec("replication seeds must be distinct".into()));
            }
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<SimConfig, CliError> {
        self.resolve_with(&[])
    }

    /// The config with `cell` assignments applied on top.
    pub fn resolve_with(&self, cell: &[(String, Value)]) -> Result<SimConfig, CliError> {
        let mut t = self.config.clone();
        for (path, v) in cell {
            set_path(&mut t, path, v.clone())?;
        }
        let text = toml::to_string(&t).map_err(|e| CliError::Spec(e.to_string()))?;
        SimConfig::from_toml(&text).map_err(|e| CliError::Spec(e.to_string()))
    }

    /// Cartesian product of axis values, first axis outermost.
    pub fn cells(&self) -> Vec<Vec<(String, Value)>> {
        let mut cells = vec![Vec::new()];
        for a in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    a.values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((a.path.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

fn defaults_table() -> Table {
    toml::from_str(&SimConfig::default().to_toml()).expect("default config serializes")
}

fn lookup<'a>(t: &'a Table, path: &str) -> Option<&'a Value> {
    let mut parts = path.split('.');
    let mut v = t.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

fn set_path(t: &mut Table, path: &str, value: Value) -> Result<(), CliError> {
    if lookup(&defaults_table(), path).is_none() {
        return Err(CliError::Spec(format!("{path:?} is not a config field")));
    }
    let (parents, leaf) = match path.rsplit_once('.') {
        Some((p, l)) => (p.split('.').collect::<Vec<_>>(), l),
        None => (Vec::new(), path),
    };
    let mut cur = t;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::Spec(format!("{p:?} in {path:?} is not a table")))?;
    }
    cur.insert(leaf.to_string(), value);
    Ok(())
}

/// Reads a command-line value as a TOML literal, falling back to a string.
pub fn parse_value(text: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

/// `path=v1,v2,...`
pub fn parse_axis(text: &str) -> Result<Axis, CliError> {
    let (path, values) =
        text.split_once('=').ok_or_else(|| CliError::Spec(format!("axis {text:?} is not of the form path=v1,v2")))?;
    let values: Vec<Value> = values.split(',').filter(|v| !v.trim().is_empty()).map(|v| parse_value(v.trim())).collect();
    Ok(Axis { path: path.trim().to_string(), values })
}

/// `path=value`
pub fn parse_assignment(text: &str) -> Result<(String, Value), CliError> {
    let (path, v) =
        text.split_once('=').ok_or_else(|| CliError::Spec(format!("override {text:?} is not of the form path=value")))?;
    Ok((path.trim().to_string(), parse_value(v.trim())))
}

pub fn describe(cell: &[(String, Value)]) -> String {
    cell.iter().map(|(p, v)| format!("{p}={v}")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides_resolve() {
        let mut spec = ExperimentSpec::parse("n_peers = 40\nreplications = [3, 4]\n[sweep]\n\"query.ttl\" = [1, 2]\n").unwrap();
        spec.set("query.theta", parse_value("0.25")).unwrap();
        let cfg = spec.resolve().unwrap();
        assert_eq!((cfg.n_peers, cfg.query.theta), (40, 0.25));
        assert_eq!(spec.replications, Some(vec![3, 4]));
        let cells = spec.cells();
        assert_eq!(cells.len(), 2);
        assert_eq!(spec.resolve_with(&cells[1]).unwrap().query.ttl, 2);
    }

    #[test]
    fn unknown_axes_and_duplicate_seeds_fail() {
        assert!(ExperimentSpec::parse("[sweep]\n\"query.nope\" = [1]").is_err());
        assert!(ExperimentSpec::parse("[sweep]\n\"query.ttl\" = []").is_err());
        assert!(ExperimentSpec::parse("replications = [1, 1]").is_err());
        assert!(ExperimentSpec::empty().set("dataset.kind.x", parse_value("1")).is_err());
    }

    #[test]
    fn values_parse_as_toml_literals() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("planted"), Value::String("planted".into()));
        assert_eq!(parse_axis("query.m=1,2, 3").unwrap().values.len(), 3);
    }

    #[test]
    fn product_orders_first_axis_outermost() {
        let mut spec = ExperimentSpec::empty();
        spec.add_axis(parse_axis("query.ttl=1,2").unwrap());
        spec.add_axis(parse_axis("query.m=5,6").unwrap());
        let names: Vec<String> = spec.cells().iter().map(|c| describe(c)).collect();
        assert_eq!(names, ["query.ttl=1 query.m=5", "query.ttl=1 query.m=6", "query.ttl=2 query.m=5", "query.ttl=2 query.m=6"]);
    }
}
