use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use strata_core::profile::{read_profiles, read_taxonomy, write_profiles, write_taxonomy, Profile};
use strata_core::sim::{read_jsonl, summarize, Dataset, Record, RunOutput, SimConfig, Simulation, Summary};
use strata_core::{Exec, PeerId};

use crate::spec::{describe, ExperimentSpec, DEFAULT_SWEEP_SEEDS};
use crate::table::{print_aggregate, print_rows};
use crate::CliError;

pub const GEN_DEFAULT_PEERS: usize = 5000;
const METRICS_SUFFIX: &str = ".metrics.jsonl";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Unwritable { path: dir.to_path_buf(), source })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let unwritable = |source| CliError::Unwritable { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(unwritable)?);
    f(&mut w).and_then(|_| w.flush()).map_err(unwritable)
}

fn core_io(e: strata_core::Error) -> std::io::Error {
    match e {
        strata_core::Error::Io(e) => e,
        other => std::io::Error::other(other.to_string()),
    }
}

pub fn gen_dataset(cfg: &SimConfig, out: &Path) -> Result<(), CliError> {
    let ds = Dataset::generate(&cfg.dataset, cfg.n_peers, cfg.seed).map_err(|e| CliError::Spec(e.to_string()))?;
    ensure_dir(out)?;
    let tax_path = out.join("taxonomy.txt");
    let prof_path = out.join("profiles.txt");
    write_with(&tax_path, |w| {
        writeln!(w, "# seed {}", cfg.seed)?;
        write_taxonomy(&ds.taxonomy, w).map_err(core_io)
    })?;
    let numbered: Vec<(PeerId, Profile)> =
        ds.profiles.iter().enumerate().map(|(i, p)| (PeerId(i as u64), p.clone())).collect();
    write_with(&prof_path, |w| {
        writeln!(w, "# seed {}", cfg.seed)?;
        write_profiles(&numbered, w).map_err(core_io)
    })?;

    println!("seed            {}", cfg.seed);
    println!("labels          {}", ds.taxonomy.len());
    println!("leaves          {}", ds.taxonomy.leaves().len());
    println!("depth           {}", ds.taxonomy.max_depth());
    println!("profiles        {}", ds.profiles.len());
    let weights: Vec<f64> = ds.profiles.iter().flat_map(|p| p.weights().iter().map(|&(_, w)| w)).collect();
    let mean_len = weights.len() as f64 / ds.profiles.len().max(1) as f64;
    println!("labels/profile  {mean_len:.2}");
    println!("weight histogram");
    let max = weights.iter().copied().fold(0.0, f64::max);
    let bins = 10;
    let mut counts = vec![0usize; bins];
    for w in &weights {
        counts[(((w / max) * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let peak = counts.iter().copied().max().unwrap_or(1).max(1);
    for (i, c) in counts.iter().enumerate() {
        let lo = max * i as f64 / bins as f64;
        let hi = max * (i + 1) as f64 / bins as f64;
        println!("  [{lo:>6.3}, {hi:>6.3})  {c:>7}  {}", "#".repeat(c * 40 / peak));
    }
    println!("wrote {} and {}", tax_path.display(), prof_path.display());
    Ok(())
}

fn load_dataset(dir: &Path, cfg: &mut SimConfig) -> Result<Dataset, CliError> {
    let open = |name: &str| {
        let path = dir.join(name);
        File::open(&path)
            .map(BufReader::new)
            .map_err(|e| CliError::Input { path: path.clone(), source: strata_core::Error::Io(e) })
            .map(|r| (path, r))
    };
    let (tp, tr) = open("taxonomy.txt")?;
    let taxonomy = read_taxonomy(tr).map_err(|source| CliError::Input { path: tp, source })?;
    let (pp, pr) = open("profiles.txt")?;
    let mut profiles = read_profiles(pr).map_err(|source| CliError::Input { path: pp.clone(), source })?;
    profiles.sort_by_key(|(id, _)| *id);
    cfg.n_peers = profiles.len();
    let profiles = profiles.into_iter().map(|(_, p)| p).collect();
    Dataset::from_parts(taxonomy, profiles, &cfg.dataset, cfg.seed).map_err(|source| CliError::Input { path: pp, source })
}

/// One simulation: writes its metrics stream, reads it back and checks the
/// summary survives the round trip.
fn execute(cfg: SimConfig, dataset: Option<&Path>, path: &Path) -> Result<Summary, CliError> {
    let output: RunOutput = match dataset {
        Some(dir) => {
            let mut cfg = cfg;
            let ds = load_dataset(dir, &mut cfg)?;
            let cycles = cfg.cycles;
            let mut sim = Simulation::with_dataset(cfg, ds).map_err(|e| CliError::Spec(e.to_string()))?;
            sim.run_cycles(cycles);
            sim.finish()
        }
        None => Simulation::run(cfg).map_err(|e| CliError::Spec(e.to_string()))?,
    };
    write_with(path, |w| output.write_jsonl(w).map_err(core_io))?;
    let direct: Vec<Record> = output.records().collect();
    let summary = summarize(&direct).map_err(|e| CliError::Output(e.to_string()))?;
    let reread = File::open(path)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
        .and_then(|f| read_jsonl(BufReader::new(f)).map_err(|e| CliError::Output(format!("{}: {e}", path.display()))))?;
    let again = summarize(&reread).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    if again != summary {
        return Err(CliError::Output(format!("{} does not reproduce its summary", path.display())));
    }
    if !summary.conservation_ok {
        return Err(CliError::Output(format!("seed {}: message counts do not balance", summary.seed)));
    }
    Ok(summary)
}

fn seeded(mut cfg: SimConfig, seed: u64) -> SimConfig {
    cfg.seed = seed;
    cfg
}

#[derive(Serialize)]
struct SweepRow<'a> {
    cell: toml::Table,
    #[serde(flatten)]
    summary: &'a Summary,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    write_with(path, |w| {
        for r in rows {
            serde_json::to_writer(&mut *w, r).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn run(spec: &ExperimentSpec, dataset: Option<&Path>, out: &Path, exec: Exec) -> Result<(), CliError> {
    let base = spec.resolve()?;
    let seeds = spec.replications.clone().unwrap_or_else(|| vec![base.seed]);
    for &s in &seeds {
        seeded(base.clone(), s).validate().map_err(|e| CliError::Spec(e.to_string()))?;
    }
    ensure_dir(out)?;
    let summaries: Vec<Summary> = exec
        .map(&seeds, |&s| execute(seeded(base.clone(), s), dataset, &out.join(format!("run-seed{s}{METRICS_SUFFIX}"))))
        .into_iter()
        .collect::<Result<_, _>>()?;
    write_rows(&out.join("summary.jsonl"), &summaries)?;
    let labelled: Vec<(String, &Summary)> = summaries.iter().map(|s| (format!("seed {}", s.seed), s)).collect();
    print_rows(&labelled);
    print_aggregate("all seeds", &summaries);
    Ok(())
}

pub fn sweep(spec: &ExperimentSpec, out: &Path, exec: Exec) -> Result<(), CliError> {
    let seeds = spec.replications.clone().unwrap_or_else(|| DEFAULT_SWEEP_SEEDS.to_vec());
    let cells = spec.cells();
    let mut jobs = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        let cfg = spec.resolve_with(cell)?;
        for &s in &seeds {
            let cfg = seeded(cfg.clone(), s);
            cfg.validate().map_err(|e| CliError::Spec(format!("{}: {e}", describe(cell))))?;
            jobs.push((ci, cfg));
        }
    }
    let dir = out.join("sweep");
    ensure_dir(&dir)?;
    let summaries: Vec<Summary> = exec
        .map(&jobs, |(ci, cfg)| {
            execute(cfg.clone(), None, &dir.join(format!("cell{ci:03}-seed{}{METRICS_SUFFIX}", cfg.seed)))
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
    let rows: Vec<SweepRow<'_>> = jobs
        .iter()
        .zip(&summaries)
        .map(|((ci, _), s)| SweepRow { cell: cells[*ci].iter().cloned().collect(), summary: s })
        .collect();
    write_rows(&out.join("sweep.jsonl"), &rows)?;
    let labelled: Vec<(String, &Summary)> =
        jobs.iter().zip(&summaries).map(|((ci, _), s)| (format!("{} seed {}", describe(&cells[*ci]), s.seed), s)).collect();
    print_rows(&labelled);
    for (ci, cell) in cells.iter().enumerate() {
        let group: Vec<Summary> =
            jobs.iter().zip(&summaries).filter(|((c, _), _)| *c == ci).map(|(_, s)| s.clone()).collect();
        print_aggregate(&describe(cell), &group);
    }
    Ok(())
}

fn metrics_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| CliError::Input { path: p.clone(), source: strata_core::Error::Io(e) })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.to_string_lossy().ends_with(METRICS_SUFFIX))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Spec("no metrics files found".into()));
    }
    Ok(files)
}

pub fn report(inputs: &[PathBuf], json: bool) -> Result<(), CliError> {
    let files = metrics_files(inputs)?;
    let mut rows = Vec::new();
    for f in &files {
        let input = |source| CliError::Input { path: f.clone(), source };
        let file = File::open(f).map_err(|e| input(strata_core::Error::Io(e)))?;
        let records = read_jsonl(BufReader::new(file)).map_err(input)?;
        rows.push(summarize(&records).map_err(input)?);
    }
    if json {
        for r in &rows {
            println!("{}", serde_json::to_string(r).expect("summaries serialize"));
        }
        return Ok(());
    }
    let labelled: Vec<(String, &Summary)> = files
        .iter()
        .zip(&rows)
        .map(|(f, s)| {
            let name = f.file_name().map_or_else(|| f.display().to_string(), |n| n.to_string_lossy().into_owned());
            (name.trim_end_matches(METRICS_SUFFIX).to_string(), s)
        })
        .collect();
    print_rows(&labelled);
    print_aggregate("all files", &rows);
    Ok(())
}
