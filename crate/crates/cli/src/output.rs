use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use riebo::solvers::IterRecord;
use serde::Serialize;

use crate::config::RunConfig;
use crate::runner::SeedRun;
use crate::CliError;

pub const HEADER: &str = "iter,cpu_seconds,objective,grad_norm,inner_residual";

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_rows(path: &Path, rows: impl Iterator<Item = [f64; 4]>, iters: impl Iterator<Item = usize>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{HEADER}").map_err(io(path))?;
    for (k, [t, obj, g, r]) in iters.zip(rows) {
        writeln!(w, "{k},{t},{obj},{g},{r}").map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn write_trace(path: &Path, records: &[IterRecord]) -> Result<(), CliError> {
    write_rows(
        path,
        records.iter().map(|r| [r.elapsed_s, r.objective, r.grad_norm, r.inner_residual]),
        records.iter().map(|r| r.k),
    )
}

/// Per-iteration means over seeds, for the iterations every seed recorded.
pub fn write_aggregate(path: &Path, runs: &[SeedRun]) -> Result<(), CliError> {
    let rows = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    let m = runs.len() as f64;
    let mean = |i: usize, f: fn(&IterRecord) -> f64| runs.iter().map(|r| f(&r.records[i])).sum::<f64>() / m;
    write_rows(
        path,
        (0..rows).map(|i| {
            [
                mean(i, |r| r.elapsed_s),
                mean(i, |r| r.objective),
                mean(i, |r| r.grad_norm),
                mean(i, |r| r.inner_residual),
            ]
        }),
        (0..rows).map(|i| runs[0].records[i].k),
    )
}

#[derive(Serialize)]
struct Metadata<'a> {
    build: &'static str,
    config: &'a RunConfig,
    threads: usize,
    runs: &'a [SeedRun],
}

pub fn trace_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

/// Writes every trace, the aggregate and the metadata document.
pub fn write_outputs(cfg: &RunConfig, runs: &[SeedRun], threads: usize) -> Result<(), CliError> {
    let dir = cfg.out.as_path();
    fs::create_dir_all(dir).map_err(io(dir))?;
    for run in runs {
        write_trace(&dir.join(trace_name(run.seed)), &run.records)?;
    }
    write_aggregate(&dir.join("aggregate.csv"), runs)?;
    let meta = Metadata {
        build: BUILD_ID,
        config: cfg,
        threads,
        runs,
    };
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io(&path))
}
