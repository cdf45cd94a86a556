//! Grid sweep over training hyperparameters. Each grid cell trains a
//! fresh model under its overridden config and contributes its
//! final-epoch metrics as one row of `sweep.csv`.
//!
//! Cells are keyed by a hash of their overrides and flushed to
//! `cells/<key>.json` as they finish, so an interrupted sweep resumes by
//! skipping every cell whose file already exists; rerunning a finished
//! sweep executes nothing and just rebuilds the CSV.

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use bat_forge_core::eval::{EvalContext, MetricsRecord};
use bat_forge_core::model::init_model;
use bat_forge_core::training::train;

use crate::config::{FlatConfig, RunConfig};
use crate::errors::{CliError, CliResult};
use crate::manifest::{sha256_hex, OutDir};
use crate::world::build_world;

/// Environment variable capping worker threads; unset means 1.
pub const THREADS_VAR: &str = "BAT_FORGE_THREADS";

const SWEEPABLE: [&str; 7] = [
    "alpha",
    "beta",
    "lambda",
    "margin",
    "batch_size",
    "regime",
    "seed",
];

fn flat_key(param: &str) -> &'static str {
    match param {
        "alpha" => "train.alpha",
        "beta" => "train.beta",
        "lambda" => "train.lambda",
        "margin" => "train.margin",
        "batch_size" => "train.batch_size",
        "regime" => "train.regime",
        "seed" => "seed",
        other => unreachable!("unvalidated sweep parameter {other}"),
    }
}

struct Cell {
    key: String,
    overrides: BTreeMap<String, Value>,
}

/// Persisted result of one cell: the overrides that produced it, the
/// effective values of every sweepable parameter, and the final metrics.
#[derive(Debug, Serialize, Deserialize)]
struct CellRecord {
    key: String,
    overrides: BTreeMap<String, Value>,
    params: CellParams,
    record: MetricsRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct CellParams {
    regime: String,
    seed: u64,
    alpha: f64,
    beta: f64,
    lambda: f64,
    margin: f64,
    batch_size: usize,
}

pub const SWEEP_CSV_HEADER: &str = "cell,regime,seed,alpha,beta,lambda,margin,batch_size,\
epoch,accuracy,synonym_asr,antonym_asr,negation_asr,mean_d_f,mean_d_o";

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(c: &CellRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        c.key,
        c.params.regime,
        c.params.seed,
        c.params.alpha,
        c.params.beta,
        c.params.lambda,
        c.params.margin,
        c.params.batch_size,
        c.record.epoch,
        c.record.accuracy,
        csv_opt(c.record.synonym_asr),
        csv_opt(c.record.antonym_asr),
        csv_opt(c.record.negation_asr),
        csv_opt(c.record.mean_d_f),
        csv_opt(c.record.mean_d_o),
    )
}

/// Grid cells in a stable order: parameters alphabetical, values in
/// listed order, later parameters cycling fastest.
fn enumerate_cells(flat: &FlatConfig) -> CliResult<Vec<Cell>> {
    let grid = flat.object("sweep.grid")?;
    if grid.is_empty() {
        return Err(CliError::validation(
            "config key `sweep.grid` is empty; list at least one parameter to sweep".to_string(),
        ));
    }
    let mut axes: Vec<(String, Vec<Value>)> = Vec::new();
    for (param, values) in grid {
        if !SWEEPABLE.contains(&param.as_str()) {
            return Err(CliError::validation(format!(
                "config key `sweep.grid`: cannot sweep `{param}` (allowed: {})",
                SWEEPABLE.join(", ")
            )));
        }
        let arr = values.as_array().ok_or_else(|| {
            CliError::validation(format!(
                "config key `sweep.grid`: `{param}` must map to an array of values"
            ))
        })?;
        if arr.is_empty() {
            return Err(CliError::validation(format!(
                "config key `sweep.grid`: `{param}` has no values"
            )));
        }
        axes.push((param.clone(), arr.clone()));
    }

    let mut combos: Vec<BTreeMap<String, Value>> = vec![BTreeMap::new()];
    for (param, values) in &axes {
        let mut next = Vec::with_capacity(combos.len() * values.len());
        for partial in &combos {
            for v in values {
                let mut m = partial.clone();
                m.insert(param.clone(), v.clone());
                next.push(m);
            }
        }
        combos = next;
    }

    Ok(combos
        .into_iter()
        .map(|overrides| {
            let canonical =
                serde_json::to_string(&overrides).expect("override map always serializes");
            let key = sha256_hex(canonical.as_bytes())[..16].to_string();
            Cell { key, overrides }
        })
        .collect())
}

fn worker_threads(pending: usize) -> CliResult<usize> {
    let cap = match env::var(THREADS_VAR) {
        Err(_) => 1,
        Ok(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                CliError::validation(format!(
                    "environment variable {THREADS_VAR} must be a positive integer, got `{raw}`"
                ))
            })?,
    };
    Ok(cap.min(pending).max(1))
}

/// Trains one cell and returns its record. Only the final epoch is
/// evaluated; the evaluation cadence does not alter the trajectory, so
/// the result matches a per-epoch-evaluated run of the same cell.
fn run_cell(base: &FlatConfig, cell: &Cell) -> CliResult<CellRecord> {
    let mut flat = base.clone();
    for (param, value) in &cell.overrides {
        flat.set(flat_key(param), value.clone())?;
    }
    let epochs = flat.usize("train.epochs")?;
    flat.set("train.eval_every", json!(epochs))?;

    let cfg = RunConfig::parse(&flat)?;
    let world = build_world(&cfg)?;
    let mut model = init_model(
        &world.vocab,
        cfg.hidden,
        cfg.task.n_classes(),
        cfg.train_embedding,
        cfg.seed,
    )?;
    let ctx = EvalContext {
        tables: &world.tables,
        vocab: &world.vocab,
        oracle: world.oracle.as_ref(),
        attack_cfg: cfg.attack,
        probe_size: cfg.probe_size,
    };
    let records = train(
        &cfg.train,
        &world.train,
        &world.eval,
        &mut model,
        &ctx,
        |_| {},
    )?;
    let record = records
        .into_iter()
        .last()
        .ok_or_else(|| CliError::runtime("training produced no evaluation record".to_string()))?;

    Ok(CellRecord {
        key: cell.key.clone(),
        overrides: cell.overrides.clone(),
        params: CellParams {
            regime: flat.str("train.regime")?.to_string(),
            seed: flat.u64("seed")?,
            alpha: flat.f64("train.alpha")?,
            beta: flat.f64("train.beta")?,
            lambda: flat.f64("train.lambda")?,
            margin: flat.f64("train.margin")?,
            batch_size: flat.usize("train.batch_size")?,
        },
        record,
    })
}

pub fn run(cfg: &RunConfig, flat: &FlatConfig) -> CliResult<()> {
    let cells = enumerate_cells(flat)?;
    let mut out = OutDir::create(&cfg.out_dir, "sweep")?;
    let cells_dir = out.path("cells");
    fs::create_dir_all(&cells_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", cells_dir.display())))?;

    let pending: Vec<&Cell> = cells
        .iter()
        .filter(|c| !cells_dir.join(format!("{}.json", c.key)).is_file())
        .collect();
    let executed = pending.len();
    let skipped = cells.len() - executed;
    let threads = worker_threads(executed)?;

    let queue: Mutex<Vec<&Cell>> = Mutex::new(pending.iter().rev().copied().collect());
    let failures: Mutex<Vec<CliError>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let cell = match queue.lock().expect("queue lock").pop() {
                    Some(c) => c,
                    None => break,
                };
                match run_cell(flat, cell) {
                    Ok(record) => {
                        let written = serde_json::to_string_pretty(&record)
                            .map_err(|e| {
                                CliError::runtime(format!("cannot encode cell record: {e}"))
                            })
                            .and_then(|mut text| {
                                text.push('\n');
                                let path = cells_dir.join(format!("{}.json", cell.key));
                                fs::write(&path, text.as_bytes()).map_err(|e| {
                                    CliError::runtime(format!(
                                        "cannot write {}: {e}",
                                        path.display()
                                    ))
                                })
                            });
                        match written {
                            Ok(()) => {
                                let shown =
                                    serde_json::to_string(&cell.overrides).unwrap_or_default();
                                println!(
                                    "cell {} {}: acc {:.4}",
                                    cell.key, shown, record.record.accuracy
                                );
                            }
                            Err(e) => failures.lock().expect("failure lock").push(e),
                        }
                    }
                    Err(e) => failures
                        .lock()
                        .expect("failure lock")
                        .push(CliError::runtime(format!("cell {}: {e}", cell.key))),
                }
            });
        }
    });
    if let Some(first) = failures
        .into_inner()
        .expect("failure lock")
        .into_iter()
        .next()
    {
        return Err(first);
    }

    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for cell in &cells {
        let rel = format!("cells/{}.json", cell.key);
        let path = out.path(&rel);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
        let record: CellRecord = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("malformed {}: {e}", path.display())))?;
        if record.overrides != cell.overrides {
            return Err(CliError::validation(format!(
                "{} holds overrides {:?}, expected {:?}; clear stale cells",
                path.display(),
                record.overrides,
                cell.overrides
            )));
        }
        csv.push_str(&csv_row(&record));
        csv.push('\n');
        out.record(&rel)?;
    }
    out.write("sweep.csv", csv.as_bytes())?;
    out.write("effective_config.json", flat.to_json_pretty().as_bytes())?;

    println!(
        "sweep: {} cells total, executed {executed}, reused {skipped}",
        cells.len()
    );
    out.finish()
}
