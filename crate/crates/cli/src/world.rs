//! Dataset, vocabulary and substitution tables for one run. Without
//! `data.dir` the synthetic task is regenerated from the seed, so the
//! oracle is always available; with it, everything is loaded from a
//! directory written by `gen-data` (or assembled by hand in the same
//! formats), and the oracle is only present when `oracle.json` exists.

use std::fs;
use std::path::Path;

use bat_forge_core::data::generate_toy_dataset;
use bat_forge_core::data::{load_dataset_tsv, Dataset, ToyOracle};
use bat_forge_core::lexicon::{build_tables, load_embedding_table, SubstitutionTables};
use bat_forge_core::Vocabulary64;

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};

pub struct World {
    pub vocab: Vocabulary64,
    pub tables: SubstitutionTables,
    pub oracle: Option<ToyOracle>,
    pub train: Dataset,
    pub eval: Dataset,
}

pub fn build_world(cfg: &RunConfig) -> CliResult<World> {
    match &cfg.data_dir {
        None => {
            let world = generate_toy_dataset::<f64>(&cfg.toy, cfg.n_train, cfg.n_eval)?;
            Ok(World {
                vocab: world.vocab,
                tables: world.tables,
                oracle: Some(world.oracle),
                train: world.train,
                eval: world.eval,
            })
        }
        Some(dir) => load_world(cfg, dir),
    }
}

fn load_world(cfg: &RunConfig, dir: &Path) -> CliResult<World> {
    let vocab = load_embedding_table::<f64>(&dir.join("embeddings.txt"))?;
    let (tables, warnings) = build_tables(
        &vocab,
        &cfg.lexicon,
        &dir.join("antonyms.txt"),
        &dir.join("pos.txt"),
        &dir.join("negation.txt"),
    )?;
    let dropped = warnings.antonym + warnings.pos + warnings.negation;
    if dropped > 0 {
        eprintln!(
            "warning: {dropped} lexicon entries dropped ({} antonym, {} pos, {} negation)",
            warnings.antonym, warnings.pos, warnings.negation
        );
    }
    let n_classes = cfg.task.n_classes();
    let train = load_dataset_tsv(&dir.join("train.tsv"), &vocab, n_classes)?;
    let eval = load_dataset_tsv(&dir.join("eval.tsv"), &vocab, n_classes)?;

    let oracle_path = dir.join("oracle.json");
    let oracle = if oracle_path.is_file() {
        let text = fs::read_to_string(&oracle_path).map_err(|e| {
            CliError::validation(format!("cannot read {}: {e}", oracle_path.display()))
        })?;
        let oracle: ToyOracle = serde_json::from_str(&text).map_err(|e| {
            CliError::validation(format!("malformed {}: {e}", oracle_path.display()))
        })?;
        if oracle.task != cfg.task {
            return Err(CliError::validation(format!(
                "oracle in {} is for task {}, config says {}",
                oracle_path.display(),
                oracle.task.name(),
                cfg.task.name()
            )));
        }
        if oracle.cluster_of.len() != vocab.len() {
            return Err(CliError::validation(format!(
                "oracle in {} covers {} words, vocabulary has {}",
                oracle_path.display(),
                oracle.cluster_of.len(),
                vocab.len()
            )));
        }
        Some(oracle)
    } else {
        None
    };

    Ok(World {
        vocab,
        tables,
        oracle,
        train,
        eval,
    })
}
