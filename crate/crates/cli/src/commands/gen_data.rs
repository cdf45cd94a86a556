//! Generate the synthetic task and persist it in the loadable text
//! formats: embeddings, the three lexicon files, both splits, and the
//! oracle. A directory written here satisfies `data.dir` for every other
//! command.

use bat_forge_core::data::{generate_toy_dataset, save_dataset_tsv, Dataset};
use bat_forge_core::lexicon::{SubstitutionTables, WILDCARD_POS};
use bat_forge_core::Vocabulary64;

use crate::config::{FlatConfig, RunConfig};
use crate::errors::{CliError, CliResult};
use crate::manifest::OutDir;

fn render_embeddings(vocab: &Vocabulary64) -> String {
    let mut out = String::new();
    for id in 0..vocab.len() {
        out.push_str(vocab.word(id));
        for x in vocab.vector(id) {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

fn render_antonyms(vocab: &Vocabulary64, tables: &SubstitutionTables) -> String {
    let mut out = String::new();
    for (id, ants) in tables.antonyms.iter().enumerate() {
        if ants.is_empty() {
            continue;
        }
        let list: Vec<&str> = ants.iter().map(|&a| vocab.word(a)).collect();
        out.push_str(&format!("{}\t{}\n", vocab.word(id), list.join(",")));
    }
    out
}

fn render_pos(vocab: &Vocabulary64, tables: &SubstitutionTables) -> String {
    let mut out = String::new();
    for (id, tag) in tables.pos.iter().enumerate() {
        if tag == WILDCARD_POS {
            continue;
        }
        out.push_str(&format!("{}\t{}\n", vocab.word(id), tag));
    }
    out
}

/// Each unordered negation pair appears once; the loader restores both
/// directions.
fn render_negation(vocab: &Vocabulary64, tables: &SubstitutionTables) -> String {
    let mut out = String::new();
    for (&a, &b) in tables.negation.iter() {
        if a < b {
            out.push_str(&format!("{}\t{}\n", vocab.word(a), vocab.word(b)));
        }
    }
    out
}

fn label_counts(data: &Dataset) -> Vec<usize> {
    let mut counts = vec![0usize; data.n_classes];
    for ex in data.iter() {
        counts[ex.label] += 1;
    }
    counts
}

pub fn run(cfg: &RunConfig, flat: &FlatConfig) -> CliResult<()> {
    if cfg.data_dir.is_some() {
        return Err(CliError::validation(
            "gen-data regenerates the synthetic task; unset `data.dir`".to_string(),
        ));
    }
    let world = generate_toy_dataset::<f64>(&cfg.toy, cfg.n_train, cfg.n_eval)?;

    let mut out = OutDir::create(&cfg.out_dir, "gen-data")?;
    out.write("embeddings.txt", render_embeddings(&world.vocab).as_bytes())?;
    out.write(
        "antonyms.txt",
        render_antonyms(&world.vocab, &world.tables).as_bytes(),
    )?;
    out.write(
        "pos.txt",
        render_pos(&world.vocab, &world.tables).as_bytes(),
    )?;
    out.write(
        "negation.txt",
        render_negation(&world.vocab, &world.tables).as_bytes(),
    )?;

    save_dataset_tsv(&out.path("train.tsv"), &world.train, &world.vocab)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    out.record("train.tsv")?;
    save_dataset_tsv(&out.path("eval.tsv"), &world.eval, &world.vocab)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    out.record("eval.tsv")?;

    let mut oracle_json = serde_json::to_string_pretty(&world.oracle)
        .map_err(|e| CliError::runtime(format!("cannot encode oracle: {e}")))?;
    oracle_json.push('\n');
    out.write("oracle.json", oracle_json.as_bytes())?;
    out.write("effective_config.json", flat.to_json_pretty().as_bytes())?;

    println!(
        "generated {} task into {}",
        cfg.task.name(),
        out.root().display()
    );
    println!(
        "  vocabulary: {} words, dim {}",
        world.vocab.len(),
        world.vocab.dim()
    );
    println!(
        "  train: {} examples, label counts {:?}",
        world.train.len(),
        label_counts(&world.train)
    );
    println!(
        "  eval: {} examples, label counts {:?}",
        world.eval.len(),
        label_counts(&world.eval)
    );
    out.finish()
}
