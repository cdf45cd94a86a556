//! Full evaluation of a checkpoint: accuracy, the three attack success
//! rates with eligibility counts, and the representation distance probe.
//! The per-example outcome logs for each attack are persisted alongside
//! the summary so every rate can be audited.

use bat_forge_core::attack::AttackKind;
use bat_forge_core::eval::{evaluate_checkpoint, probe_rng, run_attacks, EvalContext};
use bat_forge_core::model::load_checkpoint;
use bat_forge_core::ModelParams64;

use crate::commands::train::{metrics_csv, print_record};
use crate::config::{FlatConfig, RunConfig};
use crate::errors::{CliError, CliResult};
use crate::manifest::OutDir;
use crate::world::build_world;

pub fn run(cfg: &RunConfig, flat: &FlatConfig) -> CliResult<()> {
    let ckpt_path = cfg.required_checkpoint()?;
    let world = build_world(cfg)?;
    if cfg.attack.oracle_check && world.oracle.is_none() {
        return Err(CliError::validation(
            "config key `attack.oracle_check` needs an oracle; this data directory has no oracle.json"
                .to_string(),
        ));
    }
    let model: ModelParams64 = load_checkpoint(ckpt_path)?;
    model.check_shape(world.vocab.len(), world.vocab.dim(), cfg.task.n_classes())?;

    let ctx = EvalContext {
        tables: &world.tables,
        vocab: &world.vocab,
        oracle: world.oracle.as_ref(),
        attack_cfg: cfg.attack,
        probe_size: cfg.probe_size,
    };
    let mut rng = probe_rng(cfg.seed, 0);
    let record = evaluate_checkpoint(
        &model,
        &world.eval,
        &ctx,
        0,
        cfg.train.regime.name(),
        &mut rng,
    )?;

    let mut out = OutDir::create(&cfg.out_dir, "eval")?;

    // The attacks draw no randomness, so rerunning them per kind yields
    // exactly the outcomes behind the record's rates.
    for kind in [
        AttackKind::Synonym,
        AttackKind::Antonym,
        AttackKind::Negation,
    ] {
        let outcomes = run_attacks(
            kind,
            &model,
            &world.eval,
            &cfg.attack,
            &world.tables,
            &world.vocab,
            world.oracle.as_ref(),
        )?;
        let mut ndjson = String::new();
        for outcome in &outcomes {
            let line = serde_json::to_string(outcome)
                .map_err(|e| CliError::runtime(format!("cannot encode outcome: {e}")))?;
            ndjson.push_str(&line);
            ndjson.push('\n');
        }
        out.write(&format!("{}.ndjson", kind.name()), ndjson.as_bytes())?;
    }

    let mut record_text = serde_json::to_string_pretty(&record)
        .map_err(|e| CliError::runtime(format!("cannot encode record: {e}")))?;
    record_text.push('\n');
    out.write("eval.json", record_text.as_bytes())?;
    out.write(
        "metrics.csv",
        metrics_csv(std::slice::from_ref(&record)).as_bytes(),
    )?;
    out.write("effective_config.json", flat.to_json_pretty().as_bytes())?;

    print_record(&record);
    out.finish()
}
