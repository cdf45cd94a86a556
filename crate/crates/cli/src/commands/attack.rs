//! Run one attack over the eval split of a trained checkpoint. Every
//! outcome lands in `attacks.ndjson`, one JSON object per line, so the
//! reported success rate can be recomputed from the log alone.

use serde_json::json;

use bat_forge_core::eval::{asr_from_outcomes, run_attacks};
use bat_forge_core::model::load_checkpoint;
use bat_forge_core::ModelParams64;

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

    let outcomes = run_attacks(
        cfg.attack_kind,
        &model,
        &world.eval,
        &cfg.attack,
        &world.tables,
        &world.vocab,
        world.oracle.as_ref(),
    )?;

    let summary = asr_from_outcomes(&outcomes);
    let queries_total: usize = outcomes.iter().map(|o| o.queries).sum();

    let mut ndjson = String::new();
    for outcome in &outcomes {
        let line = serde_json::to_string(outcome)
            .map_err(|e| CliError::runtime(format!("cannot encode outcome: {e}")))?;
        ndjson.push_str(&line);
        ndjson.push('\n');
    }

    let report = json!({
        "attack": cfg.attack_kind.name(),
        "total": outcomes.len(),
        "eligible": summary.eligible,
        "successes": summary.successes,
        "success_rate": summary.rate(),
        "queries_total": queries_total,
    });
    let mut report_text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::runtime(format!("cannot encode summary: {e}")))?;
    report_text.push('\n');

    let mut out = OutDir::create(&cfg.out_dir, "attack")?;
    out.write("attacks.ndjson", ndjson.as_bytes())?;
    out.write("attack_summary.json", report_text.as_bytes())?;
    out.write("effective_config.json", flat.to_json_pretty().as_bytes())?;

    match summary.rate() {
        Some(rate) => println!(
            "{} attack: {}/{} eligible examples flipped ({:.4}), {} model queries",
            cfg.attack_kind.name(),
            summary.successes,
            summary.eligible,
            rate,
            queries_total
        ),
        None => println!(
            "{} attack: no eligible examples, success rate undefined",
            cfg.attack_kind.name()
        ),
    }
    out.finish()
}
