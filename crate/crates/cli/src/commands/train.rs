//! Train one model under the configured regime, printing a metrics line
//! per recorded epoch. Artifacts: `checkpoint.bin`, `metrics.csv`,
//! `effective_config.json`, `manifest.json`.

use bat_forge_core::eval::{EvalContext, MetricsRecord, METRICS_CSV_HEADER};
use bat_forge_core::model::{init_model, save_checkpoint};
use bat_forge_core::training::train;

use crate::config::{FlatConfig, RunConfig};
use crate::errors::{CliError, CliResult};
use crate::manifest::OutDir;
use crate::world::build_world;

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}"))
        .unwrap_or_else(|| "-".to_string())
}

pub fn print_record(r: &MetricsRecord) {
    println!(
        "epoch {:>3}  acc {:.4}  syn_asr {}  ant_asr {}  neg_asr {}  d_f {}  d_o {}",
        r.epoch,
        r.accuracy,
        opt_cell(r.synonym_asr),
        opt_cell(r.antonym_asr),
        opt_cell(r.negation_asr),
        opt_cell(r.mean_d_f),
        opt_cell(r.mean_d_o),
    );
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut text = String::from(METRICS_CSV_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    text
}

pub fn run(cfg: &RunConfig, flat: &FlatConfig) -> CliResult<()> {
    let world = build_world(cfg)?;
    if cfg.attack.oracle_check && world.oracle.is_none() {
        return Err(CliError::validation(
            "config key `attack.oracle_check` needs an oracle; this data directory has no oracle.json"
                .to_string(),
        ));
    }
    let n_classes = cfg.task.n_classes();
    let mut model = init_model(
        &world.vocab,
        cfg.hidden,
        n_classes,
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

    println!(
        "training regime {} for {} epochs on {} examples",
        cfg.train.regime.name(),
        cfg.train.epochs,
        world.train.len()
    );
    let records = train(
        &cfg.train,
        &world.train,
        &world.eval,
        &mut model,
        &ctx,
        print_record,
    )?;

    let mut out = OutDir::create(&cfg.out_dir, "train")?;
    save_checkpoint(&model, &out.path("checkpoint.bin"))
        .map_err(|e| CliError::runtime(e.to_string()))?;
    out.record("checkpoint.bin")?;
    out.write("metrics.csv", metrics_csv(&records).as_bytes())?;
    out.write("effective_config.json", flat.to_json_pretty().as_bytes())?;

    println!(
        "saved checkpoint and {} metric rows to {}",
        records.len(),
        out.root().display()
    );
    out.finish()
}
