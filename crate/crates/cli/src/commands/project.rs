//! Project hidden representations of probe examples and their perturbed
//! variants onto the top two principal directions, for plotting how far
//! synonym and antonym substitutions move inputs in representation space.

use serde_json::json;

use bat_forge_core::eval::{export_representations, pca_project, probe_rng};
use bat_forge_core::model::load_checkpoint;
use bat_forge_core::ModelParams64;

use crate::config::{FlatConfig, RunConfig};
use crate::errors::{CliError, CliResult};
use crate::manifest::OutDir;
use crate::world::build_world;

pub fn run(cfg: &RunConfig, flat: &FlatConfig) -> CliResult<()> {
    let ckpt_path = cfg.required_checkpoint()?;
    let world = build_world(cfg)?;
    let model: ModelParams64 = load_checkpoint(ckpt_path)?;
    model.check_shape(world.vocab.len(), world.vocab.dim(), cfg.task.n_classes())?;

    let mut rng = probe_rng(cfg.seed, 0);
    let export =
        export_representations(&model, &world.eval, &world.tables, cfg.probe_size, &mut rng)?;
    let projection = pca_project(&export.rows)?;

    let report = json!({
        "rows": projection.points.len(),
        "rank_deficient": projection.rank_deficient,
        "skipped_obstinate": export.skipped_obstinate.len(),
    });
    let mut report_text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::runtime(format!("cannot encode summary: {e}")))?;
    report_text.push('\n');

    let mut out = OutDir::create(&cfg.out_dir, "project")?;
    out.write("projection.csv", projection.to_csv().as_bytes())?;
    out.write("projection_summary.json", report_text.as_bytes())?;
    out.write("effective_config.json", flat.to_json_pretty().as_bytes())?;

    println!(
        "projected {} representation rows ({} examples lacked an antonym variant)",
        projection.points.len(),
        export.skipped_obstinate.len()
    );
    if projection.rank_deficient {
        println!("note: representations span fewer than two directions; collapsed axes are zero");
    }
    out.finish()
}
