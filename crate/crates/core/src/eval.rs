//! Model evaluation: accuracy, attack success rates with auditable
//! denominators, per-epoch metrics records, representation distance
//! probes, and a deterministic 2D projection of representations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{
    random_antonym_perturb, random_synonym_perturb, run_attack, AttackConfig, AttackKind,
    AttackOutcome, FailureReason,
};
use crate::classifier::TextClassifier;
use crate::data::{Dataset, Example, ToyOracle};
use crate::error::{Error, Result};
use crate::lexicon::{SubstitutionTables, Vocabulary};
use crate::model::{cosine_distance, ModelParams};
use crate::scalar::{to_f64, Scalar};

/// Fraction of examples whose argmax prediction equals the label.
pub fn accuracy<F: Scalar, C: TextClassifier<F>>(model: &C, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for ex in data.iter() {
        if model.classify(ex)?.predicted() == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Run one attack kind over every example, in dataset order.
pub fn run_attacks<F: Scalar, C: TextClassifier<F>>(
    kind: AttackKind,
    model: &C,
    data: &Dataset,
    cfg: &AttackConfig,
    tables: &SubstitutionTables,
    vocab: &Vocabulary<F>,
    oracle: Option<&ToyOracle>,
) -> Result<Vec<AttackOutcome>> {
    data.iter()
        .map(|ex| run_attack(kind, model, ex, cfg, tables, vocab, oracle))
        .collect()
}

/// Success count over an auditable denominator. Eligible means correctly
/// classified, allowed by the task rule, and owning at least one candidate
/// substitution; constraint and prediction failures stay in the
/// denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsrSummary {
    pub successes: usize,
    pub eligible: usize,
}

impl AsrSummary {
    /// None when no example was eligible, so the rate is undefined rather
    /// than zero.
    pub fn rate(&self) -> Option<f64> {
        if self.eligible == 0 {
            None
        } else {
            Some(self.successes as f64 / self.eligible as f64)
        }
    }
}

/// Recompute the success rate from logged outcomes; replaying a persisted
/// NDJSON log through this function must reproduce the reported ASR.
pub fn asr_from_outcomes(outcomes: &[AttackOutcome]) -> AsrSummary {
    let mut successes = 0;
    let mut eligible = 0;
    for out in outcomes {
        let excluded = matches!(
            out.failure_reason,
            Some(FailureReason::Ineligible) | Some(FailureReason::NoCandidates)
        );
        if excluded {
            continue;
        }
        eligible += 1;
        if out.success {
            successes += 1;
        }
    }
    AsrSummary {
        successes,
        eligible,
    }
}

/// Attack every example and summarize the success rate.
pub fn attack_success_rate<F: Scalar, C: TextClassifier<F>>(
    kind: AttackKind,
    model: &C,
    data: &Dataset,
    cfg: &AttackConfig,
    tables: &SubstitutionTables,
    vocab: &Vocabulary<F>,
    oracle: Option<&ToyOracle>,
) -> Result<AsrSummary> {
    let outcomes = run_attacks(kind, model, data, cfg, tables, vocab, oracle)?;
    Ok(asr_from_outcomes(&outcomes))
}

/// One evaluation snapshot of a model. Optional fractions are None when
/// their denominator was empty (and the negation rate additionally when
/// no negation lexicon is in play).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub regime: String,
    pub accuracy: f64,
    pub synonym_asr: Option<f64>,
    pub antonym_asr: Option<f64>,
    pub negation_asr: Option<f64>,
    pub synonym_eligible: usize,
    pub antonym_eligible: usize,
    pub negation_eligible: usize,
    pub mean_d_f: Option<f64>,
    pub mean_d_o: Option<f64>,
}

pub const METRICS_CSV_HEADER: &str =
    "epoch,regime,accuracy,synonym_asr,antonym_asr,negation_asr,mean_d_f,mean_d_o";

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRecord {
    /// Row matching METRICS_CSV_HEADER; undefined fields serialize as
    /// empty cells.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.regime,
            self.accuracy,
            csv_opt(self.synonym_asr),
            csv_opt(self.antonym_asr),
            csv_opt(self.negation_asr),
            csv_opt(self.mean_d_f),
            csv_opt(self.mean_d_o),
        )
    }
}

/// Group tag for projection and probe rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Original,
    Fickle,
    Obstinate,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Original => "original",
            Group::Fickle => "fickle",
            Group::Obstinate => "obstinate",
        }
    }
}

/// One representation row: the (possibly perturbed) example it came from
/// and the hidden representation the model assigned it.
#[derive(Debug, Clone)]
pub struct ProjectionRow<F: Scalar> {
    pub id: usize,
    pub group: Group,
    pub example: Example,
    pub representation: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct RepresentationExport<F: Scalar> {
    pub rows: Vec<ProjectionRow<F>>,
    /// Example ids whose obstinate row is absent because no word had an
    /// antonym.
    pub skipped_obstinate: Vec<usize>,
}

/// Uniform sample without replacement, excluding the neutral class in
/// 3-class data, returned in ascending id order.
fn probe_sample<'a>(data: &'a Dataset, size: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Example> {
    let mut pool: Vec<&Example> = data
        .iter()
        .filter(|e| !(data.n_classes == 3 && e.label == 2))
        .collect();
    pool.shuffle(rng);
    pool.truncate(size);
    pool.sort_by_key(|e| e.id);
    pool
}

/// Representations of sampled originals plus one random synonym variant
/// and (when available) one random antonym variant each.
pub fn export_representations<F: Scalar, C: TextClassifier<F>>(
    model: &C,
    data: &Dataset,
    tables: &SubstitutionTables,
    sample_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RepresentationExport<F>> {
    let sample = probe_sample(data, sample_size, rng);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for ex in sample {
        let fickle = random_synonym_perturb(ex, tables, rng);
        let obstinate = random_antonym_perturb(ex, tables, rng);
        rows.push(ProjectionRow {
            id: ex.id,
            group: Group::Original,
            example: ex.clone(),
            representation: model.classify(ex)?.representation,
        });
        rows.push(ProjectionRow {
            id: ex.id,
            group: Group::Fickle,
            representation: model.classify(&fickle)?.representation,
            example: fickle,
        });
        match obstinate {
            Some(v) => rows.push(ProjectionRow {
                id: ex.id,
                group: Group::Obstinate,
                representation: model.classify(&v)?.representation,
                example: v,
            }),
            None => skipped.push(ex.id),
        }
    }
    Ok(RepresentationExport {
        rows,
        skipped_obstinate: skipped,
    })
}

/// Per-example representation distances from the original to its sampled
/// variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub id: usize,
    pub d_f: f64,
    pub d_o: Option<f64>,
}

/// Fold an export into distance pairs. Rows are grouped by example id;
/// every sampled example has an original and a fickle row.
pub fn distance_probe<F: Scalar>(export: &RepresentationExport<F>) -> Result<Vec<ProbePoint>> {
    let mut points = Vec::new();
    let mut i = 0;
    let rows = &export.rows;
    while i < rows.len() {
        let original = &rows[i];
        if original.group != Group::Original || i + 1 >= rows.len() {
            return Err(Error::InvalidConfig(format!(
                "export rows out of order at index {i}: expected an original row followed by its fickle row"
            )));
        }
        let fickle = &rows[i + 1];
        if fickle.group != Group::Fickle || fickle.id != original.id {
            return Err(Error::InvalidConfig(format!(
                "export rows out of order at index {}: expected the fickle row of example {}",
                i + 1,
                original.id
            )));
        }
        let d_f = to_f64(cosine_distance(
            &original.representation,
            &fickle.representation,
        )?);
        let mut next = i + 2;
        let d_o = if next < rows.len() && rows[next].group == Group::Obstinate {
            let d = to_f64(cosine_distance(
                &original.representation,
                &rows[next].representation,
            )?);
            next += 1;
            Some(d)
        } else {
            None
        };
        points.push(ProbePoint {
            id: original.id,
            d_f,
            d_o,
        });
        i = next;
    }
    Ok(points)
}

pub fn mean_d_f(points: &[ProbePoint]) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    Some(points.iter().map(|p| p.d_f).sum::<f64>() / points.len() as f64)
}

pub fn mean_d_o(points: &[ProbePoint]) -> Option<f64> {
    let ds: Vec<f64> = points.iter().filter_map(|p| p.d_o).collect();
    if ds.is_empty() {
        return None;
    }
    Some(ds.iter().sum::<f64>() / ds.len() as f64)
}

/// mean d(x, obstinate) minus mean d(x, fickle); the separation a
/// balanced-training objective is supposed to widen.
pub fn representation_gap(points: &[ProbePoint]) -> Option<f64> {
    Some(mean_d_o(points)? - mean_d_f(points)?)
}

/// Everything an evaluation pass needs besides the model and data.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a, F: Scalar> {
    pub tables: &'a SubstitutionTables,
    pub vocab: &'a Vocabulary<F>,
    pub oracle: Option<&'a ToyOracle>,
    pub attack_cfg: AttackConfig,
    pub probe_size: usize,
}

/// Accuracy, the three attack success rates, and the distance probe for
/// one model snapshot.
pub fn evaluate_checkpoint<F: Scalar, C: TextClassifier<F>>(
    model: &C,
    data: &Dataset,
    ctx: &EvalContext<'_, F>,
    epoch: usize,
    regime: &str,
    probe_rng: &mut ChaCha8Rng,
) -> Result<MetricsRecord> {
    if ctx.attack_cfg.task.n_classes() != data.n_classes {
        return Err(Error::InvalidConfig(format!(
            "attack task expects {} classes, dataset has {}",
            ctx.attack_cfg.task.n_classes(),
            data.n_classes
        )));
    }
    let accuracy = accuracy(model, data)?;
    let mut summaries = Vec::new();
    for kind in [
        AttackKind::Synonym,
        AttackKind::Antonym,
        AttackKind::Negation,
    ] {
        summaries.push(attack_success_rate(
            kind,
            model,
            data,
            &ctx.attack_cfg,
            ctx.tables,
            ctx.vocab,
            ctx.oracle,
        )?);
    }
    let export = export_representations(model, data, ctx.tables, ctx.probe_size, probe_rng)?;
    let points = distance_probe(&export)?;
    Ok(MetricsRecord {
        epoch,
        regime: regime.to_string(),
        accuracy,
        synonym_asr: summaries[0].rate(),
        antonym_asr: summaries[1].rate(),
        negation_asr: summaries[2].rate(),
        synonym_eligible: summaries[0].eligible,
        antonym_eligible: summaries[1].eligible,
        negation_eligible: summaries[2].eligible,
        mean_d_f: mean_d_f(&points),
        mean_d_o: mean_d_o(&points),
    })
}

/// Probe sampling RNG for one evaluation epoch. Training-time records and
/// checkpoint replays both derive theirs here, so the two paths draw the
/// same probe.
pub fn probe_rng(probe_seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(probe_seed.wrapping_add(epoch as u64))
}

/// Evaluate a list of per-epoch checkpoints; rows come back sorted by
/// epoch ascending. The probe sample is redrawn per epoch from a seed
/// derived from `probe_seed` and the epoch number.
pub fn tradeoff_curve<F: Scalar>(
    checkpoints: &[(usize, ModelParams<F>)],
    data: &Dataset,
    ctx: &EvalContext<'_, F>,
    regime: &str,
    probe_seed: u64,
) -> Result<Vec<MetricsRecord>> {
    if checkpoints.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut records = Vec::new();
    for (epoch, params) in checkpoints {
        params.check_shape(ctx.vocab.len(), ctx.vocab.dim(), data.n_classes)?;
        let mut rng = probe_rng(probe_seed, *epoch);
        records.push(evaluate_checkpoint(
            params, data, ctx, *epoch, regime, &mut rng,
        )?);
    }
    records.sort_by_key(|r| r.epoch);
    Ok(records)
}

/// One projected point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub id: usize,
    pub group: Group,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOutput {
    pub points: Vec<ProjectionPoint>,
    /// True when the centered data had fewer than two informative
    /// directions; the collapsed axes are zero.
    pub rank_deficient: bool,
}

impl ProjectionOutput {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,group,x,y\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.id, p.group.name(), p.x, p.y));
        }
        out
    }
}

const POWER_ITERATIONS: usize = 200;

/// Largest-magnitude component becomes positive; ties take the first such
/// index.
fn canonicalize_sign(v: &mut [f64]) {
    let mut arg = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[arg].abs() {
            arg = i;
        }
    }
    if v[arg] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Power iteration from a fixed start vector; `orthogonal_to` keeps the
/// second direction deflated against the first every step. Returns the
/// direction and its variance (Rayleigh quotient).
fn dominant_direction(
    cov: &[Vec<f64>],
    orthogonal_to: Option<&[f64]>,
    dim: usize,
) -> (Vec<f64>, f64) {
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    if let Some(prev) = orthogonal_to {
        project_out(&mut v, prev);
    }
    for _ in 0..POWER_ITERATIONS {
        let mut w = vec![0.0; dim];
        for (i, row) in cov.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                w[i] += c * v[j];
            }
        }
        if let Some(prev) = orthogonal_to {
            project_out(&mut w, prev);
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-300 {
            // No variance left in this direction.
            return (v, 0.0);
        }
        for x in w.iter_mut() {
            *x /= n;
        }
        v = w;
    }
    let mut cv = vec![0.0; dim];
    for (i, row) in cov.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            cv[i] += c * v[j];
        }
    }
    let lambda = v.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>();
    (v, lambda)
}

fn project_out(v: &mut [f64], axis: &[f64]) {
    let d = v.iter().zip(axis).map(|(a, b)| a * b).sum::<f64>();
    for (x, a) in v.iter_mut().zip(axis) {
        *x -= d * a;
    }
}

/// Deterministic 2D projection: mean-center, take the top two principal
/// directions by power iteration with deflation, and project. The first
/// axis always carries at least as much variance as the second.
pub fn pca_project<F: Scalar>(rows: &[ProjectionRow<F>]) -> Result<ProjectionOutput> {
    if rows.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "projection needs at least 3 rows, got {}",
            rows.len()
        )));
    }
    let dim = rows[0].representation.len();
    for r in rows {
        if r.representation.len() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: r.representation.len(),
            });
        }
    }
    let n = rows.len();
    let data: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.representation.iter().map(|&x| to_f64(x)).collect())
        .collect();
    let mut mean = vec![0.0; dim];
    for x in &data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for x in &centered {
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += x[i] * x[j];
            }
        }
    }
    for row in cov.iter_mut() {
        for c in row.iter_mut() {
            *c /= n as f64;
        }
    }

    let (mut v1, lambda1) = dominant_direction(&cov, None, dim);
    let (mut v2, lambda2) = dominant_direction(&cov, Some(&v1), dim);
    canonicalize_sign(&mut v1);
    canonicalize_sign(&mut v2);

    let scale = lambda1.max(1.0);
    let first_degenerate = lambda1 <= 0.0 || lambda1 < 1e-12;
    let second_degenerate = lambda2 <= scale * 1e-9;
    let rank_deficient = first_degenerate || second_degenerate;

    let points = rows
        .iter()
        .zip(&centered)
        .map(|(r, x)| {
            let px = if first_degenerate {
                0.0
            } else {
                x.iter().zip(&v1).map(|(a, b)| a * b).sum()
            };
            let py = if second_degenerate {
                0.0
            } else {
                x.iter().zip(&v2).map(|(a, b)| a * b).sum()
            };
            ProjectionPoint {
                id: r.id,
                group: r.group,
                x: px,
                y: py,
            }
        })
        .collect();
    Ok(ProjectionOutput {
        points,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ConstantClassifier, ForwardOutput};
    use crate::data::{generate_toy_dataset, ToyTaskSpec, ToyWorld};
    use crate::model::init_model;

    fn world() -> ToyWorld<f64> {
        generate_toy_dataset(&ToyTaskSpec::default(), 60, 60).unwrap()
    }

    fn lax_cfg() -> AttackConfig {
        AttackConfig {
            sem_threshold: -1.0,
            ..AttackConfig::default()
        }
    }

    // Predicts (oracle label + shift) mod n_classes with high confidence.
    struct OracleModel<'a> {
        oracle: &'a ToyOracle,
        shift: usize,
        n_classes: usize,
    }
    impl TextClassifier<f64> for OracleModel<'_> {
        fn n_classes(&self) -> usize {
            self.n_classes
        }
        fn classify(&self, ex: &Example) -> Result<ForwardOutput<f64>> {
            let label = (self.oracle.label_example(ex)? + self.shift) % self.n_classes;
            let mut probs = vec![0.1 / (self.n_classes as f64 - 1.0); self.n_classes];
            probs[label] = 0.9;
            Ok(ForwardOutput {
                representation: vec![1.0, 0.0],
                logits: probs.iter().map(|p| p.ln()).collect(),
                probs,
            })
        }
    }

    #[test]
    fn accuracy_cases() {
        let w = world();
        let constant = ConstantClassifier {
            class: 0,
            n_classes: 3,
        };
        // Labels are assigned round robin, so the balance is exact.
        let acc = accuracy::<f64, _>(&constant, &w.eval).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-12, "{acc}");

        let perfect = OracleModel {
            oracle: &w.oracle,
            shift: 0,
            n_classes: 3,
        };
        assert_eq!(accuracy(&perfect, &w.eval).unwrap(), 1.0);

        // Summing per-batch correct counts equals the one-shot fraction.
        let model = init_model(&w.vocab, 8, 3, true, 2).unwrap();
        let mut correct = 0usize;
        for chunk in w.eval.examples.chunks(7) {
            for ex in chunk {
                if model.classify(ex).unwrap().predicted() == ex.label {
                    correct += 1;
                }
            }
        }
        let batched = correct as f64 / w.eval.len() as f64;
        assert_eq!(accuracy(&model, &w.eval).unwrap(), batched);

        let empty = Dataset {
            examples: vec![],
            n_classes: 3,
        };
        assert!(matches!(
            accuracy::<f64, _>(&constant, &empty),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn constant_model_antonym_asr_is_one_over_its_correct_slice() {
        let w = world();
        let constant = ConstantClassifier {
            class: 0,
            n_classes: 3,
        };
        let summary = attack_success_rate::<f64, _>(
            AttackKind::Antonym,
            &constant,
            &w.eval,
            &lax_cfg(),
            &w.tables,
            &w.vocab,
            None,
        )
        .unwrap();
        // Every eval example holds one key per sentence, and keys always
        // have antonyms, so the correctly classified slice is eligible in
        // full (label 0 is never neutral).
        let correct = w.eval.iter().filter(|e| e.label == 0).count();
        assert_eq!(summary.eligible, correct);
        assert_eq!(summary.successes, correct);
        assert_eq!(summary.rate(), Some(1.0));
    }

    #[test]
    fn always_wrong_model_has_undefined_asr() {
        let w = world();
        let wrong = OracleModel {
            oracle: &w.oracle,
            shift: 1,
            n_classes: 3,
        };
        let summary = attack_success_rate(
            AttackKind::Synonym,
            &wrong,
            &w.eval,
            &lax_cfg(),
            &w.tables,
            &w.vocab,
            None,
        )
        .unwrap();
        assert_eq!(summary.eligible, 0);
        assert_eq!(summary.rate(), None);
    }

    #[test]
    fn asr_survives_a_log_round_trip() {
        let w = world();
        let model = init_model(&w.vocab, 8, 3, true, 11).unwrap();
        for kind in [
            AttackKind::Synonym,
            AttackKind::Antonym,
            AttackKind::Negation,
        ] {
            let outcomes =
                run_attacks(kind, &model, &w.eval, &lax_cfg(), &w.tables, &w.vocab, None).unwrap();
            let direct = asr_from_outcomes(&outcomes);
            let ndjson: String = outcomes
                .iter()
                .map(|o| serde_json::to_string(o).unwrap() + "\n")
                .collect();
            let replayed: Vec<AttackOutcome> = ndjson
                .lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect();
            assert_eq!(asr_from_outcomes(&replayed), direct);
            assert_eq!(
                attack_success_rate(kind, &model, &w.eval, &lax_cfg(), &w.tables, &w.vocab, None)
                    .unwrap(),
                direct
            );
        }
    }

    #[test]
    fn export_rows_match_direct_forward_calls() {
        let w = world();
        let model = init_model(&w.vocab, 8, 3, true, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let export = export_representations(&model, &w.eval, &w.tables, 12, &mut rng).unwrap();
        assert!(export.rows.len() <= 3 * 12);
        for row in &export.rows {
            let fresh = model.classify(&row.example).unwrap().representation;
            assert_eq!(row.representation, fresh);
        }
        // Neutral examples never enter the sample in 3-class mode.
        for row in &export.rows {
            if row.group == Group::Original {
                assert_ne!(row.example.label, 2);
            }
        }
        // Same seed, same export.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let again = export_representations(&model, &w.eval, &w.tables, 12, &mut rng).unwrap();
        assert_eq!(again.rows.len(), export.rows.len());
        for (a, b) in export.rows.iter().zip(&again.rows) {
            assert_eq!(a.example, b.example);
            assert_eq!(a.representation, b.representation);
        }
    }

    #[test]
    fn missing_antonyms_skip_the_obstinate_row() {
        let w = world();
        let model = init_model(&w.vocab, 8, 3, true, 4).unwrap();
        let mut tables = w.tables.clone();
        for set in tables.antonyms.iter_mut() {
            set.clear();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let export = export_representations(&model, &w.eval, &tables, 10, &mut rng).unwrap();
        assert_eq!(export.rows.len(), 2 * export.skipped_obstinate.len());
        assert!(export.rows.iter().all(|r| r.group != Group::Obstinate));
        let points = distance_probe(&export).unwrap();
        assert!(points.iter().all(|p| p.d_o.is_none()));
        assert_eq!(mean_d_o(&points), None);
        assert_eq!(representation_gap(&points), None);
    }

    #[test]
    fn probe_distances_recompute_from_rows() {
        let w = world();
        let model = init_model(&w.vocab, 8, 3, true, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let export = export_representations(&model, &w.eval, &w.tables, 15, &mut rng).unwrap();
        let points = distance_probe(&export).unwrap();
        assert_eq!(
            points.len(),
            15.min(w.eval.iter().filter(|e| e.label != 2).count())
        );
        for p in &points {
            let rows: Vec<&ProjectionRow<f64>> =
                export.rows.iter().filter(|r| r.id == p.id).collect();
            let original = rows.iter().find(|r| r.group == Group::Original).unwrap();
            let fickle = rows.iter().find(|r| r.group == Group::Fickle).unwrap();
            let expect = cosine_distance(&original.representation, &fickle.representation).unwrap();
            assert_eq!(p.d_f, expect);
        }
        let gap = representation_gap(&points).unwrap();
        assert_eq!(gap, mean_d_o(&points).unwrap() - mean_d_f(&points).unwrap());
    }

    #[test]
    fn tradeoff_rows_sorted_by_epoch() {
        let w = world();
        let ctx = EvalContext {
            tables: &w.tables,
            vocab: &w.vocab,
            oracle: None,
            attack_cfg: lax_cfg(),
            probe_size: 8,
        };
        let checkpoints = vec![
            (5, init_model(&w.vocab, 8, 3, true, 5).unwrap()),
            (1, init_model(&w.vocab, 8, 3, true, 1).unwrap()),
        ];
        let rows = tradeoff_curve(&checkpoints, &w.eval, &ctx, "normal", 40).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].epoch, 1);
        assert_eq!(rows[1].epoch, 5);

        let single = tradeoff_curve(&checkpoints[..1], &w.eval, &ctx, "normal", 40).unwrap();
        assert_eq!(single.len(), 1);

        assert!(matches!(
            tradeoff_curve::<f64>(&[], &w.eval, &ctx, "normal", 40),
            Err(Error::EmptyDataset)
        ));

        // Vocab mismatch is caught before evaluation.
        let small = generate_toy_dataset(
            &ToyTaskSpec {
                n_filler: 30,
                ..ToyTaskSpec::default()
            },
            30,
            30,
        )
        .unwrap();
        let mismatched = vec![(1, init_model(&small.vocab, 8, 3, true, 1).unwrap())];
        assert!(matches!(
            tradeoff_curve(&mismatched, &w.eval, &ctx, "normal", 40),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn metrics_csv_shape() {
        let record = MetricsRecord {
            epoch: 3,
            regime: "bat_pair".into(),
            accuracy: 0.75,
            synonym_asr: Some(0.5),
            antonym_asr: None,
            negation_asr: None,
            synonym_eligible: 40,
            antonym_eligible: 0,
            negation_eligible: 0,
            mean_d_f: Some(0.125),
            mean_d_o: None,
        };
        assert_eq!(
            METRICS_CSV_HEADER.split(',').count(),
            record.csv_row().split(',').count()
        );
        assert_eq!(record.csv_row(), "3,bat_pair,0.75,0.5,,,0.125,");
        let json = serde_json::to_string(&record).unwrap();
        let back: MetricsRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
    }

    fn plane_rows(line_only: bool) -> Vec<ProjectionRow<f64>> {
        let dim = 10;
        // Orthonormal in-plane basis mixing several coordinates.
        let mut b1 = vec![0.0; dim];
        b1[0] = 1.0 / 2f64.sqrt();
        b1[1] = 1.0 / 2f64.sqrt();
        let mut b2 = vec![0.0; dim];
        b2[0] = 1.0 / 6f64.sqrt();
        b2[1] = -1.0 / 6f64.sqrt();
        b2[4] = 2.0 / 6f64.sqrt();
        let mut rows = Vec::new();
        for i in 0..8 {
            for j in 0..4 {
                let t = i as f64 * 1.5;
                let s = if line_only { 0.0 } else { j as f64 * 0.4 };
                let rep: Vec<f64> = (0..dim).map(|k| 3.0 + t * b1[k] + s * b2[k]).collect();
                rows.push(ProjectionRow {
                    id: i * 4 + j,
                    group: Group::Original,
                    example: Example {
                        id: i * 4 + j,
                        premise: vec![0],
                        hypothesis: vec![0],
                        label: 0,
                    },
                    representation: rep,
                });
            }
        }
        rows
    }

    #[test]
    fn projection_preserves_planar_distances() {
        let rows = plane_rows(false);
        let out = pca_project(&rows).unwrap();
        assert!(!out.rank_deficient);
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                let high: f64 = rows[i]
                    .representation
                    .iter()
                    .zip(&rows[j].representation)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let dx = out.points[i].x - out.points[j].x;
                let dy = out.points[i].y - out.points[j].y;
                let low = (dx * dx + dy * dy).sqrt();
                assert!((high - low).abs() < 1e-6, "{high} vs {low}");
            }
        }
        // The wide direction (spacing 1.5 over 8 steps) carries more
        // variance than the narrow one (spacing 0.4 over 4 steps).
        let n = out.points.len() as f64;
        let mx = out.points.iter().map(|p| p.x).sum::<f64>() / n;
        let my = out.points.iter().map(|p| p.y).sum::<f64>() / n;
        let vx = out.points.iter().map(|p| (p.x - mx).powi(2)).sum::<f64>() / n;
        let vy = out.points.iter().map(|p| (p.y - my).powi(2)).sum::<f64>() / n;
        assert!(vx >= vy, "{vx} < {vy}");
    }

    #[test]
    fn duplicate_points_project_identically() {
        let mut rows = plane_rows(false);
        let dup = rows[5].clone();
        rows.push(ProjectionRow { id: 99, ..dup });
        let out = pca_project(&rows).unwrap();
        let a = &out.points[5];
        let b = out.points.last().unwrap();
        assert_eq!((a.x, a.y), (b.x, b.y));
    }

    #[test]
    fn collinear_points_zero_the_second_axis() {
        let rows = plane_rows(true);
        let out = pca_project(&rows).unwrap();
        assert!(out.rank_deficient);
        assert!(out.points.iter().all(|p| p.y == 0.0));
        // Distances along the line survive on the first axis.
        let d01 = (out.points[0].x - out.points[4].x).abs();
        assert!((d01 - 1.5).abs() < 1e-9, "{d01}");

        assert!(pca_project(&rows[..2]).is_err());
    }

    #[test]
    fn projection_csv_layout() {
        let rows = plane_rows(false);
        let out = pca_project(&rows).unwrap();
        let csv = out.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("id,group,x,y"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,original,"), "{first}");
        assert_eq!(csv.lines().count(), rows.len() + 1);
    }

    #[test]
    fn evaluate_checkpoint_fills_every_field() {
        let w = world();
        let model = init_model(&w.vocab, 8, 3, true, 13).unwrap();
        let ctx = EvalContext {
            tables: &w.tables,
            vocab: &w.vocab,
            oracle: Some(&w.oracle),
            attack_cfg: lax_cfg(),
            probe_size: 10,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let record = evaluate_checkpoint(&model, &w.eval, &ctx, 2, "normal", &mut rng).unwrap();
        assert_eq!(record.epoch, 2);
        assert_eq!(record.regime, "normal");
        assert!((0.0..=1.0).contains(&record.accuracy));
        assert!(record.mean_d_f.is_some());
        assert!(record.mean_d_o.is_some());
        for rate in [record.synonym_asr, record.antonym_asr, record.negation_asr]
            .into_iter()
            .flatten()
        {
            assert!((0.0..=1.0).contains(&rate));
        }
        // Eligibility counts stay auditable next to the rates.
        assert!(record.synonym_eligible <= w.eval.len());

        // Task arity must match the dataset.
        let bad = EvalContext {
            attack_cfg: AttackConfig {
                task: crate::data::TaskKind::Paraphrase,
                ..lax_cfg()
            },
            ..ctx
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(matches!(
            evaluate_checkpoint(&model, &w.eval, &bad, 2, "normal", &mut rng),
            Err(Error::InvalidConfig(_))
        ));
    }
}
