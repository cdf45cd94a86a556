//! Word-substitution attacks: greedy synonym search for fickle examples,
//! single-word antonym and negation rewrites for obstinate examples, and
//! the random perturbation samplers the contrastive trainers draw from.
//!
//! Every attack counts its own model queries, reports failures as normal
//! outcomes with a reason, and is deterministic given (model, example,
//! config).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{CountingClassifier, TextClassifier};
use crate::data::{Example, TaskKind, ToyOracle};
use crate::error::{Error, Result};
use crate::lexicon::{cosine_similarity, SubstitutionTables, Vocabulary};
use crate::scalar::{from_f64, Scalar};

/// Which sentence a position refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Premise,
    Hypothesis,
}

/// One committed word replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub side: Side,
    pub position: usize,
    pub old: usize,
    pub new: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Synonym,
    Antonym,
    Negation,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Synonym => "synonym",
            AttackKind::Antonym => "antonym",
            AttackKind::Negation => "negation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "synonym" => Ok(AttackKind::Synonym),
            "antonym" => Ok(AttackKind::Antonym),
            "negation" => Ok(AttackKind::Negation),
            other => Err(Error::InvalidConfig(format!(
                "unknown attack {other:?}; expected synonym, antonym or negation"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// Misclassified to begin with, or filtered by the task rule.
    Ineligible,
    /// No position had any candidate substitution.
    NoCandidates,
    /// Candidates existed but none passed the enabled filters.
    ConstraintsExhausted,
    /// Synonym search committed substitutions without flipping the argmax.
    PredictionUnchanged,
    /// Every single-word rewrite moved the argmax off the original class.
    PredictionChanged,
}

/// Attack parameters shared by all three attacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub task: TaskKind,
    /// Synonym substitution budget; None means every position may change.
    pub max_words: Option<usize>,
    /// Minimum cosine similarity between the original and perturbed input
    /// (mean-pooled vocabulary embeddings over premise + hypothesis).
    pub sem_threshold: f64,
    pub pos_constraint: bool,
    /// Require the ground-truth condition on success: unchanged oracle
    /// label for synonym attacks, flipped for antonym/negation. Needs an
    /// oracle, so toy data only.
    pub oracle_check: bool,
    /// Try antonym/negation positions in ascending importance instead of
    /// descending.
    pub reverse_importance: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            task: TaskKind::Nli,
            max_words: None,
            sem_threshold: 0.8,
            pos_constraint: true,
            oracle_check: false,
            reverse_importance: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.sem_threshold) {
            return Err(Error::InvalidConfig(format!(
                "sem_threshold must be in [-1, 1], got {}",
                self.sem_threshold
            )));
        }
        Ok(())
    }
}

/// Candidate view over the substitution tables for one attack mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubstitutionMode {
    Synonym,
    Antonym,
    Negation,
}

#[derive(Debug, Clone, Copy)]
pub struct PerturbationSpace<'a> {
    pub tables: &'a SubstitutionTables,
    pub mode: SubstitutionMode,
    pub pos_constraint: bool,
}

impl<'a> PerturbationSpace<'a> {
    pub fn new(
        tables: &'a SubstitutionTables,
        mode: SubstitutionMode,
        pos_constraint: bool,
    ) -> Self {
        PerturbationSpace {
            tables,
            mode,
            pos_constraint,
        }
    }

    /// Replacement ids for one word, ascending, PoS-filtered when enabled.
    /// Synonym mode excludes the word itself.
    pub fn candidates(&self, word: usize) -> Vec<usize> {
        let raw: Vec<usize> = match self.mode {
            SubstitutionMode::Synonym => self.tables.synonyms[word]
                .iter()
                .copied()
                .filter(|&c| c != word)
                .collect(),
            SubstitutionMode::Antonym => self.tables.antonyms[word].iter().copied().collect(),
            SubstitutionMode::Negation => self
                .tables
                .negation
                .get(&word)
                .copied()
                .into_iter()
                .collect(),
        };
        if self.pos_constraint {
            raw.into_iter()
                .filter(|&c| self.tables.pos_compatible(word, c))
                .collect()
        } else {
            raw
        }
    }
}

/// Attack result; `adversarial` is kept in memory but not serialized (the
/// substitution list reconstructs it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub id: usize,
    pub attack: AttackKind,
    pub success: bool,
    #[serde(skip)]
    pub adversarial: Option<Example>,
    pub substitutions: Vec<Substitution>,
    pub queries: usize,
    pub failure_reason: Option<FailureReason>,
}

/// One ranked position with its importance score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedPosition<F: Scalar> {
    pub side: Side,
    pub position: usize,
    pub importance: F,
}

fn token_at(ex: &Example, side: Side, position: usize) -> usize {
    match side {
        Side::Premise => ex.premise[position],
        Side::Hypothesis => ex.hypothesis[position],
    }
}

fn with_substitution(ex: &Example, side: Side, position: usize, new: usize) -> Example {
    let mut out = ex.clone();
    match side {
        Side::Premise => out.premise[position] = new,
        Side::Hypothesis => out.hypothesis[position] = new,
    }
    out
}

fn joint_positions(ex: &Example) -> Vec<(Side, usize)> {
    (0..ex.premise.len())
        .map(|i| (Side::Premise, i))
        .chain((0..ex.hypothesis.len()).map(|i| (Side::Hypothesis, i)))
        .collect()
}

fn rank_with_base<F: Scalar, C: TextClassifier<F>>(
    model: &C,
    ex: &Example,
    p_base: F,
    unk_id: Option<usize>,
) -> Result<Vec<RankedPosition<F>>> {
    let mut scored = Vec::new();
    for (side, position) in joint_positions(ex) {
        let len = match side {
            Side::Premise => ex.premise.len(),
            Side::Hypothesis => ex.hypothesis.len(),
        };
        let importance = if len == 1 {
            // Deleting the only word would empty the sentence; probe with
            // the UNK replacement instead, or score zero without one.
            match unk_id {
                Some(unk) => {
                    let variant = with_substitution(ex, side, position, unk);
                    p_base - model.classify(&variant)?.probs[ex.label]
                }
                None => F::zero(),
            }
        } else {
            let mut variant = ex.clone();
            match side {
                Side::Premise => {
                    variant.premise.remove(position);
                }
                Side::Hypothesis => {
                    variant.hypothesis.remove(position);
                }
            }
            p_base - model.classify(&variant)?.probs[ex.label]
        };
        scored.push(RankedPosition {
            side,
            position,
            importance,
        });
    }
    // Descending importance; the stable sort keeps joint position order
    // (premise before hypothesis, low index first) on ties.
    scored.sort_by(|a, b| b.importance.partial_cmp(&a.importance).unwrap());
    Ok(scored)
}

/// Rank every position of both sentences by how much deleting its word
/// drops the gold-class probability.
pub fn word_importance_ranking<F: Scalar, C: TextClassifier<F>>(
    model: &C,
    ex: &Example,
    unk_id: Option<usize>,
) -> Result<Vec<RankedPosition<F>>> {
    let p_base = model.classify(ex)?.probs[ex.label];
    rank_with_base(model, ex, p_base, unk_id)
}

/// Mean vocabulary embedding of the full input (premise then hypothesis).
fn input_mean<F: Scalar>(vocab: &Vocabulary<F>, ex: &Example) -> Vec<F> {
    let tokens: Vec<usize> = ex
        .premise
        .iter()
        .chain(ex.hypothesis.iter())
        .copied()
        .collect();
    vocab.mean_vector(&tokens)
}

fn check_oracle_setup(cfg: &AttackConfig, oracle: Option<&ToyOracle>) -> Result<()> {
    if cfg.oracle_check && oracle.is_none() {
        return Err(Error::InvalidConfig(
            "oracle_check requires the toy oracle".into(),
        ));
    }
    Ok(())
}

/// Greedy fickle attack: walk positions in descending importance, commit
/// the gold-probability-minimizing synonym at each, and succeed the first
/// time the argmax leaves the original prediction.
pub fn synonym_attack<F: Scalar, C: TextClassifier<F>>(
    model: &C,
    ex: &Example,
    cfg: &AttackConfig,
    tables: &SubstitutionTables,
    vocab: &Vocabulary<F>,
    oracle: Option<&ToyOracle>,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_oracle_setup(cfg, oracle)?;
    let space = PerturbationSpace::new(tables, SubstitutionMode::Synonym, cfg.pos_constraint);
    let counted = CountingClassifier::new(model);
    let outcome = |success, adversarial, substitutions, queries, failure_reason| AttackOutcome {
        id: ex.id,
        attack: AttackKind::Synonym,
        success,
        adversarial,
        substitutions,
        queries,
        failure_reason,
    };

    let base = counted.classify(ex)?;
    let pred0 = base.predicted();
    if pred0 != ex.label {
        return Ok(outcome(
            false,
            None,
            vec![],
            counted.calls(),
            Some(FailureReason::Ineligible),
        ));
    }
    let ranking = rank_with_base(&counted, ex, base.probs[ex.label], vocab.unk_id())?;

    let original_mean = input_mean(vocab, ex);
    let threshold = from_f64::<F>(cfg.sem_threshold);
    let budget = cfg.max_words.unwrap_or(usize::MAX);
    let mut current = ex.clone();
    let mut substitutions: Vec<Substitution> = Vec::new();
    let mut any_candidates = false;

    for rp in &ranking {
        if substitutions.len() >= budget {
            break;
        }
        let word = token_at(&current, rp.side, rp.position);
        let candidates = space.candidates(word);
        if candidates.is_empty() {
            continue;
        }
        any_candidates = true;

        let mut best: Option<(F, usize, Example, usize)> = None;
        for cand in candidates {
            let tentative = with_substitution(&current, rp.side, rp.position, cand);
            let sim = cosine_similarity(&original_mean, &input_mean(vocab, &tentative))?;
            if sim < threshold {
                continue;
            }
            let out = counted.classify(&tentative)?;
            let p = out.probs[ex.label];
            // Ascending candidate order plus strict comparison: ties keep
            // the lower id.
            if best.as_ref().is_none_or(|(bp, _, _, _)| p < *bp) {
                best = Some((p, cand, tentative, out.predicted()));
            }
        }
        let Some((_, cand, tentative, predicted)) = best else {
            continue;
        };
        substitutions.push(Substitution {
            side: rp.side,
            position: rp.position,
            old: word,
            new: cand,
        });
        current = tentative;
        if predicted != pred0 {
            if let Some(oracle) = oracle.filter(|_| cfg.oracle_check) {
                if oracle.label_example(&current)? != oracle.label_example(ex)? {
                    continue;
                }
            }
            return Ok(outcome(
                true,
                Some(current.clone()),
                substitutions,
                counted.calls(),
                None,
            ));
        }
    }

    let reason = if !any_candidates {
        FailureReason::NoCandidates
    } else if substitutions.is_empty() {
        FailureReason::ConstraintsExhausted
    } else {
        FailureReason::PredictionUnchanged
    };
    Ok(outcome(false, None, vec![], counted.calls(), Some(reason)))
}

fn obstinate_style<F: Scalar, C: TextClassifier<F>>(
    model: &C,
    ex: &Example,
    cfg: &AttackConfig,
    kind: AttackKind,
    space: &PerturbationSpace<'_>,
    vocab: &Vocabulary<F>,
    oracle: Option<&ToyOracle>,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_oracle_setup(cfg, oracle)?;
    let counted = CountingClassifier::new(model);
    let outcome = |success, adversarial, substitutions, queries, failure_reason| AttackOutcome {
        id: ex.id,
        attack: kind,
        success,
        adversarial,
        substitutions,
        queries,
        failure_reason,
    };

    let base = counted.classify(ex)?;
    let pred0 = base.predicted();
    if pred0 != ex.label || !cfg.task.obstinate_eligible(ex.label) {
        return Ok(outcome(
            false,
            None,
            vec![],
            counted.calls(),
            Some(FailureReason::Ineligible),
        ));
    }
    let mut ranking = rank_with_base(&counted, ex, base.probs[ex.label], vocab.unk_id())?;
    if cfg.reverse_importance {
        ranking.reverse();
    }

    let mut any_candidates = false;
    for rp in &ranking {
        let word = token_at(ex, rp.side, rp.position);
        for cand in space.candidates(word) {
            any_candidates = true;
            let tentative = with_substitution(ex, rp.side, rp.position, cand);
            let out = counted.classify(&tentative)?;
            if out.predicted() != pred0 {
                continue;
            }
            if let Some(oracle) = oracle.filter(|_| cfg.oracle_check) {
                if oracle.label_example(&tentative)? == oracle.label_example(ex)? {
                    continue;
                }
            }
            let substitution = Substitution {
                side: rp.side,
                position: rp.position,
                old: word,
                new: cand,
            };
            return Ok(outcome(
                true,
                Some(tentative),
                vec![substitution],
                counted.calls(),
                None,
            ));
        }
    }
    let reason = if any_candidates {
        FailureReason::PredictionChanged
    } else {
        FailureReason::NoCandidates
    };
    Ok(outcome(false, None, vec![], counted.calls(), Some(reason)))
}

/// Obstinate attack: substitute exactly one word with an antonym so that
/// the prediction stays put (and, under oracle_check, the true label
/// flips). Enumerates every position and candidate before giving up.
pub fn antonym_attack<F: Scalar, C: TextClassifier<F>>(
    model: &C,
    ex: &Example,
    cfg: &AttackConfig,
    tables: &SubstitutionTables,
    vocab: &Vocabulary<F>,
    oracle: Option<&ToyOracle>,
) -> Result<AttackOutcome> {
    let space = PerturbationSpace::new(tables, SubstitutionMode::Antonym, cfg.pos_constraint);
    obstinate_style(model, ex, cfg, AttackKind::Antonym, &space, vocab, oracle)
}

/// Negation rewrite attack: same success criterion as the antonym attack,
/// candidates come from the negation map (both rewrite directions).
pub fn negation_attack<F: Scalar, C: TextClassifier<F>>(
    model: &C,
    ex: &Example,
    cfg: &AttackConfig,
    tables: &SubstitutionTables,
    vocab: &Vocabulary<F>,
    oracle: Option<&ToyOracle>,
) -> Result<AttackOutcome> {
    let space = PerturbationSpace::new(tables, SubstitutionMode::Negation, cfg.pos_constraint);
    obstinate_style(model, ex, cfg, AttackKind::Negation, &space, vocab, oracle)
}

/// Dispatch an attack by kind.
pub fn run_attack<F: Scalar, C: TextClassifier<F>>(
    kind: AttackKind,
    model: &C,
    ex: &Example,
    cfg: &AttackConfig,
    tables: &SubstitutionTables,
    vocab: &Vocabulary<F>,
    oracle: Option<&ToyOracle>,
) -> Result<AttackOutcome> {
    match kind {
        AttackKind::Synonym => synonym_attack(model, ex, cfg, tables, vocab, oracle),
        AttackKind::Antonym => antonym_attack(model, ex, cfg, tables, vocab, oracle),
        AttackKind::Negation => negation_attack(model, ex, cfg, tables, vocab, oracle),
    }
}

/// Training-time fickle sampler: every position is independently redrawn
/// uniformly from its synonym set (which contains the original word).
pub fn random_synonym_perturb<R: Rng>(
    ex: &Example,
    tables: &SubstitutionTables,
    rng: &mut R,
) -> Example {
    let mut out = ex.clone();
    let mut redraw = |tokens: &mut Vec<usize>| {
        for t in tokens.iter_mut() {
            let set = &tables.synonyms[*t];
            let pick = rng.gen_range(0..set.len());
            *t = *set.iter().nth(pick).expect("index within set");
        }
    };
    redraw(&mut out.premise);
    redraw(&mut out.hypothesis);
    out
}

/// Training-time obstinate sampler: one uniformly chosen position with a
/// nonempty antonym set gets a uniformly drawn antonym. None when no
/// position qualifies, which masks the term downstream.
pub fn random_antonym_perturb<R: Rng>(
    ex: &Example,
    tables: &SubstitutionTables,
    rng: &mut R,
) -> Option<Example> {
    let eligible: Vec<(Side, usize)> = joint_positions(ex)
        .into_iter()
        .filter(|&(side, pos)| !tables.antonyms[token_at(ex, side, pos)].is_empty())
        .collect();
    if eligible.is_empty() {
        return None;
    }
    let (side, pos) = eligible[rng.gen_range(0..eligible.len())];
    let set = &tables.antonyms[token_at(ex, side, pos)];
    let pick = rng.gen_range(0..set.len());
    let cand = *set.iter().nth(pick).expect("index within set");
    Some(with_substitution(ex, side, pos, cand))
}
