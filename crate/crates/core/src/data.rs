//! Synthetic oracle-labeled sentence-pair task and TSV dataset I/O.
//!
//! The toy vocabulary is built from word clusters: words inside a cluster
//! are mutual synonyms (pairwise cosine >= 0.9 by construction), clusters
//! are paired into antonym partners, and filler words are random unit
//! vectors kept dissimilar from everything (|cosine| < 0.5) so their
//! synonym sets stay singletons. Each sentence carries exactly one key
//! word; the oracle labels a pair from the two key clusters alone, which
//! makes both attack assumptions (synonym substitutions preserve the true
//! label, antonym substitutions flip it) checkable rather than assumed.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{
    build_synonym_sets, LexiconConfig, SubstitutionTables, Vocabulary, UNK_TOKEN,
};
use crate::scalar::{dot, from_f64, norm, Scalar};

/// Which sentence-pair task the labels encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// 3-class inference: 0 = entail, 1 = contradict, 2 = neutral.
    Nli,
    /// 2-class paraphrase detection: 0 = non-duplicate, 1 = duplicate.
    Paraphrase,
}

impl TaskKind {
    pub fn n_classes(self) -> usize {
        match self {
            TaskKind::Nli => 3,
            TaskKind::Paraphrase => 2,
        }
    }

    pub fn label_name(self, label: usize) -> &'static str {
        match (self, label) {
            (TaskKind::Nli, 0) => "entail",
            (TaskKind::Nli, 1) => "contradict",
            (TaskKind::Nli, 2) => "neutral",
            (TaskKind::Paraphrase, 0) => "non-duplicate",
            (TaskKind::Paraphrase, 1) => "duplicate",
            _ => "invalid",
        }
    }

    /// Task filter for obstinate-style attacks (antonym, negation):
    /// 3-class excludes neutral, 2-class targets only the duplicate class.
    pub fn obstinate_eligible(self, label: usize) -> bool {
        match self {
            TaskKind::Nli => label != 2,
            TaskKind::Paraphrase => label == 1,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "nli" => Ok(TaskKind::Nli),
            "paraphrase" => Ok(TaskKind::Paraphrase),
            other => Err(Error::InvalidConfig(format!(
                "unknown task '{other}' (expected nli or paraphrase)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Nli => "nli",
            TaskKind::Paraphrase => "paraphrase",
        }
    }
}

/// One labeled sentence pair over token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: usize,
    pub premise: Vec<usize>,
    pub hypothesis: Vec<usize>,
    pub label: usize,
}

/// Immutable collection of examples with a fixed class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }
}

/// Parameters of the synthetic task generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTaskSpec {
    pub task: TaskKind,
    pub n_clusters: usize,
    pub cluster_size: usize,
    /// Partner cluster per cluster; must be an involution with no fixed
    /// points, so clusters come in antonym pairs.
    pub antonym_pairing: Vec<usize>,
    pub n_filler: usize,
    pub sentence_len: usize,
    /// Embedding dimensionality; needs n_clusters + cluster_size axes.
    pub dim: usize,
    pub seed: u64,
}

impl Default for ToyTaskSpec {
    fn default() -> Self {
        ToyTaskSpec {
            task: TaskKind::Nli,
            n_clusters: 4,
            cluster_size: 4,
            antonym_pairing: vec![1, 0, 3, 2],
            n_filler: 24,
            sentence_len: 12,
            dim: 12,
            seed: 7,
        }
    }
}

impl ToyTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InfeasibleSpec(msg));
        if self.n_clusters < 2 {
            return fail(format!("n_clusters must be >= 2, got {}", self.n_clusters));
        }
        if self.cluster_size < 1 {
            return fail("cluster_size must be >= 1".into());
        }
        if self.n_filler < 1 {
            return fail("n_filler must be >= 1".into());
        }
        if self.sentence_len < 1 {
            return fail(format!(
                "sentence_len must be >= 1, got {}",
                self.sentence_len
            ));
        }
        if self.antonym_pairing.len() != self.n_clusters {
            return fail(format!(
                "antonym_pairing has {} entries for {} clusters",
                self.antonym_pairing.len(),
                self.n_clusters
            ));
        }
        for (c, &p) in self.antonym_pairing.iter().enumerate() {
            if p >= self.n_clusters {
                return fail(format!("antonym_pairing[{c}] = {p} out of range"));
            }
            if p == c {
                return fail(format!("antonym_pairing has fixed point at cluster {c}"));
            }
            if self.antonym_pairing[p] != c {
                return fail(format!(
                    "antonym_pairing is not an involution at cluster {c}"
                ));
            }
        }
        if self.task == TaskKind::Nli && self.n_clusters < 4 {
            return fail(format!(
                "3-class task needs >= 4 clusters so a neutral pair exists, got {}",
                self.n_clusters
            ));
        }
        if self.dim < self.n_clusters + self.cluster_size {
            return fail(format!(
                "dim must be >= n_clusters + cluster_size = {}, got {}",
                self.n_clusters + self.cluster_size,
                self.dim
            ));
        }
        Ok(())
    }

    fn n_keys(&self) -> usize {
        self.n_clusters * self.cluster_size
    }

    /// Key word id for cluster `c`, slot `j`. Keys occupy ids 0..n_keys.
    pub fn key_id(&self, c: usize, j: usize) -> usize {
        c * self.cluster_size + j
    }
}

/// Ground-truth labeling rule for the toy task: the label of a pair is a
/// function of the two key-word clusters only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyOracle {
    /// Cluster per word id; None for fillers and UNK.
    pub cluster_of: Vec<Option<usize>>,
    /// Antonym partner per cluster.
    pub partner: Vec<usize>,
    pub task: TaskKind,
}

impl ToyOracle {
    /// Cluster of the unique key word in a sentence.
    pub fn key_cluster(&self, sentence: &[usize]) -> Result<usize> {
        let mut found = None;
        for &t in sentence {
            if let Some(c) = self.cluster_of.get(t).copied().flatten() {
                if found.is_some() {
                    return Err(Error::OracleUndefined(
                        "sentence has multiple key words".into(),
                    ));
                }
                found = Some(c);
            }
        }
        found.ok_or_else(|| Error::OracleUndefined("sentence has no key word".into()))
    }

    /// Label for a pair of key clusters.
    pub fn label_for_clusters(&self, cp: usize, ch: usize) -> usize {
        match self.task {
            TaskKind::Nli => {
                if cp == ch {
                    0
                } else if self.partner[cp] == ch {
                    1
                } else {
                    2
                }
            }
            TaskKind::Paraphrase => {
                if cp == ch {
                    1
                } else {
                    0
                }
            }
        }
    }

    pub fn label(&self, premise: &[usize], hypothesis: &[usize]) -> Result<usize> {
        let cp = self.key_cluster(premise)?;
        let ch = self.key_cluster(hypothesis)?;
        Ok(self.label_for_clusters(cp, ch))
    }

    pub fn label_example(&self, ex: &Example) -> Result<usize> {
        self.label(&ex.premise, &ex.hypothesis)
    }
}

/// Everything the generator produces: vocabulary, substitution tables, the
/// oracle, and the two splits.
#[derive(Debug, Clone)]
pub struct ToyWorld<F: Scalar> {
    pub vocab: Vocabulary<F>,
    pub tables: SubstitutionTables,
    pub oracle: ToyOracle,
    pub train: Dataset,
    pub eval: Dataset,
}

// Key-word direction cosines: within-cluster pairwise cosine is the
// product of two draws, so the floor is 0.949^2 > 0.9.
const KEY_COS_MIN: f64 = 0.949;
const KEY_COS_MAX: f64 = 0.98;
// Cosine between partner cluster directions. Antonyms are distributionally
// similar, so partner clusters must sit close in embedding space: far
// closer than unrelated clusters, yet with word-level cosine strictly
// below the 0.8 synonym-neighbor threshold (worst case here is
// 0.98^2 * 0.7 + (1 - 0.949^2) < 0.772), so synonym sets never absorb an
// antonym. Raising this above ~0.73 breaks that separation; lowering it
// much below ~0.6 makes antonym swaps so salient that obstinate examples
// vanish as soon as the classifier trains.
const ANTONYM_COS: f64 = 0.7;
// Filler vectors are rejected until this dissimilarity bound holds against
// every previously accepted vector.
const FILLER_COS_BOUND: f64 = 0.5;
const FILLER_MAX_TRIES: usize = 1000;

fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v = Vec::with_capacity(dim + 1);
        while v.len() < dim {
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
            v.push(r * c);
            if v.len() < dim {
                v.push(r * s);
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            for x in v.iter_mut() {
                *x /= n;
            }
            return v;
        }
    }
}

/// Generate the toy world: vocabulary geometry, substitution tables, and
/// oracle-labeled train/eval splits. Deterministic under `spec.seed`.
pub fn generate_toy_dataset<F: Scalar>(
    spec: &ToyTaskSpec,
    n_train: usize,
    n_eval: usize,
) -> Result<ToyWorld<F>> {
    spec.validate()?;
    if n_train < 1 || n_eval < 1 {
        return Err(Error::InfeasibleSpec(
            "n_train and n_eval must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_keys = spec.n_keys();

    // Each antonym pair of clusters owns a two-axis frame: a shared axis
    // and a contrast axis whose sign separates the partners, putting the
    // two directions at cosine ANTONYM_COS exactly. Members are tilted
    // toward a slot axis shared across clusters.
    let mut pair_id = vec![usize::MAX; spec.n_clusters];
    let mut next_pair = 0;
    for c in 0..spec.n_clusters {
        if pair_id[c] == usize::MAX {
            pair_id[c] = next_pair;
            pair_id[spec.antonym_pairing[c]] = next_pair;
            next_pair += 1;
        }
    }
    let shared = ((1.0 + ANTONYM_COS) / 2.0).sqrt();
    let contrast = ((1.0 - ANTONYM_COS) / 2.0).sqrt();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(n_keys + spec.n_filler + 1);
    for c in 0..spec.n_clusters {
        let sign = if c < spec.antonym_pairing[c] {
            1.0
        } else {
            -1.0
        };
        for j in 0..spec.cluster_size {
            let t: f64 = rng.gen();
            let cos = KEY_COS_MIN + t * (KEY_COS_MAX - KEY_COS_MIN);
            let sin = (1.0 - cos * cos).sqrt();
            let mut v = vec![0.0; spec.dim];
            v[2 * pair_id[c]] = cos * shared;
            v[2 * pair_id[c] + 1] = sign * cos * contrast;
            v[spec.n_clusters + j] = sin;
            vectors.push(v);
        }
    }

    // Fillers and UNK: random unit vectors kept away from everything.
    for i in 0..spec.n_filler + 1 {
        let mut accepted = None;
        for _ in 0..FILLER_MAX_TRIES {
            let v = random_unit_vector(&mut rng, spec.dim);
            if vectors.iter().all(|w| dot(&v, w).abs() < FILLER_COS_BOUND) {
                accepted = Some(v);
                break;
            }
        }
        match accepted {
            Some(v) => vectors.push(v),
            None => {
                return Err(Error::InfeasibleSpec(format!(
                    "could not place filler vector {i} with |cosine| < {FILLER_COS_BOUND} \
                     in dim {}; reduce n_filler or raise dim",
                    spec.dim
                )))
            }
        }
    }

    let mut words: Vec<String> = Vec::with_capacity(vectors.len());
    for c in 0..spec.n_clusters {
        for j in 0..spec.cluster_size {
            words.push(format!("k{c}_{j}"));
        }
    }
    for i in 0..spec.n_filler {
        words.push(format!("f{i}"));
    }
    words.push(UNK_TOKEN.to_string());

    // Exhaustive geometry check before trusting the synonym search:
    // within-cluster pairs stay synonym-close, partner-cluster pairs stay
    // inside the misalignment band (near, but under the 0.8 neighbor
    // threshold), everything else stays far apart.
    for a in 0..n_keys {
        for b in (a + 1)..vectors.len() {
            let cos = dot(&vectors[a], &vectors[b]);
            if b < n_keys {
                let (ca, cb) = (a / spec.cluster_size, b / spec.cluster_size);
                if ca == cb {
                    if cos < 0.9 {
                        return Err(Error::InfeasibleSpec(format!(
                            "within-cluster cosine {cos} below 0.9 for {} vs {}",
                            words[a], words[b]
                        )));
                    }
                    continue;
                }
                if spec.antonym_pairing[ca] == cb {
                    if !(0.55..0.78).contains(&cos) {
                        return Err(Error::InfeasibleSpec(format!(
                            "partner-cluster cosine {cos} outside [0.55, 0.78) for {} vs {}",
                            words[a], words[b]
                        )));
                    }
                    continue;
                }
            }
            if cos.abs() >= FILLER_COS_BOUND + 1e-9 {
                return Err(Error::InfeasibleSpec(format!(
                    "cross-cluster cosine {cos} not below {FILLER_COS_BOUND} for {} vs {}",
                    words[a], words[b]
                )));
            }
        }
    }

    let vocab = Vocabulary::new(
        words,
        vectors
            .iter()
            .map(|v| v.iter().map(|&x| from_f64::<F>(x)).collect())
            .collect(),
        spec.dim,
    )?;

    // Neighbor budget covers the whole cluster, so sets equal clusters.
    let lex_cfg = LexiconConfig {
        k: LexiconConfig::default().k.max(spec.cluster_size),
        ..LexiconConfig::default()
    };
    let synonyms = build_synonym_sets(&vocab, &lex_cfg)?;
    for c in 0..spec.n_clusters {
        let cluster: BTreeSet<usize> = (0..spec.cluster_size).map(|j| spec.key_id(c, j)).collect();
        for j in 0..spec.cluster_size {
            if synonyms[spec.key_id(c, j)] != cluster {
                return Err(Error::InfeasibleSpec(format!(
                    "synonym set of {} is not its cluster",
                    vocab.word(spec.key_id(c, j))
                )));
            }
        }
    }
    for (id, set) in synonyms.iter().enumerate().skip(n_keys) {
        if set.len() != 1 {
            return Err(Error::InfeasibleSpec(format!(
                "filler word {} has a non-singleton synonym set",
                vocab.word(id)
            )));
        }
    }

    let mut antonyms = vec![BTreeSet::new(); vocab.len()];
    let mut pos = vec!["FILL".to_string(); vocab.len()];
    let mut negation = std::collections::BTreeMap::new();
    for c in 0..spec.n_clusters {
        let p = spec.antonym_pairing[c];
        for j in 0..spec.cluster_size {
            let id = spec.key_id(c, j);
            antonyms[id] = (0..spec.cluster_size).map(|m| spec.key_id(p, m)).collect();
            pos[id] = "KEY".to_string();
            // Negation rewrites a key to the same slot of the partner
            // cluster, flipping the oracle label like an antonym does.
            negation.insert(id, spec.key_id(p, j));
        }
    }
    let unk = vocab.unk_id().expect("toy vocab ends with the UNK token");
    pos[unk] = crate::lexicon::WILDCARD_POS.to_string();
    let mut tables = SubstitutionTables {
        synonyms,
        antonyms,
        pos,
        negation,
    };
    tables.isolate(unk);

    let oracle = ToyOracle {
        cluster_of: (0..vocab.len())
            .map(|id| (id < n_keys).then(|| id / spec.cluster_size))
            .collect(),
        partner: spec.antonym_pairing.clone(),
        task: spec.task,
    };

    // Sentences: labels round-robin, clusters drawn to realize each label,
    // one key member at a random position, fillers elsewhere.
    let n_classes = spec.task.n_classes();
    let filler_base = n_keys;
    let mut examples = Vec::with_capacity(n_train + n_eval);
    for id in 0..n_train + n_eval {
        let label = id % n_classes;
        let cp = rng.gen_range(0..spec.n_clusters);
        let ch = match (spec.task, label) {
            (TaskKind::Nli, 0) | (TaskKind::Paraphrase, 1) => cp,
            (TaskKind::Nli, 1) => spec.antonym_pairing[cp],
            (TaskKind::Nli, 2) => {
                let others: Vec<usize> = (0..spec.n_clusters)
                    .filter(|&c| c != cp && c != spec.antonym_pairing[cp])
                    .collect();
                others[rng.gen_range(0..others.len())]
            }
            (TaskKind::Paraphrase, 0) => {
                let others: Vec<usize> = (0..spec.n_clusters).filter(|&c| c != cp).collect();
                others[rng.gen_range(0..others.len())]
            }
            _ => unreachable!("label < n_classes"),
        };
        // Length varies per sentence. Short sentences keep the key salient,
        // long ones bury it under fillers, so the split spans a difficulty
        // range instead of snapping from unlearnable to saturated as the
        // training size grows.
        let min_len = spec.sentence_len.min(3);
        let sentence = |cluster: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
            let len = rng.gen_range(min_len..=spec.sentence_len);
            let member = rng.gen_range(0..spec.cluster_size);
            let key_pos = rng.gen_range(0..len);
            (0..len)
                .map(|p| {
                    if p == key_pos {
                        spec.key_id(cluster, member)
                    } else {
                        filler_base + rng.gen_range(0..spec.n_filler)
                    }
                })
                .collect()
        };
        let premise = sentence(cp, &mut rng);
        let hypothesis = sentence(ch, &mut rng);
        debug_assert_eq!(oracle.label(&premise, &hypothesis).ok(), Some(label));
        examples.push(Example {
            id,
            premise,
            hypothesis,
            label,
        });
    }

    let eval_examples = examples.split_off(n_train);
    Ok(ToyWorld {
        vocab,
        tables,
        oracle,
        train: Dataset {
            examples,
            n_classes,
        },
        eval: Dataset {
            examples: eval_examples,
            n_classes,
        },
    })
}

/// Load a TSV dataset: `label<TAB>sentence1<TAB>sentence2` per line with
/// whitespace tokenization. Out-of-vocabulary tokens map to the UNK id.
pub fn load_dataset_tsv<F: Scalar>(
    path: &Path,
    vocab: &Vocabulary<F>,
    n_classes: usize,
) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut examples = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!(
                    "expected `label<TAB>sentence1<TAB>sentence2`, got {} fields",
                    fields.len()
                ),
            ));
        }
        let label: usize = fields[0].trim().parse().map_err(|_| {
            Error::parse(&path_str, lineno, format!("invalid label '{}'", fields[0]))
        })?;
        if label >= n_classes {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!("label {label} out of range for {n_classes} classes"),
            ));
        }
        let tokenize = |field: &str, which: &str| -> Result<Vec<usize>> {
            let tokens: Vec<&str> = field.split_whitespace().collect();
            if tokens.is_empty() {
                return Err(Error::parse(
                    &path_str,
                    lineno,
                    format!("empty {which} sentence field"),
                ));
            }
            tokens
                .iter()
                .map(|t| match vocab.id(t) {
                    Some(id) => Ok(id),
                    None => vocab.unk_id().ok_or_else(|| {
                        Error::parse(
                            &path_str,
                            lineno,
                            format!(
                                "out-of-vocabulary token '{t}' and no '{UNK_TOKEN}' in vocabulary"
                            ),
                        )
                    }),
                })
                .collect()
        };
        let premise = tokenize(fields[1], "premise")?;
        let hypothesis = tokenize(fields[2], "hypothesis")?;
        examples.push(Example {
            id: examples.len(),
            premise,
            hypothesis,
            label,
        });
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        examples,
        n_classes,
    })
}

/// Write a dataset in the TSV format read by [`load_dataset_tsv`].
pub fn save_dataset_tsv<F: Scalar>(
    path: &Path,
    dataset: &Dataset,
    vocab: &Vocabulary<F>,
) -> Result<()> {
    let mut out = String::new();
    for ex in dataset.iter() {
        let render = |tokens: &[usize]| {
            tokens
                .iter()
                .map(|&t| vocab.word(t))
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            ex.label,
            render(&ex.premise),
            render(&ex.hypothesis)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
