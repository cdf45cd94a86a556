//! Vocabulary loading and word-substitution tables.
//!
//! The lexicon layer owns the embedding table, one part-of-speech tag per
//! word, and the per-word substitution sets: synonym sets built by
//! nearest-neighbor search in the embedding space, antonym sets and the
//! negation map read from TSV files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{dot, from_f64, norm, Scalar};

/// Part-of-speech wildcard: matches any tag.
pub const WILDCARD_POS: &str = "X";

/// Reserved token for out-of-vocabulary words.
pub const UNK_TOKEN: &str = "<unk>";

/// A fixed word list with one embedding vector per word.
///
/// Ids are dense `0..len()` in file (or construction) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary<F: Scalar> {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    vectors: Vec<Vec<F>>,
    unk_id: Option<usize>,
}

impl<F: Scalar> Vocabulary<F> {
    pub fn new(words: Vec<String>, vectors: Vec<Vec<F>>, dim: usize) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::InvalidConfig("vocabulary must be nonempty".into()));
        }
        if dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "embedding dim must be >= 2, got {dim}"
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate word '{w}'")));
            }
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: v.len(),
                    right: dim,
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "non-finite embedding entry for word '{}'",
                    words[i]
                )));
            }
        }
        let unk_id = index.get(UNK_TOKEN).copied();
        Ok(Vocabulary {
            words,
            index,
            dim,
            vectors,
            unk_id,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, id: usize) -> &[F] {
        &self.vectors[id]
    }

    /// Id of the reserved [`UNK_TOKEN`], if the vocabulary contains it.
    pub fn unk_id(&self) -> Option<usize> {
        self.unk_id
    }

    /// Mean of the embedding vectors for a token sequence.
    pub fn mean_vector(&self, tokens: &[usize]) -> Vec<F> {
        let mut acc = vec![F::zero(); self.dim];
        for &t in tokens {
            for (a, &x) in acc.iter_mut().zip(self.vectors[t].iter()) {
                *a = *a + x;
            }
        }
        let n = from_f64::<F>(tokens.len() as f64);
        for a in acc.iter_mut() {
            *a = *a / n;
        }
        acc
    }
}

/// Parameters for synonym-set construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexiconConfig {
    /// Maximum number of neighbors kept per word.
    pub k: usize,
    /// Minimum cosine similarity for a neighbor to qualify, in [-1, 1].
    pub sim_threshold: f64,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig {
            k: 8,
            sim_threshold: 0.8,
        }
    }
}

impl LexiconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("lexicon.k must be >= 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.sim_threshold) {
            return Err(Error::InvalidConfig(format!(
                "lexicon.sim_threshold must be in [-1, 1], got {}",
                self.sim_threshold
            )));
        }
        Ok(())
    }
}

/// Per-word substitution data: synonym sets, antonym sets, one PoS tag per
/// word, and the negation rewrite map.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutionTables {
    /// Synonym set per word id; always contains the word itself.
    pub synonyms: Vec<BTreeSet<usize>>,
    /// Antonym set per word id; may be empty.
    pub antonyms: Vec<BTreeSet<usize>>,
    /// PoS tag per word id; [`WILDCARD_POS`] when unknown.
    pub pos: Vec<String>,
    /// Negation rewrites, stored in both directions (add and remove).
    pub negation: BTreeMap<usize, usize>,
}

impl SubstitutionTables {
    /// Tables with singleton synonym sets, no antonyms, wildcard tags.
    pub fn empty(vocab_len: usize) -> Self {
        SubstitutionTables {
            synonyms: (0..vocab_len).map(|i| BTreeSet::from([i])).collect(),
            antonyms: vec![BTreeSet::new(); vocab_len],
            pos: vec![WILDCARD_POS.to_string(); vocab_len],
            negation: BTreeMap::new(),
        }
    }

    pub fn vocab_len(&self) -> usize {
        self.synonyms.len()
    }

    /// True when `a` and `b` may substitute for each other under the PoS
    /// constraint: equal tags, or either is the wildcard.
    pub fn pos_compatible(&self, a: usize, b: usize) -> bool {
        let (ta, tb) = (&self.pos[a], &self.pos[b]);
        ta == tb || ta == WILDCARD_POS || tb == WILDCARD_POS
    }

    /// Strip a word of every substitution relation (used for the UNK token).
    pub fn isolate(&mut self, id: usize) {
        self.synonyms[id] = BTreeSet::from([id]);
        for set in self.synonyms.iter_mut() {
            if set.len() > 1 {
                set.remove(&id);
            }
        }
        self.antonyms[id].clear();
        for set in self.antonyms.iter_mut() {
            set.remove(&id);
        }
        self.negation.remove(&id);
        self.negation.retain(|_, v| *v != id);
    }
}

/// Cosine similarity of two vectors, clamped to [-1, 1].
///
/// Errors on a zero-norm input or a length mismatch.
pub fn cosine_similarity<F: Scalar>(u: &[F], v: &[F]) -> Result<F> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == F::zero() || nv == F::zero() {
        return Err(Error::DegenerateVector);
    }
    let sim = dot(u, v) / (nu * nv);
    Ok(sim.min(F::one()).max(-F::one()))
}

/// Parse a whitespace-separated embedding file: one `word v1 .. vdim` line
/// per word. Duplicate words, inconsistent dimensions, and non-finite
/// entries are errors; blank lines are skipped.
pub fn load_embedding_table<F: Scalar>(path: &Path) -> Result<Vocabulary<F>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut words = Vec::new();
    let mut vectors: Vec<Vec<F>> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut dim: Option<usize> = None;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("nonblank line has a first token");
        let mut vec = Vec::new();
        for tok in parts {
            let x: F = tok
                .parse()
                .map_err(|_| Error::parse(&path_str, lineno, format!("invalid number '{tok}'")))?;
            if !x.is_finite() {
                return Err(Error::parse(
                    &path_str,
                    lineno,
                    format!("non-finite value '{tok}'"),
                ));
            }
            vec.push(x);
        }
        match dim {
            None => {
                if vec.len() < 2 {
                    return Err(Error::parse(
                        &path_str,
                        lineno,
                        format!("embedding dim must be >= 2, got {}", vec.len()),
                    ));
                }
                dim = Some(vec.len());
            }
            Some(d) if d != vec.len() => {
                return Err(Error::parse(
                    &path_str,
                    lineno,
                    format!("inconsistent dim: expected {d}, got {}", vec.len()),
                ));
            }
            _ => {}
        }
        if seen.insert(word.to_string(), lineno).is_some() {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!("duplicate word '{word}'"),
            ));
        }
        words.push(word.to_string());
        vectors.push(vec);
    }

    if words.is_empty() {
        return Err(Error::EmptyVocabulary { path: path_str });
    }
    Vocabulary::new(words, vectors, dim.expect("nonempty vocab has a dim"))
}

/// Build the synonym set for every word: itself plus the top-`k` neighbors
/// by cosine similarity at or above the threshold. Ties are broken by lower
/// word id. Words whose best neighbor falls below the threshold keep the
/// singleton set; zero-norm vectors never qualify as neighbors.
pub fn build_synonym_sets<F: Scalar>(
    vocab: &Vocabulary<F>,
    cfg: &LexiconConfig,
) -> Result<Vec<BTreeSet<usize>>> {
    cfg.validate()?;
    let v = vocab.len();
    let norms: Vec<F> = (0..v).map(|i| norm(vocab.vector(i))).collect();
    let threshold = from_f64::<F>(cfg.sim_threshold);
    let mut sets = Vec::with_capacity(v);

    for i in 0..v {
        let mut set = BTreeSet::from([i]);
        if norms[i] > F::zero() {
            let mut candidates: Vec<(F, usize)> = Vec::new();
            for j in 0..v {
                if j == i || norms[j] == F::zero() {
                    continue;
                }
                let sim = dot(vocab.vector(i), vocab.vector(j)) / (norms[i] * norms[j]);
                let sim = sim.min(F::one()).max(-F::one());
                if sim >= threshold {
                    candidates.push((sim, j));
                }
            }
            candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, j) in candidates.iter().take(cfg.k) {
                set.insert(j);
            }
        }
        sets.push(set);
    }
    Ok(sets)
}

/// Warning counters from lexicon file loading (skipped lines and dropped
/// out-of-vocabulary entries).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadWarnings {
    pub antonym: usize,
    pub pos: usize,
    pub negation: usize,
}

/// Parse a TSV antonym lexicon: `word<TAB>ant1,ant2,...` per line.
///
/// Out-of-vocabulary head words skip the line; out-of-vocabulary antonyms
/// are dropped. Both increment the returned warning count. The relation is
/// not symmetrized: the file is authoritative.
pub fn load_antonym_lexicon<F: Scalar>(
    path: &Path,
    vocab: &Vocabulary<F>,
) -> Result<(Vec<BTreeSet<usize>>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut table = vec![BTreeSet::new(); vocab.len()];
    let mut warnings = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(
                &path_str,
                lineno,
                "expected `word<TAB>antonym1,antonym2,...`",
            ));
        }
        let Some(head) = vocab.id(fields[0]) else {
            warnings += 1;
            continue;
        };
        for raw in fields[1].split(',') {
            let a = raw.trim();
            if a.is_empty() {
                return Err(Error::parse(&path_str, lineno, "empty antonym entry"));
            }
            if a == fields[0] {
                return Err(Error::parse(
                    &path_str,
                    lineno,
                    format!("word '{a}' listed as its own antonym"),
                ));
            }
            match vocab.id(a) {
                Some(id) => {
                    table[head].insert(id);
                }
                None => warnings += 1,
            }
        }
    }
    Ok((table, warnings))
}

/// Parse a TSV PoS lexicon: `word<TAB>tag` per line, one tag per word.
/// Unlisted words keep the wildcard tag. Conflicting tags are an error.
pub fn load_pos_lexicon<F: Scalar>(
    path: &Path,
    vocab: &Vocabulary<F>,
) -> Result<(Vec<String>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut tags = vec![WILDCARD_POS.to_string(); vocab.len()];
    let mut explicit = vec![false; vocab.len()];
    let mut warnings = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(&path_str, lineno, "expected `word<TAB>tag`"));
        }
        let Some(id) = vocab.id(fields[0]) else {
            warnings += 1;
            continue;
        };
        if explicit[id] && tags[id] != fields[1] {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!(
                    "conflicting tag for '{}': '{}' vs '{}'",
                    fields[0], tags[id], fields[1]
                ),
            ));
        }
        tags[id] = fields[1].to_string();
        explicit[id] = true;
    }
    Ok((tags, warnings))
}

/// Parse a TSV negation lexicon: `word<TAB>negated` per line. Both rewrite
/// directions are stored so the attack can add or remove negation with one
/// map lookup.
pub fn load_negation_lexicon<F: Scalar>(
    path: &Path,
    vocab: &Vocabulary<F>,
) -> Result<(BTreeMap<usize, usize>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut map = BTreeMap::new();
    let mut warnings = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(
                &path_str,
                lineno,
                "expected `word<TAB>negated`",
            ));
        }
        if fields[0] == fields[1] {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!("word '{}' negated to itself", fields[0]),
            ));
        }
        let (a, b) = match (vocab.id(fields[0]), vocab.id(fields[1])) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                warnings += 1;
                continue;
            }
        };
        for (from, to) in [(a, b), (b, a)] {
            match map.get(&from) {
                Some(&existing) if existing != to => {
                    return Err(Error::parse(
                        &path_str,
                        lineno,
                        format!("conflicting negation for '{}'", vocab.word(from)),
                    ));
                }
                _ => {
                    map.insert(from, to);
                }
            }
        }
    }
    Ok((map, warnings))
}

/// Assemble the full substitution tables from an embedding-derived synonym
/// search plus the three lexicon files. The UNK token, when present, is
/// isolated from every relation.
pub fn build_tables<F: Scalar>(
    vocab: &Vocabulary<F>,
    cfg: &LexiconConfig,
    antonym_path: &Path,
    pos_path: &Path,
    negation_path: &Path,
) -> Result<(SubstitutionTables, LoadWarnings)> {
    let synonyms = build_synonym_sets(vocab, cfg)?;
    let (antonyms, antonym_warnings) = load_antonym_lexicon(antonym_path, vocab)?;
    let (pos, pos_warnings) = load_pos_lexicon(pos_path, vocab)?;
    let (negation, negation_warnings) = load_negation_lexicon(negation_path, vocab)?;
    let mut tables = SubstitutionTables {
        synonyms,
        antonyms,
        pos,
        negation,
    };
    if let Some(unk) = vocab.unk_id() {
        tables.isolate(unk);
    }
    Ok((
        tables,
        LoadWarnings {
            antonym: antonym_warnings,
            pos: pos_warnings,
            negation: negation_warnings,
        },
    ))
}
