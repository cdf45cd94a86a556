//! The differentiable sentence-pair classifier: mean-pooled embeddings
//! feed a [u; v; |u-v|; u*v] feature through one tanh hidden layer (the
//! representation used for contrastive distances) into softmax logits.
//! Gradients are exact and hand-derived, including the paths through the
//! representation-distance terms of the contrastive losses.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{ForwardOutput, TextClassifier};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::lexicon::Vocabulary;
use crate::scalar::{dot, from_f64, norm, to_f64, Scalar};

/// All parameters of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F: Scalar> {
    /// V x dim word embeddings, initialized from the vocabulary.
    pub embedding: Vec<Vec<F>>,
    /// hidden x 4*dim first-layer weights.
    pub w1: Vec<Vec<F>>,
    pub b1: Vec<F>,
    /// n_classes x hidden output weights.
    pub w2: Vec<Vec<F>>,
    pub b2: Vec<F>,
    pub dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
    /// When false, embedding rows receive no gradient and never move.
    pub train_embedding: bool,
}

/// Gradient of a batch loss, shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F: Scalar> {
    pub embedding: Vec<Vec<F>>,
    pub w1: Vec<Vec<F>>,
    pub b1: Vec<F>,
    pub w2: Vec<Vec<F>>,
    pub b2: Vec<F>,
    pub train_embedding: bool,
}

/// Per-example loss ingredients: cross-entropy plus the representation
/// distances to the perturbed variants. `None` marks a masked term, which
/// contributes exactly zero to loss and gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemTerms<F: Scalar> {
    pub ce: F,
    pub d_f: Option<F>,
    pub d_o: Option<F>,
}

/// One training item: the original example and its sampled variants.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub example: Example,
    /// Synonym-perturbed variant, if one was generated this iteration.
    pub fickle: Option<Example>,
    /// Antonym-perturbed variant, if any word had antonyms.
    pub obstinate: Option<Example>,
}

impl BatchItem {
    pub fn plain(example: Example) -> Self {
        BatchItem {
            example,
            fickle: None,
            obstinate: None,
        }
    }
}

/// Which loss the batch gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec<F: Scalar> {
    CrossEntropy,
    /// ce + alpha * d_f + beta * max(0, margin - d_o)
    BatPair {
        alpha: F,
        beta: F,
        margin: F,
    },
    /// ce + lambda * max(0, d_f + margin - d_o)
    BatTriplet {
        lambda: F,
        margin: F,
    },
}

impl<F: Scalar> LossSpec<F> {
    /// Loss of one item. Masked distance terms contribute zero; in the
    /// triplet hinge a masked obstinate term drops `margin - d_o` entirely.
    pub fn item_loss(&self, t: &ItemTerms<F>) -> F {
        match *self {
            LossSpec::CrossEntropy => t.ce,
            LossSpec::BatPair {
                alpha,
                beta,
                margin,
            } => {
                let fickle = t.d_f.map_or(F::zero(), |d| alpha * d);
                let obstinate = t
                    .d_o
                    .map_or(F::zero(), |d| beta * (margin - d).max(F::zero()));
                t.ce + fickle + obstinate
            }
            LossSpec::BatTriplet { lambda, margin } => {
                let z = t.d_f.unwrap_or(F::zero()) + t.d_o.map_or(F::zero(), |d| margin - d);
                t.ce + lambda * z.max(F::zero())
            }
        }
    }

    /// (d loss / d d_f, d loss / d d_o) for one item. Hinges use the
    /// inactive subgradient at their boundary (zero when the argument is
    /// not strictly positive).
    fn distance_coefficients(&self, t: &ItemTerms<F>) -> (F, F) {
        match *self {
            LossSpec::CrossEntropy => (F::zero(), F::zero()),
            LossSpec::BatPair {
                alpha,
                beta,
                margin,
            } => {
                let kf = if t.d_f.is_some() { alpha } else { F::zero() };
                let ko = match t.d_o {
                    Some(d) if margin - d > F::zero() => -beta,
                    _ => F::zero(),
                };
                (kf, ko)
            }
            LossSpec::BatTriplet { lambda, margin } => {
                let z = t.d_f.unwrap_or(F::zero()) + t.d_o.map_or(F::zero(), |d| margin - d);
                if z > F::zero() {
                    (
                        if t.d_f.is_some() { lambda } else { F::zero() },
                        if t.d_o.is_some() { -lambda } else { F::zero() },
                    )
                } else {
                    (F::zero(), F::zero())
                }
            }
        }
    }
}

/// Intermediate activations of one forward pass, kept for backprop.
struct Tape<F: Scalar> {
    premise: Vec<usize>,
    hypothesis: Vec<usize>,
    u: Vec<F>,
    v: Vec<F>,
    feature: Vec<F>,
    representation: Vec<F>,
    probs: Vec<F>,
}

fn sign<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        F::one()
    } else if x < F::zero() {
        -F::one()
    } else {
        F::zero()
    }
}

impl<F: Scalar> ModelParams<F> {
    /// Sorted-token mean pooling: permutation invariant bit-for-bit.
    fn mean_pool(&self, tokens: &[usize]) -> Vec<F> {
        let mut sorted = tokens.to_vec();
        sorted.sort_unstable();
        let mut acc = vec![F::zero(); self.dim];
        for &t in &sorted {
            for (a, &x) in acc.iter_mut().zip(self.embedding[t].iter()) {
                *a = *a + x;
            }
        }
        let n = from_f64::<F>(sorted.len() as f64);
        for a in acc.iter_mut() {
            *a = *a / n;
        }
        acc
    }

    fn forward_full(&self, ex: &Example) -> Result<Tape<F>> {
        if ex.premise.is_empty() || ex.hypothesis.is_empty() {
            return Err(Error::EmptySentence { id: ex.id });
        }
        let u = self.mean_pool(&ex.premise);
        let v = self.mean_pool(&ex.hypothesis);
        let d = self.dim;
        let mut feature = vec![F::zero(); 4 * d];
        for i in 0..d {
            feature[i] = u[i];
            feature[d + i] = v[i];
            feature[2 * d + i] = (u[i] - v[i]).abs();
            feature[3 * d + i] = u[i] * v[i];
        }
        let representation: Vec<F> = self
            .w1
            .iter()
            .zip(self.b1.iter())
            .map(|(row, &b)| (dot(row, &feature) + b).tanh())
            .collect();
        let logits: Vec<F> = self
            .w2
            .iter()
            .zip(self.b2.iter())
            .map(|(row, &b)| dot(row, &representation) + b)
            .collect();
        let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total = exps.iter().fold(F::zero(), |a, &x| a + x);
        let probs: Vec<F> = exps.iter().map(|&e| e / total).collect();
        Ok(Tape {
            premise: ex.premise.clone(),
            hypothesis: ex.hypothesis.clone(),
            u,
            v,
            feature,
            representation,
            probs,
        })
    }

    /// Backprop one tape. `d_logits` seeds the softmax side (empty slice
    /// for none), `d_repr_extra` seeds the representation directly (the
    /// distance-term path).
    // One index walks several parallel buffers per loop; zip chains would
    // bury the arithmetic.
    #[allow(clippy::needless_range_loop)]
    fn backward(
        &self,
        tape: &Tape<F>,
        d_logits: &[F],
        d_repr_extra: &[F],
        grads: &mut Gradients<F>,
    ) {
        let d = self.dim;
        let mut d_repr = vec![F::zero(); self.hidden];
        if !d_logits.is_empty() {
            for (j, &dl) in d_logits.iter().enumerate() {
                for k in 0..self.hidden {
                    grads.w2[j][k] = grads.w2[j][k] + dl * tape.representation[k];
                    d_repr[k] = d_repr[k] + self.w2[j][k] * dl;
                }
                grads.b2[j] = grads.b2[j] + dl;
            }
        }
        if !d_repr_extra.is_empty() {
            for k in 0..self.hidden {
                d_repr[k] = d_repr[k] + d_repr_extra[k];
            }
        }

        let mut d_feature = vec![F::zero(); 4 * d];
        for k in 0..self.hidden {
            let r = tape.representation[k];
            let dz = d_repr[k] * (F::one() - r * r);
            if dz == F::zero() {
                continue;
            }
            for m in 0..4 * d {
                grads.w1[k][m] = grads.w1[k][m] + dz * tape.feature[m];
                d_feature[m] = d_feature[m] + self.w1[k][m] * dz;
            }
            grads.b1[k] = grads.b1[k] + dz;
        }

        if !self.train_embedding {
            return;
        }
        let mut d_u = vec![F::zero(); d];
        let mut d_v = vec![F::zero(); d];
        for i in 0..d {
            let s = sign(tape.u[i] - tape.v[i]);
            d_u[i] = d_feature[i] + s * d_feature[2 * d + i] + tape.v[i] * d_feature[3 * d + i];
            d_v[i] = d_feature[d + i] - s * d_feature[2 * d + i] + tape.u[i] * d_feature[3 * d + i];
        }
        let inv_a = F::one() / from_f64::<F>(tape.premise.len() as f64);
        for &t in &tape.premise {
            for i in 0..d {
                grads.embedding[t][i] = grads.embedding[t][i] + d_u[i] * inv_a;
            }
        }
        let inv_b = F::one() / from_f64::<F>(tape.hypothesis.len() as f64);
        for &t in &tape.hypothesis {
            for i in 0..d {
                grads.embedding[t][i] = grads.embedding[t][i] + d_v[i] * inv_b;
            }
        }
    }

    /// Total number of trainable scalars in the canonical flat order
    /// [embedding (when trainable), w1, b1, w2, b2].
    pub fn n_trainable(&self) -> usize {
        let emb = if self.train_embedding {
            self.embedding.len() * self.dim
        } else {
            0
        };
        emb + self.hidden * 4 * self.dim
            + self.hidden
            + self.n_classes * self.hidden
            + self.n_classes
    }

    pub fn trainable_get(&self, idx: usize) -> F {
        *flat_index(
            idx,
            &self.embedding,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            self.train_embedding,
        )
    }

    pub fn trainable_add(&mut self, idx: usize, delta: F) {
        let train_embedding = self.train_embedding;
        let slot = flat_index_mut(
            idx,
            &mut self.embedding,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            train_embedding,
        );
        *slot = *slot + delta;
    }

    /// Reject a checkpoint whose shapes do not match the task at hand.
    pub fn check_shape(&self, vocab_len: usize, dim: usize, n_classes: usize) -> Result<()> {
        if self.embedding.len() != vocab_len || self.dim != dim {
            return Err(Error::ShapeMismatch(format!(
                "model has {} x {} embeddings, task needs {} x {}",
                self.embedding.len(),
                self.dim,
                vocab_len,
                dim
            )));
        }
        if self.n_classes != n_classes {
            return Err(Error::ShapeMismatch(format!(
                "model has {} classes, task has {}",
                self.n_classes, n_classes
            )));
        }
        Ok(())
    }
}

fn flat_index<'a, F: Scalar>(
    mut idx: usize,
    embedding: &'a [Vec<F>],
    w1: &'a [Vec<F>],
    b1: &'a [F],
    w2: &'a [Vec<F>],
    b2: &'a [F],
    train_embedding: bool,
) -> &'a F {
    if train_embedding {
        let n = embedding.len() * embedding[0].len();
        if idx < n {
            return &embedding[idx / embedding[0].len()][idx % embedding[0].len()];
        }
        idx -= n;
    }
    let n = w1.len() * w1[0].len();
    if idx < n {
        return &w1[idx / w1[0].len()][idx % w1[0].len()];
    }
    idx -= n;
    if idx < b1.len() {
        return &b1[idx];
    }
    idx -= b1.len();
    let n = w2.len() * w2[0].len();
    if idx < n {
        return &w2[idx / w2[0].len()][idx % w2[0].len()];
    }
    idx -= n;
    &b2[idx]
}

fn flat_index_mut<'a, F: Scalar>(
    mut idx: usize,
    embedding: &'a mut [Vec<F>],
    w1: &'a mut [Vec<F>],
    b1: &'a mut [F],
    w2: &'a mut [Vec<F>],
    b2: &'a mut [F],
    train_embedding: bool,
) -> &'a mut F {
    if train_embedding {
        let cols = embedding[0].len();
        let n = embedding.len() * cols;
        if idx < n {
            return &mut embedding[idx / cols][idx % cols];
        }
        idx -= n;
    }
    let cols = w1[0].len();
    let n = w1.len() * cols;
    if idx < n {
        return &mut w1[idx / cols][idx % cols];
    }
    idx -= n;
    if idx < b1.len() {
        return &mut b1[idx];
    }
    idx -= b1.len();
    let cols = w2[0].len();
    let n = w2.len() * cols;
    if idx < n {
        return &mut w2[idx / cols][idx % cols];
    }
    idx -= n;
    &mut b2[idx]
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(params: &ModelParams<F>) -> Self {
        Gradients {
            embedding: vec![vec![F::zero(); params.dim]; params.embedding.len()],
            w1: vec![vec![F::zero(); 4 * params.dim]; params.hidden],
            b1: vec![F::zero(); params.hidden],
            w2: vec![vec![F::zero(); params.hidden]; params.n_classes],
            b2: vec![F::zero(); params.n_classes],
            train_embedding: params.train_embedding,
        }
    }

    pub fn trainable_get(&self, idx: usize) -> F {
        *flat_index(
            idx,
            &self.embedding,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            self.train_embedding,
        )
    }
}

impl<F: Scalar> TextClassifier<F> for ModelParams<F> {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn classify(&self, ex: &Example) -> Result<ForwardOutput<F>> {
        let tape = self.forward_full(ex)?;
        let logits: Vec<F> = self
            .w2
            .iter()
            .zip(self.b2.iter())
            .map(|(row, &b)| dot(row, &tape.representation) + b)
            .collect();
        Ok(ForwardOutput {
            representation: tape.representation,
            logits,
            probs: tape.probs,
        })
    }
}

/// Xavier-uniform initialization: layer weights drawn from
/// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), biases zero,
/// embeddings copied from the vocabulary.
pub fn init_model<F: Scalar>(
    vocab: &Vocabulary<F>,
    hidden: usize,
    n_classes: usize,
    train_embedding: bool,
    seed: u64,
) -> Result<ModelParams<F>> {
    if hidden < 2 {
        return Err(Error::InvalidConfig(format!(
            "hidden size must be >= 2, got {hidden}"
        )));
    }
    if n_classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "n_classes must be >= 2, got {n_classes}"
        )));
    }
    let dim = vocab.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |rows: usize, cols: usize| -> Vec<Vec<F>> {
        let a = (6.0 / (cols + rows) as f64).sqrt();
        (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| from_f64::<F>(rng.gen::<f64>() * 2.0 * a - a))
                    .collect()
            })
            .collect()
    };
    let w1 = layer(hidden, 4 * dim);
    let w2 = layer(n_classes, hidden);
    Ok(ModelParams {
        embedding: (0..vocab.len()).map(|i| vocab.vector(i).to_vec()).collect(),
        w1,
        b1: vec![F::zero(); hidden],
        w2,
        b2: vec![F::zero(); n_classes],
        dim,
        hidden,
        n_classes,
        train_embedding,
    })
}

/// Cosine distance between two representations: 1 - cos, in [0, 2].
pub fn cosine_distance<F: Scalar>(r1: &[F], r2: &[F]) -> Result<F> {
    Ok(F::one() - crate::lexicon::cosine_similarity(r1, r2)?)
}

/// Gradient of d = 1 - cos(rx, rz) with respect to rx.
fn distance_grad<F: Scalar>(rx: &[F], rz: &[F]) -> Vec<F> {
    let nx = norm(rx);
    let nz = norm(rz);
    let cos = dot(rx, rz) / (nx * nz);
    let cos = cos.min(F::one()).max(-F::one());
    rx.iter()
        .zip(rz.iter())
        .map(|(&x, &z)| cos * x / (nx * nx) - z / (nx * nz))
        .collect()
}

/// Mean batch loss, its exact gradient, and the per-item terms.
///
/// Cross-entropy is taken on the original example only; distance terms
/// connect the original's representation to each available variant's, and
/// gradients flow through both forward passes.
pub fn compute_gradients<F: Scalar>(
    params: &ModelParams<F>,
    batch: &[BatchItem],
    loss: &LossSpec<F>,
) -> Result<(F, Gradients<F>, Vec<ItemTerms<F>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut grads = Gradients::zeros_like(params);
    let mut terms = Vec::with_capacity(batch.len());
    let scale = F::one() / from_f64::<F>(batch.len() as f64);
    let mut total = F::zero();

    for item in batch {
        let ex = &item.example;
        let tape_x = params.forward_full(ex)?;
        let ce = -tape_x.probs[ex.label].ln();

        let tape_f = match &item.fickle {
            Some(v) => Some(params.forward_full(v)?),
            None => None,
        };
        let tape_o = match &item.obstinate {
            Some(v) => Some(params.forward_full(v)?),
            None => None,
        };
        let d_f = match &tape_f {
            Some(t) => Some(cosine_distance(&tape_x.representation, &t.representation)?),
            None => None,
        };
        let d_o = match &tape_o {
            Some(t) => Some(cosine_distance(&tape_x.representation, &t.representation)?),
            None => None,
        };
        let item_terms = ItemTerms { ce, d_f, d_o };
        let item_loss = loss.item_loss(&item_terms);
        if !item_loss.is_finite() {
            return Err(Error::NonFiniteLoss { id: ex.id });
        }
        total = total + scale * item_loss;

        // Softmax cross-entropy seed on the original's logits.
        let mut d_logits = tape_x.probs.clone();
        d_logits[ex.label] = d_logits[ex.label] - F::one();
        for dl in d_logits.iter_mut() {
            *dl = *dl * scale;
        }

        let (kf, ko) = loss.distance_coefficients(&item_terms);
        let mut d_repr_x = vec![F::zero(); params.hidden];
        let mut seeded = false;
        if kf != F::zero() {
            let tf = tape_f.as_ref().expect("coefficient implies variant");
            let g = distance_grad(&tape_x.representation, &tf.representation);
            for (acc, gi) in d_repr_x.iter_mut().zip(g) {
                *acc = *acc + scale * kf * gi;
            }
            seeded = true;
            let g_f = distance_grad(&tf.representation, &tape_x.representation);
            let seed_f: Vec<F> = g_f.into_iter().map(|gi| scale * kf * gi).collect();
            params.backward(tf, &[], &seed_f, &mut grads);
        }
        if ko != F::zero() {
            let to = tape_o.as_ref().expect("coefficient implies variant");
            let g = distance_grad(&tape_x.representation, &to.representation);
            for (acc, gi) in d_repr_x.iter_mut().zip(g) {
                *acc = *acc + scale * ko * gi;
            }
            seeded = true;
            let g_o = distance_grad(&to.representation, &tape_x.representation);
            let seed_o: Vec<F> = g_o.into_iter().map(|gi| scale * ko * gi).collect();
            params.backward(to, &[], &seed_o, &mut grads);
        }
        params.backward(
            &tape_x,
            &d_logits,
            if seeded { &d_repr_x } else { &[] },
            &mut grads,
        );
        terms.push(item_terms);
    }
    Ok((total, grads, terms))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"BATFORGE";
const CHECKPOINT_VERSION: u32 = 1;

/// Write parameters as a versioned little-endian binary checkpoint.
pub fn save_checkpoint<F: Scalar>(params: &ModelParams<F>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for header in [
        params.embedding.len() as u64,
        params.dim as u64,
        params.hidden as u64,
        params.n_classes as u64,
        u64::from(params.train_embedding),
    ] {
        buf.extend_from_slice(&header.to_le_bytes());
    }
    let mut push = |xs: &[F]| {
        for &x in xs {
            buf.extend_from_slice(&to_f64(x).to_le_bytes());
        }
    };
    for row in &params.embedding {
        push(row);
    }
    for row in &params.w1 {
        push(row);
    }
    push(&params.b1);
    for row in &params.w2 {
        push(row);
    }
    push(&params.b2);
    fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a checkpoint written by [`save_checkpoint`]. Round-trips are
/// bit-exact.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<ModelParams<F>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::NotACheckpoint { path: path_str });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            path: path_str,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut off = 12;
    let mut read_u64 = || -> Result<u64> {
        let end = off + 8;
        let slice = bytes.get(off..end).ok_or_else(|| {
            Error::ShapeMismatch(format!("checkpoint {path_str} truncated in header"))
        })?;
        off = end;
        Ok(u64::from_le_bytes(slice.try_into().unwrap()))
    };
    let v = read_u64()? as usize;
    let dim = read_u64()? as usize;
    let hidden = read_u64()? as usize;
    let n_classes = read_u64()? as usize;
    let train_embedding = read_u64()? != 0;

    let n_params = v * dim + hidden * 4 * dim + hidden + n_classes * hidden + n_classes;
    let expected = off + 8 * n_params;
    if bytes.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint {path_str}: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let mut next = || -> F {
        let x = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        off += 8;
        from_f64(x)
    };
    let matrix = |rows: usize, cols: usize, next: &mut dyn FnMut() -> F| -> Vec<Vec<F>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| next()).collect())
            .collect()
    };
    let embedding = matrix(v, dim, &mut next);
    let w1 = matrix(hidden, 4 * dim, &mut next);
    let b1: Vec<F> = (0..hidden).map(|_| next()).collect();
    let w2 = matrix(n_classes, hidden, &mut next);
    let b2: Vec<F> = (0..n_classes).map(|_| next()).collect();
    Ok(ModelParams {
        embedding,
        w1,
        b1,
        w2,
        b2,
        dim,
        hidden,
        n_classes,
        train_embedding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy_dataset, ToyTaskSpec};

    fn toy_model(seed: u64) -> (ModelParams<f64>, Vec<Example>) {
        let world = generate_toy_dataset::<f64>(&ToyTaskSpec::default(), 40, 10).unwrap();
        let model = init_model(&world.vocab, 8, 3, true, seed).unwrap();
        (model, world.train.examples)
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let (a, _) = toy_model(3);
        let (b, _) = toy_model(3);
        assert_eq!(a, b);
        let (c, _) = toy_model(4);
        assert_ne!(a, c);
        assert_eq!(a.w1.len(), 8);
        assert_eq!(a.w1[0].len(), 4 * 12);
        assert_eq!(a.w2.len(), 3);
        assert_eq!(a.w2[0].len(), 8);
    }

    #[test]
    fn xavier_bounds_hold_over_many_samples() {
        let mut checked = 0usize;
        for seed in 0..40 {
            let (m, _) = toy_model(seed);
            let a1 = (6.0f64 / (4.0 * 12.0 + 8.0)).sqrt();
            let a2 = (6.0f64 / (8.0 + 3.0)).sqrt();
            for row in &m.w1 {
                for &w in row {
                    assert!(w.abs() <= a1);
                    checked += 1;
                }
            }
            for row in &m.w2 {
                for &w in row {
                    assert!(w.abs() <= a2);
                    checked += 1;
                }
            }
            assert!(m.b1.iter().chain(m.b2.iter()).all(|&b| b == 0.0));
        }
        assert!(checked >= 10_000, "{checked} sampled entries");
    }

    #[test]
    fn forward_invariants() {
        let (m, examples) = toy_model(1);
        let ex = &examples[0];
        let out = m.classify(ex).unwrap();
        let total: f64 = out.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(out.probs.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(out.representation.len(), 8);
        assert!(out.representation.iter().all(|&r| r.abs() < 1.0));

        // Identical sentences zero out the |u-v| block.
        let same = Example {
            id: 0,
            premise: ex.premise.clone(),
            hypothesis: ex.premise.clone(),
            label: 0,
        };
        let tape = m.forward_full(&same).unwrap();
        assert!(tape.feature[2 * m.dim..3 * m.dim].iter().all(|&x| x == 0.0));

        // Mean pooling: word order never matters.
        let mut shuffled = ex.clone();
        shuffled.premise.reverse();
        shuffled.hypothesis.rotate_left(2);
        assert_eq!(m.classify(&shuffled).unwrap(), out);

        let empty = Example {
            id: 9,
            premise: vec![],
            hypothesis: vec![0],
            label: 0,
        };
        assert!(matches!(
            m.classify(&empty),
            Err(Error::EmptySentence { id: 9 })
        ));
    }

    #[test]
    fn cosine_distance_range() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    fn batch_with_variants(examples: &[Example]) -> Vec<BatchItem> {
        examples
            .iter()
            .take(3)
            .map(|ex| {
                let mut fickle = ex.clone();
                fickle.premise[0] = (fickle.premise[0] + 1) % 16;
                let mut obstinate = ex.clone();
                obstinate.hypothesis[0] = (obstinate.hypothesis[0] + 2) % 16;
                BatchItem {
                    example: ex.clone(),
                    fickle: Some(fickle),
                    obstinate: Some(obstinate),
                }
            })
            .collect()
    }

    // Central finite differences against the analytic gradient.
    fn fd_check(loss: LossSpec<f64>, seed: u64, probes: usize) {
        let (mut model, examples) = toy_model(seed);
        let batch = batch_with_variants(&examples);
        let (_, grads, terms) = compute_gradients(&model, &batch, &loss).unwrap();
        // Stay away from hinge boundaries and |u-v| kinks.
        for t in &terms {
            if let LossSpec::BatPair { margin, .. } = loss {
                if let Some(d) = t.d_o {
                    assert!((margin - d).abs() > 1e-3, "probe batch at hinge boundary");
                }
            }
            if let LossSpec::BatTriplet { margin, .. } = loss {
                let z = t.d_f.unwrap_or(0.0) + t.d_o.map_or(0.0, |d| margin - d);
                assert!(z.abs() > 1e-3, "probe batch at hinge boundary");
            }
        }
        let h = 1e-4;
        let n = model.n_trainable();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(99));
        for _ in 0..probes {
            let idx = rng.gen_range(0..n);
            model.trainable_add(idx, h);
            let (lp, _, _) = compute_gradients(&model, &batch, &loss).unwrap();
            model.trainable_add(idx, -2.0 * h);
            let (lm, _, _) = compute_gradients(&model, &batch, &loss).unwrap();
            model.trainable_add(idx, h);
            let fd = (lp - lm) / (2.0 * h);
            let analytic = grads.trainable_get(idx);
            let denom = analytic.abs().max(fd.abs());
            let rel = if denom < 1e-10 {
                0.0
            } else {
                (analytic - fd).abs() / denom
            };
            assert!(rel < 1e-4, "idx {idx}: analytic {analytic} vs fd {fd}");
        }
    }

    #[test]
    fn finite_differences_cross_entropy() {
        fd_check(LossSpec::CrossEntropy, 11, 8);
    }

    #[test]
    fn finite_differences_bat_pair() {
        fd_check(
            LossSpec::BatPair {
                alpha: 1.0,
                beta: 1.2,
                margin: 1.0,
            },
            12,
            8,
        );
    }

    #[test]
    fn finite_differences_bat_triplet() {
        fd_check(
            LossSpec::BatTriplet {
                lambda: 1.0,
                margin: 1.0,
            },
            13,
            8,
        );
    }

    #[test]
    fn disconnected_parameters_get_zero_gradient() {
        let (model, examples) = toy_model(5);
        let batch = vec![BatchItem::plain(examples[0].clone())];
        let (_, grads, _) = compute_gradients(&model, &batch, &LossSpec::CrossEntropy).unwrap();
        let used: std::collections::BTreeSet<usize> = examples[0]
            .premise
            .iter()
            .chain(examples[0].hypothesis.iter())
            .copied()
            .collect();
        for (row, grad_row) in grads.embedding.iter().enumerate() {
            if !used.contains(&row) {
                assert!(grad_row.iter().all(|&g| g == 0.0), "row {row}");
            }
        }
        assert!(used
            .iter()
            .any(|&row| grads.embedding[row].iter().any(|&g| g != 0.0)));
    }

    #[test]
    fn frozen_embeddings_receive_no_gradient() {
        let world = generate_toy_dataset::<f64>(&ToyTaskSpec::default(), 10, 10).unwrap();
        let model = init_model(&world.vocab, 8, 3, false, 2).unwrap();
        let batch = vec![BatchItem::plain(world.train.examples[0].clone())];
        let (_, grads, _) = compute_gradients(&model, &batch, &LossSpec::CrossEntropy).unwrap();
        assert!(grads
            .embedding
            .iter()
            .all(|row| row.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn non_finite_loss_names_the_example() {
        let (mut model, examples) = toy_model(6);
        // Drive the gold probability to an exact 0 so ce = -ln(0) = inf.
        model.b2[examples[2].label] = f64::NEG_INFINITY;
        let batch = vec![BatchItem::plain(examples[2].clone())];
        let err = compute_gradients(&model, &batch, &LossSpec::CrossEntropy).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { id } if id == examples[2].id));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let (model, _) = toy_model(21);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded: ModelParams<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(model, loaded);
        // Same bytes when saved again.
        let again = dir.path().join("model2.ckpt");
        save_checkpoint(&loaded, &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn checkpoint_guards() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ckpt");
        fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(Error::NotACheckpoint { .. })
        ));

        let (model, _) = toy_model(22);
        let path = dir.path().join("versioned.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 9;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(Error::CheckpointVersion { found: 9, .. })
        ));

        let path = dir.path().join("good.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded: ModelParams<f64> = load_checkpoint(&path).unwrap();
        let err = loaded
            .check_shape(model.embedding.len(), model.dim, 2)
            .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)), "{err}");
        loaded
            .check_shape(model.embedding.len(), model.dim, 3)
            .unwrap();

        let path = dir.path().join("truncated.ckpt");
        let mut bytes = Vec::new();
        save_checkpoint(&model, Path::new(&path)).unwrap();
        bytes.extend(fs::read(&path).unwrap());
        bytes.truncate(bytes.len() - 16);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn loss_spec_masking_is_exact() {
        let terms = ItemTerms {
            ce: 0.0,
            d_f: Some(0.2),
            d_o: Some(0.4),
        };
        let pair: LossSpec<f64> = LossSpec::BatPair {
            alpha: 1.0,
            beta: 1.2,
            margin: 1.0,
        };
        assert!((pair.item_loss(&terms) - 0.92).abs() < 1e-9);

        let both_masked = ItemTerms {
            ce: 0.37,
            d_f: None,
            d_o: None,
        };
        assert_eq!(pair.item_loss(&both_masked), 0.37);
        let triplet = LossSpec::BatTriplet {
            lambda: 1.0,
            margin: 1.0,
        };
        assert_eq!(triplet.item_loss(&both_masked), 0.37);
    }
}
