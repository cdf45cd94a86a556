//! Classifier abstraction used by attacks and evaluation, plus the
//! instrumented doubles tests use to pin down attack behavior.

use std::cell::Cell;

use crate::data::Example;
use crate::error::Result;
use crate::scalar::Scalar;

/// Output of one classification: the penultimate-layer representation (the
/// space where the contrastive distance is measured), raw logits, and the
/// softmax distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<F: Scalar> {
    pub representation: Vec<F>,
    pub logits: Vec<F>,
    pub probs: Vec<F>,
}

impl<F: Scalar> ForwardOutput<F> {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Anything that maps a sentence pair to class probabilities.
pub trait TextClassifier<F: Scalar> {
    fn n_classes(&self) -> usize;
    fn classify(&self, ex: &Example) -> Result<ForwardOutput<F>>;
}

/// Index of the largest entry; ties resolve to the lower index.
pub fn argmax<F: Scalar>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Always predicts one fixed class. Maximally obstinate, never fickle.
#[derive(Debug, Clone)]
pub struct ConstantClassifier {
    pub class: usize,
    pub n_classes: usize,
}

impl<F: Scalar> TextClassifier<F> for ConstantClassifier {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn classify(&self, _ex: &Example) -> Result<ForwardOutput<F>> {
        let top = F::from(0.6).unwrap();
        let rest = (F::one() - top) / F::from(self.n_classes.max(2) - 1).unwrap();
        let probs: Vec<F> = (0..self.n_classes)
            .map(|i| if i == self.class { top } else { rest })
            .collect();
        Ok(ForwardOutput {
            representation: vec![F::one(), F::zero()],
            logits: probs.iter().map(|p| p.ln()).collect(),
            probs,
        })
    }
}

/// Wrapper that counts forward calls, for query-accounting checks.
pub struct CountingClassifier<'a, F: Scalar, C: TextClassifier<F>> {
    inner: &'a C,
    calls: Cell<usize>,
    _marker: std::marker::PhantomData<F>,
}

impl<'a, F: Scalar, C: TextClassifier<F>> CountingClassifier<'a, F, C> {
    pub fn new(inner: &'a C) -> Self {
        CountingClassifier {
            inner,
            calls: Cell::new(0),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<'a, F: Scalar, C: TextClassifier<F>> TextClassifier<F> for CountingClassifier<'a, F, C> {
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    fn classify(&self, ex: &Example) -> Result<ForwardOutput<F>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.classify(ex)
    }
}
