//! Minimal differentiable classifiers and synthetic data.
//!
//! Two model kinds are supported: multinomial logistic regression and a
//! one-hidden-layer tanh MLP. Parameters live in one flat vector so the
//! sketch layer can treat a model update as a plain gradient vector. The
//! flattening order is fixed: weights layer by layer, each matrix row-major,
//! followed by its bias — identical on every client and every round.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Default learning rate for desk-scale classifier training.
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

/// Architecture of a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Softmax regression: `classes x dims` weights plus `classes` biases.
    Logistic { dims: usize, classes: usize },
    /// One tanh hidden layer: `hidden x dims + hidden + classes x hidden +
    /// classes` parameters.
    Mlp { dims: usize, hidden: usize, classes: usize },
}

impl ModelKind {
    pub fn dims(&self) -> usize {
        match *self {
            ModelKind::Logistic { dims, .. } | ModelKind::Mlp { dims, .. } => dims,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            ModelKind::Logistic { classes, .. } | ModelKind::Mlp { classes, .. } => classes,
        }
    }

    /// Length of the flat parameter vector.
    pub fn param_count(&self) -> usize {
        match *self {
            ModelKind::Logistic { dims, classes } => classes * dims + classes,
            ModelKind::Mlp { dims, hidden, classes } => {
                hidden * dims + hidden + classes * hidden + classes
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims() == 0 {
            return Err(Error::invalid("model needs at least one input dimension"));
        }
        if self.classes() < 2 {
            return Err(Error::invalid("model needs at least two classes"));
        }
        if let ModelKind::Mlp { hidden: 0, .. } = self {
            return Err(Error::invalid("mlp needs a non-empty hidden layer"));
        }
        Ok(())
    }
}

/// A classifier's flat parameter vector together with its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    kind: ModelKind,
    values: Vec<f64>,
}

impl ModelWeights {
    /// All-zero parameters.
    pub fn zeros(kind: ModelKind) -> Result<Self> {
        kind.validate()?;
        Ok(ModelWeights { kind, values: vec![0.0; kind.param_count()] })
    }

    /// Seeded small-uniform initialization, scaled by fan-in per layer.
    pub fn init(kind: ModelKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(kind.param_count());
        let mut layer = |rows: usize, cols: usize, values: &mut Vec<f64>| {
            let scale = 1.0 / (cols as f64).sqrt();
            for _ in 0..rows * cols {
                values.push(rng.gen_range(-scale..scale));
            }
            values.extend(std::iter::repeat_n(0.0, rows));
        };
        match kind {
            ModelKind::Logistic { dims, classes } => layer(classes, dims, &mut values),
            ModelKind::Mlp { dims, hidden, classes } => {
                layer(hidden, dims, &mut values);
                layer(classes, hidden, &mut values);
            }
        }
        Ok(ModelWeights { kind, values })
    }

    pub fn from_values(kind: ModelKind, values: Vec<f64>) -> Result<Self> {
        kind.validate()?;
        if values.len() != kind.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters for {kind:?}, got {}",
                kind.param_count(),
                values.len()
            )));
        }
        Ok(ModelWeights { kind, values })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Subtracts `delta` element-wise (applies a model update in place).
    pub fn apply_update(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.values.len() {
            return Err(Error::invalid(format!(
                "update length {} does not match parameter count {}",
                delta.len(),
                self.values.len()
            )));
        }
        for (w, d) in self.values.iter_mut().zip(delta) {
            *w -= d;
        }
        Ok(())
    }
}

/// Labeled feature vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(dims: usize, classes: usize, features: Vec<f64>, labels: Vec<u32>) -> Result<Self> {
        if dims == 0 || classes < 2 {
            return Err(Error::invalid("dataset needs dims >= 1 and classes >= 2"));
        }
        if labels.is_empty() || features.len() != labels.len() * dims {
            return Err(Error::invalid(format!(
                "feature storage {} does not match {} samples x {dims} dims",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::invalid(format!("label {l} outside [0, {classes})")));
        }
        Ok(Dataset { dims, classes, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_row(&self, sample: usize) -> &[f64] {
        &self.features[sample * self.dims..(sample + 1) * self.dims]
    }

    pub fn label(&self, sample: usize) -> u32 {
        self.labels[sample]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// New dataset holding the given sample indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("sample index {i} out of range")));
            }
            features.extend_from_slice(self.feature_row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(self.dims, self.classes, features, labels)
    }

    /// Order-insensitive content fingerprint, used to check that runs share
    /// identical shards.
    pub fn content_hash(&self) -> u64 {
        let mut rows: Vec<u64> = (0..self.len())
            .map(|i| {
                let mut h = 0xcbf2_9ce4_8422_2325u64;
                let mut mix = |bits: u64| {
                    h ^= bits;
                    h = h.wrapping_mul(0x1000_0000_01b3);
                };
                mix(self.labels[i] as u64);
                for v in self.feature_row(i) {
                    mix(v.to_bits());
                }
                h
            })
            .collect();
        rows.sort_unstable();
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for r in rows {
            h ^= r;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

fn check_compat(w: &ModelWeights, data: &Dataset) -> Result<()> {
    if w.kind.dims() != data.dims() || w.kind.classes() != data.classes() {
        return Err(Error::invalid(format!(
            "model expects {}d/{} classes, dataset has {}d/{}",
            w.kind.dims(),
            w.kind.classes(),
            data.dims(),
            data.classes()
        )));
    }
    Ok(())
}

/// Mean cross-entropy over the batch and its exact gradient in the flat
/// parameter layout.
pub fn loss_and_grad(w: &ModelWeights, batch: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_compat(w, batch)?;
    if batch.is_empty() {
        return Err(Error::invalid("batch must be non-empty"));
    }
    match w.kind {
        ModelKind::Logistic { dims, classes } => {
            let (weights, bias) = w.values.split_at(classes * dims);
            let mut grad = vec![0.0; w.len()];
            let (gw, gb) = grad.split_at_mut(classes * dims);
            let inv_n = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            let mut logits = vec![0.0; classes];
            for s in 0..batch.len() {
                let x = batch.feature_row(s);
                for (c, logit) in logits.iter_mut().enumerate() {
                    *logit = bias[c] + dot(&weights[c * dims..(c + 1) * dims], x);
                }
                loss += softmax_loss_into(&mut logits, batch.label(s) as usize) * inv_n;
                for c in 0..classes {
                    let d = logits[c] * inv_n;
                    for (g, xv) in gw[c * dims..(c + 1) * dims].iter_mut().zip(x) {
                        *g += d * xv;
                    }
                    gb[c] += d;
                }
            }
            Ok((loss, grad))
        }
        ModelKind::Mlp { dims, hidden, classes } => {
            let w1_len = hidden * dims;
            let w2_len = classes * hidden;
            let (w1, rest) = w.values.split_at(w1_len);
            let (b1, rest) = rest.split_at(hidden);
            let (w2, _b2) = rest.split_at(w2_len);
            let b2 = &rest[w2_len..];
            let mut grad = vec![0.0; w.len()];
            let inv_n = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            let mut act = vec![0.0; hidden];
            let mut logits = vec![0.0; classes];
            for s in 0..batch.len() {
                let x = batch.feature_row(s);
                for (h, a) in act.iter_mut().enumerate() {
                    *a = (b1[h] + dot(&w1[h * dims..(h + 1) * dims], x)).tanh();
                }
                for (c, logit) in logits.iter_mut().enumerate() {
                    *logit = b2[c] + dot(&w2[c * hidden..(c + 1) * hidden], &act);
                }
                loss += softmax_loss_into(&mut logits, batch.label(s) as usize) * inv_n;
                let (g1, grest) = grad.split_at_mut(w1_len);
                let (gb1, grest) = grest.split_at_mut(hidden);
                let (g2, gb2) = grest.split_at_mut(w2_len);
                for h in 0..hidden {
                    let mut da = 0.0;
                    for c in 0..classes {
                        g2[c * hidden + h] += logits[c] * inv_n * act[h];
                        da += w2[c * hidden + h] * logits[c];
                    }
                    let dz = da * inv_n * (1.0 - act[h] * act[h]);
                    for (g, xv) in g1[h * dims..(h + 1) * dims].iter_mut().zip(x) {
                        *g += dz * xv;
                    }
                    gb1[h] += dz;
                }
                for c in 0..classes {
                    gb2[c] += logits[c] * inv_n;
                }
            }
            Ok((loss, grad))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Replaces `logits` with softmax probabilities minus the one-hot target and
/// returns the cross-entropy of the target class.
fn softmax_loss_into(logits: &mut [f64], target: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[target];
    for z in logits.iter_mut() {
        *z = (*z - lse).exp();
    }
    logits[target] -= 1.0;
    loss
}

/// One gradient-descent step: `w - lr * grad`.
pub fn sgd_step(w: &ModelWeights, grad: &[f64], lr: f64) -> Result<ModelWeights> {
    if grad.len() != w.len() {
        return Err(Error::invalid(format!(
            "gradient length {} does not match parameter count {}",
            grad.len(),
            w.len()
        )));
    }
    let values = w.values.iter().zip(grad).map(|(wv, g)| wv - lr * g).collect();
    Ok(ModelWeights { kind: w.kind, values })
}

/// Percentage of argmax-correct predictions. Ties resolve to the lowest
/// class index.
pub fn evaluate(w: &ModelWeights, test: &Dataset) -> Result<f64> {
    check_compat(w, test)?;
    if test.is_empty() {
        return Err(Error::invalid("test set must be non-empty"));
    }
    let mut correct = 0usize;
    for s in 0..test.len() {
        if predict_class(w, test.feature_row(s)) == test.label(s) as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64 * 100.0)
}

/// Argmax class for a single feature row, lowest index on ties.
pub fn predict_class(w: &ModelWeights, x: &[f64]) -> usize {
    let logits = raw_logits(w, x);
    let mut best = 0;
    for (c, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = c;
        }
    }
    best
}

fn raw_logits(w: &ModelWeights, x: &[f64]) -> Vec<f64> {
    match w.kind {
        ModelKind::Logistic { dims, classes } => {
            let (weights, bias) = w.values.split_at(classes * dims);
            (0..classes)
                .map(|c| bias[c] + dot(&weights[c * dims..(c + 1) * dims], x))
                .collect()
        }
        ModelKind::Mlp { dims, hidden, classes } => {
            let (w1, rest) = w.values.split_at(hidden * dims);
            let (b1, rest) = rest.split_at(hidden);
            let (w2, b2) = rest.split_at(classes * hidden);
            let act: Vec<f64> = (0..hidden)
                .map(|h| (b1[h] + dot(&w1[h * dims..(h + 1) * dims], x)).tanh())
                .collect();
            (0..classes)
                .map(|c| b2[c] + dot(&w2[c * hidden..(c + 1) * hidden], &act))
                .collect()
        }
    }
}

/// Draws Gaussian class clusters with deterministic per-seed content.
///
/// Class `c` is centered at `class_separation` along axis `c % dims`, with
/// the sign flipping each time the axes wrap, so centers stay mutually
/// distant whenever `classes <= 2 * dims`. Labels are round-robin balanced
/// (within one sample) and the row order is shuffled.
pub fn make_synthetic_dataset(
    seed: u64,
    samples: usize,
    dims: usize,
    classes: usize,
    class_separation: f64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if dims == 0 || samples == 0 {
        return Err(Error::invalid("need positive dims and samples"));
    }
    if !(class_separation >= 0.0) {
        return Err(Error::invalid("class separation must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples).collect();
    order.shuffle(&mut rng);
    let mut features = vec![0.0; samples * dims];
    let mut labels = vec![0u32; samples];
    for (slot, &i) in order.iter().enumerate() {
        let label = (i % classes) as u32;
        let axis = label as usize % dims;
        let sign = if (label as usize / dims).is_multiple_of(2) { 1.0 } else { -1.0 };
        let row = &mut features[slot * dims..(slot + 1) * dims];
        for value in row.iter_mut() {
            *value = StandardNormal.sample(&mut rng);
        }
        row[axis] += sign * class_separation;
        labels[slot] = label;
    }
    Dataset::new(dims, classes, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch() -> Dataset {
        // two balanced classes
        Dataset::new(
            2,
            2,
            vec![1.0, 0.5, -0.5, 1.5, 2.0, -1.0, 0.3, 0.7],
            vec![0, 1, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_on_balanced_batch_give_ln2() {
        let w = ModelWeights::zeros(ModelKind::Logistic { dims: 2, classes: 2 }).unwrap();
        let (loss, _) = loss_and_grad(&w, &toy_batch()).unwrap();
        assert!((loss - (2.0_f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicating_samples_leaves_loss_and_grad_unchanged() {
        let w = ModelWeights::init(ModelKind::Logistic { dims: 2, classes: 2 }, 3).unwrap();
        let batch = toy_batch();
        let doubled = batch
            .subset(&(0..batch.len()).chain(0..batch.len()).collect::<Vec<_>>())
            .unwrap();
        let (l1, g1) = loss_and_grad(&w, &batch).unwrap();
        let (l2, g2) = loss_and_grad(&w, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn finite_difference_check(kind: ModelKind, seed: u64) -> f64 {
        let w = ModelWeights::init(kind, seed).unwrap();
        let batch =
            make_synthetic_dataset(seed ^ 0xabcd, 12, kind.dims(), kind.classes(), 1.5).unwrap();
        let (_, analytic) = loss_and_grad(&w, &batch).unwrap();
        let eps = 1e-5;
        let mut max_rel = 0.0_f64;
        for idx in 0..w.len() {
            let mut plus = w.values().to_vec();
            plus[idx] += eps;
            let wp = ModelWeights::from_values(kind, plus).unwrap();
            let mut minus = w.values().to_vec();
            minus[idx] -= eps;
            let wm = ModelWeights::from_values(kind, minus).unwrap();
            let fd = (loss_and_grad(&wp, &batch).unwrap().0
                - loss_and_grad(&wm, &batch).unwrap().0)
                / (2.0 * eps);
            let rel = (analytic[idx] - fd).abs() / analytic[idx].abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        max_rel
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let rel = finite_difference_check(ModelKind::Logistic { dims: 5, classes: 3 }, 11);
        assert!(rel < 1e-4, "max relative error {rel}");
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let rel = finite_difference_check(ModelKind::Mlp { dims: 4, hidden: 6, classes: 3 }, 12);
        assert!(rel < 1e-4, "max relative error {rel}");
    }

    #[test]
    fn sgd_step_arithmetic() {
        let kind = ModelKind::Logistic { dims: 1, classes: 2 };
        let w = ModelWeights::from_values(kind, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let stepped = sgd_step(&w, &[1.0, -1.0, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(&stepped.values()[..2], &[0.5, 1.5]);
        let unchanged = sgd_step(&w, &[0.0; 4], 0.5).unwrap();
        assert_eq!(unchanged, w);
        // two half steps equal one full step for a fixed gradient
        let g = [0.2, -0.4, 0.1, 0.3];
        let twice = sgd_step(&sgd_step(&w, &g, 0.5).unwrap(), &g, 0.5).unwrap();
        let once = sgd_step(&w, &g, 1.0).unwrap();
        for (a, b) in twice.values().iter().zip(once.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(sgd_step(&w, &[1.0], 0.5).is_err());
    }

    #[test]
    fn evaluate_counts_argmax_matches() {
        let kind = ModelKind::Logistic { dims: 1, classes: 2 };
        // logit(class 1) grows with x, logit(class 0) shrinks
        let w = ModelWeights::from_values(kind, vec![-1.0, 1.0, 0.0, 0.0]).unwrap();
        let all = Dataset::new(1, 2, vec![-1.0, 2.0, -3.0, 0.5], vec![0, 1, 0, 1]).unwrap();
        assert_eq!(evaluate(&w, &all).unwrap(), 100.0);
        let three_of_four =
            Dataset::new(1, 2, vec![-1.0, 2.0, -3.0, -0.5], vec![0, 1, 0, 1]).unwrap();
        assert_eq!(evaluate(&w, &three_of_four).unwrap(), 75.0);
        let doubled = three_of_four
            .subset(&(0..4).chain(0..4).collect::<Vec<_>>())
            .unwrap();
        assert_eq!(evaluate(&w, &doubled).unwrap(), 75.0);
    }

    #[test]
    fn evaluate_breaks_ties_toward_lowest_class() {
        let kind = ModelKind::Logistic { dims: 1, classes: 3 };
        let w = ModelWeights::zeros(kind).unwrap();
        let data = Dataset::new(1, 3, vec![1.0, 2.0], vec![0, 2]).unwrap();
        // all logits equal, so class 0 wins every sample
        assert_eq!(evaluate(&w, &data).unwrap(), 50.0);
    }

    #[test]
    fn synthetic_dataset_is_deterministic_and_balanced() {
        let a = make_synthetic_dataset(5, 101, 4, 3, 2.0).unwrap();
        let b = make_synthetic_dataset(5, 101, 4, 3, 2.0).unwrap();
        assert_eq!(a, b);
        let mut counts = [0usize; 3];
        for &l in a.labels() {
            counts[l as usize] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn zero_separation_leaves_classifiers_at_chance() {
        let data = make_synthetic_dataset(9, 2000, 6, 4, 0.0).unwrap();
        let w = ModelWeights::init(ModelKind::Logistic { dims: 6, classes: 4 }, 77).unwrap();
        let acc = evaluate(&w, &data).unwrap();
        assert!((acc - 25.0).abs() < 5.0, "accuracy {acc} not near chance");
    }

    #[test]
    fn separable_data_trains_above_95_percent() {
        let kind = ModelKind::Logistic { dims: 8, classes: 4 };
        let data = make_synthetic_dataset(21, 800, 8, 4, 5.0).unwrap();
        let mut w = ModelWeights::zeros(kind).unwrap();
        for _ in 0..200 {
            let (_, g) = loss_and_grad(&w, &data).unwrap();
            w = sgd_step(&w, &g, 0.5).unwrap();
        }
        let acc = evaluate(&w, &data).unwrap();
        assert!(acc > 95.0, "accuracy {acc}");
    }

    #[test]
    fn full_batch_descent_is_monotone_at_default_lr() {
        let kind = ModelKind::Logistic { dims: 6, classes: 3 };
        let data = make_synthetic_dataset(33, 300, 6, 3, 5.0).unwrap();
        let mut w = ModelWeights::zeros(kind).unwrap();
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let (loss, g) = loss_and_grad(&w, &data).unwrap();
            assert!(loss <= prev + 1e-9, "loss rose from {prev} to {loss}");
            prev = loss;
            w = sgd_step(&w, &g, DEFAULT_LEARNING_RATE).unwrap();
        }
    }

    #[test]
    fn content_hash_ignores_row_order() {
        let data = make_synthetic_dataset(3, 40, 3, 2, 1.0).unwrap();
        let reversed = data.subset(&(0..40).rev().collect::<Vec<_>>()).unwrap();
        assert_eq!(data.content_hash(), reversed.content_hash());
        let other = make_synthetic_dataset(4, 40, 3, 2, 1.0).unwrap();
        assert_ne!(data.content_hash(), other.content_hash());
    }
}
