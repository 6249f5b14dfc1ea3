//! Dense softmax classifier: one affine layer trained with softmax
//! cross-entropy and Adam, evaluated in accuracy and macro-F1.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::format::{dim_to_u32, EnvelopeReader, EnvelopeWriter};
use crate::linalg::Matrix;
use crate::{Error, Result};

const CLASSIFIER_MAGIC: &[u8; 4] = b"TMDC";
const FEATURES_MAGIC: &[u8; 4] = b"TMPF";

/// Affine layer parameters: `C x D` weights plus a length-`C` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    weights: Matrix,
    bias: Vec<f64>,
}

/// Training hyperparameters. Defaults: 5 epochs, learning rate 0.5, batch
/// size 32, standard Adam moments, seed 0.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            learning_rate: 0.5,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidInput("epochs must be at least 1".to_string()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidInput(
                "learning rate must be positive".to_string(),
            ));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidInput(
                "batch size must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Accuracy plus unweighted mean of per-class F1 scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub f1_macro: f64,
}

impl DenseParams {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::InvalidInput(format!(
                "bias length {} does not match {} weight rows",
                bias.len(),
                weights.rows()
            )));
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("bias must be finite".to_string()));
        }
        Ok(Self { weights, bias })
    }

    pub fn class_count(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Class probabilities `softmax(W·x + b)`, computed with the
    /// max-subtraction trick so large logits cannot overflow.
    pub fn predict(&self, feature: &[f64]) -> Result<Vec<f64>> {
        let mut logits = self.weights.matvec(feature)?;
        for (l, b) in logits.iter_mut().zip(&self.bias) {
            *l += b;
        }
        softmax_in_place(&mut logits);
        Ok(logits)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = EnvelopeWriter::new(CLASSIFIER_MAGIC);
        w.put_u32(dim_to_u32(self.class_count(), "class count")?);
        w.put_u32(dim_to_u32(self.feature_dim(), "feature dimension")?);
        w.put_f64_slice(self.weights.as_slice());
        w.put_f64_slice(&self.bias);
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = EnvelopeReader::new(bytes, CLASSIFIER_MAGIC)?;
        let classes = r.get_usize()?;
        let dim = r.get_usize()?;
        if classes == 0 || dim == 0 {
            return Err(Error::Validation(
                "classifier has empty dimensions".to_string(),
            ));
        }
        let weights = Matrix::from_vec(classes, dim, r.get_f64_vec(classes * dim)?)
            .map_err(|e| Error::Validation(format!("weights: {e}")))?;
        let bias = r.get_f64_vec(classes)?;
        r.expect_end()?;
        Self::new(weights, bias).map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

fn check_labels(features: &Matrix, labels: &[usize], class_count: usize) -> Result<()> {
    if labels.len() != features.rows() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {class_count} classes"
        )));
    }
    Ok(())
}

/// Mean cross-entropy of the given rows (all rows when `rows` is `None`).
pub fn cross_entropy_loss(
    params: &DenseParams,
    features: &Matrix,
    labels: &[usize],
    rows: Option<&[usize]>,
) -> Result<f64> {
    check_labels(features, labels, params.class_count())?;
    let all: Vec<usize>;
    let idx = match rows {
        Some(r) => r,
        None => {
            all = (0..features.rows()).collect();
            &all
        }
    };
    let mut total = 0.0;
    for &i in idx {
        let p = params.predict(features.row(i))?;
        total -= p[labels[i]].max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / idx.len().max(1) as f64)
}

/// Analytic gradient of the mean cross-entropy over `rows` with respect to
/// the weights and bias: per sample `(softmax - onehot) ⊗ x`, averaged.
pub fn loss_gradients(
    params: &DenseParams,
    features: &Matrix,
    labels: &[usize],
    rows: &[usize],
) -> Result<(Matrix, Vec<f64>)> {
    check_labels(features, labels, params.class_count())?;
    let c = params.class_count();
    let d = params.feature_dim();
    let mut grad_w = Matrix::zeros(c, d);
    let mut grad_b = vec![0.0; c];
    let scale = 1.0 / rows.len().max(1) as f64;
    for &i in rows {
        let x = features.row(i);
        let mut delta = params.predict(x)?;
        delta[labels[i]] -= 1.0;
        for (k, dk) in delta.iter().enumerate() {
            let g = dk * scale;
            grad_b[k] += g;
            for (j, xj) in x.iter().enumerate() {
                grad_w.set(k, j, grad_w.get(k, j) + g * xj);
            }
        }
    }
    Ok((grad_w, grad_b))
}

/// Trains the affine layer by minimizing mean cross-entropy with Adam.
///
/// Deterministic for a fixed `shuffle_seed`: the seed drives both the uniform
/// `[-1/sqrt(D), 1/sqrt(D)]` weight initialization and the per-epoch batch
/// reshuffle.
pub fn train(
    features: &Matrix,
    labels: &[usize],
    class_count: usize,
    cfg: &TrainConfig,
) -> Result<DenseParams> {
    cfg.validate()?;
    if features.rows() == 0 {
        return Err(Error::InsufficientData(
            "training needs at least 1 sample".to_string(),
        ));
    }
    if class_count == 0 {
        return Err(Error::InvalidInput(
            "class count must be positive".to_string(),
        ));
    }
    check_labels(features, labels, class_count)?;
    let d = features.cols();
    let c = class_count;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let limit = 1.0 / (d as f64).sqrt();
    let init: Vec<f64> = (0..c * d)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    let mut params = DenseParams::new(Matrix::from_vec(c, d, init)?, vec![0.0; c])?;

    let mut m_w = vec![0.0; c * d];
    let mut v_w = vec![0.0; c * d];
    let mut m_b = vec![0.0; c];
    let mut v_b = vec![0.0; c];
    let mut step = 0u32;

    let mut order: Vec<usize> = (0..features.rows()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (grad_w, grad_b) = loss_gradients(&params, features, labels, batch)?;
            step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(step as i32);
            let bc2 = 1.0 - cfg.beta2.powi(step as i32);

            let mut new_w = params.weights.as_slice().to_vec();
            for (idx, w) in new_w.iter_mut().enumerate() {
                let g = grad_w.as_slice()[idx];
                m_w[idx] = cfg.beta1 * m_w[idx] + (1.0 - cfg.beta1) * g;
                v_w[idx] = cfg.beta2 * v_w[idx] + (1.0 - cfg.beta2) * g * g;
                *w -=
                    cfg.learning_rate * (m_w[idx] / bc1) / ((v_w[idx] / bc2).sqrt() + cfg.epsilon);
            }
            let mut new_b = params.bias.clone();
            for (idx, b) in new_b.iter_mut().enumerate() {
                let g = grad_b[idx];
                m_b[idx] = cfg.beta1 * m_b[idx] + (1.0 - cfg.beta1) * g;
                v_b[idx] = cfg.beta2 * v_b[idx] + (1.0 - cfg.beta2) * g * g;
                *b -=
                    cfg.learning_rate * (m_b[idx] / bc1) / ((v_b[idx] / bc2).sqrt() + cfg.epsilon);
            }
            params = DenseParams::new(Matrix::from_vec(c, d, new_w)?, new_b)?;
        }
    }
    Ok(params)
}

/// Accuracy and macro-F1 of argmax predictions. Per-class F1 is
/// `2TP / (2TP + FP + FN)`, defined as 0 when the denominator vanishes, so
/// classes absent from both truth and prediction contribute 0.
pub fn evaluate(params: &DenseParams, features: &Matrix, labels: &[usize]) -> Result<Evaluation> {
    check_labels(features, labels, params.class_count())?;
    if features.rows() == 0 {
        return Err(Error::InsufficientData(
            "evaluation needs at least 1 sample".to_string(),
        ));
    }
    let c = params.class_count();
    let mut tp = vec![0usize; c];
    let mut fp = vec![0usize; c];
    let mut fncount = vec![0usize; c];
    let mut hits = 0usize;
    for i in 0..features.rows() {
        let probs = params.predict(features.row(i))?;
        let mut pred = 0;
        for (k, p) in probs.iter().enumerate() {
            if *p > probs[pred] {
                pred = k;
            }
        }
        if pred == labels[i] {
            hits += 1;
            tp[pred] += 1;
        } else {
            fp[pred] += 1;
            fncount[labels[i]] += 1;
        }
    }
    let f1_sum: f64 = (0..c)
        .map(|k| {
            let denom = 2 * tp[k] + fp[k] + fncount[k];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[k] as f64 / denom as f64
            }
        })
        .sum();
    Ok(Evaluation {
        accuracy: hits as f64 / features.rows() as f64,
        f1_macro: f1_sum / c as f64,
    })
}

/// A set of transformed feature vectors with their labels, as written by the
/// transform step and consumed by classifier training and evaluation.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl FeatureSet {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.labels.len() != self.features.rows() {
            return Err(Error::InvalidInput(
                "label count does not match feature rows".to_string(),
            ));
        }
        let mut w = EnvelopeWriter::new(FEATURES_MAGIC);
        w.put_u32(dim_to_u32(self.features.rows(), "sample count")?);
        w.put_u32(dim_to_u32(self.features.cols(), "feature dimension")?);
        w.put_u32(dim_to_u32(self.class_count, "class count")?);
        for &l in &self.labels {
            w.put_u32(dim_to_u32(l, "label")?);
        }
        w.put_f64_slice(self.features.as_slice());
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = EnvelopeReader::new(bytes, FEATURES_MAGIC)?;
        let count = r.get_usize()?;
        let dim = r.get_usize()?;
        let class_count = r.get_usize()?;
        let labels: Vec<usize> = (0..count).map(|_| r.get_usize()).collect::<Result<_>>()?;
        let features = Matrix::from_vec(count, dim, r.get_f64_vec(count * dim)?)
            .map_err(|e| Error::Validation(format!("features: {e}")))?;
        r.expect_end()?;
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{lcg_stream, random_matrix};

    /// Two well-separated clusters in 2D, alternating labels.
    fn separable_fixture(m: usize) -> (Matrix, Vec<usize>) {
        let mut next = lcg_stream(1234);
        let mut rows = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for i in 0..m {
            let label = i % 2;
            let offset = if label == 0 { -2.0 } else { 2.0 };
            rows.push(vec![offset + 0.3 * next(), 0.3 * next()]);
            labels.push(label);
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn zero_parameters_predict_uniform() {
        let params = DenseParams::new(Matrix::zeros(4, 3), vec![0.0; 4]).unwrap();
        let p = params.predict(&[1.0, -1.0, 0.5]).unwrap();
        for v in &p {
            assert!((v - 0.25).abs() <= 1e-15);
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let params = DenseParams::new(random_matrix(3, 2, 5), vec![0.1, -0.2, 0.3]).unwrap();
        let shifted = DenseParams::new(
            params.weights().clone(),
            params.bias().iter().map(|b| b + 7.5).collect(),
        )
        .unwrap();
        let x = [0.4, -1.1];
        let a = params.predict(&x).unwrap();
        let b = shifted.predict(&x).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-12);
            assert!(*p > 0.0);
        }
    }

    #[test]
    fn huge_logit_gap_does_not_overflow() {
        let mut w = Matrix::zeros(2, 1);
        w.set(0, 0, 100.0);
        w.set(1, 0, -100.0);
        let params = DenseParams::new(w, vec![0.0, 0.0]).unwrap();
        let p = params.predict(&[1.0]).unwrap();
        assert!(p[0] >= 1.0 - 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let (features, labels) = separable_fixture(12);
        let params = DenseParams::new(random_matrix(2, 2, 77), vec![0.05, -0.1]).unwrap();
        let rows: Vec<usize> = (0..12).collect();
        let (grad_w, grad_b) = loss_gradients(&params, &features, &labels, &rows).unwrap();

        let h = 1e-5;
        for r in 0..2 {
            for c in 0..2 {
                let mut wp = params.weights().clone();
                wp.set(r, c, wp.get(r, c) + h);
                let lp = cross_entropy_loss(
                    &DenseParams::new(wp, params.bias().to_vec()).unwrap(),
                    &features,
                    &labels,
                    None,
                )
                .unwrap();
                let mut wm = params.weights().clone();
                wm.set(r, c, wm.get(r, c) - h);
                let lm = cross_entropy_loss(
                    &DenseParams::new(wm, params.bias().to_vec()).unwrap(),
                    &features,
                    &labels,
                    None,
                )
                .unwrap();
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grad_w.get(r, c);
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(rel <= 1e-5, "dW[{r}][{c}] rel err {rel:e}");
            }
        }
        for k in 0..2 {
            let mut bp = params.bias().to_vec();
            bp[k] += h;
            let lp = cross_entropy_loss(
                &DenseParams::new(params.weights().clone(), bp).unwrap(),
                &features,
                &labels,
                None,
            )
            .unwrap();
            let mut bm = params.bias().to_vec();
            bm[k] -= h;
            let lm = cross_entropy_loss(
                &DenseParams::new(params.weights().clone(), bm).unwrap(),
                &features,
                &labels,
                None,
            )
            .unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (numeric - grad_b[k]).abs() / numeric.abs().max(grad_b[k].abs()).max(1e-6);
            assert!(rel <= 1e-5, "db[{k}] rel err {rel:e}");
        }
    }

    #[test]
    fn separable_fixture_reaches_full_training_accuracy() {
        let (features, labels) = separable_fixture(64);
        let params = train(&features, &labels, 2, &TrainConfig::default()).unwrap();
        let eval = evaluate(&params, &features, &labels).unwrap();
        assert_eq!(eval.accuracy, 1.0);
        assert_eq!(eval.f1_macro, 1.0);
    }

    #[test]
    fn loss_is_non_increasing_over_epochs_on_the_separable_fixture() {
        let (features, labels) = separable_fixture(64);
        let mut losses = Vec::new();
        for epochs in 1..=5 {
            let cfg = TrainConfig {
                epochs,
                ..TrainConfig::default()
            };
            let params = train(&features, &labels, 2, &cfg).unwrap();
            losses.push(cross_entropy_loss(&params, &features, &labels, None).unwrap());
        }
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "loss went up: {losses:?}");
        }
    }

    #[test]
    fn first_adam_step_moves_by_the_learning_rate() {
        // One sample, one step: m-hat and v-hat are both powers of the same
        // gradient, so each parameter moves by lr within epsilon effects.
        let features = Matrix::from_vec(1, 2, vec![1.0, -2.0]).unwrap();
        let labels = vec![0usize];
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            learning_rate: 0.5,
            shuffle_seed: 9,
            ..TrainConfig::default()
        };
        let params = train(&features, &labels, 2, &cfg).unwrap();

        // Rebuild the untrained initialization from the same seed.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
        let limit = 1.0 / 2.0f64.sqrt();
        let init: Vec<f64> = (0..4).map(|_| rng.random_range(-limit..limit)).collect();
        for (after, before) in params.weights().as_slice().iter().zip(&init) {
            let step = (after - before).abs();
            assert!((step - 0.5).abs() <= 1e-6, "step {step}");
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (features, labels) = separable_fixture(32);
        let a = train(&features, &labels, 2, &TrainConfig::default()).unwrap();
        let b = train(&features, &labels, 2, &TrainConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = train(
            &features,
            &labels,
            2,
            &TrainConfig {
                shuffle_seed: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn train_rejects_out_of_range_labels() {
        let (features, mut labels) = separable_fixture(8);
        labels[3] = 5;
        assert!(matches!(
            train(&features, &labels, 2, &TrainConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn evaluation_hand_examples() {
        // Perfect predictor on two classes at x = ±2.
        let mut w = Matrix::zeros(2, 1);
        w.set(0, 0, -5.0);
        w.set(1, 0, 5.0);
        let perfect = DenseParams::new(w, vec![0.0, 0.0]).unwrap();
        let features = Matrix::from_vec(4, 1, vec![-2.0, 2.0, -2.0, 2.0]).unwrap();
        let labels = vec![0, 1, 0, 1];
        let eval = evaluate(&perfect, &features, &labels).unwrap();
        assert_eq!(eval.accuracy, 1.0);
        assert_eq!(eval.f1_macro, 1.0);

        // Constant class-0 predictor on a balanced set: accuracy 1/2 and
        // macro-F1 (2/3 + 0) / 2 = 1/3.
        let mut w0 = Matrix::zeros(2, 1);
        w0.set(0, 0, 1.0);
        w0.set(1, 0, -1.0);
        let constant = DenseParams::new(w0, vec![5.0, -5.0]).unwrap();
        let eval = evaluate(&constant, &features, &labels).unwrap();
        assert!((eval.accuracy - 0.5).abs() <= 1e-12);
        assert!((eval.f1_macro - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn empty_ground_truth_class_contributes_zero_f1() {
        let mut w = Matrix::zeros(3, 1);
        w.set(0, 0, -5.0);
        w.set(1, 0, 5.0);
        let params = DenseParams::new(w, vec![0.0; 3]).unwrap();
        let features = Matrix::from_vec(2, 1, vec![-2.0, 2.0]).unwrap();
        let eval = evaluate(&params, &features, &[0, 1]).unwrap();
        assert_eq!(eval.accuracy, 1.0);
        assert!((eval.f1_macro - 2.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn evaluation_is_order_invariant() {
        let (features, labels) = separable_fixture(20);
        let params = train(&features, &labels, 2, &TrainConfig::default()).unwrap();
        let base = evaluate(&params, &features, &labels).unwrap();

        let perm: Vec<usize> = (0..20).rev().collect();
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| features.row(i).to_vec()).collect();
        let shuffled = Matrix::from_rows(&rows).unwrap();
        let shuffled_labels: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let other = evaluate(&params, &shuffled, &shuffled_labels).unwrap();
        assert_eq!(base, other);
    }

    #[test]
    fn classifier_and_features_round_trip() {
        let (features, labels) = separable_fixture(16);
        let params = train(&features, &labels, 2, &TrainConfig::default()).unwrap();
        let back = DenseParams::from_bytes(&params.to_bytes().unwrap()).unwrap();
        assert_eq!(params, back);

        let set = FeatureSet {
            features,
            labels,
            class_count: 2,
        };
        let bytes = set.to_bytes().unwrap();
        let loaded = FeatureSet::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.features, set.features);
        assert_eq!(loaded.labels, set.labels);
        assert!(matches!(
            FeatureSet::from_bytes(&bytes[..10]),
            Err(Error::Format(_))
        ));
    }
}
