//! Training and unlearning objectives over the scores of one positive triple
//! and its negatives, with analytic gradients with respect to those scores.
//!
//! Scores here are logits: `margin + S` for distance models, raw `S` for
//! ComplEx. Teacher scores are constants; gradients only reach the student.

use crate::embedding::{EmbeddingTable, SparseGrad};
use crate::error::{Error, Result};

/// Which set of entity embeddings produced the scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Provenance {
    #[default]
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredBatch {
    pub positive: f64,
    pub negatives: Vec<f64>,
    pub provenance: Provenance,
}

impl ScoredBatch {
    pub fn new(positive: f64, negatives: Vec<f64>, provenance: Provenance) -> Self {
        Self { positive, negatives, provenance }
    }

    /// Positive first, then negatives.
    pub fn scores(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        std::iter::once(self.positive).chain(self.negatives.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub distill: f64,
    pub soft: f64,
    pub prox: f64,
    /// Temperature of self-adversarial negative weighting; 0 weights every
    /// negative by `1/n`.
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { distill: 2.0, soft: 0.1, prox: 0.1, adversarial: 0.0 }
    }
}

/// `d loss / d score` for each score of a [`ScoredBatch`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreGrad {
    pub positive: f64,
    pub negatives: Vec<f64>,
}

impl ScoreGrad {
    fn zeros(n: usize) -> Self {
        Self { positive: 0.0, negatives: vec![0.0; n] }
    }

    fn add_scaled(&mut self, other: &ScoreGrad, w: f64) {
        self.positive += w * other.positive;
        for (a, b) in self.negatives.iter_mut().zip(&other.negatives) {
            *a += w * b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Loss {
    pub value: f64,
    pub grad: ScoreGrad,
}

impl Loss {
    fn add_scaled(&mut self, other: &Loss, w: f64) {
        self.value += w * other.value;
        self.grad.add_scaled(&other.grad, w);
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-log sigma(s+) - (1/n) sum log sigma(-s-)`.
pub fn prediction_loss(batch: &ScoredBatch) -> Loss {
    sigmoid_loss(batch, 1.0, 0.0)
}

/// Same as [`prediction_loss`] but with the positive treated as a negative:
/// `-log sigma(-s+) - (1/n) sum log sigma(-s-)`.
pub fn hard_confusion_loss(batch: &ScoredBatch) -> Loss {
    sigmoid_loss(batch, -1.0, 0.0)
}

/// Weights of the negative terms: `1/n` each at temperature 0, otherwise
/// `softmax(temperature * s-)`. They are constants for differentiation.
pub fn negative_weights(negatives: &[f64], temperature: f64) -> Vec<f64> {
    if temperature == 0.0 {
        let n = negatives.len() as f64;
        return vec![1.0 / n; negatives.len()];
    }
    log_softmax(negatives.iter().map(|&x| temperature * x)).into_iter().map(f64::exp).collect()
}

fn sigmoid_loss(batch: &ScoredBatch, sign: f64, temperature: f64) -> Loss {
    let s = sign * batch.positive;
    let mut value = softplus(-s);
    let positive = -sign * sigmoid(-s);
    let mut negatives = Vec::with_capacity(batch.negatives.len());
    for (&x, w) in batch.negatives.iter().zip(negative_weights(&batch.negatives, temperature)) {
        value += w * softplus(x);
        negatives.push(w * sigmoid(x));
    }
    Loss { value, grad: ScoreGrad { positive, negatives } }
}

/// `(1/n) sum |s-_j - s+|`. The subgradient at a tie is zero.
pub fn soft_confusion_loss(batch: &ScoredBatch) -> Loss {
    let n = batch.negatives.len() as f64;
    let mut loss = Loss { value: 0.0, grad: ScoreGrad::zeros(batch.negatives.len()) };
    for (j, &x) in batch.negatives.iter().enumerate() {
        let d = x - batch.positive;
        loss.value += d.abs() / n;
        let g = sign(d) / n;
        loss.grad.negatives[j] = g;
        loss.grad.positive -= g;
    }
    loss
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn log_softmax(scores: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = scores.clone().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.clone().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.map(|s| s - log_z).collect()
}

/// Softmax over the positive and negative scores, positive first.
pub fn score_distribution(positive: f64, negatives: &[f64]) -> Vec<f64> {
    let scores = std::iter::once(positive).chain(negatives.iter().copied());
    log_softmax(scores).into_iter().map(f64::exp).collect()
}

/// `KL(p || q) = sum p_i ln(p_i / q_i)`.
pub fn distill_loss(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    Ok(p.iter().zip(q).filter(|(pi, _)| **pi > 0.0).map(|(pi, qi)| pi * (pi / qi).ln()).sum())
}

/// KL from the student's score distribution to the teacher's, with the
/// gradient taken through the student's scores only.
pub fn distill(student: &ScoredBatch, teacher: &ScoredBatch) -> Result<Loss> {
    if student.negatives.len() != teacher.negatives.len() {
        return Err(Error::Shape(format!(
            "student has {} negatives, teacher {}",
            student.negatives.len(),
            teacher.negatives.len()
        )));
    }
    let log_p = log_softmax(student.scores());
    let log_q = log_softmax(teacher.scores());
    let p: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
    let kl: f64 = p.iter().zip(&log_p).zip(&log_q).map(|((pi, lp), lq)| pi * (lp - lq)).sum();
    // d KL / d z_k = p_k (log p_k - log q_k - KL)
    let mut g = p.iter().zip(&log_p).zip(&log_q).map(|((pi, lp), lq)| pi * (lp - lq - kl));
    let positive = g.next().unwrap_or(0.0);
    Ok(Loss { value: kl, grad: ScoreGrad { positive, negatives: g.collect() } })
}

/// Prediction loss plus `weights.distill` times the distillation term. The
/// same function serves the local and the global update; callers pass the
/// side being optimized as `student` and the other side as `teacher`.
pub fn joint_local_loss(student: &ScoredBatch, teacher: Option<&ScoredBatch>, weights: &LossWeights) -> Result<Loss> {
    let mut loss = sigmoid_loss(student, 1.0, weights.adversarial);
    if let Some(teacher) = teacher.filter(|_| weights.distill != 0.0) {
        loss.add_scaled(&distill(student, teacher)?, weights.distill);
    }
    Ok(loss)
}

/// Which confusion terms the interference objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interference {
    pub hard: bool,
    pub soft: bool,
}

impl Default for Interference {
    fn default() -> Self {
        Self { hard: true, soft: true }
    }
}

/// `hard + weights.soft * soft + weights.distill * distill`, with the
/// confusion terms switchable for ablations.
pub fn interference_loss(
    student: &ScoredBatch,
    teacher: Option<&ScoredBatch>,
    weights: &LossWeights,
    terms: Interference,
) -> Result<Loss> {
    let mut loss = Loss { value: 0.0, grad: ScoreGrad::zeros(student.negatives.len()) };
    if terms.hard {
        loss.add_scaled(&sigmoid_loss(student, -1.0, weights.adversarial), 1.0);
    }
    if terms.soft && weights.soft != 0.0 {
        loss.add_scaled(&soft_confusion_loss(student), weights.soft);
    }
    if let Some(teacher) = teacher.filter(|_| weights.distill != 0.0) {
        loss.add_scaled(&distill(student, teacher)?, weights.distill);
    }
    Ok(loss)
}

/// `(mu/2) * ||local - anchor||^2` over `rows`. When `grad` is given,
/// `mu * (local - anchor)` is added to it for those rows.
pub fn proximal_term(
    local: &EmbeddingTable,
    anchor: &EmbeddingTable,
    rows: &[usize],
    mu: f64,
    mut grad: Option<&mut SparseGrad>,
) -> Result<f64> {
    if !local.same_shape(anchor) {
        return Err(Error::Shape("proximal anchor differs from the local table".into()));
    }
    let mut value = 0.0;
    for &i in rows {
        let diff: Vec<f64> = local.row(i).iter().zip(anchor.row(i)).map(|(a, b)| a - b).collect();
        value += diff.iter().map(|d| d * d).sum::<f64>();
        if let Some(g) = grad.as_deref_mut() {
            for (gj, d) in g.row_mut(i).iter_mut().zip(&diff) {
                *gj += mu * d;
            }
        }
    }
    Ok(0.5 * mu * value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{ModelKind, Role};
    use crate::rng;
    use rand::Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn batch(pos: f64, negs: &[f64]) -> ScoredBatch {
        ScoredBatch::new(pos, negs.to_vec(), Provenance::Local)
    }

    fn random_batch(r: &mut impl Rng, n: usize) -> ScoredBatch {
        batch(r.gen_range(-10.0..10.0), &(0..n).map(|_| r.gen_range(-10.0..10.0)).collect::<Vec<_>>())
    }

    /// Checks `f`'s analytic score gradient against central differences.
    fn check_gradient(b: &ScoredBatch, f: impl Fn(&ScoredBatch) -> Loss) {
        let eps = 1e-5;
        let analytic = f(b).grad;
        let numeric = |perturb: &dyn Fn(&mut ScoredBatch, f64)| {
            let mut up = b.clone();
            perturb(&mut up, eps);
            let mut down = b.clone();
            perturb(&mut down, -eps);
            (f(&up).value - f(&down).value) / (2.0 * eps)
        };
        let close = |a: f64, n: f64| assert!((a - n).abs() <= 1e-4 * a.abs().max(n.abs()).max(1.0), "{a} vs {n}");
        close(analytic.positive, numeric(&|x, e| x.positive += e));
        for j in 0..b.negatives.len() {
            close(analytic.negatives[j], numeric(&|x, e| x.negatives[j] += e));
        }
    }

    #[test]
    fn prediction_examples() {
        assert!((prediction_loss(&batch(0.0, &[0.0])).value - 2.0 * LN2).abs() < 1e-12);
        assert!(prediction_loss(&batch(100.0, &[-100.0])).value < 1e-40);
        let want = -2.0 * (1.0 / (1.0 + (-1.0f64).exp())).ln();
        let got = prediction_loss(&batch(1.0, &[-1.0, -1.0])).value;
        assert!((got - want).abs() < 1e-12 && (got - 0.62652).abs() < 1e-5);
    }

    #[test]
    fn extreme_scores_stay_finite() {
        for s in [-800.0, -30.0, 30.0, 800.0] {
            let b = batch(s, &[s, -s]);
            for l in [prediction_loss(&b), hard_confusion_loss(&b), soft_confusion_loss(&b)] {
                assert!(l.value.is_finite() && l.grad.positive.is_finite());
            }
            assert!(distill(&b, &batch(-s, &[s, s])).unwrap().value.is_finite());
        }
    }

    #[test]
    fn distribution_examples() {
        assert!(score_distribution(1.5, &[1.5, 1.5, 1.5]).iter().all(|p| (p - 0.25).abs() < 1e-15));
        let d = score_distribution(LN2, &[0.0]);
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15 && (d[1] - 1.0 / 3.0).abs() < 1e-15);
        let mut r = rng::stream(1, &[]);
        for _ in 0..1000 {
            let b = random_batch(&mut r, 7);
            let sum: f64 = score_distribution(b.positive, &b.negatives).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distill_examples() {
        let p = [0.5, 0.5];
        assert_eq!(distill_loss(&p, &p).unwrap(), 0.0);
        let want = 0.5 * LN2 + 0.5 * (2.0f64 / 3.0).ln();
        assert!((distill_loss(&p, &[0.25, 0.75]).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.14384).abs() < 1e-5);
        assert!(distill_loss(&p, &[1.0]).is_err());
    }

    #[test]
    fn kl_is_non_negative_and_matches_distribution_form() {
        let mut r = rng::stream(2, &[]);
        for _ in 0..1000 {
            let a = random_batch(&mut r, 5);
            let b = random_batch(&mut r, 5);
            let kl = distill(&a, &b).unwrap().value;
            let p = score_distribution(a.positive, &a.negatives);
            let q = score_distribution(b.positive, &b.negatives);
            assert!(kl >= -1e-12);
            assert!((kl - distill_loss(&p, &q).unwrap()).abs() < 1e-9);
            assert!(distill(&a, &a).unwrap().value.abs() < 1e-12);
        }
    }

    #[test]
    fn joint_loss_composition() {
        let s = batch(0.3, &[-0.2, 1.0]);
        let t = batch(-0.5, &[0.4, 0.1]);
        let w0 = LossWeights { distill: 0.0, ..Default::default() };
        assert_eq!(joint_local_loss(&s, Some(&t), &w0).unwrap(), prediction_loss(&s));
        let w = LossWeights::default();
        let want = prediction_loss(&s).value + 2.0 * distill(&s, &t).unwrap().value;
        assert!((joint_local_loss(&s, Some(&t), &w).unwrap().value - want).abs() < 1e-15);
    }

    #[test]
    fn hard_confusion_is_prediction_with_negated_positive() {
        assert!((hard_confusion_loss(&batch(0.0, &[0.0])).value - 2.0 * LN2).abs() < 1e-12);
        assert!(hard_confusion_loss(&batch(-100.0, &[-100.0])).value < 1e-40);
        let mut r = rng::stream(3, &[]);
        for _ in 0..200 {
            let b = random_batch(&mut r, 4);
            let negated = batch(-b.positive, &b.negatives);
            assert!((hard_confusion_loss(&b).value - prediction_loss(&negated).value).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_confusion_examples() {
        assert_eq!(soft_confusion_loss(&batch(2.0, &[2.0, 2.0])).value, 0.0);
        assert_eq!(soft_confusion_loss(&batch(1.0, &[0.0, 2.0])).value, 1.0);
        let mut r = rng::stream(4, &[]);
        for _ in 0..200 {
            assert!(soft_confusion_loss(&random_batch(&mut r, 3)).value >= 0.0);
        }
    }

    #[test]
    fn soft_confusion_minimizer_is_the_median() {
        let negs = [-3.0, 0.5, 4.0, 7.0, 1.5];
        let best = (-1000..=1000)
            .map(|i| i as f64 * 0.01)
            .min_by(|a, b| {
                let fa = soft_confusion_loss(&batch(*a, &negs)).value;
                let fb = soft_confusion_loss(&batch(*b, &negs)).value;
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert!((best - 1.5).abs() < 1e-9);
    }

    #[test]
    fn interference_composition() {
        let s = batch(0.7, &[0.1, -0.4]);
        let t = batch(0.2, &[0.0, 0.3]);
        let zero = LossWeights { distill: 0.0, soft: 0.0, prox: 0.0, adversarial: 0.0 };
        assert_eq!(interference_loss(&s, Some(&t), &zero, Interference::default()).unwrap(), hard_confusion_loss(&s));
        let w = LossWeights { distill: 0.0, soft: 0.1, prox: 0.0, adversarial: 0.0 };
        let b = batch(1.0, &[0.0, 2.0]);
        let want = hard_confusion_loss(&b).value + 0.1;
        assert!((interference_loss(&b, None, &w, Interference::default()).unwrap().value - want).abs() < 1e-15);
        let no_hard = Interference { hard: false, soft: true };
        assert!((interference_loss(&b, None, &w, no_hard).unwrap().value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        let mut r = rng::stream(5, &[]);
        let w = LossWeights::default();
        for _ in 0..100 {
            let s = random_batch(&mut r, 6);
            let t = random_batch(&mut r, 6);
            check_gradient(&s, prediction_loss);
            check_gradient(&s, hard_confusion_loss);
            check_gradient(&s, soft_confusion_loss);
            check_gradient(&s, |b| distill(b, &t).unwrap());
            check_gradient(&s, |b| joint_local_loss(b, Some(&t), &w).unwrap());
            check_gradient(&s, |b| interference_loss(b, Some(&t), &w, Interference::default()).unwrap());
        }
    }

    #[test]
    fn proximal_examples() {
        let anchor = EmbeddingTable::from_data(ModelKind::TransE, Role::Entity, 2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(proximal_term(&anchor, &anchor, &[0, 1], 0.1, None).unwrap(), 0.0);
        let local = EmbeddingTable::from_data(ModelKind::TransE, Role::Entity, 2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut g = SparseGrad::like(&local);
        let v = proximal_term(&local, &anchor, &[0, 1], 0.1, Some(&mut g)).unwrap();
        assert!((v - 0.05).abs() < 1e-15);
        assert_eq!(g.row(0), &[0.1, 0.0]);
        let short = EmbeddingTable::zeros(1, ModelKind::TransE, Role::Entity, 2);
        assert!(proximal_term(&local, &short, &[0], 0.1, None).is_err());
    }

    #[test]
    fn proximal_gradient_matches_finite_differences() {
        let mut r = rng::stream(6, &[]);
        for _ in 0..100 {
            let data: Vec<f64> = (0..24).map(|_| r.gen_range(-1.0..1.0)).collect();
            let local = EmbeddingTable::from_data(ModelKind::TransE, Role::Entity, 8, 3, data).unwrap();
            let anchor = EmbeddingTable::from_data(ModelKind::TransE, Role::Entity, 8, 3, (0..24).map(|_| r.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let mut g = SparseGrad::like(&local);
            proximal_term(&local, &anchor, &[0, 2], 0.1, Some(&mut g)).unwrap();
            for i in [0, 2] {
                for j in 0..8 {
                    let f = |d: f64| {
                        let mut l = local.clone();
                        l.row_mut(i)[j] += d;
                        proximal_term(&l, &anchor, &[0, 2], 0.1, None).unwrap()
                    };
                    let num = (f(1e-5) - f(-1e-5)) / 2e-5;
                    assert!((g.row(i)[j] - num).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn adversarial_weights_favour_hard_negatives() {
        let negatives = [-3.0, 0.5, -1.0, 2.0];
        assert_eq!(negative_weights(&negatives, 0.0), vec![0.25; 4]);
        let w = negative_weights(&negatives, 1.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let z: f64 = negatives.iter().map(|x: &f64| x.exp()).sum();
        for (wi, x) in w.iter().zip(negatives) {
            assert!((wi - x.exp() / z).abs() < 1e-12);
        }

        // The weights are held fixed, so the gradient is `w_j sigmoid(s_j)`.
        let b = batch(0.3, &negatives);
        let weights = LossWeights { adversarial: 1.0, ..LossWeights::default() };
        let loss = joint_local_loss(&b, None, &weights).unwrap();
        let uniform = prediction_loss(&b);
        assert_eq!(loss.grad.positive, uniform.grad.positive);
        for (j, x) in negatives.iter().enumerate() {
            assert!((loss.grad.negatives[j] - w[j] * sigmoid(*x)).abs() < 1e-15);
        }
        let want: f64 = softplus(-0.3) + negatives.iter().zip(&w).map(|(x, wi)| wi * softplus(*x)).sum::<f64>();
        assert!((loss.value - want).abs() < 1e-12);
    }
}
