use rand_chacha::ChaCha8Rng;

use super::TrainableScorer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scoring::{
    check_finite, normalized_weights, weighted_mean, Classifier, ComponentDistribution, LambdaWeights,
    PromptLayout,
};
use crate::task::InputExample;
use crate::prompt::Component;

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T> {
    /// `sum_i lambda_i * parts[i]`.
    pub total: T,
    /// Cross-entropy of the gold label per component, label word first.
    pub parts: Vec<T>,
    pub distributions: Vec<ComponentDistribution<T>>,
    /// `d total / d logits`, same shape as the logits.
    pub dlogits: Vec<Vec<T>>,
}

/// `-log softmax(-m)[gold]` and its gradient with respect to `m`.
fn neg_log_softmax_neg<T: Scalar>(m: &[T], gold: usize) -> (T, Vec<T>, Vec<T>) {
    let lo = m.iter().copied().fold(T::infinity(), T::min);
    let e: Vec<T> = m.iter().map(|&v| (lo - v).exp()).collect();
    let sum: T = e.iter().copied().sum();
    let probs: Vec<T> = e.iter().map(|&v| v / sum).collect();
    let loss = m[gold] - lo + sum.ln();
    let grad = probs
        .iter()
        .enumerate()
        .map(|(l, &p)| if l == gold { T::one() - p } else { -p })
        .collect();
    (loss, probs, grad)
}

/// Loss of one example from its prompts' logits.
pub fn consistency_loss<T: Scalar>(
    logits: &[Vec<T>],
    layout: &PromptLayout<T>,
    lambda: &LambdaWeights<T>,
    gold: usize,
) -> Result<LossBreakdown<T>> {
    let n = logits.len();
    if gold >= n || layout.label_positions.len() != n {
        return Err(Error::Shape(format!("gold label {gold} with {n} prompts")));
    }
    let mut dlogits: Vec<Vec<T>> = logits.iter().map(|z| vec![T::zero(); z.len()]).collect();
    let mut parts = Vec::new();
    let mut distributions = Vec::new();
    let mut total = T::zero();

    let z_label = logits
        .iter()
        .zip(&layout.label_positions)
        .map(|(seq, &p)| {
            seq.get(p).copied().ok_or(Error::PositionOutOfRange {
                position: p,
                len: seq.len(),
            })
        })
        .collect::<Result<Vec<T>>>()?;
    let (loss, probs, grad) = neg_log_softmax_neg(&z_label, gold);
    let w = lambda.weight(Component::LabelWord);
    for (l, &p) in layout.label_positions.iter().enumerate() {
        dlogits[l][p] += w * grad[l];
    }
    total += w * loss;
    parts.push(loss);
    distributions.push(ComponentDistribution {
        component: Component::LabelWord,
        argmax: crate::scoring::argmax(&probs),
        probs,
    });

    for (component, positions, weights) in &layout.sentences {
        if positions.is_empty() {
            return Err(Error::EmptySpan);
        }
        let means = logits
            .iter()
            .map(|seq| weighted_mean(seq, positions, weights))
            .collect::<Result<Vec<T>>>()?;
        let (loss, probs, grad) = neg_log_softmax_neg(&means, gold);
        let w = lambda.weight(*component);
        let norm = normalized_weights(weights);
        for (l, g) in grad.iter().enumerate() {
            for (&p, &a) in positions.iter().zip(&norm) {
                dlogits[l][p] += w * *g * a;
            }
        }
        total += w * loss;
        parts.push(loss);
        distributions.push(ComponentDistribution {
            component: *component,
            argmax: crate::scoring::argmax(&probs),
            probs,
        });
    }
    Ok(LossBreakdown {
        total,
        parts,
        distributions,
        dlogits,
    })
}

fn gold_of(example: &InputExample, labels: usize) -> Result<usize> {
    match example.gold {
        Some(g) if g < labels => Ok(g),
        Some(g) => Err(Error::InvalidExample(format!("gold label {g} out of range"))),
        None => Err(Error::InvalidExample("training example has no gold label".into())),
    }
}

/// Loss of one example under the scorer's training-mode forward pass.
pub fn example_loss<T: Scalar, S: TrainableScorer<T>>(
    example: &InputExample,
    classifier: &Classifier<T>,
    scorer: &S,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<LossBreakdown<T>> {
    let gold = gold_of(example, classifier.spec.num_labels())?;
    let (prompts, layout) = classifier.prompts(example)?;
    let logits = prompts
        .iter()
        .map(|p| scorer.forward_train(&p.token_ids, dropout.as_deref_mut()).map(|(z, _)| z))
        .collect::<Result<Vec<_>>>()?;
    check_finite(&logits)?;
    consistency_loss(&logits, &layout, &classifier.lambda, gold)
}

/// Like [`example_loss`], and adds `scale * d loss / d params` to `grads`.
pub fn example_loss_and_grad<T: Scalar, S: TrainableScorer<T>>(
    example: &InputExample,
    classifier: &Classifier<T>,
    scorer: &S,
    mut dropout: Option<&mut ChaCha8Rng>,
    scale: T,
    grads: &mut [T],
) -> Result<LossBreakdown<T>> {
    let gold = gold_of(example, classifier.spec.num_labels())?;
    let (prompts, layout) = classifier.prompts(example)?;
    let mut logits = Vec::with_capacity(prompts.len());
    let mut tapes = Vec::with_capacity(prompts.len());
    for p in &prompts {
        let (z, tape) = scorer.forward_train(&p.token_ids, dropout.as_deref_mut())?;
        logits.push(z);
        tapes.push(tape);
    }
    check_finite(&logits)?;
    let loss = consistency_loss(&logits, &layout, &classifier.lambda, gold)?;
    for (tape, dz) in tapes.iter().zip(&loss.dlogits) {
        if dz.iter().all(|g| g.is_zero()) {
            continue;
        }
        let scaled: Vec<T> = dz.iter().map(|&g| g * scale).collect();
        scorer.backward(tape, &scaled, grads)?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskKind;
    use approx::assert_abs_diff_eq;

    fn layout(n: usize) -> PromptLayout<f64> {
        PromptLayout {
            label_positions: vec![0; n],
            sentences: vec![(Component::Sentence1, vec![1, 2], vec![0.5, 1.0])],
        }
    }

    #[test]
    fn uniform_part_costs_ln2() {
        let logits = vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]];
        let l = LambdaWeights::new(TaskKind::SingleSentence, 0.3).unwrap();
        let loss = consistency_loss(&logits, &layout(2), &l, 1).unwrap();
        assert_abs_diff_eq!(loss.parts[0], std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(loss.parts[1], std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(loss.total, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn label_only_lambda_uses_label_part() {
        let z = |p: f64| (p / (1.0 - p)).ln();
        let logits = vec![vec![z(0.04), 0.3, -1.0], vec![z(0.13), 2.0, 0.1]];
        let l = LambdaWeights::new(TaskKind::SingleSentence, 1.0).unwrap();
        let loss = consistency_loss(&logits, &layout(2), &l, 0).unwrap();
        assert_abs_diff_eq!(loss.parts[0], 0.2459, epsilon = 1e-3);
        assert_eq!(loss.total, loss.parts[0]);
        assert!(loss.dlogits.iter().all(|d| d[1] == 0.0 && d[2] == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = vec![vec![0.2, -0.7, 1.1], vec![-0.4, 0.9, 0.3], vec![1.5, 0.0, -0.2]];
        let l = LambdaWeights::new(TaskKind::SingleSentence, 0.4).unwrap();
        let lay = layout(3);
        let base = consistency_loss(&logits, &lay, &l, 2).unwrap();
        let h = 1e-6;
        for a in 0..3 {
            for b in 0..3 {
                let mut up = logits.clone();
                up[a][b] += h;
                let mut dn = logits.clone();
                dn[a][b] -= h;
                let fd = (consistency_loss(&up, &lay, &l, 2).unwrap().total
                    - consistency_loss(&dn, &lay, &l, 2).unwrap().total)
                    / (2.0 * h);
                assert_abs_diff_eq!(fd, base.dlogits[a][b], epsilon = 1e-8);
            }
        }
    }
}
