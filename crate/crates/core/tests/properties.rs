use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;

use semscore::prompt::truncate_lengths;
use semscore::scoring::softmax_neg;
use semscore::train::{consistency_loss, LinearSchedule};
use semscore::{
    aggregate_sc, build_prompts, builtin_tasks, compute_idf, label_word_consistency, sample_few_shot,
    subsequence_consistency, Classifier, Component, InputExample, LambdaWeights, Metric, Scorer, TaskKind, TaskSpec,
    TokenWeighting, Tokenizer, WordTokenizer,
};

const WORDS: &[&str] = &["a", "b", "c", "d", "e", "f", "g", "h"];

fn tokenizer() -> WordTokenizer {
    WordTokenizer::from_texts([WORDS.join(" "), "it is great terrible yes no maybe bad okay good ? , .".into()])
}

fn logit_rows(labels: usize, len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-20.0f64..20.0, len), labels)
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..12).prop_map(|w| w.join(" "))
}

/// Logits that depend only on the token id and position.
struct Fixed(f64);

impl Scorer<f64> for Fixed {
    fn score(&self, prompts: &[&[u32]]) -> semscore::Result<Vec<Vec<f64>>> {
        Ok(prompts
            .iter()
            .map(|ids| {
                ids.iter()
                    .enumerate()
                    .map(|(p, &t)| ((t as f64 * 1.7 + p as f64 * 0.3).sin() * 3.0) + self.0)
                    .collect()
            })
            .collect())
    }
}

proptest! {
    #[test]
    fn softmax_is_a_distribution_reversing_order(x in prop::collection::vec(-50.0f64..50.0, 1..8)) {
        let p = softmax_neg(&x);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..x.len() {
            for j in 0..x.len() {
                if x[i] < x[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn component_distributions_sum_to_one_and_ignore_shifts(
        z in logit_rows(3, 6),
        w in prop::collection::vec(0.0f64..1.0, 4),
        shift in -100.0f64..100.0,
    ) {
        let positions = [1, 2, 4, 5];
        let lw = label_word_consistency(&z, &[0, 0, 0]).unwrap();
        let s = subsequence_consistency(Component::Sentence1, &z, &positions, &w).unwrap();
        let moved: Vec<Vec<f64>> = z.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let lw2 = label_word_consistency(&moved, &[0, 0, 0]).unwrap();
        let s2 = subsequence_consistency(Component::Sentence1, &moved, &positions, &w).unwrap();
        for d in [&lw, &s] {
            prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(d.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        for (a, b) in lw.probs.iter().zip(&lw2.probs).chain(s.probs.iter().zip(&s2.probs)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mixture_is_convex(z in logit_rows(4, 5), lambda0 in 0.0f64..=1.0, pair in any::<bool>()) {
        let kind = if pair { TaskKind::SentencePair } else { TaskKind::SingleSentence };
        let lambda = LambdaWeights::new(kind, lambda0).unwrap();
        prop_assert!((lambda.as_vec().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut comps = vec![
            label_word_consistency(&z, &[0; 4]).unwrap(),
            subsequence_consistency(Component::Sentence1, &z, &[1, 2], &[1.0, 1.0]).unwrap(),
        ];
        if pair {
            comps.push(subsequence_consistency(Component::Sentence2, &z, &[3, 4], &[0.5, 0.2]).unwrap());
        }
        let sc = aggregate_sc(&comps, &lambda).unwrap();
        prop_assert!((sc.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (l, &v) in sc.iter().enumerate() {
            let lo = comps.iter().map(|c| c.probs[l]).fold(f64::INFINITY, f64::min);
            let hi = comps.iter().map(|c| c.probs[l]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn loss_bounds_the_mixture_log_likelihood(
        s1 in text(),
        s2 in text(),
        task in 0usize..10,
        lambda0 in 0.0f64..=1.0,
        gold in 0usize..5,
        offset in -3.0f64..3.0,
    ) {
        let spec = builtin_tasks().swap_remove(task);
        let gold = gold % spec.num_labels();
        let ex = match spec.kind() {
            TaskKind::SingleSentence => InputExample::single(s1, Some(gold)),
            TaskKind::SentencePair => InputExample::pair(s1, s2, Some(gold)),
        };
        let c = Classifier::new(spec, Arc::new(tokenizer()), TokenWeighting::Uniform, lambda0, 64).unwrap();
        let (prompts, layout) = c.prompts(&ex).unwrap();
        let ids: Vec<&[u32]> = prompts.iter().map(|p| p.token_ids.as_slice()).collect();
        let logits = Fixed(offset).score(&ids).unwrap();
        let loss = consistency_loss(&logits, &layout, &c.lambda, gold).unwrap();
        let pred = c.predict(&ex, &Fixed(offset)).unwrap();
        // convexity of -log
        prop_assert!(loss.total >= -pred.sc[gold].ln() - 1e-12);
        prop_assert!(loss.parts.iter().all(|&p| p >= 0.0));
        let weighted: f64 = loss.parts.iter().zip(c.lambda.as_vec()).map(|(p, l)| p * l).sum();
        prop_assert!((weighted - loss.total).abs() < 1e-12);
    }

    #[test]
    fn prompts_differ_only_at_the_label_word(s1 in text(), s2 in text(), task in 0usize..10, max_len in 10usize..40) {
        let spec = builtin_tasks().swap_remove(task);
        let tok = tokenizer();
        let ex = match spec.kind() {
            TaskKind::SingleSentence => InputExample::single(s1, None),
            TaskKind::SentencePair => InputExample::pair(s1, s2, None),
        };
        let prompts = build_prompts(&ex, &spec, &tok, max_len).unwrap();
        prop_assert_eq!(prompts.len(), spec.num_labels());
        let pos = prompts[0].label_position();
        for (l, p) in prompts.iter().enumerate() {
            prop_assert!(p.len() <= max_len);
            prop_assert_eq!(p.token_ids[0], tok.cls_id());
            prop_assert_eq!(*p.token_ids.last().unwrap(), tok.sep_id());
            prop_assert_eq!(p.label_position(), pos);
            prop_assert_eq!(p.token_ids[pos], tok.encode(spec.label_word(l)).ids[0]);
            prop_assert_eq!(p.spans.len(), if spec.kind() == TaskKind::SentencePair { 3 } else { 2 });
            for span in &p.spans {
                prop_assert!(!span.positions.is_empty());
                prop_assert!(span.positions.iter().all(|&i| i > 0 && i + 1 < p.len()));
                prop_assert!(span.component == Component::LabelWord || !span.positions.contains(&pos));
            }
            for i in 0..p.len() {
                if i != pos {
                    prop_assert_eq!(p.token_ids[i], prompts[0].token_ids[i]);
                }
            }
        }
    }

    #[test]
    fn truncation_respects_budget(a in 1usize..50, b in proptest::option::of(1usize..50), budget in 2usize..60) {
        let (x, y) = truncate_lengths(a, b, budget);
        prop_assert!(x >= 1 && x <= a);
        if let (Some(b), Some(y)) = (b, y) {
            prop_assert!(y >= 1 && y <= b);
        }
        let total = x + y.unwrap_or(0);
        let floor = if b.is_some() { 2 } else { 1 };
        prop_assert!(total <= budget.max(floor));
        if a + b.unwrap_or(0) <= budget {
            prop_assert_eq!((x, y), (a, b));
        }
    }

    #[test]
    fn schedule_shape(peak in 1e-6f64..1e-2, ratio in 0.0f64..0.5, total in 1usize..500) {
        let s = LinearSchedule::new(peak, ratio, total);
        prop_assert_eq!(s.lr(total), 0.0);
        let mut max: f64 = 0.0;
        for t in 0..=total {
            let v = s.lr(t);
            prop_assert!(v >= 0.0 && v <= peak * (1.0 + 1e-12));
            max = max.max(v);
        }
        if s.warmup_steps < total {
            prop_assert!((s.lr(s.warmup_steps) - peak).abs() <= peak * 1e-12);
            prop_assert!((max - peak).abs() <= peak * 1e-12);
        }
    }

    #[test]
    fn few_shot_splits(labels in 2usize..5, extra in 0usize..20, k in 1usize..8, seed in any::<u64>()) {
        let pool: Vec<InputExample> = (0..labels * (2 * k + extra))
            .map(|i| InputExample::single(format!("s{i}"), Some(i % labels)))
            .collect();
        let (train, dev) = sample_few_shot(&pool, labels, k, seed).unwrap();
        let (train2, dev2) = sample_few_shot(&pool, labels, k, seed).unwrap();
        prop_assert_eq!(&train, &train2);
        prop_assert_eq!(&dev, &dev2);
        let mut seen = HashMap::new();
        for e in train.iter().chain(&dev) {
            prop_assert!(pool.contains(e));
            prop_assert!(seen.insert(e.sentence1.clone(), ()).is_none());
        }
        for l in 0..labels {
            prop_assert_eq!(train.iter().filter(|e| e.gold == Some(l)).count(), k);
            prop_assert_eq!(dev.iter().filter(|e| e.gold == Some(l)).count(), k);
        }
        prop_assert!(sample_few_shot(&pool, labels, k + extra + 1, seed).is_err());
    }

    #[test]
    fn idf_is_normalized(docs in prop::collection::vec(prop::collection::vec(prop::sample::select(WORDS), 1..6), 1..20)) {
        let t = compute_idf::<f64, _, _>(docs.clone()).unwrap();
        prop_assert_eq!(t.corpus_size(), docs.len());
        for (w, v) in t.iter() {
            prop_assert!((0.0..=1.0).contains(&v), "{w}: {v}");
        }
        let in_all: Vec<&str> = WORDS.iter().copied().filter(|w| docs.iter().all(|d| d.contains(w))).collect();
        // when every word has the same document frequency all weights are 1
        let expected = if in_all.len() == t.len() { 1.0 } else { 0.0 };
        for w in in_all {
            prop_assert_eq!(t.weight(w), expected);
        }
        prop_assert_eq!(t.weight("unseen"), 1.0);
    }

    #[test]
    fn task_spec_toml_round_trip(
        words in prop::collection::hash_set("[a-z]{2,8}", 2..6),
        pair in any::<bool>(),
        f1 in any::<bool>(),
    ) {
        let words: Vec<String> = words.into_iter().collect();
        let names: Vec<String> = (0..words.len()).map(|i| format!("label_{i}")).collect();
        let labels: Vec<(&str, &str)> = names.iter().zip(&words).map(|(n, w)| (n.as_str(), w.as_str())).collect();
        let template = if pair { "<S1> ? <V> , <S2>" } else { "<S1> It is <V> ." };
        let (metric, positive) = if f1 && labels.len() == 2 {
            (Metric::BinaryF1, Some("label_1"))
        } else {
            (Metric::Accuracy, None)
        };
        let spec = TaskSpec::new("t", template, &labels, metric, positive).unwrap();
        let back = TaskSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, spec);
    }
}

#[test]
fn builtin_specs_round_trip() {
    for spec in builtin_tasks() {
        assert_eq!(TaskSpec::from_toml(&spec.to_toml().unwrap()).unwrap(), spec);
    }
}

#[test]
fn single_precision_agrees_with_double() {
    let tok = tokenizer();
    let spec = builtin_tasks().into_iter().find(|t| t.name == "RTE").unwrap();
    let ex = InputExample::pair("a b c d", "e f", Some(0));
    let c64 = Classifier::<f64>::new(spec.clone(), Arc::new(tok.clone()), TokenWeighting::Uniform, 0.3, 64).unwrap();
    let c32 = Classifier::<f32>::new(spec, Arc::new(tok), TokenWeighting::Uniform, 0.3, 64).unwrap();
    struct Fixed32;
    impl Scorer<f32> for Fixed32 {
        fn score(&self, prompts: &[&[u32]]) -> semscore::Result<Vec<Vec<f32>>> {
            Ok(Fixed(0.0).score(prompts)?.into_iter().map(|r| r.into_iter().map(|v| v as f32).collect()).collect())
        }
    }
    let a = c64.predict(&ex, &Fixed(0.0)).unwrap();
    let b = c32.predict(&ex, &Fixed32).unwrap();
    assert_eq!(a.predicted, b.predicted);
    for (x, y) in a.sc.iter().zip(&b.sc) {
        assert!((x - *y as f64).abs() < 1e-5);
    }
}
