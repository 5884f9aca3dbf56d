use emoseq_core::classifier::{
    apply_threshold, classify, label_corpus, train_classifier, ClassifierConfig, EmotionScorer,
    LabeledText,
};
use emoseq_core::text::{synth_corpus, LexicalOracle, SynthConfig};
use emoseq_core::Emotion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synth_sentences(n: usize, seed: u64) -> Vec<LabeledText> {
    synth_corpus(SynthConfig::new(n, seed))
        .pairs
        .into_iter()
        .map(|p| LabeledText {
            tokens: p.target,
            emotion: p.emotion.unwrap(),
        })
        .collect()
}

#[test]
fn separable_set_learned_and_matches_oracle() {
    let config = ClassifierConfig {
        epochs: 20,
        lr: 3e-3,
        ..ClassifierConfig::desk()
    };
    let (model, metrics) = train_classifier(&synth_sentences(900, 3), &config).unwrap();
    assert!(metrics.accuracy >= 0.95, "held-out accuracy {}", metrics.accuracy);
    assert_eq!(metrics.confusion.total() as usize, metrics.n_dev);
    assert_eq!(metrics.reference.f1, 0.5433);

    let oracle = LexicalOracle::new();
    let fresh = synth_sentences(1000, 99);
    let agree = fresh
        .iter()
        .filter(|s| {
            let ours = classify(&model, &s.tokens).unwrap().argmax;
            Some(ours) == oracle.label(&s.tokens)
        })
        .count();
    assert!(agree as f64 / fresh.len() as f64 >= 0.99, "agreement {agree}/1000");
}

#[test]
fn threshold_monotone_over_sample() {
    // Random distributions with varied peakedness.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sample: Vec<[f64; 9]> = (0..1000)
        .map(|_| {
            let sharp: f64 = rng.gen_range(0.1..8.0);
            let mut p = [0.0; 9];
            for x in p.iter_mut() {
                *x = rng.gen::<f64>().powf(sharp);
            }
            let s: f64 = p.iter().sum();
            p.map(|x| x / s)
        })
        .collect();
    let mut last = 0;
    for step in 0..=100 {
        let theta = step as f64 / 100.0;
        let n = sample
            .iter()
            .filter(|p| apply_threshold(p, theta) == Emotion::NonEmotion)
            .count();
        assert!(n >= last, "θ={theta}: {n} < {last}");
        last = n;
    }
}

#[test]
fn noisy_corpus_labels_about_a_third_non_emotion() {
    let mut cfg = SynthConfig::new(2000, 8);
    cfg.unmarked_fraction = 0.35;
    let corpus = synth_corpus(cfg);
    let unlabeled: Vec<_> = corpus
        .pairs
        .iter()
        .map(|p| emoseq_core::text::TextPair {
            emotion: None,
            ..p.clone()
        })
        .collect();
    let (labeled, stats) = label_corpus(&corpus.oracle, &unlabeled, 0.35).unwrap();
    assert!((stats.below_threshold - 0.35).abs() <= 0.15, "{}", stats.below_threshold);
    for (a, b) in labeled.iter().zip(&corpus.pairs) {
        assert_eq!(a.emotion, b.emotion);
    }
    let again = label_corpus(&corpus.oracle, &unlabeled, 0.35).unwrap().0;
    assert_eq!(labeled, again);
}

#[test]
fn oracle_scorer_rejects_empty() {
    let oracle = LexicalOracle::new();
    assert!(EmotionScorer::probabilities(&oracle, &[]).is_err());
}
