//! Property tests over the public API.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use jobmatch_core::clustering::{kmeans_fit, lda_fit, KMeansConfig, LdaConfig};
use jobmatch_core::corpus::{
    assign_split, build_corpus, parse_resume, top_positions, Corpus, EndDate, Resume, TargetLabels, Task, YearMonth,
};
use jobmatch_core::embeddings::{build_history_sequence, build_phrase_sequence, train_skipgram, SkipGramConfig};
use jobmatch_core::ensemble::{bagging_vote, ibagging, top_n};
use jobmatch_core::estimators::{argmax, train_gbt, train_random_forest, ForestParams, GbtParams, Matrix};
use jobmatch_core::evaluation::{fit_baseline, precision, recall_at_n};
use jobmatch_core::features::{featurize, CategoricalDictionaries, FeatureArtifacts, FEATURE_WIDTH};
use jobmatch_core::synth::{generate, synth_reference_date, SynthConfig};
use proptest::prelude::*;

fn distribution(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, k).prop_map(|v| {
        let t: f64 = v.iter().sum();
        v.into_iter().map(|x| x / t).collect()
    })
}

fn members(m: std::ops::Range<usize>, k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(distribution(k), m)
}

struct Fixture {
    corpus: Corpus,
    artifacts: FeatureArtifacts,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let resumes = generate(&SynthConfig {
            n: 300,
            seed: 11,
            signal: 0.8,
        });
        let mut corpus = build_corpus(resumes, 12, synth_reference_date()).unwrap();
        corpus.split = Some(assign_split(&corpus, 0.2, 3).unwrap());
        let (train, _) = corpus.partitions().unwrap();
        let seqs: Vec<_> = train.resumes.iter().map(build_phrase_sequence).collect();
        let embeddings = train_skipgram(
            &seqs,
            &SkipGramConfig {
                epochs: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let vectors: Vec<Vec<f64>> = (0..embeddings.len()).map(|i| embeddings.vector(i).to_vec()).collect();
        let kmeans = [8, 16].map(|k| kmeans_fit(&vectors, &KMeansConfig::new(k, 1)).unwrap());
        let docs: Vec<Vec<String>> = train.resumes.iter().map(|r| build_history_sequence(r).tokens).collect();
        let lda = [3, 5].map(|t| {
            lda_fit(
                &docs,
                &LdaConfig {
                    iterations: 20,
                    ..LdaConfig::new(t, 2)
                },
            )
            .unwrap()
        });
        let artifacts = FeatureArtifacts {
            embeddings,
            kmeans,
            lda,
            dictionaries: CategoricalDictionaries::fit(&train.resumes),
            reference_date: corpus.reference_date,
        };
        Fixture { corpus, artifacts }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resume_json_round_trips(seed in 0u64..10_000, signal in 0.0f64..1.0) {
        let reference = synth_reference_date();
        for r in generate(&SynthConfig { n: 3, seed, signal }) {
            let back = parse_resume(&r.to_json_line(), reference).unwrap();
            prop_assert_eq!(back, r);
        }
    }

    #[test]
    fn experience_order_does_not_matter(seed in 0u64..10_000) {
        let reference = synth_reference_date();
        let r = generate(&SynthConfig { n: 1, seed, signal: 0.8 }).remove(0);
        let mut shuffled = r.clone();
        shuffled.experiences.reverse();
        prop_assert_eq!(parse_resume(&shuffled.to_json_line(), reference).unwrap(), r);
    }

    #[test]
    fn top_k_vocabularies_are_nested(seed in 0u64..1000, k in 1usize..20) {
        let resumes = generate(&SynthConfig { n: 80, seed, signal: 0.5 });
        let small = top_positions(&resumes, k).unwrap();
        let large = top_positions(&resumes, k + 1).unwrap();
        prop_assert!(small.len() <= k);
        prop_assert_eq!(&large[..small.len()], &small[..]);
    }

    #[test]
    fn every_corpus_label_is_in_range(seed in 0u64..1000, k in 1usize..20) {
        let corpus = build_corpus(generate(&SynthConfig { n: 60, seed, signal: 0.8 }), k, synth_reference_date()).unwrap();
        for t in corpus.targets().unwrap() {
            for task in Task::ALL {
                prop_assert!(t.get(task) < corpus.n_classes(task));
            }
        }
    }

    #[test]
    fn split_is_a_partition(seed in 0u64..1000, frac in 0.05f64..0.95) {
        let mut corpus = build_corpus(generate(&SynthConfig { n: 50, seed: 5, signal: 0.8 }), 10, synth_reference_date()).unwrap();
        corpus.split = Some(assign_split(&corpus, frac, seed).unwrap());
        let (train, test) = corpus.partitions().unwrap();
        prop_assert_eq!(train.resumes.len() + test.resumes.len(), corpus.resumes.len());
        let train_ids: HashSet<&str> = train.resumes.iter().map(|r| r.id.as_str()).collect();
        prop_assert!(test.resumes.iter().all(|r| !train_ids.contains(r.id.as_str())));
    }

    #[test]
    fn ibagging_of_identical_members_is_argmax(p in distribution(6), m in 1usize..6) {
        let inputs = vec![p.clone(); m];
        let (winner, combined) = ibagging(&inputs).unwrap();
        prop_assert_eq!(winner, argmax(&p));
        for (a, b) in combined.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ibagging_is_permutation_invariant(inputs in members(2..6, 5), rot in 0usize..6) {
        let mut permuted = inputs.clone();
        let r = rot % permuted.len();
        permuted.rotate_left(r);
        permuted.reverse();
        prop_assert_eq!(ibagging(&inputs).unwrap(), ibagging(&permuted).unwrap());
        prop_assert_eq!(bagging_vote(&inputs).unwrap(), bagging_vote(&permuted).unwrap());
    }

    #[test]
    fn ibagging_output_is_a_distribution(inputs in members(1..6, 7)) {
        let (winner, combined) = ibagging(&inputs).unwrap();
        prop_assert!((combined.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(combined.iter().all(|&c| c >= combined[winner] - 1e-15 || c < combined[winner]));
        prop_assert_eq!(winner, argmax(&combined));
    }

    #[test]
    fn top_n_is_distinct_and_sorted(p in distribution(9), n in 1usize..=9) {
        let ranked = top_n(&p, n).unwrap();
        prop_assert_eq!(ranked.len(), n);
        prop_assert!(top_n(&p, 10).is_err() && top_n(&p, 0).is_err());
        let unique: HashSet<usize> = ranked.iter().copied().collect();
        prop_assert_eq!(unique.len(), ranked.len());
        for w in ranked.windows(2) {
            prop_assert!(p[w[0]] >= p[w[1]]);
        }
        prop_assert_eq!(ranked[0], argmax(&p));
    }

    #[test]
    fn recall_is_monotone_and_matches_precision_at_one(
        probs in prop::collection::vec(distribution(6), 1..40),
        truth_seed in prop::collection::vec(0usize..6, 40),
    ) {
        let truth: Vec<usize> = truth_seed[..probs.len()].to_vec();
        let ranked: Vec<Vec<usize>> = probs.iter().map(|p| top_n(p, 6).unwrap()).collect();
        let argmaxes: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let at1 = recall_at_n(&ranked, &truth, 1).unwrap();
        prop_assert_eq!(at1, precision(&argmaxes, &truth).unwrap());
        let mut last = at1;
        for n in 2..=6 {
            let r = recall_at_n(&ranked, &truth, n).unwrap();
            prop_assert!(r >= last);
            last = r;
        }
        prop_assert_eq!(last, 1.0);
    }

    #[test]
    fn baseline_precision_is_modal_frequency(labels in prop::collection::vec(0usize..5, 1..60), test in prop::collection::vec(0usize..5, 1..60)) {
        let train: Vec<TargetLabels> = labels.iter().map(|&l| TargetLabels { degree: 0, salary: l, size: 0, position: 0 }).collect();
        let classes = BTreeMap::from([(Task::Degree, 3), (Task::Salary, 7), (Task::Size, 6), (Task::Position, 1)]);
        let base = fit_baseline(&train, &classes).unwrap();
        let top = base.top_n(Task::Salary, 1).unwrap()[0];
        let count = |c: usize| labels.iter().filter(|&&l| l == c).count();
        // modal label, lowest id on ties
        let modal = (0..7).max_by(|&a, &b| count(a).cmp(&count(b)).then(b.cmp(&a))).unwrap();
        prop_assert_eq!(top, modal);
        let p = precision(&vec![top; test.len()], &test).unwrap();
        let freq = test.iter().filter(|&&t| t == modal).count() as f64 / test.len() as f64;
        prop_assert!((p - freq).abs() < 1e-12);
    }

    #[test]
    fn tree_models_emit_distributions(seed in 0u64..500, k in 2usize..5) {
        let n = 30;
        let data: Vec<f64> = (0..n * 4).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64 / 97.0).collect();
        let x = Matrix::new(n, 4, data).unwrap();
        let y: Vec<usize> = (0..n).map(|i| (i + seed as usize) % k).collect();
        let forest = train_random_forest(&x, &y, k, &ForestParams { trees: 3, ..Default::default() }, seed).unwrap();
        let gbt = train_gbt(&x, &y, k, &GbtParams { rounds: 2, ..Default::default() }, seed).unwrap();
        for i in 0..n {
            for p in [forest.predict_proba(x.row(i)), gbt.predict_proba(x.row(i))] {
                prop_assert_eq!(p.len(), k);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(p.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn kmeans_assigns_to_the_nearest_centroid(points in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 6..30), k in 1usize..5, probe in prop::collection::vec(-6.0f64..6.0, 3)) {
        let m = kmeans_fit(&points, &KMeansConfig::new(k, 0)).unwrap();
        let d = |c: &[f64]| c.iter().zip(&probe).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let best = m.assign(&probe).unwrap();
        for c in &m.centroids {
            prop_assert!(d(&m.centroids[best]) <= d(c));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn features_ignore_the_last_experience(
        index in 0usize..1000,
        field in 0usize..8,
        text in "[a-z\u{4e00}-\u{4e20}]{0,6}",
        number in 0u32..10,
        months in 0i64..200,
    ) {
        let f = fixture();
        let r = &f.corpus.resumes[index % f.corpus.resumes.len()];
        let before = featurize(r, &f.artifacts).unwrap();
        prop_assert_eq!(before.values.len(), FEATURE_WIDTH);
        let mut m: Resume = r.clone();
        let last = m.experiences.last_mut().unwrap();
        match field {
            0 => last.position_name = text,
            1 => last.department = text,
            2 => last.industry = text,
            3 => last.salary = (number % 7) as u8,
            4 => last.size = number,
            5 => last.experience_type = text,
            6 => last.end_date = EndDate::Month(YearMonth::from_index(last.start_date.index() + months)),
            _ => last.quarter_count = number + 1,
        }
        prop_assert_eq!(featurize(&m, &f.artifacts).unwrap(), before);
    }
}
