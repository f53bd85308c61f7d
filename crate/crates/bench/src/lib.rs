//! Shared fixtures for the benchmarks: a synthetic corpus with small fitted
//! feature artifacts and the resulting feature matrices.

use jobmatch_core::clustering::{kmeans_fit, lda_fit, KMeansConfig, LdaConfig};
use jobmatch_core::corpus::{assign_split, build_corpus, Corpus, Task};
use jobmatch_core::embeddings::{build_history_sequence, build_phrase_sequence, train_skipgram, SkipGramConfig};
use jobmatch_core::estimators::Matrix;
use jobmatch_core::features::{CategoricalDictionaries, FeatureArtifacts, FeatureMatrix};
use jobmatch_core::synth::{generate, synth_reference_date, SynthConfig};

pub struct Fixture {
    pub train: Corpus,
    pub test: Corpus,
    pub artifacts: FeatureArtifacts,
    pub train_features: FeatureMatrix,
}

impl Fixture {
    /// `n` synthetic resumes, 16 positions, lightweight embedding and clustering settings.
    pub fn new(n: usize) -> Fixture {
        let resumes = generate(&SynthConfig {
            n,
            seed: 1,
            signal: 0.8,
        });
        let mut corpus = build_corpus(resumes, 16, synth_reference_date()).expect("corpus");
        corpus.split = Some(assign_split(&corpus, 0.2, 1).expect("split"));
        let (train, test) = corpus.partitions().expect("partitions");
        let sequences: Vec<_> = train.resumes.iter().map(build_phrase_sequence).collect();
        let embeddings = train_skipgram(
            &sequences,
            &SkipGramConfig {
                epochs: 3,
                ..Default::default()
            },
        )
        .expect("embeddings");
        let vectors: Vec<Vec<f64>> = (0..embeddings.len()).map(|i| embeddings.vector(i).to_vec()).collect();
        let kmeans = [16, 32].map(|k| kmeans_fit(&vectors, &KMeansConfig::new(k, 1)).expect("kmeans"));
        let docs: Vec<Vec<String>> = train.resumes.iter().map(|r| build_history_sequence(r).tokens).collect();
        let lda = [4, 8].map(|t| {
            lda_fit(
                &docs,
                &LdaConfig {
                    iterations: 30,
                    ..LdaConfig::new(t, 1)
                },
            )
            .expect("lda")
        });
        let artifacts = FeatureArtifacts {
            embeddings,
            kmeans,
            lda,
            dictionaries: CategoricalDictionaries::fit(&train.resumes),
            reference_date: train.reference_date,
        };
        let train_features = FeatureMatrix::build(&train, &artifacts).expect("features");
        Fixture {
            train,
            test,
            artifacts,
            train_features,
        }
    }

    pub fn task(&self, task: Task) -> (&Matrix, Vec<usize>, usize) {
        let y = self.train_features.labels.iter().map(|l| l.get(task)).collect();
        (&self.train_features.matrix, y, self.train.n_classes(task))
    }
}
