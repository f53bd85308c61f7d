//! The staged pipeline over on-disk artifacts.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::{self, sha256_hex, stage_key, Header, FORMAT_VERSION};
use super::config::RunConfig;
use crate::clustering::{kmeans_fit, lda_fit, KMeansModel, LdaModel};
use crate::corpus::{
    assign_split, build_corpus, parse_resume, scan_reference_date, Corpus, EndDate, Resume, Task, WorkExperience,
    EMPTY_PHRASE,
};
use crate::embeddings::{build_history_sequence, build_phrase_sequence, train_skipgram, EmbeddingTable};
use crate::ensemble::{ibagging, top_n};
use crate::error::{Error, Result};
use crate::estimators::{
    grid_search, train_gbt, train_random_forest, FeatureSet, ForestParams, GbtParams, Matrix, ModelKind, ModelParams,
    TrainedModel,
};
use crate::evaluation::{build_report, check_leakage, fit_baseline, EvaluationReport, Method, ReportInputs};
use crate::features::{
    featurize, target_columns, CategoricalDictionaries, FeatureArtifacts, FeatureMatrix, FEATURE_WIDTH, LAYOUT_VERSION,
};

/// Subcommand names, in execution order.
pub const STAGES: [&str; 6] = ["ingest", "embed", "cluster", "featurize", "train", "evaluate"];

/// Record-level cleaning and filtering counts from ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: usize,
    /// Lines that failed to parse or violated the schema.
    pub malformed: usize,
    /// Later records repeating an earlier id.
    pub duplicates: usize,
    /// Records whose current position is outside the position vocabulary.
    pub filtered: usize,
    pub retained: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CorpusArtifact {
    stats: IngestStats,
    corpus: Corpus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterArtifact {
    kmeans: [KMeansModel; 2],
    lda: [LdaModel; 2],
    dictionaries: CategoricalDictionaries,
}

/// Base methods and the model/feature-set pair behind each.
pub const BASE_MODELS: [(Method, ModelKind, FeatureSet); 6] = [
    (Method::GbtManual, ModelKind::Gbt, FeatureSet::Manual),
    (Method::GbtSemantic, ModelKind::Gbt, FeatureSet::Semantic),
    (Method::GbtAll, ModelKind::Gbt, FeatureSet::All),
    (Method::RfAll, ModelKind::Forest, FeatureSet::All),
    (Method::CnnAll, ModelKind::Cnn, FeatureSet::All),
    (Method::RecurrentAll, ModelKind::Recurrent, FeatureSet::All),
];

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut h = seed ^ 0x243F_6A88_85A3_08D3;
    for v in [a, b] {
        h = (h ^ v).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 29;
    }
    h
}

pub struct Pipeline {
    pub config: RunConfig,
    input_hash: String,
    keys: BTreeMap<&'static str, String>,
}

impl Pipeline {
    /// Hashes the input file and derives every stage key from the configuration.
    pub fn new(config: RunConfig) -> Result<Pipeline> {
        config.validate()?;
        let bytes = fs::read(&config.paths.input)
            .map_err(|e| Error::config(format!("cannot read input {}: {e}", config.paths.input.display())))?;
        let input_hash = sha256_hex(&bytes);
        let mut keys = BTreeMap::new();
        let ingest = stage_key(&input_hash, "ingest", &(config.seed, &config.corpus));
        let embed = stage_key(&ingest, "embed", &config.skipgram());
        let cluster = stage_key(&embed, "cluster", &(config.seed, &config.clustering));
        let featurize = stage_key(&cluster, "featurize", &LAYOUT_VERSION);
        let train = stage_key(&featurize, "train", &(config.seed, &config.models, &config.grid));
        let evaluate = stage_key(&train, "evaluate", &(&config.ensemble, &config.evaluation));
        for (name, key) in STAGES.iter().zip([ingest, embed, cluster, featurize, train, evaluate]) {
            keys.insert(*name, key);
        }
        Ok(Pipeline {
            config,
            input_hash,
            keys,
        })
    }

    pub fn input_hash(&self) -> &str {
        &self.input_hash
    }

    pub fn stage_key(&self, stage: &str) -> Option<&str> {
        self.keys.get(stage).map(String::as_str)
    }

    fn dir(&self) -> &Path {
        &self.config.paths.artifacts
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir().join(file)
    }

    fn header(&self, stage: &str, kind: &str) -> Header {
        Header {
            kind: kind.to_string(),
            version: FORMAT_VERSION,
            key: self.keys[stage].clone(),
            input: self.input_hash.clone(),
        }
    }

    fn write(&self, stage: &str, kind: &str, file: &str, payload: &str) -> Result<()> {
        artifact::write(&self.path(file), &self.header(stage, kind), payload)
    }

    fn read(&self, stage: &str, kind: &str, file: &str) -> Result<String> {
        artifact::read(&self.path(file), &self.header(stage, kind), stage)
    }

    fn model_file(task: Task, method: Method) -> String {
        format!("model-{}-{}.art", task.name(), method.key())
    }

    /// Files a stage writes, relative to the artifact directory.
    fn outputs(&self, stage: &str) -> Vec<(String, &'static str)> {
        match stage {
            "ingest" => vec![("corpus.art".into(), "corpus")],
            "embed" => vec![("embeddings.art".into(), "embeddings")],
            "cluster" => vec![("clusters.art".into(), "clusters")],
            "featurize" => vec![
                ("features-train.art".into(), "features"),
                ("features-test.art".into(), "features"),
            ],
            "train" => Task::ALL
                .iter()
                .flat_map(|&t| {
                    BASE_MODELS
                        .iter()
                        .map(move |(m, _, _)| (Self::model_file(t, *m), "model"))
                })
                .collect(),
            "evaluate" => vec![("report.json".into(), "report")],
            _ => Vec::new(),
        }
    }

    /// Whether every artifact of `stage` exists and matches the current key.
    pub fn is_fresh(&self, stage: &str) -> bool {
        let outs = self.outputs(stage);
        !outs.is_empty() && outs.iter().all(|(f, kind)| self.read(stage, kind, f).is_ok())
    }

    // ---- ingest ----

    pub fn ingest(&self) -> Result<IngestStats> {
        let text = fs::read_to_string(&self.config.paths.input)?;
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let reference = match self.config.corpus.reference()? {
            Some(r) => r,
            None => scan_reference_date(lines.iter().copied())
                .ok_or_else(|| Error::config("no dated records in the input; set corpus.reference_date"))?,
        };
        let parsed: Vec<Result<Resume>> = lines.par_iter().map(|l| parse_resume(l, reference)).collect();
        let mut stats = IngestStats {
            lines: lines.len(),
            ..Default::default()
        };
        let mut seen = HashSet::new();
        let mut resumes = Vec::new();
        for (i, r) in parsed.into_iter().enumerate() {
            match r {
                Ok(r) if seen.insert(r.id.clone()) => resumes.push(r),
                Ok(r) => {
                    stats.duplicates += 1;
                    log::warn!("line {}: duplicate id {:?} dropped", i + 1, r.id);
                }
                Err(e) => {
                    stats.malformed += 1;
                    if stats.malformed <= 10 {
                        log::warn!("line {}: {e}", i + 1);
                    }
                }
            }
        }
        let parsed_count = resumes.len();
        let mut corpus = build_corpus(resumes, self.config.corpus.top_k, reference)?;
        let split = assign_split(&corpus, self.config.corpus.test_fraction, self.config.seed)?;
        stats.filtered = parsed_count - corpus.resumes.len();
        stats.retained = corpus.resumes.len();
        stats.test = split.is_test.iter().filter(|&&t| t).count();
        stats.train = stats.retained - stats.test;
        corpus.split = Some(split);
        log::info!(
            "ingest: {} lines, {} malformed, {} duplicates, {} outside the top {} positions, {} retained ({} train / {} test)",
            stats.lines,
            stats.malformed,
            stats.duplicates,
            stats.filtered,
            self.config.corpus.top_k,
            stats.retained,
            stats.train,
            stats.test
        );
        let payload = serde_json::to_string(&CorpusArtifact {
            stats: stats.clone(),
            corpus,
        })?;
        self.write("ingest", "corpus", "corpus.art", &payload)?;
        Ok(stats)
    }

    fn load_corpus(&self) -> Result<(IngestStats, Corpus)> {
        let a: CorpusArtifact = serde_json::from_str(&self.read("ingest", "corpus", "corpus.art")?)?;
        Ok((a.stats, a.corpus))
    }

    // ---- embed ----

    pub fn embed(&self) -> Result<EmbeddingTable> {
        let (_, corpus) = self.load_corpus()?;
        let (train, _) = corpus.partitions()?;
        let sequences: Vec<_> = train.resumes.iter().map(build_phrase_sequence).collect();
        let table = train_skipgram(&sequences, &self.config.skipgram())?;
        log::info!("embed: {} tokens, dimension {}", table.len(), table.dim());
        self.write("embed", "embeddings", "embeddings.art", &table.to_text())?;
        Ok(table)
    }

    fn load_embeddings(&self) -> Result<EmbeddingTable> {
        EmbeddingTable::from_text(&self.read("embed", "embeddings", "embeddings.art")?)
    }

    // ---- cluster ----

    pub fn cluster(&self) -> Result<()> {
        let (_, corpus) = self.load_corpus()?;
        let (train, _) = corpus.partitions()?;
        let table = self.load_embeddings()?;
        let vectors: Vec<Vec<f64>> = (0..table.len()).map(|i| table.vector(i).to_vec()).collect();
        let distinct = {
            let mut bits: Vec<Vec<u64>> = vectors
                .iter()
                .map(|v| v.iter().map(|x| x.to_bits()).collect())
                .collect();
            bits.sort();
            bits.dedup();
            bits.len()
        };
        let mut kmeans = Vec::new();
        for (which, &k) in self.config.clustering.kmeans_k.iter().enumerate() {
            let k_eff = k.min(distinct);
            if k_eff < k {
                log::warn!("cluster: only {distinct} distinct phrase vectors; k = {k} reduced to {k_eff}");
            }
            let model = kmeans_fit(&vectors, &self.config.kmeans(which, k_eff))?;
            log::info!(
                "cluster: k-means k={k_eff} inertia {:.4} after {} iterations",
                model.inertia,
                model.iterations
            );
            kmeans.push(model);
        }
        let docs: Vec<Vec<String>> = train.resumes.iter().map(|r| build_history_sequence(r).tokens).collect();
        let lda: Vec<LdaModel> = (0..2)
            .into_par_iter()
            .map(|which| lda_fit(&docs, &self.config.lda(which)))
            .collect::<Result<_>>()?;
        let dictionaries = CategoricalDictionaries::fit(&train.resumes);
        let art = ClusterArtifact {
            kmeans: kmeans.try_into().expect("two k-means models"),
            lda: lda.try_into().expect("two topic models"),
            dictionaries,
        };
        self.write("cluster", "clusters", "clusters.art", &serde_json::to_string(&art)?)
    }

    fn load_feature_artifacts(&self, corpus: &Corpus) -> Result<FeatureArtifacts> {
        let embeddings = self.load_embeddings()?;
        let mut art: ClusterArtifact = serde_json::from_str(&self.read("cluster", "clusters", "clusters.art")?)?;
        for m in &mut art.lda {
            m.rebuild_index();
        }
        art.dictionaries.rebuild_indexes();
        let fa = FeatureArtifacts {
            embeddings,
            kmeans: art.kmeans,
            lda: art.lda,
            dictionaries: art.dictionaries,
            reference_date: corpus.reference_date,
        };
        fa.validate()?;
        Ok(fa)
    }

    // ---- featurize ----

    pub fn featurize(&self) -> Result<(FeatureMatrix, FeatureMatrix)> {
        let (_, corpus) = self.load_corpus()?;
        let artifacts = self.load_feature_artifacts(&corpus)?;
        let (train, test) = corpus.partitions()?;
        let ftrain = FeatureMatrix::build(&train, &artifacts)?;
        let ftest = FeatureMatrix::build(&test, &artifacts)?;
        log::info!(
            "featurize: {} train and {} test rows of width {FEATURE_WIDTH} ({} out-of-vocabulary phrase lookups)",
            ftrain.len(),
            ftest.len(),
            artifacts.embeddings.oov_lookups()
        );
        self.write("featurize", "features", "features-train.art", &ftrain.to_text())?;
        self.write("featurize", "features", "features-test.art", &ftest.to_text())?;
        Ok((ftrain, ftest))
    }

    fn load_features(&self, file: &str) -> Result<FeatureMatrix> {
        FeatureMatrix::from_text(&self.read("featurize", "features", file)?)
    }

    // ---- train ----

    #[allow(clippy::too_many_arguments)]
    fn grid_tune(
        &self,
        kind: ModelKind,
        fs: FeatureSet,
        x: &Matrix,
        y: &[usize],
        k: usize,
        seed: u64,
        task: Task,
    ) -> Result<ModelParams> {
        let mut params = self.config.models.params();
        let g = &self.config.grid;
        let mut x = x.clone();
        for i in 0..x.rows {
            for &c in target_columns(task) {
                x.data[i * x.cols + c] = 0.0;
            }
        }
        let mut idx: Vec<usize> = (0..x.rows).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = ((x.rows as f64) * g.validation_fraction)
            .round()
            .clamp(1.0, (x.rows - 1) as f64) as usize;
        let (val_idx, fit_idx) = idx.split_at(n_val);
        let sub = |rows: &[usize]| x.select_rows(rows).columns(fs.range());
        let (fx, vx) = (sub(fit_idx), sub(val_idx));
        let fy: Vec<usize> = fit_idx.iter().map(|&i| y[i]).collect();
        let vy: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();
        let name = format!("grid-{}-{}-{}.csv", task.name(), kind.name(), fs.name());
        match kind {
            ModelKind::Forest => {
                let grid: Vec<ForestParams> = g
                    .forest_trees
                    .iter()
                    .flat_map(|&trees| g.forest_depth.iter().map(move |&max_depth| (trees, max_depth)))
                    .map(|(trees, max_depth)| ForestParams {
                        trees,
                        max_depth,
                        ..params.forest
                    })
                    .collect();
                let r = grid_search(&grid, (&fx, &fy), (&vx, &vy), |p, x, y| {
                    train_random_forest(x, y, k, p, seed)
                })?;
                fs::write(self.path(&name), r.surface_csv())?;
                params.forest = r.best;
            }
            ModelKind::Gbt => {
                let grid: Vec<GbtParams> = g
                    .gbt_rounds
                    .iter()
                    .flat_map(|&rounds| g.gbt_depth.iter().map(move |&max_depth| (rounds, max_depth)))
                    .map(|(rounds, max_depth)| GbtParams {
                        rounds,
                        max_depth,
                        ..params.gbt
                    })
                    .collect();
                let r = grid_search(&grid, (&fx, &fy), (&vx, &vy), |p, x, y| train_gbt(x, y, k, p, seed))?;
                fs::write(self.path(&name), r.surface_csv())?;
                params.gbt = r.best;
            }
            _ => {}
        }
        Ok(params)
    }

    pub fn train(&self) -> Result<()> {
        let (_, corpus) = self.load_corpus()?;
        let ftrain = self.load_features("features-train.art")?;
        let mut timings = String::from("task\tmethod\tseconds\n");
        for (ti, task) in Task::ALL.into_iter().enumerate() {
            let y: Vec<usize> = ftrain.labels.iter().map(|l| l.get(task)).collect();
            let k = corpus.n_classes(task);
            for (mi, (method, kind, fs)) in BASE_MODELS.into_iter().enumerate() {
                let seed = mix(self.config.seed, ti as u64, mi as u64);
                let started = Instant::now();
                let params = if self.config.grid.enabled && matches!(kind, ModelKind::Gbt | ModelKind::Forest) {
                    self.grid_tune(kind, fs, &ftrain.matrix, &y, k, seed, task)?
                } else {
                    self.config.models.params()
                };
                let model =
                    TrainedModel::train_masked(kind, fs, &ftrain.matrix, &y, k, &params, seed, target_columns(task))?;
                let secs = started.elapsed().as_secs_f64();
                log::info!("train: {task} {} in {secs:.1}s", method.key());
                let _ = writeln!(timings, "{task}\t{}\t{secs:.2}", method.key());
                self.write(
                    "train",
                    "model",
                    &Self::model_file(task, method),
                    &serde_json::to_string(&model)?,
                )?;
            }
        }
        // Wall-clock times vary between runs, so they live outside the report.
        fs::write(self.path("timings.tsv"), timings)?;
        Ok(())
    }

    fn load_model(&self, task: Task, method: Method) -> Result<TrainedModel> {
        let m: TrainedModel = serde_json::from_str(&self.read("train", "model", &Self::model_file(task, method))?)?;
        if m.layout_version != LAYOUT_VERSION {
            return Err(Error::config(format!(
                "model {} uses feature layout v{}, this build produces v{LAYOUT_VERSION}",
                method.key(),
                m.layout_version
            )));
        }
        Ok(m)
    }

    // ---- evaluate ----

    pub fn evaluate(&self) -> Result<EvaluationReport> {
        let (stats, corpus) = self.load_corpus()?;
        let (train_c, test_c) = corpus.partitions()?;
        let ftrain = self.load_features("features-train.art")?;
        let ftest = self.load_features("features-test.art")?;
        let fit_ids = train_c
            .resumes
            .iter()
            .map(|r| r.id.as_str())
            .chain(ftrain.ids.iter().map(String::as_str));
        check_leakage(fit_ids, ftest.ids.iter().map(String::as_str))?;
        let expected: Vec<&str> = test_c.resumes.iter().map(|r| r.id.as_str()).collect();
        if ftest.ids.iter().map(String::as_str).ne(expected.iter().copied()) {
            return Err(Error::Artifact {
                stage: "featurize".into(),
                message: "test features do not match the corpus split; rerun `jobmatch featurize`".into(),
            });
        }

        let ensemble = self.config.ensemble.methods()?;
        let n_classes: BTreeMap<Task, usize> = Task::ALL.iter().map(|&t| (t, corpus.n_classes(t))).collect();
        let baseline = fit_baseline(&ftrain.labels, &n_classes)?;
        let mut truth = BTreeMap::new();
        let mut probabilities = BTreeMap::new();
        let mut metadata = BTreeMap::new();
        for task in Task::ALL {
            truth.insert(task, ftest.labels.iter().map(|l| l.get(task)).collect::<Vec<_>>());
            let mut by = BTreeMap::new();
            for (method, _, _) in BASE_MODELS {
                let model = self.load_model(task, method)?;
                if let Some(u) = model.feature_usage() {
                    metadata.insert(
                        format!("features_used.{}.{}", method.key(), task.name()),
                        format!("{}/{}", u.used, model.feature_set.range().len()),
                    );
                }
                let probs: Vec<Vec<f64>> = (0..ftest.len())
                    .into_par_iter()
                    .map(|i| model.predict_proba(&ftest.row(i)))
                    .collect::<Result<_>>()?;
                by.insert(method, probs);
            }
            probabilities.insert(task, by);
        }
        metadata.insert("config_key".into(), self.keys["evaluate"].clone());
        metadata.insert("input_sha256".into(), self.input_hash.clone());
        metadata.insert("seed".into(), self.config.seed.to_string());
        metadata.insert("test_fraction".into(), self.config.corpus.test_fraction.to_string());
        metadata.insert("layout_version".into(), LAYOUT_VERSION.to_string());
        metadata.insert("reference_date".into(), corpus.reference_date.to_string());
        metadata.insert(
            "records".into(),
            format!(
                "{} lines, {} malformed, {} duplicate, {} outside top {}, {} retained",
                stats.lines,
                stats.malformed,
                stats.duplicates,
                stats.filtered,
                self.config.corpus.top_k,
                stats.retained
            ),
        );
        metadata.insert("split".into(), format!("{} train / {} test", ftrain.len(), ftest.len()));
        metadata.insert(
            "ensemble".into(),
            ensemble.iter().map(|m| m.key()).collect::<Vec<_>>().join(","),
        );
        let report = build_report(&ReportInputs {
            truth,
            probabilities,
            ensemble,
            baseline,
            n_values: self.config.evaluation.n_values.clone(),
            metadata,
        })?;
        fs::write(self.path("report.txt"), report.to_text())?;
        fs::write(self.path("report.tsv"), report.to_tsv())?;
        self.write(
            "evaluate",
            "report",
            "report.json",
            &serde_json::to_string_pretty(&report)?,
        )?;
        Ok(report)
    }

    // ---- recommend ----

    /// Top-`n` positions for one resume record, ranked by the probability-sum ensemble.
    ///
    /// The record is read as a job seeker's full history: every listed
    /// experience is visible to the features, and the position being
    /// predicted is the next one.
    pub fn recommend(&self, resume_json: &str, n: usize) -> Result<Vec<(String, f64)>> {
        let (_, corpus) = self.load_corpus()?;
        let artifacts = self.load_feature_artifacts(&corpus)?;
        let mut resume = parse_resume(resume_json, corpus.reference_date)?;
        resume.experiences.push(WorkExperience {
            position_name: EMPTY_PHRASE.into(),
            department: EMPTY_PHRASE.into(),
            industry: EMPTY_PHRASE.into(),
            salary: 0,
            size: 0,
            experience_type: EMPTY_PHRASE.into(),
            start_date: corpus.reference_date,
            end_date: EndDate::Present,
            quarter_count: 1,
        });
        let x = featurize(&resume, &artifacts)?;
        let members = self.config.ensemble.methods()?;
        let probs: Vec<Vec<f64>> = members
            .iter()
            .map(|&m| self.load_model(Task::Position, m)?.predict_proba(&x))
            .collect::<Result<_>>()?;
        let (_, combined) = ibagging(&probs)?;
        let ranked = top_n(&combined, n)?;
        Ok(ranked
            .into_iter()
            .map(|c| (corpus.class_name(Task::Position, c), combined[c]))
            .collect())
    }

    /// Runs one stage by name.
    pub fn run_stage(&self, stage: &str) -> Result<()> {
        let started = Instant::now();
        match stage {
            "ingest" => self.ingest().map(drop),
            "embed" => self.embed().map(drop),
            "cluster" => self.cluster(),
            "featurize" => self.featurize().map(drop),
            "train" => self.train(),
            "evaluate" => self.evaluate().map(drop),
            other => Err(Error::argument(format!("unknown stage {other:?}"))),
        }?;
        log::info!("{stage} finished in {:.1}s", started.elapsed().as_secs_f64());
        Ok(())
    }

    /// Runs every stage in order. With `resume`, stages whose artifacts are
    /// already current are skipped.
    pub fn run_all(&self, resume: bool) -> Result<EvaluationReport> {
        fs::create_dir_all(self.dir())?;
        let mut upstream_rebuilt = false;
        for stage in &STAGES[..STAGES.len() - 1] {
            if resume && !upstream_rebuilt && self.is_fresh(stage) {
                log::info!("{stage}: up to date");
                continue;
            }
            self.run_stage(stage)?;
            upstream_rebuilt = true;
        }
        self.evaluate()
    }
}
