//! Fixed-layout feature vectors.
//!
//! | slots       | block    | content                                                  |
//! |-------------|----------|----------------------------------------------------------|
//! | `[0, 95)`   | manual   | personal fields, history aggregates, per-job keys/values  |
//! | `[95, 167)` | cluster  | k-means ids of 35 job phrases at two granularities, 2 LDA topics |
//! | `[167, 547)`| semantic | 38 phrase slots x 10-dim embeddings                       |
//!
//! Everything is computed from the history *without* the current (last)
//! experience, which is the prediction target. The job window is the five
//! most recent masked experiences, most recent first. Missing jobs are
//! encoded as `-1` in the manual and cluster blocks and as zero vectors in
//! the semantic block.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::clustering::{KMeansModel, LdaModel};
use crate::corpus::{Corpus, Resume, TargetLabels, Task, WorkExperience, YearMonth, SALARY_CLASSES};
use crate::embeddings::{
    build_history_sequence, experience_tokens, personal_tokens, EmbeddingTable, EMBEDDING_DIM, PERSONAL_SLOTS,
    SLOTS_PER_EXPERIENCE,
};
use crate::error::{Error, Result};
use crate::estimators::Matrix;

pub const LAYOUT_VERSION: u32 = 1;
pub const HISTORY_WINDOW: usize = 5;
pub const MANUAL_WIDTH: usize = 95;
pub const CLUSTER_WIDTH: usize = 2 * HISTORY_WINDOW * SLOTS_PER_EXPERIENCE + 2;
pub const SEQUENCE_STEPS: usize = HISTORY_WINDOW * SLOTS_PER_EXPERIENCE + PERSONAL_SLOTS;
pub const SEMANTIC_WIDTH: usize = SEQUENCE_STEPS * EMBEDDING_DIM;
pub const FEATURE_WIDTH: usize = MANUAL_WIDTH + CLUSTER_WIDTH + SEMANTIC_WIDTH;

pub const MANUAL_RANGE: Range<usize> = 0..MANUAL_WIDTH;
pub const CLUSTER_RANGE: Range<usize> = MANUAL_WIDTH..MANUAL_WIDTH + CLUSTER_WIDTH;
pub const SEMANTIC_RANGE: Range<usize> = MANUAL_WIDTH + CLUSTER_WIDTH..FEATURE_WIDTH;

/// Padding value for absent jobs and unknown topics.
pub const MISSING: f64 = -1.0;

// Manual block slots.
pub const SLOT_GENDER: usize = 0;
pub const SLOT_AGE: usize = 1;
pub const SLOT_MAJOR: usize = 2;
pub const SLOT_DEGREE: usize = 3;
pub const SLOT_HISTORY_COUNT: usize = 4;
pub const SLOT_SALARY_MAX: usize = 5;
pub const SLOT_SALARY_MIN: usize = 6;
pub const SLOT_SALARY_MEAN: usize = 7;
pub const SLOT_SALARY_RECENT: usize = 8;
pub const SLOT_SIZE_MAX: usize = 9;
pub const SLOT_SIZE_MEAN: usize = 10;
pub const SLOT_AGE_FIRST_JOB: usize = 11;
pub const SLOT_QUARTERS_TOTAL: usize = 12;
pub const SLOT_QUARTERS_MEAN: usize = 13;
pub const SLOT_QUARTERS_MAX: usize = 14;
pub const SLOT_QUARTERS_MIN: usize = 15;
pub const SLOT_INDUSTRY_CHANGES: usize = 16;
pub const SLOT_POSITION_CHANGES: usize = 17;
pub const SLOT_DISTINCT_DEPARTMENTS: usize = 18;
pub const SLOT_DISTINCT_INDUSTRIES: usize = 19;
pub const SLOT_DISTINCT_POSITIONS: usize = 20;
pub const SLOT_SALARY_DELTA: usize = 21;
pub const SLOT_MONTHS_SINCE_RECENT: usize = 22;
pub const SLOT_GAP_MONTHS: usize = 23;
pub const SLOT_EMPTY_DEPARTMENTS: usize = 24;
pub const SLOT_TYPED_JOBS: usize = 25;
/// Seven values per windowed job: department, industry, position keys,
/// salary, size, type key, quarters.
pub const SLOT_JOBS: usize = 26;
/// Months between each windowed job's start and the reference date.
pub const SLOT_JOB_START_AGE: usize = SLOT_JOBS + HISTORY_WINDOW * SLOTS_PER_EXPERIENCE;
/// Count of masked jobs per salary band.
pub const SLOT_SALARY_HISTOGRAM: usize = SLOT_JOB_START_AGE + HISTORY_WINDOW;
pub const SLOT_FIRST_POSITION: usize = SLOT_SALARY_HISTOGRAM + SALARY_CLASSES;
pub const SLOT_FIRST_INDUSTRY: usize = SLOT_FIRST_POSITION + 1;
pub const SLOT_FIRST_SALARY: usize = SLOT_FIRST_POSITION + 2;
pub const SLOT_FIRST_SIZE: usize = SLOT_FIRST_POSITION + 3;
/// Slots from here to `MANUAL_WIDTH` are reserved and always zero.
pub const SLOT_RESERVED: usize = SLOT_FIRST_POSITION + 4;

const _: () = assert!(SLOT_RESERVED <= MANUAL_WIDTH);
const _: () = assert!(FEATURE_WIDTH == 547);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout_version: u32,
}

impl FeatureVector {
    pub fn manual(&self) -> &[f64] {
        &self.values[MANUAL_RANGE]
    }

    pub fn cluster(&self) -> &[f64] {
        &self.values[CLUSTER_RANGE]
    }

    pub fn semantic(&self) -> &[f64] {
        &self.values[SEMANTIC_RANGE]
    }
}

/// Insertion-ordered string dictionary. Key 0 is reserved for unseen values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    entries: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Dictionary {
    pub fn insert(&mut self, value: &str) {
        if !self.index.contains_key(value) {
            self.index.insert(value.to_string(), self.entries.len());
            self.entries.push(value.to_string());
        }
    }

    pub fn key(&self, value: &str) -> f64 {
        self.index.get(value).map_or(0.0, |&i| (i + 1) as f64)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn rebuild_index(&mut self) {
        self.index = self.entries.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDictionaries {
    pub gender: Dictionary,
    pub major: Dictionary,
    pub department: Dictionary,
    pub industry: Dictionary,
    pub position: Dictionary,
    pub experience_type: Dictionary,
}

impl CategoricalDictionaries {
    /// Built from every field of the training resumes in corpus order.
    pub fn fit(resumes: &[Resume]) -> Self {
        let mut d = Self::default();
        for r in resumes {
            d.gender.insert(&r.gender);
            d.major.insert(&r.major);
            for e in &r.experiences {
                d.department.insert(&e.department);
                d.industry.insert(&e.industry);
                d.position.insert(&e.position_name);
                d.experience_type.insert(&e.experience_type);
            }
        }
        d
    }

    pub fn rebuild_indexes(&mut self) {
        for dict in [
            &mut self.gender,
            &mut self.major,
            &mut self.department,
            &mut self.industry,
            &mut self.position,
            &mut self.experience_type,
        ] {
            dict.rebuild_index();
        }
    }
}

/// Everything fitted on the training split that featurization needs.
#[derive(Debug, Clone)]
pub struct FeatureArtifacts {
    pub embeddings: EmbeddingTable,
    /// Coarse (64) then fine (128) phrase clusterings.
    pub kmeans: [KMeansModel; 2],
    /// Small (32) then large (64) topic models.
    pub lda: [LdaModel; 2],
    pub dictionaries: CategoricalDictionaries,
    pub reference_date: YearMonth,
}

impl FeatureArtifacts {
    pub fn validate(&self) -> Result<()> {
        if self.embeddings.dim() != EMBEDDING_DIM {
            return Err(Error::config(format!(
                "feature layout needs {EMBEDDING_DIM}-dim embeddings, table has {}",
                self.embeddings.dim()
            )));
        }
        for km in &self.kmeans {
            if km.dim != self.embeddings.dim() {
                return Err(Error::config(format!(
                    "k-means model has dimension {}, embeddings {}",
                    km.dim,
                    self.embeddings.dim()
                )));
            }
        }
        Ok(())
    }
}

/// The up to five most recent masked experiences, most recent first.
fn window(resume: &Resume) -> impl Iterator<Item = &WorkExperience> {
    resume.history().iter().rev().take(HISTORY_WINDOW)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn changes<'a>(items: impl Iterator<Item = &'a str>) -> f64 {
    let v: Vec<&str> = items.collect();
    v.windows(2).filter(|w| w[0] != w[1]).count() as f64
}

/// Feature columns that restate a task's own target. The degree slot equals
/// the degree label, so degree models are trained with it held at zero.
pub fn target_columns(task: Task) -> &'static [usize] {
    match task {
        Task::Degree => &[SLOT_DEGREE],
        _ => &[],
    }
}

pub fn manual_features(resume: &Resume, dicts: &CategoricalDictionaries, reference: YearMonth) -> Vec<f64> {
    let mut f = vec![0.0; MANUAL_WIDTH];
    f[SLOT_GENDER] = dicts.gender.key(&resume.gender);
    f[SLOT_AGE] = resume.age as f64;
    f[SLOT_MAJOR] = dicts.major.key(&resume.major);
    f[SLOT_DEGREE] = resume.degree as f64;

    let hist = resume.history();
    f[SLOT_HISTORY_COUNT] = hist.len() as f64;
    if let (Some(first), Some(recent)) = (hist.first(), hist.last()) {
        let salaries = || hist.iter().map(|e| e.salary as f64);
        let quarters = || hist.iter().map(|e| e.quarter_count as f64);
        f[SLOT_SALARY_MAX] = salaries().fold(f64::MIN, f64::max);
        f[SLOT_SALARY_MIN] = salaries().fold(f64::MAX, f64::min);
        f[SLOT_SALARY_MEAN] = mean(salaries());
        f[SLOT_SALARY_RECENT] = recent.salary as f64;
        f[SLOT_SIZE_MAX] = hist.iter().map(|e| e.size as f64).fold(f64::MIN, f64::max);
        f[SLOT_SIZE_MEAN] = mean(hist.iter().map(|e| e.size as f64));
        let years_since_first = first.start_date.months_until(reference).max(0) / 12;
        f[SLOT_AGE_FIRST_JOB] = (resume.age as i64 - years_since_first).max(0) as f64;
        f[SLOT_QUARTERS_TOTAL] = quarters().sum();
        f[SLOT_QUARTERS_MEAN] = mean(quarters());
        f[SLOT_QUARTERS_MAX] = quarters().fold(f64::MIN, f64::max);
        f[SLOT_QUARTERS_MIN] = quarters().fold(f64::MAX, f64::min);
        f[SLOT_INDUSTRY_CHANGES] = changes(hist.iter().map(|e| e.industry.as_str()));
        f[SLOT_POSITION_CHANGES] = changes(hist.iter().map(|e| e.position_name.as_str()));
        let distinct = |g: fn(&WorkExperience) -> &str| hist.iter().map(g).collect::<BTreeSet<_>>().len() as f64;
        f[SLOT_DISTINCT_DEPARTMENTS] = distinct(|e| &e.department);
        f[SLOT_DISTINCT_INDUSTRIES] = distinct(|e| &e.industry);
        f[SLOT_DISTINCT_POSITIONS] = distinct(|e| &e.position_name);
        f[SLOT_SALARY_DELTA] = recent.salary as f64 - first.salary as f64;
        f[SLOT_MONTHS_SINCE_RECENT] = recent.end_date.resolve(reference).months_until(reference).max(0) as f64;
        f[SLOT_GAP_MONTHS] = hist
            .windows(2)
            .map(|w| w[0].end_date.resolve(reference).months_until(w[1].start_date).max(0) as f64)
            .sum();
        f[SLOT_EMPTY_DEPARTMENTS] = hist
            .iter()
            .filter(|e| e.department == crate::corpus::EMPTY_PHRASE)
            .count() as f64;
        f[SLOT_TYPED_JOBS] = hist
            .iter()
            .filter(|e| e.experience_type != crate::corpus::EMPTY_PHRASE)
            .count() as f64;
        for e in hist {
            f[SLOT_SALARY_HISTOGRAM + e.salary as usize] += 1.0;
        }
        f[SLOT_FIRST_POSITION] = dicts.position.key(&first.position_name);
        f[SLOT_FIRST_INDUSTRY] = dicts.industry.key(&first.industry);
        f[SLOT_FIRST_SALARY] = first.salary as f64;
        f[SLOT_FIRST_SIZE] = first.size as f64;
    } else {
        for slot in [
            SLOT_FIRST_POSITION,
            SLOT_FIRST_INDUSTRY,
            SLOT_FIRST_SALARY,
            SLOT_FIRST_SIZE,
        ] {
            f[slot] = MISSING;
        }
    }

    let jobs: Vec<&WorkExperience> = window(resume).collect();
    for j in 0..HISTORY_WINDOW {
        let base = SLOT_JOBS + j * SLOTS_PER_EXPERIENCE;
        match jobs.get(j) {
            Some(e) => {
                f[base] = dicts.department.key(&e.department);
                f[base + 1] = dicts.industry.key(&e.industry);
                f[base + 2] = dicts.position.key(&e.position_name);
                f[base + 3] = e.salary as f64;
                f[base + 4] = e.size as f64;
                f[base + 5] = dicts.experience_type.key(&e.experience_type);
                f[base + 6] = e.quarter_count as f64;
                f[SLOT_JOB_START_AGE + j] = e.start_date.months_until(reference).max(0) as f64;
            }
            None => {
                f[base..base + SLOTS_PER_EXPERIENCE].fill(MISSING);
                f[SLOT_JOB_START_AGE + j] = MISSING;
            }
        }
    }
    f
}

/// The 35 windowed phrase tokens (None for absent jobs), most recent job first.
fn windowed_tokens(resume: &Resume) -> Vec<Option<String>> {
    let jobs: Vec<&WorkExperience> = window(resume).collect();
    let mut out = Vec::with_capacity(HISTORY_WINDOW * SLOTS_PER_EXPERIENCE);
    for j in 0..HISTORY_WINDOW {
        match jobs.get(j) {
            Some(e) => out.extend(experience_tokens(e).into_iter().map(Some)),
            None => out.extend(std::iter::repeat_n(None, SLOTS_PER_EXPERIENCE)),
        }
    }
    out
}

pub fn cluster_features(resume: &Resume, artifacts: &FeatureArtifacts) -> Result<Vec<f64>> {
    artifacts.validate()?;
    let mut f = Vec::with_capacity(CLUSTER_WIDTH);
    let tokens = windowed_tokens(resume);
    for km in &artifacts.kmeans {
        for t in &tokens {
            f.push(match t {
                Some(t) => km.assign(&artifacts.embeddings.embed(t))? as f64,
                None => MISSING,
            });
        }
    }
    let doc = build_history_sequence(resume).tokens;
    for lda in &artifacts.lda {
        f.push(lda.dominant_topic(&doc).map_or(MISSING, |t| t as f64));
    }
    debug_assert_eq!(f.len(), CLUSTER_WIDTH);
    Ok(f)
}

pub fn semantic_features(resume: &Resume, artifacts: &FeatureArtifacts) -> Vec<f64> {
    let mut f = Vec::with_capacity(SEMANTIC_WIDTH);
    for t in windowed_tokens(resume) {
        match t {
            Some(t) => f.extend(artifacts.embeddings.embed(&t)),
            None => f.extend(std::iter::repeat_n(0.0, EMBEDDING_DIM)),
        }
    }
    for t in personal_tokens(resume) {
        f.extend(artifacts.embeddings.embed(&t));
    }
    f
}

pub fn featurize(resume: &Resume, artifacts: &FeatureArtifacts) -> Result<FeatureVector> {
    artifacts.validate()?;
    let mut values = manual_features(resume, &artifacts.dictionaries, artifacts.reference_date);
    values.extend(cluster_features(resume, artifacts)?);
    values.extend(semantic_features(resume, artifacts));
    if values.len() != FEATURE_WIDTH {
        return Err(Error::Shape {
            expected: FEATURE_WIDTH,
            found: values.len(),
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Training(format!(
            "resume {}: non-finite feature at slot {i}",
            resume.id
        )));
    }
    Ok(FeatureVector {
        values,
        layout_version: LAYOUT_VERSION,
    })
}

/// Feature rows with their resume ids and target labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub layout_version: u32,
    pub ids: Vec<String>,
    pub labels: Vec<TargetLabels>,
    pub matrix: Matrix,
}

impl FeatureMatrix {
    pub fn build(corpus: &Corpus, artifacts: &FeatureArtifacts) -> Result<FeatureMatrix> {
        use rayon::prelude::*;
        let rows: Vec<FeatureVector> = corpus
            .resumes
            .par_iter()
            .map(|r| featurize(r, artifacts))
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(rows.len() * FEATURE_WIDTH);
        for r in &rows {
            data.extend_from_slice(&r.values);
        }
        Ok(FeatureMatrix {
            layout_version: LAYOUT_VERSION,
            ids: corpus.resumes.iter().map(|r| r.id.clone()).collect(),
            labels: corpus.targets()?,
            matrix: Matrix::new(rows.len(), FEATURE_WIDTH, data)?,
        })
    }

    pub fn row(&self, i: usize) -> FeatureVector {
        FeatureVector {
            values: self.matrix.row(i).to_vec(),
            layout_version: self.layout_version,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Header line, then `id<TAB>degree salary size position<TAB>v1 ... v547` per row.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "layout_version={} rows={} cols={} manual={MANUAL_WIDTH} cluster={CLUSTER_WIDTH} semantic={SEMANTIC_WIDTH}\n",
            self.layout_version,
            self.len(),
            self.matrix.cols
        );
        for (i, id) in self.ids.iter().enumerate() {
            let l = &self.labels[i];
            let _ = write!(out, "{id}\t{} {} {} {}\t", l.degree, l.salary, l.size, l.position);
            let vals: Vec<String> = self.matrix.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<FeatureMatrix> {
        let bad = |msg: String| Error::Artifact {
            stage: "featurize".into(),
            message: msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty feature file".into()))?;
        let fields: HashMap<&str, &str> = header.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
        let num = |k: &str| -> Result<usize> {
            fields
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("header lacks {k}")))
        };
        let layout_version = num("layout_version")? as u32;
        if layout_version != LAYOUT_VERSION {
            return Err(Error::config(format!(
                "feature layout version {layout_version}, this build reads {LAYOUT_VERSION}"
            )));
        }
        let (rows, cols) = (num("rows")?, num("cols")?);
        let mut ids = Vec::with_capacity(rows);
        let mut labels = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * cols);
        for (n, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(bad(format!("row {n}: expected 3 tab-separated fields")));
            }
            let l: Vec<usize> = parts[1]
                .split(' ')
                .map(|x| x.parse().map_err(|_| bad(format!("row {n}: bad label"))))
                .collect::<Result<_>>()?;
            if l.len() != 4 {
                return Err(bad(format!("row {n}: expected 4 labels")));
            }
            ids.push(parts[0].to_string());
            labels.push(TargetLabels {
                degree: l[0],
                salary: l[1],
                size: l[2],
                position: l[3],
            });
            let before = data.len();
            for v in parts[2].split(' ') {
                data.push(v.parse::<f64>().map_err(|_| bad(format!("row {n}: bad value {v:?}")))?);
            }
            if data.len() - before != cols {
                return Err(bad(format!("row {n}: expected {cols} values")));
            }
        }
        if ids.len() != rows {
            return Err(bad(format!("header says {rows} rows, found {}", ids.len())));
        }
        Ok(FeatureMatrix {
            layout_version,
            ids,
            labels,
            matrix: Matrix::new(rows, cols, data)?,
        })
    }
}
