//! Resume records, corpus construction and train/test splitting.
//!
//! Input records are single-line JSON objects using the job-board field names
//! (`id`, `major`, `degree`, `gender`, `age`, `workExperienceList`). Each
//! experience carries `size`, `salary`, `start_date`, `end_date`, `industry`,
//! `position_name`, `department` and `type`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Token used for missing or empty phrase fields.
pub const EMPTY_PHRASE: &str = "<empty>";

/// Markers accepted for an open-ended (current) end date.
const PRESENT_MARKERS: &[&str] = &["今", "至今", "present", "now"];

pub const DEGREE_CLASSES: usize = 3;
pub const SALARY_CLASSES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    /// Months since year 0.
    pub fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_index(index: i64) -> Self {
        Self {
            year: index.div_euclid(12) as i32,
            month: index.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn months_until(self, later: YearMonth) -> i64 {
        later.index() - self.index()
    }

    /// Accepts `2014-8`, `2014-08`, `2014/8`, `2014.8` and a trailing day (`2014-08-01`).
    pub fn parse(text: &str) -> Option<Self> {
        let mut parts = text.trim().split(['-', '/', '.']).filter(|p| !p.is_empty());
        let year: i32 = parts.next()?.trim().parse().ok()?;
        let month: u32 = parts.next()?.trim().parse().ok()?;
        if let Some(day) = parts.next() {
            day.trim().parse::<u32>().ok()?;
        }
        if parts.next().is_some() || !(1000..=9999).contains(&year) {
            return None;
        }
        Self::new(year, month)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.year, self.month)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EndDate {
    Present,
    Month(YearMonth),
}

impl EndDate {
    pub fn resolve(self, reference: YearMonth) -> YearMonth {
        match self {
            EndDate::Present => reference,
            EndDate::Month(m) => m,
        }
    }

    fn parse(text: &str) -> Option<Self> {
        let t = text.trim();
        if PRESENT_MARKERS.iter().any(|m| t.eq_ignore_ascii_case(m)) {
            return Some(EndDate::Present);
        }
        YearMonth::parse(t).map(EndDate::Month)
    }
}

impl fmt::Display for EndDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndDate::Present => f.write_str("今"),
            EndDate::Month(m) => m.fmt(f),
        }
    }
}

/// Whole quarters between two months, never less than one.
pub fn quarters_between(start: YearMonth, end: YearMonth) -> u32 {
    (start.months_until(end).max(0) / 3).max(1) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkExperience {
    pub position_name: String,
    pub department: String,
    pub industry: String,
    pub salary: u8,
    pub size: u32,
    pub experience_type: String,
    pub start_date: YearMonth,
    pub end_date: EndDate,
    pub quarter_count: u32,
}

impl WorkExperience {
    fn to_json(&self) -> Value {
        json!({
            "size": self.size,
            "salary": self.salary,
            "end_date": self.end_date.to_string(),
            "start_date": self.start_date.to_string(),
            "industry": phrase_out(&self.industry),
            "position_name": phrase_out(&self.position_name),
            "department": phrase_out(&self.department),
            "type": phrase_out(&self.experience_type),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resume {
    pub id: String,
    pub major: String,
    pub degree: u8,
    pub gender: String,
    pub age: u32,
    /// Chronological; the last entry is the current job.
    pub experiences: Vec<WorkExperience>,
}

impl Resume {
    pub fn last_experience(&self) -> &WorkExperience {
        self.experiences
            .last()
            .expect("cleaned resumes have at least one experience")
    }

    /// Every experience except the current one, chronological.
    pub fn history(&self) -> &[WorkExperience] {
        &self.experiences[..self.experiences.len().saturating_sub(1)]
    }

    pub fn to_json(&self) -> Value {
        json!({
            "id": self.id,
            "major": phrase_out(&self.major),
            "degree": self.degree,
            "gender": phrase_out(&self.gender),
            "age": self.age,
            "workExperienceList": self.experiences.iter().map(WorkExperience::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn to_json_line(&self) -> String {
        self.to_json().to_string()
    }
}

fn phrase_out(p: &str) -> &str {
    if p == EMPTY_PHRASE {
        ""
    } else {
        p
    }
}

fn parse_error(text: &str, err: &serde_json::Error) -> Error {
    // serde_json reports 1-based line/column; convert to a byte offset.
    let line = err.line().max(1);
    let offset: usize =
        text.split_inclusive('\n').take(line - 1).map(str::len).sum::<usize>() + err.column().saturating_sub(1);
    Error::Parse {
        offset: offset.min(text.len()),
        message: err.to_string(),
    }
}

fn phrase_field(obj: &Map<String, Value>, key: &str) -> String {
    let raw = match obj.get(key) {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    };
    // Tabs and newlines would break the line-oriented artifact formats.
    let cleaned: String = raw.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
    if cleaned.is_empty() {
        EMPTY_PHRASE.to_string()
    } else {
        cleaned
    }
}

fn int_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<i64> {
    let field = || format!("{path}{key}");
    match obj.get(key) {
        Some(Value::Number(n)) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
            .ok_or_else(|| Error::schema(field(), "expected an integer")),
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map_err(|_| Error::schema(field(), format!("expected an integer, got {s:?}"))),
        Some(_) => Err(Error::schema(field(), "expected an integer")),
        None => Err(Error::schema(field(), "missing")),
    }
}

fn date_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::schema(format!("{path}{key}"), "expected a date string")),
        None => Err(Error::schema(format!("{path}{key}"), "missing")),
    }
}

fn parse_experience(value: &Value, index: usize, reference: YearMonth) -> Result<WorkExperience> {
    let path = format!("workExperienceList[{index}].");
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema(format!("workExperienceList[{index}]"), "expected an object"))?;
    let salary = int_field(obj, "salary", &path)?;
    if !(0..SALARY_CLASSES as i64).contains(&salary) {
        return Err(Error::schema(
            format!("{path}salary"),
            format!("{salary} outside [0,6]"),
        ));
    }
    let size = int_field(obj, "size", &path)?;
    if size < 0 {
        return Err(Error::schema(format!("{path}size"), "negative company size"));
    }
    let start_raw = date_field(obj, "start_date", &path)?;
    let start_date = YearMonth::parse(&start_raw)
        .ok_or_else(|| Error::schema(format!("{path}start_date"), format!("bad date {start_raw:?}")))?;
    let end_date = match obj.get("end_date") {
        None | Some(Value::Null) => EndDate::Present,
        Some(_) => {
            let raw = date_field(obj, "end_date", &path)?;
            if raw.trim().is_empty() {
                EndDate::Present
            } else {
                EndDate::parse(&raw)
                    .ok_or_else(|| Error::schema(format!("{path}end_date"), format!("bad date {raw:?}")))?
            }
        }
    };
    if let EndDate::Month(end) = end_date {
        if end < start_date {
            return Err(Error::schema(
                format!("{path}end_date"),
                format!("{end} precedes start {start_date}"),
            ));
        }
    }
    Ok(WorkExperience {
        position_name: phrase_field(obj, "position_name"),
        department: phrase_field(obj, "department"),
        industry: phrase_field(obj, "industry"),
        salary: salary as u8,
        size: size as u32,
        experience_type: phrase_field(obj, "type"),
        start_date,
        end_date,
        quarter_count: quarters_between(start_date, end_date.resolve(reference)),
    })
}

/// Parses one serialized resume. Open-ended end dates resolve against `reference`.
///
/// Experiences are reordered chronologically (by start, then end) because
/// source listings are not reliably ordered.
pub fn parse_resume(json_text: &str, reference: YearMonth) -> Result<Resume> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| parse_error(json_text, &e))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema("<root>", "expected an object"))?;

    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(Error::schema("id", "expected a non-empty string")),
        None => return Err(Error::schema("id", "missing")),
    };
    let list = match obj.get("workExperienceList") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(Error::schema("workExperienceList", "expected an array")),
        None => return Err(Error::schema("workExperienceList", "missing")),
    };
    if list.is_empty() {
        return Err(Error::schema("workExperienceList", "empty"));
    }
    let degree = int_field(obj, "degree", "")?;
    if !(0..DEGREE_CLASSES as i64).contains(&degree) {
        return Err(Error::schema("degree", format!("{degree} outside [0,2]")));
    }
    let age = int_field(obj, "age", "")?;
    if age <= 0 {
        return Err(Error::schema("age", format!("{age} is not positive")));
    }
    let mut experiences = list
        .iter()
        .enumerate()
        .map(|(i, v)| parse_experience(v, i, reference))
        .collect::<Result<Vec<_>>>()?;
    experiences.sort_by_key(|e| {
        let end = match e.end_date {
            EndDate::Month(m) => (0, m),
            EndDate::Present => (1, e.start_date),
        };
        (e.start_date, end)
    });

    Ok(Resume {
        id,
        major: phrase_field(obj, "major"),
        degree: degree as u8,
        gender: phrase_field(obj, "gender"),
        age: age as u32,
        experiences,
    })
}

/// Latest closed date (start or end) across records; the default resolution
/// for open-ended end dates. Unparseable lines are skipped.
pub fn scan_reference_date<'a>(lines: impl IntoIterator<Item = &'a str>) -> Option<YearMonth> {
    let mut best: Option<YearMonth> = None;
    for line in lines {
        let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(line) else {
            continue;
        };
        let Some(Value::Array(list)) = obj.get("workExperienceList") else {
            continue;
        };
        for exp in list {
            for key in ["start_date", "end_date"] {
                if let Some(m) = exp.get(key).and_then(Value::as_str).and_then(YearMonth::parse) {
                    best = Some(best.map_or(m, |b| b.max(m)));
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    Degree,
    Salary,
    Size,
    Position,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Degree, Task::Salary, Task::Size, Task::Position];

    pub fn name(self) -> &'static str {
        match self {
            Task::Degree => "degree",
            Task::Salary => "salary",
            Task::Size => "size",
            Task::Position => "position",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetLabels {
    pub degree: usize,
    pub salary: usize,
    pub size: usize,
    pub position: usize,
}

impl TargetLabels {
    pub fn get(&self, task: Task) -> usize {
        match task {
            Task::Degree => self.degree,
            Task::Salary => self.salary,
            Task::Size => self.size,
            Task::Position => self.position,
        }
    }
}

/// Label dictionaries frozen when the corpus is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMaps {
    /// Company-size bands observed in the data, ascending; class id = index.
    pub size_bands: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub test_fraction: f64,
    /// Parallel to `Corpus::resumes`.
    pub is_test: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub resumes: Vec<Resume>,
    pub position_vocab: Vec<String>,
    pub class_maps: ClassMaps,
    pub reference_date: YearMonth,
    pub split: Option<SplitAssignment>,
}

/// The `top_k` most frequent last-experience positions; ties broken lexicographically.
pub fn top_positions(resumes: &[Resume], top_k: usize) -> Result<Vec<String>> {
    if top_k == 0 {
        return Err(Error::config("top_k must be at least 1"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in resumes {
        let p = r.last_experience().position_name.as_str();
        if p != EMPTY_PHRASE {
            *counts.entry(p).or_default() += 1;
        }
    }
    if counts.len() < top_k {
        return Err(Error::config(format!(
            "only {} distinct last positions, top_k = {top_k}",
            counts.len()
        )));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(top_k).map(|(p, _)| p.to_string()).collect())
}

pub fn build_corpus(resumes: Vec<Resume>, top_k: usize, reference_date: YearMonth) -> Result<Corpus> {
    let position_vocab = top_positions(&resumes, top_k)?;
    let keep: BTreeSet<&str> = position_vocab.iter().map(String::as_str).collect();
    let resumes: Vec<Resume> = resumes
        .into_iter()
        .filter(|r| keep.contains(r.last_experience().position_name.as_str()))
        .collect();
    let size_bands: Vec<u32> = resumes
        .iter()
        .map(|r| r.last_experience().size)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(Corpus {
        resumes,
        position_vocab,
        class_maps: ClassMaps { size_bands },
        reference_date,
        split: None,
    })
}

impl Corpus {
    pub fn n_classes(&self, task: Task) -> usize {
        match task {
            Task::Degree => DEGREE_CLASSES,
            Task::Salary => SALARY_CLASSES,
            Task::Size => self.class_maps.size_bands.len(),
            Task::Position => self.position_vocab.len(),
        }
    }

    pub fn position_id(&self, position: &str) -> Option<usize> {
        self.position_vocab.iter().position(|p| p == position)
    }

    /// Human-readable name of a class id.
    pub fn class_name(&self, task: Task, class: usize) -> String {
        match task {
            Task::Position => self.position_vocab.get(class).cloned().unwrap_or_default(),
            Task::Size => self
                .class_maps
                .size_bands
                .get(class)
                .map(|b| format!("size_{b}"))
                .unwrap_or_default(),
            Task::Salary => format!("salary_{class}"),
            Task::Degree => format!("degree_{class}"),
        }
    }

    /// Targets come from the degree field and the current (last) experience.
    pub fn extract_targets(&self, resume: &Resume) -> Result<TargetLabels> {
        let last = resume
            .experiences
            .last()
            .ok_or_else(|| Error::Label(format!("resume {} has no experiences", resume.id)))?;
        let position = self.position_id(&last.position_name).ok_or_else(|| {
            Error::Label(format!(
                "resume {}: position {:?} not in vocabulary",
                resume.id, last.position_name
            ))
        })?;
        let size = self
            .class_maps
            .size_bands
            .binary_search(&last.size)
            .map_err(|_| Error::Label(format!("resume {}: size band {} unseen", resume.id, last.size)))?;
        Ok(TargetLabels {
            degree: resume.degree as usize,
            salary: last.salary as usize,
            size,
            position,
        })
    }

    pub fn targets(&self) -> Result<Vec<TargetLabels>> {
        self.resumes.iter().map(|r| self.extract_targets(r)).collect()
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> Corpus {
        Corpus {
            resumes: self
                .resumes
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, r)| r.clone())
                .collect(),
            position_vocab: self.position_vocab.clone(),
            class_maps: self.class_maps.clone(),
            reference_date: self.reference_date,
            split: None,
        }
    }

    /// Train/test halves according to the stored split assignment.
    pub fn partitions(&self) -> Result<(Corpus, Corpus)> {
        let split = self
            .split
            .as_ref()
            .ok_or_else(|| Error::config("corpus has no split assignment"))?;
        Ok((self.subset(|i| !split.is_test[i]), self.subset(|i| split.is_test[i])))
    }
}

/// Stratified assignment by position class.
///
/// Per class the test count is the floor of `n_c * fraction`; the remaining
/// test slots up to `round(n * fraction)` go to the largest fractional parts
/// (lower class id first). Classes with fewer than two members stay in train.
pub fn assign_split(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::argument(format!("test_fraction {test_fraction} outside (0,1)")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in corpus.resumes.iter().enumerate() {
        by_class.entry(corpus.extract_targets(r)?.position).or_default().push(i);
    }
    let mut quota: BTreeMap<usize, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    let mut eligible_total = 0usize;
    for (&class, members) in &by_class {
        if members.len() < 2 {
            log::warn!(
                "position class {class} has {} member(s); kept entirely in train",
                members.len()
            );
            quota.insert(class, 0);
            continue;
        }
        eligible_total += members.len();
        let exact = members.len() as f64 * test_fraction;
        let base = (exact.floor() as usize).min(members.len() - 1);
        quota.insert(class, base);
        if base + 1 < members.len() {
            remainders.push((exact - exact.floor(), class));
        }
    }
    let target = (eligible_total as f64 * test_fraction).round() as usize;
    let assigned: usize = quota.values().sum();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, class) in remainders.into_iter().take(target.saturating_sub(assigned)) {
        *quota.get_mut(&class).unwrap() += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; corpus.resumes.len()];
    for (class, members) in &by_class {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        for &i in members.iter().take(quota[class]) {
            is_test[i] = true;
        }
    }
    Ok(SplitAssignment {
        seed,
        test_fraction,
        is_test,
    })
}

/// Deterministic stratified split; both halves share the parent's vocabularies.
pub fn split(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    let assignment = assign_split(corpus, test_fraction, seed)?;
    let tagged = Corpus {
        split: Some(assignment),
        ..corpus.clone()
    };
    tagged.partitions()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = r#"{"id":"558d761","major":"通信工程","degree":1,"_id":{"$oid":"x"},"gender":"男","age":31,
        "workExperienceList":[
          {"size":3,"salary":4,"end_date":"今","start_date":"2014-8","industry":"计算机/互联网","position_name":"软件测试","department":"硬件测试","type":null},
          {"size":2,"salary":3,"end_date":"2014-7","start_date":"2012-3","industry":"计算机/互联网","position_name":"测试工程师","department":"测试部","type":""},
          {"size":2,"salary":2,"end_date":"2012-2","start_date":"2010-7","industry":"通信/电信","position_name":"技术支持","department":"","type":""}
        ]}"#;

    fn reference() -> YearMonth {
        YearMonth::new(2016, 6).unwrap()
    }

    /// Counts month boundaries one step at a time.
    fn quarter_oracle(start: YearMonth, end: YearMonth) -> u32 {
        let mut months = 0;
        let mut cur = start;
        while cur < end {
            cur = if cur.month == 12 {
                YearMonth::new(cur.year + 1, 1).unwrap()
            } else {
                YearMonth::new(cur.year, cur.month + 1).unwrap()
            };
            months += 1;
        }
        (months / 3).max(1)
    }

    #[test]
    fn parses_table_one_record() {
        let r = parse_resume(TABLE1, reference()).unwrap();
        assert_eq!(r.degree, 1);
        assert_eq!(r.age, 31);
        assert_eq!(r.gender, "男");
        assert_eq!(r.experiences.len(), 3);
        let last = r.last_experience();
        assert_eq!((last.size, last.salary), (3, 4));
        assert_eq!(last.position_name, "软件测试");
        assert_eq!(last.department, "硬件测试");
        assert_eq!(last.experience_type, EMPTY_PHRASE);
        assert_eq!(last.end_date, EndDate::Present);
        // chronological order restored
        assert_eq!(r.experiences[0].position_name, "技术支持");
        assert_eq!(r.experiences[0].department, EMPTY_PHRASE);
    }

    #[test]
    fn quarter_count_matches_calendar_oracle() {
        let s = YearMonth::new(2014, 8).unwrap();
        let e = YearMonth::new(2015, 8).unwrap();
        assert_eq!(quarters_between(s, e), 4);
        assert_eq!(quarter_oracle(s, e), 4);
        for sy in 2010..2013 {
            for sm in 1..=12 {
                for len in 0..40 {
                    let start = YearMonth::new(sy, sm).unwrap();
                    let end = YearMonth::from_index(start.index() + len);
                    assert_eq!(quarters_between(start, end), quarter_oracle(start, end));
                }
            }
        }
    }

    #[test]
    fn empty_experience_list_is_schema_error() {
        let err = parse_resume(r#"{"id":"a","degree":1,"age":3,"workExperienceList":[]}"#, reference()).unwrap_err();
        assert!(matches!(err, Error::Schema { ref field, .. } if field == "workExperienceList"));
    }

    #[test]
    fn missing_id_is_schema_error() {
        let err = parse_resume(r#"{"degree":1,"age":3,"workExperienceList":[]}"#, reference()).unwrap_err();
        assert!(matches!(err, Error::Schema { ref field, .. } if field == "id"));
    }

    #[test]
    fn malformed_json_reports_offset() {
        let text = "{\"id\": \"a\",\n \"degree\": ]}";
        match parse_resume(text, reference()).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(&text[offset..offset + 1], "]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_inverted_dates() {
        let text = r#"{"id":"a","degree":1,"age":30,"workExperienceList":[
            {"size":1,"salary":1,"start_date":"2015-3","end_date":"2014-1","position_name":"x"}]}"#;
        assert!(matches!(parse_resume(text, reference()), Err(Error::Schema { .. })));
    }

    #[test]
    fn parses_date_variants() {
        assert_eq!(YearMonth::parse("2014-08"), YearMonth::new(2014, 8));
        assert_eq!(YearMonth::parse("2014/8"), YearMonth::new(2014, 8));
        assert_eq!(YearMonth::parse("2014.8.01"), YearMonth::new(2014, 8));
        assert_eq!(YearMonth::parse("2014-13"), None);
        assert_eq!(YearMonth::parse("今"), None);
        assert_eq!(EndDate::parse("至今"), Some(EndDate::Present));
    }

    #[test]
    fn reference_scan_takes_latest_closed_date() {
        let lines = [TABLE1.replace('\n', " ")];
        assert_eq!(
            scan_reference_date(lines.iter().map(String::as_str)),
            YearMonth::new(2014, 8)
        );
    }

    fn resume_with_last(id: usize, position: &str) -> Resume {
        let start = YearMonth::new(2015, 1).unwrap();
        Resume {
            id: format!("r{id}"),
            major: "m".into(),
            degree: (id % 3) as u8,
            gender: "男".into(),
            age: 30,
            experiences: vec![WorkExperience {
                position_name: position.into(),
                department: EMPTY_PHRASE.into(),
                industry: "i".into(),
                salary: (id % 7) as u8,
                size: (id % 4) as u32,
                experience_type: EMPTY_PHRASE.into(),
                start_date: start,
                end_date: EndDate::Present,
                quarter_count: 2,
            }],
        }
    }

    #[test]
    fn build_corpus_keeps_brute_force_top_positions() {
        // position p_j appears (j % 9) + 1 times
        let mut resumes = Vec::new();
        let mut id = 0;
        for j in 0..40 {
            for _ in 0..(j % 9) + 1 {
                resumes.push(resume_with_last(id, &format!("p{j:02}")));
                id += 1;
            }
        }
        let corpus = build_corpus(resumes.clone(), 32, reference()).unwrap();

        // oracle: rank by (count desc, name asc) exhaustively
        let mut names: Vec<String> = (0..40).map(|j| format!("p{j:02}")).collect();
        let count = |n: &String| {
            resumes
                .iter()
                .filter(|r| &r.last_experience().position_name == n)
                .count()
        };
        names.sort_by(|a, b| count(b).cmp(&count(a)).then(a.cmp(b)));
        let top: BTreeSet<String> = names.into_iter().take(32).collect();
        let expected: Vec<&Resume> = resumes
            .iter()
            .filter(|r| top.contains(&r.last_experience().position_name))
            .collect();
        assert_eq!(corpus.resumes.len(), expected.len());
        assert!(corpus.resumes.iter().zip(expected).all(|(a, b)| a == b));
        assert_eq!(corpus.position_vocab.len(), 32);
    }

    #[test]
    fn single_position_top_one_keeps_all() {
        let resumes: Vec<Resume> = (0..10).map(|i| resume_with_last(i, "only")).collect();
        let corpus = build_corpus(resumes, 1, reference()).unwrap();
        assert_eq!(corpus.resumes.len(), 10);
    }

    #[test]
    fn too_few_positions_is_config_error() {
        let resumes: Vec<Resume> = (0..10).map(|i| resume_with_last(i, "only")).collect();
        assert!(matches!(build_corpus(resumes, 2, reference()), Err(Error::Config(_))));
    }

    #[test]
    fn targets_agree_with_field_lookup() {
        let resumes: Vec<Resume> = (0..60).map(|i| resume_with_last(i, &format!("p{}", i % 5))).collect();
        let corpus = build_corpus(resumes, 5, reference()).unwrap();
        for r in &corpus.resumes {
            let t = corpus.extract_targets(r).unwrap();
            let last = r.experiences.last().unwrap();
            assert_eq!(t.degree, r.degree as usize);
            assert_eq!(t.salary, last.salary as usize);
            assert_eq!(corpus.class_maps.size_bands[t.size], last.size);
            assert_eq!(corpus.position_vocab[t.position], last.position_name);
        }
    }

    #[test]
    fn unknown_position_is_label_error() {
        let resumes: Vec<Resume> = (0..4).map(|i| resume_with_last(i, "a")).collect();
        let corpus = build_corpus(resumes, 1, reference()).unwrap();
        let stranger = resume_with_last(99, "b");
        assert!(matches!(corpus.extract_targets(&stranger), Err(Error::Label(_))));
    }

    #[test]
    fn stratified_split_counts() {
        let resumes: Vec<Resume> = (0..100).map(|i| resume_with_last(i, &format!("p{}", i % 4))).collect();
        let corpus = build_corpus(resumes, 4, reference()).unwrap();
        let (train, test) = split(&corpus, 0.2, 7).unwrap();
        assert_eq!((train.resumes.len(), test.resumes.len()), (80, 20));
        for class in 0..4 {
            let n_c = corpus.targets().unwrap().iter().filter(|t| t.position == class).count();
            let t_c = test.targets().unwrap().iter().filter(|t| t.position == class).count();
            assert!((t_c as f64 - n_c as f64 * 0.2).abs() <= 1.0);
        }
        let train_ids: BTreeSet<&str> = train.resumes.iter().map(|r| r.id.as_str()).collect();
        assert!(test.resumes.iter().all(|r| !train_ids.contains(r.id.as_str())));
        assert_eq!(split(&corpus, 0.2, 7).unwrap(), (train, test));
    }

    #[test]
    fn split_two_members_half() {
        let resumes: Vec<Resume> = (0..2).map(|i| resume_with_last(i, "a")).collect();
        let corpus = build_corpus(resumes, 1, reference()).unwrap();
        let (train, test) = split(&corpus, 0.5, 3).unwrap();
        assert_eq!((train.resumes.len(), test.resumes.len()), (1, 1));
    }

    #[test]
    fn singleton_class_stays_in_train() {
        let mut resumes: Vec<Resume> = (0..10).map(|i| resume_with_last(i, "a")).collect();
        resumes.push(resume_with_last(10, "b"));
        let corpus = build_corpus(resumes, 2, reference()).unwrap();
        let (_, test) = split(&corpus, 0.3, 1).unwrap();
        assert!(test.resumes.iter().all(|r| r.last_experience().position_name == "a"));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let resumes: Vec<Resume> = (0..4).map(|i| resume_with_last(i, "a")).collect();
        let corpus = build_corpus(resumes, 1, reference()).unwrap();
        assert!(split(&corpus, 1.0, 1).is_err());
        assert!(split(&corpus, 0.0, 1).is_err());
    }
}
