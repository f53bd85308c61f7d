//! Planted-signal synthetic resume generator.
//!
//! Every resume follows one career track. Within a track, jobs climb a
//! five-rung ladder of positions; salary follows the rung, company size
//! follows the track. With probability `signal` an experience (including the
//! current one) obeys the track, otherwise it is drawn at random. The current
//! position is therefore predictable from the history to a degree set by
//! `signal`.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{quarters_between, EndDate, Resume, WorkExperience, YearMonth, EMPTY_PHRASE};

struct Track {
    weight: f64,
    industries: &'static [&'static str],
    departments: &'static [&'static str],
    majors: &'static [&'static str],
    ladder: [&'static str; 5],
    salary_offset: i32,
    size_base: i32,
    degree_weights: [f64; 3],
}

const TRACKS: &[Track] = &[
    Track {
        weight: 3.0,
        industries: &["计算机/互联网", "计算机软件", "通信/电信"],
        departments: &["研发部", "技术部", "软件开发部", "测试部"],
        majors: &["计算机科学与技术", "软件工程", "通信工程"],
        ladder: ["软件测试", "开发工程师", "软件工程师", "高级软件工程师", "技术经理"],
        salary_offset: 1,
        size_base: 3,
        degree_weights: [0.15, 0.55, 0.30],
    },
    Track {
        weight: 2.5,
        industries: &["快速消费品", "贸易/进出口", "汽车/摩托车"],
        departments: &["销售部", "市场部", "渠道部"],
        majors: &["市场营销", "国际经济/贸易", "电子商务"],
        ladder: ["销售代表", "销售专员", "客户经理", "销售主管", "销售经理"],
        salary_offset: 0,
        size_base: 2,
        degree_weights: [0.45, 0.45, 0.10],
    },
    Track {
        weight: 2.0,
        industries: &["金融/投资/证券", "会计/审计", "银行"],
        departments: &["财务部", "审计部", "结算中心"],
        majors: &["会计学", "金融学", "财务管理"],
        ladder: ["出纳", "会计", "财务专员", "财务主管", "财务经理"],
        salary_offset: 0,
        size_base: 4,
        degree_weights: [0.25, 0.55, 0.20],
    },
    Track {
        weight: 1.5,
        industries: &["专业服务/咨询", "房地产", "教育/培训"],
        departments: &["行政部", "人力资源部", "综合办公室"],
        majors: &["人力资源管理", "行政管理", "汉语言文学"],
        ladder: ["行政助理", "文员", "人事专员", "人事主管", "行政经理"],
        salary_offset: -1,
        size_base: 2,
        degree_weights: [0.40, 0.50, 0.10],
    },
    Track {
        weight: 1.5,
        industries: &["零售/批发", "餐饮业", "酒店/旅游"],
        departments: &["门店", "运营部", "前厅部"],
        majors: &["工商管理", "旅游管理", "英语"],
        ladder: ["收银员", "营业员", "店长助理", "店长", "区域经理"],
        salary_offset: -1,
        size_base: 1,
        degree_weights: [0.70, 0.27, 0.03],
    },
    Track {
        weight: 1.5,
        industries: &["机械/设备/重工", "电子技术/半导体", "汽车零配件"],
        departments: &["生产部", "品质部", "设备部"],
        majors: &["机械设计制造及其自动化", "电气工程及其自动化", "材料科学"],
        ladder: ["操作工", "技术员", "质检员", "生产主管", "生产经理"],
        salary_offset: -1,
        size_base: 3,
        degree_weights: [0.60, 0.35, 0.05],
    },
    Track {
        weight: 1.0,
        industries: &["广告", "互联网/电子商务", "媒体/出版"],
        departments: &["设计部", "创意部", "品牌部"],
        majors: &["艺术设计", "广告学", "视觉传达"],
        ladder: ["美工", "平面设计师", "UI设计师", "设计主管", "设计总监"],
        salary_offset: 0,
        size_base: 1,
        degree_weights: [0.35, 0.55, 0.10],
    },
    Track {
        weight: 1.2,
        industries: &["建筑/建材/工程", "房地产开发", "环保"],
        departments: &["工程部", "项目部", "技术质量部"],
        majors: &["土木工程", "建筑学", "建筑环境与设备工程"],
        ladder: ["施工员", "工程师", "项目专员", "项目经理", "工程经理"],
        salary_offset: 1,
        size_base: 3,
        degree_weights: [0.30, 0.55, 0.15],
    },
];

const RARE_POSITIONS: &[&str] = &[
    "司机",
    "保安",
    "厨师",
    "翻译",
    "教师",
    "客服专员",
    "采购员",
    "仓库管理员",
    "物流专员",
    "导购",
    "前台",
    "编辑",
    "律师助理",
    "护士",
    "电工",
];

const TYPES: &[&str] = &["全职", "兼职", "实习"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Probability that an experience follows its career track.
    pub signal: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            seed: 1,
            signal: 0.8,
        }
    }
}

/// Month against which open-ended jobs are dated.
pub fn synth_reference_date() -> YearMonth {
    YearMonth::new(2016, 6).unwrap()
}

fn pick_track(rng: &mut ChaCha8Rng) -> &'static Track {
    let total: f64 = TRACKS.iter().map(|t| t.weight).sum();
    let mut u = rng.random::<f64>() * total;
    for t in TRACKS {
        if u < t.weight {
            return t;
        }
        u -= t.weight;
    }
    TRACKS.last().unwrap()
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn random_position(rng: &mut ChaCha8Rng) -> &'static str {
    if rng.random_bool(0.25) {
        RARE_POSITIONS.choose(rng).unwrap()
    } else {
        TRACKS.choose(rng).unwrap().ladder.choose(rng).unwrap()
    }
}

struct Job {
    position: &'static str,
    department: &'static str,
    industry: &'static str,
    salary: u8,
    size: u32,
    kind: &'static str,
    quarters: u32,
}

fn make_job(rng: &mut ChaCha8Rng, track: &Track, level: usize, signal: f64, current: bool) -> Job {
    let follows = rng.random_bool(signal);
    let (position, industry, department) = if follows {
        (
            track.ladder[level],
            *track.industries.choose(rng).unwrap(),
            *track.departments.choose(rng).unwrap(),
        )
    } else {
        let other = TRACKS.choose(rng).unwrap();
        let position = if current && rng.random_bool(0.3) {
            RARE_POSITIONS.choose(rng).unwrap()
        } else {
            random_position(rng)
        };
        (
            position,
            *other.industries.choose(rng).unwrap(),
            *other.departments.choose(rng).unwrap(),
        )
    };
    let salary = (level as i32 + track.salary_offset + rng.random_range(-1..=1)).clamp(0, 6) as u8;
    let size = if rng.random_bool(0.8) {
        (track.size_base + rng.random_range(-1..=1)).clamp(0, 5) as u32
    } else {
        rng.random_range(0..=5)
    };
    let department = if rng.random_bool(0.1) { "" } else { department };
    let kind = if rng.random_bool(0.1) {
        *TYPES.choose(rng).unwrap()
    } else {
        ""
    };
    Job {
        position,
        department,
        industry,
        salary,
        size,
        kind,
        quarters: rng.random_range(1..=16),
    }
}

fn phrase_in(p: &str) -> String {
    if p.is_empty() {
        EMPTY_PHRASE.to_string()
    } else {
        p.to_string()
    }
}

fn generate_one(rng: &mut ChaCha8Rng, index: usize, cfg: &SynthConfig) -> Resume {
    let track = pick_track(rng);
    let age: u32 = rng.random_range(22..=45);
    let degree = pick_weighted(rng, &track.degree_weights) as u8;
    let major = if rng.random_bool(0.8) {
        track.majors.choose(rng).unwrap()
    } else {
        TRACKS.choose(rng).unwrap().majors.choose(rng).unwrap()
    };
    let gender = if rng.random_bool(0.5) { "男" } else { "女" };
    let n_jobs = [1usize, 2, 2, 3, 3, 3, 4, 4, 5, 6].choose(rng).copied().unwrap();

    let mut level = if rng.random_bool(0.6) { 0 } else { 1 };
    let mut jobs = Vec::with_capacity(n_jobs);
    for j in 0..n_jobs {
        if j > 0 {
            // long tenure usually means promotion
            let prev_quarters = jobs.last().map_or(0, |p: &Job| p.quarters);
            let p_up = if prev_quarters > 8 { 0.85 } else { 0.25 };
            if rng.random_bool(p_up) {
                level = (level + 1).min(4);
            }
        }
        jobs.push(make_job(rng, track, level, cfg.signal, j + 1 == n_jobs));
    }

    // Date the jobs backwards from the reference month.
    let reference = synth_reference_date();
    let mut cursor = reference.index()
        - if rng.random_bool(0.8) {
            0
        } else {
            rng.random_range(1..=6)
        };
    let mut dated = Vec::with_capacity(n_jobs);
    for (j, job) in jobs.iter().enumerate().rev() {
        let end = YearMonth::from_index(cursor);
        let start = YearMonth::from_index(cursor - 3 * job.quarters as i64 - rng.random_range(0..=2));
        let end_date = if j + 1 == n_jobs && end == reference {
            EndDate::Present
        } else {
            EndDate::Month(end)
        };
        dated.push(WorkExperience {
            position_name: phrase_in(job.position),
            department: phrase_in(job.department),
            industry: phrase_in(job.industry),
            salary: job.salary,
            size: job.size,
            experience_type: phrase_in(job.kind),
            start_date: start,
            end_date,
            quarter_count: quarters_between(start, end_date.resolve(reference)),
        });
        cursor = start.index() - rng.random_range(0..=3);
    }
    dated.reverse();

    Resume {
        id: format!("s{:x}-{index:06}", cfg.seed),
        major: major.to_string(),
        degree,
        gender: gender.to_string(),
        age,
        experiences: dated,
    }
}

pub fn generate(cfg: &SynthConfig) -> Vec<Resume> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n).map(|i| generate_one(&mut rng, i, cfg)).collect()
}

/// Newline-delimited JSON records, one resume per line.
pub fn generate_lines(cfg: &SynthConfig) -> String {
    let mut out = String::new();
    for r in generate(cfg) {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}
