use criterion::{criterion_group, criterion_main, Criterion};
use jobmatch_core::ensemble::{bagging_vote, ibagging, top_n};
use jobmatch_core::evaluation::recall_at_n;
use std::hint::black_box;

fn distributions(m: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    // cheap deterministic pseudo-random values; the numbers only need to vary
    let mut s = seed;
    (0..m)
        .map(|_| {
            let v: Vec<f64> = (0..k)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 11) as f64 / (1u64 << 53) as f64
                })
                .collect();
            let t: f64 = v.iter().sum();
            v.into_iter().map(|x| x / t).collect()
        })
        .collect()
}

fn ensemble(c: &mut Criterion) {
    let inputs = distributions(4, 32, 7);
    c.bench_function("ibagging_4x32", |b| b.iter(|| ibagging(black_box(&inputs)).unwrap()));
    c.bench_function("bagging_vote_4x32", |b| {
        b.iter(|| bagging_vote(black_box(&inputs)).unwrap())
    });
    let (_, combined) = ibagging(&inputs).unwrap();
    c.bench_function("top_4_of_32", |b| b.iter(|| top_n(black_box(&combined), 4).unwrap()));
    let ranked: Vec<Vec<usize>> = (0..1000)
        .map(|i| top_n(&distributions(1, 32, i)[0], 4).unwrap())
        .collect();
    let truth: Vec<usize> = (0..1000).map(|i| i % 32).collect();
    c.bench_function("recall_at_4_1000_items", |b| {
        b.iter(|| recall_at_n(black_box(&ranked), &truth, 4).unwrap())
    });
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
