//! Combining base classifiers: hard majority voting and probability-sum voting.

use crate::error::{Error, Result};
use crate::estimators::argmax;

fn check_inputs(inputs: &[Vec<f64>]) -> Result<usize> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::argument("ensemble needs at least one classifier"))?;
    let k = first.len();
    if k == 0 {
        return Err(Error::argument("probability vectors are empty"));
    }
    for v in inputs {
        if v.len() != k {
            return Err(Error::Shape {
                expected: k,
                found: v.len(),
            });
        }
    }
    Ok(k)
}

/// Majority vote of the classifiers' argmax decisions.
///
/// Ties between classes with equal vote counts go to the class with the
/// larger summed probability, then to the lower class id.
pub fn bagging_vote(inputs: &[Vec<f64>]) -> Result<usize> {
    let k = check_inputs(inputs)?;
    let mut votes = vec![0usize; k];
    let mut mass = vec![0.0; k];
    for v in inputs {
        votes[argmax(v)] += 1;
        for (m, p) in mass.iter_mut().zip(v) {
            *m += p;
        }
    }
    let mut best = 0;
    for c in 1..k {
        if votes[c] > votes[best] || (votes[c] == votes[best] && mass[c] > mass[best]) {
            best = c;
        }
    }
    Ok(best)
}

/// Probability-sum voting: the mean of the classifiers' distributions and its argmax.
pub fn ibagging(inputs: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let k = check_inputs(inputs)?;
    let m = inputs.len() as f64;
    // Each class sums its contributions in sorted order, which makes the
    // floating-point result independent of classifier order.
    let combined: Vec<f64> = (0..k)
        .map(|c| {
            let mut column: Vec<f64> = inputs.iter().map(|v| v[c]).collect();
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / m
        })
        .collect();
    Ok((argmax(&combined), combined))
}

/// The `n` most probable classes, most probable first; ties go to the lower class id.
pub fn top_n(combined: &[f64], n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > combined.len() {
        return Err(Error::argument(format!(
            "top_n needs 1 <= n <= {}, got {n}",
            combined.len()
        )));
    }
    let mut idx: Vec<usize> = (0..combined.len()).collect();
    idx.sort_by(|&a, &b| combined[b].total_cmp(&combined[a]).then(a.cmp(&b)));
    idx.truncate(n);
    Ok(idx)
}

/// Ranking for hard voting: classes ordered by vote count, then summed probability, then id.
pub fn bagging_ranking(inputs: &[Vec<f64>], n: usize) -> Result<Vec<usize>> {
    let k = check_inputs(inputs)?;
    if n == 0 || n > k {
        return Err(Error::argument(format!("ranking needs 1 <= n <= {k}, got {n}")));
    }
    let mut votes = vec![0usize; k];
    let mut mass = vec![0.0; k];
    for v in inputs {
        votes[argmax(v)] += 1;
        for (m, p) in mass.iter_mut().zip(v) {
            *m += p;
        }
    }
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| {
        votes[b]
            .cmp(&votes[a])
            .then(mass[b].total_cmp(&mass[a]))
            .then(a.cmp(&b))
    });
    idx.truncate(n);
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_hot_ish(c: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.1 / (k - 1) as f64; k];
        v[c] = 0.9;
        v
    }

    #[test]
    fn plain_majority() {
        let inputs = vec![one_hot_ish(2, 6), one_hot_ish(2, 6), one_hot_ish(5, 6)];
        assert_eq!(bagging_vote(&inputs).unwrap(), 2);
    }

    #[test]
    fn single_classifier_is_its_argmax() {
        let v = vec![0.1, 0.5, 0.4];
        assert_eq!(bagging_vote(std::slice::from_ref(&v)).unwrap(), 1);
        assert_eq!(ibagging(&[v]).unwrap().0, 1);
    }

    #[test]
    fn two_two_split_tie_table() {
        // (inputs, expected) worked by hand: votes tie 2-2, summed mass decides, then lower id
        let cases: Vec<(Vec<Vec<f64>>, usize)> = vec![
            // mass: class 0 = 0.6+0.7+0.3+0.2 = 1.8, class 1 = 2.2
            (vec![vec![0.6, 0.4], vec![0.7, 0.3], vec![0.3, 0.7], vec![0.2, 0.8]], 1),
            // mass: class 0 = 0.9+0.9+0.4+0.4 = 2.6, class 1 = 1.4
            (vec![vec![0.9, 0.1], vec![0.9, 0.1], vec![0.4, 0.6], vec![0.4, 0.6]], 0),
            // equal mass 2.0 each: lower id
            (
                vec![vec![0.75, 0.25], vec![0.75, 0.25], vec![0.25, 0.75], vec![0.25, 0.75]],
                0,
            ),
            // 3 classes, classes 1 and 2 tie on votes; class 0 has mass but no votes
            (
                vec![
                    vec![0.3, 0.4, 0.3],
                    vec![0.3, 0.5, 0.2],
                    vec![0.3, 0.1, 0.6],
                    vec![0.3, 0.2, 0.5],
                ],
                // mass 1: 1.2, mass 2: 1.6
                2,
            ),
        ];
        for (inputs, expected) in cases {
            assert_eq!(bagging_vote(&inputs).unwrap(), expected, "{inputs:?}");
        }
    }

    #[test]
    fn worked_probability_sum() {
        let (c, combined) = ibagging(&[vec![0.6, 0.4], vec![0.1, 0.9]]).unwrap();
        assert_eq!(c, 1);
        assert!((combined[0] - 0.35).abs() < 1e-15);
        assert!((combined[1] - 0.65).abs() < 1e-15);
        // hard voting ties 1-1 here and the tie rule also lands on class 1
        assert_eq!(bagging_vote(&[vec![0.6, 0.4], vec![0.1, 0.9]]).unwrap(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(bagging_vote(&[]), Err(Error::Argument(_))));
        assert!(matches!(
            ibagging(&[vec![0.5, 0.5], vec![1.0]]),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(top_n(&[0.5, 0.5], 3), Err(Error::Argument(_))));
        assert!(matches!(top_n(&[0.5, 0.5], 0), Err(Error::Argument(_))));
    }

    #[test]
    fn top_n_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let k = rng.random_range(3..12);
            // coarse values to force ties
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(0..4) as f64 / 4.0).collect();
            let mut pairs: Vec<(f64, usize)> = v.iter().copied().zip(0..).collect();
            // descending value, ascending id, via a stable sort on negated value
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let oracle: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            assert_eq!(top_n(&v, 3).unwrap(), oracle[..3]);
            assert_eq!(top_n(&v, k).unwrap(), oracle);
            assert_eq!(top_n(&v, 1).unwrap(), vec![argmax(&v)]);
        }
    }

    #[test]
    fn bagging_ranking_heads_with_vote_winner() {
        let inputs = vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.3, 0.6], vec![0.1, 0.6, 0.3]];
        let r = bagging_ranking(&inputs, 3).unwrap();
        assert_eq!(r[0], bagging_vote(&inputs).unwrap());
        assert_eq!(r, vec![1, 2, 0]);
    }
}
