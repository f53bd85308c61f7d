//! 1D convolution over the phrase axis, ReLU, then non-overlapping max-pooling.

use super::Architecture;

pub(super) fn param_count(a: &Architecture) -> usize {
    a.filters * a.kernel * a.channels + a.filters
}

pub(super) fn conv_len(a: &Architecture) -> usize {
    a.steps + 1 - a.kernel
}

pub(super) fn pooled_len(a: &Architecture) -> usize {
    conv_len(a) / a.pool
}

pub(super) fn output_width(a: &Architecture) -> usize {
    a.filters * pooled_len(a)
}

pub(super) struct Cache {
    /// Pre-activation conv outputs, `[filter][position]`.
    z: Vec<f64>,
    /// Position that won each pooling window, `[filter][pooled]`.
    winners: Vec<usize>,
}

/// `seq` is `steps x channels`, row-major. Writes the pooled map into `out`.
pub(super) fn forward(a: &Architecture, w: &[f64], seq: &[f64], out: &mut [f64]) -> Cache {
    let (f_n, k, c_n) = (a.filters, a.kernel, a.channels);
    let len = conv_len(a);
    let p_len = pooled_len(a);
    let (kw, bias) = w.split_at(f_n * k * c_n);
    let mut z = vec![0.0; f_n * len];
    for f in 0..f_n {
        let filt = &kw[f * k * c_n..(f + 1) * k * c_n];
        for t in 0..len {
            let window = &seq[t * c_n..(t + k) * c_n];
            z[f * len + t] = bias[f] + filt.iter().zip(window).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let mut winners = vec![0; f_n * p_len];
    for f in 0..f_n {
        for p in 0..p_len {
            let start = p * a.pool;
            let mut best = start;
            for t in start + 1..start + a.pool {
                if z[f * len + t] > z[f * len + best] {
                    best = t;
                }
            }
            winners[f * p_len + p] = best;
            out[f * p_len + p] = z[f * len + best].max(0.0);
        }
    }
    Cache { z, winners }
}

/// Accumulates parameter gradients given `d_out`, the gradient w.r.t. the pooled map.
pub(super) fn backward(a: &Architecture, seq: &[f64], cache: &Cache, d_out: &[f64], g: &mut [f64]) {
    let (f_n, k, c_n) = (a.filters, a.kernel, a.channels);
    let len = conv_len(a);
    let p_len = pooled_len(a);
    let (gk, gb) = g.split_at_mut(f_n * k * c_n);
    for f in 0..f_n {
        let gfilt = &mut gk[f * k * c_n..(f + 1) * k * c_n];
        for p in 0..p_len {
            let t = cache.winners[f * p_len + p];
            if cache.z[f * len + t] <= 0.0 {
                continue;
            }
            let dz = d_out[f * p_len + p];
            gb[f] += dz;
            let window = &seq[t * c_n..(t + k) * c_n];
            for (gv, xv) in gfilt.iter_mut().zip(window) {
                *gv += dz * xv;
            }
        }
    }
}
