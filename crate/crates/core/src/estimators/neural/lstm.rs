//! Single-layer LSTM (input, forget, cell and output gates) over the phrase
//! axis. Steps are consumed in reverse slot order so the most recent job is
//! read last; the final hidden state is the body output.

use super::Architecture;

pub(super) fn param_count(a: &Architecture) -> usize {
    let h = a.recurrent_hidden;
    4 * h * a.channels + 4 * h * h + 4 * h
}

pub(super) fn output_width(a: &Architecture) -> usize {
    a.recurrent_hidden
}

/// Offset of the forget-gate bias block within this body's parameters.
pub(super) fn forget_bias_range(a: &Architecture) -> std::ops::Range<usize> {
    let h = a.recurrent_hidden;
    let start = 4 * h * a.channels + 4 * h * h + h;
    start..start + h
}

pub(super) struct Cache {
    /// Gate activations per step, `[step][i | f | g | o]`.
    gates: Vec<f64>,
    /// Cell states, `steps + 1` entries of width `hidden`; entry 0 is the initial zero state.
    cells: Vec<f64>,
    hidden: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn input_at<'a>(a: &Architecture, seq: &'a [f64], step: usize) -> &'a [f64] {
    let t = a.steps - 1 - step;
    &seq[t * a.channels..(t + 1) * a.channels]
}

pub(super) fn forward(a: &Architecture, w: &[f64], seq: &[f64], out: &mut [f64]) -> Cache {
    let (h, c_n, steps) = (a.recurrent_hidden, a.channels, a.steps);
    let (wx, rest) = w.split_at(4 * h * c_n);
    let (wh, b) = rest.split_at(4 * h * h);
    let mut gates = vec![0.0; steps * 4 * h];
    let mut cells = vec![0.0; (steps + 1) * h];
    let mut hidden = vec![0.0; (steps + 1) * h];
    let mut pre = vec![0.0; 4 * h];
    for s in 0..steps {
        let x = input_at(a, seq, s);
        let h_prev = &hidden[s * h..(s + 1) * h];
        for (r, p) in pre.iter_mut().enumerate() {
            let ax: f64 = wx[r * c_n..(r + 1) * c_n].iter().zip(x).map(|(a, b)| a * b).sum();
            let ah: f64 = wh[r * h..(r + 1) * h].iter().zip(h_prev).map(|(a, b)| a * b).sum();
            *p = b[r] + ax + ah;
        }
        let g = &mut gates[s * 4 * h..(s + 1) * 4 * h];
        for j in 0..h {
            g[j] = sigmoid(pre[j]);
            g[h + j] = sigmoid(pre[h + j]);
            g[2 * h + j] = pre[2 * h + j].tanh();
            g[3 * h + j] = sigmoid(pre[3 * h + j]);
        }
        for j in 0..h {
            let c = g[h + j] * cells[s * h + j] + g[j] * g[2 * h + j];
            cells[(s + 1) * h + j] = c;
            hidden[(s + 1) * h + j] = g[3 * h + j] * c.tanh();
        }
    }
    out.copy_from_slice(&hidden[steps * h..]);
    Cache { gates, cells, hidden }
}

/// Backpropagation through time from the gradient of the final hidden state.
pub(super) fn backward(a: &Architecture, w: &[f64], seq: &[f64], cache: &Cache, d_out: &[f64], g: &mut [f64]) {
    let (h, c_n, steps) = (a.recurrent_hidden, a.channels, a.steps);
    let wh = &w[4 * h * c_n..4 * h * c_n + 4 * h * h];
    let (gwx, rest) = g.split_at_mut(4 * h * c_n);
    let (gwh, gb) = rest.split_at_mut(4 * h * h);
    let mut dh = d_out.to_vec();
    let mut dc = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    for s in (0..steps).rev() {
        let gt = &cache.gates[s * 4 * h..(s + 1) * 4 * h];
        let c_prev = &cache.cells[s * h..(s + 1) * h];
        let c = &cache.cells[(s + 1) * h..(s + 2) * h];
        for j in 0..h {
            let (i, f, gg, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
            let tc = c[j].tanh();
            dc[j] += dh[j] * o * (1.0 - tc * tc);
            da[j] = dc[j] * gg * i * (1.0 - i);
            da[h + j] = dc[j] * c_prev[j] * f * (1.0 - f);
            da[2 * h + j] = dc[j] * i * (1.0 - gg * gg);
            da[3 * h + j] = dh[j] * tc * o * (1.0 - o);
            dc[j] *= f;
        }
        let x = input_at(a, seq, s);
        let h_prev = &cache.hidden[s * h..(s + 1) * h];
        dh.iter_mut().for_each(|v| *v = 0.0);
        for (r, &d) in da.iter().enumerate() {
            gb[r] += d;
            for (gv, xv) in gwx[r * c_n..(r + 1) * c_n].iter_mut().zip(x) {
                *gv += d * xv;
            }
            let row = &wh[r * h..(r + 1) * h];
            for ((gv, hv), (dv, wv)) in gwh[r * h..(r + 1) * h]
                .iter_mut()
                .zip(h_prev)
                .zip(dh.iter_mut().zip(row))
            {
                *gv += d * hv;
                *dv += d * wv;
            }
        }
    }
}
