//! Stacked LSTM with a sigmoid output layer, forward pass and exact BPTT.
//!
//! All parameters live in one flat vector. Per LSTM layer with input size
//! `n` and hidden size `h` the block is `W (4h × n)`, `U (4h × h)`, `b (4h)`,
//! gates ordered input, forget, cell candidate, output. The output layer is
//! `V (C × h_last)` and `c (C)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::sequence::SequenceBatch;

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the loss.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LstmLayout {
    input: usize,
    hidden: usize,
    w: usize,
    u: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    values: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn parameter_count(layer_sizes: &[usize]) -> usize {
    let n = layer_sizes.len();
    let lstm: usize = layer_sizes[..n - 1]
        .windows(2)
        .map(|w| 4 * w[1] * (w[0] + w[1] + 1))
        .sum();
    lstm + layer_sizes[n - 1] * (layer_sizes[n - 2] + 1)
}

impl NetworkParams {
    /// `layer_sizes = [input, hidden..., classes]`, at least one hidden layer.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 3 || layer_sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "layer sizes {layer_sizes:?} need an input, at least one hidden layer and an output, all nonzero"
            )));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            values: vec![0.0; parameter_count(layer_sizes)],
        })
    }

    /// Uniform `±1/√fan_in` weights, zero biases except the forget gate at +1.
    pub fn init(layer_sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes)?;
        for l in p.lstm_layouts() {
            let (a, b) = (1.0 / (l.input as f64).sqrt(), 1.0 / (l.hidden as f64).sqrt());
            for v in &mut p.values[l.w..l.u] {
                *v = rng.gen_range(-a..a);
            }
            for v in &mut p.values[l.u..l.b] {
                *v = rng.gen_range(-b..b);
            }
            for v in &mut p.values[l.b + l.hidden..l.b + 2 * l.hidden] {
                *v = 1.0;
            }
        }
        let (v_off, c_off) = p.output_offsets();
        let a = 1.0 / (p.top_hidden() as f64).sqrt();
        for v in &mut p.values[v_off..c_off] {
            *v = rng.gen_range(-a..a);
        }
        Ok(p)
    }

    pub fn from_values(layer_sizes: &[usize], values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes)?;
        if values.len() != p.values.len() {
            return Err(Error::SizeMismatch(format!(
                "{} parameters given, layer sizes {layer_sizes:?} need {}",
                values.len(),
                p.values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        p.values = values;
        Ok(p)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn top_hidden(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 2]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn lstm_layouts(&self) -> Vec<LstmLayout> {
        let mut offset = 0;
        let n = self.layer_sizes.len();
        self.layer_sizes[..n - 1]
            .windows(2)
            .map(|w| {
                let (input, hidden) = (w[0], w[1]);
                let l = LstmLayout {
                    input,
                    hidden,
                    w: offset,
                    u: offset + 4 * hidden * input,
                    b: offset + 4 * hidden * (input + hidden),
                };
                offset = l.b + 4 * hidden;
                l
            })
            .collect()
    }

    fn output_offsets(&self) -> (usize, usize) {
        let v = self
            .lstm_layouts()
            .last()
            .map(|l| l.b + 4 * l.hidden)
            .unwrap_or(0);
        (v, v + self.output_size() * self.top_hidden())
    }
}

/// Activations of one layer over one sequence.
struct LayerTrace {
    /// Post-activation gates per step, `[i, f, g, o]` blocks of `hidden`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    hidden: Vec<f64>,
}

struct SequenceTrace {
    layers: Vec<LayerTrace>,
    posteriors: Vec<f64>,
}

fn forward_sequence(p: &NetworkParams, x: &[f64], steps: usize) -> SequenceTrace {
    let mut layers = Vec::new();
    let mut input: &[f64] = x;
    for l in p.lstm_layouts() {
        let h = l.hidden;
        let w = &p.values[l.w..l.u];
        let u = &p.values[l.u..l.b];
        let bias = &p.values[l.b..l.b + 4 * h];
        let mut trace = LayerTrace {
            gates: vec![0.0; steps * 4 * h],
            cells: vec![0.0; steps * h],
            hidden: vec![0.0; steps * h],
        };
        let mut pre = vec![0.0; 4 * h];
        for t in 0..steps {
            let xt = &input[t * l.input..(t + 1) * l.input];
            pre.copy_from_slice(bias);
            for (r, a) in pre.iter_mut().enumerate() {
                let row = &w[r * l.input..(r + 1) * l.input];
                *a += row.iter().zip(xt).map(|(wi, xi)| wi * xi).sum::<f64>();
            }
            if t > 0 {
                let hp = &trace.hidden[(t - 1) * h..t * h];
                for (r, a) in pre.iter_mut().enumerate() {
                    let row = &u[r * h..(r + 1) * h];
                    *a += row.iter().zip(hp).map(|(ui, hi)| ui * hi).sum::<f64>();
                }
            }
            let g = &mut trace.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                g[j] = sigmoid(pre[j]);
                g[h + j] = sigmoid(pre[h + j]);
                g[2 * h + j] = pre[2 * h + j].tanh();
                g[3 * h + j] = sigmoid(pre[3 * h + j]);
            }
            for j in 0..h {
                let c_prev = if t > 0 { trace.cells[(t - 1) * h + j] } else { 0.0 };
                let c = g[h + j] * c_prev + g[j] * g[2 * h + j];
                trace.cells[t * h + j] = c;
                trace.hidden[t * h + j] = g[3 * h + j] * c.tanh();
            }
        }
        layers.push(trace);
        input = &layers.last().unwrap().hidden;
    }

    let (v_off, c_off) = p.output_offsets();
    let (classes, top) = (p.output_size(), p.top_hidden());
    let v = &p.values[v_off..c_off];
    let c = &p.values[c_off..c_off + classes];
    let hidden = &layers.last().unwrap().hidden;
    let mut posteriors = vec![0.0; steps * classes];
    for t in 0..steps {
        let ht = &hidden[t * top..(t + 1) * top];
        for k in 0..classes {
            let z = c[k] + v[k * top..(k + 1) * top].iter().zip(ht).map(|(a, b)| a * b).sum::<f64>();
            posteriors[t * classes + k] = sigmoid(z);
        }
    }
    SequenceTrace { layers, posteriors }
}

fn check_batch(p: &NetworkParams, batch: &SequenceBatch) -> Result<()> {
    if batch.input_dim() != p.input_size() {
        return Err(Error::SizeMismatch(format!(
            "batch has {} input features, network expects {}",
            batch.input_dim(),
            p.input_size()
        )));
    }
    if batch.class_count() != p.output_size() {
        return Err(Error::SizeMismatch(format!(
            "batch has {} classes, network predicts {}",
            batch.class_count(),
            p.output_size()
        )));
    }
    Ok(())
}

/// Posteriors for every sequence, `sequences × steps × classes`.
pub fn forward(p: &NetworkParams, batch: &SequenceBatch) -> Result<Vec<f64>> {
    check_batch(p, batch)?;
    let steps = batch.sequence_length();
    let mut out = Vec::with_capacity(batch.len() * steps * p.output_size());
    for s in 0..batch.len() {
        out.extend(forward_sequence(p, batch.inputs(s), steps).posteriors);
    }
    Ok(out)
}

/// Masked binary cross-entropy, averaged over valid `(frame, class)` cells.
/// Zero when no cell is valid.
pub fn loss(posteriors: &[f64], targets: &[f64], mask: &[f64], classes: usize) -> f64 {
    let (total, cells) = loss_sum(posteriors, targets, mask, classes);
    if cells == 0.0 {
        0.0
    } else {
        total / cells
    }
}

fn loss_sum(posteriors: &[f64], targets: &[f64], mask: &[f64], classes: usize) -> (f64, f64) {
    let mut total = 0.0;
    let mut cells = 0.0;
    for (f, &m) in mask.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for k in 0..classes {
            let p = posteriors[f * classes + k].clamp(P_CLAMP, 1.0 - P_CLAMP);
            let y = targets[f * classes + k];
            total -= m * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            cells += m;
        }
    }
    (total, cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Mean over valid cells; what training uses.
    Mean,
    Sum,
}

/// Loss and its exact gradient with respect to every parameter, through the
/// full unrolled sequence.
///
/// The gradient is that of the unclamped cross-entropy, `∂L/∂z = p − y` at
/// the output pre-activation; it coincides with the reported (clamped) loss
/// whenever posteriors lie inside the clamp range.
pub fn backward(p: &NetworkParams, batch: &SequenceBatch, reduction: Reduction) -> Result<(f64, Vec<f64>)> {
    check_batch(p, batch)?;
    let steps = batch.sequence_length();
    let classes = p.output_size();
    let top = p.top_hidden();
    let layouts = p.lstm_layouts();
    let (v_off, c_off) = p.output_offsets();
    let mut grad = vec![0.0; p.len()];

    let valid_cells = batch.mask_all().iter().sum::<f64>() * classes as f64;
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean if valid_cells > 0.0 => 1.0 / valid_cells,
        Reduction::Mean => 0.0,
    };
    let mut total_loss = 0.0;

    for s in 0..batch.len() {
        let x = batch.inputs(s);
        let y = batch.targets(s);
        let mask = batch.mask(s);
        let trace = forward_sequence(p, x, steps);
        // per-sequence buffer keeps the batch sum independent of interleaving
        let mut gs = vec![0.0; p.len()];
        total_loss += loss_sum(&trace.posteriors, y, mask, classes).0;

        // output layer
        let hidden_top = &trace.layers.last().unwrap().hidden;
        let mut dh = vec![0.0; steps * top];
        for t in 0..steps {
            if mask[t] == 0.0 {
                continue;
            }
            let ht = &hidden_top[t * top..(t + 1) * top];
            for k in 0..classes {
                let dz = scale * mask[t] * (trace.posteriors[t * classes + k] - y[t * classes + k]);
                if dz == 0.0 {
                    continue;
                }
                gs[c_off + k] += dz;
                let row = v_off + k * top;
                for j in 0..top {
                    gs[row + j] += dz * ht[j];
                    dh[t * top + j] += dz * p.values[row + j];
                }
            }
        }

        // LSTM layers, top down
        for (li, l) in layouts.iter().enumerate().rev() {
            let h = l.hidden;
            let tr = &trace.layers[li];
            let input: &[f64] = if li == 0 { x } else { &trace.layers[li - 1].hidden };
            let mut dx = if li > 0 { vec![0.0; steps * l.input] } else { Vec::new() };
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut da = vec![0.0; 4 * h];
            for t in (0..steps).rev() {
                let g = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
                for j in 0..h {
                    let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let c = tr.cells[t * h + j];
                    let c_prev = if t > 0 { tr.cells[(t - 1) * h + j] } else { 0.0 };
                    let tc = c.tanh();
                    let dht = dh[t * h + j] + dh_next[j];
                    let dc = dc_next[j] + dht * o * (1.0 - tc * tc);
                    da[j] = dc * gg * i * (1.0 - i);
                    da[h + j] = dc * c_prev * f * (1.0 - f);
                    da[2 * h + j] = dc * i * (1.0 - gg * gg);
                    da[3 * h + j] = dht * tc * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                let xt = &input[t * l.input..(t + 1) * l.input];
                for r in 0..4 * h {
                    let d = da[r];
                    if d == 0.0 {
                        continue;
                    }
                    gs[l.b + r] += d;
                    let w_row = l.w + r * l.input;
                    for (gw, xi) in gs[w_row..w_row + l.input].iter_mut().zip(xt) {
                        *gw += d * xi;
                    }
                    if li > 0 {
                        let wv = &p.values[w_row..w_row + l.input];
                        for (dxi, wi) in dx[t * l.input..(t + 1) * l.input].iter_mut().zip(wv) {
                            *dxi += d * wi;
                        }
                    }
                }
                dh_next.fill(0.0);
                if t > 0 {
                    let hp = &tr.hidden[(t - 1) * h..t * h];
                    for r in 0..4 * h {
                        let d = da[r];
                        if d == 0.0 {
                            continue;
                        }
                        let u_row = l.u + r * h;
                        for j in 0..h {
                            gs[u_row + j] += d * hp[j];
                            dh_next[j] += d * p.values[u_row + j];
                        }
                    }
                }
            }
            dh = dx;
        }
        for (a, b) in grad.iter_mut().zip(&gs) {
            *a += b;
        }
    }

    let loss_value = match reduction {
        Reduction::Sum => total_loss,
        Reduction::Mean if valid_cells > 0.0 => total_loss / valid_cells,
        Reduction::Mean => 0.0,
    };
    Ok((loss_value, grad))
}
