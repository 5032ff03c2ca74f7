//! Single-layer LSTM over word embeddings with mean (or last-output) pooling.
//!
//! Sequences in a batch are run in lockstep, one GEMM per timestep. Shorter
//! sequences keep stepping past their end on zero embeddings; those padded
//! steps never reach the pooled output, so they receive zero gradient.

use ndarray::{linalg::general_mat_mul, s, Array1, Array2, Axis, Zip};
use rand::Rng;

use super::NeuralError;

/// How per-step outputs are reduced to one state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Element-wise mean over all step outputs.
    #[default]
    Mean,
    /// Output of the last step only.
    Last,
}

/// Embedding table plus LSTM gate weights.
///
/// Gate rows of `w` and `b` are laid out as `[input, forget, output, candidate]`,
/// each `lstm_dim` long. Columns of `w` are `[embedding; previous output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `vocab × embed_dim`
    pub embeddings: Array2<f64>,
    /// `4·lstm_dim × (embed_dim + lstm_dim)`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Cached activations of one timestep across the batch.
#[derive(Debug, Clone)]
pub struct StepCache {
    /// `[embedding; previous output]` rows.
    pub z: Array2<f64>,
    /// Activated gates `[i, f, o, g]`.
    pub gates: Array2<f64>,
    pub cell: Array2<f64>,
    pub tanh_cell: Array2<f64>,
    /// Step outputs `x_k`.
    pub output: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmTrace {
    /// Input tokens after truncation to the rollout cap.
    pub tokens: Vec<Vec<u32>>,
    pub steps: Vec<StepCache>,
    pub pooling: Pooling,
    /// `batch × lstm_dim` state vectors `v_s`.
    pub pooled: Array2<f64>,
}

impl LstmTrace {
    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens.iter().map(Vec::len)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmParams {
    pub fn zeros(vocab: usize, embed_dim: usize, lstm_dim: usize) -> Self {
        Self {
            embeddings: Array2::zeros((vocab, embed_dim)),
            w: Array2::zeros((4 * lstm_dim, embed_dim + lstm_dim)),
            b: Array1::zeros(4 * lstm_dim),
        }
    }

    /// Uniform `[-scale, scale]` weights; forget-gate bias set to `forget_bias`.
    pub fn uniform(
        vocab: usize,
        embed_dim: usize,
        lstm_dim: usize,
        scale: f64,
        forget_bias: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut sample = || rng.random_range(-scale..=scale);
        let embeddings = Array2::from_shape_simple_fn((vocab, embed_dim), &mut sample);
        let w = Array2::from_shape_simple_fn((4 * lstm_dim, embed_dim + lstm_dim), &mut sample);
        let mut b = Array1::from_shape_simple_fn(4 * lstm_dim, &mut sample);
        b.slice_mut(s![lstm_dim..2 * lstm_dim]).fill(forget_bias);
        Self { embeddings, w, b }
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn lstm_dim(&self) -> usize {
        self.b.len() / 4
    }

    pub fn forward(
        &self,
        seqs: &[&[u32]],
        rollout_cap: usize,
        pooling: Pooling,
    ) -> Result<LstmTrace, NeuralError> {
        let batch = seqs.len();
        let d = self.embed_dim();
        let h = self.lstm_dim();
        if rollout_cap == 0 {
            return Err(NeuralError::ZeroDimension("rollout_cap"));
        }
        let tokens: Vec<Vec<u32>> = seqs
            .iter()
            .map(|s| s[..s.len().min(rollout_cap)].to_vec())
            .collect();
        if tokens.iter().any(Vec::is_empty) {
            return Err(NeuralError::EmptySequence);
        }
        if let Some(&bad) = tokens.iter().flatten().find(|&&t| t as usize >= self.vocab_size()) {
            return Err(NeuralError::ShapeMismatch(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab_size()
            )));
        }
        let max_len = tokens.iter().map(Vec::len).max().unwrap_or(0);

        let mut prev_out = Array2::<f64>::zeros((batch, h));
        let mut prev_cell = Array2::<f64>::zeros((batch, h));
        let mut pooled = Array2::<f64>::zeros((batch, h));
        let mut steps = Vec::with_capacity(max_len);

        for t in 0..max_len {
            let mut z = Array2::<f64>::zeros((batch, d + h));
            for (row, seq) in tokens.iter().enumerate() {
                if let Some(&tok) = seq.get(t) {
                    z.slice_mut(s![row, ..d]).assign(&self.embeddings.row(tok as usize));
                }
            }
            z.slice_mut(s![.., d..]).assign(&prev_out);

            let mut gates = Array2::<f64>::zeros((batch, 4 * h));
            general_mat_mul(1.0, &z, &self.w.t(), 0.0, &mut gates);
            gates += &self.b;
            gates.slice_mut(s![.., ..3 * h]).mapv_inplace(sigmoid);
            gates.slice_mut(s![.., 3 * h..]).mapv_inplace(f64::tanh);

            let mut cell = Array2::<f64>::zeros((batch, h));
            Zip::from(&mut cell)
                .and(&prev_cell)
                .and(gates.slice(s![.., ..h]))
                .and(gates.slice(s![.., h..2 * h]))
                .and(gates.slice(s![.., 3 * h..]))
                .for_each(|c, &cp, &i, &f, &g| *c = f * cp + i * g);
            let tanh_cell = cell.mapv(f64::tanh);
            let output = &gates.slice(s![.., 2 * h..3 * h]) * &tanh_cell;

            for (row, seq) in tokens.iter().enumerate() {
                let n = seq.len();
                let take = match pooling {
                    Pooling::Mean => t < n,
                    Pooling::Last => t + 1 == n,
                };
                if take {
                    let mut dst = pooled.row_mut(row);
                    dst += &output.row(row);
                }
            }

            prev_out = output.clone();
            prev_cell = cell.clone();
            steps.push(StepCache {
                z,
                gates,
                cell,
                tanh_cell,
                output,
            });
        }

        if pooling == Pooling::Mean {
            for (mut row, seq) in pooled.rows_mut().into_iter().zip(&tokens) {
                row /= seq.len() as f64;
            }
        }

        Ok(LstmTrace {
            tokens,
            steps,
            pooling,
            pooled,
        })
    }

    /// Back-propagates `d_pooled` (`batch × lstm_dim`) through time,
    /// accumulating into `grad`.
    pub fn backward(
        &self,
        trace: &LstmTrace,
        d_pooled: &Array2<f64>,
        grad: &mut LstmParams,
    ) -> Result<(), NeuralError> {
        let batch = trace.tokens.len();
        let d = self.embed_dim();
        let h = self.lstm_dim();
        if d_pooled.dim() != (batch, h) {
            return Err(NeuralError::ShapeMismatch(format!(
                "pooled gradient is {:?}, expected {:?}",
                d_pooled.dim(),
                (batch, h)
            )));
        }
        if grad.w.dim() != self.w.dim() || grad.embeddings.dim() != self.embeddings.dim() {
            return Err(NeuralError::ShapeMismatch("gradient accumulator shape".into()));
        }

        let mut d_out_next = Array2::<f64>::zeros((batch, h));
        let mut d_cell_next = Array2::<f64>::zeros((batch, h));
        let zeros = Array2::<f64>::zeros((batch, h));
        let mut d_gates = Array2::<f64>::zeros((batch, 4 * h));
        let mut dz = Array2::<f64>::zeros((batch, d + h));

        for t in (0..trace.steps.len()).rev() {
            let step = &trace.steps[t];
            let prev_cell = if t > 0 { &trace.steps[t - 1].cell } else { &zeros };

            let mut d_out = d_out_next;
            for (row, seq) in trace.tokens.iter().enumerate() {
                let n = seq.len();
                match trace.pooling {
                    Pooling::Mean if t < n => {
                        let mut r = d_out.row_mut(row);
                        r.scaled_add(1.0 / n as f64, &d_pooled.row(row));
                    }
                    Pooling::Last if t + 1 == n => {
                        let mut r = d_out.row_mut(row);
                        r += &d_pooled.row(row);
                    }
                    _ => {}
                }
            }

            let mut d_cell_prev = Array2::<f64>::zeros((batch, h));
            for row in 0..batch {
                let g = step.gates.row(row);
                let tc = step.tanh_cell.row(row);
                let cp = prev_cell.row(row);
                let dout = d_out.row(row);
                let dcn = d_cell_next.row(row);
                let mut dg = d_gates.row_mut(row);
                let mut dcp = d_cell_prev.row_mut(row);
                for k in 0..h {
                    let (i, f, o, cand) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                    let d_o = dout[k] * tc[k];
                    let dc = dcn[k] + dout[k] * o * (1.0 - tc[k] * tc[k]);
                    dg[k] = dc * cand * i * (1.0 - i);
                    dg[h + k] = dc * cp[k] * f * (1.0 - f);
                    dg[2 * h + k] = d_o * o * (1.0 - o);
                    dg[3 * h + k] = dc * i * (1.0 - cand * cand);
                    dcp[k] = dc * f;
                }
            }

            general_mat_mul(1.0, &d_gates.t(), &step.z, 1.0, &mut grad.w);
            grad.b += &d_gates.sum_axis(Axis(0));
            general_mat_mul(1.0, &d_gates, &self.w, 0.0, &mut dz);

            for (row, seq) in trace.tokens.iter().enumerate() {
                if let Some(&tok) = seq.get(t) {
                    let mut e = grad.embeddings.row_mut(tok as usize);
                    e += &dz.slice(s![row, ..d]);
                }
            }
            d_out_next = dz.slice(s![.., d..]).to_owned();
            d_cell_next = d_cell_prev;
        }
        Ok(())
    }
}
