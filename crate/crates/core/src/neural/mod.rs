//! Differentiable core of the agent, written out by hand: embeddings, LSTM,
//! pooling, a rectifier hidden layer and two linear output heads, with exact
//! reverse-mode gradients and RMSprop.

mod dense;
mod io;
mod lstm;
mod rmsprop;

use ndarray::Array2;
use rand::Rng;

pub use dense::Dense;
pub use io::{load_params, load_repr_into, save_params, FORMAT_VERSION, MAGIC};
pub use lstm::{LstmParams, LstmTrace, Pooling, StepCache};
pub use rmsprop::RmsProp;

/// Half-width of the uniform initialization range.
pub const INIT_SCALE: f64 = 0.08;
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NeuralError {
    #[error("dimension `{0}` must be at least 1")]
    ZeroDimension(&'static str),
    #[error("input sequence is empty")]
    EmptySequence,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in `{0}`")]
    NonFinite(String),
    #[error("parameter file: {0}")]
    Format(String),
    #[error("parameter file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("parameter file is truncated")]
    Truncated,
}

/// Action scorer: optional rectifier hidden layer, then one head for actions
/// and one for objects.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub hidden: Option<Dense>,
    pub action: Dense,
    pub object: Dense,
}

/// All trainable parameters: the representation generator (absent for
/// bag-of-words inputs) and the action scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub repr: Option<LstmParams>,
    pub scorer: ScorerParams,
}

/// Gradient accumulators, shaped exactly like the parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub NetParams);

/// Layer sizes of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub repr: ReprShape,
    /// Width of the rectifier layer; `None` for a linear scorer.
    pub hidden_dim: Option<usize>,
    pub n_actions: usize,
    pub n_objects: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprShape {
    Lstm {
        vocab_size: usize,
        embed_dim: usize,
        lstm_dim: usize,
    },
    /// Precomputed feature vectors of this width feed the scorer directly.
    Features { dim: usize },
}

impl NetShape {
    pub fn scorer_input(&self) -> usize {
        match self.repr {
            ReprShape::Lstm { lstm_dim, .. } => lstm_dim,
            ReprShape::Features { dim } => dim,
        }
    }

    fn check(&self) -> Result<(), NeuralError> {
        let nonzero = |v: usize, name| if v == 0 { Err(NeuralError::ZeroDimension(name)) } else { Ok(()) };
        match self.repr {
            ReprShape::Lstm {
                vocab_size,
                embed_dim,
                lstm_dim,
            } => {
                nonzero(vocab_size, "vocab_size")?;
                nonzero(embed_dim, "embed_dim")?;
                nonzero(lstm_dim, "lstm_dim")?;
            }
            ReprShape::Features { dim } => nonzero(dim, "feature_dim")?,
        }
        if let Some(m) = self.hidden_dim {
            nonzero(m, "hidden_dim")?;
        }
        nonzero(self.n_actions, "n_actions")?;
        nonzero(self.n_objects, "n_objects")
    }
}

/// Network input: token sequences for the LSTM, feature rows otherwise.
#[derive(Debug, Clone, Copy)]
pub enum NetInput<'a> {
    Tokens(&'a [&'a [u32]]),
    Features(&'a Array2<f64>),
}

impl NetInput<'_> {
    pub fn batch_size(&self) -> usize {
        match self {
            NetInput::Tokens(t) => t.len(),
            NetInput::Features(f) => f.nrows(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOptions {
    pub rollout_cap: usize,
    pub pooling: Pooling,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            rollout_cap: 30,
            pooling: Pooling::Mean,
        }
    }
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub lstm: Option<LstmTrace>,
    /// Scorer input rows (`v_s` for the LSTM, features otherwise).
    pub state: Array2<f64>,
    pub hidden_pre: Option<Array2<f64>>,
    pub hidden: Option<Array2<f64>>,
    /// `batch × n_actions`
    pub action_q: Array2<f64>,
    /// `batch × n_objects`
    pub object_q: Array2<f64>,
}

/// Upstream gradients of a scalar with respect to both heads.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub action: Array2<f64>,
    pub object: Array2<f64>,
}

/// Random parameters for the standard LSTM-DQN layout.
pub fn init_params(
    vocab_size: usize,
    embed_dim: usize,
    lstm_dim: usize,
    hidden_dim: usize,
    n_actions: usize,
    n_objects: usize,
    rng: &mut impl Rng,
) -> Result<NetParams, NeuralError> {
    NetParams::init(
        &NetShape {
            repr: ReprShape::Lstm {
                vocab_size,
                embed_dim,
                lstm_dim,
            },
            hidden_dim: Some(hidden_dim),
            n_actions,
            n_objects,
        },
        rng,
    )
}

impl ScorerParams {
    fn init(shape: &NetShape, rng: &mut impl Rng) -> Self {
        let input = shape.scorer_input();
        let hidden = shape
            .hidden_dim
            .map(|m| Dense::uniform(input, m, INIT_SCALE, rng));
        let head_in = shape.hidden_dim.unwrap_or(input);
        Self {
            hidden,
            action: Dense::uniform(head_in, shape.n_actions, INIT_SCALE, rng),
            object: Dense::uniform(head_in, shape.n_objects, INIT_SCALE, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.as_ref().unwrap_or(&self.action).inputs()
    }
}

impl NetParams {
    /// Uniform `[-0.08, 0.08]` initialization with forget-gate bias 1.
    pub fn init(shape: &NetShape, rng: &mut impl Rng) -> Result<Self, NeuralError> {
        shape.check()?;
        let repr = match shape.repr {
            ReprShape::Lstm {
                vocab_size,
                embed_dim,
                lstm_dim,
            } => Some(LstmParams::uniform(
                vocab_size,
                embed_dim,
                lstm_dim,
                INIT_SCALE,
                FORGET_BIAS,
                rng,
            )),
            ReprShape::Features { .. } => None,
        };
        Ok(Self {
            repr,
            scorer: ScorerParams::init(shape, rng),
        })
    }

    pub fn shape(&self) -> NetShape {
        NetShape {
            repr: match &self.repr {
                Some(l) => ReprShape::Lstm {
                    vocab_size: l.vocab_size(),
                    embed_dim: l.embed_dim(),
                    lstm_dim: l.lstm_dim(),
                },
                None => ReprShape::Features {
                    dim: self.scorer.input_dim(),
                },
            },
            hidden_dim: self.scorer.hidden.as_ref().map(Dense::outputs),
            n_actions: self.scorer.action.outputs(),
            n_objects: self.scorer.object.outputs(),
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.inputs(), d.outputs());
        Self {
            repr: self
                .repr
                .as_ref()
                .map(|l| LstmParams::zeros(l.vocab_size(), l.embed_dim(), l.lstm_dim())),
            scorer: ScorerParams {
                hidden: self.scorer.hidden.as_ref().map(z),
                action: z(&self.scorer.action),
                object: z(&self.scorer.object),
            },
        }
    }

    /// Named tensors in a fixed order: representation first, then scorer.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let mut out: Vec<(&'static str, Vec<usize>, &[f64])> = Vec::new();
        if let Some(l) = &self.repr {
            out.push(("repr.embeddings", l.embeddings.shape().to_vec(), slice(&l.embeddings)));
            out.push(("repr.lstm.w", l.w.shape().to_vec(), slice(&l.w)));
            out.push(("repr.lstm.b", l.b.shape().to_vec(), slice(&l.b)));
        }
        let s = &self.scorer;
        if let Some(hd) = &s.hidden {
            out.push(("scorer.hidden.w", hd.w.shape().to_vec(), slice(&hd.w)));
            out.push(("scorer.hidden.b", hd.b.shape().to_vec(), slice(&hd.b)));
        }
        out.push(("scorer.action.w", s.action.w.shape().to_vec(), slice(&s.action.w)));
        out.push(("scorer.action.b", s.action.b.shape().to_vec(), slice(&s.action.b)));
        out.push(("scorer.object.w", s.object.w.shape().to_vec(), slice(&s.object.w)));
        out.push(("scorer.object.b", s.object.b.shape().to_vec(), slice(&s.object.b)));
        out
    }

    /// Mutable views of the same tensors, in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::new();
        if let Some(l) = &mut self.repr {
            out.push(("repr.embeddings", slice_mut(&mut l.embeddings)));
            out.push(("repr.lstm.w", slice_mut(&mut l.w)));
            out.push(("repr.lstm.b", slice_mut(&mut l.b)));
        }
        let s = &mut self.scorer;
        if let Some(hd) = &mut s.hidden {
            out.push(("scorer.hidden.w", slice_mut(&mut hd.w)));
            out.push(("scorer.hidden.b", slice_mut(&mut hd.b)));
        }
        out.push(("scorer.action.w", slice_mut(&mut s.action.w)));
        out.push(("scorer.action.b", slice_mut(&mut s.action.b)));
        out.push(("scorer.object.w", slice_mut(&mut s.object.w)));
        out.push(("scorer.object.b", slice_mut(&mut s.object.b)));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: NetInput<'_>, opts: &ForwardOptions) -> Result<ForwardTrace, NeuralError> {
        let (lstm, state) = match (input, &self.repr) {
            (NetInput::Tokens(seqs), Some(l)) => {
                let trace = l.forward(seqs, opts.rollout_cap, opts.pooling)?;
                let pooled = trace.pooled.clone();
                (Some(trace), pooled)
            }
            (NetInput::Features(f), None) => {
                if f.ncols() != self.scorer.input_dim() {
                    return Err(NeuralError::ShapeMismatch(format!(
                        "feature width {} but scorer expects {}",
                        f.ncols(),
                        self.scorer.input_dim()
                    )));
                }
                (None, f.clone())
            }
            (NetInput::Tokens(_), None) => {
                return Err(NeuralError::ShapeMismatch("token input to a feature network".into()))
            }
            (NetInput::Features(_), Some(_)) => {
                return Err(NeuralError::ShapeMismatch("feature input to an LSTM network".into()))
            }
        };
        let s = &self.scorer;
        let (hidden_pre, hidden) = match &s.hidden {
            Some(layer) => {
                let pre = layer.forward(&state);
                let act = pre.mapv(|v| v.max(0.0));
                (Some(pre), Some(act))
            }
            None => (None, None),
        };
        let head_in = hidden.as_ref().unwrap_or(&state);
        let action_q = s.action.forward(head_in);
        let object_q = s.object.forward(head_in);
        Ok(ForwardTrace {
            lstm,
            state,
            hidden_pre,
            hidden,
            action_q,
            object_q,
        })
    }

    /// Exact gradient of `Σ head_grads ⊙ heads` with respect to every parameter.
    pub fn backward(&self, trace: &ForwardTrace, head_grads: &HeadGrads) -> Result<Gradients, NeuralError> {
        let mut grad = self.zeros_like();
        self.backward_into(trace, head_grads, &mut grad)?;
        Ok(Gradients(grad))
    }

    /// Like [`backward`](Self::backward) but accumulates into existing gradients.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        head_grads: &HeadGrads,
        grad: &mut NetParams,
    ) -> Result<(), NeuralError> {
        if head_grads.action.dim() != trace.action_q.dim() || head_grads.object.dim() != trace.object_q.dim() {
            return Err(NeuralError::ShapeMismatch(format!(
                "head gradients {:?}/{:?} vs outputs {:?}/{:?}",
                head_grads.action.dim(),
                head_grads.object.dim(),
                trace.action_q.dim(),
                trace.object_q.dim()
            )));
        }
        if grad.shape() != self.shape() {
            return Err(NeuralError::ShapeMismatch("gradient accumulator shape".into()));
        }
        let s = &self.scorer;
        let gs = &mut grad.scorer;
        let head_in = trace.hidden.as_ref().unwrap_or(&trace.state);
        let mut d_head_in = s.action.backward(head_in, &head_grads.action, &mut gs.action);
        d_head_in += &s.object.backward(head_in, &head_grads.object, &mut gs.object);

        let d_state = match (&s.hidden, &trace.hidden_pre) {
            (Some(layer), Some(pre)) => {
                let mut d_pre = d_head_in;
                ndarray::Zip::from(&mut d_pre)
                    .and(pre)
                    .for_each(|d, &p| if p <= 0.0 { *d = 0.0 });
                layer.backward(&trace.state, &d_pre, gs.hidden.as_mut().expect("same shape"))
            }
            _ => d_head_in,
        };

        match (&self.repr, &trace.lstm) {
            (Some(l), Some(lt)) => l.backward(lt, &d_state, grad.repr.as_mut().expect("same shape")),
            (None, None) => Ok(()),
            _ => Err(NeuralError::ShapeMismatch("trace does not match these parameters".into())),
        }
    }
}

impl Gradients {
    pub fn zeros_like(params: &NetParams) -> Self {
        Self(params.zeros_like())
    }

    pub fn is_zero(&self) -> bool {
        self.0.tensors().iter().all(|(_, _, d)| d.iter().all(|&v| v == 0.0))
    }
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored in standard layout")
}
