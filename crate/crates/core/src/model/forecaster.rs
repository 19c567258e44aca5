use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureScaling, WindowSample};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

use super::attention::{attend, AttentionVars, KernelVars};
use super::cell::CellVars;
use super::config::{AttentionVariant, DecodeStrategy, ModelConfig};
use super::mstcn::{ms_tcn_forward, MsTcnVars};
use super::params::{glorot, ParamSet};

/// Slot indices of every named parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layout {
    country_emb: usize,
    branches: Vec<(usize, usize)>,
    projection: (usize, usize),
    cell: [usize; 9],
    wq: usize,
    wk: usize,
    wv: usize,
    kernel: KernelSlots,
    init_context: usize,
    horizon_emb: usize,
    head: [usize; 4],
    policy: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum KernelSlots {
    Multiplicative { log_tau: usize, log_beta: usize },
    Additive { gamma: usize },
}

/// Multi-scale convolution, gating recurrence, time-aware attention and a
/// horizon-embedded head, with a policy head over the same context.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridForecaster {
    config: ModelConfig,
    params: ParamSet,
    layout: Layout,
}

/// Everything one window's forward pass records.
#[derive(Clone, Debug)]
pub struct WindowForward {
    /// `[1, 1]` scaled prediction per configured horizon.
    pub preds: Vec<Var>,
    /// Consecutive predictions used by the smoothness penalty.
    pub path: Vec<Var>,
    /// `[1, context_dim]` pooled context of the initial encoding.
    pub context: Var,
    /// `[1, K]` policy log-probabilities.
    pub log_policy: Var,
}

/// Encoder intermediates for one input matrix.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub conv: Var,
    pub hidden: Vec<Var>,
    pub context: Var,
    pub attention: Option<Var>,
}

impl HybridForecaster {
    /// Glorot-uniform weights, zero biases, zero additive table,
    /// `tau = 7`, `beta_week = 0.5`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let c = &config;
        let mut mat = |p: &mut ParamSet, name: &str, r: usize, k: usize| {
            p.push(name, glorot(&mut rng, &[r, k], r, k))
        };
        let zeros = |p: &mut ParamSet, name: &str, shape: &[usize]| p.push(name, Tensor::zeros(shape));

        let country_emb = mat(&mut p, "embed.country", c.n_countries, c.country_dim);
        let c_in = c.n_features + c.country_dim;
        let cb = c.mstcn.branch_channels;
        let mut branches = Vec::new();
        let mut conv_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for &w in &c.mstcn.kernel_widths {
            let k = p.push(
                format!("mstcn.w{w}.kernel"),
                glorot(&mut conv_rng, &[w, c_in, cb], w * c_in, w * cb),
            );
            let b = zeros(&mut p, &format!("mstcn.w{w}.bias"), &[cb]);
            branches.push((k, b));
        }
        let cat = cb * c.mstcn.kernel_widths.len();
        let cw = c.mstcn.projection_width;
        let projection = (
            p.push("mstcn.proj.kernel", glorot(&mut conv_rng, &[1, cat, cw], cat, cw)),
            zeros(&mut p, "mstcn.proj.bias", &[cw]),
        );
        let d = c.hidden;
        let mut cell = [0usize; 9];
        for (i, gate) in ["g", "c", "o"].iter().enumerate() {
            cell[3 * i] = mat(&mut p, &format!("cell.w_{gate}"), cw, d);
            cell[3 * i + 1] = mat(&mut p, &format!("cell.u_{gate}"), d, d);
            cell[3 * i + 2] = zeros(&mut p, &format!("cell.b_{gate}"), &[d]);
        }
        let wq = mat(&mut p, "attn.w_q", d, c.d_k);
        let wk = mat(&mut p, "attn.w_k", d, c.d_k);
        let wv = mat(&mut p, "attn.w_v", d, c.d_v);
        let kernel = match c.attention {
            AttentionVariant::Multiplicative => KernelSlots::Multiplicative {
                log_tau: p.push("attn.log_tau", Tensor::full(&[1, 1], 7f64.ln())),
                log_beta: p.push("attn.log_beta_week", Tensor::full(&[1, 1], 0.5f64.ln())),
            },
            AttentionVariant::Additive => KernelSlots::Additive {
                gamma: zeros(&mut p, "attn.gamma", &[c.lookback]),
            },
        };
        let init_context = zeros(&mut p, "attn.init_context", &[1, c.d_v]);
        let horizon_emb = mat(&mut p, "head.horizon_emb", c.horizons.len(), c.horizon_dim);
        let head_in = c.context_dim() + c.horizon_dim;
        let head = [
            mat(&mut p, "head.w1", head_in, c.head_hidden),
            zeros(&mut p, "head.b1", &[c.head_hidden]),
            mat(&mut p, "head.w2", c.head_hidden, 1),
            zeros(&mut p, "head.b2", &[1]),
        ];
        let policy = (
            mat(&mut p, "policy.w", c.context_dim(), c.policy_actions),
            zeros(&mut p, "policy.b", &[c.policy_actions]),
        );
        Ok(Self {
            config,
            params: p,
            layout: Layout {
                country_emb,
                branches,
                projection,
                cell,
                wq,
                wk,
                wv,
                kernel,
                init_context,
                horizon_emb,
                head,
                policy,
            },
        })
    }

    /// Rebuilds a model from a config and stored parameters, checking names
    /// and shapes against a fresh layout.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let mut m = Self::init(config, 0)?;
        if m.params.names() != params.names()
            || m.params.tensors().iter().zip(params.tensors()).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::InvalidData(
                "stored parameters do not match the model configuration".into(),
            ));
        }
        m.params = params;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Slot of the output head bias.
    pub fn head_bias_slot(&self) -> usize {
        self.layout.head[3]
    }

    /// Slots of the output head `(w1, b1, w2, b2)`.
    pub fn head_slots(&self) -> [usize; 4] {
        self.layout.head
    }

    pub fn horizon_embedding_slot(&self) -> usize {
        self.layout.horizon_emb
    }

    fn cell_vars(&self, v: &[Var]) -> CellVars {
        let s = &self.layout.cell;
        CellVars {
            w_g: v[s[0]],
            u_g: v[s[1]],
            b_g: v[s[2]],
            w_c: v[s[3]],
            u_c: v[s[4]],
            b_c: v[s[5]],
            w_o: v[s[6]],
            u_o: v[s[7]],
            b_o: v[s[8]],
            phi: self.config.phi,
        }
    }

    fn attention_vars(&self, v: &[Var]) -> AttentionVars {
        let l = &self.layout;
        AttentionVars {
            wq: v[l.wq],
            wk: v[l.wk],
            wv: v[l.wv],
            kernel: match l.kernel {
                KernelSlots::Multiplicative { log_tau, log_beta } => KernelVars::Multiplicative {
                    log_tau: v[log_tau],
                    log_beta: v[log_beta],
                },
                KernelSlots::Additive { gamma } => KernelVars::Additive { gamma: v[gamma] },
            },
        }
    }

    /// Encodes `x` (`[L, F]`, a tape variable) for a series in `country`.
    pub fn encode(&self, tape: &mut Tape, v: &[Var], x: Var, country: usize) -> Result<Encoded> {
        let l = tape.shape(x)[0];
        let emb = tape.slice_rows(v[self.layout.country_emb], country, 1)?;
        let ones = tape.constant(Tensor::full(&[l, 1], 1.0));
        let emb_rows = tape.matmul(ones, emb)?;
        let xin = tape.concat_cols(&[x, emb_rows])?;

        let bank = MsTcnVars {
            branches: self.layout.branches.iter().map(|&(k, b)| (v[k], v[b])).collect(),
            projection: (v[self.layout.projection.0], v[self.layout.projection.1]),
            activation: self.config.mstcn.activation,
        };
        let conv = ms_tcn_forward(tape, xin, &bank)?;

        let cell = self.cell_vars(v);
        let inputs = cell.project_inputs(tape, conv)?;
        let mut hidden = Vec::with_capacity(l);
        let mut h = None;
        for t in 0..l {
            let step = cell.step_projected(tape, &inputs, t, h)?;
            hidden.push(step.h);
            h = Some(step.h);
        }
        let last = *hidden.last().unwrap();
        let (pooled, attention) = if l >= 2 {
            let states = tape.concat_rows(&hidden)?;
            let out = attend(tape, states, &self.attention_vars(v))?;
            (out.pooled, Some(out.weights))
        } else {
            (v[self.layout.init_context], None)
        };
        let context = tape.concat_cols(&[pooled, last])?;
        Ok(Encoded {
            conv,
            hidden,
            context,
            attention,
        })
    }

    fn horizon_slot(&self, h: usize) -> Result<usize> {
        self.config
            .horizons
            .iter()
            .position(|&x| x == h)
            .ok_or(Error::UnknownHorizon(h))
    }

    fn head(&self, tape: &mut Tape, v: &[Var], context: Var, h: usize) -> Result<Var> {
        let e = tape.slice_rows(v[self.layout.horizon_emb], self.horizon_slot(h)?, 1)?;
        let inp = tape.concat_cols(&[context, e])?;
        let [w1, b1, w2, b2] = self.layout.head.map(|s| v[s]);
        let a = tape.matmul(inp, w1)?;
        let a = tape.add_bias(a, b1)?;
        let hid = tape.tanh(a);
        let y = tape.matmul(hid, w2)?;
        tape.add_bias(y, b2)
    }

    /// Policy log-probabilities `[1, K]` for a context.
    pub fn policy_log_probs(&self, tape: &mut Tape, v: &[Var], context: Var) -> Result<Var> {
        let (w, b) = self.layout.policy;
        let logits = tape.matmul(context, v[w])?;
        let logits = tape.add_bias(logits, v[b])?;
        Ok(tape.log_softmax(logits))
    }

    /// Full forward pass for one window with features `x` (`[L, F]`),
    /// which may differ from `window.x` (perturbed inputs).
    pub fn forward_features(&self, tape: &mut Tape, v: &[Var], window: &WindowSample, x: &Tensor) -> Result<WindowForward> {
        let xv = tape.constant(x.clone());
        let enc = self.encode(tape, v, xv, window.country)?;
        let log_policy = self.policy_log_probs(tape, v, enc.context)?;
        match self.config.decode {
            DecodeStrategy::Direct => {
                let preds = self
                    .config
                    .horizons
                    .iter()
                    .map(|&h| self.head(tape, v, enc.context, h))
                    .collect::<Result<Vec<_>>>()?;
                Ok(WindowForward {
                    path: preds.clone(),
                    preds,
                    context: enc.context,
                    log_policy,
                })
            }
            DecodeStrategy::Recursive => {
                let max_h = self.config.max_horizon();
                if window.future.shape()[0] < max_h {
                    return Err(Error::InvalidData("window lacks future covariates".into()));
                }
                let l = x.shape()[0];
                let f = x.shape()[1];
                let mut path = Vec::with_capacity(max_h);
                let mut preds = Vec::with_capacity(self.config.horizons.len());
                let mut cur = xv;
                let mut ctx = enc.context;
                for k in 1..=max_h {
                    let y = self.head(tape, v, ctx, 1)?;
                    path.push(y);
                    if self.config.horizons.contains(&k) {
                        preds.push(y);
                    }
                    if k == max_h {
                        break;
                    }
                    let known = &window.future.data()[(k - 1) * f + 1..k * f];
                    let known = tape.constant(Tensor::row(known.to_vec()));
                    let row = tape.concat_cols(&[y, known])?;
                    cur = if l > 1 {
                        let keep = tape.slice_rows(cur, 1, l - 1)?;
                        tape.concat_rows(&[keep, row])?
                    } else {
                        row
                    };
                    ctx = self.encode(tape, v, cur, window.country)?.context;
                }
                Ok(WindowForward {
                    preds,
                    path,
                    context: enc.context,
                    log_policy,
                })
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, v: &[Var], window: &WindowSample) -> Result<WindowForward> {
        self.check_window(window)?;
        self.forward_features(tape, v, window, &window.x)
    }

    fn check_window(&self, window: &WindowSample) -> Result<()> {
        let shape = window.x.shape();
        if shape[1] != self.config.n_features {
            return Err(Error::ShapeMismatch {
                op: "forecast",
                left: vec![self.config.lookback, self.config.n_features],
                right: shape.to_vec(),
            });
        }
        if window.country >= self.config.n_countries {
            return Err(Error::InvalidData(format!(
                "country code {} outside embedding table of {}",
                window.country, self.config.n_countries
            )));
        }
        Ok(())
    }

    /// Scaled predictions for each of the window's horizons.
    pub fn forecast_scaled(&self, window: &WindowSample) -> Result<Vec<f64>> {
        for &h in &window.horizons {
            self.horizon_slot(h)?;
        }
        let mut tape = Tape::new();
        let v = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &v, window)?;
        window
            .horizons
            .iter()
            .map(|&h| Ok(tape.value(out.preds[self.horizon_slot(h)?]).item()))
            .collect()
    }

    /// Predictions for the window's horizons in original units.
    pub fn forecast(&self, window: &WindowSample, scaling: &FeatureScaling) -> Result<Vec<f64>> {
        Ok(self
            .forecast_scaled(window)?
            .into_iter()
            .map(|z| scaling.unscale_target(z))
            .collect())
    }
}

/// Input width the model expects: one feature row plus country embedding.
pub fn input_width(config: &ModelConfig) -> usize {
    config.n_features + config.country_dim
}
