use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{feature, WindowSample};
use crate::error::{Error, Result};
use crate::model::{glorot_bound, ParamSet};
use crate::numerics::{Tape, Tensor, Var};
use crate::training::{adam_step, batch_indices, derive_seed, OptimizerState, TrainConfig};

/// GRU weights on a tape: `w_*` are `[F, D]`, `u_*` are `[D, D]`, `b_*` are
/// `[D]` for the update (`z`), reset (`r`) and candidate (`h`) maps.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

/// `h_t = (1 - z) * h_prev + z * tanh(x W_h + (r * h_prev) U_h + b_h)` with
/// sigmoid gates `z`, `r`. `x` is `[1, F]`, `h_prev` is `[1, D]`.
pub fn gru_cell_step(tape: &mut Tape, x: Var, h_prev: Var, p: &GruVars) -> Result<Var> {
    let affine = |w: Var, u: Var, b: Var, h: Var, tape: &mut Tape| -> Result<Var> {
        let a = tape.matmul(x, w)?;
        let c = tape.matmul(h, u)?;
        let s = tape.add(a, c)?;
        tape.add_bias(s, b)
    };
    let z_pre = affine(p.w_z, p.u_z, p.b_z, h_prev, tape)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = affine(p.w_r, p.u_r, p.b_r, h_prev, tape)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h_prev)?;
    let cand_pre = affine(p.w_h, p.u_h, p.b_h, rh, tape)?;
    let cand = tape.tanh(cand_pre);
    let diff = tape.sub(cand, h_prev)?;
    let step = tape.mul(z, diff)?;
    tape.add(h_prev, step)
}

impl GruVars {
    /// Binds the first nine variables in `z, r, h` order, each as `w, u, b`.
    pub fn from_slice(v: &[Var]) -> Self {
        GruVars {
            w_z: v[0],
            u_z: v[1],
            b_z: v[2],
            w_r: v[3],
            u_r: v[4],
            b_r: v[5],
            w_h: v[6],
            u_h: v[7],
            b_h: v[8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GruConfig {
    pub hidden: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for GruConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            iterations: 300,
            batch_size: 32,
            learning_rate: 0.005,
        }
    }
}

/// GRU encoder over the window features with a linear head emitting one
/// scaled forecast per horizon.
#[derive(Clone, Debug)]
pub struct VanillaGru {
    pub params: ParamSet,
    hidden: usize,
}

impl VanillaGru {
    pub fn init(hidden: usize, n_out: usize, seed: u64) -> Self {
        let f = feature::COUNT;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |r: usize, c: usize| {
            let b = glorot_bound(r, c);
            Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-b..b)).collect()).expect("shape")
        };
        let mut params = ParamSet::new();
        for gate in ["z", "r", "h"] {
            params.push(format!("gru.w_{gate}"), glorot(f, hidden));
            params.push(format!("gru.u_{gate}"), glorot(hidden, hidden));
            params.push(format!("gru.b_{gate}"), Tensor::zeros(&[hidden]));
        }
        params.push("head.w", glorot(hidden, n_out));
        params.push("head.b", Tensor::zeros(&[n_out]));
        Self { params, hidden }
    }

    fn forward(&self, tape: &mut Tape, vars: &[Var], x: &Tensor) -> Result<Var> {
        let g = GruVars::from_slice(vars);
        let xs = tape.constant(x.clone());
        let mut h = tape.constant(Tensor::zeros(&[1, self.hidden]));
        for t in 0..x.shape()[0] {
            let xt = tape.slice_rows(xs, t, 1)?;
            h = gru_cell_step(tape, xt, h, &g)?;
        }
        let out = tape.matmul(h, vars[9])?;
        tape.add_bias(out, vars[10])
    }

    pub fn predict_scaled(&self, w: &WindowSample) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, &w.x)?;
        Ok(tape.value(out).data().to_vec())
    }

    fn window_grad(&self, w: &WindowSample) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, &w.x)?;
        let target = tape.constant(Tensor::row(w.targets.clone()));
        let d = tape.sub(out, target)?;
        let sq = tape.square(d);
        let loss = tape.mean(sq);
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).item(), vars.iter().map(|v| grads.wrt(*v)).collect()))
    }

    /// Adam on mean squared error in scaled space.
    pub fn fit(cfg: &GruConfig, train: &[WindowSample], seed: u64) -> Result<Self> {
        if cfg.hidden == 0 || cfg.batch_size == 0 {
            return Err(Error::InvalidConfig("vanilla_gru needs hidden >= 1 and batch_size >= 1".into()));
        }
        let first = train
            .first()
            .ok_or_else(|| Error::InvalidData("vanilla_gru needs training windows".into()))?;
        let mut model = Self::init(cfg.hidden, first.horizons.len(), derive_seed(&[seed, 0x0067_7275]));
        let tc = TrainConfig {
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            ..TrainConfig::default()
        };
        tc.validate()?;
        let mut opt = OptimizerState::new(&model.params);
        let batch_seed = derive_seed(&[seed, 0x0067_7276]);
        for it in 0..cfg.iterations {
            let idx = batch_indices(batch_seed, it, cfg.batch_size, train.len());
            let per = idx
                .par_iter()
                .map(|&i| model.window_grad(&train[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = model.params.zeros_like();
            let mut loss = 0.0;
            for (l, g) in &per {
                loss += l;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    acc.data_mut().iter_mut().zip(gi.data()).for_each(|(a, b)| *a += b);
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(it + 1));
            }
            let k = 1.0 / per.len() as f64;
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= k));
            adam_step(&mut model.params, &mut grads, &mut opt, &tc)?;
        }
        Ok(model)
    }
}
