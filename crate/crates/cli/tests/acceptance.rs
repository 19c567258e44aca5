//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempora_core::baselines::{fit_predict, seasonal_naive, BaselineSpec};
use tempora_core::dataset::{
    build_window, make_splits, split_counts, synth_generate, SeriesPanel, SplitSpec, Splits, SynthParams, TargetMode,
    WindowConfig, WindowSample,
};
use tempora_core::evaluation::{
    cpoi, dm_test, mae, mase, rmse, smape_records, theil_u2, CpoiParams, DmLoss, ForecastRecord, ForecastSet,
    ScaleContext,
};
use tempora_core::model::{
    attend, attention_weights, AttentionVars, HybridForecaster, KernelVars, ModelConfig, MsTcnConfig, TimeKernel,
};
use tempora_core::numerics::{finite_difference_check_many, Tape, Tensor, Unary, Var};
use tempora_core::objectives::{
    base_objective, batch_objective, entropy, entropy_bonus, rl_policy_loss, total_loss, LossConfig, LossParts,
    WindowPlan,
};
use tempora_core::training::{train, validation_loss, TrainConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn sum_of_squares(tape: &mut Tape, v: Var) -> Var {
    let sq = tape.square(v);
    tape.sum(sq)
}

// Gradient fidelity

fn toy_model_config() -> ModelConfig {
    ModelConfig {
        lookback: 4,
        horizons: vec![1, 2],
        n_countries: 3,
        mstcn: MsTcnConfig {
            branch_channels: 2,
            projection_width: 3,
            ..MsTcnConfig::default()
        },
        hidden: 3,
        d_k: 2,
        d_v: 3,
        horizon_dim: 2,
        head_hidden: 3,
        policy_actions: 3,
        ..ModelConfig::default()
    }
}

fn toy_windows(cfg: &ModelConfig, n: usize) -> Vec<WindowSample> {
    let panel = synth_generate(11, 3, 40, &SynthParams::default()).unwrap();
    let spec = SplitSpec::from_fractions(&panel, 0.6, 0.2).unwrap();
    let wc = WindowConfig {
        lookback: cfg.lookback,
        horizons: cfg.horizons.clone(),
        mode: TargetMode::Demand,
    };
    make_splits(&panel, &spec, &wc).unwrap().train.into_iter().step_by(5).take(n).collect()
}

fn primitive_errors(rng: &mut ChaCha8Rng, eps: f64) -> Result<Vec<(&'static str, f64)>, String> {
    type Prim = Box<dyn Fn(&mut Tape, &[Var]) -> tempora_core::Result<Var>>;
    let a23 = rand_tensor(rng, &[2, 3], -1.0, 1.0);
    let b23 = rand_tensor(rng, &[2, 3], -1.0, 1.0);
    let b34 = rand_tensor(rng, &[3, 4], -1.0, 1.0);
    let bias3 = rand_tensor(rng, &[3], -1.0, 1.0);
    let pos23 = rand_tensor(rng, &[2, 3], 0.5, 2.0);
    let x53 = rand_tensor(rng, &[5, 3], -1.0, 1.0);
    let k332 = rand_tensor(rng, &[3, 3, 2], -1.0, 1.0);
    let bias2 = rand_tensor(rng, &[2], -1.0, 1.0);
    let row5 = rand_tensor(rng, &[1, 5], -2.0, 2.0);
    let away_from_zero = a23.map(|v| if v.abs() < 0.1 { v + 0.3 } else { v });

    let cases: Vec<(&'static str, Prim, Vec<Tensor>)> = vec![
        ("matmul", Box::new(|t, v| { let y = t.matmul(v[0], v[1])?; Ok(sum_of_squares(t, y)) }), vec![a23.clone(), b34.clone()]),
        ("add", Box::new(|t, v| { let y = t.add(v[0], v[1])?; Ok(sum_of_squares(t, y)) }), vec![a23.clone(), b23.clone()]),
        ("sub", Box::new(|t, v| { let y = t.sub(v[0], v[1])?; Ok(sum_of_squares(t, y)) }), vec![a23.clone(), b23.clone()]),
        ("mul", Box::new(|t, v| { let y = t.mul(v[0], v[1])?; Ok(sum_of_squares(t, y)) }), vec![a23.clone(), b23.clone()]),
        ("add_bias", Box::new(|t, v| { let y = t.add_bias(v[0], v[1])?; Ok(sum_of_squares(t, y)) }), vec![a23.clone(), bias3.clone()]),
        ("scale", Box::new(|t, v| { let y = t.scale(v[0], -1.7); Ok(sum_of_squares(t, y)) }), vec![a23.clone()]),
        ("add_scalar", Box::new(|t, v| { let y = t.add_scalar(v[0], 0.4); Ok(sum_of_squares(t, y)) }), vec![a23.clone()]),
        ("sigmoid", Box::new(|t, v| { let y = t.sigmoid(v[0]); Ok(sum_of_squares(t, y)) }), vec![a23.clone()]),
        ("tanh", Box::new(|t, v| { let y = t.tanh(v[0]); Ok(sum_of_squares(t, y)) }), vec![a23.clone()]),
        ("relu", Box::new(|t, v| { let y = t.unary(v[0], Unary::Relu)?; Ok(sum_of_squares(t, y)) }), vec![away_from_zero]),
        ("exp", Box::new(|t, v| { let y = t.exp(v[0]); Ok(sum_of_squares(t, y)) }), vec![a23.clone()]),
        ("log", Box::new(|t, v| { let y = t.log(v[0])?; Ok(sum_of_squares(t, y)) }), vec![pos23]),
        ("square", Box::new(|t, v| { let y = t.square(v[0]); Ok(t.sum(y)) }), vec![a23.clone()]),
        ("softmax", Box::new(|t, v| { let y = t.softmax(v[0]); let w = t.mul(y, v[1])?; Ok(t.sum(w)) }), vec![row5.clone(), rand_tensor(rng, &[1, 5], -1.0, 1.0)]),
        ("log_softmax", Box::new(|t, v| { let y = t.log_softmax(v[0]); let w = t.mul(y, v[1])?; Ok(t.sum(w)) }), vec![row5.clone(), rand_tensor(rng, &[1, 5], -1.0, 1.0)]),
        ("conv1d_causal", Box::new(|t, v| { let y = t.conv1d_causal(v[0], v[1], v[2])?; Ok(sum_of_squares(t, y)) }), vec![x53.clone(), k332, bias2]),
        ("concat_cols", Box::new(|t, v| { let y = t.concat_cols(&[v[0], v[1]])?; let w = t.mul(y, y)?; let z = t.mul(w, y)?; Ok(t.sum(z)) }), vec![a23.clone(), b23.clone()]),
        ("concat_rows", Box::new(|t, v| { let y = t.concat_rows(&[v[0], v[1]])?; let z = t.tanh(y); Ok(sum_of_squares(t, z)) }), vec![a23.clone(), x53.clone()]),
        ("slice_rows", Box::new(|t, v| { let y = t.slice_rows(v[0], 1, 3)?; let z = t.tanh(y); Ok(sum_of_squares(t, z)) }), vec![x53.clone()]),
        ("gather", Box::new(|t, v| { let y = t.gather(v[0], &[4, 0, 4, 2])?; Ok(sum_of_squares(t, y)) }), vec![a23.clone()]),
        ("transpose", Box::new(|t, v| { let y = t.transpose(v[0])?; let z = t.matmul(y, v[1])?; Ok(sum_of_squares(t, z)) }), vec![a23.clone(), rand_tensor(rng, &[2, 4], -1.0, 1.0)]),
        ("sum", Box::new(|t, v| { let y = t.sum(v[0]); Ok(sum_of_squares(t, y)) }), vec![a23.clone()]),
        ("mean", Box::new(|t, v| { let y = t.mean(v[0]); Ok(sum_of_squares(t, y)) }), vec![a23.clone()]),
        ("reshape", Box::new(|t, v| { let y = t.reshape(v[0], &[3, 2])?; let z = t.matmul(y, v[1])?; Ok(sum_of_squares(t, z)) }), vec![a23.clone(), b23.clone()]),
    ];
    cases
        .into_iter()
        .map(|(name, f, xs)| finite_difference_check_many(|t, v| f(t, v), &xs, eps).map(|e| (name, e)).map_err(fail))
        .collect()
}

/// Central differences of the full batch objective over every parameter.
fn full_loss_error(eps: f64) -> Result<f64, String> {
    let cfg = toy_model_config();
    let model = HybridForecaster::init(cfg.clone(), 5).map_err(fail)?;
    let windows = toy_windows(&cfg, 3);
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let plans: Vec<WindowPlan> = windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let d = rand_tensor(&mut rng, w.x.shape(), -1.0, 1.0);
            let norm = d.norm_sq().sqrt();
            WindowPlan {
                action: i % 3,
                advantage: [0.7, -1.3, 0.4][i % 3],
                direction: Some(d.map(|v| v / norm)),
            }
        })
        .collect();
    let loss = LossConfig {
        flat: 0.0,
        l2: 1e-2,
        input_grad: 0.5,
        smooth: 0.3,
        rl: 0.5,
        entropy: -0.2,
        ..LossConfig::default()
    };
    let analytic = base_objective(&model, &refs, &plans, &loss).map_err(fail)?;
    let value = |params: tempora_core::model::ParamSet| -> Result<f64, String> {
        let m = HybridForecaster::from_params(cfg.clone(), params).map_err(fail)?;
        Ok(base_objective(&m, &refs, &plans, &loss).map_err(fail)?.total)
    };
    let mut worst: f64 = 0.0;
    for slot in 0..model.params().len() {
        for i in 0..model.params().get(slot).len() {
            let mut plus = model.params().clone();
            plus.get_mut(slot).data_mut()[i] += eps;
            let mut minus = model.params().clone();
            minus.get_mut(slot).data_mut()[i] -= eps;
            let numeric = (value(plus)? - value(minus)?) / (2.0 * eps);
            let a = analytic.grads[slot].data()[i];
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}

fn criterion_gradients() -> Check {
    let eps = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let prims = primitive_errors(&mut rng, eps)?;
    let (worst_name, worst_prim) = prims.iter().fold(("", 0.0f64), |acc, &(n, e)| if e > acc.1 { (n, e) } else { acc });
    ensure(worst_prim < 1e-4, || format!("primitive {worst_name} relative error {worst_prim:.2e}"))?;
    let full = full_loss_error(eps)?;
    ensure(full < 1e-4, || format!("full loss relative error {full:.2e}"))?;
    Ok(format!("{} primitives max {worst_prim:.1e}; full loss max {full:.1e}", prims.len()))
}

// Attention contracts

fn plain_softmax_attention(q: &[f64], keys: &[Vec<f64>]) -> Vec<f64> {
    let d = q.len() as f64;
    let s: Vec<f64> = keys.iter().map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / d.sqrt()).collect();
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn criterion_attention() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_sum: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.random_range(1..40);
        let d = rng.random_range(1..9);
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let keys: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let kernel = match i % 4 {
            0 => TimeKernel::Multiplicative {
                tau: Some(rng.random_range(0.5..30.0)),
                beta_week: rng.random_range(0.0..2.0),
            },
            1 => TimeKernel::Multiplicative {
                tau: None,
                beta_week: rng.random_range(0.0..2.0),
            },
            2 => TimeKernel::Table((0..n).map(|_| rng.random_range(0.01..3.0)).collect()),
            _ => TimeKernel::Additive {
                gamma: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            },
        };
        let w = attention_weights(&q, &keys, &kernel).map_err(fail)?;
        ensure(w.len() == n, || format!("{} weights for {n} earlier positions", w.len()))?;
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());

        let plain = plain_softmax_attention(&q, &keys);
        for k in [
            TimeKernel::Table(vec![1.0; n]),
            TimeKernel::Additive { gamma: vec![0.0; n] },
            TimeKernel::Multiplicative {
                tau: None,
                beta_week: 0.0,
            },
        ] {
            let w = attention_weights(&q, &keys, &k).map_err(fail)?;
            for (a, b) in w.iter().zip(&plain) {
                worst_identity = worst_identity.max((a - b).abs());
            }
        }
    }
    ensure(worst_sum <= 1e-12, || format!("weights sum off by {worst_sum:.2e}"))?;
    ensure(worst_identity <= 1e-12, || format!("identity kernel differs by {worst_identity:.2e}"))?;

    // Tape attention: weights cover exactly the earlier rows and sum to 1.
    let mut tape_worst: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.random_range(2..30);
        let (dh, dk, dv) = (3, 2, 4);
        let mut tape = Tape::new();
        let states = tape.leaf(rand_tensor(&mut rng, &[t, dh], -1.0, 1.0));
        let p = AttentionVars {
            wq: tape.leaf(rand_tensor(&mut rng, &[dh, dk], -1.0, 1.0)),
            wk: tape.leaf(rand_tensor(&mut rng, &[dh, dk], -1.0, 1.0)),
            wv: tape.leaf(rand_tensor(&mut rng, &[dh, dv], -1.0, 1.0)),
            kernel: KernelVars::Multiplicative {
                log_tau: tape.leaf(Tensor::new(vec![1, 1], vec![rng.random_range(0.0..3.0)]).unwrap()),
                log_beta: tape.leaf(Tensor::new(vec![1, 1], vec![rng.random_range(-3.0..0.5)]).unwrap()),
            },
        };
        let out = attend(&mut tape, states, &p).map_err(fail)?;
        ensure(tape.shape(out.weights) == [1, t - 1], || "tape weights do not cover exactly the earlier rows".into())?;
        tape_worst = tape_worst.max((tape.value(out.weights).sum() - 1.0).abs());
    }
    ensure(tape_worst <= 1e-12, || format!("tape weights sum off by {tape_worst:.2e}"))?;

    // Encoder causality: perturbing step p leaves every earlier state unchanged.
    let cfg = toy_model_config();
    let cfg = ModelConfig { lookback: 12, ..cfg };
    let model = HybridForecaster::init(cfg.clone(), 3).map_err(fail)?;
    let w = &toy_windows(&cfg, 1)[0];
    let states = |x: &Tensor| -> Result<Vec<Tensor>, String> {
        let mut tape = Tape::new();
        let v = model.params().bind(&mut tape);
        let xv = tape.constant(x.clone());
        let enc = model.encode(&mut tape, &v, xv, w.country).map_err(fail)?;
        Ok(enc.hidden.iter().map(|h| tape.value(*h).clone()).collect())
    };
    let base = states(&w.x)?;
    let f = w.x.shape()[1];
    for p in 0..cfg.lookback {
        let mut x = w.x.clone();
        x.data_mut()[p * f..(p + 1) * f].iter_mut().for_each(|v| *v += 2.0);
        let moved = states(&x)?;
        ensure(base[..p] == moved[..p], || format!("step {p} perturbation reached an earlier state"))?;
    }
    Ok(format!(
        "1000 configs sum err {worst_sum:.1e}; identity err {worst_identity:.1e}; causal over {} steps",
        cfg.lookback
    ))
}

// Overfit

fn criterion_overfit() -> Check {
    let params = SynthParams {
        noise: 0.0,
        ..SynthParams::default()
    };
    let panel = synth_generate(42, 1, 50, &params).map_err(fail)?;
    let spec = SplitSpec {
        train_end: panel.date(43),
        val_end: panel.date(46),
        test_end: panel.date(49),
    };
    let mc = ModelConfig::default();
    let wc = WindowConfig {
        lookback: mc.lookback,
        horizons: mc.horizons.clone(),
        mode: TargetMode::Demand,
    };
    let s = make_splits(&panel, &spec, &wc).map_err(fail)?;
    let cfg = TrainConfig {
        learning_rate: 0.005,
        max_iterations: 1200,
        batch_size: s.train.len(),
        patience: usize::MAX,
        seed: 42,
        ..TrainConfig::default()
    };
    let model = HybridForecaster::init(mc.clone(), 42).map_err(fail)?;
    let out = train(model, &s.train, &s.val, &s.scaling, &LossConfig::default(), &cfg, None).map_err(fail)?;
    let last = HybridForecaster::from_params(mc, out.state.params.clone()).map_err(fail)?;
    let mse = validation_loss(&last, &s.train, usize::MAX).map_err(fail)?;
    ensure(out.history.len() == 1200, || format!("ran {} iterations", out.history.len()))?;
    ensure(mse < 1e-3, || format!("train MSE {mse:.3e}"))?;
    Ok(format!("train MSE {mse:.2e} after 1200 iterations on {} windows", s.train.len()))
}

// Leakage

fn window_bytes(w: &WindowSample) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend((w.sku as u64).to_le_bytes());
    b.extend((w.origin as u64).to_le_bytes());
    b.extend((w.country as u64).to_le_bytes());
    for v in w.x.data().iter().chain(w.future.data()).chain(&w.targets).chain(&w.targets_raw).chain(&w.history_raw) {
        b.extend(v.to_le_bytes());
    }
    b
}

fn oracle_counts(n_days: usize, l: usize, max_h: usize, (a, b, c): (usize, usize, usize)) -> [usize; 3] {
    let mut out = [0; 3];
    let mut t = l - 1;
    while t + max_h < n_days {
        let last = t + max_h;
        if last <= a {
            out[0] += 1;
        } else if last <= b {
            out[1] += 1;
        } else if last <= c {
            out[2] += 1;
        }
        t += 1;
    }
    out
}

fn criterion_leakage() -> Check {
    let panel = synth_generate(4, 3, 120, &SynthParams::default()).map_err(fail)?;
    let spec = SplitSpec::from_fractions(&panel, 0.6, 0.2).map_err(fail)?;
    let wc = WindowConfig {
        lookback: 28,
        horizons: vec![1, 7, 14],
        mode: TargetMode::Demand,
    };
    let before = make_splits(&panel, &spec, &wc).map_err(fail)?;
    let cutoff = before.bounds.0;
    let mut permuted = panel.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for row in permuted.demand.iter_mut() {
        row[cutoff + 1..].shuffle(&mut rng);
    }
    ensure(permuted.demand != panel.demand, || "permutation changed nothing".into())?;
    let after = make_splits(&permuted, &spec, &wc).map_err(fail)?;
    let bytes = |s: &Splits| s.train.iter().flat_map(window_bytes).collect::<Vec<u8>>();
    ensure(bytes(&before) == bytes(&after), || "a training window changed".into())?;
    ensure(
        before.test.iter().map(window_bytes).ne(after.test.iter().map(window_bytes)),
        || "test windows did not see the permutation".into(),
    )?;

    let n = 60;
    let one = synth_generate(5, 1, n, &SynthParams::default()).map_err(fail)?;
    let mut triples = 0;
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let bounds = (a, b, c);
                let expect = oracle_counts(n, wc.lookback, 14, bounds);
                let counted = split_counts(1, n, &wc, bounds);
                ensure(counted == expect, || format!("counts {counted:?} != oracle {expect:?} at {bounds:?}"))?;
                let spec = SplitSpec {
                    train_end: one.date(a),
                    val_end: one.date(b),
                    test_end: one.date(c),
                };
                match make_splits(&one, &spec, &wc) {
                    Ok(s) => {
                        let got = [s.train.len(), s.val.len(), s.test.len()];
                        ensure(got == expect, || format!("windows {got:?} != oracle {expect:?} at {bounds:?}"))?;
                        let last = |w: &WindowSample| w.origin + 14;
                        ensure(
                            s.train.iter().all(|w| last(w) <= a)
                                && s.val.iter().all(|w| last(w) > a && last(w) <= b)
                                && s.test.iter().all(|w| last(w) > b && last(w) <= c),
                            || format!("window outside its split at {bounds:?}"),
                        )?;
                    }
                    Err(tempora_core::Error::EmptySplit { train, val, test }) => {
                        ensure(expect.contains(&0) && [train, val, test] == expect, || {
                            format!("empty-split report {:?} vs oracle {expect:?}", [train, val, test])
                        })?;
                    }
                    Err(e) => return Err(e.to_string()),
                }
                triples += 1;
            }
        }
    }
    Ok(format!(
        "{} training windows unchanged; {triples} split triples match the oracle",
        before.train.len()
    ))
}

// Metric oracles

fn random_set(rng: &mut ChaCha8Rng, panel: &SeriesPanel, label: &str) -> ForecastSet {
    let mut records = Vec::new();
    for (k, id) in panel.sku_ids.iter().enumerate() {
        for origin in 20..panel.n_days() - 14 {
            for h in [1, 7, 14] {
                if rng.random_bool(0.3) {
                    let y = panel.demand[k][origin + h];
                    let yhat = if rng.random_bool(0.1) { 0.0 } else { (y + rng.random_range(-15.0..15.0)).max(0.0) };
                    records.push(ForecastRecord {
                        sku: id.clone(),
                        origin: panel.date(origin),
                        h,
                        yhat,
                        y,
                    });
                }
            }
        }
    }
    ForecastSet::new(label, TargetMode::Demand, records).unwrap()
}

struct Oracle<'a> {
    panel: &'a SeriesPanel,
    train_end: usize,
    season: usize,
}

impl Oracle<'_> {
    fn series(&self, sku: &str) -> &[f64] {
        &self.panel.demand[self.panel.sku_index(sku).unwrap()]
    }

    fn scale(&self, sku: &str) -> f64 {
        let y = self.series(sku);
        let m = self.season;
        let mut total = 0.0;
        let mut count = 0.0;
        for t in m..=self.train_end {
            total += (y[t] - y[t - m]).abs();
            count += 1.0;
        }
        total / count
    }

    fn grouped<'r>(rs: &[&'r ForecastRecord]) -> BTreeMap<String, Vec<&'r ForecastRecord>> {
        let mut g: BTreeMap<String, Vec<&ForecastRecord>> = BTreeMap::new();
        for r in rs {
            g.entry(r.sku.clone()).or_default().push(r);
        }
        g
    }

    fn mase(&self, rs: &[&ForecastRecord]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (sku, g) in Self::grouped(rs) {
            let s = self.scale(&sku);
            if s == 0.0 {
                continue;
            }
            let m: f64 = g.iter().map(|r| (r.yhat - r.y).abs()).sum::<f64>() / g.len() as f64;
            num += g.len() as f64 * (m / s);
            den += g.len() as f64;
        }
        num / den
    }

    fn theil(&self, rs: &[&ForecastRecord]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (sku, g) in Self::grouped(rs) {
            let y = self.series(&sku);
            let mut e = 0.0;
            let mut nv = 0.0;
            for r in &g {
                let day = (r.origin - self.panel.start).num_days() as usize + r.h;
                e += (r.yhat - r.y) * (r.yhat - r.y);
                nv += (y[day - 1] - r.y) * (y[day - 1] - r.y);
            }
            if nv == 0.0 {
                continue;
            }
            num += g.len() as f64 * (e / nv).sqrt();
            den += g.len() as f64;
        }
        num / den
    }
}

fn criterion_metrics() -> Check {
    let mut panel = synth_generate(6, 5, 90, &SynthParams::default()).map_err(fail)?;
    panel.demand[2].iter_mut().for_each(|v| *v = 4.0);
    let train_end = 50;
    let ctx = ScaleContext::from_panel(&panel, TargetMode::Demand, train_end, 7).map_err(fail)?;
    let oracle = Oracle {
        panel: &panel,
        train_end,
        season: 7,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let fs = random_set(&mut rng, &panel, &format!("r{i}"));
        for h in [Some(1), Some(7), Some(14), None] {
            let rs = fs.at(h);
            let n = rs.len() as f64;
            let mae_o = rs.iter().map(|r| (r.yhat - r.y).abs()).sum::<f64>() / n;
            let rmse_o = (rs.iter().map(|r| (r.yhat - r.y) * (r.yhat - r.y)).sum::<f64>() / n).sqrt();
            let smape_o = rs
                .iter()
                .map(|r| {
                    let d = r.yhat.abs() + r.y.abs();
                    if d == 0.0 {
                        0.0
                    } else {
                        200.0 * (r.yhat - r.y).abs() / d
                    }
                })
                .sum::<f64>()
                / n;
            let m = mase(&rs, &ctx).map_err(fail)?;
            let u = theil_u2(&rs, &ctx).map_err(fail)?;
            ensure(m.excluded == 1 && u.excluded == 1, || "flat series was not excluded".into())?;
            for (got, want) in [
                (mae(&rs).map_err(fail)?, mae_o),
                (rmse(&rs).map_err(fail)?, rmse_o),
                (smape_records(&rs).map_err(fail)?, smape_o),
                (m.value, oracle.mase(&rs)),
                (u.value, oracle.theil(&rs)),
            ] {
                worst = worst.max((got - want).abs());
            }
        }
    }
    ensure(worst <= 1e-10, || format!("metric differs from its definition by {worst:.2e}"))?;

    let panel = synth_generate(8, 4, 90, &SynthParams::default()).map_err(fail)?;
    let ctx = ScaleContext::from_panel(&panel, TargetMode::Demand, train_end, 7).map_err(fail)?;
    let scaling = tempora_core::dataset::FeatureScaling::fit(&panel, TargetMode::Demand, train_end);
    let wc = WindowConfig {
        lookback: 7,
        horizons: vec![1],
        mode: TargetMode::Demand,
    };
    let windows: Vec<WindowSample> = (6..train_end)
        .flat_map(|t| (0..panel.n_skus()).map(move |k| (k, t)))
        .map(|(k, t)| build_window(&panel, &scaling, &wc, k, t))
        .collect::<tempora_core::Result<_>>()
        .map_err(fail)?;
    let sn = ForecastSet::from_windows("sn", &panel, TargetMode::Demand, &windows, |w| seasonal_naive(w, 7))
        .map_err(fail)?;
    let sn_mase = mase(&sn.at(None), &ctx).map_err(fail)?.value;
    ensure((sn_mase - 1.0).abs() <= 1e-12, || format!("in-sample seasonal-naive MASE {sn_mase}"))?;

    let naive_records: Vec<ForecastRecord> = panel
        .sku_ids
        .iter()
        .enumerate()
        .flat_map(|(k, id)| {
            let panel = &panel;
            (10..panel.n_days() - 7).map(move |t| ForecastRecord {
                sku: id.clone(),
                origin: panel.date(t),
                h: 7,
                yhat: panel.demand[k][t + 6],
                y: panel.demand[k][t + 7],
            })
        })
        .collect();
    let naive = ForecastSet::new("naive", TargetMode::Demand, naive_records).map_err(fail)?;
    let u = theil_u2(&naive.at(None), &ctx).map_err(fail)?.value;
    ensure((u - 1.0).abs() <= 1e-12, || format!("naive Theil U2 {u}"))?;
    Ok(format!("100 sets max err {worst:.1e}; seasonal MASE {sn_mase}; naive U2 {u}"))
}

// Diebold-Mariano

fn dm_oracle(d: &[f64], h: usize) -> (f64, f64) {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let mut lrv = 0.0;
    for k in 0..h {
        let mut g = 0.0;
        for t in k..d.len() {
            g += (d[t] - mean) * (d[t - k] - mean);
        }
        g /= n;
        lrv += if k == 0 { g } else { 2.0 * (1.0 - k as f64 / h as f64) * g };
    }
    let stat = mean / (lrv / n).sqrt();
    let p = statrs::function::erf::erfc(stat.abs() / std::f64::consts::SQRT_2);
    (stat, p)
}

fn criterion_dm() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let start = chrono::NaiveDate::from_ymd_opt(2011, 1, 1).unwrap();
    let h = 7;
    let n = 200;
    let mut ra = Vec::new();
    let mut rb = Vec::new();
    let mut d = Vec::new();
    for t in 0..n {
        let y: f64 = rng.random_range(10.0..50.0);
        let sign = |r: &mut ChaCha8Rng| if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let ea = sign(&mut rng) * rng.random_range(0.0..1.0);
        let eb = sign(&mut rng) * rng.random_range(1.0..2.0);
        let origin = start + chrono::Days::new(t as u64);
        ra.push(ForecastRecord { sku: "S".into(), origin, h, yhat: y + ea, y });
        rb.push(ForecastRecord { sku: "S".into(), origin, h, yhat: y + eb, y });
        d.push(((y + ea) - y).powi(2) - ((y + eb) - y).powi(2));
    }
    let a = ForecastSet::new("a", TargetMode::Demand, ra).map_err(fail)?;
    let b = ForecastSet::new("b", TargetMode::Demand, rb).map_err(fail)?;

    let same = dm_test(&a, &a, DmLoss::Squared, h).map_err(fail)?;
    ensure(same.stat == 0.0 && same.p == 1.0, || format!("identical inputs gave {same:?}"))?;

    let ab = dm_test(&a, &b, DmLoss::Squared, h).map_err(fail)?;
    let ba = dm_test(&b, &a, DmLoss::Squared, h).map_err(fail)?;
    ensure(ab.stat == -ba.stat && ab.p == ba.p, || format!("not antisymmetric: {} vs {}", ab.stat, ba.stat))?;
    let x = dm_test(&a, &b, DmLoss::Absolute, h).map_err(fail)?;
    let y = dm_test(&b, &a, DmLoss::Absolute, h).map_err(fail)?;
    ensure(x.stat == -y.stat, || "absolute loss not antisymmetric".into())?;
    ensure(ab.stat < 0.0 && ab.p < 0.05, || format!("dominance not detected: {ab:?}"))?;
    let (stat, p) = dm_oracle(&d, h);
    ensure((ab.stat - stat).abs() <= 1e-10, || format!("statistic {} vs oracle {stat}", ab.stat))?;
    ensure((ab.p - p).abs() <= 1e-10, || format!("p {} vs oracle {p}", ab.p))?;
    Ok(format!("stat {:.4} (oracle {stat:.4}), p {:.2e}", ab.stat, ab.p))
}

// Forecast skill

const SKILL_LEARNING_RATE: f64 = 0.01;

fn criterion_skill() -> Check {
    let started = Instant::now();
    let panel = synth_generate(42, 20, 200, &SynthParams::default()).map_err(fail)?;
    let spec = SplitSpec::from_fractions(&panel, 0.7, 0.15).map_err(fail)?;
    let mc = ModelConfig {
        n_countries: panel.countries.len(),
        ..ModelConfig::default()
    };
    let wc = WindowConfig {
        lookback: mc.lookback,
        horizons: mc.horizons.clone(),
        mode: TargetMode::Demand,
    };
    let s = make_splits(&panel, &spec, &wc).map_err(fail)?;
    let cfg = TrainConfig {
        learning_rate: SKILL_LEARNING_RATE,
        patience: 400,
        seed: 42,
        ..TrainConfig::default()
    };
    let model = HybridForecaster::init(mc, 42).map_err(fail)?;
    let out = train(model, &s.train, &s.val, &s.scaling, &LossConfig::default(), &cfg, None).map_err(fail)?;
    let hybrid = ForecastSet::from_windows("hybrid", &panel, TargetMode::Demand, &s.test, |w| {
        out.model.forecast(w, &s.scaling)
    })
    .map_err(fail)?;
    let sn = fit_predict(
        &BaselineSpec::SeasonalNaive { season: 7 },
        &panel,
        &s,
        TargetMode::Demand,
        0,
    )
    .map_err(fail)?;
    let ctx = ScaleContext::from_panel(&panel, TargetMode::Demand, s.bounds.0, 7).map_err(fail)?;
    let mut summary = Vec::new();
    let mut ok = true;
    for h in [1, 7, 14] {
        let a = smape_records(&hybrid.at(Some(h))).map_err(fail)?;
        let b = smape_records(&sn.at(Some(h))).map_err(fail)?;
        ok &= a <= b;
        summary.push(format!("h{h} {a:.2}/{b:.2}"));
    }
    let pooled = mase(&hybrid.at(None), &ctx).map_err(fail)?.value;
    let secs = started.elapsed().as_secs_f64();
    let detail = format!("sMAPE hybrid/seasonal {}; pooled MASE {pooled:.3}; {secs:.0}s", summary.join(", "));
    ensure(ok && pooled < 1.0, || detail.clone())?;
    ensure(secs < 300.0, || format!("too slow: {detail}"))?;
    Ok(detail)
}

// Determinism

fn tempora(args: &[&str], threads: usize) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tempora"))
        .args(args)
        .env("TEMPORA_THREADS", threads.to_string())
        .output()
        .map_err(fail)?;
    ensure(out.status.success(), || {
        format!("tempora {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn pipeline(root: &Path, config: &Path, threads: usize) -> Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let c = config.to_string_lossy().into_owned();
    tempora(&["ingest", "--config", &c, "--out", &p("panel")], threads)?;
    tempora(&["train", "--config", &c, "--panel", &p("panel"), "--out", &p("run")], threads)?;
    tempora(
        &[
            "evaluate",
            "--config",
            &c,
            "--checkpoint",
            &p("run/model.ckpt"),
            "--panel",
            &p("panel"),
            "--out",
            &p("eval"),
        ],
        threads,
    )
}

const DETERMINISM_CONFIG: &str = r#"
seed = 7

[data]
n_skus = 6
n_days = 120

[train]
max_iterations = 40
batch_size = 16
val_every = 5

[eval]
oracle = true
dm_losses = ["squared", "absolute"]

[eval.gru]
iterations = 20
"#;

fn criterion_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(fail)?;
    let config = dir.path().join("run.toml");
    std::fs::write(&config, DETERMINISM_CONFIG).map_err(fail)?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&a, &config, 1)?;
    pipeline(&b, &config, 4)?;
    let mut files = vec![
        "panel/panel.json",
        "panel/demand.csv",
        "panel/revenue.csv",
        "panel/price.csv",
        "panel/ingest_stats.json",
        "run/model.ckpt",
        "run/summary.json",
        "run/config.json",
        "eval/report.json",
        "eval/metrics.csv",
        "eval/tse.csv",
        "eval/cpoi.csv",
        "eval/dm.md",
        "eval/config.json",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for label in ["hybrid", "naive_last", "seasonal_naive", "ridge_ar", "vanilla_gru", "oracle"] {
        files.push(format!("eval/forecasts/{label}.csv"));
    }
    for f in &files {
        let x = std::fs::read(a.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(x == y, || format!("{f} differs between 1 and 4 workers"))?;
    }
    Ok(format!("{} artifacts byte-identical across 1 and 4 workers", files.len()))
}

// RL and entropy contracts

fn criterion_rl() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let k = 5;
    let inputs = vec![
        rand_tensor(&mut rng, &[3, 4], -1.0, 1.0),
        rand_tensor(&mut rng, &[4, k], -1.0, 1.0),
        rand_tensor(&mut rng, &[k], -1.0, 1.0),
    ];
    let policy_loss = |tape: &mut Tape, v: &[Var]| -> tempora_core::Result<Var> {
        let logits = tape.matmul(v[0], v[1])?;
        let logits = tape.add_bias(logits, v[2])?;
        let lps: Vec<Var> = (0..3)
            .map(|r| {
                let row = tape.slice_rows(logits, r, 1)?;
                Ok(tape.log_softmax(row))
            })
            .collect::<tempora_core::Result<_>>()?;
        rl_policy_loss(tape, &lps, &[0, 3, 4], &[0.0, 0.0, 0.0])
    };
    let fd = finite_difference_check_many(policy_loss, &inputs, 1e-5).map_err(fail)?;
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = policy_loss(&mut tape, &vars).map_err(fail)?;
    let g = tape.backward(out).map_err(fail)?;
    let max_grad = vars.iter().flat_map(|v| g.wrt(*v).into_data()).fold(0.0f64, |m, x| m.max(x.abs()));
    ensure(max_grad == 0.0 && fd < 1e-9, || format!("zero-advantage gradient {max_grad:.2e}, fd gap {fd:.2e}"))?;

    let mut worst_ent: f64 = 0.0;
    for k in [2usize, 3, 11, 50] {
        let mut tape = Tape::new();
        let lp = tape.constant(Tensor::row(vec![-(k as f64).ln(); k]));
        let e = entropy(&mut tape, lp).map_err(fail)?;
        worst_ent = worst_ent.max((tape.value(e).item() - (k as f64).ln()).abs());
        let zero_logits = tape.constant(Tensor::row(vec![0.0; k]));
        let lp = tape.log_softmax(zero_logits);
        let e = entropy_bonus(&mut tape, &[lp, lp]).map_err(fail)?;
        worst_ent = worst_ent.max((tape.value(e).item() - (k as f64).ln()).abs());
    }
    ensure(worst_ent <= 1e-12, || format!("uniform entropy off by {worst_ent:.2e}"))?;

    let zero = LossConfig {
        rl: 0.0,
        entropy: 0.0,
        flat: 0.0,
        ..LossConfig::default()
    };
    for _ in 0..100 {
        let parts = LossParts {
            primary: rng.random_range(0.0..10.0),
            rl: rng.random_range(-10.0..10.0),
            entropy: rng.random_range(0.0..3.0),
            flat: rng.random_range(0.0..10.0),
        };
        ensure(total_loss(&parts, &zero) == parts.primary, || "total_loss differs from primary".into())?;
    }

    let cfg = toy_model_config();
    let model = HybridForecaster::init(cfg.clone(), 2).map_err(fail)?;
    let windows = toy_windows(&cfg, 4);
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let plans: Vec<WindowPlan> = windows
        .iter()
        .map(|_| WindowPlan {
            action: 1,
            advantage: 2.5,
            direction: None,
        })
        .collect();
    let mse_only = LossConfig::mse_only();
    let out = batch_objective(&model, &refs, &plans, &mse_only).map_err(fail)?;
    let b = windows.len() as f64;
    let mut direct = 0.0;
    for w in &windows {
        let p = model.forecast_scaled(w).map_err(fail)?;
        let se: f64 = p.iter().zip(&w.targets).map(|(a, t)| (a - t) * (a - t)).sum::<f64>() / p.len() as f64;
        direct += se / b;
    }
    ensure(out.total == out.primary, || format!("total {} != MSE {}", out.total, out.primary))?;
    ensure((out.total - direct).abs() <= 1e-12, || format!("total {} vs direct MSE {direct}", out.total))?;
    Ok(format!("zero-advantage grad 0 (fd {fd:.1e}); entropy err {worst_ent:.1e}; total == MSE"))
}

// CPOI dominance

fn criterion_cpoi() -> Check {
    let panel = synth_generate(10, 8, 150, &SynthParams::default()).map_err(fail)?;
    let spec = SplitSpec::from_fractions(&panel, 0.6, 0.2).map_err(fail)?;
    let wc = WindowConfig {
        lookback: 28,
        horizons: vec![1, 7, 14],
        mode: TargetMode::Demand,
    };
    let s = make_splits(&panel, &spec, &wc).map_err(fail)?;
    let mut sets = Vec::new();
    for name in ["naive_last", "seasonal_naive", "ridge_ar"] {
        sets.push(fit_predict(&BaselineSpec::from_name(name).map_err(fail)?, &panel, &s, TargetMode::Demand, 0).map_err(fail)?);
    }
    let reference = sets[0].clone();
    let perfect = ForecastSet::new(
        "perfect",
        TargetMode::Demand,
        reference.records().iter().map(|r| ForecastRecord { yhat: r.y, ..r.clone() }).collect(),
    )
    .map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (label, lo, hi) in [("under", 0.3, 1.0), ("over", 1.0, 2.0), ("noisy", 0.5, 1.5)] {
        let records = reference
            .records()
            .iter()
            .map(|r| ForecastRecord {
                yhat: r.y * rng.random_range(lo..hi) + rng.random_range(-2.0..2.0),
                ..r.clone()
            })
            .collect();
        sets.push(ForecastSet::new(label, TargetMode::Demand, records).map_err(fail)?);
    }
    let params = CpoiParams::default();
    let mut checked = 0;
    for h in [1, 7, 14] {
        let best = cpoi(&perfect, h, &params).map_err(fail)?;
        for fs in &sets {
            let other = cpoi(fs, h, &params).map_err(fail)?;
            ensure(other.len() == best.len(), || format!("{} covers other origins", fs.label))?;
            for ((d1, v1), (d2, v2)) in best.iter().zip(&other) {
                ensure(d1 == d2, || "origin dates differ".into())?;
                ensure(v1 >= v2, || format!("{} beats the perfect forecast on {d1} at h={h}", fs.label))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} cumulative points dominated across {} models", sets.len()))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient fidelity", criterion_gradients),
        ("attention contracts", criterion_attention),
        ("overfit", criterion_overfit),
        ("leakage", criterion_leakage),
        ("metric oracles", criterion_metrics),
        ("diebold-mariano", criterion_dm),
        ("forecast skill", criterion_skill),
        ("determinism", criterion_determinism),
        ("rl and entropy", criterion_rl),
        ("cpoi dominance", criterion_cpoi),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n:>2} {name:<20} PASS  ({secs:.1}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} {name:<20} FAIL  ({secs:.1}s) {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
