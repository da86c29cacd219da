//! Network runtime: parameter storage, forward pass, and reverse-mode
//! gradients with respect to both parameters and inputs.
//!
//! Parameters live in a single flat vector; layers hold offsets into it.
//! Forward passes record per-layer caches so the backward pass can replay the
//! computation exactly. Batch work parallelizes over fixed-size sample chunks
//! with all reductions folded in chunk order, so results do not depend on the
//! thread count.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamKind};
use crate::surrogate::spec::{Activation, LayerSpec, NetworkSpec, INPUT_CHANNELS, OUTPUTS};

/// Samples per parallel work unit; fixed so chunk boundaries (and therefore
/// floating-point reduction order) never depend on the machine.
const CHUNK: usize = 32;

const SELU_LAMBDA: f64 = 1.0507009873554805;
const SELU_ALPHA: f64 = 1.6732632423543772;

/// Batch-norm epsilon and running-statistics momentum.
const BN_EPS: f64 = 1e-3;
const BN_MOMENTUM: f64 = 0.99;

#[inline]
fn act_apply(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Linear => z,
        Activation::Relu => z.max(0.0),
        Activation::Selu => {
            if z > 0.0 {
                SELU_LAMBDA * z
            } else {
                SELU_LAMBDA * SELU_ALPHA * (z.exp() - 1.0)
            }
        }
        Activation::Sine => z.sin(),
    }
}

#[inline]
fn act_derivative(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Linear => 1.0,
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Selu => {
            if z > 0.0 {
                SELU_LAMBDA
            } else {
                SELU_LAMBDA * SELU_ALPHA * z.exp()
            }
        }
        Activation::Sine => z.cos(),
    }
}

/// Dot product with lane-parallel accumulators: the independent lanes break
/// the floating-point dependency chain so the loop vectorizes, while the
/// summation order stays fixed and deterministic.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let mut ac = a.chunks_exact(LANES);
    let mut bc = b.chunks_exact(LANES);
    for (av, bv) in (&mut ac).zip(&mut bc) {
        let av: &[f64; LANES] = av.try_into().unwrap();
        let bv: &[f64; LANES] = bv.try_into().unwrap();
        for l in 0..LANES {
            acc[l] += av[l] * bv[l];
        }
    }
    let tail: f64 = ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .map(|(x, y)| x * y)
        .sum();
    acc.iter().sum::<f64>() + tail
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// (batch, time, channels) tensor, row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub data: Vec<f64>,
    pub b: usize,
    pub t: usize,
    pub c: usize,
}

impl SeqBatch {
    pub fn zeros(b: usize, t: usize, c: usize) -> Self {
        SeqBatch {
            data: vec![0.0; b * t * c],
            b,
            t,
            c,
        }
    }

    #[inline]
    pub fn row(&self, b: usize, t: usize) -> &[f64] {
        let start = (b * self.t + t) * self.c;
        &self.data[start..start + self.c]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, t: usize) -> &mut [f64] {
        let start = (b * self.t + t) * self.c;
        &mut self.data[start..start + self.c]
    }
}

/// (batch, channels) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct VecBatch {
    pub data: Vec<f64>,
    pub b: usize,
    pub c: usize,
}

impl VecBatch {
    pub fn zeros(b: usize, c: usize) -> Self {
        VecBatch {
            data: vec![0.0; b * c],
            b,
            c,
        }
    }

    #[inline]
    pub fn row(&self, b: usize) -> &[f64] {
        &self.data[b * self.c..(b + 1) * self.c]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize) -> &mut [f64] {
        &mut self.data[b * self.c..(b + 1) * self.c]
    }
}

/// Flat trainable parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters(pub Vec<f64>);

impl Parameters {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Non-trainable state: one entry per batch-norm layer, in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnState {
    pub stats: Vec<BnStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A tensor slot in the flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
enum Built {
    ZeroPad {
        pad: usize,
    },
    Conv {
        width: usize,
        in_c: usize,
        out_c: usize,
        w_off: usize,
        b_off: usize,
        act: Activation,
    },
    BatchNorm {
        channels: usize,
        gamma_off: usize,
        beta_off: usize,
        bn_idx: usize,
    },
    Lstm {
        in_c: usize,
        units: usize,
        wx_off: usize,
        wh_off: usize,
        b_off: usize,
    },
    Dense {
        in_c: usize,
        out_c: usize,
        w_off: usize,
        b_off: usize,
        act: Activation,
    },
    Clip,
}

/// A built network: layer plan plus parameter layout.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    built: Vec<Built>,
    n_params: usize,
    slots: Vec<ParamSlot>,
}

impl Network {
    pub fn build(spec: NetworkSpec) -> Result<Network> {
        spec.validate()?;
        let mut built = Vec::with_capacity(spec.layers.len());
        let mut slots = Vec::new();
        let mut offset = 0usize;
        let mut width = INPUT_CHANNELS;
        let mut n_bn = 0usize;

        let push_slot = |slots: &mut Vec<ParamSlot>,
                             offset: &mut usize,
                             name: String,
                             shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            let slot = ParamSlot {
                name,
                shape,
                offset: *offset,
                len,
            };
            *offset += len;
            slots.push(slot.clone());
            slot
        };

        for (i, layer) in spec.layers.iter().enumerate() {
            match layer {
                LayerSpec::ZeroPad { pad } => built.push(Built::ZeroPad { pad: *pad }),
                LayerSpec::Conv {
                    width: w,
                    channels,
                    activation,
                } => {
                    let wslot = push_slot(
                        &mut slots,
                        &mut offset,
                        format!("layer{i:02}.conv.weight"),
                        vec![*channels, *w, width],
                    );
                    let bslot = push_slot(
                        &mut slots,
                        &mut offset,
                        format!("layer{i:02}.conv.bias"),
                        vec![*channels],
                    );
                    built.push(Built::Conv {
                        width: *w,
                        in_c: width,
                        out_c: *channels,
                        w_off: wslot.offset,
                        b_off: bslot.offset,
                        act: *activation,
                    });
                    width = *channels;
                }
                LayerSpec::BatchNorm => {
                    let gslot = push_slot(
                        &mut slots,
                        &mut offset,
                        format!("layer{i:02}.batch_norm.gamma"),
                        vec![width],
                    );
                    let bslot = push_slot(
                        &mut slots,
                        &mut offset,
                        format!("layer{i:02}.batch_norm.beta"),
                        vec![width],
                    );
                    built.push(Built::BatchNorm {
                        channels: width,
                        gamma_off: gslot.offset,
                        beta_off: bslot.offset,
                        bn_idx: n_bn,
                    });
                    n_bn += 1;
                }
                LayerSpec::Lstm { units } => {
                    let wx = push_slot(
                        &mut slots,
                        &mut offset,
                        format!("layer{i:02}.lstm.wx"),
                        vec![4 * units, width],
                    );
                    let wh = push_slot(
                        &mut slots,
                        &mut offset,
                        format!("layer{i:02}.lstm.wh"),
                        vec![4 * units, *units],
                    );
                    let b = push_slot(
                        &mut slots,
                        &mut offset,
                        format!("layer{i:02}.lstm.bias"),
                        vec![4 * units],
                    );
                    built.push(Built::Lstm {
                        in_c: width,
                        units: *units,
                        wx_off: wx.offset,
                        wh_off: wh.offset,
                        b_off: b.offset,
                    });
                    width = *units;
                }
                LayerSpec::Dense { units, activation } => {
                    let wslot = push_slot(
                        &mut slots,
                        &mut offset,
                        format!("layer{i:02}.dense.weight"),
                        vec![*units, width],
                    );
                    let bslot = push_slot(
                        &mut slots,
                        &mut offset,
                        format!("layer{i:02}.dense.bias"),
                        vec![*units],
                    );
                    built.push(Built::Dense {
                        in_c: width,
                        out_c: *units,
                        w_off: wslot.offset,
                        b_off: bslot.offset,
                        act: *activation,
                    });
                    width = *units;
                }
                LayerSpec::Clip => built.push(Built::Clip),
            }
        }

        let _ = n_bn;
        debug_assert_eq!(offset, spec.parameter_count());
        Ok(Network {
            spec,
            built,
            n_params: offset,
            slots,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn param_slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn fresh_bn(&self) -> BnState {
        let stats = self
            .built
            .iter()
            .filter_map(|l| match l {
                Built::BatchNorm { channels, .. } => Some(BnStats {
                    mean: vec![0.0; *channels],
                    var: vec![1.0; *channels],
                }),
                _ => None,
            })
            .collect();
        BnState { stats }
    }

    /// Initializes parameters: fan-in-scaled uniform weights, orthogonal
    /// recurrent kernels, zero biases except the recurrent forget gate (1)
    /// and the output-layer bias (0.5, the middle of the clip range).
    pub fn init_params(&self, seed: u64) -> Parameters {
        let mut rng = substream(seed, StreamKind::TrainInit, 0, 0);
        let mut p = vec![0.0; self.n_params];
        let last_dense_off = self
            .built
            .iter()
            .rev()
            .find_map(|l| match l {
                Built::Dense { b_off, .. } => Some(*b_off),
                _ => None,
            })
            .unwrap();

        for layer in &self.built {
            match layer {
                Built::ZeroPad { .. } | Built::Clip => {}
                Built::Conv {
                    width,
                    in_c,
                    out_c,
                    w_off,
                    ..
                } => {
                    let limit = (3.0 / (width * in_c) as f64).sqrt();
                    for v in &mut p[*w_off..w_off + out_c * width * in_c] {
                        *v = rng.gen_range(-limit..limit);
                    }
                }
                Built::BatchNorm {
                    channels, gamma_off, ..
                } => {
                    for v in &mut p[*gamma_off..gamma_off + channels] {
                        *v = 1.0;
                    }
                }
                Built::Lstm {
                    in_c,
                    units,
                    wx_off,
                    wh_off,
                    b_off,
                } => {
                    let limit = (3.0 / *in_c as f64).sqrt();
                    for v in &mut p[*wx_off..wx_off + 4 * units * in_c] {
                        *v = rng.gen_range(-limit..limit);
                    }
                    for gate in 0..4 {
                        let q = orthogonal(*units, &mut rng);
                        let start = wh_off + gate * units * units;
                        p[start..start + units * units].copy_from_slice(&q);
                    }
                    // Forget gate bias = 1 (gate order: input, forget, cell, output).
                    for v in &mut p[b_off + units..b_off + 2 * units] {
                        *v = 1.0;
                    }
                }
                Built::Dense {
                    in_c,
                    out_c,
                    w_off,
                    b_off,
                    ..
                } => {
                    let limit = (3.0 / *in_c as f64).sqrt();
                    for v in &mut p[*w_off..w_off + out_c * in_c] {
                        *v = rng.gen_range(-limit..limit);
                    }
                    if *b_off == last_dense_off {
                        for v in &mut p[*b_off..b_off + out_c] {
                            *v = 0.5;
                        }
                    }
                }
            }
        }
        Parameters(p)
    }

    /// Forward pass. In train mode batch-norm layers use batch statistics
    /// and the updated running statistics are returned (the caller decides
    /// when to apply them); in eval mode the stored running statistics are
    /// used. Caches for the backward pass are recorded when `keep_trace`.
    pub fn forward(
        &self,
        params: &Parameters,
        bn: &BnState,
        input: &SeqBatch,
        mode: Mode,
        keep_trace: bool,
    ) -> Result<ForwardPass> {
        assert_eq!(params.len(), self.n_params, "parameter vector size");
        assert_eq!(input.c, INPUT_CHANNELS);
        assert_eq!(input.t, self.spec.l_max, "encoded input length");

        let mut caches: Vec<Cache> = Vec::with_capacity(self.built.len());
        let mut seq = Some(input.clone());
        let mut vec: Option<VecBatch> = None;
        let mut bn_updates = Vec::new();

        for (li, layer) in self.built.iter().enumerate() {
            match layer {
                Built::ZeroPad { pad } => {
                    let x = seq.take().unwrap();
                    let mut y = SeqBatch::zeros(x.b, x.t + 2 * pad, x.c);
                    for b in 0..x.b {
                        for t in 0..x.t {
                            y.row_mut(b, t + pad).copy_from_slice(x.row(b, t));
                        }
                    }
                    if keep_trace {
                        caches.push(Cache::ZeroPad { in_t: x.t });
                    }
                    seq = Some(y);
                }
                Built::Conv {
                    width,
                    in_c,
                    out_c,
                    w_off,
                    b_off,
                    act,
                } => {
                    let x = seq.take().unwrap();
                    let (pre, y) = conv_forward(
                        &x,
                        &params.0[*w_off..w_off + out_c * width * in_c],
                        &params.0[*b_off..b_off + out_c],
                        *width,
                        *out_c,
                        *act,
                        keep_trace,
                    );
                    if keep_trace {
                        caches.push(Cache::Conv { input: x, pre: pre.unwrap() });
                    }
                    seq = Some(y);
                }
                Built::BatchNorm {
                    channels,
                    gamma_off,
                    beta_off,
                    bn_idx,
                } => {
                    let x = seq.take().unwrap();
                    let gamma = &params.0[*gamma_off..gamma_off + channels];
                    let beta = &params.0[*beta_off..beta_off + channels];
                    let (y, cache, update) = match mode {
                        Mode::Train => bn_forward_train(&x, gamma, beta, &bn.stats[*bn_idx]),
                        Mode::Eval => bn_forward_eval(&x, gamma, beta, &bn.stats[*bn_idx]),
                    };
                    if let Some(update) = update {
                        bn_updates.push(update);
                    }
                    drop(x);
                    if keep_trace {
                        caches.push(Cache::BatchNorm(Box::new(cache)));
                    }
                    seq = Some(y);
                }
                Built::Lstm {
                    in_c,
                    units,
                    wx_off,
                    wh_off,
                    b_off,
                } => {
                    let x = seq.take().unwrap();
                    let (last_h, cache) = lstm_forward(
                        &x,
                        &params.0[*wx_off..wx_off + 4 * units * in_c],
                        &params.0[*wh_off..wh_off + 4 * units * units],
                        &params.0[*b_off..b_off + 4 * units],
                        *units,
                        keep_trace,
                    );
                    if keep_trace {
                        caches.push(Cache::Lstm(Box::new(LstmCache {
                            input: x,
                            state: cache.unwrap(),
                        })));
                    }
                    vec = Some(last_h);
                }
                Built::Dense {
                    in_c,
                    out_c,
                    w_off,
                    b_off,
                    act,
                } => {
                    let x = vec.take().unwrap();
                    let w = &params.0[*w_off..w_off + out_c * in_c];
                    let bias = &params.0[*b_off..b_off + out_c];
                    let mut pre = VecBatch::zeros(x.b, *out_c);
                    let mut y = VecBatch::zeros(x.b, *out_c);
                    for b in 0..x.b {
                        let xr = x.row(b);
                        for o in 0..*out_c {
                            let z = bias[o] + dot(&w[o * in_c..(o + 1) * in_c], xr);
                            pre.row_mut(b)[o] = z;
                            y.row_mut(b)[o] = act_apply(*act, z);
                        }
                    }
                    if keep_trace {
                        caches.push(Cache::Dense { input: x, pre });
                    }
                    vec = Some(y);
                }
                Built::Clip => {
                    let x = vec.take().unwrap();
                    let mut y = x.clone();
                    for v in &mut y.data {
                        *v = v.clamp(0.0, 1.0);
                    }
                    if keep_trace {
                        caches.push(Cache::Clip { pre: x });
                    }
                    vec = Some(y);
                }
            }
            let finite = match (&seq, &vec) {
                (Some(s), _) if vec.is_none() => s.data.iter().all(|v| v.is_finite()),
                (_, Some(v)) => v.data.iter().all(|x| x.is_finite()),
                _ => true,
            };
            if !finite {
                return Err(Error::numeric(
                    format!("forward layer {li} ({:?})", self.spec.layers[li]),
                    "non-finite activation",
                ));
            }
        }

        let output = vec.expect("network ends with a vector stage");
        debug_assert_eq!(output.c, OUTPUTS);
        Ok(ForwardPass {
            output,
            trace: if keep_trace { Some(Trace { caches }) } else { None },
            bn_updates,
        })
    }

    /// Reverse pass through a recorded trace. `dout` is the upstream gradient
    /// on the network outputs, shape (batch, 2).
    pub fn backward(
        &self,
        params: &Parameters,
        trace: &Trace,
        dout: &VecBatch,
        want_params: bool,
        want_input: bool,
    ) -> Gradients {
        let mut dparams = if want_params {
            Some(vec![0.0; self.n_params])
        } else {
            None
        };
        let mut dvec: Option<VecBatch> = Some(dout.clone());
        let mut dseq: Option<SeqBatch> = None;
        let mut cache_iter = trace.caches.iter().rev();

        for layer in self.built.iter().rev() {
            let cache = cache_iter.next().expect("trace matches layer plan");
            match (layer, cache) {
                (Built::Clip, Cache::Clip { pre }) => {
                    let mut dx = dvec.take().unwrap();
                    for (g, &z) in dx.data.iter_mut().zip(&pre.data) {
                        if !(0.0..=1.0).contains(&z) {
                            *g = 0.0;
                        }
                    }
                    dvec = Some(dx);
                }
                (
                    Built::Dense {
                        in_c,
                        out_c,
                        w_off,
                        b_off,
                        act,
                    },
                    Cache::Dense { input, pre },
                ) => {
                    let dy = dvec.take().unwrap();
                    let w = &params.0[*w_off..w_off + out_c * in_c];
                    let mut dx = VecBatch::zeros(input.b, *in_c);
                    for b in 0..input.b {
                        let xr = input.row(b);
                        let dxr = dx.row_mut(b);
                        for o in 0..*out_c {
                            let dz = dy.row(b)[o] * act_derivative(*act, pre.row(b)[o]);
                            if dz == 0.0 {
                                continue;
                            }
                            axpy(dxr, dz, &w[o * in_c..(o + 1) * in_c]);
                            if let Some(dp) = dparams.as_mut() {
                                axpy(
                                    &mut dp[w_off + o * in_c..w_off + (o + 1) * in_c],
                                    dz,
                                    xr,
                                );
                                dp[b_off + o] += dz;
                            }
                        }
                    }
                    dvec = Some(dx);
                }
                (
                    Built::Lstm {
                        in_c,
                        units,
                        wx_off,
                        wh_off,
                        b_off,
                    },
                    Cache::Lstm(cache),
                ) => {
                    let dlast = dvec.take().unwrap();
                    let (dx, dwx, dwh, db) = lstm_backward(
                        &cache.input,
                        &cache.state,
                        &params.0[*wx_off..wx_off + 4 * units * in_c],
                        &params.0[*wh_off..wh_off + 4 * units * units],
                        *units,
                        &dlast,
                    );
                    if let Some(dp) = dparams.as_mut() {
                        dp[*wx_off..wx_off + dwx.len()]
                            .iter_mut()
                            .zip(&dwx)
                            .for_each(|(a, g)| *a += g);
                        dp[*wh_off..wh_off + dwh.len()]
                            .iter_mut()
                            .zip(&dwh)
                            .for_each(|(a, g)| *a += g);
                        dp[*b_off..b_off + db.len()]
                            .iter_mut()
                            .zip(&db)
                            .for_each(|(a, g)| *a += g);
                    }
                    dseq = Some(dx);
                }
                (
                    Built::BatchNorm {
                        channels,
                        gamma_off,
                        beta_off,
                        ..
                    },
                    Cache::BatchNorm(cache),
                ) => {
                    let dy = dseq.take().unwrap();
                    let gamma = &params.0[*gamma_off..gamma_off + channels];
                    let (dx, dgamma, dbeta) = bn_backward(cache, gamma, &dy);
                    if let Some(dp) = dparams.as_mut() {
                        dp[*gamma_off..gamma_off + channels]
                            .iter_mut()
                            .zip(&dgamma)
                            .for_each(|(a, g)| *a += g);
                        dp[*beta_off..beta_off + channels]
                            .iter_mut()
                            .zip(&dbeta)
                            .for_each(|(a, g)| *a += g);
                    }
                    dseq = Some(dx);
                }
                (
                    Built::Conv {
                        width,
                        in_c,
                        out_c,
                        w_off,
                        b_off,
                        act,
                    },
                    Cache::Conv { input, pre },
                ) => {
                    let dy = dseq.take().unwrap();
                    let (dx, dw, db) = conv_backward(
                        input,
                        pre,
                        &params.0[*w_off..w_off + out_c * width * in_c],
                        *width,
                        *out_c,
                        *act,
                        &dy,
                        dparams.is_some(),
                    );
                    if let Some(dp) = dparams.as_mut() {
                        dp[*w_off..w_off + dw.len()]
                            .iter_mut()
                            .zip(&dw)
                            .for_each(|(a, g)| *a += g);
                        dp[*b_off..b_off + db.len()]
                            .iter_mut()
                            .zip(&db)
                            .for_each(|(a, g)| *a += g);
                    }
                    dseq = Some(dx);
                }
                (Built::ZeroPad { pad }, Cache::ZeroPad { in_t }) => {
                    let dy = dseq.take().unwrap();
                    let mut dx = SeqBatch::zeros(dy.b, *in_t, dy.c);
                    for b in 0..dy.b {
                        for t in 0..*in_t {
                            dx.row_mut(b, t).copy_from_slice(dy.row(b, t + pad));
                        }
                    }
                    dseq = Some(dx);
                }
                _ => unreachable!("cache kind matches layer kind"),
            }
        }

        Gradients {
            params: dparams,
            input: if want_input { dseq } else { None },
        }
    }
}

pub struct ForwardPass {
    pub output: VecBatch,
    pub trace: Option<Trace>,
    /// Updated running statistics per batch-norm layer (train mode only).
    pub bn_updates: Vec<BnStats>,
}

pub struct Trace {
    caches: Vec<Cache>,
}

pub struct Gradients {
    pub params: Option<Vec<f64>>,
    pub input: Option<SeqBatch>,
}

struct BnCache {
    xhat: SeqBatch,
    inv_std: Vec<f64>,
    train_mode: bool,
}

struct LstmState {
    /// Post-activation gates (b, t, 4·units) in gate order i, f, g, o.
    gates: Vec<f64>,
    /// Cell states (b, t, units).
    cells: Vec<f64>,
    /// Hidden states (b, t, units).
    hiddens: Vec<f64>,
}

struct LstmCache {
    input: SeqBatch,
    state: LstmState,
}

enum Cache {
    ZeroPad { in_t: usize },
    Conv { input: SeqBatch, pre: SeqBatch },
    BatchNorm(Box<BnCache>),
    Lstm(Box<LstmCache>),
    Dense { input: VecBatch, pre: VecBatch },
    Clip { pre: VecBatch },
}

/// Random orthogonal matrix (modified Gram-Schmidt on a Gaussian matrix).
fn orthogonal(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n * n)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    for i in 0..n {
        for j in 0..i {
            let proj = dot(&m[i * n..(i + 1) * n], &m[j * n..(j + 1) * n]);
            let (head, tail) = m.split_at_mut(i * n);
            let prev = &head[j * n..(j + 1) * n];
            axpy(&mut tail[..n], -proj, prev);
        }
        let norm = dot(&m[i * n..(i + 1) * n], &m[i * n..(i + 1) * n]).sqrt().max(1e-12);
        for v in &mut m[i * n..(i + 1) * n] {
            *v /= norm;
        }
    }
    m
}

fn conv_forward(
    x: &SeqBatch,
    w: &[f64],
    bias: &[f64],
    width: usize,
    out_c: usize,
    act: Activation,
    keep_pre: bool,
) -> (Option<SeqBatch>, SeqBatch) {
    let (bsz, t_len, in_c) = (x.b, x.t, x.c);
    let off = width / 2;
    let mut y = SeqBatch::zeros(bsz, t_len, out_c);
    let mut pre = if keep_pre {
        Some(SeqBatch::zeros(bsz, t_len, out_c))
    } else {
        None
    };

    let sample_out = t_len * out_c;
    let run = |b0: usize, y_chunk: &mut [f64], pre_chunk: Option<&mut [f64]>| {
        let n_in_chunk = y_chunk.len() / sample_out;
        let mut pre_chunk = pre_chunk;
        for bi in 0..n_in_chunk {
            let b = b0 + bi;
            for t in 0..t_len {
                let out_row = &mut y_chunk[bi * sample_out + t * out_c..][..out_c];
                for o in 0..out_c {
                    let mut acc = bias[o];
                    for k in 0..width {
                        let tau = t as isize + k as isize - off as isize;
                        if tau >= 0 && (tau as usize) < t_len {
                            acc += dot(
                                &w[(o * width + k) * in_c..(o * width + k + 1) * in_c],
                                x.row(b, tau as usize),
                            );
                        }
                    }
                    if let Some(p) = pre_chunk.as_deref_mut() {
                        p[bi * sample_out + t * out_c + o] = acc;
                    }
                    out_row[o] = act_apply(act, acc);
                }
            }
        }
    };

    match pre.as_mut() {
        Some(pre) => {
            y.data
                .par_chunks_mut(CHUNK * sample_out)
                .zip(pre.data.par_chunks_mut(CHUNK * sample_out))
                .enumerate()
                .for_each(|(ci, (yc, pc))| run(ci * CHUNK, yc, Some(pc)));
        }
        None => {
            y.data
                .par_chunks_mut(CHUNK * sample_out)
                .enumerate()
                .for_each(|(ci, yc)| run(ci * CHUNK, yc, None));
        }
    }
    (pre, y)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &SeqBatch,
    pre: &SeqBatch,
    w: &[f64],
    width: usize,
    out_c: usize,
    act: Activation,
    dy: &SeqBatch,
    want_w: bool,
) -> (SeqBatch, Vec<f64>, Vec<f64>) {
    let (bsz, t_len, in_c) = (x.b, x.t, x.c);
    let off = width / 2;
    let mut dx = SeqBatch::zeros(bsz, t_len, in_c);
    let sample_in = t_len * in_c;

    // Per-chunk partial weight gradients, folded in chunk order.
    let partials: Vec<(Vec<f64>, Vec<f64>)> = dx
        .data
        .par_chunks_mut(CHUNK * sample_in)
        .enumerate()
        .map(|(ci, dx_chunk)| {
            let b0 = ci * CHUNK;
            let n_in_chunk = dx_chunk.len() / sample_in;
            let mut dw = if want_w {
                vec![0.0; out_c * width * in_c]
            } else {
                Vec::new()
            };
            let mut db = if want_w { vec![0.0; out_c] } else { Vec::new() };
            for bi in 0..n_in_chunk {
                let b = b0 + bi;
                for t in 0..t_len {
                    for o in 0..out_c {
                        let g = dy.row(b, t)[o];
                        if g == 0.0 {
                            continue;
                        }
                        let dz = g * act_derivative(act, pre.row(b, t)[o]);
                        if dz == 0.0 {
                            continue;
                        }
                        if want_w {
                            db[o] += dz;
                        }
                        for k in 0..width {
                            let tau = t as isize + k as isize - off as isize;
                            if tau < 0 || tau as usize >= t_len {
                                continue;
                            }
                            let tau = tau as usize;
                            let wrow = &w[(o * width + k) * in_c..(o * width + k + 1) * in_c];
                            axpy(
                                &mut dx_chunk[bi * sample_in + tau * in_c..][..in_c],
                                dz,
                                wrow,
                            );
                            if want_w {
                                axpy(
                                    &mut dw[(o * width + k) * in_c..(o * width + k + 1) * in_c],
                                    dz,
                                    x.row(b, tau),
                                );
                            }
                        }
                    }
                }
            }
            (dw, db)
        })
        .collect();

    let mut dw = vec![0.0; if want_w { out_c * width * in_c } else { 0 }];
    let mut db = vec![0.0; if want_w { out_c } else { 0 }];
    if want_w {
        for (pdw, pdb) in partials {
            dw.iter_mut().zip(&pdw).for_each(|(a, g)| *a += g);
            db.iter_mut().zip(&pdb).for_each(|(a, g)| *a += g);
        }
    }
    (dx, dw, db)
}

fn bn_forward_train(
    x: &SeqBatch,
    gamma: &[f64],
    beta: &[f64],
    running: &BnStats,
) -> (SeqBatch, BnCache, Option<BnStats>) {
    let c = x.c;
    let n = (x.b * x.t) as f64;
    let mut mean = vec![0.0; c];
    for b in 0..x.b {
        for t in 0..x.t {
            axpy(&mut mean, 1.0, x.row(b, t));
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for b in 0..x.b {
        for t in 0..x.t {
            for (ch, &v) in x.row(b, t).iter().enumerate() {
                let d = v - mean[ch];
                var[ch] += d * d;
            }
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    let mut xhat = SeqBatch::zeros(x.b, x.t, c);
    let mut y = SeqBatch::zeros(x.b, x.t, c);
    for b in 0..x.b {
        for t in 0..x.t {
            let xr = x.row(b, t);
            let hr = xhat.row_mut(b, t);
            for ch in 0..c {
                hr[ch] = (xr[ch] - mean[ch]) * inv_std[ch];
            }
            let yr = y.row_mut(b, t);
            for ch in 0..c {
                yr[ch] = gamma[ch] * xhat.row(b, t)[ch] + beta[ch];
            }
        }
    }

    let update = BnStats {
        mean: running
            .mean
            .iter()
            .zip(&mean)
            .map(|(r, m)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * m)
            .collect(),
        var: running
            .var
            .iter()
            .zip(&var)
            .map(|(r, v)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * v)
            .collect(),
    };
    (
        y,
        BnCache {
            xhat,
            inv_std,
            train_mode: true,
        },
        Some(update),
    )
}

fn bn_forward_eval(
    x: &SeqBatch,
    gamma: &[f64],
    beta: &[f64],
    running: &BnStats,
) -> (SeqBatch, BnCache, Option<BnStats>) {
    let c = x.c;
    let inv_std: Vec<f64> = running.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = SeqBatch::zeros(x.b, x.t, c);
    let mut y = SeqBatch::zeros(x.b, x.t, c);
    for b in 0..x.b {
        for t in 0..x.t {
            let xr = x.row(b, t);
            for ch in 0..c {
                let h = (xr[ch] - running.mean[ch]) * inv_std[ch];
                xhat.row_mut(b, t)[ch] = h;
                y.row_mut(b, t)[ch] = gamma[ch] * h + beta[ch];
            }
        }
    }
    (
        y,
        BnCache {
            xhat,
            inv_std,
            train_mode: false,
        },
        None,
    )
}

fn bn_backward(cache: &BnCache, gamma: &[f64], dy: &SeqBatch) -> (SeqBatch, Vec<f64>, Vec<f64>) {
    let c = dy.c;
    let n = (dy.b * dy.t) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for b in 0..dy.b {
        for t in 0..dy.t {
            let dyr = dy.row(b, t);
            let hr = cache.xhat.row(b, t);
            for ch in 0..c {
                dgamma[ch] += dyr[ch] * hr[ch];
                dbeta[ch] += dyr[ch];
            }
        }
    }

    let mut dx = SeqBatch::zeros(dy.b, dy.t, c);
    if cache.train_mode {
        // dx = (γ·inv_std/N) · (N·dŷ − Σdŷ − x̂·Σ(dŷ·x̂))   with dŷ = dy here.
        for b in 0..dy.b {
            for t in 0..dy.t {
                let dyr = dy.row(b, t);
                let hr = cache.xhat.row(b, t);
                let dxr = dx.row_mut(b, t);
                for ch in 0..c {
                    dxr[ch] = gamma[ch] * cache.inv_std[ch] / n
                        * (n * dyr[ch] - dbeta[ch] - hr[ch] * dgamma[ch]);
                }
            }
        }
    } else {
        for b in 0..dy.b {
            for t in 0..dy.t {
                let dyr = dy.row(b, t);
                let dxr = dx.row_mut(b, t);
                for ch in 0..c {
                    dxr[ch] = dyr[ch] * gamma[ch] * cache.inv_std[ch];
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

fn lstm_forward(
    x: &SeqBatch,
    wx: &[f64],
    wh: &[f64],
    bias: &[f64],
    units: usize,
    keep_state: bool,
) -> (VecBatch, Option<LstmState>) {
    let (bsz, t_len, in_c) = (x.b, x.t, x.c);
    let h4 = 4 * units;
    let mut last_h = VecBatch::zeros(bsz, units);
    let mut gates = if keep_state {
        vec![0.0; bsz * t_len * h4]
    } else {
        Vec::new()
    };
    let mut cells = if keep_state {
        vec![0.0; bsz * t_len * units]
    } else {
        Vec::new()
    };
    let mut hiddens = if keep_state {
        vec![0.0; bsz * t_len * units]
    } else {
        Vec::new()
    };

    // Work is split over sample chunks; each sample runs its own time loop.
    let run_sample = |b: usize,
                      h_out: &mut [f64],
                      mut sg: Option<&mut [f64]>,
                      mut sc: Option<&mut [f64]>,
                      mut sh: Option<&mut [f64]>| {
        let mut h = vec![0.0; units];
        let mut c = vec![0.0; units];
        let mut z = vec![0.0; h4];
        for t in 0..t_len {
            let xr = x.row(b, t);
            for r in 0..h4 {
                z[r] = bias[r]
                    + dot(&wx[r * in_c..(r + 1) * in_c], xr)
                    + dot(&wh[r * units..(r + 1) * units], &h);
            }
            for u in 0..units {
                let i = sigmoid(z[u]);
                let f = sigmoid(z[units + u]);
                let g = z[2 * units + u].tanh();
                let o = sigmoid(z[3 * units + u]);
                let c_new = f * c[u] + i * g;
                let h_new = o * c_new.tanh();
                c[u] = c_new;
                h[u] = h_new;
                if let Some(sg) = sg.as_deref_mut() {
                    let base = t * h4;
                    sg[base + u] = i;
                    sg[base + units + u] = f;
                    sg[base + 2 * units + u] = g;
                    sg[base + 3 * units + u] = o;
                }
                if let Some(sc) = sc.as_deref_mut() {
                    sc[t * units + u] = c_new;
                }
                if let Some(sh) = sh.as_deref_mut() {
                    sh[t * units + u] = h_new;
                }
            }
        }
        h_out.copy_from_slice(&h);
    };

    if keep_state {
        last_h
            .data
            .par_chunks_mut(CHUNK * units)
            .zip(gates.par_chunks_mut(CHUNK * t_len * h4))
            .zip(cells.par_chunks_mut(CHUNK * t_len * units))
            .zip(hiddens.par_chunks_mut(CHUNK * t_len * units))
            .enumerate()
            .for_each(|(ci, (((hc, gc), cc), hhc))| {
                let b0 = ci * CHUNK;
                let n = hc.len() / units;
                for bi in 0..n {
                    run_sample(
                        b0 + bi,
                        &mut hc[bi * units..(bi + 1) * units],
                        Some(&mut gc[bi * t_len * h4..(bi + 1) * t_len * h4]),
                        Some(&mut cc[bi * t_len * units..(bi + 1) * t_len * units]),
                        Some(&mut hhc[bi * t_len * units..(bi + 1) * t_len * units]),
                    );
                }
            });
    } else {
        last_h
            .data
            .par_chunks_mut(CHUNK * units)
            .enumerate()
            .for_each(|(ci, hc)| {
                let b0 = ci * CHUNK;
                let n = hc.len() / units;
                for bi in 0..n {
                    run_sample(b0 + bi, &mut hc[bi * units..(bi + 1) * units], None, None, None);
                }
            });
    }

    let state = if keep_state {
        Some(LstmState {
            gates,
            cells,
            hiddens,
        })
    } else {
        None
    };
    (last_h, state)
}

/// Backpropagation through time. The upstream gradient arrives only on the
/// last hidden state. Returns (dx, dwx, dwh, dbias).
fn lstm_backward(
    x: &SeqBatch,
    state: &LstmState,
    wx: &[f64],
    wh: &[f64],
    units: usize,
    dlast: &VecBatch,
) -> (SeqBatch, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (bsz, t_len, in_c) = (x.b, x.t, x.c);
    let h4 = 4 * units;
    let mut dx = SeqBatch::zeros(bsz, t_len, in_c);
    let sample_in = t_len * in_c;

    let partials: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = dx
        .data
        .par_chunks_mut(CHUNK * sample_in)
        .enumerate()
        .map(|(ci, dx_chunk)| {
            let b0 = ci * CHUNK;
            let n_in_chunk = dx_chunk.len() / sample_in;
            let mut dwx = vec![0.0; h4 * in_c];
            let mut dwh = vec![0.0; h4 * units];
            let mut db = vec![0.0; h4];
            let mut dh = vec![0.0; units];
            let mut dc = vec![0.0; units];
            let mut dz = vec![0.0; h4];

            for bi in 0..n_in_chunk {
                let b = b0 + bi;
                dh.copy_from_slice(dlast.row(b));
                dc.iter_mut().for_each(|v| *v = 0.0);
                let sg = &state.gates[b * t_len * h4..(b + 1) * t_len * h4];
                let scell = &state.cells[b * t_len * units..(b + 1) * t_len * units];
                let shid = &state.hiddens[b * t_len * units..(b + 1) * t_len * units];

                for t in (0..t_len).rev() {
                    let gbase = t * h4;
                    for u in 0..units {
                        let i = sg[gbase + u];
                        let f = sg[gbase + units + u];
                        let g = sg[gbase + 2 * units + u];
                        let o = sg[gbase + 3 * units + u];
                        let c_t = scell[t * units + u];
                        let tc = c_t.tanh();
                        let c_prev = if t > 0 { scell[(t - 1) * units + u] } else { 0.0 };

                        let dht = dh[u];
                        let d_o = dht * tc;
                        let dct = dc[u] + dht * o * (1.0 - tc * tc);
                        let d_i = dct * g;
                        let d_g = dct * i;
                        let d_f = dct * c_prev;
                        dc[u] = dct * f;

                        dz[u] = d_i * i * (1.0 - i);
                        dz[units + u] = d_f * f * (1.0 - f);
                        dz[2 * units + u] = d_g * (1.0 - g * g);
                        dz[3 * units + u] = d_o * o * (1.0 - o);
                    }

                    let xr = x.row(b, t);
                    let dxr = &mut dx_chunk[bi * sample_in + t * in_c..][..in_c];
                    dh.iter_mut().for_each(|v| *v = 0.0);
                    for r in 0..h4 {
                        let dzr = dz[r];
                        if dzr == 0.0 {
                            continue;
                        }
                        db[r] += dzr;
                        axpy(&mut dwx[r * in_c..(r + 1) * in_c], dzr, xr);
                        axpy(dxr, dzr, &wx[r * in_c..(r + 1) * in_c]);
                        if t > 0 {
                            let h_prev = &shid[(t - 1) * units..t * units];
                            axpy(&mut dwh[r * units..(r + 1) * units], dzr, h_prev);
                        }
                        axpy(&mut dh, dzr, &wh[r * units..(r + 1) * units]);
                    }
                }
            }
            (dwx, dwh, db)
        })
        .collect();

    let mut dwx = vec![0.0; h4 * in_c];
    let mut dwh = vec![0.0; h4 * units];
    let mut db = vec![0.0; h4];
    for (pwx, pwh, pb) in partials {
        dwx.iter_mut().zip(&pwx).for_each(|(a, g)| *a += g);
        dwh.iter_mut().zip(&pwh).for_each(|(a, g)| *a += g);
        db.iter_mut().zip(&pb).for_each(|(a, g)| *a += g);
    }
    (dx, dwx, dwh, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::spec::NetworkSpec;

    fn tiny_spec() -> NetworkSpec {
        use crate::surrogate::spec::{Activation::*, LayerSpec::*};
        NetworkSpec {
            l_max: 6,
            layers: vec![
                ZeroPad { pad: 1 },
                Conv { width: 3, channels: 4, activation: Selu },
                BatchNorm,
                Conv { width: 1, channels: 3, activation: Sine },
                Lstm { units: 5 },
                Dense { units: 4, activation: Relu },
                Dense { units: 2, activation: Linear },
                Clip,
            ],
        }
    }

    fn random_batch(b: usize, t: usize, c: usize, seed: u64) -> SeqBatch {
        let mut rng = substream(seed, StreamKind::TrainShuffle, 7, 7);
        let mut x = SeqBatch::zeros(b, t, c);
        for v in &mut x.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        x
    }

    #[test]
    fn orthogonal_matrices_are_orthogonal() {
        let mut rng = substream(1, StreamKind::TrainInit, 0, 0);
        let n = 16;
        let q = orthogonal(n, &mut rng);
        for i in 0..n {
            for j in 0..n {
                let d = dot(&q[i * n..(i + 1) * n], &q[j * n..(j + 1) * n]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10, "({i},{j}): {d}");
            }
        }
    }

    #[test]
    fn zero_parameters_give_clipped_zero_output() {
        let net = Network::build(tiny_spec()).unwrap();
        let params = Parameters(vec![0.0; net.n_params()]);
        let bn = net.fresh_bn();
        let x = random_batch(3, 6, INPUT_CHANNELS, 2);
        let out = net.forward(&params, &bn, &x, Mode::Eval, false).unwrap().output;
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn outputs_are_always_clipped() {
        let net = Network::build(tiny_spec()).unwrap();
        let bn = net.fresh_bn();
        for seed in 0..5 {
            let params = net.init_params(seed);
            let x = random_batch(4, 6, INPUT_CHANNELS, seed + 10);
            let out = net.forward(&params, &bn, &x, Mode::Eval, false).unwrap().output;
            assert!(out.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn batch_order_permutes_outputs_identically() {
        let net = Network::build(tiny_spec()).unwrap();
        let params = net.init_params(3);
        let bn = net.fresh_bn();
        let x = random_batch(6, 6, INPUT_CHANNELS, 3);
        let out = net.forward(&params, &bn, &x, Mode::Eval, false).unwrap().output;

        // Reverse the batch.
        let mut rev = SeqBatch::zeros(x.b, x.t, x.c);
        for b in 0..x.b {
            for t in 0..x.t {
                rev.row_mut(b, t).copy_from_slice(x.row(x.b - 1 - b, t));
            }
        }
        let out_rev = net.forward(&params, &bn, &rev, Mode::Eval, false).unwrap().output;
        for b in 0..x.b {
            assert_eq!(out.row(b), out_rev.row(x.b - 1 - b));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let net = Network::build(tiny_spec()).unwrap();
        assert_eq!(net.init_params(9).0, net.init_params(9).0);
        assert_ne!(net.init_params(9).0, net.init_params(10).0);
    }

    #[test]
    fn forward_is_thread_count_independent() {
        // Chunked reductions must give identical bits for any pool size.
        let net = Network::build(tiny_spec()).unwrap();
        let params = net.init_params(4);
        let bn = net.fresh_bn();
        let x = random_batch(70, 6, INPUT_CHANNELS, 4);

        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| net.forward(&params, &bn, &x, Mode::Train, false).unwrap().output);
        let several = rayon::ThreadPoolBuilder::new()
            .num_threads(7)
            .build()
            .unwrap()
            .install(|| net.forward(&params, &bn, &x, Mode::Train, false).unwrap().output);
        assert_eq!(single.data, several.data);
    }
}
