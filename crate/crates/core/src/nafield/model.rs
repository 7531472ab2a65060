use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::encode::encode_into;
use super::loss::loss_with_grad;
use super::{FieldConfig, FieldError, SpectrogramTarget};
use crate::geometry::{BouncePointSet, BoundingBox, Point3};

const PROJECTOR: usize = 0;
const FUSION: usize = 1;
const HEAD_INIT_SCALE: f64 = 0.1;
const LORA_A_STD: f64 = 0.01;

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Position of one dense layer inside the flat parameter vector: a row-major
/// `d_out x d_in` weight followed by `d_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub d_in: usize,
    pub d_out: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weights(&self) -> Range<usize> {
        self.offset..self.offset + self.d_out * self.d_in
    }

    pub fn bias(&self) -> Range<usize> {
        let w = self.weights().end;
        w..w + self.d_out
    }

    pub fn size(&self) -> usize {
        self.d_out * (self.d_in + 1)
    }
}

/// Base parameters: projector, fusion, `hidden_layers` square trunk layers, head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: FieldConfig,
    layers: Vec<LayerShape>,
    values: Vec<f64>,
}

impl ModelParams {
    fn layout(config: &FieldConfig) -> Vec<LayerShape> {
        let enc = config.encoding_width();
        let d = config.hidden_width;
        let mut dims = vec![(2 * enc, d), (2 * enc + d, d)];
        dims.extend(std::iter::repeat_n((d, d), config.hidden_layers));
        dims.push((d, config.output_len()));
        let mut offset = 0;
        dims.into_iter()
            .map(|(d_in, d_out)| {
                let s = LayerShape {
                    d_in,
                    d_out,
                    offset,
                };
                offset += s.size();
                s
            })
            .collect()
    }

    /// Gaussian weights scaled by `1/sqrt(d_in)` (the head by a further 0.1), zero biases.
    pub fn init(config: FieldConfig, seed: u64) -> Result<Self, FieldError> {
        config.validate()?;
        let layers = Self::layout(&config);
        let total = layers.last().map_or(0, |l| l.offset + l.size());
        let mut values = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            let mut scale = (l.d_in as f64).sqrt().recip();
            if i == head {
                scale *= HEAD_INIT_SCALE;
            }
            for w in &mut values[l.weights()] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = z * scale;
            }
        }
        Ok(Self {
            config,
            layers,
            values,
        })
    }

    /// Rebuilds parameters from a flat vector in layout order.
    pub fn from_values(config: FieldConfig, values: Vec<f64>) -> Result<Self, FieldError> {
        config.validate()?;
        let layers = Self::layout(&config);
        let total = layers.last().map_or(0, |l| l.offset + l.size());
        if values.len() != total {
            return Err(FieldError::ShapeError(format!(
                "{} parameters for a layout of {total}",
                values.len()
            )));
        }
        Ok(Self {
            config,
            layers,
            values,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices of the square trunk layers, the ones LoRA adapts.
    pub fn trunk(&self) -> Range<usize> {
        2..2 + self.config.hidden_layers
    }

    pub fn head(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn set_head_bias(&mut self, bias: &[f64]) -> Result<(), FieldError> {
        let r = self.layers[self.head()].bias();
        if bias.len() != r.len() {
            return Err(FieldError::ShapeError(format!(
                "head bias needs {} values, got {}",
                r.len(),
                bias.len()
            )));
        }
        self.values[r].copy_from_slice(bias);
        Ok(())
    }

    /// Copy with every adapted weight replaced by `W + B A^T`.
    pub fn merged(&self, adapters: &LoraAdapters) -> Result<Self, FieldError> {
        adapters.check_against(self)?;
        let mut out = self.clone();
        let r = adapters.rank;
        for s in &adapters.shapes {
            let l = self.layers[s.layer];
            let a = &adapters.values[s.a()];
            let b = &adapters.values[s.b()];
            let w = &mut out.values[l.weights()];
            for o in 0..l.d_out {
                for i in 0..l.d_in {
                    let mut acc = 0.0;
                    for k in 0..r {
                        acc += b[o * r + k] * a[i * r + k];
                    }
                    w[o * l.d_in + i] += acc;
                }
            }
        }
        Ok(out)
    }
}

/// Where one adapter pair lives in the flat adapter vector: `A` (`d_in x r`)
/// then `B` (`d_out x r`), both row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoraShape {
    pub layer: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub rank: usize,
    pub offset: usize,
}

impl LoraShape {
    pub fn a(&self) -> Range<usize> {
        self.offset..self.offset + self.d_in * self.rank
    }

    pub fn b(&self) -> Range<usize> {
        let s = self.a().end;
        s..s + self.d_out * self.rank
    }
}

/// Rank-`r` adapters on every trunk layer: effective weight `W + B A^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapters {
    pub rank: usize,
    pub shapes: Vec<LoraShape>,
    pub values: Vec<f64>,
}

impl LoraAdapters {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_against(&self, params: &ModelParams) -> Result<(), FieldError> {
        for s in &self.shapes {
            let l = params.layers.get(s.layer).ok_or_else(|| {
                FieldError::ShapeError(format!("adapter targets missing layer {}", s.layer))
            })?;
            if l.d_in != s.d_in || l.d_out != s.d_out {
                return Err(FieldError::ShapeError(format!(
                    "adapter {}x{} on layer {} of shape {}x{}",
                    s.d_out, s.d_in, s.layer, l.d_out, l.d_in
                )));
            }
        }
        Ok(())
    }

    fn for_layer(&self, layer: usize) -> Option<&LoraShape> {
        self.shapes.iter().find(|s| s.layer == layer)
    }
}

/// Fresh adapters: `A` seeded Gaussian with std 0.01, `B = 0`, so the adapted
/// model starts out identical to the base model.
pub fn lora_init(params: &ModelParams, rank: usize, seed: u64) -> Result<LoraAdapters, FieldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes = Vec::new();
    let mut offset = 0;
    for layer in params.trunk() {
        let l = params.layers[layer];
        if rank == 0 || rank > l.d_in.min(l.d_out) {
            return Err(FieldError::RankError {
                rank,
                d_in: l.d_in,
                d_out: l.d_out,
            });
        }
        let s = LoraShape {
            layer,
            d_in: l.d_in,
            d_out: l.d_out,
            rank,
            offset,
        };
        offset = s.b().end;
        shapes.push(s);
    }
    let mut values = vec![0.0; offset];
    for s in &shapes {
        for a in &mut values[s.a()] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *a = z * LORA_A_STD;
        }
    }
    Ok(LoraAdapters {
        rank,
        shapes,
        values,
    })
}

/// A room's bounding box and its bounce points, normalised to `[-1, 1]^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomContext {
    pub bbox: BoundingBox,
    bounce: Vec<Point3>,
}

impl RoomContext {
    pub fn new(bbox: BoundingBox, bounce: &BouncePointSet) -> Self {
        Self {
            bounce: bounce.points.iter().map(|&p| bbox.normalize(p)).collect(),
            bbox,
        }
    }

    pub fn bounce_count(&self) -> usize {
        self.bounce.len()
    }
}

/// One supervised pair.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub room: &'a RoomContext,
    pub src: Point3,
    pub rcv: Point3,
    pub target: &'a SpectrogramTarget,
}

#[derive(Debug, Default)]
struct Trace {
    bounce_in: Vec<f64>,
    bounce_pre: Vec<f64>,
    // input and pre-activation of fusion and trunk layers, in order
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    // A^T x per trunk layer when adapted
    lora_u: Vec<Vec<f64>>,
    head_in: Vec<f64>,
}

fn dense(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let d_in = x.len();
    for (o, y) in out.iter_mut().enumerate() {
        let row = &w[o * d_in..(o + 1) * d_in];
        *y = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<(), FieldError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FieldError::NumericalError(what.to_string()))
    }
}

fn run(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    room: &RoomContext,
    src: Point3,
    rcv: Point3,
) -> Result<(Vec<f64>, Trace), FieldError> {
    let cfg = &params.config;
    if room.bounce.len() != cfg.num_bounce_points {
        return Err(FieldError::ShapeError(format!(
            "{} bounce points, model expects {}",
            room.bounce.len(),
            cfg.num_bounce_points
        )));
    }
    if src.iter().chain(&rcv).any(|v| !v.is_finite()) {
        return Err(FieldError::InvalidInput(
            "non-finite source or receiver".into(),
        ));
    }
    if let Some(a) = adapters {
        a.check_against(params)?;
    }
    let levels = cfg.encoding_levels;
    let d = cfg.hidden_width;
    let s = room.bbox.normalize(src);
    let r = room.bbox.normalize(rcv);
    let v = &params.values;
    let mut trace = Trace::default();

    let proj = params.layers[PROJECTOR];
    let k = room.bounce.len();
    trace.bounce_in = Vec::with_capacity(k * proj.d_in);
    for b in &room.bounce {
        let rel_s = [0, 1, 2].map(|i| 0.5 * (b[i] - s[i]));
        let rel_r = [0, 1, 2].map(|i| 0.5 * (b[i] - r[i]));
        encode_into(rel_s, levels, &mut trace.bounce_in);
        encode_into(rel_r, levels, &mut trace.bounce_in);
    }
    trace.bounce_pre = vec![0.0; k * d];
    let mut pooled = vec![0.0; d];
    for j in 0..k {
        let pre = &mut trace.bounce_pre[j * d..(j + 1) * d];
        dense(
            &v[proj.weights()],
            &v[proj.bias()],
            &trace.bounce_in[j * proj.d_in..(j + 1) * proj.d_in],
            pre,
        );
        for (p, &x) in pooled.iter_mut().zip(pre.iter()) {
            *p += silu(x);
        }
    }
    pooled.iter_mut().for_each(|p| *p /= k as f64);

    let mut x = Vec::with_capacity(params.layers[FUSION].d_in);
    encode_into(s, levels, &mut x);
    encode_into(r, levels, &mut x);
    x.extend_from_slice(&pooled);

    for li in FUSION..params.head() {
        let l = params.layers[li];
        let mut pre = vec![0.0; l.d_out];
        dense(&v[l.weights()], &v[l.bias()], &x, &mut pre);
        if let Some(ad) = adapters.and_then(|a| a.for_layer(li).map(|s| (a, s))) {
            let (set, shape) = ad;
            let rank = shape.rank;
            let a = &set.values[shape.a()];
            let bm = &set.values[shape.b()];
            let mut u = vec![0.0; rank];
            for (i, xi) in x.iter().enumerate() {
                for (kk, uk) in u.iter_mut().enumerate() {
                    *uk += a[i * rank + kk] * xi;
                }
            }
            for (o, p) in pre.iter_mut().enumerate() {
                *p += (0..rank).map(|kk| bm[o * rank + kk] * u[kk]).sum::<f64>();
            }
            trace.lora_u.push(u);
        } else {
            trace.lora_u.push(Vec::new());
        }
        let next: Vec<f64> = pre.iter().map(|&p| silu(p)).collect();
        trace.inputs.push(std::mem::replace(&mut x, next));
        trace.pre.push(pre);
    }

    let head = params.layers[params.head()];
    let mut out = vec![0.0; head.d_out];
    dense(&v[head.weights()], &v[head.bias()], &x, &mut out);
    trace.head_in = x;
    check_finite(&out, "head output")?;
    Ok((out, trace))
}

/// Predicted log-magnitude spectrogram for one source/receiver pair.
pub fn forward(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    room: &RoomContext,
    src: Point3,
    rcv: Point3,
) -> Result<SpectrogramTarget, FieldError> {
    let (out, _) = run(params, adapters, room, src, rcv)?;
    let cfg = params.config();
    SpectrogramTarget::new(cfg.frames(), cfg.bins(), out)
}

/// Mean batch loss and its gradients. Without adapters every base value is
/// trainable; with adapters only the adapter values are.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub loss: f64,
    pub base: Option<Vec<f64>>,
    pub lora: Option<Vec<f64>>,
}

fn backward(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    trace: &Trace,
    dout: &[f64],
    scale: f64,
    base_grad: Option<&mut [f64]>,
    lora_grad: Option<&mut [f64]>,
) -> Result<(), FieldError> {
    let v = &params.values;
    let mut base_grad = base_grad;
    let mut lora_grad = lora_grad;

    let head = params.layers[params.head()];
    let x = &trace.head_in;
    if let Some(g) = base_grad.as_deref_mut() {
        let (gw, gb) =
            g[head.offset..head.offset + head.size()].split_at_mut(head.d_out * head.d_in);
        for o in 0..head.d_out {
            let go = dout[o] * scale;
            if go == 0.0 {
                continue;
            }
            gb[o] += go;
            for (gwi, xi) in gw[o * head.d_in..(o + 1) * head.d_in].iter_mut().zip(x) {
                *gwi += go * xi;
            }
        }
    }
    let w = &v[head.weights()];
    let mut dx = vec![0.0; head.d_in];
    for o in 0..head.d_out {
        let go = dout[o] * scale;
        if go == 0.0 {
            continue;
        }
        for (d, wi) in dx.iter_mut().zip(&w[o * head.d_in..(o + 1) * head.d_in]) {
            *d += go * wi;
        }
    }

    // fusion and trunk, last to first
    let lowest_trainable = if base_grad.is_some() {
        FUSION
    } else {
        adapters
            .and_then(|a| a.shapes.iter().map(|s| s.layer).min())
            .unwrap_or(params.head())
    };
    for li in (FUSION..params.head()).rev() {
        if li < lowest_trainable {
            return Ok(());
        }
        let step = li - FUSION;
        let l = params.layers[li];
        let input = &trace.inputs[step];
        let dpre: Vec<f64> = dx
            .iter()
            .zip(&trace.pre[step])
            .map(|(g, &p)| g * silu_grad(p))
            .collect();
        check_finite(&dpre, &format!("gradient of layer {li}"))?;
        if let Some(g) = base_grad.as_deref_mut() {
            let (gw, gb) = g[l.offset..l.offset + l.size()].split_at_mut(l.d_out * l.d_in);
            for o in 0..l.d_out {
                gb[o] += dpre[o];
                for (gwi, xi) in gw[o * l.d_in..(o + 1) * l.d_in].iter_mut().zip(input) {
                    *gwi += dpre[o] * xi;
                }
            }
        }
        let w = &v[l.weights()];
        let mut next = vec![0.0; l.d_in];
        for o in 0..l.d_out {
            for (d, wi) in next.iter_mut().zip(&w[o * l.d_in..(o + 1) * l.d_in]) {
                *d += dpre[o] * wi;
            }
        }
        if let Some((set, shape)) = adapters.and_then(|a| a.for_layer(li).map(|s| (a, s))) {
            let rank = shape.rank;
            let u = &trace.lora_u[step];
            let a = &set.values[shape.a()];
            let bm = &set.values[shape.b()];
            let mut dv = vec![0.0; rank];
            for o in 0..l.d_out {
                for kk in 0..rank {
                    dv[kk] += bm[o * rank + kk] * dpre[o];
                }
            }
            if let Some(g) = lora_grad.as_deref_mut() {
                let gb_range = shape.b();
                for o in 0..l.d_out {
                    for kk in 0..rank {
                        g[gb_range.start + o * rank + kk] += dpre[o] * u[kk];
                    }
                }
                let ga_range = shape.a();
                for (i, xi) in input.iter().enumerate() {
                    for kk in 0..rank {
                        g[ga_range.start + i * rank + kk] += xi * dv[kk];
                    }
                }
            }
            for (i, d) in next.iter_mut().enumerate() {
                *d += (0..rank).map(|kk| a[i * rank + kk] * dv[kk]).sum::<f64>();
            }
        }
        dx = next;
    }

    // dx is now the gradient of the fusion input; its tail is the pooled feature
    let Some(g) = base_grad else {
        return Ok(());
    };
    let proj = params.layers[PROJECTOR];
    let d = proj.d_out;
    let pooled_grad = &dx[dx.len() - d..];
    let k = trace.bounce_pre.len() / d;
    let (gw, gb) = g[proj.offset..proj.offset + proj.size()].split_at_mut(d * proj.d_in);
    for j in 0..k {
        let pre = &trace.bounce_pre[j * d..(j + 1) * d];
        let input = &trace.bounce_in[j * proj.d_in..(j + 1) * proj.d_in];
        for o in 0..d {
            let go = pooled_grad[o] / k as f64 * silu_grad(pre[o]);
            gb[o] += go;
            for (gwi, xi) in gw[o * proj.d_in..(o + 1) * proj.d_in].iter_mut().zip(input) {
                *gwi += go * xi;
            }
        }
    }
    Ok(())
}

/// Exact reverse-mode gradients of the mean loss over `batch`.
pub fn gradients(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    batch: &[Example<'_>],
) -> Result<GradientSet, FieldError> {
    if batch.is_empty() {
        return Err(FieldError::InvalidInput("empty batch".into()));
    }
    let mut base = adapters.is_none().then(|| vec![0.0; params.len()]);
    let mut lora = adapters.map(|a| vec![0.0; a.len()]);
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let cfg = params.config();
    for ex in batch {
        let (out, trace) = run(params, adapters, ex.room, ex.src, ex.rcv)?;
        let pred = SpectrogramTarget {
            frames: cfg.frames(),
            bins: cfg.bins(),
            values: out,
        };
        let (l, dout) = loss_with_grad(&pred, ex.target)?;
        total += l;
        backward(
            params,
            adapters,
            &trace,
            &dout,
            scale,
            base.as_deref_mut(),
            lora.as_deref_mut(),
        )?;
    }
    for g in base.iter().chain(lora.iter()) {
        check_finite(g, "gradient")?;
    }
    Ok(GradientSet {
        loss: total * scale,
        base,
        lora,
    })
}
