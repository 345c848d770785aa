//! Built-in convolutional scorer.
//!
//! `n` blocks of 3x3 convolution (padding 1) + ReLU, each followed by 2x2 max
//! pooling except the last, which is globally average-pooled into a 2-logit
//! head. Softmax over the two logits gives the "diseased" probability, which
//! equals `sigmoid(logit_1 - logit_0)`.
//!
//! Convolutions run as im2col + GEMM one sample at a time, so a sample's score
//! never depends on the rest of its batch.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use super::gemm::{sgemm, Layout};
use super::{Backbone, BackboneKind, BackboneSpec, OptimizerConfig, OptimizerKind, PatchScorer, TrainBatch, SCORE_EPS};
use crate::emipld::loss::{sigmoid, weighted_bce_on_margins};
use crate::{seed, Error, Raster, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SmallCnnConfig {
    pub input_size: usize,
    /// Output channels of each conv block.
    pub widths: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub init_seed: u64,
}

impl Default for SmallCnnConfig {
    fn default() -> Self {
        SmallCnnConfig { input_size: 64, widths: vec![16, 32, 64, 64], optimizer: OptimizerConfig::default(), init_seed: 0 }
    }
}

impl SmallCnnConfig {
    /// Every violated constraint, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.widths.is_empty() || self.widths.contains(&0) {
            out.push(format!("backbone.widths must be non-empty and positive, got {:?}", self.widths));
        } else {
            let shrink = 1usize << (self.widths.len() - 1);
            if self.input_size == 0 || self.input_size % shrink != 0 {
                out.push(format!(
                    "backbone.input_size must be a positive multiple of {shrink} for {} conv blocks, got {}",
                    self.widths.len(),
                    self.input_size
                ));
            }
        }
        let opt = &self.optimizer;
        if !(0.0..1.0).contains(&opt.momentum) {
            out.push(format!("backbone.optimizer.momentum must lie in [0,1), got {}", opt.momentum));
        }
        if !(0.0..1.0).contains(&opt.beta2) {
            out.push(format!("backbone.optimizer.beta2 must lie in [0,1), got {}", opt.beta2));
        }
        if !(opt.eps > 0.0) {
            out.push(format!("backbone.optimizer.eps must be > 0, got {}", opt.eps));
        }
        if !(opt.max_grad_norm >= 0.0) {
            out.push(format!("backbone.optimizer.max_grad_norm must be >= 0, got {}", opt.max_grad_norm));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvLayer {
    cin: usize,
    cout: usize,
    /// Input (and output) spatial side.
    side: usize,
    pool: bool,
    w_off: usize,
    b_off: usize,
}

impl ConvLayer {
    fn k(&self) -> usize {
        self.cin * 9
    }

    fn n(&self) -> usize {
        self.side * self.side
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Vec<f32>,
    second: Vec<f32>,
    t: u64,
}

/// The built-in scorer and its full trainable state.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallCnn {
    pub(crate) config: SmallCnnConfig,
    layers: Vec<ConvLayer>,
    head_w: usize,
    head_b: usize,
    pub(crate) params: Vec<f32>,
    pub(crate) step: u64,
    pub(crate) source_checkpoint: Option<String>,
    moments: Option<Moments>,
}

struct Trace {
    cols: Vec<Vec<f32>>,
    relu: Vec<Vec<f32>>,
    pool_idx: Vec<Vec<u32>>,
    gap: Vec<f32>,
    logits: [f32; 2],
}

impl Trace {
    fn margin(&self) -> f64 {
        f64::from(self.logits[1]) - f64::from(self.logits[0])
    }
}

fn layout(config: &SmallCnnConfig) -> (Vec<ConvLayer>, usize, usize, usize) {
    let mut layers = Vec::with_capacity(config.widths.len());
    let mut offset = 0;
    let mut cin = 1;
    let mut side = config.input_size;
    for (i, &cout) in config.widths.iter().enumerate() {
        let pool = i + 1 < config.widths.len();
        let w_off = offset;
        let b_off = w_off + cout * cin * 9;
        offset = b_off + cout;
        layers.push(ConvLayer { cin, cout, side, pool, w_off, b_off });
        cin = cout;
        if pool {
            side /= 2;
        }
    }
    let head_w = offset;
    let head_b = head_w + 2 * cin;
    (layers, head_w, head_b, head_b + 2)
}

fn im2col(input: &[f32], c: usize, s: usize, out: &mut [f32]) {
    let n = s * s;
    for ci in 0..c {
        let plane = &input[ci * n..(ci + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut out[(ci * 9 + ky * 3 + kx) * n..(ci * 9 + ky * 3 + kx + 1) * n];
                let (x_lo, x_hi) = (usize::from(kx == 0), if kx == 2 { s - 1 } else { s });
                for y in 0..s {
                    let dst = &mut row[y * s..(y + 1) * s];
                    let sy = y + ky;
                    if sy == 0 || sy > s {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[(sy - 1) * s..sy * s];
                    dst[..x_lo].fill(0.0);
                    dst[x_hi..].fill(0.0);
                    // dst[x] = src[x + kx - 1]
                    dst[x_lo..x_hi].copy_from_slice(&src[x_lo + kx - 1..x_hi + kx - 1]);
                }
            }
        }
    }
}

fn col2im(cols: &[f32], c: usize, s: usize, out: &mut [f32]) {
    let n = s * s;
    out.fill(0.0);
    for ci in 0..c {
        let plane = &mut out[ci * n..(ci + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * n..(ci * 9 + ky * 3 + kx + 1) * n];
                let (x_lo, x_hi) = (usize::from(kx == 0), if kx == 2 { s - 1 } else { s });
                for y in 0..s {
                    let sy = y + ky;
                    if sy == 0 || sy > s {
                        continue;
                    }
                    let src = &row[y * s + x_lo..y * s + x_hi];
                    let dst = &mut plane[(sy - 1) * s + x_lo + kx - 1..(sy - 1) * s + x_hi + kx - 1];
                    for (d, v) in dst.iter_mut().zip(src) {
                        *d += *v;
                    }
                }
            }
        }
    }
}

fn max_pool(input: &[f32], c: usize, s: usize) -> (Vec<f32>, Vec<u32>) {
    let h = s / 2;
    let mut out = vec![0.0f32; c * h * h];
    let mut idx = vec![0u32; c * h * h];
    for ci in 0..c {
        let plane = &input[ci * s * s..(ci + 1) * s * s];
        for y in 0..h {
            for x in 0..h {
                let mut best = (2 * y) * s + 2 * x;
                for cand in [(2 * y) * s + 2 * x + 1, (2 * y + 1) * s + 2 * x, (2 * y + 1) * s + 2 * x + 1] {
                    if plane[cand] > plane[best] {
                        best = cand;
                    }
                }
                let o = ci * h * h + y * h + x;
                out[o] = plane[best];
                idx[o] = best as u32;
            }
        }
    }
    (out, idx)
}

/// Maps a patch to normalized network input, converting color to luminance.
fn to_input(patch: &Raster) -> Vec<f32> {
    let luma;
    let gray = if patch.channels() == 1 {
        patch
    } else {
        luma = patch.luminance();
        &luma
    };
    gray.as_slice().iter().map(|&v| (f32::from(v) - 128.0) / 64.0).collect()
}

impl SmallCnn {
    /// Fresh network with He-normal conv weights drawn from `config.init_seed`.
    pub fn new(config: SmallCnnConfig) -> Result<Self> {
        config.validate()?;
        let (layers, head_w, head_b, total) = layout(&config);
        let mut params = vec![0.0f32; total];
        let mut rng = seed::rng(config.init_seed, 0x0063_6e6e, 0);
        for l in &layers {
            let std = libm::sqrtf(2.0 / l.k() as f32);
            let normal = Normal::new(0.0f32, std).unwrap();
            for p in &mut params[l.w_off..l.b_off] {
                *p = normal.sample(&mut rng);
            }
        }
        let c = layers.last().map_or(1, |l| l.cout);
        let normal = Normal::new(0.0f32, libm::sqrtf(1.0 / c as f32)).unwrap();
        for p in &mut params[head_w..head_b] {
            *p = normal.sample(&mut rng);
        }
        Ok(SmallCnn { config, layers, head_w, head_b, params, step: 0, source_checkpoint: None, moments: None })
    }

    /// Rebuilds a network from saved parameters.
    pub fn from_parameters(
        config: SmallCnnConfig,
        params: Vec<f32>,
        step: u64,
        source_checkpoint: Option<String>,
    ) -> Result<Self> {
        config.validate()?;
        let (layers, head_w, head_b, total) = layout(&config);
        if params.len() != total {
            return Err(Error::mismatch(format!("{total} parameters"), params.len()));
        }
        Ok(SmallCnn { config, layers, head_w, head_b, params, step, source_checkpoint, moments: None })
    }

    pub fn config(&self) -> &SmallCnnConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[f32] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn source_checkpoint(&self) -> Option<&str> {
        self.source_checkpoint.as_deref()
    }

    pub fn set_source_checkpoint(&mut self, id: impl Into<String>) {
        self.source_checkpoint = Some(id.into());
    }

    fn check_patch(&self, patch: &Raster) -> Result<()> {
        let s = self.config.input_size;
        if patch.width() != s || patch.height() != s {
            return Err(Error::mismatch(format!("{s}x{s} patch"), format!("{}x{}", patch.width(), patch.height())));
        }
        Ok(())
    }

    fn forward(&self, mut act: Vec<f32>) -> Trace {
        let mut trace = Trace {
            cols: Vec::with_capacity(self.layers.len()),
            relu: Vec::with_capacity(self.layers.len()),
            pool_idx: Vec::with_capacity(self.layers.len()),
            gap: Vec::new(),
            logits: [0.0; 2],
        };
        for l in &self.layers {
            let (k, n) = (l.k(), l.n());
            let mut cols = vec![0.0f32; k * n];
            im2col(&act, l.cin, l.side, &mut cols);
            let mut z = vec![0.0f32; l.cout * n];
            for (co, row) in z.chunks_exact_mut(n).enumerate() {
                row.fill(self.params[l.b_off + co]);
            }
            sgemm(
                l.cout,
                k,
                n,
                &self.params[l.w_off..l.b_off],
                Layout::row_major(k),
                &cols,
                Layout::row_major(n),
                1.0,
                &mut z,
                Layout::row_major(n),
            );
            for v in &mut z {
                *v = v.max(0.0);
            }
            if l.pool {
                let (pooled, idx) = max_pool(&z, l.cout, l.side);
                trace.pool_idx.push(idx);
                act = pooled;
            } else {
                trace.gap = z.chunks_exact(n).map(|row| row.iter().sum::<f32>() / n as f32).collect();
            }
            trace.cols.push(cols);
            trace.relu.push(z);
        }
        let c = trace.gap.len();
        for o in 0..2 {
            let w = &self.params[self.head_w + o * c..self.head_w + (o + 1) * c];
            trace.logits[o] = self.params[self.head_b + o] + w.iter().zip(&trace.gap).map(|(a, b)| a * b).sum::<f32>();
        }
        trace
    }

    /// Accumulates parameter gradients for one sample into `grads`.
    fn backward(&self, trace: &Trace, dlogits: [f32; 2], grads: &mut [f32]) {
        let c = trace.gap.len();
        let mut dgap = vec![0.0f32; c];
        for o in 0..2 {
            grads[self.head_b + o] += dlogits[o];
            for ch in 0..c {
                grads[self.head_w + o * c + ch] += dlogits[o] * trace.gap[ch];
                dgap[ch] += dlogits[o] * self.params[self.head_w + o * c + ch];
            }
        }

        let last = self.layers.len() - 1;
        let n_last = self.layers[last].n();
        // d(relu output) of the last block, from the average pool.
        let mut dz: Vec<f32> = dgap.iter().flat_map(|&d| core::iter::repeat(d / n_last as f32).take(n_last)).collect();

        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let (k, n) = (l.k(), l.n());
            // ReLU gate.
            for (d, &r) in dz.iter_mut().zip(&trace.relu[li]) {
                if r <= 0.0 {
                    *d = 0.0;
                }
            }
            sgemm(
                l.cout,
                n,
                k,
                &dz,
                Layout::row_major(n),
                &trace.cols[li],
                Layout::transposed(n),
                1.0,
                &mut grads[l.w_off..l.b_off],
                Layout::row_major(k),
            );
            for (co, row) in dz.chunks_exact(n).enumerate() {
                grads[l.b_off + co] += row.iter().sum::<f32>();
            }
            if li == 0 {
                break;
            }
            let mut dcols = vec![0.0f32; k * n];
            sgemm(
                k,
                l.cout,
                n,
                &self.params[l.w_off..l.b_off],
                Layout::transposed(k),
                &dz,
                Layout::row_major(n),
                0.0,
                &mut dcols,
                Layout::row_major(n),
            );
            let mut dinput = vec![0.0f32; l.cin * n];
            col2im(&dcols, l.cin, l.side, &mut dinput);

            // Route through the previous block's max pool.
            let prev = self.layers[li - 1];
            let pn = prev.n();
            let mut dprev = vec![0.0f32; prev.cout * pn];
            for (o, (&d, &src)) in dinput.iter().zip(&trace.pool_idx[li - 1]).enumerate() {
                let ch = o / n;
                dprev[ch * pn + src as usize] += d;
            }
            dz = dprev;
        }
    }

    fn apply_update(&mut self, grads: &mut [f32], learning_rate: f64) {
        let opt = self.config.optimizer;
        if opt.max_grad_norm > 0.0 {
            let norm = libm::sqrt(grads.iter().map(|&g| f64::from(g) * f64::from(g)).sum::<f64>());
            if norm > opt.max_grad_norm {
                let scale = (opt.max_grad_norm / norm) as f32;
                grads.iter_mut().for_each(|g| *g *= scale);
            }
        }
        let p = self.params.len();
        let moments = self.moments.get_or_insert_with(|| Moments { first: vec![0.0; p], second: vec![0.0; p], t: 0 });
        moments.t += 1;
        let lr = learning_rate as f32;
        let mu = opt.momentum as f32;
        match opt.kind {
            OptimizerKind::Adam => {
                let b2 = opt.beta2 as f32;
                let bc1 = 1.0 - libm::pow(opt.momentum, moments.t as f64) as f32;
                let bc2 = 1.0 - libm::pow(opt.beta2, moments.t as f64) as f32;
                let eps = opt.eps as f32;
                for i in 0..p {
                    let g = grads[i];
                    let m = &mut moments.first[i];
                    let v = &mut moments.second[i];
                    *m = mu * *m + (1.0 - mu) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let step = (*m / bc1) / (libm::sqrtf(*v / bc2) + eps);
                    self.params[i] -= lr * step;
                }
            }
            OptimizerKind::SgdMomentum => {
                for i in 0..p {
                    let v = &mut moments.first[i];
                    *v = mu * *v + grads[i];
                    self.params[i] -= lr * *v;
                }
            }
        }
    }
}

impl PatchScorer for SmallCnn {
    fn input_size(&self) -> usize {
        self.config.input_size
    }

    fn score_patches(&self, patches: &[Raster]) -> Result<Vec<f64>> {
        patches
            .iter()
            .map(|p| {
                self.check_patch(p)?;
                let trace = self.forward(to_input(p));
                Ok(sigmoid(trace.margin()).clamp(SCORE_EPS, 1.0 - SCORE_EPS))
            })
            .collect()
    }
}

impl Backbone for SmallCnn {
    fn spec(&self) -> BackboneSpec {
        BackboneSpec {
            kind: BackboneKind::BuiltinSmallCnn,
            input_size: self.config.input_size,
            description: format!("small-cnn widths={:?} params={}", self.config.widths, self.params.len()),
            pretrained: false,
        }
    }

    fn train_step(&mut self, batch: TrainBatch<'_>, learning_rate: f64) -> Result<f64> {
        let n = batch.patches.len();
        if n == 0 {
            return Err(Error::Empty("training batch"));
        }
        if batch.labels.len() != n || batch.weights.len() != n {
            return Err(Error::mismatch(
                format!("{n} labels and weights"),
                format!("{} labels, {} weights", batch.labels.len(), batch.weights.len()),
            ));
        }
        if let Some(&l) = batch.labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidArgument(format!("labels must be 0 or 1, got {l}")));
        }
        let mut grads = vec![0.0f32; self.params.len()];
        let mut loss = 0.0;
        for ((patch, &label), &weight) in batch.patches.iter().zip(batch.labels).zip(batch.weights) {
            self.check_patch(patch)?;
            let trace = self.forward(to_input(patch));
            let (l, dd) = weighted_bce_on_margins(&[trace.margin()], &[label], &[weight]);
            loss += l / n as f64;
            let dd = (dd[0] / n as f64) as f32;
            if dd != 0.0 {
                self.backward(&trace, [-dd, dd], &mut grads);
            }
        }
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step: self.step, loss, batch: n });
        }
        self.apply_update(&mut grads, learning_rate);
        self.step += 1;
        Ok(loss)
    }

    fn reset_optimizer(&mut self) {
        self.moments = None;
    }
}
