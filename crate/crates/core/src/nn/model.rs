//! The classifier: per-frequency batch norm, four conv/pool stages, a
//! 256-unit hidden layer with dropout, and a softmax output.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{conv_relu_backward, dropout_mask, conv_relu_forward, maxpool_backward, maxpool_forward, Shape3};
use super::scalar::{rm, tr, Scalar};
use crate::error::{invalid, Result};

pub const BN_EPSILON: f64 = 1e-3;
/// Weight kept on the old running statistic at each training batch.
pub const BN_MOMENTUM: f64 = 0.9;
/// Probabilities are clamped here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;
pub const STANDARD_FILTERS: [usize; 4] = [64, 128, 256, 256];
pub const STANDARD_DENSE_UNITS: usize = 256;
pub const STANDARD_DROPOUT: f64 = 0.5;
pub const MIN_INPUT_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_height: usize,
    pub input_width: usize,
    pub filters: [usize; 4],
    pub dense_units: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
}

// Tensor slots inside `Params::tensors`.
pub const BN_GAMMA: usize = 0;
pub const BN_BETA: usize = 1;
pub const fn conv_kernel(i: usize) -> usize {
    2 + 2 * i
}
pub const fn conv_bias(i: usize) -> usize {
    3 + 2 * i
}
pub const DENSE1_W: usize = 10;
pub const DENSE1_B: usize = 11;
pub const DENSE2_W: usize = 12;
pub const DENSE2_B: usize = 13;
pub const N_TENSORS: usize = 14;

impl Architecture {
    pub fn standard(input_height: usize, input_width: usize, n_classes: usize) -> Self {
        Architecture {
            input_height,
            input_width,
            filters: STANDARD_FILTERS,
            dense_units: STANDARD_DENSE_UNITS,
            n_classes,
            dropout_rate: STANDARD_DROPOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_height < MIN_INPUT_DIM || self.input_width < MIN_INPUT_DIM {
            return Err(invalid(format!(
                "input {}x{} is too small for four 2x2 pools (need >= {MIN_INPUT_DIM} per axis)",
                self.input_height, self.input_width
            )));
        }
        if self.filters.contains(&0) || self.dense_units == 0 {
            return Err(invalid("layer widths must be positive"));
        }
        if self.n_classes < 2 {
            return Err(invalid("need at least two classes"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Input shape of each conv stage, then the final pooled shape.
    pub fn stage_shapes(&self) -> [Shape3; 5] {
        let mut shapes = [Shape3 { h: self.input_height, w: self.input_width, c: 1 }; 5];
        for i in 0..4 {
            let s = shapes[i];
            shapes[i + 1] = Shape3 { h: s.h / 2, w: s.w / 2, c: self.filters[i] };
        }
        shapes
    }

    pub fn flatten_size(&self) -> usize {
        self.stage_shapes()[4].len()
    }

    pub fn input_len(&self) -> usize {
        self.input_height * self.input_width
    }

    /// Names and shapes of the trainable tensors, in slot order.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = vec![
            ("bn.gamma".to_string(), vec![self.input_height]),
            ("bn.beta".to_string(), vec![self.input_height]),
        ];
        let shapes = self.stage_shapes();
        for i in 0..4 {
            specs.push((format!("conv{}.kernel", i + 1), vec![3, 3, shapes[i].c, self.filters[i]]));
            specs.push((format!("conv{}.bias", i + 1), vec![self.filters[i]]));
        }
        let flat = self.flatten_size();
        specs.push(("dense1.kernel".into(), vec![flat, self.dense_units]));
        specs.push(("dense1.bias".into(), vec![self.dense_units]));
        specs.push(("dense2.kernel".into(), vec![self.dense_units, self.n_classes]));
        specs.push(("dense2.bias".into(), vec![self.n_classes]));
        specs
    }
}

/// Trainable tensors (also used for gradients and optimizer moments).
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros_like(arch: &Architecture) -> Self {
        Params {
            tensors: arch
                .tensor_specs()
                .iter()
                .map(|(_, dims)| vec![T::zero(); dims.iter().product()])
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weights plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub arch: Architecture,
    pub params: Params<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub seed: u64,
}

/// Standard network for `input_height × input_width` single-channel images.
pub fn init_model(input_height: usize, input_width: usize, n_classes: usize, seed: u64) -> Result<Model<f32>> {
    Model::new(Architecture::standard(input_height, input_width, n_classes), seed)
}

/// Batch-norm statistics from one training batch.
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Output of one training-mode forward/backward pass.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub loss: f64,
    pub correct: usize,
    pub grads: Params<T>,
    pub stats: BatchStats<T>,
}

struct SampleCache<T> {
    relu: Vec<Vec<T>>,
    pooled: Vec<Vec<T>>,
    argmax: Vec<Vec<u32>>,
}

struct BnCache<T> {
    xhat: Vec<Vec<T>>,
    stats: BatchStats<T>,
}

struct ForwardCache<T> {
    bn_out: Vec<Vec<T>>,
    bn: Option<BnCache<T>>,
    samples: Vec<SampleCache<T>>,
    flat: Vec<T>,
    hidden: Vec<T>,
    mask: Option<Vec<T>>,
    dropped: Vec<T>,
    probs: Vec<T>,
}

impl<T: Scalar> Model<T> {
    /// Initialization: He-uniform (`±√(6/fan_in)`) for the ReLU layers,
    /// LeCun-uniform (`±√(3/fan_in)`) for the softmax layer, zero biases,
    /// unit batch-norm scale.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::<T>::zeros_like(&arch);
        params.tensors[BN_GAMMA].fill(T::one());
        let shapes = arch.stage_shapes();
        let mut uniform = |t: &mut Vec<T>, limit: f64| {
            for v in t.iter_mut() {
                *v = T::of(rng.gen_range(-limit..limit));
            }
        };
        for (i, s) in shapes.iter().take(4).enumerate() {
            uniform(&mut params.tensors[conv_kernel(i)], (6.0 / (9 * s.c) as f64).sqrt());
        }
        uniform(&mut params.tensors[DENSE1_W], (6.0 / arch.flatten_size() as f64).sqrt());
        uniform(&mut params.tensors[DENSE2_W], (3.0 / arch.dense_units as f64).sqrt());
        let h = arch.input_height;
        Ok(Model {
            arch,
            params,
            running_mean: vec![T::zero(); h],
            running_var: vec![T::one(); h],
            seed,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        Model {
            arch: self.arch.clone(),
            params: Params { tensors: self.params.tensors.iter().map(conv).collect() },
            running_mean: conv(&self.running_mean),
            running_var: conv(&self.running_var),
            seed: self.seed,
        }
    }

    fn check_batch(&self, images: &[&[T]]) -> Result<()> {
        if images.is_empty() {
            return Err(invalid("empty batch"));
        }
        let want = self.arch.input_len();
        if let Some(bad) = images.iter().position(|im| im.len() != want) {
            return Err(invalid(format!(
                "image {bad} has {} values, model expects {}x{}",
                images[bad].len(),
                self.arch.input_height,
                self.arch.input_width
            )));
        }
        Ok(())
    }

    fn batch_norm(&self, images: &[&[T]], training: bool) -> (Vec<Vec<T>>, Option<BnCache<T>>) {
        let (h, w) = (self.arch.input_height, self.arch.input_width);
        let gamma = &self.params.tensors[BN_GAMMA];
        let beta = &self.params.tensors[BN_BETA];
        let (mean, var): (Vec<T>, Vec<T>) = if training {
            let count = (images.len() * w) as f64;
            (0..h)
                .map(|r| {
                    let mut sum = 0.0;
                    for im in images {
                        sum += im[r * w..(r + 1) * w].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    let mu = sum / count;
                    let mut sq = 0.0;
                    for im in images {
                        sq += im[r * w..(r + 1) * w].iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>();
                    }
                    (T::of(mu), T::of(sq / count))
                })
                .unzip()
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let istd: Vec<T> = var.iter().map(|&v| T::of(1.0 / (v.as_f64() + BN_EPSILON).sqrt())).collect();
        let mut xhats = Vec::with_capacity(images.len());
        let mut outs = Vec::with_capacity(images.len());
        for im in images {
            let mut xhat = vec![T::zero(); h * w];
            let mut out = vec![T::zero(); h * w];
            for r in 0..h {
                for c in 0..w {
                    let i = r * w + c;
                    xhat[i] = (im[i] - mean[r]) * istd[r];
                    out[i] = gamma[r] * xhat[i] + beta[r];
                }
            }
            if training {
                xhats.push(xhat);
            }
            outs.push(out);
        }
        let cache = training.then(|| BnCache { xhat: xhats, stats: BatchStats { mean, var } });
        (outs, cache)
    }

    fn conv_stack(&self, x: &[T], cols: &mut Vec<T>) -> SampleCache<T> {
        let shapes = self.arch.stage_shapes();
        let mut cache = SampleCache { relu: Vec::new(), pooled: Vec::new(), argmax: Vec::new() };
        for i in 0..4 {
            let s = shapes[i];
            let f = self.arch.filters[i];
            let mut relu = vec![T::zero(); s.h * s.w * f];
            {
                let input = if i == 0 { x } else { &cache.pooled[i - 1] };
                conv_relu_forward(
                    input,
                    s,
                    &self.params.tensors[conv_kernel(i)],
                    &self.params.tensors[conv_bias(i)],
                    &mut relu,
                    cols,
                );
            }
            let out_shape = shapes[i + 1];
            let mut pooled = vec![T::zero(); out_shape.len()];
            let mut argmax = vec![0u32; out_shape.len()];
            maxpool_forward(&relu, Shape3 { h: s.h, w: s.w, c: f }, &mut pooled, &mut argmax);
            cache.relu.push(relu);
            cache.pooled.push(pooled);
            cache.argmax.push(argmax);
        }
        cache
    }

    fn run(&self, images: &[&[T]], dropout: Option<&mut ChaCha8Rng>) -> ForwardCache<T> {
        let n = images.len();
        let training = dropout.is_some();
        let (bn_out, bn) = self.batch_norm(images, training);
        let mut cols = Vec::new();
        let samples: Vec<SampleCache<T>> = bn_out.iter().map(|x| self.conv_stack(x, &mut cols)).collect();

        let flat_len = self.arch.flatten_size();
        let units = self.arch.dense_units;
        let classes = self.arch.n_classes;
        let mut flat = Vec::with_capacity(n * flat_len);
        for s in &samples {
            flat.extend_from_slice(&s.pooled[3]);
        }

        let mut hidden = broadcast_rows(&self.params.tensors[DENSE1_B], n);
        T::gemm(n, flat_len, units, &flat, rm(flat_len), &self.params.tensors[DENSE1_W], rm(units), T::one(), &mut hidden, rm(units));
        hidden.iter_mut().for_each(|v| *v = v.max(T::zero()));

        let (mask, dropped) = match dropout {
            Some(rng) if self.arch.dropout_rate > 0.0 => {
                let mask = dropout_mask(rng, hidden.len(), self.arch.dropout_rate);
                let dropped = hidden.iter().zip(&mask).map(|(&a, &m)| a * m).collect();
                (Some(mask), dropped)
            }
            _ => (None, hidden.clone()),
        };

        let mut probs = broadcast_rows(&self.params.tensors[DENSE2_B], n);
        T::gemm(n, units, classes, &dropped, rm(units), &self.params.tensors[DENSE2_W], rm(classes), T::one(), &mut probs, rm(classes));
        for row in probs.chunks_exact_mut(classes) {
            softmax_in_place(row);
        }
        ForwardCache { bn_out, bn, samples, flat, hidden, mask, dropped, probs }
    }

    /// Eval-mode class probabilities, one row per image.
    pub fn forward_eval(&self, images: &[&[T]]) -> Result<Vec<Vec<T>>> {
        self.check_batch(images)?;
        Ok(split_rows(&self.run(images, None).probs, self.arch.n_classes))
    }

    /// Training-mode probabilities: batch statistics, dropout drawn from
    /// `rng`, and the running statistics are updated.
    pub fn forward_train(&mut self, images: &[&[T]], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<T>>> {
        self.check_batch(images)?;
        let cache = self.run(images, Some(rng));
        if let Some(bn) = &cache.bn {
            self.update_running_stats(&bn.stats);
        }
        Ok(split_rows(&cache.probs, self.arch.n_classes))
    }

    pub fn update_running_stats(&mut self, stats: &BatchStats<T>) {
        let m = T::of(BN_MOMENTUM);
        let rest = T::of(1.0 - BN_MOMENTUM);
        for (r, &b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = m * *r + rest * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = m * *r + rest * b;
        }
    }

    fn check_labels(&self, n: usize, labels: &[usize]) -> Result<()> {
        if labels.len() != n {
            return Err(invalid(format!("{} labels for {n} images", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.arch.n_classes) {
            return Err(invalid(format!("label {bad} outside [0, {})", self.arch.n_classes)));
        }
        Ok(())
    }

    /// Mean clamped negative log-likelihood in eval mode, and the number of
    /// correct argmax predictions.
    pub fn eval_loss(&self, images: &[&[T]], labels: &[usize]) -> Result<(f64, usize)> {
        self.check_batch(images)?;
        self.check_labels(images.len(), labels)?;
        let cache = self.run(images, None);
        Ok(loss_and_correct(&cache.probs, labels, self.arch.n_classes))
    }

    /// Training-mode loss (batch statistics; dropout from `rng`).
    pub fn train_loss(&self, images: &[&[T]], labels: &[usize], rng: &mut ChaCha8Rng) -> Result<f64> {
        self.check_batch(images)?;
        self.check_labels(images.len(), labels)?;
        let cache = self.run(images, Some(rng));
        Ok(loss_and_correct(&cache.probs, labels, self.arch.n_classes).0)
    }

    /// Training-mode loss plus a hash of every piecewise-linear branch taken
    /// (ReLU signs, pooling winners, clamp hits). Equal hashes at two points
    /// mean the loss is smooth on the segment between them, barring
    /// collisions.
    pub fn train_loss_with_pattern(&self, images: &[&[T]], labels: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, u64)> {
        self.check_batch(images)?;
        self.check_labels(images.len(), labels)?;
        let cache = self.run(images, Some(rng));
        let mut hasher = DefaultHasher::new();
        for s in &cache.samples {
            for (relu, arg) in s.relu.iter().zip(&s.argmax) {
                relu.iter().map(|&v| v > T::zero()).collect::<Vec<bool>>().hash(&mut hasher);
                arg.hash(&mut hasher);
            }
        }
        cache.hidden.iter().map(|&v| v > T::zero()).collect::<Vec<bool>>().hash(&mut hasher);
        for (row, &l) in cache.probs.chunks_exact(self.arch.n_classes).zip(labels) {
            (row[l].as_f64() < PROB_FLOOR).hash(&mut hasher);
        }
        let (loss, _) = loss_and_correct(&cache.probs, labels, self.arch.n_classes);
        Ok((loss, hasher.finish()))
    }

    /// Training-mode forward pass and reverse-mode gradients of the mean
    /// clamped cross-entropy. A sample whose true-class probability is below
    /// the clamp sits on the flat part of the loss and contributes no
    /// gradient.
    pub fn loss_and_grads(&self, images: &[&[T]], labels: &[usize], rng: &mut ChaCha8Rng) -> Result<StepOutput<T>> {
        self.check_batch(images)?;
        self.check_labels(images.len(), labels)?;
        let n = images.len();
        let arch = &self.arch;
        let (flat_len, units, classes) = (arch.flatten_size(), arch.dense_units, arch.n_classes);
        let cache = self.run(images, Some(rng));
        let (loss, correct) = loss_and_correct(&cache.probs, labels, classes);
        let mut grads = Params::<T>::zeros_like(arch);

        let inv_n = T::of(1.0 / n as f64);
        let mut dlogits = cache.probs.clone();
        for (i, &l) in labels.iter().enumerate() {
            let row = &mut dlogits[i * classes..(i + 1) * classes];
            if row[l].as_f64() < PROB_FLOOR {
                row.fill(T::zero());
            } else {
                row[l] -= T::one();
            }
        }
        dlogits.iter_mut().for_each(|v| *v *= inv_n);

        T::gemm(units, n, classes, &cache.dropped, tr(units), &dlogits, rm(classes), T::zero(), &mut grads.tensors[DENSE2_W], rm(classes));
        column_sums(&dlogits, classes, &mut grads.tensors[DENSE2_B]);
        let mut dhidden = vec![T::zero(); n * units];
        T::gemm(n, classes, units, &dlogits, rm(classes), &self.params.tensors[DENSE2_W], tr(classes), T::zero(), &mut dhidden, rm(units));
        if let Some(mask) = &cache.mask {
            dhidden.iter_mut().zip(mask).for_each(|(g, &m)| *g *= m);
        }
        dhidden.iter_mut().zip(&cache.hidden).for_each(|(g, &a)| {
            if a <= T::zero() {
                *g = T::zero();
            }
        });
        T::gemm(flat_len, n, units, &cache.flat, tr(flat_len), &dhidden, rm(units), T::zero(), &mut grads.tensors[DENSE1_W], rm(units));
        column_sums(&dhidden, units, &mut grads.tensors[DENSE1_B]);
        let mut dflat = vec![T::zero(); n * flat_len];
        T::gemm(n, units, flat_len, &dhidden, rm(units), &self.params.tensors[DENSE1_W], tr(units), T::zero(), &mut dflat, rm(flat_len));

        let shapes = arch.stage_shapes();
        let mut cols = Vec::new();
        let mut dbn = Vec::with_capacity(n);
        for (s_idx, sample) in cache.samples.iter().enumerate() {
            let mut dpooled = dflat[s_idx * flat_len..(s_idx + 1) * flat_len].to_vec();
            for i in (0..4).rev() {
                let s = shapes[i];
                let mut dconv = vec![T::zero(); sample.relu[i].len()];
                maxpool_backward(&dpooled, &sample.argmax[i], &mut dconv);
                let input: &[T] = if i == 0 { &cache.bn_out[s_idx] } else { &sample.pooled[i - 1] };
                let mut dinput = vec![T::zero(); s.len()];
                let (lo, hi) = grads.tensors.split_at_mut(conv_bias(i));
                conv_relu_backward(
                    input,
                    s,
                    &self.params.tensors[conv_kernel(i)],
                    &sample.relu[i],
                    &mut dconv,
                    &mut lo[conv_kernel(i)],
                    &mut hi[0],
                    Some(&mut dinput),
                    &mut cols,
                );
                dpooled = dinput;
            }
            dbn.push(dpooled);
        }

        let bn = cache.bn.expect("training pass keeps batch-norm cache");
        let (h, w) = (arch.input_height, arch.input_width);
        for (dy, xhat) in dbn.iter().zip(&bn.xhat) {
            for r in 0..h {
                let mut dg = T::zero();
                let mut db = T::zero();
                for c in 0..w {
                    dg += dy[r * w + c] * xhat[r * w + c];
                    db += dy[r * w + c];
                }
                grads.tensors[BN_GAMMA][r] += dg;
                grads.tensors[BN_BETA][r] += db;
            }
        }
        Ok(StepOutput { loss, correct, grads, stats: bn.stats })
    }

    /// Eval-mode argmax predictions (ties → lower class id) and the
    /// probability rows, in input order.
    pub fn predict(&self, images: &[&[T]]) -> Result<(Vec<usize>, Vec<Vec<T>>)> {
        self.check_batch(images)?;
        let mut probs = Vec::with_capacity(images.len());
        for chunk in images.chunks(32) {
            probs.extend(split_rows(&self.run(chunk, None).probs, self.arch.n_classes));
        }
        let ids = probs.iter().map(|p| argmax(p)).collect();
        Ok((ids, probs))
    }
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v = *v / sum);
}

fn loss_and_correct<T: Scalar>(probs: &[T], labels: &[usize], classes: usize) -> (f64, usize) {
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &l) in probs.chunks_exact(classes).zip(labels) {
        loss -= row[l].as_f64().max(PROB_FLOOR).ln();
        if argmax(row) == l {
            correct += 1;
        }
    }
    (loss / labels.len() as f64, correct)
}

fn broadcast_rows<T: Scalar>(bias: &[T], n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * bias.len());
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    out
}

fn column_sums<T: Scalar>(m: &[T], cols: usize, out: &mut [T]) {
    out.fill(T::zero());
    for row in m.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn split_rows<T: Scalar>(flat: &[T], cols: usize) -> Vec<Vec<T>> {
    flat.chunks_exact(cols).map(<[T]>::to_vec).collect()
}
