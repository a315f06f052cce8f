//! Optimization: batch sampling, MSE loss, Adam, and re-baking after every step.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{argmax_first, bake};
use crate::config::{HyperParams, RGB};
use crate::encoding::{seeded_stream, CornerTrace, GridEncoding, HashLookup, MLP_STREAM, SAMPLE_STREAM};
use crate::error::{Error, Result};
use crate::eval::psnr;
use crate::image::{pixel_center, Image};
use crate::mlp::{mlp_init_with, MlpParams};
use crate::model_io::{size_report, CompactModel, ModelHeader, SizeReport};
use crate::real::Real;

/// Samples per parallel work item. Fixed so the reduction order does not
/// depend on the thread count.
const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Precision {
    #[default]
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Pixels per step, sampled uniformly with replacement.
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub precision: Precision,
    /// `None` picks plain hashing when `N_p = 1` and probing otherwise.
    pub hash_lookup: Option<HashLookup>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Metrics record interval in steps (0 disables intermediate records).
    pub log_every: usize,
    /// Skip the optimizer for table entries whose gradient is exactly zero
    /// this step, so entries no sample touched keep their values and moments.
    pub sparse_tables: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1 << 12,
            steps: 10_000,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-15,
            seed: 0,
            precision: Precision::Single,
            hash_lookup: None,
            threads: None,
            log_every: 100,
            sparse_tables: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidHyperparameter("batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon < 0.0 {
            return Err(Error::InvalidHyperparameter("Adam constants out of range".into()));
        }
        Ok(())
    }

    fn resolve_lookup(&self, hyper: &HyperParams) -> Result<HashLookup> {
        match self.hash_lookup {
            None if hyper.n_p == 1 => Ok(HashLookup::Plain),
            None => Ok(HashLookup::Probed),
            Some(HashLookup::Plain) if hyper.n_p != 1 => Err(Error::InvalidHyperparameter(
                "plain hashing requires n_p = 1".into(),
            )),
            Some(lookup) => Ok(lookup),
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// Per-step Adam constants, shared by every tensor updated in that step.
/// Bias corrections are folded into the step size and the denominator.
#[derive(Debug, Clone, Copy)]
pub struct AdamStep<T> {
    b1: T,
    b2: T,
    step_size: T,
    inv_sqrt_c2: T,
    eps: T,
}

impl<T: Real> AdamStep<T> {
    /// Constants for step `step`, counting from 1.
    pub fn new(step: u64, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        let c1 = 1.0 - betas.0.powf(step as f64);
        let c2 = 1.0 - betas.1.powf(step as f64);
        Self {
            b1: T::of(betas.0),
            b2: T::of(betas.1),
            step_size: T::of(lr / c1),
            inv_sqrt_c2: T::of(1.0 / c2.sqrt()),
            eps: T::of(eps),
        }
    }

    #[inline]
    pub fn apply(&self, param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T]) {
        let (one_b1, one_b2) = (T::one() - self.b1, T::one() - self.b2);
        let n = param.len();
        let (grad, m, v) = (&grad[..n], &mut m[..n], &mut v[..n]);
        for i in 0..n {
            let g = grad[i];
            m[i] = self.b1 * m[i] + one_b1 * g;
            v[i] = self.b2 * v[i] + one_b2 * g * g;
            param[i] -= self.step_size * m[i] / (v[i].sqrt() * self.inv_sqrt_c2 + self.eps);
        }
    }

    /// Like [`AdamStep::apply`], but entries with an exactly zero gradient
    /// are left alone.
    #[inline]
    pub fn apply_sparse(&self, param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T]) {
        let (one_b1, one_b2) = (T::one() - self.b1, T::one() - self.b2);
        let n = param.len();
        let (grad, m, v) = (&grad[..n], &mut m[..n], &mut v[..n]);
        for i in 0..n {
            let g = grad[i];
            if g == T::zero() {
                continue;
            }
            m[i] = self.b1 * m[i] + one_b1 * g;
            v[i] = self.b2 * v[i] + one_b2 * g * g;
            param[i] -= self.step_size * m[i] / (v[i].sqrt() * self.inv_sqrt_c2 + self.eps);
        }
    }
}

/// One bias-corrected Adam step; `step` counts from 1.
pub fn adam_update<T: Real>(
    param: &mut [T],
    grad: &[T],
    state: &mut AdamState<T>,
    step: u64,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) {
    AdamStep::new(step, lr, betas, eps).apply(param, grad, &mut state.m, &mut state.v);
}

/// Trainable model: grid encoding plus decoder, tied to an image size.
#[derive(Debug, Clone)]
pub struct Model<T> {
    hyper: HyperParams,
    encoding: GridEncoding<T>,
    mlp: MlpParams<T>,
    width: u32,
    height: u32,
}

impl<T: Real> Model<T> {
    pub fn new(hyper: HyperParams, width: u32, height: u32, lookup: HashLookup, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if lookup == HashLookup::Plain && hyper.n_p != 1 {
            return Err(Error::InvalidHyperparameter("plain hashing requires n_p = 1".into()));
        }
        let encoding = GridEncoding::new(hyper.encoding_config(2, lookup), seed)?;
        let mut rng = seeded_stream(seed, MLP_STREAM);
        let mlp = mlp_init_with(&mut rng, &hyper.mlp_widths(RGB), hyper.activation)?;
        Ok(Self {
            hyper,
            encoding,
            mlp,
            width,
            height,
        })
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn encoding(&self) -> &GridEncoding<T> {
        &self.encoding
    }

    pub fn encoding_mut(&mut self) -> &mut GridEncoding<T> {
        &mut self.encoding
    }

    pub fn mlp(&self) -> &MlpParams<T> {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut MlpParams<T> {
        &mut self.mlp
    }

    /// Training-path prediction at `x`.
    pub fn predict(&self, x: &[T]) -> Result<Vec<T>> {
        let encoded = self.encoding.encode_forward(x)?;
        crate::mlp::mlp_forward(&encoded.values, &self.mlp)
    }

    /// Half-precision inference model. Fails if confidences changed since the last bake.
    pub fn to_compact(&self) -> Result<CompactModel> {
        if !self.encoding.is_baked() {
            return Err(Error::UnbakedModel);
        }
        let header = ModelHeader {
            dims: 2,
            hyper: self.hyper,
            outputs: RGB,
            width: self.width,
            height: self.height,
        };
        let levels = self
            .encoding
            .levels()
            .iter()
            .map(|l| (l.spec, l.features.values().to_vec(), l.baked.as_ref()));
        CompactModel::from_parts(header, levels, &self.mlp)
    }
}

/// Per-batch scratch: coordinates, encodings, traces and encoding gradients.
struct Buffers<T> {
    xs: Vec<T>,
    values: Vec<T>,
    traces: Vec<CornerTrace<T>>,
    dys: Vec<T>,
}

impl<T> Default for Buffers<T> {
    fn default() -> Self {
        Self {
            xs: Vec::new(),
            values: Vec::new(),
            traces: Vec::new(),
            dys: Vec::new(),
        }
    }
}

/// Owns a model and its optimizer state.
pub struct Trainer<T> {
    model: Model<T>,
    config: TrainConfig,
    feature_moments: Vec<AdamState<T>>,
    confidence_moments: Vec<Option<AdamState<T>>>,
    mlp_moments: Vec<(AdamState<T>, AdamState<T>)>,
    mlp_grads: MlpParams<T>,
    sampler: ChaCha8Rng,
    pool: Option<rayon::ThreadPool>,
    buffers: Buffers<T>,
    step: u64,
}

impl<T: Real> Trainer<T> {
    pub fn new(hyper: HyperParams, width: u32, height: u32, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let lookup = config.resolve_lookup(&hyper)?;
        let model = Model::new(hyper, width, height, lookup, config.seed)?;
        Self::from_model(model, config)
    }

    pub fn from_model(model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let feature_moments = model
            .encoding
            .levels()
            .iter()
            .map(|l| AdamState::new(l.features.values().len()))
            .collect();
        let confidence_moments = model
            .encoding
            .levels()
            .iter()
            .map(|l| l.confidence.as_ref().map(|c| AdamState::new(c.len())))
            .collect();
        let mlp_moments = model
            .mlp
            .layers()
            .iter()
            .map(|l| (AdamState::new(l.weights_raw().len()), AdamState::new(l.bias().len())))
            .collect();
        let pool = match config.threads {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidHyperparameter(format!("thread pool: {e}")))?,
            ),
            None => None,
        };
        Ok(Self {
            mlp_grads: model.mlp.zeros_like(),
            sampler: seeded_stream(config.seed, SAMPLE_STREAM),
            model,
            config,
            feature_moments,
            confidence_moments,
            mlp_moments,
            pool,
            buffers: Buffers::default(),
            step: 0,
        })
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Decoder gradients accumulated since the last optimizer step.
    pub fn mlp_grads(&self) -> &MlpParams<T> {
        &self.mlp_grads
    }

    /// Runs forward and backward on one batch without updating parameters.
    /// Gradients are left in the model's accumulators. Returns the batch MSE.
    pub fn accumulate_batch(&mut self, image: &Image, pixels: &[(u32, u32)]) -> Result<f64> {
        if image.width() != self.model.width || image.height() != self.model.height {
            return Err(Error::DimensionMismatch(
                image.width(),
                image.height(),
                self.model.width,
                self.model.height,
            ));
        }
        let scale = T::of(2.0 / (pixels.len() * RGB) as f64);
        let threads = match &self.pool {
            Some(pool) => pool.current_num_threads(),
            None => rayon::current_num_threads(),
        };
        let squared_error = if threads == 1 {
            // One pass over the whole batch keeps each level's tables hot.
            let mut buffers = std::mem::take(&mut self.buffers);
            let mlp_grads = &mut self.mlp_grads;
            let err = forward_pixels(&self.model, image, pixels, scale, &mut buffers, |partial| {
                mlp_grads.add_assign(partial)
            });
            self.model.encoding.backward_batch(&buffers.traces, &buffers.dys);
            self.buffers = buffers;
            err
        } else {
            let model = &self.model;
            let run = || -> Vec<(Buffers<T>, MlpParams<T>, f64)> {
                pixels
                    .par_chunks(CHUNK)
                    .map(|chunk| {
                        let mut buffers = Buffers::default();
                        let mut grads = None;
                        let err = forward_pixels(model, image, chunk, scale, &mut buffers, |partial| {
                            grads = Some(partial.clone())
                        });
                        (buffers, grads.expect("one partial per chunk"), err)
                    })
                    .collect()
            };
            let outputs = match &self.pool {
                Some(pool) => pool.install(run),
                None => run(),
            };
            let mut squared_error = 0.0;
            for (buffers, grads, err) in &outputs {
                squared_error += err;
                self.mlp_grads.add_assign(grads);
                self.model.encoding.backward_batch(&buffers.traces, &buffers.dys);
            }
            squared_error
        };
        Ok(squared_error / (pixels.len() * RGB) as f64)
    }

    /// One optimization step on a fresh batch; returns the batch loss.
    pub fn train_step(&mut self, image: &Image) -> Result<f64> {
        let (w, h) = (image.width(), image.height());
        let pixels: Vec<(u32, u32)> = (0..self.config.batch_size)
            .map(|_| (self.sampler.random_range(0..w), self.sampler.random_range(0..h)))
            .collect();
        let loss = self.accumulate_batch(image, &pixels)?;
        if !loss.is_finite() {
            self.model.encoding.zero_grads();
            self.mlp_grads.fill_zero();
            return Err(Error::NonFiniteLoss {
                step: self.step as usize,
            });
        }
        self.apply_gradients();
        #[cfg(debug_assertions)]
        if self.step % 64 == 1 {
            self.check_bake_consistency();
        }
        Ok(loss)
    }

    /// Adam on every parameter tensor, then zero the accumulators and re-bake.
    /// Confidence rows are updated, cleared and baked in one pass.
    fn apply_gradients(&mut self) {
        self.step += 1;
        let cfg = &self.config;
        let adam = AdamStep::<T>::new(self.step, cfg.learning_rate, (cfg.beta1, cfg.beta2), cfg.epsilon);
        let table_step = if cfg.sparse_tables {
            AdamStep::apply_sparse
        } else {
            AdamStep::apply
        };
        for ((level, fm), cm) in self
            .model
            .encoding
            .levels_mut()
            .iter_mut()
            .zip(&mut self.feature_moments)
            .zip(&mut self.confidence_moments)
        {
            let (values, grads) = level.features.split_mut();
            table_step(&adam, values, grads, &mut fm.m, &mut fm.v);
            grads.fill(T::zero());
            if let (Some(conf), Some(cm)) = (level.confidence.as_mut(), cm.as_mut()) {
                let p = conf.probes();
                let baked = level.baked.get_or_insert_with(|| bake(conf));
                let moments = cm.m.chunks_exact_mut(p).zip(cm.v.chunks_exact_mut(p));
                for (r, ((values, grads), (m, v))) in conf.rows_mut().zip(moments).enumerate() {
                    table_step(&adam, values, grads, m, v);
                    grads.fill(T::zero());
                    baked.set(r, argmax_first(values));
                }
            }
        }
        for ((layer, grad), (wm, bm)) in self
            .model
            .mlp
            .layers_mut()
            .iter_mut()
            .zip(self.mlp_grads.layers())
            .zip(&mut self.mlp_moments)
        {
            let (weights, bias) = layer.params_mut();
            adam.apply(weights, grad.weights_raw(), &mut wm.m, &mut wm.v);
            adam.apply(bias, grad.bias(), &mut bm.m, &mut bm.v);
        }
        self.mlp_grads.fill_zero();
    }

    #[cfg(debug_assertions)]
    fn check_bake_consistency(&self) {
        let mut rng = seeded_stream(self.step, 99);
        for _ in 0..16 {
            let x = [T::of(rng.random_range(0.0..=1.0)), T::of(rng.random_range(0.0..=1.0))];
            let infer = self.model.encoding.encode_infer(&x).expect("valid point");
            let train = self.model.encoding.encode_forward(&x).expect("valid point").values;
            debug_assert_eq!(infer, train, "baked lookups diverged from argmax lookups");
        }
    }
}

/// Encoding forward for `pixels`, then decoder forward and backward per
/// sample. Decoder gradients are summed per run of `CHUNK` samples and each
/// partial sum is handed to `sink` in order. Returns the summed squared error.
fn forward_pixels<T: Real>(
    model: &Model<T>,
    image: &Image,
    pixels: &[(u32, u32)],
    scale: T,
    buffers: &mut Buffers<T>,
    mut sink: impl FnMut(&MlpParams<T>),
) -> f64 {
    let (w, h) = (image.width(), image.height());
    buffers.xs.clear();
    for &(px, py) in pixels {
        buffers.xs.push(T::of(pixel_center(px, w)));
        buffers.xs.push(T::of(pixel_center(py, h)));
    }
    model.encoding.forward_batch(&buffers.xs, &mut buffers.values, &mut buffers.traces);

    let width = model.encoding.output_width();
    buffers.dys.clear();
    buffers.dys.resize(pixels.len() * width, T::zero());
    let mut ws = model.mlp.workspace();
    let mut partial = model.mlp.zeros_like();
    let mut squared_error = 0.0;
    for (c, chunk) in pixels.chunks(CHUNK).enumerate() {
        partial.fill_zero();
        let mut chunk_error = 0.0;
        for (k, &(px, py)) in chunk.iter().enumerate() {
            let s = c * CHUNK + k;
            let pred = model.mlp.forward_ws(&buffers.values[s * width..(s + 1) * width], &mut ws);
            let mut upstream = [T::zero(); RGB];
            for ((u, &p), &t) in upstream.iter_mut().zip(pred).zip(image.pixel(px, py)) {
                let diff = p - T::of(t as f64);
                chunk_error += (diff * diff).to_f64_lossy();
                *u = scale * diff;
            }
            model
                .mlp
                .backward_ws(&mut ws, &upstream, &mut partial, &mut buffers.dys[s * width..(s + 1) * width]);
        }
        squared_error += chunk_error;
        sink(&partial);
    }
    squared_error
}

/// One line of the training metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    /// PSNR implied by the batch loss.
    pub psnr: f64,
    pub ms_per_step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitMetrics {
    /// PSNR of the half-precision model over the whole image.
    pub final_psnr: f64,
    pub steps: usize,
    pub wall_time_s: f64,
    pub ms_per_step: f64,
    pub size: SizeReport,
    pub losses: Vec<f64>,
}

pub struct FitOutput {
    pub model: CompactModel,
    pub metrics: FitMetrics,
}

fn loss_psnr(loss: f64) -> f64 {
    if loss > 0.0 {
        -10.0 * loss.log10()
    } else {
        f64::INFINITY
    }
}

/// Trains a model on `image` for `config.steps` steps and measures the
/// half-precision result. Metrics records go to `log` as JSON lines.
pub fn fit(
    image: &Image,
    hyper: &HyperParams,
    config: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<FitOutput> {
    match config.precision {
        Precision::Single => fit_with::<f32>(image, hyper, config, log),
        Precision::Double => fit_with::<f64>(image, hyper, config, log),
    }
}

fn fit_with<T: Real>(
    image: &Image,
    hyper: &HyperParams,
    config: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<FitOutput> {
    let size = size_report(hyper)?;
    let mut trainer = Trainer::<T>::new(*hyper, image.width(), image.height(), *config)?;
    let mut losses = Vec::with_capacity(config.steps);
    let start = Instant::now();
    let mut window = Instant::now();
    let mut window_steps = 0usize;
    for step in 1..=config.steps {
        let loss = trainer.train_step(image)?;
        losses.push(loss);
        window_steps += 1;
        let due = config.log_every > 0 && step % config.log_every == 0;
        if let Some(out) = log.as_deref_mut().filter(|_| due || step == config.steps) {
            let record = StepRecord {
                step,
                loss,
                psnr: loss_psnr(loss),
                ms_per_step: window.elapsed().as_secs_f64() * 1e3 / window_steps as f64,
            };
            writeln!(out, "{}", serde_json::to_string(&record).expect("plain struct serializes"))?;
            window = Instant::now();
            window_steps = 0;
        }
    }
    let wall_time_s = start.elapsed().as_secs_f64();
    let model = trainer.model().to_compact()?;
    let final_psnr = psnr(image, &model.decode_image())?;
    let metrics = FitMetrics {
        final_psnr,
        steps: config.steps,
        wall_time_s,
        ms_per_step: if config.steps > 0 { wall_time_s * 1e3 / config.steps as f64 } else { 0.0 },
        size,
        losses,
    };
    if let Some(out) = log {
        #[derive(Serialize)]
        struct Summary<'a> {
            final_psnr: f64,
            steps: usize,
            wall_time_s: f64,
            ms_per_step: f64,
            size: &'a SizeReport,
        }
        let summary = Summary {
            final_psnr: metrics.final_psnr,
            steps: metrics.steps,
            wall_time_s: metrics.wall_time_s,
            ms_per_step: metrics.ms_per_step,
            size: &metrics.size,
        };
        writeln!(out, "{}", serde_json::to_string(&summary).expect("plain struct serializes"))?;
    }
    Ok(FitOutput { model, metrics })
}

/// Smallest index codebook the selection recipe will use.
pub const MIN_INDEX_ROWS: u32 = 1 << 10;
/// Index codebook size at which the recipe stops doubling `N_c`.
pub const MAX_INDEX_ROWS: u32 = 1 << 16;
pub const MIN_FEATURE_ROWS: u32 = 1 << 6;
const MAX_FEATURE_ROWS: u32 = 1 << 24;

/// Picks `N_f` and `N_c` for a total file size budget.
///
/// Starting from the plain-hash configuration, `N_f` is set so the feature
/// tables take about a third of the payload, `N_c` then doubles while the
/// file still fits (up to `2^16`), and only after that does `N_f` keep
/// doubling. `N_p`, the level ladder and the decoder come from `template`.
pub fn select_hyperparams(target_size_bytes: u64, template: &HyperParams) -> Result<HyperParams> {
    let with = |n_f: u32, n_c: u32, n_p: u32| HyperParams { n_f, n_c, n_p, ..*template };
    let total = |h: &HyperParams| size_report(h).map(|r| r.total());

    let floor = with(MIN_FEATURE_ROWS, MIN_INDEX_ROWS, 2);
    let minimum = total(&floor)?;
    if target_size_bytes < minimum {
        return Err(Error::TargetTooSmall {
            target: target_size_bytes,
            minimum,
        });
    }

    // Feature tables get a third of the payload budget.
    let base = with(MIN_FEATURE_ROWS, 1, 1);
    let fixed = total(&base)? - size_report(&base)?.features;
    let payload = target_size_bytes.saturating_sub(fixed);
    let mut n_f = MIN_FEATURE_ROWS;
    while n_f < MAX_FEATURE_ROWS && size_report(&with(n_f * 2, 1, 1))?.features <= payload / 3 {
        n_f *= 2;
    }

    let mut n_p = template.n_p.clamp(2, n_f);
    while n_p > 2 && total(&with(n_f, MIN_INDEX_ROWS, n_p))? > target_size_bytes {
        n_p /= 2;
    }
    while n_f > MIN_FEATURE_ROWS && total(&with(n_f, MIN_INDEX_ROWS, n_p))? > target_size_bytes {
        n_f /= 2;
    }

    let mut n_c = MIN_INDEX_ROWS;
    while n_c < MAX_INDEX_ROWS && total(&with(n_f, n_c * 2, n_p))? <= target_size_bytes {
        n_c *= 2;
    }
    if n_c == MAX_INDEX_ROWS {
        while n_f < MAX_FEATURE_ROWS && total(&with(n_f * 2, n_c, n_p))? <= target_size_bytes {
            n_f *= 2;
        }
    }
    let chosen = with(n_f, n_c, n_p);
    chosen.validate()?;
    Ok(chosen)
}
