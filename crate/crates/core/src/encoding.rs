//! Multiresolution input encoding: per-level corner lookups blended with
//! d-linear weights and concatenated across levels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{
    bake, hash_primary, probe_backward_scratch, probe_trace, BakedIndexCodebook,
    ConfidenceCodebook, FeatureCodebook, ProbeTrace, MAX_PROBES,
};
use crate::error::{Error, Result};
use crate::grid::{
    check_unit_domain, corners_unchecked, dense_index_unchecked, IndexMode, LevelSpec, MAX_DIM,
};
use crate::real::Real;

/// Largest feature width per level.
pub const MAX_FEATURES: usize = 8;

const FEATURE_INIT_SCALE: f64 = 1e-4;
const CONFIDENCE_INIT_SCALE: f64 = 1e-2;

pub(crate) const FEATURE_STREAM: u64 = 0;
pub(crate) const CONFIDENCE_STREAM: u64 = 1;
pub(crate) const MLP_STREAM: u64 = 2;
pub(crate) const SAMPLE_STREAM: u64 = 3;

/// Independent ChaCha stream `stream` of `seed`.
pub(crate) fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How hashed levels resolve a vertex to a feature row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashLookup {
    /// Learned probing through the index codebook.
    Probed,
    /// Plain spatial hash (no index codebook).
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub dims: usize,
    pub levels: u32,
    pub n_min: u32,
    pub n_max: u32,
    pub n_f: u32,
    pub n_c: u32,
    pub n_p: u32,
    pub features: usize,
    pub hash_lookup: HashLookup,
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperparameter(msg));
        if self.dims == 0 || self.dims > MAX_DIM {
            return bad(format!("input dimension {} not in 1..={MAX_DIM}", self.dims));
        }
        if self.levels == 0 {
            return bad("level count must be at least 1".into());
        }
        if self.features == 0 || self.features > MAX_FEATURES {
            return bad(format!("feature width {} not in 1..={MAX_FEATURES}", self.features));
        }
        for (name, value) in [("n_f", self.n_f), ("n_c", self.n_c), ("n_p", self.n_p)] {
            if value == 0 || !value.is_power_of_two() {
                return bad(format!("{name} must be a power of two, got {value}"));
            }
        }
        if self.n_p > self.n_f {
            return bad(format!(
                "probing range {} does not divide feature codebook size {}",
                self.n_p, self.n_f
            ));
        }
        if self.n_p as usize > MAX_PROBES {
            return bad(format!("probing range {} exceeds {MAX_PROBES}", self.n_p));
        }
        if self.n_min == 0 || self.n_max < self.n_min {
            return bad(format!(
                "resolutions must satisfy 1 <= n_min <= n_max, got {} and {}",
                self.n_min, self.n_max
            ));
        }
        Ok(())
    }

    pub fn output_width(&self) -> usize {
        self.levels as usize * self.features
    }

    pub fn level_specs(&self) -> Result<Vec<LevelSpec>> {
        LevelSpec::ladder(self.dims, self.levels, self.n_min, self.n_max, self.n_f)
    }

    fn stamp(&self) -> (u32, u32, u32, u32) {
        (self.levels, self.n_f, self.n_c, self.n_p)
    }
}

/// One level of the grid: its feature table and, for probed levels, the
/// confidence table plus its baked offsets.
#[derive(Debug, Clone)]
pub struct Level<T> {
    pub spec: LevelSpec,
    pub features: FeatureCodebook<T>,
    pub confidence: Option<ConfidenceCodebook<T>>,
    pub baked: Option<BakedIndexCodebook>,
}

impl<T: Real> Level<T> {
    pub fn is_probed(&self) -> bool {
        self.confidence.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Direct(u32),
    Probed(ProbeTrace),
}

/// One corner contribution recorded by the forward pass.
#[derive(Debug, Clone, Copy)]
pub struct CornerTrace<T> {
    pub level: u32,
    pub weight: T,
    pub lookup: Lookup,
}

/// Encoded features plus the traces needed for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct EncodedVector<T> {
    pub values: Vec<T>,
    pub traces: Vec<CornerTrace<T>>,
    stamp: (u32, u32, u32, u32),
}

#[derive(Debug, Clone)]
pub struct GridEncoding<T> {
    config: EncodingConfig,
    levels: Vec<Level<T>>,
}

impl<T: Real> GridEncoding<T> {
    /// Features start uniform in `[-1e-4, 1e-4]`, confidences uniform in
    /// `[0, 1e-2]`. Each table kind draws from its own stream of `seed`, so
    /// adding or removing confidence tables leaves the features unchanged.
    pub fn new(config: EncodingConfig, seed: u64) -> Result<Self> {
        let mut rngs = (seeded_stream(seed, FEATURE_STREAM), seeded_stream(seed, CONFIDENCE_STREAM));
        Self::build(
            config,
            |rows, width, r: &mut (ChaCha8Rng, ChaCha8Rng)| {
                FeatureCodebook::uniform(rows, width, FEATURE_INIT_SCALE, &mut r.0)
            },
            |rows, probes, r: &mut (ChaCha8Rng, ChaCha8Rng)| {
                ConfidenceCodebook::uniform(rows, probes, CONFIDENCE_INIT_SCALE, &mut r.1)
            },
            &mut rngs,
        )
    }

    /// All-zero codebooks.
    pub fn zeros(config: EncodingConfig) -> Result<Self> {
        Self::build(
            config,
            |rows, width, _: &mut ()| FeatureCodebook::zeros(rows, width),
            |rows, probes, _: &mut ()| ConfidenceCodebook::zeros(rows, probes),
            &mut (),
        )
    }

    fn build<R: ?Sized>(
        config: EncodingConfig,
        mut make_features: impl FnMut(usize, usize, &mut R) -> FeatureCodebook<T>,
        mut make_confidence: impl FnMut(usize, usize, &mut R) -> ConfidenceCodebook<T>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let levels = config
            .level_specs()?
            .into_iter()
            .map(|spec| {
                let features = make_features(config.n_f as usize, config.features, rng);
                let probed =
                    spec.mode == IndexMode::Hashed && config.hash_lookup == HashLookup::Probed;
                let confidence = probed
                    .then(|| make_confidence(config.n_c as usize, config.n_p as usize, rng));
                let baked = confidence.as_ref().map(bake);
                Level {
                    spec,
                    features,
                    confidence,
                    baked,
                }
            })
            .collect();
        Ok(Self { config, levels })
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn levels(&self) -> &[Level<T>] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Level<T>] {
        &mut self.levels
    }

    pub fn output_width(&self) -> usize {
        self.config.output_width()
    }

    pub fn new_output(&self) -> EncodedVector<T> {
        EncodedVector {
            values: vec![T::zero(); self.output_width()],
            traces: Vec::with_capacity(self.levels.len() << self.config.dims),
            stamp: self.config.stamp(),
        }
    }

    pub fn encode_forward(&self, x: &[T]) -> Result<EncodedVector<T>> {
        let mut out = self.new_output();
        self.encode_forward_into(x, &mut out)?;
        Ok(out)
    }

    /// Training-path forward pass; probed levels pick the argmax of the live confidences.
    pub fn encode_forward_into(&self, x: &[T], out: &mut EncodedVector<T>) -> Result<()> {
        self.check_input(x)?;
        out.values.clear();
        out.values.resize(self.output_width(), T::zero());
        out.traces.clear();
        out.stamp = self.config.stamp();
        let width = self.config.features;

        for (l, level) in self.levels.iter().enumerate() {
            let corners = corners_unchecked(x, level.spec.resolution);
            let slot = &mut out.values[l * width..(l + 1) * width];
            for (v, weight) in corners.iter() {
                let lookup = self.lookup(level, v);
                accumulate_feature(slot, weight, level, lookup);
                out.traces.push(CornerTrace {
                    level: l as u32,
                    weight,
                    lookup,
                });
            }
        }
        Ok(())
    }

    /// Batched training-path forward pass, processed one level at a time so
    /// each level's tables stay cached. `xs` holds `n` points back to back;
    /// `values` receives `n` encodings and `traces` the per-sample traces in
    /// the same layout as [`GridEncoding::encode_forward`]. Points must lie
    /// in the unit cube.
    pub(crate) fn forward_batch(&self, xs: &[T], values: &mut Vec<T>, traces: &mut Vec<CornerTrace<T>>) {
        let dims = self.config.dims;
        let width = self.config.features;
        let n = xs.len() / dims;
        let out_width = self.output_width();
        let per_level = 1usize << dims;
        let per_sample = self.levels.len() * per_level;
        values.clear();
        values.resize(n * out_width, T::zero());
        traces.clear();
        traces.resize(
            n * per_sample,
            CornerTrace {
                level: 0,
                weight: T::zero(),
                lookup: Lookup::Direct(0),
            },
        );
        for (l, level) in self.levels.iter().enumerate() {
            for s in 0..n {
                let x = &xs[s * dims..(s + 1) * dims];
                let corners = corners_unchecked(x, level.spec.resolution);
                let slot = &mut values[s * out_width + l * width..s * out_width + (l + 1) * width];
                let dest = &mut traces[s * per_sample + l * per_level..s * per_sample + (l + 1) * per_level];
                for ((v, weight), t) in corners.iter().zip(dest) {
                    let lookup = self.lookup(level, v);
                    accumulate_feature(slot, weight, level, lookup);
                    *t = CornerTrace {
                        level: l as u32,
                        weight,
                        lookup,
                    };
                }
            }
        }
    }

    #[inline(always)]
    fn lookup(&self, level: &Level<T>, v: &[u32]) -> Lookup {
        match (&level.confidence, level.spec.mode) {
            (_, IndexMode::Dense) => {
                Lookup::Direct(dense_index_unchecked(v, level.spec.resolution, self.config.dims))
            }
            (Some(conf), IndexMode::Hashed) => Lookup::Probed(probe_trace(v, &level.features, conf)),
            (None, IndexMode::Hashed) => Lookup::Direct(hash_primary(v) & (self.config.n_f - 1)),
        }
    }

    /// Inference-path forward pass through the baked offsets.
    pub fn encode_infer(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let width = self.config.features;
        let dims = self.config.dims;
        let mut values = vec![T::zero(); self.output_width()];
        for (l, level) in self.levels.iter().enumerate() {
            let corners = corners_unchecked(x, level.spec.resolution);
            for (v, weight) in corners.iter() {
                let row = match (&level.baked, level.spec.mode) {
                    (_, IndexMode::Dense) => dense_index_unchecked(v, level.spec.resolution, dims),
                    (Some(baked), IndexMode::Hashed) => {
                        let n_f = self.config.n_f;
                        let base = crate::grid::probe_base(hash_primary(v), baked.probes(), n_f);
                        let row = crate::codebook::hash_auxiliary(v) as usize & (baked.len() - 1);
                        base + baked.get(row)
                    }
                    (None, IndexMode::Hashed) => {
                        if level.confidence.is_some() {
                            return Err(Error::UnbakedModel);
                        }
                        hash_primary(v) & (self.config.n_f - 1)
                    }
                };
                for (s, &f) in values[l * width..(l + 1) * width]
                    .iter_mut()
                    .zip(level.features.row(row as usize))
                {
                    *s += weight * f;
                }
            }
        }
        Ok(values)
    }

    /// Accumulates gradients of the codebooks given `d loss / d encoding`.
    pub fn encode_backward(&mut self, encoded: &EncodedVector<T>, upstream: &[T]) -> Result<()> {
        if encoded.stamp != self.config.stamp() {
            return Err(Error::StaleTrace);
        }
        if upstream.len() != self.output_width() {
            return Err(Error::ShapeMismatch {
                expected: self.output_width(),
                actual: upstream.len(),
            });
        }
        self.backward_traces(&encoded.traces, upstream);
        Ok(())
    }

    /// Backward pass for traces produced by this encoding's own forward pass.
    pub(crate) fn backward_traces(&mut self, traces: &[CornerTrace<T>], upstream: &[T]) {
        let width = self.config.features;
        let mut scratch = [T::zero(); 2 * MAX_PROBES];
        for trace in traces {
            let l = trace.level as usize;
            scatter(&mut self.levels[l], trace, &upstream[l * width..(l + 1) * width], &mut scratch);
        }
    }

    /// Backward pass for a batch laid out as by [`GridEncoding::forward_batch`],
    /// one level at a time. Each gradient entry receives its contributions in
    /// sample order, exactly as with per-sample [`GridEncoding::backward_traces`].
    pub(crate) fn backward_batch(&mut self, traces: &[CornerTrace<T>], upstream: &[T]) {
        let width = self.config.features;
        let out_width = self.output_width();
        let per_level = 1usize << self.config.dims;
        let per_sample = self.levels.len() * per_level;
        let n = traces.len() / per_sample;
        let mut scratch = [T::zero(); 2 * MAX_PROBES];
        for (l, level) in self.levels.iter_mut().enumerate() {
            for s in 0..n {
                let g = &upstream[s * out_width + l * width..s * out_width + (l + 1) * width];
                let start = s * per_sample + l * per_level;
                for trace in &traces[start..start + per_level] {
                    scatter(level, trace, g, &mut scratch);
                }
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for level in &mut self.levels {
            level.features.zero_grads();
            if let Some(conf) = level.confidence.as_mut() {
                conf.zero_grads();
            }
        }
    }

    /// Re-bakes every probed level.
    pub fn bake_all(&mut self) {
        for level in &mut self.levels {
            if let Some(conf) = &level.confidence {
                match level.baked.as_mut() {
                    Some(baked) => crate::codebook::bake_into(conf, baked),
                    None => level.baked = Some(bake(conf)),
                }
            }
        }
    }

    /// Drops baked offsets after the confidences change.
    pub fn invalidate_bake(&mut self) {
        for level in &mut self.levels {
            if level.confidence.is_some() {
                level.baked = None;
            }
        }
    }

    pub fn is_baked(&self) -> bool {
        self.levels
            .iter()
            .all(|l| l.confidence.is_none() || l.baked.is_some())
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.config.dims {
            return Err(Error::ShapeMismatch {
                expected: self.config.dims,
                actual: x.len(),
            });
        }
        check_unit_domain(x)
    }
}

#[inline(always)]
fn accumulate_feature<T: Real>(slot: &mut [T], weight: T, level: &Level<T>, lookup: Lookup) {
    let row = match lookup {
        Lookup::Direct(i) => i as usize,
        Lookup::Probed(t) => t.feature_index(),
    };
    for (s, &f) in slot.iter_mut().zip(level.features.row(row)) {
        *s += weight * f;
    }
}

/// Scatters one corner's gradient `weight * g` into its level's tables.
#[inline(always)]
fn scatter<T: Real>(level: &mut Level<T>, trace: &CornerTrace<T>, g: &[T], scratch: &mut [T]) {
    if trace.weight == T::zero() {
        return;
    }
    let mut scaled = [T::zero(); MAX_FEATURES];
    for (s, &u) in scaled.iter_mut().zip(g) {
        *s = trace.weight * u;
    }
    let scaled = &scaled[..g.len()];
    match trace.lookup {
        Lookup::Direct(i) => level.features.accumulate_row(i as usize, T::one(), scaled),
        Lookup::Probed(t) => {
            let conf = level
                .confidence
                .as_mut()
                .expect("probed trace on a level without confidences");
            probe_backward_scratch(t.base, t.row, scaled, &mut level.features, conf, scratch);
        }
    }
}
