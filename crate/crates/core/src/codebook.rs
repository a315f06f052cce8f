//! Feature and index codebooks.
//!
//! Training keeps a real-valued confidence table `N_c x N_p`. The forward
//! pass picks the probe with the highest confidence; the backward pass
//! spreads gradients over the whole probing range with softmax weights
//! (straight-through estimator). After each optimizer step the confidences
//! are baked into one `log2(N_p)`-bit offset per row.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{probe_base, spatial_hash, AUXILIARY_PRIMES, PRIMARY_PRIMES};
use crate::real::Real;

/// Upper bound on the probing range.
pub const MAX_PROBES: usize = 64;

#[inline]
pub fn hash_primary(v: &[u32]) -> u32 {
    spatial_hash(v, &PRIMARY_PRIMES)
}

#[inline]
pub fn hash_auxiliary(v: &[u32]) -> u32 {
    spatial_hash(v, &AUXILIARY_PRIMES)
}

/// `N_f x F` table of trainable feature vectors with a gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCodebook<T> {
    rows: usize,
    width: usize,
    values: Vec<T>,
    grads: Vec<T>,
}

impl<T: Real> FeatureCodebook<T> {
    pub fn zeros(rows: usize, width: usize) -> Self {
        Self {
            rows,
            width,
            values: vec![T::zero(); rows * width],
            grads: vec![T::zero(); rows * width],
        }
    }

    /// Uniform initialization on `[-scale, scale]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, width: usize, scale: f64, rng: &mut R) -> Self {
        let mut cb = Self::zeros(rows, width);
        for v in &mut cb.values {
            *v = T::of(rng.random_range(-scale..=scale));
        }
        cb
    }

    pub fn from_values(rows: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * width {
            return Err(Error::ShapeMismatch {
                expected: rows * width,
                actual: values.len(),
            });
        }
        Ok(Self {
            rows,
            width,
            grads: vec![T::zero(); values.len()],
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn row(&self, index: usize) -> &[T] {
        &self.values[index * self.width..(index + 1) * self.width]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn grads(&self) -> &[T] {
        &self.grads
    }

    /// Values and gradients together, for optimizer updates.
    pub fn split_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.values, &mut self.grads)
    }

    #[inline]
    pub(crate) fn accumulate_row(&mut self, index: usize, scale: T, upstream: &[T]) {
        let g = &mut self.grads[index * self.width..(index + 1) * self.width];
        for (acc, &u) in g.iter_mut().zip(upstream) {
            *acc += scale * u;
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.fill(T::zero());
    }
}

/// `N_c x N_p` table of probe confidences with a gradient accumulator.
///
/// Each row stores its `N_p` values followed by their `N_p` gradients, so the
/// backward pass writes next to the line the forward pass just read.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceCodebook<T> {
    rows: usize,
    probes: usize,
    data: Vec<T>,
}

impl<T: Real> ConfidenceCodebook<T> {
    pub fn zeros(rows: usize, probes: usize) -> Self {
        assert!(probes <= MAX_PROBES, "probing range {probes} exceeds {MAX_PROBES}");
        Self {
            rows,
            probes,
            data: vec![T::zero(); 2 * rows * probes],
        }
    }

    /// Uniform initialization on `[0, scale]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, probes: usize, scale: f64, rng: &mut R) -> Self {
        let mut cb = Self::zeros(rows, probes);
        for r in 0..rows {
            for v in cb.row_mut(r) {
                *v = T::of(rng.random_range(0.0..=scale));
            }
        }
        cb
    }

    pub fn from_values(rows: usize, probes: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * probes {
            return Err(Error::ShapeMismatch {
                expected: rows * probes,
                actual: values.len(),
            });
        }
        if probes == 0 || probes > MAX_PROBES {
            return Err(Error::InvalidHyperparameter(format!(
                "probing range {probes} not in 1..={MAX_PROBES}"
            )));
        }
        let mut cb = Self::zeros(rows, probes);
        for (r, chunk) in values.chunks_exact(probes).enumerate() {
            cb.row_mut(r).copy_from_slice(chunk);
        }
        Ok(cb)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn probes(&self) -> usize {
        self.probes
    }

    /// Number of confidence values (`N_c * N_p`).
    pub fn len(&self) -> usize {
        self.rows * self.probes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn row(&self, index: usize) -> &[T] {
        let start = 2 * index * self.probes;
        &self.data[start..start + self.probes]
    }

    #[inline]
    pub fn row_mut(&mut self, index: usize) -> &mut [T] {
        let start = 2 * index * self.probes;
        &mut self.data[start..start + self.probes]
    }

    #[inline]
    pub fn grad_row(&self, index: usize) -> &[T] {
        let start = (2 * index + 1) * self.probes;
        &self.data[start..start + self.probes]
    }

    /// Values and gradients of one row.
    #[inline]
    pub(crate) fn row_pair_mut(&mut self, index: usize) -> (&mut [T], &mut [T]) {
        let start = 2 * index * self.probes;
        self.data[start..start + 2 * self.probes].split_at_mut(self.probes)
    }

    /// `(values, gradients)` for every row, in order.
    pub fn rows_mut(&mut self) -> impl Iterator<Item = (&mut [T], &mut [T])> {
        let p = self.probes;
        self.data.chunks_exact_mut(2 * p).map(move |c| c.split_at_mut(p))
    }

    /// Row-major copy of all values.
    pub fn values(&self) -> Vec<T> {
        (0..self.rows).flat_map(|r| self.row(r).iter().copied()).collect()
    }

    /// Row-major copy of all gradients.
    pub fn grads(&self) -> Vec<T> {
        (0..self.rows).flat_map(|r| self.grad_row(r).iter().copied()).collect()
    }

    pub fn zero_grads(&mut self) {
        for (_, g) in self.rows_mut() {
            g.fill(T::zero());
        }
    }

    /// Offset with the highest confidence in `row`; ties go to the smallest offset.
    #[inline]
    pub fn argmax(&self, row: usize) -> u32 {
        argmax_first(self.row(row))
    }

    /// Softmax of `row` written into `out[..N_p]`.
    #[inline]
    pub fn softmax_into(&self, row: usize, out: &mut [T]) {
        softmax(self.row(row), out);
    }
}

#[inline]
pub(crate) fn argmax_first<T: Real>(row: &[T]) -> u32 {
    let mut best = 0;
    let mut best_value = row[0];
    for (j, &c) in row.iter().enumerate().skip(1) {
        if c > best_value {
            best = j;
            best_value = c;
        }
    }
    best as u32
}

#[inline]
pub(crate) fn softmax<T: Real>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &c) in out.iter_mut().zip(row) {
        *o = (c - max).exp_softmax();
        total += *o;
    }
    let inv = T::one() / total;
    for o in out[..row.len()].iter_mut() {
        *o *= inv;
    }
}

/// Baked probe offsets, one per confidence row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BakedIndexCodebook {
    probes: u32,
    entries: Vec<u8>,
}

impl BakedIndexCodebook {
    pub fn from_entries(probes: u32, entries: Vec<u8>) -> Result<Self> {
        if probes == 0 || probes as usize > MAX_PROBES {
            return Err(Error::InvalidHyperparameter(format!(
                "probing range {probes} not in 1..={MAX_PROBES}"
            )));
        }
        if let Some(bad) = entries.iter().find(|&&e| e as u32 >= probes) {
            return Err(Error::InvariantViolation(format!(
                "baked index {bad} is outside the probing range {probes}"
            )));
        }
        Ok(Self { probes, entries })
    }

    pub fn probes(&self) -> u32 {
        self.probes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize) -> u32 {
        self.entries[row] as u32
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, offset: u32) {
        debug_assert!(offset < self.probes);
        self.entries[row] = offset as u8;
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }
}

/// Row-wise argmax of the confidence table.
pub fn bake<T: Real>(conf: &ConfidenceCodebook<T>) -> BakedIndexCodebook {
    let mut baked = BakedIndexCodebook {
        probes: conf.probes as u32,
        entries: vec![0; conf.rows],
    };
    bake_into(conf, &mut baked);
    baked
}

/// Like [`bake`], reusing the existing allocation.
pub fn bake_into<T: Real>(conf: &ConfidenceCodebook<T>, baked: &mut BakedIndexCodebook) {
    baked.probes = conf.probes as u32;
    baked.entries.resize(conf.rows, 0);
    for (row, entry) in baked.entries.iter_mut().enumerate() {
        *entry = conf.argmax(row) as u8;
    }
}

/// What the backward pass needs to know about one probed lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeTrace {
    pub base: u32,
    pub row: u32,
    pub choice: u32,
    shape: (u32, u32, u32),
}

impl ProbeTrace {
    /// Feature row that was read in the forward pass.
    pub fn feature_index(&self) -> usize {
        (self.base + self.choice) as usize
    }

    /// Softmax weights over the probing range, as used by the backward pass.
    pub fn softmax_weights<T: Real>(&self, conf: &ConfidenceCodebook<T>) -> Vec<T> {
        let mut out = vec![T::zero(); conf.probes()];
        conf.softmax_into(self.row as usize, &mut out);
        out
    }
}

fn check_shapes<T: Real>(features: &FeatureCodebook<T>, conf: &ConfidenceCodebook<T>) -> Result<()> {
    let (n_f, n_c, n_p) = (features.rows, conf.rows, conf.probes);
    for (name, value) in [("n_f", n_f), ("n_c", n_c), ("n_p", n_p)] {
        if !value.is_power_of_two() {
            return Err(Error::InvalidHyperparameter(format!(
                "{name} must be a power of two, got {value}"
            )));
        }
    }
    if n_p > n_f {
        return Err(Error::InvalidHyperparameter(format!(
            "probing range {n_p} does not divide feature codebook size {n_f}"
        )));
    }
    Ok(())
}

/// Training-path lookup: argmax over the live confidences.
pub fn probe_forward<'a, T: Real>(
    v: &[u32],
    features: &'a FeatureCodebook<T>,
    conf: &ConfidenceCodebook<T>,
) -> Result<(&'a [T], ProbeTrace)> {
    check_shapes(features, conf)?;
    let trace = probe_trace(v, features, conf);
    Ok((features.row(trace.feature_index()), trace))
}

#[inline]
pub(crate) fn probe_trace<T: Real>(
    v: &[u32],
    features: &FeatureCodebook<T>,
    conf: &ConfidenceCodebook<T>,
) -> ProbeTrace {
    let (n_f, n_c, n_p) = (features.rows as u32, conf.rows as u32, conf.probes as u32);
    let base = probe_base(hash_primary(v), n_p, n_f);
    let row = hash_auxiliary(v) & (n_c - 1);
    let choice = conf.argmax(row as usize);
    ProbeTrace {
        base,
        row,
        choice,
        shape: (n_f, n_c, n_p),
    }
}

/// Straight-through backward pass for one lookup.
///
/// With `s = softmax(conf[row])`, every feature in the probing range gets
/// `s_j * upstream`, and confidence `j` gets
/// `sum_k s_k (delta_kj - s_j) <D_f[base + k], upstream>`.
pub fn probe_backward<T: Real>(
    trace: &ProbeTrace,
    upstream: &[T],
    features: &mut FeatureCodebook<T>,
    conf: &mut ConfidenceCodebook<T>,
) -> Result<()> {
    if trace.shape != (features.rows as u32, conf.rows as u32, conf.probes as u32) {
        return Err(Error::StaleTrace);
    }
    if upstream.len() != features.width {
        return Err(Error::ShapeMismatch {
            expected: features.width,
            actual: upstream.len(),
        });
    }
    probe_backward_unchecked(trace.base, trace.row, upstream, features, conf);
    Ok(())
}

#[inline]
pub(crate) fn probe_backward_unchecked<T: Real>(
    base: u32,
    row: u32,
    upstream: &[T],
    features: &mut FeatureCodebook<T>,
    conf: &mut ConfidenceCodebook<T>,
) {
    let mut scratch = [T::zero(); 2 * MAX_PROBES];
    probe_backward_scratch(base, row, upstream, features, conf, &mut scratch);
}

/// As [`probe_backward_unchecked`], with caller-provided scratch of at least
/// `2 * N_p` entries so hot loops skip re-initializing stack buffers.
#[inline]
pub(crate) fn probe_backward_scratch<T: Real>(
    base: u32,
    row: u32,
    upstream: &[T],
    features: &mut FeatureCodebook<T>,
    conf: &mut ConfidenceCodebook<T>,
    scratch: &mut [T],
) {
    if conf.probes == 1 {
        features.accumulate_row(base as usize, T::one(), upstream);
        return;
    }
    match features.width {
        1 => probe_backward_fixed::<T, 1>(base, row, upstream, features, conf, scratch),
        2 => probe_backward_fixed::<T, 2>(base, row, upstream, features, conf, scratch),
        4 => probe_backward_fixed::<T, 4>(base, row, upstream, features, conf, scratch),
        8 => probe_backward_fixed::<T, 8>(base, row, upstream, features, conf, scratch),
        _ => probe_backward_any(base, row, upstream, features, conf, scratch),
    }
}

#[inline(always)]
fn probe_backward_fixed<T: Real, const W: usize>(
    base: u32,
    row: u32,
    upstream: &[T],
    features: &mut FeatureCodebook<T>,
    conf: &mut ConfidenceCodebook<T>,
    scratch: &mut [T],
) {
    let n_p = conf.probes;
    let (base, row) = (base as usize, row as usize);
    let g: &[T; W] = upstream[..W].try_into().expect("upstream width");
    let (sigma, dots) = scratch[..2 * n_p].split_at_mut(n_p);
    let (logits, conf_grads) = conf.row_pair_mut(row);
    let logits: &[T] = logits;
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let feats = &features.values[base * W..(base + n_p) * W];
    let mut total = T::zero();
    let mut weighted = T::zero();
    for (s, &c) in sigma.iter_mut().zip(logits) {
        *s = (c - max).exp_softmax();
    }
    for ((f, &e), d) in feats.chunks_exact(W).zip(sigma.iter()).zip(dots.iter_mut()) {
        let mut dot = T::zero();
        for k in 0..W {
            dot += f[k] * g[k];
        }
        *d = dot;
        total += e;
        weighted += e * dot;
    }
    let inv = T::one() / total;
    let expected = weighted * inv;
    let feature_grads = &mut features.grads[base * W..(base + n_p) * W];
    for ((fg, cg), (&s, &d)) in feature_grads
        .chunks_exact_mut(W)
        .zip(conf_grads.iter_mut())
        .zip(sigma.iter().zip(dots.iter()))
    {
        let s = s * inv;
        for k in 0..W {
            fg[k] += s * g[k];
        }
        *cg += s * (d - expected);
    }
}

fn probe_backward_any<T: Real>(
    base: u32,
    row: u32,
    upstream: &[T],
    features: &mut FeatureCodebook<T>,
    conf: &mut ConfidenceCodebook<T>,
    scratch: &mut [T],
) {
    let n_p = conf.probes;
    let width = features.width;
    let (base, row) = (base as usize, row as usize);
    let (sigma, dots) = scratch[..2 * n_p].split_at_mut(n_p);
    let (logits, conf_grads) = conf.row_pair_mut(row);
    let logits: &[T] = logits;
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let feats = &features.values[base * width..(base + n_p) * width];
    let mut total = T::zero();
    let mut weighted = T::zero();
    for j in 0..n_p {
        let e = (logits[j] - max).exp_softmax();
        let dot: T = feats[j * width..(j + 1) * width]
            .iter()
            .zip(upstream)
            .map(|(&f, &u)| f * u)
            .sum();
        sigma[j] = e;
        dots[j] = dot;
        total += e;
        weighted += e * dot;
    }
    let inv = T::one() / total;
    let expected = weighted * inv;
    let feature_grads = &mut features.grads[base * width..(base + n_p) * width];
    for j in 0..n_p {
        let s = sigma[j] * inv;
        for (g, &u) in feature_grads[j * width..(j + 1) * width].iter_mut().zip(upstream) {
            *g += s * u;
        }
        conf_grads[j] += s * (dots[j] - expected);
    }
}

/// Inference-path lookup through the baked offsets.
pub fn infer_lookup<'a, T: Real>(
    v: &[u32],
    features: &'a FeatureCodebook<T>,
    baked: &BakedIndexCodebook,
) -> &'a [T] {
    let n_f = features.rows as u32;
    let base = probe_base(hash_primary(v), baked.probes, n_f);
    let row = hash_auxiliary(v) as usize & (baked.len() - 1);
    features.row((base + baked.get(row)) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_probe_is_plain_hash_lookup() {
        let mut r = rng(1);
        let features = FeatureCodebook::<f64>::uniform(64, 2, 1.0, &mut r);
        let conf = ConfidenceCodebook::<f64>::uniform(8, 1, 1.0, &mut r);
        for x in 0..20u32 {
            for y in 0..20u32 {
                let v = [x, y, 0];
                let (feature, trace) = probe_forward(&v, &features, &conf).unwrap();
                assert_eq!(trace.choice, 0);
                assert_eq!(feature, features.row((hash_primary(&v) % 64) as usize));
            }
        }
    }

    #[test]
    fn forward_picks_highest_confidence() {
        let features = FeatureCodebook::<f64>::zeros(16, 1);
        let conf = ConfidenceCodebook::from_values(1, 4, vec![0.1, 0.9, 0.3, 0.2]).unwrap();
        let (_, trace) = probe_forward(&[3, 4, 0], &features, &conf).unwrap();
        assert_eq!(trace.choice, 1);
    }

    #[test]
    fn equal_confidences_pick_first_with_uniform_softmax() {
        let features = FeatureCodebook::<f64>::zeros(16, 1);
        let conf = ConfidenceCodebook::from_values(1, 4, vec![0.7; 4]).unwrap();
        let (_, trace) = probe_forward(&[3, 4, 0], &features, &conf).unwrap();
        assert_eq!(trace.choice, 0);
        for w in trace.softmax_weights(&conf) {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_single_probe_sends_everything_to_one_feature() {
        let mut r = rng(2);
        let mut features = FeatureCodebook::<f64>::uniform(16, 2, 1.0, &mut r);
        let mut conf = ConfidenceCodebook::<f64>::uniform(4, 1, 1.0, &mut r);
        let v = [5, 9, 0];
        let (_, trace) = probe_forward(&v, &features, &conf).unwrap();
        probe_backward(&trace, &[0.5, -2.0], &mut features, &mut conf).unwrap();
        let idx = trace.feature_index();
        assert_eq!(features.grads()[idx * 2..idx * 2 + 2], [0.5, -2.0]);
        assert_eq!(features.grads().iter().filter(|&&g| g != 0.0).count(), 2);
        assert!(conf.grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_uniform_pair_splits_gradient() {
        let mut features = FeatureCodebook::<f64>::zeros(16, 2);
        let mut conf = ConfidenceCodebook::<f64>::zeros(4, 2);
        let (_, trace) = probe_forward(&[1, 1, 0], &features, &conf).unwrap();
        probe_backward(&trace, &[1.0, 3.0], &mut features, &mut conf).unwrap();
        let base = trace.base as usize;
        assert_eq!(features.grads()[base * 2..base * 2 + 4], [0.5, 1.5, 0.5, 1.5]);
    }

    #[test]
    fn stale_trace_is_rejected() {
        let features = FeatureCodebook::<f64>::zeros(16, 2);
        let conf = ConfidenceCodebook::<f64>::zeros(4, 2);
        let (_, trace) = probe_forward(&[1, 1, 0], &features, &conf).unwrap();
        let mut other_features = FeatureCodebook::<f64>::zeros(32, 2);
        let mut other_conf = ConfidenceCodebook::<f64>::zeros(4, 2);
        assert!(matches!(
            probe_backward(&trace, &[1.0, 1.0], &mut other_features, &mut other_conf),
            Err(Error::StaleTrace)
        ));
    }

    /// Softmax-weighted surrogate `sum_j s_j <D_f[base + j], g>`.
    fn surrogate(features: &FeatureCodebook<f64>, conf: &ConfidenceCodebook<f64>, trace: &ProbeTrace, g: &[f64]) -> f64 {
        let row = conf.row(trace.row as usize);
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = row.iter().map(|c| (c - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        (0..conf.probes())
            .map(|j| {
                let f = features.row(trace.base as usize + j);
                exps[j] / total * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn confidence_gradient_matches_finite_differences() {
        let mut r = rng(3);
        let mut features = FeatureCodebook::<f64>::uniform(16, 2, 1.0, &mut r);
        let mut conf = ConfidenceCodebook::<f64>::uniform(8, 4, 2.0, &mut r);
        let g = [0.7, -1.3];
        let v = [11, 6, 0];
        let (_, trace) = probe_forward(&v, &features, &conf).unwrap();
        probe_backward(&trace, &g, &mut features, &mut conf).unwrap();

        let h = 1e-6;
        let row = trace.row as usize;
        for j in 0..4 {
            let mut plus = conf.clone();
            plus.row_mut(row)[j] += h;
            let mut minus = conf.clone();
            minus.row_mut(row)[j] -= h;
            let numeric = (surrogate(&features, &plus, &trace, &g) - surrogate(&features, &minus, &trace, &g)) / (2.0 * h);
            let analytic = conf.grads()[row * 4 + j];
            assert!(rel_err(numeric, analytic) < 1e-5, "probe {j}: {numeric} vs {analytic}");
        }
        for j in 0..4 {
            for c in 0..2 {
                let idx = (trace.base as usize + j) * 2 + c;
                let mut plus = features.clone();
                plus.values_mut()[idx] += h;
                let mut minus = features.clone();
                minus.values_mut()[idx] -= h;
                let numeric = (surrogate(&plus, &conf, &trace, &g) - surrogate(&minus, &conf, &trace, &g)) / (2.0 * h);
                assert!(rel_err(numeric, features.grads()[idx]) < 1e-5);
            }
        }
    }

    #[test]
    fn bake_examples() {
        let zeros = ConfidenceCodebook::<f32>::zeros(6, 4);
        assert!(bake(&zeros).entries().iter().all(|&e| e == 0));

        let tie = ConfidenceCodebook::from_values(1, 4, vec![-1.0f32, 5.0, 5.0, 2.0]).unwrap();
        assert_eq!(bake(&tie).get(0), 1);
    }

    #[test]
    fn bake_matches_row_scan_and_is_idempotent() {
        let mut r = rng(4);
        let conf = ConfidenceCodebook::<f64>::uniform(8, 4, 1.0, &mut r);
        let baked = bake(&conf);
        for row in 0..8 {
            let values = conf.row(row);
            let mut best = 0;
            for j in 0..4 {
                if values[j] > values[best] {
                    best = j;
                }
            }
            assert_eq!(baked.get(row), best as u32);
        }
        let mut again = baked.clone();
        bake_into(&conf, &mut again);
        assert_eq!(again, baked);
        assert!(baked.entries().iter().all(|&e| e < 4));
    }

    #[test]
    fn infer_matches_training_lookup_after_bake() {
        let mut r = rng(5);
        let features = FeatureCodebook::<f32>::uniform(64, 2, 1.0, &mut r);
        let conf = ConfidenceCodebook::<f32>::uniform(16, 4, 1.0, &mut r);
        let baked = bake(&conf);
        for x in 0..33u32 {
            for y in 0..33u32 {
                let v = [x, y, 0];
                let (train, _) = probe_forward(&v, &features, &conf).unwrap();
                assert_eq!(infer_lookup(&v, &features, &baked), train);
            }
        }
    }

    #[test]
    fn perturbing_one_row_changes_only_its_lookups() {
        let mut r = rng(6);
        let features = FeatureCodebook::<f32>::uniform(64, 2, 1.0, &mut r);
        let mut conf = ConfidenceCodebook::<f32>::uniform(16, 4, 1.0, &mut r);
        let before = bake(&conf);
        let target = 5usize;
        let old = before.get(target) as usize;
        let new = (old + 1) % 4;
        conf.row_mut(target)[new] = 10.0;
        let after = bake(&conf);

        let mut changed = 0;
        for x in 0..33u32 {
            for y in 0..33u32 {
                let v = [x, y, 0];
                let maps_to_row = (hash_auxiliary(&v) & 15) as usize == target;
                let differs = infer_lookup(&v, &features, &before) != infer_lookup(&v, &features, &after);
                assert_eq!(maps_to_row, differs, "vertex {x},{y}");
                changed += differs as usize;
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn accumulation_order_does_not_matter() {
        let mut r = rng(7);
        let base_features = FeatureCodebook::<f64>::uniform(16, 2, 1.0, &mut r);
        let base_conf = ConfidenceCodebook::<f64>::uniform(8, 4, 1.0, &mut r);
        let lookups: Vec<([u32; 3], [f64; 2])> = (0..200)
            .map(|_| {
                (
                    [r.random_range(0..40), r.random_range(0..40), 0],
                    [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)],
                )
            })
            .collect();

        let run = |order: &mut dyn Iterator<Item = &([u32; 3], [f64; 2])>| {
            let mut f = base_features.clone();
            let mut c = base_conf.clone();
            for (v, g) in order {
                let (_, t) = probe_forward(v, &f, &c).unwrap();
                probe_backward(&t, g, &mut f, &mut c).unwrap();
            }
            (f, c)
        };
        let (f1, c1) = run(&mut lookups.iter());
        let (f2, c2) = run(&mut lookups.iter().rev());
        for (a, b) in f1.grads().iter().zip(f2.grads()).chain(c1.grads().iter().zip(c2.grads().iter())) {
            assert!(rel_err(*a, *b) < 1e-5);
        }
    }
}
