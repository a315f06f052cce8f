//! The `.cngp` model file: a fixed 36-byte header followed by raw,
//! seekable tables. Nothing is entropy coded, so a decoder can answer a
//! query straight from the loaded tables.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CNGP"
//!      4     2  format version (u16, currently 1)
//!      6     1  input dimensions
//!      7     1  levels L
//!      8     1  features per level F
//!      9     1  log2 N_f
//!     10     1  log2 N_c
//!     11     1  log2 N_p
//!     12     4  coarsest resolution (u32)
//!     16     4  finest resolution (u32)
//!     20     2  hidden neurons (u16)
//!     22     1  hidden layers
//!     23     1  output channels
//!     24     1  flags (bit 0: sigmoid output)
//!     25     3  reserved, zero
//!     28     4  image width (u32)
//!     32     4  image height (u32)
//!     36        per level: N_f * F half floats, then (hashed levels with
//!               N_p > 1 only) N_c indices of log2 N_p bits packed LSB-first
//!               and padded to a byte
//!               decoder: per layer, weights (output-major) then biases,
//!               all half floats
//! ```
//!
//! All multi-byte values are little-endian.

use std::io::Read;

use half::f16;
use rayon::prelude::*;

use crate::codebook::{hash_auxiliary, hash_primary, BakedIndexCodebook};
use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::grid::{check_unit_domain, corners_unchecked, dense_index_unchecked, probe_base, IndexMode, LevelSpec, MAX_DIM};
use crate::image::{check_rect, pixel_center, Image};
use crate::mlp::{MlpParams, MlpWorkspace, OutputActivation};
use crate::real::Real;

pub const MAGIC: [u8; 4] = *b"CNGP";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 36;

const FLAG_SIGMOID: u8 = 1;

/// Everything stored in the fixed-size header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelHeader {
    pub dims: usize,
    pub hyper: HyperParams,
    pub outputs: usize,
    pub width: u32,
    pub height: u32,
}

impl ModelHeader {
    pub fn level_specs(&self) -> Result<Vec<LevelSpec>> {
        LevelSpec::ladder(self.dims, self.hyper.levels, self.hyper.n_min, self.hyper.n_max, self.hyper.n_f)
    }

    pub fn size_report(&self) -> Result<SizeReport> {
        SizeReport::compute(&self.hyper, self.dims, self.outputs)
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let h = &self.hyper;
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        out[6] = self.dims as u8;
        out[7] = h.levels as u8;
        out[8] = h.features as u8;
        out[9] = h.n_f.trailing_zeros() as u8;
        out[10] = h.n_c.trailing_zeros() as u8;
        out[11] = h.n_p.trailing_zeros() as u8;
        out[12..16].copy_from_slice(&h.n_min.to_le_bytes());
        out[16..20].copy_from_slice(&h.n_max.to_le_bytes());
        out[20..22].copy_from_slice(&(h.neurons as u16).to_le_bytes());
        out[22] = h.hidden_layers as u8;
        out[23] = self.outputs as u8;
        out[24] = if h.activation == OutputActivation::Sigmoid { FLAG_SIGMOID } else { 0 };
        out[28..32].copy_from_slice(&self.width.to_le_bytes());
        out[32..36].copy_from_slice(&self.height.to_le_bytes());
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[0..4] != MAGIC {
            if bytes.len() < 4 && MAGIC.starts_with(bytes) {
                return Err(Error::TruncatedFile {
                    expected: HEADER_LEN as u64,
                    actual: bytes.len() as u64,
                });
            }
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedFile {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let invalid = |msg: String| Err(Error::InvariantViolation(msg));
        let dims = bytes[6] as usize;
        if dims == 0 || dims > MAX_DIM {
            return invalid(format!("input dimension {dims} not in 1..={MAX_DIM}"));
        }
        for (name, log) in [("n_f", bytes[9]), ("n_c", bytes[10]), ("n_p", bytes[11])] {
            if log > 24 {
                return invalid(format!("log2 {name} = {log} is out of range"));
            }
        }
        let flags = bytes[24];
        if flags & !FLAG_SIGMOID != 0 {
            return invalid(format!("unknown flag bits {flags:#04x}"));
        }
        if bytes[25..28] != [0, 0, 0] {
            return invalid("reserved header bytes are not zero".into());
        }
        let outputs = bytes[23] as usize;
        if outputs == 0 {
            return invalid("decoder has no outputs".into());
        }
        let (width, height) = (u32_at(28), u32_at(32));
        if width == 0 || height == 0 {
            return invalid(format!("image size {width}x{height} is empty"));
        }
        let hyper = HyperParams {
            n_f: 1 << bytes[9],
            n_c: 1 << bytes[10],
            n_p: 1 << bytes[11],
            features: bytes[8] as u32,
            levels: bytes[7] as u32,
            n_min: u32_at(12),
            n_max: u32_at(16),
            neurons: u16::from_le_bytes([bytes[20], bytes[21]]) as u32,
            hidden_layers: bytes[22] as u32,
            activation: if flags & FLAG_SIGMOID != 0 {
                OutputActivation::Sigmoid
            } else {
                OutputActivation::Linear
            },
        };
        hyper
            .validate()
            .map_err(|e| Error::InvariantViolation(e.to_string()))?;
        Ok(Self {
            dims,
            hyper,
            outputs,
            width,
            height,
        })
    }
}

/// Byte breakdown of a model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct SizeReport {
    pub header: u64,
    pub features: u64,
    pub indices: u64,
    pub mlp: u64,
}

impl SizeReport {
    pub fn compute(hyper: &HyperParams, dims: usize, outputs: usize) -> Result<Self> {
        hyper.validate()?;
        let specs = LevelSpec::ladder(dims, hyper.levels, hyper.n_min, hyper.n_max, hyper.n_f)?;
        let feature_bytes = hyper.n_f as u64 * hyper.features as u64 * 2;
        let index_bits = hyper.n_p.trailing_zeros() as u64;
        let index_bytes = (hyper.n_c as u64 * index_bits).div_ceil(8);
        let hashed = specs.iter().filter(|s| s.mode == IndexMode::Hashed).count() as u64;
        Ok(Self {
            header: HEADER_LEN as u64,
            features: specs.len() as u64 * feature_bytes,
            indices: hashed * index_bytes,
            mlp: hyper.mlp_param_count(outputs) as u64 * 2,
        })
    }

    /// Bytes excluding the header.
    pub fn payload(&self) -> u64 {
        self.features + self.indices + self.mlp
    }

    pub fn total(&self) -> u64 {
        self.header + self.payload()
    }
}

/// Byte breakdown of an RGB image model.
pub fn size_report(hyper: &HyperParams) -> Result<SizeReport> {
    SizeReport::compute(hyper, 2, crate::config::RGB)
}

/// One level of an inference model. Features hold half-precision values widened to `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactLevel {
    pub spec: LevelSpec,
    pub features: Vec<f32>,
    /// Baked probe offsets; present on hashed levels with `N_p > 1`.
    pub indices: Option<Vec<u8>>,
}

/// Observer for table reads made while decoding.
pub trait AccessCounter {
    fn index_row(&mut self, _level: usize) {}
    fn feature_row(&mut self, _level: usize) {}
}

impl AccessCounter for () {}

/// Counts codebook rows read per query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TouchCounter {
    pub index_rows: usize,
    pub feature_rows: usize,
}

impl TouchCounter {
    pub fn total(&self) -> usize {
        self.index_rows + self.feature_rows
    }
}

impl AccessCounter for TouchCounter {
    fn index_row(&mut self, _level: usize) {
        self.index_rows += 1;
    }
    fn feature_row(&mut self, _level: usize) {
        self.feature_rows += 1;
    }
}

/// Immutable, inference-ready model at half precision.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactModel {
    header: ModelHeader,
    levels: Vec<CompactLevel>,
    mlp: MlpParams<f32>,
}

fn round_half<T: Real>(v: T) -> f32 {
    v.to_half().to_f32()
}

impl CompactModel {
    /// Downcasts trained tables to half precision.
    pub fn from_parts<'a, T: Real>(
        header: ModelHeader,
        levels: impl IntoIterator<Item = (LevelSpec, Vec<T>, Option<&'a BakedIndexCodebook>)>,
        mlp: &MlpParams<T>,
    ) -> Result<Self> {
        let levels: Vec<CompactLevel> = levels
            .into_iter()
            .map(|(spec, features, baked)| CompactLevel {
                spec,
                features: features.into_iter().map(round_half).collect(),
                indices: baked
                    .filter(|b| b.probes() > 1)
                    .map(|b| b.entries().to_vec()),
            })
            .collect();
        let flat: Vec<f32> = mlp.flat_params().into_iter().map(round_half).collect();
        let mlp = MlpParams::from_flat(&mlp.widths(), mlp.activation(), &flat)?;
        let model = Self { header, levels, mlp };
        model.check_consistency()?;
        Ok(model)
    }

    fn check_consistency(&self) -> Result<()> {
        let h = &self.header.hyper;
        let specs = self.header.level_specs()?;
        let bad = |msg: String| Err(Error::InvariantViolation(msg));
        if specs.len() != self.levels.len() {
            return bad(format!("expected {} levels, got {}", specs.len(), self.levels.len()));
        }
        for (spec, level) in specs.iter().zip(&self.levels) {
            if *spec != level.spec {
                return bad(format!("level {} does not match the header", spec.level));
            }
            if level.features.len() != (h.n_f * h.features) as usize {
                return bad(format!("level {} has a feature table of the wrong size", spec.level));
            }
            let wants_indices = spec.mode == IndexMode::Hashed && h.n_p > 1;
            match &level.indices {
                Some(idx) if wants_indices => {
                    if idx.len() != h.n_c as usize {
                        return bad(format!("level {} has {} index rows", spec.level, idx.len()));
                    }
                    if let Some(e) = idx.iter().find(|&&e| e as u32 >= h.n_p) {
                        return bad(format!("baked index {e} is outside the probing range {}", h.n_p));
                    }
                }
                None if !wants_indices => {}
                _ => return bad(format!("level {} index table presence is wrong", spec.level)),
            }
        }
        if self.mlp.widths() != h.mlp_widths(self.header.outputs) {
            return bad("decoder shape does not match the header".into());
        }
        Ok(())
    }

    pub fn header(&self) -> &ModelHeader {
        &self.header
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.header.hyper
    }

    pub fn levels(&self) -> &[CompactLevel] {
        &self.levels
    }

    pub fn mlp(&self) -> &MlpParams<f32> {
        &self.mlp
    }

    pub fn width(&self) -> u32 {
        self.header.width
    }

    pub fn height(&self) -> u32 {
        self.header.height
    }

    pub fn size_report(&self) -> Result<SizeReport> {
        self.header.size_report()
    }

    /// Scratch space for repeated queries.
    pub fn decoder(&self) -> Decoder<'_> {
        Decoder {
            model: self,
            encoded: vec![0.0; self.mlp.input_width()],
            ws: self.mlp.workspace(),
        }
    }

    /// Decodes one point by reading only the rows its corners address.
    pub fn decode_at(&self, x: &[f32]) -> Result<Vec<f32>> {
        self.decoder().decode(x, &mut ()).map(|v| v.to_vec())
    }

    pub fn decode_at_counted(&self, x: &[f32], counter: &mut TouchCounter) -> Result<Vec<f32>> {
        self.decoder().decode(x, counter).map(|v| v.to_vec())
    }

    /// Decodes every pixel center of the full image.
    pub fn decode_image(&self) -> Image {
        self.decode_rect(0, 0, self.header.width, self.header.height)
            .expect("full-image rectangle is always valid")
    }

    /// Decodes pixel centers in `[x0, x1) x [y0, y1)`.
    pub fn decode_rect(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Image> {
        check_rect(self.header.width, self.header.height, x0, y0, x1, y1)?;
        if self.header.dims != 2 || self.header.outputs != 3 {
            return Err(Error::InvariantViolation("only 2D RGB models decode to images".into()));
        }
        let (w, h) = (self.header.width, self.header.height);
        let row_len = (x1 - x0) as usize * 3;
        let mut data = vec![0.0f32; row_len * (y1 - y0) as usize];
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each_init(
                || self.decoder(),
                |dec, (r, row)| {
                    let py = y0 + r as u32;
                    for (c, out) in row.chunks_exact_mut(3).enumerate() {
                        let px = x0 + c as u32;
                        let x = [pixel_center(px, w) as f32, pixel_center(py, h) as f32];
                        let rgb = dec.decode(&x, &mut ()).expect("pixel centers lie in the unit square");
                        for (o, &v) in out.iter_mut().zip(rgb) {
                            *o = v.clamp(0.0, 1.0);
                        }
                    }
                },
            );
        Image::new(x1 - x0, y1 - y0, data)
    }
}

/// Reusable per-thread decoding state.
pub struct Decoder<'a> {
    model: &'a CompactModel,
    encoded: Vec<f32>,
    ws: MlpWorkspace<f32>,
}

impl Decoder<'_> {
    pub fn decode<C: AccessCounter>(&mut self, x: &[f32], counter: &mut C) -> Result<&[f32]> {
        let model = self.model;
        let header = &model.header;
        if x.len() != header.dims {
            return Err(Error::ShapeMismatch {
                expected: header.dims,
                actual: x.len(),
            });
        }
        check_unit_domain(x)?;
        let h = &header.hyper;
        let width = h.features as usize;
        self.encoded.fill(0.0);
        for (l, level) in model.levels.iter().enumerate() {
            let corners = corners_unchecked(x, level.spec.resolution);
            let slot = &mut self.encoded[l * width..(l + 1) * width];
            for (v, weight) in corners.iter() {
                let row = match (level.spec.mode, &level.indices) {
                    (IndexMode::Dense, _) => dense_index_unchecked(v, level.spec.resolution, header.dims),
                    (IndexMode::Hashed, Some(indices)) => {
                        counter.index_row(l);
                        let row = hash_auxiliary(v) & (h.n_c - 1);
                        probe_base(hash_primary(v), h.n_p, h.n_f) + indices[row as usize] as u32
                    }
                    (IndexMode::Hashed, None) => hash_primary(v) & (h.n_f - 1),
                } as usize;
                counter.feature_row(l);
                let feature = &level.features[row * width..(row + 1) * width];
                for (s, &f) in slot.iter_mut().zip(feature) {
                    *s += weight * f;
                }
            }
        }
        Ok(model.mlp.forward_ws(&self.encoded, &mut self.ws))
    }
}

fn pack_indices(entries: &[u8], bits: u32, out: &mut Vec<u8>) {
    let start = out.len();
    out.resize(start + (entries.len() * bits as usize).div_ceil(8), 0);
    let packed = &mut out[start..];
    for (i, &e) in entries.iter().enumerate() {
        for b in 0..bits as usize {
            if (e >> b) & 1 == 1 {
                let pos = i * bits as usize + b;
                packed[pos / 8] |= 1 << (pos % 8);
            }
        }
    }
}

fn unpack_indices(packed: &[u8], count: usize, bits: u32) -> Vec<u8> {
    (0..count)
        .map(|i| {
            let mut e = 0u8;
            for b in 0..bits as usize {
                let pos = i * bits as usize + b;
                e |= ((packed[pos / 8] >> (pos % 8)) & 1) << b;
            }
            e
        })
        .collect()
}

/// Packs entries LSB-first, `log2(probes)` bits each.
pub fn pack_baked(baked: &BakedIndexCodebook) -> Vec<u8> {
    let mut out = Vec::new();
    pack_indices(baked.entries(), baked.probes().trailing_zeros(), &mut out);
    out
}

fn push_half(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&f16::from_f32(v).to_le_bytes());
}

pub fn serialize(model: &CompactModel) -> Vec<u8> {
    let h = &model.header.hyper;
    let report = model.size_report().expect("model was validated on construction");
    let mut out = Vec::with_capacity(report.total() as usize);
    out.extend_from_slice(&model.header.encode());
    let bits = h.n_p.trailing_zeros();
    for level in &model.levels {
        for &v in &level.features {
            push_half(&mut out, v);
        }
        if let Some(indices) = &level.indices {
            pack_indices(indices, bits, &mut out);
        }
    }
    for v in model.mlp.flat_params() {
        push_half(&mut out, v);
    }
    debug_assert_eq!(out.len() as u64, report.total());
    out
}

/// Reads and validates only the header.
pub fn read_header<R: Read>(reader: &mut R) -> Result<ModelHeader> {
    let mut buf = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    ModelHeader::decode(&buf[..filled])
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    fn halves(&mut self, n: usize) -> Result<Vec<f32>> {
        self.take(n * 2)
            .chunks_exact(2)
            .map(|c| {
                let v = f16::from_le_bytes([c[0], c[1]]).to_f32();
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::InvariantViolation("non-finite parameter".into()))
                }
            })
            .collect()
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<CompactModel> {
    let header = ModelHeader::decode(bytes)?;
    let report = header.size_report()?;
    let actual = bytes.len() as u64;
    if actual < report.total() {
        return Err(Error::TruncatedFile {
            expected: report.total(),
            actual,
        });
    }
    if actual > report.total() {
        return Err(Error::InvariantViolation(format!(
            "{} trailing bytes after the model",
            actual - report.total()
        )));
    }
    let h = header.hyper;
    let bits = h.n_p.trailing_zeros();
    let mut cursor = Cursor {
        bytes,
        pos: HEADER_LEN,
    };
    let mut levels = Vec::with_capacity(h.levels as usize);
    for spec in header.level_specs()? {
        let features = cursor.halves((h.n_f * h.features) as usize)?;
        let indices = (spec.mode == IndexMode::Hashed && h.n_p > 1).then(|| {
            let packed = cursor.take((h.n_c as usize * bits as usize).div_ceil(8));
            unpack_indices(packed, h.n_c as usize, bits)
        });
        levels.push(CompactLevel {
            spec,
            features,
            indices,
        });
    }
    let flat = cursor.halves(h.mlp_param_count(header.outputs))?;
    let mlp = MlpParams::from_flat(&h.mlp_widths(header.outputs), h.activation, &flat)?;
    let model = CompactModel { header, levels, mlp };
    model.check_consistency()?;
    Ok(model)
}
