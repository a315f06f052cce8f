//! Quality metrics, hyperparameter sweeps and size/quality Pareto fronts.

use std::collections::BTreeMap;
use std::io::Write;

use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::trainer::{fit, TrainConfig};

/// PSNR in dB with a peak value of 1.0. Identical images give `f64::INFINITY`.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    if reference.width() != test.width() || reference.height() != test.height() {
        return Err(Error::DimensionMismatch(
            reference.width(),
            reference.height(),
            test.width(),
            test.height(),
        ));
    }
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    let mse = sum / reference.data().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

/// Method tag for plain hashing rows (`N_p = 1`).
pub const BASELINE_METHOD: &str = "ingp";
/// Method tag for learned-probing rows.
pub const PROBED_METHOD: &str = "cngp";

pub const CSV_HEADER: &str = "method,n_f,n_c,n_p,levels,neurons,seed,size_bytes,psnr_db,ms_per_step";

/// One trained configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub hyper: HyperParams,
    pub seed: u64,
    /// Payload bytes of the model file (everything after the fixed header).
    pub size_bytes: u64,
    /// `f64::INFINITY` for an exact reconstruction.
    pub psnr_db: f64,
    pub ms_per_step: f64,
}

impl SweepPoint {
    pub fn method(&self) -> &'static str {
        if self.hyper.is_baseline() {
            BASELINE_METHOD
        } else {
            PROBED_METHOD
        }
    }

    /// One CSV row. `ms_per_step` is left empty when `timing` is false so
    /// that reruns compare byte for byte.
    pub fn csv_row(&self, timing: bool) -> String {
        let h = &self.hyper;
        let psnr = if self.psnr_db.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.4}", self.psnr_db)
        };
        let ms = if timing {
            format!("{:.3}", self.ms_per_step)
        } else {
            String::new()
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method(),
            h.n_f,
            h.n_c,
            h.n_p,
            h.levels,
            h.neurons,
            self.seed,
            self.size_bytes,
            psnr,
            ms
        )
    }
}

/// Cartesian product of hyperparameter axes; unlisted fields come from `template`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub template: HyperParams,
    pub n_f: Vec<u32>,
    pub n_c: Vec<u32>,
    pub n_p: Vec<u32>,
    pub levels: Vec<u32>,
    pub neurons: Vec<u32>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// Grid with a single point at `template` and seed 0.
    pub fn single(template: HyperParams) -> Self {
        Self {
            template,
            n_f: vec![template.n_f],
            n_c: vec![template.n_c],
            n_p: vec![template.n_p],
            levels: vec![template.levels],
            neurons: vec![template.neurons],
            seeds: vec![0],
        }
    }

    /// Distinct configurations in sweep order. With `N_p = 1` the index
    /// codebook is unused, so those points collapse to a single `N_c = 1` entry.
    pub fn configs(&self) -> Result<Vec<HyperParams>> {
        let mut out: Vec<HyperParams> = Vec::new();
        for &levels in &self.levels {
            for &neurons in &self.neurons {
                for &n_f in &self.n_f {
                    for &n_p in &self.n_p {
                        for &n_c in &self.n_c {
                            let n_c = if n_p == 1 { 1 } else { n_c };
                            let h = HyperParams {
                                n_f,
                                n_c,
                                n_p,
                                levels,
                                neurons,
                                ..self.template
                            };
                            h.validate()?;
                            if !out.contains(&h) {
                                out.push(h);
                            }
                        }
                    }
                }
            }
        }
        if out.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidHyperparameter("sweep grid is empty".into()));
        }
        Ok(out)
    }
}

/// Fits every configuration of `grid` once per seed. `progress` sees each
/// point as soon as it finishes.
pub fn sweep(
    image: &Image,
    grid: &SweepGrid,
    train: &TrainConfig,
    mut progress: impl FnMut(&SweepPoint),
) -> Result<Vec<SweepPoint>> {
    let configs = grid.configs()?;
    let mut points = Vec::with_capacity(configs.len() * grid.seeds.len());
    for hyper in configs {
        for &seed in &grid.seeds {
            let config = TrainConfig { seed, ..*train };
            let out = fit(image, &hyper, &config, None)?;
            let point = SweepPoint {
                hyper,
                seed,
                size_bytes: out.metrics.size.payload(),
                psnr_db: out.metrics.final_psnr,
                ms_per_step: out.metrics.ms_per_step,
            };
            progress(&point);
            points.push(point);
        }
    }
    Ok(points)
}

pub fn write_csv<W: Write>(out: &mut W, points: &[SweepPoint], timing: bool) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for p in points {
        writeln!(out, "{}", p.csv_row(timing))?;
    }
    Ok(())
}

/// Per-configuration mean over seeds, in first-seen order.
pub fn mean_by_config(points: &[SweepPoint]) -> Vec<SweepPoint> {
    let mut order: Vec<HyperParams> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&SweepPoint>> = BTreeMap::new();
    for p in points {
        let slot = match order.iter().position(|h| *h == p.hyper) {
            Some(i) => i,
            None => {
                order.push(p.hyper);
                order.len() - 1
            }
        };
        groups.entry(slot).or_default().push(p);
    }
    groups
        .into_values()
        .map(|g| {
            let n = g.len() as f64;
            SweepPoint {
                hyper: g[0].hyper,
                seed: g[0].seed,
                size_bytes: g[0].size_bytes,
                psnr_db: g.iter().map(|p| p.psnr_db).sum::<f64>() / n,
                ms_per_step: g.iter().map(|p| p.ms_per_step).sum::<f64>() / n,
            }
        })
        .collect()
}

/// `a` dominates `b` if it is no larger, no worse, and strictly better in one.
pub fn dominates(a: (u64, f64), b: (u64, f64)) -> bool {
    a.0 <= b.0 && a.1 >= b.1 && (a.0 < b.0 || a.1 > b.1)
}

/// Indices of the points not dominated in (smaller size, higher PSNR),
/// sorted by size. Exact duplicates are all kept.
pub fn pareto_front(points: &[(u64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .cmp(&points[b].0)
            .then(points[b].1.total_cmp(&points[a].1))
    });
    let mut front = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        // Points sharing a size: only those at the group maximum can survive.
        let size = points[order[i]].0;
        let top = points[order[i]].1;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == size {
            if points[order[j]].1 == top && top > best {
                front.push(order[j]);
            }
            j += 1;
        }
        best = best.max(top);
        i = j;
    }
    front
}

/// Pareto-optimal sweep points (by payload size and PSNR).
pub fn pareto_points(points: &[SweepPoint]) -> Vec<SweepPoint> {
    let keys: Vec<_> = points.iter().map(|p| (p.size_bytes, p.psnr_db)).collect();
    pareto_front(&keys).into_iter().map(|i| points[i].clone()).collect()
}
