//! Parameter sweeps over layer count, ray count and component distribution,
//! plus CDF export for normal-probability plots.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{mix64, DistSpec};
use crate::exec::Executor;
use crate::montecarlo::{run_experiment_with, ConfigError, ModelKind, ScenarioConfig};
use crate::stats::{fit_normal, ks_sorted, sample_std, EmpiricalCdf, KsResult, StatsError};

pub const DEFAULT_LAYER_COUNTS: [usize; 5] = [1, 5, 10, 20, 40];
pub const DEFAULT_RAY_COUNTS: [usize; 5] = [5, 10, 20, 40, 100];

/// Rays per end in the layer sweep.
pub const LAYER_SWEEP_RAYS: usize = 10;
/// Layer count assumed for the ray sweep.
pub const RAY_SWEEP_LAYERS: usize = 5;
/// Rays per end in the distribution sweep.
pub const DIST_SWEEP_RAYS: usize = 5;

/// Maximum number of points written by [`cdf_export`].
pub const MAX_PLOT_POINTS: usize = 2000;

/// Reference standard deviations in dB, layer sweep at N = M = 10, for
/// K = 1, 5, 10, 20, 40.
pub const LAYER_SWEEP_REFERENCE: [(ModelKind, &str, [f64; 5]); 6] = [
    (ModelKind::SumProd, "beta", [2.7, 3.8, 4.9, 6.6, 9.1]),
    (ModelKind::SumProd, "r", [4.2, 5.6, 6.9, 8.9, 12.0]),
    (ModelKind::SumProd, "l", [3.1, 4.2, 5.3, 7.0, 9.5]),
    (ModelKind::Prod, "beta", [9.0, 19.5, 27.5, 38.8, 55.1]),
    (ModelKind::Prod, "r", [6.1, 11.4, 15.6, 21.7, 30.6]),
    (ModelKind::Prod, "l", [6.7, 14.1, 19.6, 27.7, 39.0]),
];

/// Reference standard deviations in dB, ray sweep for N = 5, 10, 20, 40, 100.
pub const RAY_SWEEP_REFERENCE: [(ModelKind, &str, [f64; 5]); 6] = [
    (ModelKind::SumProd, "beta", [5.6, 3.9, 2.7, 1.9, 1.2]),
    (ModelKind::SumProd, "r", [7.6, 5.6, 4.0, 3.0, 1.9]),
    (ModelKind::SumProd, "l", [6.1, 4.2, 2.9, 2.1, 1.3]),
    (ModelKind::Prod, "beta", [19.7, 19.6, 19.6, 19.6, 19.5]),
    (ModelKind::Prod, "r", [11.7, 11.4, 11.2, 11.0, 10.9]),
    (ModelKind::Prod, "l", [14.2, 14.0, 13.6, 13.8, 13.8]),
];

/// `beta:1,1`, `r:10`, `l:1,1`.
pub fn default_dists() -> Vec<DistSpec> {
    vec![DistSpec::uniform(), DistSpec::RInv { scale: 10.0 }, DistSpec::LInv { mu: 1.0, sigma: 1.0 }]
}

/// Default grid of the distribution sweep.
pub fn distribution_grid() -> Vec<DistSpec> {
    let mut grid: Vec<DistSpec> = [0.5, 1.0, 2.0].iter().map(|&s| DistSpec::Beta { a: s, b: s }).collect();
    grid.extend([1.0, 3.0, 10.0, 30.0].iter().map(|&scale| DistSpec::RInv { scale }));
    grid.extend([0.5, 1.0, 2.0].iter().map(|&sigma| DistSpec::LInv { mu: 1.0, sigma }));
    grid
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("sweep grid is empty: no {0}")]
    EmptyGrid(&'static str),
    #[error("duplicate grid cell {0}")]
    Duplicate(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweptParam {
    K,
    N,
}

impl SweptParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweptParam::K => "K",
            SweptParam::N => "N",
        }
    }

    fn apply(self, config: &mut ScenarioConfig, value: usize) {
        match self {
            SweptParam::K => config.k = value,
            SweptParam::N => {
                config.n = value;
                config.m = value;
            }
        }
    }
}

impl fmt::Display for SweptParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweptParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "k" | "K" => Ok(SweptParam::K),
            "n" | "N" => Ok(SweptParam::N),
            other => Err(format!("cannot sweep `{other}`; expected k or n")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: ModelKind,
    pub dist: DistSpec,
    pub param_name: SweptParam,
    pub param_value: usize,
    pub std_db: f64,
    pub ks: f64,
    pub n: usize,
    pub seed: u64,
}

/// Every grid cell of a sweep, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub param: SweptParam,
    pub values: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub dists: Vec<DistSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub base: ScenarioConfig,
    pub grid: SweepGrid,
    pub master_seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn row(&self, model: ModelKind, dist: &DistSpec, value: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.model == model && r.dist == *dist && r.param_value == value)
    }
}

/// Seed of grid cell `index`, independent across cells.
pub fn cell_seed(master: u64, index: usize) -> u64 {
    mix64(mix64(master).wrapping_add(index as u64))
}

impl SweepGrid {
    /// Cell configurations in grid order: models, then distributions, then
    /// swept values.
    pub fn cells(&self, base: &ScenarioConfig) -> Result<Vec<ScenarioConfig>, SweepError> {
        if self.values.is_empty() {
            return Err(SweepError::EmptyGrid("values"));
        }
        if self.models.is_empty() {
            return Err(SweepError::EmptyGrid("models"));
        }
        if self.dists.is_empty() {
            return Err(SweepError::EmptyGrid("distributions"));
        }
        let mut seen = HashSet::new();
        let mut cells = Vec::new();
        for &model in &self.models {
            for dist in &self.dists {
                for &value in &self.values {
                    let key = format!("{model}/{dist}/{}={value}", self.param);
                    if !seen.insert(key.clone()) {
                        return Err(SweepError::Duplicate(key));
                    }
                    let mut cfg = base.clone().with_dist(*dist);
                    cfg.model = model;
                    self.param.apply(&mut cfg, value);
                    cfg.seed = cell_seed(base.seed, cells.len());
                    cfg.validate()?;
                    cells.push(cfg);
                }
            }
        }
        Ok(cells)
    }
}

/// Runs one cell and summarizes its dB samples.
pub fn evaluate_cell(config: &ScenarioConfig, param: SweptParam, exec: &Executor) -> Result<SweepRow, SweepError> {
    let set = run_experiment_with(config, exec)?;
    let ks = ks_of(&set.samples_db)?;
    Ok(SweepRow {
        model: config.model,
        dist: config.dist_s,
        param_name: param,
        param_value: match param {
            SweptParam::K => config.k,
            SweptParam::N => config.n,
        },
        std_db: sample_std(&set.samples_db)?,
        ks: ks.statistic,
        n: set.len(),
        seed: config.seed,
    })
}

fn ks_of(samples: &[f64]) -> Result<KsResult, StatsError> {
    let fit = fit_normal(samples)?;
    let ecdf = EmpiricalCdf::new(samples)?;
    Ok(ks_sorted(ecdf.sorted_samples(), fit))
}

pub fn sweep(base: &ScenarioConfig, grid: SweepGrid, exec: &Executor) -> Result<SweepReport, SweepError> {
    let cells = grid.cells(base)?;
    let rows = cells
        .iter()
        .map(|cfg| evaluate_cell(cfg, grid.param, exec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepReport { base: base.clone(), grid, master_seed: base.seed, rows })
}

pub fn sweep_layers(
    base: &ScenarioConfig,
    ks: &[usize],
    models: &[ModelKind],
    dists: &[DistSpec],
    exec: &Executor,
) -> Result<SweepReport, SweepError> {
    let grid = SweepGrid { param: SweptParam::K, values: ks.to_vec(), models: models.to_vec(), dists: dists.to_vec() };
    sweep(base, grid, exec)
}

pub fn sweep_rays(
    base: &ScenarioConfig,
    ns: &[usize],
    models: &[ModelKind],
    dists: &[DistSpec],
    exec: &Executor,
) -> Result<SweepReport, SweepError> {
    let grid = SweepGrid { param: SweptParam::N, values: ns.to_vec(), models: models.to_vec(), dists: dists.to_vec() };
    sweep(base, grid, exec)
}

/// Sweeps the layer count for each distribution in `grid` at the base
/// model and ray count.
pub fn sweep_distributions(
    base: &ScenarioConfig,
    grid: &[DistSpec],
    ks: &[usize],
    exec: &Executor,
) -> Result<SweepReport, SweepError> {
    sweep_layers(base, ks, &[base.model], grid, exec)
}

/// Base configuration of the layer sweep: sum-product, N = M = 10.
pub fn layer_sweep_base(seed: u64) -> ScenarioConfig {
    ScenarioConfig::new(ModelKind::SumProd, LAYER_SWEEP_RAYS, 1, DistSpec::uniform()).with_seed(seed)
}

/// Base configuration of the ray sweep: sum-product, K = 5.
pub fn ray_sweep_base(seed: u64) -> ScenarioConfig {
    ScenarioConfig::new(ModelKind::SumProd, DEFAULT_RAY_COUNTS[0], RAY_SWEEP_LAYERS, DistSpec::uniform())
        .with_seed(seed)
}

/// Base configuration of the distribution sweep: sum-product, N = M = 5.
pub fn distribution_sweep_base(seed: u64) -> ScenarioConfig {
    ScenarioConfig::new(ModelKind::SumProd, DIST_SWEEP_RAYS, 1, DistSpec::uniform()).with_seed(seed)
}

/// Look up a reference value by model, distribution family and column.
pub fn reference_value(
    table: &[(ModelKind, &str, [f64; 5])],
    model: ModelKind,
    dist: &DistSpec,
    column: usize,
) -> Option<f64> {
    table
        .iter()
        .find(|(m, family, _)| *m == model && *family == dist.family())
        .and_then(|(_, _, values)| values.get(column).copied())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationScore {
    pub k: usize,
    /// Root-mean-square relative deviation from the reference table.
    pub rms_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scores: Vec<CalibrationScore>,
    pub best_k: usize,
    pub q: usize,
}

/// Finds the layer count whose ray sweep best matches `reference`, running
/// each candidate at `q` realizations per cell.
pub fn calibrate_ray_sweep(
    base: &ScenarioConfig,
    candidates: &[usize],
    ns: &[usize],
    reference: &[(ModelKind, &str, [f64; 5])],
    q: usize,
    exec: &Executor,
) -> Result<Calibration, SweepError> {
    if candidates.is_empty() {
        return Err(SweepError::EmptyGrid("candidate layer counts"));
    }
    let models: Vec<ModelKind> = vec![ModelKind::SumProd, ModelKind::Prod];
    let mut scores = Vec::new();
    for (i, &k) in candidates.iter().enumerate() {
        let mut cfg = base.clone().with_q(q);
        cfg.k = k;
        cfg.seed = cell_seed(base.seed, 1_000_000 + i);
        let report = sweep_rays(&cfg, ns, &models, &default_dists(), exec)?;
        let (mut acc, mut count) = (0.0, 0usize);
        for row in &report.rows {
            let column = ns.iter().position(|&n| n == row.param_value).unwrap();
            let col = DEFAULT_RAY_COUNTS.iter().position(|&n| n == ns[column]);
            if let Some(expected) = col.and_then(|c| reference_value(reference, row.model, &row.dist, c)) {
                acc += ((row.std_db - expected) / expected).powi(2);
                count += 1;
            }
        }
        let rms_rel_error = if count == 0 { f64::INFINITY } else { (acc / count as f64).sqrt() };
        scores.push(CalibrationScore { k, rms_rel_error });
    }
    let best_k = scores
        .iter()
        .min_by(|a, b| a.rms_rel_error.total_cmp(&b.rms_rel_error))
        .map(|s| s.k)
        .unwrap();
    Ok(Calibration { scores, best_k, q })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub db: f64,
    pub empirical: f64,
    pub normal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfExport {
    pub config: ScenarioConfig,
    pub ks: KsResult,
    pub points: Vec<CdfPoint>,
}

/// Centered dB samples with their ECDF and fitted-normal CDF, thinned to at
/// most [`MAX_PLOT_POINTS`] evenly spaced order statistics. The order
/// statistic where the K-S supremum is attained is always kept.
pub fn cdf_export(config: &ScenarioConfig, exec: &Executor) -> Result<CdfExport, SweepError> {
    let set = run_experiment_with(config, exec)?.centered();
    let fit = fit_normal(&set.samples_db)?;
    let ecdf = EmpiricalCdf::new(&set.samples_db)?;
    let sorted = ecdf.sorted_samples();
    let ks = ks_sorted(sorted, fit);
    let n = sorted.len();
    let mut picks: Vec<usize> = if n <= MAX_PLOT_POINTS {
        (0..n).collect()
    } else {
        let slots = MAX_PLOT_POINTS - 1;
        (0..slots).map(|j| (j * (n - 1) + (slots - 1) / 2) / (slots - 1)).collect()
    };
    picks.push(ks.argmax);
    picks.sort_unstable();
    picks.dedup();
    let points = picks
        .into_iter()
        .map(|i| {
            let x = sorted[i];
            CdfPoint { db: x, empirical: ecdf.eval(x), normal: fit.cdf(x) }
        })
        .collect();
    Ok(CdfExport { config: config.clone(), ks, points })
}
