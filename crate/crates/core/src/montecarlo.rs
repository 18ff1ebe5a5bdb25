//! Monte Carlo sampling of local-area mean powers.
//!
//! Realization `q` of an experiment draws from its own substream
//! `(seed, q)`, so the sample set is a pure function of the configuration
//! no matter how the realizations are scheduled. Within a realization the
//! variates are consumed in a fixed order: `b`, then the random entries of
//! `S₁ … S_K` (each layer column-major), then `a`. Every complex entry
//! takes its amplitude first and its phase second.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_unit_phasor, AmplitudeSampler, DistError, DistSpec, RandomStream};
use crate::exec::Executor;
use crate::model::{
    build_cluster_layer, build_keyhole_layers, build_los_layer, normalize_layer,
    ChannelRealization, CouplingMatrix, RayVector,
};
use crate::stats::to_db;

/// Default number of local areas per experiment.
pub const DEFAULT_REALIZATIONS: usize = 100_000;

/// Substream reserved for the experiment-wide intermediate vector of the
/// sum model.
pub const FIXED_PART_INDEX: u64 = u64::MAX;

const MAX_ATTEMPTS: u64 = 64;
const ATTEMPT_SHIFT: u32 = 40;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{name} must be at least 1")]
    Zero { name: &'static str },
    #[error("model {model} requires N = M (got N = {n}, M = {m})")]
    NotSquare { model: ModelKind, n: usize, m: usize },
    #[error("line-of-sight model needs N >= 2")]
    LosTooSmall,
    #[error("path gain must lie in (0, 1], got {0}")]
    PathGain(f64),
    #[error("keyhole model needs K >= 2")]
    KeyholeDepth,
    #[error("keyhole layer {index} must lie in 1..={max}")]
    KeyholeIndex { index: usize, max: usize },
    #[error("cluster sizes {sizes:?} must be positive and sum to N = {n}")]
    ClusterSizes { sizes: Vec<usize>, n: usize },
    #[error("realization count {0} exceeds the substream budget")]
    TooManyRealizations(usize),
    #[error("invalid distribution: {0}")]
    Dist(#[from] DistError),
    #[error("unknown model `{0}`; expected sumprod, prod, sum, los, keyhole or cluster")]
    UnknownModel(String),
    #[error("realization {q}: power was zero on {attempts} consecutive substreams")]
    ZeroPower { q: usize, attempts: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    SumProd,
    Prod,
    Sum,
    Los,
    Keyhole,
    Cluster,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::SumProd,
        ModelKind::Prod,
        ModelKind::Sum,
        ModelKind::Los,
        ModelKind::Keyhole,
        ModelKind::Cluster,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SumProd => "sumprod",
            ModelKind::Prod => "prod",
            ModelKind::Sum => "sum",
            ModelKind::Los => "los",
            ModelKind::Keyhole => "keyhole",
            ModelKind::Cluster => "cluster",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| ConfigError::UnknownModel(s.to_string()))
    }
}

/// Root degree of the direct-ray entry in line-of-sight layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LosRoot {
    /// `pl^(1/K)` in every layer; the composite direct gain is `pl`.
    #[default]
    LayerCount,
    /// `pl^(1/k)` in layer `k`.
    LayerIndex,
}

impl FromStr for LosRoot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "layer-count" => Ok(LosRoot::LayerCount),
            "layer-index" => Ok(LosRoot::LayerIndex),
            other => Err(format!("unknown root `{other}`; expected layer-count or layer-index")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub dist_a: DistSpec,
    pub dist_b: DistSpec,
    pub dist_s: DistSpec,
    pub q: usize,
    pub seed: u64,
    /// Divide every layer by `√N`.
    pub normalize: bool,
    /// Free-space path gain of the direct ray (los only).
    pub pl: f64,
    pub los_root: LosRoot,
    /// 1-based number of the row-vector layer (keyhole only); defaults to
    /// the middle of the cascade.
    pub keyhole_index: Option<usize>,
    /// Ray counts per cluster (cluster only); defaults to two halves.
    pub clusters: Vec<usize>,
    /// Use `s·I` blocks instead of dense random blocks (cluster only).
    pub cluster_scalar: bool,
}

impl ScenarioConfig {
    /// Square scenario with the same distribution for every component.
    pub fn new(model: ModelKind, n: usize, k: usize, dist: DistSpec) -> Self {
        ScenarioConfig {
            model,
            n,
            m: n,
            k,
            dist_a: dist,
            dist_b: dist,
            dist_s: dist,
            q: DEFAULT_REALIZATIONS,
            seed: 0,
            normalize: false,
            pl: 0.01,
            los_root: LosRoot::LayerCount,
            keyhole_index: None,
            clusters: Vec::new(),
            cluster_scalar: false,
        }
    }

    pub fn with_q(mut self, q: usize) -> Self {
        self.q = q;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dist(mut self, dist: DistSpec) -> Self {
        self.dist_a = dist;
        self.dist_b = dist;
        self.dist_s = dist;
        self
    }

    pub fn resolved_keyhole_index(&self) -> usize {
        self.keyhole_index.unwrap_or(self.k.div_ceil(2).clamp(1, self.k.saturating_sub(1).max(1)))
    }

    pub fn resolved_clusters(&self) -> Vec<usize> {
        if !self.clusters.is_empty() {
            return self.clusters.clone();
        }
        if self.n < 2 {
            vec![self.n]
        } else {
            vec![self.n / 2, self.n - self.n / 2]
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [("N", self.n), ("M", self.m), ("K", self.k), ("Q", self.q)] {
            if v == 0 {
                return Err(ConfigError::Zero { name });
            }
        }
        if self.q as u64 >= 1 << ATTEMPT_SHIFT {
            return Err(ConfigError::TooManyRealizations(self.q));
        }
        self.dist_a.validate()?;
        self.dist_b.validate()?;
        self.dist_s.validate()?;
        let square = || {
            if self.n == self.m {
                Ok(())
            } else {
                Err(ConfigError::NotSquare { model: self.model, n: self.n, m: self.m })
            }
        };
        match self.model {
            ModelKind::SumProd | ModelKind::Sum => {}
            ModelKind::Prod => square()?,
            ModelKind::Los => {
                square()?;
                if self.n < 2 {
                    return Err(ConfigError::LosTooSmall);
                }
                if !(self.pl > 0.0 && self.pl <= 1.0) {
                    return Err(ConfigError::PathGain(self.pl));
                }
            }
            ModelKind::Keyhole => {
                if self.k < 2 {
                    return Err(ConfigError::KeyholeDepth);
                }
                let index = self.resolved_keyhole_index();
                if index == 0 || index >= self.k {
                    return Err(ConfigError::KeyholeIndex { index, max: self.k - 1 });
                }
            }
            ModelKind::Cluster => {
                square()?;
                let sizes = self.resolved_clusters();
                if sizes.contains(&0) || sizes.iter().sum::<usize>() != self.n {
                    return Err(ConfigError::ClusterSizes { sizes, n: self.n });
                }
            }
        }
        Ok(())
    }
}

/// How one layer is populated from the stream.
#[derive(Debug, Clone, PartialEq)]
enum LayerPlan {
    Dense { rows: usize, cols: usize },
    /// `s·I`, one draw.
    Scaled { n: usize },
    /// Direct-ray gain `pl^(1/root)` plus a dense `(n−1)×(n−1)` block.
    Los { n: usize, root: u32, direct: f64 },
    Clusters { sizes: Vec<usize>, scalar: bool },
}

/// A validated configuration with its samplers built once.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    sample_a: AmplitudeSampler,
    sample_b: AmplitudeSampler,
    sample_s: AmplitudeSampler,
    plan: Vec<LayerPlan>,
    /// Per-layer entry scale from normalization.
    layer_scale: f64,
    /// Sum model: `b`, layers and `c = S b` drawn once per experiment.
    fixed: Option<(RayVector, Vec<CouplingMatrix>, Vec<Complex64>)>,
}

impl Scenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let (n, m, k) = (config.n, config.m, config.k);
        let plan = match config.model {
            ModelKind::SumProd | ModelKind::Sum => (0..k)
                .map(|i| LayerPlan::Dense { rows: n, cols: if i == 0 { m } else { n } })
                .collect(),
            ModelKind::Prod => vec![LayerPlan::Scaled { n }; k],
            ModelKind::Los => (1..=k)
                .map(|layer| {
                    let root = match config.los_root {
                        LosRoot::LayerCount => k,
                        LosRoot::LayerIndex => layer,
                    };
                    let root = root as u32;
                    let direct = config.pl.powf(1.0 / f64::from(root));
                    LayerPlan::Los { n, root, direct }
                })
                .collect(),
            ModelKind::Keyhole => {
                let hole = config.resolved_keyhole_index() - 1;
                (0..k)
                    .map(|i| {
                        let cols = match i {
                            0 => m,
                            _ if i == hole + 1 => 1,
                            _ => n,
                        };
                        let rows = if i == hole { 1 } else { n };
                        LayerPlan::Dense { rows, cols }
                    })
                    .collect()
            }
            ModelKind::Cluster => vec![
                LayerPlan::Clusters {
                    sizes: config.resolved_clusters(),
                    scalar: config.cluster_scalar,
                };
                k
            ],
        };
        let layer_scale = if config.normalize { 1.0 / (n as f64).sqrt() } else { 1.0 };
        let mut scenario = Scenario {
            config: config.clone(),
            sample_a: config.dist_a.sampler()?,
            sample_b: config.dist_b.sampler()?,
            sample_s: config.dist_s.sampler()?,
            plan,
            layer_scale,
            fixed: None,
        };
        if config.model == ModelKind::Sum {
            let mut stream = RandomStream::new(config.seed, FIXED_PART_INDEX);
            let b = scenario.draw_rays(&scenario.sample_b, m, &mut stream);
            let layers = scenario.draw_layers(&mut stream);
            let mut c = b.entries().to_vec();
            for layer in &layers {
                c = layer.mul_vec(&c).expect("planned layers chain");
            }
            scenario.fixed = Some((b, layers, c));
        }
        Ok(scenario)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// The experiment-wide intermediate vector of the sum model.
    pub fn fixed_intermediate(&self) -> Option<&[Complex64]> {
        self.fixed.as_ref().map(|(_, _, c)| c.as_slice())
    }

    fn draw_rays(&self, sampler: &AmplitudeSampler, len: usize, stream: &mut RandomStream) -> RayVector {
        RayVector::new((0..len).map(|_| sampler.sample_complex(stream)).collect())
            .expect("dimensions validated")
    }

    fn draw_layers(&self, stream: &mut RandomStream) -> Vec<CouplingMatrix> {
        let s = &self.sample_s;
        let layers = self.plan.iter().map(|plan| match plan {
            &LayerPlan::Dense { rows, cols } => {
                CouplingMatrix::from_fn(rows, cols, |_, _| s.sample_complex(stream)).unwrap()
            }
            &LayerPlan::Scaled { n } => CouplingMatrix::scaled_identity(n, s.sample_complex(stream)).unwrap(),
            &LayerPlan::Los { n, root, .. } => {
                let nlos = CouplingMatrix::from_fn(n - 1, n - 1, |_, _| s.sample_complex(stream)).unwrap();
                build_los_layer(self.config.pl, root, &nlos).unwrap()
            }
            LayerPlan::Clusters { sizes, scalar } => {
                let blocks: Vec<_> = sizes
                    .iter()
                    .map(|&size| {
                        if *scalar {
                            CouplingMatrix::scaled_identity(size, s.sample_complex(stream)).unwrap()
                        } else {
                            CouplingMatrix::from_fn(size, size, |_, _| s.sample_complex(stream)).unwrap()
                        }
                    })
                    .collect();
                build_cluster_layer(&blocks).unwrap()
            }
        });
        let layers: Vec<_> = if self.config.normalize {
            layers.map(|l| normalize_layer(&l, self.config.n).unwrap()).collect()
        } else {
            layers.collect()
        };
        if self.config.model == ModelKind::Keyhole {
            build_keyhole_layers(layers, self.config.resolved_keyhole_index() - 1).unwrap()
        } else {
            layers
        }
    }

    /// One local area's full channel.
    pub fn sample_realization(&self, stream: &mut RandomStream) -> ChannelRealization {
        let (b, layers) = match &self.fixed {
            Some((b, layers, _)) => (b.clone(), layers.clone()),
            None => {
                let b = self.draw_rays(&self.sample_b, self.config.m, stream);
                (b, self.draw_layers(stream))
            }
        };
        let a = self.draw_rays(&self.sample_a, self.config.n, stream);
        ChannelRealization::new(a, b, layers).expect("planned layers chain")
    }

    /// Local mean power of one realization without materializing the layers.
    /// Consumes the stream exactly like [`Scenario::sample_realization`].
    pub fn sample_power(&self, stream: &mut RandomStream) -> f64 {
        let c = match &self.fixed {
            Some((_, _, c)) => c.clone(),
            None => self.propagate(stream),
        };
        let mut power = 0.0;
        for cn in &c {
            let amp = self.sample_a.sample(stream);
            // The phase of `a` does not enter the power but keeps the
            // stream aligned with `sample_realization`.
            let _ = sample_unit_phasor(stream);
            power += amp * amp * cn.norm_sqr();
        }
        power
    }

    fn propagate(&self, stream: &mut RandomStream) -> Vec<Complex64> {
        let s = &self.sample_s;
        let zero = Complex64::new(0.0, 0.0);
        let mut c: Vec<Complex64> = (0..self.config.m).map(|_| self.sample_b.sample_complex(stream)).collect();
        let mut next = Vec::with_capacity(self.config.n.max(self.config.m));
        let scale = self.layer_scale;
        for plan in &self.plan {
            match plan {
                &LayerPlan::Dense { rows, cols } => {
                    next.clear();
                    next.resize(rows, zero);
                    for &cj in &c[..cols] {
                        for out in next.iter_mut() {
                            *out += s.sample_complex(stream) * scale * cj;
                        }
                    }
                    std::mem::swap(&mut c, &mut next);
                }
                LayerPlan::Scaled { .. } => {
                    let f = s.sample_complex(stream) * scale;
                    c.iter_mut().for_each(|x| *x = f * *x);
                }
                &LayerPlan::Los { n, direct, .. } => {
                    next.clear();
                    next.resize(n, zero);
                    next[0] = Complex64::new(direct, 0.0) * scale * c[0];
                    for &cj in &c[1..n] {
                        for out in next[1..].iter_mut() {
                            *out += s.sample_complex(stream) * scale * cj;
                        }
                    }
                    std::mem::swap(&mut c, &mut next);
                }
                LayerPlan::Clusters { sizes, scalar } => {
                    next.clear();
                    next.resize(c.len(), zero);
                    let mut offset = 0;
                    for &size in sizes {
                        let block = offset..offset + size;
                        if *scalar {
                            let f = s.sample_complex(stream) * scale;
                            for i in block.clone() {
                                next[i] = f * c[i];
                            }
                        } else {
                            for j in block.clone() {
                                let cj = c[j];
                                for out in next[block.clone()].iter_mut() {
                                    *out += s.sample_complex(stream) * scale * cj;
                                }
                            }
                        }
                        offset += size;
                    }
                    std::mem::swap(&mut c, &mut next);
                }
            }
        }
        c
    }
}

pub fn substream(seed: u64, index: u64) -> RandomStream {
    RandomStream::new(seed, index)
}

/// One realization drawn from `stream`.
pub fn sample_realization(
    config: &ScenarioConfig,
    stream: &mut RandomStream,
) -> Result<ChannelRealization, ConfigError> {
    Ok(Scenario::new(config)?.sample_realization(stream))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSampleSet {
    pub samples_db: Vec<f64>,
    pub config: ScenarioConfig,
    pub centered: bool,
    /// Zero-power draws that were re-drawn on an escalated substream.
    pub rejections: u64,
}

impl PowerSampleSet {
    pub fn len(&self) -> usize {
        self.samples_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples_db.is_empty()
    }

    /// Copy with the sample mean removed.
    pub fn centered(&self) -> PowerSampleSet {
        let samples_db = crate::stats::center(&self.samples_db).unwrap_or_default();
        PowerSampleSet { samples_db, centered: true, ..self.clone() }
    }
}

/// Runs `config.q` realizations with the default executor.
pub fn run_experiment(config: &ScenarioConfig) -> Result<PowerSampleSet, ConfigError> {
    let exec = Executor::parallel(None).unwrap_or_else(|_| Executor::sequential());
    run_experiment_with(config, &exec)
}

pub fn run_experiment_with(config: &ScenarioConfig, exec: &Executor) -> Result<PowerSampleSet, ConfigError> {
    let scenario = Scenario::new(config)?;
    let draws = exec.map_indexed(config.q, |q| draw_positive(&scenario, q));
    let mut samples_db = Vec::with_capacity(config.q);
    let mut rejections = 0;
    for (q, draw) in draws.into_iter().enumerate() {
        let (db, attempts) = draw.ok_or(ConfigError::ZeroPower { q, attempts: MAX_ATTEMPTS })?;
        samples_db.push(db);
        rejections += attempts;
    }
    Ok(PowerSampleSet { samples_db, config: config.clone(), centered: false, rejections })
}

/// dB power of realization `q`, re-drawing on substream `q + t·2⁴⁰` after
/// the `t`-th zero.
fn draw_positive(scenario: &Scenario, q: usize) -> Option<(f64, u64)> {
    let seed = scenario.config.seed;
    (0..MAX_ATTEMPTS).find_map(|attempt| {
        let mut stream = substream(seed, q as u64 + (attempt << ATTEMPT_SHIFT));
        to_db(scenario.sample_power(&mut stream)).ok().map(|db| (db, attempt))
    })
}
