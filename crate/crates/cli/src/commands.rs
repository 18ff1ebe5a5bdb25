use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sumprod_core::experiments::{
    self, calibrate_ray_sweep, cdf_export, evaluate_cell, CdfExport, SweepGrid, SweepRow, SweptParam,
    DEFAULT_LAYER_COUNTS, DEFAULT_RAY_COUNTS, RAY_SWEEP_REFERENCE,
};
use sumprod_core::{DistSpec, Executor, LosRoot, ModelKind, ScenarioConfig};

use crate::args::{Command, CommonArgs, OutputFormat, ReproduceArgs, RunArgs, ScenarioArgs, SweepArgs, Target};
use crate::config::Settings;
use crate::error::CliError;
use crate::output::{self, CalibrationPlan, OutputSet, RunManifest};

/// Realizations per cell of the calibration search unless overridden.
pub const DEFAULT_CALIBRATION_Q: usize = 1_000;
/// Layer count of the `fig4` single-curve export.
pub const FIG4_LAYERS: usize = 40;
/// Fixed layer count of the ray sweep reproduction.
pub const TABLE3_LAYERS: usize = 5;

/// JSON form of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub row: SweepRow,
}

/// Runs a parsed command and returns the paths it wrote.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Reproduce(args) => reproduce(args),
    }
}

fn overlay_common(s: &mut Settings, c: &CommonArgs) {
    s.set("seed", c.seed);
    s.set("q", c.q);
    s.set("out", c.out.map(|f| f.extension()));
    s.set("out-dir", c.out_dir.as_ref().map(|p| p.display().to_string()));
    s.set("threads", c.threads);
}

fn overlay_scenario(s: &mut Settings, a: &ScenarioArgs) {
    s.set("model", a.model.as_ref());
    s.set("n", a.n.as_ref());
    s.set("m", a.m.as_ref());
    s.set("k", a.k.as_ref());
    if !a.dist.is_empty() {
        s.set("dist", Some(a.dist.join(";")));
    }
    s.set("dist-a", a.dist_a.as_ref());
    s.set("dist-b", a.dist_b.as_ref());
    s.set("dist-s", a.dist_s.as_ref());
    s.set_flag("normalize", a.normalize);
    s.set("pl", a.pl.as_ref());
    s.set("los-root", a.los_root.as_ref());
    s.set("keyhole-index", a.keyhole_index.as_ref());
    s.set("clusters", a.clusters.as_ref());
    s.set_flag("cluster-scalar", a.cluster_scalar);
}

fn load(common: &CommonArgs) -> Result<Settings, CliError> {
    let mut s = Settings::load(common.config.as_deref())?;
    overlay_common(&mut s, common);
    Ok(s)
}

struct Context {
    exec: Executor,
    format: OutputFormat,
    out_dir: PathBuf,
}

fn context(s: &Settings) -> Result<Context, CliError> {
    let threads: Option<usize> = s.parse_value("threads")?;
    let format = match s.get("out").map(str::trim) {
        None | Some("csv") => OutputFormat::Csv,
        Some("json") => OutputFormat::Json,
        Some(other) => return Err(CliError::Validation(format!("invalid out `{other}`: expected csv or json"))),
    };
    Ok(Context { exec: Executor::parallel(threads)?, format, out_dir: output::resolve_out_dir(s.get("out-dir")) })
}

/// Applies seed, Q and the scenario keys on top of `base`.
fn apply_scenario(s: &Settings, mut cfg: ScenarioConfig) -> Result<ScenarioConfig, CliError> {
    if let Some(seed) = s.parse_value("seed")? {
        cfg.seed = seed;
    }
    if let Some(q) = s.parse_value("q")? {
        cfg.q = q;
    }
    if let Some(model) = s.parse_value::<ModelKind>("model")? {
        cfg.model = model;
    }
    if let Some(n) = s.parse_value("n")? {
        cfg.n = n;
        cfg.m = n;
    }
    if let Some(m) = s.parse_value("m")? {
        cfg.m = m;
    }
    if let Some(k) = s.parse_value("k")? {
        cfg.k = k;
    }
    if let Some(dists) = s.parse_list::<DistSpec>("dist", ';')? {
        cfg = cfg.with_dist(dists[0]);
    }
    if let Some(d) = s.parse_value("dist-a")? {
        cfg.dist_a = d;
    }
    if let Some(d) = s.parse_value("dist-b")? {
        cfg.dist_b = d;
    }
    if let Some(d) = s.parse_value("dist-s")? {
        cfg.dist_s = d;
    }
    cfg.normalize |= s.parse_bool("normalize")?;
    if let Some(pl) = s.parse_value("pl")? {
        cfg.pl = pl;
    }
    if let Some(root) = s.parse_value::<LosRoot>("los-root")? {
        cfg.los_root = root;
    }
    if let Some(index) = s.parse_value("keyhole-index")? {
        cfg.keyhole_index = Some(index);
    }
    if let Some(sizes) = s.parse_list("clusters", ',')? {
        cfg.clusters = sizes;
    }
    cfg.cluster_scalar |= s.parse_bool("cluster-scalar")?;
    Ok(cfg)
}

/// Rejects keys that the command would otherwise silently ignore.
fn reject_keys(s: &Settings, command: &str, keys: &[&str]) -> Result<(), CliError> {
    match keys.iter().find(|k| s.get(k).is_some()) {
        Some(k) => Err(CliError::Usage(format!("`{k}` does not apply to {command}"))),
        None => Ok(()),
    }
}

fn default_scenario() -> ScenarioConfig {
    ScenarioConfig::new(ModelKind::SumProd, 10, 5, DistSpec::uniform())
}

fn row_from_cdf(export: &CdfExport, param: SweptParam) -> SweepRow {
    let cfg = &export.config;
    SweepRow {
        model: cfg.model,
        dist: cfg.dist_s,
        param_name: param,
        param_value: match param {
            SweptParam::K => cfg.k,
            SweptParam::N => cfg.n,
        },
        std_db: export.ks.fit.std_db,
        ks: export.ks.statistic,
        n: export.ks.n,
        seed: cfg.seed,
    }
}

fn rows_file(stem: &str, format: OutputFormat, rows: &[SweepRow]) -> (String, Vec<u8>) {
    let bytes = match format {
        OutputFormat::Csv => output::rows_csv(rows),
        OutputFormat::Json => output::json_bytes(&rows),
    };
    (format!("{stem}.{}", format.extension()), bytes)
}

fn run(args: &RunArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut s = load(&args.common)?;
    overlay_scenario(&mut s, &args.scenario);
    s.set_flag("cdf", args.cdf);
    reject_keys(&s, "run", &["vary", "values", "models", "ks", "calibrate", "calibration-q"])?;
    let ctx = context(&s)?;
    if s.parse_list::<DistSpec>("dist", ';')?.is_some_and(|d| d.len() > 1) {
        return Err(CliError::Usage("run takes a single --dist; use sweep for a grid".into()));
    }
    let cfg = apply_scenario(&s, default_scenario())?;
    cfg.validate()?;

    let row = evaluate_cell(&cfg, SweptParam::K, &ctx.exec)?;
    let mut out = OutputSet::new(ctx.out_dir.clone());
    match ctx.format {
        OutputFormat::Csv => out.add("run.csv".into(), output::rows_csv(std::slice::from_ref(&row))),
        OutputFormat::Json => out.add("run.json".into(), output::json_bytes(&RunReport { config: cfg.clone(), row })),
    }
    if s.parse_bool("cdf")? {
        let export = cdf_export(&cfg, &ctx.exec)?;
        out.add(output::cdf_file_name(&cfg), output::cdf_csv(&export));
    }
    out.write("run", RunManifest::new("run".into(), cfg, ctx.format))
}

fn sweep(args: &SweepArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut s = load(&args.common)?;
    overlay_scenario(&mut s, &args.scenario);
    s.set("vary", args.vary.as_ref());
    s.set("values", args.values.as_ref());
    s.set("models", args.models.as_ref());
    reject_keys(&s, "sweep", &["dist-a", "dist-b", "dist-s", "cdf", "ks", "calibrate", "calibration-q"])?;
    let ctx = context(&s)?;

    let param = s.parse_value::<SweptParam>("vary")?.unwrap_or(SweptParam::K);
    let values = s.parse_list("values", ',')?.unwrap_or_else(|| match param {
        SweptParam::K => DEFAULT_LAYER_COUNTS.to_vec(),
        SweptParam::N => DEFAULT_RAY_COUNTS.to_vec(),
    });
    let models = s.parse_list("models", ',')?.unwrap_or_else(|| vec![ModelKind::SumProd, ModelKind::Prod]);
    let dists = s.parse_list("dist", ';')?.unwrap_or_else(experiments::default_dists);
    let base = apply_scenario(&s, default_scenario())?;
    let grid = SweepGrid { param, values, models, dists };
    let report = experiments::sweep(&base, grid.clone(), &ctx.exec)?;

    let mut out = OutputSet::new(ctx.out_dir);
    match ctx.format {
        OutputFormat::Csv => out.add("sweep.csv".into(), output::rows_csv(&report.rows)),
        OutputFormat::Json => out.add("sweep.json".into(), output::json_bytes(&report)),
    }
    let mut manifest = RunManifest::new("sweep".into(), base, ctx.format);
    manifest.grid = Some(grid);
    out.write("sweep", manifest)
}

fn reproduce(args: &ReproduceArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut s = load(&args.common)?;
    s.set("ks", args.ks.as_ref());
    s.set("dist-a", args.dist_a.as_ref());
    s.set("dist-b", args.dist_b.as_ref());
    s.set("dist-s", args.dist_s.as_ref());
    s.set_flag("calibrate", args.calibrate);
    s.set("calibration-q", args.calibration_q);
    let target = args.target;
    let scenario_keys = [
        "model", "n", "m", "k", "dist", "normalize", "pl", "los-root", "keyhole-index", "clusters",
        "cluster-scalar", "cdf", "vary", "values", "models",
    ];
    let command = format!("reproduce {}", target.name());
    reject_keys(&s, &command, &scenario_keys)?;
    if target != Target::Fig4 {
        reject_keys(&s, &command, &["dist-a", "dist-b", "dist-s"])?;
    }
    if !matches!(target, Target::Table3 | Target::Fig8) {
        reject_keys(&s, &command, &["calibrate", "calibration-q"])?;
    }
    let ctx = context(&s)?;
    let seed = s.parse_value("seed")?.unwrap_or(0);
    let ks: Option<Vec<usize>> = s.parse_list("ks", ',')?;
    let single_k = |default: usize| -> Result<usize, CliError> {
        match ks.as_deref() {
            None => Ok(default),
            Some([k]) => Ok(*k),
            Some(_) => Err(CliError::Usage(format!("{command} takes a single --ks value"))),
        }
    };
    let stem = target.name();
    let mut out = OutputSet::new(ctx.out_dir.clone());

    let manifest = match target {
        Target::Table2 | Target::Fig6 | Target::Fig9 => {
            let (base, grid) = if target == Target::Fig9 {
                let base = apply_scenario(&s, experiments::distribution_sweep_base(seed))?;
                let values = ks.clone().unwrap_or_else(|| DEFAULT_LAYER_COUNTS.to_vec());
                (base, SweepGrid {
                    param: SweptParam::K,
                    values,
                    models: vec![ModelKind::SumProd],
                    dists: experiments::distribution_grid(),
                })
            } else {
                let base = apply_scenario(&s, experiments::layer_sweep_base(seed))?;
                let values = ks.clone().unwrap_or_else(|| DEFAULT_LAYER_COUNTS.to_vec());
                (base, SweepGrid {
                    param: SweptParam::K,
                    values,
                    models: vec![ModelKind::SumProd, ModelKind::Prod],
                    dists: experiments::default_dists(),
                })
            };
            let report = experiments::sweep(&base, grid.clone(), &ctx.exec)?;
            let (name, bytes) = match ctx.format {
                OutputFormat::Csv => rows_file(stem, ctx.format, &report.rows),
                OutputFormat::Json => (format!("{stem}.json"), output::json_bytes(&report)),
            };
            out.add(name, bytes);
            let mut m = RunManifest::new(command.clone(), base, ctx.format);
            m.grid = Some(grid);
            m
        }
        Target::Table3 | Target::Fig8 => {
            let mut base = apply_scenario(&s, experiments::ray_sweep_base(seed))?;
            base.k = single_k(TABLE3_LAYERS)?;
            let grid = SweepGrid {
                param: SweptParam::N,
                values: DEFAULT_RAY_COUNTS.to_vec(),
                models: vec![ModelKind::SumProd, ModelKind::Prod],
                dists: experiments::default_dists(),
            };
            let mut m = RunManifest::new(command.clone(), base.clone(), ctx.format);
            if s.parse_bool("calibrate")? {
                let q = s.parse_value("calibration-q")?.unwrap_or(DEFAULT_CALIBRATION_Q);
                let plan = CalibrationPlan { candidates: DEFAULT_LAYER_COUNTS.to_vec(), ray_counts: grid.values.clone(), q };
                let cal = calibrate_ray_sweep(&base, &plan.candidates, &plan.ray_counts, &RAY_SWEEP_REFERENCE, q, &ctx.exec)?;
                let bytes = match ctx.format {
                    OutputFormat::Csv => output::calibration_csv(&cal),
                    OutputFormat::Json => output::json_bytes(&cal),
                };
                out.add(format!("{stem}_calibration.{}", ctx.format.extension()), bytes);
                m.calibration = Some(plan);
            }
            let report = experiments::sweep(&base, grid.clone(), &ctx.exec)?;
            let (name, bytes) = match ctx.format {
                OutputFormat::Csv => rows_file(stem, ctx.format, &report.rows),
                OutputFormat::Json => (format!("{stem}.json"), output::json_bytes(&report)),
            };
            // The table itself goes first in the manifest's output list.
            out.insert_front(name, bytes);
            m.grid = Some(grid);
            m
        }
        Target::Fig4 => {
            let mut base = default_scenario().with_seed(seed);
            base.k = single_k(FIG4_LAYERS)?;
            base.dist_s = DistSpec::r_inv(10.0).expect("valid scale");
            let cfg = apply_scenario(&s, base)?;
            cfg.validate()?;
            let export = cdf_export(&cfg, &ctx.exec)?;
            let (name, bytes) = rows_file(stem, ctx.format, &[row_from_cdf(&export, SweptParam::K)]);
            out.add(name, bytes);
            out.add(output::cdf_file_name(&cfg), output::cdf_csv(&export));
            RunManifest::new(command.clone(), cfg, ctx.format)
        }
        Target::Fig7 => {
            let base = apply_scenario(&s, experiments::layer_sweep_base(seed))?;
            let grid = SweepGrid {
                param: SweptParam::K,
                values: vec![single_k(TABLE3_LAYERS)?],
                models: vec![ModelKind::SumProd, ModelKind::Prod],
                dists: experiments::default_dists(),
            };
            let exports = grid
                .cells(&base)?
                .iter()
                .map(|cfg| cdf_export(cfg, &ctx.exec))
                .collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<SweepRow> = exports.iter().map(|e| row_from_cdf(e, SweptParam::K)).collect();
            let (name, bytes) = rows_file(stem, ctx.format, &rows);
            out.add(name, bytes);
            for e in &exports {
                out.add(output::cdf_file_name(&e.config), output::cdf_csv(e));
            }
            let mut m = RunManifest::new(command.clone(), base, ctx.format);
            m.grid = Some(grid);
            m
        }
    };
    out.write(stem, manifest)
}
