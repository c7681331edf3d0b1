//! `run` and `sweep`: ingest, align, fit-mask, extract, spot, evaluate.
//!
//! Output layout of a run:
//!
//! ```text
//! out/work/<subject>/<sequence>/{mask.json, shifts.json, features.bin} (+ manifests)
//! out/results/<clip>.json, <clip>.ranked.json (+ manifests)
//! out/report/{report.txt, metrics.csv, clips.csv, roc_*.csv}
//! ```

use std::path::{Path, PathBuf};

use log::{error, info};
use mmspot::eval::{EvalReport, ReportRow};
use mmspot::features::{Descriptor, PlaneSelection};
use mmspot::geometry::RegionAtlas;
use rayon::prelude::*;

use crate::config::{PipelineConfig, SweepGrid};
use crate::dataset::{self, Dataset};
use crate::error::{CliError, CliResult, Stage, StageExt};
use crate::stages::{
    evaluate_results, load_verified_features, prepare_sequence, result_stem, write_evaluation,
    ClipResult, Evaluation, Runner, Tally, VerifiedFeatures, FEATURES_FILE,
};
use crate::store::Cache;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Seed of the random-ranking control.
    pub seed: u64,
    /// Shared stage cache; `<output>/cache` when unset.
    pub cache_dir: Option<PathBuf>,
}

impl RunOptions {
    fn cache(&self) -> Cache {
        Cache::new(
            self.cache_dir
                .clone()
                .unwrap_or_else(|| self.output.join("cache")),
        )
    }
}

pub struct RunSummary {
    pub clips: usize,
    pub tally: Tally,
    pub report: EvalReport,
    pub evaluation: Evaluation,
    pub results: Vec<ClipResult>,
}

fn load_inputs(cfg: &PipelineConfig, input: &Path) -> CliResult<(RegionAtlas, Dataset)> {
    cfg.validate()?;
    let atlas = cfg.atlas()?;
    atlas.validate().stage(Stage::Config, "region atlas")?;
    let ds = dataset::load(input, &cfg.dataset)?;
    Ok((atlas, ds))
}

pub fn run(cfg: &PipelineConfig, opts: &RunOptions) -> CliResult<RunSummary> {
    let (atlas, ds) = load_inputs(cfg, &opts.input)?;
    let runner = Runner::new(opts.cache());
    run_dataset(cfg, &atlas, &ds, &runner, &opts.output, opts.seed)
}

/// Runs every stage on an already loaded dataset.
pub fn run_dataset(
    cfg: &PipelineConfig,
    atlas: &RegionAtlas,
    ds: &Dataset,
    runner: &Runner,
    out: &Path,
    seed: u64,
) -> CliResult<RunSummary> {
    let before = runner.tally();
    let work = out.join("work");
    let seqs: Vec<_> = ds
        .subjects
        .iter()
        .flat_map(|s| s.clips.iter().chain(&s.baselines))
        .collect();
    info!("preparing {} sequences", seqs.len());
    seqs.par_iter()
        .map(|s| prepare_sequence(runner, cfg, atlas, s, &work).map(drop))
        .collect::<CliResult<()>>()?;

    let results_dir = out.join("results");
    let mut results = Vec::new();
    for subject in &ds.subjects {
        let baselines: Vec<VerifiedFeatures> = subject
            .baselines
            .iter()
            .map(|b| load_verified_features(&work.join(&b.key).join(FEATURES_FILE)))
            .collect::<CliResult<_>>()?;
        let spotted: Vec<ClipResult> = subject
            .clips
            .par_iter()
            .map(|c| {
                let movement = load_verified_features(&work.join(&c.key).join(FEATURES_FILE))?;
                let path = results_dir.join(format!("{}.json", result_stem(&c.info.clip_id)));
                crate::stages::spot_clip(&movement, &baselines, &cfg.spotting, &path)
            })
            .collect::<CliResult<_>>()?;
        results.extend(spotted);
    }

    let evaluation = evaluate_results(cfg, atlas, &results, &ds.movements, seed)?;
    let report = write_evaluation(cfg, atlas, &evaluation, seed, &out.join("report"))?;
    let after = runner.tally();
    let mut tally = Tally::default();
    for (stage, n) in &after.computed {
        let d = n - before.computed.get(stage).copied().unwrap_or(0);
        if d > 0 {
            tally.computed.insert(stage.clone(), d);
        }
    }
    for (stage, n) in &after.cached {
        let d = n - before.cached.get(stage).copied().unwrap_or(0);
        if d > 0 {
            tally.cached.insert(stage.clone(), d);
        }
    }
    Ok(RunSummary {
        clips: results.len(),
        tally,
        report,
        evaluation,
        results,
    })
}

/// One (descriptor, planes) cell of a sweep. HOOF has no planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub descriptor: Descriptor,
    pub planes: Option<PlaneSelection>,
}

impl Cell {
    pub fn label(&self) -> String {
        match self.planes {
            Some(p) => format!("{}_{}", self.descriptor, p),
            None => self.descriptor.to_string(),
        }
    }
}

/// Cartesian product of the grid, HOOF collapsed to a single cell.
pub fn sweep_cells(grid: &SweepGrid) -> CliResult<Vec<Cell>> {
    if grid.descriptors.is_empty() {
        return Err(CliError::Config("sweep grid is empty: no descriptors".into()));
    }
    let mut cells: Vec<Cell> = Vec::new();
    for &descriptor in &grid.descriptors {
        if descriptor == Descriptor::HOOF {
            cells.push(Cell {
                descriptor,
                planes: None,
            });
            continue;
        }
        if grid.planes.is_empty() {
            return Err(CliError::Config(format!(
                "sweep grid is empty: no planes for {descriptor}"
            )));
        }
        cells.extend(grid.planes.iter().map(|&p| Cell {
            descriptor,
            planes: Some(p),
        }));
    }
    let mut seen = Vec::new();
    cells.retain(|c| {
        let new = !seen.contains(c);
        seen.push(*c);
        new
    });
    Ok(cells)
}

pub struct SweepSummary {
    pub report: EvalReport,
    pub cells: Vec<(Cell, CliResult<RunSummary>)>,
}

impl SweepSummary {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|(_, r)| r.is_err()).count()
    }
}

/// Runs every cell into `<output>/cells/<label>/` and writes the merged
/// comparison table into `<output>`. Failed cells are recorded, not fatal.
pub fn sweep(cfg: &PipelineConfig, opts: &RunOptions) -> CliResult<SweepSummary> {
    let cells = sweep_cells(&cfg.sweep)?;
    let (atlas, ds) = load_inputs(cfg, &opts.input)?;
    let runner = Runner::new(opts.cache());
    let rs = if cfg.sweep.rs.is_empty() {
        cfg.eval.rs.clone()
    } else {
        cfg.sweep.rs.clone()
    };

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    let mut random_auc = None;
    for cell in cells {
        let mut cell_cfg = cfg.clone();
        cell_cfg.features.descriptor = cell.descriptor;
        cell_cfg.features.planes = cell.planes.unwrap_or(PlaneSelection::XY);
        cell_cfg.eval.rs = rs.clone();
        let dir = opts.output.join("cells").join(cell.label());
        info!("sweep cell {}", cell.label());
        let outcome = run_dataset(&cell_cfg, &atlas, &ds, &runner, &dir, opts.seed);
        match &outcome {
            Ok(summary) => {
                rows.push(summary.evaluation.row.clone());
                random_auc.get_or_insert(summary.evaluation.random_auc);
            }
            Err(e) => {
                error!("sweep cell {} failed: {e}", cell.label());
                rows.push(ReportRow {
                    descriptor: cell.descriptor,
                    planes: cell.planes,
                    r: cfg.spotting.r,
                    counts: Default::default(),
                    roc: None,
                    error: Some(e.to_string()),
                });
            }
        }
        outcomes.push((cell, outcome));
    }

    let mut config: Vec<(String, String)> = cfg
        .summary(&atlas)
        .into_iter()
        .filter(|(k, _)| k != "R sweep")
        .collect();
    config.push((
        "R sweep".to_owned(),
        rs.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
    ));
    if let Some(auc) = random_auc {
        config.push((
            "random control AUC".to_owned(),
            format!("{auc:.4} (seed {})", opts.seed),
        ));
    }
    let clips = ds.clips().count();
    let report = EvalReport::new(config, clips, rows);
    report
        .write(&opts.output)
        .stage(Stage::Report, opts.output.display())?;
    if outcomes.iter().all(|(_, r)| r.is_err()) {
        return Err(CliError::Data("every sweep cell failed".into()));
    }
    Ok(SweepSummary {
        report,
        cells: outcomes,
    })
}
