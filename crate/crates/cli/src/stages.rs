//! Cached stage computations on single sequences, and artifact codecs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use mmspot::eval::{
    random_control, roc_from_results, spot_check, ConfusionCounts, EvalReport, RegionGroundTruth,
    ReportRow,
};
use mmspot::features::{self, Descriptor, FeatureConfig, FeatureCube, PlaneSelection};
use mmspot::geometry::{
    apply_shifts, estimate_shifts, fit_region_mask, RegionAtlas, RegionMask, Translation,
};
use mmspot::ingest::{self, GroundTruthMovement};
use mmspot::spotting::{analyze, SpotConfig, SpottingResult};
use mmspot::{FrameSequence, SequenceInfo};
use serde::{Deserialize, Serialize};

use crate::config::{AlignConfig, PipelineConfig};
use crate::dataset::SeqInput;
use crate::error::{CliError, CliResult, Stage, StageExt};
use crate::store::{hash_bytes, hash_files, hash_json, read_verified, write_artifact, Cache, Manifest, StageKey};

pub const ALIGN: &str = "align";
pub const FIT_MASK: &str = "fit-mask";
pub const EXTRACT: &str = "extract";
pub const SPOT: &str = "spot";

pub const SHIFTS_FILE: &str = "shifts.json";
pub const MASK_FILE: &str = "mask.json";
pub const FEATURES_FILE: &str = "features.bin";

/// Input hash recorded when alignment is disabled.
pub const NO_SHIFTS: &str = "none";

/// How many stage outputs were computed and how many came from the cache.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub computed: BTreeMap<String, usize>,
    pub cached: BTreeMap<String, usize>,
}

impl Tally {
    pub fn computed_total(&self) -> usize {
        self.computed.values().sum()
    }

    pub fn cached_total(&self) -> usize {
        self.cached.values().sum()
    }
}

/// Runs stages through the cache and counts what happened.
pub struct Runner {
    cache: Cache,
    tally: Mutex<Tally>,
}

impl Runner {
    pub fn new(cache: Cache) -> Self {
        Self {
            cache,
            tally: Mutex::new(Tally::default()),
        }
    }

    pub fn tally(&self) -> Tally {
        self.tally.lock().expect("tally lock").clone()
    }

    pub fn cached(
        &self,
        key: &StageKey,
        compute: impl FnOnce() -> CliResult<Vec<u8>>,
    ) -> CliResult<Vec<u8>> {
        if let Some(bytes) = self.cache.get(key) {
            log::debug!("{} cache hit {}", key.stage, key.digest());
            *self
                .tally
                .lock()
                .expect("tally lock")
                .cached
                .entry(key.stage.clone())
                .or_default() += 1;
            return Ok(bytes);
        }
        let bytes = compute()?;
        self.cache.put(key, &bytes)?;
        *self
            .tally
            .lock()
            .expect("tally lock")
            .computed
            .entry(key.stage.clone())
            .or_default() += 1;
        Ok(bytes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskFile {
    width: usize,
    height: usize,
    region_count: usize,
    labels: Vec<u8>,
}

pub fn mask_to_bytes(mask: &RegionMask) -> Vec<u8> {
    serde_json::to_vec(&MaskFile {
        width: mask.width(),
        height: mask.height(),
        region_count: mask.region_count(),
        labels: mask.labels().to_vec(),
    })
    .expect("mask serializes")
}

pub fn mask_from_bytes(bytes: &[u8]) -> CliResult<RegionMask> {
    let m: MaskFile =
        serde_json::from_slice(bytes).map_err(|e| CliError::Data(format!("mask file: {e}")))?;
    RegionMask::from_labels(m.width, m.height, m.labels, m.region_count).stage(Stage::FitMask, "mask file")
}

pub fn shifts_to_bytes(shifts: &[Translation]) -> Vec<u8> {
    serde_json::to_vec_pretty(shifts).expect("shifts serialize")
}

pub fn shifts_from_bytes(bytes: &[u8]) -> CliResult<Vec<Translation>> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Data(format!("shifts file: {e}")))
}

pub fn cube_to_bytes(cube: &FeatureCube) -> Vec<u8> {
    let mut out = Vec::new();
    cube.write_binary(&mut out).expect("in-memory write");
    out
}

pub fn cube_from_bytes(bytes: &[u8]) -> CliResult<FeatureCube> {
    FeatureCube::read_binary(bytes).stage(Stage::Extract, "feature file")
}

pub fn align_config_hash(cfg: &AlignConfig) -> String {
    hash_json(&(ALIGN, cfg.upsampling))
}

pub fn mask_config_hash(atlas: &RegionAtlas) -> String {
    hash_bytes(atlas.to_json().as_bytes())
}

pub fn extract_config_hash(features: &FeatureConfig, align: &AlignConfig) -> String {
    hash_json(&(EXTRACT, features, align.enabled, align.fill))
}

pub fn spot_config_hash(cfg: &SpotConfig) -> String {
    hash_json(&(SPOT, cfg))
}

/// Planes shown in reports; HOOF has none.
pub fn report_planes(cfg: &FeatureConfig) -> Option<PlaneSelection> {
    (cfg.descriptor != Descriptor::HOOF).then_some(cfg.planes)
}

fn ensure_loaded<'a>(
    slot: &'a mut Option<FrameSequence>,
    seq: &SeqInput,
) -> CliResult<&'a FrameSequence> {
    if slot.is_none() {
        log::info!("loading {} ({} frames)", seq.key, seq.files.len());
        *slot = Some(ingest::load_frames(&seq.files, &seq.info).stage(Stage::Ingest, &seq.key)?);
    }
    Ok(slot.as_ref().expect("just loaded"))
}

/// A sequence after alignment, mask fitting and extraction.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub key: String,
    pub info: SequenceInfo,
    pub features_path: PathBuf,
}

/// Metadata stored in the features manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMeta {
    pub info: SequenceInfo,
    pub frames: usize,
}

/// Align, fit-mask and extract one sequence into `<work>/<key>/`.
pub fn prepare_sequence(
    runner: &Runner,
    cfg: &PipelineConfig,
    atlas: &RegionAtlas,
    seq: &SeqInput,
    work: &Path,
) -> CliResult<Prepared> {
    let dir = work.join(&seq.key);
    let frames_hash = hash_files(&seq.files)?;
    let first = ingest::load_frames(&seq.files[..1.min(seq.files.len())], &seq.info)
        .stage(Stage::Ingest, &seq.key)?;
    let (w, h) = first.dims();
    let mut loaded: Option<FrameSequence> = None;

    let mkey = StageKey::new(FIT_MASK, mask_config_hash(atlas))
        .input("landmarks", crate::store::hash_file(&seq.landmarks)?)
        .input("dims", format!("{w}x{h}"));
    let mask_bytes = runner.cached(&mkey, || {
        let lm = ingest::load_landmarks(&seq.landmarks).stage(Stage::Ingest, seq.landmarks.display())?;
        let mask = fit_region_mask(atlas, &lm, (w, h)).stage(Stage::FitMask, &seq.key)?;
        Ok(mask_to_bytes(&mask))
    })?;
    write_artifact(&dir.join(MASK_FILE), &mask_bytes, &mkey.manifest(&mask_bytes, None))?;

    let shift_bytes = if cfg.align.enabled {
        let akey = StageKey::new(ALIGN, align_config_hash(&cfg.align)).input("frames", frames_hash.clone());
        let bytes = runner.cached(&akey, || {
            let s = ensure_loaded(&mut loaded, seq)?;
            let shifts = estimate_shifts(s, cfg.align.upsampling).stage(Stage::Align, &seq.key)?;
            Ok(shifts_to_bytes(&shifts))
        })?;
        write_artifact(&dir.join(SHIFTS_FILE), &bytes, &akey.manifest(&bytes, None))?;
        Some(bytes)
    } else {
        None
    };

    let ekey = StageKey::new(EXTRACT, extract_config_hash(&cfg.features, &cfg.align))
        .input("frames", frames_hash)
        .input("mask", hash_bytes(&mask_bytes))
        .input("shifts", shift_bytes.as_deref().map_or_else(|| NO_SHIFTS.to_owned(), hash_bytes));
    let cube_bytes = runner.cached(&ekey, || {
        let raw = ensure_loaded(&mut loaded, seq)?;
        let aligned;
        let s = match &shift_bytes {
            Some(b) => {
                aligned = apply_shifts(raw, &shifts_from_bytes(b)?, cfg.align.fill)
                    .stage(Stage::Align, &seq.key)?;
                &aligned
            }
            None => raw,
        };
        let mask = mask_from_bytes(&mask_bytes)?;
        let cube = features::extract(s, &mask, &cfg.features).stage(Stage::Extract, &seq.key)?;
        Ok(cube_to_bytes(&cube))
    })?;
    let meta = FeatureMeta {
        info: seq.info.clone(),
        frames: seq.files.len(),
    };
    let features_path = dir.join(FEATURES_FILE);
    write_artifact(
        &features_path,
        &cube_bytes,
        &ekey.manifest(&cube_bytes, Some(serde_json::to_value(&meta).expect("meta serializes"))),
    )?;
    Ok(Prepared {
        key: seq.key.clone(),
        info: seq.info.clone(),
        features_path,
    })
}

/// A feature file whose manifest chain checked out.
#[derive(Debug, Clone)]
pub struct VerifiedFeatures {
    pub cube: FeatureCube,
    pub hash: String,
    pub meta: FeatureMeta,
}

/// Reads features and checks them, and the mask and shifts recorded as their
/// inputs when those sit next to them, against the manifests.
pub fn load_verified_features(path: &Path) -> CliResult<VerifiedFeatures> {
    let (bytes, manifest) = read_verified(path)?;
    if manifest.stage != EXTRACT {
        return Err(CliError::Data(format!(
            "broken chain: {} was written by stage {}, expected {EXTRACT}",
            path.display(),
            manifest.stage
        )));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    for (name, file) in [("mask", MASK_FILE), ("shifts", SHIFTS_FILE)] {
        let Some(expected) = manifest.inputs.get(name) else {
            continue;
        };
        let upstream = dir.join(file);
        if expected == NO_SHIFTS || !upstream.exists() {
            continue;
        }
        let (_, up) = read_verified(&upstream)?;
        if &up.output != expected {
            return Err(CliError::Data(format!(
                "broken chain: {} was computed from a different {}",
                path.display(),
                upstream.display()
            )));
        }
    }
    let meta: FeatureMeta = manifest
        .meta
        .clone()
        .ok_or_else(|| CliError::Data(format!("{}: manifest lacks sequence metadata", path.display())))
        .and_then(|m| {
            serde_json::from_value(m).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        })?;
    Ok(VerifiedFeatures {
        cube: cube_from_bytes(&bytes)?,
        hash: manifest.output,
        meta,
    })
}

/// Spotting output of one clip: at the configured R and with all regions ranked.
#[derive(Debug, Clone)]
pub struct ClipResult {
    pub result: SpottingResult,
    pub ranked: SpottingResult,
}

/// File stem for a clip id; ids may contain `/`.
pub fn result_stem(clip_id: &str) -> String {
    clip_id.replace(['/', '\\'], "__")
}

pub fn ranked_path(result: &Path) -> PathBuf {
    result.with_extension("ranked.json")
}

/// Spots one clip against its subject's baselines and writes
/// `<out>` and `<out>.ranked.json` with manifests.
pub fn spot_clip(
    movement: &VerifiedFeatures,
    baselines: &[VerifiedFeatures],
    cfg: &SpotConfig,
    out: &Path,
) -> CliResult<ClipResult> {
    let target = &movement.meta.info.clip_id;
    let min_len = cfg.micro_interval().stage(Stage::Spot, target)?.min_contrast_frames();
    let usable: Vec<&VerifiedFeatures> = baselines
        .iter()
        .filter(|b| {
            let ok = b.cube.frames() >= min_len;
            if !ok {
                log::warn!(
                    "baseline {} has {} frames, fewer than the {min_len} spotting needs; dropped",
                    b.meta.info.clip_id,
                    b.cube.frames()
                );
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(CliError::Stage {
            stage: Stage::Spot,
            target: target.clone(),
            source: mmspot::Error::TooShort(format!(
                "no baseline of subject {} has the {min_len} frames spotting needs",
                movement.meta.info.subject_id
            )),
        });
    }
    let cubes: Vec<&FeatureCube> = usable.iter().map(|b| &b.cube).collect();
    let analysis = analyze(&movement.cube, &cubes, &movement.meta.info, cfg).stage(Stage::Spot, target)?;
    let result = analysis.emit(cfg.r).stage(Stage::Spot, target)?;
    let ranked = analysis.emit(analysis.ranking.len()).stage(Stage::Spot, target)?;

    let mut key = StageKey::new(SPOT, spot_config_hash(cfg)).input("features", movement.hash.clone());
    for (i, b) in usable.iter().enumerate() {
        key = key.input(&format!("baseline_{i:02}"), b.hash.clone());
    }
    for (path, res) in [(out.to_path_buf(), &result), (ranked_path(out), &ranked)] {
        let bytes = res.to_json().into_bytes();
        write_artifact(&path, &bytes, &key.manifest(&bytes, None))?;
    }
    Ok(ClipResult { result, ranked })
}

/// Per-clip region ground truth for the given results.
pub fn region_truth(
    atlas: &RegionAtlas,
    results: &[ClipResult],
    movements: &[GroundTruthMovement],
) -> CliResult<Vec<RegionGroundTruth>> {
    let uncovered = atlas.uncovered_aus(movements);
    if !uncovered.is_empty() {
        log::warn!(
            "AUs without an atlas region are ignored: {}",
            uncovered.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        );
    }
    results
        .iter()
        .map(|c| {
            let clip = &c.result.clip_id;
            let mine: Vec<GroundTruthMovement> =
                movements.iter().filter(|m| &m.clip_id == clip).cloned().collect();
            RegionGroundTruth::from_movements(atlas, clip, c.result.frames, &mine)
                .stage(Stage::Evaluate, clip)
        })
        .collect()
}

/// Scores results into a one-row report plus per-clip counts.
pub struct Evaluation {
    pub row: ReportRow,
    pub per_clip: Vec<(String, ConfusionCounts)>,
    pub random_auc: f64,
}

pub fn evaluate_results(
    cfg: &PipelineConfig,
    atlas: &RegionAtlas,
    results: &[ClipResult],
    movements: &[GroundTruthMovement],
    seed: u64,
) -> CliResult<Evaluation> {
    let truth = region_truth(atlas, results, movements)?;
    let per_clip = results
        .iter()
        .zip(&truth)
        .map(|(c, g)| {
            spot_check(&c.result, g)
                .map(|n| (c.result.clip_id.clone(), n))
                .stage(Stage::Evaluate, &c.result.clip_id)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let counts: ConfusionCounts = per_clip.iter().map(|(_, c)| *c).sum();
    let pairs: Vec<(SpottingResult, RegionGroundTruth)> = results
        .iter()
        .zip(&truth)
        .map(|(c, g)| (c.ranked.clone(), g.clone()))
        .collect();
    let roc = roc_from_results(&pairs, &cfg.eval.rs).stage(Stage::Evaluate, "ROC sweep")?;
    let random = random_control(&truth, &cfg.eval.rs, seed).stage(Stage::Evaluate, "random control")?;
    Ok(Evaluation {
        row: ReportRow {
            descriptor: cfg.features.descriptor,
            planes: report_planes(&cfg.features),
            r: cfg.spotting.r,
            counts,
            roc: Some(roc),
            error: None,
        },
        per_clip,
        random_auc: random.auc,
    })
}

/// `clip_id,tp,fp,fn,tn,spurious` rows.
pub fn per_clip_csv(rows: &[(String, ConfusionCounts)]) -> String {
    let mut out = String::from("clip_id,tp,fp,fn,tn,spurious\n");
    for (clip, c) in rows {
        out.push_str(&format!(
            "{clip},{},{},{},{},{}\n",
            c.tp, c.fp, c.fn_, c.tn, c.spurious
        ));
    }
    out
}

/// Writes the report files of one evaluation into `dir`.
pub fn write_evaluation(
    cfg: &PipelineConfig,
    atlas: &RegionAtlas,
    eval: &Evaluation,
    seed: u64,
    dir: &Path,
) -> CliResult<EvalReport> {
    let mut config = cfg.summary(atlas);
    config.push((
        "random control AUC".to_owned(),
        format!("{:.4} (seed {seed})", eval.random_auc),
    ));
    let report = EvalReport::new(config, eval.per_clip.len(), vec![eval.row.clone()]);
    report.write(dir).stage(Stage::Report, dir.display())?;
    crate::store::write_atomic(&dir.join("clips.csv"), per_clip_csv(&eval.per_clip).as_bytes())?;
    Ok(report)
}

/// Reads a spotting result and checks it against its manifest.
pub fn load_verified_result(path: &Path) -> CliResult<(SpottingResult, Manifest)> {
    let (bytes, manifest) = read_verified(path)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let res = SpottingResult::from_json(&text).stage(Stage::Evaluate, path.display())?;
    Ok((res, manifest))
}
