//! Standalone stage subcommands and `synth`.

use std::path::{Path, PathBuf};

use mmspot::eval::EvalReport;
use mmspot::geometry::{apply_shifts, estimate_shifts, fit_region_mask};
use mmspot::ingest::{self, list_frames, GroundTruthMovement, MANIFEST_FILE};
use mmspot::synth::{CorpusParams, SynthDataset};
use mmspot::features;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, Stage, StageExt};
use crate::stages::{
    align_config_hash, cube_to_bytes, evaluate_results, extract_config_hash, load_verified_features,
    load_verified_result, mask_config_hash, mask_from_bytes, mask_to_bytes, ranked_path,
    shifts_from_bytes, shifts_to_bytes, spot_clip, write_evaluation, ClipResult, FeatureMeta,
    ALIGN, EXTRACT, FIT_MASK, NO_SHIFTS,
};
use crate::store::{hash_bytes, hash_file, hash_files, read_verified, write_artifact, StageKey, MANIFEST_SUFFIX};

/// Frames and manifest of a sequence folder, plus the hash of its frames.
fn open_sequence(dir: &Path) -> CliResult<(mmspot::FrameSequence, String)> {
    let files = list_frames(dir).stage(Stage::Ingest, dir.display())?;
    let info = ingest::read_manifest(&dir.join(MANIFEST_FILE)).stage(Stage::Ingest, dir.display())?;
    let seq = ingest::load_frames(&files, &info).stage(Stage::Ingest, dir.display())?;
    Ok((seq, hash_files(&files)?))
}

/// `mmspot align`: shifts of every frame relative to frame 0.
pub fn align(cfg: &PipelineConfig, seq_dir: &Path, out: &Path, aligned_out: Option<&Path>) -> CliResult<()> {
    let (seq, frames_hash) = open_sequence(seq_dir)?;
    let key = StageKey::new(ALIGN, align_config_hash(&cfg.align)).input("frames", frames_hash);
    let shifts = estimate_shifts(&seq, cfg.align.upsampling).stage(Stage::Align, seq_dir.display())?;
    let bytes = shifts_to_bytes(&shifts);
    write_artifact(out, &bytes, &key.manifest(&bytes, None))?;
    if let Some(dir) = aligned_out {
        let aligned = apply_shifts(&seq, &shifts, cfg.align.fill).stage(Stage::Align, seq_dir.display())?;
        ingest::write_sequence(dir, &aligned).stage(Stage::Align, dir.display())?;
    }
    Ok(())
}

/// `mmspot fit-mask`: region mask for a landmark file, plus a PNG preview
/// next to the output.
pub fn fit_mask(cfg: &PipelineConfig, landmarks: &Path, dims: (usize, usize), out: &Path) -> CliResult<()> {
    let atlas = cfg.atlas()?;
    let (w, h) = dims;
    let lm = ingest::load_landmarks(landmarks).stage(Stage::Ingest, landmarks.display())?;
    let mask = fit_region_mask(&atlas, &lm, dims).stage(Stage::FitMask, landmarks.display())?;
    let key = StageKey::new(FIT_MASK, mask_config_hash(&atlas))
        .input("landmarks", hash_file(landmarks)?)
        .input("dims", format!("{w}x{h}"));
    let bytes = mask_to_bytes(&mask);
    write_artifact(out, &bytes, &key.manifest(&bytes, None))?;
    ingest::write_png(&out.with_extension("png"), &mask.to_frame()).stage(Stage::FitMask, out.display())
}

/// Width and height of the first frame in a folder.
pub fn frame_dims(dir: &Path) -> CliResult<(usize, usize)> {
    let files = list_frames(dir).stage(Stage::Ingest, dir.display())?;
    let info = mmspot::SequenceInfo {
        fps: 1.0,
        subject_id: String::new(),
        clip_id: String::new(),
        neutral_pad: 0,
    };
    Ok(ingest::load_frames(&files[..1], &info)
        .stage(Stage::Ingest, dir.display())?
        .dims())
}

/// `mmspot extract`: features of a sequence folder. The mask and shifts must
/// carry intact manifests, and the shifts must belong to these frames.
pub fn extract(
    cfg: &PipelineConfig,
    seq_dir: &Path,
    mask_path: &Path,
    shifts_path: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let (mask_bytes, _) = read_verified(mask_path)?;
    let shifts = shifts_path.map(read_verified).transpose()?;
    let (seq, frames_hash) = open_sequence(seq_dir)?;
    if let Some((_, m)) = &shifts {
        if m.inputs.get("frames") != Some(&frames_hash) {
            return Err(CliError::Data(format!(
                "broken chain: {} was estimated on different frames than {}",
                shifts_path.unwrap_or(Path::new("")).display(),
                seq_dir.display()
            )));
        }
    }
    let mut align = cfg.align.clone();
    align.enabled = shifts.is_some();
    let key = StageKey::new(EXTRACT, extract_config_hash(&cfg.features, &align))
        .input("frames", frames_hash)
        .input("mask", hash_bytes(&mask_bytes))
        .input(
            "shifts",
            shifts.as_ref().map_or_else(|| NO_SHIFTS.to_owned(), |(_, m)| m.output.clone()),
        );
    let seq = match &shifts {
        Some((b, _)) => apply_shifts(&seq, &shifts_from_bytes(b)?, cfg.align.fill)
            .stage(Stage::Align, seq_dir.display())?,
        None => seq,
    };
    let mask = mask_from_bytes(&mask_bytes)?;
    let cube = features::extract(&seq, &mask, &cfg.features).stage(Stage::Extract, seq_dir.display())?;
    let bytes = cube_to_bytes(&cube);
    let meta = FeatureMeta {
        info: seq.info().clone(),
        frames: seq.len(),
    };
    write_artifact(
        out,
        &bytes,
        &key.manifest(&bytes, Some(serde_json::to_value(&meta).expect("meta serializes"))),
    )
}

/// `mmspot spot`: detections for one clip's features against baselines.
pub fn spot(cfg: &PipelineConfig, features: &Path, baselines: &[PathBuf], out: &Path) -> CliResult<ClipResult> {
    if baselines.is_empty() {
        return Err(CliError::Config("spot needs at least one --baseline".into()));
    }
    let movement = load_verified_features(features)?;
    let base = baselines
        .iter()
        .map(|p| load_verified_features(p))
        .collect::<CliResult<Vec<_>>>()?;
    spot_clip(&movement, &base, &cfg.spotting, out)
}

fn is_result_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".json") && !name.ends_with(".ranked.json") && !name.ends_with(MANIFEST_SUFFIX)
}

/// `mmspot evaluate`: scores a folder of results written by `spot` or `run`.
pub fn evaluate(
    cfg: &PipelineConfig,
    results_dir: &Path,
    ground_truth: &Path,
    out: &Path,
    seed: u64,
) -> CliResult<EvalReport> {
    let atlas = cfg.atlas()?;
    let movements: Vec<GroundTruthMovement> =
        ingest::load_ground_truth(ground_truth).stage(Stage::Ingest, ground_truth.display())?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(results_dir)
        .map_err(|e| CliError::Data(format!("cannot list {}: {e}", results_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_result_file(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("no results in {}", results_dir.display())));
    }
    let results = paths
        .iter()
        .map(|p| {
            let (result, _) = load_verified_result(p)?;
            let (ranked, _) = load_verified_result(&ranked_path(p))?;
            Ok(ClipResult { result, ranked })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut cfg = cfg.clone();
    if let Some(first) = results.first() {
        cfg.spotting.r = first.result.r;
    }
    let eval = evaluate_results(&cfg, &atlas, &results, &movements, seed)?;
    write_evaluation(&cfg, &atlas, &eval, seed, out)
}

/// `mmspot synth`: writes a dataset from a spec file, or the default
/// corpus when no spec is given. `seed` overrides the spec's seed.
pub fn synth(
    cfg: &PipelineConfig,
    spec: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    drift: Option<f64>,
) -> CliResult<SynthDataset> {
    let atlas = cfg.atlas()?;
    let mut ds = match spec {
        Some(p) => SynthDataset::load(p).stage(Stage::Synth, p.display())?,
        None => SynthDataset::corpus(
            &CorpusParams {
                drift: [drift.unwrap_or(0.0), 0.0],
                ..CorpusParams::default()
            },
            seed.unwrap_or(0),
        ),
    };
    if let Some(s) = seed {
        ds.seed = s;
    }
    if let (Some(d), Some(_)) = (drift, spec) {
        ds.drift = [d, 0.0];
    }
    ds.write(out, &atlas).stage(Stage::Synth, out.display())?;
    Ok(ds)
}
