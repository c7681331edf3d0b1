//! Maps on-disk dataset layouts onto clip and baseline frame lists.
//!
//! All layouts keep the ground truth in `<root>/ground_truth.csv`. Frame
//! numbers in the sheet are frame indices for the synth layout and the
//! numbers in the frame file names for the SAMM and CASME II layouts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use mmspot::ingest::{
    self, frame_number, list_frames, GroundTruthMovement, BASELINE_PREFIX, GROUND_TRUTH_FILE,
    LANDMARKS_FILE, MANIFEST_FILE,
};
use mmspot::SequenceInfo;

use crate::config::{Adapter, DatasetConfig};
use crate::error::{CliError, CliResult, Stage, StageExt};

pub const DEFAULT_FPS: f64 = 200.0;
pub const SAMM_PAD: usize = 200;
pub const CASME2_PAD: usize = 50;

/// One frame sequence to process.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqInput {
    /// Relative work path, `<subject>/<sequence>`.
    pub key: String,
    pub files: Vec<PathBuf>,
    pub info: SequenceInfo,
    pub landmarks: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectInput {
    pub subject_id: String,
    pub clips: Vec<SeqInput>,
    pub baselines: Vec<SeqInput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<SubjectInput>,
    /// Ground truth with frame numbers relative to each clip's first frame.
    pub movements: Vec<GroundTruthMovement>,
}

impl Dataset {
    pub fn clips(&self) -> impl Iterator<Item = &SeqInput> {
        self.subjects.iter().flat_map(|s| s.clips.iter())
    }

    pub fn movements_for(&self, clip_id: &str) -> Vec<GroundTruthMovement> {
        self.movements
            .iter()
            .filter(|m| m.clip_id == clip_id)
            .cloned()
            .collect()
    }
}

fn data_err(msg: String) -> CliError {
    CliError::Data(msg)
}

fn subdirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries =
        fs::read_dir(dir).map_err(|e| data_err(format!("cannot list {}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

fn dir_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn is_baseline_dir(name: &str) -> bool {
    name.starts_with(BASELINE_PREFIX) || name.starts_with("neutral")
}

/// `<dir>/landmarks.json`, else `<root>/landmarks/<clip_id>.json`.
fn find_landmarks(root: &Path, dir: &Path, clip_id: &str) -> Option<PathBuf> {
    let local = dir.join(LANDMARKS_FILE);
    if local.is_file() {
        return Some(local);
    }
    let shared = root.join("landmarks").join(format!("{clip_id}.json"));
    shared.is_file().then_some(shared)
}

fn sequence_info(dir: &Path, cfg: &DatasetConfig, subject_id: &str, clip_id: &str) -> CliResult<SequenceInfo> {
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.is_file() {
        return ingest::read_manifest(&manifest).stage(Stage::Ingest, dir.display());
    }
    Ok(SequenceInfo {
        fps: cfg.fps.unwrap_or(DEFAULT_FPS),
        subject_id: subject_id.to_owned(),
        clip_id: clip_id.to_owned(),
        neutral_pad: 0,
    })
}

fn load_gt(root: &Path) -> CliResult<Vec<GroundTruthMovement>> {
    let path = root.join(GROUND_TRUTH_FILE);
    ingest::load_ground_truth(&path).stage(Stage::Ingest, path.display())
}

pub fn load(root: &Path, cfg: &DatasetConfig) -> CliResult<Dataset> {
    if !root.is_dir() {
        return Err(data_err(format!("{} is not a directory", root.display())));
    }
    let ds = match cfg.adapter {
        Adapter::Synth => load_ingest_layout(root, cfg)?,
        Adapter::SammLayout => load_samm(root, cfg)?,
        Adapter::Casme2Layout => load_casme2(root, cfg)?,
    };
    let mut seen = BTreeSet::new();
    for clip in ds.clips() {
        if !seen.insert(clip.info.clip_id.clone()) {
            return Err(data_err(format!("duplicate clip id {}", clip.info.clip_id)));
        }
    }
    if seen.is_empty() {
        return Err(data_err(format!("no clips found under {}", root.display())));
    }
    for m in &ds.movements {
        if !seen.contains(&m.clip_id) {
            warn!("ground truth for unknown clip {} ignored", m.clip_id);
        }
    }
    Ok(ds)
}

/// Resolves landmarks for every sequence; baselines without their own file
/// borrow the subject's first clip.
fn attach_landmarks(
    root: &Path,
    subject_id: &str,
    clips: Vec<(PathBuf, SeqInput)>,
    baselines: Vec<(PathBuf, SeqInput)>,
) -> CliResult<SubjectInput> {
    let mut out_clips = Vec::new();
    for (dir, mut seq) in clips {
        seq.landmarks = find_landmarks(root, &dir, &seq.info.clip_id).ok_or_else(|| {
            data_err(format!(
                "no landmarks for clip {} ({} or landmarks/{}.json)",
                seq.info.clip_id,
                dir.join(LANDMARKS_FILE).display(),
                seq.info.clip_id
            ))
        })?;
        out_clips.push(seq);
    }
    let fallback = out_clips.first().map(|c| c.landmarks.clone());
    let mut out_base = Vec::new();
    for (dir, mut seq) in baselines {
        seq.landmarks = match find_landmarks(root, &dir, &seq.info.clip_id).or(fallback.clone()) {
            Some(p) => p,
            None => {
                warn!("baseline {} has no landmarks and no sibling clip; skipped", seq.key);
                continue;
            }
        };
        out_base.push(seq);
    }
    Ok(SubjectInput {
        subject_id: subject_id.to_owned(),
        clips: out_clips,
        baselines: out_base,
    })
}

fn frames_of(dir: &Path) -> CliResult<Vec<PathBuf>> {
    list_frames(dir).stage(Stage::Ingest, dir.display())
}

/// `root/<subject>/<clip>/` frame folders plus `baseline*` folders.
fn load_ingest_layout(root: &Path, cfg: &DatasetConfig) -> CliResult<Dataset> {
    let movements = load_gt(root)?;
    let mut subjects = Vec::new();
    for subject_dir in subdirs(root)? {
        let subject_id = dir_name(&subject_dir);
        if subject_id == "landmarks" {
            continue;
        }
        let mut clips = Vec::new();
        let mut baselines = Vec::new();
        for dir in subdirs(&subject_dir)? {
            let name = dir_name(&dir);
            let info = sequence_info(&dir, cfg, &subject_id, &name)?;
            let seq = SeqInput {
                key: format!("{subject_id}/{name}"),
                files: frames_of(&dir)?,
                info,
                landmarks: PathBuf::new(),
            };
            if is_baseline_dir(&name) {
                baselines.push((dir, seq));
            } else {
                clips.push((dir, seq));
            }
        }
        if clips.is_empty() && baselines.is_empty() {
            continue;
        }
        subjects.push(attach_landmarks(root, &subject_id, clips, baselines)?);
    }
    Ok(Dataset {
        subjects,
        movements,
    })
}

/// Frame files keyed by the number in their name.
fn numbered_frames(dir: &Path) -> CliResult<BTreeMap<u64, PathBuf>> {
    let mut out = BTreeMap::new();
    for f in frames_of(dir)? {
        let n = frame_number(&f).ok_or_else(|| {
            data_err(format!("frame file {} has no frame number", f.display()))
        })?;
        if let Some(prev) = out.insert(n, f.clone()) {
            return Err(data_err(format!(
                "frame number {n} appears twice: {} and {}",
                prev.display(),
                f.display()
            )));
        }
    }
    Ok(out)
}

/// Clip span `[first, last]` in file numbers and the movements rebased to it.
fn rebase(
    frames: &BTreeMap<u64, PathBuf>,
    movements: &[GroundTruthMovement],
    first: u64,
    last: u64,
) -> CliResult<(Vec<PathBuf>, Vec<GroundTruthMovement>)> {
    let numbers: Vec<u64> = frames.range(first..=last).map(|(&n, _)| n).collect();
    let index = |n: u64| numbers.binary_search(&n).ok();
    let files = frames.range(first..=last).map(|(_, p)| p.clone()).collect();
    let rebased = movements
        .iter()
        .map(|m| {
            let at = |v: usize| {
                index(v as u64).ok_or_else(|| {
                    data_err(format!("{}: frame {v} is not on disk", m.clip_id))
                })
            };
            Ok(GroundTruthMovement {
                onset: at(m.onset)?,
                apex: at(m.apex)?,
                offset: at(m.offset)?,
                ..m.clone()
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((files, rebased))
}

/// SAMM-style: `root/<subject>/<clip>/` with absolute frame numbers in the
/// file names; clips are cropped to the annotated span plus padding.
/// Folders named `baseline*`/`neutral*` inside a subject hold neutral recordings.
fn load_samm(root: &Path, cfg: &DatasetConfig) -> CliResult<Dataset> {
    let pad = cfg.neutral_pad.unwrap_or(SAMM_PAD) as u64;
    let all = load_gt(root)?;
    let mut movements = Vec::new();
    let mut subjects = Vec::new();
    for subject_dir in subdirs(root)? {
        let subject_id = dir_name(&subject_dir);
        if subject_id == "landmarks" {
            continue;
        }
        let mut clips = Vec::new();
        let mut baselines = Vec::new();
        for dir in subdirs(&subject_dir)? {
            let name = dir_name(&dir);
            let mut info = sequence_info(&dir, cfg, &subject_id, &name)?;
            if is_baseline_dir(&name) {
                let seq = SeqInput {
                    key: format!("{subject_id}/{name}"),
                    files: frames_of(&dir)?,
                    info,
                    landmarks: PathBuf::new(),
                };
                baselines.push((dir, seq));
                continue;
            }
            let clip_gt: Vec<GroundTruthMovement> =
                all.iter().filter(|m| m.clip_id == name).cloned().collect();
            if clip_gt.is_empty() {
                warn!("clip {name} has no ground truth; skipped");
                continue;
            }
            let frames = numbered_frames(&dir)?;
            let onset = clip_gt.iter().map(|m| m.onset as u64).min().unwrap_or(0);
            let offset = clip_gt.iter().map(|m| m.offset as u64).max().unwrap_or(0);
            let (files, rebased) = rebase(&frames, &clip_gt, onset.saturating_sub(pad), offset + pad)?;
            info.neutral_pad = pad as usize;
            movements.extend(rebased);
            clips.push((
                dir,
                SeqInput {
                    key: format!("{subject_id}/{name}"),
                    files,
                    info,
                    landmarks: PathBuf::new(),
                },
            ));
        }
        if clips.is_empty() {
            continue;
        }
        subjects.push(attach_landmarks(root, &subject_id, clips, baselines)?);
    }
    Ok(Dataset {
        subjects,
        movements,
    })
}

/// CASME II-style: `root/<subject>/<episode>/imgN.jpg`, clip id
/// `<subject>/<episode>`. Each subject's baseline concatenates, over its clips,
/// up to `neutral_pad` frames before the first onset and after the last offset.
fn load_casme2(root: &Path, cfg: &DatasetConfig) -> CliResult<Dataset> {
    let pad = cfg.neutral_pad.unwrap_or(CASME2_PAD);
    let all = load_gt(root)?;
    let mut movements = Vec::new();
    let mut subjects = Vec::new();
    for subject_dir in subdirs(root)? {
        let subject_id = dir_name(&subject_dir);
        if subject_id == "landmarks" {
            continue;
        }
        let mut clips = Vec::new();
        let mut excess: Vec<PathBuf> = Vec::new();
        for dir in subdirs(&subject_dir)? {
            let clip_id = format!("{subject_id}/{}", dir_name(&dir));
            let clip_gt: Vec<GroundTruthMovement> =
                all.iter().filter(|m| m.clip_id == clip_id).cloned().collect();
            let frames = numbered_frames(&dir)?;
            let (Some(&first), Some(&last)) = (frames.keys().next(), frames.keys().last()) else {
                continue;
            };
            let (files, rebased) = rebase(&frames, &clip_gt, first, last)?;
            if let (Some(on), Some(off)) = (
                rebased.iter().map(|m| m.onset).min(),
                rebased.iter().map(|m| m.offset).max(),
            ) {
                excess.extend(files[on.saturating_sub(pad)..on].iter().cloned());
                excess.extend(files[off + 1..(off + 1 + pad).min(files.len())].iter().cloned());
            }
            movements.extend(rebased);
            let mut info = sequence_info(&dir, cfg, &subject_id, &clip_id)?;
            info.clip_id = clip_id.clone();
            info.neutral_pad = pad;
            clips.push((
                dir,
                SeqInput {
                    key: clip_id,
                    files,
                    info,
                    landmarks: PathBuf::new(),
                },
            ));
        }
        if clips.is_empty() {
            continue;
        }
        let mut baselines = Vec::new();
        if !excess.is_empty() {
            let name = format!("{BASELINE_PREFIX}_excess");
            let info = SequenceInfo {
                fps: clips[0].1.info.fps,
                subject_id: subject_id.clone(),
                clip_id: name.clone(),
                neutral_pad: 0,
            };
            baselines.push((
                subject_dir.join(&name),
                SeqInput {
                    key: format!("{subject_id}/{name}"),
                    files: excess,
                    info,
                    landmarks: PathBuf::new(),
                },
            ));
        }
        subjects.push(attach_landmarks(root, &subject_id, clips, baselines)?);
    }
    Ok(Dataset {
        subjects,
        movements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmspot::geometry::RegionAtlas;
    use mmspot::ingest::{write_ground_truth, write_landmarks, write_png, LandmarkSet};
    use mmspot::Frame;

    fn canonical_landmarks(dir: &Path) {
        let atlas = RegionAtlas::builtin();
        let lm = LandmarkSet::new(atlas.canonical_points.clone(), 0).unwrap();
        write_landmarks(&dir.join(LANDMARKS_FILE), &lm).unwrap();
    }

    fn frames(dir: &Path, names: impl IntoIterator<Item = String>) {
        fs::create_dir_all(dir).unwrap();
        for n in names {
            write_png(&dir.join(n), &Frame::filled(8, 8, 0.5)).unwrap();
        }
    }

    fn gt(clip: &str, on: usize, apex: usize, off: usize) -> GroundTruthMovement {
        GroundTruthMovement {
            clip_id: clip.into(),
            onset: on,
            apex,
            offset: off,
            au_codes: vec![ingest::AuCode::unit(12)],
        }
    }

    #[test]
    fn samm_layout_crops_and_rebases() {
        let root = tempfile::tempdir().unwrap();
        let clip = root.path().join("006/006_1_2");
        frames(&clip, (5000..5700).map(|n| format!("006_{n:05}.png")));
        canonical_landmarks(&clip);
        frames(&root.path().join("006/neutral"), (0..300).map(|n| format!("{n}.png")));
        write_ground_truth(&root.path().join(GROUND_TRUTH_FILE), &[gt("006_1_2", 5300, 5330, 5360)])
            .unwrap();
        let cfg = DatasetConfig {
            adapter: Adapter::SammLayout,
            ..DatasetConfig::default()
        };
        let ds = load(root.path(), &cfg).unwrap();
        let s = &ds.subjects[0];
        assert_eq!(s.clips.len(), 1);
        assert_eq!(s.clips[0].files.len(), 60 + 1 + 400);
        assert_eq!(frame_number(&s.clips[0].files[0]), Some(5100));
        assert_eq!(ds.movements, vec![gt("006_1_2", 200, 230, 260)]);
        assert_eq!(s.baselines.len(), 1);
        assert_eq!(s.baselines[0].landmarks, clip.join(LANDMARKS_FILE));
    }

    #[test]
    fn casme2_layout_builds_excess_baseline() {
        let root = tempfile::tempdir().unwrap();
        let clip = root.path().join("sub01/EP02_01f");
        frames(&clip, (46..=246).map(|n| format!("img{n}.png")));
        canonical_landmarks(&clip);
        write_ground_truth(
            &root.path().join(GROUND_TRUTH_FILE),
            &[gt("sub01/EP02_01f", 146, 160, 176)],
        )
        .unwrap();
        let cfg = DatasetConfig {
            adapter: Adapter::Casme2Layout,
            ..DatasetConfig::default()
        };
        let ds = load(root.path(), &cfg).unwrap();
        let s = &ds.subjects[0];
        assert_eq!(s.clips[0].info.clip_id, "sub01/EP02_01f");
        assert_eq!(s.clips[0].files.len(), 201);
        assert_eq!(ds.movements[0].onset, 100);
        assert_eq!(ds.movements[0].offset, 130);
        // 50 frames before the onset, 50 after the offset.
        assert_eq!(s.baselines[0].files.len(), 100);
        assert_eq!(frame_number(&s.baselines[0].files[0]), Some(96));
        assert_eq!(frame_number(&s.baselines[0].files[99]), Some(226));
    }

    #[test]
    fn missing_landmarks_and_missing_gt_frames_are_data_errors() {
        let root = tempfile::tempdir().unwrap();
        frames(&root.path().join("s1/c1"), (0..10).map(|n| format!("{n:06}.png")));
        write_ground_truth(&root.path().join(GROUND_TRUTH_FILE), &[]).unwrap();
        let err = load(root.path(), &DatasetConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no landmarks"), "{err}");
        assert_eq!(err.exit_code(), 3);

        let root = tempfile::tempdir().unwrap();
        let clip = root.path().join("006/c");
        frames(&clip, (10..20).map(|n| format!("{n}.png")));
        canonical_landmarks(&clip);
        write_ground_truth(&root.path().join(GROUND_TRUTH_FILE), &[gt("c", 12, 30, 40)]).unwrap();
        let cfg = DatasetConfig {
            adapter: Adapter::SammLayout,
            ..DatasetConfig::default()
        };
        assert!(load(root.path(), &cfg).is_err());
    }
}
