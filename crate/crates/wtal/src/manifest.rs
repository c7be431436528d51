//! Dataset manifests: a text index of feature files, labels and ground truth.
//!
//! ```text
//! classes 4
//! split test
//! video v0 features/v0.wtfx 1
//! labels v0 0,2
//! gt v0 2 3.5 9
//! ```
//!
//! Feature paths are relative to the manifest's directory. `split` is
//! optional and defaults to `train`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use wtal_core::{Dataset, Error, GroundTruthInstance, Split, VideoLabel};

use crate::binary::{read_features, write_features};
use crate::error::{Result, WtalError};
use crate::text::{check_token, read_kv, write_text};

pub const FEATURE_DIR: &str = "features";

struct VideoEntry {
    id: String,
    path: PathBuf,
    seconds_per_segment: f64,
}

pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut num_classes: Option<usize> = None;
    let mut split = Split::Train;
    let mut entries = Vec::new();
    let mut raw_labels: Vec<(usize, String, Vec<usize>)> = Vec::new();
    let mut gts = Vec::new();

    for l in read_kv(manifest)? {
        match l.key.as_str() {
            "classes" => {
                l.expect_args(manifest, 1)?;
                if num_classes.is_some() {
                    return Err(WtalError::parse(manifest, l.line, "`classes` given twice"));
                }
                num_classes = Some(l.parse_arg(manifest, 0, "class count")?);
            }
            "split" => {
                l.expect_args(manifest, 1)?;
                split = match l.args[0].as_str() {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    other => return Err(WtalError::parse(manifest, l.line, format!("unknown split `{other}`"))),
                };
            }
            "video" => {
                l.expect_args(manifest, 3)?;
                entries.push(VideoEntry {
                    id: l.args[0].clone(),
                    path: base.join(&l.args[1]),
                    seconds_per_segment: l.parse_arg(manifest, 2, "seconds per segment")?,
                });
            }
            "labels" => {
                if l.args.is_empty() || l.args.len() > 2 {
                    return Err(WtalError::parse(manifest, l.line, "`labels` takes an id and a class list"));
                }
                raw_labels.push((l.line, l.args[0].clone(), l.parse_list(manifest, 1, "class index")?));
            }
            "gt" => {
                l.expect_args(manifest, 4)?;
                gts.push(GroundTruthInstance {
                    video_id: l.args[0].clone(),
                    class_index: l.parse_arg(manifest, 1, "class index")?,
                    start_sec: l.parse_arg(manifest, 2, "start")?,
                    end_sec: l.parse_arg(manifest, 3, "end")?,
                });
            }
            other => return Err(WtalError::parse(manifest, l.line, format!("unknown record `{other}`"))),
        }
    }
    let num_classes = num_classes.ok_or_else(|| WtalError::format(manifest, "classes", "record missing"))?;

    let mut problems = Vec::new();
    let labels = raw_labels
        .into_iter()
        .map(|(line, id, classes)| {
            let mut y = vec![0u8; num_classes];
            for c in classes {
                match y.get_mut(c) {
                    Some(slot) => *slot = 1,
                    None => problems.push(format!(
                        "line {line}: label class {c} of {id} outside [0, {num_classes})"
                    )),
                }
            }
            VideoLabel { video_id: id, y }
        })
        .collect();

    let videos = entries
        .iter()
        .map(|e| {
            read_features(&e.path, &e.id, e.seconds_per_segment).map_err(|source| WtalError::VideoIo {
                video_id: e.id.clone(),
                source: Box::new(source),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    match Dataset::new(videos, labels, gts, split, num_classes) {
        Ok(ds) if problems.is_empty() => Ok(ds),
        Ok(_) => Err(Error::Validation(problems).into()),
        Err(Error::Validation(more)) => {
            problems.extend(more);
            Err(Error::Validation(problems).into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes `<dir>/<name>.manifest` and one feature file per video under
/// `<dir>/features/`. Returns the manifest path.
pub fn write_dataset(ds: &Dataset, dir: &Path, name: &str) -> Result<PathBuf> {
    let feature_dir = dir.join(FEATURE_DIR);
    fs::create_dir_all(&feature_dir).map_err(|e| WtalError::io(&feature_dir, e))?;
    let mut out = String::new();
    writeln!(out, "classes {}", ds.num_classes).unwrap();
    writeln!(out, "split {}", ds.split.as_str()).unwrap();
    for v in &ds.videos {
        check_token(&v.video_id)?;
        let rel = format!("{FEATURE_DIR}/{}.wtfx", v.video_id);
        write_features(v, &dir.join(&rel))?;
        writeln!(out, "video {} {rel} {}", v.video_id, v.seconds_per_segment()).unwrap();
    }
    for l in &ds.labels {
        let classes: Vec<String> = l.classes().map(|c| c.to_string()).collect();
        if classes.is_empty() {
            writeln!(out, "labels {}", l.video_id).unwrap();
        } else {
            writeln!(out, "labels {} {}", l.video_id, classes.join(",")).unwrap();
        }
    }
    for g in &ds.ground_truth {
        writeln!(out, "gt {} {} {} {}", g.video_id, g.class_index, g.start_sec, g.end_sec).unwrap();
    }
    let path = dir.join(format!("{name}.manifest"));
    write_text(&path, &out)?;
    Ok(path)
}
