//! Line-oriented text formats: the shared key/value syntax, CAS and
//! confounder dumps, predictions, and evaluation exports.
//!
//! Reals are written with Rust's shortest round-trip formatting unless noted,
//! so every dump reads back bit-exactly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use wtal_core::eval::ErrorCategory;
use wtal_core::{ActionInstance, Cas, ConfounderScore, ErrorProfile, EvalResult, Matrix};

use crate::error::{Result, WtalError};

/// One non-blank, non-comment line: a key followed by whitespace-separated
/// arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct KvLine {
    pub line: usize,
    pub key: String,
    pub args: Vec<String>,
}

pub fn parse_kv(text: &str) -> Vec<KvLine> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                return None;
            }
            let mut parts = trimmed.split_whitespace().map(str::to_string);
            let key = parts.next()?;
            Some(KvLine {
                line: i + 1,
                key,
                args: parts.collect(),
            })
        })
        .collect()
}

pub fn read_kv(path: &Path) -> Result<Vec<KvLine>> {
    Ok(parse_kv(&read_text(path)?))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| WtalError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| WtalError::io(path, e))
}

impl KvLine {
    pub fn expect_args(&self, path: &Path, n: usize) -> Result<()> {
        if self.args.len() != n {
            return Err(WtalError::parse(
                path,
                self.line,
                format!("`{}` takes {n} argument(s), got {}", self.key, self.args.len()),
            ));
        }
        Ok(())
    }

    pub fn parse_arg<T: std::str::FromStr>(&self, path: &Path, i: usize, what: &str) -> Result<T> {
        let raw = self.args.get(i).ok_or_else(|| {
            WtalError::parse(path, self.line, format!("`{}` is missing its {what}", self.key))
        })?;
        raw.parse()
            .map_err(|_| WtalError::parse(path, self.line, format!("invalid {what} `{raw}`")))
    }

    /// Argument `i` as a comma-separated list.
    pub fn parse_list<T: std::str::FromStr>(&self, path: &Path, i: usize, what: &str) -> Result<Vec<T>> {
        let Some(raw) = self.args.get(i) else {
            return Ok(Vec::new());
        };
        raw.split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| WtalError::parse(path, self.line, format!("invalid {what} `{s}`")))
            })
            .collect()
    }
}

pub(crate) fn check_token(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) || id.starts_with('#') {
        return Err(WtalError::Usage(format!("identifier `{id}` cannot be written to a text file")));
    }
    Ok(())
}

pub fn format_cas_text<'a>(cas: impl IntoIterator<Item = &'a Cas>) -> Result<String> {
    let mut out = String::new();
    for a in cas {
        check_token(&a.video_id)?;
        for t in 0..a.num_segments() {
            for f in 0..a.num_classes() {
                writeln!(out, "cas {} {t} {f} {}", a.video_id, a.scores[(t, f)]).unwrap();
            }
        }
    }
    Ok(out)
}

pub fn write_cas_text<'a>(cas: impl IntoIterator<Item = &'a Cas>, path: &Path) -> Result<()> {
    write_text(path, &format_cas_text(cas)?)
}

/// Per-video dense grids keyed by index, in order of first appearance.
struct GridBuilder {
    order: Vec<String>,
    cells: HashMap<String, HashMap<(usize, usize), f64>>,
}

impl GridBuilder {
    fn new() -> Self {
        Self {
            order: Vec::new(),
            cells: HashMap::new(),
        }
    }

    fn insert(&mut self, path: &Path, line: usize, id: &str, at: (usize, usize), v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(WtalError::parse(path, line, "non-finite value"));
        }
        if !self.cells.contains_key(id) {
            self.order.push(id.to_string());
        }
        let grid = self.cells.entry(id.to_string()).or_default();
        if grid.insert(at, v).is_some() {
            return Err(WtalError::parse(path, line, format!("duplicate entry {at:?} for {id}")));
        }
        Ok(())
    }

    fn finish(mut self, path: &Path) -> Result<Vec<(String, Matrix)>> {
        let mut out = Vec::new();
        for id in self.order {
            let grid = self.cells.remove(&id).unwrap();
            let rows = grid.keys().map(|k| k.0).max().unwrap() + 1;
            let cols = grid.keys().map(|k| k.1).max().unwrap() + 1;
            if grid.len() != rows * cols {
                return Err(WtalError::format(
                    path,
                    "entries",
                    format!("{id} has {} of {rows}x{cols} entries", grid.len()),
                ));
            }
            out.push((id, Matrix::from_fn(rows, cols, |i, j| grid[&(i, j)])));
        }
        Ok(out)
    }
}

pub fn read_cas_text(path: &Path) -> Result<Vec<Cas>> {
    let mut grids = GridBuilder::new();
    for l in read_kv(path)? {
        if l.key != "cas" {
            return Err(WtalError::parse(path, l.line, format!("unknown record `{}`", l.key)));
        }
        l.expect_args(path, 4)?;
        let t = l.parse_arg(path, 1, "segment index")?;
        let f = l.parse_arg(path, 2, "class index")?;
        let v = l.parse_arg(path, 3, "score")?;
        grids.insert(path, l.line, &l.args[0], (t, f), v)?;
    }
    Ok(grids
        .finish(path)?
        .into_iter()
        .map(|(video_id, scores)| Cas { video_id, scores })
        .collect())
}

pub fn write_confounder_text<'a>(scores: impl IntoIterator<Item = &'a ConfounderScore>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for s in scores {
        check_token(&s.video_id)?;
        for (t, z) in s.z.iter().enumerate() {
            writeln!(out, "z {} {t} {z}", s.video_id).unwrap();
        }
    }
    write_text(path, &out)
}

pub fn read_confounder_text(path: &Path) -> Result<Vec<ConfounderScore>> {
    let mut grids = GridBuilder::new();
    for l in read_kv(path)? {
        if l.key != "z" {
            return Err(WtalError::parse(path, l.line, format!("unknown record `{}`", l.key)));
        }
        l.expect_args(path, 3)?;
        let t = l.parse_arg(path, 1, "segment index")?;
        let v = l.parse_arg(path, 2, "score")?;
        grids.insert(path, l.line, &l.args[0], (t, 0), v)?;
    }
    Ok(grids
        .finish(path)?
        .into_iter()
        .map(|(video_id, m)| ConfounderScore {
            video_id,
            z: m.into_vec(),
        })
        .collect())
}

/// Scores are printed with 6 decimals; boundaries keep full precision.
pub fn write_predictions(preds: &[ActionInstance], path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in preds {
        check_token(&p.video_id)?;
        writeln!(
            out,
            "pred {} {} {} {} {:.6}",
            p.video_id, p.class_index, p.start_sec, p.end_sec, p.score
        )
        .unwrap();
    }
    write_text(path, &out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<ActionInstance>> {
    read_kv(path)?
        .into_iter()
        .map(|l| {
            if l.key != "pred" {
                return Err(WtalError::parse(path, l.line, format!("unknown record `{}`", l.key)));
            }
            l.expect_args(path, 5)?;
            let p = ActionInstance {
                video_id: l.args[0].clone(),
                class_index: l.parse_arg(path, 1, "class index")?,
                start_sec: l.parse_arg(path, 2, "start")?,
                end_sec: l.parse_arg(path, 3, "end")?,
                score: l.parse_arg(path, 4, "score")?,
            };
            if !(p.start_sec.is_finite() && p.end_sec.is_finite() && p.score.is_finite() && p.start_sec < p.end_sec) {
                return Err(WtalError::parse(path, l.line, "interval must be finite with start < end"));
            }
            Ok(p)
        })
        .collect()
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Class by threshold grid of AP (`-` where undefined) followed by the mAP row.
pub fn format_eval_table(res: &EvalResult) -> String {
    let mut out = String::from("class");
    for t in &res.iou_thresholds {
        write!(out, "\t{t:.2}").unwrap();
    }
    out.push('\n');
    for (c, row) in res.ap.iter().enumerate() {
        write!(out, "{c}").unwrap();
        for cell in row {
            match cell {
                Some(ap) => write!(out, "\t{ap:.6}").unwrap(),
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out.push_str("mAP");
    for m in &res.map {
        write!(out, "\t{m:.6}").unwrap();
    }
    writeln!(out, "\naverage\t{:.6}", res.average_map).unwrap();
    out
}

pub fn format_eval_kv(res: &EvalResult) -> String {
    let mut out = String::new();
    writeln!(out, "iou_thresholds {}", join(&res.iou_thresholds)).unwrap();
    writeln!(out, "num_ground_truth {}", res.num_ground_truth).unwrap();
    writeln!(out, "num_predictions {}", res.num_predictions).unwrap();
    writeln!(out, "map {}", join(&res.map)).unwrap();
    writeln!(out, "average_map {}", res.average_map).unwrap();
    for (c, row) in res.ap.iter().enumerate() {
        let cells = row.iter().map(|cell| cell.map_or("-".to_string(), |v| v.to_string()));
        writeln!(out, "ap {c} {}", join(cells)).unwrap();
    }
    out
}

pub fn read_eval_kv(path: &Path) -> Result<EvalResult> {
    let mut thresholds = None;
    let mut map = None;
    let mut average_map = None;
    let mut num_ground_truth = None;
    let mut num_predictions = None;
    let mut per_class: Vec<(usize, Vec<Option<f64>>)> = Vec::new();
    for l in read_kv(path)? {
        match l.key.as_str() {
            "iou_thresholds" => thresholds = Some(l.parse_list::<f64>(path, 0, "threshold")?),
            "map" => map = Some(l.parse_list::<f64>(path, 0, "mAP")?),
            "average_map" => average_map = Some(l.parse_arg(path, 0, "average mAP")?),
            "num_ground_truth" => num_ground_truth = Some(l.parse_arg(path, 0, "count")?),
            "num_predictions" => num_predictions = Some(l.parse_arg(path, 0, "count")?),
            "ap" => {
                l.expect_args(path, 2)?;
                let c = l.parse_arg(path, 0, "class")?;
                let cells = l.args[1]
                    .split(',')
                    .map(|s| {
                        if s == "-" {
                            Ok(None)
                        } else {
                            s.parse()
                                .map(Some)
                                .map_err(|_| WtalError::parse(path, l.line, format!("invalid AP `{s}`")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                per_class.push((c, cells));
            }
            other => return Err(WtalError::parse(path, l.line, format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &'static str| WtalError::format(path, k, "missing");
    let iou_thresholds = thresholds.ok_or_else(|| missing("iou_thresholds"))?;
    let map = map.ok_or_else(|| missing("map"))?;
    if map.len() != iou_thresholds.len() || per_class.iter().any(|(_, c)| c.len() != iou_thresholds.len()) {
        return Err(WtalError::format(path, "map", "length differs from iou_thresholds"));
    }
    per_class.sort_by_key(|(c, _)| *c);
    if per_class.iter().enumerate().any(|(i, (c, _))| i != *c) {
        return Err(WtalError::format(path, "ap", "class rows must be 0..F without gaps"));
    }
    let ap = per_class.into_iter().map(|(_, cells)| cells).collect();
    Ok(EvalResult {
        iou_thresholds,
        ap,
        map,
        average_map: average_map.ok_or_else(|| missing("average_map"))?,
        num_ground_truth: num_ground_truth.ok_or_else(|| missing("num_ground_truth"))?,
        num_predictions: num_predictions.ok_or_else(|| missing("num_predictions"))?,
    })
}

pub fn format_error_profile(p: &ErrorProfile) -> String {
    let mut out = String::new();
    writeln!(out, "iou_threshold {}", p.iou_threshold).unwrap();
    writeln!(out, "num_ground_truth {}", p.num_ground_truth).unwrap();
    writeln!(out, "analyzed {}", p.analyzed).unwrap();
    for c in ErrorCategory::ALL {
        writeln!(out, "count {} {}", c.name(), p.count(c)).unwrap();
    }
    for (i, q) in p.quintiles.iter().enumerate() {
        writeln!(out, "quintile {} {}", i + 1, join(q)).unwrap();
    }
    out
}

/// Reads what [`format_error_profile`] writes. Per-prediction categories are
/// not stored and come back empty.
pub fn read_error_profile(path: &Path) -> Result<ErrorProfile> {
    let mut p = ErrorProfile {
        iou_threshold: f64::NAN,
        num_ground_truth: 0,
        analyzed: 0,
        counts: [0; 6],
        quintiles: Vec::new(),
        categories: Vec::new(),
    };
    for l in read_kv(path)? {
        match l.key.as_str() {
            "iou_threshold" => p.iou_threshold = l.parse_arg(path, 0, "threshold")?,
            "num_ground_truth" => p.num_ground_truth = l.parse_arg(path, 0, "count")?,
            "analyzed" => p.analyzed = l.parse_arg(path, 0, "count")?,
            "count" => {
                l.expect_args(path, 2)?;
                let idx = ErrorCategory::ALL
                    .iter()
                    .position(|c| c.name() == l.args[0])
                    .ok_or_else(|| WtalError::parse(path, l.line, format!("unknown category `{}`", l.args[0])))?;
                p.counts[idx] = l.parse_arg(path, 1, "count")?;
            }
            "quintile" => {
                l.expect_args(path, 2)?;
                let vals: Vec<f64> = l.parse_list(path, 1, "percentage")?;
                let q: [f64; 6] = vals
                    .try_into()
                    .map_err(|_| WtalError::parse(path, l.line, "quintile needs 6 values"))?;
                p.quintiles.push(q);
            }
            other => return Err(WtalError::parse(path, l.line, format!("unknown key `{other}`"))),
        }
    }
    Ok(p)
}
