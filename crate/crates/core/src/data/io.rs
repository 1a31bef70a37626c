//! CSV persistence.
//!
//! PU files: header `f0,…,f{d-1},s[,y]` with `s ∈ {0,1}` and `y ∈ {-1,1}`.
//! Labeled files: header `f0,…,f{d-1},class`. Features are written with 17
//! significant digits so a save/load round trip is exact. UTF-8, LF endings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{LabeledDataset, PuDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Labeled,
    Pu,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Labeled(LabeledDataset),
    Pu(PuDataset),
}

fn write_features(out: &mut String, row: &[f64]) {
    for (j, x) in row.iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        write!(out, "{x:.16e}").expect("writing to a String");
    }
}

fn feature_header(out: &mut String, d: usize) {
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        write!(out, "f{j}").expect("writing to a String");
    }
}

fn render(data: &Dataset) -> String {
    let mut out = String::new();
    match data {
        Dataset::Pu(ds) => {
            feature_header(&mut out, ds.dim());
            out.push_str(",s");
            if ds.y_true.is_some() {
                out.push_str(",y");
            }
            out.push('\n');
            for i in 0..ds.len() {
                write_features(&mut out, ds.features.row(i));
                out.push_str(if ds.labeled[i] { ",1" } else { ",0" });
                if let Some(y) = &ds.y_true {
                    out.push_str(if y[i] { ",1" } else { ",-1" });
                }
                out.push('\n');
            }
        }
        Dataset::Labeled(ds) => {
            feature_header(&mut out, ds.dim());
            out.push_str(",class\n");
            for i in 0..ds.len() {
                write_features(&mut out, ds.features.row(i));
                writeln!(out, ",{}", ds.class_ids[i]).expect("writing to a String");
            }
        }
    }
    out
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render(data)).map_err(|e| Error::io(path, e))
}

struct Columns {
    d: usize,
    s: Option<usize>,
    y: Option<usize>,
    class: Option<usize>,
    width: usize,
}

fn parse_header(line: &str) -> Result<Columns> {
    let names: Vec<&str> = line.split(',').map(str::trim).collect();
    let d = names
        .iter()
        .take_while(|n| n.strip_prefix('f').is_some_and(|k| k.parse::<usize>().is_ok()))
        .count();
    for (j, name) in names.iter().take(d).enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::Schema(format!("feature column {j} is named {name:?}")));
        }
    }
    if d == 0 {
        return Err(Error::Schema("no feature columns (expected f0, f1, ...)".into()));
    }
    let mut cols = Columns {
        d,
        s: None,
        y: None,
        class: None,
        width: names.len(),
    };
    for (j, name) in names.iter().enumerate().skip(d) {
        let slot = match *name {
            "s" => &mut cols.s,
            "y" => &mut cols.y,
            "class" => &mut cols.class,
            other => return Err(Error::Schema(format!("unknown column {other:?}"))),
        };
        if slot.replace(j).is_some() {
            return Err(Error::Schema(format!("duplicate column {name:?}")));
        }
    }
    Ok(cols)
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, format, &path.display().to_string())
}

pub fn load_pu(path: impl AsRef<Path>) -> Result<PuDataset> {
    match load_dataset(path, DatasetFormat::Pu)? {
        Dataset::Pu(ds) => Ok(ds),
        Dataset::Labeled(_) => unreachable!("PU format yields PU data"),
    }
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    match load_dataset(path, DatasetFormat::Labeled)? {
        Dataset::Labeled(ds) => Ok(ds),
        Dataset::Pu(_) => unreachable!("labeled format yields labeled data"),
    }
}

fn parse(text: &str, format: DatasetFormat, name: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Schema("empty file: missing header".into()))?;
    let cols = parse_header(header)?;
    match format {
        DatasetFormat::Pu if cols.s.is_none() => {
            return Err(Error::Schema("PU data needs an \"s\" column".into()))
        }
        DatasetFormat::Labeled if cols.class.is_none() => {
            return Err(Error::Schema("labeled data needs a \"class\" column".into()))
        }
        _ => {}
    }

    let mut features = Vec::new();
    let mut s = Vec::new();
    let mut y = Vec::new();
    let mut class = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.width {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("expected {} fields, found {}", cols.width, fields.len()),
            });
        }
        for (j, f) in fields.iter().take(cols.d).enumerate() {
            let x: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                detail: format!("f{j} is not a number: {f:?}"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    detail: format!("f{j} is not finite"),
                });
            }
            features.push(x);
        }
        if let Some(j) = cols.s {
            match fields[j].trim() {
                "0" => s.push(false),
                "1" => s.push(true),
                other => {
                    return Err(Error::Schema(format!(
                        "line {line_no}: s must be 0 or 1, found {other:?}"
                    )))
                }
            }
        }
        if let Some(j) = cols.y {
            match fields[j].trim() {
                "-1" => y.push(false),
                "1" | "+1" => y.push(true),
                other => {
                    return Err(Error::Schema(format!(
                        "line {line_no}: y must be -1 or 1, found {other:?}"
                    )))
                }
            }
        }
        if let Some(j) = cols.class {
            let c: u32 = fields[j].trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                detail: format!("class is not a non-negative integer: {:?}", fields[j]),
            })?;
            class.push(c);
        }
    }
    let n = features.len() / cols.d;
    if n == 0 {
        return Err(Error::Schema("file has no data rows".into()));
    }
    let features = Tensor::matrix(n, cols.d, features)?;
    match format {
        DatasetFormat::Pu => {
            let y_true = cols.y.map(|_| y);
            Ok(Dataset::Pu(PuDataset::new(features, s, y_true)?))
        }
        DatasetFormat::Labeled => {
            let num_classes = class.iter().max().map_or(1, |m| m + 1);
            Ok(Dataset::Labeled(LabeledDataset::new(features, class, num_classes, name)?))
        }
    }
}
