//! Comma-separated manifests: no quoting, `\n` line ends, one header row.

use visbeam_core::codebook::BeamPair;
use visbeam_core::detector::HeatMap;
use visbeam_core::labeler::{LabelTable, SnrTable};
use visbeam_core::scene::Case;

use crate::error::{Error, Result};

pub const LABEL_HEADER: &str = "i,j,t,r";
pub const SNR_HEADER: &str = "i,j,t,r,sample_index,snr";
pub const STAGE2_HEADER: &str = "case_i,case_j,light_level,camera_set,bitmap_path,t,r";

/// Data rows of `text` after checking the header, with 1-based line numbers.
pub fn rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == header => {}
        Some((_, h)) => return Err(Error::Parse(format!("header '{h}' (expected '{header}')"))),
        None => return Err(Error::Parse("empty file".into())),
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (k, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse(format!("line {}: {} fields, expected {width}", k + 1, fields.len())));
        }
        out.push((k + 1, fields));
    }
    Ok(out)
}

pub fn field<T: std::str::FromStr>(line: usize, s: &str, name: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("line {line}: bad {name} '{s}'")))
}

fn case_pair(line: usize, f: &[&str]) -> Result<(Case, BeamPair)> {
    let case = Case::new(field(line, f[0], "i")?, field(line, f[1], "j")?)
        .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
    let pair = BeamPair::new(field(line, f[2], "t")?, field(line, f[3], "r")?)
        .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
    Ok((case, pair))
}

pub fn parse_label_row(line: &str) -> Result<(Case, BeamPair)> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 4 {
        return Err(Error::Parse(format!("label row '{line}' needs 4 fields")));
    }
    case_pair(1, &f)
}

pub fn encode_labels(t: &LabelTable) -> String {
    let mut s = format!("{LABEL_HEADER}\n");
    for (c, p) in t.iter() {
        s.push_str(&format!("{},{},{},{}\n", c.i, c.j, p.t, p.r));
    }
    s
}

pub fn decode_labels(text: &str) -> Result<LabelTable> {
    let mut t = LabelTable::new();
    for (line, f) in rows(text, LABEL_HEADER)? {
        let (c, p) = case_pair(line, &f)?;
        if t.get(c).is_some() {
            return Err(Error::Parse(format!("line {line}: duplicate case {c}")));
        }
        t.insert(c, p);
    }
    Ok(t)
}

/// `labels_<obstacle>.csv`
pub fn label_file_name(obstacle: &str) -> String {
    format!("labels_{obstacle}.csv")
}

fn fmt_snr(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

pub fn encode_snr(t: &SnrTable) -> String {
    let mut s = String::from(SNR_HEADER);
    s.push('\n');
    for (c, p, samples) in t.iter() {
        for (k, &v) in samples.iter().enumerate() {
            s.push_str(&format!("{},{},{},{},{},{}\n", c.i, c.j, p.t, p.r, k, fmt_snr(v)));
        }
    }
    s
}

pub fn decode_snr(text: &str) -> Result<SnrTable> {
    let mut grouped: std::collections::BTreeMap<(Case, BeamPair), Vec<(usize, f64)>> = Default::default();
    for (line, f) in rows(text, SNR_HEADER)? {
        let (c, p) = case_pair(line, &f)?;
        let k: usize = field(line, f[4], "sample_index")?;
        let v: f64 = match f[5].trim() {
            "NaN" => f64::NAN,
            s => {
                let v: f64 = field(line, s, "snr")?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("line {line}: snr must be finite or NaN")));
                }
                v
            }
        };
        grouped.entry((c, p)).or_default().push((k, v));
    }
    let mut t = SnrTable::new();
    for ((c, p), mut v) in grouped {
        v.sort_by_key(|x| x.0);
        if v.iter().enumerate().any(|(k, x)| x.0 != k) {
            return Err(Error::Parse(format!("case {c} pair {p}: sample indices are not 0..{}", v.len())));
        }
        t.insert(c, p, v.into_iter().map(|x| x.1).collect())?;
    }
    Ok(t)
}

/// One row of the Stage-2 training manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Row {
    pub case: Case,
    pub light_level: usize,
    /// Camera ids joined with `+`, e.g. `1+2`.
    pub camera_set: String,
    pub bitmap_path: String,
    pub pair: BeamPair,
}

pub fn encode_stage2(rows_: &[Stage2Row]) -> Result<String> {
    let mut s = format!("{STAGE2_HEADER}\n");
    for r in rows_ {
        if r.bitmap_path.contains([',', '\n']) || r.camera_set.contains([',', '\n']) {
            return Err(Error::Config(format!("'{}' cannot be written without quoting", r.bitmap_path)));
        }
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.case.i, r.case.j, r.light_level, r.camera_set, r.bitmap_path, r.pair.t, r.pair.r
        ));
    }
    Ok(s)
}

pub fn decode_stage2(text: &str) -> Result<Vec<Stage2Row>> {
    rows(text, STAGE2_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let case = Case::new(field(line, f[0], "case_i")?, field(line, f[1], "case_j")?)
                .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
            let pair = BeamPair::new(field(line, f[5], "t")?, field(line, f[6], "r")?)
                .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
            Ok(Stage2Row {
                case,
                light_level: field(line, f[2], "light_level")?,
                camera_set: f[3].to_owned(),
                bitmap_path: f[4].to_owned(),
                pair,
            })
        })
        .collect()
}

/// Exact heatmap values, `row,col,p` per cell.
pub fn encode_heatmap(hm: &HeatMap) -> String {
    let mut s = String::from("row,col,p\n");
    for a in 0..hm.rows {
        for b in 0..hm.cols {
            s.push_str(&format!("{a},{b},{:e}\n", hm.get(a, b)));
        }
    }
    s
}

pub fn decode_heatmap(text: &str) -> Result<HeatMap> {
    let cells = rows(text, "row,col,p")?;
    let mut parsed = Vec::with_capacity(cells.len());
    for (line, f) in cells {
        let a: usize = field(line, f[0], "row")?;
        let b: usize = field(line, f[1], "col")?;
        let p: f64 = field(line, f[2], "p")?;
        parsed.push((a, b, p));
    }
    let rows_ = parsed.iter().map(|x| x.0 + 1).max().unwrap_or(0);
    let cols = parsed.iter().map(|x| x.1 + 1).max().unwrap_or(0);
    if rows_ * cols != parsed.len() {
        return Err(Error::Parse("heatmap CSV is not a full grid".into()));
    }
    let mut v = vec![f64::NAN; rows_ * cols];
    for (a, b, p) in parsed {
        v[a * cols + b] = p;
    }
    Ok(HeatMap::from_vec(rows_, cols, v)?)
}

/// Renders a table with a header row.
pub fn table(header: &[&str], body: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in body {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}
