//! Fingerprint data model: raw RSS tensors, the time-averaged radio map and
//! online measurements, plus their CSV representations.
//!
//! All RSS values are dBm. An AP that was not heard is stored as
//! [`MISSING_RSS_DBM`] both in raw samples and in the averaged map.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel for an unheard AP.
pub const MISSING_RSS_DBM: f64 = -95.0;

pub const RADIO_MAP_HEADER: &str = "ap_id,rp_index,x_ft,y_ft,rss_dbm";
pub const TENSOR_HEADER: &str = "ap_id,rp_index,t_index,x_ft,y_ft,rss_dbm";
pub const ONLINE_HEADER: &str = "ap_id,rss_dbm";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub index: usize,
    pub x: f64,
    pub y: f64,
}

impl ReferencePoint {
    pub fn new(index: usize, x: f64, y: f64) -> Self {
        Self { index, x, y }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

fn validate_rps(rps: &[ReferencePoint]) -> Result<()> {
    if rps.is_empty() {
        return Err(Error::invalid("rps", "at least one reference point is required"));
    }
    for (expected, rp) in rps.iter().enumerate() {
        if rp.index != expected {
            return Err(Error::invalid(
                "rps",
                format!("reference point indices must be contiguous; found {} at position {expected}", rp.index),
            ));
        }
        if !rp.x.is_finite() || !rp.y.is_finite() {
            return Err(Error::NonFinite("reference point coordinates"));
        }
    }
    Ok(())
}

/// Raw fingerprints `rss[ap][rp][t]`, stored flat in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintTensor {
    ap_ids: Vec<String>,
    num_rps: usize,
    num_samples: usize,
    rss: Vec<f64>,
}

impl FingerprintTensor {
    pub fn new(ap_ids: Vec<String>, num_rps: usize, num_samples: usize, rss: Vec<f64>) -> Result<Self> {
        if ap_ids.is_empty() {
            return Err(Error::invalid("ap_ids", "at least one AP is required"));
        }
        if num_rps == 0 {
            return Err(Error::invalid("num_rps", "at least one RP is required"));
        }
        if num_samples == 0 {
            return Err(Error::invalid("num_samples", "at least one time sample is required"));
        }
        let expected = ap_ids.len() * num_rps * num_samples;
        if rss.len() != expected {
            return Err(Error::Dimension {
                axis: "tensor entries",
                expected,
                actual: rss.len(),
            });
        }
        if let Some(bad) = rss.iter().find(|v| !v.is_finite() || **v > 0.0) {
            return Err(if bad.is_finite() {
                Error::invalid("rss", format!("fingerprint RSS must be <= 0 dBm, found {bad}"))
            } else {
                Error::NonFinite("fingerprint tensor")
            });
        }
        Ok(Self {
            ap_ids,
            num_rps,
            num_samples,
            rss,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.ap_ids.len()
    }

    pub fn num_rps(&self) -> usize {
        self.num_rps
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn ap_ids(&self) -> &[String] {
        &self.ap_ids
    }

    #[inline]
    pub fn get(&self, ap: usize, rp: usize, t: usize) -> f64 {
        self.rss[(ap * self.num_rps + rp) * self.num_samples + t]
    }

    /// The `M` samples recorded for one (AP, RP) pair.
    pub fn samples(&self, ap: usize, rp: usize) -> &[f64] {
        let start = (ap * self.num_rps + rp) * self.num_samples;
        &self.rss[start..start + self.num_samples]
    }

    /// Treats every column of an averaged map as a single time sample.
    pub fn from_radio_map(map: &RadioMap) -> Self {
        let (l, n) = map.psi.shape();
        let mut rss = Vec::with_capacity(l * n);
        for i in 0..l {
            for j in 0..n {
                rss.push(map.psi[(i, j)]);
            }
        }
        Self {
            ap_ids: map.ap_ids.clone(),
            num_rps: n,
            num_samples: 1,
            rss,
        }
    }
}

/// Time-averaged radio map: `psi` is L x N (APs by RPs).
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    pub psi: DMatrix<f64>,
    pub rps: Vec<ReferencePoint>,
    pub ap_ids: Vec<String>,
}

impl RadioMap {
    pub fn new(psi: DMatrix<f64>, rps: Vec<ReferencePoint>, ap_ids: Vec<String>) -> Result<Self> {
        validate_rps(&rps)?;
        if psi.ncols() != rps.len() {
            return Err(Error::Dimension {
                axis: "radio map columns (RPs)",
                expected: rps.len(),
                actual: psi.ncols(),
            });
        }
        if psi.nrows() != ap_ids.len() {
            return Err(Error::Dimension {
                axis: "radio map rows (APs)",
                expected: ap_ids.len(),
                actual: psi.nrows(),
            });
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("radio map"));
        }
        Ok(Self { psi, rps, ap_ids })
    }

    pub fn num_aps(&self) -> usize {
        self.psi.nrows()
    }

    pub fn num_rps(&self) -> usize {
        self.psi.ncols()
    }

    pub fn row(&self, ap: usize) -> Vec<f64> {
        self.psi.row(ap).iter().copied().collect()
    }

    /// The RSS vector recorded at one RP.
    pub fn fingerprint(&self, rp: usize) -> Vec<f64> {
        self.psi.column(rp).iter().copied().collect()
    }

    pub fn ap_index(&self, id: &str) -> Option<usize> {
        self.ap_ids.iter().position(|a| a == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineMeasurement {
    pub y: Vec<f64>,
    pub truth: Option<(f64, f64)>,
}

impl OnlineMeasurement {
    pub fn new(y: Vec<f64>, truth: Option<(f64, f64)>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("online measurement"));
        }
        Ok(Self { y, truth })
    }

    pub fn check_against(&self, map: &RadioMap) -> Result<()> {
        if self.y.len() != map.num_aps() {
            return Err(Error::Dimension {
                axis: "online measurement APs",
                expected: map.num_aps(),
                actual: self.y.len(),
            });
        }
        Ok(())
    }
}

/// Averages the tensor over its time axis.
pub fn build_radio_map(tensor: &FingerprintTensor, rps: &[ReferencePoint]) -> Result<RadioMap> {
    if rps.len() != tensor.num_rps() {
        return Err(Error::Dimension {
            axis: "reference points",
            expected: tensor.num_rps(),
            actual: rps.len(),
        });
    }
    let (l, n, m) = (tensor.num_aps(), tensor.num_rps(), tensor.num_samples());
    let psi = DMatrix::from_fn(l, n, |i, j| tensor.samples(i, j).iter().sum::<f64>() / m as f64);
    RadioMap::new(psi, rps.to_vec(), tensor.ap_ids().to_vec())
}

fn read_lines(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("non-numeric {field} `{s}`")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite {field} `{s}`")));
    }
    Ok(v)
}

fn parse_usize(path: &Path, line: usize, field: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {field} `{s}`")))
}

/// Iterates non-empty data lines (1-based line numbers), after checking the header.
fn data_lines<'a>(
    path: &'a Path,
    text: &'a str,
    header: &str,
) -> Result<impl Iterator<Item = (usize, &'a str)> + 'a> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let first = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match first {
        None => Err(parse_err(path, 1, "no header")),
        Some((n, l)) if l.trim() != header => {
            Err(parse_err(path, n, format!("malformed header `{}`, expected `{header}`", l.trim())))
        }
        Some(_) => Ok(lines.filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))),
    }
}

fn split_row<'a>(path: &Path, line: usize, row: &'a str, arity: usize) -> Result<Vec<&'a str>> {
    let cells: Vec<&str> = row.split(',').collect();
    if cells.len() != arity {
        return Err(parse_err(
            path,
            line,
            format!("expected {arity} fields, found {}", cells.len()),
        ));
    }
    Ok(cells)
}

struct RpCollector {
    coords: HashMap<usize, (f64, f64)>,
}

impl RpCollector {
    fn new() -> Self {
        Self { coords: HashMap::new() }
    }

    fn record(&mut self, path: &Path, line: usize, rp: usize, x: f64, y: f64) -> Result<()> {
        match self.coords.get(&rp) {
            Some(&(px, py)) if px != x || py != y => Err(parse_err(
                path,
                line,
                format!("RP {rp} has inconsistent coordinates ({px}, {py}) vs ({x}, {y})"),
            )),
            _ => {
                self.coords.insert(rp, (x, y));
                Ok(())
            }
        }
    }

    fn finish(self, path: &Path) -> Result<Vec<ReferencePoint>> {
        let n = self.coords.len();
        let mut rps = Vec::with_capacity(n);
        for j in 0..n {
            let (x, y) = self.coords.get(&j).copied().ok_or_else(|| {
                parse_err(path, 0, format!("RP indices are not contiguous: {j} missing"))
            })?;
            rps.push(ReferencePoint::new(j, x, y));
        }
        Ok(rps)
    }
}

fn intern(ids: &mut Vec<String>, lookup: &mut HashMap<String, usize>, id: &str) -> usize {
    if let Some(&i) = lookup.get(id) {
        return i;
    }
    ids.push(id.to_string());
    lookup.insert(id.to_string(), ids.len() - 1);
    ids.len() - 1
}

pub fn load_radio_map(path: impl AsRef<Path>) -> Result<RadioMap> {
    let path = path.as_ref();
    let text = read_lines(path)?;
    let mut ap_ids = Vec::new();
    let mut lookup = HashMap::new();
    let mut rps = RpCollector::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    for (line, row) in data_lines(path, &text, RADIO_MAP_HEADER)? {
        let f = split_row(path, line, row, 5)?;
        let ap_id = f[0].trim();
        if ap_id.is_empty() {
            return Err(parse_err(path, line, "empty ap_id"));
        }
        let rp = parse_usize(path, line, "rp_index", f[1])?;
        let x = parse_f64(path, line, "x_ft", f[2])?;
        let y = parse_f64(path, line, "y_ft", f[3])?;
        let rss = parse_f64(path, line, "rss_dbm", f[4])?;
        rps.record(path, line, rp, x, y)?;
        let ap = intern(&mut ap_ids, &mut lookup, ap_id);
        if cells.insert((ap, rp), rss).is_some() {
            return Err(parse_err(path, line, format!("duplicate entry for AP {ap_id}, RP {rp}")));
        }
    }
    if ap_ids.is_empty() {
        return Err(parse_err(path, 2, "radio map has no data rows"));
    }
    let rps = rps.finish(path)?;
    let psi = DMatrix::from_fn(ap_ids.len(), rps.len(), |i, j| {
        cells.get(&(i, j)).copied().unwrap_or(MISSING_RSS_DBM)
    });
    RadioMap::new(psi, rps, ap_ids)
}

pub fn save_radio_map(map: &RadioMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(map.psi.len() * 40);
    out.push_str(RADIO_MAP_HEADER);
    out.push('\n');
    for (i, ap) in map.ap_ids.iter().enumerate() {
        for rp in &map.rps {
            // `{}` on f64 prints the shortest string that parses back to the same bits.
            let _ = writeln!(out, "{ap},{},{},{},{}", rp.index, rp.x, rp.y, map.psi[(i, rp.index)]);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<(FingerprintTensor, Vec<ReferencePoint>)> {
    let path = path.as_ref();
    let text = read_lines(path)?;
    let mut ap_ids = Vec::new();
    let mut lookup = HashMap::new();
    let mut rps = RpCollector::new();
    let mut cells: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut num_samples = 0;
    for (line, row) in data_lines(path, &text, TENSOR_HEADER)? {
        let f = split_row(path, line, row, 6)?;
        let ap_id = f[0].trim();
        if ap_id.is_empty() {
            return Err(parse_err(path, line, "empty ap_id"));
        }
        let rp = parse_usize(path, line, "rp_index", f[1])?;
        let t = parse_usize(path, line, "t_index", f[2])?;
        let x = parse_f64(path, line, "x_ft", f[3])?;
        let y = parse_f64(path, line, "y_ft", f[4])?;
        let rss = parse_f64(path, line, "rss_dbm", f[5])?;
        rps.record(path, line, rp, x, y)?;
        let ap = intern(&mut ap_ids, &mut lookup, ap_id);
        num_samples = num_samples.max(t + 1);
        if cells.insert((ap, rp, t), rss).is_some() {
            return Err(parse_err(path, line, format!("duplicate entry for AP {ap_id}, RP {rp}, t {t}")));
        }
    }
    if ap_ids.is_empty() {
        return Err(parse_err(path, 2, "fingerprint file has no data rows"));
    }
    let rps = rps.finish(path)?;
    let mut rss = Vec::with_capacity(ap_ids.len() * rps.len() * num_samples);
    for i in 0..ap_ids.len() {
        for j in 0..rps.len() {
            for t in 0..num_samples {
                rss.push(cells.get(&(i, j, t)).copied().unwrap_or(MISSING_RSS_DBM));
            }
        }
    }
    let n = rps.len();
    Ok((FingerprintTensor::new(ap_ids, n, num_samples, rss)?, rps))
}

pub fn save_tensor(tensor: &FingerprintTensor, rps: &[ReferencePoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if rps.len() != tensor.num_rps() {
        return Err(Error::Dimension {
            axis: "reference points",
            expected: tensor.num_rps(),
            actual: rps.len(),
        });
    }
    let mut out = String::new();
    out.push_str(TENSOR_HEADER);
    out.push('\n');
    for (i, ap) in tensor.ap_ids().iter().enumerate() {
        for rp in rps {
            for (t, v) in tensor.samples(i, rp.index).iter().enumerate() {
                let _ = writeln!(out, "{ap},{},{t},{},{},{v}", rp.index, rp.x, rp.y);
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// An online measurement file, before alignment with a radio map.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRecord {
    pub readings: Vec<(String, f64)>,
    pub truth: Option<(f64, f64)>,
    pub corrupted: Vec<String>,
}

impl OnlineRecord {
    /// Aligns readings with the map's AP order. APs the map does not know are
    /// dropped with a warning; map APs absent from the file read as missing.
    pub fn align(&self, ap_ids: &[String]) -> Result<OnlineMeasurement> {
        let mut y = vec![MISSING_RSS_DBM; ap_ids.len()];
        for (id, v) in &self.readings {
            match ap_ids.iter().position(|a| a == id) {
                Some(i) => y[i] = *v,
                None => log::warn!("dropping reading from AP `{id}` that is not in the radio map"),
            }
        }
        OnlineMeasurement::new(y, self.truth)
    }

    pub fn corrupted_indices(&self, ap_ids: &[String]) -> Vec<usize> {
        self.corrupted
            .iter()
            .filter_map(|id| ap_ids.iter().position(|a| a == id))
            .collect()
    }
}

pub fn load_online(path: impl AsRef<Path>) -> Result<OnlineRecord> {
    let path = path.as_ref();
    let text = read_lines(path)?;
    let mut truth_x = None;
    let mut truth_y = None;
    let mut corrupted = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let Some(comment) = line.strip_prefix('#') else { continue };
        for kv in comment.split(',') {
            let Some((k, v)) = kv.split_once('=') else { continue };
            match k.trim() {
                "truth_x_ft" => truth_x = Some(parse_f64(path, idx + 1, "truth_x_ft", v)?),
                "truth_y_ft" => truth_y = Some(parse_f64(path, idx + 1, "truth_y_ft", v)?),
                "corrupted" => {
                    corrupted = v
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                _ => {}
            }
        }
    }
    let mut readings = Vec::new();
    for (line, row) in data_lines(path, &text, ONLINE_HEADER)? {
        let f = split_row(path, line, row, 2)?;
        let id = f[0].trim();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty ap_id"));
        }
        readings.push((id.to_string(), parse_f64(path, line, "rss_dbm", f[1])?));
    }
    let truth = match (truth_x, truth_y) {
        (Some(x), Some(y)) => Some((x, y)),
        (None, None) => None,
        _ => return Err(parse_err(path, 1, "truth needs both truth_x_ft and truth_y_ft")),
    };
    Ok(OnlineRecord {
        readings,
        truth,
        corrupted,
    })
}

pub fn save_online(
    y: &OnlineMeasurement,
    ap_ids: &[String],
    corrupted: &[usize],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if y.y.len() != ap_ids.len() {
        return Err(Error::Dimension {
            axis: "online measurement APs",
            expected: ap_ids.len(),
            actual: y.y.len(),
        });
    }
    let mut out = String::new();
    if let Some((x, yy)) = y.truth {
        let _ = writeln!(out, "# truth_x_ft={x},truth_y_ft={yy}");
    }
    if !corrupted.is_empty() {
        let ids: Vec<&str> = corrupted.iter().map(|&i| ap_ids[i].as_str()).collect();
        let _ = writeln!(out, "# corrupted={}", ids.join(";"));
    }
    out.push_str(ONLINE_HEADER);
    out.push('\n');
    for (id, v) in ap_ids.iter().zip(&y.y) {
        let _ = writeln!(out, "{id},{v}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
