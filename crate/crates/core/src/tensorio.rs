//! File formats exchanged between pipeline stages.
//!
//! * `NAT1` binary tensors: `b"NAT1"`, dtype code (u8), ndim (u8), one
//!   little-endian u64 per dimension, then the row-major payload as
//!   little-endian IEEE-754 doubles.
//! * Events TSV with header `onset duration trial_id condition`.
//! * ROI masks, one per line: `name<TAB>hemisphere<TAB>i,j,k`.
//! * CSAA option files: `item_id option_label text`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NAT1";
pub const MAX_NDIM: usize = 4;

/// Element type of a tensor file. Only `f64` exists in this version.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorFile {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let t = TensorFile {
            dtype: Dtype::F64,
            shape,
            data,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        TensorFile {
            dtype: Dtype::F64,
            shape: vec![data.len()],
            data,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.is_empty() || self.shape.len() > MAX_NDIM {
            return Err(Error::NdimOutOfRange(self.shape.len()));
        }
        let count = element_count(&self.shape)
            .ok_or_else(|| Error::Validation(format!("shape {:?} overflows", self.shape)))?;
        if count != self.data.len() {
            return Err(Error::Validation(format!(
                "shape {:?} holds {} elements but data has {}",
                self.shape,
                count,
                self.data.len()
            )));
        }
        Ok(())
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Serialized size in bytes.
    pub fn byte_len(&self) -> usize {
        6 + 8 * self.shape.len() + self.dtype.size() * self.data.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(MAGIC);
        out.push(self.dtype.code());
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 {
            if bytes.len() >= 4 && &bytes[..4] != MAGIC {
                return Err(Error::BadMagic {
                    found: bytes[..4].try_into().unwrap(),
                });
            }
            return Err(Error::Truncated {
                expected: 6,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                found: bytes[..4].try_into().unwrap(),
            });
        }
        let dtype = Dtype::from_code(bytes[4])?;
        let ndim = bytes[5] as usize;
        if ndim == 0 || ndim > MAX_NDIM {
            return Err(Error::NdimOutOfRange(ndim));
        }
        let header_len = 6 + 8 * ndim;
        if bytes.len() < header_len {
            return Err(Error::Truncated {
                expected: header_len,
                found: bytes.len(),
            });
        }
        let mut shape = Vec::with_capacity(ndim);
        for chunk in bytes[6..header_len].chunks_exact(8) {
            let d = u64::from_le_bytes(chunk.try_into().unwrap());
            let d = usize::try_from(d).map_err(|_| Error::Validation(format!("dimension {d} too large")))?;
            shape.push(d);
        }
        let count =
            element_count(&shape).ok_or_else(|| Error::Validation(format!("shape {shape:?} overflows")))?;
        let expected = count
            .checked_mul(dtype.size())
            .and_then(|p| p.checked_add(header_len))
            .ok_or_else(|| Error::Validation(format!("shape {shape:?} overflows")))?;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::TrailingBytes(bytes.len() - expected));
        }
        let data = bytes[header_len..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(TensorFile { dtype, shape, data })
    }
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &TensorFile) -> Result<()> {
    let path = path.as_ref();
    let bytes = tensor.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorFile::from_bytes(&bytes)
}

// ---------------------------------------------------------------------------
// events

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub trial_id: String,
    /// Seconds from the first scan.
    pub onset: f64,
    /// Seconds; zero means an instantaneous event.
    pub duration: f64,
    pub condition: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTable {
    pub events: Vec<Event>,
}

pub const EVENT_COLUMNS: [&str; 4] = ["onset", "duration", "trial_id", "condition"];

impl EventTable {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        let t = EventTable { events };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for ev in &self.events {
            if !(ev.onset.is_finite() && ev.onset >= 0.0) {
                return Err(Error::Validation(format!(
                    "trial {:?}: onset {} must be finite and non-negative",
                    ev.trial_id, ev.onset
                )));
            }
            if !(ev.duration.is_finite() && ev.duration >= 0.0) {
                return Err(Error::Validation(format!(
                    "trial {:?}: duration {} must be finite and non-negative",
                    ev.trial_id, ev.duration
                )));
            }
            check_field(&ev.trial_id, "trial_id")?;
            check_field(&ev.condition, "condition")?;
            if !seen.insert(ev.trial_id.as_str()) {
                return Err(Error::DuplicateTrial(ev.trial_id.clone()));
            }
        }
        Ok(())
    }

    /// Distinct conditions in order of first appearance.
    pub fn conditions(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.events
            .iter()
            .filter(|e| seen.insert(e.condition.as_str()))
            .map(|e| e.condition.clone())
            .collect()
    }

    pub fn to_tsv(&self) -> Result<String> {
        self.validate()?;
        let mut out = EVENT_COLUMNS.join("\t");
        out.push('\n');
        for ev in &self.events {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                ev.onset, ev.duration, ev.trial_id, ev.condition
            ));
        }
        Ok(out)
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            path: path.into(),
            line: 1,
            msg: "empty file, expected header".into(),
        })?;
        let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
        let mut idx = [0usize; 4];
        for (slot, name) in idx.iter_mut().zip(EVENT_COLUMNS) {
            *slot = cols.iter().position(|c| *c == name).ok_or_else(|| Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!("missing column {name:?}"),
            })?;
        }
        let mut events = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: lineno,
                    msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
                });
            }
            let num = |j: usize, what: &str| -> Result<f64> {
                fields[j].trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.into(),
                    line: lineno,
                    msg: format!("non-numeric {what} {:?}", fields[j]),
                })
            };
            let ev = Event {
                onset: num(idx[0], "onset")?,
                duration: num(idx[1], "duration")?,
                trial_id: fields[idx[2]].to_string(),
                condition: fields[idx[3]].to_string(),
            };
            if !seen.insert(ev.trial_id.clone()) {
                return Err(Error::DuplicateTrial(ev.trial_id));
            }
            events.push(ev);
        }
        EventTable::new(events)
    }
}

fn check_field(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(Error::Validation(format!(
            "{what} {s:?} must be non-empty and free of tabs/newlines"
        )));
    }
    Ok(())
}

pub fn read_events(path: impl AsRef<Path>) -> Result<EventTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EventTable::parse_tsv(&text, path)
}

pub fn write_events(path: impl AsRef<Path>, table: &EventTable) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table.to_tsv()?).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// ROI masks

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hemisphere {
    LH,
    RH,
}

impl Hemisphere {
    pub fn as_str(self) -> &'static str {
        match self {
            Hemisphere::LH => "LH",
            Hemisphere::RH => "RH",
        }
    }
}

impl fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Hemisphere {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LH" => Ok(Hemisphere::LH),
            "RH" => Ok(Hemisphere::RH),
            other => Err(Error::Validation(format!("unknown hemisphere {other:?}"))),
        }
    }
}

/// Language-network regions available per hemisphere.
pub const ROI_REGIONS: [&str; 6] = ["IFG", "IFGorb", "MFG", "AntTemp", "PostTemp", "AngG"];

/// Static ROI metadata table (abbreviation, hemisphere, full name).
pub const ROI_TABLE_TSV: &str = include_str!("../data/roi_table.tsv");

/// `LH_IFG`-style name for a region in a hemisphere.
pub fn roi_name(hemi: Hemisphere, region: &str) -> String {
    format!("{hemi}_{region}")
}

/// True when `name` is one of the twelve known hemisphere-prefixed regions.
pub fn is_known_roi(name: &str) -> bool {
    known_roi_hemisphere(name).is_some()
}

pub fn known_roi_hemisphere(name: &str) -> Option<Hemisphere> {
    let (h, region) = name.split_once('_')?;
    let hemi: Hemisphere = h.parse().ok()?;
    ROI_REGIONS.contains(&region).then_some(hemi)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    pub name: String,
    pub hemisphere: Hemisphere,
    pub voxel_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoiMaskSet {
    pub masks: Vec<RoiMask>,
}

impl RoiMaskSet {
    pub fn new(masks: Vec<RoiMask>) -> Result<Self> {
        let set = RoiMaskSet { masks };
        set.validate(None)?;
        Ok(set)
    }

    /// Checks names, hemispheres and indices; `n_voxels` bounds the indices
    /// when known.
    pub fn validate(&self, n_voxels: Option<usize>) -> Result<()> {
        let mut names = HashSet::new();
        for m in &self.masks {
            match known_roi_hemisphere(&m.name) {
                Some(h) if h == m.hemisphere => {}
                Some(h) => {
                    return Err(Error::Validation(format!(
                        "mask {:?} is in {h} but declared {}",
                        m.name, m.hemisphere
                    )))
                }
                None => {
                    return Err(Error::Validation(format!(
                        "mask name {:?} is not a known ROI",
                        m.name
                    )))
                }
            }
            if !names.insert(m.name.as_str()) {
                return Err(Error::Validation(format!("duplicate mask name {:?}", m.name)));
            }
            let mut seen = BTreeSet::new();
            for &i in &m.voxel_indices {
                if !seen.insert(i) {
                    return Err(Error::Validation(format!(
                        "mask {:?} repeats voxel index {i}",
                        m.name
                    )));
                }
                if let Some(v) = n_voxels {
                    if i >= v {
                        return Err(Error::Validation(format!(
                            "mask {:?} index {i} out of range for {v} voxels",
                            m.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&RoiMask> {
        self.masks.iter().find(|m| m.name == name)
    }

    pub fn to_tsv(&self) -> Result<String> {
        self.validate(None)?;
        let mut out = String::new();
        for m in &self.masks {
            let idx: Vec<String> = m.voxel_indices.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("{}\t{}\t{}\n", m.name, m.hemisphere, idx.join(",")));
        }
        Ok(out)
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut masks = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse {
                path: path.into(),
                line: lineno,
                msg,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(perr(format!("expected 3 fields, found {}", fields.len())));
            }
            let hemisphere: Hemisphere = fields[1].parse().map_err(|e: Error| perr(e.to_string()))?;
            let voxel_indices = if fields[2].trim().is_empty() {
                Vec::new()
            } else {
                fields[2]
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|_| perr(format!("bad voxel index {s:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            masks.push(RoiMask {
                name: fields[0].to_string(),
                hemisphere,
                voxel_indices,
            });
        }
        RoiMaskSet::new(masks)
    }
}

pub fn read_masks(path: impl AsRef<Path>) -> Result<RoiMaskSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RoiMaskSet::parse_tsv(&text, path)
}

pub fn write_masks(path: impl AsRef<Path>, masks: &RoiMaskSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, masks.to_tsv()?).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// CSAA option files

pub const OPTION_LABELS: [char; 5] = ['A', 'B', 'C', 'D', 'E'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionRow {
    pub item_id: String,
    pub label: char,
    pub text: String,
}

pub fn parse_options_tsv(text: &str, path: &Path) -> Result<Vec<OptionRow>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        msg: "empty file, expected header".into(),
    })?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter().position(|c| *c == name).ok_or_else(|| Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    };
    let (ii, il, it) = (find("item_id")?, find("option_label")?, find("text")?);
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let perr = |msg: String| Error::Parse {
            path: path.into(),
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err(perr(format!(
                "expected {} fields, found {}",
                cols.len(),
                fields.len()
            )));
        }
        let label = match fields[il].trim() {
            l if l.len() == 1 && OPTION_LABELS.contains(&l.chars().next().unwrap()) => {
                l.chars().next().unwrap()
            }
            l => return Err(perr(format!("option label {l:?} not in A-E"))),
        };
        let item_id = fields[ii].to_string();
        if !seen.insert((item_id.clone(), label)) {
            return Err(perr(format!("duplicate option {label} for item {item_id:?}")));
        }
        rows.push(OptionRow {
            item_id,
            label,
            text: fields[it].to_string(),
        });
    }
    Ok(rows)
}

pub fn read_options(path: impl AsRef<Path>) -> Result<Vec<OptionRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_options_tsv(&text, path)
}
