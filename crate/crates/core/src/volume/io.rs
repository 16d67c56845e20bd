//! MetaImage-style `.mhd` header plus little-endian `.raw` payload.
//!
//! Recognised keys: `NDims`, `DimSize`, `ElementSpacing`, `Channels`
//! (absent means 1), `ElementType`, `ElementByteOrderMSB`, `ElementDataFile`.
//! A handful of standard MetaImage keys that carry no information for this
//! layout (`ObjectType = Image`, `BinaryData = True`, ...) are tolerated;
//! anything else is rejected.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{voxel_count, Dims, LabelMap, Spacing, Volume};
use crate::error::{Result, SvxError};
use crate::scalar::Scalar;

/// Floating-point sample types with a MetaImage element tag.
pub trait MetaElement: Scalar {
    const ELEMENT_TYPE: &'static str;
    const BYTES: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl MetaElement for f32 {
    const ELEMENT_TYPE: &'static str = "MET_FLOAT";
    const BYTES: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl MetaElement for f64 {
    const ELEMENT_TYPE: &'static str = "MET_DOUBLE";
    const BYTES: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Whatever a header describes.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyImage {
    F32(Volume<f32>),
    F64(Volume<f64>),
    Labels(LabelMap),
}

const TOLERATED: &[(&str, &str)] = &[
    ("ObjectType", "Image"),
    ("BinaryData", "True"),
    ("BinaryDataByteOrderMSB", "False"),
    ("CompressedData", "False"),
];
const IGNORED: &[&str] = &["Offset", "TransformMatrix", "CenterOfRotation", "AnatomicalOrientation"];

struct Header {
    dims: Dims,
    spacing: Spacing,
    channels: usize,
    element: String,
    data_file: PathBuf,
}

fn parse_list<T: std::str::FromStr>(path: &Path, key: &str, value: &str, n: usize) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split_whitespace()
        .map(|s| s.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| SvxError::format(path, format!("cannot parse {key} = {value}")))?;
    if items.len() != n {
        return Err(SvxError::format(path, format!("{key} needs {n} values, got {}", items.len())));
    }
    Ok(items)
}

fn parse_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path).map_err(|e| SvxError::io(path, e))?;
    let mut keys: HashMap<String, String> = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| SvxError::format(path, format!("not a `key = value` line: {line}")))?;
        let (k, v) = (k.trim(), v.trim());
        if let Some((_, want)) = TOLERATED.iter().find(|(name, _)| *name == k) {
            if !v.eq_ignore_ascii_case(want) {
                return Err(SvxError::format(path, format!("unsupported {k} = {v}")));
            }
            continue;
        }
        if IGNORED.contains(&k) {
            continue;
        }
        match k {
            "NDims" | "DimSize" | "ElementSpacing" | "Channels" | "ElementType" | "ElementByteOrderMSB"
            | "ElementDataFile" => {
                if keys.insert(k.to_string(), v.to_string()).is_some() {
                    return Err(SvxError::format(path, format!("duplicate key {k}")));
                }
            }
            _ => return Err(SvxError::format(path, format!("unknown header key {k}"))),
        }
    }
    let get = |k: &str| {
        keys.get(k)
            .map(String::as_str)
            .ok_or_else(|| SvxError::format(path, format!("missing header key {k}")))
    };
    if get("NDims")? != "3" {
        return Err(SvxError::format(path, "only NDims = 3 is supported"));
    }
    let d: Vec<usize> = parse_list(path, "DimSize", get("DimSize")?, 3)?;
    let spacing: Spacing = match keys.get("ElementSpacing") {
        Some(v) => {
            let s: Vec<f64> = parse_list(path, "ElementSpacing", v, 3)?;
            [s[0], s[1], s[2]]
        }
        None => [1.0; 3],
    };
    let channels = match keys.get("Channels") {
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| SvxError::format(path, format!("cannot parse Channels = {v}")))?,
        None => 1,
    };
    if let Some(msb) = keys.get("ElementByteOrderMSB") {
        if !msb.eq_ignore_ascii_case("False") {
            return Err(SvxError::format(path, "only little-endian payloads are supported"));
        }
    }
    let data_file = get("ElementDataFile")?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    Ok(Header {
        dims: [d[0], d[1], d[2]],
        spacing,
        channels,
        element: get("ElementType")?.to_string(),
        data_file: base.join(data_file),
    })
}

fn decode<T: MetaElement>(h: &Header, raw: &[u8]) -> Result<Volume<T>> {
    let data: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(SvxError::Data(format!("{} holds non-finite samples", h.data_file.display())));
    }
    Volume::new(h.dims, h.spacing, h.channels, data)
}

/// Reads a header and its payload. Float element types give a volume,
/// unsigned integer types a label map.
pub fn read_image(path: impl AsRef<Path>) -> Result<AnyImage> {
    let path = path.as_ref();
    let h = parse_header(path)?;
    if h.dims.contains(&0) || h.channels == 0 {
        return Err(SvxError::format(path, "dimensions and channel count must be positive"));
    }
    let raw = fs::read(&h.data_file).map_err(|e| SvxError::io(&h.data_file, e))?;
    let width = match h.element.as_str() {
        "MET_FLOAT" => 4,
        "MET_DOUBLE" => 8,
        "MET_UCHAR" => 1,
        "MET_USHORT" => 2,
        "MET_UINT" => 4,
        other => return Err(SvxError::format(path, format!("unsupported ElementType {other}"))),
    };
    let expected = width * h.channels * voxel_count(h.dims);
    if raw.len() != expected {
        return Err(SvxError::format(
            &h.data_file,
            format!("payload holds {} bytes, header implies {expected}", raw.len()),
        ));
    }
    let labels_from = |labels: Vec<u32>| -> Result<AnyImage> {
        if h.channels != 1 {
            return Err(SvxError::format(path, "label maps must have one channel"));
        }
        Ok(AnyImage::Labels(LabelMap::new(h.dims, labels)?.with_spacing(h.spacing)?))
    };
    match h.element.as_str() {
        "MET_FLOAT" => Ok(AnyImage::F32(decode(&h, &raw)?)),
        "MET_DOUBLE" => Ok(AnyImage::F64(decode(&h, &raw)?)),
        "MET_UCHAR" => labels_from(raw.iter().map(|&b| b as u32).collect()),
        "MET_USHORT" => labels_from(raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]]) as u32).collect()),
        _ => labels_from(
            raw.chunks_exact(4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        ),
    }
}

/// Reads a float volume, converting to `T` when the stored type differs.
pub fn read_volume<T: Scalar>(path: impl AsRef<Path>) -> Result<Volume<T>> {
    let path = path.as_ref();
    match read_image(path)? {
        AnyImage::F32(v) => Ok(v.cast()),
        AnyImage::F64(v) => Ok(v.cast()),
        AnyImage::Labels(_) => Err(SvxError::format(path, "expected a float volume, found a label map")),
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    match read_image(path)? {
        AnyImage::Labels(m) => Ok(m),
        _ => Err(SvxError::format(path, "expected a label map, found a float volume")),
    }
}

fn raw_path(path: &Path) -> PathBuf {
    path.with_extension("raw")
}

fn write_pair(path: &Path, dims: Dims, spacing: Spacing, channels: usize, element: &str, payload: &[u8]) -> Result<()> {
    let raw = raw_path(path);
    let raw_name = raw
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| SvxError::Param(format!("cannot derive a data file name from {}", path.display())))?;
    let mut header = String::new();
    header.push_str("NDims = 3\n");
    header.push_str(&format!("DimSize = {} {} {}\n", dims[0], dims[1], dims[2]));
    header.push_str(&format!("ElementSpacing = {} {} {}\n", spacing[0], spacing[1], spacing[2]));
    if channels != 1 {
        header.push_str(&format!("Channels = {channels}\n"));
    }
    header.push_str(&format!("ElementType = {element}\n"));
    header.push_str("ElementByteOrderMSB = False\n");
    header.push_str(&format!("ElementDataFile = {raw_name}\n"));
    fs::write(&raw, payload).map_err(|e| SvxError::io(&raw, e))?;
    fs::write(path, header).map_err(|e| SvxError::io(path, e))
}

/// Writes `path` (header) and a sibling `.raw` payload.
pub fn write_volume<T: MetaElement>(v: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut payload = Vec::with_capacity(v.data().len() * T::BYTES);
    for &s in v.data() {
        s.write_le(&mut payload);
    }
    write_pair(path.as_ref(), v.dims(), v.spacing(), v.channels(), T::ELEMENT_TYPE, &payload)
}

/// Label maps are always stored as `MET_UINT`.
pub fn write_labels(m: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let payload: Vec<u8> = m.labels().iter().flat_map(|l| l.to_le_bytes()).collect();
    write_pair(path.as_ref(), m.dims(), m.spacing(), 1, "MET_UINT", &payload)
}
