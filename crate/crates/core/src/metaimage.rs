//! A strict subset of the MetaImage (`.mha`/`.mhd`) format.
//!
//! Writers always emit a single self-contained file (`ElementDataFile = LOCAL`)
//! with this exact header, one `Key = Value` per line:
//!
//! ```text
//! ObjectType = Image
//! NDims = 3
//! DimSize = 16 16 8
//! ElementSpacing = 1 1 1
//! Offset = 0 0 0
//! ElementType = MET_SHORT
//! ElementByteOrderMSB = False
//! ElementDataFile = LOCAL
//! ```
//!
//! followed by little-endian element data in x-fastest order. Volumes use
//! `MET_SHORT`, masks `MET_UCHAR` with values 0/1. Readers also accept a
//! detached data file named relative to the header. Unknown keys are ignored
//! with a warning.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Geometry, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    Short,
    UChar,
}

impl ElementType {
    fn tag(self) -> &'static str {
        match self {
            ElementType::Short => "MET_SHORT",
            ElementType::UChar => "MET_UCHAR",
        }
    }

    fn size(self) -> usize {
        match self {
            ElementType::Short => 2,
            ElementType::UChar => 1,
        }
    }
}

struct Header {
    geometry: Geometry,
    element: ElementType,
    data_file: String,
}

fn header_text(geometry: &Geometry, element: ElementType) -> String {
    let mut s = String::new();
    let [nx, ny, nz] = geometry.dims;
    let [sx, sy, sz] = geometry.spacing;
    let [ox, oy, oz] = geometry.origin;
    s.push_str("ObjectType = Image\n");
    s.push_str("NDims = 3\n");
    let _ = writeln!(s, "DimSize = {nx} {ny} {nz}");
    let _ = writeln!(s, "ElementSpacing = {sx} {sy} {sz}");
    let _ = writeln!(s, "Offset = {ox} {oy} {oz}");
    let _ = writeln!(s, "ElementType = {}", element.tag());
    s.push_str("ElementByteOrderMSB = False\n");
    s.push_str("ElementDataFile = LOCAL\n");
    s
}

fn parse_triple<T: std::str::FromStr>(key: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::Parse {
            key: key.to_string(),
            reason: format!("expected 3 values, found {}", parts.len()),
        });
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| Error::Parse {
            key: key.to_string(),
            reason: format!("cannot parse `{p}`"),
        })?);
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Parse {
            key: key.to_string(),
            reason: format!("expected True or False, found `{value}`"),
        }),
    }
}

/// Parses the header, returning it together with the byte offset at which
/// local element data starts.
fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    let mut pos = 0usize;
    let mut dims: Option<[usize; 3]> = None;
    let mut spacing = [1.0f64; 3];
    let mut origin = [0.0f64; 3];
    let mut element: Option<ElementType> = None;
    let mut ndims_seen = false;

    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| pos + e)
            .unwrap_or(bytes.len());
        let line = std::str::from_utf8(&bytes[pos..end]).map_err(|_| Error::Parse {
            key: "<header>".into(),
            reason: "header is not valid UTF-8".into(),
        })?;
        pos = (end + 1).min(bytes.len());
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            key: line.to_string(),
            reason: "missing `=`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "ObjectType" => {
                if value != "Image" {
                    return Err(Error::UnsupportedFormat(format!("ObjectType {value}")));
                }
            }
            "NDims" => {
                let n: usize = value.parse().map_err(|_| Error::Parse {
                    key: key.into(),
                    reason: format!("cannot parse `{value}`"),
                })?;
                if n != 3 {
                    return Err(Error::UnsupportedFormat(format!("NDims = {n}")));
                }
                ndims_seen = true;
            }
            "DimSize" => {
                let d: [usize; 3] = parse_triple(key, value)?;
                if d.iter().any(|&x| x == 0) {
                    return Err(Error::Parse {
                        key: key.into(),
                        reason: "dimensions must be >= 1".into(),
                    });
                }
                dims = Some(d);
            }
            "ElementSpacing" | "ElementSize" => spacing = parse_triple(key, value)?,
            "Offset" | "Origin" | "Position" => origin = parse_triple(key, value)?,
            "ElementType" => {
                element = Some(match value {
                    "MET_SHORT" => ElementType::Short,
                    "MET_UCHAR" => ElementType::UChar,
                    other => return Err(Error::UnsupportedFormat(format!("ElementType {other}"))),
                })
            }
            "ElementByteOrderMSB" | "BinaryDataByteOrderMSB" => {
                if parse_bool(key, value)? {
                    return Err(Error::UnsupportedFormat("big-endian element data".into()));
                }
            }
            "CompressedData" => {
                if parse_bool(key, value)? {
                    return Err(Error::UnsupportedFormat("compressed element data".into()));
                }
            }
            "ElementNumberOfChannels" => {
                if value != "1" {
                    return Err(Error::UnsupportedFormat(format!("{value} channels")));
                }
            }
            "ElementDataFile" => {
                if !ndims_seen {
                    return Err(Error::Parse {
                        key: "NDims".into(),
                        reason: "missing".into(),
                    });
                }
                let dims = dims.ok_or_else(|| Error::Parse {
                    key: "DimSize".into(),
                    reason: "missing".into(),
                })?;
                let element = element.ok_or_else(|| Error::Parse {
                    key: "ElementType".into(),
                    reason: "missing".into(),
                })?;
                let geometry = Geometry::new(dims, spacing, origin).map_err(|e| Error::Parse {
                    key: "ElementSpacing".into(),
                    reason: e.to_string(),
                })?;
                let header = Header {
                    geometry,
                    element,
                    data_file: value.to_string(),
                };
                return Ok((header, pos));
            }
            other => log::warn!("ignoring unknown MetaImage key `{other}`"),
        }
    }
    Err(Error::Parse {
        key: "ElementDataFile".into(),
        reason: "missing".into(),
    })
}

fn element_bytes<'a>(
    header: &Header,
    bytes: &'a [u8],
    data_start: usize,
    base_dir: Option<&Path>,
    storage: &'a mut Vec<u8>,
) -> Result<&'a [u8]> {
    let expected = header.geometry.len() * header.element.size();
    let raw: &[u8] = if header.data_file == "LOCAL" {
        &bytes[data_start..]
    } else {
        let dir = base_dir.ok_or_else(|| {
            Error::UnsupportedFormat("detached data file without a base directory".into())
        })?;
        let path = dir.join(&header.data_file);
        *storage = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        storage.as_slice()
    };
    if raw.len() != expected {
        return Err(Error::Size {
            expected,
            actual: raw.len(),
        });
    }
    Ok(raw)
}

/// Decodes a volume from in-memory MetaImage bytes. `base_dir` resolves a
/// detached `ElementDataFile`.
pub fn decode_volume(bytes: &[u8], base_dir: Option<&Path>) -> Result<Volume> {
    let (header, start) = parse_header(bytes)?;
    if header.element != ElementType::Short {
        return Err(Error::UnsupportedFormat(format!(
            "volumes must be MET_SHORT, found {}",
            header.element.tag()
        )));
    }
    let mut storage = Vec::new();
    let raw = element_bytes(&header, bytes, start, base_dir, &mut storage)?;
    let data = raw
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    Volume::new(header.geometry, data)
}

/// Decodes a binary mask from in-memory MetaImage bytes.
pub fn decode_mask(bytes: &[u8], base_dir: Option<&Path>) -> Result<BinaryMask> {
    let (header, start) = parse_header(bytes)?;
    if header.element != ElementType::UChar {
        return Err(Error::UnsupportedFormat(format!(
            "masks must be MET_UCHAR, found {}",
            header.element.tag()
        )));
    }
    let mut storage = Vec::new();
    let raw = element_bytes(&header, bytes, start, base_dir, &mut storage)?;
    let mut bits = Vec::with_capacity(raw.len());
    for (idx, &b) in raw.iter().enumerate() {
        match b {
            0 => bits.push(false),
            1 => bits.push(true),
            other => {
                return Err(Error::Parse {
                    key: "ElementDataFile".into(),
                    reason: format!("mask value {other} at element {idx} is not 0 or 1"),
                })
            }
        }
    }
    BinaryMask::new(header.geometry, bits)
}

pub fn encode_volume(volume: &Volume) -> Vec<u8> {
    let mut out = header_text(volume.geometry(), ElementType::Short).into_bytes();
    out.reserve(volume.data().len() * 2);
    for v in volume.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_mask(mask: &BinaryMask) -> Vec<u8> {
    let mut out = header_text(mask.geometry(), ElementType::UChar).into_bytes();
    out.extend(mask.bits().iter().map(|&b| u8::from(b)));
    out
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes, path.parent())
}

pub fn save_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(volume)).map_err(|e| Error::io(path, e))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes, path.parent())
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mask(mask)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_header(dims: &str) -> String {
        format!(
            "ObjectType = Image\nNDims = 3\nDimSize = {dims}\nElementSpacing = 1 1 1\n\
             Offset = 0 0 0\nElementType = MET_SHORT\nElementByteOrderMSB = False\n\
             ElementDataFile = LOCAL\n"
        )
    }

    #[test]
    fn zero_volume_loads() {
        let mut bytes = zero_header("4 4 4").into_bytes();
        bytes.extend(std::iter::repeat_n(0u8, 128));
        let v = decode_volume(&bytes, None).unwrap();
        assert_eq!(v.dims(), [4, 4, 4]);
        assert!(v.data().iter().all(|&x| x == 0));
    }

    #[test]
    fn single_voxel_volume() {
        let mut bytes = zero_header("1 1 1").into_bytes();
        bytes.extend_from_slice(&(-1024i16).to_le_bytes());
        let v = decode_volume(&bytes, None).unwrap();
        assert_eq!(v.data(), &[-1024]);
    }

    #[test]
    fn header_bytes_are_exact() {
        let g = Geometry::new([2, 3, 4], [0.5, 1.0, 2.5], [-10.0, 0.0, 3.25]).unwrap();
        let v = Volume::filled(g, 7);
        let bytes = encode_volume(&v);
        let expected = "ObjectType = Image\nNDims = 3\nDimSize = 2 3 4\n\
                        ElementSpacing = 0.5 1 2.5\nOffset = -10 0 3.25\n\
                        ElementType = MET_SHORT\nElementByteOrderMSB = False\n\
                        ElementDataFile = LOCAL\n";
        assert_eq!(&bytes[..expected.len()], expected.as_bytes());
        assert_eq!(bytes.len(), expected.len() + 24 * 2);
        assert_eq!(&bytes[expected.len()..expected.len() + 2], &[7, 0]);
    }

    #[test]
    fn malformed_key_is_named() {
        let bytes = zero_header("4 four 4").into_bytes();
        match decode_volume(&bytes, None) {
            Err(Error::Parse { key, .. }) => assert_eq!(key, "DimSize"),
            other => panic!("unexpected {other:?}"),
        }
        let bytes = "NDims = 3\nDimSize = 1 1 1\nElementDataFile = LOCAL\n\0\0";
        match decode_volume(bytes.as_bytes(), None) {
            Err(Error::Parse { key, .. }) => assert_eq!(key, "ElementType"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn size_mismatch() {
        let mut bytes = zero_header("4 4 4").into_bytes();
        bytes.extend(std::iter::repeat_n(0u8, 127));
        assert!(matches!(
            decode_volume(&bytes, None),
            Err(Error::Size {
                expected: 128,
                actual: 127
            })
        ));
    }

    #[test]
    fn unsupported_element_type() {
        let text = zero_header("1 1 1").replace("MET_SHORT", "MET_FLOAT");
        let mut bytes = text.into_bytes();
        bytes.extend([0u8; 4]);
        assert!(matches!(
            decode_volume(&bytes, None),
            Err(Error::UnsupportedFormat(_))
        ));
        let mut bytes = zero_header("1 1 1").into_bytes();
        bytes.extend([0u8; 2]);
        // A volume file is not a mask.
        assert!(matches!(
            decode_mask(&bytes, None),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn unknown_keys_are_ignored() {
        let text = zero_header("1 1 1").replace("NDims = 3\n", "NDims = 3\nComment = hello\n");
        let mut bytes = text.into_bytes();
        bytes.extend([5u8, 0]);
        assert_eq!(decode_volume(&bytes, None).unwrap().data(), &[5]);
    }

    #[test]
    fn detached_data_file() {
        let dir = tempfile::tempdir().unwrap();
        let header = zero_header("2 1 1").replace("LOCAL", "vol.raw");
        fs::write(dir.path().join("vol.mhd"), header).unwrap();
        fs::write(dir.path().join("vol.raw"), [1u8, 0, 0xff, 0xff]).unwrap();
        let v = load_volume(dir.path().join("vol.mhd")).unwrap();
        assert_eq!(v.data(), &[1, -1]);
    }

    #[test]
    fn mask_roundtrip_all_set() {
        let dir = tempfile::tempdir().unwrap();
        let g = Geometry::new([3, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
        let m = BinaryMask::new(g, vec![true; 12]).unwrap();
        let path = dir.path().join("m.mha");
        save_mask(&m, &path).unwrap();
        let back = load_mask(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.count(), 12);
    }

    #[test]
    fn mask_with_mismatched_header_rejected() {
        let g = Geometry::new([3, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
        let m = BinaryMask::new(g, vec![true; 12]).unwrap();
        let text = String::from_utf8(encode_mask(&m)[..].to_vec()).unwrap();
        let tampered = text.replace("DimSize = 3 2 2", "DimSize = 3 3 2");
        assert!(matches!(
            decode_mask(tampered.as_bytes(), None),
            Err(Error::Size { .. })
        ));
        let mut bad = encode_mask(&m);
        *bad.last_mut().unwrap() = 2;
        assert!(matches!(decode_mask(&bad, None), Err(Error::Parse { .. })));
    }

    #[test]
    fn io_error_has_path() {
        let err = load_volume("/nonexistent/dir/x.mha").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.mha"));
        assert!(err.is_io());
    }
}
