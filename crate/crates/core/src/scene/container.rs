//! `.gclf` scene container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "GCLF" | u32 version | u64 header_len | JSON header | packed arrays
//! ```
//!
//! Array offsets in the header are relative to the first byte after the JSON
//! header. Arrays: positions 3xf32, rotations 4xf32, scales 3xf32, opacity f32,
//! color 3xf32, latents Lxf32, parent i64 (-1 = root), level u16.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_tree, Aabb, GaussianPrimitive, SceneError, SceneHeader, SceneTree};
use crate::georef::GeoTransform;

pub const CONTAINER_MAGIC: &[u8; 4] = b"GCLF";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    offset: u64,
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DiskHeader {
    latent_dim: usize,
    bounds: Aabb,
    node_count: usize,
    version: u32,
    up_axis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<GeoTransform>,
    arrays: Vec<ArrayEntry>,
}

const ARRAYS: [(&str, usize); 8] = [
    ("positions", 12),
    ("rotations", 16),
    ("scales", 12),
    ("opacity", 4),
    ("color", 12),
    ("latents", 0), // 4 * latent_dim
    ("parent", 8),
    ("level", 2),
];

fn put_f32s(buf: &mut Vec<u8>, vals: &[f32]) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a tree into the container byte layout.
pub fn write_scene<W: Write>(tree: &SceneTree, mut w: W) -> Result<(), SceneError> {
    let n = tree.nodes.len();
    let l = tree.header.latent_dim;
    let mut blobs: Vec<Vec<u8>> = vec![Vec::new(); ARRAYS.len()];
    for g in &tree.nodes {
        put_f32s(&mut blobs[0], &g.position);
        put_f32s(&mut blobs[1], &g.rotation);
        put_f32s(&mut blobs[2], &g.scale);
        put_f32s(&mut blobs[3], &[g.opacity]);
        put_f32s(&mut blobs[4], &g.color);
        if g.latent.len() != l {
            return Err(SceneError::MalformedContainer(format!(
                "latent length {} does not match latent_dim {l}",
                g.latent.len()
            )));
        }
        put_f32s(&mut blobs[5], &g.latent);
    }
    for i in 0..n {
        let p = tree.parent[i].map_or(-1i64, i64::from);
        blobs[6].extend_from_slice(&p.to_le_bytes());
        blobs[7].extend_from_slice(&tree.level[i].to_le_bytes());
    }

    let mut offset = 0u64;
    let arrays = ARRAYS
        .iter()
        .zip(&blobs)
        .map(|((name, _), b)| {
            let e = ArrayEntry { name: (*name).to_string(), offset, len: b.len() as u64 };
            offset += b.len() as u64;
            e
        })
        .collect();
    let header = DiskHeader {
        latent_dim: l,
        bounds: tree.header.bounds,
        node_count: n,
        version: CONTAINER_VERSION,
        up_axis: tree.header.up_axis.clone(),
        transform: tree.header.transform.clone(),
        arrays,
    };
    let json = serde_json::to_vec(&header).map_err(|e| SceneError::MalformedContainer(e.to_string()))?;
    w.write_all(CONTAINER_MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for b in &blobs {
        w.write_all(b)?;
    }
    Ok(())
}

pub fn save_scene(tree: &SceneTree, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_scene(tree, &mut w)?;
    w.flush()?;
    Ok(())
}

fn malformed(msg: impl Into<String>) -> SceneError {
    SceneError::MalformedContainer(msg.into())
}

fn f32_at(b: &[u8], i: usize) -> f32 {
    f32::from_le_bytes([b[4 * i], b[4 * i + 1], b[4 * i + 2], b[4 * i + 3]])
}

/// Parse a container and validate the resulting tree.
pub fn read_scene<R: Read>(mut r: R) -> Result<SceneTree, SceneError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[0..4] != CONTAINER_MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(malformed(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let data_start = 16u64
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| malformed("header length exceeds file size"))? as usize;
    let header: DiskHeader =
        serde_json::from_slice(&bytes[16..data_start]).map_err(|e| malformed(format!("header json: {e}")))?;
    if header.version != version {
        return Err(malformed("header version disagrees with preamble"));
    }
    let n = header.node_count;
    let l = header.latent_dim;
    let data = &bytes[data_start..];

    let mut slices: Vec<&[u8]> = Vec::with_capacity(ARRAYS.len());
    for (name, width) in ARRAYS {
        let width = if name == "latents" { 4 * l } else { width };
        let entry = header
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| malformed(format!("missing array {name}")))?;
        let expected = (n as u64).checked_mul(width as u64).ok_or_else(|| malformed("size overflow"))?;
        if entry.len != expected {
            return Err(malformed(format!("array {name}: length {} != expected {expected}", entry.len)));
        }
        let end = entry.offset.checked_add(entry.len).filter(|&e| e <= data.len() as u64);
        let end = end.ok_or_else(|| malformed(format!("array {name} runs past end of file")))?;
        slices.push(&data[entry.offset as usize..end as usize]);
    }

    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let v3 = |s: &[u8]| [f32_at(s, 3 * i), f32_at(s, 3 * i + 1), f32_at(s, 3 * i + 2)];
        nodes.push(GaussianPrimitive {
            position: v3(slices[0]),
            rotation: [0, 1, 2, 3].map(|k| f32_at(slices[1], 4 * i + k)),
            scale: v3(slices[2]),
            opacity: f32_at(slices[3], i),
            color: v3(slices[4]),
            latent: (0..l).map(|k| f32_at(slices[5], l * i + k)).collect(),
        });
    }
    let mut parent = Vec::with_capacity(n);
    for i in 0..n {
        let p = i64::from_le_bytes(slices[6][8 * i..8 * i + 8].try_into().unwrap());
        parent.push(match p {
            -1 => None,
            p if p >= 0 && p < n as i64 => Some(p as u32),
            p => return Err(malformed(format!("node {i}: parent index {p} out of range"))),
        });
    }
    let level = (0..n)
        .map(|i| u16::from_le_bytes([slices[7][2 * i], slices[7][2 * i + 1]]))
        .collect();

    let mut tree = SceneTree::from_parts(l, nodes, parent, level);
    tree.header = SceneHeader {
        latent_dim: l,
        bounds: header.bounds,
        node_count: n,
        version,
        up_axis: header.up_axis,
        transform: header.transform,
    };
    let report = validate_tree(&tree);
    if !report.is_empty() {
        return Err(SceneError::InvariantViolation(report));
    }
    Ok(tree)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneTree, SceneError> {
    let f = std::fs::File::open(path)?;
    read_scene(std::io::BufReader::new(f))
}
