//! Scene files: `<id>.json` metadata plus a `<id>.hgt` little-endian float32
//! heightfield sidecar, and GeoJSON export of the landmark store.
//!
//! Sidecar layout: `u32 cols`, `u32 rows`, `f32 cell_size`, then `cols * rows`
//! `f32` values in row-major order (row 0 is the southern edge).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use geojson::{Feature, FeatureCollection, Geometry, JsonObject, Value};

use super::{Heightfield, Scene, WorldError};

const HEADER_LEN: usize = 12;

pub fn encode_heightfield(hf: &Heightfield) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + hf.data().len() * 4);
    out.extend_from_slice(&(hf.cols() as u32).to_le_bytes());
    out.extend_from_slice(&(hf.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(hf.cell_size() as f32).to_le_bytes());
    for v in hf.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_heightfield(bytes: &[u8]) -> Result<Heightfield, WorldError> {
    let bad = |m: &str| WorldError::InvalidScene(format!("heightfield sidecar: {m}"));
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let cols = u32::from_le_bytes(word(0)) as usize;
    let rows = u32::from_le_bytes(word(4)) as usize;
    let cell = f32::from_le_bytes(word(8)) as f64;
    let body = &bytes[HEADER_LEN..];
    if body.len() != cols * rows * 4 {
        return Err(bad("payload length does not match header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Heightfield::new(cols, rows, cell, data).ok_or_else(|| bad("invalid dimensions"))
}

pub fn scene_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id}.json")), dir.join(format!("{id}.hgt")))
}

pub fn scene_to_json(scene: &Scene) -> Result<String, WorldError> {
    Ok(serde_json::to_string_pretty(scene)?)
}

pub fn save_scene(scene: &Scene, dir: &Path) -> Result<(), WorldError> {
    fs::create_dir_all(dir)?;
    let (json, hgt) = scene_paths(dir, &scene.id);
    fs::write(json, scene_to_json(scene)?)?;
    fs::write(hgt, encode_heightfield(&scene.heightfield))?;
    Ok(())
}

pub fn load_scene(dir: &Path, id: &str) -> Result<Scene, WorldError> {
    let (json, hgt) = scene_paths(dir, id);
    let mut scene: Scene = serde_json::from_slice(&fs::read(json)?)?;
    scene.heightfield = Arc::new(decode_heightfield(&fs::read(hgt)?)?);
    scene.validate()?;
    Ok(scene)
}

/// Loads every scene found in `dir` (by `*.json` name), sorted by id.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>, WorldError> {
    let mut ids: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            (p.extension()? == "json").then(|| p.file_stem()?.to_str().map(String::from))?
        })
        .filter(|id| scene_paths(dir, id).1.exists())
        .collect();
    ids.sort();
    ids.iter().map(|id| load_scene(dir, id)).collect()
}

/// Landmarks as a GeoJSON FeatureCollection in longitude/latitude, with the
/// map-frame ring and kind kept in the feature properties.
pub fn landmarks_geojson(scene: &Scene) -> FeatureCollection {
    let features = scene
        .visible_landmarks()
        .map(|l| {
            let mut ring: Vec<Vec<f64>> = l
                .polygon
                .iter()
                .map(|&[u, v]| {
                    let (lat, lon) = scene.transform.map_to_geo(u, v);
                    vec![lon, lat]
                })
                .collect();
            if let Some(first) = ring.first().cloned() {
                ring.push(first);
            }
            let mut props = JsonObject::new();
            props.insert("name".into(), l.name.clone().into());
            props.insert("kind".into(), l.kind.clone().into());
            props.insert("map_polygon".into(), serde_json::to_value(closed(&l.polygon)).unwrap_or_default());
            Feature {
                bbox: None,
                geometry: Some(Geometry::new(Value::Polygon(vec![ring]))),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    let mut foreign = JsonObject::new();
    foreign.insert("scene_id".into(), scene.id.clone().into());
    foreign.insert("transform".into(), serde_json::to_value(scene.transform).unwrap_or_default());
    FeatureCollection {
        bbox: None,
        features,
        foreign_members: Some(foreign),
    }
}

fn closed(ring: &[[f64; 2]]) -> Vec<Vec<[f64; 2]>> {
    let mut r = ring.to_vec();
    if let Some(&first) = ring.first() {
        r.push(first);
    }
    vec![r]
}

/// Serde adapter storing an open ring as a GeoJSON-style closed polygon array
/// (`[[[u, v], ..., first]]`).
pub mod closed_ring {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ring: &[[f64; 2]], s: S) -> Result<S::Ok, S::Error> {
        super::closed(ring).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<[f64; 2]>, D::Error> {
        let rings: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let mut outer = rings.into_iter().next().unwrap_or_default();
        if outer.len() > 1 && outer.first() == outer.last() {
            outer.pop();
        }
        Ok(outer)
    }
}
