//! Multi-level mesh hierarchies: repeated halving via edge contraction,
//! directory persistence, and a content hash that ties checkpoints to the
//! hierarchy they were trained on.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mesh::{build_adjacency, parse_obj, write_obj, Adjacency, Mesh, MeshError};
use crate::simplify::{
    half_target, simplify_to, ContractionMap, LogEntry, SimplifyError, SimplifyStatus,
};

pub const MAP_MAGIC: &[u8; 9] = b"MVAE-HIER";
pub const MAP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error(transparent)]
    Simplify(#[from] SimplifyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic (expected MVAE-HIER)")]
    BadMagic { path: String },
    #[error("{path}: unsupported version {version}")]
    BadVersion { path: String, version: u32 },
    #[error("{path}: truncated or inconsistent map file")]
    Truncated { path: String },
    #[error("hierarchy directory {dir} has no levels")]
    Empty { dir: String },
    #[error("level {level} has {actual} vertices but the map expects {expected}")]
    LevelMismatch {
        level: usize,
        expected: usize,
        actual: usize,
    },
}

/// One level of the hierarchy: mesh plus its adjacency.
#[derive(Debug, Clone)]
pub struct HierarchyLevel {
    pub mesh: Mesh,
    pub adjacency: Adjacency,
}

/// Ordered levels of coarsened meshes with the contraction map between each
/// consecutive pair. Level 0 is the input mesh.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub levels: Vec<HierarchyLevel>,
    pub maps: Vec<ContractionMap>,
    pub lambda: f64,
}

impl Hierarchy {
    pub fn depth(&self) -> usize {
        self.maps.len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.mesh.vertex_count()).collect()
    }
}

/// Builds `num_levels` halvings of `mesh` with the modified error metric.
/// Each transition targets `ceil((V + 1) / 2)` vertices; a stall is an error.
pub fn build_hierarchy(
    mesh: &Mesh,
    num_levels: usize,
    lambda: f64,
) -> Result<Hierarchy, HierarchyError> {
    assert!(num_levels >= 1, "hierarchy needs at least one level");
    let adjacency = build_adjacency(mesh)?;
    let mut levels = vec![HierarchyLevel {
        mesh: mesh.clone(),
        adjacency,
    }];
    let mut maps = Vec::with_capacity(num_levels);
    for _ in 0..num_levels {
        let current = &levels.last().unwrap().mesh;
        let target = half_target(current.vertex_count());
        let outcome = simplify_to(current, target, lambda)?;
        if let SimplifyStatus::Stalled { reached } = outcome.status {
            return Err(SimplifyError::Stalled { reached, target }.into());
        }
        let adjacency = build_adjacency(&outcome.mesh)?;
        maps.push(outcome.map);
        levels.push(HierarchyLevel {
            mesh: outcome.mesh,
            adjacency,
        });
    }
    Ok(Hierarchy {
        levels,
        maps,
        lambda,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HierarchyError + '_ {
    move |source| HierarchyError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes one contraction map in the binary map format.
pub fn write_map_file(path: &Path, map: &ContractionMap) -> Result<(), HierarchyError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAP_MAGIC);
    buf.extend_from_slice(&MAP_VERSION.to_le_bytes());
    buf.extend_from_slice(&(map.fine_count as u32).to_le_bytes());
    buf.extend_from_slice(&(map.coarse_count as u32).to_le_bytes());
    for &p in &map.parent {
        buf.extend_from_slice(&(p as u32).to_le_bytes());
    }
    for entry in &map.contraction_log {
        buf.extend_from_slice(&(entry.kept as u32).to_le_bytes());
        buf.extend_from_slice(&(entry.removed as u32).to_le_bytes());
        for k in 0..3 {
            buf.extend_from_slice(&entry.position[k].to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))?;
    Ok(())
}

/// Reads a map file. `coarse_positions` are not stored in the format; they
/// are recovered from the coarser level's OBJ by the directory loader.
pub fn read_map_file(path: &Path) -> Result<ContractionMap, HierarchyError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    let p = path.display().to_string();
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], HierarchyError> {
        if *cursor + n > bytes.len() {
            return Err(HierarchyError::Truncated { path: p.clone() });
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };
    if take(&mut cursor, 9)? != MAP_MAGIC {
        return Err(HierarchyError::BadMagic { path: p.clone() });
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != MAP_VERSION {
        return Err(HierarchyError::BadVersion {
            path: p.clone(),
            version,
        });
    }
    let fine_count = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let coarse_count = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    if coarse_count > fine_count {
        return Err(HierarchyError::Truncated { path: p.clone() });
    }
    let mut parent = Vec::with_capacity(fine_count);
    for _ in 0..fine_count {
        parent.push(u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize);
    }
    let log_len = fine_count - coarse_count;
    let mut contraction_log = Vec::with_capacity(log_len);
    for _ in 0..log_len {
        let kept = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let removed = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let mut coords = [0.0f64; 3];
        for c in coords.iter_mut() {
            *c = f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
        }
        contraction_log.push(LogEntry {
            kept,
            removed,
            position: nalgebra::Point3::new(coords[0], coords[1], coords[2]),
        });
    }
    if cursor != bytes.len() {
        return Err(HierarchyError::Truncated { path: p });
    }
    Ok(ContractionMap {
        fine_count,
        coarse_count,
        parent,
        coarse_positions: Vec::new(),
        contraction_log,
    })
}

/// Writes `level_XX.obj` per level and `map_XX.bin` per transition, plus a
/// small `meta.tsv` carrying the lambda used.
pub fn save_hierarchy(dir: &Path, hierarchy: &Hierarchy) -> Result<(), HierarchyError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (k, level) in hierarchy.levels.iter().enumerate() {
        let path = dir.join(format!("level_{k:02}.obj"));
        fs::write(&path, write_obj(&level.mesh)).map_err(io_err(&path))?;
    }
    for (k, map) in hierarchy.maps.iter().enumerate() {
        write_map_file(&dir.join(format!("map_{k:02}.bin")), map)?;
    }
    let meta = dir.join("meta.tsv");
    fs::write(&meta, format!("lambda\t{:.17e}\n", hierarchy.lambda)).map_err(io_err(&meta))?;
    Ok(())
}

/// Loads a hierarchy directory written by [`save_hierarchy`].
pub fn load_hierarchy(dir: &Path) -> Result<Hierarchy, HierarchyError> {
    let mut levels = Vec::new();
    loop {
        let path = dir.join(format!("level_{:02}.obj", levels.len()));
        if !path.exists() {
            break;
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mesh = parse_obj(&text)?;
        let adjacency = build_adjacency(&mesh)?;
        levels.push(HierarchyLevel { mesh, adjacency });
    }
    if levels.is_empty() {
        return Err(HierarchyError::Empty {
            dir: dir.display().to_string(),
        });
    }
    let mut maps = Vec::new();
    for k in 0..levels.len() - 1 {
        let path = dir.join(format!("map_{k:02}.bin"));
        let mut map = read_map_file(&path)?;
        for (level, expected, actual) in [
            (k, map.fine_count, levels[k].mesh.vertex_count()),
            (k + 1, map.coarse_count, levels[k + 1].mesh.vertex_count()),
        ] {
            if expected != actual {
                return Err(HierarchyError::LevelMismatch {
                    level,
                    expected,
                    actual,
                });
            }
        }
        map.coarse_positions = levels[k + 1].mesh.positions.clone();
        maps.push(map);
    }
    let mut lambda = f64::NAN;
    let meta = dir.join("meta.tsv");
    if let Ok(text) = fs::read_to_string(&meta) {
        for line in text.lines() {
            if let Some(value) = line.strip_prefix("lambda\t") {
                lambda = value.trim().parse().unwrap_or(f64::NAN);
            }
        }
    }
    Ok(Hierarchy {
        levels,
        maps,
        lambda,
    })
}

/// SHA-256 over the canonical serialization of all levels and maps. Training
/// checkpoints embed this hash and refuse to load against a different
/// hierarchy.
pub fn content_hash(hierarchy: &Hierarchy) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((hierarchy.levels.len() as u64).to_le_bytes());
    for level in &hierarchy.levels {
        hasher.update((level.mesh.vertex_count() as u64).to_le_bytes());
        hasher.update((level.mesh.face_count() as u64).to_le_bytes());
        for p in &level.mesh.positions {
            for k in 0..3 {
                hasher.update(p[k].to_le_bytes());
            }
        }
        for f in &level.mesh.faces {
            for &v in f {
                hasher.update((v as u64).to_le_bytes());
            }
        }
    }
    for map in &hierarchy.maps {
        hasher.update((map.fine_count as u64).to_le_bytes());
        hasher.update((map.coarse_count as u64).to_le_bytes());
        for &p in &map.parent {
            hasher.update((p as u64).to_le_bytes());
        }
        for entry in &map.contraction_log {
            hasher.update((entry.kept as u64).to_le_bytes());
            hasher.update((entry.removed as u64).to_le_bytes());
            for k in 0..3 {
                hasher.update(entry.position[k].to_le_bytes());
            }
        }
    }
    hasher.finalize().into()
}
