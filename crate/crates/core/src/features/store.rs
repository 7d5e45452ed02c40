//! Binary container for float grids plus an on-disk feature store.
//!
//! Container layout, little-endian: magic `SEDF`, version u32, rows u32,
//! cols u32, then rows*cols f32 row-major. One file per clip, with an
//! `index.tsv` listing `clip_id<TAB>file<TAB>rows<TAB>cols`.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SEDF";
const VERSION: u32 = 1;

pub fn write_grid(path: &Path, grid: &Array2<f32>) -> Result<()> {
    let (rows, cols) = grid.dim();
    let mut buf = Vec::with_capacity(16 + rows * cols * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in grid.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<Array2<f32>> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let corrupt = |msg: &str| Error::Container {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(corrupt("missing SEDF magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = 16 + rows * cols * 4;
    if bytes.len() != expected {
        return Err(corrupt(&format!(
            "payload size {} does not match {rows}x{cols}",
            bytes.len() - 16
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[16..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|_| corrupt("shape mismatch"))
}

fn sanitize(clip_id: &str) -> String {
    clip_id
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Directory of per-clip feature files with a TSV index.
pub struct FeatureStore {
    dir: PathBuf,
    entries: HashMap<String, PathBuf>,
    order: Vec<String>,
}

impl FeatureStore {
    /// Create (or reset the index of) a store directory.
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(FeatureStore {
            dir: dir.to_path_buf(),
            entries: HashMap::new(),
            order: Vec::new(),
        })
    }

    /// Open an existing store by reading its index.
    pub fn open(dir: &Path) -> Result<Self> {
        let index_path = dir.join("index.tsv");
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let mut store = FeatureStore {
            dir: dir.to_path_buf(),
            entries: HashMap::new(),
            order: Vec::new(),
        };
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || (lineno == 0 && line.starts_with("clip_id\t")) {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "index rows need 4 fields".into(),
                });
            }
            store.order.push(fields[0].to_string());
            store
                .entries
                .insert(fields[0].to_string(), dir.join(fields[1]));
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn clip_ids(&self) -> &[String] {
        &self.order
    }

    pub fn contains(&self, clip_id: &str) -> bool {
        self.entries.contains_key(clip_id)
    }

    pub fn insert(&mut self, clip_id: &str, grid: &Array2<f32>) -> Result<()> {
        let file = format!("{}.feat", sanitize(clip_id));
        let path = self.dir.join(&file);
        write_grid(&path, grid)?;
        if self.entries.insert(clip_id.to_string(), path).is_none() {
            self.order.push(clip_id.to_string());
        }
        Ok(())
    }

    pub fn load(&self, clip_id: &str) -> Result<Array2<f32>> {
        let path = self
            .entries
            .get(clip_id)
            .ok_or_else(|| Error::invalid(format!("clip {clip_id:?} not in feature store")))?;
        read_grid(path)
    }

    /// Write the index; call once after all inserts.
    pub fn write_index(&self) -> Result<()> {
        let mut out = String::from("clip_id\tfile\trows\tcols\n");
        for clip_id in &self.order {
            let path = &self.entries[clip_id];
            let grid = read_grid(path)?;
            let file = path.file_name().unwrap().to_string_lossy();
            out.push_str(&format!(
                "{clip_id}\t{file}\t{}\t{}\n",
                grid.nrows(),
                grid.ncols()
            ));
        }
        let index_path = self.dir.join("index.tsv");
        fs::write(&index_path, out).map_err(|e| Error::io(&index_path, e))
    }
}
