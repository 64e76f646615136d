//! Dataset directories: a `meta.json` manifest plus one raw little-endian
//! float32 file per array.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayD, IxDyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geometry::{AcquisitionGeometry, RetrievalConfig};
use crate::simulate::PhantomSpec;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "meta.json";
pub const DTYPE: &str = "float32-le";

/// Pipeline stages a dataset can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Raw,
    Normalized,
    Transmission,
    Phase,
    Volume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub file: String,
}

impl ArrayEntry {
    pub fn byte_len(&self) -> u64 {
        4 * self.shape.iter().map(|&d| d as u64).product::<u64>()
    }
}

/// Where the object came from: a phantom description or an outside source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Phantom {
    Spec(PhantomSpec),
    External(String),
}

impl Phantom {
    pub fn external() -> Self {
        Phantom::External("external".into())
    }

    pub fn spec(&self) -> Option<&PhantomSpec> {
        match self {
            Phantom::Spec(s) => Some(s),
            Phantom::External(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub flux: Option<f64>,
    #[serde(default)]
    pub noiseless: bool,
    pub phantom: Phantom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalInfo {
    pub method: String,
    pub config: RetrievalConfig,
    /// Propagation distance assumed by the retrieval, in meters.
    pub distance: f64,
    #[serde(default)]
    pub failed_views: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionInfo {
    pub apodize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub geometry: AcquisitionGeometry,
    pub stages: Vec<Stage>,
    pub arrays: BTreeMap<String, ArrayEntry>,
    pub provenance: Provenance,
    #[serde(default)]
    pub retrieval: Option<RetrievalInfo>,
    #[serde(default)]
    pub reconstruction: Option<ReconstructionInfo>,
}

impl DatasetManifest {
    /// Empty manifest; arrays are added by [`save_dataset`].
    pub fn new(geometry: AcquisitionGeometry, provenance: Provenance) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            geometry,
            stages: Vec::new(),
            arrays: BTreeMap::new(),
            provenance,
            retrieval: None,
            reconstruction: None,
        }
    }

    pub fn has_stage(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Check geometry and that every array has the shape its name implies.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.format_version == FORMAT_VERSION,
            InvalidData,
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            self.format_version
        );
        self.geometry.validate()?;
        let g = &self.geometry;
        let (views, n_u, n_v) = (g.n_views(), g.n_u, g.n_v);
        for (name, entry) in &self.arrays {
            ensure!(entry.dtype == DTYPE, InvalidData, "array {name}: unsupported dtype {}", entry.dtype);
            ensure!(
                !entry.file.contains('/') && !entry.file.contains('\\') && entry.file != ".." && !entry.file.is_empty(),
                InvalidData,
                "array {name}: file name {:?} must be a plain file name",
                entry.file
            );
            let s = entry.shape.as_slice();
            match kind_of(name) {
                ArrayKind::PerView => ensure!(
                    s == [views, n_u, n_v],
                    InvalidData,
                    "array {name}: shape {s:?} does not match {views} views of {n_u}x{n_v}"
                ),
                ArrayKind::Flat => ensure!(
                    s.len() == 3 && (s[0] == 1 || s[0] == views) && s[1..] == [n_u, n_v],
                    InvalidData,
                    "array {name}: shape {s:?} does not match a {n_u}x{n_v} detector"
                ),
                ArrayKind::Volume => ensure!(
                    s == [n_u, n_v, n_v],
                    InvalidData,
                    "array {name}: shape {s:?} is not a {n_u}x{n_v}x{n_v} volume"
                ),
                ArrayKind::Other => {}
            }
        }
        Ok(())
    }
}

enum ArrayKind {
    PerView,
    Flat,
    Volume,
    Other,
}

fn kind_of(name: &str) -> ArrayKind {
    match name {
        "raw" | "normalized" | "transmission" | "phase" | "truth_phase" | "truth_absorption" | "truth_transmission" => ArrayKind::PerView,
        "bright" | "dark" => ArrayKind::Flat,
        "delta" | "truth_delta" | "truth_beta" => ArrayKind::Volume,
        _ => ArrayKind::Other,
    }
}

/// Encode as little-endian float32 in logical (row-major) order.
pub fn encode_f32(array: &ArrayD<f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(4 * array.len());
    for &v in array.iter() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    bytes
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write `arrays` into `dir` (created if needed) and the manifest last.
/// Each entry of `arrays` replaces any same-named entry of `manifest`.
pub fn save_dataset(dir: &Path, manifest: &mut DatasetManifest, arrays: &[(&str, ArrayD<f64>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, array) in arrays {
        manifest.arrays.insert(
            name.to_string(),
            ArrayEntry {
                dtype: DTYPE.into(),
                shape: array.shape().to_vec(),
                file: format!("{name}.f32"),
            },
        );
    }
    manifest.validate()?;
    arrays
        .par_iter()
        .map(|(name, array)| write_file(&dir.join(format!("{name}.f32")), &encode_f32(array)))
        .collect::<Result<()>>()?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST), json.as_bytes())
}

/// A validated dataset directory; arrays are read on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

/// Read and validate `dir/meta.json`, checking every listed file exists with
/// the expected byte length.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    manifest.validate().map_err(|e| Error::format(&path, e.to_string()))?;
    for entry in manifest.arrays.values() {
        let file = dir.join(&entry.file);
        let len = fs::metadata(&file).map_err(|e| Error::io(&file, e))?.len();
        if len != entry.byte_len() {
            return Err(Error::format(
                &file,
                format!("expected {} bytes for shape {:?}, found {len}", entry.byte_len(), entry.shape),
            ));
        }
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
    })
}

impl Dataset {
    pub fn has_array(&self, name: &str) -> bool {
        self.manifest.arrays.contains_key(name)
    }

    pub fn read(&self, name: &str) -> Result<ArrayD<f64>> {
        let entry = self
            .manifest
            .arrays
            .get(name)
            .ok_or_else(|| Error::InvalidData(format!("{}: no array named {name}", self.dir.display())))?;
        let path = self.dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() as u64 != entry.byte_len() {
            return Err(Error::format(
                &path,
                format!("expected {} bytes, found {}", entry.byte_len(), bytes.len()),
            ));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Ok(ArrayD::from_shape_vec(IxDyn(&entry.shape), values).expect("length checked"))
    }

    pub fn read3(&self, name: &str) -> Result<Array3<f64>> {
        self.read(name)?
            .into_dimensionality()
            .map_err(|_| Error::InvalidData(format!("array {name} is not 3-dimensional")))
    }
}
