//! On-disk datasets and image export.

mod dataset;
mod pgm;

pub use dataset::{
    encode_f32, load_dataset, save_dataset, ArrayEntry, Dataset, DatasetManifest, Phantom, Provenance, ReconstructionInfo, RetrievalInfo,
    Stage, DTYPE, FORMAT_VERSION, MANIFEST,
};
pub use pgm::{decode_pgm, encode_pgm, export_pgm, quantize, Window, MAXVAL};
