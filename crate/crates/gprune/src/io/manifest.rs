//! The JSON model manifest: an ordered list of layer shapes pointing at
//! weight or magnitude files. Norm-only entries let the optimizer run
//! without shipping raw weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::tensor::{read_norm_csv, read_weight_tensor};
use crate::model::{LayerSpec, NormMatrix, WeightTensor};

pub const MANIFEST_VERSION: u32 = 1;

/// One layer entry. File paths are relative to the manifest's directory;
/// at least one of `data_file` and `norm_file` must be present, and when
/// both are, the norm file wins as the magnitude source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLayer {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub h_out: usize,
    pub w_out: usize,
    /// On-disk element type of `data_file`; only "f32" is defined.
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_file: Option<String>,
}

impl ManifestLayer {
    pub fn spec(&self) -> Result<LayerSpec> {
        LayerSpec::new(
            self.name.clone(),
            self.c_in,
            self.c_out,
            self.k_h,
            self.k_w,
            self.h_out,
            self.w_out,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub layers: Vec<ManifestLayer>,
}

impl ModelManifest {
    pub fn new(layers: Vec<ManifestLayer>) -> Self {
        ModelManifest {
            format_version: MANIFEST_VERSION,
            layers,
        }
    }
}

/// A manifest entry with everything read off disk: the validated shape,
/// the weights when a data file was given, and the magnitude matrix
/// (loaded, or computed from the weights).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLayer {
    pub spec: LayerSpec,
    pub weights: Option<WeightTensor>,
    pub norms: NormMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub manifest: ModelManifest,
    pub layers: Vec<LoadedLayer>,
}

impl LoadedModel {
    pub fn layer(&self, name: &str) -> Result<&LoadedLayer> {
        self.layers
            .iter()
            .find(|l| l.spec.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no layer named {name:?}")))
    }

    /// Layer views in the shape the configuration search takes.
    pub fn search_input(&self) -> Vec<(&LayerSpec, &NormMatrix)> {
        self.layers.iter().map(|l| (&l.spec, &l.norms)).collect()
    }
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Writes a manifest as pretty-printed JSON.
pub fn write_manifest(path: &Path, manifest: &ModelManifest) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, manifest)
        .map_err(|e| format_err(path, e.to_string()))?;
    use std::io::Write;
    w.write_all(b"\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Parses and validates a manifest, then loads every referenced file.
///
/// Declared dimensions must match what the files contain; mismatches name
/// the offending path and field.
pub fn load_manifest(path: &Path) -> Result<LoadedModel> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let manifest: ModelManifest = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| format_err(path, e.to_string()))?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::FormatVersion {
            found: manifest.format_version,
            supported: MANIFEST_VERSION,
        });
    }

    let mut seen = std::collections::HashSet::new();
    for layer in &manifest.layers {
        if !seen.insert(layer.name.as_str()) {
            return Err(format_err(
                path,
                format!("layer name {:?} appears more than once", layer.name),
            ));
        }
        if layer.data_file.is_none() && layer.norm_file.is_none() {
            return Err(format_err(
                path,
                format!("layer {:?} names neither a data_file nor a norm_file", layer.name),
            ));
        }
        if layer.dtype != "f32" {
            return Err(format_err(
                path,
                format!("layer {:?}: dtype {:?} is not supported (only \"f32\")", layer.name, layer.dtype),
            ));
        }
    }

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        let spec = entry
            .spec()
            .map_err(|e| format_err(path, e.to_string()))?;
        let weights = match &entry.data_file {
            Some(rel) => {
                let file = base.join(rel);
                let w = read_weight_tensor(&file)?;
                let found = (w.c_out(), w.c_in(), w.k_h(), w.k_w());
                let declared = (entry.c_out, entry.c_in, entry.k_h, entry.k_w);
                if found != declared {
                    return Err(format_err(
                        &file,
                        format!(
                            "layer {:?} declares (c_out, c_in, k_h, k_w) = {declared:?} but the file holds {found:?}",
                            entry.name
                        ),
                    ));
                }
                Some(w)
            }
            None => None,
        };
        let norms = match &entry.norm_file {
            Some(rel) => {
                let file = base.join(rel);
                let m = read_norm_csv(&file)?;
                if (m.rows(), m.cols()) != (entry.c_out, entry.c_in) {
                    return Err(format_err(
                        &file,
                        format!(
                            "layer {:?} declares a {}x{} norm matrix but the file holds {}x{}",
                            entry.name,
                            entry.c_out,
                            entry.c_in,
                            m.rows(),
                            m.cols()
                        ),
                    ));
                }
                m
            }
            None => weights
                .as_ref()
                .expect("validated: data_file or norm_file")
                .norm_matrix(),
        };
        layers.push(LoadedLayer {
            spec,
            weights,
            norms,
        });
    }
    Ok(LoadedModel {
        manifest,
        layers,
    })
}
