//! On-disk form of layer exports: a JSON description beside GPT1 tensor
//! files, all inside one directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{GroupedLayerExport, SparseLayerExport};
use crate::io::tensor::{read_tensor_file, read_weight_tensor, write_tensor_file, write_weight_tensor};
use crate::model::Permutation;

pub const EXPORT_VERSION: u32 = 1;

/// File name of the JSON description inside a grouped export directory.
pub const GROUPED_DOC: &str = "grouped.json";
/// File name of the JSON description inside a sparse export directory.
pub const SPARSE_DOC: &str = "sparse.json";

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(doc).map_err(|e| format_err(path, e.to_string()))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, kind: &str) -> Result<T> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| format_err(path, e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| format_err(path, "missing format_version"))?;
    if found != EXPORT_VERSION as u64 {
        return Err(Error::FormatVersion {
            found: found.try_into().unwrap_or(u32::MAX),
            supported: EXPORT_VERSION,
        });
    }
    let declared = value.get("kind").and_then(|v| v.as_str()).unwrap_or("");
    if declared != kind {
        return Err(format_err(
            path,
            format!("this file describes a {declared:?} export, not {kind:?}"),
        ));
    }
    serde_json::from_value(value).map_err(|e| format_err(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// Grouped form
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GroupedDoc {
    format_version: u32,
    kind: String,
    groups: usize,
    block_c_out: usize,
    block_c_in: usize,
    k_h: usize,
    k_w: usize,
    in_perm: Permutation,
    out_perm: Permutation,
    block_files: Vec<String>,
}

/// Writes `grouped.json` plus one GPT1 file per block into `dir`.
pub fn write_grouped_export(dir: &Path, e: &GroupedLayerExport) -> Result<()> {
    let mut block_files = Vec::with_capacity(e.groups());
    for (i, block) in e.blocks().iter().enumerate() {
        let name = format!("block_{i:04}.gpt1");
        write_weight_tensor(&dir.join(&name), block)?;
        block_files.push(name);
    }
    let doc = GroupedDoc {
        format_version: EXPORT_VERSION,
        kind: "grouped".into(),
        groups: e.groups(),
        block_c_out: e.block_c_out(),
        block_c_in: e.block_c_in(),
        k_h: e.k_h(),
        k_w: e.k_w(),
        in_perm: e.in_perm().clone(),
        out_perm: e.out_perm().clone(),
        block_files,
    };
    write_json(&dir.join(GROUPED_DOC), &doc)
}

/// Reads a grouped export back from a directory written by
/// [`write_grouped_export`], revalidating every invariant.
pub fn read_grouped_export(dir: &Path) -> Result<GroupedLayerExport> {
    let doc_path = dir.join(GROUPED_DOC);
    let doc: GroupedDoc = read_json(&doc_path, "grouped")?;
    if doc.block_files.len() != doc.groups {
        return Err(format_err(
            &doc_path,
            format!(
                "{} block files listed for {} groups",
                doc.block_files.len(),
                doc.groups
            ),
        ));
    }
    let blocks = doc
        .block_files
        .iter()
        .map(|name| read_weight_tensor(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    let export = GroupedLayerExport::from_parts(doc.in_perm, doc.out_perm, blocks)?;
    let declared = (doc.block_c_out, doc.block_c_in, doc.k_h, doc.k_w);
    let actual = (
        export.block_c_out(),
        export.block_c_in(),
        export.k_h(),
        export.k_w(),
    );
    if declared != actual {
        return Err(format_err(
            &doc_path,
            format!("declared block shape {declared:?} but the files contain {actual:?}"),
        ));
    }
    Ok(export)
}

// ---------------------------------------------------------------------------
// Sparse form
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SparseDoc {
    format_version: u32,
    kind: String,
    rows: usize,
    cols: usize,
    k_h: usize,
    k_w: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    kernel_file: String,
}

/// Writes `sparse.json` plus the retained kernels as one GPT1 file
/// with dimensions `[kernel count, k_h, k_w]` into `dir`.
pub fn write_sparse_export(dir: &Path, e: &SparseLayerExport) -> Result<()> {
    let kernel_file = "kernels.gpt1".to_string();
    write_tensor_file(
        &dir.join(&kernel_file),
        &[e.nnz(), e.k_h(), e.k_w()],
        e.kernel_values(),
    )?;
    let doc = SparseDoc {
        format_version: EXPORT_VERSION,
        kind: "sparse".into(),
        rows: e.rows(),
        cols: e.cols(),
        k_h: e.k_h(),
        k_w: e.k_w(),
        row_offsets: e.row_offsets().to_vec(),
        col_indices: e.col_indices().to_vec(),
        kernel_file,
    };
    write_json(&dir.join(SPARSE_DOC), &doc)
}

/// Reads a sparse export back from a directory written by
/// [`write_sparse_export`], revalidating every invariant.
pub fn read_sparse_export(dir: &Path) -> Result<SparseLayerExport> {
    let doc_path = dir.join(SPARSE_DOC);
    let doc: SparseDoc = read_json(&doc_path, "sparse")?;
    let kernel_path = dir.join(&doc.kernel_file);
    let (dims, values) = read_tensor_file(&kernel_path)?;
    let expected = [doc.col_indices.len(), doc.k_h, doc.k_w];
    if dims != expected {
        return Err(format_err(
            &kernel_path,
            format!("kernel dimensions {dims:?} do not match the declared {expected:?}"),
        ));
    }
    SparseLayerExport::from_parts(
        doc.rows,
        doc.cols,
        doc.k_h,
        doc.k_w,
        doc.row_offsets,
        doc.col_indices,
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::export::{export_grouped, export_sparse};
    use crate::model::{GroupCount, PermutationPair, WeightTensor};
    use crate::pruner::{prune_mask, solve_layer};
    use tempfile::tempdir;

    // Quarter-steps survive the f32 files unchanged, keeping round trips
    // bit-exact.
    fn quarter_tensor(c_out: usize, c_in: usize, k: usize) -> WeightTensor {
        let n = c_out * c_in * k * k;
        let data = (0..n).map(|i| (i % 64) as f64 * 0.25 - 4.0).collect();
        WeightTensor::new(c_out, c_in, k, k, data).unwrap()
    }

    fn solved_perms(w: &WeightTensor, groups: GroupCount) -> PermutationPair {
        let sol = solve_layer(&w.norm_matrix(), groups, &Default::default()).unwrap();
        sol.perms
    }

    #[test]
    fn a_grouped_export_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let w = quarter_tensor(8, 8, 3);
        let groups = GroupCount::new(4).unwrap();
        let e = export_grouped(&w, &solved_perms(&w, groups), groups).unwrap();
        write_grouped_export(dir.path(), &e).unwrap();
        let back = read_grouped_export(dir.path()).unwrap();
        assert_eq!(back, e);
        assert_eq!(
            std::fs::read_dir(dir.path()).unwrap().count(),
            5,
            "four block files plus the description"
        );
    }

    #[test]
    fn a_sparse_export_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let w = quarter_tensor(6, 6, 1);
        let groups = GroupCount::new(3).unwrap();
        let perms = solved_perms(&w, groups);
        let mask = prune_mask(6, 6, groups, &perms).unwrap();
        let e = export_sparse(&w, &mask, true).unwrap();
        write_sparse_export(dir.path(), &e).unwrap();
        assert_eq!(read_sparse_export(dir.path()).unwrap(), e);
    }

    #[test]
    fn kind_and_version_mismatches_are_refused() {
        let dir = tempdir().unwrap();
        let w = quarter_tensor(4, 4, 1);
        let groups = GroupCount::new(2).unwrap();
        let e = export_grouped(&w, &solved_perms(&w, groups), groups).unwrap();
        write_grouped_export(dir.path(), &e).unwrap();

        // A grouped description is refused by the sparse reader even when
        // it sits under the sparse file name.
        std::fs::copy(dir.path().join(GROUPED_DOC), dir.path().join(SPARSE_DOC)).unwrap();
        let err = read_sparse_export(dir.path()).unwrap_err();
        assert!(err.to_string().contains("grouped"));

        let doc = dir.path().join(GROUPED_DOC);
        let text = std::fs::read_to_string(&doc).unwrap();
        std::fs::write(&doc, text.replace("\"format_version\": 1", "\"format_version\": 3")).unwrap();
        assert!(matches!(
            read_grouped_export(dir.path()),
            Err(Error::FormatVersion { found: 3, .. })
        ));
    }

    #[test]
    fn tampered_block_shapes_are_caught() {
        let dir = tempdir().unwrap();
        let w = quarter_tensor(4, 4, 1);
        let groups = GroupCount::new(2).unwrap();
        let e = export_grouped(&w, &solved_perms(&w, groups), groups).unwrap();
        write_grouped_export(dir.path(), &e).unwrap();
        // Overwrite one block with a file of the wrong shape.
        let other = quarter_tensor(3, 2, 1);
        write_weight_tensor(&dir.path().join("block_0001.gpt1"), &other).unwrap();
        assert!(read_grouped_export(dir.path()).is_err());
    }
}
