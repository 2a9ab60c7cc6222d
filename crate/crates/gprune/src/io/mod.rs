//! File formats: the binary tensor container, the headered norm-matrix
//! CSV, JSON model manifests, export directories, and versioned JSON run
//! reports.

pub mod exports;
pub mod manifest;
pub mod report;
pub mod tensor;

pub use exports::{
    read_grouped_export, read_sparse_export, write_grouped_export, write_sparse_export,
    EXPORT_VERSION,
};
pub use manifest::{
    load_manifest, write_manifest, LoadedLayer, LoadedModel, ManifestLayer, ModelManifest,
    MANIFEST_VERSION,
};
pub use report::{
    read_report, report_to_string, write_report, write_sweep_csv, AdversarialReport, ConfigTotals,
    LayerResult, RunReport, SolutionReport, VerifyReport, REPORT_VERSION,
};
pub use tensor::{
    read_norm_csv, read_tensor_file, read_weight_tensor, write_norm_csv, write_tensor_file,
    write_weight_tensor, TENSOR_MAGIC,
};
