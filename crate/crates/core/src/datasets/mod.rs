//! Manifests, the published dataset registry, grouping and synthetic fixtures.

mod group;
mod manifest;
mod registry;
mod synth;

pub use group::{group, DatasetGroup, GroupId};
pub use manifest::{load_manifest, parse_manifest, DatasetManifest, SplitCounts, MANIFEST_HEADER};
pub use registry::{
    audit_splits, expected_registry, registry_manifest, AuditReport, AuditRow, CountDelta,
};
pub use synth::{
    generate_scan, lesions_for_scan, modality_for_scan, synth_fixture, SplitPolicy, SynthScan,
    SynthSpec, SYNTH_MANIFEST_NAME,
};
