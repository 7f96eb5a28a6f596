#![allow(dead_code)]

use std::path::{Path, PathBuf};

use activelo::manifest::{LoadedManifest, Manifest, ManifestEntry};
use activelo_core::synth::{Segment, SynthSpec};
use activelo_core::{SequenceRecord, Weather};

pub const CLUTTER: f64 = 0.4;

/// Short drives at distinct moderate speeds; the second half bends gently.
pub fn drive(speed: f64, length: f64, clutter: f64) -> SynthSpec {
    let mut spec = SynthSpec::new(vec![Segment::new(length, speed, 0.0), Segment::new(length, speed, 0.25)], 10.0);
    spec.clutter_fraction = clutter;
    spec.structure_spacing = 1.0;
    if clutter > 0.0 {
        spec.weather = Weather::Snowy;
    }
    spec
}

/// `n_clean` general-weather entries `c00..` followed by `n_clutter` snowy
/// ones `x00..`, speeds rising from 3 m/s within each group.
pub fn mixed_manifest(n_clean: usize, n_clutter: usize, length: f64, seed: u64) -> Manifest {
    let mut sequences = Vec::new();
    for i in 0..n_clean {
        let spec = drive(3.0 + 0.4 * i as f64, length, 0.0);
        sequences.push(ManifestEntry::synthetic(format!("c{i:02}"), spec, seed * 1000 + i as u64));
    }
    for i in 0..n_clutter {
        let spec = drive(3.0 + 0.4 * i as f64, length, CLUTTER);
        sequences.push(ManifestEntry::synthetic(format!("x{i:02}"), spec, seed * 1000 + 500 + i as u64));
    }
    Manifest {
        frame_rate: None,
        sequences,
    }
}

pub fn mixed_pool(n_clean: usize, n_clutter: usize, length: f64, seed: u64) -> Vec<SequenceRecord> {
    LoadedManifest::from_manifest(mixed_manifest(n_clean, n_clutter, length, seed), ".")
        .unwrap()
        .build_pool(64)
        .unwrap()
        .sequences
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> PathBuf {
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(manifest).unwrap()).unwrap();
    path
}
