//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use stagewise::pipeline::{DataConfig, PipelineConfig};

/// A run small enough to finish in a couple of seconds: two teachers, two
/// student stages, tiny corpora and networks.
pub fn tiny(run_id: &str) -> PipelineConfig {
    let mut c = PipelineConfig {
        run_id: run_id.into(),
        seed: 3,
        max_stages: 2,
        ..Default::default()
    };
    c.data = DataConfig {
        letters: 5,
        feature_dim: 6,
        lexicon_size: 12,
        source_train: 24,
        source_valid: 6,
        target_train: 16,
        target_test: 8,
        ..Default::default()
    };
    c.teachers.truncate(2);
    for m in [&mut c.teacher_model, &mut c.student_model] {
        m.hidden_dims = vec![12];
    }
    for t in [&mut c.teacher_train, &mut c.student_train] {
        t.epochs = 4;
        t.learning_rate = 0.3;
    }
    c.decode.beam_width = 6;
    c.decode.alpha_grid = vec![0.0, 0.5];
    c.decode.beta_grid = vec![0.0, 1.0];
    c
}

/// The flagship configuration shipped with the repository.
pub fn flagship() -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/flagship.toml");
    PipelineConfig::load(&path).expect("flagship config parses")
}

/// Every file under `dir`, keyed by relative path, with its bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Word-level Levenshtein distance by the textbook full-table recurrence.
pub fn edit_distance(a: &[&str], b: &[&str]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}
