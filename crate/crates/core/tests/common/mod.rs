#![allow(dead_code)]

use std::path::PathBuf;

use qmatrix_core::QMatrix;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn expert_q() -> QMatrix {
    QMatrix::parse_csv(&read_fixture("expert_q.csv")).unwrap()
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
