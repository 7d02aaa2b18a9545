//! Shared fixtures for the criterion benchmarks.

use mirinf_core::{blobs, Activation, Dataset, ModelSpec};

pub fn mlp_spec(d: usize, c: usize) -> ModelSpec {
    ModelSpec::mlp(vec![d, 64, 64], Activation::Tanh, c, 0.001)
}

pub fn logistic_spec(d: usize, c: usize) -> ModelSpec {
    ModelSpec::logistic(d, c, 0.01)
}

pub fn fixture(n: usize, d: usize, c: usize) -> Dataset {
    blobs(n, d, c, 1.0, 42).expect("fixture blobs")
}
