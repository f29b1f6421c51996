//! Experiment pipelines (placeholder).
