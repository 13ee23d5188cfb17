//! Trainer (placeholder).
