//! Testkit (placeholder).
