//! Selection (placeholder).
