//! Privacy primitives (placeholder).
