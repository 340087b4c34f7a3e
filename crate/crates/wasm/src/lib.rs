//! Browser bindings (to be filled in).
