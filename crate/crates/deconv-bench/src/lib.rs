//! Intentionally empty: this crate only exists to host criterion benches.
