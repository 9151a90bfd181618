//! Holds the `acceptance` test target, which runs the long Monte Carlo
//! acceptance criteria against `efa-lrt`. See `tests/acceptance.rs`.
