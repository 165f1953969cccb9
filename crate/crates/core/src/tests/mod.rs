//! Cross-module suites: independent oracles and property tests.

mod oracles;
mod properties;
