//! Files bundled with the crate.

/// Injection intensity histograms fitted from the default synthetic scenario.
pub const DEFAULT_INJECTION: &str = include_str!("../assets/injection_default.csv");

/// Eight vehicles, a two-hour storm, radar with a miss region and lognormal noise.
pub const DEFAULT_SCENARIO: &str = include_str!("../assets/default.scn");

/// A small, fast scenario for smoke tests.
pub const SMALL_SCENARIO: &str = include_str!("../assets/small.scn");
