//! Benchmark problems bundled with the crate.

pub const DOUBLE_INTEGRATOR: &str = include_str!("../problems/double_integrator.ocp");
pub const GODDARD: &str = include_str!("../problems/goddard.ocp");
pub const QUADROTOR: &str = include_str!("../problems/quadrotor.ocp");

/// `(name, source)` for every bundled problem.
pub const ALL: [(&str, &str); 3] = [
    ("double_integrator", DOUBLE_INTEGRATOR),
    ("goddard", GODDARD),
    ("quadrotor", QUADROTOR),
];

pub fn by_name(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
