//! Explicit-state model checking workbench: values, specification language,
//! checker, profiler, wire protocol and trace exploration.

pub mod kernel;
pub mod lang;
pub mod engine;
pub mod profiler;
pub mod wire;
pub mod traceexp;
