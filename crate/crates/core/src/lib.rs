//! Source-to-source thread coarsening for a checked OpenCL-C kernel subset,
//! with a deterministic NDRange reference interpreter, a load-store-unit
//! configuration predictor, and a parameterized microbenchmark generator.

pub mod ast;
pub mod coarsen;
#[cfg(test)]
mod coarsen_tests;
pub mod error;
pub mod grid;
pub mod interp;
pub mod lexer;
pub mod lsu;
pub mod metrics;
pub mod parser;
pub mod printer;
pub mod taint;
pub mod types;

pub use ast::{KernelAst, Param, ScalarType};
pub use coarsen::{coarsen, emit_replication, emit_simd, CoarsenConfig, CoarsenKind, TailPolicy};
pub use error::{Diagnostic, SemanticError};
pub use interp::{interpret, BufferData, BufferSet, ExecResult, LaunchConfig, ScalarValue};
pub use parser::parse_kernel;
pub use printer::print_kernel;
pub use taint::{classify_divergence, kernel_divergence, Divergence};
