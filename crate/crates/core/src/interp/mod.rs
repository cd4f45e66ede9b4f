//! Deterministic NDRange reference interpreter.
//!
//! Kernels compile to a small register bytecode once, then execute per
//! work-item. Work-groups run to completion one after another; inside a
//! group, execution is split into barrier-delimited phases: every work-item
//! runs (in ascending id order) until the next barrier, then the group
//! advances together. Float arithmetic is 32-bit IEEE with the operation
//! order the source dictates, so equal kernels produce bit-equal results.
//!
//! The interpreter checks, rather than assumes, the properties transforms
//! rely on: out-of-bounds accesses, integer division by zero, conflicting
//! writes to one global element, and barrier divergence are runtime errors.

mod compile;
#[cfg(test)]
mod tests;
mod vm;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ast::{KernelAst, ScalarType};
use crate::error::SemanticError;

pub use compile::CompiledKernel;

/// 1-D launch geometry. The local size must divide the global size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaunchConfig {
    pub global_size: u32,
    pub local_size: u32,
}

impl LaunchConfig {
    /// Default local size: min(global, 256).
    pub fn new(global_size: u32) -> Self {
        LaunchConfig { global_size, local_size: global_size.min(256) }
    }

    pub fn with_local(global_size: u32, local_size: u32) -> Self {
        LaunchConfig { global_size, local_size }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if self.global_size == 0 || self.local_size == 0 {
            return Err(ExecError::BadLaunch("global and local sizes must be positive".into()));
        }
        if self.global_size % self.local_size != 0 {
            return Err(ExecError::BadLaunch(format!(
                "local size {} does not divide global size {}",
                self.local_size, self.global_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarValue {
    Int(i32),
    Uint(u32),
    Float(f32),
}

impl ScalarValue {
    pub fn ty(&self) -> ScalarType {
        match self {
            ScalarValue::Int(_) => ScalarType::Int,
            ScalarValue::Uint(_) => ScalarType::Uint,
            ScalarValue::Float(_) => ScalarType::Float,
        }
    }

    pub(crate) fn bits(&self) -> u32 {
        match self {
            ScalarValue::Int(v) => *v as u32,
            ScalarValue::Uint(v) => *v,
            ScalarValue::Float(v) => v.to_bits(),
        }
    }
}

/// Contents of one global buffer.
#[derive(Debug, Clone, PartialEq)]
pub enum BufferData {
    Int(Vec<i32>),
    Uint(Vec<u32>),
    Float(Vec<f32>),
}

impl BufferData {
    pub fn ty(&self) -> ScalarType {
        match self {
            BufferData::Int(_) => ScalarType::Int,
            BufferData::Uint(_) => ScalarType::Uint,
            BufferData::Float(_) => ScalarType::Float,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BufferData::Int(v) => v.len(),
            BufferData::Uint(v) => v.len(),
            BufferData::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn to_bits(&self) -> Vec<u32> {
        match self {
            BufferData::Int(v) => v.iter().map(|x| *x as u32).collect(),
            BufferData::Uint(v) => v.clone(),
            BufferData::Float(v) => v.iter().map(|x| x.to_bits()).collect(),
        }
    }

    pub(crate) fn from_bits(ty: ScalarType, bits: Vec<u32>) -> BufferData {
        match ty {
            ScalarType::Int => BufferData::Int(bits.into_iter().map(|b| b as i32).collect()),
            ScalarType::Uint => BufferData::Uint(bits),
            ScalarType::Float => BufferData::Float(bits.into_iter().map(f32::from_bits).collect()),
        }
    }
}

/// All inputs to one launch: a buffer per pointer parameter, a value per
/// scalar parameter, and element counts for `__local` pointer parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BufferSet {
    pub buffers: BTreeMap<String, BufferData>,
    pub scalars: BTreeMap<String, ScalarValue>,
    /// Per-work-group lengths for `__local` pointer parameters.
    pub local_lens: BTreeMap<String, usize>,
}

impl BufferSet {
    pub fn buffer(&self, name: &str) -> Option<&BufferData> {
        self.buffers.get(name)
    }

    pub fn insert_buffer(&mut self, name: &str, data: BufferData) {
        self.buffers.insert(name.to_string(), data);
    }

    pub fn insert_scalar(&mut self, name: &str, value: ScalarValue) {
        self.scalars.insert(name.to_string(), value);
    }
}

/// Exact dynamic counts for one launch. Loads/stores count global-memory
/// traffic; arithmetic counts executed float `+ - * /` (and float math
/// builtins); barriers counts work-item crossings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub loads: u64,
    pub stores: u64,
    pub arith_ops: u64,
    pub barriers: u64,
}

/// Result of a completed launch: final global buffers plus statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecResult {
    pub buffers: BufferSet,
    pub stats: ExecStats,
}

/// Order in which work-groups are processed. Results must not depend on it;
/// the reverse order exists so tests can assert that.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GroupOrder {
    #[default]
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Error)]
pub enum ExecError {
    #[error("invalid launch configuration: {0}")]
    BadLaunch(String),
    #[error("buffer binding error: {0}")]
    BadBinding(String),
    #[error("kernel does not compile for execution: {0}")]
    Compile(#[from] SemanticError),
    #[error("work-item {item}: index {index} out of bounds for `{pointer}` (length {len})")]
    OutOfBounds { item: u64, pointer: String, index: i64, len: usize },
    #[error("work-item {item}: integer division or remainder by zero")]
    DivisionByZero { item: u64 },
    #[error(
        "data race on `{pointer}`[{index}]: work-items {first} and {second} both store to it without an intervening barrier"
    )]
    DataRace { pointer: String, index: usize, first: u64, second: u64 },
    #[error("barrier divergence in work-group {group}: {detail}")]
    BarrierDivergence { group: u64, detail: String },
}

/// Run one kernel over an NDRange. Compiles internally; callers doing many
/// launches of one kernel should compile once via [`CompiledKernel::compile`]
/// and call [`CompiledKernel::run`].
pub fn interpret(
    kernel: &KernelAst,
    launch: LaunchConfig,
    buffers: &BufferSet,
) -> Result<ExecResult, ExecError> {
    let compiled = CompiledKernel::compile(kernel)?;
    compiled.run(launch, buffers)
}

/// As [`interpret`], with explicit work-group processing order.
pub fn interpret_ordered(
    kernel: &KernelAst,
    launch: LaunchConfig,
    buffers: &BufferSet,
    order: GroupOrder,
) -> Result<ExecResult, ExecError> {
    let compiled = CompiledKernel::compile(kernel)?;
    compiled.run_ordered(launch, buffers, order)
}
