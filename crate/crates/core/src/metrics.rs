//! Static instruction-mix accounting.
//!
//! Counts the quantities that define arithmetic intensity: memory
//! instructions (array loads and stores, wherever they occur) and the
//! floating-point dataflow operators `+ - * /` feeding float-typed values.
//! Integer bookkeeping — loop headers, lane-index declarations, subscripts,
//! branch conditions — is addressing and control overhead, not arithmetic
//! work, and is excluded.

use crate::ast::*;
use crate::types::{collect_symbols, SymbolTypes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InstrMix {
    pub loads: usize,
    pub stores: usize,
    pub arith: usize,
}

impl InstrMix {
    pub fn memory_ops(&self) -> usize {
        self.loads + self.stores
    }

    /// Exact integer arithmetic intensity, when it divides evenly.
    pub fn exact_intensity(&self) -> Option<usize> {
        let mem = self.memory_ops();
        if mem == 0 || self.arith % mem != 0 {
            None
        } else {
            Some(self.arith / mem)
        }
    }
}

/// Count loads, stores, and float arithmetic over a whole kernel.
pub fn instruction_mix(k: &KernelAst) -> InstrMix {
    let syms = collect_symbols(k);
    let mut mix = InstrMix::default();
    mix_block(&k.body, &syms, &mut mix);
    mix
}

fn count_loads(e: &Expr, mix: &mut InstrMix) {
    e.walk(&mut |n| {
        if matches!(n, Expr::Load { .. }) {
            mix.loads += 1;
        }
    });
}

/// Float arithmetic operators in a value expression. Does not descend into
/// subscripts: index math is addressing, not dataflow.
fn count_arith(e: &Expr, mix: &mut InstrMix) {
    match e {
        Expr::Binary { op, lhs, rhs } => {
            if op.is_arith() {
                mix.arith += 1;
            }
            count_arith(lhs, mix);
            count_arith(rhs, mix);
        }
        Expr::Unary { expr, .. } => count_arith(expr, mix),
        Expr::Math { args, .. } => {
            for a in args {
                count_arith(a, mix);
            }
        }
        Expr::Load { .. }
        | Expr::IntLit(_)
        | Expr::UintLit(_)
        | Expr::FloatLit(_)
        | Expr::Var(_)
        | Expr::WorkItem { .. } => {}
    }
}

fn float_target(syms: &SymbolTypes, ty: ScalarType) -> bool {
    let _ = syms;
    ty == ScalarType::Float
}

fn mix_block(block: &Block, syms: &SymbolTypes, mix: &mut InstrMix) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Decl { ty, init, .. } => {
                count_loads(init, mix);
                if float_target(syms, *ty) {
                    count_arith(init, mix);
                }
            }
            Stmt::Assign { name, value } => {
                count_loads(value, mix);
                if syms.scalars.get(name).copied() == Some(ScalarType::Float) {
                    count_arith(value, mix);
                }
            }
            Stmt::Store { array, index, value } => {
                mix.stores += 1;
                count_loads(index, mix);
                count_loads(value, mix);
                if syms.arrays.get(array).map(|a| a.elem) == Some(ScalarType::Float) {
                    count_arith(value, mix);
                }
            }
            Stmt::If { cond, then_block, else_block } => {
                count_loads(cond, mix);
                mix_block(then_block, syms, mix);
                if let Some(e) = else_block {
                    mix_block(e, syms, mix);
                }
            }
            Stmt::For { init, cond, step, body } => {
                count_loads(init.init_expr(), mix);
                count_loads(cond, mix);
                match step {
                    ForStep::AddAssign { amount, .. } => count_loads(amount, mix),
                    ForStep::Assign { value, .. } => count_loads(value, mix),
                    ForStep::Incr { .. } => {}
                }
                mix_block(body, syms, mix);
            }
            Stmt::Block(b) => mix_block(b, syms, mix),
            Stmt::LocalArray { .. } | Stmt::Barrier { .. } => {}
        }
    }
}

/// Barrier statements in the body.
pub fn barrier_count(k: &KernelAst) -> usize {
    fn walk(block: &Block, n: &mut usize) {
        for stmt in &block.stmts {
            match stmt {
                Stmt::Barrier { .. } => *n += 1,
                Stmt::If { then_block, else_block, .. } => {
                    walk(then_block, n);
                    if let Some(e) = else_block {
                        walk(e, n);
                    }
                }
                Stmt::For { body, .. } => walk(body, n),
                Stmt::Block(b) => walk(b, n),
                _ => {}
            }
        }
    }
    let mut n = 0;
    walk(&k.body, &mut n);
    n
}
