//! Work-item divergence classification by taint propagation.
//!
//! Two taint sources: work-item identity builtins (direct taint) and values
//! loaded from memory (indirect taint). A branch condition is labelled by
//! the strongest taint reaching it, with indirect dominating direct.
//! Propagation is explicit-flow only: taint moves through declarations,
//! assignments, and operator dataflow, not through control dependence.

use std::collections::HashMap;

use crate::ast::*;
use crate::grid::as_grid_loop;
use crate::printer::print_expr;

/// Divergence class of a branch condition. Ordered so `max` is the join:
/// indirect divergence dominates direct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    None,
    Direct,
    Indirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    If,
    For,
}

/// Label for one control-flow condition, in pre-order over the body.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BranchLabel {
    pub kind: BranchKind,
    /// Canonical text of the condition, for reports and error messages.
    pub condition: String,
    pub divergence: Divergence,
    /// True for the canonical strided grid loop. Its condition is id-derived
    /// by construction; consumers that care about divergence introduced by
    /// the kernel's logic skip it.
    pub is_grid_loop: bool,
}

/// Variable taint environment, iterated to a fixpoint so loop-carried
/// assignments converge.
pub fn variable_taints(k: &KernelAst) -> HashMap<String, Divergence> {
    let mut env: HashMap<String, Divergence> = HashMap::new();
    loop {
        let mut changed = false;
        taint_block(&k.body, &mut env, &mut changed);
        if !changed {
            return env;
        }
    }
}

fn join_var(env: &mut HashMap<String, Divergence>, name: &str, d: Divergence, changed: &mut bool) {
    let cur = env.get(name).copied().unwrap_or(Divergence::None);
    let joined = cur.max(d);
    if joined != cur {
        env.insert(name.to_string(), joined);
        *changed = true;
    }
}

fn taint_block(block: &Block, env: &mut HashMap<String, Divergence>, changed: &mut bool) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Decl { name, init, .. } => {
                let d = expr_taint(init, env);
                join_var(env, name, d, changed);
            }
            Stmt::Assign { name, value } => {
                let d = expr_taint(value, env);
                join_var(env, name, d, changed);
            }
            Stmt::If { then_block, else_block, .. } => {
                taint_block(then_block, env, changed);
                if let Some(e) = else_block {
                    taint_block(e, env, changed);
                }
            }
            Stmt::For { init, step, body, .. } => {
                match init {
                    ForInit::Decl { name, init, .. } => {
                        let d = expr_taint(init, env);
                        join_var(env, name, d, changed);
                    }
                    ForInit::Assign { name, value } => {
                        let d = expr_taint(value, env);
                        join_var(env, name, d, changed);
                    }
                }
                match step {
                    ForStep::AddAssign { name, amount } => {
                        let d = expr_taint(amount, env);
                        join_var(env, name, d, changed);
                    }
                    ForStep::Incr { .. } => {}
                    ForStep::Assign { name, value } => {
                        let d = expr_taint(value, env);
                        join_var(env, name, d, changed);
                    }
                }
                taint_block(body, env, changed);
            }
            Stmt::Block(b) => taint_block(b, env, changed),
            Stmt::Store { .. } | Stmt::LocalArray { .. } | Stmt::Barrier { .. } => {}
        }
    }
}

/// Taint of an expression's value under a variable environment. A load is
/// indirect taint regardless of how its address was formed; the source of a
/// value, not its address, is what the direct/indirect split distinguishes.
pub fn expr_taint(e: &Expr, env: &HashMap<String, Divergence>) -> Divergence {
    match e {
        Expr::IntLit(_) | Expr::UintLit(_) | Expr::FloatLit(_) => Divergence::None,
        Expr::Var(name) => env.get(name).copied().unwrap_or(Divergence::None),
        Expr::Load { .. } => Divergence::Indirect,
        Expr::Unary { expr, .. } => expr_taint(expr, env),
        Expr::Binary { lhs, rhs, .. } => expr_taint(lhs, env).max(expr_taint(rhs, env)),
        Expr::WorkItem { func, .. } => {
            if func.varies_per_item() {
                Divergence::Direct
            } else {
                Divergence::None
            }
        }
        Expr::Math { args, .. } => {
            args.iter().map(|a| expr_taint(a, env)).max().unwrap_or(Divergence::None)
        }
    }
}

/// Label every `if` and `for` condition in the kernel.
pub fn classify_divergence(k: &KernelAst) -> Vec<BranchLabel> {
    let env = variable_taints(k);
    let mut labels = Vec::new();
    label_block(&k.body, &env, &mut labels);
    labels
}

fn label_block(block: &Block, env: &HashMap<String, Divergence>, out: &mut Vec<BranchLabel>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::If { cond, then_block, else_block } => {
                out.push(BranchLabel {
                    kind: BranchKind::If,
                    condition: print_expr(cond),
                    divergence: expr_taint(cond, env),
                    is_grid_loop: false,
                });
                label_block(then_block, env, out);
                if let Some(e) = else_block {
                    label_block(e, env, out);
                }
            }
            Stmt::For { cond, body, .. } => {
                out.push(BranchLabel {
                    kind: BranchKind::For,
                    condition: print_expr(cond),
                    divergence: expr_taint(cond, env),
                    is_grid_loop: as_grid_loop(stmt).is_some(),
                });
                label_block(body, env, out);
            }
            Stmt::Block(b) => label_block(b, env, out),
            _ => {}
        }
    }
}

/// Strongest divergence introduced by the kernel's own control flow,
/// ignoring the canonical grid loop.
pub fn kernel_divergence(k: &KernelAst) -> Divergence {
    classify_divergence(k)
        .into_iter()
        .filter(|l| !l.is_grid_loop)
        .map(|l| l.divergence)
        .max()
        .unwrap_or(Divergence::None)
}

/// Conditions of `if` statements that carry direct (work-item-id) taint;
/// these are what block SIMD vectorization.
pub fn id_dependent_if_conditions(k: &KernelAst) -> Vec<String> {
    classify_divergence(k)
        .into_iter()
        .filter(|l| l.kind == BranchKind::If && l.divergence == Divergence::Direct)
        .map(|l| l.condition)
        .collect()
}
