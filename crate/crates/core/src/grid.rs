//! Recognition of the canonical strided grid loop,
//! `for (int gid = get_global_id(0) [* k]; gid < bound; gid += get_global_size(0) [* k])`,
//! which distributes array elements over work-items. Coarsening templates,
//! divergence labelling, and access-pattern analysis all treat this loop
//! specially.

use crate::ast::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLoop {
    pub var: String,
    /// Multiplier already applied to `get_global_id(0)` in the init
    /// (1 for an uncoarsened kernel).
    pub init_factor: i64,
    /// Multiplier on `get_global_size(0)` in the step.
    pub step_factor: i64,
    /// Right-hand side of the `var < bound` condition.
    pub bound: Expr,
}

/// Matches `get_global_id(0)` or `get_global_id(0) * lit [* lit ...]`,
/// returning the accumulated literal factor.
fn id_times_factor(e: &Expr, func: WorkItemFn) -> Option<i64> {
    match e {
        Expr::WorkItem { func: f, dim: 0 } if *f == func => Some(1),
        Expr::Binary { op: BinOp::Mul, lhs, rhs } => {
            if let Expr::IntLit(k) = **rhs {
                id_times_factor(lhs, func).map(|f| f * k)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Try to view a statement as the canonical grid loop.
pub fn as_grid_loop(stmt: &Stmt) -> Option<GridLoop> {
    let Stmt::For { init, cond, step, .. } = stmt else {
        return None;
    };
    let var = init.var_name().to_string();
    let init_factor = id_times_factor(init.init_expr(), WorkItemFn::GlobalId)?;
    let ForStep::AddAssign { name, amount } = step else {
        return None;
    };
    if *name != var {
        return None;
    }
    let step_factor = id_times_factor(amount, WorkItemFn::GlobalSize)?;
    let Expr::Binary { op: BinOp::Lt, lhs, rhs } = cond else {
        return None;
    };
    let Expr::Var(cv) = &**lhs else {
        return None;
    };
    if *cv != var {
        return None;
    }
    Some(GridLoop { var, init_factor, step_factor, bound: (**rhs).clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_kernel;

    #[test]
    fn detects_plain_grid_loop() {
        let k = parse_kernel(
            "__kernel void k(int N, __global float *a) {
                for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
                    a[gid] = 1.0f;
                }
            }",
        )
        .unwrap();
        let g = as_grid_loop(&k.body.stmts[0]).expect("grid loop");
        assert_eq!(g.var, "gid");
        assert_eq!(g.init_factor, 1);
        assert_eq!(g.step_factor, 1);
        assert_eq!(g.bound, Expr::var("N"));
    }

    #[test]
    fn detects_coarsened_grid_loop() {
        let k = parse_kernel(
            "__kernel void k(int N, __global float *a) {
                for (int gid = get_global_id(0) * 2; gid < N; gid += get_global_size(0) * 2) {
                    a[gid] = 1.0f;
                }
            }",
        )
        .unwrap();
        let g = as_grid_loop(&k.body.stmts[0]).expect("grid loop");
        assert_eq!(g.init_factor, 2);
        assert_eq!(g.step_factor, 2);
    }

    #[test]
    fn ordinary_loop_is_not_a_grid_loop() {
        let k = parse_kernel(
            "__kernel void k(__global float *a) {
                for (int i = 0; i < 5; i++) {
                    a[i] = 0.0f;
                }
            }",
        )
        .unwrap();
        assert!(as_grid_loop(&k.body.stmts[0]).is_none());
    }
}
