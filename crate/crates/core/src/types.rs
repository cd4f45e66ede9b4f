//! Static typing for the subset.
//!
//! C-style promotion restricted to the three scalar types: `int` and `uint`
//! interconvert freely (bit-preserving), either promotes to `float`, and
//! nothing implicitly narrows from `float`. Comparisons and logical
//! operators yield `int`. `%` is integer-only, and `if`/`for` conditions
//! must be integer-typed.

use std::collections::HashMap;

use crate::ast::*;
use crate::error::SemanticError;

/// Symbol table for one kernel: scalar variables (params, declarations,
/// loop variables) and arrays (pointer params, local arrays).
#[derive(Debug, Clone, Default)]
pub struct SymbolTypes {
    pub scalars: HashMap<String, ScalarType>,
    pub arrays: HashMap<String, ArrayInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayInfo {
    pub elem: ScalarType,
    pub space: AddressSpace,
}

impl SymbolTypes {
    pub fn array(&self, name: &str) -> Result<ArrayInfo, SemanticError> {
        self.arrays
            .get(name)
            .copied()
            .ok_or_else(|| SemanticError::new(format!("`{name}` is not an array")))
    }

    pub fn scalar(&self, name: &str) -> Result<ScalarType, SemanticError> {
        self.scalars
            .get(name)
            .copied()
            .ok_or_else(|| SemanticError::new(format!("`{name}` is not a scalar variable")))
    }
}

fn is_integer(ty: ScalarType) -> bool {
    matches!(ty, ScalarType::Int | ScalarType::Uint)
}

/// Common type of a mixed binary operation.
pub fn promote(a: ScalarType, b: ScalarType) -> ScalarType {
    use ScalarType::*;
    match (a, b) {
        (Float, _) | (_, Float) => Float,
        (Uint, _) | (_, Uint) => Uint,
        _ => Int,
    }
}

/// Whether a value of type `from` may initialize/assign a slot of type `to`.
pub fn assignable(from: ScalarType, to: ScalarType) -> bool {
    use ScalarType::*;
    match (from, to) {
        (a, b) if a == b => true,
        (Int, Uint) | (Uint, Int) => true,
        (Int, Float) | (Uint, Float) => true,
        _ => false,
    }
}

/// Collect every symbol declared anywhere in the kernel.
pub fn collect_symbols(k: &KernelAst) -> SymbolTypes {
    let mut syms = SymbolTypes::default();
    for p in &k.params {
        if p.is_pointer {
            syms.arrays.insert(p.name.clone(), ArrayInfo { elem: p.ty, space: p.addr_space });
        } else {
            syms.scalars.insert(p.name.clone(), p.ty);
        }
    }
    collect_block(&k.body, &mut syms);
    syms
}

fn collect_block(block: &Block, syms: &mut SymbolTypes) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Decl { ty, name, .. } => {
                syms.scalars.insert(name.clone(), *ty);
            }
            Stmt::LocalArray { ty, name, .. } => {
                syms.arrays
                    .insert(name.clone(), ArrayInfo { elem: *ty, space: AddressSpace::Local });
            }
            Stmt::If { then_block, else_block, .. } => {
                collect_block(then_block, syms);
                if let Some(e) = else_block {
                    collect_block(e, syms);
                }
            }
            Stmt::For { init, body, .. } => {
                if let ForInit::Decl { ty, name, .. } = init {
                    syms.scalars.insert(name.clone(), *ty);
                }
                collect_block(body, syms);
            }
            Stmt::Block(b) => collect_block(b, syms),
            Stmt::Assign { .. } | Stmt::Store { .. } | Stmt::Barrier { .. } => {}
        }
    }
}

/// Type of an expression under the kernel's symbol table.
pub fn type_of_expr(e: &Expr, syms: &SymbolTypes) -> Result<ScalarType, SemanticError> {
    match e {
        Expr::IntLit(_) => Ok(ScalarType::Int),
        Expr::UintLit(_) => Ok(ScalarType::Uint),
        Expr::FloatLit(_) => Ok(ScalarType::Float),
        Expr::Var(name) => syms.scalar(name),
        Expr::Load { array, index } => {
            let idx_ty = type_of_expr(index, syms)?;
            if !is_integer(idx_ty) {
                return Err(SemanticError::new(format!("array `{array}` indexed by a float expression")));
            }
            Ok(syms.array(array)?.elem)
        }
        Expr::Unary { op, expr } => {
            let t = type_of_expr(expr, syms)?;
            match op {
                UnOp::Neg => Ok(t),
                UnOp::Not => {
                    if !is_integer(t) {
                        return Err(SemanticError::new("`!` requires an integer operand"));
                    }
                    Ok(ScalarType::Int)
                }
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let lt = type_of_expr(lhs, syms)?;
            let rt = type_of_expr(rhs, syms)?;
            if *op == BinOp::Rem && (!is_integer(lt) || !is_integer(rt)) {
                return Err(SemanticError::new("`%` requires integer operands"));
            }
            if op.is_comparison() {
                return Ok(ScalarType::Int);
            }
            if op.is_logical() {
                if !is_integer(lt) || !is_integer(rt) {
                    return Err(SemanticError::new(format!(
                        "`{}` requires integer operands",
                        op.symbol()
                    )));
                }
                return Ok(ScalarType::Int);
            }
            Ok(promote(lt, rt))
        }
        Expr::WorkItem { .. } => Ok(ScalarType::Int),
        Expr::Math { func, args } => {
            let tys = args.iter().map(|a| type_of_expr(a, syms)).collect::<Result<Vec<_>, _>>()?;
            match func {
                MathFn::Min | MathFn::Max => Ok(promote(tys[0], tys[1])),
                MathFn::Fabs | MathFn::Sqrt => Ok(ScalarType::Float),
            }
        }
    }
}

/// Check every statement; returns the symbol table on success.
pub fn typecheck(k: &KernelAst) -> Result<SymbolTypes, SemanticError> {
    let syms = collect_symbols(k);
    check_block(&k.body, &syms)?;
    Ok(syms)
}

fn require_assignable(value: ScalarType, target: ScalarType, what: &str) -> Result<(), SemanticError> {
    if assignable(value, target) {
        Ok(())
    } else {
        Err(SemanticError::new(format!(
            "cannot assign {} value to {} {what} (no implicit narrowing)",
            value.keyword(),
            target.keyword()
        )))
    }
}

fn check_condition(cond: &Expr, syms: &SymbolTypes) -> Result<(), SemanticError> {
    let t = type_of_expr(cond, syms)?;
    if !is_integer(t) {
        return Err(SemanticError::new("conditions must be integer-typed (use a comparison)"));
    }
    Ok(())
}

fn check_block(block: &Block, syms: &SymbolTypes) -> Result<(), SemanticError> {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Decl { ty, name, init } => {
                let t = type_of_expr(init, syms)?;
                require_assignable(t, *ty, &format!("variable `{name}`"))?;
            }
            Stmt::LocalArray { .. } | Stmt::Barrier { .. } => {}
            Stmt::Assign { name, value } => {
                let target = syms.scalar(name)?;
                let t = type_of_expr(value, syms)?;
                require_assignable(t, target, &format!("variable `{name}`"))?;
            }
            Stmt::Store { array, index, value } => {
                let info = syms.array(array)?;
                if info.space == AddressSpace::Constant {
                    return Err(SemanticError::new(format!("store to __constant pointer `{array}`")));
                }
                let idx_ty = type_of_expr(index, syms)?;
                if !is_integer(idx_ty) {
                    return Err(SemanticError::new(format!("array `{array}` indexed by a float expression")));
                }
                let t = type_of_expr(value, syms)?;
                require_assignable(t, info.elem, &format!("element of `{array}`"))?;
            }
            Stmt::If { cond, then_block, else_block } => {
                check_condition(cond, syms)?;
                check_block(then_block, syms)?;
                if let Some(e) = else_block {
                    check_block(e, syms)?;
                }
            }
            Stmt::For { init, cond, step, body } => {
                match init {
                    ForInit::Decl { ty, name, init } => {
                        let t = type_of_expr(init, syms)?;
                        require_assignable(t, *ty, &format!("loop variable `{name}`"))?;
                    }
                    ForInit::Assign { name, value } => {
                        let target = syms.scalar(name)?;
                        let t = type_of_expr(value, syms)?;
                        require_assignable(t, target, &format!("loop variable `{name}`"))?;
                    }
                }
                check_condition(cond, syms)?;
                match step {
                    ForStep::AddAssign { name, amount } => {
                        let target = syms.scalar(name)?;
                        let t = type_of_expr(amount, syms)?;
                        require_assignable(promote(t, target), target, &format!("loop variable `{name}`"))?;
                    }
                    ForStep::Incr { name } => {
                        let t = syms.scalar(name)?;
                        if t == ScalarType::Float {
                            return Err(SemanticError::new("`++` requires an integer loop variable"));
                        }
                    }
                    ForStep::Assign { name, value } => {
                        let target = syms.scalar(name)?;
                        let t = type_of_expr(value, syms)?;
                        require_assignable(t, target, &format!("loop variable `{name}`"))?;
                    }
                }
                check_block(body, syms)?;
            }
            Stmt::Block(b) => check_block(b, syms)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_kernel;

    #[test]
    fn accepts_well_typed_kernel() {
        let k = parse_kernel(
            "__kernel void k(__global float *a, int N) {
                float x = a[get_global_id(0)];
                float y = x * 2.0f + 1.0f;
                a[0] = y;
            }",
        )
        .unwrap();
        typecheck(&k).unwrap();
    }

    #[test]
    fn int_promotes_to_float() {
        let k = parse_kernel("__kernel void k(int n, __global float *a) { float x = n; a[0] = x + n; }")
            .unwrap();
        typecheck(&k).unwrap();
    }

    #[test]
    fn no_implicit_narrowing() {
        let k = parse_kernel("__kernel void k(__global float *a) { int x = a[0]; }").unwrap();
        let err = typecheck(&k).unwrap_err();
        assert!(err.to_string().contains("narrowing"), "{err}");
    }

    #[test]
    fn rem_is_integer_only() {
        let k = parse_kernel("__kernel void k(__global float *a) { float x = a[0] % 2.0f; a[1] = x; }")
            .unwrap();
        assert!(typecheck(&k).is_err());
    }

    #[test]
    fn float_index_rejected() {
        let k = parse_kernel("__kernel void k(__global float *a) { float x = a[1.0f]; a[0] = x; }")
            .unwrap();
        assert!(typecheck(&k).is_err());
    }
}
