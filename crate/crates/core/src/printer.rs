//! Canonical pretty-printer.
//!
//! One statement per line, four-space indent, explicit braces, minimal
//! parentheses. Identical ASTs print byte-identically, and
//! `parse(print(k)) == k` for every valid kernel.

use crate::ast::*;

/// Render a kernel as canonical OpenCL-C source text.
pub fn print_kernel(k: &KernelAst) -> String {
    let mut out = String::new();
    for line in &k.header_comments {
        if line.is_empty() {
            out.push_str("//\n");
        } else {
            out.push_str("// ");
            out.push_str(line);
            out.push('\n');
        }
    }
    if let Some(lanes) = k.attrs.simd_lanes {
        out.push_str(&format!("__attribute__((num_simd_work_items({lanes})))\n"));
    }
    if let Some(units) = k.attrs.compute_units {
        out.push_str(&format!("__attribute__((num_compute_units({units})))\n"));
    }
    out.push_str("__kernel void ");
    out.push_str(&k.name);
    out.push('(');
    for (i, p) in k.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&print_param(p));
    }
    out.push_str(") {\n");
    print_block_inner(&k.body, 1, &mut out);
    out.push_str("}\n");
    out
}

fn print_param(p: &Param) -> String {
    if p.is_pointer {
        format!("{} {} *{}", p.addr_space.qualifier(), p.ty.keyword(), p.name)
    } else {
        format!("{} {}", p.ty.keyword(), p.name)
    }
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn print_block_inner(block: &Block, level: usize, out: &mut String) {
    for stmt in &block.stmts {
        print_stmt(stmt, level, out);
    }
}

fn print_stmt(stmt: &Stmt, level: usize, out: &mut String) {
    match stmt {
        Stmt::Decl { ty, name, init } => {
            indent(level, out);
            out.push_str(&format!("{} {} = {};\n", ty.keyword(), name, print_expr(init)));
        }
        Stmt::LocalArray { ty, name, len } => {
            indent(level, out);
            out.push_str(&format!("__local {} {}[{}];\n", ty.keyword(), name, len));
        }
        Stmt::Assign { name, value } => {
            indent(level, out);
            out.push_str(&format!("{} = {};\n", name, print_expr(value)));
        }
        Stmt::Store { array, index, value } => {
            indent(level, out);
            out.push_str(&format!("{}[{}] = {};\n", array, print_expr(index), print_expr(value)));
        }
        Stmt::If { .. } => {
            indent(level, out);
            print_if_chain(stmt, level, out);
        }
        Stmt::For { init, cond, step, body } => {
            indent(level, out);
            let init_s = match init {
                ForInit::Decl { ty, name, init } => {
                    format!("{} {} = {}", ty.keyword(), name, print_expr(init))
                }
                ForInit::Assign { name, value } => format!("{} = {}", name, print_expr(value)),
            };
            let step_s = match step {
                ForStep::AddAssign { name, amount } => format!("{} += {}", name, print_expr(amount)),
                ForStep::Incr { name } => format!("{name}++"),
                ForStep::Assign { name, value } => format!("{} = {}", name, print_expr(value)),
            };
            out.push_str(&format!("for ({}; {}; {}) {{\n", init_s, print_expr(cond), step_s));
            print_block_inner(body, level + 1, out);
            indent(level, out);
            out.push_str("}\n");
        }
        Stmt::Barrier { fence } => {
            indent(level, out);
            let flags = match (fence.local, fence.global) {
                (false, false) => String::new(),
                (true, false) => "CLK_LOCAL_MEM_FENCE".to_string(),
                (false, true) => "CLK_GLOBAL_MEM_FENCE".to_string(),
                (true, true) => "CLK_LOCAL_MEM_FENCE | CLK_GLOBAL_MEM_FENCE".to_string(),
            };
            out.push_str(&format!("barrier({flags});\n"));
        }
        Stmt::Block(b) => {
            indent(level, out);
            out.push_str("{\n");
            print_block_inner(b, level + 1, out);
            indent(level, out);
            out.push_str("}\n");
        }
    }
}

/// Prints `if`/`else if`/`else` chains flat, the way they were written.
/// An else-block holding exactly one `if` continues the chain.
fn print_if_chain(stmt: &Stmt, level: usize, out: &mut String) {
    let Stmt::If { cond, then_block, else_block } = stmt else { unreachable!() };
    out.push_str(&format!("if ({}) {{\n", print_expr(cond)));
    print_block_inner(then_block, level + 1, out);
    indent(level, out);
    out.push('}');
    match else_block {
        None => out.push('\n'),
        Some(eb) => {
            if eb.stmts.len() == 1 {
                if let Stmt::If { .. } = &eb.stmts[0] {
                    out.push_str(" else ");
                    print_if_chain(&eb.stmts[0], level, out);
                    return;
                }
            }
            out.push_str(" else {\n");
            print_block_inner(eb, level + 1, out);
            indent(level, out);
            out.push_str("}\n");
        }
    }
}

fn precedence(op: BinOp) -> u8 {
    match op {
        BinOp::Mul | BinOp::Div | BinOp::Rem => 5,
        BinOp::Add | BinOp::Sub => 4,
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
        BinOp::Eq | BinOp::Ne => 2,
        BinOp::And => 1,
        BinOp::Or => 0,
    }
}

fn expr_precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => precedence(*op),
        Expr::Unary { .. } => 6,
        _ => 7,
    }
}

/// Render one expression with minimal parentheses.
pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::IntLit(v) => v.to_string(),
        Expr::UintLit(v) => format!("{v}u"),
        Expr::FloatLit(FloatLit(v)) => format!("{v:?}f"),
        Expr::Var(name) => name.clone(),
        Expr::Load { array, index } => format!("{}[{}]", array, print_expr(index)),
        Expr::Unary { op, expr } => {
            let sym = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            };
            let inner = print_expr(expr);
            if expr_precedence(expr) < 6 || inner.starts_with('-') {
                format!("{sym}({inner})")
            } else {
                format!("{sym}{inner}")
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let prec = precedence(*op);
            let ls = if expr_precedence(lhs) < prec {
                format!("({})", print_expr(lhs))
            } else {
                print_expr(lhs)
            };
            // Equal-precedence right children keep parens so the printed
            // form re-parses to the same (left-associated) tree.
            let rs = if expr_precedence(rhs) <= prec {
                format!("({})", print_expr(rhs))
            } else {
                print_expr(rhs)
            };
            format!("{} {} {}", ls, op.symbol(), rs)
        }
        Expr::WorkItem { func, dim } => format!("{}({})", func.name(), dim),
        Expr::Math { func, args } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            format!("{}({})", func.name(), args.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_kernel;

    fn roundtrip(src: &str) {
        let k1 = parse_kernel(src).unwrap();
        let printed = print_kernel(&k1);
        let k2 = parse_kernel(&printed).unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
        assert_eq!(k1, k2, "round-trip mismatch:\n{printed}");
        // And printing is a fixed point.
        assert_eq!(printed, print_kernel(&k2));
    }

    #[test]
    fn roundtrip_multiplication() {
        roundtrip(
            "__kernel void multiplication(__global float *in0, __global float *in1, int N, __global float *out0) {
                for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
                    float r0 = in1[gid];
                    float r1 = in0[gid];
                    float r2 = r1 * r0;
                    out0[gid] = r2;
                }
            }",
        );
    }

    #[test]
    fn roundtrip_control_flow() {
        roundtrip(
            "__kernel void k(__global int *input, __global float *out0, int N) {
                float acc = 0.0f;
                for (int i0 = 0; i0 < 5; i0++) {
                    if (input[get_global_id(0)] % 2 == 0) {
                        acc = acc + 1.0f;
                    } else if (input[get_global_id(0)] % 3 == 0) {
                        acc = acc - 2.0f;
                    } else {
                        acc = acc * 0.5f;
                    }
                }
                out0[get_global_id(0)] = acc;
            }",
        );
    }

    #[test]
    fn roundtrip_barrier_and_local() {
        roundtrip(
            "__kernel void k(__global float *a, __global float *b) {
                __local float tile[64];
                tile[get_local_id(0)] = a[get_global_id(0)];
                barrier(CLK_LOCAL_MEM_FENCE);
                b[get_global_id(0)] = tile[get_local_id(0)];
            }",
        );
    }

    #[test]
    fn parens_preserve_structure() {
        let src = "__kernel void k(int a, int b, int c, __global float *o) {
            int x = a - (b - c);
            int y = (a + b) * c;
            int z = a * (b + c) / (a - b);
            o[0] = 1.0f;
        }";
        roundtrip(src);
        let k = parse_kernel(src).unwrap();
        let printed = print_kernel(&k);
        assert!(printed.contains("a - (b - c)"), "{printed}");
        assert!(printed.contains("(a + b) * c"), "{printed}");
    }

    #[test]
    fn negative_literals_print_and_reparse() {
        roundtrip("__kernel void k(__global float *o) { float x = -1.5f; int y = -3; o[0] = x; }");
    }

    #[test]
    fn attribute_printing() {
        let k = parse_kernel("__attribute__((num_simd_work_items(4)))\n__kernel void k(){}").unwrap();
        let printed = print_kernel(&k);
        assert!(printed.starts_with("__attribute__((num_simd_work_items(4)))\n__kernel void k() {\n"));
    }

    #[test]
    fn header_comments_roundtrip() {
        let src = "// requires N divisible by 4\n__kernel void k(){}";
        let k = parse_kernel(src).unwrap();
        assert_eq!(k.header_comments.len(), 1);
        roundtrip(src);
    }

    #[test]
    fn deterministic_output() {
        let src = "__kernel void k(__global float *a) { a[0] = 1.0f; }";
        let k = parse_kernel(src).unwrap();
        assert_eq!(print_kernel(&k), print_kernel(&k.clone()));
    }
}
