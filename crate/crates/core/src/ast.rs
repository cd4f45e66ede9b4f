//! Typed syntax tree for the supported OpenCL-C kernel subset.
//!
//! One kernel per translation unit: scalar `int`/`uint`/`float` values,
//! 1-D arrays reached through pointer parameters, `if`/`else if`/`else`,
//! single-init `for` loops, work-group barriers, and the work-item builtins
//! with literal dimension arguments. Everything else is rejected by the
//! parser with an unsupported-construct diagnostic.

use std::collections::BTreeSet;

/// Element type of a scalar value or of the array behind a pointer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarType {
    Int,
    Uint,
    Float,
}

impl ScalarType {
    pub fn keyword(self) -> &'static str {
        match self {
            ScalarType::Int => "int",
            ScalarType::Uint => "uint",
            ScalarType::Float => "float",
        }
    }
}

/// OpenCL address space of a kernel parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AddressSpace {
    Global,
    Local,
    Constant,
    Private,
}

impl AddressSpace {
    pub fn qualifier(self) -> &'static str {
        match self {
            AddressSpace::Global => "__global",
            AddressSpace::Local => "__local",
            AddressSpace::Constant => "__constant",
            AddressSpace::Private => "__private",
        }
    }
}

/// A kernel parameter. Pointers always carry an explicit address space;
/// scalars are private.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: ScalarType,
    pub is_pointer: bool,
    pub addr_space: AddressSpace,
}

impl Param {
    pub fn scalar(name: &str, ty: ScalarType) -> Self {
        Param { name: name.to_string(), ty, is_pointer: false, addr_space: AddressSpace::Private }
    }

    pub fn global_ptr(name: &str, ty: ScalarType) -> Self {
        Param { name: name.to_string(), ty, is_pointer: true, addr_space: AddressSpace::Global }
    }
}

/// Vectorization / replication annotations attached to a kernel.
///
/// A value of 1 is the hardware default and is normalized to `None` so the
/// printed form stays canonical.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KernelAttrs {
    pub simd_lanes: Option<u32>,
    pub compute_units: Option<u32>,
}

impl KernelAttrs {
    pub fn is_empty(&self) -> bool {
        self.simd_lanes.is_none() && self.compute_units.is_none()
    }
}

/// Work-item geometry builtins. The dimension argument must be a literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WorkItemFn {
    GlobalId,
    GlobalSize,
    LocalId,
    LocalSize,
    GroupId,
}

impl WorkItemFn {
    pub fn name(self) -> &'static str {
        match self {
            WorkItemFn::GlobalId => "get_global_id",
            WorkItemFn::GlobalSize => "get_global_size",
            WorkItemFn::LocalId => "get_local_id",
            WorkItemFn::LocalSize => "get_local_size",
            WorkItemFn::GroupId => "get_group_id",
        }
    }

    /// True for builtins whose value differs between work-items.
    pub fn varies_per_item(self) -> bool {
        !matches!(self, WorkItemFn::GlobalSize | WorkItemFn::LocalSize)
    }
}

/// The fixed math builtins admitted by the subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MathFn {
    Min,
    Max,
    Fabs,
    Sqrt,
}

impl MathFn {
    pub fn name(self) -> &'static str {
        match self {
            MathFn::Min => "min",
            MathFn::Max => "max",
            MathFn::Fabs => "fabs",
            MathFn::Sqrt => "sqrt",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            MathFn::Min | MathFn::Max => 2,
            MathFn::Fabs | MathFn::Sqrt => 1,
        }
    }
}

/// Float literal wrapper comparing by bit pattern so AST equality is exact.
#[derive(Debug, Clone, Copy)]
pub struct FloatLit(pub f32);

impl PartialEq for FloatLit {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for FloatLit {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// `+ - * /`: the value-producing operators counted as arithmetic work.
    pub fn is_arith(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div)
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    IntLit(i64),
    UintLit(u64),
    FloatLit(FloatLit),
    Var(String),
    /// `array[index]` in value position.
    Load { array: String, index: Box<Expr> },
    Unary { op: UnOp, expr: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// Work-item builtin call with a literal dimension.
    WorkItem { func: WorkItemFn, dim: u8 },
    Math { func: MathFn, args: Vec<Expr> },
}

impl Expr {
    pub fn int(v: i64) -> Self {
        Expr::IntLit(v)
    }

    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn load(array: &str, index: Expr) -> Self {
        Expr::Load { array: array.to_string(), index: Box::new(index) }
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn add(lhs: Expr, rhs: Expr) -> Self {
        Expr::binary(BinOp::Add, lhs, rhs)
    }

    pub fn mul(lhs: Expr, rhs: Expr) -> Self {
        Expr::binary(BinOp::Mul, lhs, rhs)
    }

    pub fn global_id(dim: u8) -> Self {
        Expr::WorkItem { func: WorkItemFn::GlobalId, dim }
    }

    pub fn global_size(dim: u8) -> Self {
        Expr::WorkItem { func: WorkItemFn::GlobalSize, dim }
    }

    /// Walk the expression tree, visiting `self` and every child.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Load { index, .. } => index.walk(f),
            Expr::Unary { expr, .. } => expr.walk(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            Expr::Math { args, .. } => {
                for a in args {
                    a.walk(f);
                }
            }
            Expr::IntLit(_) | Expr::UintLit(_) | Expr::FloatLit(_) | Expr::Var(_) | Expr::WorkItem { .. } => {}
        }
    }

    /// True if the expression references the given work-item builtin anywhere.
    pub fn uses_builtin(&self, func: WorkItemFn) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if let Expr::WorkItem { func: f, .. } = e {
                if *f == func {
                    found = true;
                }
            }
        });
        found
    }
}

/// Barrier memory-fence flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fence {
    pub local: bool,
    pub global: bool,
}

impl Fence {
    pub fn local_mem() -> Self {
        Fence { local: true, global: false }
    }
}

impl Default for Fence {
    fn default() -> Self {
        // `barrier()` with no flags still orders all work-items of the group.
        Fence { local: false, global: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForInit {
    Decl { ty: ScalarType, name: String, init: Expr },
    Assign { name: String, value: Expr },
}

impl ForInit {
    pub fn var_name(&self) -> &str {
        match self {
            ForInit::Decl { name, .. } | ForInit::Assign { name, .. } => name,
        }
    }

    pub fn init_expr(&self) -> &Expr {
        match self {
            ForInit::Decl { init, .. } => init,
            ForInit::Assign { value, .. } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForStep {
    /// `v += e`
    AddAssign { name: String, amount: Expr },
    /// `v++`
    Incr { name: String },
    /// `v = e`
    Assign { name: String, value: Expr },
}

impl ForStep {
    pub fn var_name(&self) -> &str {
        match self {
            ForStep::AddAssign { name, .. } | ForStep::Incr { name } | ForStep::Assign { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    /// `type name = init;`
    Decl { ty: ScalarType, name: String, init: Expr },
    /// `__local type name[len];` — one array per work-group.
    LocalArray { ty: ScalarType, name: String, len: u64 },
    /// `name = value;`
    Assign { name: String, value: Expr },
    /// `array[index] = value;`
    Store { array: String, index: Expr, value: Expr },
    If { cond: Expr, then_block: Block, else_block: Option<Block> },
    For { init: ForInit, cond: Expr, step: ForStep, body: Block },
    Barrier { fence: Fence },
    Block(Block),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

impl Block {
    pub fn new(stmts: Vec<Stmt>) -> Self {
        Block { stmts }
    }
}

/// One parsed kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelAst {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Block,
    pub attrs: KernelAttrs,
    /// Leading `//` comment lines carried through printing verbatim.
    /// Transform obligations (e.g. divisibility requirements) land here.
    pub header_comments: Vec<String>,
}

impl KernelAst {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Structural comparison: everything except the header comments, which
    /// are documentation rather than program structure.
    pub fn same_structure(&self, other: &KernelAst) -> bool {
        self.name == other.name
            && self.params == other.params
            && self.body == other.body
            && self.attrs == other.attrs
    }

    /// Every identifier that occurs anywhere in the kernel (params, decls,
    /// loop variables, and uses). Used for collision-free fresh names.
    pub fn all_identifiers(&self) -> BTreeSet<String> {
        let mut ids = BTreeSet::new();
        for p in &self.params {
            ids.insert(p.name.clone());
        }
        collect_block_idents(&self.body, &mut ids);
        ids
    }
}

fn collect_expr_idents(expr: &Expr, ids: &mut BTreeSet<String>) {
    expr.walk(&mut |e| match e {
        Expr::Var(name) => {
            ids.insert(name.clone());
        }
        Expr::Load { array, .. } => {
            ids.insert(array.clone());
        }
        _ => {}
    });
}

fn collect_block_idents(block: &Block, ids: &mut BTreeSet<String>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Decl { name, init, .. } => {
                ids.insert(name.clone());
                collect_expr_idents(init, ids);
            }
            Stmt::LocalArray { name, .. } => {
                ids.insert(name.clone());
            }
            Stmt::Assign { name, value } => {
                ids.insert(name.clone());
                collect_expr_idents(value, ids);
            }
            Stmt::Store { array, index, value } => {
                ids.insert(array.clone());
                collect_expr_idents(index, ids);
                collect_expr_idents(value, ids);
            }
            Stmt::If { cond, then_block, else_block } => {
                collect_expr_idents(cond, ids);
                collect_block_idents(then_block, ids);
                if let Some(e) = else_block {
                    collect_block_idents(e, ids);
                }
            }
            Stmt::For { init, cond, step, body } => {
                match init {
                    ForInit::Decl { name, init, .. } => {
                        ids.insert(name.clone());
                        collect_expr_idents(init, ids);
                    }
                    ForInit::Assign { name, value } => {
                        ids.insert(name.clone());
                        collect_expr_idents(value, ids);
                    }
                }
                collect_expr_idents(cond, ids);
                match step {
                    ForStep::AddAssign { name, amount } => {
                        ids.insert(name.clone());
                        collect_expr_idents(amount, ids);
                    }
                    ForStep::Incr { name } => {
                        ids.insert(name.clone());
                    }
                    ForStep::Assign { name, value } => {
                        ids.insert(name.clone());
                        collect_expr_idents(value, ids);
                    }
                }
                collect_block_idents(body, ids);
            }
            Stmt::Barrier { .. } => {}
            Stmt::Block(b) => collect_block_idents(b, ids),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_lit_equality_is_bitwise() {
        assert_eq!(FloatLit(1.5), FloatLit(1.5));
        assert_ne!(FloatLit(0.0), FloatLit(-0.0));
    }

    #[test]
    fn same_structure_ignores_header_comments() {
        let mut a = KernelAst {
            name: "k".into(),
            params: vec![],
            body: Block::default(),
            attrs: KernelAttrs::default(),
            header_comments: vec![],
        };
        let mut b = a.clone();
        b.header_comments.push("requires N divisible by 2".into());
        assert!(a.same_structure(&b));
        a.name = "other".into();
        assert!(!a.same_structure(&b));
    }

    #[test]
    fn identifier_collection_sees_nested_uses() {
        let k = KernelAst {
            name: "k".into(),
            params: vec![Param::global_ptr("in0", ScalarType::Float)],
            body: Block::new(vec![Stmt::Decl {
                ty: ScalarType::Float,
                name: "r0".into(),
                init: Expr::load("in0", Expr::var("gid")),
            }]),
            attrs: KernelAttrs::default(),
            header_comments: vec![],
        };
        let ids = k.all_identifiers();
        for name in ["in0", "r0", "gid"] {
            assert!(ids.contains(name), "missing {name}");
        }
    }
}
