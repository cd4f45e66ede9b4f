//! AST-to-bytecode compiler for the interpreter.
//!
//! Every scalar variable gets a fixed register (declaration names are
//! kernel-wide unique), expression temporaries stack above them, and all
//! values are 32-bit raw words whose type the compiler tracks statically.
//! Short-circuit `&&`/`||` lower to jumps; `int`/`uint` reinterpret freely
//! while promotions to `float` become explicit cast instructions.

use std::collections::HashMap;

use crate::ast::*;
use crate::error::SemanticError;
use crate::types::{self, promote, SymbolTypes};

use super::{BufferSet, ExecError, ExecResult, GroupOrder, LaunchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CtxVal {
    GlobalId,
    GlobalSize,
    LocalId,
    LocalSize,
    GroupId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IntOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FloatOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Instr {
    Const { dst: u16, bits: u32 },
    Mov { dst: u16, src: u16 },
    Ctx { dst: u16, which: CtxVal },
    BinI { op: IntOp, dst: u16, a: u16, b: u16 },
    BinU { op: IntOp, dst: u16, a: u16, b: u16 },
    BinF { op: FloatOp, dst: u16, a: u16, b: u16 },
    CmpI { op: CmpOp, dst: u16, a: u16, b: u16 },
    CmpU { op: CmpOp, dst: u16, a: u16, b: u16 },
    CmpF { op: CmpOp, dst: u16, a: u16, b: u16 },
    NegI { dst: u16, a: u16 },
    NegF { dst: u16, a: u16 },
    NotI { dst: u16, a: u16 },
    CastIF { dst: u16, a: u16 },
    CastUF { dst: u16, a: u16 },
    MinMax { is_max: bool, ty: ScalarType, dst: u16, a: u16, b: u16 },
    AbsF { dst: u16, a: u16 },
    SqrtF { dst: u16, a: u16 },
    LoadG { dst: u16, buf: u16, idx: u16 },
    StoreG { buf: u16, idx: u16, val: u16 },
    LoadL { dst: u16, arr: u16, idx: u16 },
    StoreL { arr: u16, idx: u16, val: u16 },
    Jmp { to: u32 },
    JmpIfZero { cond: u16, to: u32 },
    JmpIfNonZero { cond: u16, to: u32 },
    Barrier,
    Halt,
}

#[derive(Debug, Clone)]
pub(crate) struct GlobalBufDecl {
    pub name: String,
    pub elem: ScalarType,
}

#[derive(Debug, Clone)]
pub(crate) struct LocalArrDecl {
    pub name: String,
    /// Element count; `None` means the length comes from the buffer set
    /// (a `__local` pointer parameter).
    pub len: Option<usize>,
}

/// A kernel lowered for execution. Compile once, run many launches.
#[derive(Debug, Clone)]
pub struct CompiledKernel {
    pub(crate) instrs: Vec<Instr>,
    pub(crate) reg_count: u16,
    pub(crate) scalar_params: Vec<(String, ScalarType, u16)>,
    pub(crate) global_bufs: Vec<GlobalBufDecl>,
    pub(crate) local_arrs: Vec<LocalArrDecl>,
    pub(crate) has_barrier: bool,
}

impl CompiledKernel {
    pub fn compile(kernel: &KernelAst) -> Result<Self, SemanticError> {
        let syms = types::typecheck(kernel)?;
        let mut c = Compiler::new(kernel, syms)?;
        c.block(&kernel.body)?;
        c.emit(Instr::Halt);
        Ok(CompiledKernel {
            instrs: c.instrs,
            reg_count: c.max_reg,
            scalar_params: c.scalar_params,
            global_bufs: c.global_bufs,
            local_arrs: c.local_arrs,
            has_barrier: c.has_barrier,
        })
    }

    pub fn run(&self, launch: LaunchConfig, buffers: &BufferSet) -> Result<ExecResult, ExecError> {
        self.run_ordered(launch, buffers, GroupOrder::Forward)
    }

    pub fn run_ordered(
        &self,
        launch: LaunchConfig,
        buffers: &BufferSet,
        order: GroupOrder,
    ) -> Result<ExecResult, ExecError> {
        super::vm::run(self, launch, buffers, order)
    }
}

/// True when a value of `from` may be read as `to` without an instruction
/// (identical representation or int/uint reinterpretation).
fn reinterpretable(from: ScalarType, to: ScalarType) -> bool {
    from == to
        || matches!(
            (from, to),
            (ScalarType::Int, ScalarType::Uint) | (ScalarType::Uint, ScalarType::Int)
        )
}

struct Compiler {
    syms: SymbolTypes,
    slots: HashMap<String, (u16, ScalarType)>,
    buf_ids: HashMap<String, u16>,
    local_ids: HashMap<String, u16>,
    scalar_params: Vec<(String, ScalarType, u16)>,
    global_bufs: Vec<GlobalBufDecl>,
    local_arrs: Vec<LocalArrDecl>,
    instrs: Vec<Instr>,
    temp_base: u16,
    temp_top: u16,
    max_reg: u16,
    has_barrier: bool,
}

impl Compiler {
    fn new(kernel: &KernelAst, syms: SymbolTypes) -> Result<Self, SemanticError> {
        let mut c = Compiler {
            syms,
            slots: HashMap::new(),
            buf_ids: HashMap::new(),
            local_ids: HashMap::new(),
            scalar_params: Vec::new(),
            global_bufs: Vec::new(),
            local_arrs: Vec::new(),
            instrs: Vec::new(),
            temp_base: 0,
            temp_top: 0,
            max_reg: 0,
            has_barrier: false,
        };
        for p in &kernel.params {
            if p.is_pointer {
                match p.addr_space {
                    AddressSpace::Global | AddressSpace::Constant => {
                        let id = c.global_bufs.len() as u16;
                        c.global_bufs.push(GlobalBufDecl { name: p.name.clone(), elem: p.ty });
                        c.buf_ids.insert(p.name.clone(), id);
                    }
                    AddressSpace::Local => {
                        let id = c.local_arrs.len() as u16;
                        c.local_arrs.push(LocalArrDecl { name: p.name.clone(), len: None });
                        c.local_ids.insert(p.name.clone(), id);
                    }
                    AddressSpace::Private => {
                        return Err(SemanticError::new("private pointer parameter"));
                    }
                }
            } else {
                let slot = c.alloc_named(&p.name, p.ty);
                c.scalar_params.push((p.name.clone(), p.ty, slot));
            }
        }
        c.collect_decls(&kernel.body);
        c.temp_base = c.max_reg;
        c.temp_top = c.temp_base;
        Ok(c)
    }

    fn alloc_named(&mut self, name: &str, ty: ScalarType) -> u16 {
        let slot = self.max_reg;
        self.max_reg += 1;
        self.slots.insert(name.to_string(), (slot, ty));
        slot
    }

    fn collect_decls(&mut self, block: &Block) {
        for stmt in &block.stmts {
            match stmt {
                Stmt::Decl { ty, name, .. } => {
                    self.alloc_named(name, *ty);
                }
                Stmt::LocalArray { name, len, .. } => {
                    let id = self.local_arrs.len() as u16;
                    self.local_arrs.push(LocalArrDecl { name: name.clone(), len: Some(*len as usize) });
                    self.local_ids.insert(name.clone(), id);
                }
                Stmt::If { then_block, else_block, .. } => {
                    self.collect_decls(then_block);
                    if let Some(e) = else_block {
                        self.collect_decls(e);
                    }
                }
                Stmt::For { init, body, .. } => {
                    if let ForInit::Decl { ty, name, .. } = init {
                        self.alloc_named(name, *ty);
                    }
                    self.collect_decls(body);
                }
                Stmt::Block(b) => self.collect_decls(b),
                _ => {}
            }
        }
    }

    fn emit(&mut self, i: Instr) -> u32 {
        self.instrs.push(i);
        (self.instrs.len() - 1) as u32
    }

    fn here(&self) -> u32 {
        self.instrs.len() as u32
    }

    fn patch(&mut self, at: u32, to: u32) {
        match &mut self.instrs[at as usize] {
            Instr::Jmp { to: t } | Instr::JmpIfZero { to: t, .. } | Instr::JmpIfNonZero { to: t, .. } => {
                *t = to
            }
            _ => unreachable!("patch target is not a jump"),
        }
    }

    fn temp(&mut self) -> u16 {
        let t = self.temp_top;
        self.temp_top += 1;
        self.max_reg = self.max_reg.max(self.temp_top);
        t
    }

    fn temp_mark(&self) -> u16 {
        self.temp_top
    }

    fn temp_reset(&mut self, mark: u16) {
        self.temp_top = mark;
    }

    fn slot_of(&self, name: &str) -> (u16, ScalarType) {
        self.slots[name]
    }

    fn expr_type(&self, e: &Expr) -> Result<ScalarType, SemanticError> {
        types::type_of_expr(e, &self.syms)
    }

    // ---- expressions ------------------------------------------------------

    /// Compile `e`, placing the result in `dst` if provided (the value type
    /// is whatever the expression yields; callers wanting a different type
    /// use `expr_as`). Returns the slot actually holding the result, which
    /// for plain variable reads may be the variable's own register.
    fn expr(&mut self, e: &Expr, dst: Option<u16>) -> Result<(u16, ScalarType), SemanticError> {
        match e {
            Expr::IntLit(v) => {
                let slot = dst.unwrap_or_else(|| self.temp());
                self.emit(Instr::Const { dst: slot, bits: (*v as i32) as u32 });
                Ok((slot, ScalarType::Int))
            }
            Expr::UintLit(v) => {
                let slot = dst.unwrap_or_else(|| self.temp());
                self.emit(Instr::Const { dst: slot, bits: *v as u32 });
                Ok((slot, ScalarType::Uint))
            }
            Expr::FloatLit(FloatLit(v)) => {
                let slot = dst.unwrap_or_else(|| self.temp());
                self.emit(Instr::Const { dst: slot, bits: v.to_bits() });
                Ok((slot, ScalarType::Float))
            }
            Expr::Var(name) => {
                let (slot, ty) = self.slot_of(name);
                match dst {
                    Some(d) if d != slot => {
                        self.emit(Instr::Mov { dst: d, src: slot });
                        Ok((d, ty))
                    }
                    _ => Ok((slot, ty)),
                }
            }
            Expr::Load { array, index } => {
                let idx = self.index_slot(index)?;
                let slot = dst.unwrap_or_else(|| self.temp());
                if let Some(&buf) = self.buf_ids.get(array.as_str()) {
                    self.emit(Instr::LoadG { dst: slot, buf, idx });
                    Ok((slot, self.global_bufs[buf as usize].elem))
                } else {
                    let arr = self.local_ids[array.as_str()];
                    let elem = self.syms.array(array)?.elem;
                    self.emit(Instr::LoadL { dst: slot, arr, idx });
                    Ok((slot, elem))
                }
            }
            Expr::Unary { op, expr } => {
                let (a, ty) = self.expr(expr, None)?;
                let slot = dst.unwrap_or_else(|| self.temp());
                match op {
                    UnOp::Neg => {
                        match ty {
                            ScalarType::Float => self.emit(Instr::NegF { dst: slot, a }),
                            _ => self.emit(Instr::NegI { dst: slot, a }),
                        };
                        Ok((slot, ty))
                    }
                    UnOp::Not => {
                        self.emit(Instr::NotI { dst: slot, a });
                        Ok((slot, ScalarType::Int))
                    }
                }
            }
            Expr::Binary { op, lhs, rhs } => self.binary(*op, lhs, rhs, dst),
            Expr::WorkItem { func, dim } => {
                let slot = dst.unwrap_or_else(|| self.temp());
                if *dim == 0 {
                    let which = match func {
                        WorkItemFn::GlobalId => CtxVal::GlobalId,
                        WorkItemFn::GlobalSize => CtxVal::GlobalSize,
                        WorkItemFn::LocalId => CtxVal::LocalId,
                        WorkItemFn::LocalSize => CtxVal::LocalSize,
                        WorkItemFn::GroupId => CtxVal::GroupId,
                    };
                    self.emit(Instr::Ctx { dst: slot, which });
                } else {
                    // 1-D launches: ids in higher dimensions are 0, sizes 1.
                    let bits = if func.varies_per_item() { 0 } else { 1 };
                    self.emit(Instr::Const { dst: slot, bits });
                }
                Ok((slot, ScalarType::Int))
            }
            Expr::Math { func, args } => self.math(*func, args, dst),
        }
    }

    /// Compile `e` and coerce the result to `want`.
    fn expr_as(&mut self, e: &Expr, want: ScalarType, dst: Option<u16>) -> Result<u16, SemanticError> {
        let ety = self.expr_type(e)?;
        if reinterpretable(ety, want) {
            let (slot, _) = self.expr(e, dst)?;
            return Ok(slot);
        }
        let (slot, ty) = self.expr(e, None)?;
        let out = dst.unwrap_or_else(|| self.temp());
        match (ty, want) {
            (ScalarType::Int, ScalarType::Float) => {
                self.emit(Instr::CastIF { dst: out, a: slot });
            }
            (ScalarType::Uint, ScalarType::Float) => {
                self.emit(Instr::CastUF { dst: out, a: slot });
            }
            (from, to) => {
                return Err(SemanticError::new(format!(
                    "no implicit conversion from {} to {}",
                    from.keyword(),
                    to.keyword()
                )))
            }
        }
        Ok(out)
    }

    /// Index expressions evaluate as 32-bit integers.
    fn index_slot(&mut self, index: &Expr) -> Result<u16, SemanticError> {
        Ok(self.expr_as(index, ScalarType::Int, None)?)
    }

    fn binary(
        &mut self,
        op: BinOp,
        lhs: &Expr,
        rhs: &Expr,
        dst: Option<u16>,
    ) -> Result<(u16, ScalarType), SemanticError> {
        if op.is_logical() {
            return self.logical(op, lhs, rhs, dst);
        }
        let lt = self.expr_type(lhs)?;
        let rt = self.expr_type(rhs)?;
        let common = promote(lt, rt);
        let a = self.expr_as(lhs, common, None)?;
        let b = self.expr_as(rhs, common, None)?;
        let slot = dst.unwrap_or_else(|| self.temp());
        if op.is_comparison() {
            let cmp = match op {
                BinOp::Lt => CmpOp::Lt,
                BinOp::Le => CmpOp::Le,
                BinOp::Gt => CmpOp::Gt,
                BinOp::Ge => CmpOp::Ge,
                BinOp::Eq => CmpOp::Eq,
                BinOp::Ne => CmpOp::Ne,
                _ => unreachable!(),
            };
            match common {
                ScalarType::Int => self.emit(Instr::CmpI { op: cmp, dst: slot, a, b }),
                ScalarType::Uint => self.emit(Instr::CmpU { op: cmp, dst: slot, a, b }),
                ScalarType::Float => self.emit(Instr::CmpF { op: cmp, dst: slot, a, b }),
            };
            return Ok((slot, ScalarType::Int));
        }
        match common {
            ScalarType::Float => {
                let fop = match op {
                    BinOp::Add => FloatOp::Add,
                    BinOp::Sub => FloatOp::Sub,
                    BinOp::Mul => FloatOp::Mul,
                    BinOp::Div => FloatOp::Div,
                    BinOp::Rem => return Err(SemanticError::new("`%` requires integer operands")),
                    _ => unreachable!(),
                };
                self.emit(Instr::BinF { op: fop, dst: slot, a, b });
            }
            ty => {
                let iop = match op {
                    BinOp::Add => IntOp::Add,
                    BinOp::Sub => IntOp::Sub,
                    BinOp::Mul => IntOp::Mul,
                    BinOp::Div => IntOp::Div,
                    BinOp::Rem => IntOp::Rem,
                    _ => unreachable!(),
                };
                if ty == ScalarType::Uint {
                    self.emit(Instr::BinU { op: iop, dst: slot, a, b });
                } else {
                    self.emit(Instr::BinI { op: iop, dst: slot, a, b });
                }
            }
        }
        Ok((slot, common))
    }

    fn logical(
        &mut self,
        op: BinOp,
        lhs: &Expr,
        rhs: &Expr,
        dst: Option<u16>,
    ) -> Result<(u16, ScalarType), SemanticError> {
        let slot = dst.unwrap_or_else(|| self.temp());
        let (short_bits, long_bits) = if op == BinOp::And { (0u32, 1u32) } else { (1, 0) };
        self.emit(Instr::Const { dst: slot, bits: short_bits });
        let (a, _) = self.expr(lhs, None)?;
        let j1 = if op == BinOp::And {
            self.emit(Instr::JmpIfZero { cond: a, to: u32::MAX })
        } else {
            self.emit(Instr::JmpIfNonZero { cond: a, to: u32::MAX })
        };
        let (b, _) = self.expr(rhs, None)?;
        let j2 = if op == BinOp::And {
            self.emit(Instr::JmpIfZero { cond: b, to: u32::MAX })
        } else {
            self.emit(Instr::JmpIfNonZero { cond: b, to: u32::MAX })
        };
        self.emit(Instr::Const { dst: slot, bits: long_bits });
        let end = self.here();
        self.patch(j1, end);
        self.patch(j2, end);
        Ok((slot, ScalarType::Int))
    }

    fn math(
        &mut self,
        func: MathFn,
        args: &[Expr],
        dst: Option<u16>,
    ) -> Result<(u16, ScalarType), SemanticError> {
        match func {
            MathFn::Min | MathFn::Max => {
                let lt = self.expr_type(&args[0])?;
                let rt = self.expr_type(&args[1])?;
                let common = promote(lt, rt);
                let a = self.expr_as(&args[0], common, None)?;
                let b = self.expr_as(&args[1], common, None)?;
                let slot = dst.unwrap_or_else(|| self.temp());
                self.emit(Instr::MinMax { is_max: func == MathFn::Max, ty: common, dst: slot, a, b });
                Ok((slot, common))
            }
            MathFn::Fabs | MathFn::Sqrt => {
                let a = self.expr_as(&args[0], ScalarType::Float, None)?;
                let slot = dst.unwrap_or_else(|| self.temp());
                match func {
                    MathFn::Fabs => self.emit(Instr::AbsF { dst: slot, a }),
                    MathFn::Sqrt => self.emit(Instr::SqrtF { dst: slot, a }),
                    _ => unreachable!(),
                };
                Ok((slot, ScalarType::Float))
            }
        }
    }

    // ---- statements -------------------------------------------------------

    fn assign_to(&mut self, name: &str, value: &Expr) -> Result<(), SemanticError> {
        let (slot, ty) = self.slot_of(name);
        let out = self.expr_as(value, ty, Some(slot))?;
        if out != slot {
            self.emit(Instr::Mov { dst: slot, src: out });
        }
        Ok(())
    }

    fn block(&mut self, block: &Block) -> Result<(), SemanticError> {
        for stmt in &block.stmts {
            let mark = self.temp_mark();
            self.stmt(stmt)?;
            self.temp_reset(mark);
        }
        Ok(())
    }

    fn stmt(&mut self, stmt: &Stmt) -> Result<(), SemanticError> {
        match stmt {
            Stmt::Decl { name, init, .. } => self.assign_to(name, init),
            Stmt::Assign { name, value } => self.assign_to(name, value),
            Stmt::LocalArray { .. } => Ok(()),
            Stmt::Store { array, index, value } => {
                let idx = self.index_slot(index)?;
                if let Some(&buf) = self.buf_ids.get(array.as_str()) {
                    let elem = self.global_bufs[buf as usize].elem;
                    let val = self.expr_as(value, elem, None)?;
                    self.emit(Instr::StoreG { buf, idx, val });
                } else {
                    let arr = self.local_ids[array.as_str()];
                    let elem = self.syms.array(array)?.elem;
                    let val = self.expr_as(value, elem, None)?;
                    self.emit(Instr::StoreL { arr, idx, val });
                }
                Ok(())
            }
            Stmt::If { cond, then_block, else_block } => {
                let (c, _) = self.expr(cond, None)?;
                let jfalse = self.emit(Instr::JmpIfZero { cond: c, to: u32::MAX });
                self.block(then_block)?;
                match else_block {
                    None => {
                        let end = self.here();
                        self.patch(jfalse, end);
                    }
                    Some(eb) => {
                        let jend = self.emit(Instr::Jmp { to: u32::MAX });
                        let else_at = self.here();
                        self.patch(jfalse, else_at);
                        self.block(eb)?;
                        let end = self.here();
                        self.patch(jend, end);
                    }
                }
                Ok(())
            }
            Stmt::For { init, cond, step, body } => {
                match init {
                    ForInit::Decl { name, init, .. } => self.assign_to(name, init)?,
                    ForInit::Assign { name, value } => self.assign_to(name, value)?,
                }
                let loop_start = self.here();
                let mark = self.temp_mark();
                let (c, _) = self.expr(cond, None)?;
                let jexit = self.emit(Instr::JmpIfZero { cond: c, to: u32::MAX });
                self.temp_reset(mark);
                self.block(body)?;
                match step {
                    ForStep::AddAssign { name, amount } => {
                        let (slot, ty) = self.slot_of(name);
                        let b = self.expr_as(amount, ty, None)?;
                        match ty {
                            ScalarType::Float => {
                                self.emit(Instr::BinF { op: FloatOp::Add, dst: slot, a: slot, b })
                            }
                            ScalarType::Uint => {
                                self.emit(Instr::BinU { op: IntOp::Add, dst: slot, a: slot, b })
                            }
                            ScalarType::Int => {
                                self.emit(Instr::BinI { op: IntOp::Add, dst: slot, a: slot, b })
                            }
                        };
                    }
                    ForStep::Incr { name } => {
                        let (slot, ty) = self.slot_of(name);
                        let one = self.temp();
                        self.emit(Instr::Const { dst: one, bits: 1 });
                        if ty == ScalarType::Uint {
                            self.emit(Instr::BinU { op: IntOp::Add, dst: slot, a: slot, b: one });
                        } else {
                            self.emit(Instr::BinI { op: IntOp::Add, dst: slot, a: slot, b: one });
                        }
                    }
                    ForStep::Assign { name, value } => self.assign_to(name, value)?,
                }
                self.temp_reset(mark);
                self.emit(Instr::Jmp { to: loop_start });
                let end = self.here();
                self.patch(jexit, end);
                Ok(())
            }
            Stmt::Barrier { .. } => {
                self.emit(Instr::Barrier);
                self.has_barrier = true;
                Ok(())
            }
            Stmt::Block(b) => self.block(b),
        }
    }
}

impl CompiledKernel {
    /// Validate a buffer set against this kernel's parameter list.
    pub(crate) fn validate_bindings(&self, buffers: &BufferSet) -> Result<(), ExecError> {
        for decl in &self.global_bufs {
            match buffers.buffers.get(&decl.name) {
                None => {
                    return Err(ExecError::BadBinding(format!(
                        "missing buffer for pointer parameter `{}`",
                        decl.name
                    )))
                }
                Some(data) => {
                    if data.ty() != decl.elem {
                        return Err(ExecError::BadBinding(format!(
                            "buffer `{}` has element type {}, parameter wants {}",
                            decl.name,
                            data.ty().keyword(),
                            decl.elem.keyword()
                        )));
                    }
                    if data.len() > i32::MAX as usize {
                        return Err(ExecError::BadBinding(format!(
                            "buffer `{}` exceeds 2^31-1 elements",
                            decl.name
                        )));
                    }
                }
            }
        }
        for (name, ty, _) in &self.scalar_params {
            match buffers.scalars.get(name) {
                None => {
                    return Err(ExecError::BadBinding(format!(
                        "missing value for scalar parameter `{name}`"
                    )))
                }
                Some(v) if v.ty() != *ty => {
                    return Err(ExecError::BadBinding(format!(
                        "scalar `{name}` has type {}, parameter wants {}",
                        v.ty().keyword(),
                        ty.keyword()
                    )))
                }
                _ => {}
            }
        }
        for decl in &self.local_arrs {
            if decl.len.is_none() && !buffers.local_lens.contains_key(&decl.name) {
                return Err(ExecError::BadBinding(format!(
                    "missing local length for `__local` pointer parameter `{}`",
                    decl.name
                )));
            }
        }
        Ok(())
    }
}
