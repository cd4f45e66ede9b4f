//! Bytecode execution engine.
//!
//! Work-groups execute sequentially and independently; within a group,
//! work-items advance in barrier-delimited phases in ascending id order.
//! Global stores are checked against a shadow write-tag array so two
//! work-items writing one element without an intervening barrier (or from
//! different work-groups) raise a data-race error instead of silently
//! picking an order.

use super::compile::{CompiledKernel, CmpOp, CtxVal, FloatOp, Instr, IntOp};
use super::{BufferData, BufferSet, ExecError, ExecResult, ExecStats, GroupOrder, LaunchConfig};

#[derive(Debug, Clone, Copy, Default)]
struct WriteTag {
    group_plus1: u32,
    phase: u32,
    item: u32,
}

struct BoundBuf {
    name: String,
    bits: Vec<u32>,
    /// Lazily allocated on first store.
    shadow: Option<Vec<WriteTag>>,
}

#[derive(Clone, Copy)]
struct ItemCtx {
    global_id: u32,
    local_id: u32,
    group_id: u32,
    global_size: u32,
    local_size: u32,
    phase: u32,
}

enum Pause {
    Done,
    Barrier { pc: usize },
}

struct ItemState {
    regs: Vec<u32>,
    pc: usize,
    finished: bool,
}

pub(crate) fn run(
    ck: &CompiledKernel,
    launch: LaunchConfig,
    buffers: &BufferSet,
    order: GroupOrder,
) -> Result<ExecResult, ExecError> {
    launch.validate()?;
    if launch.global_size > i32::MAX as u32 {
        return Err(ExecError::BadLaunch("global size exceeds 2^31-1".into()));
    }
    ck.validate_bindings(buffers)?;

    let mut globals: Vec<BoundBuf> = ck
        .global_bufs
        .iter()
        .map(|decl| BoundBuf {
            name: decl.name.clone(),
            bits: buffers.buffers[&decl.name].to_bits(),
            shadow: None,
        })
        .collect();

    let local_lens: Vec<usize> = ck
        .local_arrs
        .iter()
        .map(|decl| decl.len.unwrap_or_else(|| buffers.local_lens[&decl.name]))
        .collect();
    let mut locals: Vec<Vec<u32>> = local_lens.iter().map(|&n| vec![0u32; n]).collect();

    let mut template = vec![0u32; ck.reg_count as usize];
    for (name, _, slot) in &ck.scalar_params {
        template[*slot as usize] = buffers.scalars[name].bits();
    }

    let mut stats = ExecStats::default();
    let group_count = launch.global_size / launch.local_size;
    let groups: Vec<u32> = match order {
        GroupOrder::Forward => (0..group_count).collect(),
        GroupOrder::Reverse => (0..group_count).rev().collect(),
    };

    for &group in &groups {
        for arr in locals.iter_mut() {
            arr.fill(0);
        }
        if ck.has_barrier {
            run_group_phased(ck, launch, group, &template, &mut globals, &mut locals, &mut stats)?;
        } else {
            run_group_straight(ck, launch, group, &template, &mut globals, &mut locals, &mut stats)?;
        }
    }

    let mut out = buffers.clone();
    for (decl, bound) in ck.global_bufs.iter().zip(globals) {
        out.buffers.insert(decl.name.clone(), BufferData::from_bits(decl.elem, bound.bits));
    }
    Ok(ExecResult { buffers: out, stats })
}

fn run_group_straight(
    ck: &CompiledKernel,
    launch: LaunchConfig,
    group: u32,
    template: &[u32],
    globals: &mut [BoundBuf],
    locals: &mut [Vec<u32>],
    stats: &mut ExecStats,
) -> Result<(), ExecError> {
    let mut regs = template.to_vec();
    for lid in 0..launch.local_size {
        regs.copy_from_slice(template);
        let ctx = ItemCtx {
            global_id: group * launch.local_size + lid,
            local_id: lid,
            group_id: group,
            global_size: launch.global_size,
            local_size: launch.local_size,
            phase: 0,
        };
        let mut pc = 0usize;
        match exec(ck, &mut regs, &mut pc, ctx, globals, locals, stats)? {
            Pause::Done => {}
            Pause::Barrier { .. } => unreachable!("barrier in a kernel compiled without barriers"),
        }
    }
    Ok(())
}

fn run_group_phased(
    ck: &CompiledKernel,
    launch: LaunchConfig,
    group: u32,
    template: &[u32],
    globals: &mut [BoundBuf],
    locals: &mut [Vec<u32>],
    stats: &mut ExecStats,
) -> Result<(), ExecError> {
    let l = launch.local_size as usize;
    let mut states: Vec<ItemState> = (0..l)
        .map(|_| ItemState { regs: template.to_vec(), pc: 0, finished: false })
        .collect();
    let mut phase = 0u32;
    loop {
        let mut at_barrier: Vec<usize> = Vec::new();
        let mut barrier_pc: Option<usize> = None;
        let mut newly_done = 0usize;
        for lid in 0..l {
            if states[lid].finished {
                continue;
            }
            let ctx = ItemCtx {
                global_id: group * launch.local_size + lid as u32,
                local_id: lid as u32,
                group_id: group,
                global_size: launch.global_size,
                local_size: launch.local_size,
                phase,
            };
            let st = &mut states[lid];
            match exec(ck, &mut st.regs, &mut st.pc, ctx, globals, locals, stats)? {
                Pause::Done => {
                    st.finished = true;
                    newly_done += 1;
                }
                Pause::Barrier { pc } => {
                    match barrier_pc {
                        None => barrier_pc = Some(pc),
                        Some(p) if p != pc => {
                            return Err(ExecError::BarrierDivergence {
                                group: group as u64,
                                detail: "work-items reached different barrier statements".into(),
                            })
                        }
                        _ => {}
                    }
                    at_barrier.push(lid);
                }
            }
        }
        if at_barrier.is_empty() {
            return Ok(());
        }
        if newly_done > 0 || at_barrier.len() != states.iter().filter(|s| !s.finished).count() {
            return Err(ExecError::BarrierDivergence {
                group: group as u64,
                detail: "some work-items finished while others wait at a barrier".into(),
            });
        }
        if at_barrier.len() != l {
            return Err(ExecError::BarrierDivergence {
                group: group as u64,
                detail: "some work-items finished while others wait at a barrier".into(),
            });
        }
        stats.barriers += l as u64;
        phase += 1;
        for st in states.iter_mut() {
            st.pc += 1; // step past the barrier instruction
        }
    }
}

#[inline]
fn f(bits: u32) -> f32 {
    f32::from_bits(bits)
}

fn exec(
    ck: &CompiledKernel,
    regs: &mut [u32],
    pc_io: &mut usize,
    ctx: ItemCtx,
    globals: &mut [BoundBuf],
    locals: &mut [Vec<u32>],
    stats: &mut ExecStats,
) -> Result<Pause, ExecError> {
    let instrs = &ck.instrs;
    let mut pc = *pc_io;
    loop {
        match instrs[pc] {
            Instr::Const { dst, bits } => {
                regs[dst as usize] = bits;
                pc += 1;
            }
            Instr::Mov { dst, src } => {
                regs[dst as usize] = regs[src as usize];
                pc += 1;
            }
            Instr::Ctx { dst, which } => {
                regs[dst as usize] = match which {
                    CtxVal::GlobalId => ctx.global_id,
                    CtxVal::GlobalSize => ctx.global_size,
                    CtxVal::LocalId => ctx.local_id,
                    CtxVal::LocalSize => ctx.local_size,
                    CtxVal::GroupId => ctx.group_id,
                };
                pc += 1;
            }
            Instr::BinI { op, dst, a, b } => {
                let x = regs[a as usize] as i32;
                let y = regs[b as usize] as i32;
                let r = match op {
                    IntOp::Add => x.wrapping_add(y),
                    IntOp::Sub => x.wrapping_sub(y),
                    IntOp::Mul => x.wrapping_mul(y),
                    IntOp::Div => {
                        if y == 0 {
                            return Err(ExecError::DivisionByZero { item: ctx.global_id as u64 });
                        }
                        x.wrapping_div(y)
                    }
                    IntOp::Rem => {
                        if y == 0 {
                            return Err(ExecError::DivisionByZero { item: ctx.global_id as u64 });
                        }
                        x.wrapping_rem(y)
                    }
                };
                regs[dst as usize] = r as u32;
                pc += 1;
            }
            Instr::BinU { op, dst, a, b } => {
                let x = regs[a as usize];
                let y = regs[b as usize];
                let r = match op {
                    IntOp::Add => x.wrapping_add(y),
                    IntOp::Sub => x.wrapping_sub(y),
                    IntOp::Mul => x.wrapping_mul(y),
                    IntOp::Div => {
                        if y == 0 {
                            return Err(ExecError::DivisionByZero { item: ctx.global_id as u64 });
                        }
                        x / y
                    }
                    IntOp::Rem => {
                        if y == 0 {
                            return Err(ExecError::DivisionByZero { item: ctx.global_id as u64 });
                        }
                        x % y
                    }
                };
                regs[dst as usize] = r;
                pc += 1;
            }
            Instr::BinF { op, dst, a, b } => {
                let x = f(regs[a as usize]);
                let y = f(regs[b as usize]);
                let r = match op {
                    FloatOp::Add => x + y,
                    FloatOp::Sub => x - y,
                    FloatOp::Mul => x * y,
                    FloatOp::Div => x / y,
                };
                regs[dst as usize] = r.to_bits();
                stats.arith_ops += 1;
                pc += 1;
            }
            Instr::CmpI { op, dst, a, b } => {
                let x = regs[a as usize] as i32;
                let y = regs[b as usize] as i32;
                regs[dst as usize] = cmp(op, x, y);
                pc += 1;
            }
            Instr::CmpU { op, dst, a, b } => {
                let x = regs[a as usize];
                let y = regs[b as usize];
                regs[dst as usize] = cmp(op, x, y);
                pc += 1;
            }
            Instr::CmpF { op, dst, a, b } => {
                let x = f(regs[a as usize]);
                let y = f(regs[b as usize]);
                let r = match op {
                    CmpOp::Lt => x < y,
                    CmpOp::Le => x <= y,
                    CmpOp::Gt => x > y,
                    CmpOp::Ge => x >= y,
                    CmpOp::Eq => x == y,
                    CmpOp::Ne => x != y,
                };
                regs[dst as usize] = r as u32;
                pc += 1;
            }
            Instr::NegI { dst, a } => {
                regs[dst as usize] = (regs[a as usize] as i32).wrapping_neg() as u32;
                pc += 1;
            }
            Instr::NegF { dst, a } => {
                regs[dst as usize] = (-f(regs[a as usize])).to_bits();
                stats.arith_ops += 1;
                pc += 1;
            }
            Instr::NotI { dst, a } => {
                regs[dst as usize] = (regs[a as usize] == 0) as u32;
                pc += 1;
            }
            Instr::CastIF { dst, a } => {
                regs[dst as usize] = ((regs[a as usize] as i32) as f32).to_bits();
                pc += 1;
            }
            Instr::CastUF { dst, a } => {
                regs[dst as usize] = (regs[a as usize] as f32).to_bits();
                pc += 1;
            }
            Instr::MinMax { is_max, ty, dst, a, b } => {
                use crate::ast::ScalarType;
                let r = match ty {
                    ScalarType::Int => {
                        let x = regs[a as usize] as i32;
                        let y = regs[b as usize] as i32;
                        (if is_max { x.max(y) } else { x.min(y) }) as u32
                    }
                    ScalarType::Uint => {
                        let x = regs[a as usize];
                        let y = regs[b as usize];
                        if is_max {
                            x.max(y)
                        } else {
                            x.min(y)
                        }
                    }
                    ScalarType::Float => {
                        // OpenCL definition: min(x,y) = y < x ? y : x.
                        let x = f(regs[a as usize]);
                        let y = f(regs[b as usize]);
                        stats.arith_ops += 1;
                        let r = if is_max {
                            if y > x {
                                y
                            } else {
                                x
                            }
                        } else if y < x {
                            y
                        } else {
                            x
                        };
                        r.to_bits()
                    }
                };
                regs[dst as usize] = r;
                pc += 1;
            }
            Instr::AbsF { dst, a } => {
                regs[dst as usize] = f(regs[a as usize]).abs().to_bits();
                stats.arith_ops += 1;
                pc += 1;
            }
            Instr::SqrtF { dst, a } => {
                regs[dst as usize] = f(regs[a as usize]).sqrt().to_bits();
                stats.arith_ops += 1;
                pc += 1;
            }
            Instr::LoadG { dst, buf, idx } => {
                let buf = &globals[buf as usize];
                let i = regs[idx as usize] as i32;
                if i < 0 || i as usize >= buf.bits.len() {
                    return Err(ExecError::OutOfBounds {
                        item: ctx.global_id as u64,
                        pointer: buf.name.clone(),
                        index: i as i64,
                        len: buf.bits.len(),
                    });
                }
                regs[dst as usize] = buf.bits[i as usize];
                stats.loads += 1;
                pc += 1;
            }
            Instr::StoreG { buf, idx, val } => {
                let b = &mut globals[buf as usize];
                let i = regs[idx as usize] as i32;
                if i < 0 || i as usize >= b.bits.len() {
                    return Err(ExecError::OutOfBounds {
                        item: ctx.global_id as u64,
                        pointer: b.name.clone(),
                        index: i as i64,
                        len: b.bits.len(),
                    });
                }
                let i = i as usize;
                let shadow = b.shadow.get_or_insert_with(|| vec![WriteTag::default(); b.bits.len()]);
                let tag = shadow[i];
                if tag.group_plus1 != 0 {
                    let conflicting = if tag.group_plus1 - 1 != ctx.group_id {
                        true
                    } else {
                        tag.phase == ctx.phase && tag.item != ctx.local_id
                    };
                    if conflicting {
                        let first =
                            (tag.group_plus1 as u64 - 1) * ctx.local_size as u64 + tag.item as u64;
                        return Err(ExecError::DataRace {
                            pointer: b.name.clone(),
                            index: i,
                            first,
                            second: ctx.global_id as u64,
                        });
                    }
                }
                shadow[i] =
                    WriteTag { group_plus1: ctx.group_id + 1, phase: ctx.phase, item: ctx.local_id };
                b.bits[i] = regs[val as usize];
                stats.stores += 1;
                pc += 1;
            }
            Instr::LoadL { dst, arr, idx } => {
                let a = &locals[arr as usize];
                let i = regs[idx as usize] as i32;
                if i < 0 || i as usize >= a.len() {
                    return Err(ExecError::OutOfBounds {
                        item: ctx.global_id as u64,
                        pointer: ck.local_arrs[arr as usize].name.clone(),
                        index: i as i64,
                        len: a.len(),
                    });
                }
                regs[dst as usize] = a[i as usize];
                pc += 1;
            }
            Instr::StoreL { arr, idx, val } => {
                let a = &mut locals[arr as usize];
                let i = regs[idx as usize] as i32;
                if i < 0 || i as usize >= a.len() {
                    return Err(ExecError::OutOfBounds {
                        item: ctx.global_id as u64,
                        pointer: ck.local_arrs[arr as usize].name.clone(),
                        index: i as i64,
                        len: a.len(),
                    });
                }
                a[i as usize] = regs[val as usize];
                pc += 1;
            }
            Instr::Jmp { to } => {
                pc = to as usize;
            }
            Instr::JmpIfZero { cond, to } => {
                if regs[cond as usize] == 0 {
                    pc = to as usize;
                } else {
                    pc += 1;
                }
            }
            Instr::JmpIfNonZero { cond, to } => {
                if regs[cond as usize] != 0 {
                    pc = to as usize;
                } else {
                    pc += 1;
                }
            }
            Instr::Barrier => {
                *pc_io = pc;
                return Ok(Pause::Barrier { pc });
            }
            Instr::Halt => {
                *pc_io = pc;
                return Ok(Pause::Done);
            }
        }
    }
}

#[inline]
fn cmp<T: PartialOrd>(op: CmpOp, x: T, y: T) -> u32 {
    let r = match op {
        CmpOp::Lt => x < y,
        CmpOp::Le => x <= y,
        CmpOp::Gt => x > y,
        CmpOp::Ge => x >= y,
        CmpOp::Eq => x == y,
        CmpOp::Ne => x != y,
    };
    r as u32
}
