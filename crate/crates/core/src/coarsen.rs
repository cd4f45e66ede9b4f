//! Thread coarsening: merge the work of `C` work-items into one.
//!
//! Two work distributions, following the established templates for a
//! strided grid-loop kernel:
//!
//! * consecutive — the index base becomes `get_global_id(0) * C`, the loop
//!   stride becomes `get_global_size(0) * C`, and lane `k` handles element
//!   `gid + k`;
//! * gapped — `int gapped_length = N / C;` is prepended, the loop bound
//!   becomes `gapped_length`, and lane `k` handles element
//!   `gid + gapped_length * k`.
//!
//! Each lane gets a copy of every statement with region-local variables
//! renamed by a `_k` suffix. Straight-line runs are phase-clustered (all
//! lanes' loads, then all lanes' arithmetic, then all lanes' stores) when
//! the reordering provably preserves every within-lane dependence.
//! Divergent regions are replicated whole per lane; barriers and local
//! arrays are emitted once, never per lane.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::ast::*;
use crate::error::SemanticError;
use crate::grid::{as_grid_loop, GridLoop};
use crate::taint::{self, Divergence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarsenKind {
    Consecutive,
    Gapped,
}

impl CoarsenKind {
    pub fn name_suffix(self) -> &'static str {
        match self {
            CoarsenKind::Consecutive => "c",
            CoarsenKind::Gapped => "g",
        }
    }
}

/// What to do when the element count need not be divisible by the degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailPolicy {
    /// Follow the templates exactly; the divisibility requirement is
    /// recorded as a header comment on the emitted kernel.
    #[default]
    RequireDivisible,
    /// Wrap each lane's work in `if (gid_k < N)`. Preserves semantics for
    /// any extent at the cost of introducing direct divergence.
    GuardTails,
}

/// Lane index within a merged work-item: `0 <= k < degree`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarsenConfig {
    pub kind: CoarsenKind,
    pub degree: u32,
    /// Kernel parameter holding the logical problem size. Required for
    /// gapped coarsening and for guard-tails.
    pub extent_param: Option<String>,
    pub tail_policy: TailPolicy,
}

impl CoarsenConfig {
    pub fn consecutive(degree: u32) -> Self {
        CoarsenConfig {
            kind: CoarsenKind::Consecutive,
            degree,
            extent_param: None,
            tail_policy: TailPolicy::RequireDivisible,
        }
    }

    pub fn gapped(degree: u32, extent_param: &str) -> Self {
        CoarsenConfig {
            kind: CoarsenKind::Gapped,
            degree,
            extent_param: Some(extent_param.to_string()),
            tail_policy: TailPolicy::RequireDivisible,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum CoarsenError {
    #[error("coarsening degree must be at least 1")]
    ZeroDegree,
    #[error("kernel is not one-dimensional: {0} used with dimension {1}")]
    NotOneDimensional(&'static str, u8),
    #[error("gapped coarsening requires an extent parameter naming the problem size")]
    MissingExtent,
    #[error("extent parameter `{0}` is not an int scalar parameter of the kernel")]
    BadExtent(String),
    #[error("gapped coarsening requires the canonical strided grid loop")]
    GappedNeedsGridLoop,
    #[error("gapped coarsening requires the loop bound to be exactly the extent parameter `{0}`")]
    BoundNotExtent(String),
    #[error("unsupported construct for coarsening: {0}")]
    Unsupported(String),
    #[error("coarsening across a barrier inside a divergent region is not supported")]
    BarrierInDivergentRegion,
}

/// Apply thread coarsening. Degree 1 is the identity.
pub fn coarsen(kernel: &KernelAst, cfg: &CoarsenConfig) -> Result<KernelAst, CoarsenError> {
    if cfg.degree == 0 {
        return Err(CoarsenError::ZeroDegree);
    }
    if cfg.degree == 1 {
        return Ok(kernel.clone());
    }
    check_one_dimensional(kernel)?;

    let extent = validate_extent(kernel, cfg)?;
    if cfg.kind == CoarsenKind::Gapped {
        check_gapped_compatible(kernel)?;
    }

    let mut tx = Coarsener::new(kernel, cfg, extent)?;
    let body = tx.kernel_body(&kernel.body)?;

    let mut out = kernel.clone();
    out.name = format!("thc_{}_{}", kernel.name, cfg.kind.name_suffix());
    out.body = body;
    if cfg.tail_policy == TailPolicy::RequireDivisible {
        let what = match &cfg.extent_param {
            Some(n) => format!("`{n}`"),
            None => "the element count".to_string(),
        };
        out.header_comments
            .push(format!("coarsened x{}: requires {} divisible by {}", cfg.degree, what, cfg.degree));
    }
    Ok(out)
}

fn check_one_dimensional(kernel: &KernelAst) -> Result<(), CoarsenError> {
    let mut bad: Option<(&'static str, u8)> = None;
    visit_exprs(&kernel.body, &mut |e| {
        if let Expr::WorkItem { func, dim } = e {
            if *dim != 0 && bad.is_none() {
                bad = Some((func.name(), *dim));
            }
        }
    });
    match bad {
        Some((name, dim)) => Err(CoarsenError::NotOneDimensional(name, dim)),
        None => Ok(()),
    }
}

fn validate_extent(kernel: &KernelAst, cfg: &CoarsenConfig) -> Result<Option<String>, CoarsenError> {
    let needed = cfg.kind == CoarsenKind::Gapped || cfg.tail_policy == TailPolicy::GuardTails;
    match (&cfg.extent_param, needed) {
        (None, true) => Err(CoarsenError::MissingExtent),
        (None, false) => Ok(None),
        (Some(name), _) => {
            let ok = kernel
                .param(name)
                .map(|p| !p.is_pointer && p.ty == ScalarType::Int)
                .unwrap_or(false);
            if ok {
                Ok(Some(name.clone()))
            } else {
                Err(CoarsenError::BadExtent(name.clone()))
            }
        }
    }
}

/// Gapped coarsening scrambles the element-to-work-item mapping, so group
/// structure (barriers, local memory, local/group builtins) cannot be
/// preserved.
fn check_gapped_compatible(kernel: &KernelAst) -> Result<(), CoarsenError> {
    if crate::metrics::barrier_count(kernel) > 0 {
        return Err(CoarsenError::Unsupported(
            "gapped coarsening of a kernel containing barriers".into(),
        ));
    }
    let mut bad: Option<&'static str> = None;
    visit_exprs(&kernel.body, &mut |e| {
        if let Expr::WorkItem { func, .. } = e {
            if matches!(func, WorkItemFn::LocalId | WorkItemFn::LocalSize | WorkItemFn::GroupId)
                && bad.is_none()
            {
                bad = Some(func.name());
            }
        }
    });
    match bad {
        Some(name) => Err(CoarsenError::Unsupported(format!(
            "gapped coarsening of a kernel using {name}"
        ))),
        None => Ok(()),
    }
}

fn visit_exprs<'a>(block: &'a Block, f: &mut impl FnMut(&'a Expr)) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Decl { init, .. } => init.walk(f),
            Stmt::Assign { value, .. } => value.walk(f),
            Stmt::Store { index, value, .. } => {
                index.walk(f);
                value.walk(f);
            }
            Stmt::If { cond, then_block, else_block } => {
                cond.walk(f);
                visit_exprs(then_block, f);
                if let Some(e) = else_block {
                    visit_exprs(e, f);
                }
            }
            Stmt::For { init, cond, step, body } => {
                init.init_expr().walk(f);
                cond.walk(f);
                match step {
                    ForStep::AddAssign { amount, .. } => amount.walk(f),
                    ForStep::Assign { value, .. } => value.walk(f),
                    ForStep::Incr { .. } => {}
                }
                visit_exprs(body, f);
            }
            Stmt::Block(b) => visit_exprs(b, f),
            Stmt::LocalArray { .. } | Stmt::Barrier { .. } => {}
        }
    }
}

fn collect_decl_names(block: &Block, out: &mut BTreeSet<String>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Decl { name, .. } => {
                out.insert(name.clone());
            }
            Stmt::If { then_block, else_block, .. } => {
                collect_decl_names(then_block, out);
                if let Some(e) = else_block {
                    collect_decl_names(e, out);
                }
            }
            Stmt::For { init, body, .. } => {
                if let ForInit::Decl { name, .. } = init {
                    out.insert(name.clone());
                }
                collect_decl_names(body, out);
            }
            Stmt::Block(b) => collect_decl_names(b, out),
            _ => {}
        }
    }
}

fn block_has_barrier(block: &Block) -> bool {
    block.stmts.iter().any(|s| match s {
        Stmt::Barrier { .. } => true,
        Stmt::If { then_block, else_block, .. } => {
            block_has_barrier(then_block)
                || else_block.as_ref().map(block_has_barrier).unwrap_or(false)
        }
        Stmt::For { body, .. } => block_has_barrier(body),
        Stmt::Block(b) => block_has_barrier(b),
        _ => false,
    })
}

fn block_has_local_array(block: &Block) -> bool {
    block.stmts.iter().any(|s| match s {
        Stmt::LocalArray { .. } => true,
        Stmt::If { then_block, else_block, .. } => {
            block_has_local_array(then_block)
                || else_block.as_ref().map(block_has_local_array).unwrap_or(false)
        }
        Stmt::For { body, .. } => block_has_local_array(body),
        Stmt::Block(b) => block_has_local_array(b),
        _ => false,
    })
}

struct Coarsener {
    kind: CoarsenKind,
    degree: u32,
    extent: Option<String>,
    guard_tails: bool,
    /// Per-lane names for every region-local variable (and the index base).
    renames: BTreeMap<String, Vec<String>>,
    /// Names temporarily kept un-renamed (variables of uniform loops that
    /// stay single, shared by all lanes).
    shared: BTreeSet<String>,
    /// Index base variable, when the kernel has one.
    base_var: Option<String>,
    /// Elements per input work-item at the index base (the input kernel's
    /// id multiplier). Consecutive lane `k` sits at `base + k * stride`, so
    /// coarsening composes: re-coarsening a degree-2 kernel offsets lanes
    /// by 2.
    lane_stride: i64,
    /// Fresh name for the gapped extent-division declaration.
    gapped_length: String,
    /// Variable taint for divergence decisions.
    taints: HashMap<String, Divergence>,
}

impl Coarsener {
    fn new(kernel: &KernelAst, cfg: &CoarsenConfig, extent: Option<String>) -> Result<Self, CoarsenError> {
        let mut region_names = BTreeSet::new();
        // The region is the grid-loop body when there is one, otherwise the
        // whole body. Renaming every declaration in the kernel is safe in
        // both cases because names are kernel-wide unique and statements
        // outside the region are required to be uniform.
        collect_decl_names(&kernel.body, &mut region_names);

        let taken = kernel.all_identifiers();
        let mut renames = BTreeMap::new();
        let mut reserved: BTreeSet<String> = taken.clone();
        for name in &region_names {
            let lanes = lane_names(name, cfg.degree, &mut reserved);
            renames.insert(name.clone(), lanes);
        }

        let mut gapped_length = "gapped_length".to_string();
        while reserved.contains(&gapped_length) {
            gapped_length.push('_');
        }
        reserved.insert(gapped_length.clone());

        let taints = taint_map(kernel);

        Ok(Coarsener {
            kind: cfg.kind,
            degree: cfg.degree,
            extent,
            guard_tails: cfg.tail_policy == TailPolicy::GuardTails,
            renames,
            shared: BTreeSet::new(),
            base_var: None,
            lane_stride: 1,
            gapped_length,
            taints,
        })
    }

    fn lanes(&self) -> impl Iterator<Item = LaneId> {
        (0..self.degree).map(LaneId)
    }

    // ---- top level ---------------------------------------------------------

    fn kernel_body(&mut self, body: &Block) -> Result<Block, CoarsenError> {
        let grid_at = body.stmts.iter().position(|s| as_grid_loop(s).is_some());
        match grid_at {
            Some(i) => {
                // Statements around the grid loop stay single copies; they
                // must not depend on work-item identity.
                for (j, stmt) in body.stmts.iter().enumerate() {
                    if j != i {
                        self.check_uniform_outside(stmt)?;
                    }
                }
                let mut stmts = Vec::new();
                if self.kind == CoarsenKind::Gapped {
                    stmts.push(self.gapped_length_decl());
                }
                stmts.extend_from_slice(&body.stmts[..i]);
                let grid = as_grid_loop(&body.stmts[i]).unwrap();
                stmts.push(self.transform_grid_loop(&body.stmts[i], &grid)?);
                stmts.extend_from_slice(&body.stmts[i + 1..]);
                Ok(Block::new(stmts))
            }
            None => {
                if self.kind == CoarsenKind::Gapped {
                    return Err(CoarsenError::GappedNeedsGridLoop);
                }
                let region = self.direct_region(&body.stmts)?;
                Ok(Block::new(region))
            }
        }
    }

    fn check_uniform_outside(&self, stmt: &Stmt) -> Result<(), CoarsenError> {
        let mut bad = false;
        let block = Block::new(vec![stmt.clone()]);
        visit_exprs(&block, &mut |e| {
            if let Expr::WorkItem { func, .. } = e {
                if func.varies_per_item() {
                    bad = true;
                }
            }
        });
        if bad {
            Err(CoarsenError::Unsupported(
                "work-item-dependent statement outside the grid loop".into(),
            ))
        } else {
            Ok(())
        }
    }

    fn gapped_length_decl(&self) -> Stmt {
        let extent = self.extent.as_deref().expect("gapped always has an extent");
        let init = if self.guard_tails {
            // Ceiling division keeps every element covered when the extent
            // is not a multiple of the degree.
            Expr::binary(
                BinOp::Div,
                Expr::add(Expr::var(extent), Expr::int(self.degree as i64 - 1)),
                Expr::int(self.degree as i64),
            )
        } else {
            Expr::binary(BinOp::Div, Expr::var(extent), Expr::int(self.degree as i64))
        };
        Stmt::Decl { ty: ScalarType::Int, name: self.gapped_length.clone(), init }
    }

    fn transform_grid_loop(&mut self, stmt: &Stmt, grid: &GridLoop) -> Result<Stmt, CoarsenError> {
        let Stmt::For { init, cond: _, step, body } = stmt else { unreachable!() };
        self.ensure_no_base_reassign(body, &grid.var)?;
        let mut bad_bound = false;
        grid.bound.walk(&mut |e| {
            if let Expr::WorkItem { func, .. } = e {
                if func.varies_per_item() {
                    bad_bound = true;
                }
            }
        });
        if bad_bound {
            return Err(CoarsenError::Unsupported("grid-loop bound depends on work-item identity".into()));
        }

        let c = self.degree as i64;
        let (new_init, new_cond, new_step) = match self.kind {
            CoarsenKind::Consecutive => {
                let init_expr = Expr::mul(init.init_expr().clone(), Expr::int(c));
                let cond = Expr::binary(
                    BinOp::Lt,
                    Expr::var(&grid.var),
                    self.rewrite_uniform(&grid.bound),
                );
                let ForStep::AddAssign { name, amount } = step else { unreachable!() };
                let step = ForStep::AddAssign {
                    name: name.clone(),
                    amount: Expr::mul(amount.clone(), Expr::int(c)),
                };
                (init_expr, cond, step)
            }
            CoarsenKind::Gapped => {
                let extent = self.extent.as_deref().unwrap();
                if grid.bound != Expr::var(extent) {
                    return Err(CoarsenError::BoundNotExtent(extent.to_string()));
                }
                let cond = Expr::binary(BinOp::Lt, Expr::var(&grid.var), Expr::var(&self.gapped_length));
                (init.init_expr().clone(), cond, step.clone())
            }
        };
        let new_init = match init {
            ForInit::Decl { ty, name, .. } => {
                ForInit::Decl { ty: *ty, name: name.clone(), init: new_init }
            }
            ForInit::Assign { name, .. } => ForInit::Assign { name: name.clone(), value: new_init },
        };

        self.base_var = Some(grid.var.clone());
        if self.kind == CoarsenKind::Consecutive {
            self.lane_stride = grid.init_factor;
        }
        let base_ty = match init {
            ForInit::Decl { ty, .. } => *ty,
            ForInit::Assign { .. } => ScalarType::Int,
        };
        // The loop variable itself is the shared index base; only its
        // per-lane offsets are new declarations.
        self.renames.entry(grid.var.clone()).or_insert_with(|| {
            let mut reserved = BTreeSet::new();
            lane_names(&grid.var, self.degree, &mut reserved)
        });
        self.shared.insert(grid.var.clone());

        let mut inner = Vec::new();
        for lane in self.lanes() {
            inner.push(self.lane_index_decl(&grid.var, base_ty, lane));
        }
        self.shared.remove(&grid.var);
        inner.extend(self.region(&body.stmts)?);

        Ok(Stmt::For { init: new_init, cond: new_cond, step: new_step, body: Block::new(inner) })
    }

    /// `int gid_k = gid + k;` or `int gid_k = gid + gapped_length * k;`
    fn lane_index_decl(&self, base: &str, ty: ScalarType, lane: LaneId) -> Stmt {
        let offset = match self.kind {
            CoarsenKind::Consecutive => Expr::int(lane.0 as i64 * self.lane_stride),
            CoarsenKind::Gapped => {
                Expr::mul(Expr::var(&self.gapped_length), Expr::int(lane.0 as i64))
            }
        };
        Stmt::Decl {
            ty,
            name: self.lane_name(base, lane),
            init: Expr::add(Expr::var(base), offset),
        }
    }

    /// Kernels without a grid loop: coarsen the whole body. A top-level
    /// `int i = get_global_id(0);` declaration, when present, becomes the
    /// shared index base.
    fn direct_region(&mut self, stmts: &[Stmt]) -> Result<Vec<Stmt>, CoarsenError> {
        let base_at = stmts.iter().position(|s| {
            matches!(s, Stmt::Decl { init, .. } if id_factor(init).is_some())
        });
        match base_at {
            None => self.region(stmts),
            Some(i) => {
                let mut out = self.region(&stmts[..i])?;
                let Stmt::Decl { ty, name, init } = &stmts[i] else { unreachable!() };
                self.ensure_no_base_reassign(&Block::new(stmts.to_vec()), name)?;
                out.push(Stmt::Decl {
                    ty: *ty,
                    name: name.clone(),
                    init: Expr::mul(init.clone(), Expr::int(self.degree as i64)),
                });
                self.base_var = Some(name.clone());
                self.lane_stride = id_factor(init).expect("base declaration matched id_factor");
                self.shared.insert(name.clone());
                for lane in self.lanes() {
                    out.push(self.lane_index_decl(name, *ty, lane));
                }
                self.shared.remove(name);
                out.extend(self.region(&stmts[i + 1..])?);
                Ok(out)
            }
        }
    }

    fn ensure_no_base_reassign(&self, block: &Block, base: &str) -> Result<(), CoarsenError> {
        fn assigns(block: &Block, base: &str) -> bool {
            block.stmts.iter().any(|s| match s {
                Stmt::Assign { name, .. } => name == base,
                Stmt::If { then_block, else_block, .. } => {
                    assigns(then_block, base)
                        || else_block.as_ref().map(|e| assigns(e, base)).unwrap_or(false)
                }
                Stmt::For { init, step, body, .. } => {
                    let init_hit = matches!(init, ForInit::Assign { name, .. } if name == base);
                    let step_hit = step.var_name() == base;
                    init_hit || step_hit || assigns(body, base)
                }
                Stmt::Block(b) => assigns(b, base),
                _ => false,
            })
        }
        if assigns(block, base) {
            Err(CoarsenError::Unsupported(format!(
                "reassignment of the index base `{base}` inside the coarsened region"
            )))
        } else {
            Ok(())
        }
    }

    // ---- region transformation ----------------------------------------------

    fn region(&mut self, stmts: &[Stmt]) -> Result<Vec<Stmt>, CoarsenError> {
        if self.guard_tails {
            return self.region_guarded(stmts);
        }
        let mut out = Vec::new();
        let mut run: Vec<Stmt> = Vec::new();
        for stmt in stmts {
            match stmt {
                Stmt::Decl { .. } | Stmt::Assign { .. } | Stmt::Store { .. } => {
                    run.push(stmt.clone());
                }
                Stmt::Barrier { .. } => {
                    self.flush_run(&mut run, &mut out);
                    out.push(stmt.clone());
                }
                Stmt::LocalArray { .. } => {
                    self.flush_run(&mut run, &mut out);
                    out.push(stmt.clone());
                }
                Stmt::If { cond, then_block, else_block } => {
                    self.flush_run(&mut run, &mut out);
                    if self.expr_divergence(cond) == Divergence::None {
                        let then_t = Block::new(self.region(&then_block.stmts)?);
                        let else_t = match else_block {
                            Some(e) => Some(Block::new(self.region(&e.stmts)?)),
                            None => None,
                        };
                        out.push(Stmt::If {
                            cond: self.rewrite_expr(cond, LaneId(0)),
                            then_block: then_t,
                            else_block: else_t,
                        });
                    } else {
                        self.replicate_divergent(stmt, &mut out)?;
                    }
                }
                Stmt::For { init, cond, step, body } => {
                    self.flush_run(&mut run, &mut out);
                    let step_taint = match step {
                        ForStep::AddAssign { amount, .. } => self.expr_divergence(amount),
                        ForStep::Assign { value, .. } => self.expr_divergence(value),
                        ForStep::Incr { .. } => Divergence::None,
                    };
                    let header_taint = self
                        .expr_divergence(init.init_expr())
                        .max(self.expr_divergence(cond))
                        .max(step_taint);
                    if header_taint == Divergence::None {
                        let var = init.var_name().to_string();
                        self.shared.insert(var.clone());
                        let body_t = Block::new(self.region(&body.stmts)?);
                        let new_init = match init {
                            ForInit::Decl { ty, name, init } => ForInit::Decl {
                                ty: *ty,
                                name: name.clone(),
                                init: self.rewrite_expr(init, LaneId(0)),
                            },
                            ForInit::Assign { name, value } => ForInit::Assign {
                                name: name.clone(),
                                value: self.rewrite_expr(value, LaneId(0)),
                            },
                        };
                        let new_cond = self.rewrite_expr(cond, LaneId(0));
                        let new_step = match step {
                            ForStep::AddAssign { name, amount } => ForStep::AddAssign {
                                name: name.clone(),
                                amount: self.rewrite_expr(amount, LaneId(0)),
                            },
                            ForStep::Incr { name } => ForStep::Incr { name: name.clone() },
                            ForStep::Assign { name, value } => ForStep::Assign {
                                name: name.clone(),
                                value: self.rewrite_expr(value, LaneId(0)),
                            },
                        };
                        self.shared.remove(&var);
                        out.push(Stmt::For {
                            init: new_init,
                            cond: new_cond,
                            step: new_step,
                            body: body_t,
                        });
                    } else {
                        self.replicate_divergent(stmt, &mut out)?;
                    }
                }
                Stmt::Block(b) => {
                    self.flush_run(&mut run, &mut out);
                    out.push(Stmt::Block(Block::new(self.region(&b.stmts)?)));
                }
            }
        }
        self.flush_run(&mut run, &mut out);
        Ok(out)
    }

    /// Guard-tails: every lane's work, control flow included, goes behind
    /// `if (gid_k < N)`. Local arrays are hoisted (they stay shared);
    /// barriers cannot appear under a guard.
    fn region_guarded(&mut self, stmts: &[Stmt]) -> Result<Vec<Stmt>, CoarsenError> {
        let as_block = Block::new(stmts.to_vec());
        if block_has_barrier(&as_block) {
            return Err(CoarsenError::BarrierInDivergentRegion);
        }
        let mut out = Vec::new();
        let mut lane_stmts: Vec<Stmt> = Vec::new();
        for stmt in stmts {
            if let Stmt::LocalArray { .. } = stmt {
                out.push(stmt.clone());
            } else {
                lane_stmts.push(stmt.clone());
            }
        }
        if lane_stmts.is_empty() {
            return Ok(out);
        }
        let base = self.base_var.clone().ok_or_else(|| {
            CoarsenError::Unsupported("guard-tails requires an index base variable".into())
        })?;
        let extent = self.extent.clone().expect("guard-tails validated an extent");
        for lane in self.lanes() {
            let copy: Result<Vec<Stmt>, CoarsenError> =
                lane_stmts.iter().map(|s| self.rewrite_stmt(s, lane)).collect();
            out.push(Stmt::If {
                cond: Expr::binary(
                    BinOp::Lt,
                    Expr::var(&self.lane_name(&base, lane)),
                    Expr::var(&extent),
                ),
                then_block: Block::new(copy?),
                else_block: None,
            });
        }
        Ok(out)
    }

    fn replicate_divergent(&mut self, stmt: &Stmt, out: &mut Vec<Stmt>) -> Result<(), CoarsenError> {
        let probe = Block::new(vec![stmt.clone()]);
        if block_has_barrier(&probe) {
            return Err(CoarsenError::BarrierInDivergentRegion);
        }
        if block_has_local_array(&probe) {
            return Err(CoarsenError::Unsupported(
                "local array declaration inside a divergent region".into(),
            ));
        }
        for lane in self.lanes() {
            out.push(self.rewrite_stmt(stmt, lane)?);
        }
        Ok(())
    }

    // ---- straight-line runs ---------------------------------------------------

    fn flush_run(&mut self, run: &mut Vec<Stmt>, out: &mut Vec<Stmt>) {
        if run.is_empty() {
            return;
        }
        let stmts = std::mem::take(run);
        let order = phase_order(&stmts);
        match order {
            Some(perm) => {
                // All lanes' loads, then all lanes' arithmetic, then all
                // lanes' stores; within a phase, lanes in ascending order
                // with each lane's statements in original order.
                for phase in [Phase::Load, Phase::Arith, Phase::Store] {
                    for lane in self.lanes() {
                        for &i in &perm {
                            if classify(&stmts[i]) == phase {
                                let s = self
                                    .rewrite_stmt(&stmts[i], lane)
                                    .expect("straight-line statements always rewrite");
                                out.push(s);
                            }
                        }
                    }
                }
            }
            None => {
                // Dependences forbid clustering; keep each lane sequential.
                for lane in self.lanes() {
                    for s in &stmts {
                        let s = self.rewrite_stmt(s, lane).expect("straight-line statements always rewrite");
                        out.push(s);
                    }
                }
            }
        }
    }

    // ---- renaming & index rewriting ---------------------------------------------

    fn lane_name(&self, name: &str, lane: LaneId) -> String {
        self.renames[name][lane.0 as usize].clone()
    }

    fn rewrite_name(&self, name: &str, lane: LaneId) -> String {
        if self.shared.contains(name) {
            return name.to_string();
        }
        match self.renames.get(name) {
            Some(lanes) => lanes[lane.0 as usize].clone(),
            None => name.to_string(),
        }
    }

    fn expr_divergence(&self, e: &Expr) -> Divergence {
        taint::expr_taint(e, &self.taints)
    }

    /// Uniform expressions (loop bounds kept single) still need size
    /// builtins rescaled.
    fn rewrite_uniform(&self, e: &Expr) -> Expr {
        self.rewrite_expr(e, LaneId(0))
    }

    fn rewrite_expr(&self, e: &Expr, lane: LaneId) -> Expr {
        let c = self.degree as i64;
        match e {
            Expr::Var(name) => Expr::Var(self.rewrite_name(name, lane)),
            Expr::Load { array, index } => Expr::Load {
                array: array.clone(),
                index: Box::new(self.rewrite_expr(index, lane)),
            },
            Expr::Unary { op, expr } => {
                Expr::Unary { op: *op, expr: Box::new(self.rewrite_expr(expr, lane)) }
            }
            Expr::Binary { op, lhs, rhs } => Expr::Binary {
                op: *op,
                lhs: Box::new(self.rewrite_expr(lhs, lane)),
                rhs: Box::new(self.rewrite_expr(rhs, lane)),
            },
            Expr::Math { func, args } => Expr::Math {
                func: *func,
                args: args.iter().map(|a| self.rewrite_expr(a, lane)).collect(),
            },
            Expr::WorkItem { func, dim } => match func {
                // Reconstruct the merged-away work-item's identity.
                WorkItemFn::GlobalId => match self.kind {
                    CoarsenKind::Consecutive => Expr::add(
                        Expr::mul(Expr::global_id(*dim), Expr::int(c)),
                        Expr::int(lane.0 as i64),
                    ),
                    CoarsenKind::Gapped => {
                        // Original id of this lane's current element:
                        // gid_k % (get_global_size(0) * C).
                        let base = self.base_var.as_deref().expect("gapped has a grid loop");
                        Expr::binary(
                            BinOp::Rem,
                            Expr::var(&self.lane_name(base, lane)),
                            Expr::mul(Expr::global_size(*dim), Expr::int(c)),
                        )
                    }
                },
                WorkItemFn::LocalId => Expr::add(
                    Expr::mul(Expr::WorkItem { func: WorkItemFn::LocalId, dim: *dim }, Expr::int(c)),
                    Expr::int(lane.0 as i64),
                ),
                WorkItemFn::GlobalSize | WorkItemFn::LocalSize => {
                    Expr::mul(Expr::WorkItem { func: *func, dim: *dim }, Expr::int(c))
                }
                WorkItemFn::GroupId => e.clone(),
            },
            Expr::IntLit(_) | Expr::UintLit(_) | Expr::FloatLit(_) => e.clone(),
        }
    }

    fn rewrite_stmt(&self, stmt: &Stmt, lane: LaneId) -> Result<Stmt, CoarsenError> {
        Ok(match stmt {
            Stmt::Decl { ty, name, init } => Stmt::Decl {
                ty: *ty,
                name: self.rewrite_name(name, lane),
                init: self.rewrite_expr(init, lane),
            },
            Stmt::Assign { name, value } => Stmt::Assign {
                name: self.rewrite_name(name, lane),
                value: self.rewrite_expr(value, lane),
            },
            Stmt::Store { array, index, value } => Stmt::Store {
                array: array.clone(),
                index: self.rewrite_expr(index, lane),
                value: self.rewrite_expr(value, lane),
            },
            Stmt::If { cond, then_block, else_block } => Stmt::If {
                cond: self.rewrite_expr(cond, lane),
                then_block: self.rewrite_block(then_block, lane)?,
                else_block: match else_block {
                    Some(e) => Some(self.rewrite_block(e, lane)?),
                    None => None,
                },
            },
            Stmt::For { init, cond, step, body } => Stmt::For {
                init: match init {
                    ForInit::Decl { ty, name, init } => ForInit::Decl {
                        ty: *ty,
                        name: self.rewrite_name(name, lane),
                        init: self.rewrite_expr(init, lane),
                    },
                    ForInit::Assign { name, value } => ForInit::Assign {
                        name: self.rewrite_name(name, lane),
                        value: self.rewrite_expr(value, lane),
                    },
                },
                cond: self.rewrite_expr(cond, lane),
                step: match step {
                    ForStep::AddAssign { name, amount } => ForStep::AddAssign {
                        name: self.rewrite_name(name, lane),
                        amount: self.rewrite_expr(amount, lane),
                    },
                    ForStep::Incr { name } => ForStep::Incr { name: self.rewrite_name(name, lane) },
                    ForStep::Assign { name, value } => ForStep::Assign {
                        name: self.rewrite_name(name, lane),
                        value: self.rewrite_expr(value, lane),
                    },
                },
                body: self.rewrite_block(body, lane)?,
            },
            Stmt::Barrier { .. } => return Err(CoarsenError::BarrierInDivergentRegion),
            Stmt::LocalArray { .. } => {
                return Err(CoarsenError::Unsupported(
                    "local array declaration inside a divergent region".into(),
                ))
            }
            Stmt::Block(b) => Stmt::Block(self.rewrite_block(b, lane)?),
        })
    }

    fn rewrite_block(&self, block: &Block, lane: LaneId) -> Result<Block, CoarsenError> {
        let stmts: Result<Vec<Stmt>, CoarsenError> =
            block.stmts.iter().map(|s| self.rewrite_stmt(s, lane)).collect();
        Ok(Block::new(stmts?))
    }
}

/// Matches `get_global_id(0)` possibly scaled by literals, as used for
/// index-base declarations in loop-less kernels.
fn id_factor(e: &Expr) -> Option<i64> {
    match e {
        Expr::WorkItem { func: WorkItemFn::GlobalId, dim: 0 } => Some(1),
        Expr::Binary { op: BinOp::Mul, lhs, rhs } => match (&**lhs, &**rhs) {
            (inner, Expr::IntLit(k)) => id_factor(inner).map(|f| f * k),
            _ => None,
        },
        _ => None,
    }
}

fn lane_names(name: &str, degree: u32, reserved: &mut BTreeSet<String>) -> Vec<String> {
    for sep in ["_", "__", "___"] {
        let candidate: Vec<String> = (0..degree).map(|k| format!("{name}{sep}{k}")).collect();
        if candidate.iter().all(|n| !reserved.contains(n)) {
            for n in &candidate {
                reserved.insert(n.clone());
            }
            return candidate;
        }
    }
    // Three underscore levels exhausted; extend until fresh.
    let mut sep = "___".to_string();
    loop {
        sep.push('_');
        let candidate: Vec<String> = (0..degree).map(|k| format!("{name}{sep}{k}")).collect();
        if candidate.iter().all(|n| !reserved.contains(n)) {
            for n in &candidate {
                reserved.insert(n.clone());
            }
            return candidate;
        }
    }
}

fn taint_map(kernel: &KernelAst) -> HashMap<String, Divergence> {
    taint::variable_taints(kernel)
}

// ---- phase clustering ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Load,
    Arith,
    Store,
}

fn expr_has_load(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |n| {
        if matches!(n, Expr::Load { .. }) {
            found = true;
        }
    });
    found
}

fn classify(stmt: &Stmt) -> Phase {
    match stmt {
        Stmt::Store { .. } => Phase::Store,
        Stmt::Decl { init, .. } if expr_has_load(init) => Phase::Load,
        Stmt::Assign { value, .. } if expr_has_load(value) => Phase::Load,
        _ => Phase::Arith,
    }
}

struct RunStmt {
    phase: Phase,
    def: Option<String>,
    uses: BTreeSet<String>,
    loads: BTreeSet<String>,
    store: Option<String>,
}

fn run_stmt_info(stmt: &Stmt) -> RunStmt {
    let mut uses = BTreeSet::new();
    let mut loads = BTreeSet::new();
    let mut scan = |e: &Expr| {
        e.walk(&mut |n| match n {
            Expr::Var(v) => {
                uses.insert(v.clone());
            }
            Expr::Load { array, .. } => {
                loads.insert(array.clone());
            }
            _ => {}
        });
    };
    let (def, store) = match stmt {
        Stmt::Decl { name, init, .. } => {
            scan(init);
            (Some(name.clone()), None)
        }
        Stmt::Assign { name, value } => {
            scan(value);
            // `x = x + 1` both uses and defines x; uses captured via scan.
            (Some(name.clone()), None)
        }
        Stmt::Store { array, index, value } => {
            scan(index);
            scan(value);
            (None, Some(array.clone()))
        }
        _ => unreachable!("runs contain only straight-line statements"),
    };
    RunStmt { phase: classify(stmt), def, uses, loads, store }
}

/// Stable phase-sorted order of a straight-line run, or `None` when the
/// reordering would break a dependence within one lane.
fn phase_order(stmts: &[Stmt]) -> Option<Vec<usize>> {
    let infos: Vec<RunStmt> = stmts.iter().map(run_stmt_info).collect();
    let mut perm: Vec<usize> = (0..stmts.len()).collect();
    let rank = |p: Phase| match p {
        Phase::Load => 0,
        Phase::Arith => 1,
        Phase::Store => 2,
    };
    perm.sort_by_key(|&i| (rank(infos[i].phase), i));
    let mut pos = vec![0usize; stmts.len()];
    for (p, &i) in perm.iter().enumerate() {
        pos[i] = p;
    }
    for i in 0..stmts.len() {
        for j in (i + 1)..stmts.len() {
            if pos[j] < pos[i] {
                let a = &infos[i];
                let b = &infos[j];
                let true_dep = a.def.as_ref().is_some_and(|d| b.uses.contains(d));
                let anti_dep = b.def.as_ref().is_some_and(|d| a.uses.contains(d));
                let out_dep = a.def.is_some() && a.def == b.def;
                let mem_dep = match (&a.store, &b.store) {
                    (Some(sa), Some(sb)) => sa == sb || b.loads.contains(sa) || a.loads.contains(sb),
                    (Some(sa), None) => b.loads.contains(sa),
                    (None, Some(sb)) => a.loads.contains(sb),
                    (None, None) => false,
                };
                if true_dep || anti_dep || out_dep || mem_dep {
                    return None;
                }
            }
        }
    }
    Some(perm)
}

/// Attach the SIMD-vectorization attribute. Fails when any `if` condition
/// depends on work-item identity: those branches cannot execute in lockstep
/// lanes.
pub fn emit_simd(kernel: &KernelAst, lanes: u32) -> Result<KernelAst, SimdError> {
    if lanes == 0 {
        return Err(SimdError::ZeroLanes);
    }
    let offending = taint::id_dependent_if_conditions(kernel);
    if !offending.is_empty() {
        return Err(SimdError::IdDependentBranch { conditions: offending });
    }
    let mut out = kernel.clone();
    out.attrs.simd_lanes = (lanes != 1).then_some(lanes);
    Ok(out)
}

#[derive(Debug, Clone, Error)]
pub enum SimdError {
    #[error("SIMD lane count must be at least 1")]
    ZeroLanes,
    #[error("kernel has work-item-id-dependent branches and cannot be vectorized: {}", conditions.join("; "))]
    IdDependentBranch { conditions: Vec<String> },
}

/// Attach the pipeline-replication attribute.
pub fn emit_replication(kernel: &KernelAst, units: u32) -> Result<KernelAst, SemanticError> {
    if units == 0 {
        return Err(SemanticError::new("compute-unit count must be at least 1"));
    }
    let mut out = kernel.clone();
    out.attrs.compute_units = (units != 1).then_some(units);
    Ok(out)
}
