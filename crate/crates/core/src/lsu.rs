//! Prediction of the load-store units an OpenCL-to-FPGA offline compiler
//! instantiates for each global pointer.
//!
//! The model classifies every global access site by its index shape and
//! divergence context, then folds sites into LSU groups:
//!
//! 1. a lone read indexed directly by `get_global_id(0)` outside divergent
//!    control flow streams through a prefetching LSU;
//! 2. sites covering consecutive elements off one base (the footprint of
//!    consecutive coarsening) merge into a single wide burst-coalesced LSU;
//! 3. sites spaced by a runtime stride symbol (the footprint of gapped
//!    coarsening) get one 32-bit burst-coalesced cached LSU each;
//! 4. data-dependent indices get burst-coalesced cached LSUs per site;
//! 5. accesses inside divergent regions never merge with accesses outside.
//!
//! This is a prediction of documented compiler behavior, not ground truth;
//! the report carries a model version so downstream comparisons stay honest.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ast::*;
use crate::grid::as_grid_loop;
use crate::taint::{self, Divergence};

pub const MODEL_VERSION: &str = "lsu-predict-1";

/// Default capacity of the per-LSU cache: 512 kilobits.
pub const DEFAULT_CACHE_BITS: u64 = 524_288;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Load,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsuKind {
    BurstCoalesced,
    Prefetching,
}

/// Index shape of one access site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexClass {
    /// Stride-1 in the work-item id itself.
    ContiguousAffine,
    /// Affine with a non-unit or runtime stride (includes the strided grid
    /// walk, which revisits the pointer at global-size stride per item).
    StridedAffine,
    /// Consecutive elements per merged work-item.
    LaneClusteredContiguous,
    /// The index consumes a loaded value.
    DataDependent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LsuEntry {
    pub pointer: String,
    pub direction: Direction,
    pub kind: LsuKind,
    pub count: u32,
    pub width_bits: u32,
    pub cached: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_bits: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LsuReport {
    pub model_version: String,
    pub entries: Vec<LsuEntry>,
}

impl LsuReport {
    /// Canonical JSON rendering (two-space indent, trailing newline);
    /// byte-stable for golden comparisons.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn entries_for(&self, pointer: &str, direction: Direction) -> Vec<&LsuEntry> {
        self.entries
            .iter()
            .filter(|e| e.pointer == pointer && e.direction == direction)
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LsuConfig {
    pub cache_bits: u64,
}

impl Default for LsuConfig {
    fn default() -> Self {
        LsuConfig { cache_bits: DEFAULT_CACHE_BITS }
    }
}

/// Predict the LSU configuration with the default cache capacity.
pub fn analyze(kernel: &KernelAst) -> LsuReport {
    analyze_with(kernel, &LsuConfig::default())
}

pub fn analyze_with(kernel: &KernelAst, config: &LsuConfig) -> LsuReport {
    let sites = collect_sites(kernel);
    let mut groups: BTreeMap<(String, Direction, u32), Vec<Site>> = BTreeMap::new();
    for site in sites {
        groups
            .entry((site.pointer.clone(), site.direction, site.region))
            .or_default()
            .push(site);
    }

    // (pointer, direction, kind, width, cached) -> count
    let mut folded: BTreeMap<(String, Direction, u8, u32, bool), u32> = BTreeMap::new();
    let mut add = |ptr: &str, dir: Direction, kind: LsuKind, width: u32, cached: bool, n: u32| {
        let kind_tag = match kind {
            LsuKind::BurstCoalesced => 0u8,
            LsuKind::Prefetching => 1u8,
        };
        *folded.entry((ptr.to_string(), dir, kind_tag, width, cached)).or_insert(0) += n;
    };

    for ((ptr, dir, _region), sites) in &groups {
        for unit in classify_group(sites) {
            match unit {
                Unit::Prefetch => add(ptr, *dir, LsuKind::Prefetching, 32, false, 1),
                Unit::Burst32 { count, cached } => {
                    add(ptr, *dir, LsuKind::BurstCoalesced, 32, cached, count)
                }
                Unit::Cluster { lanes } => {
                    let (count, width) = cluster_lsu(lanes);
                    add(ptr, *dir, LsuKind::BurstCoalesced, width, false, count);
                }
            }
        }
    }

    let entries = folded
        .into_iter()
        .map(|((pointer, direction, kind_tag, width_bits, cached), count)| LsuEntry {
            pointer,
            direction,
            kind: if kind_tag == 1 { LsuKind::Prefetching } else { LsuKind::BurstCoalesced },
            count,
            width_bits,
            cached,
            cache_bits: cached.then_some(config.cache_bits),
        })
        .collect();
    LsuReport { model_version: MODEL_VERSION.to_string(), entries }
}

/// Burst-coalesced LSU geometry for a cluster of `m` consecutive 32-bit
/// lanes. Pinned outcomes: one lane stays a 32-bit unit; eight lanes widen
/// to a single 512-bit unit; beyond the 512-bit ceiling the cluster splits.
fn cluster_lsu(m: u32) -> (u32, u32) {
    if m <= 1 {
        return (1, 32);
    }
    let bits = 64 * m;
    if bits <= 512 {
        let width = [64u32, 128, 256, 512].into_iter().find(|w| *w >= bits).unwrap();
        (1, width)
    } else {
        (bits.div_ceil(512), 512)
    }
}

// ---- access-site collection -------------------------------------------------

/// Symbols an affine index can range over.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Sym {
    Var(String),
    GlobalId,
    LocalId,
    GroupId,
    GlobalSize,
    LocalSize,
}

/// `index = sum(coeff * sym) + offset`, or data-dependent / opaque.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Affine {
    terms: BTreeMap<Sym, i64>,
    offset: i64,
    data_dep: bool,
    opaque: bool,
}

impl Affine {
    fn constant(v: i64) -> Self {
        Affine { terms: BTreeMap::new(), offset: v, data_dep: false, opaque: false }
    }

    fn sym(s: Sym) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(s, 1);
        Affine { terms, offset: 0, data_dep: false, opaque: false }
    }

    fn opaque(data_dep: bool) -> Self {
        Affine { terms: BTreeMap::new(), offset: 0, data_dep, opaque: true }
    }

    fn add(mut self, other: &Affine) -> Self {
        self.data_dep |= other.data_dep;
        self.opaque |= other.opaque;
        for (s, c) in &other.terms {
            let e = self.terms.entry(s.clone()).or_insert(0);
            *e += c;
            if *e == 0 {
                self.terms.remove(s);
            }
        }
        self.offset += other.offset;
        self
    }

    fn scale(mut self, k: i64) -> Self {
        if k == 0 {
            return Affine {
                terms: BTreeMap::new(),
                offset: 0,
                data_dep: self.data_dep,
                opaque: self.opaque,
            };
        }
        for c in self.terms.values_mut() {
            *c *= k;
        }
        self.offset *= k;
        self
    }

    fn neg(self) -> Self {
        self.scale(-1)
    }

    fn as_const(&self) -> Option<i64> {
        (!self.opaque && !self.data_dep && self.terms.is_empty()).then_some(self.offset)
    }
}

#[derive(Debug, Clone)]
struct Site {
    pointer: String,
    direction: Direction,
    /// Divergent-scope id: 0 is the transparent top level; each divergent
    /// branch arm or loop body gets a fresh id.
    region: u32,
    index: Affine,
}

struct Collector {
    /// Single-assignment integer definitions eligible for inlining.
    defs: HashMap<String, Expr>,
    taints: HashMap<String, Divergence>,
    array_names: HashSet<String>,
    sites: Vec<Site>,
    region: u32,
    next_region: u32,
    memo: HashMap<String, Affine>,
}

fn collect_sites(kernel: &KernelAst) -> Vec<Site> {
    let mut mutated: HashSet<String> = HashSet::new();
    let mut defs: HashMap<String, Expr> = HashMap::new();
    gather_defs(&kernel.body, &mut defs, &mut mutated);
    for name in &mutated {
        defs.remove(name);
    }
    let array_names = kernel
        .params
        .iter()
        .filter(|p| p.is_pointer)
        .map(|p| p.name.clone())
        .chain(local_array_names(&kernel.body))
        .collect();
    let mut c = Collector {
        defs,
        taints: taint::variable_taints(kernel),
        array_names,
        sites: Vec::new(),
        region: 0,
        next_region: 1,
        memo: HashMap::new(),
    };
    c.walk_block(&kernel.body);
    c.sites
}

fn local_array_names(block: &Block) -> Vec<String> {
    let mut out = Vec::new();
    fn go(block: &Block, out: &mut Vec<String>) {
        for stmt in &block.stmts {
            match stmt {
                Stmt::LocalArray { name, .. } => out.push(name.clone()),
                Stmt::If { then_block, else_block, .. } => {
                    go(then_block, out);
                    if let Some(e) = else_block {
                        go(e, out);
                    }
                }
                Stmt::For { body, .. } => go(body, out),
                Stmt::Block(b) => go(b, out),
                _ => {}
            }
        }
    }
    go(block, &mut out);
    out
}

/// Declarations eligible for inline resolution: assigned exactly once, at
/// their declaration. Loop variables and reassigned variables are opaque.
fn gather_defs(block: &Block, defs: &mut HashMap<String, Expr>, mutated: &mut HashSet<String>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Decl { name, init, .. } => {
                defs.insert(name.clone(), init.clone());
            }
            Stmt::Assign { name, .. } => {
                mutated.insert(name.clone());
            }
            Stmt::If { then_block, else_block, .. } => {
                gather_defs(then_block, defs, mutated);
                if let Some(e) = else_block {
                    gather_defs(e, defs, mutated);
                }
            }
            Stmt::For { init, step, body, .. } => {
                match init {
                    ForInit::Decl { name, .. } => {
                        mutated.insert(name.clone());
                    }
                    ForInit::Assign { name, .. } => {
                        mutated.insert(name.clone());
                    }
                }
                mutated.insert(step.var_name().to_string());
                gather_defs(body, defs, mutated);
            }
            Stmt::Block(b) => gather_defs(b, defs, mutated),
            _ => {}
        }
    }
}

impl Collector {
    fn affine(&mut self, e: &Expr) -> Affine {
        match e {
            Expr::IntLit(v) => Affine::constant(*v),
            Expr::UintLit(v) => Affine::constant(*v as i64),
            Expr::FloatLit(_) => Affine::opaque(false),
            Expr::Var(name) => {
                if let Some(memoed) = self.memo.get(name) {
                    return memoed.clone();
                }
                let resolved = match self.defs.get(name).cloned() {
                    Some(def) => self.affine(&def),
                    None => Affine::sym(Sym::Var(name.clone())),
                };
                self.memo.insert(name.clone(), resolved.clone());
                resolved
            }
            Expr::Load { .. } => Affine::opaque(true),
            Expr::Unary { op, expr } => match op {
                UnOp::Neg => self.affine(expr).neg(),
                UnOp::Not => Affine::opaque(self.affine(expr).data_dep),
            },
            Expr::Binary { op, lhs, rhs } => {
                let a = self.affine(lhs);
                let b = self.affine(rhs);
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.add(&b.neg()),
                    BinOp::Mul => {
                        if let Some(k) = b.as_const() {
                            a.scale(k)
                        } else if let Some(k) = a.as_const() {
                            b.scale(k)
                        } else {
                            Affine::opaque(a.data_dep || b.data_dep)
                        }
                    }
                    _ => Affine::opaque(a.data_dep || b.data_dep),
                }
            }
            Expr::WorkItem { func, dim: 0 } => match func {
                WorkItemFn::GlobalId => Affine::sym(Sym::GlobalId),
                WorkItemFn::LocalId => Affine::sym(Sym::LocalId),
                WorkItemFn::GroupId => Affine::sym(Sym::GroupId),
                WorkItemFn::GlobalSize => Affine::sym(Sym::GlobalSize),
                WorkItemFn::LocalSize => Affine::sym(Sym::LocalSize),
            },
            Expr::WorkItem { .. } => Affine::opaque(false),
            Expr::Math { args, .. } => {
                Affine::opaque(args.iter().any(|a| self.affine(a).data_dep))
            }
        }
    }

    fn record_loads(&mut self, e: &Expr) {
        match e {
            Expr::Load { array, index } => {
                self.record_loads(index);
                if self.array_names.contains(array) {
                    let idx = self.affine(index);
                    self.sites.push(Site {
                        pointer: array.clone(),
                        direction: Direction::Load,
                        region: self.region,
                        index: idx,
                    });
                }
            }
            Expr::Unary { expr, .. } => self.record_loads(expr),
            Expr::Binary { lhs, rhs, .. } => {
                self.record_loads(lhs);
                self.record_loads(rhs);
            }
            Expr::Math { args, .. } => {
                for a in args {
                    self.record_loads(a);
                }
            }
            _ => {}
        }
    }

    fn cond_divergence(&self, cond: &Expr) -> Divergence {
        taint::expr_taint(cond, &self.taints)
    }

    fn enter_region(&mut self) -> u32 {
        let prev = self.region;
        self.region = self.next_region;
        self.next_region += 1;
        prev
    }

    fn walk_block(&mut self, block: &Block) {
        for stmt in &block.stmts {
            match stmt {
                Stmt::Decl { init, .. } => self.record_loads(init),
                Stmt::Assign { value, .. } => self.record_loads(value),
                Stmt::Store { array, index, value } => {
                    self.record_loads(index);
                    self.record_loads(value);
                    if self.array_names.contains(array) {
                        let idx = self.affine(index);
                        self.sites.push(Site {
                            pointer: array.clone(),
                            direction: Direction::Store,
                            region: self.region,
                            index: idx,
                        });
                    }
                }
                Stmt::If { cond, then_block, else_block } => {
                    self.record_loads(cond);
                    let divergent = self.cond_divergence(cond) != Divergence::None;
                    if divergent {
                        let prev = self.enter_region();
                        self.walk_block(then_block);
                        if let Some(e) = else_block {
                            self.enter_region();
                            self.walk_block(e);
                        }
                        self.region = prev;
                    } else {
                        self.walk_block(then_block);
                        if let Some(e) = else_block {
                            self.walk_block(e);
                        }
                    }
                }
                Stmt::For { init, cond, step, body } => {
                    self.record_loads(init.init_expr());
                    self.record_loads(cond);
                    if let ForStep::AddAssign { amount, .. } | ForStep::Assign { value: amount, .. } =
                        step
                    {
                        self.record_loads(amount);
                    }
                    let is_grid = as_grid_loop(stmt).is_some();
                    let divergent = !is_grid && self.cond_divergence(cond) != Divergence::None;
                    if divergent {
                        let prev = self.enter_region();
                        self.walk_block(body);
                        self.region = prev;
                    } else {
                        self.walk_block(body);
                    }
                }
                Stmt::Block(b) => self.walk_block(b),
                Stmt::LocalArray { .. } | Stmt::Barrier { .. } => {}
            }
        }
    }
}

// ---- group classification -----------------------------------------------------

enum Unit {
    Prefetch,
    Burst32 { count: u32, cached: bool },
    Cluster { lanes: u32 },
}

fn classify_group(sites: &[Site]) -> Vec<Unit> {
    let (data_dep, clean): (Vec<&Site>, Vec<&Site>) =
        sites.iter().partition(|s| s.index.data_dep);
    let mut units = Vec::new();
    if !data_dep.is_empty() {
        units.push(Unit::Burst32 { count: data_dep.len() as u32, cached: true });
    }
    if clean.is_empty() {
        return units;
    }
    if clean.len() >= 2 {
        if let Some(lanes) = as_lane_cluster(&clean) {
            units.push(Unit::Cluster { lanes });
            return units;
        }
        if let Some(count) = as_strided_family(&clean) {
            units.push(Unit::Burst32 { count, cached: true });
            return units;
        }
    }
    for site in &clean {
        units.push(classify_single(site));
    }
    units
}

fn classify_single(site: &Site) -> Unit {
    match index_class_single(&site.index) {
        IndexClass::ContiguousAffine if site.direction == Direction::Load && site.region == 0 => {
            Unit::Prefetch
        }
        IndexClass::DataDependent => Unit::Burst32 { count: 1, cached: true },
        _ => Unit::Burst32 { count: 1, cached: false },
    }
}

fn index_class_single(idx: &Affine) -> IndexClass {
    if idx.data_dep {
        return IndexClass::DataDependent;
    }
    if idx.opaque {
        return IndexClass::StridedAffine;
    }
    if idx.terms.len() == 1 {
        if let Some(&1) = idx.terms.get(&Sym::GlobalId) {
            return IndexClass::ContiguousAffine;
        }
    }
    IndexClass::StridedAffine
}

/// All sites share one symbolic base and their constant offsets are the
/// consecutive run `o, o+1, ..., o+m-1`.
fn as_lane_cluster(sites: &[&Site]) -> Option<u32> {
    let first = &sites[0].index;
    if first.opaque {
        return None;
    }
    if !sites.iter().all(|s| !s.index.opaque && s.index.terms == first.terms) {
        return None;
    }
    let mut offsets: Vec<i64> = sites.iter().map(|s| s.index.offset).collect();
    offsets.sort_unstable();
    offsets.dedup();
    if offsets.len() != sites.len() {
        return None;
    }
    let contiguous = offsets.windows(2).all(|w| w[1] == w[0] + 1);
    contiguous.then_some(sites.len() as u32)
}

/// All sites share constant offset and differ only in the coefficient of a
/// single runtime symbol, with coefficients `0..m-1` — the gapped footprint.
fn as_strided_family(sites: &[&Site]) -> Option<u32> {
    if sites.iter().any(|s| s.index.opaque) {
        return None;
    }
    let first = &sites[0].index;
    if !sites.iter().all(|s| s.index.offset == first.offset) {
        return None;
    }
    let mut all_syms: HashSet<&Sym> = HashSet::new();
    for s in sites {
        all_syms.extend(s.index.terms.keys());
    }
    let mut varying: Vec<&Sym> = Vec::new();
    for sym in &all_syms {
        let coeffs: HashSet<i64> =
            sites.iter().map(|s| s.index.terms.get(sym).copied().unwrap_or(0)).collect();
        if coeffs.len() > 1 {
            varying.push(sym);
        }
    }
    if varying.len() != 1 {
        return None;
    }
    let stride_sym = varying[0];
    let mut coeffs: Vec<i64> =
        sites.iter().map(|s| s.index.terms.get(stride_sym).copied().unwrap_or(0)).collect();
    coeffs.sort_unstable();
    let expected: Vec<i64> = (0..sites.len() as i64).collect();
    (coeffs == expected).then_some(sites.len() as u32)
}

#[cfg(test)]
#[path = "lsu_tests.rs"]
mod tests;
