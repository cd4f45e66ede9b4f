use crate::ast::*;
use crate::coarsen::*;
use crate::interp::{interpret, BufferData, BufferSet, LaunchConfig, ScalarValue};
use crate::metrics::{barrier_count, instruction_mix};
use crate::parser::parse_kernel;
use crate::printer::print_kernel;

pub const MULT: &str = "
__kernel void multiplication(__global float *in0, __global float *in1, int N, __global float *out0) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        float r0 = in1[gid];
        float r1 = in0[gid];
        float r2 = r1 * r0;
        out0[gid] = r2;
    }
}";

/// The consecutive-coarsened template at degree 2: scaled loop header, lane
/// index declarations, then clustered loads / arithmetic / stores with `_k`
/// renaming. Load sources per register follow the input kernel.
const MULT_CON2: &str = "
__kernel void thc_multiplication_c(__global float *in0, __global float *in1, int N, __global float *out0) {
    for (int gid = get_global_id(0) * 2; gid < N; gid += get_global_size(0) * 2) {
        int gid_0 = gid + 0;
        int gid_1 = gid + 1;
        float r0_0 = in1[gid_0];
        float r1_0 = in0[gid_0];
        float r0_1 = in1[gid_1];
        float r1_1 = in0[gid_1];
        float r2_0 = r1_0 * r0_0;
        float r2_1 = r1_1 * r0_1;
        out0[gid_0] = r2_0;
        out0[gid_1] = r2_1;
    }
}";

const MULT_GAP2: &str = "
__kernel void thc_multiplication_g(__global float *in0, __global float *in1, int N, __global float *out0) {
    int gapped_length = N / 2;
    for (int gid = get_global_id(0); gid < gapped_length; gid += get_global_size(0)) {
        int gid_0 = gid + gapped_length * 0;
        int gid_1 = gid + gapped_length * 1;
        float r0_0 = in1[gid_0];
        float r1_0 = in0[gid_0];
        float r0_1 = in1[gid_1];
        float r1_1 = in0[gid_1];
        float r2_0 = r1_0 * r0_0;
        float r2_1 = r1_1 * r0_1;
        out0[gid_0] = r2_0;
        out0[gid_1] = r2_1;
    }
}";

#[test]
fn consecutive_degree2_matches_template() {
    let k = parse_kernel(MULT).unwrap();
    let got = coarsen(&k, &CoarsenConfig::consecutive(2)).unwrap();
    let want = parse_kernel(MULT_CON2).unwrap();
    assert!(
        got.same_structure(&want),
        "structural mismatch\n--- got ---\n{}\n--- want ---\n{}",
        print_kernel(&got),
        print_kernel(&want)
    );
}

#[test]
fn gapped_degree2_matches_template() {
    let k = parse_kernel(MULT).unwrap();
    let got = coarsen(&k, &CoarsenConfig::gapped(2, "N")).unwrap();
    let want = parse_kernel(MULT_GAP2).unwrap();
    assert!(
        got.same_structure(&want),
        "structural mismatch\n--- got ---\n{}\n--- want ---\n{}",
        print_kernel(&got),
        print_kernel(&want)
    );
}

#[test]
fn degree1_is_pure_identity() {
    let k = parse_kernel(MULT).unwrap();
    for cfg in [CoarsenConfig::consecutive(1), CoarsenConfig::gapped(1, "N")] {
        assert_eq!(coarsen(&k, &cfg).unwrap(), k);
    }
}

#[test]
fn coarsened_output_reparses_and_typechecks() {
    let k = parse_kernel(MULT).unwrap();
    for degree in [2u32, 4, 8] {
        for cfg in [CoarsenConfig::consecutive(degree), CoarsenConfig::gapped(degree, "N")] {
            let out = coarsen(&k, &cfg).unwrap();
            let reparsed = parse_kernel(&print_kernel(&out)).unwrap();
            assert_eq!(out, reparsed);
            crate::types::typecheck(&out).unwrap();
        }
    }
}

#[test]
fn statement_accounting_scales_by_degree() {
    let k = parse_kernel(MULT).unwrap();
    let base = instruction_mix(&k);
    for degree in [2u32, 4, 8] {
        for cfg in [CoarsenConfig::consecutive(degree), CoarsenConfig::gapped(degree, "N")] {
            let out = coarsen(&k, &cfg).unwrap();
            let mix = instruction_mix(&out);
            let c = degree as usize;
            assert_eq!(mix.loads, base.loads * c, "{cfg:?}");
            assert_eq!(mix.stores, base.stores * c, "{cfg:?}");
            assert_eq!(mix.arith, base.arith * c, "{cfg:?}");
        }
    }
}

#[test]
fn barriers_are_never_replicated() {
    let src = "
__kernel void stage(__global float *a, __global float *b, int N) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        float x = a[gid];
        barrier(CLK_GLOBAL_MEM_FENCE);
        b[gid] = x * 2.0f;
    }
}";
    let k = parse_kernel(src).unwrap();
    let out = coarsen(&k, &CoarsenConfig::consecutive(4)).unwrap();
    assert_eq!(barrier_count(&out), 1);
    let mix = instruction_mix(&out);
    assert_eq!(mix.loads, 4);
    assert_eq!(mix.stores, 4);
}

#[test]
fn local_arrays_are_emitted_once() {
    let src = "
__kernel void tilecopy(__global float *a, __global float *b) {
    __local float tile[64];
    tile[get_local_id(0)] = a[get_global_id(0)];
    barrier(CLK_LOCAL_MEM_FENCE);
    b[get_global_id(0)] = tile[get_local_id(0)];
}";
    let k = parse_kernel(src).unwrap();
    let out = coarsen(&k, &CoarsenConfig::consecutive(2)).unwrap();
    let printed = print_kernel(&out);
    assert_eq!(printed.matches("__local float tile[64];").count(), 1, "{printed}");
    assert_eq!(barrier_count(&out), 1);
}

#[test]
fn divergent_region_is_replicated_whole() {
    let src = "
__kernel void branchy(__global float *a, __global float *o, int N) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        float x = a[gid];
        if (get_global_id(0) % 2 == 0) {
            x = x + 1.0f;
        }
        o[gid] = x;
    }
}";
    let k = parse_kernel(src).unwrap();
    let out = coarsen(&k, &CoarsenConfig::consecutive(2)).unwrap();
    let printed = print_kernel(&out);
    // One if per lane, each with the lane's reconstructed original id.
    assert_eq!(printed.matches("if (").count(), 2, "{printed}");
    assert!(printed.contains("get_global_id(0) * 2 + 0"), "{printed}");
    assert!(printed.contains("get_global_id(0) * 2 + 1"), "{printed}");
}

#[test]
fn uniform_control_flow_stays_single() {
    let src = "
__kernel void unif(__global float *a, __global float *o, int N) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        float acc = a[gid];
        for (int i0 = 0; i0 < 5; i0++) {
            acc = acc + 1.0f;
        }
        o[gid] = acc;
    }
}";
    let k = parse_kernel(src).unwrap();
    let out = coarsen(&k, &CoarsenConfig::consecutive(2)).unwrap();
    let printed = print_kernel(&out);
    // Grid loop + one inner loop, not one per lane.
    assert_eq!(printed.matches("for (").count(), 2, "{printed}");
    // Lane copies of the accumulation live inside the single inner loop.
    assert!(printed.contains("acc_0 = acc_0 + 1.0f;"), "{printed}");
    assert!(printed.contains("acc_1 = acc_1 + 1.0f;"), "{printed}");
}

#[test]
fn renaming_avoids_collisions() {
    let src = "
__kernel void clash(__global float *a, __global float *o, int N) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        int r0_0 = 1;
        float r0 = a[gid];
        o[gid] = r0 + r0_0;
    }
}";
    let k = parse_kernel(src).unwrap();
    let out = coarsen(&k, &CoarsenConfig::consecutive(2)).unwrap();
    let printed = print_kernel(&out);
    // `r0` cannot take suffix `_0`/`_1` (collides with existing `r0_0`), so
    // it falls back to `__k`.
    assert!(printed.contains("float r0__0 = "), "{printed}");
    assert!(printed.contains("float r0__1 = "), "{printed}");
    parse_kernel(&printed).expect("coarsened output must reparse");
}

#[test]
fn non_1d_kernels_are_rejected() {
    let k = parse_kernel(
        "__kernel void k2(__global float *a) { a[get_global_id(1)] = 1.0f; }",
    )
    .unwrap();
    let err = coarsen(&k, &CoarsenConfig::consecutive(2)).unwrap_err();
    assert!(matches!(err, CoarsenError::NotOneDimensional(_, 1)), "{err}");
}

#[test]
fn gapped_requires_extent_and_grid_loop() {
    let k = parse_kernel(MULT).unwrap();
    let mut cfg = CoarsenConfig::gapped(2, "N");
    cfg.extent_param = None;
    assert!(matches!(coarsen(&k, &cfg).unwrap_err(), CoarsenError::MissingExtent));

    let cfg_bad = CoarsenConfig::gapped(2, "in0");
    assert!(matches!(coarsen(&k, &cfg_bad).unwrap_err(), CoarsenError::BadExtent(_)));

    let no_loop = parse_kernel(
        "__kernel void flat(__global float *a, int N) { a[get_global_id(0)] = 1.0f; }",
    )
    .unwrap();
    assert!(matches!(
        coarsen(&no_loop, &CoarsenConfig::gapped(2, "N")).unwrap_err(),
        CoarsenError::GappedNeedsGridLoop
    ));

    let wrong_bound = parse_kernel(
        "__kernel void wb(__global float *a, int N) {
            for (int gid = get_global_id(0); gid < N - 1; gid += get_global_size(0)) {
                a[gid] = 1.0f;
            }
        }",
    )
    .unwrap();
    assert!(matches!(
        coarsen(&wrong_bound, &CoarsenConfig::gapped(2, "N")).unwrap_err(),
        CoarsenError::BoundNotExtent(_)
    ));
}

#[test]
fn barrier_inside_divergent_region_is_rejected() {
    let src = "
__kernel void bad(__global float *a, __global float *o, int N) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        if (get_global_id(0) % 2 == 0) {
            barrier(CLK_LOCAL_MEM_FENCE);
        }
        o[gid] = a[gid];
    }
}";
    let k = parse_kernel(src).unwrap();
    let err = coarsen(&k, &CoarsenConfig::consecutive(2)).unwrap_err();
    assert!(matches!(err, CoarsenError::BarrierInDivergentRegion), "{err}");
}

#[test]
fn gapped_with_barrier_is_rejected() {
    let src = "
__kernel void gb(__global float *a, int N) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        barrier(CLK_GLOBAL_MEM_FENCE);
        a[gid] = 1.0f;
    }
}";
    let k = parse_kernel(src).unwrap();
    let err = coarsen(&k, &CoarsenConfig::gapped(2, "N")).unwrap_err();
    assert!(matches!(err, CoarsenError::Unsupported(_)), "{err}");
}

#[test]
fn require_divisible_records_obligation_comment() {
    let k = parse_kernel(MULT).unwrap();
    let out = coarsen(&k, &CoarsenConfig::gapped(4, "N")).unwrap();
    assert!(
        out.header_comments.iter().any(|c| c.contains("divisible by 4")),
        "{:?}",
        out.header_comments
    );
}

// ---- semantic equivalence through the interpreter --------------------------

fn mult_inputs(n: usize, salt: u32) -> BufferSet {
    let mut bufs = BufferSet::default();
    let f = |i: usize, a: u32| ((i as u32).wrapping_mul(2654435761).wrapping_add(a) % 1000) as f32 * 0.25;
    bufs.insert_buffer("in0", BufferData::Float((0..n).map(|i| f(i, salt)).collect()));
    bufs.insert_buffer("in1", BufferData::Float((0..n).map(|i| f(i, salt ^ 77)).collect()));
    bufs.insert_buffer("out0", BufferData::Float(vec![0.0; n]));
    bufs.insert_scalar("N", ScalarValue::Int(n as i32));
    bufs
}

fn assert_equivalent(src: &str, bufs: &BufferSet, g: u32, degrees: &[u32]) {
    let k = parse_kernel(src).unwrap();
    let base = interpret(&k, LaunchConfig::new(g), bufs).unwrap();
    for &c in degrees {
        for cfg in [CoarsenConfig::consecutive(c), CoarsenConfig::gapped(c, "N")] {
            let t = coarsen(&k, &cfg).unwrap();
            let r = interpret(&t, LaunchConfig::new(g / c), bufs)
                .unwrap_or_else(|e| panic!("{cfg:?}: {e}\n{}", print_kernel(&t)));
            assert_eq!(base.buffers, r.buffers, "{cfg:?}\n{}", print_kernel(&t));
        }
    }
}

#[test]
fn multiplication_equivalence_all_degrees() {
    let n = 256;
    assert_equivalent(MULT, &mult_inputs(n, 3), 64, &[2, 4, 8]);
    // More elements than work-items: several grid-loop trips.
    assert_equivalent(MULT, &mult_inputs(1024, 9), 64, &[2, 4, 8]);
}

#[test]
fn id_dependent_branch_equivalence() {
    let src = "
__kernel void idb(__global float *in0, __global float *in1, int N, __global float *out0) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        float x = in0[gid];
        float y = in1[gid];
        if (get_global_id(0) % 2 == 0) {
            x = x * y;
        } else {
            x = x + y;
        }
        out0[gid] = x;
    }
}";
    assert_equivalent(src, &mult_inputs(512, 41), 64, &[2, 4, 8]);
}

#[test]
fn data_dependent_branch_equivalence() {
    let src = "
__kernel void ddb(__global float *in0, __global float *in1, int N, __global float *out0) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        float x = in0[gid];
        if (in1[gid] < 100.0f) {
            x = x + 1.0f;
        }
        out0[gid] = x;
    }
}";
    assert_equivalent(src, &mult_inputs(512, 5), 64, &[2, 4, 8]);
}

#[test]
fn consecutive_composition_matches_degree4() {
    let k = parse_kernel(MULT).unwrap();
    let twice = coarsen(
        &coarsen(&k, &CoarsenConfig::consecutive(2)).unwrap(),
        &CoarsenConfig::consecutive(2),
    )
    .unwrap();
    let four = coarsen(&k, &CoarsenConfig::consecutive(4)).unwrap();
    let n = 512;
    let bufs = mult_inputs(n, 13);
    let a = interpret(&twice, LaunchConfig::new(32), &bufs).unwrap();
    let b = interpret(&four, LaunchConfig::new(32), &bufs).unwrap();
    assert_eq!(a.buffers, b.buffers);
}

#[test]
fn consecutive_barrier_kernel_equivalence() {
    let src = "
__kernel void tileshift(__global float *a, __global float *b) {
    __local float tile[16];
    tile[get_local_id(0)] = a[get_global_id(0)];
    barrier(CLK_LOCAL_MEM_FENCE);
    b[get_global_id(0)] = tile[get_local_size(0) - 1 - get_local_id(0)];
}";
    let k = parse_kernel(src).unwrap();
    let n = 64usize;
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("a", BufferData::Float((0..n).map(|i| i as f32).collect()));
    bufs.insert_buffer("b", BufferData::Float(vec![0.0; n]));
    let base = interpret(&k, LaunchConfig::with_local(64, 16), &bufs).unwrap();
    for c in [2u32, 4] {
        let t = coarsen(&k, &CoarsenConfig::consecutive(c)).unwrap();
        let r = interpret(&t, LaunchConfig::with_local(64 / c, 16 / c), &bufs)
            .unwrap_or_else(|e| panic!("degree {c}: {e}\n{}", print_kernel(&t)));
        assert_eq!(base.buffers, r.buffers, "degree {c}\n{}", print_kernel(&t));
    }
}

#[test]
fn guard_tails_preserves_ragged_extents() {
    let k = parse_kernel(MULT).unwrap();
    // N not divisible by the degree; guarded lanes must skip the tail.
    let n = 250usize;
    let bufs = mult_inputs(n, 21);
    let base = interpret(&k, LaunchConfig::new(50), &bufs).unwrap();
    for c in [2u32, 4, 8] {
        for kind in [CoarsenKind::Consecutive, CoarsenKind::Gapped] {
            let cfg = CoarsenConfig {
                kind,
                degree: c,
                extent_param: Some("N".into()),
                tail_policy: TailPolicy::GuardTails,
            };
            let t = coarsen(&k, &cfg).unwrap();
            // 50 work-items regardless: the guards handle the remainder.
            let r = interpret(&t, LaunchConfig::new(50), &bufs)
                .unwrap_or_else(|e| panic!("{cfg:?}: {e}\n{}", print_kernel(&t)));
            assert_eq!(base.buffers, r.buffers, "{cfg:?}\n{}", print_kernel(&t));
        }
    }
}

// ---- attribute emission -----------------------------------------------------

#[test]
fn emit_simd_sets_attribute_and_keeps_body() {
    let k = parse_kernel(MULT).unwrap();
    let out = emit_simd(&k, 8).unwrap();
    assert_eq!(out.attrs.simd_lanes, Some(8));
    assert_eq!(out.body, k.body);
    assert_eq!(emit_simd(&k, 1).unwrap().attrs.simd_lanes, None);
}

#[test]
fn emit_simd_rejects_id_dependent_branches() {
    let src = "
__kernel void idb(__global float *o) {
    if (get_global_id(0) % 2 == 0) {
        o[get_global_id(0)] = 1.0f;
    }
}";
    let k = parse_kernel(src).unwrap();
    let err = emit_simd(&k, 2).unwrap_err();
    match err {
        SimdError::IdDependentBranch { conditions } => {
            assert_eq!(conditions, vec!["get_global_id(0) % 2 == 0".to_string()]);
        }
        other => panic!("expected id-dependent-branch error, got {other}"),
    }
}

#[test]
fn emit_simd_accepts_data_dependent_branches() {
    let src = "
__kernel void ddb(__global int *input, __global float *o) {
    if (input[get_global_id(0)] % 2 == 0) {
        o[get_global_id(0)] = 1.0f;
    }
}";
    let k = parse_kernel(src).unwrap();
    assert!(emit_simd(&k, 2).is_ok());
}

#[test]
fn emit_replication_sets_attribute() {
    let k = parse_kernel(MULT).unwrap();
    let out = emit_replication(&k, 4).unwrap();
    assert_eq!(out.attrs.compute_units, Some(4));
    assert_eq!(out.body, k.body);
    // units=1 is the default and prints nothing.
    let one = emit_replication(&k, 1).unwrap();
    assert_eq!(one.attrs.compute_units, None);
    assert!(!print_kernel(&one).contains("num_compute_units"));
}

#[test]
fn coarsen_then_replicate_composes() {
    let k = parse_kernel(MULT).unwrap();
    let out = emit_replication(&coarsen(&k, &CoarsenConfig::consecutive(4)).unwrap(), 2).unwrap();
    assert_eq!(out.attrs.compute_units, Some(2));
    assert!(out.name.starts_with("thc_"));
    let mix = instruction_mix(&out);
    assert_eq!(mix.loads, 8);
}

// ---- partition laws ----------------------------------------------------------

#[test]
fn index_partition_enumeration() {
    for g in [8u64, 16, 64] {
        for c in [1u64, 2, 4, 8] {
            let n = g;
            // Consecutive: { merged_id * C + k }.
            let mut seen = vec![0u32; n as usize];
            for id in 0..g / c {
                for k in 0..c {
                    seen[(id * c + k) as usize] += 1;
                }
            }
            assert!(seen.iter().all(|&x| x == 1), "consecutive G={g} C={c}");
            // Gapped: { id + (N/C) * k }.
            let mut seen = vec![0u32; n as usize];
            let gl = n / c;
            for id in 0..gl {
                for k in 0..c {
                    seen[(id + gl * k) as usize] += 1;
                }
            }
            assert!(seen.iter().all(|&x| x == 1), "gapped G={g} C={c}");
        }
    }
}
