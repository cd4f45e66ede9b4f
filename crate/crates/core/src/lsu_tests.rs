use super::*;
use crate::coarsen::{coarsen, CoarsenConfig};
use crate::parser::parse_kernel;

const MULT: &str = "
__kernel void multiplication(__global float *in0, __global float *in1, int N, __global float *out0) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        float r0 = in1[gid];
        float r1 = in0[gid];
        float r2 = r1 * r0;
        out0[gid] = r2;
    }
}";

fn single(report: &LsuReport, ptr: &str, dir: Direction) -> LsuEntry {
    let entries = report.entries_for(ptr, dir);
    assert_eq!(entries.len(), 1, "expected one entry for {ptr:?} {dir:?}: {report:#?}");
    entries[0].clone()
}

#[test]
fn baseline_gets_one_burst_lsu_per_pointer() {
    let k = parse_kernel(MULT).unwrap();
    let report = analyze(&k);
    for ptr in ["in0", "in1"] {
        let e = single(&report, ptr, Direction::Load);
        assert_eq!(e.kind, LsuKind::BurstCoalesced);
        assert_eq!((e.count, e.width_bits, e.cached), (1, 32, false));
    }
    let e = single(&report, "out0", Direction::Store);
    assert_eq!((e.kind, e.count, e.width_bits), (LsuKind::BurstCoalesced, 1, 32));
    assert_eq!(report.entries.len(), 3);
}

#[test]
fn consecutive_8_widens_to_single_512bit_lsu() {
    let k = parse_kernel(MULT).unwrap();
    let t = coarsen(&k, &CoarsenConfig::consecutive(8)).unwrap();
    let report = analyze(&t);
    for (ptr, dir) in [("in0", Direction::Load), ("in1", Direction::Load), ("out0", Direction::Store)] {
        let e = single(&report, ptr, dir);
        assert_eq!(e.kind, LsuKind::BurstCoalesced, "{ptr}");
        assert_eq!((e.count, e.width_bits, e.cached), (1, 512, false), "{ptr}");
    }
}

#[test]
fn gapped_8_gets_eight_32bit_cached_lsus() {
    let k = parse_kernel(MULT).unwrap();
    let t = coarsen(&k, &CoarsenConfig::gapped(8, "N")).unwrap();
    let report = analyze(&t);
    for (ptr, dir) in [("in0", Direction::Load), ("in1", Direction::Load), ("out0", Direction::Store)] {
        let e = single(&report, ptr, dir);
        assert_eq!(e.kind, LsuKind::BurstCoalesced, "{ptr}");
        assert_eq!((e.count, e.width_bits, e.cached), (8, 32, true), "{ptr}");
        assert_eq!(e.cache_bits, Some(DEFAULT_CACHE_BITS), "{ptr}");
    }
}

#[test]
fn direct_id_read_is_prefetching() {
    let k = parse_kernel(
        "__kernel void va(__global float *a, __global float *b, __global float *c) {
            int i = get_global_id(0);
            c[i] = a[i] + b[i];
        }",
    )
    .unwrap();
    let report = analyze(&k);
    for ptr in ["a", "b"] {
        let e = single(&report, ptr, Direction::Load);
        assert_eq!(e.kind, LsuKind::Prefetching, "{ptr}");
        assert_eq!((e.count, e.width_bits), (1, 32));
    }
    // Stores never prefetch.
    let e = single(&report, "c", Direction::Store);
    assert_eq!(e.kind, LsuKind::BurstCoalesced);
}

#[test]
fn data_dependent_index_is_cached_per_site() {
    let k = parse_kernel(
        "__kernel void gather(__global int *idx, __global float *a, __global float *o, int N) {
            for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
                int j = idx[gid];
                float x = a[j];
                float y = a[j + 1];
                o[gid] = x + y;
            }
        }",
    )
    .unwrap();
    let report = analyze(&k);
    let e = single(&report, "a", Direction::Load);
    assert_eq!((e.kind, e.count, e.width_bits, e.cached), (LsuKind::BurstCoalesced, 2, 32, true));
    // The index array itself walks the grid: plain burst.
    let e = single(&report, "idx", Direction::Load);
    assert_eq!((e.kind, e.cached), (LsuKind::BurstCoalesced, false));
}

#[test]
fn divergence_blocks_merging_and_prefetching() {
    let k = parse_kernel(
        "__kernel void div(__global float *a, __global float *o) {
            int i = get_global_id(0);
            if (get_global_id(0) % 2 == 0) {
                o[i] = a[i];
            } else {
                o[i] = a[i + 1];
            }
        }",
    )
    .unwrap();
    let report = analyze(&k);
    // Two load sites in different divergent arms: no prefetching, no merge.
    let e = single(&report, "a", Direction::Load);
    assert_eq!((e.kind, e.count, e.width_bits), (LsuKind::BurstCoalesced, 2, 32));
}

#[test]
fn monotone_coalescing_over_degrees() {
    let k = parse_kernel(MULT).unwrap();
    let base = analyze(&k);
    let base_load_count: u32 =
        base.entries.iter().filter(|e| e.direction == Direction::Load).map(|e| e.count).sum();
    for degree in [2u32, 4, 8] {
        let con = analyze(&coarsen(&k, &CoarsenConfig::consecutive(degree)).unwrap());
        let con_count: u32 =
            con.entries.iter().filter(|e| e.direction == Direction::Load).map(|e| e.count).sum();
        assert_eq!(con_count, base_load_count, "consecutive C={degree} keeps LSU count");
        let expected_width = match degree {
            2 => 128,
            4 => 256,
            8 => 512,
            _ => unreachable!(),
        };
        for e in con.entries.iter().filter(|e| e.direction == Direction::Load) {
            assert_eq!(e.width_bits, expected_width, "consecutive C={degree}");
        }

        let gap = analyze(&coarsen(&k, &CoarsenConfig::gapped(degree, "N")).unwrap());
        let gap_count: u32 =
            gap.entries.iter().filter(|e| e.direction == Direction::Load).map(|e| e.count).sum();
        assert_eq!(gap_count, base_load_count * degree, "gapped C={degree} multiplies LSU count");
        for e in gap.entries.iter().filter(|e| e.direction == Direction::Load) {
            assert_eq!(e.width_bits, 32, "gapped C={degree} keeps 32-bit widths");
        }
    }
}

#[test]
fn width_never_exceeds_512_and_c16_splits() {
    let k = parse_kernel(MULT).unwrap();
    let t = coarsen(&k, &CoarsenConfig::consecutive(16)).unwrap();
    let report = analyze(&t);
    for e in &report.entries {
        assert!(e.width_bits <= 512);
    }
    let e = single(&report, "in0", Direction::Load);
    assert_eq!((e.count, e.width_bits), (2, 512));
}

#[test]
fn cache_capacity_is_configurable() {
    let k = parse_kernel(
        "__kernel void g(__global int *idx, __global float *a, __global float *o) {
            int j = idx[get_global_id(0)];
            o[get_global_id(0)] = a[j];
        }",
    )
    .unwrap();
    let report = analyze_with(&k, &LsuConfig { cache_bits: 1 << 22 });
    let e = single(&report, "a", Direction::Load);
    assert_eq!(e.cache_bits, Some(1 << 22));
}

#[test]
fn report_json_is_stable_and_sorted() {
    let k = parse_kernel(MULT).unwrap();
    let report = analyze(&k);
    let json = report.to_json();
    assert_eq!(json, analyze(&k).to_json());
    let pointers: Vec<&str> = report.entries.iter().map(|e| e.pointer.as_str()).collect();
    let mut sorted = pointers.clone();
    sorted.sort();
    assert_eq!(pointers, sorted);
    assert!(json.contains("\"model_version\""));
    let parsed: LsuReport = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed, report);
}
