use super::*;
use crate::parser::parse_kernel;

fn floats(buffers: &BufferSet, name: &str) -> Vec<f32> {
    match buffers.buffer(name).unwrap() {
        BufferData::Float(v) => v.clone(),
        other => panic!("expected float buffer, got {other:?}"),
    }
}

const VECTOR_ADD: &str = "
__kernel void vector_add(__global float *a, __global float *b, __global float *c) {
    int i = get_global_id(0);
    c[i] = a[i] + b[i];
}";

#[test]
fn vector_add_elementwise() {
    let k = parse_kernel(VECTOR_ADD).unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("a", BufferData::Float(vec![1.0, 2.0, 3.0, 4.0]));
    bufs.insert_buffer("b", BufferData::Float(vec![10.0, 20.0, 30.0, 40.0]));
    bufs.insert_buffer("c", BufferData::Float(vec![0.0; 4]));
    let res = interpret(&k, LaunchConfig::new(4), &bufs).unwrap();
    assert_eq!(floats(&res.buffers, "c"), vec![11.0, 22.0, 33.0, 44.0]);
    assert_eq!(res.stats.loads, 8);
    assert_eq!(res.stats.stores, 4);
    assert_eq!(res.stats.arith_ops, 4);
}

const MULT: &str = "
__kernel void multiplication(__global float *in0, __global float *in1, int N, __global float *out0) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        float r0 = in1[gid];
        float r1 = in0[gid];
        float r2 = r1 * r0;
        out0[gid] = r2;
    }
}";

fn mult_buffers(n: usize) -> BufferSet {
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("in0", BufferData::Float(vec![2.0; n]));
    bufs.insert_buffer("in1", BufferData::Float((1..=n).map(|i| i as f32).collect()));
    bufs.insert_buffer("out0", BufferData::Float(vec![0.0; n]));
    bufs.insert_scalar("N", ScalarValue::Int(n as i32));
    bufs
}

#[test]
fn strided_multiplication() {
    let k = parse_kernel(MULT).unwrap();
    let res = interpret(&k, LaunchConfig::new(4), &mult_buffers(4)).unwrap();
    assert_eq!(floats(&res.buffers, "out0"), vec![2.0, 4.0, 6.0, 8.0]);
}

#[test]
fn grid_loop_covers_more_elements_than_items() {
    let k = parse_kernel(MULT).unwrap();
    let res = interpret(&k, LaunchConfig::with_local(4, 2), &mult_buffers(16)).unwrap();
    let expect: Vec<f32> = (1..=16).map(|i| 2.0 * i as f32).collect();
    assert_eq!(floats(&res.buffers, "out0"), expect);
    // 16 elements, 2 loads / 1 mul / 1 store each.
    assert_eq!(res.stats.loads, 32);
    assert_eq!(res.stats.arith_ops, 16);
    assert_eq!(res.stats.stores, 16);
}

#[test]
fn determinism_bit_identical() {
    let k = parse_kernel(MULT).unwrap();
    let a = interpret(&k, LaunchConfig::new(8), &mult_buffers(8)).unwrap();
    let b = interpret(&k, LaunchConfig::new(8), &mult_buffers(8)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn group_order_invariance() {
    let k = parse_kernel(MULT).unwrap();
    let bufs = mult_buffers(64);
    let fwd = interpret_ordered(&k, LaunchConfig::with_local(16, 4), &bufs, GroupOrder::Forward).unwrap();
    let rev = interpret_ordered(&k, LaunchConfig::with_local(16, 4), &bufs, GroupOrder::Reverse).unwrap();
    assert_eq!(fwd.buffers, rev.buffers);
    assert_eq!(fwd.stats, rev.stats);
}

const LOCAL_REVERSE: &str = "
__kernel void reverse_tile(__global float *a, __global float *b) {
    __local float tile[8];
    tile[get_local_id(0)] = a[get_global_id(0)];
    barrier(CLK_LOCAL_MEM_FENCE);
    b[get_global_id(0)] = tile[get_local_size(0) - 1 - get_local_id(0)];
}";

#[test]
fn barrier_orders_local_memory_phases() {
    let k = parse_kernel(LOCAL_REVERSE).unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("a", BufferData::Float((0..16).map(|i| i as f32).collect()));
    bufs.insert_buffer("b", BufferData::Float(vec![0.0; 16]));
    let res = interpret(&k, LaunchConfig::with_local(16, 8), &bufs).unwrap();
    let expect: Vec<f32> = (0..16)
        .map(|i| {
            let group = i / 8;
            let lid = i % 8;
            (group * 8 + (7 - lid)) as f32
        })
        .collect();
    assert_eq!(floats(&res.buffers, "b"), expect);
    assert_eq!(res.stats.barriers, 16);
}

#[test]
fn data_race_two_writers_one_element() {
    let k = parse_kernel(
        "__kernel void clash(__global float *o) {
            o[0] = 1.0f;
        }",
    )
    .unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("o", BufferData::Float(vec![0.0; 4]));
    let err = interpret(&k, LaunchConfig::new(4), &bufs).unwrap_err();
    match err {
        ExecError::DataRace { pointer, index, first, second } => {
            assert_eq!(pointer, "o");
            assert_eq!(index, 0);
            assert_ne!(first, second);
        }
        other => panic!("expected data race, got {other}"),
    }
}

#[test]
fn same_item_may_rewrite_element() {
    let k = parse_kernel(
        "__kernel void twice(__global float *o) {
            int i = get_global_id(0);
            o[i] = 1.0f;
            o[i] = 2.0f;
        }",
    )
    .unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("o", BufferData::Float(vec![0.0; 4]));
    let res = interpret(&k, LaunchConfig::new(4), &bufs).unwrap();
    assert_eq!(floats(&res.buffers, "o"), vec![2.0; 4]);
}

#[test]
fn barrier_separates_write_phases() {
    // Neighbor exchange: without the barrier this would race; with it the
    // same-element writes land in different phases and are legal.
    let k = parse_kernel(
        "__kernel void shift(__global float *o) {
            int lid = get_local_id(0);
            o[lid] = 1.0f;
            barrier(CLK_GLOBAL_MEM_FENCE);
            o[get_local_size(0) - 1 - lid] = 2.0f;
        }",
    )
    .unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("o", BufferData::Float(vec![0.0; 4]));
    let res = interpret(&k, LaunchConfig::new(4), &bufs).unwrap();
    assert_eq!(floats(&res.buffers, "o"), vec![2.0; 4]);
}

#[test]
fn out_of_bounds_reports_item_pointer_index() {
    let k = parse_kernel(
        "__kernel void oob(__global float *a, __global float *o) {
            o[get_global_id(0)] = a[get_global_id(0) + 2];
        }",
    )
    .unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("a", BufferData::Float(vec![0.0; 4]));
    bufs.insert_buffer("o", BufferData::Float(vec![0.0; 4]));
    let err = interpret(&k, LaunchConfig::new(4), &bufs).unwrap_err();
    match err {
        ExecError::OutOfBounds { item, pointer, index, len } => {
            assert_eq!(item, 2);
            assert_eq!(pointer, "a");
            assert_eq!(index, 4);
            assert_eq!(len, 4);
        }
        other => panic!("expected out-of-bounds, got {other}"),
    }
}

#[test]
fn integer_division_semantics() {
    let k = parse_kernel(
        "__kernel void div(__global int *o, int a, int b) {
            o[get_global_id(0)] = a / b;
            o[get_global_id(0) + 1] = a % b;
        }",
    )
    .unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("o", BufferData::Int(vec![0; 2]));
    bufs.insert_scalar("a", ScalarValue::Int(-7));
    bufs.insert_scalar("b", ScalarValue::Int(2));
    let res = interpret(&k, LaunchConfig::new(1), &bufs).unwrap();
    // C truncation toward zero.
    assert_eq!(res.buffers.buffer("o").unwrap(), &BufferData::Int(vec![-3, -1]));

    let mut bufs0 = BufferSet::default();
    bufs0.insert_buffer("o", BufferData::Int(vec![0; 2]));
    bufs0.insert_scalar("a", ScalarValue::Int(1));
    bufs0.insert_scalar("b", ScalarValue::Int(0));
    let err = interpret(&k, LaunchConfig::new(1), &bufs0).unwrap_err();
    assert!(matches!(err, ExecError::DivisionByZero { .. }), "{err}");
}

#[test]
fn barrier_divergence_detected() {
    let k = parse_kernel(
        "__kernel void diverge(__global float *o) {
            if (get_local_id(0) == 0) {
                barrier(CLK_LOCAL_MEM_FENCE);
            }
            o[get_global_id(0)] = 1.0f;
        }",
    )
    .unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("o", BufferData::Float(vec![0.0; 4]));
    let err = interpret(&k, LaunchConfig::new(4), &bufs).unwrap_err();
    assert!(matches!(err, ExecError::BarrierDivergence { .. }), "{err}");
}

#[test]
fn missing_buffer_is_reported() {
    let k = parse_kernel(VECTOR_ADD).unwrap();
    let bufs = BufferSet::default();
    let err = interpret(&k, LaunchConfig::new(4), &bufs).unwrap_err();
    assert!(matches!(err, ExecError::BadBinding(_)), "{err}");
}

#[test]
fn launch_divisibility_checked() {
    let k = parse_kernel(VECTOR_ADD).unwrap();
    let err = interpret(&k, LaunchConfig::with_local(6, 4), &BufferSet::default()).unwrap_err();
    assert!(matches!(err, ExecError::BadLaunch(_)), "{err}");
}

#[test]
fn float_arithmetic_is_ieee_single() {
    let k = parse_kernel(
        "__kernel void acc(__global float *o, float x, float y) {
            o[0] = x + y;
            o[1] = x / y;
            o[2] = sqrt(x);
            o[3] = fabs(0.0f - x);
        }",
    )
    .unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("o", BufferData::Float(vec![0.0; 4]));
    bufs.insert_scalar("x", ScalarValue::Float(0.1));
    bufs.insert_scalar("y", ScalarValue::Float(0.3));
    let res = interpret(&k, LaunchConfig::new(1), &bufs).unwrap();
    let got = floats(&res.buffers, "o");
    assert_eq!(got[0].to_bits(), (0.1f32 + 0.3f32).to_bits());
    assert_eq!(got[1].to_bits(), (0.1f32 / 0.3f32).to_bits());
    assert_eq!(got[2].to_bits(), 0.1f32.sqrt().to_bits());
    assert_eq!(got[3].to_bits(), 0.1f32.to_bits());
}

#[test]
fn uint_wrapping_and_division() {
    let k = parse_kernel(
        "__kernel void u(__global uint *o, uint a, uint b) {
            o[0] = a + b;
            o[1] = a / b;
        }",
    )
    .unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("o", BufferData::Uint(vec![0; 2]));
    bufs.insert_scalar("a", ScalarValue::Uint(u32::MAX));
    bufs.insert_scalar("b", ScalarValue::Uint(2));
    let res = interpret(&k, LaunchConfig::new(1), &bufs).unwrap();
    assert_eq!(res.buffers.buffer("o").unwrap(), &BufferData::Uint(vec![1, u32::MAX / 2]));
}

#[test]
fn short_circuit_evaluation() {
    // The second operand would divide by zero if evaluated.
    let k = parse_kernel(
        "__kernel void sc(__global int *o, int z) {
            if (0 < z && 1 / z > 0) {
                o[0] = 1;
            } else {
                o[0] = 2;
            }
        }",
    )
    .unwrap();
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("o", BufferData::Int(vec![0]));
    bufs.insert_scalar("z", ScalarValue::Int(0));
    let res = interpret(&k, LaunchConfig::new(1), &bufs).unwrap();
    assert_eq!(res.buffers.buffer("o").unwrap(), &BufferData::Int(vec![2]));
}

#[test]
fn taken_branch_counts_under_id_condition() {
    // if-id with modulo-2 condition: exactly G/2 items execute the branch.
    let k = parse_kernel(
        "__kernel void halfsies(__global float *a, __global float *o) {
            float x = a[get_global_id(0)];
            if (get_global_id(0) % 2 == 0) {
                x = x + 1.0f;
                x = x * 2.0f;
            }
            o[get_global_id(0)] = x;
        }",
    )
    .unwrap();
    let g = 64u32;
    let mut bufs = BufferSet::default();
    bufs.insert_buffer("a", BufferData::Float(vec![1.0; g as usize]));
    bufs.insert_buffer("o", BufferData::Float(vec![0.0; g as usize]));
    let res = interpret(&k, LaunchConfig::new(g), &bufs).unwrap();
    assert_eq!(res.stats.arith_ops, (g / 2) as u64 * 2);
    assert_eq!(res.stats.loads, g as u64);
}
