use autograd::{Tape, Tensor};
use proptest::prelude::*;

fn finite_vec(len: usize, bound: f32) -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(-bound..bound, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(data in finite_vec(12, 1e4f32)) {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::from_rows(3, 4, data).unwrap());
        let y = tape.softmax_rows(x);
        for row in tape.value(y).chunks(4) {
            let s: f32 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-4, "row sum {s}");
            prop_assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn layernorm_rows_are_standardized(data in finite_vec(20, 1e3f32)) {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::from_rows(4, 5, data).unwrap());
        let gamma = tape.input(&Tensor::from_rows(1, 5, vec![1.0; 5]).unwrap());
        let beta = tape.input(&Tensor::from_rows(1, 5, vec![0.0; 5]).unwrap());
        let y = tape.layernorm(x, gamma, beta).unwrap();
        for row in tape.value(y).chunks(5) {
            let mean: f32 = row.iter().sum::<f32>() / 5.0;
            prop_assert!(mean.abs() < 1e-3, "row mean {mean}");
            let var: f32 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 5.0;
            // rstd uses eps, so variance can only undershoot 1
            prop_assert!(var <= 1.0 + 1e-3, "row var {var}");
        }
    }

    #[test]
    fn forward_backward_stay_finite(
        qd in finite_vec(12, 2.0f32),
        kd in finite_vec(12, 2.0f32),
        vd in finite_vec(12, 2.0f32),
        td in finite_vec(12, 2.0f32),
    ) {
        let mut tape = Tape::new();
        let q = tape.param(&Tensor::from_rows(6, 2, qd).unwrap());
        let kk = tape.param(&Tensor::from_rows(6, 2, kd).unwrap());
        let v = tape.param(&Tensor::from_rows(6, 2, vd).unwrap());
        let t = tape.input(&Tensor::from_rows(6, 2, td).unwrap());
        let att = tape.self_attn_causal(q, kk, v, 2, 1).unwrap();
        let g = tape.gelu(att);
        let loss = tape.mse_loss(g, t).unwrap();
        tape.backward(loss).unwrap();
        prop_assert!(tape.value(loss)[0].is_finite());
        for id in [q, kk, v] {
            prop_assert!(tape.grad(id).unwrap().iter().all(|x| x.is_finite()));
        }
    }
}

/// Changing a masked context token, even to non-finite garbage, must not
/// change the output or the gradients of visible tokens, bit for bit.
#[test]
fn masked_tokens_are_ignored_bitwise() {
    let batch = 2;
    let heads = 2;
    let c = 4;
    let q_len = 2;
    let ctx_len = 3;
    let mut mask = vec![true; batch * ctx_len];
    mask[1] = false; // sample 0, token 1
    mask[5] = false; // sample 1, token 2

    let qd: Vec<f32> = (0..batch * q_len * c).map(|i| (i as f32) * 0.13 - 1.0).collect();
    let base_k: Vec<f32> = (0..batch * ctx_len * c).map(|i| (i as f32) * 0.07 - 0.5).collect();
    let base_v: Vec<f32> = (0..batch * ctx_len * c).map(|i| 0.51 - (i as f32) * 0.05).collect();

    let run = |kd: &[f32], vd: &[f32]| {
        let mut tape = Tape::new();
        let q = tape.param(&Tensor::from_rows(batch * q_len, c, qd.clone()).unwrap());
        let kk = tape.param(&Tensor::from_rows(batch * ctx_len, c, kd.to_vec()).unwrap());
        let v = tape.param(&Tensor::from_rows(batch * ctx_len, c, vd.to_vec()).unwrap());
        let target = tape.input(&Tensor::from_rows(batch * q_len, c, vec![0.25; batch * q_len * c]).unwrap());
        let y = tape
            .cross_attn(q, kk, v, batch, heads, false, Some(mask.clone()))
            .unwrap();
        let loss = tape.mse_loss(y, target).unwrap();
        tape.backward(loss).unwrap();
        let out_bits: Vec<u32> = tape.value(y).iter().map(|x| x.to_bits()).collect();
        let gq: Vec<u32> = tape.grad(q).unwrap().iter().map(|x| x.to_bits()).collect();
        let gk: Vec<f32> = tape.grad(kk).unwrap().to_vec();
        let gv: Vec<f32> = tape.grad(v).unwrap().to_vec();
        (out_bits, gq, gk, gv)
    };

    let (out0, gq0, gk0, gv0) = run(&base_k, &base_v);

    // Masked rows must receive exactly zero gradient.
    for row in [1usize, 5] {
        assert!(gk0[row * c..(row + 1) * c].iter().all(|&g| g == 0.0));
        assert!(gv0[row * c..(row + 1) * c].iter().all(|&g| g == 0.0));
    }

    for garbage in [1e30f32, -4.5, f32::NAN, f32::INFINITY, f32::NEG_INFINITY] {
        let mut kd = base_k.clone();
        let mut vd = base_v.clone();
        for row in [1usize, 5] {
            for i in 0..c {
                kd[row * c + i] = garbage;
                vd[row * c + i] = garbage;
            }
        }
        let (out1, gq1, gk1, gv1) = run(&kd, &vd);
        assert_eq!(out0, out1, "output changed for masked garbage {garbage}");
        assert_eq!(gq0, gq1, "query grad changed for masked garbage {garbage}");
        // Gradients of visible context rows are also unchanged.
        for row in 0..batch * ctx_len {
            if row == 1 || row == 5 {
                continue;
            }
            for i in 0..c {
                assert_eq!(
                    gk0[row * c + i].to_bits(),
                    gk1[row * c + i].to_bits(),
                    "visible key grad changed at row {row}"
                );
                assert_eq!(
                    gv0[row * c + i].to_bits(),
                    gv1[row * c + i].to_bits(),
                    "visible value grad changed at row {row}"
                );
            }
        }
    }
}

#[test]
fn fully_masked_group_is_rejected() {
    let mut tape = Tape::new();
    let q = tape.input(&Tensor::zeros(2, 2));
    let kk = tape.input(&Tensor::zeros(4, 2));
    let v = tape.input(&Tensor::zeros(4, 2));
    // sample 1 has no visible tokens
    let mask = vec![true, true, false, false];
    assert!(tape.cross_attn(q, kk, v, 2, 1, false, Some(mask)).is_err());
}

#[test]
fn repeated_graphs_are_bitwise_deterministic() {
    let build = |tape: &mut Tape| {
        let x = tape.param(&Tensor::from_rows(4, 4, (0..16).map(|i| i as f32 * 0.3 - 2.0).collect()).unwrap());
        let w = tape.param(&Tensor::from_rows(4, 4, (0..16).map(|i| 1.0 - i as f32 * 0.11).collect()).unwrap());
        let t = tape.input(&Tensor::zeros(4, 4));
        let h = tape.matmul(x, w).unwrap();
        let g = tape.gelu(h);
        let att = tape.self_attn_causal(g, g, g, 1, 2).unwrap();
        let loss = tape.mse_loss(att, t).unwrap();
        tape.backward(loss).unwrap();
        (
            tape.value(loss)[0].to_bits(),
            tape.grad(x).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        )
    };
    // Same tape reused (pooled buffers) and a fresh tape must agree.
    let mut tape = Tape::new();
    let first = build(&mut tape);
    tape.reset();
    let second = build(&mut tape);
    let mut fresh = Tape::new();
    let third = build(&mut fresh);
    assert_eq!(first, second);
    assert_eq!(first, third);
}
