use std::time::Instant;

fn main() {
    // planning-shaped GEMMs
    for (m, k, n) in [
        (8192usize, 64usize, 64usize),
        (8192, 64, 128),
        (8192, 16, 129),
        (1024, 64, 64),
    ] {
        let a = vec![1.0f32; m * k];
        let b = vec![1.0f32; k * n];
        let mut c = vec![0.0f32; m * n];
        let mut best = f64::MAX;
        for _ in 0..5 {
            let t0 = Instant::now();
            autograd::kernels::sgemm(m, k, n, &a, &b, &mut c);
            best = best.min(t0.elapsed().as_secs_f64());
        }
        let gflop = 2.0 * (m * k * n) as f64 / 1e9;
        println!("{m}x{k}x{n}: {:.3} ms, {:.1} GFLOP/s", best * 1e3, gflop / best);
    }

    // causal self-attention pattern: per (sample, head) strided gemms,
    // 256 samples x 4 heads, seq 32, head dim 16, model width 64
    let (batch, heads, seq, d) = (256usize, 4usize, 32usize, 16usize);
    let c_width = heads * d;
    let q = vec![0.5f32; batch * seq * c_width];
    let key = vec![0.5f32; batch * seq * c_width];
    let v = vec![0.5f32; batch * seq * c_width];
    let mut w = vec![0.0f32; seq * seq];
    let mut out = vec![0.0f32; batch * seq * c_width];
    let mut best = f64::MAX;
    for _ in 0..5 {
        let t0 = Instant::now();
        for b in 0..batch {
            for h in 0..heads {
                let q_off = b * seq * c_width + h * d;
                autograd::kernels::sgemm_strided(
                    seq, d, seq, 0.25, &q[q_off..], c_width, 1, &key[q_off..], 1, c_width,
                    0.0, &mut w, seq, 1,
                );
                for i in 0..seq {
                    let row = &mut w[i * seq..(i + 1) * seq];
                    let mut s = 0.0f32;
                    for x in row[..=i].iter_mut() {
                        *x = x.exp();
                        s += *x;
                    }
                    let inv = 1.0 / s;
                    for x in row[..=i].iter_mut() {
                        *x *= inv;
                    }
                    row[i + 1..].fill(0.0);
                }
                autograd::kernels::sgemm_strided(
                    seq, seq, d, 1.0, &w, seq, 1, &v[q_off..], c_width, 1, 0.0,
                    &mut out[q_off..], c_width, 1,
                );
            }
        }
        best = best.min(t0.elapsed().as_secs_f64());
    }
    println!("self-attn 256x4 bh gemms: {:.3} ms", best * 1e3);
}
