//! Row-major dense helpers.

/// `a (r x k) · b (k x c)`.
pub fn matmul(a: &[f64], r: usize, k: usize, b: &[f64], c: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), k * c);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &mut out[i * c..(i + 1) * c];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * c..(p + 1) * c]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `aᵀ · b` for `a (r x m)`, `b (r x c)`, accumulated into `out (m x c)`.
pub fn matmul_tn_acc(a: &[f64], r: usize, m: usize, b: &[f64], c: usize, out: &mut [f64]) {
    for i in 0..r {
        let brow = &b[i * c..(i + 1) * c];
        for (p, &av) in a[i * m..(i + 1) * m].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * c..(p + 1) * c].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `a (r x k) · bᵀ` for `b (c x k)`.
pub fn matmul_nt(a: &[f64], r: usize, k: usize, b: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..c {
            out[i * c + j] = dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax in place, max-shifted.
pub fn softmax(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// Given softmax output `p` and upstream `dp`, return `d(logits)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner = dot(p, dp);
    p.iter().zip(dp).map(|(pi, di)| pi * (di - inner)).collect()
}
