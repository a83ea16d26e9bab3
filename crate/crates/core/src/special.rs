//! Special functions used by the propagators and the bound checks.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// `J_0(x), …, J_nmax(x)` by Miller's backward recurrence, normalized with
/// `J_0 + 2 Σ J_{2k} = 1`.
///
/// Values keep full relative accuracy far into the tail (`n ≫ x`) until they
/// underflow to zero.
pub fn bessel_j_orders(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = nmax.max(ax.ceil() as usize);
    let mut m = top + 20 + (160.0 * top as f64).sqrt() as usize;
    m += m % 2;

    const BIG: f64 = 1e200;
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=m).rev() {
        let prev = 2.0 * k as f64 / ax * cur - next;
        next = cur;
        cur = prev;
        // cur is now J_{k-1}
        let order = k - 1;
        if order <= nmax {
            out[order] = cur;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > BIG {
            cur /= BIG;
            next /= BIG;
            norm /= BIG;
            for v in out.iter_mut().skip(order) {
                *v /= BIG;
            }
        }
    }
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// One-dimensional free kernel `⟨z|e^{iθΔ}|0⟩ = e^{−2iθ} i^z J_z(2θ)` for
/// `z = 0..=nmax`; the kernel is even in `z`.
pub fn free_kernel_1d(theta: f64, nmax: usize) -> Vec<Complex64> {
    let j = bessel_j_orders(nmax, 2.0 * theta);
    let phase = Complex64::new(0.0, -2.0 * theta).exp();
    let powers = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    j.iter()
        .enumerate()
        .map(|(z, &jz)| phase * powers[z % 4] * jz)
        .collect()
}

/// `ln n!`.
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `ln(e^a + e^b)` without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln( e^{a}·a^{n}/n! )`-style tail term of the free-kernel bound:
/// `ln(e^{r} r^{n} / n!)` with `r = 4dτ`.
pub fn ln_kernel_bound(r: f64, n: u64) -> f64 {
    if r == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    r + n as f64 * r.ln() - ln_factorial(n)
}

/// Smallest `n` with `e^{r} r^{n}/n! < tol`.
pub fn kernel_tail_order(r: f64, tol: f64) -> usize {
    let target = tol.ln();
    let mut n = 0u64;
    while ln_kernel_bound(r, n) >= target {
        n += 1;
    }
    n as usize
}
