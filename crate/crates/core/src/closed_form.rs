//! Analytic reference values for polynomial densities.
//!
//! These share no code with the quadrature path and serve as independent
//! references for it.

/// Evaluate a polynomial with coefficients in increasing degree.
pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn poly_integral(c: &[f64], lo: f64, hi: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(i, &ci)| {
            let p = (i + 1) as i32;
            ci * (hi.powi(p) - lo.powi(p)) / p as f64
        })
        .sum()
}

/// Principal value of `∫_lo^hi f(b)/(1 + bK) db` for polynomial `f`
/// (coefficients in increasing degree). Exact up to rounding.
pub fn pv_polynomial(f: &[f64], k: f64, lo: f64, hi: f64) -> f64 {
    let p = -1.0 / k;
    // synthetic division f(b) = (b - p) q(b) + f(p)
    let n = f.len();
    if n == 0 {
        return 0.0;
    }
    let mut q = vec![0.0; n.saturating_sub(1)];
    let mut carry = 0.0;
    for i in (0..n).rev() {
        let v = f[i] + carry * p;
        if i == 0 {
            carry = v;
        } else {
            q[i - 1] = v;
            carry = v;
        }
    }
    let remainder = carry;
    (poly_integral(&q, lo, hi) + remainder * ((hi - p).abs() / (lo - p).abs()).ln()) / k
}

/// Coefficients of `b ρ(b)` for Beta(2,2) rescaled to [lo, hi].
pub fn beta22_h_coeffs(lo: f64, hi: f64) -> [f64; 4] {
    let w3 = (hi - lo).powi(3);
    [0.0, -6.0 * lo * hi / w3, 6.0 * (lo + hi) / w3, -6.0 / w3]
}

/// Principal-value gradient for the uniform density on [lo, hi].
pub fn uniform_pv_gradient(lo: f64, hi: f64, k: f64) -> f64 {
    let w = hi - lo;
    (w - ((1.0 + hi * k) / (1.0 + lo * k)).abs().ln() / k) / (w * k)
}

/// Cost `E log|1 + BK|` for the uniform density on [lo, hi].
pub fn uniform_cost(lo: f64, hi: f64, k: f64) -> f64 {
    let anti = |b: f64| {
        let v = 1.0 + b * k;
        if v == 0.0 {
            0.0
        } else {
            v / k * (v.abs().ln() - 1.0)
        }
    };
    (anti(hi) - anti(lo)) / (hi - lo)
}
