//! Bessel function of the first kind, order zero.

use std::f64::consts::{FRAC_PI_4, PI};

/// First positive zero of `J0`.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

// Power series below SERIES_LIMIT (little cancellation there), Miller's
// backward recurrence up to ASYMPTOTIC_LIMIT, Hankel expansion beyond.
const SERIES_LIMIT: f64 = 6.0;
const ASYMPTOTIC_LIMIT: f64 = 30.0;

pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < SERIES_LIMIT {
        j0_series(x)
    } else if x < ASYMPTOTIC_LIMIT {
        j0_miller(x)
    } else {
        j0_asymptotic(x)
    }
}

/// Backward recurrence `J_{k−1} = (2k/x)·J_k − J_{k+1}` from far above `x`,
/// normalized with `J0 + 2·Σ J_{2k} = 1`.
fn j0_miller(x: f64) -> f64 {
    let start = 2 * ((x + 20.0 + (40.0 * x).sqrt()) as usize / 2 + 1);
    let (mut above, mut cur) = (0.0f64, 1e-30f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let below = 2.0 * k as f64 / x * cur - above;
        above = cur;
        cur = below;
        // `cur` now holds J_{k-1}
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            above *= 1e-250;
            norm *= 1e-250;
        }
    }
    cur / (norm + cur)
}

fn j0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= -q / (k * k);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > q.sqrt() {
            break;
        }
        k += 1.0;
    }
    sum
}

fn j0_asymptotic(x: f64) -> f64 {
    // c_k = Π_{j≤k} (−(2j−1)²) / (k! (8x)^k); P takes even k, Q odd k.
    let mut p = 1.0;
    let mut q = 0.0;
    let mut c = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        c *= -(odd * odd) / (k as f64 * 8.0 * x);
        if c.abs() >= prev || c.abs() < 1e-18 {
            break;
        }
        prev = c.abs();
        // (−1)^{⌊k/2⌋} sign pattern of the two interleaved series
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * c;
        } else {
            q += sign * c;
        }
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
