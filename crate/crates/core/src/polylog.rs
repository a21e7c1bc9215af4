//! Polylogarithms of non-positive integer order.

use crate::error::{Error, Result};

/// Largest order for which the Eulerian numbers stay exact in `f64`.
pub const MAX_ORDER: u32 = 20;

/// Row `m` of the Eulerian triangle, `A(m, 0..m)`.
fn eulerian_row(m: u32) -> Vec<f64> {
    let mut row = vec![1.0];
    for n in 2..=m as usize {
        let mut next = vec![0.0; n];
        for (j, slot) in next.iter_mut().enumerate() {
            let keep = if j < row.len() { (j + 1) as f64 * row[j] } else { 0.0 };
            let shift = if j >= 1 { (n - j) as f64 * row[j - 1] } else { 0.0 };
            *slot = keep + shift;
        }
        row = next;
    }
    row
}

/// `Li_{-m}(z) = Σ_{k≥1} k^m z^k` without range checks.
pub(crate) fn li_neg(m: u32, z: f64) -> f64 {
    if m == 0 {
        return z / (1.0 - z);
    }
    let row = eulerian_row(m);
    // Horner over the Eulerian polynomial
    let poly = row.iter().rev().fold(0.0, |acc, &a| acc * z + a);
    z * poly / (1.0 - z).powi(m as i32 + 1)
}

/// `Li_{-m}(z)` for `0 < z < 1`, via `z·Σ_j A(m,j) z^j / (1-z)^{m+1}`.
pub fn polylog_neg(m: u32, z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::Domain(format!("polylogarithm argument {z} outside (0,1)")));
    }
    if m > MAX_ORDER {
        return Err(Error::Domain(format!("polylogarithm order -{m} below -{MAX_ORDER}")));
    }
    Ok(li_neg(m, z))
}

/// `Σ_{n≥0} n^m z^n`: equals `Li_{-m}(z)` except for `m = 0`, where the
/// `n = 0` term adds one.
pub(crate) fn moment_from_zero(m: u32, z: f64) -> f64 {
    if m == 0 {
        1.0 / (1.0 - z)
    } else {
        li_neg(m, z)
    }
}
