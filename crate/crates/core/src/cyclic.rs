//! Direct O(n) solver for periodic two-diagonal systems.
//!
//! The upwind transport operator for one velocity cell couples each spatial
//! cell to its upstream neighbour only, so the implicit system is
//!
//! ```text
//! a_i x_i - c x_{up(i)} = r_i,   i in Z/nZ,
//! ```
//!
//! with `up(i) = i - 1` for positive velocities and `up(i) = i + 1` for
//! negative ones. Forward substitution is carried along with the homogeneous
//! response to the wrap-around unknown, which is then fixed by the periodic
//! closure (the rank-one correction of the cyclic Thomas algorithm).

/// Which neighbour feeds cell `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upstream {
    /// `x_{i-1}` (positive velocity).
    Left,
    /// `x_{i+1}` (negative velocity).
    Right,
}

/// Solve `diag[i] x_i - coupling x_{up(i)} = rhs[i]` periodically.
///
/// Returns `None` if the system is numerically singular, which cannot happen
/// when every `diag[i] > coupling >= 0`.
pub fn solve_periodic_bidiagonal(
    diag: &[f64],
    coupling: f64,
    rhs: &[f64],
    upstream: Upstream,
    out: &mut [f64],
) -> Option<()> {
    let n = diag.len();
    assert!(n > 0 && rhs.len() == n && out.len() == n);
    // Sweep order: downstream direction.
    let order = |k: usize| match upstream {
        Upstream::Left => k,
        Upstream::Right => n - 1 - k,
    };

    // x_k = p_k + h_k s, s the value of the last cell of the sweep.
    let mut h = vec![0.0; n];
    let (mut p_prev, mut h_prev) = (0.0, 1.0);
    for k in 0..n {
        let i = order(k);
        let a = diag[i];
        if !(a > 0.0 && a.is_finite()) {
            return None;
        }
        let p = (rhs[i] + coupling * p_prev) / a;
        let hk = coupling * h_prev / a;
        out[i] = p;
        h[i] = hk;
        p_prev = p;
        h_prev = hk;
    }
    let closure = 1.0 - h_prev;
    if !(closure > f64::EPSILON) {
        return None;
    }
    let s = p_prev / closure;
    for k in 0..n {
        let i = order(k);
        out[i] += h[i] * s;
    }
    Some(())
}
