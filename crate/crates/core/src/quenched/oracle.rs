use crate::environment::Environment;
use crate::error::{Error, Result};

/// Solves the tridiagonal system `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`
/// by forward elimination and back substitution (`lower[0]` and the last
/// `upper` are ignored).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::Numerical("tridiagonal bands have mismatched lengths".into()));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let (l, prev_c, prev_d) = if i == 0 {
            (0.0, 0.0, 0.0)
        } else {
            (lower[i], c[i - 1], d[i - 1])
        };
        let denom = diag[i] - l * prev_c;
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Numerical(format!("singular tridiagonal system at row {i}")));
        }
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - l * prev_d) / denom;
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Mean and variance of the hitting time of `absorb_at` from `start` for the
/// chain reflected at `reflect_at`, by first-step analysis.
///
/// With `m_x = E^x T` and `s_x = E^x T^2` on `reflect_at <= x < absorb_at`:
/// `m_x = 1 + omega_x m_{x+1} + (1 - omega_x) m_{x-1}` and
/// `s_x = 2 m_x - 1 + omega_x s_{x+1} + (1 - omega_x) s_{x-1}`, where
/// `omega_{reflect_at} = 1` and both vanish at `absorb_at`.
pub fn oracle_moments(env: &Environment, absorb_at: i64, reflect_at: i64, start: i64) -> Result<(f64, f64)> {
    if !(reflect_at <= start && start <= absorb_at) {
        return Err(Error::Domain(format!(
            "need reflect_at <= start <= absorb_at, got {reflect_at}, {start}, {absorb_at}"
        )));
    }
    if start == absorb_at {
        return Ok((0.0, 0.0));
    }
    let n = (absorb_at - reflect_at) as usize;
    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    for k in 0..n {
        let site = reflect_at + k as i64;
        let w = if k == 0 { 1.0 } else { env.omega(site)? };
        lower[k] = -(1.0 - w);
        upper[k] = -w;
    }
    diag[0] = 1.0;
    let m = solve_tridiagonal(&lower, &diag, &upper, &vec![1.0; n])?;
    let rhs: Vec<f64> = m.iter().map(|m| 2.0 * m - 1.0).collect();
    let s = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let k = (start - reflect_at) as usize;
    Ok((m[k], s[k] - m[k] * m[k]))
}

/// `P^x(T_to < T_from)` for every `from <= x <= to`, by solving the harmonic
/// equations directly.
pub fn oracle_hitting_probabilities(env: &Environment, from: i64, to: i64) -> Result<Vec<f64>> {
    if from >= to {
        return Err(Error::EmptyRange { i: from, j: to });
    }
    let n = (to - from - 1) as usize;
    let mut lower = vec![0.0; n];
    let diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        let w = env.omega(from + 1 + k as i64)?;
        lower[k] = -(1.0 - w);
        upper[k] = -w;
        if k + 1 == n {
            rhs[k] = w;
        }
    }
    let inner = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let mut h = Vec::with_capacity(n + 2);
    h.push(0.0);
    h.extend(inner);
    h.push(1.0);
    Ok(h)
}
