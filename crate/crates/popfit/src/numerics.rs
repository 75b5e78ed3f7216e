//! Shared numerical kernels: log-space arithmetic, log-gamma, adaptive
//! quadrature, monotone root inversion, 1-D minimization and small dense
//! linear solves.
//!
//! Everything here is deterministic and allocation-light; the heavier
//! estimation logic builds on these primitives.

/// ln(e^a + e^b) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln(e^a - e^b) for a > b; returns NEG_INFINITY when the difference
/// underflows.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    debug_assert!(a >= b, "log_sub_exp requires a >= b (got {a} < {b})");
    if b == f64::NEG_INFINITY {
        return a;
    }
    let d = b - a;
    if d >= 0.0 {
        return f64::NEG_INFINITY;
    }
    a + (-d.exp()).ln_1p()
}

/// ln(Σ e^{x_i}) over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        if x > hi {
            hi = x;
        }
    }
    if hi == f64::NEG_INFINITY || hi.is_nan() {
        return hi;
    }
    let mut acc = 0.0;
    for &x in xs {
        acc += (x - hi).exp();
    }
    hi + acc.ln()
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0 (got {x})");
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let s = (std::f64::consts::PI * x).sin();
        return std::f64::consts::PI.ln() - s.ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// ln(j!) for integer j.
pub fn ln_factorial(j: u64) -> f64 {
    ln_gamma(j as f64 + 1.0)
}

fn simpson(f0: f64, f1: f64, f2: f64, h: f64) -> f64 {
    h / 6.0 * (f0 + 4.0 * f1 + f2)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on the finite interval [a, b] to
/// absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    adaptive_step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Quadrature over [a, b] where b may be infinite. The interval is split
/// into geometrically growing panels; on an infinite tail the panel loop
/// stops once two consecutive panel contributions fall below `tol / 10`.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    assert!(a >= 0.0 && b > a, "integrate_panels requires 0 <= a < b");
    let mut total = 0.0;
    let mut lo = a;
    // start at the left endpoint's scale so spikes just above `a` get their
    // own panels, but never so small that doubling cannot reach `b`
    let floor = if b.is_finite() { (b - a) / 1e6 } else { 1e-6 };
    let mut width = if a > 0.0 { a.max(floor) } else { floor.max(1e-6) };
    let mut small_streak = 0u32;
    for _ in 0..10_000 {
        let hi = if b.is_finite() { (lo + width).min(b) } else { lo + width };
        let part = integrate(&f, lo, hi, tol / 8.0);
        total += part;
        lo = hi;
        width *= 2.0;
        if b.is_finite() && lo >= b {
            break;
        }
        if !b.is_finite() {
            if part.abs() < tol / 10.0 {
                small_streak += 1;
                if small_streak >= 2 {
                    break;
                }
            } else {
                small_streak = 0;
            }
        }
    }
    total
}

/// ln ∫_a^b e^{g(t)} dt on a finite interval, for integrands whose linear
/// value would over/underflow. The peak of g is probed on linear and
/// geometric grids and factored out; integration then runs twice, the
/// second pass with a tolerance scaled to the first estimate so the result
/// is accurate in relative terms.
pub fn ln_integrate<G: Fn(f64) -> f64>(g: G, a: f64, b: f64, rel_tol: f64) -> f64 {
    assert!(b > a && a >= 0.0);
    let probes = 129;
    let mut peak = f64::NEG_INFINITY;
    for k in 0..=probes {
        let t = a + (b - a) * k as f64 / probes as f64;
        peak = peak.max(g(t));
    }
    // geometric probes catch spikes near a left endpoint many orders of
    // magnitude below the interval width
    if a > 0.0 {
        let mut t = a;
        while t < b {
            peak = peak.max(g(t));
            t *= 1.5;
        }
    }
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let scaled = |t: f64| (g(t) - peak).exp();
    let rough = integrate_panels(scaled, a, b, 1e-6).abs();
    if rough == 0.0 {
        return f64::NEG_INFINITY;
    }
    let fine = integrate_panels(scaled, a, b, rel_tol * rough);
    peak + fine.ln()
}

/// Invert a continuous strictly-increasing function: find t >= 0 with
/// f(t) = target. The bracket grows geometrically from [0, hi0]; bisection
/// stops when |f(t) - target| <= tol_f or the bracket collapses.
pub fn invert_increasing<F: Fn(f64) -> f64>(
    f: F,
    target: f64,
    hi0: f64,
    tol_f: f64,
) -> crate::Result<f64> {
    let mut lo = 0.0_f64;
    let mut hi = hi0.max(1e-12);
    let mut grow = 0;
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 80 {
            return Err(crate::Error::Numerical(format!(
                "target {target} not reachable while inverting (hi = {hi:e})"
            )));
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v - target).abs() <= tol_f {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    let v = f(mid);
    if (v - target).abs() <= tol_f.max(1e-9 * target.abs()) {
        Ok(mid)
    } else {
        Err(crate::Error::Numerical(format!(
            "bisection residual {:.3e} above tolerance {:e}",
            (v - target).abs(),
            tol_f
        )))
    }
}

/// Brent's method for minimizing a 1-D function on [a, b].
/// Returns (argmin, min value).
pub fn brent_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d = 0.0_f64;
    let mut e = 0.0_f64;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-15;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            // Parabolic interpolation through (x, w, v).
            let r = (x - w) * (fx - fv);
            let q0 = (x - v) * (fx - fw);
            let mut p = (x - v) * q0 - (x - w) * r;
            let mut q = 2.0 * (q0 - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            e = d;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if (u - a) < tol2 || (b - u) < tol2 {
                    d = if m > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Least squares min ||A x - b||₂ by Householder QR without pivoting.
/// `a` is row-major rows×cols with rows >= cols. Returns None when R is
/// numerically singular.
pub fn lstsq(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(b.len(), rows);
    if rows < cols || cols == 0 {
        return None;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let mut r_diag_max = 0.0f64;
    for col in 0..cols {
        // Householder vector for column `col` below the diagonal
        let mut norm = 0.0;
        for r in col..rows {
            let v = a[r * cols + col];
            norm += v * v;
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            return None;
        }
        let pivot = a[col * cols + col];
        let alpha = if pivot >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; rows - col];
        v[0] = pivot - alpha;
        for r in col + 1..rows {
            v[r - col] = a[r * cols + col];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in col..cols {
                let mut dot = 0.0;
                for r in col..rows {
                    dot += v[r - col] * a[r * cols + c];
                }
                let scale = 2.0 * dot / vnorm2;
                for r in col..rows {
                    a[r * cols + c] -= scale * v[r - col];
                }
            }
            let mut dot = 0.0;
            for r in col..rows {
                dot += v[r - col] * b[r];
            }
            let scale = 2.0 * dot / vnorm2;
            for r in col..rows {
                b[r] -= scale * v[r - col];
            }
        }
        a[col * cols + col] = alpha;
        r_diag_max = r_diag_max.max(alpha.abs());
    }
    // back substitution on R x = Qᵀb
    let mut x = vec![0.0; cols];
    for col in (0..cols).rev() {
        let d = a[col * cols + col];
        if d.abs() <= 1e-14 * r_diag_max {
            return None;
        }
        let mut s = b[col];
        for c in col + 1..cols {
            s -= a[col * cols + c] * x[c];
        }
        x[col] = s / d;
    }
    Some(x)
}

/// Solve the symmetric positive-definite system G x = b by Cholesky with
/// escalating diagonal jitter. `g` is row-major n*n.
pub fn solve_spd(g: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(g.len(), n * n);
    let scale = (0..n).map(|i| g[i * n + i].abs()).fold(0.0_f64, f64::max).max(1e-300);
    let mut jitter = 1e-13 * scale;
    for _ in 0..8 {
        if let Some(x) = cholesky_solve(g, b, jitter) {
            return Some(x);
        }
        jitter *= 100.0;
    }
    None
}

fn cholesky_solve(g: &[f64], b: &[f64], jitter: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![0.0_f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                let d = s + jitter;
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward + back substitution
    let mut y = vec![0.0_f64; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0_f64; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_add_exp_matches_direct() {
        assert_relative_eq!(log_add_exp(0.0, 0.0), 2.0_f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(
            log_add_exp(-1000.0, -1001.0),
            -1000.0 + (1.0 + (-1.0_f64).exp()).ln(),
            epsilon = 1e-12
        );
        assert_eq!(log_add_exp(f64::NEG_INFINITY, -3.0), -3.0);
    }

    #[test]
    fn log_sum_exp_handles_spread() {
        let xs = [-800.0, -801.0, -1600.0];
        // direct evaluation underflows to ln(0)
        assert!(((-800.0_f64).exp() + (-801.0_f64).exp()).ln().is_infinite());
        let expect = -800.0 + (1.0 + (-1.0_f64).exp()).ln();
        assert_relative_eq!(log_sum_exp(&xs), expect, epsilon = 1e-12);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(2.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(5.0), 24.0_f64.ln(), epsilon = 1e-14);
        // Γ(1/2) = sqrt(π)
        assert_relative_eq!(
            ln_gamma(0.5),
            0.5 * std::f64::consts::PI.ln(),
            epsilon = 1e-14
        );
        // Γ(0.1) via reflection
        assert_relative_eq!(ln_gamma(0.1), 9.513_507_698_668_732_f64.ln(), epsilon = 1e-13);
    }

    #[test]
    fn ln_factorial_agrees_with_product() {
        let mut acc = 0.0;
        for j in 1..=170u64 {
            acc += (j as f64).ln();
            assert_relative_eq!(ln_factorial(j), acc, epsilon = 1e-11, max_relative = 1e-12);
        }
    }

    #[test]
    fn integrate_polynomial_exact() {
        // Simpson is exact on cubics
        let v = integrate(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12);
        assert_relative_eq!(v, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn integrate_gaussian() {
        let v = integrate(|x| (-0.5 * x * x).exp(), -8.0, 8.0, 1e-12);
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn integrate_panels_power_law_tail() {
        // ∫_1^∞ x^{-2.6} dx = 1/1.6
        let v = integrate_panels(|x| x.powf(-2.6), 1.0, f64::INFINITY, 1e-12);
        assert_relative_eq!(v, 1.0 / 1.6, epsilon = 1e-9);
    }

    #[test]
    fn ln_integrate_handles_large_scale() {
        // ∫_0^60 e^{30 + 0·t} dt = 60 e^30 -> ln = 30 + ln 60
        let v = ln_integrate(|_| 30.0, 0.0, 60.0, 1e-12);
        assert_relative_eq!(v, 30.0 + 60.0_f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn invert_increasing_recovers_root() {
        let t = invert_increasing(|t| 1.0 - (-2.0 * t).exp(), 0.5, 1.0, 1e-13).unwrap();
        assert_relative_eq!(t, 0.5 * 2.0_f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn invert_increasing_unreachable_errors() {
        assert!(invert_increasing(|t| 1.0 - (-t).exp(), 2.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn brent_finds_quadratic_minimum() {
        let (x, fx) = brent_min(|x| (x - 1.3) * (x - 1.3) + 0.25, 0.0, 4.0, 1e-12);
        assert_relative_eq!(x, 1.3, epsilon = 1e-8);
        assert_relative_eq!(fx, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn lstsq_overdetermined() {
        // fit y = 2x + 1 over 5 points: exact
        let a = [1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0];
        let b = [1.0, 3.0, 5.0, 7.0, 9.0];
        let x = lstsq(&a, 5, 2, &b).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-12);
        // inconsistent system: least-squares solution
        let b2 = [0.0, 0.0, 0.0, 0.0, 10.0];
        let x2 = lstsq(&a, 5, 2, &b2).unwrap();
        // normal equations: [[5,10],[10,30]] x = [10, 40] -> x = [-2, 2]
        assert_relative_eq!(x2[0], -2.0, epsilon = 1e-10);
        assert_relative_eq!(x2[1], 2.0, epsilon = 1e-10);
        // singular matrix rejected
        let sing = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        assert!(lstsq(&sing, 3, 2, &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn solve_spd_small_system() {
        // G = [[4,2],[2,3]], b = [2, 0] -> x = [0.75, -0.5]
        let x = solve_spd(&[4.0, 2.0, 2.0, 3.0], &[2.0, 0.0]).unwrap();
        assert_relative_eq!(x[0], 0.75, epsilon = 1e-9);
        assert_relative_eq!(x[1], -0.5, epsilon = 1e-9);
    }
}
