//! Distribution functions for the test statistics.

use std::sync::OnceLock;

use super::special::{ln_gamma_unchecked, norm_cdf, reg_inc_beta_unchecked};
use crate::error::{Error, Result};

/// Upper tail `P(F > f)` of Fisher's F with `(d1, d2)` degrees of freedom.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    reg_inc_beta_unchecked(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

pub fn f_cdf(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    reg_inc_beta_unchecked(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2))
}

/// Student's t CDF with `nu` degrees of freedom.
pub fn t_cdf(t: f64, nu: f64) -> f64 {
    let tail = 0.5 * reg_inc_beta_unchecked(nu / 2.0, 0.5, nu / (nu + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse of [`t_cdf`] by bisection.
pub fn t_quantile(p: f64, nu: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::arg(format!("quantile level {p} outside (0, 1)")));
    }
    if !(nu > 0.0) {
        return Err(Error::arg(format!("degrees of freedom {nu} must be positive")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while t_cdf(lo, nu) > p {
        lo *= 2.0;
    }
    while t_cdf(hi, nu) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, nu) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn gl16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Composite 16-point Gauss–Legendre over `[a, b]` split into `panels`.
fn integrate(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let rule = gl16();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        total += half * rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>();
    }
    total
}

/// Probability that the range of `k` iid standard normals is at most `w`.
fn normal_range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let km1 = (k - 1) as i32;
    let inner = integrate(-8.5, 8.5, 24, |z| {
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let d = norm_cdf(z) - norm_cdf(z - w);
        phi * d.max(0.0).powi(km1)
    });
    (k as f64 * inner).clamp(0.0, 1.0)
}

/// CDF of the studentized range for `k` means and `df` error degrees of
/// freedom: the normal-range CDF averaged over the density of
/// `s = sqrt(χ²_df / df)`.
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::arg(format!("studentized range needs k >= 2, got {k}")));
    }
    if !(df > 0.0) {
        return Err(Error::arg(format!("degrees of freedom {df} must be positive")));
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    if df > 1e5 {
        return Ok(normal_range_cdf(q, k));
    }
    let half = df / 2.0;
    // ln of df^(df/2) / (Γ(df/2) 2^(df/2 − 1))
    let ln_norm = half * df.ln() - ln_gamma_unchecked(half) - (half - 1.0) * std::f64::consts::LN_2;
    let spread = 14.0 * (2.0 * df).sqrt();
    let s_lo = ((df - spread).max(0.0) / df).sqrt();
    let s_hi = ((df + spread + 150.0) / df).sqrt();
    let total = integrate(s_lo, s_hi, 48, |s| {
        if s <= 0.0 {
            return 0.0;
        }
        let ln_dens = ln_norm + (df - 1.0) * s.ln() - 0.5 * df * s * s;
        ln_dens.exp() * normal_range_cdf(q * s, k)
    });
    Ok(total.clamp(0.0, 1.0))
}

/// Asymptotic Kolmogorov upper tail `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // theta-function form, converges fast for small λ
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|j| {
                let m = (2 * j - 1) as f64;
                (-m * m * c).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|j| {
            let j = f64::from(j);
            let sign = if j as i64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * j * j * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// Dallal–Wilkinson approximation to the Lilliefors p-value of a
/// normality KS statistic `d` from `n` observations. Intended for small
/// p-values; larger values are returned uncorrected and capped at 1.
pub fn lilliefors_p(d: f64, n: usize) -> f64 {
    let (mut d, mut nf) = (d, n as f64);
    if n > 100 {
        d *= (nf / 100.0).powf(0.49);
        nf = 100.0;
    }
    let p = (-7.01256 * d * d * (nf + 2.78019) + 2.99587 * d * (nf + 2.78019).sqrt() - 0.122119
        + 0.974598 / nf.sqrt()
        + 1.67997 / nf)
        .exp();
    p.clamp(0.0, 1.0)
}
