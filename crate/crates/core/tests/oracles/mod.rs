//! Slow, obviously-correct reference implementations used to check the
//! library. Nothing in here calls into `leafsev_core` numerics.
#![allow(dead_code)]

use std::f64::consts::PI;

// ---------------------------------------------------------------- min-cut

/// Minimum s-t cut capacity by enumerating every vertex bipartition with
/// `s` on the source side and `t` on the sink side.
pub fn brute_min_cut(n: usize, s: usize, t: usize, arcs: &[(usize, usize, f64)]) -> f64 {
    let free: Vec<usize> = (0..n).filter(|&v| v != s && v != t).collect();
    let mut best = f64::INFINITY;
    for bits in 0u32..(1 << free.len()) {
        let mut side = vec![false; n];
        side[s] = true;
        for (j, &v) in free.iter().enumerate() {
            side[v] = bits >> j & 1 == 1;
        }
        let cap: f64 = arcs.iter().filter(|&&(u, v, _)| side[u] && !side[v]).map(|a| a.2).sum();
        best = best.min(cap);
    }
    best
}

// ---------------------------------------------------------------- k-means

/// Optimal k-means inertia by trying every labelling of the points with at
/// most `k` labels.
pub fn brute_kmeans_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut total = 0.0;
        for c in 0..k {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..dim {
                let mean = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                total += members.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>();
            }
        }
        best = best.min(total);
        // odometer increment in base k
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

// ---------------------------------------------------------------- AP

#[derive(Debug, Clone)]
pub struct OBox {
    pub image: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

fn overlap(a: &OBox, b: &OBox) -> f64 {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    let area = |b: &OBox| (b.x1 - b.x0) * (b.y1 - b.y0);
    inter / (area(a) + area(b) - inter)
}

/// All-point AP by enumerating every confidence cutoff. Detections are
/// `(confidence, box)`; ranking is by descending confidence, ties in input
/// order; each detection greedily takes the unmatched same-image ground
/// truth it overlaps most, if that overlap reaches `thr`.
pub fn cutoff_ap(dets: &[(f64, OBox)], gts: &[OBox], thr: f64) -> f64 {
    if gts.is_empty() || dets.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    for i in 1..order.len() {
        // insertion sort keeps equal keys in input order
        let mut j = i;
        while j > 0 && dets[order[j - 1]].0 < dets[order[j]].0 {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut taken = vec![false; gts.len()];
    let mut hits = Vec::new();
    for &d in &order {
        let det = &dets[d].1;
        let mut pick: Option<usize> = None;
        let mut pick_o = -1.0;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.image != det.image {
                continue;
            }
            let o = overlap(det, gt);
            if o >= thr && o > pick_o {
                pick = Some(g);
                pick_o = o;
            }
        }
        if let Some(g) = pick {
            taken[g] = true;
        }
        hits.push(pick.is_some());
    }
    // precision and recall at every cutoff m = 1..=N
    let points: Vec<(f64, f64)> = (1..=hits.len())
        .map(|m| {
            let tp = hits[..m].iter().filter(|&&h| h).count() as f64;
            (tp / gts.len() as f64, tp / m as f64)
        })
        .collect();
    let mut levels: Vec<f64> = points.iter().map(|p| p.0).filter(|&r| r > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for r in levels {
        let best = points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        area += (r - prev) * best;
        prev = r;
    }
    area
}

// ---------------------------------------------------------------- special functions

/// `erf` from the everywhere-positive series
/// `2/√π · e^{−x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1))`.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term.abs() > 1e-18 * sum.abs() {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / PI.sqrt() * (-x * x).exp() * sum
}

pub fn norm_cdf_series(z: f64) -> f64 {
    0.5 * (1.0 + erf_series(z / 2f64.sqrt()))
}

/// `ln Γ(x)` by shifting to `x ≥ 20` and applying the Stirling series.
pub fn ln_gamma_stirling(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut y = x;
    while y < 20.0 {
        shift += y.ln();
        y += 1.0;
    }
    // Bernoulli terms B_{2k} / (2k(2k−1) y^{2k−1})
    let b = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0];
    let mut corr = 0.0;
    for (i, &bk) in b.iter().enumerate() {
        let k = (i + 1) as f64;
        corr += bk / (2.0 * k * (2.0 * k - 1.0) * y.powf(2.0 * k - 1.0));
    }
    (y - 0.5) * y.ln() - y + 0.5 * (2.0 * PI).ln() + corr - shift
}

/// `I_x(a, b)` from `B(x; a, b) = Σ (1−b)_n / n! · x^{a+n} / (a+n)`, using
/// the reflection `I_x(a, b) = 1 − I_{1−x}(b, a)` above one half.
pub fn inc_beta_series(a: f64, b: f64, x: f64) -> f64 {
    if x > 0.5 {
        return 1.0 - inc_beta_series(b, a, 1.0 - x);
    }
    if x == 0.0 {
        return 0.0;
    }
    let mut coef = 1.0;
    let mut sum = 1.0 / a;
    let mut xn = 1.0;
    for n in 1..2000 {
        let nf = n as f64;
        coef *= (nf - b) / nf;
        xn *= x;
        let term = coef * xn / (a + nf);
        sum += term;
        if term.abs() < 1e-19 * sum.abs() {
            break;
        }
    }
    let ln_beta = ln_gamma_stirling(a) + ln_gamma_stirling(b) - ln_gamma_stirling(a + b);
    (a * x.ln() - ln_beta).exp() * sum
}

// ---------------------------------------------------------------- quadrature

/// Composite Simpson's rule with `n` (even) intervals.
pub fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// `P(F > f)` by integrating the F density over `[0, f]`.
pub fn f_sf_simpson(f: f64, d1: f64, d2: f64) -> f64 {
    let ln_b = ln_gamma_stirling(d1 / 2.0) + ln_gamma_stirling(d2 / 2.0) - ln_gamma_stirling((d1 + d2) / 2.0);
    let dens = |x: f64| {
        if x <= 0.0 {
            return if d1 == 2.0 { 1.0 } else { 0.0 };
        }
        ((d1 / 2.0) * (d1 / d2).ln() + (d1 / 2.0 - 1.0) * x.ln() - ((d1 + d2) / 2.0) * (1.0 + d1 * x / d2).ln() - ln_b).exp()
    };
    1.0 - simpson(0.0, f, 20_000, dens)
}

/// Studentized range CDF as a Simpson double integral.
pub fn studentized_range_simpson(q: f64, k: usize, df: f64) -> f64 {
    let half = df / 2.0;
    let ln_norm = half * df.ln() - ln_gamma_stirling(half) - (half - 1.0) * 2f64.ln();
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    let range_cdf = |w: f64| {
        k as f64
            * simpson(-8.0, 8.0, 400, |z| {
                phi(z) * (norm_cdf_series(z) - norm_cdf_series(z - w)).max(0.0).powi(k as i32 - 1)
            })
    };
    simpson(1e-9, 4.0, 800, |s| {
        let ln_dens = ln_norm + (df - 1.0) * s.ln() - 0.5 * df * s * s;
        ln_dens.exp() * range_cdf(q * s)
    })
}

/// Kolmogorov limiting tail from its defining alternating series.
pub fn kolmogorov_tail_series(lambda: f64) -> f64 {
    let mut s = 0.0;
    for j in 1..=500 {
        let j = j as f64;
        let sign = if j % 2.0 == 1.0 { 1.0 } else { -1.0 };
        s += sign * (-2.0 * j * j * lambda * lambda).exp();
    }
    (2.0 * s).clamp(0.0, 1.0)
}
