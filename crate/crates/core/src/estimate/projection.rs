//! Euclidean projection onto the per-location feasible polytope
//! `{lower_p(x) >= lo for all p, upper(x) <= hi}`.
//!
//! The single-state set has a closed form up to two scalar multipliers.
//! The multi-state set is the intersection of a lower part (separable per
//! state) and an upper part, each with an exact projection; the two are
//! combined by Dykstra's algorithm.

use crate::model::{LocalLayout, FEAS_TOL};

const DYKSTRA_MAX_ITER: usize = 20_000;
const DYKSTRA_TOL: f64 = 1e-14;

pub fn project(layout: &LocalLayout, lo: f64, hi: f64, x0: &[f64]) -> Vec<f64> {
    if layout.single {
        project_single(lo, hi, x0)
    } else {
        project_multi(layout, lo, hi, x0)
    }
}

/// Root of an increasing function on `[a, b]` with `f(a) <= 0 <= f(b)`,
/// bisected to floating-point resolution then refined by one secant step.
fn increasing_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm < 0.0 {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    if fb > fa {
        (a - fa * (b - a) / (fb - fa)).clamp(a, b)
    } else {
        a
    }
}

/// `lambda >= 0` solving `c0 + lambda - sum_j (a_j - lambda)^+ = 0`, with `a`
/// sorted descending and positive; 0 when the left side is already >= 0.
fn lower_multiplier(c0: f64, a: &[f64]) -> f64 {
    let total: f64 = a.iter().sum();
    if c0 - total >= 0.0 {
        return 0.0;
    }
    // on the piece where exactly the m largest entries exceed lambda
    let mut sum = 0.0;
    for m in 0..=a.len() {
        if m > 0 {
            sum += a[m - 1];
        }
        let lam = (sum - c0) / (1 + m) as f64;
        let next = if m < a.len() { a[m] } else { 0.0 };
        let prev = if m == 0 { f64::INFINITY } else { a[m - 1] };
        if lam >= next && lam <= prev {
            return lam.max(0.0);
        }
    }
    ((sum - c0) / (1 + a.len()) as f64).max(0.0)
}

fn project_single(lo: f64, hi: f64, x0: &[f64]) -> Vec<f64> {
    let beta0 = x0[0];
    let b0 = &x0[1..];
    let mut neg: Vec<f64> = b0.iter().filter(|&&v| v < 0.0).map(|&v| -v).collect();
    neg.sort_by(|a, b| b.total_cmp(a));
    let pos: Vec<f64> = b0.iter().copied().filter(|&v| v > 0.0).collect();

    let lambda_at = |mu: f64| lower_multiplier(beta0 - mu - lo, &neg);
    let upper_gap = |mu: f64| {
        let lam = lambda_at(mu);
        beta0 + lam - mu + pos.iter().map(|&v| (v - mu).max(0.0)).sum::<f64>() - hi
    };

    let mu = if upper_gap(0.0) <= 0.0 {
        0.0
    } else {
        let mut top = 1.0;
        while upper_gap(top) > 0.0 {
            top *= 2.0;
        }
        increasing_root(|m| -upper_gap(m), 0.0, top)
    };
    let lam = lambda_at(mu);
    let mut x = Vec::with_capacity(x0.len());
    x.push(beta0 + lam - mu);
    for &b in b0 {
        x.push(if b > mu {
            b - mu
        } else if b < -lam {
            b + lam
        } else {
            0.0
        });
    }
    x
}

/// Level `theta` with `sum_q (theta - r_q)^+ = lambda`; `sorted` ascending.
fn raise_level(sorted: &[f64], lambda: f64) -> f64 {
    let mut sum = 0.0;
    for m in 1..=sorted.len() {
        sum += sorted[m - 1];
        let theta = (lambda + sum) / m as f64;
        if m == sorted.len() || theta <= sorted[m] {
            return theta;
        }
    }
    unreachable!()
}

/// Level `l` with `sum_q (s_q - l)^+ = amount`; `sorted` descending.
fn lower_level(sorted: &[f64], amount: f64) -> f64 {
    let mut sum = 0.0;
    for m in 1..=sorted.len() {
        sum += sorted[m - 1];
        let level = (sum - amount) / m as f64;
        if m == sorted.len() || level >= sorted[m] {
            return level;
        }
    }
    unreachable!()
}

fn project_lower_multi(lay: &LocalLayout, lo: f64, x0: &[f64]) -> Vec<f64> {
    let m = lay.m;
    let mut x = x0.to_vec();
    let mut row = vec![0.0; m + 1];
    for p in 0..m {
        let rows: Vec<Vec<f64>> = (0..lay.j)
            .map(|j| {
                for (q, r) in row.iter_mut().enumerate() {
                    *r = x0[lay.block(j, q) + p];
                }
                let mut s = row.clone();
                s.sort_by(f64::total_cmp);
                s
            })
            .collect();
        let beta0 = x0[p];
        let gap = |lam: f64| beta0 + lam + rows.iter().map(|r| raise_level(r, lam)).sum::<f64>() - lo;
        if gap(0.0) >= 0.0 {
            continue;
        }
        let mut top = 1.0;
        while gap(top) < 0.0 {
            top *= 2.0;
        }
        let lam = increasing_root(gap, 0.0, top);
        x[p] = beta0 + lam;
        for (j, r) in rows.iter().enumerate() {
            let theta = raise_level(r, lam);
            for q in 0..=m {
                let i = lay.block(j, q) + p;
                x[i] = x0[i].max(theta);
            }
        }
    }
    x
}

fn project_upper_multi(lay: &LocalLayout, hi: f64, x0: &[f64]) -> Vec<f64> {
    let m = lay.m;
    let sums: Vec<Vec<f64>> = (0..lay.j)
        .map(|j| {
            (0..=m)
                .map(|q| x0[lay.block(j, q)..lay.block(j, q) + m].iter().sum())
                .collect()
        })
        .collect();
    let sorted: Vec<Vec<f64>> = sums
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        })
        .collect();
    let beta_sum: f64 = x0[..m].iter().sum();
    let mf = m as f64;
    let gap = |mu: f64| {
        beta_sum - mf * mu + sorted.iter().map(|s| lower_level(s, mf * mu)).sum::<f64>() - hi
    };
    let mut x = x0.to_vec();
    if gap(0.0) <= 0.0 {
        return x;
    }
    let mut top = 1.0;
    while gap(top) > 0.0 {
        top *= 2.0;
    }
    let mu = increasing_root(|v| -gap(v), 0.0, top);
    for v in &mut x[..m] {
        *v -= mu;
    }
    for (j, s) in sorted.iter().enumerate() {
        let level = lower_level(s, mf * mu);
        for q in 0..=m {
            let cut = (sums[j][q] - level).max(0.0) / mf;
            if cut > 0.0 {
                for v in &mut x[lay.block(j, q)..lay.block(j, q) + m] {
                    *v -= cut;
                }
            }
        }
    }
    x
}

fn feasible(lay: &LocalLayout, lo: f64, hi: f64, x: &[f64]) -> bool {
    lay.lower(x).iter().all(|&v| v >= lo) && lay.upper(x) <= hi
}

fn project_multi(lay: &LocalLayout, lo: f64, hi: f64, x0: &[f64]) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..DYKSTRA_MAX_ITER {
        let a: Vec<f64> = x.iter().zip(&p).map(|(v, w)| v + w).collect();
        let y = project_lower_multi(lay, lo, &a);
        for i in 0..n {
            p[i] = a[i] - y[i];
        }
        let b: Vec<f64> = y.iter().zip(&q).map(|(v, w)| v + w).collect();
        let next = project_upper_multi(lay, hi, &b);
        for i in 0..n {
            q[i] = b[i] - next[i];
        }
        let change = next
            .iter()
            .zip(&x)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        x = next;
        if change <= DYKSTRA_TOL && feasible(lay, lo - FEAS_TOL * 1e-3, hi + FEAS_TOL * 1e-3, &x) {
            break;
        }
    }
    if feasible(lay, lo, hi, &x) {
        return x;
    }
    // pull toward the centre, which satisfies every inequality strictly
    let c = lay.center();
    let blend = |t: f64| -> Vec<f64> { c.iter().zip(&x).map(|(a, b)| a + t * (b - a)).collect() };
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        if feasible(lay, lo, hi, &blend(mid)) {
            a = mid;
        } else {
            b = mid;
        }
    }
    blend(a)
}
