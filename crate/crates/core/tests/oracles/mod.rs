//! Slow, direct reference implementations used as test oracles. Each one
//! follows the textbook definition with plain loops and shares no code with
//! the library beyond the input types.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;

fn dot_cols(m: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (0..m.nrows()).map(|r| m[(r, a)] * m[(r, b)]).sum()
}

pub fn cosine(m: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let c = dot_cols(m, a, b) / (dot_cols(m, a, a).sqrt() * dot_cols(m, b, b).sqrt());
    c.clamp(-1.0, 1.0)
}

/// Average-linkage agglomeration that recomputes every cluster-pair mean
/// from scratch at each step. Ties go to the pair with the smallest
/// (first-cluster minimum, second-cluster minimum).
pub fn brute_agglomerate(features: &DMatrix<f64>, tau: f64) -> Vec<Vec<usize>> {
    let n = features.ncols();
    let cos: Vec<Vec<f64>> = (0..n)
        .map(|a| (0..n).map(|b| cosine(features, a, b)).collect())
        .collect();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut total = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        total += cos[i][j];
                    }
                }
                let avg = total / (clusters[a].len() * clusters[b].len()) as f64;
                if best.is_none_or(|(s, _, _)| avg > s) {
                    best = Some((avg, a, b));
                }
            }
        }
        match best {
            Some((s, a, b)) if s > tau => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
                clusters[a].sort_unstable();
                clusters.sort_by_key(|c| c[0]);
            }
            _ => return clusters,
        }
    }
}

/// Trapezoid area of the brute-force cluster-ratio curve on a grid of
/// `intervals` equal steps over [0, 1].
pub fn brute_cluster_diversity(features: &DMatrix<f64>, intervals: usize) -> f64 {
    let n = features.ncols() as f64;
    let ratios: Vec<f64> = (0..=intervals)
        .map(|k| brute_agglomerate(features, k as f64 / intervals as f64).len() as f64 / n)
        .collect();
    let h = 1.0 / intervals as f64;
    ratios.windows(2).map(|w| h * (w[0] + w[1]) / 2.0).sum()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)]).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// One minus the mean cumulative explained-variance fraction over the
/// non-zero spectrum of the feature matrix.
pub fn spectral_diversity_oracle(features: &DMatrix<f64>) -> f64 {
    let (d, n) = features.shape();
    let small = d.min(n);
    let gram = DMatrix::from_fn(small, small, |i, j| {
        if d <= n {
            (0..n).map(|k| features[(i, k)] * features[(j, k)]).sum()
        } else {
            (0..d).map(|k| features[(k, i)] * features[(k, j)]).sum()
        }
    });
    let mut ev = jacobi_eigenvalues(&gram);
    ev.sort_by(|a, b| b.total_cmp(a));
    let top = ev[0];
    ev.retain(|&v| v > 1e-12 * top);
    if ev.len() <= 1 {
        return 0.0;
    }
    let total: f64 = ev.iter().sum();
    let mut acc = 0.0;
    let mut area = 0.0;
    for v in &ev {
        acc += v;
        area += acc / total;
    }
    1.0 - area / ev.len() as f64
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = m.shape();
    let mut out = m.clone();
    for j in 0..p {
        let mean = (0..n).map(|i| m[(i, j)]).sum::<f64>() / n as f64;
        for i in 0..n {
            out[(i, j)] -= mean;
        }
    }
    out
}

/// Cosine between the n×n example Gram matrices of the column-centred
/// inputs, by explicit double loops.
pub fn naive_cka(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let (xc, yc) = (centered(x), centered(y));
    let n = x.nrows();
    let gram = |m: &DMatrix<f64>, a: usize, b: usize| -> f64 {
        (0..m.ncols()).map(|k| m[(a, k)] * m[(b, k)]).sum()
    };
    let (mut kl, mut kk, mut ll) = (0.0, 0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            let k = gram(&xc, a, b);
            let l = gram(&yc, a, b);
            kl += k * l;
            kk += k * k;
            ll += l * l;
        }
    }
    kl / (kk.sqrt() * ll.sqrt())
}

fn cos_rows(m: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let p = m.ncols();
    let dot: f64 = (0..p).map(|k| m[(a, k)] * m[(b, k)]).sum();
    let na: f64 = (0..p).map(|k| m[(a, k)] * m[(a, k)]).sum::<f64>().sqrt();
    let nb: f64 = (0..p).map(|k| m[(b, k)] * m[(b, k)]).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// (v_intra, s_inter, msc) straight from the double and quadruple sums.
pub fn naive_class_metrics(x: &DMatrix<f64>, labels: &[usize], k: usize) -> (f64, f64, f64) {
    let members: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    let dist = |a: usize, b: usize| if a == b { 0.0 } else { 1.0 - cos_rows(x, a, b) };
    let kf = k as f64;

    let mut v_intra = 0.0;
    for c in &members {
        let mut s = 0.0;
        for &m in c {
            for &n in c {
                s += dist(m, n);
            }
        }
        v_intra += s / (kf * (c.len() * c.len()) as f64);
    }

    let mut s_inter = 0.0;
    for cj in &members {
        for ck in &members {
            let mut s = 0.0;
            for &m in cj {
                for &n in ck {
                    s += dist(m, n);
                }
            }
            s_inter += s / (kf * kf * (cj.len() * ck.len()) as f64);
        }
    }

    let mut sc_total = 0.0;
    for (m, &own) in labels.iter().enumerate() {
        if members[own].len() == 1 {
            continue;
        }
        let v = members[own]
            .iter()
            .filter(|&&n| n != m)
            .map(|&n| dist(m, n))
            .sum::<f64>()
            / (members[own].len() - 1) as f64;
        let mut s = f64::INFINITY;
        for (c, mem) in members.iter().enumerate() {
            if c != own {
                let mean = mem.iter().map(|&n| dist(m, n)).sum::<f64>() / mem.len() as f64;
                s = s.min(mean);
            }
        }
        let denom = s.max(v);
        if denom > 0.0 {
            sc_total += (s - v) / denom;
        }
    }
    (v_intra, s_inter, sc_total / labels.len() as f64)
}

/// Pair counts for Kendall's tau-b by enumerating all pairs:
/// (concordant − discordant, total pairs, pairs tied in x, pairs tied in y).
pub fn kendall_pair_counts(x: &[f64], y: &[f64]) -> (i64, i64, i64, i64) {
    let n = x.len();
    let (mut score, mut tx, mut ty) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap();
            let dy = y[i].partial_cmp(&y[j]).unwrap();
            use std::cmp::Ordering::Equal;
            if dx == Equal {
                tx += 1;
            }
            if dy == Equal {
                ty += 1;
            }
            if dx != Equal && dy != Equal {
                score += if dx == dy { 1 } else { -1 };
            }
        }
    }
    let total = (n * (n - 1) / 2) as i64;
    (score, total, tx, ty)
}

/// Central finite-difference derivative of `f` along one coordinate.
pub fn central_difference(f: impl Fn(f64) -> f64, at: f64, h: f64) -> f64 {
    (f(at + h) - f(at - h)) / (2.0 * h)
}

/// Relative error with an absolute floor so near-zero gradients compare sanely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}
