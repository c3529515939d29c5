//! Slow, direct reference implementations used to cross-check the library.
//! Nothing here calls into the crate under test.
#![allow(dead_code)]

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
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
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Two-sided tail probability of Student's t by integrating the density.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let dens = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let t = t.abs();
    let n = ((t * 20_000.0) as usize).clamp(2_000, 2_000_000);
    (1.0 - 2.0 * simpson(dens, 0.0, t, n)).max(0.0)
}

/// `(t, df, p)` from the textbook Welch formulas.
pub fn welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        (n, mean, ss / (n - 1.0))
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se = (va / na + vb / nb).sqrt();
    let t = (ma - mb) / se;
    let num = (va / na + vb / nb).powi(2);
    let den = (va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0);
    let df = num / den;
    (t, df, student_t_two_sided(t, df))
}

/// Krippendorff's nominal alpha by enumerating ordered value pairs.
pub fn krippendorff_pairs(units: &[Vec<u32>]) -> f64 {
    let pairable: Vec<&Vec<u32>> = units.iter().filter(|u| u.len() >= 2).collect();
    let all: Vec<u32> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    let n = all.len() as f64;
    let mut d_o = 0.0;
    for u in &pairable {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    d_o += 1.0 / (m - 1.0);
                }
            }
        }
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j && all[i] != all[j] {
                d_e += 1.0;
            }
        }
    }
    d_e /= n * (n - 1.0);
    1.0 - d_o / d_e
}

pub fn cohen_kappa(a: &[bool], b: &[bool]) -> (f64, Option<f64>) {
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    (po, if pe == 1.0 { None } else { Some((po - pe) / (1.0 - pe)) })
}

/// AUC as the share of (positive, negative) pairs ranked correctly.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn cohens_d(x: &[f64], y: &[bool]) -> f64 {
    let g1: Vec<f64> = x.iter().zip(y).filter(|p| *p.1).map(|p| *p.0).collect();
    let g0: Vec<f64> = x.iter().zip(y).filter(|p| !*p.1).map(|p| *p.0).collect();
    let mv = |g: &[f64]| {
        let n = g.len() as f64;
        let m = g.iter().sum::<f64>() / n;
        (m, g.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0), n)
    };
    let (m1, s1, n1) = mv(&g1);
    let (m0, s0, n0) = mv(&g0);
    (m1 - m0) / (((n1 - 1.0) * s1 + (n0 - 1.0) * s0) / (n1 + n0 - 2.0)).sqrt()
}

/// Benjamini-Hochberg by trying every cutoff rank from the top.
pub fn bh(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for k in (1..=m).rev() {
        if sorted[k - 1] <= k as f64 * q / m as f64 {
            let cut = sorted[k - 1];
            return p.iter().map(|&v| v <= cut).collect();
        }
    }
    vec![false; m]
}

/// Solve a small dense system by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Penalized logistic regression by iteratively reweighted least squares.
/// `rows` exclude the intercept column; `lambda` penalizes slopes only.
/// Returns `[intercept, slopes...]`.
pub fn irls(rows: &[Vec<f64>], y: &[bool], lambda: f64) -> Vec<f64> {
    let p = rows[0].len() + 1;
    let design: Vec<Vec<f64>> = rows.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
    let mut theta = vec![0.0; p];
    for _ in 0..500 {
        let mut xtwx = vec![vec![0.0; p]; p];
        let mut xtwz = vec![0.0; p];
        for (x, &t) in design.iter().zip(y) {
            let eta: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let mu = logistic(eta);
            let w = (mu * (1.0 - mu)).max(1e-300);
            let z = eta + (f64::from(u8::from(t)) - mu) / w;
            for i in 0..p {
                xtwz[i] += x[i] * w * z;
                for j in 0..p {
                    xtwx[i][j] += x[i] * w * x[j];
                }
            }
        }
        for (i, row) in xtwx.iter_mut().enumerate().skip(1) {
            row[i] += lambda;
        }
        let next = solve(xtwx, xtwz);
        let change = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        theta = next;
        if change < 1e-13 {
            break;
        }
    }
    theta
}

/// erfc via Simpson integration of the Gaussian kernel.
pub fn erfc(x: f64) -> f64 {
    let x = x.abs();
    let erf = 2.0 / std::f64::consts::PI.sqrt() * simpson(|t| (-t * t).exp(), 0.0, x, 20_000);
    1.0 - erf
}

/// `(beta, p)` for an intercept + slope fit with a Wald test.
pub fn univariate_wald(x: &[f64], y: &[bool]) -> (f64, f64) {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let theta = irls(&rows, y, 0.0);
    let (mut i00, mut i01, mut i11) = (0.0, 0.0, 0.0);
    for &v in x {
        let mu = logistic(theta[0] + theta[1] * v);
        let w = mu * (1.0 - mu);
        i00 += w;
        i01 += w * v;
        i11 += w * v * v;
    }
    let var_b = i00 / (i00 * i11 - i01 * i01);
    let z = theta[1] / var_b.sqrt();
    (theta[1], erfc(z / std::f64::consts::SQRT_2))
}

pub fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Exact share of juries (k from `pos_votes`, rest from `neg_votes`) with at
/// least `majority` positive votes, by listing every jury.
pub fn exact_jury_fraction(pos_votes: &[bool], neg_votes: &[bool], k: usize, size: usize, majority: usize) -> f64 {
    let mut hits = 0.0;
    let mut total = 0.0;
    for a in subsets(pos_votes.len(), k) {
        let ya = a.iter().filter(|&&i| pos_votes[i]).count();
        for b in subsets(neg_votes.len(), size - k) {
            let yb = b.iter().filter(|&&i| neg_votes[i]).count();
            total += 1.0;
            if ya + yb >= majority {
                hits += 1.0;
            }
        }
    }
    hits / total
}
