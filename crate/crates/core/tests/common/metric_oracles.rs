use ntt_core::evalkit::{mann_whitney_u, spearman_rank, PValueMethod};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook rho for tie-free data: 1 - 6 sum d^2 / (n (n^2 - 1)).
pub fn naive_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> { v.iter().map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64).collect() };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// 100 random permutations of 5..40 distinct values against the naive formula.
pub fn check_spearman_permutations(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.gen_range(5..40);
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 1.5 - 7.0).collect();
        let mut y = x.clone();
        y.shuffle(&mut rng);
        let got = spearman_rank(&x, &y).map_err(|e| format!("case {case}: {e}"))?;
        worst = worst.max((got - naive_spearman(&x, &y)).abs());
    }
    if worst > 1e-12 {
        return Err(format!("max deviation {worst:e}"));
    }
    Ok(worst)
}

/// Hand-computed tied examples: average ranks, then Pearson on the ranks.
pub fn check_spearman_ties() -> Result<(), String> {
    // e.g. ranks x = [1, 2.5, 2.5, 4] and y = [1, 3, 2, 4] give 4.5 / sqrt(4.5 * 5)
    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0], 0.948_683_298_050_513_8),
        (&[5.0, 5.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0], -0.894_427_190_999_915_9),
        (&[2.0, 2.0, 2.0, 9.0], &[7.0, 7.0, 3.0, 8.0], 0.816_496_580_927_726),
    ];
    for (x, y, want) in cases {
        let got = spearman_rank(x, y).map_err(|e| e.to_string())?;
        if (got - want).abs() > 1e-12 {
            return Err(format!("spearman({x:?}, {y:?}) = {got}, expected {want}"));
        }
    }
    Ok(())
}

/// U of `a` by direct pair counting, ties worth a half.
pub fn pair_count_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            u += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    u
}

/// Two-sided exact p by enumerating every relabelling of the pooled values.
pub fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, n1) = (pooled.len(), a.len());
    let observed = pair_count_u(a, b);
    let (mut total, mut lower, mut upper) = (0usize, 0usize, 0usize);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let (g1, g2): (Vec<f64>, Vec<f64>) = {
            let (mut g1, mut g2) = (Vec::new(), Vec::new());
            for (i, v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    g1.push(*v)
                } else {
                    g2.push(*v)
                }
            }
            (g1, g2)
        };
        let u = pair_count_u(&g1, &g2);
        total += 1;
        lower += (u <= observed + 1e-9) as usize;
        upper += (u >= observed - 1e-9) as usize;
    }
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

/// Every split with n1 + n2 <= 10, tie-free and heavily tied samples alike.
/// Returns the number of cases checked.
pub fn check_mann_whitney_exact(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0;
    for n in 2..=10usize {
        for n1 in 1..n {
            let n2 = n - n1;
            for tied in [false, true] {
                for _ in 0..3 {
                    let draw = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
                        (0..k).map(|_| if tied { rng.gen_range(0..4) as f64 } else { rng.gen::<f64>() }).collect()
                    };
                    let a = draw(&mut rng, n1);
                    let b = draw(&mut rng, n2);
                    let r = mann_whitney_u(&a, &b).map_err(|e| e.to_string())?;
                    if r.method != PValueMethod::Exact {
                        return Err(format!("n1={n1} n2={n2}: not exact"));
                    }
                    let want_u = pair_count_u(&a, &b);
                    if (r.u1 - want_u).abs() > 1e-9 {
                        return Err(format!("{a:?} vs {b:?}: U1 {} expected {want_u}", r.u1));
                    }
                    if r.u1 + r.u2 != (n1 * n2) as f64 {
                        return Err(format!("{a:?} vs {b:?}: U1 + U2 = {}", r.u1 + r.u2));
                    }
                    let want_p = enumerated_p(&a, &b);
                    if (r.p_value - want_p).abs() > 1e-9 {
                        return Err(format!("{a:?} vs {b:?}: p {} expected {want_p}", r.p_value));
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(cases)
}

/// U1 + U2 = n1 n2 on larger samples that take the normal approximation.
pub fn check_u_sum_large(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..200 {
        let (n1, n2) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let a: Vec<f64> = (0..n1).map(|_| rng.gen_range(0..10) as f64).collect();
        let b: Vec<f64> = (0..n2).map(|_| rng.gen_range(0..10) as f64).collect();
        let r = mann_whitney_u(&a, &b).map_err(|e| e.to_string())?;
        if r.u1 + r.u2 != (n1 * n2) as f64 || !(0.0..=1.0).contains(&r.p_value) {
            return Err(format!("n1={n1} n2={n2}: U1 {} U2 {} p {}", r.u1, r.u2, r.p_value));
        }
    }
    Ok(())
}
