//! Small numeric helpers: deterministic reductions, finite differences,
//! sample statistics.

/// Pairwise (tree) summation. The reduction order depends only on the
/// slice length, so serial and parallel producers that fill the slice in
/// index order obtain bit-identical sums regardless of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Mean via pairwise summation.
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Mean and standard error of the mean, both from pairwise sums.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_mean(xs);
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Central-difference step for a field of linear growth:
/// `max(1,|x|) * eps_machine^(1/3)` balances truncation and rounding.
pub fn fd_step(x: &[f64]) -> f64 {
    let norm = euclid_norm(x);
    norm.max(1.0) * f64::EPSILON.cbrt()
}

pub fn euclid_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn euclid_dist(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Least-squares slope of y against x.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_uniform_values() {
        let xs = vec![0.125f64; 1023];
        assert_eq!(pairwise_sum(&xs), 0.125 * 1023.0);
    }

    #[test]
    fn pairwise_is_split_invariant_under_chunked_production() {
        // Filling the buffer in any order must not change the result:
        // the tree depends only on indices.
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin() / 7.0).collect();
        let mut ys = vec![0.0; 1000];
        for i in (0..1000).rev() {
            ys[i] = (i as f64).sin() / 7.0;
        }
        assert_eq!(pairwise_sum(&xs), pairwise_sum(&ys));
    }

    #[test]
    fn slope_of_line_is_exact() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert!((ls_slope(&x, &y) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mean_and_se_basics() {
        let (m, se) = mean_and_se(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(m, 1.0);
        assert_eq!(se, 0.0);
        let (m2, se2) = mean_and_se(&[0.0, 2.0]);
        assert_eq!(m2, 1.0);
        assert!((se2 - 1.0).abs() < 1e-15);
    }
}
