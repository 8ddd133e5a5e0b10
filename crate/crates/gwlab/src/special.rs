//! Scalar special functions used by the analytic offspring laws.
//!
//! Everything here is plain f64 arithmetic; accuracy targets are a few ulps
//! for the arguments we actually use (`s` in (1, 4], `a >= 1`).

/// First Bernoulli numbers B_2, B_4, ..., B_12, for the Euler-Maclaurin tail.
const BERNOULLI: [f64; 6] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
];

/// Hurwitz zeta `zeta(s, a) = sum_{k >= 0} (a + k)^{-s}` for `s > 1`, `a >= 1`.
///
/// Euler-Maclaurin after summing explicit terms up to `a + k >= 32`:
///
/// ```text
/// zeta(s, a) = sum_{k=0}^{N-1} (a+k)^{-s}
///            + (a+N)^{1-s} / (s-1) + (a+N)^{-s} / 2
///            + sum_j B_{2j}/(2j)! * (s)_{2j-1} * (a+N)^{-s-2j+1}
/// ```
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(s > 1.0, "hurwitz_zeta requires s > 1, got {s}");
    assert!(a >= 1.0, "hurwitz_zeta requires a >= 1, got {a}");

    let mut sum = 0.0;
    let mut x = a;
    while x < 32.0 {
        sum += x.powf(-s);
        x += 1.0;
    }
    // x = a + N is the Euler-Maclaurin base point.
    sum += x.powf(1.0 - s) / (s - 1.0);
    sum += 0.5 * x.powf(-s);

    // Correction terms B_{2j}/(2j)! * s(s+1)...(s+2j-2) * x^{-s-2j+1}.
    let mut poch = s; // rising factorial (s)_{2j-1}
    let mut fact = 2.0; // (2j)!
    let mut xpow = x.powf(-s - 1.0);
    let x2 = x * x;
    for (j, b) in BERNOULLI.iter().enumerate() {
        sum += b / fact * poch * xpow;
        let two_j = 2.0 * (j + 1) as f64;
        poch *= (s + two_j - 1.0) * (s + two_j);
        fact *= (two_j + 1.0) * (two_j + 2.0);
        xpow /= x2;
    }
    sum
}

/// Riemann zeta for `s > 1`.
pub fn riemann_zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}

/// Binomial coefficient C(n, k) as f64, by the multiplicative formula.
pub fn binomial_coefficient(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_reference_values() {
        // zeta(2) = pi^2/6, zeta(4) = pi^4/90.
        let pi = std::f64::consts::PI;
        assert!((riemann_zeta(2.0) - pi * pi / 6.0).abs() < 1e-13);
        assert!((riemann_zeta(4.0) - pi.powi(4) / 90.0).abs() < 1e-13);
        // Values used by the alpha = 1.5 offspring law.
        assert!((riemann_zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-12);
        assert!((riemann_zeta(2.5) - 1.341_487_257_250_917).abs() < 1e-12);
    }

    #[test]
    fn hurwitz_matches_shifted_sum() {
        // zeta(s, a) = zeta(s, a + m) + sum of the first m terms.
        for &s in &[1.2, 2.5, 3.5] {
            let direct: f64 = (0..50).map(|k| (7.0 + k as f64).powf(-s)).sum::<f64>()
                + hurwitz_zeta(s, 57.0);
            assert!((hurwitz_zeta(s, 7.0) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn hurwitz_large_offset() {
        // Against the leading asymptotic a^{1-s}/(s-1) + a^{-s}/2.
        let s = 2.5;
        let a: f64 = 1e8;
        let asymptotic = a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
        let v = hurwitz_zeta(s, a);
        assert!((v - asymptotic).abs() / v < 1e-10);
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial_coefficient(2, 1), 2.0);
        assert_eq!(binomial_coefficient(5, 2), 10.0);
        assert_eq!(binomial_coefficient(4, 0), 1.0);
        assert_eq!(binomial_coefficient(3, 5), 0.0);
    }
}
