//! Offspring distributions: finite pmf tables, the zeta-type power law, and
//! their binomial thinnings.
//!
//! Ambient laws (the environment tree's offspring) are supported on
//! {1, 2, ...} with mean `mu > 1`. Thinning an ambient law by `p = 1/mu`
//! produces the critical annealed percolation law; thinning by `1/mu^2`
//! produces the subcritical law of cluster intersections.
//!
//! The power law is the zeta-type representative of the stable case:
//! `P(Z = k) = k^{-(alpha+1)} / zeta(alpha+1)` for `k >= 1`. Its tail
//! constant is `c = 1 / (alpha * zeta(alpha+1))`, in the sense that
//! `x^alpha * P(Z >= x) -> c`. This is one concrete law with the required
//! tail behaviour, not the only one; the constant `c` is a property of this
//! choice of representative.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{binomial_coefficient, hurwitz_zeta, riemann_zeta};

/// Normalization tolerance for probability tables.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Prefix length of the exact inverse-CDF table for power-law sampling.
/// Beyond this, sampling inverts the analytic Hurwitz-zeta tail.
pub const POWER_PREFIX_LEN: usize = 1_000_000;

/// Cached prefix length for thinned-power pmf queries.
const THINNED_PMF_CACHE: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("law is not supercritical: mean {0} <= 1")]
    NonSupercritical(f64),
    #[error("ambient support must be >= 1, found k = 0")]
    BadSupport,
    #[error("probabilities sum to {0}, off by more than {NORMALIZATION_TOL}")]
    NotNormalized(f64),
    #[error("probability for k = {0} is not positive")]
    BadProbability(u64),
    #[error("duplicate table entry for k = {0}")]
    DuplicateEntry(u64),
    #[error("alpha = {0} outside (1, 2)")]
    AlphaOutOfRange(f64),
    #[error("thinning probability p = {0} outside (0, 1]")]
    BadP(f64),
    #[error("survival iteration requires mean <= 1, got {0}")]
    SupercriticalLaw(f64),
    #[error("empty pmf table")]
    EmptyTable,
}

/// Variance of a law; the stable case has infinite variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variance {
    Finite(f64),
    Infinite,
}

impl Variance {
    pub fn finite(self) -> Option<f64> {
        match self {
            Variance::Finite(v) => Some(v),
            Variance::Infinite => None,
        }
    }
}

/// Mean, variance and (power-law) tail constant of a law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: Variance,
    pub tail_constant: Option<f64>,
}

/// Law descriptor as it appears in config files.
///
/// `{"type":"table","pmf":{"1":0.5,"2":0.5}}` or `{"type":"power","alpha":1.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LawSpec {
    Table { pmf: BTreeMap<String, f64> },
    Power { alpha: f64 },
}

impl LawSpec {
    pub fn build(&self) -> Result<OffspringLaw, LawError> {
        match self {
            LawSpec::Table { pmf } => {
                let mut entries = Vec::with_capacity(pmf.len());
                for (k, &p) in pmf {
                    let k: u64 = k
                        .parse()
                        .map_err(|_| LawError::BadProbability(u64::MAX))?;
                    entries.push((k, p));
                }
                OffspringLaw::from_pmf_table(&entries)
            }
            LawSpec::Power { alpha } => OffspringLaw::power_law(*alpha),
        }
    }
}

/// Zeta-type power law internals shared by the plain and thinned forms.
#[derive(Debug)]
struct PowerLaw {
    alpha: f64,
    /// Exponent of the pmf, s = alpha + 1.
    s: f64,
    zeta_s: f64,
    /// prefix_cdf[k-1] = P(Z <= k) for k = 1..=POWER_PREFIX_LEN.
    prefix_cdf: Vec<f64>,
}

impl PowerLaw {
    fn new(alpha: f64, prefix_len: usize) -> Self {
        let s = alpha + 1.0;
        let zeta_s = riemann_zeta(s);
        let mut prefix_cdf = Vec::with_capacity(prefix_len);
        let mut acc = 0.0;
        for k in 1..=prefix_len {
            acc += (k as f64).powf(-s) / zeta_s;
            prefix_cdf.push(acc);
        }
        PowerLaw { alpha, s, zeta_s, prefix_cdf }
    }

    fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            (k as f64).powf(-self.s) / self.zeta_s
        }
    }

    /// P(Z >= k), exactly (Hurwitz zeta).
    fn tail(&self, k: u64) -> f64 {
        if k <= 1 {
            1.0
        } else {
            hurwitz_zeta(self.s, k as f64) / self.zeta_s
        }
    }

    /// Inverse CDF: the unique k with P(Z < k) <= u < P(Z <= k).
    fn quantile(&self, u: f64) -> u64 {
        let last = *self.prefix_cdf.last().expect("nonempty prefix");
        if u < last {
            let idx = self.prefix_cdf.partition_point(|&c| c <= u);
            return (idx + 1) as u64;
        }
        // Analytic tail inversion: smallest k with tail(k + 1) <= 1 - u.
        let r = (1.0 - u).max(f64::MIN_POSITIVE);
        let mut lo = self.prefix_cdf.len() as u64; // tail(lo + 1) > r holds
        let mut hi = lo * 2;
        let cap = 1u64 << 62;
        while self.tail(hi + 1) > r {
            if hi >= cap {
                return cap; // probability < 1e-300; unreachable in practice
            }
            lo = hi;
            hi *= 2;
        }
        while lo + 1 < hi {
            let mid = lo + (hi - lo) / 2;
            if self.tail(mid + 1) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    fn mean(&self) -> f64 {
        // E[Z] = zeta(alpha) / zeta(alpha + 1).
        riemann_zeta(self.alpha) / self.zeta_s
    }

    fn tail_constant(&self) -> f64 {
        1.0 / (self.alpha * self.zeta_s)
    }
}

#[derive(Debug)]
enum LawForm {
    /// Finite table; pmf[k] = P(Z = k).
    Table { pmf: Vec<f64>, cdf: Vec<f64> },
    Power(PowerLaw),
    /// Binomial p-thinning of a power law: sample Z, then Binomial(Z, p).
    /// The pmf has unbounded support and is evaluated lazily.
    ThinnedPower {
        base: PowerLaw,
        p: f64,
        pmf_cache: OnceLock<Vec<f64>>,
    },
}

/// An offspring distribution on {0, 1, 2, ...} with exact pmf access,
/// moments, and (for power laws) the tail constant.
///
/// Immutable after construction; sampling takes a caller-owned RNG.
#[derive(Debug)]
pub struct OffspringLaw {
    form: LawForm,
    spec: Option<LawSpec>,
    support_min: u64,
    mean: f64,
    variance: Variance,
    alpha: f64,
    tail_constant: Option<f64>,
}

impl OffspringLaw {
    /// Builds an ambient law from a finite pmf table with support in {1, 2, ...}.
    ///
    /// The mean must exceed 1 (Assumption: the environment is supercritical
    /// with no leaves).
    pub fn from_pmf_table(entries: &[(u64, f64)]) -> Result<OffspringLaw, LawError> {
        let law = Self::table_law(entries, true)?;
        if law.mean <= 1.0 {
            return Err(LawError::NonSupercritical(law.mean));
        }
        Ok(law)
    }

    /// Builds a law from a finite pmf table, allowing support on 0
    /// (used for thinned/critical tables).
    pub fn from_pmf_table_with_zero(entries: &[(u64, f64)]) -> Result<OffspringLaw, LawError> {
        Self::table_law(entries, false)
    }

    fn table_law(entries: &[(u64, f64)], forbid_zero: bool) -> Result<OffspringLaw, LawError> {
        if entries.is_empty() {
            return Err(LawError::EmptyTable);
        }
        let max_k = entries.iter().map(|&(k, _)| k).max().unwrap();
        let mut pmf = vec![0.0; (max_k + 1) as usize];
        for &(k, p) in entries {
            if forbid_zero && k == 0 {
                return Err(LawError::BadSupport);
            }
            if p <= 0.0 {
                return Err(LawError::BadProbability(k));
            }
            if pmf[k as usize] != 0.0 {
                return Err(LawError::DuplicateEntry(k));
            }
            pmf[k as usize] = p;
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LawError::NotNormalized(sum));
        }
        Ok(Self::from_table_vec(pmf))
    }

    fn from_table_vec(pmf: Vec<f64>) -> OffspringLaw {
        let mean: f64 = pmf.iter().enumerate().map(|(k, &p)| k as f64 * p).sum();
        let second: f64 = pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| (k as f64) * (k as f64) * p)
            .sum();
        let variance = second - mean * mean;
        let support_min = pmf.iter().position(|&p| p > 0.0).unwrap_or(0) as u64;
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        let spec = Some(LawSpec::Table {
            pmf: pmf
                .iter()
                .enumerate()
                .filter(|&(_, &p)| p > 0.0)
                .map(|(k, &p)| (k.to_string(), p))
                .collect(),
        });
        OffspringLaw {
            form: LawForm::Table { pmf, cdf },
            spec,
            support_min,
            mean,
            variance: Variance::Finite(variance.max(0.0)),
            alpha: 2.0,
            tail_constant: None,
        }
    }

    /// The zeta-type law `P(Z = k) = k^{-(alpha+1)} / zeta(alpha+1)`, k >= 1,
    /// for `alpha` strictly inside (1, 2).
    pub fn power_law(alpha: f64) -> Result<OffspringLaw, LawError> {
        Self::power_law_with_prefix(alpha, POWER_PREFIX_LEN)
    }

    /// As [`OffspringLaw::power_law`] with an explicit inverse-CDF prefix length.
    pub fn power_law_with_prefix(alpha: f64, prefix_len: usize) -> Result<OffspringLaw, LawError> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(LawError::AlphaOutOfRange(alpha));
        }
        let base = PowerLaw::new(alpha, prefix_len.max(16));
        let mean = base.mean();
        debug_assert!(mean > 1.0, "zeta-type law is supercritical for alpha in (1,2)");
        let tail_constant = Some(base.tail_constant());
        Ok(OffspringLaw {
            spec: Some(LawSpec::Power { alpha }),
            support_min: 1,
            mean,
            variance: Variance::Infinite,
            alpha,
            tail_constant,
            form: LawForm::Power(base),
        })
    }

    /// Binomial p-thinning: the law of Binomial(Z, p) with Z ~ self.
    ///
    /// At `p = 1/mean` the result is critical; its variance in the finite
    /// variance case is `sigma^2/mu^2 + 1 - 1/mu`.
    pub fn percolation_thinning(&self, p: f64) -> Result<OffspringLaw, LawError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(LawError::BadP(p));
        }
        match &self.form {
            LawForm::Table { pmf, .. } => {
                let mut thinned = vec![0.0; pmf.len()];
                for (k, &pk) in pmf.iter().enumerate() {
                    if pk == 0.0 {
                        continue;
                    }
                    for j in 0..=k {
                        thinned[j] += pk
                            * binomial_coefficient(k as u64, j as u64)
                            * p.powi(j as i32)
                            * (1.0 - p).powi((k - j) as i32);
                    }
                }
                Ok(Self::from_table_vec(thinned))
            }
            LawForm::Power(base) => {
                if p == 1.0 {
                    return OffspringLaw::power_law_with_prefix(
                        base.alpha,
                        base.prefix_cdf.len(),
                    );
                }
                let alpha = base.alpha;
                // P(Bin(Z, p) >= x) ~ P(Z >= x/p) ~ c p^alpha x^{-alpha}.
                let tail_constant = Some(base.tail_constant() * p.powf(alpha));
                let mean = base.mean() * p;
                Ok(OffspringLaw {
                    spec: None,
                    support_min: 0,
                    mean,
                    variance: Variance::Infinite,
                    alpha,
                    tail_constant,
                    form: LawForm::ThinnedPower {
                        base: PowerLaw::new(alpha, base.prefix_cdf.len()),
                        p,
                        pmf_cache: OnceLock::new(),
                    },
                })
            }
            LawForm::ThinnedPower { base, p: q, .. } => {
                // Thinning twice composes: Bin(Bin(Z, q), p) = Bin(Z, qp).
                let once = OffspringLaw::power_law_with_prefix(base.alpha, base.prefix_cdf.len())?;
                once.percolation_thinning(p * q)
            }
        }
    }

    pub fn spec(&self) -> Option<&LawSpec> {
        self.spec.as_ref()
    }

    pub fn support_min(&self) -> u64 {
        self.support_min
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> Variance {
        self.variance
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tail_constant(&self) -> Option<f64> {
        self.tail_constant
    }

    pub fn moments(&self) -> Moments {
        Moments {
            mean: self.mean,
            variance: self.variance,
            tail_constant: self.tail_constant,
        }
    }

    /// P(Z = k). Exact for tables and power laws; for thinned power laws the
    /// value is an absolutely convergent series summed to f64 precision.
    pub fn pmf(&self, k: u64) -> f64 {
        match &self.form {
            LawForm::Table { pmf, .. } => pmf.get(k as usize).copied().unwrap_or(0.0),
            LawForm::Power(base) => base.pmf(k),
            LawForm::ThinnedPower { base, p, pmf_cache } => {
                let cache = pmf_cache.get_or_init(|| {
                    (0..THINNED_PMF_CACHE as u64)
                        .map(|j| thinned_power_pmf(base, *p, j))
                        .collect()
                });
                cache
                    .get(k as usize)
                    .copied()
                    .unwrap_or_else(|| thinned_power_pmf(base, *p, k))
            }
        }
    }

    /// P(Z >= k), exact. `None` for thinned power laws, whose tail has no
    /// closed form (use `pmf` partial sums with the ambient tail as a bound).
    pub fn exact_tail(&self, k: u64) -> Option<f64> {
        match &self.form {
            LawForm::Table { cdf, .. } => {
                if k == 0 {
                    Some(1.0)
                } else if k as usize > cdf.len() - 1 {
                    Some(0.0)
                } else {
                    Some(1.0 - cdf[k as usize - 1])
                }
            }
            LawForm::Power(base) => Some(base.tail(k)),
            LawForm::ThinnedPower { .. } => None,
        }
    }

    /// Largest support point for finite tables, `None` for analytic forms.
    pub fn support_max(&self) -> Option<u64> {
        match &self.form {
            LawForm::Table { pmf, .. } => Some(pmf.len() as u64 - 1),
            _ => None,
        }
    }

    /// Draws one value with the caller's RNG.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.form {
            LawForm::Table { .. } | LawForm::Power(_) => self.quantile(rng.random::<f64>()),
            LawForm::ThinnedPower { base, p, .. } => {
                let z = base.quantile(rng.random::<f64>());
                Binomial::new(z, *p).expect("valid p").sample(rng)
            }
        }
    }

    /// Inverse CDF from a single uniform in [0, 1).
    ///
    /// This is the sampling path the keyed environment generator relies on:
    /// one uniform, one value, bit-stable across platforms. Panics for
    /// thinned power laws (unbounded pmf, no single-uniform inversion); those
    /// are never ambient laws.
    pub fn quantile(&self, u: f64) -> u64 {
        match &self.form {
            LawForm::Table { cdf, .. } => cdf.partition_point(|&c| c <= u) as u64,
            LawForm::Power(base) => base.quantile(u),
            LawForm::ThinnedPower { .. } => {
                panic!("single-uniform inversion is not available for thinned power laws")
            }
        }
    }

    /// Probability generating function E[s^Z] for s in [0, 1].
    ///
    /// Exact (to rounding) for tables; for power forms the series is summed
    /// until the analytic remainder bound `min(P(Z > K), s^{K+1}/(1-s))`
    /// drops below 1e-13, with a hard cap of 2e7 terms plus a midpoint
    /// integral correction (documented error <= 1e-10).
    pub fn pgf(&self, s: f64) -> f64 {
        assert!((0.0..=1.0).contains(&s), "pgf argument outside [0,1]");
        match &self.form {
            LawForm::Table { pmf, .. } => {
                // Horner from the top of the support.
                let mut acc = 0.0;
                for &p in pmf.iter().rev() {
                    acc = acc * s + p;
                }
                acc
            }
            LawForm::Power(base) => power_pgf(base, s),
            LawForm::ThinnedPower { base, p, .. } => power_pgf(base, 1.0 - p + p * s),
        }
    }

    /// Survival probabilities of the Galton-Watson tree with this offspring
    /// law: q_d = P(tree reaches generation >= d), via q_{n+1} = 1 - f(1 - q_n).
    ///
    /// Requires mean <= 1 + 1e-12 (critical or subcritical), so the iteration
    /// decays to zero.
    pub fn survival_iterate(&self, depth: u32) -> Result<f64, LawError> {
        if self.mean > 1.0 + NORMALIZATION_TOL {
            return Err(LawError::SupercriticalLaw(self.mean));
        }
        let mut q = 1.0;
        for _ in 0..depth {
            q = (1.0 - self.pgf(1.0 - q)).clamp(0.0, 1.0);
        }
        Ok(q)
    }
}

/// pmf of Binomial(Z, p) at j, Z zeta-type. The series over z terminates
/// when the geometric factor (1-p)^z makes the remainder negligible.
fn thinned_power_pmf(base: &PowerLaw, p: f64, j: u64) -> f64 {
    let mut total = 0.0;
    let z0 = j.max(1);
    // P(Bin(z,p) = j) as a function of z, updated multiplicatively:
    // b(z+1)/b(z) = (z+1)(1-p) / (z+1-j).
    let mut b = binomial_coefficient(z0, j) * p.powi(j as i32)
        * (1.0 - p).powi((z0 - j) as i32);
    let mut z = z0;
    loop {
        total += base.pmf(z) * b;
        // Remainder bound: sum_{y > z} pmf(y) b(y) <= b-crest * P(Z > z); the
        // binomial factor decays geometrically once z > j/p.
        if z > z0 + 8 && (b < 1e-18 * total.max(1e-300) || z > z0 + 10_000_000) {
            break;
        }
        z += 1;
        b *= (z as f64) * (1.0 - p) / ((z - j) as f64);
    }
    total
}

/// E[s^Z] for the zeta-type law by direct summation with a bracketed
/// remainder.
fn power_pgf(base: &PowerLaw, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0; // no mass at zero
    }
    if s == 1.0 {
        return 1.0;
    }
    let mut acc = 0.0;
    let mut spow = 1.0;
    let mut k = 0u64;
    const CAP: u64 = 20_000_000;
    loop {
        k += 1;
        spow *= s;
        acc += base.pmf(k) * spow;
        // Remainder after k terms, bracketed two ways.
        let tail_bound = base.tail(k + 1);
        let geo_bound = spow * s / (1.0 - s) * base.pmf(k + 1) * base.zeta_s; // s^{k+1}/(1-s) * sup pmf
        if tail_bound.min(geo_bound) < 1e-13 {
            return acc;
        }
        if k >= CAP {
            // Midpoint integral correction for the remaining tail:
            // sum_{y>k} y^{-s} x^y ~ integral, error <= f(k+1)/2 <= ~1e-10.
            let lambda = -s.ln();
            let f = |t: f64| t.powf(-base.s) * (-lambda * t).exp();
            let upper = (k as f64).max(60.0 / lambda.max(1e-300));
            acc += integrate_log_grid(f, k as f64 + 0.5, upper + k as f64) / base.zeta_s;
            return acc;
        }
    }
}

/// Simpson's rule on a log-spaced grid, enough for the pgf tail correction.
fn integrate_log_grid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = 4096;
    let la = a.ln();
    let h = (b.ln() - la) / n as f64;
    let g = |i: usize| {
        let t = (la + h * i as f64).exp();
        f(t) * t // jacobian of t = e^u
    };
    let mut sum = g(0) + g(n);
    for i in 1..n {
        sum += g(i) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binary_law() -> OffspringLaw {
        OffspringLaw::from_pmf_table(&[(2, 1.0)]).unwrap()
    }

    #[test]
    fn deterministic_binary_tree_law() {
        let law = binary_law();
        assert_eq!(law.mean(), 2.0);
        assert_eq!(law.variance(), Variance::Finite(0.0));
        assert_eq!(law.support_min(), 2);
        let m = law.moments();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.variance.finite(), Some(0.0));
        assert_eq!(m.tail_constant, None);
    }

    #[test]
    fn half_half_law_moments() {
        let law = OffspringLaw::from_pmf_table(&[(1, 0.5), (2, 0.5)]).unwrap();
        assert!((law.mean() - 1.5).abs() < 1e-15);
        assert!((law.variance().finite().unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_supercritical_rejected() {
        assert_eq!(
            OffspringLaw::from_pmf_table(&[(1, 1.0)]).unwrap_err(),
            LawError::NonSupercritical(1.0)
        );
    }

    #[test]
    fn zero_support_rejected() {
        assert_eq!(
            OffspringLaw::from_pmf_table(&[(0, 0.5), (3, 0.5)]).unwrap_err(),
            LawError::BadSupport
        );
    }

    #[test]
    fn unnormalized_rejected() {
        match OffspringLaw::from_pmf_table(&[(1, 0.5), (2, 0.6)]) {
            Err(LawError::NotNormalized(s)) => assert!((s - 1.1).abs() < 1e-12),
            other => panic!("expected NotNormalized, got {other:?}"),
        }
    }

    #[test]
    fn power_law_constants_alpha_15() {
        let law = OffspringLaw::power_law(1.5).unwrap();
        // mu = zeta(1.5)/zeta(2.5), c = 1/(1.5 zeta(2.5)).
        assert!((law.mean() - 1.9474).abs() < 1e-4);
        assert!((law.tail_constant().unwrap() - 0.4969).abs() < 1e-4);
        assert_eq!(law.variance(), Variance::Infinite);
        assert_eq!(law.support_min(), 1);
    }

    #[test]
    fn power_law_alpha_bounds() {
        assert_eq!(
            OffspringLaw::power_law(2.0).unwrap_err(),
            LawError::AlphaOutOfRange(2.0)
        );
        assert_eq!(
            OffspringLaw::power_law(1.0).unwrap_err(),
            LawError::AlphaOutOfRange(1.0)
        );
    }

    #[test]
    fn binary_thinning_by_half() {
        let thinned = binary_law().percolation_thinning(0.5).unwrap();
        assert!((thinned.pmf(0) - 0.25).abs() < 1e-15);
        assert!((thinned.pmf(1) - 0.5).abs() < 1e-15);
        assert!((thinned.pmf(2) - 0.25).abs() < 1e-15);
        assert!((thinned.mean() - 1.0).abs() < 1e-15);
        // sigma_tilde^2 = sigma^2/mu^2 + 1 - 1/mu = 0 + 1 - 1/2.
        assert!((thinned.variance().finite().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_thinning() {
        let law = OffspringLaw::from_pmf_table(&[(1, 0.3), (2, 0.3), (5, 0.4)]).unwrap();
        let same = law.percolation_thinning(1.0).unwrap();
        for k in 0..=6 {
            assert!((law.pmf(k) - same.pmf(k)).abs() < 1e-15);
        }
        let power = OffspringLaw::power_law_with_prefix(1.5, 64).unwrap();
        let same = power.percolation_thinning(1.0).unwrap();
        for k in 1..50 {
            assert!((power.pmf(k) - same.pmf(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn bad_thinning_probability() {
        assert_eq!(
            binary_law().percolation_thinning(0.0).unwrap_err(),
            LawError::BadP(0.0)
        );
        assert_eq!(
            binary_law().percolation_thinning(1.5).unwrap_err(),
            LawError::BadP(1.5)
        );
    }

    #[test]
    fn annealed_moments_example() {
        let m = binary_law().percolation_thinning(0.5).unwrap().moments();
        assert!((m.mean - 1.0).abs() < 1e-15);
        assert!((m.variance.finite().unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(m.tail_constant, None);
    }

    #[test]
    fn survival_iterate_binomial_2_quarter() {
        // Binomial(2, 1/4) = binary thinned by 1/4 (intersection law).
        let law = binary_law().percolation_thinning(0.25).unwrap();
        assert_eq!(law.survival_iterate(0).unwrap(), 1.0);
        assert!((law.survival_iterate(1).unwrap() - 7.0 / 16.0).abs() < 1e-15);
        // Geometric decay rate 1/mu-hat = 2: q_k / q_{k+1} -> 2.
        let q30 = law.survival_iterate(30).unwrap();
        let q31 = law.survival_iterate(31).unwrap();
        assert!((q30 / q31 - 2.0).abs() < 0.02);
    }

    #[test]
    fn survival_iterate_monotone_to_zero() {
        let law = binary_law().percolation_thinning(0.3).unwrap();
        let mut prev = 1.0;
        for d in 0..40 {
            let q = law.survival_iterate(d).unwrap();
            assert!(q <= prev + 1e-15);
            prev = q;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn survival_iterate_rejects_supercritical() {
        match binary_law().survival_iterate(3) {
            Err(LawError::SupercriticalLaw(m)) => assert_eq!(m, 2.0),
            other => panic!("expected SupercriticalLaw, got {other:?}"),
        }
    }

    #[test]
    fn critical_thinning_of_random_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let ks: Vec<u64> = (1..=6).collect();
            let mut ps: Vec<f64> = ks.iter().map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = ps.iter().sum();
            ps.iter_mut().for_each(|p| *p /= total);
            let entries: Vec<(u64, f64)> = ks.into_iter().zip(ps).collect();
            let law = match OffspringLaw::from_pmf_table(&entries) {
                Ok(l) => l,
                Err(LawError::NonSupercritical(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            let critical = law.percolation_thinning(1.0 / law.mean()).unwrap();
            assert!(
                (critical.mean() - 1.0).abs() < 1e-12,
                "mean {} not critical",
                critical.mean()
            );
            let st = critical.variance().finite().unwrap();
            let expect = law.variance().finite().unwrap() / (law.mean() * law.mean()) + 1.0
                - 1.0 / law.mean();
            assert!((st - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn power_quantile_matches_cdf() {
        let law = OffspringLaw::power_law_with_prefix(1.5, 128).unwrap();
        // Check inverse CDF against direct tail sums at a few probe points,
        // including points beyond the prefix table.
        for &u in &[0.0, 0.3, 0.7, 0.95, 0.999, 0.999_999, 1.0 - 1e-9] {
            let k = law.quantile(u);
            let below = 1.0 - law.exact_tail(k).unwrap(); // P(Z < k)
            let upto = 1.0 - law.exact_tail(k + 1).unwrap(); // P(Z <= k)
            assert!(below <= u + 1e-12 && u < upto + 1e-12, "u={u} k={k}");
        }
    }

    #[test]
    fn thinned_power_pmf_sums_with_analytic_tail_bound() {
        let ambient = OffspringLaw::power_law_with_prefix(1.5, 1024).unwrap();
        let law = ambient.percolation_thinning(1.0 / ambient.mean()).unwrap();
        assert!((law.mean() - 1.0).abs() < 1e-12);
        let upto = 512u64;
        let partial: f64 = (0..=upto).map(|j| law.pmf(j)).sum();
        // 1 - partial = P(thin > upto) <= P(Z > upto), which is analytic.
        let bound = ambient.exact_tail(upto + 1).unwrap();
        let defect = 1.0 - partial;
        assert!(defect >= -1e-12, "partial sums exceed 1: defect {defect}");
        assert!(defect <= bound + 1e-12, "defect {defect} above bound {bound}");
    }

    #[test]
    fn pgf_of_power_thinning_consistent_with_pmf() {
        let ambient = OffspringLaw::power_law_with_prefix(1.5, 1024).unwrap();
        let law = ambient.percolation_thinning(0.3).unwrap(); // subcritical
        for &s in &[0.0f64, 0.4, 0.9] {
            let direct: f64 = (0..3000).map(|j| law.pmf(j) * s.powi(j as i32)).sum();
            assert!(
                (law.pgf(s) - direct).abs() < 1e-9,
                "s={s}: {} vs {}",
                law.pgf(s),
                direct
            );
        }
    }

    #[test]
    fn law_spec_round_trip() {
        let spec: LawSpec =
            serde_json::from_str(r#"{"type":"table","pmf":{"1":0.5,"2":0.5}}"#).unwrap();
        let law = spec.build().unwrap();
        assert!((law.mean() - 1.5).abs() < 1e-15);
        assert_eq!(law.spec(), Some(&spec));

        let spec: LawSpec = serde_json::from_str(r#"{"type":"power","alpha":1.5}"#).unwrap();
        let law = spec.build().unwrap();
        assert_eq!(law.alpha(), 1.5);
        let back = serde_json::to_string(law.spec().unwrap()).unwrap();
        assert_eq!(back, r#"{"type":"power","alpha":1.5}"#);
    }

    #[test]
    fn sampling_matches_pmf_coarsely() {
        // Fine-grained chi-square tests live in the integration suite; here
        // just pin the sampler to the right distribution at a coarse level.
        let law = OffspringLaw::from_pmf_table(&[(1, 0.5), (2, 0.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let ones = (0..n).filter(|_| law.sample(&mut rng) == 1).count();
        let p = ones as f64 / n as f64;
        assert!((p - 0.5).abs() < 0.01);
    }
}
