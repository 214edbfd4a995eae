//! Small numerical helpers shared across modules.

use alloc::vec::Vec;

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Median of a non-empty slice; even lengths average the two central order
/// statistics. The slice is reordered.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let n = values.len();
    let mid = n / 2;
    let (lower, upper_mid, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper_mid;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile (Acklam's rational approximation plus one Halley
/// refinement step), accurate to roughly 1e-15 on (0, 1).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log1p(-p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    let e = normal_cdf(x) - p;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Binomial(m, p) probability mass function for k = 0..=m.
pub fn binomial_pmf(m: usize, p: f64) -> Vec<f64> {
    let mut pmf = alloc::vec![0.0; m + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p >= 1.0 {
        pmf[m] = 1.0;
        return pmf;
    }
    let (lp, lq) = (libm::log(p), libm::log1p(-p));
    let lm = libm::lgamma(m as f64 + 1.0);
    for (k, slot) in pmf.iter_mut().enumerate() {
        let kf = k as f64;
        let rest = (m - k) as f64;
        *slot = libm::exp(lm - libm::lgamma(kf + 1.0) - libm::lgamma(rest + 1.0) + kf * lp + rest * lq);
    }
    pmf
}

/// Smallest integer `c` in `0..=m` with `P(Binomial(m, p) > c) <= alpha`.
/// Rejecting when the count exceeds `c` is a level-`alpha` test.
pub fn binomial_critical_value(m: usize, p: f64, alpha: f64) -> usize {
    let pmf = binomial_pmf(m, p);
    // tail[c] = P(X > c)
    let mut tail = 0.0;
    let mut c = m;
    while c > 0 {
        let next_tail = tail + pmf[c];
        if next_tail > alpha {
            break;
        }
        tail = next_tail;
        c -= 1;
    }
    c
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
    let lo = (centre - half).max(0.0);
    let hi = (centre + half).min(1.0);
    // Floating round-off can push the bounds past the point estimate at 0 or 1.
    (lo.min(phat), hi.max(phat))
}

/// `P(L > t)` for `L ~ Laplace(0, scale)`; a zero scale is a point mass at 0.
pub fn laplace_upper_tail(t: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        return if t < 0.0 { 1.0 } else { 0.0 };
    }
    if t >= 0.0 {
        0.5 * libm::exp(-t / scale)
    } else {
        1.0 - 0.5 * libm::exp(t / scale)
    }
}

/// Lower Cholesky factor of the symmetric positive definite row-major
/// `k x k` matrix `a`; `None` when a pivot is not positive.
pub fn cholesky(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = alloc::vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for t in 0..j {
                s -= l[i * k + t] * l[j * k + t];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * k + i] = libm::sqrt(s);
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Some(l)
}

/// Solves `L L^T x = b` for a lower Cholesky factor `l`.
pub fn cholesky_solve(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..k {
        for t in 0..i {
            y[i] -= l[i * k + t] * y[t];
        }
        y[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for t in (i + 1)..k {
            y[i] -= l[t * k + i] * y[t];
        }
        y[i] /= l[i * k + i];
    }
    y
}
