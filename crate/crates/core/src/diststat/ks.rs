use super::edf::EdfCurve;

/// Largest vertical gap between two step curves.
///
/// Both curves only change at their breakpoints, so it is enough to compare
/// them just below and at every breakpoint of either curve.
pub fn ks_statistic(f1: &EdfCurve, f2: &EdfCurve) -> f64 {
    let (a, b) = (f1.points(), f2.points());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut d = 0.0f64;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => unreachable!(),
        };
        // just below t both curves still hold their previous values
        d = d.max((fa - fb).abs());
        if i < a.len() && a[i].0 == t {
            fa = a[i].1;
            i += 1;
        }
        if j < b.len() && b[j].0 == t {
            fb = b[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    d.min(1.0)
}

/// Two-sample Kolmogorov significance for statistic `d` on samples of size
/// `n1` and `n2`.
pub fn ks_pvalue(d: f64, n1: u64, n2: u64) -> f64 {
    assert!(n1 > 0 && n2 > 0, "sample sizes must be positive");
    let (n1, n2) = (n1 as f64, n2 as f64);
    ks_pvalue_effective(d, n1 * n2 / (n1 + n2))
}

/// Same as [`ks_pvalue`] given the effective size `n1 n2 / (n1 + n2)`
/// directly, which lets weighted samples pass a fractional size.
pub fn ks_pvalue_effective(d: f64, ne: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    kolmogorov_q(lambda).clamp(0.0, 1.0)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 x^2)`.
///
/// The alternating series converges slowly for small `x`, so below 1 the
/// equivalent theta-function form is summed instead.
fn kolmogorov_q(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        let c = -std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let mut cdf = 0.0;
        for j in 1..=100u32 {
            let k = f64::from(2 * j - 1);
            let term = (c * k * k).exp();
            cdf += term;
            if term < 1e-12 * cdf.max(1e-300) {
                break;
            }
        }
        return 1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * cdf;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100u32 {
        let jf = f64::from(j);
        let term = (-2.0 * jf * jf * x * x).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    2.0 * sum
}
