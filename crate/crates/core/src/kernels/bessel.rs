//! Modified Bessel function of the second kind, `K_nu(x)` for real order.
//!
//! Temme's series for `x < 2`, Steed's continued fraction for `x >= 2`, both
//! evaluated at the reduced order `|mu| <= 1/2` and lifted to `nu` with the
//! upward recurrence `K_{mu+1} = (2 mu / x) K_mu + K_{mu-1}`.

use std::f64::consts::PI;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Taylor coefficients of `1 / Gamma(1 + x)` around zero.
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// `(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))` as used by Temme's method.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mut odd = 0.0; // sum of a_k mu^(k-1), k odd
    let mut even = 0.0; // sum of a_k mu^k, k even
    let mut pow = 1.0;
    for (k, &a) in RECIP_GAMMA.iter().enumerate() {
        if k % 2 == 0 {
            even += a * pow;
        } else {
            odd += a * pow;
        }
        // pow tracks mu^k for even k and mu^(k-1) for odd k
        if k % 2 == 1 {
            pow *= mu * mu;
        }
    }
    // 1/Gamma(1+mu) = even + mu*odd, 1/Gamma(1-mu) = even - mu*odd
    let gampl = even + mu * odd;
    let gammi = even - mu * odd;
    let gam1 = -odd;
    let gam2 = even;
    (gam1, gam2, gampl, gammi)
}

/// `K_nu(x)` for `nu >= 0`, `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 0.0 && x > 0.0);
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64;
    let xi2 = 2.0 / x;

    let (mut k_mu, mut k_mu1) = if x < 2.0 {
        temme_series(mu, x)
    } else {
        steed_fraction(mu, x)
    };

    for i in 1..=nl {
        let next = (mu + i as f64) * xi2 * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    k_mu
}

fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);

    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let d = x2 * x2;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= d / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * (2.0 / x))
}

fn steed_fraction(mu: f64, x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let h = a1 * h;
    let k_mu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}

/// Arguments below this use the leading small-argument expansion.
const SMALL_ARGUMENT: f64 = 1e-10;

/// Normalized Matérn correlation `r^a K_a(r) / (Gamma(a) 2^(a-1))` at the
/// scaled distance `r = sqrt(2a) d`; exactly 1 at `r = 0`.
pub fn matern_correlation(alpha: f64, r: f64, log_normalizer: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    if r < SMALL_ARGUMENT {
        return small_argument_correlation(alpha, r);
    }
    let log_value = alpha * r.ln() + bessel_k(alpha, r).ln() - log_normalizer;
    log_value.exp()
}

fn small_argument_correlation(alpha: f64, r: f64) -> f64 {
    if alpha < 1.0 {
        let ratio = statrs::function::gamma::gamma(1.0 - alpha) / statrs::function::gamma::gamma(1.0 + alpha);
        1.0 - ratio * (0.5 * r).powf(2.0 * alpha)
    } else if alpha == 1.0 {
        1.0 + 0.25 * r * r * (2.0 * (0.5 * r).ln() + 2.0 * EULER_GAMMA - 1.0)
    } else {
        1.0 - r * r / (4.0 * (alpha - 1.0))
    }
}

/// `ln(Gamma(a) 2^(a-1))`.
pub fn matern_log_normalizer(alpha: f64) -> f64 {
    statrs::function::gamma::ln_gamma(alpha) + (alpha - 1.0) * std::f64::consts::LN_2
}
