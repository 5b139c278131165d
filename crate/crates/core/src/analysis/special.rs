//! Poisson, Skellam and modified-Bessel kernels used by the CER bounds.

use statrs::function::factorial;

// Chebyshev coefficients of exp(-x)·I0(x) on [0, 8] and of
// sqrt(x)·exp(-x)·I0(x) on (8, ∞), from Cephes.
#[allow(clippy::excessive_precision)]
const BESSI0_COEFFS_A: [f64; 30] = [
    -4.415_341_646_479_339_5E-18,
    3.330_794_518_822_238_4E-17,
    -2.431_279_846_547_955E-16,
    1.715_391_285_555_133E-15,
    -1.168_533_287_799_345_1E-14,
    7.676_185_498_604_936E-14,
    -4.856_446_783_111_929E-13,
    2.955_052_663_129_64E-12,
    -1.726_826_291_441_556E-11,
    9.675_809_035_373_237E-11,
    -5.189_795_601_635_263E-10,
    2.659_823_724_682_386_6E-9,
    -1.300_025_009_986_248E-8,
    6.046_995_022_541_919E-8,
    -2.670_793_853_940_612E-7,
    1.117_387_539_120_103_7E-6,
    -4.416_738_358_458_750_5E-6,
    1.644_844_807_072_889_6E-5,
    -5.754_195_010_082_104E-5,
    1.885_028_850_958_416_5E-4,
    -5.763_755_745_385_824E-4,
    1.639_475_616_941_335_7E-3,
    -4.324_309_995_050_576E-3,
    1.054_646_039_459_499_8E-2,
    -2.373_741_480_589_947E-2,
    4.930_528_423_967_071E-2,
    -9.490_109_704_804_764E-2,
    1.716_209_015_222_087_7E-1,
    -3.046_826_723_431_984E-1,
    6.767_952_744_094_761E-1,
];

#[allow(clippy::excessive_precision)]
const BESSI0_COEFFS_B: [f64; 25] = [
    -7.233_180_487_874_754E-18,
    -4.830_504_485_944_182E-18,
    4.465_621_420_296_76E-17,
    3.461_222_867_697_461E-17,
    -2.827_623_980_516_583_6E-16,
    -3.425_485_619_677_219E-16,
    1.772_560_133_056_526_3E-15,
    3.811_680_669_352_622_4E-15,
    -9.554_846_698_828_307E-15,
    -4.150_569_347_287_222E-14,
    1.540_086_217_521_41E-14,
    3.852_778_382_742_142_6E-13,
    7.180_124_451_383_666E-13,
    -1.794_178_531_506_806_2E-12,
    -1.321_581_184_044_771_3E-11,
    -3.149_916_527_963_241_6E-11,
    1.188_914_710_784_643_9E-11,
    4.940_602_388_224_97E-10,
    3.396_232_025_708_386_5E-9,
    2.266_668_990_498_178E-8,
    2.048_918_589_469_063_8E-7,
    2.891_370_520_834_756_7E-6,
    6.889_758_346_916_825E-5,
    3.369_116_478_255_694_3E-3,
    8.044_904_110_141_088E-1,
];

fn chbevl(x: f64, coeffs: &[f64]) -> f64 {
    let mut b0 = coeffs[0];
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in &coeffs[1..] {
        b2 = b1;
        b1 = b0;
        b0 = x.mul_add(b1, c) - b2;
    }
    0.5 * (b0 - b2)
}

/// Exponentially scaled `e^{-z}·I₀(z)` for `z ≥ 0`.
pub fn bessel_i0e(z: f64) -> f64 {
    let z = z.abs();
    if z <= 8.0 {
        chbevl(z.mul_add(0.5, -2.0), &BESSI0_COEFFS_A)
    } else {
        chbevl(32.0_f64.mul_add(z.recip(), -2.0), &BESSI0_COEFFS_B) / z.sqrt()
    }
}

/// `I_n(z) / I_{n−1}(z)` by the continued fraction
/// `1/(2n/z + 1/(2(n+1)/z + …))`, evaluated with modified Lentz.
fn bessel_i_ratio(n: u32, z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let inv = 2.0 / z;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for k in 0..100_000u32 {
        let b = (n + k) as f64 * inv;
        let a = 1.0;
        d = b + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = b + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// `ln I_n(z)` for integer order `n ≥ 0` and `z ≥ 0`.
///
/// Scaled `I₀` times ratios `I_m/I_{m−1}`: the top ratio comes from a
/// continued fraction, the rest from the downward recurrence
/// `r_{m−1} = 1 / (2(m−1)/z + r_m)`, which is stable for every argument.
pub fn ln_bessel_i(n: u32, z: f64) -> f64 {
    if z == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let mut acc = z + bessel_i0e(z).ln();
    if n == 0 {
        return acc;
    }
    let mut ratio = bessel_i_ratio(n, z);
    acc += ratio.ln();
    for m in (2..=n).rev() {
        ratio = 1.0 / (2.0 * (m - 1) as f64 / z + ratio);
        acc += ratio.ln();
    }
    acc
}

pub fn ln_factorial(n: u64) -> f64 {
    factorial::ln_factorial(n)
}

pub fn poisson_ln_pmf(x: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    x as f64 * lambda.ln() - lambda - ln_factorial(x)
}

/// `λ^x e^{−λ} / x!`, evaluated in the log domain.
pub fn poisson_pmf(x: u64, lambda: f64) -> f64 {
    poisson_ln_pmf(x, lambda).exp()
}

/// Sum of `pmf(j)` for `j ≤ x`, accumulated downward from `x` (relative
/// accuracy when `x` lies below the mean).
fn lower_sum(x: u64, lambda: f64) -> f64 {
    let mut term = poisson_pmf(x, lambda);
    let mut sum = term;
    let mut j = x;
    while j > 0 {
        term *= j as f64 / lambda;
        sum += term;
        j -= 1;
        if term <= sum * 1e-18 {
            break;
        }
    }
    sum
}

/// Sum of `pmf(j)` for `j > x`, accumulated upward (relative accuracy when
/// `x` lies above the mean).
fn upper_sum(x: u64, lambda: f64) -> f64 {
    let mut j = x + 1;
    let mut term = poisson_pmf(j, lambda);
    let mut sum = term;
    loop {
        j += 1;
        term *= lambda / j as f64;
        sum += term;
        if term <= sum * 1e-18 || term == 0.0 {
            break;
        }
    }
    sum
}

/// `P(N ≤ x)` for `N ~ Poisson(λ)`, equal to `Q(x+1, λ)`.
pub fn poisson_cdf(x: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    if (x as f64) < lambda {
        lower_sum(x, lambda).min(1.0)
    } else {
        1.0 - upper_sum(x, lambda)
    }
}

/// `P(N > x)`, accurate in the far upper tail.
pub fn poisson_sf(x: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    if (x as f64) < lambda {
        (1.0 - lower_sum(x, lambda)).max(0.0)
    } else {
        upper_sum(x, lambda)
    }
}

/// `ln P(N ≤ x)` without cancellation on either side.
pub fn poisson_ln_cdf(x: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    if (x as f64) < lambda {
        lower_sum(x, lambda).ln().min(0.0)
    } else {
        (-upper_sum(x, lambda)).ln_1p()
    }
}

/// `ln P(N > x)` without cancellation on either side.
pub fn poisson_ln_sf(x: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return f64::NEG_INFINITY;
    }
    if (x as f64) < lambda {
        (-lower_sum(x, lambda)).ln_1p()
    } else {
        upper_sum(x, lambda).ln()
    }
}

/// `ln P(N₂ − N₁ = x)` with `N₁ ~ Poisson(λ₁)`, `N₂ ~ Poisson(λ₂)`.
pub fn skellam_ln_pmf(x: i64, lambda1: f64, lambda2: f64) -> f64 {
    match (lambda1 == 0.0, lambda2 == 0.0) {
        (true, true) => {
            if x == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        (true, false) => {
            if x >= 0 {
                poisson_ln_pmf(x as u64, lambda2)
            } else {
                f64::NEG_INFINITY
            }
        }
        (false, true) => {
            if x <= 0 {
                poisson_ln_pmf(x.unsigned_abs(), lambda1)
            } else {
                f64::NEG_INFINITY
            }
        }
        (false, false) => {
            let z = 2.0 * (lambda1 * lambda2).sqrt();
            -(lambda1 + lambda2)
                + 0.5 * x as f64 * (lambda2.ln() - lambda1.ln())
                + ln_bessel_i(x.unsigned_abs() as u32, z)
        }
    }
}

/// Skellam pmf `e^{−(λ₁+λ₂)} (λ₂/λ₁)^{x/2} I_x(2√(λ₁λ₂))`: the law of
/// `N₂ − N₁`.
pub fn skellam_pmf(x: i64, lambda1: f64, lambda2: f64) -> f64 {
    skellam_ln_pmf(x, lambda1, lambda2).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln_bessel_series(n: u32, z: f64) -> f64 {
        // Σ_k (z/2)^{2k+n} / (k! (k+n)!) in the log domain
        let half = (z / 2.0).ln();
        let terms: Vec<f64> = (0..2000u64)
            .map(|k| (2 * k + n as u64) as f64 * half - ln_factorial(k) - ln_factorial(k + n as u64))
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    #[test]
    fn bessel_matches_series() {
        for &z in &[1e-3, 0.1, 1.0, 2.0, 7.9, 8.1, 30.0, 120.0, 600.0] {
            for &n in &[0u32, 1, 2, 5, 17, 60, 200] {
                let got = ln_bessel_i(n, z);
                let want = ln_bessel_series(n, z);
                assert!(
                    (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                    "n={n} z={z}: {got} vs {want}"
                );
            }
        }
        assert_eq!(ln_bessel_i(0, 0.0), 0.0);
        assert_eq!(ln_bessel_i(3, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn poisson_point_values() {
        assert_eq!(poisson_pmf(0, 0.0), 1.0);
        assert_eq!(poisson_cdf(0, 0.0), 1.0);
        assert_eq!(poisson_pmf(2, 0.0), 0.0);
        // 2.5³ e^{−2.5} / 6
        let want = 2.5f64.powi(3) * (-2.5f64).exp() / 6.0;
        assert!((poisson_pmf(3, 2.5) - want).abs() < 1e-15);
        assert!((poisson_pmf(3, 2.5) - 0.21376).abs() < 1e-5);
    }

    #[test]
    fn poisson_tails_are_complementary() {
        for &lambda in &[0.1, 4.9, 20.4, 150.0] {
            for x in 0..300u64 {
                let c = poisson_cdf(x, lambda);
                let s = poisson_sf(x, lambda);
                assert!((c + s - 1.0).abs() < 1e-14, "λ={lambda} x={x}");
                assert!((poisson_ln_cdf(x, lambda) - c.ln()).abs() <= 1e-12 * c.ln().abs().max(1e-3));
            }
        }
        // far tail keeps relative accuracy
        let s = poisson_sf(120, 4.9);
        let direct: f64 = (121..200).map(|j| poisson_pmf(j, 4.9)).sum();
        assert!((s / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn skellam_limits_and_symmetry() {
        assert!((skellam_pmf(1, 0.0, 2.0) - poisson_pmf(1, 2.0)).abs() < 1e-16);
        assert!((skellam_pmf(1, 0.0, 2.0) - 0.27067).abs() < 1e-5);
        assert_eq!(skellam_pmf(-1, 0.0, 2.0), 0.0);
        assert!((skellam_pmf(-3, 2.0, 0.0) - poisson_pmf(3, 2.0)).abs() < 1e-16);
        assert!((skellam_pmf(0, 1.0, 1.0) - 0.30851).abs() < 1e-5);
        for x in -10..=10 {
            let a = skellam_pmf(x, 3.0, 2.0);
            let b = skellam_pmf(-x, 2.0, 3.0);
            assert!((a - b).abs() < 1e-15);
        }
    }
}
