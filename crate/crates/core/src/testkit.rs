//! Adaptive Gauss–Kronrod quadrature used as an independent oracle in tests.

#![allow(clippy::excessive_precision)]

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod value, error estimate and `∫|f|` over `[a, b]`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (lo, hi) = (f(center - dx), f(center + dx));
        kronrod += WGK[j] * (lo + hi);
        abs += WGK[j] * (lo.abs() + hi.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (lo + hi);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs(), abs * half.abs())
}

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err, abs) = gk15(f, a, b);
    // below ~50 ulp of the local magnitude the estimate is rounding noise
    if err <= tol.max(50.0 * f64::EPSILON * abs).max(1e-300) || depth == 0 {
        return value;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, tol * 0.5, depth - 1) + adapt(f, m, b, tol * 0.5, depth - 1)
}

/// `∫_a^b f`, to roughly `tol` relative to the magnitude of the integral.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let scale = gk15(&f, a, b).0.abs().max(1e-300);
    adapt(&f, a, b, tol * scale, 30)
}

/// `∫_a^∞ f` via `x = a + u / (1 - u)`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - u;
        let v = f(a + u / w) / (w * w);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

#[test]
fn quadrature_self_check() {
    assert!((integrate(|x| x.powi(5), 0.0, 1.0, 1e-14) - 1.0 / 6.0).abs() < 1e-15);
    assert!((integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-14) - 1.0).abs() < 1e-13);
    let gauss = integrate_to_infinity(|x| (-x * x).exp(), 0.0, 1e-14);
    assert!((gauss - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-13);
}
