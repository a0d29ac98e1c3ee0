//! Adaptive Gauss–Kronrod (7/15) integration on finite intervals, plus a
//! helper for integrating `exp(g(t))` over the real line when `g` is unimodal.

#![allow(clippy::excessive_precision)]

use super::PriorError;

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

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Integral, PriorError> {
    let (v0, e0) = kronrod(&mut f, a, b);
    let mut intervals = vec![(a, b, v0, e0)];
    loop {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if !total.is_finite() {
            return Err(PriorError::Quadrature {
                achieved: f64::NAN,
                target: rel_tol,
            });
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Integral {
                value: total,
                abs_error: err,
            });
        }
        if intervals.len() >= max_intervals {
            return Err(PriorError::Quadrature {
                achieved: err / total.abs(),
                target: rel_tol,
            });
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, iv)| if iv.3 > best.1 { (i, iv.3) } else { best });
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(PriorError::Quadrature {
                achieved: err / total.abs(),
                target: rel_tol,
            });
        }
        let (vl, el) = kronrod(&mut f, lo, mid);
        let (vr, er) = kronrod(&mut f, mid, hi);
        intervals.push((lo, mid, vl, el));
        intervals.push((mid, hi, vr, er));
    }
}

/// `log ∫_{-∞}^{∞} exp(g(t)) dt` for a unimodal `g` that decays in both tails.
///
/// The mode is bracketed on a coarse grid and refined by golden section, the
/// integration window is widened until `g` has dropped by `drop` nats on
/// both sides, and the shifted integrand `exp(g - g_max)` is integrated.
pub fn log_integrate_unimodal<G: Fn(f64) -> f64>(
    g: G,
    search: (f64, f64),
    rel_tol: f64,
) -> Result<f64, PriorError> {
    const DROP: f64 = 60.0;
    let (lo, hi) = search;
    let n_grid = 400;
    let step = (hi - lo) / n_grid as f64;
    let (mut best_t, mut best_g) = (lo, f64::NEG_INFINITY);
    for i in 0..=n_grid {
        let t = lo + step * i as f64;
        let v = g(t);
        if v > best_g {
            best_g = v;
            best_t = t;
        }
    }
    if !best_g.is_finite() {
        return Err(PriorError::Quadrature {
            achieved: f64::NAN,
            target: rel_tol,
        });
    }
    // golden-section refinement inside the bracketing cell
    let (mut a, mut b) = (best_t - step, best_t + step);
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
        if (b - a).abs() < 1e-14 * (1.0 + best_t.abs()) {
            break;
        }
    }
    let mode = 0.5 * (a + b);
    let peak = g(mode).max(best_g);

    let mut left_w = step.max(1e-3);
    while g(mode - left_w) > peak - DROP {
        left_w *= 2.0;
        if left_w > 1e4 {
            break;
        }
    }
    let mut right_w = step.max(1e-3);
    while g(mode + right_w) > peak - DROP {
        right_w *= 2.0;
        if right_w > 1e4 {
            break;
        }
    }
    let shifted = |t: f64| (g(t) - peak).exp();
    let left = integrate(shifted, mode - left_w, mode, 0.0, rel_tol, 4000)?;
    let right = integrate(shifted, mode, mode + right_w, 0.0, rel_tol, 4000)?;
    Ok(peak + (left.value + right.value).ln())
}
