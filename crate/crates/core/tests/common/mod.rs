//! Independent numerical oracles shared by the integration tests.

#![allow(dead_code)]

/// `log ∫ exp(g(t)) dt` by the trapezoid rule around the maximum of `g`
/// (located by a coarse scan of `[lo, hi]`), stepping outward until `g`
/// has dropped by 80 nats. Spectrally accurate for smooth, fast-decaying `g`.
pub fn log_trapezoid<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, h: f64) -> f64 {
    let n = 4000;
    let (mut mode, mut top) = (lo, f64::NEG_INFINITY);
    for i in 0..=n {
        let t = lo + (hi - lo) * i as f64 / n as f64;
        let v = g(t);
        if v > top {
            top = v;
            mode = t;
        }
    }
    let mut acc = 1.0;
    for dir in [-1.0, 1.0] {
        let mut i = 1;
        loop {
            let d = g(mode + dir * h * i as f64) - top;
            acc += d.exp();
            if d < -80.0 {
                break;
            }
            i += 1;
        }
    }
    top + (h * acc).ln()
}

/// `log K_v(x)` from `K_v(x) = ½ ∫ exp(v t - x cosh t) dt` over the real
/// line, with the trapezoid step scaled to the width of the peak.
pub fn log_bessel_k_oracle(v: f64, x: f64) -> f64 {
    let g = |t: f64| -x * t.cosh() + v * t;
    let mode = (v / x).asinh();
    let width = 1.0 / (x * mode.cosh()).sqrt();
    let h = (width / 8.0).min(0.02);
    let top = g(mode);
    let mut acc = 1.0;
    for dir in [-1.0, 1.0] {
        let mut i = 1;
        loop {
            let d = g(mode + dir * h * i as f64) - top;
            acc += d.exp();
            if d < -80.0 {
                break;
            }
            i += 1;
        }
    }
    top + (0.5 * h * acc).ln()
}
