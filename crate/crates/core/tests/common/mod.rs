#![allow(dead_code)]

/// Minimizer of a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// `inf_{a,b>0} -ln(a b^α) + p a + q b`, searched in log coordinates with an
/// outer golden section over `ln a` and an inner one over `ln b`.
pub fn kappa_star_numeric(alpha: f64, p: f64, q: f64) -> f64 {
    let inner = |la: f64| {
        let a = la.exp();
        golden_min(|lb: f64| -(la + alpha * lb) + p * a + q * lb.exp(), -40.0, 40.0).1
    };
    golden_min(inner, -40.0, 40.0).1
}
