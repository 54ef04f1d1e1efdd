//! Globally adaptive Gauss–Kronrod (7/15) quadrature and fixed Gauss–Legendre rules.
//!
//! Endpoint power singularities are the caller's job: every integral in
//! this crate is first mapped by a square-root substitution that makes the
//! integrand bounded, after which G7K15 converges quickly. The accepted
//! panels can be returned as an explicit node/weight list so a Monte Carlo
//! caller can re-apply the same linear rule sample by sample.

use crate::error::Error;
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

// Gauss weights attached to XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_panels: usize,
}

impl<T: Real> QuadOptions<T> {
    pub fn abs(tol: T) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: T::zero(),
            max_panels: 2000,
        }
    }

    pub fn with_max_panels(mut self, max_panels: usize) -> Self {
        self.max_panels = max_panels;
        self
    }
}

#[derive(Clone, Debug)]
pub struct QuadResult<T> {
    pub value: T,
    pub abs_error: T,
    pub panels: usize,
    /// Kronrod nodes and weights of the accepted panels, empty unless requested.
    pub nodes: Vec<(T, T)>,
}

#[derive(Clone, Copy, Debug)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Panel<T> {
    let half = (b - a) * T::lit(0.5);
    let center = (a + b) * T::lit(0.5);
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod += pair * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss += pair * T::lit(WG[j / 2]);
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

fn panel_nodes<T: Real>(a: T, b: T, out: &mut Vec<(T, T)>) {
    let half = (b - a) * T::lit(0.5);
    let center = (a + b) * T::lit(0.5);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let w = half * T::lit(WGK[j]);
        out.push((center - dx, w));
        out.push((center + dx, w));
    }
    out.push((center, half * T::lit(WGK[7])));
}

fn run<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    opts: &QuadOptions<T>,
    want_nodes: bool,
) -> Result<QuadResult<T>, Error> {
    let mut panels = vec![gk15(&mut f, a, b)];
    loop {
        let value = panels.iter().fold(T::zero(), |s, p| s + p.value);
        let error = panels.iter().fold(T::zero(), |s, p| s + p.error);
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature {
                value: value.to_f64().unwrap_or(f64::NAN),
                error: error.to_f64().unwrap_or(f64::NAN),
                panels: panels.len(),
            });
        }
        if error <= target {
            let mut nodes = Vec::new();
            if want_nodes {
                panels.sort_by(|p, q| p.a.partial_cmp(&q.a).unwrap());
                for p in &panels {
                    panel_nodes(p.a, p.b, &mut nodes);
                }
            }
            return Ok(QuadResult {
                value,
                abs_error: error,
                panels: panels.len(),
                nodes,
            });
        }
        if panels.len() >= opts.max_panels {
            return Err(Error::Quadrature {
                value: value.to_f64().unwrap_or(f64::NAN),
                error: error.to_f64().unwrap_or(f64::NAN),
                panels: panels.len(),
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|(_, p), (_, q)| p.error.partial_cmp(&q.error).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let p = panels.swap_remove(worst);
        let mid = (p.a + p.b) * T::lit(0.5);
        panels.push(gk15(&mut f, p.a, mid));
        panels.push(gk15(&mut f, mid, p.b));
    }
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(
    f: F,
    a: T,
    b: T,
    opts: &QuadOptions<T>,
) -> Result<QuadResult<T>, Error> {
    run(f, a, b, opts, false)
}

/// Adaptive integral that also returns the final node/weight list.
pub fn integrate_with_nodes<T: Real, F: FnMut(T) -> T>(
    f: F,
    a: T,
    b: T,
    opts: &QuadOptions<T>,
) -> Result<QuadResult<T>, Error> {
    run(f, a, b, opts, true)
}

/// `n`-point Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre<T: Real>(n: usize, a: T, b: T) -> Vec<(T, T)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    let half = (b - a) * T::lit(0.5);
    let center = (a + b) * T::lit(0.5);
    let nf = n as f64;
    for i in 0..n {
        // Newton iteration on P_n from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((center + half * T::lit(x), half * T::lit(w)));
    }
    out.reverse();
    out
}

/// Composite Gauss–Legendre rule with `panels` equal panels of `n` nodes.
pub fn composite_gauss_legendre<T: Real>(n: usize, panels: usize, a: T, b: T) -> Vec<(T, T)> {
    let width = (b - a) / T::from_count(panels);
    (0..panels)
        .flat_map(|k| {
            let lo = a + width * T::from_count(k);
            gauss_legendre(n, lo, lo + width)
        })
        .collect()
}
