//! The binary dislocation measure, the generator on multiplicative
//! functionals, `∂_t g` and the residual of the integro-differential equation
//!
//! `∂_t g(t,x) + √x ∫₀¹ (8πy³(1−y)³)^{−1/2} (g(t,xy)g(t,x(1−y)) − g(t,x)) dy = 0`.
//!
//! The residual estimator couples all quadrature nodes through one set of
//! draws of `Γ_x`: a left piece `Γ_{xy}` and a right piece `Γ_{x(1−y)}` are
//! obtained by splitting the jumps of `Γ_x` (each lands left with probability
//! `y`), or by a Beta split for the gamma subordinator. The jump split is
//! averaged exactly, so each draw contributes a smooth function of `y`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{JumpLaw, SubordinatorKind, SubordinatorSpec};
use crate::partition::MassPartition;
use crate::quad::{composite_gauss_legendre, integrate, integrate_with_nodes, QuadOptions, QuadResult};
use crate::rng::{SimRng, StreamTag, Streams};
use crate::scalar::Real;
use crate::stats::{MCEstimate, Moments};

type Spec = SubordinatorSpec<f64>;

/// Default quadrature tolerance.
pub const DEFAULT_TOL: f64 = 1e-4;
/// Largest jump count handled by subset enumeration.
pub const MAX_ENUMERATED_JUMPS: usize = 16;

/// `∫(1−y₁) ν(dy) = 2/√(2π)`.
pub fn nu_first_moment() -> f64 {
    2.0 / (2.0 * PI).sqrt()
}

/// The standard binary dislocation kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DislocationKernel;

impl DislocationKernel {
    /// `(8π y³(1−y)³)^{−1/2}` on `(0,1)`.
    pub fn weight<T: Real>(&self, y: T) -> T {
        let w = y * (T::one() - y);
        T::one() / (T::lit(8.0) * T::PI() * w * w * w).sqrt()
    }

    /// Density of `ν(y₁ ∈ dy) = (2π y³(1−y)³)^{−1/2} dy` on `(1/2, 1)`.
    pub fn nu_density<T: Real>(&self, y: T) -> T {
        T::lit(2.0) * self.weight(y)
    }
}

/// `∫_{1/2}^1 φ(y, 1−y) ν(dy)` with `1 − y = w²`. `φ` must be `O(1−y)` at 1.
pub fn nu_functional<T: Real, F: Fn(T, T) -> T>(phi: F, tol: T) -> Result<QuadResult<T>> {
    let two = T::lit(2.0);
    let c = two / (two * T::PI()).sqrt();
    let top = T::lit(0.5).sqrt();
    integrate(
        |w: T| {
            let small = w * w;
            let big = T::one() - small;
            phi(big, small) * c / (big * big.sqrt() * small)
        },
        T::zero(),
        top,
        &QuadOptions::abs(tol).with_max_panels(500),
    )
}

/// Value of `G_α𝐟(x)` and the fragments it used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorValue {
    pub value: f64,
    /// Number of leading fragments evaluated before the tail bound fell below `tol`.
    pub terms: usize,
    /// The constant `C_f = sup |f′/f²|` from a finite-difference grid.
    pub c_f: f64,
    /// Bound on the neglected tail.
    pub tail_bound: f64,
}

const C_F_GRID: usize = 10_000;

/// `sup_{[0,1]} |f′/f²|` by central differences; rejects `f(0) ≠ 1` and nonpositive `f`.
pub fn c_f<F: Fn(f64) -> f64>(f: &F) -> Result<f64> {
    if (f(0.0) - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("f(0) must equal 1, got {}", f(0.0))));
    }
    let h = 1.0 / C_F_GRID as f64;
    let vals: Vec<f64> = (0..=C_F_GRID).map(|k| f(k as f64 * h)).collect();
    if let Some(bad) = vals.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(invalid(format!("f must be positive on [0,1], found {bad}")));
    }
    let mut sup = 0.0f64;
    for k in 0..=C_F_GRID {
        let d = if k == 0 {
            (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h)
        } else if k == C_F_GRID {
            (3.0 * vals[k] - 4.0 * vals[k - 1] + vals[k - 2]) / (2.0 * h)
        } else {
            (vals[k + 1] - vals[k - 1]) / (2.0 * h)
        };
        sup = sup.max((d / (vals[k] * vals[k])).abs());
    }
    Ok(sup)
}

/// Bound `2C_f e^{C_f} r ∫(1−y₁)ν(dy)` on one fragment's integral.
pub fn fragment_bound(c_f: f64, r: f64) -> f64 {
    2.0 * c_f * c_f.exp() * r * nu_first_moment()
}

/// `∫ν(dy)(f(ry)f(r(1−y))/f(r) − 1)` for a fragment of mass `r`.
pub fn fragment_term<F: Fn(f64) -> f64>(f: &F, r: f64, tol: f64) -> Result<f64> {
    let fr = f(r);
    Ok(nu_functional(|a: f64, b: f64| f(r * a) * f(r * b) / fr - 1.0, tol)?.value)
}

/// `G_α𝐟(x) = 𝐟(x) Σ xᵢ^α ∫ν(dy)(f(xᵢy)f(xᵢ(1−y))/f(xᵢ) − 1)` with `𝐟(x) = ∏ f(xᵢ)`.
///
/// Fragments are taken in decreasing order; the series stops once the
/// bound on all remaining terms is below `tol`.
pub fn generator_multiplicative<F: Fn(f64) -> f64>(
    f: F,
    partition: &MassPartition,
    alpha: f64,
    tol: f64,
) -> Result<GeneratorValue> {
    if !(alpha >= 0.0) {
        return Err(invalid(format!("α must be nonnegative, got {alpha}")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let cf = c_f(&f)?;
    if let Some(bad) = partition.masses().iter().find(|&&x| !(f(x) > 0.0)) {
        return Err(invalid(format!("f must be positive at every mass, fails at {bad}")));
    }
    let big_f: f64 = partition.masses().iter().map(|&x| f(x)).product();
    let masses = partition.masses();
    let mut tail = partition.total();
    let mut sum = 0.0;
    let mut terms = 0;
    let mut tail_bound = 0.0;
    let per_term_tol = tol / masses.len().max(1) as f64;
    for &x in masses {
        // Σ_{j ≥ i} x_j^{α+1} ≤ x_i^α · (tail mass)
        tail_bound = big_f.abs() * fragment_bound(cf, 1.0) * x.powf(alpha) * tail;
        if tail_bound < tol {
            break;
        }
        sum += x.powf(alpha) * fragment_term(&f, x, per_term_tol)?;
        tail -= x;
        terms += 1;
        tail_bound = 0.0;
    }
    Ok(GeneratorValue {
        value: big_f * sum,
        terms,
        c_f: cf,
        tail_bound,
    })
}

fn check_point(t: f64, x: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be nonnegative, got {t}")));
    }
    if !(x > 0.0 && x <= 1.0) {
        return Err(invalid(format!("x must lie in (0,1], got {x}")));
    }
    Ok(())
}

/// `∂_t g(t,x) = e^{−xc²/2}·E[Γ_x exp(−Γ_x²/(2x) + Γ_x(t+c))]`.
pub fn dt_g<R: Rng + ?Sized>(t: f64, x: f64, spec: &Spec, mc: u64, rng: &mut R) -> Result<MCEstimate> {
    check_point(t, x)?;
    if spec.is_zero() {
        return Ok(MCEstimate::exact(0.0, mc));
    }
    let c = spec.c();
    let a = t + c;
    let e = spec.expect_increment(x, mc, rng, |gam| gam * (-gam * gam / (2.0 * x) + gam * a).exp())?;
    Ok(e.scale((-0.5 * x * c * c).exp()))
}

/// Draws of `Γ_x` kept for reuse at every quadrature node.
#[derive(Clone, Debug)]
enum Draws {
    /// All draws are zero.
    Null,
    /// Constant jumps of size `a`: multiplicity of each jump count `K ≥ 1`.
    Lattice { a: f64, counts: BTreeMap<usize, u64> },
    /// Individual jump sizes of each nonzero draw.
    Sets(Vec<Vec<f64>>),
    /// Gamma draws with the shape per unit time; splits are Beta distributed.
    Gamma { values: Vec<f64>, shape: f64, stream: Streams },
}

/// Common-random-number surface for `y ↦ g(t,xy)g(t,x(1−y)) − g(t,x)`.
#[derive(Clone, Debug)]
pub struct SplitSurface {
    t: f64,
    x: f64,
    c: f64,
    m: u64,
    draws: Draws,
}

impl SplitSurface {
    /// Draws `mc` samples of `Γ_x` from `rng`. Gamma splits use streams of `beta_seed`.
    pub fn new<R: Rng + ?Sized>(t: f64, x: f64, spec: &Spec, mc: u64, beta_seed: u64, rng: &mut R) -> Result<Self> {
        check_point(t, x)?;
        if mc == 0 {
            return Err(invalid("Monte Carlo sample count must be positive"));
        }
        let draws = match *spec.kind() {
            SubordinatorKind::Zero => Draws::Null,
            SubordinatorKind::CompoundPoisson { jump, .. } => {
                let mut sets = Vec::new();
                let mut counts = BTreeMap::new();
                let lattice = match jump {
                    JumpLaw::Constant { a } => Some(a),
                    JumpLaw::Exponential { .. } => None,
                };
                let mut too_many = 0usize;
                spec.for_each_jump_set(x, mc, rng, |jumps, mult| {
                    if jumps.is_empty() {
                        return;
                    }
                    if lattice.is_some() {
                        *counts.entry(jumps.len()).or_insert(0u64) += mult;
                    } else {
                        too_many = too_many.max(jumps.len());
                        for _ in 0..mult {
                            sets.push(jumps.to_vec());
                        }
                    }
                })?;
                if too_many > MAX_ENUMERATED_JUMPS {
                    return Err(invalid(format!(
                        "a draw has {too_many} jumps, more than the {MAX_ENUMERATED_JUMPS} the exact split enumerates"
                    )));
                }
                match lattice {
                    Some(a) => Draws::Lattice { a, counts },
                    None => Draws::Sets(sets),
                }
            }
            SubordinatorKind::Gamma { shape, rate } => {
                let law = Gamma::new(shape * x, 1.0 / rate).expect("validated gamma parameters");
                Draws::Gamma {
                    values: (0..mc).map(|_| law.sample(rng)).collect(),
                    shape,
                    stream: Streams::new(beta_seed),
                }
            }
        };
        Ok(Self {
            t,
            x,
            c: spec.c(),
            m: mc,
            draws,
        })
    }

    pub fn is_exploratory(&self) -> bool {
        matches!(self.draws, Draws::Gamma { .. })
    }

    fn prefactor(&self) -> f64 {
        (-0.5 * self.x * self.c * self.c).exp()
    }

    /// `e^{Γ(t+c)}·(E_split[exp(−L²/(2xy) − R²/(2x(1−y)))] − exp(−Γ²/(2x)))` for constant jumps.
    fn lattice_term(&self, a: f64, k: usize, y: f64) -> f64 {
        let x = self.x;
        let gam = a * k as f64;
        let base = gam * (self.t + self.c);
        let all_right = -gam * gam / (2.0 * x);
        // split with nothing on the left, written as a relative difference
        let ln1my = (-y).ln_1p();
        let mut acc = (base + all_right).exp()
            * (k as f64 * ln1my + all_right * y / (1.0 - y)).exp_m1();
        let ratio = y / (1.0 - y);
        let mut logp = k as f64 * ln1my;
        for j in 1..=k {
            logp += ((k - j + 1) as f64 / j as f64).ln() + ratio.ln();
            let l = a * j as f64;
            let r = gam - l;
            let e = -l * l / (2.0 * x * y) - r * r / (2.0 * x * (1.0 - y));
            acc += (logp + base + e).exp();
        }
        acc
    }

    fn set_term(&self, jumps: &[f64], y: f64) -> f64 {
        let x = self.x;
        let k = jumps.len();
        let gam: f64 = jumps.iter().sum();
        let base = gam * (self.t + self.c);
        let all_right = -gam * gam / (2.0 * x);
        let ln1my = (-y).ln_1p();
        let lny = y.ln();
        let mut acc = (base + all_right).exp()
            * (k as f64 * ln1my + all_right * y / (1.0 - y)).exp_m1();
        for mask in 1u32..(1u32 << k) {
            let left_n = mask.count_ones() as f64;
            let l: f64 = jumps
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, v)| v)
                .sum();
            let r = gam - l;
            let logp = left_n * lny + (k as f64 - left_n) * ln1my;
            let e = -l * l / (2.0 * x * y) - r * r / (2.0 * x * (1.0 - y));
            acc += (logp + base + e).exp();
        }
        acc
    }

    /// Per-draw integrand values at `y`, as `(value, multiplicity)`; zero draws are omitted.
    fn per_draw(&self, y: f64, node: u64, out: &mut Vec<(f64, u64)>) {
        out.clear();
        let pre = self.prefactor();
        match &self.draws {
            Draws::Null => {}
            Draws::Lattice { a, counts } => {
                out.extend(counts.iter().map(|(&k, &m)| (pre * self.lattice_term(*a, k, y), m)));
            }
            Draws::Sets(sets) => out.extend(sets.iter().map(|s| (pre * self.set_term(s, y), 1))),
            Draws::Gamma { values, shape, stream } => {
                let x = self.x;
                let law = Beta::new(shape * x * y, shape * x * (1.0 - y)).expect("positive shapes");
                let mut rng: SimRng = stream.stream(StreamTag::Pde, node);
                out.extend(values.iter().map(|&gam| {
                    let b: f64 = law.sample(&mut rng);
                    let l = gam * b;
                    let r = gam - l;
                    let split = -l * l / (2.0 * x * y) - r * r / (2.0 * x * (1.0 - y));
                    let whole = -gam * gam / (2.0 * x);
                    let base = gam * (self.t + self.c);
                    (pre * ((base + split).exp() - (base + whole).exp()), 1)
                }));
            }
        }
    }

    /// Mean over draws of `g(t,xy)g(t,x(1−y)) − g(t,x)`.
    pub fn mean_at(&self, y: f64) -> f64 {
        let mut buf = Vec::new();
        self.per_draw(y, 0, &mut buf);
        buf.iter().map(|(v, m)| v * *m as f64).sum::<f64>() / self.m as f64
    }

    /// Draws of `Γ_x·exp(−Γ²/(2x) + Γ(t+c))·e^{−xc²/2}` matched to [`Self::per_draw`].
    fn dt_draws(&self) -> Vec<(f64, u64)> {
        let pre = self.prefactor();
        let a = self.t + self.c;
        let x = self.x;
        let f = |gam: f64| pre * gam * (-gam * gam / (2.0 * x) + gam * a).exp();
        match &self.draws {
            Draws::Null => Vec::new(),
            Draws::Lattice { a: jump, counts } => counts.iter().map(|(&k, &m)| (f(jump * k as f64), m)).collect(),
            Draws::Sets(sets) => sets.iter().map(|s| (f(s.iter().sum()), 1)).collect(),
            Draws::Gamma { values, .. } => values.iter().map(|&g| (f(g), 1)).collect(),
        }
    }
}

/// One evaluation of the residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub t: f64,
    pub x: f64,
    pub residual: MCEstimate,
    pub dt_g: MCEstimate,
    /// `√x · 2∫₀^{1/2} weight(y)(ĝ(xy)ĝ(x(1−y)) − ĝ(x)) dy`.
    pub integral: MCEstimate,
    /// Quadrature error estimate of the integral term (NaN when not estimated).
    pub quad_error: f64,
    pub panels: usize,
    /// The hypotheses behind the equation are not established for this spec.
    pub exploratory: bool,
}

impl ResidualReport {
    /// `|residual| ≤ k·stderr + tol`.
    pub fn passes(&self, k: f64, tol: f64) -> bool {
        self.residual.value.abs() <= k * self.residual.stderr + tol
    }
}

const GAMMA_PANELS: usize = 16;
const GAMMA_POINTS: usize = 8;

fn jacobian_lower(v: f64) -> f64 {
    // y = v², dy = 2v dv, weight(v²)·2v
    2.0 / ((8.0 * PI).sqrt() * v * v * (1.0 - v * v).powf(1.5))
}

/// Integrates `weight(y)·D(y)` over `(0,1/2)` on the surface, returning the mean
/// integral, per-draw integrals and the rule used.
fn lower_half(surface: &SplitSurface, tol: f64) -> Result<(QuadResult<f64>, Vec<(f64, u64)>)> {
    let top = 0.5f64.sqrt();
    let rule = if surface.is_exploratory() {
        let nodes = composite_gauss_legendre(GAMMA_POINTS, GAMMA_PANELS, 0.0, top);
        let value = nodes
            .iter()
            .enumerate()
            .map(|(i, &(v, w))| {
                let mut buf = Vec::new();
                surface.per_draw(v * v, i as u64, &mut buf);
                w * jacobian_lower(v) * buf.iter().map(|(d, m)| d * *m as f64).sum::<f64>() / surface.m as f64
            })
            .sum();
        QuadResult {
            value,
            abs_error: f64::NAN,
            panels: GAMMA_PANELS,
            nodes,
        }
    } else {
        integrate_with_nodes(
            |v: f64| jacobian_lower(v) * surface.mean_at(v * v),
            0.0,
            top,
            &QuadOptions::abs(tol).with_max_panels(400),
        )?
    };
    // re-apply the accepted linear rule draw by draw
    let mut per: Vec<(f64, u64)> = Vec::new();
    let mut buf = Vec::new();
    for (i, &(v, w)) in rule.nodes.iter().enumerate() {
        surface.per_draw(v * v, i as u64, &mut buf);
        if per.is_empty() {
            per = buf.iter().map(|&(_, m)| (0.0, m)).collect();
        }
        let jw = w * jacobian_lower(v);
        for (slot, (d, _)) in per.iter_mut().zip(&buf) {
            slot.0 += jw * d;
        }
    }
    Ok((rule, per))
}

/// Residual of the integro-differential equation at `(t, x)`.
///
/// `mc` draws of `Γ_x` feed both `∂_t g` and the integral term, so the
/// stderr is that of one per-draw sum. Gamma specs use a fixed composite
/// Gauss–Legendre rule with fresh Beta splits per node and are flagged
/// exploratory; their quadrature error is not estimated.
pub fn pde_residual<R: Rng + ?Sized>(
    t: f64,
    x: f64,
    spec: &Spec,
    mc: u64,
    tol: f64,
    beta_seed: u64,
    rng: &mut R,
) -> Result<ResidualReport> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let surface = SplitSurface::new(t, x, spec, mc, beta_seed, rng)?;
    let exploratory = surface.is_exploratory();
    let scale = 2.0 * x.sqrt();
    let dt = surface.dt_draws();
    if matches!(surface.draws, Draws::Null) {
        let zero = MCEstimate::exact(0.0, mc);
        return Ok(ResidualReport {
            t,
            x,
            residual: zero,
            dt_g: zero,
            integral: zero,
            quad_error: 0.0,
            panels: 0,
            exploratory,
        });
    }
    let (rule, per) = lower_half(&surface, tol / scale)?;
    let nonzero: u64 = dt.iter().map(|d| d.1).sum();
    let zeros = mc - nonzero;
    let mut d_acc = Moments::new();
    let mut i_acc = Moments::new();
    let mut r_acc = Moments::new();
    for (&(d, m), &(i, _)) in dt.iter().zip(&per) {
        d_acc.push_repeated(d, m);
        i_acc.push_repeated(scale * i, m);
        r_acc.push_repeated(d + scale * i, m);
    }
    for acc in [&mut d_acc, &mut i_acc, &mut r_acc] {
        if zeros > 0 {
            acc.push_repeated(0.0, zeros);
        }
    }
    Ok(ResidualReport {
        t,
        x,
        residual: r_acc.estimate(),
        dt_g: d_acc.estimate(),
        integral: i_acc.estimate(),
        quad_error: scale * rule.abs_error,
        panels: rule.panels,
        exploratory,
    })
}

/// `√x∫₀¹ weight(y)(…) dy` over the full interval, with `y = v²` below 1/2 and `1 − y = w²` above.
pub fn full_interval_integral(surface: &SplitSurface, tol: f64) -> Result<f64> {
    let top = 0.5f64.sqrt();
    let opts = QuadOptions::abs(tol).with_max_panels(400);
    let low = integrate(|v: f64| jacobian_lower(v) * surface.mean_at(v * v), 0.0, top, &opts)?;
    let high = integrate(|w: f64| jacobian_lower(w) * surface.mean_at(1.0 - w * w), 0.0, top, &opts)?;
    Ok(surface.x.sqrt() * (low.value + high.value))
}

/// `√x·2∫₀^{1/2} weight(y)(…) dy` on the same surface.
pub fn symmetric_integral(surface: &SplitSurface, tol: f64) -> Result<f64> {
    let opts = QuadOptions::abs(tol).with_max_panels(400);
    let top = 0.5f64.sqrt();
    Ok(2.0 * surface.x.sqrt() * integrate(|v: f64| jacobian_lower(v) * surface.mean_at(v * v), 0.0, top, &opts)?.value)
}

/// `|mean_at(y)|/y` along `y = 2^{−k}`, the constant of the linear vanishing at 0.
pub fn cancellation_profile(surface: &SplitSurface, ks: &[u32]) -> Vec<(f64, f64)> {
    ks.iter()
        .map(|&k| {
            let y = 0.5f64.powi(k as i32);
            (y, surface.mean_at(y).abs() / y)
        })
        .collect()
}

/// Whether `err` reports a quadrature that did not converge.
pub fn is_quadrature_failure(err: &Error) -> bool {
    matches!(err, Error::Quadrature { .. })
}
