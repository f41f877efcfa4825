//! Analytic density-operator elements at one momentum node and time.
//!
//! The state is ρ(t) = Σ_k (2γt)ᵏ/k! · Hᵏ ρ₂ Hᵏ with ρ₂ = |φ⟩⟨φ| a pure
//! state, so every element the observables need is a sum over k of products
//! ⟨·|Hᵏ|φ⟩⟨φ|Hᵏ|·⟩. Only diagonals and the few off-diagonals entering
//! ⟨σ₋⟩, ⟨a⟩ and ⟨a²⟩ are formed.
//!
//! In exact mode the ket and bra sides of a product may live in different
//! excitation blocks. Each such pair is evaluated with energies measured from
//! the bra block's H₁ value (the solution does not depend on the origin), so
//! the ket side uses `Frame::Offset(d)` with d the block difference and the
//! bra side `Frame::Offset(0)`. The large ω_c-sized powers then cancel
//! analytically instead of numerically.

use num_complex::Complex64 as C64;

use crate::blockalg::{block_energies, coefficient_set, compose_ladder, ladder_scalars, Frame, LadderScalars, NodeContext};
use crate::config::{FormulaMode, NumericsParams, PhysicalParams};
use crate::error::Result;
use crate::scaled::{ln_factorial, Scaled};

/// Ket-side frame offsets used in exact mode; the bra side is always offset 0.
const EXACT_OFFSETS: [i32; 4] = [-1, 0, 1, 2];

/// Amplitudes of the pure state ρ₂ in one frame. `psi1[n]` is the (e,n)
/// amplitude, `psi2[n]` the (g,n) amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiAmplitudes {
    pub frame: Frame,
    pub base: Vec<Scaled>,
    pub psi1: Vec<Scaled>,
    pub psi2: Vec<Scaled>,
}

impl PsiAmplitudes {
    pub fn psi1_at(&self, n: i64) -> Scaled {
        at(&self.psi1, n)
    }

    pub fn psi2_at(&self, n: i64) -> Scaled {
        at(&self.psi2, n)
    }

    /// max_b ln ‖(ψ₁(b), ψ₂(b+1))‖.
    fn ln_max_block_norm(&self) -> f64 {
        (0..self.psi1.len() as i64)
            .map(|b| {
                let s = self.psi1_at(b).norm_sqr() + self.psi2_at(b + 1).norm_sqr();
                0.5 * s.ln_abs()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[inline]
fn at(v: &[Scaled], n: i64) -> Scaled {
    if n < 0 {
        Scaled::ZERO
    } else {
        v.get(n as usize).copied().unwrap_or(Scaled::ZERO)
    }
}

/// ψ amplitudes for n = 0..=n_max (ψ₂ up to n_max+1).
///
/// Exact mode: ψ₁(n) = f₁(n)Ψ(n), ψ₂(n+1) = √(n+1) f₃(n+1)Ψ(n) with
/// Ψ(n) = exp(-γt(h₁² + Ω_n²)) w_n e^{-i h₁ t}.
/// Printed mode: ψ₁(n) = f₁(n)Ψ(n), ψ₂(n) = f₃(n)Ψ(n) with the printed Ψ.
pub fn psi_amplitudes(ctx: &NodeContext, weights: &[C64], mode: FormulaMode, frame: Frame) -> PsiAmplitudes {
    let n_max = weights.len() - 1;
    let mut base = Vec::with_capacity(n_max + 1);
    let mut psi1 = Vec::with_capacity(n_max + 1);
    let mut psi2 = vec![Scaled::ZERO; n_max + 2];
    let gt = ctx.gamma * ctx.t;
    let dl = ctx.delta4();
    let mut next = coefficient_set(0, ctx, mode, frame).expect("non-negative index");
    for (n, &w) in weights.iter().enumerate() {
        let ni = n as i64;
        let cs = next;
        next = coefficient_set(ni + 1, ctx, mode, frame).expect("non-negative index");
        let om = ctx.rabi(ni);
        let b = match mode {
            FormulaMode::PaperFaithful => {
                let nf = n as f64;
                let expo = ctx.omega_c.powi(2) * (nf + 0.5).powi(2)
                    + ctx.lambda.powi(2) * (nf + 1.0)
                    + dl * dl;
                Scaled::from_ln(-gt * expo, w * C64::from_polar(1.0, -nf * ctx.omega_c * ctx.t))
            }
            FormulaMode::BlockExact => {
                let h1 = frame.h1(ni, ctx.omega_c);
                Scaled::from_ln(-gt * (h1 * h1 + om * om), w * C64::from_polar(1.0, -h1 * ctx.t))
            }
        };
        base.push(b);
        psi1.push(cs.f1 * b);
        match mode {
            FormulaMode::PaperFaithful => psi2[n] = cs.f3 * b,
            FormulaMode::BlockExact => psi2[n + 1] = (next.f3 * b).scale(((n + 1) as f64).sqrt()),
        }
    }
    PsiAmplitudes { frame, base, psi1, psi2 }
}

/// ψ amplitudes in every frame the chosen mode needs.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeAmplitudes {
    pub mode: FormulaMode,
    pub frames: Vec<PsiAmplitudes>,
}

impl NodeAmplitudes {
    pub fn new(ctx: &NodeContext, weights: &[C64], mode: FormulaMode) -> Self {
        let frames = match mode {
            FormulaMode::PaperFaithful => vec![psi_amplitudes(ctx, weights, mode, Frame::Absolute)],
            FormulaMode::BlockExact => EXACT_OFFSETS
                .iter()
                .map(|&d| psi_amplitudes(ctx, weights, mode, Frame::Offset(d)))
                .collect(),
        };
        NodeAmplitudes { mode, frames }
    }

    pub fn n_max(&self) -> usize {
        self.frames[0].psi1.len() - 1
    }

    fn frame_list(&self) -> Vec<Frame> {
        self.frames.iter().map(|f| f.frame).collect()
    }

    fn offset(&self, d: i32) -> usize {
        match self.mode {
            FormulaMode::PaperFaithful => 0,
            FormulaMode::BlockExact => (d + 1) as usize,
        }
    }
}

/// Block elements before conversion, indexed by photon number 0..=n_max+1.
///
/// m11(n) = ⟨e,n|·|e,n⟩, m22(n) = ⟨g,n|·|g,n⟩, m12(n) = ⟨e,n|·|g,n⟩,
/// m11_a(n) = √n ⟨e,n|·|e,n-1⟩, m11_a2(n) = √(n(n-1)) ⟨e,n|·|e,n-2⟩ and
/// likewise for g. `m21` is an independent evaluation of ⟨g,n|·|e,n⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledElements {
    pub m11: Vec<Scaled>,
    pub m22: Vec<Scaled>,
    pub m12: Vec<Scaled>,
    pub m21: Vec<Scaled>,
    pub m11_a: Vec<Scaled>,
    pub m22_a: Vec<Scaled>,
    pub m11_a2: Vec<Scaled>,
    pub m22_a2: Vec<Scaled>,
}

impl ScaledElements {
    pub fn zeros(len: usize) -> Self {
        let z = vec![Scaled::ZERO; len];
        ScaledElements {
            m11: z.clone(),
            m22: z.clone(),
            m12: z.clone(),
            m21: z.clone(),
            m11_a: z.clone(),
            m22_a: z.clone(),
            m11_a2: z.clone(),
            m22_a2: z,
        }
    }

    fn fields(&self) -> [&Vec<Scaled>; 8] {
        [&self.m11, &self.m22, &self.m12, &self.m21, &self.m11_a, &self.m22_a, &self.m11_a2, &self.m22_a2]
    }

    fn fields_mut(&mut self) -> [&mut Vec<Scaled>; 8] {
        [
            &mut self.m11,
            &mut self.m22,
            &mut self.m12,
            &mut self.m21,
            &mut self.m11_a,
            &mut self.m22_a,
            &mut self.m11_a2,
            &mut self.m22_a2,
        ]
    }

    /// self += w · other
    pub fn add_scaled(&mut self, w: Scaled, other: &ScaledElements) {
        for (dst, src) in self.fields_mut().into_iter().zip(other.fields()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * *s;
            }
        }
    }

    /// ln of the largest modulus over all entries.
    pub fn ln_max(&self) -> f64 {
        self.fields()
            .iter()
            .flat_map(|v| v.iter())
            .map(|s| s.ln_abs())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_elements(&self) -> BlockElements {
        let c = |v: &Vec<Scaled>| v.iter().map(|s| s.to_c64()).collect::<Vec<_>>();
        let r = |v: &Vec<Scaled>| v.iter().map(|s| s.re()).collect::<Vec<_>>();
        BlockElements {
            m11: r(&self.m11),
            m22: r(&self.m22),
            m12: c(&self.m12),
            m11_a: c(&self.m11_a),
            m22_a: c(&self.m22_a),
            m11_a2: c(&self.m11_a2),
            m22_a2: c(&self.m22_a2),
        }
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.m12
            .iter()
            .zip(&self.m21)
            .map(|(a, b)| (a.conj().to_c64() - b.to_c64()).norm())
            .fold(0.0, f64::max)
    }
}

/// Block elements of ρ at one node, summed over k, indexed by photon number
/// 0..=n_max+1. The oracle fills the same structure from full matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockElements {
    pub m11: Vec<f64>,
    pub m22: Vec<f64>,
    pub m12: Vec<C64>,
    pub m11_a: Vec<C64>,
    pub m22_a: Vec<C64>,
    pub m11_a2: Vec<C64>,
    pub m22_a2: Vec<C64>,
}

/// Ladder scalars for every photon argument 0..=n_max+2 in one frame.
fn ladders_from_powers(
    ctx: &NodeContext,
    mode: FormulaMode,
    energies: &[(f64, f64)],
    powers: &[(Scaled, Scaled)],
) -> Vec<LadderScalars> {
    // energies[b + 1] belongs to block b
    (0..energies.len() - 1)
        .map(|n| {
            let (rp, rm) = energies[n + 1];
            let (sp, sm) = energies[n];
            let (prp, prm) = powers[n + 1];
            let (psp, psm) = powers[n];
            compose_ladder(n as i64, [rp, rm, sp, sm], [prp, prm, psp, psm], ctx, mode)
        })
        .collect()
}

/// (Hᵏφ) projected on (e,n) and (g,n) for n = 0..len.
fn apply_power(amps: &PsiAmplitudes, lad: &[LadderScalars], len: usize) -> (Vec<Scaled>, Vec<Scaled>) {
    let n_max = amps.psi1.len() as i64 - 1;
    let mut top = vec![Scaled::ZERO; len];
    let mut bot = vec![Scaled::ZERO; len];
    for n in 0..len as i64 {
        let l = &lad[n as usize];
        if n <= n_max {
            let up = &lad[n as usize + 1];
            top[n as usize] = l.g_plus_k * amps.psi1_at(n) + up.h_k.conj() * amps.psi2_at(n + 1);
        }
        bot[n as usize] = l.h_k * amps.psi1_at(n - 1) + l.g_minus_k * amps.psi2_at(n);
    }
    (top, bot)
}

fn exact_elements(amps: &NodeAmplitudes, ladders: &[Vec<LadderScalars>]) -> ScaledElements {
    let len = amps.n_max() + 2;
    let tb: Vec<_> = amps.frames.iter().zip(ladders).map(|(a, l)| apply_power(a, l, len)).collect();
    let (_, bot_m1) = &tb[amps.offset(-1)];
    let (top0, bot0) = &tb[amps.offset(0)];
    let (top1, bot1) = &tb[amps.offset(1)];
    let (top2, bot2) = &tb[amps.offset(2)];
    let mut out = ScaledElements::zeros(len);
    for n in 0..len {
        out.m11[n] = top0[n].norm_sqr();
        out.m22[n] = bot0[n].norm_sqr();
        out.m12[n] = top1[n] * bot0[n].conj();
        out.m21[n] = bot_m1[n] * top0[n].conj();
        if n >= 1 {
            let r = (n as f64).sqrt();
            out.m11_a[n] = (top1[n] * top0[n - 1].conj()).scale(r);
            out.m22_a[n] = (bot1[n] * bot0[n - 1].conj()).scale(r);
        }
        if n >= 2 {
            let r = ((n * (n - 1)) as f64).sqrt();
            out.m11_a2[n] = (top2[n] * top0[n - 2].conj()).scale(r);
            out.m22_a2[n] = (bot2[n] * bot0[n - 2].conj()).scale(r);
        }
    }
    out
}

fn rt(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.sqrt()
    }
}

/// The printed quadratic forms, verbatim, with zero guards outside the
/// truncated range.
fn printed_elements(amps: &PsiAmplitudes, lad: &[LadderScalars]) -> ScaledElements {
    let len = amps.psi1.len() + 1;
    let get = |n: i64| -> Option<&LadderScalars> {
        if n < 0 {
            None
        } else {
            lad.get(n as usize)
        }
    };
    let gp = |n: i64| get(n).map_or(Scaled::ZERO, |l| l.g_plus_k);
    let gm = |n: i64| get(n).map_or(Scaled::ZERO, |l| l.g_minus_k);
    let h = |n: i64| get(n).map_or(Scaled::ZERO, |l| l.h_k);
    let vpp = |n: i64| get(n).map_or(Scaled::ZERO, |l| l.v_prime_plus_k);
    let vpm = |n: i64| get(n).map_or(Scaled::ZERO, |l| l.v_prime_minus_k);
    let p1 = |n: i64| amps.psi1_at(n);
    let p2 = |n: i64| amps.psi2_at(n);
    let two_re = |z: Scaled| z.real_part().scale(2.0);

    let mut out = ScaledElements::zeros(len);
    for i in 0..len {
        let n = i as i64;
        let nf = n as f64;
        out.m11[i] = gp(n) * gp(n) * p1(n).norm_sqr()
            + h(n + 1) * h(n + 1) * p2(n + 1).norm_sqr()
            + two_re(gp(n) * h(n + 1) * p1(n).conj() * p2(n + 1));
        out.m22[i] = h(n) * h(n) * p1(n - 1).norm_sqr()
            + gm(n) * gm(n) * p2(n).norm_sqr()
            + two_re(gm(n) * h(n) * p1(n - 1).conj() * p2(n));
        let inner = gm(n) * p2(n).conj() + h(n) * p1(n - 1).conj();
        out.m12[i] = gp(n) * p1(n) * inner + h(n + 1) * p2(n + 1) * inner;
        out.m21[i] = out.m12[i].conj();

        out.m11_a[i] = (gp(n) * gp(n - 1) * p1(n) * p1(n - 1).conj()).scale(rt(nf))
            + (vpp(n + 1) * gp(n - 1) * p2(n + 1) * p1(n - 1).conj()).scale(rt(nf * (nf + 1.0)))
            + (vpp(n) * gp(n) * p1(n) * p2(n).conj()).scale(nf)
            + (vpm(n + 1) * vpm(n) * p2(n + 1) * p2(n).conj()).scale(nf * rt(nf + 1.0));
        out.m11_a2[i] = (gp(n) * gp(n - 2) * p1(n) * p1(n - 2).conj()).scale(rt(nf * (nf - 1.0)))
            + (vpp(n + 1) * gp(n - 2) * p2(n + 1) * p1(n - 2).conj())
                .scale(rt(nf * (nf - 1.0) * (nf + 1.0)))
            + (vpm(n - 1) * gp(n) * p1(n) * p2(n - 1).conj()).scale((nf - 1.0) * rt(nf))
            + (vpm(n + 1) * vpm(n - 1) * p2(n + 1) * p2(n - 1).conj())
                .scale((nf - 1.0) * rt(nf * (nf + 1.0)));
        out.m22_a[i] = (gm(n) * gm(n - 1) * p2(n) * p2(n - 1).conj()).scale(rt(nf))
            + (vpp(n - 1) * gp(n) * p2(n) * p1(n - 2).conj()).scale(rt(nf * (nf - 1.0)))
            + (vpm(n) * gm(n - 1) * p1(n - 1) * p2(n - 1).conj()).scale(nf)
            + (vpm(n - 1) * vpm(n) * p1(n - 1) * p2(n - 2).conj()).scale(nf * rt(nf - 1.0));
        out.m22_a2[i] = (gm(n) * gm(n - 2) * p2(n) * p2(n - 2).conj()).scale(rt(nf * (nf - 1.0)))
            + (vpp(n - 2) * gm(n) * p2(n) * p1(n - 3).conj())
                .scale(rt(nf * (nf - 1.0) * (nf - 2.0)))
            + (vpm(n) * gp(n - 2) * p1(n - 1) * p2(n - 2).conj()).scale(nf * rt(nf - 1.0))
            + (vpm(n) * vpm(n - 2) * p1(n - 1) * p1(n - 3).conj())
                .scale((nf - 1.0) * rt((nf - 1.0) * (nf - 2.0)));
    }
    out
}

fn elements_from_ladders(amps: &NodeAmplitudes, ladders: &[Vec<LadderScalars>]) -> ScaledElements {
    match amps.mode {
        FormulaMode::PaperFaithful => printed_elements(&amps.frames[0], &ladders[0]),
        FormulaMode::BlockExact => exact_elements(amps, ladders),
    }
}

/// The k-th term of every block element (without the (2γt)ᵏ/k! weight).
pub fn block_elements(ctx: &NodeContext, amps: &NodeAmplitudes, k: usize) -> Result<ScaledElements> {
    let top = amps.n_max() as i64 + 2;
    let ladders = amps
        .frame_list()
        .into_iter()
        .map(|fr| (0..=top).map(|n| ladder_scalars(n, k, ctx, amps.mode, fr)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(elements_from_ladders(amps, &ladders))
}

/// Stopping controls for Σ_k (2γt)ᵏ/k! term(k).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesControl {
    pub two_gamma_t: f64,
    pub tol: f64,
    pub k_max: usize,
}

/// |term(k)| ≤ exp(ln_scale) · rateᵏ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailBound {
    pub ln_scale: f64,
    pub rate: f64,
}

impl TailBound {
    /// ln of a bound on Σ_{k>K} xᵏ/k! |term(k)|; +inf until the terms
    /// are monotonically shrinking.
    pub fn ln_tail(&self, x: f64, k: usize) -> f64 {
        let xr = x * self.rate;
        if xr == 0.0 || self.ln_scale == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let next = (k + 2) as f64;
        if xr >= next {
            return f64::INFINITY;
        }
        self.ln_scale + (k + 1) as f64 * xr.ln() - ln_factorial(k + 1) - (1.0 - xr / next).ln()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesAccumulator<T> {
    pub partial: T,
    pub k_reached: usize,
    /// Tail bound relative to the largest partial sum.
    pub tail_estimate: f64,
    pub converged: bool,
}

/// Sums Σ_k (2γt)ᵏ/k! term(k) in increasing k. `add_term(k, w, acc)` must add
/// w·term(k) to `acc`; `ln_size` measures the partial sum for the relative
/// stopping test.
pub fn series_sum<T>(
    ctrl: &SeriesControl,
    bounds: &[TailBound],
    mut acc: T,
    mut add_term: impl FnMut(usize, Scaled, &mut T),
    ln_size: impl Fn(&T) -> f64,
) -> SeriesAccumulator<T> {
    let x = ctrl.two_gamma_t;
    let ln_x = x.ln();
    let ln_tol = ctrl.tol.ln();
    let mut tail = f64::INFINITY;
    for k in 0..=ctrl.k_max {
        let w = if k == 0 {
            Scaled::ONE
        } else {
            Scaled::from_ln(k as f64 * ln_x - ln_factorial(k), C64::new(1.0, 0.0))
        };
        add_term(k, w, &mut acc);
        if x == 0.0 {
            return SeriesAccumulator { partial: acc, k_reached: 0, tail_estimate: 0.0, converged: true };
        }
        let ln_tail = bounds.iter().map(|b| b.ln_tail(x, k)).fold(f64::NEG_INFINITY, f64::max);
        let ln_s = ln_size(&acc);
        tail = if ln_tail == f64::NEG_INFINITY { 0.0 } else { (ln_tail - ln_s).exp() };
        if ln_tail == f64::NEG_INFINITY || ln_tail - ln_s < ln_tol {
            return SeriesAccumulator { partial: acc, k_reached: k, tail_estimate: tail, converged: true };
        }
    }
    SeriesAccumulator { partial: acc, k_reached: ctrl.k_max, tail_estimate: tail, converged: false }
}

/// Summed elements at one node plus diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeResult {
    pub elements: BlockElements,
    pub k_reached: usize,
    pub tail_estimate: f64,
    pub converged: bool,
    pub hermiticity_residual: f64,
}

/// Running powers of the block eigenvalues, one set per frame.
struct LadderPowers {
    energies: Vec<Vec<(f64, f64)>>,
    powers: Vec<Vec<(Scaled, Scaled)>>,
}

impl LadderPowers {
    fn new(ctx: &NodeContext, mode: FormulaMode, frames: &[Frame], top_block: i64) -> Self {
        let energies: Vec<Vec<(f64, f64)>> = frames
            .iter()
            .map(|&fr| (-1..=top_block).map(|b| block_energies(b, ctx, mode, fr)).collect())
            .collect();
        let powers = energies.iter().map(|e| vec![(Scaled::ONE, Scaled::ONE); e.len()]).collect();
        LadderPowers { energies, powers }
    }

    fn advance(&mut self) {
        for (pw, en) in self.powers.iter_mut().zip(&self.energies) {
            for (p, &(a, b)) in pw.iter_mut().zip(en) {
                *p = (p.0 * Scaled::from_real(a), p.1 * Scaled::from_real(b));
            }
        }
    }

    fn ladders(&self, ctx: &NodeContext, mode: FormulaMode) -> Vec<Vec<LadderScalars>> {
        self.energies
            .iter()
            .zip(&self.powers)
            .map(|(e, p)| ladders_from_powers(ctx, mode, e, p))
            .collect()
    }

    fn max_abs(&self, f: usize) -> f64 {
        self.energies[f].iter().map(|&(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max)
    }
}

fn tail_bounds(amps: &NodeAmplitudes, powers: &LadderPowers, ctx: &NodeContext) -> Vec<TailBound> {
    let n_max = amps.n_max() as f64;
    match amps.mode {
        FormulaMode::BlockExact => {
            let bra = amps.offset(0);
            let ln_bra = amps.frames[bra].ln_max_block_norm();
            let r_bra = powers.max_abs(bra);
            (0..amps.frames.len())
                .map(|f| TailBound {
                    ln_scale: (n_max + 2.0).ln() + amps.frames[f].ln_max_block_norm() + ln_bra,
                    rate: powers.max_abs(f) * r_bra,
                })
                .collect()
        }
        FormulaMode::PaperFaithful => {
            let r = powers.max_abs(0);
            let dl = ctx.delta4().abs();
            let a = (1.0 + dl).max((n_max + 2.0).sqrt() * ctx.lambda / ctx.rabi(0));
            let psi = &amps.frames[0];
            let ln_psi = psi
                .psi1
                .iter()
                .chain(&psi.psi2)
                .map(|s| s.ln_abs())
                .fold(f64::NEG_INFINITY, f64::max);
            vec![TailBound {
                ln_scale: (4.0 * (n_max + 2.0).powf(1.5)).ln() + 2.0 * a.ln() + 2.0 * ln_psi,
                rate: r * r,
            }]
        }
    }
}

/// Sums the series for every block element at one (p, t).
pub fn evaluate_node(ctx: &NodeContext, weights: &[C64], mode: FormulaMode, numerics: &NumericsParams) -> NodeResult {
    let amps = NodeAmplitudes::new(ctx, weights, mode);
    let n_max = amps.n_max();
    let frames = amps.frame_list();
    let mut powers = LadderPowers::new(ctx, mode, &frames, n_max as i64 + 2);
    let bounds = tail_bounds(&amps, &powers, ctx);
    let ctrl = SeriesControl {
        two_gamma_t: 2.0 * ctx.gamma * ctx.t,
        tol: numerics.series_tol,
        k_max: numerics.k_max,
    };
    let sums = series_sum(
        &ctrl,
        &bounds,
        ScaledElements::zeros(n_max + 2),
        |k, w, acc| {
            if k > 0 {
                powers.advance();
            }
            let term = elements_from_ladders(&amps, &powers.ladders(ctx, mode));
            acc.add_scaled(w, &term);
        },
        |acc| acc.ln_max(),
    );
    NodeResult {
        elements: sums.partial.to_elements(),
        k_reached: sums.k_reached,
        tail_estimate: sums.tail_estimate,
        converged: sums.converged,
        hermiticity_residual: sums.partial.hermiticity_residual(),
    }
}

/// All momentum nodes at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub nodes: Vec<NodeResult>,
}

impl Snapshot {
    pub fn k_reached(&self) -> usize {
        self.nodes.iter().map(|n| n.k_reached).max().unwrap_or(0)
    }

    pub fn converged(&self) -> bool {
        self.nodes.iter().all(|n| n.converged)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.nodes.iter().map(|n| n.hermiticity_residual).fold(0.0, f64::max)
    }

    pub fn tail_estimate(&self) -> f64 {
        self.nodes.iter().map(|n| n.tail_estimate).fold(0.0, f64::max)
    }
}

/// Evaluates every node of `momenta` at time `t` (seconds), sequentially.
pub fn density_snapshot(
    t: f64,
    params: &PhysicalParams,
    momenta: &[f64],
    weights: &[C64],
    numerics: &NumericsParams,
) -> Snapshot {
    let nodes = momenta
        .iter()
        .map(|&p| evaluate_node(&NodeContext::new(p, t, params), weights, numerics.mode, numerics))
        .collect();
    Snapshot { t, nodes }
}

/// Tr ρ² at one node, from the rank-one decomposition ρ = Σ_k c_k |Hᵏφ⟩⟨Hᵏφ|
/// in the unshifted frame. `None` if that series does not settle within
/// `k_max` terms (the decomposition is only practical for small γt).
pub fn node_purity(ctx: &NodeContext, weights: &[C64], numerics: &NumericsParams) -> Option<f64> {
    let mode = FormulaMode::BlockExact;
    let amps = psi_amplitudes(ctx, weights, mode, Frame::Absolute);
    let n_max = weights.len() - 1;
    let len = n_max + 2;
    let mut powers = LadderPowers::new(ctx, mode, &[Frame::Absolute], n_max as i64 + 2);
    let x = 2.0 * ctx.gamma * ctx.t;
    let mut vecs: Vec<(Scaled, Vec<Scaled>)> = Vec::new();
    let mut norm = Scaled::ZERO;
    for k in 0..=numerics.k_max {
        if k > 0 {
            powers.advance();
        }
        let (top, bot) = apply_power(&amps, &powers.ladders(ctx, mode)[0], len);
        let w = if k == 0 {
            Scaled::ONE
        } else {
            Scaled::from_ln(k as f64 * x.ln() - ln_factorial(k), C64::new(1.0, 0.0))
        };
        let v: Vec<Scaled> = top.into_iter().chain(bot).collect();
        let contrib = w * v.iter().fold(Scaled::ZERO, |a, s| a + s.norm_sqr());
        norm += contrib;
        vecs.push((w, v));
        if x == 0.0 {
            break;
        }
        if contrib.ln_abs() - norm.ln_abs() < numerics.series_tol.ln() && k > 0 {
            break;
        }
        if k == numerics.k_max {
            return None;
        }
    }
    let mut tr = Scaled::ZERO;
    for (wa, va) in &vecs {
        for (wb, vb) in &vecs {
            let ov = va.iter().zip(vb).fold(Scaled::ZERO, |a, (x, y)| a + x.conj() * *y);
            tr += *wa * *wb * ov.norm_sqr();
        }
    }
    Some(tr.re())
}
