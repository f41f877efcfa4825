//! Scalar coefficient families of the block-diagonal solution.
//!
//! The Hamiltonian conserves the excitation number K = a†a + |e⟩⟨e|, so it
//! splits into 2x2 blocks spanned by (e,n) and (g,n+1), plus the 1x1 dark
//! state (g,0). Block `b` therefore means the pair (e,b)/(g,b+1); block -1
//! is the dark state. On block b
//!
//! ```text
//! H = h1 + [[δ, κ*√(b+1)], [κ√(b+1), -δ]],   δ = Δ̂/4,
//! ```
//!
//! with h1 = ω_c(b+½), and its eigenvalues are h1 ± Ω_b, Ω_b = √(δ²+λ²(b+1)).
//!
//! Two formula modes exist. `PaperFaithful` evaluates the closed forms as
//! printed, trigonometric arguments and all. `BlockExact` evaluates the same
//! objects as exact 2x2 exponentials and powers. In exact mode the energy
//! origin may be moved with a [`Frame`]: the solution is invariant under
//! H -> H - c, and a good choice of c keeps the series short.

use num_complex::Complex64 as C64;

use crate::config::{FormulaMode, PhysicalParams};
use crate::error::{Error, Result};
use crate::scaled::{cosh_scaled, sin_over, sinh_over, Scaled};

const I: C64 = C64::new(0.0, 1.0);

/// Δ̂(p, t) = ω_c - (ω_eg + 2ω_rec p + qg t + ω_rec), ω_eg = ω_c + Δ.
pub fn doppler_detuning(p: f64, t: f64, params: &PhysicalParams) -> f64 {
    -params.delta - 2.0 * params.omega_rec * p - params.qg * t - params.omega_rec
}

/// κ(p, t) = λ exp(i t/2 (Δ̂ + 2ω_rec)).
pub fn effective_coupling(p: f64, t: f64, params: &PhysicalParams) -> C64 {
    let phase = 0.5 * t * (doppler_detuning(p, t, params) + 2.0 * params.omega_rec);
    C64::from_polar(params.lambda, phase)
}

/// Everything the coefficient functions need at one (p, t).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeContext {
    pub p: f64,
    pub t: f64,
    /// Δ̂(p, t).
    pub detuning: f64,
    pub kappa: C64,
    pub lambda: f64,
    pub omega_c: f64,
    /// Damping rate for t in seconds.
    pub gamma: f64,
}

impl NodeContext {
    pub fn new(p: f64, t: f64, params: &PhysicalParams) -> Self {
        NodeContext {
            p,
            t,
            detuning: doppler_detuning(p, t, params),
            kappa: effective_coupling(p, t, params),
            lambda: params.lambda,
            omega_c: params.omega_c,
            gamma: params.gamma_seconds(),
        }
    }

    /// δ = Δ̂/4.
    pub fn delta4(&self) -> f64 {
        0.25 * self.detuning
    }

    /// Ω_b = √(δ² + λ²(b+1)); for b = -1 this is |δ|.
    pub fn rabi(&self, block: i64) -> f64 {
        let d = self.delta4();
        (d * d + self.lambda * self.lambda * (block + 1) as f64).sqrt()
    }
}

/// Energy origin used when evaluating a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    /// h1 = ω_c(b+½), the Hamiltonian as written.
    Absolute,
    /// h1 = d·ω_c for every block: energies measured from the H1 value of
    /// the block d steps below.
    Offset(i32),
}

impl Frame {
    pub fn h1(self, block: i64, omega_c: f64) -> f64 {
        match self {
            Frame::Absolute => omega_c * (block as f64 + 0.5),
            Frame::Offset(d) => omega_c * d as f64,
        }
    }
}

/// Coefficients of the operator layout [[x1(n), x2(n) a], [x3(n) a†, x4(n)]]
/// for exp(-iH₂t) (d), exp(-γtA₂) (e) and their product (f).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientSet {
    pub c1: f64,
    pub c2: f64,
    pub d1: C64,
    pub d2: C64,
    pub d3: C64,
    pub d4: C64,
    pub e1: Scaled,
    pub e2: Scaled,
    pub e3: Scaled,
    pub e4: Scaled,
    pub f1: Scaled,
    pub f2: Scaled,
    pub f3: Scaled,
    pub f4: Scaled,
}

/// c₁ and c₂ as printed (Δ̂/2 prefactor included).
pub fn printed_c(n: f64, ctx: &NodeContext) -> (f64, f64) {
    let dh2 = (0.5 * ctx.detuning).powi(2);
    let (wc2, l2) = (ctx.omega_c * ctx.omega_c, ctx.lambda * ctx.lambda);
    let c1 = wc2 * dh2 * (n + 0.5).powi(2) + l2 * dh2 * (n + 1.0) * (n + 0.5).powi(2);
    let c2 = wc2 * dh2 * (n - 0.5).powi(2) + l2 * dh2 * n * (n - 0.5).powi(2);
    (c1, c2)
}

fn sin_over_sqrt(t: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        (t * x).sin() / x.sqrt()
    }
}

pub fn coefficient_set(n: i64, ctx: &NodeContext, mode: FormulaMode, frame: Frame) -> Result<CoefficientSet> {
    if n < 0 {
        return Err(Error::NegativeIndex(n));
    }
    Ok(match mode {
        FormulaMode::PaperFaithful => printed_coefficients(n, ctx),
        FormulaMode::BlockExact => exact_coefficients(n, ctx, frame),
    })
}

fn printed_coefficients(n: i64, ctx: &NodeContext) -> CoefficientSet {
    let nf = n as f64;
    let t = ctx.t;
    let dl = ctx.delta4();
    let dh = 0.5 * ctx.detuning;
    let (l, wc) = (ctx.lambda, ctx.omega_c);
    let x1 = dl * dl + l * l * (nf + 1.0);
    let x0 = dl * dl + l * l * nf;

    let d1 = C64::new((t * x1).cos() - dl * sin_over_sqrt(t, x1), 0.0);
    let d2 = -I * l * sin_over_sqrt(t, x1);
    let d3 = -I * l * sin_over_sqrt(t, x0);
    let d4 = C64::new((t * x0).cos() - dl * sin_over_sqrt(t, x0), 0.0);

    let (c1, c2) = printed_c(nf, ctx);
    let (c1m, _) = printed_c(nf - 1.0, ctx);
    let gt = ctx.gamma * t;
    let (s1, s1m, s2) = (c1.sqrt(), c1m.sqrt(), c2.sqrt());
    let e1 = Scaled::from_real((gt * s1).cos()) - sinh_over(gt, s1).scale(wc * dh * (nf + 0.5));
    let e2 = sinh_over(gt, s1m).scale(-2.0 * wc * l * (nf - 0.5));
    let e3 = sinh_over(gt, s2).scale(-2.0 * wc * l * (nf - 0.5));
    let e4 = Scaled::from_real((gt * s2).cos()) - sinh_over(gt, s2).scale(wc * dh * (nf - 0.5));

    let f1 = e1.mul_c(d1) + e2.mul_c(d2);
    let f2 = e2.mul_c(d1) + e1.mul_c(d2);
    let f3 = e3.mul_c(d4) + e4.mul_c(d3);
    let f4 = e4.mul_c(d4) + e3.mul_c(d3);
    CoefficientSet { c1, c2, d1, d2, d3, d4, e1, e2, e3, e4, f1, f2, f3, f4 }
}

/// Entries of exp(-y·H₂) on block b, y = 2γt·h1: (E11, E12/√(b+1), E21/√(b+1), E22).
fn damping_block(ctx: &NodeContext, block: i64, frame: Frame) -> [Scaled; 4] {
    let om = ctx.rabi(block);
    let y = 2.0 * ctx.gamma * ctx.t * frame.h1(block, ctx.omega_c);
    let ch = cosh_scaled(y * om);
    let sh = sinh_over(y, om);
    let dl = ctx.delta4();
    [
        ch - sh.scale(dl),
        sh.mul_c(-ctx.kappa.conj()),
        sh.mul_c(-ctx.kappa),
        ch + sh.scale(dl),
    ]
}

fn exact_coefficients(n: i64, ctx: &NodeContext, frame: Frame) -> CoefficientSet {
    let t = ctx.t;
    let dl = ctx.delta4();
    let (om_n, om_m) = (ctx.rabi(n), ctx.rabi(n - 1));
    let (sn, sm) = (sin_over(t, om_n), sin_over(t, om_m));

    let d1 = (om_n * t).cos() - I * dl * sn;
    let d2 = -I * ctx.kappa.conj() * sn;
    let d3 = -I * ctx.kappa * sm;
    let d4 = (om_m * t).cos() + I * dl * sm;

    // block n supplies e1(n), e2(n), e3(n+1), e4(n+1); block n-1 the rest
    let [e1, e2, e3_up, e4_up] = damping_block(ctx, n, frame);
    let [e1_dn, e2_dn, e3, e4] = damping_block(ctx, n - 1, frame);

    let nf = n as f64;
    let f1 = e1.mul_c(d1) + e3_up.mul_c(d2).scale(nf + 1.0);
    let f2 = e2.mul_c(d1) + e4_up.mul_c(d2);
    let f3 = e1_dn.mul_c(d3) + e3.mul_c(d4);
    let f4 = e2_dn.mul_c(d3).scale(nf) + e4.mul_c(d4);
    let (c1, c2) = printed_c(nf, ctx);
    CoefficientSet { c1, c2, d1, d2, d3, d4, e1, e2, e3, e4, f1, f2, f3, f4 }
}

/// Entries of Hᵏ at photon argument n: r± belong to block n, s± to block n-1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LadderScalars {
    pub r_plus: f64,
    pub r_minus: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub u_plus_k: Scaled,
    pub u_minus_k: Scaled,
    pub v_plus_k: Scaled,
    pub v_minus_k: Scaled,
    pub g_plus_k: Scaled,
    pub g_minus_k: Scaled,
    pub v_prime_minus_k: Scaled,
    pub v_prime_plus_k: Scaled,
    /// hᵏ(n); real as printed, κ-phased in exact mode.
    pub h_k: Scaled,
}

/// The two eigenvalues h1 ± Ω of block b (printed or framed).
pub fn block_energies(block: i64, ctx: &NodeContext, mode: FormulaMode, frame: Frame) -> (f64, f64) {
    let (h1, om) = match mode {
        FormulaMode::PaperFaithful => (ctx.omega_c * (block as f64 + 0.5), ctx.rabi(block)),
        FormulaMode::BlockExact => (frame.h1(block, ctx.omega_c), ctx.rabi(block)),
    };
    (h1 + om, h1 - om)
}

/// Ladder scalars with the k-th powers computed in log-modulus form.
pub fn ladder_scalars(
    n: i64,
    k: usize,
    ctx: &NodeContext,
    mode: FormulaMode,
    frame: Frame,
) -> Result<LadderScalars> {
    if n < 0 {
        return Err(Error::NegativeIndex(n));
    }
    let (rp, rm) = block_energies(n, ctx, mode, frame);
    let (sp, sm) = block_energies(n - 1, ctx, mode, frame);
    let pw = |x: f64| Scaled::from_real(x).powi(k as u32);
    let out = compose_ladder(n, [rp, rm, sp, sm], [pw(rp), pw(rm), pw(sp), pw(sm)], ctx, mode);
    if [out.g_plus_k, out.g_minus_k, out.h_k].iter().any(|s| !s.is_finite()) {
        return Err(Error::Overflow { n: n as usize, k });
    }
    Ok(out)
}

/// Assembles the scalars from the base energies [r+, r-, s+, s-] and their
/// k-th powers.
pub fn compose_ladder(
    n: i64,
    base: [f64; 4],
    pow: [Scaled; 4],
    ctx: &NodeContext,
    mode: FormulaMode,
) -> LadderScalars {
    let [rp, rm, sp, sm] = pow;
    let u_plus_k = (rp + rm).scale(0.5);
    let u_minus_k = (rp - rm).scale(0.5);
    let v_plus_k = (sp + sm).scale(0.5);
    let v_minus_k = (sp - sm).scale(0.5);
    let dl = ctx.delta4();
    let l = ctx.lambda;
    let root_n = (n as f64).sqrt();
    let (om_n, om_m) = (ctx.rabi(n), ctx.rabi(n - 1));
    let inv = |x: f64| if x == 0.0 { 0.0 } else { 1.0 / x };

    let (g_plus_k, g_minus_k, v_prime_minus_k, v_prime_plus_k, h_k) = match mode {
        FormulaMode::PaperFaithful => {
            let vpm = v_minus_k.scale(l * inv(om_m));
            (
                u_plus_k + u_minus_k.scale(dl),
                v_plus_k - v_minus_k.scale(dl),
                vpm,
                v_plus_k.scale(l * inv(om_m)),
                vpm.scale(root_n),
            )
        }
        FormulaMode::BlockExact => {
            let vpm = v_minus_k.scale(l * inv(om_m));
            (
                u_plus_k + u_minus_k.scale(dl * inv(om_n)),
                v_plus_k - v_minus_k.scale(dl * inv(om_m)),
                vpm,
                v_plus_k.scale(l * inv(om_m)),
                v_minus_k.mul_c(ctx.kappa).scale(root_n * inv(om_m)),
            )
        }
    };
    LadderScalars {
        r_plus: base[0],
        r_minus: base[1],
        s_plus: base[2],
        s_minus: base[3],
        u_plus_k,
        u_minus_k,
        v_plus_k,
        v_minus_k,
        g_plus_k,
        g_minus_k,
        v_prime_minus_k,
        v_prime_plus_k,
        h_k,
    }
}
