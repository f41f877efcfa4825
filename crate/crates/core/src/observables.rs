//! Observables assembled from momentum-weighted block elements.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::config::{MomentumGrid, PhysicalParams, TraceMode};
use crate::evolve::BlockElements;

/// Negative photon probabilities are floored here.
pub const PN_FLOOR: f64 = -1e-10;
/// Below this mean photon number Q is reported as undefined.
pub const Q_MEAN_MIN: f64 = 1e-12;
/// Variances below -VAR_TOL are a numerical pathology; above it they are clamped.
pub const VAR_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldMoments {
    pub a_mean: C64,
    pub a2_mean: C64,
    pub n_mean: f64,
}

fn weighted<T, F>(nodes: &[BlockElements], weights: &[f64], zero: T, f: F) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Copy,
    F: Fn(&BlockElements) -> T,
{
    nodes.iter().zip(weights).fold(zero, |acc, (e, &w)| acc + f(e) * w)
}

pub fn population_inversion(nodes: &[BlockElements], weights: &[f64]) -> f64 {
    weighted(nodes, weights, 0.0, |e| e.m11.iter().zip(&e.m22).map(|(a, b)| a - b).sum())
}

pub fn trace(nodes: &[BlockElements], weights: &[f64]) -> f64 {
    weighted(nodes, weights, 0.0, |e| e.m11.iter().zip(&e.m22).map(|(a, b)| a + b).sum())
}

/// ⟨K⟩ = ⟨a†a + |e⟩⟨e|⟩.
pub fn excitation_number(nodes: &[BlockElements], weights: &[f64]) -> f64 {
    weighted(nodes, weights, 0.0, |e| {
        e.m11
            .iter()
            .zip(&e.m22)
            .enumerate()
            .map(|(n, (a, b))| (n as f64 + 1.0) * a + n as f64 * b)
            .sum()
    })
}

/// P(n) = Σ_j w_j (m11(n) + m22(n)), floored at -1e-10, not renormalized.
pub fn photon_distribution(nodes: &[BlockElements], weights: &[f64]) -> Vec<f64> {
    let len = nodes.first().map_or(0, |e| e.m11.len());
    (0..len)
        .map(|n| weighted(nodes, weights, 0.0, |e| e.m11[n] + e.m22[n]).max(PN_FLOOR))
        .collect()
}

/// Mandel Q = Var(n)/⟨n⟩ - 1; `None` when ⟨n⟩ ≤ 1e-12.
pub fn mandel_q(pn: &[f64]) -> Option<f64> {
    let (m1, m2) = pn.iter().enumerate().fold((0.0, 0.0), |(a, b), (n, p)| {
        let nf = n as f64;
        (a + nf * p, b + nf * nf * p)
    });
    if m1 <= Q_MEAN_MIN || m1.is_nan() {
        None
    } else {
        Some((m2 - m1 * m1) / m1 - 1.0)
    }
}

pub fn sigma_minus(nodes: &[BlockElements], weights: &[f64]) -> C64 {
    weighted(nodes, weights, C64::new(0.0, 0.0), |e| e.m12.iter().sum())
}

/// (F₁, F₂) from ⟨σ₋⟩ and W, with σ₁ + iσ₂ = ⟨σ₊⟩ e^{-iω_eg t}.
pub fn dipole_components(sig_minus: C64, w: f64, t: f64, omega_eg: f64) -> (f64, f64) {
    let z = sig_minus.conj() * C64::from_polar(1.0, -omega_eg * t);
    (1.0 - 4.0 * z.re * z.re - w.abs(), 1.0 - 4.0 * z.im * z.im - w.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentumSpread {
    /// Standard deviation; NaN when the variance is pathologically negative.
    pub value: f64,
    pub variance: f64,
    pub pathological: bool,
}

/// Δp from the first two momentum moments.
pub fn momentum_diffusion(nodes: &[BlockElements], grid: &MomentumGrid, mode: TraceMode) -> MomentumSpread {
    let (mut m1, mut m2) = (0.0, 0.0);
    for ((e, &w), &p) in nodes.iter().zip(&grid.weights).zip(&grid.nodes) {
        let s: f64 = match mode {
            TraceMode::PaperFaithful => e.m11.iter().zip(&e.m22).map(|(a, b)| a - b).sum(),
            TraceMode::TraceConsistent => e.m11.iter().zip(&e.m22).map(|(a, b)| a + b).sum(),
        };
        m1 += w * p * s;
        m2 += w * p * p * s;
    }
    let var = m2 - m1 * m1;
    if var < -VAR_TOL || var.is_nan() {
        MomentumSpread { value: f64::NAN, variance: var, pathological: true }
    } else {
        MomentumSpread { value: var.max(0.0).sqrt(), variance: var, pathological: false }
    }
}

pub fn field_moments(nodes: &[BlockElements], weights: &[f64]) -> FieldMoments {
    let zero = C64::new(0.0, 0.0);
    let a_mean = weighted(nodes, weights, zero, |e| e.m11_a.iter().zip(&e.m22_a).map(|(a, b)| a + b).sum());
    let a2_mean =
        weighted(nodes, weights, zero, |e| e.m11_a2.iter().zip(&e.m22_a2).map(|(a, b)| a + b).sum());
    let n_mean = weighted(nodes, weights, 0.0, |e| {
        e.m11.iter().zip(&e.m22).enumerate().map(|(n, (a, b))| n as f64 * (a + b)).sum()
    });
    FieldMoments { a_mean, a2_mean, n_mean }
}

/// (S₁, S₂) in the frame rotating at `omega`.
pub fn quadrature_squeezing(m: &FieldMoments, t: f64, omega: f64) -> (f64, f64) {
    let c = (m.a2_mean - m.a_mean * m.a_mean) * C64::from_polar(1.0, 2.0 * omega * t);
    let n = 2.0 * (m.n_mean - m.a_mean.norm_sqr());
    (2.0 * c.re + n, -2.0 * c.re + n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Analytic,
    Oracle,
}

/// Per-time diagnostics carried alongside the observables.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeDiagnostics {
    pub trace: f64,
    pub excitation: f64,
    pub k_max_used: usize,
    pub converged: bool,
    pub tail_estimate: f64,
    pub hermiticity_residual: f64,
    pub delta_p_paper: f64,
    pub delta_p_consistent: f64,
    pub momentum_pathology: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub origin: Origin,
    pub lambda_t: Vec<f64>,
    pub seconds: Vec<f64>,
    pub w: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub q: Vec<Option<f64>>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub sigma_minus: Vec<C64>,
    pub moments: Vec<FieldMoments>,
    pub pn: Vec<Vec<f64>>,
    pub diagnostics: Vec<TimeDiagnostics>,
}

/// What the evaluator reports about one time point besides the elements.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EvalDiagnostics {
    pub k_max_used: usize,
    pub converged: bool,
    pub tail_estimate: f64,
    pub hermiticity_residual: f64,
}

impl ObservableSeries {
    pub fn new(origin: Origin) -> Self {
        ObservableSeries {
            origin,
            lambda_t: vec![],
            seconds: vec![],
            w: vec![],
            f1: vec![],
            f2: vec![],
            delta_p: vec![],
            q: vec![],
            s1: vec![],
            s2: vec![],
            sigma_minus: vec![],
            moments: vec![],
            pn: vec![],
            diagnostics: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.lambda_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_t.is_empty()
    }

    /// Appends one time point computed from per-node elements (ordered as
    /// the grid nodes).
    pub fn push(
        &mut self,
        lambda_t: f64,
        t: f64,
        nodes: &[BlockElements],
        grid: &MomentumGrid,
        params: &PhysicalParams,
        trace_mode: TraceMode,
        eval: EvalDiagnostics,
    ) {
        let wts = &grid.weights;
        let w = population_inversion(nodes, wts);
        let sm = sigma_minus(nodes, wts);
        let (f1, f2) = dipole_components(sm, w, t, params.omega_eg());
        let pn = photon_distribution(nodes, wts);
        let q = mandel_q(&pn);
        let m = field_moments(nodes, wts);
        let (s1, s2) = quadrature_squeezing(&m, t, params.omega_c);
        let dp_paper = momentum_diffusion(nodes, grid, TraceMode::PaperFaithful);
        let dp_cons = momentum_diffusion(nodes, grid, TraceMode::TraceConsistent);
        let chosen = match trace_mode {
            TraceMode::PaperFaithful => dp_paper,
            TraceMode::TraceConsistent => dp_cons,
        };
        self.lambda_t.push(lambda_t);
        self.seconds.push(t);
        self.w.push(w);
        self.f1.push(f1);
        self.f2.push(f2);
        self.delta_p.push(chosen.value);
        self.q.push(q);
        self.s1.push(s1);
        self.s2.push(s2);
        self.sigma_minus.push(sm);
        self.moments.push(m);
        self.pn.push(pn);
        self.diagnostics.push(TimeDiagnostics {
            trace: trace(nodes, wts),
            excitation: excitation_number(nodes, wts),
            k_max_used: eval.k_max_used,
            converged: eval.converged,
            tail_estimate: eval.tail_estimate,
            hermiticity_residual: eval.hermiticity_residual,
            delta_p_paper: dp_paper.value,
            delta_p_consistent: dp_cons.value,
            momentum_pathology: chosen.pathological,
        });
    }

    /// Column by name, for comparisons and plots. Q's undefined points are NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        Some(match name {
            "W" => self.w.clone(),
            "F1" => self.f1.clone(),
            "F2" => self.f2.clone(),
            "delta_p" => self.delta_p.clone(),
            "Q" => self.q.iter().map(|q| q.unwrap_or(f64::NAN)).collect(),
            "S1" => self.s1.clone(),
            "S2" => self.s2.clone(),
            "trace" => self.diagnostics.iter().map(|d| d.trace).collect(),
            _ => return None,
        })
    }
}

/// Observable names in CSV column order.
pub const OBSERVABLES: [&str; 7] = ["W", "F1", "F2", "delta_p", "Q", "S1", "S2"];
