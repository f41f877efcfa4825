//! Brute-force reference: integrate the damped master equation for the full
//! truncated density matrix of every momentum node.
//!
//! The state is propagated in the frame rotating with H1 = ω_c(K - ½). H1 is
//! a multiple of the conserved K plus a constant, so it commutes with H(t)
//! and the transformation is exact:
//!
//! ```text
//! ρ̃ = e^{iH1 t} ρ e^{-iH1 t},   dρ̃/dt = -i[H2, ρ̃] - γ[H, [H, ρ̃]].
//! ```
//!
//! The double commutator keeps the full H. Removing the ω_c-sized phase
//! rotation is what lets an explicit integrator take steps set by the
//! damping rate instead of by 1/ω_c.

mod dopri;

pub use dopri::{integrate, StepStats, Tolerances};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockalg::{doppler_detuning, effective_coupling};
use crate::config::{PhysicalParams, RunConfig};
use crate::error::{Error, Result};
use crate::evolve::BlockElements;
use crate::observables::{EvalDiagnostics, ObservableSeries, Origin, OBSERVABLES};
use crate::run::pool;

const NONE: usize = usize::MAX;
const ZERO: C64 = C64::new(0.0, 0.0);

/// Basis bookkeeping for the truncated space (e,0..N, g,0..N).
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedOperatorSet {
    /// Highest photon number N.
    pub n_photons: usize,
    pub dim: usize,
    /// Eigenvalue of K = a†a + |e⟩⟨e| per basis state.
    pub excitation: Vec<f64>,
    pub photons: Vec<usize>,
}

impl TruncatedOperatorSet {
    pub fn new(n_photons: usize) -> Self {
        let dim = 2 * (n_photons + 1);
        let photons: Vec<usize> = (0..dim).map(|i| i % (n_photons + 1)).collect();
        let excitation = (0..dim).map(|i| (photons[i] + usize::from(i <= n_photons)) as f64).collect();
        TruncatedOperatorSet { n_photons, dim, excitation, photons }
    }

    pub fn excited(&self, n: usize) -> usize {
        n
    }

    pub fn ground(&self, n: usize) -> usize {
        self.n_photons + 1 + n
    }

    /// Sparse H(t) at momentum `p`.
    pub fn hamiltonian(&self, p: f64, t: f64, params: &PhysicalParams) -> SparseHamiltonian {
        build_hamiltonian(p, t, params, self.n_photons)
    }

    fn diagonal(&self, f: impl Fn(usize) -> f64) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| if i == j { C64::new(f(i), 0.0) } else { ZERO })
    }

    pub fn number_operator(&self) -> DMatrix<C64> {
        self.diagonal(|i| self.photons[i] as f64)
    }

    pub fn k_operator(&self) -> DMatrix<C64> {
        self.diagonal(|i| self.excitation[i])
    }

    /// a ⊗ 1_atom.
    pub fn annihilation(&self) -> DMatrix<C64> {
        let n1 = self.n_photons + 1;
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            let same_atom = (i < n1) == (j < n1);
            let (ni, nj) = (self.photons[i], self.photons[j]);
            if same_atom && nj == ni + 1 {
                C64::new((nj as f64).sqrt(), 0.0)
            } else {
                ZERO
            }
        })
    }

    /// σ₋ = |g⟩⟨e| ⊗ 1_field.
    pub fn sigma_minus(&self) -> DMatrix<C64> {
        let n1 = self.n_photons + 1;
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i >= n1 && j < n1 && self.photons[i] == self.photons[j] {
                C64::new(1.0, 0.0)
            } else {
                ZERO
            }
        })
    }
}

/// H = diag + one off-diagonal partner per row: H_ij = diag_i δ_ij +
/// coupling_i δ_{j, partner_i}.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseHamiltonian {
    pub diag: Vec<f64>,
    pub partner: Vec<usize>,
    pub coupling: Vec<C64>,
}

impl SparseHamiltonian {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut m = DMatrix::from_element(d, d, ZERO);
        for i in 0..d {
            m[(i, i)] = C64::new(self.diag[i], 0.0);
            if self.partner[i] != NONE {
                m[(i, self.partner[i])] = self.coupling[i];
            }
        }
        m
    }

    /// out = [H, x] for column-major x, with `shift_i` added to diag_i.
    fn commutator_into(&self, shift: Option<&[f64]>, x: &[C64], out: &mut [C64]) {
        let d = self.dim();
        let diag = |i: usize| self.diag[i] + shift.map_or(0.0, |s| s[i]);
        for j in 0..d {
            let dj = diag(j);
            let pj = self.partner[j];
            let cj = if pj == NONE { ZERO } else { self.coupling[j].conj() };
            let col = j * d;
            for i in 0..d {
                let mut v = x[col + i] * (diag(i) - dj);
                let pi = self.partner[i];
                if pi != NONE {
                    v += self.coupling[i] * x[col + pi];
                }
                if pj != NONE {
                    v -= cj * x[pj * d + i];
                }
                out[col + i] = v;
            }
        }
    }
}

/// H(t) at momentum `p` on photon numbers 0..=n_photons. Block b couples
/// (e,b) and (g,b+1) through κ√(b+1); diagonal entries are ω_c(n+½) + Δ̂/4
/// on |e,n⟩ and ω_c(n-½) - Δ̂/4 on |g,n⟩.
pub fn build_hamiltonian(p: f64, t: f64, params: &PhysicalParams, n_photons: usize) -> SparseHamiltonian {
    let n1 = n_photons + 1;
    let dim = 2 * n1;
    let d4 = 0.25 * doppler_detuning(p, t, params);
    let kappa = effective_coupling(p, t, params);
    let wc = params.omega_c;
    let mut diag = vec![0.0; dim];
    let mut partner = vec![NONE; dim];
    let mut coupling = vec![ZERO; dim];
    for n in 0..n1 {
        diag[n] = wc * (n as f64 + 0.5) + d4;
        diag[n1 + n] = wc * (n as f64 - 0.5) - d4;
    }
    for n in 0..n_photons {
        let r = ((n + 1) as f64).sqrt();
        let (e, g) = (n, n1 + n + 1);
        partner[e] = g;
        coupling[e] = kappa.conj() * r;
        partner[g] = e;
        coupling[g] = kappa * r;
    }
    SparseHamiltonian { diag, partner, coupling }
}

/// -i[H,ρ] - γ[H,[H,ρ]] with γ in seconds.
pub fn lindblad_rhs(rho: &DMatrix<C64>, h: &SparseHamiltonian, gamma: f64) -> Result<DMatrix<C64>> {
    let d = h.dim();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: rho.nrows().max(rho.ncols()) });
    }
    let mut c = vec![ZERO; d * d];
    let mut cc = vec![ZERO; d * d];
    h.commutator_into(None, rho.as_slice(), &mut c);
    h.commutator_into(None, &c, &mut cc);
    let out: Vec<C64> = c.iter().zip(&cc).map(|(a, b)| C64::new(a.im, -a.re) - b * gamma).collect();
    Ok(DMatrix::from_vec(d, d, out))
}

/// Which frame the state is propagated in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleFrame {
    /// Rotating with ω_c(K - ½); the default.
    Rotating,
    /// The equation as written. Only practical for very short windows.
    Lab,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOptions {
    pub tol: Tolerances,
    pub frame: OracleFrame,
    /// Keep full lab-frame density matrices at every output time.
    pub keep_states: bool,
    /// Block elements are extracted for photon numbers 0..=n_common+1.
    pub n_common: usize,
}

/// Checks on one emitted state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StateCheck {
    pub trace: f64,
    pub purity: f64,
    pub excitation: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeTrajectory {
    pub p: f64,
    /// Seconds.
    pub times: Vec<f64>,
    pub elements: Vec<BlockElements>,
    pub checks: Vec<StateCheck>,
    pub states: Vec<DMatrix<C64>>,
    pub stats: StepStats,
    /// Largest per-step increase of Tr ρ² (should stay ≤ 1e-8).
    pub max_purity_increase: f64,
}

fn symmetrize(x: &mut [C64], d: usize) {
    for j in 0..d {
        x[j * d + j].im = 0.0;
        for i in 0..j {
            let m = (x[j * d + i] + x[i * d + j].conj()) * 0.5;
            x[j * d + i] = m;
            x[i * d + j] = m.conj();
        }
    }
}

fn purity(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Rough rate bounds: (stiff decay rate, fastest oscillation) on the
/// blocks that can be populated.
fn rate_scales(params: &PhysicalParams, n_populated: usize, p_abs_max: f64, t_end: f64) -> (f64, f64) {
    let dk = (n_populated + 1) as f64;
    let stiff = params.gamma_seconds() * (params.omega_c * dk).powi(2);
    let det = params.delta.abs() + params.omega_rec * (2.0 * p_abs_max + 3.0) + params.qg * t_end;
    let rabi = (0.0625 * det * det + params.lambda * params.lambda * dk).sqrt();
    (stiff, 2.0 * rabi + det)
}

/// Integrates one node from the pure state Σ w_n |e,n⟩.
pub fn integrate_master(
    rho0: &DMatrix<C64>,
    p: f64,
    t_grid: &[f64],
    params: &PhysicalParams,
    n_photons: usize,
    opts: &OracleOptions,
) -> Result<NodeTrajectory> {
    let ops = TruncatedOperatorSet::new(n_photons);
    let d = ops.dim;
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: rho0.nrows().max(rho0.ncols()) });
    }
    if opts.n_common + 1 > n_photons {
        return Err(Error::DimensionMismatch { expected: opts.n_common + 2, got: n_photons + 1 });
    }
    let gamma = params.gamma_seconds();
    let wc = params.omega_c;
    // H1 shift per basis state: the rotating RHS uses diag - ω_c(K - ½)
    let h1: Vec<f64> = ops.excitation.iter().map(|k| wc * (k - 0.5)).collect();
    let neg_h1: Vec<f64> = h1.iter().map(|x| -x).collect();
    let frame = opts.frame;
    let mut c2 = vec![ZERO; d * d];
    let mut cc = vec![ZERO; d * d];
    let rhs = |t: f64, x: &[C64], out: &mut [C64]| {
        let h = build_hamiltonian(p, t, params, n_photons);
        match frame {
            OracleFrame::Rotating => {
                h.commutator_into(Some(&neg_h1), x, &mut c2);
                // [H, x] = [H2, x] + (h1_i - h1_j) x_ij
                for j in 0..d {
                    for i in 0..d {
                        let k = j * d + i;
                        cc[k] = c2[k] + x[k] * (h1[i] - h1[j]);
                    }
                }
                h.commutator_into(None, &cc, out);
                for k in 0..d * d {
                    out[k] = C64::new(c2[k].im, -c2[k].re) - out[k] * gamma;
                }
            }
            OracleFrame::Lab => {
                h.commutator_into(None, x, &mut c2);
                h.commutator_into(None, &c2, out);
                for k in 0..d * d {
                    out[k] = C64::new(c2[k].im, -c2[k].re) - out[k] * gamma;
                }
            }
        }
    };

    let t0 = t_grid.first().copied().unwrap_or(0.0).min(0.0);
    let t_end = t_grid.last().copied().unwrap_or(0.0);
    let (stiff, osc) = rate_scales(params, opts.n_common, p.abs(), t_end);
    let osc = match frame {
        OracleFrame::Rotating => osc,
        OracleFrame::Lab => osc + wc * (n_photons + 1) as f64,
    };
    let h0 = 0.1 / stiff.max(osc).max(1.0 / (t_end - t0).max(1e-300));

    let mut y: Vec<C64> = rho0.as_slice().to_vec();
    let mut last_purity = purity(&y);
    let mut max_inc: f64 = 0.0;
    let mut emitted: Vec<(f64, Vec<C64>)> = Vec::with_capacity(t_grid.len());
    let stats = integrate(
        rhs,
        &mut y,
        t0,
        t_grid,
        h0,
        opts.tol,
        |_, t, y| emitted.push((t, y.to_vec())),
        |y| {
            symmetrize(y, d);
            let pu = purity(y);
            max_inc = max_inc.max(pu - last_purity);
            last_purity = pu;
        },
    )?;

    let mut traj = NodeTrajectory {
        p,
        times: Vec::with_capacity(emitted.len()),
        elements: Vec::with_capacity(emitted.len()),
        checks: Vec::with_capacity(emitted.len()),
        states: vec![],
        stats,
        max_purity_increase: max_inc,
    };
    for (t, x) in emitted {
        let phase = |i: usize, j: usize| match frame {
            OracleFrame::Rotating => C64::from_polar(1.0, -(h1[i] - h1[j]) * t),
            OracleFrame::Lab => C64::new(1.0, 0.0),
        };
        let lab = DMatrix::from_fn(d, d, |i, j| x[j * d + i] * phase(i, j));
        traj.elements.push(extract_elements(&lab, &ops, opts.n_common));
        let trace: f64 = (0..d).map(|i| lab[(i, i)].re).sum();
        let excitation: f64 = (0..d).map(|i| lab[(i, i)].re * ops.excitation[i]).sum();
        let min_eigenvalue = lab.clone().symmetric_eigenvalues().min();
        traj.checks.push(StateCheck { trace, purity: purity(&x), excitation, min_eigenvalue });
        traj.times.push(t);
        if opts.keep_states {
            traj.states.push(lab);
        }
    }
    Ok(traj)
}

/// The elements the observables need, read off a lab-frame matrix for
/// photon numbers 0..=n_common+1.
pub fn extract_elements(rho: &DMatrix<C64>, ops: &TruncatedOperatorSet, n_common: usize) -> BlockElements {
    let len = n_common + 2;
    let (e, g) = (|n| ops.excited(n), |n| ops.ground(n));
    let mut out = BlockElements {
        m11: vec![0.0; len],
        m22: vec![0.0; len],
        m12: vec![ZERO; len],
        m11_a: vec![ZERO; len],
        m22_a: vec![ZERO; len],
        m11_a2: vec![ZERO; len],
        m22_a2: vec![ZERO; len],
    };
    for n in 0..len {
        out.m11[n] = rho[(e(n), e(n))].re;
        out.m22[n] = rho[(g(n), g(n))].re;
        out.m12[n] = rho[(e(n), g(n))];
        if n >= 1 {
            let r = (n as f64).sqrt();
            out.m11_a[n] = rho[(e(n), e(n - 1))] * r;
            out.m22_a[n] = rho[(g(n), g(n - 1))] * r;
        }
        if n >= 2 {
            let r = ((n * (n - 1)) as f64).sqrt();
            out.m11_a2[n] = rho[(e(n), e(n - 2))] * r;
            out.m22_a2[n] = rho[(g(n), g(n - 2))] * r;
        }
    }
    out
}

/// |ψ⟩⟨ψ| for ψ = Σ w_n |e,n⟩ on the truncated space.
pub fn initial_density(weights: &[C64], n_photons: usize) -> DMatrix<C64> {
    let ops = TruncatedOperatorSet::new(n_photons);
    let mut psi = vec![ZERO; ops.dim];
    for (n, w) in weights.iter().enumerate().take(n_photons + 1) {
        psi[ops.excited(n)] = *w;
    }
    DMatrix::from_fn(ops.dim, ops.dim, |i, j| psi[i] * psi[j].conj())
}

/// Work estimate: nodes × dim² × steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostEstimate {
    pub nodes: usize,
    pub dim: usize,
    pub steps: f64,
    pub total: f64,
}

pub fn estimate_cost(cfg: &RunConfig) -> Result<CostEstimate> {
    let grid = cfg.momentum_grid()?;
    let n_photons = cfg.numerics.n_max + cfg.oracle.guard_band;
    let dim = 2 * (n_photons + 1);
    let times = cfg.time_grid();
    let t_end = times.seconds.last().copied().unwrap_or(0.0);
    let p_abs = grid.nodes.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
    let (stiff, osc) = rate_scales(&cfg.physical, cfg.numerics.n_max, p_abs, t_end);
    // DOPRI5 is stable to |hλ| ≈ 3.3; at rtol 1e-10 accuracy needs hω ≈ 0.05
    let steps = t_end * (stiff / 3.3).max(osc / 0.05) + times.len() as f64;
    let total = grid.len() as f64 * (dim * dim) as f64 * steps;
    Ok(CostEstimate { nodes: grid.len(), dim, steps, total })
}

/// Refuses configurations whose estimated cost exceeds the budget.
pub fn check_budget(cfg: &RunConfig) -> Result<CostEstimate> {
    let est = estimate_cost(cfg)?;
    if est.total > cfg.oracle.cost_budget {
        return Err(Error::Budget { estimate: est.total, budget: cfg.oracle.cost_budget });
    }
    Ok(est)
}

/// Per-node integration summary for run records.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeSummary {
    pub p: f64,
    pub stats: StepStats,
    /// Largest |Tr ρ(t) - Tr ρ(0)|.
    pub max_trace_drift: f64,
    pub max_excitation_drift: f64,
    pub max_purity_increase: f64,
    pub min_eigenvalue: f64,
}

impl NodeSummary {
    fn from_trajectory(t: &NodeTrajectory) -> Self {
        let (k0, tr0) = t.checks.first().map_or((0.0, 0.0), |c| (c.excitation, c.trace));
        NodeSummary {
            p: t.p,
            stats: t.stats,
            max_trace_drift: t.checks.iter().map(|c| (c.trace - tr0).abs()).fold(0.0, f64::max),
            max_excitation_drift: t.checks.iter().map(|c| (c.excitation - k0).abs()).fold(0.0, f64::max),
            max_purity_increase: t.max_purity_increase,
            min_eigenvalue: t.checks.iter().map(|c| c.min_eigenvalue).fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleRun {
    pub series: ObservableSeries,
    pub cost: CostEstimate,
    pub nodes: Vec<NodeSummary>,
}

/// Runs the oracle over the configured grid. Nodes integrate in parallel;
/// reduction follows node order.
pub fn simulate_oracle(cfg: &RunConfig, threads: Option<usize>) -> Result<OracleRun> {
    let cost = check_budget(cfg)?;
    let init = cfg.initial_state()?;
    let grid = &init.momentum;
    let times = cfg.time_grid();
    let n_photons = cfg.numerics.n_max + cfg.oracle.guard_band;
    let rho0 = initial_density(&init.field_weights, n_photons);
    let opts = OracleOptions {
        tol: Tolerances { rtol: cfg.oracle.rtol, atol: cfg.oracle.atol },
        frame: OracleFrame::Rotating,
        keep_states: false,
        n_common: cfg.numerics.n_max,
    };
    let params = &cfg.physical;
    let trajectories: Vec<Result<NodeTrajectory>> = pool(threads).install(|| {
        grid.nodes
            .par_iter()
            .map(|&p| integrate_master(&rho0, p, &times.seconds, params, n_photons, &opts))
            .collect()
    });
    let trajectories = trajectories.into_iter().collect::<Result<Vec<_>>>()?;

    let mut series = ObservableSeries::new(Origin::Oracle);
    for i in 0..times.len() {
        let elements: Vec<BlockElements> = trajectories.iter().map(|tr| tr.elements[i].clone()).collect();
        series.push(
            times.lambda_t[i],
            times.seconds[i],
            &elements,
            grid,
            params,
            cfg.numerics.trace_mode,
            EvalDiagnostics { converged: true, ..Default::default() },
        );
    }
    let nodes = trajectories.iter().map(NodeSummary::from_trajectory).collect();
    Ok(OracleRun { series, cost, nodes })
}

/// Whether H is constant in time over the run: no gravity and every node
/// sits where Δ̂ + 2ω_rec = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    TimeIndependent,
    TimeDependent,
}

pub fn regime(cfg: &RunConfig) -> Regime {
    let p = &cfg.physical;
    let frozen = p.frozen_phase_momentum();
    let at_frozen = cfg.momentum_grid().map_or(false, |g| {
        g.nodes.iter().all(|&x| (x - frozen).abs() <= 1e-12 * frozen.abs().max(1.0))
    });
    if p.qg == 0.0 && at_frozen {
        Regime::TimeIndependent
    } else {
        Regime::TimeDependent
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discrepancy {
    pub observable: String,
    pub max_abs: f64,
    pub rms: f64,
    /// Points where exactly one side is non-finite.
    pub n_nonfinite: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    pub regime: Option<Regime>,
    pub rows: Vec<Discrepancy>,
}

impl DiscrepancyReport {
    pub fn row(&self, name: &str) -> Option<&Discrepancy> {
        self.rows.iter().find(|r| r.observable == name)
    }

    /// Largest max-abs difference over the named observables.
    pub fn max_over(&self, names: &[&str]) -> f64 {
        self.rows
            .iter()
            .filter(|r| names.contains(&r.observable.as_str()))
            .map(|r| if r.n_nonfinite > 0 { f64::INFINITY } else { r.max_abs })
            .fold(0.0, f64::max)
    }
}

/// Per-observable differences between two series on the same grid. Points
/// where both sides are undefined (NaN) count as agreeing.
pub fn compare_observables(
    a: &ObservableSeries,
    b: &ObservableSeries,
    regime: Option<Regime>,
) -> Result<DiscrepancyReport> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} vs {} time points", a.len(), b.len())));
    }
    if let Some(i) = (0..a.len()).find(|&i| (a.lambda_t[i] - b.lambda_t[i]).abs() > 1e-12 * a.lambda_t[i].abs().max(1.0)) {
        return Err(Error::GridMismatch(format!(
            "lambda_t differs at index {i}: {} vs {}",
            a.lambda_t[i], b.lambda_t[i]
        )));
    }
    let names = OBSERVABLES.iter().copied().chain(["trace"]);
    let rows = names
        .map(|name| {
            let (x, y) = (a.column(name).unwrap_or_default(), b.column(name).unwrap_or_default());
            compare_columns(name, &x, &y)
        })
        .collect();
    Ok(DiscrepancyReport { regime, rows })
}

pub fn compare_columns(name: &str, x: &[f64], y: &[f64]) -> Discrepancy {
    let (mut max_abs, mut sq, mut n, mut bad) = (0.0_f64, 0.0, 0usize, 0usize);
    for (u, v) in x.iter().zip(y) {
        match (u.is_finite(), v.is_finite()) {
            (true, true) => {
                let d = (u - v).abs();
                max_abs = max_abs.max(d);
                sq += d * d;
                n += 1;
            }
            (false, false) => {}
            _ => bad += 1,
        }
    }
    Discrepancy {
        observable: name.to_string(),
        max_abs,
        rms: if n > 0 { (sq / n as f64).sqrt() } else { 0.0 },
        n_nonfinite: bad,
    }
}
