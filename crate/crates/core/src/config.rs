//! Run parameters, the initial state and the momentum quadrature.
//!
//! Configs are JSON documents with three sections, `physical`, `numerics`
//! and `oracle`. Every numerics and oracle key has a default; the physical
//! section must name the model constants explicitly. The resolved config
//! serializes back into the same schema, so an echoed config can be
//! reloaded unchanged.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in SI units (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Largest Gauss-Hermite rule the recurrence is trusted for.
pub const MAX_P_NODES: usize = 513;

/// Allowed mismatch between an explicit `omega_rec` and ħq²/2M.
const OMEGA_REC_SLACK: f64 = 0.1;

const TAIL_LIMIT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaMode {
    /// Coefficient functions exactly as printed.
    PaperFaithful,
    /// Exact 2x2 block exponentials.
    BlockExact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// Momentum moments weighted by m11 - m22.
    PaperFaithful,
    /// Momentum moments weighted by the atomic partial trace m11 + m22.
    TraceConsistent,
}

/// How the configured `gamma` is to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaUnits {
    /// Dimensionless rate of the master equation written in scaled time λt
    /// with energies in units of λ; the rate in seconds is gamma/λ.
    Scaled,
    /// Rate used directly with H in rad/s and t in seconds.
    Seconds,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhysicalParams {
    pub q: f64,
    pub mass: f64,
    pub g_accel: f64,
    pub qg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gravity_angle: Option<f64>,
    pub lambda: f64,
    pub omega_c: f64,
    pub delta: f64,
    pub gamma: f64,
    pub gamma_units: GammaUnits,
    #[serde(serialize_with = "ser_complex")]
    pub alpha: C64,
    pub sigma0: f64,
    /// Listed with the reference constants but used by no formula.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    pub omega_rec: f64,
}

impl PhysicalParams {
    /// Phase-damping rate in the units of the time-domain master equation
    /// (H in rad/s, t in s).
    pub fn gamma_seconds(&self) -> f64 {
        match self.gamma_units {
            GammaUnits::Scaled => self.gamma / self.lambda,
            GammaUnits::Seconds => self.gamma,
        }
    }

    pub fn omega_eg(&self) -> f64 {
        self.omega_c + self.delta
    }

    /// ħq²/2M in rad/s.
    pub fn derived_omega_rec(&self) -> f64 {
        HBAR * self.q * self.q / (2.0 * self.mass)
    }

    /// Momentum (recoil units) at which the coupling phase is frozen for qg = 0.
    pub fn frozen_phase_momentum(&self) -> f64 {
        (self.omega_rec - self.delta) / (2.0 * self.omega_rec)
    }

    /// Momentum (recoil units) at which the Doppler detuning vanishes at t = 0.
    pub fn resonant_momentum(&self) -> f64 {
        -(self.delta + self.omega_rec) / (2.0 * self.omega_rec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NumericsParams {
    pub n_max: usize,
    pub k_max: usize,
    pub series_tol: f64,
    pub p_nodes: usize,
    /// Replaces the quadrature by one node at this momentum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single_momentum: Option<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub t_steps: usize,
    pub mode: FormulaMode,
    pub trace_mode: TraceMode,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleParams {
    pub rtol: f64,
    pub atol: f64,
    pub guard_band: usize,
    pub cost_budget: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams { rtol: 1e-10, atol: 1e-12, guard_band: 5, cost_budget: 1e10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub physical: PhysicalParams,
    pub numerics: NumericsParams,
    pub oracle: OracleParams,
}

fn ser_complex<S: serde::Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ComplexRaw {
    Real(f64),
    Pair([f64; 2]),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PhysicalRaw {
    q: Option<f64>,
    mass: Option<f64>,
    g_accel: Option<f64>,
    qg: Option<f64>,
    gravity_angle: Option<f64>,
    lambda: Option<f64>,
    omega_c: Option<f64>,
    delta: Option<f64>,
    gamma: Option<f64>,
    gamma_units: Option<GammaUnits>,
    alpha: Option<ComplexRaw>,
    sigma0: Option<f64>,
    delta0: Option<f64>,
    omega_rec: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct NumericsRaw {
    n_max: Option<usize>,
    k_max: Option<usize>,
    series_tol: Option<f64>,
    p_nodes: Option<usize>,
    single_momentum: Option<f64>,
    t_start: Option<f64>,
    t_end: Option<f64>,
    t_steps: Option<usize>,
    mode: Option<FormulaMode>,
    trace_mode: Option<TraceMode>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OracleRaw {
    rtol: Option<f64>,
    atol: Option<f64>,
    guard_band: Option<usize>,
    cost_budget: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigRaw {
    physical: PhysicalRaw,
    #[serde(default)]
    numerics: NumericsRaw,
    #[serde(default)]
    oracle: OracleRaw,
}

/// Parses, fills defaults and validates.
pub fn load_config(source: &str) -> Result<RunConfig> {
    let cfg = parse_config(source)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses and fills defaults without validating, so that callers can apply
/// overrides first.
pub fn parse_config(source: &str) -> Result<RunConfig> {
    let raw: ConfigRaw = serde_json::from_str(source).map_err(|e| Error::Parse(e.to_string()))?;
    resolve(raw)
}

fn resolve(raw: ConfigRaw) -> Result<RunConfig> {
    let p = raw.physical;
    let mut missing = Vec::new();
    let mut need = |name: &str, v: Option<f64>| {
        if v.is_none() {
            missing.push(format!("missing required physical parameter `{name}`"));
        }
        v.unwrap_or(f64::NAN)
    };
    let q = need("q", p.q);
    let mass = need("mass", p.mass);
    let lambda = need("lambda", p.lambda);
    let delta = need("delta", p.delta);
    let gamma = need("gamma", p.gamma);
    let sigma0 = need("sigma0", p.sigma0);
    let alpha = match p.alpha {
        Some(ComplexRaw::Real(x)) => C64::new(x, 0.0),
        Some(ComplexRaw::Pair([re, im])) => C64::new(re, im),
        None => {
            missing.push("missing required physical parameter `alpha`".into());
            C64::new(f64::NAN, 0.0)
        }
    };
    if !missing.is_empty() {
        return Err(Error::Invalid(missing));
    }

    let g_accel = p.g_accel.unwrap_or(9.8);
    let mut angle_conflict = false;
    let qg = match (p.qg, p.gravity_angle) {
        (Some(v), None) => v,
        (None, Some(a)) => q * g_accel * a.cos(),
        (None, None) => 0.0,
        (Some(v), Some(_)) => {
            angle_conflict = true;
            v
        }
    };
    let mut physical = PhysicalParams {
        q,
        mass,
        g_accel,
        qg,
        gravity_angle: p.gravity_angle,
        lambda,
        omega_c: p.omega_c.unwrap_or(1.0e8),
        delta,
        gamma,
        gamma_units: p.gamma_units.unwrap_or(GammaUnits::Scaled),
        alpha,
        sigma0,
        delta0: p.delta0,
        omega_rec: f64::NAN,
    };
    physical.omega_rec = p.omega_rec.unwrap_or_else(|| physical.derived_omega_rec());

    let n = raw.numerics;
    let n_max = n.n_max.unwrap_or_else(|| minimal_n_max(alpha));
    let numerics = NumericsParams {
        n_max,
        k_max: n.k_max.unwrap_or(200),
        series_tol: n.series_tol.unwrap_or(1e-12),
        p_nodes: n.p_nodes.unwrap_or(21),
        single_momentum: n.single_momentum,
        t_start: n.t_start.unwrap_or(0.0),
        t_end: n.t_end.unwrap_or(25.0),
        t_steps: n.t_steps.unwrap_or(200),
        mode: n.mode.unwrap_or(FormulaMode::BlockExact),
        trace_mode: n.trace_mode.unwrap_or(TraceMode::TraceConsistent),
    };

    let o = raw.oracle;
    let d = OracleParams::default();
    let oracle = OracleParams {
        rtol: o.rtol.unwrap_or(d.rtol),
        atol: o.atol.unwrap_or(d.atol),
        guard_band: o.guard_band.unwrap_or(d.guard_band),
        cost_budget: o.cost_budget.unwrap_or(d.cost_budget),
    };

    let cfg = RunConfig { physical, numerics, oracle };
    if angle_conflict {
        return Err(Error::Invalid(vec!["set either `qg` or `gravity_angle`, not both".into()]));
    }
    Ok(cfg)
}

impl RunConfig {
    /// Checks every invariant and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let p = &self.physical;
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        let fin = |x: f64| x.is_finite();
        check(fin(p.mass) && p.mass > 0.0, "M > 0");
        check(fin(p.q) && p.q > 0.0, "q > 0");
        check(fin(p.lambda) && p.lambda > 0.0, "lambda > 0");
        check(fin(p.gamma) && p.gamma >= 0.0, "gamma >= 0");
        check(fin(p.sigma0) && p.sigma0 > 0.0, "sigma0 > 0");
        check(fin(p.omega_c) && p.omega_c > 0.0, "omega_c > 0");
        check(fin(p.delta), "delta finite");
        check(fin(p.g_accel) && p.g_accel >= 0.0, "g_accel >= 0");
        check(fin(p.qg) && p.qg >= 0.0, "qg >= 0");
        check(p.alpha.re.is_finite() && p.alpha.im.is_finite(), "alpha finite");
        if let Some(a) = p.gravity_angle {
            check(
                (0.0..=std::f64::consts::FRAC_PI_2).contains(&a),
                "gravity_angle in [0, pi/2] so that qg lies in [0, q*g_accel]",
            );
        }
        if fin(p.q) && fin(p.mass) && p.mass > 0.0 {
            let derived = p.derived_omega_rec();
            check(fin(p.omega_rec) && p.omega_rec > 0.0, "omega_rec > 0");
            check(
                (p.omega_rec - derived).abs() <= OMEGA_REC_SLACK * derived,
                &format!(
                    "omega_rec = {:e} must agree with hbar*q^2/(2M) = {:e} within {}%",
                    p.omega_rec,
                    derived,
                    OMEGA_REC_SLACK * 100.0
                ),
            );
        }

        let n = &self.numerics;
        check(n.k_max >= 1, "k_max >= 1");
        check(fin(n.series_tol) && n.series_tol > 0.0, "series_tol > 0");
        check(n.p_nodes >= 1 && n.p_nodes % 2 == 1, "p_nodes odd and >= 1");
        check(n.p_nodes <= MAX_P_NODES, "p_nodes <= 513");
        check(n.t_steps >= 1, "t_steps >= 1");
        check(fin(n.t_start) && n.t_start >= 0.0, "t_start >= 0");
        check(fin(n.t_end) && n.t_end >= n.t_start, "t_end >= t_start");
        if let Some(m) = n.single_momentum {
            check(m.is_finite(), "single_momentum finite");
        }
        if p.alpha.re.is_finite() && p.alpha.im.is_finite() {
            let tail = coherent_tail(p.alpha, n.n_max);
            check(
                tail < TAIL_LIMIT,
                &format!(
                    "n_max = {} leaves coherent tail weight {:.3e} (must be below 1e-12)",
                    n.n_max, tail
                ),
            );
        }

        let o = &self.oracle;
        check(fin(o.rtol) && o.rtol > 0.0, "oracle rtol > 0");
        check(fin(o.atol) && o.atol > 0.0, "oracle atol > 0");
        check(fin(o.cost_budget) && o.cost_budget > 0.0, "oracle cost_budget > 0");
        check(o.guard_band >= 1, "oracle guard_band >= 1");

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(errs))
        }
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::linspace(
            self.numerics.t_start,
            self.numerics.t_end,
            self.numerics.t_steps,
            self.physical.lambda,
        )
    }

    pub fn momentum_grid(&self) -> Result<MomentumGrid> {
        match self.numerics.single_momentum {
            Some(p) => Ok(MomentumGrid { nodes: vec![p], weights: vec![1.0] }),
            None => build_momentum_grid(self.physical.sigma0, self.numerics.p_nodes),
        }
    }

    pub fn initial_state(&self) -> Result<InitialState> {
        Ok(InitialState {
            field_weights: coherent_weights(self.physical.alpha, self.numerics.n_max),
            momentum: self.momentum_grid()?,
        })
    }
}

/// Time points on the scaled axis λt together with seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub lambda_t: Vec<f64>,
    pub seconds: Vec<f64>,
}

impl TimeGrid {
    pub fn linspace(start: f64, end: f64, steps: usize, lambda: f64) -> Self {
        let lambda_t: Vec<f64> = if steps == 1 {
            vec![start]
        } else {
            let h = (end - start) / (steps - 1) as f64;
            (0..steps)
                .map(|i| if i + 1 == steps { end } else { start + h * i as f64 })
                .collect()
        };
        let seconds = lambda_t.iter().map(|x| x / lambda).collect();
        TimeGrid { lambda_t, seconds }
    }

    pub fn len(&self) -> usize {
        self.lambda_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_t.is_empty()
    }
}

/// The initial product state: atom excited, field coherent, momentum
/// distributed over the quadrature grid.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialState {
    pub field_weights: Vec<C64>,
    pub momentum: MomentumGrid,
}

/// w_n = exp(-|α|²/2) αⁿ/√n! for n = 0..=n_max.
pub fn coherent_weights(alpha: C64, n_max: usize) -> Vec<C64> {
    let mut w = vec![C64::new(0.0, 0.0); n_max + 1];
    let r = alpha.norm();
    if r == 0.0 {
        w[0] = C64::new(1.0, 0.0);
        return w;
    }
    let (ln_r, theta) = (r.ln(), alpha.arg());
    let mut ln_mag = -0.5 * r * r;
    for (n, slot) in w.iter_mut().enumerate() {
        if n > 0 {
            ln_mag += ln_r - 0.5 * (n as f64).ln();
        }
        *slot = C64::from_polar(ln_mag.exp(), theta * n as f64);
    }
    w
}

/// Σ_{n>n_max} |w_n|², summed directly.
pub fn coherent_tail(alpha: C64, n_max: usize) -> f64 {
    let mean = alpha.norm_sqr();
    if mean == 0.0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    let mut ln_p = -mean;
    for n in 1..=n_max {
        ln_p += ln_mean - (n as f64).ln();
    }
    let mut sum = 0.0;
    let mut n = n_max;
    loop {
        n += 1;
        ln_p += ln_mean - (n as f64).ln();
        let p = ln_p.exp();
        sum += p;
        if (n as f64) > mean && p < 1e-30 * sum.max(1e-300) {
            break;
        }
        if n > n_max + 100_000 {
            break;
        }
    }
    sum
}

/// Smallest n_max whose coherent tail is below 1e-12.
pub fn minimal_n_max(alpha: C64) -> usize {
    if !(alpha.re.is_finite() && alpha.im.is_finite()) {
        return 0;
    }
    (0..).find(|&n| coherent_tail(alpha, n) < TAIL_LIMIT).unwrap()
}

/// Quadrature over the atomic momentum along the beam (recoil units).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentumGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MomentumGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss-Hermite rule for the weight exp(-2p²/σ₀²), weights summing to one,
/// nodes ascending and symmetric about zero.
pub fn build_momentum_grid(sigma0: f64, p_nodes: usize) -> Result<MomentumGrid> {
    if p_nodes > MAX_P_NODES {
        return Err(Error::TooManyNodes(p_nodes));
    }
    if p_nodes == 0 || p_nodes % 2 == 0 {
        return Err(Error::Invalid(vec!["p_nodes odd and >= 1".into()]));
    }
    let (x, w) = gauss_hermite(p_nodes);
    let total: f64 = w.iter().sum();
    let scale = sigma0 / std::f64::consts::SQRT_2;
    Ok(MomentumGrid {
        nodes: x.iter().map(|x| x * scale).collect(),
        weights: w.iter().map(|w| w / total).collect(),
    })
}

/// Physicists' Gauss-Hermite nodes (ascending) and weights for e^{-x²},
/// by Newton iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        if n % 2 == 1 && i == m - 1 {
            z = 0.0;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    x.reverse();
    w.reverse();
    (x, w)
}
