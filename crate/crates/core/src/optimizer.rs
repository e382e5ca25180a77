//! Maximization of the key rate per sent pulse over the free protocol
//! parameters `{q_x, p_mu1, p_mu2, mu1, mu2}` with `mu3` held fixed.
//!
//! Search strategies implement [`KeyRateOptimizer`] and are looked up by name
//! in an [`OptimizerRegistry`].

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyrate::{key_length, ChannelInput, KeyRateBreakdown, KeyRateError, ProtocolParams, SecurityParams};

/// Minimum gap kept between ordered intensities.
pub const INTENSITY_MARGIN: f64 = 1e-4;
/// Smallest admissible probability of the vacuum decoy.
pub const MIN_P_MU3: f64 = 0.01;
pub const BRUTE_GRID_MAX_POINTS: usize = 12;
const FEAS_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum OptError {
    #[error("no feasible parameter point inside the bounds")]
    NoFeasiblePoint,
    #[error("{points} points per axis exceeds the limit of {max}")]
    CostGuard { points: usize, max: usize },
    #[error("unknown optimizer '{0}'")]
    UnknownStrategy(String),
    #[error("invalid optimizer settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    KeyRate(#[from] KeyRateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamBounds {
    pub q_x: (f64, f64),
    pub p_mu1: (f64, f64),
    pub p_mu2: (f64, f64),
    pub mu1: (f64, f64),
    /// The lower end is raised to `mu3 + 1e-4` if needed.
    pub mu2: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self { q_x: (0.01, 0.99), p_mu1: (0.01, 0.97), p_mu2: (0.01, 0.97), mu1: (0.02, 1.0), mu2: (0.0, 0.98) }
    }
}

impl ParamBounds {
    fn axes(&self, mu3: f64) -> [(f64, f64); 5] {
        let mu2_lo = self.mu2.0.max(mu3 + INTENSITY_MARGIN);
        [self.q_x, self.p_mu1, self.p_mu2, self.mu1, (mu2_lo, self.mu2.1)]
    }

    fn validate(&self, mu3: f64) -> Result<(), OptError> {
        let names = ["q_x", "p_mu1", "p_mu2", "mu1", "mu2"];
        for (name, (lo, hi)) in names.iter().zip(self.axes(mu3)) {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(OptError::InvalidSettings(format!("{name} interval [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptSettings {
    pub strategy: String,
    /// coarse lattice resolution
    pub grid_points_per_axis: usize,
    pub refine_max_iters: usize,
    /// stop once the best rate improves by less than this
    pub refine_tolerance: f64,
    /// non-improving iterations tolerated before a simplex run stops
    pub plateau_iters: usize,
    /// extra simplex runs from randomly jittered starts
    pub restarts: usize,
    pub bounds: ParamBounds,
    pub seed: u64,
}

impl Default for OptSettings {
    fn default() -> Self {
        Self {
            strategy: "lattice-simplex".into(),
            grid_points_per_axis: 7,
            refine_max_iters: 500,
            refine_tolerance: 1e-12,
            plateau_iters: 20,
            restarts: 2,
            bounds: ParamBounds::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptResult {
    pub best: ProtocolParams,
    pub breakdown: KeyRateBreakdown,
    pub evaluations: usize,
    pub converged: bool,
    /// No evaluated point produced a positive key.
    pub zero_key_everywhere: bool,
}

pub trait KeyRateOptimizer: Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn optimize(
        &self,
        channel: &ChannelInput,
        security: &SecurityParams,
        settings: &OptSettings,
    ) -> Result<OptResult, OptError>;
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Maps `p` into the box-with-ordering region by clamping each coordinate
/// in turn.
pub fn project(p: ProtocolParams, bounds: &ParamBounds, mu3: f64) -> ProtocolParams {
    let [q, p1, p2, m1, m2] = bounds.axes(mu3);
    let q_x = clip(p.q_x, q.0, q.1);
    let p_mu1 = clip(p.p_mu1, p1.0, p1.1.min(1.0 - MIN_P_MU3 - p2.0));
    let p_mu2 = clip(p.p_mu2, p2.0, p2.1.min(1.0 - MIN_P_MU3 - p_mu1));
    let mu1 = clip(p.mu1, m1.0.max(m2.0 + mu3 + INTENSITY_MARGIN), m1.1);
    let mu2 = clip(p.mu2, m2.0, m2.1.min(mu1 - mu3 - INTENSITY_MARGIN));
    ProtocolParams { q_x, p_mu1, p_mu2, mu1, mu2 }
}

pub fn is_feasible(p: &ProtocolParams, bounds: &ParamBounds, mu3: f64) -> bool {
    let inside = |x: f64, (lo, hi): (f64, f64)| x >= lo - FEAS_EPS && x <= hi + FEAS_EPS;
    let [q, p1, p2, m1, m2] = bounds.axes(mu3);
    inside(p.q_x, q)
        && inside(p.p_mu1, p1)
        && inside(p.p_mu2, p2)
        && inside(p.mu1, m1)
        && inside(p.mu2, m2)
        && p.p_mu1 + p.p_mu2 <= 1.0 - MIN_P_MU3 + FEAS_EPS
        && p.mu1 >= p.mu2 + mu3 + INTENSITY_MARGIN - FEAS_EPS
}

struct Objective<'a> {
    channel: &'a ChannelInput,
    security: &'a SecurityParams,
    evaluations: usize,
    any_key: bool,
}

struct Scored {
    value: f64,
    params: ProtocolParams,
    breakdown: KeyRateBreakdown,
}

impl<'a> Objective<'a> {
    fn new(channel: &'a ChannelInput, security: &'a SecurityParams) -> Self {
        Self { channel, security, evaluations: 0, any_key: false }
    }

    /// Pre-floor key length per sent pulse. Points without certifiable
    /// single-photon events score at most zero.
    fn eval(&mut self, p: ProtocolParams) -> Result<Scored, OptError> {
        self.evaluations += 1;
        let breakdown = key_length(self.channel, &p, self.security)?;
        self.any_key |= breakdown.ell > 0.0;
        let raw = breakdown.ell_pre_floor / self.channel.n_sent;
        let value = if breakdown.phi_x.is_some() { raw } else { raw.min(0.0) };
        Ok(Scored { value, params: p, breakdown })
    }
}

fn axis_values((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Feasible lattice points in index order (q_x slowest, mu2 fastest).
pub fn lattice_points(bounds: &ParamBounds, mu3: f64, n: usize) -> Vec<ProtocolParams> {
    let [q, p1, p2, m1, m2] = bounds.axes(mu3).map(|a| axis_values(a, n));
    let mut out = Vec::new();
    for &q_x in &q {
        for &p_mu1 in &p1 {
            for &p_mu2 in &p2 {
                for &mu1 in &m1 {
                    for &mu2 in &m2 {
                        let p = ProtocolParams { q_x, p_mu1, p_mu2, mu1, mu2 };
                        if is_feasible(&p, bounds, mu3) {
                            out.push(p);
                        }
                    }
                }
            }
        }
    }
    out
}

fn scan(obj: &mut Objective, points: &[ProtocolParams]) -> Result<Scored, OptError> {
    let mut best: Option<Scored> = None;
    for &p in points {
        let s = obj.eval(p)?;
        // strict comparison keeps the earliest lattice index on ties
        if best.as_ref().is_none_or(|b| s.value > b.value) {
            best = Some(s);
        }
    }
    best.ok_or(OptError::NoFeasiblePoint)
}

fn finish(obj: Objective, best: Scored, converged: bool) -> OptResult {
    OptResult {
        best: best.params,
        breakdown: best.breakdown,
        evaluations: obj.evaluations,
        converged,
        zero_key_everywhere: !obj.any_key,
    }
}

/// Exhaustive scan of a feasibility-filtered lattice.
#[derive(Debug, Default)]
pub struct BruteGrid;

impl KeyRateOptimizer for BruteGrid {
    fn name(&self) -> &'static str {
        "brute-grid"
    }

    fn optimize(&self, channel: &ChannelInput, security: &SecurityParams, settings: &OptSettings) -> Result<OptResult, OptError> {
        let n = settings.grid_points_per_axis;
        if n > BRUTE_GRID_MAX_POINTS {
            return Err(OptError::CostGuard { points: n, max: BRUTE_GRID_MAX_POINTS });
        }
        if n == 0 {
            return Err(OptError::InvalidSettings("grid_points_per_axis must be >= 1".into()));
        }
        settings.bounds.validate(security.mu3)?;
        let points = lattice_points(&settings.bounds, security.mu3, n);
        let mut obj = Objective::new(channel, security);
        let best = scan(&mut obj, &points)?;
        Ok(finish(obj, best, true))
    }
}

pub fn brute_grid(channel: &ChannelInput, security: &SecurityParams, points_per_axis: usize) -> Result<OptResult, OptError> {
    let settings = OptSettings { grid_points_per_axis: points_per_axis, ..OptSettings::default() };
    BruteGrid.optimize(channel, security, &settings)
}

/// Coarse lattice scan followed by Nelder-Mead refinement in normalized
/// coordinates, with every proposal projected onto the feasible region.
#[derive(Debug, Default)]
pub struct LatticeSimplex;

const DIM: usize = 5;
type Vertex = [f64; DIM];

struct Space {
    axes: [(f64, f64); DIM],
    bounds: ParamBounds,
    mu3: f64,
}

impl Space {
    fn to_params(&self, y: &Vertex) -> ProtocolParams {
        let v: Vec<f64> = self
            .axes
            .iter()
            .zip(y)
            .map(|(&(lo, hi), &t)| lo + (hi - lo) * t.clamp(0.0, 1.0))
            .collect();
        let raw = ProtocolParams { q_x: v[0], p_mu1: v[1], p_mu2: v[2], mu1: v[3], mu2: v[4] };
        project(raw, &self.bounds, self.mu3)
    }

    fn to_unit(&self, p: &ProtocolParams) -> Vertex {
        let v = [p.q_x, p.p_mu1, p.p_mu2, p.mu1, p.mu2];
        let mut y = [0.0; DIM];
        for i in 0..DIM {
            let (lo, hi) = self.axes[i];
            y[i] = if hi > lo { (v[i] - lo) / (hi - lo) } else { 0.5 };
        }
        y
    }
}

struct SimplexRun {
    best: Scored,
    converged: bool,
}

fn combine(a: &Vertex, b: &Vertex, t: f64) -> Vertex {
    // a + t (b - a)
    let mut out = [0.0; DIM];
    for i in 0..DIM {
        out[i] = (a[i] + t * (b[i] - a[i])).clamp(0.0, 1.0);
    }
    out
}

fn nelder_mead(
    obj: &mut Objective,
    space: &Space,
    start: Vertex,
    step: f64,
    settings: &OptSettings,
) -> Result<SimplexRun, OptError> {
    let eval = |y: Vertex, obj: &mut Objective| -> Result<(Vertex, Scored), OptError> {
        let s = obj.eval(space.to_params(&y))?;
        Ok((y, s))
    };
    let mut simplex = vec![eval(start, obj)?];
    for i in 0..DIM {
        let mut y = start;
        y[i] = if y[i] + step <= 1.0 { y[i] + step } else { y[i] - step };
        simplex.push(eval(y, obj)?);
    }

    let mut best_value = simplex.iter().map(|(_, s)| s.value).fold(f64::NEG_INFINITY, f64::max);
    let mut stale = 0;
    let mut converged = false;
    for _ in 0..settings.refine_max_iters {
        simplex.sort_by(|a, b| b.1.value.total_cmp(&a.1.value));
        let worst = simplex[DIM].0;
        let mut centroid = [0.0; DIM];
        for (y, _) in &simplex[..DIM] {
            for i in 0..DIM {
                centroid[i] += y[i] / DIM as f64;
            }
        }

        let reflected = eval(combine(&centroid, &worst, -1.0), obj)?;
        if reflected.1.value > simplex[0].1.value {
            let expanded = eval(combine(&centroid, &worst, -2.0), obj)?;
            simplex[DIM] = if expanded.1.value > reflected.1.value { expanded } else { reflected };
        } else if reflected.1.value > simplex[DIM - 1].1.value {
            simplex[DIM] = reflected;
        } else {
            let toward = if reflected.1.value > simplex[DIM].1.value { reflected.0 } else { worst };
            let contracted = eval(combine(&centroid, &toward, 0.5), obj)?;
            if contracted.1.value > simplex[DIM].1.value {
                simplex[DIM] = contracted;
            } else {
                let anchor = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    *v = eval(combine(&anchor, &v.0, 0.5), obj)?;
                }
            }
        }

        let current = simplex.iter().map(|(_, s)| s.value).fold(f64::NEG_INFINITY, f64::max);
        if current - best_value < settings.refine_tolerance {
            stale += 1;
        } else {
            stale = 0;
        }
        best_value = best_value.max(current);
        if stale >= settings.plateau_iters {
            converged = true;
            break;
        }
    }
    simplex.sort_by(|a, b| b.1.value.total_cmp(&a.1.value));
    let best = simplex.swap_remove(0).1;
    Ok(SimplexRun { best, converged })
}

impl KeyRateOptimizer for LatticeSimplex {
    fn name(&self) -> &'static str {
        "lattice-simplex"
    }

    fn optimize(&self, channel: &ChannelInput, security: &SecurityParams, settings: &OptSettings) -> Result<OptResult, OptError> {
        let n = settings.grid_points_per_axis;
        if n == 0 {
            return Err(OptError::InvalidSettings("grid_points_per_axis must be >= 1".into()));
        }
        settings.bounds.validate(security.mu3)?;
        let mu3 = security.mu3;
        let space = Space { axes: settings.bounds.axes(mu3), bounds: settings.bounds, mu3 };
        let mut obj = Objective::new(channel, security);
        let mut best = scan(&mut obj, &lattice_points(&settings.bounds, mu3, n))?;

        let spacing = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.25 };
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let mut converged = true;
        for run in 0..=settings.restarts {
            let mut start = space.to_unit(&best.params);
            if run > 0 {
                for y in start.iter_mut() {
                    *y = (*y + spacing * rng.random_range(-0.5..0.5)).clamp(0.0, 1.0);
                }
            }
            let r = nelder_mead(&mut obj, &space, start, 0.5 * spacing, settings)?;
            converged &= r.converged;
            if r.best.value > best.value {
                best = r.best;
            }
        }
        Ok(finish(obj, best, converged))
    }
}

type OptimizerCtor = fn() -> Arc<dyn KeyRateOptimizer>;

#[derive(Clone)]
pub struct OptimizerRegistry {
    entries: BTreeMap<String, OptimizerCtor>,
}

impl Debug for OptimizerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl OptimizerRegistry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("lattice-simplex", || Arc::new(LatticeSimplex));
        r.register("brute-grid", || Arc::new(BruteGrid));
        r
    }

    pub fn register(&mut self, name: &str, ctor: OptimizerCtor) {
        self.entries.insert(name.to_string(), ctor);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str) -> Result<Arc<dyn KeyRateOptimizer>, OptError> {
        self.entries
            .get(name)
            .map(|ctor| ctor())
            .ok_or_else(|| OptError::UnknownStrategy(name.to_string()))
    }
}

/// Runs the strategy named in `settings` from the builtin registry.
pub fn optimize(channel: &ChannelInput, security: &SecurityParams, settings: &OptSettings) -> Result<OptResult, OptError> {
    OptimizerRegistry::builtin().build(&settings.strategy)?.optimize(channel, security, settings)
}
