//! Fractional Crank-Nicolson time stepping for the semidiscrete problem
//! `M d_t^alpha c + A c = G(t)`, posed in shifted form around the initial
//! data so the convolution quadrature sees a function vanishing at `t = 0`.
//!
//! With `w^n = c^n - c_v` and BE-CQ weights `b_j` the scheme solves, per
//! step,
//!
//! ```text
//! (tau^{-alpha} b_0 M + (1 - alpha/2) A) w^n =
//!     g_n G^n + g_prev G^{n-1} + g_zero G^0
//!     - tau^{-alpha} sum_{j=1}^{n-1} b_{n-j} M w^j
//!     - (alpha/2) A w^{n-1} - cv A c_v
//! ```
//!
//! where the coefficient quadruple `(g_n, g_prev, g_zero, cv)` depends on the
//! step index and the correction variant. Away from the first steps it is
//! always `(1 - alpha/2, alpha/2, 0, 1)`, the plain Crank-Nicolson average;
//! the corrected variants perturb the first one or two steps (three for the
//! strongest variant) to restore second-order accuracy for data that is
//! merely in the domain of the Laplacian.

use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use thiserror::Error;

use crate::cq::{be_cq_weights, CqError};
use crate::fem::{load_vector, FemSpace, GridFunction};

pub type TimeFn = dyn Fn(f64) -> f64 + Send + Sync;
pub type SpaceFn = dyn Fn([f64; 2]) -> f64 + Send + Sync;

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Cq(#[from] CqError),
    #[error("tau must be positive and finite, got {0}")]
    BadTau(f64),
    #[error("scalar stiffness lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("source sampler built for dimension {got}, space has {expected}")]
    SourceMismatch { got: usize, expected: usize },
    #[error("factorization of the shifted operator failed")]
    FactorizationFailed,
}

/// Which first steps get corrected weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Plain fractional Crank-Nicolson; second order only for compatible,
    /// smooth data.
    Uncorrected,
    /// First step corrected; second order for initial data in the domain of
    /// the Laplacian and sources smooth in time.
    Corrected2,
    /// First two steps corrected more aggressively, plus an echo at the
    /// third; targets sources with a stronger initial layer.
    Corrected3,
}

/// Time discretization parameters of one run.
#[derive(Debug, Clone, Copy)]
pub struct SchemeConfig {
    pub alpha: f64,
    pub tau: f64,
    pub n_steps: usize,
    pub variant: Variant,
}

impl SchemeConfig {
    fn validate(&self) -> Result<(), StepError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(StepError::BadTau(self.tau));
        }
        Ok(())
    }
}

/// Coefficient quadruple `(g_n, g_prev, g_zero, cv)` of step `n`.
fn step_coeffs(variant: Variant, n: usize, alpha: f64) -> (f64, f64, f64, f64) {
    let a = alpha;
    match (variant, n) {
        (Variant::Uncorrected, 1) => (1.0 - a / 2.0, 0.0, a / 2.0, 1.0),
        (Variant::Corrected2, 1) => (1.0 - a / 2.0, 0.0, (1.0 - a / 2.0) / 2.0, 1.5 - 0.75 * a),
        (Variant::Corrected3, 1) => (1.0 - a / 2.0, 0.0, 1.0 - a / 2.0, 2.0 - a),
        (Variant::Corrected2, 2) => (1.0 - a / 2.0, a / 2.0, a / 4.0, 1.0 + a / 4.0),
        (Variant::Corrected3, 2) => (1.0 - a / 2.0, a / 2.0, 0.75 * a - 0.5, 0.5 + 0.75 * a),
        (Variant::Corrected3, 3) => (1.0 - a / 2.0, a / 2.0, -a / 4.0, 1.0 - a / 4.0),
        _ => (1.0 - a / 2.0, a / 2.0, 0.0, 1.0),
    }
}

/// A separable source `f(t, x) = sum_k g_k(t) phi_k(x)` with the spatial
/// loads `(phi_k, basis)` assembled once against a fixed space.
pub struct SourceSampler {
    time_fns: Vec<Arc<TimeFn>>,
    loads: Vec<DVector<f64>>,
    dim: usize,
}

impl SourceSampler {
    pub fn new(space: &FemSpace, components: &[(Arc<TimeFn>, Arc<SpaceFn>)]) -> Self {
        let loads = components
            .iter()
            .map(|(_, phi)| load_vector(space, &|p| phi(p)))
            .collect();
        SourceSampler {
            time_fns: components.iter().map(|(g, _)| Arc::clone(g)).collect(),
            loads,
            dim: space.dim(),
        }
    }

    /// Writes `G(t) = sum_k g_k(t) L_k` into `out`.
    pub fn load_at(&self, t: f64, out: &mut DVector<f64>) {
        out.fill(0.0);
        for (g, load) in self.time_fns.iter().zip(&self.loads) {
            let c = g(t);
            if c != 0.0 {
                out.axpy(c, load, 1.0);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// History convolution `sum_{j=1}^{n-1} b_{n-j} mw[j]` of the stored
/// mass-weighted states `mw[j] = M w^j`. `mw[0]` is ignored; the caller
/// scales by `tau^{-alpha}`.
pub fn history_convolution(weights: &[f64], mw: &[DVector<f64>], n: usize) -> DVector<f64> {
    let dim = mw.first().map(|v| v.len()).unwrap_or(0);
    let mut out = DVector::zeros(dim);
    for j in 1..n {
        out.axpy(weights[n - j], &mw[j], 1.0);
    }
    out
}

/// Full time history of one run: coefficient vectors `c^0 .. c^N` and the
/// matching time grid.
pub struct Trajectory {
    pub space: Arc<FemSpace>,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn state(&self, n: usize) -> GridFunction {
        GridFunction::new(&self.space, self.states[n].clone()).expect("state matches space")
    }

    pub fn final_state(&self) -> GridFunction {
        self.state(self.states.len() - 1)
    }
}

fn shifted_operator(
    mass: &CscMatrix<f64>,
    stiffness: &CscMatrix<f64>,
    mass_coef: f64,
    stiff_coef: f64,
) -> CscMatrix<f64> {
    let n = mass.nrows();
    let mut coo = CooMatrix::new(n, n);
    for (i, j, v) in mass.triplet_iter() {
        coo.push(i, j, mass_coef * v);
    }
    for (i, j, v) in stiffness.triplet_iter() {
        coo.push(i, j, stiff_coef * v);
    }
    CscMatrix::from(&coo)
}

fn solve_csc(chol: &CscCholesky<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let sol = chol.solve(rhs);
    DVector::from_column_slice(sol.column(0).as_slice())
}

struct Driver<'a> {
    space: &'a FemSpace,
    cfg: SchemeConfig,
    weights: Vec<f64>,
    tau_neg_alpha: f64,
    s_chol: CscCholesky<f64>,
    a_cv: DVector<f64>,
    c_v: DVector<f64>,
    load_zero: DVector<f64>,
    load_prev: DVector<f64>,
    load_curr: DVector<f64>,
}

impl<'a> Driver<'a> {
    fn new(
        v: &'a GridFunction,
        source: Option<&SourceSampler>,
        cfg: &SchemeConfig,
    ) -> Result<Self, StepError> {
        cfg.validate()?;
        let space = v.space.as_ref();
        if let Some(s) = source {
            if s.dim() != space.dim() {
                return Err(StepError::SourceMismatch {
                    got: s.dim(),
                    expected: space.dim(),
                });
            }
        }
        let weights = be_cq_weights(cfg.alpha, cfg.n_steps)?.weights;
        let tau_neg_alpha = cfg.tau.powf(-cfg.alpha);
        let s_mat = shifted_operator(
            &space.mass,
            &space.stiffness,
            tau_neg_alpha * weights[0],
            1.0 - cfg.alpha / 2.0,
        );
        let s_chol = CscCholesky::factor(&s_mat).map_err(|_| StepError::FactorizationFailed)?;
        let dim = space.dim();
        let mut load_zero = DVector::zeros(dim);
        if let Some(s) = source {
            s.load_at(0.0, &mut load_zero);
        }
        Ok(Driver {
            space,
            cfg: *cfg,
            weights,
            tau_neg_alpha,
            s_chol,
            a_cv: &space.stiffness * &v.coeffs,
            c_v: v.coeffs.clone(),
            load_prev: load_zero.clone(),
            load_curr: DVector::zeros(dim),
            load_zero,
        })
    }

    /// One step: given the cached history, returns `w^n`.
    fn step(
        &mut self,
        n: usize,
        source: Option<&SourceSampler>,
        mw: &[DVector<f64>],
        w_prev: &DVector<f64>,
    ) -> DVector<f64> {
        let alpha = self.cfg.alpha;
        let (g_n, g_prev, g_zero, cv) = step_coeffs(self.cfg.variant, n, alpha);
        let mut rhs = history_convolution(&self.weights, mw, n);
        rhs *= -self.tau_neg_alpha;
        let aw_prev = &self.space.stiffness * w_prev;
        rhs.axpy(-alpha / 2.0, &aw_prev, 1.0);
        rhs.axpy(-cv, &self.a_cv, 1.0);
        if let Some(s) = source {
            s.load_at(n as f64 * self.cfg.tau, &mut self.load_curr);
            rhs.axpy(g_n, &self.load_curr, 1.0);
            if g_prev != 0.0 {
                rhs.axpy(g_prev, &self.load_prev, 1.0);
            }
            if g_zero != 0.0 {
                rhs.axpy(g_zero, &self.load_zero, 1.0);
            }
            std::mem::swap(&mut self.load_prev, &mut self.load_curr);
        }
        solve_csc(&self.s_chol, &rhs)
    }
}

/// Runs the scheme and returns the full trajectory `c^0 .. c^N`.
pub fn advance(
    v: &GridFunction,
    source: Option<&SourceSampler>,
    cfg: &SchemeConfig,
) -> Result<Trajectory, StepError> {
    let mut driver = Driver::new(v, source, cfg)?;
    let dim = v.space.dim();
    let mut mw: Vec<DVector<f64>> = vec![DVector::zeros(dim)];
    let mut states = vec![v.coeffs.clone()];
    let mut w_prev = DVector::zeros(dim);
    for n in 1..=cfg.n_steps {
        let w = driver.step(n, source, &mw, &w_prev);
        states.push(&w + &driver.c_v);
        if n < cfg.n_steps {
            mw.push(&v.space.mass * &w);
        }
        w_prev = w;
    }
    Ok(Trajectory {
        space: Arc::clone(&v.space),
        times: (0..=cfg.n_steps).map(|n| n as f64 * cfg.tau).collect(),
        states,
    })
}

/// Runs the scheme keeping only the convolution history, and returns the
/// final state `c^N`. Same arithmetic as [`advance`], roughly half the
/// memory, for long runs where intermediate states are not needed.
pub fn advance_final(
    v: &GridFunction,
    source: Option<&SourceSampler>,
    cfg: &SchemeConfig,
) -> Result<GridFunction, StepError> {
    let mut driver = Driver::new(v, source, cfg)?;
    let dim = v.space.dim();
    let mut mw: Vec<DVector<f64>> = vec![DVector::zeros(dim)];
    let mut w_prev = DVector::zeros(dim);
    for n in 1..=cfg.n_steps {
        let w = driver.step(n, source, &mw, &w_prev);
        if n < cfg.n_steps {
            mw.push(&v.space.mass * &w);
        }
        w_prev = w;
    }
    GridFunction::new(&v.space, &w_prev + &driver.c_v).map_err(|_| StepError::FactorizationFailed)
}

/// Scalar surrogate `d_t^alpha u + lambda u = 0`, `u(0) = u0`: the same
/// recurrence with mass 1 and stiffness `lambda >= 0`. Returns `u^0 .. u^N`.
/// The exact solution is `u0 E_alpha(-lambda t^alpha)`, which makes this the
/// cheapest end-to-end probe of the time discretization alone.
pub fn advance_scalar(
    alpha: f64,
    lambda: f64,
    u0: f64,
    tau: f64,
    n_steps: usize,
    variant: Variant,
) -> Result<Vec<f64>, StepError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(StepError::BadTau(tau));
    }
    if !(lambda >= 0.0) {
        return Err(StepError::NegativeLambda(lambda));
    }
    let weights = be_cq_weights(alpha, n_steps)?.weights;
    let tau_neg_alpha = tau.powf(-alpha);
    let s = tau_neg_alpha * weights[0] + (1.0 - alpha / 2.0) * lambda;
    let mut w = vec![0.0_f64];
    let mut u = vec![u0];
    for n in 1..=n_steps {
        let (_, _, _, cv) = step_coeffs(variant, n, alpha);
        let mut hist = 0.0;
        for j in 1..n {
            hist += weights[n - j] * w[j];
        }
        let rhs = -tau_neg_alpha * hist - (alpha / 2.0) * lambda * w[n - 1] - cv * lambda * u0;
        let wn = rhs / s;
        w.push(wn);
        u.push(wn + u0);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_interval_space, nodal_interpolant};
    use approx::assert_relative_eq;

    fn sine_data(m: usize) -> GridFunction {
        let space = build_interval_space(m).unwrap();
        nodal_interpolant(&space, &|p| (std::f64::consts::PI * p[0]).sin())
    }

    #[test]
    fn alpha_one_uncorrected_is_classical_crank_nicolson() {
        // At alpha = 1 the weights terminate after (1, -1) and the scheme
        // collapses to (M/tau + A/2) c^n = (M/tau - A/2) c^{n-1}
        // + (G^n + G^{n-1})/2. Check against that recurrence directly,
        // source included.
        let v = sine_data(16);
        let space = Arc::clone(&v.space);
        let g: Arc<TimeFn> = Arc::new(|t: f64| (-t).exp());
        let phi: Arc<SpaceFn> = Arc::new(|p: [f64; 2]| p[0] * (1.0 - p[0]));
        let sampler = SourceSampler::new(&space, &[(g, phi)]);
        let tau = 0.05;
        let n_steps = 8;
        let cfg = SchemeConfig {
            alpha: 1.0,
            tau,
            n_steps,
            variant: Variant::Uncorrected,
        };
        let traj = advance(&v, Some(&sampler), &cfg).unwrap();

        let lhs = shifted_operator(&space.mass, &space.stiffness, 1.0 / tau, 0.5);
        let chol = CscCholesky::factor(&lhs).unwrap();
        let dim = space.dim();
        let mut c = v.coeffs.clone();
        let mut g_prev = DVector::zeros(dim);
        sampler.load_at(0.0, &mut g_prev);
        let mut g_curr = DVector::zeros(dim);
        for n in 1..=n_steps {
            sampler.load_at(n as f64 * tau, &mut g_curr);
            let mut rhs = &space.mass * &c;
            rhs /= tau;
            let ac = &space.stiffness * &c;
            rhs.axpy(-0.5, &ac, 1.0);
            rhs.axpy(0.5, &g_curr, 1.0);
            rhs.axpy(0.5, &g_prev, 1.0);
            c = solve_csc(&chol, &rhs);
            std::mem::swap(&mut g_prev, &mut g_curr);
            let diff = (&traj.states[n] - &c).abs().max();
            assert!(diff < 1e-12, "step {n} deviates from CN by {diff}");
        }
    }

    #[test]
    fn scalar_alpha_one_matches_cn_closed_form() {
        let (lambda, tau, u0) = (3.0, 0.02, 1.3);
        let u = advance_scalar(1.0, lambda, u0, tau, 50, Variant::Uncorrected).unwrap();
        let q = (1.0 - lambda * tau / 2.0) / (1.0 + lambda * tau / 2.0);
        for (n, &un) in u.iter().enumerate() {
            assert_relative_eq!(un, u0 * q.powi(n as i32), max_relative = 1e-12);
        }
    }

    #[test]
    fn scalar_matches_single_node_matrix_system() {
        // The m = 2 interval space has mass [[1/3]] and stiffness [[4]], so
        // the one-node matrix run must reproduce the scalar recurrence with
        // lambda = 12.
        let space = build_interval_space(2).unwrap();
        let u0 = 0.7;
        let v = GridFunction::new(&space, DVector::from_element(1, u0)).unwrap();
        for variant in [Variant::Uncorrected, Variant::Corrected2, Variant::Corrected3] {
            for alpha in [0.3, 0.5, 0.9] {
                let cfg = SchemeConfig {
                    alpha,
                    tau: 0.05,
                    n_steps: 12,
                    variant,
                };
                let traj = advance(&v, None, &cfg).unwrap();
                let u = advance_scalar(alpha, 12.0, u0, 0.05, 12, variant).unwrap();
                for n in 0..=12 {
                    assert_relative_eq!(traj.states[n][0], u[n], max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let space = build_interval_space(8).unwrap();
        let v = GridFunction::zero(&space);
        let cfg = SchemeConfig {
            alpha: 0.6,
            tau: 0.1,
            n_steps: 5,
            variant: Variant::Corrected2,
        };
        let traj = advance(&v, None, &cfg).unwrap();
        for s in &traj.states {
            assert_eq!(s.abs().max(), 0.0);
        }
    }

    #[test]
    fn linear_in_initial_data() {
        let space = build_interval_space(12).unwrap();
        let v1 = nodal_interpolant(&space, &|p| p[0] * (1.0 - p[0]));
        let v2 = nodal_interpolant(&space, &|p| (std::f64::consts::PI * p[0]).sin());
        let combo = GridFunction::new(&space, 2.0 * &v1.coeffs - 0.5 * &v2.coeffs).unwrap();
        let cfg = SchemeConfig {
            alpha: 0.4,
            tau: 0.02,
            n_steps: 10,
            variant: Variant::Corrected3,
        };
        let t1 = advance(&v1, None, &cfg).unwrap();
        let t2 = advance(&v2, None, &cfg).unwrap();
        let tc = advance(&combo, None, &cfg).unwrap();
        for n in 0..=10 {
            let expect = 2.0 * &t1.states[n] - 0.5 * &t2.states[n];
            assert!((&tc.states[n] - expect).abs().max() < 1e-12);
        }
    }

    #[test]
    fn advance_final_agrees_with_advance() {
        let v = sine_data(20);
        let g: Arc<TimeFn> = Arc::new(|t: f64| 1.0 + t.powf(1.5));
        let phi: Arc<SpaceFn> = Arc::new(|p: [f64; 2]| if p[0] <= 0.5 { 1.0 } else { 0.0 });
        let sampler = SourceSampler::new(&v.space, &[(g, phi)]);
        for variant in [Variant::Uncorrected, Variant::Corrected2, Variant::Corrected3] {
            let cfg = SchemeConfig {
                alpha: 0.5,
                tau: 0.01,
                n_steps: 7,
                variant,
            };
            let traj = advance(&v, Some(&sampler), &cfg).unwrap();
            let last = advance_final(&v, Some(&sampler), &cfg).unwrap();
            let diff = (&traj.states[7] - &last.coeffs).abs().max();
            assert!(diff == 0.0, "variants should share arithmetic, diff {diff}");
        }
    }

    #[test]
    fn source_free_norm_decays() {
        // The uncorrected run decays monotonically from the start. The
        // corrected variants deliberately perturb the first steps, so for
        // them monotone decay is only asserted once the correction window is
        // past; all variants must land on the same final norm since they
        // share every coefficient from step 4 on.
        let v = sine_data(32);
        let mut finals = Vec::new();
        for variant in [Variant::Uncorrected, Variant::Corrected2, Variant::Corrected3] {
            let cfg = SchemeConfig {
                alpha: 0.5,
                tau: 0.02,
                n_steps: 50,
                variant,
            };
            let traj = advance(&v, None, &cfg).unwrap();
            let start = if variant == Variant::Uncorrected { 1 } else { 4 };
            let mut prev = traj.state(start - 1).l2_norm();
            for n in start..=50 {
                let norm = traj.state(n).l2_norm();
                assert!(norm < prev, "{variant:?} norm grew at step {n}: {prev} -> {norm}");
                assert!(norm > 0.0);
                prev = norm;
            }
            finals.push(traj.state(50).l2_norm());
        }
        for f in &finals[1..] {
            assert_relative_eq!(*f, finals[0], max_relative = 1e-2);
        }
    }

    #[test]
    fn zero_steps_returns_initial_state_only() {
        let v = sine_data(8);
        let cfg = SchemeConfig {
            alpha: 0.7,
            tau: 0.1,
            n_steps: 0,
            variant: Variant::Uncorrected,
        };
        let traj = advance(&v, None, &cfg).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.times, vec![0.0]);
        let last = advance_final(&v, None, &cfg).unwrap();
        assert_eq!(last.coeffs, v.coeffs);
    }

    #[test]
    fn rejects_bad_parameters() {
        let v = sine_data(8);
        let cfg = SchemeConfig {
            alpha: 0.5,
            tau: 0.0,
            n_steps: 3,
            variant: Variant::Uncorrected,
        };
        assert!(matches!(advance(&v, None, &cfg), Err(StepError::BadTau(_))));
        assert!(matches!(
            advance_scalar(0.5, -1.0, 1.0, 0.1, 3, Variant::Uncorrected),
            Err(StepError::NegativeLambda(_))
        ));
        assert!(advance_scalar(1.7, 1.0, 1.0, 0.1, 3, Variant::Uncorrected).is_err());
        let other = build_interval_space(4).unwrap();
        let sampler = SourceSampler::new(&other, &[]);
        let cfg_ok = SchemeConfig {
            alpha: 0.5,
            tau: 0.1,
            n_steps: 3,
            variant: Variant::Uncorrected,
        };
        assert!(matches!(
            advance(&v, Some(&sampler), &cfg_ok),
            Err(StepError::SourceMismatch { .. })
        ));
    }

    #[test]
    fn history_convolution_matches_direct_sum() {
        let w = be_cq_weights(0.5, 6).unwrap().weights;
        let mw: Vec<DVector<f64>> = (0..5)
            .map(|j| DVector::from_element(3, (j as f64) + 0.25))
            .collect();
        let n = 5;
        let got = history_convolution(&w, &mw, n);
        for i in 0..3 {
            let mut expect = 0.0;
            for j in 1..n {
                expect += w[n - j] * mw[j][i];
            }
            assert_relative_eq!(got[i], expect, max_relative = 1e-15);
        }
    }

    #[test]
    fn scalar_variants_agree_from_step_four_on_inputs() {
        // All variants share coefficients for n >= 4, so runs that differ
        // only in the early steps keep a fixed offset pattern rather than
        // diverging; concretely the step-4 coefficient quadruples coincide.
        for alpha in [0.2, 0.5, 0.8] {
            let base = step_coeffs(Variant::Uncorrected, 4, alpha);
            assert_eq!(step_coeffs(Variant::Corrected2, 4, alpha), base);
            assert_eq!(step_coeffs(Variant::Corrected3, 4, alpha), base);
            assert_eq!(
                step_coeffs(Variant::Corrected2, 3, alpha),
                step_coeffs(Variant::Uncorrected, 3, alpha)
            );
        }
    }
}
