//! Convergence and time-decay studies: run the solver over a ladder of step
//! counts (or final times), measure errors against a fine-step reference,
//! and emit the results as CSV.
//!
//! Error conventions follow the study catalog: interval problems report the
//! raw discrete L2 error at the final time; square problems with nonzero
//! initial data additionally report the error normalized by the discrete
//! norm of the initial data. Problems starting from zero keep the
//! normalized column equal to the raw one.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{FemError, FemSpace, GridFunction};
use crate::oracles::{catalog, fine_step_reference, OracleError, ProblemSpec};
use crate::stepper::{advance_final, SchemeConfig, StepError, Variant};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("study needs at least one run, got none")]
    EmptyStudy,
    #[error("csv output failed: {0}")]
    Io(#[from] std::io::Error),
}

/// One convergence study: a fixed problem and mesh, a ladder of step counts.
#[derive(Debug, Clone)]
pub struct StudySpec {
    /// Problem id in the catalog (`ex1a`, `ex1b`, `sq_a`, `sq_b`, `sq_c`,
    /// `sq_d`).
    pub problem: String,
    pub alpha: f64,
    /// Source exponent, read only by `sq_d`.
    pub beta: Option<f64>,
    pub variant: Variant,
    /// Mesh cells per side.
    pub m: usize,
    pub t_final: f64,
    /// Step counts to run, typically a doubling ladder.
    pub n_values: Vec<usize>,
    /// The reference run takes this many corrected steps to `t_final`.
    pub refinement: usize,
}

/// One time-decay study: fixed step count, a ladder of final times.
#[derive(Debug, Clone)]
pub struct DecaySpec {
    pub problem: String,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub variant: Variant,
    pub m: usize,
    pub n_steps: usize,
    pub t_values: Vec<f64>,
    pub refinement: usize,
}

/// One row of a study: the run parameters, the measured errors, and the
/// local rate against the previous row.
#[derive(Debug, Clone)]
pub struct ErrorRow {
    pub alpha: f64,
    pub n_steps: usize,
    pub tau: f64,
    pub l2_error: f64,
    pub normalized_error: f64,
    pub rate: Option<f64>,
}

/// Study results: metadata echoes the `StudySpec` fields, `rate` columns
/// hold local orders, and `fitted_exponent` is the least-squares slope of
/// `ln error` against `ln tau` (convergence) or `ln t` (decay).
#[derive(Debug, Clone)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub metadata: Vec<(String, String)>,
    pub fitted_exponent: Option<f64>,
    pub reference_count: usize,
}

impl ErrorTable {
    /// Mean of the last `k` local rates, the number the convergence claims
    /// are checked against (early rows sit in the preasymptotic regime).
    pub fn mean_tail_rate(&self, k: usize) -> Option<f64> {
        let rates: Vec<f64> = self.rows.iter().filter_map(|r| r.rate).collect();
        if rates.len() < k || k == 0 {
            return None;
        }
        Some(rates[rates.len() - k..].iter().sum::<f64>() / k as f64)
    }

    /// Writes `# key = value` metadata lines, a header, and one line per row.
    pub fn emit_csv(&self, out: &mut dyn Write) -> Result<(), HarnessError> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} = {v}")?;
        }
        if let Some(e) = self.fitted_exponent {
            writeln!(out, "# fitted_exponent = {e:.4}")?;
        }
        let mut w = csv::Writer::from_writer(&mut *out);
        w.write_record(["alpha", "N", "tau", "l2_error", "normalized_error", "rate"])
            .map_err(into_io)?;
        for r in &self.rows {
            let rate = r.rate.map(|v| format!("{v:.3}")).unwrap_or_default();
            w.write_record([
                format!("{}", r.alpha),
                format!("{}", r.n_steps),
                format!("{:.6e}", r.tau),
                format!("{:.6e}", r.l2_error),
                format!("{:.6e}", r.normalized_error),
                rate,
            ])
            .map_err(into_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, HarnessError> {
        let mut buf = Vec::new();
        self.emit_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ascii"))
    }
}

fn into_io(e: csv::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

/// Local orders from an error ladder: `rate_i = ln(e_{i-1}/e_i) /
/// ln(x_{i-1}/x_i)` with `x` the refined quantity (`tau` or `t`). The first
/// entry has no predecessor and is `None`.
pub fn estimate_rate(x: &[f64], errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; errors.len()];
    for i in 1..errors.len() {
        let dx = (x[i - 1] / x[i]).ln();
        if dx != 0.0 && errors[i] > 0.0 && errors[i - 1] > 0.0 {
            out[i] = Some((errors[i - 1] / errors[i]).ln() / dx);
        }
    }
    out
}

/// Least-squares slope of `ln e` against `ln x`.
fn fit_exponent(x: &[f64], errors: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let le: Vec<f64> = errors.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let me = le.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in lx.iter().zip(&le) {
        num += (a - mx) * (b - me);
        den += (a - mx) * (a - mx);
    }
    (den > 0.0).then(|| num / den)
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Uncorrected => "uncorrected",
        Variant::Corrected2 => "corrected2",
        Variant::Corrected3 => "corrected3",
    }
}

/// Reference runs use the study's own variant when it is second order, so
/// the reference's residual error cancels against the run's instead of
/// adding a foreign constant. Uncorrected runs are only first order on
/// rough data, so they are measured against a corrected2 reference.
fn reference_variant(run: Variant) -> Variant {
    match run {
        Variant::Uncorrected => Variant::Corrected2,
        other => other,
    }
}

struct RunContext {
    spec_problem: ProblemSpec,
    space: Arc<FemSpace>,
    initial: GridFunction,
    norm_scale: f64,
}

impl RunContext {
    fn build(problem: &str, alpha: f64, beta: Option<f64>, m: usize) -> Result<Self, HarnessError> {
        let spec_problem = catalog(problem, alpha, beta)?;
        let space = spec_problem.build_space(m)?;
        let initial = spec_problem.initial_data(&space)?;
        let norm = initial.l2_norm();
        Ok(RunContext {
            norm_scale: if spec_problem.normalize_by_initial && norm > 0.0 {
                norm
            } else {
                1.0
            },
            spec_problem,
            space,
            initial,
        })
    }

    fn error_at(
        &self,
        reference: &GridFunction,
        t_final: f64,
        n_steps: usize,
        variant: Variant,
    ) -> Result<f64, HarnessError> {
        let cfg = SchemeConfig {
            alpha: self.spec_problem.alpha,
            tau: t_final / n_steps as f64,
            n_steps,
            variant,
        };
        let sampler = self.spec_problem.sampler(&self.space);
        let last = advance_final(&self.initial, sampler.as_ref(), &cfg)?;
        let diff = GridFunction::new(&self.space, &last.coeffs - &reference.coeffs)
            .expect("same space");
        Ok(diff.l2_norm())
    }
}

/// Runs the ladder of step counts against one fine-step reference and
/// tabulates errors and local rates. Runs are independent and execute in
/// parallel; row order follows `n_values`.
pub fn run_convergence_study(spec: &StudySpec) -> Result<ErrorTable, HarnessError> {
    if spec.n_values.is_empty() {
        return Err(HarnessError::EmptyStudy);
    }
    let ctx = RunContext::build(&spec.problem, spec.alpha, spec.beta, spec.m)?;
    let reference = fine_step_reference(
        &ctx.spec_problem,
        &ctx.space,
        spec.t_final,
        spec.refinement,
        reference_variant(spec.variant),
    )?;
    let errors: Vec<f64> = spec
        .n_values
        .par_iter()
        .map(|&n| ctx.error_at(&reference, spec.t_final, n, spec.variant))
        .collect::<Result<_, _>>()?;
    let taus: Vec<f64> = spec
        .n_values
        .iter()
        .map(|&n| spec.t_final / n as f64)
        .collect();
    let rates = estimate_rate(&taus, &errors);
    let rows = spec
        .n_values
        .iter()
        .zip(&taus)
        .zip(&errors)
        .zip(&rates)
        .map(|(((&n, &tau), &e), &rate)| ErrorRow {
            alpha: spec.alpha,
            n_steps: n,
            tau,
            l2_error: e,
            normalized_error: e / ctx.norm_scale,
            rate,
        })
        .collect();
    let mut metadata = vec![
        ("study".to_string(), "convergence".to_string()),
        ("problem".to_string(), spec.problem.clone()),
        ("alpha".to_string(), format!("{}", spec.alpha)),
        ("variant".to_string(), variant_name(spec.variant).to_string()),
        ("m".to_string(), format!("{}", spec.m)),
        ("t_final".to_string(), format!("{}", spec.t_final)),
        ("refinement".to_string(), format!("{}", spec.refinement)),
        (
            "normalization".to_string(),
            if ctx.spec_problem.normalize_by_initial {
                "initial_norm".to_string()
            } else {
                "none".to_string()
            },
        ),
    ];
    if let Some(b) = spec.beta {
        metadata.insert(3, ("beta".to_string(), format!("{b}")));
    }
    Ok(ErrorTable {
        fitted_exponent: fit_exponent(&taus, &errors),
        rows,
        metadata,
        reference_count: 1,
    })
}

/// Fixed step count, shrinking final time: measures how the error at `t`
/// decays as `t -> 0`, each final time against its own fine-step reference.
/// The fitted exponent is the headline number of this study.
pub fn run_time_decay_study(spec: &DecaySpec) -> Result<ErrorTable, HarnessError> {
    if spec.t_values.is_empty() {
        return Err(HarnessError::EmptyStudy);
    }
    let ctx = RunContext::build(&spec.problem, spec.alpha, spec.beta, spec.m)?;
    let errors: Vec<f64> = spec
        .t_values
        .par_iter()
        .map(|&t| {
            let reference = fine_step_reference(
                &ctx.spec_problem,
                &ctx.space,
                t,
                spec.refinement,
                reference_variant(spec.variant),
            )?;
            ctx.error_at(&reference, t, spec.n_steps, spec.variant)
        })
        .collect::<Result<_, _>>()?;
    let rates = estimate_rate(&spec.t_values, &errors);
    let rows = spec
        .t_values
        .iter()
        .zip(&errors)
        .zip(&rates)
        .map(|((&t, &e), &rate)| ErrorRow {
            alpha: spec.alpha,
            n_steps: spec.n_steps,
            tau: t / spec.n_steps as f64,
            l2_error: e,
            normalized_error: e / ctx.norm_scale,
            rate,
        })
        .collect();
    let mut metadata = vec![
        ("study".to_string(), "time_decay".to_string()),
        ("problem".to_string(), spec.problem.clone()),
        ("alpha".to_string(), format!("{}", spec.alpha)),
        ("variant".to_string(), variant_name(spec.variant).to_string()),
        ("m".to_string(), format!("{}", spec.m)),
        ("n_steps".to_string(), format!("{}", spec.n_steps)),
        ("refinement".to_string(), format!("{}", spec.refinement)),
        (
            "normalization".to_string(),
            if ctx.spec_problem.normalize_by_initial {
                "initial_norm".to_string()
            } else {
                "none".to_string()
            },
        ),
    ];
    if let Some(b) = spec.beta {
        metadata.insert(3, ("beta".to_string(), format!("{b}")));
    }
    Ok(ErrorTable {
        fitted_exponent: fit_exponent(&spec.t_values, &errors),
        rows,
        metadata,
        reference_count: spec.t_values.len(),
    })
}
