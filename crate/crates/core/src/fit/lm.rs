use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{weighted, FitError, FitOptions, FitProblem, FitResult, Termination, Transform};

const INITIAL_LAMBDA: f64 = 1e-3;
const LAMBDA_FACTOR: f64 = 10.0;
const RESTART_SEED: u64 = 0x05EE_DF17;
const RESTART_JITTER: f64 = 0.5;
/// First continuation stage ends at this multiple of the lowest q.
const FIRST_STAGE_SPAN: f64 = 3.0;
const STAGE_GROWTH: f64 = 1.5;

/// Residual function over the internal (unbounded) free variables.
pub(crate) struct Objective<'a> {
    problem: &'a FitProblem,
    free: Vec<(String, Transform)>,
    base: BTreeMap<String, f64>,
    sigma: Vec<f64>,
    /// Number of leading (lowest-q) points in use.
    rows: usize,
}

impl<'a> Objective<'a> {
    pub(crate) fn new(problem: &'a FitProblem, opts: &FitOptions) -> Self {
        let free = problem
            .free_parameters()
            .map(|p| (p.name.clone(), Transform::for_bounds(p.lower, p.upper)))
            .collect();
        Self {
            problem,
            free,
            base: problem.initial_values(),
            sigma: problem.sigmas(opts),
            rows: problem.dataset().len(),
        }
    }

    fn truncated(&self, rows: usize) -> Self {
        Self {
            problem: self.problem,
            free: self.free.clone(),
            base: self.base.clone(),
            sigma: self.sigma.clone(),
            rows,
        }
    }

    pub(crate) fn initial_point(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.free.len(),
            self.free.iter().map(|(n, tr)| tr.to_internal(self.base[n])),
        )
    }

    pub(crate) fn values(&self, t: &DVector<f64>) -> BTreeMap<String, f64> {
        let mut v = self.base.clone();
        for ((name, tr), &ti) in self.free.iter().zip(t.iter()) {
            v.insert(name.clone(), tr.to_external(ti));
        }
        v
    }

    pub(crate) fn residuals(&self, t: &DVector<f64>) -> Result<DVector<f64>, FitError> {
        let q = &self.problem.dataset().q()[..self.rows];
        let model = self.problem.model_intensity_at(&self.values(t), q)?;
        let r = weighted(
            &model,
            &self.problem.dataset().intensity()[..self.rows],
            &self.sigma[..self.rows],
        );
        Ok(DVector::from_vec(r))
    }

    /// Forward differences with step `1e-6 · max(|t|, 1)`.
    pub(crate) fn jacobian(
        &self,
        t: &DVector<f64>,
        r0: &DVector<f64>,
    ) -> Result<DMatrix<f64>, FitError> {
        let mut jac = DMatrix::zeros(r0.len(), t.len());
        for j in 0..t.len() {
            let h = 1e-6 * t[j].abs().max(1.0);
            let mut tp = t.clone();
            tp[j] += h;
            let rp = self.residuals(&tp)?;
            jac.set_column(j, &((rp - r0) / h));
        }
        Ok(jac)
    }

    /// Central differences, the reference for [`jacobian_check`].
    pub(crate) fn jacobian_central(&self, t: &DVector<f64>) -> Result<DMatrix<f64>, FitError> {
        let n = self.residuals(t)?.len();
        let mut jac = DMatrix::zeros(n, t.len());
        for j in 0..t.len() {
            let h = 1e-5 * t[j].abs().max(1.0);
            let mut tp = t.clone();
            let mut tm = t.clone();
            tp[j] += h;
            tm[j] -= h;
            let d = (self.residuals(&tp)? - self.residuals(&tm)?) / (2.0 * h);
            jac.set_column(j, &d);
        }
        Ok(jac)
    }

    fn free_names(&self) -> impl Iterator<Item = &str> {
        self.free.iter().map(|(n, _)| n.as_str())
    }
}

struct Run {
    t: DVector<f64>,
    chi2: f64,
    iterations: usize,
    termination: Termination,
}

fn minimize(obj: &Objective<'_>, start: DVector<f64>, opts: &FitOptions) -> Result<Run, FitError> {
    let mut t = start;
    let mut r = obj.residuals(&t)?;
    let mut chi2 = r.norm_squared();
    if chi2 == 0.0 {
        return Ok(Run {
            t,
            chi2,
            iterations: 0,
            termination: Termination::ZeroResidual,
        });
    }
    let mut jac = obj.jacobian(&t, &r)?;
    let mut lambda = INITIAL_LAMBDA;

    for iteration in 1..=opts.max_iter {
        let jtj = jac.tr_mul(&jac);
        let grad = jac.tr_mul(&r);
        let max_diag = jtj.diagonal().max();
        let mut damped = jtj.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag);
        }
        let step = match damped.cholesky() {
            Some(chol) => chol.solve(&(-&grad)),
            None => {
                lambda *= LAMBDA_FACTOR;
                continue;
            }
        };
        let small_step = step.norm() < opts.xtol * (t.norm() + opts.xtol);
        let candidate = &t + &step;
        let trial = obj.residuals(&candidate).ok().map(|rn| {
            let c = rn.norm_squared();
            (rn, c)
        });
        match trial {
            Some((rn, chi2_new)) if chi2_new.is_finite() && chi2_new < chi2 => {
                let relative = (chi2 - chi2_new) / chi2;
                t = candidate;
                r = rn;
                chi2 = chi2_new;
                lambda /= LAMBDA_FACTOR;
                if chi2 == 0.0 {
                    return Ok(Run {
                        t,
                        chi2,
                        iterations: iteration,
                        termination: Termination::ZeroResidual,
                    });
                }
                if relative < opts.ftol {
                    return Ok(Run {
                        t,
                        chi2,
                        iterations: iteration,
                        termination: Termination::Ftol,
                    });
                }
                if small_step {
                    return Ok(Run {
                        t,
                        chi2,
                        iterations: iteration,
                        termination: Termination::Xtol,
                    });
                }
                jac = obj.jacobian(&t, &r)?;
            }
            _ => {
                if small_step {
                    return Ok(Run {
                        t,
                        chi2,
                        iterations: iteration,
                        termination: Termination::Xtol,
                    });
                }
                lambda *= LAMBDA_FACTOR;
            }
        }
    }
    Ok(Run {
        t,
        chi2,
        iterations: opts.max_iter,
        termination: Termination::MaxIterations,
    })
}

/// Point counts of the continuation stages, each ending at a q cutoff
/// `FIRST_STAGE_SPAN · q_min · STAGE_GROWTH^k`. The full range is not included.
fn stage_rows(q: &[f64], n_free: usize) -> Vec<usize> {
    let mut rows = Vec::new();
    let (first, last) = (q[0], q[q.len() - 1]);
    let mut cut = FIRST_STAGE_SPAN * first;
    while cut < last {
        let n = q.partition_point(|&v| v <= cut);
        if n > n_free + 2 && n < q.len() && rows.last() != Some(&n) {
            rows.push(n);
        }
        cut *= STAGE_GROWTH;
    }
    rows
}

fn continued(obj: &Objective<'_>, start: DVector<f64>, opts: &FitOptions) -> Result<Run, FitError> {
    let mut t = start;
    let mut iterations = 0;
    for rows in stage_rows(obj.problem.dataset().q(), t.len()) {
        // a failed stage leaves the point where it was
        if let Ok(run) = minimize(&obj.truncated(rows), t.clone(), opts) {
            iterations += run.iterations;
            t = run.t;
        }
    }
    let mut last = minimize(obj, t, opts)?;
    last.iterations += iterations;
    Ok(last)
}

fn solve(obj: &Objective<'_>, start: DVector<f64>, opts: &FitOptions) -> Result<Run, FitError> {
    let plain = minimize(obj, start.clone(), opts)?;
    if !opts.continuation || plain.chi2 == 0.0 {
        return Ok(plain);
    }
    match continued(obj, start, opts) {
        Ok(run) if run.chi2 < plain.chi2 => Ok(run),
        _ => Ok(plain),
    }
}

/// Fits the problem by damped Gauss-Newton on the transformed parameters.
///
/// Damping starts at 1e-3 and moves by a factor of ten on each rejected or
/// accepted step. With `continuation` on, a second path fits a growing
/// low-q window first; oscillating form factors have narrow χ² basins at
/// high q that a start far from the answer cannot otherwise reach.
/// Uncertainties come from `(JᵀJ)⁻¹ · χ²_red` at the
/// solution, mapped back through each transform's local slope.
/// Relative difference, per free parameter, between the forward-difference
/// Jacobian the solver uses and a central-difference reference, both taken
/// at the starting point.
pub fn jacobian_check(p: &FitProblem, opts: &FitOptions) -> Result<Vec<f64>, FitError> {
    let obj = Objective::new(p, opts);
    let t = obj.initial_point();
    let r0 = obj.residuals(&t)?;
    let forward = obj.jacobian(&t, &r0)?;
    let central = obj.jacobian_central(&t)?;
    Ok((0..t.len())
        .map(|j| (forward.column(j) - central.column(j)).norm() / central.column(j).norm())
        .collect())
}

pub fn fit_lm(p: &FitProblem, opts: &FitOptions) -> Result<FitResult, FitError> {
    let obj = Objective::new(p, opts);
    let start = obj.initial_point();

    let r0 = obj.residuals(&start)?;
    let j0 = obj.jacobian(&start, &r0)?;
    let dead: Vec<String> = obj
        .free_names()
        .enumerate()
        .filter(|(j, _)| j0.column(*j).iter().all(|&v| v == 0.0))
        .map(|(_, n)| n.to_string())
        .collect();
    if !dead.is_empty() && r0.norm_squared() > 0.0 {
        return Err(FitError::SingularJacobian(dead));
    }

    let mut best = solve(&obj, start.clone(), opts)?;
    if opts.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
        let mut total_iterations = best.iterations;
        for _ in 0..opts.restarts {
            let jittered = start.map(|v| {
                let g: f64 = StandardNormal.sample(&mut rng);
                v + RESTART_JITTER * g * v.abs().max(1.0)
            });
            if let Ok(run) = solve(&obj, jittered, opts) {
                total_iterations += run.iterations;
                if run.chi2 < best.chi2 {
                    best = run;
                }
            }
        }
        best.iterations = total_iterations;
    }

    let values = obj.values(&best.t);
    let residuals = obj.residuals(&best.t)?;
    let n_free = best.t.len();
    let chi2_reduced = super::chi2_reduced(residuals.as_slice(), n_free)?;

    let jac = obj.jacobian(&best.t, &residuals)?;
    let jtj = jac.tr_mul(&jac);
    let cov = jtj.clone().try_inverse().unwrap_or_else(|| {
        jtj.pseudo_inverse(1e-14)
            .unwrap_or_else(|_| DMatrix::zeros(n_free, n_free))
    });
    let uncertainties = obj
        .free
        .iter()
        .enumerate()
        .map(|(j, (name, tr))| {
            let sigma_t = (cov[(j, j)].max(0.0) * chi2_reduced).sqrt();
            (name.clone(), (tr.derivative(best.t[j]) * sigma_t).abs())
        })
        .collect();
    let fixed = p
        .parameters()
        .iter()
        .filter(|q| q.fixed)
        .map(|q| (q.name.clone(), q.value))
        .collect();

    Ok(FitResult {
        model: p.model().to_string(),
        values,
        uncertainties,
        fixed,
        chi2: best.chi2,
        chi2_reduced,
        residuals: residuals.as_slice().to_vec(),
        iterations: best.iterations,
        converged: best.termination.converged(),
        termination: best.termination,
    })
}
