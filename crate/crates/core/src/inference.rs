//! Laplace-approximate inference for the latent Gaussian model.
//!
//! The latent vector stacks the space-time field with the fixed effects
//! (and the per-observation noise values when the noise term is on). At
//! fixed hyperparameters an inner Newton iteration finds the conditional
//! mode; the Laplace approximation of the hyperparameter posterior is
//! maximized by Nelder-Mead and summarized on a small exploration grid,
//! whose weighted Gaussian approximations yield posterior moments,
//! information criteria, and scenario arithmetic.

use rand::Rng;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::likelihood::{loglik_terms, Likelihood};
use crate::model::{ActiveHypers, Hypers, ModelSpec};
use crate::optim::{explore_posterior, Exploration};
use crate::sparse::{FillOrdering, SpdFactor};
use crate::spde::range_from_kappa;

/// Inner Newton convergence: step max-norm below this bound.
const NEWTON_STEP_TOL: f64 = 1e-8;
/// Additional stationarity requirement on the gradient max-norm.
const NEWTON_GRAD_TOL: f64 = 1e-6;
const NEWTON_MAX_ITERS: usize = 50;

/// Default evaluation budget for hyperparameter exploration.
pub const DEFAULT_EVAL_BUDGET: usize = 400;

/// Latent vector at the conditional mode together with the linear
/// predictor it implies.
#[derive(Debug, Clone)]
pub struct LatentState {
    /// `[field at mesh-time nodes; intercept; coefficients]`, plus one
    /// linear-predictor value per observation when the noise term is on.
    pub x: Vec<f64>,
    /// Linear predictor at each observation.
    pub eta: Vec<f64>,
}

/// Output of the inner optimization.
pub struct NewtonResult {
    pub latent: LatentState,
    /// Factorized negative Hessian of the log joint density at the mode.
    pub hessian: SpdFactor,
    pub iters: usize,
}

/// Per-parameter posterior summary (Gaussian-mixture moments).
#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Posterior mode and equal-tailed 95% interval for a hyperparameter on
/// its natural scale.
#[derive(Debug, Clone)]
pub struct HyperSummary {
    pub name: String,
    pub mode: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Posterior summaries of a completed fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub likelihood: Likelihood,
    pub n_vertices: usize,
    pub t_len: usize,
    /// Intercept first, then one entry per covariate.
    pub beta_summary: Vec<ParamSummary>,
    pub hyper_summary: Vec<HyperSummary>,
    /// Posterior mean of the field at each mesh-time node (time-major).
    pub field_mean: Vec<f64>,
    /// Posterior standard deviation of the field at each node.
    pub field_sd: Vec<f64>,
    /// Laplace approximation of the log marginal likelihood.
    pub log_evidence: f64,
    pub dic: f64,
    pub waic: f64,
    /// Hyperparameter mode in transformed coordinates.
    pub mode: Hypers,
    /// Explored hyperparameter grid with normalized weights.
    pub explored: Vec<(Hypers, f64)>,
    /// Total log-posterior evaluations spent.
    pub evals: usize,
}

impl FitResult {
    pub fn beta0_mean(&self) -> f64 {
        self.beta_summary[0].mean
    }

    pub fn beta_by_name(&self, name: &str) -> Option<&ParamSummary> {
        self.beta_summary.iter().find(|p| p.name == name)
    }

    pub fn hyper_by_name(&self, name: &str) -> Option<&HyperSummary> {
        self.hyper_summary.iter().find(|p| p.name == name)
    }
}

/// Persistent state for repeated posterior evaluations over one model:
/// fixed sparsity patterns, factor symbolics, and warm starts.
pub struct Engine<'a> {
    spec: &'a ModelSpec,
    active: ActiveHypers,
    field_len: usize,
    u_len: usize,
    n_latent: usize,
    /// Likelihood attachment rows in latent coordinates.
    obs_rows: Vec<Vec<(usize, f64)>>,
    /// Observation design on `[field; intercept; coefficients]`.
    design_rows: Vec<Vec<(usize, f64)>>,
    /// `G C^{-1} G`, computed once.
    ggc: CsMat<f64>,
    qs_factor: Option<SpdFactor>,
    h_factor: Option<SpdFactor>,
    warm_x: Option<Vec<f64>>,
}

impl<'a> Engine<'a> {
    pub fn new(spec: &'a ModelSpec) -> Result<Self> {
        spec.validate()?;
        let m = spec.n_vertices;
        let field_len = m * spec.t_len;
        let k = spec.n_covariates();
        let u_len = field_len + 1 + k;
        let n = spec.n_obs();
        let n_latent = if spec.noise_term { u_len + n } else { u_len };

        let mut design_rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = spec.projector.rows[i].clone();
            row.push((field_len, 1.0));
            for (j, col) in spec.covariates.iter().enumerate() {
                row.push((field_len + 1 + j, col[i]));
            }
            design_rows.push(row);
        }
        let obs_rows = if spec.noise_term {
            (0..n).map(|i| vec![(u_len + i, 1.0)]).collect()
        } else {
            design_rows.clone()
        };

        // G C^{-1} G with entrywise symmetrization, fixed for the mesh.
        let sp = crate::spde::spatial_precision(&spec.fem, 1.0, 1.0)?;
        let mut ggc = sp.q;
        // Subtract the kappa-dependent parts evaluated at kappa=tau=1:
        // Q(1,1) = C + 2G + GC^{-1}G, so recover GC^{-1}G by removing C
        // and 2G on the same pattern.
        {
            let mut tri = TriMat::with_capacity((m, m), ggc.nnz());
            let dense_c = &spec.fem.c_lumped;
            let g = &spec.fem.g;
            let mut g_map = std::collections::HashMap::new();
            for (v, (i, j)) in g.iter() {
                g_map.insert((i, j), *v);
            }
            for (v, (i, j)) in ggc.iter() {
                let mut val = *v;
                if i == j {
                    val -= dense_c[i];
                }
                if let Some(gv) = g_map.get(&(i, j)) {
                    val -= 2.0 * gv;
                }
                tri.add_triplet(i, j, val);
            }
            ggc = tri.to_csc();
        }

        Ok(Engine {
            spec,
            active: spec.active_hypers(),
            field_len,
            u_len,
            n_latent,
            obs_rows,
            design_rows,
            ggc,
            qs_factor: None,
            h_factor: None,
            warm_x: None,
        })
    }

    pub fn active(&self) -> ActiveHypers {
        self.active
    }

    pub fn n_latent(&self) -> usize {
        self.n_latent
    }

    /// Spatial precision values on the fixed union pattern.
    fn qs_matrix(&self, kappa: f64, tau: f64) -> CsMat<f64> {
        let m = self.spec.n_vertices;
        let t2 = tau * tau;
        let k2 = kappa * kappa;
        let k4 = k2 * k2;
        let mut tri = TriMat::with_capacity((m, m), self.ggc.nnz() + self.spec.fem.g.nnz() + m);
        for (i, &c) in self.spec.fem.c_lumped.iter().enumerate() {
            tri.add_triplet(i, i, t2 * k4 * c);
        }
        for (v, (i, j)) in self.spec.fem.g.iter() {
            tri.add_triplet(i, j, t2 * 2.0 * k2 * *v);
        }
        for (v, (i, j)) in self.ggc.iter() {
            tri.add_triplet(i, j, t2 * *v);
        }
        tri.to_csc()
    }

    /// AR(1) precision values with the full tridiagonal pattern stored
    /// even at `rho = 0`, so downstream sparsity never changes shape.
    fn qt_matrix(&self, rho: f64) -> CsMat<f64> {
        let t_len = self.spec.t_len;
        let mut tri = TriMat::with_capacity((t_len, t_len), 3 * t_len);
        if t_len == 1 {
            tri.add_triplet(0, 0, 1.0);
        } else {
            let s = 1.0 / (1.0 - rho * rho);
            for t in 0..t_len {
                let d = if t == 0 || t == t_len - 1 {
                    1.0
                } else {
                    1.0 + rho * rho
                };
                tri.add_triplet(t, t, s * d);
                if t + 1 < t_len {
                    tri.add_triplet(t, t + 1, -s * rho);
                    tri.add_triplet(t + 1, t, -s * rho);
                }
            }
        }
        tri.to_csc()
    }

    /// Joint prior precision over the latent vector and its
    /// log-determinant (closed form via the Kronecker identity).
    fn q_joint(&mut self, hypers: &Hypers) -> Result<(CsMat<f64>, f64)> {
        let spec = self.spec;
        let m = spec.n_vertices;
        let t_len = spec.t_len;
        let kappa = hypers.kappa();
        let tau = hypers.tau();
        let rho = if self.active.rho { hypers.rho() } else { 0.0 };

        if !(kappa.is_finite() && tau.is_finite() && kappa > 0.0 && tau > 0.0) {
            return Err(Error::numerical(format!(
                "hyperparameters out of range: kappa={kappa:e}, tau={tau:e}"
            )));
        }

        let qs = self.qs_matrix(kappa, tau);
        match &mut self.qs_factor {
            Some(f) => f.update(&qs)?,
            None => self.qs_factor = Some(SpdFactor::new(&qs, FillOrdering::Rcm)?),
        }
        let logdet_qs = self.qs_factor.as_ref().unwrap().logdet();
        let logdet_qt = -((t_len as f64) - 1.0) * (1.0 - rho * rho).ln();
        let logdet_qst = (m as f64) * logdet_qt + (t_len as f64) * logdet_qs;

        let qt = self.qt_matrix(rho);
        let qst = crate::sparse::kronecker(&qt, &qs);

        let fep = spec.fixed_effect_precision;
        let k = spec.n_covariates();
        let mut logdet = logdet_qst + ((1 + k) as f64) * fep.ln();

        let mut tri = TriMat::with_capacity(
            (self.n_latent, self.n_latent),
            qst.nnz() + 1 + k + if spec.noise_term { self.spec.n_obs() * 40 } else { 0 },
        );
        for (v, (i, j)) in qst.iter() {
            tri.add_triplet(i, j, *v);
        }
        for j in 0..(1 + k) {
            tri.add_triplet(self.field_len + j, self.field_len + j, fep);
        }
        if spec.noise_term {
            let s2 = hypers.noise_variance();
            if !(s2.is_finite() && s2 > 0.0) {
                return Err(Error::numerical(format!("noise variance {s2:e}")));
            }
            let si = 1.0 / s2;
            let n = spec.n_obs();
            // [[A^T A / s2, -A^T / s2], [-A / s2, I / s2]] coupling blocks.
            for (i, row) in self.design_rows.iter().enumerate() {
                for &(a, wa) in row {
                    for &(b, wb) in row {
                        tri.add_triplet(a, b, si * wa * wb);
                    }
                    tri.add_triplet(a, self.u_len + i, -si * wa);
                    tri.add_triplet(self.u_len + i, a, -si * wa);
                }
                tri.add_triplet(self.u_len + i, self.u_len + i, si);
            }
            logdet -= (n as f64) * s2.ln();
        }
        Ok((tri.to_csc(), logdet))
    }

    fn eta_of(&self, x: &[f64]) -> Vec<f64> {
        self.obs_rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * x[j]).sum())
            .collect()
    }

    fn loglik_sum(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(self.spec.y.iter())
            .map(|(&e, &y)| loglik_terms(self.spec.likelihood, e, y).0)
            .sum()
    }

    /// Inner Newton optimization of the latent field at fixed
    /// hyperparameters. Returns the mode, leaving the factorized Hessian
    /// in `self.h_factor`.
    fn newton(&mut self, hypers: &Hypers) -> Result<NewtonInternal> {
        let (q, logdet_q) = self.q_joint(hypers)?;
        let n_latent = self.n_latent;

        let mut x = match &self.warm_x {
            Some(w) if w.len() == n_latent => w.clone(),
            _ => vec![0.0; n_latent],
        };

        let run = |engine: &mut Self, x: &mut Vec<f64>| -> Result<usize> {
            let mut eta = engine.eta_of(x);
            let mut obj = engine.loglik_sum(&eta) - 0.5 * crate::sparse::quad_form(&q, x);
            let mut iters = 0;
            // Converge when the last accepted step and the current
            // gradient are both flat; the factored Hessian is then the one
            // evaluated at the returned mode.
            let mut last_step = f64::INFINITY;
            loop {
                // Gradient and curvature of the log joint at x.
                let qx = crate::sparse::spmv(&q, x);
                let mut grad: Vec<f64> = qx.iter().map(|v| -v).collect();
                let mut weights = Vec::with_capacity(engine.spec.n_obs());
                for (i, row) in engine.obs_rows.iter().enumerate() {
                    let (_, d1, d2) = loglik_terms(engine.spec.likelihood, eta[i], engine.spec.y[i]);
                    for &(j, w) in row {
                        grad[j] += w * d1;
                    }
                    weights.push(-d2);
                }
                let grad_norm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));

                let mut tri = TriMat::with_capacity(
                    (n_latent, n_latent),
                    q.nnz() + engine.spec.n_obs() * 36,
                );
                for (v, (i, j)) in q.iter() {
                    tri.add_triplet(i, j, *v);
                }
                for (row, &wi) in engine.obs_rows.iter().zip(weights.iter()) {
                    for &(a, wa) in row {
                        for &(b, wb) in row {
                            tri.add_triplet(a, b, wi * wa * wb);
                        }
                    }
                }
                let h: CsMat<f64> = tri.to_csc();
                match &mut engine.h_factor {
                    Some(f) if f.n() == n_latent => f.update(&h)?,
                    _ => engine.h_factor = Some(SpdFactor::new(&h, engine.h_ordering())?),
                }

                if last_step < NEWTON_STEP_TOL && grad_norm < NEWTON_GRAD_TOL {
                    return Ok(iters);
                }
                if iters >= NEWTON_MAX_ITERS {
                    return Err(Error::NonConvergence { iters, grad_norm });
                }

                let delta = engine.h_factor.as_ref().unwrap().solve(&grad);
                let mut step = 1.0;
                let mut accepted = false;
                for _ in 0..30 {
                    let x_new: Vec<f64> = x
                        .iter()
                        .zip(delta.iter())
                        .map(|(xi, di)| xi + step * di)
                        .collect();
                    let eta_new = engine.eta_of(&x_new);
                    let obj_new =
                        engine.loglik_sum(&eta_new) - 0.5 * crate::sparse::quad_form(&q, &x_new);
                    if obj_new >= obj - 1e-12 * obj.abs().max(1.0) {
                        *x = x_new;
                        eta = eta_new;
                        obj = obj_new;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                iters += 1;
                if !accepted {
                    // No uphill step exists along the Newton direction; the
                    // factored Hessian at x is current, so flat gradients
                    // count as converged.
                    if grad_norm < NEWTON_GRAD_TOL {
                        return Ok(iters);
                    }
                    return Err(Error::NonConvergence { iters, grad_norm });
                }
                last_step = delta.iter().fold(0.0f64, |m, v| m.max((step * v).abs()));
            }
        };

        let iters = match run(self, &mut x) {
            Ok(iters) => iters,
            Err(e) => {
                // Retry cold if the warm start misled the iteration.
                if self.warm_x.is_some() {
                    x = vec![0.0; n_latent];
                    run(self, &mut x)?
                } else {
                    return Err(e);
                }
            }
        };

        let eta = self.eta_of(&x);
        let loglik = self.loglik_sum(&eta);
        let quad = crate::sparse::quad_form(&q, &x);
        self.warm_x = Some(x.clone());
        Ok(NewtonInternal {
            x,
            eta,
            loglik,
            quad,
            logdet_q,
            iters,
        })
    }

    fn h_ordering(&self) -> FillOrdering {
        // Fixed effects couple densely to the field; pin them (and the
        // noise block's predictors, which are eliminated cheaply) last.
        FillOrdering::RcmWithTail {
            dense_tail: self.n_latent - self.field_len,
        }
    }

    /// Laplace log posterior of the hyperparameters, up to a constant in
    /// the data.
    pub fn log_posterior(&mut self, hypers: &Hypers) -> Result<f64> {
        if !hypers.is_finite() {
            return Err(Error::numerical("non-finite hyperparameters".to_string()));
        }
        let newton = self.newton(hypers)?;
        let logdet_h = self.h_factor.as_ref().unwrap().logdet();
        let prior = self.spec.log_prior_hypers(hypers)?;
        Ok(newton.loglik - 0.5 * newton.quad + 0.5 * newton.logdet_q - 0.5 * logdet_h + prior)
    }

    /// Active-coordinate wrapper for the optimizer; numerical failures at
    /// a candidate point are treated as zero posterior mass.
    pub fn log_posterior_active(&mut self, v: &[f64], base: &Hypers) -> Result<f64> {
        let hypers = self.active.unpack(v, base);
        match self.log_posterior(&hypers) {
            Ok(val) => Ok(val),
            Err(Error::Numerical(_)) | Err(Error::NonConvergence { .. }) => {
                Ok(f64::NEG_INFINITY)
            }
            Err(e) => Err(e),
        }
    }
}

struct NewtonInternal {
    x: Vec<f64>,
    eta: Vec<f64>,
    loglik: f64,
    quad: f64,
    logdet_q: f64,
    iters: usize,
}

/// Finds the conditional mode of the latent field at fixed
/// hyperparameters, returning the mode, the factorized Hessian, and the
/// iteration count.
pub fn inner_newton(spec: &ModelSpec, hypers: &Hypers) -> Result<NewtonResult> {
    let mut engine = Engine::new(spec)?;
    let internal = engine.newton(hypers)?;
    let hessian = engine.h_factor.take().expect("factor present after newton");
    Ok(NewtonResult {
        latent: LatentState {
            x: internal.x,
            eta: internal.eta,
        },
        hessian,
        iters: internal.iters,
    })
}

/// Laplace approximation of the hyperparameter log posterior
/// `log p(theta | y)` up to an additive constant:
/// `log p(y|x*) - x*' Q x*/2 + log det Q/2 - log det H/2 + log p(theta)`.
pub fn log_posterior_hypers(spec: &ModelSpec, hypers: &Hypers) -> Result<f64> {
    Engine::new(spec)?.log_posterior(hypers)
}

/// Nelder-Mead maximization of the hyperparameter posterior followed by a
/// finite-difference exploration grid; returns the mode and the weighted
/// grid.
pub fn optimize_hypers(
    spec: &ModelSpec,
    init: &Hypers,
) -> Result<(Hypers, Vec<(Hypers, f64)>)> {
    let mut engine = Engine::new(spec)?;
    let active = engine.active();
    let base = *init;
    let x0 = active.pack(init);
    let ex = explore_posterior(
        |v| engine.log_posterior_active(v, &base),
        &x0,
        0.3,
        DEFAULT_EVAL_BUDGET,
    )?;
    let mode = active.unpack(&ex.mode, &base);
    let grid = ex
        .grid
        .iter()
        .map(|g| (active.unpack(&g.x, &base), g.weight))
        .collect();
    Ok((mode, grid))
}

fn default_init(spec: &ModelSpec) -> Result<Hypers> {
    let (c_kappa, c_tau) = spec.prior.centers()?;
    Ok(Hypers {
        log_kappa: c_kappa,
        log_tau: c_tau,
        rho_transformed: 1.0,
        log_noise_precision: 1.0,
    })
}

/// Fits the model: optimizes and explores the hyperparameter posterior,
/// combines the per-point Gaussian approximations into mixture summaries,
/// and computes DIC/WAIC from posterior samples. All sampling flows from
/// `seed`.
pub fn fit(spec: &ModelSpec, seed: u64) -> Result<FitResult> {
    let mut engine = Engine::new(spec)?;
    let active = engine.active();
    let base = default_init(spec)?;
    let x0 = active.pack(&base);

    let ex: Exploration = explore_posterior(
        |v| engine.log_posterior_active(v, &base),
        &x0,
        0.3,
        DEFAULT_EVAL_BUDGET,
    )?;
    let mode = active.unpack(&ex.mode, &base);

    // Posterior moments per grid point, then mixture combination.
    let u_len = engine.u_len;
    let field_len = engine.field_len;
    let k = spec.n_covariates();
    let n_obs = spec.n_obs();

    // Multinomial allocation of posterior-predictive samples to grid
    // points (for DIC/WAIC), fixed by the seed.
    let n_ic_samples = 200;
    let mut alloc_rng = crate::rng::stream_rng(seed, "fit-ic-alloc");
    let mut counts = vec![0usize; ex.grid.len()];
    for _ in 0..n_ic_samples {
        let u: f64 = alloc_rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut chosen = ex.grid.len() - 1;
        for (g, point) in ex.grid.iter().enumerate() {
            acc += point.weight;
            if u <= acc {
                chosen = g;
                break;
            }
        }
        counts[chosen] += 1;
    }

    let mut mean_acc = vec![0.0; u_len];
    let mut second_acc = vec![0.0; u_len];
    let mut eta_mean = vec![0.0; n_obs];
    let mut eta_samples: Vec<Vec<f64>> = Vec::with_capacity(n_ic_samples);

    for (g, point) in ex.grid.iter().enumerate() {
        let hypers = active.unpack(&point.x, &base);
        let newton = engine.newton(&hypers)?;
        let factor = engine.h_factor.as_ref().unwrap();
        let diag = factor.selected_inverse_diag();
        let w = point.weight;
        for j in 0..u_len {
            mean_acc[j] += w * newton.x[j];
            second_acc[j] += w * (diag[j] + newton.x[j] * newton.x[j]);
        }
        for (e, acc) in newton.eta.iter().zip(eta_mean.iter_mut()) {
            *acc += w * e;
        }
        let mut sample_rng = crate::rng::stream_rng(seed, &format!("fit-ic-{g}"));
        for _ in 0..counts[g] {
            let z = factor.sample_zero_mean(&mut sample_rng);
            let x_s: Vec<f64> = newton
                .x
                .iter()
                .zip(z.iter())
                .map(|(m, zi)| m + zi)
                .collect();
            eta_samples.push(engine.eta_of(&x_s));
        }
    }

    let var_of = |j: usize| (second_acc[j] - mean_acc[j] * mean_acc[j]).max(0.0);

    let mut beta_summary = Vec::with_capacity(1 + k);
    let mut names = vec!["(intercept)".to_string()];
    names.extend(spec.covariate_names.iter().cloned());
    for (j, name) in names.into_iter().enumerate() {
        let idx = field_len + j;
        let mean = mean_acc[idx];
        let sd = var_of(idx).sqrt();
        beta_summary.push(ParamSummary {
            name,
            mean,
            sd,
            lo: mean - 1.96 * sd,
            hi: mean + 1.96 * sd,
        });
    }

    let field_mean: Vec<f64> = mean_acc[..field_len].to_vec();
    let field_sd: Vec<f64> = (0..field_len).map(|j| var_of(j).sqrt()).collect();

    let (dic, waic) = dic_waic_from_eta(spec.likelihood, &spec.y, &eta_mean, &eta_samples);

    let hyper_summary = hyper_summaries(&mode, &ex, active);

    // Laplace evidence: mode value plus the Gaussian volume over theta.
    let d = active.dim() as f64;
    let cov_det = ex.covariance.determinant().max(1e-300);
    let log_evidence =
        ex.mode_value + 0.5 * d * (2.0 * std::f64::consts::PI).ln() + 0.5 * cov_det.ln();

    let explored = ex
        .grid
        .iter()
        .map(|g| (active.unpack(&g.x, &base), g.weight))
        .collect();

    Ok(FitResult {
        likelihood: spec.likelihood,
        n_vertices: spec.n_vertices,
        t_len: spec.t_len,
        beta_summary,
        hyper_summary,
        field_mean,
        field_sd,
        log_evidence,
        dic,
        waic,
        mode,
        explored,
        evals: ex.evals,
    })
}

fn hyper_summaries(mode: &Hypers, ex: &Exploration, active: ActiveHypers) -> Vec<HyperSummary> {
    let cov = &ex.covariance;
    let z = 1.96;
    let sd0 = cov[(0, 0)].max(0.0).sqrt();
    let sd1 = cov[(1, 1)].max(0.0).sqrt();
    let mut out = vec![
        HyperSummary {
            name: "kappa".to_string(),
            mode: mode.kappa(),
            lo: (mode.log_kappa - z * sd0).exp(),
            hi: (mode.log_kappa + z * sd0).exp(),
        },
        HyperSummary {
            name: "tau".to_string(),
            mode: mode.tau(),
            lo: (mode.log_tau - z * sd1).exp(),
            hi: (mode.log_tau + z * sd1).exp(),
        },
    ];
    let mut idx = 2;
    if active.rho {
        let sd = cov[(idx, idx)].max(0.0).sqrt();
        out.push(HyperSummary {
            name: "rho".to_string(),
            mode: mode.rho(),
            lo: ((mode.rho_transformed - z * sd) / 2.0).tanh(),
            hi: ((mode.rho_transformed + z * sd) / 2.0).tanh(),
        });
        idx += 1;
    }
    if active.noise {
        let sd = cov[(idx, idx)].max(0.0).sqrt();
        // Variance is a decreasing transform of the log precision.
        out.push(HyperSummary {
            name: "noise_variance".to_string(),
            mode: mode.noise_variance(),
            lo: (-(mode.log_noise_precision + z * sd)).exp(),
            hi: (-(mode.log_noise_precision - z * sd)).exp(),
        });
    }
    // Derived: log sigma2 = -ln(4 pi) - 2 log kappa - 2 log tau is linear
    // in the transformed coordinates, so the delta method is exact on the
    // log scale.
    let var_ls =
        4.0 * cov[(0, 0)] + 4.0 * cov[(1, 1)] + 8.0 * cov[(0, 1)];
    let log_s2 = -(4.0 * std::f64::consts::PI).ln() - 2.0 * mode.log_kappa - 2.0 * mode.log_tau;
    let sd_ls = var_ls.max(0.0).sqrt();
    out.push(HyperSummary {
        name: "sigma2_field".to_string(),
        mode: log_s2.exp(),
        lo: (log_s2 - z * sd_ls).exp(),
        hi: (log_s2 + z * sd_ls).exp(),
    });
    // Range is decreasing in kappa.
    let r_mode = range_from_kappa(mode.kappa(), crate::geo::EARTH_RADIUS_KM);
    out.push(HyperSummary {
        name: "range_km".to_string(),
        mode: r_mode,
        lo: range_from_kappa((mode.log_kappa + z * sd0).exp(), crate::geo::EARTH_RADIUS_KM),
        hi: range_from_kappa((mode.log_kappa - z * sd0).exp(), crate::geo::EARTH_RADIUS_KM),
    });
    out
}

/// DIC and WAIC from the linear predictor at the posterior mean and a set
/// of posterior samples of the linear predictor.
///
/// `DIC = -2 l(eta_mean) + 2 p_D` with
/// `p_D = 2 (l(eta_mean) - mean_s l(eta_s))`;
/// `WAIC = -2 sum_i (log mean_s p(y_i|eta_si) - var_s log p(y_i|eta_si))`.
pub fn dic_waic_from_eta(
    likelihood: Likelihood,
    y: &[f64],
    eta_mean: &[f64],
    eta_samples: &[Vec<f64>],
) -> (f64, f64) {
    let n = y.len();
    let ll_at_mean: f64 = (0..n)
        .map(|i| loglik_terms(likelihood, eta_mean[i], y[i]).0)
        .sum();
    let s = eta_samples.len();
    if s == 0 {
        return (-2.0 * ll_at_mean, f64::NAN);
    }

    let mut ll_totals = vec![0.0; s];
    let mut waic_sum = 0.0;
    for i in 0..n {
        let lls: Vec<f64> = eta_samples
            .iter()
            .map(|eta| loglik_terms(likelihood, eta[i], y[i]).0)
            .collect();
        for (t, &v) in ll_totals.iter_mut().zip(lls.iter()) {
            *t += v;
        }
        let max = lls.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lppd = max + (lls.iter().map(|&v| (v - max).exp()).sum::<f64>() / s as f64).ln();
        let mean_ll = lls.iter().sum::<f64>() / s as f64;
        let var_ll = lls.iter().map(|&v| (v - mean_ll) * (v - mean_ll)).sum::<f64>()
            / (s as f64 - 1.0).max(1.0);
        waic_sum += lppd - var_ll;
    }
    let mean_sample_ll = ll_totals.iter().sum::<f64>() / s as f64;
    let p_d = 2.0 * (ll_at_mean - mean_sample_ll);
    let dic = -2.0 * ll_at_mean + 2.0 * p_d;
    let waic = -2.0 * waic_sum;
    (dic, waic)
}

/// Response-scale effect of a raw-scale covariate change, holding every
/// other predictor at zero (the benchmark scenario).
#[derive(Debug, Clone)]
pub struct ScenarioEffect {
    pub covariate: String,
    /// The change expressed in standardized units.
    pub z: f64,
    pub eta: f64,
    /// Response at the benchmark scenario (`eta = 0`).
    pub baseline: f64,
    /// Response under the scenario.
    pub response: f64,
}

/// Converts a raw-scale covariate change into the implied response-scale
/// effect: `z = raw_delta / raw_sd` standardized units, `eta = beta * z`,
/// mapped through the inverse link.
pub fn scenario_effect(
    fit: &FitResult,
    covariate: &str,
    raw_delta: f64,
    raw_mean: f64,
    raw_sd: f64,
) -> Result<ScenarioEffect> {
    if !(raw_sd > 0.0) {
        return Err(Error::domain("raw sd must be positive".to_string()));
    }
    let beta = fit
        .beta_by_name(covariate)
        .ok_or_else(|| Error::domain(format!("unknown covariate {covariate:?}")))?;
    if covariate == "(intercept)" {
        return Err(Error::domain(
            "scenario effects apply to covariates, not the intercept".to_string(),
        ));
    }
    let new_value = raw_mean + raw_delta;
    let z = (new_value - raw_mean) / raw_sd;
    let eta = beta.mean * z;
    Ok(ScenarioEffect {
        covariate: covariate.to_string(),
        z,
        eta,
        baseline: fit.likelihood.link_inverse(0.0),
        response: fit.likelihood.link_inverse(eta),
    })
}

/// Writes the parameter summary as CSV: `name,mean,sd,q025,q975` for the
/// fixed effects, then one row per hyperparameter (mode reported in the
/// mean column, sd empty).
pub fn write_summary_csv<W: std::io::Write>(fit: &FitResult, out: &mut W) -> Result<()> {
    writeln!(out, "name,mean,sd,q025,q975")?;
    for p in &fit.beta_summary {
        writeln!(
            out,
            "{},{:.17e},{:.17e},{:.17e},{:.17e}",
            p.name, p.mean, p.sd, p.lo, p.hi
        )?;
    }
    for h in &fit.hyper_summary {
        writeln!(out, "{},{:.17e},,{:.17e},{:.17e}", h.name, h.mode, h.lo, h.hi)?;
    }
    Ok(())
}

/// Writes per-node field summaries as CSV: `node,year,mean,sd`, years
/// mapped from slice indices via `first_year`.
pub fn write_field_csv<W: std::io::Write>(
    fit: &FitResult,
    first_year: i32,
    out: &mut W,
) -> Result<()> {
    writeln!(out, "node,year,mean,sd")?;
    let m = fit.n_vertices;
    for t in 0..fit.t_len {
        for v in 0..m {
            let idx = t * m + v;
            writeln!(
                out,
                "{},{},{:.17e},{:.17e}",
                v,
                first_year + t as i32,
                fit.field_mean[idx],
                fit.field_sd[idx]
            )?;
        }
    }
    Ok(())
}
