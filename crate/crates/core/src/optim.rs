//! Derivative-free maximization and posterior exploration over a small
//! transformed hyperparameter space.

use crate::error::{Error, Result};

/// Convergence tolerance on the objective spread across the simplex.
pub const SIMPLEX_TOL: f64 = 1e-5;

/// Convergence tolerance on the coordinate spread of the simplex; keeps
/// the reported mode accurate to ~1e-4 per coordinate even when the
/// objective tolerance is met early.
pub const SIMPLEX_X_TOL: f64 = 5e-5;

/// Result of a Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Budget-tracked objective evaluator. Exceeding the budget yields a
/// budget error carrying the best point seen so far.
pub struct BudgetedObjective<'a> {
    f: Box<dyn FnMut(&[f64]) -> Result<f64> + 'a>,
    budget: usize,
    evals: usize,
    best: Option<(Vec<f64>, f64)>,
}

impl<'a> BudgetedObjective<'a> {
    pub fn new(f: impl FnMut(&[f64]) -> Result<f64> + 'a, budget: usize) -> Self {
        BudgetedObjective {
            f: Box::new(f),
            budget,
            evals: 0,
            best: None,
        }
    }

    pub fn evals(&self) -> usize {
        self.evals
    }

    pub fn eval(&mut self, x: &[f64]) -> Result<f64> {
        if self.evals >= self.budget {
            let (best_point, best_value) = self.best.clone().unwrap_or((x.to_vec(), f64::NAN));
            return Err(Error::EvalBudget {
                budget: self.budget,
                best_point,
                best_value,
            });
        }
        self.evals += 1;
        let v = (self.f)(x)?;
        if self.best.as_ref().map_or(true, |&(_, bv)| v > bv) {
            self.best = Some((x.to_vec(), v));
        }
        Ok(v)
    }
}

/// Nelder-Mead maximization with standard reflection/expansion/contraction
/// coefficients. Converges when the simplex objective spread falls below
/// `tol`; errors if already out of budget.
pub fn nelder_mead_max(
    obj: &mut BudgetedObjective,
    x0: &[f64],
    init_step: f64,
    tol: f64,
) -> Result<NmResult> {
    let dim = x0.len();
    assert!(dim >= 1);
    let (alpha, gamma, beta, sigma) = (1.0, 2.0, 0.5, 0.5);

    // Simplex of dim+1 points, tracked with objective values.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = obj.eval(x0)?;
    simplex.push((x0.to_vec(), v0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += init_step;
        let v = obj.eval(&x)?;
        simplex.push((x, v));
    }

    loop {
        // Descending by value: best first (maximization).
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = simplex[0].1 - simplex[dim].1;
        let x_spread = (0..dim)
            .map(|j| {
                let lo = simplex.iter().map(|(x, _)| x[j]).fold(f64::INFINITY, f64::min);
                let hi = simplex.iter().map(|(x, _)| x[j]).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0f64, f64::max);
        if spread.abs() < tol && x_spread < SIMPLEX_X_TOL {
            return Ok(NmResult {
                x: simplex[0].0.clone(),
                value: simplex[0].1,
                evals: obj.evals(),
            });
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let at = |t: f64| -> Vec<f64> {
            (0..dim)
                .map(|j| centroid[j] + t * (centroid[j] - worst.0[j]))
                .collect()
        };

        let xr = at(alpha);
        let vr = obj.eval(&xr)?;
        if vr > simplex[0].1 {
            let xe = at(gamma);
            let ve = obj.eval(&xe)?;
            simplex[dim] = if ve > vr { (xe, ve) } else { (xr, vr) };
            continue;
        }
        if vr > simplex[dim - 1].1 {
            simplex[dim] = (xr, vr);
            continue;
        }
        let xc = at(-beta);
        let vc = obj.eval(&xc)?;
        if vc > worst.1 {
            simplex[dim] = (xc, vc);
            continue;
        }
        // Shrink toward the best point.
        let best = simplex[0].0.clone();
        for k in 1..=dim {
            let x: Vec<f64> = (0..dim)
                .map(|j| best[j] + sigma * (simplex[k].0[j] - best[j]))
                .collect();
            let v = obj.eval(&x)?;
            simplex[k] = (x, v);
        }
    }
}

/// Central-difference Hessian of `f` at `x`.
pub fn finite_difference_hessian(
    obj: &mut BudgetedObjective,
    x: &[f64],
    h: f64,
) -> Result<nalgebra::DMatrix<f64>> {
    let d = x.len();
    let f0 = obj.eval(x)?;
    let mut hess = nalgebra::DMatrix::zeros(d, d);
    let shifted = |steps: &[(usize, f64)], obj: &mut BudgetedObjective| -> Result<f64> {
        let mut xs = x.to_vec();
        for &(i, s) in steps {
            xs[i] += s;
        }
        obj.eval(&xs)
    };
    for i in 0..d {
        let fp = shifted(&[(i, h)], obj)?;
        let fm = shifted(&[(i, -h)], obj)?;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..d {
            let fpp = shifted(&[(i, h), (j, h)], obj)?;
            let fpm = shifted(&[(i, h), (j, -h)], obj)?;
            let fmp = shifted(&[(i, -h), (j, h)], obj)?;
            let fmm = shifted(&[(i, -h), (j, -h)], obj)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// A point of the posterior exploration grid with its normalized weight.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub x: Vec<f64>,
    pub log_value: f64,
    pub weight: f64,
}

/// Exploration summary: the mode, the covariance of the Gaussian
/// approximation at the mode (from the negated finite-difference Hessian),
/// and the weighted grid.
#[derive(Debug, Clone)]
pub struct Exploration {
    pub mode: Vec<f64>,
    pub mode_value: f64,
    pub covariance: nalgebra::DMatrix<f64>,
    pub grid: Vec<GridPoint>,
    pub evals: usize,
}

/// Maximizes `f`, then builds a 3-point-per-axis exploration grid: the
/// mode plus one point at +/- one standard deviation along each
/// eigen-direction of the Gaussian approximation, with weights
/// proportional to the posterior values, normalized to sum 1.
pub fn explore_posterior(
    f: impl FnMut(&[f64]) -> Result<f64>,
    x0: &[f64],
    init_step: f64,
    budget: usize,
) -> Result<Exploration> {
    let mut obj = BudgetedObjective::new(f, budget);
    let nm = nelder_mead_max(&mut obj, x0, init_step, SIMPLEX_TOL)?;
    let d = x0.len();

    let hess = finite_difference_hessian(&mut obj, &nm.x, 0.05)?;
    // Negated Hessian of the log-posterior is the precision of the
    // Gaussian approximation; clamp eigenvalues so flat or slightly
    // indefinite directions still give finite steps.
    let eig = nalgebra::SymmetricEigen::new(-hess);
    let mut cov = nalgebra::DMatrix::zeros(d, d);
    let mut steps: Vec<(Vec<f64>, f64)> = Vec::new(); // (direction, sd)
    for k in 0..d {
        let lambda = eig.eigenvalues[k].max(1e-4);
        let sd = (1.0 / lambda).sqrt();
        let dir: Vec<f64> = (0..d).map(|j| eig.eigenvectors[(j, k)]).collect();
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += dir[i] * dir[j] / lambda;
            }
        }
        steps.push((dir, sd));
    }

    let mut grid: Vec<GridPoint> = vec![GridPoint {
        x: nm.x.clone(),
        log_value: nm.value,
        weight: 0.0,
    }];
    for (dir, sd) in &steps {
        for sign in [-1.0, 1.0] {
            let x: Vec<f64> = (0..d).map(|j| nm.x[j] + sign * sd * dir[j]).collect();
            let v = obj.eval(&x)?;
            grid.push(GridPoint {
                x,
                log_value: v,
                weight: 0.0,
            });
        }
    }
    let max_v = grid
        .iter()
        .map(|g| g.log_value)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = grid.iter().map(|g| (g.log_value - max_v).exp()).sum();
    for g in &mut grid {
        g.weight = (g.log_value - max_v).exp() / total;
    }

    Ok(Exploration {
        mode: nm.x,
        mode_value: nm.value,
        covariance: cov,
        grid,
        evals: obj.evals(),
    })
}
