use super::{nll, softmax, CalibrationError, Calibrator, Method, Result, PROB_FLOOR};

/// Full-batch gradient descent settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    pub max_iters: usize,
    /// Stop once an accepted step lowers the objective by less than this.
    pub tolerance: f64,
    pub initial_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Ridge on the off-diagonal entries of the matrix method.
    pub matrix_ridge: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tolerance: 1e-10,
            initial_step: 1.0,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            matrix_ridge: 1e-4,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CalibrationError::InvalidConfig(m.into()));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo must lie in (0, 1)");
        }
        if !(self.matrix_ridge >= 0.0) {
            return bad("matrix_ridge must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFit {
    pub calibrator: Calibrator,
    /// Validation NLL of `calibrator`.
    pub nll: f64,
    /// Validation NLL of the identity calibrator.
    pub identity_nll: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    method: Method,
    k: usize,
    logits: &'a [Vec<f64>],
    labels: &'a [usize],
    ridge: f64,
}

impl Problem<'_> {
    fn initial(&self) -> Vec<f64> {
        let k = self.k;
        match self.method {
            Method::Temperature => vec![0.0],
            Method::Bcts => vec![0.0; 1 + k],
            Method::Vector => [vec![1.0; k], vec![0.0; k]].concat(),
            Method::Matrix => {
                let mut v = vec![0.0; k * k + k];
                for i in 0..k {
                    v[i * k + i] = 1.0;
                }
                v
            }
        }
    }

    fn calibrator(&self, theta: &[f64]) -> Calibrator {
        let k = self.k;
        match self.method {
            Method::Temperature => Calibrator::Temperature { t: theta[0].exp() },
            Method::Bcts => Calibrator::Bcts {
                t: theta[0].exp(),
                b: theta[1..].to_vec(),
            },
            Method::Vector => Calibrator::Vector {
                w: theta[..k].to_vec(),
                b: theta[k..].to_vec(),
            },
            Method::Matrix => Calibrator::Matrix {
                w: theta[..k * k].chunks(k).map(<[f64]>::to_vec).collect(),
                b: theta[k * k..].to_vec(),
            },
        }
    }

    /// Objective (NLL plus any ridge) and its gradient.
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let k = self.k;
        let n = self.logits.len() as f64;
        let mut grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        let mut u = vec![0.0; k];
        let inv_t = match self.method {
            Method::Temperature | Method::Bcts => (-theta[0]).exp(),
            _ => 1.0,
        };
        for (z, &y) in self.logits.iter().zip(self.labels) {
            for i in 0..k {
                u[i] = match self.method {
                    Method::Temperature => z[i] * inv_t,
                    Method::Bcts => z[i] * inv_t + theta[1 + i],
                    Method::Vector => theta[i] * z[i] + theta[k + i],
                    Method::Matrix => {
                        let row = &theta[i * k..(i + 1) * k];
                        row.iter().zip(z).map(|(a, v)| a * v).sum::<f64>() + theta[k * k + i]
                    }
                };
            }
            let p = softmax(&u);
            loss -= p[y].max(PROB_FLOOR).ln();
            for i in 0..k {
                let g = (p[i] - if i == y { 1.0 } else { 0.0 }) / n;
                match self.method {
                    Method::Temperature => grad[0] -= g * z[i] * inv_t,
                    Method::Bcts => {
                        grad[0] -= g * z[i] * inv_t;
                        grad[1 + i] += g;
                    }
                    Method::Vector => {
                        grad[i] += g * z[i];
                        grad[k + i] += g;
                    }
                    Method::Matrix => {
                        for j in 0..k {
                            grad[i * k + j] += g * z[j];
                        }
                        grad[k * k + i] += g;
                    }
                }
            }
        }
        loss /= n;
        if self.method == Method::Matrix && self.ridge > 0.0 {
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        let w = theta[i * k + j];
                        loss += self.ridge * w * w;
                        grad[i * k + j] += 2.0 * self.ridge * w;
                    }
                }
            }
        }
        (loss, grad)
    }
}

/// Fits `method` by minimizing validation NLL with backtracking gradient
/// descent started at the identity calibrator. Hitting `max_iters` returns
/// the best point found with `converged == false`.
pub fn fit_calibrator(
    method: Method,
    logits: &[Vec<f64>],
    labels: &[usize],
    cfg: &OptConfig,
) -> Result<CalibrationFit> {
    cfg.validate()?;
    if logits.len() != labels.len() {
        return Err(CalibrationError::ShapeMismatch(format!(
            "{} logit rows vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let k = logits.first().map(Vec::len).unwrap_or(0);
    if k < 2 {
        return Err(CalibrationError::ShapeMismatch("need at least two classes".into()));
    }
    for (row, &y) in logits.iter().zip(labels) {
        if row.len() != k {
            return Err(CalibrationError::DimensionMismatch {
                expected: k,
                got: row.len(),
            });
        }
        if y >= k {
            return Err(CalibrationError::ShapeMismatch(format!(
                "label {y} outside {k} classes"
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CalibrationError::ShapeMismatch("non-finite logit".into()));
        }
    }
    if logits.len() < k {
        return Err(CalibrationError::ShapeMismatch(format!(
            "{} validation rows for {k} classes",
            logits.len()
        )));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(CalibrationError::DegenerateValidation);
    }

    let problem = Problem {
        method,
        k,
        logits,
        labels,
        ridge: cfg.matrix_ridge,
    };
    let mut theta = problem.initial();
    let (mut f, mut g) = problem.eval(&theta);
    let mut step = cfg.initial_step;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = None;
        let mut t = step;
        for _ in 0..cfg.max_backtracks {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(x, d)| x - t * d).collect();
            let (fc, gc) = problem.eval(&cand);
            if fc.is_finite() && fc <= f - cfg.armijo * t * gg {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= cfg.backtrack;
        }
        let Some((cand, fc, gc)) = accepted else {
            // No representable decrease remains along the gradient.
            converged = gg.sqrt() < 1e-6;
            break;
        };
        let decrease = f - fc;
        theta = cand;
        f = fc;
        g = gc;
        step = t * 2.0;
        if decrease < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let identity = Calibrator::identity(method, k);
    let identity_nll = nll(&super::apply_calibrator_batch(&identity, logits)?, labels)?;
    let calibrator = problem.calibrator(&theta);
    let fitted_nll = nll(&super::apply_calibrator_batch(&calibrator, logits)?, labels)?;
    let (calibrator, fitted_nll) = if fitted_nll <= identity_nll {
        (calibrator, fitted_nll)
    } else {
        (identity, identity_nll)
    };
    Ok(CalibrationFit {
        calibrator,
        nll: fitted_nll,
        identity_nll,
        iterations,
        converged,
    })
}
