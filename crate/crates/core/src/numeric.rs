//! Small numerical toolbox shared by the learners and metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Quantile with linear interpolation between order statistics (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

/// Running mean; exact when every value is identical.
pub fn mean(values: &[f64]) -> f64 {
    let mut m = 0.0;
    for (k, &v) in values.iter().enumerate() {
        m += (v - m) / (k + 1) as f64;
    }
    m
}

/// Column means and (population) standard deviations; zero sds are replaced by 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            means.push(m);
            sds.push(if var > 1e-24 { var.sqrt() } else { 1.0 });
        }
        Self { means, sds }
    }

    /// Centring only.
    pub fn center(x: &DMatrix<f64>) -> Self {
        let mut s = Self::fit(x);
        s.sds.iter_mut().for_each(|v| *v = 1.0);
        s
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.means[j]) / self.sds[j])
    }
}

pub fn check_columns(x: &DMatrix<f64>, expected: usize) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch { expected, found: x.ncols() });
    }
    Ok(())
}

/// Objective value, gradient and Hessian at a point, or `None` outside the domain.
pub type Evaluation = Option<(f64, DVector<f64>, DMatrix<f64>)>;

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub name: &'static str,
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub theta: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub iterations: usize,
}

/// Damped Newton ascent on a (locally) concave objective. Each step solves
/// `(-H + mu I) d = g` with `mu` raised until the step increases the objective.
/// Converges when the gradient's Euclidean norm drops below `grad_tol`.
pub fn newton_maximize<F>(theta0: DVector<f64>, f: F, opts: &NewtonOptions) -> Result<NewtonResult>
where
    F: Fn(&DVector<f64>) -> Evaluation,
{
    let (mut value, mut grad, mut hess) = f(&theta0)
        .ok_or_else(|| Error::InvalidArgument(format!("{}: starting point outside the domain", opts.name)))?;
    let mut theta = theta0;
    let mut trace = vec![value];
    for iter in 0..opts.max_iter {
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!("{}: non-finite objective", opts.name)));
        }
        if grad.norm() < opts.grad_tol {
            return Ok(NewtonResult { theta, value, gradient: grad, hessian: hess, iterations: iter });
        }
        let dim = theta.len();
        let neg_h = -&hess;
        let mut mu = 0.0;
        let scale = neg_h.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
        let mut accepted = false;
        for _ in 0..60 {
            let m = &neg_h + DMatrix::identity(dim, dim) * mu;
            let step = m.clone().cholesky().map(|c| c.solve(&grad));
            if let Some(step) = step {
                let cand = &theta + &step;
                if let Some((v, g, h)) = f(&cand) {
                    let tiny = step.norm() <= 1e-13 * (1.0 + theta.norm());
                    if v.is_finite() && (v > value || (tiny && v >= value - 1e-12 * value.abs().max(1.0))) {
                        theta = cand;
                        value = v;
                        grad = g;
                        hess = h;
                        accepted = true;
                        if tiny {
                            // Flat to working precision.
                            return Ok(NewtonResult { theta, value, gradient: grad, hessian: hess, iterations: iter + 1 });
                        }
                        break;
                    }
                }
            }
            mu = if mu == 0.0 { 1e-6 * scale } else { mu * 10.0 };
        }
        trace.push(value);
        if !accepted {
            break;
        }
    }
    if grad.norm() < opts.grad_tol {
        let iterations = trace.len();
        return Ok(NewtonResult { theta, value, gradient: grad, hessian: hess, iterations });
    }
    let tail = trace.len().saturating_sub(5);
    Err(Error::NonConvergence { method: opts.name.to_string(), iterations: opts.max_iter, trace: trace[tail..].to_vec() })
}

/// Objective and gradient, or `None` outside the domain.
pub type GradEvaluation = Option<(f64, DVector<f64>)>;

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
}

/// BFGS minimization with a backtracking Armijo line search.
pub fn bfgs_minimize<F>(x0: DVector<f64>, f: F, grad_tol: f64, max_iter: usize, name: &str) -> Result<BfgsResult>
where
    F: Fn(&DVector<f64>) -> GradEvaluation,
{
    let dim = x0.len();
    let (mut fx, mut g) = f(&x0).ok_or_else(|| Error::InvalidArgument(format!("{name}: starting point outside the domain")))?;
    let mut x = x0;
    let mut h_inv = DMatrix::<f64>::identity(dim, dim);
    let mut trace = vec![fx];
    let mut stalls = 0;
    for iter in 0..max_iter {
        if !fx.is_finite() {
            return Err(Error::Divergence(format!("{name}: non-finite objective")));
        }
        if g.norm() < grad_tol {
            return Ok(BfgsResult { x, value: fx, gradient: g, iterations: iter });
        }
        let mut dir = -(&h_inv * &g);
        if dir.dot(&g) >= 0.0 {
            h_inv = DMatrix::identity(dim, dim);
            dir = -g.clone();
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand = &x + &dir * step;
            if let Some((fc, gc)) = f(&cand) {
                if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                    next = Some((cand, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fxn, gn)) = next else {
            // Line search failed: reset curvature once, then give up.
            if stalls > 0 {
                break;
            }
            stalls += 1;
            h_inv = DMatrix::identity(dim, dim);
            continue;
        };
        stalls = 0;
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(dim, dim);
            let a = &i - &s * y.transpose() * rho;
            let b = &i - &y * s.transpose() * rho;
            h_inv = &a * &h_inv * &b + &s * s.transpose() * rho;
        }
        let converged_f = (fx - fxn).abs() <= 1e-15 * fx.abs().max(1.0) && s.norm() < 1e-12 * (1.0 + x.norm());
        x = xn;
        fx = fxn;
        g = gn;
        trace.push(fx);
        if converged_f {
            return Ok(BfgsResult { x, value: fx, gradient: g, iterations: iter + 1 });
        }
    }
    if g.norm() < grad_tol {
        let iterations = trace.len();
        return Ok(BfgsResult { x, value: fx, gradient: g, iterations });
    }
    let tail = trace.len().saturating_sub(5);
    Err(Error::NonConvergence { method: name.to_string(), iterations: max_iter, trace: trace[tail..].to_vec() })
}

/// Nelder–Mead simplex minimization (standard coefficients).
pub fn nelder_mead<F>(x0: &[f64], step: f64, max_iter: usize, tol: f64, f: F) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for j in 0..dim {
        let mut v = x0.to_vec();
        v[j] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[dim] - values[0]).abs() <= tol {
            break;
        }
        let centroid: Vec<f64> = (0..dim).map(|j| simplex[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64).collect();
        let along = |coef: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[dim]).map(|(c, w)| c + coef * (w - c)).collect()
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
        } else {
            let contracted = if fr < values[dim] { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < values[dim].min(fr) {
                simplex[dim] = contracted;
                values[dim] = fc;
            } else {
                let best = simplex[0].clone();
                for k in 1..=dim {
                    simplex[k] = best.iter().zip(&simplex[k]).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    values[k] = f(&simplex[k]);
                }
            }
        }
    }
    let best = (0..=dim).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best].clone(), values[best])
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Weighted logistic regression by Newton–Raphson.
///
/// `design` holds the regressors (an intercept column must be included by the
/// caller if wanted), `offset` is added to the linear predictor. Subjects with
/// zero weight are ignored.
pub fn weighted_logistic(design: &DMatrix<f64>, y: &[f64], w: &[f64], offset: Option<&[f64]>) -> Result<DVector<f64>> {
    let (n, p) = design.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len().min(w.len()) });
    }
    let off = |i: usize| offset.map_or(0.0, |o| o[i]);
    let eval = |beta: &DVector<f64>| -> Evaluation {
        let mut ll = 0.0;
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let row = design.row(i);
            let eta = row.dot(&beta.transpose()) + off(i);
            // log(1 + e^eta) computed stably
            let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            ll += w[i] * (y[i] * eta - softplus);
            let mu = inv_logit(eta);
            let r = w[i] * (y[i] - mu);
            let v = w[i] * mu * (1.0 - mu);
            for a in 0..p {
                g[a] += r * row[a];
                for b in 0..=a {
                    h[(a, b)] -= v * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        Some((ll, g, h))
    };
    let total_w: f64 = w.iter().sum();
    let opts = NewtonOptions { max_iter: 200, grad_tol: 1e-11 * total_w.max(1.0), name: "logistic regression" };
    let res = newton_maximize(DVector::zeros(p), &eval, &opts)?;
    // a few undamped steps take the estimate to working precision
    let mut theta = res.theta;
    let (mut grad, mut hess) = (res.gradient, res.hessian);
    for _ in 0..4 {
        let Some(step) = (-&hess).cholesky().map(|c| c.solve(&grad)) else { break };
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        theta += &step;
        match eval(&theta) {
            Some((_, g, h)) => (grad, hess) = (g, h),
            None => break,
        }
        if step.norm() <= 1e-15 * (1.0 + theta.norm()) {
            break;
        }
    }
    if theta.norm() > 1e6 {
        return Err(Error::Separation("logistic regression coefficients diverge".into()));
    }
    Ok(theta)
}

/// Restricted (natural) cubic spline basis with linear tails.
///
/// For knots `k_0 < ... < k_{m+1}`, the basis is `v` followed by one term per
/// interior knot,
/// `((v-k_j)_+^3 - l_j (v-k_0)_+^3 - (1-l_j)(v-k_{m+1})_+^3) / (k_{m+1}-k_0)^2`
/// with `l_j = (k_{m+1}-k_j)/(k_{m+1}-k_0)`. No intercept column.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RestrictedCubicSpline {
    pub knots: Vec<f64>,
}

impl RestrictedCubicSpline {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidArgument("a restricted cubic spline needs at least two knots".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InsufficientData("spline knots must be strictly increasing".into()));
        }
        Ok(Self { knots })
    }

    /// Number of basis columns (linear term plus interior terms).
    pub fn dim(&self) -> usize {
        self.knots.len() - 1
    }

    fn bounds(&self) -> (f64, f64, f64) {
        let lo = self.knots[0];
        let hi = *self.knots.last().unwrap();
        (lo, hi, (hi - lo).powi(2))
    }

    pub fn basis(&self, v: f64) -> Vec<f64> {
        let (lo, hi, norm) = self.bounds();
        let cube = |x: f64| if x > 0.0 { x * x * x } else { 0.0 };
        let mut out = Vec::with_capacity(self.dim());
        out.push(v);
        for &k in &self.knots[1..self.knots.len() - 1] {
            let l = (hi - k) / (hi - lo);
            out.push((cube(v - k) - l * cube(v - lo) - (1.0 - l) * cube(v - hi)) / norm);
        }
        out
    }

    pub fn basis_derivative(&self, v: f64) -> Vec<f64> {
        let (lo, hi, norm) = self.bounds();
        let sq = |x: f64| if x > 0.0 { 3.0 * x * x } else { 0.0 };
        let mut out = Vec::with_capacity(self.dim());
        out.push(1.0);
        for &k in &self.knots[1..self.knots.len() - 1] {
            let l = (hi - k) / (hi - lo);
            out.push((sq(v - k) - l * sq(v - lo) - (1.0 - l) * sq(v - hi)) / norm);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let q = project_simplex(&[-1.0, 0.5, 0.7]);
        assert_eq!(q[0], 0.0);
        assert!((q[1] - 0.4).abs() < 1e-12 && (q[2] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn spline_is_linear_beyond_boundaries() {
        let s = RestrictedCubicSpline::new(vec![0.0, 1.0, 2.0, 4.0]).unwrap();
        let d1 = s.basis_derivative(5.0);
        let d2 = s.basis_derivative(9.0);
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.basis(-3.0)[1..].iter().all(|&v| v == 0.0));
        // derivative matches finite differences
        let h = 1e-6;
        for v in [0.3, 1.5, 3.0] {
            let num: Vec<f64> = s.basis(v + h).iter().zip(s.basis(v - h)).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            for (a, b) in num.iter().zip(s.basis_derivative(v)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn nelder_mead_quadratic() {
        let (x, v) = nelder_mead(&[0.0, 0.0], 0.5, 2000, 1e-14, |x| (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2));
        assert!(v < 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] + 2.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]);
            Some((v, g))
        };
        let r = bfgs_minimize(DVector::from_vec(vec![-1.2, 1.0]), f, 1e-9, 1000, "rosenbrock").unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn logistic_matches_closed_form_two_groups() {
        // Saturated two-group model: intercept = logit(p0), slope = logit(p1) - logit(p0).
        let x: Vec<f64> = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let y = vec![1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let design = DMatrix::from_fn(9, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        let beta = weighted_logistic(&design, &y, &[1.0; 9], None).unwrap();
        assert!((beta[0] - logit(0.25)).abs() < 1e-10);
        assert!((beta[1] - (logit(0.6) - logit(0.25))).abs() < 1e-10);
    }
}
