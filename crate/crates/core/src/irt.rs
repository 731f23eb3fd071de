//! One-parameter ogive IRT and hierarchical IRT.
//!
//! Both models share the response log-likelihood
//! `Σ r log Φ(θ_s − β_i) + (1 − r) log(1 − Φ(θ_s − β_i))` and differ in the prior
//! over item difficulties: independent `N(0, v)` for IRT, `β_i ~ N(μ_j(i), σ²)`
//! with `μ_j ~ N(0, τ²)` for HIRT. Students always get `θ_s ~ N(0, 1)`.
//!
//! MAP estimates are found by damped Newton ascent. The Newton system is solved
//! with preconditioned conjugate gradients using Hessian-vector products, so
//! no dense Hessian is ever formed. The preconditioner is exact for each
//! parameter block taken alone: diagonal for θ, and one arrowhead system per
//! group for (β, μ), which keeps the stiff small-σ² and small-τ² limits well
//! conditioned.

use crate::dataio::{Dataset, InteractionRecord};
use crate::error::{Error, Result};
use crate::link::{probit, response_term, PROBABILITY_FLOOR};

/// Bracket for one-dimensional proficiency solves.
pub const THETA_BRACKET: (f64, f64) = (-8.0, 8.0);
const SOLVE_1D_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the sup-norm of the gradient.
    pub gradient_tolerance: f64,
    /// Added to the negative curvature before each Newton solve.
    pub damping: f64,
    pub probability_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            damping: 1e-9,
            probability_floor: PROBABILITY_FLOOR,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Argument("max_iterations must be positive".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Argument("gradient_tolerance must be positive".into()));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::Argument("damping must be non-negative".into()));
        }
        if !(self.probability_floor > 0.0 && self.probability_floor < 0.5) {
            return Err(Error::Argument("probability_floor must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Outcome of a MAP fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub gradient_norm: f64,
    /// Objective value at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit<P> {
    pub params: P,
    pub report: FitReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrtParameters {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl IrtParameters {
    pub fn zeros(n_students: usize, n_items: usize) -> Self {
        Self { theta: vec![0.0; n_students], beta: vec![0.0; n_items] }
    }

    /// `Φ(θ_s − β_i)`, with unknown students or items at the prior mean 0.
    pub fn predict(&self, student: Option<usize>, item: Option<usize>) -> f64 {
        predict_irt(self, student, item)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HirtParameters {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma2: f64,
    pub tau2: f64,
}

impl HirtParameters {
    pub fn zeros(n_students: usize, n_items: usize, n_groups: usize, sigma2: f64, tau2: f64) -> Self {
        Self {
            theta: vec![0.0; n_students],
            beta: vec![0.0; n_items],
            mu: vec![0.0; n_groups],
            sigma2,
            tau2,
        }
    }

    /// The item parameters as a plain IRT parameter set.
    pub fn as_irt(&self) -> IrtParameters {
        IrtParameters { theta: self.theta.clone(), beta: self.beta.clone() }
    }
}

/// Log posterior of IRT (constant dropped) and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct IrtLogPosterior {
    pub value: f64,
    pub grad_theta: Vec<f64>,
    pub grad_beta: Vec<f64>,
}

/// Log posterior of HIRT (constant dropped) and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct HirtLogPosterior {
    pub value: f64,
    pub grad_theta: Vec<f64>,
    pub grad_beta: Vec<f64>,
    pub grad_mu: Vec<f64>,
}

/// `Φ(θ_s − β_i)`; a missing student or item sits at the prior mean 0.
pub fn predict_irt(p: &IrtParameters, student: Option<usize>, item: Option<usize>) -> f64 {
    let theta = student.and_then(|s| p.theta.get(s)).copied().unwrap_or(0.0);
    let beta = item.and_then(|i| p.beta.get(i)).copied().unwrap_or(0.0);
    probit(theta - beta)
}

#[derive(Debug, Clone)]
enum ItemPrior {
    Independent { variance: f64 },
    Grouped { sigma2: f64, tau2: f64, item_group: Vec<u32>, n_groups: usize },
}

/// The objective over the packed vector `[θ; β; μ]`.
struct Posterior<'a> {
    records: &'a [InteractionRecord],
    n_students: usize,
    n_items: usize,
    prior: ItemPrior,
    floor: f64,
}

impl<'a> Posterior<'a> {
    fn irt(d: &'a Dataset, beta_variance: f64, floor: f64) -> Self {
        Self::irt_sized(d, d.n_students(), d.n_items(), beta_variance, floor)
    }

    fn irt_sized(d: &'a Dataset, n_students: usize, n_items: usize, beta_variance: f64, floor: f64) -> Self {
        assert!(
            n_students >= d.n_students() && n_items >= d.n_items(),
            "parameters are not dimensioned for the dataset"
        );
        Self {
            records: d.records(),
            n_students,
            n_items,
            prior: ItemPrior::Independent { variance: beta_variance },
            floor,
        }
    }

    fn hirt(d: &'a Dataset, sigma2: f64, tau2: f64, floor: f64) -> Result<Self> {
        Self::hirt_sized(d, d.n_students(), sigma2, tau2, floor)
    }

    fn hirt_sized(d: &'a Dataset, n_students: usize, sigma2: f64, tau2: f64, floor: f64) -> Result<Self> {
        assert!(n_students >= d.n_students(), "parameters are not dimensioned for the dataset");
        let item_group = d
            .item_groups()
            .iter()
            .enumerate()
            .map(|(i, g)| {
                g.ok_or_else(|| {
                    Error::Structure(format!("item `{}` has no group", d.items().name(i as u32)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            records: d.records(),
            n_students,
            n_items: d.n_items(),
            prior: ItemPrior::Grouped { sigma2, tau2, item_group, n_groups: d.n_groups() },
            floor,
        })
    }

    fn n_groups(&self) -> usize {
        match &self.prior {
            ItemPrior::Independent { .. } => 0,
            ItemPrior::Grouped { n_groups, .. } => *n_groups,
        }
    }

    fn dim(&self) -> usize {
        self.n_students + self.n_items + self.n_groups()
    }

    /// Objective value; fills `grad` and the per-response negative curvature
    /// `weights` when given.
    fn evaluate(&self, x: &[f64], mut grad: Option<&mut [f64]>, mut weights: Option<&mut [f64]>) -> f64 {
        let (theta, rest) = x.split_at(self.n_students);
        let (beta, mu) = rest.split_at(self.n_items);
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut value = 0.0;
        for (k, r) in self.records.iter().enumerate() {
            let s = r.student as usize;
            let i = r.item as usize;
            let term = response_term(theta[s] - beta[i], r.correct, self.floor);
            value += term.value;
            if let Some(g) = grad.as_deref_mut() {
                g[s] += term.d1;
                g[self.n_students + i] -= term.d1;
            }
            if let Some(w) = weights.as_deref_mut() {
                w[k] = -term.d2;
            }
        }

        value -= 0.5 * theta.iter().map(|t| t * t).sum::<f64>();
        if let Some(g) = grad.as_deref_mut() {
            for (gs, t) in g[..self.n_students].iter_mut().zip(theta) {
                *gs -= t;
            }
        }
        match &self.prior {
            ItemPrior::Independent { variance } => {
                value -= 0.5 / variance * beta.iter().map(|b| b * b).sum::<f64>();
                if let Some(g) = grad.as_deref_mut() {
                    for (gi, b) in g[self.n_students..].iter_mut().zip(beta) {
                        *gi -= b / variance;
                    }
                }
            }
            ItemPrior::Grouped { sigma2, tau2, item_group, .. } => {
                let offset_mu = self.n_students + self.n_items;
                let mut item_penalty = 0.0;
                for (i, (&b, &j)) in beta.iter().zip(item_group).enumerate() {
                    let dev = b - mu[j as usize];
                    item_penalty += dev * dev;
                    if let Some(g) = grad.as_deref_mut() {
                        g[self.n_students + i] -= dev / sigma2;
                        g[offset_mu + j as usize] += dev / sigma2;
                    }
                }
                value -= 0.5 / sigma2 * item_penalty;
                value -= 0.5 / tau2 * mu.iter().map(|m| m * m).sum::<f64>();
                if let Some(g) = grad.as_deref_mut() {
                    for (gj, m) in g[offset_mu..].iter_mut().zip(mu) {
                        *gj -= m / tau2;
                    }
                }
            }
        }
        value
    }

    /// `out = (−H + damping·I) v`, with the likelihood part of `H` given by
    /// per-response weights.
    fn neg_hessian_times(&self, weights: &[f64], damping: f64, v: &[f64], out: &mut [f64]) {
        let ns = self.n_students;
        let ni = self.n_items;
        for (o, vi) in out.iter_mut().zip(v) {
            *o = damping * vi;
        }
        for (r, &w) in self.records.iter().zip(weights) {
            let s = r.student as usize;
            let i = ns + r.item as usize;
            let diff = w * (v[s] - v[i]);
            out[s] += diff;
            out[i] -= diff;
        }
        for s in 0..ns {
            out[s] += v[s];
        }
        match &self.prior {
            ItemPrior::Independent { variance } => {
                for i in ns..ns + ni {
                    out[i] += v[i] / variance;
                }
            }
            ItemPrior::Grouped { sigma2, tau2, item_group, .. } => {
                let offset_mu = ns + ni;
                for (i, &j) in item_group.iter().enumerate() {
                    let jj = offset_mu + j as usize;
                    let diff = (v[ns + i] - v[jj]) / sigma2;
                    out[ns + i] += diff;
                    out[jj] -= diff;
                }
                for jj in offset_mu..out.len() {
                    out[jj] += v[jj] / tau2;
                }
            }
        }
    }
}

/// Block preconditioner: exact inverse of each block's own part of the
/// negative Hessian, ignoring the θ–β coupling.
struct Preconditioner {
    theta_diag: Vec<f64>,
    item_diag: Vec<f64>,
    /// For grouped priors: coupling `1/σ²`, members per group, Schur complements.
    grouped: Option<(f64, Vec<Vec<u32>>, Vec<f64>)>,
}

impl Preconditioner {
    fn new(post: &Posterior<'_>, weights: &[f64], damping: f64) -> Self {
        let ns = post.n_students;
        let mut theta_diag = vec![1.0 + damping; ns];
        let mut data_item = vec![0.0; post.n_items];
        for (r, &w) in post.records.iter().zip(weights) {
            theta_diag[r.student as usize] += w;
            data_item[r.item as usize] += w;
        }
        match &post.prior {
            ItemPrior::Independent { variance } => Self {
                theta_diag,
                item_diag: data_item.iter().map(|d| d + 1.0 / variance + damping).collect(),
                grouped: None,
            },
            ItemPrior::Grouped { sigma2, tau2, item_group, n_groups } => {
                let item_diag: Vec<f64> =
                    data_item.iter().map(|d| d + 1.0 / sigma2 + damping).collect();
                let mut members = vec![Vec::new(); *n_groups];
                for (i, &j) in item_group.iter().enumerate() {
                    members[j as usize].push(i as u32);
                }
                // Schur complement of each arrowhead, written to avoid the
                // cancellation between n/σ² and Σ 1/(σ⁴ a_i) when σ² is tiny.
                let schur = members
                    .iter()
                    .map(|m| {
                        1.0 / tau2
                            + damping
                            + m.iter()
                                .map(|&i| {
                                    let a = item_diag[i as usize];
                                    (data_item[i as usize] + damping) / (sigma2 * a)
                                })
                                .sum::<f64>()
                    })
                    .collect();
                Self { theta_diag, item_diag, grouped: Some((1.0 / sigma2, members, schur)) }
            }
        }
    }

    fn apply(&self, ns: usize, r: &[f64], z: &mut [f64]) {
        for s in 0..ns {
            z[s] = r[s] / self.theta_diag[s];
        }
        let ni = self.item_diag.len();
        match &self.grouped {
            None => {
                for i in 0..ni {
                    z[ns + i] = r[ns + i] / self.item_diag[i];
                }
            }
            Some((coupling, members, schur)) => {
                let offset_mu = ns + ni;
                for (j, m) in members.iter().enumerate() {
                    // [A b; bᵀ c] with b_i = −1/σ².
                    let mut rhs = r[offset_mu + j];
                    for &i in m {
                        rhs += coupling * r[ns + i as usize] / self.item_diag[i as usize];
                    }
                    let y = rhs / schur[j];
                    z[offset_mu + j] = y;
                    for &i in m {
                        let i = i as usize;
                        z[ns + i] = (r[ns + i] + coupling * y) / self.item_diag[i];
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `(−H + damping·I) d = g` by preconditioned conjugate gradients.
fn newton_direction(post: &Posterior<'_>, weights: &[f64], damping: f64, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let pre = Preconditioner::new(post, weights, damping);
    let g_norm = dot(g, g).sqrt();
    // Inexact Newton forcing term.
    let tol = g_norm * g_norm.sqrt().min(1e-2).max(1e-12);
    let mut d = vec![0.0; n];
    let mut r = g.to_vec();
    let mut z = vec![0.0; n];
    pre.apply(post.n_students, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..(4 * n).clamp(50, 2000) {
        post.neg_hessian_times(weights, damping, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            d[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dot(&r, &r).sqrt() <= tol {
            break;
        }
        pre.apply(post.n_students, &r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if dot(&d, g) <= 0.0 {
        // Fall back to a preconditioned gradient step.
        pre.apply(post.n_students, g, &mut d);
    }
    d
}

fn maximize(post: &Posterior<'_>, opts: &FitOptions) -> Result<(Vec<f64>, FitReport)> {
    opts.validate()?;
    let n = post.dim();
    let mut x = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut weights = vec![0.0; post.records.len()];
    let mut value = post.evaluate(&x, Some(&mut grad), Some(&mut weights));
    if !value.is_finite() {
        return Err(Error::Divergence { iteration: 0, message: "non-finite objective".into() });
    }
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut converged = sup_norm(&grad) <= opts.gradient_tolerance;
    let mut x_trial = vec![0.0; n];
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let dir = newton_direction(post, &weights, opts.damping, &grad);
        let slope = dot(&dir, &grad);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for k in 0..n {
                x_trial[k] = x[k] + step * dir[k];
            }
            let trial = post.evaluate(&x_trial, None, None);
            if !trial.is_finite() {
                return Err(Error::Divergence {
                    iteration: iterations,
                    message: "non-finite objective during line search".into(),
                });
            }
            if trial >= value + 1e-4 * step * slope {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(new_value) = accepted else {
            // No ascent is representable in floating point from here.
            break;
        };
        std::mem::swap(&mut x, &mut x_trial);
        value = post.evaluate(&x, Some(&mut grad), Some(&mut weights));
        debug_assert!(value >= new_value - 1e-9 * new_value.abs().max(1.0));
        trace.push(value);
        converged = sup_norm(&grad) <= opts.gradient_tolerance;
    }
    let report = FitReport {
        iterations,
        converged,
        objective: value,
        gradient_norm: sup_norm(&grad),
        objective_trace: trace,
    };
    Ok((x, report))
}

/// IRT log posterior with `θ ~ N(0,1)`, `β ~ N(0,1)`.
pub fn irt_log_posterior(p: &IrtParameters, d: &Dataset) -> IrtLogPosterior {
    irt_log_posterior_with_beta_variance(p, d, 1.0)
}

/// IRT log posterior with `β ~ N(0, beta_variance)`.
pub fn irt_log_posterior_with_beta_variance(
    p: &IrtParameters,
    d: &Dataset,
    beta_variance: f64,
) -> IrtLogPosterior {
    let post =
        Posterior::irt_sized(d, p.theta.len(), p.beta.len(), beta_variance, PROBABILITY_FLOOR);
    let x: Vec<f64> = p.theta.iter().chain(&p.beta).copied().collect();
    let mut g = vec![0.0; x.len()];
    let value = post.evaluate(&x, Some(&mut g), None);
    let grad_beta = g.split_off(p.theta.len());
    IrtLogPosterior { value, grad_theta: g, grad_beta }
}

pub fn hirt_log_posterior(p: &HirtParameters, d: &Dataset) -> Result<HirtLogPosterior> {
    if p.beta.len() != d.n_items() || p.mu.len() != d.n_groups() {
        return Err(Error::Structure("parameters are not dimensioned for the dataset".into()));
    }
    let post = Posterior::hirt_sized(d, p.theta.len(), p.sigma2, p.tau2, PROBABILITY_FLOOR)?;
    let x: Vec<f64> = p.theta.iter().chain(&p.beta).chain(&p.mu).copied().collect();
    let mut g = vec![0.0; x.len()];
    let value = post.evaluate(&x, Some(&mut g), None);
    let grad_mu = g.split_off(p.theta.len() + d.n_items());
    let grad_beta = g.split_off(p.theta.len());
    Ok(HirtLogPosterior { value, grad_theta: g, grad_beta, grad_mu })
}

/// MAP fit of IRT with standard normal priors.
pub fn fit_irt(d: &Dataset, opts: &FitOptions) -> Result<Fit<IrtParameters>> {
    fit_irt_with_beta_variance(d, 1.0, opts)
}

/// MAP fit of IRT with `β ~ N(0, beta_variance)`.
pub fn fit_irt_with_beta_variance(
    d: &Dataset,
    beta_variance: f64,
    opts: &FitOptions,
) -> Result<Fit<IrtParameters>> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(beta_variance > 0.0) {
        return Err(Error::Argument("beta variance must be positive".into()));
    }
    let post = Posterior::irt(d, beta_variance, opts.probability_floor);
    let (mut x, report) = maximize(&post, opts)?;
    let beta = x.split_off(d.n_students());
    Ok(Fit { params: IrtParameters { theta: x, beta }, report })
}

/// MAP fit of hierarchical IRT with fixed `sigma2` and `tau2`.
pub fn fit_hirt(d: &Dataset, sigma2: f64, tau2: f64, opts: &FitOptions) -> Result<Fit<HirtParameters>> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(sigma2 > 0.0 && tau2 > 0.0) {
        return Err(Error::Argument("sigma2 and tau2 must be positive".into()));
    }
    let post = Posterior::hirt(d, sigma2, tau2, opts.probability_floor)?;
    let (mut x, report) = maximize(&post, opts)?;
    let mu = x.split_off(d.n_students() + d.n_items());
    let beta = x.split_off(d.n_students());
    Ok(Fit { params: HirtParameters { theta: x, beta, mu, sigma2, tau2 }, report })
}

/// Maximizes a strictly concave function of one variable on
/// [`THETA_BRACKET`] given a closure returning `(gradient, curvature)`.
/// Newton steps that leave the current bracket are replaced by bisection.
pub fn maximize_concave_1d(start: f64, mut derivs: impl FnMut(f64) -> (f64, f64)) -> f64 {
    let (mut lo, mut hi) = THETA_BRACKET;
    let mut x = start.clamp(lo, hi);
    for _ in 0..200 {
        let (g, c) = derivs(x);
        if g == 0.0 {
            return x;
        }
        if g > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = if c < 0.0 { x - g / c } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= SOLVE_1D_TOLERANCE || hi - lo <= SOLVE_1D_TOLERANCE {
            return next;
        }
        x = next;
    }
    x
}

/// MAP proficiency of one student given frozen difficulties for each past
/// response, under the `N(0, 1)` prior. Empty history gives 0.
pub fn refit_student(history: &[(f64, bool)], floor: f64) -> f64 {
    refit_student_from(0.0, history, floor)
}

/// [`refit_student`] warm-started at `start`.
pub fn refit_student_from(start: f64, history: &[(f64, bool)], floor: f64) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    maximize_concave_1d(start, |theta| {
        let mut g = -theta;
        let mut c = -1.0;
        for &(beta, correct) in history {
            let t = response_term(theta - beta, correct, floor);
            g += t.d1;
            c += t.d2;
        }
        (g, c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, parse_canonical, SyntheticConfig};

    fn data(src: &str) -> Dataset {
        parse_canonical(format!("student_id,item_id,group_id,correct\n{src}").as_bytes()).unwrap()
    }

    fn grid_argmax(f: impl Fn(f64) -> f64) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut k = -30000i64;
        while k <= 30000 {
            let x = k as f64 * 1e-4;
            let v = f(x);
            if v > best.0 {
                best = (v, x);
            }
            k += 1;
        }
        best.1
    }

    #[test]
    fn single_response_log_posterior() {
        let d = data("a,x,,1\n");
        let lp = irt_log_posterior(&IrtParameters::zeros(1, 1), &d);
        assert!((lp.value - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn prior_only_student() {
        let d = data("a,x,,1\n");
        // A second student with no responses contributes only its prior.
        let p = IrtParameters { theta: vec![0.0, 1.0], beta: vec![0.0] };
        let lp = irt_log_posterior(&p, &d);
        assert!((lp.value - (0.5f64.ln() - 0.5)).abs() < 1e-15);
        assert_eq!(lp.grad_theta[1], -1.0);
    }

    #[test]
    fn hirt_prior_penalty() {
        let d = data("a,x,g,1\n");
        let mut p = HirtParameters::zeros(1, 1, 1, 1.0, 1.0);
        let base = hirt_log_posterior(&p, &d).unwrap().value;
        assert!((base - 0.5f64.ln()).abs() < 1e-15);
        p.beta[0] = 1.0;
        let shifted = hirt_log_posterior(&p, &d).unwrap().value;
        let ll = response_term(-1.0, true, PROBABILITY_FLOOR).value;
        assert!((shifted - (ll - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn hirt_requires_groups() {
        let d = data("a,x,,1\n");
        assert!(matches!(
            fit_hirt(&d, 1.0, 1.0, &FitOptions::default()),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn one_by_one_matches_grid_search() {
        let d = data("a,x,,1\n");
        let fit = fit_irt(&d, &FitOptions::default()).unwrap();
        assert!(fit.report.converged);
        let (theta, beta) = (fit.params.theta[0], fit.params.beta[0]);
        assert!((theta + beta).abs() < 1e-9);
        // On the slice θ = −β = u the objective is log Φ(2u) − u².
        let u = grid_argmax(|u| probit(2.0 * u).ln() - u * u);
        assert!((theta - u).abs() < 1e-3, "{theta} vs {u}");
    }

    #[test]
    fn symmetric_student_sits_at_zero() {
        let d = data("a,x,,1\na,x,,0\na,y,,1\na,y,,0\nb,x,,1\nb,y,,0\n");
        let fit = fit_irt(&d, &FitOptions::default()).unwrap();
        assert!(fit.report.converged);
        assert!(fit.params.theta[0].abs() < 1e-9);
    }

    #[test]
    fn objective_is_monotone() {
        let (d, _) = generate_synthetic(&SyntheticConfig::new(30, 10, 20, 4)).unwrap();
        let fit = fit_irt(&d, &FitOptions::default()).unwrap();
        assert!(fit.report.converged);
        assert!(fit.report.objective_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn refit_cases() {
        assert_eq!(refit_student(&[], PROBABILITY_FLOOR), 0.0);
        let one = refit_student(&[(0.0, true)], PROBABILITY_FLOOR);
        let oracle = grid_argmax(|t| probit(t).ln() - 0.5 * t * t);
        assert!((one - oracle).abs() < 1e-3);
        let hist: Vec<_> = (0..6).map(|k| (0.0, k % 2 == 0)).collect();
        assert!(refit_student(&hist, PROBABILITY_FLOOR).abs() < 1e-12);
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let hist: Vec<(f64, bool)> =
            (0..40).map(|k| ((k as f64 * 0.37).sin(), (k * 7) % 3 != 0)).collect();
        let cold = refit_student(&hist, PROBABILITY_FLOOR);
        for start in [-5.0, -0.3, 0.9, 7.5] {
            let warm = refit_student_from(start, &hist, PROBABILITY_FLOOR);
            assert!((warm - cold).abs() < 1e-10);
        }
    }

    #[test]
    fn predictions() {
        let p = IrtParameters { theta: vec![1.0, 0.0], beta: vec![0.0, 2.0] };
        assert!((predict_irt(&p, Some(0), Some(0)) - 0.8413).abs() < 1e-4);
        assert!((predict_irt(&p, Some(1), Some(1)) - 0.0228).abs() < 1e-4);
        assert_eq!(predict_irt(&p, Some(1), Some(0)), 0.5);
        assert_eq!(predict_irt(&p, None, None), 0.5);
    }

    #[test]
    fn rejects_bad_options() {
        let d = data("a,x,,1\n");
        let opts = FitOptions { probability_floor: 0.7, ..FitOptions::default() };
        assert!(matches!(fit_irt(&d, &opts), Err(Error::Argument(_))));
    }
}
