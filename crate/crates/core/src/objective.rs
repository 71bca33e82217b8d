//! Logistic risk, structured penalty, their sum, the risk gradient, and the
//! matching unnormalized log-posterior.
//!
//! Per-sample sums (risk, log-likelihood, the intercept gradient) are reduced
//! sequentially in sample order. Matrix-vector and matrix-matrix products go
//! through ndarray's single-threaded kernels, so every evaluation is
//! reproducible bit for bit.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};

use crate::data::Design;
use crate::error::{Error, Result};
use crate::groups::GroupStructure;
use crate::params::{GradientVector, Hyperparameters, ParameterSet, Variant};
use crate::scalar::Scalar;

/// `S = risk + penalty`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue<T> {
    pub risk: T,
    pub penalty: T,
    pub total: T,
}

/// Logistic function; rejects NaN.
pub fn sigmoid<T: Scalar>(t: T) -> Result<T> {
    if t.is_nan() {
        return Err(Error::NotANumber("sigmoid argument"));
    }
    Ok(logistic(t))
}

/// Branches on the sign so `exp` only ever sees a non-positive argument.
#[inline]
pub(crate) fn logistic<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^m)` without overflow.
#[inline]
pub fn log1p_exp<T: Scalar>(m: T) -> T {
    if m > T::zero() {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

/// Linear predictor for one sample with expanded genetic vector `xg`.
///
/// Computes `xg^T W^T xi + beta_I^T xi + beta_G^T xg + beta0`, dropping the
/// blocks the variant excludes.
pub fn linear_predictor<T: Scalar>(
    p: &ParameterSet<T>,
    xg: ArrayView1<T>,
    xi: ArrayView1<T>,
    variant: Variant,
) -> Result<T> {
    p.check_dims(xi.len(), xg.len())?;
    let mut m = p.beta0;
    if variant.uses_interaction() {
        m = m + xi.dot(&p.w.dot(&xg));
    }
    if variant.uses_main_effects() {
        m = m + p.beta_i.dot(&xi) + p.beta_g.dot(&xg);
    }
    Ok(m)
}

/// Linear predictors of every sample of the design.
pub fn linear_predictors<T: Scalar>(p: &ParameterSet<T>, d: &Design<T>) -> Result<Array1<T>> {
    d.check_params(p)?;
    let mut m = d.imaging.dot(&p.beta_i) + d.genetic.dot(&p.beta_g);
    m.mapv_inplace(|x| x + p.beta0);
    if p.w.iter().any(|x| !x.is_zero()) {
        let (coef, offset) = match &d.cross {
            None => (p.w.clone(), T::zero()),
            Some(c) => {
                let v = &p.w * &c.inv_scale;
                let off = Zip::from(&v).and(&c.mean).fold(T::zero(), |a, &x, &mu| a + x * mu);
                (v, off)
            }
        };
        // (N x G) . (G x I), then a row-wise dot with the imaging features
        let t = d.genetic.dot(&coef.t());
        Zip::from(&mut m)
            .and(t.rows())
            .and(d.imaging.rows())
            .for_each(|mk, tk, xk| *mk = *mk + tk.dot(&xk) - offset);
    }
    Ok(m)
}

fn risk_from_predictors<T: Scalar>(m: &Array1<T>, y: &Array1<T>) -> T {
    let n = T::lit(m.len() as f64);
    let mut acc = T::zero();
    for (&mk, &yk) in m.iter().zip(y.iter()) {
        acc = acc + (log1p_exp(mk) - yk * mk);
    }
    acc / n
}

/// Mean logistic loss `(1/N) sum_k [-y_k m_k + log(1 + e^{m_k})]`.
pub fn risk<T: Scalar>(p: &ParameterSet<T>, d: &Design<T>) -> Result<T> {
    if d.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(risk_from_predictors(&linear_predictors(p, d)?, &d.labels))
}

/// `sum_i sum_l theta_l ||W[i, G_l]||_2`.
pub fn interaction_group_norm<T: Scalar>(w: &Array2<T>, gs: &GroupStructure<T>) -> T {
    let mut acc = T::zero();
    for row in w.rows() {
        acc = acc + weighted_group_norm(row, gs);
    }
    acc
}

/// `sum_l theta_l ||v[G_l]||_2` for an expanded vector.
pub fn weighted_group_norm<T: Scalar>(v: ArrayView1<T>, gs: &GroupStructure<T>) -> T {
    let mut acc = T::zero();
    for l in 0..gs.n_groups() {
        let r = gs.block_range(l);
        let block = v.slice(ndarray::s![r]);
        acc = acc + gs.weights()[l] * block.dot(&block).sqrt();
    }
    acc
}

/// `lambda_W * sum theta ||W_{i,G_l}|| + lambda_I ||beta_I||^2 + lambda_G * sum theta ||beta_{G_l}||`.
pub fn penalty<T: Scalar>(
    p: &ParameterSet<T>,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
) -> Result<T> {
    p.check_dims(p.n_imaging(), gs.expanded_size())?;
    Ok(h.lambda_w * interaction_group_norm(&p.w, gs)
        + h.lambda_i * p.beta_i.dot(&p.beta_i)
        + h.lambda_g * weighted_group_norm(p.beta_g.view(), gs))
}

/// Gradient of the risk.
///
/// The interaction block is `(1/N) sum_k r_k z_k` with `r_k = sigma(m_k) - y_k`
/// and `z_k` the (possibly standardized) outer product of imaging and expanded
/// genetic features; it is formed as one `|I| x N` by `N x |G|` product, never
/// storing per-sample outer products.
pub fn gradient<T: Scalar>(p: &ParameterSet<T>, d: &Design<T>) -> Result<GradientVector<T>> {
    if d.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    let m = linear_predictors(p, d)?;
    Ok(gradient_from_predictors(&m, d))
}

pub(crate) fn gradient_from_predictors<T: Scalar>(m: &Array1<T>, d: &Design<T>) -> GradientVector<T> {
    let inv_n = T::one() / T::lit(d.n_samples() as f64);
    let r: Array1<T> = Zip::from(m).and(&d.labels).map_collect(|&mk, &yk| logistic(mk) - yk);
    let mut r_sum = T::zero();
    for &rk in r.iter() {
        r_sum = r_sum + rk;
    }
    let beta0 = r_sum * inv_n;
    let beta_i = d.imaging.t().dot(&r) * inv_n;
    let beta_g = d.genetic.t().dot(&r) * inv_n;
    let weighted = &d.imaging * &r.view().insert_axis(Axis(1));
    let mut w = weighted.t().dot(&d.genetic) * inv_n;
    if let Some(c) = &d.cross {
        Zip::from(&mut w)
            .and(&c.mean)
            .and(&c.inv_scale)
            .for_each(|g, &mu, &s| *g = (*g - mu * beta0) * s);
    }
    GradientVector {
        blocks: ParameterSet {
            w,
            beta_i,
            beta_g,
            beta0,
        },
    }
}

/// Risk and gradient from a single pass over the predictors.
pub(crate) fn risk_and_gradient<T: Scalar>(
    p: &ParameterSet<T>,
    d: &Design<T>,
) -> Result<(T, GradientVector<T>)> {
    if d.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    let m = linear_predictors(p, d)?;
    Ok((risk_from_predictors(&m, &d.labels), gradient_from_predictors(&m, d)))
}

pub fn objective<T: Scalar>(
    p: &ParameterSet<T>,
    d: &Design<T>,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
) -> Result<ObjectiveValue<T>> {
    let risk = risk(p, d)?;
    let penalty = penalty(p, gs, h)?;
    Ok(ObjectiveValue {
        risk,
        penalty,
        total: risk + penalty,
    })
}

/// Log joint density of labels and parameters, up to a parameter-free constant.
///
/// Bernoulli likelihood with the logistic link, group-Laplace priors on each
/// `W[i, G_l]` and `beta_{G_l}` block, and a Gaussian prior on `beta_I`. Prior
/// concentrations are `N * lambda` so that the result equals `-N * S` up to a
/// constant: the risk averages the likelihood over samples while the priors
/// do not.
pub fn log_posterior_unnormalized<T: Scalar>(
    p: &ParameterSet<T>,
    d: &Design<T>,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
) -> Result<T> {
    if d.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    let m = linear_predictors(p, d)?;
    let mut loglik = T::zero();
    for (&mk, &yk) in m.iter().zip(d.labels.iter()) {
        // log sigma(m) = -log(1 + e^{-m}),  log(1 - sigma(m)) = -log(1 + e^{m})
        loglik = loglik - yk * log1p_exp(-mk) - (T::one() - yk) * log1p_exp(mk);
    }
    let n = T::lit(d.n_samples() as f64);
    let log_prior_w = -(n * h.lambda_w) * interaction_group_norm(&p.w, gs);
    let log_prior_i = -(n * h.lambda_i) * p.beta_i.dot(&p.beta_i);
    let log_prior_g = -(n * h.lambda_g) * weighted_group_norm(p.beta_g.view(), gs);
    Ok(loglik + log_prior_w + log_prior_i + log_prior_g)
}
