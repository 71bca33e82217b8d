//! Proximal gradient training with backtracking line search.
//!
//! Each outer iteration restarts the stepsize at `epsilon0`, takes a gradient
//! step on the risk, applies the block proximal maps of the penalty, and
//! shrinks the stepsize by `delta` until the sufficient-decrease test on the
//! risk holds. Training stops once the objective changes by at most `eta`
//! relative to its previous value.

use ndarray::{s, Array1, ArrayView1, ArrayViewMut1};

use crate::data::Design;
use crate::error::{Error, Result};
use crate::groups::GroupStructure;
use crate::objective::{self, gradient_from_predictors, linear_predictors, ObjectiveValue};
use crate::params::{GradientVector, Hyperparameters, ParameterSet};
use crate::scalar::Scalar;

/// Shrinkages allowed in one line search before giving up.
pub const LINE_SEARCH_CAP: usize = 200;

/// Block soft-thresholding: `max(0, 1 - threshold / ||omega||) * omega`.
pub fn prox_group<T: Scalar>(omega: ArrayView1<T>, threshold: T) -> Result<Array1<T>> {
    if !(threshold >= T::zero()) {
        return Err(Error::InvalidInput(format!(
            "group threshold must be >= 0, got {threshold}"
        )));
    }
    let mut out = omega.to_owned();
    shrink_block(out.view_mut(), threshold);
    Ok(out)
}

fn shrink_block<T: Scalar>(mut block: ArrayViewMut1<T>, threshold: T) {
    let norm = block.dot(&block).sqrt();
    if norm <= threshold {
        block.fill(T::zero());
    } else {
        let factor = T::one() - threshold / norm;
        block.mapv_inplace(|x| x * factor);
    }
}

/// Proximal map of `eps * lambda_i * ||x||^2`: elementwise division by `1 + 2 eps lambda_i`.
pub fn prox_ridge<T: Scalar>(omega: ArrayView1<T>, eps: T, lambda_i: T) -> Array1<T> {
    let denom = T::one() + T::lit(2.0) * eps * lambda_i;
    omega.mapv(|x| x / denom)
}

/// Candidate parameters and the generalized gradient `(w - w_new) / eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxStep<T> {
    pub candidate: ParameterSet<T>,
    pub generalized_gradient: ParameterSet<T>,
}

/// One proximal gradient update at stepsize `eps`.
///
/// `W` rows are thresholded per group with `eps * lambda_w * theta_l`,
/// `beta_I` gets the ridge map, `beta_G` is thresholded per group with
/// `eps * lambda_g * theta_l`, and `beta0` takes a plain gradient step.
/// Blocks excluded by the variant are set to zero.
pub fn parameter_update<T: Scalar>(
    p: &ParameterSet<T>,
    grad: &GradientVector<T>,
    eps: T,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
) -> Result<ProxStep<T>> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidHyperparameter {
            name: "stepsize",
            reason: format!("must be finite and > 0, got {eps}"),
        });
    }
    if let Some(block) = grad.non_finite_block() {
        return Err(Error::NonFiniteGradient { block });
    }
    p.check_dims(p.n_imaging(), gs.expanded_size())?;
    let g = &grad.blocks;
    g.check_dims(p.n_imaging(), gs.expanded_size())?;

    let mut cand = ParameterSet {
        w: &p.w - &(&g.w * eps),
        beta_i: &p.beta_i - &(&g.beta_i * eps),
        beta_g: &p.beta_g - &(&g.beta_g * eps),
        beta0: p.beta0 - eps * g.beta0,
    };

    if h.variant.uses_interaction() {
        for mut row in cand.w.rows_mut() {
            for l in 0..gs.n_groups() {
                let r = gs.block_range(l);
                shrink_block(row.slice_mut(s![r]), eps * h.lambda_w * gs.weights()[l]);
            }
        }
    } else {
        cand.w.fill(T::zero());
    }

    if h.variant.uses_main_effects() {
        cand.beta_i = prox_ridge(cand.beta_i.view(), eps, h.lambda_i);
        for l in 0..gs.n_groups() {
            let r = gs.block_range(l);
            shrink_block(cand.beta_g.slice_mut(s![r]), eps * h.lambda_g * gs.weights()[l]);
        }
    } else {
        cand.beta_i.fill(T::zero());
        cand.beta_g.fill(T::zero());
    }

    let generalized_gradient = p.scaled_difference(&cand, eps);
    Ok(ProxStep {
        candidate: cand,
        generalized_gradient,
    })
}

/// Result of one backtracking line search.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome<T> {
    pub step: ProxStep<T>,
    pub stepsize: T,
    pub shrinks: usize,
    pub risk_candidate: T,
    candidate_predictors: Array1<T>,
}

fn line_search<T: Scalar>(
    p: &ParameterSet<T>,
    risk_current: T,
    grad: &GradientVector<T>,
    d: &Design<T>,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
    eps_init: T,
) -> Result<LineSearchOutcome<T>> {
    let half = T::lit(0.5);
    // round-off slack: a few ulps of the current risk
    let slack = T::epsilon() * T::lit(4.0) * risk_current.abs();
    let mut eps = eps_init;
    let mut last = (T::nan(), T::nan());
    for shrinks in 0..=LINE_SEARCH_CAP {
        let step = parameter_update(p, grad, eps, gs, h)?;
        let m = linear_predictors(&step.candidate, d)?;
        let risk_candidate = risk_of(&m, d);
        let gg = &step.generalized_gradient;
        let bound = risk_current - eps * grad.blocks.dot(gg) + half * eps * gg.norm_squared();
        if risk_candidate <= bound + slack {
            return Ok(LineSearchOutcome {
                step,
                stepsize: eps,
                shrinks,
                risk_candidate,
                candidate_predictors: m,
            });
        }
        last = (risk_candidate, bound);
        if shrinks < LINE_SEARCH_CAP {
            eps = eps * h.delta;
        }
    }
    Err(Error::LineSearchFailed {
        shrinks: LINE_SEARCH_CAP,
        stepsize: eps.as_f64(),
        risk_current: risk_current.as_f64(),
        risk_candidate: last.0.as_f64(),
        bound: last.1.as_f64(),
    })
}

fn risk_of<T: Scalar>(m: &Array1<T>, d: &Design<T>) -> T {
    let mut acc = T::zero();
    for (&mk, &yk) in m.iter().zip(d.labels.iter()) {
        acc = acc + (objective::log1p_exp(mk) - yk * mk);
    }
    acc / T::lit(d.n_samples() as f64)
}

/// Backtracking from `eps_init`: shrink by `delta` until
/// `R(w+) <= R(w) - eps grad^T G + eps/2 ||G||^2`.
pub fn backtracking_step<T: Scalar>(
    p: &ParameterSet<T>,
    d: &Design<T>,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
    eps_init: T,
) -> Result<LineSearchOutcome<T>> {
    if !(eps_init > T::zero()) {
        return Err(Error::InvalidHyperparameter {
            name: "stepsize",
            reason: format!("initial stepsize must be > 0, got {eps_init}"),
        });
    }
    let (risk, grad) = objective::risk_and_gradient(p, d)?;
    line_search(p, risk, &grad, d, gs, h, eps_init)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `|S_new - S_old| <= eta |S_old|`
    RelativeChange,
    MaxIterations,
}

/// Accepted stepsize and number of shrinkages of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord<T> {
    pub stepsize: T,
    pub shrinks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T> {
    pub iterations: usize,
    /// Stepsize accepted in the last iteration.
    pub stepsize: T,
    /// Objective at the initial point followed by one entry per accepted iteration.
    pub trace: Vec<ObjectiveValue<T>>,
    pub steps: Vec<StepRecord<T>>,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl<T: Scalar> SolverState<T> {
    pub fn final_objective(&self) -> ObjectiveValue<T> {
        *self.trace.last().expect("trace holds the initial objective")
    }
}

/// Trains the model from `init` (zero when `None`).
pub fn fit<T: Scalar>(
    d: &Design<T>,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
    init: Option<&ParameterSet<T>>,
) -> Result<(ParameterSet<T>, SolverState<T>)> {
    h.validate()?;
    if d.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    if d.expanded_size() != gs.expanded_size() {
        return Err(Error::dim(
            "expanded genetic columns",
            gs.expanded_size(),
            d.expanded_size(),
        ));
    }
    let mut p = match init {
        Some(p0) => {
            d.check_params(p0)?;
            p0.clone()
        }
        None => ParameterSet::zeros(d.n_imaging(), d.expanded_size()),
    };
    p.restrict_to(h.variant);

    let m = linear_predictors(&p, d)?;
    let mut risk = risk_of(&m, d);
    let mut grad = gradient_from_predictors(&m, d);
    let mut obj = value(risk, &p, gs, h)?;
    if !obj.total.is_finite() {
        return Err(Error::Diverged {
            iteration: 0,
            value: obj.total.as_f64(),
        });
    }
    let mut state = SolverState {
        iterations: 0,
        stepsize: h.epsilon0,
        trace: vec![obj],
        steps: Vec::new(),
        converged: false,
        stop_reason: StopReason::MaxIterations,
    };

    for t in 1..=h.max_outer_iters {
        let ls = line_search(&p, risk, &grad, d, gs, h, h.epsilon0)?;
        let cand = ls.step.candidate;
        let new_obj = value(ls.risk_candidate, &cand, gs, h)?;
        if !new_obj.total.is_finite() {
            return Err(Error::Diverged {
                iteration: t,
                value: new_obj.total.as_f64(),
            });
        }
        let stop = (new_obj.total - obj.total).abs() <= h.eta * obj.total.abs();
        grad = gradient_from_predictors(&ls.candidate_predictors, d);
        p = cand;
        risk = ls.risk_candidate;
        obj = new_obj;
        state.iterations = t;
        state.stepsize = ls.stepsize;
        state.trace.push(obj);
        state.steps.push(StepRecord {
            stepsize: ls.stepsize,
            shrinks: ls.shrinks,
        });
        if stop {
            state.converged = true;
            state.stop_reason = StopReason::RelativeChange;
            break;
        }
    }
    Ok((p, state))
}

fn value<T: Scalar>(
    risk: T,
    p: &ParameterSet<T>,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
) -> Result<ObjectiveValue<T>> {
    let penalty = objective::penalty(p, gs, h)?;
    Ok(ObjectiveValue {
        risk,
        penalty,
        total: risk + penalty,
    })
}

/// Gradient norms at the zero parameter vector for one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupScreen<T> {
    /// `||grad_{beta_{G_l}} R(0)||_2`
    pub beta_g_norm: T,
    /// `max_i ||grad_{W_{i,G_l}} R(0)||_2`
    pub w_norm_max: T,
    pub weight: T,
}

/// Smallest penalties at which no group leaves zero in the first iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningBounds<T> {
    pub lambda_g_max: T,
    pub lambda_w_max: T,
    pub per_group: Vec<GroupScreen<T>>,
}

/// `lambda_G_max = max_l ||grad_{beta_{G_l}} R(0)|| / theta_l` and
/// `lambda_W_max = max_{i,l} ||grad_{W_{i,G_l}} R(0)|| / theta_l`.
pub fn screen_lambda_max<T: Scalar>(d: &Design<T>, gs: &GroupStructure<T>) -> Result<ScreeningBounds<T>> {
    if d.expanded_size() != gs.expanded_size() {
        return Err(Error::dim(
            "expanded genetic columns",
            gs.expanded_size(),
            d.expanded_size(),
        ));
    }
    let g = objective::gradient(&ParameterSet::zeros(d.n_imaging(), d.expanded_size()), d)?.blocks;
    let mut per_group = Vec::with_capacity(gs.n_groups());
    let mut lambda_g_max = T::zero();
    let mut lambda_w_max = T::zero();
    for l in 0..gs.n_groups() {
        let r = gs.block_range(l);
        let bg = g.beta_g.slice(s![r.clone()]);
        let beta_g_norm = bg.dot(&bg).sqrt();
        let mut w_norm_max = T::zero();
        for row in g.w.rows() {
            let blk = row.slice(s![r.clone()]);
            w_norm_max = w_norm_max.max(blk.dot(&blk).sqrt());
        }
        let theta = gs.weights()[l];
        lambda_g_max = lambda_g_max.max(beta_g_norm / theta);
        lambda_w_max = lambda_w_max.max(w_norm_max / theta);
        per_group.push(GroupScreen {
            beta_g_norm,
            w_norm_max,
            weight: theta,
        });
    }
    Ok(ScreeningBounds {
        lambda_g_max,
        lambda_w_max,
        per_group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Variant;
    use crate::preprocess::{fit_scaler, Normalization};
    use crate::synthetic::{generate, pattern_search, reference_solve, SyntheticSpec};
    use ndarray::{arr1, arr2, Array2};
    use proptest::prelude::*;

    fn instance(seed: u64, n: usize, ni: usize, l: usize, size: usize) -> (Design<f64>, GroupStructure<f64>) {
        let spec = SyntheticSpec {
            n_samples: n,
            n_imaging: ni,
            n_genetic: l * size,
            n_groups: l,
            overlap: 0.34,
            active_groups: 1,
            active_imaging: 1,
            effect_w: 0.8,
            effect_i: 0.8,
            effect_g: 0.8,
            seed,
            ..Default::default()
        };
        let s = generate::<f64>(&spec).unwrap();
        let sr = fit_scaler(&s.dataset, Normalization::Sd).unwrap();
        (sr.design(&s.dataset, &s.groups).unwrap(), s.groups)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn prox_oracle(omega: &[f64], thr: f64) -> Vec<f64> {
        let f = |x: &[f64]| {
            let q: f64 = x.iter().zip(omega).map(|(a, b)| (a - b).powi(2)).sum();
            0.5 * q + thr * x.iter().map(|a| a * a).sum::<f64>().sqrt()
        };
        pattern_search(f, omega, 1.0, 1e-11)
    }

    #[test]
    fn group_prox_examples() {
        let z = prox_group(arr1(&[0.0, 0.0]).view(), 1.0).unwrap();
        assert_eq!(z, arr1(&[0.0, 0.0]));
        let out = prox_group(arr1(&[3.0, 4.0]).view(), 2.5).unwrap();
        assert!(close(out.as_slice().unwrap(), &[1.5, 2.0], 1e-15));
        let oracle = prox_oracle(&[3.0, 4.0], 2.5);
        assert!(close(out.as_slice().unwrap(), &oracle, 1e-6), "{oracle:?}");
        assert_eq!(prox_group(arr1(&[3.0, 4.0]).view(), 5.0).unwrap(), arr1(&[0.0, 0.0]));
        assert!(prox_group(arr1(&[1.0]).view(), -0.1).is_err());
    }

    #[test]
    fn ridge_prox_examples() {
        assert_eq!(prox_ridge(arr1(&[1.0, 0.0]).view(), 1.0, 0.5), arr1(&[0.5, 0.0]));
        let w = arr1(&[0.3, -2.0]);
        assert_eq!(prox_ridge(w.view(), 1.0, 0.0), w);
        let omega = [0.7, -1.3, 2.1];
        let (eps, lam) = (0.4, 0.9);
        let f = |x: &[f64]| {
            x.iter().zip(&omega).map(|(a, b)| 0.5 * (a - b).powi(2) + eps * lam * a * a).sum::<f64>()
        };
        let oracle = pattern_search(f, &omega, 1.0, 1e-12);
        let out = prox_ridge(arr1(&omega).view(), eps, lam);
        assert!(close(out.as_slice().unwrap(), &oracle, 1e-8), "{out} vs {oracle:?}");
    }

    #[test]
    fn update_with_zero_gradient_is_fixed_point() {
        let (d, gs) = instance(1, 20, 2, 3, 2);
        let h = Hyperparameters::new(1e-9, 1e-9, 1e-9);
        let mut p = ParameterSet::zeros(d.n_imaging(), d.expanded_size());
        p.beta0 = 0.3;
        p.beta_i[1] = -0.2;
        let g = GradientVector { blocks: ParameterSet::zeros(2, d.expanded_size()) };
        // thresholds of exactly zero
        let mut h0 = h;
        h0.lambda_w = 0.0;
        h0.lambda_g = 0.0;
        h0.lambda_i = 0.0;
        let step = parameter_update(&p, &g, 1.0, &gs, &h0).unwrap();
        assert_eq!(step.candidate, p);
        assert_eq!(step.generalized_gradient.norm_squared(), 0.0);
    }

    #[test]
    fn large_threshold_keeps_group_at_zero() {
        let gs = GroupStructure::<f64>::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let p = ParameterSet::zeros(1, 4);
        let mut g = ParameterSet::zeros(1, 4);
        g.beta_g[0] = -6.0;
        g.beta_g[1] = -8.0;
        let theta = gs.weights()[0];
        let h = Hyperparameters::new(1.0, 1.0, 20.0 / theta);
        let step = parameter_update(&p, &GradientVector { blocks: g }, 1.0, &gs, &h).unwrap();
        assert_eq!(step.candidate.beta_g, arr1(&[0.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn update_blocks_match_numerical_prox() {
        let (d, gs) = instance(4, 30, 2, 3, 2);
        let h = Hyperparameters::new(0.05, 0.2, 0.08);
        let mut p = ParameterSet::zeros(2, gs.expanded_size());
        p.w[[0, 1]] = 0.4;
        p.beta_g[3] = -0.5;
        p.beta_i[0] = 0.2;
        let grad = crate::objective::gradient(&p, &d).unwrap();
        let eps = 0.7;
        let step = parameter_update(&p, &grad, eps, &gs, &h).unwrap();
        for l in 0..gs.n_groups() {
            let r = gs.block_range(l);
            let theta = gs.weights()[l];
            let omega: Vec<f64> = r.clone().map(|g| p.beta_g[g] - eps * grad.blocks.beta_g[g]).collect();
            let want = prox_oracle(&omega, eps * h.lambda_g * theta);
            let got: Vec<f64> = r.clone().map(|g| step.candidate.beta_g[g]).collect();
            assert!(close(&got, &want, 1e-6), "beta_g block {l}: {got:?} vs {want:?}");
            for i in 0..2 {
                let omega: Vec<f64> = r.clone().map(|g| p.w[[i, g]] - eps * grad.blocks.w[[i, g]]).collect();
                let want = prox_oracle(&omega, eps * h.lambda_w * theta);
                let got: Vec<f64> = r.clone().map(|g| step.candidate.w[[i, g]]).collect();
                assert!(close(&got, &want, 1e-6), "w block ({i},{l})");
            }
        }
        let b0 = p.beta0 - eps * grad.blocks.beta0;
        assert_eq!(step.candidate.beta0, b0);
        let gg = p.scaled_difference(&step.candidate, eps);
        assert_eq!(gg, step.generalized_gradient);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let gs = GroupStructure::<f64>::new(2, vec![vec![0, 1]]).unwrap();
        let p = ParameterSet::zeros(1, 2);
        let mut g = ParameterSet::zeros(1, 2);
        g.beta_i[0] = f64::NAN;
        let err = parameter_update(&p, &GradientVector { blocks: g }, 1.0, &gs, &Hyperparameters::new(1.0, 1.0, 1.0))
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { block: "beta_i" }), "{err}");
        let g = GradientVector { blocks: ParameterSet::zeros(1, 2) };
        assert!(parameter_update(&p, &g, 0.0, &gs, &Hyperparameters::new(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn variants_zero_their_blocks() {
        let gs = GroupStructure::<f64>::new(2, vec![vec![0, 1]]).unwrap();
        let p = ParameterSet::zeros(1, 2);
        let mut g = ParameterSet::zeros(1, 2);
        g.w.fill(-3.0);
        g.beta_i.fill(-3.0);
        g.beta_g.fill(-3.0);
        let g = GradientVector { blocks: g };
        let base = Hyperparameters::new(0.01, 0.01, 0.01);
        let add = parameter_update(&p, &g, 1.0, &gs, &base.with_variant(Variant::Additive)).unwrap();
        assert!(add.candidate.w.iter().all(|&x| x == 0.0));
        assert!(add.candidate.beta_g.iter().all(|&x| x != 0.0));
        let mult = parameter_update(&p, &g, 1.0, &gs, &base.with_variant(Variant::Multiplicative)).unwrap();
        assert!(mult.candidate.beta_i.iter().chain(mult.candidate.beta_g.iter()).all(|&x| x == 0.0));
        assert!(mult.candidate.w.iter().all(|&x| x != 0.0));
    }

    #[test]
    fn gentle_instance_accepts_initial_step() {
        // risk curvature bounded by ||x||^2 / 4, far below 1
        let d = Design::new(
            arr2(&[[0.1, -0.1], [-0.1, 0.1], [0.1, 0.1], [-0.1, -0.1]]),
            arr2(&[[0.2], [-0.2], [0.1], [-0.1]]),
            arr1(&[1.0, 0.0, 1.0, 0.0]),
            None,
        )
        .unwrap();
        let gs = GroupStructure::new(2, vec![vec![0, 1]]).unwrap();
        let h = Hyperparameters::new(1e-3, 1e-3, 1e-3);
        let out = backtracking_step(&ParameterSet::zeros(1, 2), &d, &gs, &h, 1.0).unwrap();
        assert_eq!(out.shrinks, 0);
        assert_eq!(out.stepsize, 1.0);
    }

    #[test]
    fn zero_gradient_passes_at_initial_step() {
        let d = Design::new(
            Array2::zeros((2, 2)),
            Array2::zeros((2, 1)),
            arr1(&[1.0, 0.0]),
            None,
        )
        .unwrap();
        let gs = GroupStructure::new(2, vec![vec![0, 1]]).unwrap();
        let out = backtracking_step(&ParameterSet::zeros(1, 2), &d, &gs, &Hyperparameters::new(1.0, 1.0, 1.0), 1.0)
            .unwrap();
        assert_eq!(out.shrinks, 0);
        assert_eq!(out.step.candidate, ParameterSet::zeros(1, 2));
    }

    #[test]
    fn steep_instance_backtracks_to_first_passing_step() {
        let (d0, gs) = instance(9, 30, 2, 2, 3);
        // blow up the features so the initial step overshoots
        let d = Design::new(&d0.genetic * 15.0, &d0.imaging * 15.0, d0.labels.clone(), None).unwrap();
        let h = Hyperparameters::new(1e-3, 1e-3, 1e-3);
        let p = ParameterSet::zeros(2, gs.expanded_size());
        let out = backtracking_step(&p, &d, &gs, &h, 1.0).unwrap();
        assert!(out.shrinks > 0);
        let (r0, grad) = crate::objective::risk_and_gradient(&p, &d).unwrap();
        let passes = |eps: f64| {
            let st = parameter_update(&p, &grad, eps, &gs, &h).unwrap();
            let gg = &st.generalized_gradient;
            let bound = r0 - eps * grad.blocks.dot(gg) + 0.5 * eps * gg.norm_squared();
            crate::objective::risk(&st.candidate, &d).unwrap() <= bound + 4.0 * f64::EPSILON * r0
        };
        for k in 0..out.shrinks {
            assert!(!passes(0.8f64.powi(k as i32)), "step {k} should fail");
        }
        assert!((out.stepsize - 0.8f64.powi(out.shrinks as i32)).abs() < 1e-15);
        assert!(passes(out.stepsize));
    }

    #[test]
    fn intercept_only_fit_drives_probabilities_to_one() {
        let (d0, gs) = instance(2, 25, 2, 2, 2);
        let d = Design::new(d0.genetic.clone(), d0.imaging.clone(), Array1::ones(25), None).unwrap();
        let h = Hyperparameters::new(1e3, 1e3, 1e3).with_max_outer_iters(3000);
        let (p, _) = fit(&d, &gs, &h, None).unwrap();
        assert!(p.w.iter().chain(p.beta_g.iter()).all(|&x| x == 0.0));
        assert!(p.beta_i.iter().all(|&x| x.abs() < 1e-3));
        assert!(p.beta0 > 5.0);
        let probs = crate::evaluation::probabilities(&p, &d).unwrap();
        assert!(probs.iter().all(|&q| q > 0.99));
    }

    #[test]
    fn above_screening_bound_gives_exact_zeros() {
        let (d, gs) = instance(5, 60, 3, 4, 3);
        let b = screen_lambda_max(&d, &gs).unwrap();
        assert!(b.lambda_g_max > 0.0 && b.lambda_w_max > 0.0);
        let h = Hyperparameters::new(1.01 * b.lambda_w_max, 0.1, 1.01 * b.lambda_g_max);
        let (p, _) = fit(&d, &gs, &h, None).unwrap();
        assert!(p.w.iter().chain(p.beta_g.iter()).all(|&x| x == 0.0));
        let h = Hyperparameters::new(0.5 * b.lambda_w_max, 0.1, 0.5 * b.lambda_g_max);
        let (p, _) = fit(&d, &gs, &h, None).unwrap();
        assert!(!p.active_groups(&gs).is_empty());
    }

    #[test]
    fn screening_examples() {
        let d = Design::new(Array2::zeros((2, 3)), Array2::zeros((2, 2)), arr1(&[1.0, 0.0]), None).unwrap();
        let gs = GroupStructure::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let b = screen_lambda_max(&d, &gs).unwrap();
        assert_eq!((b.lambda_g_max, b.lambda_w_max), (0.0, 0.0));

        let xg = arr1(&[1.0, -2.0, 2.0]);
        let d = Design::new(xg.clone().insert_axis(ndarray::Axis(0)), arr2(&[[0.0]]), arr1(&[1.0]), None).unwrap();
        let gs = GroupStructure::new(3, vec![vec![0, 1, 2]]).unwrap();
        let b = screen_lambda_max(&d, &gs).unwrap();
        let want = 0.5 * 3.0 / 3f64.sqrt();
        assert!((b.lambda_g_max - want).abs() < 1e-15);
    }

    #[test]
    fn small_fit_matches_long_run_reference() {
        let (d, gs) = instance(11, 40, 3, 4, 3);
        let h = Hyperparameters::new(0.1, 0.1, 0.1);
        let (_, state) = fit(&d, &gs, &h, None).unwrap();
        assert!(state.converged);
        let reference = reference_solve(&d, &gs, &h).unwrap();
        let s_ref = crate::objective::objective(&reference, &d, &gs, &h).unwrap().total;
        let s = state.final_objective().total;
        assert!((s - s_ref).abs() <= 1e-4 * s_ref.abs(), "{s} vs {s_ref}");
    }

    #[test]
    fn converged_point_is_nearly_stationary() {
        let (d, gs) = instance(12, 40, 2, 3, 3);
        let h = Hyperparameters::new(0.03, 0.05, 0.03);
        let (p, state) = fit(&d, &gs, &h, None).unwrap();
        assert_eq!(state.stop_reason, StopReason::RelativeChange);
        let s = state.final_objective().total;
        let grad = crate::objective::gradient(&p, &d).unwrap();
        let next = parameter_update(&p, &grad, state.stepsize, &gs, &h).unwrap().candidate;
        let s_next = crate::objective::objective(&next, &d, &gs, &h).unwrap().total;
        // one more step moves S by about as much as the last accepted one
        let last = (state.trace[state.trace.len() - 2].total - s).abs();
        assert!((s_next - s).abs() <= 2.0 * last.max(h.eta * s.abs()), "{} vs {last}", (s_next - s).abs());
    }

    #[test]
    fn f32_fit_tracks_f64() {
        let (d, gs) = instance(13, 40, 2, 3, 2);
        let h = Hyperparameters::new(0.05, 0.05, 0.05);
        let (_, s64) = fit(&d, &gs, &h, None).unwrap();
        let d32 = Design::<f32>::new(
            d.genetic.mapv(|x| x as f32),
            d.imaging.mapv(|x| x as f32),
            d.labels.mapv(|x| x as f32),
            None,
        )
        .unwrap();
        let gs32 = GroupStructure::<f32>::new(gs.n_features(), gs.groups().to_vec()).unwrap();
        let h32 = Hyperparameters::<f32>::new(0.05, 0.05, 0.05);
        let (_, s32) = fit(&d32, &gs32, &h32, None).unwrap();
        let a = s64.final_objective().total;
        let b = s32.final_objective().total as f64;
        assert!((a - b).abs() < 2e-2 * a, "{a} vs {b}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn objective_trace_never_increases(seed in 0u64..1000, lw in -3.0f64..-0.5, lg in -3.0f64..-0.5, v in 0usize..3) {
            let (d, gs) = instance(seed, 30, 2, 3, 2);
            let h = Hyperparameters::new(10f64.powf(lw), 0.05, 10f64.powf(lg)).with_variant(Variant::ALL[v]);
            let (p, state) = fit(&d, &gs, &h, None).unwrap();
            for w in state.trace.windows(2) {
                prop_assert!(w[1].total <= w[0].total + 1e-12);
            }
            match h.variant {
                Variant::Additive => prop_assert!(p.w.iter().all(|&x| x == 0.0)),
                Variant::Multiplicative => prop_assert!(p.beta_i.iter().chain(p.beta_g.iter()).all(|&x| x == 0.0)),
                Variant::Multilevel => {}
            }
        }

        #[test]
        fn group_prox_beats_perturbations(v in proptest::collection::vec(-3.0f64..3.0, 1..6), thr in 0.0f64..4.0, seed in 0u64..100) {
            use rand::{Rng, SeedableRng};
            let omega = Array1::from(v);
            let x = prox_group(omega.view(), thr).unwrap();
            let f = |y: &Array1<f64>| 0.5 * (y - &omega).mapv(|t| t * t).sum() + thr * y.dot(y).sqrt();
            let fx = f(&x);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let scale = 10f64.powi(rng.random_range(-6..0));
                let y = x.mapv(|t| t + scale * rng.random_range(-1.0..1.0));
                prop_assert!(fx <= f(&y) + 1e-14);
            }
        }
    }
}
