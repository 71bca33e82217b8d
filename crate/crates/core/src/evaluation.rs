//! Prediction, classification metrics, stratified cross-validation with grid
//! search, and the per-gene reduced-parameter summary.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_traits::{FromPrimitive, Num};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Dataset, Design};
use crate::error::{Error, Result};
use crate::groups::GroupStructure;
use crate::objective::{linear_predictors, logistic};
use crate::params::{Hyperparameters, ParameterSet, Variant};
use crate::preprocess::{fit_scaler, Normalization, ScalingRecord};
use crate::scalar::{format_full, Scalar};
use crate::solver::fit;

/// Probability and thresholded label for one raw (unstandardized) sample.
pub fn predict<T: Scalar>(
    p: &ParameterSet<T>,
    sr: &ScalingRecord<T>,
    gs: &GroupStructure<T>,
    xg: ArrayView1<T>,
    xi: ArrayView1<T>,
    threshold: T,
) -> Result<(T, bool)> {
    let d = Dataset::new(
        xg.to_owned().insert_axis(Axis(0)),
        xi.to_owned().insert_axis(Axis(0)),
        Array1::zeros(1),
    )?;
    let prob = predict_proba(p, sr, gs, &d)?[0];
    Ok((prob, prob >= threshold))
}

/// Probabilities for every sample of a raw dataset (labels are ignored).
pub fn predict_proba<T: Scalar>(
    p: &ParameterSet<T>,
    sr: &ScalingRecord<T>,
    gs: &GroupStructure<T>,
    d: &Dataset<T>,
) -> Result<Array1<T>> {
    let design = sr.design(d, gs)?;
    probabilities(p, &design)
}

pub fn probabilities<T: Scalar>(p: &ParameterSet<T>, d: &Design<T>) -> Result<Array1<T>> {
    Ok(linear_predictors(p, d)?.mapv(logistic))
}

/// Confusion counts and rates in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport<T> {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub sen: T,
    pub spe: T,
    /// `None` when nothing was predicted positive.
    pub pre: Option<T>,
    pub bacc: T,
}

impl<T: Copy> MetricsReport<T> {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn percent<T: Num + FromPrimitive + Copy>(num: usize, den: usize) -> T {
    let hundred = T::from_u32(100).expect("100 representable");
    hundred * T::from_usize(num).expect("count representable") / T::from_usize(den).expect("count representable")
}

/// `(sen + spe) / 2`.
pub fn balanced_accuracy<T: Num + Copy>(sen: T, spe: T) -> T {
    (sen + spe) / (T::one() + T::one())
}

/// Sensitivity, specificity, precision and balanced accuracy, in percent.
///
/// Generic over any numeric field, so exact rationals work as well as floats.
pub fn metrics<T: Num + FromPrimitive + Copy>(y_true: &[bool], y_pred: &[bool]) -> Result<MetricsReport<T>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dim("predicted labels", y_true.len(), y_pred.len()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    if tp + fn_ == 0 {
        return Err(Error::UndefinedRate("sensitivity"));
    }
    if tn + fp == 0 {
        return Err(Error::UndefinedRate("specificity"));
    }
    let sen = percent(tp, tp + fn_);
    let spe = percent(tn, tn + fp);
    let pre = (tp + fp > 0).then(|| percent(tp, tp + fp));
    Ok(MetricsReport {
        tp,
        fp,
        tn,
        fn_,
        sen,
        spe,
        pre,
        bacc: balanced_accuracy(sen, spe),
    })
}

/// Stratified fold ids: each class is shuffled and dealt round-robin, with
/// the dealing position carried across classes so fold sizes stay balanced.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::FoldInfeasible(format!(
            "{} samples cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

fn check_class_counts(labels: &[bool], k: usize, what: &str) -> Result<()> {
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos < k || neg < k {
        return Err(Error::FoldInfeasible(format!(
            "{what}: {pos} positive and {neg} negative samples cannot populate {k} folds with both classes; use fewer folds"
        )));
    }
    Ok(())
}

/// Log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid<T: Scalar>(lo: T, hi: T, points: usize) -> Result<Vec<T>> {
    if !(lo > T::zero() && hi >= lo) || points == 0 {
        return Err(Error::InvalidInput(format!(
            "log grid needs 0 < lo <= hi and points >= 1 (got {lo}, {hi}, {points})"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / T::lit((points - 1) as f64);
    Ok((0..points)
        .map(|j| if j + 1 == points { hi } else { (a + step * T::lit(j as f64)).exp() })
        .collect())
}

/// Cartesian grid over the penalties the variant actually uses; unused
/// penalties stay at the first listed value.
pub fn hyper_grid<T: Scalar>(
    base: &Hyperparameters<T>,
    lambda_w: &[T],
    lambda_i: &[T],
    lambda_g: &[T],
) -> Vec<Hyperparameters<T>> {
    let pick = |vals: &[T], used: bool| if used { vals.to_vec() } else { vals[..1].to_vec() };
    let lw = pick(lambda_w, base.variant.uses_interaction());
    let li = pick(lambda_i, base.variant.uses_main_effects());
    let lg = pick(lambda_g, base.variant.uses_main_effects());
    let mut out = Vec::new();
    for &w in &lw {
        for &i in &li {
            for &g in &lg {
                out.push(Hyperparameters { lambda_w: w, lambda_i: i, lambda_g: g, ..*base });
            }
        }
    }
    out
}

/// How penalties are chosen inside cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Inner stratified split of each training fold; test folds stay untouched.
    Nested { inner_folds: usize },
    /// Picks the grid point with the best pooled test-fold accuracy. Optimistic.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig<T> {
    pub folds: usize,
    pub seed: u64,
    pub selection: Selection,
    pub normalization: Normalization,
    pub threshold: T,
}

impl<T: Scalar> Default for CvConfig<T> {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            selection: Selection::Nested { inner_folds: 3 },
            normalization: Normalization::Sd,
            threshold: T::lit(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult<T> {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub chosen: Hyperparameters<T>,
    pub chosen_index: usize,
    pub metrics: MetricsReport<T>,
    pub selected_groups: Vec<usize>,
    pub probabilities: Vec<T>,
}

/// Averages of the per-fold rates; precision averages only folds where it is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanMetrics<T> {
    pub sen: T,
    pub spe: T,
    pub pre: Option<T>,
    pub bacc: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult<T> {
    pub folds: Vec<FoldResult<T>>,
    /// Fold id of every sample.
    pub assignment: Vec<usize>,
    /// Metrics over all test predictions pooled together.
    pub pooled: MetricsReport<T>,
    pub mean: MeanMetrics<T>,
    pub selection: Selection,
}

/// Fits scaler and model on `train` and returns probabilities on `test`.
pub fn fit_and_score<T: Scalar>(
    train: &Dataset<T>,
    test: &Dataset<T>,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
    normalization: Normalization,
) -> Result<(Array1<T>, ParameterSet<T>)> {
    let sr = fit_scaler(train, normalization)?;
    let design = sr.design(train, gs)?;
    let (p, _) = fit(&design, gs, h, None)?;
    let probs = predict_proba(&p, &sr, gs, test)?;
    Ok((probs, p))
}

fn split(fold_of: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    let train = (0..fold_of.len()).filter(|&i| fold_of[i] != f).collect();
    let test = (0..fold_of.len()).filter(|&i| fold_of[i] == f).collect();
    (train, test)
}

fn labels_at(labels: &[bool], idx: &[usize]) -> Vec<bool> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn threshold_all<T: Scalar>(probs: &[T], thr: T) -> Vec<bool> {
    probs.iter().map(|&p| p >= thr).collect()
}

/// Stratified k-fold cross-validation with grid search over `grid`.
///
/// Scalers and models are always fit on training samples only. Independent
/// fits run in parallel on the current rayon pool; results are combined in
/// (fold, grid point) order so the outcome is deterministic.
pub fn kfold_cv<T: Scalar>(
    d: &Dataset<T>,
    gs: &GroupStructure<T>,
    grid: &[Hyperparameters<T>],
    cfg: &CvConfig<T>,
) -> Result<CvResult<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("hyperparameter grid is empty".into()));
    }
    for h in grid {
        h.validate()?;
    }
    let k = cfg.folds;
    let labels = d.label_bools();
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    check_class_counts(&labels, k, "outer folds")?;
    let fold_of = stratified_folds(&labels, k, cfg.seed)?;
    let splits: Vec<_> = (0..k).map(|f| split(&fold_of, f)).collect();

    // (chosen grid index, test probabilities, params) per fold
    let per_fold: Vec<(usize, Array1<T>, ParameterSet<T>)> = match cfg.selection {
        Selection::Nested { inner_folds } => {
            let inner: Vec<(Vec<bool>, Vec<usize>)> = splits
                .iter()
                .enumerate()
                .map(|(f, (train, _))| {
                    let tl = labels_at(&labels, train);
                    check_class_counts(&tl, inner_folds, "inner folds")?;
                    let ids = stratified_folds(&tl, inner_folds, cfg.seed.wrapping_add(1 + f as u64))?;
                    Ok((tl, ids))
                })
                .collect::<Result<_>>()?;
            let tasks: Vec<(usize, usize, usize)> = (0..k)
                .flat_map(|f| (0..grid.len()).flat_map(move |g| (0..inner_folds).map(move |j| (f, g, j))))
                .collect();
            let scored: Vec<Array1<T>> = tasks
                .par_iter()
                .map(|&(f, g, j)| {
                    let train = &splits[f].0;
                    let (itr, ite) = split(&inner[f].1, j);
                    let rows = |v: &[usize]| v.iter().map(|&i| train[i]).collect::<Vec<_>>();
                    let (probs, _) = fit_and_score(
                        &d.subset(&rows(&itr)),
                        &d.subset(&rows(&ite)),
                        gs,
                        &grid[g],
                        cfg.normalization,
                    )?;
                    Ok(probs)
                })
                .collect::<Result<_>>()?;
            let mut best = vec![0usize; k];
            for f in 0..k {
                let mut best_bacc = T::neg_infinity();
                for g in 0..grid.len() {
                    let mut truth = Vec::new();
                    let mut pred = Vec::new();
                    for j in 0..inner_folds {
                        let probs = &scored[(f * grid.len() + g) * inner_folds + j];
                        let (_, ite) = split(&inner[f].1, j);
                        truth.extend(labels_at(&inner[f].0, &ite));
                        pred.extend(threshold_all(probs.as_slice().unwrap(), cfg.threshold));
                    }
                    let m: MetricsReport<T> = metrics(&truth, &pred)?;
                    if m.bacc > best_bacc {
                        best_bacc = m.bacc;
                        best[f] = g;
                    }
                }
            }
            (0..k)
                .into_par_iter()
                .map(|f| {
                    let (train, test) = &splits[f];
                    let (probs, p) =
                        fit_and_score(&d.subset(train), &d.subset(test), gs, &grid[best[f]], cfg.normalization)?;
                    Ok((best[f], probs, p))
                })
                .collect::<Result<_>>()?
        }
        Selection::Oracle => {
            let tasks: Vec<(usize, usize)> =
                (0..k).flat_map(|f| (0..grid.len()).map(move |g| (f, g))).collect();
            let mut results: Vec<Option<(Array1<T>, ParameterSet<T>)>> = tasks
                .par_iter()
                .map(|&(f, g)| {
                    let (train, test) = &splits[f];
                    fit_and_score(&d.subset(train), &d.subset(test), gs, &grid[g], cfg.normalization).map(Some)
                })
                .collect::<Result<_>>()?;
            let mut best = (0, T::neg_infinity());
            for g in 0..grid.len() {
                let mut truth = Vec::new();
                let mut pred = Vec::new();
                for f in 0..k {
                    let probs = &results[f * grid.len() + g].as_ref().unwrap().0;
                    truth.extend(labels_at(&labels, &splits[f].1));
                    pred.extend(threshold_all(probs.as_slice().unwrap(), cfg.threshold));
                }
                let m: MetricsReport<T> = metrics(&truth, &pred)?;
                if m.bacc > best.1 {
                    best = (g, m.bacc);
                }
            }
            (0..k)
                .map(|f| {
                    let (probs, p) = results[f * grid.len() + best.0].take().unwrap();
                    (best.0, probs, p)
                })
                .collect()
        }
    };

    let mut folds = Vec::with_capacity(k);
    let mut all_truth = Vec::new();
    let mut all_pred = Vec::new();
    for (f, (g, probs, p)) in per_fold.into_iter().enumerate() {
        let test = splits[f].1.clone();
        let truth = labels_at(&labels, &test);
        let pred = threshold_all(probs.as_slice().unwrap(), cfg.threshold);
        let m = metrics(&truth, &pred)?;
        all_truth.extend(truth);
        all_pred.extend(pred);
        folds.push(FoldResult {
            fold: f,
            test_indices: test,
            chosen: grid[g],
            chosen_index: g,
            metrics: m,
            selected_groups: p.active_groups(gs),
            probabilities: probs.to_vec(),
        });
    }
    let pooled = metrics(&all_truth, &all_pred)?;
    let kf = T::lit(k as f64);
    let avg = |f: &dyn Fn(&MetricsReport<T>) -> T| folds.iter().map(|r| f(&r.metrics)).sum::<T>() / kf;
    let pres: Vec<T> = folds.iter().filter_map(|r| r.metrics.pre).collect();
    let mean = MeanMetrics {
        sen: avg(&|m| m.sen),
        spe: avg(&|m| m.spe),
        pre: (!pres.is_empty()).then(|| pres.iter().copied().sum::<T>() / T::lit(pres.len() as f64)),
        bacc: avg(&|m| m.bacc),
    };
    Ok(CvResult {
        folds,
        assignment: fold_of,
        pooled,
        mean,
        selection: cfg.selection,
    })
}

fn opt_full<T: Scalar>(x: Option<T>) -> String {
    x.map(format_full).unwrap_or_else(|| "NA".into())
}

fn opt_1dp<T: Scalar>(x: Option<T>) -> String {
    x.map(|v| format!("{:.1}", v)).unwrap_or_else(|| "NA".into())
}

impl<T: Scalar> CvResult<T> {
    /// One row per fold with confusion counts, rates and the chosen penalties.
    pub fn folds_csv(&self) -> String {
        let mut out = String::from("fold,n_test,tp,fp,tn,fn,sen,spe,pre,bacc,lambda_w,lambda_i,lambda_g,selected_groups\n");
        for r in &self.folds {
            let m = &r.metrics;
            let groups: Vec<String> = r.selected_groups.iter().map(|g| g.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.fold,
                r.test_indices.len(),
                m.tp,
                m.fp,
                m.tn,
                m.fn_,
                format_full(m.sen),
                format_full(m.spe),
                opt_full(m.pre),
                format_full(m.bacc),
                format_full(r.chosen.lambda_w),
                format_full(r.chosen.lambda_i),
                format_full(r.chosen.lambda_g),
                groups.join(";")
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let p = &self.pooled;
        let m = &self.mean;
        format!(
            "aggregate,sen,spe,pre,bacc\npooled,{},{},{},{}\nfold_mean,{},{},{},{}\n",
            format_full(p.sen),
            format_full(p.spe),
            opt_full(p.pre),
            format_full(p.bacc),
            format_full(m.sen),
            format_full(m.spe),
            opt_full(m.pre),
            format_full(m.bacc)
        )
    }
}

/// Fixed-width comparison table with one decimal place, one row per method.
pub fn format_table<T: Scalar>(rows: &[(String, MetricsReport<T>)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$} | {:>5} | {:>5} | {:>5} | {:>5}\n", "Method", "Sen", "Spe", "Pre", "BAcc");
    out.push_str(&format!("{}\n", "-".repeat(width + 32)));
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<width$} | {:>5.1} | {:>5.1} | {:>5} | {:>5.1}",
            name,
            m.sen,
            m.spe,
            opt_1dp(m.pre),
            m.bacc
        );
    }
    out
}

/// Per-gene maxima of absolute parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedParameters<T> {
    /// `|I| x L`, `max_{g in G_l} |W[i, g]|`
    pub w: Array2<T>,
    /// `|beta_I[i]|`
    pub beta_i: Array1<T>,
    /// length `L`, `max_{g in G_l} |beta_G[g]|`
    pub beta_g: Array1<T>,
}

pub fn reduce_parameters<T: Scalar>(p: &ParameterSet<T>, gs: &GroupStructure<T>) -> Result<ReducedParameters<T>> {
    p.check_dims(p.n_imaging(), gs.expanded_size())?;
    let max_abs = |v: ArrayView1<T>| v.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    let l = gs.n_groups();
    let mut w = Array2::zeros((p.n_imaging(), l));
    let mut beta_g = Array1::zeros(l);
    for g in 0..l {
        let r = gs.block_range(g);
        beta_g[g] = max_abs(p.beta_g.slice(ndarray::s![r.clone()]));
        for i in 0..p.n_imaging() {
            w[[i, g]] = max_abs(p.w.slice(ndarray::s![i, r.clone()]));
        }
    }
    Ok(ReducedParameters {
        w,
        beta_i: p.beta_i.mapv(|x| x.abs()),
        beta_g,
    })
}

impl<T: Scalar> ReducedParameters<T> {
    /// Reduced interaction matrix with imaging names as rows and gene names as columns.
    pub fn w_csv(&self, imaging_names: &[String], group_names: &[String]) -> String {
        let mut out = String::from("region");
        for g in group_names {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for (i, row) in self.w.rows().into_iter().enumerate() {
            out.push_str(&imaging_names[i]);
            for v in row {
                out.push(',');
                out.push_str(&format_full(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn beta_i_csv(&self, imaging_names: &[String]) -> String {
        let mut out = String::from("region,value\n");
        for (n, v) in imaging_names.iter().zip(self.beta_i.iter()) {
            let _ = writeln!(out, "{n},{}", format_full(*v));
        }
        out
    }

    pub fn beta_g_csv(&self, group_names: &[String]) -> String {
        let mut out = String::from("gene,value\n");
        for (n, v) in group_names.iter().zip(self.beta_g.iter()) {
            let _ = writeln!(out, "{n},{}", format_full(*v));
        }
        out
    }
}

/// Grid variants in the order of a comparison table.
pub fn table_label(v: Variant) -> &'static str {
    match v {
        Variant::Additive => "additive model (beta_I, beta_G only)",
        Variant::Multiplicative => "multiplicative model (W only)",
        Variant::Multilevel => "multilevel model (all)",
    }
}
