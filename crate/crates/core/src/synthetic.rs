//! Planted-model data generation and the independent numerical oracles used
//! to check the analytic code paths.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::data::{Dataset, Design};
use crate::error::{Error, Result};
use crate::groups::GroupStructure;
use crate::objective::{linear_predictors, logistic, risk};
use crate::params::{GradientVector, Hyperparameters, ParameterSet, Variant};
use crate::preprocess::{fit_scaler, Normalization};
use crate::scalar::Scalar;
use crate::solver::fit;

/// Size, sparsity and noise of a planted multilevel model.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_genetic: usize,
    pub n_imaging: usize,
    pub n_groups: usize,
    /// Fraction of a group's core features shared with the following group, in `[0, 1)`.
    pub overlap: f64,
    pub active_groups: usize,
    /// Imaging features carrying main or interaction effects.
    pub active_imaging: usize,
    pub effect_w: f64,
    pub effect_i: f64,
    pub effect_g: f64,
    pub beta0: f64,
    /// Probability of flipping each label, in `[0, 0.5)`.
    pub noise: f64,
    /// Lag-one correlation between neighboring imaging features.
    pub imaging_correlation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 200,
            n_genetic: 40,
            n_imaging: 8,
            n_groups: 8,
            overlap: 0.2,
            active_groups: 2,
            active_imaging: 2,
            effect_w: 0.0,
            effect_i: 0.5,
            effect_g: 0.5,
            beta0: 0.0,
            noise: 0.0,
            imaging_correlation: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Dimensions of a mid-sized imaging-genetics cohort:
    /// 707 subjects, 114 imaging measures, 1107 SNPs in 44 genes.
    pub fn study_scale(seed: u64) -> Self {
        Self {
            n_samples: 707,
            n_genetic: 1107,
            n_imaging: 114,
            n_groups: 44,
            overlap: 0.04,
            active_groups: 4,
            active_imaging: 10,
            effect_w: 0.05,
            effect_i: 0.3,
            effect_g: 0.1,
            beta0: 0.0,
            noise: 0.05,
            imaging_correlation: 0.3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("synthetic spec: {m}")));
        if self.n_samples == 0 || self.n_imaging == 0 || self.n_groups == 0 {
            return bad("sample, imaging and group counts must be positive".into());
        }
        if self.n_genetic < self.n_groups {
            return bad(format!("{} features cannot fill {} groups", self.n_genetic, self.n_groups));
        }
        if self.active_groups > self.n_groups {
            return bad(format!(
                "{} active groups exceed {} groups",
                self.active_groups, self.n_groups
            ));
        }
        if self.active_imaging > self.n_imaging {
            return bad(format!(
                "{} active imaging features exceed {}",
                self.active_imaging, self.n_imaging
            ));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad(format!("overlap {} not in [0, 1)", self.overlap));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return bad(format!("noise {} not in [0, 0.5)", self.noise));
        }
        if !(self.imaging_correlation.abs() < 1.0) {
            return bad("imaging correlation must lie in (-1, 1)".into());
        }
        Ok(())
    }

    /// Contiguous chunks of near-equal size, each extended into the next chunk by the overlap.
    pub fn group_layout(&self) -> Vec<Vec<usize>> {
        let l = self.n_groups;
        let base = self.n_genetic / l;
        let extra = self.n_genetic % l;
        let mut starts = Vec::with_capacity(l + 1);
        let mut pos = 0;
        for g in 0..l {
            starts.push(pos);
            pos += base + usize::from(g < extra);
        }
        starts.push(pos);
        (0..l)
            .map(|g| {
                let (a, b) = (starts[g], starts[g + 1]);
                let share = if g + 1 < l {
                    let next = starts[g + 2] - starts[g + 1];
                    ((self.overlap * (b - a) as f64).round() as usize).min(next)
                } else {
                    0
                };
                (a..b + share).collect()
            })
            .collect()
    }
}

/// Generated dataset with its group structure and planted parameters.
#[derive(Debug, Clone)]
pub struct SyntheticData<T> {
    pub dataset: Dataset<T>,
    pub groups: GroupStructure<T>,
    /// Planted parameters, acting on standardized features through the plain bilinear form.
    pub truth: ParameterSet<T>,
    pub active_groups: Vec<usize>,
    /// Planted linear predictor of every sample.
    pub linear_predictor: Array1<T>,
}

fn signed_effect(rng: &mut ChaCha8Rng, size: f64) -> f64 {
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    sign * size * rng.random_range(0.5..1.5)
}

/// Draws a dataset from the planted model; identical seeds give identical output.
pub fn generate<T: Scalar>(spec: &SyntheticSpec) -> Result<SyntheticData<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, ng, ni) = (spec.n_samples, spec.n_genetic, spec.n_imaging);

    // minor-allele counts in {0, 1, 2}
    let mafs: Vec<f64> = (0..ng).map(|_| rng.random_range(0.05..0.5)).collect();
    let mut genetic = Array2::<T>::zeros((n, ng));
    for j in 0..ng {
        let dist = Binomial::new(2, mafs[j]).expect("valid binomial");
        for k in 0..n {
            genetic[[k, j]] = T::lit(dist.sample(&mut rng) as f64);
        }
    }

    // AR(1)-correlated measures with region-specific location and scale
    let rho = spec.imaging_correlation;
    let loc: Vec<f64> = (0..ni).map(|_| rng.random_range(1.0..5.0)).collect();
    let scl: Vec<f64> = (0..ni).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut imaging = Array2::<T>::zeros((n, ni));
    for k in 0..n {
        let mut prev = 0.0;
        for i in 0..ni {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = if i == 0 { z } else { rho * prev + (1.0 - rho * rho).sqrt() * z };
            prev = x;
            imaging[[k, i]] = T::lit(loc[i] + scl[i] * x);
        }
    }

    let groups = GroupStructure::<T>::new(ng, spec.group_layout())?;
    let mut active_groups = sample(&mut rng, spec.n_groups, spec.active_groups).into_vec();
    active_groups.sort_unstable();
    let mut active_imaging = sample(&mut rng, ni, spec.active_imaging).into_vec();
    active_imaging.sort_unstable();

    let mut truth = ParameterSet::<T>::zeros(ni, groups.expanded_size());
    truth.beta0 = T::lit(spec.beta0);
    for &i in &active_imaging {
        if spec.effect_i != 0.0 {
            truth.beta_i[i] = T::lit(signed_effect(&mut rng, spec.effect_i));
        }
    }
    for &l in &active_groups {
        for g in groups.block_range(l) {
            if spec.effect_g != 0.0 {
                truth.beta_g[g] = T::lit(signed_effect(&mut rng, spec.effect_g));
            }
            if spec.effect_w != 0.0 {
                for &i in &active_imaging {
                    truth.w[[i, g]] = T::lit(signed_effect(&mut rng, spec.effect_w));
                }
            }
        }
    }

    let placeholder = Array1::<T>::zeros(n);
    let raw = Dataset::new(genetic, imaging, placeholder)?;
    let sr = fit_scaler(&raw, Normalization::Sd)?;
    let standardized = Design::raw(&sr.transform(&raw)?, &groups)?;
    let m = linear_predictors(&truth, &standardized)?;

    let mut labels = Array1::<T>::zeros(n);
    for k in 0..n {
        let mut y = rng.random_bool(logistic(m[k]).as_f64().clamp(0.0, 1.0));
        if spec.noise > 0.0 && rng.random_bool(spec.noise) {
            y = !y;
        }
        labels[k] = if y { T::one() } else { T::zero() };
    }
    let dataset = Dataset::new(raw.genetic, raw.imaging, labels)?;
    Ok(SyntheticData {
        dataset,
        groups,
        truth,
        active_groups,
        linear_predictor: m,
    })
}

impl<T: Scalar> SyntheticData<T> {
    /// Writes `genetic.csv`, `imaging.csv`, `labels.csv`, `groups.tsv` and `truth_model.txt`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.dataset.write_csv(
            dir.join("genetic.csv"),
            dir.join("imaging.csv"),
            dir.join("labels.csv"),
        )?;
        fs::write(dir.join("groups.tsv"), self.groups.to_file_string())?;
        fs::write(
            dir.join("truth_model.txt"),
            self.truth.to_model_string(Variant::Multilevel),
        )?;
        Ok(())
    }
}

/// Central differences of the risk, one flat coordinate at a time.
pub fn finite_difference_gradient<T: Scalar>(
    p: &ParameterSet<T>,
    d: &Design<T>,
    step: T,
) -> Result<GradientVector<T>> {
    if !(step > T::zero()) {
        return Err(Error::InvalidInput(format!("finite-difference step must be > 0, got {step}")));
    }
    let (ni, ng) = (p.n_imaging(), p.expanded_size());
    let base = p.to_flat();
    let mut out = Array1::zeros(base.len());
    let two = T::lit(2.0);
    for j in 0..base.len() {
        let mut plus = base.clone();
        plus[j] = plus[j] + step;
        let mut minus = base.clone();
        minus[j] = minus[j] - step;
        let rp = risk(&ParameterSet::from_flat(plus.view(), ni, ng)?, d)?;
        let rm = risk(&ParameterSet::from_flat(minus.view(), ni, ng)?, d)?;
        out[j] = (rp - rm) / (two * step);
    }
    Ok(GradientVector {
        blocks: ParameterSet::from_flat(out.view(), ni, ng)?,
    })
}

/// Largest flat parameter length `reference_solve` accepts.
pub const REFERENCE_MAX_PARAMS: usize = 5000;

/// Long-run solve (`eta = 1e-10`, up to 100 000 iterations) used as ground truth.
pub fn reference_solve<T: Scalar>(
    d: &Design<T>,
    gs: &GroupStructure<T>,
    h: &Hyperparameters<T>,
) -> Result<ParameterSet<T>> {
    let len = crate::params::flat_len(d.n_imaging(), d.expanded_size());
    if len > REFERENCE_MAX_PARAMS {
        return Err(Error::InvalidInput(format!(
            "reference solve limited to {REFERENCE_MAX_PARAMS} parameters, got {len}"
        )));
    }
    let strict = Hyperparameters {
        eta: T::lit(1e-10),
        max_outer_iters: 100_000,
        ..*h
    };
    let (p, state) = fit(d, gs, &strict, None)?;
    if !state.converged {
        return Err(Error::NotConverged {
            iterations: state.iterations,
        });
    }
    Ok(p)
}

/// Derivative-free minimizer (compass search over coordinate and fixed random
/// directions, halving the step on failure). Used as a black-box oracle for
/// small proximal problems.
pub fn pattern_search(f: impl Fn(&[f64]) -> f64, x0: &[f64], initial_step: f64, min_step: f64) -> Vec<f64> {
    let dim = x0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        dirs.push(e.clone());
        e[j] = -1.0;
        dirs.push(e);
    }
    for _ in 0..4 * dim {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        dirs.push(v.iter().map(|x| x / norm).collect());
        dirs.push(v.iter().map(|x| -x / norm).collect());
    }
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut step = initial_step;
    let mut trial = vec![0.0; dim];
    while step > min_step {
        let mut improved = false;
        for d in &dirs {
            for j in 0..dim {
                trial[j] = x[j] + step * d[j];
            }
            let ft = f(&trial);
            if ft < fx {
                fx = ft;
                x.copy_from_slice(&trial);
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    x
}
