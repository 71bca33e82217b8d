//! Centering and scaling of genetic, imaging, and interaction features.
//!
//! Statistics are computed on the original genetic columns, before overlap
//! expansion; duplicated copies inherit their source column's statistics.
//! Interaction features are products of the standardized imaging and genetic
//! features, and are themselves centered and scaled.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::data::{CrossScaling, Dataset, Design};
use crate::error::{Error, Result};
use crate::groups::GroupStructure;
use crate::scalar::{format_full, Scalar};

/// How a centered column is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Unit population standard deviation.
    #[default]
    Sd,
    /// Unit Euclidean norm of the centered column.
    UnitNorm,
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sd" => Ok(Normalization::Sd),
            "unit-norm" => Ok(Normalization::UnitNorm),
            other => Err(Error::InvalidInput(format!(
                "unknown normalization '{other}' (expected sd or unit-norm)"
            ))),
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::Sd => "sd",
            Normalization::UnitNorm => "unit-norm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats<T> {
    pub mean: T,
    pub scale: T,
    /// Constant columns are only centered (`scale == 1`).
    pub constant: bool,
}

/// Training-set statistics for every feature family.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRecord<T> {
    pub normalization: Normalization,
    pub genetic: Vec<ColumnStats<T>>,
    pub imaging: Vec<ColumnStats<T>>,
    /// Interaction statistics on original genetic columns, `|I| x |G|`.
    pub cross_mean: Array2<T>,
    pub cross_scale: Array2<T>,
    pub cross_constant: Array2<bool>,
    pub genetic_names: Vec<String>,
    pub imaging_names: Vec<String>,
}

fn scale_from_variance<T: Scalar>(var: T, n: usize, mode: Normalization) -> T {
    match mode {
        Normalization::Sd => var.sqrt(),
        Normalization::UnitNorm => (var * T::lit(n as f64)).sqrt(),
    }
}

/// Two-pass mean and population variance.
fn column_stats<T: Scalar>(col: ArrayView1<T>, mode: Normalization) -> ColumnStats<T> {
    let n = T::lit(col.len() as f64);
    let mut sum = T::zero();
    for &x in col {
        sum = sum + x;
    }
    let mean = sum / n;
    let mut ss = T::zero();
    let mut max_abs = T::zero();
    for &x in col {
        ss = ss + (x - mean) * (x - mean);
        max_abs = max_abs.max(x.abs());
    }
    let var = ss / n;
    let sd = var.sqrt();
    let constant = sd <= T::lit(1e-12) * max_abs || max_abs.is_zero();
    if constant {
        ColumnStats {
            mean,
            scale: T::one(),
            constant: true,
        }
    } else {
        ColumnStats {
            mean,
            scale: scale_from_variance(var, col.len(), mode),
            constant: false,
        }
    }
}

fn standardize<T: Scalar>(x: ArrayView2<T>, stats: &[ColumnStats<T>]) -> Array2<T> {
    let mut out = x.to_owned();
    for (mut col, st) in out.axis_iter_mut(Axis(1)).zip(stats) {
        col.mapv_inplace(|v| (v - st.mean) / st.scale);
    }
    out
}

/// Fits column statistics on a training dataset (needs at least two samples).
pub fn fit_scaler<T: Scalar>(d: &Dataset<T>, mode: Normalization) -> Result<ScalingRecord<T>> {
    let n = d.n_samples();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples to fit a scaler, got {n}"
        )));
    }
    let genetic: Vec<_> = d.genetic.columns().into_iter().map(|c| column_stats(c, mode)).collect();
    let imaging: Vec<_> = d.imaging.columns().into_iter().map(|c| column_stats(c, mode)).collect();
    let zg = standardize(d.genetic.view(), &genetic);
    let zi = standardize(d.imaging.view(), &imaging);

    // Interaction moments without materializing the N x (|I||G|) matrix:
    // E[a b] = zi^T zg / N and E[(a b)^2] = (zi^2)^T (zg^2) / N.
    let inv_n = T::one() / T::lit(n as f64);
    let cross_mean = zi.t().dot(&zg) * inv_n;
    let second = zi.mapv(|v| v * v).t().dot(&zg.mapv(|v| v * v)) * inv_n;
    let tol = T::epsilon() * T::lit(64.0);
    let mut cross_scale = Array2::zeros(cross_mean.dim());
    let mut cross_constant = Array2::from_elem(cross_mean.dim(), false);
    Zip::from(&mut cross_scale)
        .and(&mut cross_constant)
        .and(&cross_mean)
        .and(&second)
        .for_each(|sc, cst, &mu, &m2| {
            let var = (m2 - mu * mu).max(T::zero());
            if m2.is_zero() || var <= tol * m2 {
                *sc = T::one();
                *cst = true;
            } else {
                *sc = scale_from_variance(var, n, mode);
            }
        });
    Ok(ScalingRecord {
        normalization: mode,
        genetic,
        imaging,
        cross_mean,
        cross_scale,
        cross_constant,
        genetic_names: d.genetic_names.clone(),
        imaging_names: d.imaging_names.clone(),
    })
}

impl<T: Scalar> ScalingRecord<T> {
    pub fn n_genetic(&self) -> usize {
        self.genetic.len()
    }

    pub fn n_imaging(&self) -> usize {
        self.imaging.len()
    }

    fn check_shapes(&self, n_genetic: usize, n_imaging: usize) -> Result<()> {
        if n_genetic != self.n_genetic() {
            return Err(Error::dim("genetic columns", self.n_genetic(), n_genetic));
        }
        if n_imaging != self.n_imaging() {
            return Err(Error::dim("imaging columns", self.n_imaging(), n_imaging));
        }
        Ok(())
    }

    /// Standardized copy of the dataset; the record is not modified.
    pub fn transform(&self, d: &Dataset<T>) -> Result<Dataset<T>> {
        self.check_shapes(d.n_genetic(), d.n_imaging())?;
        Ok(Dataset {
            genetic: standardize(d.genetic.view(), &self.genetic),
            imaging: standardize(d.imaging.view(), &self.imaging),
            labels: d.labels.clone(),
            genetic_names: d.genetic_names.clone(),
            imaging_names: d.imaging_names.clone(),
        })
    }

    /// Standardizes one sample given as raw genetic and imaging vectors.
    pub fn transform_row(&self, xg: ArrayView1<T>, xi: ArrayView1<T>) -> Result<(Array1<T>, Array1<T>)> {
        self.check_shapes(xg.len(), xi.len())?;
        let g = Zip::from(xg).and(&self.genetic[..]).map_collect(|&v, st| (v - st.mean) / st.scale);
        let i = Zip::from(xi).and(&self.imaging[..]).map_collect(|&v, st| (v - st.mean) / st.scale);
        Ok((g, i))
    }

    /// Interaction scaling in expanded coordinates.
    pub fn cross_scaling(&self, gs: &GroupStructure<T>) -> Result<CrossScaling<T>> {
        if gs.n_features() != self.n_genetic() {
            return Err(Error::dim("group structure features", self.n_genetic(), gs.n_features()));
        }
        let src = gs.source_indices();
        Ok(CrossScaling {
            mean: self.cross_mean.select(Axis(1), src),
            inv_scale: self.cross_scale.select(Axis(1), src).mapv(|s| T::one() / s),
        })
    }

    /// Standardized, expanded design with standardized interaction features.
    pub fn design(&self, d: &Dataset<T>, gs: &GroupStructure<T>) -> Result<Design<T>> {
        let t = self.transform(d)?;
        Design::new(
            gs.expand_rows(t.genetic.view())?,
            t.imaging,
            t.labels,
            Some(self.cross_scaling(gs)?),
        )
    }

    /// Versioned text form: one line per column with index, mean, scale and constant flag.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# structprox scaler v1");
        let _ = writeln!(out, "normalization\t{}", self.normalization);
        let _ = writeln!(out, "dims\t{}\t{}", self.n_genetic(), self.n_imaging());
        let flag = |c: bool| if c { 1 } else { 0 };
        for (j, st) in self.genetic.iter().enumerate() {
            let _ = writeln!(
                out,
                "genetic\t{j}\t{}\t{}\t{}\t{}",
                self.genetic_names[j],
                format_full(st.mean),
                format_full(st.scale),
                flag(st.constant)
            );
        }
        for (j, st) in self.imaging.iter().enumerate() {
            let _ = writeln!(
                out,
                "imaging\t{j}\t{}\t{}\t{}\t{}",
                self.imaging_names[j],
                format_full(st.mean),
                format_full(st.scale),
                flag(st.constant)
            );
        }
        for ((i, g), mu) in self.cross_mean.indexed_iter() {
            let _ = writeln!(
                out,
                "cross\t{i}\t{g}\t{}\t{}\t{}",
                format_full(*mu),
                format_full(self.cross_scale[[i, g]]),
                flag(self.cross_constant[[i, g]])
            );
        }
        out
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut normalization = Normalization::Sd;
        let mut rec: Option<Self> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("{source_name}:{}", lineno + 1);
            let f: Vec<&str> = line.split('\t').collect();
            let field = |k: usize| f.get(k).copied().ok_or_else(|| Error::parse(loc(), "missing field"));
            let num = |k: usize| -> Result<T> {
                field(k)?.parse().map_err(|_| Error::parse(loc(), format!("bad number in field {k}")))
            };
            let idx = |k: usize| -> Result<usize> {
                field(k)?.parse().map_err(|_| Error::parse(loc(), format!("bad index in field {k}")))
            };
            let flag = |k: usize| -> Result<bool> {
                match field(k)? {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    _ => Err(Error::parse(loc(), "constant flag must be 0 or 1")),
                }
            };
            match f[0] {
                "normalization" => normalization = field(1)?.parse()?,
                "dims" => {
                    let (ng, ni) = (idx(1)?, idx(2)?);
                    let unset = ColumnStats { mean: T::zero(), scale: T::one(), constant: false };
                    rec = Some(ScalingRecord {
                        normalization,
                        genetic: vec![unset; ng],
                        imaging: vec![unset; ni],
                        cross_mean: Array2::zeros((ni, ng)),
                        cross_scale: Array2::ones((ni, ng)),
                        cross_constant: Array2::from_elem((ni, ng), false),
                        genetic_names: vec![String::new(); ng],
                        imaging_names: vec![String::new(); ni],
                    });
                }
                kind @ ("genetic" | "imaging") => {
                    let r = rec.as_mut().ok_or_else(|| Error::parse(loc(), "entry before dims line"))?;
                    let j = idx(1)?;
                    let (stats, names) = if kind == "genetic" {
                        (&mut r.genetic, &mut r.genetic_names)
                    } else {
                        (&mut r.imaging, &mut r.imaging_names)
                    };
                    if j >= stats.len() {
                        return Err(Error::parse(loc(), "column index out of range"));
                    }
                    names[j] = field(2)?.to_string();
                    stats[j] = ColumnStats { mean: num(3)?, scale: num(4)?, constant: flag(5)? };
                }
                "cross" => {
                    let r = rec.as_mut().ok_or_else(|| Error::parse(loc(), "entry before dims line"))?;
                    let (i, g) = (idx(1)?, idx(2)?);
                    if i >= r.cross_mean.nrows() || g >= r.cross_mean.ncols() {
                        return Err(Error::parse(loc(), "cross index out of range"));
                    }
                    r.cross_mean[[i, g]] = num(3)?;
                    r.cross_scale[[i, g]] = num(4)?;
                    r.cross_constant[[i, g]] = flag(5)?;
                }
                other => return Err(Error::parse(loc(), format!("unknown record '{other}'"))),
            }
        }
        let mut r = rec.ok_or_else(|| Error::parse(source_name, "missing dims line"))?;
        r.normalization = normalization;
        let bad_scale = r.genetic.iter().chain(r.imaging.iter()).any(|s| !(s.scale > T::zero()))
            || r.cross_scale.iter().any(|s| !(*s > T::zero()));
        if bad_scale {
            return Err(Error::parse(source_name, "scales must be positive"));
        }
        Ok(r)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, &path.display().to_string())
    }
}
