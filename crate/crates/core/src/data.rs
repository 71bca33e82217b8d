//! Labeled samples, the model-ready design, and CSV input/output.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::groups::GroupStructure;
use crate::scalar::{format_full, Scalar};

/// Raw samples: genetic matrix `N x |G|`, imaging matrix `N x |I|`, labels in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub genetic: Array2<T>,
    pub imaging: Array2<T>,
    pub labels: Array1<T>,
    pub genetic_names: Vec<String>,
    pub imaging_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    /// Validates shapes, finiteness and label values; column names default to `g0..`, `i0..`.
    pub fn new(genetic: Array2<T>, imaging: Array2<T>, labels: Array1<T>) -> Result<Self> {
        let gn = (0..genetic.ncols()).map(|j| format!("g{j}")).collect();
        let inames = (0..imaging.ncols()).map(|j| format!("i{j}")).collect();
        Self::with_names(genetic, imaging, labels, gn, inames)
    }

    pub fn with_names(
        genetic: Array2<T>,
        imaging: Array2<T>,
        labels: Array1<T>,
        genetic_names: Vec<String>,
        imaging_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if genetic.nrows() != n {
            return Err(Error::dim("genetic rows", n, genetic.nrows()));
        }
        if imaging.nrows() != n {
            return Err(Error::dim("imaging rows", n, imaging.nrows()));
        }
        if genetic_names.len() != genetic.ncols() {
            return Err(Error::dim("genetic column names", genetic.ncols(), genetic_names.len()));
        }
        if imaging_names.len() != imaging.ncols() {
            return Err(Error::dim("imaging column names", imaging.ncols(), imaging_names.len()));
        }
        if genetic.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("genetic matrix has missing or non-finite values".into()));
        }
        if imaging.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("imaging matrix has missing or non-finite values".into()));
        }
        if let Some(k) = labels.iter().position(|&y| y != T::zero() && y != T::one()) {
            return Err(Error::InvalidInput(format!(
                "label at row {k} is {}, expected 0 or 1",
                labels[k]
            )));
        }
        Ok(Self {
            genetic,
            imaging,
            labels,
            genetic_names,
            imaging_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_genetic(&self) -> usize {
        self.genetic.ncols()
    }

    pub fn n_imaging(&self) -> usize {
        self.imaging.ncols()
    }

    pub fn label_bools(&self) -> Vec<bool> {
        self.labels.iter().map(|&y| y == T::one()).collect()
    }

    /// Rows `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            genetic: self.genetic.select(Axis(0), rows),
            imaging: self.imaging.select(Axis(0), rows),
            labels: self.labels.select(Axis(0), rows),
            genetic_names: self.genetic_names.clone(),
            imaging_names: self.imaging_names.clone(),
        }
    }

    /// Loads the three CSV files (each with a header row).
    pub fn read_csv(
        genetic: impl AsRef<Path>,
        imaging: impl AsRef<Path>,
        labels: impl AsRef<Path>,
    ) -> Result<Self> {
        let (gn, g) = read_matrix_csv(genetic)?;
        let (inames, i) = read_matrix_csv(imaging)?;
        let (_, y) = read_matrix_csv::<T>(labels.as_ref())?;
        if y.ncols() != 1 {
            return Err(Error::dim(
                format!("label columns in {}", labels.as_ref().display()),
                1,
                y.ncols(),
            ));
        }
        Self::with_names(g, i, y.column(0).to_owned(), gn, inames)
    }

    pub fn write_csv(
        &self,
        genetic: impl AsRef<Path>,
        imaging: impl AsRef<Path>,
        labels: impl AsRef<Path>,
    ) -> Result<()> {
        write_matrix_csv(genetic, &self.genetic_names, self.genetic.view())?;
        write_matrix_csv(imaging, &self.imaging_names, self.imaging.view())?;
        let y = self.labels.view().insert_axis(Axis(1));
        write_matrix_csv(labels, &["label".to_string()], y)
    }
}

/// Reads a numeric CSV with a header row.
pub fn read_matrix_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<(Vec<String>, Array2<T>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::parse(
                format!("{}:{}", path.display(), r + 2),
                format!("expected {} fields, found {}", names.len(), rec.len()),
            ));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: T = field.parse().map_err(|_| {
                Error::parse(
                    format!("{}:{} column '{}'", path.display(), r + 2, names[c]),
                    format!("not a number: '{field}'"),
                )
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let m = Array2::from_shape_vec((rows, names.len()), values)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((names, m))
}

pub fn write_matrix_csv<T: Scalar>(
    path: impl AsRef<Path>,
    names: &[String],
    m: ArrayView2<T>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|&v| format_full(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reorders columns of `m` (named `names`) into the order `wanted`.
pub fn reorder_columns<T: Scalar>(
    m: ArrayView2<T>,
    names: &[String],
    wanted: &[String],
    what: &str,
) -> Result<Array2<T>> {
    if names.len() != wanted.len() {
        return Err(Error::dim(format!("{what} columns"), wanted.len(), names.len()));
    }
    let idx = wanted
        .iter()
        .map(|w| {
            names
                .iter()
                .position(|n| n == w)
                .ok_or_else(|| Error::InvalidInput(format!("{what} column '{w}' not found")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(m.select(Axis(1), &idx))
}

/// Centering and scaling applied to the interaction features `xI[i] * xG[g]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossScaling<T> {
    /// `|I| x expanded_size`
    pub mean: Array2<T>,
    /// reciprocal scales, `|I| x expanded_size`
    pub inv_scale: Array2<T>,
}

/// Model-ready matrices: expanded genetic features, imaging features, labels,
/// and optionally the standardization of the interaction features.
///
/// With `cross = None` the interaction term is the plain bilinear form
/// `xG^T W^T xI`. With `cross = Some(c)` the feature paired with `W[i, g]` is
/// `(xI[i] * xG[g] - c.mean[i, g]) * c.inv_scale[i, g]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<T> {
    /// `N x expanded_size`
    pub genetic: Array2<T>,
    /// `N x |I|`
    pub imaging: Array2<T>,
    pub labels: Array1<T>,
    pub cross: Option<CrossScaling<T>>,
}

impl<T: Scalar> Design<T> {
    /// Expands the dataset without any standardization.
    pub fn raw(d: &Dataset<T>, gs: &GroupStructure<T>) -> Result<Self> {
        Ok(Self {
            genetic: gs.expand_rows(d.genetic.view())?,
            imaging: d.imaging.clone(),
            labels: d.labels.clone(),
            cross: None,
        })
    }

    pub fn new(
        genetic: Array2<T>,
        imaging: Array2<T>,
        labels: Array1<T>,
        cross: Option<CrossScaling<T>>,
    ) -> Result<Self> {
        let n = labels.len();
        if genetic.nrows() != n {
            return Err(Error::dim("genetic rows", n, genetic.nrows()));
        }
        if imaging.nrows() != n {
            return Err(Error::dim("imaging rows", n, imaging.nrows()));
        }
        if let Some(c) = &cross {
            let shape = (imaging.ncols(), genetic.ncols());
            if c.mean.dim() != shape || c.inv_scale.dim() != shape {
                return Err(Error::dim(
                    "cross-product scaling entries",
                    shape.0 * shape.1,
                    c.mean.len(),
                ));
            }
        }
        Ok(Self {
            genetic,
            imaging,
            labels,
            cross,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_imaging(&self) -> usize {
        self.imaging.ncols()
    }

    pub fn expanded_size(&self) -> usize {
        self.genetic.ncols()
    }

    /// Interaction feature paired with `W[i, g]` for sample `k`.
    pub fn cross_value(&self, k: usize, i: usize, g: usize) -> T {
        let raw = self.imaging[[k, i]] * self.genetic[[k, g]];
        match &self.cross {
            None => raw,
            Some(c) => (raw - c.mean[[i, g]]) * c.inv_scale[[i, g]],
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            genetic: self.genetic.select(Axis(0), rows),
            imaging: self.imaging.select(Axis(0), rows),
            labels: self.labels.select(Axis(0), rows),
            cross: self.cross.clone(),
        }
    }

    pub(crate) fn check_params(&self, p: &crate::params::ParameterSet<T>) -> Result<()> {
        p.check_dims(self.n_imaging(), self.expanded_size())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn rejects_bad_labels_and_shapes() {
        let g = arr2(&[[0.0], [1.0]]);
        let i = arr2(&[[1.0], [2.0]]);
        assert!(Dataset::new(g.clone(), i.clone(), arr1(&[0.0, 2.0])).is_err());
        assert!(Dataset::new(g.clone(), i.clone(), arr1(&[0.0])).is_err());
        assert!(Dataset::new(arr2(&[[f64::NAN], [1.0]]), i.clone(), arr1(&[0.0, 1.0])).is_err());
        assert!(Dataset::new(g, i, arr1(&[0.0, 1.0])).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::new(
            arr2(&[[0.0, 1.0], [2.0, 1.0], [1.0, 0.0]]),
            arr2(&[[0.25], [-1.5], [1.0 / 3.0]]),
            arr1(&[0.0, 1.0, 1.0]),
        )
        .unwrap();
        let p = |s: &str| dir.path().join(s);
        d.write_csv(p("g.csv"), p("i.csv"), p("y.csv")).unwrap();
        let back = Dataset::<f64>::read_csv(p("g.csv"), p("i.csv"), p("y.csv")).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_parse_errors_name_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n3,x\n").unwrap();
        let err = read_matrix_csv::<f64>(&path).unwrap_err().to_string();
        assert!(err.contains(":3") && err.contains("'b'"), "{err}");
    }

    #[test]
    fn reorder_by_name() {
        let m = arr2(&[[1.0, 2.0, 3.0]]);
        let names: Vec<String> = ["b", "c", "a"].iter().map(|s| s.to_string()).collect();
        let wanted: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = reorder_columns(m.view(), &names, &wanted, "x").unwrap();
        assert_eq!(r, arr2(&[[3.0, 1.0, 2.0]]));
        let missing: Vec<String> = ["a", "b", "z"].iter().map(|s| s.to_string()).collect();
        assert!(reorder_columns(m.view(), &names, &missing, "x").is_err());
    }
}
