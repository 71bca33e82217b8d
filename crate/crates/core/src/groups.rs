//! Gene groups over genetic features, the overlap expansion, and the
//! row-major reshape between interaction matrices and flat vectors.
//!
//! Groups may overlap. Every group gets its own contiguous block in the
//! expanded coordinate system, so a feature shared by two genes appears twice.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::{format_full, Scalar};

/// One group as declared by the caller; `weight: None` means `sqrt(|group|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec<T> {
    pub name: String,
    pub weight: Option<T>,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStructure<T> {
    n_features: usize,
    names: Vec<String>,
    groups: Vec<Vec<usize>>,
    weights: Vec<T>,
    offsets: Vec<usize>,
    expanded_size: usize,
    /// expanded position -> original feature index
    source: Vec<usize>,
}

impl<T: Scalar> GroupStructure<T> {
    /// Groups with default weights and generated names (`group0`, `group1`, ...).
    pub fn new(n_features: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let specs = groups
            .into_iter()
            .enumerate()
            .map(|(l, indices)| GroupSpec {
                name: format!("group{l}"),
                weight: None,
                indices,
            })
            .collect();
        Self::from_specs(n_features, specs)
    }

    pub fn from_specs(n_features: usize, specs: Vec<GroupSpec<T>>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidGroups("no groups defined".into()));
        }
        let mut covered = vec![false; n_features];
        let mut names = Vec::with_capacity(specs.len());
        let mut groups = Vec::with_capacity(specs.len());
        let mut weights = Vec::with_capacity(specs.len());
        for spec in specs {
            if spec.indices.is_empty() {
                return Err(Error::InvalidGroups(format!("group '{}' is empty", spec.name)));
            }
            let mut seen = spec.indices.clone();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidGroups(format!(
                    "group '{}' lists a feature twice",
                    spec.name
                )));
            }
            for &j in &spec.indices {
                if j >= n_features {
                    return Err(Error::InvalidGroups(format!(
                        "group '{}' references feature {j} but only {n_features} exist",
                        spec.name
                    )));
                }
                covered[j] = true;
            }
            let weight = match spec.weight {
                Some(w) if w.is_finite() && w > T::zero() => w,
                Some(w) => {
                    return Err(Error::InvalidGroups(format!(
                        "group '{}' has non-positive weight {w}",
                        spec.name
                    )))
                }
                None => T::lit(spec.indices.len() as f64).sqrt(),
            };
            names.push(spec.name);
            groups.push(spec.indices);
            weights.push(weight);
        }
        if let Some(j) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidGroups(format!(
                "feature {j} belongs to no group"
            )));
        }
        let mut offsets = Vec::with_capacity(groups.len());
        let mut source = Vec::new();
        for g in &groups {
            offsets.push(source.len());
            source.extend_from_slice(g);
        }
        Ok(Self {
            n_features,
            names,
            expanded_size: source.len(),
            groups,
            weights,
            offsets,
            source,
        })
    }

    /// Number of original (unexpanded) genetic features.
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn expanded_size(&self) -> usize {
        self.expanded_size
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Original feature index behind each expanded coordinate.
    pub fn source_indices(&self) -> &[usize] {
        &self.source
    }

    /// Half-open range of group `l` in expanded coordinates.
    pub fn block_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.offsets[l];
        start..start + self.groups[l].len()
    }

    fn check_group(&self, l: usize) -> Result<()> {
        if l >= self.groups.len() {
            return Err(Error::IndexOutOfRange {
                what: "group",
                index: l,
                bound: self.groups.len(),
            });
        }
        Ok(())
    }

    /// Concatenates the per-group copies `(x_{G1}, ..., x_{GL})`.
    pub fn expand_overlap(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        if x.len() != self.n_features {
            return Err(Error::dim("genetic vector", self.n_features, x.len()));
        }
        Ok(self.source.iter().map(|&j| x[j]).collect())
    }

    /// Expands every row of an `N x |G|` matrix.
    pub fn expand_rows(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.n_features {
            return Err(Error::dim("genetic matrix columns", self.n_features, x.ncols()));
        }
        Ok(x.select(Axis(1), &self.source))
    }

    /// Contiguous block of group `l` inside an expanded vector.
    pub fn group_block<'a>(&self, v: ArrayView1<'a, T>, l: usize) -> Result<ArrayView1<'a, T>> {
        self.check_group(l)?;
        if v.len() != self.expanded_size {
            return Err(Error::dim("expanded vector", self.expanded_size, v.len()));
        }
        let r = self.block_range(l);
        Ok(v.slice_move(s![r.start..r.end]))
    }

    /// Slice `W[i, G_l]` of an expanded interaction matrix.
    pub fn interaction_block<'a>(
        &self,
        w: ArrayView2<'a, T>,
        i: usize,
        l: usize,
    ) -> Result<ArrayView1<'a, T>> {
        if i >= w.nrows() {
            return Err(Error::IndexOutOfRange {
                what: "imaging row",
                index: i,
                bound: w.nrows(),
            });
        }
        self.group_block(w.index_axis_move(Axis(0), i), l)
    }

    /// Reads the tab-separated group file:
    /// `name<TAB>weight|auto<TAB>i,j,k` with 0-based feature indices.
    pub fn read_file(path: impl AsRef<Path>, n_features: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text, n_features, &path.display().to_string())
    }

    pub fn parse(text: &str, n_features: usize, source_name: &str) -> Result<Self> {
        let mut specs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("{source_name}:{}", lineno + 1);
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    loc(),
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let weight = match fields[1].trim() {
                "auto" => None,
                w => Some(
                    w.parse::<T>()
                        .map_err(|_| Error::parse(loc(), format!("bad weight '{w}'")))?,
                ),
            };
            let indices = fields[2]
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::parse(loc(), format!("bad feature index '{tok}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            specs.push(GroupSpec {
                name: fields[0].trim().to_string(),
                weight,
                indices,
            });
        }
        Self::from_specs(n_features, specs)
    }

    /// Serializes to the group-file format; weights equal to the default are written as `auto`.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for l in 0..self.n_groups() {
            let default = T::lit(self.groups[l].len() as f64).sqrt();
            let weight = if self.weights[l] == default {
                "auto".to_string()
            } else {
                format_full(self.weights[l])
            };
            let idx: Vec<String> = self.groups[l].iter().map(|j| j.to_string()).collect();
            let _ = writeln!(out, "{}\t{}\t{}", self.names[l], weight, idx.join(","));
        }
        out
    }
}

/// Row-major flattening: `phi(W)[i * cols + g] = W[i, g]`.
pub fn reshape_phi<T: Scalar>(w: ArrayView2<T>) -> Array1<T> {
    w.iter().copied().collect()
}

/// Inverse of [`reshape_phi`].
pub fn reshape_phi_inverse<T: Scalar>(v: ArrayView1<T>, rows: usize, cols: usize) -> Result<Array2<T>> {
    if v.len() != rows * cols {
        return Err(Error::dim("flattened interaction matrix", rows * cols, v.len()));
    }
    Ok(Array2::from_shape_fn((rows, cols), |(i, g)| v[i * cols + g]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use proptest::prelude::*;

    fn overlapping() -> GroupStructure<f64> {
        GroupStructure::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap()
    }

    #[test]
    fn expansion_duplicates_shared_features() {
        let gs = overlapping();
        let x = arr1(&[1.0, 2.0, 3.0]);
        assert_eq!(gs.expand_overlap(x.view()).unwrap(), arr1(&[1.0, 2.0, 2.0, 3.0]));
        assert_eq!(gs.expanded_size(), 4);
        assert_eq!(gs.offsets(), &[0, 2]);
    }

    #[test]
    fn disjoint_groups_permute() {
        let gs = GroupStructure::<f64>::new(4, vec![vec![2, 0], vec![3, 1]]).unwrap();
        let x = arr1(&[10.0, 11.0, 12.0, 13.0]);
        let e = gs.expand_overlap(x.view()).unwrap();
        assert_eq!(e, arr1(&[12.0, 10.0, 13.0, 11.0]));
        let mut a = e.to_vec();
        a.sort_by(f64::total_cmp);
        assert_eq!(a, x.to_vec());
    }

    #[test]
    fn full_duplication() {
        let gs = GroupStructure::<f64>::new(1, vec![vec![0], vec![0]]).unwrap();
        assert_eq!(gs.expand_overlap(arr1(&[5.0]).view()).unwrap(), arr1(&[5.0, 5.0]));
    }

    #[test]
    fn expansion_length_mismatch_names_dimensions() {
        let err = overlapping().expand_overlap(arr1(&[1.0, 2.0]).view()).unwrap_err();
        match err {
            Error::DimensionMismatch { expected, actual, .. } => {
                assert_eq!((expected, actual), (3, 2));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn default_weights_are_sqrt_sizes() {
        let gs = GroupStructure::<f64>::new(5, vec![vec![0, 1, 2, 3], vec![4]]).unwrap();
        assert_eq!(gs.weights(), &[2.0, 1.0]);
    }

    #[test]
    fn rejects_uncovered_and_bad_groups() {
        assert!(GroupStructure::<f64>::new(3, vec![vec![0, 1]]).is_err());
        assert!(GroupStructure::<f64>::new(3, vec![vec![0, 1, 2], vec![]]).is_err());
        assert!(GroupStructure::<f64>::new(3, vec![vec![0, 1, 3]]).is_err());
        assert!(GroupStructure::<f64>::new(3, vec![vec![0, 1, 2, 2]]).is_err());
        assert!(GroupStructure::<f64>::new(0, vec![]).is_err());
    }

    #[test]
    fn phi_is_row_major() {
        let w = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(reshape_phi(w.view()), arr1(&[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(reshape_phi(Array2::<f64>::zeros((2, 3)).view()), Array1::zeros(6));
        assert!(reshape_phi_inverse(arr1(&[1.0, 2.0, 3.0]).view(), 2, 2).is_err());
    }

    #[test]
    fn group_and_interaction_blocks() {
        let gs = overlapping();
        let v = arr1(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(gs.group_block(v.view(), 0).unwrap(), arr1(&[1.0, 2.0]));
        assert_eq!(gs.group_block(v.view(), 1).unwrap(), arr1(&[3.0, 4.0]));
        assert!(gs.group_block(v.view(), 2).is_err());
        let w = Array2::<f64>::zeros((3, 4));
        assert_eq!(gs.interaction_block(w.view(), 2, 1).unwrap(), arr1(&[0.0, 0.0]));
        assert!(gs.interaction_block(w.view(), 3, 0).is_err());
    }

    #[test]
    fn group_file_round_trip() {
        let text = "APOE\tauto\t0,1\nTOMM40\t2.5\t1,2\n\n# comment\n";
        let gs = GroupStructure::<f64>::parse(text, 3, "mem").unwrap();
        assert_eq!(gs.names(), &["APOE".to_string(), "TOMM40".to_string()]);
        assert_eq!(gs.weights()[1], 2.5);
        let again = GroupStructure::<f64>::parse(&gs.to_file_string(), 3, "mem").unwrap();
        assert_eq!(gs, again);
        assert!(GroupStructure::<f64>::parse("A\tauto\t0,x\n", 3, "mem").is_err());
        assert!(GroupStructure::<f64>::parse("A\tauto\n", 3, "mem").is_err());
    }

    proptest! {
        #[test]
        fn expansion_is_linear(
            x in proptest::collection::vec(-10.0f64..10.0, 5),
            y in proptest::collection::vec(-10.0f64..10.0, 5),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let gs = GroupStructure::<f64>::new(5, vec![vec![0, 1, 2], vec![2, 3], vec![4, 0]]).unwrap();
            let x = Array1::from(x);
            let y = Array1::from(y);
            let lhs = gs.expand_overlap((&x * a + &y * b).view()).unwrap();
            let rhs = gs.expand_overlap(x.view()).unwrap() * a + gs.expand_overlap(y.view()).unwrap() * b;
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
            }
        }

        #[test]
        fn disjoint_expansion_preserves_norm(x in proptest::collection::vec(-10.0f64..10.0, 6)) {
            let gs = GroupStructure::<f64>::new(6, vec![vec![5, 1], vec![0, 2, 4], vec![3]]).unwrap();
            let x = Array1::from(x);
            let e = gs.expand_overlap(x.view()).unwrap();
            prop_assert!((e.dot(&e) - x.dot(&x)).abs() <= 1e-12 * (1.0 + x.dot(&x)));
        }

        #[test]
        fn phi_round_trips(v in proptest::collection::vec(-1e6f64..1e6, 15)) {
            let v = Array1::from(v);
            let w = reshape_phi_inverse(v.view(), 3, 5).unwrap();
            prop_assert_eq!(&reshape_phi(w.view()), &v);
            prop_assert_eq!(reshape_phi_inverse(reshape_phi(w.view()).view(), 3, 5).unwrap(), w);
        }
    }
}
