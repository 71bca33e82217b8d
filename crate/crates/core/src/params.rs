//! Model parameters, hyperparameters, and the text model file.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::groups::{reshape_phi, reshape_phi_inverse, GroupStructure};
use crate::scalar::{format_full, Scalar};

/// Which parameter blocks the model is allowed to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    /// `W`, `beta_I`, `beta_G` and `beta0`.
    #[default]
    Multilevel,
    /// `beta_I`, `beta_G` and `beta0`; `W` is held at zero.
    Additive,
    /// `W` and `beta0`; `beta_I` and `beta_G` are held at zero.
    Multiplicative,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Additive, Variant::Multiplicative, Variant::Multilevel];

    pub fn uses_interaction(self) -> bool {
        !matches!(self, Variant::Additive)
    }

    pub fn uses_main_effects(self) -> bool {
        !matches!(self, Variant::Multiplicative)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Multilevel => "multilevel",
            Variant::Additive => "additive",
            Variant::Multiplicative => "multiplicative",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "multilevel" | "all" => Ok(Variant::Multilevel),
            "additive" => Ok(Variant::Additive),
            "multiplicative" => Ok(Variant::Multiplicative),
            other => Err(Error::InvalidInput(format!("unknown variant '{other}'"))),
        }
    }
}

/// Penalty strengths and solver constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters<T> {
    pub lambda_w: T,
    pub lambda_i: T,
    pub lambda_g: T,
    /// Backtracking shrink factor.
    pub delta: T,
    /// Stepsize each outer iteration starts from.
    pub epsilon0: T,
    /// Relative objective-change stopping tolerance.
    pub eta: T,
    pub max_outer_iters: usize,
    pub variant: Variant,
}

impl<T: Scalar> Hyperparameters<T> {
    /// Given penalties with the default solver constants (`delta = 0.8`, `epsilon0 = 1`, `eta = 1e-5`).
    pub fn new(lambda_w: T, lambda_i: T, lambda_g: T) -> Self {
        Self {
            lambda_w,
            lambda_i,
            lambda_g,
            delta: T::lit(0.8),
            epsilon0: T::one(),
            eta: T::lit(1e-5),
            max_outer_iters: 10_000,
            variant: Variant::Multilevel,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_eta(mut self, eta: T) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_max_outer_iters(mut self, n: usize) -> Self {
        self.max_outer_iters = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: T| {
            if v.is_finite() && v > T::zero() {
                Ok(())
            } else {
                Err(Error::InvalidHyperparameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                })
            }
        };
        positive("lambda_w", self.lambda_w)?;
        positive("lambda_i", self.lambda_i)?;
        positive("lambda_g", self.lambda_g)?;
        positive("epsilon0", self.epsilon0)?;
        positive("eta", self.eta)?;
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::InvalidHyperparameter {
                name: "delta",
                reason: format!("must lie in (0, 1), got {}", self.delta),
            });
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidHyperparameter {
                name: "max_outer_iters",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// `(W, beta_I, beta_G, beta0)` in expanded genetic coordinates.
///
/// The flat layout is `(phi(W), beta_I, beta_G, beta0)` with `phi` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    /// `|I| x expanded_size`
    pub w: Array2<T>,
    pub beta_i: Array1<T>,
    pub beta_g: Array1<T>,
    pub beta0: T,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn zeros(n_imaging: usize, expanded_size: usize) -> Self {
        Self {
            w: Array2::zeros((n_imaging, expanded_size)),
            beta_i: Array1::zeros(n_imaging),
            beta_g: Array1::zeros(expanded_size),
            beta0: T::zero(),
        }
    }

    pub fn n_imaging(&self) -> usize {
        self.beta_i.len()
    }

    pub fn expanded_size(&self) -> usize {
        self.beta_g.len()
    }

    pub fn flat_len(&self) -> usize {
        flat_len(self.n_imaging(), self.expanded_size())
    }

    pub fn check_dims(&self, n_imaging: usize, expanded_size: usize) -> Result<()> {
        if self.w.dim() != (n_imaging, expanded_size) {
            return Err(Error::dim(
                format!("interaction matrix ({}x{})", self.w.nrows(), self.w.ncols()),
                n_imaging * expanded_size,
                self.w.len(),
            ));
        }
        if self.beta_i.len() != n_imaging {
            return Err(Error::dim("beta_i", n_imaging, self.beta_i.len()));
        }
        if self.beta_g.len() != expanded_size {
            return Err(Error::dim("beta_g", expanded_size, self.beta_g.len()));
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Array1<T> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend(reshape_phi(self.w.view()));
        out.extend(self.beta_i.iter().copied());
        out.extend(self.beta_g.iter().copied());
        out.push(self.beta0);
        Array1::from(out)
    }

    pub fn from_flat(v: ArrayView1<T>, n_imaging: usize, expanded_size: usize) -> Result<Self> {
        let expected = flat_len(n_imaging, expanded_size);
        if v.len() != expected {
            return Err(Error::dim("flat parameter vector", expected, v.len()));
        }
        let nw = n_imaging * expanded_size;
        let w = reshape_phi_inverse(v.slice(ndarray::s![..nw]), n_imaging, expanded_size)?;
        let beta_i = v.slice(ndarray::s![nw..nw + n_imaging]).to_owned();
        let beta_g = v
            .slice(ndarray::s![nw + n_imaging..nw + n_imaging + expanded_size])
            .to_owned();
        Ok(Self {
            w,
            beta_i,
            beta_g,
            beta0: v[expected - 1],
        })
    }

    /// Inner product over all four blocks.
    pub fn dot(&self, other: &Self) -> T {
        let mut acc = self.beta0 * other.beta0;
        acc = acc + Zip::from(&self.w).and(&other.w).fold(T::zero(), |a, &x, &y| a + x * y);
        acc = acc + self.beta_i.dot(&other.beta_i);
        acc + self.beta_g.dot(&other.beta_g)
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    /// `(self - other) / scale`, block by block.
    pub fn scaled_difference(&self, other: &Self, scale: T) -> Self {
        let inv = T::one() / scale;
        Self {
            w: (&self.w - &other.w) * inv,
            beta_i: (&self.beta_i - &other.beta_i) * inv,
            beta_g: (&self.beta_g - &other.beta_g) * inv,
            beta0: (self.beta0 - other.beta0) * inv,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.beta0.is_finite()
            && self.w.iter().all(|x| x.is_finite())
            && self.beta_i.iter().all(|x| x.is_finite())
            && self.beta_g.iter().all(|x| x.is_finite())
    }

    /// Zeroes the blocks the variant excludes.
    pub fn restrict_to(&mut self, variant: Variant) {
        if !variant.uses_interaction() {
            self.w.fill(T::zero());
        }
        if !variant.uses_main_effects() {
            self.beta_i.fill(T::zero());
            self.beta_g.fill(T::zero());
        }
    }

    /// Groups with a nonzero `beta_G` block or any nonzero `W[i, G_l]` block.
    pub fn active_groups(&self, gs: &GroupStructure<T>) -> Vec<usize> {
        (0..gs.n_groups())
            .filter(|&l| {
                let r = gs.block_range(l);
                self.beta_g.slice(ndarray::s![r.clone()]).iter().any(|x| !x.is_zero())
                    || self
                        .w
                        .slice(ndarray::s![.., r])
                        .iter()
                        .any(|x| !x.is_zero())
            })
            .collect()
    }

    /// Writes the block-tagged model text format. Only nonzero entries are listed.
    pub fn to_model_string(&self, variant: Variant) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# structprox model v1");
        let _ = writeln!(out, "dims\t{}\t{}", self.n_imaging(), self.expanded_size());
        let _ = writeln!(out, "variant\t{variant}");
        let _ = writeln!(out, "beta0\t{}", format_full(self.beta0));
        for (i, v) in self.beta_i.iter().enumerate().filter(|(_, v)| !v.is_zero()) {
            let _ = writeln!(out, "beta_i\t{i}\t{}", format_full(*v));
        }
        for (g, v) in self.beta_g.iter().enumerate().filter(|(_, v)| !v.is_zero()) {
            let _ = writeln!(out, "beta_g\t{g}\t{}", format_full(*v));
        }
        for ((i, g), v) in self.w.indexed_iter().filter(|(_, v)| !v.is_zero()) {
            let _ = writeln!(out, "w\t{i}\t{g}\t{}", format_full(*v));
        }
        out
    }

    pub fn parse_model(text: &str, source_name: &str) -> Result<(Self, Variant)> {
        let mut params: Option<Self> = None;
        let mut variant = Variant::Multilevel;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("{source_name}:{}", lineno + 1);
            let f: Vec<&str> = line.split('\t').collect();
            let idx = |k: usize| -> Result<usize> {
                f.get(k)
                    .ok_or_else(|| Error::parse(loc(), "missing index"))?
                    .parse()
                    .map_err(|_| Error::parse(loc(), "bad index"))
            };
            let val = |k: usize| -> Result<T> {
                f.get(k)
                    .ok_or_else(|| Error::parse(loc(), "missing value"))?
                    .parse()
                    .map_err(|_| Error::parse(loc(), "bad value"))
            };
            if f[0] == "dims" {
                params = Some(Self::zeros(idx(1)?, idx(2)?));
                continue;
            }
            if f[0] == "variant" {
                variant = f.get(1).copied().unwrap_or("").parse()?;
                continue;
            }
            let p = params
                .as_mut()
                .ok_or_else(|| Error::parse(loc(), "entry before dims line"))?;
            let oob = || Error::parse(loc(), "index out of range");
            match f[0] {
                "beta0" => p.beta0 = val(1)?,
                "beta_i" => *p.beta_i.get_mut(idx(1)?).ok_or_else(oob)? = val(2)?,
                "beta_g" => *p.beta_g.get_mut(idx(1)?).ok_or_else(oob)? = val(2)?,
                "w" => *p.w.get_mut((idx(1)?, idx(2)?)).ok_or_else(oob)? = val(3)?,
                other => return Err(Error::parse(loc(), format!("unknown block '{other}'"))),
            }
        }
        let p = params.ok_or_else(|| Error::parse(source_name, "missing dims line"))?;
        Ok((p, variant))
    }
}

pub fn flat_len(n_imaging: usize, expanded_size: usize) -> usize {
    n_imaging * expanded_size + n_imaging + expanded_size + 1
}

/// Gradient of the empirical risk, laid out like [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector<T> {
    pub blocks: ParameterSet<T>,
}

impl<T: Scalar> GradientVector<T> {
    pub fn to_flat(&self) -> Array1<T> {
        self.blocks.to_flat()
    }

    pub fn len(&self) -> usize {
        self.blocks.flat_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Name of the first block holding a non-finite entry.
    pub fn non_finite_block(&self) -> Option<&'static str> {
        let b = &self.blocks;
        if b.w.iter().any(|x| !x.is_finite()) {
            Some("W")
        } else if b.beta_i.iter().any(|x| !x.is_finite()) {
            Some("beta_i")
        } else if b.beta_g.iter().any(|x| !x.is_finite()) {
            Some("beta_g")
        } else if !b.beta0.is_finite() {
            Some("beta0")
        } else {
            None
        }
    }
}
