use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-prefix weights `ω_m`, with the cumulative weights
/// `w_k = Σ_{m ≥ k} ω_m` precomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PrefixWeights {
    omega: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PrefixWeights {
    /// Strictly positive weights, so that `w_1 > w_2 > ... > w_d > 0`.
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::Validation("prefix weights must be non-empty".into()));
        }
        if let Some(w) = omega.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Validation(format!("prefix weight {w} is not strictly positive")));
        }
        Ok(Self::new_unchecked(omega))
    }

    /// Nonnegative weights without the strict-ordering guarantee. Used for
    /// sparse nesting sets and degenerate test cases.
    pub fn new_unchecked(omega: Vec<f64>) -> Self {
        let mut cumulative = vec![0.0; omega.len()];
        let mut acc = 0.0;
        for k in (0..omega.len()).rev() {
            acc += omega[k];
            cumulative[k] = acc;
        }
        PrefixWeights { omega, cumulative }
    }

    /// `ω_m = 1` for every prefix.
    pub fn uniform(d: usize) -> Self {
        Self::new_unchecked(vec![1.0; d])
    }

    /// Indicator weights of a nesting set.
    pub fn from_nesting(nesting: &NestingSet) -> Self {
        let d = nesting.d();
        let mut omega = vec![0.0; d];
        for &m in nesting.sizes() {
            omega[m - 1] = 1.0;
        }
        Self::new_unchecked(omega)
    }

    /// Only the full-width prefix, i.e. the plain reconstruction loss.
    pub fn full_width_only(d: usize) -> Self {
        let mut omega = vec![0.0; d];
        omega[d - 1] = 1.0;
        Self::new_unchecked(omega)
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total(&self) -> f64 {
        self.cumulative.first().copied().unwrap_or(0.0)
    }

    /// `(S_d^ω)_{ij} = w_{max(i,j)}`.
    pub fn coupling(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.cumulative[i.max(j)])
    }
}

impl TryFrom<Vec<f64>> for PrefixWeights {
    type Error = Error;

    fn try_from(omega: Vec<f64>) -> Result<Self> {
        if omega.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation("prefix weights must be nonnegative".into()));
        }
        Ok(Self::new_unchecked(omega))
    }
}

impl From<PrefixWeights> for Vec<f64> {
    fn from(w: PrefixWeights) -> Self {
        w.omega
    }
}

/// Strictly increasing prefix sizes ending at `d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct NestingSet {
    sizes: Vec<usize>,
}

impl NestingSet {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Validation("nesting set is empty".into()));
        }
        if sizes[0] == 0 {
            return Err(Error::Validation("prefix sizes start at 1".into()));
        }
        if sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "prefix sizes must be strictly increasing: {sizes:?}"
            )));
        }
        Ok(NestingSet { sizes })
    }

    /// Checks that the set ends exactly at `d`.
    pub fn for_dim(sizes: Vec<usize>, d: usize) -> Result<Self> {
        let set = Self::new(sizes)?;
        if set.d() != d {
            return Err(Error::Validation(format!(
                "nesting set ends at {}, latent dimension is {d}",
                set.d()
            )));
        }
        Ok(set)
    }

    /// `{1, ..., d}`.
    pub fn full(d: usize) -> Self {
        NestingSet {
            sizes: (1..=d).collect(),
        }
    }

    pub fn d(&self) -> usize {
        *self.sizes.last().expect("non-empty by construction")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

impl TryFrom<Vec<usize>> for NestingSet {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<NestingSet> for Vec<usize> {
    fn from(s: NestingSet) -> Self {
        s.sizes
    }
}

/// Per-dimension ℓ2 coefficients for the non-uniform penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NuL2Lambdas {
    lambdas: Vec<f64>,
}

impl NuL2Lambdas {
    /// Requires `0 < λ_1 < ... < λ_d`.
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() || !(lambdas[0] > 0.0) {
            return Err(Error::Validation("λ_1 must be positive".into()));
        }
        if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(format!("λ must be strictly increasing: {lambdas:?}")));
        }
        Ok(NuL2Lambdas { lambdas })
    }

    pub fn new_unchecked(lambdas: Vec<f64>) -> Self {
        NuL2Lambdas { lambdas }
    }

    /// Linear ramp from `σ_d²/18` to `σ_d²/2` in `d` steps.
    pub fn linear_schedule(sigma_d_sq: f64, d: usize) -> Result<Self> {
        let lo = sigma_d_sq / 18.0;
        let hi = sigma_d_sq / 2.0;
        if d == 1 {
            return Self::new(vec![lo]);
        }
        let step = (hi - lo) / (d - 1) as f64;
        Self::new((0..d).map(|k| lo + step * k as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// Logs a warning when `λ_d ≥ σ_d²`, where the shrinkage factors stop
    /// being real. Returns whether the condition holds.
    pub fn check_upper_bound(&self, sigma_d_sq: f64) -> bool {
        let last = *self.lambdas.last().unwrap_or(&0.0);
        let ok = last < sigma_d_sq;
        if !ok {
            log::warn!("λ_d = {last:e} is not below σ_d² = {sigma_d_sq:e}");
        }
        ok
    }
}

impl TryFrom<Vec<f64>> for NuL2Lambdas {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<NuL2Lambdas> for Vec<f64> {
    fn from(l: NuL2Lambdas) -> Self {
        l.lambdas
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_d3() {
        let s = PrefixWeights::uniform(3).coupling();
        let expected = DMatrix::from_row_slice(3, 3, &[3.0, 2.0, 1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(s, expected);
    }

    #[test]
    fn uniform_coupling_formula() {
        let d = 7;
        let s = PrefixWeights::uniform(d).coupling();
        for i in 0..d {
            for j in 0..d {
                assert_eq!(s[(i, j)], (d - i.max(j)) as f64);
            }
        }
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn cumulative_strictly_decreasing() {
        let w = PrefixWeights::new(vec![0.5, 2.0, 0.1, 1.0]).unwrap();
        assert!(w.cumulative().windows(2).all(|p| p[0] > p[1]));
        assert!(*w.cumulative().last().unwrap() > 0.0);
        assert!(PrefixWeights::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn nesting_validation() {
        assert!(NestingSet::new(vec![5, 10, 25, 50]).is_ok());
        assert!(NestingSet::new(vec![5, 5]).is_err());
        assert!(NestingSet::new(vec![0, 2]).is_err());
        assert!(NestingSet::for_dim(vec![1, 2], 3).is_err());
        let w = PrefixWeights::from_nesting(&NestingSet::new(vec![2, 4]).unwrap());
        assert_eq!(w.omega(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(w.cumulative(), &[2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn lambda_schedule() {
        let l = NuL2Lambdas::linear_schedule(18.0, 4).unwrap();
        assert_eq!(l.values(), &[1.0, 3.0 + 2.0 / 3.0, 6.0 + 1.0 / 3.0, 9.0]);
        assert!(l.check_upper_bound(18.0));
        assert!(!l.check_upper_bound(9.0));
        assert!(NuL2Lambdas::new(vec![1.0, 1.0]).is_err());
        assert!(NuL2Lambdas::new(vec![0.0, 1.0]).is_err());
    }
}
