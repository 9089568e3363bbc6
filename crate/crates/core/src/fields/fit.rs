use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::numerics::{dot, norm};

use super::ScalarField;

const VANISHING: f64 = 1e-10;

/// Pointwise least-squares solution `c(q)` of `a(q) = c(q) b(q)`.
#[derive(Debug, Clone)]
pub struct ProportionalFit {
    /// `q -> ⟨a, b⟩ / |b|²`, evaluable wherever `b` does not vanish.
    pub estimate: ScalarField,
    /// Per-sample values of the estimate; `None` where the sample was skipped.
    pub values: Vec<Option<f64>>,
    /// `max ‖a − c b‖` over the retained samples.
    pub residual: f64,
    /// Indices of samples where `b` (nearly) vanishes.
    pub skipped: Vec<usize>,
}

type PairFn = Arc<dyn Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Send + Sync>;

fn fit_at(pair: &PairFn, q: &[f64]) -> Result<Option<(f64, f64)>> {
    let (a, b) = pair(q)?;
    let nb = dot(&b, &b);
    if nb.sqrt() <= VANISHING * (1.0 + norm(q)) {
        return Ok(None);
    }
    let c = dot(&a, &b) / nb;
    let r: Vec<f64> = a.iter().zip(&b).map(|(ai, bi)| ai - c * bi).collect();
    Ok(Some((c, norm(&r))))
}

impl ProportionalFit {
    pub(crate) fn compute<P>(dim: usize, samples: &[Vec<f64>], pair: P) -> Result<Self>
    where
        P: Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Send + Sync + 'static,
    {
        let pair: PairFn = Arc::new(pair);
        let mut values = Vec::with_capacity(samples.len());
        let mut skipped = Vec::new();
        let mut residual = 0.0f64;
        for (i, q) in samples.iter().enumerate() {
            check_dim(dim, q.len())?;
            match fit_at(&pair, q)? {
                Some((c, r)) => {
                    residual = residual.max(r);
                    values.push(Some(c));
                }
                None => {
                    skipped.push(i);
                    values.push(None);
                }
            }
        }
        let estimate = ScalarField::try_new(dim, move |q| match fit_at(&pair, q)? {
            Some((c, _)) => Ok(c),
            None => Err(Error::Precondition(format!("field vanishes at {q:?}"))),
        });
        Ok(Self {
            estimate,
            values,
            residual,
            skipped,
        })
    }

    /// The common value of the estimate if it is constant over the retained samples within `tol`.
    pub fn constant(&self, tol: f64) -> Option<f64> {
        let mut vals = self.values.iter().flatten();
        let first = *vals.next()?;
        let (lo, hi) = vals.fold((first, first), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        (hi - lo <= tol).then(|| 0.5 * (lo + hi))
    }

    /// `max |c|` over the retained samples.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The samples that were not skipped.
    pub fn retained<'a>(&self, samples: &'a [Vec<f64>]) -> Vec<&'a Vec<f64>> {
        samples
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.skipped.contains(i))
            .map(|(_, q)| q)
            .collect()
    }
}
