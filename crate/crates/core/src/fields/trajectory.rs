use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::diff::fornberg_weights;

use super::integrate::IntegratorStats;

/// Which parameter a trajectory is sampled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamLabel {
    /// Physical time.
    T,
    /// Fictitious (Sundman) time.
    Tau,
    /// Arc length.
    S,
}

impl fmt::Display for ParamLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamLabel::T => "t",
            ParamLabel::Tau => "tau",
            ParamLabel::S => "s",
        })
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// The flow reached the boundary of the field's domain at `param`.
    DomainExit { param: f64 },
}

/// Position, velocity and acceleration of a curve at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub param: f64,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub ddq: Vec<f64>,
}

/// Samples of a curve with stored derivatives and cubic Hermite dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    label: ParamLabel,
    params: Vec<f64>,
    states: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
    termination: Termination,
    stats: IntegratorStats,
    tolerance: f64,
}

impl Trajectory {
    /// `derivs[i]` is the derivative of the curve with respect to the parameter at `params[i]`.
    pub fn new(
        label: ParamLabel,
        params: Vec<f64>,
        states: Vec<Vec<f64>>,
        derivs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if states.len() != params.len() || derivs.len() != params.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} params, {} states, {} derivatives",
                params.len(),
                states.len(),
                derivs.len()
            )));
        }
        if let Some(w) = params.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTrajectory(format!(
                "parameters not strictly increasing at index {}",
                w + 1
            )));
        }
        let dim = states[0].len();
        if states.iter().chain(&derivs).any(|s| s.len() != dim) {
            return Err(Error::InvalidTrajectory("ragged state dimension".into()));
        }
        Ok(Self {
            label,
            params,
            states,
            derivs,
            termination: Termination::Completed,
            stats: IntegratorStats::default(),
            tolerance: 1e-12,
        })
    }

    pub(crate) fn with_run_info(
        mut self,
        termination: Termination,
        stats: IntegratorStats,
        tolerance: f64,
    ) -> Self {
        self.termination = termination;
        self.stats = stats;
        self.tolerance = tolerance;
        self
    }

    pub fn label(&self) -> ParamLabel {
        self.label
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn derivatives(&self) -> &[Vec<f64>] {
        &self.derivs
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn start(&self) -> f64 {
        self.params[0]
    }

    pub fn end(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn is_truncated(&self) -> bool {
        matches!(self.termination, Termination::DomainExit { .. })
    }

    pub fn stats(&self) -> &IntegratorStats {
        &self.stats
    }

    /// Quadrature tolerance inherited from the integration that produced the curve.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn last_state(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    fn segment(&self, p: f64) -> Result<usize> {
        let (a, b) = (self.start(), self.end());
        let slack = 1e-12 * (b - a).abs().max(1.0);
        if !(p >= a - slack && p <= b + slack) {
            return Err(Error::Precondition(format!(
                "parameter {p} outside trajectory span [{a}, {b}]"
            )));
        }
        let idx = self.params.partition_point(|x| *x <= p);
        Ok(idx.saturating_sub(1).min(self.params.len().saturating_sub(2)))
    }

    fn node(&self, p: f64) -> Option<usize> {
        self.params
            .binary_search_by(|x| x.partial_cmp(&p).expect("finite parameters"))
            .ok()
    }

    /// Dense-output state at parameter `p`; stored nodes are reproduced exactly.
    pub fn state_at(&self, p: f64) -> Result<Vec<f64>> {
        if let Some(i) = self.node(p) {
            return Ok(self.states[i].clone());
        }
        if self.len() == 1 {
            return Err(Error::DegenerateSampling("single-node trajectory".into()));
        }
        let i = self.segment(p)?;
        let h = self.params[i + 1] - self.params[i];
        let s = (p - self.params[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (y0, y1) = (&self.states[i], &self.states[i + 1]);
        let (d0, d1) = (&self.derivs[i], &self.derivs[i + 1]);
        Ok((0..self.dim())
            .map(|k| h00 * y0[k] + h10 * h * d0[k] + h01 * y1[k] + h11 * h * d1[k])
            .collect())
    }

    /// Derivative of the dense output at `p`.
    pub fn derivative_at(&self, p: f64) -> Result<Vec<f64>> {
        if let Some(i) = self.node(p) {
            return Ok(self.derivs[i].clone());
        }
        if self.len() == 1 {
            return Err(Error::DegenerateSampling("single-node trajectory".into()));
        }
        let i = self.segment(p)?;
        let h = self.params[i + 1] - self.params[i];
        let s = (p - self.params[i]) / h;
        let s2 = s * s;
        let a00 = (6.0 * s2 - 6.0 * s) / h;
        let a10 = 3.0 * s2 - 4.0 * s + 1.0;
        let a01 = (-6.0 * s2 + 6.0 * s) / h;
        let a11 = 3.0 * s2 - 2.0 * s;
        let (y0, y1) = (&self.states[i], &self.states[i + 1]);
        let (d0, d1) = (&self.derivs[i], &self.derivs[i + 1]);
        Ok((0..self.dim())
            .map(|k| a00 * y0[k] + a10 * d0[k] + a01 * y1[k] + a11 * d1[k])
            .collect())
    }

    /// Second derivative at interior node `i`, from a five-node stencil on the stored
    /// first derivatives (fourth order in the local spacing).
    pub fn second_derivative_at_node(&self, i: usize) -> Result<Vec<f64>> {
        let n = self.len();
        if n < 3 {
            return Err(Error::DegenerateSampling(format!(
                "second derivative needs at least 3 nodes, have {n}"
            )));
        }
        let lo = i.saturating_sub(2).min(n.saturating_sub(5));
        let hi = (lo + 5).min(n);
        let xs = &self.params[lo..hi];
        let w = fornberg_weights(self.params[i], xs, 1);
        Ok((0..self.dim())
            .map(|k| {
                xs.iter()
                    .enumerate()
                    .map(|(j, _)| w[1][j] * self.derivs[lo + j][k])
                    .sum()
            })
            .collect())
    }

    /// Jets of the first `n` state components at every interior node; the second
    /// derivative comes from [`Self::second_derivative_at_node`].
    pub fn jets(&self, n: usize) -> Result<Vec<Jet>> {
        if n == 0 || n > self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: n,
            });
        }
        if self.len() < 5 {
            return Err(Error::DegenerateSampling(format!(
                "jets need at least 5 nodes, have {}",
                self.len()
            )));
        }
        (1..self.len() - 1)
            .map(|i| {
                let mut ddq = self.second_derivative_at_node(i)?;
                ddq.truncate(n);
                Ok(Jet {
                    param: self.params[i],
                    q: self.states[i][..n].to_vec(),
                    dq: self.derivs[i][..n].to_vec(),
                    ddq,
                })
            })
            .collect()
    }

    /// Keeps only the first `n` state components (for instance, positions of a
    /// second-order state `(q, v)`).
    pub fn project(&self, n: usize) -> Trajectory {
        assert!(n <= self.dim());
        let cut = |v: &Vec<Vec<f64>>| v.iter().map(|s| s[..n].to_vec()).collect();
        Trajectory {
            label: self.label,
            params: self.params.clone(),
            states: cut(&self.states),
            derivs: cut(&self.derivs),
            termination: self.termination,
            stats: self.stats.clone(),
            tolerance: self.tolerance,
        }
    }

    pub(crate) fn relabel(
        &self,
        label: ParamLabel,
        params: Vec<f64>,
        derivs: Vec<Vec<f64>>,
    ) -> Result<Trajectory> {
        let t = Trajectory::new(label, params, self.states.clone(), derivs)?;
        Ok(t.with_run_info(self.termination, self.stats.clone(), self.tolerance))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> Trajectory {
        let params: Vec<f64> = (0..6).map(|i| i as f64 * 0.4).collect();
        let states = params.iter().map(|t| vec![t * t * t, 1.0 - t]).collect();
        let derivs = params.iter().map(|t| vec![3.0 * t * t, -1.0]).collect();
        Trajectory::new(ParamLabel::T, params, states, derivs).unwrap()
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        let tr = cubic();
        for p in [0.1, 0.77, 1.3, 1.99] {
            let s = tr.state_at(p).unwrap();
            assert!((s[0] - p * p * p).abs() < 1e-13);
            assert!((s[1] - (1.0 - p)).abs() < 1e-14);
            let d = tr.derivative_at(p).unwrap();
            assert!((d[0] - 3.0 * p * p).abs() < 1e-12);
        }
    }

    #[test]
    fn nodes_are_reproduced_exactly() {
        let tr = cubic();
        for (p, s) in tr.params().iter().zip(tr.states()) {
            assert_eq!(&tr.state_at(*p).unwrap(), s);
        }
    }

    #[test]
    fn rejects_non_monotone_parameters() {
        let r = Trajectory::new(
            ParamLabel::T,
            vec![0.0, 1.0, 1.0],
            vec![vec![0.0]; 3],
            vec![vec![0.0]; 3],
        );
        assert!(matches!(r, Err(Error::InvalidTrajectory(_))));
        assert!(matches!(
            Trajectory::new(ParamLabel::T, vec![], vec![], vec![]),
            Err(Error::EmptyTrajectory)
        ));
    }

    #[test]
    fn second_derivative_from_stencil() {
        let tr = cubic();
        let a = tr.second_derivative_at_node(2).unwrap();
        assert!((a[0] - 6.0 * 0.8).abs() < 1e-12);
    }

    #[test]
    fn outside_span_is_an_error() {
        assert!(cubic().state_at(5.0).is_err());
    }
}
