//! Reduced radial Kepler dynamics, the Sundman transformation `dt = r dτ`, and its
//! fixed-energy linearization `r″ = 2Er + k` with the eccentric-anomaly ellipse.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fields::{integrate_flow, reparametrize, IntegratorOptions, ScalarField, Trajectory};
use crate::riemann::SecondOrderField;

/// Attraction constant `k`, angular momentum `ℓ` and energy `E` of a reduced
/// Kepler problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeplerParams {
    k: f64,
    l: f64,
    energy: f64,
}

impl KeplerParams {
    /// Requires `k > 0` and, for `ℓ ≠ 0`, `E ≥ −k²/(2ℓ²)`.
    pub fn new(k: f64, l: f64, energy: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Precondition(format!("attraction constant {k} must be positive")));
        }
        if !l.is_finite() || !energy.is_finite() {
            return Err(Error::Precondition("non-finite Kepler parameters".into()));
        }
        let p = Self { k, l, energy };
        if l != 0.0 && energy < p.min_energy() * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "energy {energy} below the effective-potential minimum {}",
                p.min_energy()
            )));
        }
        Ok(p)
    }

    /// Parameters of the orbit through `(r, ṙ)`.
    pub fn from_state(k: f64, l: f64, r: f64, rdot: f64) -> Result<Self> {
        let e = 0.5 * rdot * rdot + 0.5 * l * l / (r * r) - k / r;
        Self::new(k, l, e)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `𝒱(r) = ℓ²/(2r²) − k/r`.
    pub fn effective_potential(&self, r: f64) -> f64 {
        0.5 * self.l * self.l / (r * r) - self.k / r
    }

    /// `min 𝒱 = −k²/(2ℓ²)`, attained at `r = ℓ²/k`.
    pub fn min_energy(&self) -> f64 {
        -self.k * self.k / (2.0 * self.l * self.l)
    }

    /// `E(r, ṙ) = ½ṙ² + 𝒱(r)`.
    pub fn energy_at(&self, r: f64, rdot: f64) -> f64 {
        0.5 * rdot * rdot + self.effective_potential(r)
    }

    pub fn is_elliptic(&self) -> bool {
        self.energy < 0.0 && self.l != 0.0
    }
}

/// `r̈ = ℓ²/r³ − k/r²` on `(r, ṙ)`, restricted to `r > 0`.
pub fn radial_field(p: &KeplerParams) -> SecondOrderField {
    let (k, l2) = (p.k, p.l * p.l);
    SecondOrderField::new(1, move |q, _| vec![(l2 / q[0] - k) / (q[0] * q[0])])
        .with_domain(|q| q[0] > 0.0)
}

/// `r″ = r′²/r + ℓ²/r − k` on `(r, r′)`: the radial equation written in `τ`
/// with `dt = r dτ`.
pub fn sundman_radial_field(p: &KeplerParams) -> SecondOrderField {
    let (k, l2) = (p.k, p.l * p.l);
    SecondOrderField::new(1, move |q, v| vec![v[0] * v[0] / q[0] + l2 / q[0] - k])
        .with_domain(|q| q[0] > 0.0)
}

/// `r″ = 2Er + k` on `(r, r′)`.
pub fn linearized_field(p: &KeplerParams) -> SecondOrderField {
    let (k, e) = (p.k, p.energy);
    SecondOrderField::new(1, move |q, _| vec![2.0 * e * q[0] + k])
}

/// `r(τ) = A(1 − e cos ωτ)`, `t(τ) = A(τ − (e/ω) sin ωτ)`, perihelion at `τ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeplerEllipse {
    a: f64,
    ecc: f64,
    omega: f64,
}

impl KeplerEllipse {
    pub fn semi_major_axis(&self) -> f64 {
        self.a
    }

    pub fn eccentricity(&self) -> f64 {
        self.ecc
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn r(&self, tau: f64) -> f64 {
        self.a * (1.0 - self.ecc * (self.omega * tau).cos())
    }

    /// `dr/dτ`.
    pub fn dr(&self, tau: f64) -> f64 {
        self.a * self.ecc * self.omega * (self.omega * tau).sin()
    }

    pub fn t(&self, tau: f64) -> f64 {
        self.a * (tau - self.ecc / self.omega * (self.omega * tau).sin())
    }

    pub fn r_min(&self) -> f64 {
        self.a * (1.0 - self.ecc)
    }

    pub fn r_max(&self) -> f64 {
        self.a * (1.0 + self.ecc)
    }

    /// `2π/ω`.
    pub fn tau_period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// `t(2π/ω) = 2πA/ω`.
    pub fn t_period(&self) -> f64 {
        self.t(self.tau_period())
    }

    /// The `τ ∈ (−π/ω, π/ω]` at which the ellipse passes through `(r, r′)`.
    pub fn phase_of(&self, r: f64, dr: f64) -> f64 {
        if self.ecc == 0.0 {
            return 0.0;
        }
        let c = (1.0 - r / self.a) / self.ecc;
        let s = dr / (self.a * self.ecc * self.omega);
        s.atan2(c) / self.omega
    }
}

/// Rejects non-elliptic parameters.
pub fn analytic_ellipse(p: &KeplerParams) -> Result<KeplerEllipse> {
    if !p.is_elliptic() {
        return Err(Error::Precondition(format!(
            "parameters (k = {}, ℓ = {}, E = {}) are not elliptic",
            p.k, p.l, p.energy
        )));
    }
    let a = p.k / (2.0 * p.energy.abs());
    let ecc = (1.0 - p.l * p.l / (p.k * a)).max(0.0).sqrt();
    Ok(KeplerEllipse {
        a,
        ecc,
        omega: (2.0 * p.energy.abs()).sqrt(),
    })
}

/// `max |2r²E − r′² − ℓ² + 2kr|` over the nodes of a `τ`-trajectory with
/// states `(r, ·)`; `r′` is the stored derivative of `r`.
pub fn fixed_energy_residual(p: &KeplerParams, traj: &Trajectory) -> f64 {
    traj.states()
        .iter()
        .zip(traj.derivatives())
        .map(|(s, d)| {
            let (r, dr) = (s[0], d[0]);
            (2.0 * r * r * p.energy - dr * dr - p.l * p.l + 2.0 * p.k * r).abs()
        })
        .fold(0.0, f64::max)
}

/// Relative drift of `E(r, ṙ)` along a `(r, ṙ)` trajectory.
pub fn radial_energy_drift(p: &KeplerParams, traj: &Trajectory) -> f64 {
    let scale = if p.energy == 0.0 { 1.0 } else { p.energy.abs() };
    traj.states()
        .iter()
        .map(|s| (p.energy_at(s[0], s[1]) - p.energy).abs() / scale)
        .fold(0.0, f64::max)
}

/// Period of an oscillating state component, from successive sign changes refined by
/// bisection on dense output. A zero at the first node counts as a crossing in the
/// direction of the next nonzero value. `None` when fewer than two crossings occur.
pub fn detect_period(traj: &Trajectory, component: usize) -> Result<Option<f64>> {
    let p = traj.params();
    let value = |i: usize| traj.states()[i][component];
    let mut crossings: Vec<(f64, bool)> = Vec::new();
    if value(0) == 0.0 {
        if let Some(j) = (1..p.len()).find(|&j| value(j) != 0.0) {
            crossings.push((p[0], value(j) > 0.0));
        }
    }
    for i in 0..p.len() - 1 {
        let (a, b) = (value(i), value(i + 1));
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            crossings.push((p[i + 1], a < 0.0));
        } else if (a > 0.0) != (b > 0.0) {
            crossings.push((bisect(traj, component, p[i], p[i + 1], a)?, a < 0.0));
        }
    }
    let same: Vec<f64> = crossings
        .iter()
        .filter(|c| c.1 == crossings.first().map(|f| f.1).unwrap_or(true))
        .map(|c| c.0)
        .collect();
    if same.len() >= 2 {
        return Ok(Some((same[same.len() - 1] - same[0]) / (same.len() - 1) as f64));
    }
    Ok(match crossings.as_slice() {
        [first, second, ..] => Some(2.0 * (second.0 - first.0)),
        _ => None,
    })
}

fn bisect(traj: &Trajectory, c: usize, mut lo: f64, mut hi: f64, at_lo: f64) -> Result<f64> {
    let positive = at_lo > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = traj.state_at(mid)?[c];
        if v == 0.0 {
            return Ok(mid);
        }
        if (v > 0.0) == positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Output of [`linearization_check`].
#[derive(Debug, Clone)]
pub struct LinearizationCheck {
    /// `(r, ṙ)` against `t`.
    pub radial: Trajectory,
    /// The radial trajectory reparametrized by `dt = r dτ`; states stay `(r, ṙ)`.
    pub sundman: Trajectory,
    /// `(r, r′)` against `τ` from the linear equation.
    pub linear: Trajectory,
    pub ellipse: KeplerEllipse,
    /// Phase `τ₀` of the initial state on the ellipse.
    pub phase: f64,
    /// `max |r_sundman(τ) − r_linear(τ)|` at the Sundman nodes.
    pub sundman_linear_deviation: f64,
    /// `max |r_sundman(τ) − r_ellipse(τ + τ₀)|`.
    pub analytic_deviation: f64,
    /// `max |t(τ) − (t_ellipse(τ + τ₀) − t_ellipse(τ₀))|` with `t(τ)` from the time map.
    pub time_map_deviation: f64,
    pub fixed_energy_residual: f64,
    pub energy_drift: f64,
    /// Period in `τ` detected from sign changes of `ṙ`.
    pub tau_period: Option<f64>,
    /// Period in `t` detected the same way on the radial trajectory.
    pub t_period: Option<f64>,
}

/// Integrates the radial equation from `(r₀, ṙ₀)` over `periods` orbital periods,
/// reparametrizes by `f(r) = r`, integrates the linear equation from `(r₀, r₀ṙ₀)`,
/// and compares both with the analytic ellipse.
///
/// A radial run that reaches `r → 0` (for instance with `ℓ = 0`) fails with
/// [`Error::Truncated`].
pub fn linearization_check(
    p: &KeplerParams,
    r0: f64,
    rdot0: f64,
    periods: f64,
    opts: &IntegratorOptions,
) -> Result<LinearizationCheck> {
    let e = p.energy_at(r0, rdot0);
    if !((e - p.energy).abs() <= 1e-12 * p.energy.abs().max(1.0)) {
        return Err(Error::Precondition(format!(
            "initial energy {e} differs from {}",
            p.energy
        )));
    }
    if !(periods > 0.0) {
        return Err(Error::Precondition(format!("period count {periods} must be positive")));
    }
    let horizon = if p.is_elliptic() {
        periods * analytic_ellipse(p)?.t_period()
    } else {
        periods
    };
    let radial = match integrate_flow(&radial_field(p).as_vector_field(), &[r0, rdot0], horizon, opts) {
        Err(Error::StepUnderflow { param }) => return Err(Error::Truncated { param }),
        r => r?,
    };
    if radial.is_truncated() {
        return Err(Error::Truncated { param: radial.end() });
    }
    let ellipse = analytic_ellipse(p)?;
    let f = ScalarField::new(2, |s| s[0]).with_gradient(|_| vec![1.0, 0.0]);
    let sundman = reparametrize(&radial, &f)?;
    let linear = integrate_flow(
        &linearized_field(p).as_vector_field(),
        &[r0, r0 * rdot0],
        sundman.end(),
        opts,
    )?;
    let phase = ellipse.phase_of(r0, r0 * rdot0);
    let mut sundman_linear_deviation = 0.0f64;
    let mut analytic_deviation = 0.0f64;
    let mut time_map_deviation = 0.0f64;
    for ((tau, s), t) in sundman.params().iter().zip(sundman.states()).zip(radial.params()) {
        let rl = linear.state_at(*tau)?[0];
        sundman_linear_deviation = sundman_linear_deviation.max((s[0] - rl).abs());
        analytic_deviation = analytic_deviation.max((s[0] - ellipse.r(tau + phase)).abs());
        let ta = ellipse.t(tau + phase) - ellipse.t(phase);
        time_map_deviation = time_map_deviation.max((t - ta).abs());
    }
    Ok(LinearizationCheck {
        fixed_energy_residual: fixed_energy_residual(p, &sundman),
        energy_drift: radial_energy_drift(p, &radial),
        tau_period: detect_period(&sundman, 1)?,
        t_period: detect_period(&radial, 1)?,
        radial,
        sundman,
        linear,
        ellipse,
        phase,
        sundman_linear_deviation,
        analytic_deviation,
        time_map_deviation,
    })
}
