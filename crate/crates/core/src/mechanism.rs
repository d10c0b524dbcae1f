//! Basic GP/CGP noise mechanisms and the estimation machinery built on them.
//!
//! A mechanism adds noise `K·Z` to a `K`-Lipschitz function of the data:
//! Gaussian noise with density `∝ e^{−ρ‖z‖²}` yields `ρ`-CGP, spherical
//! Laplace noise with density `∝ e^{−ε‖z‖}` yields `ε`-GP. Repeated noisy
//! estimates of the same quantity are combined by variance-weighted
//! averaging; a [`ValidTriple`] bundles a privatizer with its estimator and
//! high-probability error width, which is what the elimination templates
//! consume.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::metric::Point;
use crate::{Error, Result};

/// Noise family of a mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    /// Gaussian noise, `ρ`-CGP per unit distance squared.
    GaussianCgp,
    /// Spherical Laplace noise, `ε`-GP per unit distance.
    LaplaceGp,
    /// The constant mechanism: outputs nothing, costs nothing.
    Null,
}

/// Declarative description of a privatization step; the unit of privacy
/// accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub noise: NoiseFamily,
    /// Lipschitz constant `K` of the privatized function.
    pub lipschitz: f64,
    /// `ρ` for Gaussian, `ε` for Laplace, 0 for null.
    pub privacy: f64,
    /// Output dimension `d`.
    pub out_dim: usize,
}

impl MechanismSpec {
    pub fn gaussian(lipschitz: f64, rho: f64, out_dim: usize) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::invalid("gaussian mechanism requires rho > 0"));
        }
        Self::non_null(NoiseFamily::GaussianCgp, lipschitz, rho, out_dim)
    }

    pub fn laplace(lipschitz: f64, eps: f64, out_dim: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::invalid("laplace mechanism requires eps > 0"));
        }
        Self::non_null(NoiseFamily::LaplaceGp, lipschitz, eps, out_dim)
    }

    fn non_null(noise: NoiseFamily, lipschitz: f64, privacy: f64, out_dim: usize) -> Result<Self> {
        if !(lipschitz > 0.0) {
            return Err(Error::invalid("lipschitz constant must be positive"));
        }
        if out_dim == 0 {
            return Err(Error::invalid("output dimension must be positive"));
        }
        Ok(MechanismSpec {
            noise,
            lipschitz,
            privacy,
            out_dim,
        })
    }

    pub fn null() -> Self {
        MechanismSpec {
            noise: NoiseFamily::Null,
            lipschitz: 0.0,
            privacy: 0.0,
            out_dim: 1,
        }
    }

    pub fn is_null(&self) -> bool {
        self.noise == NoiseFamily::Null
    }

    /// Runs the mechanism on a euclidean point.
    pub fn apply(&self, point: &Point, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let value = point.as_real().map_err(|_| {
            Error::MechanismNotApplicable("noise mechanisms apply to euclidean points".into())
        })?;
        if value.len() != self.out_dim {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim,
                got: value.len(),
            });
        }
        match self.noise {
            NoiseFamily::GaussianCgp => {
                sample_gaussian_mech(value, self.lipschitz, self.privacy, rng)
            }
            NoiseFamily::LaplaceGp => sample_laplace_gp(value, self.lipschitz, self.privacy, rng),
            NoiseFamily::Null => Err(Error::MechanismNotApplicable(
                "the null mechanism produces no output".into(),
            )),
        }
    }
}

/// `value + (K/√(2ρ))·Z` with `Z` standard normal in `value.len()` dims.
pub fn sample_gaussian_mech<R: Rng + ?Sized>(
    value: &[f64],
    lipschitz: f64,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(rho > 0.0) {
        return Err(Error::invalid("rho must be positive"));
    }
    let scale = lipschitz / (2.0 * rho).sqrt();
    Ok(value
        .iter()
        .map(|v| v + scale * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// `value + K·Z` with `Z` drawn from the density `∝ e^{−ε‖z‖}`.
///
/// Sampled exactly via the radial decomposition: a uniform direction on the
/// unit sphere times a radius drawn from Gamma(shape `d`, rate `ε`).
pub fn sample_laplace_gp<R: Rng + ?Sized>(
    value: &[f64],
    lipschitz: f64,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let d = value.len();
    if d == 0 {
        return Err(Error::invalid("value must be non-empty"));
    }
    let gamma = Gamma::new(d as f64, 1.0 / eps)
        .map_err(|e| Error::invalid(format!("gamma sampler: {e}")))?;
    let radius: f64 = gamma.sample(rng);
    let direction = sample_unit_direction(d, rng);
    Ok(value
        .iter()
        .zip(&direction)
        .map(|(v, u)| v + lipschitz * radius * u)
        .collect())
}

fn sample_unit_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    if d == 1 {
        return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// High-probability bound `λ(d, β)` on the norm of a standard `d`-dimensional
/// Gaussian: `P(‖Z‖ ≤ λ(d, β)) ≥ 1 − β`.
///
/// `d = 2` uses `√(2 ln(1/β))` — the exact squared-norm tail — while `d = 1`
/// carries the two-sided factor inside the log; the asymmetry is intentional.
pub fn lambda_bound(d: usize, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid("beta must be in (0, 1)"));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let ln_inv = (1.0 / beta).ln();
    Ok(match d {
        1 => (2.0 * (2.0 / beta).ln()).sqrt(),
        2 => (2.0 * ln_inv).sqrt(),
        _ => {
            let df = d as f64;
            (df + 2.0 * (df * ln_inv).sqrt() + 2.0 * ln_inv).sqrt()
        }
    })
}

/// Per-round outputs `ṽ(1..j)` of repeated privatizations of one quantity,
/// with their privacy parameters `r_1..r_j`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NoisyEstimateSeries {
    outputs: Vec<Vec<f64>>,
    params: Vec<f64>,
    /// `ρ̄_j = Σ_{s≤j} r_s`, strictly increasing.
    cumulative: Vec<f64>,
}

impl NoisyEstimateSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, output: Vec<f64>, param: f64) -> Result<()> {
        if !(param > 0.0) {
            return Err(Error::invalid("round parameter must be positive"));
        }
        if let Some(first) = self.outputs.first() {
            if output.len() != first.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: output.len(),
                });
            }
        }
        let total = self.total_param() + param;
        self.outputs.push(output);
        self.params.push(param);
        self.cumulative.push(total);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// `ρ̄_j` for 1-based `j`.
    pub fn cumulative_param(&self, j: usize) -> Result<f64> {
        self.check_round(j)?;
        Ok(self.cumulative[j - 1])
    }

    pub fn total_param(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// `(1/ρ̄_j)·Σ_{s≤j} r_s·ṽ(s)` for 1-based `j`.
    pub fn weighted_prefix_mean(&self, j: usize) -> Result<Vec<f64>> {
        self.check_round(j)?;
        let dim = self.outputs[0].len();
        let total = self.cumulative[j - 1];
        let mut acc = vec![0.0; dim];
        for (output, &r) in self.outputs.iter().zip(&self.params).take(j) {
            for (a, v) in acc.iter_mut().zip(output) {
                *a += r * v;
            }
        }
        for a in &mut acc {
            *a /= total;
        }
        Ok(acc)
    }

    fn check_round(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.len() {
            return Err(Error::IndexOutOfRange {
                got: j,
                len: self.len(),
            });
        }
        Ok(())
    }
}

/// Privatizer of a valid triple: `(point, round parameter, rng) → output`.
pub type PrivatizeFn = Box<dyn Fn(&Point, f64, &mut ChaCha8Rng) -> Result<Vec<f64>> + Send + Sync>;
/// Estimator of a valid triple, applied to the full output prefix.
pub type EstimateFn = Box<dyn Fn(&NoisyEstimateSeries) -> f64 + Send + Sync>;
/// Width of a valid triple: `(round parameters, β) → error bound`.
pub type WidthFn = Box<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// The `(M, g, h)` bundle driving iterative elimination: a privatizer, an
/// estimator over output prefixes, and a width such that
/// `P(|g(prefix) − φ(u)| ≤ h(params, β)) ≥ 1 − β` for every prefix.
pub struct ValidTriple {
    privatize: PrivatizeFn,
    estimate: EstimateFn,
    width: WidthFn,
    out_dim: usize,
}

impl ValidTriple {
    /// Point privatization: the identity is privatized with Gaussian noise in
    /// `dim` dimensions, `φ` is applied to the weighted prefix mean, and the
    /// width is `λ(dim, β)/√(2ρ̄_j)`. Requires `φ` 1-Lipschitz under the
    /// euclidean metric.
    pub fn point<F>(phi: F, dim: usize) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ValidTriple {
            privatize: Box::new(move |u, r, rng| {
                let value = u.as_real()?;
                if value.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: value.len(),
                    });
                }
                sample_gaussian_mech(value, 1.0, r, rng)
            }),
            estimate: Box::new(move |series| {
                let mean = series
                    .weighted_prefix_mean(series.len())
                    .expect("estimate requires at least one round");
                phi(&mean)
            }),
            width: Box::new(move |params, beta| {
                let total: f64 = params.iter().sum();
                lambda_bound(dim, beta).expect("beta in (0,1)") / (2.0 * total).sqrt()
            }),
            out_dim: dim,
        }
    }

    /// Scalar privatization: `φ(u)` itself is privatized with 1-d Gaussian
    /// noise, the estimator is the weighted prefix mean of the scalars, and
    /// the width is `λ(1, β)/√(2ρ̄_j)`. Works for an arbitrary component
    /// metric as long as `φ` is 1-Lipschitz with respect to it.
    pub fn scalar<F>(phi: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        ValidTriple {
            privatize: Box::new(move |u, r, rng| {
                if !(r > 0.0) {
                    return Err(Error::invalid("round parameter must be positive"));
                }
                let noise = rng.sample::<f64, _>(StandardNormal) / (2.0 * r).sqrt();
                Ok(vec![phi(u) + noise])
            }),
            estimate: Box::new(|series| {
                series
                    .weighted_prefix_mean(series.len())
                    .expect("estimate requires at least one round")[0]
            }),
            width: Box::new(|params, beta| {
                let total: f64 = params.iter().sum();
                lambda_bound(1, beta).expect("beta in (0,1)") / (2.0 * total).sqrt()
            }),
            out_dim: 1,
        }
    }

    /// Assembles a triple from raw parts. The caller asserts the validity
    /// property.
    pub fn from_parts(
        privatize: PrivatizeFn,
        estimate: EstimateFn,
        width: WidthFn,
        out_dim: usize,
    ) -> Self {
        ValidTriple {
            privatize,
            estimate,
            width,
            out_dim,
        }
    }

    pub fn privatize(&self, u: &Point, r: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        (self.privatize)(u, r, rng)
    }

    pub fn estimate(&self, series: &NoisyEstimateSeries) -> f64 {
        (self.estimate)(series)
    }

    pub fn width(&self, params: &[f64], beta: f64) -> f64 {
        (self.width)(params, beta)
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// The declared cost of one round at parameter `r`: both constructions
    /// privatize through the Gaussian mechanism, so a round is `r`-CGP.
    pub fn round_mechanism(&self, r: f64) -> Result<MechanismSpec> {
        MechanismSpec::gaussian(1.0, r, self.out_dim)
    }
}
