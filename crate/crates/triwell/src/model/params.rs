//! Physical parameters of the triple-well system.
//!
//! Two equivalent parametrizations are supported: the microscopic one (trap
//! geometry plus interaction strength, from which the mode-overlap collision
//! rates follow) and the reduced one actually used by the dynamics, namely
//! the tunneling rate `omega` together with the dimensionless collision
//! parameters `chi` and `mu`.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Geometry of three Gaussian wells centered on the vertices of an
/// equilateral triangle of circumradius `q0`, each with isotropic width `d`.
///
/// Units are left to the caller; all derived quantities are consistent with
/// whatever unit system the fields are expressed in (with `hbar` supplied
/// explicitly where it enters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapGeometry {
    /// Distance of each well center from the trap center (> 0).
    pub q0: f64,
    /// Width of the localized mode in each well (> 0).
    pub d: f64,
    /// Contact-interaction strength `V0` of the two-body pseudopotential.
    pub v0: f64,
    /// Harmonic frequency of each well.
    pub omega_trap: f64,
    /// Atomic mass.
    pub mass: f64,
    /// s-wave scattering length, if known independently of `v0`.
    pub scattering_length: Option<f64>,
}

impl TrapGeometry {
    pub fn new(q0: f64, d: f64, v0: f64, omega_trap: f64, mass: f64) -> Result<Self> {
        if !(q0 > 0.0) || !q0.is_finite() {
            return Err(Error::InvalidParameter {
                name: "q0",
                message: format!("well distance must be positive and finite, got {q0}"),
            });
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidParameter {
                name: "d",
                message: format!("mode width must be positive and finite, got {d}"),
            });
        }
        Ok(Self {
            q0,
            d,
            v0,
            omega_trap,
            mass,
            scattering_length: None,
        })
    }

    /// Attaches an independently known scattering length and checks it is
    /// consistent with `v0 = 4 pi hbar^2 a / m` to relative 1e-12.
    pub fn with_scattering_length(mut self, a: f64, hbar: f64) -> Result<Self> {
        let v0_from_a = 4.0 * std::f64::consts::PI * hbar * hbar * a / self.mass;
        let scale = self.v0.abs().max(v0_from_a.abs());
        if scale > 0.0 && (self.v0 - v0_from_a).abs() > 1e-12 * scale {
            return Err(Error::InvalidParameter {
                name: "scattering_length",
                message: format!(
                    "v0 = {} inconsistent with 4 pi hbar^2 a / m = {v0_from_a}",
                    self.v0
                ),
            });
        }
        self.scattering_length = Some(a);
        Ok(self)
    }

    /// True when the wells are too close for the three-mode (tight-binding)
    /// picture to be quantitatively reliable. The localized modes overlap
    /// appreciably once `q0 < 3 d`.
    pub fn narrow_separation(&self) -> bool {
        self.q0 < 3.0 * self.d
    }

    /// Overlap factor of neighboring localized modes.
    pub fn epsilon(&self) -> f64 {
        (-3.0 * self.q0 * self.q0 / (4.0 * self.d * self.d)).exp()
    }
}

/// Collision rates of the three-mode model derived from the trap geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionRates {
    /// Mode-overlap factor `exp(-3 q0^2 / 4 d^2)`.
    pub epsilon: f64,
    /// On-site (same-well) collision rate.
    pub kappa: f64,
    /// Cross-well collision rate `kappa * epsilon^(3/2)`.
    pub lambda: f64,
}

/// Computes the collision rates for Gaussian modes:
/// `kappa = v0 / (2^(5/2) pi^(3/2) d^3)` and `lambda = kappa eps^(3/2)`.
///
/// For well-separated wells `epsilon` underflows to exactly zero and the
/// cross-well rate vanishes with it.
pub fn derive_collision_rates(geometry: &TrapGeometry) -> Result<CollisionRates> {
    // Re-validate: geometry may have been built from deserialized data.
    let g = TrapGeometry::new(
        geometry.q0,
        geometry.d,
        geometry.v0,
        geometry.omega_trap,
        geometry.mass,
    )?;
    let epsilon = g.epsilon();
    let kappa = g.v0 / (2.0_f64.powf(2.5) * std::f64::consts::PI.powf(1.5) * g.d.powi(3));
    Ok(CollisionRates {
        epsilon,
        kappa,
        lambda: kappa * epsilon.powf(1.5),
    })
}

/// Reduced parameter set of the dynamics.
///
/// `chi = kappa (N - 1) / omega` and `mu = lambda (N - 1) / omega` measure
/// the on-site and cross-well collision energies against the tunneling rate.
/// Both collision terms scale out of the dynamics for a single particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Tunneling rate between each pair of wells (nonzero).
    pub omega: f64,
    /// Total particle number (>= 1).
    pub n_particles: u32,
    /// On-site collision parameter.
    pub chi: f64,
    /// Cross-well collision parameter.
    pub mu: f64,
}

impl ModelParams {
    pub fn new(omega: f64, n_particles: u32, chi: f64, mu: f64) -> Result<Self> {
        if omega == 0.0 || !omega.is_finite() {
            return Err(Error::InvalidParameter {
                name: "omega",
                message: format!("tunneling rate must be nonzero and finite, got {omega}"),
            });
        }
        if n_particles == 0 {
            return Err(Error::InvalidParameter {
                name: "n_particles",
                message: "particle number must be at least 1".into(),
            });
        }
        if !chi.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "chi/mu",
                message: format!("collision parameters must be finite, got ({chi}, {mu})"),
            });
        }
        Ok(Self {
            omega,
            n_particles,
            chi,
            mu,
        })
    }

    /// On-site collision rate `kappa`. Zero for a single particle, where the
    /// collision terms drop out identically.
    pub fn kappa(&self) -> f64 {
        if self.n_particles < 2 {
            0.0
        } else {
            self.chi * self.omega / (self.n_particles as f64 - 1.0)
        }
    }

    /// Cross-well collision rate `lambda`. Zero for a single particle.
    pub fn lambda(&self) -> f64 {
        if self.n_particles < 2 {
            0.0
        } else {
            self.mu * self.omega / (self.n_particles as f64 - 1.0)
        }
    }

    /// Effective tunneling rate dressed by cross-well collisions,
    /// `omega' = omega (1 + 2 mu)`.
    pub fn omega_eff(&self) -> f64 {
        self.omega * (1.0 + 2.0 * self.mu)
    }

    pub fn abs_omega(&self) -> f64 {
        self.omega.abs()
    }

    /// When derived from a physical trap, `chi` and `mu` carry the sign of
    /// the interaction strength, so `chi * mu < 0` cannot arise physically.
    /// Such combinations are still accepted for exploratory scans.
    pub fn has_unphysical_signs(&self) -> bool {
        self.chi * self.mu < 0.0
    }

    /// True when collision terms vanish identically (single particle).
    pub fn collisionless(&self) -> bool {
        self.n_particles < 2
    }
}

/// Result of converting raw rates to reduced parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatesConversion {
    pub params: ModelParams,
    /// Set when `N = 1`: `chi` and `mu` were reported as zero because the
    /// collision terms cannot act on a single particle.
    pub single_particle: bool,
}

/// Builds the reduced parameters from the raw rates `(omega, kappa, lambda)`.
pub fn params_from_rates(omega: f64, kappa: f64, lambda: f64, n: u32) -> Result<RatesConversion> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::InvalidParameter {
            name: "omega",
            message: format!("tunneling rate must be nonzero and finite, got {omega}"),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            message: "particle number must be at least 1".into(),
        });
    }
    let single = n == 1;
    let scale = (n as f64 - 1.0) / omega;
    let params = ModelParams::new(
        omega,
        n,
        if single { 0.0 } else { kappa * scale },
        if single { 0.0 } else { lambda * scale },
    )?;
    Ok(RatesConversion {
        params,
        single_particle: single,
    })
}

/// Flat on-disk form of [`ModelParams`], with an optional trap-geometry
/// block. Serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsConfig {
    pub omega: f64,
    pub n: u32,
    pub chi: f64,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap: Option<TrapConfig>,
}

/// Trap-geometry block of [`ParamsConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    pub q0: f64,
    pub d: f64,
    pub v0: f64,
    pub omega_trap: f64,
    pub mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scattering_length: Option<f64>,
}

impl ParamsConfig {
    pub fn from_params(params: &ModelParams) -> Self {
        Self {
            omega: params.omega,
            n: params.n_particles,
            chi: params.chi,
            mu: params.mu,
            trap: None,
        }
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.omega, self.n, self.chi, self.mu)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
