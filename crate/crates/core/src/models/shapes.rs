use std::f64::consts::PI;

use super::special::{bessel_j1_over_x, sinc, sphere_kernel, GaussLegendre};
use super::{ModelInfo, ParamSet, ParameterSpec, ScatteringModel};

// (1e-6 Å⁻²)² · Å³ → cm⁻¹
const TO_CM: f64 = 1e-4;

fn contrast(p: &ParamSet) -> f64 {
    p.get("sld") - p.get("sld_solvent")
}

fn sld_params(sld: f64, solvent: f64) -> Vec<ParameterSpec> {
    vec![
        ParameterSpec::sld("sld", sld, "Particle scattering length density"),
        ParameterSpec::sld("sld_solvent", solvent, "Solvent scattering length density"),
    ]
}

pub struct Sphere {
    info: ModelInfo,
}

impl Sphere {
    pub fn new() -> Self {
        let mut params = sld_params(1.0, 6.0);
        params.push(ParameterSpec::length("radius", 50.0, "Sphere radius"));
        Self {
            info: ModelInfo::new(
                "sphere",
                "Sphere: homogeneous sphere with uniform scattering length density",
                "shape:sphere",
                "Scattering from dilute, monodisperse, homogeneous spheres of radius radius \
                 and scattering length density sld in a solvent of density sld_solvent. \
                 Use it for compact globular particles, colloids, micelle cores and \
                 nanoparticles. The sphere form factor shows sharp minima at q·radius \
                 near 4.49, 7.73, 10.9.",
                "I(q) = scale/V * [3 V (sld - sld_solvent) (sin(qr) - qr cos(qr)) / (qr)^3]^2 + background\n\
                 V = 4/3 pi r^3, r = radius\n\
                 Valid for isotropic dilute systems; no structure factor.",
                params,
            ),
        }
    }
}

impl Default for Sphere {
    fn default() -> Self {
        Self::new()
    }
}

impl ScatteringModel for Sphere {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn form_intensity(&self, q: &[f64], p: &ParamSet) -> Vec<f64> {
        let r = p.get("radius");
        let drho = contrast(p);
        let volume = 4.0 / 3.0 * PI * r.powi(3);
        let prefactor = TO_CM * volume * drho * drho;
        q.iter()
            .map(|&q| prefactor * sphere_kernel(q * r).powi(2))
            .collect()
    }
}

pub struct Ellipsoid {
    info: ModelInfo,
    rule: GaussLegendre,
}

impl Ellipsoid {
    pub fn new() -> Self {
        Self::with_quadrature(GaussLegendre::standard().len())
    }

    /// Uses an `n`-point Gauss-Legendre rule for the orientational average.
    pub fn with_quadrature(n: usize) -> Self {
        let mut params = sld_params(4.0, 1.0);
        params.push(ParameterSpec::length(
            "radius_polar",
            20.0,
            "Polar radius, along the rotation axis",
        ));
        params.push(ParameterSpec::length(
            "radius_equatorial",
            400.0,
            "Equatorial radius, perpendicular to the rotation axis",
        ));
        Self {
            info: ModelInfo::new(
                "ellipsoid",
                "Ellipsoid: ellipsoid of revolution with uniform scattering length density",
                "shape:ellipsoid",
                "Orientationally averaged scattering from spheroids (ellipsoids of \
                 revolution). radius_polar is the semi-axis along the symmetry axis and \
                 radius_equatorial the two equal perpendicular semi-axes. Prolate when \
                 radius_polar > radius_equatorial, oblate otherwise; equal radii reduce \
                 to a sphere.",
                "I(q) = scale * V (sld - sld_solvent)^2 * integral_0^1 K(q r(u))^2 du + background\n\
                 K(x) = 3 (sin x - x cos x) / x^3\n\
                 r(u) = sqrt(radius_equatorial^2 (1 - u^2) + radius_polar^2 u^2)\n\
                 V = 4/3 pi radius_polar radius_equatorial^2",
                params,
            ),
            rule: GaussLegendre::new(n),
        }
    }
}

impl Default for Ellipsoid {
    fn default() -> Self {
        Self::new()
    }
}

impl ScatteringModel for Ellipsoid {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn form_intensity(&self, q: &[f64], p: &ParamSet) -> Vec<f64> {
        let rp = p.get("radius_polar");
        let re = p.get("radius_equatorial");
        let drho = contrast(p);
        let volume = 4.0 / 3.0 * PI * rp * re * re;
        let prefactor = TO_CM * volume * drho * drho;
        // r(u) does not depend on q
        let radii: Vec<f64> = self
            .rule
            .nodes
            .iter()
            .map(|&u| (re * re * (1.0 - u * u) + rp * rp * u * u).sqrt())
            .collect();
        q.iter()
            .map(|&q| {
                let avg: f64 = radii
                    .iter()
                    .zip(&self.rule.weights)
                    .map(|(&r, &w)| w * sphere_kernel(q * r).powi(2))
                    .sum();
                prefactor * avg
            })
            .collect()
    }
}

pub struct Cylinder {
    info: ModelInfo,
    rule: GaussLegendre,
}

impl Cylinder {
    pub fn new() -> Self {
        Self::with_quadrature(GaussLegendre::standard().len())
    }

    pub fn with_quadrature(n: usize) -> Self {
        let mut params = sld_params(4.0, 1.0);
        params.push(ParameterSpec::length("radius", 20.0, "Cylinder radius"));
        params.push(ParameterSpec::length("length", 400.0, "Cylinder length"));
        Self {
            info: ModelInfo::new(
                "cylinder",
                "Cylinder: right circular cylinder with uniform scattering length density",
                "shape:cylinder",
                "Orientationally averaged scattering from rigid right circular cylinders \
                 of radius radius and length length. Suitable for rods, fibres, worm-like \
                 micelles much longer than their radius, and disks when length is small.",
                "I(q) = scale * V (sld - sld_solvent)^2 * integral_0^1 A(q, u)^2 du + background\n\
                 A(q, u) = sinc(q L u / 2) * 2 J1(q R sqrt(1 - u^2)) / (q R sqrt(1 - u^2))\n\
                 V = pi R^2 L, R = radius, L = length, J1 = Bessel function of order one",
                params,
            ),
            rule: GaussLegendre::new(n),
        }
    }
}

impl Default for Cylinder {
    fn default() -> Self {
        Self::new()
    }
}

impl ScatteringModel for Cylinder {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn form_intensity(&self, q: &[f64], p: &ParamSet) -> Vec<f64> {
        let r = p.get("radius");
        let l = p.get("length");
        let drho = contrast(p);
        let volume = PI * r * r * l;
        let prefactor = TO_CM * volume * drho * drho;
        q.iter()
            .map(|&q| {
                let avg = self.rule.integrate(|u| {
                    let axial = sinc(0.5 * q * l * u);
                    let radial = 2.0 * bessel_j1_over_x(q * r * (1.0 - u * u).sqrt());
                    (axial * radial).powi(2)
                });
                prefactor * avg
            })
            .collect()
    }
}

pub struct Lamellar {
    info: ModelInfo,
}

impl Lamellar {
    pub fn new() -> Self {
        let mut params = sld_params(1.0, 6.0);
        params.push(ParameterSpec::length(
            "thickness",
            50.0,
            "Total layer thickness",
        ));
        Self {
            info: ModelInfo::new(
                "lamellar",
                "Lamellar: randomly oriented uniform sheets (lamellae) without a structure factor",
                "shape:lamellae",
                "Scattering from randomly distributed, infinitely wide flat sheets \
                 (lamellae, bilayers, membranes, vesicle walls) of uniform thickness. \
                 There is no interlayer correlation, so no Bragg peaks appear.",
                "I(q) = scale * 2 pi P(q) / (q^2 thickness) + background\n\
                 P(q) = 2 (sld - sld_solvent)^2 (1 - cos(q thickness)) / q^2\n\
                 equivalently 8 pi (sld - sld_solvent)^2 sin^2(q thickness / 2) / (thickness q^4)",
                params,
            ),
        }
    }
}

impl Default for Lamellar {
    fn default() -> Self {
        Self::new()
    }
}

impl ScatteringModel for Lamellar {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn form_intensity(&self, q: &[f64], p: &ParamSet) -> Vec<f64> {
        let delta = p.get("thickness");
        let drho = contrast(p);
        if delta == 0.0 {
            return vec![0.0; q.len()];
        }
        q.iter()
            .map(|&q| {
                let s = (0.5 * q * delta).sin();
                TO_CM * 8.0 * PI * drho * drho * s * s / (delta * q.powi(4))
            })
            .collect()
    }
}
