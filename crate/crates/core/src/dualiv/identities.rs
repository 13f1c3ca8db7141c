//! Exact population checks of the dual objective in a [`DiscreteToyWorld`].
//!
//! The population objective is taken in its conditional form
//!
//! ```text
//! Psi(f, u) = E_YZ[ (E_{X|Z}[f(X)] - Y) u(Y, Z) - u(Y, Z)^2 / 2 ]
//! R(f)      = E_YZ[ (Y - E_{X|Z}[f(X)])^2 / 2 ]
//! ```
//!
//! and four identities are checked by finite sums:
//!
//! 1. `u*(y, z) = E_{X|z}[f(X)] - y` is a stationary point (hence the
//!    maximizer) of the concave quadratic `Psi(f, .)`;
//! 2. `R(f) = Psi(f, u*)`;
//! 3. `R(f) - R(f*) = |f - f*|^2_{L2(P_X)} / 2`;
//! 4. `|u - u*|^2_{L2(P_YZ)} / 2 = Psi(f, u*) - Psi(f, u)` for probe `u`.
//!
//! Identity 3 only holds when `X` is a function of `Z` on its support. In
//! general the excess risk equals the projected norm
//! `|E_{X|Z}[f - f*]|^2_{L2(P_Z)} / 2`, which is reported alongside.

use serde::Serialize;

use crate::envs::DiscreteToyWorld;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityReport {
    pub risk: f64,
    pub risk_star: f64,
    pub l2_gap_sq_half: f64,
    /// max over atoms of `|d Psi / d u(atom)|` at `u*`
    pub maximizer_violation: f64,
    /// `|R(f) - Psi(f, u*)|`
    pub risk_violation: f64,
    /// `|R(f) - R(f*) - |f - f*|^2 / 2|`
    pub excess_risk_violation: f64,
    /// max over probes of `||u - u*|^2 / 2 - (Psi(f, u*) - Psi(f, u))|`
    pub dual_gap_violation: f64,
    /// `|R(f) - R(f*) - |E_{X|Z}[f - f*]|^2 / 2|`
    pub projected_excess_violation: f64,
    /// Largest of the four identity violations.
    pub max_violation: f64,
}

/// One `(y, z)` support point of `P_YZ`.
#[derive(Debug, Clone, Copy)]
struct Atom {
    z: usize,
    y: f64,
    prob: f64,
}

fn yz_atoms(world: &DiscreteToyWorld) -> Vec<Atom> {
    let mut atoms: Vec<Atom> = Vec::new();
    for (zi, (pz, row)) in world.z_probs.iter().zip(&world.x_given_z).enumerate() {
        let start = atoms.len();
        for (px, fx) in row.iter().zip(&world.f_star) {
            for (pe, e) in world.e_probs.iter().zip(&world.e_support) {
                let y = fx + e;
                let p = pz * px * pe;
                match atoms[start..].iter_mut().find(|a| a.y.to_bits() == y.to_bits()) {
                    Some(a) => a.prob += p,
                    None => atoms.push(Atom { z: zi, y, prob: p }),
                }
            }
        }
    }
    atoms
}

fn psi(atoms: &[Atom], cond_mean: &[f64], u: &[f64]) -> f64 {
    atoms
        .iter()
        .zip(u)
        .map(|(a, &u)| a.prob * ((cond_mean[a.z] - a.y) * u - 0.5 * u * u))
        .sum()
}

/// `R(f)` summed over `(z, x, e)` directly rather than over atoms.
fn risk(world: &DiscreteToyWorld, cond_mean: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((pz, row), g) in world.z_probs.iter().zip(&world.x_given_z).zip(cond_mean) {
        for (px, fx) in row.iter().zip(&world.f_star) {
            for (pe, e) in world.e_probs.iter().zip(&world.e_support) {
                let resid = fx + e - g;
                total += pz * px * pe * 0.5 * resid * resid;
            }
        }
    }
    total
}

pub fn discrete_world_checks(world: &DiscreteToyWorld, f_table: &[f64]) -> Result<IdentityReport> {
    world.validate()?;
    if f_table.len() != world.x_support.len() {
        return Err(Error::DimensionMismatch {
            expected: world.x_support.len(),
            actual: f_table.len(),
        });
    }
    let atoms = yz_atoms(world);
    let g = world.conditional_mean(f_table);
    let g_star = world.conditional_mean(&world.f_star);

    let u_star: Vec<f64> = atoms.iter().map(|a| g[a.z] - a.y).collect();
    let psi_star = psi(&atoms, &g, &u_star);

    // Psi is quadratic in each coordinate, so a unit central difference is exact.
    let mut maximizer_violation: f64 = 0.0;
    let mut probe = u_star.clone();
    for i in 0..atoms.len() {
        probe[i] = u_star[i] + 1.0;
        let up = psi(&atoms, &g, &probe);
        probe[i] = u_star[i] - 1.0;
        let down = psi(&atoms, &g, &probe);
        probe[i] = u_star[i];
        maximizer_violation = maximizer_violation.max((0.5 * (up - down)).abs());
    }

    let r = risk(world, &g);
    let r_star = risk(world, &g_star);
    let risk_violation = (r - psi_star).abs();

    let px = world.x_marginal();
    let l2_gap_sq_half: f64 = 0.5
        * px.iter()
            .zip(f_table.iter().zip(&world.f_star))
            .map(|(p, (f, fs))| p * (f - fs) * (f - fs))
            .sum::<f64>();
    let excess_risk_violation = (r - r_star - l2_gap_sq_half).abs();
    let projected: f64 = 0.5
        * world
            .z_probs
            .iter()
            .zip(g.iter().zip(&g_star))
            .map(|(p, (a, b))| p * (a - b) * (a - b))
            .sum::<f64>();
    let projected_excess_violation = (r - r_star - projected).abs();

    let z_of = |a: &Atom| world.z_support[a.z];
    type Probe<'a> = Box<dyn Fn(&Atom) -> f64 + 'a>;
    let probes: [Probe; 5] = [
        Box::new(|_| 0.0),
        Box::new(|_| 1.0),
        Box::new(|a| a.y),
        Box::new(move |a| a.y * z_of(a)),
        Box::new(move |a| (a.y + 2.0 * z_of(a)).sin()),
    ];
    let mut dual_gap_violation: f64 = 0.0;
    for p in &probes {
        let u: Vec<f64> = atoms.iter().map(p).collect();
        let norm_half: f64 = 0.5
            * atoms
                .iter()
                .zip(u.iter().zip(&u_star))
                .map(|(a, (v, s))| a.prob * (v - s) * (v - s))
                .sum::<f64>();
        let gap = psi_star - psi(&atoms, &g, &u);
        dual_gap_violation = dual_gap_violation.max((norm_half - gap).abs());
    }

    let max_violation = maximizer_violation
        .max(risk_violation)
        .max(excess_risk_violation)
        .max(dual_gap_violation);
    Ok(IdentityReport {
        risk: r,
        risk_star: r_star,
        l2_gap_sq_half,
        maximizer_violation,
        risk_violation,
        excess_risk_violation,
        dual_gap_violation,
        projected_excess_violation,
        max_violation,
    })
}
