//! Score-axis gap geometry of a trained chain at equilibrium.
//!
//! `β` is the stage-1 gap, `η_i` the drop in mean real score from stage `i`
//! to `i+1`, and `φ_i` the rise in mean fake score between the same stages.
//! Equal margins give `φ_i = (φ_{i−1} − η_i)/2` with `φ_0 = β`, and the total
//! gap reduction `Σ(η_i + φ_i)` telescopes to `β − φ_N`.

use crate::error::{Error, Result};
use crate::gogan::{stage_means, GoganChain};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GapGeometry {
    pub beta: f64,
    pub etas: Vec<f64>,
    /// `φ_1..φ_k`; shorter than `etas` when the recursion went negative.
    pub phis: Vec<f64>,
    /// 1-based stage transition at which `φ` would turn negative.
    pub infeasible_at: Option<usize>,
}

/// Runs `φ_i = (φ_{i−1} − η_i)/2` from `φ_0 = β`, stopping at the first
/// step that would produce a negative `φ`.
pub fn phi_recursion(beta: f64, etas: &[f64]) -> Result<GapGeometry> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    if let Some(e) = etas.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::Domain(format!("eta values must be nonnegative, got {e}")));
    }
    let mut phis = Vec::with_capacity(etas.len());
    let mut prev = beta;
    let mut infeasible_at = None;
    for (i, &eta) in etas.iter().enumerate() {
        if eta > prev {
            infeasible_at = Some(i + 1);
            break;
        }
        let phi = (prev - eta) / 2.0;
        phis.push(phi);
        prev = phi;
    }
    Ok(GapGeometry {
        beta,
        etas: etas.to_vec(),
        phis,
        infeasible_at,
    })
}

/// Outcome of the half-reduction check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfBound {
    pub holds: bool,
    /// `TGR − β/2`.
    pub margin: f64,
}

impl GapGeometry {
    pub fn is_feasible(&self) -> bool {
        self.infeasible_at.is_none()
    }

    /// Number of stage transitions `N`.
    pub fn transitions(&self) -> usize {
        self.etas.len()
    }

    fn require_feasible(&self) -> Result<()> {
        match self.infeasible_at {
            None if !self.etas.is_empty() => Ok(()),
            None => Err(Error::Domain("geometry has no stage transitions".into())),
            Some(i) => Err(Error::Domain(format!(
                "geometry is infeasible at transition {i}: eta exceeds the previous phi"
            ))),
        }
    }

    /// `TGR(k+1) = Σ_{i≤k} (η_i + φ_i)` for the first `k` transitions.
    pub fn tgr_prefix(&self, k: usize) -> Result<f64> {
        self.require_feasible()?;
        if k == 0 || k > self.etas.len() {
            return Err(Error::Domain(format!("prefix {k} outside 1..={}", self.etas.len())));
        }
        Ok(self.etas[..k].iter().zip(&self.phis[..k]).map(|(e, p)| e + p).sum())
    }

    /// `TGR(N+1) = Σ (η_i + φ_i)`.
    pub fn tgr_sum(&self) -> Result<f64> {
        self.tgr_prefix(self.etas.len())
    }

    /// `β − φ_N`.
    pub fn tgr_closed_form(&self) -> Result<f64> {
        self.require_feasible()?;
        Ok(self.beta - self.phis[self.phis.len() - 1])
    }

    /// Whether the total reduction reaches at least half of `β`.
    pub fn check_half_bound(&self) -> Result<HalfBound> {
        let tgr = self.tgr_sum()?;
        let margin = tgr - self.beta / 2.0;
        Ok(HalfBound {
            holds: margin >= 0.0,
            margin,
        })
    }
}

/// Geometry read off a trained chain from mean critic scores.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalGeometry {
    pub beta: f64,
    /// `η̂_i = D̄_i(x) − D̄_{i+1}(x)`; may come out negative away from equilibrium.
    pub etas: Vec<f64>,
    /// `φ̂_i = D̄_{i+1}(G_{i+1}(z)) − D̄_i(G_i(z))`.
    pub phis: Vec<f64>,
    /// `φ̂_i − (φ̂_{i−1} − η̂_i)/2`, zero at the idealized equilibrium.
    pub residuals: Vec<f64>,
    /// Per stage: mean real score and mean fake score under its own critic.
    pub stage_means: Vec<(f64, f64)>,
}

pub fn empirical_geometry(chain: &GoganChain, eval_real: &Tensor, eval_noise: &Tensor) -> Result<EmpiricalGeometry> {
    if chain.len() < 2 {
        return Err(Error::Usage("empirical geometry needs at least two stages".into()));
    }
    let means = chain
        .stages()
        .iter()
        .map(|s| stage_means(s, eval_real, eval_noise))
        .collect::<Result<Vec<_>>>()?;
    let beta = means[0].0 - means[0].1;
    let mut etas = Vec::new();
    let mut phis = Vec::new();
    let mut residuals = Vec::new();
    let mut prev_phi = beta;
    for w in means.windows(2) {
        let eta = w[0].0 - w[1].0;
        let phi = w[1].1 - w[0].1;
        residuals.push(phi - (prev_phi - eta) / 2.0);
        etas.push(eta);
        phis.push(phi);
        prev_phi = phi;
    }
    Ok(EmpiricalGeometry {
        beta,
        etas,
        phis,
        residuals,
        stage_means: means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_eta_halves_geometrically() {
        let g = phi_recursion(1.0, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(g.phis, vec![0.5, 0.25, 0.125]);
        assert_eq!(g.tgr_sum().unwrap(), 0.875);
        assert_eq!(g.tgr_closed_form().unwrap(), 0.875);
    }

    #[test]
    fn single_transition_examples() {
        let g = phi_recursion(1.0, &[0.2]).unwrap();
        assert!((g.phis[0] - 0.4).abs() < 1e-15);
        assert!((g.tgr_sum().unwrap() - 0.6).abs() < 1e-15);
        let b = g.check_half_bound().unwrap();
        assert!(b.holds && b.margin > 0.0);

        let g = phi_recursion(1.0, &[0.0]).unwrap();
        assert_eq!(g.tgr_sum().unwrap(), 0.5);
        let b = g.check_half_bound().unwrap();
        assert!(b.holds);
        assert_eq!(b.margin, 0.0);

        // β − φ₁ = (β + η₁)/2
        let g = phi_recursion(2.0, &[0.6]).unwrap();
        assert!((g.tgr_closed_form().unwrap() - 1.3).abs() < 1e-15);
    }

    #[test]
    fn infeasible_configurations_are_flagged() {
        let g = phi_recursion(1.0, &[0.2, 0.5, 0.0]).unwrap();
        assert_eq!(g.infeasible_at, Some(2));
        assert_eq!(g.phis, vec![0.4]);
        assert!(matches!(g.tgr_sum(), Err(Error::Domain(_))));
        assert!(g.tgr_closed_form().is_err());
        assert!(g.check_half_bound().is_err());
    }

    #[test]
    fn bad_inputs_are_domain_errors() {
        assert!(matches!(phi_recursion(0.0, &[0.1]), Err(Error::Domain(_))));
        assert!(phi_recursion(-1.0, &[]).is_err());
        assert!(phi_recursion(1.0, &[-0.1]).is_err());
        assert!(phi_recursion(1.0, &[]).unwrap().tgr_sum().is_err());
    }
}
