//! Trajectory bundle formation over a built neural map.

use serde::{Deserialize, Serialize};

use crate::codec::ReducedPoint;
use crate::error::{Error, Result};
use crate::neural_map::NeuralMap;
use crate::scalar::Real;

/// How a pair of firing ranks is turned into a connection weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BundleVariant {
    /// Weight falls linearly with the outer rank of the pair.
    #[serde(rename = "lnrConnections")]
    Linear,
    /// Every pair gets weight one.
    #[serde(rename = "fixConnections")]
    Fixed,
    /// Only rank-matched pairs connect, with linearly falling weight.
    #[serde(rename = "parConnections")]
    Parallel,
}

impl BundleVariant {
    pub const ALL: [BundleVariant; 3] = [BundleVariant::Linear, BundleVariant::Parallel, BundleVariant::Fixed];

    pub fn name(self) -> &'static str {
        match self {
            BundleVariant::Linear => "lnrConnections",
            BundleVariant::Fixed => "fixConnections",
            BundleVariant::Parallel => "parConnections",
        }
    }
}

impl std::fmt::Display for BundleVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BundleVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lnrConnections" | "lnr" => Ok(BundleVariant::Linear),
            "fixConnections" | "fix" => Ok(BundleVariant::Fixed),
            "parConnections" | "par" => Ok(BundleVariant::Parallel),
            other => Err(Error::Config(format!("unknown bundle variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BundleConfig<T> {
    pub phi: usize,
    pub eta_f: T,
    pub tau_f: T,
    pub variant: BundleVariant,
}

impl<T: Real> Default for BundleConfig<T> {
    fn default() -> Self {
        Self {
            phi: 1,
            eta_f: T::lit(0.5),
            tau_f: T::lit(1e3),
            variant: BundleVariant::Linear,
        }
    }
}

impl<T: Real> BundleConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.phi == 0 {
            return Err(Error::Config("bundle width phi must be at least 1".into()));
        }
        if !(self.eta_f > T::zero() && self.eta_f <= T::one()) {
            return Err(Error::Config("eta_f must lie in (0, 1]".into()));
        }
        if !(self.tau_f > T::zero() && self.tau_f.is_finite()) {
            return Err(Error::Config("tau_f must be positive".into()));
        }
        Ok(())
    }

    /// Weight an entry converges to under repeated unit-weight updates.
    pub fn saturation(&self) -> T {
        let et = self.eta_f * self.tau_f;
        et / (T::one() + et)
    }
}

/// Connection weight between ranks of consecutive firing sets; `None` means no connection.
pub fn calculate_weight<T: Real>(
    rank_i: usize,
    rank_j: usize,
    phi: usize,
    variant: BundleVariant,
) -> Result<Option<T>> {
    for rank in [rank_i, rank_j] {
        if rank >= phi {
            return Err(Error::RankOutOfRange { rank, phi });
        }
    }
    let linear = |r: usize| T::from_usize_lossy(phi - r) / T::from_usize_lossy(phi);
    Ok(match variant {
        BundleVariant::Linear => Some(linear(rank_i.max(rank_j))),
        BundleVariant::Fixed => Some(T::one()),
        BundleVariant::Parallel if rank_i == rank_j => Some(linear(rank_i)),
        BundleVariant::Parallel => None,
    })
}

/// One discrete step of the synapse dynamics on `B(to, from)`; keeps F mirrored.
pub fn update_connection<T: Real>(
    map: &mut NeuralMap<T>,
    from: usize,
    to: usize,
    w: T,
    eta_f: T,
    tau_f: T,
) -> Result<T> {
    let b = map.backward_weight(to, from);
    let next = (b + eta_f * w * (T::one() - b) - b / tau_f).max(T::zero()).min(T::one());
    map.set_backward(to, from, next)?;
    Ok(next)
}

/// Links the firing sets of consecutive samples of every trajectory.
/// Self-connections are skipped.
pub fn form_bundles<T: Real>(
    map: &mut NeuralMap<T>,
    trajectories: &[Vec<ReducedPoint<T>>],
    cfg: &BundleConfig<T>,
) -> Result<BundleStats> {
    cfg.validate()?;
    if trajectories.is_empty() {
        return Err(Error::Config("no trajectories to form bundles from".into()));
    }
    let mut stats = BundleStats::default();
    for traj in trajectories {
        let mut prev = match traj.first() {
            Some(p) => map.find_firing_neurons(p, cfg.phi)?,
            None => continue,
        };
        for point in &traj[1..] {
            let next = map.find_firing_neurons(point, cfg.phi)?;
            for (ri, earlier) in prev.iter().enumerate() {
                for (rj, later) in next.iter().enumerate() {
                    if earlier.id == later.id {
                        stats.self_pairs += 1;
                        continue;
                    }
                    if let Some(w) = calculate_weight(ri, rj, cfg.phi, cfg.variant)? {
                        update_connection(map, later.id, earlier.id, w, cfg.eta_f, cfg.tau_f)?;
                        stats.updates += 1;
                    }
                }
            }
            prev = next;
        }
    }
    stats.entries = map.backward().nnz();
    Ok(stats)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleStats {
    pub updates: usize,
    /// Rank pairs skipped because both samples fired the same neuron.
    pub self_pairs: usize,
    pub entries: usize,
}
