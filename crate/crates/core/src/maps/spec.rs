use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Upper bound on δ₀ in strict mode.
pub const STRICT_DELTA0_LIMIT: f64 = 1e-4;
/// Upper bound on δ₀ in relaxed mode.
pub const RELAXED_DELTA0_MAX: f64 = 0.02;
pub const DEFAULT_DELTA0: f64 = 9.5e-5;
pub const DEFAULT_N: u32 = 4;
pub const MAX_PERTURBATION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// `B = A² × A` on 𝕋⁴.
    LinearB,
    /// `B × K` deformed near the origin along `E^u`, on 𝕋⁵.
    #[serde(rename = "F_k")]
    Fk,
    /// `B × J` with a DA-type surgery on the `A` factor near circle sink 0.
    #[serde(rename = "G_k")]
    Gk,
    /// The DA map `g_k` on 𝕋².
    #[serde(rename = "DA_gk")]
    DaGk,
    /// `g_k × A²` with a second surgery on `E^uu` of the `A²` factor.
    #[serde(rename = "H_k")]
    Hk,
    /// `H_k × J` blended in along the circle, on 𝕋⁵.
    #[serde(rename = "A_k")]
    Ak,
    /// The glued map on 𝕋⁷ with three circle sinks.
    M3Glued,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::LinearB,
        Family::Fk,
        Family::Gk,
        Family::DaGk,
        Family::Hk,
        Family::Ak,
        Family::M3Glued,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::LinearB => "LinearB",
            Family::Fk => "F_k",
            Family::Gk => "G_k",
            Family::DaGk => "DA_gk",
            Family::Hk => "H_k",
            Family::Ak => "A_k",
            Family::M3Glued => "M3Glued",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Family::LinearB | Family::Hk => 4,
            Family::Fk | Family::Gk | Family::Ak => 5,
            Family::DaGk => 2,
            Family::M3Glued => 7,
        }
    }

    /// Number of sink/source pairs of the circle factor, if any.
    pub fn harmonics(self) -> Option<u32> {
        match self {
            Family::Fk => Some(1),
            Family::Gk | Family::Ak => Some(2),
            Family::M3Glued => Some(3),
            _ => None,
        }
    }

    /// Smallest admissible `k`. The nested surgeries need the `k²`-scale
    /// support to sit inside the `k`-scale plateau, which holds from `k = 2`.
    pub fn min_k(self) -> u64 {
        match self {
            Family::Hk | Family::Ak | Family::M3Glued => 2,
            _ => 1,
        }
    }

    /// Whether `k` is chosen by the cone-invariance search when left on auto.
    pub fn searches_k(self) -> bool {
        matches!(self, Family::Fk | Family::Gk)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = SpecError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SpecError::UnknownFamily(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    Relaxed,
}

impl FromStr for Mode {
    type Err = SpecError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Mode::Strict),
            "relaxed" => Ok(Mode::Relaxed),
            other => Err(SpecError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Strict => "strict",
            Mode::Relaxed => "relaxed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub size: f64,
    pub seed: u64,
}

/// A fully resolved parameter set for one map family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub family: Family,
    /// `N` in `λ = λ₀ᴺ`.
    pub n_power: u32,
    pub k: u64,
    pub delta0: f64,
    /// `c` of the circle flow (ignored by families without a circle).
    pub flow_strength: f64,
    /// Circle positions of the three construction blocks of the glued map:
    /// the `A_k` block, the DA-only block and the undeformed block.
    pub rotation_offsets: Vec<f64>,
    pub perturbation: PerturbationSpec,
    pub mode: Mode,
    pub r_uses_phi_prime: bool,
    /// Set by `gate::certify` once every applicable condition has passed or
    /// been waived by the relaxed mode.
    #[serde(default)]
    pub certified: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("unknown family '{0}'")]
    UnknownFamily(String),
    #[error("unknown mode '{0}' (expected strict or relaxed)")]
    UnknownMode(String),
    #[error("N must be at least 1")]
    Power,
    #[error("k = {k} is below the minimum {min} for {family}")]
    SmallK { k: u64, min: u64, family: Family },
    #[error("delta0 = {delta0} not allowed in {mode} mode (limit {limit})")]
    Delta0 { delta0: f64, mode: Mode, limit: f64 },
    #[error("perturbation size {0} outside [0, 1e-3]")]
    Perturbation(f64),
    #[error("flow strength {0} must be finite and non-negative")]
    Flow(f64),
    #[error("rotation offsets {0:?} must be three distinct sinks j/3 of the circle map")]
    Offsets(Vec<f64>),
}

impl SystemSpec {
    /// Strict defaults with the canonical circle strength `e^{2πmc} = 0.7λ`.
    /// `k` must still be chosen; see `gate::certify` for the search.
    pub fn strict(family: Family, k: u64) -> Self {
        let lambda = super::linear::lambda0().powi(DEFAULT_N as i32);
        let flow = family
            .harmonics()
            .map(|m| crate::circle::SineFlowMap::strength_for_rate(m, 0.7 * lambda))
            .unwrap_or(0.0);
        Self {
            family,
            n_power: DEFAULT_N,
            k,
            delta0: DEFAULT_DELTA0,
            flow_strength: flow,
            rotation_offsets: vec![0.0, 1.0 / 3.0, 2.0 / 3.0],
            perturbation: PerturbationSpec { size: 0.0, seed: 0 },
            mode: Mode::Strict,
            r_uses_phi_prime: false,
            certified: false,
        }
    }

    /// Relaxed desk-scale parameters: `δ₀ = 0.02`, explicit `k`.
    pub fn relaxed(family: Family, k: u64) -> Self {
        Self { delta0: RELAXED_DELTA0_MAX, mode: Mode::Relaxed, ..Self::strict(family, k) }
    }

    pub fn with_perturbation(mut self, size: f64, seed: u64) -> Self {
        self.perturbation = PerturbationSpec { size, seed };
        self
    }

    pub fn lambda(&self) -> f64 {
        super::linear::lambda0().powi(self.n_power as i32)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.n_power < 1 {
            return Err(SpecError::Power);
        }
        let min = self.family.min_k();
        if self.k < min {
            return Err(SpecError::SmallK { k: self.k, min, family: self.family });
        }
        let limit = match self.mode {
            Mode::Strict => STRICT_DELTA0_LIMIT,
            Mode::Relaxed => RELAXED_DELTA0_MAX,
        };
        let ok = match self.mode {
            Mode::Strict => self.delta0 > 0.0 && self.delta0 < limit,
            Mode::Relaxed => self.delta0 > 0.0 && self.delta0 <= limit,
        };
        if !ok {
            return Err(SpecError::Delta0 { delta0: self.delta0, mode: self.mode, limit });
        }
        let eps = self.perturbation.size;
        if !(0.0..=MAX_PERTURBATION).contains(&eps) {
            return Err(SpecError::Perturbation(eps));
        }
        if !(self.flow_strength.is_finite() && self.flow_strength >= 0.0) {
            return Err(SpecError::Flow(self.flow_strength));
        }
        if self.family == Family::M3Glued {
            let offs = &self.rotation_offsets;
            let idx: Vec<i64> = offs.iter().map(|o| (o * 3.0).round() as i64).collect();
            let on_sinks = offs.iter().zip(&idx).all(|(o, i)| (o * 3.0 - *i as f64).abs() < 1e-12);
            let mut sorted: Vec<i64> = idx.iter().map(|i| i.rem_euclid(3)).collect();
            sorted.sort_unstable();
            if offs.len() != 3 || !on_sinks || sorted != vec![0, 1, 2] {
                return Err(SpecError::Offsets(offs.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
            let json = serde_json_like(f);
            assert_eq!(json, f.name());
        }
        assert!("K_k".parse::<Family>().is_err());
    }

    fn serde_json_like(f: Family) -> String {
        // Serde's derived tag for unit variants equals the display name.
        format!("{f}")
    }

    #[test]
    fn validation() {
        assert!(SystemSpec::strict(Family::Fk, 1).validate().is_ok());
        assert!(SystemSpec::relaxed(Family::Gk, 2).validate().is_ok());
        let mut s = SystemSpec::strict(Family::Fk, 1);
        s.delta0 = 0.02;
        assert!(matches!(s.validate(), Err(SpecError::Delta0 { .. })));
        assert!(matches!(
            SystemSpec::strict(Family::Hk, 1).validate(),
            Err(SpecError::SmallK { .. })
        ));
        let mut m = SystemSpec::relaxed(Family::M3Glued, 2);
        m.rotation_offsets = vec![0.0, 0.25, 2.0 / 3.0];
        assert!(matches!(m.validate(), Err(SpecError::Offsets(_))));
        m.rotation_offsets = vec![1.0 / 3.0, 2.0 / 3.0, 0.0];
        assert!(m.validate().is_ok());
        let p = SystemSpec::strict(Family::Fk, 1).with_perturbation(2e-3, 1);
        assert_eq!(p.validate(), Err(SpecError::Perturbation(2e-3)));
    }
}
