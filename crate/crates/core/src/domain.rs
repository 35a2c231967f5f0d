//! Individuals stored in the two archives and the bookkeeping around them:
//! descriptors, curiosity, collective prompt fitness and the running best loss.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::qd::{CvtArchive, Descriptor, QdError};

/// Mutation prompts plus the crossover prompt.
pub const NUM_PROMPTS: usize = 16;
pub const NUM_MUTATION_PROMPTS: usize = 15;
/// Reserved for crossover; occupies descriptor space but is never selected
/// for mutation.
pub const CROSSOVER_PROMPT_ID: u8 = 15;

/// Normalization caps for the network descriptor.
pub const DEPTH_WIDTH_CAP: f64 = 200.0;
pub const FLOPS_CAP: f64 = 5e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GenomeId(pub u64);

impl fmt::Display for GenomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Mutation { prompt_id: u8 },
    Crossover,
}

impl Origin {
    fn parent_count(self) -> usize {
        match self {
            Origin::Seed => 0,
            Origin::Mutation { .. } => 1,
            Origin::Crossover => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("genome source is empty")]
    EmptySource,
    #[error("{origin:?} genome needs {expected} parents, got {got}")]
    ParentCount {
        origin: Origin,
        expected: usize,
        got: usize,
    },
    #[error("prompt id {0} out of range")]
    PromptId(u8),
    #[error("untrainable networks have no descriptor")]
    Untrainable,
    #[error(transparent)]
    Archive(#[from] QdError),
}

/// Program text of one network definition plus lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGenome {
    pub id: GenomeId,
    pub source: String,
    pub parent_ids: Vec<GenomeId>,
    pub origin: Origin,
}

impl NetworkGenome {
    pub fn new(
        id: GenomeId,
        source: String,
        parent_ids: Vec<GenomeId>,
        origin: Origin,
    ) -> Result<Self, DomainError> {
        if source.trim().is_empty() {
            return Err(DomainError::EmptySource);
        }
        if parent_ids.len() != origin.parent_count() {
            return Err(DomainError::ParentCount {
                origin,
                expected: origin.parent_count(),
                got: parent_ids.len(),
            });
        }
        if let Origin::Mutation { prompt_id } = origin {
            if prompt_id as usize >= NUM_PROMPTS {
                return Err(DomainError::PromptId(prompt_id));
            }
        }
        Ok(Self {
            id,
            source,
            parent_ids,
            origin,
        })
    }
}

/// Serde helper: `+inf` is stored as `null`.
pub mod loss_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Evaluator output. Untrainable networks carry `loss == +inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub trainable: bool,
    #[serde(with = "loss_serde")]
    pub loss: f64,
    pub flops: f64,
    pub depth: u64,
    pub width: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl NetworkMetrics {
    pub const UNTRAINABLE_LOSS: f64 = f64::INFINITY;

    pub fn untrainable(error: impl Into<String>) -> Self {
        Self {
            trainable: false,
            loss: Self::UNTRAINABLE_LOSS,
            flops: 0.0,
            depth: 0,
            width: 0,
            error: Some(error.into()),
        }
    }

    pub fn trained(loss: f64, flops: f64, depth: u64, width: u64) -> Self {
        if !loss.is_finite() || loss < 0.0 || depth == 0 || width == 0 {
            return Self::untrainable(format!(
                "invalid metrics: loss={loss} depth={depth} width={width}"
            ));
        }
        Self {
            trainable: true,
            loss,
            flops: flops.max(0.0),
            depth,
            width,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkIndividual {
    pub genome: NetworkGenome,
    pub metrics: NetworkMetrics,
}

/// `(clamp(depth/width / 200), clamp(flops / 5e9))`.
pub fn network_descriptor(m: &NetworkMetrics) -> Result<Descriptor, DomainError> {
    if !m.trainable || m.width == 0 {
        return Err(DomainError::Untrainable);
    }
    let ratio = m.depth as f64 / m.width as f64;
    Ok(Descriptor::new(ratio / DEPTH_WIDTH_CAP, m.flops / FLOPS_CAP))
}

/// A (prompt, temperature) pair with its curiosity credit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptIndividual {
    pub prompt_id: u8,
    pub temperature: f64,
    pub curiosity: f64,
}

impl PromptIndividual {
    /// Temperature is clamped into `[0, 1]`.
    pub fn new(prompt_id: u8, temperature: f64) -> Result<Self, DomainError> {
        if prompt_id as usize >= NUM_PROMPTS {
            return Err(DomainError::PromptId(prompt_id));
        }
        Ok(Self {
            prompt_id,
            temperature: clamp_temperature(temperature),
            curiosity: 0.0,
        })
    }
}

/// Temperatures live in `[0, 1]` at a resolution of 1e-9, so sums of the
/// +-0.05 feedback steps land exactly on their decimal values.
pub fn clamp_temperature(t: f64) -> f64 {
    if t.is_nan() {
        return 0.0;
    }
    ((t.clamp(0.0, 1.0) * TEMPERATURE_RESOLUTION).round() / TEMPERATURE_RESOLUTION).clamp(0.0, 1.0)
}

const TEMPERATURE_RESOLUTION: f64 = 1e9;

/// `(prompt_id / 16, temperature)`.
pub fn prompt_descriptor(p: &PromptIndividual) -> Descriptor {
    Descriptor::new(p.prompt_id as f64 / NUM_PROMPTS as f64, p.temperature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuriosityOutcome {
    AddedToArchive,
    NotAdded,
    Untrainable,
}

impl CuriosityOutcome {
    pub fn delta(self) -> f64 {
        match self {
            CuriosityOutcome::AddedToArchive => 1.0,
            CuriosityOutcome::NotAdded => -0.5,
            CuriosityOutcome::Untrainable => -1.0,
        }
    }
}

pub fn update_curiosity(p: &mut PromptIndividual, outcome: CuriosityOutcome) {
    p.curiosity += outcome.delta();
}

/// Per-prompt count of generated networks that matched or beat the running
/// best loss.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStats {
    pub collective_fitness: [u64; NUM_PROMPTS],
}

impl PromptStats {
    pub fn fitness(&self, prompt_id: u8) -> u64 {
        self.collective_fitness
            .get(prompt_id as usize)
            .copied()
            .unwrap_or(0)
    }

    /// Increments the prompt's counter iff `loss <= best_loss`. Non-finite
    /// losses never count. Returns whether the counter moved.
    pub fn update(&mut self, prompt_id: u8, loss: f64, best_loss: f64) -> Result<bool, DomainError> {
        let slot = self
            .collective_fitness
            .get_mut(prompt_id as usize)
            .ok_or(DomainError::PromptId(prompt_id))?;
        if loss.is_finite() && loss <= best_loss {
            *slot += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Running minimum of finite losses; starts at `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestLossTracker {
    #[serde(with = "loss_serde")]
    best: f64,
}

impl Default for BestLossTracker {
    fn default() -> Self {
        Self {
            best: f64::INFINITY,
        }
    }
}

impl BestLossTracker {
    pub fn get(&self) -> f64 {
        self.best
    }

    /// Records a loss; returns true when it strictly improved the best.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss.is_finite() && loss < self.best {
            self.best = loss;
            true
        } else {
            false
        }
    }
}

/// Cell index and occupant with the highest curiosity; ties go to the lowest
/// centroid index.
pub fn most_curious(
    archive: &CvtArchive<PromptIndividual>,
) -> Result<(usize, &PromptIndividual), DomainError> {
    let mut best: Option<(usize, &PromptIndividual)> = None;
    for cell in archive.cells() {
        match best {
            Some((_, b)) if cell.occupant.curiosity <= b.curiosity => {}
            _ => best = Some((cell.centroid_index, &cell.occupant)),
        }
    }
    best.ok_or(DomainError::Archive(QdError::EmptyArchive))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qd::{CentroidSet, ScoreOrder};

    fn metrics(depth: u64, width: u64, flops: f64) -> NetworkMetrics {
        NetworkMetrics::trained(1.0, flops, depth, width)
    }

    #[test]
    fn network_descriptor_examples() {
        let d = network_descriptor(&metrics(4, 100, 2.5e9)).unwrap();
        assert!((d.x() - 0.0002).abs() < 1e-15 && d.y() == 0.5);
        let d = network_descriptor(&metrics(250, 1, 1.0)).unwrap();
        assert_eq!(d.x(), 1.0);
        let d = network_descriptor(&metrics(1, 1, 1e12)).unwrap();
        assert_eq!(d.y(), 1.0);
        assert_eq!(
            network_descriptor(&NetworkMetrics::untrainable("x")),
            Err(DomainError::Untrainable)
        );
    }

    #[test]
    fn seed_network_descriptor() {
        let d = network_descriptor(&metrics(2, 10, 26_624.0)).unwrap();
        assert!((d.x() - 0.001).abs() < 1e-15);
        assert!((d.y() - 5.3248e-6).abs() < 1e-15);
    }

    #[test]
    fn prompt_descriptor_examples() {
        let p = PromptIndividual::new(0, 0.6).unwrap();
        assert_eq!(prompt_descriptor(&p).values(), [0.0, 0.6]);
        let p = PromptIndividual::new(15, 1.0).unwrap();
        assert_eq!(prompt_descriptor(&p).values(), [0.9375, 1.0]);
        let all: Vec<_> = (0..16u8)
            .map(|i| prompt_descriptor(&PromptIndividual::new(i, 0.5).unwrap()))
            .collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(PromptIndividual::new(16, 0.5), Err(DomainError::PromptId(16)));
        assert_eq!(PromptIndividual::new(3, 1.7).unwrap().temperature, 1.0);
    }

    #[test]
    fn curiosity_examples() {
        let mut p = PromptIndividual::new(1, 0.5).unwrap();
        update_curiosity(&mut p, CuriosityOutcome::AddedToArchive);
        assert_eq!(p.curiosity, 1.0);
        update_curiosity(&mut p, CuriosityOutcome::NotAdded);
        assert_eq!(p.curiosity, 0.5);
        update_curiosity(&mut p, CuriosityOutcome::Untrainable);
        assert_eq!(p.curiosity, -0.5);
    }

    #[test]
    fn collective_fitness_examples() {
        let mut s = PromptStats::default();
        assert!(s.update(2, 0.9, 1.0).unwrap());
        assert_eq!(s.fitness(2), 1);
        s.collective_fitness[3] = 3;
        assert!(!s.update(3, 1.1, 1.0).unwrap());
        assert_eq!(s.fitness(3), 3);
        assert!(s.update(4, 1.0, 1.0).unwrap());
        assert_eq!(s.fitness(4), 1);
        assert!(!s.update(5, f64::INFINITY, f64::INFINITY).unwrap());
        assert!(s.update(16, 0.1, 1.0).is_err());
    }

    #[test]
    fn best_loss_is_running_minimum() {
        let mut b = BestLossTracker::default();
        assert!(b.get().is_infinite());
        assert!(b.observe(2.0));
        assert!(!b.observe(f64::INFINITY));
        assert!(!b.observe(2.0));
        assert!(b.observe(1.5));
        assert!(!b.observe(f64::NAN));
        assert_eq!(b.get(), 1.5);
        let json = serde_json::to_string(&BestLossTracker::default()).unwrap();
        assert_eq!(json, r#"{"best":null}"#);
        let back: BestLossTracker = serde_json::from_str(&json).unwrap();
        assert!(back.get().is_infinite());
    }

    #[test]
    fn genome_lineage_invariants() {
        let g = NetworkGenome::new(GenomeId(1), "x".into(), vec![], Origin::Seed);
        assert!(g.is_ok());
        assert_eq!(
            NetworkGenome::new(GenomeId(1), "  ".into(), vec![], Origin::Seed),
            Err(DomainError::EmptySource)
        );
        assert!(NetworkGenome::new(GenomeId(2), "x".into(), vec![], Origin::Crossover).is_err());
        assert!(NetworkGenome::new(
            GenomeId(3),
            "x".into(),
            vec![GenomeId(1)],
            Origin::Mutation { prompt_id: 2 }
        )
        .is_ok());
    }

    fn prompt_archive() -> CvtArchive<PromptIndividual> {
        let centroids = (0..16)
            .map(|i| Descriptor::new(i as f64 / 16.0, 0.5))
            .collect();
        CvtArchive::new(
            CentroidSet { seed: 0, centroids },
            ScoreOrder::HigherIsBetter,
        )
    }

    #[test]
    fn most_curious_examples() {
        let mut a = prompt_archive();
        assert!(most_curious(&a).is_err());
        for (id, c) in [(0u8, -0.5), (1, 2.0), (2, 1.0)] {
            let mut p = PromptIndividual::new(id, 0.5).unwrap();
            p.curiosity = c;
            a.try_insert(p.clone(), prompt_descriptor(&p), 0.0).unwrap();
        }
        assert_eq!(most_curious(&a).unwrap().1.prompt_id, 1);

        // Tie goes to the lowest centroid index.
        a.occupant_mut(2).unwrap().curiosity = 2.0;
        assert_eq!(most_curious(&a).unwrap().0, 1);
    }

    #[test]
    fn most_curious_after_scripted_outcomes() {
        use CuriosityOutcome::*;
        let mut a = prompt_archive();
        for id in [4u8, 7, 9] {
            let p = PromptIndividual::new(id, 0.5).unwrap();
            a.try_insert(p.clone(), prompt_descriptor(&p), 0.0).unwrap();
        }
        // Hand ledger: cell 4: +1 +1 -0.5 -1 = 0.5; cell 7: +1 = 1.0;
        // cell 9: -0.5 -0.5 = -1.0.
        for o in [AddedToArchive, AddedToArchive, NotAdded, Untrainable] {
            update_curiosity(a.occupant_mut(4).unwrap(), o);
        }
        update_curiosity(a.occupant_mut(7).unwrap(), AddedToArchive);
        update_curiosity(a.occupant_mut(9).unwrap(), NotAdded);
        update_curiosity(a.occupant_mut(9).unwrap(), NotAdded);
        let (idx, p) = most_curious(&a).unwrap();
        assert_eq!((idx, p.prompt_id, p.curiosity), (7, 7, 1.0));
    }
}
