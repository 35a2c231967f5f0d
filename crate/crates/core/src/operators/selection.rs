use rand::Rng;

use super::temperature::perturb_temperature_uniform;
use crate::domain::{most_curious, PromptIndividual, NUM_MUTATION_PROMPTS};
use crate::qd::CvtArchive;

/// Prompt and temperature chosen for one mutation slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotSelection {
    pub prompt_id: u8,
    pub temperature: f64,
    /// Prompt-archive cell the selection came from, for curiosity credit.
    pub source_cell: Option<usize>,
}

/// Even slots take the most curious prompt individual; odd slots draw a
/// uniformly random mutation prompt and perturb the most recently selected
/// temperature in place. With no curious individual every slot is random.
pub fn select_prompt_for_slot<R: Rng + ?Sized>(
    slot: usize,
    curious: Option<(usize, &PromptIndividual)>,
    last_temperature: &mut f64,
    rng: &mut R,
) -> SlotSelection {
    match curious {
        Some((cell, p)) if slot.is_multiple_of(2) => {
            *last_temperature = p.temperature;
            SlotSelection {
                prompt_id: p.prompt_id,
                temperature: p.temperature,
                source_cell: Some(cell),
            }
        }
        _ => {
            let prompt_id = rng.random_range(0..NUM_MUTATION_PROMPTS) as u8;
            *last_temperature = perturb_temperature_uniform(*last_temperature, rng);
            SlotSelection {
                prompt_id,
                temperature: *last_temperature,
                source_cell: None,
            }
        }
    }
}

/// Selections for a whole batch against a fixed prompt archive.
pub fn select_batch<R: Rng + ?Sized>(
    batch_size: usize,
    archive: &CvtArchive<PromptIndividual>,
    last_temperature: &mut f64,
    rng: &mut R,
) -> Vec<SlotSelection> {
    let curious = most_curious(archive).ok();
    (0..batch_size)
        .map(|slot| select_prompt_for_slot(slot, curious, last_temperature, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::prompt_descriptor;
    use crate::qd::{generate_centroids, ScoreOrder};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn archive_with(p: PromptIndividual) -> CvtArchive<PromptIndividual> {
        let mut a = CvtArchive::new(
            generate_centroids(100, 5000, 3).unwrap(),
            ScoreOrder::HigherIsBetter,
        );
        a.try_insert(p.clone(), prompt_descriptor(&p), 0.0).unwrap();
        a
    }

    #[test]
    fn even_slot_takes_most_curious() {
        let mut p = PromptIndividual::new(2, 0.7).unwrap();
        p.curiosity = 3.0;
        let a = archive_with(p);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = 0.6;
        let sel = select_batch(2, &a, &mut t, &mut rng);
        assert_eq!((sel[0].prompt_id, sel[0].temperature), (2, 0.7));
        assert!(sel[0].source_cell.is_some());
        assert!(sel[1].prompt_id < 15);
        assert!((sel[1].temperature - 0.7).abs() <= 0.1 + 1e-9);
        assert!(sel[1].source_cell.is_none());
    }

    #[test]
    fn empty_archive_uses_random_branch() {
        let a = CvtArchive::new(
            generate_centroids(10, 100, 3).unwrap(),
            ScoreOrder::HigherIsBetter,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = 0.6;
        let sel = select_batch(10, &a, &mut t, &mut rng);
        assert!(sel.iter().all(|s| s.source_cell.is_none() && s.prompt_id < 15));
        assert!((sel[0].temperature - 0.6).abs() <= 0.1 + 1e-9);
    }

    #[test]
    fn curious_branch_count_is_half_rounded_up() {
        let a = archive_with(PromptIndividual::new(4, 0.3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [1usize, 2, 7, 100] {
            let mut t = 0.6;
            let sel = select_batch(n, &a, &mut t, &mut rng);
            let curious = sel.iter().filter(|s| s.source_cell.is_some()).count();
            assert_eq!(curious, n.div_ceil(2));
        }
    }
}
