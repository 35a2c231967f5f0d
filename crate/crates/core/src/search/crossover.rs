use crate::qd::CvtArchive;

/// `(parent cell, neighbor cell)` pairs: for each of the `top_n` best cells
/// in rank order, its `neighbors` nearest other occupants in distance order.
pub fn crossover_pairs<T>(archive: &CvtArchive<T>, top_n: usize, neighbors: usize) -> Vec<(usize, usize)> {
    archive
        .ranked(top_n)
        .into_iter()
        .flat_map(|cell| {
            archive
                .nearest_occupants(&cell.descriptor, neighbors, Some(cell.centroid_index))
                .into_iter()
                .map(move |n| (cell.centroid_index, n.centroid_index))
        })
        .collect()
}

/// Round-robin over `pairs` until `batch_size` slots are assigned.
pub fn crossover_schedule(pairs: &[(usize, usize)], batch_size: usize) -> Vec<(usize, usize)> {
    if pairs.is_empty() {
        return Vec::new();
    }
    (0..batch_size).map(|i| pairs[i % pairs.len()]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qd::{CentroidSet, Descriptor, ScoreOrder};

    fn line_archive(scores: &[f64]) -> CvtArchive<u32> {
        let centroids = (0..scores.len())
            .map(|i| Descriptor::new(i as f64 / 8.0, 0.0))
            .collect();
        let mut a = CvtArchive::new(CentroidSet { seed: 0, centroids }, ScoreOrder::LowerIsBetter);
        for (i, s) in scores.iter().enumerate() {
            a.try_insert(i as u32, Descriptor::new(i as f64 / 8.0, 0.0), *s).unwrap();
        }
        a
    }

    #[test]
    fn single_occupant_has_no_pairs() {
        let a = line_archive(&[1.0]);
        assert!(crossover_pairs(&a, 10, 3).is_empty());
        assert!(crossover_schedule(&[], 5).is_empty());
    }

    #[test]
    fn pairs_on_a_line() {
        // Cells 0..4 on a line; cell 2 is best, then 0, 4, 1, 3.
        let a = line_archive(&[0.2, 0.4, 0.1, 0.5, 0.3]);
        let pairs = crossover_pairs(&a, 2, 2);
        assert_eq!(pairs, vec![(2, 1), (2, 3), (0, 1), (0, 2)]);
        let sched = crossover_schedule(&pairs, 6);
        assert_eq!(sched, vec![(2, 1), (2, 3), (0, 1), (0, 2), (2, 1), (2, 3)]);
    }
}
