use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::kdtree::KdTree;
use super::{CentroidSet, Descriptor, QdError};

/// Which side of a score comparison wins a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOrder {
    LowerIsBetter,
    HigherIsBetter,
}

impl ScoreOrder {
    /// Strict improvement of `challenger` over `incumbent`.
    pub fn beats(self, challenger: f64, incumbent: f64) -> bool {
        match self {
            ScoreOrder::LowerIsBetter => challenger < incumbent,
            ScoreOrder::HigherIsBetter => challenger > incumbent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    AddedToEmpty,
    Replaced,
    Rejected,
}

impl InsertOutcome {
    pub fn added(self) -> bool {
        !matches!(self, InsertOutcome::Rejected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell<T> {
    pub centroid_index: usize,
    pub descriptor: Descriptor,
    pub score: f64,
    pub occupant: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveStats {
    pub filled_count: usize,
    pub best_score: Option<f64>,
    pub mean_score: Option<f64>,
}

/// CVT-MAP-Elites archive: one elite per Voronoi cell of a fixed centroid set.
///
/// Mutation goes through `&mut self` only; the archive is `Send + Sync` when
/// its occupant type is, so readers can share it between generation commits.
#[derive(Debug, Clone)]
pub struct CvtArchive<T> {
    centroids: CentroidSet,
    tree: KdTree,
    cells: BTreeMap<usize, Cell<T>>,
    order: ScoreOrder,
}

impl<T> CvtArchive<T> {
    pub fn new(centroids: CentroidSet, order: ScoreOrder) -> Self {
        let tree = KdTree::build(&centroids.centroids);
        Self {
            centroids,
            tree,
            cells: BTreeMap::new(),
            order,
        }
    }

    pub fn centroid_set(&self) -> &CentroidSet {
        &self.centroids
    }

    pub fn capacity(&self) -> usize {
        self.centroids.len()
    }

    pub fn order(&self) -> ScoreOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Tree-accelerated nearest centroid, lowest index on ties.
    pub fn nearest_centroid(&self, d: &Descriptor) -> usize {
        self.tree
            .nearest(d)
            .expect("centroid sets are never empty")
    }

    pub fn try_insert(
        &mut self,
        occupant: T,
        descriptor: Descriptor,
        score: f64,
    ) -> Result<InsertOutcome, QdError> {
        if !score.is_finite() {
            return Err(QdError::NonFiniteScore(score));
        }
        let idx = self.nearest_centroid(&descriptor);
        let cell = Cell {
            centroid_index: idx,
            descriptor,
            score,
            occupant,
        };
        match self.cells.get_mut(&idx) {
            None => {
                self.cells.insert(idx, cell);
                Ok(InsertOutcome::AddedToEmpty)
            }
            Some(incumbent) if self.order.beats(score, incumbent.score) => {
                *incumbent = cell;
                Ok(InsertOutcome::Replaced)
            }
            Some(_) => Ok(InsertOutcome::Rejected),
        }
    }

    /// Filled cells in centroid-index order.
    pub fn cells(&self) -> impl Iterator<Item = &Cell<T>> {
        self.cells.values()
    }

    pub fn cell(&self, centroid_index: usize) -> Option<&Cell<T>> {
        self.cells.get(&centroid_index)
    }

    /// Mutable access to an occupant. Score and descriptor stay fixed.
    pub fn occupant_mut(&mut self, centroid_index: usize) -> Option<&mut T> {
        self.cells.get_mut(&centroid_index).map(|c| &mut c.occupant)
    }

    pub fn best_cell(&self) -> Result<&Cell<T>, QdError> {
        let mut best: Option<&Cell<T>> = None;
        for c in self.cells.values() {
            match best {
                Some(b) if !self.order.beats(c.score, b.score) => {}
                _ => best = Some(c),
            }
        }
        best.ok_or(QdError::EmptyArchive)
    }

    pub fn best_occupant(&self) -> Result<&T, QdError> {
        self.best_cell().map(|c| &c.occupant)
    }

    /// The `n` best cells, best first; equal scores keep centroid-index order.
    pub fn ranked(&self, n: usize) -> Vec<&Cell<T>> {
        let mut all: Vec<&Cell<T>> = self.cells.values().collect();
        let order = self.order;
        all.sort_by(|a, b| {
            let ord = a.score.total_cmp(&b.score);
            let ord = match order {
                ScoreOrder::LowerIsBetter => ord,
                ScoreOrder::HigherIsBetter => ord.reverse(),
            };
            ord.then(a.centroid_index.cmp(&b.centroid_index))
        });
        all.truncate(n);
        all
    }

    /// Up to `m` filled cells ordered by distance from `d` to each occupant's
    /// stored descriptor. `exclude` names the querying occupant's own cell.
    pub fn nearest_occupants(
        &self,
        d: &Descriptor,
        m: usize,
        exclude: Option<usize>,
    ) -> Vec<&Cell<T>> {
        let mut all: Vec<(f64, &Cell<T>)> = self
            .cells
            .values()
            .filter(|c| Some(c.centroid_index) != exclude)
            .map(|c| (c.descriptor.dist2(d), c))
            .collect();
        all.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.centroid_index.cmp(&b.1.centroid_index))
        });
        all.into_iter().take(m).map(|(_, c)| c).collect()
    }

    pub fn stats(&self) -> ArchiveStats {
        let filled_count = self.cells.len();
        if filled_count == 0 {
            return ArchiveStats {
                filled_count,
                best_score: None,
                mean_score: None,
            };
        }
        let sum: f64 = self.cells.values().map(|c| c.score).sum();
        ArchiveStats {
            filled_count,
            best_score: self.best_cell().ok().map(|c| c.score),
            mean_score: Some(sum / filled_count as f64),
        }
    }
}

impl<T: PartialEq> PartialEq for CvtArchive<T> {
    fn eq(&self, other: &Self) -> bool {
        self.centroids == other.centroids && self.order == other.order && self.cells == other.cells
    }
}

#[derive(Serialize, Deserialize)]
struct ArchiveRepr<T> {
    seed: u64,
    k: usize,
    ordering: ScoreOrder,
    centroids: Vec<Descriptor>,
    cells: Vec<Cell<T>>,
}

impl<T: Serialize + Clone> Serialize for CvtArchive<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ArchiveRepr {
            seed: self.centroids.seed,
            k: self.centroids.len(),
            ordering: self.order,
            centroids: self.centroids.centroids.clone(),
            cells: self.cells.values().cloned().collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for CvtArchive<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ArchiveRepr::<T>::deserialize(deserializer)?;
        if repr.k != repr.centroids.len() || repr.k == 0 {
            return Err(D::Error::custom(format!(
                "archive declares k={} but lists {} centroids",
                repr.k,
                repr.centroids.len()
            )));
        }
        let mut archive = CvtArchive::new(
            CentroidSet {
                seed: repr.seed,
                centroids: repr.centroids,
            },
            repr.ordering,
        );
        for cell in repr.cells {
            if !cell.score.is_finite() {
                return Err(D::Error::custom("non-finite cell score"));
            }
            let expected = archive.nearest_centroid(&cell.descriptor);
            if expected != cell.centroid_index {
                return Err(D::Error::custom(format!(
                    "cell {} holds a descriptor belonging to cell {expected}",
                    cell.centroid_index
                )));
            }
            if archive.cells.insert(cell.centroid_index, cell).is_some() {
                return Err(D::Error::custom("duplicate cell index"));
            }
        }
        Ok(archive)
    }
}
