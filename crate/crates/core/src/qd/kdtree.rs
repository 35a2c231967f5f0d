//! Static 2-d tree over a fixed point set, used for nearest-centroid lookup.
//!
//! Ties are resolved toward the lowest point index so that results match a
//! linear scan exactly.

use super::Descriptor;

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Descriptor>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl KdTree {
    pub fn build(points: &[Descriptor]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        let mut idx: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.build_rec(&mut idx, 0);
        tree
    }

    fn build_rec(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 2;
        let pts = &self.points;
        idx.sort_by(|&a, &b| {
            pts[a].values()[axis]
                .total_cmp(&pts[b].values()[axis])
                .then(a.cmp(&b))
        });
        let mid = idx.len() / 2;
        let point = idx[mid];
        let node = self.nodes.len();
        self.nodes.push(Node {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lo, rest) = idx.split_at_mut(mid);
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(&mut rest[1..], depth + 1);
        self.nodes[node].left = left;
        self.nodes[node].right = right;
        Some(node)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point, or `None` for an empty tree.
    pub fn nearest(&self, q: &Descriptor) -> Option<usize> {
        let root = self.root?;
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(root, q, &mut best);
        Some(best.1)
    }

    fn search(&self, node: usize, q: &Descriptor, best: &mut (f64, usize)) {
        let n = &self.nodes[node];
        let d = self.points[n.point].dist2(q);
        if d < best.0 || (d == best.0 && n.point < best.1) {
            *best = (d, n.point);
        }
        let diff = q.values()[n.axis] - self.points[n.point].values()[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.search(c, q, best);
        }
        // `<=` keeps equidistant candidates with a lower index reachable.
        if let Some(c) = far {
            if diff * diff <= best.0 {
                self.search(c, q, best);
            }
        }
    }
}

/// Exhaustive argmin, lowest index on ties.
pub fn linear_nearest(points: &[Descriptor], q: &Descriptor) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = p.dist2(q);
        match best {
            Some((bd, _)) if d >= bd => {}
            _ => best = Some((d, i)),
        }
    }
    best.map(|b| b.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_tree() {
        let t = KdTree::build(&[]);
        assert!(t.nearest(&Descriptor::new(0.5, 0.5)).is_none());
    }

    #[test]
    fn duplicate_points_resolve_to_lowest_index() {
        let p = Descriptor::new(0.3, 0.3);
        let pts = vec![Descriptor::new(0.9, 0.9), p, p, p];
        let t = KdTree::build(&pts);
        assert_eq!(t.nearest(&Descriptor::new(0.31, 0.3)), Some(1));
    }

    #[test]
    fn grid_ties_match_scan() {
        // Lattice points produce many exact ties.
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                pts.push(Descriptor::new(i as f64 * 0.25, j as f64 * 0.25));
            }
        }
        let t = KdTree::build(&pts);
        for i in 0..=8 {
            for j in 0..=8 {
                let q = Descriptor::new(i as f64 * 0.125, j as f64 * 0.125);
                assert_eq!(t.nearest(&q), linear_nearest(&pts, &q), "query {q:?}");
            }
        }
    }

    #[test]
    fn random_points_match_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..37)
            .map(|_| Descriptor::new(rng.random(), rng.random()))
            .collect();
        let t = KdTree::build(&pts);
        for _ in 0..2000 {
            let q = Descriptor::new(rng.random(), rng.random());
            assert_eq!(t.nearest(&q), linear_nearest(&pts, &q));
        }
    }
}
