//! Bounding volume hierarchy over axis-aligned boxes in `R^D`.
//!
//! The tree only knows boxes. Exact distances to the primitives are supplied
//! by the caller at query time, which lets the same structure index surface
//! triangles in `R^3` and the lifted tetrahedra of the projection step in
//! `R^6`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<const D: usize> {
    pub min: [f64; D],
    pub max: [f64; D],
}

impl<const D: usize> Aabb<D> {
    pub fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; D],
            max: [f64::NEG_INFINITY; D],
        }
    }

    pub fn from_points<'a, I: IntoIterator<Item = &'a [f64; D]>>(points: I) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &[f64; D]) {
        for d in 0..D {
            self.min[d] = self.min[d].min(p[d]);
            self.max[d] = self.max[d].max(p[d]);
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        let mut out = *self;
        for d in 0..D {
            out.min[d] = out.min[d].min(other.min[d]);
            out.max[d] = out.max[d].max(other.max[d]);
        }
        out
    }

    fn center(&self, d: usize) -> f64 {
        0.5 * (self.min[d] + self.max[d])
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn dist_sq(&self, p: &[f64; D]) -> f64 {
        let mut s = 0.0;
        for d in 0..D {
            let e = if p[d] < self.min[d] {
                self.min[d] - p[d]
            } else if p[d] > self.max[d] {
                p[d] - self.max[d]
            } else {
                0.0
            };
            s += e * e;
        }
        s
    }

    pub fn diagonal(&self) -> f64 {
        (0..D).map(|d| (self.max[d] - self.min[d]).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
enum Node<const D: usize> {
    Leaf { bbox: Aabb<D>, start: usize, end: usize },
    Inner { bbox: Aabb<D>, left: usize, right: usize },
}

impl<const D: usize> Node<D> {
    fn bbox(&self) -> &Aabb<D> {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bvh<const D: usize> {
    nodes: Vec<Node<D>>,
    prims: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq)]
struct Pending {
    dist: f64,
    node: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then node id for a total deterministic order
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const D: usize> Bvh<D> {
    /// Builds a tree over primitive boxes by median splits along the widest
    /// centroid axis. Primitive ids are the indices into `boxes`.
    pub fn build(boxes: &[Aabb<D>]) -> Self {
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1),
            prims: (0..boxes.len()).collect(),
        };
        if !boxes.is_empty() {
            bvh.build_range(boxes, 0, boxes.len());
        }
        bvh
    }

    fn build_range(&mut self, boxes: &[Aabb<D>], start: usize, end: usize) -> usize {
        let bbox = self.prims[start..end]
            .iter()
            .fold(Aabb::empty(), |acc, &p| acc.merge(&boxes[p]));
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bbox, start, end });
            return id;
        }
        let mut cmin = [f64::INFINITY; D];
        let mut cmax = [f64::NEG_INFINITY; D];
        for &p in &self.prims[start..end] {
            for d in 0..D {
                let c = boxes[p].center(d);
                cmin[d] = cmin[d].min(c);
                cmax[d] = cmax[d].max(c);
            }
        }
        let axis = (0..D)
            .max_by(|&a, &b| (cmax[a] - cmin[a]).total_cmp(&(cmax[b] - cmin[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        self.prims[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            boxes[a].center(axis).total_cmp(&boxes[b].center(axis)).then(a.cmp(&b))
        });
        self.nodes.push(Node::Leaf { bbox, start, end });
        let left = self.build_range(boxes, start, mid);
        let right = self.build_range(boxes, mid, end);
        self.nodes[id] = Node::Inner { bbox, left, right };
        id
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    pub fn len(&self) -> usize {
        self.prims.len()
    }

    /// Exact nearest primitive under the caller's squared distance.
    ///
    /// `dist_sq(prim)` must never be smaller than the squared distance from
    /// `query` to that primitive's box. Ties resolve to the lowest primitive
    /// id, independent of traversal order.
    pub fn nearest<F>(&self, query: &[f64; D], mut dist_sq: F) -> Option<(usize, f64)>
    where
        F: FnMut(usize) -> f64,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut heap = BinaryHeap::new();
        heap.push(Pending {
            dist: self.nodes[0].bbox().dist_sq(query),
            node: 0,
        });
        while let Some(Pending { dist, node }) = heap.pop() {
            if let Some((_, bd)) = best {
                if dist > bd {
                    break;
                }
            }
            match &self.nodes[node] {
                Node::Leaf { start, end, .. } => {
                    for &p in &self.prims[*start..*end] {
                        let d = dist_sq(p);
                        let better = match best {
                            None => true,
                            Some((bp, bd)) => d < bd || (d == bd && p < bp),
                        };
                        if better {
                            best = Some((p, d));
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    for &child in [left, right] {
                        let cd = self.nodes[child].bbox().dist_sq(query);
                        if best.map_or(true, |(_, bd)| cd <= bd) {
                            heap.push(Pending { dist: cd, node: child });
                        }
                    }
                }
            }
        }
        best
    }

    /// Runs [`Bvh::nearest`] for each query; an empty query list gives an
    /// empty result.
    pub fn nearest_many<F>(&self, queries: &[[f64; D]], dist_sq: F) -> Vec<Option<(usize, f64)>>
    where
        F: Fn(&[f64; D], usize) -> f64,
    {
        queries.iter().map(|q| self.nearest(q, |p| dist_sq(q, p))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::geometry::project_onto_simplex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_simplices<const D: usize>(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<[f64; D]>> {
        (0..n)
            .map(|_| {
                let mut c = [0.0; D];
                for x in c.iter_mut() {
                    *x = rng.gen_range(-5.0..5.0);
                }
                (0..k)
                    .map(|_| {
                        let mut p = c;
                        for x in p.iter_mut() {
                            *x += rng.gen_range(-0.5..0.5);
                        }
                        p
                    })
                    .collect()
            })
            .collect()
    }

    fn check_against_brute_force<const D: usize>(k: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let simplices = random_simplices::<D>(&mut rng, 300, k);
        let boxes: Vec<Aabb<D>> = simplices.iter().map(|s| Aabb::from_points(s.iter())).collect();
        let bvh = Bvh::build(&boxes);
        for _ in 0..1000 {
            let mut q = [0.0; D];
            for x in q.iter_mut() {
                *x = rng.gen_range(-6.0..6.0);
            }
            let (hit, d) = bvh.nearest(&q, |p| project_onto_simplex(&q, &simplices[p]).1).unwrap();
            let brute = simplices
                .iter()
                .map(|s| project_onto_simplex(&q, s).1)
                .fold(f64::INFINITY, f64::min);
            assert!((d - brute).abs() <= 1e-12 * (1.0 + brute), "{d} vs {brute}");
            assert_eq!(project_onto_simplex(&q, &simplices[hit]).1, d);
        }
    }

    #[test]
    fn triangles_in_r3_match_brute_force() {
        check_against_brute_force::<3>(3, 11);
    }

    #[test]
    fn tets_in_r6_match_brute_force() {
        check_against_brute_force::<6>(4, 12);
    }

    #[test]
    fn indexed_vertex_has_zero_distance() {
        let pts: Vec<[f64; 3]> = (0..50).map(|i| [i as f64, (i * i) as f64 * 0.1, 1.0]).collect();
        let boxes: Vec<Aabb<3>> = pts.iter().map(|p| Aabb::from_points([p])).collect();
        let bvh = Bvh::build(&boxes);
        let (hit, d) = bvh.nearest(&pts[17], |p| {
            (0..3).map(|k| (pts[p][k] - pts[17][k]).powi(2)).sum()
        })
        .unwrap();
        assert_eq!((hit, d), (17, 0.0));
    }

    #[test]
    fn empty_queries_give_empty_results() {
        let boxes = vec![Aabb::from_points([&[0.0; 3]])];
        let bvh = Bvh::build(&boxes);
        assert!(bvh.nearest_many(&[], |_, _| 0.0).is_empty());
    }

    #[test]
    fn ties_resolve_to_lowest_id() {
        let pts: Vec<[f64; 3]> = vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
        let boxes: Vec<Aabb<3>> = pts.iter().map(|p| Aabb::from_points([p])).collect();
        let bvh = Bvh::build(&boxes);
        let (hit, _) = bvh.nearest(&[0.0; 3], |p| (0..3).map(|k| pts[p][k].powi(2)).sum()).unwrap();
        assert_eq!(hit, 0);
    }
}
