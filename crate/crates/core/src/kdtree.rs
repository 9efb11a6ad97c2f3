//! Static k-d tree for exact nearest-neighbour queries over neuron centers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::Real;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: T, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree<T> {
    dim: usize,
    /// Points reordered so each leaf covers a contiguous range.
    coords: Vec<T>,
    ids: Vec<usize>,
    nodes: Vec<Node<T>>,
}

struct Candidate<T> {
    dist: T,
    id: usize,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Candidate<T> {}
impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .partial_cmp(&other.dist)
            .unwrap_or(Ordering::Equal)
            .then(self.id.cmp(&other.id))
    }
}

impl<T: Real> KdTree<T> {
    /// `points[i]` gets id `i`. All points must share one dimension.
    pub fn build(points: &[&[T]]) -> Self {
        let dim = points.first().map_or(0, |p| p.len());
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build_node(points, &mut order, 0, points.len(), &mut nodes);
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for &i in &order {
            coords.extend_from_slice(points[i]);
        }
        Self {
            dim,
            coords,
            ids: order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn point(&self, slot: usize) -> &[T] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    /// The `k` nearest ids with squared distances, nearest first (ties by id).
    pub fn nearest(&self, query: &[T], k: usize) -> Vec<(T, usize)> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn(0, query, k, &mut heap);
        let mut out: Vec<(T, usize)> = heap.into_iter().map(|c| (c.dist, c.id)).collect();
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        out
    }

    fn knn(&self, node: usize, q: &[T], k: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in *start..*end {
                    let d = crate::scalar::dist_sq(self.point(slot), q);
                    let cand = Candidate { dist: d, id: self.ids[slot] };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - *value;
                let (near, far) = if diff <= T::zero() { (*left, *right) } else { (*right, *left) };
                self.knn(near, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist {
                    self.knn(far, q, k, heap);
                }
            }
        }
    }

    /// Every id whose squared distance to `query` is at most `radius_sq`.
    pub fn within(&self, query: &[T], radius_sq: T) -> Vec<(T, usize)> {
        let mut out = Vec::new();
        if !self.is_empty() {
            self.collect_within(0, query, radius_sq, &mut out);
        }
        out
    }

    fn collect_within(&self, node: usize, q: &[T], r2: T, out: &mut Vec<(T, usize)>) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in *start..*end {
                    let d = crate::scalar::dist_sq(self.point(slot), q);
                    if d <= r2 {
                        out.push((d, self.ids[slot]));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - *value;
                if diff <= T::zero() || diff * diff <= r2 {
                    self.collect_within(*left, q, r2, out);
                }
                if diff >= T::zero() || diff * diff <= r2 {
                    self.collect_within(*right, q, r2, out);
                }
            }
        }
    }
}

fn build_node<T: Real>(
    points: &[&[T]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node<T>>,
) -> usize {
    let idx = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return idx;
    }
    let dim = points[order[start]].len();
    let axis = (0..dim)
        .max_by(|&a, &b| {
            spread(points, &order[start..end], a)
                .partial_cmp(&spread(points, &order[start..end], b))
                .unwrap_or(Ordering::Equal)
        })
        .unwrap_or(0);
    let mid = start + (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        points[a][axis]
            .partial_cmp(&points[b][axis])
            .unwrap_or(Ordering::Equal)
    });
    let value = points[order[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, order, start, mid, nodes);
    let right = build_node(points, order, mid, end, nodes);
    nodes[idx] = Node::Split { axis, value, left, right };
    idx
}

fn spread<T: Real>(points: &[&[T]], ids: &[usize], axis: usize) -> T {
    let (lo, hi) = ids.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &i| {
        let v = points[i][axis];
        (lo.min(v), hi.max(v))
    });
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn knn_and_radius_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..500)
            .map(|_| (0..4).map(|_| (rng.gen_range(0..6) as f64) * 0.25).collect())
            .collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let tree = KdTree::build(&refs);
        for _ in 0..50 {
            let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.2..1.5)).collect();
            let mut brute: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (crate::scalar::dist_sq(p, &q), i))
                .collect();
            brute.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            assert_eq!(tree.nearest(&q, 7), brute[..7].to_vec());
            let r2 = brute[20].0;
            let mut got: Vec<usize> = tree.within(&q, r2).into_iter().map(|x| x.1).collect();
            got.sort_unstable();
            let mut want: Vec<usize> = brute.iter().filter(|x| x.0 <= r2).map(|x| x.1).collect();
            want.sort_unstable();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn empty_tree_answers_nothing() {
        let tree = KdTree::<f64>::build(&[]);
        assert!(tree.nearest(&[0.0], 3).is_empty());
        assert!(tree.within(&[0.0], 1.0).is_empty());
    }
}
