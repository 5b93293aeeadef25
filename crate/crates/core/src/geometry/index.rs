use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{dist2, Point3};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Debug)]
struct Node {
    lo: Point3,
    hi: Point3,
    /// Leaf: range into `order`. Internal: children node ids.
    kind: NodeKind,
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Split { left: usize, right: usize },
}

/// Exact kd-tree over a fixed point set.
///
/// Results match a brute-force scan exactly: candidates are ranked by
/// `(squared distance, index)` and subtrees are only pruned when their box is
/// strictly farther than the current k-th candidate.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn box_dist2(q: Point3, lo: Point3, hi: Point3) -> f64 {
    let mut d = 0.0;
    for k in 0..3 {
        let v = if q[k] < lo[k] {
            lo[k] - q[k]
        } else if q[k] > hi[k] {
            q[k] - hi[k]
        } else {
            0.0
        };
        d += v * v;
    }
    d
}

impl SpatialIndex {
    pub fn build(points: Vec<Point3>) -> Self {
        let mut index = SpatialIndex {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !index.points.is_empty() {
            index.build_node(0, index.points.len());
        }
        index
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].kind = NodeKind::Split { left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// The `k` nearest points in ascending distance; ties go to the smaller index.
    pub fn knn(&self, query: Point3, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::invalid_arg(format!(
                "k = {k} must lie in 1..={}",
                self.points.len()
            )));
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if heap.len() == k {
                let worst = heap.peek().map(|c| c.d2).unwrap_or(f64::INFINITY);
                if box_dist2(query, node.lo, node.hi) > worst {
                    continue;
                }
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let c = Candidate {
                            d2: dist2(query, self.points[i]),
                            index: i,
                        };
                        if heap.len() < k {
                            heap.push(c);
                        } else if c < *heap.peek().expect("heap is full") {
                            heap.pop();
                            heap.push(c);
                        }
                    }
                }
                NodeKind::Split { left, right } => {
                    let dl = box_dist2(query, self.nodes[left].lo, self.nodes[left].hi);
                    let dr = box_dist2(query, self.nodes[right].lo, self.nodes[right].hi);
                    // push the farther child first so the nearer one is visited next
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.d2.sqrt(),
            })
            .collect())
    }

    /// Nearest point; ties go to the smaller index.
    pub fn nearest(&self, query: Point3) -> Neighbor {
        self.knn(query, 1).expect("index is non-empty")[0]
    }

    /// Up to `cap` nearest points with distance `<= r`, ascending.
    pub fn radius_neighbors(&self, query: Point3, r: f64, cap: usize) -> Result<Vec<Neighbor>> {
        if !(r > 0.0) {
            return Err(Error::invalid_arg(format!("radius must be positive, got {r}")));
        }
        if cap == 0 {
            return Err(Error::invalid_arg("neighbor cap must be at least 1"));
        }
        let mut found = Vec::new();
        self.radius_into(query, r, &mut found);
        found.sort_unstable();
        found.truncate(cap);
        Ok(found
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.d2.sqrt(),
            })
            .collect())
    }

    fn radius_into(&self, query: Point3, r: f64, out: &mut Vec<Candidate>) {
        if self.nodes.is_empty() {
            return;
        }
        // loose pruning bound; membership is decided on the exact distance below
        let bound = r * r * (1.0 + 1e-12);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if box_dist2(query, node.lo, node.hi) > bound {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d2 = dist2(query, self.points[i]);
                        if d2.sqrt() <= r {
                            out.push(Candidate { d2, index: i });
                        }
                    }
                }
                NodeKind::Split { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
    }
}
