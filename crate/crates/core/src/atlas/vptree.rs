use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Squared distances are never compared; every distance is the `f64` Euclidean
/// norm of the `f32` difference, computed by this one function.
pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `(distance, index)` ordered lexicographically; the heap top is the worst kept neighbour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub distance: f64,
    pub index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const LEAF: usize = 12;

enum Node {
    Leaf(Vec<usize>),
    Split {
        vantage: usize,
        radius: f64,
        inside: Box<Node>,
        outside: Box<Node>,
    },
}

/// Vantage-point tree over a subset of rows of a row-major matrix.
pub(crate) struct VpTree {
    root: Option<Node>,
}

impl VpTree {
    /// `rows` are indices into `data` (`dim` values each). The first row of
    /// every subset is its vantage point, so the tree is deterministic.
    pub fn build(data: &[f32], dim: usize, rows: Vec<usize>) -> Self {
        let root = (!rows.is_empty()).then(|| build_node(data, dim, rows));
        Self { root }
    }

    /// Offers every row that can beat the current `k`-th best to `heap`.
    pub fn search(&self, data: &[f32], dim: usize, query: &[f32], k: usize, heap: &mut BinaryHeap<Candidate>) {
        if let Some(root) = &self.root {
            search_node(root, data, dim, query, k, heap);
        }
    }
}

fn row(data: &[f32], dim: usize, i: usize) -> &[f32] {
    &data[i * dim..(i + 1) * dim]
}

fn build_node(data: &[f32], dim: usize, mut rows: Vec<usize>) -> Node {
    if rows.len() <= LEAF {
        return Node::Leaf(rows);
    }
    let vantage = rows.swap_remove(0);
    let vp = row(data, dim, vantage);
    let mut scored: Vec<(f64, usize)> = rows.iter().map(|&r| (euclidean(vp, row(data, dim, r)), r)).collect();
    let mid = scored.len() / 2;
    scored.select_nth_unstable_by(mid, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let radius = scored[mid].0;
    let outside: Vec<usize> = scored[mid..].iter().map(|&(_, r)| r).collect();
    let inside: Vec<usize> = scored[..mid].iter().map(|&(_, r)| r).collect();
    Node::Split {
        vantage,
        radius,
        inside: Box::new(build_node(data, dim, inside)),
        outside: Box::new(build_node(data, dim, outside)),
    }
}

fn offer(heap: &mut BinaryHeap<Candidate>, k: usize, c: Candidate) {
    if heap.len() < k {
        heap.push(c);
    } else if heap.peek().is_some_and(|worst| c < *worst) {
        heap.pop();
        heap.push(c);
    }
}

/// Current pruning radius; unbounded until `k` candidates are held.
fn tau(heap: &BinaryHeap<Candidate>, k: usize) -> f64 {
    if heap.len() < k {
        f64::INFINITY
    } else {
        heap.peek().map_or(f64::INFINITY, |c| c.distance)
    }
}

/// A subtree is skipped only when its lower bound exceeds `tau` by more than
/// rounding slack, so rows tied with the current worst are still visited.
fn prunable(bound: f64, tau: f64) -> bool {
    bound > tau * (1.0 + 1e-9) + 1e-12
}

fn search_node(node: &Node, data: &[f32], dim: usize, q: &[f32], k: usize, heap: &mut BinaryHeap<Candidate>) {
    match node {
        Node::Leaf(rows) => {
            for &r in rows {
                let distance = euclidean(q, row(data, dim, r));
                offer(heap, k, Candidate { distance, index: r });
            }
        }
        Node::Split {
            vantage,
            radius,
            inside,
            outside,
        } => {
            let d = euclidean(q, row(data, dim, *vantage));
            offer(heap, k, Candidate { distance: d, index: *vantage });
            // inside rows satisfy dist(vp, p) <= radius, outside rows >= radius
            let (first, second, first_inside) = if d < *radius {
                (inside, outside, true)
            } else {
                (outside, inside, false)
            };
            let bound = |is_inside: bool| if is_inside { d - radius } else { radius - d };
            if !prunable(bound(first_inside), tau(heap, k)) {
                search_node(first, data, dim, q, k, heap);
            }
            if !prunable(bound(!first_inside), tau(heap, k)) {
                search_node(second, data, dim, q, k, heap);
            }
        }
    }
}
