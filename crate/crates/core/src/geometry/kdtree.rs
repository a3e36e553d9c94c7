use nalgebra::Point3;

use super::GeometryError;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static 3-d tree over a point set, built once and queried concurrently.
///
/// Nearest-neighbor ties are broken by the lowest original index, so results
/// match an exhaustive scan exactly.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        tree.build_node(0, points.len());
        Ok(tree)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (lo, hi) = self.order[start..end].iter().fold(
            (self.points[self.order[start]], self.points[self.order[start]]),
            |(lo, hi), &i| (lo.inf(&self.points[i]), hi.sup(&self.points[i])),
        );
        let extent = hi - lo;
        let axis = extent.imax();
        if extent[axis] == 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    /// Index of the closest point and its Euclidean distance.
    pub fn nearest(&self, query: &Point3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(0, query, &mut best);
        (best.0, best.1.sqrt())
    }

    fn nearest_in(&self, node: usize, q: &Point3<f64>, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, q, best);
                // Equal distances must still be visited for the index tie-break.
                if diff * diff <= best.1 {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// Indices of all points within `radius` (inclusive), ascending.
    pub fn within_radius(&self, query: &Point3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_in(0, query, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_in(&self, node: usize, q: &Point3<f64>, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
                );
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.radius_in(left, q, r2, out);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.radius_in(right, q, r2, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[Point3<f64>], q: &Point3<f64>) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn two_point_example() {
        let tree = KdTree::build(&[Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 2.0, 0.0)]).unwrap();
        assert_eq!(tree.nearest(&Point3::origin()), (0, 1.0));
        assert_eq!(tree.nearest(&Point3::new(0.0, 2.0, 0.0)), (1, 0.0));
    }

    #[test]
    fn empty_cloud_is_an_error() {
        assert!(matches!(KdTree::build(&[]), Err(GeometryError::EmptyCloud)));
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let mut pts = vec![Point3::new(1.0, 0.0, 0.0); 40];
        pts.extend(vec![Point3::new(-1.0, 0.0, 0.0); 40]);
        pts.push(Point3::new(0.0, 1.0, 0.0));
        let tree = KdTree::build(&pts).unwrap();
        assert_eq!(tree.nearest(&Point3::origin()).0, 0);
        assert_eq!(tree.nearest(&Point3::new(-0.5, 0.0, 0.0)).0, 40);
        // Grid points share many exact distances.
        let grid: Vec<_> = (0..1000)
            .map(|i| Point3::new((i % 10) as f64, ((i / 10) % 10) as f64, (i / 100) as f64))
            .collect();
        let tree = KdTree::build(&grid).unwrap();
        for i in 0..200 {
            let q = Point3::new((i % 19) as f64 * 0.5, (i % 7) as f64 * 0.5 + 0.5, (i % 5) as f64 + 0.5);
            assert_eq!(tree.nearest(&q), brute_force(&grid, &q));
        }
    }

    #[test]
    fn matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let pts: Vec<_> = (0..1000)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let tree = KdTree::build(&pts).unwrap();
            for _ in 0..100 {
                let q = Point3::new(
                    rng.random_range(-0.5..1.5),
                    rng.random_range(-0.5..1.5),
                    rng.random_range(-0.5..1.5),
                );
                assert_eq!(tree.nearest(&q), brute_force(&pts, &q));
                let r = rng.random_range(0.0..0.3);
                let expect: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= r).collect();
                assert_eq!(tree.within_radius(&q, r), expect);
            }
        }
    }
}
