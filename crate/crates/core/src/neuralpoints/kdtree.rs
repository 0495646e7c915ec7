use nalgebra::Vector3;

/// Static balanced k-d tree over indices into an external point slice.
/// Rebuild is O(n log n); queries are logarithmic for well-spread points.
#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    root: i32,
}

impl Default for KdTree {
    fn default() -> Self {
        Self {
            nodes: Vec::new(),
            root: -1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

/// Sorted fixed-capacity candidate list; ties on distance break by index so
/// results are independent of traversal order.
#[derive(Debug)]
pub struct Neighbors {
    pub items: Vec<(f64, u32)>,
    cap: usize,
}

impl Neighbors {
    pub fn new(cap: usize) -> Self {
        Self {
            items: Vec::with_capacity(cap + 1),
            cap,
        }
    }

    fn worst(&self) -> f64 {
        if self.items.len() < self.cap {
            f64::INFINITY
        } else {
            self.items.last().map_or(f64::INFINITY, |(d, _)| *d)
        }
    }

    pub fn push(&mut self, d2: f64, idx: u32) {
        let key = (d2, idx);
        let pos = self
            .items
            .partition_point(|&(d, i)| (d, i) < key);
        if pos >= self.cap {
            return;
        }
        self.items.insert(pos, (d2, idx));
        self.items.truncate(self.cap);
    }
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            nodes: Vec::with_capacity(points.len()),
            root: -1,
        };
        tree.root = tree.build_rec(points, &mut order[..]);
        tree
    }

    fn build_rec(&mut self, points: &[Vector3<f64>], order: &mut [u32]) -> i32 {
        if order.is_empty() {
            return -1;
        }
        // split on the widest axis of this subset
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in order.iter() {
            let p = &points[i as usize];
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            let (pa, pb) = (points[a as usize][axis], points[b as usize][axis]);
            pa.partial_cmp(&pb).unwrap().then(a.cmp(&b))
        });
        let point = order[mid];
        let (left_part, rest) = order.split_at_mut(mid);
        let right_part = &mut rest[1..];
        let left = self.build_rec(points, left_part);
        let right = self.build_rec(points, right_part);
        self.nodes.push(Node {
            point,
            axis: axis as u8,
            left,
            right,
        });
        (self.nodes.len() - 1) as i32
    }

    pub fn knn_into(
        &self,
        points: &[Vector3<f64>],
        query: &Vector3<f64>,
        out: &mut Neighbors,
    ) {
        self.search(self.root, points, query, out);
    }

    fn search(&self, node: i32, points: &[Vector3<f64>], query: &Vector3<f64>, out: &mut Neighbors) {
        if node < 0 {
            return;
        }
        let n = self.nodes[node as usize];
        let p = &points[n.point as usize];
        out.push((p - query).norm_squared(), n.point);
        let axis = n.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, points, query, out);
        if delta * delta <= out.worst() {
            self.search(far, points, query, out);
        }
    }
}
