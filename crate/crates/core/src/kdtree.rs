//! Static 3-d tree over point positions.
//!
//! Supports nearest / k-nearest / radius queries and a ray query that finds
//! the first point inside a cylinder around a ray, which is what the virtual
//! distance sensors need.

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new<'a>(positions: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let points: Vec<[f64; 3]> = positions.into_iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.build(0, tree.points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let dim = (0..3)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            let mid = start + (end - start) / 2;
            let points = &self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b))
            });
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    fn dist2(&self, i: usize, q: &[f64; 3]) -> f64 {
        let p = self.points[i];
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
    }

    fn box_dist2(node: &Node, q: &[f64; 3]) -> f64 {
        let mut d2 = 0.0;
        for (d, &x) in q.iter().enumerate() {
            let v = if x < node.lo[d] {
                node.lo[d] - x
            } else if x > node.hi[d] {
                x - node.hi[d]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.knn(q, 1).into_iter().next()
    }

    /// The `k` nearest points, ascending by squared distance (ties by index).
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        if self.nodes.is_empty() || k == 0 {
            return Vec::new();
        }
        let q = [q.x, q.y, q.z];
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        self.knn_rec(0, &q, k, &mut best);
        best
    }

    fn knn_rec(&self, id: usize, q: &[f64; 3], k: usize, best: &mut Vec<(usize, f64)>) {
        let node = &self.nodes[id];
        if best.len() == k && Self::box_dist2(node, q) > best[k - 1].1 {
            return;
        }
        match node.children {
            None => {
                for &i in &self.order[node.start..node.end] {
                    let d2 = self.dist2(i, q);
                    if best.len() < k || (d2, i) < (best[k - 1].1, best[k - 1].0) {
                        let pos = best.partition_point(|&(j, e)| (e, j) < (d2, i));
                        best.insert(pos, (i, d2));
                        best.truncate(k);
                    }
                }
            }
            Some((l, r)) => {
                let (first, second) =
                    if Self::box_dist2(&self.nodes[l], q) <= Self::box_dist2(&self.nodes[r], q) {
                        (l, r)
                    } else {
                        (r, l)
                    };
                self.knn_rec(first, q, k, best);
                self.knn_rec(second, q, k, best);
            }
        }
    }

    /// All points within `radius`, ascending by index.
    pub fn within_radius(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let q = [q.x, q.y, q.z];
        let r2 = radius * radius;
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if Self::box_dist2(node, &q) > r2 {
                continue;
            }
            match node.children {
                None => out.extend(
                    self.order[node.start..node.end]
                        .iter()
                        .copied()
                        .filter(|&i| self.dist2(i, &q) <= r2),
                ),
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// First point (smallest ray parameter `t ∈ [0, max_t]`) whose
    /// perpendicular distance to the ray is at most `radius`.
    /// `direction` must be unit length. Returns `(index, t)`.
    pub fn ray_first(
        &self,
        origin: &Vec3,
        direction: &Vec3,
        radius: f64,
        max_t: f64,
    ) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let o = [origin.x, origin.y, origin.z];
        let d = [direction.x, direction.y, direction.z];
        let r2 = radius * radius;
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let limit = best.map_or(max_t, |(_, t)| t);
            let Some(t_enter) = slab_entry(node, &o, &d, radius, limit) else {
                continue;
            };
            if t_enter > limit {
                continue;
            }
            match node.children {
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let p = self.points[i];
                        let v = [p[0] - o[0], p[1] - o[1], p[2] - o[2]];
                        let t = v[0] * d[0] + v[1] * d[1] + v[2] * d[2];
                        if t < 0.0 || t > max_t {
                            continue;
                        }
                        let perp2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - t * t;
                        if perp2 <= r2 {
                            let better = match best {
                                None => true,
                                Some((j, bt)) => (t, i) < (bt, j),
                            };
                            if better {
                                best = Some((i, t));
                            }
                        }
                    }
                }
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }
}

/// Entry parameter of the ray into the node box inflated by `pad`, clipped to
/// `[0, limit]`.
fn slab_entry(node: &Node, o: &[f64; 3], d: &[f64; 3], pad: f64, limit: f64) -> Option<f64> {
    let mut t0 = 0.0_f64;
    let mut t1 = limit;
    for k in 0..3 {
        let lo = node.lo[k] - pad;
        let hi = node.hi[k] + pad;
        if d[k].abs() < 1e-15 {
            if o[k] < lo || o[k] > hi {
                return None;
            }
        } else {
            let inv = 1.0 / d[k];
            let (mut a, mut b) = ((lo - o[k]) * inv, (hi - o[k]) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
    }
    Some(t0)
}
