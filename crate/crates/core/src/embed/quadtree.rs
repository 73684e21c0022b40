//! Space-partitioning tree over 2D points for Barnes-Hut force summation.

const MAX_DEPTH: usize = 48;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    /// Geometric center of the square cell.
    center: [f64; 2],
    /// Side length of the cell.
    width: f64,
    mass: f64,
    center_of_mass: [f64; 2],
    children: [u32; 4],
    /// Range into `QuadTree::order` for leaves.
    leaf: Option<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct QuadTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

/// Repulsive sums for one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Repulsion {
    /// Sum of `w^2 (y_i - y_j)` with `w = 1 / (1 + |y_i - y_j|^2)`.
    pub force: [f64; 2],
    /// Sum of `w`.
    pub z: f64,
}

impl QuadTree {
    pub fn build(points: &[[f64; 2]]) -> Self {
        let mut tree = QuadTree {
            nodes: Vec::new(),
            order: (0..points.len()).collect(),
        };
        if points.is_empty() {
            return tree;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let width = (hi[0] - lo[0]).max(hi[1] - lo[1]) * (1.0 + 1e-9) + 1e-12;
        let n = points.len();
        tree.subdivide(points, 0, n, center, width, 0);
        tree
    }

    fn subdivide(
        &mut self,
        points: &[[f64; 2]],
        start: usize,
        end: usize,
        center: [f64; 2],
        width: f64,
        depth: usize,
    ) -> u32 {
        let id = self.nodes.len() as u32;
        let members = &self.order[start..end];
        let mass = members.len() as f64;
        let mut com = [0.0; 2];
        for &i in members {
            com[0] += points[i][0];
            com[1] += points[i][1];
        }
        com[0] /= mass;
        com[1] /= mass;

        let first = points[members[0]];
        let all_same = members.iter().all(|&i| points[i] == first);
        self.nodes.push(Node {
            center,
            width,
            mass,
            center_of_mass: com,
            children: [NO_CHILD; 4],
            leaf: None,
        });
        if members.len() == 1 || all_same || depth >= MAX_DEPTH {
            self.nodes[id as usize].leaf = Some((start as u32, end as u32));
            return id;
        }

        // Bucket members by quadrant: bit 0 = right half, bit 1 = upper half.
        let quadrant = |p: [f64; 2]| (p[0] >= center[0]) as usize | (((p[1] >= center[1]) as usize) << 1);
        let mut buckets: [Vec<usize>; 4] = Default::default();
        for &i in members {
            buckets[quadrant(points[i])].push(i);
        }
        let mut cursor = start;
        let mut ranges = [(0, 0); 4];
        for (q, bucket) in buckets.iter().enumerate() {
            self.order[cursor..cursor + bucket.len()].copy_from_slice(bucket);
            ranges[q] = (cursor, cursor + bucket.len());
            cursor += bucket.len();
        }

        let half = 0.5 * width;
        for (q, &(s, e)) in ranges.iter().enumerate() {
            if s == e {
                continue;
            }
            let child_center = [
                center[0] + if q & 1 == 1 { 0.25 } else { -0.25 } * width,
                center[1] + if q & 2 == 2 { 0.25 } else { -0.25 } * width,
            ];
            let child = self.subdivide(points, s, e, child_center, half, depth + 1);
            self.nodes[id as usize].children[q] = child;
        }
        id
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Checks that each internal node's mass equals the sum of its children's
    /// and that every point sits in exactly one leaf.
    pub fn check_invariants(&self, n_points: usize) -> bool {
        let mut seen = vec![0usize; n_points];
        for node in &self.nodes {
            match node.leaf {
                Some((s, e)) => {
                    if (e - s) as f64 != node.mass {
                        return false;
                    }
                    for &i in &self.order[s as usize..e as usize] {
                        seen[i] += 1;
                    }
                }
                None => {
                    let child_mass: f64 = node
                        .children
                        .iter()
                        .filter(|&&c| c != NO_CHILD)
                        .map(|&c| self.nodes[c as usize].mass)
                        .sum();
                    if child_mass != node.mass {
                        return false;
                    }
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }

    /// Approximate repulsion on point `i`. Cells are summarized by their
    /// center of mass when `width / distance < theta`.
    pub fn repulsion(&self, points: &[[f64; 2]], i: usize, theta: f64) -> Repulsion {
        let mut out = Repulsion::default();
        if self.nodes.is_empty() {
            return out;
        }
        let yi = points[i];
        let theta2 = theta * theta;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if let Some((s, e)) = node.leaf {
                for &j in &self.order[s as usize..e as usize] {
                    if j == i {
                        continue;
                    }
                    let dx = yi[0] - points[j][0];
                    let dy = yi[1] - points[j][1];
                    let w = 1.0 / (1.0 + dx * dx + dy * dy);
                    out.z += w;
                    out.force[0] += w * w * dx;
                    out.force[1] += w * w * dy;
                }
                continue;
            }
            let dx = yi[0] - node.center_of_mass[0];
            let dy = yi[1] - node.center_of_mass[1];
            let d2 = dx * dx + dy * dy;
            if node.width * node.width < theta2 * d2 {
                let w = 1.0 / (1.0 + d2);
                out.z += node.mass * w;
                out.force[0] += node.mass * w * w * dx;
                out.force[1] += node.mass * w * w * dy;
            } else {
                stack.extend(node.children.iter().copied().filter(|&c| c != NO_CHILD));
            }
        }
        out
    }

    pub fn cell_center(&self) -> Option<[f64; 2]> {
        self.nodes.first().map(|n| n.center)
    }
}
